//! Exact Lagrangian fronts: oriented polylines `(x_i, p_i, a_i)` carrying the
//! primitive `f_L` of `p dx` along the curve.
//!
//! Fronts start as graphs over x and become multivalued under evolution; no
//! event detection happens here. Refinement only controls resolution, and the
//! discrete action identity `a_{i+1} - a_i = (p_i + p_{i+1})(x_{i+1} - x_i)/2`
//! up to the curvature budget is re-checked after every operation.

use crate::flow::{advance, PhasePoint};
use crate::model::{HamiltonianSpec, Omega, ScaledField};
use crate::{Error, Result};

/// One front vertex.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vertex {
    pub x: f64,
    pub p: f64,
    pub a: f64,
}

/// Resolution control for sampling and refinement.
#[derive(Debug, Clone, Copy)]
pub struct FrontParams {
    /// Minimum phase-plane spacing of adjacent vertices.
    pub h_min: f64,
    /// Maximum phase-plane spacing of adjacent vertices.
    pub h_max: f64,
    /// Action-residual budget per squared segment length.
    pub curvature_budget: f64,
    /// Hard cap on vertex count during refinement.
    pub vertex_cap: usize,
}

impl Default for FrontParams {
    fn default() -> Self {
        FrontParams { h_min: 1e-5, h_max: 1e-2, curvature_budget: 1.0, vertex_cap: 2_000_000 }
    }
}

impl FrontParams {
    pub fn with_h_max(mut self, h: f64) -> Self {
        self.h_max = h;
        self
    }
}

/// Oriented polyline front with transported action.
#[derive(Debug, Clone)]
pub struct LagrangianFront {
    pub verts: Vec<Vertex>,
    /// True when `mirror` has flipped the traversal sense relative to the
    /// original graph orientation (provenance only; the vertex order is
    /// always the traversal order).
    pub reversed: bool,
    /// Selector carrier side: +1 for graph-descended fronts (carriers are the
    /// x-increasing sheets), -1 after `mirror`. Every other operation
    /// preserves it.
    pub chirality: i8,
    /// Vertices inserted by the last refinement pass.
    pub inserted: usize,
    /// Segment starts `i` where the polyline is logically broken: refinement
    /// bottomed out at `h_min` between vertices `i` and `i + 1` (separatrix
    /// stretching), so no curve is claimed across that gap.
    pub cuts: Vec<usize>,
}

impl LagrangianFront {
    pub fn from_vertices(verts: Vec<Vertex>) -> Result<Self> {
        if verts.len() < 2 {
            return Err(Error::InvalidSpec("front needs at least two vertices".into()));
        }
        if verts.iter().any(|v| !(v.x.is_finite() && v.p.is_finite() && v.a.is_finite())) {
            return Err(Error::InvalidSpec("front has non-finite vertex".into()));
        }
        Ok(LagrangianFront { verts, reversed: false, chirality: 1, inserted: 0, cuts: Vec::new() })
    }

    pub fn x_range(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for v in &self.verts {
            lo = lo.min(v.x);
            hi = hi.max(v.x);
        }
        (lo, hi)
    }

    /// Largest `|p|` on the front (Lipschitz constant of its selectors).
    pub fn max_abs_p(&self) -> f64 {
        self.verts.iter().map(|v| v.p.abs()).fold(0.0, f64::max)
    }

    /// Max over segments of `|da - p_avg dx| / len^2`, after subtracting a
    /// floating-point noise floor of `1e-12 (1 + |a|)` per segment. Cut
    /// segments claim no curve and are skipped.
    pub fn action_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, w) in self.verts.windows(2).enumerate() {
            if self.cuts.binary_search(&i).is_ok() {
                continue;
            }
            let (u, v) = (w[0], w[1]);
            let dx = v.x - u.x;
            let dp = v.p - u.p;
            let len2 = dx * dx + dp * dp;
            if len2 == 0.0 {
                continue;
            }
            let floor = 1e-12 * (1.0 + u.a.abs().max(v.a.abs()));
            let res = ((v.a - u.a - 0.5 * (u.p + v.p) * dx).abs() - floor).max(0.0);
            worst = worst.max(res / len2);
        }
        worst
    }

    /// Check the action one-form consistency against a budget.
    pub fn validate(&self, params: &FrontParams) -> Result<()> {
        let r = self.action_residual();
        if r > params.curvature_budget {
            return Err(Error::InvalidSpec(format!(
                "action residual {r} exceeds curvature budget {}",
                params.curvature_budget
            )));
        }
        for w in self.verts.windows(2) {
            if w[0].x == w[1].x && w[0].p == w[1].p {
                return Err(Error::InvalidSpec("duplicate consecutive vertices".into()));
            }
        }
        Ok(())
    }

    /// `(x, -p, -a)` with traversal reversed.
    pub fn mirror(&self) -> LagrangianFront {
        let mut verts: Vec<Vertex> =
            self.verts.iter().map(|v| Vertex { x: v.x, p: -v.p, a: -v.a }).collect();
        verts.reverse();
        let n = verts.len();
        let mut cuts: Vec<usize> = self.cuts.iter().map(|&i| n - 2 - i).collect();
        cuts.sort_unstable();
        LagrangianFront {
            verts,
            reversed: !self.reversed,
            chirality: -self.chirality,
            inserted: 0,
            cuts,
        }
    }

    /// Fiberwise shift `(x, p + p0, a + p0 x)`.
    pub fn shift_momentum(&self, p0: f64) -> LagrangianFront {
        LagrangianFront {
            verts: self
                .verts
                .iter()
                .map(|v| Vertex { x: v.x, p: v.p + p0, a: v.a + p0 * v.x })
                .collect(),
            reversed: self.reversed,
            chirality: self.chirality,
            inserted: 0,
            cuts: self.cuts.clone(),
        }
    }

    /// Conformal rescale `(x / eps, p, a / eps)`.
    pub fn rescale(&self, eps: f64) -> Result<LagrangianFront> {
        if !(eps > 0.0) {
            return Err(Error::InvalidSpec(format!("rescale needs eps > 0, got {eps}")));
        }
        Ok(LagrangianFront {
            verts: self
                .verts
                .iter()
                .map(|v| Vertex { x: v.x / eps, p: v.p, a: v.a / eps })
                .collect(),
            reversed: self.reversed,
            chirality: self.chirality,
            inserted: 0,
            cuts: self.cuts.clone(),
        })
    }

    /// Subtract a graph: `(x, p - g'(x), a - g(x))`. Branch structure is
    /// unchanged; the values become relative to the section `g`.
    pub fn subtract_graph(&self, g: &dyn Fn(f64) -> (f64, f64)) -> LagrangianFront {
        LagrangianFront {
            verts: self
                .verts
                .iter()
                .map(|v| {
                    let (gv, gp) = g(v.x);
                    Vertex { x: v.x, p: v.p - gp, a: v.a - gv }
                })
                .collect(),
            reversed: self.reversed,
            chirality: self.chirality,
            inserted: 0,
            cuts: self.cuts.clone(),
        }
    }

    /// Translate the base: `(x + dx, p, a + da)`.
    pub fn translate(&self, dx: f64, da: f64) -> LagrangianFront {
        LagrangianFront {
            verts: self.verts.iter().map(|v| Vertex { x: v.x + dx, p: v.p, a: v.a + da }).collect(),
            reversed: self.reversed,
            chirality: self.chirality,
            inserted: 0,
            cuts: self.cuts.clone(),
        }
    }
}

/// Initial data for [`initial_front`].
pub enum InitialDatum<'a> {
    /// Affine section of slope `p0`: `(x, p0, p0 x)`.
    Affine { p0: f64 },
    /// Graph of `df` for `f` with derivative, sampled as `(x, f'(x), f(x))`.
    Graph(&'a dyn Fn(f64) -> (f64, f64)),
}

/// Sample an initial front over `[lo, hi]`.
pub fn initial_front(
    datum: &InitialDatum,
    lo: f64,
    hi: f64,
    params: &FrontParams,
) -> Result<LagrangianFront> {
    if !(hi > lo) {
        return Err(Error::InvalidSpec("initial front needs hi > lo".into()));
    }
    let eval = |x: f64| -> Result<Vertex> {
        let (a, p) = match datum {
            InitialDatum::Affine { p0 } => (p0 * x, *p0),
            InitialDatum::Graph(f) => f(x),
        };
        if !(a.is_finite() && p.is_finite()) {
            return Err(Error::InvalidSpec(format!("initial datum non-finite at x={x}")));
        }
        Ok(Vertex { x, p, a })
    };
    let target = 0.5 * params.h_max;
    let mut verts = vec![eval(lo)?];
    let mut x = lo;
    while x < hi {
        let prev = *verts.last().unwrap();
        // advance so that the phase-plane step stays near the target
        let mut dx = target;
        for _ in 0..30 {
            let probe = eval((x + dx).min(hi))?;
            let len = ((probe.x - prev.x).powi(2) + (probe.p - prev.p).powi(2)).sqrt();
            if len <= params.h_max || dx < params.h_min {
                break;
            }
            dx *= 0.5;
        }
        let next = x + dx.max(params.h_min);
        // never leave a sub-h_min sliver at the right end
        x = if next >= hi - params.h_min { hi } else { next };
        verts.push(eval(x)?);
        if verts.len() > params.vertex_cap {
            return Err(Error::RefinementExplosion { x_lo: lo, x_hi: hi });
        }
    }
    LagrangianFront::from_vertices(verts)
}

/// How vertices advance during [`evolve_front`].
pub enum Advancer<'a> {
    /// Hamiltonian flow of a spec for time `t` at tolerance `tol`.
    Flow { spec: &'a HamiltonianSpec, omega: &'a Omega, t: f64, tol: f64 },
    /// Flow of the rescaled field `H(x/eps, p)` (microscopic route).
    ScaledFlow { spec: &'a HamiltonianSpec, omega: &'a Omega, eps: f64, t: f64, tol: f64 },
    /// Exact shear of an x-independent profile: `h(p)` and `h'(p)` supplied.
    Shear { h: &'a dyn Fn(f64) -> (f64, f64), t: f64 },
}

impl Advancer<'_> {
    pub fn advance(&self, v: Vertex) -> Result<Vertex> {
        match self {
            Advancer::Flow { spec, omega, t, tol } => {
                let f = spec.field(omega);
                let e = advance(&f, PhasePoint { x: v.x, p: v.p, a: v.a }, *t, *tol)?;
                Ok(Vertex { x: e.x, p: e.p, a: e.a })
            }
            Advancer::ScaledFlow { spec, omega, eps, t, tol } => {
                let base = spec.field(omega);
                let f = ScaledField { inner: &base, eps: *eps };
                let e = advance(&f, PhasePoint { x: v.x, p: v.p, a: v.a }, *t, *tol)?;
                Ok(Vertex { x: e.x, p: e.p, a: e.a })
            }
            Advancer::Shear { h, t } => {
                let (hv, hp) = h(v.p);
                Ok(Vertex { x: v.x + t * hp, p: v.p, a: v.a + t * (v.p * hp - hv) })
            }
        }
    }
}

/// Evolve a front, inserting vertices (seeded from the source polyline) until
/// the evolved spacing and action residual meet `params`.
///
/// Where refinement bottoms out at `h_min` with the evolved segment still
/// violating the budgets (separatrix-scale stretching), the segment becomes a
/// cut: both endpoints stay, no curve is claimed between them, and the
/// selector treats the pieces as separate curves.
pub fn evolve_front(
    front: &LagrangianFront,
    adv: &Advancer,
    params: &FrontParams,
) -> Result<LagrangianFront> {
    let n = front.verts.len();
    let mut out: Vec<Vertex> = Vec::with_capacity(n);
    let mut cuts: Vec<usize> = Vec::new();
    let mut inserted = 0usize;

    let mut seg_out: Vec<(Vertex, bool)> = Vec::new();
    let mut first = adv.advance(front.verts[0])?;
    out.push(first);
    for i in 0..n - 1 {
        let s0 = front.verts[i];
        let s1 = front.verts[i + 1];
        let e1 = adv.advance(s1)?;
        seg_out.clear();
        if front.cuts.binary_search(&i).is_ok() {
            // never refine across a source cut
            cuts.push(out.len() - 1);
            push_vertex(&mut out, &mut cuts, e1, false);
            first = e1;
            continue;
        }
        refine_segment(adv, params, s0, first, s1, e1, 0, &mut seg_out, &mut inserted).map_err(
            |e| match e {
                Error::RefinementExplosion { .. } => {
                    Error::RefinementExplosion { x_lo: s0.x.min(s1.x), x_hi: s0.x.max(s1.x) }
                }
                other => other,
            },
        )?;
        let mut cut_next = false;
        for (v, cut_before) in &seg_out {
            push_vertex(&mut out, &mut cuts, *v, *cut_before || cut_next);
            cut_next = false;
        }
        push_vertex(&mut out, &mut cuts, e1, cut_next);
        first = e1;
        if out.len() > params.vertex_cap {
            return Err(Error::RefinementExplosion { x_lo: s0.x.min(s1.x), x_hi: s0.x.max(s1.x) });
        }
    }
    cuts.sort_unstable();
    cuts.dedup();
    let mut result = LagrangianFront {
        verts: out,
        reversed: front.reversed,
        chirality: front.chirality,
        inserted,
        cuts,
    };
    if result.cuts.is_empty() {
        coalesce(&mut result, params);
    }
    result.validate(params)?;
    Ok(result)
}

fn push_vertex(out: &mut Vec<Vertex>, cuts: &mut Vec<usize>, v: Vertex, cut_before: bool) {
    if let Some(last) = out.last() {
        if last.x == v.x && last.p == v.p {
            return; // no duplicate consecutive vertices
        }
    }
    if cut_before && !out.is_empty() {
        cuts.push(out.len() - 1);
    }
    out.push(v);
}

#[allow(clippy::too_many_arguments)]
fn refine_segment(
    adv: &Advancer,
    params: &FrontParams,
    s0: Vertex,
    e0: Vertex,
    s1: Vertex,
    e1: Vertex,
    depth: u32,
    sink: &mut Vec<(Vertex, bool)>,
    inserted: &mut usize,
) -> Result<()> {
    let dx = e1.x - e0.x;
    let dp = e1.p - e0.p;
    let len2 = dx * dx + dp * dp;
    let floor = 1e-12 * (1.0 + e0.a.abs().max(e1.a.abs()));
    let res = ((e1.a - e0.a - 0.5 * (e0.p + e1.p) * dx).abs() - floor).max(0.0);
    let src_len = ((s1.x - s0.x).powi(2) + (s1.p - s0.p).powi(2)).sqrt();
    let needs =
        len2 > params.h_max * params.h_max || res > params.curvature_budget * len2.max(1e-300);
    if !needs || src_len <= params.h_min || depth >= 48 {
        if needs {
            // unresolvable stretching: declare a cut ending at e1
            sink.push((e1, true));
            // e1 re-pushed by the caller deduplicates to nothing
        }
        return Ok(());
    }
    // seed the midpoint on the source polyline and evolve it; the cubic
    // correction keeps the seed's action consistent with p dx
    let sm = Vertex {
        x: 0.5 * (s0.x + s1.x),
        p: 0.5 * (s0.p + s1.p),
        a: 0.5 * (s0.a + s1.a) + 0.125 * (s0.p - s1.p) * (s1.x - s0.x),
    };
    let em = adv.advance(sm)?;
    *inserted += 1;
    if *inserted > params.vertex_cap {
        return Err(Error::RefinementExplosion { x_lo: s0.x, x_hi: s1.x });
    }
    refine_segment(adv, params, s0, e0, sm, em, depth + 1, sink, inserted)?;
    sink.push((em, false));
    refine_segment(adv, params, sm, em, s1, e1, depth + 1, sink, inserted)?;
    Ok(())
}

/// Drop interior vertices closer than `h_min` to their predecessor when the
/// local turn is negligible.
fn coalesce(front: &mut LagrangianFront, params: &FrontParams) {
    let verts = &front.verts;
    if verts.len() < 3 {
        return;
    }
    let h2 = params.h_min * params.h_min;
    let mut keep: Vec<Vertex> = Vec::with_capacity(verts.len());
    keep.push(verts[0]);
    for i in 1..verts.len() - 1 {
        let prev = *keep.last().unwrap();
        let v = verts[i];
        let nxt = verts[i + 1];
        let d2 = (v.x - prev.x).powi(2) + (v.p - prev.p).powi(2);
        if d2 < h2 {
            // only drop if near-collinear with the straight continuation
            let cx = nxt.x - prev.x;
            let cp = nxt.p - prev.p;
            let cross = (v.x - prev.x) * cp - (v.p - prev.p) * cx;
            if cross.abs() <= 1e-14 + 1e-6 * (cx * cx + cp * cp) {
                continue;
            }
        }
        keep.push(v);
    }
    keep.push(*verts.last().unwrap());
    front.verts = keep;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::MomentumTerm;

    fn params() -> FrontParams {
        FrontParams::default()
    }

    #[test]
    fn initial_zero_section_and_quadratic() {
        let zero =
            initial_front(&InitialDatum::Graph(&|_x| (0.0, 0.0)), -1.0, 1.0, &params()).unwrap();
        assert!(zero.verts.iter().all(|v| v.p == 0.0 && v.a == 0.0));

        let quad = initial_front(&InitialDatum::Graph(&|x| (0.5 * x * x, x)), -1.0, 1.0, &params())
            .unwrap();
        for v in &quad.verts {
            assert!((v.p - v.x).abs() < 1e-12);
            assert!((v.a - 0.5 * v.x * v.x).abs() < 1e-12);
        }
        quad.validate(&params()).unwrap();
    }

    #[test]
    fn affine_action_increment() {
        let f = initial_front(&InitialDatum::Affine { p0: 1.0 }, 0.0, 2.0, &params()).unwrap();
        let a0 = f.verts.first().unwrap().a;
        let a1 = f.verts.last().unwrap().a;
        assert!((a1 - a0 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_section_invariant_under_free_flow() {
        let spec = HamiltonianSpec::kinetic(MomentumTerm::Quadratic { coeff: 1.0 }).unwrap();
        let w = Omega::Torus(vec![]);
        let f0 =
            initial_front(&InitialDatum::Graph(&|_x| (0.0, 0.0)), -1.0, 1.0, &params()).unwrap();
        let f1 = evolve_front(
            &f0,
            &Advancer::Flow { spec: &spec, omega: &w, t: 1.0, tol: 1e-10 },
            &params(),
        )
        .unwrap();
        for v in &f1.verts {
            assert!(v.p.abs() < 1e-12 && v.a.abs() < 1e-12);
        }
    }

    #[test]
    fn free_flow_of_quadratic_graph() {
        // H = p^2/2, f = x^2/2, t = 1: front is {(2s, s, s^2)}
        let spec = HamiltonianSpec::kinetic(MomentumTerm::Quadratic { coeff: 1.0 }).unwrap();
        let w = Omega::Torus(vec![]);
        let f0 = initial_front(&InitialDatum::Graph(&|x| (0.5 * x * x, x)), -1.0, 1.0, &params())
            .unwrap();
        let f1 = evolve_front(
            &f0,
            &Advancer::Flow { spec: &spec, omega: &w, t: 1.0, tol: 1e-10 },
            &params(),
        )
        .unwrap();
        for v in &f1.verts {
            let s = v.p;
            assert!((v.x - 2.0 * s).abs() < 1e-8);
            assert!((v.a - s * s).abs() < 1e-8);
        }
    }

    #[test]
    fn shear_matches_flow_for_x_independent() {
        let spec =
            HamiltonianSpec::kinetic(MomentumTerm::DoubleWell { well: 1.0, scale: 1.0 }).unwrap();
        let w = Omega::Torus(vec![]);
        let f0 = initial_front(
            &InitialDatum::Graph(&|x| ((0.3 * x).sin(), 0.3 * (0.3 * x).cos())),
            -2.0,
            2.0,
            &params(),
        )
        .unwrap();
        let h = |p: f64| {
            let s = p * p - 1.0;
            (s * s, 4.0 * p * s)
        };
        for i in [0usize, f0.verts.len() / 3, f0.verts.len() - 1] {
            let a = Advancer::Flow { spec: &spec, omega: &w, t: 0.7, tol: 1e-11 }
                .advance(f0.verts[i])
                .unwrap();
            let b = Advancer::Shear { h: &h, t: 0.7 }.advance(f0.verts[i]).unwrap();
            assert!((a.x - b.x).abs() < 1e-8 && (a.a - b.a).abs() < 1e-8);
        }
    }

    #[test]
    fn pendulum_front_keeps_action_identity() {
        let spec = HamiltonianSpec::pendulum(1.0).truncate(8.0).unwrap();
        let w = Omega::Torus(vec![0.0]);
        let f0 = initial_front(&InitialDatum::Affine { p0: 2.0 }, -2.0, 2.0, &params()).unwrap();
        let f1 = evolve_front(
            &f0,
            &Advancer::Flow { spec: &spec, omega: &w, t: 1.0, tol: 1e-9 },
            &params(),
        )
        .unwrap();
        f1.validate(&params()).unwrap();
        assert!(f1.verts.len() >= f0.verts.len());
    }

    #[test]
    fn mirror_involution_and_shift_inverse() {
        let f = initial_front(&InitialDatum::Graph(&|x| ((x).sin(), x.cos())), -1.0, 1.0, &params())
            .unwrap();
        let mm = f.mirror().mirror();
        assert_eq!(mm.verts.len(), f.verts.len());
        for (u, v) in mm.verts.iter().zip(f.verts.iter()) {
            assert_eq!(u, v);
        }
        let sh = f.shift_momentum(0.7).shift_momentum(-0.7);
        for (u, v) in sh.verts.iter().zip(f.verts.iter()) {
            assert!((u.p - v.p).abs() < 1e-15 && (u.a - v.a).abs() < 1e-12);
        }
        let re = f.rescale(1.0).unwrap();
        for (u, v) in re.verts.iter().zip(f.verts.iter()) {
            assert_eq!(u, v);
        }
        assert!(f.rescale(0.0).is_err());
        assert!(f.rescale(-1.0).is_err());
    }
}
