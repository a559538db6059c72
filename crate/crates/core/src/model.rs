//! Hamiltonian fields `H(x, p; omega)`, momentum truncation and stochastic
//! ensembles.
//!
//! A [`HamiltonianSpec`] is a closed-form field with exact partial
//! derivatives. Environments `omega` are drawn from an [`Ensemble`]; the
//! stationarity identity `H(x + a, p; tau_a omega) = H(x, p; omega)` holds to
//! round-off for every variant. Coercive fields can be cut to fiber-compact
//! support with [`HamiltonianSpec::truncate`].

use crate::interp::CubicSpline;
use crate::rng::{cell_uniform, Rng};
use crate::{Error, Result};

const TAU: f64 = std::f64::consts::TAU;

/// Smooth step: 0 for `u <= 0`, 1 for `u >= 1`, C-infinity in between.
fn smooth_step(u: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else if u >= 1.0 {
        1.0
    } else {
        let a = (-1.0 / u).exp();
        let b = (-1.0 / (1.0 - u)).exp();
        a / (a + b)
    }
}

/// Kinetic profile `h(p)`.
#[derive(Debug, Clone)]
pub enum MomentumTerm {
    /// `coeff * p`
    Linear { coeff: f64 },
    /// `coeff * p^2 / 2`
    Quadratic { coeff: f64 },
    /// `scale * (p^2 - well^2)^2` (nonconvex double well)
    DoubleWell { well: f64, scale: f64 },
    /// User-tabulated profile, spline-interpolated.
    Tabulated(CubicSpline),
}

impl MomentumTerm {
    fn eval(&self, p: f64) -> (f64, f64) {
        match self {
            MomentumTerm::Linear { coeff } => (coeff * p, *coeff),
            MomentumTerm::Quadratic { coeff } => (0.5 * coeff * p * p, coeff * p),
            MomentumTerm::DoubleWell { well, scale } => {
                let s = p * p - well * well;
                (scale * s * s, scale * 4.0 * p * s)
            }
            MomentumTerm::Tabulated(t) => (t.eval(p), t.deriv(p)),
        }
    }
}

/// Smooth momentum window multiplying `h(p)`: 1 on `|p| <= inner`, 0 beyond
/// `|p| >= outer`.
#[derive(Debug, Clone)]
pub struct BumpWindow {
    pub inner: f64,
    pub outer: f64,
}

impl BumpWindow {
    fn eval(&self, p: f64) -> (f64, f64) {
        let (i2, o2) = (self.inner * self.inner, self.outer * self.outer);
        let u = (o2 - p * p) / (o2 - i2);
        let v = smooth_step(u);
        if u <= 0.0 || u >= 1.0 {
            (v, 0.0)
        } else {
            // d/du of the step, via its closed form
            let a = (-1.0 / u).exp();
            let b = (-1.0 / (1.0 - u)).exp();
            let da = a / (u * u);
            let db = b / ((1.0 - u) * (1.0 - u));
            let dv = (da * (a + b) - a * (da - db)) / ((a + b) * (a + b));
            (v, dv * (-2.0 * p) / (o2 - i2))
        }
    }
}

/// Full kinetic part `h(p) * window(p)`.
#[derive(Debug, Clone)]
pub struct MomentumProfile {
    pub term: MomentumTerm,
    pub bump: Option<BumpWindow>,
}

impl MomentumProfile {
    pub fn bare(term: MomentumTerm) -> Self {
        MomentumProfile { term, bump: None }
    }

    fn eval(&self, p: f64) -> (f64, f64) {
        let (h, dh) = self.term.eval(p);
        match &self.bump {
            None => (h, dh),
            Some(b) => {
                let (w, dw) = b.eval(p);
                (h * w, dh * w + h * dw)
            }
        }
    }
}

/// One cosine mode of a (quasi-)periodic potential:
/// `amp * cos(2 pi (freq * x + omega_j))`.
#[derive(Debug, Clone)]
pub struct CosTerm {
    pub amp: f64,
    pub freq: f64,
}

/// Potential part of the field, and how `omega` enters it.
#[derive(Debug, Clone)]
pub enum Potential {
    None,
    /// Sum of cosine modes with torus phases (`Omega::Torus`).
    Cosine(Vec<CosTerm>),
    /// Point-process potential: `amp * sum_j B((x - q_j) / width)` over the
    /// realization points (`Omega::Points`). `B` is a compact bump on [-1, 1].
    Bumps { amp: f64, width: f64 },
    /// Lattice potential with i.i.d. cell amplitudes in `[0, amp]`
    /// (`Omega::Lattice`), stationary under integer shifts.
    LatticeBumps { amp: f64, width: f64 },
}

/// Compact C^1 bump on [-1, 1]: `(1 - u^2)^3` and derivative.
fn bump(u: f64) -> (f64, f64) {
    if u.abs() >= 1.0 {
        (0.0, 0.0)
    } else {
        let s = 1.0 - u * u;
        (s * s * s, -6.0 * u * s * s)
    }
}

/// Environment point; the meaning depends on the spec's potential.
#[derive(Debug, Clone, PartialEq)]
pub enum Omega {
    /// Phases on `T^d`.
    Torus(Vec<f64>),
    /// Point-process realization (sorted positions).
    Points(Vec<f64>),
    /// Lattice environment: amplitude of cell `j` is `cell_uniform(seed, j - shift)`.
    Lattice { seed: u64, shift: i64 },
    /// Suspension point `[omega, t]` of a lattice environment.
    Suspended { inner: Box<Omega>, offset: f64 },
}

/// Momentum cut `chi_R`: slope one below `R`, supported in `(-inf, R + 1]`,
/// smoothing width fixed at 1. Below the cut `chi_R(t) = t - R - 1/2`.
#[derive(Debug, Clone)]
pub struct TruncationProfile {
    pub cut: f64,
    /// `chi_R(H) = H - value_offset` wherever `H <= cut`.
    pub value_offset: f64,
    table: CubicSpline, // chi on [cut, cut + 1]
}

impl TruncationProfile {
    pub fn new(cut: f64) -> Self {
        // chi(t) = -int_t^{R+1} chi'(s) ds with chi' = 1 - smooth_step(s - R).
        let n = 2001;
        let dt = 1.0 / (n - 1) as f64;
        let mut vals = vec![0.0; n];
        let mut acc = 0.0;
        // integrate backwards from t = R+1 where chi = 0
        for i in (0..n - 1).rev() {
            let a = i as f64 * dt;
            let b = a + dt;
            let fa = 1.0 - smooth_step(a);
            let fm = 1.0 - smooth_step(0.5 * (a + b));
            let fb = 1.0 - smooth_step(b);
            acc += dt / 6.0 * (fa + 4.0 * fm + fb);
            vals[i] = -acc;
        }
        let table = CubicSpline::new(cut, dt, vals).unwrap();
        TruncationProfile { cut, value_offset: cut + 0.5, table }
    }

    /// `(chi_R(t), chi_R'(t))`.
    pub fn eval(&self, t: f64) -> (f64, f64) {
        if t <= self.cut {
            (t - self.value_offset, 1.0)
        } else if t >= self.cut + 1.0 {
            (0.0, 0.0)
        } else {
            (self.table.eval(t), 1.0 - smooth_step(t - self.cut))
        }
    }
}

/// Stored Lipschitz data: `sup |dH/dx|` and `sup |dH/dp|` (the latter may be
/// unbounded for coercive fields until truncation).
#[derive(Debug, Clone, Copy)]
pub struct LipschitzBounds {
    pub sup_dx: f64,
    pub sup_dp: Option<f64>,
}

/// A parametric Hamiltonian field with exact partials.
#[derive(Debug, Clone)]
pub struct HamiltonianSpec {
    pub momentum: MomentumProfile,
    pub potential: Potential,
    truncations: Vec<TruncationProfile>,
    flipped: bool,
    pub support_radius: Option<f64>,
    pub lipschitz: LipschitzBounds,
    pub coercive: bool,
    /// Total constant removed by truncation chains (net of sign flips);
    /// effective-Hamiltonian reports add it back.
    pub energy_offset: f64,
}

/// Field value with exact partials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldValue {
    pub h: f64,
    pub hx: f64,
    pub hp: f64,
}

/// Anything the characteristic integrator can flow.
pub trait Field {
    fn value(&self, x: f64, p: f64) -> FieldValue;
}

/// A spec bound to one environment point.
pub struct SpecField<'a> {
    pub spec: &'a HamiltonianSpec,
    pub omega: &'a Omega,
}

impl Field for SpecField<'_> {
    fn value(&self, x: f64, p: f64) -> FieldValue {
        self.spec.eval(self.omega, x, p)
    }
}

/// `H(x / eps, p)` wrapper realizing the microscopic field.
pub struct ScaledField<'a, F: Field> {
    pub inner: &'a F,
    pub eps: f64,
}

impl<F: Field> Field for ScaledField<'_, F> {
    fn value(&self, x: f64, p: f64) -> FieldValue {
        let v = self.inner.value(x / self.eps, p);
        FieldValue { h: v.h, hx: v.hx / self.eps, hp: v.hp }
    }
}

impl HamiltonianSpec {
    pub fn new(momentum: MomentumProfile, potential: Potential) -> Result<Self> {
        let mut spec = HamiltonianSpec {
            momentum,
            potential,
            truncations: Vec::new(),
            flipped: false,
            support_radius: None,
            lipschitz: LipschitzBounds { sup_dx: 0.0, sup_dp: None },
            coercive: false,
            energy_offset: 0.0,
        };
        spec.validate_params()?;
        spec.coercive = spec.detect_coercive();
        spec.lipschitz = spec.compute_lipschitz();
        spec.support_radius = spec.detect_support_radius();
        Ok(spec)
    }

    /// Pendulum-type field `p^2/2 + amp cos(2 pi x)`.
    pub fn pendulum(amp: f64) -> Self {
        HamiltonianSpec::new(
            MomentumProfile::bare(MomentumTerm::Quadratic { coeff: 1.0 }),
            Potential::Cosine(vec![CosTerm { amp, freq: 1.0 }]),
        )
        .unwrap()
    }

    /// Purely kinetic field `h(p)`.
    pub fn kinetic(term: MomentumTerm) -> Result<Self> {
        HamiltonianSpec::new(MomentumProfile::bare(term), Potential::None)
    }

    fn validate_params(&self) -> Result<()> {
        let finite = |v: f64, what: &str| -> Result<()> {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidSpec(format!("non-finite parameter: {what}")))
            }
        };
        match &self.momentum.term {
            MomentumTerm::Linear { coeff } => finite(*coeff, "linear coeff")?,
            MomentumTerm::Quadratic { coeff } => finite(*coeff, "quadratic coeff")?,
            MomentumTerm::DoubleWell { well, scale } => {
                finite(*well, "well")?;
                finite(*scale, "scale")?;
            }
            MomentumTerm::Tabulated(_) => {}
        }
        if let Some(b) = &self.momentum.bump {
            finite(b.inner, "bump inner")?;
            finite(b.outer, "bump outer")?;
            if !(b.outer > b.inner && b.inner > 0.0) {
                return Err(Error::InvalidSpec("bump window needs 0 < inner < outer".into()));
            }
        }
        match &self.potential {
            Potential::None => {}
            Potential::Cosine(terms) => {
                for t in terms {
                    finite(t.amp, "cosine amp")?;
                    finite(t.freq, "cosine freq")?;
                }
            }
            Potential::Bumps { amp, width } | Potential::LatticeBumps { amp, width } => {
                finite(*amp, "bump amp")?;
                finite(*width, "bump width")?;
                if *width <= 0.0 {
                    return Err(Error::InvalidSpec("bump width must be positive".into()));
                }
            }
        }
        Ok(())
    }

    fn detect_coercive(&self) -> bool {
        if self.momentum.bump.is_some() {
            return false;
        }
        match &self.momentum.term {
            MomentumTerm::Quadratic { coeff } => *coeff > 0.0,
            MomentumTerm::DoubleWell { scale, .. } => *scale > 0.0,
            MomentumTerm::Linear { .. } => false,
            MomentumTerm::Tabulated(_) => false,
        }
    }

    fn potential_sup_dx(&self) -> f64 {
        match &self.potential {
            Potential::None => 0.0,
            Potential::Cosine(terms) => terms.iter().map(|t| (t.amp * TAU * t.freq).abs()).sum(),
            Potential::Bumps { amp, width } | Potential::LatticeBumps { amp, width } => {
                // max |B'| on the unit bump is at u = 1/sqrt(7), and at most
                // ceil(2 width) + 1 translated bumps overlap one point.
                let overlap = (2.0 * width).ceil() + 1.0;
                let sup_db = {
                    let u = (1.0f64 / 7.0).sqrt();
                    let s = 1.0 - u * u;
                    6.0 * u * s * s
                };
                (amp.abs() * sup_db / width) * overlap
            }
        }
    }

    fn potential_sup(&self) -> f64 {
        match &self.potential {
            Potential::None => 0.0,
            Potential::Cosine(terms) => terms.iter().map(|t| t.amp.abs()).sum(),
            Potential::Bumps { amp, width } | Potential::LatticeBumps { amp, width } => {
                let overlap = (2.0 * width).ceil() + 1.0;
                amp.abs() * overlap
            }
        }
    }

    fn kinetic_sup_dp_on(&self, radius: f64) -> f64 {
        let mut m: f64 = 0.0;
        let n = 4001;
        for i in 0..n {
            let p = -radius + 2.0 * radius * i as f64 / (n - 1) as f64;
            m = m.max(self.momentum.eval(p).1.abs());
        }
        m
    }

    fn compute_lipschitz(&self) -> LipschitzBounds {
        let sup_dx = self.potential_sup_dx();
        let sup_dp = match (&self.momentum.bump, self.coercive) {
            (Some(b), _) => Some(self.kinetic_sup_dp_on(b.outer) * 1.0001),
            (None, false) => match &self.momentum.term {
                MomentumTerm::Linear { coeff } => Some(coeff.abs()),
                _ => None,
            },
            (None, true) => None,
        };
        LipschitzBounds { sup_dx, sup_dp }
    }

    fn detect_support_radius(&self) -> Option<f64> {
        match (&self.momentum.bump, &self.potential) {
            (Some(b), Potential::None) => Some(b.outer),
            _ => None,
        }
    }

    /// Raw field before truncation wrappers.
    fn eval_raw(&self, omega: &Omega, x: f64, p: f64) -> FieldValue {
        let (h_kin, dh_kin) = self.momentum.eval(p);
        let (v, dv) = match (&self.potential, omega) {
            (Potential::None, _) => (0.0, 0.0),
            // Phase convention matches the action tau_a omega = omega + A a:
            // cos(2 pi (freq x - omega_j)) is invariant under
            // (x, omega_j) -> (x + a, omega_j + freq a).
            (Potential::Cosine(terms), Omega::Torus(phases)) => {
                let mut v = 0.0;
                let mut dv = 0.0;
                for (j, t) in terms.iter().enumerate() {
                    let ph = TAU * (t.freq * x - phases.get(j).copied().unwrap_or(0.0));
                    v += t.amp * ph.cos();
                    dv += -t.amp * TAU * t.freq * ph.sin();
                }
                (v, dv)
            }
            (Potential::Bumps { amp, width }, Omega::Points(pts)) => {
                let mut v = 0.0;
                let mut dv = 0.0;
                for q in pts {
                    let u = (x - q) / width;
                    if u.abs() < 1.0 {
                        let (b, db) = bump(u);
                        v += amp * b;
                        dv += amp * db / width;
                    }
                }
                (v, dv)
            }
            (Potential::LatticeBumps { amp, width }, Omega::Lattice { seed, shift }) => {
                let mut v = 0.0;
                let mut dv = 0.0;
                let lo = (x - width).floor() as i64;
                let hi = (x + width).ceil() as i64;
                for j in lo..=hi {
                    let u = (x - j as f64) / width;
                    if u.abs() < 1.0 {
                        let a = amp * cell_uniform(*seed, j - shift);
                        let (b, db) = bump(u);
                        v += a * b;
                        dv += a * db / width;
                    }
                }
                (v, dv)
            }
            // Suspension: K(x, p; [omega, t]) = H(x - t, p; omega).
            (_, Omega::Suspended { inner, offset }) => {
                return self.eval_raw(inner, x - offset, p);
            }
            _ => panic!("omega variant does not match the spec's potential"),
        };
        FieldValue { h: h_kin + v, hx: dv, hp: dh_kin }
    }

    /// Evaluate `H` together with its exact partials.
    pub fn eval(&self, omega: &Omega, x: f64, p: f64) -> FieldValue {
        let mut v = self.eval_raw(omega, x, p);
        for tr in &self.truncations {
            let (h, dh) = tr.eval(v.h);
            v = FieldValue { h, hx: dh * v.hx, hp: dh * v.hp };
        }
        if self.flipped {
            v = FieldValue { h: -v.h, hx: -v.hx, hp: -v.hp };
        }
        v
    }

    pub fn field<'a>(&'a self, omega: &'a Omega) -> SpecField<'a> {
        SpecField { spec: self, omega }
    }

    /// Upper bound for the global sup of `|H|` (exact up to grid sampling of
    /// the kinetic profile; infinite for untruncated coercive fields).
    pub fn sup_abs(&self) -> f64 {
        if self.truncations.is_empty() {
            self.kinetic_abs_sup() + self.potential_sup()
        } else {
            // Each cut maps its input range [m, ...] to [m - offset_j, 0].
            let raw_min = self.kinetic_min() - self.potential_sup();
            let total: f64 = self.truncations.iter().map(|t| t.value_offset).sum();
            (total - raw_min).max(0.0)
        }
    }

    fn kinetic_min(&self) -> f64 {
        match (&self.momentum.term, &self.momentum.bump) {
            (MomentumTerm::Quadratic { coeff }, None) if *coeff > 0.0 => 0.0,
            (MomentumTerm::DoubleWell { scale, .. }, None) if *scale > 0.0 => 0.0,
            (_, b) => {
                let r = b.as_ref().map(|b| b.outer).unwrap_or(8.0);
                let mut m = f64::INFINITY;
                let n = 2001;
                for i in 0..n {
                    let p = -r + 2.0 * r * i as f64 / (n - 1) as f64;
                    m = m.min(self.momentum.eval(p).0);
                }
                m.min(0.0)
            }
        }
    }

    fn kinetic_abs_sup(&self) -> f64 {
        match &self.momentum.bump {
            None => f64::INFINITY,
            Some(b) => {
                let mut m: f64 = 0.0;
                let n = 2001;
                for i in 0..n {
                    let p = -b.outer + 2.0 * b.outer * i as f64 / (n - 1) as f64;
                    m = m.max(self.momentum.eval(p).0.abs());
                }
                m
            }
        }
    }

    /// Cut the field at energy `R`, producing a fiber-compact spec that
    /// shares the Hamiltonian vector field on `{H <= R}`.
    pub fn truncate(&self, r: f64) -> Result<HamiltonianSpec> {
        if !self.coercive && self.truncations.is_empty() {
            return Err(Error::Unsupported("truncation requires coercivity".into()));
        }
        if self.flipped {
            return Err(Error::Unsupported("truncate before flipping the sign".into()));
        }
        let mut out = self.clone();
        let profile = TruncationProfile::new(r);
        out.energy_offset += profile.value_offset;
        out.truncations.push(profile);
        out.support_radius = Some(out.find_support_radius(r)?);
        out.coercive = false;
        let rad = out.support_radius.unwrap();
        out.lipschitz = LipschitzBounds {
            sup_dx: self.potential_sup_dx(),
            sup_dp: Some(out.kinetic_sup_dp_on(rad) * 1.0001),
        };
        Ok(out)
    }

    /// Time-reversed field `-H` (the generator of the inverse flow).
    pub fn time_reversed(&self) -> HamiltonianSpec {
        let mut out = self.clone();
        out.flipped = !out.flipped;
        out.energy_offset = -out.energy_offset;
        out
    }

    /// Smallest radius beyond which the truncated field vanishes, located by
    /// bisection on the worst-case energy over x.
    fn find_support_radius(&self, r: f64) -> Result<f64> {
        let omega = self.reference_omega();
        let min_over_x = |p: f64| -> f64 {
            let mut m = f64::INFINITY;
            for i in 0..257 {
                let x = i as f64 / 256.0 * 4.0 - 2.0;
                m = m.min(self.eval_raw(&omega, x, p).h);
            }
            m
        };
        let target = r + 1.0;
        let mut hi = 1.0;
        while min_over_x(hi).min(min_over_x(-hi)) < target {
            hi *= 2.0;
            if hi > 1e6 {
                return Err(Error::Unsupported("could not bracket support radius".into()));
            }
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if min_over_x(mid).min(min_over_x(-mid)) >= target {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(hi)
    }

    fn reference_omega(&self) -> Omega {
        match &self.potential {
            Potential::None | Potential::Cosine(_) => Omega::Torus(vec![0.0; 8]),
            Potential::Bumps { .. } => Omega::Points(vec![0.0]),
            Potential::LatticeBumps { .. } => Omega::Lattice { seed: 1, shift: 0 },
        }
    }

    pub fn is_truncated(&self) -> bool {
        !self.truncations.is_empty()
    }

    /// True when the field is 1-periodic in x for torus phases (all cosine
    /// frequencies integral), which allows tiled front evolution.
    pub fn is_unit_periodic(&self) -> bool {
        match &self.potential {
            Potential::None => true,
            Potential::Cosine(terms) => terms
                .iter()
                .all(|t| (t.freq - t.freq.round()).abs() < 1e-12),
            Potential::LatticeBumps { .. } => false,
            Potential::Bumps { .. } => false,
        }
    }

    /// True when `H` does not depend on x at all.
    pub fn is_x_independent(&self) -> bool {
        matches!(self.potential, Potential::None)
    }

    /// Convexity of the kinetic profile in p (potential part is p-free).
    pub fn is_convex_in_p(&self) -> bool {
        if self.momentum.bump.is_some() || self.is_truncated() {
            return false;
        }
        matches!(
            self.momentum.term,
            MomentumTerm::Quadratic { coeff } if coeff > 0.0
        ) || matches!(self.momentum.term, MomentumTerm::Linear { .. })
    }

    /// True when the dynamics on bounded energy shells is that of a field
    /// convex in p: a positive quadratic kinetic profile, possibly truncated
    /// (the cut only bends the field near the cut energy, above any shell the
    /// fronts explore).
    pub fn is_effectively_convex(&self) -> bool {
        !self.flipped
            && self.momentum.bump.is_none()
            && matches!(self.momentum.term, MomentumTerm::Quadratic { coeff } if coeff > 0.0)
    }

    /// The time-reversed counterpart: effectively concave dynamics.
    pub fn is_effectively_concave(&self) -> bool {
        self.flipped
            && self.momentum.bump.is_none()
            && matches!(self.momentum.term, MomentumTerm::Quadratic { coeff } if coeff > 0.0)
    }
}

/// Evaluate `H` and its partials; the free-function form of
/// [`HamiltonianSpec::eval`].
pub fn eval_field(spec: &HamiltonianSpec, omega: &Omega, x: f64, p: f64) -> FieldValue {
    spec.eval(omega, x, p)
}

/// Stochastic environment generator with a group action `tau_a`.
#[derive(Debug, Clone)]
pub enum Ensemble {
    /// Single fixed environment.
    Periodic { omega: Vec<f64> },
    /// Uniform phases on `T^d` translated by `omega -> omega + A a`,
    /// where the action matrix column is the cosine frequency vector.
    QuasiPeriodic { freqs: Vec<f64> },
    /// Stationary point process of given intensity on a window.
    PointProcess { intensity: f64, window: (f64, f64) },
    /// Real-line suspension of an integer-lattice environment.
    SuspendedDiscrete { amp_seed_stride: u64 },
}

impl Ensemble {
    /// Draw `count` environments; deterministic in `seed`.
    pub fn sample(&self, seed: u64, count: usize) -> Result<Vec<Omega>> {
        if count == 0 {
            return Err(Error::InvalidSpec("sample count must be >= 1".into()));
        }
        let mut rng = Rng::stream(seed, 0xE25);
        let mut out = Vec::with_capacity(count);
        for k in 0..count {
            out.push(match self {
                Ensemble::Periodic { omega } => Omega::Torus(omega.clone()),
                Ensemble::QuasiPeriodic { freqs } => {
                    Omega::Torus((0..freqs.len()).map(|_| rng.next_f64()).collect())
                }
                Ensemble::PointProcess { intensity, window } => {
                    let len = window.1 - window.0;
                    let n = rng.poisson(intensity * len);
                    let mut pts: Vec<f64> =
                        (0..n).map(|_| rng.uniform(window.0, window.1)).collect();
                    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
                    Omega::Points(pts)
                }
                Ensemble::SuspendedDiscrete { amp_seed_stride } => Omega::Suspended {
                    inner: Box::new(Omega::Lattice {
                        seed: seed
                            .wrapping_add(amp_seed_stride.wrapping_mul(k as u64 + 1)),
                        shift: 0,
                    }),
                    offset: rng.next_f64(),
                },
            });
        }
        Ok(out)
    }

    /// Translated environment `tau_a omega`.
    pub fn translate(&self, spec: &HamiltonianSpec, omega: &Omega, a: f64) -> Omega {
        match (self, omega) {
            (Ensemble::Periodic { .. } | Ensemble::QuasiPeriodic { .. }, Omega::Torus(ph)) => {
                let freqs: Vec<f64> = match &spec.potential {
                    Potential::Cosine(terms) => terms.iter().map(|t| t.freq).collect(),
                    _ => vec![0.0; ph.len()],
                };
                Omega::Torus(
                    ph.iter()
                        .enumerate()
                        .map(|(j, w)| {
                            let v = w + freqs.get(j).copied().unwrap_or(0.0) * a;
                            v - v.floor()
                        })
                        .collect(),
                )
            }
            (Ensemble::PointProcess { .. }, Omega::Points(pts)) => {
                Omega::Points(pts.iter().map(|q| q + a).collect())
            }
            (Ensemble::SuspendedDiscrete { .. }, Omega::Suspended { inner, offset }) => {
                suspend_translate(inner, *offset, a)
            }
            _ => panic!("omega variant does not match the ensemble"),
        }
    }
}

/// The suspended action `tau~_a [omega, t] = [T_z omega, t']` with
/// `t + a = t' + z`, `t' in [0, 1)`.
pub fn suspend_translate(inner: &Omega, offset: f64, a: f64) -> Omega {
    let raw = offset + a;
    let z = raw.floor();
    let t = raw - z;
    let shifted = match inner {
        Omega::Lattice { seed, shift } => Omega::Lattice { seed: *seed, shift: shift + z as i64 },
        other => other.clone(),
    };
    Omega::Suspended { inner: Box::new(shifted), offset: t }
}

/// Wrap a lattice (integer-shift stationary) ensemble into a real-line one.
pub fn suspend_discrete(amp_seed_stride: u64) -> Ensemble {
    Ensemble::SuspendedDiscrete { amp_seed_stride }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn separable_bump_cos() -> HamiltonianSpec {
        // H = p^2/2 * bump - cos(2 pi x)
        HamiltonianSpec::new(
            MomentumProfile {
                term: MomentumTerm::Quadratic { coeff: 1.0 },
                bump: Some(BumpWindow { inner: 2.0, outer: 3.0 }),
            },
            Potential::Cosine(vec![CosTerm { amp: -1.0, freq: 1.0 }]),
        )
        .unwrap()
    }

    #[test]
    fn critical_point_values() {
        let spec = separable_bump_cos();
        let w = Omega::Torus(vec![0.0]);
        let v = spec.eval(&w, 0.0, 0.0);
        assert_eq!(v.h, -1.0);
        assert_eq!(v.hx, 0.0);
        assert_eq!(v.hp, 0.0);
    }

    #[test]
    fn quasiperiodic_stationarity() {
        let alpha = 0.5 * (1.0 + 5.0f64.sqrt());
        let spec = HamiltonianSpec::new(
            MomentumProfile::bare(MomentumTerm::Quadratic { coeff: 1.0 }),
            Potential::Cosine(vec![
                CosTerm { amp: 1.0, freq: 1.0 },
                CosTerm { amp: 1.0, freq: alpha },
            ]),
        )
        .unwrap();
        let ens = Ensemble::QuasiPeriodic { freqs: vec![1.0, alpha] };
        let omegas = ens.sample(3, 4).unwrap();
        let mut rng = Rng::new(11);
        for w in &omegas {
            for _ in 0..20 {
                let (x, p, a) = (rng.uniform(-3.0, 3.0), rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0));
                let lhs = spec.eval(&ens.translate(&spec, w, a), x + a, p).h;
                let rhs = spec.eval(w, x, p).h;
                assert!((lhs - rhs).abs() < 1e-12, "stationarity {lhs} vs {rhs}");
            }
        }
    }

    #[test]
    fn partials_match_finite_differences() {
        let specs = vec![
            separable_bump_cos(),
            HamiltonianSpec::pendulum(1.0),
            HamiltonianSpec::pendulum(1.0).truncate(8.0).unwrap(),
            HamiltonianSpec::new(
                MomentumProfile::bare(MomentumTerm::DoubleWell { well: 1.0, scale: 1.0 }),
                Potential::Cosine(vec![CosTerm { amp: 0.2, freq: 1.0 }]),
            )
            .unwrap(),
        ];
        let w = Omega::Torus(vec![0.3, 0.7]);
        let mut rng = Rng::new(5);
        let eps = 1e-5;
        for spec in &specs {
            for _ in 0..60 {
                let x = rng.uniform(-2.0, 2.0);
                let p = rng.uniform(-3.0, 3.0);
                let v = spec.eval(&w, x, p);
                let fx = (spec.eval(&w, x + eps, p).h - spec.eval(&w, x - eps, p).h) / (2.0 * eps);
                let fp = (spec.eval(&w, x, p + eps).h - spec.eval(&w, x, p - eps).h) / (2.0 * eps);
                let scale = 1.0 + v.hx.abs().max(v.hp.abs());
                assert!((v.hx - fx).abs() / scale < 1e-6, "hx {} vs fd {}", v.hx, fx);
                assert!((v.hp - fp).abs() / scale < 1e-6, "hp {} vs fd {}", v.hp, fp);
            }
        }
    }

    #[test]
    fn truncation_support_radius() {
        // H = p^2/2 + cos(2 pi x), R = 8: support radius <= sqrt(2*(9+1)) ~ 4.48
        let spec = HamiltonianSpec::pendulum(1.0).truncate(8.0).unwrap();
        let r = spec.support_radius.unwrap();
        assert!(r <= 4.48 && r > 4.3, "support radius {r}");
        let w = Omega::Torus(vec![0.0]);
        for i in 0..40 {
            let p = r + 0.001 + i as f64 * 0.2;
            for j in 0..16 {
                let x = j as f64 / 16.0;
                assert_eq!(spec.eval(&w, x, p).h, 0.0);
                assert_eq!(spec.eval(&w, x, -p).h, 0.0);
            }
        }
    }

    #[test]
    fn truncation_is_shift_below_cut() {
        let base = HamiltonianSpec::pendulum(1.0);
        let spec = base.truncate(8.0).unwrap();
        let w = Omega::Torus(vec![0.0]);
        for i in 0..50 {
            let x = -1.0 + i as f64 * 0.04;
            let p = 0.3 + i as f64 * 0.02; // energies well below 8
            let raw = base.eval(&w, x, p);
            let cut = spec.eval(&w, x, p);
            assert!((cut.h - (raw.h - spec.energy_offset)).abs() < 1e-9);
            assert!((cut.hx - raw.hx).abs() < 1e-12);
            assert!((cut.hp - raw.hp).abs() < 1e-12);
        }
    }

    #[test]
    fn double_truncation_shifts_by_constant() {
        let one = HamiltonianSpec::pendulum(1.0).truncate(6.0).unwrap();
        let two = one.truncate(9.0).unwrap();
        let w = Omega::Torus(vec![0.0]);
        let mut rng = Rng::new(9);
        let mut diff0 = None;
        for _ in 0..200 {
            let x = rng.uniform(-2.0, 2.0);
            let p = rng.uniform(-5.0, 5.0);
            let d = two.eval(&w, x, p).h - one.eval(&w, x, p).h;
            match diff0 {
                None => diff0 = Some(d),
                Some(d0) => assert!((d - d0).abs() < 1e-9, "not a constant shift"),
            }
            let g1 = one.eval(&w, x, p);
            let g2 = two.eval(&w, x, p);
            assert!((g1.hx - g2.hx).abs() < 1e-12 && (g1.hp - g2.hp).abs() < 1e-12);
        }
    }

    #[test]
    fn lipschitz_bounds_dominate_samples() {
        let specs = vec![separable_bump_cos(), HamiltonianSpec::pendulum(1.0).truncate(8.0).unwrap()];
        let w = Omega::Torus(vec![0.0]);
        for spec in &specs {
            let mut max_dx: f64 = 0.0;
            let mut max_dp: f64 = 0.0;
            for i in 0..101 {
                for j in 0..101 {
                    let x = -1.0 + 2.0 * i as f64 / 100.0;
                    let p = -6.0 + 12.0 * j as f64 / 100.0;
                    let v = spec.eval(&w, x, p);
                    max_dx = max_dx.max(v.hx.abs());
                    max_dp = max_dp.max(v.hp.abs());
                }
            }
            assert!(max_dx <= spec.lipschitz.sup_dx + 1e-9);
            assert!(max_dp <= spec.lipschitz.sup_dp.unwrap() + 1e-9);
        }
    }

    #[test]
    fn sampling_determinism_and_uniformity() {
        let ens = Ensemble::QuasiPeriodic { freqs: vec![1.0, 2.0] };
        let a = ens.sample(7, 3).unwrap();
        let b = ens.sample(7, 3).unwrap();
        assert_eq!(a, b);

        let many = ens.sample(1, 10_000).unwrap();
        for c in 0..2 {
            let mean: f64 = many
                .iter()
                .map(|w| match w {
                    Omega::Torus(v) => v[c],
                    _ => unreachable!(),
                })
                .sum::<f64>()
                / many.len() as f64;
            assert!((mean - 0.5).abs() < 0.02, "coordinate {c} mean {mean}");
        }

        let per = Ensemble::Periodic { omega: vec![0.25] };
        for w in per.sample(99, 5).unwrap() {
            assert_eq!(w, Omega::Torus(vec![0.25]));
        }
    }

    #[test]
    fn point_process_stationarity() {
        let spec = HamiltonianSpec::new(
            MomentumProfile::bare(MomentumTerm::Quadratic { coeff: 1.0 }),
            Potential::Bumps { amp: 0.8, width: 0.4 },
        )
        .unwrap();
        let ens = Ensemble::PointProcess { intensity: 1.5, window: (-30.0, 30.0) };
        let omegas = ens.sample(13, 3).unwrap();
        let mut rng = Rng::new(3);
        for w in &omegas {
            for _ in 0..20 {
                let a = rng.uniform(-2.0, 2.0);
                let x = rng.uniform(-5.0, 5.0);
                let p = rng.uniform(-2.0, 2.0);
                let lhs = spec.eval(&ens.translate(&spec, w, a), x + a, p).h;
                let rhs = spec.eval(w, x, p).h;
                assert!((lhs - rhs).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn suspension_stationarity() {
        let spec = HamiltonianSpec::new(
            MomentumProfile::bare(MomentumTerm::Quadratic { coeff: 1.0 }),
            Potential::LatticeBumps { amp: 0.6, width: 0.35 },
        )
        .unwrap();
        let ens = suspend_discrete(0x51D);
        let omegas = ens.sample(21, 3).unwrap();
        let mut rng = Rng::new(17);
        for w in &omegas {
            // integer shift keeps the offset and shifts the inner lattice
            if let Omega::Suspended { offset, .. } = w {
                if let Omega::Suspended { inner: si, offset: so } =
                    ens.translate(&spec, w, 1.0)
                {
                    assert!((so - offset).abs() < 1e-12);
                    match *si {
                        Omega::Lattice { shift, .. } => assert_eq!(shift, 1),
                        _ => panic!(),
                    }
                }
            }
            // identity
            assert_eq!(ens.translate(&spec, w, 0.0), w.clone());
            // generic real shift
            for _ in 0..20 {
                let a = rng.uniform(0.0, 1.0);
                let x = rng.uniform(-4.0, 4.0);
                let p = rng.uniform(-2.0, 2.0);
                let lhs = spec.eval(&ens.translate(&spec, w, a), x + a, p).h;
                let rhs = spec.eval(w, x, p).h;
                assert!((lhs - rhs).abs() < 1e-12, "suspension stationarity");
            }
        }
    }
}
