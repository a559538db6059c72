//! Independent ground-truth engines.
//!
//! * Cubical sublevel persistence over the two-element field computes the
//!   homological spectral values of gridded generating functions on tiny
//!   instances ([`persistence_c`], [`brute_minmax`]).
//! * A Lax-Oleinik splitting solver gives the viscosity solution for fields
//!   convex in p ([`lax_oleinik`]).
//! * A shooting solver for the periodic cell problem
//!   `H(x, p + v'(x)) = lambda` gives the classical effective Hamiltonian of
//!   mechanical fields ([`cell_problem_hbar`]).
//!
//! Everything here is deliberately independent of the front/selector path it
//! cross-checks.

use crate::genfun::DiscreteGF;
use crate::model::{HamiltonianSpec, MomentumTerm, Omega};
use crate::quad::adaptive_simpson;
use crate::{Error, Result};

/// Gridded filtration with quadratic clamping outside the window.
#[derive(Debug, Clone)]
pub struct FilteredGrid {
    /// Vertex counts per axis (1 to 3 axes).
    pub dims: Vec<usize>,
    pub origin: Vec<f64>,
    pub step: Vec<f64>,
    /// Vertex values, row-major.
    pub values: Vec<f64>,
    /// Cells at or below this value form the quotiented low part.
    pub low_cut: f64,
    /// Cells at or above this value form the low part of the negated grid.
    pub high_cut: f64,
    /// Leading axes that parametrize the base; the rest are fiber variables.
    /// The duality route flips the class degree within the fiber block only.
    pub base_axes: usize,
}

/// Which cohomology class to track.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassKind {
    /// The unit class `1`.
    Unit,
    /// The fundamental class `mu` (via duality on the negated grid).
    Fundamental,
}

impl FilteredGrid {
    /// Sample `f` on a regular grid. `axes` are `(lo, hi, n)` per dimension.
    pub fn sample(
        axes: &[(f64, f64, usize)],
        f: &mut dyn FnMut(&[f64]) -> f64,
        low_cut: f64,
        high_cut: f64,
        base_axes: usize,
    ) -> Result<Self> {
        if base_axes >= axes.len() {
            return Err(Error::InvalidSpec("need at least one fiber axis".into()));
        }
        if axes.is_empty() || axes.len() > 3 {
            return Err(Error::InvalidSpec("filtered grid supports 1 to 3 axes".into()));
        }
        let dims: Vec<usize> = axes.iter().map(|a| a.2).collect();
        if dims.iter().any(|&n| n < 2) {
            return Err(Error::InvalidSpec("each axis needs at least 2 nodes".into()));
        }
        let origin: Vec<f64> = axes.iter().map(|a| a.0).collect();
        let step: Vec<f64> = axes.iter().map(|a| (a.1 - a.0) / (a.2 - 1) as f64).collect();
        let total: usize = dims.iter().product();
        let mut values = vec![0.0; total];
        let m = dims.len();
        let mut idx = vec![0usize; m];
        let mut coords = vec![0.0; m];
        for (lin, slot) in values.iter_mut().enumerate() {
            let mut rem = lin;
            for a in (0..m).rev() {
                idx[a] = rem % dims[a];
                rem /= dims[a];
            }
            for a in 0..m {
                coords[a] = origin[a] + step[a] * idx[a] as f64;
            }
            let v = f(&coords);
            if !v.is_finite() {
                return Err(Error::InvalidSpec("non-finite grid value".into()));
            }
            *slot = v;
        }
        Ok(FilteredGrid { dims, origin, step, values, low_cut, high_cut, base_axes })
    }

    fn negated(&self) -> FilteredGrid {
        FilteredGrid {
            dims: self.dims.clone(),
            origin: self.origin.clone(),
            step: self.step.clone(),
            values: self.values.iter().map(|v| -v).collect(),
            low_cut: -self.high_cut,
            high_cut: -self.low_cut,
            base_axes: self.base_axes,
        }
    }

    /// Largest oscillation of values over a single grid cell.
    pub fn cell_oscillation(&self) -> f64 {
        let m = self.dims.len();
        let strides = strides_of(&self.dims);
        let mut worst: f64 = 0.0;
        let corners = 1usize << m;
        let total: usize = self.dims.iter().product();
        'outer: for lin in 0..total {
            let mut rem = lin;
            for a in (0..m).rev() {
                let i = rem % self.dims[a];
                rem /= self.dims[a];
                if i + 1 >= self.dims[a] {
                    continue 'outer;
                }
            }
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for mask in 0..corners {
                let mut v = lin;
                for a in 0..m {
                    if mask & (1 << a) != 0 {
                        v += strides[a];
                    }
                }
                lo = lo.min(self.values[v]);
                hi = hi.max(self.values[v]);
            }
            worst = worst.max(hi - lo);
        }
        worst
    }
}

fn strides_of(dims: &[usize]) -> Vec<usize> {
    let m = dims.len();
    let mut s = vec![1usize; m];
    for a in (0..m.saturating_sub(1)).rev() {
        s[a] = s[a + 1] * dims[a + 1];
    }
    s
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    corner: usize,
    mask: u8,
    value: f64,
    dim: u8,
}

fn enumerate_cells(grid: &FilteredGrid) -> Vec<Cell> {
    let m = grid.dims.len();
    let strides = strides_of(&grid.dims);
    let total: usize = grid.dims.iter().product();
    let mut cells = Vec::with_capacity(total * (1 << m));
    let mut idx = vec![0usize; m];
    for corner in 0..total {
        let mut rem = corner;
        for a in (0..m).rev() {
            idx[a] = rem % grid.dims[a];
            rem /= grid.dims[a];
        }
        'mask: for mask in 0u8..(1 << m) {
            for a in 0..m {
                if mask & (1 << a) != 0 && idx[a] + 1 >= grid.dims[a] {
                    continue 'mask;
                }
            }
            let mut value = f64::NEG_INFINITY;
            let corners = 1usize << mask.count_ones();
            let set_axes: Vec<usize> = (0..m).filter(|a| mask & (1 << a) != 0).collect();
            for c in 0..corners {
                let mut v = corner;
                for (bit, axis) in set_axes.iter().enumerate() {
                    if c & (1 << bit) != 0 {
                        v += strides[*axis];
                    }
                }
                value = value.max(grid.values[v]);
            }
            cells.push(Cell { corner, mask, value, dim: mask.count_ones() as u8 });
        }
    }
    cells
}

/// Essential (never-dying) classes of the lower-star filtration relative to
/// the sublevel region `{value <= low_cut}`: birth values grouped by degree.
pub fn essential_births(grid: &FilteredGrid) -> Result<Vec<Vec<f64>>> {
    let m = grid.dims.len();
    let strides = strides_of(&grid.dims);
    let mut cells = enumerate_cells(grid);
    cells.retain(|c| c.value > grid.low_cut);
    let mut order: Vec<usize> = (0..cells.len()).collect();
    order.sort_by(|&a, &b| {
        cells[a]
            .value
            .partial_cmp(&cells[b].value)
            .unwrap()
            .then(cells[a].dim.cmp(&cells[b].dim))
            .then(cells[a].corner.cmp(&cells[b].corner))
            .then(cells[a].mask.cmp(&cells[b].mask))
    });
    let mut pos_of = vec![usize::MAX; cells.len()];
    for (pos, &ci) in order.iter().enumerate() {
        pos_of[ci] = pos;
    }
    let key = |corner: usize, mask: u8| -> u64 { ((corner as u64) << 3) | mask as u64 };
    let mut lookup = std::collections::HashMap::with_capacity(cells.len() * 2);
    for (ci, c) in cells.iter().enumerate() {
        lookup.insert(key(c.corner, c.mask), ci);
    }

    let n = order.len();
    let mut reduced: Vec<Option<Vec<u32>>> = vec![None; n];
    let mut pivot_owner: Vec<u32> = vec![u32::MAX; n];
    let mut paired = vec![false; n];
    for pos in 0..n {
        let c = cells[order[pos]];
        let mut col: Vec<u32> = Vec::new();
        if c.dim > 0 {
            for a in 0..m {
                if c.mask & (1 << a) == 0 {
                    continue;
                }
                let fmask = c.mask & !(1 << a);
                for side in 0..2usize {
                    let fcorner = c.corner + side * strides[a];
                    if let Some(&fi) = lookup.get(&key(fcorner, fmask)) {
                        let p = pos_of[fi] as u32;
                        match col.binary_search(&p) {
                            Ok(i) => {
                                col.remove(i);
                            }
                            Err(i) => col.insert(i, p),
                        }
                    }
                }
            }
        }
        while let Some(&piv) = col.last() {
            let owner = pivot_owner[piv as usize];
            if owner == u32::MAX {
                break;
            }
            let other = reduced[owner as usize].as_ref().unwrap().clone();
            col = xor_merge(&col, &other);
        }
        if let Some(&piv) = col.last() {
            pivot_owner[piv as usize] = pos as u32;
            paired[piv as usize] = true;
            paired[pos] = true;
        }
        reduced[pos] = Some(col);
    }
    let mut births: Vec<Vec<f64>> = vec![Vec::new(); m + 1];
    for pos in 0..n {
        if !paired[pos] {
            let c = cells[order[pos]];
            births[c.dim as usize].push(c.value);
        }
    }
    Ok(births)
}

fn xor_merge(a: &[u32], b: &[u32]) -> Vec<u32> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

/// Birth threshold of the tracked class in degree `neg_index`.
///
/// [`ClassKind::Unit`] is the unique essential class of the sublevel
/// filtration relative to the low part; [`ClassKind::Fundamental`] goes
/// through the duality route on the negated grid in the complementary
/// degree.
pub fn persistence_c(grid: &FilteredGrid, class: ClassKind, neg_index: usize) -> Result<f64> {
    if neg_index > 2 {
        return Err(Error::InvalidSpec("negative index must be 0, 1 or 2".into()));
    }
    match class {
        ClassKind::Unit => {
            let births = essential_births(grid)?;
            let found = births.get(neg_index).map(|v| v.as_slice()).unwrap_or(&[]);
            match found {
                [b] => Ok(*b),
                [] => Err(Error::RefineGrid(format!(
                    "no essential class in degree {neg_index}; enlarge window or refine"
                ))),
                many => Err(Error::RefineGrid(format!(
                    "{} essential classes in degree {neg_index}; refine grid",
                    many.len()
                ))),
            }
        }
        ClassKind::Fundamental => {
            let fiber_dim = grid.dims.len() - grid.base_axes;
            let dual_degree = fiber_dim - neg_index.min(fiber_dim);
            let v = persistence_c(&grid.negated(), ClassKind::Unit, dual_degree)?;
            Ok(-v)
        }
    }
}

/// Homological value of the gridded iterated generating function at base
/// point `(x, y)`: the birth of the unit class in degree `k - 1` over the
/// fiber box of half-width `half_width` around the trivial orbit.
///
/// Arguments of the one-step table are clamped to its window so the far
/// field carries exactly the quadratic signature of the coupling form.
pub fn brute_minmax(
    gf: &DiscreteGF,
    x: f64,
    y: f64,
    half_width: f64,
    nodes_per_axis: usize,
) -> Result<f64> {
    let dim = gf.zeta_dim();
    if dim == 0 {
        return gf.eval(x, y, &[]);
    }
    if dim > 3 {
        return Err(Error::Unsupported(format!(
            "zeta dimension {dim} beyond the persistence cap of 3"
        )));
    }
    let (qlo, qhi) = gf.step.table.x_range();
    let (plo, phi) = gf.step.table.y_range();
    let kf = gf.k as f64;
    let eval_clamped = |zeta: &[f64]| -> f64 {
        let mut sum = 0.0;
        for j in 1..=gf.k {
            let (q, p) = if j == 1 {
                (x, if gf.k == 1 { y } else { zeta[0] })
            } else {
                (zeta[2 * (j - 1) - 1], if j == gf.k { y } else { zeta[2 * (j - 1)] })
            };
            let qc = (kf * q).clamp(qlo, qhi);
            let pc = p.clamp(plo, phi);
            sum += gf.step.table.eval(qc, pc).0;
        }
        sum / kf + gf.coupling(x, y, zeta)
    };
    let mut axes = Vec::with_capacity(dim);
    for j in 0..dim {
        let center = if j % 2 == 0 { y } else { x };
        axes.push((center - half_width, center + half_width, nodes_per_axis));
    }
    // bound the step-sum part on the box; the coupling's quadratic growth at
    // the walls must dominate it so the cuts carve out exactly the cones
    let mut sum_abs: f64 = 0.0;
    let probes = 9usize.pow(dim as u32);
    let mut z = vec![0.0; dim];
    for c in 0..probes {
        let mut rem = c;
        for (a, slot) in z.iter_mut().enumerate() {
            let i = rem % 9;
            rem /= 9;
            let (lo, hi, _) = axes[a];
            *slot = lo + (hi - lo) * i as f64 / 8.0;
        }
        let v = eval_clamped(&z) - gf.coupling(x, y, &z);
        sum_abs = sum_abs.max(v.abs());
    }
    let wall = half_width * half_width;
    if wall < 2.0 * sum_abs + 1.0 {
        return Err(Error::RefineGrid(format!(
            "window wall {wall:.3} does not dominate the step sum {sum_abs:.3}; enlarge half_width"
        )));
    }
    let low_cut = -0.5 * wall;
    let high_cut = 0.5 * wall;
    let grid = FilteredGrid::sample(&axes, &mut |c| eval_clamped(c), low_cut, high_cut, 0)?;
    persistence_c(&grid, ClassKind::Unit, gf.k - 1)
}

/// Solution table on a uniform grid.
#[derive(Debug, Clone)]
pub struct UTable {
    pub xs: Vec<f64>,
    pub u: Vec<f64>,
}

impl UTable {
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.u[0];
        }
        if x >= self.xs[n - 1] {
            return self.u[n - 1];
        }
        let t = (x - self.xs[0]) / (self.xs[1] - self.xs[0]);
        let i = (t.floor() as usize).min(n - 2);
        let frac = t - i as f64;
        self.u[i] * (1.0 - frac) + self.u[i + 1] * frac
    }

    pub fn sup_distance(&self, other: &UTable) -> f64 {
        self.xs
            .iter()
            .zip(self.u.iter())
            .map(|(x, v)| (v - other.eval(*x)).abs())
            .fold(0.0, f64::max)
    }
}

/// Lax-Oleinik / splitting solution of the Cauchy problem for a field convex
/// in p. The kinetic part acts by inf-convolution with the Legendre
/// transform of `h`; any potential enters by Strang splitting over `steps`
/// substeps (one substep is exact when the field is x-independent).
pub fn lax_oleinik(
    spec: &HamiltonianSpec,
    omega: &Omega,
    f: &dyn Fn(f64) -> f64,
    t: f64,
    lo: f64,
    hi: f64,
    dx: f64,
    steps: usize,
) -> Result<UTable> {
    if !spec.is_convex_in_p() {
        return Err(Error::Unsupported("Lax-Oleinik needs a field convex in p".into()));
    }
    if !(t > 0.0) || steps == 0 {
        return Err(Error::InvalidSpec("need t > 0 and steps >= 1".into()));
    }
    let coeff = match spec.momentum.term {
        MomentumTerm::Quadratic { coeff } => coeff,
        _ => return Err(Error::Unsupported("convex kinetic profile required".into())),
    };
    let p_max = 12.0f64;
    // Legendre transform by 1D maximization with one exact polish step
    let legendre = |v: f64| -> f64 {
        let mut best = f64::NEG_INFINITY;
        let mut best_p = 0.0;
        let n = 97;
        for i in 0..n {
            let p = -p_max + 2.0 * p_max * i as f64 / (n - 1) as f64;
            let val = p * v - 0.5 * coeff * p * p;
            if val > best {
                best = val;
                best_p = p;
            }
        }
        let p = (best_p + (v / coeff - best_p)).clamp(-p_max, p_max);
        p * v - 0.5 * coeff * p * p
    };
    let n_steps = if spec.is_x_independent() { 1 } else { steps };
    let s = t / n_steps as f64;
    let v_max = p_max * coeff.abs().max(1.0);
    let pad = v_max * t + 2.0 * dx;
    let glo = lo - pad;
    let n = (((hi + pad) - glo) / dx).ceil() as usize + 1;
    let xs: Vec<f64> = (0..n).map(|i| glo + dx * i as f64).collect();
    let mut u: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidSpec("initial datum not finite on the padded grid".into()));
    }
    let window = ((v_max * s) / dx).ceil() as isize + 1;
    for _ in 0..n_steps {
        if !spec.is_x_independent() {
            for (i, x) in xs.iter().enumerate() {
                u[i] -= 0.5 * s * potential_at(spec, omega, *x);
            }
        }
        let mut w = vec![f64::INFINITY; n];
        for i in 0..n as isize {
            let lo_j = (i - window).max(0) as usize;
            let hi_j = (i + window).min(n as isize - 1) as usize;
            let mut best = f64::INFINITY;
            for j in lo_j..=hi_j {
                let v = (xs[i as usize] - xs[j]) / s;
                let cand = u[j] + s * legendre(v);
                if cand < best {
                    best = cand;
                }
            }
            w[i as usize] = best;
        }
        u = w;
        if !spec.is_x_independent() {
            for (i, x) in xs.iter().enumerate() {
                u[i] -= 0.5 * s * potential_at(spec, omega, *x);
            }
        }
    }
    let keep: Vec<(f64, f64)> = xs
        .iter()
        .zip(u.iter())
        .filter(|(x, _)| **x >= lo - 1e-12 && **x <= hi + 1e-12)
        .map(|(x, v)| (*x, *v))
        .collect();
    Ok(UTable { xs: keep.iter().map(|r| r.0).collect(), u: keep.iter().map(|r| r.1).collect() })
}

/// `V(x) = H(x, 0) - h(0)` for the separable families.
fn potential_at(spec: &HamiltonianSpec, omega: &Omega, x: f64) -> f64 {
    let h0 = match spec.momentum.term {
        MomentumTerm::Quadratic { .. } | MomentumTerm::Linear { .. } => 0.0,
        MomentumTerm::DoubleWell { well, scale } => scale * well.powi(4),
        MomentumTerm::Tabulated(ref t) => t.eval(0.0),
    };
    spec.eval(omega, x, 0.0).h - h0
}

/// Classical effective Hamiltonian of the mechanical field `p^2/2 + V(x)`
/// with 1-periodic `V`: above the plateau, the level `lambda` solves
/// `int_0^1 sqrt(2 (lambda - V(s))) ds = |p|`; on the plateau, `max V`.
pub fn cell_problem_hbar(v: &dyn Fn(f64) -> f64, p: f64) -> f64 {
    let mut vmax = f64::NEG_INFINITY;
    for i in 0..=4096 {
        vmax = vmax.max(v(i as f64 / 4096.0));
    }
    let flux = |lambda: f64| -> f64 {
        adaptive_simpson(&|s| (2.0 * (lambda - v(s)).max(0.0)).sqrt(), 0.0, 1.0, 1e-11)
    };
    let p_abs = p.abs();
    if p_abs <= flux(vmax) {
        return vmax;
    }
    let mut lo = vmax;
    let mut hi = vmax + 1.0;
    while flux(hi) < p_abs {
        hi = vmax + 2.0 * (hi - vmax);
        if hi - vmax > 1e8 {
            break;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if flux(mid) < p_abs {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genfun::{build_iterated_gf, GfWindow};
    use crate::model::{CosTerm, MomentumProfile, Potential};

    #[test]
    fn negative_quadratic_birth_at_top() {
        let grid =
            FilteredGrid::sample(&[(-3.0, 3.0, 301)], &mut |c| -c[0] * c[0] + 0.3, -5.0, 5.0, 0)
                .unwrap();
        let c = persistence_c(&grid, ClassKind::Unit, 1).unwrap();
        assert!((c - 0.3).abs() < 1e-3, "birth {c}");
    }

    #[test]
    fn fiber_stabilized_min_and_max() {
        // S(x, xi) = f(x) - xi^2: c(1) = min f, c(mu) = max f
        let f = |x: f64| 0.4 * (2.0 * x).sin() + 0.1 * x;
        let mut sampler = |c: &[f64]| f(c[0]) - c[1] * c[1];
        let grid =
            FilteredGrid::sample(&[(-2.0, 2.0, 161), (-3.0, 3.0, 161)], &mut sampler, -6.0, 6.0, 1)
                .unwrap();
        let c1 = persistence_c(&grid, ClassKind::Unit, 1).unwrap();
        let cmu = persistence_c(&grid, ClassKind::Fundamental, 1).unwrap();
        let mut fmin = f64::INFINITY;
        let mut fmax = f64::NEG_INFINITY;
        for i in 0..1000 {
            let x = -2.0 + 4.0 * i as f64 / 999.0;
            fmin = fmin.min(f(x));
            fmax = fmax.max(f(x));
        }
        assert!((c1 - fmin).abs() < 5e-3, "c(1) = {c1} vs min f = {fmin}");
        assert!((cmu - fmax).abs() < 5e-3, "c(mu) = {cmu} vs max f = {fmax}");
    }

    #[test]
    fn mountain_pass_matches_sweep() {
        let b = 0.37;
        let s = |xi: f64| -((xi * xi - 1.0) * (xi * xi - 1.0)) + b * xi;
        let n = 4001;
        let grid = FilteredGrid::sample(&[(-3.0, 3.0, n)], &mut |c| s(c[0]), -30.0, 30.0, 0).unwrap();
        let c = persistence_c(&grid, ClassKind::Unit, 1).unwrap();
        // exhaustive sweep: the tails connect at the larger interior maximum
        let mut lo_idx = 0usize;
        let mut hi_idx = n - 1;
        let xat = |i: usize| -3.0 + 6.0 * i as f64 / (n - 1) as f64;
        while s(xat(lo_idx)) <= -30.0 {
            lo_idx += 1;
        }
        while s(xat(hi_idx)) <= -30.0 {
            hi_idx -= 1;
        }
        let mut barrier = f64::NEG_INFINITY;
        for i in lo_idx..=hi_idx {
            barrier = barrier.max(s(xat(i)));
        }
        assert!((c - barrier).abs() < 1e-3, "persistence {c} vs sweep {barrier}");
    }

    #[test]
    fn monotone_under_pointwise_increase() {
        let f = |x: f64, xi: f64| (x).cos() - xi * xi + 0.2 * (3.0 * xi).sin();
        let mut g1 = |c: &[f64]| f(c[0], c[1]);
        let mut g2 = |c: &[f64]| f(c[0], c[1]) + 0.25;
        let a =
            FilteredGrid::sample(&[(-2.0, 2.0, 101), (-3.0, 3.0, 141)], &mut g1, -6.0, 6.0, 1)
                .unwrap();
        let b =
            FilteredGrid::sample(&[(-2.0, 2.0, 101), (-3.0, 3.0, 141)], &mut g2, -5.75, 6.25, 1)
                .unwrap();
        let ca = persistence_c(&a, ClassKind::Unit, 1).unwrap();
        let cb = persistence_c(&b, ClassKind::Unit, 1).unwrap();
        assert!(cb >= ca, "filtration monotonicity violated: {ca} vs {cb}");
        assert!((cb - ca - 0.25).abs() < 1e-6);
    }

    #[test]
    fn brute_minmax_k1_and_free_k2() {
        let w = Omega::Torus(vec![0.0]);
        let free = HamiltonianSpec::kinetic(MomentumTerm::Quadratic { coeff: 1.0 }).unwrap();
        let win = GfWindow::new(-6.0, 6.0, -3.0, 3.0, 49, 49);
        let g1 = build_iterated_gf(&free, &w, 1, 0.5, &win).unwrap();
        let v = brute_minmax(&g1, 0.4, 1.1, 2.0, 41).unwrap();
        assert!((v - 0.5 * 0.5 * 1.1 * 1.1).abs() < 1e-6, "k=1 plain value {v}");

        let g2 = build_iterated_gf(&free, &w, 2, 0.5, &win).unwrap();
        let v2 = brute_minmax(&g2, 0.4, 1.1, 2.6, 141).unwrap();
        let expect = 0.5 * 0.5 * 1.1 * 1.1;
        assert!((v2 - expect).abs() < 2e-3, "k=2 free {v2} vs {expect}");
    }

    #[test]
    fn lax_oleinik_hopf_closed_form() {
        let spec = HamiltonianSpec::kinetic(MomentumTerm::Quadratic { coeff: 1.0 }).unwrap();
        let w = Omega::Torus(vec![]);
        let u = lax_oleinik(&spec, &w, &|x| 0.5 * x * x, 1.0, -1.0, 1.0, 0.002, 1).unwrap();
        for (x, v) in u.xs.iter().zip(u.u.iter()) {
            assert!((v - 0.25 * x * x).abs() < 1e-5, "u({x}) = {v}");
        }
        let uc = lax_oleinik(&spec, &w, &|_| 0.7, 0.8, -1.0, 1.0, 0.01, 1).unwrap();
        for v in &uc.u {
            assert!((v - 0.7).abs() < 1e-9);
        }
    }

    #[test]
    fn lax_oleinik_monotone_and_dp_identity() {
        let spec = HamiltonianSpec::new(
            MomentumProfile::bare(MomentumTerm::Quadratic { coeff: 1.0 }),
            Potential::Cosine(vec![CosTerm { amp: 0.5, freq: 1.0 }]),
        )
        .unwrap();
        let w = Omega::Torus(vec![0.0]);
        let f1 = |x: f64| (x).cos();
        let f2 = |x: f64| (x).cos() + 0.3;
        let u1 = lax_oleinik(&spec, &w, &f1, 0.4, -1.0, 1.0, 0.01, 40).unwrap();
        let u2 = lax_oleinik(&spec, &w, &f2, 0.4, -1.0, 1.0, 0.01, 40).unwrap();
        for (a, b) in u1.u.iter().zip(u2.u.iter()) {
            assert!(b >= a, "monotonicity violated");
        }
        let full = lax_oleinik(&spec, &w, &f1, 0.4, -1.0, 1.0, 0.005, 80).unwrap();
        let half = lax_oleinik(&spec, &w, &f1, 0.2, -4.0, 4.0, 0.005, 40).unwrap();
        let again = lax_oleinik(&spec, &w, &|x| half.eval(x), 0.2, -1.0, 1.0, 0.005, 40).unwrap();
        let mut worst: f64 = 0.0;
        for (x, v) in full.xs.iter().zip(full.u.iter()) {
            worst = worst.max((v - again.eval(*x)).abs());
        }
        assert!(worst < 5e-3, "semigroup defect {worst}");
    }

    #[test]
    fn cell_problem_pendulum_plateau() {
        let v = |s: f64| (std::f64::consts::TAU * s).cos();
        let edge = 4.0 / std::f64::consts::PI;
        assert!((cell_problem_hbar(&v, edge * 0.99) - 1.0).abs() < 1e-9);
        assert!(cell_problem_hbar(&v, edge * 1.05) > 1.0);
        let big = cell_problem_hbar(&v, 6.0);
        assert!((big - 18.0).abs() < 0.6, "H-bar(6) = {big}");
        assert!((cell_problem_hbar(&v, 1.7) - cell_problem_hbar(&v, -1.7)).abs() < 1e-9);
    }
}
