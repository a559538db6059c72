//! Torus-action arithmetic: density of the orbit closure, near-integer
//! Diophantine bases, and orbit equidistribution estimates.
//!
//! The density dichotomy is exact where the action matrix is exact: rational
//! entries are handled in rational arithmetic and quadratic irrationals
//! `(a + b sqrt(d)) / c` in the field they generate, so verdicts carry their
//! evidence. Floating entries get a lattice-reduction search plus a
//! tolerance, which can only ever return an obstruction or "inconclusive".

use crate::rng::Rng;
use crate::{Error, Result};

/// Exact or floating entry of the action matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActionEntry {
    /// `num / den`
    Rational { num: i64, den: i64 },
    /// `(a + b sqrt(d)) / c` with `d` square-free and positive.
    Quadratic { a: i64, b: i64, c: i64, d: i64 },
    Float(f64),
}

impl ActionEntry {
    pub fn golden() -> Self {
        ActionEntry::Quadratic { a: 1, b: 1, c: 2, d: 5 }
    }

    pub fn value(&self) -> f64 {
        match *self {
            ActionEntry::Rational { num, den } => num as f64 / den as f64,
            ActionEntry::Quadratic { a, b, c, d } => (a as f64 + b as f64 * (d as f64).sqrt()) / c as f64,
            ActionEntry::Float(v) => v,
        }
    }
}

/// The translation action `omega -> omega + A a` on `T^d`, `A: R^n -> R^d`.
#[derive(Debug, Clone)]
pub struct TorusAction {
    /// `d x n` matrix, row-major.
    pub rows: Vec<Vec<ActionEntry>>,
}

impl TorusAction {
    pub fn new(rows: Vec<Vec<ActionEntry>>) -> Result<Self> {
        let d = rows.len();
        if d == 0 || d > 4 {
            return Err(Error::InvalidSpec("torus dimension must be 1..=4".into()));
        }
        let n = rows[0].len();
        if n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidSpec("action matrix rows must share a length".into()));
        }
        for r in &rows {
            for e in r {
                if let ActionEntry::Rational { den, .. } = e {
                    if *den == 0 {
                        return Err(Error::InvalidSpec("zero denominator".into()));
                    }
                }
                if let ActionEntry::Quadratic { c, d, .. } = e {
                    if *c == 0 || *d <= 0 || is_square(*d) {
                        return Err(Error::InvalidSpec(
                            "quadratic entry needs c != 0 and a positive non-square d".into(),
                        ));
                    }
                }
            }
        }
        Ok(TorusAction { rows })
    }

    /// Column vector for `n = 1` convenience.
    pub fn column(entries: Vec<ActionEntry>) -> Result<Self> {
        TorusAction::new(entries.into_iter().map(|e| vec![e]).collect())
    }

    pub fn d(&self) -> usize {
        self.rows.len()
    }

    pub fn n(&self) -> usize {
        self.rows[0].len()
    }

    pub fn value(&self, r: usize, c: usize) -> f64 {
        self.rows[r][c].value()
    }

    fn all_rational(&self) -> bool {
        self.rows.iter().flatten().all(|e| matches!(e, ActionEntry::Rational { .. }))
    }

    /// Shared square-free surd of all entries, when every entry lies in one
    /// real quadratic field (rationals count as surd coefficient zero).
    fn common_surd(&self) -> Option<i64> {
        let mut surd = None;
        for e in self.rows.iter().flatten() {
            match e {
                ActionEntry::Rational { .. } => {}
                ActionEntry::Quadratic { d, b, .. } => {
                    if *b != 0 {
                        match surd {
                            None => surd = Some(*d),
                            Some(s) if s == *d => {}
                            _ => return None,
                        }
                    }
                }
                ActionEntry::Float(_) => return None,
            }
        }
        surd.or(Some(0))
    }
}

fn is_square(d: i64) -> bool {
    let r = (d as f64).sqrt().round() as i64;
    r * r == d
}

fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// Density verdict with its evidence.
#[derive(Debug, Clone, PartialEq)]
pub enum DensityVerdict {
    Dense { certificate: String },
    Obstructed { xi: Vec<i64> },
    Inconclusive,
}

/// Decide whether the image of the action is dense on the torus: dense holds
/// exactly when no nonzero integer vector annihilates every column.
pub fn check_density(action: &TorusAction, search_bound: i64) -> Result<DensityVerdict> {
    if search_bound < 1 {
        return Err(Error::InvalidSpec("search bound must be >= 1".into()));
    }
    if let Some(surd) = action.common_surd() {
        // exact: xi . column = 0 in Q(sqrt(surd)) splits into the rational
        // and surd coordinates, an integer kernel problem
        let d = action.d();
        let n = action.n();
        let mut rows: Vec<Vec<i64>> = Vec::new(); // constraints as rows over xi
        for col in 0..n {
            // common denominator of the column
            let mut denom: i64 = 1;
            for r in 0..d {
                let den = match action.rows[r][col] {
                    ActionEntry::Rational { den, .. } => den.abs(),
                    ActionEntry::Quadratic { c, .. } => c.abs(),
                    ActionEntry::Float(_) => unreachable!(),
                };
                denom = denom / gcd(denom, den) * den;
            }
            let mut rat = vec![0i64; d];
            let mut sur = vec![0i64; d];
            for r in 0..d {
                match action.rows[r][col] {
                    ActionEntry::Rational { num, den } => {
                        rat[r] = num * (denom / den);
                    }
                    ActionEntry::Quadratic { a, b, c, .. } => {
                        rat[r] = a * (denom / c);
                        sur[r] = b * (denom / c);
                    }
                    ActionEntry::Float(_) => unreachable!(),
                }
            }
            rows.push(rat);
            if surd != 0 {
                rows.push(sur);
            }
        }
        return Ok(match integer_kernel_vector(&rows, action.d()) {
            Some(xi) => DensityVerdict::Obstructed { xi },
            None => DensityVerdict::Dense {
                certificate: if surd == 0 {
                    "rational matrix of full rank; any annihilator clears to an integer one".into()
                } else {
                    format!(
                        "entries lie in Q(sqrt({surd})) with sqrt({surd}) irrational; the rational and surd constraint blocks have trivial joint integer kernel"
                    )
                },
            },
        });
    }
    // floating entries: lattice-reduced relation search up to the bound
    if let Some(xi) = float_relation_search(action, search_bound) {
        return Ok(DensityVerdict::Obstructed { xi });
    }
    // full numeric rank with n >= d leaves no orthogonal direction at all
    if action.n() >= action.d() && numeric_rank(action) == action.d() {
        return Ok(DensityVerdict::Dense {
            certificate: "numerically full rank with n >= d".into(),
        });
    }
    Ok(DensityVerdict::Inconclusive)
}

/// A nonzero integer vector xi with `rows . xi = 0`, or None when the kernel
/// is trivial. Exact fraction-free elimination; entries stay small for the
/// instances in scope (d <= 4).
fn integer_kernel_vector(rows: &[Vec<i64>], d: usize) -> Option<Vec<i64>> {
    // rational kernel via fraction-free Gauss on a copy
    let mut m: Vec<Vec<i128>> =
        rows.iter().map(|r| r.iter().map(|&v| v as i128).collect()).collect();
    let nrows = m.len();
    let mut pivot_col: Vec<Option<usize>> = Vec::new();
    let mut rank_cols: Vec<usize> = Vec::new();
    let mut r = 0usize;
    for c in 0..d {
        let mut piv = None;
        for rr in r..nrows {
            if m[rr][c] != 0 {
                piv = Some(rr);
                break;
            }
        }
        let Some(p) = piv else {
            pivot_col.push(None);
            continue;
        };
        m.swap(r, p);
        for rr in 0..nrows {
            if rr != r && m[rr][c] != 0 {
                let (a, b) = (m[r][c], m[rr][c]);
                for cc in 0..d {
                    m[rr][cc] = m[rr][cc] * a - m[r][cc] * b;
                }
                // keep entries small
                let g = m[rr].iter().fold(0i128, |g, &v| {
                    let (mut g, mut v) = (g.abs(), v.abs());
                    while v != 0 {
                        let t = g % v;
                        g = v;
                        v = t;
                    }
                    g
                });
                if g > 1 {
                    for cc in 0..d {
                        m[rr][cc] /= g;
                    }
                }
            }
        }
        rank_cols.push(c);
        r += 1;
        if r == nrows {
            break;
        }
    }
    if rank_cols.len() == d {
        return None;
    }
    // a free column exists: back-substitute a kernel vector
    let free = (0..d).find(|c| !rank_cols.contains(c)).unwrap();
    let mut x = vec![0i128; d];
    x[free] = 1;
    for (ri, &pc) in rank_cols.iter().enumerate().rev() {
        // row ri: sum m[ri][c] x[c] = 0 with pivot at pc
        let mut acc: i128 = 0;
        for c in 0..d {
            if c != pc {
                acc += m[ri][c] * x[c];
            }
        }
        if m[ri][pc] == 0 {
            continue;
        }
        // scale to keep integrality
        let g = {
            let (mut a, mut b) = (acc.abs(), m[ri][pc].abs());
            while b != 0 {
                let t = a % b;
                a = b;
                b = t;
            }
            if a == 0 {
                1
            } else {
                a
            }
        };
        let scale = (m[ri][pc] / gcd128(m[ri][pc], g)).abs().max(1);
        let _ = scale;
        // multiply the whole solution so the division is exact
        let lcm = m[ri][pc].abs() / gcd128(m[ri][pc].abs(), acc.abs().max(1)).max(1);
        let mult = if acc % m[ri][pc] == 0 { 1 } else { lcm.max(1) };
        if mult != 1 {
            for xv in x.iter_mut() {
                *xv *= mult;
            }
            acc *= mult;
        }
        x[pc] = -acc / m[ri][pc];
    }
    // normalize
    let g = x.iter().fold(0i128, |g, &v| gcd128(g, v.abs()));
    let g = g.max(1);
    let out: Vec<i64> = x.iter().map(|&v| (v / g) as i64).collect();
    if out.iter().all(|&v| v == 0) {
        None
    } else {
        Some(out)
    }
}

fn gcd128(a: i128, b: i128) -> i128 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

fn numeric_rank(action: &TorusAction) -> usize {
    // Gram determinant sweep on the rows
    let d = action.d();
    let n = action.n();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for r in 0..d {
        let mut v: Vec<f64> = (0..n).map(|c| action.value(r, c)).collect();
        for b in &basis {
            let dot: f64 = v.iter().zip(b.iter()).map(|(a, b)| a * b).sum();
            let nb: f64 = b.iter().map(|x| x * x).sum();
            for (vi, bi) in v.iter_mut().zip(b.iter()) {
                *vi -= dot / nb * bi;
            }
        }
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 {
            basis.push(v);
        }
    }
    basis.len()
}

/// Search for an integer annihilator with infinity norm at most `bound`,
/// pruned by lattice reduction of `[I | N A]`.
fn float_relation_search(action: &TorusAction, bound: i64) -> Option<Vec<i64>> {
    let d = action.d();
    let n = action.n();
    let scale = 1e10;
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for j in 0..d {
        let mut row = vec![0.0; d + n];
        row[j] = 1.0;
        for c in 0..n {
            row[d + c] = scale * action.value(j, c);
        }
        basis.push(row);
    }
    lll_reduce(&mut basis, 0.75);
    // short reduced rows and small combinations are relation candidates
    let mut candidates: Vec<Vec<i64>> = Vec::new();
    for row in &basis {
        let xi: Vec<i64> = row[..d].iter().map(|v| v.round() as i64).collect();
        candidates.push(xi);
    }
    for i in 0..basis.len() {
        for j in 0..basis.len() {
            if i == j {
                continue;
            }
            let xi: Vec<i64> = (0..d)
                .map(|c| (basis[i][c] + basis[j][c]).round() as i64)
                .collect();
            candidates.push(xi);
        }
    }
    for xi in candidates {
        if xi.iter().all(|&v| v == 0) || xi.iter().any(|&v| v.abs() > bound) {
            continue;
        }
        let mut ok = true;
        for c in 0..n {
            let s: f64 = (0..d).map(|r| xi[r] as f64 * action.value(r, c)).sum();
            if s.abs() > 1e-12 {
                ok = false;
                break;
            }
        }
        if ok {
            return Some(xi);
        }
    }
    None
}

/// Plain floating LLL with Lovasz parameter `delta`, basis as rows.
fn lll_reduce(b: &mut [Vec<f64>], delta: f64) {
    let n = b.len();
    let m = b[0].len();
    let mut mu = vec![vec![0.0; n]; n];
    let mut star = vec![vec![0.0; m]; n];
    let mut norm2 = vec![0.0; n];
    let recompute = |b: &[Vec<f64>],
                     mu: &mut Vec<Vec<f64>>,
                     star: &mut Vec<Vec<f64>>,
                     norm2: &mut Vec<f64>| {
        for i in 0..n {
            star[i].clone_from_slice(&b[i]);
            for j in 0..i {
                let num: f64 = b[i].iter().zip(star[j].iter()).map(|(x, y)| x * y).sum();
                mu[i][j] = if norm2[j] == 0.0 { 0.0 } else { num / norm2[j] };
                for t in 0..m {
                    star[i][t] -= mu[i][j] * star[j][t];
                }
            }
            norm2[i] = star[i].iter().map(|x| x * x).sum();
        }
    };
    recompute(b, &mut mu, &mut star, &mut norm2);
    let mut k = 1usize;
    let mut guard = 0usize;
    while k < n && guard < 10_000 {
        guard += 1;
        for j in (0..k).rev() {
            let r = mu[k][j].round();
            if r != 0.0 {
                for t in 0..m {
                    let bj = b[j][t];
                    b[k][t] -= r * bj;
                }
            }
        }
        recompute(b, &mut mu, &mut star, &mut norm2);
        if norm2[k] + mu[k][k - 1].powi(2) * norm2[k - 1] >= delta * norm2[k - 1] {
            k += 1;
        } else {
            b.swap(k, k - 1);
            recompute(b, &mut mu, &mut star, &mut norm2);
            if k > 1 {
                k -= 1;
            }
        }
    }
}

/// A near-integer image pair: `|A a - nu| <= eps` with `nu` integral.
#[derive(Debug, Clone)]
pub struct BasisPair {
    pub a: Vec<f64>,
    pub nu: Vec<i64>,
    pub error: f64,
}

/// Find `d` pairs whose integer images form a basis of `R^d` (nonzero
/// determinant, not necessarily unimodular).
pub fn diophantine_basis(
    action: &TorusAction,
    eps: f64,
    height_bound: i64,
) -> Result<Vec<BasisPair>> {
    match check_density(action, height_bound)? {
        DensityVerdict::Obstructed { xi } => {
            return Err(Error::Unsupported(format!(
                "diophantine basis needs a dense action; obstructed by {xi:?}"
            )))
        }
        // floats can only ever be inconclusive; a full-rank basis found
        // below the height bound is itself the near-density witness
        DensityVerdict::Dense { .. } | DensityVerdict::Inconclusive => {}
    }
    let d = action.d();
    let n = action.n();
    let mut chosen: Vec<BasisPair> = Vec::new();
    let mut mat: Vec<Vec<i64>> = Vec::new();
    let mut try_add = |a: Vec<f64>, chosen: &mut Vec<BasisPair>, mat: &mut Vec<Vec<i64>>| {
        let img: Vec<f64> = (0..d)
            .map(|r| (0..n).map(|c| action.value(r, c) * a[c]).sum())
            .collect();
        let nu: Vec<i64> = img.iter().map(|v| v.round() as i64).collect();
        let err = img
            .iter()
            .zip(nu.iter())
            .map(|(v, z)| (v - *z as f64).abs())
            .fold(0.0f64, f64::max);
        if err > eps || nu.iter().all(|&z| z == 0) {
            return false;
        }
        let mut trial = mat.clone();
        trial.push(nu.clone());
        if integer_rank(&trial) > mat.len() {
            mat.push(nu.clone());
            chosen.push(BasisPair { a, nu, error: err });
            true
        } else {
            false
        }
    };
    // axis ladders catch the exact cases (identity blocks, rational rows)
    for h in 1..=height_bound.min(1_000_000) {
        for axis in 0..n {
            let mut a = vec![0.0; n];
            a[axis] = h as f64;
            try_add(a, &mut chosen, &mut mat);
            if chosen.len() == d {
                return Ok(chosen);
            }
        }
        // past small heights, jump along lattice-reduced approximants
        if h > 4096 {
            break;
        }
    }
    if n == 1 {
        // simultaneous approximation ladder: denominators from the reduced
        // lattice [1, N alpha | N I]-style search over growing N
        let alphas: Vec<f64> = (0..d).map(|r| action.value(r, 0)).collect();
        let mut scale = 1e4;
        while scale < 1e14 {
            let mut basis: Vec<Vec<f64>> = Vec::new();
            let mut row0 = vec![1.0];
            row0.extend(alphas.iter().map(|al| scale * al));
            basis.push(row0);
            for j in 0..d {
                let mut row = vec![0.0; d + 1];
                row[j + 1] = scale;
                basis.push(row);
            }
            lll_reduce(&mut basis, 0.75);
            for row in &basis {
                let q = row[0].round();
                if q.abs() < 0.5 || q.abs() as i64 > height_bound {
                    continue;
                }
                let q = q.abs();
                for mult in 1..=8i64 {
                    let cand = q * mult as f64;
                    if cand as i64 > height_bound {
                        break;
                    }
                    try_add(vec![cand], &mut chosen, &mut mat);
                    if chosen.len() == d {
                        return Ok(chosen);
                    }
                }
            }
            scale *= 100.0;
        }
    }
    Err(Error::SearchExhausted(format!(
        "found {} of {} independent near-integer images below height {height_bound}",
        chosen.len(),
        d
    )))
}

fn integer_rank(rows: &[Vec<i64>]) -> usize {
    if rows.is_empty() {
        return 0;
    }
    let d = rows[0].len();
    let mut m: Vec<Vec<i128>> =
        rows.iter().map(|r| r.iter().map(|&v| v as i128).collect()).collect();
    let mut rank = 0usize;
    for c in 0..d {
        let mut piv = None;
        for r in rank..m.len() {
            if m[r][c] != 0 {
                piv = Some(r);
                break;
            }
        }
        let Some(p) = piv else { continue };
        m.swap(rank, p);
        for r in 0..m.len() {
            if r != rank && m[r][c] != 0 {
                let (a, b) = (m[rank][c], m[r][c]);
                for cc in 0..d {
                    m[r][cc] = m[r][cc] * a - m[rank][cc] * b;
                }
            }
        }
        rank += 1;
        if rank == m.len() {
            break;
        }
    }
    rank
}

/// Orbit sample on the torus with a star-discrepancy estimate.
pub fn orbit_sample(
    action: &TorusAction,
    omega0: &[f64],
    times: &[f64],
) -> Result<(Vec<Vec<f64>>, f64)> {
    let d = action.d();
    let n = action.n();
    if omega0.len() != d {
        return Err(Error::InvalidSpec("omega0 dimension mismatch".into()));
    }
    let points: Vec<Vec<f64>> = times
        .iter()
        .map(|&t| {
            (0..d)
                .map(|r| {
                    let v = omega0[r] + (0..n).map(|c| action.value(r, c) * t).sum::<f64>();
                    v - v.floor()
                })
                .collect()
        })
        .collect();
    let disc = star_discrepancy(&points, d);
    Ok((points, disc))
}

/// Box-counting star-discrepancy estimator (exact in one dimension).
pub fn star_discrepancy(points: &[Vec<f64>], d: usize) -> f64 {
    let n = points.len();
    if n == 0 {
        return 1.0;
    }
    if d == 1 {
        let mut xs: Vec<f64> = points.iter().map(|p| p[0]).collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut worst: f64 = 0.0;
        for (i, x) in xs.iter().enumerate() {
            worst = worst.max(((i + 1) as f64 / n as f64 - x).abs());
            worst = worst.max((x - i as f64 / n as f64).abs());
        }
        return worst;
    }
    let g = match d {
        2 => 48,
        3 => 12,
        _ => 6,
    };
    let mut worst: f64 = 0.0;
    let total = (g as usize).pow(d as u32);
    for cell in 0..total {
        let mut rem = cell;
        let mut corner = vec![0.0; d];
        let mut vol = 1.0;
        for a in 0..d {
            let i = rem % g as usize;
            rem /= g as usize;
            corner[a] = (i + 1) as f64 / g as f64;
            vol *= corner[a];
        }
        let count = points
            .iter()
            .filter(|p| p.iter().zip(corner.iter()).all(|(x, c)| x < c))
            .count();
        worst = worst.max((count as f64 / n as f64 - vol).abs());
    }
    worst
}

/// Equispaced orbit times for sampling.
pub fn equispaced_times(count: usize, dt: f64) -> Vec<f64> {
    (0..count).map(|i| i as f64 * dt).collect()
}

/// Deterministic random action with float entries, for search harnesses.
pub fn random_float_action(d: usize, seed: u64) -> TorusAction {
    let mut rng = Rng::stream(seed, 0xD107);
    let rows = (0..d)
        .map(|_| vec![ActionEntry::Float(rng.uniform(0.1, 1.9))])
        .collect();
    TorusAction { rows }
}
