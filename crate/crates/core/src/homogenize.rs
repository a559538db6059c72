//! Effective Hamiltonian estimation and Cauchy-problem homogenization.
//!
//! `h_k(p)` is the spectral value of the `rho_{1/k}`-rescaled time-k flow
//! against the affine section of slope `p`: the affine front is evolved for
//! time `k`, rescaled, reduced by the affine baseline, and the window value
//! `c(mu_U, G_p, L_k) = -c(1_U, L_k, G_p)` is read off the selector. For
//! unit-periodic fields one initial cell is integrated and tiled, which keeps
//! the cost independent of the window.
//!
//! The homogenized solution is computed with the same front engine driven by
//! the exact shear of the tabulated effective profile, so no second solver
//! enters the comparison `u^eps -> u-bar`.

use crate::front::{
    evolve_front, initial_front, Advancer, FrontParams, InitialDatum, LagrangianFront, Vertex,
};
use crate::interp::CubicSpline;
use crate::model::{Ensemble, HamiltonianSpec, Omega};
use crate::oracle::UTable;
use crate::selector::{graph_selector_with, SelectorMode};
use crate::{Error, Result};

/// Tunables for the effective-Hamiltonian pipeline.
#[derive(Debug, Clone)]
pub struct HkOptions {
    pub tol: f64,
    pub front: FrontParams,
    /// Half-width of the window U in rescaled coordinates.
    pub window: f64,
    /// Selector grid step in rescaled coordinates.
    pub grid_step: f64,
    /// Extra rescaled margin beyond the certified displacement.
    pub pad: f64,
    /// U-plateau detection threshold (value change when U grows by 50%).
    pub plateau_tol: f64,
}

impl Default for HkOptions {
    fn default() -> Self {
        HkOptions {
            tol: 1e-7,
            front: FrontParams::default().with_h_max(2e-2),
            window: 1.0,
            grid_step: 2e-3,
            pad: 0.5,
            plateau_tol: 1e-3,
        }
    }
}

/// Selector algorithm for a spec's fronts: the exact envelope where the
/// generator's convexity certifies it, event continuation otherwise.
pub fn selector_mode_for(spec: &HamiltonianSpec) -> SelectorMode {
    if spec.is_effectively_convex() {
        SelectorMode::EnvelopeConvex
    } else if spec.is_effectively_concave() {
        SelectorMode::EnvelopeConcave
    } else {
        SelectorMode::Continuation
    }
}

/// Per-unit-time displacement bound for fronts launched near slope `p_ref`:
/// the certified momentum Lipschitz bound when stored, otherwise a scan of
/// `|dH/dp|` over the energy shell reachable from the affine section.
fn displacement_bound(spec: &HamiltonianSpec, omega: &Omega, p_ref: f64) -> f64 {
    if let Some(c) = spec.lipschitz.sup_dp {
        return c;
    }
    // energy reachable from the section bounds the momentum excursion
    let mut e0 = f64::NEG_INFINITY;
    for i in 0..=64 {
        let x = i as f64 / 64.0 * 4.0 - 2.0;
        e0 = e0.max(spec.eval(omega, x, p_ref).h);
    }
    let mut p_bound = p_ref.abs() + 1.0;
    // widen until the shell is enclosed
    for _ in 0..64 {
        let mut min_h = f64::INFINITY;
        for i in 0..=32 {
            let x = i as f64 / 32.0 * 4.0 - 2.0;
            min_h = min_h.min(spec.eval(omega, x, p_bound).h.min(spec.eval(omega, x, -p_bound).h));
        }
        if min_h > e0 + 1.0 {
            break;
        }
        p_bound += 0.5;
    }
    let mut c: f64 = 0.0;
    for i in 0..=64 {
        for j in 0..=128 {
            let x = i as f64 / 64.0 * 4.0 - 2.0;
            let p = -p_bound + 2.0 * p_bound * j as f64 / 128.0;
            c = c.max(spec.eval(omega, x, p).hp.abs());
        }
    }
    1.1 * c + 0.1
}

/// One `h_k` evaluation with its window trace.
#[derive(Debug, Clone)]
pub struct HkValue {
    pub value: f64,
    /// `(window_half_width, value)` pairs used for the plateau check.
    pub window_trace: Vec<(f64, f64)>,
    pub plateau: bool,
}

/// Evolve the affine front of slope `p0` for time `k` and rescale by `k`.
///
/// Unit-periodic fields evolve a single cell and tile it; the seam between
/// copies is snapped onto the exact period shift and must agree with the
/// integrated endpoint to integration accuracy.
pub fn rescaled_affine_front(
    spec: &HamiltonianSpec,
    omega: &Omega,
    k: usize,
    eta: f64,
    p0: f64,
    reach: f64,
    opts: &HkOptions,
) -> Result<LagrangianFront> {
    let kf = k as f64;
    let t_total = kf * eta;
    let copies = (reach * kf).ceil() as i64 + 1;
    if spec.is_unit_periodic() {
        let cell = initial_front(&InitialDatum::Affine { p0 }, 0.0, 1.0, &opts.front)?;
        let mut evolved = evolve_front(
            &cell,
            &Advancer::Flow { spec, omega, t: t_total, tol: opts.tol },
            &opts.front,
        )?;
        // snap the seam: the image of x0 = 1 is the image of x0 = 0 shifted
        // by one period
        let first = evolved.verts[0];
        let last = *evolved.verts.last().unwrap();
        let ideal = Vertex { x: first.x + 1.0, p: first.p, a: first.a + p0 };
        let gap = (last.x - ideal.x).abs() + (last.p - ideal.p).abs() + (last.a - ideal.a).abs();
        if gap > 1e-3 {
            return Err(Error::InvalidSpec(format!(
                "periodic tile seam mismatch {gap}; lower the tolerance"
            )));
        }
        *evolved.verts.last_mut().unwrap() = ideal;
        let n = evolved.verts.len();
        let mut verts = Vec::with_capacity((2 * copies as usize + 1) * n);
        for j in -copies..=copies {
            let start = if j == -copies { 0 } else { 1 };
            for v in &evolved.verts[start..n] {
                verts.push(Vertex { x: v.x + j as f64, p: v.p, a: v.a + j as f64 * p0 });
            }
        }
        // replicate the cell's cuts into every copy
        let stride = n - 1;
        let mut cuts = Vec::with_capacity(evolved.cuts.len() * (2 * copies as usize + 1));
        for (c, j) in (0..).zip(-copies..=copies) {
            let base = (c as usize) * stride;
            for &i in &evolved.cuts {
                cuts.push(base + i);
            }
            let _ = j;
        }
        cuts.sort_unstable();
        let tiled = LagrangianFront {
            verts,
            reversed: evolved.reversed,
            chirality: evolved.chirality,
            inserted: evolved.inserted,
            cuts,
        };
        tiled.rescale(kf)
    } else {
        let span = copies as f64;
        let f0 = initial_front(&InitialDatum::Affine { p0 }, -span, span, &opts.front)?;
        let evolved = evolve_front(
            &f0,
            &Advancer::Flow { spec, omega, t: t_total, tol: opts.tol },
            &opts.front,
        )?;
        evolved.rescale(kf)
    }
}

/// The spectral value `h_{k,U}(p0)` over the window `U` centered at the
/// origin. The value is reported for the spec as given (truncation offsets
/// are NOT compensated here).
pub fn h_k(
    spec: &HamiltonianSpec,
    omega: &Omega,
    k: usize,
    p0: f64,
    opts: &HkOptions,
) -> Result<HkValue> {
    if k == 0 {
        return Err(Error::InvalidSpec("k must be >= 1".into()));
    }
    let reach = 1.5 * opts.window + displacement_bound(spec, omega, p0) + opts.pad;
    let front = rescaled_affine_front(spec, omega, k, 1.0, p0, reach, opts)?;
    let baseline = move |x: f64| (p0 * x, p0);
    let reduced = front.subtract_graph(&baseline);
    let mode = selector_mode_for(spec);
    let mut trace = Vec::new();
    for w in [opts.window, 1.5 * opts.window] {
        let prof = graph_selector_with(&reduced, -w, w, opts.grid_step, mode)?;
        // c(mu_U, G, L) = -c(1_U, L, G) = -min_U u_{L - G}
        trace.push((w, -prof.min()));
    }
    let value = trace[0].1;
    let plateau = (trace[1].1 - trace[0].1).abs() <= opts.plateau_tol;
    Ok(HkValue { value, window_trace: trace, plateau })
}

/// Effective-Hamiltonian curve with convergence and spread diagnostics.
#[derive(Debug, Clone)]
pub struct EffHamCurve {
    pub p_grid: Vec<f64>,
    /// `values[s][ki][pi]`: raw `h_k` per sample, schedule point, momentum.
    pub values: Vec<Vec<Vec<f64>>>,
    pub schedule: Vec<usize>,
    /// Richardson-extrapolated estimate per momentum, with the spec's
    /// truncation offset added back.
    pub hbar: Vec<f64>,
    /// Raw extrapolated values (no offset).
    pub hbar_raw: Vec<f64>,
    /// Sample standard deviation at the last schedule point.
    pub omega_spread: Vec<f64>,
    /// Cauchy residuals `|h_{2k} - h_k|` at the last step, per momentum.
    pub cauchy_residual: Vec<f64>,
    pub plateau_flags: Vec<bool>,
    /// Certified discrete Lipschitz constant for the h_k curves.
    pub lipschitz_bound: f64,
}

/// Estimate the effective Hamiltonian over a momentum grid.
#[allow(clippy::too_many_arguments)]
pub fn effective_hamiltonian(
    spec: &HamiltonianSpec,
    ensemble: &Ensemble,
    seed: u64,
    samples: usize,
    schedule: &[usize],
    p_grid: &[f64],
    opts: &HkOptions,
    workers: usize,
) -> Result<EffHamCurve> {
    if schedule.is_empty() || p_grid.is_empty() {
        return Err(Error::InvalidSpec("schedule and p-grid must be nonempty".into()));
    }
    let omegas = ensemble.sample(seed, samples)?;
    let mut tasks = Vec::new();
    for (s, w) in omegas.iter().enumerate() {
        for (ki, k) in schedule.iter().enumerate() {
            for (pi, p) in p_grid.iter().enumerate() {
                tasks.push((s, ki, pi, w.clone(), *k, *p));
            }
        }
    }
    let results = parallel_map(&tasks, workers, |(_, _, _, w, k, p)| h_k(spec, w, *k, *p, opts));
    let mut values = vec![vec![vec![f64::NAN; p_grid.len()]; schedule.len()]; samples];
    let mut plateau_flags = vec![true; p_grid.len()];
    for (task, res) in tasks.iter().zip(results.into_iter()) {
        let hk = res?;
        values[task.0][task.1][task.2] = hk.value;
        if !hk.plateau {
            plateau_flags[task.2] = false;
        }
    }
    let mean_at = |ki: usize, pi: usize, values: &Vec<Vec<Vec<f64>>>| -> f64 {
        values.iter().map(|s| s[ki][pi]).sum::<f64>() / samples as f64
    };
    let last = schedule.len() - 1;
    let mut hbar_raw = Vec::with_capacity(p_grid.len());
    let mut cauchy = Vec::with_capacity(p_grid.len());
    for pi in 0..p_grid.len() {
        let tail: Vec<f64> = (0..schedule.len()).map(|ki| mean_at(ki, pi, &values)).collect();
        hbar_raw.push(richardson(schedule, &tail));
        cauchy.push(if schedule.len() >= 2 { (tail[last] - tail[last - 1]).abs() } else { 0.0 });
    }
    let mut spread = Vec::with_capacity(p_grid.len());
    for pi in 0..p_grid.len() {
        let m = mean_at(last, pi, &values);
        let var = values.iter().map(|s| (s[last][pi] - m).powi(2)).sum::<f64>()
            / (samples.max(2) - 1) as f64;
        spread.push(var.sqrt());
    }
    let p_ref = p_grid.iter().cloned().fold(0.0f64, |m, p| m.max(p.abs()));
    let disp = displacement_bound(spec, &omegas[0], p_ref);
    let hbar: Vec<f64> = hbar_raw.iter().map(|v| v + spec.energy_offset).collect();
    Ok(EffHamCurve {
        p_grid: p_grid.to_vec(),
        values,
        schedule: schedule.to_vec(),
        hbar,
        hbar_raw,
        omega_spread: spread,
        cauchy_residual: cauchy,
        plateau_flags,
        lipschitz_bound: disp,
    })
}

/// Richardson extrapolation in `1/k` on the last points of the schedule.
fn richardson(schedule: &[usize], values: &[f64]) -> f64 {
    let n = values.len();
    if n == 1 {
        return values[0];
    }
    if n >= 3 {
        let (k0, k1, k2) =
            (schedule[n - 3] as f64, schedule[n - 2] as f64, schedule[n - 1] as f64);
        if (k1 / k0 - 2.0).abs() < 1e-9 && (k2 / k1 - 2.0).abs() < 1e-9 {
            return (8.0 * values[n - 1] - 6.0 * values[n - 2] + values[n - 3]) / 3.0;
        }
    }
    let (ka, kb) = (schedule[n - 2] as f64, schedule[n - 1] as f64);
    let w = kb / (kb - ka);
    values[n - 1] * w + values[n - 2] * (1.0 - w)
}

impl EffHamCurve {
    /// Spline through the raw curve, for driving the homogenized flow.
    pub fn spline_raw(&self) -> Result<CubicSpline> {
        let dp = self.p_grid[1] - self.p_grid[0];
        CubicSpline::new(self.p_grid[0], dp, self.hbar_raw.clone())
    }

    /// Worst excess of `|h_k(p) - h_k(p')|` over `lipschitz_bound |p - p'|`.
    pub fn lipschitz_violation(&self) -> f64 {
        let last = self.schedule.len() - 1;
        let mut worst: f64 = 0.0;
        for s in &self.values {
            for w in s[last].windows(2) {
                let dp = self.p_grid[1] - self.p_grid[0];
                let excess = (w[1] - w[0]).abs() - self.lipschitz_bound * dp;
                worst = worst.max(excess);
            }
        }
        worst
    }
}

/// Variational solution of the Cauchy problem at scale `eps`, through the
/// front engine and the graph selector.
#[allow(clippy::too_many_arguments)]
pub fn solve_cauchy_variational(
    spec: &HamiltonianSpec,
    omega: &Omega,
    eps: f64,
    f: &dyn Fn(f64) -> (f64, f64),
    t: f64,
    lo: f64,
    hi: f64,
    grid_step: f64,
    opts: &HkOptions,
) -> Result<UTable> {
    if t < 0.0 {
        return Err(Error::InvalidSpec("t must be >= 0".into()));
    }
    let n = ((hi - lo) / grid_step).round() as usize + 1;
    if t == 0.0 {
        let xs: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
        let u = xs.iter().map(|&x| f(x).0).collect();
        return Ok(UTable { xs, u });
    }
    let slope = (0..33)
        .map(|i| f(lo + (hi - lo) * i as f64 / 32.0).1.abs())
        .fold(0.0f64, f64::max);
    let pad = displacement_bound(spec, omega, slope) * t + 0.5;
    let front0 = initial_front(&InitialDatum::Graph(f), lo - pad, hi + pad, &opts.front)?;
    let adv = Advancer::ScaledFlow { spec, omega, eps, t, tol: opts.tol };
    let front = evolve_front(&front0, &adv, &opts.front)?;
    let prof = graph_selector_with(&front, lo, hi, grid_step, selector_mode_for(spec))
        .map_err(|e| wrap_context(e, eps, t))?;
    Ok(UTable { xs: prof.xs, u: prof.u })
}

fn wrap_context(e: Error, eps: f64, t: f64) -> Error {
    match e {
        Error::SelectorAmbiguity { x, detail } => {
            Error::SelectorAmbiguity { x, detail: format!("{detail} (eps = {eps}, t = {t})") }
        }
        other => other,
    }
}

/// Homogenized solution: the same front engine driven by the exact shear of
/// the tabulated effective profile.
pub fn solve_cauchy_effective(
    hbar: &CubicSpline,
    f: &dyn Fn(f64) -> (f64, f64),
    t: f64,
    lo: f64,
    hi: f64,
    grid_step: f64,
    opts: &HkOptions,
) -> Result<UTable> {
    let pad = 6.0 * t + 0.5;
    let front0 = initial_front(&InitialDatum::Graph(f), lo - pad, hi + pad, &opts.front)?;
    let shear = move |p: f64| (hbar.eval(p), hbar.deriv(p));
    let front = evolve_front(&front0, &Advancer::Shear { h: &shear, t }, &opts.front)?;
    let prof = graph_selector_with(&front, lo, hi, grid_step, SelectorMode::EnvelopeConvex)?;
    Ok(UTable { xs: prof.xs, u: prof.u })
}

/// n-fold composition of the time-(t/n) variational step, re-reading the
/// front from the selector graph between steps (finite-difference slopes).
#[allow(clippy::too_many_arguments)]
pub fn iterate_variational(
    spec: &HamiltonianSpec,
    omega: &Omega,
    f: &dyn Fn(f64) -> (f64, f64),
    t: f64,
    n: usize,
    lo: f64,
    hi: f64,
    grid_step: f64,
    opts: &HkOptions,
) -> Result<UTable> {
    if n == 0 {
        return Err(Error::InvalidSpec("n must be >= 1".into()));
    }
    if n == 1 {
        return solve_cauchy_variational(spec, omega, 1.0, f, t, lo, hi, grid_step, opts);
    }
    let slope = (0..33)
        .map(|i| f(lo + (hi - lo) * i as f64 / 32.0).1.abs())
        .fold(0.0f64, f64::max);
    let pad_total = displacement_bound(spec, omega, slope) * t + 1.0;
    let step_t = t / n as f64;
    let mut table: Option<(CubicSpline, f64, f64)> = None;
    for s in 0..n {
        let frac = (n - s) as f64 / n as f64;
        let cur_lo = lo - pad_total * frac;
        let cur_hi = hi + pad_total * frac;
        let u = match &table {
            None => solve_cauchy_variational(
                spec, omega, 1.0, f, step_t, cur_lo, cur_hi, grid_step, opts,
            )
            .map_err(|e| step_context(e, s))?,
            Some((spline, slo, shi)) => {
                let g = move |x: f64| {
                    let xc = x.clamp(*slo, *shi);
                    (spline.eval(xc), spline.deriv(xc))
                };
                solve_cauchy_variational(
                    spec, omega, 1.0, &g, step_t, cur_lo, cur_hi, grid_step, opts,
                )
                .map_err(|e| step_context(e, s))?
            }
        };
        let dx = u.xs[1] - u.xs[0];
        let spline = CubicSpline::new(u.xs[0], dx, u.u.clone())?;
        table = Some((spline, u.xs[0], *u.xs.last().unwrap()));
    }
    let (spline, slo, shi) = table.unwrap();
    let np = ((hi - lo) / grid_step).round() as usize + 1;
    let xs: Vec<f64> = (0..np).map(|i| lo + (hi - lo) * i as f64 / (np - 1) as f64).collect();
    let u = xs.iter().map(|&x| spline.eval(x.clamp(slo, shi))).collect();
    Ok(UTable { xs, u })
}

fn step_context(e: Error, step: usize) -> Error {
    match e {
        Error::SelectorAmbiguity { x, detail } => {
            Error::SelectorAmbiguity { x, detail: format!("{detail} (iteration step {step})") }
        }
        other => other,
    }
}

/// Per-epsilon homogenization error rows.
#[derive(Debug, Clone)]
pub struct HomogenizationReport {
    /// `(eps, sample index, sup error over the window)`.
    pub rows: Vec<(f64, usize, f64)>,
    /// Count of strictly decreasing consecutive eps steps, over all samples.
    pub monotone_steps: usize,
    pub total_steps: usize,
}

/// Compare `u^eps` with the homogenized solution over a window at a set of
/// scales, using the supplied raw effective profile.
#[allow(clippy::too_many_arguments)]
pub fn homogenization_error(
    spec: &HamiltonianSpec,
    ensemble: &Ensemble,
    seed: u64,
    samples: usize,
    hbar_raw: &CubicSpline,
    f: &dyn Fn(f64) -> (f64, f64),
    t: f64,
    eps_list: &[f64],
    lo: f64,
    hi: f64,
    grid_step: f64,
    opts: &HkOptions,
) -> Result<HomogenizationReport> {
    let omegas = ensemble.sample(seed, samples)?;
    let ubar = solve_cauchy_effective(hbar_raw, f, t, lo, hi, grid_step, opts)?;
    let mut rows = Vec::new();
    let mut monotone = 0usize;
    let mut total = 0usize;
    for (s, w) in omegas.iter().enumerate() {
        let mut prev: Option<f64> = None;
        for &eps in eps_list {
            let ueps = solve_cauchy_variational(spec, w, eps, f, t, lo, hi, grid_step, opts)?;
            let err = ueps.sup_distance(&ubar);
            if let Some(p) = prev {
                total += 1;
                if err < p {
                    monotone += 1;
                }
            }
            prev = Some(err);
            rows.push((eps, s, err));
        }
    }
    Ok(HomogenizationReport { rows, monotone_steps: monotone, total_steps: total })
}

/// Deterministic scoped-thread map: results come back in input order.
pub fn parallel_map<T: Sync, R: Send>(
    items: &[T],
    workers: usize,
    f: impl Fn(&T) -> R + Sync,
) -> Vec<R> {
    let n = items.len();
    let mut out: Vec<Option<R>> = (0..n).map(|_| None).collect();
    if workers <= 1 || n <= 1 {
        for (i, item) in items.iter().enumerate() {
            out[i] = Some(f(item));
        }
    } else {
        let counter = std::sync::atomic::AtomicUsize::new(0);
        let slots: Vec<std::sync::Mutex<&mut Option<R>>> =
            out.iter_mut().map(std::sync::Mutex::new).collect();
        std::thread::scope(|scope| {
            for _ in 0..workers.min(n) {
                scope.spawn(|| loop {
                    let i = counter.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                    if i >= n {
                        break;
                    }
                    let r = f(&items[i]);
                    **slots[i].lock().unwrap() = Some(r);
                });
            }
        });
    }
    out.into_iter().map(|r| r.unwrap()).collect()
}
