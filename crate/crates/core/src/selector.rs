//! Graph selectors and spectral numbers of polyline fronts.
//!
//! A front is cut into x-monotone sheets joined at folds. Walking the curve
//! assigns every sheet a fiber index: crossing a fold from the lower-p side
//! to the upper-p side raises the index by one when the turn is
//! counterclockwise and lowers it when clockwise, anchored at index zero on
//! the first sheet. The selector `u(x)` rides index-zero sheets and switches
//! branch only at value crossings, resolved by the one-fiber normal form of
//! the local triple: minimum of the outer branches when the middle sheet
//! carries index +1, maximum when it carries index -1. Every event is logged;
//! anything beyond the normal form aborts instead of guessing.
//!
//! Spectral numbers over a window `U` are `c_minus = min_U u` and, through
//! the mirror duality, `c_plus = -min_U u_mirror`; `gamma = c_plus - c_minus`.

use crate::front::LagrangianFront;
use crate::{Error, Result};

/// One x-monotone piece of the front.
#[derive(Debug, Clone)]
pub struct Sheet {
    /// Strictly increasing x samples.
    pub xs: Vec<f64>,
    pub ps: Vec<f64>,
    pub avals: Vec<f64>,
    /// Traversal direction of the run in curve order.
    pub increasing: bool,
    /// Fiber index relative to the carrier sheets (0 on carriers).
    pub index: i32,
}

impl Sheet {
    pub fn x_lo(&self) -> f64 {
        self.xs[0]
    }

    pub fn x_hi(&self) -> f64 {
        *self.xs.last().unwrap()
    }

    pub fn covers(&self, x: f64) -> bool {
        x >= self.x_lo() && x <= self.x_hi()
    }

    /// Piecewise-linear `(a, p)` at `x` (clamped to the sheet range).
    pub fn at(&self, x: f64) -> (f64, f64) {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return (self.avals[0], self.ps[0]);
        }
        if x >= self.xs[n - 1] {
            return (self.avals[n - 1], self.ps[n - 1]);
        }
        let mut lo = 0usize;
        let mut hi = n - 1;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.xs[mid] <= x {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let t = (x - self.xs[lo]) / (self.xs[hi] - self.xs[lo]);
        (
            self.avals[lo] + t * (self.avals[hi] - self.avals[lo]),
            self.ps[lo] + t * (self.ps[hi] - self.ps[lo]),
        )
    }
}

/// Fold joining two consecutive sheets along the curve.
#[derive(Debug, Clone, Copy)]
pub struct Fold {
    pub x: f64,
    pub p: f64,
    /// +1 counterclockwise, -1 clockwise.
    pub sense: i32,
    /// Curve-order sheet ids joined here.
    pub left_sheet: usize,
    pub right_sheet: usize,
}

/// Sheet structure of a front.
#[derive(Debug)]
pub struct SheetDecomposition {
    pub sheets: Vec<Sheet>,
    pub folds: Vec<Fold>,
}

/// How a crossing was resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrossingRule {
    /// Outer branches of a +1 middle: keep the pointwise minimum.
    MinOverOuter,
    /// Outer branches of a -1 middle: keep the pointwise maximum.
    MaxOverOuter,
}

/// Logged continuation event.
#[derive(Debug, Clone)]
pub enum SelectorEvent {
    Seed { x: f64, sheet: usize, single_valued: bool },
    Crossing { x: f64, from: usize, to: usize, rule: CrossingRule, switched: bool },
    FoldHandoff { x: f64, from: usize, to: usize, jump: f64 },
}

/// The selector profile `x -> u(x)` with branch provenance.
#[derive(Debug)]
pub struct SelectorProfile {
    pub xs: Vec<f64>,
    pub u: Vec<f64>,
    /// Sheet carrying the value at each node.
    pub branch: Vec<usize>,
    pub events: Vec<SelectorEvent>,
    /// Lipschitz constant used by the continuity audit (max |p| on the front).
    pub lip: f64,
}

impl SelectorProfile {
    pub fn min(&self) -> f64 {
        self.u.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.u.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Spectral numbers of a front over a window.
#[derive(Debug, Clone, Copy)]
pub struct SpectralNumbers {
    pub c_minus: f64,
    pub c_plus: f64,
    pub gamma: f64,
    /// `|c_plus - max_U u_L|`: the two duality routes compared.
    pub duality_residual: f64,
    pub u_lo: f64,
    pub u_hi: f64,
}

/// Cut the front into x-monotone sheets with fold metadata.
pub fn decompose(front: &LagrangianFront) -> Result<SheetDecomposition> {
    let v = &front.verts;
    if v.len() < 2 {
        return Err(Error::InvalidSpec("front too short to decompose".into()));
    }
    let mut dirs: Vec<i32> = Vec::with_capacity(v.len() - 1);
    for w in v.windows(2) {
        let dx = w[1].x - w[0].x;
        dirs.push(if dx > 0.0 {
            1
        } else if dx < 0.0 {
            -1
        } else {
            0
        });
    }
    let mut sheets: Vec<Sheet> = Vec::new();
    let mut folds: Vec<Fold> = Vec::new();
    let mut run_start = 0usize;
    let mut run_dir = 0i32;
    let flush = |start: usize, end: usize, dir: i32, sheets: &mut Vec<Sheet>| {
        if end <= start {
            return;
        }
        let mut xs = Vec::with_capacity(end - start + 1);
        let mut ps = Vec::with_capacity(end - start + 1);
        let mut avals = Vec::with_capacity(end - start + 1);
        let range: Box<dyn Iterator<Item = usize>> =
            if dir >= 0 { Box::new(start..=end) } else { Box::new((start..=end).rev()) };
        let mut last_x = f64::NEG_INFINITY;
        for i in range {
            if v[i].x > last_x {
                xs.push(v[i].x);
                ps.push(v[i].p);
                avals.push(v[i].a);
                last_x = v[i].x;
            }
        }
        sheets.push(Sheet { xs, ps, avals, increasing: dir >= 0, index: 0 });
    };
    for (i, &d) in dirs.iter().enumerate() {
        if front.cuts.binary_search(&i).is_ok() {
            // the polyline claims no curve across a cut: close the run and
            // start fresh, with no fold relation
            flush(run_start, i, run_dir, &mut sheets);
            run_start = i + 1;
            run_dir = 0;
            continue;
        }
        if run_dir == 0 && d != 0 {
            run_dir = d;
        }
        if d != 0 && d != run_dir {
            flush(run_start, i, run_dir, &mut sheets);
            folds.push(Fold {
                x: v[i].x,
                p: v[i].p,
                sense: fold_sense(v, i),
                left_sheet: sheets.len() - 1,
                right_sheet: sheets.len(),
            });
            run_start = i;
            run_dir = d;
        }
    }
    flush(run_start, v.len() - 1, run_dir, &mut sheets);
    if sheets.is_empty() {
        return Err(Error::InvalidSpec("front has no monotone sheet".into()));
    }

    // Carriers sit on the chirality side; middles get their labels from the
    // fold walk (crossing lower-to-upper in p gains the fold's sense) and the
    // two folds of a middle must agree.
    let carrier_increasing = front.chirality >= 0;
    for s in sheets.iter_mut() {
        s.index = i32::MIN; // unassigned
        if s.increasing == carrier_increasing {
            s.index = 0;
        }
    }
    let mut conflicted: Vec<(usize, i32)> = Vec::new();
    for f in &folds {
        let (ls, rs) = (f.left_sheet, f.right_sheet);
        if rs >= sheets.len() {
            continue;
        }
        // compare momenta of both sides at a matched x just inside the fold
        let ext = (sheets[ls].x_hi() - sheets[ls].x_lo())
            .min(sheets[rs].x_hi() - sheets[rs].x_lo());
        let delta_x = 0.25 * ext;
        let fold_at_right = (sheets[ls].x_hi() - f.x).abs() <= (sheets[ls].x_lo() - f.x).abs();
        let xp = if fold_at_right { f.x - delta_x } else { f.x + delta_x };
        let p_from = sheets[ls].at(xp).1;
        let p_to = sheets[rs].at(xp).1;
        let dir = if p_to > p_from { 1 } else { -1 };
        let delta = f.sense * dir;
        let (mid, label) = if sheets[ls].index == 0 && sheets[rs].index != 0 {
            (rs, delta)
        } else if sheets[rs].index == 0 && sheets[ls].index != 0 {
            (ls, -delta)
        } else {
            return Err(Error::SelectorAmbiguity {
                x: f.x,
                detail: "fold joins two sheets on the same carrier side".into(),
            });
        };
        if sheets[mid].index != i32::MIN && sheets[mid].index != label {
            // conflicting turn data: sub-resolution wiggles become
            // transparent, wider sheets are marked conflicted and abort the
            // continuation only if their evidence is ever consulted
            let extent = sheets[mid].x_hi() - sheets[mid].x_lo();
            conflicted.push(if extent <= 0.03 { (mid, 2) } else { (mid, 3) });
            continue;
        }
        sheets[mid].index = label;
    }
    for (mid, mark) in conflicted {
        sheets[mid].index = mark;
    }
    // an unassigned sheet can only be a fold-free middle fragment at the
    // curve boundary; treat it as transparent (never selected)
    for s in sheets.iter_mut() {
        if s.index == i32::MIN {
            s.index = 2;
        }
    }
    Ok(SheetDecomposition { sheets, folds })
}

/// Turn sense at vertex `i`: sign of the cross product of the incoming and
/// outgoing directions, measured over a few segments to average out jitter.
fn fold_sense(v: &[crate::front::Vertex], i: usize) -> i32 {
    let span = 3usize;
    let prev = i.saturating_sub(span);
    let next = (i + span).min(v.len() - 1);
    let ax = v[i].x - v[prev].x;
    let ap = v[i].p - v[prev].p;
    let bx = v[next].x - v[i].x;
    let bp = v[next].p - v[i].p;
    let cross = ax * bp - ap * bx;
    if cross >= 0.0 {
        1
    } else {
        -1
    }
}

/// Selector algorithm choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectorMode {
    /// Event-driven continuation with the normal-form crossing rules.
    Continuation,
    /// Extreme over carrier sheets, exact when the generating field is
    /// convex in p: minimum for standard chirality, maximum for mirrored.
    EnvelopeConvex,
    /// Dual envelope for concave generators (time-reversed fields).
    EnvelopeConcave,
}

/// Continuation selector on a uniform grid over `[lo, hi]`.
pub fn graph_selector(
    front: &LagrangianFront,
    lo: f64,
    hi: f64,
    step: f64,
) -> Result<SelectorProfile> {
    graph_selector_with(front, lo, hi, step, SelectorMode::Continuation)
}

/// Selector with an explicit algorithm choice.
pub fn graph_selector_with(
    front: &LagrangianFront,
    lo: f64,
    hi: f64,
    step: f64,
    mode: SelectorMode,
) -> Result<SelectorProfile> {
    if !(hi > lo) || !(step > 0.0) {
        return Err(Error::InvalidSpec("selector needs hi > lo and step > 0".into()));
    }
    let (flo, fhi) = front.x_range();
    if flo > lo || fhi < hi {
        return Err(Error::DomainNotCovered { lo, hi, have_lo: flo, have_hi: fhi });
    }
    let dec = decompose(front)?;
    match mode {
        SelectorMode::Continuation => {
            selector_on_decomposition(&dec, front.max_abs_p(), lo, hi, step)
        }
        SelectorMode::EnvelopeConvex => {
            let min_side = front.chirality > 0;
            envelope_on_decomposition(&dec, min_side, front.max_abs_p(), lo, hi, step)
        }
        SelectorMode::EnvelopeConcave => {
            let min_side = front.chirality < 0;
            envelope_on_decomposition(&dec, min_side, front.max_abs_p(), lo, hi, step)
        }
    }
}

/// Extreme-over-carriers selector: pointwise minimum of the index-0 sheets
/// for standard fronts, maximum for mirrored ones.
fn envelope_on_decomposition(
    dec: &SheetDecomposition,
    min_side: bool,
    lip: f64,
    lo: f64,
    hi: f64,
    step: f64,
) -> Result<SelectorProfile> {
    let n = (((hi - lo) / step).round() as usize).max(1) + 1;
    let xs: Vec<f64> = (0..n).map(|j| lo + (hi - lo) * j as f64 / (n - 1) as f64).collect();
    let zero_sheets: Vec<usize> =
        (0..dec.sheets.len()).filter(|&s| dec.sheets[s].index == 0).collect();
    let mut u = vec![f64::NAN; n];
    let mut branch = vec![usize::MAX; n];
    let mut events = Vec::new();
    for (j, &x) in xs.iter().enumerate() {
        let mut best: Option<(usize, f64)> = None;
        for &si in &zero_sheets {
            let sh = &dec.sheets[si];
            if !sh.covers(x) {
                continue;
            }
            let (a, _) = sh.at(x);
            let better = match best {
                None => true,
                Some((_, b)) => {
                    if min_side {
                        a < b
                    } else {
                        a > b
                    }
                }
            };
            if better {
                best = Some((si, a));
            }
        }
        let (si, a) = best.ok_or(Error::SelectorAmbiguity {
            x,
            detail: "no carrier sheet covers the node".into(),
        })?;
        if j > 0 && branch[j - 1] != si && branch[j - 1] != usize::MAX {
            events.push(SelectorEvent::Crossing {
                x,
                from: branch[j - 1],
                to: si,
                rule: if min_side {
                    CrossingRule::MinOverOuter
                } else {
                    CrossingRule::MaxOverOuter
                },
                switched: true,
            });
        }
        u[j] = a;
        branch[j] = si;
    }
    if n >= 2 {
        let dx = xs[1] - xs[0];
        for j in 0..n - 1 {
            let jump = (u[j + 1] - u[j]).abs();
            if jump > lip * dx * 1.25 + 1e-7 {
                return Err(Error::SelectorAmbiguity {
                    x: xs[j],
                    detail: format!(
                        "envelope continuity violated: |du| = {jump} > Lip dx = {}",
                        lip * dx
                    ),
                });
            }
        }
    }
    Ok(SelectorProfile { xs, u, branch, events, lip })
}

fn selector_on_decomposition(
    dec: &SheetDecomposition,
    lip: f64,
    lo: f64,
    hi: f64,
    step: f64,
) -> Result<SelectorProfile> {
    let n = (((hi - lo) / step).round() as usize).max(1) + 1;
    let xs: Vec<f64> = (0..n).map(|j| lo + (hi - lo) * j as f64 / (n - 1) as f64).collect();

    let zero_sheets: Vec<usize> =
        (0..dec.sheets.len()).filter(|&s| dec.sheets[s].index == 0).collect();
    let total_at = |x: f64| -> usize { dec.sheets.iter().filter(|s| s.covers(x)).count() };
    let zeros_at = |x: f64| -> Vec<usize> {
        zero_sheets.iter().copied().filter(|&s| dec.sheets[s].covers(x)).collect()
    };

    // seed on the longest single-valued grid run
    let mut best: Option<(usize, usize)> = None;
    let mut run_start = None;
    for (j, &x) in xs.iter().enumerate() {
        if total_at(x) == 1 {
            if run_start.is_none() {
                run_start = Some(j);
            }
            let s = run_start.unwrap();
            if best.map(|(a, b)| b - a).unwrap_or(0) < j - s {
                best = Some((s, j));
            }
        } else {
            run_start = None;
        }
    }

    let mut events: Vec<SelectorEvent> = Vec::new();
    let uniform = sheet_uniform_type(dec);
    let (seed_node, seed_sheet) = match best {
        Some((a, b)) => {
            let mid = (a + b) / 2;
            let s = zeros_at(xs[mid]).first().copied().ok_or(Error::SelectorAmbiguity {
                x: xs[mid],
                detail: "single-valued node has no index-0 sheet".into(),
            })?;
            events.push(SelectorEvent::Seed { x: xs[mid], sheet: s, single_valued: true });
            (mid, s)
        }
        None => {
            let rule = uniform.ok_or(Error::SelectorAmbiguity {
                x: lo,
                detail: "no single-valued seed interval and mixed fold types".into(),
            })?;
            let zs = zeros_at(xs[0]);
            let s = pick_extreme(dec, &zs, xs[0], rule).ok_or(Error::SelectorAmbiguity {
                x: lo,
                detail: "no index-0 sheet at the left edge".into(),
            })?;
            events.push(SelectorEvent::Seed { x: xs[0], sheet: s, single_valued: false });
            (0, s)
        }
    };

    let mut u = vec![f64::NAN; n];
    let mut branch = vec![usize::MAX; n];
    let (sv, _) = dec.sheets[seed_sheet].at(xs[seed_node]);
    u[seed_node] = sv;
    branch[seed_node] = seed_sheet;

    sweep(dec, &zero_sheets, &xs, seed_node, true, seed_sheet, &mut u, &mut branch, &mut events)?;
    sweep(dec, &zero_sheets, &xs, seed_node, false, seed_sheet, &mut u, &mut branch, &mut events)?;

    if n >= 2 {
        let dx = xs[1] - xs[0];
        for j in 0..n - 1 {
            let jump = (u[j + 1] - u[j]).abs();
            if jump > lip * dx * 1.25 + 1e-7 {
                return Err(Error::SelectorAmbiguity {
                    x: xs[j],
                    detail: format!("continuity violated: |du| = {jump} > Lip dx = {}", lip * dx),
                });
            }
        }
    }
    Ok(SelectorProfile { xs, u, branch, events, lip })
}

/// If all nonzero sheet indices share a sign the front is uniformly of min
/// type (+1) or max type (-1).
fn sheet_uniform_type(dec: &SheetDecomposition) -> Option<CrossingRule> {
    let mut pos = false;
    let mut neg = false;
    for s in &dec.sheets {
        if s.index == 1 {
            pos = true;
        }
        if s.index == -1 {
            neg = true;
        }
    }
    match (pos, neg) {
        (true, true) => None,
        (false, true) => Some(CrossingRule::MaxOverOuter),
        _ => Some(CrossingRule::MinOverOuter),
    }
}

fn pick_extreme(
    dec: &SheetDecomposition,
    candidates: &[usize],
    x: f64,
    rule: CrossingRule,
) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for &s in candidates {
        let (a, _) = dec.sheets[s].at(x);
        let better = match best {
            None => true,
            Some((_, b)) => match rule {
                CrossingRule::MinOverOuter => a < b,
                CrossingRule::MaxOverOuter => a > b,
            },
        };
        if better {
            best = Some((s, a));
        }
    }
    best.map(|(s, _)| s)
}

/// Resolve the crossing of two index-0 sheets from the index of a shared
/// fold-adjacent middle sheet, falling back to the fold types around them.
fn crossing_rule(dec: &SheetDecomposition, a: usize, c: usize, x: f64) -> Result<CrossingRule> {
    let neighbors = |s: usize| -> Vec<usize> {
        dec.folds
            .iter()
            .filter_map(|f| {
                if f.left_sheet == s {
                    Some(f.right_sheet)
                } else if f.right_sheet == s {
                    Some(f.left_sheet)
                } else {
                    None
                }
            })
            .filter(|&m| m < dec.sheets.len())
            .collect()
    };
    let na = neighbors(a);
    let nc = neighbors(c);
    for m in &na {
        if nc.contains(m) && dec.sheets[*m].index.abs() == 1 {
            return Ok(if dec.sheets[*m].index > 0 {
                CrossingRule::MinOverOuter
            } else {
                CrossingRule::MaxOverOuter
            });
        }
    }
    let mut sign = 0i32;
    for m in na.iter().chain(nc.iter()) {
        let idx = dec.sheets[*m].index;
        if idx == 3 {
            return Err(Error::SelectorAmbiguity {
                x,
                detail: "crossing adjacent to a fold-conflicted sheet".into(),
            });
        }
        if idx.abs() != 1 {
            continue;
        }
        let s = idx.signum();
        if sign == 0 {
            sign = s;
        } else if sign != s {
            return Err(Error::SelectorAmbiguity {
                x,
                detail: "crossing of index-0 sheets with mixed middle types".into(),
            });
        }
    }
    match sign {
        1 => Ok(CrossingRule::MinOverOuter),
        -1 => Ok(CrossingRule::MaxOverOuter),
        _ => sheet_uniform_type(dec).ok_or(Error::SelectorAmbiguity {
            x,
            detail: "isolated crossing with no fold evidence".into(),
        }),
    }
}

#[allow(clippy::too_many_arguments)]
fn sweep(
    dec: &SheetDecomposition,
    zero_sheets: &[usize],
    xs: &[f64],
    seed: usize,
    rightward: bool,
    seed_sheet: usize,
    u: &mut [f64],
    branch: &mut [usize],
    events: &mut Vec<SelectorEvent>,
) -> Result<()> {
    let n = xs.len();
    let mut carrier = seed_sheet;
    let nodes: Vec<usize> =
        if rightward { (seed + 1..n).collect() } else { (0..seed).rev().collect() };
    for j in nodes {
        let x_prev = if rightward { xs[j - 1] } else { xs[j + 1] };
        let x = xs[j];
        if !dec.sheets[carrier].covers(x) {
            let sheet = &dec.sheets[carrier];
            let x_die = if rightward { sheet.x_hi() } else { sheet.x_lo() };
            let (v_die, _) = sheet.at(x_die);
            let lip = 1.0 + sheet.ps.iter().fold(0.0f64, |m, p| m.max(p.abs()));
            let tol = 4.0 * lip * (x - x_prev).abs() + 1e-8;
            let mut best: Option<(usize, f64)> = None;
            for &s in zero_sheets {
                if s != carrier && dec.sheets[s].covers(x) && dec.sheets[s].covers(x_die) {
                    let (v, _) = dec.sheets[s].at(x_die);
                    let d = (v - v_die).abs();
                    if best.map(|(_, b)| d < b).unwrap_or(true) {
                        best = Some((s, d));
                    }
                }
            }
            match best {
                Some((s, d)) if d <= tol => {
                    events.push(SelectorEvent::FoldHandoff { x: x_die, from: carrier, to: s, jump: d });
                    carrier = s;
                }
                _ => {
                    return Err(Error::SelectorAmbiguity {
                        x: x_die,
                        detail: format!(
                            "carrier dies with no continuous index-0 continuation (best gap {:?})",
                            best.map(|(_, d)| d)
                        ),
                    })
                }
            }
        }
        // resolve value crossings inside (x_prev, x]
        let mut guard = 0usize;
        loop {
            guard += 1;
            if guard > 64 {
                return Err(Error::SelectorAmbiguity {
                    x,
                    detail: "crossing cascade did not settle".into(),
                });
            }
            let cur = &dec.sheets[carrier];
            let vc_prev = cur.at(x_prev).0;
            let vc_now = cur.at(x).0;
            let mut first_cross: Option<(f64, usize)> = None;
            for &s in zero_sheets {
                if s == carrier {
                    continue;
                }
                let sh = &dec.sheets[s];
                if !(sh.covers(x_prev) && sh.covers(x)) {
                    continue;
                }
                let d_prev = sh.at(x_prev).0 - vc_prev;
                let d_now = sh.at(x).0 - vc_now;
                if d_prev == 0.0 && d_now == 0.0 {
                    continue;
                }
                if d_prev != 0.0 && d_prev.signum() != d_now.signum() {
                    let mut a = x_prev.min(x);
                    let mut b = x_prev.max(x);
                    let da0 = sh.at(a).0 - cur.at(a).0;
                    for _ in 0..40 {
                        let m = 0.5 * (a + b);
                        let dm = sh.at(m).0 - cur.at(m).0;
                        if (dm >= 0.0) == (da0 >= 0.0) {
                            a = m;
                        } else {
                            b = m;
                        }
                    }
                    let xc = 0.5 * (a + b);
                    let better = match first_cross {
                        None => true,
                        Some((xf, _)) => {
                            if rightward {
                                xc < xf
                            } else {
                                xc > xf
                            }
                        }
                    };
                    if better {
                        first_cross = Some((xc, s));
                    }
                }
            }
            match first_cross {
                None => break,
                Some((xc, s)) => {
                    let rule = crossing_rule(dec, carrier, s, xc)?;
                    let h = (x - x_prev).abs().max(1e-12);
                    let probe =
                        if rightward { (xc + 0.05 * h).min(x) } else { (xc - 0.05 * h).max(x) };
                    let v_cur = dec.sheets[carrier].at(probe).0;
                    let v_new = dec.sheets[s].at(probe).0;
                    let take_new = match rule {
                        CrossingRule::MinOverOuter => v_new < v_cur,
                        CrossingRule::MaxOverOuter => v_new > v_cur,
                    };
                    events.push(SelectorEvent::Crossing {
                        x: xc,
                        from: carrier,
                        to: s,
                        rule,
                        switched: take_new,
                    });
                    if take_new {
                        carrier = s;
                    } else {
                        break;
                    }
                }
            }
        }
        let (v, _) = dec.sheets[carrier].at(x);
        u[j] = v;
        branch[j] = carrier;
    }
    Ok(())
}

/// Spectral numbers over `[lo, hi]`: `c_minus` from the selector minimum,
/// `c_plus` through the mirror duality, re-tested against the direct
/// selector maximum.
pub fn spectral_numbers(
    front: &LagrangianFront,
    lo: f64,
    hi: f64,
    step: f64,
) -> Result<SpectralNumbers> {
    spectral_numbers_with(front, lo, hi, step, SelectorMode::Continuation)
}

/// Spectral numbers with an explicit selector mode.
pub fn spectral_numbers_with(
    front: &LagrangianFront,
    lo: f64,
    hi: f64,
    step: f64,
    mode: SelectorMode,
) -> Result<SpectralNumbers> {
    let prof = graph_selector_with(front, lo, hi, step, mode)?;
    let mirrored = front.mirror();
    let prof_m = graph_selector_with(&mirrored, lo, hi, step, mode)?;
    let c_minus = prof.min();
    let c_plus = -prof_m.min();
    let duality_residual = (c_plus - prof.max()).abs();
    Ok(SpectralNumbers {
        c_minus,
        c_plus,
        gamma: c_plus - c_minus,
        duality_residual,
        u_lo: prof.u[0],
        u_hi: *prof.u.last().unwrap(),
    })
}

/// Spectral numbers of the front relative to a graph section `g` (value and
/// slope): the difference construction with a fiber-free second Lagrangian.
pub fn gamma_vs_graph(
    front: &LagrangianFront,
    g: &dyn Fn(f64) -> (f64, f64),
    lo: f64,
    hi: f64,
    step: f64,
) -> Result<SpectralNumbers> {
    let shifted = front.subtract_graph(g);
    spectral_numbers(&shifted, lo, hi, step)
}

/// Extract the front as a graph over `[lo, hi]` when it is single-valued
/// there; returns sampled `(x, a, p)` rows.
pub fn front_as_graph(
    front: &LagrangianFront,
    lo: f64,
    hi: f64,
    step: f64,
) -> Result<Option<Vec<(f64, f64, f64)>>> {
    let dec = decompose(front)?;
    let n = ((hi - lo) / step).round() as usize + 1;
    let mut rows = Vec::with_capacity(n);
    for j in 0..n {
        let x = lo + (hi - lo) * j as f64 / (n - 1) as f64;
        let covering: Vec<&Sheet> = dec.sheets.iter().filter(|s| s.covers(x)).collect();
        if covering.len() != 1 {
            return Ok(None);
        }
        let (a, p) = covering[0].at(x);
        rows.push((x, a, p));
    }
    Ok(Some(rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::front::{evolve_front, initial_front, Advancer, FrontParams, InitialDatum};
    use crate::model::{HamiltonianSpec, MomentumTerm, Omega};

    fn params() -> FrontParams {
        FrontParams::default()
    }

    #[test]
    fn single_valued_front_returns_itself() {
        let f = |x: f64| ((0.7 * x).sin(), 0.7 * (0.7 * x).cos());
        let front = initial_front(&InitialDatum::Graph(&f), -2.0, 2.0, &params()).unwrap();
        let prof = graph_selector(&front, -1.5, 1.5, 0.01).unwrap();
        for (x, u) in prof.xs.iter().zip(prof.u.iter()) {
            assert!((u - (0.7 * x).sin()).abs() < 1e-6, "u({x}) = {u}");
        }
    }

    #[test]
    fn domain_not_covered_is_an_error() {
        let front = initial_front(&InitialDatum::Affine { p0: 0.5 }, -1.0, 1.0, &params()).unwrap();
        match graph_selector(&front, -2.0, 2.0, 0.01) {
            Err(Error::DomainNotCovered { .. }) => {}
            other => panic!("expected DomainNotCovered, got {other:?}"),
        }
    }

    #[test]
    fn swallowtail_selects_lax_oleinik_branch() {
        // H = p^2/2; f' = -sin folds after t = 1
        let f = |x: f64| (x.cos(), -x.sin());
        let spec = HamiltonianSpec::kinetic(MomentumTerm::Quadratic { coeff: 1.0 }).unwrap();
        let w = Omega::Torus(vec![]);
        let front0 = initial_front(&InitialDatum::Graph(&f), -6.0, 6.0, &params()).unwrap();
        let t = 2.0;
        let front = evolve_front(
            &front0,
            &Advancer::Flow { spec: &spec, omega: &w, t, tol: 1e-10 },
            &params(),
        )
        .unwrap();
        let dec = decompose(&front).unwrap();
        assert!(dec.sheets.len() >= 3, "expected folds, got {} sheets", dec.sheets.len());
        let prof = graph_selector(&front, -2.0, 2.0, 0.005).unwrap();
        // Hopf-Lax oracle: u(x) = min_y [cos y + (x - y)^2 / (2 t)]
        for (x, u) in prof.xs.iter().zip(prof.u.iter()) {
            let mut bestv = f64::INFINITY;
            let mut y = x - 5.0;
            while y <= x + 5.0 {
                bestv = bestv.min(y.cos() + (x - y) * (x - y) / (2.0 * t));
                y += 1e-3;
            }
            assert!((u - bestv).abs() < 2e-4, "x={x}: selector {u} vs hopf-lax {bestv}");
        }
        assert!(prof.events.iter().any(|e| matches!(e, SelectorEvent::Crossing { .. })));
    }

    #[test]
    fn mirror_duality_on_folded_front() {
        let f = |x: f64| (x.cos(), -x.sin());
        let spec = HamiltonianSpec::kinetic(MomentumTerm::Quadratic { coeff: 1.0 }).unwrap();
        let w = Omega::Torus(vec![]);
        let front0 = initial_front(&InitialDatum::Graph(&f), -6.0, 6.0, &params()).unwrap();
        let front = evolve_front(
            &front0,
            &Advancer::Flow { spec: &spec, omega: &w, t: 1.8, tol: 1e-10 },
            &params(),
        )
        .unwrap();
        let sn = spectral_numbers(&front, -1.0, 1.0, 0.005).unwrap();
        assert!(sn.gamma >= 0.0);
        assert!(sn.duality_residual < 1e-12, "duality residual {}", sn.duality_residual);
    }

    #[test]
    fn graph_spectral_numbers_are_min_max_osc() {
        let f = |x: f64| (x.cos(), -x.sin());
        let front = initial_front(&InitialDatum::Graph(&f), -4.5, 4.5, &params()).unwrap();
        let sn = spectral_numbers(&front, -3.5, 3.5, 0.002).unwrap();
        assert!((sn.c_minus - (-1.0)).abs() < 1e-5);
        assert!((sn.c_plus - 1.0).abs() < 1e-5);
        assert!((sn.gamma - 2.0).abs() < 1e-5);

        let zero =
            initial_front(&InitialDatum::Graph(&|_| (0.0, 0.0)), -2.0, 2.0, &params()).unwrap();
        let sn = spectral_numbers(&zero, -1.0, 1.0, 0.01).unwrap();
        assert_eq!(sn.c_minus, 0.0);
        assert_eq!(sn.c_plus, 0.0);
        assert_eq!(sn.gamma, 0.0);
    }

    #[test]
    fn gamma_vs_graph_of_two_sections_is_oscillation() {
        let f = |x: f64| (x.sin(), x.cos());
        let front = initial_front(&InitialDatum::Graph(&f), -4.0, 4.0, &params()).unwrap();
        let g = |x: f64| (0.25 * x, 0.25);
        let sn = gamma_vs_graph(&front, &g, -3.0, 3.0, 0.002).unwrap();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for j in 0..6000 {
            let x = -3.0 + 6.0 * j as f64 / 5999.0;
            let v = x.sin() - 0.25 * x;
            lo = lo.min(v);
            hi = hi.max(v);
        }
        assert!((sn.gamma - (hi - lo)).abs() < 1e-5, "gamma {} vs osc {}", sn.gamma, hi - lo);

        let direct = spectral_numbers(&front, -3.0, 3.0, 0.002).unwrap();
        let viag = gamma_vs_graph(&front, &|_x| (0.0, 0.0), -3.0, 3.0, 0.002).unwrap();
        assert!((direct.gamma - viag.gamma).abs() < 1e-14);
    }

    #[test]
    fn monotone_windows() {
        let f = |x: f64| (x.cos(), -x.sin());
        let spec = HamiltonianSpec::kinetic(MomentumTerm::Quadratic { coeff: 1.0 }).unwrap();
        let w = Omega::Torus(vec![]);
        let front0 = initial_front(&InitialDatum::Graph(&f), -7.0, 7.0, &params()).unwrap();
        let front = evolve_front(
            &front0,
            &Advancer::Flow { spec: &spec, omega: &w, t: 1.7, tol: 1e-10 },
            &params(),
        )
        .unwrap();
        let small = spectral_numbers(&front, -1.0, 1.0, 0.005).unwrap();
        let large = spectral_numbers(&front, -2.5, 2.5, 0.005).unwrap();
        assert!(small.c_minus >= large.c_minus - 1e-12);
        assert!(small.c_plus <= large.c_plus + 1e-12);
        assert!(small.gamma <= large.gamma + 1e-12);
    }
}
