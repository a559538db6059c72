//! Characteristic integration with action transport.
//!
//! The state is `(x, p, a)` with
//! `dx/dt = dH/dp`, `dp/dt = -dH/dx`, `da/dt = p dH/dp - H`,
//! integrated by an adaptive Dormand-Prince 5(4) pair. The action slot makes
//! every trajectory carry its contribution to the front primitive `f_L`.

use crate::model::{Field, FieldValue, HamiltonianSpec, Omega, ScaledField};
use crate::rng::Rng;
use crate::{Error, Result};

/// One phase point with transported action.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhasePoint {
    pub x: f64,
    pub p: f64,
    pub a: f64,
}

impl PhasePoint {
    pub fn new(x: f64, p: f64) -> Self {
        PhasePoint { x, p, a: 0.0 }
    }
}

/// Integration record: accepted samples plus step-controller statistics.
#[derive(Debug, Clone)]
pub struct PhaseTrajectory {
    /// `(t, x, p, a)` at every accepted step, including both endpoints.
    pub samples: Vec<(f64, f64, f64, f64)>,
    pub accepted: usize,
    pub rejected: usize,
    pub min_step: f64,
}

impl PhaseTrajectory {
    pub fn end(&self) -> PhasePoint {
        let &(_, x, p, a) = self.samples.last().unwrap();
        PhasePoint { x, p, a }
    }

    /// Max energy drift along the trajectory for an autonomous field.
    pub fn energy_drift(&self, field: &dyn Field) -> f64 {
        let h0 = field.value(self.samples[0].1, self.samples[0].2).h;
        self.samples
            .iter()
            .map(|&(_, x, p, _)| (field.value(x, p).h - h0).abs())
            .fold(0.0, f64::max)
    }
}

const DP_A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const DP_E: [f64; 7] = [
    35.0 / 384.0 - 5179.0 / 57600.0,
    0.0,
    500.0 / 1113.0 - 7571.0 / 16695.0,
    125.0 / 192.0 - 393.0 / 640.0,
    -2187.0 / 6784.0 + 92097.0 / 339200.0,
    11.0 / 84.0 - 187.0 / 2100.0,
    -1.0 / 40.0,
];

#[inline]
fn deriv(field: &dyn Field, s: [f64; 3]) -> [f64; 3] {
    let FieldValue { h, hx, hp } = field.value(s[0], s[1]);
    [hp, -hx, s[1] * hp - h]
}

struct Stepper<'a> {
    field: &'a dyn Field,
    tol: f64,
    accepted: usize,
    rejected: usize,
    min_step: f64,
}

impl<'a> Stepper<'a> {
    fn new(field: &'a dyn Field, tol: f64) -> Self {
        Stepper { field, tol, accepted: 0, rejected: 0, min_step: f64::INFINITY }
    }

    /// Advance from `t` to exactly `t_end`; calls `record` after each
    /// accepted step.
    fn run(
        &mut self,
        mut s: [f64; 3],
        mut t: f64,
        t_end: f64,
        record: &mut dyn FnMut(f64, [f64; 3]),
    ) -> Result<[f64; 3]> {
        let total = t_end - t;
        if !total.is_finite() {
            return Err(Error::InvalidSpec(format!("non-finite horizon {t_end}")));
        }
        if total == 0.0 {
            return Ok(s);
        }
        let dir = total.signum();
        let mut h = (0.05 * total.abs()).min(0.25).max(1e-8) * dir;
        let mut k0 = deriv(self.field, s);
        loop {
            let remaining = t_end - t;
            if remaining.abs() <= 1e-14 * (1.0 + t.abs()) {
                return Ok(s);
            }
            if h.abs() > remaining.abs() {
                h = remaining;
            }
            let mut k = [[0.0; 3]; 7];
            k[0] = k0;
            for i in 0..6 {
                let mut y = s;
                for (j, yk) in y.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for (l, kl) in k.iter().enumerate().take(i + 1) {
                        acc += DP_A[i][l] * kl[j];
                    }
                    *yk += h * acc;
                }
                k[i + 1] = deriv(self.field, y);
            }
            let mut y5 = s;
            for (j, yk) in y5.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (l, kl) in k.iter().enumerate().take(6) {
                    acc += DP_A[5][l] * kl[j];
                }
                *yk += h * acc;
            }
            // Error per unit step, so the accumulated error scales like tol * t.
            let mut err: f64 = 0.0;
            for j in 0..3 {
                let mut e = 0.0;
                for (l, kl) in k.iter().enumerate() {
                    e += DP_E[l] * kl[j];
                }
                let sc = self.tol * (1.0 + s[j].abs().max(y5[j].abs()));
                err = err.max((e / sc).abs());
            }
            if err <= 1.0 {
                t += h;
                s = y5;
                k0 = k[6]; // FSAL
                self.accepted += 1;
                self.min_step = self.min_step.min(h.abs());
                record(t, s);
                let grow = (0.9 * err.powf(-0.25)).min(5.0);
                h *= grow.max(0.2);
            } else {
                self.rejected += 1;
                h *= (0.9 * err.powf(-0.25)).max(0.1);
                if h.abs() < 1e-14 * (1.0 + t.abs()) {
                    return Err(Error::StepUnderflow { t, x: s[0], p: s[1], a: s[2] });
                }
            }
        }
    }
}

/// Integrate the characteristic through `z0` for time `t` (may be negative),
/// recording every accepted step.
pub fn integrate_flow(
    spec: &HamiltonianSpec,
    omega: &Omega,
    z0: PhasePoint,
    t: f64,
    tol: f64,
) -> Result<PhaseTrajectory> {
    let field = spec.field(omega);
    integrate_field(&field, z0, t, tol)
}

/// Same as [`integrate_flow`] for any [`Field`].
pub fn integrate_field(
    field: &dyn Field,
    z0: PhasePoint,
    t: f64,
    tol: f64,
) -> Result<PhaseTrajectory> {
    check_tol(tol)?;
    let mut samples = vec![(0.0, z0.x, z0.p, z0.a)];
    let mut st = Stepper::new(field, tol);
    let s = st.run([z0.x, z0.p, z0.a], 0.0, t, &mut |tt, y| {
        samples.push((tt, y[0], y[1], y[2]));
    })?;
    if samples.last().map(|&(tt, ..)| tt) != Some(t) {
        samples.push((t, s[0], s[1], s[2]));
    }
    Ok(PhaseTrajectory {
        samples,
        accepted: st.accepted,
        rejected: st.rejected,
        min_step: if st.min_step.is_finite() { st.min_step } else { 0.0 },
    })
}

/// Endpoint-only integration (no sample storage).
pub fn advance(field: &dyn Field, z0: PhasePoint, t: f64, tol: f64) -> Result<PhasePoint> {
    check_tol(tol)?;
    let mut st = Stepper::new(field, tol);
    let s = st.run([z0.x, z0.p, z0.a], 0.0, t, &mut |_, _| {})?;
    Ok(PhasePoint { x: s[0], p: s[1], a: s[2] })
}

fn check_tol(tol: f64) -> Result<()> {
    if !(1e-12..=1e-3).contains(&tol) {
        return Err(Error::InvalidSpec(format!("tolerance {tol} outside [1e-12, 1e-3]")));
    }
    Ok(())
}

/// Flow of the rescaled field `H(x / eps, p)` realized by conjugation:
/// dilate, run the base flow for `t / eps`, undilate; the action comes back
/// scaled by `eps`.
pub fn scaled_flow(
    spec: &HamiltonianSpec,
    omega: &Omega,
    eps: f64,
    z0: PhasePoint,
    t: f64,
    tol: f64,
) -> Result<PhaseTrajectory> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::InvalidSpec(format!("eps {eps} outside (0, 1]")));
    }
    let inner0 = PhasePoint { x: z0.x / eps, p: z0.p, a: z0.a / eps };
    let tr = integrate_flow(spec, omega, inner0, t / eps, tol)?;
    Ok(PhaseTrajectory {
        samples: tr
            .samples
            .iter()
            .map(|&(s, x, p, a)| (s * eps, x * eps, p, a * eps))
            .collect(),
        accepted: tr.accepted,
        rejected: tr.rejected,
        min_step: tr.min_step * eps,
    })
}

/// Endpoint of the scaled flow via the direct microscopic field; used as an
/// independent route against [`scaled_flow`].
pub fn scaled_flow_direct(
    spec: &HamiltonianSpec,
    omega: &Omega,
    eps: f64,
    z0: PhasePoint,
    t: f64,
    tol: f64,
) -> Result<PhasePoint> {
    let base = spec.field(omega);
    let field = ScaledField { inner: &base, eps };
    advance(&field, z0, t, tol)
}

/// Propagation-speed certificate kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpeedKind {
    /// Finite propagation speed: bounded sets map into bounded sets.
    Fps,
    /// Bounded propagation speed: uniform radius increment `r0`.
    Bps,
}

/// Certificate that the time-`t` flow displaces base points by at most `r0`.
#[derive(Debug, Clone)]
pub struct SpeedCertificate {
    pub kind: SpeedKind,
    pub r0: f64,
    /// Largest displacement observed on the sample set.
    pub witness_bound: f64,
}

/// Certify the propagation speed of the time-`t` flow by the stored momentum
/// Lipschitz bound, cross-checked on a sample cloud.
pub fn certify_speed(
    spec: &HamiltonianSpec,
    omega: &Omega,
    t: f64,
    samples: usize,
    tol: f64,
) -> Result<SpeedCertificate> {
    let (c, kind) = match (spec.lipschitz.sup_dp, spec.support_radius) {
        (Some(c), _) => (c, SpeedKind::Bps),
        (None, Some(rad)) => {
            // fiber-compact support: displacement bounded by the sup of
            // |dH/dp| over the support shell
            (spec_sup_dp_on_shell(spec, omega, rad), SpeedKind::Fps)
        }
        (None, None) => {
            return Err(Error::Unsupported(
                "speed certificate needs a momentum Lipschitz bound or compact support".into(),
            ))
        }
    };
    let r0 = c * t.abs();
    let mut rng = Rng::stream(0xCE27, samples as u64);
    let rad = spec.support_radius.unwrap_or(4.0) + 1.0;
    let mut witness: f64 = 0.0;
    for _ in 0..samples.max(1) {
        let z = PhasePoint::new(rng.uniform(-3.0, 3.0), rng.uniform(-rad, rad));
        let end = advance(&spec.field(omega), z, t, tol)?;
        witness = witness.max((end.x - z.x).abs());
    }
    if witness > r0 * (1.0 + 1e-9) + 1e-12 {
        return Err(Error::InvalidSpec(format!(
            "observed displacement {witness} exceeds certified radius {r0}"
        )));
    }
    Ok(SpeedCertificate { kind, r0, witness_bound: witness })
}

fn spec_sup_dp_on_shell(spec: &HamiltonianSpec, omega: &Omega, rad: f64) -> f64 {
    let mut m: f64 = 0.0;
    for i in 0..81 {
        for j in 0..161 {
            let x = i as f64 / 80.0 * 2.0 - 1.0;
            let p = -rad + 2.0 * rad * j as f64 / 160.0;
            m = m.max(spec.eval(omega, x, p).hp.abs());
        }
    }
    m * 1.001
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{MomentumProfile, MomentumTerm, Potential};
    use crate::quad::gauss16;

    fn w0() -> Omega {
        Omega::Torus(vec![0.0])
    }

    #[test]
    fn free_transport() {
        let spec = HamiltonianSpec::kinetic(MomentumTerm::Linear { coeff: 1.0 }).unwrap();
        let tr = integrate_flow(&spec, &w0(), PhasePoint::new(0.0, 1.0), 2.0, 1e-10).unwrap();
        let e = tr.end();
        assert!((e.x - 2.0).abs() < 1e-9);
        assert!((e.p - 1.0).abs() < 1e-12);
        assert!(e.a.abs() < 1e-9, "a = p*1 - p = 0 for H = p");
    }

    #[test]
    fn quadratic_action() {
        let spec = HamiltonianSpec::kinetic(MomentumTerm::Quadratic { coeff: 1.0 }).unwrap();
        let e = integrate_flow(&spec, &w0(), PhasePoint::new(0.0, 1.0), 1.0, 1e-10)
            .unwrap()
            .end();
        assert!((e.x - 1.0).abs() < 1e-9);
        assert!((e.a - 0.5).abs() < 1e-9, "p*p - p^2/2 = 1/2");
    }

    #[test]
    fn pendulum_rotation_period() {
        // truncated pendulum, rotation orbit from (0, 0.5) has energy 1.125;
        // period from the quadrature T = int_0^1 dx / sqrt(2(E - cos 2 pi x))
        let spec = HamiltonianSpec::pendulum(1.0).truncate(8.0).unwrap();
        let energy = 0.5 * 0.5 * 0.5 + 1.0;
        let period = gauss16(
            &|x| 1.0 / (2.0 * (energy - (std::f64::consts::TAU * x).cos())).sqrt(),
            0.0,
            1.0,
        );
        let e = integrate_flow(&spec, &w0(), PhasePoint::new(0.0, 0.5), period, 1e-10)
            .unwrap()
            .end();
        assert!((e.x - 1.0).abs() < 1e-6, "x advanced by one period: {}", e.x);
        assert!((e.p - 0.5).abs() < 1e-6, "p returned: {}", e.p);
    }

    #[test]
    fn reversibility_and_energy_drift() {
        let spec = HamiltonianSpec::pendulum(1.0).truncate(8.0).unwrap();
        let w = w0();
        let tol = 1e-9;
        let z0 = PhasePoint::new(0.2, 1.3);
        let tr = integrate_flow(&spec, &w, z0, 3.0, tol).unwrap();
        let drift = tr.energy_drift(&spec.field(&w));
        assert!(drift <= 10.0 * tol * 3.0, "drift {drift}");
        let back = advance(&spec.field(&w), tr.end(), -3.0, tol).unwrap();
        assert!((back.x - z0.x).abs() + (back.p - z0.p).abs() + (back.a - z0.a).abs() < 100.0 * tol);
    }

    #[test]
    fn action_matches_quadrature() {
        // da/dt = p Hp - H checked against independent quadrature over samples
        let spec = HamiltonianSpec::pendulum(1.0).truncate(8.0).unwrap();
        let w = w0();
        let tr = integrate_flow(&spec, &w, PhasePoint::new(0.0, 2.0), 1.5, 1e-10).unwrap();
        // Simpson over the dense accepted samples
        let mut acc = 0.0;
        for win in tr.samples.windows(2) {
            let (t0, x0, p0, _) = win[0];
            let (t1, x1, p1, _) = win[1];
            let f = |x: f64, p: f64| {
                let v = spec.eval(&w, x, p);
                p * v.hp - v.h
            };
            // midpoint by re-advancing half a step
            let mid = advance(&spec.field(&w), PhasePoint { x: x0, p: p0, a: 0.0 }, 0.5 * (t1 - t0), 1e-11)
                .unwrap();
            acc += (t1 - t0) / 6.0 * (f(x0, p0) + 4.0 * f(mid.x, mid.p) + f(x1, p1));
        }
        assert!((acc - tr.end().a).abs() < 1e-7, "quadrature {acc} vs transported {}", tr.end().a);
    }

    #[test]
    fn scaled_flow_identity_and_shear() {
        let spec = HamiltonianSpec::pendulum(1.0).truncate(8.0).unwrap();
        let w = w0();
        let z0 = PhasePoint::new(0.3, 1.7);
        let a = scaled_flow(&spec, &w, 1.0, z0, 1.2, 1e-10).unwrap().end();
        let b = integrate_flow(&spec, &w, z0, 1.2, 1e-10).unwrap().end();
        assert!((a.x - b.x).abs() + (a.p - b.p).abs() + (a.a - b.a).abs() < 1e-12);

        // x-independent field: endpoint must not depend on eps
        let shear = HamiltonianSpec::kinetic(MomentumTerm::Quadratic { coeff: 1.0 }).unwrap();
        for eps in [1.0, 0.5, 0.25] {
            let e = scaled_flow(&shear, &w, eps, z0, 2.0, 1e-10).unwrap().end();
            assert!((e.x - (z0.x + 2.0 * z0.p)).abs() < 1e-8, "eps {eps}");
        }
    }

    #[test]
    fn scaled_flow_two_routes() {
        let spec = HamiltonianSpec::pendulum(1.0).truncate(8.0).unwrap();
        let w = w0();
        let z0 = PhasePoint::new(0.4, 1.9);
        let conj = scaled_flow(&spec, &w, 0.5, z0, 1.0, 1e-10).unwrap().end();
        let direct = scaled_flow_direct(&spec, &w, 0.5, z0, 1.0, 1e-10).unwrap();
        let d = (conj.x - direct.x).abs() + (conj.p - direct.p).abs() + (conj.a - direct.a).abs();
        assert!(d < 1e-8, "routes differ by {d}");
    }

    #[test]
    fn speed_certificates() {
        // sup |dH/dp| = 2 from a linear profile: r0 = 2 t
        let spec = HamiltonianSpec::kinetic(MomentumTerm::Linear { coeff: 2.0 }).unwrap();
        let cert = certify_speed(&spec, &w0(), 1.0, 64, 1e-9).unwrap();
        assert_eq!(cert.kind, SpeedKind::Bps);
        assert!((cert.r0 - 2.0).abs() < 1e-12);

        // zero field: r0 = 0
        let zero = HamiltonianSpec::new(
            MomentumProfile::bare(MomentumTerm::Linear { coeff: 0.0 }),
            Potential::None,
        )
        .unwrap();
        let cert = certify_speed(&zero, &w0(), 1.0, 16, 1e-9).unwrap();
        assert_eq!(cert.r0, 0.0);

        // truncated pendulum: Monte-Carlo displacement below the bound
        let pend = HamiltonianSpec::pendulum(1.0).truncate(8.0).unwrap();
        let cert = certify_speed(&pend, &w0(), 1.0, 1000, 1e-8).unwrap();
        assert!(cert.witness_bound <= cert.r0);
    }

    #[test]
    fn non_finite_horizon_rejected() {
        let spec = HamiltonianSpec::pendulum(1.0).truncate(8.0).unwrap();
        assert!(integrate_flow(&spec, &w0(), PhasePoint::new(0.0, 1.0), f64::NAN, 1e-9).is_err());
    }
}
