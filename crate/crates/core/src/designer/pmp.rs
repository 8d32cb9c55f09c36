//! Costate reconstruction for candidate extremals.
//!
//! The switching function is `lambda_3 = -phi / V_m`, with
//!
//! ```text
//! phi(t) = c + sum_k [a_k e^{s_k t} cos(wd_k t) + b_k e^{s_k t} sin(wd_k t)]
//! ```
//!
//! (`s_k = zeta_k omega_k`). Frequency-robust designs add `t e^{s t} cos` and
//! `t e^{s t} sin` terms per desensitized mode. The command is on where
//! `phi > 0`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::plant::PlantSpec;
use crate::profile::BangOffBangProfile;

/// Sampled points per segment for the sign check.
pub const SIGN_SAMPLES: usize = 100;
/// Largest admissible fit residual.
pub const FIT_TOL: f64 = 1e-6;
/// Sign slack on the normalized switching function.
pub const SIGN_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeTerms {
    pub sigma: f64,
    pub omega_d: f64,
    /// Coefficients of `e cos, e sin, t e cos, t e sin`.
    pub coeffs: [f64; 4],
}

/// Normalized switching function `phi`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwitchingFunction {
    pub constant: f64,
    pub modes: Vec<ModeTerms>,
    pub v_max: f64,
}

/// `[e cos, e sin, t e cos, t e sin]` and their first two time derivatives.
fn basis(sigma: f64, wd: f64, t: f64) -> [[f64; 4]; 3] {
    let e = (sigma * t).exp();
    let (s, c) = (wd * t).sin_cos();
    // u = e cos, w = e sin
    let u = e * c;
    let w = e * s;
    let du = sigma * u - wd * w;
    let dw = sigma * w + wd * u;
    let ddu = sigma * du - wd * dw;
    let ddw = sigma * dw + wd * du;
    [
        [u, w, t * u, t * w],
        [du, dw, u + t * du, w + t * dw],
        [ddu, ddw, 2.0 * du + t * ddu, 2.0 * dw + t * ddw],
    ]
}

impl SwitchingFunction {
    fn eval_order(&self, t: f64, order: usize) -> f64 {
        let base = if order == 0 { self.constant } else { 0.0 };
        base + self
            .modes
            .iter()
            .map(|m| {
                let b = basis(m.sigma, m.omega_d, t)[order];
                (0..4).map(|i| m.coeffs[i] * b[i]).sum::<f64>()
            })
            .sum::<f64>()
    }

    pub fn value(&self, t: f64) -> f64 {
        self.eval_order(t, 0)
    }

    pub fn derivative(&self, t: f64) -> f64 {
        self.eval_order(t, 1)
    }

    pub fn second_derivative(&self, t: f64) -> f64 {
        self.eval_order(t, 2)
    }

    /// `lambda_3(t)`.
    pub fn lambda3(&self, t: f64) -> f64 {
        -self.value(t) / self.v_max
    }

    /// `(lambda_3, d lambda_3 / dt)`.
    pub fn lambda3_with_rate(&self, t: f64) -> (f64, f64) {
        (
            -self.value(t) / self.v_max,
            -self.derivative(t) / self.v_max,
        )
    }
}

/// Part of a segment where `phi` has the wrong sign.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignViolation {
    pub segment: usize,
    /// Zero crossings bounding the violation (`None` when it reaches a
    /// segment end).
    pub enter: Option<f64>,
    pub exit: Option<f64>,
    /// Worst point and its value.
    pub t: f64,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PmpCertificate {
    /// Initial costate `(lambda_x1, lambda_v1, ..., lambda_3)` with
    /// `lambda_3(0) = -1/V_m`. Empty for the frequency-robust basis, whose
    /// costates live on the augmented state.
    pub lambda0: Vec<f64>,
    pub fit_residual: f64,
    pub violations: Vec<SignViolation>,
    pub switching: SwitchingFunction,
    pub robust_basis: bool,
    pub passed: bool,
}

/// Fits the switching function to `phi(T_i) = 0` and `phi(t_f) = 1`.
///
/// The plain basis also fixes `phi(0) = 1`, i.e. `lambda_3(0) = -1/V_m`.
/// With `robust_modes` nonempty the constant is left free and the listed
/// modes gain the secular terms.
pub fn certify(
    plant: &PlantSpec<f64>,
    profile: &BangOffBangProfile<f64>,
    robust_modes: &[usize],
) -> PmpCertificate {
    let robust = !robust_modes.is_empty();
    // Column layout: [constant if robust] then per mode its active terms.
    let mut cols: Vec<(Option<usize>, usize)> = Vec::new();
    if robust {
        cols.push((None, 0));
    }
    for k in 0..plant.modes().len() {
        let terms = if robust_modes.contains(&k) { 4 } else { 2 };
        cols.extend((0..terms).map(|i| (Some(k), i)));
    }
    let delays = profile.delays();
    let rows = delays.len();
    let mut a = DMatrix::zeros(rows, cols.len());
    let mut b = DVector::zeros(rows);
    for (r, &t) in delays.iter().enumerate() {
        let target = if r + 1 == rows { 1.0 } else { 0.0 };
        b[r] = if robust { target } else { target - 1.0 };
        for (c, &(mode, i)) in cols.iter().enumerate() {
            a[(r, c)] = match mode {
                None => 1.0,
                Some(k) => {
                    let m = &plant.modes()[k];
                    let v = basis(m.sigma(), m.omega_d(), t)[0][i];
                    // Plain basis uses e cos - 1 so that phi(0) = 1.
                    if !robust && i == 0 {
                        v - 1.0
                    } else {
                        v
                    }
                }
            };
        }
    }
    let theta = a
        .clone()
        .svd(true, true)
        .solve(&b, 1e-12)
        .unwrap_or_else(|_| DVector::zeros(cols.len()));
    let fit_residual = (&a * &theta - &b).amax();

    let mut constant = if robust { theta[0] } else { 1.0 };
    let mut modes: Vec<ModeTerms> = plant
        .modes()
        .iter()
        .map(|m| ModeTerms {
            sigma: m.sigma(),
            omega_d: m.omega_d(),
            coeffs: [0.0; 4],
        })
        .collect();
    for (c, &(mode, i)) in cols.iter().enumerate() {
        if let Some(k) = mode {
            modes[k].coeffs[i] = theta[c];
            if !robust && i == 0 {
                constant -= theta[c];
            }
        }
    }
    let switching = SwitchingFunction {
        constant,
        modes,
        v_max: plant.v_max(),
    };
    let lambda0 = if robust {
        Vec::new()
    } else {
        let v = plant.v_max();
        let mut l: Vec<f64> = plant
            .modes()
            .iter()
            .zip(&switching.modes)
            .flat_map(|(m, terms)| {
                let [a, b, _, _] = terms.coeffs;
                let w2 = m.omega_n() * m.omega_n();
                [a / v, (a * m.sigma() + b * m.omega_d()) / (v * w2)]
            })
            .collect();
        l.push(-1.0 / v);
        l
    };
    let violations = sign_violations(&switching, profile);
    let passed = fit_residual <= FIT_TOL && violations.is_empty();
    PmpCertificate {
        lambda0,
        fit_residual,
        violations,
        switching,
        robust_basis: robust,
        passed,
    }
}

/// Bisection on a sign change of `f` in `[a, b]`.
fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let fa0 = f(a);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        if (f(m) > 0.0) == (fa0 > 0.0) {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Sign violations per segment: samples plus every interior stationary point
/// of `phi`, so narrow dips between samples are still found.
pub fn sign_violations(
    sw: &SwitchingFunction,
    profile: &BangOffBangProfile<f64>,
) -> Vec<SignViolation> {
    let mut out = Vec::new();
    for (idx, seg) in profile.segments().iter().enumerate() {
        let dur = seg.duration();
        if dur <= 0.0 {
            continue;
        }
        let want = if seg.on { 1.0 } else { -1.0 };
        let bad = |v: f64| want * v < -SIGN_TOL;
        let pts: Vec<f64> = (1..=SIGN_SAMPLES)
            .map(|j| seg.start + dur * j as f64 / (SIGN_SAMPLES + 1) as f64)
            .collect();
        let mut probes = pts.clone();
        for w in pts.windows(2) {
            let (d0, d1) = (sw.derivative(w[0]), sw.derivative(w[1]));
            if d0 == 0.0 || (d0 > 0.0) != (d1 > 0.0) {
                probes.push(bisect(|t| sw.derivative(t), w[0], w[1]));
            }
        }
        probes.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let worst = probes
            .iter()
            .map(|&t| (t, sw.value(t)))
            .filter(|&(_, v)| bad(v))
            .min_by(|x, y| (want * x.1).partial_cmp(&(want * y.1)).unwrap());
        let Some((t_w, v_w)) = worst else { continue };
        // Walk outward from the worst point to samples of the right sign.
        let left = probes.iter().rev().find(|&&t| t < t_w && !bad(sw.value(t)));
        let right = probes.iter().find(|&&t| t > t_w && !bad(sw.value(t)));
        let f = |t: f64| sw.value(t) + want * SIGN_TOL;
        out.push(SignViolation {
            segment: idx,
            enter: left.map(|&a| bisect(f, a, t_w)),
            exit: right.map(|&b| bisect(f, t_w, b)),
            t: t_w,
            value: v_w,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_form;
    use crate::plant::ModeSpec;
    use std::f64::consts::PI;

    const W: f64 = 2.0 * PI;

    fn cert(x_f: f64) -> (PmpCertificate, BangOffBangProfile<f64>) {
        let plant = PlantSpec::single(ModeSpec::undamped(W).unwrap(), 240.0, x_f).unwrap();
        let prof = closed_form::solve(x_f, W, 240.0)
            .unwrap()
            .to_profile(W, 240.0)
            .unwrap();
        (certify(&plant, &prof, &[]), prof)
    }

    #[test]
    fn basis_derivatives() {
        let (s, w, t, h) = (-0.2, 3.0, 0.8, 1e-6);
        let b = basis(s, w, t);
        for i in 0..4 {
            let fd = (basis(s, w, t + h)[0][i] - basis(s, w, t - h)[0][i]) / (2.0 * h);
            let fdd = (basis(s, w, t + h)[1][i] - basis(s, w, t - h)[1][i]) / (2.0 * h);
            assert!((b[1][i] - fd).abs() < 1e-7);
            assert!((b[2][i] - fdd).abs() < 1e-6);
        }
    }

    #[test]
    fn zone1_extremal_passes_with_flat_mid_slope() {
        let (c, p) = cert(100.0);
        assert!(c.passed, "{c:?}");
        let mid = 0.5 * p.t_f();
        assert!(c.switching.derivative(mid).abs() < 1e-9);
        assert!((c.switching.lambda3(0.0) + 1.0 / 240.0).abs() < 1e-14);
        assert!((c.switching.lambda3(p.t_f()) + 1.0 / 240.0).abs() < 1e-9);
        for t in [0.05, 0.2, 0.31] {
            let a = c.switching.value(t) - 1.0;
            let b = c.switching.value(p.t_f() - t) - 1.0;
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn pulse_passes_without_crossings() {
        let (c, p) = cert(240.0);
        assert_eq!(p.n_switches(), 0);
        assert!(c.passed);
    }

    #[test]
    fn higher_zone_layouts_are_extremals() {
        for x_f in [300.0, 400.0, 550.0, 600.0, 800.0] {
            let (c, _) = cert(x_f);
            assert!(c.passed, "x_f = {x_f}: {c:?}");
        }
    }

    #[test]
    fn perturbed_switch_fails() {
        let plant = PlantSpec::single(ModeSpec::undamped(W).unwrap(), 240.0, 100.0).unwrap();
        let p = closed_form::solve(100.0, W, 240.0)
            .unwrap()
            .to_profile(W, 240.0)
            .unwrap();
        let mut ts = p.switch_times().to_vec();
        ts[0] += 1e-3;
        let bent = BangOffBangProfile::new(ts, p.t_f(), 240.0).unwrap();
        assert!(!certify(&plant, &bent, &[]).passed);
    }
}
