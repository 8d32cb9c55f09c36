//! Analytics on designed profiles: costate propagation, structure transitions,
//! frequency sweeps, curvature, coincidence displacements and zero loci.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::designer::{self, pmp, DesignRequest, DesignResult};
use crate::error::{Error, Result};
use crate::plant::{residual_report, residual_report_full, terminal_state, PlantSpec};
use crate::profile::BangOffBangProfile;
use crate::tdfilter::{ComplexWindow, FilterZero, TimeDelayFilter, DOUBLE_ZERO_TOL};

/// Nominal residual energy allowed for a feasible profile, relative to `V_m^2`.
pub const NOMINAL_ENERGY_TOL: f64 = 1e-10;

/// `(lambda_3(t), d lambda_3/dt)` from the initial costate
/// `(lambda_x1, lambda_v1, ..., lambda_xm, lambda_vm, lambda_3)`.
///
/// The adjoint `lambda' = -A^T lambda` is autonomous, so it is evaluated in
/// closed form: per mode `lambda_v` is a damped sinusoid and `lambda_3`
/// integrates `-omega^2 lambda_v`.
pub fn switching_function(lambda0: &[f64], plant: &PlantSpec<f64>, t: f64) -> Result<(f64, f64)> {
    let m = plant.modes().len();
    if lambda0.len() != 2 * m + 1 {
        return Err(Error::Contract(format!(
            "costate has {} components, plant needs {}",
            lambda0.len(),
            2 * m + 1
        )));
    }
    let l3 = lambda0[2 * m];
    if m == 1 && plant.is_undamped() {
        let w = plant.modes()[0].omega_n();
        let (l1, l2) = (lambda0[0], lambda0[1]);
        let (s, c) = (w * t).sin_cos();
        let value = (1.0 - c) * l1 - w * s * l2 + l3;
        let rate = w * s * l1 - w * w * c * l2;
        return Ok((value, rate));
    }
    let mut value = l3;
    let mut rate = 0.0;
    for (k, mode) in plant.modes().iter().enumerate() {
        let (l1, l2) = (lambda0[2 * k], lambda0[2 * k + 1]);
        let (sg, wd, w) = (mode.sigma(), mode.omega_d(), mode.omega_n());
        let a = l2;
        let b = (sg * l2 - l1) / wd;
        let e = (sg * t).exp();
        let (s, c) = (wd * t).sin_cos();
        let lv = e * (a * c + b * s);
        // omega^2 times the integral of lambda_v over [0, t].
        let integral = a * (e * (sg * c + wd * s) - sg) + b * (e * (sg * s - wd * c) + wd);
        value -= integral;
        rate -= w * w * lv;
    }
    Ok((value, rate))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransitionKind {
    /// Two adjacent switches merge and vanish as `x_f` grows.
    Collapse,
    /// A new switch pair appears as `x_f` grows.
    Birth,
}

impl TransitionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TransitionKind::Collapse => "collapse",
            TransitionKind::Birth => "birth",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionPoint {
    pub x_f: f64,
    pub t_cr: f64,
    pub kind: TransitionKind,
}

fn single_mode(plant: &PlantSpec<f64>, what: &str) -> Result<()> {
    if plant.modes().len() != 1 {
        return Err(Error::Domain(format!("{what} needs a single-mode plant")));
    }
    Ok(())
}

fn check_range(range: (f64, f64)) -> Result<()> {
    if !(range.0 >= 0.0 && range.1 > range.0 && range.1.is_finite()) {
        return Err(Error::Domain(format!("bad displacement range {range:?}")));
    }
    Ok(())
}

/// Grid over `(lo, hi]` that never touches zero.
fn grid(range: (f64, f64), cells: usize) -> Vec<f64> {
    let (lo, hi) = range;
    let h = (hi - lo) / cells as f64;
    let first = if lo > 0.0 { lo } else { 0.5 * h };
    std::iter::once(first)
        .chain((1..=cells).map(|j| lo + h * j as f64))
        .collect()
}

/// Displacement over which a single-mode structure changes.
fn zone_width(plant: &PlantSpec<f64>) -> f64 {
    std::f64::consts::TAU * plant.v_max() / plant.modes()[0].omega_n()
}

/// Interior gaps of a delay vector, `T_q - T_{q-1}` for `q >= 1`.
fn interior_gaps(delays: &[f64]) -> Vec<(usize, f64)> {
    (1..delays.len().saturating_sub(1))
        .map(|q| (q, delays[q] - delays[q - 1]))
        .collect()
}

/// Stationary point of the switching function near `t0`.
fn stationary_point(sw: &pmp::SwitchingFunction, mut t: f64, t_f: f64) -> f64 {
    for _ in 0..50 {
        let dd = sw.second_derivative(t);
        if dd == 0.0 {
            break;
        }
        let step = sw.derivative(t) / dd;
        t = (t - step).clamp(0.0, t_f);
        if step.abs() <= 1e-15 * t_f.max(1.0) {
            break;
        }
    }
    t
}

/// Regula falsi (Illinois) on a bracket with `f(a)` and `f(b)` of opposite sign.
fn illinois(
    mut f: impl FnMut(f64) -> Result<f64>,
    mut a: f64,
    mut fa: f64,
    mut b: f64,
    mut fb: f64,
) -> Result<f64> {
    let mut side = 0;
    for _ in 0..100 {
        let c = (a * fb - b * fa) / (fb - fa);
        if !c.is_finite() || (b - a).abs() <= 4.0 * f64::EPSILON * c.abs().max(1.0) {
            return Ok(0.5 * (a + b));
        }
        let fc = f(c)?;
        if fc == 0.0 {
            return Ok(c);
        }
        if (fc > 0.0) == (fb > 0.0) {
            b = c;
            fb = fc;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        } else {
            a = c;
            fa = fc;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        }
    }
    Ok((a * fb - b * fa) / (fb - fa))
}

/// Bisects on the designed switch count until the bracket is `width` wide.
fn bracket_structure(
    req: &DesignRequest,
    (mut xa, mut ra): (f64, DesignResult),
    (mut xb, mut rb): (f64, DesignResult),
    width: f64,
) -> Result<((f64, DesignResult), (f64, DesignResult))> {
    while xb - xa > width {
        let xm = 0.5 * (xa + xb);
        let rm = designer::design(&req.with_x_f(xm)?)?;
        if rm.n_switches == ra.n_switches {
            xa = xm;
            ra = rm;
        } else {
            xb = xm;
            rb = rm;
        }
    }
    Ok(((xa, ra), (xb, rb)))
}

/// Tangency of the switching function on the smaller structure: the branch
/// is followed past the transition, where its switching function takes the
/// wrong sign, and `(phi, phi') = 0` is solved with `t` eliminated through
/// `phi' = 0`.
fn tangency(req: &DesignRequest, small: (f64, &DesignResult), other: f64) -> Option<(f64, f64)> {
    let (xs, rs) = small;
    let far =
        designer::solve_fixed_structure(&req.with_x_f(other).ok()?, &rs.profile.delays()).ok()?;
    let cert = far.pmp_certificate.as_ref()?;
    let worst = cert
        .violations
        .iter()
        .filter(|v| v.enter.is_some() && v.exit.is_some())
        .min_by(|a, b| a.value.abs().partial_cmp(&b.value.abs()).unwrap().reverse())?;
    let segment = worst.segment;
    let want = if segment % 2 == 0 { 1.0 } else { -1.0 };
    let mut t_guess = worst.t;
    let mut last = rs.profile.delays();
    let mut g = |x: f64| -> Result<(f64, f64)> {
        let r = designer::solve_fixed_structure(&req.with_x_f(x)?, &last)?;
        let cert = r
            .pmp_certificate
            .as_ref()
            .expect("fixed-structure solves are certified");
        let t = stationary_point(&cert.switching, t_guess, r.t_f());
        last = r.profile.delays();
        t_guess = t;
        Ok((want * cert.switching.value(t), t))
    };
    let (gs, _) = g(xs).ok()?;
    let (gf, _) = g(other).ok()?;
    if !(gs > 0.0 && gf < 0.0) {
        return None;
    }
    let x = illinois(|x| g(x).map(|v| v.0), xs, gs, other, gf).ok()?;
    let (_, t) = g(x).ok()?;
    Some((x, t))
}

/// Extrapolates every nearly closed gap of `side` to zero along its branch.
fn gap_closures(
    req: &DesignRequest,
    side: (f64, &DesignResult),
    toward: f64,
) -> Result<Vec<(f64, f64)>> {
    let (xc, rc) = side;
    let delays = rc.profile.delays();
    let t_f = rc.t_f();
    let gaps = interior_gaps(&delays);
    let min_gap = gaps.iter().map(|g| g.1).fold(f64::INFINITY, f64::min);
    let dir = (toward - xc).signum();
    let delta = 1e-5 * zone_width(&req.plant);
    let back = designer::solve_fixed_structure(&req.with_x_f(xc - dir * delta)?, &delays)?
        .profile
        .delays();
    let mut out = Vec::new();
    for &(q, w) in &gaps {
        if w > 10.0 * min_gap.max(1e-12 * t_f) || w > 1e-3 * t_f {
            continue;
        }
        let w_back = back[q] - back[q - 1];
        let slope = (w - w_back) / (dir * delta);
        if slope == 0.0 {
            continue;
        }
        let x = xc - w / slope;
        out.push((x, 0.5 * (delays[q] + delays[q - 1])));
    }
    Ok(out)
}

/// Displacements where the optimal switch structure of a single-mode,
/// non-robust design changes, with the instant at which switches merge or
/// appear.
///
/// A coarse designer sweep brackets every change of the switch count.
/// Where the smaller structure survives across the change, the transition is
/// the tangency `phi = phi' = 0` of its switching function; otherwise it is
/// the displacement at which the closing gap of the larger structure reaches
/// zero.
pub fn find_transitions(plant: &PlantSpec<f64>, range: (f64, f64)) -> Result<Vec<TransitionPoint>> {
    single_mode(plant, "transition search")?;
    check_range(range)?;
    let req = DesignRequest::new(plant.clone(), false);
    let scale = zone_width(plant);
    let cells = (((range.1 - range.0) / (0.01 * scale)).ceil() as usize).clamp(8, 4000);
    let xs = grid(range, cells);
    let sweep: Vec<DesignResult> = designer::design_sweep(&req, &xs)
        .into_iter()
        .collect::<Result<_>>()?;
    let mut out: Vec<TransitionPoint> = Vec::new();
    for j in 1..xs.len() {
        if sweep[j].n_switches == sweep[j - 1].n_switches {
            continue;
        }
        let ((xa, ra), (xb, rb)) = bracket_structure(
            &req,
            (xs[j - 1], sweep[j - 1].clone()),
            (xs[j], sweep[j].clone()),
            1e-7 * scale,
        )?;
        let (small, other, grows) = if ra.n_switches < rb.n_switches {
            ((xa, &ra), xb, true)
        } else {
            ((xb, &rb), xa, false)
        };
        let kind_of = |from_left: bool| {
            if from_left {
                TransitionKind::Birth
            } else {
                TransitionKind::Collapse
            }
        };
        if let Some((x, t)) = tangency(&req, small, other) {
            out.push(TransitionPoint {
                x_f: x,
                t_cr: t,
                kind: kind_of(grows),
            });
            continue;
        }
        // The structure with the smallest relative gap is the one closing.
        let rel_gap = |r: &DesignResult| {
            interior_gaps(&r.profile.delays())
                .iter()
                .map(|g| g.1)
                .fold(f64::INFINITY, f64::min)
                / r.t_f()
        };
        let (side, toward, left) = if rel_gap(&ra) <= rel_gap(&rb) {
            ((xa, &ra), xb, true)
        } else {
            ((xb, &rb), xa, false)
        };
        for (x, t) in gap_closures(&req, side, toward)? {
            // A gap closing on the left side is a collapse as x_f grows.
            out.push(TransitionPoint {
                x_f: x,
                t_cr: t,
                kind: kind_of(!left),
            });
        }
    }
    out.retain(|p| p.x_f > range.0 && p.x_f <= range.1);
    out.sort_by(|a, b| {
        a.x_f
            .partial_cmp(&b.x_f)
            .unwrap()
            .then(a.t_cr.partial_cmp(&b.t_cr).unwrap())
    });
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub omega_ratio: f64,
    /// Unweighted sum over modes.
    pub v_tf: f64,
    pub per_mode: Vec<f64>,
}

/// Residual energy at `t_f` with every modal frequency scaled by each ratio
/// of an even grid over `ratio_range`, the profile held fixed.
pub fn robustness_sweep(
    profile: &BangOffBangProfile<f64>,
    plant: &PlantSpec<f64>,
    ratio_range: (f64, f64),
    points: usize,
) -> Result<Vec<SweepPoint>> {
    if points < 2 {
        return Err(Error::Domain(format!(
            "a sweep needs at least 2 points, got {points}"
        )));
    }
    let (lo, hi) = ratio_range;
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::Domain(format!("bad ratio range {ratio_range:?}")));
    }
    (0..points)
        .into_par_iter()
        .map(|i| {
            let ratio = lo + (hi - lo) * i as f64 / (points - 1) as f64;
            energy_at_ratio(profile, plant, ratio)
        })
        .collect()
}

/// One sweep point.
pub fn energy_at_ratio(
    profile: &BangOffBangProfile<f64>,
    plant: &PlantSpec<f64>,
    ratio: f64,
) -> Result<SweepPoint> {
    let p = plant.scaled_frequencies(ratio)?;
    let term = terminal_state(&p, profile, false)?;
    let report = residual_report(&p, &term, false)?;
    Ok(SweepPoint {
        omega_ratio: ratio,
        v_tf: report.total(),
        per_mode: report.modes.iter().map(|m| m.energy).collect(),
    })
}

/// `d^2V/d omega_k^2` at the nominal frequencies, per mode.
///
/// The profile must null the residual energy at nominal, so that the first
/// derivative vanishes too and the second is the curvature of the sweep.
pub fn curvature_at_nominal(
    profile: &BangOffBangProfile<f64>,
    plant: &PlantSpec<f64>,
) -> Result<Vec<f64>> {
    let report = residual_report_full(plant, profile)?;
    let limit = NOMINAL_ENERGY_TOL * plant.v_max() * plant.v_max();
    if report.total() > limit {
        return Err(Error::Contract(format!(
            "profile leaves residual energy {:.3e} at nominal (limit {limit:.3e})",
            report.total()
        )));
    }
    Ok(report
        .modes
        .iter()
        .map(|m| m.d2_energy.expect("full report"))
        .collect())
}

/// Five-point finite-difference curvature of mode `k`'s residual energy,
/// with step `h = rel * omega_k`.
pub fn curvature_stencil(
    profile: &BangOffBangProfile<f64>,
    plant: &PlantSpec<f64>,
    k: usize,
    rel: f64,
) -> Result<f64> {
    let mode = plant
        .modes()
        .get(k)
        .ok_or_else(|| Error::Domain(format!("mode {k} does not exist")))?;
    let w = mode.omega_n();
    let h = rel * w;
    let energy = |omega: f64| -> Result<f64> {
        let single = PlantSpec::single(mode.with_omega(omega)?, plant.v_max(), plant.x_f())?;
        let term = terminal_state(&single, profile, false)?;
        Ok(residual_report(&single, &term, false)?.modes[0].energy)
    };
    let f = [
        energy(w - 2.0 * h)?,
        energy(w - h)?,
        energy(w)?,
        energy(w + h)?,
        energy(w + 2.0 * h)?,
    ];
    Ok((-f[0] + 16.0 * f[1] - 30.0 * f[2] + 16.0 * f[3] - f[4]) / (12.0 * h * h))
}

/// Component of `G'(j omega)` that can change sign for an anti-symmetric
/// filter: `G(s) e^{s t_f/2}` is even or odd in `s`, so only one component of
/// `e^{j omega t_f/2} G'(j omega)` survives.
fn coincidence_measure(result: &DesignResult, omega: f64) -> Result<(f64, f64)> {
    let filter = TimeDelayFilter::from_profile(&result.profile)?;
    let s = Complex64::new(0.0, omega);
    let rot = Complex64::from_polar(1.0, omega * 0.5 * result.t_f());
    let d = rot * filter.eval_derivative(s);
    let g = if d.re.abs() >= d.im.abs() { d.re } else { d.im };
    Ok((g, d.norm()))
}

/// Displacements at which the non-robust design already has a double zero at
/// the undamped pole, so that robust and non-robust designs coincide.
///
/// The surviving component of `G'(j omega)` is scanned along each zone of the
/// closed-form branch and its sign changes refined by bisection. Zone
/// boundaries (pulse solutions) are skipped: there the zero is only simple.
pub fn find_coincidence_displacements(
    plant: &PlantSpec<f64>,
    range: (f64, f64),
) -> Result<Vec<f64>> {
    single_mode(plant, "coincidence search")?;
    if !plant.is_undamped() {
        return Err(Error::Domain(
            "coincidence search needs an undamped mode".into(),
        ));
    }
    check_range(range)?;
    let omega = plant.modes()[0].omega_n();
    let width = zone_width(plant);
    let req = DesignRequest::new(plant.clone(), false);
    let cells = (((range.1 - range.0) / (0.005 * width)).ceil() as usize).clamp(8, 20000);
    let xs = grid(range, cells);
    let measure = |x: f64| -> Result<f64> {
        let r = designer::design(&req.with_x_f(x)?)?;
        Ok(coincidence_measure(&r, omega)?.0)
    };
    let values: Vec<f64> = xs.par_iter().map(|&x| measure(x)).collect::<Result<_>>()?;
    let zone = |x: f64| (x / width).floor();
    let mut out = Vec::new();
    for j in 1..xs.len() {
        let (a, b) = (xs[j - 1], xs[j]);
        let (fa, fb) = (values[j - 1], values[j]);
        if (fa > 0.0) == (fb > 0.0) || fa == 0.0 {
            continue;
        }
        // A zone boundary inside the cell means a change of branch.
        let boundary = (zone(b) * width - a).abs() <= width * 1e-9 || zone(a) != zone(b);
        if boundary {
            continue;
        }
        let (mut lo, mut hi, mut flo) = (a, b, fa);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let fm = measure(mid)?;
            if (fm > 0.0) == (flo > 0.0) {
                lo = mid;
                flo = fm;
            } else {
                hi = mid;
            }
        }
        let x = 0.5 * (lo + hi);
        let r = designer::design(&req.with_x_f(x)?)?;
        let (_, norm) = coincidence_measure(&r, omega)?;
        if r.n_switches > 0 && norm <= DOUBLE_ZERO_TOL * r.t_f() {
            out.push(x);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LociPoint {
    pub x_f: f64,
    pub robust: bool,
    pub n_switches: usize,
    pub zeros: Vec<FilterZero<f64>>,
}

/// Zeros of the designed filters over an even displacement grid of `steps`
/// points, for the non-robust then the robust design at each displacement.
pub fn loci_sweep(
    plant: &PlantSpec<f64>,
    range: (f64, f64),
    window: &ComplexWindow<f64>,
    steps: usize,
    seeds: (usize, usize),
) -> Result<Vec<LociPoint>> {
    if steps < 2 {
        return Err(Error::Domain(format!(
            "a loci sweep needs at least 2 steps, got {steps}"
        )));
    }
    check_range(range)?;
    let (lo, hi) = range;
    let xs: Vec<f64> = (0..steps)
        .map(|i| lo + (hi - lo) * i as f64 / (steps - 1) as f64)
        .map(|x| if x > 0.0 { x } else { 1e-3 * (hi - lo) })
        .collect();
    let mut out = Vec::with_capacity(2 * steps);
    for robust in [false, true] {
        let req = DesignRequest::new(plant.clone(), robust);
        let designs = designer::design_sweep(&req, &xs);
        let points: Vec<LociPoint> = xs
            .par_iter()
            .zip(designs.into_par_iter())
            .map(|(&x, r)| {
                let r = r?;
                let zeros = TimeDelayFilter::from_profile(&r.profile)?.find_zeros(window, seeds)?;
                Ok(LociPoint {
                    x_f: x,
                    robust,
                    n_switches: r.n_switches,
                    zeros,
                })
            })
            .collect::<Result<_>>()?;
        out.extend(points);
    }
    Ok(out)
}

/// Largest distance from a zero to the nearest zero of the next grid point,
/// over consecutive points of one variant that share a switch count.
pub fn locus_continuity(points: &[LociPoint]) -> f64 {
    points
        .windows(2)
        .filter(|w| w[0].robust == w[1].robust && w[0].n_switches == w[1].n_switches)
        .flat_map(|w| {
            w[0].zeros.iter().filter_map(move |z| {
                w[1].zeros
                    .iter()
                    .map(|y| (y.s - z.s).norm())
                    .min_by(|a, b| a.partial_cmp(b).unwrap())
            })
        })
        .fold(0.0, f64::max)
}
