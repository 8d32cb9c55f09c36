//! General N-switch designer for multi-mode, damped or undamped plants.
//!
//! Designs are found by continuation in the terminal displacement. At small
//! displacements the optimal command is an impulse shaper whose impulses have
//! been stretched into short pulses, which gives a starting point for any mode
//! set. Each continuation step re-solves the program from the previous point,
//! removes switch pairs whose gap closes, and inserts a pair wherever the
//! reconstructed switching function takes the wrong sign. Undamped single-mode
//! non-robust requests start directly from the closed-form zone solution.

mod nlp;
pub mod pmp;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::closed_form;
use crate::error::{Error, Result};
use crate::plant::{terminal_state, PlantSpec};
use crate::profile::BangOffBangProfile;
use crate::tdfilter::TimeDelayFilter;

pub use pmp::{PmpCertificate, SignViolation, SwitchingFunction};

/// Reported constraint residuals must be below this.
pub const REPORTED_TOL: f64 = 1e-9;
/// Default cap on the switch count.
pub const DEFAULT_MAX_SWITCHES: usize = 16;

#[derive(Clone, Debug, PartialEq)]
pub struct DesignRequest {
    pub plant: PlantSpec<f64>,
    pub robust: bool,
    /// Modes to desensitize; ignored unless `robust`.
    pub robust_modes: Vec<usize>,
    pub max_switches: usize,
}

impl DesignRequest {
    /// Request over all modes, robust to every mode frequency if `robust`.
    pub fn new(plant: PlantSpec<f64>, robust: bool) -> Self {
        let robust_modes = if robust {
            (0..plant.modes().len()).collect()
        } else {
            Vec::new()
        };
        Self {
            plant,
            robust,
            robust_modes,
            max_switches: DEFAULT_MAX_SWITCHES,
        }
    }

    pub fn with_max_switches(mut self, n: usize) -> Self {
        self.max_switches = n;
        self
    }

    pub fn with_x_f(&self, x_f: f64) -> Result<Self> {
        Ok(Self {
            plant: self.plant.with_x_f(x_f)?,
            ..self.clone()
        })
    }

    fn active_robust_modes(&self) -> &[usize] {
        if self.robust {
            &self.robust_modes
        } else {
            &[]
        }
    }

    fn validate(&self) -> Result<()> {
        if self.max_switches % 2 != 0 {
            return Err(Error::Domain(format!(
                "max_switches must be even, got {}",
                self.max_switches
            )));
        }
        let m = self.plant.modes().len();
        if let Some(&k) = self.robust_modes.iter().find(|&&k| k >= m) {
            return Err(Error::Domain(format!(
                "robust mode {k} does not exist ({m} modes)"
            )));
        }
        if self.robust && self.robust_modes.is_empty() {
            return Err(Error::Domain("robust request names no modes".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintResidual {
    pub label: String,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DesignResult {
    pub profile: BangOffBangProfile<f64>,
    pub n_switches: usize,
    /// Pole-cancellation rows are components of `G(p)`, robust rows of
    /// `omega G'(p)`, and the displacement row is `omega_1 (x - x_f) / V_m`.
    pub constraint_residuals: Vec<ConstraintResidual>,
    pub pmp_certificate: Option<PmpCertificate>,
    pub robust: bool,
    pub robust_modes: Vec<usize>,
}

impl DesignResult {
    pub fn max_residual(&self) -> f64 {
        self.constraint_residuals
            .iter()
            .map(|r| r.value.abs())
            .fold(0.0, f64::max)
    }

    pub fn t_f(&self) -> f64 {
        self.profile.t_f()
    }
}

/// Single-mode impulse shaper: zero vibration, or zero vibration and
/// derivative when `robust`. Returns `(time, amplitude)` pairs.
fn shaper(sigma: f64, omega_d: f64, zeta: f64, robust: bool) -> Vec<(f64, f64)> {
    let _ = sigma;
    let k = (-zeta * std::f64::consts::PI / (1.0 - zeta * zeta).sqrt()).exp();
    let half = std::f64::consts::PI / omega_d;
    if robust {
        let s = (1.0 + k) * (1.0 + k);
        vec![(0.0, 1.0 / s), (half, 2.0 * k / s), (2.0 * half, k * k / s)]
    } else {
        vec![(0.0, 1.0 / (1.0 + k)), (half, k / (1.0 + k))]
    }
}

fn convolve(a: &[(f64, f64)], b: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = a
        .iter()
        .flat_map(|&(ta, aa)| b.iter().map(move |&(tb, ab)| (ta + tb, aa * ab)))
        .collect();
    out.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
    let mut merged: Vec<(f64, f64)> = Vec::with_capacity(out.len());
    for (t, amp) in out {
        match merged.last_mut() {
            Some(last) if (t - last.0).abs() < 1e-9 => last.1 += amp,
            _ => merged.push((t, amp)),
        }
    }
    merged
}

/// Impulse shaper stretched into pulses whose on-times sum to `x_f / V_m`.
fn shaper_seed(req: &DesignRequest, x_f: f64) -> Vec<f64> {
    let plant = &req.plant;
    let robust = req.active_robust_modes();
    let mut imp = vec![(0.0, 1.0)];
    for (k, m) in plant.modes().iter().enumerate() {
        imp = convolve(
            &imp,
            &shaper(m.sigma(), m.omega_d(), m.zeta(), robust.contains(&k)),
        );
    }
    let width = x_f / plant.v_max();
    let mut delays = Vec::with_capacity(2 * imp.len());
    for (j, &(t, amp)) in imp.iter().enumerate() {
        let w = amp * width;
        if j > 0 {
            delays.push(t);
        }
        delays.push(t + w);
    }
    delays
}

/// Displacement scale over which the structure of the design can change.
fn structure_scale(plant: &PlantSpec<f64>) -> f64 {
    let w_max = plant
        .modes()
        .iter()
        .map(|m| m.omega_n())
        .fold(0.0, f64::max);
    std::f64::consts::TAU * plant.v_max() / w_max
}

/// Solver state carried along the continuation.
#[derive(Clone, Debug)]
struct Branch {
    delays: Vec<f64>,
}

fn profile_of(delays: &[f64], v_max: f64) -> Result<BangOffBangProfile<f64>> {
    let (last, rest) = delays
        .split_last()
        .ok_or_else(|| Error::Solver("empty delay vector".into()))?;
    BangOffBangProfile::new(rest.to_vec(), *last, v_max)
}

/// Toggles the command on every violating region. A region that reaches an
/// existing switch moves that switch instead of adding a pair.
/// With `interior` the toggles are a narrow pair around the worst point
/// instead, for when moving the switch leads back to the same design.
fn insert_pairs(delays: &[f64], cert: &PmpCertificate, interior: bool) -> Option<Vec<f64>> {
    let t_f = *delays.last()?;
    let mut toggles = delays[..delays.len() - 1].to_vec();
    for v in &cert.violations {
        let start = if v.segment == 0 {
            0.0
        } else {
            delays[v.segment - 1]
        };
        let end = delays[v.segment];
        let mut a = v.enter.unwrap_or(start);
        let mut b = v.exit.unwrap_or(end);
        if interior {
            let half = 0.25 * (b - a);
            let c = v.t.clamp(a + half, b - half);
            (a, b) = (c - half, c + half);
        }
        if !(b > a) || a <= 0.0 || b >= t_f {
            return None;
        }
        for x in [a, b] {
            match toggles.iter().position(|&y| (y - x).abs() <= 1e-12 * t_f) {
                Some(i) => {
                    toggles.remove(i);
                }
                None => toggles.push(x),
            }
        }
    }
    toggles.sort_by(|x, y| x.partial_cmp(y).unwrap());
    toggles.push(t_f);
    (toggles != delays).then_some(toggles)
}

/// Starting points for leaving a branch whose narrow pulses or gaps are
/// vanishing: those pairs are dropped and as many narrow toggles are placed
/// at a grid of positions inside the remaining segments.
fn rescue_seeds(delays: &[f64]) -> Vec<Vec<f64>> {
    const POSITIONS: usize = 7;
    let t_f = delays[delays.len() - 1];
    let narrow = 1e-3 * t_f;
    let mut base = delays.to_vec();
    let mut removed = 0;
    while let Some(q) = (1..base.len() - 1).find(|&q| base[q] - base[q - 1] < narrow) {
        nlp::remove_pair(&mut base, q);
        removed += 1;
    }
    if removed == 0 || removed > 2 {
        return Vec::new();
    }
    let mut slots = Vec::new();
    let mut a = 0.0;
    for &b in &base {
        if b - a > 4.0 * narrow {
            slots.extend((1..=POSITIONS).map(|j| a + (b - a) * j as f64 / (POSITIONS + 1) as f64));
        }
        a = b;
    }
    let mut picks: Vec<Vec<usize>> = vec![Vec::new()];
    for _ in 0..removed {
        picks = picks
            .into_iter()
            .flat_map(|p| {
                let from = p.last().map_or(0, |&i| i + 1);
                (from..slots.len()).map(move |i| [p.clone(), vec![i]].concat())
            })
            .collect();
    }
    picks
        .into_iter()
        .map(|pick| {
            let mut seed = base.clone();
            seed.extend(
                pick.iter()
                    .flat_map(|&i| [slots[i] - 0.5 * narrow, slots[i] + 0.5 * narrow]),
            );
            seed.sort_by(f64::total_cmp);
            seed
        })
        .collect()
}

/// Solves at one displacement from a starting point, adapting the structure
/// until the costate check passes.
fn solve_adaptive(
    req: &DesignRequest,
    x_f: f64,
    start: Vec<f64>,
) -> Result<(Branch, PmpCertificate)> {
    let plant = req.plant.with_x_f(x_f)?;
    let robust = req.active_robust_modes();
    let prob = nlp::Problem::new(&plant, robust);
    let mut point = start;
    let mut inserted = 0;
    let mut seen: Vec<Vec<f64>> = Vec::new();
    // Last uncertified design, kept to retry with interior toggles.
    let mut last: Option<(Vec<f64>, PmpCertificate)> = None;
    loop {
        let s = match nlp::solve(&prob, &point, true) {
            Ok(s) => s,
            Err(e) => {
                let (ls, lc) = last.take().ok_or(e)?;
                point = insert_pairs(&ls, &lc, true).ok_or_else(|| {
                    Error::Solver(format!("no restorable structure at x_f = {x_f}"))
                })?;
                continue;
            }
        };
        let prof = profile_of(&s, plant.v_max())?;
        let cert = pmp::certify(&plant, &prof, robust);
        if cert.passed {
            return Ok((Branch { delays: s }, cert));
        }
        if cert.fit_residual > pmp::FIT_TOL || inserted >= 4 {
            return Err(Error::Solver(format!(
                "no extremal structure at x_f = {x_f} (fit residual {:.2e}, {} violations)",
                cert.fit_residual,
                cert.violations.len()
            )));
        }
        let t_f = s[s.len() - 1];
        let repeated = seen.iter().any(|o| {
            o.len() == s.len() && o.iter().zip(&s).all(|(a, b)| (a - b).abs() <= 1e-9 * t_f)
        });
        seen.push(s.clone());
        last = (!repeated).then(|| (s.clone(), cert.clone()));
        let t = insert_pairs(&s, &cert, repeated).ok_or_else(|| {
            Error::Solver(format!(
                "switching function violation at the start or end of the maneuver, x_f = {x_f}"
            ))
        })?;
        if t.len() - 1 > req.max_switches {
            return Err(Error::Infeasible(format!(
                "the optimal structure at x_f = {x_f} needs more than {} switches; raise max_switches",
                req.max_switches
            )));
        }
        point = t;
        inserted += 1;
    }
}

/// Continuation from the impulse-shaper limit up to `x_f`.
fn continuation(req: &DesignRequest, x_f: f64) -> Result<(Branch, PmpCertificate)> {
    let scale = structure_scale(&req.plant);
    let h_max = 0.05 * scale;
    // Very narrow pulses make the costate fit ill-conditioned; widen the
    // start if it does not certify.
    let mut x0 = x_f.min(0.5 * h_max);
    let (mut branch, mut cert) = loop {
        match solve_adaptive(req, x0, shaper_seed(req, x0)) {
            Ok(found) => break found,
            Err(e @ Error::Infeasible(_)) => return Err(e),
            Err(e) if x0 >= x_f.min(4.0 * h_max) => return Err(e),
            Err(_) => x0 = (2.0 * x0).min(x_f),
        }
    };
    let mut x = x0;
    let mut h = h_max;
    let mut prev: Option<(f64, Vec<f64>)> = None;
    while x < x_f {
        let next = (x + h).min(x_f);
        // Secant predictor when the structure is unchanged.
        let mut guess = branch.delays.clone();
        if let Some((xp, tp)) = &prev {
            if tp.len() == guess.len() {
                let r = (next - x) / (x - xp);
                for (g, p) in guess.iter_mut().zip(tp) {
                    *g += r * (*g - p);
                }
            }
        }
        let attempt = solve_adaptive(req, next, guess)
            .or_else(|_| solve_adaptive(req, next, branch.delays.clone()));
        match attempt {
            Ok((b, c)) => {
                prev = Some((x, branch.delays.clone()));
                branch = b;
                cert = c;
                x = next;
                h = (h * 1.5).min(h_max);
            }
            Err(e @ Error::Infeasible(_)) => return Err(e),
            Err(e) => {
                h *= 0.5;
                if h < 1e-7 * scale {
                    // A dead branch: jump ahead from reseeded structures.
                    let ahead = (x + h_max).min(x_f);
                    let (b, c) = rescue_seeds(&branch.delays)
                        .into_iter()
                        .find_map(|seed| solve_adaptive(req, ahead, seed).ok())
                        .ok_or(e)?;
                    branch = b;
                    cert = c;
                    x = ahead;
                    h = h_max;
                    prev = None;
                }
            }
        }
    }
    Ok((branch, cert))
}

fn closed_form_start(req: &DesignRequest) -> Result<Vec<f64>> {
    let m = &req.plant.modes()[0];
    let sol = closed_form::solve(req.plant.x_f(), m.omega_n(), req.plant.v_max())?;
    Ok(sol.to_profile(m.omega_n(), req.plant.v_max())?.delays())
}

/// True when the closed form applies: one undamped mode, no robustness.
pub fn closed_form_applies(req: &DesignRequest) -> bool {
    req.plant.modes().len() == 1 && req.plant.is_undamped() && !req.robust
}

fn finish(
    req: &DesignRequest,
    delays: Vec<f64>,
    cert: Option<PmpCertificate>,
) -> Result<DesignResult> {
    let robust = req.active_robust_modes();
    let prob = nlp::Problem::new(&req.plant, robust);
    let profile = profile_of(&delays, req.plant.v_max())?;
    let values = prob.residuals(&delays);
    let constraint_residuals = prob
        .labels()
        .iter()
        .zip(values.iter())
        .map(|(label, &value)| ConstraintResidual {
            label: label.clone(),
            value,
        })
        .collect();
    let result = DesignResult {
        n_switches: profile.n_switches(),
        profile,
        constraint_residuals,
        pmp_certificate: cert,
        robust: req.robust,
        robust_modes: robust.to_vec(),
    };
    if result.max_residual() > REPORTED_TOL {
        return Err(Error::Infeasible(format!(
            "constraint residual {:.3e} exceeds {REPORTED_TOL:e}",
            result.max_residual()
        )));
    }
    if result.n_switches > req.max_switches {
        return Err(Error::Infeasible(format!(
            "design needs {} switches, above the cap of {}; raise max_switches",
            result.n_switches, req.max_switches
        )));
    }
    Ok(result)
}

/// Minimum-time design for the request.
pub fn design(req: &DesignRequest) -> Result<DesignResult> {
    req.validate()?;
    if closed_form_applies(req) {
        return design_closed_form(req);
    }
    let (branch, cert) = match continuation(req, req.plant.x_f()) {
        Err(Error::Solver(msg)) if !req.robust => {
            // A robust design meets every plain constraint; descend from it.
            let strict = DesignRequest {
                max_switches: 2 * req.max_switches,
                ..DesignRequest::new(req.plant.clone(), true)
            };
            let (seed, _) =
                continuation(&strict, req.plant.x_f()).map_err(|_| Error::Solver(msg))?;
            solve_adaptive(req, req.plant.x_f(), seed.delays)?
        }
        other => other?,
    };
    finish(req, branch.delays, Some(cert))
}

/// Closed-form design polished by the program; errors unless
/// [`closed_form_applies`].
pub fn design_closed_form(req: &DesignRequest) -> Result<DesignResult> {
    req.validate()?;
    if !closed_form_applies(req) {
        return Err(Error::Domain(
            "closed form needs one undamped mode and a non-robust request".into(),
        ));
    }
    let mut delays = closed_form_start(req)?;
    let prob = nlp::Problem::new(&req.plant, &[]);
    if delays.len() >= prob.n_constraints() {
        // The closed form is already exact; keep it if the polish stalls.
        if let Ok(polished) = nlp::solve(&prob, &delays, false) {
            delays = polished;
        }
    }
    let profile = profile_of(&delays, req.plant.v_max())?;
    let cert = pmp::certify(&req.plant, &profile, &[]);
    finish(req, delays, Some(cert))
}

/// Solves the program with a fixed switch structure from `delays`, without
/// collapse or insertion. Used to follow one branch through a transition.
pub fn solve_fixed_structure(req: &DesignRequest, delays: &[f64]) -> Result<DesignResult> {
    req.validate()?;
    let robust = req.active_robust_modes();
    let prob = nlp::Problem::new(&req.plant, robust);
    let s = nlp::solve(&prob, delays, false)?;
    let profile = profile_of(&s, req.plant.v_max())?;
    let cert = pmp::certify(&req.plant, &profile, robust);
    finish(req, s, Some(cert))
}

/// Designs every displacement of a grid (in parallel, output in grid order).
pub fn design_sweep(req: &DesignRequest, x_fs: &[f64]) -> Vec<Result<DesignResult>> {
    use rayon::prelude::*;
    x_fs.par_iter()
        .map(|&x| req.with_x_f(x).and_then(|r| design(&r)))
        .collect()
}

/// Costate certificate of a non-robust design.
pub fn verify_pmp(result: &DesignResult, plant: &PlantSpec<f64>) -> PmpCertificate {
    pmp::certify(plant, &result.profile, &[])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    /// `(dx/d omega, dv/d omega)` at `t_f` for each checked mode.
    pub sensitivities: Vec<(usize, f64, f64)>,
    /// `|G'(p_k)|` for the same modes.
    pub filter_derivative: Vec<f64>,
    pub threshold: f64,
    pub passed: bool,
}

/// Terminal frequency sensitivities from augmented simulation, checked
/// against `1e-7 x_f`.
pub fn robust_equivalence_check(
    result: &DesignResult,
    plant: &PlantSpec<f64>,
) -> Result<RobustnessReport> {
    let modes: Vec<usize> = if result.robust_modes.is_empty() {
        (0..plant.modes().len()).collect()
    } else {
        result.robust_modes.clone()
    };
    let term = terminal_state(plant, &result.profile, true)?;
    let sens = term.sensitivity.as_ref().ok_or(Error::MissingSensitivity)?;
    let filter = TimeDelayFilter::from_profile(&result.profile)?;
    let threshold = 1e-7 * plant.x_f();
    let sensitivities: Vec<(usize, f64, f64)> =
        modes.iter().map(|&k| (k, sens[k].x, sens[k].v)).collect();
    let filter_derivative = modes
        .iter()
        .map(|&k| {
            let m = &plant.modes()[k];
            filter
                .eval_derivative(Complex64::new(-m.sigma(), m.omega_d()))
                .norm()
        })
        .collect();
    let passed = sensitivities
        .iter()
        .all(|&(_, x, v)| x.abs() <= threshold && v.abs() <= threshold);
    Ok(RobustnessReport {
        sensitivities,
        filter_derivative,
        threshold,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::ModeSpec;
    use std::f64::consts::PI;

    fn request(zeta: f64, x_f: f64, robust: bool) -> DesignRequest {
        let m = ModeSpec::new(2.0 * PI, zeta).unwrap();
        DesignRequest::new(PlantSpec::single(m, 240.0, x_f).unwrap(), robust)
    }

    #[test]
    fn shaper_seed_places_pulses_at_impulses() {
        let req = request(0.0, 10.0, false);
        let d = shaper_seed(&req, 10.0);
        assert_eq!(d.len(), 3);
        assert!((d[0] - 10.0 / 480.0).abs() < 1e-15);
        assert!((d[1] - 0.5).abs() < 1e-15);
        let robust = shaper_seed(&request(0.0, 10.0, true), 10.0);
        assert_eq!(robust.len(), 5);
    }

    #[test]
    fn closed_form_design_zone1() {
        let r = design(&request(0.0, 100.0, false)).unwrap();
        assert_eq!(r.n_switches, 2);
        assert!((r.t_f() - 0.708_333_333_333_333).abs() < 1e-12);
        assert!(r.pmp_certificate.as_ref().unwrap().passed);
    }

    #[test]
    fn continuation_reproduces_undamped_zone1() {
        let req = request(0.0, 100.0, false);
        let (b, cert) = continuation(&req, 100.0).unwrap();
        let exact = closed_form_start(&req).unwrap();
        assert!(cert.passed);
        assert_eq!(b.delays.len(), exact.len());
        for (a, e) in b.delays.iter().zip(&exact) {
            assert!((a - e).abs() < 1e-9, "{a} vs {e}");
        }
    }

    #[test]
    fn damped_zone1_cancels_the_pole() {
        let r = design(&request(0.01, 100.0, false)).unwrap();
        assert_eq!(r.n_switches, 2);
        assert!(r.max_residual() < 1e-12);
    }

    #[test]
    fn robust_design_is_slower_and_desensitized() {
        let plain = design(&request(0.0, 100.0, false)).unwrap();
        let rob = design(&request(0.0, 100.0, true)).unwrap();
        assert!(rob.t_f() > plain.t_f());
        let rep = robust_equivalence_check(&rob, &request(0.0, 100.0, true).plant).unwrap();
        assert!(rep.passed, "{rep:?}");
        let rep = robust_equivalence_check(&plain, &request(0.0, 100.0, false).plant).unwrap();
        assert!(!rep.passed);
    }

    #[test]
    fn odd_cap_is_rejected() {
        let req = request(0.0, 100.0, false).with_max_switches(3);
        assert!(matches!(design(&req), Err(Error::Domain(_))));
    }
}
