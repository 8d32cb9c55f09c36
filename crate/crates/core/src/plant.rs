//! Linear modal plant, exact piecewise simulation and residual-energy metrics.
//!
//! Each mode obeys `x'' + 2 zeta omega x' + omega^2 x = omega^2 x_i`, where the
//! trolley position `x_i` integrates the commanded velocity. Under a constant
//! velocity command the response is available in closed form, so trajectories
//! are evaluated exactly at every requested sample from the state at the start
//! of the enclosing segment. Modes are decoupled and simulated independently.

use num_complex::Complex;

use crate::dual::Dual;
use crate::error::{Error, Result};
use crate::profile::BangOffBangProfile;
use crate::scalar::Real;

/// One vibratory mode: natural frequency (rad/s) and damping ratio.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModeSpec<T> {
    omega_n: T,
    zeta: T,
}

impl<T: Real> ModeSpec<T> {
    pub fn new(omega_n: T, zeta: T) -> Result<Self> {
        if !(omega_n > T::zero()) || !omega_n.is_finite() {
            return Err(Error::Domain(format!(
                "natural frequency must be positive, got {omega_n}"
            )));
        }
        if !(zeta >= T::zero() && zeta < T::one()) {
            return Err(Error::Domain(format!(
                "damping ratio must lie in [0, 1), got {zeta}"
            )));
        }
        Ok(Self { omega_n, zeta })
    }

    pub fn undamped(omega_n: T) -> Result<Self> {
        Self::new(omega_n, T::zero())
    }

    /// Frequency given in Hz.
    pub fn from_hz(freq_hz: T, zeta: T) -> Result<Self> {
        Self::new(T::lit(2.0) * T::PI() * freq_hz, zeta)
    }

    pub fn omega_n(&self) -> T {
        self.omega_n
    }

    pub fn zeta(&self) -> T {
        self.zeta
    }

    /// Decay rate `zeta * omega_n`.
    pub fn sigma(&self) -> T {
        self.zeta * self.omega_n
    }

    /// Damped frequency `omega_n * sqrt(1 - zeta^2)`.
    pub fn omega_d(&self) -> T {
        self.omega_n * (T::one() - self.zeta * self.zeta).sqrt()
    }

    /// Upper-half-plane pole `-sigma + j omega_d`.
    pub fn pole(&self) -> Complex<T> {
        Complex::new(-self.sigma(), self.omega_d())
    }

    pub fn with_omega(&self, omega_n: T) -> Result<Self> {
        Self::new(omega_n, self.zeta)
    }

    pub fn cast<U: Real>(&self) -> ModeSpec<U> {
        ModeSpec {
            omega_n: U::lit(self.omega_n.value()),
            zeta: U::lit(self.zeta.value()),
        }
    }
}

/// Small-angle pendulum of cable length `length_m` under gravity `g`.
pub fn mode_from_cable_length<T: Real>(length_m: T, g: T) -> Result<ModeSpec<T>> {
    if !(length_m > T::zero()) || !(g > T::zero()) {
        return Err(Error::Domain(format!(
            "cable length and gravity must be positive (L = {length_m}, g = {g})"
        )));
    }
    ModeSpec::undamped((g / length_m).sqrt())
}

/// The design problem statement: modes, velocity limit (mm/s) and the
/// terminal displacement (mm).
#[derive(Clone, Debug, PartialEq)]
pub struct PlantSpec<T> {
    modes: Vec<ModeSpec<T>>,
    v_max: T,
    x_f: T,
}

impl<T: Real> PlantSpec<T> {
    pub fn new(modes: Vec<ModeSpec<T>>, v_max: T, x_f: T) -> Result<Self> {
        if modes.is_empty() {
            return Err(Error::Domain("plant needs at least one mode".into()));
        }
        if modes.windows(2).any(|w| !(w[1].omega_n > w[0].omega_n)) {
            return Err(Error::Domain(
                "modes must have strictly increasing natural frequency".into(),
            ));
        }
        if !(v_max > T::zero()) || !v_max.is_finite() {
            return Err(Error::Domain(format!(
                "velocity limit must be positive, got {v_max}"
            )));
        }
        if !(x_f > T::zero()) || !x_f.is_finite() {
            return Err(Error::Domain(format!(
                "terminal displacement must be positive, got {x_f}"
            )));
        }
        Ok(Self { modes, v_max, x_f })
    }

    pub fn single(mode: ModeSpec<T>, v_max: T, x_f: T) -> Result<Self> {
        Self::new(vec![mode], v_max, x_f)
    }

    pub fn modes(&self) -> &[ModeSpec<T>] {
        &self.modes
    }

    pub fn v_max(&self) -> T {
        self.v_max
    }

    pub fn x_f(&self) -> T {
        self.x_f
    }

    pub fn with_x_f(&self, x_f: T) -> Result<Self> {
        Self::new(self.modes.clone(), self.v_max, x_f)
    }

    /// Same plant with every natural frequency scaled by `ratio`.
    pub fn scaled_frequencies(&self, ratio: T) -> Result<Self> {
        let modes = self
            .modes
            .iter()
            .map(|m| m.with_omega(m.omega_n * ratio))
            .collect::<Result<Vec<_>>>()?;
        Self::new(modes, self.v_max, self.x_f)
    }

    pub fn is_undamped(&self) -> bool {
        self.modes.iter().all(|m| m.zeta == T::zero())
    }

    pub fn cast<U: Real>(&self) -> PlantSpec<U> {
        PlantSpec {
            modes: self.modes.iter().map(|m| m.cast()).collect(),
            v_max: U::lit(self.v_max.value()),
            x_f: U::lit(self.x_f.value()),
        }
    }
}

/// Position (mm) and velocity (mm/s) of one mode.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModalState<T> {
    pub x: T,
    pub v: T,
}

/// Plant state at one instant. `sensitivity[k]` holds `d/d omega_n` of mode
/// `k`'s state with respect to its own natural frequency.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector<T> {
    pub t: T,
    pub modes: Vec<ModalState<T>>,
    pub trolley: T,
    pub sensitivity: Option<Vec<ModalState<T>>>,
}

impl<T: Real> StateVector<T> {
    /// `2m + 1` for plain states, `4m + 1` with sensitivities.
    pub fn dim(&self) -> usize {
        let m = self.modes.len();
        match self.sensitivity {
            Some(_) => 4 * m + 1,
            None => 2 * m + 1,
        }
    }

    /// Flattened `(x_1, v_1, ..., x_m, v_m, x_i[, dx_1, dv_1, ...])`.
    pub fn to_vec(&self) -> Vec<T> {
        let mut out: Vec<T> = self.modes.iter().flat_map(|s| [s.x, s.v]).collect();
        out.push(self.trolley);
        if let Some(sens) = &self.sensitivity {
            out.extend(sens.iter().flat_map(|s| [s.x, s.v]));
        }
        out
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SimOptions<T> {
    /// Also propagate frequency-sensitivity states.
    pub augmented: bool,
    /// Add a uniform sampling grid with this spacing.
    pub dt: Option<T>,
    /// Continue (with zero velocity) up to this time when it exceeds `t_f`.
    pub t_end: Option<T>,
}

/// States sampled at `t = 0`, every switch time, `t_f`, and any extra grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory<T> {
    pub samples: Vec<StateVector<T>>,
}

impl<T: Real> Trajectory<T> {
    /// State at `t_f` (the last sample at or before the maneuver end).
    pub fn at(&self, t: T) -> Option<&StateVector<T>> {
        self.samples.iter().find(|s| s.t == t)
    }

    pub fn last(&self) -> &StateVector<T> {
        self.samples
            .last()
            .expect("trajectory holds at least the initial sample")
    }
}

/// Closed-form response of one mode over a constant-velocity interval.
///
/// `(x0, v0)` is the modal state and `xi0` the trolley position at the start
/// of the interval; returns the modal state after `tau`.
fn propagate<T: Real>(mode: &ModeSpec<T>, x0: T, v0: T, xi0: T, vin: T, tau: T) -> ModalState<T> {
    let w2 = mode.omega_n * mode.omega_n;
    let sigma = mode.sigma();
    let wd = mode.omega_d();
    // Ramp particular solution lags the trolley by 2 sigma v / omega^2.
    let lag = T::lit(2.0) * sigma * vin / w2;
    let e0 = x0 - (xi0 - lag);
    let de0 = v0 - vin;
    let (s, c) = (wd * tau).sin_cos();
    let decay = (-sigma * tau).exp();
    let e = decay * (e0 * c + (de0 + sigma * e0) / wd * s);
    let de = decay * (de0 * c - (w2 * e0 + sigma * de0) / wd * s);
    ModalState {
        x: e + xi0 + vin * tau - lag,
        v: de + vin,
    }
}

fn sample_times<T: Real>(profile: &BangOffBangProfile<T>, opts: &SimOptions<T>) -> Result<Vec<T>> {
    let mut times = vec![T::zero()];
    times.extend(profile.delays());
    let end = match opts.t_end {
        Some(te) if te > profile.t_f() => te,
        _ => profile.t_f(),
    };
    if let Some(te) = opts.t_end {
        if te > profile.t_f() {
            times.push(te);
        }
    }
    if let Some(dt) = opts.dt {
        if !(dt > T::zero()) {
            return Err(Error::Domain(format!(
                "sampling step must be positive, got {dt}"
            )));
        }
        let n = (end / dt).floor().to_usize().unwrap_or(0);
        times.extend(
            (1..=n)
                .map(|k| T::from_usize(k).unwrap() * dt)
                .filter(|&t| t <= end),
        );
    }
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    times.dedup();
    Ok(times)
}

/// Segment boundaries: each profile segment plus a trailing coast.
fn segment_table<T: Real>(profile: &BangOffBangProfile<T>) -> Vec<(T, T)> {
    // (start time, velocity)
    let mut table: Vec<(T, T)> = profile
        .segments()
        .iter()
        .map(|s| (s.start, if s.on { profile.v_max() } else { T::zero() }))
        .collect();
    table.push((profile.t_f(), T::zero()));
    table
}

/// Trajectory of one mode at the given (sorted) times.
///
/// Also returns the trolley position at each time.
fn simulate_mode<T: Real>(
    mode: &ModeSpec<T>,
    profile: &BangOffBangProfile<T>,
    times: &[T],
) -> (Vec<ModalState<T>>, Vec<T>) {
    let table = segment_table(profile);
    // State at the start of each segment.
    let mut starts = Vec::with_capacity(table.len());
    let mut state = ModalState {
        x: T::zero(),
        v: T::zero(),
    };
    let mut xi = T::zero();
    for (k, &(t0, vin)) in table.iter().enumerate() {
        starts.push((state, xi));
        if let Some(&(t1, _)) = table.get(k + 1) {
            let tau = t1 - t0;
            state = propagate(mode, state.x, state.v, xi, vin, tau);
            xi = xi + vin * tau;
        }
    }
    let mut out = Vec::with_capacity(times.len());
    let mut trolley = Vec::with_capacity(times.len());
    let mut seg = 0;
    for &t in times {
        while seg + 1 < table.len() && table[seg + 1].0 <= t {
            seg += 1;
        }
        let (t0, vin) = table[seg];
        let (s0, xi0) = starts[seg];
        let tau = t - t0;
        out.push(propagate(mode, s0.x, s0.v, xi0, vin, tau));
        trolley.push(xi0 + vin * tau);
    }
    (out, trolley)
}

/// Exact simulation from rest under a bang-off-bang command.
pub fn simulate<T: Real>(
    plant: &PlantSpec<T>,
    profile: &BangOffBangProfile<T>,
    opts: &SimOptions<T>,
) -> Result<Trajectory<T>> {
    let times = sample_times(profile, opts)?;
    let mut per_mode = Vec::with_capacity(plant.modes().len());
    let mut trolley = Vec::new();
    for mode in plant.modes() {
        let (states, xi) = simulate_mode(mode, profile, &times);
        per_mode.push(states);
        trolley = xi;
    }
    let sens = if opts.augmented {
        let dual_profile: BangOffBangProfile<Dual<T>> = BangOffBangProfile::new(
            profile
                .switch_times()
                .iter()
                .map(|&t| Dual::cst(t))
                .collect(),
            Dual::cst(profile.t_f()),
            Dual::cst(profile.v_max()),
        )?;
        let dual_times: Vec<Dual<T>> = times.iter().map(|&t| Dual::cst(t)).collect();
        let rows = plant
            .modes()
            .iter()
            .map(|m| {
                let dm = ModeSpec {
                    omega_n: Dual::var(m.omega_n),
                    zeta: Dual::cst(m.zeta),
                };
                simulate_mode(&dm, &dual_profile, &dual_times)
                    .0
                    .into_iter()
                    .map(|s| ModalState {
                        x: s.x.eps,
                        v: s.v.eps,
                    })
                    .collect::<Vec<_>>()
            })
            .collect::<Vec<_>>();
        Some(rows)
    } else {
        None
    };
    let samples = times
        .iter()
        .enumerate()
        .map(|(i, &t)| StateVector {
            t,
            modes: per_mode.iter().map(|m| m[i]).collect(),
            trolley: trolley[i],
            sensitivity: sens.as_ref().map(|s| s.iter().map(|m| m[i]).collect()),
        })
        .collect();
    Ok(Trajectory { samples })
}

/// Simulated state at `t_f`.
pub fn terminal_state<T: Real>(
    plant: &PlantSpec<T>,
    profile: &BangOffBangProfile<T>,
    augmented: bool,
) -> Result<StateVector<T>> {
    let traj = simulate(
        plant,
        profile,
        &SimOptions {
            augmented,
            dt: None,
            t_end: None,
        },
    )?;
    Ok(traj.last().clone())
}

/// Residual energy of one mode and its frequency derivatives at `t_f`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModeResidual<T> {
    pub energy: T,
    pub d_energy: Option<T>,
    pub d2_energy: Option<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResidualReport<T> {
    pub modes: Vec<ModeResidual<T>>,
}

impl<T: Real> ResidualReport<T> {
    /// Unweighted sum of the per-mode residual energies.
    pub fn total(&self) -> T {
        self.modes.iter().fold(T::zero(), |acc, m| acc + m.energy)
    }
}

/// `V = v^2/2 + omega^2 (x - x_f)^2 / 2` per mode, and `dV/d omega` when
/// `derivatives` is set (requires an augmented terminal state).
pub fn residual_report<T: Real>(
    plant: &PlantSpec<T>,
    terminal: &StateVector<T>,
    derivatives: bool,
) -> Result<ResidualReport<T>> {
    if terminal.modes.len() != plant.modes().len() {
        return Err(Error::Contract(format!(
            "state has {} modes, plant has {}",
            terminal.modes.len(),
            plant.modes().len()
        )));
    }
    let sens = match (&terminal.sensitivity, derivatives) {
        (None, true) => return Err(Error::MissingSensitivity),
        (s, true) => s.as_ref(),
        (_, false) => None,
    };
    let half = T::lit(0.5);
    let modes = plant
        .modes()
        .iter()
        .zip(&terminal.modes)
        .enumerate()
        .map(|(k, (mode, st))| {
            let w = mode.omega_n();
            let dx = st.x - plant.x_f();
            let energy = half * st.v * st.v + half * w * w * dx * dx;
            let d_energy = sens.map(|s| {
                let ds = s[k];
                st.v * ds.v + w * dx * dx + w * w * dx * ds.x
            });
            ModeResidual {
                energy,
                d_energy,
                d2_energy: None,
            }
        })
        .collect();
    Ok(ResidualReport { modes })
}

/// Relative half-width of the frequency bracket used for the curvature.
pub const CURVATURE_BRACKET: f64 = 1e-4;

/// Full report including `d^2V/d omega^2`, taken as a central difference of
/// the exact first derivative over `omega (1 +- 1e-4)`.
pub fn residual_report_full<T: Real>(
    plant: &PlantSpec<T>,
    profile: &BangOffBangProfile<T>,
) -> Result<ResidualReport<T>> {
    let terminal = terminal_state(plant, profile, true)?;
    let mut report = residual_report(plant, &terminal, true)?;
    for (k, mode) in plant.modes().iter().enumerate() {
        let h = T::lit(CURVATURE_BRACKET) * mode.omega_n();
        let d_at = |omega: T| -> Result<T> {
            let single = PlantSpec::single(mode.with_omega(omega)?, plant.v_max(), plant.x_f())?;
            let term = terminal_state(&single, profile, true)?;
            let r = residual_report(&single, &term, true)?;
            Ok(r.modes[0].d_energy.expect("derivatives requested"))
        };
        let hi = d_at(mode.omega_n() + h)?;
        let lo = d_at(mode.omega_n() - h)?;
        report.modes[k].d2_energy = Some((hi - lo) / (T::lit(2.0) * h));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn plant(x_f: f64) -> PlantSpec<f64> {
        PlantSpec::single(ModeSpec::undamped(2.0 * PI).unwrap(), 240.0, x_f).unwrap()
    }

    #[test]
    fn cable_length_frequency() {
        let g = 9.81_f64;
        assert!((mode_from_cable_length(g, g).unwrap().omega_n() - 1.0).abs() < 1e-15);
        assert!((mode_from_cable_length(4.0 * g, g).unwrap().omega_n() - 0.5).abs() < 1e-15);
        let m = mode_from_cable_length(0.455_f64, 9.81).unwrap();
        assert!((m.omega_n() - 4.643).abs() < 5e-4);
        assert!(mode_from_cable_length(0.0, g).is_err());
        assert!(mode_from_cable_length(1.0, -g).is_err());
    }

    #[test]
    fn mode_and_plant_invariants() {
        assert!(ModeSpec::new(0.0, 0.0).is_err());
        assert!(ModeSpec::new(1.0, 1.0).is_err());
        assert!(ModeSpec::new(1.0, -0.1).is_err());
        let a = ModeSpec::undamped(2.0).unwrap();
        let b = ModeSpec::undamped(1.0).unwrap();
        assert!(PlantSpec::new(vec![a, b], 240.0, 100.0).is_err());
        assert!(PlantSpec::new(vec![], 240.0, 100.0).is_err());
        assert!(PlantSpec::new(vec![b, a], 0.0, 100.0).is_err());
        assert!(PlantSpec::new(vec![b, a], 240.0, -1.0).is_err());
        let m = ModeSpec::new(10.0_f64, 0.6).unwrap();
        assert!((m.sigma() - 6.0).abs() < 1e-15);
        assert!((m.omega_d() - 8.0).abs() < 1e-12);
    }

    #[test]
    fn zero_duration_profile_stays_at_rest() {
        let p = BangOffBangProfile::pulse(0.0, 240.0).unwrap();
        let s = terminal_state(&plant(1.0), &p, true).unwrap();
        assert!(s.to_vec().iter().all(|&v| v == 0.0));
        assert_eq!(s.dim(), 5);
    }

    #[test]
    fn one_period_pulse_leaves_no_vibration() {
        let p = BangOffBangProfile::pulse(1.0, 240.0).unwrap();
        let s = terminal_state(&plant(240.0), &p, false).unwrap();
        assert!((s.modes[0].x - 240.0).abs() < 1e-10);
        assert!(s.modes[0].v.abs() < 1e-10);
        assert!((s.trolley - 240.0).abs() < 1e-12);
    }

    #[test]
    fn half_period_pulse_matches_fine_step_integration() {
        let w = 2.0 * PI;
        let p = BangOffBangProfile::pulse(0.5, 240.0).unwrap();
        let s = terminal_state(&plant(120.0), &p, false).unwrap();
        // RK4 oracle on x'' = -w^2 (x - 240 t).
        let (mut x, mut v, mut t) = (0.0_f64, 0.0_f64, 0.0_f64);
        let n = 20_000;
        let h = 0.5 / n as f64;
        let f = |t: f64, x: f64, v: f64| (v, -w * w * (x - 240.0 * t));
        for _ in 0..n {
            let k1 = f(t, x, v);
            let k2 = f(t + h / 2.0, x + h / 2.0 * k1.0, v + h / 2.0 * k1.1);
            let k3 = f(t + h / 2.0, x + h / 2.0 * k2.0, v + h / 2.0 * k2.1);
            let k4 = f(t + h, x + h * k3.0, v + h * k3.1);
            x += h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
            v += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
            t += h;
        }
        assert!((s.modes[0].x - x).abs() < 1e-8);
        assert!((s.modes[0].v - v).abs() < 1e-8);
        assert!(s.modes[0].v.abs() > 100.0);
    }

    #[test]
    fn residual_energy_terms() {
        let pl = plant(100.0);
        let mk = |x, v| StateVector {
            t: 0.0,
            modes: vec![ModalState { x, v }],
            trolley: 100.0,
            sensitivity: None,
        };
        let r = residual_report(&pl, &mk(100.0, 0.0), false).unwrap();
        assert_eq!(r.total(), 0.0);
        let r = residual_report(&pl, &mk(100.0, 1.0), false).unwrap();
        assert!((r.total() - 0.5).abs() < 1e-15);
        assert_eq!(
            residual_report(&pl, &mk(100.0, 1.0), true),
            Err(Error::MissingSensitivity)
        );
    }
}
