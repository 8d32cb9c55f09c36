//! Undamped single-mode solutions by zone.
//!
//! In zone `n` the optimal profile has `n` off intervals of equal width `2 T1`,
//! laid out symmetrically about the mid-maneuver time `T2` with centers spaced
//! one natural period apart. Two constraints fix `(T1, T2)`:
//!
//! ```text
//! T2 - n T1 = x_f / (2 V_m)
//! (-1)^(n+1) n sin(w T1) - sin(w T2) = 0
//! ```
//!
//! Zone 1 has a closed form. Zones 2 and 3 reduce to a quartic and a cubic in
//! `z = cos(w T1)`. Higher zones use a bracketed scalar solve.

use crate::error::{Error, Result};
use crate::poly;
use crate::profile::BangOffBangProfile;
use crate::scalar::Real;

/// Relative tolerance for classifying a displacement as a zone boundary.
pub const BOUNDARY_TOL: f64 = 1e-12;
/// Residual accepted on the sine constraint.
pub const CONSTRAINT_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ZoneSolution<T> {
    /// Number of off intervals.
    pub n: usize,
    /// Half-width of every off interval, s.
    pub t1: T,
    /// Half maneuver time, s.
    pub t2: T,
}

impl<T: Real> ZoneSolution<T> {
    pub fn t_f(&self) -> T {
        self.t2 + self.t2
    }

    /// True for the pulse that sits on a zone boundary.
    pub fn is_pulse(&self) -> bool {
        self.t1 == T::zero()
    }

    /// Residuals of the displacement and sine constraints.
    pub fn residuals(&self, x_f: T, omega_n: T, v_max: T) -> (T, T) {
        let n = T::lit(self.n as f64);
        let disp = self.t2 - n * self.t1 - x_f / (v_max + v_max);
        (disp, sine_constraint(self.n, omega_n, self.t1, self.t2))
    }

    /// Profile with off zones centered at `T2 + (2k - (n-1)) pi / w`.
    pub fn to_profile(&self, omega_n: T, v_max: T) -> Result<BangOffBangProfile<T>> {
        if self.t1 < T::zero() || !(self.t2 > T::zero()) {
            return Err(Error::Contract(format!(
                "zone solution needs T1 >= 0 and T2 > 0, got T1 = {}, T2 = {}",
                self.t1, self.t2
            )));
        }
        let t_f = self.t_f();
        if self.is_pulse() {
            return BangOffBangProfile::pulse(t_f, v_max);
        }
        let half_period = T::PI() / omega_n;
        let mut switches = Vec::with_capacity(2 * self.n);
        for k in 0..self.n {
            let offset = T::lit(2.0 * k as f64 - (self.n as f64 - 1.0));
            let center = self.t2 + offset * half_period;
            switches.push(center - self.t1);
            switches.push(center + self.t1);
        }
        BangOffBangProfile::new(switches, t_f, v_max)
            .map_err(|e| Error::Contract(format!("off zones overlap or leave the maneuver: {e}")))
    }
}

/// Zone index with a flag for displacements exactly on the upper boundary.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ZoneClass {
    pub n: usize,
    pub degenerate: bool,
}

fn check_inputs<T: Real>(x_f: T, omega_n: T, v_max: T) -> Result<()> {
    if !(x_f > T::zero() && omega_n > T::zero() && v_max > T::zero()) {
        return Err(Error::Domain(format!(
            "x_f, omega_n and v_max must be positive, got {x_f}, {omega_n}, {v_max}"
        )));
    }
    Ok(())
}

/// `x_f` in units of the first collapse displacement `2 pi V_m / w`.
fn boundary_ratio<T: Real>(x_f: T, omega_n: T, v_max: T) -> T {
    x_f * omega_n / (T::TAU() * v_max)
}

/// Nearest integer when `r` lies on it within the boundary tolerance.
fn on_boundary<T: Real>(r: T) -> Option<usize> {
    let k = r.round();
    ((r - k).abs() <= T::lit(BOUNDARY_TOL) * k.max(T::one())).then(|| k.value() as usize)
}

pub fn zone_of<T: Real>(x_f: T, omega_n: T, v_max: T) -> Result<ZoneClass> {
    check_inputs(x_f, omega_n, v_max)?;
    let r = boundary_ratio(x_f, omega_n, v_max);
    if let Some(k) = on_boundary(r).filter(|&k| k >= 1) {
        return Ok(ZoneClass {
            n: k,
            degenerate: true,
        });
    }
    let n = r.ceil().value().max(1.0) as usize;
    Ok(ZoneClass {
        n,
        degenerate: false,
    })
}

fn sine_constraint<T: Real>(n: usize, omega_n: T, t1: T, t2: T) -> T {
    let sign = if n % 2 == 1 { T::one() } else { -T::one() };
    sign * T::lit(n as f64) * (omega_n * t1).sin() - (omega_n * t2).sin()
}

/// Sine constraint with `T2` eliminated, and its derivative in `T1`.
fn reduced<T: Real>(n: usize, omega_n: T, d: T, t1: T) -> (T, T) {
    let nf = T::lit(n as f64);
    let sign = if n % 2 == 1 { T::one() } else { -T::one() };
    let arg = omega_n * (nf * t1 + d);
    let f = sign * nf * (omega_n * t1).sin() - arg.sin();
    let df = sign * nf * omega_n * (omega_n * t1).cos() - nf * omega_n * arg.cos();
    (f, df)
}

fn polish_t1<T: Real>(n: usize, omega_n: T, d: T, mut t1: T) -> T {
    for _ in 0..50 {
        let (f, df) = reduced(n, omega_n, d, t1);
        if df == T::zero() {
            break;
        }
        let step = f / df;
        t1 = t1 - step;
        if step.abs() <= T::epsilon() * T::lit(4.0) * t1.abs().max(T::one() / omega_n) {
            break;
        }
    }
    t1
}

fn zone_bounds_check<T: Real>(n: usize, x_f: T, omega_n: T, v_max: T) -> Result<()> {
    check_inputs(x_f, omega_n, v_max)?;
    if n == 0 {
        return Err(Error::Domain("zone index starts at 1".into()));
    }
    let r = boundary_ratio(x_f, omega_n, v_max);
    let tol = T::lit(BOUNDARY_TOL) * T::lit(n as f64);
    let lo = T::lit(n as f64 - 1.0);
    let hi = T::lit(n as f64);
    if r < lo - tol || r > hi + tol {
        return Err(Error::Domain(format!(
            "x_f = {x_f} lies outside zone {n} ({} to {} mm)",
            lo * T::TAU() * v_max / omega_n,
            hi * T::TAU() * v_max / omega_n
        )));
    }
    Ok(())
}

/// Pulse solution when `x_f` is on either boundary of zone `n`.
fn boundary_pulse<T: Real>(n: usize, x_f: T, omega_n: T, v_max: T) -> Option<ZoneSolution<T>> {
    let k = on_boundary(boundary_ratio(x_f, omega_n, v_max))?;
    (k + 1 == n || k == n).then(|| ZoneSolution {
        n,
        t1: T::zero(),
        t2: x_f / (v_max + v_max),
    })
}

pub fn solve_zone1<T: Real>(x_f: T, omega_n: T, v_max: T) -> Result<ZoneSolution<T>> {
    zone_bounds_check(1, x_f, omega_n, v_max)?;
    let quarter = T::FRAC_PI_2() / omega_n;
    let shift = x_f / (T::lit(4.0) * v_max);
    let t1 = if boundary_pulse(1, x_f, omega_n, v_max).is_some() {
        T::zero()
    } else {
        (quarter - shift).max(T::zero())
    };
    Ok(ZoneSolution {
        n: 1,
        t1,
        t2: quarter + shift,
    })
}

/// Constraint-feasible solutions of zone `n` from polynomial roots in `z`,
/// sorted by increasing `T2`.
fn from_cosines<T: Real>(
    n: usize,
    x_f: T,
    omega_n: T,
    v_max: T,
    zs: impl IntoIterator<Item = T>,
) -> Vec<ZoneSolution<T>> {
    let d = x_f / (v_max + v_max);
    let half_period = T::PI() / omega_n;
    let mut out: Vec<ZoneSolution<T>> = Vec::new();
    for z in zs {
        for z in [z, -z] {
            if z.abs() > T::one() + T::lit(1e-6) {
                continue;
            }
            let t1 = z.max(-T::one()).min(T::one()).acos() / omega_n;
            let t1 = polish_t1(n, omega_n, d, t1);
            if !(t1 >= T::zero() && t1 < half_period) {
                continue;
            }
            let sol = ZoneSolution {
                n,
                t1,
                t2: T::lit(n as f64) * t1 + d,
            };
            let (_, r) = sol.residuals(x_f, omega_n, v_max);
            let dup = out
                .iter()
                .any(|s| (s.t1 - t1).abs() <= T::lit(1e-9) / omega_n);
            if r.abs() <= T::lit(CONSTRAINT_TOL) && !dup {
                out.push(sol);
            }
        }
    }
    out.sort_by(|a, b| a.t2.partial_cmp(&b.t2).unwrap());
    out
}

fn complex_tol<T: Real>() -> T {
    T::lit(1e-4)
}

/// All constraint-feasible zone-2 solutions, shortest first.
pub fn zone2_candidates<T: Real>(x_f: T, omega_n: T, v_max: T) -> Result<Vec<ZoneSolution<T>>> {
    zone_bounds_check(2, x_f, omega_n, v_max)?;
    if let Some(p) = boundary_pulse(2, x_f, omega_n, v_max) {
        return Ok(vec![p]);
    }
    let phase = omega_n * x_f / (v_max + v_max);
    let (alpha, beta) = phase.sin_cos();
    let four = T::lit(4.0);
    let eight = T::lit(8.0);
    let coeffs = [
        four,
        eight * beta,
        T::zero(),
        -eight * beta,
        alpha * alpha - four,
    ];
    let zs = poly::real_roots(&coeffs, complex_tol())?;
    Ok(from_cosines(2, x_f, omega_n, v_max, zs))
}

/// All constraint-feasible zone-3 solutions, shortest first.
pub fn zone3_candidates<T: Real>(x_f: T, omega_n: T, v_max: T) -> Result<Vec<ZoneSolution<T>>> {
    zone_bounds_check(3, x_f, omega_n, v_max)?;
    if let Some(p) = boundary_pulse(3, x_f, omega_n, v_max) {
        return Ok(vec![p]);
    }
    let beta = (omega_n * x_f / (v_max + v_max)).cos();
    let l = T::lit;
    let coeffs = [
        l(-16.0),
        l(24.0) + l(24.0) * beta,
        l(-30.0) * beta - l(18.0),
        beta * beta + l(6.0) * beta + l(9.0),
    ];
    let ws = poly::real_roots(&coeffs, complex_tol())?;
    let zs = ws
        .into_iter()
        .filter(|&w| w >= -l(1e-9) && w <= T::one() + l(1e-9))
        .map(|w| w.max(T::zero()).sqrt());
    Ok(from_cosines(3, x_f, omega_n, v_max, zs))
}

fn first<T: Real>(n: usize, mut c: Vec<ZoneSolution<T>>) -> Result<ZoneSolution<T>> {
    if c.is_empty() {
        return Err(Error::Solver(format!("no admissible zone-{n} root")));
    }
    Ok(c.swap_remove(0))
}

pub fn solve_zone2<T: Real>(x_f: T, omega_n: T, v_max: T) -> Result<ZoneSolution<T>> {
    first(2, zone2_candidates(x_f, omega_n, v_max)?)
}

pub fn solve_zone3<T: Real>(x_f: T, omega_n: T, v_max: T) -> Result<ZoneSolution<T>> {
    first(3, zone3_candidates(x_f, omega_n, v_max)?)
}

/// Zone `n` by a bracketed solve of the reduced sine constraint in `T1`.
///
/// Eliminating `T2` through the displacement constraint leaves one equation
/// in `T1` on `[0, pi/w)`. Its smallest root gives the shortest maneuver. The
/// interval is scanned finely enough to separate the `n + 1` oscillations of
/// the reduced function, each bracket is refined by bisection and a final
/// Newton pass, and touching (double) roots are caught at local minima of
/// `|f|`.
pub fn solve_zone_n<T: Real>(n: usize, x_f: T, omega_n: T, v_max: T) -> Result<ZoneSolution<T>> {
    zone_bounds_check(n, x_f, omega_n, v_max)?;
    if let Some(p) = boundary_pulse(n, x_f, omega_n, v_max) {
        return Ok(p);
    }
    let d = x_f / (v_max + v_max);
    let half_period = T::PI() / omega_n;
    let cells = 64 * (n + 1);
    let h = half_period / T::lit(cells as f64);
    let f = |t: T| reduced(n, omega_n, d, t).0;
    let accept = |t1: T| {
        let t1 = polish_t1(n, omega_n, d, t1);
        let ok = t1 >= T::zero() && t1 < half_period && f(t1).abs() <= T::lit(CONSTRAINT_TOL);
        ok.then_some(t1)
    };
    let mut prev = (T::zero(), f(T::zero()));
    let mut before = prev.1;
    for i in 1..=cells {
        let t = h * T::lit(i as f64);
        let ft = f(t);
        if prev.1 == T::zero() || prev.1.signum() != ft.signum() {
            let (mut a, mut b, mut fa) = (prev.0, t, prev.1);
            for _ in 0..200 {
                let m = T::lit(0.5) * (a + b);
                let fm = f(m);
                if fm.signum() == fa.signum() && fm != T::zero() {
                    a = m;
                    fa = fm;
                } else {
                    b = m;
                }
                if b - a <= T::epsilon() * half_period {
                    break;
                }
            }
            if let Some(t1) = accept(T::lit(0.5) * (a + b)) {
                return Ok(ZoneSolution {
                    n,
                    t1,
                    t2: T::lit(n as f64) * t1 + d,
                });
            }
        } else if i >= 2 && prev.1.abs() < before.abs() && prev.1.abs() < ft.abs() {
            if let Some(t1) = accept(prev.0) {
                return Ok(ZoneSolution {
                    n,
                    t1,
                    t2: T::lit(n as f64) * t1 + d,
                });
            }
        }
        before = prev.1;
        prev = (t, ft);
    }
    Err(Error::Solver(format!(
        "no admissible zone-{n} root for x_f = {x_f}"
    )))
}

/// Minimum-time zone solution for any positive displacement.
pub fn solve<T: Real>(x_f: T, omega_n: T, v_max: T) -> Result<ZoneSolution<T>> {
    let zone = zone_of(x_f, omega_n, v_max)?;
    match zone.n {
        1 => solve_zone1(x_f, omega_n, v_max),
        2 => solve_zone2(x_f, omega_n, v_max),
        3 => solve_zone3(x_f, omega_n, v_max),
        n => solve_zone_n(n, x_f, omega_n, v_max),
    }
}

/// One row of a zone sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct ZoneRow {
    pub x_f: f64,
    pub solution: ZoneSolution<f64>,
    pub profile: BangOffBangProfile<f64>,
}

/// Solves and lays out every displacement of a grid.
pub fn zone_sweep(x_fs: &[f64], omega_n: f64, v_max: f64) -> Result<Vec<ZoneRow>> {
    x_fs.iter()
        .map(|&x_f| {
            let solution = solve(x_f, omega_n, v_max)?;
            let profile = solution.to_profile(omega_n, v_max)?;
            Ok(ZoneRow {
                x_f,
                solution,
                profile,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    const W: f64 = 2.0 * PI;
    const V: f64 = 240.0;

    #[test]
    fn zone_classification() {
        assert_eq!(
            zone_of(100.0, W, V).unwrap(),
            ZoneClass {
                n: 1,
                degenerate: false
            }
        );
        assert_eq!(
            zone_of(240.0, W, V).unwrap(),
            ZoneClass {
                n: 1,
                degenerate: true
            }
        );
        assert_eq!(
            zone_of(300.0, W, V).unwrap(),
            ZoneClass {
                n: 2,
                degenerate: false
            }
        );
        assert_eq!(
            zone_of(480.0, W, V).unwrap(),
            ZoneClass {
                n: 2,
                degenerate: true
            }
        );
        assert!(zone_of(-1.0, W, V).is_err());
    }

    #[test]
    fn zone1_closed_form() {
        let s = solve_zone1(100.0, W, V).unwrap();
        assert!((s.t1 - 0.145_833_333_333_333_3).abs() < 1e-15);
        assert!((s.t_f() - 0.708_333_333_333_333_3).abs() < 1e-15);
        let s = solve_zone1(240.0, W, V).unwrap();
        assert_eq!(s.t1, 0.0);
        assert!((s.t_f() - 1.0).abs() < 1e-15);
        let s = solve_zone1(1e-9, W, V).unwrap();
        assert!((s.t_f() - PI / W).abs() < 1e-11);
        assert!(matches!(solve_zone1(300.0, W, V), Err(Error::Domain(_))));
    }

    #[test]
    fn zone2_keeps_both_feasible_roots() {
        let c = zone2_candidates(400.0, W, V).unwrap();
        assert_eq!(c.len(), 2);
        assert!((c[0].t1 - 0.0409).abs() < 5e-5 && (c[0].t2 - 0.9151).abs() < 5e-5);
        assert!((c[1].t1 - 0.4247).abs() < 5e-5 && (c[1].t2 - 1.6827).abs() < 5e-5);
        let s = solve_zone2(480.0, W, V).unwrap();
        assert!(s.is_pulse() && (s.t_f() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn zone3_root() {
        let s = solve_zone3(600.0, W, V).unwrap();
        assert!((s.t1 - 0.0395).abs() < 5e-5 && (s.t2 - 1.3684).abs() < 5e-5);
        let s = solve_zone3(720.0, W, V).unwrap();
        assert!(s.is_pulse() && (s.t_f() - 3.0).abs() < 1e-14);
    }

    #[test]
    fn numeric_solver_matches_polynomials() {
        for x_f in [10.0, 100.0, 239.0] {
            let a = solve_zone1(x_f, W, V).unwrap();
            let b = solve_zone_n(1, x_f, W, V).unwrap();
            assert!((a.t1 - b.t1).abs() < 1e-12, "{x_f}");
        }
        for x_f in [241.0, 300.0, 400.0, 470.0] {
            let a = solve_zone2(x_f, W, V).unwrap();
            let b = solve_zone_n(2, x_f, W, V).unwrap();
            assert!((a.t1 - b.t1).abs() < 1e-9, "{x_f}");
        }
        for x_f in [490.0, 550.0, 600.0, 710.0] {
            let a = solve_zone3(x_f, W, V).unwrap();
            let b = solve_zone_n(3, x_f, W, V).unwrap();
            assert!((a.t1 - b.t1).abs() < 1e-9, "{x_f}");
        }
        let s = solve_zone_n(4, 800.0, W, V).unwrap();
        let (r1, r2) = s.residuals(800.0, W, V);
        assert!(r1.abs() < 1e-12 && r2.abs() < 1e-12);
    }

    #[test]
    fn layout_is_antisymmetric_with_equal_widths() {
        for x_f in [100.0, 400.0, 600.0, 800.0, 1000.0] {
            let s = solve(x_f, W, V).unwrap();
            let p = s.to_profile(W, V).unwrap();
            assert_eq!(p.n_switches(), 2 * s.n);
            let ts = p.switch_times();
            for (a, b) in ts.iter().zip(ts.iter().rev()) {
                assert!((a + b - p.t_f()).abs() < 1e-12);
            }
            for pair in ts.chunks(2) {
                assert!((pair[1] - pair[0] - 2.0 * s.t1).abs() < 1e-12);
            }
            assert!((p.displacement() - x_f).abs() < 1e-9);
        }
    }

    #[test]
    fn overlapping_zones_are_rejected() {
        let bad = ZoneSolution {
            n: 2,
            t1: 0.6,
            t2: 1.5,
        };
        assert!(matches!(bad.to_profile(W, V), Err(Error::Contract(_))));
    }

    #[test]
    fn single_precision_zone1() {
        let s = solve_zone1(100.0_f32, 2.0 * std::f32::consts::PI, 240.0).unwrap();
        assert!((s.t_f() - 0.708_333).abs() < 1e-6);
    }
}
