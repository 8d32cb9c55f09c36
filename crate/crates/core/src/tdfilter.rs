//! Time-delay filter view of a bang-off-bang profile.
//!
//! A profile with delays `T_1 < ... < T_{N+1}` is the step response of
//! `G(s) = 1 + sum_i (-1)^i exp(-s T_i)`; the velocity command is
//! `V(s) = V_m G(s) / s`. Plant poles cancelled by zeros of `G` leave no
//! residual vibration, and double zeros make the cancellation insensitive to
//! the modal frequency.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::Real;

pub use crate::profile::BangOffBangProfile;

#[derive(Clone, Debug, PartialEq)]
pub struct TimeDelayFilter<T> {
    delays: Vec<T>,
}

impl<T: Real> TimeDelayFilter<T> {
    /// Delays `T_1..T_{N+1}`: strictly increasing, positive, odd in count.
    pub fn new(delays: Vec<T>) -> Result<Self> {
        if delays.len() % 2 != 1 {
            return Err(Error::Contract(format!(
                "filter needs an even number of interior switches plus the final delay, got {} delays",
                delays.len()
            )));
        }
        let mut prev = T::zero();
        for &d in &delays {
            if !(d > prev) {
                return Err(Error::Contract(
                    "delays must be positive and strictly increasing".into(),
                ));
            }
            prev = d;
        }
        Ok(Self { delays })
    }

    pub fn from_profile(profile: &BangOffBangProfile<T>) -> Result<Self> {
        Self::new(profile.delays())
    }

    pub fn to_profile(&self, v_max: T) -> Result<BangOffBangProfile<T>> {
        let (last, switches) = self.delays.split_last().expect("at least one delay");
        BangOffBangProfile::new(switches.to_vec(), *last, v_max)
    }

    pub fn delays(&self) -> &[T] {
        &self.delays
    }

    /// Sign of delay term `i` (1-based): `(-1)^i`.
    fn sign(i: usize) -> T {
        if i % 2 == 0 {
            T::one()
        } else {
            -T::one()
        }
    }

    /// `G(s)`.
    pub fn eval(&self, s: Complex<T>) -> Complex<T> {
        self.delays
            .iter()
            .enumerate()
            .fold(Complex::new(T::one(), T::zero()), |acc, (i, &d)| {
                acc + (-s * d).exp() * Self::sign(i + 1)
            })
    }

    /// `dG/ds = sum_i (-1)^(i+1) T_i exp(-s T_i)`.
    pub fn eval_derivative(&self, s: Complex<T>) -> Complex<T> {
        self.delays
            .iter()
            .enumerate()
            .fold(Complex::new(T::zero(), T::zero()), |acc, (i, &d)| {
                acc - (-s * d).exp() * (Self::sign(i + 1) * d)
            })
    }

    /// `d^2G/ds^2 = sum_i (-1)^i T_i^2 exp(-s T_i)`.
    pub fn eval_second_derivative(&self, s: Complex<T>) -> Complex<T> {
        self.delays
            .iter()
            .enumerate()
            .fold(Complex::new(T::zero(), T::zero()), |acc, (i, &d)| {
                acc + (-s * d).exp() * (Self::sign(i + 1) * d * d)
            })
    }
}

/// Axis-aligned rectangle in the complex plane.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ComplexWindow<T> {
    pub re_min: T,
    pub re_max: T,
    pub im_min: T,
    pub im_max: T,
}

impl<T: Real> ComplexWindow<T> {
    pub fn new(re_min: T, re_max: T, im_min: T, im_max: T) -> Result<Self> {
        let ok = re_min < re_max && im_min < im_max;
        let finite = [re_min, re_max, im_min, im_max]
            .iter()
            .all(|v| v.is_finite());
        if !ok || !finite {
            return Err(Error::Domain(
                "complex window must be bounded and non-empty".into(),
            ));
        }
        Ok(Self {
            re_min,
            re_max,
            im_min,
            im_max,
        })
    }

    pub fn contains(&self, z: Complex<T>) -> bool {
        z.re >= self.re_min && z.re <= self.re_max && z.im >= self.im_min && z.im <= self.im_max
    }

    fn corners(&self) -> [Complex<T>; 4] {
        [
            Complex::new(self.re_min, self.im_min),
            Complex::new(self.re_max, self.im_min),
            Complex::new(self.re_max, self.im_max),
            Complex::new(self.re_min, self.im_max),
        ]
    }
}

/// A located zero of `G`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FilterZero<T> {
    pub s: Complex<T>,
    /// `|dG/ds| < 1e-6` at the zero: double (or higher) multiplicity.
    pub double: bool,
}

impl<T: Real> FilterZero<T> {
    pub fn multiplicity(&self) -> usize {
        if self.double {
            2
        } else {
            1
        }
    }
}

pub const NEWTON_MAX_ITER: usize = 100;
pub const NEWTON_STEP_TOL: f64 = 1e-13;
pub const ZERO_RESIDUAL_TOL: f64 = 1e-10;
pub const DEDUP_RADIUS: f64 = 1e-6;
pub const DOUBLE_ZERO_TOL: f64 = 1e-6;

impl<T: Real> TimeDelayFilter<T> {
    /// Newton iteration on `f` from `z`; `None` when it does not settle.
    fn newton<F, D>(&self, mut z: Complex<T>, f: F, df: D) -> Option<Complex<T>>
    where
        F: Fn(Complex<T>) -> Complex<T>,
        D: Fn(Complex<T>) -> Complex<T>,
    {
        let tol = T::lit(NEWTON_STEP_TOL);
        for _ in 0..NEWTON_MAX_ITER {
            let d = df(z);
            if d.norm() == T::zero() || !d.norm().is_finite() {
                return None;
            }
            let step = f(z) / d;
            z = z - step;
            if !z.re.is_finite() || !z.im.is_finite() {
                return None;
            }
            if step.norm() < tol * z.norm().max(T::one()) {
                return Some(z);
            }
        }
        None
    }

    /// Refines a seed to a zero of `G`.
    ///
    /// Plain Newton stalls near multiple zeros at about the square root of
    /// machine precision, so near-critical points are retried as zeros of
    /// `G'`, which are simple there.
    fn refine(&self, seed: Complex<T>) -> Option<FilterZero<T>> {
        let tol = T::lit(ZERO_RESIDUAL_TOL);
        let simple = self.newton(seed, |z| self.eval(z), |z| self.eval_derivative(z));
        let candidate = match simple {
            Some(z) if self.eval(z).norm() <= tol => z,
            _ => {
                // Multiplicity-2 step gets close, then polish on the derivative.
                let mut z = seed;
                for _ in 0..NEWTON_MAX_ITER {
                    let d = self.eval_derivative(z);
                    if d.norm() == T::zero() {
                        break;
                    }
                    let step = self.eval(z) / d * T::lit(2.0);
                    z = z - step;
                    if !(step.norm() > T::lit(1e-8) * z.norm().max(T::one())) {
                        break;
                    }
                }
                let z = self.newton(
                    z,
                    |z| self.eval_derivative(z),
                    |z| self.eval_second_derivative(z),
                )?;
                if self.eval(z).norm() > tol {
                    return None;
                }
                z
            }
        };
        let double = self.eval_derivative(candidate).norm() < T::lit(DOUBLE_ZERO_TOL);
        // A simple zero found by the first pass may still be double; the
        // derivative polish sharpens its location.
        let z = if double {
            self.newton(
                candidate,
                |z| self.eval_derivative(z),
                |z| self.eval_second_derivative(z),
            )
            .filter(|z| self.eval(*z).norm() <= tol && (*z - candidate).norm() < T::lit(1e-6))
            .unwrap_or(candidate)
        } else {
            candidate
        };
        Some(FilterZero { s: z, double })
    }

    /// Zeros of `G` inside `window`, found by Newton iteration from a uniform
    /// `grid.0 x grid.1` lattice of seeds.
    ///
    /// Returns zeros sorted by imaginary then real part. Fails only when no
    /// seed converged although the boundary winding number says the window
    /// contains zeros.
    pub fn find_zeros(
        &self,
        window: &ComplexWindow<T>,
        grid: (usize, usize),
    ) -> Result<Vec<FilterZero<T>>> {
        let (nx, ny) = (grid.0.max(1), grid.1.max(1));
        let radius = T::lit(DEDUP_RADIUS);
        let mut found: Vec<FilterZero<T>> = Vec::new();
        for iy in 0..ny {
            for ix in 0..nx {
                let fx = (T::from_usize(ix).unwrap() + T::lit(0.5)) / T::from_usize(nx).unwrap();
                let fy = (T::from_usize(iy).unwrap() + T::lit(0.5)) / T::from_usize(ny).unwrap();
                let seed = Complex::new(
                    window.re_min + (window.re_max - window.re_min) * fx,
                    window.im_min + (window.im_max - window.im_min) * fy,
                );
                let Some(z) = self.refine(seed) else { continue };
                if !window.contains(z.s) {
                    continue;
                }
                match found.iter_mut().find(|f| (f.s - z.s).norm() < radius) {
                    Some(existing) => existing.double |= z.double,
                    None => found.push(z),
                }
            }
        }
        found.sort_by(|a, b| {
            a.s.im
                .partial_cmp(&b.s.im)
                .unwrap()
                .then(a.s.re.partial_cmp(&b.s.re).unwrap())
        });
        if found.is_empty() {
            let count = self.winding_count(window, 1024);
            if count > 0 {
                return Err(Error::ZeroSearch(format!(
                    "no seed converged but the boundary encloses {count} zeros"
                )));
            }
        }
        Ok(found)
    }

    /// Number of zeros (with multiplicity) enclosed by the window boundary,
    /// from the accumulated change of `arg G` over at least `samples` points.
    ///
    /// Sub-intervals whose phase jump exceeds a quarter turn are bisected.
    pub fn winding_count(&self, window: &ComplexWindow<T>, samples: usize) -> i64 {
        let corners = window.corners();
        let per_side = samples.div_ceil(4).max(8);
        let quarter = T::FRAC_PI_4();
        let mut total = T::zero();
        for k in 0..4 {
            let a = corners[k];
            let b = corners[(k + 1) % 4];
            for j in 0..per_side {
                let t0 = T::from_usize(j).unwrap() / T::from_usize(per_side).unwrap();
                let t1 = T::from_usize(j + 1).unwrap() / T::from_usize(per_side).unwrap();
                total = total + self.arg_change(a, b, t0, t1, quarter, 0);
            }
        }
        (total / (T::lit(2.0) * T::PI()))
            .round()
            .to_i64()
            .unwrap_or(0)
    }

    fn arg_change(&self, a: Complex<T>, b: Complex<T>, t0: T, t1: T, limit: T, depth: u32) -> T {
        let p0 = a + (b - a) * t0;
        let p1 = a + (b - a) * t1;
        let g0 = self.eval(p0);
        let g1 = self.eval(p1);
        let d = (g1 / g0).arg();
        if d.abs() <= limit || depth > 30 {
            return d;
        }
        let mid = (t0 + t1) * T::lit(0.5);
        self.arg_change(a, b, t0, mid, limit, depth + 1)
            + self.arg_change(a, b, mid, t1, limit, depth + 1)
    }
}
