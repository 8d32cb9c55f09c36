//! Equality-constrained minimum-time program over the delay vector.
//!
//! Every constraint has the form `c_j = const_j + sum_i (-1)^i k_j(T_i)` over
//! the delays `T_1 .. T_{N+1}`, so the Lagrangian Hessian is diagonal and the
//! gradient of constraint `j` with respect to `T_i` is `(-1)^i k_j'(T_i)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::plant::PlantSpec;

#[derive(Clone, Copy, Debug, PartialEq)]
enum Part {
    Re,
    Im,
}

impl Part {
    fn of(self, z: Complex64) -> f64 {
        match self {
            Part::Re => z.re,
            Part::Im => z.im,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Kernel {
    /// `-w t`: terminal displacement, scaled by a reference frequency.
    Displacement { w: f64 },
    /// `e^{-p t}`: pole cancellation.
    Pole { p: Complex64, part: Part },
    /// `-w t e^{-p t}`: derivative of the filter at the pole.
    Robust { p: Complex64, w: f64, part: Part },
}

impl Kernel {
    /// `(k, k', k'')` at `t`.
    fn eval(&self, t: f64) -> (f64, f64, f64) {
        match *self {
            Kernel::Displacement { w } => (-w * t, -w, 0.0),
            Kernel::Pole { p, part } => {
                let e = (-p * t).exp();
                (part.of(e), part.of(-p * e), part.of(p * p * e))
            }
            Kernel::Robust { p, w, part } => {
                let e = (-p * t).exp();
                let k = -w * t * e;
                let dk = -w * e * (1.0 - p * t);
                let ddk = -w * e * (p * p * t - 2.0 * p);
                (part.of(k), part.of(dk), part.of(ddk))
            }
        }
    }
}

/// `(-1)^i` for the 0-based delay index `q = i - 1`.
pub(crate) fn sign(q: usize) -> f64 {
    if q % 2 == 0 {
        -1.0
    } else {
        1.0
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Problem {
    consts: Vec<f64>,
    kernels: Vec<Kernel>,
    labels: Vec<String>,
}

impl Problem {
    /// Displacement, pole cancellation for every mode, and double-zero
    /// conditions for `robust_modes`.
    pub(crate) fn new(plant: &PlantSpec<f64>, robust_modes: &[usize]) -> Self {
        let w_ref = plant.modes()[0].omega_n();
        let mut p = Problem {
            consts: Vec::new(),
            kernels: Vec::new(),
            labels: Vec::new(),
        };
        p.push(
            -w_ref * plant.x_f() / plant.v_max(),
            Kernel::Displacement { w: w_ref },
            "displacement".into(),
        );
        for (k, m) in plant.modes().iter().enumerate() {
            let pole = Complex64::new(-m.sigma(), m.omega_d());
            for part in [Part::Re, Part::Im] {
                let c = if part == Part::Re { 1.0 } else { 0.0 };
                p.push(
                    c,
                    Kernel::Pole { p: pole, part },
                    format!("mode {} G {:?}", k + 1, part),
                );
            }
        }
        for &k in robust_modes {
            let m = &plant.modes()[k];
            let pole = Complex64::new(-m.sigma(), m.omega_d());
            for part in [Part::Re, Part::Im] {
                let kernel = Kernel::Robust {
                    p: pole,
                    w: m.omega_n(),
                    part,
                };
                p.push(0.0, kernel, format!("mode {} dG/ds {:?}", k + 1, part));
            }
        }
        p
    }

    fn push(&mut self, c: f64, k: Kernel, label: String) {
        self.consts.push(c);
        self.kernels.push(k);
        self.labels.push(label);
    }

    pub(crate) fn n_constraints(&self) -> usize {
        self.consts.len()
    }

    pub(crate) fn labels(&self) -> &[String] {
        &self.labels
    }

    pub(crate) fn residuals(&self, t: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.consts.len(),
            self.kernels.iter().zip(&self.consts).map(|(k, &c)| {
                c + t
                    .iter()
                    .enumerate()
                    .map(|(q, &tq)| sign(q) * k.eval(tq).0)
                    .sum::<f64>()
            }),
        )
    }

    /// Residuals, Jacobian (`M x (N+1)`), and the per-delay second
    /// derivatives `(-1)^i k_j''(T_i)` laid out like the Jacobian.
    fn linearize(&self, t: &[f64]) -> (DVector<f64>, DMatrix<f64>, DMatrix<f64>) {
        let (m, n) = (self.consts.len(), t.len());
        let mut c = DVector::from_column_slice(&self.consts);
        let mut jac = DMatrix::zeros(m, n);
        let mut curv = DMatrix::zeros(m, n);
        for (j, k) in self.kernels.iter().enumerate() {
            for (q, &tq) in t.iter().enumerate() {
                let (v, dv, ddv) = k.eval(tq);
                let s = sign(q);
                c[j] += s * v;
                jac[(j, q)] = s * dv;
                curv[(j, q)] = s * ddv;
            }
        }
        (c, jac, curv)
    }
}

pub(crate) const MAX_ITER: usize = 100;
/// Internal constraint tolerance.
pub(crate) const CONSTRAINT_TOL: f64 = 1e-12;
const STATIONARITY_TOL: f64 = 1e-10;
const STEP_TOL: f64 = 1e-13;
/// Gaps below this fraction of `t_f` that still block the step are removed.
pub(crate) const COLLAPSE_GAP: f64 = 1e-7;
const BOUNDARY_FRACTION: f64 = 0.99;
/// Initial and largest step lengths relative to the maneuver time.
const TRUST_START: f64 = 0.05;
const TRUST_MAX: f64 = 0.5;
const RESTORE_ITER: usize = 40;

fn start_scale(t: &[f64]) -> f64 {
    t.last().copied().unwrap_or(1.0).max(1e-3)
}

fn objective_gradient(n: usize) -> DVector<f64> {
    let mut e = DVector::zeros(n);
    e[n - 1] = 1.0;
    e
}

/// Least-squares multipliers for the stationarity condition.
fn estimate_multipliers(prob: &Problem, t: &[f64]) -> DVector<f64> {
    let (_, jac, _) = prob.linearize(t);
    let e = objective_gradient(t.len());
    let jt = jac.transpose();
    jt.svd(true, true)
        .solve(&(-e), 1e-12)
        .unwrap_or_else(|_| DVector::zeros(prob.n_constraints()))
}

/// Gap `q` is `T_q - T_{q-1}` with `T_0 = 0`.
fn gaps(t: &[f64]) -> Vec<f64> {
    let mut prev = 0.0;
    t.iter()
        .map(|&x| {
            let g = x - prev;
            prev = x;
            g
        })
        .collect()
}

/// Removes the delays on either side of gap `q` (`q >= 1`). The two terms have
/// equal times and opposite signs, so the filter is unchanged.
pub(crate) fn remove_pair(t: &mut Vec<f64>, q: usize) {
    t.drain(q - 1..=q);
}

/// Orthonormal basis of the null space of `jac` and the minimum-norm
/// correction `-J^+ c`.
fn factor(jac: &DMatrix<f64>, c: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let n = jac.ncols();
    let eig = SymmetricEigen::new(jac.transpose() * jac);
    let top = eig.eigenvalues.amax().max(1e-300);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let null = &order[..n.saturating_sub(jac.nrows())];
    let z = DMatrix::from_fn(n, null.len(), |r, k| eig.eigenvectors[(r, null[k])]);
    let correction = -jac
        .clone()
        .svd(true, true)
        .solve(c, 1e-12 * top.sqrt())
        .unwrap_or_else(|_| DVector::zeros(n));
    (z, correction)
}

/// Largest `a <= 1` keeping every gap above `(1 - fraction)` of its value,
/// with the gap that limits it.
fn step_to_boundary(t: &[f64], d: &[f64]) -> (f64, Option<usize>) {
    let g = gaps(t);
    let dg = gaps(d);
    let mut alpha = 1.0_f64;
    let mut blocking = None;
    for q in 0..t.len() {
        if dg[q] < 0.0 {
            let a = BOUNDARY_FRACTION * g[q] / -dg[q];
            if a < alpha {
                alpha = a;
                blocking = Some(q);
            }
        }
    }
    (alpha, blocking)
}

/// Removes interior gaps that are below the collapse threshold or negative.
fn collapse_small_gaps(t: &mut Vec<f64>) {
    while let Some(q) =
        (1..t.len().saturating_sub(1)).find(|&q| gaps(t)[q] <= COLLAPSE_GAP * t[t.len() - 1])
    {
        remove_pair(t, q);
    }
}

/// Gauss-Newton projection back onto the constraint surface.
fn restore(prob: &Problem, t: &[f64], allow_collapse: bool) -> Option<Vec<f64>> {
    let mut t = t.to_vec();
    if allow_collapse {
        collapse_small_gaps(&mut t);
    }
    let mut c_norm = prob.residuals(&t).norm();
    for _ in 0..RESTORE_ITER {
        if c_norm <= CONSTRAINT_TOL {
            return Some(t);
        }
        let (c, jac, _) = prob.linearize(&t);
        let (_, d) = factor(&jac, &c);
        let (mut alpha, blocking) = step_to_boundary(&t, d.as_slice());
        if let Some(q) = blocking {
            if allow_collapse && q >= 1 && gaps(&t)[q] <= COLLAPSE_GAP * t[t.len() - 1] {
                remove_pair(&mut t, q);
                c_norm = prob.residuals(&t).norm();
                continue;
            }
        }
        if !(alpha > 0.0) {
            return None;
        }
        loop {
            let trial: Vec<f64> = t.iter().zip(d.iter()).map(|(a, b)| a + alpha * b).collect();
            let cn = prob.residuals(&trial).norm();
            if cn < c_norm {
                t = trial;
                c_norm = cn;
                break;
            }
            alpha *= 0.5;
            if alpha < 1e-6 {
                return (c_norm <= 1e2 * CONSTRAINT_TOL).then_some(t);
            }
        }
    }
    (c_norm <= 1e2 * CONSTRAINT_TOL).then_some(t)
}

/// Minimizes `g.s + s.B s / 2` over `|s| <= radius`.
fn trust_step(b: &DMatrix<f64>, g: &DVector<f64>, radius: f64) -> DVector<f64> {
    let eig = SymmetricEigen::new(b.clone());
    let gv = eig.eigenvectors.transpose() * g;
    let lo = eig.eigenvalues.min();
    let step = |lambda: f64| -> DVector<f64> {
        let coeffs = DVector::from_iterator(
            gv.len(),
            gv.iter()
                .zip(eig.eigenvalues.iter())
                .map(|(&gi, &li)| -gi / (li + lambda)),
        );
        &eig.eigenvectors * coeffs
    };
    let scale = eig.eigenvalues.amax().max(1.0);
    if lo > 1e-12 * scale {
        let s = step(0.0);
        if s.norm() <= radius {
            return s;
        }
    }
    // Bisection on the shift for the boundary solution.
    let mut a = (-lo).max(0.0) + 1e-14 * scale;
    let mut s = step(a);
    if s.norm() <= radius {
        // Hard case: the gradient misses the lowest curvature direction.
        let v = eig.eigenvectors.column(eig.eigenvalues.imin()).into_owned();
        let extra = (radius * radius - s.norm_squared()).max(0.0).sqrt();
        let dir = if v.dot(g) > 0.0 { -1.0 } else { 1.0 };
        return s + v * (dir * extra);
    }
    let mut b_hi = a + g.norm() / radius + scale;
    for _ in 0..200 {
        let mid = 0.5 * (a + b_hi);
        s = step(mid);
        if s.norm() > radius {
            a = mid;
        } else {
            b_hi = mid;
        }
        if b_hi - a <= 1e-14 * b_hi {
            break;
        }
    }
    step(b_hi)
}

/// Feasible-path trust region method.
///
/// Every iterate satisfies the constraints: a tangent step from the reduced
/// quadratic model of the Lagrangian is followed by a Gauss-Newton projection,
/// and the step is judged by how much `t_f` actually dropped against the model.
///
/// With `allow_collapse`, an interior gap that keeps blocking the step once it
/// is below [`COLLAPSE_GAP`]`* t_f` is removed together with its two delays.
pub(crate) fn solve(prob: &Problem, start: &[f64], allow_collapse: bool) -> Result<Vec<f64>> {
    let m = prob.n_constraints();
    let check = |n: usize| {
        if n < m {
            Err(Error::Solver(format!(
                "{n} delays cannot meet {m} constraints"
            )))
        } else {
            Ok(())
        }
    };
    check(start.len())?;
    let mut t = restore(prob, start, allow_collapse)
        .ok_or_else(|| Error::Solver("could not reach the constraint surface".into()))?;
    let mut radius = TRUST_START * start_scale(&t);
    for _ in 0..MAX_ITER {
        let n = t.len();
        check(n)?;
        let (c, jac, curv) = prob.linearize(&t);
        let mu = estimate_multipliers(prob, &t);
        let (z, _) = factor(&jac, &c);
        let e = objective_gradient(n);
        if z.ncols() == 0 {
            return Ok(t);
        }
        let g = z.transpose() * &e;
        if g.amax() <= STATIONARITY_TOL {
            return Ok(t);
        }
        let h = curv.transpose() * &mu;
        let b = z.transpose() * DMatrix::from_diagonal(&h) * &z;
        let s = trust_step(&b, &g, radius);
        let mut d = &z * &s;
        let (alpha, blocking) = step_to_boundary(&t, d.as_slice());
        if let Some(q) = blocking {
            if allow_collapse && q >= 1 && gaps(&t)[q] <= COLLAPSE_GAP * t[n - 1] {
                remove_pair(&mut t, q);
                t = restore(prob, &t, allow_collapse)
                    .ok_or_else(|| Error::Solver("restoration failed after collapse".into()))?;
                continue;
            }
        }
        d *= alpha;
        let s = s * alpha;
        let predicted = -(g.dot(&s) + 0.5 * s.dot(&(&b * &s)));
        if predicted <= 4.0 * f64::EPSILON * t[n - 1]
            && s.norm() <= 1e-9 * t[n - 1]
            && blocking.is_none()
        {
            // No measurable decrease left in t_f, nor movement in the switches.
            return Ok(t);
        }
        let trial: Vec<f64> = t.iter().zip(d.iter()).map(|(a, b)| a + b).collect();
        let restored = restore(prob, &trial, false).filter(|r| {
            step_to_boundary(
                &t,
                &r.iter().zip(&t).map(|(a, b)| a - b).collect::<Vec<_>>(),
            )
            .0 > 0.0
                && gaps(r).iter().all(|&x| x > 0.0)
        });
        let Some(next) = restored else {
            radius *= 0.25;
            if radius < STEP_TOL * t[n - 1] {
                break;
            }
            continue;
        };
        let actual = t[n - 1] - next[n - 1];
        let ratio = if predicted > 0.0 {
            actual / predicted
        } else {
            -1.0
        };
        let step_len = s.norm();
        let tiny = step_len <= STEP_TOL * t[n - 1].max(1.0);
        if ratio > 0.1 || (tiny && actual >= -1e-15 * t[n - 1]) {
            t = next;
            if ratio > 0.75 && step_len >= 0.99 * radius * alpha {
                radius = (2.0 * radius).min(TRUST_MAX * t[t.len() - 1].max(1e-3));
            }
            if tiny {
                return Ok(t);
            }
        } else {
            radius = 0.25 * step_len.min(radius);
        }
        if ratio < 0.25 && ratio > 0.1 {
            radius *= 0.5;
        }
        if radius < STEP_TOL * t[t.len() - 1] {
            break;
        }
    }
    let c = prob.residuals(&t).amax();
    let (_, jac, _) = prob.linearize(&t);
    let (z, _) = factor(&jac, &prob.residuals(&t));
    let g = if z.ncols() == 0 {
        0.0
    } else {
        (z.transpose() * objective_gradient(t.len())).amax()
    };
    if c <= 1e2 * CONSTRAINT_TOL && g <= 1e-7 {
        // Stalled at the rounding floor of the model.
        return Ok(t);
    }
    Err(Error::Solver(format!(
        "no convergence in {MAX_ITER} iterations (residual {c:.3e}, reduced gradient {g:.3e})"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_form;
    use crate::plant::ModeSpec;
    use std::f64::consts::PI;

    fn plant(x_f: f64) -> PlantSpec<f64> {
        PlantSpec::single(ModeSpec::undamped(2.0 * PI).unwrap(), 240.0, x_f).unwrap()
    }

    #[test]
    fn kernels_match_finite_differences() {
        let p = Complex64::new(-0.3, 5.0);
        for k in [
            Kernel::Displacement { w: 2.0 },
            Kernel::Pole { p, part: Part::Re },
            Kernel::Robust {
                p,
                w: 5.0,
                part: Part::Im,
            },
        ] {
            let (t, h) = (0.37, 1e-6);
            let (_, d, dd) = k.eval(t);
            let fd = (k.eval(t + h).0 - k.eval(t - h).0) / (2.0 * h);
            let fdd = (k.eval(t + h).1 - k.eval(t - h).1) / (2.0 * h);
            assert!((d - fd).abs() < 1e-7 * d.abs().max(1.0));
            assert!((dd - fdd).abs() < 1e-6 * dd.abs().max(1.0));
        }
    }

    #[test]
    fn zone1_solution_is_a_kkt_point() {
        let sol = closed_form::solve(100.0, 2.0 * PI, 240.0).unwrap();
        let prof = sol.to_profile(2.0 * PI, 240.0).unwrap();
        let prob = Problem::new(&plant(100.0), &[]);
        let t = prof.delays();
        assert!(prob.residuals(&t).amax() < 1e-13);
        let s = solve(&prob, &t, false).unwrap();
        for (a, b) in s.iter().zip(&t) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn converges_from_a_perturbed_zone2_start() {
        let sol = closed_form::solve(400.0, 2.0 * PI, 240.0).unwrap();
        let exact = sol.to_profile(2.0 * PI, 240.0).unwrap().delays();
        let prob = Problem::new(&plant(400.0), &[]);
        let t: Vec<f64> = exact
            .iter()
            .enumerate()
            .map(|(i, x)| x + 1e-3 * (i as f64 - 2.0))
            .collect();
        let s = solve(&prob, &t, true).unwrap();
        for (a, b) in s.iter().zip(&exact) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn pair_removal_keeps_the_filter() {
        let prob = Problem::new(&plant(100.0), &[]);
        let t = vec![0.2, 0.5, 0.5, 0.7, 0.9];
        let mut r = t.clone();
        remove_pair(&mut r, 2);
        assert_eq!(r, vec![0.2, 0.7, 0.9]);
        let a = prob.residuals(&t);
        let b = prob.residuals(&r);
        assert!((a - b).amax() < 1e-15);
    }
}
