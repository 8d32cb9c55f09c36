//! Real polynomial roots from companion-matrix eigenvalues.
//!
//! The companion matrix is already upper Hessenberg; it is balanced and its
//! eigenvalues extracted with the Francis double-shift QR iteration. Each root
//! is then polished by a few Newton steps on the polynomial itself.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Roots of `c[0] z^n + c[1] z^(n-1) + ... + c[n]`.
pub fn roots<T: Real>(coeffs: &[T]) -> Result<Vec<Complex<T>>> {
    let first = coeffs
        .iter()
        .position(|c| *c != T::zero())
        .ok_or_else(|| Error::Domain("zero polynomial has no roots".into()))?;
    let c = &coeffs[first..];
    let n = c.len() - 1;
    if n == 0 {
        return Ok(Vec::new());
    }
    let lead = c[0];
    let mut a = vec![vec![T::zero(); n]; n];
    for j in 0..n {
        a[0][j] = -c[j + 1] / lead;
    }
    for i in 1..n {
        a[i][i - 1] = T::one();
    }
    balance(&mut a);
    let mut out = hqr(&mut a)?;
    for z in out.iter_mut() {
        *z = polish(c, *z);
    }
    out.sort_by(|x, y| {
        x.re.partial_cmp(&y.re)
            .unwrap()
            .then(x.im.partial_cmp(&y.im).unwrap())
    });
    Ok(out)
}

/// Roots whose imaginary part is below `tol` (relative to `max(1, |z|)`).
pub fn real_roots<T: Real>(coeffs: &[T], tol: T) -> Result<Vec<T>> {
    Ok(roots(coeffs)?
        .into_iter()
        .filter(|z| z.im.abs() <= tol * z.norm().max(T::one()))
        .map(|z| z.re)
        .collect())
}

/// Horner evaluation of the polynomial and its derivative.
fn horner<T: Real>(c: &[T], z: Complex<T>) -> (Complex<T>, Complex<T>) {
    let zero = Complex::new(T::zero(), T::zero());
    c.iter()
        .fold((zero, zero), |(p, dp), &ci| (p * z + ci, dp * z + p))
}

fn polish<T: Real>(c: &[T], mut z: Complex<T>) -> Complex<T> {
    let (mut p, _) = horner(c, z);
    for _ in 0..8 {
        let (_, dp) = horner(c, z);
        if dp.norm() == T::zero() {
            break;
        }
        let cand = z - p / dp;
        let (pc, _) = horner(c, cand);
        if !(pc.norm() < p.norm()) {
            break;
        }
        z = cand;
        p = pc;
    }
    if z.im.abs() <= T::epsilon() * T::lit(16.0) * z.norm() {
        z.im = T::zero();
    }
    z
}

/// Diagonal similarity scaling by powers of two.
fn balance<T: Real>(a: &mut [Vec<T>]) {
    let n = a.len();
    let radix = T::lit(2.0);
    let sqrdx = radix * radix;
    let mut done = false;
    while !done {
        done = true;
        for i in 0..n {
            let mut r = T::zero();
            let mut c = T::zero();
            for j in 0..n {
                if j != i {
                    c = c + a[j][i].abs();
                    r = r + a[i][j].abs();
                }
            }
            if c != T::zero() && r != T::zero() {
                let mut g = r / radix;
                let mut f = T::one();
                let s = c + r;
                while c < g {
                    f = f * radix;
                    c = c * sqrdx;
                }
                g = r * radix;
                while c > g {
                    f = f / radix;
                    c = c / sqrdx;
                }
                if (c + r) / f < T::lit(0.95) * s {
                    done = false;
                    let g = T::one() / f;
                    for j in 0..n {
                        a[i][j] = a[i][j] * g;
                    }
                    for j in 0..n {
                        a[j][i] = a[j][i] * f;
                    }
                }
            }
        }
    }
}

fn sign<T: Real>(a: T, b: T) -> T {
    if b >= T::zero() {
        a.abs()
    } else {
        -a.abs()
    }
}

/// Eigenvalues of an upper Hessenberg matrix by shifted double QR steps.
fn hqr<T: Real>(a: &mut [Vec<T>]) -> Result<Vec<Complex<T>>> {
    let n = a.len();
    let mut wr = vec![T::zero(); n];
    let mut wi = vec![T::zero(); n];
    let mut anorm = T::zero();
    for i in 0..n {
        for j in i.saturating_sub(1)..n {
            anorm = anorm + a[i][j].abs();
        }
    }
    let mut nn = n as isize - 1;
    let mut t = T::zero();
    let (mut p, mut q, mut r): (T, T, T);
    let (mut x, mut y, mut z);
    let mut w;
    while nn >= 0 {
        let mut its = 0;
        loop {
            let mut l = nn;
            while l >= 1 {
                let lu = l as usize;
                let mut s = a[lu - 1][lu - 1].abs() + a[lu][lu].abs();
                if s == T::zero() {
                    s = anorm;
                }
                if a[lu][lu - 1].abs() + s == s {
                    a[lu][lu - 1] = T::zero();
                    break;
                }
                l -= 1;
            }
            let nu = nn as usize;
            x = a[nu][nu];
            if l == nn {
                wr[nu] = x + t;
                wi[nu] = T::zero();
                nn -= 1;
                break;
            }
            y = a[nu - 1][nu - 1];
            w = a[nu][nu - 1] * a[nu - 1][nu];
            if l == nn - 1 {
                p = T::lit(0.5) * (y - x);
                q = p * p + w;
                z = q.abs().sqrt();
                x = x + t;
                if q >= T::zero() {
                    z = p + sign(z, p);
                    wr[nu - 1] = x + z;
                    wr[nu] = x + z;
                    if z != T::zero() {
                        wr[nu] = x - w / z;
                    }
                    wi[nu - 1] = T::zero();
                    wi[nu] = T::zero();
                } else {
                    wr[nu - 1] = x + p;
                    wr[nu] = x + p;
                    wi[nu - 1] = -z;
                    wi[nu] = z;
                }
                nn -= 2;
                break;
            }
            if its == 60 {
                return Err(Error::Solver("QR iteration did not converge".into()));
            }
            if its == 10 || its == 20 {
                t = t + x;
                for i in 0..=nu {
                    a[i][i] = a[i][i] - x;
                }
                let s = a[nu][nu - 1].abs() + a[nu - 1][nu - 2].abs();
                x = T::lit(0.75) * s;
                y = x;
                w = T::lit(-0.4375) * s * s;
            }
            its += 1;
            let lu = l as usize;
            let mut m = nu - 2;
            loop {
                z = a[m][m];
                r = x - z;
                let s = y - z;
                p = (r * s - w) / a[m + 1][m] + a[m][m + 1];
                q = a[m + 1][m + 1] - z - r - s;
                r = a[m + 2][m + 1];
                let s = p.abs() + q.abs() + r.abs();
                p = p / s;
                q = q / s;
                r = r / s;
                if m == lu {
                    break;
                }
                let u = a[m][m - 1].abs() * (q.abs() + r.abs());
                let v = p.abs() * (a[m - 1][m - 1].abs() + z.abs() + a[m + 1][m + 1].abs());
                if u + v == v {
                    break;
                }
                m -= 1;
            }
            for i in (m + 2)..=nu {
                a[i][i - 2] = T::zero();
                if i != m + 2 {
                    a[i][i - 3] = T::zero();
                }
            }
            let mut k = m;
            while k + 1 <= nu {
                if k != m {
                    p = a[k][k - 1];
                    q = a[k + 1][k - 1];
                    r = T::zero();
                    if k + 1 != nu {
                        r = a[k + 2][k - 1];
                    }
                    x = p.abs() + q.abs() + r.abs();
                    if x != T::zero() {
                        p = p / x;
                        q = q / x;
                        r = r / x;
                    }
                }
                let s = sign((p * p + q * q + r * r).sqrt(), p);
                if s != T::zero() {
                    if k == m {
                        if lu != m {
                            a[k][k - 1] = -a[k][k - 1];
                        }
                    } else {
                        a[k][k - 1] = -s * x;
                    }
                    p = p + s;
                    x = p / s;
                    y = q / s;
                    z = r / s;
                    q = q / p;
                    r = r / p;
                    for j in k..=nu {
                        p = a[k][j] + q * a[k + 1][j];
                        if k + 1 != nu {
                            p = p + r * a[k + 2][j];
                            a[k + 2][j] = a[k + 2][j] - p * z;
                        }
                        a[k + 1][j] = a[k + 1][j] - p * y;
                        a[k][j] = a[k][j] - p * x;
                    }
                    let mmin = if nu < k + 3 { nu } else { k + 3 };
                    for i in lu..=mmin {
                        p = x * a[i][k] + y * a[i][k + 1];
                        if k + 1 != nu {
                            p = p + z * a[i][k + 2];
                            a[i][k + 2] = a[i][k + 2] - p * r;
                        }
                        a[i][k + 1] = a[i][k + 1] - p * q;
                        a[i][k] = a[i][k] - p;
                    }
                }
                k += 1;
            }
        }
    }
    Ok(wr
        .into_iter()
        .zip(wi)
        .map(|(re, im)| Complex::new(re, im))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn expand(roots: &[f64]) -> Vec<f64> {
        roots.iter().fold(vec![1.0], |acc, &r| {
            let mut next = vec![0.0; acc.len() + 1];
            for (i, &a) in acc.iter().enumerate() {
                next[i] += a;
                next[i + 1] -= a * r;
            }
            next
        })
    }

    #[test]
    fn quadratic_and_complex_pair() {
        let r = roots(&[1.0, 0.0, 1.0]).unwrap();
        assert_eq!(r.len(), 2);
        assert!((r[0] - Complex::new(0.0, -1.0)).norm() < 1e-14);
        assert!((r[1] - Complex::new(0.0, 1.0)).norm() < 1e-14);
        let r = real_roots(&[2.0_f64, -6.0, 4.0], 1e-12).unwrap();
        assert!((r[0] - 1.0).abs() < 1e-14 && (r[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn quartic_with_known_roots() {
        let c = expand(&[-1.5, -0.25, 0.5, 3.0]);
        let r = real_roots(&c, 1e-10).unwrap();
        for (a, b) in r.iter().zip([-1.5, -0.25, 0.5, 3.0]) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn near_double_root() {
        let c = expand(&[0.999_999, 1.0, -2.0]);
        let r = real_roots(&c, 1e-6).unwrap();
        assert_eq!(r.len(), 3);
        assert!((r[1] - 0.999_999).abs() < 1e-8 && (r[2] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn degree_zero_and_leading_zeros() {
        assert!(roots(&[3.0]).unwrap().is_empty());
        let r = real_roots(&[0.0, 1.0, -2.0], 1e-12).unwrap();
        assert_eq!(r, vec![2.0]);
        assert!(roots::<f64>(&[0.0, 0.0]).is_err());
    }

    proptest! {
        #[test]
        fn recovers_separated_real_roots(mut rs in prop::collection::vec(-5.0f64..5.0, 1..6)) {
            rs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            prop_assume!(rs.windows(2).all(|w| w[1] - w[0] > 0.05));
            let got = real_roots(&expand(&rs), 1e-8).unwrap();
            prop_assert_eq!(got.len(), rs.len());
            for (a, b) in got.iter().zip(&rs) {
                prop_assert!((a - b).abs() < 1e-7);
            }
        }
    }
}
