//! Free-space Helmholtz kernel `g(R) = exp(-i k0 |R|) / (4 pi |R|)` and its
//! Cartesian derivatives, written through the radial derivatives
//!
//! ```text
//! g'(R)  = -(i k0 + 1/R) g
//! g''(R) = ((i k0 + 1/R)^2 + 1/R^2) g
//! d_i g        = g' R_i / R
//! d_i d_j g    = g'' R_i R_j / R^2 + g' (delta_ij / R - R_i R_j / R^3)
//! ```

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Kernel value at `r` (meters) for wavenumber `k0` (1/m).
pub fn green_g(r: [f64; 3], k0: f64) -> Result<Complex64> {
    let dist = norm3(r);
    if dist == 0.0 {
        return Err(Error::SingularPoint(
            "g is singular at R = 0; self terms go through the singular quadrature".into(),
        ));
    }
    Ok(scalar(dist, k0))
}

#[inline]
pub(crate) fn norm3(r: [f64; 3]) -> f64 {
    (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt()
}

#[inline]
pub(crate) fn scalar(dist: f64, k0: f64) -> Complex64 {
    let (s, c) = (k0 * dist).sin_cos();
    Complex64::new(c, -s) / (4.0 * PI * dist)
}

/// Static part `1 / (4 pi R)`.
#[inline]
pub(crate) fn scalar_static(dist: f64) -> f64 {
    1.0 / (4.0 * PI * dist)
}

/// `g - 1/(4 pi R)`, bounded at the origin (limit `-i k0 / (4 pi)`).
#[inline]
pub(crate) fn scalar_smooth(dist: f64, k0: f64) -> Complex64 {
    let x = k0 * dist;
    if x < 1e-3 {
        // Series of (exp(-ix) - 1)/x avoids cancellation.
        let x2 = x * x;
        let re = -x / 2.0 * (1.0 - x2 / 12.0);
        let im = -(1.0 - x2 / 6.0 + x2 * x2 / 120.0);
        return Complex64::new(re, im) * (k0 / (4.0 * PI));
    }
    let (s, c) = x.sin_cos();
    Complex64::new(c - 1.0, -s) / (4.0 * PI * dist)
}

/// Radial derivative of `g - 1/(4 pi R)`, bounded at the origin.
#[inline]
pub(crate) fn smooth_radial_derivative(dist: f64, k0: f64) -> Complex64 {
    let x = k0 * dist;
    let scale = k0 * k0 / (4.0 * PI);
    if x < 1e-2 {
        let x2 = x * x;
        return Complex64::new(-0.5 + x2 / 8.0, x / 3.0 - x * x2 / 30.0) * scale;
    }
    let (s, c) = x.sin_cos();
    let e = Complex64::new(c, -s);
    let num = Complex64::new(0.0, -x) * e - e + 1.0;
    num * scale / (x * x)
}

/// Kernel value, gradient and Hessian at one (non-zero) displacement.
#[derive(Debug, Clone, Copy)]
pub(crate) struct KernelJet {
    pub g: Complex64,
    pub grad: [Complex64; 3],
    pub hess: [[Complex64; 3]; 3],
}

#[inline]
pub(crate) fn jet(r: [f64; 3], k0: f64, static_only: bool) -> KernelJet {
    let dist = norm3(r);
    let inv = 1.0 / dist;
    let g = if static_only {
        Complex64::new(scalar_static(dist), 0.0)
    } else {
        scalar(dist, k0)
    };
    let a = if static_only {
        Complex64::new(inv, 0.0)
    } else {
        Complex64::new(inv, k0)
    };
    let g1 = -a * g;
    let g2 = (a * a + inv * inv) * g;
    let rhat = [r[0] * inv, r[1] * inv, r[2] * inv];
    let mut grad = [Complex64::default(); 3];
    let mut hess = [[Complex64::default(); 3]; 3];
    let g1_over_r = g1 * inv;
    for i in 0..3 {
        grad[i] = g1 * rhat[i];
        for j in i..3 {
            let rr = rhat[i] * rhat[j];
            let delta = if i == j { 1.0 } else { 0.0 };
            let v = g2 * rr + g1_over_r * (delta - rr);
            hess[i][j] = v;
            hess[j][i] = v;
        }
    }
    KernelJet { g, grad, hess }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn static_limit_value() {
        let g = green_g([1.0, 0.0, 0.0], 0.0).unwrap();
        assert!((g.re - 0.0795775).abs() < 1e-7);
        assert_eq!(g.im, 0.0);
    }

    #[test]
    fn unit_distance_magnitude() {
        for k0 in [0.3, 2.0, 17.0] {
            let g = green_g([0.0, 0.6, 0.8], k0).unwrap();
            assert!((g.norm() - 1.0 / (4.0 * PI)).abs() < 1e-15);
        }
    }

    #[test]
    fn even_in_displacement() {
        let r = [0.3, -1.2, 0.7];
        let g1 = green_g(r, 4.0).unwrap();
        let g2 = green_g([-0.3, 1.2, -0.7], 4.0).unwrap();
        assert_eq!(g1, g2);
    }

    #[test]
    fn origin_is_singular() {
        assert!(matches!(green_g([0.0; 3], 1.0), Err(Error::SingularPoint(_))));
    }

    #[test]
    fn derivatives_match_central_differences() {
        let k0 = 3.0;
        let r = [0.4, -0.25, 0.6];
        let j = jet(r, k0, false);
        let h = 1e-4;
        let at = |d: [f64; 3]| scalar(norm3([r[0] + d[0], r[1] + d[1], r[2] + d[2]]), k0);
        for i in 0..3 {
            let mut e = [0.0; 3];
            e[i] = h;
            let m = e.map(|v| -v);
            let fd = (at(e) - at(m)) / (2.0 * h);
            assert!((fd - j.grad[i]).norm() < 1e-6 * j.grad[i].norm().max(1.0));
            for jj in 0..3 {
                let mut ej = [0.0; 3];
                ej[jj] = h;
                let pp = at([e[0] + ej[0], e[1] + ej[1], e[2] + ej[2]]);
                let pm = at([e[0] - ej[0], e[1] - ej[1], e[2] - ej[2]]);
                let mp = at([-e[0] + ej[0], -e[1] + ej[1], -e[2] + ej[2]]);
                let mm = at([-e[0] - ej[0], -e[1] - ej[1], -e[2] - ej[2]]);
                let fd2 = (pp - pm - mp + mm) / (4.0 * h * h);
                assert!((fd2 - j.hess[i][jj]).norm() < 1e-5 * j.hess[i][jj].norm().max(1.0), "{i}{jj}");
            }
        }
    }

    #[test]
    fn smooth_part_is_continuous_through_series_switch() {
        let k0 = 2.0;
        for dist in [4.9e-4, 5.1e-4, 1e-2, 1.0] {
            let direct = scalar(dist, k0) - scalar_static(dist);
            assert!((scalar_smooth(dist, k0) - direct).norm() < 1e-9);
        }
        let lim = scalar_smooth(0.0, k0);
        assert!((lim - Complex64::new(0.0, -k0 / (4.0 * PI))).norm() < 1e-15);
    }

    #[test]
    fn smooth_derivative_matches_difference_quotient() {
        let k0 = 2.0;
        for dist in [4.9e-3f64, 5.1e-3, 0.3, 1.7] {
            let h = 1e-5 * dist.max(1e-2);
            let fd = (scalar_smooth(dist + h, k0) - scalar_smooth(dist - h, k0)) / (2.0 * h);
            let d = smooth_radial_derivative(dist, k0);
            assert!((fd - d).norm() < 1e-7, "{dist}: {fd} vs {d}");
        }
    }
}
