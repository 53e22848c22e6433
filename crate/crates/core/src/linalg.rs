//! Unpreconditioned conjugate gradients for the symmetric implicit-diffusion systems.
//!
//! No preconditioner is applied: the constant vector is an eigenvector of
//! `I - dt A`, so plain CG started from a residual with zero mean keeps every
//! residual mean-free and the solve conserves mass to rounding.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{dot, Real};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CgOptions<S> {
    /// Relative residual target `|r| <= tol |b|`.
    pub tol: S,
    pub max_iter: usize,
}

impl<S: Real> Default for CgOptions<S> {
    fn default() -> Self {
        Self {
            tol: S::of(1e-10),
            max_iter: 2000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgStats<S> {
    pub iterations: usize,
    pub relative_residual: S,
}

#[derive(Debug, Clone, Default)]
pub struct CgWorkspace<S> {
    r: Vec<S>,
    p: Vec<S>,
    ap: Vec<S>,
}

impl<S: Real> CgWorkspace<S> {
    pub fn new(n: usize) -> Self {
        Self {
            r: vec![S::zero(); n],
            p: vec![S::zero(); n],
            ap: vec![S::zero(); n],
        }
    }

    fn resize(&mut self, n: usize) {
        for v in [&mut self.r, &mut self.p, &mut self.ap] {
            v.resize(n, S::zero());
        }
    }
}

/// Solves `op(x) = b` for symmetric positive definite `op`, starting from the
/// contents of `x`.
pub fn conjugate_gradient<S: Real>(
    op: impl Fn(&[S], &mut [S]),
    b: &[S],
    x: &mut [S],
    opts: CgOptions<S>,
    ws: &mut CgWorkspace<S>,
) -> Result<CgStats<S>> {
    let n = b.len();
    ws.resize(n);
    let b_norm = dot(b, b).sqrt();
    if b_norm == S::zero() {
        x.iter_mut().for_each(|v| *v = S::zero());
        return Ok(CgStats {
            iterations: 0,
            relative_residual: S::zero(),
        });
    }
    // A tolerance below a few ulps of |b| is unreachable in this precision.
    let tol = opts.tol.max(S::of(8.0) * S::epsilon());
    let target = tol * b_norm;

    op(x, &mut ws.ap);
    for ((r, bk), ap) in ws.r.iter_mut().zip(b).zip(&ws.ap) {
        *r = *bk - *ap;
    }
    ws.p.copy_from_slice(&ws.r);
    let mut rr = dot(&ws.r, &ws.r);
    let mut iterations = 0;
    while rr.sqrt() > target {
        if iterations == opts.max_iter {
            return Err(Error::LinearSolve {
                iterations,
                residual: (rr.sqrt() / b_norm).to_f64_lossy(),
            });
        }
        op(&ws.p, &mut ws.ap);
        let pap = dot(&ws.p, &ws.ap);
        if !(pap > S::zero()) {
            return Err(Error::LinearSolve {
                iterations,
                residual: (rr.sqrt() / b_norm).to_f64_lossy(),
            });
        }
        let alpha = rr / pap;
        for (((xk, r), p), ap) in x.iter_mut().zip(ws.r.iter_mut()).zip(&ws.p).zip(&ws.ap) {
            *xk += alpha * *p;
            *r -= alpha * *ap;
        }
        let rr_next = dot(&ws.r, &ws.r);
        let beta = rr_next / rr;
        for k in 0..n {
            ws.p[k] = ws.r[k] + beta * ws.p[k];
        }
        rr = rr_next;
        iterations += 1;
    }
    Ok(CgStats {
        iterations,
        relative_residual: rr.sqrt() / b_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{FaceCoeffs, Grid};

    #[test]
    fn solves_implicit_diffusion_system() {
        let g = Grid::<f64>::new_2d(9, 7, 1.0, 1.0).unwrap();
        let d = g.sample(|x, y| 0.5 + x * y);
        let faces = FaceCoeffs::new(&g, &d).unwrap();
        let dt = 0.05;
        let truth = g.sample(|x, y| (3.0 * x).sin() + y * y);
        let mut b = vec![0.0; g.len()];
        faces.apply_implicit(dt, &truth, &mut b);
        let mut x = b.clone();
        let mut ws = CgWorkspace::new(g.len());
        let opts = CgOptions {
            tol: 1e-13,
            max_iter: 500,
        };
        let stats = conjugate_gradient(
            |u, o| faces.apply_implicit(dt, u, o),
            &b,
            &mut x,
            opts,
            &mut ws,
        )
        .unwrap();
        assert!(stats.relative_residual <= 1e-13);
        for (a, e) in x.iter().zip(&truth) {
            assert!((a - e).abs() < 1e-11);
        }
        let mass_b: f64 = b.iter().sum();
        let mass_x: f64 = x.iter().sum();
        assert!((mass_b - mass_x).abs() < 1e-12 * mass_b.abs());
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let mut x = vec![1.0, 2.0];
        let mut ws = CgWorkspace::new(2);
        conjugate_gradient(
            |u: &[f64], o: &mut [f64]| o.copy_from_slice(u),
            &[0.0, 0.0],
            &mut x,
            CgOptions::default(),
            &mut ws,
        )
        .unwrap();
        assert_eq!(x, vec![0.0, 0.0]);
    }

    #[test]
    fn iteration_cap_reports_residual() {
        let g = Grid::<f64>::new_1d(50, 1.0).unwrap();
        let faces = FaceCoeffs::new(&g, &vec![1.0; 50]).unwrap();
        let b = g.sample(|x, _| x);
        let mut x = vec![0.0; 50];
        let mut ws = CgWorkspace::new(50);
        let err = conjugate_gradient(
            |u, o| faces.apply_implicit(10.0, u, o),
            &b,
            &mut x,
            CgOptions {
                tol: 1e-14,
                max_iter: 2,
            },
            &mut ws,
        )
        .unwrap_err();
        assert!(matches!(err, Error::LinearSolve { iterations: 2, .. }));
    }
}
