//! Uniform cell-centred grids on intervals and rectangles, and the conservative
//! variable-coefficient diffusion operator with zero-flux closure.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid<S> {
    dim: usize,
    cells: [usize; 2],
    extent: [S; 2],
    spacing: [S; 2],
}

impl<S: Real> Grid<S> {
    pub fn new_1d(cells: usize, length: S) -> Result<Self> {
        Self::build(1, [cells, 1], [length, S::one()])
    }

    pub fn new_2d(nx: usize, ny: usize, lx: S, ly: S) -> Result<Self> {
        Self::build(2, [nx, ny], [lx, ly])
    }

    fn build(dim: usize, cells: [usize; 2], extent: [S; 2]) -> Result<Self> {
        for axis in 0..dim {
            if cells[axis] < 3 {
                return Err(Error::InvalidParameter {
                    name: "cells",
                    reason: format!("need at least 3 cells per axis, got {}", cells[axis]),
                });
            }
            if !(extent[axis] > S::zero()) || !extent[axis].is_finite() {
                return Err(Error::InvalidParameter {
                    name: "extent",
                    reason: format!("extent must be positive, got {}", extent[axis]),
                });
            }
        }
        let spacing = [
            extent[0] / S::of_usize(cells[0]),
            extent[1] / S::of_usize(cells[1]),
        ];
        Ok(Self {
            dim,
            cells,
            extent,
            spacing,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nx(&self) -> usize {
        self.cells[0]
    }

    /// Cells along the second axis (1 for an interval).
    pub fn ny(&self) -> usize {
        self.cells[1]
    }

    pub fn len(&self) -> usize {
        self.cells[0] * self.cells[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn extent(&self) -> &[S] {
        &self.extent[..self.dim]
    }

    pub fn spacing(&self) -> &[S] {
        &self.spacing[..self.dim]
    }

    pub fn hx(&self) -> S {
        self.spacing[0]
    }

    pub fn cell_volume(&self) -> S {
        self.spacing[..self.dim]
            .iter()
            .fold(S::one(), |v, &h| v * h)
    }

    /// Total measure of the domain.
    pub fn volume(&self) -> S {
        self.extent[..self.dim].iter().fold(S::one(), |v, &l| v * l)
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.cells[0] + i
    }

    /// `(i, j)` for a flat cell index.
    pub fn coords(&self, cell: usize) -> (usize, usize) {
        (cell % self.cells[0], cell / self.cells[0])
    }

    /// Cell centre; the second component is 0 on an interval.
    pub fn center(&self, cell: usize) -> [S; 2] {
        let (i, j) = self.coords(cell);
        let half = S::of(0.5);
        let x = (S::of_usize(i) + half) * self.spacing[0];
        let y = if self.dim == 2 {
            (S::of_usize(j) + half) * self.spacing[1]
        } else {
            S::zero()
        };
        [x, y]
    }

    pub fn shape_string(&self) -> String {
        format!("{}x{}", self.cells[0], self.cells[1])
    }

    /// Samples `f(x, y)` at every cell centre.
    pub fn sample(&self, f: impl Fn(S, S) -> S) -> Vec<S> {
        (0..self.len())
            .map(|c| {
                let [x, y] = self.center(c);
                f(x, y)
            })
            .collect()
    }

    pub fn check_conforms(&self, what: &str, field: &[S]) -> Result<()> {
        if field.len() != self.len() {
            return Err(Error::Conformance {
                expected: format!("{what} with {} cells ({})", self.len(), self.shape_string()),
                found: format!("{} values", field.len()),
            });
        }
        Ok(())
    }
}

#[inline]
fn harmonic<S: Real>(a: S, b: S) -> S {
    let s = a + b;
    if s > S::zero() {
        S::of(2.0) * a * b / s
    } else {
        S::zero()
    }
}

/// Face transmissibilities `d_face / h^2` for one diffusion field.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceCoeffs<S> {
    nx: usize,
    ny: usize,
    x_faces: Vec<S>,
    y_faces: Vec<S>,
}

impl<S: Real> FaceCoeffs<S> {
    pub fn new(grid: &Grid<S>, d: &[S]) -> Result<Self> {
        grid.check_conforms("diffusion field", d)?;
        let (nx, ny) = (grid.nx(), grid.ny());
        let hx2 = grid.spacing[0] * grid.spacing[0];
        let mut x_faces = Vec::with_capacity((nx - 1) * ny);
        for j in 0..ny {
            for i in 0..nx - 1 {
                let c = j * nx + i;
                x_faces.push(harmonic(d[c], d[c + 1]) / hx2);
            }
        }
        let mut y_faces = Vec::new();
        if grid.dim == 2 {
            let hy2 = grid.spacing[1] * grid.spacing[1];
            y_faces.reserve(nx * (ny - 1));
            for j in 0..ny - 1 {
                for i in 0..nx {
                    let c = j * nx + i;
                    y_faces.push(harmonic(d[c], d[c + nx]) / hy2);
                }
            }
        }
        Ok(Self {
            nx,
            ny,
            x_faces,
            y_faces,
        })
    }

    /// `out = div(d grad u)`; boundary faces carry no flux.
    pub fn apply(&self, u: &[S], out: &mut [S]) {
        out.iter_mut().for_each(|o| *o = S::zero());
        let nx = self.nx;
        for j in 0..self.ny {
            for i in 0..nx - 1 {
                let c = j * nx + i;
                let flux = self.x_faces[j * (nx - 1) + i] * (u[c + 1] - u[c]);
                out[c] += flux;
                out[c + 1] -= flux;
            }
        }
        if !self.y_faces.is_empty() {
            for j in 0..self.ny - 1 {
                for i in 0..nx {
                    let c = j * nx + i;
                    let flux = self.y_faces[j * nx + i] * (u[c + nx] - u[c]);
                    out[c] += flux;
                    out[c + nx] -= flux;
                }
            }
        }
    }

    /// `out = u - dt * div(d grad u)`, the backward Euler operator.
    pub fn apply_implicit(&self, dt: S, u: &[S], out: &mut [S]) {
        self.apply(u, out);
        for (o, &x) in out.iter_mut().zip(u) {
            *o = x - dt * *o;
        }
    }

    /// Largest diagonal magnitude of the operator, used for stability bounds.
    pub fn max_diagonal(&self) -> S {
        let mut diag = vec![S::zero(); self.nx * self.ny];
        let nx = self.nx;
        for j in 0..self.ny {
            for i in 0..nx - 1 {
                let w = self.x_faces[j * (nx - 1) + i];
                diag[j * nx + i] += w;
                diag[j * nx + i + 1] += w;
            }
        }
        for j in 0..self.ny.saturating_sub(1) {
            for i in 0..nx {
                if let Some(&w) = self.y_faces.get(j * nx + i) {
                    diag[j * nx + i] += w;
                    diag[(j + 1) * nx + i] += w;
                }
            }
        }
        diag.into_iter().fold(S::zero(), S::max)
    }
}

/// Conservative discretisation of `div(d grad u)` with harmonic-mean face
/// coefficients and homogeneous Neumann closure.
pub fn div_d_grad<S: Real>(field: &[S], d: &[S], grid: &Grid<S>) -> Result<Vec<S>> {
    grid.check_conforms("field", field)?;
    let faces = FaceCoeffs::new(grid, d)?;
    let mut out = vec![S::zero(); field.len()];
    faces.apply(field, &mut out);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_tiny_or_degenerate_grids() {
        assert!(Grid::<f64>::new_1d(2, 1.0).is_err());
        assert!(Grid::<f64>::new_1d(8, 0.0).is_err());
        assert!(Grid::<f64>::new_2d(8, 2, 1.0, 1.0).is_err());
        let g = Grid::<f64>::new_2d(4, 5, 2.0, 1.0).unwrap();
        assert_eq!(g.len(), 20);
        assert!((g.cell_volume() - 0.1).abs() < 1e-15);
        assert_eq!(g.coords(g.index(3, 2)), (3, 2));
    }

    #[test]
    fn constants_are_in_the_kernel() {
        let g = Grid::<f64>::new_2d(6, 5, 1.0, 2.0).unwrap();
        let d = g.sample(|x, y| 1.0 + x + 0.5 * y * y);
        let out = div_d_grad(&vec![3.7; g.len()], &d, &g).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let g = Grid::<f64>::new_1d(8, 1.0).unwrap();
        let err = div_d_grad(&[0.0; 7], &[1.0; 8], &g).unwrap_err();
        assert!(matches!(err, Error::Conformance { .. }));
        assert!(div_d_grad(&[0.0; 8], &[1.0; 9], &g).is_err());
    }

    #[test]
    fn neumann_cosine_converges_at_second_order() {
        let length = 2.0_f64;
        let k = std::f64::consts::PI / length;
        let errs: Vec<f64> = [16, 32, 64]
            .iter()
            .map(|&n| {
                let g = Grid::new_1d(n, length).unwrap();
                let u = g.sample(|x, _| (k * x).cos());
                let out = div_d_grad(&u, &vec![1.0; n], &g).unwrap();
                u.iter()
                    .zip(&out)
                    .map(|(&ui, &oi)| (oi + k * k * ui).abs())
                    .fold(0.0, f64::max)
            })
            .collect();
        for w in errs.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!(order > 1.95, "order {order}, errors {errs:?}");
        }
    }

    #[test]
    fn harmonic_faces_handle_jumps() {
        // Two-material rod: flux continuity gives the harmonic mean.
        let g = Grid::<f64>::new_1d(4, 4.0).unwrap();
        let d = [1.0, 1.0, 3.0, 3.0];
        let faces = FaceCoeffs::new(&g, &d).unwrap();
        assert_eq!(faces.x_faces, vec![1.0, 1.5, 3.0]);
    }

    proptest! {
        #[test]
        fn discrete_flux_telescopes(
            seed_u in prop::collection::vec(0.0f64..5.0, 35),
            seed_d in prop::collection::vec(0.1f64..3.0, 35),
        ) {
            let g = Grid::new_2d(7, 5, 1.3, 0.9).unwrap();
            let out = div_d_grad(&seed_u, &seed_d, &g).unwrap();
            let total: f64 = out.iter().map(|&o| o * g.cell_volume()).sum();
            let scale: f64 = out.iter().map(|o| o.abs() * g.cell_volume()).sum::<f64>().max(1.0);
            prop_assert!(total.abs() <= 1e-12 * scale);
        }

        #[test]
        fn operator_is_symmetric(
            u in prop::collection::vec(-1.0f64..1.0, 12),
            w in prop::collection::vec(-1.0f64..1.0, 12),
            d in prop::collection::vec(0.1f64..3.0, 12),
        ) {
            let g = Grid::new_2d(4, 3, 1.0, 1.0).unwrap();
            let f = FaceCoeffs::new(&g, &d).unwrap();
            let mut au = vec![0.0; 12];
            let mut aw = vec![0.0; 12];
            f.apply(&u, &mut au);
            f.apply(&w, &mut aw);
            let lhs: f64 = w.iter().zip(&au).map(|(a, b)| a * b).sum();
            let rhs: f64 = u.iter().zip(&aw).map(|(a, b)| a * b).sum();
            prop_assert!((lhs - rhs).abs() < 1e-10);
        }
    }
}
