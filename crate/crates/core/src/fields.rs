//! Grid-sampled fields: concentrations, diffusion coefficients and source terms.

use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Densities, Species};
use crate::scalar::{max_of, min_of, Real};

/// Time modulation of a separable field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Amplitude<S> {
    Constant {
        value: S,
    },
    /// `limit + (start - limit) exp(-rate t)`, converging as `t -> inf`.
    Relaxing {
        start: S,
        limit: S,
        rate: S,
    },
}

impl<S: Real> Amplitude<S> {
    pub fn at(&self, t: S) -> S {
        match *self {
            Amplitude::Constant { value } => value,
            Amplitude::Relaxing { start, limit, rate } => {
                limit + (start - limit) * (-rate * t).exp()
            }
        }
    }

    pub fn limit(&self) -> S {
        match *self {
            Amplitude::Constant { value } => value,
            Amplitude::Relaxing { limit, .. } => limit,
        }
    }

    /// `(inf, sup)` over `t >= 0`.
    pub fn range(&self) -> (S, S) {
        match *self {
            Amplitude::Constant { value } => (value, value),
            Amplitude::Relaxing { start, limit, .. } => (start.min(limit), start.max(limit)),
        }
    }
}

/// A scalar field over space and time, sampled on the grid cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpaceTimeField<S> {
    Uniform {
        value: S,
    },
    Static {
        values: Vec<S>,
    },
    Separable {
        profile: Vec<S>,
        amplitude: Amplitude<S>,
    },
    /// Piecewise constant in time on slabs `[k len, (k + 1) len)`; the last slab extends forever.
    Slabs {
        slab_len: S,
        values: Vec<Vec<S>>,
    },
}

impl<S: Real> SpaceTimeField<S> {
    pub fn uniform(value: S) -> Self {
        SpaceTimeField::Uniform { value }
    }

    pub fn from_values(values: Vec<S>) -> Self {
        SpaceTimeField::Static { values }
    }

    pub fn is_time_independent(&self) -> bool {
        match self {
            SpaceTimeField::Uniform { .. } | SpaceTimeField::Static { .. } => true,
            SpaceTimeField::Separable { amplitude, .. } => {
                matches!(amplitude, Amplitude::Constant { .. })
            }
            SpaceTimeField::Slabs { values, .. } => values.len() <= 1,
        }
    }

    pub fn slab_index(slab_len: S, count: usize, t: S) -> usize {
        let k = (t / slab_len).floor();
        if k < S::zero() {
            0
        } else {
            k.to_usize()
                .unwrap_or(usize::MAX)
                .min(count.saturating_sub(1))
        }
    }

    /// Writes the field at time `t` into `out`.
    pub fn fill(&self, t: S, out: &mut [S]) {
        match self {
            SpaceTimeField::Uniform { value } => out.iter_mut().for_each(|o| *o = *value),
            SpaceTimeField::Static { values } => out.copy_from_slice(values),
            SpaceTimeField::Separable { profile, amplitude } => {
                let a = amplitude.at(t);
                for (o, &p) in out.iter_mut().zip(profile) {
                    *o = p * a;
                }
            }
            SpaceTimeField::Slabs { slab_len, values } => {
                let k = Self::slab_index(*slab_len, values.len(), t);
                out.copy_from_slice(&values[k]);
            }
        }
    }

    pub fn at(&self, t: S, n: usize) -> Vec<S> {
        let mut out = vec![S::zero(); n];
        self.fill(t, &mut out);
        out
    }

    /// The `t -> inf` limit.
    pub fn limit(&self, n: usize) -> Vec<S> {
        match self {
            SpaceTimeField::Uniform { value } => vec![*value; n],
            SpaceTimeField::Static { values } => values.clone(),
            SpaceTimeField::Separable { profile, amplitude } => {
                let a = amplitude.limit();
                profile.iter().map(|&p| p * a).collect()
            }
            SpaceTimeField::Slabs { values, .. } => {
                values.last().cloned().unwrap_or_else(|| vec![S::zero(); n])
            }
        }
    }

    /// Spatial mean at time `t`, which for uniform fields is the value itself.
    pub fn mean_at(&self, t: S, n: usize) -> S {
        let v = self.at(t, n);
        v.iter().copied().sum::<S>() / S::of_usize(n)
    }

    /// The field with each spatial profile replaced by its mean; time dependence is kept.
    pub fn spatial_mean(&self) -> Self {
        let mean = |v: &[S]| v.iter().copied().sum::<S>() / S::of_usize(v.len().max(1));
        match self {
            SpaceTimeField::Uniform { value } => SpaceTimeField::Uniform { value: *value },
            SpaceTimeField::Static { values } => SpaceTimeField::Uniform {
                value: mean(values),
            },
            SpaceTimeField::Separable { profile, amplitude } => SpaceTimeField::Separable {
                profile: vec![mean(profile); profile.len()],
                amplitude: *amplitude,
            },
            SpaceTimeField::Slabs { slab_len, values } => SpaceTimeField::Slabs {
                slab_len: *slab_len,
                values: values.iter().map(|v| vec![mean(v); v.len()]).collect(),
            },
        }
    }

    /// `(inf, sup)` over all cells and `t >= 0`.
    pub fn range(&self) -> (S, S) {
        match self {
            SpaceTimeField::Uniform { value } => (*value, *value),
            SpaceTimeField::Static { values } => (min_of(values), max_of(values)),
            SpaceTimeField::Separable { profile, amplitude } => {
                let (a_lo, a_hi) = amplitude.range();
                let (p_lo, p_hi) = (min_of(profile), max_of(profile));
                let c = [p_lo * a_lo, p_lo * a_hi, p_hi * a_lo, p_hi * a_hi];
                (min_of(&c), max_of(&c))
            }
            SpaceTimeField::Slabs { values, .. } => values
                .iter()
                .fold((S::infinity(), S::neg_infinity()), |(lo, hi), v| {
                    (lo.min(min_of(v)), hi.max(max_of(v)))
                }),
        }
    }

    pub fn sup(&self) -> S {
        let (lo, hi) = self.range();
        lo.abs().max(hi.abs())
    }

    /// Cells whose value leaves `[lo, hi]` at some time, as `(cell, offending value)`.
    pub fn cells_outside(&self, lo: S, hi: S) -> Vec<(usize, S)> {
        let check = |values: &[S], scale: (S, S)| -> Vec<(usize, S)> {
            values
                .iter()
                .enumerate()
                .filter_map(|(c, &p)| {
                    let (a, b) = (p * scale.0, p * scale.1);
                    let bad = if a < lo || a > hi || a.is_nan() {
                        Some(a)
                    } else if b < lo || b > hi || b.is_nan() {
                        Some(b)
                    } else {
                        None
                    };
                    bad.map(|x| (c, x))
                })
                .collect()
        };
        match self {
            SpaceTimeField::Uniform { value } => check(&[*value], (S::one(), S::one())),
            SpaceTimeField::Static { values } => check(values, (S::one(), S::one())),
            SpaceTimeField::Separable { profile, amplitude } => check(profile, amplitude.range()),
            SpaceTimeField::Slabs { values, .. } => {
                let mut out: Vec<(usize, S)> = Vec::new();
                for v in values {
                    for hit in check(v, (S::one(), S::one())) {
                        if !out.iter().any(|(c, _)| *c == hit.0) {
                            out.push(hit);
                        }
                    }
                }
                out
            }
        }
    }

    pub fn check_conforms(&self, what: &str, n: usize) -> Result<()> {
        let bad = |len: usize| Error::Conformance {
            expected: format!("{what} with {n} cells"),
            found: format!("{len} values"),
        };
        match self {
            SpaceTimeField::Uniform { .. } => Ok(()),
            SpaceTimeField::Static { values } if values.len() != n => Err(bad(values.len())),
            SpaceTimeField::Separable { profile, .. } if profile.len() != n => {
                Err(bad(profile.len()))
            }
            SpaceTimeField::Slabs { values, slab_len } => {
                if values.is_empty() || !(*slab_len > S::zero()) {
                    return Err(Error::InvalidParameter {
                        name: "slabs",
                        reason: format!("{what} needs at least one slab of positive length"),
                    });
                }
                match values.iter().find(|v| v.len() != n) {
                    Some(v) => Err(bad(v.len())),
                    None => Ok(()),
                }
            }
            _ => Ok(()),
        }
    }
}

/// Per-species diffusion coefficients with the admissible band `[lower, upper]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionCoeffs<S> {
    pub fields: [SpaceTimeField<S>; 4],
    pub lower: S,
    pub upper: S,
}

impl<S: Real> DiffusionCoeffs<S> {
    pub fn per_species(d: [S; 4]) -> Self {
        let lower = d.iter().copied().fold(S::infinity(), S::min);
        let upper = d.iter().copied().fold(S::zero(), S::max);
        Self {
            fields: d.map(SpaceTimeField::uniform),
            lower,
            upper,
        }
    }

    pub fn constant(d: S) -> Self {
        Self::per_species([d; 4])
    }

    pub fn field(&self, sp: Species) -> &SpaceTimeField<S> {
        &self.fields[sp.index()]
    }

    pub fn is_time_independent(&self) -> bool {
        self.fields.iter().all(SpaceTimeField::is_time_independent)
    }

    /// Largest coefficient over species, cells and time.
    pub fn max_value(&self) -> S {
        self.fields
            .iter()
            .map(|f| f.range().1)
            .fold(S::zero(), S::max)
    }
}

/// Immune influx `s` and drug injection `v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceFields<S> {
    pub s: SpaceTimeField<S>,
    pub v: SpaceTimeField<S>,
}

impl<S: Real> SourceFields<S> {
    pub fn uniform(s: S, v: S) -> Self {
        Self {
            s: SpaceTimeField::uniform(s),
            v: SpaceTimeField::uniform(v),
        }
    }
}

/// The four concentration fields at one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct State<S> {
    pub fields: [Vec<S>; 4],
}

impl<S: Real> State<S> {
    pub fn zeros(n: usize) -> Self {
        Self {
            fields: std::array::from_fn(|_| vec![S::zero(); n]),
        }
    }

    pub fn uniform(n: usize, x: Densities<S>) -> Self {
        Self {
            fields: x.to_array().map(|v| vec![v; n]),
        }
    }

    pub fn from_fields(n: Vec<S>, t: Vec<S>, i: Vec<S>, u: Vec<S>) -> Self {
        Self {
            fields: [n, t, i, u],
        }
    }

    pub fn len(&self) -> usize {
        self.fields[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn point(&self, cell: usize) -> Densities<S> {
        Densities::new(
            self.fields[0][cell],
            self.fields[1][cell],
            self.fields[2][cell],
            self.fields[3][cell],
        )
    }

    pub fn set_point(&mut self, cell: usize, x: Densities<S>) {
        for (f, v) in self.fields.iter_mut().zip(x.to_array()) {
            f[cell] = v;
        }
    }

    pub fn check_conforms(&self, n: usize) -> Result<()> {
        for sp in Species::ALL {
            let len = self[sp].len();
            if len != n {
                return Err(Error::Conformance {
                    expected: format!("{sp} field with {n} cells"),
                    found: format!("{len} values"),
                });
            }
        }
        Ok(())
    }

    /// Largest componentwise distance to another state.
    pub fn sup_distance(&self, other: &Self) -> S {
        self.fields
            .iter()
            .zip(&other.fields)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(&x, &y)| (x - y).abs()))
            .fold(S::zero(), S::max)
    }
}

impl<S> Index<Species> for State<S> {
    type Output = Vec<S>;
    fn index(&self, sp: Species) -> &Vec<S> {
        &self.fields[sp as usize]
    }
}

impl<S> IndexMut<Species> for State<S> {
    fn index_mut(&mut self, sp: Species) -> &mut Vec<S> {
        &mut self.fields[sp as usize]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slabs_select_by_time() {
        let f = SpaceTimeField::Slabs {
            slab_len: 0.5,
            values: vec![vec![1.0, 2.0], vec![3.0, 4.0]],
        };
        assert_eq!(f.at(0.25, 2), vec![1.0, 2.0]);
        assert_eq!(f.at(0.75, 2), vec![3.0, 4.0]);
        assert_eq!(f.at(10.0, 2), vec![3.0, 4.0]);
        assert_eq!(f.range(), (1.0, 4.0));
        assert!(!f.is_time_independent());
    }

    #[test]
    fn separable_range_and_limit() {
        let f = SpaceTimeField::Separable {
            profile: vec![0.5, 1.0],
            amplitude: Amplitude::Relaxing {
                start: 2.0,
                limit: 1.0,
                rate: 3.0,
            },
        };
        assert_eq!(f.range(), (0.5, 2.0));
        assert_eq!(f.limit(2), vec![0.5, 1.0]);
        assert!((f.at(0.0, 2)[1] - 2.0_f64).abs() < 1e-15);
        assert_eq!(f.cells_outside(0.6, 10.0), vec![(0, 0.5)]);
    }

    #[test]
    fn conformance_errors_name_sizes() {
        let f = SpaceTimeField::from_values(vec![1.0; 3]);
        let e = f.check_conforms("d1", 4).unwrap_err().to_string();
        assert!(e.contains("4 cells") && e.contains("3 values"), "{e}");
    }
}
