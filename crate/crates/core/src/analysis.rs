//! Verdicts on trajectories: a-priori bounds, exponential tumor decay and
//! convergence to the tumor-free steady state.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::model::{Densities, Species};
use crate::pde::{comparison_bounds, simulate, Scenario, SimOptions, SteadyState, Trajectory};
use crate::scalar::{sup_norm, Real};

/// Midpoint-rule integral: sum of cell values times cell volume.
pub fn mass<S: Real>(field: &[S], grid: &Grid<S>) -> S {
    debug_assert_eq!(field.len(), grid.len());
    field.iter().copied().sum::<S>() * grid.cell_volume()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpeciesBounds<S> {
    pub species: Species,
    pub min: S,
    pub max: S,
    pub c1: S,
    pub pass: bool,
    /// `(snapshot, cell)` of the most negative stored value when it fails the lower bound.
    pub min_location: Option<(usize, usize)>,
    /// `(snapshot, cell)` of the largest value when it exceeds the upper bound.
    pub max_location: Option<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsReport<S> {
    pub species: Vec<SpeciesBounds<S>>,
    pub tol_clamp: S,
}

impl<S: Real> BoundsReport<S> {
    pub fn pass(&self) -> bool {
        self.species.iter().all(|s| s.pass)
    }

    pub fn get(&self, sp: Species) -> &SpeciesBounds<S> {
        &self.species[sp.index()]
    }
}

/// Default tolerance below zero for pre-clamp values.
pub const TOL_CLAMP: f64 = 1e-9;
/// Relative slack on the upper bound.
pub const C1_RELATIVE_SLACK: f64 = 1e-6;

/// Checks `0 <= u <= C1` per species using the comparison bounds of `scenario` over the trajectory's span.
pub fn check_bounds<S: Real>(traj: &Trajectory<S>, scenario: &Scenario<S>) -> BoundsReport<S> {
    let horizon = traj.times.last().copied().unwrap_or(S::zero());
    check_bounds_with(traj, comparison_bounds(scenario, horizon), S::of(TOL_CLAMP))
}

/// Passes a species iff its minimum (including pre-clamp minima) is at least
/// `-tol_clamp` and its maximum is at most `C1 (1 + 1e-6)`.
pub fn check_bounds_with<S: Real>(
    traj: &Trajectory<S>,
    c1: Densities<S>,
    tol_clamp: S,
) -> BoundsReport<S> {
    let species = Species::ALL
        .iter()
        .map(|&sp| {
            let k = sp.index();
            let mut min = S::infinity();
            let mut max = S::neg_infinity();
            let mut min_at = (0, 0);
            let mut max_at = (0, 0);
            for (snap, state) in traj.states.iter().enumerate() {
                for (cell, &x) in state[sp].iter().enumerate() {
                    if x < min {
                        min = x;
                        min_at = (snap, cell);
                    }
                    if x > max {
                        max = x;
                        max_at = (snap, cell);
                    }
                }
            }
            for d in &traj.diagnostics {
                min = min.min(d.min_before_clamp[k]);
            }
            let upper = c1[sp] * (S::one() + S::of(C1_RELATIVE_SLACK));
            let low_ok = min >= -tol_clamp;
            let high_ok = max <= upper;
            SpeciesBounds {
                species: sp,
                min,
                max,
                c1: c1[sp],
                pass: low_ok && high_ok,
                min_location: (!low_ok).then_some(min_at),
                max_location: (!high_ok).then_some(max_at),
            }
        })
        .collect();
    BoundsReport { species, tol_clamp }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit<S> {
    /// Fitted decay rate; negative means growth.
    pub beta: S,
    pub prefactor: S,
    pub t_start: S,
    pub t_end: S,
    pub r_squared: S,
    pub samples: usize,
    /// Set when the samples have no variance (R² undefined, reported as 0).
    pub degenerate: bool,
}

pub const MIN_FIT_SAMPLES: usize = 10;
/// Leading fraction of the time span excluded from the fit.
pub const TRANSIENT_FRACTION: f64 = 0.2;

/// Least-squares line through `(t, ln sup)` after discarding the first 20% of the span.
pub fn fit_decay<S: Real>(times: &[S], sup_norms: &[S]) -> Result<DecayFit<S>> {
    fit_decay_window(times, sup_norms, S::of(TRANSIENT_FRACTION))
}

/// As [`fit_decay`] with an explicit transient fraction. The window ends early at
/// the first nonpositive sample.
pub fn fit_decay_window<S: Real>(times: &[S], sup_norms: &[S], skip: S) -> Result<DecayFit<S>> {
    if times.len() != sup_norms.len() {
        return Err(Error::Conformance {
            expected: format!("{} samples", times.len()),
            found: format!("{} values", sup_norms.len()),
        });
    }
    if times.len() < MIN_FIT_SAMPLES {
        return Err(Error::InsufficientData(format!(
            "need at least {MIN_FIT_SAMPLES} samples, got {}",
            times.len()
        )));
    }
    let t_first = times[0];
    let t_last = times[times.len() - 1];
    let cut = t_first + skip * (t_last - t_first);
    let start = times.partition_point(|&t| t < cut);
    let window: Vec<(S, S)> = times[start..]
        .iter()
        .zip(&sup_norms[start..])
        .take_while(|(_, &y)| y > S::zero() && y.is_finite())
        .map(|(&t, &y)| (t, y.ln()))
        .collect();
    if window.len() < MIN_FIT_SAMPLES {
        return Err(Error::InsufficientData(format!(
            "{} positive samples in the fit window, need {MIN_FIT_SAMPLES}",
            window.len()
        )));
    }
    let m = S::of_usize(window.len());
    let t_mean = window.iter().map(|p| p.0).sum::<S>() / m;
    let y_mean = window.iter().map(|p| p.1).sum::<S>() / m;
    let mut stt = S::zero();
    let mut sty = S::zero();
    let mut syy = S::zero();
    for &(t, y) in &window {
        let (dt, dy) = (t - t_mean, y - y_mean);
        stt += dt * dt;
        sty += dt * dy;
        syy += dy * dy;
    }
    let slope = sty / stt;
    let intercept = y_mean - slope * t_mean;
    let ss_res: S = window
        .iter()
        .map(|&(t, y)| {
            let r = y - (intercept + slope * t);
            r * r
        })
        .sum();
    let scale = y_mean.abs().max(S::one());
    let degenerate = syy <= S::epsilon() * S::epsilon() * scale * scale * m;
    let r_squared = if degenerate {
        S::zero()
    } else {
        S::one() - ss_res / syy
    };
    Ok(DecayFit {
        beta: if degenerate { S::zero() } else { -slope },
        prefactor: intercept.exp(),
        t_start: window[0].0,
        t_end: window[window.len() - 1].0,
        r_squared,
        samples: window.len(),
        degenerate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExtinctionRow<S> {
    pub r2: S,
    pub beta: S,
    pub r_squared: S,
    pub initial_sup_t: S,
    pub final_sup_t: S,
    pub fit: DecayFit<S>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExtinctionTable<S> {
    pub rows: Vec<ExtinctionRow<S>>,
    /// Largest tested `r2` with `beta > 0` and `R² > 0.99`. An observation only; no formula for the threshold is known.
    pub empirical_r0: Option<S>,
    /// False when `beta` increases somewhere along increasing `r2` (flagged for inspection).
    pub beta_monotone: bool,
}

pub const EXTINCTION_R2_MIN: f64 = 0.99;

#[derive(Debug, Clone, PartialEq)]
pub struct ExtinctionOptions<S> {
    pub t_end: S,
    pub sim: SimOptions<S>,
    /// Permit `r2 <= 0`, outside the admissible parameter set.
    pub allow_degenerate: bool,
}

/// Simulates the base scenario once per tumor growth rate and fits the decay of `sup T`.
pub fn tumor_extinction_experiment<S: Real>(
    base: &Scenario<S>,
    r2_values: &[S],
    opts: &ExtinctionOptions<S>,
) -> Result<ExtinctionTable<S>> {
    let mut r2s = r2_values.to_vec();
    r2s.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let rows: Vec<ExtinctionRow<S>> = r2s
        .par_iter()
        .map(|&r2| {
            let mut sc = base.clone();
            sc.params.r2 = r2;
            let mut violations = sc.validate();
            if opts.allow_degenerate && r2 == S::zero() {
                violations
                    .0
                    .retain(|v| !v.message.starts_with("parameter r2 "));
            }
            violations.into_result()?;
            let traj = simulate(&sc, opts.t_end, &opts.sim)?;
            let sup_t = traj.sup_series(Species::Tumor);
            let fit = fit_decay(&traj.times, &sup_t)?;
            Ok(ExtinctionRow {
                r2,
                beta: fit.beta,
                r_squared: fit.r_squared,
                initial_sup_t: sup_t[0],
                final_sup_t: sup_t[sup_t.len() - 1],
                fit,
            })
        })
        .collect::<Result<_>>()?;
    let empirical_r0 = rows
        .iter()
        .filter(|r| r.beta > S::zero() && r.r_squared > S::of(EXTINCTION_R2_MIN))
        .map(|r| r.r2)
        .fold(None, |acc: Option<S>, r| Some(acc.map_or(r, |a| a.max(r))));
    let beta_monotone = rows.windows(2).all(|w| w[1].beta <= w[0].beta);
    Ok(ExtinctionTable {
        rows,
        empirical_r0,
        beta_monotone,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SteadyGap<S> {
    pub times: Vec<S>,
    /// Per snapshot: `sup |N - N*|`, `sup |I - I*|`, `sup |U - U*|`.
    pub gaps: Vec<[S; 3]>,
    /// The last quarter of the samples is nonincreasing for every species.
    pub monotone_tail: bool,
}

impl<S: Real> SteadyGap<S> {
    pub fn final_gap(&self) -> S {
        self.gaps
            .last()
            .map_or(S::zero(), |g| g[0].max(g[1]).max(g[2]))
    }
}

pub fn steady_state_gap<S: Real>(
    traj: &Trajectory<S>,
    steady: &SteadyState<S>,
) -> Result<SteadyGap<S>> {
    let n = traj.grid.len();
    for (name, f) in [("N*", &steady.n), ("I*", &steady.i), ("U*", &steady.u)] {
        traj.grid.check_conforms(name, f)?;
    }
    let gap = |a: &[S], b: &[S]| -> S {
        let diff: Vec<S> = a.iter().zip(b).map(|(&x, &y)| x - y).collect();
        sup_norm(&diff)
    };
    let gaps: Vec<[S; 3]> = traj
        .states
        .iter()
        .map(|st| {
            debug_assert_eq!(st.len(), n);
            [
                gap(&st[Species::Normal], &steady.n),
                gap(&st[Species::Immune], &steady.i),
                gap(&st[Species::Drug], &steady.u),
            ]
        })
        .collect();
    let tail_start = gaps.len() - gaps.len().div_ceil(4);
    let monotone_tail = gaps[tail_start..]
        .windows(2)
        .all(|w| (0..3).all(|k| w[1][k] <= w[0][k]));
    Ok(SteadyGap {
        times: traj.times.clone(),
        gaps,
        monotone_tail,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::State;
    use crate::pde::Diagnostics;

    fn grid(n: usize, l: f64) -> Grid<f64> {
        Grid::new_1d(n, l).unwrap()
    }

    #[test]
    fn mass_examples() {
        let g = grid(20, 2.0);
        assert!((mass(&[1.0; 20], &g) - 2.0).abs() < 1e-14);
        assert_eq!(mass(&[0.0; 20], &g), 0.0);
        let g = grid(100, 1.0);
        let x = g.sample(|x, _| x);
        assert!((mass(&x, &g) - 0.5).abs() < 1e-4);
    }

    fn hand_trajectory(states: Vec<State<f64>>, g: &Grid<f64>) -> Trajectory<f64> {
        let diagnostics = states.iter().map(|s| Diagnostics::of_state(s, g)).collect();
        Trajectory {
            grid: g.clone(),
            times: (0..states.len()).map(|k| k as f64).collect(),
            states,
            diagnostics,
            dt: 1.0,
            steps: 1,
            cg_iterations: 0,
        }
    }

    #[test]
    fn zero_trajectory_passes() {
        let g = grid(5, 1.0);
        let traj = hand_trajectory(vec![State::zeros(5), State::zeros(5)], &g);
        let rep = check_bounds_with(&traj, Densities::splat(1.0), 1e-9);
        assert!(rep.pass());
        for s in &rep.species {
            assert_eq!((s.min, s.max), (0.0, 0.0));
        }
    }

    #[test]
    fn negative_cell_is_located() {
        let g = grid(5, 1.0);
        let mut bad = State::zeros(5);
        bad[Species::Immune][3] = -1e-3;
        let traj = hand_trajectory(vec![State::zeros(5), bad], &g);
        let rep = check_bounds_with(&traj, Densities::splat(1.0), 1e-9);
        assert!(!rep.pass());
        let imm = rep.get(Species::Immune);
        assert!(!imm.pass);
        assert_eq!(imm.min_location, Some((1, 3)));
        assert!(rep.get(Species::Normal).pass);
    }

    #[test]
    fn exact_exponential_fit() {
        let t: Vec<f64> = (0..50).map(|k| k as f64 * 0.2).collect();
        let y: Vec<f64> = t.iter().map(|&t| 2.0 * (-0.7 * t).exp()).collect();
        let fit = fit_decay(&t, &y).unwrap();
        assert!((fit.beta - 0.7).abs() < 1e-10);
        assert!((fit.r_squared - 1.0).abs() < 1e-10);
        assert!((fit.prefactor - 2.0).abs() < 1e-10);
        assert!(!fit.degenerate);
    }

    #[test]
    fn dominant_mode_emerges_late() {
        let t: Vec<f64> = (0..400).map(|k| k as f64 * 0.05).collect();
        let y: Vec<f64> = t.iter().map(|&t| (-t).exp() + (-3.0 * t).exp()).collect();
        let mut last_err = f64::INFINITY;
        for skip in [0.0, 0.2, 0.5] {
            let fit = fit_decay_window(&t, &y, skip).unwrap();
            let err = (fit.beta - 1.0).abs();
            assert!(err < last_err);
            last_err = err;
        }
        assert!(last_err < 1e-6);
    }

    #[test]
    fn constant_samples_are_degenerate() {
        let t: Vec<f64> = (0..20).map(|k| k as f64).collect();
        let fit = fit_decay(&t, &[0.3; 20]).unwrap();
        assert_eq!(fit.beta, 0.0);
        assert!(fit.degenerate);
    }

    #[test]
    fn window_shrinks_at_nonpositive_samples() {
        let t: Vec<f64> = (0..40).map(|k| k as f64).collect();
        let mut y: Vec<f64> = t.iter().map(|&t| (-0.1 * t).exp()).collect();
        y[30] = 0.0;
        let fit = fit_decay(&t, &y).unwrap();
        assert_eq!(fit.t_end, 29.0);
        assert_eq!(fit.samples, 22);
        y[15] = 0.0;
        assert!(matches!(fit_decay(&t, &y), Err(Error::InsufficientData(_))));
        assert!(fit_decay(&t[..5], &y[..5]).is_err());
    }

    #[test]
    fn decay_rate_ignores_scaling() {
        let t: Vec<f64> = (0..30).map(|k| k as f64 * 0.3).collect();
        let y: Vec<f64> = t
            .iter()
            .map(|&t| (-0.4 * t).exp() * (1.0 + 0.1 * (3.0 * t).sin()))
            .collect();
        let a = fit_decay(&t, &y).unwrap();
        let scaled: Vec<f64> = y.iter().map(|v| 1234.5 * v).collect();
        let b = fit_decay(&t, &scaled).unwrap();
        assert!((a.beta - b.beta).abs() < 1e-12);
    }
}
