//! Comparison-principle bounds on the solution and the resulting time-step limits.

use serde::{Deserialize, Serialize};

use crate::fields::DiffusionCoeffs;
use crate::grid::Grid;
use crate::model::{reaction_lipschitz_bound, Densities, ModelParams, Species};
use crate::pde::{KineticsMode, Scenario};
use crate::scalar::{max_of, Real};

/// Per-species upper bounds `C1` valid on `[0, horizon]`.
///
/// `N <= max(|N0|, 1/b1)`, `T <= max(|T0|, 1/b2)`, `U <= max(|U0|, |v|/k2)`.
/// For the immune cells the net per-capita rate is at most
/// `gamma = max_{0<=T<=C_T} (rho T / (alpha + T) - c1 T) - k1`, so the sup obeys
/// `M' <= s_max + gamma M`.
pub fn comparison_bounds<S: Real>(scenario: &Scenario<S>, horizon: S) -> Densities<S> {
    let v_sup = scenario.sources.v.sup();
    comparison_bounds_with(scenario, horizon, v_sup)
}

/// As [`comparison_bounds`] with an explicit bound on the injection rate.
pub fn comparison_bounds_with<S: Real>(
    scenario: &Scenario<S>,
    horizon: S,
    v_sup: S,
) -> Densities<S> {
    let init = |sp: Species| max_of(&scenario.initial[sp]).max(S::zero());
    if scenario.kinetics == KineticsMode::Disabled {
        return Densities::from_array(Species::ALL.map(init));
    }
    let p = &scenario.params;
    let n = init(Species::Normal).max(S::one() / p.b1);
    let t = init(Species::Tumor).max(S::one() / p.b2);
    let u = init(Species::Drug).max(v_sup / p.k2);
    let s_sup = scenario.sources.s.sup();
    let i = immune_bound(p, t, init(Species::Immune), s_sup, horizon);
    Densities::new(n, t, i, u)
}

fn immune_bound<S: Real>(p: &ModelParams<S>, t_max: S, i0: S, s_sup: S, horizon: S) -> S {
    let g = |t: S| p.rho * t / (p.alpha + t) - p.c1 * t;
    let mut g_max = g(S::zero()).max(g(t_max));
    if p.c1 > S::zero() {
        let t_star = (p.rho * p.alpha / p.c1).sqrt() - p.alpha;
        if t_star > S::zero() && t_star < t_max {
            g_max = g_max.max(g(t_star));
        }
    }
    let gamma = g_max - p.k1;
    if gamma < S::zero() {
        i0.max(s_sup / -gamma)
    } else if gamma == S::zero() {
        i0 + s_sup * horizon
    } else {
        let e = (gamma * horizon).exp();
        i0 * e + s_sup * (e - S::one()) / gamma
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StableDt<S> {
    /// `0.9 h^2 / (2 dim max d)`.
    pub diffusion_cap: S,
    /// `0.1 / L_R`.
    pub reaction_cap: S,
    /// Lipschitz bound `L_R` of the kinetics over the bounding box.
    pub lipschitz: S,
    /// Minimum of the two caps.
    pub dt: S,
}

pub const DIFFUSION_SAFETY: f64 = 0.9;
pub const REACTION_FRACTION: f64 = 0.1;

/// Time step meeting the explicit diffusion limit and the kinetics limit over the
/// box `[0, upper]`.
pub fn stable_dt<S: Real>(
    grid: &Grid<S>,
    diffusion: &DiffusionCoeffs<S>,
    params: &ModelParams<S>,
    upper: Densities<S>,
    v_max: S,
) -> StableDt<S> {
    let diffusion_cap = diffusion_cap(grid, diffusion.max_value());
    let lipschitz = reaction_lipschitz_bound(params, upper, v_max);
    let reaction_cap = if lipschitz > S::zero() {
        S::of(REACTION_FRACTION) / lipschitz
    } else {
        S::infinity()
    };
    StableDt {
        diffusion_cap,
        reaction_cap,
        lipschitz,
        dt: diffusion_cap.min(reaction_cap),
    }
}

pub fn diffusion_cap<S: Real>(grid: &Grid<S>, d_max: S) -> S {
    let h = grid.spacing().iter().copied().fold(S::infinity(), S::min);
    if d_max > S::zero() {
        S::of(DIFFUSION_SAFETY) * h * h / (S::of(2.0) * S::of_usize(grid.dim()) * d_max)
    } else {
        S::infinity()
    }
}

impl<S: Real> Scenario<S> {
    pub fn comparison_bounds(&self, horizon: S) -> Densities<S> {
        comparison_bounds(self, horizon)
    }

    pub fn stable_dt(&self, horizon: S) -> StableDt<S> {
        let upper = self.comparison_bounds(horizon);
        let mut out = stable_dt(
            &self.grid,
            &self.diffusion,
            &self.params,
            upper,
            self.sources.v.sup(),
        );
        if self.kinetics == KineticsMode::Disabled {
            out.reaction_cap = S::infinity();
            out.lipschitz = S::zero();
            out.dt = out.diffusion_cap;
        }
        out
    }
}
