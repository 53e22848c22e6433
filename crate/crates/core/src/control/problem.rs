use serde::{Deserialize, Serialize};

use crate::analysis::mass;
use crate::error::{Error, Hypothesis, Result, Violations};
use crate::fields::SpaceTimeField;
use crate::linalg::CgOptions;
use crate::model::Species;
use crate::pde::{comparison_bounds_with, stable_dt, KineticsMode, Scenario};
use crate::scalar::Real;

/// How the normal and immune cell floors are measured over `Ω × (0, t0]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintForm {
    /// `(1/t0) ∬ N dx dt >= A0 - slack_N`, likewise for `I`.
    #[default]
    TimeAveragedMass,
    /// `∬ N² dx dt >= A0 - slack_N`, likewise for `I`.
    SquaredIntegral,
}

/// Lower bounds on normal and immune cell populations during treatment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSpec<S> {
    /// Baseline normal mass, `mass(N0)`.
    pub a0: S,
    /// Baseline immune mass, `mass(I0)`.
    pub b0: S,
    pub slack_n: S,
    pub slack_i: S,
    #[serde(default)]
    pub form: ConstraintForm,
}

impl<S: Real> ConstraintSpec<S> {
    /// Baselines from the scenario's initial data.
    pub fn from_initial(
        scenario: &Scenario<S>,
        slack_n: S,
        slack_i: S,
        form: ConstraintForm,
    ) -> Result<Self> {
        let spec = Self {
            a0: mass(&scenario.initial[Species::Normal], &scenario.grid),
            b0: mass(&scenario.initial[Species::Immune], &scenario.grid),
            slack_n,
            slack_i,
            form,
        };
        spec.violations().into_result()?;
        Ok(spec)
    }

    /// Floors `[A0 - slack_N, B0 - slack_I]`.
    pub fn floors(&self) -> [S; 2] {
        [self.a0 - self.slack_n, self.b0 - self.slack_i]
    }

    pub fn violations(&self) -> Violations {
        let mut out = Violations::default();
        for (name, slack, base) in [
            ("slack_n", self.slack_n, self.a0),
            ("slack_i", self.slack_i, self.b0),
        ] {
            if !(slack > S::zero() && slack < base) {
                out.push(
                    Hypothesis::ConstraintSlack,
                    format!("{name} = {slack} must lie strictly between 0 and the baseline {base}"),
                );
            }
        }
        out
    }
}

/// Injection rate, piecewise constant on `slabs` equal time intervals times grid cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSchedule<S> {
    pub cells: usize,
    pub slabs: usize,
    pub slab_len: S,
    /// Slab-major: `values[k * cells + c]`.
    pub values: Vec<S>,
}

impl<S: Real> ControlSchedule<S> {
    pub fn constant(cells: usize, slabs: usize, horizon: S, v: S) -> Self {
        Self {
            cells,
            slabs,
            slab_len: horizon / S::of_usize(slabs),
            values: vec![v; cells * slabs],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn horizon(&self) -> S {
        self.slab_len * S::of_usize(self.slabs)
    }

    pub fn slab(&self, k: usize) -> &[S] {
        &self.values[k * self.cells..(k + 1) * self.cells]
    }

    pub fn sup(&self) -> S {
        self.values.iter().fold(S::zero(), |m, v| m.max(v.abs()))
    }

    /// Componentwise clamp to `[0, v_max]`.
    pub fn project(&mut self, v_max: S) {
        for v in &mut self.values {
            *v = v.max(S::zero()).min(v_max);
        }
    }

    /// The schedule as a source field (last slab held beyond the horizon).
    pub fn to_field(&self) -> SpaceTimeField<S> {
        SpaceTimeField::Slabs {
            slab_len: self.slab_len,
            values: (0..self.slabs).map(|k| self.slab(k).to_vec()).collect(),
        }
    }
}

/// An optimal-dosing problem: scenario, horizon, control discretization and weights.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControlProblem<S> {
    pub scenario: Scenario<S>,
    pub horizon: S,
    pub slabs: usize,
    pub steps_per_slab: usize,
    pub lambda: S,
    pub v_max: S,
    pub constraint: ConstraintSpec<S>,
    pub cg: CgOptions<S>,
}

impl<S: Real> ControlProblem<S> {
    /// Chooses the steps per slab so that the step respects the kinetics limit at `v_max`.
    pub fn new(
        scenario: Scenario<S>,
        horizon: S,
        slabs: usize,
        lambda: S,
        v_max: S,
        constraint: ConstraintSpec<S>,
    ) -> Result<Self> {
        let positive = |name: &'static str, x: S| -> Result<()> {
            if x > S::zero() && x.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be positive and finite, got {x}"),
                })
            }
        };
        positive("horizon", horizon)?;
        positive("lambda", lambda)?;
        positive("v_max", v_max)?;
        if slabs == 0 {
            return Err(Error::InvalidParameter {
                name: "slabs",
                reason: "need at least one control interval".into(),
            });
        }
        let mut violations = scenario.validate();
        violations.0.extend(constraint.violations().0);
        violations.into_result()?;

        let slab_len = horizon / S::of_usize(slabs);
        let steps_per_slab = match scenario.kinetics {
            KineticsMode::Disabled => 1,
            KineticsMode::Full => {
                let upper = comparison_bounds_with(&scenario, horizon, v_max);
                let cap = stable_dt(
                    &scenario.grid,
                    &scenario.diffusion,
                    &scenario.params,
                    upper,
                    v_max,
                )
                .reaction_cap;
                (slab_len / cap).ceil().to_usize().unwrap_or(1).max(1)
            }
        };
        Ok(Self {
            scenario,
            horizon,
            slabs,
            steps_per_slab,
            lambda,
            v_max,
            constraint,
            cg: CgOptions::default(),
        })
    }

    pub fn with_steps_per_slab(mut self, m: usize) -> Self {
        self.steps_per_slab = m.max(1);
        self
    }

    pub fn with_cg(mut self, cg: CgOptions<S>) -> Self {
        self.cg = cg;
        self
    }

    pub fn cells(&self) -> usize {
        self.scenario.cells()
    }

    pub fn steps(&self) -> usize {
        self.slabs * self.steps_per_slab
    }

    pub fn slab_len(&self) -> S {
        self.horizon / S::of_usize(self.slabs)
    }

    pub fn dt(&self) -> S {
        self.horizon / S::of_usize(self.steps())
    }

    /// Quadrature weight of one control cell, `cell volume * slab length`.
    pub fn weight(&self) -> S {
        self.scenario.grid.cell_volume() * self.slab_len()
    }

    pub fn constant_schedule(&self, v: S) -> ControlSchedule<S> {
        ControlSchedule::constant(self.cells(), self.slabs, self.horizon, v)
    }

    /// Checks shape and the box `[0, v_max]`.
    pub fn check_admissible(&self, v: &ControlSchedule<S>) -> Result<()> {
        if v.cells != self.cells()
            || v.slabs != self.slabs
            || v.values.len() != self.cells() * self.slabs
        {
            return Err(Error::Conformance {
                expected: format!("{} slabs x {} cells", self.slabs, self.cells()),
                found: format!(
                    "{} slabs x {} cells ({} values)",
                    v.slabs,
                    v.cells,
                    v.values.len()
                ),
            });
        }
        if let Some((idx, x)) = v
            .values
            .iter()
            .enumerate()
            .find(|(_, &x)| !(x >= S::zero() && x <= self.v_max))
        {
            return Err(Error::Domain(format!(
                "control value {x} at slab {} cell {} is outside [0, {}]",
                idx / self.cells(),
                idx % self.cells(),
                self.v_max
            )));
        }
        Ok(())
    }
}
