//! Model parameters and the pointwise kinetics of the four species.
//!
//! The kinetics are
//!
//! ```text
//! F_N = r1 N (1 - b1 N) - c4 T N - a3 (1 - e^-U) N
//! F_T = r2 T (1 - b2 T) - c2 I T - c3 T N - a2 (1 - e^-U) T
//! F_I = s + rho I T / (alpha + T) - c1 I T - k1 I - a1 (1 - e^-U) I
//! F_U = v H(N - n_min) - k2 U
//! ```
//!
//! where `H` is a C1 ramp from 0 (at and below 0) to 1 (at and above `h_delta`).
//! The logistic terms pair `b1` with the normal cells and `b2` with the tumor cells.

use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Hypothesis, Result, Violations};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Species {
    #[serde(rename = "N")]
    Normal,
    #[serde(rename = "T")]
    Tumor,
    #[serde(rename = "I")]
    Immune,
    #[serde(rename = "U")]
    Drug,
}

impl Species {
    pub const ALL: [Species; 4] = [
        Species::Normal,
        Species::Tumor,
        Species::Immune,
        Species::Drug,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Species::Normal => "N",
            Species::Tumor => "T",
            Species::Immune => "I",
            Species::Drug => "U",
        }
    }
}

impl fmt::Display for Species {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// The four concentrations at one point (or one rate per species).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Densities<S> {
    pub n: S,
    pub t: S,
    pub i: S,
    pub u: S,
}

impl<S: Real> Densities<S> {
    pub fn new(n: S, t: S, i: S, u: S) -> Self {
        Self { n, t, i, u }
    }

    pub fn splat(x: S) -> Self {
        Self::new(x, x, x, x)
    }

    pub fn to_array(self) -> [S; 4] {
        [self.n, self.t, self.i, self.u]
    }

    pub fn from_array(a: [S; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn map(self, f: impl Fn(S) -> S) -> Self {
        Self::new(f(self.n), f(self.t), f(self.i), f(self.u))
    }

    pub fn zip_with(self, other: Self, f: impl Fn(S, S) -> S) -> Self {
        Self::new(
            f(self.n, other.n),
            f(self.t, other.t),
            f(self.i, other.i),
            f(self.u, other.u),
        )
    }
}

impl<S> Index<Species> for Densities<S> {
    type Output = S;
    fn index(&self, sp: Species) -> &S {
        match sp {
            Species::Normal => &self.n,
            Species::Tumor => &self.t,
            Species::Immune => &self.i,
            Species::Drug => &self.u,
        }
    }
}

impl<S> IndexMut<Species> for Densities<S> {
    fn index_mut(&mut self, sp: Species) -> &mut S {
        match sp {
            Species::Normal => &mut self.n,
            Species::Tumor => &mut self.t,
            Species::Immune => &mut self.i,
            Species::Drug => &mut self.u,
        }
    }
}

/// Rate constants of the kinetics. All entries must be strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams<S> {
    /// Growth rate of normal cells.
    pub r1: S,
    /// Growth rate of tumor cells.
    pub r2: S,
    /// Inverse carrying capacity of normal cells.
    pub b1: S,
    /// Inverse carrying capacity of tumor cells.
    pub b2: S,
    /// Immune inactivation by tumor.
    pub c1: S,
    /// Tumor kill by immune cells.
    pub c2: S,
    /// Tumor loss from competition with normal cells.
    pub c3: S,
    /// Normal-cell loss from competition with tumor.
    pub c4: S,
    /// Drug kill of immune cells.
    pub a1: S,
    /// Drug kill of tumor cells.
    pub a2: S,
    /// Drug kill of normal cells.
    pub a3: S,
    /// Immune death rate.
    pub k1: S,
    /// Drug decay rate.
    pub k2: S,
    /// Immune recruitment amplitude.
    pub rho: S,
    /// Recruitment half-saturation.
    pub alpha: S,
    /// Normal-cell level below which drug injection stops.
    pub n_min: S,
    /// Width of the cutoff ramp.
    pub h_delta: S,
}

impl<S: Real> ModelParams<S> {
    /// Every rate set to one, with cutoff threshold `0.5` and ramp width `0.1`.
    pub fn unit() -> Self {
        let one = S::one();
        Self {
            r1: one,
            r2: one,
            b1: one,
            b2: one,
            c1: one,
            c2: one,
            c3: one,
            c4: one,
            a1: one,
            a2: one,
            a3: one,
            k1: one,
            k2: one,
            rho: one,
            alpha: one,
            n_min: S::of(0.5),
            h_delta: S::of(0.1),
        }
    }

    /// Desk-scale synthetic parameter set (dimensionless, not clinically calibrated).
    pub fn canonical() -> Self {
        Self {
            r1: S::of(1.0),
            r2: S::of(1.5),
            b1: S::of(1.0),
            b2: S::of(1.0),
            c1: S::of(1.0),
            c2: S::of(1.0),
            c3: S::of(0.5),
            c4: S::of(1.0),
            a1: S::of(0.2),
            a2: S::of(1.0),
            a3: S::of(0.3),
            k1: S::of(1.0),
            k2: S::of(1.0),
            rho: S::of(0.5),
            alpha: S::of(1.0),
            n_min: S::of(0.3),
            h_delta: S::of(0.1),
        }
    }

    pub fn fields(&self) -> [(&'static str, S); 17] {
        [
            ("r1", self.r1),
            ("r2", self.r2),
            ("b1", self.b1),
            ("b2", self.b2),
            ("c1", self.c1),
            ("c2", self.c2),
            ("c3", self.c3),
            ("c4", self.c4),
            ("a1", self.a1),
            ("a2", self.a2),
            ("a3", self.a3),
            ("k1", self.k1),
            ("k2", self.k2),
            ("rho", self.rho),
            ("alpha", self.alpha),
            ("n_min", self.n_min),
            ("h_delta", self.h_delta),
        ]
    }

    /// Collects every non-positive or non-finite entry.
    pub fn violations(&self) -> Violations {
        let mut out = Violations::default();
        for (name, value) in self.fields() {
            if !value.is_finite() || value <= S::zero() {
                let tag = if name == "h_delta" {
                    Hypothesis::Sources
                } else {
                    Hypothesis::PositiveParameters
                };
                out.push(tag, format!("parameter {name} = {value} must be positive"));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        self.violations().into_result()
    }
}

/// C1 ramp: 0 for `y <= 0`, 1 for `y >= h_delta`, cubic smoothstep in between.
pub fn smooth_heaviside<S: Real>(y: S, h_delta: S) -> Result<S> {
    if !(h_delta > S::zero()) {
        return Err(Error::InvalidParameter {
            name: "h_delta",
            reason: format!("ramp width must be positive, got {h_delta}"),
        });
    }
    Ok(ramp(y, h_delta))
}

#[inline]
pub(crate) fn ramp<S: Real>(y: S, h_delta: S) -> S {
    if y <= S::zero() {
        S::zero()
    } else if y >= h_delta {
        S::one()
    } else {
        let z = y / h_delta;
        z * z * (S::of(3.0) - S::of(2.0) * z)
    }
}

/// Derivative of [`smooth_heaviside`] with respect to `y`.
#[inline]
pub fn smooth_heaviside_slope<S: Real>(y: S, h_delta: S) -> S {
    if y <= S::zero() || y >= h_delta {
        S::zero()
    } else {
        let z = y / h_delta;
        S::of(6.0) * z * (S::one() - z) / h_delta
    }
}

/// Fraction of cells killed at drug concentration `u`: `1 - exp(-u)`.
pub fn kill_fraction<S: Real>(u: S) -> Result<S> {
    if u < S::zero() || u.is_nan() {
        return Err(Error::Domain(format!(
            "drug concentration must be nonnegative, got {u}"
        )));
    }
    Ok(kill(u))
}

#[inline]
pub(crate) fn kill<S: Real>(u: S) -> S {
    -(-u).exp_m1()
}

/// Pointwise kinetics at one state. Callers are responsible for having validated `params`.
#[inline]
pub fn reaction_rates<S: Real>(
    x: Densities<S>,
    params: &ModelParams<S>,
    s: S,
    v: S,
) -> Densities<S> {
    let p = params;
    let one = S::one();
    let k = kill(x.u);
    let dn = p.r1 * x.n * (one - p.b1 * x.n) - p.c4 * x.t * x.n - p.a3 * k * x.n;
    let dt = p.r2 * x.t * (one - p.b2 * x.t) - p.c2 * x.i * x.t - p.c3 * x.t * x.n - p.a2 * k * x.t;
    let di =
        s + p.rho * x.i * x.t / (p.alpha + x.t) - p.c1 * x.i * x.t - p.k1 * x.i - p.a1 * k * x.i;
    let du = v * ramp(x.n - p.n_min, p.h_delta) - p.k2 * x.u;
    Densities::new(dn, dt, di, du)
}

/// [`reaction_rates`] with parameter and domain checks.
pub fn checked_reaction_rates<S: Real>(
    x: Densities<S>,
    params: &ModelParams<S>,
    s: S,
    v: S,
) -> Result<Densities<S>> {
    params.validate()?;
    for sp in Species::ALL {
        if x[sp] < S::zero() || x[sp].is_nan() {
            return Err(Error::Domain(format!("{sp} = {} is negative", x[sp])));
        }
    }
    if s < S::zero() || v < S::zero() {
        return Err(Error::Domain(format!(
            "sources must be nonnegative, got s = {s}, v = {v}"
        )));
    }
    Ok(reaction_rates(x, params, s, v))
}

/// Jacobian `J[a][b] = dF_a / dx_b` of the kinetics, species ordered `N, T, I, U`.
pub fn reaction_jacobian<S: Real>(x: Densities<S>, params: &ModelParams<S>, v: S) -> [[S; 4]; 4] {
    let p = params;
    let one = S::one();
    let two = S::of(2.0);
    let k = kill(x.u);
    let e = (-x.u).exp();
    let z = S::zero();
    let sat = p.alpha + x.t;

    let f_n = [
        p.r1 * (one - two * p.b1 * x.n) - p.c4 * x.t - p.a3 * k,
        -p.c4 * x.n,
        z,
        -p.a3 * e * x.n,
    ];
    let f_t = [
        -p.c3 * x.t,
        p.r2 * (one - two * p.b2 * x.t) - p.c2 * x.i - p.c3 * x.n - p.a2 * k,
        -p.c2 * x.t,
        -p.a2 * e * x.t,
    ];
    let f_i = [
        z,
        p.rho * x.i * p.alpha / (sat * sat) - p.c1 * x.i,
        p.rho * x.t / sat - p.c1 * x.t - p.k1 - p.a1 * k,
        -p.a1 * e * x.i,
    ];
    let f_u = [
        v * smooth_heaviside_slope(x.n - p.n_min, p.h_delta),
        z,
        z,
        -p.k2,
    ];
    [f_n, f_t, f_i, f_u]
}

/// Conservative bound on the infinity norm of [`reaction_jacobian`] over the box
/// `0 <= x_a <= upper[a]`, with injection rates up to `v_max`.
pub fn reaction_lipschitz_bound<S: Real>(
    params: &ModelParams<S>,
    upper: Densities<S>,
    v_max: S,
) -> S {
    let p = params;
    let one = S::one();
    let two = S::of(2.0);
    let (n, t, i) = (upper.n, upper.t, upper.i);

    let row_n = p.r1 * (one + two * p.b1 * n) + p.c4 * t + p.a3 + p.c4 * n + p.a3 * n;
    let row_t =
        p.r2 * (one + two * p.b2 * t) + p.c2 * i + p.c3 * n + p.a2 + p.c3 * t + p.c2 * t + p.a2 * t;
    let row_i = p.rho + p.c1 * t + p.k1 + p.a1 + p.rho * i / p.alpha + p.c1 * i + p.a1 * i;
    let row_u = v_max * S::of(1.5) / p.h_delta + p.k2;
    row_n.max(row_t).max(row_i).max(row_u)
}
