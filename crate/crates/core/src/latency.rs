//! Per-server latency functions.
//!
//! A server's mean end-to-end latency under an offered rate `x` is
//! `l(x) = d + W(x)`, the fixed two-way path delay plus the mean sojourn time
//! in its queue. The marginal cost `h(x) = l(x) + x l'(x)` is the derivative
//! of the load-weighted latency `x l(x)`. Both are strictly increasing from the
//! common zero-load value `d + 1/mu`.
//!
//! M/M/1, M/G/1 (Pollaczek-Khinchine) and M/D/1 servers have closed forms for
//! `l`, `h` and both inverses. A [`GenericLatencyModel`] supplies `l` and `l'`
//! analytically and is inverted by bisection.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::bisect::bisect_increasing;
use crate::error::{Error, Result};

/// Default resolution of numeric inversions on the rate axis, jobs/second.
pub const DEFAULT_RESOLUTION: f64 = 1e-12;
/// Default saturation guard: rates are restricted to `x <= mu (1 - eps_sat)`.
pub const DEFAULT_EPS_SAT: f64 = 1e-9;

/// Numeric knobs shared by inversions and solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericConfig {
    /// Bisection resolution on the rate axis, jobs/second.
    pub resolution: f64,
    /// Saturation guard as a fraction of each server's capacity.
    pub eps_sat: f64,
}

impl Default for NumericConfig {
    fn default() -> Self {
        Self {
            resolution: DEFAULT_RESOLUTION,
            eps_sat: DEFAULT_EPS_SAT,
        }
    }
}

impl NumericConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.resolution > 0.0 && self.resolution.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "resolution must be positive, got {}",
                self.resolution
            )));
        }
        if !(self.eps_sat > 0.0 && self.eps_sat < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "eps_sat must lie in (0, 1), got {}",
                self.eps_sat
            )));
        }
        Ok(())
    }
}

/// Queueing discipline of a server.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueueModel {
    /// Exponential service.
    MM1,
    /// General service with coefficient of variation `cv`.
    MG1,
    /// Deterministic service.
    MD1,
    /// User-supplied convex latency function.
    Generic,
}

impl fmt::Display for QueueModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            QueueModel::MM1 => "mm1",
            QueueModel::MG1 => "mg1",
            QueueModel::MD1 => "md1",
            QueueModel::Generic => "generic",
        };
        f.write_str(s)
    }
}

type RateFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A latency function supplied by the caller together with its derivative.
///
/// `latency` must include the path delay, i.e. `latency(0) = d + 1/mu`, and be
/// strictly increasing and convex on `[0, mu)`. It may diverge at `mu` or stay
/// bounded; inversions report [`Error::Saturation`] for targets beyond the
/// attainable range.
#[derive(Clone)]
pub struct GenericLatencyModel {
    latency: RateFn,
    derivative: RateFn,
}

impl GenericLatencyModel {
    pub fn new<L, D>(latency: L, derivative: D) -> Self
    where
        L: Fn(f64) -> f64 + Send + Sync + 'static,
        D: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            latency: Arc::new(latency),
            derivative: Arc::new(derivative),
        }
    }
}

impl fmt::Debug for GenericLatencyModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("GenericLatencyModel { .. }")
    }
}

#[derive(Debug, Clone)]
enum Model {
    MM1,
    /// `k = (1 + cv^2) / 2`, the Pollaczek-Khinchine variability factor.
    MG1 {
        k: f64,
    },
    MD1,
    Generic(GenericLatencyModel),
}

/// One server: fixed two-way delay, service rate, service-time variability and
/// queue model. Immutable after construction.
#[derive(Debug, Clone)]
pub struct ServerSpec {
    delay: f64,
    mu: f64,
    cv: f64,
    model: Model,
}

const GENERIC_SAMPLES: usize = 64;
const GENERIC_ZERO_LOAD_RTOL: f64 = 1e-9;

impl ServerSpec {
    /// M/M/1 server. `delay` in seconds, `mu` in jobs/second.
    pub fn mm1(delay: f64, mu: f64) -> Result<Self> {
        Self::checked(delay, mu, 1.0, Model::MM1)
    }

    /// M/G/1 server whose service time has coefficient of variation `cv`.
    pub fn mg1(delay: f64, mu: f64, cv: f64) -> Result<Self> {
        if !(cv >= 0.0 && cv.is_finite()) {
            return Err(Error::InvalidServer(format!("cv must be >= 0, got {cv}")));
        }
        let k = 0.5 * (1.0 + cv * cv);
        Self::checked(delay, mu, cv, Model::MG1 { k })
    }

    /// M/D/1 server (deterministic service).
    pub fn md1(delay: f64, mu: f64) -> Result<Self> {
        Self::checked(delay, mu, 0.0, Model::MD1)
    }

    /// Server with a user-supplied latency function.
    ///
    /// The function is spot-checked on a sample of rates for the zero-load
    /// value, positivity of the derivative and convexity.
    pub fn generic(delay: f64, mu: f64, model: GenericLatencyModel) -> Result<Self> {
        let spec = Self::checked(delay, mu, f64::NAN, Model::Generic(model.clone()))?;
        let floor = spec.zero_load_latency();
        let at_zero = (model.latency)(0.0);
        if !((at_zero - floor).abs() <= GENERIC_ZERO_LOAD_RTOL * floor) {
            return Err(Error::InvalidServer(format!(
                "generic latency at zero load is {at_zero}, expected d + 1/mu = {floor}"
            )));
        }
        let cap = spec.capacity_bound(DEFAULT_EPS_SAT);
        let mut prev_l = at_zero;
        let mut prev_dl = (model.derivative)(0.0);
        if !(prev_dl > 0.0) {
            return Err(Error::InvalidServer(
                "generic latency derivative must be positive".into(),
            ));
        }
        for i in 1..=GENERIC_SAMPLES {
            let x = cap * i as f64 / GENERIC_SAMPLES as f64;
            let l = (model.latency)(x);
            let dl = (model.derivative)(x);
            if !(l > prev_l) || !l.is_finite() {
                return Err(Error::InvalidServer(format!(
                    "generic latency is not strictly increasing near x = {x}"
                )));
            }
            if !(dl >= prev_dl) || !dl.is_finite() {
                return Err(Error::InvalidServer(format!(
                    "generic latency is not convex near x = {x}"
                )));
            }
            prev_l = l;
            prev_dl = dl;
        }
        Ok(spec)
    }

    fn checked(delay: f64, mu: f64, cv: f64, model: Model) -> Result<Self> {
        if !(delay >= 0.0 && delay.is_finite()) {
            return Err(Error::InvalidServer(format!(
                "delay must be >= 0, got {delay}"
            )));
        }
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::InvalidServer(format!("mu must be > 0, got {mu}")));
        }
        Ok(Self {
            delay,
            mu,
            cv,
            model,
        })
    }

    /// Fixed two-way delay, seconds.
    pub fn delay(&self) -> f64 {
        self.delay
    }

    /// Service rate, jobs/second.
    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// Coefficient of variation of the service time (1 for M/M/1, 0 for
    /// M/D/1, NaN for generic models).
    pub fn cv(&self) -> f64 {
        self.cv
    }

    pub fn model(&self) -> QueueModel {
        match self.model {
            Model::MM1 => QueueModel::MM1,
            Model::MG1 { .. } => QueueModel::MG1,
            Model::MD1 => QueueModel::MD1,
            Model::Generic(_) => QueueModel::Generic,
        }
    }

    /// True when latency, marginal cost and both inverses are closed forms.
    pub fn has_closed_form(&self) -> bool {
        !matches!(self.model, Model::Generic(_))
    }

    /// Same server with a different path delay. Generic models keep their
    /// function unchanged, so this is only meaningful for closed forms.
    pub fn with_delay(&self, delay: f64) -> Result<Self> {
        match &self.model {
            Model::Generic(_) => Err(Error::UnsupportedModel(
                "cannot change the delay of a generic latency model".into(),
            )),
            m => Self::checked(delay, self.mu, self.cv, m.clone()),
        }
    }

    /// Pollaczek-Khinchine factor `(1 + cv^2) / 2`; `None` for generic models.
    pub fn variability_factor(&self) -> Option<f64> {
        match self.model {
            Model::MM1 => Some(1.0),
            Model::MG1 { k } => Some(k),
            Model::MD1 => Some(0.5),
            Model::Generic(_) => None,
        }
    }

    /// `d + 1/mu`, the latency of a job that finds the server empty.
    pub fn zero_load_latency(&self) -> f64 {
        self.delay + 1.0 / self.mu
    }

    /// Largest admissible rate, `mu (1 - eps_sat)`.
    pub fn capacity_bound(&self, eps_sat: f64) -> f64 {
        self.mu * (1.0 - eps_sat)
    }

    fn check_rate(&self, x: f64) -> Result<()> {
        if x >= 0.0 && x < self.mu {
            Ok(())
        } else {
            Err(Error::Domain {
                rate: x,
                mu: self.mu,
            })
        }
    }

    /// Mean latency `l(x)` in seconds at offered rate `x` jobs/second.
    pub fn latency(&self, x: f64) -> Result<f64> {
        self.check_rate(x)?;
        Ok(self.latency_unchecked(x))
    }

    /// Marginal cost `h(x) = l(x) + x l'(x)` in seconds.
    pub fn marginal_cost(&self, x: f64) -> Result<f64> {
        self.check_rate(x)?;
        Ok(self.marginal_unchecked(x))
    }

    pub(crate) fn latency_unchecked(&self, x: f64) -> f64 {
        let (d, mu) = (self.delay, self.mu);
        match &self.model {
            Model::MM1 => d + 1.0 / (mu - x),
            Model::MG1 { k } => d + (1.0 + k * x / (mu - x)) / mu,
            Model::MD1 => d + (2.0 * mu - x) / (2.0 * mu * (mu - x)),
            Model::Generic(g) => (g.latency)(x),
        }
    }

    pub(crate) fn marginal_unchecked(&self, x: f64) -> f64 {
        let (d, mu) = (self.delay, self.mu);
        match &self.model {
            Model::MM1 => {
                let s = mu - x;
                d + mu / (s * s)
            }
            Model::MG1 { k } => {
                let s = mu - x;
                d + (1.0 + k * (2.0 * mu - x) * x / (s * s)) / mu
            }
            Model::MD1 => {
                let s = mu - x;
                d + (2.0 * mu * mu - 2.0 * mu * x + x * x) / (2.0 * mu * s * s)
            }
            Model::Generic(g) => (g.latency)(x) + x * (g.derivative)(x),
        }
    }

    /// Rate `x` at which `l(x) = target`.
    ///
    /// Closed form for queueing models; bisection on `[0, mu (1 - eps_sat)]`
    /// with resolution `cfg.resolution` for generic models.
    pub fn invert_latency(&self, target: f64, cfg: &NumericConfig) -> Result<f64> {
        self.invert(target, cfg, Curve::Latency)
    }

    /// Rate `x` at which `h(x) = target`.
    pub fn invert_marginal(&self, target: f64, cfg: &NumericConfig) -> Result<f64> {
        self.invert(target, cfg, Curve::Marginal)
    }

    fn invert(&self, target: f64, cfg: &NumericConfig, curve: Curve) -> Result<f64> {
        let floor = self.zero_load_latency();
        if !(target > floor) {
            return Err(Error::BelowFloor { target, floor });
        }
        if let Model::Generic(_) = self.model {
            let cap = self.capacity_bound(cfg.eps_sat);
            let sup = self.eval(curve, cap);
            if target > sup {
                return Err(Error::Saturation {
                    target,
                    supremum: sup,
                });
            }
        }
        Ok(self.response(target, cfg, curve))
    }

    fn eval(&self, curve: Curve, x: f64) -> f64 {
        match curve {
            Curve::Latency => self.latency_unchecked(x),
            Curve::Marginal => self.marginal_unchecked(x),
        }
    }

    /// Rate at which the chosen curve reaches `level`, clamped to
    /// `[0, mu (1 - eps_sat)]`: zero when `level` does not exceed the zero-load
    /// latency, the capacity bound when `level` is beyond what the server can
    /// attain before saturating.
    pub(crate) fn response(&self, level: f64, cfg: &NumericConfig, curve: Curve) -> f64 {
        let floor = self.zero_load_latency();
        if level <= floor {
            return 0.0;
        }
        let cap = self.capacity_bound(cfg.eps_sat);
        let (d, mu) = (self.delay, self.mu);
        let x = match (&self.model, curve) {
            (Model::MM1, Curve::Latency) => mu - 1.0 / (level - d),
            (Model::MM1, Curve::Marginal) => mu - (mu / (level - d)).sqrt(),
            (Model::MG1 { k }, Curve::Latency) => {
                let s = mu * (level - d) - 1.0;
                mu * s / (k + s)
            }
            (Model::MG1 { k }, Curve::Marginal) => {
                let u = mu * (level - d) - 1.0;
                mu * (1.0 - 1.0 / (1.0 + u / k).sqrt())
            }
            (Model::MD1, Curve::Latency) => {
                let s = mu * (level - d) - 1.0;
                2.0 * mu * s / (1.0 + 2.0 * s)
            }
            (Model::MD1, Curve::Marginal) => {
                let u = mu * (level - d) - 1.0;
                mu * (1.0 - 1.0 / (1.0 + 2.0 * u).sqrt())
            }
            (Model::Generic(_), curve) => {
                if self.eval(curve, cap) <= level {
                    return cap;
                }
                bisect_increasing(|x| self.eval(curve, x) - level, 0.0, cap, cfg.resolution)
            }
        };
        x.clamp(0.0, cap)
    }
}

/// Which of the two per-server curves an inversion targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Curve {
    Latency,
    Marginal,
}
