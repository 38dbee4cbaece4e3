//! Service-time distribution families.
//!
//! Every non-degenerate family is a *delayed tail*: nothing completes before
//! the delay `T`, and past it the survival function is
//!
//! ```text
//! S(t) = alpha * exp(-rate * (m(t) - T)),   t >= T
//! ```
//!
//! for a monotonically increasing shape `m`. The identity shape gives the
//! delayed exponential, `ln(t + 1)` the delayed Pareto. Whatever survival mass
//! is missing at `T` (that is `1 - S(T)`) is an atom at the delay point.
//! Mixtures combine any of these with non-negative weights summing to one.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Violation};

/// Tolerance on mixture weights summing to one.
pub const WEIGHT_TOLERANCE: f64 = 1e-12;

const INTEGRATION_INTERVALS: usize = 1 << 16;
const TAIL_CUTOFF: f64 = 1e-18;
const MAX_HORIZON: f64 = 1e15;

/// The monotone transform `m(t)` of a delayed-tail family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailShape {
    /// `m(t) = t`
    Identity,
    /// `m(t) = ln(t + 1)`
    Log1p,
    /// `m(t) = sqrt(t)`
    Sqrt,
    /// Piecewise-linear through `(t, m)` points, extrapolated linearly past
    /// both ends. Both coordinates must be strictly increasing.
    Table(Vec<(f64, f64)>),
}

impl TailShape {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            TailShape::Identity => t,
            TailShape::Log1p => t.ln_1p(),
            TailShape::Sqrt => t.max(0.0).sqrt(),
            TailShape::Table(points) => piecewise(points, t, |p| p.0, |p| p.1),
        }
    }

    pub fn inverse(&self, m: f64) -> f64 {
        match self {
            TailShape::Identity => m,
            TailShape::Log1p => m.exp_m1(),
            TailShape::Sqrt => m * m,
            TailShape::Table(points) => piecewise(points, m, |p| p.1, |p| p.0),
        }
    }

    fn has_closed_form_moments(&self) -> bool {
        matches!(self, TailShape::Identity | TailShape::Log1p)
    }

    fn violations(&self, path: &str) -> Vec<Violation> {
        let TailShape::Table(points) = self else {
            return Vec::new();
        };
        let mut out = Vec::new();
        if points.len() < 2 {
            out.push(Violation::new(path, "shape table needs at least 2 points"));
            return out;
        }
        for (i, (t, m)) in points.iter().enumerate() {
            if !t.is_finite() || !m.is_finite() {
                out.push(Violation::new(format!("{path}.table[{i}]"), "non-finite entry"));
            }
        }
        for (i, pair) in points.windows(2).enumerate() {
            if pair[1].0 <= pair[0].0 || pair[1].1 <= pair[0].1 {
                out.push(Violation::new(
                    format!("{path}.table[{}]", i + 1),
                    "shape table must be strictly increasing in t and m",
                ));
            }
        }
        out
    }
}

/// Linear interpolation through sorted points, extrapolating from the end
/// segments. `x_of` must be strictly increasing across `points`.
fn piecewise(
    points: &[(f64, f64)],
    x: f64,
    x_of: impl Fn(&(f64, f64)) -> f64,
    y_of: impl Fn(&(f64, f64)) -> f64,
) -> f64 {
    let n = points.len();
    let i = match points.partition_point(|p| x_of(p) <= x) {
        0 => 0,
        k if k >= n => n - 2,
        k => k - 1,
    };
    let (x0, y0) = (x_of(&points[i]), y_of(&points[i]));
    let (x1, y1) = (x_of(&points[i + 1]), y_of(&points[i + 1]));
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    pub dist: DistributionSpec,
}

fn default_alpha() -> f64 {
    1.0
}

/// Parametric description of one service-time law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum DistributionSpec {
    #[serde(rename = "delayed_exp")]
    DelayedExponential {
        rate: f64,
        #[serde(default)]
        delay: f64,
        #[serde(default = "default_alpha")]
        alpha: f64,
    },
    DelayedPareto {
        rate: f64,
        #[serde(default)]
        delay: f64,
        #[serde(default = "default_alpha")]
        alpha: f64,
    },
    DelayedTail {
        rate: f64,
        #[serde(default)]
        delay: f64,
        #[serde(default = "default_alpha")]
        alpha: f64,
        shape: TailShape,
    },
    Mixture {
        components: Vec<MixtureComponent>,
    },
    #[serde(alias = "exp")]
    Exponential { rate: f64 },
    PointMass { location: f64 },
}

/// Borrowed view of any delayed-tail family.
struct Delayed<'a> {
    rate: f64,
    delay: f64,
    alpha: f64,
    shape: &'a TailShape,
}

static IDENTITY: TailShape = TailShape::Identity;
static LOG1P: TailShape = TailShape::Log1p;

impl Delayed<'_> {
    /// Survival at `t >= delay`.
    fn tail(&self, t: f64) -> f64 {
        self.alpha * (-self.rate * (self.shape.eval(t) - self.delay)).exp()
    }

    fn sf(&self, t: f64) -> f64 {
        if t < self.delay {
            1.0
        } else {
            self.tail(t)
        }
    }

    fn atom_mass(&self) -> f64 {
        1.0 - self.tail(self.delay)
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        // 1 - U lies in (0, 1], so the logarithm stays finite.
        let v = 1.0 - rng.random::<f64>();
        if v >= self.tail(self.delay) {
            return self.delay;
        }
        let m = self.delay - (v / self.alpha).ln() / self.rate;
        self.shape.inverse(m).max(self.delay)
    }

    fn quantile(&self, p: f64) -> f64 {
        let s = 1.0 - p;
        if s >= self.tail(self.delay) {
            return self.delay;
        }
        let m = self.delay - (s / self.alpha).ln() / self.rate;
        self.shape.inverse(m).max(self.delay)
    }

    fn moments(&self) -> Result<(f64, f64)> {
        let (rate, delay, alpha) = (self.rate, self.delay, self.alpha);
        match self.shape {
            TailShape::Identity => {
                let mean = delay + alpha / rate;
                let second = delay * delay + 2.0 * alpha * (delay / rate + 1.0 / (rate * rate));
                Ok((mean, second - mean * mean))
            }
            TailShape::Log1p => {
                // S(t) = alpha e^{rate T} (t + 1)^{-rate} past the delay.
                if rate <= 2.0 {
                    return Err(Error::Divergent(format!(
                        "delayed pareto with rate {rate} has infinite {}",
                        if rate <= 1.0 { "mean" } else { "variance" }
                    )));
                }
                let c = alpha * (rate * delay).exp();
                let u = delay + 1.0;
                let mean = delay + c * u.powf(1.0 - rate) / (rate - 1.0);
                let second = delay * delay
                    + 2.0 * c * (u.powf(2.0 - rate) / (rate - 2.0) - u.powf(1.0 - rate) / (rate - 1.0));
                Ok((mean, second - mean * mean))
            }
            _ => self.numeric_moments(),
        }
    }

    fn mean(&self) -> Result<f64> {
        if matches!(self.shape, TailShape::Log1p) && self.rate > 1.0 {
            let c = self.alpha * (self.rate * self.delay).exp();
            let u = self.delay + 1.0;
            return Ok(self.delay + c * u.powf(1.0 - self.rate) / (self.rate - 1.0));
        }
        self.moments().map(|(m, _)| m)
    }

    /// Integrates the survival function past the delay, substituting
    /// `t = T + s^2` so that square-root-type shapes give a smooth integrand.
    fn numeric_moments(&self) -> Result<(f64, f64)> {
        let delay = self.delay;
        let mut width = 1.0;
        while self.tail(delay + width) > TAIL_CUTOFF {
            width *= 2.0;
            if width > MAX_HORIZON {
                return Err(Error::Divergent(format!(
                    "survival still above {TAIL_CUTOFF} at t = {}",
                    delay + width
                )));
            }
        }
        let s_max = width.sqrt();
        let h = s_max / INTEGRATION_INTERVALS as f64;
        let (mut first, mut second) = (0.0, 0.0);
        for i in 0..=INTEGRATION_INTERVALS {
            let s = i as f64 * h;
            let t = delay + s * s;
            let w = if i == 0 || i == INTEGRATION_INTERVALS {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            let g = self.tail(t) * 2.0 * s;
            first += w * g;
            second += w * 2.0 * t * g;
        }
        first *= h / 3.0;
        second *= h / 3.0;
        let mean = delay + first;
        let raw2 = delay * delay + second;
        Ok((mean, (raw2 - mean * mean).max(0.0)))
    }
}

impl DistributionSpec {
    pub fn exponential(rate: f64) -> Self {
        DistributionSpec::Exponential { rate }
    }

    pub fn point_mass(location: f64) -> Self {
        DistributionSpec::PointMass { location }
    }

    pub fn delayed_exp(rate: f64, delay: f64, alpha: f64) -> Self {
        DistributionSpec::DelayedExponential { rate, delay, alpha }
    }

    pub fn delayed_pareto(rate: f64, delay: f64, alpha: f64) -> Self {
        DistributionSpec::DelayedPareto { rate, delay, alpha }
    }

    pub fn delayed_tail(rate: f64, delay: f64, alpha: f64, shape: TailShape) -> Self {
        DistributionSpec::DelayedTail {
            rate,
            delay,
            alpha,
            shape,
        }
    }

    pub fn mixture(components: impl IntoIterator<Item = (f64, DistributionSpec)>) -> Self {
        DistributionSpec::Mixture {
            components: components
                .into_iter()
                .map(|(weight, dist)| MixtureComponent { weight, dist })
                .collect(),
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            DistributionSpec::DelayedExponential { .. } => "delayed_exp",
            DistributionSpec::DelayedPareto { .. } => "delayed_pareto",
            DistributionSpec::DelayedTail { .. } => "delayed_tail",
            DistributionSpec::Mixture { .. } => "mixture",
            DistributionSpec::Exponential { .. } => "exponential",
            DistributionSpec::PointMass { .. } => "point_mass",
        }
    }

    fn delayed(&self) -> Option<Delayed<'_>> {
        match self {
            DistributionSpec::DelayedExponential { rate, delay, alpha } => Some(Delayed {
                rate: *rate,
                delay: *delay,
                alpha: *alpha,
                shape: &IDENTITY,
            }),
            DistributionSpec::DelayedPareto { rate, delay, alpha } => Some(Delayed {
                rate: *rate,
                delay: *delay,
                alpha: *alpha,
                shape: &LOG1P,
            }),
            DistributionSpec::DelayedTail {
                rate,
                delay,
                alpha,
                shape,
            } => Some(Delayed {
                rate: *rate,
                delay: *delay,
                alpha: *alpha,
                shape,
            }),
            DistributionSpec::Exponential { rate } => Some(Delayed {
                rate: *rate,
                delay: 0.0,
                alpha: 1.0,
                shape: &IDENTITY,
            }),
            _ => None,
        }
    }

    /// Every violated invariant, with paths relative to this object.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        self.collect_violations("", &mut out);
        out
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_empty()
    }

    /// Fails with every violation if the spec is not a proper distribution.
    pub fn ensure_valid(&self) -> Result<()> {
        let v = self.validate();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Invalid(v))
        }
    }

    pub(crate) fn collect_violations(&self, path: &str, out: &mut Vec<Violation>) {
        let field = |name: &str| {
            if path.is_empty() {
                name.to_string()
            } else {
                format!("{path}.{name}")
            }
        };
        match self {
            DistributionSpec::PointMass { location } => {
                if !location.is_finite() || *location < 0.0 {
                    out.push(Violation::new(field("location"), "location must be finite and >= 0"));
                }
            }
            DistributionSpec::Mixture { components } => {
                if components.is_empty() {
                    out.push(Violation::new(field("components"), "mixture needs at least one component"));
                    return;
                }
                let mut sum = 0.0;
                for (i, c) in components.iter().enumerate() {
                    let cpath = field(&format!("components[{i}]"));
                    if !c.weight.is_finite() || c.weight < 0.0 {
                        out.push(Violation::new(format!("{cpath}.weight"), "weight must be finite and >= 0"));
                    }
                    sum += c.weight;
                    c.dist.collect_violations(&format!("{cpath}.dist"), out);
                }
                if (sum - 1.0).abs() > WEIGHT_TOLERANCE {
                    out.push(Violation::new(field("components"), format!("weights sum {sum} ≠ 1")));
                }
            }
            _ => {
                let d = self.delayed().expect("delayed family");
                let mut params_ok = true;
                if !d.rate.is_finite() || d.rate <= 0.0 {
                    out.push(Violation::new(field("rate"), "rate must be finite and > 0"));
                    params_ok = false;
                }
                if !d.delay.is_finite() || d.delay < 0.0 {
                    out.push(Violation::new(field("delay"), "delay must be finite and >= 0"));
                    params_ok = false;
                }
                if !(d.alpha > 0.0 && d.alpha <= 1.0) {
                    out.push(Violation::new(field("alpha"), "alpha must lie in (0, 1]"));
                    params_ok = false;
                }
                let shape_violations = d.shape.violations(&field("shape"));
                params_ok &= shape_violations.is_empty();
                out.extend(shape_violations);
                if params_ok {
                    let at_delay = d.atom_mass();
                    if !(at_delay >= -WEIGHT_TOLERANCE) {
                        out.push(Violation::new(
                            path,
                            format!("CDF negative at delay point (F({}) = {at_delay})", d.delay),
                        ));
                    }
                }
            }
        }
    }

    /// Closed-form CDF. Assumes a valid spec; see [`eval_cdf`] for the
    /// checked entry point.
    pub fn cdf(&self, t: f64) -> f64 {
        match self {
            DistributionSpec::PointMass { location } => {
                if t >= *location {
                    1.0
                } else {
                    0.0
                }
            }
            DistributionSpec::Mixture { components } => {
                components.iter().map(|c| c.weight * c.dist.cdf(t)).sum()
            }
            _ => {
                let d = self.delayed().expect("delayed family");
                if t < d.delay {
                    0.0
                } else {
                    1.0 - d.tail(t)
                }
            }
        }
    }

    /// `P(X > t)`, computed without cancellation in the far tail.
    pub fn sf(&self, t: f64) -> f64 {
        match self {
            DistributionSpec::PointMass { location } => {
                if t >= *location {
                    0.0
                } else {
                    1.0
                }
            }
            DistributionSpec::Mixture { components } => {
                components.iter().map(|c| c.weight * c.dist.sf(t)).sum()
            }
            _ => self.delayed().expect("delayed family").sf(t),
        }
    }

    /// Point masses as sorted `(location, mass)` pairs, coincident
    /// locations merged.
    pub fn atoms(&self) -> Vec<(f64, f64)> {
        let mut raw = Vec::new();
        self.collect_atoms(1.0, &mut raw);
        raw.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(raw.len());
        for (x, m) in raw {
            match merged.last_mut() {
                Some(last) if last.0 == x => last.1 += m,
                _ => merged.push((x, m)),
            }
        }
        merged
    }

    fn collect_atoms(&self, scale: f64, out: &mut Vec<(f64, f64)>) {
        match self {
            DistributionSpec::PointMass { location } => out.push((*location, scale)),
            DistributionSpec::Mixture { components } => {
                for c in components {
                    if c.weight > 0.0 {
                        c.dist.collect_atoms(scale * c.weight, out);
                    }
                }
            }
            _ => {
                let d = self.delayed().expect("delayed family");
                let m = d.atom_mass();
                if m > 1e-15 {
                    out.push((d.delay, scale * m));
                }
            }
        }
    }

    /// Mass of the absolutely continuous part.
    pub fn continuous_mass(&self) -> f64 {
        match self {
            DistributionSpec::PointMass { .. } => 0.0,
            DistributionSpec::Mixture { components } => components
                .iter()
                .map(|c| c.weight * c.dist.continuous_mass())
                .sum(),
            _ => self.delayed().expect("delayed family").tail_at_delay(),
        }
    }

    /// Continuous-part CDF: `P(X <= t)` with the atoms removed.
    pub fn continuous_cdf(&self, t: f64) -> f64 {
        match self {
            DistributionSpec::PointMass { .. } => 0.0,
            DistributionSpec::Mixture { components } => components
                .iter()
                .map(|c| c.weight * c.dist.continuous_cdf(t))
                .sum(),
            _ => {
                let d = self.delayed().expect("delayed family");
                if t < d.delay {
                    0.0
                } else {
                    (d.tail_at_delay() - d.tail(t)).max(0.0)
                }
            }
        }
    }

    /// Left end of the continuous part's support, if it has one.
    pub fn continuous_start(&self) -> Option<f64> {
        match self {
            DistributionSpec::PointMass { .. } => None,
            DistributionSpec::Mixture { components } => components
                .iter()
                .filter(|c| c.weight > 0.0)
                .filter_map(|c| c.dist.continuous_start())
                .reduce(f64::min),
            _ => {
                let d = self.delayed().expect("delayed family");
                (d.tail_at_delay() > 0.0).then_some(d.delay)
            }
        }
    }

    /// Smallest `t` with `F(t) >= p`, for `p` in `[0, 1)`.
    pub fn quantile(&self, p: f64) -> f64 {
        match self {
            DistributionSpec::PointMass { location } => *location,
            DistributionSpec::Mixture { components } => {
                // F_mix(t) >= p as soon as every component has reached p.
                let mut hi = components
                    .iter()
                    .filter(|c| c.weight > 0.0)
                    .map(|c| c.dist.quantile(p))
                    .fold(0.0, f64::max);
                let mut lo = 0.0;
                if self.cdf(lo) >= p {
                    return lo;
                }
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if self.cdf(mid) >= p {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                hi
            }
            _ => self.delayed().expect("delayed family").quantile(p),
        }
    }

    /// Mean only; finite for more families than [`moments`](Self::moments).
    pub fn mean(&self) -> Result<f64> {
        match self {
            DistributionSpec::PointMass { location } => Ok(*location),
            DistributionSpec::Mixture { components } => {
                let mut mean = 0.0;
                for c in components.iter().filter(|c| c.weight > 0.0) {
                    mean += c.weight * c.dist.mean()?;
                }
                Ok(mean)
            }
            _ => self.delayed().expect("delayed family").mean(),
        }
    }

    /// `(mean, variance)`; closed form for the exponential and Pareto shapes,
    /// numeric integration of the survival function otherwise.
    pub fn moments(&self) -> Result<(f64, f64)> {
        match self {
            DistributionSpec::PointMass { location } => Ok((*location, 0.0)),
            DistributionSpec::Mixture { components } => {
                let (mut mean, mut raw2) = (0.0, 0.0);
                for c in components.iter().filter(|c| c.weight > 0.0) {
                    let (m, v) = c.dist.moments()?;
                    mean += c.weight * m;
                    raw2 += c.weight * (v + m * m);
                }
                Ok((mean, raw2 - mean * mean))
            }
            _ => self.delayed().expect("delayed family").moments(),
        }
    }

    pub fn has_closed_form_moments(&self) -> bool {
        match self {
            DistributionSpec::PointMass { .. } => true,
            DistributionSpec::Mixture { components } => {
                components.iter().all(|c| c.dist.has_closed_form_moments())
            }
            _ => self.delayed().expect("delayed family").shape.has_closed_form_moments(),
        }
    }

    /// One draw by inverse transform; mixtures pick a component by weight.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            DistributionSpec::PointMass { location } => *location,
            DistributionSpec::Mixture { components } => {
                let mut u = rng.random::<f64>();
                let mut chosen = None;
                for c in components.iter().filter(|c| c.weight > 0.0) {
                    chosen = Some(&c.dist);
                    if u < c.weight {
                        break;
                    }
                    u -= c.weight;
                }
                chosen.expect("mixture with positive weight").sample(rng)
            }
            _ => self.delayed().expect("delayed family").sample(rng),
        }
    }
}

impl Delayed<'_> {
    fn tail_at_delay(&self) -> f64 {
        self.tail(self.delay).min(1.0)
    }
}

/// Checked CDF evaluation.
pub fn eval_cdf(spec: &DistributionSpec, t: f64) -> Result<f64> {
    spec.ensure_valid()?;
    Ok(spec.cdf(t))
}

/// Method-of-moments delayed-exponential fit with `alpha = 1`.
///
/// Uses the unbiased sample variance. Constant samples give a point mass.
pub fn fit_delayed_exponential(samples: &[f64]) -> Result<DistributionSpec> {
    if samples.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "fitting needs at least 2 samples, got {}",
            samples.len()
        )));
    }
    if let Some((i, x)) = samples
        .iter()
        .enumerate()
        .find(|(_, x)| !x.is_finite() || **x < 0.0)
    {
        return Err(Error::InvalidArgument(format!(
            "sample {i} is {x}; samples must be finite and non-negative"
        )));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if samples.iter().all(|x| *x == samples[0]) {
        return Ok(DistributionSpec::point_mass(samples[0]));
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    if sd == 0.0 {
        return Ok(DistributionSpec::point_mass(mean));
    }
    Ok(DistributionSpec::delayed_exp(1.0 / sd, (mean - sd).max(0.0), 1.0))
}

/// Stationary response time of a memoryless single-server queue.
pub fn queue_response(service_rate: f64, load: f64) -> Result<DistributionSpec> {
    if !load.is_finite() || load < 0.0 {
        return Err(Error::InvalidArgument(format!("load must be finite and >= 0, got {load}")));
    }
    if load >= service_rate {
        return Err(Error::Unstable {
            slot: None,
            load,
            rate: service_rate,
        });
    }
    Ok(DistributionSpec::exponential(service_rate - load))
}

#[derive(Debug, Clone, PartialEq)]
pub enum ServerModel {
    ExplicitDistribution(DistributionSpec),
    QueueRate(f64),
}

/// An available server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawServer", into = "RawServer")]
pub struct ServerDescriptor {
    pub id: String,
    pub model: ServerModel,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawServer {
    id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    service_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dist: Option<DistributionSpec>,
}

impl TryFrom<RawServer> for ServerDescriptor {
    type Error = String;

    fn try_from(raw: RawServer) -> Result<Self, String> {
        let model = match (raw.service_rate, raw.dist) {
            (Some(rate), None) => ServerModel::QueueRate(rate),
            (None, Some(dist)) => ServerModel::ExplicitDistribution(dist),
            _ => {
                return Err(format!(
                    "server '{}' needs exactly one of \"service_rate\" or \"dist\"",
                    raw.id
                ))
            }
        };
        Ok(ServerDescriptor { id: raw.id, model })
    }
}

impl From<ServerDescriptor> for RawServer {
    fn from(s: ServerDescriptor) -> Self {
        let (service_rate, dist) = match s.model {
            ServerModel::QueueRate(r) => (Some(r), None),
            ServerModel::ExplicitDistribution(d) => (None, Some(d)),
        };
        RawServer {
            id: s.id,
            service_rate,
            dist,
        }
    }
}

impl ServerDescriptor {
    pub fn queue(id: impl Into<String>, service_rate: f64) -> Self {
        Self {
            id: id.into(),
            model: ServerModel::QueueRate(service_rate),
        }
    }

    pub fn explicit(id: impl Into<String>, dist: DistributionSpec) -> Self {
        Self {
            id: id.into(),
            model: ServerModel::ExplicitDistribution(dist),
        }
    }

    pub fn is_load_dependent(&self) -> bool {
        matches!(self.model, ServerModel::QueueRate(_))
    }

    /// Service rate for queue servers, `+inf` for explicit ones.
    pub fn capacity(&self) -> f64 {
        match self.model {
            ServerModel::QueueRate(mu) => mu,
            ServerModel::ExplicitDistribution(_) => f64::INFINITY,
        }
    }

    /// Expected response time with no load; the allocators' sort key.
    pub fn expected_response(&self) -> Result<f64> {
        match &self.model {
            ServerModel::QueueRate(mu) => Ok(1.0 / mu),
            ServerModel::ExplicitDistribution(d) => d.mean(),
        }
    }

    /// Response-time distribution when the server receives `load` tasks per
    /// unit time. Explicit distributions ignore the load.
    pub fn response_at(&self, load: f64) -> Result<DistributionSpec> {
        match &self.model {
            ServerModel::QueueRate(mu) => queue_response(*mu, load),
            ServerModel::ExplicitDistribution(d) => Ok(d.clone()),
        }
    }

    pub(crate) fn collect_violations(&self, path: &str, out: &mut Vec<Violation>) {
        match &self.model {
            ServerModel::QueueRate(mu) => {
                if !mu.is_finite() || *mu <= 0.0 {
                    out.push(Violation::new(format!("{path}.service_rate"), "service rate must be finite and > 0"));
                }
            }
            ServerModel::ExplicitDistribution(d) => d.collect_violations(&format!("{path}.dist"), out),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn plain_exponential_is_valid() {
        assert!(DistributionSpec::delayed_exp(1.0, 0.0, 1.0).validate().is_empty());
    }

    #[test]
    fn mixture_weights_must_sum_to_one() {
        let spec = DistributionSpec::mixture([
            (0.5, DistributionSpec::exponential(1.0)),
            (0.6, DistributionSpec::exponential(2.0)),
        ]);
        let v = spec.validate();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].message, "weights sum 1.1 ≠ 1");
    }

    #[test]
    fn pareto_negative_at_delay_is_rejected() {
        // 1 - exp(-0.1 (ln 6 - 5)) < 0
        let direct = 1.0 - (-0.1 * (6f64.ln() - 5.0)).exp();
        assert!(direct < 0.0);
        let v = DistributionSpec::delayed_pareto(0.1, 5.0, 1.0).validate();
        assert_eq!(v.len(), 1);
        assert!(v[0].message.starts_with("CDF negative at delay point"), "{}", v[0]);
    }

    #[test]
    fn parameter_ranges() {
        let v = DistributionSpec::delayed_exp(-1.0, -2.0, 1.5).validate();
        let paths: Vec<_> = v.iter().map(|v| v.path.as_str()).collect();
        assert_eq!(paths, ["rate", "delay", "alpha"]);
        let nested = DistributionSpec::mixture([
            (0.5, DistributionSpec::exponential(0.0)),
            (0.5, DistributionSpec::point_mass(1.0)),
        ]);
        assert_eq!(nested.validate()[0].path, "components[0].dist.rate");
    }

    #[test]
    fn table_shape_must_increase() {
        let shape = TailShape::Table(vec![(0.0, 0.0), (1.0, 2.0), (2.0, 1.0)]);
        let v = DistributionSpec::delayed_tail(1.0, 0.0, 1.0, shape).validate();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].path, "shape.table[2]");
    }

    #[test]
    fn cdf_examples() {
        let e = DistributionSpec::delayed_exp(1.0, 0.0, 1.0);
        assert!(close(e.cdf(2f64.ln()), 0.5, 1e-15));
        let d = DistributionSpec::delayed_exp(2.0, 1.0, 0.5);
        assert!(close(d.cdf(1.0), 0.5, 1e-15));
        assert_eq!(d.cdf(0.999_999), 0.0);
        assert_eq!(DistributionSpec::point_mass(3.0).cdf(2.9), 0.0);
        assert!(eval_cdf(&DistributionSpec::exponential(-1.0), 1.0).is_err());
    }

    #[test]
    fn closed_form_moments() {
        let (m, v) = DistributionSpec::delayed_exp(2.0, 1.0, 0.5).moments().unwrap();
        assert!(close(m, 1.25, 1e-14) && close(v, 0.1875, 1e-14));
        assert_eq!(DistributionSpec::point_mass(3.0).moments().unwrap(), (3.0, 0.0));
        let two_point = DistributionSpec::mixture([
            (0.5, DistributionSpec::point_mass(0.0)),
            (0.5, DistributionSpec::point_mass(2.0)),
        ]);
        assert_eq!(two_point.moments().unwrap(), (1.0, 1.0));
    }

    #[test]
    fn pareto_closed_form_matches_numeric_route() {
        let spec = DistributionSpec::delayed_pareto(3.5, 0.2, 0.9);
        let closed = spec.moments().unwrap();
        let table = DistributionSpec::delayed_tail(3.5, 0.2, 0.9, TailShape::Log1p);
        let d = table.delayed().unwrap();
        let numeric = d.numeric_moments().unwrap();
        assert!(close(closed.0, numeric.0, 1e-8), "{closed:?} {numeric:?}");
        assert!(close(closed.1, numeric.1, 1e-6), "{closed:?} {numeric:?}");
    }

    #[test]
    fn identity_tail_numeric_matches_exponential() {
        let spec = DistributionSpec::delayed_tail(2.0, 1.0, 0.5, TailShape::Identity);
        let numeric = spec.delayed().unwrap().numeric_moments().unwrap();
        assert!(close(numeric.0, 1.25, 1e-9) && close(numeric.1, 0.1875, 1e-8), "{numeric:?}");
    }

    #[test]
    fn heavy_pareto_diverges() {
        assert!(matches!(
            DistributionSpec::delayed_pareto(0.8, 0.0, 1.0).moments(),
            Err(Error::Divergent(_))
        ));
        // finite mean, infinite variance
        let s = DistributionSpec::delayed_pareto(1.5, 0.0, 1.0);
        assert!(s.moments().is_err());
        assert!(close(s.mean().unwrap(), 2.0, 1e-12));
    }

    #[test]
    fn tail_shapes_invert() {
        let table = TailShape::Table(vec![(0.0, 0.0), (1.0, 0.5), (3.0, 2.0)]);
        for shape in [TailShape::Identity, TailShape::Log1p, TailShape::Sqrt, table] {
            for t in [0.0, 0.25, 1.0, 2.5, 7.0] {
                assert!(close(shape.inverse(shape.eval(t)), t, 1e-12), "{shape:?} {t}");
            }
        }
    }

    #[test]
    fn point_mass_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            assert_eq!(DistributionSpec::point_mass(5.0).sample(&mut rng), 5.0);
        }
    }

    #[test]
    fn exponential_sample_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let spec = DistributionSpec::delayed_exp(1.0, 0.0, 1.0);
        let n = 1_000_000;
        let mean = (0..n).map(|_| spec.sample(&mut rng)).sum::<f64>() / n as f64;
        assert!(close(mean, 1.0, 0.003), "{mean}");
    }

    #[test]
    fn delay_atom_frequency() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let spec = DistributionSpec::delayed_exp(2.0, 1.0, 0.5);
        let n = 1_000_000;
        let at_delay = (0..n).filter(|_| spec.sample(&mut rng) == 1.0).count();
        assert!(close(at_delay as f64 / n as f64, 0.5, 0.0015), "{at_delay}");
    }

    #[test]
    fn fit_examples() {
        let a = 0.5f64.sqrt();
        let spec = fit_delayed_exponential(&[2.0 - a, 2.0 + a]).unwrap();
        match spec {
            DistributionSpec::DelayedExponential { rate, delay, alpha } => {
                assert!(close(rate, 1.0, 1e-12) && close(delay, 1.0, 1e-12) && alpha == 1.0);
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(
            fit_delayed_exponential(&[4.0, 4.0, 4.0]).unwrap(),
            DistributionSpec::point_mass(4.0)
        );
        // mean 0.5, variance 1
        let spec = fit_delayed_exponential(&[0.5 - a, 0.5 + a].map(|x: f64| x.max(0.0))).unwrap();
        assert!(spec.is_valid());
        let spec = fit_delayed_exponential(&[0.0, 1.0, 0.5, 2.5, 0.0, 0.0]).unwrap();
        if let DistributionSpec::DelayedExponential { delay, .. } = spec {
            assert_eq!(delay, 0.0);
        }
        assert!(spec.mean().unwrap() >= 0.0);
        assert!(fit_delayed_exponential(&[1.0]).is_err());
        assert!(fit_delayed_exponential(&[1.0, -1.0]).is_err());
    }

    #[test]
    fn clamp_rule_when_mean_below_sd() {
        // mean 0.5, unbiased variance 1: sd 1 > mean, so the delay clamps to 0
        let samples = [0.0, 0.0, 0.0, 2.0];
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert_eq!((mean, var), (0.5, 1.0));
        assert_eq!(
            fit_delayed_exponential(&samples).unwrap(),
            DistributionSpec::delayed_exp(1.0, 0.0, 1.0)
        );
    }

    #[test]
    fn queue_response_examples() {
        let r = queue_response(9.0, 8.0).unwrap();
        assert_eq!(r, DistributionSpec::exponential(1.0));
        assert_eq!(r.mean().unwrap(), 1.0);
        assert_eq!(queue_response(4.0, 0.0).unwrap(), DistributionSpec::exponential(4.0));
        assert!(matches!(queue_response(4.0, 4.0), Err(Error::Unstable { .. })));
    }

    #[test]
    fn json_forms() {
        let spec: DistributionSpec =
            serde_json::from_str(r#"{"family":"delayed_exp","rate":2.0,"delay":1.0,"alpha":0.5}"#).unwrap();
        assert_eq!(spec, DistributionSpec::delayed_exp(2.0, 1.0, 0.5));
        let tail: DistributionSpec = serde_json::from_str(
            r#"{"family":"delayed_tail","rate":1.0,"shape":{"table":[[0,0],[1,2]]}}"#,
        )
        .unwrap();
        assert_eq!(
            tail,
            DistributionSpec::delayed_tail(1.0, 0.0, 1.0, TailShape::Table(vec![(0.0, 0.0), (1.0, 2.0)]))
        );
        let mix: DistributionSpec = serde_json::from_str(
            r#"{"family":"mixture","components":[{"weight":0.3,"dist":{"family":"point_mass","location":3.0}},
                {"weight":0.7,"dist":{"family":"delayed_tail","rate":1.0,"shape":"sqrt"}}]}"#,
        )
        .unwrap();
        assert!(mix.is_valid());
        let server: ServerDescriptor = serde_json::from_str(r#"{"id":"s1","service_rate":9.0}"#).unwrap();
        assert_eq!(server, ServerDescriptor::queue("s1", 9.0));
        assert!(serde_json::from_str::<ServerDescriptor>(r#"{"id":"s1"}"#).is_err());
    }
}
