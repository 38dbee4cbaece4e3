//! Monte Carlo replay of a bound workflow.
//!
//! Trial `i` draws from `ChaCha8Rng::seed_from_u64(seed)` on stream `i`, so
//! results do not depend on how trials are spread over threads.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::allocator::{allocate, AllocationPlan, Method};
use crate::dist::DistributionSpec;
use crate::error::{Error, Result};
use crate::numeric::{fmt_f64, NumericDistribution};
use crate::workflow::{bound_server, slot_loads, slot_response, Scenario, WorkflowNode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub trials: u64,
    pub seed: u64,
    pub mean: f64,
    pub variance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ks_vs_analytic: Option<f64>,
    #[serde(skip)]
    pub samples: Vec<f64>,
}

impl SimResult {
    /// Standard error of the sample mean.
    pub fn std_error(&self) -> f64 {
        (self.variance / self.trials as f64).sqrt()
    }

    pub fn with_ks(mut self, analytic: &NumericDistribution) -> Self {
        self.ks_vs_analytic = Some(analytic.ks_distance(&self.samples));
        self
    }
}

enum Sampler {
    Slot(DistributionSpec),
    Series(Vec<Sampler>),
    Parallel(Vec<Sampler>),
}

impl Sampler {
    fn build(node: &WorkflowNode, scenario: &Scenario, plan: &AllocationPlan) -> Result<Sampler> {
        let loads = slot_loads(&scenario.workflow, &plan.branch_rates);
        fn go(
            node: &WorkflowNode,
            scenario: &Scenario,
            plan: &AllocationPlan,
            loads: &std::collections::BTreeMap<String, Option<f64>>,
        ) -> Result<Sampler> {
            Ok(match node {
                WorkflowNode::Slot { id, .. } => {
                    let server = bound_server(&scenario.servers, &plan.binding, id)?;
                    let spec = slot_response(server, id, loads[id])?;
                    spec.ensure_valid()?;
                    Sampler::Slot(spec)
                }
                WorkflowNode::Series { children, .. } => Sampler::Series(
                    children
                        .iter()
                        .map(|c| go(c, scenario, plan, loads))
                        .collect::<Result<_>>()?,
                ),
                WorkflowNode::Parallel { children, .. } => Sampler::Parallel(
                    children
                        .iter()
                        .map(|c| go(c, scenario, plan, loads))
                        .collect::<Result<_>>()?,
                ),
            })
        }
        go(node, scenario, plan, &loads)
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            Sampler::Slot(spec) => spec.sample(rng),
            Sampler::Series(children) => children.iter().map(|c| c.draw(rng)).sum(),
            Sampler::Parallel(children) => children.iter().map(|c| c.draw(rng)).fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

/// Sample mean and unbiased sample variance.
pub fn sample_moments(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    if samples.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = samples.iter().map(|x| (x - mean).powi(2)).sum();
    (mean, ss / (n - 1.0))
}

/// Replays `plan` for `trials` independent end-to-end completions.
pub fn simulate(scenario: &Scenario, plan: &AllocationPlan, trials: u64, seed: u64) -> Result<SimResult> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    let sampler = Sampler::build(&scenario.workflow, scenario, plan)?;
    let samples: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(trial);
            sampler.draw(&mut rng)
        })
        .collect();
    let (mean, variance) = sample_moments(&samples);
    Ok(SimResult {
        trials,
        seed,
        mean,
        variance,
        ks_vs_analytic: None,
        samples,
    })
}

/// `(baseline - proposed) / baseline`; zero when both are zero.
pub fn improvement(baseline: f64, proposed: f64) -> f64 {
    if baseline == proposed {
        0.0
    } else {
        (baseline - proposed) / baseline
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub var: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulatedMoments {
    pub mean: f64,
    pub var: f64,
    pub ks: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: Method,
    pub analytic: Moments,
    pub simulated: SimulatedMoments,
    pub plan: AllocationPlan,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Improvement {
    pub mean_pct: f64,
    pub var_pct: f64,
}

impl Improvement {
    fn between(baseline: (f64, f64), proposed: (f64, f64)) -> Self {
        Self {
            mean_pct: 100.0 * improvement(baseline.0, proposed.0),
            var_pct: 100.0 * improvement(baseline.1, proposed.1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub scenario: String,
    pub rows: Vec<ReportRow>,
    /// Proposed against baseline on the analytic moments.
    pub improvement: Improvement,
    pub improvement_simulated: Improvement,
    pub trials: u64,
    pub seed: u64,
}

impl ScenarioReport {
    pub fn row(&self, method: Method) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One row per statistic, methods as columns.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("scenario,source,statistic,proposed,optimal,baseline,improvement_pct\n");
        let get = |m: Method| self.row(m).expect("compared methods present");
        let (p, o, b) = (get(Method::Proposed), get(Method::Optimal), get(Method::Baseline));
        let lines = [
            ("analytic", "mean", p.analytic.mean, o.analytic.mean, b.analytic.mean, self.improvement.mean_pct),
            ("analytic", "variance", p.analytic.var, o.analytic.var, b.analytic.var, self.improvement.var_pct),
            (
                "simulated",
                "mean",
                p.simulated.mean,
                o.simulated.mean,
                b.simulated.mean,
                self.improvement_simulated.mean_pct,
            ),
            (
                "simulated",
                "variance",
                p.simulated.var,
                o.simulated.var,
                b.simulated.var,
                self.improvement_simulated.var_pct,
            ),
        ];
        for (source, stat, pv, ov, bv, imp) in lines {
            let _ = writeln!(
                out,
                "{},{source},{stat},{},{},{},{}",
                self.scenario,
                fmt_f64(pv),
                fmt_f64(ov),
                fmt_f64(bv),
                fmt_f64(imp)
            );
        }
        out
    }
}

/// Allocates with every method, simulates each plan with the same seed and
/// tabulates analytic and simulated moments.
pub fn compare(scenario: &Scenario, trials: u64, seed: u64) -> Result<ScenarioReport> {
    let mut rows = Vec::new();
    for method in Method::COMPARED {
        let plan = allocate(scenario, method)?;
        let analytic = plan.distribution(scenario)?;
        let sim = simulate(scenario, &plan, trials, seed)?.with_ks(&analytic);
        rows.push(ReportRow {
            method,
            analytic: Moments {
                mean: plan.mean,
                var: plan.variance,
            },
            simulated: SimulatedMoments {
                mean: sim.mean,
                var: sim.variance,
                ks: sim.ks_vs_analytic.unwrap_or(f64::NAN),
            },
            plan,
        });
    }
    let find = |m: Method| rows.iter().find(|r| r.method == m).expect("compared methods present");
    let (p, b) = (find(Method::Proposed), find(Method::Baseline));
    let improvement = Improvement::between((b.analytic.mean, b.analytic.var), (p.analytic.mean, p.analytic.var));
    let improvement_simulated = Improvement::between(
        (b.simulated.mean, b.simulated.var),
        (p.simulated.mean, p.simulated.var),
    );
    Ok(ScenarioReport {
        scenario: scenario.name.clone().unwrap_or_else(|| "scenario".into()),
        rows,
        improvement,
        improvement_simulated,
        trials,
        seed,
    })
}
