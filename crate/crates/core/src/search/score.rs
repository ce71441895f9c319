use serde::{Deserialize, Serialize};

use super::partition::Partition;
use super::plan::SharingPlan;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rsa::RdmStack;

/// Analytic latency model, all values in milliseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostModel {
    pub backbone_latency: f64,
    pub module_latencies: Vec<f64>,
    pub head_latency: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub single_inference_time: Option<f64>,
}

impl CostModel {
    pub fn validate(&self) -> Result<()> {
        let check = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::NonPositiveLatency(format!("{name} = {v}")))
            }
        };
        check("backbone_latency", self.backbone_latency)?;
        check("head_latency", self.head_latency)?;
        for (m, &v) in self.module_latencies.iter().enumerate() {
            check(&format!("module_latencies[{m}]"), v)?;
        }
        if let Some(single) = self.single_inference_time {
            check("single_inference_time", single)?;
            let largest = self
                .module_latencies
                .iter()
                .copied()
                .fold(self.backbone_latency.max(self.head_latency), f64::max);
            if single < largest {
                return Err(Error::InvalidConfig(format!(
                    "single_inference_time {single} is below the largest component latency {largest}"
                )));
            }
        }
        Ok(())
    }

    pub fn num_modules(&self) -> usize {
        self.module_latencies.len()
    }

    /// Latency of one single-task model; the stored value if present.
    pub fn single_inference_time(&self) -> f64 {
        self.single_inference_time.unwrap_or_else(|| {
            self.backbone_latency + self.module_latencies.iter().sum::<f64>() + self.head_latency
        })
    }

    /// Latency of the branched model realizing `plan`.
    pub fn plan_inference_time(&self, plan: &SharingPlan) -> f64 {
        let modules: f64 = plan
            .partitions()
            .iter()
            .zip(&self.module_latencies)
            .map(|(p, &lat)| p.num_groups() as f64 * lat)
            .sum();
        self.backbone_latency + modules + plan.num_tasks() as f64 * self.head_latency
    }
}

/// A plan together with both of its scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPlan {
    pub plan: SharingPlan,
    pub rsa_score: f64,
    pub computational_score: f64,
}

/// Dissimilarity cost of one module's grouping: for each group, the mean over
/// its members of the largest RDM distance to another member, summed over
/// groups. Singletons contribute zero.
pub fn module_score(groups: &Partition, rdm: &Matrix) -> f64 {
    groups
        .groups()
        .iter()
        .filter(|g| g.len() > 1)
        .map(|g| {
            let total: f64 = g
                .iter()
                .map(|&j| {
                    g.iter()
                        .map(|&i| rdm[(j, i)])
                        .fold(f64::NEG_INFINITY, f64::max)
                })
                .sum();
            total / g.len() as f64
        })
        .fold(0.0, |acc, s| acc + s)
}

/// Sum of [`module_score`] over all shareable modules.
pub fn rsa_score(plan: &SharingPlan, rdms: &RdmStack) -> Result<f64> {
    if plan.num_tasks() != rdms.num_tasks() || plan.num_modules() != rdms.num_modules() {
        return Err(Error::DimensionMismatch(format!(
            "plan has {} tasks x {} modules, RDM stack {} x {}",
            plan.num_tasks(),
            plan.num_modules(),
            rdms.num_tasks(),
            rdms.num_modules()
        )));
    }
    Ok(plan
        .partitions()
        .iter()
        .zip(rdms.matrices())
        .map(|(p, rdm)| module_score(p, rdm))
        .fold(0.0, |acc, s| acc + s))
}

/// Inference time of the plan relative to running `num_tasks` single-task
/// models one after another.
pub fn computational_score(plan: &SharingPlan, costs: &CostModel, num_tasks: usize) -> Result<f64> {
    costs.validate()?;
    if plan.num_modules() != costs.num_modules() {
        return Err(Error::DimensionMismatch(format!(
            "plan has {} modules, cost model {}",
            plan.num_modules(),
            costs.num_modules()
        )));
    }
    if plan.num_tasks() != num_tasks {
        return Err(Error::DimensionMismatch(format!(
            "plan has {} tasks, expected {num_tasks}",
            plan.num_tasks()
        )));
    }
    score_from_measured(
        costs.plan_inference_time(plan),
        num_tasks,
        costs.single_inference_time(),
    )
}

/// `inference_time / (num_tasks · single_inference_time)` for measured times.
pub fn score_from_measured(
    inference_time: f64,
    num_tasks: usize,
    single_inference_time: f64,
) -> Result<f64> {
    for (name, v) in [
        ("inference_time", inference_time),
        ("single_inference_time", single_inference_time),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::NonPositiveLatency(format!("{name} = {v}")));
        }
    }
    if num_tasks == 0 {
        return Err(Error::DimensionMismatch(
            "number of tasks must be positive".into(),
        ));
    }
    Ok(inference_time / (num_tasks as f64 * single_inference_time))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rdm3(d12: f64, d13: f64, d23: f64) -> Matrix {
        Matrix::from_rows(&[[0.0, d12, d13], [d12, 0.0, d23], [d13, d23, 0.0]]).unwrap()
    }

    #[test]
    fn module_score_examples() {
        let rdm = rdm3(0.2, 0.5, 0.3);
        assert_eq!(module_score(&Partition::split(3), &rdm), 0.0);
        let all = module_score(&Partition::shared(3), &rdm);
        assert!((all - (0.5 + 0.3 + 0.5) / 3.0).abs() < 1e-15);
        assert!((all - 0.4333).abs() < 1e-4);

        let rdm2 = Matrix::from_rows(&[[0.0, 0.4], [0.4, 0.0]]).unwrap();
        assert_eq!(module_score(&Partition::shared(2), &rdm2), 0.4);
    }

    #[test]
    fn rsa_score_examples() {
        let m0 = Matrix::from_rows(&[[0.0, 0.4], [0.4, 0.0]]).unwrap();
        let m1 = Matrix::from_rows(&[[0.0, 0.1], [0.1, 0.0]]).unwrap();
        let rdms = RdmStack::new(2, vec![m0, m1]).unwrap();
        let shared = SharingPlan::fully_shared(2, 2);
        assert!((rsa_score(&shared, &rdms).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(
            rsa_score(&SharingPlan::fully_split(2, 2), &rdms).unwrap(),
            0.0
        );
        assert!(rsa_score(&SharingPlan::fully_split(2, 3), &rdms).is_err());
    }

    #[test]
    fn measured_ratios_from_reported_latencies() {
        let two = score_from_measured(7.2, 2, 5.6).unwrap();
        let three = score_from_measured(10.0, 3, 5.6).unwrap();
        assert!((two - 0.6429).abs() < 1e-4);
        assert!((three - 0.5952).abs() < 1e-4);
        assert!(score_from_measured(0.0, 2, 5.6).is_err());
    }

    #[test]
    fn analytic_costs() {
        let costs = CostModel {
            backbone_latency: 2.0,
            module_latencies: vec![1.0, 1.0],
            head_latency: 0.5,
            single_inference_time: None,
        };
        assert_eq!(costs.single_inference_time(), 4.5);
        // single task: any plan is the single model
        let one = computational_score(&SharingPlan::fully_split(1, 2), &costs, 1).unwrap();
        assert_eq!(one, 1.0);
        // three tasks split: 2 + 3 + 3 + 1.5 over 3 * 4.5
        let split = computational_score(&SharingPlan::fully_split(3, 2), &costs, 3).unwrap();
        assert!((split - 9.5 / 13.5).abs() < 1e-15);
        let shared = computational_score(&SharingPlan::fully_shared(3, 2), &costs, 3).unwrap();
        assert!((shared - 5.5 / 13.5).abs() < 1e-15);
    }

    #[test]
    fn invalid_costs() {
        let mut costs = CostModel {
            backbone_latency: 1.0,
            module_latencies: vec![1.0, -1.0],
            head_latency: 0.5,
            single_inference_time: None,
        };
        assert!(matches!(
            costs.validate(),
            Err(Error::NonPositiveLatency(_))
        ));
        costs.module_latencies[1] = 3.0;
        costs.single_inference_time = Some(2.0);
        assert!(costs.validate().is_err());
    }
}
