use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Activations of one module of one task-specific network on the probe set.
///
/// Rows are probe inputs, columns are feature dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDump {
    pub task_id: usize,
    pub module_id: usize,
    pub features: Matrix,
}

impl FeatureDump {
    pub fn new(task_id: usize, module_id: usize, features: Matrix) -> Result<Self> {
        let dump = FeatureDump {
            task_id,
            module_id,
            features,
        };
        dump.validate()?;
        Ok(dump)
    }

    pub fn num_probes(&self) -> usize {
        self.features.rows()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn validate(&self) -> Result<()> {
        let (p, d) = self.features.shape();
        if p < 2 || d < 2 {
            return Err(Error::DimensionMismatch(format!(
                "feature dump (task {}, module {}) is {p}x{d}; need at least 2x2",
                self.task_id, self.module_id
            )));
        }
        if let Some(r) = self
            .features
            .row_iter()
            .position(|row| row.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::DegenerateInput(format!(
                "non-finite value in probe row {r} of task {}, module {}",
                self.task_id, self.module_id
            )));
        }
        Ok(())
    }
}

/// Pairwise probe dissimilarities (`1 − Pearson`) for one task and module.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DdsMatrix {
    pub task_id: usize,
    pub module_id: usize,
    pub values: Matrix,
}

/// `1 − r(x, y)` with `r` the sample Pearson correlation; lies in `[0, 2]`.
pub fn pearson_dissimilarity(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "sequences of length {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::DimensionMismatch(
            "pearson correlation needs at least two values".into(),
        ));
    }
    let cx = Standardized::new(x).ok_or_else(|| Error::ZeroVariance {
        context: "first sequence".into(),
    })?;
    let cy = Standardized::new(y).ok_or_else(|| Error::ZeroVariance {
        context: "second sequence".into(),
    })?;
    Ok(cx.dissimilarity(&cy))
}

/// Builds the DDS matrix of a dump. Each row is standardized once; the
/// matrix is filled from the upper triangle so it is exactly symmetric.
pub fn compute_dds(dump: &FeatureDump) -> Result<DdsMatrix> {
    dump.validate()?;
    let p = dump.num_probes();
    let rows = dump
        .features
        .row_iter()
        .enumerate()
        .map(|(r, row)| {
            Standardized::new(row).ok_or_else(|| Error::ZeroVariance {
                context: format!(
                    "probe row {r} of task {}, module {}",
                    dump.task_id, dump.module_id
                ),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut values = Matrix::zeros(p, p);
    for a in 0..p {
        for b in a + 1..p {
            let d = rows[a].dissimilarity(&rows[b]);
            values[(a, b)] = d;
            values[(b, a)] = d;
        }
    }
    Ok(DdsMatrix {
        task_id: dump.task_id,
        module_id: dump.module_id,
        values,
    })
}

/// A sequence centered on its mean and scaled to unit Euclidean norm.
struct Standardized(Vec<f64>);

impl Standardized {
    fn new(values: &[f64]) -> Option<Self> {
        // exact constancy check: the centered values of a constant sequence
        // need not be exactly zero in floating point
        if values.iter().all(|&v| v == values[0]) {
            return None;
        }
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let centered: Vec<f64> = values.iter().map(|v| v - mean).collect();
        let norm = centered.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return None;
        }
        Some(Standardized(
            centered.into_iter().map(|v| v / norm).collect(),
        ))
    }

    fn dissimilarity(&self, other: &Standardized) -> f64 {
        let r: f64 = self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum();
        (1.0 - r.clamp(-1.0, 1.0)).clamp(0.0, 2.0)
    }
}
