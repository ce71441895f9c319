use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Standard deviation of the log-space mutation.
const MUTATION_SIGMA: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub learning_rate: f64,
    pub w_cls: f64,
    pub w_box: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamRange {
    pub min: f64,
    pub max: f64,
}

impl ParamRange {
    fn validate(&self, name: &str) -> Result<()> {
        if !(self.min > 0.0 && self.min <= self.max && self.max.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "{name} range [{}, {}] must be positive and ordered",
                self.min, self.max
            )));
        }
        Ok(())
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        if self.min == self.max {
            return self.min;
        }
        let (lo, hi) = (self.min.ln(), self.max.ln());
        rng.random_range(lo..=hi).exp().clamp(self.min, self.max)
    }

    fn mutate<R: Rng>(&self, value: f64, rng: &mut R) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        (value * (MUTATION_SIGMA * z).exp()).clamp(self.min, self.max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSpace {
    pub learning_rate: ParamRange,
    pub w_cls: ParamRange,
    pub w_box: ParamRange,
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        self.learning_rate.validate("learning_rate")?;
        self.w_cls.validate("w_cls")?;
        self.w_box.validate("w_box")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationSummary {
    pub generation: usize,
    pub best_objective: f64,
    pub best: Hyperparams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionResult {
    pub best: Hyperparams,
    pub best_objective: f64,
    pub history: Vec<GenerationSummary>,
}

/// (μ+λ) evolution over learning rate and loss weights.
///
/// The first generation is sampled log-uniformly from `space`. Each later
/// generation keeps the best `⌈P/2⌉` members and refills the population with
/// log-normal mutations of the survivors, round-robin in rank order. Lower
/// objective is better; non-finite objective values rank last.
pub fn evolve_hyperparams<F>(
    space: &SearchSpace,
    generations: usize,
    population: usize,
    seed: u64,
    mut objective: F,
) -> Result<EvolutionResult>
where
    F: FnMut(&Hyperparams) -> f64,
{
    space.validate()?;
    if generations == 0 || population == 0 {
        return Err(Error::InvalidConfig(
            "generations and population must be at least 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut score = |h: &Hyperparams| {
        let v = objective(h);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };

    let mut members: Vec<(Hyperparams, f64)> = (0..population)
        .map(|_| {
            let h = Hyperparams {
                learning_rate: space.learning_rate.sample(&mut rng),
                w_cls: space.w_cls.sample(&mut rng),
                w_box: space.w_box.sample(&mut rng),
            };
            (h, score(&h))
        })
        .collect();
    let mut history = Vec::with_capacity(generations);
    let keep = population.div_ceil(2);

    for generation in 0..generations {
        if generation > 0 {
            members.truncate(keep);
            let offspring: Vec<Hyperparams> = (0..population - keep)
                .map(|j| {
                    let parent = members[j % keep].0;
                    Hyperparams {
                        learning_rate: space.learning_rate.mutate(parent.learning_rate, &mut rng),
                        w_cls: space.w_cls.mutate(parent.w_cls, &mut rng),
                        w_box: space.w_box.mutate(parent.w_box, &mut rng),
                    }
                })
                .collect();
            for h in offspring {
                let s = score(&h);
                members.push((h, s));
            }
        }
        // stable sort: survivors stay ahead of equally good offspring
        members.sort_by(|a, b| a.1.total_cmp(&b.1));
        history.push(GenerationSummary {
            generation,
            best_objective: members[0].1,
            best: members[0].0,
        });
    }
    let (best, best_objective) = members[0];
    Ok(EvolutionResult {
        best,
        best_objective,
        history,
    })
}
