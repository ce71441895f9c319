use rand::seq::SliceRandom;
use rand::Rng;

use super::dataset::TaskDataset;
use crate::error::{Error, Result};
use crate::model::TaskBatch;

/// Largest-remainder apportionment of `batch` seats proportional to `freqs`.
///
/// Every class first receives `⌊batch · f / total⌋` seats; the leftover seats
/// go to the classes with the largest remainders. Equal remainders are
/// ordered randomly so that no class is systematically favoured.
pub fn largest_remainder_quotas<R: Rng + ?Sized>(
    freqs: &[usize],
    batch: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let total: u128 = freqs.iter().map(|&f| f as u128).sum();
    if total == 0 {
        return Err(Error::EmptyClass(0));
    }
    let b = batch as u128;
    let mut quotas: Vec<usize> = Vec::with_capacity(freqs.len());
    let mut remainders: Vec<(u128, usize)> = Vec::with_capacity(freqs.len());
    for (c, &f) in freqs.iter().enumerate() {
        let seats = b * f as u128;
        quotas.push((seats / total) as usize);
        remainders.push((seats % total, c));
    }
    let assigned: usize = quotas.iter().sum();
    remainders.shuffle(rng);
    // stable: ties keep the shuffled order
    remainders.sort_by_key(|&(r, _)| std::cmp::Reverse(r));
    for &(_, c) in remainders.iter().take(batch - assigned) {
        quotas[c] += 1;
    }
    Ok(quotas)
}

/// Draws a batch whose class composition follows the dataset's class
/// frequencies, sampling without replacement inside each class.
pub fn balanced_batch<R: Rng + ?Sized>(
    dataset: &TaskDataset,
    batch_size: usize,
    rng: &mut R,
) -> Result<TaskBatch> {
    if batch_size == 0 {
        return Err(Error::InvalidConfig("batch size must be positive".into()));
    }
    if batch_size > dataset.len() {
        return Err(Error::BatchTooLarge {
            requested: batch_size,
            available: dataset.len(),
        });
    }
    let freqs = dataset.class_frequencies();
    if let Some(c) = freqs.iter().position(|&f| f == 0) {
        return Err(Error::EmptyClass(c));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); freqs.len()];
    for (i, ex) in dataset.examples().iter().enumerate() {
        by_class[ex.class].push(i);
    }
    let quotas = largest_remainder_quotas(&freqs, batch_size, rng)?;
    let mut indices = Vec::with_capacity(batch_size);
    for (members, &q) in by_class.iter().zip(&quotas) {
        indices.extend(
            rand::seq::index::sample(rng, members.len(), q)
                .into_iter()
                .map(|k| members[k]),
        );
    }
    indices.shuffle(rng);
    Ok(dataset.batch(&indices))
}
