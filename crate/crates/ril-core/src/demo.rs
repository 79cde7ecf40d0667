//! Noisy demonstration datasets.
//!
//! A dataset mixes i.i.d. draws from the expert occupancy with draws from
//! a pool of weaker snapshot policies. Each sample carries a hidden
//! provenance tag that only evaluation code may read; training code sees
//! bare (state, action) pairs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mdp::{expected_return, sample_occupancy_pair, MdpSpec, TabularPolicy};

/// Where a demonstration sample actually came from. Evaluation-only.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleSource {
    Expert,
    /// Index of the non-expert snapshot (1-based, matching the ladder).
    NonExpert(usize),
}

/// Demonstrations with hidden provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct DemoDataset {
    samples: Vec<(usize, usize)>,
    provenance: Option<Vec<SampleSource>>,
    declared_noise_rate: f64,
    seed: u64,
}

/// A uniform-with-replacement minibatch. `indices` point back into the
/// parent dataset so evaluation code can look up provenance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Minibatch {
    pub pairs: Vec<(usize, usize)>,
    pub indices: Vec<usize>,
}

/// Two disjoint halves of a dataset.
#[derive(Debug, Clone)]
pub struct SplitDataset {
    pub d1: DemoDataset,
    pub d2: DemoDataset,
}

impl DemoDataset {
    pub fn from_parts(
        samples: Vec<(usize, usize)>,
        provenance: Option<Vec<SampleSource>>,
        declared_noise_rate: f64,
        seed: u64,
    ) -> Result<DemoDataset> {
        if let Some(tags) = &provenance {
            if tags.len() != samples.len() {
                return Err(Error::invariant("provenance length differs from sample count"));
            }
        }
        Ok(DemoDataset { samples, provenance, declared_noise_rate, seed })
    }

    pub fn samples(&self) -> &[(usize, usize)] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn declared_noise_rate(&self) -> f64 {
        self.declared_noise_rate
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Expert fraction, when provenance is known.
    pub fn true_alpha(&self) -> Option<f64> {
        self.provenance.as_ref().map(|tags| {
            let experts = tags.iter().filter(|t| matches!(t, SampleSource::Expert)).count();
            experts as f64 / tags.len() as f64
        })
    }

    /// Hidden provenance tags. Exposed for evaluation and reporting only;
    /// no training path may call this.
    pub fn provenance_for_eval(&self) -> Option<&[SampleSource]> {
        self.provenance.as_deref()
    }

    /// Uniform-with-replacement minibatch, reproducible from
    /// `(rng_seed, counter)`.
    pub fn sample_minibatch(&self, size: usize, rng_seed: u64, counter: u64) -> Result<Minibatch> {
        if self.samples.is_empty() {
            return Err(Error::domain("cannot sample a minibatch from an empty dataset"));
        }
        if size == 0 {
            return Err(Error::domain("minibatch size must be at least 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        rng.set_stream(counter);
        let mut pairs = Vec::with_capacity(size);
        let mut indices = Vec::with_capacity(size);
        for _ in 0..size {
            let i = rng.gen_range(0..self.samples.len());
            indices.push(i);
            pairs.push(self.samples[i]);
        }
        Ok(Minibatch { pairs, indices })
    }
}

/// Non-expert sample count as a fraction of the expert count, piecewise
/// linear through the canonical noise-rate anchors
/// (0, 0.1, 0.2, 0.3, 0.4) -> (0, 0.1, 0.25, 0.5, 0.75).
pub fn nonexpert_ratio(delta: f64) -> Result<f64> {
    if !(0.0..0.5).contains(&delta) {
        return Err(Error::domain(format!(
            "noise rate must lie in [0, 0.5), got {delta}"
        )));
    }
    let anchors = [
        (0.0, 0.0),
        (0.1, 0.1),
        (0.2, 0.25),
        (0.3, 0.5),
        (0.4, 0.75),
        (0.5, 1.0),
    ];
    for w in anchors.windows(2) {
        let (d0, r0) = w[0];
        let (d1, r1) = w[1];
        if delta <= d1 {
            return Ok(r0 + (r1 - r0) * (delta - d0) / (d1 - d0));
        }
    }
    unreachable!("delta checked to lie below 0.5")
}

/// Draw a noisy demonstration dataset: `n_expert` pairs from the expert
/// occupancy plus `round(ratio(delta) * n_expert)` pairs spread uniformly
/// over the non-expert snapshots, shuffled together.
pub fn generate_noisy_dataset(
    mdp: &MdpSpec,
    snapshots: &[TabularPolicy],
    n_expert: usize,
    delta: f64,
    rng_seed: u64,
) -> Result<DemoDataset> {
    if n_expert == 0 {
        return Err(Error::domain("need at least one expert sample"));
    }
    if snapshots.is_empty() {
        return Err(Error::domain("need at least the expert snapshot"));
    }
    let ratio = nonexpert_ratio(delta)?;
    let n_noise = (ratio * n_expert as f64).round() as usize;
    if n_noise > 0 && snapshots.len() < 2 {
        return Err(Error::domain(
            "noise rate is positive but no non-expert snapshots were provided",
        ));
    }
    let alpha = n_expert as f64 / (n_expert + n_noise) as f64;
    if alpha <= 0.5 {
        return Err(Error::invariant(format!(
            "expert fraction alpha = {alpha} must exceed 0.5"
        )));
    }
    // the snapshots must actually be ordered: expert strictly best
    let expert_return = expected_return(mdp, &snapshots[0])?;
    for (k, snap) in snapshots.iter().enumerate().skip(1) {
        let r = expected_return(mdp, snap)?;
        if r >= expert_return {
            return Err(Error::invariant(format!(
                "snapshot {k} return {r} is not below the expert return {expert_return}"
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut samples = Vec::with_capacity(n_expert + n_noise);
    let mut tags = Vec::with_capacity(n_expert + n_noise);
    for _ in 0..n_expert {
        samples.push(sample_occupancy_pair(mdp, &snapshots[0], &mut rng));
        tags.push(SampleSource::Expert);
    }
    let n_snapshots = snapshots.len() - 1;
    for _ in 0..n_noise {
        let k = 1 + rng.gen_range(0..n_snapshots);
        samples.push(sample_occupancy_pair(mdp, &snapshots[k], &mut rng));
        tags.push(SampleSource::NonExpert(k));
    }
    // Fisher-Yates over samples and tags in lockstep
    for i in (1..samples.len()).rev() {
        let j = rng.gen_range(0..=i);
        samples.swap(i, j);
        tags.swap(i, j);
    }
    DemoDataset::from_parts(samples, Some(tags), delta, rng_seed)
}

/// Uniformly random disjoint halves (sizes differ by at most one).
pub fn split_dataset(d: &DemoDataset, rng_seed: u64) -> Result<SplitDataset> {
    let n = d.len();
    if n < 2 {
        return Err(Error::domain("need at least two samples to split"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    let take = |idx: &[usize]| -> DemoDataset {
        let samples = idx.iter().map(|&i| d.samples[i]).collect();
        let provenance = d
            .provenance
            .as_ref()
            .map(|tags| idx.iter().map(|&i| tags[i]).collect());
        DemoDataset {
            samples,
            provenance,
            declared_noise_rate: d.declared_noise_rate,
            seed: d.seed,
        }
    };
    let half = n / 2;
    Ok(SplitDataset {
        d1: take(&order[..half]),
        d2: take(&order[half..]),
    })
}
