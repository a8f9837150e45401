//! Robust stochastic-EM fit of a [`SummaryModel`] to a [`SampleSet`].
//!
//! Each iteration draws an allocation vector for every sample with a few
//! steps of the I-MH kernel (chains persist across iterations), then
//! re-estimates the model from the allocated points: median/IQR for each
//! Gaussian, presence frequency for `pi`, background count for `eta`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::allocation::{greedy_prepared, imh_prepared, AllocationChainState};
use crate::error::{Error, Result};
use crate::model::{
    AllocationVector, GaussianComponent, PreparedModel, SampleSet, SummaryModel, THETA_VOLUME,
};
use crate::robust::{median, robust_location_scale, DEFAULT_S_MIN};

/// Minimum number of `k = L` samples used to initialize the components.
pub const MIN_INIT_SAMPLES: usize = 20;
/// Initial probability of presence of every component.
pub const INIT_PRESENCE: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SemConfig {
    pub n_iterations: usize,
    pub init_percentile: f64,
    pub inner_imh_steps: usize,
    pub seed: u64,
    /// Number of final iterations whose median is reported.
    pub averaging_window: usize,
    pub s_min: f64,
}

impl Default for SemConfig {
    fn default() -> Self {
        Self {
            n_iterations: 50,
            init_percentile: 0.90,
            inner_imh_steps: 5,
            seed: 1,
            averaging_window: 10,
            s_min: DEFAULT_S_MIN,
        }
    }
}

impl SemConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_iterations == 0 {
            return Err(Error::Config("n_iterations must be >= 1".into()));
        }
        if !(self.init_percentile > 0.0 && self.init_percentile < 1.0) {
            return Err(Error::Config(format!(
                "init_percentile {} outside (0, 1)",
                self.init_percentile
            )));
        }
        if self.averaging_window == 0 {
            return Err(Error::Config("averaging_window must be >= 1".into()));
        }
        if !(self.s_min > 0.0) {
            return Err(Error::Config("s_min must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemIteration {
    pub model: SummaryModel,
    /// Mean log marginal density of the samples under `model`.
    pub criterion: f64,
    /// Points allocated to each Gaussian component.
    pub component_counts: Vec<usize>,
    pub background_count: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SemTrace {
    pub iterations: Vec<SemIteration>,
}

impl SemTrace {
    pub fn criteria(&self) -> Vec<f64> {
        self.iterations.iter().map(|it| it.criterion).collect()
    }
}

#[derive(Debug, Clone)]
pub struct SemResult {
    /// Final model, components sorted by mean.
    pub model: SummaryModel,
    pub initial_model: SummaryModel,
    pub trace: SemTrace,
    /// Last-iteration allocations, labels matching the sorted `model`.
    pub allocations: Vec<AllocationVector>,
}

/// Smallest `L` whose empirical `P(k <= L)` reaches `percentile`.
pub fn choose_l(samples: &SampleSet, percentile: f64) -> usize {
    let m = samples.len() as f64;
    let mut cum = 0usize;
    for (k, c) in samples.k_histogram().into_iter().enumerate() {
        cum += c;
        // tolerance absorbs rounding of count/M against decimal percentiles
        if cum as f64 / m >= percentile - 1e-12 {
            return k;
        }
    }
    samples.max_k()
}

/// Initial model: robust estimates of the sorted frequencies of the `k = L`
/// draws (or of the largest well-populated `k' < L`, splitting the widest
/// slot to fill the remaining components).
pub fn initialize_model(
    samples: &SampleSet,
    n_components: usize,
    s_min: f64,
) -> Result<SummaryModel> {
    let m = samples.len() as f64;
    let excess: usize = samples
        .samples()
        .iter()
        .map(|s| s.k().saturating_sub(n_components))
        .sum();
    let eta = excess as f64 / m / THETA_VOLUME;
    if n_components == 0 {
        return SummaryModel::on_frequencies(Vec::new(), eta);
    }
    let hist = samples.k_histogram();
    let count = |k: usize| hist.get(k).copied().unwrap_or(0);
    let source_k = (1..=n_components)
        .rev()
        .find(|&k| count(k) >= MIN_INIT_SAMPLES)
        .or_else(|| (1..=n_components).rev().find(|&k| count(k) > 0))
        .ok_or_else(|| Error::Degenerate(format!("no sample has 1 <= k <= {n_components}")))?;
    if source_k < n_components {
        log::warn!(
            "only {} samples with k={}, initializing from k={}",
            count(n_components),
            n_components,
            source_k
        );
    }
    let sorted: Vec<Vec<f64>> = samples
        .samples()
        .iter()
        .filter(|s| s.k() == source_k)
        .map(|s| s.sorted_theta())
        .collect();
    let mut slots = Vec::with_capacity(n_components);
    for slot in 0..source_k {
        let values: Vec<f64> = sorted.iter().map(|t| t[slot]).collect();
        slots.push(robust_location_scale(&values, s_min)?);
    }
    while slots.len() < n_components {
        let widest = (0..slots.len())
            .max_by(|&a, &b| slots[a].1.total_cmp(&slots[b].1))
            .expect("at least one slot");
        let (mu, s) = slots[widest];
        let half = (0.5 * s).max(s_min);
        slots[widest] = (mu - 0.5 * s, half);
        slots.insert(widest + 1, (mu + 0.5 * s, half));
    }
    let components = slots
        .into_iter()
        .map(|(mu, s)| GaussianComponent::new(mu, s * s, INIT_PRESENCE))
        .collect::<Result<Vec<_>>>()?;
    SummaryModel::on_frequencies(components, eta)
}

/// Robust M-step. Components allocated in fewer than two samples keep their
/// previous location and scale and get the minimum presence probability.
pub fn m_step(
    samples: &SampleSet,
    allocations: &[AllocationVector],
    previous: &SummaryModel,
    s_min: f64,
) -> Result<SummaryModel> {
    if allocations.len() != samples.len() {
        return Err(Error::domain(format!(
            "{} allocations for {} samples",
            allocations.len(),
            samples.len()
        )));
    }
    let n_labels = previous.n_components();
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); n_labels];
    let mut background = 0usize;
    for (x, z) in samples.samples().iter().zip(allocations) {
        if z.len() != x.k() {
            return Err(Error::domain("allocation length does not match the sample"));
        }
        for (&theta, &l) in x.theta().iter().zip(z.labels()) {
            if l == 0 {
                background += 1;
            } else if l <= n_labels {
                values[l - 1].push(theta);
            } else {
                return Err(Error::domain(format!("label {l} exceeds L={n_labels}")));
            }
        }
    }
    let m = samples.len() as f64;
    let pi_min = 1.0 / (2.0 * m);
    let components = values
        .iter()
        .zip(&previous.components)
        .map(|(v, prev)| {
            // labels are injective per sample, so point count = sample count
            if v.len() < 2 {
                return GaussianComponent::new(prev.mu, prev.s2, pi_min);
            }
            let (mu, s) = robust_location_scale(v, s_min)?;
            let pi = (v.len() as f64 / m).clamp(pi_min, 1.0);
            GaussianComponent::new(mu, s * s, pi)
        })
        .collect::<Result<Vec<_>>>()?;
    SummaryModel::new(
        components,
        background as f64 / (m * previous.theta_volume),
        previous.theta_volume,
    )
}

/// Mean log marginal density of the samples under `model`. Increasing values
/// mean a smaller Kullback-Leibler divergence from the sampled posterior.
pub fn criterion(samples: &SampleSet, model: &SummaryModel) -> Result<f64> {
    let prepared = PreparedModel::new(model);
    if model.n_components() > crate::model::MAX_MARGINAL_LABELS {
        return Err(Error::TooManyAllocations {
            count: u128::MAX,
            cap: 1 << crate::model::MAX_MARGINAL_LABELS,
        });
    }
    let logs: Vec<f64> = samples
        .samples()
        .par_iter()
        .map(|x| prepared.ln_marginal(x.theta()))
        .collect();
    Ok(logs.iter().sum::<f64>() / samples.len() as f64)
}

fn counts(allocations: &[AllocationVector], n_labels: usize) -> (Vec<usize>, usize) {
    let mut per = vec![0usize; n_labels];
    let mut background = 0;
    for z in allocations {
        for &l in z.labels() {
            if l == 0 {
                background += 1;
            } else {
                per[l - 1] += 1;
            }
        }
    }
    (per, background)
}

fn window_median(window: &[SemIteration]) -> Result<SummaryModel> {
    let last = &window[window.len() - 1].model;
    let components = (0..last.n_components())
        .map(|l| {
            let pick = |f: &dyn Fn(&GaussianComponent) -> f64| {
                median(
                    &window
                        .iter()
                        .map(|it| f(&it.model.components[l]))
                        .collect::<Vec<_>>(),
                )
            };
            let mu = pick(&|c| c.mu)?;
            let s = pick(&|c| c.s())?;
            let pi = pick(&|c| c.pi)?;
            GaussianComponent::new(mu, s * s, pi)
        })
        .collect::<Result<Vec<_>>>()?;
    let eta = median(&window.iter().map(|it| it.model.eta).collect::<Vec<_>>())?;
    SummaryModel::new(components, eta, last.theta_volume)
}

/// Runs the robust SEM algorithm.
pub fn run_sem(samples: &SampleSet, config: &SemConfig) -> Result<SemResult> {
    config.validate()?;
    let n_labels = choose_l(samples, config.init_percentile);
    let initial = initialize_model(samples, n_labels, config.s_min)?;
    log::info!(
        "sem: L={} from the {:.0}th percentile of k, initial eta={:.4}",
        n_labels,
        100.0 * config.init_percentile,
        initial.eta
    );

    let prepared = PreparedModel::new(&initial);
    let mut chains: Vec<(AllocationChainState, ChaCha8Rng)> = samples
        .samples()
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(i as u64);
            let state = greedy_prepared(x, &prepared, &mut rng)?;
            Ok((state, rng))
        })
        .collect::<Result<_>>()?;

    let mut model = initial.clone();
    let mut trace = SemTrace::default();
    for r in 1..=config.n_iterations {
        let prepared = PreparedModel::new(&model);
        chains = chains
            .into_par_iter()
            .zip(samples.samples().par_iter())
            .map(|((mut state, mut rng), x)| {
                state.refresh_prepared(x, &prepared);
                let state = imh_prepared(state, x, &prepared, config.inner_imh_steps, &mut rng)?;
                Ok((state, rng))
            })
            .collect::<Result<_>>()?;
        let allocations: Vec<AllocationVector> =
            chains.iter().map(|(s, _)| s.z().clone()).collect();
        model = m_step(samples, &allocations, &model, config.s_min)?;
        let j = criterion(samples, &model)?;
        let (component_counts, background_count) = counts(&allocations, n_labels);
        log::debug!("sem iteration {r}: J={j:.5} eta={:.5}", model.eta);
        trace.iterations.push(SemIteration {
            model: model.clone(),
            criterion: j,
            component_counts,
            background_count,
        });
    }

    let window = config.averaging_window.min(trace.iterations.len());
    let summary = window_median(&trace.iterations[trace.iterations.len() - window..])?;

    // report components by increasing mean and relabel allocations to match
    let mut order: Vec<usize> = (0..n_labels).collect();
    order.sort_by(|&a, &b| {
        summary.components[a]
            .mu
            .total_cmp(&summary.components[b].mu)
    });
    let mut relabel = vec![0usize; n_labels + 1];
    for (new, &old) in order.iter().enumerate() {
        relabel[old + 1] = new + 1;
    }
    let allocations = chains
        .iter()
        .map(|(s, _)| {
            AllocationVector::new(
                s.z().labels().iter().map(|&l| relabel[l]).collect(),
                n_labels,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let model = SummaryModel::new(
        order.iter().map(|&l| summary.components[l]).collect(),
        summary.eta,
        summary.theta_volume,
    )?;
    Ok(SemResult {
        model,
        initial_model: initial,
        trace,
        allocations,
    })
}
