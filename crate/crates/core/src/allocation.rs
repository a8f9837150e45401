//! Sampling allocation vectors from `p(z | x, E)` with an independent
//! Metropolis-Hastings kernel.
//!
//! The proposal visits the sample's positions in a fresh uniformly random
//! order and assigns each one either the background label or a Gaussian label
//! that is still free, with weights `eta` and `pi_l N(x_j | mu_l, s_l^2)`.
//! The visiting order is kept as an auxiliary variable of the chain (uniform
//! and independent of `z` under the extended target), which makes the proposal
//! probability exactly computable: `q(order, z) = 1/k! * prod_j w(z_j) / W_j`.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::math::{ln_factorial, log_sum_exp};
use crate::model::{
    enumerate_allocations, AllocationVector, PreparedModel, SummaryModel, VariableDimSample,
    DEFAULT_ENUMERATION_CAP,
};

/// State of the per-sample allocation chain.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationChainState {
    z: AllocationVector,
    order: Vec<usize>,
    log_completed: f64,
    log_proposal: f64,
}

impl AllocationChainState {
    /// Builds a state for allocation `z` reached through visiting `order`.
    pub fn new(
        x: &VariableDimSample,
        model: &SummaryModel,
        z: AllocationVector,
        order: Vec<usize>,
    ) -> Result<Self> {
        if z.len() != x.k() {
            return Err(Error::domain("allocation length does not match the sample"));
        }
        let z = AllocationVector::new(z.labels().to_vec(), model.n_components())?;
        let mut sorted = order.clone();
        sorted.sort_unstable();
        if sorted != (0..x.k()).collect::<Vec<_>>() {
            return Err(Error::domain(
                "visiting order is not a permutation of the positions",
            ));
        }
        let prepared = PreparedModel::new(model);
        Ok(Self::from_parts(x, &prepared, z, order))
    }

    fn from_parts(
        x: &VariableDimSample,
        prepared: &PreparedModel,
        z: AllocationVector,
        order: Vec<usize>,
    ) -> Self {
        let log_completed = prepared.ln_completed(x.theta(), z.labels());
        let log_proposal = proposal_log_prob(x.theta(), prepared, z.labels(), &order);
        Self {
            z,
            order,
            log_completed,
            log_proposal,
        }
    }

    pub fn z(&self) -> &AllocationVector {
        &self.z
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// Cached `ln p(x, z | E)`.
    pub fn log_completed(&self) -> f64 {
        self.log_completed
    }

    /// Cached `ln q(order, z)`.
    pub fn log_proposal(&self) -> f64 {
        self.log_proposal
    }

    /// Recomputes the cached densities after the model changed.
    pub fn refresh(&mut self, x: &VariableDimSample, model: &SummaryModel) {
        self.refresh_prepared(x, &PreparedModel::new(model));
    }

    pub(crate) fn refresh_prepared(&mut self, x: &VariableDimSample, prepared: &PreparedModel) {
        self.log_completed = prepared.ln_completed(x.theta(), self.z.labels());
        self.log_proposal = proposal_log_prob(x.theta(), prepared, self.z.labels(), &self.order);
    }

    /// Importance weight `ln p(x,z|E) - ln q(order,z)` of the state.
    fn log_weight(&self) -> f64 {
        self.log_completed - self.log_proposal
    }
}

fn check_feasible(k: usize, prepared: &PreparedModel) -> Result<()> {
    if prepared.ln_eta == f64::NEG_INFINITY && k > prepared.n_labels() {
        return Err(Error::Infeasible {
            k,
            n_labels: prepared.n_labels(),
        });
    }
    Ok(())
}

/// Log weights of the labels available at one position: index 0 is the
/// background, index `l` the `l`-th Gaussian (`-inf` once used).
fn label_log_weights(prepared: &PreparedModel, x: f64, used: &[bool], out: &mut Vec<f64>) {
    out.clear();
    out.push(prepared.ln_eta);
    for l in 0..prepared.n_labels() {
        out.push(if used[l + 1] {
            f64::NEG_INFINITY
        } else {
            prepared.ln_pi[l] + prepared.ln_gauss(l, x)
        });
    }
}

/// `ln q(order, z)` of the sequential proposal.
fn proposal_log_prob(
    theta: &[f64],
    prepared: &PreparedModel,
    labels: &[usize],
    order: &[usize],
) -> f64 {
    let mut used = vec![false; prepared.n_labels() + 1];
    let mut lw = Vec::with_capacity(prepared.n_labels() + 1);
    let mut lq = -ln_factorial(theta.len());
    for &j in order {
        label_log_weights(prepared, theta[j], &used, &mut lw);
        let chosen = labels[j];
        lq += lw[chosen] - log_sum_exp(&lw);
        if chosen > 0 {
            used[chosen] = true;
        }
    }
    lq
}

fn draw_label<R: Rng + ?Sized>(log_weights: &[f64], rng: &mut R) -> usize {
    let max = log_weights
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = log_weights.iter().map(|w| (w - max).exp()).sum();
    let mut u = rng.random::<f64>() * total;
    let mut last_positive = 0;
    for (l, w) in log_weights.iter().enumerate() {
        let p = (w - max).exp();
        if p > 0.0 {
            last_positive = l;
            if u < p {
                return l;
            }
            u -= p;
        }
    }
    last_positive
}

fn argmax_label(log_weights: &[f64]) -> usize {
    let mut best = 0;
    for (l, &w) in log_weights.iter().enumerate() {
        if w > log_weights[best] {
            best = l;
        }
    }
    best
}

fn random_order<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Vec<usize> {
    let mut order: Vec<usize> = (0..k).collect();
    order.shuffle(rng);
    order
}

/// Draws `(order, z)` and returns them with `ln q(order, z)`.
pub(crate) fn propose_prepared<R: Rng + ?Sized>(
    x: &VariableDimSample,
    prepared: &PreparedModel,
    rng: &mut R,
) -> Result<(AllocationVector, Vec<usize>, f64)> {
    let k = x.k();
    check_feasible(k, prepared)?;
    let order = random_order(k, rng);
    let mut used = vec![false; prepared.n_labels() + 1];
    let mut labels = vec![0usize; k];
    let mut lw = Vec::with_capacity(prepared.n_labels() + 1);
    let mut lq = -ln_factorial(k);
    for &j in &order {
        label_log_weights(prepared, x.theta()[j], &used, &mut lw);
        let l = draw_label(&lw, rng);
        lq += lw[l] - log_sum_exp(&lw);
        labels[j] = l;
        if l > 0 {
            used[l] = true;
        }
    }
    Ok((AllocationVector::from_raw(labels), order, lq))
}

/// Draws an allocation from the independent proposal; returns it with the
/// log probability of the draw (visiting order included).
pub fn propose_allocation<R: Rng + ?Sized>(
    x: &VariableDimSample,
    model: &SummaryModel,
    rng: &mut R,
) -> Result<(AllocationVector, f64)> {
    let (z, _, lq) = propose_prepared(x, &PreparedModel::new(model), rng)?;
    Ok((z, lq))
}

pub(crate) fn greedy_prepared<R: Rng + ?Sized>(
    x: &VariableDimSample,
    prepared: &PreparedModel,
    rng: &mut R,
) -> Result<AllocationChainState> {
    let k = x.k();
    check_feasible(k, prepared)?;
    let order = random_order(k, rng);
    let mut used = vec![false; prepared.n_labels() + 1];
    let mut labels = vec![0usize; k];
    let mut lw = Vec::with_capacity(prepared.n_labels() + 1);
    for &j in &order {
        label_log_weights(prepared, x.theta()[j], &used, &mut lw);
        let l = argmax_label(&lw);
        labels[j] = l;
        if l > 0 {
            used[l] = true;
        }
    }
    Ok(AllocationChainState::from_parts(
        x,
        prepared,
        AllocationVector::from_raw(labels),
        order,
    ))
}

/// Deterministic starting allocation: the proposal's weight rule with the
/// most probable label at each position, positions visited in random order.
pub fn greedy_allocation<R: Rng + ?Sized>(
    x: &VariableDimSample,
    model: &SummaryModel,
    rng: &mut R,
) -> Result<AllocationChainState> {
    greedy_prepared(x, &PreparedModel::new(model), rng)
}

/// Log acceptance ratio of moving from `current` to `proposed`.
pub fn imh_log_ratio(current: &AllocationChainState, proposed: &AllocationChainState) -> f64 {
    if current.log_completed == f64::NEG_INFINITY {
        // zero-density start: any move is accepted
        return f64::INFINITY;
    }
    proposed.log_weight() - current.log_weight()
}

pub(crate) fn imh_prepared<R: Rng + ?Sized>(
    mut state: AllocationChainState,
    x: &VariableDimSample,
    prepared: &PreparedModel,
    n_steps: usize,
    rng: &mut R,
) -> Result<AllocationChainState> {
    for _ in 0..n_steps {
        let (z, order, lq) = propose_prepared(x, prepared, rng)?;
        let proposed = AllocationChainState {
            log_completed: prepared.ln_completed(x.theta(), z.labels()),
            z,
            order,
            log_proposal: lq,
        };
        let ratio = imh_log_ratio(&state, &proposed);
        if ratio >= 0.0 || rng.random::<f64>().ln() < ratio {
            state = proposed;
        }
    }
    Ok(state)
}

/// Applies `n_steps` independent Metropolis-Hastings steps targeting
/// `p(z | x, E)`. The state's caches are refreshed against `model` first.
pub fn imh_kernel<R: Rng + ?Sized>(
    mut state: AllocationChainState,
    x: &VariableDimSample,
    model: &SummaryModel,
    n_steps: usize,
    rng: &mut R,
) -> Result<AllocationChainState> {
    if n_steps == 0 {
        return Ok(state);
    }
    let prepared = PreparedModel::new(model);
    state.refresh_prepared(x, &prepared);
    imh_prepared(state, x, &prepared, n_steps, rng)
}

/// Exact `p(z | x, E)` over every admissible allocation, by enumeration.
pub fn exact_allocation_posterior(
    x: &VariableDimSample,
    model: &SummaryModel,
) -> Result<Vec<(AllocationVector, f64)>> {
    let zs = enumerate_allocations(x.k(), model.n_components(), DEFAULT_ENUMERATION_CAP)?;
    let prepared = PreparedModel::new(model);
    let logs: Vec<f64> = zs
        .iter()
        .map(|z| prepared.ln_completed(x.theta(), z.labels()))
        .collect();
    let norm = log_sum_exp(&logs);
    if norm == f64::NEG_INFINITY {
        return Err(Error::Infeasible {
            k: x.k(),
            n_labels: model.n_components(),
        });
    }
    Ok(zs
        .into_iter()
        .zip(logs)
        .map(|(z, l)| (z, (l - norm).exp()))
        .collect())
}
