//! Variable-dimensional samples and the Bernoulli-Gaussian summary model.
//!
//! A [`SummaryModel`] describes a point pattern on the parameter space: each of
//! `L` Gaussian components is present independently with probability `pi_l`
//! and, when present, contributes one point; a homogeneous Poisson process with
//! intensity `eta` adds background points. The resulting points are arranged
//! in a uniformly random order. All densities are evaluated in the log domain.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{ln_factorial, log_sum_exp};

/// Volume of the radial-frequency space `(0, pi)`.
pub const THETA_VOLUME: f64 = PI;

/// Default cap on the number of allocation vectors an enumeration may produce.
pub const DEFAULT_ENUMERATION_CAP: u128 = 1_000_000;

/// Largest `L` accepted by the exact marginal (the summation keeps one
/// accumulator per subset of labels).
pub const MAX_MARGINAL_LABELS: usize = 20;

/// One draw `(k, theta_k)` from a trans-dimensional posterior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableDimSample {
    theta: Vec<f64>,
}

impl VariableDimSample {
    pub fn new(theta: Vec<f64>) -> Result<Self> {
        if let Some(bad) = theta.iter().find(|t| !t.is_finite()) {
            return Err(Error::domain(format!(
                "non-finite component parameter {bad}"
            )));
        }
        Ok(Self { theta })
    }

    pub fn empty() -> Self {
        Self { theta: Vec::new() }
    }

    pub fn k(&self) -> usize {
        self.theta.len()
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    /// True when every entry lies strictly inside `(0, upper)`.
    pub fn is_inside(&self, upper: f64) -> bool {
        self.theta.iter().all(|&t| t > 0.0 && t < upper)
    }

    pub fn sorted_theta(&self) -> Vec<f64> {
        let mut v = self.theta.clone();
        v.sort_by(f64::total_cmp);
        v
    }
}

/// Where a [`SampleSet`] came from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub seed: u64,
    pub n_sweeps: usize,
    pub burn_in: usize,
    pub thinning: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    samples: Vec<VariableDimSample>,
    pub meta: SampleMeta,
}

impl SampleSet {
    pub fn new(samples: Vec<VariableDimSample>, meta: SampleMeta) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::domain("a sample set needs at least one sample"));
        }
        Ok(Self { samples, meta })
    }

    pub fn samples(&self) -> &[VariableDimSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn max_k(&self) -> usize {
        self.samples.iter().map(|s| s.k()).max().unwrap_or(0)
    }

    /// Empirical distribution of `k`, indexed by `k` (length `max_k + 1`).
    pub fn k_histogram(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.max_k() + 1];
        for s in &self.samples {
            counts[s.k()] += 1;
        }
        counts
    }

    pub fn k_probabilities(&self) -> Vec<f64> {
        let m = self.len() as f64;
        self.k_histogram()
            .into_iter()
            .map(|c| c as f64 / m)
            .collect()
    }

    /// Concatenates sets in the given order. The metadata of the first set is kept.
    pub fn merge(sets: &[SampleSet]) -> Result<SampleSet> {
        let first = sets
            .first()
            .ok_or_else(|| Error::domain("nothing to merge"))?;
        let samples = sets
            .iter()
            .flat_map(|s| s.samples.iter().cloned())
            .collect();
        SampleSet::new(samples, first.meta.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    pub mu: f64,
    pub s2: f64,
    pub pi: f64,
}

impl GaussianComponent {
    pub fn new(mu: f64, s2: f64, pi: f64) -> Result<Self> {
        let c = Self { mu, s2, pi };
        c.validate()?;
        Ok(c)
    }

    pub fn s(&self) -> f64 {
        self.s2.sqrt()
    }

    fn validate(&self) -> Result<()> {
        if !self.mu.is_finite() {
            return Err(Error::domain(format!(
                "component mean {} is not finite",
                self.mu
            )));
        }
        if !(self.s2 > 0.0 && self.s2.is_finite()) {
            return Err(Error::domain(format!(
                "component variance {} must be > 0",
                self.s2
            )));
        }
        if !(self.pi > 0.0 && self.pi <= 1.0) {
            return Err(Error::domain(format!(
                "probability of presence {} outside (0, 1]",
                self.pi
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryModel {
    pub components: Vec<GaussianComponent>,
    pub eta: f64,
    pub theta_volume: f64,
}

impl SummaryModel {
    pub fn new(components: Vec<GaussianComponent>, eta: f64, theta_volume: f64) -> Result<Self> {
        let m = Self {
            components,
            eta,
            theta_volume,
        };
        m.validate()?;
        Ok(m)
    }

    /// Model over `(0, pi)`.
    pub fn on_frequencies(components: Vec<GaussianComponent>, eta: f64) -> Result<Self> {
        Self::new(components, eta, THETA_VOLUME)
    }

    pub fn validate(&self) -> Result<()> {
        for c in &self.components {
            c.validate()?;
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::domain(format!(
                "background intensity {} must be >= 0",
                self.eta
            )));
        }
        if !(self.theta_volume > 0.0 && self.theta_volume.is_finite()) {
            return Err(Error::domain(format!(
                "parameter-space volume {} must be > 0",
                self.theta_volume
            )));
        }
        Ok(())
    }

    /// Number of Gaussian components `L`.
    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    /// Expected number of background points, `eta * |Theta|`.
    pub fn lambda0(&self) -> f64 {
        self.eta * self.theta_volume
    }

    /// Components reordered by increasing mean.
    pub fn sorted_by_mean(&self) -> SummaryModel {
        let mut out = self.clone();
        out.components.sort_by(|a, b| a.mu.total_cmp(&b.mu));
        out
    }

    /// Mixture intensity `sum_l pi_l N(theta | mu_l, s_l^2)`.
    pub fn gaussian_intensity(&self, theta: f64) -> f64 {
        self.components
            .iter()
            .map(|c| c.pi * crate::math::normal_pdf(theta, c.mu, c.s2))
            .sum()
    }
}

/// Labels of a sample's components: `0` is the background, `l >= 1` the
/// `l`-th Gaussian component. Gaussian labels appear at most once.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AllocationVector(Vec<usize>);

impl AllocationVector {
    /// Checks injectivity of the Gaussian labels and that labels are `<= n_labels`.
    pub fn new(labels: Vec<usize>, n_labels: usize) -> Result<Self> {
        check_admissible(&labels, n_labels)?;
        Ok(Self(labels))
    }

    pub(crate) fn from_raw(labels: Vec<usize>) -> Self {
        Self(labels)
    }

    pub fn labels(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Number of background labels.
    pub fn n_background(&self) -> usize {
        self.0.iter().filter(|&&l| l == 0).count()
    }

    /// True iff Gaussian label `l` (1-based) is used.
    pub fn uses(&self, l: usize) -> bool {
        self.0.contains(&l)
    }
}

fn check_admissible(labels: &[usize], n_labels: usize) -> Result<()> {
    let mut seen = vec![false; n_labels + 1];
    for &l in labels {
        if l > n_labels {
            return Err(Error::domain(format!("label {l} exceeds L={n_labels}")));
        }
        if l > 0 {
            if seen[l] {
                return Err(Error::domain(format!(
                    "Gaussian label {l} used more than once"
                )));
            }
            seen[l] = true;
        }
    }
    Ok(())
}

/// `|Z(k, L)| = sum_{j=0}^{min(k,L)} C(k,j) L!/(L-j)!`, saturating at `u128::MAX`.
pub fn allocation_count(k: usize, n_labels: usize) -> u128 {
    let mut total: u128 = 0;
    let mut binom: u128 = 1; // C(k, j)
    let mut falling: u128 = 1; // L!/(L-j)!
    for j in 0..=k.min(n_labels) {
        if j > 0 {
            binom = match binom.checked_mul((k - j + 1) as u128) {
                Some(v) => v / j as u128,
                None => return u128::MAX,
            };
            falling = match falling.checked_mul((n_labels - j + 1) as u128) {
                Some(v) => v,
                None => return u128::MAX,
            };
        }
        let term = match binom.checked_mul(falling) {
            Some(v) => v,
            None => return u128::MAX,
        };
        total = match total.checked_add(term) {
            Some(v) => v,
            None => return u128::MAX,
        };
    }
    total
}

/// Every admissible allocation vector of length `k` over `L` Gaussian labels,
/// in lexicographic order.
pub fn enumerate_allocations(
    k: usize,
    n_labels: usize,
    cap: u128,
) -> Result<Vec<AllocationVector>> {
    let count = allocation_count(k, n_labels);
    if count > cap {
        return Err(Error::TooManyAllocations { count, cap });
    }
    let mut out = Vec::with_capacity(count as usize);
    let mut current = Vec::with_capacity(k);
    let mut used = vec![false; n_labels + 1];
    fn recurse(
        k: usize,
        n_labels: usize,
        current: &mut Vec<usize>,
        used: &mut [bool],
        out: &mut Vec<AllocationVector>,
    ) {
        if current.len() == k {
            out.push(AllocationVector(current.clone()));
            return;
        }
        for l in 0..=n_labels {
            if l > 0 && used[l] {
                continue;
            }
            if l > 0 {
                used[l] = true;
            }
            current.push(l);
            recurse(k, n_labels, current, used, out);
            current.pop();
            if l > 0 {
                used[l] = false;
            }
        }
    }
    recurse(k, n_labels, &mut current, &mut used, &mut out);
    debug_assert_eq!(out.len() as u128, count);
    Ok(out)
}

/// Per-model constants reused across many density evaluations.
#[derive(Debug, Clone)]
pub(crate) struct PreparedModel {
    pub mu: Vec<f64>,
    pub inv_two_s2: Vec<f64>,
    /// `-0.5 ln(2 pi s2)`
    pub ln_norm: Vec<f64>,
    pub ln_pi: Vec<f64>,
    pub ln_1m_pi: Vec<f64>,
    /// `ln(eta)`, `-inf` when there is no background.
    pub ln_eta: f64,
    pub lambda0: f64,
}

impl PreparedModel {
    pub fn new(model: &SummaryModel) -> Self {
        let c = &model.components;
        Self {
            mu: c.iter().map(|c| c.mu).collect(),
            inv_two_s2: c.iter().map(|c| 0.5 / c.s2).collect(),
            ln_norm: c
                .iter()
                .map(|c| -0.5 * c.s2.ln() - crate::math::LN_SQRT_2PI)
                .collect(),
            ln_pi: c.iter().map(|c| c.pi.ln()).collect(),
            ln_1m_pi: c.iter().map(|c| (-c.pi).ln_1p()).collect(),
            ln_eta: if model.eta > 0.0 {
                model.eta.ln()
            } else {
                f64::NEG_INFINITY
            },
            lambda0: model.lambda0(),
        }
    }

    pub fn n_labels(&self) -> usize {
        self.mu.len()
    }

    /// `ln N(x | mu_l, s_l^2)` for 0-based component index `l`.
    #[inline]
    pub fn ln_gauss(&self, l: usize, x: f64) -> f64 {
        let d = x - self.mu[l];
        self.ln_norm[l] - d * d * self.inv_two_s2[l]
    }

    /// Log completed density for an admissible allocation (not re-checked).
    pub fn ln_completed(&self, theta: &[f64], labels: &[usize]) -> f64 {
        let k = theta.len();
        let mut lp = -ln_factorial(k) - self.lambda0;
        let mut used_mask = vec![false; self.n_labels()];
        for (&x, &l) in theta.iter().zip(labels) {
            if l == 0 {
                // Lambda0^n0 * |Theta|^-n0 = eta^n0
                lp += self.ln_eta;
            } else {
                used_mask[l - 1] = true;
                lp += self.ln_gauss(l - 1, x);
            }
        }
        for (l, &used) in used_mask.iter().enumerate() {
            lp += if used {
                self.ln_pi[l]
            } else {
                self.ln_1m_pi[l]
            };
        }
        lp
    }

    /// Exact log marginal density, summing the completed density over all
    /// admissible allocations. The sum is organised by the subset of Gaussian
    /// labels in use, which is exact and costs `O(k * L * 2^L)`.
    pub fn ln_marginal(&self, theta: &[f64]) -> f64 {
        let n = self.n_labels();
        let n_masks = 1usize << n;
        // acc[mask]: log-sum over allocations of the positions seen so far
        // whose Gaussian labels are exactly `mask`.
        let mut acc = vec![f64::NEG_INFINITY; n_masks];
        let mut next = vec![f64::NEG_INFINITY; n_masks];
        acc[0] = 0.0;
        let mut ln_g = vec![0.0; n];
        for &x in theta {
            for (l, g) in ln_g.iter_mut().enumerate() {
                *g = self.ln_gauss(l, x);
            }
            next.iter_mut().for_each(|v| *v = f64::NEG_INFINITY);
            for mask in 0..n_masks {
                let cur = acc[mask];
                if cur == f64::NEG_INFINITY {
                    continue;
                }
                if self.ln_eta > f64::NEG_INFINITY {
                    next[mask] = crate::math::log_add_exp(next[mask], cur + self.ln_eta);
                }
                for (l, &g) in ln_g.iter().enumerate() {
                    let bit = 1 << l;
                    if mask & bit == 0 {
                        let t = mask | bit;
                        next[t] = crate::math::log_add_exp(next[t], cur + g);
                    }
                }
            }
            std::mem::swap(&mut acc, &mut next);
        }
        let terms: Vec<f64> = acc
            .iter()
            .enumerate()
            .map(|(mask, &v)| {
                if v == f64::NEG_INFINITY {
                    return v;
                }
                let presence: f64 = (0..n)
                    .map(|l| {
                        if mask & (1 << l) != 0 {
                            self.ln_pi[l]
                        } else {
                            self.ln_1m_pi[l]
                        }
                    })
                    .sum();
                v + presence
            })
            .collect();
        log_sum_exp(&terms) - ln_factorial(theta.len()) - self.lambda0
    }
}

/// `ln p(x, z | E)`: the completed density of a sample and its allocation.
pub fn log_density_completed(
    x: &VariableDimSample,
    z: &AllocationVector,
    model: &SummaryModel,
) -> Result<f64> {
    if z.len() != x.k() {
        return Err(Error::domain(format!(
            "allocation length {} does not match k={}",
            z.len(),
            x.k()
        )));
    }
    check_admissible(z.labels(), model.n_components())?;
    Ok(PreparedModel::new(model).ln_completed(x.theta(), z.labels()))
}

/// `ln q_E(x)`, the log marginal density of a sample under the summary model.
pub fn log_density_marginal(x: &VariableDimSample, model: &SummaryModel) -> Result<f64> {
    if model.n_components() > MAX_MARGINAL_LABELS {
        return Err(Error::TooManyAllocations {
            count: allocation_count(x.k(), model.n_components()),
            cap: 1u128 << MAX_MARGINAL_LABELS,
        });
    }
    Ok(PreparedModel::new(model).ln_marginal(x.theta()))
}
