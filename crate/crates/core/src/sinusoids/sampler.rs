use std::f64::consts::PI;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use super::target::{has_near_duplicates, log_target, Projection, TargetPrior};
use crate::error::{Error, Result};
use crate::math::normal_pdf;
use crate::model::{SampleMeta, SampleSet, VariableDimSample};

const BIRTH_UNIFORM_WEIGHT: f64 = 0.5;
const UPDATE_WALK_WEIGHT: f64 = 0.8;
/// Standard deviation of the log-scale random walk on `delta2`.
const DELTA2_LOG_STEP: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    /// Total sweeps, burn-in included.
    pub n_sweeps: usize,
    pub burn_in: usize,
    pub thinning: usize,
    pub k_max: usize,
    /// Mean of the truncated Poisson prior on `k`.
    pub lambda_k: f64,
    /// Initial (or fixed) value of the expected-SNR hyperparameter.
    pub delta2: f64,
    pub adapt_delta2: bool,
    /// Inverse-gamma `(shape, scale)` prior on `delta2` when adapted.
    pub delta2_prior: (f64, f64),
    /// Random-walk std of frequency updates; `None` means `1/(2N)`.
    pub rw_scale: Option<f64>,
    /// Periodogram grid size; `None` means `4N`.
    pub periodogram_grid: Option<usize>,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            n_sweeps: 220_000,
            burn_in: 20_000,
            thinning: 10,
            k_max: 20,
            lambda_k: 1.0,
            delta2: 50.0,
            adapt_delta2: false,
            delta2_prior: (2.0, 100.0),
            rw_scale: None,
            periodogram_grid: None,
            seed: 1,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_sweeps <= self.burn_in {
            return bad(format!(
                "n_sweeps ({}) must exceed burn_in ({})",
                self.n_sweeps, self.burn_in
            ));
        }
        if self.thinning == 0 {
            return bad("thinning must be >= 1".into());
        }
        if self.k_max == 0 {
            return bad("k_max must be >= 1".into());
        }
        if !(self.lambda_k > 0.0) {
            return bad(format!("lambda_k {} must be > 0", self.lambda_k));
        }
        if !(self.delta2 > 0.0) {
            return bad(format!("delta2 {} must be > 0", self.delta2));
        }
        if !(self.delta2_prior.0 > 0.0 && self.delta2_prior.1 > 0.0) {
            return bad("delta2 prior parameters must be > 0".into());
        }
        if let Some(s) = self.rw_scale {
            if !(s > 0.0) {
                return bad(format!("rw_scale {s} must be > 0"));
            }
        }
        if self.periodogram_grid == Some(0) {
            return bad("periodogram_grid must be >= 1".into());
        }
        Ok(())
    }

    /// Number of retained draws.
    pub fn n_retained(&self) -> usize {
        (self.n_sweeps - self.burn_in) / self.thinning
    }

    pub fn prior(&self) -> TargetPrior {
        TargetPrior {
            lambda_k: self.lambda_k,
            k_max: self.k_max,
            delta2_prior: self.adapt_delta2.then_some(self.delta2_prior),
        }
    }
}

/// Normalized periodogram of `y` on a uniform grid over `(0, pi)`, used as a
/// piecewise-constant proposal density.
#[derive(Debug, Clone)]
pub struct Periodogram {
    cell_width: f64,
    prob: Vec<f64>,
    cdf: Vec<f64>,
}

impl Periodogram {
    pub fn new(y: &[f64], grid: usize) -> Self {
        let cell_width = PI / grid as f64;
        let mut power: Vec<f64> = (0..grid)
            .map(|j| {
                let w = (j as f64 + 0.5) * cell_width;
                let (re, im) = y.iter().enumerate().fold((0.0, 0.0), |(re, im), (t, &v)| {
                    let (s, c) = (w * t as f64).sin_cos();
                    (re + v * c, im - v * s)
                });
                re * re + im * im
            })
            .collect();
        let total: f64 = power.iter().sum();
        if total > 0.0 && total.is_finite() {
            power.iter_mut().for_each(|p| *p /= total);
        } else {
            power.iter_mut().for_each(|p| *p = 1.0 / grid as f64);
        }
        let mut acc = 0.0;
        let cdf = power
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        Self {
            cell_width,
            prob: power,
            cdf,
        }
    }

    pub fn density(&self, omega: f64) -> f64 {
        if !(omega > 0.0 && omega < PI) {
            return 0.0;
        }
        let cell = ((omega / self.cell_width) as usize).min(self.prob.len() - 1);
        self.prob[cell] / self.cell_width
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random::<f64>() * self.cdf[self.cdf.len() - 1];
        let cell = self
            .cdf
            .partition_point(|&c| c <= u)
            .min(self.prob.len() - 1);
        (cell as f64 + rng.random::<f64>()) * self.cell_width
    }
}

/// Current position of the reversible-jump chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub omegas: Vec<f64>,
    pub delta2: f64,
    pub log_target: f64,
}

impl ChainState {
    pub fn k(&self) -> usize {
        self.omegas.len()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MoveStats {
    pub proposed: u64,
    pub accepted: u64,
}

impl MoveStats {
    pub fn rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }

    fn record(&mut self, accepted: bool) {
        self.proposed += 1;
        self.accepted += accepted as u64;
    }
}

/// Proposal/acceptance counts per move type.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceStats {
    pub birth: MoveStats,
    pub death: MoveStats,
    pub update: MoveStats,
    pub delta2: MoveStats,
}

/// Proposal mechanisms and acceptance ratios of the reversible-jump sampler
/// for one observation.
#[derive(Debug, Clone)]
pub struct MoveKernel {
    y: Vec<f64>,
    prior: TargetPrior,
    periodogram: Periodogram,
    rw_scale: f64,
    adapt_delta2: bool,
}

impl MoveKernel {
    pub fn new(y: &[f64], config: &SamplerConfig) -> Result<Self> {
        config.validate()?;
        if y.is_empty() {
            return Err(Error::Config("empty observation".into()));
        }
        let n = y.len();
        let grid = config.periodogram_grid.unwrap_or(4 * n);
        Ok(Self {
            y: y.to_vec(),
            prior: config.prior(),
            periodogram: Periodogram::new(y, grid),
            rw_scale: config.rw_scale.unwrap_or(1.0 / (2.0 * n as f64)),
            adapt_delta2: config.adapt_delta2,
        })
    }

    pub fn periodogram(&self) -> &Periodogram {
        &self.periodogram
    }

    pub fn state(&self, omegas: Vec<f64>, delta2: f64) -> ChainState {
        let log_target = log_target(&omegas, delta2, &self.y, &self.prior);
        ChainState {
            omegas,
            delta2,
            log_target,
        }
    }

    pub fn birth_probability(&self, k: usize) -> f64 {
        if k >= self.prior.k_max {
            0.0
        } else {
            0.5
        }
    }

    pub fn death_probability(&self, k: usize) -> f64 {
        if k == 0 {
            0.0
        } else {
            0.5
        }
    }

    /// Density of a newborn frequency: half uniform, half periodogram.
    pub fn birth_density(&self, omega: f64) -> f64 {
        if !(omega > 0.0 && omega < PI) {
            return 0.0;
        }
        BIRTH_UNIFORM_WEIGHT / PI + (1.0 - BIRTH_UNIFORM_WEIGHT) * self.periodogram.density(omega)
    }

    /// Density of proposing `to` when updating a frequency currently at `from`.
    pub fn update_density(&self, to: f64, from: f64) -> f64 {
        UPDATE_WALK_WEIGHT * normal_pdf(to, from, self.rw_scale * self.rw_scale)
            + (1.0 - UPDATE_WALK_WEIGHT) * self.periodogram.density(to)
    }

    pub fn birth_log_ratio(&self, current: &ChainState, proposed: &ChainState, born: f64) -> f64 {
        let k = current.k();
        proposed.log_target - current.log_target + self.death_probability(k + 1).ln()
            - self.birth_probability(k).ln()
            - self.birth_density(born).ln()
    }

    pub fn death_log_ratio(
        &self,
        current: &ChainState,
        proposed: &ChainState,
        removed: f64,
    ) -> f64 {
        let k = current.k();
        proposed.log_target - current.log_target
            + self.birth_probability(k - 1).ln()
            + self.birth_density(removed).ln()
            - self.death_probability(k).ln()
    }

    pub fn update_log_ratio(
        &self,
        current: &ChainState,
        proposed: &ChainState,
        old: f64,
        new: f64,
    ) -> f64 {
        proposed.log_target - current.log_target + self.update_density(old, new).ln()
            - self.update_density(new, old).ln()
    }

    pub fn delta2_log_ratio(&self, current: &ChainState, proposed: &ChainState) -> f64 {
        proposed.log_target - current.log_target + proposed.delta2.ln() - current.delta2.ln()
    }

    /// One sweep: a birth-or-death attempt, an MH update of every frequency,
    /// then a `delta2` update when it is adapted.
    pub fn sweep<R: Rng + ?Sized>(
        &self,
        mut state: ChainState,
        rng: &mut R,
        stats: &mut AcceptanceStats,
    ) -> ChainState {
        let k = state.k();
        let b = self.birth_probability(k);
        let d = self.death_probability(k);
        let u: f64 = rng.random();
        if u < b {
            let born = self.sample_birth(rng);
            let pos = rng.random_range(0..=k);
            let mut omegas = state.omegas.clone();
            omegas.insert(pos, born);
            let proposed = self.state(omegas, state.delta2);
            let accept = accept(rng, self.birth_log_ratio(&state, &proposed, born));
            stats.birth.record(accept);
            if accept {
                state = proposed;
            }
        } else if u < b + d {
            let pos = rng.random_range(0..k);
            let mut omegas = state.omegas.clone();
            let removed = omegas.remove(pos);
            let proposed = self.state(omegas, state.delta2);
            let accept = accept(rng, self.death_log_ratio(&state, &proposed, removed));
            stats.death.record(accept);
            if accept {
                state = proposed;
            }
        }

        for j in 0..state.k() {
            let old = state.omegas[j];
            let new = if rng.random::<f64>() < UPDATE_WALK_WEIGHT {
                old + self.rw_scale * rng.sample::<f64, _>(StandardNormal)
            } else {
                self.periodogram.sample(rng)
            };
            if !(new > 0.0 && new < PI) {
                stats.update.record(false);
                continue;
            }
            let mut omegas = state.omegas.clone();
            omegas[j] = new;
            let proposed = self.state(omegas, state.delta2);
            let accept = accept(rng, self.update_log_ratio(&state, &proposed, old, new));
            stats.update.record(accept);
            if accept {
                state = proposed;
            }
        }

        if self.adapt_delta2 {
            let step: f64 = rng.sample(StandardNormal);
            let delta2 = state.delta2 * (DELTA2_LOG_STEP * step).exp();
            let proposed = self.state(state.omegas.clone(), delta2);
            let accept = accept(rng, self.delta2_log_ratio(&state, &proposed));
            stats.delta2.record(accept);
            if accept {
                state = proposed;
            }
        }

        debug_assert!(state.k() <= self.prior.k_max);
        debug_assert!(state.omegas.iter().all(|&w| w > 0.0 && w < PI));
        debug_assert!(state.log_target.is_finite());
        state
    }

    fn sample_birth<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if rng.random::<f64>() < BIRTH_UNIFORM_WEIGHT {
            // (0, pi) open: resample the measure-zero endpoint
            loop {
                let w = rng.random::<f64>() * PI;
                if w > 0.0 {
                    return w;
                }
            }
        } else {
            self.periodogram.sample(rng)
        }
    }
}

fn accept<R: Rng + ?Sized>(rng: &mut R, log_ratio: f64) -> bool {
    if log_ratio.is_nan() {
        return false;
    }
    log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio
}

#[derive(Debug, Clone)]
pub struct SamplerRun {
    pub samples: SampleSet,
    pub acceptance: AcceptanceStats,
    pub final_state: ChainState,
}

/// Runs one reversible-jump chain from the empty model. The chain is a pure
/// function of `(y, config)`.
pub fn run_sampler(y: &[f64], config: &SamplerConfig) -> Result<SamplerRun> {
    let kernel = MoveKernel::new(y, config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut state = kernel.state(Vec::new(), config.delta2);
    if !state.log_target.is_finite() {
        return Err(Error::Config("observation has zero energy".into()));
    }
    let mut stats = AcceptanceStats::default();
    let mut samples = Vec::with_capacity(config.n_retained());
    for sweep in 1..=config.n_sweeps {
        state = kernel.sweep(state, &mut rng, &mut stats);
        if sweep > config.burn_in && (sweep - config.burn_in).is_multiple_of(config.thinning) {
            samples.push(VariableDimSample::new(state.omegas.clone())?);
        }
    }
    log::info!(
        "rjmcmc: {} draws, acceptance birth {:.3} death {:.3} update {:.3}",
        samples.len(),
        stats.birth.rate(),
        stats.death.rate(),
        stats.update.rate()
    );
    let meta = SampleMeta {
        seed: config.seed,
        n_sweeps: config.n_sweeps,
        burn_in: config.burn_in,
        thinning: config.thinning,
    };
    Ok(SamplerRun {
        samples: SampleSet::new(samples, meta)?,
        acceptance: stats,
        final_state: state,
    })
}

/// Conditional posterior mean of the linear amplitudes,
/// `delta2/(1+delta2) (D^t D)^-1 D^t y`.
pub fn amplitude_posterior_mean(omegas: &[f64], y: &[f64], delta2: f64) -> Result<Vec<f64>> {
    if omegas.iter().any(|&w| !(w > 0.0 && w < PI)) {
        return Err(Error::domain("frequency outside (0, pi)"));
    }
    if has_near_duplicates(omegas) {
        return Err(Error::Singular);
    }
    if omegas.is_empty() {
        return Ok(Vec::new());
    }
    let proj = Projection::new(omegas, y).ok_or(Error::Singular)?;
    let shrink = delta2 / (1.0 + delta2);
    let ls = proj.coefficients().ok_or(Error::Singular)?;
    Ok((ls * shrink).iter().copied().collect())
}

/// Draws `(a, sigma2)` from their conditional posterior given the frequencies:
/// `sigma2 ~ IG(N/2, y^t P y / 2)` then
/// `a ~ N(M D^t y, sigma2 M)` with `M = delta2/(1+delta2) (D^t D)^-1`.
pub fn sample_amplitudes<R: Rng + ?Sized>(
    omegas: &[f64],
    y: &[f64],
    delta2: f64,
    rng: &mut R,
) -> Result<(Vec<f64>, f64)> {
    if omegas.iter().any(|&w| !(w > 0.0 && w < PI)) {
        return Err(Error::domain("frequency outside (0, pi)"));
    }
    if has_near_duplicates(omegas) {
        return Err(Error::Singular);
    }
    let n = y.len() as f64;
    let shrink = delta2 / (1.0 + delta2);
    let yty: f64 = y.iter().map(|v| v * v).sum();
    let shape = 0.5 * n;
    let gamma = Gamma::new(shape, 1.0).map_err(|e| Error::domain(e.to_string()))?;
    if omegas.is_empty() {
        let sigma2 = 0.5 * yty / gamma.sample(rng);
        return Ok((Vec::new(), sigma2));
    }
    let proj = Projection::new(omegas, y).ok_or(Error::Singular)?;
    let ls = proj.coefficients().ok_or(Error::Singular)?;
    let quad = yty - shrink * proj.explained();
    if !(quad > 0.0) {
        return Err(Error::Singular);
    }
    let sigma2 = 0.5 * quad / gamma.sample(rng);
    let p = ls.len();
    let eps = DVector::from_iterator(p, (0..p).map(|_| rng.sample::<f64, _>(StandardNormal)));
    // D^t D = R^t R, so R^-1 eps has covariance (D^t D)^-1
    let noise = proj.r.solve_upper_triangular(&eps).ok_or(Error::Singular)?;
    let a = ls * shrink + noise * (sigma2 * shrink).sqrt();
    Ok((a.iter().copied().collect(), sigma2))
}
