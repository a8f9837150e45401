use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Observation length, sinusoid coefficients and noise level of a synthetic signal.
///
/// Each sinusoid `a cos(omega t + phi)` is stored as the linear pair
/// `(a cos(phi), -a sin(phi))` multiplying the `(cos, sin)` design columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SinusoidScene {
    n: usize,
    coefficients: Vec<(f64, f64)>,
    omegas: Vec<f64>,
    snr_db: f64,
    sigma2: f64,
}

impl SinusoidScene {
    /// Scene whose noise variance solves `snr_db = 10 log10(|D a|^2 / (N sigma2))`.
    pub fn from_snr(
        n: usize,
        amplitudes: &[f64],
        phases: &[f64],
        omegas: &[f64],
        snr_db: f64,
    ) -> Result<Self> {
        let coefficients = Self::coefficients(n, amplitudes, phases, omegas)?;
        let energy = signal_energy(n, &coefficients, omegas)?;
        if energy <= 0.0 {
            return Err(Error::Config(
                "scene has no signal energy; give the noise variance explicitly".into(),
            ));
        }
        if !snr_db.is_finite() {
            return Err(Error::Config(format!("snr_db {snr_db} is not finite")));
        }
        let sigma2 = energy / (n as f64 * 10f64.powf(snr_db / 10.0));
        Ok(Self {
            n,
            coefficients,
            omegas: omegas.to_vec(),
            snr_db,
            sigma2,
        })
    }

    /// Scene with a given noise variance; `snr_db` is derived (`-inf` for pure noise).
    pub fn with_noise_variance(
        n: usize,
        amplitudes: &[f64],
        phases: &[f64],
        omegas: &[f64],
        sigma2: f64,
    ) -> Result<Self> {
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::Config(format!(
                "noise variance {sigma2} must be > 0"
            )));
        }
        let coefficients = Self::coefficients(n, amplitudes, phases, omegas)?;
        let energy = signal_energy(n, &coefficients, omegas)?;
        let snr_db = 10.0 * (energy / (n as f64 * sigma2)).log10();
        Ok(Self {
            n,
            coefficients,
            omegas: omegas.to_vec(),
            snr_db,
            sigma2,
        })
    }

    fn coefficients(
        n: usize,
        amplitudes: &[f64],
        phases: &[f64],
        omegas: &[f64],
    ) -> Result<Vec<(f64, f64)>> {
        if n == 0 {
            return Err(Error::Config("observation length must be >= 1".into()));
        }
        if amplitudes.len() != omegas.len() {
            return Err(Error::Config(format!(
                "{} amplitudes for {} frequencies",
                amplitudes.len(),
                omegas.len()
            )));
        }
        if !phases.is_empty() && phases.len() != omegas.len() {
            return Err(Error::Config(format!(
                "{} phases for {} frequencies",
                phases.len(),
                omegas.len()
            )));
        }
        Ok(amplitudes
            .iter()
            .enumerate()
            .map(|(j, &a)| {
                let phi = phases.get(j).copied().unwrap_or(0.0);
                (a * phi.cos(), -a * phi.sin())
            })
            .collect())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn omegas(&self) -> &[f64] {
        &self.omegas
    }

    pub fn coefficient_pairs(&self) -> &[(f64, f64)] {
        &self.coefficients
    }

    /// Amplitude `sqrt(a_cos^2 + a_sin^2)` of each sinusoid.
    pub fn amplitudes(&self) -> Vec<f64> {
        self.coefficients.iter().map(|(c, s)| c.hypot(*s)).collect()
    }

    pub fn snr_db(&self) -> f64 {
        self.snr_db
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    /// Noise-free signal `D a`.
    pub fn clean_signal(&self) -> Vec<f64> {
        let d = design_matrix(&self.omegas, self.n).expect("scene validated at construction");
        let a = DVector::from_iterator(
            2 * self.coefficients.len(),
            self.coefficients.iter().flat_map(|&(c, s)| [c, s]),
        );
        (d * a).iter().copied().collect()
    }
}

fn signal_energy(n: usize, coefficients: &[(f64, f64)], omegas: &[f64]) -> Result<f64> {
    let d = design_matrix(omegas, n)?;
    let a = DVector::from_iterator(
        2 * coefficients.len(),
        coefficients.iter().flat_map(|&(c, s)| [c, s]),
    );
    Ok((d * a).norm_squared())
}

/// `N x 2k` matrix whose columns `(2j, 2j+1)` are `cos(omega_j t)` and
/// `sin(omega_j t)` for `t = 0..N-1`.
pub fn design_matrix(omegas: &[f64], n: usize) -> Result<DMatrix<f64>> {
    if let Some(w) = omegas.iter().find(|&&w| !(w > 0.0 && w < PI)) {
        return Err(Error::domain(format!("frequency {w} outside (0, pi)")));
    }
    let mut d = DMatrix::zeros(n, 2 * omegas.len());
    for (j, &w) in omegas.iter().enumerate() {
        for t in 0..n {
            let (s, c) = (w * t as f64).sin_cos();
            d[(t, 2 * j)] = c;
            d[(t, 2 * j + 1)] = s;
        }
    }
    Ok(d)
}

/// `y = D a + e` with `e ~ N(0, sigma2 I)`, reproducible from `seed`.
pub fn synthesize_signal(scene: &SinusoidScene, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, scene.sigma2.sqrt()).expect("sigma2 validated positive");
    scene
        .clean_signal()
        .into_iter()
        .map(|s| s + noise.sample(&mut rng))
        .collect()
}
