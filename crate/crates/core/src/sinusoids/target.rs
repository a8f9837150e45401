use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::math::ln_factorial;

/// Frequencies closer than this are treated as duplicates (singular design).
pub const MIN_FREQUENCY_SPACING: f64 = 1e-6;

/// Prior settings entering the unnormalized posterior of `(k, omega, delta2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetPrior {
    /// Mean of the truncated Poisson prior on `k`.
    pub lambda_k: f64,
    pub k_max: usize,
    /// Inverse-gamma `(shape, scale)` prior on `delta2`; `None` when `delta2` is fixed.
    pub delta2_prior: Option<(f64, f64)>,
}

/// Relative pivot size below which the design is numerically rank deficient.
const RANK_TOLERANCE: f64 = 1e-10;

/// Least-squares factorization of the design `D = Q R` against `y`.
pub(crate) struct Projection {
    /// Upper-triangular `R`, so that `D^t D = R^t R`.
    pub r: DMatrix<f64>,
    /// `Q^t y`; its squared norm is the energy of `y` explained by `D`.
    pub qty: DVector<f64>,
}

impl Projection {
    /// Householder QR of the design. Working on `D` rather than the normal
    /// equations keeps the explained energy at most `|y|^2` even for nearly
    /// collinear columns. `None` when the design is rank deficient.
    pub fn new(omegas: &[f64], y: &[f64]) -> Option<Self> {
        let n = y.len();
        let p = 2 * omegas.len();
        if p > n {
            return None;
        }
        let mut d = DMatrix::zeros(n, p);
        for (j, &w) in omegas.iter().enumerate() {
            for t in 0..n {
                let (s, c) = (w * t as f64).sin_cos();
                d[(t, 2 * j)] = c;
                d[(t, 2 * j + 1)] = s;
            }
        }
        let norms: Vec<f64> = d.column_iter().map(|c| c.norm()).collect();
        let qr = d.qr();
        let r = qr.r();
        for (i, norm) in norms.iter().enumerate() {
            if !(r[(i, i)].abs() > RANK_TOLERANCE * norm) {
                return None;
            }
        }
        let qty = qr.q().tr_mul(&DVector::from_column_slice(y));
        Some(Self { r, qty })
    }

    pub fn explained(&self) -> f64 {
        self.qty.norm_squared()
    }

    /// Ordinary least-squares coefficients `(D^t D)^-1 D^t y`.
    pub fn coefficients(&self) -> Option<DVector<f64>> {
        self.r.solve_upper_triangular(&self.qty)
    }
}

pub(crate) fn has_near_duplicates(omegas: &[f64]) -> bool {
    for (i, a) in omegas.iter().enumerate() {
        for b in &omegas[i + 1..] {
            if (a - b).abs() < MIN_FREQUENCY_SPACING {
                return true;
            }
        }
    }
    false
}

/// `ln p(y | k, omega, delta2)` up to a constant that depends on `N` only:
/// `-k ln(1 + delta2) - (N/2) ln(y^t P y)` with
/// `P = I - delta2/(1+delta2) D (D^t D)^-1 D^t`.
///
/// Amplitudes (g-prior) and the noise variance (Jeffreys prior) are
/// integrated out. Returns `-inf` for a singular or rank-deficient design.
pub fn log_marginal_likelihood(omegas: &[f64], delta2: f64, y: &[f64]) -> f64 {
    if omegas.iter().any(|&w| !(w > 0.0 && w < PI)) || has_near_duplicates(omegas) {
        return f64::NEG_INFINITY;
    }
    let k = omegas.len();
    let n = y.len() as f64;
    let yty: f64 = y.iter().map(|v| v * v).sum();
    let explained = if k == 0 {
        0.0
    } else {
        match Projection::new(omegas, y) {
            Some(proj) => proj.explained(),
            None => return f64::NEG_INFINITY,
        }
    };
    let shrink = delta2 / (1.0 + delta2);
    let quad = yty - shrink * explained;
    if !(quad > 0.0) || !quad.is_finite() {
        return f64::NEG_INFINITY;
    }
    -(k as f64) * delta2.ln_1p() - 0.5 * n * quad.ln()
}

/// Unnormalized log posterior `ln p(k, omega, delta2 | y)`.
pub fn log_target(omegas: &[f64], delta2: f64, y: &[f64], prior: &TargetPrior) -> f64 {
    let k = omegas.len();
    if k > prior.k_max || !(delta2 > 0.0) {
        return f64::NEG_INFINITY;
    }
    let ln_pk = k as f64 * prior.lambda_k.ln() - ln_factorial(k);
    let ln_omega = -(k as f64) * PI.ln();
    let ln_delta = match prior.delta2_prior {
        Some((shape, scale)) => -(shape + 1.0) * delta2.ln() - scale / delta2,
        None => 0.0,
    };
    let ll = log_marginal_likelihood(omegas, delta2, y);
    if ll == f64::NEG_INFINITY {
        return ll;
    }
    ln_pk + ln_omega + ll + ln_delta
}
