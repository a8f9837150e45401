//! Independent oracles shared by the integration tests. Nothing here calls
//! the library's density code: completed densities, enumeration, quadrature
//! and the sinusoid evidence are rebuilt from their definitions.
#![allow(dead_code)]

use std::f64::consts::PI;
use std::num::NonZeroUsize;

use gauss_quad::GaussLegendre;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use statrs::distribution::{Continuous, ContinuousCDF, Normal as StatNormal};
use statrs::function::gamma::ln_gamma;

use transdim::{AllocationVector, SummaryModel, VariableDimSample};

/// Composite Gauss-Legendre rule: `panels` equal panels of `degree` nodes.
pub struct Composite {
    rule: GaussLegendre,
    panels: usize,
}

impl Composite {
    pub fn new(degree: usize, panels: usize) -> Self {
        Self {
            rule: GaussLegendre::new(NonZeroUsize::new(degree).unwrap()),
            panels,
        }
    }

    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let h = (b - a) / self.panels as f64;
        (0..self.panels)
            .map(|p| {
                let lo = a + p as f64 * h;
                self.rule.integrate(lo, lo + h, &mut f)
            })
            .sum()
    }

    /// Nodes and weights of the whole composite rule.
    pub fn nodes(&self, a: f64, b: f64) -> Vec<(f64, f64)> {
        let h = (b - a) / self.panels as f64;
        let mut out = Vec::new();
        for p in 0..self.panels {
            let lo = a + p as f64 * h;
            for (x, w) in self.rule.iter() {
                out.push((lo + 0.5 * h * (x + 1.0), 0.5 * h * w));
            }
        }
        out
    }
}

/// Halton points in `[0, 1)^dims` (bases 2, 3, 5, ...), skipping the origin.
pub fn halton_points(n: usize, dims: usize) -> Vec<Vec<f64>> {
    const BASES: [u8; 6] = [2, 3, 5, 7, 11, 13];
    (1..=n)
        .map(|i| (0..dims).map(|d| halton::number(BASES[d], i)).collect())
        .collect()
}

// ---------------------------------------------------------------- summary model

/// Admissible allocations by brute force over `{0..L}^k`.
pub fn brute_allocations(k: usize, n_labels: usize) -> Vec<Vec<usize>> {
    let total = (n_labels + 1).pow(k as u32);
    let mut out = Vec::new();
    for code in 0..total {
        let mut c = code;
        let z: Vec<usize> = (0..k)
            .map(|_| {
                let l = c % (n_labels + 1);
                c /= n_labels + 1;
                l
            })
            .collect();
        let mut seen = vec![false; n_labels + 1];
        if z.iter().all(|&l| {
            if l == 0 {
                return true;
            }
            let fresh = !seen[l];
            seen[l] = true;
            fresh
        }) {
            out.push(z);
        }
    }
    out
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// Completed density in the linear domain, from its definition.
pub fn completed_density(theta: &[f64], z: &[usize], model: &SummaryModel) -> f64 {
    let k = theta.len();
    let lambda0 = model.eta * model.theta_volume;
    let mut p = (-lambda0).exp() / factorial(k);
    let mut present = vec![false; model.components.len()];
    for (&t, &l) in theta.iter().zip(z) {
        if l == 0 {
            p *= lambda0 / model.theta_volume;
        } else {
            let c = &model.components[l - 1];
            p *= StatNormal::new(c.mu, c.s2.sqrt()).unwrap().pdf(t);
            present[l - 1] = true;
        }
    }
    for (c, &on) in model.components.iter().zip(&present) {
        p *= if on { c.pi } else { 1.0 - c.pi };
    }
    p
}

pub fn marginal_density(theta: &[f64], model: &SummaryModel) -> f64 {
    brute_allocations(theta.len(), model.components.len())
        .iter()
        .map(|z| completed_density(theta, z, model))
        .sum()
}

/// Exact allocation posterior from the oracle densities.
pub fn allocation_posterior(theta: &[f64], model: &SummaryModel) -> Vec<(Vec<usize>, f64)> {
    let zs = brute_allocations(theta.len(), model.components.len());
    let w: Vec<f64> = zs
        .iter()
        .map(|z| completed_density(theta, z, model))
        .collect();
    let total: f64 = w.iter().sum();
    zs.into_iter().zip(w).map(|(z, w)| (z, w / total)).collect()
}

/// Exact probability mass of `{k points}` inside `(0, pi)^k`, from the
/// Gaussian masses of each component in `(0, pi)`.
pub fn k_mass_closed_form(k: usize, model: &SummaryModel) -> f64 {
    let lambda0 = model.eta * model.theta_volume;
    let inside: Vec<f64> = model
        .components
        .iter()
        .map(|c| {
            let n = StatNormal::new(c.mu, c.s2.sqrt()).unwrap();
            n.cdf(PI) - n.cdf(0.0)
        })
        .collect();
    // every allocation integrates to (1/k!) e^-L0 L0^n0 prod(presence) prod(mass)
    brute_allocations(k, model.components.len())
        .iter()
        .map(|z| {
            let n0 = z.iter().filter(|&&l| l == 0).count();
            let mut p = (-lambda0).exp() * lambda0.powi(n0 as i32) / factorial(k);
            for (l, c) in model.components.iter().enumerate() {
                if z.contains(&(l + 1)) {
                    p *= c.pi * inside[l];
                } else {
                    p *= 1.0 - c.pi;
                }
            }
            p
        })
        .sum()
}

/// Draws `M` samples from the generative model: each component present with
/// probability `pi_l`, a Poisson number of uniform background points, and a
/// uniformly random ordering.
pub fn generate<R: Rng>(model: &SummaryModel, m: usize, rng: &mut R) -> Vec<VariableDimSample> {
    let lambda0 = model.eta * model.theta_volume;
    (0..m)
        .map(|_| {
            let mut theta = Vec::new();
            for c in &model.components {
                if rng.random::<f64>() < c.pi {
                    theta.push(Normal::new(c.mu, c.s2.sqrt()).unwrap().sample(rng));
                }
            }
            if lambda0 > 0.0 {
                let n0 = Poisson::new(lambda0).unwrap().sample(rng) as usize;
                for _ in 0..n0 {
                    theta.push(rng.random::<f64>() * model.theta_volume);
                }
            }
            theta.shuffle(rng);
            VariableDimSample::new(theta).unwrap()
        })
        .collect()
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Empirical distribution of allocations aligned with `table`.
pub fn empirical_over(table: &[(Vec<usize>, f64)], draws: &[AllocationVector]) -> Vec<f64> {
    let mut counts = vec![0usize; table.len()];
    for z in draws {
        let idx = table
            .iter()
            .position(|(t, _)| t.as_slice() == z.labels())
            .expect("draw outside the admissible set");
        counts[idx] += 1;
    }
    counts
        .into_iter()
        .map(|c| c as f64 / draws.len() as f64)
        .collect()
}

// ------------------------------------------------------------------- sinusoids

/// `ln p(y | omega, delta2)` with amplitudes and noise variance integrated
/// numerically: `(a_cos, a_sin)` on a Gauss-Legendre box around the
/// conditional mean, `ln sigma2` on a composite rule. One frequency only.
pub fn brute_log_evidence_k1(y: &[f64], omega: f64, delta2: f64) -> f64 {
    let n = y.len();
    let (mut g11, mut g12, mut g22, mut b1, mut b2, mut yy) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for (t, &v) in y.iter().enumerate() {
        let c = (omega * t as f64).cos();
        let s = (omega * t as f64).sin();
        g11 += c * c;
        g12 += c * s;
        g22 += s * s;
        b1 += c * v;
        b2 += s * v;
        yy += v * v;
    }
    let det = g11 * g22 - g12 * g12;
    // least squares and the g-prior shrinkage, for centering the grid only
    let ls1 = (g22 * b1 - g12 * b2) / det;
    let ls2 = (g11 * b2 - g12 * b1) / det;
    let shrink = delta2 / (1.0 + delta2);
    let (c1, c2) = (shrink * ls1, shrink * ls2);
    let inv11 = g22 / det;
    let inv22 = g11 / det;
    // |y - D a|^2 expanded through the Gram entries
    let rss = |a1: f64, a2: f64| -> f64 {
        yy - 2.0 * (a1 * b1 + a2 * b2) + g11 * a1 * a1 + 2.0 * g12 * a1 * a2 + g22 * a2 * a2
    };
    let quad_guess = yy - shrink * (b1 * ls1 + b2 * ls2);
    let u0 = (quad_guess / n as f64).ln();
    let outer = Composite::new(20, 12);
    let inner = Composite::new(24, 6);
    let ln_det_g = det.ln();
    let nf = n as f64;
    // integrand scaled by exp(-shift) to stay in range
    let shift = -0.5 * nf * (2.0 * PI * quad_guess / nf).ln() - 0.5 * nf;
    let total = outer.integrate(u0 - 8.0, u0 + 12.0, |u| {
        let s2 = u.exp();
        let sd1 = 10.0 * (s2 * shrink * inv11).sqrt();
        let sd2 = 10.0 * (s2 * shrink * inv22).sqrt();
        let inner_val = inner.integrate(c1 - sd1, c1 + sd1, |a1| {
            inner.integrate(c2 - sd2, c2 + sd2, |a2| {
                let ln_lik = -0.5 * nf * (2.0 * PI * s2).ln() - rss(a1, a2) / (2.0 * s2);
                let agq = g11 * a1 * a1 + 2.0 * g12 * a1 * a2 + g22 * a2 * a2;
                let ln_prior =
                    -(2.0 * PI * s2 * delta2).ln() + 0.5 * ln_det_g - agq / (2.0 * s2 * delta2);
                (ln_lik + ln_prior - shift).exp()
            })
        });
        // Jeffreys 1/sigma2 cancels the Jacobian sigma2 of u = ln sigma2
        inner_val
    });
    total.ln() + shift
}

/// The constant dropped from the closed-form evidence:
/// `ln Gamma(N/2) - (N/2) ln pi`.
pub fn evidence_constant(n: usize) -> f64 {
    ln_gamma(0.5 * n as f64) - 0.5 * n as f64 * PI.ln()
}

/// Posterior of `k` for `k_max = 2` by gridding the frequencies. The second
/// axis uses a different panel count so nodes never coincide.
pub fn grid_k_posterior(log_target: impl Fn(&[f64]) -> f64) -> [f64; 3] {
    let a = Composite::new(8, 64).nodes(0.0, PI);
    let b = Composite::new(8, 61).nodes(0.0, PI);
    let l0 = log_target(&[]);
    let z0 = 1.0;
    let z1: f64 = a
        .iter()
        .map(|&(w, h)| h * (log_target(&[w]) - l0).exp())
        .sum();
    let mut z2 = 0.0;
    for &(w1, h1) in &a {
        for &(w2, h2) in &b {
            z2 += h1 * h2 * (log_target(&[w1, w2]) - l0).exp();
        }
    }
    let total = z0 + z1 + z2;
    [z0 / total, z1 / total, z2 / total]
}
