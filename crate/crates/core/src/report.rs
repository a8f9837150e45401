//! Posterior summaries: model selection slots, histogram intensities and the
//! component table comparing the fitted summary model with model selection.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::model::{AllocationVector, SampleSet, SummaryModel};
use crate::robust::robust_location_scale;

/// Robust summary of the draws under the most probable `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct BmsSummary {
    pub k_map: usize,
    pub probability: f64,
    /// `(mu, s)` of each sorted frequency slot.
    pub slots: Vec<(f64, f64)>,
}

/// Restricts to the draws with the a-posteriori most probable `k` (smaller
/// `k` on ties) and summarizes each sorted slot by median and IQR.
pub fn bms_summary(samples: &SampleSet, s_min: f64) -> Result<BmsSummary> {
    let hist = samples.k_histogram();
    let mut k_map = 0;
    for (k, &c) in hist.iter().enumerate() {
        if c > hist[k_map] {
            k_map = k;
        }
    }
    let sorted: Vec<Vec<f64>> = samples
        .samples()
        .iter()
        .filter(|s| s.k() == k_map)
        .map(|s| s.sorted_theta())
        .collect();
    let slots = (0..k_map)
        .map(|slot| {
            let values: Vec<f64> = sorted.iter().map(|t| t[slot]).collect();
            if values.len() < 2 {
                Ok((values[0], s_min))
            } else {
                robust_location_scale(&values, s_min)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BmsSummary {
        k_map,
        probability: hist[k_map] as f64 / samples.len() as f64,
        slots,
    })
}

/// Piecewise-constant intensity over `(0, pi)` with uniform bins; bins are
/// half-open `[lo, hi)` except the last, which is closed.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub bin_width: f64,
    pub values: Vec<f64>,
}

impl Histogram {
    fn from_points(
        points: impl Iterator<Item = f64>,
        n_samples: usize,
        bins: usize,
    ) -> Result<Self> {
        if bins < 2 {
            return Err(Error::Config("need at least 2 bins".into()));
        }
        let bin_width = PI / bins as f64;
        let mut counts = vec![0usize; bins];
        for t in points {
            if !(0.0..=PI).contains(&t) {
                log::warn!("point {t} outside (0, pi) left out of the histogram");
                continue;
            }
            let b = ((t / bin_width) as usize).min(bins - 1);
            counts[b] += 1;
        }
        let scale = 1.0 / (n_samples as f64 * bin_width);
        Ok(Self {
            bin_width,
            values: counts.into_iter().map(|c| c as f64 * scale).collect(),
        })
    }

    pub fn centers(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.values.len()).map(|b| (b as f64 + 0.5) * self.bin_width)
    }

    /// `sum(value * width)`: the expected number of points per sample.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.bin_width
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }
}

/// Intensity of all sampled frequencies, normalized per sample; its integral
/// is the posterior mean of `k`.
pub fn bma_intensity(samples: &SampleSet, bins: usize) -> Result<Histogram> {
    Histogram::from_points(
        samples
            .samples()
            .iter()
            .flat_map(|s| s.theta().iter().copied()),
        samples.len(),
        bins,
    )
}

/// Intensity of the frequencies allocated to the background.
pub fn background_intensity(
    samples: &SampleSet,
    allocations: &[AllocationVector],
    bins: usize,
) -> Result<Histogram> {
    if allocations.len() != samples.len() {
        return Err(Error::domain(format!(
            "{} allocations for {} samples",
            allocations.len(),
            samples.len()
        )));
    }
    let mut points = Vec::new();
    for (x, z) in samples.samples().iter().zip(allocations) {
        if z.len() != x.k() {
            return Err(Error::domain("allocation length does not match the sample"));
        }
        points.extend(
            x.theta()
                .iter()
                .zip(z.labels())
                .filter(|(_, &l)| l == 0)
                .map(|(&t, _)| t),
        );
    }
    Histogram::from_points(points.into_iter(), samples.len(), bins)
}

/// One row of the component table. `None` prints as a dash.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub component: Option<usize>,
    pub mu: Option<f64>,
    pub s: Option<f64>,
    pub pi: Option<f64>,
    pub mu_bms: Option<f64>,
    pub s_bms: Option<f64>,
}

/// Pairs each model-selection slot with the nearest fitted component (closest
/// pairs first) and lists everything by increasing mean.
pub fn summary_table(model: &SummaryModel, bms: &BmsSummary) -> Vec<SummaryRow> {
    let model = model.sorted_by_mean();
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (c, comp) in model.components.iter().enumerate() {
        for (b, &(mu, _)) in bms.slots.iter().enumerate() {
            pairs.push(((comp.mu - mu).abs(), c, b));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut comp_match = vec![None; model.n_components()];
    let mut slot_taken = vec![false; bms.slots.len()];
    for (_, c, b) in pairs {
        if comp_match[c].is_none() && !slot_taken[b] {
            comp_match[c] = Some(b);
            slot_taken[b] = true;
        }
    }
    let mut rows: Vec<SummaryRow> = model
        .components
        .iter()
        .enumerate()
        .map(|(c, comp)| {
            let slot = comp_match[c].map(|b| bms.slots[b]);
            SummaryRow {
                component: Some(c + 1),
                mu: Some(comp.mu),
                s: Some(comp.s()),
                pi: Some(comp.pi),
                mu_bms: slot.map(|s| s.0),
                s_bms: slot.map(|s| s.1),
            }
        })
        .collect();
    for (b, &(mu, s)) in bms.slots.iter().enumerate() {
        if !slot_taken[b] {
            rows.push(SummaryRow {
                component: None,
                mu: None,
                s: None,
                pi: None,
                mu_bms: Some(mu),
                s_bms: Some(s),
            });
        }
    }
    let key = |r: &SummaryRow| r.mu.or(r.mu_bms).unwrap_or(f64::INFINITY);
    rows.sort_by(|a, b| key(a).total_cmp(&key(b)));
    rows
}
