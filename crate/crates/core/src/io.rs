//! File formats. JSON numbers and CSV fields use the shortest decimal that
//! round-trips, so identical runs produce byte-identical files.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::FORMAT_VERSION;
use crate::error::{Error, Result};
use crate::model::{AllocationVector, SampleMeta, SampleSet, SummaryModel, VariableDimSample};
use crate::report::{Histogram, SummaryRow};
use crate::sem::SemTrace;

#[derive(Serialize, Deserialize)]
struct SampleRecord {
    i: u64,
    k: usize,
    theta: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct AllocationRecord {
    i: u64,
    z: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Versioned<T> {
    format_version: u32,
    #[serde(flatten)]
    body: T,
}

fn check_version(found: u32, path: &Path) -> Result<()> {
    if found != FORMAT_VERSION {
        return Err(Error::Parse {
            location: path.display().to_string(),
            message: format!("unsupported format_version {found}"),
        });
    }
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Sweep index of the `idx`-th retained draw.
fn sweep_index(meta: &SampleMeta, idx: usize) -> u64 {
    if meta.thinning == 0 {
        idx as u64 + 1
    } else {
        (meta.burn_in + (idx + 1) * meta.thinning) as u64
    }
}

/// Sidecar metadata file written next to a sample file.
pub fn meta_path(samples_path: &Path) -> PathBuf {
    let mut name = samples_path
        .file_stem()
        .map(|s| s.to_os_string())
        .unwrap_or_default();
    name.push(".meta.json");
    samples_path.with_file_name(name)
}

pub fn write_samples_to<W: Write>(set: &SampleSet, mut w: W) -> Result<()> {
    for (idx, s) in set.samples().iter().enumerate() {
        let rec = SampleRecord {
            i: sweep_index(&set.meta, idx),
            k: s.k(),
            theta: s.theta().to_vec(),
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_samples_from<R: Read>(r: R, source: &str) -> Result<Vec<VariableDimSample>> {
    let mut out = Vec::new();
    for (n, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let location = || format!("{source}:{}", n + 1);
        let rec: SampleRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            location: location(),
            message: e.to_string(),
        })?;
        if rec.k != rec.theta.len() {
            return Err(Error::Parse {
                location: location(),
                message: format!("k={} but {} values in theta", rec.k, rec.theta.len()),
            });
        }
        out.push(VariableDimSample::new(rec.theta).map_err(|e| Error::Parse {
            location: location(),
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Writes the newline-delimited sample file and its metadata sidecar.
pub fn write_samples(path: &Path, set: &SampleSet) -> Result<()> {
    write_samples_to(set, create(path)?)?;
    write_json(
        &meta_path(path),
        &Versioned {
            format_version: FORMAT_VERSION,
            body: set.meta.clone(),
        },
    )
}

/// Reads a sample file; the sidecar is optional.
pub fn read_samples(path: &Path) -> Result<SampleSet> {
    let samples = read_samples_from(File::open(path)?, &path.display().to_string())?;
    let sidecar = meta_path(path);
    let meta = if sidecar.exists() {
        let v: Versioned<SampleMeta> = read_json(&sidecar)?;
        check_version(v.format_version, &sidecar)?;
        v.body
    } else {
        SampleMeta::default()
    };
    SampleSet::new(samples, meta)
}

/// Pretty-printed JSON followed by a newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    serde_json::from_reader(BufReader::new(File::open(path)?)).map_err(|e| Error::Parse {
        location: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn write_model(path: &Path, model: &SummaryModel) -> Result<()> {
    write_json(
        path,
        &Versioned {
            format_version: FORMAT_VERSION,
            body: model.clone(),
        },
    )
}

pub fn read_model(path: &Path) -> Result<SummaryModel> {
    let v: Versioned<SummaryModel> = read_json(path)?;
    check_version(v.format_version, path)?;
    v.body.validate()?;
    Ok(v.body)
}

/// One value per line, no header.
pub fn write_y(path: &Path, y: &[f64]) -> Result<()> {
    let mut w = create(path)?;
    for v in y {
        writeln!(w, "{v}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_y(path: &Path) -> Result<Vec<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)?;
    let mut y = Vec::new();
    for (n, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != 1 {
            return Err(Error::Parse {
                location: format!("{}:{}", path.display(), n + 1),
                message: format!("expected one value, found {}", record.len()),
            });
        }
        let v: f64 = record[0].trim().parse().map_err(|e| Error::Parse {
            location: format!("{}:{}", path.display(), n + 1),
            message: format!("{e}"),
        })?;
        if !v.is_finite() {
            return Err(Error::Parse {
                location: format!("{}:{}", path.display(), n + 1),
                message: "value is not finite".into(),
            });
        }
        y.push(v);
    }
    if y.is_empty() {
        return Err(Error::Parse {
            location: path.display().to_string(),
            message: "no observations".into(),
        });
    }
    Ok(y)
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_else(|| "-".into())
}

/// Columns `iteration, J, mu_l, s_l, pi_l (per component), eta`.
pub fn write_trace(path: &Path, trace: &SemTrace) -> Result<()> {
    let n_labels = trace
        .iterations
        .first()
        .map(|it| it.model.n_components())
        .unwrap_or(0);
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["iteration".to_string(), "J".to_string()];
    for l in 1..=n_labels {
        header.extend([format!("mu_{l}"), format!("s_{l}"), format!("pi_{l}")]);
    }
    header.push("eta".into());
    w.write_record(&header)?;
    for (r, it) in trace.iterations.iter().enumerate() {
        let mut row = vec![(r + 1).to_string(), num(it.criterion)];
        for c in &it.model.components {
            row.extend([num(c.mu), num(c.s()), num(c.pi)]);
        }
        row.push(num(it.model.eta));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_allocations(
    path: &Path,
    meta: &SampleMeta,
    allocations: &[AllocationVector],
) -> Result<()> {
    let mut w = create(path)?;
    for (idx, z) in allocations.iter().enumerate() {
        let rec = AllocationRecord {
            i: sweep_index(meta, idx),
            z: z.labels().to_vec(),
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads allocations for a model with `n_labels` Gaussian components.
pub fn read_allocations(path: &Path, n_labels: usize) -> Result<Vec<AllocationVector>> {
    let mut out = Vec::new();
    for (n, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            location: format!("{}:{}", path.display(), n + 1),
            message,
        };
        let rec: AllocationRecord =
            serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        out.push(AllocationVector::new(rec.z, n_labels).map_err(|e| parse_err(e.to_string()))?);
    }
    Ok(out)
}

/// Component table with dashes for missing entries.
pub fn write_summary_table(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["component", "mu", "s", "pi", "mu_bms", "s_bms"])?;
    for r in rows {
        w.write_record([
            r.component
                .map(|c| c.to_string())
                .unwrap_or_else(|| "-".into()),
            opt(r.mu),
            opt(r.s),
            opt(r.pi),
            opt(r.mu_bms),
            opt(r.s_bms),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Columns `center, bma, background, mixture`.
pub fn write_intensities(
    path: &Path,
    bma: &Histogram,
    background: &Histogram,
    model: &SummaryModel,
) -> Result<()> {
    if bma.values.len() != background.values.len() {
        return Err(Error::domain("histograms differ in bin count"));
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["center", "bma", "background", "mixture"])?;
    for ((center, b), g) in bma.centers().zip(&bma.values).zip(&background.values) {
        w.write_record([
            num(center),
            num(*b),
            num(*g),
            num(model.gaussian_intensity(center)),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Columns `k, probability`: the empirical posterior of the model order.
pub fn write_k_posterior(path: &Path, samples: &SampleSet) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["k", "probability"])?;
    for (k, p) in samples.k_probabilities().into_iter().enumerate() {
        w.write_record([k.to_string(), num(p)])?;
    }
    w.flush()?;
    Ok(())
}
