//! Stage orchestration: observation, sampling, summary fit and reports.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{PipelineConfig, ReportConfig, SceneConfig, FORMAT_VERSION};
use crate::error::Error;
use crate::io;
use crate::model::{AllocationVector, SampleSet, SummaryModel};
use crate::report::{
    background_intensity, bma_intensity, bms_summary, summary_table, BmsSummary, Histogram,
    SummaryRow,
};
use crate::sem::{run_sem, SemConfig, SemResult};
use crate::sinusoids::{
    run_sampler, synthesize_signal, AcceptanceStats, SamplerConfig, SamplerRun,
};

pub const Y_FILE: &str = "y.csv";
pub const SAMPLES_FILE: &str = "samples.ndjson";
pub const ACCEPTANCE_FILE: &str = "acceptance.json";
pub const MODEL_FILE: &str = "model.json";
pub const TRACE_FILE: &str = "trace.csv";
pub const ALLOCATIONS_FILE: &str = "allocations.ndjson";
pub const SUMMARY_TABLE_FILE: &str = "summary_table.csv";
pub const INTENSITIES_FILE: &str = "intensities.csv";
pub const K_POSTERIOR_FILE: &str = "k_posterior.csv";

/// Pipeline stage, used to tag failures with a distinct exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Observation,
    Sample,
    Fit,
    Report,
}

impl Stage {
    pub fn exit_code(self) -> i32 {
        match self {
            Stage::Config => 3,
            Stage::Observation => 4,
            Stage::Sample => 5,
            Stage::Fit => 6,
            Stage::Report => 7,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Stage::Config => "config",
            Stage::Observation => "observation",
            Stage::Sample => "sample",
            Stage::Fit => "fit",
            Stage::Report => "report",
        }
    }
}

#[derive(Debug)]
pub struct StageError {
    pub stage: Stage,
    pub source: Error,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} stage failed: {}", self.stage.name(), self.source)
    }
}

impl std::error::Error for StageError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.source)
    }
}

pub type StageResult<T> = std::result::Result<T, StageError>;

trait InStage<T> {
    fn stage(self, stage: Stage) -> StageResult<T>;
}

impl<T> InStage<T> for crate::Result<T> {
    fn stage(self, stage: Stage) -> StageResult<T> {
        self.map_err(|source| StageError { stage, source })
    }
}

#[derive(Debug, Serialize)]
struct MoveReport {
    proposed: u64,
    accepted: u64,
    rate: f64,
}

#[derive(Debug, Serialize)]
struct AcceptanceReport {
    format_version: u32,
    birth: MoveReport,
    death: MoveReport,
    update: MoveReport,
    delta2: MoveReport,
    final_delta2: f64,
}

fn acceptance_report(stats: &AcceptanceStats, final_delta2: f64) -> AcceptanceReport {
    let m = |s: &crate::sinusoids::MoveStats| MoveReport {
        proposed: s.proposed,
        accepted: s.accepted,
        rate: s.rate(),
    };
    AcceptanceReport {
        format_version: FORMAT_VERSION,
        birth: m(&stats.birth),
        death: m(&stats.death),
        update: m(&stats.update),
        delta2: m(&stats.delta2),
        final_delta2,
    }
}

/// The observation: read from `y_file` or synthesized from the scene.
pub fn observation(scene: &SceneConfig) -> crate::Result<Vec<f64>> {
    match &scene.y_file {
        Some(path) => io::read_y(path),
        None => Ok(synthesize_signal(&scene.build()?, scene.noise_seed)),
    }
}

/// Summaries built from samples, a fitted model and final allocations.
#[derive(Debug, Clone)]
pub struct Reports {
    pub bms: BmsSummary,
    pub table: Vec<SummaryRow>,
    pub bma: Histogram,
    pub background: Histogram,
}

pub fn build_reports(
    samples: &SampleSet,
    model: &SummaryModel,
    allocations: &[AllocationVector],
    report: &ReportConfig,
    s_min: f64,
) -> crate::Result<Reports> {
    let bms = bms_summary(samples, s_min)?;
    let table = summary_table(model, &bms);
    Ok(Reports {
        table,
        bma: bma_intensity(samples, report.bins)?,
        background: background_intensity(samples, allocations, report.bins)?,
        bms,
    })
}

/// Everything the pipeline computes, before anything is written.
#[derive(Debug, Clone)]
pub struct PipelineOutputs {
    pub y: Vec<f64>,
    pub sampler: SamplerRun,
    pub sem: SemResult,
    pub reports: Reports,
}

/// Runs all stages in memory.
pub fn compute_pipeline(config: &PipelineConfig) -> StageResult<PipelineOutputs> {
    config.validate().stage(Stage::Config)?;
    let y = observation(&config.scene).stage(Stage::Observation)?;
    let sampler = run_sampler(&y, &config.sampler).stage(Stage::Sample)?;
    let sem = run_sem(&sampler.samples, &config.sem).stage(Stage::Fit)?;
    let reports = build_reports(
        &sampler.samples,
        &sem.model,
        &sem.allocations,
        &config.report,
        config.sem.s_min,
    )
    .stage(Stage::Report)?;
    Ok(PipelineOutputs {
        y,
        sampler,
        sem,
        reports,
    })
}

fn ensure_dir(dir: &Path) -> crate::Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn write_sample_stage(dir: &Path, y: &[f64], run: &SamplerRun) -> crate::Result<()> {
    ensure_dir(dir)?;
    io::write_y(&dir.join(Y_FILE), y)?;
    io::write_samples(&dir.join(SAMPLES_FILE), &run.samples)?;
    io::write_json(
        &dir.join(ACCEPTANCE_FILE),
        &acceptance_report(&run.acceptance, run.final_state.delta2),
    )
}

fn write_fit_stage(dir: &Path, samples: &SampleSet, sem: &SemResult) -> crate::Result<()> {
    ensure_dir(dir)?;
    io::write_model(&dir.join(MODEL_FILE), &sem.model)?;
    io::write_trace(&dir.join(TRACE_FILE), &sem.trace)?;
    io::write_allocations(&dir.join(ALLOCATIONS_FILE), &samples.meta, &sem.allocations)
}

fn write_report_stage(
    dir: &Path,
    samples: &SampleSet,
    model: &SummaryModel,
    reports: &Reports,
) -> crate::Result<()> {
    ensure_dir(dir)?;
    io::write_summary_table(&dir.join(SUMMARY_TABLE_FILE), &reports.table)?;
    io::write_intensities(
        &dir.join(INTENSITIES_FILE),
        &reports.bma,
        &reports.background,
        model,
    )?;
    io::write_k_posterior(&dir.join(K_POSTERIOR_FILE), samples)
}

pub fn write_outputs(dir: &Path, out: &PipelineOutputs) -> StageResult<()> {
    write_sample_stage(dir, &out.y, &out.sampler).stage(Stage::Sample)?;
    write_fit_stage(dir, &out.sampler.samples, &out.sem).stage(Stage::Fit)?;
    write_report_stage(dir, &out.sampler.samples, &out.sem.model, &out.reports).stage(Stage::Report)
}

/// Output directory: explicit argument, then the config, then `out`.
pub fn output_dir(explicit: Option<&Path>, config: &PipelineConfig) -> PathBuf {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"))
}

/// `sample`: observation and reversible-jump draws.
pub fn run_sample(config: &PipelineConfig, dir: &Path) -> StageResult<SamplerRun> {
    config.validate().stage(Stage::Config)?;
    let y = observation(&config.scene).stage(Stage::Observation)?;
    let run = run_sampler(&y, &config.sampler).stage(Stage::Sample)?;
    write_sample_stage(dir, &y, &run).stage(Stage::Sample)?;
    Ok(run)
}

/// `fit`: summary model from a sample file.
pub fn run_fit(samples_path: &Path, sem: &SemConfig, dir: &Path) -> StageResult<SemResult> {
    sem.validate().stage(Stage::Config)?;
    let samples = io::read_samples(samples_path).stage(Stage::Fit)?;
    let result = run_sem(&samples, sem).stage(Stage::Fit)?;
    write_fit_stage(dir, &samples, &result).stage(Stage::Fit)?;
    Ok(result)
}

/// `report`: tables and intensities from samples, model and allocations.
pub fn run_report(
    samples_path: &Path,
    model_path: &Path,
    allocations_path: &Path,
    report: &ReportConfig,
    s_min: f64,
    dir: &Path,
) -> StageResult<Reports> {
    let samples = io::read_samples(samples_path).stage(Stage::Report)?;
    let model = io::read_model(model_path).stage(Stage::Report)?;
    let allocations =
        io::read_allocations(allocations_path, model.n_components()).stage(Stage::Report)?;
    let reports =
        build_reports(&samples, &model, &allocations, report, s_min).stage(Stage::Report)?;
    write_report_stage(dir, &samples, &model, &reports).stage(Stage::Report)?;
    Ok(reports)
}

/// `pipeline`: every stage, all artifacts in `dir`.
pub fn run_pipeline(config: &PipelineConfig, dir: &Path) -> StageResult<PipelineOutputs> {
    let out = compute_pipeline(config)?;
    write_outputs(dir, &out)?;
    Ok(out)
}

/// Small default configuration for smoke runs.
pub fn quick_config(seed: u64) -> PipelineConfig {
    let mut c = PipelineConfig::default().with_seed(seed);
    c.sampler = SamplerConfig {
        n_sweeps: 6000,
        burn_in: 1000,
        thinning: 5,
        seed: c.sampler.seed,
        ..SamplerConfig::default()
    };
    c.sem.n_iterations = 15;
    c.sem.averaging_window = 5;
    c.report.bins = 64;
    c
}
