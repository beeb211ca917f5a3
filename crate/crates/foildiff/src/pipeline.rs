//! The four pipeline stages. Each reads its inputs, writes its artifacts
//! under the output directory, and returns what it wrote.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use foildiff_core::aero::FlowCondition;
use foildiff_core::checkpoint::{CheckpointError, ModelCheckpoint};
use foildiff_core::denoiser::ConditionKind;
use foildiff_core::diffusion::{self, derive_seed, DiffusionError, NoiseSchedule, ScheduleParams};
use foildiff_core::eval::{
    distribution_report, fidelity_analysis, novelty_analysis, BoxStats, Cohort, EvalError, EvalReport,
    FidelityResult, NoveltyResult, ProfileRow, Quantity, Summary,
};
use foildiff_core::geometry::{from_canonical, to_selig_string, CanonicalSample};
use foildiff_core::trainer::{self, TrainError, TrainObserver, TrainRecord, TrainingData};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::archive::{self, io_err, ArchiveError, DatasetArchive, Rejection, ARCHIVE_FILE};
use crate::config::{ConfigError, PipelineConfig};
use crate::svg;

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const TRAIN_LOG_FILE: &str = "train_log.jsonl";
pub const SAMPLES_DIR: &str = "samples";
pub const MANIFEST_FILE: &str = "manifest.csv";
pub const REPORT_DIR: &str = "report";

/// Separates the holdout permutation from every other seeded stream.
const HOLDOUT_STREAM: u64 = 0x686f_6c64_6f75_74;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Archive(#[from] ArchiveError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("no valid profiles in {0}")]
    NoValidProfiles(PathBuf),
    #[error("{path}: {source}")]
    Checkpoint {
        path: PathBuf,
        source: CheckpointError,
    },
    #[error("checkpoint {path} was trained with schedule {model:?} but the config uses {config:?}")]
    CheckpointScheduleMismatch {
        path: PathBuf,
        model: ScheduleParams,
        config: ScheduleParams,
    },
    #[error("checkpoint {path} is conditioned on {trained}, not {requested}")]
    ConditionKindMismatch {
        path: PathBuf,
        trained: ConditionKind,
        requested: ConditionKind,
    },
    #[error("conditional sampling needs both a minimum and a maximum target")]
    MissingRange,
    #[error("no archive entry has a {0} value")]
    NoConditioningValues(ConditionKind),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Diffusion(DiffusionError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
}

pub type Result<T> = std::result::Result<T, PipelineError>;

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(io_err(path))?;
    Ok(())
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(io_err(path))?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<ModelCheckpoint> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    ModelCheckpoint::from_bytes(&bytes).map_err(|source| PipelineError::Checkpoint {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Debug, Clone)]
pub struct IngestOutcome {
    pub archive_path: PathBuf,
    pub archive: DatasetArchive,
}

/// Canonicalizes every coordinate file of `data_dir` into
/// `output_dir/dataset.json`.
pub fn ingest(data_dir: &Path, output_dir: &Path, flow: &FlowCondition) -> Result<IngestOutcome> {
    let archive = archive::build_archive(data_dir, flow)?;
    if archive.entries.is_empty() {
        return Err(PipelineError::NoValidProfiles(data_dir.to_path_buf()));
    }
    create_dir(output_dir)?;
    let archive_path = output_dir.join(ARCHIVE_FILE);
    archive.write(&archive_path)?;
    Ok(IngestOutcome { archive_path, archive })
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint_path: PathBuf,
    pub log_path: PathBuf,
    pub checkpoint: ModelCheckpoint,
    pub records: Vec<TrainRecord>,
    /// Number of profiles trained on.
    pub profiles: usize,
    /// Entries left out because the conditioning value is unknown.
    pub excluded: Vec<Rejection>,
    /// Entries withheld by the holdout fraction.
    pub held_out: Vec<String>,
}

struct LogObserver<'a> {
    start: Instant,
    log: String,
    records: Vec<TrainRecord>,
    checkpoint_dir: PathBuf,
    error: Option<PipelineError>,
    progress: &'a mut dyn FnMut(&TrainRecord),
}

impl TrainObserver for LogObserver<'_> {
    fn elapsed(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }

    fn on_record(&mut self, record: &TrainRecord) {
        self.log.push_str(&serde_json::to_string(record).unwrap_or_default());
        self.log.push('\n');
        self.records.push(*record);
        (self.progress)(record);
    }

    fn on_checkpoint(&mut self, checkpoint: &ModelCheckpoint) {
        if self.error.is_some() {
            return;
        }
        let path = self
            .checkpoint_dir
            .join(format!("step_{:06}.ckpt", checkpoint.metadata.steps));
        let result = create_dir(&self.checkpoint_dir).and_then(|_| write_file(&path, checkpoint.to_bytes()));
        self.error = result.err();
    }
}

/// Trains on the archive at `dataset` and writes `model.ckpt` and the
/// line-delimited training log. `progress` sees every record.
pub fn train(
    config: &PipelineConfig,
    dataset: &Path,
    output_dir: &Path,
    progress: &mut dyn FnMut(&TrainRecord),
) -> Result<TrainOutcome> {
    config.validate()?;
    let archive = DatasetArchive::read(dataset)?;
    let kind = config.conditioning.kind;

    let mut excluded = Vec::new();
    let mut usable = Vec::new();
    for e in &archive.entries {
        match (kind, e.value(kind)) {
            (ConditionKind::None, _) => usable.push(e),
            (_, Some(v)) if v.is_finite() => usable.push(e),
            _ => excluded.push(Rejection {
                file: e.file.clone(),
                reason: e.aero_error.clone().unwrap_or_else(|| format!("no {kind} value")),
            }),
        }
    }
    if usable.is_empty() && kind != ConditionKind::None {
        return Err(PipelineError::NoConditioningValues(kind));
    }

    // Withhold the entries with the smallest seeded keys.
    let held = (config.train.holdout * usable.len() as f64).floor() as usize;
    let mut order: Vec<usize> = (0..usable.len()).collect();
    let hold_seed = derive_seed(config.seed, HOLDOUT_STREAM);
    order.sort_by_key(|i| (derive_seed(hold_seed, *i as u64), *i));
    let mut withheld: Vec<usize> = order[..held].to_vec();
    withheld.sort_unstable();
    let held_out = withheld.iter().map(|i| usable[*i].file.clone()).collect();
    let kept: Vec<_> = (0..usable.len())
        .filter(|i| withheld.binary_search(i).is_err())
        .map(|i| usable[i])
        .collect();

    let samples: Vec<CanonicalSample> = kept.iter().map(|e| e.sample()).collect();
    let values: Vec<f64> = kept.iter().filter_map(|e| e.value(kind)).collect();
    let data = TrainingData {
        samples: &samples,
        kind,
        values: if kind == ConditionKind::None { &[] } else { &values },
    };

    create_dir(output_dir)?;
    let mut observer = LogObserver {
        start: Instant::now(),
        log: String::new(),
        records: Vec::new(),
        checkpoint_dir: output_dir.join("checkpoints"),
        error: None,
        progress,
    };
    let result = trainer::train(&data, &config.train_config(), config.model, &config.schedule, &mut observer);
    let log_path = output_dir.join(TRAIN_LOG_FILE);
    write_file(&log_path, &observer.log)?;
    let checkpoint = result?;
    if let Some(e) = observer.error {
        return Err(e);
    }
    let checkpoint_path = output_dir.join(CHECKPOINT_FILE);
    write_file(&checkpoint_path, checkpoint.to_bytes())?;
    Ok(TrainOutcome {
        checkpoint_path,
        log_path,
        checkpoint,
        records: observer.records,
        profiles: samples.len(),
        excluded,
        held_out,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub file: String,
    pub kind: ConditionKind,
    /// Target in natural units; empty for unconditional samples.
    pub target: Option<f64>,
    pub seed: u64,
    pub guidance_scale: f64,
}

#[derive(Debug, Clone)]
pub struct SampleOutcome {
    pub dir: PathBuf,
    pub manifest_path: PathBuf,
    pub rows: Vec<ManifestRow>,
}

/// `count` values evenly spaced from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        n => (0..n)
            .map(|i| if i == n - 1 { hi } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 })
            .collect(),
    }
}

/// Draws `config.sample.count` profiles into `output_dir/samples`, one
/// Selig file each, plus `manifest.csv`.
pub fn sample(config: &PipelineConfig, checkpoint_path: &Path, output_dir: &Path) -> Result<SampleOutcome> {
    config.validate()?;
    let checkpoint = read_checkpoint(checkpoint_path)?;
    if checkpoint.schedule != config.schedule {
        return Err(PipelineError::CheckpointScheduleMismatch {
            path: checkpoint_path.to_path_buf(),
            model: checkpoint.schedule,
            config: config.schedule,
        });
    }
    let schedule = NoiseSchedule::from_params(&config.schedule).map_err(PipelineError::Diffusion)?;

    let c = &config.conditioning;
    let ranged = c.min.is_some() || c.max.is_some();
    let kind = if c.kind == ConditionKind::None && ranged {
        checkpoint.conditioning.kind
    } else {
        c.kind
    };
    if kind != ConditionKind::None && kind != checkpoint.conditioning.kind {
        return Err(PipelineError::ConditionKindMismatch {
            path: checkpoint_path.to_path_buf(),
            trained: checkpoint.conditioning.kind,
            requested: kind,
        });
    }
    let count = config.sample.count;
    let raw_targets = match (kind, c.min, c.max) {
        (ConditionKind::None, _, _) => None,
        (_, Some(lo), Some(hi)) => Some(linspace(lo, hi, count)),
        _ => return Err(PipelineError::MissingRange),
    };
    let normalized: Option<Vec<f64>> = raw_targets
        .as_ref()
        .map(|t| t.iter().map(|v| checkpoint.conditioning.normalize(*v)).collect());

    let samples = diffusion::sample(
        &checkpoint,
        &schedule,
        normalized.as_deref(),
        &config.guidance,
        config.seed,
        count,
    )
    .map_err(PipelineError::Diffusion)?;

    let dir = output_dir.join(SAMPLES_DIR);
    create_dir(&dir)?;
    let mut rows = Vec::with_capacity(count);
    for (i, s) in samples.iter().enumerate() {
        let file = format!("sample_{i:04}.dat");
        let profile = from_canonical(s, format!("foildiff sample {i}"));
        write_file(&dir.join(&file), to_selig_string(&profile))?;
        rows.push(ManifestRow {
            file,
            kind,
            target: raw_targets.as_ref().map(|t| t[i]),
            seed: derive_seed(config.seed, i as u64),
            guidance_scale: config.guidance.scale,
        });
    }
    let manifest_path = dir.join(MANIFEST_FILE);
    write_manifest(&manifest_path, &rows)?;
    Ok(SampleOutcome {
        dir,
        manifest_path,
        rows,
    })
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> PipelineError + '_ {
    move |source| PipelineError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_manifest(path: &Path, rows: &[ManifestRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    for r in rows {
        w.serialize(r).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    r.deserialize().map(|row| row.map_err(csv_err(path))).collect()
}

/// One generated profile as evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedRow {
    pub file: String,
    pub target: Option<f64>,
    /// Why the file could not be read, if it could not.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub training_count: usize,
    pub generated_count: usize,
    pub unreadable: usize,
    pub evaluation_failures: usize,
    pub condition_kind: ConditionKind,
    pub mae: Option<f64>,
    pub slope: Option<f64>,
    pub chamfer: Option<Summary>,
    pub max_lift_to_drag: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub summary: ReportSummary,
    pub generated: Vec<GeneratedRow>,
    pub evaluation: EvalReport,
    /// Why fidelity statistics are missing, when they are.
    pub fidelity_note: Option<String>,
}

impl RunReport {
    pub fn summary_text(&self) -> String {
        let s = &self.summary;
        let mut out = format!(
            "profiles: {} training, {} generated ({} unreadable, {} failed evaluation)\n",
            s.training_count, s.generated_count, s.unreadable, s.evaluation_failures
        );
        match (s.mae, s.slope) {
            (Some(mae), Some(slope)) => out.push_str(&format!(
                "fidelity ({}): MAE {mae:.6}, best-fit slope {slope:.4}\n",
                s.condition_kind
            )),
            _ => out.push_str(&format!(
                "fidelity: {}\n",
                self.fidelity_note.as_deref().unwrap_or("not applicable")
            )),
        }
        if let Some(c) = &s.chamfer {
            out.push_str(&format!(
                "chamfer to training: min {:.4}, q1 {:.4}, median {:.4}, q3 {:.4}, max {:.4}\n",
                c.min, c.q1, c.median, c.q3, c.max
            ));
        }
        for (name, ld) in &s.max_lift_to_drag {
            out.push_str(&format!("max lift-to-drag ({name}): {ld:.2}\n"));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct EvaluateOutcome {
    pub report_dir: PathBuf,
    pub report: RunReport,
    pub files: Vec<PathBuf>,
}

/// Loads generated profiles listed in the directory's manifest, or every
/// file of the directory when there is none.
fn load_generated(dir: &Path) -> Result<(Vec<GeneratedRow>, Vec<CanonicalSample>, Vec<usize>)> {
    let manifest = dir.join(MANIFEST_FILE);
    let listed: Vec<(String, Option<f64>)> = if manifest.is_file() {
        read_manifest(&manifest)?.into_iter().map(|r| (r.file, r.target)).collect()
    } else {
        archive::list_files(dir)?
            .iter()
            .map(|p| (archive::file_name(p), None))
            .collect()
    };
    let mut rows = Vec::new();
    let mut samples = Vec::new();
    let mut loaded = Vec::new();
    for (file, target) in listed {
        match archive::read_profile(&dir.join(&file)) {
            Ok((_, s)) => {
                loaded.push(rows.len());
                samples.push(s);
                rows.push(GeneratedRow { file, target, error: None });
            }
            Err(e) => rows.push(GeneratedRow {
                file,
                target,
                error: Some(e),
            }),
        }
    }
    if samples.is_empty() {
        return Err(PipelineError::NoValidProfiles(dir.to_path_buf()));
    }
    Ok((rows, samples, loaded))
}

fn value_of(kind: ConditionKind, row: &ProfileRow) -> Option<f64> {
    match kind {
        ConditionKind::LiftCoefficient => Some(row.cl),
        ConditionKind::DragCoefficient => Some(row.cd),
        ConditionKind::MaxThickness => Some(row.max_thickness),
        ConditionKind::MaxCamber => Some(row.max_camber),
        ConditionKind::None => None,
    }
}

/// Compares generated profiles against the training archive and writes
/// `report.json`, `rows.csv`, SVG charts and the top lift-to-drag profiles
/// under `output_dir/report`.
pub fn evaluate(config: &PipelineConfig, generated_dir: &Path, dataset: &Path, output_dir: &Path) -> Result<EvaluateOutcome> {
    config.validate()?;
    let flow = config.flow()?;
    let archive = DatasetArchive::read(dataset)?;
    let training = archive.samples();
    let (generated_rows, generated, loaded) = load_generated(generated_dir)?;
    let kind = read_manifest(&generated_dir.join(MANIFEST_FILE))
        .ok()
        .and_then(|rows| rows.first().map(|r| r.kind))
        .unwrap_or(ConditionKind::None);

    let cohorts = [
        Cohort {
            name: "training".into(),
            samples: &training,
        },
        Cohort {
            name: "generated".into(),
            samples: &generated,
        },
    ];
    let distribution = distribution_report(&cohorts, &flow, config.evaluate.bins, config.evaluate.top_k)?;
    let novelty: Option<NoveltyResult> = Some(novelty_analysis(&generated, &training)?);

    let gen_report = &distribution.cohorts[1];
    let mut targets = Vec::new();
    let mut measured = Vec::new();
    for row in &gen_report.rows {
        let target = generated_rows[loaded[row.index]].target;
        if let (Some(t), Some(v)) = (target, value_of(kind, row)) {
            targets.push(t);
            measured.push(v);
        }
    }
    let (fidelity, fidelity_note): (Option<FidelityResult>, Option<String>) = if kind == ConditionKind::None {
        (None, Some("unconditional samples".into()))
    } else {
        match fidelity_analysis(&targets, &measured) {
            Ok(f) => (Some(f), None),
            Err(e) => (None, Some(e.to_string())),
        }
    };

    let summary = ReportSummary {
        training_count: training.len(),
        generated_count: generated_rows.len(),
        unreadable: generated_rows.len() - generated.len(),
        evaluation_failures: gen_report.failures.len(),
        condition_kind: kind,
        mae: fidelity.as_ref().map(|f| f.mae),
        slope: fidelity.as_ref().map(|f| f.slope),
        chamfer: novelty.as_ref().map(|n| n.summary),
        max_lift_to_drag: distribution
            .cohorts
            .iter()
            .filter_map(|c| {
                let best = c.rows.iter().map(|r| r.lift_to_drag).fold(f64::NEG_INFINITY, f64::max);
                best.is_finite().then(|| (c.name.clone(), best))
            })
            .collect(),
    };
    let report = RunReport {
        summary,
        generated: generated_rows,
        evaluation: EvalReport {
            distribution,
            fidelity,
            novelty,
        },
        fidelity_note,
    };

    let report_dir = output_dir.join(REPORT_DIR);
    create_dir(&report_dir)?;
    let mut files = Vec::new();
    let mut emit = |name: &str, contents: String| -> Result<()> {
        let path = report_dir.join(name);
        write_file(&path, contents)?;
        files.push(path);
        Ok(())
    };
    let mut json = serde_json::to_string_pretty(&report).unwrap_or_default();
    json.push('\n');
    emit("report.json", json)?;
    emit("rows.csv", rows_csv(&report, &archive, kind)?)?;
    for chart in charts(&report) {
        emit(&chart.0, chart.1)?;
    }

    let top_dir = report_dir.join("top");
    create_dir(&top_dir)?;
    let samples_of = [&training, &generated];
    for (c, cohort) in report.evaluation.distribution.cohorts.iter().enumerate() {
        for (rank, index) in cohort.top.iter().enumerate() {
            let name = format!("{}_{:02}_{index:04}.dat", cohort.name, rank + 1);
            let profile = from_canonical(&samples_of[c][*index], format!("{} {index} rank {}", cohort.name, rank + 1));
            let path = top_dir.join(name);
            write_file(&path, to_selig_string(&profile))?;
            files.push(path);
        }
    }
    Ok(EvaluateOutcome {
        report_dir,
        report,
        files,
    })
}

#[derive(Serialize)]
struct CsvRow<'a> {
    cohort: &'a str,
    index: usize,
    file: &'a str,
    status: &'a str,
    cl: Option<f64>,
    cd: Option<f64>,
    lift_to_drag: Option<f64>,
    max_camber: Option<f64>,
    max_thickness: Option<f64>,
    target: Option<f64>,
    percent_diff: Option<f64>,
    chamfer: Option<f64>,
    nearest_training_index: Option<usize>,
}

fn rows_csv(report: &RunReport, archive: &DatasetArchive, kind: ConditionKind) -> Result<String> {
    let path = Path::new("rows.csv");
    let mut w = csv::Writer::from_writer(Vec::new());
    let dist = &report.evaluation.distribution;
    let generated_loaded: Vec<&GeneratedRow> = report.generated.iter().filter(|g| g.error.is_none()).collect();
    let mut fidelity_rows = report
        .evaluation
        .fidelity
        .as_ref()
        .map(|f| f.percent_diff.iter())
        .into_iter()
        .flatten();

    for (c, cohort) in dist.cohorts.iter().enumerate() {
        let files: Vec<&str> = if c == 0 {
            archive.entries.iter().map(|e| e.file.as_str()).collect()
        } else {
            generated_loaded.iter().map(|g| g.file.as_str()).collect()
        };
        let mut rows = cohort.rows.iter().peekable();
        let mut failures = cohort.failures.iter().peekable();
        for index in 0..cohort.size {
            let novelty = (c == 1)
                .then(|| report.evaluation.novelty.as_ref().map(|n| n.rows[index]))
                .flatten();
            let target = if c == 1 { generated_loaded[index].target } else { None };
            let mut row = CsvRow {
                cohort: &cohort.name,
                index,
                file: files[index],
                status: "ok",
                cl: None,
                cd: None,
                lift_to_drag: None,
                max_camber: None,
                max_thickness: None,
                target,
                percent_diff: None,
                chamfer: novelty.map(|n| n.chamfer),
                nearest_training_index: novelty.map(|n| n.nearest_index),
            };
            if rows.peek().is_some_and(|r| r.index == index) {
                let r = rows.next().unwrap_or_else(|| unreachable!());
                row.cl = Some(r.cl);
                row.cd = Some(r.cd);
                row.lift_to_drag = Some(r.lift_to_drag);
                row.max_camber = Some(r.max_camber);
                row.max_thickness = Some(r.max_thickness);
                if c == 1 && target.is_some() && kind != ConditionKind::None {
                    row.percent_diff = fidelity_rows.next().copied().flatten();
                }
            } else if failures.peek().is_some_and(|f| f.index == index) {
                let f = failures.next().unwrap_or_else(|| unreachable!());
                row.status = &f.reason;
            }
            w.serialize(&row).map_err(csv_err(path))?;
        }
    }
    let bytes = w.into_inner().map_err(|e| io_err(path)(e.into_error()))?;
    Ok(String::from_utf8_lossy(&bytes).into_owned())
}

fn charts(report: &RunReport) -> Vec<(String, String)> {
    let dist = &report.evaluation.distribution;
    let mut out = Vec::new();
    for h in &dist.histograms {
        let series: Vec<(&str, _)> = dist
            .cohorts
            .iter()
            .zip(&h.per_cohort)
            .map(|(c, hist)| (c.name.as_str(), hist))
            .collect();
        let q = h.quantity;
        out.push((
            format!("hist_{}.svg", q.key()),
            svg::histograms(&format!("{} distribution", q.label()), q.label(), &series),
        ));
    }
    let boxes: Vec<(&str, &BoxStats)> = dist
        .cohorts
        .iter()
        .filter_map(|c| c.lift_to_drag.as_ref().map(|b| (c.name.as_str(), b)))
        .collect();
    out.push((
        "lift_to_drag_box.svg".into(),
        svg::box_plots("lift-to-drag ratio", "L/D", &boxes),
    ));
    if let Some(n) = &report.evaluation.novelty {
        let values: Vec<f64> = n.rows.iter().map(|r| r.chamfer).collect();
        if let Some(b) = BoxStats::of(&values) {
            out.push((
                "chamfer_box.svg".into(),
                svg::box_plots("Chamfer distance to nearest training profile", "distance", &[("generated", &b)]),
            ));
        }
    }
    if let Some(f) = &report.evaluation.fidelity {
        let kind = report.summary.condition_kind;
        let label = match kind {
            ConditionKind::LiftCoefficient => Quantity::Cl.label(),
            ConditionKind::DragCoefficient => Quantity::Cd.label(),
            ConditionKind::MaxThickness => Quantity::MaxThickness.label(),
            ConditionKind::MaxCamber => Quantity::MaxCamber.label(),
            ConditionKind::None => "value",
        };
        let gen = &dist.cohorts[1];
        let loaded: Vec<&GeneratedRow> = report.generated.iter().filter(|g| g.error.is_none()).collect();
        let points: Vec<(f64, f64)> = gen
            .rows
            .iter()
            .filter_map(|r| Some((loaded[r.index].target?, value_of(kind, r)?)))
            .collect();
        let fit = svg::Fit {
            slope: f.slope,
            intercept: f.intercept,
            residual_std: f.residual_std,
        };
        out.push((
            "fidelity_scatter.svg".into(),
            svg::scatter_fit(
                &format!("{label}: evaluated vs target"),
                &format!("target {label}"),
                &format!("evaluated {label}"),
                &points,
                &fit,
            ),
        ));
        let pct: Vec<f64> = f.percent_diff.iter().flatten().copied().collect();
        if let Some(b) = BoxStats::of(&pct) {
            out.push((
                "percent_diff_box.svg".into(),
                svg::box_plots("percent difference from target", "percent", &[(label, &b)]),
            ));
        }
    }
    out
}
