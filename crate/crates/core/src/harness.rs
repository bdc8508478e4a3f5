//! Config-driven experiment orchestration: plan the run matrix, materialize
//! per-run datasets, emit external-trainer configuration files, ingest
//! prediction dumps, evaluate them against the held-out test split, and
//! render mAP50 / mAP50-95 tables.
//!
//! The harness never trains models. Training is delegated to an external
//! trainer through emitted config files; evaluation consumes that trainer's
//! prediction dumps. Every stage is re-runnable: unchanged inputs produce
//! byte-identical outputs (dataset content hashes make this checkable), and
//! all paths stored in records and emitted configs are relative to the
//! output root.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::augment::AugmentationPolicy;
use crate::datamix::{self, Dataset, MixPlan, SplitSpec};
use crate::error::{DetlabError, Result};
use crate::evalmetrics::{self, Detection, EvalConfig, EvalReport, GroundTruth};
use crate::imgproc::HsvGains;

/// Weight initialization mode for a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum InitMode {
    Pretrained,
    Scratch,
}

impl InitMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            InitMode::Pretrained => "pretrained",
            InitMode::Scratch => "scratch",
        }
    }
}

impl fmt::Display for InitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl TryFrom<String> for InitMode {
    type Error = DetlabError;

    fn try_from(value: String) -> Result<Self> {
        match value.as_str() {
            "pretrained" => Ok(InitMode::Pretrained),
            "scratch" => Ok(InitMode::Scratch),
            other => Err(DetlabError::Config(format!(
                "unknown init mode '{other}' (expected 'pretrained' or 'scratch')"
            ))),
        }
    }
}

impl From<InitMode> for String {
    fn from(v: InitMode) -> String {
        v.as_str().to_string()
    }
}

/// Experimental condition: no augmentation, one traditional augmentation
/// applied online by the trainer, or synthetic mixing at a share of the
/// training-set size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Condition {
    None,
    CopyPaste,
    Hsv,
    Mixup,
    FlipRot,
    Synthetic(u32),
}

impl Condition {
    /// Stable machine-readable form, also used in run ids and config files.
    pub fn slug(&self) -> String {
        match self {
            Condition::None => "none".to_string(),
            Condition::CopyPaste => "copy_paste".to_string(),
            Condition::Hsv => "hsv".to_string(),
            Condition::Mixup => "mixup".to_string(),
            Condition::FlipRot => "flip_rot".to_string(),
            Condition::Synthetic(share) => format!("synthetic:{share}"),
        }
    }

    /// Human-readable table row label.
    pub fn display_label(&self) -> String {
        match self {
            Condition::None => "No Augmentation".to_string(),
            Condition::CopyPaste => "Copy-paste".to_string(),
            Condition::Hsv => "HSV".to_string(),
            Condition::Mixup => "Mix".to_string(),
            Condition::FlipRot => "Flip and rot.".to_string(),
            Condition::Synthetic(share) => format!("Orig. + Synth. ({share}%)"),
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.slug())
    }
}

impl TryFrom<String> for Condition {
    type Error = DetlabError;

    fn try_from(value: String) -> Result<Self> {
        match value.as_str() {
            "none" => Ok(Condition::None),
            "copy_paste" => Ok(Condition::CopyPaste),
            "hsv" => Ok(Condition::Hsv),
            "mixup" => Ok(Condition::Mixup),
            "flip_rot" => Ok(Condition::FlipRot),
            other => {
                if let Some(share) = other.strip_prefix("synthetic:") {
                    let share: u32 = share.parse().map_err(|_| {
                        DetlabError::Config(format!("invalid synthetic share in '{other}'"))
                    })?;
                    if share == 0 {
                        return Err(DetlabError::Config(
                            "synthetic share must be positive".to_string(),
                        ));
                    }
                    Ok(Condition::Synthetic(share))
                } else {
                    Err(DetlabError::Config(format!("unknown condition '{other}'")))
                }
            }
        }
    }
}

impl From<Condition> for String {
    fn from(c: Condition) -> String {
        c.slug()
    }
}

/// Learning-rate schedule names accepted by the emitted trainer configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LrSchedule {
    Cosine,
    Linear,
    Step,
}

impl LrSchedule {
    pub fn as_str(&self) -> &'static str {
        match self {
            LrSchedule::Cosine => "cosine",
            LrSchedule::Linear => "linear",
            LrSchedule::Step => "step",
        }
    }
}

/// Hyperparameters forwarded to the external trainer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainerParams {
    pub epochs: u32,
    pub patience: u32,
    pub batch_size: u32,
    pub initial_lr: f64,
    pub lr_schedule: LrSchedule,
}

impl Default for TrainerParams {
    fn default() -> Self {
        TrainerParams {
            epochs: 300,
            patience: 30,
            batch_size: 16,
            initial_lr: 0.01,
            lr_schedule: LrSchedule::Cosine,
        }
    }
}

impl TrainerParams {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.patience == 0 || self.batch_size == 0 {
            return Err(DetlabError::Config(
                "trainer epochs, patience, and batch_size must be positive".to_string(),
            ));
        }
        if self.initial_lr <= 0.0 {
            return Err(DetlabError::Config(
                "trainer initial_lr must be positive".to_string(),
            ));
        }
        Ok(())
    }
}

/// Dataset and output locations. `dataset_root` and `synthetic_root` point
/// at dataset directories (`images/` + `labels/` + `classes.txt`);
/// everything the harness writes lands under `output_root`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct PathsConfig {
    pub dataset_root: PathBuf,
    pub synthetic_root: Option<PathBuf>,
    pub output_root: PathBuf,
    pub predictions_root: Option<PathBuf>,
}

/// Split fractions (the shuffle seed is the experiment's global seed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub test_fraction: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            train_fraction: 0.70,
            val_fraction: 0.15,
            test_fraction: 0.15,
        }
    }
}

impl SplitConfig {
    pub fn to_spec(&self, seed: u64) -> SplitSpec {
        SplitSpec {
            train_fraction: self.train_fraction,
            val_fraction: self.val_fraction,
            test_fraction: self.test_fraction,
            seed,
        }
    }
}

/// Augmentation probabilities and parameters ([`AugmentationPolicy`] in
/// config form; the rotation set stays at its exact-transform default).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub p_copy_paste: f64,
    pub p_mixup: f64,
    pub p_hsv: f64,
    pub p_flip_rot: f64,
    pub hsv_h_gain: f64,
    pub hsv_s_gain: f64,
    pub hsv_v_gain: f64,
    pub mixup_alpha: f64,
    pub copy_paste_max_instances: usize,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        let policy = AugmentationPolicy::default();
        AugmentConfig {
            p_copy_paste: policy.p_copy_paste,
            p_mixup: policy.p_mixup,
            p_hsv: policy.p_hsv,
            p_flip_rot: policy.p_flip_rot,
            hsv_h_gain: policy.hsv_gains.h_gain,
            hsv_s_gain: policy.hsv_gains.s_gain,
            hsv_v_gain: policy.hsv_gains.v_gain,
            mixup_alpha: policy.mixup_alpha,
            copy_paste_max_instances: policy.copy_paste_max_instances,
        }
    }
}

impl AugmentConfig {
    pub fn to_policy(&self) -> AugmentationPolicy {
        AugmentationPolicy {
            p_copy_paste: self.p_copy_paste,
            p_mixup: self.p_mixup,
            p_hsv: self.p_hsv,
            p_flip_rot: self.p_flip_rot,
            hsv_gains: HsvGains {
                h_gain: self.hsv_h_gain,
                s_gain: self.hsv_s_gain,
                v_gain: self.hsv_v_gain,
            },
            mixup_alpha: self.mixup_alpha,
            rotation_set: AugmentationPolicy::default().rotation_set,
            copy_paste_max_instances: self.copy_paste_max_instances,
        }
    }

    /// Probability the trainer should apply each traditional augmentation
    /// for a given condition: the configured probability for the condition's
    /// own technique, 0 for everything else.
    pub fn probabilities_for(&self, condition: Condition) -> [(&'static str, f64); 4] {
        [
            (
                "augment_copy_paste",
                if condition == Condition::CopyPaste {
                    self.p_copy_paste
                } else {
                    0.0
                },
            ),
            (
                "augment_flip_rot",
                if condition == Condition::FlipRot {
                    self.p_flip_rot
                } else {
                    0.0
                },
            ),
            (
                "augment_hsv",
                if condition == Condition::Hsv { self.p_hsv } else { 0.0 },
            ),
            (
                "augment_mixup",
                if condition == Condition::Mixup {
                    self.p_mixup
                } else {
                    0.0
                },
            ),
        ]
    }
}

/// Top-level experiment description, read from a TOML file with a
/// `schema_version` key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default = "default_experiment_name")]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub models: Vec<String>,
    pub inits: Vec<InitMode>,
    pub conditions: Vec<Condition>,
    #[serde(default)]
    pub trainer: TrainerParams,
    #[serde(default)]
    pub paths: PathsConfig,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub augment: AugmentConfig,
}

fn default_experiment_name() -> String {
    "experiment".to_string()
}

pub const SCHEMA_VERSION: u32 = 1;

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: ExperimentConfig = toml::from_str(text)
            .map_err(|e| DetlabError::Config(format!("config parse error: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| DetlabError::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(DetlabError::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.models.is_empty() || self.inits.is_empty() || self.conditions.is_empty() {
            return Err(DetlabError::Config(
                "models, inits, and conditions must be non-empty".to_string(),
            ));
        }
        self.trainer.validate()?;
        self.augment.to_policy().validate()?;
        SplitSpec {
            train_fraction: self.split.train_fraction,
            val_fraction: self.split.val_fraction,
            test_fraction: self.split.test_fraction,
            seed: self.seed,
        }
        .validate()?;
        Ok(())
    }
}

/// Lifecycle state of one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Planned,
    Prepared,
    Evaluated,
}

/// One cell of the experiment matrix, persisted as
/// `runs/<run_id>/record.toml` under the output root. All stored paths are
/// relative to the output root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub model: String,
    pub init: InitMode,
    pub condition: Condition,
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset_fingerprint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prediction_source: Option<String>,
    #[serde(default)]
    pub provenance: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<EvalReport>,
}

/// Deterministic run id: `<model>-<init>-<condition>` with the synthetic
/// share inlined.
pub fn run_id(model: &str, init: InitMode, condition: Condition) -> String {
    format!("{model}-{init}-{}", condition.slug().replace(':', "_"))
}

/// Plan the full Cartesian product models x inits x conditions, in config
/// order, each run in status `planned`.
pub fn plan_experiments(config: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    for (i, a) in config.conditions.iter().enumerate() {
        if config.conditions[i + 1..].contains(a) {
            return Err(DetlabError::Config(format!(
                "duplicate condition '{}'",
                a.slug()
            )));
        }
    }
    let mut runs = Vec::with_capacity(config.models.len() * config.inits.len() * config.conditions.len());
    for model in &config.models {
        for &init in &config.inits {
            for &condition in &config.conditions {
                runs.push(RunRecord {
                    run_id: run_id(model, init, condition),
                    model: model.clone(),
                    init,
                    condition,
                    status: RunStatus::Planned,
                    dataset_path: None,
                    dataset_fingerprint: None,
                    prediction_source: None,
                    provenance: String::new(),
                    report: None,
                });
            }
        }
    }
    Ok(runs)
}

/// Write bytes atomically: to a temporary sibling, then rename over the
/// destination.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| DetlabError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| DetlabError::io(path, e))
}

/// Persist a run record to `runs/<run_id>/record.toml`.
pub fn save_record(record: &RunRecord, output_root: &Path) -> Result<()> {
    let dir = output_root.join("runs").join(&record.run_id);
    fs::create_dir_all(&dir).map_err(|e| DetlabError::io(&dir, e))?;
    let text = toml::to_string(record)
        .map_err(|e| DetlabError::Harness(format!("record serialization: {e}")))?;
    write_atomic(&dir.join("record.toml"), text.as_bytes())
}

/// Load one run record.
pub fn load_record(output_root: &Path, run_id: &str) -> Result<RunRecord> {
    let path = output_root.join("runs").join(run_id).join("record.toml");
    let text = fs::read_to_string(&path).map_err(|e| DetlabError::io(&path, e))?;
    toml::from_str(&text).map_err(|e| DetlabError::Harness(format!("{}: {e}", path.display())))
}

/// Load all run records under the output root, sorted by run id.
pub fn load_records(output_root: &Path) -> Result<Vec<RunRecord>> {
    let runs_dir = output_root.join("runs");
    let mut ids = Vec::new();
    if runs_dir.is_dir() {
        for entry in fs::read_dir(&runs_dir).map_err(|e| DetlabError::io(&runs_dir, e))? {
            let entry = entry.map_err(|e| DetlabError::io(&runs_dir, e))?;
            if entry.path().join("record.toml").is_file() {
                ids.push(entry.file_name().to_string_lossy().to_string());
            }
        }
    }
    ids.sort();
    ids.iter().map(|id| load_record(output_root, id)).collect()
}

/// Content hash of a dataset directory: SHA-256 over every file under it
/// (sorted relative paths, names and bytes), hex-encoded.
pub fn fingerprint_dataset_dir(root: &Path) -> Result<String> {
    fn collect(dir: &Path, base: &Path, files: &mut Vec<(String, PathBuf)>) -> Result<()> {
        for entry in fs::read_dir(dir).map_err(|e| DetlabError::io(dir, e))? {
            let entry = entry.map_err(|e| DetlabError::io(dir, e))?;
            let path = entry.path();
            if path.is_dir() {
                collect(&path, base, files)?;
            } else {
                let rel = path
                    .strip_prefix(base)
                    .unwrap_or(&path)
                    .to_string_lossy()
                    .replace('\\', "/");
                files.push((rel, path));
            }
        }
        Ok(())
    }
    let mut files = Vec::new();
    collect(root, root, &mut files)?;
    files.sort();
    let mut hasher = Sha256::new();
    for (rel, path) in files {
        hasher.update(rel.as_bytes());
        hasher.update([0u8]);
        let bytes = fs::read(&path).map_err(|e| DetlabError::io(&path, e))?;
        hasher.update((bytes.len() as u64).to_le_bytes());
        hasher.update(&bytes);
    }
    Ok(hex_string(&hasher.finalize()))
}

fn hex_string(bytes: &[u8]) -> String {
    let mut out = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// The three base splits, already written under `<output_root>/splits/`.
#[derive(Debug, Clone)]
pub struct BaseSplits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

/// Split the source dataset and write `splits/{train,val,test}` under the
/// output root. Idempotent for a fixed (dataset, spec).
pub fn prepare_splits(
    dataset: &Dataset,
    spec: &SplitSpec,
    output_root: &Path,
) -> Result<BaseSplits> {
    let (train, val, test) = datamix::split(dataset, spec)?;
    let base = output_root.join("splits");
    datamix::write_dataset(&train, &base.join("train"))?;
    datamix::write_dataset(&val, &base.join("val"))?;
    datamix::write_dataset(&test, &base.join("test"))?;
    Ok(BaseSplits { train, val, test })
}

/// Materialize the dataset for one run and record its fingerprint.
///
/// Conditions `none` and the traditional augmentations leave the training
/// set unchanged on disk (those augmentations are declared in the emitted
/// trainer config as online); `synthetic:<s>` writes the mixed dataset under
/// `runs/<run_id>/dataset`.
pub fn prepare_run_dataset(
    run: &mut RunRecord,
    splits: &BaseSplits,
    pool: Option<&Dataset>,
    output_root: &Path,
    seed: u64,
) -> Result<()> {
    match run.condition {
        Condition::Synthetic(share) => {
            let pool = pool.ok_or_else(|| {
                DetlabError::Harness(format!(
                    "run '{}' needs a synthetic pool (paths.synthetic_root)",
                    run.run_id
                ))
            })?;
            let plan = MixPlan::new(splits.train.len(), share, pool.len(), seed)?;
            let mixed = datamix::mix_synthetic(&splits.train, pool, &plan)?;
            let rel = format!("runs/{}/dataset", run.run_id);
            let dir = output_root.join(&rel);
            datamix::write_dataset(&mixed, &dir)?;
            run.dataset_path = Some(rel);
            run.dataset_fingerprint = Some(fingerprint_dataset_dir(&dir)?);
        }
        _ => {
            let rel = "splits/train".to_string();
            run.dataset_fingerprint = Some(fingerprint_dataset_dir(&output_root.join(&rel))?);
            run.dataset_path = Some(rel);
        }
    }
    run.status = RunStatus::Prepared;
    Ok(())
}

/// Render the flat `key=value` trainer configuration for a run: trainer
/// hyperparameters, dataset path, model tag, init mode, condition, the
/// per-augmentation online probabilities, and a directive disabling the
/// trainer's own automatic augmentations. Keys are sorted lexicographically
/// and lines are LF-terminated, so the file is bit-exact for fingerprinting.
pub fn render_trainer_config(run: &RunRecord, config: &ExperimentConfig) -> String {
    let dataset = run.dataset_path.clone().unwrap_or_else(|| "splits/train".to_string());
    let mut entries: Vec<(String, String)> = vec![
        ("auto_augment".to_string(), "off".to_string()),
        ("batch".to_string(), config.trainer.batch_size.to_string()),
        ("condition".to_string(), run.condition.slug()),
        ("dataset".to_string(), dataset),
        ("epochs".to_string(), config.trainer.epochs.to_string()),
        ("init".to_string(), run.init.to_string()),
        ("lr0".to_string(), config.trainer.initial_lr.to_string()),
        ("model".to_string(), run.model.clone()),
        ("patience".to_string(), config.trainer.patience.to_string()),
        (
            "schedule".to_string(),
            config.trainer.lr_schedule.as_str().to_string(),
        ),
    ];
    for (key, p) in config.augment.probabilities_for(run.condition) {
        entries.push((key.to_string(), p.to_string()));
    }
    entries.sort();
    let mut out = String::new();
    for (key, value) in entries {
        out.push_str(&key);
        out.push('=');
        out.push_str(&value);
        out.push('\n');
    }
    out
}

/// Write the trainer config to `runs/<run_id>/trainer.cfg`.
pub fn emit_trainer_config(run: &RunRecord, config: &ExperimentConfig, output_root: &Path) -> Result<PathBuf> {
    let dir = output_root.join("runs").join(&run.run_id);
    fs::create_dir_all(&dir).map_err(|e| DetlabError::io(&dir, e))?;
    let path = dir.join("trainer.cfg");
    write_atomic(&path, render_trainer_config(run, config).as_bytes())?;
    Ok(path)
}

/// Ingest a directory of prediction files for the test split. File stems
/// must match test-set image ids; a missing file means zero detections for
/// that image, while a file whose stem is not a test-set id is an error.
pub fn ingest_predictions(
    predictions_dir: &Path,
    test: &Dataset,
) -> Result<Vec<Detection>> {
    let known: std::collections::BTreeSet<&str> =
        test.samples.iter().map(|s| s.image_id.as_str()).collect();
    if predictions_dir.is_dir() {
        for entry in
            fs::read_dir(predictions_dir).map_err(|e| DetlabError::io(predictions_dir, e))?
        {
            let entry = entry.map_err(|e| DetlabError::io(predictions_dir, e))?;
            let path = entry.path();
            if path.extension().and_then(|e| e.to_str()) != Some("txt") {
                continue;
            }
            let stem = path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or_default()
                .to_string();
            if !known.contains(stem.as_str()) {
                return Err(DetlabError::UnknownImageId(stem));
            }
        }
    }
    let mut detections = Vec::new();
    for sample in &test.samples {
        let path = predictions_dir.join(format!("{}.txt", sample.image_id));
        if !path.is_file() {
            continue;
        }
        detections.extend(evalmetrics::read_prediction_file(
            &path,
            &sample.image_id,
            test.classes.len(),
        )?);
    }
    Ok(detections)
}

/// Evaluate ingested predictions against the held-out test split and attach
/// the report. Idempotent: identical inputs produce an identical record.
pub fn evaluate_run(
    run: &mut RunRecord,
    detections: &[Detection],
    test: &Dataset,
    prediction_source: &str,
) -> Result<()> {
    let gts: Vec<GroundTruth> = evalmetrics::ground_truths_of(test);
    let report = evalmetrics::evaluate(
        detections,
        &gts,
        &EvalConfig::new(test.classes.len()),
    )?;
    run.report = Some(report);
    run.prediction_source = Some(prediction_source.to_string());
    run.status = RunStatus::Evaluated;
    Ok(())
}

/// Round half-up to three decimals (table precision).
pub fn round_half_up_3(x: f64) -> f64 {
    let scaled = x * 1000.0;
    let floor = scaled.floor();
    // Treat values within representation noise of a half step as halves.
    let rounded = if scaled - floor - 0.5 >= -1e-9 { floor + 1.0 } else { floor };
    rounded / 1000.0
}

/// One rendered table row.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub label: String,
    /// Rounded cell values, one per column; `None` when the run is missing
    /// or not evaluated.
    pub values: Vec<Option<f64>>,
    /// Per-column best flag (ties all flagged).
    pub best: Vec<bool>,
}

/// One rendered metric table: rows are conditions, columns model x init.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportTable {
    pub metric: String,
    pub columns: Vec<String>,
    pub rows: Vec<ReportRow>,
}

impl ReportTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("Augmentation");
        for column in &self.columns {
            out.push(',');
            out.push_str(column);
        }
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.label);
            for value in &row.values {
                out.push(',');
                if let Some(v) = value {
                    out.push_str(&format!("{v:.3}"));
                }
            }
            out.push('\n');
        }
        out
    }

    /// Aligned text rendering; per-column best values are flagged with `*`.
    pub fn to_text(&self) -> String {
        let label_width = self
            .rows
            .iter()
            .map(|r| r.label.len())
            .chain(std::iter::once("Augmentation".len()))
            .max()
            .unwrap_or(12);
        let col_width = self
            .columns
            .iter()
            .map(|c| c.len())
            .chain(std::iter::once(6))
            .max()
            .unwrap_or(6)
            + 1;
        let mut out = format!("{:<label_width$}", "Augmentation");
        for column in &self.columns {
            out.push_str(&format!(" {column:>col_width$}"));
        }
        out.push('\n');
        for row in &self.rows {
            out.push_str(&format!("{:<label_width$}", row.label));
            for (value, best) in row.values.iter().zip(&row.best) {
                let cell = match value {
                    Some(v) if *best => format!("{v:.3}*"),
                    Some(v) => format!("{v:.3}"),
                    None => "-".to_string(),
                };
                out.push_str(&format!(" {cell:>col_width$}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Both metric tables.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportTables {
    pub map50: ReportTable,
    pub map50_95: ReportTable,
}

fn column_label(model: &str, init: InitMode) -> String {
    format!("{model} ({init})")
}

/// Render the mAP50 and mAP50-95 tables from evaluated records: one row per
/// condition (config order), one column per model x init (config order),
/// values rounded half-up to three decimals, per-column best values flagged.
pub fn render_report(records: &[RunRecord], config: &ExperimentConfig) -> Result<ReportTables> {
    if !records
        .iter()
        .any(|r| r.status == RunStatus::Evaluated && r.report.is_some())
    {
        return Err(DetlabError::Harness(
            "no evaluated records to report".to_string(),
        ));
    }
    let by_key: BTreeMap<(&str, InitMode, Condition), &RunRecord> = records
        .iter()
        .map(|r| ((r.model.as_str(), r.init, r.condition), r))
        .collect();

    let columns: Vec<(String, InitMode, String)> = config
        .models
        .iter()
        .flat_map(|m| {
            config
                .inits
                .iter()
                .map(move |&init| (m.clone(), init, column_label(m, init)))
        })
        .collect();

    let build = |metric: &str, value_of: fn(&EvalReport) -> f64| -> ReportTable {
        let mut rows: Vec<ReportRow> = config
            .conditions
            .iter()
            .map(|&condition| {
                let values: Vec<Option<f64>> = columns
                    .iter()
                    .map(|(model, init, _)| {
                        by_key
                            .get(&(model.as_str(), *init, condition))
                            .and_then(|r| r.report.as_ref())
                            .map(|report| round_half_up_3(value_of(report)))
                    })
                    .collect();
                ReportRow {
                    label: condition.display_label(),
                    values,
                    best: vec![false; columns.len()],
                }
            })
            .collect();
        for col in 0..columns.len() {
            let max = rows
                .iter()
                .filter_map(|r| r.values[col])
                .fold(f64::NEG_INFINITY, f64::max);
            if max.is_finite() {
                for row in rows.iter_mut() {
                    if row.values[col] == Some(max) {
                        row.best[col] = true;
                    }
                }
            }
        }
        ReportTable {
            metric: metric.to_string(),
            columns: columns.iter().map(|(_, _, label)| label.clone()).collect(),
            rows,
        }
    };

    Ok(ReportTables {
        map50: build("map50", |r| r.map50),
        map50_95: build("map50_95", |r| r.map50_95),
    })
}

/// Write `report_map50.csv`, `report_map5095.csv`, and the aligned-text
/// renderings under the output root.
pub fn write_report_files(tables: &ReportTables, output_root: &Path) -> Result<()> {
    write_atomic(
        &output_root.join("report_map50.csv"),
        tables.map50.to_csv().as_bytes(),
    )?;
    write_atomic(
        &output_root.join("report_map5095.csv"),
        tables.map50_95.to_csv().as_bytes(),
    )?;
    write_atomic(
        &output_root.join("report_map50.txt"),
        tables.map50.to_text().as_bytes(),
    )?;
    write_atomic(
        &output_root.join("report_map5095.txt"),
        tables.map50_95.to_text().as_bytes(),
    )
}

/// Improvement of the best condition over the no-augmentation baseline for
/// one column of one metric table.
#[derive(Debug, Clone, PartialEq)]
pub struct ImprovementRow {
    pub metric: String,
    pub column: String,
    pub baseline: f64,
    pub best_condition: String,
    pub best_value: f64,
    pub abs_delta: f64,
    pub rel_delta: f64,
}

/// Per-column improvement summary over the rendered tables (same rounded
/// values as the CSV, so the deltas can be recomputed from it exactly).
/// Requires a "No Augmentation" baseline row in each column.
pub fn run_stats(tables: &ReportTables) -> Result<Vec<ImprovementRow>> {
    let mut out = Vec::new();
    for table in [&tables.map50, &tables.map50_95] {
        let baseline_row = table
            .rows
            .iter()
            .find(|r| r.label == Condition::None.display_label())
            .ok_or_else(|| {
                DetlabError::Harness("missing baseline (No Augmentation) row".to_string())
            })?;
        for (col, column) in table.columns.iter().enumerate() {
            let baseline = baseline_row.values[col].ok_or_else(|| {
                DetlabError::Harness(format!("missing baseline value in column '{column}'"))
            })?;
            let mut best: Option<(&ReportRow, f64)> = None;
            for row in &table.rows {
                if let Some(v) = row.values[col] {
                    if best.is_none_or(|(_, bv)| v > bv) {
                        best = Some((row, v));
                    }
                }
            }
            let (best_row, best_value) =
                best.expect("baseline value exists, so the column is non-empty");
            out.push(ImprovementRow {
                metric: table.metric.clone(),
                column: column.clone(),
                baseline,
                best_condition: best_row.label.clone(),
                best_value,
                abs_delta: best_value - baseline,
                rel_delta: if baseline != 0.0 {
                    (best_value - baseline) / baseline
                } else {
                    f64::INFINITY
                },
            });
        }
    }
    Ok(out)
}

/// CSV rendering of the improvement summary.
pub fn stats_to_csv(rows: &[ImprovementRow]) -> String {
    let mut out = String::from("metric,column,baseline,best_condition,best_value,abs_delta,rel_delta\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{:.3},{},{:.3},{:.3},{:.4}\n",
            r.metric, r.column, r.baseline, r.best_condition, r.best_value, r.abs_delta, r.rel_delta
        ));
    }
    out
}
