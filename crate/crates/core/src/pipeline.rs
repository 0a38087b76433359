//! End-to-end orchestration: configuration, training, cross-validated
//! evaluation, model persistence and line-oriented stream scoring.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::aeho::{run_aeho_from, AehoConfig};
use crate::dataio::{
    kfold_indices, parse_csv, preprocess, Attribute, BinaryLabel, Dataset, MinMaxEntry, MinMaxTable, PreprocessReport,
};
use crate::error::{Error, Result, StageContext};
use crate::mcfa::{run_mcfa, FeatureMask, McfaConfig};
use crate::metrics::{compute_metrics, ConfusionMatrix, MetricsReport};
use crate::network::{
    canonical_order, flatten, mean_squared_error_flat, predict, train_epochs, unflatten, DeltaMode, NetworkSpec,
    NetworkWeights, TrainParams,
};

pub const MODEL_FORMAT: &str = "heartsense-model/1";

fn yes() -> bool {
    true
}
fn default_seed() -> u64 {
    7
}
fn default_folds() -> usize {
    10
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_k() -> usize {
    5
}
fn default_hidden() -> Vec<usize> {
    vec![16, 8]
}
fn default_init_scale() -> f64 {
    0.5
}
fn default_threshold() -> f64 {
    0.5
}
fn default_epochs() -> usize {
    50
}
fn default_learning_rate() -> f64 {
    0.05
}
fn default_generation_divisor() -> usize {
    5
}
fn default_epoch_divisor() -> usize {
    4
}
fn default_inner_folds() -> usize {
    3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreprocessConfig {
    #[serde(default = "default_k")]
    pub k_neighbors: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            k_neighbors: default_k(),
        }
    }
}

/// Switches for ablation runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageConfig {
    /// Off: every attribute is used.
    #[serde(default = "yes")]
    pub feature_selection: bool,
    /// Off: backpropagation starts from random weights.
    #[serde(default = "yes")]
    pub weight_search: bool,
}

impl Default for StageConfig {
    fn default() -> Self {
        StageConfig {
            feature_selection: true,
            weight_search: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    /// Initial weights are uniform in `[-init_scale, init_scale]`.
    #[serde(default = "default_init_scale")]
    pub init_scale: f64,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            hidden: default_hidden(),
            init_scale: default_init_scale(),
            threshold: default_threshold(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackpropConfig {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default)]
    pub mode: DeltaMode,
}

impl Default for BackpropConfig {
    fn default() -> Self {
        BackpropConfig {
            epochs: default_epochs(),
            learning_rate: default_learning_rate(),
            mode: DeltaMode::default(),
        }
    }
}

/// Budget of the network trained inside the feature-selection fitness.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WrapperConfig {
    #[serde(default = "default_generation_divisor")]
    pub generation_divisor: usize,
    #[serde(default = "default_epoch_divisor")]
    pub epoch_divisor: usize,
    /// Stratified inner folds; the score is the mean validation accuracy.
    #[serde(default = "default_inner_folds")]
    pub inner_folds: usize,
}

impl Default for WrapperConfig {
    fn default() -> Self {
        WrapperConfig {
            generation_divisor: default_generation_divisor(),
            epoch_divisor: default_epoch_divisor(),
            inner_folds: default_inner_folds(),
        }
    }
}

/// Everything a run depends on. Stage seeds are derived from `seed`; the
/// `seed` keys of the optimizer sections are mixed into their stage seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: PathBuf,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default)]
    pub preprocess: PreprocessConfig,
    #[serde(default)]
    pub stages: StageConfig,
    #[serde(default)]
    pub mcfa: McfaConfig,
    #[serde(default)]
    pub network: NetworkConfig,
    #[serde(default)]
    pub aeho: AehoConfig,
    #[serde(default)]
    pub backprop: BackpropConfig,
    #[serde(default)]
    pub wrapper: WrapperConfig,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(dataset: impl Into<PathBuf>) -> Self {
        ExperimentConfig {
            dataset: dataset.into(),
            output_dir: default_output_dir(),
            seed: default_seed(),
            folds: default_folds(),
            preprocess: Default::default(),
            stages: Default::default(),
            mcfa: Default::default(),
            network: Default::default(),
            aeho: Default::default(),
            backprop: Default::default(),
            wrapper: Default::default(),
            base_dir: None,
        }
    }

    /// Parses TOML text, applying `key.path=value` overrides first.
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let config: ExperimentConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads a config file; relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: impl AsRef<Path>, overrides: &[String]) -> Result<Self> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut config = ExperimentConfig::from_toml_str(&text, overrides)?;
        config.base_dir = path.parent().map(Path::to_path_buf);
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.preprocess.k_neighbors == 0 {
            return Err(Error::Config("preprocess.k_neighbors must be >= 1".into()));
        }
        if self.folds < 2 {
            return Err(Error::Config("folds must be >= 2".into()));
        }
        if self.network.hidden.is_empty() || self.network.hidden.contains(&0) {
            return Err(Error::Config("network.hidden needs one or more non-zero widths".into()));
        }
        if !(self.network.init_scale >= 0.0 && self.network.init_scale.is_finite()) {
            return Err(Error::Config("network.init_scale must be finite and >= 0".into()));
        }
        if !(self.network.threshold > 0.0 && self.network.threshold < 1.0) {
            return Err(Error::Config("network.threshold must lie in (0, 1)".into()));
        }
        if !(self.backprop.learning_rate >= 0.0 && self.backprop.learning_rate.is_finite()) {
            return Err(Error::Config("backprop.learning_rate must be finite and >= 0".into()));
        }
        if self.wrapper.generation_divisor == 0 || self.wrapper.epoch_divisor == 0 {
            return Err(Error::Config("wrapper divisors must be >= 1".into()));
        }
        if self.wrapper.inner_folds < 2 {
            return Err(Error::Config("wrapper.inner_folds must be >= 2".into()));
        }
        self.mcfa.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.aeho.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        match &self.base_dir {
            Some(base) if p.is_relative() => base.join(p),
            _ => p.to_path_buf(),
        }
    }

    pub fn dataset_path(&self) -> PathBuf {
        self.resolve(&self.dataset)
    }

    pub fn output_path(&self) -> PathBuf {
        self.resolve(&self.output_dir)
    }

    /// SHA-256 of the canonical JSON form of the config.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().fold(String::with_capacity(64), |mut s, b| {
            write!(s, "{b:02x}").unwrap();
            s
        })
    }
}

/// Sets `a.b.c=value` in a TOML table. The value is parsed as TOML and
/// falls back to a bare string.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(Error::Config(format!("override `{assignment}` has an empty key")));
    }
    let value = toml::from_str::<toml::Table>(&format!("v = {}", raw.trim()))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    let mut cur = table;
    for part in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("`{part}` in `{key}` is not a section")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Stage tags for seed derivation.
const SEED_SELECTION: u64 = 1;
const SEED_WRAPPER: u64 = 2;
const SEED_WEIGHTS: u64 = 3;
const SEED_CV: u64 = 4;
const SEED_FOLD: u64 = 0x100;

/// splitmix64 of `seed` mixed with a stage tag.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Weights fitted to one training matrix, with their histories.
#[derive(Clone, Debug)]
pub struct FittedNetwork {
    pub spec: NetworkSpec,
    pub weights: NetworkWeights,
    pub aeho_history: Vec<f64>,
    pub loss_history: Vec<f64>,
}

/// Weight search (if enabled) for `generations` generations, then
/// `epochs` of backpropagation.
pub fn fit_network(
    inputs: &[Vec<f64>],
    targets: &[f64],
    config: &ExperimentConfig,
    generations: usize,
    epochs: usize,
    seed: u64,
) -> Result<FittedNetwork> {
    if inputs.is_empty() {
        return Err(Error::invalid("no training rows"));
    }
    let spec = NetworkSpec::with_hidden(inputs[0].len(), &config.network.hidden)?;
    let scale = config.network.init_scale;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let (start, aeho_history) = if config.stages.weight_search && generations > 0 {
        let aeho = AehoConfig {
            max_generations: generations,
            seed: derive_seed(seed, SEED_WEIGHTS) ^ config.aeho.seed,
            ..config.aeho.clone()
        };
        let dim = spec.parameter_count();
        let initial: Vec<Vec<f64>> = (0..aeho.clans * aeho.clan_size)
            .map(|_| (0..dim).map(|_| rng.random_range(-scale..=scale)).collect())
            .collect();
        let order = canonical_order(inputs, targets);
        let fitness =
            |p: &[f64]| mean_squared_error_flat(&spec, p, inputs, targets, &order).map_or(f64::NAN, |mse| -mse);
        let outcome = run_aeho_from(fitness, initial, &aeho).stage("weight-search")?;
        (unflatten(&spec, &outcome.best.position)?, outcome.history)
    } else {
        (NetworkWeights::random(&spec, scale, &mut rng), Vec::new())
    };

    let params = TrainParams {
        epochs,
        learning_rate: config.backprop.learning_rate,
        mode: config.backprop.mode,
        seed: rng.random(),
    };
    let (weights, loss_history) = train_epochs(&spec, &start, inputs, targets, &params).stage("backprop")?;
    Ok(FittedNetwork {
        spec,
        weights,
        aeho_history,
        loss_history,
    })
}

fn targets_of(labels: &[BinaryLabel]) -> Vec<f64> {
    labels.iter().map(|l| l.as_f64()).collect()
}

fn project(rows: &[Vec<f64>], cols: &[usize], pick: &[usize]) -> Vec<Vec<f64>> {
    pick.iter()
        .map(|&r| cols.iter().map(|&c| rows[r][c]).collect())
        .collect()
}

/// Wrapper score of `mask`: mean inner-fold validation accuracy of a
/// budget-capped network minus `lambda * selected / total`.
pub fn wrapper_fitness(
    features: &[Vec<f64>],
    labels: &[BinaryLabel],
    mask: &FeatureMask,
    config: &ExperimentConfig,
) -> Result<f64> {
    let seed = derive_seed(config.seed, SEED_WRAPPER);
    let folds = kfold_indices(labels, config.wrapper.inner_folds, seed)?;
    let cols = mask.indices();
    let targets = targets_of(labels);
    let generations = config.aeho.max_generations / config.wrapper.generation_divisor;
    let epochs = config.backprop.epochs / config.wrapper.epoch_divisor;
    let mut total = 0.0;
    for fold in &folds {
        let x = project(features, &cols, &fold.train);
        let y: Vec<f64> = fold.train.iter().map(|&i| targets[i]).collect();
        let fitted = fit_network(&x, &y, config, generations.max(1), epochs, seed)?;
        let mut correct = 0usize;
        for &i in &fold.test {
            let row: Vec<f64> = cols.iter().map(|&c| features[i][c]).collect();
            let out = predict(&fitted.spec, &fitted.weights, &row)?;
            if BinaryLabel::from(out >= config.network.threshold) == labels[i] {
                correct += 1;
            }
        }
        total += correct as f64 / fold.test.len() as f64;
    }
    let accuracy = total / folds.len() as f64;
    Ok(accuracy - config.mcfa.lambda * mask.count() as f64 / mask.len() as f64)
}

/// Result of the feature-selection stage.
#[derive(Clone, Debug)]
pub struct Selection {
    pub mask: FeatureMask,
    pub best_fitness: f64,
    pub history: Vec<f64>,
    pub evaluations: usize,
}

/// Runs wrapper feature selection over the attributes of a preprocessed
/// dataset, or selects everything when the stage is disabled.
pub fn select_features(ds: &Dataset, config: &ExperimentConfig) -> Result<Selection> {
    let dim = ds.schema.len();
    if dim == 0 {
        return Err(Error::invalid("dataset has no attributes"));
    }
    if !config.stages.feature_selection {
        return Ok(Selection {
            mask: FeatureMask::all(dim),
            best_fitness: f64::NAN,
            history: Vec::new(),
            evaluations: 0,
        });
    }
    let table = MinMaxTable::fit(ds)?;
    let features = table.transform(ds, &ds.schema)?;
    let labels = ds.labels();
    let mcfa = McfaConfig {
        seed: derive_seed(config.seed, SEED_SELECTION) ^ config.mcfa.seed,
        ..config.mcfa.clone()
    };
    // A failing candidate poisons the score, which the search reports.
    let fitness = |m: &FeatureMask| wrapper_fitness(&features, &labels, m, config).unwrap_or(f64::NAN);
    let out = run_mcfa(fitness, dim, &mcfa)?;
    Ok(Selection {
        mask: out.mask,
        best_fitness: out.best_fitness,
        history: out.history,
        evaluations: out.evaluations,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub seed: u64,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub training_rows: usize,
    pub selection_history: Vec<f64>,
    pub weight_search_history: Vec<f64>,
    pub loss_history: Vec<f64>,
}

/// Everything needed to score a record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format: String,
    /// Attributes the mask ranges over.
    pub attributes: Vec<Attribute>,
    pub mask: FeatureMask,
    /// Scaling ranges of the selected attributes, in selection order.
    pub normalization: MinMaxTable,
    pub spec: NetworkSpec,
    /// Flattened parameters, see [`flatten`].
    pub weights: Vec<f64>,
    pub threshold: f64,
    pub metadata: TrainingMetadata,
}

impl TrainedModel {
    pub fn selected(&self) -> Vec<Attribute> {
        self.mask.indices().into_iter().map(|j| self.attributes[j]).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.format != MODEL_FORMAT {
            return Err(Error::invalid(format!("unsupported model format `{}`", self.format)));
        }
        if self.mask.len() != self.attributes.len() {
            return Err(Error::DimensionMismatch {
                expected: self.attributes.len(),
                actual: self.mask.len(),
            });
        }
        if self.mask.count() != self.spec.inputs() {
            return Err(Error::DimensionMismatch {
                expected: self.spec.inputs(),
                actual: self.mask.count(),
            });
        }
        NetworkSpec::new(self.spec.layer_sizes.clone())?;
        unflatten(&self.spec, &self.weights)?;
        if self.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::invalid("model weights are not finite"));
        }
        for a in self.selected() {
            if self.normalization.get(a).is_none() {
                return Err(Error::invalid(format!("model has no scaling range for `{a}`")));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("model serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: TrainedModel = serde_json::from_str(text)?;
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        TrainedModel::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn scorer(&self) -> Result<Scorer> {
        self.validate()?;
        let entries = self
            .selected()
            .into_iter()
            .map(|a| *self.normalization.get(a).expect("validated"))
            .collect();
        Ok(Scorer {
            spec: self.spec.clone(),
            weights: unflatten(&self.spec, &self.weights)?,
            entries,
            threshold: self.threshold,
        })
    }
}

/// A model unpacked for repeated scoring.
#[derive(Clone, Debug)]
pub struct Scorer {
    spec: NetworkSpec,
    weights: NetworkWeights,
    entries: Vec<MinMaxEntry>,
    threshold: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: BinaryLabel,
    pub score: f64,
}

impl Scorer {
    pub fn attributes(&self) -> Vec<Attribute> {
        self.entries.iter().map(|e| e.attribute).collect()
    }

    /// Scores raw values given in [`Scorer::attributes`] order.
    pub fn score(&self, raw: &[f64]) -> Result<Prediction> {
        if raw.len() != self.entries.len() {
            return Err(Error::DimensionMismatch {
                expected: self.entries.len(),
                actual: raw.len(),
            });
        }
        if let Some(i) = raw.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("`{}` is not finite", self.entries[i].attribute)));
        }
        let x: Vec<f64> = self.entries.iter().zip(raw).map(|(e, &v)| e.scale(v)).collect();
        let score = predict(&self.spec, &self.weights, &x)?;
        Ok(Prediction {
            label: BinaryLabel::from(score >= self.threshold),
            score,
        })
    }

    /// Scores row `row` of `ds`. Absent attributes are an error.
    pub fn score_row(&self, ds: &Dataset, row: usize) -> Result<Prediction> {
        let raw = self
            .entries
            .iter()
            .map(|e| {
                ds.value(row, e.attribute)
                    .ok_or_else(|| Error::invalid(format!("row {row}: `{}` is missing", e.attribute)))
            })
            .collect::<Result<Vec<f64>>>()?;
        self.score(&raw)
    }
}

/// Scores every row of `ds`, one result per row.
pub fn predict_dataset(model: &TrainedModel, ds: &Dataset) -> Result<Vec<Result<Prediction>>> {
    let scorer = model.scorer()?;
    Ok((0..ds.len()).map(|r| scorer.score_row(ds, r)).collect())
}

/// Fits normalization and network on a preprocessed dataset with a fixed mask.
fn fit_model(
    ds: &Dataset,
    mask: &FeatureMask,
    config: &ExperimentConfig,
    seed: u64,
    selection_history: Vec<f64>,
) -> Result<TrainedModel> {
    if mask.len() != ds.schema.len() {
        return Err(Error::DimensionMismatch {
            expected: ds.schema.len(),
            actual: mask.len(),
        });
    }
    let selected: Vec<Attribute> = mask.indices().into_iter().map(|j| ds.schema[j]).collect();
    let full = MinMaxTable::fit(ds)?;
    let normalization = MinMaxTable {
        entries: selected.iter().map(|&a| *full.get(a).expect("fitted")).collect(),
    };
    let inputs = normalization.transform(ds, &selected)?;
    let targets = targets_of(&ds.labels());
    let fitted = fit_network(
        &inputs,
        &targets,
        config,
        config.aeho.max_generations,
        config.backprop.epochs,
        seed,
    )?;
    Ok(TrainedModel {
        format: MODEL_FORMAT.to_string(),
        attributes: ds.schema.clone(),
        mask: mask.clone(),
        normalization,
        spec: fitted.spec,
        weights: flatten(&fitted.weights),
        threshold: config.network.threshold,
        metadata: TrainingMetadata {
            seed: config.seed,
            config_hash: config.hash(),
            config: config.clone(),
            training_rows: ds.len(),
            selection_history,
            weight_search_history: fitted.aeho_history,
            loss_history: fitted.loss_history,
        },
    })
}

/// Output of [`train_pipeline`].
#[derive(Clone, Debug)]
pub struct TrainingRun {
    pub model: TrainedModel,
    pub preprocessing: PreprocessReport,
    pub selection: Selection,
    /// Metrics of the final model on its own training rows.
    pub training_metrics: MetricsReport,
}

/// Preprocessing, feature selection and weight fitting on an in-memory
/// dataset.
pub fn train_on_dataset(ds: &Dataset, config: &ExperimentConfig) -> Result<TrainingRun> {
    config.validate()?;
    let (clean, preprocessing) = preprocess(ds, config.preprocess.k_neighbors).stage("preprocess")?;
    let selection = select_features(&clean, config).stage("feature-selection")?;
    let model = fit_model(
        &clean,
        &selection.mask,
        config,
        derive_seed(config.seed, SEED_WEIGHTS),
        selection.history.clone(),
    )
    .stage("training")?;
    let scorer = model.scorer()?;
    let mut cm = ConfusionMatrix::default();
    for (r, truth) in clean.labels().into_iter().enumerate() {
        cm.add(scorer.score_row(&clean, r)?.label, truth);
    }
    let training_metrics = compute_metrics(&cm)?;
    Ok(TrainingRun {
        model,
        preprocessing,
        selection,
        training_metrics,
    })
}

/// Reads the configured dataset and trains on it.
pub fn train_pipeline(config: &ExperimentConfig) -> Result<TrainingRun> {
    let ds = load_dataset(&config.dataset_path()).stage("load")?;
    train_on_dataset(&ds, config)
}

/// Reads a CSV, with or without a header row.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    let first = text.lines().next().unwrap_or("");
    let headed = first
        .split(',')
        .next()
        .is_some_and(|f| !f.trim().is_empty() && f.trim() != "?" && f.trim().parse::<f64>().is_err());
    if headed {
        crate::dataio::parse_csv_with_header(path)
    } else {
        parse_csv(path, &Attribute::ALL)
    }
}

fn history_text(values: &[f64]) -> String {
    let mut out = String::new();
    for (g, v) in values.iter().enumerate() {
        writeln!(out, "{} {v}", g + 1).unwrap();
    }
    out
}

/// Plain-text training report: preprocessing counts, the selected subset
/// and training-set metrics.
pub fn training_report(run: &TrainingRun) -> String {
    let m = &run.model;
    let mut out = String::new();
    writeln!(out, "config_hash={}", m.metadata.config_hash).unwrap();
    writeln!(out, "seed={}", m.metadata.seed).unwrap();
    out.push_str(&run.preprocessing.render());
    let names: Vec<&str> = m.selected().iter().map(|a| a.name()).collect();
    writeln!(out, "selected_count={}", names.len()).unwrap();
    writeln!(out, "selected={}", names.join(",")).unwrap();
    writeln!(out, "mask={}", m.mask).unwrap();
    writeln!(out, "selection_evaluations={}", run.selection.evaluations).unwrap();
    writeln!(out, "layers={:?}", m.spec.layer_sizes).unwrap();
    if let Some(l) = m.metadata.loss_history.last() {
        writeln!(out, "final_mse={l}").unwrap();
    }
    out.push('\n');
    let rows = [("train".to_string(), run.training_metrics)];
    out.push_str(&crate::metrics::report_table(&rows));
    out.push('\n');
    out.push_str(&crate::metrics::report_kv(&rows));
    out
}

/// Writes `model.json`, `report.txt` and the history files into `dir`.
/// Returns the written paths.
pub fn write_training_artifacts(run: &TrainingRun, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let meta = &run.model.metadata;
    let files = [
        ("model.json", run.model.to_json()),
        ("report.txt", training_report(run)),
        ("selection_history.txt", history_text(&meta.selection_history)),
        ("weight_search_history.txt", history_text(&meta.weight_search_history)),
        ("loss_history.txt", history_text(&meta.loss_history)),
    ];
    let mut written = Vec::new();
    for (name, body) in files {
        let p = dir.join(name);
        std::fs::write(&p, body)?;
        written.push(p);
    }
    Ok(written)
}

/// One scored test row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RowPrediction {
    /// Row index in the preprocessed dataset.
    pub row: usize,
    pub truth: BinaryLabel,
    pub label: BinaryLabel,
    pub score: f64,
}

#[derive(Clone, Debug)]
pub struct FoldResult {
    pub model: TrainedModel,
    pub confusion: ConfusionMatrix,
    pub metrics: MetricsReport,
    pub predictions: Vec<RowPrediction>,
}

#[derive(Clone, Debug)]
pub struct FoldReport {
    pub index: usize,
    pub train_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
    /// `Err` holds the failure message of a fold that could not be run.
    pub outcome: std::result::Result<FoldResult, String>,
}

#[derive(Clone, Debug)]
pub struct Evaluation {
    /// The preprocessed dataset the folds index into.
    pub data: Dataset,
    pub folds: Vec<FoldReport>,
    /// Per-measure mean over successful folds where the measure is defined.
    pub aggregate: MetricsReport,
    /// Pooled test predictions split by chest-pain type.
    pub strata: BTreeMap<u8, MetricsReport>,
    pub selected: Vec<Attribute>,
}

impl Evaluation {
    pub fn successes(&self) -> impl Iterator<Item = &FoldResult> {
        self.folds.iter().filter_map(|f| f.outcome.as_ref().ok())
    }
}

fn mean_report(reports: &[MetricsReport]) -> MetricsReport {
    let mean = |get: fn(&MetricsReport) -> Option<f64>| {
        let vals: Vec<f64> = reports.iter().filter_map(get).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    };
    MetricsReport {
        accuracy: mean(|m| m.accuracy),
        prevalence: mean(|m| m.prevalence),
        ppv: mean(|m| m.ppv),
        npv: mean(|m| m.npv),
        sensitivity: mean(|m| m.sensitivity),
        specificity: mean(|m| m.specificity),
        f1: mean(|m| m.f1),
        error: mean(|m| m.error),
    }
}

fn run_fold(
    data: &Dataset,
    train: &[usize],
    test: &[usize],
    mask: &FeatureMask,
    config: &ExperimentConfig,
    seed: u64,
) -> Result<FoldResult> {
    let model = fit_model(&data.subset(train), mask, config, seed, Vec::new())?;
    let scorer = model.scorer()?;
    let mut confusion = ConfusionMatrix::default();
    let mut predictions = Vec::with_capacity(test.len());
    for &row in test {
        let p = scorer.score_row(data, row)?;
        let truth = data.records[row].label();
        confusion.add(p.label, truth);
        predictions.push(RowPrediction {
            row,
            truth,
            label: p.label,
            score: p.score,
        });
    }
    let metrics = compute_metrics(&confusion)?;
    Ok(FoldResult {
        model,
        confusion,
        metrics,
        predictions,
    })
}

/// Stratified k-fold evaluation of `model`'s configuration with its mask
/// held fixed: each fold refits normalization and weights on its training
/// part only.
pub fn evaluate(model: &TrainedModel, ds: &Dataset, k: usize) -> Result<Evaluation> {
    use rayon::prelude::*;
    model.validate()?;
    let config = &model.metadata.config;
    let (data, _) = preprocess(ds, config.preprocess.k_neighbors).stage("preprocess")?;
    let mut mask = vec![false; data.schema.len()];
    for a in model.selected() {
        let col = data
            .column(a)
            .ok_or_else(|| Error::invalid(format!("dataset has no `{a}` column")))?;
        mask[col] = true;
    }
    let mask = FeatureMask::new(mask)?;
    let folds = kfold_indices(&data.labels(), k, derive_seed(config.seed, SEED_CV)).stage("evaluate")?;
    let reports: Vec<FoldReport> = folds
        .into_par_iter()
        .enumerate()
        .map(|(index, fold)| {
            let seed = derive_seed(config.seed, SEED_FOLD + index as u64);
            let outcome = run_fold(&data, &fold.train, &fold.test, &mask, config, seed).map_err(|e| e.to_string());
            FoldReport {
                index,
                train_rows: fold.train,
                test_rows: fold.test,
                outcome,
            }
        })
        .collect();

    let ok: Vec<&FoldResult> = reports.iter().filter_map(|f| f.outcome.as_ref().ok()).collect();
    if ok.is_empty() {
        let first = reports.iter().find_map(|f| f.outcome.as_ref().err()).cloned();
        return Err(Error::Stage {
            stage: "evaluate",
            source: Box::new(Error::invalid(format!(
                "every fold failed; first failure: {}",
                first.unwrap_or_default()
            ))),
        });
    }
    let aggregate = mean_report(&ok.iter().map(|f| f.metrics).collect::<Vec<_>>());

    let mut by_cp: BTreeMap<u8, ConfusionMatrix> = BTreeMap::new();
    for f in &ok {
        for p in &f.predictions {
            if let Some(cp) = data.value(p.row, Attribute::Cp) {
                by_cp.entry(cp as u8).or_default().add(p.label, p.truth);
            }
        }
    }
    let strata = by_cp
        .into_iter()
        .map(|(cp, cm)| Ok((cp, compute_metrics(&cm)?)))
        .collect::<Result<_>>()?;
    let selected = model.selected();
    Ok(Evaluation {
        data,
        folds: reports,
        aggregate,
        strata,
        selected,
    })
}

/// Per-fold, mean and per-stratum metrics as a table followed by
/// key=value lines.
pub fn evaluation_report(ev: &Evaluation) -> String {
    let mut rows: Vec<(String, MetricsReport)> = Vec::new();
    let mut failures = String::new();
    for f in &ev.folds {
        match &f.outcome {
            Ok(r) => rows.push((format!("fold{}", f.index + 1), r.metrics)),
            Err(e) => writeln!(failures, "fold{}.failed={e}", f.index + 1).unwrap(),
        }
    }
    rows.push(("mean".to_string(), ev.aggregate));
    for (cp, m) in &ev.strata {
        rows.push((format!("cp{cp}"), *m));
    }
    let names: Vec<&str> = ev.selected.iter().map(|a| a.name()).collect();
    let mut out = String::new();
    writeln!(out, "folds={}", ev.folds.len()).unwrap();
    writeln!(out, "selected_count={}", names.len()).unwrap();
    writeln!(out, "selected={}", names.join(",")).unwrap();
    out.push_str(&failures);
    out.push('\n');
    out.push_str(&crate::metrics::report_table(&rows));
    out.push('\n');
    out.push_str(&crate::metrics::report_kv(&rows));
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Severity {
    Normal,
    Abnormal,
}

/// One scored stream record. The timestamp is carried for callers but is
/// not part of the emitted line.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AlertEvent {
    pub id: serde_json::Value,
    #[serde(skip)]
    pub timestamp: Option<serde_json::Value>,
    pub label: u8,
    pub score: f64,
    pub severity: Severity,
}

impl AlertEvent {
    pub fn new(id: serde_json::Value, timestamp: Option<serde_json::Value>, p: Prediction) -> Self {
        AlertEvent {
            id,
            timestamp,
            label: p.label.value(),
            score: p.score,
            severity: match p.label {
                BinaryLabel::Normal => Severity::Normal,
                BinaryLabel::Abnormal => Severity::Abnormal,
            },
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamSummary {
    /// Non-blank lines read.
    pub processed: usize,
    pub normal: usize,
    pub abnormal: usize,
    pub malformed: usize,
}

#[derive(Serialize)]
struct StreamError<'a> {
    line: usize,
    error: &'a str,
}

/// Parses one stream line into an event.
pub fn score_line(scorer: &Scorer, line: &str, line_no: usize) -> Result<AlertEvent> {
    let value: serde_json::Value = serde_json::from_str(line).map_err(|e| Error::Malformed {
        line: line_no,
        message: e.to_string(),
    })?;
    let obj = value.as_object().ok_or_else(|| Error::Malformed {
        line: line_no,
        message: "expected a JSON object".into(),
    })?;
    let raw = scorer
        .attributes()
        .into_iter()
        .map(|a| match obj.get(a.name()) {
            Some(v) => v.as_f64().ok_or_else(|| Error::Malformed {
                line: line_no,
                message: format!("`{a}` is not a number"),
            }),
            None => Err(Error::Malformed {
                line: line_no,
                message: format!("required attribute `{a}` is absent"),
            }),
        })
        .collect::<Result<Vec<f64>>>()?;
    let p = scorer.score(&raw).map_err(|e| Error::Malformed {
        line: line_no,
        message: e.to_string(),
    })?;
    let id = obj
        .get("id")
        .cloned()
        .unwrap_or_else(|| serde_json::Value::from(line_no));
    Ok(AlertEvent::new(id, obj.get("timestamp").cloned(), p))
}

/// Scores newline-delimited JSON objects from `source`, writing one alert or
/// error line per non-blank input line to `sink`, in input order.
pub fn predict_stream<R: BufRead, W: Write>(model: &TrainedModel, source: R, mut sink: W) -> Result<StreamSummary> {
    let scorer = model.scorer()?;
    let mut summary = StreamSummary::default();
    for (i, line) in source.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        summary.processed += 1;
        let out = match score_line(&scorer, &line, i + 1) {
            Ok(ev) => {
                match ev.severity {
                    Severity::Normal => summary.normal += 1,
                    Severity::Abnormal => summary.abnormal += 1,
                }
                serde_json::to_string(&ev)?
            }
            Err(e) => {
                summary.malformed += 1;
                let msg = match &e {
                    Error::Malformed { message, .. } => message.clone(),
                    other => other.to_string(),
                };
                serde_json::to_string(&StreamError {
                    line: i + 1,
                    error: &msg,
                })?
            }
        };
        writeln!(sink, "{out}")?;
    }
    sink.flush()?;
    Ok(summary)
}

/// JSON-lines form of dataset rows, keyed by attribute name, with `id`
/// set to the row index.
pub fn rows_as_json_lines(ds: &Dataset, rows: &[usize]) -> String {
    let mut out = String::new();
    for &r in rows {
        let mut obj = serde_json::Map::new();
        obj.insert("id".into(), serde_json::Value::from(r));
        for (col, a) in ds.schema.iter().enumerate() {
            if let Some(v) = ds.records[r].values[col] {
                obj.insert(a.name().into(), serde_json::Value::from(v));
            }
        }
        out.push_str(&serde_json::Value::Object(obj).to_string());
        out.push('\n');
    }
    out
}
