//! Experiment configuration and the end-to-end runner: build or load a
//! split, estimate propensities, train the configured method, evaluate on
//! the uniform-exposure test partition, persist the model and append a CSV
//! row. Multi-seed sweeps and the injection sweep build on the same runner.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::baselines::{assemble_training_set, train_bpr, train_sp2v, train_wsp2v, AdaptationMode};
use crate::cause::{predict, train_cause, CauseVariant};
use crate::error::{CauseError, Result};
use crate::ingest::{
    gen_synthetic, load_split_from_ratings, read_split_manifest, RatingFormat, SplitDataset,
    SplitFractions, SyntheticConfig,
};
use crate::math::inner_product;
use crate::metrics::{mean_and_std, MetricReport, CSV_HEADER};
use crate::model_io::{save_model, VariantTag};
use crate::propensity::estimate_propensity;
use crate::types::{EmbeddingSet, Hyperparams, Interaction, SampleOrigin, TrainMode};

/// A trainable method: the joint causal trainer with its prediction variant,
/// or a baseline with its adaptation mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    CausE(CauseVariant),
    Sp2v(AdaptationMode),
    Wsp2v(AdaptationMode),
    Bpr(AdaptationMode),
}

impl Method {
    pub fn from_token(token: &str) -> Result<Self> {
        let t = token.to_ascii_lowercase();
        match t.as_str() {
            "cause-prod-c" => Ok(Method::CausE(CauseVariant::ProdC)),
            "cause-prod-t" => Ok(Method::CausE(CauseVariant::ProdT)),
            "cause-avg" => Ok(Method::CausE(CauseVariant::Avg)),
            "sp2v-no" => Ok(Method::Sp2v(AdaptationMode::No)),
            "sp2v-blend" => Ok(Method::Sp2v(AdaptationMode::Blend)),
            "sp2v-test" => Ok(Method::Sp2v(AdaptationMode::Test)),
            "wsp2v-no" => Ok(Method::Wsp2v(AdaptationMode::No)),
            "wsp2v-blend" => Ok(Method::Wsp2v(AdaptationMode::Blend)),
            "wsp2v-test" => Ok(Method::Wsp2v(AdaptationMode::Test)),
            "bpr-no" => Ok(Method::Bpr(AdaptationMode::No)),
            "bpr-blend" => Ok(Method::Bpr(AdaptationMode::Blend)),
            "bpr-test" => Ok(Method::Bpr(AdaptationMode::Test)),
            _ => Err(CauseError::Config(format!(
                "unsupported method `{token}`"
            ))),
        }
    }

    pub fn token(&self) -> String {
        match self {
            Method::CausE(CauseVariant::ProdC) => "cause-prod-c".into(),
            Method::CausE(CauseVariant::ProdT) => "cause-prod-t".into(),
            Method::CausE(CauseVariant::Avg) => "cause-avg".into(),
            Method::Sp2v(m) => format!("sp2v-{}", m.token()),
            Method::Wsp2v(m) => format!("wsp2v-{}", m.token()),
            Method::Bpr(m) => format!("bpr-{}", m.token()),
        }
    }

    pub fn variant_tag(&self) -> VariantTag {
        match self {
            Method::CausE(CauseVariant::ProdC) => VariantTag::ProdC,
            Method::CausE(CauseVariant::ProdT) => VariantTag::ProdT,
            Method::CausE(CauseVariant::Avg) => VariantTag::Avg,
            Method::Sp2v(_) => VariantTag::Sp2v,
            Method::Wsp2v(_) => VariantTag::Wsp2v,
            Method::Bpr(_) => VariantTag::Bpr,
        }
    }

    /// Ranking-only methods report AUC without loss metrics.
    pub fn ranking_only(&self) -> bool {
        matches!(self, Method::Bpr(_))
    }
}

/// Where the events come from.
#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSpec {
    Synthetic(SyntheticConfig),
    Ratings { path: PathBuf, format: RatingFormat },
    Manifest(PathBuf),
}

/// Every configurable knob as an optional override. Config files and CLI
/// flags both produce one of these; flags are merged over file values.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigOverlay {
    pub dataset: Option<String>,
    pub format: Option<String>,
    pub manifest: Option<String>,
    pub dataset_name: Option<String>,
    pub method: Option<String>,
    pub methods: Option<String>,
    pub seed: Option<u64>,
    pub num_seeds: Option<usize>,
    pub fraction_train: Option<f64>,
    pub fraction_validation: Option<f64>,
    pub fraction_test: Option<f64>,
    pub s_t_injection: Option<f64>,
    pub dim: Option<usize>,
    pub lambda_t: Option<f64>,
    pub lambda_c: Option<f64>,
    pub lambda_dist: Option<f64>,
    pub lr_start: Option<f64>,
    pub lr_end: Option<f64>,
    pub momentum: Option<f64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub init_scale: Option<f64>,
    pub mode: Option<String>,
    pub propensity_alpha: Option<f64>,
    pub ips_cap: Option<f64>,
    pub normalize_weights: Option<bool>,
    pub negatives_per_positive: Option<usize>,
    pub export_propensities: Option<String>,
    pub synth_users: Option<usize>,
    pub synth_items: Option<usize>,
    pub synth_latent_dim: Option<usize>,
    pub synth_events_per_user: Option<usize>,
    pub synth_zipf: Option<f64>,
    pub synth_true_bias: Option<f64>,
    pub output_dir: Option<String>,
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| {
        CauseError::Config(format!("invalid value for `{key}`: `{value}`"))
    })
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" => Ok(true),
        "false" | "0" => Ok(false),
        _ => Err(CauseError::Config(format!(
            "invalid value for `{key}`: `{value}` (expected true/false)"
        ))),
    }
}

impl ConfigOverlay {
    /// Set one key from its text value. Unknown keys are errors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "dataset" => self.dataset = Some(value.to_string()),
            "format" => self.format = Some(value.to_string()),
            "manifest" => self.manifest = Some(value.to_string()),
            "dataset_name" => self.dataset_name = Some(value.to_string()),
            "method" => self.method = Some(value.to_string()),
            "methods" => self.methods = Some(value.to_string()),
            "seed" => self.seed = Some(parse_value(key, value)?),
            "num_seeds" => self.num_seeds = Some(parse_value(key, value)?),
            "fraction_train" => self.fraction_train = Some(parse_value(key, value)?),
            "fraction_validation" => self.fraction_validation = Some(parse_value(key, value)?),
            "fraction_test" => self.fraction_test = Some(parse_value(key, value)?),
            "s_t_injection" => self.s_t_injection = Some(parse_value(key, value)?),
            "dim" => self.dim = Some(parse_value(key, value)?),
            "lambda_t" => self.lambda_t = Some(parse_value(key, value)?),
            "lambda_c" => self.lambda_c = Some(parse_value(key, value)?),
            "lambda_dist" => self.lambda_dist = Some(parse_value(key, value)?),
            "lr_start" => self.lr_start = Some(parse_value(key, value)?),
            "lr_end" => self.lr_end = Some(parse_value(key, value)?),
            "momentum" => self.momentum = Some(parse_value(key, value)?),
            "epochs" => self.epochs = Some(parse_value(key, value)?),
            "batch_size" => self.batch_size = Some(parse_value(key, value)?),
            "init_scale" => self.init_scale = Some(parse_value(key, value)?),
            "mode" => self.mode = Some(value.to_string()),
            "propensity_alpha" => self.propensity_alpha = Some(parse_value(key, value)?),
            "ips_cap" => self.ips_cap = Some(parse_value(key, value)?),
            "normalize_weights" => self.normalize_weights = Some(parse_bool(key, value)?),
            "negatives_per_positive" => {
                self.negatives_per_positive = Some(parse_value(key, value)?)
            }
            "export_propensities" => self.export_propensities = Some(value.to_string()),
            "synth_users" => self.synth_users = Some(parse_value(key, value)?),
            "synth_items" => self.synth_items = Some(parse_value(key, value)?),
            "synth_latent_dim" => self.synth_latent_dim = Some(parse_value(key, value)?),
            "synth_events_per_user" => {
                self.synth_events_per_user = Some(parse_value(key, value)?)
            }
            "synth_zipf" => self.synth_zipf = Some(parse_value(key, value)?),
            "synth_true_bias" => self.synth_true_bias = Some(parse_value(key, value)?),
            "output_dir" => self.output_dir = Some(value.to_string()),
            _ => {
                return Err(CauseError::Config(format!("unknown key `{key}`")));
            }
        }
        Ok(())
    }

    /// Read a key=value config file ('#' starts a comment line).
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut overlay = ConfigOverlay::default();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| CauseError::Parse {
                line: idx + 1,
                msg: "expected key=value".into(),
            })?;
            overlay.set(key.trim(), value.trim()).map_err(|e| match e {
                CauseError::Config(msg) => {
                    CauseError::Config(format!("line {}: {msg}", idx + 1))
                }
                other => other,
            })?;
        }
        Ok(overlay)
    }

    /// Overlay `self` on top of `base`; values in `self` win.
    pub fn merge_over(self, base: ConfigOverlay) -> ConfigOverlay {
        macro_rules! pick {
            ($field:ident) => {
                self.$field.or(base.$field)
            };
        }
        ConfigOverlay {
            dataset: pick!(dataset),
            format: pick!(format),
            manifest: pick!(manifest),
            dataset_name: pick!(dataset_name),
            method: pick!(method),
            methods: pick!(methods),
            seed: pick!(seed),
            num_seeds: pick!(num_seeds),
            fraction_train: pick!(fraction_train),
            fraction_validation: pick!(fraction_validation),
            fraction_test: pick!(fraction_test),
            s_t_injection: pick!(s_t_injection),
            dim: pick!(dim),
            lambda_t: pick!(lambda_t),
            lambda_c: pick!(lambda_c),
            lambda_dist: pick!(lambda_dist),
            lr_start: pick!(lr_start),
            lr_end: pick!(lr_end),
            momentum: pick!(momentum),
            epochs: pick!(epochs),
            batch_size: pick!(batch_size),
            init_scale: pick!(init_scale),
            mode: pick!(mode),
            propensity_alpha: pick!(propensity_alpha),
            ips_cap: pick!(ips_cap),
            normalize_weights: pick!(normalize_weights),
            negatives_per_positive: pick!(negatives_per_positive),
            export_propensities: pick!(export_propensities),
            synth_users: pick!(synth_users),
            synth_items: pick!(synth_items),
            synth_latent_dim: pick!(synth_latent_dim),
            synth_events_per_user: pick!(synth_events_per_user),
            synth_zipf: pick!(synth_zipf),
            synth_true_bias: pick!(synth_true_bias),
            output_dir: pick!(output_dir),
        }
    }
}

/// A fully resolved experiment description.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub dataset_name: String,
    pub fractions: SplitFractions,
    pub s_t_injection: f64,
    pub seed: u64,
    pub num_seeds: usize,
    pub method: Method,
    pub methods: Vec<Method>,
    pub hyper: Hyperparams,
    pub train_mode: TrainMode,
    pub propensity_alpha: f64,
    pub ips_cap: f64,
    pub normalize_weights: bool,
    pub negatives_per_positive: usize,
    pub export_propensities: Option<PathBuf>,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    /// Resolve an overlay against the documented defaults.
    pub fn resolve(overlay: ConfigOverlay) -> Result<Self> {
        let fractions = SplitFractions {
            train: overlay.fraction_train.unwrap_or(0.7),
            validation: overlay.fraction_validation.unwrap_or(0.1),
            test: overlay.fraction_test.unwrap_or(0.2),
        };
        fractions.validate()?;
        let seed = overlay.seed.unwrap_or(42);
        let s_t_injection = overlay.s_t_injection.unwrap_or(0.05);

        let dim = overlay.dim.unwrap_or(16);
        let mut hyper = Hyperparams::for_dim(dim);
        hyper.seed = seed;
        if let Some(v) = overlay.lambda_t {
            hyper.lambda_t = v;
        }
        if let Some(v) = overlay.lambda_c {
            hyper.lambda_c = v;
        }
        if let Some(v) = overlay.lambda_dist {
            hyper.lambda_dist = v;
        }
        if let Some(v) = overlay.lr_start {
            hyper.lr_start = v;
        }
        if let Some(v) = overlay.lr_end {
            hyper.lr_end = v;
        }
        if let Some(v) = overlay.momentum {
            hyper.momentum = v;
        }
        if let Some(v) = overlay.epochs {
            hyper.epochs = v;
        }
        if let Some(v) = overlay.batch_size {
            hyper.batch_size = v;
        }
        if let Some(v) = overlay.init_scale {
            hyper.init_scale = v;
        }
        hyper.validate()?;

        let dataset = match (&overlay.manifest, &overlay.dataset) {
            (Some(_), Some(d)) if d != "synthetic" => {
                return Err(CauseError::Config(
                    "set either `dataset` or `manifest`, not both".into(),
                ));
            }
            (Some(m), _) => DatasetSpec::Manifest(PathBuf::from(m)),
            (None, Some(d)) if d == "synthetic" => {
                DatasetSpec::Synthetic(Self::synth_config(&overlay, seed, fractions, s_t_injection))
            }
            (None, Some(d)) => DatasetSpec::Ratings {
                path: PathBuf::from(d),
                format: RatingFormat::from_token(
                    overlay.format.as_deref().unwrap_or("double_colon"),
                )?,
            },
            (None, None) => {
                DatasetSpec::Synthetic(Self::synth_config(&overlay, seed, fractions, s_t_injection))
            }
        };

        let dataset_name = overlay.dataset_name.unwrap_or_else(|| match &dataset {
            DatasetSpec::Synthetic(_) => "synthetic".to_string(),
            DatasetSpec::Ratings { path, .. } | DatasetSpec::Manifest(path) => path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "dataset".to_string()),
        });

        let method = Method::from_token(overlay.method.as_deref().unwrap_or("cause-prod-c"))?;
        let methods = match &overlay.methods {
            Some(list) => list
                .split(',')
                .map(|t| Method::from_token(t.trim()))
                .collect::<Result<Vec<_>>>()?,
            None => vec![method],
        };
        if methods.is_empty() {
            return Err(CauseError::Config("`methods` list is empty".into()));
        }

        Ok(ExperimentConfig {
            dataset,
            dataset_name,
            fractions,
            s_t_injection,
            seed,
            num_seeds: overlay.num_seeds.unwrap_or(10),
            method,
            methods,
            hyper,
            train_mode: TrainMode::from_token(overlay.mode.as_deref().unwrap_or("prod"))?,
            propensity_alpha: overlay.propensity_alpha.unwrap_or(1.0),
            ips_cap: overlay.ips_cap.unwrap_or(100.0),
            normalize_weights: overlay.normalize_weights.unwrap_or(false),
            negatives_per_positive: overlay.negatives_per_positive.unwrap_or(1),
            export_propensities: overlay.export_propensities.map(PathBuf::from),
            output_dir: PathBuf::from(overlay.output_dir.unwrap_or_else(|| "runs".to_string())),
        })
    }

    fn synth_config(
        overlay: &ConfigOverlay,
        seed: u64,
        fractions: SplitFractions,
        s_t_injection: f64,
    ) -> SyntheticConfig {
        let defaults = SyntheticConfig::default();
        SyntheticConfig {
            num_users: overlay.synth_users.unwrap_or(defaults.num_users),
            num_items: overlay.synth_items.unwrap_or(defaults.num_items),
            latent_dim: overlay.synth_latent_dim.unwrap_or(defaults.latent_dim),
            zipf_exponent: overlay.synth_zipf.unwrap_or(defaults.zipf_exponent),
            events_per_user: overlay
                .synth_events_per_user
                .unwrap_or(defaults.events_per_user),
            seed,
            true_bias: overlay.synth_true_bias.unwrap_or(defaults.true_bias),
            s_t_injection,
            fractions,
        }
    }
}

/// Parse a config file into a resolved experiment description.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    ExperimentConfig::resolve(ConfigOverlay::from_file(path)?)
}

/// Build the split a config describes, with an explicit seed so sweeps can
/// vary it per run. The same seed also drives training.
pub fn build_split(config: &ExperimentConfig, seed: u64) -> Result<SplitDataset> {
    build_split_with_injection(config, seed, config.s_t_injection)
}

fn build_split_with_injection(
    config: &ExperimentConfig,
    seed: u64,
    s_t_injection: f64,
) -> Result<SplitDataset> {
    match &config.dataset {
        DatasetSpec::Synthetic(synth) => {
            let cfg = SyntheticConfig {
                seed,
                s_t_injection,
                ..synth.clone()
            };
            Ok(gen_synthetic(&cfg)?.0)
        }
        DatasetSpec::Ratings { path, format } => {
            load_split_from_ratings(path, *format, config.fractions, s_t_injection, seed)
        }
        DatasetSpec::Manifest(path) => read_split_manifest(path),
    }
}

/// Every event a method trains on must come from the designated training
/// partitions; validation and test events are untouchable.
fn audit_training_events(split: &SplitDataset, training: &[Interaction]) -> Result<()> {
    let mut budget: HashMap<(usize, usize, bool, SampleOrigin), isize> = HashMap::new();
    for e in split.s_c.iter().chain(&split.s_t) {
        *budget.entry((e.user, e.item, e.reward, e.origin)).or_insert(0) += 1;
    }
    for e in training {
        let slot = budget
            .entry((e.user, e.item, e.reward, e.origin))
            .or_insert(0);
        *slot -= 1;
        if *slot < 0 {
            return Err(CauseError::Data(format!(
                "training event ({}, {}) is not drawn from the training partitions",
                e.user, e.item
            )));
        }
    }
    Ok(())
}

/// Result of one end-to-end run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: MetricReport,
    pub validation_report: Option<MetricReport>,
    pub model_path: PathBuf,
    pub csv_row: String,
}

fn train_method(
    config: &ExperimentConfig,
    method: Method,
    split: &SplitDataset,
    hyper: &Hyperparams,
) -> Result<EmbeddingSet> {
    match method {
        Method::CausE(variant) => {
            let mut training: Vec<Interaction> = split.s_c.clone();
            training.extend_from_slice(&split.s_t);
            audit_training_events(split, &training)?;
            train_cause(
                &split.s_c,
                &split.s_t,
                split.num_users,
                split.num_items,
                hyper,
                config.train_mode,
                variant,
            )
        }
        Method::Sp2v(mode) => {
            let events = assemble_training_set(split, mode)?;
            audit_training_events(split, &events)?;
            train_sp2v(&events, split.num_users, split.num_items, hyper, None)
        }
        Method::Wsp2v(mode) => {
            let events = assemble_training_set(split, mode)?;
            audit_training_events(split, &events)?;
            let propensities =
                estimate_propensity(&split.s_c, split.num_items, config.propensity_alpha)?;
            if let Some(path) = &config.export_propensities {
                propensities.write_to(path)?;
            }
            train_wsp2v(
                &events,
                split.num_users,
                split.num_items,
                hyper,
                &propensities,
                config.ips_cap,
                config.normalize_weights,
            )
        }
        Method::Bpr(mode) => {
            let events = assemble_training_set(split, mode)?;
            audit_training_events(split, &events)?;
            train_bpr(
                &events,
                split.num_users,
                split.num_items,
                hyper,
                config.negatives_per_positive,
            )
        }
    }
}

fn score_events(
    emb: &EmbeddingSet,
    method: Method,
    events: &[Interaction],
) -> Result<(Vec<f64>, Vec<bool>)> {
    let mut scores = Vec::with_capacity(events.len());
    let mut labels = Vec::with_capacity(events.len());
    for e in events {
        let s = match method {
            Method::CausE(variant) => predict(emb, variant, e.user, e.item)?,
            Method::Sp2v(_) | Method::Wsp2v(_) => {
                predict(emb, CauseVariant::ProdC, e.user, e.item)?
            }
            // Ranking scores stay on the raw inner-product scale.
            Method::Bpr(_) => inner_product(
                emb.gamma_c.try_row(e.user)?,
                emb.theta_c.try_row(e.item)?,
            )?,
        };
        scores.push(s);
        labels.push(e.reward);
    }
    Ok((scores, labels))
}

/// Evaluate a trained model on a split's test partition, plus the validation
/// partition when it supports the metrics (reported for tuning, never used
/// in training).
pub fn evaluate_model(
    emb: &EmbeddingSet,
    method: Method,
    split: &SplitDataset,
    dataset_name: &str,
    seed: u64,
) -> Result<(MetricReport, Option<MetricReport>)> {
    let (scores, labels) = score_events(emb, method, &split.test)?;
    let report = MetricReport::from_predictions(
        &method.token(),
        dataset_name,
        seed,
        &scores,
        &labels,
        !method.ranking_only(),
    )?;
    let validation_report = if split.validation.is_empty() {
        None
    } else {
        let (vs, vl) = score_events(emb, method, &split.validation)?;
        match MetricReport::from_predictions(
            &method.token(),
            dataset_name,
            seed,
            &vs,
            &vl,
            !method.ranking_only(),
        ) {
            Ok(r) => Some(r),
            Err(CauseError::UndefinedMetric(_)) => None,
            Err(e) => return Err(e),
        }
    };
    Ok((report, validation_report))
}

/// Append one report row to `<dir>/results.csv`, writing the header first
/// when the file is new. Returns the row text.
pub fn append_report_row(dir: &Path, report: &MetricReport) -> Result<String> {
    let row = report.to_csv_row();
    append_csv_row(dir, &row)?;
    Ok(row)
}

fn append_csv_row(dir: &Path, row: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    let path = dir.join("results.csv");
    let needs_header = !path.exists() || fs::metadata(&path)?.len() == 0;
    let mut file = fs::OpenOptions::new().create(true).append(true).open(&path)?;
    if needs_header {
        writeln!(file, "{CSV_HEADER}")?;
    }
    writeln!(file, "{row}")?;
    Ok(())
}

/// Score a persisted model on a split. The report carries the persisted
/// variant token as its method name.
pub fn evaluate_saved_model(
    emb: &EmbeddingSet,
    tag: VariantTag,
    split: &SplitDataset,
    dataset_name: &str,
    seed: u64,
) -> Result<(MetricReport, Option<MetricReport>)> {
    let method = match tag {
        VariantTag::ProdC => Method::CausE(CauseVariant::ProdC),
        VariantTag::ProdT => Method::CausE(CauseVariant::ProdT),
        VariantTag::Avg => Method::CausE(CauseVariant::Avg),
        VariantTag::Sp2v => Method::Sp2v(AdaptationMode::Blend),
        VariantTag::Wsp2v => Method::Wsp2v(AdaptationMode::Blend),
        VariantTag::Bpr => Method::Bpr(AdaptationMode::Blend),
    };
    let (mut report, mut validation) = evaluate_model(emb, method, split, dataset_name, seed)?;
    report.method = tag.token().to_string();
    if let Some(v) = &mut validation {
        v.method = tag.token().to_string();
    }
    Ok((report, validation))
}

fn run_on_split(
    config: &ExperimentConfig,
    method: Method,
    split: &SplitDataset,
    seed: u64,
) -> Result<RunOutcome> {
    let mut hyper = config.hyper.clone();
    hyper.seed = seed;
    let emb =
        train_method(config, method, split, &hyper).map_err(|e| e.at_stage("train"))?;
    let (report, validation_report) =
        evaluate_model(&emb, method, split, &config.dataset_name, seed)
            .map_err(|e| e.at_stage("evaluate"))?;

    fs::create_dir_all(&config.output_dir).map_err(CauseError::Io)?;
    let model_path = config
        .output_dir
        .join(format!("{}-seed{}.model", method.token(), seed));
    save_model(&model_path, &emb, method.variant_tag()).map_err(|e| e.at_stage("persist"))?;
    let csv_row = report.to_csv_row();
    append_csv_row(&config.output_dir, &csv_row).map_err(|e| e.at_stage("persist"))?;

    Ok(RunOutcome {
        report,
        validation_report,
        model_path,
        csv_row,
    })
}

/// One end-to-end run of the configured method at the configured seed.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunOutcome> {
    let split = build_split(config, config.seed).map_err(|e| e.at_stage("split"))?;
    run_on_split(config, config.method, &split, config.seed)
}

/// Aggregate of one method across the seeds of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub method: String,
    pub n_seeds: usize,
    pub mse_lift_mean: Option<f64>,
    pub mse_lift_std: Option<f64>,
    pub nll_lift_mean: Option<f64>,
    pub nll_lift_std: Option<f64>,
    pub auc_mean: f64,
    pub auc_std: f64,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub reports: Vec<MetricReport>,
    pub summaries: Vec<MethodSummary>,
    pub summary_path: PathBuf,
}

fn summarize_method(method: Method, reports: &[&MetricReport]) -> MethodSummary {
    let aucs: Vec<f64> = reports.iter().map(|r| r.auc).collect();
    let (auc_mean, auc_std) = mean_and_std(&aucs);
    let (mse_lift_mean, mse_lift_std, nll_lift_mean, nll_lift_std) = if method.ranking_only() {
        (None, None, None, None)
    } else {
        let m: Vec<f64> = reports.iter().filter_map(|r| r.mse_lift).collect();
        let n: Vec<f64> = reports.iter().filter_map(|r| r.nll_lift).collect();
        let (mm, ms) = mean_and_std(&m);
        let (nm, ns) = mean_and_std(&n);
        (Some(mm), Some(ms), Some(nm), Some(ns))
    };
    MethodSummary {
        method: method.token(),
        n_seeds: reports.len(),
        mse_lift_mean,
        mse_lift_std,
        nll_lift_mean,
        nll_lift_std,
        auc_mean,
        auc_std,
    }
}

fn fmt_opt9(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.9}")).unwrap_or_default()
}

/// Run every configured method across `num_seeds` consecutive seeds
/// (`seed, seed + 1, ...`); each run rebuilds the split at its own seed.
/// Appends per-run rows to `results.csv` and writes `sweep_summary.csv`.
pub fn run_sweep(config: &ExperimentConfig) -> Result<SweepOutcome> {
    if config.num_seeds == 0 {
        return Err(CauseError::Config("num_seeds must be positive".into()));
    }
    let mut reports = Vec::new();
    let mut summaries = Vec::new();
    for &method in &config.methods {
        let mut method_reports = Vec::new();
        for k in 0..config.num_seeds {
            let seed = config.seed + k as u64;
            let split = build_split(config, seed).map_err(|e| e.at_stage("split"))?;
            let outcome = run_on_split(config, method, &split, seed)?;
            method_reports.push(outcome.report);
        }
        let refs: Vec<&MetricReport> = method_reports.iter().collect();
        summaries.push(summarize_method(method, &refs));
        reports.extend(method_reports);
    }

    fs::create_dir_all(&config.output_dir)?;
    let summary_path = config.output_dir.join("sweep_summary.csv");
    let mut out = String::from(
        "method,n_seeds,mse_lift_mean,mse_lift_std,nll_lift_mean,nll_lift_std,auc_mean,auc_std\n",
    );
    for s in &summaries {
        writeln!(
            out,
            "{},{},{},{},{},{},{:.9},{:.9}",
            s.method,
            s.n_seeds,
            fmt_opt9(s.mse_lift_mean),
            fmt_opt9(s.mse_lift_std),
            fmt_opt9(s.nll_lift_mean),
            fmt_opt9(s.nll_lift_std),
            s.auc_mean,
            s.auc_std,
        )
        .expect("write to string");
    }
    fs::write(&summary_path, out)?;
    Ok(SweepOutcome {
        reports,
        summaries,
        summary_path,
    })
}

/// One (method, injection fraction) cell of the injection sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct InjectionRow {
    pub method: String,
    pub fraction: f64,
    pub mse_lift_mean: f64,
    pub mse_lift_std: f64,
    pub n_seeds: usize,
}

#[derive(Debug, Clone)]
pub struct InjectionOutcome {
    pub rows: Vec<InjectionRow>,
    pub csv_path: PathBuf,
}

/// Rebuild the split at each injection fraction and measure how the MSE lift
/// of every configured method responds, averaged over the sweep seeds.
/// Writes plot-ready rows to `injection_sweep.csv`.
pub fn run_injection_sweep(
    config: &ExperimentConfig,
    injection_fractions: &[f64],
) -> Result<InjectionOutcome> {
    if injection_fractions.is_empty() {
        return Err(CauseError::Config("no injection fractions given".into()));
    }
    if injection_fractions
        .iter()
        .any(|f| !(0.0..=0.5).contains(f))
    {
        return Err(CauseError::Config(
            "injection fractions must lie in [0, 0.5]".into(),
        ));
    }
    if injection_fractions.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CauseError::Config(
            "injection fractions must be strictly increasing".into(),
        ));
    }
    if config.num_seeds == 0 {
        return Err(CauseError::Config("num_seeds must be positive".into()));
    }
    for method in &config.methods {
        if method.ranking_only() {
            return Err(CauseError::Config(format!(
                "method `{}` reports no MSE lift; drop it from the injection sweep",
                method.token()
            )));
        }
    }

    let mut rows = Vec::new();
    for &method in &config.methods {
        for &fraction in injection_fractions {
            let mut lifts = Vec::new();
            for k in 0..config.num_seeds {
                let seed = config.seed + k as u64;
                let split = build_split_with_injection(config, seed, fraction)
                    .map_err(|e| e.at_stage("split"))?;
                let outcome = run_on_split(config, method, &split, seed)?;
                let lift = outcome.report.mse_lift.ok_or_else(|| {
                    CauseError::Data("run produced no MSE lift".into())
                })?;
                lifts.push(lift);
            }
            let (mean, std) = mean_and_std(&lifts);
            rows.push(InjectionRow {
                method: method.token(),
                fraction,
                mse_lift_mean: mean,
                mse_lift_std: std,
                n_seeds: lifts.len(),
            });
        }
    }

    fs::create_dir_all(&config.output_dir)?;
    let csv_path = config.output_dir.join("injection_sweep.csv");
    let mut out = String::from("method,fraction,mse_lift_mean,mse_lift_std,n_seeds\n");
    for r in &rows {
        writeln!(
            out,
            "{},{},{:.9},{:.9},{}",
            r.method, r.fraction, r.mse_lift_mean, r.mse_lift_std, r.n_seeds
        )
        .expect("write to string");
    }
    fs::write(&csv_path, out)?;
    Ok(InjectionOutcome { rows, csv_path })
}
