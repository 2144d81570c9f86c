//! `cause` — command-line front end for the counterfactual recommendation
//! harness: dataset preparation, training, evaluation and sweeps.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data/format error,
//! 4 training divergence.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cause_core::error::{CauseError, Result};
use cause_core::experiment::{
    append_report_row, evaluate_saved_model, run_experiment, run_injection_sweep, run_sweep,
    ConfigOverlay, ExperimentConfig, MethodSummary,
};
use cause_core::ingest::{
    gen_synthetic, load_split_from_ratings, read_split_manifest, write_split_manifest,
    RatingFormat, SplitDataset, SplitFractions, SplitMeta, SyntheticConfig,
};
use cause_core::metrics::MetricReport;
use cause_core::model_io::load_model;

#[derive(Parser)]
#[command(
    name = "cause",
    version,
    about = "Counterfactual recommendation trainers and experiment harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Resample a rating log into a skewed split manifest
    Skew(SkewArgs),
    /// Generate a synthetic benchmark split manifest
    Synth(SynthArgs),
    /// Train the configured method and evaluate it on the test partition
    Train(RunArgs),
    /// Evaluate a saved model file on a split manifest
    Eval(EvalArgs),
    /// Run the configured methods across consecutive seeds
    Sweep(RunArgs),
    /// Rebuild the split at several injection fractions and chart MSE lift
    InjectSweep(InjectArgs),
}

#[derive(Args)]
struct SkewArgs {
    /// Rating log (user, item, rating, timestamp per line)
    #[arg(long)]
    input: PathBuf,
    /// Log layout: comma | double_colon
    #[arg(long, default_value = "double_colon")]
    format: String,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Share of test-distribution events moved into training
    #[arg(long, default_value_t = 0.05)]
    injection: f64,
    /// train,validation,test event fractions
    #[arg(long, default_value = "0.7,0.1,0.2")]
    fractions: String,
    /// Manifest path to write (sidecar goes to <out>.meta)
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 200)]
    users: usize,
    #[arg(long, default_value_t = 100)]
    items: usize,
    #[arg(long, default_value_t = 8)]
    latent_dim: usize,
    /// Exponent of the Zipf logging exposure (0 = uniform)
    #[arg(long, default_value_t = 1.0)]
    zipf: f64,
    #[arg(long, default_value_t = 800)]
    events_per_user: usize,
    /// Additive bias inside the true reward sigmoid
    #[arg(long, default_value_t = -0.5, allow_hyphen_values = true)]
    true_bias: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 0.05)]
    injection: f64,
    #[arg(long, default_value = "0.7,0.1,0.2")]
    fractions: String,
    /// Manifest path to write (sidecar goes to <out>.meta)
    #[arg(long)]
    out: PathBuf,
}

/// Every config-file key is also a flag; flags win over file values.
#[derive(Args, Default)]
struct OverrideArgs {
    /// key=value config file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Rating log path, or `synthetic`
    #[arg(long)]
    dataset: Option<String>,
    /// Rating log layout: comma | double_colon
    #[arg(long)]
    format: Option<String>,
    /// Prebuilt split manifest path
    #[arg(long)]
    manifest: Option<String>,
    /// Name recorded in report rows
    #[arg(long)]
    dataset_name: Option<String>,
    /// cause-prod-c | cause-prod-t | cause-avg | {sp2v,wsp2v,bpr}-{no,blend,test}
    #[arg(long)]
    method: Option<String>,
    /// Comma list of methods for sweeps
    #[arg(long)]
    methods: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    num_seeds: Option<String>,
    #[arg(long)]
    fraction_train: Option<String>,
    #[arg(long)]
    fraction_validation: Option<String>,
    #[arg(long)]
    fraction_test: Option<String>,
    /// Share of test-distribution events moved into training
    #[arg(long)]
    s_t_injection: Option<String>,
    #[arg(long)]
    dim: Option<String>,
    #[arg(long)]
    lambda_t: Option<String>,
    #[arg(long)]
    lambda_c: Option<String>,
    #[arg(long)]
    lambda_dist: Option<String>,
    #[arg(long)]
    lr_start: Option<String>,
    #[arg(long)]
    lr_end: Option<String>,
    #[arg(long)]
    momentum: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    batch_size: Option<String>,
    #[arg(long)]
    init_scale: Option<String>,
    /// Which side duplicates task matrices: prod | user | both
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    propensity_alpha: Option<String>,
    #[arg(long)]
    ips_cap: Option<String>,
    /// true | false
    #[arg(long)]
    normalize_weights: Option<String>,
    #[arg(long)]
    negatives_per_positive: Option<String>,
    /// Write estimated propensities to this file (weighted runs)
    #[arg(long)]
    export_propensities: Option<String>,
    #[arg(long)]
    synth_users: Option<String>,
    #[arg(long)]
    synth_items: Option<String>,
    #[arg(long)]
    synth_latent_dim: Option<String>,
    #[arg(long)]
    synth_events_per_user: Option<String>,
    #[arg(long)]
    synth_zipf: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    synth_true_bias: Option<String>,
    #[arg(long)]
    output_dir: Option<String>,
}

impl OverrideArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let base = match &self.config {
            Some(path) => ConfigOverlay::from_file(path)?,
            None => ConfigOverlay::default(),
        };
        let mut flags = ConfigOverlay::default();
        let pairs: [(&str, &Option<String>); 35] = [
            ("dataset", &self.dataset),
            ("format", &self.format),
            ("manifest", &self.manifest),
            ("dataset_name", &self.dataset_name),
            ("method", &self.method),
            ("methods", &self.methods),
            ("seed", &self.seed),
            ("num_seeds", &self.num_seeds),
            ("fraction_train", &self.fraction_train),
            ("fraction_validation", &self.fraction_validation),
            ("fraction_test", &self.fraction_test),
            ("s_t_injection", &self.s_t_injection),
            ("dim", &self.dim),
            ("lambda_t", &self.lambda_t),
            ("lambda_c", &self.lambda_c),
            ("lambda_dist", &self.lambda_dist),
            ("lr_start", &self.lr_start),
            ("lr_end", &self.lr_end),
            ("momentum", &self.momentum),
            ("epochs", &self.epochs),
            ("batch_size", &self.batch_size),
            ("init_scale", &self.init_scale),
            ("mode", &self.mode),
            ("propensity_alpha", &self.propensity_alpha),
            ("ips_cap", &self.ips_cap),
            ("normalize_weights", &self.normalize_weights),
            ("negatives_per_positive", &self.negatives_per_positive),
            ("export_propensities", &self.export_propensities),
            ("synth_users", &self.synth_users),
            ("synth_items", &self.synth_items),
            ("synth_latent_dim", &self.synth_latent_dim),
            ("synth_events_per_user", &self.synth_events_per_user),
            ("synth_zipf", &self.synth_zipf),
            ("synth_true_bias", &self.synth_true_bias),
            ("output_dir", &self.output_dir),
        ];
        for (key, value) in pairs {
            if let Some(v) = value {
                flags.set(key, v)?;
            }
        }
        ExperimentConfig::resolve(flags.merge_over(base))
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    overrides: OverrideArgs,
}

#[derive(Args)]
struct EvalArgs {
    /// Saved model file
    #[arg(long)]
    model: PathBuf,
    /// Split manifest to evaluate on
    #[arg(long)]
    manifest: PathBuf,
    /// Name recorded in the report row (defaults to the manifest stem)
    #[arg(long)]
    dataset_name: Option<String>,
    /// Seed recorded in the report row
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "runs")]
    output_dir: PathBuf,
}

#[derive(Args)]
struct InjectArgs {
    #[command(flatten)]
    overrides: OverrideArgs,
    /// Strictly increasing injection fractions in [0, 0.5]
    #[arg(long, default_value = "0.01,0.10,0.25")]
    fractions: String,
}

fn parse_fractions(text: &str) -> Result<SplitFractions> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 3 {
        return Err(CauseError::Config(format!(
            "expected three comma-separated fractions, got `{text}`"
        )));
    }
    let parse = |s: &str| -> Result<f64> {
        s.trim()
            .parse()
            .map_err(|_| CauseError::Config(format!("invalid fraction `{s}`")))
    };
    let fractions = SplitFractions {
        train: parse(parts[0])?,
        validation: parse(parts[1])?,
        test: parse(parts[2])?,
    };
    fractions.validate()?;
    Ok(fractions)
}

fn parse_fraction_list(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| CauseError::Config(format!("invalid fraction `{s}`")))
        })
        .collect()
}

fn describe_split(split: &SplitDataset) -> String {
    format!(
        "{} users, {} items | biased train {} | uniform train {} | validation {} | test {}",
        split.num_users,
        split.num_items,
        split.s_c.len(),
        split.s_t.len(),
        split.validation.len(),
        split.test.len()
    )
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "-".into())
}

fn print_report(kind: &str, report: &MetricReport) {
    println!(
        "{kind:<10} {} on {} (seed {}, {} events): avg_cr {:.4} | mse {} (lift {}) | nll {} (lift {}) | auc {:.4}",
        report.method,
        report.dataset,
        report.seed,
        report.n_events,
        report.avg_cr,
        fmt_opt(report.mse),
        fmt_opt(report.mse_lift),
        fmt_opt(report.nll),
        fmt_opt(report.nll_lift),
        report.auc,
    );
}

fn print_summary(summary: &MethodSummary) {
    println!(
        "{:<14} ({} seeds): mse lift {} +- {} | nll lift {} +- {} | auc {:.4} +- {:.4}",
        summary.method,
        summary.n_seeds,
        fmt_opt(summary.mse_lift_mean),
        fmt_opt(summary.mse_lift_std),
        fmt_opt(summary.nll_lift_mean),
        fmt_opt(summary.nll_lift_std),
        summary.auc_mean,
        summary.auc_std,
    );
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Skew(args) => {
            let fractions = parse_fractions(&args.fractions)?;
            let format = RatingFormat::from_token(&args.format)?;
            let split =
                load_split_from_ratings(&args.input, format, fractions, args.injection, args.seed)?;
            let meta = SplitMeta {
                seed: args.seed,
                fractions,
                s_t_injection: args.injection,
            };
            write_split_manifest(&args.out, &split, &meta)?;
            println!("wrote {} ({})", args.out.display(), describe_split(&split));
        }
        Command::Synth(args) => {
            let fractions = parse_fractions(&args.fractions)?;
            let cfg = SyntheticConfig {
                num_users: args.users,
                num_items: args.items,
                latent_dim: args.latent_dim,
                zipf_exponent: args.zipf,
                events_per_user: args.events_per_user,
                seed: args.seed,
                true_bias: args.true_bias,
                s_t_injection: args.injection,
                fractions,
            };
            let (split, _) = gen_synthetic(&cfg)?;
            let meta = SplitMeta {
                seed: args.seed,
                fractions,
                s_t_injection: args.injection,
            };
            write_split_manifest(&args.out, &split, &meta)?;
            println!("wrote {} ({})", args.out.display(), describe_split(&split));
        }
        Command::Train(args) => {
            let config = args.overrides.resolve()?;
            let outcome = run_experiment(&config)?;
            print_report("test", &outcome.report);
            if let Some(validation) = &outcome.validation_report {
                print_report("validation", validation);
            }
            println!("model: {}", outcome.model_path.display());
            println!(
                "results: {}",
                config.output_dir.join("results.csv").display()
            );
        }
        Command::Eval(args) => {
            let (emb, tag) = load_model(&args.model)?;
            let split = read_split_manifest(&args.manifest)?;
            let dataset_name = args.dataset_name.unwrap_or_else(|| {
                args.manifest
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "dataset".into())
            });
            let (report, validation) =
                evaluate_saved_model(&emb, tag, &split, &dataset_name, args.seed)?;
            append_report_row(&args.output_dir, &report)?;
            print_report("test", &report);
            if let Some(validation) = &validation {
                print_report("validation", validation);
            }
        }
        Command::Sweep(args) => {
            let config = args.overrides.resolve()?;
            let outcome = run_sweep(&config)?;
            for summary in &outcome.summaries {
                print_summary(summary);
            }
            println!("summary: {}", outcome.summary_path.display());
        }
        Command::InjectSweep(args) => {
            let config = args.overrides.resolve()?;
            let fractions = parse_fraction_list(&args.fractions)?;
            let outcome = run_injection_sweep(&config, &fractions)?;
            for row in &outcome.rows {
                println!(
                    "{:<14} injection {:.3}: mse lift {:+.6} +- {:.6} ({} seeds)",
                    row.method, row.fraction, row.mse_lift_mean, row.mse_lift_std, row.n_seeds
                );
            }
            println!("csv: {}", outcome.csv_path.display());
        }
    }
    Ok(())
}

fn exit_code(err: &CauseError) -> u8 {
    match err.root() {
        CauseError::Config(_) => 2,
        CauseError::Divergence { .. } => 4,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
