//! Command-line entry point for the experiment harness.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};

use bottleneck::data::{gen_grid, gen_tabular, Dataset, GridSpec};
use bottleneck::harness::{
    self, align_dataset, attack_schedule, load_dataset, load_model, masking_curves, measure_instability, model_file,
    profile_model, profile_table, robustness_columns, run_all, save_dataset, save_model, theorem1_table, theory_table,
    write_atomic, HarnessConfig, OutputFormat, RunContext, Table,
};
use bottleneck::neural::{DnnType, ModelPreset};
use bottleneck::profile::OrderSelection;
use bottleneck::theory::{fit_effective_dimension, simulate_theorem1};
use bottleneck::{Error, Exec};

#[derive(Parser, Debug)]
#[command(
    name = "bottleneck",
    version,
    about = "Multi-order interaction experiments on small classifiers"
)]
struct Cli {
    /// Root seed; every random draw derives from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// JSON harness config; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory. Table-only commands print to stdout without it.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; 1 runs everything sequentially.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => OutputFormat::Csv,
            Format::Json => OutputFormat::Json,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset CSV plus manifest.
    GenData(GenDataArgs),
    /// Train one classifier and save it as JSON.
    Train(TrainArgs),
    /// Interaction strength J at each order for a saved model.
    Profile(ProfileArgs),
    /// Fit the effective dimension n′ to a profile CSV.
    TheoryFit(TheoryFitArgs),
    /// Monte Carlo check of the per-order interaction std.
    SimulateTheorem1(Theorem1Args),
    /// PGD adversarial accuracy of a saved model.
    Attack(AttackArgs),
    /// Random vs surrounding masking curves.
    MaskExp(MaskArgs),
    /// Instability of sampled per-sample profiles.
    Instability(InstabilityArgs),
    /// Every experiment for every configured seed.
    RunAll,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum DataKind {
    Tabular,
    Grid,
}

#[derive(Args, Debug)]
struct GenDataArgs {
    #[arg(long, value_enum, default_value_t = DataKind::Tabular)]
    kind: DataKind,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    label_noise: Option<f64>,
    #[arg(long)]
    height: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    /// File stem of the written CSV and manifest.
    #[arg(long, default_value = "data")]
    name: String,
}

#[derive(Args, Debug)]
struct DataArgs {
    /// Dataset CSV; without it the configured tabular preset is generated.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value = harness::default_label_column())]
    label_column: String,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value = "normal")]
    dnn_type: DnnType,
    #[arg(long, value_parser = parse_preset)]
    model_preset: Option<ModelPreset>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long, default_value = "model")]
    name: String,
}

#[derive(Args, Debug)]
struct ModelDataArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = harness::default_label_column())]
    label_column: String,
}

#[derive(Args, Debug)]
struct ProfileArgs {
    #[command(flatten)]
    io: ModelDataArgs,
    /// `all` or comma-separated relative orders in [0, 1].
    #[arg(long, default_value = "all")]
    orders: String,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    contexts: Option<usize>,
}

#[derive(Args, Debug)]
struct TheoryFitArgs {
    #[arg(long)]
    profile: PathBuf,
    /// Variable count of the profiled model; read from the CSV when omitted.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    n_min: Option<f64>,
    #[arg(long)]
    n_max: Option<f64>,
}

#[derive(Args, Debug)]
struct Theorem1Args {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
}

#[derive(Args, Debug)]
struct AttackArgs {
    #[command(flatten)]
    io: ModelDataArgs,
    /// Single radius; without it the configured attacks run.
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    random_start: bool,
}

#[derive(Args, Debug)]
struct MaskArgs {
    /// Saved model; without model and data the full masking experiment runs.
    #[arg(long, requires = "data")]
    model: Option<PathBuf>,
    #[arg(long, requires = "model")]
    data: Option<PathBuf>,
    #[arg(long, default_value = harness::default_label_column())]
    label_column: String,
}

#[derive(Args, Debug)]
struct InstabilityArgs {
    /// Saved model; without model and data a normal model is trained on
    /// the tabular preset.
    #[arg(long, requires = "data")]
    model: Option<PathBuf>,
    #[arg(long, requires = "model")]
    data: Option<PathBuf>,
    #[arg(long, default_value = harness::default_label_column())]
    label_column: String,
    #[arg(long)]
    contexts: Option<usize>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
}

fn parse_preset(s: &str) -> Result<ModelPreset, String> {
    match s {
        "mlp-5" => Ok(ModelPreset::Mlp5),
        "mlp-8" => Ok(ModelPreset::Mlp8),
        other => Err(format!("unknown model preset {other:?}; expected mlp-5 or mlp-8")),
    }
}

fn load_config(path: Option<&Path>) -> Result<HarnessConfig, Error> {
    match path {
        None => Ok(HarnessConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            HarnessConfig::from_json(&text)
        }
    }
}

fn configure_workers(workers: Option<usize>) -> Result<Exec, Error> {
    if workers == Some(0) {
        return Err(Error::Config("--workers must be at least 1".into()));
    }
    #[cfg(feature = "parallel")]
    if let Some(w) = workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    Ok(harness::exec_for_workers(workers))
}

/// Writes `table` to `<out>/<stem>.<ext>`, or prints it.
fn emit(table: &Table, out: Option<&Path>, stem: &str, format: OutputFormat) -> Result<(), Error> {
    let text = table.render(format)?;
    match out {
        Some(dir) => {
            let path = dir.join(format!("{stem}.{}", format.extension()));
            write_atomic(&path, text.as_bytes())?;
            info!("wrote {}", path.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn emit_json(value: &serde_json::Value, out: Option<&Path>, stem: &str) -> Result<(), Error> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(dir) => write_atomic(&dir.join(format!("{stem}.json")), text.as_bytes())?,
        None => eprintln!("{text}"),
    }
    Ok(())
}

fn dataset_from(args: &DataArgs, config: &HarnessConfig, seed: u64) -> Result<Dataset, Error> {
    match &args.data {
        Some(p) => load_dataset(p, &args.label_column, seed),
        None => gen_tabular(&config.tabular, seed),
    }
}

fn model_and_data(io: &ModelDataArgs, seed: u64) -> Result<(bottleneck::neural::MlpModel, Dataset), Error> {
    let file = load_model(&io.model)?;
    let mut data = load_dataset(&io.data, &io.label_column, seed)?;
    align_dataset(&file, &mut data)?;
    Ok((file.to_model()?, data))
}

fn parse_orders(spec: &str) -> Result<OrderSelection, Error> {
    if spec.trim() == "all" {
        return Ok(OrderSelection::All);
    }
    let values = spec
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("--orders: {s:?} is not a number")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::Config("--orders values must lie in [0, 1]".into()));
    }
    Ok(OrderSelection::Relative(values))
}

fn run(cli: Cli) -> Result<(), Error> {
    let mut config = load_config(cli.config.as_deref())?;
    let format: OutputFormat = cli.format.into();
    let exec = configure_workers(cli.workers)?;
    let seed = cli.seed;
    let out = cli.out.as_deref();
    match cli.command {
        Command::GenData(a) => {
            let data = match a.kind {
                DataKind::Tabular => {
                    let spec = &mut config.tabular;
                    spec.n = a.n.unwrap_or(spec.n);
                    spec.samples = a.samples.unwrap_or(spec.samples);
                    spec.classes = a.classes.unwrap_or(spec.classes);
                    spec.label_noise = a.label_noise.unwrap_or(spec.label_noise);
                    gen_tabular(spec, seed)?
                }
                DataKind::Grid => {
                    let spec = &mut config.grid;
                    spec.grid = GridSpec {
                        height: a.height.unwrap_or(spec.grid.height),
                        width: a.width.unwrap_or(spec.grid.width),
                    };
                    spec.samples = a.samples.unwrap_or(spec.samples);
                    spec.classes = a.classes.unwrap_or(spec.classes);
                    gen_grid(spec, seed)?
                }
            };
            let (csv, manifest) = save_dataset(&data, out.unwrap_or(Path::new(".")), &a.name)?;
            info!("wrote {} and {}", csv.display(), manifest.display());
        }
        Command::Train(a) => {
            if let Some(e) = a.epochs {
                config.train.epochs = e;
            }
            if let Some(lr) = a.learning_rate {
                config.train.learning_rate = lr;
            }
            if let Some(b) = a.batch_size {
                config.train.batch_size = b;
            }
            let preset = a.model_preset.unwrap_or(config.model);
            let data = dataset_from(&a.data, &config, seed)?;
            let ctx = RunContext::new(config, exec)?;
            let tc = ctx.train_config(a.dnn_type, preset, seed);
            let outcome = ctx.train(&data, &tc)?;
            let dir = out.unwrap_or(Path::new("."));
            save_model(
                &model_file(&outcome.model, &data, &tc),
                &dir.join(format!("{}.json", a.name)),
            )?;
            let mut history = Table::new(&["epoch", "total_loss", "train_accuracy", "test_accuracy"]);
            for h in &outcome.history {
                history.push(vec![
                    h.epoch.into(),
                    h.total_loss.into(),
                    h.train_accuracy.into(),
                    h.test_accuracy.into(),
                ]);
            }
            emit(&history, Some(dir), &format!("{}_history", a.name), format)?;
            if let Some(last) = outcome.history.last() {
                info!("test accuracy {:.4}", last.test_accuracy);
            }
        }
        Command::Profile(a) => {
            let (model, data) = model_and_data(&a.io, seed)?;
            let samples = a.samples.unwrap_or(config.profile.samples);
            let contexts = a.contexts.unwrap_or(config.profile.contexts);
            let orders = parse_orders(&a.orders)?;
            let p = profile_model(&model, &data, samples, contexts, &orders, seed, exec)?;
            emit(&profile_table(&p), out, "profile", format)?;
        }
        Command::TheoryFit(a) => {
            let text = fs::read_to_string(&a.profile)?;
            let profile = bottleneck::profile::OrderProfile::from_csv(&text, a.n)?;
            let range = match (a.n_min, a.n_max) {
                (None, None) => config.theory.n_range,
                (lo, hi) => Some((lo.unwrap_or(2.0), hi.unwrap_or(profile.n as f64))),
            };
            let fit = fit_effective_dimension(&profile, range)?;
            for w in &fit.warnings {
                warn!("{w}");
            }
            emit(&theory_table(&fit), out, "theory", format)?;
            emit_json(
                &serde_json::json!({
                    "format_version": harness::RESULT_FORMAT_VERSION,
                    "n": profile.n,
                    "n_eff": fit.n_eff,
                    "fit_error": fit.fit_error,
                    "search_range": fit.search_range,
                    "at_boundary": fit.at_boundary,
                    "warnings": fit.warnings,
                }),
                out,
                "fit",
            )?;
        }
        Command::SimulateTheorem1(a) => {
            let t = &config.theory;
            let sim = simulate_theorem1(
                a.n.unwrap_or(t.theorem1_n),
                a.sigma.unwrap_or(t.theorem1_sigma),
                a.trials.unwrap_or(t.theorem1_trials),
                seed,
                exec,
            )?;
            emit(&theorem1_table(&sim), out, "theorem1", format)?;
        }
        Command::Attack(a) => {
            let (model, data) = model_and_data(&a.io, seed)?;
            let mut attacks = match a.epsilon {
                Some(eps) => vec![bottleneck::attack::AttackConfig {
                    epsilon: eps,
                    ..config.attacks.first().cloned().unwrap_or_default()
                }],
                None => attack_schedule(&config, seed),
            };
            for at in &mut attacks {
                at.steps = a.steps.unwrap_or(at.steps);
                at.alpha = a.alpha.unwrap_or(at.alpha);
                at.random_start |= a.random_start;
                at.seed = seed;
            }
            let id = a.io.model.display().to_string();
            let mut table = robustness_columns();
            for at in &attacks {
                let r = bottleneck::attack::adversarial_accuracy(&model, &data, &data.test, at, exec)?;
                table.push(vec![
                    id.clone().into(),
                    "file".into(),
                    "file".into(),
                    seed.into(),
                    r.epsilon.into(),
                    r.steps.into(),
                    r.clean_accuracy.into(),
                    r.adversarial_accuracy.into(),
                ]);
            }
            emit(&table, out, "robustness", format)?;
        }
        Command::MaskExp(a) => match (a.model, a.data) {
            (Some(model), Some(data)) => {
                let io = ModelDataArgs {
                    model,
                    data,
                    label_column: a.label_column,
                };
                let (model, data) = model_and_data(&io, seed)?;
                let n = data.n();
                let counts: Vec<usize> = config
                    .mask_fractions
                    .iter()
                    .map(|f| bottleneck::exact::round_half_up(f * n as f64).min(n))
                    .collect();
                let curves = masking_curves(&model, &data, &counts, seed, exec)?;
                info!("area between curves {:.6}", curves.area);
                emit(&curves.table(), out, "masking", format)?;
            }
            _ => {
                let ctx = RunContext::new(config, exec)?;
                let result = harness::exp_masking(&ctx, seed)?;
                write_result(&result, out, format)?;
            }
        },
        Command::Instability(a) => {
            let s = &mut config.instability;
            s.contexts = a.contexts.unwrap_or(s.contexts);
            s.repeats = a.repeats.unwrap_or(s.repeats);
            s.samples = a.samples.unwrap_or(s.samples);
            let s = s.clone();
            let value = match (a.model, a.data) {
                (Some(model), Some(data)) => {
                    let io = ModelDataArgs {
                        model,
                        data,
                        label_column: a.label_column,
                    };
                    let (model, data) = model_and_data(&io, seed)?;
                    measure_instability(&model, &data, s.samples, s.contexts, s.repeats, seed, exec)?
                }
                _ => {
                    let ctx = RunContext::new(config.clone(), exec)?;
                    let data = harness::tabular_data(&ctx, seed)?;
                    let outcome = ctx.train(&data, &ctx.train_config(DnnType::Normal, config.model, seed))?;
                    measure_instability(&outcome.model, &data, s.samples, s.contexts, s.repeats, seed, exec)?
                }
            };
            let mut t = Table::new(&["samples", "contexts", "repeats", "instability"]);
            t.push(vec![
                s.samples.into(),
                s.contexts.into(),
                s.repeats.into(),
                value.into(),
            ]);
            emit(&t, out, "instability", format)?;
        }
        Command::RunAll => {
            let dir = out.unwrap_or(Path::new("results"));
            let ctx = RunContext::new(config, exec)?;
            let summary = run_all(&ctx, seed, dir, format)?;
            info!(
                "bottleneck {}/{}, robustness {:?}/{}, masking {}/{}",
                summary.bottleneck_holds,
                summary.seeds.len(),
                summary.robustness_lower,
                summary.seeds.len(),
                summary.masking_area_larger,
                summary.seeds.len()
            );
        }
    }
    Ok(())
}

fn write_result(result: &harness::ExperimentResult, out: Option<&Path>, format: OutputFormat) -> Result<(), Error> {
    let dir = out.unwrap_or(Path::new("results")).join(&result.experiment);
    result.write(&dir, format)?;
    info!("wrote {}", dir.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Numeric(_) => 3,
                e if e.is_config() => 2,
                _ => 1,
            })
        }
    }
}
