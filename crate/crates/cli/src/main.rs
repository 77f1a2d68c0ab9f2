use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use it2anfis::dataset::{generate_synthetic, load_csv, normalize_and_split, SYNTHETIC_TARGET};
use it2anfis::explain::{
    explain_instance, explain_model, export_rules_text, rule_svgs, InstanceExplanation,
};
use it2anfis::harness::{
    run_sweep, summary_json, sweep_svg, write_aggregates_csv, write_runs_csv, SweepConfig,
};
use it2anfis::metrics::evaluate;
use it2anfis::persist::{load_model, save_model};
use it2anfis::train::{mse, train_with_observer};
use it2anfis::{InitConfig, Mode, RawTable, SyntheticSpec, TrainConfig, TrainedModel};
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "it2anfis",
    version,
    about = "Interval type-2 ANFIS regression with prediction intervals"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one model and save it as JSON.
    Train(TrainArgs),
    /// Predict intervals for every row of a CSV.
    Predict(PredictArgs),
    /// FOU report, rule text and optional membership plots.
    Explain(ExplainArgs),
    /// Error metrics of a saved model on a labelled CSV.
    Evaluate(EvaluateArgs),
    /// Seeded sweep over rule counts and model variants.
    Sweep(SweepArgs),
    /// Write a synthetic dataset.
    Synth(SynthArgs),
}

#[derive(Args, Clone)]
struct SynthFlags {
    #[arg(long, default_value_t = 1000)]
    n_samples: usize,
    #[arg(long, default_value_t = 13)]
    n_features: usize,
    #[arg(long, default_value_t = 7)]
    n_latent_rules: usize,
    #[arg(long, default_value_t = 10.0)]
    noise_std: f64,
    #[arg(long, default_value_t = 0)]
    synth_seed: u64,
}

impl SynthFlags {
    fn spec(&self) -> SyntheticSpec {
        SyntheticSpec {
            n_samples: self.n_samples,
            n_features: self.n_features,
            n_latent_rules: self.n_latent_rules,
            noise_std: self.noise_std,
            seed: self.synth_seed,
        }
    }
}

#[derive(Args, Clone)]
struct DataFlags {
    /// Input CSV with a header row.
    #[arg(long, required_unless_present = "synthetic")]
    data: Option<PathBuf>,
    #[arg(long, default_value = SYNTHETIC_TARGET)]
    target: String,
    /// Non-numeric column carried through but not used as a feature.
    #[arg(long)]
    date_col: Option<String>,
    /// Use generated data instead of --data.
    #[arg(long, conflicts_with = "data")]
    synthetic: bool,
    #[command(flatten)]
    synth: SynthFlags,
}

impl DataFlags {
    fn load(&self) -> Result<RawTable> {
        if self.synthetic {
            return Ok(generate_synthetic(&self.synth.spec())?);
        }
        let path = self.data.as_ref().expect("clap enforces --data");
        load_csv(path, &self.target, self.date_col.as_deref())
            .with_context(|| format!("loading {}", path.display()))
    }
}

#[derive(Args, Clone)]
struct ModelFlags {
    #[arg(long, default_value_t = 7)]
    rules: usize,
    /// Seed for the data split, initialisation and batch order.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "it2", value_parser = parse_mode)]
    mode: Mode,
    /// Shorthand for --mode anfis1.
    #[arg(long, conflicts_with_all = ["mode", "order0"])]
    order1: bool,
    /// Shorthand for --mode anfis0.
    #[arg(long, conflicts_with = "mode")]
    order0: bool,
    #[arg(long, default_value_t = 0.2)]
    alpha: f64,
    #[arg(long, default_value_t = 0.5)]
    q: f64,
    #[arg(long)]
    learn_q: bool,
    #[arg(long, default_value_t = 500)]
    max_epochs: usize,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    #[arg(long, default_value_t = 50)]
    patience: usize,
    #[arg(long, default_value_t = 0.05)]
    lambda_l1: f64,
    #[arg(long, default_value_t = 0.001)]
    lambda_l2: f64,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse()
        .map_err(|e: <Mode as std::str::FromStr>::Err| e.to_string())
}

impl ModelFlags {
    fn mode(&self) -> Mode {
        if self.order1 {
            Mode::Type1Order1
        } else if self.order0 {
            Mode::Type1Order0
        } else {
            self.mode
        }
    }

    fn init(&self) -> InitConfig {
        InitConfig {
            n_rules: self.rules,
            alpha: self.alpha,
            q: self.q,
            seed: self.seed,
            mode: self.mode(),
            ..InitConfig::default()
        }
    }

    fn train(&self) -> TrainConfig {
        TrainConfig {
            max_epochs: self.max_epochs,
            batch_size: self.batch_size,
            patience: self.patience,
            lambda_l1: self.lambda_l1,
            lambda_l2: self.lambda_l2,
            learn_q: self.learn_q,
            seed: self.seed,
            ..TrainConfig::default()
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataFlags,
    #[command(flatten)]
    model: ModelFlags,
    /// Where to write the model JSON.
    #[arg(long, default_value = "model.json")]
    out: PathBuf,
    /// JSON-lines file receiving one record per epoch.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Directory receiving train.csv, val.csv and test.csv in original units.
    #[arg(long)]
    export_splits: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Column to skip when matching features by position.
    #[arg(long)]
    date_col: Option<String>,
    /// Output CSV; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExplainArgs {
    #[arg(long)]
    model: PathBuf,
    /// Output JSON report; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory for one SVG per rule.
    #[arg(long)]
    svg: Option<PathBuf>,
    /// Write the IF-THEN rule text here.
    #[arg(long)]
    rules_text: Option<PathBuf>,
    /// Add per-instance explanations for the rows of this CSV.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    date_col: Option<String>,
    /// Rules listed per instance.
    #[arg(long, default_value_t = 3)]
    top: usize,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Target column; defaults to the one stored in the model.
    #[arg(long)]
    target: Option<String>,
    #[arg(long)]
    date_col: Option<String>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    data: DataFlags,
    /// Comma-separated rule counts [default: 5 through 50].
    #[arg(long, value_delimiter = ',')]
    rules: Option<Vec<usize>>,
    #[arg(long, default_value_t = 10)]
    seeds: usize,
    #[arg(long, default_value_t = 0)]
    seed_base: u64,
    #[arg(long, value_delimiter = ',', default_value = "it2,anfis1,anfis0", value_parser = parse_mode)]
    modes: Vec<Mode>,
    #[arg(long)]
    parallelism: Option<usize>,
    #[arg(long, default_value_t = 0.2)]
    alpha: f64,
    #[arg(long, default_value_t = 0.5)]
    q: f64,
    #[arg(long, default_value_t = 500)]
    max_epochs: usize,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    #[arg(long, default_value_t = 50)]
    patience: usize,
    /// Output directory for runs.csv, aggregates.csv and summary.json.
    #[arg(long, default_value = "sweep")]
    out: PathBuf,
    /// Also write sweep.svg.
    #[arg(long)]
    svg: bool,
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    synth: SynthFlags,
    /// Output CSV; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating directory {}", dir.display()))
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let raw = args.data.load()?;
    let data = normalize_and_split(&raw, args.model.seed)?;
    let init = args.model.init();
    let cfg = args.model.train();
    let rb = it2anfis::init::build_rulebase(&init, &data.train_feature_ranges())?;

    let mut log = args.log.as_deref().map(|p| output(Some(p))).transpose()?;
    let mut log_err = None;
    let (model, state) = train_with_observer(rb, &data, &cfg, |rec, _| {
        if let Some(w) = log.as_mut() {
            let line = serde_json::to_string(rec).expect("plain record");
            if let Err(e) = writeln!(w, "{line}") {
                log_err.get_or_insert(e);
            }
        }
    })?;
    if let Some(mut w) = log {
        w.flush()?;
    }
    if let Some(e) = log_err {
        return Err(e).context("writing epoch log");
    }

    let metrics = |idx: &[usize]| {
        (!idx.is_empty())
            .then(|| it2anfis::harness::evaluate_indices(&model, &data, idx))
            .transpose()
    };
    let (xt, yt) = data.subset(&data.split.train);
    let summary = serde_json::json!({
        "model": args.out,
        "mode": model.mode,
        "rules": model.n_rules(),
        "features": model.n_features(),
        "seed": args.model.seed,
        "epochs": state.epoch,
        "best_epoch": state.best_epoch,
        "stopped_early": state.stopped_early,
        "train_mse_std": mse(&model, &xt, &yt),
        "train": metrics(&data.split.train)?,
        "val": metrics(&data.split.val)?,
        "test": metrics(&data.split.test)?,
    });

    let trained = TrainedModel {
        rulebase: model,
        scaling: data.scaling(),
        feature_names: data.feature_names.clone(),
        target_name: Some(raw.target_column.clone()),
        seed: Some(args.model.seed),
    };
    save_model(&args.out, &trained)?;

    if let Some(dir) = &args.export_splits {
        create_dir(dir)?;
        for (name, idx) in [
            ("train", &data.split.train),
            ("val", &data.split.val),
            ("test", &data.split.test),
        ] {
            let path = dir.join(format!("{name}.csv"));
            raw.select(idx).write_csv(output(Some(&path))?)?;
        }
    }
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

struct InputTable {
    header: Vec<String>,
    records: Vec<Vec<String>>,
    /// Column of each model feature, in model order.
    cols: Vec<usize>,
}

/// Reads an input CSV and locates the model's features in it. Columns are
/// matched by name when every feature name is present, else by position
/// after dropping the date and target columns.
fn read_features(model: &TrainedModel, path: &Path, date_col: Option<&str>) -> Result<InputTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let header: Vec<String> = rdr
        .headers()
        .with_context(|| format!("reading header of {}", path.display()))?
        .iter()
        .map(str::to_owned)
        .collect();
    let records: Vec<Vec<String>> = rdr
        .records()
        .map(|r| r.map(|r| r.iter().map(str::to_owned).collect()))
        .collect::<Result<_, _>>()
        .with_context(|| format!("reading {}", path.display()))?;

    let f = model.feature_names.len();
    let by_name: Option<Vec<usize>> = model
        .feature_names
        .iter()
        .map(|n| header.iter().position(|h| h == n))
        .collect();
    let cols = match by_name {
        Some(cols) if f > 0 => cols,
        _ => {
            let cols: Vec<usize> = (0..header.len())
                .filter(|&i| Some(header[i].as_str()) != date_col)
                .filter(|&i| Some(&header[i]) != model.target_name.as_ref())
                .collect();
            if cols.len() != model.rulebase.n_features() {
                bail!(
                    "{}: model expects {} features, file has {} usable columns",
                    path.display(),
                    model.rulebase.n_features(),
                    cols.len()
                );
            }
            cols
        }
    };
    Ok(InputTable {
        header,
        records,
        cols,
    })
}

fn parse_rows(path: &Path, input: &InputTable) -> Result<Vec<Vec<f64>>> {
    let InputTable {
        header,
        records,
        cols,
    } = input;
    records
        .iter()
        .enumerate()
        .map(|(r, rec)| {
            cols.iter()
                .map(|&c| {
                    let cell = rec.get(c).map_or("", String::as_str);
                    cell.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .with_context(|| {
                            format!(
                                "{}: row {}, column `{}`: cannot parse {cell:?}",
                                path.display(),
                                r + 1,
                                header[c]
                            )
                        })
                })
                .collect()
        })
        .collect()
}

fn cmd_predict(args: PredictArgs) -> Result<()> {
    let model = load_model(&args.model)
        .with_context(|| format!("loading model {}", args.model.display()))?;
    let input = read_features(&model, &args.data, args.date_col.as_deref())?;
    let rows = parse_rows(&args.data, &input)?;
    let mut w = csv::Writer::from_writer(output(args.out.as_deref())?);
    w.write_record([
        "index",
        "y_pred_mwh",
        "interval_lo_mwh",
        "interval_hi_mwh",
        "width_mwh",
    ])?;
    for (i, x) in rows.iter().enumerate() {
        let p = model.predict_raw(x);
        w.write_record([
            i.to_string(),
            p.y_pred.to_string(),
            p.interval.0.to_string(),
            p.interval.1.to_string(),
            p.width.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_explain(args: ExplainArgs) -> Result<()> {
    let model = load_model(&args.model)
        .with_context(|| format!("loading model {}", args.model.display()))?;
    let rb = &model.rulebase;
    let mut report = explain_model(rb);
    if let Some(path) = &args.data {
        let input = read_features(&model, path, args.date_col.as_deref())?;
        let rows = parse_rows(path, &input)?;
        let instances = rows
            .iter()
            .enumerate()
            .map(|(index, raw)| {
                let x = model.scaling.normalize_features(raw);
                let (prediction, mut top_rules) = explain_instance(rb, &x, model.scaling.target);
                top_rules.truncate(args.top);
                InstanceExplanation {
                    index,
                    prediction,
                    top_rules,
                }
            })
            .collect();
        report.per_instance = Some(instances);
    }
    let mut w = output(args.out.as_deref())?;
    serde_json::to_writer_pretty(&mut w, &report)?;
    writeln!(w)?;
    w.flush()?;

    if let Some(path) = &args.rules_text {
        let text = export_rules_text(rb, &model.feature_names, Some(&model.scaling));
        fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    if let Some(dir) = &args.svg {
        create_dir(dir)?;
        for (j, svg) in rule_svgs(rb, &model.feature_names).iter().enumerate() {
            let path = dir.join(format!("rule_{:02}.svg", j + 1));
            fs::write(&path, svg).with_context(|| format!("writing {}", path.display()))?;
        }
    }
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let model = load_model(&args.model)
        .with_context(|| format!("loading model {}", args.model.display()))?;
    let target = args
        .target
        .or_else(|| model.target_name.clone())
        .unwrap_or_else(|| SYNTHETIC_TARGET.to_owned());
    let raw = load_csv(&args.data, &target, args.date_col.as_deref())
        .with_context(|| format!("loading {}", args.data.display()))?;
    let names = raw.feature_names();
    let cols: Vec<usize> = if model.feature_names.iter().all(|n| names.contains(n)) {
        model
            .feature_names
            .iter()
            .map(|n| names.iter().position(|m| m == n).unwrap())
            .collect()
    } else if names.len() == model.rulebase.n_features() {
        (0..names.len()).collect()
    } else {
        bail!(
            "{}: model expects {} features, file has {}",
            args.data.display(),
            model.rulebase.n_features(),
            names.len()
        );
    };
    let (x, y) = raw.features_and_target();
    let pred: Vec<f64> = x
        .iter()
        .map(|row| {
            let ordered: Vec<f64> = cols.iter().map(|&c| row[c]).collect();
            model.predict_raw(&ordered).y_pred
        })
        .collect();
    let m = evaluate(&y, &pred)?;
    let out = serde_json::json!({ "rows": y.len(), "dropped": raw.dropped_count, "metrics": m });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let raw = args.data.load()?;
    let defaults = SweepConfig::default();
    let cfg = SweepConfig {
        rule_counts: args.rules.unwrap_or(defaults.rule_counts.clone()),
        n_seeds: args.seeds,
        modes: args.modes,
        parallelism: args.parallelism.unwrap_or(defaults.parallelism),
        seed_base: args.seed_base,
        init: InitConfig {
            alpha: args.alpha,
            q: args.q,
            ..InitConfig::default()
        },
        train: TrainConfig {
            max_epochs: args.max_epochs,
            batch_size: args.batch_size,
            patience: args.patience,
            ..TrainConfig::default()
        },
    };
    let result = run_sweep(&raw, &cfg)?;
    create_dir(&args.out)?;
    write_runs_csv(output(Some(&args.out.join("runs.csv")))?, &result.runs)?;
    write_aggregates_csv(
        output(Some(&args.out.join("aggregates.csv")))?,
        &result.aggregates,
    )?;
    let summary = serde_json::to_string_pretty(&summary_json(&cfg, &result))?;
    let path = args.out.join("summary.json");
    fs::write(&path, summary + "\n").with_context(|| format!("writing {}", path.display()))?;
    if args.svg {
        let path = args.out.join("sweep.svg");
        fs::write(&path, sweep_svg(&result.aggregates))
            .with_context(|| format!("writing {}", path.display()))?;
    }
    let failed = result.runs.iter().filter(|r| !r.ok()).count();
    eprintln!(
        "{} runs, {failed} failed, results in {}",
        result.runs.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let table = generate_synthetic(&args.synth.spec())?;
    let mut w = output(args.out.as_deref())?;
    table.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Explain(a) => cmd_explain(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Synth(a) => cmd_synth(a),
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
