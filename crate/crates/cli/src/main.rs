mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};

use config::RunConfig;
use toxspan::corpus::{
    generate_synthetic, load_csv, load_pool_csv, split, write_csv, write_pool_csv, SplitSpec,
    SynthConfig,
};
use toxspan::eval::{ablate, breakdown, corpus_span_f1, Variant};
use toxspan::model::TrainedModel;
use toxspan::par::Exec;
use toxspan::spans::{ensemble, predict_corpus, read_predictions, write_predictions};
use toxspan::ssl::{run_ssl, SslPlan};
use toxspan::Error;

const EXIT_HELP: &str = "\
Exit codes:
  0  success
  2  usage error (bad or missing arguments)
  3  i/o error (missing or unwritable file)
  4  validation error (bad data, configuration or mismatched documents)
  5  training diverged (non-finite loss)
  1  anything else

On failure a single line `error<TAB><category><TAB><message>` is written to stderr.";

#[derive(Parser)]
#[command(name = "toxspan", version, about = "Toxic span detection toolkit", after_help = EXIT_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct ConfigArgs {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a configuration key (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Write the effective configuration to this file.
    #[arg(long)]
    dump_config: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum LossArg {
    Ce,
    Wce,
    Dice,
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Subcommand)]
enum Command {
    /// Split a labeled CSV into train/dev/test CSVs.
    Prepare {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "80:10:10")]
        splits: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        outdir: PathBuf,
    },
    /// Generate a synthetic labeled corpus (all.csv plus an 80:10:10 split).
    Synth {
        #[arg(long)]
        docs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.05)]
        empty_frac: f64,
        /// Also write pool.csv with this many unlabeled, toxicity-heavy documents.
        #[arg(long, default_value_t = 0)]
        pool: usize,
        #[arg(long)]
        outdir: PathBuf,
    },
    /// Train a labeler; writes the model and `<out>.log`.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        dev: PathBuf,
        #[arg(long, value_enum)]
        loss: Option<LossArg>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict toxic offsets for every row of a CSV.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "off")]
        append_fullstop: Switch,
    },
    /// Score a prediction TSV against a gold CSV.
    Eval {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        /// Report empty / non-empty gold buckets and token-level scores.
        #[arg(long)]
        breakdown: bool,
    },
    /// Self-training over an unlabeled pool; writes the model and `<out>.ssl.tsv`.
    Ssl {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        dev: PathBuf,
        #[arg(long)]
        pool: PathBuf,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Character-level majority vote over prediction TSVs.
    Ensemble {
        #[arg(long, num_args = 1.., required = true)]
        preds: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one model per preprocessing variant and compare dev scores.
    Ablate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        dev: PathBuf,
        #[arg(long, default_value = "TD,WNUM,WFS,WCON")]
        variants: String,
        /// Also write the machine-readable table here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run_config(args: &ConfigArgs, extra: &[(&str, String)]) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    for kv in &args.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    for (k, v) in extra {
        cfg.set(k, v)?;
    }
    cfg.finalize()?;
    if let Some(path) = &args.dump_config {
        write_file(path, cfg.dump())?;
    }
    Ok(cfg)
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Prepare {
            input,
            splits,
            seed,
            outdir,
        } => {
            let docs = load_csv(&input)?;
            let spec = SplitSpec::parse(&splits, seed)?;
            let (train, dev, test) = split(&docs, &spec)?;
            create_dir(&outdir)?;
            for (name, part) in [("train", &train), ("dev", &dev), ("test", &test)] {
                write_csv(outdir.join(format!("{name}.csv")), part)?;
                println!("{name}\t{}", part.len());
            }
        }
        Command::Synth {
            docs,
            seed,
            empty_frac,
            pool,
            outdir,
        } => {
            let mut cfg = SynthConfig::new(docs, seed);
            cfg.empty_frac = empty_frac;
            let all = generate_synthetic(&cfg)?;
            create_dir(&outdir)?;
            write_csv(outdir.join("all.csv"), &all)?;
            let (train, dev, test) = split(&all, &SplitSpec::new(80, 10, 10, seed)?)?;
            for (name, part) in [("train", &train), ("dev", &dev), ("test", &test)] {
                write_csv(outdir.join(format!("{name}.csv")), part)?;
                println!("{name}\t{}", part.len());
            }
            if pool > 0 {
                let mut pcfg = SynthConfig::new(pool, seed.wrapping_add(1));
                pcfg.toxic_pool = true;
                write_pool_csv(outdir.join("pool.csv"), &generate_synthetic(&pcfg)?)?;
                println!("pool\t{pool}");
            }
        }
        Command::Train {
            cfg,
            train,
            dev,
            loss,
            alpha,
            gamma,
            out,
        } => {
            let mut extra = Vec::new();
            if let Some(l) = loss {
                let name = match l {
                    LossArg::Ce => "ce",
                    LossArg::Wce => "wce",
                    LossArg::Dice => "dice",
                };
                extra.push(("loss", name.to_string()));
            }
            if let Some(a) = alpha {
                extra.push(("alpha", a.to_string()));
            }
            if let Some(g) = gamma {
                extra.push(("gamma", g.to_string()));
            }
            let rc = run_config(&cfg, &extra)?;
            let train_docs = load_csv(&train)?;
            let dev_docs = load_csv(&dev)?;
            let (model, log) = rc.pipeline.fit(&train_docs, &dev_docs)?;
            model.save(&out)?;
            let mut text = log.to_tsv();
            if !dev_docs.is_empty() {
                let preds = predict_corpus(&dev_docs, &model, false, Exec::Parallel);
                let f1 = corpus_span_f1(&preds, &dev_docs)?;
                text.push_str(&format!("dev_span_f1\t{f1}\n"));
            }
            write_file(&with_suffix(&out, ".log"), &text)?;
            print!("{text}");
        }
        Command::Predict {
            model,
            input,
            out,
            append_fullstop,
        } => {
            let model = TrainedModel::load(&model)?;
            let docs = load_pool_csv(&input)?;
            let preds = predict_corpus(
                &docs,
                &model,
                matches!(append_fullstop, Switch::On),
                Exec::Parallel,
            );
            write_predictions(&out, &preds)?;
        }
        Command::Eval {
            gold,
            pred,
            breakdown: with_breakdown,
        } => {
            let golds = load_csv(&gold)?;
            let preds = read_predictions(&pred)?;
            if with_breakdown {
                let report = breakdown(&preds, &golds)?;
                print!("{}\n{}", report.to_table(), report.to_lines());
            } else {
                println!("span_f1\tall\t{}", corpus_span_f1(&preds, &golds)?);
            }
        }
        Command::Ssl {
            cfg,
            train,
            dev,
            pool,
            iterations,
            out,
        } => {
            let extra: Vec<(&str, String)> = iterations
                .map(|k| ("ssl_iterations", k.to_string()))
                .into_iter()
                .collect();
            let rc = run_config(&cfg, &extra)?;
            let plan = SslPlan {
                iterations: rc.ssl_iterations,
                pool: load_pool_csv(&pool)?,
                seed: rc.ssl_seed,
            };
            let outcome = run_ssl(&plan, &rc.pipeline, &load_csv(&train)?, &load_csv(&dev)?)?;
            outcome.model.save(&out)?;
            let text = outcome.log.to_tsv();
            write_file(&with_suffix(&out, ".ssl.tsv"), &text)?;
            print!("{text}");
        }
        Command::Ensemble { preds, out } => {
            let systems = preds
                .iter()
                .map(read_predictions)
                .collect::<toxspan::Result<Vec<_>>>()?;
            write_predictions(&out, &ensemble(&systems)?)?;
        }
        Command::Ablate {
            cfg,
            train,
            dev,
            variants,
            out,
        } => {
            let rc = run_config(&cfg, &[])?;
            let variants = variants
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .map(Variant::parse)
                .collect::<toxspan::Result<Vec<_>>>()?;
            let table = ablate(
                &load_csv(&train)?,
                &load_csv(&dev)?,
                &variants,
                &rc.pipeline,
            )?;
            print!("{}", table.to_table());
            if let Some(path) = out {
                write_file(&path, table.to_lines())?;
            }
        }
    }
    Ok(())
}

fn categorize(err: &anyhow::Error) -> (&'static str, u8) {
    match err.downcast_ref::<Error>().map(Error::root) {
        Some(Error::Io { .. }) => ("io", 3),
        Some(Error::Diverged { .. }) => ("diverged", 5),
        Some(_) => ("validation", 4),
        None => ("internal", 1),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let (category, code) = categorize(&err);
            let message = err.to_string().replace(['\n', '\t'], " ");
            eprintln!("error\t{category}\t{message}");
            ExitCode::from(code)
        }
    }
}
