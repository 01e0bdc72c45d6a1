use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use clusternet::graph::{split_edges, EdgeSplit};
use clusternet::harness::{
    gradcheck_report, load_dataset, load_results, restrict_for_task, results_table, run, run_inductive, DatasetSpec,
    InductiveConfig, RunConfig, RunMode, Task, RESULTS_ENV,
};
use clusternet::Error;

#[derive(Parser)]
#[command(name = "clusternet", version, about = "Decision-focused graph optimization")]
struct Cli {
    /// Directory for result files.
    #[arg(long, global = true, env = RESULTS_ENV, default_value = "results")]
    results_dir: PathBuf,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Hold out a fraction of a graph's edges and write the split manifest.
    Split {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 0.6)]
        fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = TaskArg::Community)]
        task: TaskArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train or run one method on one graph and record the result.
    Run(RunArgs),
    /// Train across graphs and evaluate on unseen ones.
    Inductive {
        /// TOML or JSON inductive configuration.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        iters: Option<usize>,
    },
    /// Finite-difference checks of every gradient rule.
    Gradcheck {
        #[arg(long, default_value_t = 20)]
        seeds: u64,
        #[arg(long)]
        json: bool,
    },
    /// Aggregate result files into a table.
    Table {
        /// Defaults to the results directory.
        #[arg(long)]
        dir: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Markdown)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Markdown,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    Community,
    Facility,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Self {
        match t {
            TaskArg::Community => Task::Community,
            TaskArg::Facility => Task::Facility,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    LearnOpt,
    OptOnly,
}

/// Dataset selection; overrides the config file's dataset.
#[derive(Args, Default)]
struct DataArgs {
    #[arg(long, conflicts_with = "cora")]
    edge_list: Option<PathBuf>,
    #[arg(long, requires = "edge_list")]
    features: Option<PathBuf>,
    /// Directory with `cora.content` and `cora.cites`.
    #[arg(long)]
    cora: Option<PathBuf>,
}

impl DataArgs {
    fn spec(&self) -> Option<DatasetSpec> {
        if let Some(p) = &self.edge_list {
            Some(DatasetSpec::EdgeList {
                path: p.clone(),
                features: self.features.clone(),
            })
        } else {
            self.cora.as_ref().map(|d| DatasetSpec::Cora { dir: Some(d.clone()) })
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// TOML or JSON run configuration; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
    /// clusternet, gcn-e2e, train-<baseline> or 2stage-<baseline>.
    #[arg(long)]
    method: Option<String>,
    #[arg(long, value_enum)]
    task: Option<TaskArg>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    split_manifest: Option<PathBuf>,
}

impl RunArgs {
    fn config(&self) -> clusternet::Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(d) = self.data.spec() {
            c.dataset = d;
        }
        if let Some(m) = &self.method {
            c.method = m.clone();
        }
        if let Some(t) = self.task {
            c.task = t.into();
        }
        if let Some(m) = self.mode {
            c.mode = match m {
                ModeArg::LearnOpt => RunMode::LearnOpt,
                ModeArg::OptOnly => RunMode::OptOnly,
            };
        }
        c.k = self.k.unwrap_or(c.k);
        c.seed = self.seed.unwrap_or(c.seed);
        c.iters = self.iters.unwrap_or(c.iters);
        c.lr = self.lr.unwrap_or(c.lr);
        c.gamma = self.gamma.unwrap_or(c.gamma);
        c.beta = self.beta.or(c.beta);
        c.eta = self.eta.or(c.eta);
        if self.split_manifest.is_some() {
            c.split_manifest = self.split_manifest.clone();
        }
        c.validate()?;
        Ok(c)
    }
}

enum Failure {
    Lib(Error),
    Check(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::NonFinite(_) | Error::Singular(_) | Error::NoConvergence(_) | Error::Shape { .. } | Error::NonScalarLoss(_) => 2,
        _ => 1,
    }
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.cmd {
        Command::Split {
            data,
            fraction,
            seed,
            task,
            out,
        } => {
            let spec = data.spec().unwrap_or_default();
            let g = restrict_for_task(load_dataset(&spec)?, task.into())?;
            let split: EdgeSplit = split_edges(&g, fraction, seed)?;
            split.save(&out)?;
            println!(
                "{}: held {} of {} edges -> {}",
                spec.name(),
                split.held_edges.len(),
                g.m(),
                out.display()
            );
        }
        Command::Run(args) => {
            let cfg = args.config()?;
            let r = run(&cfg)?;
            let path = r.save(&cli.results_dir)?;
            println!(
                "{} {} {}: full {:.6} observed {:.6} size {} train {:.2}s -> {}",
                r.dataset,
                r.task.as_str(),
                r.method,
                r.objective_full_graph,
                r.objective_train_graph,
                r.solution_size,
                r.runtime_train_s,
                path.display()
            );
        }
        Command::Inductive { config, seed, iters } => {
            let text = fs::read_to_string(&config).map_err(Error::from)?;
            let mut cfg: InductiveConfig = if config.extension().is_some_and(|e| e == "json") {
                serde_json::from_str(&text).map_err(Error::from)?
            } else {
                InductiveConfig::from_toml(&text)?
            };
            cfg.run.seed = seed.unwrap_or(cfg.run.seed);
            cfg.run.iters = iters.unwrap_or(cfg.run.iters);
            let results = run_inductive(&cfg)?;
            for r in &results {
                r.save(&cli.results_dir)?;
            }
            print!("{}", results_table(&results).to_markdown());
        }
        Command::Gradcheck { seeds, json } => {
            let report = gradcheck_report(seeds)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report).map_err(Error::from)?);
            } else {
                print!("{}", report.to_table());
            }
            if !report.passed() {
                return Err(Failure::Check(format!("{} gradient checks failed", report.failures().len())));
            }
        }
        Command::Table { dir, format, out } => {
            let dir = dir.unwrap_or(cli.results_dir);
            let table = results_table(&load_results(&dir)?);
            let text = match format {
                Format::Markdown => table.to_markdown(),
                Format::Csv => table.to_csv(),
            };
            match out {
                Some(p) => fs::write(p, text).map_err(Error::from)?,
                None => print!("{text}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
        Err(Failure::Check(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(3)
        }
    }
}
