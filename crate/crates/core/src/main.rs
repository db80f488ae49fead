use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use budsel::datagen::{write_dataset, DataSource, Phase, StreamId};
use budsel::fast::fast_grid;
use budsel::harness::config::{ExperimentConfig, SelectorKind, Sweep};
use budsel::harness::{write_outputs, BudgetSummary, Experiment, TrialRecord};
use budsel::nested::nested_grid;
use budsel::penalties::grid_samples;
use budsel::types::BudgetSchedule;
use budsel::Error;

#[derive(Parser)]
#[command(name = "budsel", version, about = "Compute-budgeted model selection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the coarse grid for a hierarchy and budget.
    Grid(Common),
    /// Run the nested grid selector.
    SelectNested(SelectArgs),
    /// Run the fast-rate grid selector.
    SelectFast(SelectArgs),
    /// Run the bandit allocator.
    SelectBandit(Common),
    /// Run the full experiment described by the config.
    Bench(BenchArgs),
    /// Re-derive recorded trials and compare them byte for byte.
    Replay(ReplayArgs),
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long, conflicts_with = "budget_sweep")]
    budget: Option<f64>,
    /// Geometric sweep `T0 * 2^k` for `k < K`.
    #[arg(long, value_name = "T0:K")]
    budget_sweep: Option<Sweep>,
}

#[derive(Args)]
struct SelectArgs {
    #[command(flatten)]
    common: Common,
    /// Also write every grid class's training set under `<out>/data`.
    #[arg(long)]
    dump_data: bool,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    common: Common,
    /// Exit with status 2 when a violation frequency exceeds its threshold.
    #[arg(long)]
    check: bool,
}

#[derive(Args)]
struct ReplayArgs {
    #[command(flatten)]
    common: Common,
    /// Record file; defaults to `<out>/records.jsonl`.
    #[arg(long)]
    records: Option<PathBuf>,
    /// Replay only this 0-based line.
    #[arg(long)]
    line: Option<usize>,
}

enum Failure {
    Config(String),
    Check(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(v) => Failure::Config(format!("invalid config:\n  {}", v.join("\n  "))),
            e => Failure::Config(e.to_string()),
        }
    }
}

fn load_config(c: &Common, kind: Option<SelectorKind>) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.generator.seed = s;
    }
    if let Some(t) = c.trials {
        cfg.budget.trials = t;
    }
    if let Some(t) = c.budget {
        cfg.budget.total = t;
        cfg.budget.sweep = None;
    }
    if let Some(s) = c.budget_sweep {
        cfg.budget.sweep = Some(s);
    }
    if let Some(k) = kind {
        cfg.selector.kind = k;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_summary(summary: &[BudgetSummary], out: &Path) {
    println!("selector        T  trials  violation_rate  median_excess  chosen");
    for s in summary {
        let chosen: Vec<String> = s.chosen.iter().map(|(k, v)| format!("{k}:{v}")).collect();
        println!(
            "{:<10} {:>7} {:>7} {:>15.4} {:>14.6}  {}",
            s.selector,
            s.budget,
            s.trials,
            s.violation_rate,
            s.median_excess_risk,
            chosen.join(" ")
        );
    }
    println!("wrote {}", out.display());
}

fn run(cfg: ExperimentConfig, out: &Path) -> Result<(Experiment, Vec<BudgetSummary>), Failure> {
    let exp = Experiment::new(cfg)?;
    let records = exp.run()?;
    let summary = write_outputs(out, &records)?;
    print_summary(&summary, out);
    Ok((exp, summary))
}

fn grid(c: &Common) -> Result<(), Failure> {
    let cfg = load_config(c, None)?;
    let classes = cfg.classes()?;
    for t in cfg.budgets() {
        let g = match cfg.selector.kind {
            SelectorKind::Fast => fast_grid(&classes, t, &cfg.fast_config(0))?,
            _ => nested_grid(&classes, t, &cfg.nested_config(0))?,
        };
        let line = serde_json::json!({ "T": t, "grid": g });
        println!("{line}");
    }
    Ok(())
}

fn dump_data(cfg: &ExperimentConfig, out: &Path) -> Result<(), Error> {
    let classes = cfg.classes()?;
    let spec = cfg.generator.spec();
    let dir = out.join("data");
    std::fs::create_dir_all(&dir)?;
    for t in cfg.budgets() {
        let g = match cfg.selector.kind {
            SelectorKind::Fast => fast_grid(&classes, t, &cfg.fast_config(0))?,
            _ => nested_grid(&classes, t, &cfg.nested_config(0))?,
        };
        let schedule = BudgetSchedule::from_classes(&classes, t)?;
        for trial in 0..cfg.budget.trials {
            for &j in &g.indices {
                let n = grid_samples(&schedule, j, t, g.s)?;
                let samples = spec.draw(StreamId::new(Phase::Train, j, trial), n as usize)?;
                let path = dir.join(format!("T{t}_trial{trial}_class{j}.txt"));
                write_dataset(BufWriter::new(File::create(path)?), &samples)?;
            }
        }
    }
    Ok(())
}

fn select(args: &SelectArgs, kind: SelectorKind) -> Result<(), Failure> {
    let cfg = load_config(&args.common, Some(kind))?;
    if args.dump_data {
        dump_data(&cfg, &args.common.out)?;
    }
    run(cfg, &args.common.out).map(|_| ())
}

fn bench(args: &BenchArgs) -> Result<(), Failure> {
    let cfg = load_config(&args.common, None)?;
    let (exp, summary) = run(cfg, &args.common.out)?;
    if args.check {
        let limit = exp.check_threshold();
        let failed: Vec<String> = summary
            .iter()
            .filter(|s| s.violation_rate > limit)
            .map(|s| format!("T = {}: violation rate {} > {limit}", s.budget, s.violation_rate))
            .collect();
        if !failed.is_empty() {
            return Err(Failure::Check(failed.join("\n")));
        }
        println!("check passed (violation rate <= {limit})");
    }
    Ok(())
}

fn replay(args: &ReplayArgs) -> Result<(), Failure> {
    let cfg = load_config(&args.common, None)?;
    let path = args
        .records
        .clone()
        .unwrap_or_else(|| args.common.out.join("records.jsonl"));
    let file = File::open(&path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let lines: Vec<String> = BufReader::new(file)
        .lines()
        .collect::<Result<_, _>>()
        .map_err(|e| Failure::Config(e.to_string()))?;
    let exp = Experiment::new(cfg)?;
    let mut mismatches = Vec::new();
    let mut checked = 0;
    for (i, line) in lines.iter().enumerate() {
        if args.line.is_some_and(|l| l != i) || line.trim().is_empty() {
            continue;
        }
        let r = exp.replay(line)?;
        checked += 1;
        if !r.matches {
            let rec = TrialRecord::from_json_line(line)?;
            mismatches.push(format!(
                "line {i} (T = {}, trial {}):\n  recorded {}\n  replayed {}",
                rec.budget, rec.trial, r.expected, r.actual
            ));
        }
    }
    if mismatches.is_empty() {
        println!("{checked} record(s) replayed identically");
        Ok(())
    } else {
        Err(Failure::Check(mismatches.join("\n")))
    }
}

fn main() -> ExitCode {
    // usage errors are config errors; help and version are not errors
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Grid(c) => grid(c),
        Command::SelectNested(a) => select(a, SelectorKind::Nested),
        Command::SelectFast(a) => select(a, SelectorKind::Fast),
        Command::SelectBandit(c) => load_config(c, Some(SelectorKind::Bandit))
            .map_err(Failure::from)
            .and_then(|cfg| run(cfg, &c.out).map(|_| ())),
        Command::Bench(a) => bench(a),
        Command::Replay(a) => replay(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Check(m)) => {
            eprintln!("check failed:\n{m}");
            ExitCode::from(2)
        }
    }
}
