mod commands;
mod config;
mod error;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;

use qmldesk_core::report::SeedReport;
use qmldesk_core::RunReport;

use commands::*;
use config::{load_config_value, resolve, resolve_seeds};
use error::{CliError, CliResult};

#[derive(Parser)]
#[command(name = "qmldesk", version, about = "Desk-scale simulations of quantum machine-learning algorithms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Debug)]
struct Common {
    /// JSON config; keys left out take the command's defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seeds such as `7`, `1,2,3` or `0..10`. Falls back to the config's
    /// `seeds`, then to QMLDESK_SEED, then to 0.
    #[arg(long)]
    seed: Option<String>,
    /// Worker threads for running seeds in parallel (0 uses every core).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Output file. Reports are JSON unless the name ends in `.csv`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset as CSV.
    GenData(Common),
    /// Lloyd's k-means.
    Kmeans(Common),
    /// δ-k-means over a list of δ values.
    DeltaKmeans(Common),
    /// q-means with simulated estimation noise.
    Qmeans(Common),
    /// Classical spectral clustering.
    Spectral(Common),
    /// Spectral clustering with the quantum noise model.
    Qspectral(Common),
    /// Train a pyramid orthogonal network.
    OrthonnTrain(Common),
    /// Evaluate a trained pyramid network, optionally from shots.
    OrthonnInfer(Common),
    /// Train the two-layer quantum convolutional net.
    QconvTrain(Common),
    /// Error statistics of shot-based tomography.
    TomographyBench(Common),
    /// Phase-estimation sampler and median boosting statistics.
    IpeBench(Common),
    /// Evaluate cost formulas and spectral cost sweeps.
    Cost(Common),
}

fn run_parallel<F>(seeds: &[u64], jobs: usize, f: F) -> CliResult<Vec<SeedReport>>
where
    F: Fn(u64) -> CliResult<Vec<SeedReport>> + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build().map_err(|e| CliError::config(e.to_string()))?;
    let results: Vec<CliResult<Vec<SeedReport>>> = pool.install(|| seeds.par_iter().map(|&s| f(s)).collect());
    let mut out = Vec::new();
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}

fn echo<T: Serialize>(cfg: &T, seeds: &[u64]) -> CliResult<Value> {
    let mut v = serde_json::to_value(cfg)?;
    v["seeds"] = serde_json::to_value(seeds)?;
    Ok(v)
}

fn check_finite(report: &RunReport) -> CliResult<()> {
    for s in &report.seeds {
        let values = s.metrics.iter().flat_map(|(k, v)| v.iter().map(move |x| (k, x))).chain(s.summary.iter());
        for (name, v) in values {
            if !v.is_finite() {
                return Err(CliError::Numeric(format!("seed {}: `{name}` is not finite", s.seed)));
            }
        }
    }
    if let Some(c) = report.costs.iter().find(|c| !c.value.is_finite()) {
        return Err(CliError::Numeric(format!("cost `{}` overflowed", c.formula)));
    }
    Ok(())
}

fn write_output(out: Option<&Path>, bytes: &[u8]) -> CliResult<()> {
    match out {
        Some(p) => std::fs::write(p, bytes).map_err(|e| CliError::config(format!("{}: {e}", p.display()))),
        None => {
            std::io::stdout().write_all(bytes)?;
            Ok(())
        }
    }
}

/// Long-format table: one row per metric point or summary value.
fn report_csv(report: &RunReport) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["seed", "kind", "name", "step", "value"])?;
    for s in &report.seeds {
        let seed = s.seed.to_string();
        for (name, series) in &s.metrics {
            for (i, v) in series.iter().enumerate() {
                w.write_record([seed.as_str(), "metric", name, &i.to_string(), &v.to_string()])?;
            }
        }
        for (name, v) in &s.summary {
            w.write_record([seed.as_str(), "summary", name, "", &v.to_string()])?;
        }
    }
    for c in &report.costs {
        let params = c.params.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(";");
        let model = serde_json::to_value(c.model_id)?.as_str().unwrap_or_default().to_string();
        w.write_record(["", "cost", &model, &params, &c.value.to_string()])?;
    }
    w.into_inner().map_err(|e| CliError::config(e.to_string()))
}

fn emit(report: &RunReport, out: Option<&Path>) -> CliResult<()> {
    let bytes = match out {
        Some(p) if p.extension().is_some_and(|e| e == "csv") => report_csv(report)?,
        _ => {
            let mut b = serde_json::to_vec_pretty(report)?;
            b.push(b'\n');
            b
        }
    };
    write_output(out, &bytes)
}

fn run(cli: Cli) -> CliResult<()> {
    let start = Instant::now();
    let (name, common) = match &cli.command {
        Command::GenData(c) => ("gen-data", c),
        Command::Kmeans(c) => ("kmeans", c),
        Command::DeltaKmeans(c) => ("delta-kmeans", c),
        Command::Qmeans(c) => ("qmeans", c),
        Command::Spectral(c) => ("spectral", c),
        Command::Qspectral(c) => ("qspectral", c),
        Command::OrthonnTrain(c) => ("orthonn-train", c),
        Command::OrthonnInfer(c) => ("orthonn-infer", c),
        Command::QconvTrain(c) => ("qconv-train", c),
        Command::TomographyBench(c) => ("tomography-bench", c),
        Command::IpeBench(c) => ("ipe-bench", c),
        Command::Cost(c) => ("cost", c),
    };
    let user = load_config_value(common.config.as_deref())?;
    let seed_flag = common.seed.as_deref();
    let jobs = common.jobs;

    let mut costs = Vec::new();
    let (config, seeds) = match &cli.command {
        Command::GenData(_) => {
            let cfg: GenDataConfig = resolve(&GenDataConfig::default(), user)?;
            let seeds = resolve_seeds(seed_flag, cfg.seeds.clone())?;
            let [seed] = seeds[..] else {
                return Err(CliError::config("gen-data takes exactly one seed"));
            };
            let ds = gen_data(&cfg, seed)?;
            let mut buf = Vec::new();
            ds.write_csv(&mut buf)?;
            return write_output(common.out.as_deref(), &buf);
        }
        Command::Kmeans(_) | Command::DeltaKmeans(_) | Command::Qmeans(_) => {
            let algo = match cli.command {
                Command::Kmeans(_) => ClusterAlgo::Lloyd,
                Command::DeltaKmeans(_) => ClusterAlgo::Delta,
                _ => ClusterAlgo::Qmeans,
            };
            let cfg: ClusterConfig = resolve(&ClusterConfig::default(), user)?;
            let seeds = resolve_seeds(seed_flag, cfg.seeds.clone())?;
            let reports = run_parallel(&seeds, jobs, |s| cluster(&cfg, algo, s))?;
            (echo(&cfg, &seeds)?, reports)
        }
        Command::Spectral(_) | Command::Qspectral(_) => {
            let defaults = if matches!(cli.command, Command::Qspectral(_)) { SpectralRunConfig::quantum() } else { SpectralRunConfig::classical() };
            let cfg: SpectralRunConfig = resolve(&defaults, user)?;
            let seeds = resolve_seeds(seed_flag, cfg.seeds.clone())?;
            let reports = run_parallel(&seeds, jobs, |s| spectral(&cfg, s).map(|r| vec![r]))?;
            (echo(&cfg, &seeds)?, reports)
        }
        Command::OrthonnTrain(_) => {
            let cfg: OrthoTrainConfig = resolve(&OrthoTrainConfig::default(), user)?;
            let seeds = resolve_seeds(seed_flag, cfg.seeds.clone())?;
            let reports = run_parallel(&seeds, jobs, |s| orthonn_train(&cfg, s).map(|r| vec![r]))?;
            (echo(&cfg, &seeds)?, reports)
        }
        Command::OrthonnInfer(_) => {
            let cfg: OrthoInferConfig = resolve(&OrthoInferConfig::default(), user)?;
            let path = cfg.model.as_deref().ok_or_else(|| CliError::config("config needs `model`, the path of a trained net"))?;
            let net = load_net(path)?;
            let seeds = resolve_seeds(seed_flag, cfg.seeds.clone())?;
            let reports = run_parallel(&seeds, jobs, |s| orthonn_infer(&cfg, &net, s).map(|r| vec![r]))?;
            (echo(&cfg, &seeds)?, reports)
        }
        Command::QconvTrain(_) => {
            let cfg: QconvTrainConfig = resolve(&QconvTrainConfig::default(), user)?;
            let seeds = resolve_seeds(seed_flag, cfg.seeds.clone())?;
            let reports = run_parallel(&seeds, jobs, |s| qconv_train(&cfg, s).map(|r| vec![r]))?;
            (echo(&cfg, &seeds)?, reports)
        }
        Command::TomographyBench(_) => {
            let cfg: TomographyBenchConfig = resolve(&TomographyBenchConfig::default(), user)?;
            let seeds = resolve_seeds(seed_flag, cfg.seeds.clone())?;
            let reports = run_parallel(&seeds, jobs, |s| tomography_bench(&cfg, s).map(|r| vec![r]))?;
            (echo(&cfg, &seeds)?, reports)
        }
        Command::IpeBench(_) => {
            let cfg: IpeBenchConfig = resolve(&IpeBenchConfig::default(), user)?;
            let seeds = resolve_seeds(seed_flag, cfg.seeds.clone())?;
            let reports = run_parallel(&seeds, jobs, |s| ipe_bench(&cfg, s).map(|r| vec![r]))?;
            (echo(&cfg, &seeds)?, reports)
        }
        Command::Cost(_) => {
            let cfg: CostConfig = resolve(&CostConfig::default(), user)?;
            let seeds = resolve_seeds(seed_flag, cfg.seeds.clone())?;
            let (evals, sweep) = cost(&cfg, seeds[0])?;
            costs = evals;
            (echo(&cfg, &seeds[..1])?, sweep.into_iter().collect())
        }
    };
    let mut report = RunReport::new(name, config);
    report.seeds = seeds;
    report.costs = costs;
    report.wall_clock_ms = start.elapsed().as_secs_f64() * 1e3;
    check_finite(&report)?;
    emit(&report, common.out.as_deref())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::config(e.kind().to_string());
            eprintln!("{e}");
            eprintln!("{}", err.to_json());
            return ExitCode::from(err.exit_code() as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{}", err.to_json());
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
