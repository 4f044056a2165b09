//! Command definitions and their implementations.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use taskalloc_core::{
    rho_grid, simulate, validate, worst_case_poa, AllocationKind, CandidateLocation, Scenario,
    SimulationReport,
};
use taskalloc_oracle::{
    best_response_nep, brute_force_optimal, mean_latency, OracleConfig, MAX_BRUTE_FORCE_SERVERS,
};

use crate::delay::{solve_in_mode, sweep_in_mode, thresholds_in_mode, DelayMode};
use crate::error::{CliError, Result};
use crate::file::{ScenarioFile, SweepSection};
use crate::format::sig6;

#[derive(Debug, Parser)]
#[command(
    name = "taskalloc",
    version,
    about = "Optimal and selfish job allocation over queueing servers"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve for the allocation at one load.
    Solve(SolveArgs),
    /// Shorthand for `solve --kind nep`.
    Nep(NepArgs),
    /// Activation thresholds in server order.
    Thresholds(ThresholdArgs),
    /// Price of anarchy over a load grid (CSV).
    Sweep(SweepArgs),
    /// Worst-case price of anarchy and its candidate loads.
    Worst(WorstArgs),
    /// Simulate the allocation at one load.
    Simulate(SimulateArgs),
    /// Compare the analytic latency with simulation and the reference solvers.
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    #[value(alias = "opt")]
    Optimal,
    Nep,
}

impl From<KindArg> for AllocationKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Optimal => AllocationKind::Optimal,
            KindArg::Nep => AllocationKind::Nep,
        }
    }
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    /// Scenario file (TOML).
    pub file: PathBuf,
    /// Override the solver resolution from the file.
    #[arg(long)]
    pub resolution: Option<f64>,
}

impl ScenarioArgs {
    fn load(&self) -> Result<(ScenarioFile, Scenario)> {
        let mut file = ScenarioFile::read(&self.file)?;
        if let Some(r) = self.resolution {
            file.solver.resolution = r;
        }
        let sc = file.to_scenario()?;
        Ok((file, sc))
    }
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct LoadArgs {
    /// Offered load in jobs/second.
    #[arg(long)]
    pub load: Option<f64>,
    /// Offered load as a fraction of total capacity.
    #[arg(long)]
    pub rho: Option<f64>,
}

impl LoadArgs {
    pub fn resolve(&self, sc: &Scenario) -> f64 {
        match (self.load, self.rho) {
            (Some(load), _) => load,
            (None, Some(rho)) => rho * sc.capacity(),
            (None, None) => unreachable!("clap requires one of --load / --rho"),
        }
    }
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[command(flatten)]
    pub load: LoadArgs,
    #[arg(long, value_enum, default_value_t = KindArg::Optimal)]
    pub kind: KindArg,
    #[arg(long, value_enum, default_value_t = DelayMode::WithDelays)]
    pub delay_mode: DelayMode,
    /// Write the per-server allocation as CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct NepArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[command(flatten)]
    pub load: LoadArgs,
    #[arg(long, value_enum, default_value_t = DelayMode::WithDelays)]
    pub delay_mode: DelayMode,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ThresholdArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Only one kind; both are printed by default.
    #[arg(long, value_enum)]
    pub kind: Option<KindArg>,
    #[arg(long, value_enum, default_value_t = DelayMode::WithDelays)]
    pub delay_mode: DelayMode,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Number of grid points (overrides the file's sweep block).
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long, value_enum, default_value_t = DelayMode::WithDelays)]
    pub delay_mode: DelayMode,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct WorstArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long, value_enum, default_value_t = DelayMode::WithDelays)]
    pub delay_mode: DelayMode,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[command(flatten)]
    pub load: LoadArgs,
    #[arg(long, value_enum, default_value_t = KindArg::Optimal)]
    pub kind: KindArg,
    #[arg(long, value_enum, default_value_t = DelayMode::WithDelays)]
    pub delay_mode: DelayMode,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Raw samples as CSV; with several replications one file per
    /// replication is written, named `<stem>.rep<k>.<ext>`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[command(flatten)]
    pub load: LoadArgs,
    #[arg(long, value_enum, default_value_t = KindArg::Optimal)]
    pub kind: KindArg,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Largest accepted relative gap between simulated and analytic latency.
    #[arg(long, default_value_t = 0.03)]
    pub tolerance: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Solve(a) => cmd_solve(
            &a.scenario,
            &a.load,
            a.kind.into(),
            a.delay_mode,
            a.out.as_deref(),
            out,
        ),
        Command::Nep(a) => cmd_solve(
            &a.scenario,
            &a.load,
            AllocationKind::Nep,
            a.delay_mode,
            a.out.as_deref(),
            out,
        ),
        Command::Thresholds(a) => cmd_thresholds(a, out),
        Command::Sweep(a) => cmd_sweep(a, out),
        Command::Worst(a) => cmd_worst(a, out),
        Command::Simulate(a) => cmd_simulate(a, out),
        Command::Validate(a) => cmd_validate(a, out),
    }
}

fn io(e: std::io::Error) -> CliError {
    CliError::Output(e.to_string())
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(io)
}

#[derive(Debug, Serialize)]
struct AllocationRow {
    server: usize,
    model: String,
    d_ms: f64,
    mu: f64,
    p: f64,
    rate: f64,
    latency_s: f64,
}

fn cmd_solve(
    args: &ScenarioArgs,
    load: &LoadArgs,
    kind: AllocationKind,
    mode: DelayMode,
    csv_out: Option<&Path>,
    out: &mut dyn Write,
) -> Result<()> {
    let (_, sc) = args.load()?;
    let load = load.resolve(&sc);
    let res = solve_in_mode(&sc, load, kind, mode)?;
    let view = mode.apply(&sc)?;
    let alloc = &res.allocation;

    let rows = sc
        .servers()
        .iter()
        .zip(view.evaluate.servers())
        .zip(&alloc.p)
        .enumerate()
        .map(|(i, ((s, e), &p))| {
            Ok(AllocationRow {
                server: i,
                model: s.model().to_string(),
                d_ms: s.delay() * 1000.0,
                mu: s.mu(),
                p,
                rate: p * load,
                latency_s: e.latency(p * load)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let multiplier_name = match kind {
        AllocationKind::Optimal => "marginal cost",
        AllocationKind::Nep => "equilibrium latency",
    };
    writeln!(out, "kind: {kind}  delay mode: {mode}").map_err(io)?;
    writeln!(
        out,
        "load: {} jobs/s (rho {})",
        sig6(load),
        sig6(load / sc.capacity())
    )
    .map_err(io)?;
    writeln!(out, "{multiplier_name}: {} s", sig6(alloc.multiplier)).map_err(io)?;
    writeln!(
        out,
        "active servers: {} of {}",
        alloc.active_count,
        sc.len()
    )
    .map_err(io)?;
    writeln!(out, "mean latency: {} s", sig6(res.evaluated_latency)).map_err(io)?;
    if mode == DelayMode::IgnoringDelays {
        writeln!(
            out,
            "mean latency as modeled without delays: {} s",
            sig6(alloc.mean_latency)
        )
        .map_err(io)?;
    }
    writeln!(out).map_err(io)?;
    writeln!(
        out,
        "{:>6} {:>5} {:>10} {:>10} {:>12} {:>12} {:>12}",
        "server", "model", "d_ms", "mu", "p", "rate", "latency_s"
    )
    .map_err(io)?;
    for r in &rows {
        writeln!(
            out,
            "{:>6} {:>5} {:>10} {:>10} {:>12} {:>12} {:>12}",
            r.server,
            r.model,
            sig6(r.d_ms),
            sig6(r.mu),
            sig6(r.p),
            sig6(r.rate),
            sig6(r.latency_s)
        )
        .map_err(io)?;
    }
    if let Some(path) = csv_out {
        write_csv(path, &rows)?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct ThresholdRow {
    kind: AllocationKind,
    rank: usize,
    server: usize,
    load: f64,
    rho: f64,
}

fn cmd_thresholds(a: &ThresholdArgs, out: &mut dyn Write) -> Result<()> {
    let (_, sc) = a.scenario.load()?;
    let kinds: Vec<AllocationKind> = match a.kind {
        Some(k) => vec![k.into()],
        None => vec![AllocationKind::Optimal, AllocationKind::Nep],
    };
    let mut rows = Vec::new();
    for kind in kinds {
        let table = thresholds_in_mode(&sc, kind, a.delay_mode)?;
        for (rank, (&server, &load)) in table.order.iter().zip(&table.loads).enumerate() {
            rows.push(ThresholdRow {
                kind,
                rank: rank + 1,
                server,
                load,
                rho: load / sc.capacity(),
            });
        }
    }
    writeln!(
        out,
        "{:>8} {:>5} {:>7} {:>12} {:>10}",
        "kind", "rank", "server", "load", "rho"
    )
    .map_err(io)?;
    for r in &rows {
        writeln!(
            out,
            "{:>8} {:>5} {:>7} {:>12} {:>10}",
            r.kind.to_string(),
            r.rank,
            r.server,
            sig6(r.load),
            sig6(r.rho)
        )
        .map_err(io)?;
    }
    if let Some(path) = &a.out {
        write_csv(path, &rows)?;
    }
    Ok(())
}

fn cmd_sweep(a: &SweepArgs, out: &mut dyn Write) -> Result<()> {
    let (file, sc) = a.scenario.load()?;
    let mut grid = file.sweep.unwrap_or_default();
    if let Some(points) = a.grid {
        grid.points = points;
    }
    let rows = sweep_rows(&sc, &grid, a.delay_mode)?;
    match &a.out {
        Some(path) => {
            write_csv(path, &rows)?;
            if let Some(peak) = rows.iter().max_by(|x, y| x.eta.total_cmp(&y.eta)) {
                writeln!(
                    out,
                    "{} points written to {}; peak eta {} at load {} (rho {})",
                    rows.len(),
                    path.display(),
                    sig6(peak.eta),
                    sig6(peak.load),
                    sig6(peak.rho)
                )
                .map_err(io)?;
            }
        }
        None => {
            let mut w = csv::Writer::from_writer(&mut *out);
            for row in &rows {
                w.serialize(row)?;
            }
            w.flush().map_err(io)?;
        }
    }
    Ok(())
}

/// Sweep over the grid described by a file's sweep block.
pub fn sweep_rows(
    sc: &Scenario,
    grid: &SweepSection,
    mode: DelayMode,
) -> Result<Vec<crate::delay::SweepRow>> {
    let loads: Vec<f64> = rho_grid(grid.points, grid.rho_min, grid.rho_max)?
        .into_iter()
        .map(|rho| rho * sc.capacity())
        .collect();
    sweep_in_mode(sc, &loads, mode)
}

#[derive(Debug, Serialize)]
struct CandidateRow {
    location: &'static str,
    rank: Option<usize>,
    server: Option<usize>,
    load: Option<f64>,
    rho: Option<f64>,
    eta: f64,
}

fn cmd_worst(a: &WorstArgs, out: &mut dyn Write) -> Result<()> {
    let (_, sc) = a.scenario.load()?;
    if a.delay_mode == DelayMode::IgnoringDelays {
        return Err(CliError::Invalid(
            "worst needs allocations consistent with the evaluated delays; ignoring_delays is not supported".into(),
        ));
    }
    let view = a.delay_mode.apply(&sc)?;
    let wc = worst_case_poa(&view.solve)?;
    let capacity = sc.capacity();
    let row = |c: &taskalloc_core::PoaCandidate| {
        let (location, rank, server) = match c.location {
            CandidateLocation::NepActivation { rank, server } => {
                ("nep_activation", Some(rank), Some(server))
            }
            CandidateLocation::FullLoad => ("full_load", None, None),
        };
        CandidateRow {
            location,
            rank,
            server,
            load: c.load,
            rho: c.load.map(|l| l / capacity),
            eta: c.eta,
        }
    };
    let rows: Vec<CandidateRow> = wc.candidates.iter().map(row).collect();
    writeln!(
        out,
        "{:>15} {:>5} {:>7} {:>12} {:>10} {:>10}",
        "candidate", "rank", "server", "load", "rho", "eta"
    )
    .map_err(io)?;
    let opt = |v: Option<String>| v.unwrap_or_else(|| "-".into());
    for r in &rows {
        writeln!(
            out,
            "{:>15} {:>5} {:>7} {:>12} {:>10} {:>10}",
            r.location,
            opt(r.rank.map(|x| x.to_string())),
            opt(r.server.map(|x| x.to_string())),
            opt(r.load.map(sig6)),
            opt(r.rho.map(sig6)),
            sig6(r.eta)
        )
        .map_err(io)?;
    }
    let max = row(&wc.max);
    writeln!(
        out,
        "worst-case eta {} at {}{}",
        sig6(max.eta),
        max.location,
        max.load
            .map(|l| format!(" (load {})", sig6(l)))
            .unwrap_or_default()
    )
    .map_err(io)?;
    if let Some(path) = &a.out {
        write_csv(path, &rows)?;
    }
    Ok(())
}

fn print_report(report: &SimulationReport, p: &[f64], out: &mut dyn Write) -> Result<()> {
    let pm = |v: f64, hw: Option<f64>| match hw {
        Some(h) => format!("{} ± {}", sig6(v), sig6(h)),
        None => sig6(v),
    };
    writeln!(
        out,
        "{:>6} {:>10} {:>12} {:>12} {:>26} {:>10}",
        "server", "p", "arrivals/s", "utilization", "mean latency (s)", "completed"
    )
    .map_err(io)?;
    for (i, s) in report.servers.iter().enumerate() {
        writeln!(
            out,
            "{:>6} {:>10} {:>12} {:>12} {:>26} {:>10}",
            i,
            sig6(p[i]),
            sig6(s.arrival_rate),
            sig6(s.utilization),
            pm(s.mean_latency, s.latency_half_width),
            s.completed
        )
        .map_err(io)?;
    }
    writeln!(
        out,
        "aggregate mean latency: {} s over {} jobs, {} replications, {}% confidence",
        pm(
            report.aggregate.mean_latency,
            report.aggregate.latency_half_width
        ),
        report.aggregate.completed,
        report.replications,
        sig6(report.confidence * 100.0)
    )
    .map_err(io)?;
    if report.overloaded {
        writeln!(
            out,
            "warning: at least one server is offered more than its capacity"
        )
        .map_err(io)?;
    }
    Ok(())
}

/// Path for the samples of replication `rep` out of `total`.
pub fn sample_path(base: &Path, rep: usize, total: usize) -> PathBuf {
    if total == 1 {
        return base.to_path_buf();
    }
    let stem = base
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let name = match base.extension() {
        Some(ext) => format!("{stem}.rep{rep}.{}", ext.to_string_lossy()),
        None => format!("{stem}.rep{rep}"),
    };
    base.with_file_name(name)
}

fn cmd_simulate(a: &SimulateArgs, out: &mut dyn Write) -> Result<()> {
    let (file, sc) = a.scenario.load()?;
    let load = a.load.resolve(&sc);
    let res = solve_in_mode(&sc, load, a.kind.into(), a.delay_mode)?;
    let view = a.delay_mode.apply(&sc)?;
    let total: f64 = res.allocation.p.iter().sum();
    let p: Vec<f64> = res.allocation.p.iter().map(|x| x / total).collect();
    let mut cfg = file
        .simulation
        .unwrap_or_default()
        .config(load, p.clone())?;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    cfg.record_samples = a.out.is_some();
    let report = simulate(&view.evaluate, &cfg)?;

    writeln!(
        out,
        "{} allocation, delay mode {}, load {} jobs/s; analytic mean latency {} s",
        AllocationKind::from(a.kind),
        a.delay_mode,
        sig6(load),
        sig6(res.evaluated_latency)
    )
    .map_err(io)?;
    print_report(&report, &p, out)?;
    if let Some(base) = &a.out {
        for rep in 0..report.replications {
            let path = sample_path(base, rep, report.replications);
            let f = std::fs::File::create(&path).map_err(io)?;
            report
                .write_samples_csv(rep, std::io::BufWriter::new(f))
                .map_err(io)?;
        }
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct ValidationRow {
    kind: AllocationKind,
    load: f64,
    analytic: f64,
    empirical: f64,
    half_width: Option<f64>,
    relative_gap: f64,
    within_ci: bool,
    oracle_gap: Option<f64>,
    passed: bool,
}

fn cmd_validate(a: &ValidateArgs, out: &mut dyn Write) -> Result<()> {
    let (file, sc) = a.scenario.load()?;
    let load = a.load.resolve(&sc);
    let kind: AllocationKind = a.kind.into();
    let mut cfg = file
        .simulation
        .unwrap_or_default()
        .config(load, vec![1.0 / sc.len() as f64; sc.len()])?;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    let v = validate(&sc, load, kind, &cfg, a.tolerance)?;

    let oracle_cfg = OracleConfig::default();
    // Optimal: relative excess of the grid optimum's latency; NEP: largest
    // probability difference to best-response dynamics.
    let (oracle_gap, oracle_ok) = match kind {
        AllocationKind::Optimal if sc.len() <= MAX_BRUTE_FORCE_SERVERS => {
            let p = brute_force_optimal(&sc, load, &oracle_cfg)?;
            let u = mean_latency(&sc, &p, load)?;
            let gap = (u - v.analytic) / u;
            (Some(gap), (-1e-9..=1e-6).contains(&gap))
        }
        AllocationKind::Optimal => (None, true),
        AllocationKind::Nep => {
            let p = best_response_nep(&sc, load, &oracle_cfg)?;
            let gap = p
                .iter()
                .zip(&v.p)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max);
            (Some(gap), gap <= 1e-5)
        }
    };

    writeln!(out, "{kind} allocation at load {} jobs/s", sig6(load)).map_err(io)?;
    writeln!(
        out,
        "p: [{}]",
        v.p.iter().map(|&x| sig6(x)).collect::<Vec<_>>().join(", ")
    )
    .map_err(io)?;
    writeln!(out, "analytic mean latency:  {} s", sig6(v.analytic)).map_err(io)?;
    match v.half_width {
        Some(h) => writeln!(
            out,
            "simulated mean latency: {} ± {} s",
            sig6(v.empirical),
            sig6(h)
        ),
        None => writeln!(out, "simulated mean latency: {} s", sig6(v.empirical)),
    }
    .map_err(io)?;
    writeln!(
        out,
        "relative gap: {} (tolerance {}), analytic value {} the confidence interval",
        sig6(v.relative_gap),
        sig6(v.tolerance),
        if v.within_ci { "inside" } else { "outside" }
    )
    .map_err(io)?;
    match (kind, oracle_gap) {
        (AllocationKind::Optimal, Some(g)) => writeln!(
            out,
            "reference grid search: relative latency excess {}",
            sig6(g)
        ),
        (AllocationKind::Nep, Some(g)) => {
            writeln!(out, "reference best response: max |dp| {}", sig6(g))
        }
        (_, None) => writeln!(
            out,
            "reference grid search skipped (more than {MAX_BRUTE_FORCE_SERVERS} servers)"
        ),
    }
    .map_err(io)?;

    let passed = v.passed && oracle_ok;
    if let Some(path) = &a.out {
        write_csv(
            path,
            &[ValidationRow {
                kind,
                load,
                analytic: v.analytic,
                empirical: v.empirical,
                half_width: v.half_width,
                relative_gap: v.relative_gap,
                within_ci: v.within_ci,
                oracle_gap,
                passed,
            }],
        )?;
    }
    if !v.passed {
        return Err(CliError::Mismatch(format!(
            "simulated latency differs from the analytic value by {} (tolerance {})",
            sig6(v.relative_gap),
            sig6(v.tolerance)
        )));
    }
    if !oracle_ok {
        return Err(CliError::Mismatch(
            "solver and reference solver disagree".into(),
        ));
    }
    writeln!(out, "PASS").map_err(io)?;
    Ok(())
}
