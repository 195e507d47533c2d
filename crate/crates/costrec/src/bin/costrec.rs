//! Experiment harness: build a configured instance, wrap the configured
//! reduction around it, and emit deterministic result files.
//!
//! Subcommands: `run` (schedule + per-profile results + summary), `audit`
//! (independent checks, exit 1 on any failure), `lowerbound` (the
//! equal-revenue stress experiment), `sweep` (a parameter grid of runs).
//!
//! Exit codes: 0 success, 1 audit failure, 2 config error, 3 mode/instance
//! incompatibility. Identical config and seed produce byte-identical files
//! regardless of `--jobs`.

use clap::{Args, Parser, Subcommand, ValueEnum};
use costrec::audit::{check_bic_on_grid, lower_bound_experiment, LowerBoundConfig};
use costrec::config::{BuiltInstance, BuiltMechanism, ExperimentConfig, ModeKind};
use costrec::mechanism::{
    algorithm_social_cost_exact, algorithm_social_cost_sampled, expected_totals_exact,
    expected_totals_sampled,
};
use costrec::model::social_cost;
use costrec::report::{
    audit_json, fmt_sig12, profile_csv_row, schedule_csv, sweep_csv, write_text, Summary,
    SweepRow, PROFILES_CSV_HEADER,
};
use costrec::Error;
use std::path::PathBuf;
use std::process::ExitCode;

/// Deviation tolerance for the incentive audits.
const BIC_TOL: f64 = 1e-9;
/// Exact-mode slack for the cost-recovery audit.
const RECOVERY_TOL: f64 = 1e-9;
/// Replicate tag for summary estimates, distinct from selection and audit
/// streams.
const SUMMARY_RUN_TAG: u64 = 11;

#[derive(Parser)]
#[command(
    name = "costrec",
    version,
    about = "Cost-recovering mechanism reductions: run, audit, and sweep experiments"
)]
struct Cli {
    /// Worker threads (default: $COSTREC_JOBS, then all cores). Results do
    /// not depend on this.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the configured reduction and write schedule, per-profile
    /// results, and a summary
    Run(ConfigArgs),
    /// Run the independent audit suite against the configured reduction
    Audit(ConfigArgs),
    /// Equal-revenue lower-bound experiment
    Lowerbound(LowerboundArgs),
    /// Run every cell of the configured parameter grid
    Sweep(ConfigArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment config (TOML)
    #[arg(long)]
    config: PathBuf,
    /// Override the config's seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's output directory
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Override the config's evaluation mode
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Self-test hook for `audit`: charge every served agent this flat
    /// price instead of the mechanism's own payments, so the deviation
    /// scan has a known violation to catch. The base algorithm must be
    /// report-sensitive (e.g. `argmax`) — under `serve_all` a flat charge
    /// is constant in the reports and therefore still truthful
    #[arg(long, hide = true)]
    flat_price: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Exact,
    Sampled,
}

#[derive(Args)]
struct LowerboundArgs {
    /// Value spread of the equal-revenue prior (must exceed 1)
    #[arg(long, default_value_t = 16.0)]
    h: f64,
    /// Number of agents
    #[arg(long, default_value_t = 1024)]
    n: usize,
    /// Profile draws for each measured expectation
    #[arg(long, default_value_t = 100_000)]
    samples: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_thread_pool(cli.jobs);
    let code = match cli.command {
        Command::Run(args) => cmd_run(&args),
        Command::Audit(args) => cmd_audit(&args),
        Command::Lowerbound(args) => cmd_lowerbound(&args),
        Command::Sweep(args) => cmd_sweep(&args),
    };
    match code {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}

fn init_thread_pool(jobs: Option<usize>) {
    let jobs = jobs.or_else(|| {
        std::env::var("COSTREC_JOBS")
            .ok()
            .and_then(|s| s.parse().ok())
    });
    if let Some(jobs) = jobs {
        // failure means a pool already exists (e.g. under a test harness);
        // results do not depend on the pool size either way
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }
}

/// 2 for configuration problems, 3 for mode/instance incompatibilities.
fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::InvalidInstance(_) | Error::EntryBelowOne { .. } | Error::Io(_) => 2,
        _ => 3,
    }
}

/// Load the config and apply CLI overrides.
fn load(args: &ConfigArgs) -> Result<ExperimentConfig, Error> {
    let mut cfg = ExperimentConfig::from_path(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(mode) = args.mode {
        cfg.mode.kind = match mode {
            ModeArg::Exact => ModeKind::Exact,
            ModeArg::Sampled => ModeKind::Sampled,
        };
    }
    if let Some(dir) = &args.out_dir {
        cfg.output.dir = Some(dir.display().to_string());
    }
    Ok(cfg)
}

fn out_dir(cfg: &ExperimentConfig) -> PathBuf {
    PathBuf::from(cfg.output.dir.clone().unwrap_or_else(|| "out".into()))
}

fn stem(cfg: &ExperimentConfig, default: &str) -> String {
    cfg.output.stem.clone().unwrap_or_else(|| default.into())
}

/// Summary expectations for one built mechanism: (payment, service cost,
/// mechanism SC, base SC).
fn measure(
    cfg: &ExperimentConfig,
    instance: &BuiltInstance,
    mech: &BuiltMechanism,
) -> Result<(f64, f64, f64, f64), Error> {
    match cfg.mode.kind {
        ModeKind::Exact => {
            let totals = expected_totals_exact(
                mech.mechanism(),
                &instance.prior,
                &instance.cost,
                cfg.mode.cap(),
            )?;
            let base_sc = algorithm_social_cost_exact(
                instance.base.as_ref(),
                &instance.prior,
                &instance.cost,
                cfg.mode.cap(),
            )?;
            Ok((totals.payment, totals.service_cost, totals.social_cost, base_sc))
        }
        ModeKind::Sampled => {
            let samples = cfg.mode.sc_samples() as usize;
            let totals = expected_totals_sampled(
                mech.mechanism(),
                &instance.prior,
                &instance.cost,
                samples,
                cfg.seed,
                SUMMARY_RUN_TAG,
            )?;
            // same seed and tag: the base sees the same profiles
            let base_sc = algorithm_social_cost_sampled(
                instance.base.as_ref(),
                &instance.prior,
                &instance.cost,
                samples,
                cfg.seed,
                SUMMARY_RUN_TAG,
            );
            Ok((totals.payment, totals.service_cost, totals.social_cost, base_sc))
        }
    }
}

fn ratio_of(mech_sc: f64, base_sc: f64) -> f64 {
    if base_sc > 0.0 {
        mech_sc / base_sc
    } else if mech_sc <= 0.0 {
        1.0
    } else {
        f64::INFINITY
    }
}

fn cmd_run(args: &ConfigArgs) -> Result<ExitCode, Error> {
    let cfg = load(args)?;
    let config_text = std::fs::read_to_string(&args.config)?;
    let (instance, mech) = cfg.build()?;
    let (payment, service_cost, mech_sc, base_sc) = measure(&cfg, &instance, &mech)?;

    let dir = out_dir(&cfg);
    let stem = stem(&cfg, "run");
    let mut written = Vec::new();

    let mut summary = Summary::new(&config_text, cfg.seed);
    summary.push_str("agents", &instance.n.to_string());
    summary.push_str("base_algorithm", &instance.base.name());
    summary.push_str(
        "mode",
        match cfg.mode.kind {
            ModeKind::Exact => "exact",
            ModeKind::Sampled => "sampled",
        },
    );
    if let Some(schedule) = mech.schedule() {
        summary.push_str("reduction", &format!("{:?}", schedule.rule).to_lowercase());
        summary.push_num("delta", schedule.delta);
        summary.push_num("eps0", schedule.eps0);
        summary.push_num("chosen_threshold", schedule.threshold);
        let chosen_row = schedule
            .rows
            .iter()
            .position(|r| r.selected)
            .map(|k| k.to_string())
            .unwrap_or_else(|| "none".into());
        summary.push_str("chosen_row", &chosen_row);
        if let Some(rs) = schedule.row_samples {
            summary.push_str("row_samples", &rs.to_string());
        }
        let name = format!("{stem}_schedule.csv");
        write_text(&dir, &name, &schedule_csv(schedule))?;
        written.push(name);
    } else {
        summary.push_str("reduction", mech.mechanism().name().as_str());
    }
    summary.push_num("expected_revenue", payment);
    summary.push_num("expected_cost", service_cost);
    summary.push_num("expected_social_cost", mech_sc);
    summary.push_num("base_social_cost", base_sc);
    summary.push_num("social_cost_ratio", ratio_of(mech_sc, base_sc));

    // per-profile rows are an exact-mode product; sampled runs skip them
    if cfg.mode.kind == ModeKind::Exact {
        let mut csv = String::from(PROFILES_CSV_HEADER);
        csv.push('\n');
        for (v, p) in instance.prior.enumerate_support(cfg.mode.cap())? {
            for (res, q) in mech.mechanism().result_distribution(&v)? {
                let sc = social_cost(&res.served, &v, &instance.cost);
                let cost = instance.cost.cost(&res.served);
                csv.push_str(&profile_csv_row(&v, p * q, &res, cost, sc));
                csv.push('\n');
            }
        }
        let name = format!("{stem}_profiles.csv");
        write_text(&dir, &name, &csv)?;
        written.push(name);
    }

    let name = format!("{stem}_summary.txt");
    let body = summary.render();
    write_text(&dir, &name, &body)?;
    written.push(name);

    print!("{body}");
    for name in &written {
        println!("wrote {}", dir.join(name).display());
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_audit(args: &ConfigArgs) -> Result<ExitCode, Error> {
    let cfg = load(args)?;
    let (instance, mech) = cfg.build()?;
    let reports = match args.flat_price {
        Some(price) => {
            let fixture = FlatPriceFixture {
                base: instance.base.clone(),
                price,
                n: instance.n,
            };
            vec![check_bic_on_grid(
                &fixture,
                &instance.prior,
                BIC_TOL,
                cfg.mode.cap(),
            )?]
        }
        None => costrec::audit::standard_suite(&cfg, &instance, &mech, BIC_TOL, RECOVERY_TOL)?,
    };

    let dir = out_dir(&cfg);
    let name = format!("{}_report.json", stem(&cfg, "audit"));
    write_text(&dir, &name, &audit_json(&reports))?;

    let mut all_pass = true;
    for report in &reports {
        println!("{} {}", if report.pass { "pass" } else { "FAIL" }, report.name);
        for detail in &report.details {
            println!("  {detail}");
        }
        all_pass &= report.pass;
    }
    println!("wrote {}", dir.join(&name).display());
    Ok(if all_pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

/// Base allocation with a constant per-served-agent charge. Value-sensitive
/// bases make this profitable to game, which is exactly what the audit
/// self-test needs to detect.
struct FlatPriceFixture {
    base: std::sync::Arc<dyn costrec::algorithms::AllocationAlgorithm>,
    price: f64,
    n: usize,
}

impl costrec::mechanism::Mechanism for FlatPriceFixture {
    fn n(&self) -> usize {
        self.n
    }

    fn run(
        &self,
        v: &costrec::model::ValuationProfile,
        rng: &mut costrec::rng::Stream,
    ) -> costrec::Result<costrec::model::MechanismResult> {
        let served = self.base.run(v, rng);
        let mut payments = vec![0.0; v.len()];
        for i in served.iter() {
            payments[i] = self.price;
        }
        Ok(costrec::model::MechanismResult::new(served, payments))
    }

    fn result_distribution(
        &self,
        v: &costrec::model::ValuationProfile,
    ) -> costrec::Result<Vec<(costrec::model::MechanismResult, f64)>> {
        let outcomes = self
            .base
            .outcome_distribution(v)
            .ok_or(Error::UnenumerableAlgorithm)?;
        Ok(outcomes
            .into_iter()
            .map(|(served, p)| {
                let mut payments = vec![0.0; v.len()];
                for i in served.iter() {
                    payments[i] = self.price;
                }
                (costrec::model::MechanismResult::new(served, payments), p)
            })
            .collect())
    }

    fn name(&self) -> String {
        format!("flat_price({}, {})", self.base.name(), self.price)
    }
}

fn cmd_lowerbound(args: &LowerboundArgs) -> Result<ExitCode, Error> {
    if !(args.h > 1.0) {
        return Err(Error::Config(format!(
            "--h must exceed 1, got {}",
            args.h
        )));
    }
    if args.n == 0 {
        return Err(Error::Config("--n must be at least 1".into()));
    }
    if args.samples == 0 {
        return Err(Error::Config("--samples must be at least 1".into()));
    }
    let report = lower_bound_experiment(
        args.h,
        args.n,
        &LowerBoundConfig::default(),
        args.samples,
        args.seed,
    )?;
    let name = "lowerbound_report.json";
    write_text(&args.out_dir, name, &audit_json(std::slice::from_ref(&report)))?;
    println!(
        "{} {}",
        if report.pass { "pass" } else { "FAIL" },
        report.name
    );
    for (key, value) in &report.measured {
        println!("  {key} = {}", fmt_sig12(*value));
    }
    println!("wrote {}", args.out_dir.join(name).display());
    Ok(if report.pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn cmd_sweep(args: &ConfigArgs) -> Result<ExitCode, Error> {
    let cfg = load(args)?;
    let sweep = cfg
        .sweep
        .clone()
        .ok_or_else(|| Error::Config("the config has no [sweep] section".into()))?;

    let mut rows = Vec::new();
    let mut ok = 0usize;
    let mut skipped = 0usize;
    for cell in sweep.cells() {
        let h = cell.h.unwrap_or(f64::NAN);
        let n = cell.n.unwrap_or(cfg.instance.agents);
        let delta = cell
            .delta
            .or(cfg.reduction.delta)
            .unwrap_or(f64::NAN);
        let epsilon = cell.epsilon.unwrap_or_else(|| cfg.mode.epsilon());
        let outcome = cfg.with_cell(&cell).and_then(|cell_cfg| {
            let (instance, mech) = cell_cfg.build()?;
            let fallback = instance.prior.spread();
            let (payment, service_cost, mech_sc, base_sc) =
                measure(&cell_cfg, &instance, &mech)?;
            Ok((fallback, mech.schedule().map(|s| s.threshold), payment, service_cost, mech_sc, base_sc))
        });
        match outcome {
            Ok((spread, threshold, payment, service_cost, mech_sc, base_sc)) => {
                ok += 1;
                rows.push(SweepRow {
                    h: cell.h.unwrap_or(spread),
                    n,
                    delta,
                    epsilon,
                    status: "ok",
                    threshold,
                    expected_cost: Some(service_cost),
                    expected_revenue: Some(payment),
                    mechanism_social_cost: Some(mech_sc),
                    base_social_cost: Some(base_sc),
                    note: String::new(),
                });
            }
            Err(err) => {
                skipped += 1;
                rows.push(SweepRow {
                    h,
                    n,
                    delta,
                    epsilon,
                    status: "skipped",
                    threshold: None,
                    expected_cost: None,
                    expected_revenue: None,
                    mechanism_social_cost: None,
                    base_social_cost: None,
                    note: err.to_string(),
                });
            }
        }
    }

    let dir = out_dir(&cfg);
    let name = format!("{}_results.csv", stem(&cfg, "sweep"));
    write_text(&dir, &name, &sweep_csv(&rows))?;
    println!(
        "wrote {} ({ok} ok, {skipped} skipped)",
        dir.join(&name).display()
    );
    Ok(ExitCode::SUCCESS)
}
