//! Subcommand implementations.

use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context};
use costfolio::backtest::{run_backtest_with_relatives, BacktestConfig, BacktestLedger, Strategy};
use costfolio::baselines::{self, StrategyKind, StrategyParams};
use costfolio::metrics::MetricBlock;
use costfolio::ppn::{Checkpoint, PpnStrategy};
use costfolio::sweep::{run_sweep, SweepConfig};
use costfolio::training::train;
use costfolio::verify::{run_verify, Fault, VerifyOptions, VerifyReport};
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::config::{hash_of, LoadedConfig, RunConfig};
use crate::errors::{UsageError, VerificationFailed};
use crate::output::{fmt_num, metric_table, OutputDir, RunRecord};
use crate::{Cli, Command, ConfigArgs, FaultArg};

/// What the config hash covers: the command, the fully resolved config and
/// any command arguments that change the outputs.
#[derive(Serialize)]
struct HashInput<'a> {
    command: &'a str,
    config: &'a RunConfig,
    args: serde_json::Value,
}

fn config_hash(command: &str, cfg: &RunConfig, args: serde_json::Value) -> String {
    hash_of(&HashInput { command, config: cfg, args })
}

fn load(args: &ConfigArgs) -> anyhow::Result<LoadedConfig> {
    LoadedConfig::load(&args.config, &args.overrides)
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Ingest(args) => ingest(&args),
        Command::Backtest { common, strategy, params, checkpoint } => backtest(&common, &strategy, &params, checkpoint.as_deref()),
        Command::Train(args) => train_cmd(&args),
        Command::Sweep { common, jobs } => sweep(&common, jobs),
        Command::Verify { seed, out, inject_fault } => verify(seed, out.as_deref(), inject_fault),
        Command::Report { path } => report(&path),
    }
}

fn ingest(args: &ConfigArgs) -> anyhow::Result<()> {
    let clock = Instant::now();
    let cfg = load(args)?;
    let raw =
        costfolio::market_data::PricePanel::ingest(&cfg.asset_paths(), costfolio::market_data::GridSpec::every(cfg.run.period_seconds))?;
    let panel = raw.fill_missing()?;
    let hash = config_hash("ingest", &cfg.run, json!({}));
    let summary = json!({
        "config_hash": hash,
        "assets": panel.asset_ids(),
        "periods": panel.n_periods(),
        "missing_cells_before_fill": raw.missing_count(),
        "first_timestamp": panel.timestamps().first(),
        "last_timestamp": panel.timestamps().last(),
        "period_seconds": panel.period_seconds(),
        "provenance": raw.provenance(),
        "dataset_fingerprint": panel.fingerprint(),
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    let mut out = OutputDir::create(&args.out, &hash)?;
    out.json("ingest.json", &summary)?;
    let record = RunRecord::new("ingest", &hash, cfg.run.seed, panel.fingerprint());
    out.finish(record, clock.elapsed().as_secs_f64())?;
    Ok(())
}

fn file_digest(path: &Path) -> anyhow::Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn load_policy(path: &Path, cfg: &RunConfig, n_risky: usize) -> anyhow::Result<PpnStrategy> {
    let ck = Checkpoint::load(path)?;
    if ck.config.window != cfg.window_k {
        bail!(UsageError(format!("checkpoint window {} differs from config window_k {}", ck.config.window, cfg.window_k)));
    }
    if ck.config.assets != n_risky {
        bail!(UsageError(format!("checkpoint expects {} risky assets, the panel has {n_risky}", ck.config.assets)));
    }
    Ok(PpnStrategy::new(ck.config, ck.params)?)
}

fn backtest(args: &ConfigArgs, strategy: &str, params: &[String], checkpoint: Option<&Path>) -> anyhow::Result<()> {
    let clock = Instant::now();
    let cfg = load(args)?;
    let run = &cfg.run;
    let selector = strategy.to_ascii_lowercase();

    let kinds: Vec<StrategyKind> = match selector.as_str() {
        "all" => StrategyKind::ALL.to_vec(),
        "ppn" => Vec::new(),
        name => vec![name.parse().map_err(|e: costfolio::Error| UsageError(e.to_string()))?],
    };
    if selector == "all" && !params.is_empty() {
        bail!(UsageError("--param applies to a single baseline, not `all`".into()));
    }
    if selector == "ppn" && checkpoint.is_none() {
        bail!(UsageError("strategy `ppn` needs --checkpoint <file> (produce one with `costfolio train`)".into()));
    }
    if checkpoint.is_some() && !matches!(selector.as_str(), "ppn" | "all") {
        bail!(UsageError(format!("--checkpoint is only used with `ppn` or `all`, not `{strategy}`")));
    }
    let strategy_params = StrategyParams::parse(params).map_err(|e| UsageError(e.to_string()))?;

    let panel = cfg.panel()?;
    let relatives = panel.relatives()?;
    let bt = BacktestConfig::new(run.cost_spec(), run.window_k).with_range(run.test_range[0], run.test_range[1]);
    let (first, end) = bt.decision_range(&panel)?;
    let evaluation = &relatives[first..end];

    let ck_digest = checkpoint.map(file_digest).transpose()?;
    let hash = config_hash("backtest", run, json!({ "strategy": selector, "params": params, "checkpoint_sha256": ck_digest }));

    let mut ledgers: Vec<BacktestLedger> = Vec::new();
    for kind in kinds {
        let mut s = baselines::build(kind, &strategy_params, panel.n_assets(), evaluation)?;
        ledgers.push(run_backtest_with_relatives(&panel, &relatives, &mut s, &bt)?);
    }
    if let Some(path) = checkpoint {
        let mut policy = load_policy(path, run, panel.n_risky())?;
        debug_assert_eq!(policy.name(), "ppn");
        ledgers.push(run_backtest_with_relatives(&panel, &relatives, &mut policy, &bt)?);
    }

    let mut out = OutputDir::create(&args.out, &hash)?;
    let mut record = RunRecord::new("backtest", &hash, run.seed, panel.fingerprint());
    let mut rows = Vec::new();
    for ledger in &ledgers {
        out.csv(&format!("ledger_{}.csv", ledger.strategy), |w| ledger.write_csv(w))?;
        let m = MetricBlock::from_ledger(ledger);
        rows.push((ledger.strategy.clone(), m));
        record.metrics.insert(ledger.strategy.clone(), m);
    }
    out.csv("comparison.csv", |w| {
        use std::io::Write;
        writeln!(w, "strategy,apv,sr_pct,cr,to")?;
        for (name, m) in &rows {
            let cr = if m.cr.infinite { f64::INFINITY } else { m.cr.value };
            let sr = if m.sr.infinite { f64::INFINITY } else { m.sr_pct() };
            writeln!(w, "{name},{},{},{},{}", fmt_num(m.apv), fmt_num(sr), fmt_num(cr), fmt_num(m.to))?;
        }
        Ok(())
    })?;
    print!("{}", metric_table(&record.metrics));
    let path = out.finish(record, clock.elapsed().as_secs_f64())?;
    println!("wrote {}", path.display());
    Ok(())
}

fn train_cmd(args: &ConfigArgs) -> anyhow::Result<()> {
    let clock = Instant::now();
    let cfg = load(args)?;
    let run = &cfg.run;
    let panel = cfg.panel()?;
    let ppn = run.ppn_config(panel.n_risky());
    let train_cfg = run.train_config()?;
    let hash = config_hash("train", run, json!({}));

    let report = train(&panel, &ppn, &run.reward(), &train_cfg)?;
    let mut ck = report.checkpoint;
    ck.config_hash = Some(hash.clone());

    let mut out = OutputDir::create(&args.out, &hash)?;
    out.text("checkpoint.json", &(ck.to_json() + "\n"))?;
    out.csv("train_log.csv", |w| report.log.write_csv(w))?;
    if let Some(last) = report.log.rows.last() {
        println!(
            "step {}: reward {:.6}, mean log-return {:.6}, variance {:.3e}, turnover penalty {:.3e}",
            last.step, last.reward, last.mean_log_return, last.variance, last.turnover_penalty
        );
    }
    let record = RunRecord::new("train", &hash, run.seed, panel.fingerprint());
    let path = out.finish(record, clock.elapsed().as_secs_f64())?;
    if let Some(abort) = report.abort {
        // The checkpoint on disk holds the last finite parameters.
        return Err(costfolio::Error::NonFinite(format!("training aborted at step {}: {}", abort.step, abort.reason)).into());
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn sweep(args: &ConfigArgs, jobs: usize) -> anyhow::Result<()> {
    let clock = Instant::now();
    let cfg = load(args)?;
    let run = &cfg.run;
    if jobs == 0 {
        bail!(UsageError("--jobs must be at least 1".into()));
    }
    let panel = cfg.panel()?;
    let sweep_cfg = SweepConfig {
        ppn: run.ppn_config(panel.n_risky()),
        train: run.train_config()?,
        variant: run.train.variant,
        cost: run.cost_spec(),
        test_range: run.test_range(),
        seeds: run.grid.seeds.clone(),
    };
    let points: Vec<(f64, f64)> = run.grid.lambdas.iter().flat_map(|&l| run.grid.gammas.iter().map(move |&g| (l, g))).collect();
    let hash = config_hash("sweep", run, json!({}));

    let rows = run_sweep(&panel, &sweep_cfg, &points, jobs)?;

    let mut out = OutputDir::create(&args.out, &hash)?;
    let mut record = RunRecord::new("sweep", &hash, run.seed, panel.fingerprint());
    out.csv("sweep.csv", |w| {
        use std::io::Write;
        writeln!(w, "lambda,gamma,apv,sr,std,mdd,to")?;
        for r in &rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                fmt_num(r.lambda),
                fmt_num(r.gamma),
                fmt_num(r.apv),
                fmt_num(r.sr),
                fmt_num(r.std),
                fmt_num(r.mdd),
                fmt_num(r.to)
            )?;
        }
        Ok(())
    })?;
    for r in &rows {
        for (seed, m) in run.grid.seeds.iter().zip(&r.runs) {
            record.metrics.insert(format!("lambda={:?},gamma={:?},seed={seed}", r.lambda, r.gamma), *m);
        }
        println!(
            "lambda {:<8} gamma {:<8} apv {:.6} sr {:.6} std {:.6} mdd {:.4} to {:.4}",
            r.lambda, r.gamma, r.apv, r.sr, r.std, r.mdd, r.to
        );
    }
    let path = out.finish(record, clock.elapsed().as_secs_f64())?;
    println!("wrote {}", path.display());
    Ok(())
}

#[derive(Serialize)]
struct VerifyFile<'a> {
    config_hash: &'a str,
    seed: u64,
    passed: bool,
    #[serde(flatten)]
    report: &'a VerifyReport,
}

fn verify(seed: u64, out: Option<&Path>, fault: Option<FaultArg>) -> anyhow::Result<()> {
    let fault = fault.map(|f| match f {
        FaultArg::L1Sign => Fault::L1Sign,
    });
    let opts = VerifyOptions { seed, fault, ..VerifyOptions::default() };
    let report = run_verify(&opts)?;
    for c in &report.checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    let passed = report.passed();
    if let Some(dir) = out {
        let hash = hash_of(&json!({ "command": "verify", "seed": seed, "fault": fault.map(|_| "l1-sign") }));
        let mut o = OutputDir::create(dir, &hash)?;
        o.json("verify.json", &VerifyFile { config_hash: &hash, seed, passed, report: &report })?;
    }
    let failed = report.checks.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        bail!(VerificationFailed(format!("{failed} of {} checks failed", report.checks.len())));
    }
    println!("all {} checks passed", report.checks.len());
    Ok(())
}

fn report(path: &Path) -> anyhow::Result<()> {
    let record = RunRecord::load(path).map_err(|e| UsageError(format!("{e:#}")))?;
    println!(
        "{} run, config {}, seed {}, dataset {}, version {}",
        record.command,
        &record.config_hash[..record.config_hash.len().min(12)],
        record.seed,
        &record.dataset_fingerprint[..record.dataset_fingerprint.len().min(12)],
        record.version
    );
    if record.metrics.is_empty() {
        println!("(no metrics recorded)");
    } else {
        print!("{}", metric_table(&record.metrics));
    }
    println!("outputs: {}", record.outputs.join(", "));
    Ok(())
}
