#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod args;
mod config;
mod output;

use std::io::Write;
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::Parser;
use log::info;

use bmcoll::fredholm::{
    default_stat_step, prob_flat_at, prob_packed_at, prob_stat, prob_stat_rho, tail_rate_table,
    FredholmConfig,
};
use bmcoll::saddle::{packed_saddles, rate_asymptote, rate_flat, rate_packed, rate_stat, Regime};
use bmcoll::sim::{simulate_samples, tail_from_samples, SimConfig, SimIc};
use bmcoll::stats::mean_stderr;
use bmcoll::verify::{self, Mode};
use bmcoll::{DeviationParam, InitialCondition};

use args::{Cli, Command, Format, IcArg, IcOrAll};
use output::{Cell, Table};

pub const THREADS_ENV: &str = "BMCOLL_THREADS";

/// Rejected input; exit status 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct Invalid(String);

fn invalid(msg: impl Into<String>) -> anyhow::Error {
    anyhow!(Invalid(msg.into()))
}

fn ic_of(ic: IcArg) -> InitialCondition {
    match ic {
        IcArg::Packed => InitialCondition::Packed,
        IcArg::Flat => InitialCondition::Flat,
        IcArg::Stationary => InitialCondition::Stationary,
    }
}

fn deviation(a: f64) -> Result<DeviationParam> {
    DeviationParam::new(a).map_err(|e| invalid(e.to_string()))
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("--{name} must be finite and > 0, got {v}")))
    }
}

fn fredholm_config(grid_size: usize, max_grid_size: usize) -> Result<FredholmConfig> {
    if grid_size < 8 || max_grid_size < 2 * grid_size {
        return Err(invalid(format!(
            "grid sizes must satisfy 8 <= grid-size and 2 grid-size <= max-grid-size, got {grid_size}, {max_grid_size}"
        )));
    }
    Ok(FredholmConfig {
        grid_size,
        max_grid_size,
        ..FredholmConfig::default()
    })
}

fn rates(a: &args::RatesArgs) -> Result<Table> {
    positive("a-min", a.a_min)?;
    if !(a.a_max > a.a_min) || a.points < 2 {
        return Err(invalid("need a-max > a-min and points >= 2"));
    }
    let grid: Vec<f64> = (0..a.points)
        .map(|i| {
            let u = i as f64 / (a.points - 1) as f64;
            if a.linear {
                a.a_min + u * (a.a_max - a.a_min)
            } else {
                a.a_min * (a.a_max / a.a_min).powf(u)
            }
        })
        .collect();
    let columns = match a.ic {
        IcOrAll::All => vec![
            "a", "r_packed", "r_flat", "r_stat", "z_a", "w_minus", "w_plus",
        ],
        IcOrAll::Packed => vec!["a", "r_packed", "w_minus", "w_plus"],
        IcOrAll::Flat => vec!["a", "r_flat", "z_a", "phi_z_a"],
        IcOrAll::Stationary => vec!["a", "r_stat", "w_plus"],
    };
    let mut t = Table::new("rates", columns);
    for av in grid {
        let d = deviation(av)?;
        let (wm, wp) = packed_saddles(d);
        let row: Vec<Cell> = match a.ic {
            IcOrAll::All => {
                let f = rate_flat(d)?;
                vec![
                    av.into(),
                    rate_packed(d).into(),
                    f.rate.into(),
                    rate_stat(d).into(),
                    f.saddle_lo.into(),
                    wm.into(),
                    wp.into(),
                ]
            }
            IcOrAll::Packed => vec![av.into(), rate_packed(d).into(), wm.into(), wp.into()],
            IcOrAll::Flat => {
                let f = rate_flat(d)?;
                vec![
                    av.into(),
                    f.rate.into(),
                    f.saddle_lo.into(),
                    f.saddle_hi.into(),
                ]
            }
            IcOrAll::Stationary => vec![av.into(), rate_stat(d).into(), wp.into()],
        };
        t.push(row);
    }
    Ok(t)
}

fn prob(p: &args::ProbArgs) -> Result<Table> {
    positive("t", p.t)?;
    let a = deviation(p.a)?;
    if !p.s.is_finite() {
        return Err(invalid("--s must be finite"));
    }
    let cfg = fredholm_config(p.grid_size, p.max_grid_size)?;
    let ic = ic_of(p.ic);
    if let Some(rho) = p.rho {
        if ic != InitialCondition::Stationary {
            return Err(invalid("--rho applies to the stationary condition only"));
        }
        if !(rho > 0.0 && rho <= 1.0) {
            return Err(invalid(format!("--rho must lie in (0, 1], got {rho}")));
        }
    }
    if ic == InitialCondition::Stationary && p.s != 0.0 {
        return Err(invalid("--s is not supported for the stationary condition"));
    }
    let mut t = Table::new(
        "prob",
        vec![
            "ic",
            "t",
            "a",
            "rho",
            "s",
            "p",
            "survival",
            "log_survival",
            "im_residue",
            "refinement_delta",
            "grid_size",
            "decay_rate",
            "first_summand_deriv",
            "second_summand_deriv",
        ],
    );
    let rho = p.rho.unwrap_or(1.0);
    let (r, parts) = match ic {
        InitialCondition::Packed => (prob_packed_at(p.t, a, p.s, &cfg)?, None),
        InitialCondition::Flat => (prob_flat_at(p.t, a, p.s, &cfg)?, None),
        InitialCondition::Stationary if rho < 1.0 => (prob_stat_rho(p.t, a, rho, &cfg)?, None),
        InitialCondition::Stationary => {
            let s = prob_stat(p.t, a, default_stat_step(p.t, a), &cfg)?;
            (
                s.prob,
                Some((s.first_summand_deriv, s.second_summand_deriv)),
            )
        }
    };
    t.push(vec![
        ic.name().into(),
        p.t.into(),
        p.a.into(),
        if ic == InitialCondition::Stationary {
            Cell::Num(rho)
        } else {
            Cell::Missing
        },
        p.s.into(),
        r.p.into(),
        r.survival.into(),
        r.log_survival.into(),
        r.im_residue.into(),
        r.refinement_delta.into(),
        r.grid_size.into(),
        r.decay_rate.into(),
        parts.map(|x| x.0).into(),
        parts.map(|x| x.1).into(),
    ]);
    Ok(t)
}

fn tail(a: &args::TailArgs) -> Result<Table> {
    let d = deviation(a.a)?;
    if a.t_list.is_empty() || a.t_list.iter().any(|&t| !(t.is_finite() && t > 0.0)) {
        return Err(invalid("--t-list must hold positive values"));
    }
    if a.t_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("--t-list must be strictly increasing"));
    }
    let cfg = fredholm_config(a.grid_size, 16 * a.grid_size)?;
    let rows = tail_rate_table(ic_of(a.ic), d, &a.t_list, &cfg)?;
    let mut t = Table::new(
        "tail",
        vec![
            "t",
            "survival",
            "log_survival",
            "r_hat",
            "r",
            "scaled",
            "predicted_log_survival",
            "ratio_to_closed_form",
        ],
    );
    for r in rows {
        t.push(vec![
            r.t.into(),
            r.survival.into(),
            r.log_survival.into(),
            r.r_hat.into(),
            r.r.into(),
            r.scaled.into(),
            r.predicted_log_survival.into(),
            r.ratio_to_closed_form.into(),
        ]);
    }
    Ok(t)
}

fn simulate(s: &args::SimulateArgs) -> Result<Table> {
    let ic = match s.ic {
        IcArg::Packed => SimIc::Packed,
        IcArg::Flat => SimIc::Flat,
        IcArg::Stationary => SimIc::Stationary { rho: s.rho },
    };
    let mut cfg = SimConfig::new(ic, s.t, s.reps, s.seed);
    if let Some(dt) = s.dt {
        cfg.dt = dt;
    }
    if let Some(c) = s.cutoff {
        cfg.cutoff = c;
    }
    cfg.bridge = !s.no_bridge;
    cfg.validate().map_err(|e| invalid(e.to_string()))?;
    let a = s.a.map(deviation).transpose()?;
    let batch = simulate_samples(&cfg)?;
    info!("simulated {} replicas in {:.2} s", cfg.reps, batch.elapsed);
    if s.samples {
        let mut t = Table::new("simulate", vec!["replica", "x"]);
        for (i, &x) in batch.values.iter().enumerate() {
            t.push(vec![i.into(), x.into()]);
        }
        return Ok(t);
    }
    let (mean, se) = mean_stderr(&batch.values);
    let mut t = Table::new(
        "simulate",
        vec![
            "ic", "t", "dt", "cutoff", "reps", "seed", "mean", "stderr", "level", "p_hat",
            "p_stderr", "hits",
        ],
    );
    let tailc = a.map(|a| {
        (
            a,
            tail_from_samples(&batch.values, (2.0 + a.get()) * s.t as f64),
        )
    });
    t.push(vec![
        ic_of(s.ic).name().into(),
        (s.t as usize).into(),
        cfg.dt.into(),
        if matches!(ic, SimIc::Packed) {
            Cell::Missing
        } else {
            (cfg.cutoff as usize).into()
        },
        cfg.reps.into(),
        Cell::Text(cfg.seed.to_string()),
        mean.into(),
        se.into(),
        tailc.map(|(a, _)| (2.0 + a.get()) * s.t as f64).into(),
        tailc.map(|(_, e)| e.p_hat).into(),
        tailc.map(|(_, e)| e.stderr).into(),
        tailc.map_or(Cell::Missing, |(_, e)| e.hits.into()),
    ]);
    Ok(t)
}

fn figure1(f: &args::Figure1Args) -> Result<Table> {
    positive("a-max", f.a_max)?;
    if f.points < 2 {
        return Err(invalid("--points must be >= 2"));
    }
    let mut t = Table::new("figure1", vec!["a", "r_flat", "asym_small", "asym_large"]);
    for i in 1..=f.points {
        let a = f.a_max * i as f64 / f.points as f64;
        let d = deviation(a)?;
        t.push(vec![
            a.into(),
            rate_flat(d)?.rate.into(),
            rate_asymptote(InitialCondition::Flat, d, Regime::Small)?.into(),
            rate_asymptote(InitialCondition::Flat, d, Regime::Large)?.into(),
        ]);
    }
    Ok(t)
}

fn verify_cmd(v: &args::VerifyArgs, format: Format, out: &mut dyn Write) -> Result<bool> {
    let mode = if v.fast { Mode::Fast } else { Mode::Full };
    let ids: Vec<u8> = if v.only.is_empty() {
        verify::CRITERIA.iter().map(|c| c.0).collect()
    } else {
        if let Some(bad) = v.only.iter().find(|&&i| !(1..=13).contains(&i)) {
            return Err(invalid(format!("no criterion {bad}")));
        }
        v.only.clone()
    };
    let mut outcomes = Vec::new();
    for id in ids {
        let start = std::time::Instant::now();
        let o = verify::run_criterion(id, mode).unwrap_or_else(|e| verify::errored(id, &e));
        info!("criterion {id} took {:.2} s", start.elapsed().as_secs_f64());
        if format == Format::Csv {
            writeln!(out, "{}", verify::format_line(&o))?;
        }
        outcomes.push(o);
    }
    let passed = outcomes.iter().filter(|o| o.passed).count();
    match format {
        Format::Csv => writeln!(out, "{passed}/{} criteria passed", outcomes.len())?,
        Format::Json => {
            let v = serde_json::json!({ "command": "verify", "mode": mode, "passed": passed, "criteria": outcomes });
            serde_json::to_writer_pretty(&mut *out, &v)?;
            writeln!(out)?;
        }
    }
    Ok(passed == outcomes.len())
}

fn init_logging(level: log::LevelFilter) {
    env_logger::Builder::new()
        .filter_level(level)
        .format(|buf, record| writeln!(buf, "[{}] {}", record.level(), record.args()))
        .target(env_logger::Target::Stderr)
        .init();
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v.parse().ok().filter(|&n| n > 0).ok_or_else(|| {
            invalid(format!(
                "{THREADS_ENV} must be a positive integer, got `{v}`"
            ))
        })?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    init_threads()?;
    let mut sink: Box<dyn Write> = match &cli.output {
        Some(p) => Box::new(std::io::BufWriter::new(
            std::fs::File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(std::io::stdout().lock()),
    };
    let table = match &cli.command {
        Command::Rates(a) => rates(a)?,
        Command::Prob(a) => prob(a)?,
        Command::Tail(a) => tail(a)?,
        Command::Simulate(a) => simulate(a)?,
        Command::Figure1(a) => figure1(a)?,
        Command::Verify(v) => {
            let ok = verify_cmd(v, cli.format, &mut sink)?;
            sink.flush()?;
            return Ok(ok);
        }
    };
    table.write(cli.format, &mut sink)?;
    sink.flush()?;
    Ok(true)
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<Invalid>().is_some() {
        return 2;
    }
    match e.downcast_ref::<bmcoll::Error>() {
        Some(err) if err.is_invalid_argument() => 2,
        Some(_) => 3,
        None => 1,
    }
}

fn main() -> ExitCode {
    let argv = match config::merge(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("[ERROR] {e:#}");
            return ExitCode::from(2);
        }
    };
    let cli = Cli::parse_from(argv);
    init_logging(cli.log_level);
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            let code = exit_code(&e);
            log::error!("{e:#}");
            ExitCode::from(code)
        }
    }
}
