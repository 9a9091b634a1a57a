//! The `aon` command line.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 usage or configuration error,
//! 3 enumeration budget exceeded.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::channels::Channel;
use crate::condition::{
    arcsine_inequality_check, bgt_reduced_margin, bgt_witnesses, borell_bound_check, check_bgt,
    check_sbg, ArcsineReport, BgtWitnessReport, BorellReport, ConditionReport, Regime,
    DEFAULT_TOLERANCE,
};
use crate::error::{Error, Result};
use crate::harness::{
    parse_beta_grid, parse_config_text, run_sweep, with_thread_pool, write_rows, ModelSelector,
    SweepConfig,
};
use crate::info::{dn_curve, n_star, output_entropy, prior_entropy};
use crate::model::DEFAULT_BUDGET;
use crate::overlap::{uniform_grid, OverlapCurves, DEFAULT_GRID_POINTS, DEFAULT_HERMITE_ORDER};

#[derive(Debug, Parser)]
#[command(
    name = "aon",
    version,
    about = "Finite-size all-or-nothing experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sweep β = n/n* and report MMSE, divergence and predictive entropy.
    Sweep(SweepArgs),
    /// Print H(θ), H(Y) and n*.
    Nstar(NstarArgs),
    /// Tabulate the agreement curves R1, R0 and R.
    Curves(CurvesArgs),
    /// Check the sufficient condition on a grid.
    Check(CheckArgs),
    /// Estimate the normalised divergence curve D_N(β).
    Dn(DnArgs),
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// bgt, sbg-halfspace, sbg-symmetric or sbg-custom.
    #[arg(long)]
    model: Option<String>,
    /// Ambient dimension N.
    #[arg(long = "n")]
    dim: Option<usize>,
    /// Sparsity k.
    #[arg(long = "k")]
    sparsity: Option<usize>,
    /// Group-testing parameter: P(y = 0) = q.
    #[arg(long)]
    q: Option<f64>,
    /// Interval union for sbg-custom, e.g. `-inf:-1,0:1`.
    #[arg(long, allow_hyphen_values = true)]
    set: Option<String>,
}

impl ModelArgs {
    fn selector(&self) -> Result<ModelSelector> {
        let name = self.model.as_deref().unwrap_or("bgt");
        ModelSelector::parse(name, self.set.as_deref())
    }

    fn channel(&self) -> Result<Channel> {
        self.selector()?.channel(
            self.dim.unwrap_or(20),
            self.sparsity.unwrap_or(3),
            self.q.unwrap_or(0.5),
        )
    }
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// Flat `key = value` file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    model: ModelArgs,
    /// `start:stop:step` or a comma separated list.
    #[arg(long)]
    beta: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Maximum number of atoms to enumerate.
    #[arg(long)]
    budget: Option<u64>,
    /// Fresh rows per trial for the predictive entropy.
    #[arg(long)]
    mc_draws: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv or jsonl.
    #[arg(long)]
    format: Option<String>,
    /// Fill the wall_ms column (makes output run-dependent).
    #[arg(long)]
    timing: bool,
}

impl SweepArgs {
    fn pairs(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                m.insert(k.to_string(), v);
            }
        };
        put("model", self.model.model.clone());
        put("n", self.model.dim.map(|v| v.to_string()));
        put("k", self.model.sparsity.map(|v| v.to_string()));
        put("q", self.model.q.map(|v| v.to_string()));
        put("set", self.model.set.clone());
        put("beta", self.beta.clone());
        put("trials", self.trials.map(|v| v.to_string()));
        put("seed", self.seed.map(|v| v.to_string()));
        put("budget", self.budget.map(|v| v.to_string()));
        put("mc-draws", self.mc_draws.map(|v| v.to_string()));
        put("out", self.out.as_ref().map(|p| p.display().to_string()));
        put("format", self.format.clone());
        if self.timing {
            put("timing", Some("true".into()));
        }
        m
    }
}

#[derive(Debug, Args)]
struct NstarArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Also print entropies in bits.
    #[arg(long)]
    bits: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SourceArg {
    ClosedForm,
    HermiteSeries,
    MonteCarlo,
}

#[derive(Debug, Args)]
struct CurvesArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// How to compute the curves; defaults to the exact method for the model.
    #[arg(long, value_enum)]
    source: Option<SourceArg>,
    /// Grid points on [0, 1].
    #[arg(long, default_value_t = DEFAULT_GRID_POINTS)]
    points: usize,
    /// Hermite truncation order.
    #[arg(long, default_value_t = DEFAULT_HERMITE_ORDER)]
    order: usize,
    /// Pairs per overlap level for the Monte Carlo source.
    #[arg(long, default_value_t = 100_000)]
    draws: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CheckArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = DEFAULT_GRID_POINTS)]
    points: usize,
    #[arg(long, default_value_t = DEFAULT_HERMITE_ORDER)]
    order: usize,
    #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
    tol: f64,
    /// Write the full report as TOML here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DnArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value = "0.1:2:0.1")]
    beta: String,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    mc_draws: usize,
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    budget: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io(_) => 1,
        Error::BudgetExceeded { .. } => 3,
        _ => 2,
    }
}

/// Runs the CLI on `argv` (including the program name) with the process's
/// stdout and stderr.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(argv, &mut stdout.lock(), &mut stderr.lock())
}

/// Like [`cli_main`] with explicit output streams.
pub fn run_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{}", e.render());
                    return 0;
                }
                _ => 2,
            };
            let _ = write!(err, "{}", e.render());
            return code;
        }
    };
    match dispatch(cli.command, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(cmd: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    match cmd {
        Command::Sweep(a) => sweep(a, out, err),
        Command::Nstar(a) => nstar(a, out),
        Command::Curves(a) => curves(a, out),
        Command::Check(a) => check(a, out),
        Command::Dn(a) => dn(a, out),
    }
}

fn open_output<'a>(path: Option<&Path>, out: &'a mut dyn Write) -> Result<Box<dyn Write + 'a>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(out),
    })
}

fn sweep(args: SweepArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let mut pairs = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
            parse_config_text(&text)?
        }
        None => BTreeMap::new(),
    };
    let flags = args.pairs();
    if flags.contains_key("model") && !flags.contains_key("set") {
        pairs.remove("set");
    }
    pairs.extend(flags);
    let cfg = SweepConfig::from_pairs(&pairs)?;
    if cfg.channel()?.prior().is_degenerate() {
        writeln!(
            err,
            "warning: k = N leaves a single atom; ratios are undefined"
        )?;
    }
    let rows = with_thread_pool(|| run_sweep(&cfg))??;
    let mut w = open_output(cfg.output.as_deref(), out)?;
    write_rows(&rows, cfg.format, &mut w)?;
    w.flush()?;
    Ok(())
}

fn nstar(args: NstarArgs, out: &mut dyn Write) -> Result<()> {
    let channel = args.model.channel()?;
    let prior = channel.prior();
    let h_theta = prior_entropy(&prior);
    let h_y = output_entropy(&channel);
    let n = n_star(&prior, &channel)?;
    writeln!(out, "model   {}", channel.label())?;
    writeln!(out, "atoms   {}", prior.cardinality())?;
    writeln!(out, "H(theta) {h_theta:.12} nats")?;
    writeln!(out, "H(Y)     {h_y:.12} nats")?;
    if args.bits {
        let ln2 = std::f64::consts::LN_2;
        writeln!(out, "H(theta) {:.12} bits", h_theta / ln2)?;
        writeln!(out, "H(Y)     {:.12} bits", h_y / ln2)?;
    }
    writeln!(out, "n*      {n}")?;
    Ok(())
}

fn curves(args: CurvesArgs, out: &mut dyn Write) -> Result<()> {
    let grid = uniform_grid(args.points);
    let selector = args.model.selector()?;
    let source = args.source.unwrap_or(match selector {
        ModelSelector::Bgt => SourceArg::ClosedForm,
        _ => SourceArg::HermiteSeries,
    });
    let curves = match (source, selector.balanced_set()?) {
        (SourceArg::MonteCarlo, _) => {
            OverlapCurves::monte_carlo(&args.model.channel()?, args.draws, args.seed)
        }
        (SourceArg::ClosedForm, None) => OverlapCurves::bgt(args.model.q.unwrap_or(0.5), &grid)?,
        (SourceArg::ClosedForm, Some(set)) if set == crate::channels::BalancedSet::half_space() => {
            OverlapCurves::sheppard(&grid)?
        }
        (SourceArg::HermiteSeries, Some(set)) => OverlapCurves::sbg(&set, args.order, &grid)?,
        (s, _) => {
            return Err(Error::Config(format!(
                "source {s:?} is not available for model {}",
                selector.name()
            )))
        }
    };
    let mut w = open_output(args.out.as_deref(), out)?;
    curves.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct CheckDocument {
    model: String,
    order: Option<usize>,
    reduced_form_max_defect: Option<f64>,
    condition: ConditionReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    witnesses: Option<BgtWitnessReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    arcsine: Option<ArcsineReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    borell: Option<BorellReport>,
}

fn check(args: CheckArgs, out: &mut dyn Write) -> Result<()> {
    let grid = uniform_grid(args.points);
    let selector = args.model.selector()?;
    let doc = match selector.balanced_set()? {
        None => {
            let q = args.model.q.unwrap_or(0.5);
            let condition = check_bgt(q, &grid, args.tol)?;
            let mut defect: f64 = 0.0;
            for (i, &r) in grid.iter().enumerate() {
                defect = defect.max((bgt_reduced_margin(r, q)? - condition.margin[i]).abs());
            }
            CheckDocument {
                model: format!("bgt q={q}"),
                order: None,
                reduced_form_max_defect: Some(defect),
                witnesses: Some(bgt_witnesses(q, &grid)?),
                condition,
                arcsine: None,
                borell: None,
            }
        }
        Some(set) => CheckDocument {
            model: format!("{} A={set}", selector.name()),
            order: Some(args.order),
            reduced_form_max_defect: None,
            condition: check_sbg(&set, args.order, &grid, args.tol)?,
            witnesses: None,
            arcsine: Some(arcsine_inequality_check(&grid)?),
            borell: Some(borell_bound_check(&set, args.order, &grid, args.tol)?),
        },
    };

    let c = &doc.condition;
    writeln!(out, "model          {}", doc.model)?;
    writeln!(out, "p              {}", c.p)?;
    writeln!(out, "grid points    {}", c.grid.len())?;
    writeln!(
        out,
        "min margin     {:.6e} at rho = {}",
        c.min_margin, c.argmin_rho
    )?;
    writeln!(out, "interior min   {:.6e}", c.min_interior_margin)?;
    writeln!(
        out,
        "equality 0 / 1 {} / {}",
        c.equality_at_zero, c.equality_at_one
    )?;
    let verdict = serde_json::to_value(c.verdict).map_err(|e| Error::Io(e.to_string()))?;
    writeln!(out, "verdict        {}", verdict.as_str().unwrap_or("?"))?;
    if c.regime == Regime::OutsideProvenRegime {
        writeln!(
            out,
            "note           outside proven regime (descriptive only)"
        )?;
    }
    if let Some(a) = &doc.arcsine {
        writeln!(
            out,
            "arcsine slack  {:.6e} (holds: {})",
            a.min_slack, a.holds
        )?;
    }
    if let Some(b) = &doc.borell {
        writeln!(
            out,
            "borell excess  {:.6e} (holds: {})",
            b.max_excess, b.holds
        )?;
    }
    if let Some(w) = &doc.witnesses {
        writeln!(out, "concavity      {:.6e}", w.f_concavity_slack)?;
    }
    if let Some(path) = &args.out {
        let text = toml::to_string(&doc).map_err(|e| Error::Io(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

fn dn(args: DnArgs, out: &mut dyn Write) -> Result<()> {
    let channel = args.model.channel()?;
    let betas = parse_beta_grid(&args.beta)?;
    let curve = with_thread_pool(|| {
        dn_curve(
            &channel,
            &betas,
            args.trials,
            args.seed,
            args.mc_draws,
            args.budget,
        )
    })??;
    let mut w = open_output(args.out.as_deref(), out)?;
    curve.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}
