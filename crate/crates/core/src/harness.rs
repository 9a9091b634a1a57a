//! Sweeps over β = n / n*.
//!
//! Each trial draws θ and a stream of observations once; every row of the
//! sweep reads the same trial at its own `n = ⌊β n*⌋`, so rows are computed
//! on common random numbers and posteriors are nested across rows.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;

use crate::channels::{BalancedSet, Channel};
use crate::error::{Error, Result};
use crate::info::{n_star, output_entropy, prior_entropy};
use crate::model::DEFAULT_BUDGET;
use crate::overlap::csv_err;
use crate::posterior::run_trials;
use crate::stats::Estimate;

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "AON_THREADS";

/// Exact CSV header of sweep output.
pub const SWEEP_HEADER: &str =
    "beta,n,mmse,mmse_se,kl_ratio,kl_ratio_se,pred_ent_ratio,pred_ent_ratio_se,frac_point,wall_ms";

#[derive(Debug, Clone, PartialEq)]
pub enum ModelSelector {
    Bgt,
    SbgHalfspace,
    SbgSymmetric,
    /// Interval union in the `a:b,c:d` syntax.
    SbgCustom(String),
}

impl ModelSelector {
    /// Parses a model name; `set` is required for `sbg-custom` only.
    pub fn parse(name: &str, set: Option<&str>) -> Result<Self> {
        match name {
            "bgt" => Ok(Self::Bgt),
            "sbg-halfspace" => Ok(Self::SbgHalfspace),
            "sbg-symmetric" => Ok(Self::SbgSymmetric),
            "sbg-custom" => set
                .map(|s| Self::SbgCustom(s.to_string()))
                .ok_or_else(|| Error::Config("sbg-custom needs a set (e.g. set = 0:inf)".into())),
            other => Err(Error::Config(format!(
                "unknown model {other:?} (expected bgt, sbg-halfspace, sbg-symmetric, sbg-custom)"
            ))),
        }
    }

    /// The balanced set for Gaussian models.
    pub fn balanced_set(&self) -> Result<Option<BalancedSet>> {
        Ok(match self {
            Self::Bgt => None,
            Self::SbgHalfspace => Some(BalancedSet::half_space()),
            Self::SbgSymmetric => Some(BalancedSet::symmetric()),
            Self::SbgCustom(s) => Some(s.parse()?),
        })
    }

    pub fn channel(&self, dim: usize, sparsity: usize, q: f64) -> Result<Channel> {
        match self.balanced_set()? {
            None => Channel::bgt(dim, sparsity, q),
            Some(set) => Channel::sbg(dim, sparsity, set),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Bgt => "bgt",
            Self::SbgHalfspace => "sbg-halfspace",
            Self::SbgSymmetric => "sbg-symmetric",
            Self::SbgCustom(_) => "sbg-custom",
        }
    }
}

/// Parses `start:stop:step` (inclusive of `stop` up to rounding) or a comma
/// separated list. Values must be positive.
pub fn parse_beta_grid(s: &str) -> Result<Vec<f64>> {
    let num = |t: &str| -> Result<f64> {
        t.trim()
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| Error::Config(format!("bad beta value {t:?}")))
    };
    let out = if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        let [start, stop, step] = parts.as_slice() else {
            return Err(Error::Config(format!(
                "beta range must be start:stop:step, got {s:?}"
            )));
        };
        let (start, stop, step) = (num(start)?, num(stop)?, num(step)?);
        if !(step > 0.0) {
            return Err(Error::Config(format!(
                "beta step must be positive, got {step}"
            )));
        }
        if stop < start {
            return Err(Error::Config(format!(
                "beta stop {stop} is below start {start}"
            )));
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
        (0..count).map(|i| start + i as f64 * step).collect()
    } else {
        s.split(',').map(num).collect::<Result<Vec<_>>>()?
    };
    if out.is_empty() || out.iter().any(|b| !(*b > 0.0)) {
        return Err(Error::Config("beta values must be positive".into()));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    JsonLines,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "jsonl" | "json-lines" => Ok(Self::JsonLines),
            other => Err(Error::Config(format!(
                "unknown format {other:?} (expected csv or jsonl)"
            ))),
        }
    }
}

/// Everything a sweep needs.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub model: ModelSelector,
    pub dim: usize,
    pub sparsity: usize,
    pub q: f64,
    pub betas: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub budget: u64,
    pub mc_draws: usize,
    pub output: Option<PathBuf>,
    pub format: OutputFormat,
    /// Record wall-clock time per row. Off by default because it makes the
    /// output differ between otherwise identical runs.
    pub timing: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            model: ModelSelector::Bgt,
            dim: 20,
            sparsity: 3,
            q: 0.5,
            betas: parse_beta_grid("0.25:2:0.25").expect("default grid"),
            trials: 200,
            seed: 0,
            budget: DEFAULT_BUDGET,
            mc_draws: 200,
            output: None,
            format: OutputFormat::Csv,
            timing: false,
        }
    }
}

/// Keys accepted in config files (and produced from command-line flags).
pub const CONFIG_KEYS: &[&str] = &[
    "model", "n", "k", "q", "set", "beta", "trials", "seed", "budget", "mc-draws", "out", "format",
    "timing",
];

/// Reads a flat `key = value` file. `#` starts a comment; blank lines are
/// ignored; `_` and `-` are interchangeable in keys.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!(
                "line {}: expected key = value, got {raw:?}",
                lineno + 1
            ))
        })?;
        let key = k.trim().replace('_', "-");
        if !CONFIG_KEYS.contains(&key.as_str()) {
            return Err(Error::Config(format!(
                "line {}: unknown key {key:?}",
                lineno + 1
            )));
        }
        let value = v.trim().trim_matches('"').to_string();
        map.insert(key, value);
    }
    Ok(map)
}

impl SweepConfig {
    /// Builds a config from key/value pairs on top of the defaults.
    pub fn from_pairs(pairs: &BTreeMap<String, String>) -> Result<Self> {
        fn parse<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::Config(format!("invalid value {v:?} for {key}")))
        }
        let mut cfg = Self::default();
        if let Some(name) = pairs.get("model") {
            cfg.model = ModelSelector::parse(name, pairs.get("set").map(String::as_str))?;
        } else if pairs.contains_key("set") {
            cfg.model = ModelSelector::parse("sbg-custom", pairs.get("set").map(String::as_str))?;
        }
        for (key, v) in pairs {
            match key.as_str() {
                "model" | "set" => {}
                "n" => cfg.dim = parse(key, v)?,
                "k" => cfg.sparsity = parse(key, v)?,
                "q" => cfg.q = parse(key, v)?,
                "beta" => cfg.betas = parse_beta_grid(v)?,
                "trials" => cfg.trials = parse(key, v)?,
                "seed" => cfg.seed = parse(key, v)?,
                "budget" => cfg.budget = parse(key, v)?,
                "mc-draws" => cfg.mc_draws = parse(key, v)?,
                "out" => cfg.output = Some(PathBuf::from(v)),
                "format" => cfg.format = v.parse()?,
                "timing" => cfg.timing = parse(key, v)?,
                other => return Err(Error::Config(format!("unknown key {other:?}"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials < 1 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.mc_draws < 1 {
            return Err(Error::Config("mc-draws must be at least 1".into()));
        }
        if self.betas.is_empty() || self.betas.iter().any(|b| !(*b > 0.0) || !b.is_finite()) {
            return Err(Error::Config("beta values must be positive".into()));
        }
        self.channel().map(|_| ())
    }

    pub fn channel(&self) -> Result<Channel> {
        self.model.channel(self.dim, self.sparsity, self.q)
    }
}

/// One row of sweep output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub beta: f64,
    pub n: usize,
    pub mmse: f64,
    pub mmse_se: f64,
    /// `D̂(n) / ln M`.
    pub kl_ratio: f64,
    pub kl_ratio_se: f64,
    /// `H(Y_{n+1} | Y^n, X^{n+1}) / H(Y)`.
    pub pred_ent_ratio: f64,
    pub pred_ent_ratio_se: f64,
    /// Fraction of trials whose posterior is a single atom.
    pub frac_point: f64,
    /// Wall-clock milliseconds of the shared trial batch; 0 unless timing
    /// is enabled.
    pub wall_ms: f64,
}

/// Runs `f` on a rayon pool sized by `AON_THREADS` when it is set.
pub fn with_thread_pool<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => {
            let threads: usize = v.trim().parse().ok().filter(|&t| t > 0).ok_or_else(|| {
                Error::Config(format!(
                    "{THREADS_ENV} must be a positive integer, got {v:?}"
                ))
            })?;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| Error::Config(e.to_string()))?;
            Ok(pool.install(f))
        }
        Err(_) => Ok(f()),
    }
}

/// Runs the sweep described by `config`. Rows follow the β order; a β whose
/// `⌊β n*⌋` equals that of an earlier β is dropped.
pub fn run_sweep(config: &SweepConfig) -> Result<Vec<SweepRow>> {
    config.validate()?;
    let channel = config.channel()?;
    let prior = channel.prior();
    prior.check_budget(config.budget)?;
    let n_star = n_star(&prior, &channel)?;
    let ln_m = prior_entropy(&prior);
    let h_y = output_entropy(&channel);

    let mut targets: Vec<(f64, usize)> = Vec::new();
    for &beta in &config.betas {
        let n = (beta * n_star as f64).floor() as usize;
        if !targets.iter().any(|&(_, m)| m == n) {
            targets.push((beta, n));
        }
    }
    let n_max = targets.iter().map(|&(_, n)| n).max().unwrap_or(0);

    let start = Instant::now();
    let runs = run_trials(
        &channel,
        n_max,
        config.trials,
        config.seed,
        config.mc_draws,
        config.budget,
    )?;
    let wall_ms = if config.timing {
        start.elapsed().as_secs_f64() * 1e3
    } else {
        0.0
    };

    Ok(targets
        .into_iter()
        .map(|(beta, n)| {
            let column = |f: &dyn Fn(&crate::posterior::TrialPoint) -> f64| -> Estimate {
                let xs: Vec<f64> = runs.iter().map(|r| f(&r[n])).collect();
                Estimate::from_samples(&xs)
            };
            let mmse = column(&|p| p.direct);
            let kl = column(&|p| n as f64 * h_y - ln_m + p.ln_z0).scale(1.0 / ln_m);
            let pe = column(&|p| p.pred_entropy).scale(1.0 / h_y);
            let frac_point =
                runs.iter().filter(|r| r[n].z0 == 1).count() as f64 / runs.len() as f64;
            SweepRow {
                beta,
                n,
                mmse: mmse.mean,
                mmse_se: mmse.stderr,
                kl_ratio: kl.mean,
                kl_ratio_se: kl.stderr,
                pred_ent_ratio: pe.mean,
                pred_ent_ratio_se: pe.stderr,
                frac_point,
                wall_ms,
            }
        })
        .collect())
}

/// Writes rows as CSV (header [`SWEEP_HEADER`]) or JSON lines with the same
/// field names.
pub fn write_rows<W: Write>(rows: &[SweepRow], format: OutputFormat, mut out: W) -> Result<()> {
    match format {
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(out);
            if rows.is_empty() {
                w.write_record(SWEEP_HEADER.split(',')).map_err(csv_err)?;
            }
            for row in rows {
                w.serialize(row).map_err(csv_err)?;
            }
            w.flush()?;
        }
        OutputFormat::JsonLines => {
            for row in rows {
                serde_json::to_writer(&mut out, row).map_err(|e| Error::Io(e.to_string()))?;
                out.write_all(b"\n")?;
            }
            out.flush()?;
        }
    }
    Ok(())
}
