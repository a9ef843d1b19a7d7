//! Configuration and report commands behind the `ffbias` binary.
//!
//! Every command is a pure function of an [`ExperimentConfig`] returning
//! the rendered output, so the binary only handles I/O and exit codes.
//! Configuration comes from flat `key = value` files (`#` starts a comment)
//! layered under command-line flags.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::ser::SerializeMap;
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::census::{self, ratio_text, BiasReport, CensusError, VarietyTag, DEFAULT_BUDGET};
use crate::field::{FieldCtx, FieldElement, FieldError, FieldSpec, DEFAULT_MAX_FIELD_SIZE};
use crate::linalg::Matrix;
use crate::poly::{MultiPoly, PolyError};
use crate::rank::{self, RankError, RankOptions};
use crate::singular::{self, Goodness, GoodnessProfile, GoodnessVerdict, SingularError};
use crate::SCHEMA_VERSION;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config: {0}")]
    Config(String),
    #[error("polynomial: {0}")]
    Poly(#[from] PolyError),
    #[error("field: {0}")]
    Field(#[from] FieldError),
    #[error(transparent)]
    Census(#[from] CensusError),
    #[error(transparent)]
    Singular(#[from] SingularError),
    #[error(transparent)]
    Rank(#[from] RankError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl ExperimentError {
    /// 2 for usage and configuration problems, 1 for resource limits and
    /// failed verifications.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config(_) | ExperimentError::Poly(_) => 2,
            ExperimentError::Field(FieldError::SizeOverflow { .. }) => 1,
            ExperimentError::Field(_) => 2,
            ExperimentError::Census(CensusError::Poly(_) | CensusError::NotHomogeneous | CensusError::InvalidLevels) => 2,
            ExperimentError::Singular(
                SingularError::Poly(_)
                | SingularError::NotHomogeneous
                | SingularError::ZeroPolynomial
                | SingularError::DegreeTooLow(_)
                | SingularError::InvalidLevels,
            ) => 2,
            ExperimentError::Rank(RankError::DegreeTooLow(_) | RankError::NotQuadratic | RankError::Poly(_)) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, ExperimentError>;

fn config_err(msg: impl Into<String>) -> ExperimentError {
    ExperimentError::Config(msg.into())
}

/// Parses counts written as `100000`, `1_000_000`, `1e8` or `10^8`.
pub fn parse_count(text: &str) -> std::result::Result<u64, String> {
    let t = text.trim().replace('_', "");
    let bad = || format!("invalid count '{text}'");
    if let Ok(v) = t.parse::<u64>() {
        return Ok(v);
    }
    let (base, exp) = if let Some((m, e)) = t.split_once(['e', 'E']) {
        (m.parse::<u64>().map_err(|_| bad())?, e.parse::<u32>().map_err(|_| bad())?)
    } else if let Some((b, e)) = t.split_once('^') {
        let b = b.parse::<u64>().map_err(|_| bad())?;
        let e = e.parse::<u32>().map_err(|_| bad())?;
        return b.checked_pow(e).ok_or_else(bad);
    } else {
        return Err(bad());
    };
    10u64.checked_pow(exp).and_then(|p| p.checked_mul(base)).ok_or_else(bad)
}

/// Which projective variety the `singular` command measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variety {
    /// `X^F`: the top homogeneous part in `P^{N-1}`
    X,
    /// `Y_t^F`: the closure of `F = t` in `P^N`
    Y,
}

impl FromStr for Variety {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "x" | "X" => Ok(Variety::X),
            "y" | "Y" => Ok(Variety::Y),
            other => Err(format!("unknown variety '{other}' (expected x or y)")),
        }
    }
}

/// How ensemble rows are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Plant {
    /// uniform coefficients on all monomials up to the degree
    Random,
    /// `x0*x1 + .. + x_{2r-2}*x_{2r-1}` after a seeded invertible change of
    /// variables
    Hyperbolic(u32),
    /// a random linear form times a random polynomial of degree `d - 1`
    Product,
}

impl FromStr for Plant {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let s = s.trim();
        match s {
            "random" => return Ok(Plant::Random),
            "product" => return Ok(Plant::Product),
            _ => {}
        }
        if let Some(r) = s.strip_prefix("hyperbolic:") {
            let r: u32 = r.trim().parse().map_err(|_| format!("invalid plant '{s}'"))?;
            if r == 0 {
                return Err("hyperbolic plant needs r >= 1".into());
            }
            return Ok(Plant::Hyperbolic(r));
        }
        Err(format!("unknown plant '{s}' (random, product, hyperbolic:r)"))
    }
}

impl std::fmt::Display for Plant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Plant::Random => f.write_str("random"),
            Plant::Product => f.write_str("product"),
            Plant::Hyperbolic(r) => write!(f, "hyperbolic:{r}"),
        }
    }
}

/// One layer of settings; unset entries fall through to the layer below.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigLayer {
    pub field: Option<String>,
    pub nvars: Option<usize>,
    pub poly: Option<String>,
    pub seed: Option<u64>,
    pub budget: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    pub aggregate: Option<PathBuf>,
    pub n: Option<u32>,
    pub n_max: Option<u32>,
    pub c: Option<Vec<i64>>,
    pub t_ext: Option<u32>,
    pub t: Option<String>,
    pub variety: Option<Variety>,
    pub size: Option<usize>,
    pub degree: Option<u32>,
    pub homogeneous: Option<bool>,
    pub plant: Option<Plant>,
    pub r_threshold: Option<u32>,
    pub sing_nmax: Option<u32>,
    pub search_budget: Option<u64>,
    pub ext_degree: Option<u32>,
}

fn parse_value<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| config_err(format!("invalid value '{v}' for '{key}'")))
}

pub fn parse_c_list(text: &str) -> std::result::Result<Vec<i64>, String> {
    text.split(',')
        .map(|s| s.trim().parse::<i64>().map_err(|_| format!("invalid c value '{s}'")))
        .collect()
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.trim() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(config_err(format!("invalid boolean '{v}' for '{key}'"))),
    }
}

impl ConfigLayer {
    /// Parses `key = value` lines. Keys use the flag names, with `-` or `_`.
    pub fn parse(text: &str) -> Result<ConfigLayer> {
        let mut c = ConfigLayer::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| config_err(format!("line {}: expected 'key = value'", lineno + 1)))?;
            let key = key.trim().replace('-', "_");
            let value = value.trim().trim_matches('"');
            let count = |v: &str| parse_count(v).map_err(config_err);
            match key.as_str() {
                "field" => c.field = Some(value.to_string()),
                "nvars" => c.nvars = Some(parse_value(&key, value)?),
                "poly" => c.poly = Some(value.to_string()),
                "seed" => c.seed = Some(count(value)?),
                "budget" => c.budget = Some(count(value)?),
                "workers" => c.workers = Some(parse_value(&key, value)?),
                "out" => c.out = Some(PathBuf::from(value)),
                "aggregate" => c.aggregate = Some(PathBuf::from(value)),
                "n" => c.n = Some(parse_value(&key, value)?),
                "nmax" | "n_max" => c.n_max = Some(parse_value(&key, value)?),
                "c" => c.c = Some(parse_c_list(value).map_err(config_err)?),
                "t_ext" | "t_ext_degree" => c.t_ext = Some(parse_value(&key, value)?),
                "t" => c.t = Some(value.to_string()),
                "variety" => c.variety = Some(value.parse().map_err(config_err)?),
                "size" => c.size = Some(parse_value(&key, value)?),
                "degree" => c.degree = Some(parse_value(&key, value)?),
                "homogeneous" => c.homogeneous = Some(parse_bool(&key, value)?),
                "plant" => c.plant = Some(value.parse().map_err(config_err)?),
                "r_threshold" => c.r_threshold = Some(parse_value(&key, value)?),
                "sing_nmax" => c.sing_nmax = Some(parse_value(&key, value)?),
                "search_budget" => c.search_budget = Some(count(value)?),
                "ext_degree" => c.ext_degree = Some(parse_value(&key, value)?),
                other => return Err(config_err(format!("line {}: unknown key '{other}'", lineno + 1))),
            }
        }
        Ok(c)
    }

    /// Entries of `top` win over entries of `self`.
    pub fn overlay(self, top: ConfigLayer) -> ConfigLayer {
        ConfigLayer {
            field: top.field.or(self.field),
            nvars: top.nvars.or(self.nvars),
            poly: top.poly.or(self.poly),
            seed: top.seed.or(self.seed),
            budget: top.budget.or(self.budget),
            workers: top.workers.or(self.workers),
            out: top.out.or(self.out),
            aggregate: top.aggregate.or(self.aggregate),
            n: top.n.or(self.n),
            n_max: top.n_max.or(self.n_max),
            c: top.c.or(self.c),
            t_ext: top.t_ext.or(self.t_ext),
            t: top.t.or(self.t),
            variety: top.variety.or(self.variety),
            size: top.size.or(self.size),
            degree: top.degree.or(self.degree),
            homogeneous: top.homogeneous.or(self.homogeneous),
            plant: top.plant.or(self.plant),
            r_threshold: top.r_threshold.or(self.r_threshold),
            sing_nmax: top.sing_nmax.or(self.sing_nmax),
            search_budget: top.search_budget.or(self.search_budget),
            ext_degree: top.ext_degree.or(self.ext_degree),
        }
    }

    /// Fills defaults. `env_workers` is the value of `FFBIAS_WORKERS`.
    pub fn resolve(self, env_workers: Option<&str>) -> Result<ExperimentConfig> {
        let field = FieldSpec::parse(self.field.as_deref().ok_or_else(|| config_err("missing --field"))?)?;
        let workers = match (self.workers, env_workers) {
            (Some(w), _) => w,
            (None, Some(e)) => e
                .trim()
                .parse()
                .map_err(|_| config_err(format!("invalid FFBIAS_WORKERS '{e}'")))?,
            (None, None) => std::thread::available_parallelism().map_or(1, |n| n.get()),
        };
        let cfg = ExperimentConfig {
            field,
            nvars: self.nvars,
            poly: self.poly,
            seed: self.seed.unwrap_or(0),
            budget: self.budget.unwrap_or(DEFAULT_BUDGET),
            workers: workers.max(1),
            out: self.out,
            aggregate: self.aggregate,
            n: self.n.unwrap_or(1),
            n_max: self.n_max.unwrap_or(2),
            c_values: self.c.unwrap_or_else(|| vec![3]),
            t_ext_degree: self.t_ext.unwrap_or(1),
            t: self.t,
            variety: self.variety.unwrap_or(Variety::Y),
            size: self.size.unwrap_or(10),
            degree: self.degree.unwrap_or(3),
            homogeneous: self.homogeneous.unwrap_or(false),
            plant: self.plant.unwrap_or(Plant::Random),
            r_threshold: self.r_threshold.unwrap_or(2),
            sing_nmax: self.sing_nmax.unwrap_or(3),
            search_budget: self.search_budget.unwrap_or(100_000),
            ext_degree: self.ext_degree.unwrap_or(2),
        };
        if cfg.budget == 0 || cfg.search_budget == 0 {
            return Err(config_err("budgets must be positive"));
        }
        if cfg.n == 0 || cfg.n_max == 0 || cfg.sing_nmax == 0 || cfg.t_ext_degree == 0 || cfg.ext_degree == 0 {
            return Err(config_err("levels and extension degrees must be at least 1"));
        }
        if cfg.size == 0 {
            return Err(config_err("ensemble size must be at least 1"));
        }
        if cfg.c_values.is_empty() {
            return Err(config_err("at least one c value is needed"));
        }
        Ok(cfg)
    }
}

/// Fully resolved settings of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub field: FieldSpec,
    pub nvars: Option<usize>,
    pub poly: Option<String>,
    pub seed: u64,
    pub budget: u64,
    pub workers: usize,
    pub out: Option<PathBuf>,
    pub aggregate: Option<PathBuf>,
    /// level of `census`
    pub n: u32,
    /// levels of the command's main sweep
    pub n_max: u32,
    pub c_values: Vec<i64>,
    pub t_ext_degree: u32,
    /// element for the `singular` command's `Y_t` (default 0)
    pub t: Option<String>,
    pub variety: Variety,
    pub size: usize,
    pub degree: u32,
    pub homogeneous: bool,
    pub plant: Plant,
    pub r_threshold: u32,
    /// singular-locus levels inside composite commands
    pub sing_nmax: u32,
    pub search_budget: u64,
    pub ext_degree: u32,
}

impl ExperimentConfig {
    /// Config with defaults for the given field text.
    pub fn for_field(field: &str) -> Result<ExperimentConfig> {
        ConfigLayer {
            field: Some(field.to_string()),
            workers: Some(1),
            ..ConfigLayer::default()
        }
        .resolve(None)
    }

    /// Coefficient field: `F_q`, extended when the spec reads `p^m:n`.
    pub fn coefficient_field(&self) -> Result<FieldCtx> {
        let base = self.field.base_field(DEFAULT_MAX_FIELD_SIZE)?;
        Ok(base.extend(self.field.n)?)
    }

    pub fn polynomial(&self) -> Result<MultiPoly> {
        let text = self.poly.as_deref().ok_or_else(|| config_err("missing --poly"))?;
        let nvars = self.nvars.unwrap_or_else(|| MultiPoly::infer_nvars(text));
        Ok(MultiPoly::parse(text, &self.coefficient_field()?, nvars)?)
    }

    fn rank_options(&self) -> RankOptions {
        RankOptions {
            search_budget: self.search_budget,
            seed: self.seed,
            ext_degree: self.ext_degree,
            sing_nmax: self.sing_nmax,
            budget: self.budget,
        }
    }
}

/// Parses an element of `ctx` written in the polynomial grammar.
pub fn parse_element(text: &str, ctx: &FieldCtx) -> Result<FieldElement> {
    let p = MultiPoly::parse(text, ctx, 0)?;
    Ok(p.coefficient(&[]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Census,
    Bias,
    Rank,
    Singular,
    Good,
    VerifyLemma3,
    DerivedBound,
    Ensemble,
}

/// Rendered result of a command.
#[derive(Debug, Clone, PartialEq)]
pub struct CommandOutput {
    /// JSON (or CSV for the ensemble)
    pub body: String,
    /// ensemble aggregate JSON
    pub aggregate: Option<String>,
    pub warnings: Vec<String>,
    pub exit_code: i32,
}

impl CommandOutput {
    fn json<T: Serialize>(v: &T) -> CommandOutput {
        CommandOutput {
            body: to_json(v),
            aggregate: None,
            warnings: Vec::new(),
            exit_code: 0,
        }
    }
}

pub fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("reports serialize");
    s.push('\n');
    s
}

/// Runs `cmd` on a pool of `cfg.workers` threads.
pub fn run_command(cmd: Command, cfg: &ExperimentConfig) -> Result<CommandOutput> {
    census::run_with_workers(cfg.workers, || match cmd {
        Command::Census => {
            let f = cfg.polynomial()?;
            Ok(CommandOutput::json(&census::census(&f, cfg.n, cfg.budget)?.to_record()))
        }
        Command::Bias => {
            let f = cfg.polynomial()?;
            Ok(CommandOutput::json(&census::bias_estimate(&f, cfg.n_max, cfg.budget)?))
        }
        Command::Rank => {
            let f = cfg.polynomial()?;
            Ok(CommandOutput::json(&rank::rank_of_with(&f, &cfg.rank_options())?.to_record(&f)))
        }
        Command::Singular => cmd_singular(cfg).map(|r| CommandOutput::json(&r)),
        Command::Good => cmd_good(cfg).map(|r| CommandOutput::json(&r)),
        Command::VerifyLemma3 => cmd_verify_lemma3(cfg),
        Command::DerivedBound => cmd_derived_bound(cfg),
        Command::Ensemble => cmd_ensemble(cfg),
    })
}

pub fn cmd_singular(cfg: &ExperimentConfig) -> Result<singular::SingularReport> {
    let f = cfg.polynomial()?;
    match cfg.variety {
        Variety::X => Ok(singular::c_regularity_tagged(
            &f.top_homogeneous()?,
            VarietyTag::X,
            cfg.n_max,
            cfg.budget,
        )?),
        Variety::Y => {
            let tk = f.ctx().extend(cfg.t_ext_degree)?;
            let t = match &cfg.t {
                Some(text) => parse_element(text, &tk)?,
                None => tk.zero(),
            };
            let y = f.homogenize(&t)?.poly;
            Ok(singular::c_regularity_tagged(
                &y,
                VarietyTag::Y { t: t.to_string() },
                cfg.n_max,
                cfg.budget,
            )?)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GoodReport {
    pub schema_version: u32,
    pub poly: String,
    pub field: String,
    pub t_sample: String,
    /// smallest confident codimension over all checked varieties
    pub c_eff: Option<i64>,
    pub verdicts: Vec<GoodnessVerdict>,
}

/// c-goodness for every configured `c`; singular levels come from `n_max`.
pub fn cmd_good(cfg: &ExperimentConfig) -> Result<GoodReport> {
    let f = cfg.polynomial()?;
    let profile = singular::goodness_profile(&f, cfg.t_ext_degree, cfg.n_max, cfg.budget)?;
    Ok(GoodReport {
        schema_version: SCHEMA_VERSION,
        poly: profile.poly.clone(),
        field: profile.field.clone(),
        t_sample: profile.t_sample.clone(),
        c_eff: profile.c_eff(),
        verdicts: cfg.c_values.iter().map(|&c| profile.verdict(c)).collect(),
    })
}

/// Ordered `element -> value` map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ElementValues(pub Vec<(String, String)>);

impl Serialize for ElementValues {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(self.0.len()))?;
        for (k, v) in &self.0 {
            map.serialize_entry(k, v)?;
        }
        map.end()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviationLevel {
    pub n: u32,
    /// `|mu_n(t) - 1/Q|` for every `t`
    pub deviations: ElementValues,
    pub max_deviation: String,
    /// `max_deviation * q^{n(c/2 - 1)}`
    pub scaled: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Lemma3Report {
    pub schema_version: u32,
    pub poly: String,
    pub field: String,
    pub nvars: usize,
    pub c: i64,
    pub verdict: GoodnessVerdict,
    pub levels: Vec<DeviationLevel>,
    pub skipped: Vec<census::SkippedLevel>,
    /// largest scaled deviation
    pub m_hat: f64,
    pub m_hat_level: u32,
    pub non_increasing: bool,
    /// `m_hat` attained at the smallest computed level
    pub stable: bool,
    pub warning: Option<String>,
}

/// Deviations `|mu_n(t) - 1/Q|` and their scaled maxima for one level.
pub fn deviation_level(c: &census::FiberCensus, q: u64, cexp: i64) -> DeviationLevel {
    let big_q = c.field().size() as u128;
    let total = c.total() as u128;
    let denom = total * big_q;
    let devs: Vec<Ratio<u128>> = c
        .counts()
        .iter()
        .map(|&k| Ratio::new((k as u128 * big_q).abs_diff(total), denom))
        .collect();
    let max = devs.iter().max().copied().unwrap_or_default();
    let n = c.level();
    let exponent = n as f64 * (cexp as f64 / 2.0 - 1.0);
    let scaled = (*max.numer() as f64 / *max.denom() as f64) * (q as f64).powf(exponent);
    DeviationLevel {
        n,
        deviations: ElementValues(
            devs.iter()
                .enumerate()
                .map(|(i, d)| (c.field().format_raw(i as u32), ratio_text(d)))
                .collect(),
        ),
        max_deviation: ratio_text(&max),
        scaled,
    }
}

pub fn lemma3_report(f: &MultiPoly, c: i64, verdict: GoodnessVerdict, n_max: u32, budget: u64) -> Result<Lemma3Report> {
    let q = f.ctx().size();
    let mut levels = Vec::new();
    let mut skipped = Vec::new();
    for n in 1..=n_max {
        match census::census(f, n, budget) {
            Ok(cen) => levels.push(deviation_level(&cen, q, c)),
            Err(CensusError::BudgetExceeded { required, .. }) => skipped.push(census::SkippedLevel { n, required }),
            Err(CensusError::Field(FieldError::SizeOverflow { required, .. })) => {
                skipped.push(census::SkippedLevel { n, required })
            }
            Err(e) => return Err(e.into()),
        }
    }
    if levels.is_empty() {
        return Err(CensusError::NoCompletedLevels {
            required: census::points_required(q, f.nvars()),
            budget,
        }
        .into());
    }
    let (m_hat, m_hat_level) = levels
        .iter()
        .map(|l| (l.scaled, l.n))
        .fold((f64::NEG_INFINITY, 0), |acc, x| if x.0 > acc.0 { x } else { acc });
    let non_increasing = levels.windows(2).all(|w| w[1].scaled <= w[0].scaled);
    let stable = m_hat_level == levels[0].n;
    let warning = match verdict.overall {
        Goodness::CGood => None,
        Goodness::NotCGood => Some(format!("polynomial is not {c}-good; the bound need not apply")),
        Goodness::Inconclusive => Some(format!("{c}-goodness is inconclusive at the computed levels")),
    };
    Ok(Lemma3Report {
        schema_version: SCHEMA_VERSION,
        poly: f.to_string(),
        field: f.ctx().spec(),
        nvars: f.nvars(),
        c,
        verdict,
        levels,
        skipped,
        m_hat,
        m_hat_level,
        non_increasing,
        stable,
        warning,
    })
}

/// Deviation-shape check for the first configured `c`; exits 1 when the
/// polynomial is confidently not c-good.
pub fn cmd_verify_lemma3(cfg: &ExperimentConfig) -> Result<CommandOutput> {
    let f = cfg.polynomial()?;
    let c = cfg.c_values[0];
    let profile = singular::goodness_profile(&f, cfg.t_ext_degree, cfg.sing_nmax, cfg.budget)?;
    let report = lemma3_report(&f, c, profile.verdict(c), cfg.n_max, cfg.budget)?;
    let exit_code = if report.verdict.overall == Goodness::NotCGood { 1 } else { 0 };
    Ok(CommandOutput {
        body: to_json(&report),
        aggregate: None,
        warnings: report.warning.iter().cloned().collect(),
        exit_code,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundStatus {
    Holds,
    Violated,
    /// `c <= 2`: the bound says nothing
    Vacuous,
    /// some singular-locus estimate is unconfident
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DerivedBoundReport {
    pub schema_version: u32,
    pub poly: String,
    pub field: String,
    pub c_eff: Option<i64>,
    pub bias: BiasReport,
    /// `2/(c_eff - 2)`
    pub bound: Option<f64>,
    pub bound_exact: Option<String>,
    pub slack: Option<f64>,
    pub status: BoundStatus,
}

/// Compares the bias estimate with `2/(c - 2)`, `c` the smallest confident
/// codimension found by the goodness sweep.
pub fn derived_bound(profile: &GoodnessProfile, bias: BiasReport) -> DerivedBoundReport {
    let c_eff = profile.c_eff();
    let (bound, bound_exact, slack, status) = match c_eff {
        None => (None, None, None, BoundStatus::Inconclusive),
        Some(c) if c <= 2 => (None, None, None, BoundStatus::Vacuous),
        Some(c) => {
            let exact = Ratio::new(2i64, c - 2);
            let b = 2.0 / (c - 2) as f64;
            let slack = b - bias.bias_estimate;
            let held = match &bias.bias_estimate_exact {
                Some(text) => {
                    let (num, den) = text.split_once('/').expect("a/b");
                    let est = Ratio::new(num.parse::<i64>().expect("int"), den.parse::<i64>().expect("int"));
                    est <= exact
                }
                None => bias.bias_estimate <= b + 1e-12,
            };
            let status = if held { BoundStatus::Holds } else { BoundStatus::Violated };
            (Some(b), Some(ratio_text(&exact)), Some(slack), status)
        }
    };
    DerivedBoundReport {
        schema_version: SCHEMA_VERSION,
        poly: profile.poly.clone(),
        field: profile.field.clone(),
        c_eff,
        bias,
        bound,
        bound_exact,
        slack,
        status,
    }
}

pub fn cmd_derived_bound(cfg: &ExperimentConfig) -> Result<CommandOutput> {
    let f = cfg.polynomial()?;
    let profile = singular::goodness_profile(&f, cfg.t_ext_degree, cfg.sing_nmax, cfg.budget)?;
    let bias = census::bias_estimate(&f, cfg.n_max, cfg.budget)?;
    let report = derived_bound(&profile, bias);
    let mut warnings = Vec::new();
    match report.status {
        BoundStatus::Violated => warnings.push(format!(
            "bound violated: bias estimate {} exceeds {}",
            report.bias.bias_estimate,
            report.bound_exact.as_deref().unwrap_or("?")
        )),
        BoundStatus::Vacuous => warnings.push("c <= 2: the derived bound is vacuous".into()),
        BoundStatus::Inconclusive => warnings.push("singular-locus estimates unconfident; no c available".into()),
        BoundStatus::Holds => {}
    }
    Ok(CommandOutput {
        body: to_json(&report),
        aggregate: None,
        warnings,
        exit_code: if report.status == BoundStatus::Violated { 1 } else { 0 },
    })
}

/// Seeded invertible `n x n` matrix as rows of raw coefficients.
fn random_invertible(ctx: &FieldCtx, n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<u32>> {
    loop {
        let rows: Vec<Vec<u32>> = (0..n)
            .map(|_| (0..n).map(|_| rng.gen_range(0..ctx.size()) as u32).collect())
            .collect();
        if Matrix::from_rows(&rows).rank(ctx) == n {
            return rows;
        }
    }
}

/// The polynomial of ensemble row `seed`.
pub fn plant_poly(cfg: &ExperimentConfig, seed: u64) -> Result<MultiPoly> {
    let ctx = cfg.coefficient_field()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match cfg.plant {
        Plant::Random => {
            let nvars = cfg.nvars.ok_or_else(|| config_err("ensemble needs --nvars"))?;
            Ok(MultiPoly::random(&ctx, nvars, cfg.degree, cfg.homogeneous, seed))
        }
        Plant::Hyperbolic(r) => {
            let r = r as usize;
            let nvars = cfg.nvars.unwrap_or(2 * r);
            if nvars < 2 * r {
                return Err(config_err(format!("hyperbolic:{r} needs at least {} variables", 2 * r)));
            }
            let mut q = MultiPoly::zero(&ctx, nvars);
            for i in 0..r {
                let term = MultiPoly::var(&ctx, nvars, 2 * i).mul(&MultiPoly::var(&ctx, nvars, 2 * i + 1))?;
                q = q.add(&term)?;
            }
            let m = random_invertible(&ctx, nvars, &mut rng);
            Ok(q.linear_substitute(&m))
        }
        Plant::Product => {
            let nvars = cfg.nvars.ok_or_else(|| config_err("ensemble needs --nvars"))?;
            if cfg.degree < 2 {
                return Err(config_err("product plant needs degree >= 2"));
            }
            let l = loop {
                let l = MultiPoly::random(&ctx, nvars, 1, true, rng.gen());
                if !l.is_zero() {
                    break l;
                }
            };
            let g = loop {
                let g = MultiPoly::random(&ctx, nvars, cfg.degree - 1, cfg.homogeneous, rng.gen());
                if g.degree() == Some(cfg.degree - 1) {
                    break g;
                }
            };
            Ok(l.mul(&g)?)
        }
    }
}

/// `b_n` cell of an ensemble row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BCell {
    Value(f64),
    Uniform,
    Skipped,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleRow {
    pub seed: u64,
    pub poly: String,
    pub degree: u32,
    pub rank_lo: Option<u32>,
    pub rank_hi: Option<u32>,
    pub codim_x: Option<i64>,
    pub codim_confident: bool,
    /// smallest codimension over all varieties, when every estimate is confident
    pub c_eff: Option<i64>,
    pub c_good: Vec<(i64, Goodness)>,
    pub b: Vec<BCell>,
    pub bias_est: Option<f64>,
    pub bound_slack: Option<f64>,
    pub bound_status: Option<BoundStatus>,
    pub error: Option<String>,
}

fn ensemble_row(cfg: &ExperimentConfig, seed: u64) -> EnsembleRow {
    let mut row = EnsembleRow {
        seed,
        poly: String::new(),
        degree: 0,
        rank_lo: None,
        rank_hi: None,
        codim_x: None,
        codim_confident: false,
        c_eff: None,
        c_good: Vec::new(),
        b: vec![BCell::Skipped; cfg.n_max as usize],
        bias_est: None,
        bound_slack: None,
        bound_status: None,
        error: None,
    };
    if let Err(e) = fill_row(cfg, seed, &mut row) {
        row.error = Some(e.to_string());
    }
    row
}

fn fill_row(cfg: &ExperimentConfig, seed: u64, row: &mut EnsembleRow) -> Result<()> {
    let f = plant_poly(cfg, seed)?;
    row.poly = f.to_string();
    row.degree = f.degree().unwrap_or(0);
    let profile = singular::goodness_profile(&f, cfg.t_ext_degree, cfg.sing_nmax, cfg.budget)?;
    row.codim_x = profile.x.codim;
    row.codim_confident = profile.x.confident;
    row.c_eff = profile.c_eff();
    row.c_good = cfg.c_values.iter().map(|&c| (c, profile.overall(c))).collect();
    let opts = RankOptions {
        seed,
        ..cfg.rank_options()
    };
    let interval = rank::rank_of_reusing(&f, &opts, Some(&profile.x))?;
    row.rank_lo = Some(interval.lo);
    row.rank_hi = Some(interval.hi);
    let bias = census::bias_estimate(&f, cfg.n_max, cfg.budget)?;
    for l in &bias.levels {
        row.b[l.n as usize - 1] = match l.b_n {
            Some(b) => BCell::Value(b),
            None => BCell::Uniform,
        };
    }
    row.bias_est = Some(bias.bias_estimate);
    let d = derived_bound(&profile, bias);
    row.bound_slack = d.slack;
    row.bound_status = Some(d.status);
    Ok(())
}

/// Rows for seeds `seed, seed + 1, ..`, in seed order.
pub fn run_ensemble(cfg: &ExperimentConfig) -> Vec<EnsembleRow> {
    (0..cfg.size as u64)
        .into_par_iter()
        .map(|i| ensemble_row(cfg, cfg.seed + i))
        .collect()
}

fn fmt_float(x: f64) -> String {
    if x.is_infinite() {
        "inf".into()
    } else {
        format!("{x:.6}")
    }
}

fn goodness_text(g: Goodness) -> &'static str {
    match g {
        Goodness::CGood => "good",
        Goodness::NotCGood => "not-good",
        Goodness::Inconclusive => "inconclusive",
    }
}

pub fn ensemble_csv(cfg: &ExperimentConfig, rows: &[EnsembleRow]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let mut header: Vec<String> = ["seed", "poly", "rank_lo", "rank_hi", "codim_X", "codim_confident"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend(cfg.c_values.iter().map(|c| format!("c_good_at_{c}")));
    header.extend((1..=cfg.n_max).map(|n| format!("b_{n}")));
    header.extend(["bias_est", "bound_slack", "error"].iter().map(|s| s.to_string()));
    w.write_record(&header)?;
    let opt = |v: Option<String>| v.unwrap_or_default();
    for r in rows {
        let mut rec = vec![
            r.seed.to_string(),
            r.poly.clone(),
            opt(r.rank_lo.map(|v| v.to_string())),
            opt(r.rank_hi.map(|v| v.to_string())),
            opt(r.codim_x.map(|v| v.to_string())),
            r.codim_confident.to_string(),
        ];
        for &c in &cfg.c_values {
            let g = r.c_good.iter().find(|(k, _)| *k == c).map(|(_, g)| goodness_text(*g));
            rec.push(g.unwrap_or("").to_string());
        }
        for b in &r.b {
            rec.push(match b {
                BCell::Value(x) => fmt_float(*x),
                BCell::Uniform => "uniform".into(),
                BCell::Skipped => String::new(),
            });
        }
        rec.push(opt(r.bias_est.map(fmt_float)));
        rec.push(opt(r.bound_slack.map(fmt_float)));
        rec.push(opt(r.error.clone()));
        w.write_record(&rec)?;
    }
    let bytes = w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("utf-8"))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CAggregate {
    pub c: i64,
    /// rows with `rank_hi < r_threshold`
    pub low_rank_rows: usize,
    pub low_rank_failing: usize,
    pub low_rank_fail_fraction: Option<f64>,
    /// rows with `rank_lo >= r_threshold`
    pub high_rank_rows: usize,
    /// seeds of high-rank rows confidently failing c-goodness
    pub high_rank_failing: Vec<u64>,
    /// quadratic rows where rank `>= r` forces c-goodness for `c <= 2r - 2`
    pub enforced: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleAggregate {
    pub schema_version: u32,
    pub field: String,
    pub plant: String,
    pub size: usize,
    pub r_threshold: u32,
    pub per_c: Vec<CAggregate>,
    /// rows where the derived bound applies (all estimates confident, c > 2)
    pub bound_rows: usize,
    pub bound_violations: Vec<u64>,
    /// enforced rank/goodness failures, as `seed:c`
    pub halting: Vec<String>,
    pub error_rows: Vec<u64>,
}

pub fn ensemble_aggregate(cfg: &ExperimentConfig, rows: &[EnsembleRow]) -> EnsembleAggregate {
    let r = cfg.r_threshold;
    let mut per_c = Vec::new();
    let mut halting = Vec::new();
    let quadratic = !rows.is_empty() && rows.iter().filter(|x| x.error.is_none()).all(|x| x.degree == 2);
    for &c in &cfg.c_values {
        let status = |row: &EnsembleRow| row.c_good.iter().find(|(k, _)| *k == c).map(|(_, g)| *g);
        let low: Vec<&EnsembleRow> = rows.iter().filter(|x| x.rank_hi.is_some_and(|h| h < r)).collect();
        let low_failing = low.iter().filter(|x| status(x) == Some(Goodness::NotCGood)).count();
        let high: Vec<&EnsembleRow> = rows.iter().filter(|x| x.rank_lo.is_some_and(|l| l >= r)).collect();
        let high_failing: Vec<u64> = high
            .iter()
            .filter(|x| status(x) == Some(Goodness::NotCGood))
            .map(|x| x.seed)
            .collect();
        let enforced = quadratic && c <= 2 * r as i64 - 2;
        if enforced {
            halting.extend(high_failing.iter().map(|s| format!("{s}:{c}")));
        }
        per_c.push(CAggregate {
            c,
            low_rank_rows: low.len(),
            low_rank_failing: low_failing,
            low_rank_fail_fraction: (!low.is_empty()).then(|| low_failing as f64 / low.len() as f64),
            high_rank_rows: high.len(),
            high_rank_failing: high_failing,
            enforced,
        });
    }
    EnsembleAggregate {
        schema_version: SCHEMA_VERSION,
        field: cfg.field.to_string(),
        plant: cfg.plant.to_string(),
        size: rows.len(),
        r_threshold: r,
        per_c,
        bound_rows: rows
            .iter()
            .filter(|x| matches!(x.bound_status, Some(BoundStatus::Holds | BoundStatus::Violated)))
            .count(),
        bound_violations: rows
            .iter()
            .filter(|x| x.bound_status == Some(BoundStatus::Violated))
            .map(|x| x.seed)
            .collect(),
        halting,
        error_rows: rows.iter().filter(|x| x.error.is_some()).map(|x| x.seed).collect(),
    }
}

pub fn cmd_ensemble(cfg: &ExperimentConfig) -> Result<CommandOutput> {
    let rows = run_ensemble(cfg);
    let agg = ensemble_aggregate(cfg, &rows);
    let mut warnings = Vec::new();
    for h in &agg.halting {
        warnings.push(format!("high-rank row fails c-goodness (seed:c = {h})"));
    }
    for s in &agg.bound_violations {
        warnings.push(format!("derived bound violated at seed {s}"));
    }
    let exit_code = if agg.halting.is_empty() && agg.bound_violations.is_empty() { 0 } else { 1 };
    Ok(CommandOutput {
        body: ensemble_csv(cfg, &rows)?,
        aggregate: Some(to_json(&agg)),
        warnings,
        exit_code,
    })
}

/// Fiber counts of two polynomials with the same top part.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SameTopReport {
    pub f: String,
    pub g: String,
    pub c: i64,
    /// `M` fitted to the level-1 deviations of both polynomials
    pub m_hat: f64,
    pub levels: Vec<SameTopLevel>,
    pub within: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SameTopLevel {
    pub n: u32,
    /// `max_t |mu_F(t) - mu_G(t)|`
    pub difference: f64,
    /// `2 M q^{-n(c/2 - 1)}`
    pub allowance: f64,
}

/// Compares `F` and `G = F + (lower order terms)` level by level: the gap
/// between their fiber measures must stay within twice the single-polynomial
/// deviation bound fitted at level 1.
pub fn same_top_comparison(f: &MultiPoly, g: &MultiPoly, c: i64, n_max: u32, budget: u64) -> Result<SameTopReport> {
    if f.top_homogeneous()? != g.top_homogeneous()? {
        return Err(config_err("polynomials have different top homogeneous parts"));
    }
    let q = f.ctx().size();
    let mut m_hat = 0.0f64;
    let mut levels = Vec::new();
    for n in 1..=n_max {
        let cf = census::census(f, n, budget)?;
        let cg = census::census(g, n, budget)?;
        if n == 1 {
            m_hat = deviation_level(&cf, q, c).scaled.max(deviation_level(&cg, q, c).scaled);
        }
        let total = cf.total() as f64;
        let difference = cf
            .counts()
            .iter()
            .zip(cg.counts())
            .map(|(&a, &b)| a.abs_diff(b) as f64 / total)
            .fold(0.0, f64::max);
        let allowance = 2.0 * m_hat * (q as f64).powf(-(n as f64) * (c as f64 / 2.0 - 1.0));
        levels.push(SameTopLevel {
            n,
            difference,
            allowance,
        });
    }
    let within = levels.iter().all(|l| l.difference <= l.allowance + 1e-12);
    Ok(SameTopReport {
        f: f.to_string(),
        g: g.to_string(),
        c,
        m_hat,
        levels,
        within,
    })
}

/// Human-readable one-line summary of a bias report.
pub fn bias_summary(r: &BiasReport) -> String {
    let mut s = String::new();
    for l in &r.levels {
        let b = match (l.b_n_exact.as_deref(), l.b_n) {
            (Some(e), _) => e.to_string(),
            (None, Some(b)) => format!("{b:.6}"),
            (None, None) => "uniform".into(),
        };
        let _ = write!(s, "b_{}={} ", l.n, b);
    }
    let _ = write!(s, "B={}", fmt_float(r.bias_estimate));
    s
}
