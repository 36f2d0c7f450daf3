//! Monte Carlo campaigns: per-realization runs, aggregation, parameter
//! sweeps, TDD comparison and result export.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::activation::select_masks;
use crate::channel::draw_realization;
use crate::config::{dbm_to_watt, watt_to_dbm, ActivationPolicy, Scenario, ScenarioConfig};
use crate::error::{Error, Result};
use crate::rng::{substream, Purpose};
use crate::sca::{run_sca, verify_solution, IterationRecord, Termination};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    BsPowerDbm,
    UlThresholdBpsHz,
    UePowerDbm,
}

impl SweepParam {
    pub fn name(&self) -> &'static str {
        match self {
            SweepParam::BsPowerDbm => "bs_power_dbm",
            SweepParam::UlThresholdBpsHz => "ul_threshold_bps_hz",
            SweepParam::UePowerDbm => "ue_power_dbm",
        }
    }

    pub fn default_grid(&self) -> Vec<f64> {
        match self {
            SweepParam::BsPowerDbm => (0..8).map(|i| 30.0 + 2.0 * i as f64).collect(),
            SweepParam::UlThresholdBpsHz => (1..=10).map(|i| i as f64 / 10.0).collect(),
            SweepParam::UePowerDbm => (0..=10).map(|i| 5.0 + 2.0 * i as f64).collect(),
        }
    }

    /// Current value of the parameter in `config`.
    pub fn current(&self, config: &ScenarioConfig) -> f64 {
        match self {
            SweepParam::BsPowerDbm => watt_to_dbm(config.budget.bs_total_w),
            SweepParam::UlThresholdBpsHz => config.thresholds.ul_bps_hz.first().copied().unwrap_or(0.0),
            SweepParam::UePowerDbm => watt_to_dbm(config.budget.ue_max_w),
        }
    }

    pub fn apply(&self, config: &mut ScenarioConfig, value: f64) {
        match self {
            SweepParam::BsPowerDbm => config.budget.bs_total_w = dbm_to_watt(value),
            SweepParam::UlThresholdBpsHz => config.thresholds.ul_bps_hz.iter_mut().for_each(|r| *r = value),
            SweepParam::UePowerDbm => config.budget.ue_max_w = dbm_to_watt(value),
        }
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bs_power_dbm" => Ok(SweepParam::BsPowerDbm),
            "ul_threshold_bps_hz" => Ok(SweepParam::UlThresholdBpsHz),
            "ue_power_dbm" => Ok(SweepParam::UePowerDbm),
            _ => Err(Error::invalid("sweep", format!("unknown parameter `{s}`"))),
        }
    }
}

/// A (scenario, activation policy) pair. Labels: `s1`, `s2`, `tdd`, with an
/// `-all` suffix for all-active activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Scheme {
    pub scenario: Scenario,
    pub activation_policy: ActivationPolicy,
}

impl Scheme {
    pub const S1: Scheme = Scheme::new(Scenario::S1Interference, ActivationPolicy::Algorithmic);
    pub const S1_ALL: Scheme = Scheme::new(Scenario::S1Interference, ActivationPolicy::AllActive);
    pub const S2: Scheme = Scheme::new(Scenario::S2NoInterference, ActivationPolicy::Algorithmic);
    pub const TDD: Scheme = Scheme::new(Scenario::Tdd, ActivationPolicy::Algorithmic);

    pub const fn new(scenario: Scenario, activation_policy: ActivationPolicy) -> Self {
        Self {
            scenario,
            activation_policy,
        }
    }

    pub fn of(config: &ScenarioConfig) -> Self {
        Self::new(config.scenario, config.activation_policy)
    }

    pub fn label(&self) -> String {
        let base = match self.scenario {
            Scenario::S1Interference => "s1",
            Scenario::S2NoInterference => "s2",
            Scenario::Tdd => "tdd",
        };
        match self.activation_policy {
            ActivationPolicy::Algorithmic => base.to_string(),
            ActivationPolicy::AllActive => format!("{base}-all"),
        }
    }

    pub fn apply(&self, config: &mut ScenarioConfig) {
        config.scenario = self.scenario;
        config.activation_policy = self.activation_policy;
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (base, policy) = match s.strip_suffix("-all") {
            Some(b) => (b, ActivationPolicy::AllActive),
            None => (s, ActivationPolicy::Algorithmic),
        };
        let scenario = match base {
            "s1" => Scenario::S1Interference,
            "s2" => Scenario::S2NoInterference,
            "tdd" => Scenario::Tdd,
            _ => return Err(Error::invalid("schemes", format!("unknown scheme `{s}`"))),
        };
        Ok(Scheme::new(scenario, policy))
    }
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub parameter: SweepParam,
    pub values: Vec<f64>,
    pub base: ScenarioConfig,
    pub schemes: Vec<Scheme>,
}

impl SweepSpec {
    /// One-point sweep at the base config's own value of `parameter`.
    pub fn single(base: ScenarioConfig, schemes: Vec<Scheme>) -> Self {
        let parameter = SweepParam::BsPowerDbm;
        Self {
            values: vec![parameter.current(&base)],
            parameter,
            base,
            schemes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::invalid("sweep.values", "at least one value required"));
        }
        if self.values.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::invalid("sweep.values", "values must be strictly increasing"));
        }
        if self.schemes.is_empty() {
            return Err(Error::invalid("schemes", "at least one scheme required"));
        }
        self.base.validate()
    }
}

/// Result of one realization of one campaign point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizationOutcome {
    pub realization: u64,
    /// Reason the realization was excluded from the averages.
    pub skipped: Option<String>,
    pub sum_rate: f64,
    pub r_dl: Vec<f64>,
    pub r_ul: Vec<f64>,
    pub iterations: usize,
    pub termination: Option<Termination>,
    pub active_tx: usize,
    pub active_rx: usize,
    #[serde(skip)]
    pub trace: Vec<IterationRecord>,
}

impl RealizationOutcome {
    pub fn feasible(&self) -> bool {
        self.skipped.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateResult {
    pub scheme: String,
    pub sweep_param: String,
    pub sweep_value: f64,
    /// `None` when no realization was feasible.
    pub mean_sum_rate: Option<f64>,
    pub std: Option<f64>,
    pub n_feasible: usize,
    pub n_skipped: usize,
    pub mean_r_dl: Vec<Option<f64>>,
    pub mean_r_ul: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointResult {
    pub aggregate: AggregateResult,
    pub outcomes: Vec<RealizationOutcome>,
}

fn run_realization(config: &ScenarioConfig, r: u64) -> Result<RealizationOutcome> {
    let ch = draw_realization(config, r)?;
    let sel = select_masks(config, &ch)?;
    let mut rng = substream(config.rng_seed, r, Purpose::ScaInit);
    let mut out = RealizationOutcome {
        realization: r,
        skipped: None,
        sum_rate: f64::NAN,
        r_dl: Vec::new(),
        r_ul: Vec::new(),
        iterations: 0,
        termination: None,
        active_tx: sel.mask.active_tx(),
        active_rx: sel.mask.active_rx(),
        trace: Vec::new(),
    };
    let res = match run_sca(&ch, &sel.mask, config, &mut rng) {
        Ok(res) => res,
        Err(e @ (Error::InfeasibleAtInit | Error::Infeasible | Error::NumericalFailure(_) | Error::NonMonotoneObjective(_))) => {
            log::debug!("realization {r} skipped: {e}");
            out.skipped = Some(match e {
                Error::InfeasibleAtInit | Error::Infeasible => "infeasible".into(),
                Error::NumericalFailure(_) => "numerical_failure".into(),
                _ => "nonmonotone".into(),
            });
            return Ok(out);
        }
        Err(e) => return Err(e),
    };
    let check = verify_solution(&res.pw, &ch, &sel.mask, config)?;
    if !check.all_ok() {
        out.skipped = Some("verification_failed".into());
    }
    out.sum_rate = check.report.sum;
    out.r_dl = check.report.r_dl;
    out.r_ul = check.report.r_ul;
    out.iterations = res.records.len();
    out.termination = Some(res.termination);
    out.trace = res.records;
    Ok(out)
}

fn mean_std(xs: &[f64]) -> (Option<f64>, Option<f64>) {
    if xs.is_empty() {
        return (None, None);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let std = if xs.len() > 1 {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (Some(mean), Some(std))
}

/// Aggregates over feasible realizations; sample standard deviation.
pub fn aggregate(scheme: &str, param: SweepParam, value: f64, k: usize, u: usize, outcomes: &[RealizationOutcome]) -> AggregateResult {
    let feasible: Vec<&RealizationOutcome> = outcomes.iter().filter(|o| o.feasible()).collect();
    let sums: Vec<f64> = feasible.iter().map(|o| o.sum_rate).collect();
    let (mean, std) = mean_std(&sums);
    let per_user = |pick: &dyn Fn(&RealizationOutcome) -> f64| mean_std(&feasible.iter().map(|o| pick(o)).collect::<Vec<_>>()).0;
    AggregateResult {
        scheme: scheme.to_string(),
        sweep_param: param.name().to_string(),
        sweep_value: value,
        mean_sum_rate: mean,
        std,
        n_feasible: feasible.len(),
        n_skipped: outcomes.len() - feasible.len(),
        mean_r_dl: (0..k).map(|i| per_user(&|o| o.r_dl[i])).collect(),
        mean_r_ul: (0..u).map(|i| per_user(&|o| o.r_ul[i])).collect(),
    }
}

/// Runs every realization of `config` (scheme taken from the config).
pub fn run_point(config: &ScenarioConfig) -> Result<PointResult> {
    let param = SweepParam::BsPowerDbm;
    run_point_labeled(config, param, param.current(config))
}

fn run_point_labeled(config: &ScenarioConfig, param: SweepParam, value: f64) -> Result<PointResult> {
    config.validate()?;
    let outcomes = (0..config.num_realizations as u64)
        .into_par_iter()
        .map(|r| run_realization(config, r))
        .collect::<Result<Vec<_>>>()?;
    let scheme = Scheme::of(config).label();
    let aggregate = aggregate(&scheme, param, value, config.dl_users.len(), config.ul_users.len(), &outcomes);
    log::info!(
        "{scheme} {param}={value}: mean {:?} over {} feasible, {} skipped",
        aggregate.mean_sum_rate,
        aggregate.n_feasible,
        aggregate.n_skipped
    );
    Ok(PointResult { aggregate, outcomes })
}

/// One point per (scheme, value), schemes outermost. Realization `r`
/// sees the same channel draw in every point.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<PointResult>> {
    spec.validate()?;
    let mut out = Vec::with_capacity(spec.schemes.len() * spec.values.len());
    for scheme in &spec.schemes {
        for &v in &spec.values {
            let mut cfg = spec.base.clone();
            scheme.apply(&mut cfg);
            spec.parameter.apply(&mut cfg, v);
            out.push(run_point_labeled(&cfg, spec.parameter, v)?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn results_header(k: usize, u: usize) -> Vec<String> {
    let mut h: Vec<String> = ["scheme", "sweep_param", "sweep_value", "mean_sum_rate", "std", "n_feasible", "n_skipped"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend((0..k).map(|i| format!("r_dl_{i}")));
    h.extend((0..u).map(|i| format!("r_ul_{i}")));
    h
}

/// Aggregate table as CSV. Missing means are empty fields.
pub fn write_results_csv<W: Write>(results: &[AggregateResult], out: W) -> Result<()> {
    let k = results.iter().map(|r| r.mean_r_dl.len()).max().unwrap_or(0);
    let u = results.iter().map(|r| r.mean_r_ul.len()).max().unwrap_or(0);
    let mut w = csv::Writer::from_writer(out);
    w.write_record(results_header(k, u))?;
    for r in results {
        let mut row = vec![
            r.scheme.clone(),
            r.sweep_param.clone(),
            r.sweep_value.to_string(),
            fmt_opt(r.mean_sum_rate),
            fmt_opt(r.std),
            r.n_feasible.to_string(),
            r.n_skipped.to_string(),
        ];
        row.extend((0..k).map(|i| fmt_opt(r.mean_r_dl.get(i).copied().flatten())));
        row.extend((0..u).map(|i| fmt_opt(r.mean_r_ul.get(i).copied().flatten())));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_results_csv<R: std::io::Read>(input: R) -> Result<Vec<AggregateResult>> {
    let mut rd = csv::Reader::from_reader(input);
    let header = rd.headers()?.clone();
    let k = header.iter().filter(|h| h.starts_with("r_dl_")).count();
    let u = header.iter().filter(|h| h.starts_with("r_ul_")).count();
    let num = |s: &str| -> Result<f64> { s.parse().map_err(|_| Error::ConfigParse(format!("bad number `{s}` in results"))) };
    let opt = |s: &str| -> Result<Option<f64>> { if s.is_empty() { Ok(None) } else { num(s).map(Some) } };
    let count = |s: &str| -> Result<usize> { s.parse().map_err(|_| Error::ConfigParse(format!("bad count `{s}` in results"))) };
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        out.push(AggregateResult {
            scheme: rec[0].to_string(),
            sweep_param: rec[1].to_string(),
            sweep_value: num(&rec[2])?,
            mean_sum_rate: opt(&rec[3])?,
            std: opt(&rec[4])?,
            n_feasible: count(&rec[5])?,
            n_skipped: count(&rec[6])?,
            mean_r_dl: (0..k).map(|i| opt(&rec[7 + i])).collect::<Result<_>>()?,
            mean_r_ul: (0..u).map(|i| opt(&rec[7 + k + i])).collect::<Result<_>>()?,
        });
    }
    Ok(out)
}

/// Writes the aggregate table to `path` in the given format.
pub fn emit_results(results: &[AggregateResult], path: impl AsRef<Path>, format: OutputFormat) -> Result<()> {
    let file = std::fs::File::create(path)?;
    match format {
        OutputFormat::Csv => write_results_csv(results, file),
        OutputFormat::Json => {
            let mut w = std::io::BufWriter::new(file);
            serde_json::to_writer_pretty(&mut w, results)?;
            w.write_all(b"\n")?;
            Ok(())
        }
    }
}

/// One row per (point, realization).
pub fn write_realizations_csv<W: Write>(points: &[PointResult], out: W) -> Result<()> {
    let k = points.iter().flat_map(|p| p.outcomes.iter().map(|o| o.r_dl.len())).max().unwrap_or(0);
    let u = points.iter().flat_map(|p| p.outcomes.iter().map(|o| o.r_ul.len())).max().unwrap_or(0);
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = ["scheme", "sweep_param", "sweep_value", "realization", "status", "sum_rate"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((0..k).map(|i| format!("r_dl_{i}")));
    header.extend((0..u).map(|i| format!("r_ul_{i}")));
    header.extend(["iterations", "termination", "active_tx", "active_rx"].iter().map(|s| s.to_string()));
    w.write_record(&header)?;
    for p in points {
        let a = &p.aggregate;
        for o in &p.outcomes {
            let mut row = vec![
                a.scheme.clone(),
                a.sweep_param.clone(),
                a.sweep_value.to_string(),
                o.realization.to_string(),
                o.skipped.clone().unwrap_or_else(|| "ok".into()),
                if o.sum_rate.is_finite() { o.sum_rate.to_string() } else { String::new() },
            ];
            row.extend((0..k).map(|i| o.r_dl.get(i).map(|v| v.to_string()).unwrap_or_default()));
            row.extend((0..u).map(|i| o.r_ul.get(i).map(|v| v.to_string()).unwrap_or_default()));
            row.push(o.iterations.to_string());
            row.push(match o.termination {
                Some(Termination::Converged) => "converged".into(),
                Some(Termination::MaxIterations) => "max_iterations".into(),
                Some(Termination::SolverStalled) => "solver_stalled".into(),
                None => String::new(),
            });
            row.push(o.active_tx.to_string());
            row.push(o.active_rx.to_string());
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainReport {
    pub scheme: String,
    pub scheme_mean: Option<f64>,
    pub tdd_mean: Option<f64>,
    /// 100 * (scheme / tdd - 1).
    pub gain_percent: Option<f64>,
    pub scheme_feasible: usize,
    pub tdd_feasible: usize,
}

/// Matched-seed campaigns of `scheme` and of TDD (with the same activation
/// policy) on `config`.
pub fn compare_to_tdd(config: &ScenarioConfig, scheme: Scheme) -> Result<GainReport> {
    let mut a = config.clone();
    scheme.apply(&mut a);
    let mut b = config.clone();
    Scheme::new(Scenario::Tdd, scheme.activation_policy).apply(&mut b);
    let pa = run_point(&a)?.aggregate;
    let pb = if a == b { pa.clone() } else { run_point(&b)?.aggregate };
    let gain = match (pa.mean_sum_rate, pb.mean_sum_rate) {
        (Some(x), Some(y)) if y > 0.0 => Some(100.0 * (x / y - 1.0)),
        _ => None,
    };
    Ok(GainReport {
        scheme: scheme.label(),
        scheme_mean: pa.mean_sum_rate,
        tdd_mean: pb.mean_sum_rate,
        gain_percent: gain,
        scheme_feasible: pa.n_feasible,
        tdd_feasible: pb.n_feasible,
    })
}
