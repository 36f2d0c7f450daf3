//! Power allocation for a fixed activation by successive convex
//! approximation.
//!
//! Every user gets an SINR auxiliary `alpha`, a rate auxiliary `gamma` and an
//! interference-plus-noise epigraph variable (`omega` downlink, `kappa`
//! uplink). The bilinear constraint `alpha * omega <= s * p` is replaced by
//! the arithmetic-geometric-mean bound
//!
//! ```text
//! (alpha * zeta)^2 + (omega / zeta)^2 <= 2 * s * p
//! ```
//!
//! which is tight at `zeta = sqrt(omega / alpha)`. Each iteration solves the
//! resulting conic program and re-centers `zeta`/`nu` on the new solution,
//! so the previous solution stays feasible and the objective never drops.
//!
//! Internally all quantities are normalized: BS powers by `P_t`, UE powers by
//! `P_u^max`, and each interference epigraph by its own noise term. This keeps
//! the conic data within a few orders of magnitude of one.

pub mod program;
pub mod solver;

use std::f64::consts::LN_2;
use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{ActivationMask, ChannelRealization};
use crate::config::{InterferenceFormula, ScenarioConfig};
use crate::error::{Error, Result};
use crate::rates::{rate_report, PowerAllocation, RateModel, RateReport};
use crate::rng::Stream;

pub use program::{AffineExpr, ConicProgram};
pub use solver::{solve_subproblem, SolveStatus, SubproblemSolution};

/// Smallest variable scale used for the SINR auxiliaries.
const ALPHA_FLOOR: f64 = 1e-9;
/// Smallest SINR the AGM point is centred on; only a zero-power link hits it.
const CENTRE_FLOOR: f64 = 1e-300;
/// Allowed objective decrease between iterations.
const MONOTONE_TOL: f64 = 1e-6;
/// Violation below which the previous iterate counts as feasible in the next program.
const CARRY_TOL: f64 = 1e-7;
/// (relative SINR margin, power floor as a fraction of the initial power)
/// tried in order when projecting the initial point.
const PROJECT_ATTEMPTS: [(f64, f64); 3] = [(5e-2, 1e-3), (1e-3, 1e-6), (1e-3, 0.0)];

/// Normalized link coefficients for one (channel, mask, scenario).
#[derive(Debug, Clone, PartialEq)]
pub struct LinkData {
    pub k: usize,
    pub u: usize,
    /// Downlink SNR per unit of normalized own power: |h_k|^2 P_t / (sum(delta) sigma_k^2).
    pub dl_gain: Vec<f64>,
    /// `cross[k][u]`: uplink UE u into downlink UE k, per unit normalized UE power.
    pub cross: Vec<Vec<f64>>,
    /// Uplink SNR per unit of normalized own power: |h_u|^2 P_u^max / sigma^2.
    pub ul_gain: Vec<f64>,
    pub intra: bool,
    /// Leakage (normalized) = leak_linear * s + leak_quadratic * s^2, s = sum of normalized BS powers.
    pub leak_linear: f64,
    pub leak_quadratic: f64,
    pub share: f64,
    /// Required `gamma` per user (threshold divided by the time share).
    pub gamma_min_dl: Vec<f64>,
    pub gamma_min_ul: Vec<f64>,
    pub scale: Scaling,
}

/// Physical value = normalized value * scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaling {
    pub p_dl: f64,
    pub p_ul: f64,
    pub omega: Vec<f64>,
    pub kappa: f64,
}

impl LinkData {
    pub fn new(ch: &ChannelRealization, mask: &ActivationMask, config: &ScenarioConfig) -> Result<Self> {
        mask.check()?;
        let k = ch.num_dl();
        let u = ch.num_ul();
        if mask.delta.len() != ch.num_pas() || mask.beta.len() != ch.num_pas() {
            return Err(Error::Dimension("mask length differs from PA count".into()));
        }
        if config.thresholds.dl_bps_hz.len() != k || config.thresholds.ul_bps_hz.len() != u {
            return Err(Error::Dimension("threshold count differs from user count".into()));
        }
        let model = RateModel::from_config(config);
        let b = &config.budget;
        let n_tx = mask.active_tx() as f64;
        let n_rx = mask.active_rx() as f64;

        let dl_gain = (0..k)
            .map(|j| ch.dl_effective(j, &mask.delta).norm_sqr() / n_tx * b.bs_total_w / b.noise_dl_w)
            .collect();
        let cross = (0..k)
            .map(|j| {
                (0..u)
                    .map(|i| {
                        if model.cross_direction() {
                            ch.h_cross.get(i, j).norm_sqr() * b.ue_max_w / b.noise_dl_w
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect();
        let ul_gain = (0..u)
            .map(|i| ch.ul_effective(i, &mask.beta).norm_sqr() * b.ue_max_w / b.noise_ul_w)
            .collect();

        let (mut leak_linear, mut leak_quadratic) = (0.0, 0.0);
        if model.inter_waveguide() {
            // leakage / sum(beta) over noise / sum(beta)
            let amp2 = ch.leakage_amplitude(mask).norm_sqr();
            match model.interference_formula {
                InterferenceFormula::SignalModel => {
                    leak_linear = b.bs_total_w / n_tx * amp2 / b.noise_ul_w;
                }
                InterferenceFormula::LiteralEquation => {
                    leak_quadratic = b.bs_total_w * b.bs_total_w * amp2 / b.noise_ul_w;
                }
            }
        }

        let share = model.time_share();
        Ok(Self {
            k,
            u,
            dl_gain,
            cross,
            ul_gain,
            intra: model.intra_direction(),
            leak_linear,
            leak_quadratic,
            share,
            gamma_min_dl: config.thresholds.dl_bps_hz.iter().map(|r| r / share).collect(),
            gamma_min_ul: config.thresholds.ul_bps_hz.iter().map(|r| r / share).collect(),
            scale: Scaling {
                p_dl: b.bs_total_w,
                p_ul: b.ue_max_w,
                omega: vec![b.noise_dl_w; k],
                kappa: b.noise_ul_w / n_rx,
            },
        })
    }

    /// Normalized interference plus noise at downlink user `j`.
    pub fn dl_interference(&self, j: usize, p: &[f64], q: &[f64]) -> f64 {
        let intra = if self.intra {
            self.dl_gain[j] * p.iter().enumerate().filter(|&(i, _)| i != j).map(|(_, v)| v).sum::<f64>()
        } else {
            0.0
        };
        intra + self.cross[j].iter().zip(q).map(|(c, v)| c * v).sum::<f64>() + 1.0
    }

    /// Normalized interference plus noise at the BS for uplink user `j`.
    pub fn ul_interference(&self, j: usize, p: &[f64], q: &[f64]) -> f64 {
        let intra = if self.intra {
            (0..self.u).filter(|&i| i != j).map(|i| self.ul_gain[i] * q[i]).sum::<f64>()
        } else {
            0.0
        };
        let s: f64 = p.iter().sum();
        intra + self.leak_linear * s + self.leak_quadratic * s * s + 1.0
    }

    /// Upper bound on the sum rate: every user alone at full power.
    pub fn capacity_bound(&self) -> f64 {
        self.share
            * self
                .dl_gain
                .iter()
                .chain(&self.ul_gain)
                .map(|g| (1.0 + g).log2())
                .sum::<f64>()
    }

    fn thresholds_unreachable(&self) -> bool {
        let dl = self.dl_gain.iter().zip(&self.gamma_min_dl);
        let ul = self.ul_gain.iter().zip(&self.gamma_min_ul);
        dl.chain(ul).any(|(g, r)| (1.0 + g).log2() < *r)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaState {
    pub pw: PowerAllocation,
    pub alpha_dl: Vec<f64>,
    pub gamma_dl: Vec<f64>,
    pub omega_dl: Vec<f64>,
    pub alpha_ul: Vec<f64>,
    pub gamma_ul: Vec<f64>,
    pub kappa_ul: Vec<f64>,
    pub zeta: Vec<f64>,
    pub nu: Vec<f64>,
    /// Surrogate optimum of every solved subproblem, in bps/Hz.
    pub objective_trace: Vec<f64>,
    pub iteration: usize,
}

impl ScaState {
    fn normalized_powers(&self, data: &LinkData) -> (Vec<f64>, Vec<f64>) {
        (
            self.pw.p_dl.iter().map(|p| p / data.scale.p_dl).collect(),
            self.pw.p_ul.iter().map(|p| p / data.scale.p_ul).collect(),
        )
    }

    /// Surrogate objective share * sum(gamma) at the current point.
    pub fn objective(&self, data: &LinkData) -> f64 {
        data.share * (self.gamma_dl.iter().sum::<f64>() + self.gamma_ul.iter().sum::<f64>())
    }

    fn recenter(&mut self) {
        self.zeta = self
            .omega_dl
            .iter()
            .zip(&self.alpha_dl)
            .map(|(w, a)| (w / a.max(CENTRE_FLOOR)).sqrt())
            .collect();
        self.nu = self
            .kappa_ul
            .iter()
            .zip(&self.alpha_ul)
            .map(|(k, a)| (k / a.max(CENTRE_FLOOR)).sqrt())
            .collect();
    }

    /// Relative gap between the AGM bound at the current `zeta`/`nu` and
    /// `2 alpha omega`, worst over users. Zero when re-centered exactly.
    pub fn agm_tightness(&self) -> f64 {
        let gap = |a: f64, w: f64, z: f64| {
            let a = a.max(CENTRE_FLOOR);
            let bound = (a * z).powi(2) + (w / z).powi(2);
            (bound - 2.0 * a * w).abs() / (2.0 * a * w)
        };
        let dl = (0..self.alpha_dl.len()).map(|k| gap(self.alpha_dl[k], self.omega_dl[k], self.zeta[k]));
        let ul = (0..self.alpha_ul.len()).map(|u| gap(self.alpha_ul[u], self.kappa_ul[u], self.nu[u]));
        dl.chain(ul).fold(0.0, f64::max)
    }

    /// Relative slack of the AGM constraints against `2 s p` at the current
    /// point; negative means violated.
    pub fn agm_slack(&self, data: &LinkData) -> Vec<f64> {
        let (p, q) = self.normalized_powers(data);
        let mut out = Vec::with_capacity(data.k + data.u);
        for k in 0..data.k {
            let w = self.omega_dl[k] / data.scale.omega[k];
            let z = self.zeta[k] / data.scale.omega[k].sqrt();
            let lhs = 2.0 * data.dl_gain[k] * p[k];
            let rhs = (self.alpha_dl[k] * z).powi(2) + (w / z).powi(2);
            out.push((lhs - rhs) / lhs.max(rhs).max(1e-300));
        }
        for u in 0..data.u {
            let w = self.kappa_ul[u] / data.scale.kappa;
            let z = self.nu[u] / data.scale.kappa.sqrt();
            let lhs = 2.0 * data.ul_gain[u] * q[u];
            let rhs = (self.alpha_ul[u] * z).powi(2) + (w / z).powi(2);
            out.push((lhs - rhs) / lhs.max(rhs).max(1e-300));
        }
        out
    }
}

/// Random powers within the budget; every auxiliary at its equality value.
pub fn initialize(
    ch: &ChannelRealization,
    mask: &ActivationMask,
    config: &ScenarioConfig,
    rng: &mut Stream,
) -> Result<ScaState> {
    let data = LinkData::new(ch, mask, config)?;
    initialize_with(&data, config.sca.init_power_fraction, rng)
}

fn initialize_with(data: &LinkData, fraction: f64, rng: &mut Stream) -> Result<ScaState> {
    let raw: Vec<f64> = (0..data.k).map(|_| rng.gen::<f64>() + f64::EPSILON).collect();
    let total: f64 = raw.iter().sum();
    let p: Vec<f64> = raw.iter().map(|r| r / total * fraction).collect();
    let q: Vec<f64> = (0..data.u).map(|_| rng.gen::<f64>()).collect();
    Ok(state_at(data, p, q))
}

/// State with auxiliaries at their equality values for normalized powers.
pub fn state_at(data: &LinkData, p: Vec<f64>, q: Vec<f64>) -> ScaState {
    let omega_n: Vec<f64> = (0..data.k).map(|k| data.dl_interference(k, &p, &q)).collect();
    let kappa_n: Vec<f64> = (0..data.u).map(|u| data.ul_interference(u, &p, &q)).collect();
    let alpha_dl: Vec<f64> = (0..data.k).map(|k| data.dl_gain[k] * p[k] / omega_n[k]).collect();
    let alpha_ul: Vec<f64> = (0..data.u).map(|u| data.ul_gain[u] * q[u] / kappa_n[u]).collect();
    let mut state = ScaState {
        pw: PowerAllocation {
            p_dl: p.iter().map(|v| v * data.scale.p_dl).collect(),
            p_ul: q.iter().map(|v| v * data.scale.p_ul).collect(),
        },
        gamma_dl: alpha_dl.iter().map(|a| (1.0 + a).log2()).collect(),
        gamma_ul: alpha_ul.iter().map(|a| (1.0 + a).log2()).collect(),
        alpha_dl,
        alpha_ul,
        omega_dl: omega_n.iter().zip(&data.scale.omega).map(|(w, s)| w * s).collect(),
        kappa_ul: kappa_n.iter().map(|w| w * data.scale.kappa).collect(),
        zeta: Vec::new(),
        nu: Vec::new(),
        objective_trace: Vec::new(),
        iteration: 0,
    };
    state.recenter();
    state
}

/// Variable indices of a built subproblem.
#[derive(Debug, Clone, PartialEq)]
pub struct VarLayout {
    pub p_dl: Vec<usize>,
    pub p_ul: Vec<usize>,
    pub alpha_dl: Vec<usize>,
    pub alpha_ul: Vec<usize>,
    pub gamma_dl: Vec<usize>,
    pub gamma_ul: Vec<usize>,
    pub omega: Vec<usize>,
    pub kappa: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Subproblem {
    pub program: ConicProgram,
    pub vars: VarLayout,
}

impl Subproblem {
    /// `state` as a point in this program's (normalized) variables.
    pub fn encode(&self, state: &ScaState, data: &LinkData) -> Vec<f64> {
        let mut x = vec![0.0; self.program.num_vars()];
        let v = &self.vars;
        for j in 0..data.k {
            x[v.p_dl[j]] = state.pw.p_dl[j] / data.scale.p_dl;
            x[v.alpha_dl[j]] = state.alpha_dl[j];
            x[v.gamma_dl[j]] = state.gamma_dl[j];
            x[v.omega[j]] = state.omega_dl[j] / data.scale.omega[j];
        }
        for j in 0..data.u {
            x[v.p_ul[j]] = state.pw.p_ul[j] / data.scale.p_ul;
            x[v.alpha_ul[j]] = state.alpha_ul[j];
            x[v.gamma_ul[j]] = state.gamma_ul[j];
            x[v.kappa[j]] = state.kappa_ul[j] / data.scale.kappa;
        }
        x
    }
}

fn vars(prog: &mut ConicProgram, prefix: &str, n: usize) -> Vec<usize> {
    (0..n).map(|i| prog.add_var(format!("{prefix}[{i}]"))).collect()
}

/// Builds the convex subproblem around `state`.
pub fn build_subproblem(
    state: &ScaState,
    ch: &ChannelRealization,
    mask: &ActivationMask,
    config: &ScenarioConfig,
) -> Result<Subproblem> {
    let data = LinkData::new(ch, mask, config)?;
    build_with(state, &data)
}

fn build_with(state: &ScaState, data: &LinkData) -> Result<Subproblem> {
    let (k, u) = (data.k, data.u);
    if state.zeta.len() != k || state.nu.len() != u || state.pw.p_dl.len() != k || state.pw.p_ul.len() != u {
        return Err(Error::Dimension("state does not match the user counts".into()));
    }
    let mut prog = ConicProgram::default();
    let v = VarLayout {
        p_dl: vars(&mut prog, "p_dl", k),
        p_ul: vars(&mut prog, "p_ul", u),
        alpha_dl: vars(&mut prog, "alpha_dl", k),
        alpha_ul: vars(&mut prog, "alpha_ul", u),
        gamma_dl: vars(&mut prog, "gamma_dl", k),
        gamma_ul: vars(&mut prog, "gamma_ul", u),
        omega: vars(&mut prog, "omega", k),
        kappa: vars(&mut prog, "kappa", u),
    };
    let (p_prev, q_prev) = state.normalized_powers(data);
    for j in 0..k {
        prog.scale[v.p_dl[j]] = p_prev[j].max(1e-6);
        prog.scale[v.alpha_dl[j]] = state.alpha_dl[j].max(ALPHA_FLOOR);
        prog.scale[v.omega[j]] = state.omega_dl[j] / data.scale.omega[j];
    }
    for j in 0..u {
        prog.scale[v.p_ul[j]] = q_prev[j].max(1e-6);
        prog.scale[v.alpha_ul[j]] = state.alpha_ul[j].max(ALPHA_FLOOR);
        prog.scale[v.kappa[j]] = state.kappa_ul[j] / data.scale.kappa;
    }

    // BS budget and UE boxes.
    let mut budget = AffineExpr::constant(-1.0);
    for &p in &v.p_dl {
        budget = budget.add_term(p, 1.0);
        prog.le(format!("nonneg {}", prog.var_names[p]), AffineExpr::term(p, -1.0));
    }
    prog.le("bs_budget", budget);
    for &q in &v.p_ul {
        prog.le(format!("nonneg {}", prog.var_names[q]), AffineExpr::term(q, -1.0));
        prog.le(format!("ue_budget {}", prog.var_names[q]), AffineExpr::var(q).plus(-1.0));
    }
    for &a in v.alpha_dl.iter().chain(&v.alpha_ul).chain(&v.gamma_dl).chain(&v.gamma_ul) {
        prog.le(format!("nonneg {}", prog.var_names[a]), AffineExpr::term(a, -1.0));
    }

    // Rate epigraphs: gamma <= log2(1 + alpha), shifted by c = ln(1 + alpha_prev)
    // so the cone entries stay near one: exp(gamma ln2 - c) <= (1 + alpha) e^-c.
    let alpha_prev = state.alpha_dl.iter().chain(&state.alpha_ul);
    let pairs = v.gamma_dl.iter().zip(&v.alpha_dl).chain(v.gamma_ul.iter().zip(&v.alpha_ul));
    for ((&g, &a), &ap) in pairs.zip(alpha_prev) {
        let c = ap.max(0.0).ln_1p();
        let shrink = (-c).exp();
        prog.exp_cone(
            format!("rate {}", prog.var_names[g]),
            AffineExpr::term(g, LN_2).plus(-c),
            AffineExpr::constant(1.0),
            AffineExpr::term(a, shrink).plus(shrink),
        );
    }

    // Downlink interference epigraphs (linear).
    for j in 0..k {
        let mut e = AffineExpr::term(v.omega[j], -1.0).plus(1.0);
        if data.intra {
            for i in (0..k).filter(|&i| i != j) {
                e = e.add_term(v.p_dl[i], data.dl_gain[j]);
            }
        }
        for i in 0..u {
            if data.cross[j][i] != 0.0 {
                e = e.add_term(v.p_ul[i], data.cross[j][i]);
            }
        }
        prog.le(format!("dl_interference[{j}]"), e);
    }

    // Uplink interference epigraphs; the literal leakage term is quadratic
    // in the BS sum power and goes into a rotated cone.
    for j in 0..u {
        let mut rest = AffineExpr::constant(1.0);
        if data.intra {
            for i in (0..u).filter(|&i| i != j) {
                rest = rest.add_term(v.p_ul[i], data.ul_gain[i]);
            }
        }
        if data.leak_linear != 0.0 {
            for &p in &v.p_dl {
                rest = rest.add_term(p, data.leak_linear);
            }
        }
        if data.leak_quadratic > 0.0 {
            // L s^2 <= kappa - rest  <=>  s^2 <= 2 * ((kappa - rest) / (2L)) * 1
            let slack = AffineExpr::var(v.kappa[j]).add(&rest.clone().scaled(-1.0));
            let s = v.p_dl.iter().fold(AffineExpr::default(), |e, &p| e.add_term(p, 1.0));
            prog.rotated_soc(
                format!("ul_leakage[{j}]"),
                s,
                AffineExpr::constant(0.0),
                slack.scaled(0.5 / data.leak_quadratic),
                AffineExpr::constant(1.0),
            );
        }
        prog.le(format!("ul_interference[{j}]"), rest.add_term(v.kappa[j], -1.0));
    }

    // AGM surrogates: (alpha zeta)^2 + (omega / zeta)^2 <= 2 (g p / c) c,
    // with c chosen so both cone sides are of similar size.
    let agm = |prog: &mut ConicProgram, name: String, alpha: usize, aux: usize, power: usize, gain: f64, center: f64, prev: f64| {
        let c = (gain * prev).sqrt().max(1e-6);
        prog.rotated_soc(
            name,
            AffineExpr::term(alpha, center),
            AffineExpr::term(aux, 1.0 / center),
            AffineExpr::term(power, gain / c),
            AffineExpr::constant(c),
        );
    };
    for j in 0..k {
        let center = state.zeta[j] / data.scale.omega[j].sqrt();
        agm(&mut prog, format!("agm_dl[{j}]"), v.alpha_dl[j], v.omega[j], v.p_dl[j], data.dl_gain[j], center, p_prev[j]);
    }
    for j in 0..u {
        let center = state.nu[j] / data.scale.kappa.sqrt();
        agm(&mut prog, format!("agm_ul[{j}]"), v.alpha_ul[j], v.kappa[j], v.p_ul[j], data.ul_gain[j], center, q_prev[j]);
    }

    // Rate thresholds and objective.
    let targets = v
        .gamma_dl
        .iter()
        .zip(&data.gamma_min_dl)
        .chain(v.gamma_ul.iter().zip(&data.gamma_min_ul));
    for (&g, &r) in targets {
        if r > 0.0 {
            prog.le(format!("threshold {}", prog.var_names[g]), AffineExpr::term(g, -1.0).plus(r));
        }
    }
    for &g in v.gamma_dl.iter().chain(&v.gamma_ul) {
        prog.objective[g] = data.share;
    }

    prog.validate()?;
    Ok(Subproblem { program: prog, vars: v })
}

/// New state from a subproblem solution, re-centered at that solution.
fn state_from_solution(prev: &ScaState, sub: &Subproblem, sol: &SubproblemSolution, data: &LinkData) -> ScaState {
    let x = &sol.values;
    let get = |ids: &[usize]| -> Vec<f64> { ids.iter().map(|&i| x[i]).collect() };
    let mut p: Vec<f64> = get(&sub.vars.p_dl).into_iter().map(|v| v.max(0.0)).collect();
    let total: f64 = p.iter().sum();
    if total > 1.0 {
        p.iter_mut().for_each(|v| *v /= total);
    }
    let q: Vec<f64> = get(&sub.vars.p_ul).into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
    let mut state = state_at(data, p, q);
    state.objective_trace = prev.objective_trace.clone();
    state.iteration = prev.iteration + 1;
    state
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// |Lambda^n - Lambda^(n-1)| < epsilon.
    Converged,
    MaxIterations,
    /// The solver failed after at least one successful iteration; the last
    /// good iterate is returned.
    SolverStalled,
}

/// One row of the per-iteration log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub objective: f64,
    pub true_sum_rate: f64,
    pub max_violation: f64,
    pub agm_tightness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaResult {
    pub pw: PowerAllocation,
    pub report: RateReport,
    pub state: ScaState,
    pub termination: Termination,
    /// The random initial point missed a threshold and was projected.
    pub projected_init: bool,
    /// Objective at the random initial point.
    pub initial_objective: f64,
    /// Objective at the point the iterations started from.
    pub start_objective: f64,
    pub records: Vec<IterationRecord>,
}

impl ScaResult {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn write_trace_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn meets_thresholds(state: &ScaState, data: &LinkData) -> bool {
    data.gamma_min_dl
        .iter()
        .zip(&state.gamma_dl)
        .chain(data.gamma_min_ul.iter().zip(&state.gamma_ul))
        .all(|(r, g)| g >= r)
}

/// L1 projection of normalized powers `(p0, q0)` onto the set where every
/// SINR meets its threshold. The set is convex (polyhedral under the signal
/// model), so `None` proves the thresholds unattainable.
pub fn feasible_start(data: &LinkData, p0: &[f64], q0: &[f64]) -> Result<Option<(Vec<f64>, Vec<f64>)>> {
    for (margin, floor) in PROJECT_ATTEMPTS {
        if let Some(x) = project_with_margin(data, p0, q0, margin, floor)? {
            return Ok(Some(x));
        }
    }
    Ok(None)
}

fn project_with_margin(
    data: &LinkData,
    p0: &[f64],
    q0: &[f64],
    margin: f64,
    floor: f64,
) -> Result<Option<(Vec<f64>, Vec<f64>)>> {
    let (k, u) = (data.k, data.u);
    let theta = |g: f64| if g > 0.0 { (2f64.powf(g) - 1.0) * (1.0 + margin) } else { 0.0 };
    let mut prog = ConicProgram::default();
    let p = vars(&mut prog, "p_dl", k);
    let q = vars(&mut prog, "p_ul", u);
    let ep = vars(&mut prog, "dev_dl", k);
    let eq = vars(&mut prog, "dev_ul", u);

    let mut budget = AffineExpr::constant(-1.0);
    for j in 0..k {
        budget = budget.add_term(p[j], 1.0);
        prog.le("floor", AffineExpr::term(p[j], -1.0).plus(floor * p0[j]));
        prog.le("dev+", AffineExpr::var(p[j]).add_term(ep[j], -1.0).plus(-p0[j]));
        prog.le("dev-", AffineExpr::term(p[j], -1.0).add_term(ep[j], -1.0).plus(p0[j]));
        prog.objective[ep[j]] = -1.0;
    }
    prog.le("bs_budget", budget);
    for j in 0..u {
        prog.le("floor", AffineExpr::term(q[j], -1.0).plus(floor * q0[j]));
        prog.le("ue_budget", AffineExpr::var(q[j]).plus(-1.0));
        prog.le("dev+", AffineExpr::var(q[j]).add_term(eq[j], -1.0).plus(-q0[j]));
        prog.le("dev-", AffineExpr::term(q[j], -1.0).add_term(eq[j], -1.0).plus(q0[j]));
        prog.objective[eq[j]] = -1.0;
    }

    // theta / g * (interference + noise) <= own power
    for j in 0..k {
        let t = theta(data.gamma_min_dl[j]);
        if t == 0.0 {
            continue;
        }
        let g = data.dl_gain[j];
        if g <= 0.0 {
            return Ok(None);
        }
        let mut e = AffineExpr::term(p[j], -1.0).plus(t / g);
        if data.intra {
            for i in (0..k).filter(|&i| i != j) {
                e = e.add_term(p[i], t);
            }
        }
        for i in 0..u {
            if data.cross[j][i] != 0.0 {
                e = e.add_term(q[i], t * data.cross[j][i] / g);
            }
        }
        prog.le(format!("sinr_dl[{j}]"), e);
    }
    for j in 0..u {
        let t = theta(data.gamma_min_ul[j]);
        if t == 0.0 {
            continue;
        }
        let g = data.ul_gain[j];
        if g <= 0.0 {
            return Ok(None);
        }
        let mut rest = AffineExpr::constant(t / g);
        if data.intra {
            for i in (0..u).filter(|&i| i != j) {
                rest = rest.add_term(q[i], t * data.ul_gain[i] / g);
            }
        }
        for &pi in &p {
            if data.leak_linear != 0.0 {
                rest = rest.add_term(pi, t * data.leak_linear / g);
            }
        }
        if data.leak_quadratic > 0.0 {
            // (t L / g) s^2 <= q - rest
            let c = t * data.leak_quadratic / g;
            let s = p.iter().fold(AffineExpr::default(), |e, &pi| e.add_term(pi, 1.0));
            let slack = AffineExpr::var(q[j]).add(&rest.clone().scaled(-1.0));
            prog.rotated_soc(
                format!("sinr_ul[{j}]"),
                s,
                AffineExpr::constant(0.0),
                slack.scaled(0.5 / c),
                AffineExpr::constant(1.0),
            );
        }
        prog.le(format!("sinr_ul[{j}]"), rest.add_term(q[j], -1.0));
    }

    let sol = solve_subproblem(&prog, 1e-9)?;
    match sol.status {
        SolveStatus::Optimal => {
            let pv = p.iter().map(|&i| sol.values[i].max(0.0)).collect();
            let qv = q.iter().map(|&i| sol.values[i].clamp(0.0, 1.0)).collect();
            Ok(Some((pv, qv)))
        }
        SolveStatus::Infeasible => Ok(None),
        _ => sol.into_result().map(|_| None),
    }
}

/// Solves `prog`, retrying without variable scaling and at a looser
/// tolerance when the backend fails numerically or returns a value below
/// `floor`. The best feasible candidate is kept.
fn solve_robust(prog: &ConicProgram, tol: f64, floor: Option<f64>) -> Result<SubproblemSolution> {
    let mut plain = prog.clone();
    plain.scale.iter_mut().for_each(|s| *s = 1.0);
    let ladder = [(prog, tol), (prog, tol.max(1e-6)), (&plain, tol), (&plain, tol.max(1e-6))];
    let mut best: Option<SubproblemSolution> = None;
    let mut last = None;
    for (i, (p, t)) in ladder.into_iter().enumerate() {
        let sol = solve_subproblem(p, t)?;
        if i > 0 {
            log::debug!("retry {i} at tol {t:.0e}: {:?} {:.6}", sol.status, sol.objective);
        }
        match sol.status {
            SolveStatus::Optimal => {
                if floor.map_or(true, |f| sol.objective >= f - MONOTONE_TOL) {
                    return Ok(sol);
                }
                if best.as_ref().map_or(true, |b| sol.objective > b.objective) {
                    best = Some(sol);
                }
            }
            SolveStatus::NumericalFailure => last = Some(sol),
            _ => return Ok(sol),
        }
    }
    Ok(best.or(last).expect("ladder is non-empty"))
}

/// Runs the SCA loop from a random initial point drawn from `rng`.
pub fn run_sca(
    ch: &ChannelRealization,
    mask: &ActivationMask,
    config: &ScenarioConfig,
    rng: &mut Stream,
) -> Result<ScaResult> {
    let data = LinkData::new(ch, mask, config)?;
    if data.thresholds_unreachable() {
        return Err(Error::InfeasibleAtInit);
    }
    let model = RateModel::from_config(config);
    let settings = &config.sca;
    let mut state = initialize_with(&data, settings.init_power_fraction, rng)?;
    let initial_objective = state.objective(&data);
    let mut projected_init = false;
    if !meets_thresholds(&state, &data) && settings.feasibility_restoration {
        let (p0, q0) = state.normalized_powers(&data);
        let (p, q) = feasible_start(&data, &p0, &q0)?.ok_or(Error::InfeasibleAtInit)?;
        state = state_at(&data, p, q);
        projected_init = true;
    }
    let start_objective = state.objective(&data);

    let mut records = Vec::new();
    let mut prev = start_objective;
    let mut last_lambda = start_objective;
    let mut compare_prev = meets_thresholds(&state, &data);
    let mut termination = Termination::MaxIterations;

    for it in 1..=settings.max_iters {
        let sub = build_with(&state, &data)?;
        let sol = solve_robust(&sub.program, settings.solver_tol, compare_prev.then_some(prev))?;
        log::debug!(
            "sca {it}: {:?} objective {:.6} violation {:.2e} inexact {}",
            sol.status, sol.objective, sol.max_violation, sol.inexact
        );
        match sol.status {
            SolveStatus::Optimal => {}
            SolveStatus::Infeasible if records.is_empty() => return Err(Error::InfeasibleAtInit),
            _ if records.is_empty() => {
                return Err(sol.into_result().expect_err("non-optimal status"));
            }
            _ => {
                termination = Termination::SolverStalled;
                break;
            }
        }
        let lambda = sol.objective;
        if sol.inexact && compare_prev && lambda < prev {
            termination = Termination::SolverStalled;
            break;
        }
        if compare_prev && lambda < prev - MONOTONE_TOL {
            // The previous iterate is feasible here, so a lower value is a
            // solver inaccuracy rather than a descent.
            let (row, carried) = sub.program.worst_constraint(&sub.encode(&state, &data));
            log::debug!("sca {it}: previous iterate violates {row} by {carried:.2e}");
            if carried <= CARRY_TOL {
                log::debug!("sca {it}: solver returned {lambda:.6} below {prev:.6}; stopping");
                termination = Termination::SolverStalled;
                break;
            }
            return Err(Error::NonMonotoneObjective(prev - lambda));
        }
        state = state_from_solution(&state, &sub, &sol, &data);
        state.objective_trace.push(lambda);
        let report = rate_report(ch, mask, &state.pw, &config.budget, &model)?;
        records.push(IterationRecord {
            iteration: it,
            objective: lambda,
            true_sum_rate: report.sum,
            max_violation: sol.max_violation,
            agm_tightness: state.agm_tightness(),
        });
        let converged = (lambda - last_lambda).abs() < settings.epsilon;
        last_lambda = lambda;
        prev = state.objective(&data);
        compare_prev = true;
        if converged {
            termination = Termination::Converged;
            break;
        }
    }

    let report = rate_report(ch, mask, &state.pw, &config.budget, &model)?;
    Ok(ScaResult {
        pw: state.pw.clone(),
        report,
        state,
        termination,
        projected_init,
        initial_objective,
        start_objective,
        records,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintCheck {
    pub name: String,
    pub ok: bool,
    /// Positive when satisfied, negative by the violation amount.
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verification {
    pub checks: Vec<ConstraintCheck>,
    pub report: RateReport,
}

impl Verification {
    pub fn all_ok(&self) -> bool {
        self.checks.iter().all(|c| c.ok)
    }
}

/// Power budget and minimum-rate checks with the exact rate expressions.
/// Budgets allow 1e-9 relative slack, rates 1e-6 bps/Hz.
pub fn verify_solution(
    pw: &PowerAllocation,
    ch: &ChannelRealization,
    mask: &ActivationMask,
    config: &ScenarioConfig,
) -> Result<Verification> {
    let model = RateModel::from_config(config);
    let report = rate_report(ch, mask, pw, &config.budget, &model)?;
    let b = &config.budget;
    let mut checks = Vec::new();
    let mut push = |name: String, slack: f64, tol: f64| {
        checks.push(ConstraintCheck {
            name,
            ok: slack >= -tol,
            slack,
        })
    };
    push("bs_budget".into(), b.bs_total_w - pw.bs_total(), 1e-9 * b.bs_total_w);
    for (k, &p) in pw.p_dl.iter().enumerate() {
        push(format!("p_dl[{k}] >= 0"), p, 0.0);
    }
    for (u, &p) in pw.p_ul.iter().enumerate() {
        push(format!("p_ul[{u}] >= 0"), p, 0.0);
        push(format!("ue_budget[{u}]"), b.ue_max_w - p, 1e-9 * b.ue_max_w);
    }
    for (k, (r, t)) in report.r_dl.iter().zip(&config.thresholds.dl_bps_hz).enumerate() {
        push(format!("rate_dl[{k}]"), r - t, 1e-6);
    }
    for (u, (r, t)) in report.r_ul.iter().zip(&config.thresholds.ul_bps_hz).enumerate() {
        push(format!("rate_ul[{u}]"), r - t, 1e-6);
    }
    Ok(Verification { checks, report })
}
