use std::time::Instant;

use num_complex::Complex64;
use rand::Rng;

use pass_core::activation::select_masks;
use pass_core::channel::{draw_realization, ActivationMask, ChannelRealization};
use pass_core::config::{InterferenceFormula, RateThresholds, Scenario, ScenarioConfig};
use pass_core::harness::{compare_to_tdd, run_point, run_sweep, write_realizations_csv, write_results_csv, Scheme, SweepParam, SweepSpec};
use pass_core::rates::{downlink_sinr, rate_report, uplink_sinr, PowerAllocation, RateModel};
use pass_core::rng::{substream, Purpose};
use pass_core::sca::{initialize, run_sca};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

// Direct transcription of the downlink and uplink SINR expressions from the
// raw per-PA channels.
struct Oracle<'a> {
    ch: &'a ChannelRealization,
    delta: &'a [bool],
    beta: &'a [bool],
}

impl Oracle<'_> {
    fn h_k(&self, k: usize) -> Complex64 {
        let mut h = Complex64::new(0.0, 0.0);
        for n in 0..self.delta.len() {
            if self.delta[n] {
                h += self.ch.h_dl.get(n, k) * self.ch.g_t[n];
            }
        }
        h
    }

    fn h_u(&self, u: usize) -> Complex64 {
        let mut h = Complex64::new(0.0, 0.0);
        for n in 0..self.beta.len() {
            if self.beta[n] {
                h += self.ch.h_ul.get(n, u) * self.ch.g_r[n];
            }
        }
        h
    }

    // g_r_hat H g_t_hat^H
    fn leak(&self) -> Complex64 {
        let n = self.delta.len();
        let mut acc = Complex64::new(0.0, 0.0);
        for m in 0..n {
            let gr = if self.beta[m] { self.ch.g_r[m] } else { Complex64::new(0.0, 0.0) };
            let mut row = Complex64::new(0.0, 0.0);
            for t in 0..n {
                let gt = if self.delta[t] { self.ch.g_t[t] } else { Complex64::new(0.0, 0.0) };
                row += self.ch.h_tr.get(m, t) * gt.conj();
            }
            acc += gr * row;
        }
        acc
    }

    fn sinr_k(&self, k: usize, p: &[f64], q: &[f64], noise: f64, tdd: bool) -> f64 {
        let sd = self.delta.iter().filter(|&&d| d).count() as f64;
        let hk2 = self.h_k(k).norm_sqr();
        let num = hk2 * p[k] / sd;
        let mut den = noise;
        for (j, pj) in p.iter().enumerate() {
            if j != k {
                den += hk2 * pj / sd;
            }
        }
        if !tdd {
            for (u, qu) in q.iter().enumerate() {
                den += self.ch.h_cross.get(u, k).norm_sqr() * qu;
            }
        }
        num / den
    }

    fn sinr_u(&self, u: usize, p: &[f64], q: &[f64], noise: f64, leak: Option<InterferenceFormula>) -> f64 {
        let sb = self.beta.iter().filter(|&&b| b).count() as f64;
        let sd = self.delta.iter().filter(|&&d| d).count() as f64;
        let num = q[u] / sb * self.h_u(u).norm_sqr();
        let mut den = noise / sb;
        for (j, qj) in q.iter().enumerate() {
            if j != u {
                den += qj / sb * self.h_u(j).norm_sqr();
            }
        }
        let pt: f64 = p.iter().sum();
        match leak {
            Some(InterferenceFormula::LiteralEquation) => den += (self.leak() * pt).norm_sqr() / sb,
            Some(InterferenceFormula::SignalModel) => den += pt / sd * self.leak().norm_sqr() / sb,
            None => {}
        }
        num / den
    }
}

fn random_mask(rng: &mut impl Rng, n: usize) -> Vec<bool> {
    let mut m: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
    if !m.iter().any(|&b| b) {
        m[rng.gen_range(0..n)] = true;
    }
    m
}

fn random_powers(rng: &mut impl Rng, cfg: &ScenarioConfig) -> PowerAllocation {
    let raw: Vec<f64> = (0..cfg.num_dl()).map(|_| rng.gen::<f64>()).collect();
    let total: f64 = raw.iter().sum::<f64>().max(1e-12);
    let frac = rng.gen::<f64>();
    PowerAllocation {
        p_dl: raw.iter().map(|r| r / total * frac * cfg.budget.bs_total_w).collect(),
        p_ul: (0..cfg.num_ul()).map(|_| rng.gen::<f64>() * cfg.budget.ue_max_w).collect(),
    }
}

fn criterion_1() -> Outcome {
    let scenarios = [Scenario::S1Interference, Scenario::S2NoInterference, Scenario::Tdd];
    let formulas = [InterferenceFormula::SignalModel, InterferenceFormula::LiteralEquation];
    let mut rng = substream(2024, 0, Purpose::ScaInit);
    let mut worst: f64 = 0.0;
    for i in 0..50u64 {
        let mut cfg = ScenarioConfig::reference();
        cfg.scenario = scenarios[i as usize % 3];
        cfg.interference_formula = formulas[(i as usize / 3) % 2];
        cfg.rng_seed = 1000 + i;
        let ch = draw_realization(&cfg, i).unwrap();
        let mask = ActivationMask {
            delta: random_mask(&mut rng, 10),
            beta: random_mask(&mut rng, 10),
        };
        let pw = random_powers(&mut rng, &cfg);
        let model = RateModel::from_config(&cfg);
        let o = Oracle { ch: &ch, delta: &mask.delta, beta: &mask.beta };
        let tdd = cfg.scenario == Scenario::Tdd;
        let leak = (cfg.scenario == Scenario::S1Interference).then_some(cfg.interference_formula);
        let report = rate_report(&ch, &mask, &pw, &cfg.budget, &model).unwrap();
        let share = if tdd { 0.5 } else { 1.0 };
        for k in 0..cfg.num_dl() {
            let want = o.sinr_k(k, &pw.p_dl, &pw.p_ul, cfg.budget.noise_dl_w, tdd);
            let got = downlink_sinr(k, &ch, &mask, &pw, &cfg.budget, &model).unwrap();
            worst = worst.max(rel_err(got, want));
            worst = worst.max(rel_err(report.r_dl[k], share * (1.0 + want).log2()));
        }
        for u in 0..cfg.num_ul() {
            let want = o.sinr_u(u, &pw.p_dl, &pw.p_ul, cfg.budget.noise_ul_w, leak);
            let got = uplink_sinr(u, &ch, &mask, &pw, &cfg.budget, &model).unwrap();
            worst = worst.max(rel_err(got, want));
            worst = worst.max(rel_err(report.r_ul[u], share * (1.0 + want).log2()));
        }
    }
    outcome(worst <= 1e-12, format!("50 instances, worst relative error {worst:.2e} (limit 1e-12)"))
}

fn criterion_2() -> Outcome {
    let mut cfg = ScenarioConfig::reference();
    cfg.scenario = Scenario::S2NoInterference;
    cfg.dl_users.truncate(1);
    cfg.ul_users.truncate(1);
    cfg.thresholds = RateThresholds::uniform(1, 1, 0.0);
    cfg.rng_seed = 77;
    let model = RateModel::from_config(&cfg);
    let mut worst_gap = f64::NEG_INFINITY;
    let mut failures = 0;
    let mut within = 0;
    for r in 0..20u64 {
        let ch = draw_realization(&cfg, r).unwrap();
        let mask = select_masks(&cfg, &ch).unwrap().mask;
        let sca = match run_sca(&ch, &mask, &cfg, &mut substream(cfg.rng_seed, r, Purpose::ScaInit)) {
            Ok(res) => res.report.sum,
            Err(_) => {
                failures += 1;
                continue;
            }
        };
        let mut best: f64 = 0.0;
        for i in 0..200 {
            for j in 0..200 {
                let pw = PowerAllocation {
                    p_dl: vec![cfg.budget.bs_total_w * i as f64 / 199.0],
                    p_ul: vec![cfg.budget.ue_max_w * j as f64 / 199.0],
                };
                best = best.max(rate_report(&ch, &mask, &pw, &cfg.budget, &model).unwrap().sum);
            }
        }
        let gap = (best - sca) / best;
        worst_gap = worst_gap.max(gap);
        if gap <= 0.02 {
            within += 1;
        }
    }
    let pass = failures == 0 && worst_gap <= 0.02;
    outcome(
        pass,
        format!(
            "20 instances, {failures} SCA failures, {within}/20 within 2% of the 200x200 grid, worst shortfall {:.3}%",
            100.0 * worst_gap
        ),
    )
}

fn criterion_3() -> Outcome {
    let mut traces = 0;
    let mut infeasible = 0;
    let mut other_errors = 0;
    let mut worst_step = f64::INFINITY;
    let mut max_iters = 0;
    let mut capped = 0;
    for scheme in [Scheme::S1, Scheme::S2, Scheme::TDD] {
        let mut cfg = ScenarioConfig::reference();
        scheme.apply(&mut cfg);
        for r in 0..100u64 {
            let ch = draw_realization(&cfg, r).unwrap();
            let mask = select_masks(&cfg, &ch).unwrap().mask;
            match run_sca(&ch, &mask, &cfg, &mut substream(cfg.rng_seed, r, Purpose::ScaInit)) {
                Ok(res) => {
                    traces += 1;
                    let mut prev = res.start_objective;
                    for rec in &res.records {
                        worst_step = worst_step.min(rec.objective - prev);
                        prev = rec.objective;
                    }
                    max_iters = max_iters.max(res.iterations());
                    if res.iterations() == cfg.sca.max_iters && res.termination != pass_core::sca::Termination::Converged {
                        capped += 1;
                    }
                }
                Err(pass_core::Error::InfeasibleAtInit) => infeasible += 1,
                Err(_) => other_errors += 1,
            }
        }
    }
    let pass = other_errors == 0 && worst_step >= -1e-6 && max_iters <= 50;
    outcome(
        pass,
        format!(
            "{traces} traces (s1, s2, tdd x 100), {infeasible} infeasible at start, {other_errors} errors; \
             smallest step {worst_step:.2e} (limit -1e-6), max iterations {max_iters} (limit 50), {capped} hit the cap"
        ),
    )
}

fn criterion_4() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut points = 0;
    for scheme in [Scheme::S1, Scheme::S2, Scheme::TDD] {
        let mut cfg = ScenarioConfig::reference();
        scheme.apply(&mut cfg);
        for r in 0..30u64 {
            let ch = draw_realization(&cfg, r).unwrap();
            let mask = select_masks(&cfg, &ch).unwrap().mask;
            let init = initialize(&ch, &mask, &cfg, &mut substream(cfg.rng_seed, r, Purpose::ScaInit)).unwrap();
            worst = worst.max(init.agm_tightness());
            points += 1;
            if let Ok(res) = run_sca(&ch, &mask, &cfg, &mut substream(cfg.rng_seed, r, Purpose::ScaInit)) {
                for rec in &res.records {
                    worst = worst.max(rec.agm_tightness);
                    points += 1;
                }
                // zeta^2 alpha = omega and nu^2 alpha = kappa at the returned point
                let s = &res.state;
                for k in 0..s.zeta.len() {
                    if s.alpha_dl[k] > 0.0 {
                        worst = worst.max(rel_err(s.zeta[k] * s.zeta[k] * s.alpha_dl[k], s.omega_dl[k]));
                    }
                }
                for u in 0..s.nu.len() {
                    if s.alpha_ul[u] > 0.0 {
                        worst = worst.max(rel_err(s.nu[u] * s.nu[u] * s.alpha_ul[u], s.kappa_ul[u]));
                    }
                }
            }
        }
    }
    outcome(worst <= 1e-9, format!("{points} update points, worst AGM residual {worst:.2e} (limit 1e-9)"))
}

fn criterion_5() -> Outcome {
    let mut cfg = ScenarioConfig::reference();
    Scheme::S1.apply(&mut cfg);
    let s1 = run_point(&cfg).unwrap().aggregate;
    Scheme::S2.apply(&mut cfg);
    let s2 = run_point(&cfg).unwrap().aggregate;
    let (m1, m2) = (s1.mean_sum_rate.unwrap_or(0.0), s2.mean_sum_rate.unwrap_or(0.0));

    let mut rng = substream(5, 0, Purpose::ScaInit);
    let mut violations = 0;
    for r in 0..100u64 {
        let ch = draw_realization(&cfg, r).unwrap();
        let mask = select_masks(&cfg, &ch).unwrap().mask;
        let pw = random_powers(&mut rng, &cfg);
        let a = rate_report(&ch, &mask, &pw, &cfg.budget, &RateModel::new(Scenario::S1Interference)).unwrap();
        let b = rate_report(&ch, &mask, &pw, &cfg.budget, &RateModel::new(Scenario::S2NoInterference)).unwrap();
        if b.sum < a.sum {
            violations += 1;
        }
    }
    outcome(
        m2 >= m1 && violations == 0,
        format!(
            "mean s2 {m2:.4} vs s1 {m1:.4} ({} / {} feasible); fixed-power dominance violated in {violations}/100",
            s2.n_feasible, s1.n_feasible
        ),
    )
}

fn criterion_6() -> Outcome {
    let cfg = ScenarioConfig::reference();
    let s2 = compare_to_tdd(&cfg, Scheme::S2).unwrap();
    let s1 = compare_to_tdd(&cfg, Scheme::S1).unwrap();
    let g2 = s2.gain_percent.unwrap_or(f64::NEG_INFINITY);
    let g1 = s1.gain_percent.unwrap_or(f64::NEG_INFINITY);
    outcome(
        g2 >= 40.0 && g1 >= 25.0,
        format!(
            "s2 {:.4} vs tdd {:.4}: {g2:+.1}% (need >= 40%); s1 {:.4} vs tdd: {g1:+.1}% (need >= 25%); feasible s2 {} s1 {} tdd {}",
            s2.scheme_mean.unwrap_or(f64::NAN),
            s2.tdd_mean.unwrap_or(f64::NAN),
            s1.scheme_mean.unwrap_or(f64::NAN),
            s2.scheme_feasible,
            s1.scheme_feasible,
            s2.tdd_feasible
        ),
    )
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut r = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0;
        for &t in &idx[i..=j] {
            r[t] = avg;
        }
        i = j + 1;
    }
    r
}

fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        0.0
    } else {
        cov / (vx * vy).sqrt()
    }
}

fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    cov / x.iter().map(|a| (a - mx).powi(2)).sum::<f64>()
}

struct Curve {
    x: Vec<f64>,
    y: Vec<f64>,
    feasible: Vec<usize>,
}

// Points with no feasible realization have no mean and are left out.
fn curve(param: SweepParam, scheme: Scheme) -> Curve {
    let spec = SweepSpec {
        parameter: param,
        values: param.default_grid(),
        base: ScenarioConfig::reference(),
        schemes: vec![scheme],
    };
    let mut c = Curve { x: Vec::new(), y: Vec::new(), feasible: Vec::new() };
    for p in run_sweep(&spec).unwrap() {
        if let Some(m) = p.aggregate.mean_sum_rate {
            c.x.push(p.aggregate.sweep_value);
            c.y.push(m);
            c.feasible.push(p.aggregate.n_feasible);
        }
    }
    c
}

fn fmt_curve(y: &[f64]) -> String {
    y.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>().join(" ")
}

fn criterion_7() -> Outcome {
    let mut pass = true;
    let mut notes = Vec::new();
    let verdict = |ok: bool| if ok { "ok" } else { "FAIL" };

    let grid = SweepParam::BsPowerDbm.default_grid();
    for scheme in [Scheme::S1, Scheme::S1_ALL] {
        let c = curve(SweepParam::BsPowerDbm, scheme);
        let argmax = c.y.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| c.x[i]);
        let ok = c.x.len() == grid.len() && argmax.is_some_and(|a| a < grid[grid.len() - 1]);
        pass &= ok;
        notes.push(format!(
            "(a) {} vs P_t [{}] max at {} dBm {}",
            scheme.label(),
            fmt_curve(&c.y),
            argmax.map_or("-".into(), |a| a.to_string()),
            verdict(ok)
        ));
    }

    for scheme in [Scheme::S1, Scheme::S1_ALL, Scheme::S2, Scheme::TDD] {
        let c = curve(SweepParam::UlThresholdBpsHz, scheme);
        let rho = spearman(&c.x, &c.y);
        let ok = c.x.len() >= 2 && rho <= 0.0;
        pass &= ok;
        notes.push(format!(
            "(b) {} vs R_th,u [{}] feasible {:?} spearman {rho:.3} {}",
            scheme.label(),
            fmt_curve(&c.y),
            c.feasible,
            verdict(ok)
        ));
    }

    let tdd = curve(SweepParam::UePowerDbm, Scheme::TDD);
    let st = slope(&tdd.x, &tdd.y);
    for scheme in [Scheme::S1, Scheme::S1_ALL] {
        let c = curve(SweepParam::UePowerDbm, scheme);
        let s = slope(&c.x, &c.y);
        let ok = s > st;
        pass &= ok;
        notes.push(format!(
            "(c) {} vs P_u [{}] slope {s:.4} vs tdd [{}] slope {st:.4} per dB {}",
            scheme.label(),
            fmt_curve(&c.y),
            fmt_curve(&tdd.y),
            verdict(ok)
        ));
    }
    outcome(pass, notes.join("\n    "))
}

fn criterion_8() -> Outcome {
    let mut cfg = ScenarioConfig::reference();
    Scheme::S1.apply(&mut cfg);
    let a = run_point(&cfg).unwrap().aggregate;
    Scheme::S1_ALL.apply(&mut cfg);
    let b = run_point(&cfg).unwrap().aggregate;
    let (ma, mb) = (a.mean_sum_rate.unwrap_or(0.0), b.mean_sum_rate.unwrap_or(0.0));
    outcome(
        ma >= mb,
        format!("s1 {ma:.4} ({} feasible) vs s1-all {mb:.4} ({} feasible)", a.n_feasible, b.n_feasible),
    )
}

fn campaign_bytes(threads: usize) -> (Vec<u8>, Vec<u8>) {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    pool.install(|| {
        let mut base = ScenarioConfig::reference();
        base.num_realizations = 20;
        base.rng_seed = 9;
        let spec = SweepSpec {
            parameter: SweepParam::UePowerDbm,
            values: vec![5.0, 15.0, 25.0],
            base,
            schemes: vec![Scheme::S1, Scheme::S1_ALL, Scheme::S2, Scheme::TDD],
        };
        let points = run_sweep(&spec).unwrap();
        let aggregates: Vec<_> = points.iter().map(|p| p.aggregate.clone()).collect();
        let (mut a, mut b) = (Vec::new(), Vec::new());
        write_results_csv(&aggregates, &mut a).unwrap();
        write_realizations_csv(&points, &mut b).unwrap();
        (a, b)
    })
}

fn criterion_9() -> Outcome {
    let first = campaign_bytes(4);
    let again = campaign_bytes(4);
    let serial = campaign_bytes(1);
    let pass = first == again && first == serial;
    outcome(
        pass,
        format!(
            "two runs and a single-threaded run: results.csv {} bytes, realizations.csv {} bytes, identical: {pass}",
            first.0.len(),
            first.1.len()
        ),
    )
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 9] = [
        (1, "rate oracle equivalence", criterion_1),
        (2, "SCA vs brute-force grid", criterion_2),
        (3, "SCA monotonicity", criterion_3),
        (4, "surrogate tightness", criterion_4),
        (5, "scenario dominance", criterion_5),
        (6, "gain over TDD", criterion_6),
        (7, "curve shapes", criterion_7),
        (8, "activation sanity", criterion_8),
        (9, "determinism", criterion_9),
    ];
    let filter: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    for (id, name, run) in criteria {
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let t = Instant::now();
        let o = run();
        println!(
            "criterion {id} {}: {name} ({:.1}s)\n    {}",
            if o.pass { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64(),
            o.detail
        );
        if !o.pass {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
