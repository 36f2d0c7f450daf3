//! SINR and achievable-rate evaluation for a fixed channel, activation and
//! power allocation.
//!
//! Each activated PA radiates an equal share 1/sum(delta) of the BS signal.
//! On the receive side every term of the uplink SINR carries the same
//! 1/sum(beta) combining factor, noise included.

use serde::{Deserialize, Serialize};

use crate::channel::{ActivationMask, ChannelRealization};
use crate::config::{InterferenceFormula, PowerBudget, Scenario, ScenarioConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerAllocation {
    /// BS power per downlink user, watts.
    pub p_dl: Vec<f64>,
    /// Transmit power per uplink UE, watts.
    pub p_ul: Vec<f64>,
}

impl PowerAllocation {
    pub fn zeros(k: usize, u: usize) -> Self {
        Self {
            p_dl: vec![0.0; k],
            p_ul: vec![0.0; u],
        }
    }

    pub fn bs_total(&self) -> f64 {
        self.p_dl.iter().sum()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            p_dl: self.p_dl.iter().map(|p| p * factor).collect(),
            p_ul: self.p_ul.iter().map(|p| p * factor).collect(),
        }
    }

    /// Nonnegative and within the BS and per-UE budgets (1e-9 slack).
    pub fn within_budget(&self, budget: &PowerBudget) -> bool {
        let nonneg = self.p_dl.iter().chain(&self.p_ul).all(|&p| p >= 0.0);
        nonneg
            && self.bs_total() <= budget.bs_total_w + 1e-9
            && self.p_ul.iter().all(|&p| p <= budget.ue_max_w + 1e-9)
    }
}

/// Which interference terms enter the SINRs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RateModel {
    pub scenario: Scenario,
    pub interference_formula: InterferenceFormula,
    pub tdd_drop_all_interference: bool,
}

impl RateModel {
    pub fn new(scenario: Scenario) -> Self {
        Self {
            scenario,
            interference_formula: InterferenceFormula::SignalModel,
            tdd_drop_all_interference: false,
        }
    }

    pub fn from_config(config: &ScenarioConfig) -> Self {
        Self {
            scenario: config.scenario,
            interference_formula: config.interference_formula,
            tdd_drop_all_interference: config.tdd_drop_all_interference,
        }
    }

    /// Users of the same direction interfere with each other.
    pub fn intra_direction(&self) -> bool {
        !(self.scenario == Scenario::Tdd && self.tdd_drop_all_interference)
    }

    /// Uplink UEs interfere with downlink UEs.
    pub fn cross_direction(&self) -> bool {
        self.scenario != Scenario::Tdd
    }

    /// The transmit waveguide leaks into the receive waveguide.
    pub fn inter_waveguide(&self) -> bool {
        self.scenario == Scenario::S1Interference
    }

    /// Fraction of the frame each direction occupies.
    pub fn time_share(&self) -> f64 {
        if self.scenario == Scenario::Tdd {
            0.5
        } else {
            1.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub r_dl: Vec<f64>,
    pub r_ul: Vec<f64>,
    pub sum: f64,
    pub sinr_dl: Vec<f64>,
    pub sinr_ul: Vec<f64>,
    /// Leakage power reaching the receive waveguide (before 1/sum(beta)).
    pub interwaveguide_w: f64,
}

/// Inter-waveguide leakage power for the given BS powers.
pub fn interwaveguide_power(
    ch: &ChannelRealization,
    mask: &ActivationMask,
    pw: &PowerAllocation,
    mode: InterferenceFormula,
) -> f64 {
    let p_tot = pw.bs_total();
    let amp2 = ch.leakage_amplitude(mask).norm_sqr();
    match mode {
        InterferenceFormula::SignalModel => {
            let active = mask.active_tx();
            if active == 0 {
                0.0
            } else {
                p_tot / active as f64 * amp2
            }
        }
        InterferenceFormula::LiteralEquation => p_tot * p_tot * amp2,
    }
}

fn check_index(what: &str, i: usize, len: usize) -> Result<()> {
    if i >= len {
        return Err(Error::Dimension(format!("{what} index {i} out of range ({len})")));
    }
    Ok(())
}

pub fn downlink_sinr(
    k: usize,
    ch: &ChannelRealization,
    mask: &ActivationMask,
    pw: &PowerAllocation,
    budget: &PowerBudget,
    model: &RateModel,
) -> Result<f64> {
    check_index("downlink user", k, ch.num_dl())?;
    let active = mask.active_tx();
    if active == 0 {
        return Err(Error::InactiveMask("transmit"));
    }
    let gain = ch.dl_effective(k, &mask.delta).norm_sqr() / active as f64;
    let signal = gain * pw.p_dl[k];
    let mut interference = 0.0;
    if model.intra_direction() {
        let others: f64 = pw
            .p_dl
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != k)
            .map(|(_, p)| p)
            .sum();
        interference += gain * others;
    }
    if model.cross_direction() {
        interference += pw
            .p_ul
            .iter()
            .enumerate()
            .map(|(u, p)| ch.h_cross.get(u, k).norm_sqr() * p)
            .sum::<f64>();
    }
    Ok(signal / (interference + budget.noise_dl_w))
}

pub fn uplink_sinr(
    u: usize,
    ch: &ChannelRealization,
    mask: &ActivationMask,
    pw: &PowerAllocation,
    budget: &PowerBudget,
    model: &RateModel,
) -> Result<f64> {
    check_index("uplink user", u, ch.num_ul())?;
    let active = mask.active_rx();
    if active == 0 {
        return Err(Error::InactiveMask("receive"));
    }
    let scale = 1.0 / active as f64;
    let gain = |j: usize| ch.ul_effective(j, &mask.beta).norm_sqr() * scale;
    let signal = gain(u) * pw.p_ul[u];
    let mut interference = 0.0;
    if model.intra_direction() {
        interference += (0..ch.num_ul())
            .filter(|&j| j != u)
            .map(|j| gain(j) * pw.p_ul[j])
            .sum::<f64>();
    }
    if model.inter_waveguide() {
        mask.check()?;
        interference += scale * interwaveguide_power(ch, mask, pw, model.interference_formula);
    }
    Ok(signal / (interference + budget.noise_ul_w * scale))
}

pub fn rate_report(
    ch: &ChannelRealization,
    mask: &ActivationMask,
    pw: &PowerAllocation,
    budget: &PowerBudget,
    model: &RateModel,
) -> Result<RateReport> {
    mask.check()?;
    if pw.p_dl.len() != ch.num_dl() || pw.p_ul.len() != ch.num_ul() {
        return Err(Error::Dimension(format!(
            "power allocation has {}+{} entries, channel has {}+{} users",
            pw.p_dl.len(),
            pw.p_ul.len(),
            ch.num_dl(),
            ch.num_ul()
        )));
    }
    let sinr_dl = (0..ch.num_dl())
        .map(|k| downlink_sinr(k, ch, mask, pw, budget, model))
        .collect::<Result<Vec<_>>>()?;
    let sinr_ul = (0..ch.num_ul())
        .map(|u| uplink_sinr(u, ch, mask, pw, budget, model))
        .collect::<Result<Vec<_>>>()?;
    let share = model.time_share();
    let rate = |s: &f64| share * (1.0 + s).log2();
    let r_dl: Vec<f64> = sinr_dl.iter().map(rate).collect();
    let r_ul: Vec<f64> = sinr_ul.iter().map(rate).collect();
    let sum = r_dl.iter().sum::<f64>() + r_ul.iter().sum::<f64>();
    let interwaveguide_w = if model.inter_waveguide() {
        interwaveguide_power(ch, mask, pw, model.interference_formula)
    } else {
        0.0
    };
    Ok(RateReport {
        r_dl,
        r_ul,
        sum,
        sinr_dl,
        sinr_ul,
        interwaveguide_w,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{draw_realization, CMatrix};
    use crate::config::Position3;
    use num_complex::Complex64;
    use proptest::prelude::*;

    fn budget(noise: f64) -> PowerBudget {
        PowerBudget {
            bs_total_w: 10.0,
            ue_max_w: 1.0,
            noise_dl_w: noise,
            noise_ul_w: noise,
        }
    }

    /// One PA, K downlink and U uplink users, hand-set channels.
    fn tiny(h_dl: &[f64], h_ul: &[f64]) -> ChannelRealization {
        let c = |v: f64| Complex64::new(v, 0.0);
        let k = h_dl.len();
        let u = h_ul.len();
        ChannelRealization {
            h_dl: CMatrix::from_fn(1, k, |_, j| c(h_dl[j])),
            h_ul: CMatrix::from_fn(1, u, |_, j| c(h_ul[j])),
            g_t: vec![c(1.0)],
            g_r: vec![c(1.0)],
            h_tr: CMatrix::from_fn(1, 1, |_, _| c(0.5)),
            h_cross: CMatrix::from_fn(u, k, |_, _| c(0.1)),
            dl_users: vec![Position3::ground(0.0, 0.0); k],
            ul_users: vec![Position3::ground(1.0, 0.0); u],
        }
    }

    #[test]
    fn zero_power_gives_zero_sinr() {
        let ch = tiny(&[1.0, 2.0], &[1.0]);
        let mask = ActivationMask::all_active(1);
        let pw = PowerAllocation {
            p_dl: vec![0.0, 1.0],
            p_ul: vec![0.0],
        };
        let m = RateModel::new(Scenario::S1Interference);
        assert_eq!(downlink_sinr(0, &ch, &mask, &pw, &budget(1.0), &m).unwrap(), 0.0);
        assert_eq!(uplink_sinr(0, &ch, &mask, &pw, &budget(1.0), &m).unwrap(), 0.0);
    }

    #[test]
    fn unit_snr_gives_one_bit() {
        let ch = tiny(&[1.0], &[1.0]);
        let mask = ActivationMask::all_active(1);
        let pw = PowerAllocation {
            p_dl: vec![1.0],
            p_ul: vec![0.0],
        };
        let m = RateModel::new(Scenario::S2NoInterference);
        let r = rate_report(&ch, &mask, &pw, &budget(1.0), &m).unwrap();
        assert_eq!(r.sinr_dl[0], 1.0);
        assert_eq!(r.r_dl[0], 1.0);
    }

    #[test]
    fn scenario2_single_uplink_is_snr() {
        let ch = tiny(&[1.0], &[0.7]);
        let mask = ActivationMask::all_active(1);
        let pw = PowerAllocation {
            p_dl: vec![3.0],
            p_ul: vec![0.4],
        };
        let m = RateModel::new(Scenario::S2NoInterference);
        let s = uplink_sinr(0, &ch, &mask, &pw, &budget(0.2), &m).unwrap();
        assert!((s - 0.4 * 0.49 / 0.2).abs() < 1e-15);
    }

    #[test]
    fn inactive_mask_is_rejected() {
        let ch = tiny(&[1.0], &[1.0]);
        let mask = ActivationMask {
            delta: vec![false],
            beta: vec![true],
        };
        let pw = PowerAllocation::zeros(1, 1);
        let m = RateModel::new(Scenario::S1Interference);
        assert!(matches!(
            downlink_sinr(0, &ch, &mask, &pw, &budget(1.0), &m),
            Err(Error::InactiveMask(_))
        ));
        assert!(rate_report(&ch, &mask, &pw, &budget(1.0), &m).is_err());
    }

    #[test]
    fn interwaveguide_power_modes() {
        let cfg = ScenarioConfig::reference();
        let ch = draw_realization(&cfg, 0).unwrap();
        let zero = PowerAllocation::zeros(2, 2);
        let mask = ActivationMask::all_active(10);
        for mode in [InterferenceFormula::SignalModel, InterferenceFormula::LiteralEquation] {
            assert_eq!(interwaveguide_power(&ch, &mask, &zero, mode), 0.0);
        }

        // single active pair (n, m)
        let (n, m) = (3, 7);
        let mut single = ActivationMask {
            delta: vec![false; 10],
            beta: vec![false; 10],
        };
        single.delta[n] = true;
        single.beta[m] = true;
        let pw = PowerAllocation {
            p_dl: vec![1.5, 2.0],
            p_ul: vec![0.0, 0.0],
        };
        let want = 3.5 * (ch.g_r[m] * ch.h_tr.get(m, n) * ch.g_t[n].conj()).norm_sqr();
        let got = interwaveguide_power(&ch, &single, &pw, InterferenceFormula::SignalModel);
        assert!((got - want).abs() <= 1e-12 * want);

        // the two readings differ by (sum p) * (active tx)
        let sig = interwaveguide_power(&ch, &mask, &pw, InterferenceFormula::SignalModel);
        let lit = interwaveguide_power(&ch, &mask, &pw, InterferenceFormula::LiteralEquation);
        assert!((lit / sig - 3.5 * 10.0).abs() < 1e-9);
    }

    #[test]
    fn tdd_halves_rates_and_drops_cross_terms() {
        let cfg = ScenarioConfig::reference();
        let ch = draw_realization(&cfg, 1).unwrap();
        let mask = ActivationMask::all_active(10);
        let pw = PowerAllocation {
            p_dl: vec![4.0, 6.0],
            p_ul: vec![0.02, 0.03],
        };
        let s2 = rate_report(&ch, &mask, &pw, &cfg.budget, &RateModel::new(Scenario::S2NoInterference)).unwrap();
        let tdd = rate_report(&ch, &mask, &pw, &cfg.budget, &RateModel::new(Scenario::Tdd)).unwrap();
        for u in 0..2 {
            assert!((tdd.r_ul[u] - 0.5 * s2.r_ul[u]).abs() < 1e-12);
        }
        for k in 0..2 {
            assert!(tdd.sinr_dl[k] >= s2.sinr_dl[k]);
        }
        let zero = rate_report(&ch, &mask, &PowerAllocation::zeros(2, 2), &cfg.budget, &RateModel::new(Scenario::Tdd)).unwrap();
        assert_eq!(zero.sum, 0.0);
    }

    #[test]
    fn tdd_literal_drops_intra_interference() {
        let ch = tiny(&[1.0, 1.0], &[1.0, 1.0]);
        let mask = ActivationMask::all_active(1);
        let pw = PowerAllocation {
            p_dl: vec![1.0, 1.0],
            p_ul: vec![1.0, 1.0],
        };
        let mut m = RateModel::new(Scenario::Tdd);
        m.tdd_drop_all_interference = true;
        let r = rate_report(&ch, &mask, &pw, &budget(1.0), &m).unwrap();
        assert_eq!(r.sinr_dl, vec![1.0, 1.0]);
        assert_eq!(r.sinr_ul, vec![1.0, 1.0]);
        assert_eq!(r.sum, 2.0);
    }

    fn random_instance() -> impl Strategy<Value = (u64, u64, Vec<bool>, Vec<bool>, Vec<f64>, Vec<f64>)> {
        (
            0u64..500,
            0u64..20,
            prop::collection::vec(any::<bool>(), 10),
            prop::collection::vec(any::<bool>(), 10),
            prop::collection::vec(0.0f64..5.0, 2),
            prop::collection::vec(0.0f64..0.03, 2),
        )
            .prop_filter("masks need an active PA", |(_, _, d, b, _, _)| {
                d.iter().any(|&x| x) && b.iter().any(|&x| x)
            })
    }

    proptest! {
        #[test]
        fn downlink_sinr_monotone_in_own_power((seed, idx, delta, beta, p_dl, p_ul) in random_instance(), bump in 0.0f64..3.0) {
            let mut cfg = ScenarioConfig::reference();
            cfg.rng_seed = seed;
            let ch = draw_realization(&cfg, idx).unwrap();
            let mask = ActivationMask { delta, beta };
            let pw = PowerAllocation { p_dl, p_ul };
            let mut more = pw.clone();
            more.p_dl[0] += bump;
            for sc in [Scenario::S1Interference, Scenario::S2NoInterference, Scenario::Tdd] {
                let m = RateModel::new(sc);
                let a = downlink_sinr(0, &ch, &mask, &pw, &cfg.budget, &m).unwrap();
                let b = downlink_sinr(0, &ch, &mask, &more, &cfg.budget, &m).unwrap();
                prop_assert!(b >= a);
            }
        }

        #[test]
        fn scenario2_dominates_scenario1((seed, idx, delta, beta, p_dl, p_ul) in random_instance()) {
            let mut cfg = ScenarioConfig::reference();
            cfg.rng_seed = seed;
            let ch = draw_realization(&cfg, idx).unwrap();
            let mask = ActivationMask { delta, beta };
            let pw = PowerAllocation { p_dl, p_ul };
            let s1 = rate_report(&ch, &mask, &pw, &cfg.budget, &RateModel::new(Scenario::S1Interference)).unwrap();
            let s2 = rate_report(&ch, &mask, &pw, &cfg.budget, &RateModel::new(Scenario::S2NoInterference)).unwrap();
            prop_assert!(s2.sum >= s1.sum);
            let parts: f64 = s1.r_dl.iter().chain(&s1.r_ul).sum();
            prop_assert!((parts - s1.sum).abs() < 1e-9);
            for (r, s) in s1.r_dl.iter().zip(&s1.sinr_dl) {
                prop_assert!(*r >= 0.0);
                prop_assert_eq!(*r, (1.0 + s).log2());
            }
        }

        #[test]
        fn common_scaling_leaves_downlink_sinr_unchanged((seed, idx, delta, beta, p_dl, _p_ul) in random_instance(), c in 1e-3f64..1e3) {
            let mut cfg = ScenarioConfig::reference();
            cfg.rng_seed = seed;
            cfg.ul_users.truncate(1);
            let mut ch = draw_realization(&cfg, idx).unwrap();
            // U = 0 for the downlink: drop the uplink side entirely.
            ch.h_cross = CMatrix::zeros(0, 2);
            ch.h_ul = CMatrix::zeros(10, 0);
            let mask = ActivationMask { delta, beta };
            let pw = PowerAllocation { p_dl, p_ul: vec![] };
            let mut b2 = cfg.budget;
            b2.noise_dl_w *= c;
            for sc in [Scenario::S2NoInterference, Scenario::Tdd] {
                let m = RateModel::new(sc);
                for k in 0..2 {
                    let a = downlink_sinr(k, &ch, &mask, &pw, &cfg.budget, &m).unwrap();
                    let b = downlink_sinr(k, &ch, &mask, &pw.scaled(c), &b2, &m).unwrap();
                    prop_assert!((a - b).abs() <= 1e-9 * a.max(1e-300));
                }
            }
        }
    }
}
