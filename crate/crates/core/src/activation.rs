//! Greedy PA activation driven by distance and inter-user spatial
//! correlation.
//!
//! The PA closest (in summed distance) to the served users is switched on
//! first. Remaining PAs are tried in ascending summed-distance order and
//! kept only if they strictly lower the spatial correlation of the users'
//! masked channel vectors.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{channel_vector, ActivationMask, CMatrix, ChannelRealization};
use crate::config::{ActivationPolicy, Position3, ScenarioConfig, WaveguideLayout};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub index: usize,
    pub rho_candidate: f64,
    pub rho_incumbent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationTrace {
    /// Activated PAs in the order they were accepted.
    pub accepted: Vec<usize>,
    /// Incumbent correlation right after each acceptance.
    pub accepted_rho: Vec<f64>,
    pub rejected: Vec<Rejection>,
    pub final_rho: f64,
}

impl ActivationTrace {
    /// Number of candidate evaluations, the initial activation included.
    pub fn iterations(&self) -> usize {
        self.accepted.len() + self.rejected.len()
    }
}

/// Summed distance from PA `pa_index` to every user.
pub fn total_distance(pa_index: usize, layout: &WaveguideLayout, ues: &[Position3]) -> f64 {
    let pa = layout.pa_position(pa_index);
    ues.iter().map(|ue| pa.distance(ue)).sum()
}

/// Sum over user pairs `k <= i` of the normalized inner product
/// `|v_k^H v_i| / (|v_k| |v_i|)`, self terms included.
pub fn spatial_correlation(vectors: &[Vec<Complex64>]) -> Result<f64> {
    let norms: Vec<f64> = vectors
        .iter()
        .map(|v| v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt())
        .collect();
    if let Some(k) = norms.iter().position(|&n| !(n > 0.0)) {
        return Err(Error::ZeroNorm(k));
    }
    let mut rho = 0.0;
    for k in 0..vectors.len() {
        for i in k..vectors.len() {
            let inner: Complex64 = vectors[k]
                .iter()
                .zip(&vectors[i])
                .map(|(a, b)| a.conj() * b)
                .sum();
            rho += inner.norm() / (norms[k] * norms[i]);
        }
    }
    Ok(rho)
}

fn masked_vectors(per_pa: &CMatrix, guide: &[Complex64], mask: &[bool]) -> Vec<Vec<Complex64>> {
    (0..per_pa.cols())
        .map(|k| channel_vector(&per_pa.column(k), guide, mask))
        .collect()
}

/// Runs the greedy selection for one waveguide. `per_pa` is N x (users).
pub fn select_active_pas(
    layout: &WaveguideLayout,
    ues: &[Position3],
    per_pa: &CMatrix,
    guide: &[Complex64],
) -> Result<(Vec<bool>, ActivationTrace)> {
    let n = layout.num_pas();
    if n == 0 || ues.is_empty() {
        return Err(Error::Dimension("selection needs N >= 1 and at least one user".into()));
    }
    if per_pa.rows() != n || per_pa.cols() != ues.len() || guide.len() != n {
        return Err(Error::Dimension(format!(
            "per-PA channels {}x{} and guide {} do not match N={n}, users={}",
            per_pa.rows(),
            per_pa.cols(),
            guide.len(),
            ues.len()
        )));
    }

    let dist: Vec<f64> = (0..n).map(|i| total_distance(i, layout, ues)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    // stable sort keeps the lowest index first among ties
    order.sort_by(|&a, &b| dist[a].total_cmp(&dist[b]));

    let mut mask = vec![false; n];
    let first = order[0];
    mask[first] = true;
    let mut rho = spatial_correlation(&masked_vectors(per_pa, guide, &mask))?;
    let mut trace = ActivationTrace {
        accepted: vec![first],
        accepted_rho: vec![rho],
        rejected: Vec::new(),
        final_rho: rho,
    };

    for &cand in &order[1..] {
        mask[cand] = true;
        let rho_cand = spatial_correlation(&masked_vectors(per_pa, guide, &mask))?;
        if rho_cand < rho {
            rho = rho_cand;
            trace.accepted.push(cand);
            trace.accepted_rho.push(rho);
        } else {
            mask[cand] = false;
            trace.rejected.push(Rejection {
                index: cand,
                rho_candidate: rho_cand,
                rho_incumbent: rho,
            });
        }
    }
    trace.final_rho = rho;
    Ok((mask, trace))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskSelection {
    pub mask: ActivationMask,
    pub tx_trace: Option<ActivationTrace>,
    pub rx_trace: Option<ActivationTrace>,
}

// A waveguide without users keeps a single PA on so the mask stays valid.
fn select_side(
    layout: &WaveguideLayout,
    ues: &[Position3],
    per_pa: &CMatrix,
    guide: &[Complex64],
) -> Result<(Vec<bool>, Option<ActivationTrace>)> {
    if ues.is_empty() {
        let mut mask = vec![false; layout.num_pas()];
        if let Some(m) = mask.first_mut() {
            *m = true;
        }
        return Ok((mask, None));
    }
    let (mask, trace) = select_active_pas(layout, ues, per_pa, guide)?;
    Ok((mask, Some(trace)))
}

/// Transmit and receive masks for one realization under the configured
/// policy.
pub fn select_masks(config: &ScenarioConfig, ch: &ChannelRealization) -> Result<MaskSelection> {
    match config.activation_policy {
        ActivationPolicy::AllActive => Ok(MaskSelection {
            mask: ActivationMask::all_active(config.num_pas()),
            tx_trace: None,
            rx_trace: None,
        }),
        ActivationPolicy::Algorithmic => {
            let (delta, tx_trace) = select_side(&config.tx, &ch.dl_users, &ch.h_dl, &ch.g_t)?;
            let (beta, rx_trace) = select_side(&config.rx, &ch.ul_users, &ch.h_ul, &ch.g_r)?;
            Ok(MaskSelection {
                mask: ActivationMask { delta, beta },
                tx_trace,
                rx_trace,
            })
        }
    }
}
