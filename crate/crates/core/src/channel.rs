//! Channel model for one Monte Carlo realization.
//!
//! Geometry-only quantities (free-space PA-to-user channels, in-waveguide
//! phases) are deterministic given user positions. The inter-waveguide
//! matrix and the user-to-user cross channels carry the randomness.

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::config::{Position3, RadioParams, ScenarioConfig, WaveguideLayout};
use crate::error::{Error, Result};
use crate::rng::{substream, Purpose, Stream};

/// Dense row-major complex matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    #[serde(with = "complex_pairs")]
    data: Vec<Complex64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.data[r * self.cols + c]
    }

    pub fn column(&self, c: usize) -> Vec<Complex64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Complex64> {
        self.data.iter()
    }
}

/// Serializes complex numbers as `[re, im]` pairs.
mod complex_pairs {
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[Complex64], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Complex64>, D::Error> {
        let pairs = Vec::<[f64; 2]>::deserialize(d)?;
        Ok(pairs.into_iter().map(|[re, im]| Complex64::new(re, im)).collect())
    }
}

/// Binary PA activation on the transmit (`delta`) and receive (`beta`)
/// waveguides.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivationMask {
    pub delta: Vec<bool>,
    pub beta: Vec<bool>,
}

impl ActivationMask {
    pub fn all_active(n: usize) -> Self {
        Self {
            delta: vec![true; n],
            beta: vec![true; n],
        }
    }

    pub fn active_tx(&self) -> usize {
        self.delta.iter().filter(|&&d| d).count()
    }

    pub fn active_rx(&self) -> usize {
        self.beta.iter().filter(|&&b| b).count()
    }

    /// Checks the mask is usable in a rate computation.
    pub fn check(&self) -> Result<()> {
        if self.active_tx() == 0 {
            return Err(Error::InactiveMask("transmit"));
        }
        if self.active_rx() == 0 {
            return Err(Error::InactiveMask("receive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRealization {
    /// Per-PA downlink channels, N x K. Activation not applied.
    pub h_dl: CMatrix,
    /// Per-PA uplink channels, N x U.
    pub h_ul: CMatrix,
    #[serde(with = "complex_pairs")]
    pub g_t: Vec<Complex64>,
    #[serde(with = "complex_pairs")]
    pub g_r: Vec<Complex64>,
    /// Transmit-to-receive waveguide leakage, N x N indexed `[rx PA, tx PA]`.
    pub h_tr: CMatrix,
    /// Uplink UE to downlink UE, U x K.
    pub h_cross: CMatrix,
    pub dl_users: Vec<Position3>,
    pub ul_users: Vec<Position3>,
}

impl ChannelRealization {
    pub fn num_pas(&self) -> usize {
        self.g_t.len()
    }

    pub fn num_dl(&self) -> usize {
        self.h_dl.cols()
    }

    pub fn num_ul(&self) -> usize {
        self.h_ul.cols()
    }

    /// Scalar downlink channel h_k under the transmit mask.
    pub fn dl_effective(&self, k: usize, delta: &[bool]) -> Complex64 {
        effective_channel(&self.h_dl.column(k), &self.g_t, delta)
    }

    /// Scalar uplink channel h_u under the receive mask.
    pub fn ul_effective(&self, u: usize, beta: &[bool]) -> Complex64 {
        effective_channel(&self.h_ul.column(u), &self.g_r, beta)
    }

    /// g_r_hat H g_t_hat^H: the leakage amplitude collected by the active
    /// receive PAs from the active transmit PAs.
    pub fn leakage_amplitude(&self, mask: &ActivationMask) -> Complex64 {
        let n = self.num_pas();
        let mut acc = Complex64::new(0.0, 0.0);
        for m in (0..n).filter(|&m| mask.beta[m]) {
            for t in (0..n).filter(|&t| mask.delta[t]) {
                acc += self.g_r[m] * self.h_tr.get(m, t) * self.g_t[t].conj();
            }
        }
        acc
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn dump_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

/// Free-space power gain (lambda / (4 pi d))^2.
pub fn free_space_path_loss(dist: f64, wavelength: f64) -> f64 {
    let a = wavelength / (4.0 * PI * dist);
    a * a
}

/// Spherical-wave channel between a PA and a user.
pub fn freespace_channel(pa: &Position3, ue: &Position3, radio: &RadioParams) -> Result<Complex64> {
    let dist = pa.distance(ue);
    if !(dist > 0.0) {
        return Err(Error::DegenerateGeometry(format!(
            "PA at {pa:?} coincides with user at {ue:?}"
        )));
    }
    let phase = -2.0 * PI * dist / radio.wavelength_m;
    Ok(Complex64::from_polar(radio.eta / dist, phase))
}

/// Lossless propagation from the feed point to a PA.
pub fn inwaveguide_phase(pa: &Position3, feed: &Position3, radio: &RadioParams) -> Complex64 {
    let dist = pa.distance(feed);
    Complex64::from_polar(1.0, -2.0 * PI * dist / radio.guide_wavelength_m)
}

/// Sum over active PAs of per-PA channel times in-waveguide phase.
pub fn effective_channel(per_pa: &[Complex64], guide: &[Complex64], mask: &[bool]) -> Complex64 {
    debug_assert_eq!(per_pa.len(), guide.len());
    debug_assert_eq!(per_pa.len(), mask.len());
    per_pa
        .iter()
        .zip(guide)
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|((h, g), _)| h * g)
        .sum()
}

/// Masked per-PA channel vector; inactive entries are zero.
pub fn channel_vector(per_pa: &[Complex64], guide: &[Complex64], mask: &[bool]) -> Vec<Complex64> {
    debug_assert_eq!(per_pa.len(), guide.len());
    per_pa
        .iter()
        .zip(guide)
        .zip(mask)
        .map(|((h, g), &m)| if m { h * g } else { Complex64::new(0.0, 0.0) })
        .collect()
}

/// Circularly-symmetric complex Gaussian with unit variance.
pub fn complex_gaussian(rng: &mut Stream) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Rician transmit-to-receive waveguide channel.
///
/// The LoS part is the geometric phase between the PA pair; the path loss
/// uses the waveguide separation for every entry when `fixed_separation`
/// is set, otherwise the PA-pair distance.
pub fn interwaveguide_channel(
    tx: &WaveguideLayout,
    rx: &WaveguideLayout,
    radio: &RadioParams,
    fixed_separation: bool,
    rng: &mut Stream,
) -> CMatrix {
    let k = radio.rician_factor;
    let los_w = (k / (1.0 + k)).sqrt();
    let nlos_w = (1.0 / (1.0 + k)).sqrt();
    let fixed_pl = free_space_path_loss(radio.waveguide_separation_m, radio.wavelength_m);
    let n_rx = rx.num_pas();
    let n_tx = tx.num_pas();
    // NLoS draws happen in a fixed row-major order so that the stream
    // consumption does not depend on the geometry.
    CMatrix::from_fn(n_rx, n_tx, |m, n| {
        let d = rx.pa_position(m).distance(&tx.pa_position(n));
        let los = Complex64::from_polar(1.0, -2.0 * PI * d / radio.wavelength_m);
        let nlos = complex_gaussian(rng);
        let pl = if fixed_separation {
            fixed_pl
        } else {
            free_space_path_loss(d, radio.wavelength_m)
        };
        (los * los_w + nlos * nlos_w) * pl.sqrt()
    })
}

/// Rayleigh-faded link between an uplink UE and a downlink UE.
pub fn ue_to_ue_channel(
    ul_ue: &Position3,
    dl_ue: &Position3,
    radio: &RadioParams,
    rng: &mut Stream,
) -> Result<Complex64> {
    let dist = ul_ue.distance(dl_ue);
    if !(dist > 0.0) {
        return Err(Error::DegenerateGeometry(format!(
            "uplink user at {ul_ue:?} coincides with downlink user"
        )));
    }
    let g = complex_gaussian(rng);
    Ok(g * free_space_path_loss(dist, radio.wavelength_m).sqrt())
}

fn draw_users(config: &ScenarioConfig, index: u64) -> (Vec<Position3>, Vec<Position3>) {
    if !config.redraw_users {
        return (config.dl_users.clone(), config.ul_users.clone());
    }
    let mut rng = substream(config.rng_seed, index, Purpose::Users);
    let mut draw = |n: usize| -> Vec<Position3> {
        (0..n)
            .map(|_| {
                let x = rng.gen::<f64>() * config.room.x_m;
                let y = rng.gen::<f64>() * config.room.y_m;
                Position3::ground(x, y)
            })
            .collect()
    };
    let dl = draw(config.num_dl());
    let ul = draw(config.num_ul());
    (dl, ul)
}

/// Draws every channel quantity for realization `index`. A pure function of
/// `(config, index)`.
pub fn draw_realization(config: &ScenarioConfig, index: u64) -> Result<ChannelRealization> {
    let radio = &config.radio;
    let (dl_users, ul_users) = draw_users(config, index);
    let n = config.num_pas();

    let per_pa = |layout: &WaveguideLayout, users: &[Position3]| -> Result<CMatrix> {
        let mut data = Vec::with_capacity(n * users.len());
        for i in 0..n {
            let pa = layout.pa_position(i);
            for ue in users {
                data.push(freespace_channel(&pa, ue, radio)?);
            }
        }
        Ok(CMatrix {
            rows: n,
            cols: users.len(),
            data,
        })
    };
    let h_dl = per_pa(&config.tx, &dl_users)?;
    let h_ul = per_pa(&config.rx, &ul_users)?;
    let g_t = (0..n)
        .map(|i| inwaveguide_phase(&config.tx.pa_position(i), &config.tx.feed_point, radio))
        .collect();
    let g_r = (0..n)
        .map(|i| inwaveguide_phase(&config.rx.pa_position(i), &config.rx.feed_point, radio))
        .collect();

    let mut rng = substream(config.rng_seed, index, Purpose::Channel);
    let h_tr = interwaveguide_channel(
        &config.tx,
        &config.rx,
        radio,
        config.pl_at_fixed_separation,
        &mut rng,
    );
    let mut cross = Vec::with_capacity(ul_users.len() * dl_users.len());
    for ul in &ul_users {
        for dl in &dl_users {
            cross.push(ue_to_ue_channel(ul, dl, radio, &mut rng)?);
        }
    }
    let h_cross = CMatrix {
        rows: ul_users.len(),
        cols: dl_users.len(),
        data: cross,
    };

    Ok(ChannelRealization {
        h_dl,
        h_ul,
        g_t,
        g_r,
        h_tr,
        h_cross,
        dl_users,
        ul_users,
    })
}
