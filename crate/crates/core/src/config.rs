//! Scenario description: geometry, radio constants, power budgets, rate
//! thresholds and solver settings.
//!
//! Configs are TOML files. Every physical quantity is SI; power fields also
//! accept a `_dbm` suffixed twin (`bs_total_dbm = 40` instead of
//! `bs_total_w = 10`). See `configs/reference.toml` for the full schema.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

pub fn dbm_to_watt(p_dbm: f64) -> f64 {
    10f64.powf((p_dbm - 30.0) / 10.0)
}

pub fn watt_to_dbm(p_w: f64) -> f64 {
    10.0 * p_w.log10() + 30.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Position3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    /// A user position on the floor (z = 0).
    pub const fn ground(x: f64, y: f64) -> Self {
        Self { x, y, z: 0.0 }
    }

    pub fn distance(&self, other: &Position3) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    fn validate(&self, field: &str) -> Result<()> {
        if !(self.x.is_finite() && self.y.is_finite() && self.z.is_finite()) {
            return Err(Error::invalid(field, "non-finite coordinate"));
        }
        if self.z < 0.0 {
            return Err(Error::invalid(field, "z must be >= 0"));
        }
        Ok(())
    }
}

/// A straight waveguide parallel to the x-axis with PAs at preconfigured
/// x coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveguideLayout {
    pub feed_point: Position3,
    pub pa_x_positions: Vec<f64>,
    pub y_coord: f64,
    pub height: f64,
    pub length: f64,
}

impl WaveguideLayout {
    pub fn new(pa_x_positions: Vec<f64>, y_coord: f64, height: f64, length: f64) -> Self {
        Self {
            feed_point: Position3::new(0.0, y_coord, height),
            pa_x_positions,
            y_coord,
            height,
            length,
        }
    }

    pub fn num_pas(&self) -> usize {
        self.pa_x_positions.len()
    }

    pub fn pa_position(&self, n: usize) -> Position3 {
        Position3::new(self.pa_x_positions[n], self.y_coord, self.height)
    }

    pub fn pa_positions(&self) -> Vec<Position3> {
        (0..self.num_pas()).map(|n| self.pa_position(n)).collect()
    }

    pub fn validate(&self, field: &str) -> Result<()> {
        let xs = &self.pa_x_positions;
        if xs.is_empty() {
            return Err(Error::invalid(format!("{field}.pa_x_m"), "at least one PA required"));
        }
        if !(self.length.is_finite() && self.length > 0.0) {
            return Err(Error::invalid(format!("{field}.length_m"), "must be positive"));
        }
        if !(self.height.is_finite() && self.height >= 0.0) {
            return Err(Error::invalid(format!("{field}.height_m"), "must be >= 0"));
        }
        if !self.y_coord.is_finite() {
            return Err(Error::invalid(format!("{field}.y_m"), "non-finite"));
        }
        self.feed_point.validate(&format!("{field}.feed_point"))?;
        for (i, &x) in xs.iter().enumerate() {
            if !(x.is_finite() && (0.0..=self.length).contains(&x)) {
                return Err(Error::invalid(
                    format!("{field}.pa_x_m"),
                    format!("position {i} ({x}) outside [0, {}]", self.length),
                ));
            }
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid(
                format!("{field}.pa_x_m"),
                "positions must be strictly increasing",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadioParams {
    pub carrier_freq_hz: f64,
    pub wavelength_m: f64,
    /// Free-space amplitude constant c / (4 pi f_c), meters.
    pub eta: f64,
    pub eta_eff: f64,
    pub guide_wavelength_m: f64,
    pub rician_factor: f64,
    pub waveguide_separation_m: f64,
}

/// Radio constants derived from the carrier frequency.
pub fn derive_radio_params(f_c: f64, eta_eff: f64, rician: f64, sep: f64) -> RadioParams {
    let wavelength = SPEED_OF_LIGHT / f_c;
    RadioParams {
        carrier_freq_hz: f_c,
        wavelength_m: wavelength,
        eta: SPEED_OF_LIGHT / (4.0 * PI * f_c),
        eta_eff,
        guide_wavelength_m: wavelength / eta_eff,
        rician_factor: rician,
        waveguide_separation_m: sep,
    }
}

impl RadioParams {
    /// Replaces the derived wavelength (and the quantities computed from it)
    /// with a literal value.
    pub fn with_wavelength(mut self, wavelength_m: f64) -> Self {
        self.wavelength_m = wavelength_m;
        self.eta = wavelength_m / (4.0 * PI);
        self.guide_wavelength_m = wavelength_m / self.eta_eff;
        self
    }

    fn validate(&self) -> Result<()> {
        let checks = [
            ("radio.carrier_freq_hz", self.carrier_freq_hz),
            ("radio.wavelength_m", self.wavelength_m),
            ("radio.eta", self.eta),
            ("radio.guide_wavelength_m", self.guide_wavelength_m),
            ("radio.waveguide_separation_m", self.waveguide_separation_m),
        ];
        for (field, v) in checks {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(field, "must be positive"));
            }
        }
        if !(self.eta_eff.is_finite() && self.eta_eff >= 1.0) {
            return Err(Error::invalid("radio.eta_eff", "must be >= 1"));
        }
        if !(self.rician_factor.is_finite() && self.rician_factor >= 0.0) {
            return Err(Error::invalid("radio.rician_factor", "must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerBudget {
    pub bs_total_w: f64,
    pub ue_max_w: f64,
    pub noise_dl_w: f64,
    pub noise_ul_w: f64,
}

impl PowerBudget {
    fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("budget.bs_total", self.bs_total_w),
            ("budget.ue_max", self.ue_max_w),
            ("budget.noise_dl", self.noise_dl_w),
            ("budget.noise_ul", self.noise_ul_w),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(field, "must be strictly positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateThresholds {
    pub dl_bps_hz: Vec<f64>,
    pub ul_bps_hz: Vec<f64>,
}

impl RateThresholds {
    pub fn uniform(k: usize, u: usize, value: f64) -> Self {
        Self {
            dl_bps_hz: vec![value; k],
            ul_bps_hz: vec![value; u],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Full duplex with leakage from the transmit into the receive waveguide.
    #[serde(alias = "s1")]
    S1Interference,
    /// Full duplex with the inter-waveguide leakage cancelled.
    #[serde(alias = "s2")]
    S2NoInterference,
    /// Downlink and uplink in separate half-length slots.
    #[serde(alias = "tdd")]
    Tdd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationPolicy {
    Algorithmic,
    AllActive,
}

/// How the inter-waveguide leakage power depends on the BS powers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterferenceFormula {
    /// (sum p_k / active tx PAs) * |g_r H g_t^H|^2
    SignalModel,
    /// |g_r H (sum p_k) g_t^H|^2, power inside the modulus.
    LiteralEquation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaSettings {
    pub epsilon: f64,
    pub max_iters: usize,
    /// Initial BS power is drawn so that sum p_k = fraction * P_t.
    pub init_power_fraction: f64,
    /// Move a random initial point that misses a rate threshold to the
    /// nearest (L1) point meeting all thresholds before iterating.
    pub feasibility_restoration: bool,
    pub solver_tol: f64,
}

impl Default for ScaSettings {
    fn default() -> Self {
        Self {
            epsilon: 1e-3,
            max_iters: 50,
            init_power_fraction: 0.5,
            feasibility_restoration: true,
            solver_tol: 1e-8,
        }
    }
}

/// Rectangle `[0, x_m] x [0, y_m]` on the floor where users are dropped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Room {
    pub x_m: f64,
    pub y_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub tx: WaveguideLayout,
    pub rx: WaveguideLayout,
    pub dl_users: Vec<Position3>,
    pub ul_users: Vec<Position3>,
    pub radio: RadioParams,
    pub budget: PowerBudget,
    pub thresholds: RateThresholds,
    pub scenario: Scenario,
    pub activation_policy: ActivationPolicy,
    pub num_realizations: usize,
    pub rng_seed: u64,
    pub sca: ScaSettings,
    pub interference_formula: InterferenceFormula,
    pub room: Room,
    /// Redraw user positions uniformly in the room for every realization.
    pub redraw_users: bool,
    /// Use the waveguide separation for every entry of the inter-waveguide
    /// path loss instead of the per-PA-pair distance.
    pub pl_at_fixed_separation: bool,
    /// TDD slots ignore intra-direction multi-user interference too.
    pub tdd_drop_all_interference: bool,
}

pub const DEFAULT_TX_PA_X: [f64; 10] = [1.0, 3.0, 5.0, 7.0, 9.0, 12.0, 15.0, 17.0, 19.0, 20.0];
pub const DEFAULT_RX_PA_X: [f64; 10] = [0.0, 2.0, 4.0, 6.0, 8.0, 10.0, 11.0, 13.0, 14.0, 18.0];

impl ScenarioConfig {
    /// Reference operating point: N = 10, K = U = 2, 28 GHz, h = 3 m,
    /// P_t = 40 dBm, P_u^max = 15 dBm, noise -90 dBm, thresholds 0.1 bps/Hz.
    pub fn reference() -> Self {
        let sep = 5.0;
        let radio = derive_radio_params(28e9, 1.4, 3.0, sep);
        Self {
            tx: WaveguideLayout::new(DEFAULT_TX_PA_X.to_vec(), 0.0, 3.0, 20.0),
            rx: WaveguideLayout::new(DEFAULT_RX_PA_X.to_vec(), sep, 3.0, 20.0),
            dl_users: vec![Position3::ground(4.0, 0.5), Position3::ground(15.0, 0.5)],
            ul_users: vec![Position3::ground(7.0, 0.5), Position3::ground(12.0, 0.5)],
            radio,
            budget: PowerBudget {
                bs_total_w: dbm_to_watt(40.0),
                ue_max_w: dbm_to_watt(15.0),
                noise_dl_w: dbm_to_watt(-90.0),
                noise_ul_w: dbm_to_watt(-90.0),
            },
            thresholds: RateThresholds::uniform(2, 2, 0.1),
            scenario: Scenario::S1Interference,
            activation_policy: ActivationPolicy::Algorithmic,
            num_realizations: 100,
            rng_seed: 0,
            sca: ScaSettings::default(),
            interference_formula: InterferenceFormula::SignalModel,
            room: Room { x_m: 20.0, y_m: 1.0 },
            redraw_users: true,
            pl_at_fixed_separation: true,
            tdd_drop_all_interference: false,
        }
    }

    pub fn num_dl(&self) -> usize {
        self.dl_users.len()
    }

    pub fn num_ul(&self) -> usize {
        self.ul_users.len()
    }

    pub fn num_pas(&self) -> usize {
        self.tx.num_pas()
    }

    pub fn validate(&self) -> Result<()> {
        self.tx.validate("tx")?;
        self.rx.validate("rx")?;
        if self.tx.num_pas() != self.rx.num_pas() {
            return Err(Error::invalid(
                "rx.pa_x_m",
                "both waveguides must carry the same number of PAs",
            ));
        }
        if self.dl_users.is_empty() {
            return Err(Error::invalid("users.dl", "K >= 1 downlink users required"));
        }
        if self.ul_users.is_empty() {
            return Err(Error::invalid("users.ul", "U >= 1 uplink users required"));
        }
        for (i, p) in self.dl_users.iter().enumerate() {
            p.validate(&format!("users.dl[{i}]"))?;
        }
        for (i, p) in self.ul_users.iter().enumerate() {
            p.validate(&format!("users.ul[{i}]"))?;
        }
        self.radio.validate()?;
        self.budget.validate()?;
        if self.thresholds.dl_bps_hz.len() != self.num_dl() {
            return Err(Error::invalid("thresholds.dl_bps_hz", "length must equal K"));
        }
        if self.thresholds.ul_bps_hz.len() != self.num_ul() {
            return Err(Error::invalid("thresholds.ul_bps_hz", "length must equal U"));
        }
        let thresholds = self.thresholds.dl_bps_hz.iter().chain(&self.thresholds.ul_bps_hz);
        if thresholds.into_iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(Error::invalid("thresholds", "must be finite and >= 0"));
        }
        if self.num_realizations == 0 {
            return Err(Error::invalid("num_realizations", "must be >= 1"));
        }
        if !(self.sca.epsilon.is_finite() && self.sca.epsilon > 0.0) {
            return Err(Error::invalid("sca.epsilon", "must be positive"));
        }
        if self.sca.max_iters == 0 {
            return Err(Error::invalid("sca.max_iters", "must be >= 1"));
        }
        let f = self.sca.init_power_fraction;
        if !(f > 0.0 && f <= 1.0) {
            return Err(Error::invalid("sca.init_power_fraction", "must lie in (0, 1]"));
        }
        if !(self.sca.solver_tol > 0.0 && self.sca.solver_tol < 1e-2) {
            return Err(Error::invalid("sca.solver_tol", "must lie in (0, 1e-2)"));
        }
        if !(self.room.x_m > 0.0 && self.room.y_m > 0.0) {
            return Err(Error::invalid("room", "dimensions must be positive"));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;
        let config = file.resolve()?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml_string(&self) -> String {
        let file = ConfigFile::from_config(self);
        toml::to_string_pretty(&file).expect("config serializes to TOML")
    }
}

/// Reads and validates a TOML scenario file.
pub fn load_config(path: impl AsRef<Path>) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path)?;
    ScenarioConfig::from_toml_str(&text)
}

// On-disk schema. Every field is optional and falls back to the reference
// operating point.

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    num_realizations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rng_seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    scenario: Option<Scenario>,
    #[serde(skip_serializing_if = "Option::is_none")]
    activation_policy: Option<ActivationPolicy>,
    #[serde(skip_serializing_if = "Option::is_none")]
    interference_formula: Option<InterferenceFormula>,
    #[serde(skip_serializing_if = "Option::is_none")]
    redraw_users: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tdd_drop_all_interference: Option<bool>,
    #[serde(default)]
    radio: RadioSection,
    #[serde(default)]
    room: RoomSection,
    #[serde(default)]
    tx: WaveguideSection,
    #[serde(default)]
    rx: WaveguideSection,
    #[serde(default)]
    budget: BudgetSection,
    #[serde(default)]
    thresholds: ThresholdSection,
    #[serde(default)]
    users: UserSection,
    #[serde(default)]
    sca: ScaSection,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RadioSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    carrier_freq_hz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    eta_eff: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rician_factor: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    waveguide_separation_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    wavelength_override_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pl_at_fixed_separation: Option<bool>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RoomSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    x_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    y_m: Option<f64>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WaveguideSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pa_x_m: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    y_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    height_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    length_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    feed_x_m: Option<f64>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BudgetSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    bs_total_w: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bs_total_dbm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ue_max_w: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ue_max_dbm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    noise_dl_w: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    noise_dl_dbm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    noise_ul_w: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    noise_ul_dbm: Option<f64>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ThresholdSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    dl_bps_hz: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ul_bps_hz: Option<Vec<f64>>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct UserSection {
    /// `[x, y]` or `[x, y, z]` per user.
    #[serde(skip_serializing_if = "Option::is_none")]
    dl: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ul: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScaSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_iters: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    init_power_fraction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    feasibility_restoration: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    solver_tol: Option<f64>,
}

fn power_field(field: &str, watts: Option<f64>, dbm: Option<f64>, default: f64) -> Result<f64> {
    match (watts, dbm) {
        (Some(_), Some(_)) => Err(Error::invalid(
            field,
            "give either the `_w` or the `_dbm` key, not both",
        )),
        (Some(w), None) => Ok(w),
        (None, Some(d)) if d.is_finite() => Ok(dbm_to_watt(d)),
        (None, Some(_)) => Err(Error::invalid(field, "non-finite dBm value")),
        (None, None) => Ok(default),
    }
}

fn parse_positions(field: &str, raw: &[Vec<f64>]) -> Result<Vec<Position3>> {
    raw.iter()
        .enumerate()
        .map(|(i, c)| match c.as_slice() {
            [x, y] => Ok(Position3::ground(*x, *y)),
            [x, y, z] => Ok(Position3::new(*x, *y, *z)),
            _ => Err(Error::invalid(
                format!("{field}[{i}]"),
                "expected [x, y] or [x, y, z]",
            )),
        })
        .collect()
}

fn waveguide(section: &WaveguideSection, default: &WaveguideLayout, y_default: f64) -> WaveguideLayout {
    let mut layout = WaveguideLayout::new(
        section.pa_x_m.clone().unwrap_or_else(|| default.pa_x_positions.clone()),
        section.y_m.unwrap_or(y_default),
        section.height_m.unwrap_or(default.height),
        section.length_m.unwrap_or(default.length),
    );
    layout.feed_point.x = section.feed_x_m.unwrap_or(0.0);
    layout
}

impl ConfigFile {
    fn resolve(self) -> Result<ScenarioConfig> {
        let base = ScenarioConfig::reference();

        let r = &self.radio;
        let sep = r.waveguide_separation_m.unwrap_or(base.radio.waveguide_separation_m);
        let mut radio = derive_radio_params(
            r.carrier_freq_hz.unwrap_or(base.radio.carrier_freq_hz),
            r.eta_eff.unwrap_or(base.radio.eta_eff),
            r.rician_factor.unwrap_or(base.radio.rician_factor),
            sep,
        );
        if let Some(lambda) = r.wavelength_override_m {
            if !(lambda.is_finite() && lambda > 0.0) {
                return Err(Error::invalid("radio.wavelength_override_m", "must be positive"));
            }
            radio = radio.with_wavelength(lambda);
        }

        let tx = waveguide(&self.tx, &base.tx, 0.0);
        let rx = waveguide(&self.rx, &base.rx, tx.y_coord + sep);

        let b = &self.budget;
        let budget = PowerBudget {
            bs_total_w: power_field("budget.bs_total", b.bs_total_w, b.bs_total_dbm, base.budget.bs_total_w)?,
            ue_max_w: power_field("budget.ue_max", b.ue_max_w, b.ue_max_dbm, base.budget.ue_max_w)?,
            noise_dl_w: power_field("budget.noise_dl", b.noise_dl_w, b.noise_dl_dbm, base.budget.noise_dl_w)?,
            noise_ul_w: power_field("budget.noise_ul", b.noise_ul_w, b.noise_ul_dbm, base.budget.noise_ul_w)?,
        };

        let dl_users = match &self.users.dl {
            Some(raw) => parse_positions("users.dl", raw)?,
            None => base.dl_users.clone(),
        };
        let ul_users = match &self.users.ul {
            Some(raw) => parse_positions("users.ul", raw)?,
            None => base.ul_users.clone(),
        };
        let thresholds = RateThresholds {
            dl_bps_hz: self
                .thresholds
                .dl_bps_hz
                .clone()
                .unwrap_or_else(|| vec![0.1; dl_users.len()]),
            ul_bps_hz: self
                .thresholds
                .ul_bps_hz
                .clone()
                .unwrap_or_else(|| vec![0.1; ul_users.len()]),
        };

        let d = ScaSettings::default();
        let s = &self.sca;
        let sca = ScaSettings {
            epsilon: s.epsilon.unwrap_or(d.epsilon),
            max_iters: s.max_iters.unwrap_or(d.max_iters),
            init_power_fraction: s.init_power_fraction.unwrap_or(d.init_power_fraction),
            feasibility_restoration: s.feasibility_restoration.unwrap_or(d.feasibility_restoration),
            solver_tol: s.solver_tol.unwrap_or(d.solver_tol),
        };

        Ok(ScenarioConfig {
            tx,
            rx,
            dl_users,
            ul_users,
            radio,
            budget,
            thresholds,
            scenario: self.scenario.unwrap_or(base.scenario),
            activation_policy: self.activation_policy.unwrap_or(base.activation_policy),
            num_realizations: self.num_realizations.unwrap_or(base.num_realizations),
            rng_seed: self.rng_seed.unwrap_or(0),
            sca,
            interference_formula: self.interference_formula.unwrap_or(base.interference_formula),
            room: Room {
                x_m: self.room.x_m.unwrap_or(base.room.x_m),
                y_m: self.room.y_m.unwrap_or(base.room.y_m),
            },
            redraw_users: self.redraw_users.unwrap_or(base.redraw_users),
            pl_at_fixed_separation: r.pl_at_fixed_separation.unwrap_or(base.pl_at_fixed_separation),
            tdd_drop_all_interference: self
                .tdd_drop_all_interference
                .unwrap_or(base.tdd_drop_all_interference),
        })
    }

    fn from_config(c: &ScenarioConfig) -> Self {
        let wg = |l: &WaveguideLayout| WaveguideSection {
            pa_x_m: Some(l.pa_x_positions.clone()),
            y_m: Some(l.y_coord),
            height_m: Some(l.height),
            length_m: Some(l.length),
            feed_x_m: Some(l.feed_point.x),
        };
        let users = |v: &[Position3]| Some(v.iter().map(|p| vec![p.x, p.y, p.z]).collect());
        let derived = derive_radio_params(
            c.radio.carrier_freq_hz,
            c.radio.eta_eff,
            c.radio.rician_factor,
            c.radio.waveguide_separation_m,
        );
        let overridden = (derived.wavelength_m - c.radio.wavelength_m).abs() > 1e-15;
        ConfigFile {
            num_realizations: Some(c.num_realizations),
            rng_seed: Some(c.rng_seed),
            scenario: Some(c.scenario),
            activation_policy: Some(c.activation_policy),
            interference_formula: Some(c.interference_formula),
            redraw_users: Some(c.redraw_users),
            tdd_drop_all_interference: Some(c.tdd_drop_all_interference),
            radio: RadioSection {
                carrier_freq_hz: Some(c.radio.carrier_freq_hz),
                eta_eff: Some(c.radio.eta_eff),
                rician_factor: Some(c.radio.rician_factor),
                waveguide_separation_m: Some(c.radio.waveguide_separation_m),
                wavelength_override_m: overridden.then_some(c.radio.wavelength_m),
                pl_at_fixed_separation: Some(c.pl_at_fixed_separation),
            },
            room: RoomSection {
                x_m: Some(c.room.x_m),
                y_m: Some(c.room.y_m),
            },
            tx: wg(&c.tx),
            rx: wg(&c.rx),
            budget: BudgetSection {
                bs_total_w: Some(c.budget.bs_total_w),
                ue_max_w: Some(c.budget.ue_max_w),
                noise_dl_w: Some(c.budget.noise_dl_w),
                noise_ul_w: Some(c.budget.noise_ul_w),
                ..Default::default()
            },
            thresholds: ThresholdSection {
                dl_bps_hz: Some(c.thresholds.dl_bps_hz.clone()),
                ul_bps_hz: Some(c.thresholds.ul_bps_hz.clone()),
            },
            users: UserSection {
                dl: users(&c.dl_users),
                ul: users(&c.ul_users),
            },
            sca: ScaSection {
                epsilon: Some(c.sca.epsilon),
                max_iters: Some(c.sca.max_iters),
                init_power_fraction: Some(c.sca.init_power_fraction),
                feasibility_restoration: Some(c.sca.feasibility_restoration),
                solver_tol: Some(c.sca.solver_tol),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn dbm_conversions() {
        assert_relative_eq!(dbm_to_watt(40.0), 10.0, max_relative = 1e-12);
        assert_relative_eq!(dbm_to_watt(15.0), 0.031_622_776_601_683_79, max_relative = 1e-12);
        assert_relative_eq!(dbm_to_watt(-90.0), 1.0e-12, max_relative = 1e-12);
    }

    #[test]
    fn radio_params_at_28ghz() {
        let r = derive_radio_params(28e9, 1.4, 3.0, 5.0);
        // c / f_c, c / (4 pi f_c), lambda / eta_eff evaluated by hand
        assert_relative_eq!(r.wavelength_m, 0.010_706_873_5, max_relative = 1e-9);
        assert_relative_eq!(r.eta, 8.520_259_212_923e-4, max_relative = 1e-9);
        assert_relative_eq!(r.guide_wavelength_m, 7.647_766_785_714e-3, max_relative = 1e-9);
        assert_eq!(r, derive_radio_params(28e9, 1.4, 3.0, 5.0));
    }

    #[test]
    fn wavelength_override_rederives_eta() {
        let r = derive_radio_params(28e9, 1.4, 3.0, 5.0).with_wavelength(0.01);
        assert_eq!(r.wavelength_m, 0.01);
        assert_relative_eq!(r.eta, 0.01 / (4.0 * PI), max_relative = 1e-15);
        assert_relative_eq!(r.guide_wavelength_m, 0.01 / 1.4, max_relative = 1e-15);
    }

    #[test]
    fn empty_file_is_reference() {
        let c = ScenarioConfig::from_toml_str("").unwrap();
        assert_eq!(c, ScenarioConfig::reference());
        assert_eq!(c.rng_seed, 0);
        assert_eq!(c.num_pas(), 10);
        assert_eq!((c.num_dl(), c.num_ul()), (2, 2));
        assert_eq!(c.tx.height, 3.0);
    }

    #[test]
    fn dbm_keys_and_conflicts() {
        let c = ScenarioConfig::from_toml_str("[budget]\nbs_total_dbm = 30\n").unwrap();
        assert_relative_eq!(c.budget.bs_total_w, 1.0, max_relative = 1e-12);
        let err = ScenarioConfig::from_toml_str("[budget]\nbs_total_dbm = 30\nbs_total_w = 1\n")
            .unwrap_err();
        assert!(err.to_string().contains("budget.bs_total"), "{err}");
    }

    #[test]
    fn non_increasing_pas_rejected() {
        let err = ScenarioConfig::from_toml_str("[tx]\npa_x_m = [1, 3, 3, 7, 9, 12, 15, 17, 19, 20]\n")
            .unwrap_err();
        assert!(err.to_string().contains("tx.pa_x_m"), "{err}");
    }

    #[test]
    fn unknown_key_is_parse_error() {
        assert!(matches!(
            ScenarioConfig::from_toml_str("bogus = 1\n"),
            Err(Error::ConfigParse(_))
        ));
    }

    #[test]
    fn toml_round_trip() {
        let mut c = ScenarioConfig::reference();
        c.radio = c.radio.with_wavelength(0.01);
        c.rng_seed = 77;
        let back = ScenarioConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(back.rng_seed, 77);
        assert_relative_eq!(back.radio.wavelength_m, 0.01);
        assert_eq!(back.tx, c.tx);
        assert_relative_eq!(back.budget.bs_total_w, c.budget.bs_total_w, max_relative = 1e-15);
    }

    proptest! {
        #[test]
        fn dbm_round_trip(x in -120.0f64..60.0) {
            prop_assert!((watt_to_dbm(dbm_to_watt(x)) - x).abs() < 1e-9);
        }

        #[test]
        fn mutated_configs_are_rejected(which in 0usize..12, bad in prop::sample::select(vec![-1.0, 0.0, f64::NAN])) {
            let mut c = ScenarioConfig::reference();
            match which {
                0 => c.tx.pa_x_positions[3] = c.tx.pa_x_positions[2],
                1 => c.rx.pa_x_positions[0] = -1.0,
                2 => c.tx.pa_x_positions[9] = c.tx.length + 1.0,
                3 => c.budget.bs_total_w = bad,
                4 => c.budget.noise_ul_w = bad,
                5 => c.radio.carrier_freq_hz = bad,
                6 => c.dl_users.clear(),
                7 => c.ul_users[0].z = -1.0,
                8 => c.num_realizations = 0,
                9 => c.thresholds.ul_bps_hz[0] = -0.5,
                10 => c.thresholds.dl_bps_hz.push(0.1),
                _ => c.tx.pa_x_positions.clear(),
            }
            prop_assert!(c.validate().is_err());
        }
    }
}
