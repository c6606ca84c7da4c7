//! Link-budget arithmetic and the RSRP measurement chain that feeds A3.
//!
//! Only event A3 (target better than serving by an offset) is evaluated.
//! Events A1, A2, A4 and A5 are not modelled.

use crate::error::{Error, Result};

pub const BOLTZMANN_DBW_PER_K_PER_HZ: f64 = -228.6;

/// Free-space path loss in dB for carrier `f_ghz` over `d_km`.
pub fn fspl(f_ghz: f64, d_km: f64) -> Result<f64> {
    if !(f_ghz > 0.0) || !(d_km > 0.0) {
        return Err(Error::Domain(format!(
            "fspl needs positive frequency and distance, got f={f_ghz} GHz, d={d_km} km"
        )));
    }
    Ok(20.0 * f_ghz.log10() + 20.0 * d_km.log10() + 92.45)
}

/// Uplink terminal parameters for the carrier-to-noise budget.
#[derive(Debug, Clone, PartialEq)]
pub struct TerminalProfile {
    pub name: String,
    pub carrier_ghz: f64,
    pub bandwidth_hz: f64,
    pub tx_power_dbm: f64,
    pub tx_antenna_gain_dbi: f64,
    pub atmospheric_loss_db: f64,
    pub shadow_margin_db: f64,
    pub scintillation_loss_db: f64,
    pub g_over_t_db_per_k: f64,
    pub boltzmann_dbw_per_k_per_hz: f64,
}

impl TerminalProfile {
    /// S-band handheld terminal.
    pub fn handheld() -> Self {
        TerminalProfile {
            name: "handheld".into(),
            carrier_ghz: 2.0,
            bandwidth_hz: 0.4e6,
            tx_power_dbm: 23.0,
            tx_antenna_gain_dbi: 0.0,
            atmospheric_loss_db: 0.1,
            shadow_margin_db: 3.0,
            scintillation_loss_db: 2.2,
            g_over_t_db_per_k: 1.1,
            boltzmann_dbw_per_k_per_hz: BOLTZMANN_DBW_PER_K_PER_HZ,
        }
    }

    /// Ka-band VSAT terminal.
    pub fn vsat() -> Self {
        TerminalProfile {
            name: "vsat".into(),
            carrier_ghz: 30.0,
            bandwidth_hz: 400e6,
            tx_power_dbm: 33.0,
            tx_antenna_gain_dbi: 43.2,
            atmospheric_loss_db: 0.5,
            shadow_margin_db: 0.0,
            scintillation_loss_db: 0.3,
            g_over_t_db_per_k: 13.0,
            boltzmann_dbw_per_k_per_hz: BOLTZMANN_DBW_PER_K_PER_HZ,
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "handheld" => Some(Self::handheld()),
            "vsat" => Some(Self::vsat()),
            _ => None,
        }
    }

    pub fn eirp_dbw(&self) -> f64 {
        self.tx_power_dbm - 30.0 + self.tx_antenna_gain_dbi
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.carrier_ghz > 0.0) {
            return Err(Error::config("terminal.carrier_ghz", "must be positive"));
        }
        if !(self.bandwidth_hz > 0.0) {
            return Err(Error::config("terminal.bandwidth_hz", "must be positive"));
        }
        for (field, v) in [
            ("terminal.atmospheric_loss_db", self.atmospheric_loss_db),
            ("terminal.shadow_margin_db", self.shadow_margin_db),
            ("terminal.scintillation_loss_db", self.scintillation_loss_db),
        ] {
            if !(v >= 0.0) {
                return Err(Error::config(field, "loss terms must be non-negative"));
            }
        }
        Ok(())
    }
}

/// Carrier-to-noise ratio in dB at slant range `d_km`.
pub fn cnr(profile: &TerminalProfile, d_km: f64) -> Result<f64> {
    let path = fspl(profile.carrier_ghz, d_km)?;
    Ok(profile.eirp_dbw() - path
        - profile.atmospheric_loss_db
        - profile.shadow_margin_db
        - profile.scintillation_loss_db
        + profile.g_over_t_db_per_k
        - profile.boltzmann_dbw_per_k_per_hz
        - 10.0 * profile.bandwidth_hz.log10())
}

/// Received reference-signal power in dBm. Absolute calibration is
/// irrelevant for A3, which compares SATs against each other.
pub fn rsrp_proxy(dl_eirp_dbw: f64, d_km: f64, f_ghz: f64, shadowing_db: f64) -> Result<f64> {
    Ok(dl_eirp_dbw + 30.0 - fspl(f_ghz, d_km)? + shadowing_db)
}

/// One step of the layer-3 IIR filter with forgetting factor `beta`.
pub fn l3_filter(m_l3_prev: f64, m_l1: f64, beta: f64) -> Result<f64> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::Domain(format!("forgetting factor must lie in (0, 1], got {beta}")));
    }
    Ok(beta * m_l1 + (1.0 - beta) * m_l3_prev)
}

/// Event A3: the target exceeds the serving cell by strictly more than the offset.
pub fn a3_event(m_l3_serving: f64, m_l3_target: f64, offset_db: f64) -> bool {
    m_l3_target > m_l3_serving + offset_db
}

/// Shared knobs of the measurement chain.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementParams {
    /// L1 measurement period T_M.
    pub period_s: f64,
    pub iir_order: u32,
    pub a3_offset_db: f64,
    pub shadowing_sigma_db: f64,
    pub dl_eirp_dbw: f64,
    /// Time-to-trigger expressed in HO slots.
    pub consecutive_slots_to_trigger: u32,
}

impl Default for MeasurementParams {
    fn default() -> Self {
        MeasurementParams {
            period_s: 0.150,
            iir_order: 4,
            a3_offset_db: 1.0,
            shadowing_sigma_db: 2.0,
            dl_eirp_dbw: 10.0,
            consecutive_slots_to_trigger: 1,
        }
    }
}

impl MeasurementParams {
    /// β = 1 / 2^(k/4).
    pub fn forgetting_factor(&self) -> f64 {
        1.0 / 2f64.powf(self.iir_order as f64 / 4.0)
    }

    /// Period of the L3 update, T_U = T_M / β.
    pub fn update_period_s(&self) -> f64 {
        self.period_s / self.forgetting_factor()
    }

    /// Number of L1 samples folded into the filter per HO slot of `slot_s`.
    pub fn samples_per_slot(&self, slot_s: f64) -> usize {
        ((slot_s / self.period_s).round() as usize).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.period_s > 0.0) {
            return Err(Error::config("measurement.period_s", "must be positive"));
        }
        if !(self.shadowing_sigma_db >= 0.0) {
            return Err(Error::config("measurement.shadowing_sigma_db", "must be non-negative"));
        }
        if self.consecutive_slots_to_trigger == 0 {
            return Err(Error::config("measurement.consecutive_slots_to_trigger", "must be ≥ 1"));
        }
        Ok(())
    }
}

/// Per-(UE, plane) L1 and L3 measurements, row-major `[ue * planes + plane]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementState {
    num_ues: usize,
    num_planes: usize,
    pub beta: f64,
    pub a3_offset_db: f64,
    l1_db: Vec<f64>,
    l3_db: Vec<f64>,
    primed: bool,
}

impl MeasurementState {
    pub fn new(num_ues: usize, num_planes: usize, params: &MeasurementParams) -> Self {
        MeasurementState {
            num_ues,
            num_planes,
            beta: params.forgetting_factor(),
            a3_offset_db: params.a3_offset_db,
            l1_db: vec![f64::NAN; num_ues * num_planes],
            l3_db: vec![f64::NAN; num_ues * num_planes],
            primed: false,
        }
    }

    /// Builds a state with explicit L3 values, mostly for testing agents.
    pub fn from_l3(num_ues: usize, num_planes: usize, l3_db: Vec<f64>, a3_offset_db: f64) -> Result<Self> {
        if l3_db.len() != num_ues * num_planes {
            return Err(Error::Shape(format!(
                "expected {} L3 values, got {}",
                num_ues * num_planes,
                l3_db.len()
            )));
        }
        Ok(MeasurementState {
            num_ues,
            num_planes,
            beta: 1.0,
            a3_offset_db,
            l1_db: l3_db.clone(),
            l3_db,
            primed: true,
        })
    }

    pub fn num_ues(&self) -> usize {
        self.num_ues
    }

    pub fn num_planes(&self) -> usize {
        self.num_planes
    }

    /// Folds one round of L1 samples (one per UE and plane) into the filter.
    /// The first round initializes L3 directly.
    pub fn ingest(&mut self, l1_db: &[f64]) -> Result<()> {
        if l1_db.len() != self.l1_db.len() {
            return Err(Error::Shape(format!(
                "expected {} L1 samples, got {}",
                self.l1_db.len(),
                l1_db.len()
            )));
        }
        self.l1_db.copy_from_slice(l1_db);
        if !self.primed {
            self.l3_db.copy_from_slice(l1_db);
            self.primed = true;
            return Ok(());
        }
        for (l3, &l1) in self.l3_db.iter_mut().zip(l1_db) {
            *l3 = l3_filter(*l3, l1, self.beta)?;
        }
        Ok(())
    }

    pub fn l1(&self, ue: usize, plane: usize) -> f64 {
        self.l1_db[ue * self.num_planes + plane]
    }

    pub fn l3(&self, ue: usize, plane: usize) -> f64 {
        self.l3_db[ue * self.num_planes + plane]
    }

    /// A3 flags of `ue` against each target plane `1..K`.
    pub fn a3_flags(&self, ue: usize) -> impl Iterator<Item = bool> + '_ {
        let serving = self.l3(ue, 0);
        (1..self.num_planes).map(move |k| a3_event(serving, self.l3(ue, k), self.a3_offset_db))
    }
}
