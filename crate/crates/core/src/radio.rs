//! Propagation gains, thermal noise and adjacent-channel coupling.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::RadioError;
use crate::units::{db_to_lin, lin_to_db, BOLTZMANN, SPEED_OF_LIGHT, T0_KELVIN};

/// Point in the motorway plane: `x` along the road, `y` across it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PathlossKind {
    FreeSpace,
    LogDistance { exponent: f64 },
    DualSlope {
        exponent_near: f64,
        exponent_far: f64,
        breakpoint_m: f64,
    },
}

/// Distance-power law anchored on the Friis gain at the reference distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathlossModel {
    pub kind: PathlossKind,
    pub reference_distance_m: f64,
    /// When set, the Friis anchor is evaluated at this carrier instead of the
    /// frequency passed to [`PathlossModel::gain`].
    #[serde(default)]
    pub carrier_mhz: Option<f64>,
    /// Combined tx + rx antenna gain folded into the anchor, dB.
    #[serde(default)]
    pub antenna_gain_db: f64,
}

impl Default for PathlossModel {
    fn default() -> Self {
        Self {
            kind: PathlossKind::DualSlope {
                exponent_near: 2.0,
                exponent_far: 4.0,
                breakpoint_m: 200.0,
            },
            reference_distance_m: 1.0,
            carrier_mhz: None,
            antenna_gain_db: 0.0,
        }
    }
}

impl PathlossModel {
    pub fn free_space() -> Self {
        Self {
            kind: PathlossKind::FreeSpace,
            ..Self::default()
        }
    }

    pub fn log_distance(exponent: f64) -> Self {
        Self {
            kind: PathlossKind::LogDistance { exponent },
            ..Self::default()
        }
    }

    pub fn pinned(mut self, carrier_mhz: f64) -> Self {
        self.carrier_mhz = Some(carrier_mhz);
        self
    }

    /// Linear gain over `distance_m` at `freq_mhz`. Distances below the
    /// reference distance are clamped to it.
    pub fn gain(&self, distance_m: f64, freq_mhz: f64) -> f64 {
        let f_hz = self.carrier_mhz.unwrap_or(freq_mhz) * 1e6;
        let d0 = self.reference_distance_m;
        let d = distance_m.max(d0);
        let lambda = SPEED_OF_LIGHT / f_hz;
        let anchor = (lambda / (4.0 * PI * d0)).powi(2) * db_to_lin(self.antenna_gain_db);
        let g = match self.kind {
            PathlossKind::FreeSpace => anchor * (d0 / d).powi(2),
            PathlossKind::LogDistance { exponent } => anchor * (d0 / d).powf(exponent),
            PathlossKind::DualSlope {
                exponent_near,
                exponent_far,
                breakpoint_m,
            } => {
                if d <= breakpoint_m {
                    anchor * (d0 / d).powf(exponent_near)
                } else {
                    anchor * (d0 / breakpoint_m).powf(exponent_near) * (breakpoint_m / d).powf(exponent_far)
                }
            }
        };
        g.min(1.0)
    }
}

pub fn pathloss_gain(model: &PathlossModel, tx: Position, rx: Position, freq_mhz: f64) -> f64 {
    model.gain(tx.distance(&rx), freq_mhz)
}

/// Thermal noise `k T0 B F` in watts.
pub fn noise_power(bandwidth_mhz: f64, noise_figure_db: f64) -> f64 {
    BOLTZMANN * T0_KELVIN * bandwidth_mhz * 1e6 * db_to_lin(noise_figure_db)
}

/// Linear coupling from leakage and selectivity attenuations (both positive dB):
/// `1/ACIR = 1/ACLR + 1/ACS`.
pub fn compose_acir(aclr_db: f64, acs_db: f64) -> f64 {
    db_to_lin(-aclr_db) + db_to_lin(-acs_db)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcirDirection {
    DttToV,
    VToV,
    VToDtt,
}

/// Piecewise-constant coupling versus absolute centre-frequency offset.
///
/// Entry `i` applies to `offsets_mhz[i] <= |df| < offsets_mhz[i + 1]`; the last
/// entry covers its own offset only, beyond it the floor applies.
#[derive(Debug, Clone, PartialEq)]
pub struct AcirTable {
    pub direction: AcirDirection,
    pub offsets_mhz: Vec<f64>,
    pub coupling: Vec<f64>,
    pub saturated: Option<Vec<f64>>,
    pub floor: f64,
    /// DTT power above which the saturated coupling applies, dBm.
    pub saturation_threshold_dbm: f64,
}

/// On-disk ACIR table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AcirTableFile {
    pub direction: AcirDirection,
    pub offsets_mhz: Vec<f64>,
    pub acir_db: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub saturated_acir_db: Option<Vec<f64>>,
    #[serde(default = "default_floor_db")]
    pub floor_db: f64,
    #[serde(default = "default_saturation_dbm")]
    pub saturation_threshold_dbm: f64,
}

fn default_floor_db() -> f64 {
    -60.0
}

fn default_saturation_dbm() -> f64 {
    -45.0
}

impl AcirTable {
    pub fn new(
        direction: AcirDirection,
        offsets_mhz: Vec<f64>,
        coupling: Vec<f64>,
        saturated: Option<Vec<f64>>,
        floor: f64,
        saturation_threshold_dbm: f64,
    ) -> Result<Self, RadioError> {
        let bad = |m: &str| Err(RadioError::InvalidTable(format!("{direction:?}: {m}")));
        if offsets_mhz.is_empty() || offsets_mhz.len() != coupling.len() {
            return bad("offsets and couplings must be non-empty and of equal length");
        }
        if offsets_mhz[0] != 0.0 || (coupling[0] - 1.0).abs() > 1e-12 {
            return bad("first entry must be the co-channel point (offset 0, coupling 1)");
        }
        if offsets_mhz.windows(2).any(|w| w[1] <= w[0]) {
            return bad("offsets must be strictly increasing");
        }
        let check_curve = |c: &[f64]| {
            c.iter().all(|v| *v > 0.0 && *v <= 1.0) && c.windows(2).all(|w| w[1] <= w[0])
        };
        if !check_curve(&coupling) {
            return bad("couplings must lie in (0, 1] and be non-increasing");
        }
        if !(floor > 0.0 && floor <= coupling[coupling.len() - 1]) {
            return bad("floor must be positive and not above the last entry");
        }
        if let Some(sat) = &saturated {
            if sat.len() != coupling.len() || !check_curve(sat) {
                return bad("saturated couplings must match offsets, lie in (0, 1] and be non-increasing");
            }
            if sat.iter().zip(&coupling).any(|(s, c)| s < c) {
                return bad("saturated coupling must not be below the normal coupling");
            }
        }
        Ok(Self {
            direction,
            offsets_mhz,
            coupling,
            saturated,
            floor,
            saturation_threshold_dbm,
        })
    }

    /// Builds a table from per-offset leakage/selectivity pairs (positive dB).
    /// `saturated_acs_db` gives the degraded receiver selectivity, if any.
    pub fn from_aclr_acs(
        direction: AcirDirection,
        offsets_mhz: Vec<f64>,
        aclr_db: &[f64],
        acs_db: &[f64],
        saturated_acs_db: Option<&[f64]>,
        floor_db: f64,
    ) -> Result<Self, RadioError> {
        let compose = |acs: &[f64]| -> Vec<f64> {
            aclr_db
                .iter()
                .zip(acs)
                .map(|(l, s)| if *l == 0.0 && *s == 0.0 { 1.0 } else { compose_acir(*l, *s).min(1.0) })
                .collect()
        };
        let coupling = compose(acs_db);
        let saturated = saturated_acs_db.map(compose);
        Self::new(
            direction,
            offsets_mhz,
            coupling,
            saturated,
            db_to_lin(floor_db),
            default_saturation_dbm(),
        )
    }

    pub fn from_file(file: &AcirTableFile) -> Result<Self, RadioError> {
        let lin = |v: &[f64]| v.iter().map(|d| db_to_lin(*d)).collect::<Vec<_>>();
        Self::new(
            file.direction,
            file.offsets_mhz.clone(),
            lin(&file.acir_db),
            file.saturated_acir_db.as_deref().map(lin),
            db_to_lin(file.floor_db),
            file.saturation_threshold_dbm,
        )
    }

    pub fn to_file(&self) -> AcirTableFile {
        let db = |v: &[f64]| v.iter().map(|l| lin_to_db(*l)).collect::<Vec<_>>();
        AcirTableFile {
            direction: self.direction,
            offsets_mhz: self.offsets_mhz.clone(),
            acir_db: db(&self.coupling),
            saturated_acir_db: self.saturated.as_deref().map(db),
            floor_db: lin_to_db(self.floor),
            saturation_threshold_dbm: self.saturation_threshold_dbm,
        }
    }

    pub fn load_path(path: impl AsRef<std::path::Path>) -> Result<Self, RadioError> {
        let text = std::fs::read_to_string(path)?;
        let file: AcirTableFile = serde_json::from_str(&text)?;
        Self::from_file(&file)
    }

    /// Coupling at offset `delta_f_mhz`. For the vehicle-to-DTT direction the
    /// saturated curve is used when `dtt_power_dbm` exceeds the threshold.
    pub fn acir(&self, delta_f_mhz: f64, dtt_power_dbm: Option<f64>) -> f64 {
        let df = delta_f_mhz.abs();
        let last = self.offsets_mhz.len() - 1;
        if df > self.offsets_mhz[last] {
            return self.floor;
        }
        let idx = self.offsets_mhz.partition_point(|o| *o <= df) - 1;
        match (&self.saturated, dtt_power_dbm) {
            (Some(sat), Some(p)) if p > self.saturation_threshold_dbm => sat[idx],
            _ => self.coupling[idx],
        }
    }
}

pub fn acir(table: &AcirTable, delta_f_mhz: f64, dtt_power_dbm: Option<f64>) -> f64 {
    table.acir(delta_f_mhz, dtt_power_dbm)
}

/// The three coupling tables used by the interference model.
#[derive(Debug, Clone, PartialEq)]
pub struct AcirSet {
    pub v_to_v: AcirTable,
    pub dtt_to_v: AcirTable,
    pub v_to_dtt: AcirTable,
}

impl AcirSet {
    pub fn get(&self, direction: AcirDirection) -> &AcirTable {
        match direction {
            AcirDirection::VToV => &self.v_to_v,
            AcirDirection::DttToV => &self.dtt_to_v,
            AcirDirection::VToDtt => &self.v_to_dtt,
        }
    }

    pub fn replace(&mut self, table: AcirTable) {
        match table.direction {
            AcirDirection::VToV => self.v_to_v = table,
            AcirDirection::DttToV => self.dtt_to_v = table,
            AcirDirection::VToDtt => self.v_to_dtt = table,
        }
    }
}

impl Default for AcirSet {
    /// Shipped defaults. Offsets are centre-to-centre distances; the DTT
    /// tables start their adjacent-channel steps at 9 MHz, where a 10 MHz
    /// vehicular channel stops overlapping an 8 MHz DTT channel.
    fn default() -> Self {
        // 802.11p-like emission mask against an equally wide receiver.
        let v_to_v = AcirTable::from_aclr_acs(
            AcirDirection::VToV,
            vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0, 12.0, 14.0, 16.0, 18.0, 20.0],
            &[0.0, 1.0, 3.0, 6.0, 10.0, 24.0, 28.0, 31.0, 34.0, 37.0, 40.0],
            &[0.0, 30.0, 30.0, 30.0, 30.0, 30.0, 34.0, 38.0, 42.0, 45.0, 48.0],
            None,
            -50.0,
        )
        .expect("default V-V table");

        // Broadcast transmitter with a tight mask, limited by the
        // selectivity of the vehicular receiver.
        let dtt_offsets = vec![0.0, 5.0, 9.0, 11.0, 13.0, 15.0, 17.0, 19.0, 21.0, 23.0, 25.0];
        let dtt_to_v = AcirTable::from_aclr_acs(
            AcirDirection::DttToV,
            dtt_offsets.clone(),
            &[0.0, 8.0, 45.0, 48.0, 51.0, 54.0, 56.0, 58.0, 60.0, 62.0, 64.0],
            &[0.0, 10.0, 22.0, 26.0, 30.0, 33.0, 36.0, 39.0, 42.0, 45.0, 48.0],
            None,
            -60.0,
        )
        .expect("default DTT-V table");

        // Vehicular leakage into a DTT receiver; a strong wanted DTT signal
        // drives the receiver front end into saturation and degrades its
        // selectivity.
        let v_to_dtt = AcirTable::from_aclr_acs(
            AcirDirection::VToDtt,
            dtt_offsets,
            &[0.0, 10.0, 36.0, 40.0, 44.0, 48.0, 51.0, 54.0, 57.0, 60.0, 62.0],
            &[0.0, 30.0, 45.0, 50.0, 54.0, 57.0, 60.0, 62.0, 64.0, 66.0, 68.0],
            Some(&[0.0, 22.0, 32.0, 34.0, 36.0, 38.0, 40.0, 42.0, 44.0, 46.0, 48.0]),
            -70.0,
        )
        .expect("default V-DTT table");

        Self {
            v_to_v,
            dtt_to_v,
            v_to_dtt,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RadioConfig {
    pub tx_power_dbm: f64,
    pub bandwidth_mhz: f64,
    pub noise_figure_db: f64,
    /// Carrier-sense threshold, dBm.
    pub cs_threshold_dbm: f64,
    /// Minimum SINR for a successful reception, dB.
    pub rx_sinr_threshold_db: f64,
    pub cch_freq_mhz: f64,
    pub pathloss: PathlossModel,
    /// Propagation from a vehicle to a roadside DTT receiver.
    pub dtt_pathloss: PathlossModel,
    /// Log-normal shadowing deviation on vehicle-to-vehicle links, dB.
    pub v2v_shadowing_sigma_db: f64,
    /// Air time of one CAM/CACC frame, s.
    pub airtime_s: f64,
}

impl Default for RadioConfig {
    fn default() -> Self {
        Self {
            tx_power_dbm: 23.0,
            bandwidth_mhz: 10.0,
            noise_figure_db: 9.0,
            cs_threshold_dbm: -85.0,
            rx_sinr_threshold_db: 8.0,
            cch_freq_mhz: 5900.0,
            pathloss: PathlossModel::default(),
            // rooftop DTT antennas discriminate against signals from the road
            dtt_pathloss: PathlossModel {
                antenna_gain_db: -16.0,
                ..PathlossModel::default()
            },
            v2v_shadowing_sigma_db: 0.0,
            airtime_s: 0.4e-3,
        }
    }
}

impl RadioConfig {
    pub fn noise_w(&self) -> f64 {
        noise_power(self.bandwidth_mhz, self.noise_figure_db)
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.bandwidth_mhz > 0.0) {
            return Err("bandwidth must be positive".into());
        }
        if !(self.airtime_s > 0.0) {
            return Err("airtime must be positive".into());
        }
        if !self.tx_power_dbm.is_finite() || !self.rx_sinr_threshold_db.is_finite() {
            return Err("tx power and reception threshold must be finite".into());
        }
        Ok(())
    }
}
