//! Core domain types: timing plan, CIR tensor, snapshot metadata and path
//! estimates, plus the on-disk dataset format.

mod dataset;

use num_complex::{Complex32, Complex64};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub use dataset::{read_dataset, write_dataset, Dataset};

/// Relative tolerance for the equality-type timing and resolution checks.
const REL_TOL: f64 = 1e-6;

/// TDM switching schedule of the sounder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingPlan {
    /// Tx dwell duration (s).
    pub t_t: f64,
    /// Rx switching interval (s).
    pub t_r: f64,
    /// Probing cycle time (s).
    pub t_cy: f64,
    /// Guard interval (s).
    pub t_g: f64,
    /// Per-Rx-element detection duration (s).
    pub t_sc: f64,
    /// Pulse period (s).
    pub t_s: f64,
    pub m_tx: usize,
    pub n_rx: usize,
}

impl TimingPlan {
    /// Tightest schedule for the given element counts: every Rx port gets one
    /// detection slot per Tx dwell, followed by one guard interval per cycle.
    pub fn tight(m_tx: usize, n_rx: usize, t_sc: f64) -> Self {
        let t_t = n_rx as f64 * t_sc;
        TimingPlan {
            t_t,
            t_r: t_sc,
            t_cy: m_tx as f64 * t_t + t_sc,
            t_g: t_sc,
            t_sc,
            t_s: t_sc,
            m_tx,
            n_rx,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = [self.t_t, self.t_r, self.t_cy, self.t_g, self.t_sc, self.t_s];
        if d.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(invalid("timing durations must be finite and > 0"));
        }
        if self.m_tx == 0 || self.n_rx == 0 {
            return Err(invalid("timing element counts must be >= 1"));
        }
        let min_cycle = self.m_tx as f64 * self.t_t;
        if self.t_cy < min_cycle * (1.0 - REL_TOL) {
            return Err(invalid(format!("t_cy {} < m_tx*t_t {}", self.t_cy, min_cycle)));
        }
        let dwell = self.n_rx as f64 * self.t_sc;
        if (self.t_t - dwell).abs() > REL_TOL * dwell {
            return Err(invalid(format!("t_t {} != n_rx*t_sc {}", self.t_t, dwell)));
        }
        if self.t_r < self.t_sc * (1.0 - REL_TOL) {
            return Err(invalid(format!("t_r {} < t_sc {}", self.t_r, self.t_sc)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LosState {
    #[serde(rename = "LOS")]
    Los,
    #[serde(rename = "NLOS")]
    Nlos,
}

impl LosState {
    pub fn as_str(&self) -> &'static str {
        match self {
            LosState::Los => "LOS",
            LosState::Nlos => "NLOS",
        }
    }
}

impl std::str::FromStr for LosState {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "los" => Ok(LosState::Los),
            "nlos" => Ok(LosState::Nlos),
            _ => Err(invalid(format!("unknown LOS state '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotMeta {
    pub route_id: String,
    pub point_id: String,
    /// 3-D Tx-Rx separation (m).
    pub t_r_distance_m: f64,
    pub los_state: LosState,
    /// Total transmit power (dBm).
    pub tx_power_dbm: f64,
}

impl SnapshotMeta {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_r_distance_m.is_finite() && self.t_r_distance_m > 0.0) {
            return Err(invalid(format!(
                "snapshot {}/{}: distance must be > 0",
                self.route_id, self.point_id
            )));
        }
        if !self.tx_power_dbm.is_finite() {
            return Err(invalid("tx_power_dbm must be finite"));
        }
        Ok(())
    }
}

/// One multipath component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathEstimate {
    pub delay_s: f64,
    pub aod_az_deg: f64,
    pub aod_el_deg: f64,
    pub amplitude: Complex64,
    /// 20·log10|amplitude|.
    pub power_db: f64,
}

impl PathEstimate {
    pub fn new(delay_s: f64, aod_az_deg: f64, aod_el_deg: f64, amplitude: Complex64) -> Self {
        PathEstimate {
            delay_s,
            aod_az_deg: wrap_azimuth(aod_az_deg),
            aod_el_deg,
            amplitude,
            power_db: 20.0 * amplitude.norm().log10(),
        }
    }

    pub fn power_lin(&self) -> f64 {
        self.amplitude.norm_sqr()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delay_s >= 0.0) {
            return Err(invalid("path delay must be >= 0"));
        }
        if !(-180.0..180.0).contains(&self.aod_az_deg) {
            return Err(invalid("azimuth outside [-180, 180)"));
        }
        if !(-90.0..=90.0).contains(&self.aod_el_deg) {
            return Err(invalid("elevation outside [-90, 90]"));
        }
        Ok(())
    }
}

/// Maps an azimuth into [-180, 180).
pub fn wrap_azimuth(az: f64) -> f64 {
    let w = (az + 180.0).rem_euclid(360.0) - 180.0;
    if w >= 180.0 {
        -180.0
    } else {
        w
    }
}

/// Complex channel impulse responses laid out [snapshot][rx][tx][delay].
#[derive(Debug, Clone, PartialEq)]
pub struct CirTensor {
    pub data: Vec<Complex32>,
    pub n_snap: usize,
    pub n_rx: usize,
    pub n_tx: usize,
    pub n_delay: usize,
    /// Seconds per delay bin.
    pub delay_resolution: f64,
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
}

impl CirTensor {
    pub fn zeros(
        n_snap: usize,
        n_rx: usize,
        n_tx: usize,
        n_delay: usize,
        carrier_hz: f64,
        bandwidth_hz: f64,
    ) -> Self {
        CirTensor {
            data: vec![Complex32::new(0.0, 0.0); n_snap * n_rx * n_tx * n_delay],
            n_snap,
            n_rx,
            n_tx,
            n_delay,
            delay_resolution: 1.0 / bandwidth_hz,
            carrier_hz,
            bandwidth_hz,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_snap == 0 || self.n_rx == 0 || self.n_tx == 0 || self.n_delay == 0 {
            return Err(invalid("all tensor dimensions must be >= 1"));
        }
        if self.data.len() != self.n_snap * self.n_rx * self.n_tx * self.n_delay {
            return Err(crate::Error::DimensionMismatch(format!(
                "data length {} != {}x{}x{}x{}",
                self.data.len(),
                self.n_snap,
                self.n_rx,
                self.n_tx,
                self.n_delay
            )));
        }
        if !(self.carrier_hz > 0.0 && self.bandwidth_hz > 0.0) {
            return Err(invalid("carrier and bandwidth must be > 0"));
        }
        let expect = 1.0 / self.bandwidth_hz;
        if !((self.delay_resolution - expect).abs() <= REL_TOL * expect) {
            return Err(invalid(format!(
                "delay_resolution {} != 1/bandwidth {}",
                self.delay_resolution, expect
            )));
        }
        if let Some(i) = self.data.iter().position(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(crate::Error::NonFinite { offset: 8 * i as u64 });
        }
        Ok(())
    }

    pub fn snapshot_len(&self) -> usize {
        self.n_rx * self.n_tx * self.n_delay
    }

    pub fn index(&self, s: usize, r: usize, t: usize, d: usize) -> usize {
        ((s * self.n_rx + r) * self.n_tx + t) * self.n_delay + d
    }

    pub fn at(&self, s: usize, r: usize, t: usize, d: usize) -> Complex32 {
        self.data[self.index(s, r, t, d)]
    }

    pub fn link(&self, s: usize, r: usize, t: usize) -> &[Complex32] {
        let i = self.index(s, r, t, 0);
        &self.data[i..i + self.n_delay]
    }

    pub fn snapshot(&self, s: usize) -> Snapshot<'_> {
        let n = self.snapshot_len();
        Snapshot {
            data: &self.data[s * n..(s + 1) * n],
            n_rx: self.n_rx,
            n_tx: self.n_tx,
            n_delay: self.n_delay,
            delay_resolution: self.delay_resolution,
        }
    }

    /// Builds a tensor with the same axes metadata from per-snapshot buffers
    /// laid out [rx][tx][delay].
    pub fn with_snapshots(&self, n_tx: usize, snaps: Vec<Vec<Complex32>>) -> Result<Self> {
        let n_snap = snaps.len();
        let data: Vec<Complex32> = snaps.into_iter().flatten().collect();
        let out = CirTensor {
            data,
            n_snap,
            n_rx: self.n_rx,
            n_tx,
            n_delay: self.n_delay,
            delay_resolution: self.delay_resolution,
            carrier_hz: self.carrier_hz,
            bandwidth_hz: self.bandwidth_hz,
        };
        out.validate()?;
        Ok(out)
    }

    /// Total energy Σ|h|² of one snapshot, accumulated in f64.
    pub fn snapshot_energy(&self, s: usize) -> f64 {
        self.snapshot(s).energy()
    }
}

/// Borrowed single-snapshot view, layout [rx][tx][delay].
#[derive(Debug, Clone, Copy)]
pub struct Snapshot<'a> {
    pub data: &'a [Complex32],
    pub n_rx: usize,
    pub n_tx: usize,
    pub n_delay: usize,
    pub delay_resolution: f64,
}

impl<'a> Snapshot<'a> {
    pub fn link(&self, r: usize, t: usize) -> &'a [Complex32] {
        let i = (r * self.n_tx + t) * self.n_delay;
        &self.data[i..i + self.n_delay]
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|z| (z.re as f64).powi(2) + (z.im as f64).powi(2)).sum()
    }

    pub fn to_c64(&self) -> Vec<Complex64> {
        self.data.iter().map(|z| Complex64::new(z.re as f64, z.im as f64)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tight_plan_is_valid() {
        let p = TimingPlan::tight(128, 40, 2.56e-6);
        p.validate().unwrap();
        assert!((p.t_t - 40.0 * 2.56e-6).abs() < 1e-18);
    }

    #[test]
    fn plan_rejects_short_cycle() {
        let mut p = TimingPlan::tight(4, 2, 1e-6);
        p.t_cy = 3.0 * p.t_t;
        assert!(p.validate().is_err());
    }

    #[test]
    fn plan_rejects_short_rx_interval() {
        let mut p = TimingPlan::tight(4, 2, 1e-6);
        p.t_r = 0.5e-6;
        assert!(p.validate().is_err());
    }

    #[test]
    fn plan_rejects_dwell_mismatch_and_nonpositive() {
        let mut p = TimingPlan::tight(4, 2, 1e-6);
        p.t_t *= 1.5;
        p.t_cy = 100.0;
        assert!(p.validate().is_err());
        let mut q = TimingPlan::tight(4, 2, 1e-6);
        q.t_g = 0.0;
        assert!(q.validate().is_err());
    }

    #[test]
    fn tensor_indexing_row_major() {
        let mut t = CirTensor::zeros(2, 3, 4, 5, 8e9, 400e6);
        let i = t.index(1, 2, 3, 4);
        assert_eq!(i, t.data.len() - 1);
        let i = t.index(1, 0, 2, 3);
        t.data[i] = Complex32::new(1.0, -1.0);
        assert_eq!(t.snapshot(1).link(0, 2)[3], Complex32::new(1.0, -1.0));
        assert_eq!(t.link(1, 0, 2)[3], Complex32::new(1.0, -1.0));
    }

    #[test]
    fn tensor_validation() {
        let mut t = CirTensor::zeros(1, 1, 1, 4, 8e9, 400e6);
        t.validate().unwrap();
        t.delay_resolution *= 1.01;
        assert!(t.validate().is_err());
        let mut u = CirTensor::zeros(1, 1, 1, 4, 8e9, 400e6);
        u.data[2] = Complex32::new(f32::NAN, 0.0);
        assert!(matches!(u.validate(), Err(crate::Error::NonFinite { offset: 16 })));
    }

    #[test]
    fn azimuth_wrapping() {
        assert_eq!(wrap_azimuth(180.0), -180.0);
        assert_eq!(wrap_azimuth(-180.0), -180.0);
        assert_eq!(wrap_azimuth(190.0), -170.0);
        assert_eq!(wrap_azimuth(45.0), 45.0);
        assert_eq!(wrap_azimuth(-540.0), -180.0);
    }

    #[test]
    fn path_power_db() {
        let p = PathEstimate::new(0.0, 0.0, 0.0, Complex64::new(0.0, 0.5));
        assert!((p.power_db + 6.0206).abs() < 1e-4);
        p.validate().unwrap();
    }
}
