//! Large-scale statistics: path loss and close-in model fitting, RMS delay
//! and angular spreads, lognormal parameters and empirical CDFs.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{CirTensor, LosState, PathEstimate};
use crate::error::{invalid, Error, Result};
use crate::units::{lin_to_db, wavelength};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CiFit {
    /// Free-space loss at d₀ = 1 m (dB); fixed, not fitted.
    pub pl_d0_db: f64,
    pub ple: f64,
    pub sigma_db: f64,
    pub n_points: usize,
    pub los_state: LosState,
}

impl CiFit {
    pub fn predict(&self, d_m: f64) -> f64 {
        self.pl_d0_db + 10.0 * self.ple * d_m.log10()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpreadStats {
    pub values: Vec<f64>,
    pub log_mu: f64,
    pub log_sigma: f64,
    pub unit: f64,
    /// Values dropped before fitting (e.g. single-bin profiles).
    pub excluded: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AngleAxis {
    Azimuth,
    Elevation,
}

/// Mean per-link energy Σ_d|h|², averaged over links and the given snapshots.
pub fn mean_link_energy(cir: &CirTensor, snaps: &[usize]) -> Result<f64> {
    if snaps.is_empty() || snaps.iter().any(|&s| s >= cir.n_snap) {
        return Err(Error::EmptySelection);
    }
    let links = (cir.n_rx * cir.n_tx) as f64;
    let total: f64 = snaps.iter().map(|&s| cir.snapshot_energy(s) / links).sum();
    Ok(total / snaps.len() as f64)
}

/// Channel loss from the snapshot-averaged per-link energy.
///
/// Sample power |h|² is read as received power in mW at the stated transmit
/// power, so PL = P_t + G_t + G_r − 10·log10(mean energy).
pub fn path_loss(
    cir: &CirTensor,
    snaps: &[usize],
    tx_power_dbm: f64,
    g_t_dbi: f64,
    g_r_dbi: f64,
) -> Result<f64> {
    path_loss_from_energies(
        &snaps
            .iter()
            .map(|&s| {
                if s >= cir.n_snap {
                    Err(Error::EmptySelection)
                } else {
                    Ok(cir.snapshot_energy(s) / (cir.n_rx * cir.n_tx) as f64)
                }
            })
            .collect::<Result<Vec<_>>>()?,
        tx_power_dbm,
        g_t_dbi,
        g_r_dbi,
    )
}

pub fn path_loss_from_energies(
    energies: &[f64],
    tx_power_dbm: f64,
    g_t_dbi: f64,
    g_r_dbi: f64,
) -> Result<f64> {
    if energies.is_empty() {
        return Err(Error::EmptySelection);
    }
    let mean = energies.iter().sum::<f64>() / energies.len() as f64;
    if !(mean > 0.0) {
        return Err(Error::ZeroEnergy);
    }
    Ok(tx_power_dbm + g_t_dbi + g_r_dbi - lin_to_db(mean))
}

/// Free-space path loss at d₀ = 1 m, 20·log10(4π·d₀/λ).
pub fn fspl_at_reference(carrier_hz: f64) -> f64 {
    20.0 * (4.0 * std::f64::consts::PI / wavelength(carrier_hz)).log10()
}

/// Closed-form least-squares CI fit with the intercept pinned to FSPL(1 m).
pub fn fit_ci(points: &[(f64, f64)], carrier_hz: f64, los_state: LosState) -> Result<CiFit> {
    if points.len() < 2 {
        return Err(invalid("CI fit needs at least 2 points"));
    }
    if points.iter().any(|&(d, pl)| !(d >= 1.0) || !pl.is_finite()) {
        return Err(invalid("CI fit needs finite points with d >= 1 m"));
    }
    let d0 = points[0].0;
    if points.iter().all(|&(d, _)| d == d0) {
        return Err(Error::FitDegenerate("all distances equal".into()));
    }
    let pl0 = fspl_at_reference(carrier_hz);
    let (mut num, mut den) = (0.0, 0.0);
    for &(d, pl) in points {
        let x = 10.0 * d.log10();
        num += (pl - pl0) * x;
        den += x * x;
    }
    let ple = num / den;
    let sse: f64 = points
        .iter()
        .map(|&(d, pl)| (pl - pl0 - 10.0 * ple * d.log10()).powi(2))
        .sum();
    Ok(CiFit {
        pl_d0_db: pl0,
        ple,
        sigma_db: (sse / points.len() as f64).sqrt(),
        n_points: points.len(),
        los_state,
    })
}

fn weighted_moments(x: impl Iterator<Item = (f64, f64)>) -> Option<(f64, f64)> {
    let (mut sp, mut s1, mut s2) = (0.0, 0.0, 0.0);
    let pts: Vec<(f64, f64)> = x.filter(|&(_, p)| p > 0.0).collect();
    for &(v, p) in &pts {
        sp += p;
        s1 += p * v;
    }
    if !(sp > 0.0) {
        return None;
    }
    if pts.len() == 1 {
        return Some((pts[0].0, 0.0));
    }
    let mean = s1 / sp;
    for &(v, p) in &pts {
        s2 += p * (v - mean).powi(2);
    }
    Some((mean, (s2 / sp).max(0.0).sqrt()))
}

/// Power-weighted RMS spread of `delays` (any unit) with weights `powers`.
pub fn rms_spread(delays: &[f64], powers: &[f64]) -> Result<f64> {
    weighted_moments(delays.iter().copied().zip(powers.iter().copied()))
        .map(|m| m.1)
        .ok_or(Error::ZeroEnergy)
}

/// RMS delay spread (s) of a (thresholded) PDP.
pub fn rms_delay_spread(pdp: &crate::sounding::Pdp) -> Result<f64> {
    weighted_moments(pdp.delays().zip(pdp.power.iter().copied()))
        .map(|m| m.1)
        .ok_or(Error::ZeroEnergy)
}

/// Power-weighted RMS angle spread (deg) after re-centring on the circular mean.
pub fn rms_angle_spread(paths: &[PathEstimate], axis: AngleAxis) -> Result<f64> {
    if paths.is_empty() {
        return Err(Error::EmptySelection);
    }
    let (angles, powers): (Vec<f64>, Vec<f64>) = paths
        .iter()
        .map(|p| {
            let a = match axis {
                AngleAxis::Azimuth => p.aod_az_deg,
                AngleAxis::Elevation => p.aod_el_deg,
            };
            (a, p.power_lin())
        })
        .unzip();
    rms_angle_spread_raw(&angles, &powers)
}

pub fn rms_angle_spread_raw(angles_deg: &[f64], powers: &[f64]) -> Result<f64> {
    if !powers.iter().any(|&p| p > 0.0) {
        return Err(Error::ZeroEnergy);
    }
    let centred = recentre(angles_deg, powers);
    rms_spread(&centred, powers)
}

/// Maps angles into the 360°-wide interval centred on the power-weighted
/// circular mean.
pub fn recentre(angles_deg: &[f64], powers: &[f64]) -> Vec<f64> {
    let s: Complex64 = angles_deg
        .iter()
        .zip(powers)
        .map(|(&a, &p)| Complex64::from_polar(p.max(0.0), a.to_radians()))
        .sum();
    let mu = s.arg().to_degrees();
    angles_deg
        .iter()
        .map(|&a| mu + (a - mu + 180.0).rem_euclid(360.0) - 180.0)
        .collect()
}

/// log10 mean and population standard deviation of `values / unit`.
pub fn lognormal_stats(values: &[f64], unit: f64) -> Result<SpreadStats> {
    if values.is_empty() {
        return Err(Error::EmptySelection);
    }
    if let Some(v) = values.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
        return Err(invalid(format!("lognormal fit needs positive values, got {v}")));
    }
    let logs: Vec<f64> = values.iter().map(|v| (v / unit).log10()).collect();
    let n = logs.len() as f64;
    let mu = logs.iter().sum::<f64>() / n;
    let var = logs.iter().map(|l| (l - mu).powi(2)).sum::<f64>() / n;
    Ok(SpreadStats {
        values: values.to_vec(),
        log_mu: mu,
        log_sigma: var.sqrt(),
        unit,
        excluded: 0,
    })
}

/// Sorted (value, i/n) pairs.
pub fn empirical_cdf(values: &[f64]) -> Result<Vec<(f64, f64)>> {
    if values.is_empty() {
        return Err(Error::EmptySelection);
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len() as f64;
    Ok(v.into_iter()
        .enumerate()
        .map(|(i, x)| (x, (i + 1) as f64 / n))
        .collect())
}

/// Value at probability `p` by linear interpolation between order statistics
/// at rank (n−1)·p.
pub fn percentile(cdf: &[(f64, f64)], p: f64) -> Result<f64> {
    if cdf.is_empty() {
        return Err(Error::EmptySelection);
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(invalid("percentile probability must lie in [0, 1]"));
    }
    let rank = (cdf.len() - 1) as f64 * p;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let w = rank - lo as f64;
    Ok(cdf[lo].0 + w * (cdf[hi].0 - cdf[lo].0))
}

pub fn percentile_of(values: &[f64], p: f64) -> Result<f64> {
    percentile(&empirical_cdf(values)?, p)
}

pub fn median(values: &[f64]) -> Result<f64> {
    percentile_of(values, 0.5)
}
