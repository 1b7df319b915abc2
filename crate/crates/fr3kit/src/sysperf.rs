//! System-level evaluation under the equal-aperture constraint: Friis coverage
//! bound, non-coherent combining, dominant-eigenmode transmission, theoretical
//! and measured-channel spectral efficiency, and cross-band gap extraction.
//!
//! Channel samples are read as received power in mW at the dataset's transmit
//! power; every metric here first rescales them to unit transmit power.

use nalgebra::{Cholesky, DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::array::{aperture, extract_dataset, ArraySpec, TopologySelection};
use crate::channel::{Dataset, Snapshot};
use crate::error::{invalid, Error, Result};
use crate::stats::{empirical_cdf, median, percentile};
use crate::synthgen::substream;
use crate::units::{db_to_lin, dbm_to_mw, lin_to_db, mw_to_dbm, wavelength};

pub const DEFAULT_SUBCARRIERS: usize = 64;
pub const DEFAULT_MC_REALIZATIONS: usize = 500;
pub const OUTAGE_LEVEL: f64 = 0.15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkBudget {
    pub p_t_dbm: f64,
    pub g_r_dbi: f64,
    pub d_prop_m: f64,
    pub carrier_hz: f64,
    pub array: ArraySpec,
    /// Fractional element count overriding the array's integer count.
    #[serde(default)]
    pub element_count: Option<f64>,
}

impl LinkBudget {
    pub fn elements(&self) -> f64 {
        self.element_count.unwrap_or(self.array.n_elements() as f64)
    }
}

/// Friis received power (dBm) with array gain N·G_element.
pub fn friis_received_power(b: &LinkBudget) -> Result<f64> {
    if !(b.d_prop_m > 0.0) {
        return Err(invalid("propagation distance must be > 0"));
    }
    if !b.array.is_half_wavelength() {
        return Err(invalid("Friis array gain assumes half-wavelength spacing"));
    }
    let lambda = wavelength(b.carrier_hz);
    let g_t = 10.0 * b.elements().log10() + b.array.element_gain_dbi;
    Ok(b.p_t_dbm + g_t + b.g_r_dbi + 20.0 * (lambda / (4.0 * std::f64::consts::PI * b.d_prop_m)).log10())
}

/// Carrier-free form: P_t·G_el·G_r·A / (4π²d²), with A the physical aperture.
pub fn friis_fixed_aperture(p_t_dbm: f64, area_m2: f64, g_el_dbi: f64, g_r_dbi: f64, d_m: f64) -> f64 {
    let pi = std::f64::consts::PI;
    p_t_dbm + g_el_dbi + g_r_dbi + lin_to_db(area_m2 / (4.0 * pi * pi * d_m * d_m))
}

/// Aperture of the budget's array (fractional count honoured).
pub fn budget_aperture(b: &LinkBudget) -> f64 {
    aperture(&b.array) * b.elements() / b.array.n_elements() as f64
}

fn tx_scale(tx_power_dbm: f64) -> f64 {
    1.0 / dbm_to_mw(tx_power_dbm)
}

/// (P_tot/N_tx)·Σ_t Σ_r Σ_d |h|², in the unit of `p_t_total`.
pub fn noncoherent_power(snap: &Snapshot<'_>, p_t_total: f64, ref_tx_power_dbm: f64) -> f64 {
    p_t_total / snap.n_tx as f64 * snap.energy() * tx_scale(ref_tx_power_dbm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SubcarrierPolicy {
    /// K subcarriers from the DTFT across delay, values averaged.
    Wideband(usize),
    /// One delay tap as a narrowband matrix.
    Tap(usize),
}

/// Per-subcarrier n_rx×n_tx matrices at unit transmit power.
pub fn channel_matrices(
    snap: &Snapshot<'_>,
    policy: SubcarrierPolicy,
    ref_tx_power_dbm: f64,
) -> Result<Vec<DMatrix<Complex64>>> {
    let s = tx_scale(ref_tx_power_dbm).sqrt();
    let (n_rx, n_tx) = (snap.n_rx, snap.n_tx);
    match policy {
        SubcarrierPolicy::Tap(d) => {
            if d >= snap.n_delay {
                return Err(invalid("tap index beyond the delay window"));
            }
            Ok(vec![DMatrix::from_fn(n_rx, n_tx, |r, t| {
                let z = snap.link(r, t)[d];
                Complex64::new(z.re as f64, z.im as f64) * s
            })])
        }
        SubcarrierPolicy::Wideband(k) => {
            if k == 0 {
                return Err(invalid("subcarrier count must be >= 1"));
            }
            let fft = FftPlanner::<f64>::new().plan_fft_forward(k);
            let mut mats = vec![DMatrix::zeros(n_rx, n_tx); k];
            let mut buf = vec![Complex64::new(0.0, 0.0); k];
            for r in 0..n_rx {
                for t in 0..n_tx {
                    buf.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
                    for (d, z) in snap.link(r, t).iter().enumerate() {
                        buf[d % k] += Complex64::new(z.re as f64, z.im as f64);
                    }
                    fft.process(&mut buf);
                    for (m, z) in mats.iter_mut().zip(&buf) {
                        m[(r, t)] = z * s;
                    }
                }
            }
            Ok(mats)
        }
    }
}

/// Largest squared singular value.
pub fn sigma_max_sq(h: &DMatrix<Complex64>) -> f64 {
    let g = if h.nrows() <= h.ncols() { h * h.adjoint() } else { h.adjoint() * h };
    SymmetricEigen::new(g).eigenvalues.iter().cloned().fold(0.0, f64::max)
}

/// p_t·σ_max(H)², averaged over subcarriers.
pub fn det_beamforming_power(
    snap: &Snapshot<'_>,
    p_t_total: f64,
    policy: SubcarrierPolicy,
    ref_tx_power_dbm: f64,
) -> Result<f64> {
    let mats = channel_matrices(snap, policy, ref_tx_power_dbm)?;
    if mats.iter().all(|m| m.iter().all(|z| z.norm_sqr() == 0.0)) {
        return Err(Error::ZeroEnergy);
    }
    Ok(p_t_total * mats.iter().map(sigma_max_sq).sum::<f64>() / mats.len() as f64)
}

/// Received power for explicit unit-norm weights, averaged over subcarriers.
pub fn weighted_power(mats: &[DMatrix<Complex64>], w_r: &[Complex64], w_t: &[Complex64], p_t: f64) -> f64 {
    let wr = nalgebra::DVector::from_column_slice(w_r);
    let wt = nalgebra::DVector::from_column_slice(w_t);
    let total: f64 = mats
        .iter()
        .map(|h| (wr.adjoint() * h * &wt)[(0, 0)].norm_sqr())
        .sum();
    p_t * total / mats.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SeConfig {
    /// Reference SNR ρ (dB): i.i.d. SNR in theory mode, transmit SNR for
    /// measured channels.
    pub rho_db: f64,
    pub n_r: usize,
    pub normalize_channel: bool,
    pub subcarriers: usize,
    pub mc_realizations: usize,
    pub seed: u64,
}

impl Default for SeConfig {
    fn default() -> Self {
        SeConfig {
            rho_db: 20.0,
            n_r: 40,
            normalize_channel: false,
            subcarriers: DEFAULT_SUBCARRIERS,
            mc_realizations: DEFAULT_MC_REALIZATIONS,
            seed: 0,
        }
    }
}

impl SeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_r == 0 || self.subcarriers == 0 || self.mc_realizations == 0 {
            return Err(invalid("n_r, subcarriers and mc_realizations must be >= 1"));
        }
        if !self.rho_db.is_finite() {
            return Err(invalid("rho_db must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeStats {
    pub n_t: usize,
    pub mean: f64,
    pub std: f64,
}

/// log2 det(I + c·G) for a Hermitian positive semidefinite Gram matrix G.
pub fn log2_det_identity_plus(g: &DMatrix<Complex64>, c: f64) -> f64 {
    let n = g.nrows();
    let m = DMatrix::<Complex64>::identity(n, n) + g * Complex64::new(c, 0.0);
    match Cholesky::new(m.clone()) {
        Some(ch) => 2.0 * ch.l().diagonal().iter().map(|z| z.re.ln()).sum::<f64>() / std::f64::consts::LN_2,
        None => SymmetricEigen::new(m)
            .eigenvalues
            .iter()
            .map(|v| v.max(f64::MIN_POSITIVE).log2())
            .sum(),
    }
}

/// SE = log2 det(I + (ρ/N_t)·H·Hᴴ) for one matrix.
pub fn se_of_matrix(h: &DMatrix<Complex64>, rho_lin: f64) -> f64 {
    let c = rho_lin / h.ncols() as f64;
    if h.nrows() <= h.ncols() {
        log2_det_identity_plus(&(h * h.adjoint()), c)
    } else {
        log2_det_identity_plus(&(h.adjoint() * h), c)
    }
}

/// Monte-Carlo SE for N_t = 1..=n_t_max with common random numbers: the
/// channel for N_t is the first N_t columns of one n_r×n_t_max draw.
pub fn theoretical_se_sweep(n_t_max: usize, n_r: usize, rho_db: f64, mc: usize, seed: u64) -> Result<Vec<SeStats>> {
    if n_t_max == 0 || n_r == 0 || mc == 0 {
        return Err(invalid("counts must be >= 1"));
    }
    let rho = db_to_lin(rho_db);
    let per_real: Vec<Vec<f64>> = (0..mc)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, i as u64);
            let mut gram = DMatrix::<Complex64>::zeros(n_r, n_r);
            let mut col = vec![Complex64::new(0.0, 0.0); n_r];
            let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
            (1..=n_t_max)
                .map(|n_t| {
                    for c in col.iter_mut() {
                        let re: f64 = rng.sample(StandardNormal);
                        let im: f64 = rng.sample(StandardNormal);
                        *c = Complex64::new(re * inv_sqrt2, im * inv_sqrt2);
                    }
                    for a in 0..n_r {
                        for b in 0..n_r {
                            gram[(a, b)] += col[a] * col[b].conj();
                        }
                    }
                    log2_det_identity_plus(&gram, rho / n_t as f64)
                })
                .collect()
        })
        .collect();
    Ok((0..n_t_max)
        .map(|j| {
            let vals: Vec<f64> = per_real.iter().map(|v| v[j]).collect();
            let mean = vals.iter().sum::<f64>() / mc as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / mc as f64;
            SeStats { n_t: j + 1, mean, std: var.sqrt() }
        })
        .collect())
}

/// Mean and spread of the i.i.d. Rayleigh SE for one N_t.
pub fn theoretical_se(n_t: usize, n_r: usize, rho_db: f64, mc: usize, seed: u64) -> Result<SeStats> {
    Ok(*theoretical_se_sweep(n_t, n_r, rho_db, mc, seed)?.last().unwrap())
}

/// SE of a measured snapshot averaged over subcarriers, at transmit SNR
/// `cfg.rho_db` and without channel normalisation unless configured.
pub fn empirical_se(snap: &Snapshot<'_>, ref_tx_power_dbm: f64, cfg: &SeConfig) -> Result<f64> {
    cfg.validate()?;
    let mats = channel_matrices(snap, SubcarrierPolicy::Wideband(cfg.subcarriers), ref_tx_power_dbm)?;
    let rho = db_to_lin(cfg.rho_db);
    let mut total = 0.0;
    let mut any = false;
    for h in &mats {
        let e: f64 = h.iter().map(|z| z.norm_sqr()).sum();
        if e > 0.0 {
            any = true;
        }
        let h = if cfg.normalize_channel && e > 0.0 {
            h * Complex64::new(((h.nrows() * h.ncols()) as f64 / e).sqrt(), 0.0)
        } else {
            h.clone()
        };
        total += se_of_matrix(&h, rho);
    }
    if !any {
        return Err(Error::ZeroEnergy);
    }
    Ok(total / mats.len() as f64)
}

/// Mean per-link channel gain Σ_d|h|² at unit transmit power.
pub fn mean_link_gain(snap: &Snapshot<'_>, ref_tx_power_dbm: f64) -> f64 {
    snap.energy() * tx_scale(ref_tx_power_dbm) / (snap.n_rx * snap.n_tx) as f64
}

/// Transmit SNR (dB) that puts the median per-link receive SNR at `target_db`.
pub fn transmit_snr_for(ds: &Dataset, target_db: f64) -> Result<f64> {
    let gains: Vec<f64> = (0..ds.tensor.n_snap)
        .map(|s| mean_link_gain(&ds.tensor.snapshot(s), ds.tx_power_dbm))
        .collect();
    let m = median(&gains)?;
    if !(m > 0.0) {
        return Err(Error::ZeroEnergy);
    }
    Ok(target_db - lin_to_db(m))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReportConfig {
    /// Total transmit power used for the coverage metrics (dBm).
    pub p_t_dbm: f64,
    pub subcarriers: usize,
    /// Fixed transmit SNR; derived from the first dataset when absent.
    pub rho_tx_db: Option<f64>,
    pub target_rx_snr_db: f64,
    pub outage: f64,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            p_t_dbm: 30.0,
            subcarriers: DEFAULT_SUBCARRIERS,
            rho_tx_db: None,
            target_rx_snr_db: 20.0,
            outage: OUTAGE_LEVEL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandMetrics {
    pub label: String,
    pub carrier_hz: f64,
    pub n_tx: usize,
    pub noncoherent_dbm: Vec<f64>,
    pub det_dbm: Vec<f64>,
    pub se: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapSummary {
    pub reference: String,
    pub other: String,
    /// Reference minus other at the outage level (dB).
    pub gap_noncoherent_15pct_db: f64,
    pub gap_noncoherent_median_db: f64,
    pub gap_det_15pct_db: f64,
    pub gap_det_median_db: f64,
    pub se_median_reference: f64,
    pub se_median_other: f64,
    pub crossover_noncoherent_dbm: Option<f64>,
    pub crossover_det_dbm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandReport {
    pub bands: Vec<BandMetrics>,
    pub gaps: Vec<GapSummary>,
    pub rho_tx_db: f64,
    pub p_t_dbm: f64,
    pub outage: f64,
}

/// Noncoherent, DET and SE metrics for every snapshot of a dataset.
pub fn band_metrics(label: &str, ds: &Dataset, cfg: &ReportConfig, rho_tx_db: f64) -> Result<BandMetrics> {
    if ds.tensor.n_snap == 0 {
        return Err(Error::EmptySelection);
    }
    let p_t = dbm_to_mw(cfg.p_t_dbm);
    let se_cfg = SeConfig {
        rho_db: rho_tx_db,
        n_r: ds.tensor.n_rx,
        subcarriers: cfg.subcarriers,
        ..SeConfig::default()
    };
    let rows: Vec<(f64, f64, f64)> = (0..ds.tensor.n_snap)
        .into_par_iter()
        .map(|s| {
            let snap = ds.tensor.snapshot(s);
            let nc = noncoherent_power(&snap, p_t, ds.tx_power_dbm);
            let det = det_beamforming_power(&snap, p_t, SubcarrierPolicy::Wideband(cfg.subcarriers), ds.tx_power_dbm)?;
            let se = empirical_se(&snap, ds.tx_power_dbm, &se_cfg)?;
            Ok((mw_to_dbm(nc), mw_to_dbm(det), se))
        })
        .collect::<Result<_>>()?;
    Ok(BandMetrics {
        label: label.to_string(),
        carrier_hz: ds.tensor.carrier_hz,
        n_tx: ds.tensor.n_tx,
        noncoherent_dbm: rows.iter().map(|r| r.0).collect(),
        det_dbm: rows.iter().map(|r| r.1).collect(),
        se: rows.iter().map(|r| r.2).collect(),
    })
}

/// Level at which two empirical distributions cross, if they do.
///
/// Quantile functions are compared on a probability grid; a crossover is a
/// sign change of their difference beyond `tol`.
pub fn crossover(a: &[f64], b: &[f64], tol: f64) -> Result<Option<f64>> {
    let ca = empirical_cdf(a)?;
    let cb = empirical_cdf(b)?;
    let grid: Vec<f64> = (1..100).map(|i| i as f64 / 100.0).collect();
    let mut prev: Option<(f64, f64, f64)> = None;
    for &p in &grid {
        let qa = percentile(&ca, p)?;
        let qb = percentile(&cb, p)?;
        let d = qa - qb;
        if d.abs() <= tol {
            continue;
        }
        if let Some((pd, pqa, pqb)) = prev {
            if pd.signum() != d.signum() {
                // linear interpolation of the zero of the difference
                let w = pd / (pd - d);
                let lvl_prev = 0.5 * (pqa + pqb);
                let lvl = 0.5 * (qa + qb);
                return Ok(Some(lvl_prev + w * (lvl - lvl_prev)));
            }
        }
        prev = Some((d, qa, qb));
    }
    Ok(None)
}

pub fn gap_summary(a: &BandMetrics, b: &BandMetrics, outage: f64) -> Result<GapSummary> {
    let q = |v: &[f64], p: f64| percentile(&empirical_cdf(v)?, p);
    Ok(GapSummary {
        reference: a.label.clone(),
        other: b.label.clone(),
        gap_noncoherent_15pct_db: q(&a.noncoherent_dbm, outage)? - q(&b.noncoherent_dbm, outage)?,
        gap_noncoherent_median_db: q(&a.noncoherent_dbm, 0.5)? - q(&b.noncoherent_dbm, 0.5)?,
        gap_det_15pct_db: q(&a.det_dbm, outage)? - q(&b.det_dbm, outage)?,
        gap_det_median_db: q(&a.det_dbm, 0.5)? - q(&b.det_dbm, 0.5)?,
        se_median_reference: q(&a.se, 0.5)?,
        se_median_other: q(&b.se, 0.5)?,
        crossover_noncoherent_dbm: crossover(&a.noncoherent_dbm, &b.noncoherent_dbm, 1e-9)?,
        crossover_det_dbm: crossover(&a.det_dbm, &b.det_dbm, 1e-9)?,
    })
}

/// Per-band CDF inputs and gaps of every band against the first one.
pub fn band_report(datasets: &[(&str, &Dataset)], cfg: &ReportConfig) -> Result<BandReport> {
    if datasets.len() < 2 {
        return Err(invalid("band report needs at least two datasets"));
    }
    let rho = match cfg.rho_tx_db {
        Some(r) => r,
        None => transmit_snr_for(datasets[0].1, cfg.target_rx_snr_db)?,
    };
    let bands = datasets
        .iter()
        .map(|(l, d)| band_metrics(l, d, cfg, rho))
        .collect::<Result<Vec<_>>>()?;
    let gaps = bands[1..]
        .iter()
        .map(|b| gap_summary(&bands[0], b, cfg.outage))
        .collect::<Result<Vec<_>>>()?;
    Ok(BandReport {
        bands,
        gaps,
        rho_tx_db: rho,
        p_t_dbm: cfg.p_t_dbm,
        outage: cfg.outage,
    })
}

/// Per-snapshot SE for a topology extracted from a base-grid dataset.
pub fn topology_se(ds: &Dataset, sel: &TopologySelection, rho_tx_db: f64, subcarriers: usize) -> Result<Vec<f64>> {
    let sub = extract_dataset(sel, ds)?;
    let cfg = SeConfig {
        rho_db: rho_tx_db,
        n_r: sub.tensor.n_rx,
        subcarriers,
        ..SeConfig::default()
    };
    (0..sub.tensor.n_snap)
        .into_par_iter()
        .map(|s| empirical_se(&sub.tensor.snapshot(s), sub.tx_power_dbm, &cfg))
        .collect()
}
