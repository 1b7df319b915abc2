//! Calibration deconvolution, power delay profiles and noise-floor handling.

use std::sync::Arc;

use num_complex::{Complex32, Complex64};
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::channel::CirTensor;
use crate::error::{invalid, Error, Result};
use crate::units::db_to_lin;

pub const DEFAULT_TAIL_FRACTION: f64 = 0.2;
pub const DEFAULT_DYNAMIC_THRESHOLD_DB: f64 = 6.0;

/// Back-to-back system response used to deconvolve raw captures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRecord {
    /// One sequence shared by every chain, or one per (rx, tx) pair in
    /// row-major `rx * n_tx + tx` order.
    pub y_cal: Vec<Vec<Complex64>>,
    pub length: usize,
    /// Frequency bins with |Y_cal(f)| below this are excluded.
    pub regularization_floor: f64,
}

impl CalibrationRecord {
    pub fn shared(y: Vec<Complex64>, regularization_floor: f64) -> Self {
        CalibrationRecord {
            length: y.len(),
            y_cal: vec![y],
            regularization_floor,
        }
    }

    pub fn validate(&self, n_delay: usize) -> Result<()> {
        if !(self.regularization_floor > 0.0) {
            return Err(invalid("regularization_floor must be > 0"));
        }
        if self.length != n_delay {
            return Err(invalid(format!(
                "calibration length {} != n_delay {}",
                self.length, n_delay
            )));
        }
        if self.y_cal.is_empty() || self.y_cal.iter().any(|y| y.len() != self.length) {
            return Err(invalid("calibration sequences must all have the declared length"));
        }
        Ok(())
    }
}

/// Calibrated tensor plus the number of excluded frequency bins per record.
#[derive(Debug, Clone)]
pub struct Calibrated {
    pub tensor: CirTensor,
    pub excluded_bins: Vec<usize>,
}

struct Inverse {
    /// 1/Y_cal(f), zero where the bin is excluded.
    inv: Vec<Complex64>,
    excluded: usize,
}

fn inverse_response(y: &[Complex64], floor: f64, fft: &Arc<dyn Fft<f64>>) -> Result<Inverse> {
    if y.iter().all(|z| z.norm_sqr() == 0.0) {
        return Err(Error::CalibrationUnusable("all-zero calibration sequence".into()));
    }
    let mut spec = y.to_vec();
    fft.process(&mut spec);
    let mut excluded = 0;
    let inv: Vec<Complex64> = spec
        .iter()
        .map(|z| {
            if z.norm() < floor {
                excluded += 1;
                Complex64::new(0.0, 0.0)
            } else {
                z.inv()
            }
        })
        .collect();
    if 2 * excluded > y.len() {
        return Err(Error::CalibrationUnusable(format!(
            "{excluded} of {} bins below the regularization floor",
            y.len()
        )));
    }
    Ok(Inverse { inv, excluded })
}

/// H(τ) = IDFT{ Y(f) / Y_cal(f) } per (snapshot, rx, tx).
pub fn calibrate(raw: &CirTensor, cal: &CalibrationRecord) -> Result<CirTensor> {
    calibrate_with_report(raw, cal).map(|c| c.tensor)
}

pub fn calibrate_with_report(raw: &CirTensor, cal: &CalibrationRecord) -> Result<Calibrated> {
    raw.validate()?;
    cal.validate(raw.n_delay)?;
    let n = raw.n_delay;
    let pairs = raw.n_rx * raw.n_tx;
    if cal.y_cal.len() != 1 && cal.y_cal.len() != pairs {
        return Err(invalid(format!(
            "calibration has {} sequences; expected 1 or {}",
            cal.y_cal.len(),
            pairs
        )));
    }
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv_fft = planner.plan_fft_inverse(n);
    let inverses = cal
        .y_cal
        .iter()
        .map(|y| inverse_response(y, cal.regularization_floor, &fwd))
        .collect::<Result<Vec<_>>>()?;

    let scale = 1.0 / n as f64;
    let mut out = raw.clone();
    out.data
        .par_chunks_mut(n)
        .enumerate()
        .for_each(|(link, chunk)| {
            let pair = link % pairs;
            let inv = &inverses[if inverses.len() == 1 { 0 } else { pair }].inv;
            let mut buf: Vec<Complex64> = chunk
                .iter()
                .map(|z| Complex64::new(z.re as f64, z.im as f64))
                .collect();
            fwd.process(&mut buf);
            for (b, i) in buf.iter_mut().zip(inv) {
                *b *= i;
            }
            inv_fft.process(&mut buf);
            for (o, b) in chunk.iter_mut().zip(&buf) {
                *o = Complex32::new((b.re * scale) as f32, (b.im * scale) as f32);
            }
        });
    Ok(Calibrated {
        tensor: out,
        excluded_bins: inverses.iter().map(|i| i.excluded).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pdp {
    pub power: Vec<f64>,
    pub delay_resolution: f64,
    pub noise_floor: f64,
    pub dynamic_threshold_db: f64,
}

impl Pdp {
    pub fn new(power: Vec<f64>, delay_resolution: f64) -> Self {
        Pdp {
            power,
            delay_resolution,
            noise_floor: 0.0,
            dynamic_threshold_db: DEFAULT_DYNAMIC_THRESHOLD_DB,
        }
    }

    pub fn delays(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.power.len()).map(move |i| i as f64 * self.delay_resolution)
    }

    /// Estimates and stores the noise floor, then applies the dynamic-range cut.
    pub fn cleaned(mut self, tail_fraction: f64) -> Result<Pdp> {
        self.noise_floor = estimate_noise_floor(&self, tail_fraction)?;
        Ok(threshold_pdp(&self))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PdpScope {
    /// One (rx, tx) link.
    Link { rx: usize, tx: usize },
    /// Sum over all (rx, tx) pairs.
    Omni,
}

/// PDP averaged over every snapshot.
pub fn compute_pdp(cir: &CirTensor, scope: PdpScope) -> Result<Pdp> {
    let all: Vec<usize> = (0..cir.n_snap).collect();
    compute_pdp_snapshots(cir, scope, &all)
}

/// PDP averaged over the selected snapshots.
pub fn compute_pdp_snapshots(cir: &CirTensor, scope: PdpScope, snaps: &[usize]) -> Result<Pdp> {
    if snaps.is_empty() || snaps.iter().any(|&s| s >= cir.n_snap) {
        return Err(Error::EmptySelection);
    }
    let mut power = vec![0.0f64; cir.n_delay];
    let mut add = |link: &[Complex32]| {
        for (p, z) in power.iter_mut().zip(link) {
            *p += (z.re as f64).powi(2) + (z.im as f64).powi(2);
        }
    };
    for &s in snaps {
        match scope {
            PdpScope::Link { rx, tx } => {
                if rx >= cir.n_rx || tx >= cir.n_tx {
                    return Err(Error::EmptySelection);
                }
                add(cir.link(s, rx, tx));
            }
            PdpScope::Omni => {
                for r in 0..cir.n_rx {
                    for t in 0..cir.n_tx {
                        add(cir.link(s, r, t));
                    }
                }
            }
        }
    }
    let k = 1.0 / snaps.len() as f64;
    power.iter_mut().for_each(|p| *p *= k);
    Ok(Pdp::new(power, cir.delay_resolution))
}

/// Median power over the last `tail_fraction` of delay bins.
pub fn estimate_noise_floor(pdp: &Pdp, tail_fraction: f64) -> Result<f64> {
    if !(tail_fraction > 0.0 && tail_fraction <= 0.5) {
        return Err(invalid("tail_fraction must lie in (0, 0.5]"));
    }
    let n = pdp.power.len();
    let n_tail = (n as f64 * tail_fraction + 1e-9).floor() as usize;
    if n_tail < 8 {
        return Err(Error::TooFewTailBins(n_tail));
    }
    let mut tail = pdp.power[n - n_tail..].to_vec();
    tail.sort_by(|a, b| a.total_cmp(b));
    let m = n_tail / 2;
    Ok(if n_tail % 2 == 1 {
        tail[m]
    } else {
        0.5 * (tail[m - 1] + tail[m])
    })
}

/// Zeroes bins below noise_floor·10^(dynamic_threshold_db/10).
pub fn threshold_pdp(pdp: &Pdp) -> Pdp {
    let cut = pdp.noise_floor * db_to_lin(pdp.dynamic_threshold_db);
    let mut out = pdp.clone();
    for p in out.power.iter_mut() {
        if *p < cut {
            *p = 0.0;
        }
    }
    out
}
