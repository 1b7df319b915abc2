//! Per-snapshot spread extraction over a whole dataset: delay spread from the
//! cleaned omni PDP, angular spreads from the SAGE path list.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{Dataset, PathEstimate};
use crate::error::{Error, Result};
use crate::sage::{sage_estimate, SageConfig};
use crate::sounding::{compute_pdp_snapshots, PdpScope, DEFAULT_DYNAMIC_THRESHOLD_DB, DEFAULT_TAIL_FRACTION};
use crate::stats::{lognormal_stats, rms_angle_spread, rms_delay_spread, AngleAxis, SpreadStats};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpreadConfig {
    pub tail_fraction: f64,
    pub dynamic_threshold_db: f64,
    pub sage: SageConfig,
    /// Skip SAGE and report delay spread only.
    pub delay_only: bool,
}

impl Default for SpreadConfig {
    fn default() -> Self {
        SpreadConfig {
            tail_fraction: DEFAULT_TAIL_FRACTION,
            dynamic_threshold_db: DEFAULT_DYNAMIC_THRESHOLD_DB,
            sage: SageConfig::default(),
            delay_only: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpreadRow {
    pub snapshot: usize,
    pub point_id: String,
    pub ds_s: Option<f64>,
    pub asa_deg: Option<f64>,
    pub esa_deg: Option<f64>,
    pub n_paths: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpreadReport {
    pub rows: Vec<SpreadRow>,
    pub ds: Option<SpreadStats>,
    pub asa: Option<SpreadStats>,
    pub esa: Option<SpreadStats>,
}

/// RMS delay spread of one snapshot, or None when fewer than two bins survive
/// the dynamic-range cut.
pub fn snapshot_delay_spread(ds: &Dataset, s: usize, cfg: &SpreadConfig) -> Result<Option<f64>> {
    let mut pdp = compute_pdp_snapshots(&ds.tensor, PdpScope::Omni, &[s])?;
    pdp.dynamic_threshold_db = cfg.dynamic_threshold_db;
    let pdp = pdp.cleaned(cfg.tail_fraction)?;
    if pdp.power.iter().filter(|&&p| p > 0.0).count() < 2 {
        return Ok(None);
    }
    rms_delay_spread(&pdp).map(Some)
}

/// Azimuth and elevation spreads of a path list; None below two paths.
pub fn path_angle_spreads(paths: &[PathEstimate]) -> Result<(Option<f64>, Option<f64>)> {
    if paths.len() < 2 {
        return Ok((None, None));
    }
    Ok((
        Some(rms_angle_spread(paths, AngleAxis::Azimuth)?),
        Some(rms_angle_spread(paths, AngleAxis::Elevation)?),
    ))
}

fn fit(values: Vec<Option<f64>>, unit: f64) -> Result<Option<SpreadStats>> {
    let kept: Vec<f64> = values.iter().flatten().copied().filter(|v| *v > 0.0).collect();
    let excluded = values.len() - kept.len();
    if kept.is_empty() {
        return Ok(None);
    }
    let mut st = lognormal_stats(&kept, unit)?;
    st.excluded = excluded;
    Ok(Some(st))
}

/// Spreads for every snapshot and their log-normal summaries.
pub fn dataset_spreads(ds: &Dataset, cfg: &SpreadConfig) -> Result<SpreadReport> {
    if ds.tensor.n_snap == 0 {
        return Err(Error::EmptySelection);
    }
    cfg.sage.validate()?;
    let rows: Vec<SpreadRow> = (0..ds.tensor.n_snap)
        .into_par_iter()
        .map(|s| {
            let ds_s = snapshot_delay_spread(ds, s, cfg)?;
            let (asa, esa, n) = if cfg.delay_only {
                (None, None, 0)
            } else {
                let r = sage_estimate(&ds.tensor.snapshot(s), &ds.array, &cfg.sage)?;
                let (a, e) = path_angle_spreads(&r.paths)?;
                (a, e, r.paths.len())
            };
            Ok(SpreadRow {
                snapshot: s,
                point_id: ds.snapshots[s].point_id.clone(),
                ds_s,
                asa_deg: asa,
                esa_deg: esa,
                n_paths: n,
            })
        })
        .collect::<Result<_>>()?;
    let ds_stats = fit(rows.iter().map(|r| r.ds_s).collect(), 1.0)?;
    let (asa, esa) = if cfg.delay_only {
        (None, None)
    } else {
        (
            fit(rows.iter().map(|r| r.asa_deg).collect(), 1.0)?,
            fit(rows.iter().map(|r| r.esa_deg).collect(), 1.0)?,
        )
    };
    Ok(SpreadReport { rows, ds: ds_stats, asa, esa })
}
