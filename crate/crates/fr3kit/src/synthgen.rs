//! Statistics-driven synthetic channel generator.
//!
//! Every snapshot is an independent draw: delay and angular spread targets
//! from per-band lognormals, a sparse set of paths whose realised power-weighted
//! spreads hit those targets, and a total energy from the close-in path-loss
//! model with shadow fading. The tensor is synthesised with the SAGE forward
//! model so ground truth and data agree exactly.

use num_complex::{Complex32, Complex64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::array::ArraySpec;
use crate::channel::{CirTensor, Dataset, LosState, PathEstimate, SnapshotMeta, TimingPlan};
use crate::error::{invalid, Error, Result};
use crate::sage::{reconstruct_components, Component};
use crate::stats::{fspl_at_reference, rms_angle_spread_raw, rms_spread};
use crate::units::{db_to_lin, lin_to_db};

/// Ratio of delay spread to the mean of the exponential delay draw.
pub const DELAY_SCALING: f64 = 2.3;
/// Attempts at a feasible delay/power structure before the target is clipped.
pub const MAX_RETRIES: usize = 16;
/// Fresh angle draws tried before an angular target is clipped.
const ANGLE_DRAWS: usize = 32;
/// Upper bound of the arctan squash slope; atan(20) is 87°.
const MAX_SQUASH: f64 = 20.0;
/// Paths occupy at most this fraction of the delay window.
/// Grid points used to locate the spread-maximising tilt.
const TILT_GRID: usize = 64;
const WINDOW_FILL: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioStats {
    /// log10(DS / 1 s).
    pub ds_log_mu: f64,
    pub ds_log_sigma: f64,
    /// log10(ASA / 1°).
    pub asa_log_mu: f64,
    pub asa_log_sigma: f64,
    /// log10(ESA / 1°).
    pub esa_log_mu: f64,
    pub esa_log_sigma: f64,
    pub mean_path_count: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandProfile {
    pub carrier_hz: f64,
    pub ple_los: f64,
    pub ple_nlos: f64,
    pub sigma_sf_los_db: f64,
    pub sigma_sf_nlos_db: f64,
    pub los: ScenarioStats,
    pub nlos: ScenarioStats,
    /// Fraction of energy in the first (LOS) path.
    pub dominant_path_power_ratio: f64,
}

impl BandProfile {
    pub fn validate(&self) -> Result<()> {
        if !(self.carrier_hz > 0.0) {
            return Err(invalid("profile carrier must be > 0"));
        }
        if !(self.ple_los > 0.0 && self.ple_nlos > 0.0) {
            return Err(invalid("path-loss exponents must be > 0"));
        }
        for s in [self.sigma_sf_los_db, self.sigma_sf_nlos_db] {
            if !(s >= 0.0) {
                return Err(invalid("shadow-fading deviations must be >= 0"));
            }
        }
        for sc in [&self.los, &self.nlos] {
            for s in [sc.ds_log_sigma, sc.asa_log_sigma, sc.esa_log_sigma] {
                if !(s >= 0.0) {
                    return Err(invalid("lognormal sigmas must be >= 0"));
                }
            }
            if !(sc.mean_path_count >= 1.0) {
                return Err(invalid("mean path count must be >= 1"));
            }
        }
        let r = self.dominant_path_power_ratio;
        if !(r > 0.0 && r <= 1.0) {
            return Err(invalid("dominant_path_power_ratio must lie in (0, 1]"));
        }
        Ok(())
    }

    pub fn scenario(&self, los: LosState) -> &ScenarioStats {
        match los {
            LosState::Los => &self.los,
            LosState::Nlos => &self.nlos,
        }
    }

    pub fn ple(&self, los: LosState) -> f64 {
        match los {
            LosState::Los => self.ple_los,
            LosState::Nlos => self.ple_nlos,
        }
    }

    pub fn sigma_sf_db(&self, los: LosState) -> f64 {
        match los {
            LosState::Los => self.sigma_sf_los_db,
            LosState::Nlos => self.sigma_sf_nlos_db,
        }
    }
}

/// Measured 8 GHz and 15 GHz parameter sets. Path counts and the dominant
/// ratio are tuning knobs, not measured values.
pub fn default_profiles() -> (BandProfile, BandProfile) {
    let b8 = BandProfile {
        carrier_hz: 8e9,
        ple_los: 2.25,
        ple_nlos: 2.56,
        sigma_sf_los_db: 1.40,
        sigma_sf_nlos_db: 2.19,
        los: ScenarioStats {
            ds_log_mu: -7.49,
            ds_log_sigma: 0.30,
            asa_log_mu: 1.88,
            asa_log_sigma: 0.11,
            esa_log_mu: 1.18,
            esa_log_sigma: 0.34,
            mean_path_count: 6.0,
        },
        nlos: ScenarioStats {
            ds_log_mu: -7.46,
            ds_log_sigma: 0.31,
            asa_log_mu: 1.84,
            asa_log_sigma: 0.15,
            esa_log_mu: 1.15,
            esa_log_sigma: 0.27,
            mean_path_count: 6.0,
        },
        dominant_path_power_ratio: 0.5,
    };
    let b15 = BandProfile {
        carrier_hz: 15e9,
        ple_los: 2.33,
        ple_nlos: 2.69,
        sigma_sf_los_db: 2.03,
        sigma_sf_nlos_db: 3.00,
        los: ScenarioStats {
            ds_log_mu: -7.78,
            ds_log_sigma: 0.41,
            asa_log_mu: 1.49,
            asa_log_sigma: 0.19,
            esa_log_mu: 1.20,
            esa_log_sigma: 0.29,
            mean_path_count: 3.0,
        },
        nlos: ScenarioStats {
            ds_log_mu: -7.62,
            ds_log_sigma: 0.30,
            asa_log_mu: 1.33,
            asa_log_sigma: 0.17,
            esa_log_mu: 1.07,
            esa_log_sigma: 0.24,
            mean_path_count: 3.0,
        },
        dominant_path_power_ratio: 0.5,
    };
    (b8, b15)
}

/// Default transmit panels: 4×32 at 8 GHz and 8×16 at 15 GHz, half-wavelength.
pub fn default_arrays() -> (ArraySpec, ArraySpec) {
    (
        ArraySpec::half_wavelength(32, 4, 8e9, 0.0),
        ArraySpec::half_wavelength(16, 8, 15e9, 0.0),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PathCountModel {
    /// Poisson around the scenario mean; draws below 2 are redrawn when a
    /// nonzero delay spread is requested.
    Poisson,
    /// Exactly this many paths.
    Fixed(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_rx: usize,
    pub n_delay: usize,
    pub bandwidth_hz: f64,
    pub tx_power_dbm: f64,
    pub rx_gain_dbi: f64,
    /// Strongest-path per-sample SNR; `None` gives noiseless data.
    pub snr_db: Option<f64>,
    pub path_count: PathCountModel,
    pub route_id: String,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_rx: 40,
            n_delay: 256,
            bandwidth_hz: 400e6,
            tx_power_dbm: 0.0,
            rx_gain_dbi: 0.0,
            snr_db: None,
            path_count: PathCountModel::Poisson,
            route_id: "synth".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotTruth {
    pub components: Vec<Component>,
    pub ds_target_s: f64,
    pub asa_target_deg: f64,
    pub esa_target_deg: f64,
    pub path_loss_db: f64,
    pub shadow_db: f64,
    pub distance_m: f64,
    /// Realised spreads of the generated paths.
    pub ds_s: f64,
    pub asa_deg: f64,
    pub esa_deg: f64,
    /// Set when a target could not be met and the closest achievable value was used.
    pub ds_clipped: bool,
    pub asa_clipped: bool,
    pub esa_clipped: bool,
}

impl SnapshotTruth {
    pub fn paths(&self) -> Vec<PathEstimate> {
        self.components.iter().map(Component::to_path).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub snapshots: Vec<SnapshotTruth>,
}

/// Per-snapshot generator seeded from (seed, snapshot index) only.
pub fn substream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Distances uniform in [d_min, d_max], on a stream disjoint from snapshots.
pub fn draw_distances(n: usize, d_min: f64, d_max: f64, seed: u64) -> Vec<f64> {
    let mut rng = substream(seed, u64::MAX);
    (0..n).map(|_| rng.random_range(d_min..=d_max)).collect()
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

struct DelayDraw {
    bins: Vec<usize>,
    powers: Vec<f64>,
    clipped: bool,
}

fn spread_bins(bins: &[usize], p: &[f64]) -> f64 {
    let t: Vec<f64> = bins.iter().map(|&b| b as f64).collect();
    rms_spread(&t, p).unwrap_or(0.0)
}

fn tilt(p: &[f64], bins: &[usize], eps: f64) -> Vec<f64> {
    let w: Vec<f64> = p.iter().zip(bins).map(|(p, &b)| p * (-eps * b as f64).exp()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

/// Delay bins and powers whose weighted RMS spread equals `target_bins`.
fn draw_delays(
    rng: &mut ChaCha8Rng,
    mean_count: f64,
    model: PathCountModel,
    los: LosState,
    ratio: f64,
    target_bins: f64,
    usable: usize,
) -> Result<DelayDraw> {
    let mut last: Option<(Vec<usize>, Vec<f64>, f64)> = None;
    for _ in 0..MAX_RETRIES {
        let n = match model {
            PathCountModel::Fixed(n) => n,
            PathCountModel::Poisson => {
                let k: f64 = Poisson::new(mean_count)
                    .map_err(|e| invalid(format!("bad path-count mean: {e}")))?
                    .sample(rng);
                (k as usize).max(1)
            }
        };
        if n == 0 {
            return Err(invalid("path count must be >= 1"));
        }
        if n == 1 {
            if target_bins > 0.0 && model == PathCountModel::Poisson {
                continue;
            }
            return Ok(DelayDraw {
                bins: vec![0],
                powers: vec![1.0],
                clipped: target_bins > 0.0,
            });
        }
        if n > usable + 1 {
            return Err(Error::InfeasibleTarget(format!(
                "{n} paths do not fit in {usable} delay bins"
            )));
        }
        let mut x: Vec<f64> = (0..n)
            .map(|_| -DELAY_SCALING * (1.0 - rng.random::<f64>()).ln())
            .collect();
        x.sort_by(|a, b| a.total_cmp(b));
        let x0 = x[0];
        x.iter_mut().for_each(|v| *v -= x0);
        let mut p: Vec<f64> = x.iter().map(|v| (-v * (DELAY_SCALING - 1.0) / DELAY_SCALING).exp()).collect();
        if los == LosState::Los {
            let rest: f64 = p[1..].iter().sum();
            for v in p[1..].iter_mut() {
                *v *= (1.0 - ratio) / rest;
            }
            p[0] = ratio;
        }
        let s: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= s);

        let ds_x = rms_spread(&x, &p)?;
        let x_max = *x.last().unwrap();
        let mut k = if ds_x > 0.0 { target_bins / ds_x } else { 1.0 };
        if x_max > 0.0 {
            k = k.min((usable - n) as f64 / x_max);
        }
        let mut bins: Vec<usize> = x.iter().map(|v| (v * k).round() as usize).collect();
        for i in 1..n {
            if bins[i] <= bins[i - 1] {
                bins[i] = bins[i - 1] + 1;
            }
        }
        if *bins.last().unwrap() > usable {
            continue;
        }
        let e_max = 30.0 / *bins.last().unwrap() as f64;
        let f = |e: f64| spread_bins(&bins, &tilt(&p, &bins, e));
        // spread vs tilt is unimodal and vanishes at both ends; bracket the
        // target on the branch next to zero tilt
        let grid: Vec<f64> = (0..=TILT_GRID).map(|i| -e_max + 2.0 * e_max * i as f64 / TILT_GRID as f64).collect();
        let peak = grid.iter().cloned().fold((0.0, f64::MIN), |b, e| {
            let v = f(e);
            if v > b.1 { (e, v) } else { b }
        });
        let f0 = f(0.0);
        let (a, b) = if f0 >= target_bins {
            if peak.0 <= 0.0 { (0.0, e_max) } else { (-e_max, 0.0) }
        } else {
            (0.0, peak.0)
        };
        if (f(a) - target_bins) * (f(b) - target_bins) > 0.0 {
            let miss = (peak.1 - target_bins).abs();
            if last.as_ref().is_none_or(|l| miss < l.2) {
                last = Some((bins.clone(), tilt(&p, &bins, peak.0), miss));
            }
            continue;
        }
        let (mut lo, mut hi) = (a, b);
        let below_at_lo = f(lo) < target_bins;
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if (f(mid) < target_bins) == below_at_lo {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let powers = tilt(&p, &bins, 0.5 * (lo + hi));
        return Ok(DelayDraw { bins, powers, clipped: false });
    }
    match last {
        Some((bins, powers, _)) => Ok(DelayDraw { bins, powers, clipped: true }),
        None => Err(Error::InfeasibleTarget(format!(
            "no delay structure for a {target_bins:.2}-bin spread after {MAX_RETRIES} attempts"
        ))),
    }
}

fn squash(z: &[f64], s: f64) -> Vec<f64> {
    z.iter().map(|v| (s * v).atan().to_degrees()).collect()
}

/// Angles in (−90°, 90°) whose power-weighted RMS spread equals `target`.
fn draw_angles(rng: &mut ChaCha8Rng, p: &[f64], target: f64) -> (Vec<f64>, bool) {
    let mut best: Option<(Vec<f64>, f64)> = None;
    for _ in 0..ANGLE_DRAWS {
        let z: Vec<f64> = (0..p.len()).map(|_| normal(rng)).collect();
        let f = |s: f64| rms_angle_spread_raw(&squash(&z, s), p).unwrap_or(0.0);
        let f_max = f(MAX_SQUASH);
        if f_max >= target {
            let (mut lo, mut hi) = (0.0, MAX_SQUASH);
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if f(mid) < target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            return (squash(&z, 0.5 * (lo + hi)), false);
        }
        if best.as_ref().is_none_or(|b| f_max > b.1) {
            best = Some((squash(&z, MAX_SQUASH), f_max));
        }
    }
    (best.map(|b| b.0).unwrap_or_default(), true)
}

fn generate_snapshot(
    profile: &BandProfile,
    array: &ArraySpec,
    los: LosState,
    distance: f64,
    cfg: &SynthConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<Complex32>, SnapshotTruth)> {
    let st = profile.scenario(los);
    let res = 1.0 / cfg.bandwidth_hz;
    let ds_target = 10f64.powf(st.ds_log_mu + st.ds_log_sigma * normal(rng));
    let asa_target = 10f64.powf(st.asa_log_mu + st.asa_log_sigma * normal(rng));
    let esa_target = 10f64.powf(st.esa_log_mu + st.esa_log_sigma * normal(rng));
    let shadow = profile.sigma_sf_db(los) * normal(rng);
    let pl = fspl_at_reference(profile.carrier_hz) + 10.0 * profile.ple(los) * distance.log10() + shadow;

    let usable = ((cfg.n_delay as f64 * WINDOW_FILL).floor() as usize).max(1) - 1;
    let dd = draw_delays(
        rng,
        st.mean_path_count,
        cfg.path_count,
        los,
        profile.dominant_path_power_ratio,
        ds_target / res,
        usable,
    )?;
    let (az, asa_clipped) = draw_angles(rng, &dd.powers, asa_target);
    let (el, esa_clipped) = draw_angles(rng, &dd.powers, esa_target);

    let energy = db_to_lin(cfg.tx_power_dbm + array.element_gain_dbi + cfg.rx_gain_dbi - pl);
    let mut comps = Vec::with_capacity(dd.bins.len());
    for (l, (&b, &p)) in dd.bins.iter().zip(&dd.powers).enumerate() {
        let mag = (energy * p).sqrt();
        let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let amps = (0..cfg.n_rx)
            .map(|r| {
                let psi = if r == 0 { 0.0 } else { rng.random_range(0.0..std::f64::consts::TAU) };
                Complex64::from_polar(mag, phi + psi)
            })
            .collect();
        comps.push(Component {
            delay_s: b as f64 * res,
            az_deg: az[l],
            el_deg: el[l],
            rx_amplitudes: amps,
        });
    }
    let mut x = reconstruct_components(&comps, array, cfg.n_rx, cfg.n_delay, res)?;
    if let Some(snr) = cfg.snr_db {
        let p_max = dd.powers.iter().cloned().fold(0.0, f64::max) * energy;
        let sigma = (p_max / db_to_lin(snr) / 2.0).sqrt();
        for z in x.iter_mut() {
            *z += Complex64::new(sigma * normal(rng), sigma * normal(rng));
        }
    }
    let delays: Vec<f64> = dd.bins.iter().map(|&b| b as f64 * res).collect();
    let truth = SnapshotTruth {
        ds_s: rms_spread(&delays, &dd.powers)?,
        asa_deg: rms_angle_spread_raw(&az, &dd.powers)?,
        esa_deg: rms_angle_spread_raw(&el, &dd.powers)?,
        components: comps,
        ds_target_s: ds_target,
        asa_target_deg: asa_target,
        esa_target_deg: esa_target,
        path_loss_db: pl,
        shadow_db: shadow,
        distance_m: distance,
        ds_clipped: dd.clipped,
        asa_clipped,
        esa_clipped,
    };
    let data = x.iter().map(|z| Complex32::new(z.re as f32, z.im as f32)).collect();
    Ok((data, truth))
}

/// Generates one snapshot per entry of `distances`.
pub fn generate(
    profile: &BandProfile,
    array: &ArraySpec,
    los: LosState,
    distances: &[f64],
    seed: u64,
    cfg: &SynthConfig,
) -> Result<(Dataset, GroundTruth)> {
    profile.validate()?;
    array.validate()?;
    if distances.is_empty() {
        return Err(invalid("need at least one snapshot"));
    }
    if let Some(d) = distances.iter().find(|d| !(**d > 0.0)) {
        return Err(invalid(format!("distance {d} must be > 0")));
    }
    if cfg.n_rx == 0 || cfg.n_delay < 2 || !(cfg.bandwidth_hz > 0.0) {
        return Err(invalid("synth config needs n_rx >= 1, n_delay >= 2, bandwidth > 0"));
    }
    if (array.carrier_hz - profile.carrier_hz).abs() > 1e-6 * profile.carrier_hz {
        return Err(invalid("array and profile carriers differ"));
    }
    let parts: Vec<(Vec<Complex32>, SnapshotTruth)> = distances
        .par_iter()
        .enumerate()
        .map(|(i, &d)| {
            let mut rng = substream(seed, i as u64);
            generate_snapshot(profile, array, los, d, cfg, &mut rng)
        })
        .collect::<Result<_>>()?;

    let n_tx = array.n_elements();
    let mut tensor = CirTensor {
        data: Vec::with_capacity(distances.len() * cfg.n_rx * n_tx * cfg.n_delay),
        n_snap: distances.len(),
        n_rx: cfg.n_rx,
        n_tx,
        n_delay: cfg.n_delay,
        delay_resolution: 1.0 / cfg.bandwidth_hz,
        carrier_hz: profile.carrier_hz,
        bandwidth_hz: cfg.bandwidth_hz,
    };
    let mut truths = Vec::with_capacity(parts.len());
    let mut snaps = Vec::with_capacity(parts.len());
    for (i, (data, truth)) in parts.into_iter().enumerate() {
        tensor.data.extend(data);
        snaps.push(SnapshotMeta {
            route_id: cfg.route_id.clone(),
            point_id: format!("p{i:05}"),
            t_r_distance_m: truth.distance_m,
            los_state: los,
            tx_power_dbm: cfg.tx_power_dbm,
        });
        truths.push(truth);
    }
    let t_sc = cfg.n_delay as f64 / cfg.bandwidth_hz;
    let ds = Dataset {
        tensor,
        snapshots: snaps,
        timing: TimingPlan::tight(n_tx, cfg.n_rx, t_sc),
        array: array.clone(),
        tx_power_dbm: cfg.tx_power_dbm,
    };
    ds.validate()?;
    Ok((ds, GroundTruth { snapshots: truths }))
}

/// Mean per-link received energy implied by a path-loss value.
pub fn link_energy(pl_db: f64, cfg: &SynthConfig, array: &ArraySpec) -> f64 {
    db_to_lin(cfg.tx_power_dbm + array.element_gain_dbi + cfg.rx_gain_dbi - pl_db)
}

/// Inverse of [`link_energy`].
pub fn energy_to_path_loss(energy: f64, cfg: &SynthConfig, array: &ArraySpec) -> f64 {
    cfg.tx_power_dbm + array.element_gain_dbi + cfg.rx_gain_dbi - lin_to_db(energy)
}
