//! SAGE multipath estimation on single snapshots.
//!
//! Each path contributes `alpha_r · a(az, el) ⊗ D_tau` to receive channel `r`,
//! where `a` is the transmit steering vector and `D_tau` a band-limited delta at
//! (possibly fractional) delay `tau`. Paths are seeded by successive
//! interference cancellation and then refined one at a time against the
//! residual plus their own contribution. Amplitudes are per receive channel.

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::array::ArraySpec;
use crate::channel::{PathEstimate, Snapshot};
use crate::error::{invalid, Error, Result};
use crate::sounding::{estimate_noise_floor, Pdp, DEFAULT_TAIL_FRACTION};
use crate::units::db_to_lin;

/// Residual energy (relative to the input) below which nothing is left to fit.
const EXHAUSTED_REL: f64 = 1e-10;
/// Floor relative to the peak sample power; single-precision storage leaves
/// residue near 1e-15 of it even for noiseless data.
const QUANTIZATION_FLOOR: f64 = 1e-12;
/// Golden-section iterations for the final angle polish.
const GOLDEN_ITERS: usize = 48;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SageConfig {
    pub max_paths: usize,
    /// Delay search step (s).
    pub delay_grid_s: f64,
    /// Azimuth/elevation search step (deg).
    pub angle_grid_deg: f64,
    pub stop_rel_ll: f64,
    pub max_iterations: usize,
    /// Extraction stops when a new path's per-element power is less than this
    /// many dB above the per-sample noise floor.
    pub min_path_power_db: f64,
    /// Model-order penalty per path, in units of the per-sample noise floor
    /// times the number of receive channels. Zero gives plain ML.
    pub penalty_weight: f64,
}

impl Default for SageConfig {
    fn default() -> Self {
        SageConfig {
            max_paths: 50,
            delay_grid_s: 2.5e-9,
            angle_grid_deg: 1.0,
            stop_rel_ll: 1e-4,
            max_iterations: 30,
            min_path_power_db: 3.0,
            penalty_weight: 0.0,
        }
    }
}

impl SageConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_paths == 0 {
            return Err(invalid("max_paths must be >= 1"));
        }
        if !(self.delay_grid_s > 0.0 && self.angle_grid_deg > 0.0) {
            return Err(invalid("search grids must be > 0"));
        }
        if !(self.stop_rel_ll > 0.0) {
            return Err(invalid("stop_rel_ll must be > 0"));
        }
        if self.max_iterations == 0 {
            return Err(invalid("max_iterations must be >= 1"));
        }
        if !(self.penalty_weight >= 0.0) {
            return Err(invalid("penalty_weight must be >= 0"));
        }
        Ok(())
    }
}

/// A path with its per-receive-channel amplitudes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub delay_s: f64,
    pub az_deg: f64,
    pub el_deg: f64,
    pub rx_amplitudes: Vec<Complex64>,
}

impl Component {
    /// Summary amplitude: RMS magnitude over receive channels, phase of rx 0.
    pub fn to_path(&self) -> PathEstimate {
        let n = self.rx_amplitudes.len().max(1) as f64;
        let mag = (self.rx_amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>() / n).sqrt();
        let phase = self.rx_amplitudes.first().map(|a| a.arg()).unwrap_or(0.0);
        PathEstimate::new(self.delay_s, self.az_deg, self.el_deg, Complex64::from_polar(mag, phase))
    }

    pub fn mean_power(&self) -> f64 {
        self.rx_amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>()
            / self.rx_amplitudes.len().max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SageResult {
    /// Sorted by power, strongest first.
    pub paths: Vec<PathEstimate>,
    /// Same order as `paths`.
    pub components: Vec<Component>,
    /// Unexplained fraction of the input energy.
    pub residual_energy: f64,
    pub iterations_used: usize,
    pub converged: bool,
    /// Residual energy (absolute) after initialisation and after each iteration.
    pub residual_history: Vec<f64>,
    pub input_energy: f64,
    /// Per-sample noise floor used for the extraction stop.
    pub noise_floor: f64,
}

/// Band-limited delta at fractional delay `tau` (bins) on a periodic window.
/// Integer delays give an exact unit impulse.
pub fn delay_kernel(tau: f64, n: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    if is_integer(tau) {
        out[(tau.round() as usize) % n] = Complex64::new(1.0, 0.0);
        return out;
    }
    let mut spec: Vec<Complex64> = (0..n)
        .map(|k| {
            if n % 2 == 0 && k == n / 2 {
                Complex64::new((std::f64::consts::PI * tau).cos(), 0.0)
            } else {
                let kk = if k < n.div_ceil(2) { k as f64 } else { k as f64 - n as f64 };
                Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * kk * tau / n as f64)
            }
        })
        .collect();
    FftPlanner::new().plan_fft_inverse(n).process(&mut spec);
    for (o, s) in out.iter_mut().zip(spec) {
        *o = s / n as f64;
    }
    out
}

fn is_integer(tau: f64) -> bool {
    (tau - tau.round()).abs() < 1e-9
}

/// Forward model for components over `n_rx` receive channels, layout
/// [rx][tx][delay].
pub fn reconstruct_components(
    comps: &[Component],
    array: &ArraySpec,
    n_rx: usize,
    n_delay: usize,
    delay_resolution: f64,
) -> Result<Vec<Complex64>> {
    let n_tx = array.n_elements();
    let mut out = vec![Complex64::new(0.0, 0.0); n_rx * n_tx * n_delay];
    let geo = Geometry::new(array);
    for c in comps {
        if c.rx_amplitudes.len() != n_rx {
            return Err(invalid("component amplitude count differs from n_rx"));
        }
        let tau = c.delay_s / delay_resolution;
        if !(tau >= -1e-9) || tau > (n_delay - 1) as f64 + 1e-9 {
            return Err(Error::DelayOutOfWindow { delay_s: c.delay_s });
        }
        let a = geo.steer(c.az_deg, c.el_deg);
        let kern = Kernel::new(tau.max(0.0), n_delay);
        for (r, alpha) in c.rx_amplitudes.iter().enumerate() {
            for (t, at) in a.iter().enumerate() {
                let base = (r * n_tx + t) * n_delay;
                kern.add_to(&mut out[base..base + n_delay], alpha * at);
            }
        }
    }
    Ok(out)
}

/// Single-receive-channel forward model, layout [tx][delay].
pub fn reconstruct(
    paths: &[PathEstimate],
    array: &ArraySpec,
    n_delay: usize,
    delay_resolution: f64,
) -> Result<Vec<Complex64>> {
    let comps: Vec<Component> = paths
        .iter()
        .map(|p| Component {
            delay_s: p.delay_s,
            az_deg: p.aod_az_deg,
            el_deg: p.aod_el_deg,
            rx_amplitudes: vec![p.amplitude],
        })
        .collect();
    reconstruct_components(&comps, array, 1, n_delay, delay_resolution)
}

/// Sparse delta or dense fractional delay kernel.
enum Kernel {
    Delta(usize),
    Dense { taps: Vec<Complex64>, norm2: f64 },
}

impl Kernel {
    fn new(tau: f64, n: usize) -> Self {
        if is_integer(tau) {
            Kernel::Delta((tau.round() as usize) % n)
        } else {
            let taps = delay_kernel(tau, n);
            let norm2 = taps.iter().map(|z| z.norm_sqr()).sum();
            Kernel::Dense { taps, norm2 }
        }
    }

    fn norm2(&self) -> f64 {
        match self {
            Kernel::Delta(_) => 1.0,
            Kernel::Dense { norm2, .. } => *norm2,
        }
    }

    fn add_to(&self, dst: &mut [Complex64], w: Complex64) {
        match self {
            Kernel::Delta(d) => dst[*d] += w,
            Kernel::Dense { taps, .. } => {
                for (o, k) in dst.iter_mut().zip(taps) {
                    *o += w * k;
                }
            }
        }
    }

    /// Σ_d conj(D[d]) · x[d].
    fn project(&self, x: &[Complex64]) -> Complex64 {
        match self {
            Kernel::Delta(d) => x[*d],
            Kernel::Dense { taps, .. } => taps.iter().zip(x).map(|(k, v)| k.conj() * v).sum(),
        }
    }
}

struct Geometry {
    n_x: usize,
    n_y: usize,
    /// k·x per column and k·y per row (rad).
    kx: Vec<f64>,
    ky: Vec<f64>,
    /// Phase increment per element step at u = 1 (k·spacing).
    kd: f64,
}

impl Geometry {
    fn new(array: &ArraySpec) -> Self {
        let k = 2.0 * std::f64::consts::PI / array.wavelength();
        let cx = (array.n_x as f64 - 1.0) / 2.0;
        let cy = (array.n_y as f64 - 1.0) / 2.0;
        Geometry {
            n_x: array.n_x,
            n_y: array.n_y,
            kx: (0..array.n_x).map(|c| k * (c as f64 - cx) * array.spacing_m).collect(),
            ky: (0..array.n_y).map(|r| k * (cy - r as f64) * array.spacing_m).collect(),
            kd: k * array.spacing_m,
        }
    }

    fn n(&self) -> usize {
        self.n_x * self.n_y
    }

    fn steer(&self, az_deg: f64, el_deg: f64) -> Vec<Complex64> {
        let (az, el) = (az_deg.to_radians(), el_deg.to_radians());
        let (u, v) = (az.sin() * el.cos(), el.sin());
        let ex: Vec<Complex64> = self.kx.iter().map(|&p| Complex64::from_polar(1.0, p * u)).collect();
        let ey: Vec<Complex64> = self.ky.iter().map(|&p| Complex64::from_polar(1.0, p * v)).collect();
        let mut out = Vec::with_capacity(self.n());
        for y in &ey {
            for x in &ex {
                out.push(x * y);
            }
        }
        out
    }

    fn az_free(&self) -> bool {
        self.n_x > 1
    }

    fn el_free(&self) -> bool {
        self.n_y > 1
    }
}

/// Working state for one snapshot.
struct Work<'a> {
    geo: Geometry,
    cfg: &'a SageConfig,
    n_rx: usize,
    n_tx: usize,
    n_delay: usize,
    res: Vec<Complex64>,
    /// Delay search step in bins.
    delay_step: f64,
    /// Per-sample noise power; sets the evidence needed to leave the grid.
    noise_floor: f64,
}

#[derive(Clone)]
struct Params {
    tau: f64,
    az: f64,
    el: f64,
    amps: Vec<Complex64>,
}

impl<'a> Work<'a> {
    fn energy(&self) -> f64 {
        self.res.iter().map(|z| z.norm_sqr()).sum()
    }

    fn add_path(&mut self, p: &Params, sign: f64) {
        let a = self.geo.steer(p.az, p.el);
        let kern = Kernel::new(p.tau, self.n_delay);
        for (r, alpha) in p.amps.iter().enumerate() {
            for (t, at) in a.iter().enumerate() {
                let base = (r * self.n_tx + t) * self.n_delay;
                kern.add_to(&mut self.res[base..base + self.n_delay], alpha * at * sign);
            }
        }
    }

    /// Delay-projected per-rx array snapshots y_r = Σ_d conj(D[d]) x[r, :, d].
    fn project_delay(&self, kern: &Kernel) -> Vec<Vec<Complex64>> {
        (0..self.n_rx)
            .map(|r| {
                (0..self.n_tx)
                    .map(|t| {
                        let base = (r * self.n_tx + t) * self.n_delay;
                        kern.project(&self.res[base..base + self.n_delay])
                    })
                    .collect()
            })
            .collect()
    }

    /// Explained energy Σ_r |aᴴ y_r|² / (N·‖D‖²) for a given steering vector.
    fn angle_metric(&self, ys: &[Vec<Complex64>], a: &[Complex64], knorm2: f64) -> f64 {
        let n = self.n_tx as f64 * knorm2;
        ys.iter()
            .map(|y| a.iter().zip(y).map(|(ai, yi)| ai.conj() * yi).sum::<Complex64>().norm_sqr())
            .sum::<f64>()
            / n
    }

    /// Beamformed delay profiles z_r[d] = aᴴ x[r, :, d].
    fn beamform(&self, a: &[Complex64]) -> Vec<Vec<Complex64>> {
        (0..self.n_rx)
            .map(|r| {
                let mut z = vec![Complex64::new(0.0, 0.0); self.n_delay];
                for (t, at) in a.iter().enumerate() {
                    let w = at.conj();
                    let base = (r * self.n_tx + t) * self.n_delay;
                    for (zd, x) in z.iter_mut().zip(&self.res[base..base + self.n_delay]) {
                        *zd += w * x;
                    }
                }
                z
            })
            .collect()
    }

    fn delay_metric(&self, zs: &[Vec<Complex64>], tau: f64) -> f64 {
        let kern = Kernel::new(tau, self.n_delay);
        let n = self.n_tx as f64 * kern.norm2();
        zs.iter().map(|z| kern.project(z).norm_sqr()).sum::<f64>() / n
    }

    /// Delay update at fixed angles.
    fn search_delay(&self, az: f64, el: f64) -> f64 {
        let a = self.geo.steer(az, el);
        let zs = self.beamform(&a);
        let n = self.n_delay;
        let step = (self.delay_step.round() as usize).max(1);
        let per_bin: Vec<f64> = (0..n).map(|d| zs.iter().map(|z| z[d].norm_sqr()).sum()).collect();
        let mut best = 0usize;
        for d in (0..n).step_by(step) {
            if per_bin[d] > per_bin[best] {
                best = d;
            }
        }
        let mut tau = best as f64;
        let mut m_best = per_bin[best] / self.n_tx as f64;
        if self.delay_step < 1.0 {
            let k = (1.0 / self.delay_step).ceil() as i64;
            for i in -k..=k {
                let t = best as f64 + i as f64 * self.delay_step;
                if t < 0.0 || t > (n - 1) as f64 || i == 0 {
                    continue;
                }
                let m = self.delay_metric(&zs, t);
                if m > m_best {
                    m_best = m;
                    tau = t;
                }
            }
        }
        // continuous refinement around the grid optimum; leaving the grid must
        // explain more than one free parameter could pick up from noise
        let (t, m) = golden(
            |t| self.delay_metric(&zs, t),
            (tau - 1.0).max(0.0),
            (tau + 1.0).min((n - 1) as f64),
        );
        if m - m_best > self.n_rx as f64 * self.noise_floor {
            tau = t;
        }
        tau
    }

    /// Global grid search over one angle followed by golden-section polish.
    fn search_angle(
        &self,
        ys: &[Vec<Complex64>],
        knorm2: f64,
        fixed: f64,
        along_az: bool,
    ) -> f64 {
        let eval = |x: f64| {
            let a = if along_az { self.geo.steer(x, fixed) } else { self.geo.steer(fixed, x) };
            self.angle_metric(ys, &a, knorm2)
        };
        let g = self.cfg.angle_grid_deg;
        let steps = (180.0 / g).ceil() as usize;
        let mut best = (-90.0, f64::NEG_INFINITY);
        for i in 0..=steps {
            let x = (-90.0 + i as f64 * g).min(90.0);
            let m = eval(x);
            if m > best.1 {
                best = (x, m);
            }
        }
        let (x, f) = golden(eval, (best.0 - g).max(-90.0), (best.0 + g).min(90.0));
        if f > best.1 {
            x
        } else {
            best.0
        }
    }

    /// Alternating golden-section polish in direction-cosine space, where the
    /// main lobe of a planar array is axis-aligned.
    fn polish_uv(&self, ys: &[Vec<Complex64>], knorm2: f64, az: f64, el: f64) -> (f64, f64) {
        let (a0, e0) = (az.to_radians(), el.to_radians());
        let (mut u, mut v) = (a0.sin() * e0.cos(), e0.sin());
        let eval = |u: f64, v: f64| {
            let (a, e) = uv_to_angles(u, v);
            self.angle_metric(ys, &self.geo.steer(a, e), knorm2)
        };
        let mut best = eval(u, v);
        let du = 1.0 / self.geo.n_x as f64;
        let dv = 1.0 / self.geo.n_y as f64;
        for _ in 0..3 {
            if self.geo.az_free() {
                let lim = (1.0 - v * v).max(0.0).sqrt();
                let (x, f) = golden(|x| eval(x, v), (u - du).max(-lim), (u + du).min(lim));
                if f > best {
                    best = f;
                    u = x;
                }
            }
            if self.geo.el_free() {
                let lim = (1.0 - u * u).max(0.0).sqrt();
                let (x, f) = golden(|x| eval(u, x), (v - dv).max(-lim), (v + dv).min(lim));
                if f > best {
                    best = f;
                    v = x;
                }
            }
        }
        let (a, e) = uv_to_angles(u, v);
        let a = if self.geo.az_free() { a } else { 0.0 };
        let e = if self.geo.el_free() { e } else { 0.0 };
        let fin = self.angle_metric(ys, &self.geo.steer(a, e), knorm2);
        let start = self.angle_metric(ys, &self.geo.steer(az, el), knorm2);
        if fin >= start {
            (a, e)
        } else {
            (az, el)
        }
    }

    /// Least-squares amplitudes and explained energy at fixed parameters.
    fn fit_amplitudes(&self, tau: f64, az: f64, el: f64) -> (Vec<Complex64>, f64) {
        let kern = Kernel::new(tau, self.n_delay);
        let ys = self.project_delay(&kern);
        let a = self.geo.steer(az, el);
        let n = self.n_tx as f64 * kern.norm2();
        let mut metric = 0.0;
        let amps = ys
            .iter()
            .map(|y| {
                let p: Complex64 = a.iter().zip(y).map(|(ai, yi)| ai.conj() * yi).sum();
                metric += p.norm_sqr() / n;
                p / n
            })
            .collect();
        (amps, metric)
    }

    /// M-step for one path against the current residual (which must already
    /// include the path's own contribution): delay, azimuth, elevation, amplitude.
    fn maximize(&self, start: &Params) -> (Params, f64) {
        let tau = self.search_delay(start.az, start.el);
        let kern = Kernel::new(tau, self.n_delay);
        let ys = self.project_delay(&kern);
        let kn = kern.norm2();
        let mut az = start.az;
        let mut el = start.el;
        if self.geo.az_free() {
            az = self.search_angle(&ys, kn, el, true);
        }
        if self.geo.el_free() {
            el = self.search_angle(&ys, kn, az, false);
        }
        (az, el) = self.polish_uv(&ys, kn, az, el);
        let (amps, metric) = self.fit_amplitudes(tau, az, el);
        (Params { tau, az, el, amps }, metric)
    }

    /// One SAGE pass: each path is re-estimated against the residual with its
    /// own contribution restored. Updates that lower the metric are rejected,
    /// so the residual energy never increases.
    fn sweep(&mut self, params: &mut [Params]) {
        for p in params.iter_mut() {
            let old = p.clone();
            self.add_path(&old, 1.0);
            let (old_amps, old_metric) = self.fit_amplitudes(old.tau, old.az, old.el);
            let (cand, metric) = self.maximize(&old);
            let next = if metric >= old_metric { cand } else { Params { amps: old_amps, ..old } };
            self.add_path(&next, -1.0);
            *p = next;
        }
    }

    /// Coarse (u, v) beamspace search at one delay bin via zero-padded 2-D FFT.
    fn coarse_angles(&self, bin: usize) -> (f64, f64) {
        let (nx, ny) = (self.geo.n_x, self.geo.n_y);
        let px = if nx > 1 { (4 * nx).next_power_of_two().max(16) } else { 1 };
        let py = if ny > 1 { (4 * ny).next_power_of_two().max(16) } else { 1 };
        let mut planner = FftPlanner::<f64>::new();
        let fx = planner.plan_fft_forward(px);
        let fy = planner.plan_fft_forward(py);
        let mut acc = vec![0.0f64; px * py];
        let mut grid = vec![Complex64::new(0.0, 0.0); px * py];
        let mut col = vec![Complex64::new(0.0, 0.0); py];
        for r in 0..self.n_rx {
            grid.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
            for row in 0..ny {
                for c in 0..nx {
                    let t = row * nx + c;
                    grid[row * px + c] = self.res[(r * self.n_tx + t) * self.n_delay + bin];
                }
            }
            for row in 0..ny {
                fx.process(&mut grid[row * px..(row + 1) * px]);
            }
            if py > 1 {
                for c in 0..px {
                    for row in 0..py {
                        col[row] = grid[row * px + c];
                    }
                    fy.process(&mut col);
                    for row in 0..py {
                        grid[row * px + c] = col[row];
                    }
                }
            }
            for (a, z) in acc.iter_mut().zip(&grid) {
                *a += z.norm_sqr();
            }
        }
        // forward-FFT bin m peaks for a ramp exp(+j·2π·m·n/P), i.e. a steering
        // phase step k·d·u = 2π·m/P along the columns
        let freq = |m: usize, p: usize| {
            let m = if m < p.div_ceil(2) { m as f64 } else { m as f64 - p as f64 };
            2.0 * std::f64::consts::PI * m / p as f64
        };
        let mut best = (0.0, 0.0, f64::NEG_INFINITY);
        for iy in 0..py {
            // y decreases with row index, so the row ramp has the opposite sign
            let v = if ny > 1 { -freq(iy, py) / self.geo.kd } else { 0.0 };
            for ix in 0..px {
                let u = if nx > 1 { freq(ix, px) / self.geo.kd } else { 0.0 };
                if u * u + v * v > 1.0 {
                    continue;
                }
                let m = acc[iy * px + ix];
                if m > best.2 {
                    best = (u, v, m);
                }
            }
        }
        uv_to_angles(best.0, best.1)
    }
}

/// Golden-section maximisation on [lo, hi]; returns (argmax, max).
fn golden(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> (f64, f64) {
    if hi <= lo {
        return (lo, f(lo));
    }
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..GOLDEN_ITERS {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = f(x1);
        }
    }
    if f1 > f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

fn uv_to_angles(u: f64, v: f64) -> (f64, f64) {
    let r = (u * u + v * v).sqrt();
    let (u, v) = if r > 0.999_999 { (u / r * 0.999_999, v / r * 0.999_999) } else { (u, v) };
    let el = v.asin();
    let az = (u / el.cos()).clamp(-1.0, 1.0).asin();
    (az.to_degrees(), el.to_degrees())
}

fn per_sample_noise_floor(snap: &Snapshot<'_>) -> f64 {
    let mut power = vec![0.0; snap.n_delay];
    for link in snap.data.chunks_exact(snap.n_delay) {
        for (p, z) in power.iter_mut().zip(link) {
            *p += (z.re as f64).powi(2) + (z.im as f64).powi(2);
        }
    }
    let pdp = Pdp::new(power, snap.delay_resolution);
    let est = estimate_noise_floor(&pdp, DEFAULT_TAIL_FRACTION)
        .map(|f| f / (snap.n_rx * snap.n_tx) as f64)
        .unwrap_or(0.0);
    let peak = snap
        .data
        .iter()
        .map(|z| (z.re as f64).powi(2) + (z.im as f64).powi(2))
        .fold(0.0, f64::max);
    est.max(peak * QUANTIZATION_FLOOR)
}

/// Estimates multipath components of one snapshot.
pub fn sage_estimate(snap: &Snapshot<'_>, array: &ArraySpec, cfg: &SageConfig) -> Result<SageResult> {
    cfg.validate()?;
    array.validate()?;
    if array.is_degenerate() {
        return Err(Error::DegenerateArray);
    }
    if array.n_elements() != snap.n_tx {
        return Err(Error::DimensionMismatch(format!(
            "array has {} elements, snapshot has n_tx = {}",
            array.n_elements(),
            snap.n_tx
        )));
    }
    if snap.n_delay < 2 {
        return Err(invalid("snapshot needs at least 2 delay bins"));
    }
    let noise_floor = per_sample_noise_floor(snap);
    let mut w = Work {
        geo: Geometry::new(array),
        cfg,
        n_rx: snap.n_rx,
        n_tx: snap.n_tx,
        n_delay: snap.n_delay,
        res: snap.to_c64(),
        delay_step: cfg.delay_grid_s / snap.delay_resolution,
        noise_floor,
    };
    let e_in = w.energy();
    if e_in == 0.0 {
        return Ok(SageResult {
            paths: vec![],
            components: vec![],
            residual_energy: 0.0,
            iterations_used: 0,
            converged: true,
            residual_history: vec![0.0],
            input_energy: 0.0,
            noise_floor,
        });
    }
    let min_power = noise_floor * db_to_lin(cfg.min_path_power_db);
    let penalty = cfg.penalty_weight * noise_floor * snap.n_rx as f64;

    // successive interference cancellation
    let mut params: Vec<Params> = Vec::new();
    let mut e = e_in;
    while params.len() < cfg.max_paths && e > EXHAUSTED_REL * e_in {
        let per_bin: Vec<f64> = (0..w.n_delay)
            .map(|d| {
                (0..w.n_rx * w.n_tx)
                    .map(|l| w.res[l * w.n_delay + d].norm_sqr())
                    .sum()
            })
            .collect();
        let bin = (0..w.n_delay).fold(0, |b, d| if per_bin[d] > per_bin[b] { d } else { b });
        let (az0, el0) = w.coarse_angles(bin);
        let mut p = Params {
            tau: bin as f64,
            az: if w.geo.az_free() { az0 } else { 0.0 },
            el: if w.geo.el_free() { el0 } else { 0.0 },
            amps: vec![Complex64::new(0.0, 0.0); w.n_rx],
        };
        let (np, metric) = w.maximize(&p);
        p = np;
        let mean_power = p.amps.iter().map(|a| a.norm_sqr()).sum::<f64>() / w.n_rx as f64;
        if mean_power < min_power || metric <= penalty || metric <= 0.0 {
            break;
        }
        w.add_path(&p, -1.0);
        params.push(p);
        if params.len() > 1 {
            // earlier estimates were made with this path still in the residual
            w.sweep(&mut params);
        }
        e = w.energy();
    }
    let mut history = vec![e];

    // SAGE iterations
    let mut iterations = 0;
    let mut converged = e <= EXHAUSTED_REL * e_in || params.is_empty();
    while !converged && iterations < cfg.max_iterations {
        iterations += 1;
        w.sweep(&mut params);
        let e_new = w.energy().min(e);
        history.push(e_new);
        let gain = (e - e_new) / e_in;
        e = e_new;
        if gain < cfg.stop_rel_ll || e <= EXHAUSTED_REL * e_in {
            converged = true;
        }
    }

    let mut comps: Vec<Component> = params
        .iter()
        .map(|p| Component {
            delay_s: p.tau * snap.delay_resolution,
            az_deg: p.az,
            el_deg: p.el,
            rx_amplitudes: p.amps.clone(),
        })
        .collect();
    comps.sort_by(|a, b| b.mean_power().total_cmp(&a.mean_power()));
    Ok(SageResult {
        paths: comps.iter().map(Component::to_path).collect(),
        components: comps,
        residual_energy: (w.energy() / e_in).clamp(0.0, 1.0),
        iterations_used: iterations,
        converged,
        residual_history: history,
        input_energy: e_in,
        noise_floor,
    })
}
