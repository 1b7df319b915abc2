//! `fr3kit` command-line front end.
//!
//! Exit codes: 0 success, 1 validation error (one `CODE: message` line on
//! stderr), 2 usage error. Every CSV starts with `#` provenance lines; JSON
//! summaries carry the same data under `provenance`. Dataset directories get a
//! `provenance.txt` sidecar since `cir.bin` cannot hold comments.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde_json::{json, Map, Value};

use fr3kit::array::{extract_dataset, parse_shape, TopologySelection};
use fr3kit::channel::{read_dataset, write_dataset, Dataset, LosState};
use fr3kit::pipeline::{dataset_spreads, SpreadConfig};
use fr3kit::sage::{sage_estimate, SageConfig};
use fr3kit::sounding::{calibrate, compute_pdp, CalibrationRecord, PdpScope, DEFAULT_TAIL_FRACTION};
use fr3kit::stats::{empirical_cdf, fit_ci, path_loss};
use fr3kit::synthgen::{default_arrays, default_profiles, draw_distances, generate, PathCountModel, SynthConfig};
use fr3kit::sysperf::{
    band_report, det_beamforming_power, noncoherent_power, theoretical_se_sweep, topology_se, transmit_snr_for,
    ReportConfig, SubcarrierPolicy, DEFAULT_MC_REALIZATIONS, DEFAULT_SUBCARRIERS,
};
use fr3kit::units::{dbm_to_mw, mw_to_dbm};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug)]
pub enum CliError {
    Validation { code: &'static str, message: String },
}

impl CliError {
    fn missing(flag: &str) -> Self {
        CliError::Validation {
            code: "E_MISSING_INPUT",
            message: format!("--{flag} is required"),
        }
    }

    fn invalid(message: impl Into<String>) -> Self {
        CliError::Validation { code: "E_INVALID", message: message.into() }
    }
}

impl From<fr3kit::Error> for CliError {
    fn from(e: fr3kit::Error) -> Self {
        CliError::Validation { code: e.code(), message: e.to_string() }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "fr3kit", version, about = "Dual-band channel sounding processing and evaluation")]
struct Cli {
    /// JSON file with parameters; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Progress messages on stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Deconvolve raw captures with a calibration record.
    Calibrate(CalibrateArgs),
    /// Power delay profile.
    Pdp(PdpArgs),
    /// SAGE multipath extraction.
    Sage(SageArgs),
    /// Close-in path loss fit.
    PathlossFit(PathlossArgs),
    /// Per-snapshot delay and angular spreads.
    Spreads(SpreadsArgs),
    /// Extract a sub-array from the base grid.
    Topo(TopoArgs),
    /// Received-power CDFs for two bands.
    Coverage(CoverageArgs),
    /// Spectral efficiency, measured or i.i.d. theory.
    Se(SeArgs),
    /// Synthetic dataset with ground truth.
    Synth(SynthArgs),
    /// Cross-band CDFs and gap summary.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct CalibrateArgs {
    #[arg(long = "in")]
    input: Option<PathBuf>,
    #[arg(long)]
    cal: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PdpArgs {
    #[arg(long = "in")]
    input: Option<PathBuf>,
    /// omni or link
    #[arg(long)]
    scope: Option<String>,
    #[arg(long)]
    rx: Option<usize>,
    #[arg(long)]
    tx: Option<usize>,
    #[arg(long)]
    tail_fraction: Option<f64>,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SageArgs {
    #[arg(long = "in")]
    input: Option<PathBuf>,
    /// Snapshot index or `all`.
    #[arg(long)]
    snapshot: Option<String>,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PathlossArgs {
    #[arg(long = "in")]
    input: Option<PathBuf>,
    #[arg(long, conflicts_with = "nlos")]
    los: bool,
    #[arg(long)]
    nlos: bool,
    #[arg(long)]
    rx_gain_dbi: Option<f64>,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SpreadsArgs {
    #[arg(long = "in")]
    input: Option<PathBuf>,
    #[arg(long)]
    delay_only: bool,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TopoArgs {
    #[arg(long = "in")]
    input: Option<PathBuf>,
    /// rows x cols, e.g. 4x8
    #[arg(long)]
    shape: Option<String>,
    /// row,col of the top-left element
    #[arg(long)]
    origin: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CoverageArgs {
    #[arg(long)]
    in8: Option<PathBuf>,
    #[arg(long)]
    in15: Option<PathBuf>,
    /// noncoherent or det
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    p_t_dbm: Option<f64>,
    #[arg(long)]
    subcarriers: Option<usize>,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SeArgs {
    #[arg(long = "in")]
    input: Option<PathBuf>,
    #[arg(long)]
    topo: Option<String>,
    #[arg(long)]
    origin: Option<String>,
    /// i.i.d. Rayleigh Monte Carlo sweep instead of measured channels.
    #[arg(long)]
    theory: bool,
    #[arg(long)]
    nt_max: Option<usize>,
    #[arg(long)]
    n_r: Option<usize>,
    #[arg(long)]
    mc: Option<usize>,
    #[arg(long)]
    rho_db: Option<f64>,
    #[arg(long)]
    subcarriers: Option<usize>,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// 8 or 15
    #[arg(long)]
    band: Option<u32>,
    /// los or nlos
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    snapshots: Option<usize>,
    #[arg(long)]
    n_rx: Option<usize>,
    #[arg(long)]
    n_delay: Option<usize>,
    #[arg(long)]
    d_min: Option<f64>,
    #[arg(long)]
    d_max: Option<f64>,
    #[arg(long)]
    snr_db: Option<f64>,
    /// Fixed path count instead of the Poisson model.
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    #[arg(long)]
    in8: Option<PathBuf>,
    #[arg(long)]
    in15: Option<PathBuf>,
    #[arg(long)]
    p_t_dbm: Option<f64>,
    #[arg(long)]
    rho_tx_db: Option<f64>,
    #[arg(long)]
    subcarriers: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Config-file values, looked up when a flag is absent.
struct Cfg {
    map: Map<String, Value>,
}

impl Cfg {
    fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(p) = path else {
            return Ok(Cfg { map: Map::new() });
        };
        let text = fs::read_to_string(p).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => fr3kit::Error::MissingFile(p.to_path_buf()),
            _ => fr3kit::Error::io(p, e),
        })?;
        match serde_json::from_str::<Value>(&text).map_err(fr3kit::Error::from)? {
            Value::Object(map) => Ok(Cfg { map }),
            _ => Err(CliError::invalid("config must be a JSON object")),
        }
    }

    fn value<T: DeserializeOwned>(&self, key: &str) -> CliResult<Option<T>> {
        match self.map.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(v) => serde_json::from_value(v.clone())
                .map(Some)
                .map_err(|e| CliError::invalid(format!("config key {key}: {e}"))),
        }
    }

    fn pick<T: DeserializeOwned>(&self, flag: Option<T>, key: &str) -> CliResult<Option<T>> {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self.value(key),
        }
    }

    fn require<T: DeserializeOwned>(&self, flag: Option<T>, key: &str) -> CliResult<T> {
        self.pick(flag, key)?.ok_or_else(|| CliError::missing(key))
    }

    fn flag(&self, flag: bool, key: &str) -> CliResult<bool> {
        Ok(flag || self.value::<bool>(key)?.unwrap_or(false))
    }

    /// A module config from the `key` sub-object, else from the top level.
    fn section<T: DeserializeOwned + Default>(&self, key: &str) -> CliResult<T> {
        let v = self.map.get(key).cloned().unwrap_or_else(|| Value::Object(self.map.clone()));
        serde_json::from_value(v).map_err(|e| CliError::invalid(format!("config section {key}: {e}")))
    }
}

struct Ctx {
    command_line: String,
    seed: u64,
    verbose: bool,
}

impl Ctx {
    fn header(&self) -> String {
        format!(
            "# fr3kit {VERSION}\n# command: {}\n# seed: {}\n",
            self.command_line, self.seed
        )
    }

    fn provenance(&self) -> Value {
        json!({ "tool": format!("fr3kit {VERSION}"), "command": self.command_line, "seed": self.seed })
    }

    fn log(&self, msg: &str) {
        if self.verbose {
            eprintln!("{msg}");
        }
    }

    fn write_csv(&self, path: &Path, columns: &str, body: &str) -> CliResult<()> {
        let mut s = self.header();
        s.push_str(columns);
        s.push('\n');
        s.push_str(body);
        write_file(path, s.as_bytes())
    }

    fn write_json(&self, path: &Path, mut v: Value) -> CliResult<()> {
        if let Value::Object(m) = &mut v {
            m.insert("provenance".into(), self.provenance());
        }
        let mut s = serde_json::to_string_pretty(&v).map_err(fr3kit::Error::from)?;
        s.push('\n');
        write_file(path, s.as_bytes())
    }

    fn write_dataset(&self, ds: &Dataset, dir: &Path) -> CliResult<()> {
        write_dataset(ds, dir)?;
        write_file(&dir.join("provenance.txt"), self.header().as_bytes())
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| fr3kit::Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| fr3kit::Error::io(path, e).into())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn parse_origin(s: Option<String>) -> CliResult<(usize, usize)> {
    let Some(s) = s else { return Ok((0, 0)) };
    let (r, c) = s
        .split_once(',')
        .ok_or_else(|| CliError::invalid(format!("origin must be row,col, got {s}")))?;
    let p = |x: &str| {
        x.trim()
            .parse::<usize>()
            .map_err(|_| CliError::invalid(format!("bad origin component {x}")))
    };
    Ok((p(r)?, p(c)?))
}

fn parse_los(s: &str) -> CliResult<LosState> {
    match s.to_ascii_lowercase().as_str() {
        "los" => Ok(LosState::Los),
        "nlos" => Ok(LosState::Nlos),
        _ => Err(CliError::invalid(format!("scenario must be los or nlos, got {s}"))),
    }
}

fn cmd_calibrate(a: CalibrateArgs, cfg: &Cfg, ctx: &Ctx) -> CliResult<()> {
    let input: PathBuf = cfg.require(a.input, "in")?;
    let cal_path: PathBuf = cfg.require(a.cal, "cal")?;
    let out: PathBuf = cfg.require(a.out, "out")?;
    let mut ds = read_dataset(&input)?;
    let text = fs::read_to_string(&cal_path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => fr3kit::Error::MissingFile(cal_path.clone()),
        _ => fr3kit::Error::io(&cal_path, e),
    })?;
    let cal: CalibrationRecord = serde_json::from_str(&text).map_err(fr3kit::Error::from)?;
    ctx.log("deconvolving");
    ds.tensor = calibrate(&ds.tensor, &cal)?;
    ctx.write_dataset(&ds, &out)
}

fn cmd_pdp(a: PdpArgs, cfg: &Cfg, ctx: &Ctx) -> CliResult<()> {
    let input: PathBuf = cfg.require(a.input, "in")?;
    let csv: PathBuf = cfg.require(a.csv, "csv")?;
    let scope_s: String = cfg.pick(a.scope, "scope")?.unwrap_or_else(|| "omni".into());
    let tail = cfg.pick(a.tail_fraction, "tail_fraction")?.unwrap_or(DEFAULT_TAIL_FRACTION);
    let ds = read_dataset(&input)?;
    let scope = match scope_s.as_str() {
        "omni" => PdpScope::Omni,
        "link" => PdpScope::Link {
            rx: cfg.pick(a.rx, "rx")?.unwrap_or(0),
            tx: cfg.pick(a.tx, "tx")?.unwrap_or(0),
        },
        other => return Err(CliError::invalid(format!("scope must be omni or link, got {other}"))),
    };
    let pdp = compute_pdp(&ds.tensor, scope)?;
    let clean = pdp.clone().cleaned(tail)?;
    let mut body = String::new();
    for ((d, p), c) in pdp.delays().zip(&pdp.power).zip(&clean.power) {
        let _ = writeln!(body, "{d},{p},{c}");
    }
    ctx.write_csv(&csv, "delay_s,power_mw,power_thresholded_mw", &body)
}

fn snapshot_list(sel: &str, n: usize) -> CliResult<Vec<usize>> {
    if sel == "all" {
        return Ok((0..n).collect());
    }
    let i: usize = sel
        .parse()
        .map_err(|_| CliError::invalid(format!("snapshot must be an index or all, got {sel}")))?;
    if i >= n {
        return Err(fr3kit::Error::OutOfBounds(format!("snapshot {i} of {n}")).into());
    }
    Ok(vec![i])
}

fn cmd_sage(a: SageArgs, cfg: &Cfg, ctx: &Ctx) -> CliResult<()> {
    let input: PathBuf = cfg.require(a.input, "in")?;
    let csv: PathBuf = cfg.require(a.csv, "csv")?;
    let sel: String = match cfg.pick(a.snapshot, "snapshot")? {
        Some(s) => s,
        None => "all".into(),
    };
    let sc: SageConfig = cfg.section("sage")?;
    sc.validate()?;
    let ds = read_dataset(&input)?;
    let mut body = String::new();
    for s in snapshot_list(&sel, ds.tensor.n_snap)? {
        ctx.log(&format!("snapshot {s}"));
        let r = sage_estimate(&ds.tensor.snapshot(s), &ds.array, &sc)?;
        for p in &r.paths {
            let _ = writeln!(body, "{s},{},{},{},{}", p.delay_s, p.aod_az_deg, p.aod_el_deg, p.power_db);
        }
    }
    ctx.write_csv(&csv, "snapshot,delay_s,aod_az_deg,aod_el_deg,power_db", &body)
}

fn cmd_pathloss(a: PathlossArgs, cfg: &Cfg, ctx: &Ctx) -> CliResult<()> {
    let input: PathBuf = cfg.require(a.input, "in")?;
    let csv: PathBuf = cfg.require(a.csv, "csv")?;
    let los = cfg.flag(a.los, "los")?;
    let nlos = cfg.flag(a.nlos, "nlos")?;
    let state = match (los, nlos) {
        (true, false) => LosState::Los,
        (false, true) => LosState::Nlos,
        _ => return Err(CliError::invalid("exactly one of --los / --nlos is required")),
    };
    let g_r = cfg.pick(a.rx_gain_dbi, "rx_gain_dbi")?.unwrap_or(0.0);
    let ds = read_dataset(&input)?;
    let mut points = Vec::new();
    let mut body = String::new();
    for (s, m) in ds.snapshots.iter().enumerate() {
        if m.los_state != state {
            continue;
        }
        let pl = path_loss(&ds.tensor, &[s], ds.tx_power_dbm, ds.array.element_gain_dbi, g_r)?;
        points.push((m.t_r_distance_m, pl));
        let _ = writeln!(body, "point,{},{},{},,,", m.point_id, m.t_r_distance_m, pl);
    }
    if points.is_empty() {
        return Err(fr3kit::Error::EmptySelection.into());
    }
    let fit = fit_ci(&points, ds.tensor.carrier_hz, state)?;
    let _ = writeln!(body, "fit,,,,{},{},{}", fit.pl_d0_db, fit.ple, fit.sigma_db);
    ctx.write_csv(&csv, "kind,point_id,distance_m,path_loss_db,pl_d0_db,ple,sigma_db", &body)
}

fn cmd_spreads(a: SpreadsArgs, cfg: &Cfg, ctx: &Ctx) -> CliResult<()> {
    let input: PathBuf = cfg.require(a.input, "in")?;
    let csv: PathBuf = cfg.require(a.csv, "csv")?;
    let mut sc: SpreadConfig = cfg.section("spreads")?;
    sc.sage = cfg.section("sage")?;
    sc.delay_only = cfg.flag(a.delay_only, "delay_only")?;
    let ds = read_dataset(&input)?;
    ctx.log(&format!("{} snapshots", ds.tensor.n_snap));
    let rep = dataset_spreads(&ds, &sc)?;
    let mut body = String::new();
    for r in &rep.rows {
        let _ = writeln!(
            body,
            "snapshot,{},{},{},{},{},{},,,",
            r.snapshot,
            r.point_id,
            opt(r.ds_s),
            opt(r.asa_deg),
            opt(r.esa_deg),
            r.n_paths
        );
    }
    for (name, st) in [("ds", &rep.ds), ("asa", &rep.asa), ("esa", &rep.esa)] {
        if let Some(st) = st {
            let _ = writeln!(
                body,
                "summary_{name},,,,,,,{},{},{}",
                st.log_mu,
                st.log_sigma,
                st.values.len()
            );
        }
    }
    ctx.write_csv(
        &csv,
        "kind,snapshot,point_id,ds_s,asa_deg,esa_deg,n_paths,log_mu,log_sigma,n_used",
        &body,
    )
}

fn cmd_topo(a: TopoArgs, cfg: &Cfg, ctx: &Ctx) -> CliResult<()> {
    let input: PathBuf = cfg.require(a.input, "in")?;
    let out: PathBuf = cfg.require(a.out, "out")?;
    let shape: String = cfg.require(a.shape, "shape")?;
    let origin = parse_origin(cfg.pick(a.origin, "origin")?)?;
    let ds = read_dataset(&input)?;
    let sel = TopologySelection::new(ds.array.clone(), parse_shape(&shape)?, origin);
    let sub = extract_dataset(&sel, &ds)?;
    ctx.write_dataset(&sub, &out)
}

fn power_series(ds: &Dataset, det: bool, p_t_dbm: f64, k: usize) -> CliResult<Vec<f64>> {
    let p_t = dbm_to_mw(p_t_dbm);
    (0..ds.tensor.n_snap)
        .map(|s| {
            let snap = ds.tensor.snapshot(s);
            let p = if det {
                det_beamforming_power(&snap, p_t, SubcarrierPolicy::Wideband(k), ds.tx_power_dbm)?
            } else {
                noncoherent_power(&snap, p_t, ds.tx_power_dbm)
            };
            Ok(mw_to_dbm(p))
        })
        .collect()
}

fn cdf_rows(body: &mut String, label: &str, values: &[f64]) -> CliResult<()> {
    for (v, p) in empirical_cdf(values)? {
        let _ = writeln!(body, "{label},{v},{p}");
    }
    Ok(())
}

fn cmd_coverage(a: CoverageArgs, cfg: &Cfg, ctx: &Ctx) -> CliResult<()> {
    let in8: PathBuf = cfg.require(a.in8, "in8")?;
    let in15: PathBuf = cfg.require(a.in15, "in15")?;
    let csv: PathBuf = cfg.require(a.csv, "csv")?;
    let mode: String = cfg.pick(a.mode, "mode")?.unwrap_or_else(|| "noncoherent".into());
    let det = match mode.as_str() {
        "noncoherent" => false,
        "det" => true,
        other => return Err(CliError::invalid(format!("mode must be noncoherent or det, got {other}"))),
    };
    let p_t = cfg.pick(a.p_t_dbm, "p_t_dbm")?.unwrap_or(ReportConfig::default().p_t_dbm);
    let k = cfg.pick(a.subcarriers, "subcarriers")?.unwrap_or(DEFAULT_SUBCARRIERS);
    let mut body = String::new();
    for (label, dir) in [("8GHz", &in8), ("15GHz", &in15)] {
        let ds = read_dataset(dir)?;
        cdf_rows(&mut body, label, &power_series(&ds, det, p_t, k)?)?;
    }
    ctx.write_csv(&csv, "band,received_power_dbm,cdf", &body)
}

fn cmd_se(a: SeArgs, cfg: &Cfg, ctx: &Ctx) -> CliResult<()> {
    let csv: PathBuf = cfg.require(a.csv, "csv")?;
    let rho = cfg.pick(a.rho_db, "rho_db")?;
    let k = cfg.pick(a.subcarriers, "subcarriers")?.unwrap_or(DEFAULT_SUBCARRIERS);
    let mut body = String::new();
    if cfg.flag(a.theory, "theory")? {
        let nt_max = cfg.pick(a.nt_max, "nt_max")?.unwrap_or(160);
        let n_r = cfg.pick(a.n_r, "n_r")?.unwrap_or(40);
        let mc = cfg.pick(a.mc, "mc")?.unwrap_or(DEFAULT_MC_REALIZATIONS);
        ctx.log(&format!("Monte Carlo sweep to N_t = {nt_max}"));
        for st in theoretical_se_sweep(nt_max, n_r, rho.unwrap_or(20.0), mc, ctx.seed)? {
            let _ = writeln!(body, "{},{},{}", st.n_t, st.mean, st.std);
        }
        return ctx.write_csv(&csv, "n_t,se_mean,se_std", &body);
    }
    let input: PathBuf = cfg.require(a.input, "in")?;
    let ds = read_dataset(&input)?;
    // one transmit SNR for the whole grid so that topologies compare fairly
    let rho = match rho {
        Some(r) => r,
        None => transmit_snr_for(&ds, 20.0)?,
    };
    let shape = match cfg.pick(a.topo, "topo")? {
        Some(s) => parse_shape(&s)?,
        None => (ds.array.n_y, ds.array.n_x),
    };
    let sel = TopologySelection::new(ds.array.clone(), shape, parse_origin(cfg.pick(a.origin, "origin")?)?);
    let se = topology_se(&ds, &sel, rho, k)?;
    for (s, v) in se.iter().enumerate() {
        let _ = writeln!(body, "{s},{},{v}", ds.snapshots[s].point_id);
    }
    ctx.write_csv(&csv, "snapshot,point_id,se_bps_hz", &body)
}

fn cmd_synth(a: SynthArgs, cfg: &Cfg, ctx: &Ctx) -> CliResult<()> {
    let band: u32 = cfg.require(a.band, "band")?;
    let scenario: String = cfg.require(a.scenario, "scenario")?;
    let n: usize = cfg.require(a.snapshots, "snapshots")?;
    let out: PathBuf = cfg.require(a.out, "out")?;
    let truth_path: Option<PathBuf> = cfg.pick(a.truth, "truth")?;
    let los = parse_los(&scenario)?;
    let (p8, p15) = default_profiles();
    let (a8, a15) = default_arrays();
    let (profile, array) = match band {
        8 => (p8, a8),
        15 => (p15, a15),
        other => return Err(CliError::invalid(format!("band must be 8 or 15, got {other}"))),
    };
    let mut sc: SynthConfig = cfg.section("synth")?;
    if let Some(v) = cfg.pick(a.n_rx, "n_rx")? {
        sc.n_rx = v;
    }
    if let Some(v) = cfg.pick(a.n_delay, "n_delay")? {
        sc.n_delay = v;
    }
    if let Some(v) = cfg.pick(a.snr_db, "snr_db")? {
        sc.snr_db = Some(v);
    }
    if let Some(v) = cfg.pick(a.paths, "paths")? {
        sc.path_count = PathCountModel::Fixed(v);
    }
    let d_min = cfg.pick(a.d_min, "d_min")?.unwrap_or(10.0);
    let d_max = cfg.pick(a.d_max, "d_max")?.unwrap_or(500.0);
    if !(d_min >= 1.0 && d_max >= d_min) {
        return Err(CliError::invalid("distances must satisfy 1 <= d_min <= d_max"));
    }
    let distances = draw_distances(n, d_min, d_max, ctx.seed);
    ctx.log(&format!("generating {n} snapshots"));
    let (ds, truth) = generate(&profile, &array, los, &distances, ctx.seed, &sc)?;
    ctx.write_dataset(&ds, &out)?;
    if let Some(tp) = truth_path {
        let mut body = String::new();
        for (s, t) in truth.snapshots.iter().enumerate() {
            for (i, p) in t.paths().iter().enumerate() {
                let _ = writeln!(body, "{s},{i},{},{},{},{}", p.delay_s, p.aod_az_deg, p.aod_el_deg, p.power_db);
            }
        }
        ctx.write_csv(&tp, "snapshot,path,delay_s,az_deg,el_deg,power_db", &body)?;
    }
    Ok(())
}

fn cmd_report(a: ReportArgs, cfg: &Cfg, ctx: &Ctx) -> CliResult<()> {
    let in8: PathBuf = cfg.require(a.in8, "in8")?;
    let in15: PathBuf = cfg.require(a.in15, "in15")?;
    let out: PathBuf = cfg.require(a.out, "out")?;
    let mut rc: ReportConfig = cfg.section("report")?;
    if let Some(v) = cfg.pick(a.p_t_dbm, "p_t_dbm")? {
        rc.p_t_dbm = v;
    }
    if let Some(v) = cfg.pick(a.rho_tx_db, "rho_tx_db")? {
        rc.rho_tx_db = Some(v);
    }
    if let Some(v) = cfg.pick(a.subcarriers, "subcarriers")? {
        rc.subcarriers = v;
    }
    let d8 = read_dataset(&in8)?;
    let d15 = read_dataset(&in15)?;
    ctx.log("computing band metrics");
    let rep = band_report(&[("8GHz", &d8), ("15GHz", &d15)], &rc)?;
    for (name, pick) in [
        ("noncoherent_cdf.csv", 0usize),
        ("det_cdf.csv", 1),
        ("se_cdf.csv", 2),
    ] {
        let mut body = String::new();
        for b in &rep.bands {
            let v = match pick {
                0 => &b.noncoherent_dbm,
                1 => &b.det_dbm,
                _ => &b.se,
            };
            cdf_rows(&mut body, &b.label, v)?;
        }
        let col = if pick == 2 { "band,se_bps_hz,cdf" } else { "band,received_power_dbm,cdf" };
        ctx.write_csv(&out.join(name), col, &body)?;
    }
    let g = &rep.gaps[0];
    let summary = json!({
        "reference_band": g.reference,
        "other_band": g.other,
        "outage": rep.outage,
        "p_t_dbm": rep.p_t_dbm,
        "rho_tx_db": rep.rho_tx_db,
        "gap_noncoherent_15pct_db": g.gap_noncoherent_15pct_db,
        "gap_noncoherent_median_db": g.gap_noncoherent_median_db,
        "gap_det_15pct_db": g.gap_det_15pct_db,
        "gap_det_median_db": g.gap_det_median_db,
        "se_median_8ghz": g.se_median_reference,
        "se_median_15ghz": g.se_median_other,
        "crossover_noncoherent_dbm": g.crossover_noncoherent_dbm,
        "crossover_det_dbm": g.crossover_det_dbm,
        "n_snapshots_8ghz": d8.tensor.n_snap,
        "n_snapshots_15ghz": d15.tensor.n_snap,
    });
    ctx.write_json(&out.join("summary.json"), summary)
}

fn dispatch(cli: Cli, command_line: String) -> CliResult<()> {
    let cfg = Cfg::load(cli.config.as_deref())?;
    let seed = cfg.pick(cli.seed, "seed")?.unwrap_or(0);
    let ctx = Ctx {
        command_line,
        seed,
        verbose: cfg.flag(cli.verbose, "verbose")?,
    };
    match cli.command {
        Command::Calibrate(a) => cmd_calibrate(a, &cfg, &ctx),
        Command::Pdp(a) => cmd_pdp(a, &cfg, &ctx),
        Command::Sage(a) => cmd_sage(a, &cfg, &ctx),
        Command::PathlossFit(a) => cmd_pathloss(a, &cfg, &ctx),
        Command::Spreads(a) => cmd_spreads(a, &cfg, &ctx),
        Command::Topo(a) => cmd_topo(a, &cfg, &ctx),
        Command::Coverage(a) => cmd_coverage(a, &cfg, &ctx),
        Command::Se(a) => cmd_se(a, &cfg, &ctx),
        Command::Synth(a) => cmd_synth(a, &cfg, &ctx),
        Command::Report(a) => cmd_report(a, &cfg, &ctx),
    }
}

/// Runs one command; `args` includes the program name.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let command_line = args
        .iter()
        .skip(1)
        .map(|a| a.to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join(" ");
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli, command_line) {
        Ok(()) => 0,
        Err(CliError::Validation { code, message }) => {
            eprintln!("{code}: {}", message.replace('\n', " "));
            1
        }
    }
}
