//! `meta.json` + `cir.bin` dataset directories.

use std::fs;
use std::path::Path;

use num_complex::Complex32;
use serde::{Deserialize, Serialize};

use super::{CirTensor, SnapshotMeta, TimingPlan};
use crate::array::ArraySpec;
use crate::error::{invalid, Error, Result};

pub const META_FILE: &str = "meta.json";
pub const CIR_FILE: &str = "cir.bin";

/// A sounding dataset as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub tensor: CirTensor,
    pub snapshots: Vec<SnapshotMeta>,
    pub timing: TimingPlan,
    pub array: ArraySpec,
    pub tx_power_dbm: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    carrier_hz: f64,
    bandwidth_hz: f64,
    n_snap: usize,
    n_rx: usize,
    n_tx: usize,
    n_delay: usize,
    delay_resolution_s: f64,
    tx_power_dbm: f64,
    timing: TimingPlan,
    snapshots: Vec<SnapshotMeta>,
    array: ArraySpec,
}

impl Dataset {
    pub fn validate(&self) -> Result<()> {
        self.tensor.validate()?;
        self.timing.validate()?;
        self.array.validate()?;
        if self.snapshots.len() != self.tensor.n_snap {
            return Err(Error::DimensionMismatch(format!(
                "{} snapshot records for {} snapshots",
                self.snapshots.len(),
                self.tensor.n_snap
            )));
        }
        for s in &self.snapshots {
            s.validate()?;
        }
        if self.array.n_elements() != self.tensor.n_tx {
            return Err(Error::DimensionMismatch(format!(
                "array has {} elements, tensor has n_tx = {}",
                self.array.n_elements(),
                self.tensor.n_tx
            )));
        }
        if !self.tx_power_dbm.is_finite() {
            return Err(invalid("tx_power_dbm must be finite"));
        }
        Ok(())
    }
}

pub fn write_dataset(ds: &Dataset, dir: &Path) -> Result<()> {
    ds.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let t = &ds.tensor;
    let meta = Meta {
        carrier_hz: t.carrier_hz,
        bandwidth_hz: t.bandwidth_hz,
        n_snap: t.n_snap,
        n_rx: t.n_rx,
        n_tx: t.n_tx,
        n_delay: t.n_delay,
        delay_resolution_s: t.delay_resolution,
        tx_power_dbm: ds.tx_power_dbm,
        timing: ds.timing,
        snapshots: ds.snapshots.clone(),
        array: ds.array.clone(),
    };
    let meta_path = dir.join(META_FILE);
    let json = serde_json::to_string_pretty(&meta)?;
    fs::write(&meta_path, json + "\n").map_err(|e| Error::io(&meta_path, e))?;

    let mut bytes = Vec::with_capacity(8 * t.data.len());
    for z in &t.data {
        bytes.extend_from_slice(&z.re.to_le_bytes());
        bytes.extend_from_slice(&z.im.to_le_bytes());
    }
    let cir_path = dir.join(CIR_FILE);
    fs::write(&cir_path, bytes).map_err(|e| Error::io(&cir_path, e))
}

pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let meta_path = dir.join(META_FILE);
    let cir_path = dir.join(CIR_FILE);
    for p in [&meta_path, &cir_path] {
        if !p.is_file() {
            return Err(Error::MissingFile(p.clone()));
        }
    }
    let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta: Meta = serde_json::from_str(&text)?;
    let bytes = fs::read(&cir_path).map_err(|e| Error::io(&cir_path, e))?;

    let count = meta
        .n_snap
        .checked_mul(meta.n_rx)
        .and_then(|v| v.checked_mul(meta.n_tx))
        .and_then(|v| v.checked_mul(meta.n_delay))
        .ok_or_else(|| invalid("dimension product overflows"))?;
    if bytes.len() as u64 != 8 * count as u64 {
        return Err(Error::DimensionMismatch(format!(
            "{} declares {} samples ({} bytes), {} has {} bytes",
            META_FILE,
            count,
            8 * count,
            CIR_FILE,
            bytes.len()
        )));
    }
    let mut data = Vec::with_capacity(count);
    for (i, chunk) in bytes.chunks_exact(8).enumerate() {
        let re = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
        let im = f32::from_le_bytes([chunk[4], chunk[5], chunk[6], chunk[7]]);
        if !re.is_finite() {
            return Err(Error::NonFinite { offset: 8 * i as u64 });
        }
        if !im.is_finite() {
            return Err(Error::NonFinite { offset: 8 * i as u64 + 4 });
        }
        data.push(Complex32::new(re, im));
    }
    let ds = Dataset {
        tensor: CirTensor {
            data,
            n_snap: meta.n_snap,
            n_rx: meta.n_rx,
            n_tx: meta.n_tx,
            n_delay: meta.n_delay,
            delay_resolution: meta.delay_resolution_s,
            carrier_hz: meta.carrier_hz,
            bandwidth_hz: meta.bandwidth_hz,
        },
        snapshots: meta.snapshots,
        timing: meta.timing,
        array: meta.array,
        tx_power_dbm: meta.tx_power_dbm,
    };
    ds.validate()?;
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::LosState;

    fn minimal() -> Dataset {
        let mut t = CirTensor::zeros(1, 1, 1, 4, 8e9, 400e6);
        t.data[0] = Complex32::new(1.0, 0.0);
        Dataset {
            tensor: t,
            snapshots: vec![SnapshotMeta {
                route_id: "r".into(),
                point_id: "p0".into(),
                t_r_distance_m: 10.0,
                los_state: LosState::Los,
                tx_power_dbm: 0.0,
            }],
            timing: TimingPlan::tight(1, 1, 1e-6),
            array: ArraySpec::half_wavelength(1, 1, 8e9, 0.0),
            tx_power_dbm: 0.0,
        }
    }

    #[test]
    fn minimal_impulse_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let ds = minimal();
        write_dataset(&ds, dir.path()).unwrap();
        let back = read_dataset(dir.path()).unwrap();
        assert_eq!(back.tensor.at(0, 0, 0, 0), Complex32::new(1.0, 0.0));
        for d in 1..4 {
            assert_eq!(back.tensor.at(0, 0, 0, d), Complex32::new(0.0, 0.0));
        }
        assert_eq!(back, ds);
    }

    #[test]
    fn metadata_floats_roundtrip_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let mut ds = minimal();
        // needs correctly rounded float parsing; the fast path is off by an ulp
        ds.snapshots[0].t_r_distance_m = 229.90321796461734;
        ds.tx_power_dbm = 0.1 + 0.2;
        write_dataset(&ds, dir.path()).unwrap();
        let back = read_dataset(dir.path()).unwrap();
        assert_eq!(back.snapshots[0].t_r_distance_m.to_bits(), ds.snapshots[0].t_r_distance_m.to_bits());
        assert_eq!(back, ds);
    }

    #[test]
    fn declared_snapshots_exceed_binary() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&minimal(), dir.path()).unwrap();
        let p = dir.path().join(META_FILE);
        let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&p).unwrap()).unwrap();
        v["n_snap"] = 2.into();
        fs::write(&p, v.to_string()).unwrap();
        assert!(matches!(read_dataset(dir.path()), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn missing_file_reported() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(read_dataset(dir.path()), Err(Error::MissingFile(_))));
    }

    #[test]
    fn non_finite_sample_rejected_with_offset() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&minimal(), dir.path()).unwrap();
        let p = dir.path().join(CIR_FILE);
        let mut b = fs::read(&p).unwrap();
        b[20..24].copy_from_slice(&f32::INFINITY.to_le_bytes());
        fs::write(&p, b).unwrap();
        match read_dataset(dir.path()) {
            Err(Error::NonFinite { offset }) => assert_eq!(offset, 20),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn invalid_resolution_rejected_before_write() {
        let dir = tempfile::tempdir().unwrap();
        let mut ds = minimal();
        ds.tensor.delay_resolution = 1e-9;
        assert!(write_dataset(&ds, &dir.path().join("x")).is_err());
        assert!(!dir.path().join("x").exists());
    }

    #[test]
    fn binary_size_matches_layout() {
        let dir = tempfile::tempdir().unwrap();
        let mut ds = minimal();
        ds.tensor = CirTensor::zeros(3, 2, 32, 16, 8e9, 400e6);
        ds.array = ArraySpec::half_wavelength(8, 4, 8e9, 0.0);
        ds.timing = TimingPlan::tight(32, 2, 1e-6);
        ds.snapshots = vec![ds.snapshots[0].clone(); 3];
        write_dataset(&ds, dir.path()).unwrap();
        let len = fs::metadata(dir.path().join(CIR_FILE)).unwrap().len();
        assert_eq!(len, 8 * 3 * 2 * 32 * 16);
    }
}
