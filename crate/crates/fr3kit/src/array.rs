//! Uniform planar array geometry, aperture-matched element scaling, steering
//! vectors and sub-array extraction.
//!
//! Elements are indexed row-major from the top-left of the panel: element
//! `row * n_x + col`. Coordinates are centred on the panel, x to the right and
//! y upwards. Azimuth is measured in the array plane from broadside, elevation
//! from the horizontal.

use num_complex::{Complex32, Complex64};
use serde::{Deserialize, Serialize};

use crate::channel::{CirTensor, Dataset, TimingPlan};
use crate::error::{invalid, Error, Result};
use crate::units::wavelength;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArraySpec {
    /// Elements along the horizontal axis (columns).
    pub n_x: usize,
    /// Elements along the vertical axis (rows).
    pub n_y: usize,
    pub spacing_m: f64,
    pub carrier_hz: f64,
    pub element_gain_dbi: f64,
}

impl ArraySpec {
    pub fn half_wavelength(n_x: usize, n_y: usize, carrier_hz: f64, element_gain_dbi: f64) -> Self {
        ArraySpec {
            n_x,
            n_y,
            spacing_m: wavelength(carrier_hz) / 2.0,
            carrier_hz,
            element_gain_dbi,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_x == 0 || self.n_y == 0 {
            return Err(invalid("array needs at least one element per axis"));
        }
        if !(self.carrier_hz.is_finite() && self.carrier_hz > 0.0) {
            return Err(invalid("array carrier must be > 0"));
        }
        if !(self.spacing_m.is_finite() && self.spacing_m >= 0.0) {
            return Err(invalid("array spacing must be finite and >= 0"));
        }
        if !self.element_gain_dbi.is_finite() {
            return Err(invalid("element gain must be finite"));
        }
        Ok(())
    }

    pub fn n_elements(&self) -> usize {
        self.n_x * self.n_y
    }

    pub fn wavelength(&self) -> f64 {
        wavelength(self.carrier_hz)
    }

    pub fn is_half_wavelength(&self) -> bool {
        let h = self.wavelength() / 2.0;
        (self.spacing_m - h).abs() <= 1e-6 * h
    }

    pub fn is_degenerate(&self) -> bool {
        self.n_elements() > 1 && self.spacing_m == 0.0
    }

    /// Element (x, y) coordinates in metres, row-major.
    pub fn positions(&self) -> Vec<(f64, f64)> {
        let cx = (self.n_x as f64 - 1.0) / 2.0;
        let cy = (self.n_y as f64 - 1.0) / 2.0;
        let mut out = Vec::with_capacity(self.n_elements());
        for row in 0..self.n_y {
            for col in 0..self.n_x {
                out.push((
                    (col as f64 - cx) * self.spacing_m,
                    (cy - row as f64) * self.spacing_m,
                ));
            }
        }
        out
    }

    /// Steering vector for direction cosines u = sin az·cos el, v = sin el.
    pub fn steering_uv(&self, u: f64, v: f64) -> Vec<Complex64> {
        let k = 2.0 * std::f64::consts::PI / self.wavelength();
        self.positions()
            .into_iter()
            .map(|(x, y)| Complex64::from_polar(1.0, k * (x * u + y * v)))
            .collect()
    }
}

/// Physical aperture n_x·n_y·(λ/2)².
pub fn aperture(spec: &ArraySpec) -> f64 {
    let h = spec.wavelength() / 2.0;
    spec.n_elements() as f64 * h * h
}

/// Fractional element count filling `area` at half-wavelength spacing.
pub fn elements_for_aperture(area: f64, carrier_hz: f64) -> f64 {
    let h = wavelength(carrier_hz) / 2.0;
    area / (h * h)
}

/// Steering vector exp(j·2π/λ·(x·sin az·cos el + y·sin el)).
pub fn steering_vector(spec: &ArraySpec, az_deg: f64, el_deg: f64) -> Vec<Complex64> {
    let (az, el) = (az_deg.to_radians(), el_deg.to_radians());
    spec.steering_uv(az.sin() * el.cos(), el.sin())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologySelection {
    pub base: ArraySpec,
    /// (rows, cols) of the extracted sub-array.
    pub shape: (usize, usize),
    /// (row, col) of the sub-array's top-left element in the base grid.
    pub origin: (usize, usize),
}

impl TopologySelection {
    pub fn new(base: ArraySpec, shape: (usize, usize), origin: (usize, usize)) -> Self {
        TopologySelection { base, shape, origin }
    }

    pub fn n_elements(&self) -> usize {
        self.shape.0 * self.shape.1
    }

    pub fn validate(&self) -> Result<()> {
        let (rows, cols) = self.shape;
        let (r0, c0) = self.origin;
        if rows == 0 || cols == 0 {
            return Err(Error::OutOfBounds("empty sub-array shape".into()));
        }
        if r0 + rows > self.base.n_y || c0 + cols > self.base.n_x {
            return Err(Error::OutOfBounds(format!(
                "{rows}x{cols} at ({r0},{c0}) does not fit a {}x{} grid",
                self.base.n_y, self.base.n_x
            )));
        }
        Ok(())
    }

    /// Base-grid element indices of the selection, row-major.
    pub fn indices(&self) -> Result<Vec<usize>> {
        self.validate()?;
        let (rows, cols) = self.shape;
        let (r0, c0) = self.origin;
        let mut out = Vec::with_capacity(rows * cols);
        for r in r0..r0 + rows {
            for c in c0..c0 + cols {
                out.push(r * self.base.n_x + c);
            }
        }
        Ok(out)
    }

    pub fn sub_array(&self) -> ArraySpec {
        ArraySpec {
            n_x: self.shape.1,
            n_y: self.shape.0,
            ..self.base.clone()
        }
    }
}

/// Parses "RxC" (rows by columns), e.g. "4x8".
pub fn parse_shape(s: &str) -> Result<(usize, usize)> {
    let (a, b) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| invalid(format!("shape '{s}' is not RxC")))?;
    let rows = a.trim().parse().map_err(|_| invalid(format!("bad shape '{s}'")))?;
    let cols = b.trim().parse().map_err(|_| invalid(format!("bad shape '{s}'")))?;
    Ok((rows, cols))
}

/// Restricts the tx dimension to the selected elements; a pure copy.
pub fn extract_topology(sel: &TopologySelection, cir: &CirTensor) -> Result<CirTensor> {
    let idx = sel.indices()?;
    if cir.n_tx != sel.base.n_elements() {
        return Err(Error::DimensionMismatch(format!(
            "tensor n_tx {} != base grid {} elements",
            cir.n_tx,
            sel.base.n_elements()
        )));
    }
    let mut data: Vec<Complex32> = Vec::with_capacity(cir.n_snap * cir.n_rx * idx.len() * cir.n_delay);
    for s in 0..cir.n_snap {
        for r in 0..cir.n_rx {
            for &t in &idx {
                data.extend_from_slice(cir.link(s, r, t));
            }
        }
    }
    Ok(CirTensor {
        data,
        n_tx: idx.len(),
        ..cir.clone_axes()
    })
}

/// Applies [`extract_topology`] to a whole dataset, updating array and timing.
pub fn extract_dataset(sel: &TopologySelection, ds: &Dataset) -> Result<Dataset> {
    if sel.base != ds.array {
        return Err(invalid("selection base grid differs from the dataset array"));
    }
    let tensor = extract_topology(sel, &ds.tensor)?;
    let t_sc = ds.timing.t_sc;
    let mut timing = TimingPlan::tight(tensor.n_tx, tensor.n_rx, t_sc);
    timing.t_s = ds.timing.t_s;
    Ok(Dataset {
        tensor,
        snapshots: ds.snapshots.clone(),
        timing,
        array: sel.sub_array(),
        tx_power_dbm: ds.tx_power_dbm,
    })
}

impl CirTensor {
    /// Copy of the axis metadata with an empty data buffer.
    pub(crate) fn clone_axes(&self) -> CirTensor {
        CirTensor {
            data: Vec::new(),
            n_snap: self.n_snap,
            n_rx: self.n_rx,
            n_tx: self.n_tx,
            n_delay: self.n_delay,
            delay_resolution: self.delay_resolution,
            carrier_hz: self.carrier_hz,
            bandwidth_hz: self.bandwidth_hz,
        }
    }
}
