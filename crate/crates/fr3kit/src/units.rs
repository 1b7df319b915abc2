//! Physical constants and unit conversions.

/// Speed of light in vacuum (m/s).
pub const C: f64 = 299_792_458.0;

pub fn wavelength(carrier_hz: f64) -> f64 {
    C / carrier_hz
}

pub fn db_to_lin(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn lin_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    db_to_lin(dbm)
}

pub fn mw_to_dbm(mw: f64) -> f64 {
    lin_to_db(mw)
}

/// Propagation distance for a delay, d = c·τ.
pub fn delay_to_distance(delay_s: f64) -> f64 {
    C * delay_s
}

pub fn distance_to_delay(distance_m: f64) -> f64 {
    distance_m / C
}
