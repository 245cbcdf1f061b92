use std::f64::consts::TAU;

use crate::error::{Error, Result};

/// Frequency base of the sinusoidal encoding.
pub const PE_TEMPERATURE: f64 = 10_000.0;

/// Sinusoidal 2D positional encoding of a normalized center `(u, v)`.
///
/// The first `d/2` entries encode `u` and the last `d/2` encode `v`. Within
/// each half, entries `2i, 2i+1` are `sin, cos` of `2π·coord / T^(4i/d)`.
pub fn positional_encoding_2d(center: (f64, f64), d: usize) -> Result<Vec<f64>> {
    if d == 0 || !d.is_multiple_of(4) {
        return Err(Error::InvalidParameter(format!(
            "encoding width must be a positive multiple of 4, got {d}"
        )));
    }
    let (u, v) = center;
    if !(0.0..=1.0).contains(&u) || !(0.0..=1.0).contains(&v) {
        return Err(Error::InvalidParameter(format!(
            "center ({u}, {v}) must be normalized to [0, 1]"
        )));
    }
    let half = d / 2;
    let mut out = vec![0.0; d];
    for i in 0..d / 4 {
        let freq = PE_TEMPERATURE.powf(4.0 * i as f64 / d as f64);
        for (offset, coord) in [(0, u), (half, v)] {
            let phase = coord * TAU / freq;
            out[offset + 2 * i] = phase.sin();
            out[offset + 2 * i + 1] = phase.cos();
        }
    }
    Ok(out)
}
