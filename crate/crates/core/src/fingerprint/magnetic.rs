use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Energy signature of a magnetometer trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MagneticSignature {
    /// Bins `0..=N/2` of the per-axis DFTs of the mean-normalized series
    /// (zero-padded to a power of two `N`), combined per bin as
    /// `sqrt(|X_x|^2 + |X_y|^2 + |X_z|^2)`.
    pub energy_spectrum: Vec<f64>,
    /// Per-axis RMS of the mean-normalized series.
    pub summary: [f64; 3],
}

impl MagneticSignature {
    pub fn zero() -> Self {
        MagneticSignature {
            energy_spectrum: vec![0.0],
            summary: [0.0; 3],
        }
    }
}

pub fn build_magnetic_signature(readings: &[[f64; 3]]) -> Result<MagneticSignature> {
    if readings.is_empty() {
        return Err(Error::NoSamples);
    }
    if readings.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::invalid("magnetic readings must be finite"));
    }
    let n = readings.len();
    let mut mean = [0.0; 3];
    for r in readings {
        for a in 0..3 {
            mean[a] += r[a];
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let padded = n.next_power_of_two();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(padded);
    let mut energy = vec![0.0; padded / 2 + 1];
    let mut summary = [0.0; 3];
    for a in 0..3 {
        let mut buf: Vec<Complex<f64>> = readings
            .iter()
            .map(|r| Complex::new(r[a] - mean[a], 0.0))
            .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
            .take(padded)
            .collect();
        summary[a] = (buf[..n].iter().map(|c| c.re * c.re).sum::<f64>() / n as f64).sqrt();
        fft.process(&mut buf);
        for (e, c) in energy.iter_mut().zip(&buf) {
            *e += c.norm_sqr();
        }
    }
    energy.iter_mut().for_each(|e| *e = e.sqrt());
    Ok(MagneticSignature {
        energy_spectrum: energy,
        summary,
    })
}

/// Per-reading magnitude of the mean-normalized series.
pub fn normalized_magnitudes(readings: &[[f64; 3]]) -> Vec<f64> {
    if readings.is_empty() {
        return Vec::new();
    }
    let n = readings.len() as f64;
    let mean: [f64; 3] = std::array::from_fn(|a| readings.iter().map(|r| r[a]).sum::<f64>() / n);
    readings
        .iter()
        .map(|r| (0..3).map(|a| (r[a] - mean[a]).powi(2)).sum::<f64>().sqrt())
        .collect()
}
