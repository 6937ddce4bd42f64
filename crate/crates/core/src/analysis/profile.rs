//! Relative log-amplitude profiles along the spectrum diagonal.

use std::fmt::Write;

use crate::error::{Error, Result};
use crate::spectral::SpectralPlan;
use crate::tensor::Tensor;

pub const AMPLITUDE_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumProfile {
    /// Normalized frequency in `[0, 1]`; 1 is the Nyquist diagonal.
    pub freq: Vec<f64>,
    pub delta_log_amp: Vec<f64>,
    pub layer: usize,
}

/// Mean amplitude spectrum of `[B, H, W, C]` features over batch and
/// channels, sampled on the diagonal from DC to the Nyquist corner of the
/// centred spectrum, as log amplitude relative to DC.
///
/// Sample `k` sits `k` bins from the centre along both axes, so its
/// normalized frequency is `2k/H`.
pub fn log_amplitude_profile(features: &Tensor, layer: usize) -> Result<SpectrumProfile> {
    let [b, h, w, c] = features.dims4("log_amplitude_profile")?;
    if h != w {
        return Err(Error::contract("log_amplitude_profile", format!("feature map must be square, got {h}×{w}")));
    }
    let plan = SpectralPlan::cached(h, w)?;
    let spec = plan.forward_strided(features.data(), b, c);
    let wh = plan.half_width();
    let count = h / 2 + 1;
    let mut amp = vec![0.0f64; count];
    for n in 0..b {
        for (k, a) in amp.iter_mut().enumerate() {
            // Diagonal bins all lie in the stored half since k ≤ W/2.
            let base = ((n * h + k) * wh + k) * c;
            *a += spec[base..base + c].iter().map(|z| z.norm() as f64).sum::<f64>();
        }
    }
    let logs: Vec<f64> = amp.iter().map(|a| (a / (b * c) as f64).max(AMPLITUDE_FLOOR).ln()).collect();
    Ok(SpectrumProfile {
        freq: (0..count).map(|k| 2.0 * k as f64 / h as f64).collect(),
        delta_log_amp: logs.iter().map(|l| l - logs[0]).collect(),
        layer,
    })
}

/// CSV with header `freq,delta_log_amp,layer`.
pub fn profiles_csv(profiles: &[SpectrumProfile]) -> String {
    let mut s = String::from("freq,delta_log_amp,layer\n");
    for p in profiles {
        for (f, d) in p.freq.iter().zip(&p.delta_log_amp) {
            writeln!(s, "{f},{d},{}", p.layer).unwrap();
        }
    }
    s
}
