use rand_distr::{Distribution, Normal};

use crate::error::{invalid, Result};
use crate::params::stream_rng;

/// Adds `N(0, σ²)` to each pixel, rounds and clips to `[0, 255]`.
pub fn perturb_noise(frames: &[u8], sigma: f64, seed: u64) -> Result<Vec<u8>> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(invalid(format!("noise sigma must be finite and non-negative, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(frames.to_vec());
    }
    let normal = Normal::new(0.0, sigma).expect("valid sigma");
    let mut rng = stream_rng(seed, 21);
    Ok(frames
        .iter()
        .map(|&p| clip_pixel(p as f64 + normal.sample(&mut rng)))
        .collect())
}

/// Rounds to the nearest level and clips to the valid 8-bit range.
pub fn clip_pixel(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}
