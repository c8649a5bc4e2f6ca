//! Seeded generators for series with known structure: pure noise, noisy
//! sinusoids, and phase-profile series whose conditional means depend on
//! t mod period by a controllable magnitude. The verification suite uses
//! these to exercise the detector and adapter where ground truth is known.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::data::TimeSeries;
use crate::error::{Error, Result};

fn generated_names(channels: usize) -> Vec<String> {
    (0..channels).map(|m| format!("ch{m}")).collect()
}

fn check_dims(n: usize, channels: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::EmptyInput("series length must be positive"));
    }
    if channels == 0 {
        return Err(Error::EmptyInput("series needs at least one channel"));
    }
    Ok(())
}

/// Per-phase means s(0), …, s(period−1), each drawn once from N(0, 1).
pub fn phase_profile(period: usize, seed: u64) -> Result<Vec<f64>> {
    if period == 0 {
        return Err(Error::InvalidParameter {
            name: "period",
            reason: "phase profile needs a positive period".into(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..period).map(|_| rng.sample(StandardNormal)).collect())
}

/// y_{t,m} = magnitude · s(t mod period) + N(0, noise_std²), with one profile
/// shared across channels and independent noise per entry. `magnitude` dials
/// how strongly the conditional mean depends on the phase; 0 gives pure noise.
pub fn phase_shifted_series(
    n: usize,
    channels: usize,
    period: usize,
    magnitude: f64,
    noise_std: f64,
    seed: u64,
) -> Result<TimeSeries> {
    check_dims(n, channels)?;
    let profile = phase_profile(period, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let values = nalgebra::DMatrix::from_fn(n, channels, |t, _| {
        magnitude * profile[t % period] + noise_std * rng.sample::<f64, _>(StandardNormal)
    });
    TimeSeries::new(values, generated_names(channels), 0)
}

/// Independent N(0, 1) entries; nothing to condition on.
pub fn iid_noise_series(n: usize, channels: usize, seed: u64) -> Result<TimeSeries> {
    check_dims(n, channels)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values =
        nalgebra::DMatrix::from_fn(n, channels, |_, _| rng.sample::<f64, _>(StandardNormal));
    TimeSeries::new(values, generated_names(channels), 0)
}

/// sin(2πt/period) per channel plus N(0, noise_std²) noise.
pub fn noisy_sinusoid(
    n: usize,
    channels: usize,
    period: usize,
    noise_std: f64,
    seed: u64,
) -> Result<TimeSeries> {
    check_dims(n, channels)?;
    if period == 0 {
        return Err(Error::InvalidParameter {
            name: "period",
            reason: "sinusoid needs a positive period".into(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let omega = std::f64::consts::TAU / period as f64;
    let values = nalgebra::DMatrix::from_fn(n, channels, |t, _| {
        (omega * t as f64).sin() + noise_std * rng.sample::<f64, _>(StandardNormal)
    });
    TimeSeries::new(values, generated_names(channels), 0)
}
