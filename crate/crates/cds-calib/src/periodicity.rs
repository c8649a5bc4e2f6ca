//! Dominant-period detection: aggregate FFT amplitudes across channels and
//! take the strongest non-trivial frequency.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::data::TimeSeries;
use crate::error::{Error, Result};

/// Amplitudes below this are treated as numerically zero spectrum.
const AMPLITUDE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodEstimate {
    /// T* = floor(n / k) for the winning frequency index k.
    pub period: usize,
    /// Winning index into the length-n DFT, in 2..=n/2.
    pub frequency_index: usize,
    /// Channel-summed amplitude at the winning index.
    pub aggregate_amplitude: f64,
}

/// Finds the period of the strongest cross-channel oscillation in `train`.
///
/// Channels are mean-centered, transformed with a length-n FFT, and their
/// amplitude spectra (complex moduli) summed. The DC bin and index 1 are
/// excluded; the argmax over k ∈ {2, …, ⌊n/2⌋} wins, with exact ties going to
/// the smallest k (the longest period). The series must have at least 4 steps
/// and one non-constant channel.
pub fn dominant_period(train: &TimeSeries) -> Result<PeriodEstimate> {
    let n = train.len();
    if n < 4 {
        return Err(Error::SeriesTooShort {
            required: 4,
            actual: n,
        });
    }
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n);
    let k_max = n / 2;
    let mut aggregate = vec![0.0f64; k_max + 1];
    let mut buffer = vec![Complex::new(0.0, 0.0); n];
    for m in 0..train.channels() {
        let col = train.values().column(m);
        let mean = col.iter().sum::<f64>() / n as f64;
        for (slot, v) in buffer.iter_mut().zip(col.iter()) {
            *slot = Complex::new(v - mean, 0.0);
        }
        fft.process(&mut buffer);
        for k in 2..=k_max {
            aggregate[k] += buffer[k].norm();
        }
    }
    let (best_k, best_amp) = argmax_smallest_index(&aggregate[2..])
        .map(|(i, a)| (i + 2, a))
        .ok_or(Error::SeriesTooShort { required: 4, actual: n })?;
    if best_amp < AMPLITUDE_FLOOR {
        return Err(Error::DegenerateSeries(
            "all candidate amplitudes are numerically zero (constant channels?)",
        ));
    }
    Ok(PeriodEstimate {
        period: n / best_k,
        frequency_index: best_k,
        aggregate_amplitude: best_amp,
    })
}

/// Index of the maximum, keeping the first (smallest) index on exact ties.
fn argmax_smallest_index(values: &[f64]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((i, v)),
        }
    }
    best
}
