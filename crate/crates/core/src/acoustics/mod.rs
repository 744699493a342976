//! Synthetic sound classes, simplified binaural propagation over the grid,
//! multi-source mixing, and the binaural spectrogram pipeline.

mod propagate;
mod spectrogram;

pub use propagate::{mix, propagate, render_binaural, PropagationResult};
pub use spectrogram::{compute_spectrogram, BinauralSpectrogram};

use thiserror::Error;

use crate::grid::{AgentPose, Cell, GridMap};
use crate::rng::derive_stream;
use rand::Rng;

#[derive(Debug, Error)]
pub enum AcousticsError {
    #[error("invalid sound class id {0} (bank holds {1})")]
    BadClassId(usize, usize),
    #[error("chunk too short: {0} samples (need at least {1})")]
    ChunkTooShort(usize, usize),
    #[error("cannot mix zero chunks")]
    EmptyMix,
    #[error("chunk lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("unsupported sample rate {0} (expected 16000 or 44100)")]
    BadSampleRate(u32),
    #[error("cell ({0}, {1}) is blocked")]
    BlockedCell(i32, i32),
}

/// Number of sound classes in the bank.
pub const NUM_CLASSES: usize = 102;
/// Train / validation / test split boundaries by class index.
pub const TRAIN_CLASSES: std::ops::Range<usize> = 0..73;
pub const VAL_CLASSES: std::ops::Range<usize> = 73..84;
pub const TEST_CLASSES: std::ops::Range<usize> = 84..102;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum SoundSplit {
    Train,
    Val,
    Test,
}

impl SoundSplit {
    pub fn classes(self) -> std::ops::Range<usize> {
        match self {
            SoundSplit::Train => TRAIN_CLASSES,
            SoundSplit::Val => VAL_CLASSES,
            SoundSplit::Test => TEST_CLASSES,
        }
    }

    pub fn of_class(class_id: usize) -> SoundSplit {
        if TRAIN_CLASSES.contains(&class_id) {
            SoundSplit::Train
        } else if VAL_CLASSES.contains(&class_id) {
            SoundSplit::Val
        } else {
            SoundSplit::Test
        }
    }
}

/// Two channels of samples; one environment step of audio.
#[derive(Debug, Clone, PartialEq)]
pub struct StereoChunk {
    pub left: Vec<f64>,
    pub right: Vec<f64>,
}

impl StereoChunk {
    pub fn silence(len: usize) -> Self {
        StereoChunk { left: vec![0.0; len], right: vec![0.0; len] }
    }

    pub fn len(&self) -> usize {
        self.left.len()
    }

    pub fn is_empty(&self) -> bool {
        self.left.is_empty()
    }
}

/// One sound class: a set of sinusoid partials. The waveform is a pure
/// function of (class id, absolute sample index), so chunks are
/// phase-continuous across step boundaries by construction.
#[derive(Debug, Clone)]
struct SoundClass {
    /// (frequency_hz, amplitude, phase) triples; the tail of the list is a
    /// dense comb of low-amplitude partials standing in for a band-limited
    /// noise floor.
    partials: Vec<(f64, f64, f64)>,
}

/// Deterministic bank of [`NUM_CLASSES`] synthetic sounds.
#[derive(Debug, Clone)]
pub struct SoundBank {
    classes: Vec<SoundClass>,
}

impl Default for SoundBank {
    fn default() -> Self {
        Self::new()
    }
}

impl SoundBank {
    pub fn new() -> Self {
        let classes = (0..NUM_CLASSES)
            .map(|id| {
                let mut rng = derive_stream(0x5bdb_50ab, id as u64);
                let n_main = rng.random_range(3..=7);
                let mut partials: Vec<(f64, f64, f64)> = (0..n_main)
                    .map(|_| {
                        let f = rng.random_range(120.0..3800.0);
                        let a = rng.random_range(0.4..1.0);
                        let p = rng.random_range(0.0..std::f64::consts::TAU);
                        (f, a, p)
                    })
                    .collect();
                // Band-limited noise floor: a comb of quiet partials in a
                // class-specific band.
                let band_lo = rng.random_range(200.0..2000.0);
                let band_hi = band_lo + rng.random_range(400.0..1500.0);
                for _ in 0..16 {
                    let f = rng.random_range(band_lo..band_hi);
                    let a = rng.random_range(0.01..0.06);
                    let p = rng.random_range(0.0..std::f64::consts::TAU);
                    partials.push((f, a, p));
                }
                // Analytic RMS of a sinusoid sum over long windows is
                // sqrt(sum a_i^2 / 2); scale so it lands on 1.
                let rms = (partials.iter().map(|&(_, a, _)| a * a).sum::<f64>() / 2.0).sqrt();
                for p in &mut partials {
                    p.1 /= rms;
                }
                SoundClass { partials }
            })
            .collect();
        SoundBank { classes }
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    /// Synthesize `n` mono samples of class `class_id` starting at absolute
    /// sample index `t0`.
    pub fn synth(
        &self,
        class_id: usize,
        t0: u64,
        n: usize,
        sample_rate: u32,
    ) -> Result<Vec<f64>, AcousticsError> {
        let class = self
            .classes
            .get(class_id)
            .ok_or(AcousticsError::BadClassId(class_id, self.classes.len()))?;
        if sample_rate != 16000 && sample_rate != 44100 {
            return Err(AcousticsError::BadSampleRate(sample_rate));
        }
        let sr = sample_rate as f64;
        let mut out = vec![0.0; n];
        // Phase rotation recurrence per partial: one complex multiply per
        // sample instead of a sin() call. Drift over a 1 s chunk is around
        // 1e-12, far inside the 1e-9 phase-continuity budget.
        for &(f, a, p) in &class.partials {
            let theta0 = (std::f64::consts::TAU * f / sr).mul_add(t0 as f64, p);
            let delta = std::f64::consts::TAU * f / sr;
            let (sin_d, cos_d) = delta.sin_cos();
            let (mut s, mut c) = theta0.sin_cos();
            for slot in out.iter_mut() {
                *slot += a * s;
                let ns = s * cos_d + c * sin_d;
                c = c * cos_d - s * sin_d;
                s = ns;
            }
        }
        Ok(out)
    }
}

/// Full per-step audio observation: synthesize each source, propagate it to
/// the listener, mix, and compute the binaural spectrogram.
pub fn compute_observation_audio(
    bank: &SoundBank,
    map: &GridMap,
    sources: &[(usize, Cell, u64)],
    listener: AgentPose,
    sample_rate: u32,
) -> Result<BinauralSpectrogram, AcousticsError> {
    let n = sample_rate as usize;
    let mut sum = StereoChunk::silence(n);
    for &(class_id, cell, t0) in sources {
        let mono = bank.synth(class_id, t0, n, sample_rate)?;
        let prop = propagate(map, cell, listener)?;
        let chunk = render_binaural(&mono, &prop);
        for i in 0..n {
            sum.left[i] += chunk.left[i];
            sum.right[i] += chunk.right[i];
        }
    }
    compute_spectrogram(&sum)
}
