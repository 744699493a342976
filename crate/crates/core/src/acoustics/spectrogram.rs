//! Binaural log-magnitude spectrograms.
//!
//! Per channel: the signal is zero-padded by `FFT_SIZE / 2` on both sides,
//! framed with a 400-sample window at hop 160, each frame zero-padded to a
//! 512-point DFT, magnitudes taken over the 257 non-negative bins, both
//! axes subsampled by 4 (indices 0, 4, 8, ...), and `log1p` applied. One
//! second of audio yields (65, 26, 2) at 16 kHz and (65, 69, 2) at
//! 44.1 kHz.

use std::io::Write;
use std::sync::{Arc, OnceLock};

use rustfft::{num_complex::Complex, Fft, FftPlanner};

use super::{AcousticsError, StereoChunk};

fn fft_plan() -> &'static Arc<dyn Fft<f64>> {
    static PLAN: OnceLock<Arc<dyn Fft<f64>>> = OnceLock::new();
    PLAN.get_or_init(|| FftPlanner::new().plan_fft_forward(FFT_SIZE))
}

pub const WINDOW_LEN: usize = 400;
pub const HOP_LEN: usize = 160;
pub const FFT_SIZE: usize = 512;
pub const DOWNSAMPLE: usize = 4;
/// 257 non-negative DFT bins subsampled by 4.
pub const FREQ_BINS: usize = (FFT_SIZE / 2) / DOWNSAMPLE + 1;

/// Two-channel nonnegative log-magnitude time-frequency observation,
/// row-major `(freq, time, channel)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinauralSpectrogram {
    pub freq_bins: usize,
    pub time_bins: usize,
    values: Vec<f64>,
}

impl BinauralSpectrogram {
    pub fn zeros(freq_bins: usize, time_bins: usize) -> Self {
        BinauralSpectrogram { freq_bins, time_bins, values: vec![0.0; freq_bins * time_bins * 2] }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.freq_bins, self.time_bins, 2)
    }

    #[inline]
    pub fn get(&self, f: usize, t: usize, ch: usize) -> f64 {
        self.values[(f * self.time_bins + t) * 2 + ch]
    }

    #[inline]
    pub fn set(&mut self, f: usize, t: usize, ch: usize, v: f64) {
        self.values[(f * self.time_bins + t) * 2 + ch] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Channel-major planes `(2, freq, time)` — the encoder input layout.
    pub fn as_planes(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.values.len());
        for ch in 0..2 {
            for f in 0..self.freq_bins {
                for t in 0..self.time_bins {
                    out.push(self.get(f, t, ch));
                }
            }
        }
        out
    }

    /// Expected time bins for a chunk of `samples` at the fixed hop.
    pub fn time_bins_for(samples: usize) -> usize {
        let frames = 1 + samples / HOP_LEN;
        frames.div_ceil(DOWNSAMPLE)
    }

    /// Binary dump: three little-endian 32-bit dims (freq, time, 2), then
    /// row-major `(freq, time, channel)` little-endian 32-bit floats.
    pub fn write_binary(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(&(self.freq_bins as u32).to_le_bytes())?;
        w.write_all(&(self.time_bins as u32).to_le_bytes())?;
        w.write_all(&2u32.to_le_bytes())?;
        for &v in &self.values {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
        Ok(())
    }

    /// Grayscale PGM visualization: the two channels side by side, low
    /// frequencies at the bottom.
    pub fn write_pgm(&self, w: &mut impl Write) -> std::io::Result<()> {
        let max = self.values.iter().copied().fold(0.0f64, f64::max).max(1e-12);
        writeln!(w, "P5 {} {} 255", self.time_bins * 2 + 1, self.freq_bins)?;
        let mut row = Vec::with_capacity(self.time_bins * 2 + 1);
        for f in (0..self.freq_bins).rev() {
            row.clear();
            for t in 0..self.time_bins {
                row.push((self.get(f, t, 0) / max * 255.0) as u8);
            }
            row.push(255);
            for t in 0..self.time_bins {
                row.push((self.get(f, t, 1) / max * 255.0) as u8);
            }
            w.write_all(&row)?;
        }
        Ok(())
    }
}

/// Compute the binaural spectrogram of a stereo chunk.
pub fn compute_spectrogram(chunk: &StereoChunk) -> Result<BinauralSpectrogram, AcousticsError> {
    if chunk.len() < WINDOW_LEN {
        return Err(AcousticsError::ChunkTooShort(chunk.len(), WINDOW_LEN));
    }
    let fft = fft_plan();
    let time_bins = BinauralSpectrogram::time_bins_for(chunk.len());
    let mut out = BinauralSpectrogram::zeros(FREQ_BINS, time_bins);
    for (ch, samples) in [(0, &chunk.left), (1, &chunk.right)] {
        channel_spectrogram(samples, &fft, ch, &mut out);
    }
    Ok(out)
}

fn channel_spectrogram(
    samples: &[f64],
    fft: &Arc<dyn Fft<f64>>,
    ch: usize,
    out: &mut BinauralSpectrogram,
) {
    let pad = FFT_SIZE / 2;
    let n_frames = 1 + samples.len() / HOP_LEN;
    let mut buf = vec![Complex::new(0.0, 0.0); FFT_SIZE];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    for (t_out, frame) in (0..n_frames).step_by(DOWNSAMPLE).enumerate() {
        let start = frame * HOP_LEN;
        for (i, slot) in buf.iter_mut().enumerate() {
            // Index into the conceptually zero-padded signal.
            let v = if i < WINDOW_LEN {
                let padded_idx = start + i;
                if padded_idx >= pad && padded_idx - pad < samples.len() {
                    samples[padded_idx - pad]
                } else {
                    0.0
                }
            } else {
                0.0
            };
            *slot = Complex::new(v, 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for (f_out, bin) in (0..FFT_SIZE / 2 + 1).step_by(DOWNSAMPLE).enumerate() {
            out.set(f_out, t_out, ch, buf[bin].norm().ln_1p());
        }
    }
}
