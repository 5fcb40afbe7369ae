//! Audio clips and WAV I/O.
//!
//! Samples are `f64` in `[-1, 1]` throughout the pipeline so that gain/energy
//! identities hold to near machine precision; quantization to the 16-bit PCM
//! grid happens only at WAV boundaries (and explicitly via
//! [`AudioClip::quantized`], which the noise bank uses so cached and fresh
//! clips are identical).

use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("sample rate must be positive")]
    ZeroSampleRate,
    #[error("sample {index} is not finite")]
    NonFiniteSample { index: usize },
    #[error("sample {index} is {value} which is outside [-1, 1]")]
    SampleOutOfRange { index: usize, value: f64 },
    #[error("{path}: {source}")]
    Wav {
        path: String,
        #[source]
        source: hound::Error,
    },
    #[error("{path}: unsupported wav format ({detail})")]
    UnsupportedFormat { path: String, detail: String },
    #[error("resampling target rate must be positive")]
    ZeroTargetRate,
}

/// A mono audio clip: finite `f64` samples in `[-1, 1]` at a fixed rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioClip {
    /// Build a clip, checking the sample invariants.
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self, AudioError> {
        if sample_rate == 0 {
            return Err(AudioError::ZeroSampleRate);
        }
        for (index, &value) in samples.iter().enumerate() {
            if !value.is_finite() {
                return Err(AudioError::NonFiniteSample { index });
            }
            if !(-1.0..=1.0).contains(&value) {
                return Err(AudioError::SampleOutOfRange { index, value });
            }
        }
        Ok(AudioClip {
            samples,
            sample_rate,
        })
    }

    /// A clip of `len` zero samples.
    pub fn silence(len: usize, sample_rate: u32) -> Self {
        AudioClip {
            samples: vec![0.0; len],
            sample_rate: sample_rate.max(1),
        }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Largest absolute sample value (0.0 for an empty clip).
    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0f64, |acc, &s| acc.max(s.abs()))
    }

    /// Sum of squared samples.
    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|&s| s * s).sum()
    }

    /// Multiply every sample by `gain`, clamping back into `[-1, 1]`.
    ///
    /// For `gain` in `[0, 1]` no clamping can occur, so
    /// `scaled(g).energy() == g^2 * energy()` holds exactly up to float
    /// rounding.
    pub fn scaled(&self, gain: f64) -> AudioClip {
        let samples = self
            .samples
            .iter()
            .map(|&s| (s * gain).clamp(-1.0, 1.0))
            .collect();
        AudioClip {
            samples,
            sample_rate: self.sample_rate,
        }
    }

    /// Snap every sample to the 16-bit PCM grid (`round(x * 32767) / 32767`).
    ///
    /// A quantized clip round-trips bit-exactly through [`write_wav`] and
    /// [`read_wav`].
    ///
    /// [`write_wav`]: AudioClip::write_wav
    /// [`read_wav`]: AudioClip::read_wav
    pub fn quantized(&self) -> AudioClip {
        let samples = self
            .samples
            .iter()
            .map(|&s| f64::from(quantize_i16(s)) / 32767.0)
            .collect();
        AudioClip {
            samples,
            sample_rate: self.sample_rate,
        }
    }

    /// Read a WAV file as a mono clip. Multi-channel files are averaged down
    /// to mono; integer and float PCM of common bit depths are accepted.
    pub fn read_wav(path: &Path) -> Result<Self, AudioError> {
        let display = path.display().to_string();
        let mut reader = hound::WavReader::open(path).map_err(|source| AudioError::Wav {
            path: display.clone(),
            source,
        })?;
        let spec = reader.spec();
        let channels = spec.channels as usize;
        if channels == 0 {
            return Err(AudioError::UnsupportedFormat {
                path: display,
                detail: "zero channels".into(),
            });
        }

        let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
            (hound::SampleFormat::Int, bits @ 1..=32) => {
                let scale = f64::from((1u64 << (bits - 1)) as u32 - 1).max(1.0);
                reader
                    .samples::<i32>()
                    .map(|s| s.map(|v| f64::from(v) / scale))
                    .collect::<Result<_, _>>()
                    .map_err(|source| AudioError::Wav {
                        path: display.clone(),
                        source,
                    })?
            }
            (hound::SampleFormat::Float, 32) => reader
                .samples::<f32>()
                .map(|s| s.map(f64::from))
                .collect::<Result<_, _>>()
                .map_err(|source| AudioError::Wav {
                    path: display.clone(),
                    source,
                })?,
            (format, bits) => {
                return Err(AudioError::UnsupportedFormat {
                    path: display,
                    detail: format!("{format:?} at {bits} bits"),
                });
            }
        };

        let frames = interleaved.len() / channels;
        let mut samples = Vec::with_capacity(frames);
        for frame in interleaved.chunks_exact(channels) {
            let sum: f64 = frame.iter().sum();
            samples.push((sum / channels as f64).clamp(-1.0, 1.0));
        }
        AudioClip::new(samples, spec.sample_rate)
    }

    /// Write the clip as 16-bit PCM mono WAV.
    pub fn write_wav(&self, path: &Path) -> Result<(), AudioError> {
        let display = path.display().to_string();
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: self.sample_rate,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut writer =
            hound::WavWriter::create(path, spec).map_err(|source| AudioError::Wav {
                path: display.clone(),
                source,
            })?;
        for &sample in &self.samples {
            writer
                .write_sample(quantize_i16(sample))
                .map_err(|source| AudioError::Wav {
                    path: display.clone(),
                    source,
                })?;
        }
        writer.finalize().map_err(|source| AudioError::Wav {
            path: display,
            source,
        })
    }

    /// Resample to `target_rate` by linear interpolation, preserving the
    /// clip's duration (output length is `round(len * target / source)`).
    pub fn resampled(&self, target_rate: u32) -> Result<AudioClip, AudioError> {
        if target_rate == 0 {
            return Err(AudioError::ZeroTargetRate);
        }
        if target_rate == self.sample_rate {
            return Ok(self.clone());
        }
        if self.samples.is_empty() {
            return Ok(AudioClip {
                samples: Vec::new(),
                sample_rate: target_rate,
            });
        }
        let ratio = f64::from(self.sample_rate) / f64::from(target_rate);
        let out_len = ((self.samples.len() as f64) * f64::from(target_rate)
            / f64::from(self.sample_rate))
        .round() as usize;
        let mut samples = Vec::with_capacity(out_len);
        let last = self.samples.len() - 1;
        for i in 0..out_len {
            let position = i as f64 * ratio;
            let base = (position.floor() as usize).min(last);
            let next = (base + 1).min(last);
            let frac = position - base as f64;
            let value = self.samples[base] * (1.0 - frac) + self.samples[next] * frac;
            samples.push(value.clamp(-1.0, 1.0));
        }
        Ok(AudioClip {
            samples,
            sample_rate: target_rate,
        })
    }
}

/// Clamp to `[-1, 1]` and round to the nearest 16-bit code, symmetric at
/// ±32767 so quantization is an involution together with `v / 32767`.
fn quantize_i16(sample: f64) -> i16 {
    (sample.clamp(-1.0, 1.0) * 32767.0).round() as i16
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_rejects_out_of_range() {
        assert!(matches!(
            AudioClip::new(vec![0.0, 1.5], 16_000),
            Err(AudioError::SampleOutOfRange { index: 1, .. })
        ));
        assert!(matches!(
            AudioClip::new(vec![f64::NAN], 16_000),
            Err(AudioError::NonFiniteSample { index: 0 })
        ));
        assert!(matches!(
            AudioClip::new(vec![0.0], 0),
            Err(AudioError::ZeroSampleRate)
        ));
    }

    #[test]
    fn scaled_energy_identity() {
        let clip = AudioClip::new(vec![0.1, -0.4, 0.9, 0.0, 0.25], 16_000).unwrap();
        for gain in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let scaled = clip.scaled(gain);
            let expected = gain * gain * clip.energy();
            assert!(
                (scaled.energy() - expected).abs() <= 1e-12 * expected.max(1.0),
                "gain {gain}: {} vs {}",
                scaled.energy(),
                expected
            );
        }
    }

    #[test]
    fn quantized_is_idempotent() {
        let clip = AudioClip::new(vec![0.123_456_789, -0.987_654_321, 0.5], 16_000).unwrap();
        let once = clip.quantized();
        let twice = once.quantized();
        assert_eq!(once.samples(), twice.samples());
    }

    #[test]
    fn wav_round_trip_is_exact_for_quantized() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("clip.wav");
        let clip = AudioClip::new(
            (0..500)
                .map(|i| ((i as f64) * 0.01).sin() * 0.8)
                .collect::<Vec<_>>(),
            16_000,
        )
        .unwrap()
        .quantized();
        clip.write_wav(&path).unwrap();
        let back = AudioClip::read_wav(&path).unwrap();
        assert_eq!(back.sample_rate(), 16_000);
        assert_eq!(back.samples(), clip.samples());
    }

    #[test]
    fn read_averages_stereo_to_mono() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stereo.wav");
        let spec = hound::WavSpec {
            channels: 2,
            sample_rate: 8_000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut writer = hound::WavWriter::create(&path, spec).unwrap();
        for (left, right) in [(10_000i16, 20_000i16), (-4_000, 4_000)] {
            writer.write_sample(left).unwrap();
            writer.write_sample(right).unwrap();
        }
        writer.finalize().unwrap();
        let clip = AudioClip::read_wav(&path).unwrap();
        assert_eq!(clip.len(), 2);
        assert!((clip.samples()[0] - 15_000.0 / 32_767.0).abs() < 1e-12);
        assert!(clip.samples()[1].abs() < 1e-12);
    }

    #[test]
    fn resample_preserves_duration() {
        let clip = AudioClip::new(vec![0.0; 16_000], 16_000).unwrap();
        let resampled = clip.resampled(8_000).unwrap();
        assert_eq!(resampled.len(), 8_000);
        assert_eq!(resampled.sample_rate(), 8_000);
        assert!((resampled.duration_secs() - clip.duration_secs()).abs() < 1e-9);
    }

    #[test]
    fn resample_identity_rate_is_noop() {
        let clip = AudioClip::new(vec![0.25, -0.5, 0.75], 16_000).unwrap();
        let same = clip.resampled(16_000).unwrap();
        assert_eq!(same, clip);
    }

    #[test]
    fn resample_interpolates_linearly() {
        // Upsampling a ramp keeps it a ramp.
        let clip = AudioClip::new(vec![0.0, 0.1, 0.2, 0.3], 1_000).unwrap();
        let up = clip.resampled(2_000).unwrap();
        assert_eq!(up.len(), 8);
        for (i, &s) in up.samples().iter().enumerate().take(7) {
            let expected = 0.05 * i as f64;
            assert!((s - expected).abs() < 1e-12, "sample {i}: {s}");
        }
    }
}
