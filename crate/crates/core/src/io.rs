//! WAV ingestion and export, rational resampling and TOML config loading.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::dsp::bessel_i0;
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WavFormat {
    #[default]
    Pcm16,
    Float32,
}

/// Read a mono WAV file as floats in [-1, 1) at `target_rate`.
///
/// Integer PCM is scaled by `2^(bits-1)`. A file at a different rate is an
/// error unless `resample` is set, in which case it goes through
/// [`resample_rational`].
pub fn ingest_wav(path: &Path, target_rate: u32, resample: bool) -> Result<Vec<f64>> {
    let reader = WavReader::open(path)?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::UnsupportedFormat(format!(
            "{} channels, expected mono",
            spec.channels
        )));
    }
    let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()?,
        (SampleFormat::Int, bits @ (8 | 16 | 24 | 32)) => {
            let scale = 2f64.powi(bits as i32 - 1);
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<std::result::Result<_, _>>()?
        }
        (fmt, bits) => {
            return Err(Error::UnsupportedFormat(format!("{fmt:?} with {bits} bits")))
        }
    };
    if samples.is_empty() {
        return Err(Error::EmptyAudio(path.to_path_buf()));
    }
    if spec.sample_rate == target_rate {
        Ok(samples)
    } else if resample {
        resample_rational(&samples, spec.sample_rate, target_rate)
    } else {
        Err(Error::RateMismatch {
            file: spec.sample_rate,
            expected: target_rate,
        })
    }
}

/// Write mono samples. PCM output is clipped to the 16-bit range.
pub fn write_wav(path: &Path, samples: &[f64], sample_rate: u32, format: WavFormat) -> Result<()> {
    let spec = WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: match format {
            WavFormat::Pcm16 => 16,
            WavFormat::Float32 => 32,
        },
        sample_format: match format {
            WavFormat::Pcm16 => SampleFormat::Int,
            WavFormat::Float32 => SampleFormat::Float,
        },
    };
    let mut writer = WavWriter::create(path, spec)?;
    match format {
        WavFormat::Pcm16 => {
            for &s in samples {
                writer.write_sample((s * 32768.0).round().clamp(-32768.0, 32767.0) as i16)?;
            }
        }
        WavFormat::Float32 => {
            for &s in samples {
                writer.write_sample(s as f32)?;
            }
        }
    }
    writer.finalize()?;
    Ok(())
}

const RESAMPLE_HALF_TAPS: f64 = 32.0;
const RESAMPLE_BETA: f64 = 8.6;

/// Band-limited resampling from `from` to `to` Hz with a Kaiser-windowed sinc
/// (32 zero crossings per side at the lower of the two Nyquist rates, β = 8.6,
/// stop-band attenuation around 85 dB). The output has `floor(len·to/from)` samples.
pub fn resample_rational(x: &[f64], from: u32, to: u32) -> Result<Vec<f64>> {
    if from == 0 || to == 0 {
        return invalid("sample rates must be positive");
    }
    let ratio = from as f64 / to as f64;
    let cutoff = (1.0 / ratio).min(1.0);
    let reach = RESAMPLE_HALF_TAPS / cutoff;
    let i0_beta = bessel_i0(RESAMPLE_BETA);
    let out_len = (x.len() as u64 * to as u64 / from as u64) as usize;
    Ok((0..out_len)
        .map(|n| {
            let t = n as f64 * ratio;
            let lo = (t - reach).ceil().max(0.0) as usize;
            let hi = ((t + reach).floor() as usize).min(x.len() - 1);
            (lo..=hi)
                .map(|k| {
                    let u = t - k as f64;
                    let r = u / reach;
                    let win = bessel_i0(RESAMPLE_BETA * (1.0 - r * r).max(0.0).sqrt()) / i0_beta;
                    let arg = std::f64::consts::PI * cutoff * u;
                    let sinc = if arg == 0.0 { 1.0 } else { arg.sin() / arg };
                    x[k] * cutoff * sinc * win
                })
                .sum()
        })
        .collect())
}

/// Parse a TOML file into `T`; every failure maps to [`Error::Config`].
pub fn load_toml<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}
