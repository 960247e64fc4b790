//! WAV ingestion: fundamental estimation by normalized autocorrelation and
//! Fourier projection over an integer number of periods.

use std::f64::consts::PI;
use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::{Forcing, Harmonic, PeriodicSignal, SignalError};

#[derive(Debug, Clone, Copy)]
pub struct WavOptions {
    /// Highest harmonic index extracted.
    pub max_harmonics: u32,
    /// Minimum normalized autocorrelation accepted as periodic.
    pub threshold: f64,
    pub min_hz: f64,
    pub max_hz: f64,
    /// Length of the analysis window taken from the start of the file [s].
    pub window_seconds: f64,
}

impl Default for WavOptions {
    fn default() -> Self {
        Self {
            max_harmonics: 32,
            threshold: 0.5,
            min_hz: 20.0,
            max_hz: 5000.0,
            window_seconds: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WavFormat {
    Pcm16,
    Float32,
}

pub fn from_wav(path: impl AsRef<Path>, options: &WavOptions) -> Result<PeriodicSignal, SignalError> {
    let (samples, rate) = read_first_channel(path.as_ref())?;
    analyze(&samples, rate as f64, options)
}

fn read_first_channel(path: &Path) -> Result<(Vec<f64>, u32), SignalError> {
    let mut reader = WavReader::open(path)?;
    let spec = reader.spec();
    let channels = spec.channels.max(1) as usize;
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<Result<_, _>>()?,
        (SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<Result<_, _>>()?,
        (format, bits) => {
            return Err(SignalError::UnsupportedFormat(format!(
                "{format:?} {bits}-bit"
            )))
        }
    };
    let samples = interleaved.into_iter().step_by(channels).collect();
    Ok((samples, spec.sample_rate))
}

pub(crate) fn analyze(samples: &[f64], rate: f64, options: &WavOptions) -> Result<PeriodicSignal, SignalError> {
    let window = ((options.window_seconds * rate) as usize).min(samples.len());
    let mean = samples[..window].iter().sum::<f64>() / window.max(1) as f64;
    let x: Vec<f64> = samples[..window].iter().map(|v| v - mean).collect();

    let period = estimate_period(&x, rate, options)?;
    let f0 = rate / period;
    let k = 2.0 * PI * f0;

    let periods = (x.len() as f64 / period).floor();
    let used = (periods * period).round() as usize;
    let nyquist_limit = ((rate / 2.0) / f0).floor() as u32;
    let j_max = options.max_harmonics.min(nyquist_limit.saturating_sub(1)).max(1);
    let components = (1..=j_max)
        .map(|j| {
            let w = j as f64 * k;
            let (mut s, mut c) = (0.0, 0.0);
            for (i, v) in x[..used].iter().enumerate() {
                let phase = w * i as f64 / rate;
                s += v * phase.sin();
                c += v * phase.cos();
            }
            let a = 2.0 * s / used as f64;
            let b = 2.0 * c / used as f64;
            Harmonic {
                index: j,
                amplitude: a.hypot(b),
                phase: b.atan2(a),
            }
        })
        .collect();
    PeriodicSignal::from_hz(f0, components)
}

/// Period in samples, refined by parabolic interpolation.
fn estimate_period(x: &[f64], rate: f64, options: &WavOptions) -> Result<f64, SignalError> {
    let min_lag = ((rate / options.max_hz).floor() as usize).max(2);
    let max_lag = ((rate / options.min_hz).ceil() as usize).min(x.len() / 2);
    if max_lag <= min_lag + 2 {
        return Err(SignalError::TooShort(x.len()));
    }
    let r: Vec<f64> = (min_lag - 1..=max_lag + 1)
        .map(|lag| normalized_autocorrelation(x, lag))
        .collect();
    // r[i] holds lag min_lag - 1 + i
    let local_max = |i: usize| r[i] > r[i - 1] && r[i] >= r[i + 1];
    let best = (1..r.len() - 1)
        .filter(|&i| local_max(i))
        .map(|i| r[i])
        .fold(f64::NEG_INFINITY, f64::max);
    if !(best >= options.threshold) {
        return Err(SignalError::NotGenuine {
            threshold: options.threshold,
            best: if best.is_finite() { best } else { 0.0 },
        });
    }
    // first maximum close to the best one, so multiples of the period lose
    let i = (1..r.len() - 1)
        .find(|&i| local_max(i) && r[i] >= 0.9 * best)
        .expect("best maximum exists");
    let denom = r[i - 1] - 2.0 * r[i] + r[i + 1];
    let shift = if denom.abs() > 0.0 {
        0.5 * (r[i - 1] - r[i + 1]) / denom
    } else {
        0.0
    };
    Ok((min_lag - 1 + i) as f64 + shift)
}

fn normalized_autocorrelation(x: &[f64], lag: usize) -> f64 {
    let n = x.len() - lag;
    let (mut xy, mut xx, mut yy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let a = x[i];
        let b = x[i + lag];
        xy += a * b;
        xx += a * a;
        yy += b * b;
    }
    if xx == 0.0 || yy == 0.0 {
        0.0
    } else {
        xy / (xx * yy).sqrt()
    }
}

/// Samples a forcing at `rate` Hz for `seconds`.
pub fn synthesize(signal: &dyn Forcing, rate: u32, seconds: f64) -> Vec<f64> {
    let count = (seconds * rate as f64).round() as usize;
    (0..count)
        .map(|i| signal.eval(i as f64 / rate as f64))
        .collect()
}

pub fn write_wav(
    path: impl AsRef<Path>,
    samples: &[f64],
    rate: u32,
    format: WavFormat,
) -> Result<(), SignalError> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: rate,
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
    for &v in samples {
        match format {
            WavFormat::Pcm16 => writer.write_sample((v.clamp(-1.0, 1.0) * 32767.0).round() as i16)?,
            WavFormat::Float32 => writer.write_sample(v as f32)?,
        }
    }
    writer.finalize()?;
    Ok(())
}
