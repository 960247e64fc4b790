//! Forcing signals: single sinusoids, two-tone inputs and general periodic
//! sounds written as a zero-average Fourier sine series.

mod wav;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use wav::{from_wav, synthesize, write_wav, WavFormat, WavOptions};

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("frequency must be positive and finite, got {0}")]
    NonPositiveFrequency(f64),
    #[error("two-tone frequencies must satisfy k1 > k0 > 0 (k1 = {k1}, k0 = {k0})")]
    ToneOrder { k1: f64, k0: f64 },
    #[error("harmonic indices must be >= 1 and strictly increasing")]
    BadIndices,
    #[error("component {0} has a non-finite amplitude or phase")]
    NonFinite(u32),
    #[error("at least one harmonic is required")]
    NoHarmonics,
    #[error("cannot read audio: {0}")]
    Audio(#[from] hound::Error),
    #[error("unsupported sample format: {0}")]
    UnsupportedFormat(String),
    #[error("not a genuine sound: no autocorrelation peak above {threshold} (best {best:.3})")]
    NotGenuine { threshold: f64, best: f64 },
    #[error("audio too short for analysis ({0} samples)")]
    TooShort(usize),
}

/// One sinusoidal drive `amplitude·sin(freq·t + phase)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Drive {
    /// Angular frequency [rad/s].
    pub freq: f64,
    pub amplitude: f64,
    pub phase: f64,
}

impl Drive {
    pub fn eval(&self, t: f64) -> f64 {
        self.amplitude * (self.freq * t + self.phase).sin()
    }
}

/// Anything that decomposes into finitely many sinusoidal drives.
pub trait Forcing: Send + Sync {
    fn drives(&self) -> Vec<Drive>;

    fn eval(&self, t: f64) -> f64 {
        self.drives().iter().map(|d| d.eval(t)).sum()
    }

    fn describe(&self) -> String;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Harmonic {
    pub index: u32,
    pub amplitude: f64,
    pub phase: f64,
}

/// `F(t) = Σ_j c_j sin(j·k·t + φ_j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SignalJson", into = "SignalJson")]
pub struct PeriodicSignal {
    fundamental: f64,
    components: Vec<Harmonic>,
}

impl PeriodicSignal {
    pub fn new(fundamental: f64, components: Vec<Harmonic>) -> Result<Self, SignalError> {
        if !(fundamental.is_finite() && fundamental > 0.0) {
            return Err(SignalError::NonPositiveFrequency(fundamental));
        }
        if components.is_empty() {
            return Err(SignalError::NoHarmonics);
        }
        let mut last = 0;
        for c in &components {
            if c.index <= last {
                return Err(SignalError::BadIndices);
            }
            last = c.index;
            if !(c.amplitude.is_finite() && c.phase.is_finite()) {
                return Err(SignalError::NonFinite(c.index));
            }
        }
        Ok(Self {
            fundamental,
            components,
        })
    }

    pub fn from_hz(freq_hz: f64, components: Vec<Harmonic>) -> Result<Self, SignalError> {
        Self::new(2.0 * PI * freq_hz, components)
    }

    /// Fundamental angular frequency `k` [rad/s].
    pub fn fundamental(&self) -> f64 {
        self.fundamental
    }

    pub fn fundamental_hz(&self) -> f64 {
        self.fundamental / (2.0 * PI)
    }

    pub fn components(&self) -> &[Harmonic] {
        &self.components
    }

    pub fn period(&self) -> f64 {
        2.0 * PI / self.fundamental
    }

    /// Multiplies every amplitude by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let components = self
            .components
            .iter()
            .map(|c| Harmonic {
                amplitude: c.amplitude * factor,
                ..*c
            })
            .collect();
        Self {
            fundamental: self.fundamental,
            components,
        }
    }

    /// Period of the string energy it produces: `π/(j·k)` for a single
    /// component `j`, otherwise `2π/k`.
    pub fn energy_period(&self) -> f64 {
        match self.components.as_slice() {
            [only] => PI / (only.index as f64 * self.fundamental),
            _ => self.period(),
        }
    }
}

impl Forcing for PeriodicSignal {
    fn drives(&self) -> Vec<Drive> {
        self.components
            .iter()
            .map(|c| Drive {
                freq: c.index as f64 * self.fundamental,
                amplitude: c.amplitude,
                phase: c.phase,
            })
            .collect()
    }

    fn describe(&self) -> String {
        format!(
            "periodic f={} Hz, {} components",
            self.fundamental_hz(),
            self.components.len()
        )
    }
}

#[derive(Serialize, Deserialize)]
struct SignalJson {
    fundamental_hz: f64,
    components: Vec<(u32, f64, f64)>,
}

impl TryFrom<SignalJson> for PeriodicSignal {
    type Error = SignalError;

    fn try_from(json: SignalJson) -> Result<Self, Self::Error> {
        let components = json
            .components
            .into_iter()
            .map(|(index, amplitude, phase)| Harmonic {
                index,
                amplitude,
                phase,
            })
            .collect();
        PeriodicSignal::from_hz(json.fundamental_hz, components)
    }
}

impl From<PeriodicSignal> for SignalJson {
    fn from(signal: PeriodicSignal) -> Self {
        SignalJson {
            fundamental_hz: signal.fundamental_hz(),
            components: signal
                .components
                .iter()
                .map(|c| (c.index, c.amplitude, c.phase))
                .collect(),
        }
    }
}

pub fn sine(freq_hz: f64, amplitude: f64, phase: f64) -> Result<PeriodicSignal, SignalError> {
    PeriodicSignal::from_hz(
        freq_hz,
        vec![Harmonic {
            index: 1,
            amplitude,
            phase,
        }],
    )
}

/// Rising sawtooth of unit peak amplitude truncated to `n_harmonics` terms:
/// `(2/π) Σ (-1)^{j+1} sin(j k t)/j`, signs carried by a phase of 0 or π.
pub fn sawtooth(freq_hz: f64, n_harmonics: u32) -> Result<PeriodicSignal, SignalError> {
    if n_harmonics == 0 {
        return Err(SignalError::NoHarmonics);
    }
    let components = (1..=n_harmonics)
        .map(|j| Harmonic {
            index: j,
            amplitude: 2.0 / (PI * j as f64),
            phase: if j % 2 == 1 { 0.0 } else { PI },
        })
        .collect();
    PeriodicSignal::from_hz(freq_hz, components)
}

/// `c1 sin(k1 t + φ1) + c0 sin(k0 t + φ2)` with `k1 > k0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoTone {
    pub k1: f64,
    pub k0: f64,
    pub c1: f64,
    pub c0: f64,
    pub phi1: f64,
    pub phi2: f64,
}

impl TwoTone {
    pub fn new(k1: f64, k0: f64, c1: f64, c0: f64, phi1: f64, phi2: f64) -> Result<Self, SignalError> {
        if !(k0.is_finite() && k0 > 0.0 && k1.is_finite() && k1 > k0) {
            return Err(SignalError::ToneOrder { k1, k0 });
        }
        Ok(Self {
            k1,
            k0,
            c1,
            c0,
            phi1,
            phi2,
        })
    }

    /// Unit-amplitude, zero-phase pair with `k1 = (u/w)·k0`.
    pub fn from_ratio(u: u64, w: u64, k0: f64) -> Result<Self, SignalError> {
        Self::new(k0 * u as f64 / w as f64, k0, 1.0, 1.0, 0.0, 0.0)
    }
}

impl Forcing for TwoTone {
    fn drives(&self) -> Vec<Drive> {
        vec![
            Drive {
                freq: self.k1,
                amplitude: self.c1,
                phase: self.phi1,
            },
            Drive {
                freq: self.k0,
                amplitude: self.c0,
                phase: self.phi2,
            },
        ]
    }

    fn describe(&self) -> String {
        format!(
            "two-tone f1={} Hz, f0={} Hz",
            self.k1 / (2.0 * PI),
            self.k0 / (2.0 * PI)
        )
    }
}

/// Arbitrary list of drives, used when the periodic structure is irrelevant.
impl Forcing for Vec<Drive> {
    fn drives(&self) -> Vec<Drive> {
        self.clone()
    }

    fn describe(&self) -> String {
        format!("{} drives", self.len())
    }
}
