//! Closed-form steady state of each string mode.
//!
//! Mode `n` of string `ξ` obeys `p̈ = -(nξ)² p - μ ṗ + ν_n F(t)`. For
//! `F = sin(k t + φ)` every solution converges to
//!
//! ```text
//! p(t) = -ν ((k² - n²ξ²) sin(kt+φ) + kμ cos(kt+φ)) / ((k² - n²ξ²)² + k²μ²)
//!      = R_n sin(kt + φ + φ_n - π)
//! ```
//!
//! with `R_n = ν/sqrt(k⁴ + k²(μ² - 2n²ξ²) + n⁴ξ⁴)` and
//! `φ_n = atan2(kμ, k² - n²ξ²) ∈ (0, π)`. Periodic forcing is handled by
//! superposition over its drives.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::params::{ModeCoefficients, StringBank};
use crate::signal::{Drive, Forcing, PeriodicSignal};

/// Default number of modes kept (odd modes 1..=15).
pub const DEFAULT_N_MAX: u32 = 15;

#[derive(Debug, Error, PartialEq)]
pub enum ModalError {
    #[error("maximum undefined: n²ξ² - μ²/2 = {radicand} is not positive")]
    UndefinedMaximum { radicand: f64 },
    #[error("closed form for {assumption:?} does not apply to these parameters")]
    AssumptionViolated { assumption: MaxSearch },
    #[error("position z = {z} outside the string [0, {ell}]")]
    OutsideString { z: f64, ell: f64 },
}

/// Odd modes `1, 3, ..., ≤ n_max`.
pub fn odd_modes(n_max: u32) -> Vec<u32> {
    (1..=n_max).step_by(2).collect()
}

impl ModeCoefficients {
    /// `(k² - n²ξ²)² + k²μ²`, algebraically equal to the quartic radicand.
    pub fn response_denominator(&self, k: f64) -> f64 {
        let w = self.natural();
        let detune = k * k - w * w;
        detune * detune + k * k * self.mu * self.mu
    }

    /// Steady-state amplitude `R_n(ξ, k)` per unit forcing.
    pub fn amplitude(&self, k: f64) -> f64 {
        if self.nu == 0.0 {
            return 0.0;
        }
        self.nu / self.response_denominator(k).sqrt()
    }

    /// `φ_n(ξ, k) = atan2(kμ, k² - n²ξ²)`, continuous through resonance.
    pub fn phase(&self, k: f64) -> f64 {
        let w = self.natural();
        (k * self.mu).atan2(k * k - w * w)
    }

    /// The rational form of the periodic solution driven by `sin(kt + φ)`,
    /// returned as `(p, ṗ)`.
    pub fn rational_steady_state(&self, k: f64, phase: f64, t: f64) -> (f64, f64) {
        let w = self.natural();
        let detune = k * k - w * w;
        let den = self.response_denominator(k);
        let (s, c) = (k * t + phase).sin_cos();
        let p = -self.nu * (detune * s + k * self.mu * c) / den;
        let v = -self.nu * k * (detune * c - k * self.mu * s) / den;
        (p, v)
    }

    /// `k_n^max = sqrt(n²ξ² - μ²/2)`, the drive frequency of largest response.
    pub fn max_drive_frequency(&self) -> Result<f64, ModalError> {
        let w = self.natural();
        let radicand = w * w - self.mu * self.mu / 2.0;
        if radicand > 0.0 {
            Ok(radicand.sqrt())
        } else {
            Err(ModalError::UndefinedMaximum { radicand })
        }
    }
}

pub fn amplitude_rn(bank: &StringBank, xi: f64, k: f64, n: u32) -> f64 {
    bank.mode(xi, n).amplitude(k)
}

pub fn phase_phin(bank: &StringBank, xi: f64, k: f64, n: u32) -> f64 {
    bank.mode(xi, n).phase(k)
}

/// One term `amplitude·sin(drive_freq·t + phase)` of `p_n(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModalTerm {
    pub drive_freq: f64,
    pub n: u32,
    pub amplitude: f64,
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalResponse {
    pub xi: f64,
    pub terms: Vec<ModalTerm>,
}

fn wrap_phase(phase: f64) -> f64 {
    let wrapped = phase.rem_euclid(2.0 * PI);
    if wrapped > PI {
        wrapped - 2.0 * PI
    } else {
        wrapped
    }
}

impl ModalTerm {
    fn new(mode: &ModeCoefficients, drive: &Drive) -> Option<Self> {
        let r = mode.amplitude(drive.freq);
        if r == 0.0 || drive.amplitude == 0.0 {
            return None;
        }
        let mut phase = drive.phase + mode.phase(drive.freq) - PI;
        if drive.amplitude < 0.0 {
            phase += PI;
        }
        Some(Self {
            drive_freq: drive.freq,
            n: mode.n,
            amplitude: drive.amplitude.abs() * r,
            phase: wrap_phase(phase),
        })
    }

    pub fn displacement(&self, t: f64) -> f64 {
        self.amplitude * (self.drive_freq * t + self.phase).sin()
    }

    pub fn velocity(&self, t: f64) -> f64 {
        self.amplitude * self.drive_freq * (self.drive_freq * t + self.phase).cos()
    }
}

impl ModalResponse {
    /// `p_n(t)`.
    pub fn displacement(&self, n: u32, t: f64) -> f64 {
        self.terms
            .iter()
            .filter(|term| term.n == n)
            .map(|term| term.displacement(t))
            .sum()
    }

    /// `ṗ_n(t)`.
    pub fn velocity(&self, n: u32, t: f64) -> f64 {
        self.terms
            .iter()
            .filter(|term| term.n == n)
            .map(|term| term.velocity(t))
            .sum()
    }

    /// Distinct modes present, ascending.
    pub fn modes(&self) -> Vec<u32> {
        let mut modes: Vec<u32> = self.terms.iter().map(|t| t.n).collect();
        modes.sort_unstable();
        modes.dedup();
        modes
    }

    pub fn terms_for(&self, n: u32) -> impl Iterator<Item = &ModalTerm> {
        self.terms.iter().filter(move |t| t.n == n)
    }
}

/// Response of the listed modes to an arbitrary forcing. Even modes and
/// zero-amplitude drives contribute no terms.
pub fn response(bank: &StringBank, xi: f64, forcing: &dyn Forcing, modes: &[u32]) -> ModalResponse {
    let drives = forcing.drives();
    let terms = modes
        .iter()
        .map(|&n| bank.mode(xi, n))
        .flat_map(|mode| {
            drives
                .iter()
                .filter_map(move |d| ModalTerm::new(&mode, d))
                .collect::<Vec<_>>()
        })
        .collect();
    ModalResponse { xi, terms }
}

pub fn response_sine(bank: &StringBank, xi: f64, drive: Drive, n_max: u32) -> ModalResponse {
    response(bank, xi, &vec![drive], &odd_modes(n_max))
}

pub fn response_periodic(bank: &StringBank, xi: f64, signal: &PeriodicSignal, n_max: u32) -> ModalResponse {
    response(bank, xi, signal, &odd_modes(n_max))
}

pub fn max_drive_frequency(bank: &StringBank, xi: f64, n: u32) -> Result<f64, ModalError> {
    bank.mode(xi, n).max_drive_frequency()
}

/// How the string of largest response to a drive is located.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MaxSearch {
    /// Uniform damping (`k_γ = 0`): `ξ = k/n`.
    A03,
    /// `k_γ = k_ρ = k_T`: `ξ = sqrt(k)·(B_μ² + k²)^{1/4}/n`.
    A01,
    /// Golden-section search on `log ξ`.
    Numerical,
}

impl MaxSearch {
    /// Closed form when the parameters allow one, numerical otherwise.
    pub fn for_bank(bank: &StringBank) -> Self {
        let p = &bank.params;
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs());
        if p.k_gamma == 0.0 {
            MaxSearch::A03
        } else if close(p.k_gamma, p.k_rho) && close(p.k_rho, p.k_t) {
            MaxSearch::A01
        } else {
            MaxSearch::Numerical
        }
    }
}

/// `ξ_n^max`: the string whose mode `n` responds most strongly to drive `k`.
pub fn max_string_for_drive(bank: &StringBank, k: f64, n: u32, search: MaxSearch) -> Result<f64, ModalError> {
    let nf = n as f64;
    match search {
        MaxSearch::A03 => {
            if MaxSearch::for_bank(bank) != MaxSearch::A03 {
                return Err(ModalError::AssumptionViolated { assumption: search });
            }
            Ok(k / nf)
        }
        MaxSearch::A01 => {
            if MaxSearch::for_bank(bank) != MaxSearch::A01 {
                return Err(ModalError::AssumptionViolated { assumption: search });
            }
            let b = bank.derived.b_mu;
            Ok(k.sqrt() * (b * b + k * k).powf(0.25) / nf)
        }
        MaxSearch::Numerical => Ok(argmax_log(|xi| bank.mode(xi, n).amplitude(k), k / nf, 4.0)),
    }
}

/// Maximizes `f` over `ξ ∈ [center·e^{-span}, center·e^{span}]`: coarse scan
/// then golden section on `log ξ` down to 1e-10 relative.
pub(crate) fn argmax_log(f: impl Fn(f64) -> f64, center: f64, span: f64) -> f64 {
    let coarse = 800;
    let lo = center.ln() - span;
    let step = 2.0 * span / coarse as f64;
    let best = (0..=coarse)
        .map(|i| (i, f((lo + i as f64 * step).exp())))
        .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
    let mut a = lo + (best.0 as f64 - 1.0) * step;
    let mut b = lo + (best.0 as f64 + 1.0) * step;
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c.exp()), f(d.exp()));
    while b - a > 1e-11 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c.exp());
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d.exp());
        }
    }
    (0.5 * (a + b)).exp()
}

/// `e_n(z) = sqrt(2/ℓ)·sin(πnz/ℓ)`.
pub fn mode_shape(ell: f64, n: u32, z: f64) -> f64 {
    (2.0 / ell).sqrt() * (PI * n as f64 * z / ell).sin()
}

/// `u(t, z) = Σ_n p_n(t) e_n(z)` over the modes of `response` up to `n_max`.
pub fn reconstruct_displacement(
    bank: &StringBank,
    response: &ModalResponse,
    z: f64,
    t: f64,
    n_max: u32,
) -> Result<f64, ModalError> {
    let ell = bank.params.ell;
    if !(0.0..=ell).contains(&z) {
        return Err(ModalError::OutsideString { z, ell });
    }
    if z == 0.0 || z == ell {
        return Ok(0.0);
    }
    Ok(response
        .modes()
        .into_iter()
        .filter(|&n| n <= n_max)
        .map(|n| response.displacement(n, t) * mode_shape(ell, n, z))
        .sum())
}

/// `sqrt(2/ℓ)`, the peak of the fundamental mode shape.
pub fn mode_peak(ell: f64) -> f64 {
    SQRT_2 / ell.sqrt()
}
