//! String-bank parameterization.
//!
//! Every string `x ∈ [0, L]` of the bank carries a surface mass density
//! `ρ(x) = A_ρ e^{k_ρ x}`, a tension `T(x) = A_T e^{-k_T x}` and a damping
//! `γ(x) = A_γ e^{k_γ x}`. Length `ℓ` and coupling `c` are constant. Strings are
//! indexed by their undamped fundamental angular frequency
//! `ξ(x) = sqrt(T/ρ)·π/ℓ`, which under the exponential laws is `Ã e^{-k̃ x}`.
//! All frequencies are angular (rad/s).

use std::collections::BTreeMap;
use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ParamsError {
    #[error("invalid parameter {name} = {value}: {reason}")]
    Invalid {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("position x = {x} outside [0, {length}]")]
    PositionOutOfRange { x: f64, length: f64 },
    #[error("angular frequency {xi} rad/s outside the covered band [{lo}, {hi}]")]
    FrequencyOutOfRange { xi: f64, lo: f64, hi: f64 },
    #[error("unknown parameter set '{0}'")]
    UnknownSet(String),
    #[error("parameter file line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("parameter file is missing '{0}'")]
    Missing(&'static str),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Coefficients of the exponential laws describing the string bank.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StringLawParams {
    /// Surface mass density coefficient [kg/m²].
    pub a_rho: f64,
    pub k_rho: f64,
    /// Tension coefficient [kg/s²].
    pub a_t: f64,
    pub k_t: f64,
    /// Damping coefficient [kg/(m²·s)].
    pub a_gamma: f64,
    /// Damping exponent; its sign is not constrained.
    pub k_gamma: f64,
    /// String length [m].
    pub ell: f64,
    /// Cochlea length, normalized.
    pub length: f64,
    /// Coupling of the strings to the forcing.
    pub coupling: f64,
}

const KEYS: [&str; 9] = [
    "a_rho", "k_rho", "a_t", "k_t", "a_gamma", "k_gamma", "ell", "length", "coupling",
];

/// Cochlear partition properties measured at the base and apex. The string
/// model is recovered through `ρ = m/ℓ`, `T = ℓ·k/π²` and `γ = h/ℓ`.
#[derive(Debug, Clone, Copy)]
pub struct PartitionEndpoints {
    pub ell: f64,
    /// Mass per unit length [kg/m] at (base, apex).
    pub mass: (f64, f64),
    /// Stiffness [kg/(m·s²)] at (base, apex).
    pub stiffness: (f64, f64),
    /// Resistance [kg/(m·s)] at (base, apex).
    pub resistance: (f64, f64),
}

impl StringLawParams {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        a_rho: f64,
        k_rho: f64,
        a_t: f64,
        k_t: f64,
        a_gamma: f64,
        k_gamma: f64,
        ell: f64,
    ) -> Result<Self, ParamsError> {
        let params = Self {
            a_rho,
            k_rho,
            a_t,
            k_t,
            a_gamma,
            k_gamma,
            ell,
            length: 1.0,
            coupling: 1.0,
        };
        params.validate()?;
        Ok(params)
    }

    /// Fits the exponential laws exactly through the base and apex values.
    pub fn from_endpoints(ends: &PartitionEndpoints) -> Result<Self, ParamsError> {
        let ell = ends.ell;
        let rho = (ends.mass.0 / ell, ends.mass.1 / ell);
        let tension = (
            ell * ends.stiffness.0 / (PI * PI),
            ell * ends.stiffness.1 / (PI * PI),
        );
        let gamma = (ends.resistance.0 / ell, ends.resistance.1 / ell);
        Self::new(
            rho.0,
            (rho.1 / rho.0).ln(),
            tension.0,
            (tension.0 / tension.1).ln(),
            gamma.0,
            (gamma.1 / gamma.0).ln(),
            ell,
        )
    }

    pub fn validate(&self) -> Result<(), ParamsError> {
        let positive = [
            ("a_rho", self.a_rho),
            ("k_rho", self.k_rho),
            ("a_t", self.a_t),
            ("k_t", self.k_t),
            ("a_gamma", self.a_gamma),
            ("ell", self.ell),
            ("length", self.length),
            ("coupling", self.coupling),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(ParamsError::Invalid {
                    name,
                    value,
                    reason: "must be finite and positive",
                });
            }
        }
        if !self.k_gamma.is_finite() {
            return Err(ParamsError::Invalid {
                name: "k_gamma",
                value: self.k_gamma,
                reason: "must be finite",
            });
        }
        Ok(())
    }

    pub fn derived(&self) -> DerivedParams {
        let sum = self.k_rho + self.k_t;
        // sqrt(A_ρ/A_T)·ℓ/π, the reciprocal of the top angular frequency
        let base = (self.a_rho / self.a_t).sqrt() * self.ell / PI;
        let alpha = 2.0 * (self.k_rho - self.k_gamma) / sum;
        DerivedParams {
            alpha,
            b_mu: self.a_gamma / self.a_rho * base.powf(alpha),
            b_t: self.a_t * base.powf(2.0 * self.k_t / sum),
            b_nu: self.coupling / self.a_rho
                * base.powf(2.0 * self.k_rho / sum)
                * 2.0
                * SQRT_2
                / PI
                * self.ell.sqrt(),
            a_tilde: 1.0 / base,
            k_tilde: sum / 2.0,
            tension_exponent: 2.0 * self.k_t / sum,
            gain_exponent: 2.0 * self.k_rho / sum,
        }
    }

    fn get(&self, key: &str) -> f64 {
        match key {
            "a_rho" => self.a_rho,
            "k_rho" => self.k_rho,
            "a_t" => self.a_t,
            "k_t" => self.k_t,
            "a_gamma" => self.a_gamma,
            "k_gamma" => self.k_gamma,
            "ell" => self.ell,
            "length" => self.length,
            "coupling" => self.coupling,
            _ => unreachable!("unknown key {key}"),
        }
    }

    /// Parses the `name = value` text format. `#` starts a comment.
    /// `length` and `coupling` default to 1.
    pub fn parse(text: &str) -> Result<Self, ParamsError> {
        let mut values: BTreeMap<&'static str, f64> = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| ParamsError::Parse {
                line: idx + 1,
                message,
            };
            let (name, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected 'name = value', got '{line}'")))?;
            let name = name.trim();
            let key = KEYS
                .iter()
                .find(|k| **k == name)
                .ok_or_else(|| err(format!("unknown parameter '{name}'")))?;
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|e| err(format!("bad number for '{name}': {e}")))?;
            if values.insert(key, value).is_some() {
                return Err(err(format!("duplicate parameter '{name}'")));
            }
        }
        let need = |key: &'static str| values.get(key).copied().ok_or(ParamsError::Missing(key));
        let params = Self {
            a_rho: need("a_rho")?,
            k_rho: need("k_rho")?,
            a_t: need("a_t")?,
            k_t: need("k_t")?,
            a_gamma: need("a_gamma")?,
            k_gamma: need("k_gamma")?,
            ell: need("ell")?,
            length: values.get("length").copied().unwrap_or(1.0),
            coupling: values.get("coupling").copied().unwrap_or(1.0),
        };
        params.validate()?;
        Ok(params)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# string-bank parameters, SI units\n");
        for key in KEYS {
            out.push_str(&format!("{key} = {:e}\n", self.get(key)));
        }
        out
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ParamsError> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ParamsError> {
        fs::write(path, self.to_text())?;
        Ok(())
    }
}

/// Constants of the bank once re-parameterized by `ξ`:
/// `μ(ξ) = B_μ ξ^α`, `T(ξ) = B_T ξ^{2k_T/(k_ρ+k_T)}`,
/// `ν_n(ξ) = B_ν ξ^{2k_ρ/(k_ρ+k_T)} / n` for odd `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedParams {
    pub alpha: f64,
    pub b_mu: f64,
    pub b_t: f64,
    pub b_nu: f64,
    pub a_tilde: f64,
    pub k_tilde: f64,
    pub tension_exponent: f64,
    pub gain_exponent: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DampingClass {
    Underdamped { resonance: f64 },
    Overdamped,
}

/// Coefficients of the modal equation `p̈ = -(nξ)² p - μ ṗ + ν F(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeCoefficients {
    pub xi: f64,
    pub n: u32,
    pub mu: f64,
    pub nu: f64,
}

impl ModeCoefficients {
    pub fn new(xi: f64, n: u32, mu: f64, nu: f64) -> Self {
        Self { xi, n, mu, nu }
    }

    /// Natural angular frequency `nξ`.
    pub fn natural(&self) -> f64 {
        self.n as f64 * self.xi
    }

    pub fn damping_class(&self) -> DampingClass {
        let w = self.natural();
        let half = self.mu / 2.0;
        if w > half {
            DampingClass::Underdamped {
                resonance: (w * w - half * half).sqrt(),
            }
        } else {
            DampingClass::Overdamped
        }
    }
}

/// A validated parameter set together with its derived constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StringBank {
    pub id: String,
    pub params: StringLawParams,
    pub derived: DerivedParams,
}

impl StringBank {
    pub fn new(id: impl Into<String>, params: StringLawParams) -> Result<Self, ParamsError> {
        params.validate()?;
        Ok(Self {
            id: id.into(),
            derived: params.derived(),
            params,
        })
    }

    /// Resolves a builtin set id, falling back to a parameter file path.
    pub fn resolve(spec: &str) -> Result<Self, ParamsError> {
        if let Some(params) = builtin_parameter_sets().get(spec) {
            return Self::new(spec, *params);
        }
        let path = Path::new(spec);
        if path.is_file() {
            let id = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| spec.to_string());
            return Self::new(id, StringLawParams::load(path)?);
        }
        Err(ParamsError::UnknownSet(spec.to_string()))
    }

    pub fn xi_of_x(&self, x: f64) -> Result<f64, ParamsError> {
        if !(0.0..=self.params.length).contains(&x) {
            return Err(ParamsError::PositionOutOfRange {
                x,
                length: self.params.length,
            });
        }
        Ok(self.derived.a_tilde * (-self.derived.k_tilde * x).exp())
    }

    pub fn x_of_xi(&self, xi: f64) -> Result<f64, ParamsError> {
        let (lo, hi) = self.band();
        let slack = 1e-12;
        if !(xi >= lo * (1.0 - slack) && xi <= hi * (1.0 + slack)) {
            return Err(ParamsError::FrequencyOutOfRange { xi, lo, hi });
        }
        let x = (self.derived.a_tilde / xi).ln() / self.derived.k_tilde;
        Ok(x.clamp(0.0, self.params.length))
    }

    /// `[ξ(L), ξ(0)]` in rad/s.
    pub fn band(&self) -> (f64, f64) {
        let d = &self.derived;
        (
            d.a_tilde * (-d.k_tilde * self.params.length).exp(),
            d.a_tilde,
        )
    }

    pub fn band_hz(&self) -> (f64, f64) {
        let (lo, hi) = self.band();
        (lo / (2.0 * PI), hi / (2.0 * PI))
    }

    pub fn mu(&self, xi: f64) -> f64 {
        self.derived.b_mu * xi.powf(self.derived.alpha)
    }

    /// Forcing gain `ν_n`; zero for every even mode.
    pub fn nu(&self, xi: f64, n: u32) -> f64 {
        if n.is_multiple_of(2) {
            0.0
        } else {
            self.derived.b_nu * xi.powf(self.derived.gain_exponent) / n as f64
        }
    }

    pub fn tension(&self, xi: f64) -> f64 {
        self.derived.b_t * xi.powf(self.derived.tension_exponent)
    }

    /// Surface density `A_ρ e^{k_ρ x(ξ)}` evaluated directly from the law,
    /// without the `ξ`-power shortcut.
    pub fn density(&self, xi: f64) -> f64 {
        let x = (self.derived.a_tilde / xi).ln() / self.derived.k_tilde;
        self.params.a_rho * (self.params.k_rho * x).exp()
    }

    pub fn mode(&self, xi: f64, n: u32) -> ModeCoefficients {
        ModeCoefficients::new(xi, n, self.mu(xi), self.nu(xi, n))
    }

    pub fn damping_class(&self, xi: f64, n: u32) -> DampingClass {
        self.mode(xi, n).damping_class()
    }

    /// String `ξ` at which mode `n` switches between over- and underdamped,
    /// i.e. the root of `nξ = B_μ ξ^α / 2`. Requires `α ≠ 1`.
    pub fn damping_bifurcation(&self, n: u32) -> Option<f64> {
        let d = &self.derived;
        if (1.0 - d.alpha).abs() < 1e-12 {
            return None;
        }
        Some((d.b_mu / (2.0 * n as f64)).powf(1.0 / (1.0 - d.alpha)))
    }
}

impl fmt::Display for StringBank {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (lo, hi) = self.band_hz();
        write!(f, "{} [{lo:.1} Hz, {hi:.1} Hz]", self.id)
    }
}

/// Set fitted to the base/apex partition values read off the published
/// mass, stiffness and resistance profiles; string length 0.29 mm.
pub const NOBILI_2003: PartitionEndpoints = PartitionEndpoints {
    ell: 2.9e-4,
    mass: (0.1e-5, 1.8e-5),
    stiffness: (5e4, 1e1),
    resistance: (2.4e-3, 0.5e-3),
};

/// Adjusted profiles covering the 20 Hz - 20 kHz band, with uniform damping.
pub const MODIFIED_A03: PartitionEndpoints = PartitionEndpoints {
    ell: 2.9e-4,
    mass: (0.2e-5, 2e-5),
    stiffness: (3.2e4, 0.32),
    resistance: (2.4e-3, 2.4e-3),
};

pub fn builtin_parameter_sets() -> BTreeMap<&'static str, StringLawParams> {
    let mut sets = BTreeMap::new();
    for (id, ends) in [("nobili2003", NOBILI_2003), ("modified_a03", MODIFIED_A03)] {
        let params = StringLawParams::from_endpoints(&ends).expect("builtin endpoints are valid");
        sets.insert(id, params);
    }
    sets
}

pub fn builtin(id: &str) -> Result<StringBank, ParamsError> {
    builtin_parameter_sets()
        .get(id)
        .ok_or_else(|| ParamsError::UnknownSet(id.to_string()))
        .and_then(|p| StringBank::new(id, *p))
}

/// Rounds to `digits` significant digits.
pub fn round_sig(value: f64, digits: i32) -> f64 {
    if value == 0.0 || !value.is_finite() {
        return value;
    }
    let exponent = value.abs().log10().floor() as i32;
    let scale = 10f64.powi(digits - 1 - exponent);
    (value * scale).round() / scale
}
