//! Energy stored in each string: the field `E(ξ, t) = Σ_n E_n(ξ, t)` with
//!
//! ```text
//! E_n(ξ, t) = ½ (π²/ℓ²) T(ξ) n² (p_n(t)² + ṗ_n(t)²/(ξ²n²))
//! ```
//!
//! evaluated from the closed-form modal response on a log-spaced `ξ` grid.

use std::f64::consts::PI;
use std::io::{self, BufRead, Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::modal::{odd_modes, response, ModalResponse};
use crate::params::StringBank;
use crate::signal::{Drive, Forcing, PeriodicSignal};

pub const DEFAULT_XI_POINTS: usize = 4096;
pub const DEFAULT_T_SAMPLES: usize = 64;

const BINARY_MAGIC: &[u8; 8] = b"BSLRFLD1";

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("empty grid")]
    EmptyGrid,
    #[error("invalid field data: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// `½ (π²/ℓ²) T(ξ)`, the factor shared by every mode.
pub fn energy_prefactor(bank: &StringBank, xi: f64) -> f64 {
    let ell = bank.params.ell;
    0.5 * PI * PI / (ell * ell) * bank.tension(xi)
}

fn mode_energy(prefactor: f64, xi: f64, n: u32, p: f64, v: f64) -> f64 {
    let nf = n as f64;
    let w = xi * nf;
    prefactor * nf * nf * (p * p + v * v / (w * w))
}

/// `E_n(ξ, t)` from the closed-form `p_n`, `ṗ_n`.
pub fn energy_mode(bank: &StringBank, xi: f64, response: &ModalResponse, n: u32, t: f64) -> f64 {
    let p = response.displacement(n, t);
    let v = response.velocity(n, t);
    mode_energy(energy_prefactor(bank, xi), xi, n, p, v)
}

/// `E(ξ, t)` summed over the modes present in `response`.
pub fn energy_total(bank: &StringBank, xi: f64, response: &ModalResponse, t: f64) -> f64 {
    let pre = energy_prefactor(bank, xi);
    response
        .modes()
        .into_iter()
        .map(|n| mode_energy(pre, xi, n, response.displacement(n, t), response.velocity(n, t)))
        .sum()
}

/// `points` angular frequencies spaced uniformly in `log ξ` over `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let step = (hi / lo).ln() / (points - 1) as f64;
            (0..points)
                .map(|i| {
                    if i == points - 1 {
                        hi
                    } else {
                        lo * (i as f64 * step).exp()
                    }
                })
                .collect()
        }
    }
}

/// `samples` instants covering `[0, period)`.
pub fn time_grid(period: f64, samples: usize) -> Vec<f64> {
    (0..samples)
        .map(|i| period * i as f64 / samples as f64)
        .collect()
}

/// Residual left out by truncating the mode sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TailBound {
    /// Upper bound on `Σ_{n > n_max} E_n(ξ, t)`, uniform in `t`.
    Bound(f64),
    /// The bound needs `n·ξ` above every drive frequency; raise `n_max`.
    Unavailable { min_n_max: u32 },
}

fn odd_tail_sum(first: f64, power: i32) -> f64 {
    // Σ_{n = first, first+2, ...} n^{-s} ≤ first^{-s} + first^{1-s}/(2(s-1))
    let s = power as f64;
    first.powi(-power) + first.powf(1.0 - s) / (2.0 * (s - 1.0))
}

/// Upper bound on the energy of all odd modes above `n_max`.
///
/// For `n ≥ n₀` (the first omitted odd mode) and `n₀ξ > K` (largest drive),
/// `R_n(k) ≤ ν_n/(n²ξ² - k²) ≤ ν₁/(λ ξ² n³)` with `λ = 1 - K²/(n₀ξ)²`, which
/// leaves sums of `n⁻⁴` and `n⁻⁶` that are bounded in closed form.
pub fn truncation_bound(bank: &StringBank, forcing: &dyn Forcing, xi: f64, n_max: u32) -> TailBound {
    let drives: Vec<Drive> = forcing
        .drives()
        .into_iter()
        .filter(|d| d.amplitude != 0.0)
        .collect();
    if drives.is_empty() {
        return TailBound::Bound(0.0);
    }
    let first = if n_max % 2 == 1 { n_max + 2 } else { n_max + 1 };
    let k_top = drives.iter().map(|d| d.freq).fold(0.0, f64::max);
    let reach = first as f64 * xi;
    if reach <= k_top {
        let mut min_n_max = (k_top / xi).floor() as u32;
        if min_n_max.is_multiple_of(2) {
            min_n_max += 1;
        }
        return TailBound::Unavailable { min_n_max };
    }
    let lambda = 1.0 - (k_top / reach).powi(2);
    let c_disp: f64 = drives.iter().map(|d| d.amplitude.abs()).sum();
    let c_vel: f64 = drives.iter().map(|d| d.amplitude.abs() * d.freq).sum();
    let gain = bank.nu(xi, 1) / (lambda * xi * xi);
    let first = first as f64;
    let bound = energy_prefactor(bank, xi)
        * gain
        * gain
        * (c_disp * c_disp * odd_tail_sum(first, 4) + c_vel * c_vel / (xi * xi) * odd_tail_sum(first, 6));
    TailBound::Bound(bound)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationReport {
    pub n_max: u32,
    /// Every `ξ` of the grid admits a bound.
    pub available: bool,
    /// Largest absolute tail bound over the grid [J]; `None` when unavailable.
    pub max_absolute: Option<f64>,
    /// Largest tail bound relative to the smallest-in-time field value at the
    /// same `ξ`.
    pub max_relative: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldMetadata {
    pub params_id: String,
    pub signal: String,
    /// Modes summed into `total`.
    pub modes: Vec<u32>,
    pub n_max: u32,
    /// Present when `modes` are all odd modes up to `n_max`.
    pub truncation: Option<TruncationReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeLayer {
    pub n: u32,
    /// Same layout as [`EnergyField::total`].
    pub values: Vec<f64>,
}

/// Sampled `E(ξ, t)`; values are stored `ξ`-major (`i·len(t) + j`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyField {
    pub xi_axis: Vec<f64>,
    pub t_axis: Vec<f64>,
    pub total: Vec<f64>,
    pub per_mode: Vec<ModeLayer>,
    pub metadata: FieldMetadata,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeStats {
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

impl EnergyField {
    pub fn get(&self, xi_index: usize, t_index: usize) -> f64 {
        self.total[xi_index * self.t_axis.len() + t_index]
    }

    /// `E(·, t_j)` over the `ξ` axis.
    pub fn slice_at(&self, t_index: usize) -> Vec<f64> {
        let nt = self.t_axis.len();
        (0..self.xi_axis.len())
            .map(|i| self.total[i * nt + t_index])
            .collect()
    }

    /// `E(ξ_i, ·)` over the time axis.
    pub fn row(&self, xi_index: usize) -> &[f64] {
        let nt = self.t_axis.len();
        &self.total[xi_index * nt..(xi_index + 1) * nt]
    }

    pub fn time_stats(&self, xi_index: usize) -> TimeStats {
        let row = self.row(xi_index);
        let min = row.iter().copied().fold(f64::INFINITY, f64::min);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = row.iter().sum::<f64>() / row.len() as f64;
        TimeStats { min, mean, max }
    }

    pub fn layer(&self, n: u32) -> Option<&ModeLayer> {
        self.per_mode.iter().find(|l| l.n == n)
    }

    /// Long-form CSV: `xi_hz,t,n,energy`, where `n = 0` labels the total.
    pub fn write_csv(&self, mut out: impl Write) -> io::Result<()> {
        writeln!(out, "xi_hz,t,n,energy")?;
        let nt = self.t_axis.len();
        for (i, xi) in self.xi_axis.iter().enumerate() {
            let hz = xi / (2.0 * PI);
            for (j, t) in self.t_axis.iter().enumerate() {
                let idx = i * nt + j;
                writeln!(out, "{hz:e},{t:e},0,{:e}", self.total[idx])?;
                for layer in &self.per_mode {
                    writeln!(out, "{hz:e},{t:e},{},{:e}", layer.n, layer.values[idx])?;
                }
            }
        }
        Ok(())
    }

    /// Reads the long-form CSV written by [`EnergyField::write_csv`]. Metadata
    /// other than the mode list is not carried by CSV.
    pub fn read_csv(input: impl BufRead) -> Result<Self, FieldError> {
        let mut lines = input.lines();
        let header = lines.next().transpose()?.unwrap_or_default();
        if header.trim() != "xi_hz,t,n,energy" {
            return Err(FieldError::Format(format!("unexpected header '{header}'")));
        }
        let mut xi_hz: Vec<f64> = Vec::new();
        let mut t_axis: Vec<f64> = Vec::new();
        let mut total = Vec::new();
        let mut layers: Vec<ModeLayer> = Vec::new();
        for (number, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |what: &str| FieldError::Format(format!("line {}: {what}", number + 2));
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 4 {
                return Err(bad("expected 4 columns"));
            }
            let hz: f64 = cols[0].parse().map_err(|_| bad("bad xi_hz"))?;
            let t: f64 = cols[1].parse().map_err(|_| bad("bad t"))?;
            let n: u32 = cols[2].parse().map_err(|_| bad("bad n"))?;
            let e: f64 = cols[3].parse().map_err(|_| bad("bad energy"))?;
            if xi_hz.last() != Some(&hz) {
                xi_hz.push(hz);
            }
            if xi_hz.len() == 1 && n == 0 {
                t_axis.push(t);
            }
            if n == 0 {
                total.push(e);
            } else {
                match layers.iter_mut().find(|l| l.n == n) {
                    Some(layer) => layer.values.push(e),
                    None => layers.push(ModeLayer { n, values: vec![e] }),
                }
            }
        }
        if total.is_empty() {
            return Err(FieldError::EmptyGrid);
        }
        if total.len() != xi_hz.len() * t_axis.len() || layers.iter().any(|l| l.values.len() != total.len()) {
            return Err(FieldError::Format("ragged grid".into()));
        }
        let modes: Vec<u32> = layers.iter().map(|l| l.n).collect();
        Ok(Self {
            xi_axis: xi_hz.iter().map(|hz| 2.0 * PI * hz).collect(),
            t_axis,
            total,
            metadata: FieldMetadata {
                params_id: String::new(),
                signal: String::new(),
                n_max: modes.iter().copied().max().unwrap_or(0),
                modes,
                truncation: None,
            },
            per_mode: layers,
        })
    }

    /// Little-endian binary grid: magic, counts, JSON metadata, mode indices,
    /// axes, total, then one block per retained mode.
    pub fn write_binary(&self, mut out: impl Write) -> Result<(), FieldError> {
        let meta = serde_json::to_vec(&self.metadata)?;
        out.write_all(BINARY_MAGIC)?;
        for count in [
            self.xi_axis.len(),
            self.t_axis.len(),
            self.per_mode.len(),
            meta.len(),
        ] {
            out.write_all(&(count as u64).to_le_bytes())?;
        }
        out.write_all(&meta)?;
        for layer in &self.per_mode {
            out.write_all(&(layer.n as u64).to_le_bytes())?;
        }
        let blocks = [&self.xi_axis, &self.t_axis, &self.total]
            .into_iter()
            .chain(self.per_mode.iter().map(|l| &l.values));
        for block in blocks {
            for v in block {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_binary(mut input: impl Read) -> Result<Self, FieldError> {
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != BINARY_MAGIC {
            return Err(FieldError::Format("bad magic".into()));
        }
        let read_u64 = |input: &mut dyn Read| -> io::Result<u64> {
            let mut buf = [0u8; 8];
            input.read_exact(&mut buf)?;
            Ok(u64::from_le_bytes(buf))
        };
        let n_xi = read_u64(&mut input)? as usize;
        let n_t = read_u64(&mut input)? as usize;
        let n_layers = read_u64(&mut input)? as usize;
        let meta_len = read_u64(&mut input)? as usize;
        let mut meta = vec![0u8; meta_len];
        input.read_exact(&mut meta)?;
        let metadata: FieldMetadata = serde_json::from_slice(&meta)?;
        let modes = (0..n_layers)
            .map(|_| read_u64(&mut input).map(|n| n as u32))
            .collect::<io::Result<Vec<_>>>()?;
        let mut read_block = |len: usize| -> io::Result<Vec<f64>> {
            let mut bytes = vec![0u8; len * 8];
            input.read_exact(&mut bytes)?;
            Ok(bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect())
        };
        let xi_axis = read_block(n_xi)?;
        let t_axis = read_block(n_t)?;
        let total = read_block(n_xi * n_t)?;
        let per_mode = modes
            .into_iter()
            .map(|n| read_block(n_xi * n_t).map(|values| ModeLayer { n, values }))
            .collect::<io::Result<Vec<_>>>()?;
        Ok(Self {
            xi_axis,
            t_axis,
            total,
            per_mode,
            metadata,
        })
    }
}

#[derive(Debug, Clone)]
pub struct FieldOptions {
    /// Modes summed into the field; defaults to the odd modes up to 15.
    pub modes: Vec<u32>,
    pub keep_per_mode: bool,
    /// Worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
}

impl FieldOptions {
    pub fn with_n_max(n_max: u32) -> Self {
        Self {
            modes: odd_modes(n_max),
            ..Self::default()
        }
    }
}

impl Default for FieldOptions {
    fn default() -> Self {
        Self {
            modes: odd_modes(crate::modal::DEFAULT_N_MAX),
            keep_per_mode: false,
            workers: None,
        }
    }
}

pub type WorkerPool = rayon::ThreadPool;

/// A dedicated pool of `workers` threads (at least one).
pub fn worker_pool(workers: usize) -> Result<WorkerPool, FieldError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| FieldError::Format(e.to_string()))
}

struct Row {
    total: Vec<f64>,
    layers: Vec<Vec<f64>>,
    tail: TailBound,
}

/// Samples `E(ξ, t)` for an arbitrary forcing.
pub fn energy_field(
    bank: &StringBank,
    forcing: &dyn Forcing,
    xi_grid: &[f64],
    t_grid: &[f64],
    options: &FieldOptions,
) -> Result<EnergyField, FieldError> {
    if xi_grid.is_empty() || t_grid.is_empty() || options.modes.is_empty() {
        return Err(FieldError::EmptyGrid);
    }
    let mut modes = options.modes.clone();
    modes.sort_unstable();
    modes.dedup();
    let n_max = *modes.last().expect("nonempty");
    let complete = modes == odd_modes(n_max);

    let compute_row = |xi: f64| -> Row {
        let resp = response(bank, xi, forcing, &modes);
        let pre = energy_prefactor(bank, xi);
        let mut total = vec![0.0; t_grid.len()];
        let mut layers = if options.keep_per_mode {
            vec![vec![0.0; t_grid.len()]; modes.len()]
        } else {
            Vec::new()
        };
        for (m, &n) in modes.iter().enumerate() {
            let terms: Vec<_> = resp.terms_for(n).copied().collect();
            for (j, &t) in t_grid.iter().enumerate() {
                let (mut p, mut v) = (0.0, 0.0);
                for term in &terms {
                    let (s, c) = (term.drive_freq * t + term.phase).sin_cos();
                    p += term.amplitude * s;
                    v += term.amplitude * term.drive_freq * c;
                }
                let e = mode_energy(pre, xi, n, p, v);
                total[j] += e;
                if let Some(layer) = layers.get_mut(m) {
                    layer[j] = e;
                }
            }
        }
        let tail = if complete {
            truncation_bound(bank, forcing, xi, n_max)
        } else {
            TailBound::Bound(0.0)
        };
        Row { total, layers, tail }
    };

    let rows: Vec<Row> = match options.workers {
        Some(workers) => worker_pool(workers)?.install(|| xi_grid.par_iter().map(|&xi| compute_row(xi)).collect()),
        None => xi_grid.par_iter().map(|&xi| compute_row(xi)).collect(),
    };

    let mut total = Vec::with_capacity(xi_grid.len() * t_grid.len());
    let mut per_mode: Vec<ModeLayer> = if options.keep_per_mode {
        modes
            .iter()
            .map(|&n| ModeLayer {
                n,
                values: Vec::with_capacity(total.capacity()),
            })
            .collect()
    } else {
        Vec::new()
    };
    let mut report = TruncationReport {
        n_max,
        available: true,
        max_absolute: Some(0.0),
        max_relative: Some(0.0),
    };
    for row in rows {
        match row.tail {
            TailBound::Bound(b) => {
                let floor = row.total.iter().copied().fold(f64::INFINITY, f64::min);
                report.max_absolute = report.max_absolute.map(|m| m.max(b));
                let rel = if b == 0.0 { 0.0 } else { b / floor };
                report.max_relative = report.max_relative.map(|m| m.max(rel));
            }
            TailBound::Unavailable { .. } => report.available = false,
        }
        total.extend_from_slice(&row.total);
        for (layer, values) in per_mode.iter_mut().zip(row.layers) {
            layer.values.extend_from_slice(&values);
        }
    }
    if !report.available {
        report.max_absolute = None;
        report.max_relative = None;
    }

    Ok(EnergyField {
        xi_axis: xi_grid.to_vec(),
        t_axis: t_grid.to_vec(),
        total,
        per_mode,
        metadata: FieldMetadata {
            params_id: bank.id.clone(),
            signal: forcing.describe(),
            modes,
            n_max,
            truncation: complete.then_some(report),
        },
    })
}

/// Field for a single sinusoid, odd modes up to `n_max`.
pub fn energy_field_sine(
    bank: &StringBank,
    signal: &PeriodicSignal,
    xi_grid: &[f64],
    t_grid: &[f64],
    n_max: u32,
) -> Result<EnergyField, FieldError> {
    if signal.components().len() != 1 {
        return Err(FieldError::Format("expected a single sinusoid".into()));
    }
    energy_field(bank, signal, xi_grid, t_grid, &FieldOptions::with_n_max(n_max))
}

/// Field for a periodic signal; cross terms between harmonics are kept
/// because each `p_n` is superposed before squaring.
pub fn energy_field_periodic(
    bank: &StringBank,
    signal: &PeriodicSignal,
    xi_grid: &[f64],
    t_grid: &[f64],
    n_max: u32,
) -> Result<EnergyField, FieldError> {
    energy_field(bank, signal, xi_grid, t_grid, &FieldOptions::with_n_max(n_max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modal::{response_periodic, response_sine};
    use crate::params::builtin;
    use crate::signal::{sawtooth, sine, Harmonic};
    use proptest::prelude::*;

    const C4: f64 = 2.0 * PI * 262.0;

    fn modified() -> StringBank {
        builtin("modified_a03").unwrap()
    }

    fn c4_drive(amplitude: f64) -> Drive {
        Drive {
            freq: C4,
            amplitude,
            phase: 0.0,
        }
    }

    #[test]
    fn resonant_mode_energy_is_constant_in_time() {
        let bank = modified();
        for n in [1, 3, 5] {
            let xi = C4 / n as f64;
            let r = response_sine(&bank, xi, c4_drive(1.0), 15);
            let samples: Vec<f64> = (0..10)
                .map(|i| energy_mode(&bank, xi, &r, n, 0.00037 * i as f64 + 1e-5 * (i * i) as f64))
                .collect();
            let max = samples.iter().copied().fold(f64::MIN, f64::max);
            let min = samples.iter().copied().fold(f64::MAX, f64::min);
            assert!((max - min) / max < 1e-12, "n={n}");
        }
    }

    #[test]
    fn off_resonance_energy_oscillates_at_twice_the_drive() {
        let bank = modified();
        let xi = 2.0 * PI * 250.0;
        let r = response_sine(&bank, xi, c4_drive(1.0), 15);
        let shift = PI / C4;
        let mut spread: f64 = 0.0;
        for i in 0..50 {
            let t = i as f64 * 1.3e-4;
            let a = energy_mode(&bank, xi, &r, 1, t);
            let b = energy_mode(&bank, xi, &r, 1, t + shift);
            assert!((a - b).abs() <= 1e-12 * a);
            spread = spread.max((a - energy_mode(&bank, xi, &r, 1, 0.0)).abs() / a);
        }
        assert!(spread > 1e-6, "energy should not be constant off resonance");
    }

    #[test]
    fn zero_signal_has_zero_energy() {
        let bank = modified();
        let r = response_sine(&bank, 1500.0, c4_drive(0.0), 15);
        assert!(r.terms.is_empty());
        assert_eq!(energy_mode(&bank, 1500.0, &r, 1, 0.3), 0.0);
    }

    #[test]
    fn kinetic_plus_potential_form_agrees() {
        let bank = modified();
        let signal = sawtooth(262.0, 4).unwrap();
        for xi in [400.0, 1646.0, 9000.0] {
            let r = response_periodic(&bank, xi, &signal, 9);
            let rho = bank.density(xi);
            let t_xi = bank.tension(xi);
            let ell = bank.params.ell;
            for n in odd_modes(9) {
                for t in [0.0, 0.0011, 0.0023] {
                    let p = r.displacement(n, t);
                    let v = r.velocity(n, t);
                    let nf = n as f64;
                    let direct = 0.5 * PI * PI / (ell * ell) * t_xi * nf * nf * p * p + 0.5 * rho * v * v;
                    let e = energy_mode(&bank, xi, &r, n, t);
                    assert!((e - direct).abs() <= 1e-12 * e, "xi={xi} n={n}");
                }
            }
        }
    }

    #[test]
    fn closed_form_under_exponential_laws() {
        // E_n for a sinusoid written with B_T, B_ν, B_μ and ξ powers only
        let bank = modified();
        let d = bank.derived;
        let p = bank.params;
        let ell = p.ell;
        let k = C4;
        for xi in [300.0, 2000.0, 12000.0] {
            let r = response_sine(&bank, xi, c4_drive(1.0), 7);
            for n in odd_modes(7) {
                let nf = n as f64;
                let w2 = xi * xi * nf * nf;
                let den = k.powi(4) + k * k * ((d.b_mu * xi.powf(d.alpha)).powi(2) - 2.0 * w2) + w2 * w2;
                let exponent = 2.0 * (2.0 * p.k_rho + p.k_t) / (p.k_rho + p.k_t);
                let phi = bank.mode(xi, n).phase(k);
                for t in [0.0, 0.0007] {
                    let c2 = (k * t + phi).cos().powi(2);
                    let closed = 0.5 * PI * PI / (ell * ell) * d.b_t * d.b_nu * d.b_nu * xi.powf(exponent) / den
                        * (1.0 + (k * k / w2 - 1.0) * c2);
                    let e = energy_mode(&bank, xi, &r, n, t);
                    assert!((e - closed).abs() <= 1e-10 * closed, "xi={xi} n={n}");
                }
            }
        }
    }

    #[test]
    fn field_layout_and_per_mode_sum() {
        let bank = modified();
        let signal = sawtooth(262.0, 3).unwrap();
        let xi = log_grid(200.0, 20000.0, 40);
        let t = time_grid(signal.period(), 8);
        let options = FieldOptions {
            keep_per_mode: true,
            ..FieldOptions::with_n_max(7)
        };
        let field = energy_field(&bank, &signal, &xi, &t, &options).unwrap();
        assert_eq!(field.total.len(), 40 * 8);
        assert_eq!(field.per_mode.len(), 4);
        for idx in 0..field.total.len() {
            let sum: f64 = field.per_mode.iter().map(|l| l.values[idx]).sum();
            assert!((sum - field.total[idx]).abs() <= 1e-12 * field.total[idx]);
            assert!(field.total[idx] >= 0.0);
        }
        let r = response_periodic(&bank, xi[5], &signal, 7);
        let direct = energy_total(&bank, xi[5], &r, t[3]);
        assert!((field.get(5, 3) - direct).abs() <= 1e-12 * direct);
        assert_eq!(field.row(5)[3], field.get(5, 3));
        assert_eq!(field.slice_at(3)[5], field.get(5, 3));
    }

    #[test]
    fn amplitude_doubling_quadruples_energy() {
        let bank = modified();
        let xi = log_grid(130.0, 20000.0, 64);
        let one = sine(262.0, 1.0, 0.0).unwrap();
        let t = time_grid(one.energy_period(), 8);
        let a = energy_field_sine(&bank, &one, &xi, &t, 15).unwrap();
        let b = energy_field_sine(&bank, &one.scaled(2.0), &xi, &t, 15).unwrap();
        for (x, y) in a.total.iter().zip(&b.total) {
            assert!((y - 4.0 * x).abs() <= 1e-12 * y);
        }
    }

    #[test]
    fn single_component_periodic_equals_sine_field() {
        let bank = modified();
        let signal = sine(262.0, 1.0, 0.3).unwrap();
        let xi = log_grid(130.0, 20000.0, 32);
        let t = time_grid(signal.energy_period(), 4);
        let a = energy_field_sine(&bank, &signal, &xi, &t, 15).unwrap();
        let b = energy_field_periodic(&bank, &signal, &xi, &t, 15).unwrap();
        assert_eq!(a.total, b.total);
        let two = sawtooth(262.0, 2).unwrap();
        assert!(energy_field_sine(&bank, &two, &xi, &t, 15).is_err());
    }

    #[test]
    fn harmonics_interfere() {
        let bank = modified();
        let both = sawtooth(262.0, 2).unwrap();
        let parts: Vec<PeriodicSignal> = both
            .components()
            .iter()
            .map(|c| PeriodicSignal::new(both.fundamental(), vec![*c]).unwrap())
            .collect();
        let xi = log_grid(200.0, 8000.0, 50);
        let t = time_grid(both.period(), 16);
        let whole = energy_field_periodic(&bank, &both, &xi, &t, 5).unwrap();
        let a = energy_field_periodic(&bank, &parts[0], &xi, &t, 5).unwrap();
        let b = energy_field_periodic(&bank, &parts[1], &xi, &t, 5).unwrap();
        let worst = whole
            .total
            .iter()
            .zip(a.total.iter().zip(&b.total))
            .map(|(w, (x, y))| (w - x - y).abs() / w)
            .fold(0.0, f64::max);
        assert!(worst > 1e-3, "{worst}");
    }

    #[test]
    fn truncation_bound_monotone_and_rigorous() {
        let bank = modified();
        let signal = sine(262.0, 1.0, 0.0).unwrap();
        for xi in [2.0 * PI * 20.0, 2.0 * PI * 100.0, C4, 2.0 * PI * 3000.0] {
            let mut last = f64::INFINITY;
            for n_max in [15, 17, 21, 31, 51] {
                let TailBound::Bound(b) = truncation_bound(&bank, &signal, xi, n_max) else {
                    panic!("bound unavailable at xi={xi} n_max={n_max}");
                };
                assert!(b < last);
                last = b;
            }
            // reference: explicit energy of modes 17..=101 over one period
            let r = response(&bank, xi, &signal, &(17..=101).step_by(2).collect::<Vec<_>>());
            let TailBound::Bound(bound) = truncation_bound(&bank, &signal, xi, 15) else {
                unreachable!()
            };
            for t in time_grid(signal.energy_period(), 64) {
                let omitted = energy_total(&bank, xi, &r, t);
                assert!(bound >= omitted, "xi={xi}: {bound} < {omitted}");
            }
        }
    }

    #[test]
    fn truncation_bound_unavailable_for_low_strings() {
        let bank = modified();
        let signal = sine(262.0, 1.0, 0.0).unwrap();
        let xi = 2.0 * PI * 10.0;
        match truncation_bound(&bank, &signal, xi, 15) {
            TailBound::Unavailable { min_n_max } => {
                assert_eq!(min_n_max % 2, 1);
                assert!(matches!(
                    truncation_bound(&bank, &signal, xi, min_n_max),
                    TailBound::Bound(_)
                ));
            }
            other => panic!("{other:?}"),
        }
        let silent = sine(262.0, 0.0, 0.0).unwrap();
        assert_eq!(truncation_bound(&bank, &silent, xi, 1), TailBound::Bound(0.0));
    }

    #[test]
    fn csv_and_binary_round_trip() {
        let bank = modified();
        let signal = sawtooth(262.0, 2).unwrap();
        let xi = log_grid(200.0, 2000.0, 5);
        let t = time_grid(signal.period(), 3);
        let options = FieldOptions {
            keep_per_mode: true,
            ..FieldOptions::with_n_max(3)
        };
        let field = energy_field(&bank, &signal, &xi, &t, &options).unwrap();

        let mut bin = Vec::new();
        field.write_binary(&mut bin).unwrap();
        let back = EnergyField::read_binary(bin.as_slice()).unwrap();
        assert_eq!(back, field);

        let mut csv = Vec::new();
        field.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv.clone()).unwrap();
        assert!(text.starts_with("xi_hz,t,n,energy\n"));
        assert_eq!(text.lines().count(), 1 + 5 * 3 * 3);
        let parsed = EnergyField::read_csv(csv.as_slice()).unwrap();
        assert_eq!(parsed.total, field.total);
        assert_eq!(parsed.t_axis, field.t_axis);
        assert_eq!(parsed.per_mode, field.per_mode);
        for (a, b) in parsed.xi_axis.iter().zip(&field.xi_axis) {
            assert!((a - b).abs() <= 1e-12 * b);
        }

        assert!(EnergyField::read_binary(&b"NOTMAGIC"[..]).is_err());
        assert!(EnergyField::read_csv(&b"a,b\n"[..]).is_err());
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let bank = modified();
        let signal = sawtooth(262.0, 4).unwrap();
        let xi = log_grid(130.0, 20000.0, 300);
        let t = time_grid(signal.period(), 8);
        let run = |workers| {
            let options = FieldOptions {
                workers,
                ..FieldOptions::default()
            };
            energy_field(&bank, &signal, &xi, &t, &options).unwrap()
        };
        let one = run(Some(1));
        assert_eq!(one, run(Some(4)));
        assert_eq!(one, run(None));
    }

    #[test]
    fn empty_grids_rejected() {
        let bank = modified();
        let s = sine(262.0, 1.0, 0.0).unwrap();
        assert!(matches!(
            energy_field(&bank, &s, &[], &[0.0], &FieldOptions::default()),
            Err(FieldError::EmptyGrid)
        ));
    }

    #[test]
    fn grids() {
        let g = log_grid(10.0, 1000.0, 3);
        assert_eq!(g[0], 10.0);
        assert!((g[1] - 100.0).abs() < 1e-12);
        assert_eq!(g[2], 1000.0);
        assert_eq!(time_grid(1.0, 4), vec![0.0, 0.25, 0.5, 0.75]);
    }

    proptest! {
        #[test]
        fn energies_nonnegative_and_even_modes_silent(
            xi in 130.0f64..120_000.0,
            f in 20.0f64..5000.0,
            amp in -3.0f64..3.0,
            phase in -3.2f64..3.2,
            t in 0.0f64..0.1,
            n in 1u32..40,
        ) {
            let bank = modified();
            let signal = PeriodicSignal::from_hz(f, vec![
                Harmonic { index: 1, amplitude: amp, phase },
                Harmonic { index: 2, amplitude: 0.5, phase: 0.0 },
            ]).unwrap();
            let r = response(&bank, xi, &signal, &[n]);
            let e = energy_mode(&bank, xi, &r, n, t);
            prop_assert!(e >= 0.0);
            if n % 2 == 0 {
                prop_assert_eq!(e, 0.0);
                prop_assert!(r.terms.is_empty());
            }
        }
    }
}
