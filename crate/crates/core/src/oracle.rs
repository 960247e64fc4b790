//! Fixed-step RK4 integration of a single modal equation
//! `p̈ = -(nξ)² p - μ ṗ + ν F(t)`, used as ground truth for the closed forms.

use std::f64::consts::PI;
use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::modal::response;
use crate::params::{DampingClass, ModeCoefficients, StringBank};
use crate::signal::{Drive, Forcing};

/// Steps per shortest period used by the closed-form comparisons.
pub const COMPARISON_STEPS_PER_PERIOD: f64 = 512.0;
/// Transient residual targeted before comparing, relative to the response.
const SETTLE_RESIDUAL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("step {dt:e} s exceeds the limit {limit:e} s (64 steps per natural period)")]
    StepTooLarge { dt: f64, limit: f64 },
    #[error("integration time must be positive, got {0}")]
    NonPositiveDuration(f64),
    #[error("mode n={n} at xi={xi} is overdamped (mu={mu}); the oscillatory decay fit does not apply")]
    Overdamped { xi: f64, n: u32, mu: f64 },
    #[error("transient too small to fit a decay rate")]
    NoTransient,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OscillatorState {
    pub t: f64,
    pub p: f64,
    pub v: f64,
}

impl OscillatorState {
    pub fn at_rest() -> Self {
        Self { t: 0.0, p: 0.0, v: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<OscillatorState>,
}

impl Trajectory {
    pub fn last(&self) -> OscillatorState {
        *self.states.last().expect("trajectory holds the initial state")
    }

    pub fn write_csv(&self, mut out: impl Write) -> io::Result<()> {
        writeln!(out, "t,p,v")?;
        for s in &self.states {
            writeln!(out, "{:e},{:e},{:e}", s.t, s.p, s.v)?;
        }
        Ok(())
    }
}

/// The right-hand side of one modal equation with its drives unpacked.
#[derive(Debug, Clone)]
pub struct ModeSystem {
    pub mode: ModeCoefficients,
    drives: Vec<Drive>,
}

impl ModeSystem {
    pub fn new(mode: ModeCoefficients, forcing: &dyn Forcing) -> Self {
        Self {
            mode,
            drives: forcing.drives(),
        }
    }

    fn force(&self, t: f64) -> f64 {
        self.drives.iter().map(|d| d.eval(t)).sum()
    }

    fn accel(&self, t: f64, p: f64, v: f64) -> f64 {
        let w = self.mode.natural();
        let mut a = -w * w * p - self.mode.mu * v;
        if self.mode.nu != 0.0 {
            a += self.mode.nu * self.force(t);
        }
        a
    }

    /// One classical RK4 step from `state` at time `t`.
    fn step(&self, t: f64, p: f64, v: f64, dt: f64) -> (f64, f64) {
        let half = 0.5 * dt;
        let k1p = v;
        let k1v = self.accel(t, p, v);
        let k2p = v + half * k1v;
        let k2v = self.accel(t + half, p + half * k1p, v + half * k1v);
        let k3p = v + half * k2v;
        let k3v = self.accel(t + half, p + half * k2p, v + half * k2v);
        let k4p = v + dt * k3v;
        let k4v = self.accel(t + dt, p + dt * k3p, v + dt * k3v);
        (
            p + dt / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p),
            v + dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v),
        )
    }

    /// Integrates `steps` steps of size `dt`, calling `visit` after each one.
    /// Times are computed as `t₀ + i·dt` so they do not drift.
    fn run(&self, start: OscillatorState, dt: f64, steps: usize, mut visit: impl FnMut(OscillatorState)) -> OscillatorState {
        let (mut p, mut v) = (start.p, start.v);
        for i in 0..steps {
            let t = start.t + i as f64 * dt;
            (p, v) = self.step(t, p, v, dt);
            visit(OscillatorState {
                t: start.t + (i + 1) as f64 * dt,
                p,
                v,
            });
        }
        OscillatorState {
            t: start.t + steps as f64 * dt,
            p,
            v,
        }
    }

    /// Closed-form periodic solution `(p, ṗ)`, summed over drives in rational form.
    pub fn steady_state(&self, t: f64) -> (f64, f64) {
        self.drives.iter().fold((0.0, 0.0), |(p, v), d| {
            let (dp, dv) = self.mode.rational_steady_state(d.freq, d.phase, t);
            (p + d.amplitude * dp, v + d.amplitude * dv)
        })
    }

    fn fastest(&self) -> f64 {
        self.drives
            .iter()
            .map(|d| d.freq)
            .fold(self.mode.natural(), f64::max)
    }

    /// Time after which a transient started from `start` has decayed below
    /// `SETTLE_RESIDUAL` of the steady response, and never less than `20/μ`.
    pub fn settle_time(&self, start: OscillatorState) -> f64 {
        let mu = self.mode.mu;
        let w = self.mode.natural();
        let (ps, vs) = self.steady_state(start.t);
        let x0 = (start.p - ps).abs();
        let v0 = (start.v - vs).abs();
        let scale = self
            .drives
            .iter()
            .map(|d| (d.amplitude * self.mode.amplitude(d.freq)).powi(2))
            .sum::<f64>()
            .sqrt()
            / 2f64.sqrt();
        let floor = if mu > 0.0 { 20.0 / mu } else { 0.0 };
        if scale == 0.0 || x0 + v0 == 0.0 || mu <= 0.0 {
            return floor;
        }
        // |x(t)| ≤ B e^{-st} with s the slowest decay rate
        let (bound, rate) = match self.mode.damping_class() {
            DampingClass::Underdamped { resonance } => (x0 + (v0 + 0.5 * mu * x0) / resonance, 0.5 * mu),
            DampingClass::Overdamped => {
                let d = (0.25 * mu * mu - w * w).max(0.0).sqrt().max(1e-6 * mu);
                (x0 + (v0 + 0.5 * mu * x0) / d, 0.5 * mu - d)
            }
        };
        let needed = (bound / (SETTLE_RESIDUAL * scale)).ln() / rate;
        needed.max(floor)
    }

    fn comparison_step(&self) -> f64 {
        2.0 * PI / self.fastest() / COMPARISON_STEPS_PER_PERIOD
    }
}

/// Largest admissible step: 64 steps per natural period `2π/(nξ)`.
pub fn max_step(mode: &ModeCoefficients) -> f64 {
    2.0 * PI / mode.natural() / 64.0
}

/// RK4 trajectory of a mode given by raw coefficients, every step recorded.
/// The step is reduced as needed to end exactly at `t_end`.
pub fn integrate_coefficients(
    mode: ModeCoefficients,
    forcing: &dyn Forcing,
    state0: OscillatorState,
    t_end: f64,
    dt: f64,
) -> Result<Trajectory, OracleError> {
    let limit = max_step(&mode);
    if !(dt > 0.0 && dt <= limit) {
        return Err(OracleError::StepTooLarge { dt, limit });
    }
    let span = t_end - state0.t;
    if !(span > 0.0) {
        return Err(OracleError::NonPositiveDuration(span));
    }
    let system = ModeSystem::new(mode, forcing);
    // shrink dt so the last step lands on t_end
    let steps = (span / dt).ceil().max(1.0) as usize;
    let dt = span / steps as f64;
    let mut states = Vec::with_capacity(steps + 1);
    states.push(state0);
    system.run(state0, dt, steps, |s| states.push(s));
    Ok(Trajectory { states })
}

/// RK4 trajectory of mode `n` of string `ξ`.
pub fn integrate_mode(
    bank: &StringBank,
    xi: f64,
    n: u32,
    forcing: &dyn Forcing,
    state0: OscillatorState,
    t_end: f64,
    dt: f64,
) -> Result<Trajectory, OracleError> {
    integrate_coefficients(bank.mode(xi, n), forcing, state0, t_end, dt)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub xi: f64,
    pub n: u32,
    pub mu: f64,
    /// Start of the compared window [s].
    pub t_start: f64,
    pub t_end: f64,
    pub dt: f64,
    /// Largest `|p_rk4 - p_closed|` over the window.
    pub max_abs_deviation: f64,
    /// Largest `|p_closed|` over the window.
    pub reference: f64,
    pub max_rel_deviation: f64,
    /// Relative deviation at `t = 20/μ`, for reference.
    pub deviation_at_20_over_mu: f64,
}

/// Integrates from rest past the transient, then compares against the
/// library's closed-form response over one period of the slowest drive
/// (at least four natural periods).
pub fn compare_with_closed_form(bank: &StringBank, xi: f64, n: u32, forcing: &dyn Forcing) -> Result<Comparison, OracleError> {
    let mode = bank.mode(xi, n);
    let system = ModeSystem::new(mode, forcing);
    let closed = response(bank, xi, forcing, &[n]);
    let start = OscillatorState::at_rest();
    let dt = system.comparison_step();
    let t_settle = system.settle_time(start);
    let slowest = forcing
        .drives()
        .iter()
        .map(|d| d.freq)
        .fold(f64::INFINITY, f64::min);
    let window = (2.0 * PI / slowest).max(4.0 * 2.0 * PI / mode.natural());

    let mut deviation_at_20 = f64::NAN;
    let probe = if mode.mu > 0.0 { 20.0 / mode.mu } else { f64::INFINITY };
    let settle_steps = (t_settle / dt).ceil() as usize;
    let probe_step = (probe / dt).round() as usize;
    let mut i = 0usize;
    let mut probe_ref: f64 = 0.0;
    let mut probe_dev = 0.0;
    let settled = system.run(start, dt, settle_steps, |s| {
        i += 1;
        // deviation around t = 20/μ, measured over one drive period
        if i >= probe_step && (i - probe_step) as f64 * dt <= window {
            let want = closed.displacement(n, s.t);
            probe_ref = probe_ref.max(want.abs());
            probe_dev = f64::max(probe_dev, (s.p - want).abs());
        }
    });
    if probe_ref > 0.0 {
        deviation_at_20 = probe_dev / probe_ref;
    }

    let steps = (window / dt).ceil() as usize;
    let (mut worst, mut reference) = (0.0f64, 0.0f64);
    let end = system.run(settled, dt, steps, |s| {
        let want = closed.displacement(n, s.t);
        worst = worst.max((s.p - want).abs());
        reference = reference.max(want.abs());
    });
    let max_rel_deviation = if reference > 0.0 {
        worst / reference
    } else if worst == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(Comparison {
        xi,
        n,
        mu: mode.mu,
        t_start: settled.t,
        t_end: end.t,
        dt,
        max_abs_deviation: worst,
        reference,
        max_rel_deviation,
        deviation_at_20_over_mu: deviation_at_20,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// Fitted decay rate of the transient envelope [1/s] (positive = decay).
    pub rate: f64,
    /// `μ/2`, the rate predicted by the eigenvalues.
    pub expected: f64,
    pub maxima: usize,
}

impl DecayFit {
    pub fn relative_error(&self) -> f64 {
        if self.expected == 0.0 {
            self.rate.abs()
        } else {
            (self.rate / self.expected - 1.0).abs()
        }
    }
}

/// Fits the exponential decay of `p_rk4 - p_closed` by least squares on the
/// logarithm of its successive local maxima in absolute value.
pub fn convergence_rate(mode: ModeCoefficients, forcing: &dyn Forcing, state0: OscillatorState) -> Result<DecayFit, OracleError> {
    let DampingClass::Underdamped { resonance } = mode.damping_class() else {
        return Err(OracleError::Overdamped {
            xi: mode.xi,
            n: mode.n,
            mu: mode.mu,
        });
    };
    let system = ModeSystem::new(mode, forcing);
    let dt = system.comparison_step();
    let period = 2.0 * PI / resonance;
    let span = if mode.mu > 0.0 {
        // decay by 1e5 in envelope, at most 2000 periods
        ((2.0 / mode.mu) * 1e5f64.ln()).min(2000.0 * period)
    } else {
        50.0 * period
    };
    let steps = (span / dt).ceil() as usize;

    let residual = |s: &OscillatorState| s.p - system.steady_state(s.t).0;
    let mut trail = [(state0.t, residual(&state0).abs()); 2];
    let mut peaks: Vec<(f64, f64)> = Vec::new();
    system.run(state0, dt, steps, |s| {
        let r = residual(&s).abs();
        if trail[1].1 > trail[0].1 && trail[1].1 >= r {
            peaks.push(trail[1]);
        }
        trail = [trail[1], (s.t, r)];
    });
    let Some(first) = peaks.first().map(|p| p.1) else {
        return Err(OracleError::NoTransient);
    };
    // stay clear of the integration error floor
    peaks.retain(|&(_, a)| a > first * 1e-5 && a > 0.0);
    if peaks.len() < 3 {
        return Err(OracleError::NoTransient);
    }
    let m = peaks.len() as f64;
    let (st, sy) = peaks.iter().fold((0.0, 0.0), |(a, b), &(t, y)| (a + t, b + y.ln()));
    let (mt, my) = (st / m, sy / m);
    let (num, den) = peaks.iter().fold((0.0, 0.0), |(a, b), &(t, y)| {
        (a + (t - mt) * (y.ln() - my), b + (t - mt) * (t - mt))
    });
    Ok(DecayFit {
        rate: -num / den,
        expected: mode.mu / 2.0,
        maxima: peaks.len(),
    })
}

/// Step-halving ratio `|x(dt) - x_ref| / |x(dt/2) - x_ref|` at `t_end`, with
/// the reference computed at `dt/16`; about 16 for a fourth-order method.
pub fn order_ratio(mode: ModeCoefficients, forcing: &dyn Forcing, state0: OscillatorState, t_end: f64, dt: f64) -> Result<f64, OracleError> {
    let end = |h: f64| integrate_coefficients(mode, forcing, state0, t_end, h).map(|tr| tr.last());
    let coarse = end(dt)?;
    let fine = end(dt / 2.0)?;
    let reference = end(dt / 16.0)?;
    let w = mode.natural();
    let err = |s: OscillatorState| (s.p - reference.p).hypot((s.v - reference.v) / w);
    Ok(err(coarse) / err(fine))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TupleCheck {
    pub drive_hz: f64,
    pub comparison: Comparison,
}

/// Draws `count` tuples `(ξ, k, n)` with `ξ`, `k` log-uniform over the band
/// and `n ∈ {1, 3, 5, 7}`.
pub fn random_tuples(bank: &StringBank, count: usize, rng: &mut impl Rng) -> Vec<(f64, f64, u32)> {
    let (lo, hi) = bank.band();
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|_| {
            let xi = rng.gen_range(a..b).exp();
            let k = rng.gen_range(a..b).exp();
            let n = [1, 3, 5, 7][rng.gen_range(0..4)];
            (xi, k, n)
        })
        .collect()
}

/// Compares RK4 and closed form on `count` seeded random tuples, in parallel.
pub fn random_tuple_suite(bank: &StringBank, count: usize, seed: u64) -> Result<Vec<TupleCheck>, OracleError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_tuples(bank, count, &mut rng)
        .into_par_iter()
        .map(|(xi, k, n)| {
            let drive = vec![Drive {
                freq: k,
                amplitude: 1.0,
                phase: 0.0,
            }];
            compare_with_closed_form(bank, xi, n, &drive).map(|comparison| TupleCheck {
                drive_hz: k / (2.0 * PI),
                comparison,
            })
        })
        .collect()
}
