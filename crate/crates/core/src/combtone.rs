//! Combination tones of two-tone inputs `k1 = (u/w)·k0`: the energy period
//! `2πq/(k1 - k0)`, the Helmholtz / Lagrange / energy-period frequencies in
//! exact rationals, the interval table, and a sampling verifier of the period.

use std::f64::consts::PI;
use std::fmt::Write as _;

use num_integer::Integer;
use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::{energy_prefactor, energy_total};
use crate::modal::{odd_modes, response};
use crate::params::StringBank;
use crate::peaks::{letter_above, note_name, note_on_letter, parse_spelled, NoteError};
use crate::signal::TwoTone;

pub type Rational = Ratio<i64>;

/// Serializes rationals as `"u/w"` strings.
mod ratio_text {
    use super::Rational;
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &Rational, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(r)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rational, D::Error> {
        String::deserialize(d)?.parse().map_err(D::Error::custom)
    }
}

/// Samples per claimed period in [`verify_period`].
pub const SAMPLES_PER_PERIOD: usize = 2048;
/// Relative tolerance of the periodicity check.
pub const PERIODIC_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum CombToneError {
    #[error("interval {u}/{w} must satisfy u > w >= 1")]
    NotAbove { u: u64, w: u64 },
    #[error("two-tone frequencies {k1}/{k0} do not match the interval {u}/{w}")]
    Inconsistent { k1: f64, k0: f64, u: u64, w: u64 },
    #[error(transparent)]
    Note(#[from] NoteError),
}

/// `k1/k0 = u/w` in lowest terms with `(u+w)/(u-w) = p/q` and
/// `h = gcd(u+w, u-w)`, so that `u+w = h·p` and `u-w = h·q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntervalRatio {
    pub u: u64,
    pub w: u64,
    pub p: u64,
    pub q: u64,
    pub h: u64,
    /// The fraction as given, when it was not in lowest terms.
    pub reduced_from: Option<(u64, u64)>,
}

pub fn interval_from_fraction(u: u64, w: u64) -> Result<IntervalRatio, CombToneError> {
    if w == 0 || u <= w {
        return Err(CombToneError::NotAbove { u, w });
    }
    let g = u.gcd(&w);
    let (ur, wr) = (u / g, w / g);
    let h = (ur + wr).gcd(&(ur - wr));
    Ok(IntervalRatio {
        u: ur,
        w: wr,
        p: (ur + wr) / h,
        q: (ur - wr) / h,
        h,
        reduced_from: (g != 1).then_some((u, w)),
    })
}

impl IntervalRatio {
    pub fn ratio(&self) -> Rational {
        Rational::new(self.u as i64, self.w as i64)
    }

    pub fn p_over_q(&self) -> Rational {
        Rational::new(self.p as i64, self.q as i64)
    }

    /// Angular frequencies of the spectral lines of `E(ξ, ·)` as multiples of
    /// `2π/T` (the energy period): `k1 + k0`, `k1 - k0`, `2k1`, `2k0`.
    pub fn spectral_multiples(&self) -> [u64; 4] {
        [self.p, self.q, 2 * self.u / self.h, 2 * self.w / self.h]
    }
}

/// The three combination-tone predictions, as exact multiples of `k0`, and
/// the energy period as a multiple of `2π/k0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CombinationPrediction {
    pub interval: IntervalRatio,
    pub k0: f64,
    /// Difference tone `k1 - k0`.
    #[serde(with = "ratio_text")]
    pub helmholtz: Rational,
    /// Frequency GCD `g` with `k0 = w·g`, `k1 = u·g`.
    #[serde(with = "ratio_text")]
    pub lagrange: Rational,
    /// `(k1 - k0)/q`.
    #[serde(with = "ratio_text")]
    pub ours: Rational,
    #[serde(with = "ratio_text")]
    pub period: Rational,
}

pub fn predict(interval: IntervalRatio, k0: f64) -> CombinationPrediction {
    let (u, w, q) = (interval.u as i64, interval.w as i64, interval.q as i64);
    let helmholtz = Rational::new(u - w, w);
    CombinationPrediction {
        interval,
        k0,
        helmholtz,
        lagrange: Rational::new(1, w),
        ours: helmholtz / q,
        period: Rational::new(q * w, u - w),
    }
}

fn times(r: Rational, x: f64) -> f64 {
    x * *r.numer() as f64 / *r.denom() as f64
}

impl CombinationPrediction {
    pub fn helmholtz_freq(&self) -> f64 {
        times(self.helmholtz, self.k0)
    }

    pub fn lagrange_freq(&self) -> f64 {
        times(self.lagrange, self.k0)
    }

    pub fn ours_freq(&self) -> f64 {
        times(self.ours, self.k0)
    }

    /// `2πq/(k1 - k0)` [s].
    pub fn period_seconds(&self) -> f64 {
        times(self.period, 2.0 * PI / self.k0)
    }
}

struct NamedInterval {
    name: &'static str,
    u: u64,
    w: u64,
    /// Letter steps from the base note to the upper note.
    degree: i32,
}

const NATURAL_INTERVALS: [NamedInterval; 13] = [
    NamedInterval { name: "octave", u: 2, w: 1, degree: 7 },
    NamedInterval { name: "fifth", u: 3, w: 2, degree: 4 },
    NamedInterval { name: "major third", u: 5, w: 4, degree: 2 },
    NamedInterval { name: "fourth", u: 4, w: 3, degree: 3 },
    NamedInterval { name: "minor third", u: 6, w: 5, degree: 2 },
    NamedInterval { name: "major sixth", u: 5, w: 3, degree: 5 },
    NamedInterval { name: "minor sixth", u: 8, w: 5, degree: 5 },
    NamedInterval { name: "major seventh", u: 15, w: 8, degree: 6 },
    NamedInterval { name: "minor seventh", u: 9, w: 5, degree: 6 },
    NamedInterval { name: "major tone", u: 9, w: 8, degree: 1 },
    NamedInterval { name: "minor tone", u: 10, w: 9, degree: 1 },
    NamedInterval { name: "diatonic semitone", u: 16, w: 15, degree: 1 },
    NamedInterval { name: "chromatic semitone", u: 25, w: 24, degree: 0 },
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Row {
    pub interval: String,
    #[serde(with = "ratio_text")]
    pub ratio: Rational,
    /// Upper note, spelled on its scale degree; `*` marks the flatter of two
    /// rows sharing a name.
    pub k1_note: String,
    #[serde(with = "ratio_text")]
    pub helmholtz: Rational,
    pub helmholtz_note: String,
    #[serde(with = "ratio_text")]
    pub lagrange: Rational,
    pub lagrange_note: String,
    #[serde(with = "ratio_text")]
    pub p_over_q: Rational,
    pub q: u64,
    #[serde(with = "ratio_text")]
    pub ours: Rational,
    pub ours_note: String,
}

/// The natural intervals within one octave above `k0_note`.
pub fn table1(k0_note: &str) -> Result<Vec<Table1Row>, CombToneError> {
    let base = parse_spelled(k0_note)?;
    let f0 = base.frequency();
    let name = |r: Rational| note_name(times(r, f0)).spelled();
    let mut rows = Vec::with_capacity(NATURAL_INTERVALS.len());
    let mut upper = Vec::with_capacity(NATURAL_INTERVALS.len());
    for iv in &NATURAL_INTERVALS {
        let interval = interval_from_fraction(iv.u, iv.w)?;
        let pred = predict(interval, 1.0);
        let f1 = times(interval.ratio(), f0);
        upper.push(f1);
        rows.push(Table1Row {
            interval: iv.name.to_string(),
            ratio: interval.ratio(),
            k1_note: note_on_letter(f1, letter_above(base.letter, iv.degree))?.spelled(),
            helmholtz: pred.helmholtz,
            helmholtz_note: name(pred.helmholtz),
            lagrange: pred.lagrange,
            lagrange_note: name(pred.lagrange),
            p_over_q: interval.p_over_q(),
            q: interval.q,
            ours: pred.ours,
            ours_note: name(pred.ours),
        });
    }
    for i in 0..rows.len() {
        let flatter = (0..rows.len()).any(|j| j != i && rows[j].k1_note == rows[i].k1_note && upper[j] > upper[i]);
        if flatter {
            rows[i].k1_note.push('*');
        }
    }
    Ok(rows)
}

const TABLE1_HEADER: [&str; 11] = [
    "interval",
    "k1/k0",
    "k1 note",
    "(k1-k0)/k0",
    "note",
    "GCD/k0",
    "note",
    "p/q",
    "q",
    "(k1-k0)/(q k0)",
    "note",
];

fn table1_cells(row: &Table1Row) -> [String; 11] {
    [
        row.interval.clone(),
        row.ratio.to_string(),
        row.k1_note.clone(),
        row.helmholtz.to_string(),
        row.helmholtz_note.clone(),
        row.lagrange.to_string(),
        row.lagrange_note.clone(),
        row.p_over_q.to_string(),
        row.q.to_string(),
        row.ours.to_string(),
        row.ours_note.clone(),
    ]
}

/// Column-aligned text rendering.
pub fn table1_text(rows: &[Table1Row]) -> String {
    let cells: Vec<[String; 11]> = rows.iter().map(table1_cells).collect();
    let mut widths: Vec<usize> = TABLE1_HEADER.iter().map(|h| h.chars().count()).collect();
    for row in &cells {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let mut out = String::new();
    let mut line = |items: Vec<&str>| {
        let padded: Vec<String> = items
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
            .collect();
        writeln!(out, "{}", padded.join("  ").trim_end()).expect("write to string");
    };
    line(TABLE1_HEADER.to_vec());
    for row in &cells {
        line(row.iter().map(String::as_str).collect());
    }
    out
}

pub fn table1_csv(rows: &[Table1Row]) -> String {
    let mut out = String::from("interval,ratio,k1_note,helmholtz,helmholtz_note,lagrange,lagrange_note,p_over_q,q,ours,ours_note\n");
    for row in rows {
        out.push_str(&table1_cells(row).join(","));
        out.push('\n');
    }
    out
}

/// Amplitudes and phases of `p_n` and of `ṗ_n/(ξn)` under a two-tone drive:
/// `p_n = a1 sin(k1 t + α1) + a0 sin(k0 t + α0)`, and the velocity part
/// uses `b_i = a_i k_i/(ξn)`, `β_i = α_i + π/2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoToneModalResponse {
    pub n: u32,
    pub a: [f64; 2],
    pub alpha: [f64; 2],
    pub b: [f64; 2],
    pub beta: [f64; 2],
}

pub fn two_tone_modes(bank: &StringBank, xi: f64, tones: &TwoTone, n_max: u32) -> Vec<TwoToneModalResponse> {
    let resp = response(bank, xi, tones, &odd_modes(n_max));
    let freqs = [tones.k1, tones.k0];
    odd_modes(n_max)
        .into_iter()
        .map(|n| {
            let mut a = [0.0; 2];
            let mut alpha = [0.0; 2];
            for term in resp.terms_for(n) {
                let i = if term.drive_freq == tones.k1 { 0 } else { 1 };
                a[i] = term.amplitude;
                alpha[i] = term.phase;
            }
            let w = xi * n as f64;
            TwoToneModalResponse {
                n,
                a,
                alpha,
                b: [a[0] * freqs[0] / w, a[1] * freqs[1] / w],
                beta: [alpha[0] + PI / 2.0, alpha[1] + PI / 2.0],
            }
        })
        .collect()
}

/// A spectral line `amplitude·cos(freq·t + phase)` of `E(ξ, t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyLine {
    pub freq: f64,
    pub amplitude: f64,
    pub phase: f64,
}

/// Expands `(x1 sin X + x0 sin Y)²` into its constant and the lines at
/// `2k1`, `2k0`, `k1 - k0`, `k1 + k0`.
fn square_lines(x: [f64; 2], phase: [f64; 2], k: [f64; 2]) -> (f64, [EnergyLine; 4]) {
    let constant = 0.5 * (x[0] * x[0] + x[1] * x[1]);
    let lines = [
        EnergyLine { freq: 2.0 * k[0], amplitude: -0.5 * x[0] * x[0], phase: 2.0 * phase[0] },
        EnergyLine { freq: 2.0 * k[1], amplitude: -0.5 * x[1] * x[1], phase: 2.0 * phase[1] },
        EnergyLine { freq: k[0] - k[1], amplitude: x[0] * x[1], phase: phase[0] - phase[1] },
        EnergyLine { freq: k[0] + k[1], amplitude: -x[0] * x[1], phase: phase[0] + phase[1] },
    ];
    (constant, lines)
}

/// `E(ξ, t)` as a constant plus lines at `2k1`, `2k0`, `k1 - k0`, `k1 + k0`:
/// the displacement (`f`) and velocity (`g`) parts expanded separately, then
/// merged per frequency.
pub fn energy_spectrum(bank: &StringBank, xi: f64, tones: &TwoTone, n_max: u32) -> (f64, [EnergyLine; 4]) {
    let k = [tones.k1, tones.k0];
    let pre = energy_prefactor(bank, xi);
    let mut constant = 0.0;
    // accumulate each line as a phasor
    let mut phasors = [(0.0f64, 0.0f64); 4];
    for m in two_tone_modes(bank, xi, tones, n_max) {
        let weight = pre * (m.n as f64).powi(2);
        for (x, phase) in [(m.a, m.alpha), (m.b, m.beta)] {
            let (c, lines) = square_lines(x, phase, k);
            constant += weight * c;
            for (acc, line) in phasors.iter_mut().zip(lines) {
                acc.0 += weight * line.amplitude * line.phase.cos();
                acc.1 += weight * line.amplitude * line.phase.sin();
            }
        }
    }
    let freqs = [2.0 * k[0], 2.0 * k[1], k[0] - k[1], k[0] + k[1]];
    let mut lines = [EnergyLine { freq: 0.0, amplitude: 0.0, phase: 0.0 }; 4];
    for ((line, (re, im)), freq) in lines.iter_mut().zip(phasors).zip(freqs) {
        *line = EnergyLine {
            freq,
            amplitude: re.hypot(im),
            phase: im.atan2(re),
        };
    }
    (constant, lines)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodCheck {
    pub period: f64,
    /// `max_t |E(t + period) - E(t)| / max_t E(t)` over the samples.
    pub deviation: f64,
    pub periodic: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DivisorCheck {
    pub divisor: u64,
    pub check: PeriodCheck,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub u: u64,
    pub w: u64,
    pub p: u64,
    pub q: u64,
    pub h: u64,
    pub k0_hz: f64,
    pub xi_hz: f64,
    pub n_max: u32,
    pub claimed_period: f64,
    pub measured_ok: bool,
    pub deviation: f64,
    /// Every `T/d`, `d` a prime dividing one of the spectral multiples.
    pub divisor_checks: Vec<DivisorCheck>,
    pub smaller_divisors_fail: bool,
    /// `2π/(k1 - k0)`; absent when it coincides with the claimed period.
    pub helmholtz: Option<PeriodCheck>,
    /// `2π/g`, equal to `h` claimed periods.
    pub lagrange: PeriodCheck,
    pub lagrange_multiple: u64,
    /// The input has zero amplitude, so every period holds trivially.
    pub degenerate: bool,
}

fn prime_factors(mut n: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut d = 2;
    while d * d <= n {
        if n.is_multiple_of(d) {
            out.push(d);
            while n.is_multiple_of(d) {
                n /= d;
            }
        }
        d += 1;
    }
    if n > 1 {
        out.push(n);
    }
    out
}

/// Samples `E(ξ, ·)` on `[0, 2T)` and checks `E(t + T) = E(t)` for the
/// claimed period, its prime divisions, and the Helmholtz and Lagrange periods.
pub fn verify_period(
    bank: &StringBank,
    tones: &TwoTone,
    interval: &IntervalRatio,
    xi: f64,
    n_max: u32,
) -> Result<VerificationReport, CombToneError> {
    let ratio = interval.u as f64 / interval.w as f64;
    if ((tones.k1 / tones.k0) / ratio - 1.0).abs() > 1e-12 {
        return Err(CombToneError::Inconsistent {
            k1: tones.k1,
            k0: tones.k0,
            u: interval.u,
            w: interval.w,
        });
    }
    let prediction = predict(*interval, tones.k0);
    let period = prediction.period_seconds();
    let resp = response(bank, xi, tones, &odd_modes(n_max));
    let energy = |t: f64| energy_total(bank, xi, &resp, t);
    let count = 2 * SAMPLES_PER_PERIOD;
    let times: Vec<f64> = (0..count).map(|i| 2.0 * period * i as f64 / count as f64).collect();
    let base: Vec<f64> = times.iter().map(|&t| energy(t)).collect();
    let peak = base.iter().copied().fold(0.0, f64::max);
    let degenerate = peak == 0.0;

    let check = |shift: f64| {
        let worst = times
            .iter()
            .zip(&base)
            .map(|(&t, &e)| (energy(t + shift) - e).abs())
            .fold(0.0, f64::max);
        let deviation = if degenerate { 0.0 } else { worst / peak };
        PeriodCheck {
            period: shift,
            deviation,
            periodic: deviation < PERIODIC_TOLERANCE,
        }
    };

    let claimed = check(period);
    let mut divisors: Vec<u64> = interval
        .spectral_multiples()
        .iter()
        .flat_map(|&m| prime_factors(m))
        .collect();
    divisors.sort_unstable();
    divisors.dedup();
    let divisor_checks: Vec<DivisorCheck> = divisors
        .into_iter()
        .map(|d| DivisorCheck {
            divisor: d,
            check: check(period / d as f64),
        })
        .collect();
    let smaller_divisors_fail = !degenerate && divisor_checks.iter().all(|c| !c.check.periodic);
    let helmholtz = (interval.q != 1).then(|| check(period / interval.q as f64));
    let lagrange = check(period * interval.h as f64);

    Ok(VerificationReport {
        u: interval.u,
        w: interval.w,
        p: interval.p,
        q: interval.q,
        h: interval.h,
        k0_hz: tones.k0 / (2.0 * PI),
        xi_hz: xi / (2.0 * PI),
        n_max,
        claimed_period: period,
        measured_ok: claimed.periodic,
        deviation: claimed.deviation,
        divisor_checks,
        smaller_divisors_fail,
        helmholtz,
        lagrange,
        lagrange_multiple: interval.h,
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::builtin;
    use proptest::prelude::*;

    const C4: f64 = 2.0 * PI * 262.0;

    fn r(n: i64, d: i64) -> Rational {
        Rational::new(n, d)
    }

    #[test]
    fn interval_examples() {
        let fifth = interval_from_fraction(3, 2).unwrap();
        assert_eq!((fifth.p, fifth.q, fifth.h), (5, 1, 1));
        let minor_sixth = interval_from_fraction(8, 5).unwrap();
        assert_eq!((minor_sixth.p, minor_sixth.q), (13, 3));
        let iv = interval_from_fraction(7, 3).unwrap();
        assert_eq!((iv.h, iv.q, iv.p), (2, 2, 5));
        let reduced = interval_from_fraction(6, 4).unwrap();
        assert_eq!((reduced.u, reduced.w, reduced.reduced_from), (3, 2, Some((6, 4))));
        assert!(fifth.reduced_from.is_none());
        assert_eq!(interval_from_fraction(2, 2), Err(CombToneError::NotAbove { u: 2, w: 2 }));
        assert!(interval_from_fraction(2, 3).is_err());
        assert!(interval_from_fraction(2, 0).is_err());
    }

    #[test]
    fn prediction_examples() {
        let fifth = predict(interval_from_fraction(3, 2).unwrap(), C4);
        assert_eq!((fifth.helmholtz, fifth.lagrange, fifth.ours), (r(1, 2), r(1, 2), r(1, 2)));
        assert!((fifth.ours_freq() / (2.0 * PI) - 131.0).abs() < 1e-9);
        let seven_three = predict(interval_from_fraction(7, 3).unwrap(), C4);
        assert_eq!(seven_three.helmholtz, r(4, 3));
        assert_eq!(seven_three.lagrange, r(1, 3));
        assert_eq!(seven_three.ours, r(2, 3));
        // T = 2πq/(k1 - k0) = 2π·2/((4/3)k0)
        assert_eq!(seven_three.period, r(3, 2));
        let octave = predict(interval_from_fraction(2, 1).unwrap(), C4);
        assert_eq!(octave.helmholtz, r(1, 1));
        assert!((octave.period_seconds() - 2.0 * PI / C4).abs() < 1e-15);
    }

    #[test]
    fn paper_table_rows() {
        let rows = table1("C4").unwrap();
        assert_eq!(rows.len(), 13);
        let find = |name: &str| rows.iter().find(|r| r.interval == name).unwrap();
        let seventh = find("major seventh");
        assert_eq!((seventh.p_over_q, seventh.q, seventh.ours), (r(23, 7), 7, r(1, 8)));
        assert_eq!(seventh.ours_note, "C1");
        let minor_seventh = find("minor seventh");
        assert_eq!((minor_seventh.q, minor_seventh.ours), (2, r(2, 5)));
        assert_eq!(minor_seventh.ours_note, "A♭2");
        let chromatic = find("chromatic semitone");
        assert_eq!((chromatic.p_over_q, chromatic.ours), (r(49, 1), r(1, 24)));
        assert_eq!((chromatic.k1_note.as_str(), chromatic.ours_note.as_str()), ("C♯4", "F-1"));
        assert_eq!(find("minor tone").k1_note, "D4*");
        assert_eq!(find("major tone").k1_note, "D4");
        assert_eq!(find("diatonic semitone").k1_note, "D♭4");
    }

    #[test]
    fn table_renderings() {
        let rows = table1("C4").unwrap();
        let text = table1_text(&rows);
        assert_eq!(text.lines().count(), 14);
        assert!(text.lines().nth(1).unwrap().starts_with("octave"));
        let csv = table1_csv(&rows);
        assert_eq!(csv.lines().count(), 14);
        assert!(csv.contains("\nfifth,3/2,G4,1/2,C3,1/2,C3,5,1,1/2,C3\n"));
        assert!(table1("H4").is_err());
    }

    #[test]
    fn consecutive_harmonics_agree_on_the_root() {
        for r0 in 1..40i64 {
            let pred = predict(interval_from_fraction(r0 as u64 + 1, r0 as u64).unwrap(), 1.0);
            assert_eq!(pred.helmholtz, Rational::new(1, r0));
            assert_eq!(pred.lagrange, pred.helmholtz);
            assert_eq!(pred.ours, pred.helmholtz);
        }
    }

    #[test]
    fn ours_relates_to_lagrange_through_parity() {
        for u in 2..=32u64 {
            for w in 1..u {
                if u.gcd(&w) != 1 {
                    continue;
                }
                let iv = interval_from_fraction(u, w).unwrap();
                let pred = predict(iv, 1.0);
                assert_eq!(iv.h == 2, u % 2 == 1 && w % 2 == 1);
                assert_eq!(pred.ours, pred.lagrange * iv.h as i64, "{u}/{w}");
                assert_eq!(pred.ours, pred.helmholtz / iv.q as i64);
                assert_eq!(iv.u + iv.w, iv.h * iv.p);
                assert_eq!(iv.u - iv.w, iv.h * iv.q);
                assert_eq!(iv.p.gcd(&iv.q), 1);
            }
        }
    }

    #[test]
    fn split_energy_matches_direct_energy() {
        let bank = builtin("modified_a03").unwrap();
        let tones = TwoTone::new(C4 * 7.0 / 3.0, C4, 0.8, 1.3, 0.4, -1.1).unwrap();
        for xi in [2.0 * PI * 250.0, 3000.0, 9000.0] {
            let (constant, lines) = energy_spectrum(&bank, xi, &tones, 15);
            let resp = response(&bank, xi, &tones, &odd_modes(15));
            for t in [0.0, 0.00123, 0.0071] {
                let split = constant + lines.iter().map(|l| l.amplitude * (l.freq * t + l.phase).cos()).sum::<f64>();
                let direct = energy_total(&bank, xi, &resp, t);
                assert!((split - direct).abs() <= 1e-12 * direct, "xi={xi}");
            }
            for m in two_tone_modes(&bank, xi, &tones, 15) {
                assert!((m.b[0] / m.a[0] - tones.k1 / (xi * m.n as f64)).abs() < 1e-12);
                assert_eq!(m.beta[1], m.alpha[1] + PI / 2.0);
            }
        }
    }

    #[test]
    fn seven_over_three_period_structure() {
        let bank = builtin("modified_a03").unwrap();
        let iv = interval_from_fraction(7, 3).unwrap();
        let tones = TwoTone::from_ratio(7, 3, C4).unwrap();
        let report = verify_period(&bank, &tones, &iv, 2.0 * PI * 250.0, 15).unwrap();
        assert!(report.measured_ok, "{report:?}");
        assert!(report.smaller_divisors_fail);
        let helmholtz = report.helmholtz.unwrap();
        assert!(!helmholtz.periodic);
        assert!((helmholtz.period - 2.0 * PI / (tones.k1 - tones.k0)).abs() < 1e-15);
        assert!(report.lagrange.periodic);
        assert_eq!(report.lagrange_multiple, 2);
        assert!(!report.degenerate);
        let json = serde_json::to_string(&report).unwrap();
        assert!(json.contains("\"measured_ok\":true"));
    }

    #[test]
    fn fifth_period_verified() {
        let bank = builtin("modified_a03").unwrap();
        let iv = interval_from_fraction(3, 2).unwrap();
        let tones = TwoTone::from_ratio(3, 2, C4).unwrap();
        let report = verify_period(&bank, &tones, &iv, 2.0 * PI * 250.0, 15).unwrap();
        assert!(report.measured_ok && report.smaller_divisors_fail);
        assert!(report.helmholtz.is_none());
        assert!((report.claimed_period - 2.0 * PI / (tones.k1 - tones.k0)).abs() < 1e-15);
    }

    #[test]
    fn silent_input_is_degenerate() {
        let bank = builtin("modified_a03").unwrap();
        let iv = interval_from_fraction(3, 2).unwrap();
        let tones = TwoTone::new(1.5 * C4, C4, 0.0, 0.0, 0.0, 0.0).unwrap();
        let report = verify_period(&bank, &tones, &iv, 1000.0, 5).unwrap();
        assert!(report.degenerate && report.measured_ok);
        assert!(!report.smaller_divisors_fail);
    }

    #[test]
    fn mismatched_tones_rejected() {
        let bank = builtin("modified_a03").unwrap();
        let iv = interval_from_fraction(3, 2).unwrap();
        let tones = TwoTone::from_ratio(4, 3, C4).unwrap();
        assert!(matches!(
            verify_period(&bank, &tones, &iv, 1000.0, 5),
            Err(CombToneError::Inconsistent { .. })
        ));
    }

    #[test]
    fn primes() {
        assert_eq!(prime_factors(1), Vec::<u64>::new());
        assert_eq!(prime_factors(12), vec![2, 3]);
        assert_eq!(prime_factors(49), vec![7]);
        assert_eq!(prime_factors(97), vec![97]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(20))]
        #[test]
        fn claimed_period_is_minimal(
            u in 2u64..=16,
            w_seed in 1u64..16,
            xi_logs in proptest::array::uniform3(130f64.ln()..120_000f64.ln()),
        ) {
            let w = 1 + w_seed % (u - 1);
            prop_assume!(u.gcd(&w) == 1);
            let bank = builtin("modified_a03").unwrap();
            let iv = interval_from_fraction(u, w).unwrap();
            let tones = TwoTone::from_ratio(u, w, C4).unwrap();
            for xi in xi_logs.map(f64::exp) {
                let report = verify_period(&bank, &tones, &iv, xi, 15).unwrap();
                prop_assert!(report.measured_ok, "{u}/{w} xi={xi}: {}", report.deviation);
                prop_assert!(report.smaller_divisors_fail, "{u}/{w} xi={xi}: {:?}", report.divisor_checks);
                prop_assert!(report.lagrange.periodic);
            }
        }
    }
}
