//! Peak detection on `E(·, t)` over the `ξ` axis, harmonic/sub-harmonic
//! classification against a fundamental, and Scientific Pitch Notation.

use std::f64::consts::PI;
use std::fmt;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::EnergyField;

pub const DEFAULT_TOLERANCE_CENTS: f64 = 15.0;
pub const MAX_HARMONIC: u32 = 16;
pub const MAX_SUBHARMONIC: u32 = 15;
const A4_HZ: f64 = 440.0;
/// Semitones of the natural letters above C.
const LETTERS: [(char, i32); 7] = [('C', 0), ('D', 2), ('E', 4), ('F', 5), ('G', 7), ('A', 9), ('B', 11)];
/// Flat spelling of each pitch class: (letter index, accidental).
const FLAT_SPELLING: [(usize, i32); 12] = [
    (0, 0),
    (1, -1),
    (1, 0),
    (2, -1),
    (2, 0),
    (3, 0),
    (4, -1),
    (4, 0),
    (5, -1),
    (5, 0),
    (6, -1),
    (6, 0),
];

#[derive(Debug, Error, PartialEq)]
pub enum NoteError {
    #[error("cannot parse note name '{0}'")]
    Parse(String),
}

/// A spelled 12-TET pitch, e.g. `A♭1`, with its offset from the exact input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoteName {
    pub letter: char,
    /// Sharps (positive) or flats (negative).
    pub accidental: i32,
    pub octave: i32,
    /// Offset of the named frequency from the note, in `[-50, 50)`.
    pub cents: f64,
}

impl NoteName {
    /// Semitones above C₀ of the spelled pitch.
    pub fn midi_offset(&self) -> i32 {
        let natural = LETTERS.iter().find(|(l, _)| *l == self.letter).map_or(0, |l| l.1);
        12 * self.octave + natural + self.accidental
    }

    /// Equal-tempered frequency of the spelled pitch [Hz].
    pub fn frequency(&self) -> f64 {
        // A₄ sits 57 semitones above C₀
        A4_HZ * 2f64.powf((self.midi_offset() - 57) as f64 / 12.0)
    }

    /// The pitch name without the cents offset.
    pub fn spelled(&self) -> String {
        let accidental = match self.accidental {
            a if a > 0 => "♯".repeat(a as usize),
            a => "♭".repeat((-a) as usize),
        };
        format!("{}{}{}", self.letter, accidental, self.octave)
    }
}

impl fmt::Display for NoteName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {:+.1}¢", self.spelled(), self.cents)
    }
}

/// Semitones of `freq_hz` above C₀, unrounded.
fn semitones_above_c0(freq_hz: f64) -> f64 {
    12.0 * (freq_hz / A4_HZ).log2() + 57.0
}

/// Nearest 12-TET note (A₄ = 440 Hz) with flat spelling.
pub fn note_name(freq_hz: f64) -> NoteName {
    let exact = semitones_above_c0(freq_hz);
    let mut nearest = exact.round();
    let mut cents = 100.0 * (exact - nearest);
    // round half up in pitch so the offset lies in [-50, 50)
    if cents >= 50.0 {
        nearest += 1.0;
        cents -= 100.0;
    }
    let nearest = nearest as i32;
    let (letter, accidental) = FLAT_SPELLING[nearest.rem_euclid(12) as usize];
    NoteName {
        letter: LETTERS[letter].0,
        accidental,
        octave: nearest.div_euclid(12),
        cents,
    }
}

/// Spells the 12-TET note nearest `freq_hz` on a given letter, e.g. the
/// chromatic semitone above C₄ as `C♯4` rather than `D♭4`.
pub fn note_on_letter(freq_hz: f64, letter: char) -> Result<NoteName, NoteError> {
    let base = note_name(freq_hz);
    let natural = LETTERS
        .iter()
        .find(|(l, _)| *l == letter)
        .ok_or_else(|| NoteError::Parse(letter.to_string()))?
        .1;
    let target = base.midi_offset();
    // choose the octave that puts the natural letter closest to the pitch
    let octave = (target - natural + 6).div_euclid(12);
    Ok(NoteName {
        letter,
        accidental: target - (12 * octave + natural),
        octave,
        cents: base.cents,
    })
}

/// The letter `steps` diatonic degrees above `letter`.
pub fn letter_above(letter: char, steps: i32) -> char {
    let index = LETTERS.iter().position(|(l, _)| *l == letter).unwrap_or(0) as i32;
    LETTERS[(index + steps).rem_euclid(7) as usize].0
}

/// Parses an SPN name such as `C4`, `Ab1`, `A♭1`, `C#4`, `F-1` or `F₋₁`
/// into a frequency [Hz].
pub fn parse_note(name: &str) -> Result<f64, NoteError> {
    parse_spelled(name).map(|n| n.frequency())
}

pub fn parse_spelled(name: &str) -> Result<NoteName, NoteError> {
    let bad = || NoteError::Parse(name.to_string());
    let normalized: String = name
        .trim()
        .chars()
        .map(|c| match c {
            '₀'..='₉' => char::from_digit(c as u32 - '₀' as u32, 10).expect("digit"),
            '₋' | '−' => '-',
            other => other,
        })
        .collect();
    let mut chars = normalized.chars().peekable();
    let letter = chars.next().ok_or_else(bad)?.to_ascii_uppercase();
    if !LETTERS.iter().any(|(l, _)| *l == letter) {
        return Err(bad());
    }
    let mut accidental = 0;
    while let Some(&c) = chars.peek() {
        match c {
            '#' | '♯' => accidental += 1,
            'b' | '♭' => accidental -= 1,
            _ => break,
        }
        chars.next();
    }
    let octave: i32 = chars.collect::<String>().parse().map_err(|_| bad())?;
    let spelled = NoteName {
        letter,
        accidental,
        octave,
        cents: 0.0,
    };
    Ok(spelled)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Classification {
    Harmonic { j: u32 },
    Subharmonic { n: u32 },
    Mixed { j: u32, n: u32 },
    Unclassified,
}

impl Classification {
    /// The ratio `j/n` to the fundamental, if classified.
    pub fn ratio(&self) -> Option<(u32, u32)> {
        match *self {
            Self::Harmonic { j } => Some((j, 1)),
            Self::Subharmonic { n } => Some((1, n)),
            Self::Mixed { j, n } => Some((j, n)),
            Self::Unclassified => None,
        }
    }
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Harmonic { j } => write!(f, "harmonic({j})"),
            Self::Subharmonic { n } => write!(f, "subharmonic({n})"),
            Self::Mixed { j, n } => write!(f, "mixed({j},{n})"),
            Self::Unclassified => write!(f, "unclassified"),
        }
    }
}

fn cents_between(a: f64, b: f64) -> f64 {
    1200.0 * (a / b).log2()
}

/// Smallest `j/n` (odd `n ≤ 15` first, then `j ≤ 16`) within
/// `tolerance_cents` of `freq_hz / fundamental_hz`.
pub fn classify(freq_hz: f64, fundamental_hz: f64, tolerance_cents: f64) -> Classification {
    for n in (1..=MAX_SUBHARMONIC).step_by(2) {
        for j in 1..=MAX_HARMONIC {
            let target = fundamental_hz * j as f64 / n as f64;
            if cents_between(freq_hz, target).abs() <= tolerance_cents {
                return match (j, n) {
                    (j, 1) => Classification::Harmonic { j },
                    (1, n) => Classification::Subharmonic { n },
                    (j, n) => Classification::Mixed { j, n },
                };
            }
        }
    }
    Classification::Unclassified
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    /// Refined angular frequency of the maximum [rad/s].
    pub xi: f64,
    pub freq_hz: f64,
    pub energy: f64,
    pub prominence: f64,
    /// Grid index of the sampled maximum.
    pub index: usize,
    pub classification: Classification,
    pub note: NoteName,
}

/// Strict local maxima of `values` over the grid `xi`, with topographic
/// prominence at least `min_prominence_ratio` times the global maximum.
/// Locations are refined by a parabola through three points in `ln ξ`.
pub fn find_peaks_in(xi: &[f64], values: &[f64], min_prominence_ratio: f64) -> Vec<Peak> {
    assert_eq!(xi.len(), values.len(), "grid and values differ in length");
    let len = values.len();
    if len < 3 {
        return Vec::new();
    }
    let global = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let threshold = min_prominence_ratio * global;
    let mut peaks = Vec::new();
    for i in 1..len - 1 {
        let v = values[i];
        if !(v > values[i - 1] && v > values[i + 1]) {
            continue;
        }
        let base = |range: &mut dyn Iterator<Item = usize>| {
            let mut low = v;
            for k in range {
                if values[k] > v {
                    break;
                }
                low = low.min(values[k]);
            }
            low
        };
        let left = base(&mut (0..i).rev());
        let right = base(&mut (i + 1..len));
        let prominence = v - left.max(right);
        if prominence <= 0.0 || prominence < threshold {
            continue;
        }
        let (u, energy) = refine([xi[i - 1].ln(), xi[i].ln(), xi[i + 1].ln()], [values[i - 1], v, values[i + 1]]);
        let xi_peak = u.exp();
        let freq_hz = xi_peak / (2.0 * PI);
        peaks.push(Peak {
            xi: xi_peak,
            freq_hz,
            energy,
            prominence,
            index: i,
            classification: Classification::Unclassified,
            note: note_name(freq_hz),
        });
    }
    peaks.sort_by(|a, b| b.energy.total_cmp(&a.energy));
    peaks
}

/// Vertex of the parabola through three points; falls back to the middle
/// point when the three are collinear.
fn refine(u: [f64; 3], y: [f64; 3]) -> (f64, f64) {
    let (d0, d1) = (u[1] - u[0], u[2] - u[1]);
    let s0 = (y[1] - y[0]) / d0;
    let s1 = (y[2] - y[1]) / d1;
    let curvature = (s1 - s0) / (u[2] - u[0]);
    if !(curvature < 0.0) {
        return (u[1], y[1]);
    }
    // y = y1 + b (x - u1) + c (x - u1)², with b the centered slope
    let b = s0 + curvature * d0;
    let offset = (-b / (2.0 * curvature)).clamp(-d0, d1);
    (u[1] + offset, y[1] + b * offset + curvature * offset * offset)
}

/// Peaks of `E(·, t_index)`.
pub fn find_peaks(field: &EnergyField, t_index: usize, min_prominence_ratio: f64) -> Vec<Peak> {
    find_peaks_in(&field.xi_axis, &field.slice_at(t_index), min_prominence_ratio)
}

/// Sets each peak's classification relative to `fundamental_hz`.
pub fn classify_peaks(peaks: &mut [Peak], fundamental_hz: f64, tolerance_cents: f64) {
    for peak in peaks {
        peak.classification = classify(peak.freq_hz, fundamental_hz, tolerance_cents);
    }
}

pub fn write_csv(peaks: &[Peak], mut out: impl Write) -> io::Result<()> {
    writeln!(out, "freq_hz,xi,energy,prominence,classification,note,cents")?;
    for p in peaks {
        writeln!(
            out,
            "{:e},{:e},{:e},{:e},{},{},{:.2}",
            p.freq_hz,
            p.xi,
            p.energy,
            p.prominence,
            p.classification,
            p.note.spelled(),
            p.note.cents
        )?;
    }
    Ok(())
}

pub fn format_table(peaks: &[Peak]) -> String {
    let mut out = format!(
        "{:>4}  {:>10}  {:>12}  {:>12}  {:<16}  {:<6}  {:>7}\n",
        "rank", "freq [Hz]", "energy", "prominence", "class", "note", "cents"
    );
    for (rank, p) in peaks.iter().enumerate() {
        out.push_str(&format!(
            "{:>4}  {:>10.3}  {:>12.4e}  {:>12.4e}  {:<16}  {:<6}  {:>+7.1}\n",
            rank + 1,
            p.freq_hz,
            p.energy,
            p.prominence,
            p.classification.to_string(),
            p.note.spelled(),
            p.note.cents
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reference_pitch_and_paper_names() {
        let a4 = note_name(440.0);
        assert_eq!(a4.spelled(), "A4");
        assert!(a4.cents.abs() < 1e-9);
        let c4 = note_name(262.0);
        assert_eq!(c4.spelled(), "C4");
        assert!((c4.cents - 2.5).abs() < 0.1, "{}", c4.cents);
        assert_eq!(note_name(262.0 / 5.0).spelled(), "A♭1");
        assert_eq!(note_name(262.0 / 3.0).spelled(), "F2");
        assert_eq!(note_name(27.5).spelled(), "A0");
        assert_eq!(note_name(262.0 / 24.0).spelled(), "F-1");
    }

    #[test]
    fn cents_stay_in_half_open_range() {
        // exactly a quarter tone above A4
        let n = note_name(440.0 * 2f64.powf(0.5 / 12.0));
        assert_eq!(n.spelled(), "B♭4");
        assert!((n.cents + 50.0).abs() < 1e-6);
    }

    #[test]
    fn spelling_on_letters() {
        let c4 = parse_note("C4").unwrap();
        assert_eq!(note_on_letter(c4 * 25.0 / 24.0, 'C').unwrap().spelled(), "C♯4");
        assert_eq!(note_on_letter(c4 * 16.0 / 15.0, 'D').unwrap().spelled(), "D♭4");
        assert_eq!(note_on_letter(c4 * 2.0, 'C').unwrap().spelled(), "C5");
        assert_eq!(note_on_letter(c4 * 15.0 / 8.0, 'B').unwrap().spelled(), "B4");
        assert_eq!(note_on_letter(c4 / 2.0, 'B').unwrap().spelled(), "B♯2");
        assert_eq!(letter_above('C', 7), 'C');
        assert_eq!(letter_above('A', 2), 'C');
    }

    #[test]
    fn parse_spn() {
        assert!((parse_note("A4").unwrap() - 440.0).abs() < 1e-9);
        assert!((parse_note("C4").unwrap() - 261.6255653).abs() < 1e-6);
        for name in ["Ab1", "A♭1", "a♭₁", "G#1"] {
            assert!((parse_note(name).unwrap() - 51.9130872).abs() < 1e-6, "{name}");
        }
        for name in ["F-1", "F₋₁", "F−1"] {
            assert!((parse_note(name).unwrap() - 10.913).abs() < 1e-3, "{name}");
        }
        for bad in ["", "H4", "C", "C4x"] {
            assert!(parse_note(bad).is_err(), "{bad}");
        }
        assert_eq!(parse_spelled("Bb3").unwrap().spelled(), "B♭3");
    }

    #[test]
    fn classification_examples() {
        assert_eq!(classify(262.0, 262.0, 15.0), Classification::Harmonic { j: 1 });
        assert_eq!(classify(524.0 / 3.0, 262.0, 15.0), Classification::Mixed { j: 2, n: 3 });
        assert_eq!(classify(87.3, 262.0, 15.0), Classification::Subharmonic { n: 3 });
        assert_eq!(classify(786.0, 262.0, 15.0), Classification::Harmonic { j: 3 });
        // 131 Hz would need an even denominator
        assert_eq!(classify(131.0, 262.0, 15.0), Classification::Unclassified);
        assert_eq!(classify(262.0 * 17.0, 262.0, 15.0), Classification::Unclassified);
    }

    #[test]
    fn constant_and_tiny_inputs_have_no_peaks() {
        let xi: Vec<f64> = (1..=50).map(|i| i as f64 * 10.0).collect();
        assert!(find_peaks_in(&xi, &vec![3.0; 50], 0.0).is_empty());
        assert!(find_peaks_in(&xi[..2], &[1.0, 2.0], 0.0).is_empty());
    }

    #[test]
    fn parabolic_refinement_recovers_vertex() {
        let xi: Vec<f64> = (0..200).map(|i| 100.0 * (i as f64 * 0.01).exp()).collect();
        let centre = 100.0 * 0.873f64.exp();
        let values: Vec<f64> = xi.iter().map(|x| 5.0 - (x / centre).ln().powi(2)).collect();
        let peaks = find_peaks_in(&xi, &values, 0.0);
        assert_eq!(peaks.len(), 1);
        assert!((peaks[0].xi / centre - 1.0).abs() < 1e-12);
        assert!((peaks[0].energy - 5.0).abs() < 1e-12);
    }

    #[test]
    fn prominence_filters_and_orders() {
        let xi: Vec<f64> = (1..=9).map(|i| i as f64).collect();
        let values = [0.0, 10.0, 0.0, 1.0, 0.9, 1.05, 0.0, 5.0, 0.0];
        let peaks = find_peaks_in(&xi, &values, 0.0);
        let energies: Vec<f64> = peaks.iter().map(|p| p.index as f64).collect();
        assert_eq!(energies, vec![1.0, 7.0, 5.0, 3.0]);
        let small = peaks.iter().find(|p| p.index == 3).unwrap();
        assert!((small.prominence - 0.1).abs() < 1e-12);
        let kept = find_peaks_in(&xi, &values, 0.2);
        assert_eq!(kept.len(), 2);
    }

    #[test]
    fn output_formats() {
        let xi: Vec<f64> = [100.0, 200.0, 400.0].iter().map(|f| 2.0 * PI * f).collect();
        let mut peaks = find_peaks_in(&xi, &[0.0, 1.0, 0.0], 0.0);
        classify_peaks(&mut peaks, 200.0, 15.0);
        let mut csv = Vec::new();
        write_csv(&peaks, &mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.lines().nth(1).unwrap().contains("harmonic(1)"));
        assert!(format_table(&peaks).contains("G3"));
    }

    proptest! {
        #[test]
        fn scaling_preserves_peaks(scale in 1e-6f64..1e6, seed in 0u64..1000) {
            let xi: Vec<f64> = (0..120).map(|i| 50.0 * (i as f64 * 0.05).exp()).collect();
            let values: Vec<f64> = (0..120)
                .map(|i| ((i as f64 * 0.37 + seed as f64).sin() + 1.5) * (1.0 + (i as f64 * 0.11).cos()))
                .collect();
            let scaled: Vec<f64> = values.iter().map(|v| v * scale).collect();
            let mut a = find_peaks_in(&xi, &values, 0.01);
            let mut b = find_peaks_in(&xi, &scaled, 0.01);
            classify_peaks(&mut a, 262.0, 15.0);
            classify_peaks(&mut b, 262.0, 15.0);
            prop_assert_eq!(a.len(), b.len());
            for (p, q) in a.iter().zip(&b) {
                prop_assert_eq!(p.index, q.index);
                prop_assert!((p.xi / q.xi - 1.0).abs() < 1e-9);
                prop_assert_eq!(p.classification, q.classification);
            }
        }

        #[test]
        fn classified_ratios_lie_within_tolerance(freq in 5.0f64..5000.0, tol in 1.0f64..40.0) {
            if let Some((j, n)) = classify(freq, 262.0, tol).ratio() {
                prop_assert!(n % 2 == 1 && j <= MAX_HARMONIC && n <= MAX_SUBHARMONIC);
                prop_assert!(cents_between(freq, 262.0 * j as f64 / n as f64).abs() <= tol);
            }
        }

        #[test]
        fn note_cents_in_range(freq in 1.0f64..20000.0) {
            let n = note_name(freq);
            prop_assert!(n.cents >= -50.0 && n.cents < 50.0);
            prop_assert!((cents_between(freq, n.frequency()) - n.cents).abs() < 1e-6);
        }
    }
}
