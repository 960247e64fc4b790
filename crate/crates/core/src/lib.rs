//! Basilar-membrane model as a bank of damped strings: steady-state modal
//! response, stored energy, sub-harmonic peaks and combination tones.

pub mod combtone;
pub mod energy;
pub mod modal;
pub mod oracle;
pub mod params;
pub mod peaks;
pub mod signal;

pub use params::{StringBank, StringLawParams};
pub use signal::{Drive, Forcing, PeriodicSignal};
