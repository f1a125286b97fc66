//! Collision-model simulator for a coherence-fuelled quantum Otto engine.
//!
//! One or two optical cavities, each a truncated bosonic mode, are heated and
//! cooled by streams of three-level phaseonium ancillas and moved through
//! expansion and compression strokes by radiation pressure. The crate keeps an
//! exact ledger of heat, Alicki work, mechanical work, entropies and mutual
//! information along every stroke.
//!
//! Module map:
//!
//! * [`operator`]: dense complex linear algebra on truncated Hilbert spaces.
//! * [`bath`]: phaseonium ancilla states and their apparent/classical temperatures.
//! * [`collision`]: interaction unitaries, single and cascaded collisions, thermalization.
//! * [`engine`]: cavity geometry, radiation pressure and the four-stroke Otto cycle.
//!
//! All quantities are in natural units (ħ = k_B = c = 1): energies and
//! temperatures in t⁻¹, lengths and times in t.

// NaN must fail validation, so `!(x > 0.0)` is intentional throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bath;
pub mod collision;
pub mod engine;
pub mod error;
pub mod operator;

pub use error::{Error, Result};
