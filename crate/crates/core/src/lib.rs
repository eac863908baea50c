//! Simulator of the censor side of the censorship arms race.
//!
//! A censor classifies simulated flows with an expected-cost decision rule
//! and pays for what it gets wrong plus the operating, storage and
//! implementation cost of the features it uses. Evasion tools transform
//! disallowed traffic; they are scored by the cheapest feature set that
//! still catches them.
//!
//! Modules, bottom-up: [`traffic`] (flows, generation, features),
//! [`economics`] (cost terms), [`censor`] (posterior, decisions, feature
//! selection), [`evader`] (tool transformations), [`armsrace`] (development
//! cycles), [`eval`] (tool scoring), [`scenario`] and [`report`] (files).

pub mod armsrace;
pub mod censor;
mod dist;
pub mod economics;
pub mod error;
pub mod evader;
pub mod eval;
pub mod report;
pub mod scenario;
pub mod seed;
pub mod traffic;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
