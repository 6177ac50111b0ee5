//! Measurement and attribution of structural-register artifacts in
//! generated prose: em-dash habits, overt markdown formatting, and how
//! both respond to suppression prompting.
//!
//! The pipeline runs in three layers:
//!
//! * measurement — [`textmetrics`], [`mdfeatures`], [`dashcontext`] count
//!   and classify artifacts in any text;
//! * protocol — [`corpus`] stores samples, [`suppression`] pools them into
//!   condition summaries, reports, and baselines;
//! * application — [`attribution`] ranks profile similarity and
//!   [`harness`] collects fresh samples from providers (live or mock).

#![forbid(unsafe_code)]

pub mod attribution;
pub mod corpus;
pub mod dashcontext;
mod error;
pub mod harness;
pub mod mdfeatures;
pub mod suppression;
pub mod textmetrics;

pub use error::{Error, Result};
