//! Formula recommendation for spreadsheets.
//!
//! Given a target cell on a sheet, the engine retrieves similar sheets from
//! an indexed corpus, locates a region there whose neighbourhood matches the
//! target's, and adapts the formula found in that region to the target sheet.

pub mod eval;
pub mod features;
pub mod formula;
pub mod grid;
pub mod index;
pub mod model;
pub mod ooxml;
pub mod recommend;
pub mod synth;
pub mod training;
pub mod weaksup;
