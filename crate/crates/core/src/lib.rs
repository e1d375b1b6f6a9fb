//! Desk-scale evaluation of image in-painting substrates on synthetic
//! matrix-reasoning puzzles.
//!
//! The pipeline is: [`matrixgen`] renders a puzzle with its answer cell
//! masked, an [`inpaint`] substrate fills the mask, [`register`] aligns the
//! fill to each candidate completion, [`simpanel`] votes on the answer, and
//! [`psychfit`] / [`errstats`] characterise the substrate across a battery.

pub mod errstats;
pub mod error;
pub mod inpaint;
pub mod matrixgen;
pub mod pipeline;
pub mod psychfit;
pub mod raster;
pub mod register;
pub mod simpanel;

pub use error::*;
