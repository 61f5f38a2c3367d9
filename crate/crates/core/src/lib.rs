//! Compact, inspectable embeddings of single ECG beats.
//!
//! The crate covers the whole path from raw WFDB records to trained models
//! and the tools used to read their latent spaces:
//!
//! * [`wfdb`] — header, format-212 signal and annotation parsing.
//! * [`dsp`] — Butterworth design, forward filtering and decimation.
//! * [`dataset`] — beat epochs, normalisation, splits and CSV I/O.
//! * [`nncore`] — dense layers, RMSE loss, AdaDelta, gradient checking.
//! * [`vae`] — the linear autoencoder and β-VAE.
//! * [`pipeline`] — seeded training and the model file format.
//! * [`analysis`] — latent statistics, sweeps and corner decoding.
//! * [`cli`] — the `beatspace` command line, CSV and SVG output.
//! * [`fixtures`] — synthetic WFDB records for offline runs.

pub mod analysis;
pub mod cli;
pub mod dataset;
pub mod dsp;
pub mod fixtures;
pub mod nncore;
pub mod pipeline;
pub mod vae;
pub mod wfdb;
