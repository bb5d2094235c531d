//! # msrlab
//!
//! A workbench for time-harmonic acoustic scattering from 2D sound-soft
//! obstacles and for data-driven completion of limited-aperture measurements.
//!
//! The pipeline has three stages:
//!
//! 1. **Forward simulation** ([`forward`], [`geometry`]): far-field patterns of
//!    random star-shaped scatterers are computed with a combined-field boundary
//!    integral equation discretized by a spectrally accurate Nyström method.
//!    Multi-static response (MSR) matrices over a uniform direction grid are
//!    assembled in [`msr`].
//! 2. **Retrieval** ([`nn`], [`retrieval`]): a small convolutional network is
//!    trained from scratch to complete a full MSR matrix from one
//!    limited-aperture block (optionally phaseless and/or subsampled).
//! 3. **Imaging** ([`imaging`]): a direct sampling indicator maps (true,
//!    limited, or retrieved) far-field data to an image of the scatterer.
//!
//! Every stochastic step is driven by explicit seeds, so datasets, training
//! runs, and images are reproducible bit-for-bit.
//!
//! The `examples/` directory exercises each capability end to end; the
//! `msrlab` binary exposes the same operations as subcommands
//! (`gen-dataset`, `train`, `eval`, `image`, `oracle`).

mod bytesio;

pub mod cli;
pub mod config;
pub mod forward;
pub mod geometry;
pub mod imaging;
pub mod msr;
pub mod nn;
pub mod retrieval;
pub mod rng;
pub mod special;
