//! Synthetic oyster-reef data generation and detection evaluation.
//!
//! The pipeline runs in stages:
//!
//! 1. [`oystermesh`] builds shell meshes from a two-half B-spline outline
//!    ([`splinecore`]) stacked into layers.
//! 2. [`scenegen`] scatters shells over a ground patch and samples a tilted
//!    downward-looking camera.
//! 3. [`rasterizer`] renders the paired depth map and instance mask.
//! 4. [`synthclient`] sends the pair to an image-synthesis backend.
//! 5. [`datasetkit`] derives YOLO labels from the mask, mixes real and
//!    synthetic data into a train/test split and writes the trainer config.
//! 6. [`evalbench`] scores detections (AP, mAP@50, mAP@50-95) and times
//!    detectors.

// `!(x > bound)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod datasetkit;
pub mod evalbench;
pub mod fsutil;
pub mod kvtext;
pub mod oystermesh;
pub mod rasterizer;
pub mod rng;
pub mod scenegen;
pub mod splinecore;
pub mod synthclient;
