//! Offline dataset tooling for axis-aligned object detection: label-aware
//! augmentation, synthetic-share dataset mixing, pseudo-labeling from external
//! detector predictions, COCO-style mAP evaluation, and a config-driven
//! experiment harness.
//!
//! The crate is organized around six modules:
//!
//! * [`geom`] — exact bounding-box arithmetic (IoU, coordinate conversions,
//!   flips/rotations, clipping).
//! * [`imgproc`] — minimal raster operations (HSV jitter, flips, rotations,
//!   blending, patch pasting) on 8-bit RGB images.
//! * [`augment`] — label-aware augmentation policies (copy-paste, mixup, HSV,
//!   flip & rotation) with per-(image, epoch) deterministic RNG streams.
//! * [`datamix`] — dataset model and I/O, train/val/test splitting,
//!   synthetic-share mixing, pseudo-labeling.
//! * [`evalmetrics`] — NMS, greedy matching, precision/recall/F1, PR curves,
//!   101-point interpolated AP, mAP50 and mAP50-95.
//! * [`harness`] — experiment planning, trainer-config emission, prediction
//!   ingestion, evaluation, and report tables.
//!
//! All randomized operations are driven by explicit seeds and keyed RNG
//! streams, so results are byte-identical across runs and worker counts.

pub mod augment;
pub mod datamix;
pub mod error;
pub mod evalmetrics;
pub mod geom;
pub mod harness;
pub mod imgproc;
pub mod toy;

pub use augment::{Annotation, AugmentationPolicy, RngStream, Sample, SampleOrigin};
pub use datamix::{Dataset, MixPlan, SplitSpec};
pub use error::{DetlabError, Result};
pub use evalmetrics::{Detection, EvalConfig, EvalReport, GroundTruth, PrCurve};
pub use geom::{BBox, CanvasSize, GeomTransform};
pub use harness::{Condition, ExperimentConfig, InitMode, RunRecord, TrainerParams};
pub use imgproc::{HsvGains, Raster};
