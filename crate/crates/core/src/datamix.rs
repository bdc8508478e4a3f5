//! Dataset model and I/O, train/val/test splitting, synthetic-share mixing,
//! and pseudo-labeling of unlabeled images from external detector
//! predictions.
//!
//! On-disk layout: `<root>/images/*.png|jpg`, `<root>/labels/*.txt`,
//! `<root>/classes.txt`. Label files carry one annotation per line,
//! `class_id cx cy w h`, normalized floats with 6 decimal places,
//! newline-terminated. The writer emits exactly this canonical form, so a
//! load/write round trip is byte-exact.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::augment::{Annotation, Sample, SampleOrigin};
use crate::error::{DetlabError, Result};
use crate::evalmetrics::{nms, Detection};
use crate::geom::{clip_box, RawBox};
use crate::imgproc::Raster;

/// Named collection of samples with a class-name table.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub classes: Vec<String>,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Check the dataset invariants: non-empty class table, unique image
    /// ids, class ids in range.
    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(DetlabError::Dataset(format!(
                "dataset '{}' has an empty class table",
                self.name
            )));
        }
        let mut seen = BTreeSet::new();
        for sample in &self.samples {
            if !seen.insert(&sample.image_id) {
                return Err(DetlabError::Dataset(format!(
                    "duplicate image id '{}'",
                    sample.image_id
                )));
            }
            for ann in &sample.annotations {
                if ann.class_id >= self.classes.len() {
                    return Err(DetlabError::Dataset(format!(
                        "image '{}': class id {} out of range for {} classes",
                        sample.image_id,
                        ann.class_id,
                        self.classes.len()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Train/val/test split fractions and shuffle seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_fraction: 0.70,
            val_fraction: 0.15,
            test_fraction: 0.15,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let fractions = [self.train_fraction, self.val_fraction, self.test_fraction];
        if fractions.iter().any(|f| *f <= 0.0) {
            return Err(DetlabError::Split(
                "split fractions must be positive".to_string(),
            ));
        }
        let sum: f64 = fractions.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(DetlabError::Split(format!(
                "split fractions sum to {sum}, expected 1"
            )));
        }
        Ok(())
    }
}

/// Synthetic-share mixing plan: add `floor(share/100 * base_size)` synthetic
/// samples, drawn without replacement under `seed`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MixPlan {
    pub base_size: usize,
    /// Share as a percentage of the base size (e.g. 10, 20, ..., 200).
    pub share: u32,
    pub synthetic_pool_size: usize,
    pub seed: u64,
}

impl MixPlan {
    pub fn new(base_size: usize, share: u32, synthetic_pool_size: usize, seed: u64) -> Result<Self> {
        let plan = MixPlan {
            base_size,
            share,
            synthetic_pool_size,
            seed,
        };
        if plan.added_count() > synthetic_pool_size {
            return Err(DetlabError::MixPlan(format!(
                "share {share}% of {base_size} needs {} synthetic samples, pool has {synthetic_pool_size}",
                plan.added_count()
            )));
        }
        Ok(plan)
    }

    /// Number of synthetic samples the plan adds: `floor(share/100 * T)`,
    /// computed in integer arithmetic.
    pub fn added_count(&self) -> usize {
        (self.share as u64 * self.base_size as u64 / 100) as usize
    }
}

const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

/// Read `<root>/classes.txt` (one class name per line).
pub fn load_classes(root: &Path) -> Result<Vec<String>> {
    let path = root.join("classes.txt");
    let text = fs::read_to_string(&path).map_err(|e| DetlabError::io(&path, e))?;
    let classes: Vec<String> = text.lines().map(|l| l.trim().to_string()).filter(|l| !l.is_empty()).collect();
    if classes.is_empty() {
        return Err(DetlabError::Dataset(format!(
            "{}: empty class table",
            path.display()
        )));
    }
    Ok(classes)
}

/// Load a dataset directory (`images/` + `labels/` with matching stems).
///
/// Images without a label file get an empty annotation list. Malformed
/// label lines fail with the offending file and line number. Sample order
/// is the lexicographic order of image ids, independent of directory
/// enumeration order.
pub fn load_dataset(root: &Path, classes: &[String]) -> Result<Dataset> {
    let images_dir = root.join("images");
    let labels_dir = root.join("labels");
    let mut image_files: Vec<(String, PathBuf)> = Vec::new();
    if images_dir.is_dir() {
        for entry in fs::read_dir(&images_dir).map_err(|e| DetlabError::io(&images_dir, e))? {
            let entry = entry.map_err(|e| DetlabError::io(&images_dir, e))?;
            let path = entry.path();
            let is_image = path
                .extension()
                .and_then(|e| e.to_str())
                .map(|e| IMAGE_EXTENSIONS.iter().any(|x| e.eq_ignore_ascii_case(x)))
                .unwrap_or(false);
            if !is_image {
                continue;
            }
            let stem = path
                .file_stem()
                .and_then(|s| s.to_str())
                .ok_or_else(|| DetlabError::Dataset(format!("unreadable file name: {}", path.display())))?
                .to_string();
            image_files.push((stem, path));
        }
    }
    image_files.sort();
    for pair in image_files.windows(2) {
        if pair[0].0 == pair[1].0 {
            return Err(DetlabError::Dataset(format!(
                "duplicate image id '{}' ({} and {})",
                pair[0].0,
                pair[0].1.display(),
                pair[1].1.display()
            )));
        }
    }

    let samples: Vec<Sample> = image_files
        .par_iter()
        .map(|(stem, image_path)| {
            let raster = Raster::load(image_path)?;
            let label_path = labels_dir.join(format!("{stem}.txt"));
            let annotations = if label_path.is_file() {
                parse_label_file(&label_path, classes.len())?
            } else {
                Vec::new()
            };
            Ok(Sample {
                image_id: stem.clone(),
                raster,
                annotations,
                origin: SampleOrigin::Real,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let name = root
        .file_name()
        .and_then(|s| s.to_str())
        .unwrap_or("dataset")
        .to_string();
    let dataset = Dataset {
        name,
        classes: classes.to_vec(),
        samples,
    };
    dataset.validate()?;
    Ok(dataset)
}

fn parse_label_file(path: &Path, n_classes: usize) -> Result<Vec<Annotation>> {
    let text = fs::read_to_string(path).map_err(|e| DetlabError::io(path, e))?;
    let mut annotations = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        annotations.push(parse_label_line(line, path, line_no, n_classes)?);
    }
    Ok(annotations)
}

fn parse_label_line(
    line: &str,
    path: &Path,
    line_no: usize,
    n_classes: usize,
) -> Result<Annotation> {
    let err = |message: String| DetlabError::LabelParse {
        path: path.to_path_buf(),
        line: line_no,
        message,
    };
    let tokens: Vec<&str> = line.split_whitespace().collect();
    if tokens.len() != 5 {
        return Err(err(format!("expected 5 fields, found {}", tokens.len())));
    }
    let class_id: usize = tokens[0]
        .parse()
        .map_err(|_| err(format!("invalid class id '{}'", tokens[0])))?;
    if class_id >= n_classes {
        return Err(err(format!(
            "class id {class_id} out of range for {n_classes} classes"
        )));
    }
    let mut coords = [0.0f64; 4];
    for (i, token) in tokens[1..].iter().enumerate() {
        let value: f64 = token
            .parse()
            .map_err(|_| err(format!("invalid coordinate '{token}'")))?;
        if !(0.0..=1.0).contains(&value) {
            return Err(err(format!("coordinate {value} outside [0, 1]")));
        }
        coords[i] = value;
    }
    let [cx, cy, w, h] = coords;
    if w <= 0.0 || h <= 0.0 {
        return Err(err("zero-area box".to_string()));
    }
    // A center inside the unit square with positive extent always retains
    // positive area after clipping, so this cannot come back empty.
    let bbox = clip_box(&RawBox::from_center(cx, cy, w, h), 0.0)
        .ok_or_else(|| err("box has no area inside the unit square".to_string()))?;
    Ok(Annotation { class_id, bbox })
}

/// Canonical label-file rendering of one annotation list.
pub fn format_labels(annotations: &[Annotation]) -> String {
    let mut out = String::new();
    for ann in annotations {
        let b = &ann.bbox;
        out.push_str(&format!(
            "{} {:.6} {:.6} {:.6} {:.6}\n",
            ann.class_id,
            b.cx(),
            b.cy(),
            b.w(),
            b.h()
        ));
    }
    out
}

/// Write a dataset directory: `images/` as PNG, `labels/` in canonical
/// format, plus `classes.txt`. Idempotent: rewriting the same dataset
/// produces byte-identical files.
pub fn write_dataset(dataset: &Dataset, root: &Path) -> Result<()> {
    let images_dir = root.join("images");
    let labels_dir = root.join("labels");
    fs::create_dir_all(&images_dir).map_err(|e| DetlabError::io(&images_dir, e))?;
    fs::create_dir_all(&labels_dir).map_err(|e| DetlabError::io(&labels_dir, e))?;

    let mut classes_txt = String::new();
    for class in &dataset.classes {
        classes_txt.push_str(class);
        classes_txt.push('\n');
    }
    let classes_path = root.join("classes.txt");
    fs::write(&classes_path, classes_txt).map_err(|e| DetlabError::io(&classes_path, e))?;

    dataset.samples.par_iter().try_for_each(|sample| {
        let image_path = images_dir.join(format!("{}.png", sample.image_id));
        sample.raster.save_png(&image_path)?;
        let label_path = labels_dir.join(format!("{}.txt", sample.image_id));
        fs::write(&label_path, format_labels(&sample.annotations))
            .map_err(|e| DetlabError::io(&label_path, e))
    })
}

// floor(frac * n) under the real-arithmetic rule: products that are
// integers up to f64 representation noise floor to that integer.
fn floor_frac(frac: f64, n: usize) -> usize {
    let x = frac * n as f64;
    let r = x.round();
    if (x - r).abs() < 1e-6 {
        r as usize
    } else {
        x.floor() as usize
    }
}

/// Split into train/val/test by a seeded shuffle:
/// `|train| = floor(train_fraction * N)`, `|val| = floor(val_fraction * N)`,
/// and the remainder goes to test.
pub fn split(dataset: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset, Dataset)> {
    spec.validate()?;
    let n = dataset.samples.len();
    if n < 3 {
        return Err(DetlabError::Split(format!(
            "cannot split {n} samples into three non-empty sets"
        )));
    }
    let n_train = floor_frac(spec.train_fraction, n);
    let n_val = floor_frac(spec.val_fraction, n);
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    indices.shuffle(&mut rng);

    let pick = |range: &[usize], suffix: &str| Dataset {
        name: format!("{}_{}", dataset.name, suffix),
        classes: dataset.classes.clone(),
        samples: range.iter().map(|&i| dataset.samples[i].clone()).collect(),
    };
    let train = pick(&indices[..n_train], "train");
    let val = pick(&indices[n_train..n_train + n_val], "val");
    let test = pick(&indices[n_train + n_val..], "test");
    Ok((train, val, test))
}

/// Append `floor(share/100 * T)` synthetic samples to the training set,
/// drawn uniformly without replacement from the pool under the plan seed.
///
/// The draw is a fixed seeded permutation of the pool, so for shares
/// `s1 < s2` under the same seed the smaller dataset is a prefix-subset of
/// the larger (sequential accumulation).
pub fn mix_synthetic(train: &Dataset, pool: &Dataset, plan: &MixPlan) -> Result<Dataset> {
    if plan.base_size != train.samples.len() {
        return Err(DetlabError::MixPlan(format!(
            "plan base_size {} does not match training set size {}",
            plan.base_size,
            train.samples.len()
        )));
    }
    if plan.synthetic_pool_size != pool.samples.len() {
        return Err(DetlabError::MixPlan(format!(
            "plan pool size {} does not match pool size {}",
            plan.synthetic_pool_size,
            pool.samples.len()
        )));
    }
    if train.classes != pool.classes {
        return Err(DetlabError::Dataset(
            "training set and synthetic pool have different class tables".to_string(),
        ));
    }
    let m = plan.added_count();
    if m > pool.samples.len() {
        return Err(DetlabError::MixPlan(format!(
            "need {m} synthetic samples, pool has {}",
            pool.samples.len()
        )));
    }
    let mut order: Vec<usize> = (0..pool.samples.len()).collect();
    let mut rng = ChaCha12Rng::seed_from_u64(plan.seed);
    order.shuffle(&mut rng);

    let mut samples = train.samples.clone();
    samples.extend(order[..m].iter().map(|&i| pool.samples[i].clone()));
    Ok(Dataset {
        name: format!("{}_synth{}", train.name, plan.share),
        classes: train.classes.clone(),
        samples,
    })
}

/// Turn external detector predictions into ground-truth-style annotations:
/// per image, per class NMS at `nms_iou`, then keep detections with
/// confidence at or above `conf_threshold`, discarding the confidence.
/// Output samples have origin [`SampleOrigin::Synthetic`].
pub fn pseudo_label(
    images: &Dataset,
    predictions: &[Detection],
    conf_threshold: f64,
    nms_iou: f64,
) -> Result<Dataset> {
    for det in predictions {
        if !images.samples.iter().any(|s| s.image_id == det.image_id) {
            return Err(DetlabError::UnknownImageId(det.image_id.clone()));
        }
        if det.class_id >= images.classes.len() {
            return Err(DetlabError::Dataset(format!(
                "prediction for image '{}': class id {} out of range for {} classes",
                det.image_id,
                det.class_id,
                images.classes.len()
            )));
        }
    }
    let samples = images
        .samples
        .iter()
        .map(|sample| {
            let dets: Vec<Detection> = predictions
                .iter()
                .filter(|d| d.image_id == sample.image_id)
                .cloned()
                .collect();
            let kept = nms(&dets, nms_iou);
            let annotations: Vec<Annotation> = kept
                .into_iter()
                .filter(|d| d.confidence >= conf_threshold)
                .map(|d| Annotation {
                    class_id: d.class_id,
                    bbox: d.bbox,
                })
                .collect();
            Sample {
                image_id: sample.image_id.clone(),
                raster: sample.raster.clone(),
                annotations,
                origin: SampleOrigin::Synthetic,
            }
        })
        .collect();
    Ok(Dataset {
        name: format!("{}_pseudolabeled", images.name),
        classes: images.classes.clone(),
        samples,
    })
}

/// Summary counts over a dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetStats {
    /// Annotation count per class id.
    pub per_class: Vec<usize>,
    /// Sample counts by origin: (real, synthetic, augmented).
    pub per_origin: (usize, usize, usize),
    /// Histogram of box linear size `sqrt(w * h)` in 10 uniform bins over
    /// `[0, 1]`.
    pub box_size_histogram: [usize; 10],
    pub total_annotations: usize,
}

/// Pure summary of per-class counts, per-origin counts, and the box-size
/// histogram. Invariant under sample reordering.
pub fn dataset_stats(dataset: &Dataset) -> DatasetStats {
    let mut per_class = vec![0usize; dataset.classes.len()];
    let mut per_origin = (0usize, 0usize, 0usize);
    let mut histogram = [0usize; 10];
    let mut total = 0usize;
    for sample in &dataset.samples {
        match sample.origin {
            SampleOrigin::Real => per_origin.0 += 1,
            SampleOrigin::Synthetic => per_origin.1 += 1,
            SampleOrigin::Augmented => per_origin.2 += 1,
        }
        for ann in &sample.annotations {
            if ann.class_id < per_class.len() {
                per_class[ann.class_id] += 1;
            }
            let size = ann.bbox.area().sqrt();
            let bin = ((size * 10.0) as usize).min(9);
            histogram[bin] += 1;
            total += 1;
        }
    }
    DatasetStats {
        per_class,
        per_origin,
        box_size_histogram: histogram,
        total_annotations: total,
    }
}
