//! Label-aware augmentation policies: copy-paste, mixup, HSV jitter, and
//! flip & rotation, composed online per epoch with independent firing
//! probabilities, plus offline dataset materialization.
//!
//! Reproducibility contract: every randomized operation draws from an
//! [`RngStream`] keyed by `(global_seed, image_id, epoch)`. Identical keys
//! yield identical streams, so augmentation of distinct samples can run on
//! any number of workers without changing a single output byte.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::Distribution;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::datamix::Dataset;
use crate::error::Result;
use crate::geom::{
    pixel_rect, to_normalized, BBox, GeomTransform, PixelBox, PixelRect, DEFAULT_MIN_VISIBLE_AREA,
};
use crate::imgproc::{self, HsvGains, Raster};

/// One ground-truth instance: a class index plus its box.
#[derive(Debug, Clone, PartialEq)]
pub struct Annotation {
    pub class_id: usize,
    pub bbox: BBox,
}

/// Provenance of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleOrigin {
    Real,
    Synthetic,
    Augmented,
}

impl SampleOrigin {
    pub fn as_str(&self) -> &'static str {
        match self {
            SampleOrigin::Real => "real",
            SampleOrigin::Synthetic => "synthetic",
            SampleOrigin::Augmented => "augmented",
        }
    }
}

/// One image raster plus its ground-truth annotations.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub image_id: String,
    pub raster: Raster,
    pub annotations: Vec<Annotation>,
    pub origin: SampleOrigin,
}

/// Augmentation policy: per-technique firing probabilities and parameters.
///
/// The defaults assign every technique probability 0.5; the rotation set is
/// restricted to 90-degree multiples so label transforms stay exact, with
/// arbitrary angles opt-in.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentationPolicy {
    pub p_copy_paste: f64,
    pub p_mixup: f64,
    pub p_hsv: f64,
    pub p_flip_rot: f64,
    pub hsv_gains: HsvGains,
    pub mixup_alpha: f64,
    pub rotation_set: Vec<GeomTransform>,
    pub copy_paste_max_instances: usize,
}

impl Default for AugmentationPolicy {
    fn default() -> Self {
        AugmentationPolicy {
            p_copy_paste: 0.5,
            p_mixup: 0.5,
            p_hsv: 0.5,
            p_flip_rot: 0.5,
            hsv_gains: HsvGains::default(),
            mixup_alpha: 32.0,
            rotation_set: vec![
                GeomTransform::Rotate90Cw,
                GeomTransform::Rotate180,
                GeomTransform::Rotate270Cw,
            ],
            copy_paste_max_instances: 3,
        }
    }
}

impl AugmentationPolicy {
    /// A policy with all probabilities zero (identity under
    /// [`augment_online`]).
    pub fn disabled() -> Self {
        AugmentationPolicy {
            p_copy_paste: 0.0,
            p_mixup: 0.0,
            p_hsv: 0.0,
            p_flip_rot: 0.0,
            ..AugmentationPolicy::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("p_copy_paste", self.p_copy_paste),
            ("p_mixup", self.p_mixup),
            ("p_hsv", self.p_hsv),
            ("p_flip_rot", self.p_flip_rot),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(crate::error::DetlabError::Config(format!(
                    "{name} = {p} outside [0, 1]"
                )));
            }
        }
        if self.mixup_alpha <= 0.0 {
            return Err(crate::error::DetlabError::Config(
                "mixup_alpha must be positive".to_string(),
            ));
        }
        if self.copy_paste_max_instances == 0 {
            return Err(crate::error::DetlabError::Config(
                "copy_paste_max_instances must be >= 1".to_string(),
            ));
        }
        if self.p_flip_rot > 0.0 && self.rotation_set.is_empty() {
            return Err(crate::error::DetlabError::Config(
                "rotation_set must be non-empty when p_flip_rot > 0".to_string(),
            ));
        }
        for t in &self.rotation_set {
            t.validate()?;
        }
        Ok(())
    }
}

/// Deterministic RNG stream keyed by `(global_seed, image_id, epoch)`.
///
/// Identical keys yield identical sequences; distinct keys yield independent
/// streams (the key is hashed into the ChaCha seed).
pub struct RngStream {
    inner: ChaCha12Rng,
}

impl RngStream {
    pub fn new(global_seed: u64, image_id: &str, epoch: u64) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(global_seed.to_le_bytes());
        hasher.update([0u8]);
        hasher.update(image_id.as_bytes());
        hasher.update([0u8]);
        hasher.update(epoch.to_le_bytes());
        let digest = hasher.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        RngStream {
            inner: ChaCha12Rng::from_seed(seed),
        }
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> std::result::Result<(), rand::Error> {
        self.inner.try_fill_bytes(dest)
    }
}

/// Source of random mixup/copy-paste partners.
pub trait PartnerSource: Sync {
    /// Draw one partner uniformly; `None` when the source is empty.
    fn draw_partner(&self, rng: &mut dyn RngCore) -> Option<&Sample>;
}

impl PartnerSource for [Sample] {
    fn draw_partner(&self, mut rng: &mut dyn RngCore) -> Option<&Sample> {
        if self.is_empty() {
            None
        } else {
            let idx = (&mut rng).gen_range(0..self.len());
            Some(&self[idx])
        }
    }
}

impl PartnerSource for Vec<Sample> {
    fn draw_partner(&self, rng: &mut dyn RngCore) -> Option<&Sample> {
        self.as_slice().draw_partner(rng)
    }
}

impl PartnerSource for Dataset {
    fn draw_partner(&self, rng: &mut dyn RngCore) -> Option<&Sample> {
        self.samples.draw_partner(rng)
    }
}

/// Which augmentations fired during one [`augment_online`] application.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AppliedAugmentations {
    pub copy_paste: bool,
    pub mixup: bool,
    pub hsv: bool,
    pub flip_rotate: bool,
}

/// Apply a geometric transform to a whole sample: raster plus every
/// annotation. Boxes clipped away by the transform are dropped.
pub fn apply_transform_to_sample(sample: &Sample, t: GeomTransform) -> Sample {
    let canvas = sample.raster.canvas();
    let raster = imgproc::rotate_raster(&sample.raster, t);
    let annotations = sample
        .annotations
        .iter()
        .filter_map(|ann| {
            crate::geom::transform_box(&ann.bbox, t, canvas).map(|bbox| Annotation {
                class_id: ann.class_id,
                bbox,
            })
        })
        .collect();
    Sample {
        image_id: sample.image_id.clone(),
        raster,
        annotations,
        origin: sample.origin,
    }
}

/// With probability `p_hsv`, jitter the sample's colors; annotations are
/// untouched in all cases.
pub fn apply_hsv(sample: &Sample, policy: &AugmentationPolicy, rng: &mut RngStream) -> Sample {
    apply_hsv_traced(sample, policy, rng).0
}

pub fn apply_hsv_traced(
    sample: &Sample,
    policy: &AugmentationPolicy,
    rng: &mut RngStream,
) -> (Sample, bool) {
    if rng.gen_range(0.0..1.0) >= policy.p_hsv {
        return (sample.clone(), false);
    }
    let raster = imgproc::hsv_jitter(&sample.raster, &policy.hsv_gains, rng);
    (
        Sample {
            image_id: sample.image_id.clone(),
            raster,
            annotations: sample.annotations.clone(),
            origin: sample.origin,
        },
        true,
    )
}

/// With probability `p_flip_rot`, pick one transform uniformly from
/// `{h-flip, v-flip} ∪ rotation_set` and apply it to the raster and every
/// annotation.
pub fn apply_flip_rotate(
    sample: &Sample,
    policy: &AugmentationPolicy,
    rng: &mut RngStream,
) -> Sample {
    apply_flip_rotate_traced(sample, policy, rng).0
}

pub fn apply_flip_rotate_traced(
    sample: &Sample,
    policy: &AugmentationPolicy,
    rng: &mut RngStream,
) -> (Sample, bool) {
    if rng.gen_range(0.0..1.0) >= policy.p_flip_rot {
        return (sample.clone(), false);
    }
    let mut choices = vec![GeomTransform::HorizontalFlip, GeomTransform::VerticalFlip];
    choices.extend(policy.rotation_set.iter().copied());
    let t = choices[rng.gen_range(0..choices.len())];
    (apply_transform_to_sample(sample, t), true)
}

/// Blend `target` with `partner` using `lambda ~ Beta(alpha, alpha)` and
/// union the two annotation lists. A partner of mismatched size is
/// bilinearly resized to the target's dimensions first.
pub fn apply_mixup(
    target: &Sample,
    partner: &Sample,
    policy: &AugmentationPolicy,
    rng: &mut RngStream,
) -> Result<Sample> {
    let beta = rand_distr::Beta::new(policy.mixup_alpha, policy.mixup_alpha)
        .expect("validated: mixup_alpha > 0");
    let lambda = beta.sample(rng);
    apply_mixup_with_lambda(target, partner, lambda)
}

/// Mixup with an explicitly chosen blend weight (test hook and the body of
/// [`apply_mixup`]).
pub fn apply_mixup_with_lambda(target: &Sample, partner: &Sample, lambda: f64) -> Result<Sample> {
    let partner_raster = if partner.raster.width() == target.raster.width()
        && partner.raster.height() == target.raster.height()
    {
        partner.raster.clone()
    } else {
        imgproc::resize_bilinear(
            &partner.raster,
            target.raster.width(),
            target.raster.height(),
        )?
    };
    let raster = imgproc::blend(&target.raster, &partner_raster, lambda)?;
    let mut annotations = target.annotations.clone();
    annotations.extend(partner.annotations.iter().cloned());
    Ok(Sample {
        image_id: target.image_id.clone(),
        raster,
        annotations,
        origin: target.origin,
    })
}

/// Outcome of one copy-paste application.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CopyPasteOutcome {
    /// Instances pasted into the target.
    pub pasted: usize,
    /// Pre-existing target annotations removed because pasted patches
    /// occluded them below the visibility threshold.
    pub occluded_removed: usize,
}

/// Copy `k = min(uniform{1..=max_instances}, |donor annotations|)` random
/// donor instances (box-level pixel patches) into the target at uniformly
/// random in-bounds locations, appending a translated annotation for each.
/// Existing target annotations whose visible area falls below the
/// visibility threshold are removed. A donor without annotations leaves the
/// target unchanged.
pub fn apply_copy_paste(
    target: &Sample,
    donor: &Sample,
    policy: &AugmentationPolicy,
    rng: &mut RngStream,
) -> Result<Sample> {
    apply_copy_paste_traced(target, donor, policy, rng).map(|(s, _)| s)
}

pub fn apply_copy_paste_traced(
    target: &Sample,
    donor: &Sample,
    policy: &AugmentationPolicy,
    rng: &mut RngStream,
) -> Result<(Sample, CopyPasteOutcome)> {
    if donor.annotations.is_empty() {
        return Ok((target.clone(), CopyPasteOutcome::default()));
    }
    let k = rng
        .gen_range(1..=policy.copy_paste_max_instances)
        .min(donor.annotations.len());
    let chosen = rand::seq::index::sample(rng, donor.annotations.len(), k);

    let donor_canvas = donor.raster.canvas();
    let (tw, th) = (target.raster.width() as i64, target.raster.height() as i64);
    let mut raster = target.raster.clone();
    let mut pasted_rects: Vec<PixelRect> = Vec::new();
    let mut pasted_annotations: Vec<Annotation> = Vec::new();

    for donor_idx in chosen.iter() {
        let donor_ann = &donor.annotations[donor_idx];
        let src_rect = pixel_rect(&donor_ann.bbox, donor_canvas);
        if src_rect.is_empty() {
            continue;
        }
        let (pw, ph) = (src_rect.width(), src_rect.height());
        let ox = if pw < tw { rng.gen_range(0..=(tw - pw)) } else { 0 };
        let oy = if ph < th { rng.gen_range(0..=(th - ph)) } else { 0 };
        raster = imgproc::paste_patch(&raster, &donor.raster, src_rect, (ox, oy))?;

        let dst_rect = PixelRect {
            x0: ox.max(0),
            y0: oy.max(0),
            x1: (ox + pw).min(tw),
            y1: (oy + ph).min(th),
        };
        if dst_rect.is_empty() {
            continue;
        }
        let bbox = to_normalized(
            &PixelBox {
                x_min: dst_rect.x0 as f64,
                y_min: dst_rect.y0 as f64,
                x_max: dst_rect.x1 as f64,
                y_max: dst_rect.y1 as f64,
            },
            target.raster.canvas(),
        )?;
        pasted_rects.push(dst_rect);
        pasted_annotations.push(Annotation {
            class_id: donor_ann.class_id,
            bbox,
        });
    }

    let target_canvas = target.raster.canvas();
    let mut annotations = Vec::with_capacity(target.annotations.len() + pasted_annotations.len());
    let mut removed = 0usize;
    for ann in &target.annotations {
        let rect = pixel_rect(&ann.bbox, target_canvas);
        if visible_fraction(rect, &pasted_rects) < DEFAULT_MIN_VISIBLE_AREA {
            removed += 1;
        } else {
            annotations.push(ann.clone());
        }
    }
    let pasted = pasted_annotations.len();
    annotations.extend(pasted_annotations);

    Ok((
        Sample {
            image_id: target.image_id.clone(),
            raster,
            annotations,
            origin: target.origin,
        },
        CopyPasteOutcome {
            pasted,
            occluded_removed: removed,
        },
    ))
}

// Fraction of `rect` not covered by any of `covers`, computed exactly by
// coordinate compression over the overlap rectangles.
fn visible_fraction(rect: PixelRect, covers: &[PixelRect]) -> f64 {
    let total = rect.width() * rect.height();
    if total == 0 {
        return 1.0;
    }
    let clipped: Vec<PixelRect> = covers
        .iter()
        .map(|c| PixelRect {
            x0: c.x0.max(rect.x0),
            y0: c.y0.max(rect.y0),
            x1: c.x1.min(rect.x1),
            y1: c.y1.min(rect.y1),
        })
        .filter(|c| !c.is_empty())
        .collect();
    if clipped.is_empty() {
        return 1.0;
    }
    let mut xs: Vec<i64> = clipped.iter().flat_map(|c| [c.x0, c.x1]).collect();
    let mut ys: Vec<i64> = clipped.iter().flat_map(|c| [c.y0, c.y1]).collect();
    xs.sort_unstable();
    xs.dedup();
    ys.sort_unstable();
    ys.dedup();
    let mut covered = 0i64;
    for xi in 0..xs.len() - 1 {
        for yi in 0..ys.len() - 1 {
            let (x0, x1) = (xs[xi], xs[xi + 1]);
            let (y0, y1) = (ys[yi], ys[yi + 1]);
            if clipped
                .iter()
                .any(|c| c.x0 <= x0 && x1 <= c.x1 && c.y0 <= y0 && y1 <= c.y1)
            {
                covered += (x1 - x0) * (y1 - y0);
            }
        }
    }
    (total - covered) as f64 / total as f64
}

/// Apply the full online pipeline in fixed order
/// copy-paste -> mixup -> HSV -> flip/rotate, each stage independently with
/// its policy probability. Deterministic given the stream key.
pub fn augment_online(
    sample: &Sample,
    partners: &dyn PartnerSource,
    policy: &AugmentationPolicy,
    rng: &mut RngStream,
) -> Result<Sample> {
    augment_online_traced(sample, partners, policy, rng).map(|(s, _)| s)
}

pub fn augment_online_traced(
    sample: &Sample,
    partners: &dyn PartnerSource,
    policy: &AugmentationPolicy,
    rng: &mut RngStream,
) -> Result<(Sample, AppliedAugmentations)> {
    let mut out = sample.clone();
    let mut applied = AppliedAugmentations::default();

    if rng.gen_range(0.0..1.0) < policy.p_copy_paste {
        applied.copy_paste = true;
        if let Some(donor) = partners.draw_partner(rng) {
            let donor = donor.clone();
            out = apply_copy_paste(&out, &donor, policy, rng)?;
        }
    }
    if rng.gen_range(0.0..1.0) < policy.p_mixup {
        applied.mixup = true;
        if let Some(partner) = partners.draw_partner(rng) {
            let partner = partner.clone();
            out = apply_mixup(&out, &partner, policy, rng)?;
        }
    }
    let (next, fired) = apply_hsv_traced(&out, policy, rng);
    out = next;
    applied.hsv = fired;
    let (next, fired) = apply_flip_rotate_traced(&out, policy, rng);
    out = next;
    applied.flip_rotate = fired;

    Ok((out, applied))
}

/// Materialize an offline-augmented dataset: the original samples plus
/// `variants_per_image` augmented variants per image (origin
/// [`SampleOrigin::Augmented`], image id suffixed with the variant index).
/// Output size is `(variants_per_image + 1) * |dataset|`.
pub fn materialize_offline(
    dataset: &Dataset,
    policy: &AugmentationPolicy,
    variants_per_image: usize,
    seed: u64,
) -> Result<Dataset> {
    policy.validate()?;
    let jobs: Vec<(usize, usize)> = (0..dataset.samples.len())
        .flat_map(|i| (1..=variants_per_image).map(move |v| (i, v)))
        .collect();
    let variants: Vec<Sample> = jobs
        .into_par_iter()
        .map(|(i, v)| {
            let sample = &dataset.samples[i];
            let mut rng = RngStream::new(seed, &sample.image_id, v as u64);
            let mut out = augment_online(sample, dataset, policy, &mut rng)?;
            out.image_id = format!("{}_aug{}", sample.image_id, v);
            out.origin = SampleOrigin::Augmented;
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut samples = dataset.samples.clone();
    samples.extend(variants);
    Ok(Dataset {
        name: dataset.name.clone(),
        classes: dataset.classes.clone(),
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::CanvasSize;

    fn gradient_sample(id: &str, w: u32, h: u32, anns: Vec<Annotation>) -> Sample {
        let raster = Raster::from_fn(w, h, |x, y| {
            [(x % 256) as u8, (y % 256) as u8, ((x * 7 + y * 3) % 256) as u8]
        })
        .unwrap();
        Sample {
            image_id: id.to_string(),
            raster,
            annotations: anns,
            origin: SampleOrigin::Real,
        }
    }

    fn ann(class_id: usize, cx: f64, cy: f64, w: f64, h: f64) -> Annotation {
        Annotation {
            class_id,
            bbox: BBox::new(cx, cy, w, h).unwrap(),
        }
    }

    #[test]
    fn rng_stream_reproducible_and_keyed() {
        let a: Vec<u64> = {
            let mut r = RngStream::new(7, "img_001", 3);
            (0..8).map(|_| r.next_u64()).collect()
        };
        let b: Vec<u64> = {
            let mut r = RngStream::new(7, "img_001", 3);
            (0..8).map(|_| r.next_u64()).collect()
        };
        assert_eq!(a, b);

        let mut other_epoch = RngStream::new(7, "img_001", 4);
        let mut other_image = RngStream::new(7, "img_002", 3);
        let mut other_seed = RngStream::new(8, "img_001", 3);
        assert_ne!(a[0], other_epoch.next_u64());
        assert_ne!(a[0], other_image.next_u64());
        assert_ne!(a[0], other_seed.next_u64());
    }

    #[test]
    fn apply_hsv_probability_zero_is_identity() {
        let sample = gradient_sample("s", 16, 16, vec![ann(0, 0.5, 0.5, 0.25, 0.25)]);
        let policy = AugmentationPolicy {
            p_hsv: 0.0,
            ..AugmentationPolicy::default()
        };
        let mut rng = RngStream::new(1, "s", 0);
        let out = apply_hsv(&sample, &policy, &mut rng);
        assert_eq!(out, sample);
    }

    #[test]
    fn apply_hsv_zero_gains_keeps_pixels_and_labels() {
        let sample = gradient_sample("s", 16, 16, vec![ann(0, 0.5, 0.5, 0.25, 0.25)]);
        let policy = AugmentationPolicy {
            p_hsv: 1.0,
            hsv_gains: HsvGains::zero(),
            ..AugmentationPolicy::default()
        };
        let mut rng = RngStream::new(1, "s", 0);
        let out = apply_hsv(&sample, &policy, &mut rng);
        assert_eq!(out.raster, sample.raster);
        assert_eq!(out.annotations, sample.annotations);
    }

    #[test]
    fn apply_hsv_deterministic() {
        let sample = gradient_sample("s", 24, 18, vec![]);
        let policy = AugmentationPolicy {
            p_hsv: 1.0,
            ..AugmentationPolicy::default()
        };
        let a = apply_hsv(&sample, &policy, &mut RngStream::new(5, "s", 2));
        let b = apply_hsv(&sample, &policy, &mut RngStream::new(5, "s", 2));
        assert_eq!(a, b);
    }

    #[test]
    fn forced_hflip_mirrors_box_and_pixels() {
        let sample = gradient_sample("s", 64, 64, vec![ann(1, 0.2, 0.5, 0.125, 0.25)]);
        let out = apply_transform_to_sample(&sample, GeomTransform::HorizontalFlip);
        assert_eq!(out.annotations.len(), 1);
        let moved = &out.annotations[0];
        assert_eq!(moved.class_id, 1);
        assert!((moved.bbox.cx() - 0.8).abs() < 1e-12);

        // Pixel content inside the transformed box equals the mirrored
        // pixel content of the original box, bit-exactly.
        let canvas = CanvasSize::new(64, 64).unwrap();
        let orig_rect = pixel_rect(&sample.annotations[0].bbox, canvas);
        let new_rect = pixel_rect(&moved.bbox, canvas);
        assert_eq!(orig_rect.width(), new_rect.width());
        for dy in 0..orig_rect.height() {
            for dx in 0..orig_rect.width() {
                let src = sample
                    .raster
                    .pixel((orig_rect.x0 + dx) as u32, (orig_rect.y0 + dy) as u32);
                let dst = out.raster.pixel(
                    (new_rect.x1 - 1 - dx) as u32,
                    (new_rect.y0 + dy) as u32,
                );
                assert_eq!(src, dst);
            }
        }
    }

    #[test]
    fn exact_transforms_preserve_annotation_count() {
        let anns = vec![
            ann(0, 0.2, 0.3, 0.15, 0.1),
            ann(1, 0.7, 0.6, 0.2, 0.25),
            ann(2, 0.5, 0.85, 0.3, 0.1),
        ];
        let sample = gradient_sample("s", 48, 36, anns);
        for t in [
            GeomTransform::HorizontalFlip,
            GeomTransform::VerticalFlip,
            GeomTransform::Rotate90Cw,
            GeomTransform::Rotate180,
            GeomTransform::Rotate270Cw,
        ] {
            let out = apply_transform_to_sample(&sample, t);
            assert_eq!(out.annotations.len(), sample.annotations.len(), "{t:?}");
        }
    }

    #[test]
    fn flip_rotate_p_zero_identity() {
        let sample = gradient_sample("s", 16, 16, vec![ann(0, 0.25, 0.25, 0.125, 0.125)]);
        let policy = AugmentationPolicy {
            p_flip_rot: 0.0,
            ..AugmentationPolicy::default()
        };
        let out = apply_flip_rotate(&sample, &policy, &mut RngStream::new(0, "s", 0));
        assert_eq!(out, sample);
    }

    #[test]
    fn forced_rot90_annotation_matches_geom_oracle() {
        let sample = gradient_sample("s", 200, 100, vec![ann(0, 0.25, 0.5, 0.2, 0.1)]);
        let out = apply_transform_to_sample(&sample, GeomTransform::Rotate90Cw);
        assert_eq!(out.raster.width(), 100);
        assert_eq!(out.raster.height(), 200);
        let expect = crate::geom::transform_box(
            &sample.annotations[0].bbox,
            GeomTransform::Rotate90Cw,
            CanvasSize::new(200, 100).unwrap(),
        )
        .unwrap();
        assert_eq!(out.annotations[0].bbox, expect);
    }

    #[test]
    fn mixup_lambda_one_keeps_target_pixels_and_unions_labels() {
        let target = gradient_sample("t", 20, 20, vec![ann(0, 0.25, 0.25, 0.25, 0.25)]);
        let partner = gradient_sample("p", 20, 20, vec![ann(1, 0.75, 0.75, 0.25, 0.25)]);
        let out = apply_mixup_with_lambda(&target, &partner, 1.0).unwrap();
        assert_eq!(out.raster, target.raster);
        assert_eq!(out.annotations.len(), 2);
        assert_eq!(out.annotations[0], target.annotations[0]);
        assert_eq!(out.annotations[1], partner.annotations[0]);
    }

    #[test]
    fn mixup_empty_partner_annotations() {
        let target = gradient_sample("t", 12, 12, vec![ann(0, 0.5, 0.5, 0.25, 0.25)]);
        let partner = gradient_sample("p", 12, 12, vec![]);
        let policy = AugmentationPolicy::default();
        let out = apply_mixup(&target, &partner, &policy, &mut RngStream::new(1, "t", 0)).unwrap();
        assert_eq!(out.annotations, target.annotations);
    }

    #[test]
    fn mixup_annotation_counts_add_up() {
        let policy = AugmentationPolicy::default();
        let mut rng = RngStream::new(3, "counts", 0);
        for trial in 0..100 {
            let n_t = trial % 4;
            let n_p = (trial / 4) % 4;
            let make = |n: usize| {
                (0..n)
                    .map(|i| ann(i, 0.2 + 0.15 * i as f64, 0.5, 0.1, 0.1))
                    .collect::<Vec<_>>()
            };
            let target = gradient_sample("t", 10, 10, make(n_t));
            let partner = gradient_sample("p", 10, 10, make(n_p));
            let out = apply_mixup(&target, &partner, &policy, &mut rng).unwrap();
            assert_eq!(out.annotations.len(), n_t + n_p);
        }
    }

    #[test]
    fn mixup_resizes_mismatched_partner() {
        let target = gradient_sample("t", 16, 12, vec![]);
        let partner = gradient_sample("p", 32, 8, vec![ann(0, 0.5, 0.5, 0.5, 0.5)]);
        let policy = AugmentationPolicy::default();
        let out = apply_mixup(&target, &partner, &policy, &mut RngStream::new(2, "t", 0)).unwrap();
        assert_eq!(out.raster.width(), 16);
        assert_eq!(out.raster.height(), 12);
        assert_eq!(out.annotations.len(), 1);
    }

    #[test]
    fn copy_paste_empty_donor_is_identity() {
        let target = gradient_sample("t", 16, 16, vec![ann(0, 0.5, 0.5, 0.25, 0.25)]);
        let donor = gradient_sample("d", 16, 16, vec![]);
        let policy = AugmentationPolicy::default();
        let (out, outcome) =
            apply_copy_paste_traced(&target, &donor, &policy, &mut RngStream::new(0, "t", 0))
                .unwrap();
        assert_eq!(out, target);
        assert_eq!(outcome, CopyPasteOutcome::default());
    }

    #[test]
    fn copy_paste_adds_translated_annotation() {
        let target = gradient_sample("t", 64, 64, vec![]);
        let donor = gradient_sample("d", 64, 64, vec![ann(2, 0.25, 0.25, 0.25, 0.125)]);
        let policy = AugmentationPolicy {
            copy_paste_max_instances: 1,
            ..AugmentationPolicy::default()
        };
        let (out, outcome) =
            apply_copy_paste_traced(&target, &donor, &policy, &mut RngStream::new(9, "t", 1))
                .unwrap();
        assert_eq!(outcome.pasted, 1);
        assert_eq!(out.annotations.len(), 1);
        let pasted = &out.annotations[0];
        assert_eq!(pasted.class_id, 2);
        // Box-level patch: same size as the donor box (in pixels).
        assert!((pasted.bbox.w() - 0.25).abs() < 1e-9);
        assert!((pasted.bbox.h() - 0.125).abs() < 1e-9);
        // Pasted pixels equal the donor patch.
        let canvas = CanvasSize::new(64, 64).unwrap();
        let src = pixel_rect(&donor.annotations[0].bbox, canvas);
        let dst = pixel_rect(&pasted.bbox, canvas);
        for dy in 0..src.height() {
            for dx in 0..src.width() {
                assert_eq!(
                    out.raster
                        .pixel((dst.x0 + dx) as u32, (dst.y0 + dy) as u32),
                    donor
                        .raster
                        .pixel((src.x0 + dx) as u32, (src.y0 + dy) as u32)
                );
            }
        }
    }

    #[test]
    fn copy_paste_occlusion_removes_covered_box_rasterized_oracle() {
        // A full-canvas donor instance necessarily covers every existing box.
        let target = gradient_sample("t", 32, 32, vec![ann(0, 0.5, 0.5, 0.25, 0.25)]);
        let donor = gradient_sample("d", 32, 32, vec![ann(1, 0.5, 0.5, 1.0, 1.0)]);
        let policy = AugmentationPolicy {
            copy_paste_max_instances: 1,
            ..AugmentationPolicy::default()
        };
        let (out, outcome) =
            apply_copy_paste_traced(&target, &donor, &policy, &mut RngStream::new(4, "t", 0))
                .unwrap();
        assert_eq!(outcome.pasted, 1);
        assert_eq!(outcome.occluded_removed, 1);
        assert_eq!(out.annotations.len(), 1);
        assert_eq!(out.annotations[0].class_id, 1);

        // Rasterized occlusion oracle: count pixels of the original box not
        // covered by the pasted rectangle.
        let canvas = CanvasSize::new(32, 32).unwrap();
        let orig = pixel_rect(&target.annotations[0].bbox, canvas);
        let pasted = pixel_rect(&out.annotations[0].bbox, canvas);
        let mut visible = 0i64;
        for y in orig.y0..orig.y1 {
            for x in orig.x0..orig.x1 {
                let covered = x >= pasted.x0 && x < pasted.x1 && y >= pasted.y0 && y < pasted.y1;
                if !covered {
                    visible += 1;
                }
            }
        }
        assert_eq!(visible, 0);
    }

    #[test]
    fn visible_fraction_exact_on_split_cover() {
        // Two covers jointly hide the left half of a 10x10 rect.
        let rect = PixelRect {
            x0: 0,
            y0: 0,
            x1: 10,
            y1: 10,
        };
        let covers = [
            PixelRect {
                x0: 0,
                y0: 0,
                x1: 5,
                y1: 6,
            },
            PixelRect {
                x0: 0,
                y0: 4,
                x1: 5,
                y1: 10,
            },
        ];
        assert_eq!(visible_fraction(rect, &covers), 0.5);
    }

    #[test]
    fn online_all_zero_probabilities_is_identity() {
        let sample = gradient_sample("s", 24, 24, vec![ann(0, 0.5, 0.5, 0.25, 0.25)]);
        let partners: Vec<Sample> = vec![gradient_sample("p", 24, 24, vec![])];
        let policy = AugmentationPolicy::disabled();
        let mut rng = RngStream::new(11, "s", 0);
        let (out, applied) =
            augment_online_traced(&sample, &partners, &policy, &mut rng).unwrap();
        assert_eq!(out, sample);
        assert_eq!(applied, AppliedAugmentations::default());
    }

    #[test]
    fn online_all_ones_reproducible() {
        let sample = gradient_sample("s", 32, 32, vec![ann(0, 0.25, 0.25, 0.25, 0.25)]);
        let partners: Vec<Sample> =
            vec![gradient_sample("p", 32, 32, vec![ann(1, 0.5, 0.5, 0.25, 0.25)])];
        let policy = AugmentationPolicy {
            p_copy_paste: 1.0,
            p_mixup: 1.0,
            p_hsv: 1.0,
            p_flip_rot: 1.0,
            ..AugmentationPolicy::default()
        };
        let a = augment_online(&sample, &partners, &policy, &mut RngStream::new(21, "s", 5))
            .unwrap();
        let b = augment_online(&sample, &partners, &policy, &mut RngStream::new(21, "s", 5))
            .unwrap();
        assert_eq!(a, b);

        let (_, applied) =
            augment_online_traced(&sample, &partners, &policy, &mut RngStream::new(21, "s", 5))
                .unwrap();
        assert_eq!(
            applied,
            AppliedAugmentations {
                copy_paste: true,
                mixup: true,
                hsv: true,
                flip_rotate: true,
            }
        );
    }

    #[test]
    fn online_never_alters_class_ids() {
        let sample = gradient_sample(
            "s",
            32,
            32,
            vec![ann(2, 0.25, 0.25, 0.2, 0.2), ann(1, 0.7, 0.7, 0.2, 0.2)],
        );
        let partners: Vec<Sample> =
            vec![gradient_sample("p", 32, 32, vec![ann(0, 0.5, 0.5, 0.25, 0.25)])];
        let policy = AugmentationPolicy {
            p_copy_paste: 1.0,
            p_mixup: 1.0,
            p_hsv: 1.0,
            p_flip_rot: 1.0,
            ..AugmentationPolicy::default()
        };
        for epoch in 0..20 {
            let mut rng = RngStream::new(33, "s", epoch);
            let out = augment_online(&sample, &partners, &policy, &mut rng).unwrap();
            for a in &out.annotations {
                assert!(a.class_id <= 2);
            }
        }
    }

    #[test]
    fn materialize_offline_sizes() {
        let samples: Vec<Sample> = (0..10)
            .map(|i| gradient_sample(&format!("img_{i:03}"), 16, 16, vec![ann(0, 0.5, 0.5, 0.25, 0.25)]))
            .collect();
        let dataset = Dataset {
            name: "toy".to_string(),
            classes: vec!["a".to_string()],
            samples,
        };
        let policy = AugmentationPolicy::default();

        let unchanged = materialize_offline(&dataset, &policy, 0, 7).unwrap();
        assert_eq!(unchanged.samples.len(), 10);
        assert_eq!(unchanged.samples, dataset.samples);

        let doubled = materialize_offline(&dataset, &policy, 2, 7).unwrap();
        assert_eq!(doubled.samples.len(), 30);
        assert_eq!(doubled.samples[10].image_id, "img_000_aug1");
        assert!(doubled.samples[10..]
            .iter()
            .all(|s| s.origin == SampleOrigin::Augmented));
    }

    #[test]
    fn materialize_offline_deterministic() {
        let samples: Vec<Sample> = (0..6)
            .map(|i| gradient_sample(&format!("img_{i}"), 20, 20, vec![ann(0, 0.3, 0.3, 0.2, 0.2)]))
            .collect();
        let dataset = Dataset {
            name: "toy".to_string(),
            classes: vec!["a".to_string()],
            samples,
        };
        let policy = AugmentationPolicy::default();
        let a = materialize_offline(&dataset, &policy, 3, 99).unwrap();
        let b = materialize_offline(&dataset, &policy, 3, 99).unwrap();
        assert_eq!(a.samples, b.samples);
    }
}
