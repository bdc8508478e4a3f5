//! Synthetic toy scenes and a trivial color-threshold detector stub.
//!
//! Scenes are saturated colored rectangles on dim noise, one color per
//! class. The stub detector recovers the rectangles by thresholding on the
//! class colors and flood-filling connected components, which lets the full
//! plan/ingest/evaluate pipeline run end to end without any real trainer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::augment::{Annotation, Sample, SampleOrigin};
use crate::datamix::Dataset;
use crate::error::Result;
use crate::evalmetrics::Detection;
use crate::geom::{to_normalized, BBox, PixelBox};
use crate::imgproc::Raster;

// Saturated palette, one entry per class; dominant channel 220 against
// noise capped at 90.
const PALETTE: [[u8; 3]; 6] = [
    [220, 40, 40],
    [40, 220, 40],
    [40, 40, 220],
    [220, 220, 40],
    [220, 40, 220],
    [40, 220, 220],
];

/// Color assigned to a class id.
pub fn class_color(class_id: usize) -> [u8; 3] {
    PALETTE[class_id % PALETTE.len()]
}

fn color_matches(pixel: [u8; 3], color: [u8; 3]) -> bool {
    pixel
        .iter()
        .zip(color.iter())
        .all(|(&p, &c)| (p as i32 - c as i32).abs() <= 10)
}

/// Generate a deterministic toy dataset: `n_images` scenes of colored,
/// non-overlapping rectangles on noise, with exact annotations.
pub fn generate_toy_dataset(
    n_images: usize,
    width: u32,
    height: u32,
    n_classes: usize,
    max_rects: usize,
    seed: u64,
) -> Result<Dataset> {
    assert!(n_classes >= 1 && n_classes <= PALETTE.len());
    let mut samples = Vec::with_capacity(n_images);
    for img_idx in 0..n_images {
        let mut rng = ChaCha12Rng::seed_from_u64(seed ^ (img_idx as u64).wrapping_mul(0x9e37_79b9));
        let mut raster = Raster::from_fn(width, height, |_, _| [0, 0, 0])?;
        // Dim noise background.
        for y in 0..height {
            for x in 0..width {
                raster.set_pixel(
                    x,
                    y,
                    [
                        rng.gen_range(0..=90),
                        rng.gen_range(0..=90),
                        rng.gen_range(0..=90),
                    ],
                );
            }
        }

        let n_rects = rng.gen_range(1..=max_rects);
        let mut placed: Vec<(i64, i64, i64, i64)> = Vec::new();
        let mut annotations = Vec::new();
        for _ in 0..n_rects {
            // Rejection-sample a rectangle that keeps a 1-pixel gap from
            // everything already placed.
            for _attempt in 0..50 {
                let rw = rng.gen_range(6..=(width as i64 / 3).max(7));
                let rh = rng.gen_range(6..=(height as i64 / 3).max(7));
                let x0 = rng.gen_range(1..(width as i64 - rw));
                let y0 = rng.gen_range(1..(height as i64 - rh));
                let (x1, y1) = (x0 + rw, y0 + rh);
                // Strict inequality keeps a 1-pixel gap (rects are
                // end-exclusive), so components never merge.
                let clear = placed.iter().all(|&(px0, py0, px1, py1)| {
                    x1 < px0 || px1 < x0 || y1 < py0 || py1 < y0
                });
                if !clear {
                    continue;
                }
                let class_id = rng.gen_range(0..n_classes);
                let color = class_color(class_id);
                for y in y0..y1 {
                    for x in x0..x1 {
                        raster.set_pixel(x as u32, y as u32, color);
                    }
                }
                placed.push((x0, y0, x1, y1));
                let bbox = to_normalized(
                    &PixelBox {
                        x_min: x0 as f64,
                        y_min: y0 as f64,
                        x_max: x1 as f64,
                        y_max: y1 as f64,
                    },
                    raster.canvas(),
                )?;
                annotations.push(Annotation { class_id, bbox });
                break;
            }
        }
        samples.push(Sample {
            image_id: format!("toy_{img_idx:04}"),
            raster,
            annotations,
            origin: SampleOrigin::Real,
        });
    }
    Ok(Dataset {
        name: "toy".to_string(),
        classes: (0..n_classes).map(|i| format!("class_{i}")).collect(),
        samples,
    })
}

/// Threshold-and-flood-fill detector: finds connected components of pixels
/// matching each class color and emits their bounding boxes with
/// confidence 1.0.
pub fn detect_by_color(sample: &Sample, n_classes: usize) -> Result<Vec<Detection>> {
    let (w, h) = (sample.raster.width() as i64, sample.raster.height() as i64);
    let mut detections = Vec::new();
    for class_id in 0..n_classes {
        let color = class_color(class_id);
        let mut visited = vec![false; (w * h) as usize];
        for sy in 0..h {
            for sx in 0..w {
                let idx = (sy * w + sx) as usize;
                if visited[idx] || !color_matches(sample.raster.pixel(sx as u32, sy as u32), color)
                {
                    continue;
                }
                // Flood fill one component.
                let mut stack = vec![(sx, sy)];
                visited[idx] = true;
                let (mut x0, mut y0, mut x1, mut y1) = (sx, sy, sx, sy);
                let mut count = 0u64;
                while let Some((x, y)) = stack.pop() {
                    count += 1;
                    x0 = x0.min(x);
                    y0 = y0.min(y);
                    x1 = x1.max(x);
                    y1 = y1.max(y);
                    for (nx, ny) in [(x - 1, y), (x + 1, y), (x, y - 1), (x, y + 1)] {
                        if nx < 0 || ny < 0 || nx >= w || ny >= h {
                            continue;
                        }
                        let nidx = (ny * w + nx) as usize;
                        if visited[nidx] {
                            continue;
                        }
                        if color_matches(sample.raster.pixel(nx as u32, ny as u32), color) {
                            visited[nidx] = true;
                            stack.push((nx, ny));
                        }
                    }
                }
                if count < 4 {
                    continue;
                }
                let bbox = to_normalized(
                    &PixelBox {
                        x_min: x0 as f64,
                        y_min: y0 as f64,
                        x_max: (x1 + 1) as f64,
                        y_max: (y1 + 1) as f64,
                    },
                    sample.raster.canvas(),
                )?;
                detections.push(Detection {
                    image_id: sample.image_id.clone(),
                    class_id,
                    bbox,
                    confidence: 1.0,
                });
            }
        }
    }
    Ok(detections)
}

/// Run the stub detector over a whole dataset.
pub fn detect_dataset(dataset: &Dataset) -> Result<Vec<Detection>> {
    let mut detections = Vec::new();
    for sample in &dataset.samples {
        detections.extend(detect_by_color(sample, dataset.classes.len())?);
    }
    Ok(detections)
}

/// Echo ground truth as perfect predictions with confidence 1.0.
pub fn echo_ground_truth(dataset: &Dataset) -> Vec<Detection> {
    crate::evalmetrics::ground_truths_of(dataset)
        .into_iter()
        .map(|gt| Detection {
            image_id: gt.image_id,
            class_id: gt.class_id,
            bbox: gt.bbox,
            confidence: 1.0,
        })
        .collect()
}

/// Shift every detection horizontally by half its width (clipped inside the
/// unit square), degrading IoU against the true box to 1/3.
pub fn jitter_by_half_width(detections: &[Detection]) -> Vec<Detection> {
    detections
        .iter()
        .map(|d| {
            let shift = d.bbox.w() / 2.0;
            let cx = if d.bbox.cx() + shift + d.bbox.w() / 2.0 <= 1.0 {
                d.bbox.cx() + shift
            } else {
                d.bbox.cx() - shift
            };
            Detection {
                image_id: d.image_id.clone(),
                class_id: d.class_id,
                bbox: BBox::new(cx, d.bbox.cy(), d.bbox.w(), d.bbox.h())
                    .expect("shifted box stays inside the unit square"),
                confidence: d.confidence,
            }
        })
        .collect()
}
