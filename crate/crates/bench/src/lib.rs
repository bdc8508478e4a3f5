//! Shared fixture builders for the criterion benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use detlab::augment::{Annotation, Sample, SampleOrigin};
use detlab::datamix::Dataset;
use detlab::evalmetrics::{Detection, GroundTruth};
use detlab::geom::BBox;
use detlab::imgproc::Raster;

pub fn rng(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

pub fn random_bbox(rng: &mut impl Rng) -> BBox {
    BBox::new(
        rng.gen_range(0.25..0.75),
        rng.gen_range(0.25..0.75),
        rng.gen_range(0.05..0.4),
        rng.gen_range(0.05..0.4),
    )
    .unwrap()
}

pub fn random_detections(rng: &mut impl Rng, n: usize, classes: usize) -> Vec<Detection> {
    (0..n)
        .map(|_| Detection {
            image_id: "img".to_string(),
            class_id: rng.gen_range(0..classes),
            bbox: random_bbox(rng),
            confidence: rng.gen_range(0.0..1.0),
        })
        .collect()
}

pub fn random_instance(
    rng: &mut impl Rng,
    images: usize,
    per_image: usize,
    classes: usize,
) -> (Vec<Detection>, Vec<GroundTruth>) {
    let mut dets = Vec::new();
    let mut gts = Vec::new();
    for img in 0..images {
        let image_id = format!("img{img:03}");
        for _ in 0..per_image {
            gts.push(GroundTruth {
                image_id: image_id.clone(),
                class_id: rng.gen_range(0..classes),
                bbox: random_bbox(rng),
            });
            dets.push(Detection {
                image_id: image_id.clone(),
                class_id: rng.gen_range(0..classes),
                bbox: random_bbox(rng),
                confidence: rng.gen_range(0.0..1.0),
            });
        }
    }
    (dets, gts)
}

pub fn patterned_raster(width: u32, height: u32, phase: u32) -> Raster {
    Raster::from_fn(width, height, |x, y| {
        [
            ((x * 3 + phase * 11) % 256) as u8,
            ((y * 5 + phase * 7) % 256) as u8,
            ((x + y * 2 + phase * 13) % 256) as u8,
        ]
    })
    .unwrap()
}

pub fn patterned_sample(id: &str, width: u32, height: u32, phase: u32) -> Sample {
    Sample {
        image_id: id.to_string(),
        raster: patterned_raster(width, height, phase),
        annotations: vec![
            Annotation {
                class_id: 0,
                bbox: BBox::new(0.3, 0.3, 0.2, 0.15).unwrap(),
            },
            Annotation {
                class_id: 1,
                bbox: BBox::new(0.7, 0.65, 0.15, 0.2).unwrap(),
            },
        ],
        origin: SampleOrigin::Real,
    }
}

pub fn patterned_dataset(n: usize, width: u32, height: u32) -> Dataset {
    Dataset {
        name: "bench".to_string(),
        classes: vec!["c0".to_string(), "c1".to_string()],
        samples: (0..n)
            .map(|i| patterned_sample(&format!("img_{i:04}"), width, height, i as u32))
            .collect(),
    }
}
