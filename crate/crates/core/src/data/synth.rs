use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::memory::Label;
use crate::seed;

use super::{DenseDataset, Sample};

/// Gaussian blobs around class means drawn from `U[0.2, 0.8]^n`.
///
/// Samples are interleaved by class (`label = i mod k`) so any prefix is
/// close to balanced.
pub fn synth_blobs(classes: usize, dim: usize, per_class: usize, spread: f64, seed: u64) -> Result<DenseDataset> {
    if classes == 0 || dim == 0 || per_class == 0 {
        return Err(Error::InvalidArgument(
            "blobs need at least one class, dimension and sample".into(),
        ));
    }
    if !(spread >= 0.0 && spread.is_finite()) {
        return Err(Error::InvalidArgument(format!("spread {spread} must be ≥ 0")));
    }
    let mut mean_rng = ChaCha8Rng::seed_from_u64(seed::derive(seed, "blob-means"));
    let means: Vec<Vec<f64>> = (0..classes)
        .map(|_| (0..dim).map(|_| mean_rng.random_range(0.2..0.8)).collect())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(seed, "blob-samples"));
    let mut samples = Vec::with_capacity(classes * per_class);
    for i in 0..classes * per_class {
        let c = i % classes;
        let values = means[c]
            .iter()
            .map(|m| {
                let z: f64 = StandardNormal.sample(&mut rng);
                m + spread * z
            })
            .collect();
        samples.push(Sample {
            values,
            label: c as Label,
        });
    }
    DenseDataset::new("blobs", "all", (0..classes as Label).collect(), samples)
}

const SIDE: usize = 28;

type Stroke = Vec<(f64, f64)>;

fn arc(cx: f64, cy: f64, rx: f64, ry: f64, from: f64, to: f64) -> Stroke {
    let n = 16;
    (0..=n)
        .map(|i| {
            let a = from + (to - from) * i as f64 / n as f64;
            (cx + rx * a.cos(), cy + ry * a.sin())
        })
        .collect()
}

/// Polyline skeletons of the ten digits in unit coordinates, y pointing down.
fn glyph(digit: usize) -> Vec<Stroke> {
    match digit {
        0 => vec![arc(0.5, 0.5, 0.26, 0.4, 0.0, 2.0 * PI)],
        1 => vec![vec![(0.35, 0.25), (0.52, 0.1), (0.52, 0.9)]],
        2 => {
            let mut s = arc(0.5, 0.32, 0.22, 0.22, PI, 2.0 * PI + PI / 6.0);
            s.extend([(0.25, 0.9), (0.78, 0.9)]);
            vec![s]
        }
        3 => vec![
            arc(0.48, 0.3, 0.2, 0.2, 7.0 * PI / 6.0, 2.5 * PI),
            arc(0.48, 0.7, 0.22, 0.2, -PI / 2.0, 5.0 * PI / 6.0),
        ],
        4 => vec![vec![(0.65, 0.9), (0.65, 0.1), (0.2, 0.65), (0.8, 0.65)]],
        5 => {
            let mut s = vec![(0.75, 0.1), (0.32, 0.1), (0.3, 0.45)];
            s.extend(arc(0.5, 0.64, 0.24, 0.24, -2.0 * PI / 3.0, 5.0 * PI / 6.0));
            vec![s]
        }
        6 => vec![
            vec![(0.7, 0.12), (0.5, 0.16), (0.36, 0.34), (0.28, 0.62)],
            arc(0.5, 0.66, 0.22, 0.22, 0.0, 2.0 * PI),
        ],
        7 => vec![vec![(0.22, 0.1), (0.78, 0.1), (0.42, 0.9)]],
        8 => vec![
            arc(0.5, 0.29, 0.18, 0.18, 0.0, 2.0 * PI),
            arc(0.5, 0.7, 0.21, 0.21, 0.0, 2.0 * PI),
        ],
        _ => vec![
            arc(0.5, 0.34, 0.2, 0.2, 0.0, 2.0 * PI),
            vec![(0.7, 0.34), (0.6, 0.9)],
        ],
    }
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (qx, qy) = (a.0 + t * dx - p.0, a.1 + t * dy - p.1);
    (qx * qx + qy * qy).sqrt()
}

fn render(digit: usize, rng: &mut ChaCha8Rng, noise: &Normal<f64>) -> Vec<f64> {
    let angle: f64 = rng.random_range(-0.25..0.25);
    let scale = rng.random_range(0.8..1.05);
    let shear = rng.random_range(-0.2..0.2);
    let stretch = rng.random_range(0.85..1.1);
    let (tx, ty) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
    let width = rng.random_range(1.0..2.0);
    let box_size = 20.0 * scale;
    let (c, s) = (angle.cos(), angle.sin());
    let strokes: Vec<Stroke> = glyph(digit)
        .into_iter()
        .map(|stroke| {
            stroke
                .into_iter()
                .map(|(x, y)| {
                    let x = x + rng.random_range(-0.03..0.03) - 0.5;
                    let y = y + rng.random_range(-0.03..0.03) - 0.5;
                    let x = (x + shear * y) * stretch;
                    let (rx, ry) = (c * x - s * y, s * x + c * y);
                    (
                        SIDE as f64 / 2.0 + tx + box_size * rx,
                        SIDE as f64 / 2.0 + ty + box_size * ry,
                    )
                })
                .collect()
        })
        .collect();
    let mut img = vec![0.0; SIDE * SIDE];
    for (i, px) in img.iter_mut().enumerate() {
        let p = ((i % SIDE) as f64 + 0.5, (i / SIDE) as f64 + 0.5);
        let d = strokes
            .iter()
            .flat_map(|st| st.windows(2).map(|w| segment_distance(p, w[0], w[1])))
            .fold(f64::INFINITY, f64::min);
        let ink = (1.0 - (d - width / 2.0)).clamp(0.0, 1.0);
        *px = (ink + noise.sample(rng)).clamp(0.0, 1.0);
    }
    img
}

/// Procedurally rendered 28×28 handwritten-style digits with random affine
/// jitter, stroke width, vertex wobble and pixel noise. Labels cycle 0..9.
pub fn synth_digits(count: usize, seed: u64) -> Result<DenseDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(seed, "digits"));
    let noise = Normal::new(0.0, 0.05).expect("valid normal");
    let samples = (0..count)
        .map(|i| Sample {
            values: render(i % 10, &mut rng, &noise),
            label: (i % 10) as Label,
        })
        .collect();
    DenseDataset::new("digits", "all", (0..10).collect(), samples)
}
