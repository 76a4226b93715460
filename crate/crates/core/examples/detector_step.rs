//! Feeds a noisy stream with a step from 0 to 3 at index 500 to each
//! detector and prints where it fires.
//!
//!     cargo run --example detector_step

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sdcd::detectors::{ChangeDetector, DetectorConfig, DetectorKind};

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let stream: Vec<f64> = (0..1000)
        .map(|i| noise.sample(&mut rng) + if i >= 500 { 3.0 } else { 0.0 })
        .collect();

    // KSWIN keeps sliding after a detection, so it fires on every element
    // while the step is inside its window
    for kind in DetectorKind::ALL {
        let mut detector = DetectorConfig::new(kind)
            .build()
            .expect("default config is valid");
        let mut firings = Vec::new();
        for (i, &v) in stream.iter().enumerate() {
            if detector.add_value(v).unwrap() {
                let (pre, post) = detector.pre_post_means().unwrap();
                firings.push((i, pre, post));
            }
        }
        match firings.first() {
            Some(&(i, pre, post)) => println!(
                "{kind:>6}: first change at {i}, mean {pre:+.2} -> {post:+.2}; {} firings in total",
                firings.len()
            ),
            None => println!("{kind:>6}: no change detected"),
        }
    }
}
