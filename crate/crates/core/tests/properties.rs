//! Property tests for the format, divergence, and segmentation invariants.

use std::collections::BTreeMap;

use proptest::collection::vec;
use proptest::prelude::*;

use tunescope_core::data::GrayImage;
use tunescope_core::divergence::{estimate_histogram_pair, euclidean_distance, kl_divergence};
use tunescope_core::segmentation::{segment_grid, segment_slic};
use tunescope_core::tensors::{
    read_checkpoint, write_checkpoint, Checkpoint, NamedTensor, TensorKind,
};

fn arb_tensor(idx: usize) -> impl Strategy<Value = NamedTensor> {
    (1usize..5, 1usize..5).prop_flat_map(move |(rows, cols)| {
        vec(-100.0f32..100.0, rows * cols).prop_map(move |values| {
            NamedTensor::new(
                format!("layer{idx}.weight"),
                TensorKind::Weight,
                vec![rows, cols],
                values,
            )
            .expect("valid tensor")
        })
    })
}

fn arb_checkpoint() -> impl Strategy<Value = Checkpoint> {
    (0usize..4).prop_flat_map(|n| {
        let tensors: Vec<_> = (0..n).map(arb_tensor).collect();
        tensors.prop_map(|tensors| {
            let mut metadata = BTreeMap::new();
            metadata.insert("model_id".to_string(), "prop".to_string());
            metadata.insert("created_by".to_string(), "proptest".to_string());
            Checkpoint::new(tensors, metadata).expect("valid checkpoint")
        })
    })
}

proptest! {
    #[test]
    fn ntf_write_read_write_is_byte_identical(ckpt in arb_checkpoint()) {
        let mut first = Vec::new();
        write_checkpoint(&ckpt, &mut first).unwrap();
        let back = read_checkpoint(&mut first.as_slice()).unwrap();
        let mut second = Vec::new();
        write_checkpoint(&back, &mut second).unwrap();
        prop_assert_eq!(first, second);
    }

    #[test]
    fn kl_is_nonnegative_and_zero_on_self(
        a in vec(-50.0f64..50.0, 2..200),
        b in vec(-50.0f64..50.0, 2..200),
        bins in 2usize..64,
    ) {
        let (p, q) = estimate_histogram_pair(&a, &b, bins, 1e-10).unwrap();
        let kl = kl_divergence(&p, &q).unwrap();
        prop_assert!(kl >= 0.0, "kl = {kl}");
        prop_assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
        prop_assert_eq!(kl_divergence(&q, &q).unwrap(), 0.0);
    }

    #[test]
    fn kl_is_invariant_under_power_of_two_scaling(
        a in vec(-50.0f64..50.0, 2..100),
        b in vec(-50.0f64..50.0, 2..100),
        exponent in -2i32..3,
    ) {
        // Powers of two rescale values and bin edges exactly, so bin counts
        // cannot move.
        let scale = 2.0f64.powi(exponent);
        let (p, q) = estimate_histogram_pair(&a, &b, 16, 1e-10).unwrap();
        let kl = kl_divergence(&p, &q).unwrap();
        let sa: Vec<f64> = a.iter().map(|v| v * scale).collect();
        let sb: Vec<f64> = b.iter().map(|v| v * scale).collect();
        let (ps, qs) = estimate_histogram_pair(&sa, &sb, 16, 1e-10).unwrap();
        let kls = kl_divergence(&ps, &qs).unwrap();
        prop_assert_eq!(kl, kls);
    }

    #[test]
    fn euclidean_distance_is_a_metric(
        a in vec(-10.0f64..10.0, 1..30),
        bc in vec((-10.0f64..10.0, -10.0f64..10.0), 1..30),
    ) {
        let n = a.len().min(bc.len());
        let a = &a[..n];
        let b: Vec<f64> = bc[..n].iter().map(|p| p.0).collect();
        let c: Vec<f64> = bc[..n].iter().map(|p| p.1).collect();
        let dab = euclidean_distance(a, &b).unwrap();
        let dba = euclidean_distance(&b, a).unwrap();
        prop_assert_eq!(dab, dba);
        let dac = euclidean_distance(a, &c).unwrap();
        let dbc = euclidean_distance(&b, &c).unwrap();
        prop_assert!(dac <= dab + dbc + 1e-12, "triangle violated");
        prop_assert_eq!(euclidean_distance(a, a).unwrap(), 0.0);
    }

    #[test]
    fn segmenters_cover_and_stay_connected(
        seed in 0u64..1000,
        w in 16usize..48,
        h in 16usize..48,
        cell in 3usize..8,
        targets in 2usize..24,
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let pixels: Vec<u8> = (0..w * h).map(|_| rng.gen()).collect();
        let img = GrayImage::new(w, h, pixels).unwrap();

        let grid = segment_grid(&img, cell).unwrap();
        grid.validate().unwrap();

        let slic = segment_slic(&img, targets, 10.0, 4, seed).unwrap();
        slic.validate().unwrap();

        // Determinism under identical seed.
        let again = segment_slic(&img, targets, 10.0, 4, seed).unwrap();
        prop_assert_eq!(slic.labels, again.labels);
    }
}
