//! Shared fixtures for the criterion benchmarks under `benches/`.

use tonefair_core::datakit::{normalize, synth_generate, SynthConfig};
use tonefair_core::micronet::Tensor3;
use tonefair_core::{Arch, Dataset, Model, Normalization};

/// A small balanced synthetic set: 5 classes, 6 tone groups, `per_group` images each.
pub fn dataset(side: usize, per_group: usize) -> Dataset {
    synth_generate(&SynthConfig {
        n_classes: 5,
        n_groups: 6,
        counts: vec![per_group; 6],
        side,
        rho: 0.0,
        seed: 17,
    })
    .expect("valid synthetic config")
}

pub fn model(side: usize) -> Model<f32> {
    Model::init(&Arch::for_input(side, 5), 3).expect("valid architecture")
}

/// Normalized network inputs for the first `n` samples.
pub fn tensors(model: &Model<f32>, data: &Dataset, n: usize) -> Vec<Tensor3<f32>> {
    let norm = Normalization::default();
    data.samples()
        .iter()
        .take(n)
        .map(|s| {
            let x = normalize(&s.image, &norm).expect("finite image");
            model.tensor_from_image(&x).expect("matching side")
        })
        .collect()
}
