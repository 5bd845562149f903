//! Behavioral properties of the generator, the tone transformer and training.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use tonefair_core::datakit::{stratified_split, synth_generate, Palette, Ratios, SynthConfig};
use tonefair_core::fairmetrics::overall_accuracy;
use tonefair_core::micronet::Hyper;
use tonefair_core::tonemap::random_target;
use tonefair_core::trainer::{evaluate, train, TrainConfig};
use tonefair_core::{AffineToneMap, Arch, Dataset, Normalization, ToneTransform};

fn synth(counts: Vec<usize>, side: usize, rho: f64, seed: u64) -> Dataset {
    synth_generate(&SynthConfig {
        n_classes: 5,
        n_groups: 6,
        counts,
        side,
        rho,
        seed,
    })
    .unwrap()
}

/// Pearson χ² independence test on the tone x label table; returns the p-value.
fn independence_p(d: &Dataset) -> f64 {
    let (m, n) = (d.n_classes(), d.n_groups());
    let mut table = vec![vec![0.0f64; m]; n];
    for s in d.samples() {
        table[s.tone][s.label] += 1.0;
    }
    let total = d.len() as f64;
    let rows: Vec<f64> = table.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<f64> = (0..m).map(|c| table.iter().map(|r| r[c]).sum()).collect();
    let mut stat = 0.0;
    for g in 0..n {
        for c in 0..m {
            let expected = rows[g] * cols[c] / total;
            stat += (table[g][c] - expected).powi(2) / expected;
        }
    }
    let dof = ((n - 1) * (m - 1)) as f64;
    1.0 - ChiSquared::new(dof).unwrap().cdf(stat)
}

#[test]
fn unbiased_generator_has_independent_tone_and_label() {
    let d = synth(vec![100; 6], 8, 0.0, 3);
    assert_eq!(d.len(), 600);
    let p = independence_p(&d);
    assert!(p > 0.01, "p = {p}");
    let biased = synth(vec![100; 6], 8, 0.8, 3);
    assert!(independence_p(&biased) < 1e-6);
}

fn desk_hyper(epochs: usize, lambda: f64, seed: u64) -> Hyper {
    Hyper {
        lr: 0.01,
        momentum: 0.9,
        weight_decay: 1e-3,
        batch_size: 16,
        epochs,
        lambda,
        seed,
        clip_norm: Some(1.0),
    }
}

fn config(side: usize, epochs: usize, lambda: f64, seed: u64, augment: bool) -> TrainConfig {
    TrainConfig {
        arch: Arch::for_input(side, 5),
        hyper: desk_hyper(epochs, lambda, seed),
        use_reg: true,
        augment,
        normalization: Normalization::default(),
    }
}

#[test]
fn transform_keeps_the_predicted_class() {
    let data = synth(vec![150; 6], 32, 0.0, 11);
    let (tr, va, te) = stratified_split(&data, &Ratios::default(), 1).unwrap();
    let tm = AffineToneMap::from_palette(&Palette::default()).unwrap();
    let cfg = config(32, 25, 0.0, 2, true);
    let (model, _) = train(&cfg, &tr, &va, &tm).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let moved: Vec<_> = te
        .samples()
        .iter()
        .map(|s| {
            let z = random_target(s.tone, 6, &mut rng).unwrap();
            let mut t = s.clone();
            t.image = tm.transform(&s.image, s.tone, z, s.mask.as_ref()).unwrap();
            t
        })
        .collect();
    let moved = Dataset::new(moved, te.class_names().to_vec(), te.group_names().to_vec(), te.split_tag()).unwrap();
    let a = evaluate(&model, &te, &cfg.normalization).unwrap();
    let b = evaluate(&model, &moved, &cfg.normalization).unwrap();
    let same = a.rows().iter().zip(b.rows()).filter(|(x, y)| x.pred == y.pred).count();
    let rate = same as f64 / te.len() as f64;
    assert!(
        rate >= 0.95,
        "agreement {rate:.3} (accuracy {:.3} before, {:.3} after)",
        overall_accuracy(&a).unwrap(),
        overall_accuracy(&b).unwrap()
    );
}

#[test]
fn fifty_samples_are_memorized() {
    let data = synth(vec![9, 9, 8, 8, 8, 8], 32, 0.0, 5);
    assert_eq!(data.len(), 50);
    let tm = AffineToneMap::from_palette(&Palette::default()).unwrap();
    let cfg = config(32, 200, 0.0, 1, false);
    // Selecting on the training set itself keeps the best-fitting epoch.
    let (model, _) = train(&cfg, &data, &data, &tm).unwrap();
    let acc = overall_accuracy(&evaluate(&model, &data, &cfg.normalization).unwrap()).unwrap();
    assert_eq!(acc, 1.0);
}

#[test]
fn invariance_breaks_a_perfect_tone_shortcut() {
    let tm = AffineToneMap::from_palette(&Palette::default()).unwrap();
    let test = synth(vec![40; 6], 32, 0.0, 77);
    for seed in 0..3u64 {
        let data = synth(vec![60; 6], 32, 1.0, 100 + seed);
        let (tr, va, _) = stratified_split(&data, &Ratios::new(0.8, 0.2, 0.0).unwrap(), seed).unwrap();
        let mut accs = [0.0; 2];
        for (i, lambda) in [0.0, 0.5].into_iter().enumerate() {
            let cfg = config(32, 20, lambda, seed, true);
            let (model, _) = train(&cfg, &tr, &va, &tm).unwrap();
            accs[i] = overall_accuracy(&evaluate(&model, &test, &cfg.normalization).unwrap()).unwrap();
        }
        assert!(accs[0] <= 0.2 + 0.15, "seed {seed}: shortcut model scored {:.3}", accs[0]);
        assert!(accs[1] > accs[0], "seed {seed}: {accs:?}");
    }
}
