//! Central-difference checks for each kernel on its own, in double precision,
//! and for the full objective on a deeper architecture than the default.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tonefair_core::losses::cross_entropy;
use tonefair_core::micronet::gradcheck::{check, relative_error};
use tonefair_core::micronet::layers::{
    block_avg_backward, block_avg_forward, conv_backward, conv_forward, maxpool2_backward,
    maxpool2_forward, relu_backward, relu_inplace,
};
use tonefair_core::micronet::{softmax, Batch, Tensor3};
use tonefair_core::{Arch, Model};

const STEP: f64 = 1e-5;
const TOL: f64 = 1e-6;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_tensor(r: &mut ChaCha8Rng, c: usize, h: usize, w: usize) -> Tensor3<f64> {
    let mut t = Tensor3::zeros(c, h, w);
    t.data.iter_mut().for_each(|v| *v = r.gen_range(-1.0..1.0));
    t
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Largest relative error of `analytic` against central differences of `f` around `x`.
fn worst(x: &[f64], analytic: &[f64], f: impl Fn(&[f64]) -> f64) -> f64 {
    let mut probe = x.to_vec();
    let mut w = 0.0f64;
    for i in 0..x.len() {
        probe[i] = x[i] + STEP;
        let up = f(&probe);
        probe[i] = x[i] - STEP;
        let down = f(&probe);
        probe[i] = x[i];
        w = w.max(relative_error(analytic[i], (up - down) / (2.0 * STEP)));
    }
    w
}

#[test]
fn conv_gradients() {
    let mut r = rng(1);
    let (in_c, out_c, k, h, w) = (3, 4, 3, 6, 5);
    let x = random_tensor(&mut r, in_c, h, w);
    let wt: Vec<f64> = (0..out_c * in_c * k * k).map(|_| r.gen_range(-0.5..0.5)).collect();
    let b: Vec<f64> = (0..out_c).map(|_| r.gen_range(-0.5..0.5)).collect();
    let c = random_tensor(&mut r, out_c, h, w);
    let loss = |x: &Tensor3<f64>, wt: &[f64], b: &[f64]| dot(&conv_forward(x, wt, b, out_c, k).data, &c.data);

    let mut gw = vec![0.0; wt.len()];
    let mut gb = vec![0.0; b.len()];
    let gx = conv_backward(&x, &wt, &c, k, &mut gw, &mut gb, true).unwrap();

    assert!(worst(&wt, &gw, |p| loss(&x, p, &b)) < TOL);
    assert!(worst(&b, &gb, |p| loss(&x, &wt, p)) < TOL);
    let e = worst(&x.data, &gx.data, |p| {
        let t = Tensor3 { data: p.to_vec(), ..x.clone() };
        loss(&t, &wt, &b)
    });
    assert!(e < TOL, "{e}");
}

#[test]
fn relu_gradient() {
    let mut r = rng(2);
    let mut x = random_tensor(&mut r, 2, 4, 4);
    // Keep clear of the kink.
    x.data.iter_mut().for_each(|v| {
        if v.abs() < 0.05 {
            *v += 0.1;
        }
    });
    let c = random_tensor(&mut r, 2, 4, 4);
    let mut act = x.clone();
    relu_inplace(&mut act);
    let mut g = c.clone();
    relu_backward(&act, &mut g);
    let e = worst(&x.data, &g.data, |p| {
        let mut t = Tensor3 { data: p.to_vec(), ..x.clone() };
        relu_inplace(&mut t);
        dot(&t.data, &c.data)
    });
    assert!(e < TOL, "{e}");
}

#[test]
fn maxpool_gradient() {
    let mut r = rng(3);
    let (ch, h, w) = (2, 6, 4);
    // Distinct, well-separated values so no window is near a tie.
    let mut vals: Vec<f64> = (0..ch * h * w).map(|i| i as f64 * 0.1).collect();
    for i in (1..vals.len()).rev() {
        vals.swap(i, r.gen_range(0..=i));
    }
    let x = Tensor3 { c: ch, h, w, data: vals };
    let c = random_tensor(&mut r, ch, h / 2, w / 2);
    let (_, arg) = maxpool2_forward(&x);
    let g = maxpool2_backward(&c, &arg, h, w);
    let e = worst(&x.data, &g.data, |p| {
        let t = Tensor3 { data: p.to_vec(), ..x.clone() };
        dot(&maxpool2_forward(&t).0.data, &c.data)
    });
    assert!(e < TOL, "{e}");
}

#[test]
fn block_average_gradient() {
    let mut r = rng(4);
    for grid in [1, 2, 3] {
        let x = random_tensor(&mut r, 3, 6, 6);
        let c: Vec<f64> = (0..3 * grid * grid).map(|_| r.gen_range(-1.0..1.0)).collect();
        let g = block_avg_backward(&c, 3, 6, 6, grid);
        let e = worst(&x.data, &g.data, |p| {
            let t = Tensor3 { data: p.to_vec(), ..x.clone() };
            dot(&block_avg_forward(&t, grid), &c)
        });
        assert!(e < TOL, "grid {grid}: {e}");
    }
}

#[test]
fn softmax_cross_entropy_gradient() {
    let mut r = rng(5);
    for y in 0..4 {
        let logits: Vec<f64> = (0..4).map(|_| r.gen_range(-3.0..3.0)).collect();
        // d/dlogit_k of -ln softmax_y = p_k - [k == y]
        let p = softmax(&logits);
        let analytic: Vec<f64> = p.iter().enumerate().map(|(k, v)| v - if k == y { 1.0 } else { 0.0 }).collect();
        let e = worst(&logits, &analytic, |l| cross_entropy(&softmax(l), y).unwrap().value);
        assert!(e < TOL, "{e}");
    }
}

#[test]
fn composite_gradient_on_deeper_stack() {
    let arch = Arch {
        input_side: 16,
        conv_widths: vec![4, 6, 8],
        kernel: 3,
        pool_grid: 2,
        n_classes: 3,
    };
    let model: Model<f64> = Model::<f32>::init(&arch, 4).unwrap().cast();
    let mut r = rng(6);
    let xs: Vec<_> = (0..3).map(|_| random_tensor(&mut r, 3, 16, 16)).collect();
    let xt: Vec<_> = (0..3).map(|_| random_tensor(&mut r, 3, 16, 16)).collect();
    let labels = [0, 2, 1];
    let batch = Batch { inputs: &xs, transformed: Some(&xt), labels: &labels };
    for lambda in [0.0, 0.3, 1.0] {
        let g = check(&model, &batch, lambda, STEP).unwrap();
        assert!(g.max_rel_error < 1e-4, "λ={lambda}: {g:?}");
    }
}
