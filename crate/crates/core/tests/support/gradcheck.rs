//! Central finite-difference gradient checks for every layer.
//!
//! Each check draws a random small problem, defines the scalar objective
//! `sum(R * layer(x))` for a random `R`, and compares the analytic
//! parameter and input gradients against central differences.

#![allow(dead_code)]

use osd3_core::model::{Model, ModelConfig};
use osd3_core::nn::{
    avg_pool2d, avg_pool2d_backward, dropout, dropout_backward, leaky_relu, leaky_relu_backward,
    mel_average, mel_average_backward, relu, relu_backward, softmax, softmax_weighted_ce_backward,
    weighted_ce_loss, BatchNorm, BiGru, Conv2d, Gradients, Linear, ParamStore, SqueezeExcitation,
    Tensor,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn dot(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// Norm-wise relative error `|a - n| / max(|a|, |n|)`.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).powi(2))
        .sum::<f64>()
        .sqrt();
    let na: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nn: f64 = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
    let scale = na.max(nn);
    if scale < 1e-10 {
        diff
    } else {
        diff / scale
    }
}

/// Worst relative error over all trainable parameters and the input.
fn compare<F>(
    store: &mut ParamStore,
    x: &Tensor,
    grads: &Gradients,
    dx: Option<&Tensor>,
    mut objective: F,
) -> f64
where
    F: FnMut(&mut ParamStore, &Tensor) -> f64,
{
    let mut worst: f64 = 0.0;
    for (pi, analytic) in grads.iter().enumerate() {
        if !store.params()[pi].trainable {
            continue;
        }
        let mut numeric = vec![0.0; analytic.len()];
        for j in 0..analytic.len() {
            let orig = store.params()[pi].value[j];
            store.params_mut()[pi].value[j] = orig + STEP;
            let up = objective(store, x);
            store.params_mut()[pi].value[j] = orig - STEP;
            let down = objective(store, x);
            store.params_mut()[pi].value[j] = orig;
            numeric[j] = (up - down) / (2.0 * STEP);
        }
        worst = worst.max(relative_error(analytic, &numeric));
    }
    if let Some(dx) = dx {
        let mut xp = x.clone();
        let mut numeric = vec![0.0; x.len()];
        for j in 0..x.len() {
            let orig = xp.data()[j];
            xp.data_mut()[j] = orig + STEP;
            let up = objective(store, &xp);
            xp.data_mut()[j] = orig - STEP;
            let down = objective(store, &xp);
            xp.data_mut()[j] = orig;
            numeric[j] = (up - down) / (2.0 * STEP);
        }
        worst = worst.max(relative_error(dx.data(), &numeric));
    }
    worst
}

pub fn conv2d(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (b, t, f, cin, cout) = (
        rng.gen_range(1..3),
        rng.gen_range(1..5),
        rng.gen_range(1..5),
        rng.gen_range(1..4),
        rng.gen_range(1..4),
    );
    let mut store = ParamStore::new();
    let conv = Conv2d::new(&mut store, "c", cin, cout, &mut rng);
    store
        .get_mut(conv.bias())
        .iter_mut()
        .for_each(|v| *v = rng.gen_range(-0.5..0.5));
    let x = random_tensor(&mut rng, &[b, t, f, cin]);
    let r = random_tensor(&mut rng, &[b, t, f, cout]);
    let mut grads = Gradients::zeros_like(&store);
    let dx = conv.backward(&store, &x, &r, &mut grads).unwrap();
    compare(&mut store, &x, &grads, Some(&dx), |s, x| {
        dot(&r, &conv.forward(s, x).unwrap())
    })
}

pub fn batchnorm(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, c) = (rng.gen_range(2..12), rng.gen_range(1..4));
    let mut store = ParamStore::new();
    let bn = BatchNorm::new(&mut store, "bn", c);
    for v in store.get_mut(bn.gamma()) {
        *v = rng.gen_range(0.5..1.5);
    }
    for v in store.get_mut(bn.beta()) {
        *v = rng.gen_range(-0.5..0.5);
    }
    let x = random_tensor(&mut rng, &[n, 2, c]);
    let r = random_tensor(&mut rng, &[n, 2, c]);
    let (_, cache) = bn.forward_train(&mut store, &x).unwrap();
    let mut grads = Gradients::zeros_like(&store);
    let dx = bn.backward(&store, &cache, &r, &mut grads).unwrap();
    compare(&mut store, &x, &grads, Some(&dx), |s, x| {
        dot(&r, &bn.forward_train(s, x).unwrap().0)
    })
}

pub fn squeeze_excitation(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (b, t, f) = (
        rng.gen_range(1..3),
        rng.gen_range(1..4),
        rng.gen_range(1..4),
    );
    let reduction = rng.gen_range(1..3);
    let c = reduction * rng.gen_range(1..4);
    let mut store = ParamStore::new();
    let se = SqueezeExcitation::new(&mut store, "se", c, reduction, &mut rng).unwrap();
    // Shift inputs positive on average so the hidden ReLU is active in places.
    let x = random_tensor(&mut rng, &[b, t, f, c]).map(|v| v + 0.3);
    let r = random_tensor(&mut rng, &[b, t, f, c]);
    let (_, cache) = se.forward(&store, &x).unwrap();
    let mut grads = Gradients::zeros_like(&store);
    let dx = se.backward(&store, &x, &cache, &r, &mut grads).unwrap();
    compare(&mut store, &x, &grads, Some(&dx), |s, x| {
        dot(&r, &se.forward(s, x).unwrap().0)
    })
}

pub fn avg_pool(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pool = (rng.gen_range(1..4), rng.gen_range(1..3));
    let shape = [
        rng.gen_range(1..3),
        pool.0 * rng.gen_range(1..3),
        pool.1 * rng.gen_range(1..3),
        rng.gen_range(1..3),
    ];
    let x = random_tensor(&mut rng, &shape);
    let y = avg_pool2d(&x, pool).unwrap();
    let r = random_tensor(&mut rng, y.shape());
    let dx = avg_pool2d_backward(&shape, &r, pool);
    let mut store = ParamStore::new();
    let grads = Gradients::zeros_like(&store);
    let pooled = compare(&mut store, &x, &grads, Some(&dx), |_, x| {
        dot(&r, &avg_pool2d(x, pool).unwrap())
    });

    let m = mel_average(&x).unwrap();
    let r2 = random_tensor(&mut rng, m.shape());
    let dx2 = mel_average_backward(&shape, &r2);
    let averaged = compare(&mut store, &x, &grads, Some(&dx2), |_, x| {
        dot(&r2, &mel_average(x).unwrap())
    });
    pooled.max(averaged)
}

pub fn bigru(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (b, t, d, h) = (
        rng.gen_range(1..3),
        rng.gen_range(1..6),
        rng.gen_range(1..4),
        rng.gen_range(1..4),
    );
    let mut store = ParamStore::new();
    let gru = BiGru::new(&mut store, "g", d, h, &mut rng);
    for p in store.params_mut() {
        p.value
            .iter_mut()
            .for_each(|v| *v = rng.gen_range(-0.8..0.8));
    }
    let x = random_tensor(&mut rng, &[b, t, d]);
    let r = random_tensor(&mut rng, &[b, t, 2 * h]);
    let (_, cache) = gru.forward(&store, &x).unwrap();
    let mut grads = Gradients::zeros_like(&store);
    let dx = gru.backward(&store, &x, &cache, &r, &mut grads).unwrap();
    compare(&mut store, &x, &grads, Some(&dx), |s, x| {
        dot(&r, &gru.forward(s, x).unwrap().0)
    })
}

pub fn linear(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, din, dout) = (
        rng.gen_range(1..5),
        rng.gen_range(1..6),
        rng.gen_range(1..6),
    );
    let mut store = ParamStore::new();
    let lin = Linear::new(&mut store, "l", din, dout, &mut rng);
    store
        .get_mut(lin.bias())
        .iter_mut()
        .for_each(|v| *v = rng.gen_range(-0.5..0.5));
    let x = random_tensor(&mut rng, &[n, din]);
    let r = random_tensor(&mut rng, &[n, dout]);
    let mut grads = Gradients::zeros_like(&store);
    let dx = lin.backward(&store, &x, &r, &mut grads).unwrap();
    compare(&mut store, &x, &grads, Some(&dx), |s, x| {
        dot(&r, &lin.forward(s, x).unwrap())
    })
}

/// ReLU, leaky ReLU and a fixed dropout mask composed in one check.
pub fn activations(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..20);
    // Keep samples away from the kink at zero.
    let x = random_tensor(&mut rng, &[n]).map(|v| if v.abs() < 1e-3 { 0.5 } else { v });
    let r = random_tensor(&mut rng, &[n]);
    let mask_seed = rng.gen::<u64>();
    let forward = |x: &Tensor| {
        let mut mrng = ChaCha8Rng::seed_from_u64(mask_seed);
        let (d, _) = dropout(&leaky_relu(x, 0.01), 0.5, true, &mut mrng).unwrap();
        relu(&d)
            .map(|v| v * 2.0)
            .data()
            .iter()
            .zip(d.data())
            .map(|(a, b)| a + b)
            .collect::<Vec<_>>()
    };
    let mut mrng = ChaCha8Rng::seed_from_u64(mask_seed);
    let l = leaky_relu(&x, 0.01);
    let (d, mask) = dropout(&l, 0.5, true, &mut mrng).unwrap();
    let y_relu = relu(&d);
    // objective = sum r * (2 relu(d) + d)
    let dd = relu_backward(&y_relu, &r.map(|v| 2.0 * v));
    let dd = Tensor::new(
        d.shape(),
        dd.data().iter().zip(r.data()).map(|(a, b)| a + b).collect(),
    )
    .unwrap();
    let dl = dropout_backward(&mask, &dd);
    let dx = leaky_relu_backward(&x, &dl, 0.01);
    let mut store = ParamStore::new();
    let grads = Gradients::zeros_like(&store);
    compare(&mut store, &x, &grads, Some(&dx), |_, x| {
        forward(x).iter().zip(r.data()).map(|(a, b)| a * b).sum()
    })
}

pub fn softmax_cross_entropy(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..8);
    let logits = random_tensor(&mut rng, &[n, 3]).map(|v| 3.0 * v);
    let labels: Vec<u8> = (0..n).map(|_| rng.gen_range(0..3)).collect();
    let weights: Vec<f64> = (0..3).map(|_| rng.gen_range(0.2..3.0)).collect();
    let dlogits = softmax_weighted_ce_backward(&softmax(&logits), &labels, &weights).unwrap();
    let mut store = ParamStore::new();
    let grads = Gradients::zeros_like(&store);
    compare(&mut store, &logits, &grads, Some(&dlogits), |_, x| {
        weighted_ce_loss(&softmax(x), &labels, &weights).unwrap()
    })
}

/// Whole network, tiny configuration, training mode with a fixed dropout mask.
pub fn full_model(seed: u64) -> f64 {
    let cfg = ModelConfig {
        seq_len: 12,
        mel_bins: 4,
        conv_channels: vec![2, 2, 2],
        pools: vec![(2, 1), (3, 2), (1, 2)],
        gru_hidden: 2,
        gru_layers: 2,
        head_hidden: 3,
        num_classes: 3,
        dropout: 0.5,
        se_reduction: 2,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = Model::new(cfg, seed).unwrap();
    let x = random_tensor(&mut rng, &[2, 12, 4]);
    let labels: Vec<u8> = (0..24).map(|_| rng.gen_range(0..3)).collect();
    let weights = [1.0, 0.5, 2.0];
    let (_, grads) = model
        .loss_and_gradients(&x, &labels, &weights, &mut ChaCha8Rng::seed_from_u64(77))
        .unwrap();
    let mut store = model.params().clone();
    let config = model.config().clone();
    compare(&mut store, &x, &grads, None, |s, x| {
        let mut m = Model::from_params(config.clone(), s).unwrap();
        m.loss_and_gradients(x, &labels, &weights, &mut ChaCha8Rng::seed_from_u64(77))
            .unwrap()
            .0
    })
}

/// Every layer check, by name.
pub const LAYERS: [(&str, fn(u64) -> f64); 8] = [
    ("conv2d", conv2d),
    ("batchnorm", batchnorm),
    ("squeeze_excitation", squeeze_excitation),
    ("avg_pool_and_mel_average", avg_pool),
    ("bigru_bptt", bigru),
    ("linear", linear),
    ("relu_leaky_dropout", activations),
    ("softmax_weighted_ce", softmax_cross_entropy),
];
