//! Oracles and check routines shared by the integration suites and the
//! acceptance target. Each `*_suite` returns a one-line summary or the first
//! failure it found.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stn_curriculum::curriculum::{plan_epoch, steps_at_epoch, CurriculumKind, CurriculumPlan, SchedulerKind};
use stn_curriculum::harness::{ClassifierConfig, ClassifierNet, ClassifierSpec};
use stn_curriculum::nnkit::{
    maxpool2x2, maxpool2x2_backward, relu, relu_backward, softmax_cross_entropy, Conv2d, ConvBlock, ConvGeometry,
    ImageClassifier, Linear, LstmCell, Param, Parameterized, Tensor,
};
use stn_curriculum::sstn::{policy_logit_gradient, train_bandit, BanditConfig, PolicyConfig, PolicyNet};
use stn_curriculum::transform::{apply_sequence, warp, Action, AffineTransform, ApplyMode, NUM_ACTIONS};
use stn_curriculum::{Affine64, Image};

pub type Check = Result<String, String>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------- transforms

pub const MATRIX_TOL: f64 = 1e-12;
pub const RANDOM_COMPOSITIONS: usize = 1000;
pub const MAX_COMPOSITION_LEN: usize = 40;
pub const CANVAS: usize = 80;

pub fn random_image(size: usize, rng: &mut impl Rng) -> Image<f32> {
    Image::square(size, (0..size * size).map(|_| rng.random::<f32>()).collect()).unwrap()
}

/// Content moved by whole pixels, zero fill.
pub fn shift_oracle(img: &Image<f32>, dx: isize, dy: isize) -> Image<f32> {
    let (w, h) = (img.width() as isize, img.height() as isize);
    let mut out = Image::zeros(img.width(), img.height());
    for y in 0..h {
        for x in 0..w {
            let (sx, sy) = (x - dx, y - dy);
            if (0..w).contains(&sx) && (0..h).contains(&sy) {
                out.set(x as usize, y as usize, img.get(sx as usize, sy as usize));
            }
        }
    }
    out
}

/// Content displacement of a pure translation action, in pixels.
pub fn action_shift(a: Action) -> Option<(isize, isize)> {
    match a {
        Action::TranslateUp4 => Some((0, -4)),
        Action::TranslateDown4 => Some((0, 4)),
        Action::TranslateLeft4 => Some((-4, 0)),
        Action::TranslateRight4 => Some((4, 0)),
        Action::Identity => Some((0, 0)),
        _ => None,
    }
}

fn mat(a: Action) -> Affine64 {
    a.to_matrix(CANVAS)
}

fn compose_all(actions: &[Action]) -> Affine64 {
    actions.iter().fold(AffineTransform::identity(), |acc, &a| acc.compose(&mat(a)))
}

fn compose_right(actions: &[Action]) -> Affine64 {
    actions.iter().rev().fold(AffineTransform::identity(), |acc, &a| mat(a).compose(&acc))
}

fn random_actions(len: usize, rng: &mut impl Rng) -> Vec<Action> {
    (0..len).map(|_| Action::ALL[rng.random_range(0..NUM_ACTIONS)]).collect()
}

/// Identity, inverse and associativity over every action and random words,
/// plus whole-pixel translations against the shift oracle.
pub fn transform_algebra_suite() -> Check {
    let id = Affine64::identity();
    if mat(Action::Identity) != id {
        return Err("identity action is not the identity matrix".into());
    }
    let mut r = rng(11);
    let img = random_image(CANVAS, &mut r);
    if warp(&img, &AffineTransform::<f32>::identity()) != img {
        return Err("identity warp changed pixels".into());
    }
    for a in Action::ALL {
        let m = mat(a);
        if !m.compose(&id).approx_eq(&m, MATRIX_TOL) || !id.compose(&m).approx_eq(&m, MATRIX_TOL) {
            return Err(format!("{a}: identity is not neutral"));
        }
        let inv = m.inverse().ok_or_else(|| format!("{a} is singular"))?;
        if !m.compose(&inv).approx_eq(&id, MATRIX_TOL) || !inv.compose(&m).approx_eq(&id, MATRIX_TOL) {
            return Err(format!("{a}: inverse does not cancel"));
        }
    }
    let pairs = [
        (Action::TranslateUp4, Action::TranslateDown4),
        (Action::TranslateLeft4, Action::TranslateRight4),
        (Action::RotateCW10, Action::RotateCCW10),
    ];
    for (a, b) in pairs {
        if !mat(a).compose(&mat(b)).approx_eq(&id, MATRIX_TOL) {
            return Err(format!("{a} then {b} is not the identity"));
        }
    }
    let mut triples = 0;
    for a in Action::ALL {
        for b in Action::ALL {
            for c in Action::ALL {
                let left = mat(a).compose(&mat(b)).compose(&mat(c));
                let right = mat(a).compose(&mat(b).compose(&mat(c)));
                if !left.approx_eq(&right, MATRIX_TOL) {
                    return Err(format!("({a}∘{b})∘{c} differs from {a}∘({b}∘{c})"));
                }
                triples += 1;
            }
        }
    }
    let mut worst: f64 = 0.0;
    for _ in 0..RANDOM_COMPOSITIONS {
        let len = r.random_range(1..=MAX_COMPOSITION_LEN);
        let w = random_actions(len, &mut r);
        let split = r.random_range(0..=len);
        let left = compose_all(&w);
        let right = compose_right(&w);
        let grouped = compose_all(&w[..split]).compose(&compose_all(&w[split..]));
        let inv = left.inverse().ok_or("random word is singular")?;
        let inv_rev = w.iter().rev().fold(AffineTransform::identity(), |acc: Affine64, &a| {
            acc.compose(&mat(a).inverse().unwrap())
        });
        worst = worst
            .max(left.max_abs_diff(&right))
            .max(left.max_abs_diff(&grouped))
            .max(inv.max_abs_diff(&inv_rev))
            .max(left.compose(&inv).max_abs_diff(&id));
    }
    // Forty ×1.2 zooms reach entries of ~1e3, so the tolerance is relative.
    if worst > 1e-9 {
        return Err(format!("random compositions disagree by {worst:e}"));
    }
    let shifts = integer_shift_exactness(&mut r)?;
    Ok(format!(
        "8 actions, {triples} triples, {RANDOM_COMPOSITIONS} random words (worst {worst:.1e}), {shifts} shift warps bit-exact"
    ))
}

fn integer_shift_exactness(r: &mut impl Rng) -> Result<usize, String> {
    let mut n = 0;
    for trial in 0..20 {
        let img = random_image(CANVAS, r);
        for a in Action::ALL {
            let Some((dx, dy)) = action_shift(a) else { continue };
            if apply_sequence(&img, &[a], ApplyMode::Stepwise) != shift_oracle(&img, dx, dy) {
                return Err(format!("{a} warp is not the {dx},{dy} pixel shift (trial {trial})"));
            }
            n += 1;
        }
        let len = r.random_range(1..=12);
        let word: Vec<Action> = (0..len).map(|_| Action::ALL[[0, 1, 2, 3, 7][r.random_range(0..5)]]).collect();
        let (dx, dy) = word.iter().fold((0, 0), |(x, y), &a| {
            let (sx, sy) = action_shift(a).unwrap();
            (x + sx, y + sy)
        });
        let want = shift_oracle(&img, dx, dy);
        if apply_sequence(&img, &word, ApplyMode::Composed) != want {
            return Err(format!("composed translation word {word:?} is not bit-exact"));
        }
        n += 1;
        let px = r.random_range(-9..=9i64) as isize;
        let py = r.random_range(-9..=9i64) as isize;
        let t = AffineTransform::<f32>::from_f64([
            [1.0, 0.0, -2.0 * px as f64 / CANVAS as f64],
            [0.0, 1.0, -2.0 * py as f64 / CANVAS as f64],
        ]);
        if warp(&img, &t) != shift_oracle(&img, px, py) {
            return Err(format!("translation by {px},{py} px is not bit-exact"));
        }
        n += 1;
    }
    Ok(n)
}

// ------------------------------------------------------------------ gradients

pub const FD_EPS: f64 = 1e-6;
pub const FD_REL_TOL: f64 = 1e-3;
/// Gradients below this magnitude are compared absolutely.
pub const FD_FLOOR: f64 = 1e-6;
pub const FD_COORDS_PER_TENSOR: usize = 16;
pub const SHAPES_PER_LAYER: usize = 20;

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FD_FLOOR)
}

fn sample_coords(len: usize, r: &mut impl Rng) -> Vec<usize> {
    if len <= FD_COORDS_PER_TENSOR {
        (0..len).collect()
    } else {
        (0..FD_COORDS_PER_TENSOR).map(|_| r.random_range(0..len)).collect()
    }
}

fn rand_tensor(shape: &[usize], r: &mut impl Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| r.random_range(-1.0..1.0))
}

fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// Worst relative error of `analytic` against central differences of `loss`
/// taken by perturbing `x` in place.
fn fd_tensor(x: &mut Tensor<f64>, analytic: &Tensor<f64>, r: &mut impl Rng, loss: &mut dyn FnMut(&Tensor<f64>) -> f64) -> f64 {
    let mut worst: f64 = 0.0;
    for i in sample_coords(x.len(), r) {
        let orig = x.data()[i];
        x.data_mut()[i] = orig + FD_EPS;
        let lp = loss(x);
        x.data_mut()[i] = orig - FD_EPS;
        let lm = loss(x);
        x.data_mut()[i] = orig;
        worst = worst.max(rel_err(analytic.data()[i], (lp - lm) / (2.0 * FD_EPS)));
    }
    worst
}

/// Same for every parameter of a model; gradients must already be accumulated.
fn fd_params<M: Parameterized<f64>>(model: &mut M, r: &mut impl Rng, loss: &dyn Fn(&M) -> f64) -> f64 {
    let grads: Vec<Tensor<f64>> = model.params().iter().map(|(_, p)| p.grad.clone()).collect();
    let mut worst: f64 = 0.0;
    for (pi, g) in grads.iter().enumerate() {
        for i in sample_coords(g.len(), r) {
            let orig = model.params_mut()[pi].value.data()[i];
            model.params_mut()[pi].value.data_mut()[i] = orig + FD_EPS;
            let lp = loss(model);
            model.params_mut()[pi].value.data_mut()[i] = orig - FD_EPS;
            let lm = loss(model);
            model.params_mut()[pi].value.data_mut()[i] = orig;
            worst = worst.max(rel_err(g.data()[i], (lp - lm) / (2.0 * FD_EPS)));
        }
    }
    worst
}

struct ConvNet(Conv2d<f64>);
struct LinearNet(Linear<f64>);
struct LstmNet(LstmCell<f64>);
struct BlockNet(ConvBlock<f64>);

impl Parameterized<f64> for ConvNet {
    fn params(&self) -> Vec<(String, &Param<f64>)> {
        vec![("w".into(), &self.0.weight), ("b".into(), &self.0.bias)]
    }
    fn params_mut(&mut self) -> Vec<&mut Param<f64>> {
        vec![&mut self.0.weight, &mut self.0.bias]
    }
}

impl Parameterized<f64> for LinearNet {
    fn params(&self) -> Vec<(String, &Param<f64>)> {
        vec![("w".into(), &self.0.weight), ("b".into(), &self.0.bias)]
    }
    fn params_mut(&mut self) -> Vec<&mut Param<f64>> {
        vec![&mut self.0.weight, &mut self.0.bias]
    }
}

impl Parameterized<f64> for LstmNet {
    fn params(&self) -> Vec<(String, &Param<f64>)> {
        vec![("wi".into(), &self.0.w_input), ("wh".into(), &self.0.w_hidden), ("b".into(), &self.0.bias)]
    }
    fn params_mut(&mut self) -> Vec<&mut Param<f64>> {
        vec![&mut self.0.w_input, &mut self.0.w_hidden, &mut self.0.bias]
    }
}

impl Parameterized<f64> for BlockNet {
    fn params(&self) -> Vec<(String, &Param<f64>)> {
        vec![("w".into(), &self.0.conv.weight), ("b".into(), &self.0.conv.bias)]
    }
    fn params_mut(&mut self) -> Vec<&mut Param<f64>> {
        vec![&mut self.0.conv.weight, &mut self.0.conv.bias]
    }
}

/// Worst error over [`SHAPES_PER_LAYER`] random instances of one layer.
pub type LayerCheck = fn(u64) -> f64;

pub fn grad_conv(seed: u64) -> f64 {
    let r = &mut rng(seed);
    let (n, c, o) = (r.random_range(1..=2), r.random_range(1..=3), r.random_range(1..=4));
    let k = r.random_range(1..=3);
    let g = ConvGeometry::new(r.random_range(1..=2), r.random_range(0..=k / 2 + 1));
    let (h, w) = (r.random_range(k..=k + 6), r.random_range(k..=k + 6));
    let mut net = ConvNet(Conv2d::new(c, o, k, g, r));
    net.0.bias.value = rand_tensor(&[o], r);
    let mut x = rand_tensor(&[n, c, h, w], r);
    let y = net.0.forward(&x).unwrap();
    let rw = rand_tensor(y.shape(), r);
    let gx = net.0.backward(&x, &rw, true).unwrap().unwrap();
    let w1 = fd_params(&mut net, r, &|m: &ConvNet| dot(&m.0.forward(&x).unwrap(), &rw));
    let w2 = fd_tensor(&mut x, &gx, r, &mut |x| dot(&net.0.forward(x).unwrap(), &rw));
    w1.max(w2)
}

pub fn grad_linear(seed: u64) -> f64 {
    let r = &mut rng(seed);
    let (n, i, o) = (r.random_range(1..=4), r.random_range(1..=9), r.random_range(1..=7));
    let mut net = LinearNet(Linear::new(i, o, r));
    net.0.bias.value = rand_tensor(&[o], r);
    let mut x = rand_tensor(&[n, i], r);
    let rw = rand_tensor(&[n, o], r);
    let gx = net.0.backward(&x, &rw).unwrap();
    let w1 = fd_params(&mut net, r, &|m: &LinearNet| dot(&m.0.forward(&x).unwrap(), &rw));
    let w2 = fd_tensor(&mut x, &gx, r, &mut |x| dot(&net.0.forward(x).unwrap(), &rw));
    w1.max(w2)
}

pub fn grad_relu(seed: u64) -> f64 {
    let r = &mut rng(seed);
    let shape = [r.random_range(1..=3), r.random_range(1..=12)];
    // Keep inputs away from the kink at 0.
    let mut x = Tensor::from_fn(&shape, |_| {
        let v: f64 = r.random_range(0.01..1.0);
        if r.random::<bool>() {
            v
        } else {
            -v
        }
    });
    let rw = rand_tensor(&shape, r);
    let gx = relu_backward(&relu(&x), &rw).unwrap();
    fd_tensor(&mut x, &gx, r, &mut |x| dot(&relu(x), &rw))
}

pub fn grad_maxpool(seed: u64) -> f64 {
    let r = &mut rng(seed);
    let shape = [r.random_range(1..=2), r.random_range(1..=3), r.random_range(2..=7), r.random_range(2..=7)];
    let mut x = rand_tensor(&shape, r);
    let (y, arg) = maxpool2x2(&x).unwrap();
    let rw = rand_tensor(y.shape(), r);
    let gx = maxpool2x2_backward(&arg, &rw, &shape).unwrap();
    fd_tensor(&mut x, &gx, r, &mut |x| dot(&maxpool2x2(x).unwrap().0, &rw))
}

pub fn grad_softmax_ce(seed: u64) -> f64 {
    let r = &mut rng(seed);
    let (n, c) = (r.random_range(1..=5), r.random_range(2..=10));
    let mut z = Tensor::from_fn(&[n, c], |_| r.random_range(-3.0..3.0));
    let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..c)).collect();
    let ce = softmax_cross_entropy(&z, &labels).unwrap();
    fd_tensor(&mut z, &ce.grad, r, &mut |z| softmax_cross_entropy(z, &labels).unwrap().loss)
}

pub const LSTM_UNROLL: usize = 5;

/// Loss over an unrolled sequence: `Σ_t ⟨h_t, R_t⟩ + ⟨c_T, R_c⟩`.
fn lstm_loss(cell: &LstmCell<f64>, xs: &[Tensor<f64>], h0: &Tensor<f64>, c0: &Tensor<f64>, rh: &[Tensor<f64>], rc: &Tensor<f64>) -> f64 {
    let (mut h, mut c) = (h0.clone(), c0.clone());
    let mut l = 0.0;
    for (x, rw) in xs.iter().zip(rh) {
        let (h2, c2, _) = cell.step(x, &h, &c).unwrap();
        l += dot(&h2, rw);
        h = h2;
        c = c2;
    }
    l + dot(&c, rc)
}

pub fn grad_lstm(seed: u64) -> f64 {
    let r = &mut rng(seed);
    let (n, i, hd) = (r.random_range(1..=3), r.random_range(1..=5), r.random_range(1..=5));
    let mut net = LstmNet(LstmCell::new(i, hd, r));
    net.0.bias.value = rand_tensor(&[4 * hd], r);
    let mut xs: Vec<Tensor<f64>> = (0..LSTM_UNROLL).map(|_| rand_tensor(&[n, i], r)).collect();
    let mut h0 = rand_tensor(&[n, hd], r);
    let mut c0 = rand_tensor(&[n, hd], r);
    let rh: Vec<Tensor<f64>> = (0..LSTM_UNROLL).map(|_| rand_tensor(&[n, hd], r)).collect();
    let rc = rand_tensor(&[n, hd], r);

    let (mut h, mut c) = (h0.clone(), c0.clone());
    let mut caches = Vec::new();
    for x in &xs {
        let (h2, c2, cache) = net.0.step(x, &h, &c).unwrap();
        caches.push(cache);
        h = h2;
        c = c2;
    }
    let mut dh = Tensor::zeros(&[n, hd]);
    let mut dc = rc.clone();
    let mut dxs = vec![Tensor::zeros(&[n, i]); LSTM_UNROLL];
    for t in (0..LSTM_UNROLL).rev() {
        dh.add_assign(&rh[t]).unwrap();
        let b = net.0.backward_step(&caches[t], &dh, &dc).unwrap();
        dxs[t] = b.input;
        dh = b.h_prev;
        dc = b.c_prev;
    }
    let mut worst = fd_params(&mut net, r, &|m: &LstmNet| lstm_loss(&m.0, &xs, &h0, &c0, &rh, &rc));
    let t = r.random_range(0..LSTM_UNROLL);
    let mut xt = xs[t].clone();
    worst = worst.max(fd_tensor(&mut xt, &dxs[t], r, &mut |x| {
        let mut v = xs.clone();
        v[t] = x.clone();
        lstm_loss(&net.0, &v, &h0, &c0, &rh, &rc)
    }));
    xs[t] = xt;
    let h0c = h0.clone();
    worst = worst.max(fd_tensor(&mut h0, &dh, r, &mut |h| lstm_loss(&net.0, &xs, h, &c0, &rh, &rc)));
    worst.max(fd_tensor(&mut c0, &dc, r, &mut |c| lstm_loss(&net.0, &xs, &h0c, c, &rh, &rc)))
}

pub fn grad_conv_block(seed: u64) -> f64 {
    let r = &mut rng(seed);
    let (n, c, o) = (r.random_range(1..=2), r.random_range(1..=3), r.random_range(1..=4));
    let k = [1, 3, 5][r.random_range(0..3)];
    let g = ConvGeometry::new(r.random_range(1..=2), k / 2);
    let side = r.random_range(k.max(4)..=k + 8);
    let mut net = BlockNet(ConvBlock::new(c, o, k, g, r));
    net.0.conv.bias.value = rand_tensor(&[o], r);
    let mut x = rand_tensor(&[n, c, side, side], r);
    let (y, cache) = net.0.forward(&x).unwrap();
    let rw = rand_tensor(y.shape(), r);
    let gx = net.0.backward(&cache, &rw, true).unwrap().unwrap();
    let w1 = fd_params(&mut net, r, &|m: &BlockNet| dot(&m.0.infer(&x).unwrap(), &rw));
    let w2 = fd_tensor(&mut x, &gx, r, &mut |x| dot(&net.0.infer(x).unwrap(), &rw));
    w1.max(w2)
}

pub const POLICY_UNROLL: usize = 3;

fn policy_loss(p: &PolicyNet<f64>, xs: &[Tensor<f64>], rw: &[Tensor<f64>]) -> f64 {
    let mut state = p.initial_state(xs[0].dim(0));
    let mut l = 0.0;
    for (x, w) in xs.iter().zip(rw) {
        let (logits, next) = p.step(x, &state).unwrap();
        l += dot(&logits, w);
        state = next;
    }
    l
}

/// Backpropagation through time of the whole policy over a few steps.
pub fn grad_policy(seed: u64) -> f64 {
    let r = &mut rng(seed);
    let cfg = PolicyConfig {
        canvas_size: r.random_range(8..=12),
        channels: vec![r.random_range(1..=3), r.random_range(1..=3)],
        kernel: 3,
        first_stride: r.random_range(1..=2),
        hidden: r.random_range(2..=5),
    };
    let s = cfg.canvas_size;
    let mut p = PolicyNet::<f64>::new(cfg, r).unwrap();
    let n = r.random_range(1..=2);
    let xs: Vec<Tensor<f64>> = (0..POLICY_UNROLL).map(|_| rand_tensor(&[n, 1, s, s], r)).collect();
    let rw: Vec<Tensor<f64>> = (0..POLICY_UNROLL).map(|_| rand_tensor(&[n, NUM_ACTIONS], r)).collect();
    let mut state = p.initial_state(n);
    let mut caches = Vec::new();
    for x in &xs {
        let (_, next, cache) = p.step_train(x, &state).unwrap();
        caches.push(cache);
        state = next;
    }
    p.backward(&caches, &rw).unwrap();
    fd_params(&mut p, r, &|m: &PolicyNet<f64>| policy_loss(m, &xs, &rw))
}

pub fn grad_classifier(seed: u64) -> f64 {
    let r = &mut rng(seed);
    let spec = if r.random::<bool>() { ClassifierSpec::LeNet1 } else { ClassifierSpec::LeNet2 };
    let cfg = ClassifierConfig {
        spec,
        canvas_size: r.random_range(10..=16),
        kernel: [3, 5][r.random_range(0..2)],
        first_stride: r.random_range(1..=2),
        hidden: r.random_range(3..=8),
        classes: 10,
    };
    let s = cfg.canvas_size;
    let mut net = ClassifierNet::<f64>::new(cfg, r).unwrap();
    let n = r.random_range(1..=3);
    let x = Tensor::from_fn(&[n, 1, s, s], |_| r.random::<f64>());
    let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..10)).collect();
    net.accumulate_gradients(&x, &labels).unwrap();
    fd_params(&mut net, r, &|m: &ClassifierNet<f64>| {
        softmax_cross_entropy(&m.logits(&x).unwrap(), &labels).unwrap().loss
    })
}

pub const LAYER_CHECKS: [(&str, LayerCheck); 9] = [
    ("conv2d", grad_conv),
    ("linear", grad_linear),
    ("relu", grad_relu),
    ("maxpool2x2", grad_maxpool),
    ("softmax cross-entropy", grad_softmax_ce),
    ("lstm (5-step unroll)", grad_lstm),
    ("conv block", grad_conv_block),
    ("policy (BPTT)", grad_policy),
    ("classifier", grad_classifier),
];

/// Worst error of a layer over its random shapes.
pub fn layer_worst(check: LayerCheck, base_seed: u64) -> f64 {
    (0..SHAPES_PER_LAYER as u64).map(|i| check(base_seed * 1000 + i)).fold(0.0, f64::max)
}

pub fn gradient_suite() -> Check {
    let mut parts = Vec::new();
    for (i, (name, check)) in LAYER_CHECKS.iter().enumerate() {
        let worst = layer_worst(*check, i as u64 + 1);
        if !(worst < FD_REL_TOL) {
            return Err(format!("{name}: relative error {worst:.2e} ≥ {FD_REL_TOL:e}"));
        }
        parts.push(format!("{name} {worst:.0e}"));
    }
    Ok(format!("{SHAPES_PER_LAYER} shapes per layer; worst rel. error: {}", parts.join(", ")))
}

// ----------------------------------------------------------------- reinforce

pub const BANDIT_TARGET: f64 = 0.95;
pub const BANDIT_EPISODES: usize = 2000;
pub const UNBIASED_EPISODES: usize = 10_000;
pub const UNBIASED_SE: f64 = 3.0;

pub fn bandit_check() -> Check {
    let mut worst = 0;
    for seed in 0..5 {
        let run = train_bandit(&BanditConfig { seed, episodes: BANDIT_EPISODES, ..BanditConfig::default() })
            .map_err(|e| e.to_string())?;
        let reached = run
            .episodes_to_reach(0, BANDIT_TARGET)
            .ok_or_else(|| format!("seed {seed}: optimal arm at {:.3} after {BANDIT_EPISODES}", run.final_probs()[0]))?;
        if run.final_probs()[0] < BANDIT_TARGET {
            return Err(format!("seed {seed}: optimal arm fell back to {:.3}", run.final_probs()[0]));
        }
        worst = worst.max(reached);
    }
    Ok(format!("optimal arm ≥ {BANDIT_TARGET} within {worst} episodes (5 seeds)"))
}

/// Norm of the mean deviation of the score-function estimate from the exact
/// gradient `∂J/∂z_k = p_k (r_k − J)`, in units of its standard error
/// `sqrt(tr Σ / n)`. Actions are drawn from `sample` while the estimate uses
/// `p`; the two differ only in the negative control.
fn gradient_bias_in_se(p: &[f64], sample: &[f64], rewards: &[f64], r: &mut ChaCha8Rng) -> f64 {
    let k = p.len();
    let j: f64 = p.iter().zip(rewards).map(|(p, r)| p * r).sum();
    let oracle: Vec<f64> = (0..k).map(|i| p[i] * (rewards[i] - j)).collect();
    let mut sum = vec![0.0; k];
    let mut sq = vec![0.0; k];
    for _ in 0..UNBIASED_EPISODES {
        let u: f64 = r.random();
        let mut a = k - 1;
        let mut acc = 0.0;
        for (i, &pi) in sample.iter().enumerate() {
            acc += pi;
            if u < acc {
                a = i;
                break;
            }
        }
        // The loss gradient is the negated ascent direction.
        let g = policy_logit_gradient(p, a, rewards[a] - j, 0.0);
        for i in 0..k {
            let d = -g[i] - oracle[i];
            sum[i] += d;
            sq[i] += d * d;
        }
    }
    let n = UNBIASED_EPISODES as f64;
    let mut norm2 = 0.0;
    let mut trace = 0.0;
    for i in 0..k {
        let mean = sum[i] / n;
        norm2 += mean * mean;
        trace += (sq[i] / n - mean * mean) * n / (n - 1.0);
    }
    norm2.sqrt() / (trace / n).sqrt()
}

fn softmax64(logits: &[f64]) -> Vec<f64> {
    let z_max = logits.iter().copied().fold(f64::MIN, f64::max);
    let e: Vec<f64> = logits.iter().map(|z| (z - z_max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// With the exact baseline `J = Σ p_k r_k` the mean estimate must lie within
/// `UNBIASED_SE` standard errors of the exact gradient. An estimator fed
/// actions from the wrong policy must not.
pub fn unbiasedness_check() -> Check {
    let rewards = [0.9, 0.1, 0.4, 0.0, 1.0, 0.3, 0.55, 0.2];
    let uniform = softmax64(&[0.0; 8]);
    let skewed = softmax64(&[0.5, -1.0, 0.2, 0.0, -0.3, 1.1, 0.0, -0.6]);
    let mut r = rng(2024);
    let mut worst: f64 = 0.0;
    for (label, p) in [("uniform", &uniform), ("skewed", &skewed)] {
        let z = gradient_bias_in_se(p, p, &rewards, &mut r);
        if !(z < UNBIASED_SE) {
            return Err(format!("{label} policy: mean gradient is {z:.2} SE from the exact gradient"));
        }
        worst = worst.max(z);
    }
    let control = gradient_bias_in_se(&skewed, &uniform, &rewards, &mut r);
    if control < UNBIASED_SE {
        return Err(format!("off-policy control only {control:.2} SE off; the check has no power"));
    }
    Ok(format!("{UNBIASED_EPISODES} episodes per policy, deviation ≤ {worst:.2} SE (off-policy control {control:.1} SE)"))
}

pub fn reinforce_suite() -> Check {
    let a = bandit_check()?;
    let b = unbiasedness_check()?;
    Ok(format!("{a}; {b}"))
}

// ----------------------------------------------------------------- schedules

pub const SCHEDULE_STEPS: [usize; 5] = [1, 10, 20, 40, 64];

pub fn schedulers() -> Vec<SchedulerKind> {
    vec![
        SchedulerKind::Linear { epochs_per_step: 5 },
        SchedulerKind::Linear { epochs_per_step: 1 },
        SchedulerKind::Cosine { horizon: None },
        SchedulerKind::Cosine { horizon: Some(37) },
        SchedulerKind::Exponential { tau: 30.0 },
        SchedulerKind::Exponential { tau: 3.0 },
    ]
}

pub fn scheduler_suite() -> Check {
    for s in schedulers() {
        for t in SCHEDULE_STEPS {
            let horizon = s.decay_epochs(t);
            if steps_at_epoch(s, 0, t) != t {
                return Err(format!("{s} with T={t} does not start at T"));
            }
            let mut prev = t;
            for e in 0..horizon + 50 {
                let v = steps_at_epoch(s, e, t);
                if v > prev {
                    return Err(format!("{s} with T={t} increases at epoch {e}"));
                }
                if e >= horizon && v != 0 {
                    return Err(format!("{s} with T={t} is {v} after its horizon {horizon}"));
                }
                prev = v;
            }
            if horizon > 0 && steps_at_epoch(s, horizon - 1, t) == 0 {
                return Err(format!("{s} with T={t}: horizon {horizon} is not the first zero"));
            }
        }
    }
    let lin = SchedulerKind::Linear { epochs_per_step: 5 };
    let want = [(0, 20), (4, 20), (5, 19), (10, 18), (99, 1), (100, 0)];
    for (e, v) in want {
        let got = steps_at_epoch(lin, e, 20);
        if got != v {
            return Err(format!("linear T=20: epoch {e} gives {got}, expected {v}"));
        }
    }
    for e in 0..200 {
        let got = steps_at_epoch(lin, e, 20);
        if got != 20usize.saturating_sub(e / 5) {
            return Err(format!("linear T=20 departs from one-per-five-epochs at epoch {e}"));
        }
    }
    Ok(format!("{} schedulers × T ∈ {SCHEDULE_STEPS:?}; linear T=20 hits 20/19/0 at epochs 0/5/100", schedulers().len()))
}

// --------------------------------------------------------- batch composition

pub const BATCH: usize = 64;

fn check_epoch_cover(batches: &[Vec<stn_curriculum::curriculum::BatchItem>], n: usize) -> Result<(), String> {
    let mut seen = vec![0u32; n];
    for b in batches {
        for it in b {
            seen[it.index] += 1;
        }
    }
    match seen.iter().position(|&c| c != 1) {
        Some(i) => Err(format!("index {i} used {} times", seen[i])),
        None => Ok(()),
    }
}

pub fn batch_composition_suite() -> Check {
    let mut r = rng(5);
    let n = 64 * 12 + 17;
    for k in [4, 8, 16, 32] {
        let plan = CurriculumPlan::new(CurriculumKind::MixedFixed { easy_per_batch: k }, 10, BATCH, 30).map_err(|e| e.to_string())?;
        for epoch in [0, 7, 29] {
            let batches = plan_epoch(&plan, epoch, n, &mut r);
            check_epoch_cover(&batches, n)?;
            for b in &batches[..batches.len() - 1] {
                let easy = b.iter().filter(|it| it.is_easy()).count();
                if b.len() != BATCH || easy != k {
                    return Err(format!("mixed k={k}: batch of {} has {easy} easy", b.len()));
                }
                if b.iter().any(|it| it.is_easy() && it.prefix != 10) {
                    return Err(format!("mixed k={k}: easy item not at prefix T"));
                }
            }
        }
    }
    let plan = CurriculumPlan::new(CurriculumKind::MixedDynamic { rate: 1.0 }, 10, BATCH, 80).map_err(|e| e.to_string())?;
    let mut prev = BATCH + 1;
    for epoch in 0..80 {
        let batches = plan_epoch(&plan, epoch, n, &mut r);
        check_epoch_cover(&batches, n)?;
        let easy = batches[0].iter().filter(|it| it.is_easy()).count();
        let want = BATCH.saturating_sub(epoch);
        if easy != want || easy > prev {
            return Err(format!("dynamic rate 1: epoch {epoch} has {easy} easy, expected {want}"));
        }
        prev = easy;
    }
    if plan.original_from() != Some(BATCH) {
        return Err(format!("dynamic rate 1 turns original at {:?}, expected {BATCH}", plan.original_from()));
    }
    let sched = SchedulerKind::Linear { epochs_per_step: 2 };
    let plan = CurriculumPlan::new(CurriculumKind::Incremental { scheduler: sched }, 10, BATCH, 30).map_err(|e| e.to_string())?;
    for epoch in 0..30 {
        let batches = plan_epoch(&plan, epoch, n, &mut r);
        check_epoch_cover(&batches, n)?;
        let t = steps_at_epoch(sched, epoch, 10);
        if batches.iter().flatten().any(|it| it.prefix != t) {
            return Err(format!("incremental: epoch {epoch} not uniformly at prefix {t}"));
        }
    }
    let plan = CurriculumPlan::baseline(BATCH, 5);
    let batches = plan_epoch(&plan, 0, n, &mut r);
    check_epoch_cover(&batches, n)?;
    if batches.iter().flatten().any(|it| it.is_easy()) {
        return Err("baseline batch holds transformed items".into());
    }
    Ok("mixed k ∈ {4,8,16,32} exact per full batch; dynamic 64→0 over 64 epochs; every index once per epoch".into())
}

// ---------------------------------------------------------------- dataset io

/// IDX root holding `mnist/` and `fashion/`; `STN_DATA_DIR` overrides.
pub fn data_dir() -> std::path::PathBuf {
    std::env::var_os("STN_DATA_DIR")
        .map(Into::into)
        .unwrap_or_else(|| std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data"))
}

/// First `n` cluttered test canvases of MNIST.
pub fn cluttered_mnist(n: usize) -> stn_curriculum::data::ClutteredDataset {
    use stn_curriculum::data::{synthesize_cluttered, ClutterConfig, RawDataset, Split};
    let raw = RawDataset::load(&data_dir().join("mnist"), Split::Test).expect("MNIST IDX files").truncate(n);
    synthesize_cluttered(&raw, "mnist", &ClutterConfig::with_seed(0)).unwrap()
}

pub const ROUND_TRIP_MAE: f32 = 0.02;
pub const ROUND_TRIP_IMAGES: usize = 20;
pub const CENTRAL: usize = 60;

/// Mean absolute error over the central `CENTRAL`×`CENTRAL` window.
pub fn central_mae(a: &Image<f32>, b: &Image<f32>) -> f32 {
    let off = (a.width() - CENTRAL) / 2;
    let mut s = 0.0;
    for y in off..off + CENTRAL {
        for x in off..off + CENTRAL {
            s += (a.get(x, y) - b.get(x, y)).abs();
        }
    }
    s / (CENTRAL * CENTRAL) as f32
}

/// Worst central error of a clockwise-then-counter-clockwise round trip.
pub fn rotation_round_trip() -> Result<f32, String> {
    let ds = cluttered_mnist(ROUND_TRIP_IMAGES);
    let mut worst: f32 = 0.0;
    for (i, img) in ds.images.iter().enumerate() {
        for pair in [[Action::RotateCW10, Action::RotateCCW10], [Action::RotateCCW10, Action::RotateCW10]] {
            let back = apply_sequence(img, &pair, ApplyMode::Stepwise);
            let e = central_mae(img, &back);
            if !(e < ROUND_TRIP_MAE) {
                return Err(format!("image {i}: round trip error {e:.4}"));
            }
            worst = worst.max(e);
        }
    }
    Ok(worst)
}

/// Mean absolute pixel gap between stepwise and composed application of
/// random words of `len` actions.
pub fn stepwise_composed_gap(len: usize, words: usize) -> f32 {
    let ds = cluttered_mnist(words);
    let mut r = rng(77);
    let mut total = 0.0;
    for img in &ds.images {
        let w = random_actions(len, &mut r);
        let a = apply_sequence(img, &w, ApplyMode::Stepwise);
        let b = apply_sequence(img, &w, ApplyMode::Composed);
        total += a.pixels().iter().zip(b.pixels()).map(|(x, y)| (x - y).abs()).sum::<f32>() / a.pixels().len() as f32;
    }
    total / words as f32
}
