//! Finite-difference checks of every hand-written backward pass, from single
//! layers up to the full actor and critic chains.

use ndarray::s;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::policy::{clamp_rows, clamp_rows_backward, split_columns};
use super::{GoalSignal, Networks, PolicyConfig};
use crate::nn::{grad_check, hcat, init_uniform, zeros_like, Activation, Dense, GradCheckReport, LstmCell, Mat, Mlp};

#[derive(Debug, Clone)]
pub struct GradientSuiteReport {
    pub checks: Vec<(String, GradCheckReport)>,
}

impl GradientSuiteReport {
    pub fn max_rel_err(&self) -> f64 {
        self.checks.iter().map(|(_, r)| r.max_rel_err).fold(0.0, f64::max)
    }

    pub fn passed(&self, tol: f64) -> bool {
        self.checks.iter().all(|(_, r)| r.max_rel_err < tol)
    }
}

fn weighted_sum(y: &Mat, w: &Mat) -> f64 {
    (y * w).sum()
}

fn dense_check(rng: &mut ChaCha8Rng, act: Activation) -> GradCheckReport {
    let layer = Dense::new(5, 4, rng);
    let x = init_uniform(3, 5, 1.0, rng);
    let w = init_uniform(3, 4, 1.0, rng);
    let loss = |d: &Dense| weighted_sum(&act.forward(&d.forward(&x).unwrap()), &w);
    let y = act.forward(&layer.forward(&x).unwrap());
    let dy = act.backward(&y, &w).unwrap();
    let (_, grads) = layer.backward(&x, &dy).unwrap();
    grad_check(&layer, &grads, loss)
}

fn lstm_check(rng: &mut ChaCha8Rng) -> GradCheckReport {
    let cell = LstmCell::new(3, 4, rng);
    let xs: Vec<Mat> = (0..4).map(|_| init_uniform(2, 3, 1.0, rng)).collect();
    let w = init_uniform(2, 4, 1.0, rng);
    let loss = |c: &LstmCell| weighted_sum(&c.forward_sequence(&xs).unwrap(), &w);
    let (_, cache) = cell.forward_sequence_cached(&xs).unwrap();
    let mut grads = zeros_like(&cell);
    cell.backward_sequence_into(&cache, &w, &mut grads).unwrap();
    grad_check(&cell, &grads, loss)
}

fn small_config() -> PolicyConfig {
    PolicyConfig {
        n_rays: 5,
        k_stack: 4,
        lstm_hidden: 4,
        mlp_hidden: vec![6, 5],
        v_max: 2.0,
        depth_cap: 5.0,
        goal_signal: GoalSignal::UnitVector,
    }
}

struct Inputs {
    xs: Vec<Mat>,
    aux: Mat,
    a: Mat,
}

fn inputs(cfg: &PolicyConfig, rng: &mut ChaCha8Rng) -> Inputs {
    let b = 3;
    Inputs {
        xs: (0..cfg.k_stack).map(|_| init_uniform(b, cfg.n_rays, 1.0, rng)).collect(),
        aux: init_uniform(b, cfg.aux_dim(), 1.0, rng),
        a: init_uniform(b, 2, 0.7, rng),
    }
}

/// Encoder -> actor -> norm clamp, differentiated into all of them.
fn actor_chain_check(rng: &mut ChaCha8Rng) -> GradCheckReport {
    let cfg = small_config();
    let mut net = Networks::new(&cfg, rng);
    // Saturate the head a little so some rows hit the norm clamp.
    net.actor.layers.last_mut().unwrap().b.fill(0.9);
    let inp = inputs(&cfg, rng);
    let w = init_uniform(3, 2, 1.0, rng);
    let loss = |n: &Networks| weighted_sum(&n.act(&n.embed(&inp.xs, &inp.aux).unwrap()).unwrap(), &w);

    let (emb, enc_cache) = net.embed_cached(&inp.xs, &inp.aux).unwrap();
    let (u, actor_cache) = net.actor.forward_cached(&emb).unwrap();
    let du = clamp_rows_backward(&u, &w);
    let mut grads = zeros_like(&net);
    let d_emb = net.actor.backward_into(&actor_cache, &du, &mut grads.actor).unwrap();
    let d_h = split_columns(&d_emb, 0..cfg.lstm_hidden);
    net.encoder
        .backward_sequence_into(&enc_cache, &d_h, &mut grads.encoder)
        .unwrap();
    debug_assert!(clamp_rows(&u).iter().all(|v| v.is_finite()));
    grad_check(&net, &grads, loss)
}

/// Encoder -> critic on `[embedding, action]`, differentiated into both.
fn critic_chain_check(rng: &mut ChaCha8Rng) -> GradCheckReport {
    let cfg = small_config();
    let net = Networks::new(&cfg, rng);
    let inp = inputs(&cfg, rng);
    let w = init_uniform(3, 1, 1.0, rng);
    let loss = |n: &Networks| weighted_sum(&n.q(&n.embed(&inp.xs, &inp.aux).unwrap(), &inp.a).unwrap(), &w);

    let (emb, enc_cache) = net.embed_cached(&inp.xs, &inp.aux).unwrap();
    let (_, critic_cache) = net.critic.forward_cached(&hcat(&[&emb, &inp.a]).unwrap()).unwrap();
    let mut grads = zeros_like(&net);
    let d_in = net.critic.backward_into(&critic_cache, &w, &mut grads.critic).unwrap();
    let d_h = d_in.slice(s![.., 0..cfg.lstm_hidden]).to_owned();
    net.encoder
        .backward_sequence_into(&enc_cache, &d_h, &mut grads.encoder)
        .unwrap();
    grad_check(&net, &grads, loss)
}

/// Tanh-hidden MLP so every layer and both activations are covered by one check.
fn mlp_check(rng: &mut ChaCha8Rng) -> GradCheckReport {
    let mlp = Mlp::new(&[4, 6, 3], Activation::Tanh, Activation::Tanh, 0.5, rng);
    let x = init_uniform(3, 4, 1.0, rng);
    let w = init_uniform(3, 3, 1.0, rng);
    let loss = |m: &Mlp| weighted_sum(&m.forward(&x).unwrap(), &w);
    let (_, cache) = mlp.forward_cached(&x).unwrap();
    let mut grads = zeros_like(&mlp);
    mlp.backward_into(&cache, &w, &mut grads).unwrap();
    grad_check(&mlp, &grads, loss)
}

/// Runs every check with fixed seeds.
pub fn gradient_suite(seed: u64) -> GradientSuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let checks = vec![
        ("dense".to_string(), dense_check(&mut rng, Activation::Identity)),
        ("dense+relu".to_string(), dense_check(&mut rng, Activation::Relu)),
        ("dense+tanh".to_string(), dense_check(&mut rng, Activation::Tanh)),
        ("mlp".to_string(), mlp_check(&mut rng)),
        ("lstm(k=4)".to_string(), lstm_check(&mut rng)),
        ("actor chain".to_string(), actor_chain_check(&mut rng)),
        ("critic chain".to_string(), critic_chain_check(&mut rng)),
    ];
    GradientSuiteReport { checks }
}
