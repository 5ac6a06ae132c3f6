//! Mini-batch SGD for the base session and for incremental sessions.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{init_matrix, loss_and_grad, HeadParams, PdsnModel, SessionParams};
use crate::error::{Error, Result};
use crate::features::Example;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub nesterov: bool,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Base-class exemplars per class mixed into incremental sessions.
    pub replay_per_class: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            momentum: 0.9,
            weight_decay: 0.0005,
            nesterov: true,
            batch_size: 32,
            epochs: 20,
            seed: 0,
            replay_per_class: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be > 0"));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::invalid("batch_size and epochs must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.momentum) || self.weight_decay < 0.0 {
            return Err(Error::invalid("momentum must be in [0, 1) and weight_decay >= 0"));
        }
        Ok(())
    }
}

/// SGD with momentum, optional Nesterov and L2 weight decay folded into the
/// gradient (the PyTorch formulation).
struct Sgd {
    lr: f64,
    momentum: f64,
    weight_decay: f64,
    nesterov: bool,
    velocity: Vec<Vec<f64>>,
}

impl Sgd {
    fn new(cfg: &TrainConfig) -> Self {
        Self {
            lr: cfg.learning_rate,
            momentum: cfg.momentum,
            weight_decay: cfg.weight_decay,
            nesterov: cfg.nesterov,
            velocity: Vec::new(),
        }
    }

    fn step(&mut self, params: Vec<&mut [f64]>, grads: Vec<&[f64]>) {
        if self.velocity.is_empty() {
            self.velocity = params.iter().map(|p| vec![0.0; p.len()]).collect();
        }
        for ((p, g), v) in params.into_iter().zip(grads).zip(&mut self.velocity) {
            for i in 0..p.len() {
                let d = g[i] + self.weight_decay * p[i];
                v[i] = self.momentum * v[i] + d;
                let step = if self.nesterov { d + self.momentum * v[i] } else { v[i] };
                p[i] -= self.lr * step;
            }
        }
    }
}

fn check_classes(data: &[Example<'_>], classes: std::ops::Range<usize>) -> Result<()> {
    let mut counts = vec![0usize; classes.len()];
    for ex in data {
        if !classes.contains(&ex.label) {
            return Err(Error::invalid(format!(
                "label {} outside the classes {}..{} being trained",
                ex.label, classes.start, classes.end
            )));
        }
        counts[ex.label - classes.start] += 1;
    }
    if let Some(c) = counts.iter().position(|&n| n == 0) {
        return Err(Error::InsufficientData(format!(
            "class {} has no training samples",
            classes.start + c
        )));
    }
    Ok(())
}

/// Run `epochs` of shuffled mini-batches; `step` applies one update and the
/// per-step mean batch losses are returned.
fn run_epochs<F>(model: &mut PdsnModel, data: &[Example<'_>], cfg: &TrainConfig, mut step: F) -> Result<Vec<f64>>
where
    F: FnMut(&mut PdsnModel, &super::Grads),
{
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng = rng::seeded(cfg.seed, rng::STREAM_SHUFFLE);
    let mut losses = Vec::new();
    let mut batch = Vec::with_capacity(cfg.batch_size);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| data[i]));
            let (loss, grads) = loss_and_grad(model, &batch)?;
            step(model, &grads);
            losses.push(loss);
        }
    }
    Ok(losses)
}

/// Train the feature mapper and base classifier on base-class data.
pub fn train_base(
    data: &[Example<'_>],
    num_classes: usize,
    embed_dim: usize,
    temperature: f64,
    cfg: &TrainConfig,
) -> Result<HeadParams> {
    train_base_with_losses(data, num_classes, embed_dim, temperature, cfg).map(|(h, _)| h)
}

/// [`train_base`], also returning the loss of every mini-batch step.
pub fn train_base_with_losses(
    data: &[Example<'_>],
    num_classes: usize,
    embed_dim: usize,
    temperature: f64,
    cfg: &TrainConfig,
) -> Result<(HeadParams, Vec<f64>)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::InsufficientData("no base training data".into()));
    }
    check_classes(data, 0..num_classes)?;
    let d_h = data[0].features.len();
    if let Some(bad) = data.iter().find(|e| e.features.len() != d_h) {
        return Err(Error::Dimension {
            expected: d_h,
            got: bad.features.len(),
        });
    }
    let mut init_rng = rng::seeded(cfg.seed, rng::STREAM_HEAD_INIT);
    let head = HeadParams::init(d_h, embed_dim, num_classes, &mut init_rng)?;
    let mut model = PdsnModel::base_only(head, temperature);
    let mut sgd = Sgd::new(cfg);
    let losses = run_epochs(&mut model, data, cfg, |m, g| {
        let head = &mut m.head;
        sgd.step(
            vec![head.w_fm.as_mut_slice(), head.w_0.as_mut_slice()],
            vec![g.w_fm.as_slice(), g.w_0.as_slice()],
        );
    })?;
    Ok((model.head, losses))
}

/// Append one session of `num_new` classes and train only its parameters:
/// the supporter, the session classifier and, for a learned gate, the gate
/// row of this session. The feature mapper, base classifier and earlier
/// sessions are left untouched.
///
/// `replay_pool` supplies old-class exemplars; the first
/// `cfg.replay_per_class` of each old class are mixed into training.
pub fn train_session(
    model: &PdsnModel,
    new_data: &[Example<'_>],
    num_new: usize,
    replay_pool: &[Example<'_>],
    cfg: &TrainConfig,
) -> Result<PdsnModel> {
    cfg.validate()?;
    if num_new == 0 {
        return Err(Error::invalid("a session must add at least one class"));
    }
    let index = model.sessions.len() + 1;
    if index > model.gamma.max_sessions() {
        return Err(Error::invalid(format!(
            "model supports at most {} sessions",
            model.gamma.max_sessions()
        )));
    }
    let offset = model.num_classes();
    check_classes(new_data, offset..offset + num_new)?;
    let d_h = model.feature_dim();
    if let Some(bad) = new_data.iter().find(|e| e.features.len() != d_h) {
        return Err(Error::Dimension {
            expected: d_h,
            got: bad.features.len(),
        });
    }

    let mut data = new_data.to_vec();
    if cfg.replay_per_class > 0 {
        let mut taken = vec![0usize; offset];
        for ex in replay_pool {
            if ex.label < offset && taken[ex.label] < cfg.replay_per_class {
                taken[ex.label] += 1;
                data.push(*ex);
            }
        }
    }

    let mut init_rng = rng::seeded(cfg.seed.wrapping_add(index as u64), rng::STREAM_SESSION_INIT);
    let d_z = model.head.embed_dim();
    let session = SessionParams::new(
        index,
        init_matrix(d_z, d_h, &mut init_rng),
        init_matrix(num_new, d_z, &mut init_rng),
        offset,
    )?;
    let mut out = model.clone();
    out.sessions.push(session);
    out.record_seed(format!("session{index}"), cfg.seed);

    let learned = out.gamma_mode == super::GammaMode::Learned;
    let k = index - 1;
    let mut sgd = Sgd::new(cfg);
    run_epochs(&mut out, &data, cfg, |m, g| {
        let s = m.sessions.last_mut().expect("session appended");
        let (gs, gi) = g.sessions.last().expect("session grads");
        let mut params = vec![s.w_s.as_mut_slice(), s.w_i.as_mut_slice()];
        let mut grads = vec![gs.as_slice(), gi.as_slice()];
        if learned {
            params.push(m.gamma.w_gamma.row_mut(k));
            grads.push(g.w_gamma.row(k));
        }
        sgd.step(params, grads);
    })?;
    Ok(out)
}
