//! Cross-entropy loss over the concatenated, temperature-scaled scores and
//! its analytic gradient with respect to every weight family.

use super::{feature_map, forward, to_probabilities, PdsnModel};
use crate::error::{Error, Result};
use crate::features::Example;
use crate::linalg::{axpy, dot, norm, Matrix};

/// Gradients, shaped like the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub w_fm: Matrix,
    pub w_0: Matrix,
    pub w_gamma: Matrix,
    /// `(W_s, W_i)` per session.
    pub sessions: Vec<(Matrix, Matrix)>,
}

impl Grads {
    fn zeros_like(model: &PdsnModel) -> Self {
        let z = |m: &Matrix| Matrix::zeros(m.rows(), m.cols());
        Self {
            w_fm: z(&model.head.w_fm),
            w_0: z(&model.head.w_0),
            w_gamma: z(&model.gamma.w_gamma),
            sessions: model.sessions.iter().map(|s| (z(&s.w_s), z(&s.w_i))).collect(),
        }
    }

    /// Same order and names as [`PdsnModel::families_mut`].
    pub fn families(&self) -> Vec<(String, &Matrix)> {
        let mut out = vec![
            ("w_fm".to_string(), &self.w_fm),
            ("w_0".to_string(), &self.w_0),
            ("w_gamma".to_string(), &self.w_gamma),
        ];
        for (k, (ws, wi)) in self.sessions.iter().enumerate() {
            out.push((format!("w_s{}", k + 1), ws));
            out.push((format!("w_i{}", k + 1), wi));
        }
        out
    }

    fn scale(&mut self, k: f64) {
        let mut all = vec![&mut self.w_fm, &mut self.w_0, &mut self.w_gamma];
        for (a, b) in &mut self.sessions {
            all.push(a);
            all.push(b);
        }
        for m in all {
            m.as_mut_slice().iter_mut().for_each(|x| *x *= k);
        }
    }
}

/// Unit vector `v / ‖v‖` and the norm.
fn unit(v: &[f64]) -> (Vec<f64>, f64) {
    let n = norm(v);
    (v.iter().map(|x| x / n).collect(), n)
}

/// Backward through `s_r = cos(w_r, v)`.
///
/// Adds `∂L/∂w_r = g_r (v̂ − s_r ŵ_r) / ‖w_r‖` into `dw` and returns `∂L/∂v`.
fn cosine_backward(w: &Matrix, v: &[f64], scores: &[f64], g: &[f64], dw: &mut Matrix) -> Vec<f64> {
    let (v_hat, vn) = unit(v);
    let mut dv = vec![0.0; v.len()];
    for r in 0..w.rows() {
        if g[r] == 0.0 {
            continue;
        }
        let (w_hat, wn) = unit(w.row(r));
        let dwr = dw.row_mut(r);
        for k in 0..v.len() {
            dwr[k] += g[r] * (v_hat[k] - scores[r] * w_hat[k]) / wn;
            dv[k] += g[r] * (w_hat[k] - scores[r] * v_hat[k]) / vn;
        }
    }
    dv
}

/// Adds the gradient of one example into `grads` and returns its loss.
fn accumulate(model: &PdsnModel, ex: &Example<'_>, grads: &mut Grads) -> Result<f64> {
    let h = ex.features;
    let scores = forward(h, model)?;
    if ex.label >= scores.len() {
        return Err(Error::invalid(format!(
            "label {} out of range for {} classes",
            ex.label,
            scores.len()
        )));
    }
    let inv_t = 1.0 / model.temperature;
    let p = to_probabilities(&scores, model.temperature);
    let loss = -p[ex.label].max(f64::MIN_POSITIVE).ln();
    let mut d_scores: Vec<f64> = p.iter().map(|pi| pi * inv_t).collect();
    d_scores[ex.label] -= inv_t;

    let head = &model.head;
    let u = head.w_fm.matvec(h);
    let z = feature_map(h, head)?;
    let base_n = head.num_classes();
    let mut dz = cosine_backward(&head.w_0, &z, &scores[..base_n], &d_scores[..base_n], &mut grads.w_0);

    let h_hat = unit(h).0;
    let mut at = base_n;
    for (k, s) in model.sessions.iter().enumerate() {
        let n = s.num_classes();
        let (sc, g) = (&scores[at..at + n], &d_scores[at..at + n]);
        at += n;

        let pre_gamma = dot(model.gamma.w_gamma.row(k), h);
        let gamma = match model.gamma_mode {
            super::GammaMode::Learned => pre_gamma.max(0.0),
            super::GammaMode::Fixed(v) => v,
        };
        let sup = super::supporter(h, s)?;
        let mut merged = sup.clone();
        axpy(&mut merged, gamma, &z);

        let (dws, dwi) = &mut grads.sessions[k];
        let d_merged = cosine_backward(&s.w_i, &merged, sc, g, dwi);
        axpy(&mut dz, gamma, &d_merged);

        // supporter_j = cos(ws_j, h) with h fixed
        for j in 0..s.w_s.rows() {
            let dj = d_merged[j];
            if dj == 0.0 {
                continue;
            }
            let (ws_hat, wsn) = unit(s.w_s.row(j));
            let row = dws.row_mut(j);
            for c in 0..h.len() {
                row[c] += dj * (h_hat[c] - sup[j] * ws_hat[c]) / wsn;
            }
        }

        if model.gamma_mode == super::GammaMode::Learned && pre_gamma > 0.0 {
            let d_gamma = dot(&d_merged, &z);
            axpy(grads.w_gamma.row_mut(k), d_gamma, h);
        }
    }

    // z = u / ‖u‖
    let un = norm(&u);
    let proj = dot(&dz, &z);
    let du: Vec<f64> = dz.iter().zip(&z).map(|(d, zi)| (d - proj * zi) / un).collect();
    grads.w_fm.add_outer(1.0, &du, h);
    Ok(loss)
}

/// Mean cross-entropy over `batch` and its gradient.
pub fn loss_and_grad(model: &PdsnModel, batch: &[Example<'_>]) -> Result<(f64, Grads)> {
    if batch.is_empty() {
        return Err(Error::InsufficientData("empty batch".into()));
    }
    let mut grads = Grads::zeros_like(model);
    let mut total = 0.0;
    for ex in batch {
        total += accumulate(model, ex, &mut grads)?;
    }
    let k = 1.0 / batch.len() as f64;
    grads.scale(k);
    Ok((total * k, grads))
}

/// Mean cross-entropy over `batch`.
pub fn loss(model: &PdsnModel, batch: &[Example<'_>]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::InsufficientData("empty batch".into()));
    }
    let mut total = 0.0;
    for ex in batch {
        let p = model.probabilities(ex.features)?;
        let pl = p
            .get(ex.label)
            .ok_or_else(|| Error::invalid(format!("label {} out of range", ex.label)))?;
        total -= pl.max(f64::MIN_POSITIVE).ln();
    }
    Ok(total / batch.len() as f64)
}
