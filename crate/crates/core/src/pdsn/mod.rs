//! Incremental cosine-classifier head over backbone features.
//!
//! The base session maps a feature `h` to the unit vector `z = W_fm h / ‖W_fm h‖`
//! and scores base classes by row-wise cosine similarity against `W_0`.
//! Every incremental session `i` adds a supporter `W_s,i` whose row-wise
//! cosines against `h` are merged with the base embedding as
//! `z_i = γ_i z + supporter_i`, then scored by cosine against `W_i`. The gate
//! `γ = relu(W_γ h)` is learned per input, or fixed to a constant for the
//! hand-tuned baseline. The outputs of all sessions are concatenated in
//! session order.

mod checkpoint;
mod grad;
mod train;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm, softmax_scaled, Matrix, NORM_EPS};

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_FORMAT};
pub use grad::{loss, loss_and_grad, Grads};
pub use train::{train_base, train_base_with_losses, train_session, TrainConfig};

/// Default cap on incremental sessions; fixes the shape of `W_γ`.
pub const DEFAULT_MAX_SESSIONS: usize = 16;
/// Default softmax temperature, i.e. logits are cosines scaled by 16.
pub const DEFAULT_TEMPERATURE: f64 = 1.0 / 16.0;

/// Feature mapper and base classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    pub(crate) w_fm: Matrix,
    pub(crate) w_0: Matrix,
}

impl HeadParams {
    pub fn new(w_fm: Matrix, w_0: Matrix) -> Result<Self> {
        if w_fm.rows() == 0 || w_fm.cols() == 0 {
            return Err(Error::invalid("feature mapper needs d_z >= 1 and d_h >= 1"));
        }
        if w_0.rows() < 2 {
            return Err(Error::invalid("base classifier needs at least 2 classes"));
        }
        if w_0.cols() != w_fm.rows() {
            return Err(Error::Dimension {
                expected: w_fm.rows(),
                got: w_0.cols(),
            });
        }
        if !w_fm.is_finite() || !w_0.is_finite() {
            return Err(Error::invalid("head weights must be finite"));
        }
        Ok(Self { w_fm, w_0 })
    }

    /// Randomly initialized head.
    pub fn init<R: Rng>(d_h: usize, d_z: usize, num_classes: usize, rng: &mut R) -> Result<Self> {
        Self::new(init_matrix(d_z, d_h, rng), init_matrix(num_classes, d_z, rng))
    }

    pub fn feature_dim(&self) -> usize {
        self.w_fm.cols()
    }

    pub fn embed_dim(&self) -> usize {
        self.w_fm.rows()
    }

    pub fn num_classes(&self) -> usize {
        self.w_0.rows()
    }

    pub fn w_fm(&self) -> &Matrix {
        &self.w_fm
    }

    pub fn w_0(&self) -> &Matrix {
        &self.w_0
    }
}

/// Entries uniform in `±1/√fan_in`.
pub(crate) fn init_matrix<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    let bound = 1.0 / (cols.max(1) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.random_range(-bound..bound)).collect();
    Matrix::from_vec(rows, cols, data).expect("shape matches")
}

/// Gate generator; row `i` produces the gamma of session `i + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaNet {
    pub(crate) w_gamma: Matrix,
}

impl GammaNet {
    pub fn new(w_gamma: Matrix) -> Result<Self> {
        if !w_gamma.is_finite() {
            return Err(Error::invalid("gamma weights must be finite"));
        }
        Ok(Self { w_gamma })
    }

    pub fn max_sessions(&self) -> usize {
        self.w_gamma.rows()
    }

    pub fn w_gamma(&self) -> &Matrix {
        &self.w_gamma
    }
}

/// How session gates are produced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GammaMode {
    /// `γ = relu(W_γ h)`, trained with each session.
    Learned,
    /// A constant gate for every session and input.
    Fixed(f64),
}

impl fmt::Display for GammaMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GammaMode::Learned => write!(f, "learned"),
            GammaMode::Fixed(v) => write!(f, "fixed:{v}"),
        }
    }
}

impl FromStr for GammaMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "learned" {
            return Ok(GammaMode::Learned);
        }
        let v = s
            .strip_prefix("fixed:")
            .and_then(|v| v.parse::<f64>().ok())
            .ok_or_else(|| Error::invalid(format!("gamma mode {s:?} is neither `learned` nor `fixed:<value>`")))?;
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::invalid("fixed gamma must be finite and >= 0"));
        }
        Ok(GammaMode::Fixed(v))
    }
}

impl Serialize for GammaMode {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for GammaMode {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Supporter and classifier of one incremental session.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionParams {
    pub(crate) index: usize,
    pub(crate) w_s: Matrix,
    pub(crate) w_i: Matrix,
    pub(crate) class_offset: usize,
}

impl SessionParams {
    pub fn new(index: usize, w_s: Matrix, w_i: Matrix, class_offset: usize) -> Result<Self> {
        if index == 0 {
            return Err(Error::invalid("session indices start at 1"));
        }
        if w_i.rows() == 0 {
            return Err(Error::invalid("a session needs at least one class"));
        }
        if w_i.cols() != w_s.rows() {
            return Err(Error::Dimension {
                expected: w_s.rows(),
                got: w_i.cols(),
            });
        }
        if !w_s.is_finite() || !w_i.is_finite() {
            return Err(Error::invalid("session weights must be finite"));
        }
        Ok(Self {
            index,
            w_s,
            w_i,
            class_offset,
        })
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn num_classes(&self) -> usize {
        self.w_i.rows()
    }

    pub fn class_offset(&self) -> usize {
        self.class_offset
    }

    pub fn w_s(&self) -> &Matrix {
        &self.w_s
    }

    pub fn w_i(&self) -> &Matrix {
        &self.w_i
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PdsnModel {
    pub(crate) head: HeadParams,
    pub(crate) gamma: GammaNet,
    pub(crate) sessions: Vec<SessionParams>,
    pub(crate) gamma_mode: GammaMode,
    pub(crate) temperature: f64,
    pub(crate) seeds: BTreeMap<String, u64>,
}

impl PdsnModel {
    /// Model with no incremental sessions; `W_γ` is drawn from `gamma_seed`.
    pub fn new(
        head: HeadParams,
        max_sessions: usize,
        gamma_mode: GammaMode,
        temperature: f64,
        gamma_seed: u64,
    ) -> Result<Self> {
        let mut rng = crate::rng::seeded(gamma_seed, crate::rng::STREAM_GAMMA_INIT);
        let gamma = GammaNet::new(init_matrix(max_sessions, head.feature_dim(), &mut rng))?;
        let mut seeds = BTreeMap::new();
        seeds.insert("gamma_init".to_string(), gamma_seed);
        Self::from_parts(head, gamma, Vec::new(), gamma_mode, temperature, seeds)
    }

    pub fn from_parts(
        head: HeadParams,
        gamma: GammaNet,
        sessions: Vec<SessionParams>,
        gamma_mode: GammaMode,
        temperature: f64,
        seeds: BTreeMap<String, u64>,
    ) -> Result<Self> {
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(Error::invalid("temperature must be positive and finite"));
        }
        if let GammaMode::Fixed(v) = gamma_mode {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid("fixed gamma must be finite and >= 0"));
            }
        }
        if gamma.w_gamma.cols() != head.feature_dim() && gamma.max_sessions() > 0 {
            return Err(Error::Dimension {
                expected: head.feature_dim(),
                got: gamma.w_gamma.cols(),
            });
        }
        if sessions.len() > gamma.max_sessions() {
            return Err(Error::invalid("more sessions than the gamma generator supports"));
        }
        let mut offset = head.num_classes();
        for (k, s) in sessions.iter().enumerate() {
            if s.index != k + 1 || s.class_offset != offset {
                return Err(Error::invalid(format!("session {} is out of order", s.index)));
            }
            if s.w_s.cols() != head.feature_dim() || s.w_s.rows() != head.embed_dim() {
                return Err(Error::invalid(format!(
                    "session {} has a mis-shaped supporter",
                    s.index
                )));
            }
            offset += s.num_classes();
        }
        Ok(Self {
            head,
            gamma,
            sessions,
            gamma_mode,
            temperature,
            seeds,
        })
    }

    pub fn head(&self) -> &HeadParams {
        &self.head
    }

    pub fn gamma_net(&self) -> &GammaNet {
        &self.gamma
    }

    pub fn sessions(&self) -> &[SessionParams] {
        &self.sessions
    }

    pub fn gamma_mode(&self) -> GammaMode {
        self.gamma_mode
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    /// Seeds that produced this model's parameters, keyed by stage.
    pub fn seeds(&self) -> &BTreeMap<String, u64> {
        &self.seeds
    }

    pub fn record_seed(&mut self, stage: impl Into<String>, seed: u64) {
        self.seeds.insert(stage.into(), seed);
    }

    pub fn feature_dim(&self) -> usize {
        self.head.feature_dim()
    }

    pub fn base_classes(&self) -> usize {
        self.head.num_classes()
    }

    pub fn num_classes(&self) -> usize {
        self.head.num_classes() + self.sessions.iter().map(SessionParams::num_classes).sum::<usize>()
    }

    pub fn forward(&self, h: &[f64]) -> Result<Vec<f64>> {
        forward(h, self)
    }

    /// Softmax of the concatenated scores at the model temperature.
    pub fn probabilities(&self, h: &[f64]) -> Result<Vec<f64>> {
        Ok(to_probabilities(&self.forward(h)?, self.temperature))
    }

    /// Every weight matrix with its family name, in the order
    /// `w_fm, w_0, w_gamma, w_s1, w_i1, w_s2, …`.
    pub fn families_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        let mut out = vec![
            ("w_fm".to_string(), &mut self.head.w_fm),
            ("w_0".to_string(), &mut self.head.w_0),
            ("w_gamma".to_string(), &mut self.gamma.w_gamma),
        ];
        for s in &mut self.sessions {
            out.push((format!("w_s{}", s.index), &mut s.w_s));
            out.push((format!("w_i{}", s.index), &mut s.w_i));
        }
        out
    }

    /// The base head alone, as during the base session.
    pub(crate) fn base_only(head: HeadParams, temperature: f64) -> Self {
        Self {
            gamma: GammaNet {
                w_gamma: Matrix::zeros(0, head.feature_dim()),
            },
            head,
            sessions: Vec::new(),
            gamma_mode: GammaMode::Learned,
            temperature,
            seeds: BTreeMap::new(),
        }
    }
}

/// Row-wise cosine similarity of `w` against `v`.
pub(crate) fn row_cosines(w: &Matrix, v: &[f64]) -> Result<Vec<f64>> {
    let vn = norm(v);
    if vn < NORM_EPS {
        return Err(Error::DegenerateFeature);
    }
    (0..w.rows())
        .map(|r| {
            let row = w.row(r);
            let wn = norm(row);
            if wn < NORM_EPS {
                return Err(Error::DegenerateClassifier { row: r });
            }
            Ok(dot(row, v) / (wn * vn))
        })
        .collect()
}

fn check_dim(h: &[f64], expected: usize) -> Result<()> {
    if h.len() != expected {
        return Err(Error::Dimension { expected, got: h.len() });
    }
    Ok(())
}

/// `z = W_fm h / ‖W_fm h‖`.
pub fn feature_map(h: &[f64], head: &HeadParams) -> Result<Vec<f64>> {
    check_dim(h, head.feature_dim())?;
    let u = head.w_fm.matvec(h);
    let n = norm(&u);
    if n < NORM_EPS {
        return Err(Error::DegenerateFeature);
    }
    Ok(u.into_iter().map(|x| x / n).collect())
}

/// Cosine of each base-class weight row against `z`.
pub fn base_logits(z: &[f64], head: &HeadParams) -> Result<Vec<f64>> {
    check_dim(z, head.embed_dim())?;
    row_cosines(&head.w_0, z)
}

/// Session gates for the first `num_sessions` sessions.
pub fn gammas(h: &[f64], net: &GammaNet, mode: GammaMode, num_sessions: usize) -> Result<Vec<f64>> {
    match mode {
        GammaMode::Fixed(v) => Ok(vec![v; num_sessions]),
        GammaMode::Learned => {
            if num_sessions > net.max_sessions() {
                return Err(Error::invalid("more sessions than the gamma generator supports"));
            }
            check_dim(h, net.w_gamma.cols())?;
            Ok((0..num_sessions).map(|r| dot(net.w_gamma.row(r), h).max(0.0)).collect())
        }
    }
}

/// Row-wise cosines of the supporter against `h`.
pub fn supporter(h: &[f64], session: &SessionParams) -> Result<Vec<f64>> {
    check_dim(h, session.w_s.cols())?;
    row_cosines(&session.w_s, h)
}

/// Scores of one session's classes for base embedding `z` and gate `gamma`.
pub fn session_logits(h: &[f64], z: &[f64], session: &SessionParams, gamma: f64) -> Result<Vec<f64>> {
    if gamma.is_nan() || gamma < 0.0 {
        return Err(Error::invalid("session gamma must be >= 0"));
    }
    check_dim(z, session.w_s.rows())?;
    let mut merged = supporter(h, session)?;
    crate::linalg::axpy(&mut merged, gamma, z);
    let n = norm(&merged);
    if n < NORM_EPS {
        return Err(Error::DegenerateFeature);
    }
    merged.iter_mut().for_each(|x| *x /= n);
    row_cosines(&session.w_i, &merged)
}

/// Concatenated scores `[base ‖ session 1 ‖ …]`.
pub fn forward(h: &[f64], model: &PdsnModel) -> Result<Vec<f64>> {
    let z = feature_map(h, &model.head)?;
    let mut out = base_logits(&z, &model.head)?;
    let g = gammas(h, &model.gamma, model.gamma_mode, model.sessions.len())?;
    for (s, &gi) in model.sessions.iter().zip(&g) {
        out.extend(session_logits(h, &z, s, gi)?);
    }
    Ok(out)
}

/// `softmax(scores / temperature)`.
pub fn to_probabilities(scores: &[f64], temperature: f64) -> Vec<f64> {
    softmax_scaled(scores, 1.0 / temperature)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rows(r: &[&[f64]]) -> Matrix {
        Matrix::from_rows(&r.iter().map(|x| x.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn head_identity2() -> HeadParams {
        HeadParams::new(Matrix::identity(2), rows(&[&[1.0, 0.0], &[0.0, 1.0], &[-0.6, -0.8]])).unwrap()
    }

    fn random_model(seed: u64, d_h: usize, d_z: usize, base: usize, sessions: &[usize], mode: GammaMode) -> PdsnModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let head = HeadParams::init(d_h, d_z, base, &mut rng).unwrap();
        let mut m = PdsnModel::new(head, 4, mode, DEFAULT_TEMPERATURE, seed).unwrap();
        let mut offset = base;
        for (k, &n) in sessions.iter().enumerate() {
            let s = SessionParams::new(
                k + 1,
                init_matrix(d_z, d_h, &mut rng),
                init_matrix(n, d_z, &mut rng),
                offset,
            )
            .unwrap();
            offset += n;
            m.sessions.push(s);
        }
        m
    }

    #[test]
    fn feature_map_normalizes() {
        let z = feature_map(&[3.0, 4.0], &head_identity2()).unwrap();
        assert!((z[0] - 0.6).abs() < 1e-15 && (z[1] - 0.8).abs() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let head = HeadParams::init(5, 3, 2, &mut rng).unwrap();
        let z = feature_map(&[1.0, -2.0, 0.5, 3.0, 0.1], &head).unwrap();
        assert!((norm(&z) - 1.0).abs() < 1e-9);

        let zero = HeadParams::new(Matrix::zeros(2, 2), Matrix::identity(2)).unwrap();
        assert!(matches!(feature_map(&[3.0, 4.0], &zero), Err(Error::DegenerateFeature)));
    }

    #[test]
    fn base_logits_are_cosines() {
        let head = head_identity2();
        let z = [0.6, 0.8];
        let w0 = rows(&[&[0.6, 0.8], &[-0.8, 0.6], &[-0.6, -0.8]]);
        let head = HeadParams::new(head.w_fm.clone(), w0).unwrap();
        let s = base_logits(&z, &head).unwrap();
        assert!((s[0] - 1.0).abs() < 1e-15);
        assert!(s[1].abs() < 1e-15);
        assert!((s[2] + 1.0).abs() < 1e-15);

        let bad = HeadParams::new(Matrix::identity(2), rows(&[&[1.0, 0.0], &[0.0, 0.0]])).unwrap();
        assert!(matches!(
            base_logits(&z, &bad),
            Err(Error::DegenerateClassifier { row: 1 })
        ));
    }

    #[test]
    fn gamma_relu_and_fixed() {
        let net = GammaNet::new(rows(&[&[-2.0, 0.0], &[0.0, 3.0]])).unwrap();
        assert_eq!(
            gammas(&[1.0, 1.0], &net, GammaMode::Learned, 2).unwrap(),
            vec![0.0, 3.0]
        );
        assert_eq!(
            gammas(&[1.0, 1.0], &net, GammaMode::Fixed(1.0), 2).unwrap(),
            vec![1.0, 1.0]
        );
        let zero = GammaNet::new(Matrix::zeros(2, 2)).unwrap();
        assert_eq!(
            gammas(&[5.0, -1.0], &zero, GammaMode::Learned, 2).unwrap(),
            vec![0.0, 0.0]
        );
    }

    #[test]
    fn gamma_mode_parses() {
        assert_eq!("learned".parse::<GammaMode>().unwrap(), GammaMode::Learned);
        assert_eq!("fixed:1.0".parse::<GammaMode>().unwrap(), GammaMode::Fixed(1.0));
        assert!("fixed:-1".parse::<GammaMode>().is_err());
        assert!("fixed".parse::<GammaMode>().is_err());
        assert_eq!(
            GammaMode::Fixed(0.5).to_string().parse::<GammaMode>().unwrap(),
            GammaMode::Fixed(0.5)
        );
    }

    #[test]
    fn zero_gamma_uses_only_the_supporter() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = SessionParams::new(1, init_matrix(3, 4, &mut rng), init_matrix(2, 3, &mut rng), 5).unwrap();
        let h = [0.3, -1.0, 2.0, 0.5];
        let a = session_logits(&h, &[1.0, 0.0, 0.0], &s, 0.0).unwrap();
        let b = session_logits(&h, &[0.0, 0.0, 1.0], &s, 0.0).unwrap();
        assert_eq!(a, b);
        let sup = supporter(&h, &s).unwrap();
        for (x, y) in a.iter().zip(row_cosines(&s.w_i, &sup).unwrap()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn supporter_aligned_with_base_keeps_direction() {
        // W_fm = W_s = I, so the supporter is h/‖h‖ = z and z_i = z.
        let h = [3.0, 4.0];
        let head = HeadParams::new(Matrix::identity(2), Matrix::identity(2)).unwrap();
        let z = feature_map(&h, &head).unwrap();
        let w_i = rows(&[&[1.0, 1.0], &[0.0, -2.0]]);
        let s = SessionParams::new(1, Matrix::identity(2), w_i.clone(), 2).unwrap();
        let scores = session_logits(&h, &z, &s, 1.0).unwrap();
        let direct = row_cosines(&w_i, &z).unwrap();
        for (a, b) in scores.iter().zip(&direct) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((scores[0] - 1.4 / 2f64.sqrt()).abs() < 1e-12);
        assert!((scores[1] + 0.8).abs() < 1e-12);
    }

    #[test]
    fn cancelling_merge_is_degenerate() {
        let h = [1.0, 0.0];
        let s = SessionParams::new(1, Matrix::identity(2), Matrix::identity(2), 2).unwrap();
        assert!(matches!(
            session_logits(&h, &[-1.0, 0.0], &s, 1.0),
            Err(Error::DegenerateFeature)
        ));
    }

    #[test]
    fn forward_concatenates_in_session_order() {
        let m = random_model(3, 6, 4, 5, &[2, 3], GammaMode::Learned);
        let h = [0.5, 1.0, -0.3, 0.2, 2.0, -1.0];
        let out = m.forward(&h).unwrap();
        assert_eq!(out.len(), 10);
        assert_eq!(m.num_classes(), 10);
        let z = feature_map(&h, &m.head).unwrap();
        assert_eq!(&out[..5], &base_logits(&z, &m.head).unwrap()[..]);
        let g = gammas(&h, &m.gamma, m.gamma_mode, 2).unwrap();
        assert_eq!(&out[5..7], &session_logits(&h, &z, &m.sessions[0], g[0]).unwrap()[..]);
        assert_eq!(&out[7..], &session_logits(&h, &z, &m.sessions[1], g[1]).unwrap()[..]);

        let mut bare = m.clone();
        bare.sessions.clear();
        assert_eq!(bare.forward(&h).unwrap(), out[..5].to_vec());
    }

    #[test]
    fn food101_plus_two_new_classes() {
        let m = random_model(4, 8, 8, 101, &[2], GammaMode::Learned);
        assert_eq!(m.forward(&[1.0; 8]).unwrap().len(), 103);
    }

    #[test]
    fn probabilities_match_direct_softmax() {
        let p = to_probabilities(&[1.0, -1.0], 1.0);
        assert!((p[0] - 0.8808).abs() < 1e-4 && (p[1] - 0.1192).abs() < 1e-4);
        let e2 = 2f64.exp();
        assert!((p[0] - e2 / (e2 + 1.0)).abs() < 1e-15);
        assert_eq!(to_probabilities(&[0.3; 4], 0.1), vec![0.25; 4]);
        assert!(to_probabilities(&[1.0, 0.0], 1e-3)[0] > 1.0 - 1e-12);
    }

    #[test]
    fn model_validation() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let head = HeadParams::init(4, 3, 2, &mut rng).unwrap();
        assert!(PdsnModel::new(head.clone(), 2, GammaMode::Learned, 0.0, 0).is_err());
        assert!(PdsnModel::new(head.clone(), 2, GammaMode::Fixed(f64::NAN), 0.1, 0).is_err());
        assert!(HeadParams::new(Matrix::identity(3), Matrix::identity(3).clone()).is_ok());
        assert!(HeadParams::new(Matrix::identity(3), Matrix::zeros(1, 3)).is_err());
        let s = SessionParams::new(2, init_matrix(3, 4, &mut rng), init_matrix(2, 3, &mut rng), 2).unwrap();
        let gamma = GammaNet::new(Matrix::zeros(2, 4)).unwrap();
        assert!(PdsnModel::from_parts(head, gamma, vec![s], GammaMode::Learned, 0.1, BTreeMap::new()).is_err());
    }
}
