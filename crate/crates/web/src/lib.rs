//! Browser bindings. Every export takes a JSON request string and returns a
//! JSON string: the result object, or `{"error": "..."}`.

use std::collections::BTreeMap;

use mealwise::features::{generate_synthetic, split_dataset, Split, SyntheticClusterSpec};
use mealwise::harness::{run_ablation, AblationConfig, EvalSettings};
use mealwise::linalg::Matrix;
use mealwise::pdsn::{
    feature_map, session_logits, supporter, train_base, GammaMode, HeadParams, PdsnModel, SessionParams, TrainConfig,
    DEFAULT_MAX_SESSIONS, DEFAULT_TEMPERATURE,
};
use mealwise::personalizer::{new_profile, predict, ContextSpace, FactorMask, ForgettingFactors, MealContext};
use mealwise::simulator::{generate_corpus, PatternSpec};
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::wasm_bindgen;

fn respond<T: Serialize>(r: Result<T, String>) -> String {
    match r {
        Ok(v) => serde_json::to_string(&v).unwrap_or_else(|e| error_json(&e.to_string())),
        Err(e) => error_json(&e),
    }
}

fn error_json(msg: &str) -> String {
    serde_json::json!({ "error": msg }).to_string()
}

fn parse<'a, T: Deserialize<'a>>(request: &'a str) -> Result<T, String> {
    serde_json::from_str(request).map_err(|e| format!("bad request: {e}"))
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationRequest {
    pub seed: u64,
    pub classes: usize,
    pub dim: usize,
    pub noise_sigma: f64,
    pub users: usize,
    pub meals: usize,
    pub foods_per_user: f64,
    pub frequency_skew: f64,
    pub context_concentration: f64,
    pub checkpoints: Vec<usize>,
}

impl Default for AblationRequest {
    fn default() -> Self {
        Self {
            seed: 1,
            classes: 40,
            dim: 16,
            noise_sigma: 0.3,
            users: 10,
            meals: 300,
            foods_per_user: 20.0,
            frequency_skew: 1.5,
            context_concentration: 0.3,
            checkpoints: vec![25, 50, 75, 100, 150, 200, 250, 300],
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Curve {
    pub scenario: String,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct AblationResponse {
    pub checkpoints: Vec<usize>,
    pub heldout_accuracy: f64,
    pub curves: Vec<Curve>,
}

/// Train a small head on synthetic clusters, simulate users and return the
/// accuracy curve of every factor scenario.
pub fn ablation(req: &AblationRequest) -> Result<AblationResponse, String> {
    let s = |e: mealwise::Error| e.to_string();
    let spec = SyntheticClusterSpec {
        num_classes: req.classes,
        dim: req.dim,
        centroid_separation: 1.0,
        noise_sigma: req.noise_sigma,
        samples_per_class: 30,
        seed: req.seed,
    };
    let (train, test) = split_dataset(&generate_synthetic(&spec).map_err(s)?, 0.5, req.seed + 1).map_err(s)?;
    let cfg = TrainConfig {
        seed: req.seed + 2,
        epochs: 10,
        ..TrainConfig::default()
    };
    let head = train_base(
        &train.examples(Split::Train, 0..req.classes),
        req.classes,
        req.dim,
        DEFAULT_TEMPERATURE,
        &cfg,
    )
    .map_err(s)?;
    let model = PdsnModel::new(head, DEFAULT_MAX_SESSIONS, GammaMode::Learned, DEFAULT_TEMPERATURE, 0).map_err(s)?;
    let held = test.examples(Split::Test, 0..req.classes);
    let mut correct = 0;
    for e in &held {
        if mealwise::linalg::argmax(&model.probabilities(e.features).map_err(s)?) == Some(e.label) {
            correct += 1;
        }
    }
    let patterns = PatternSpec {
        num_users: req.users,
        classes_per_user_mean: req.foods_per_user,
        meals_per_user: req.meals,
        frequency_skew: req.frequency_skew,
        context_concentration: req.context_concentration,
        seed: req.seed + 3,
        ..PatternSpec::default()
    };
    let corpus = generate_corpus(&patterns, &test).map_err(s)?;
    let settings = EvalSettings {
        checkpoints: req.checkpoints.clone(),
        ..EvalSettings::default()
    };
    let reports = run_ablation(&model, &corpus.users, &settings, &AblationConfig::default()).map_err(s)?;
    Ok(AblationResponse {
        checkpoints: req.checkpoints.clone(),
        heldout_accuracy: correct as f64 / held.len().max(1) as f64,
        curves: reports
            .into_iter()
            .map(|(sc, r)| Curve {
                scenario: sc.name().to_string(),
                mean: r.mean,
                std: r.std,
            })
            .collect(),
    })
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GateRequest {
    /// Direction of the backbone feature, degrees.
    pub feature_angle: f64,
    /// Rotation applied by the feature mapper, degrees.
    pub mapper_rotation: f64,
    /// Directions of the two supporter rows, degrees.
    pub supporter_angles: [f64; 2],
    pub gammas: Vec<f64>,
}

impl Default for GateRequest {
    fn default() -> Self {
        Self {
            feature_angle: 30.0,
            mapper_rotation: 60.0,
            supporter_angles: [0.0, 90.0],
            gammas: (0..=40).map(|i| i as f64 * 0.1).collect(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct GatePoint {
    pub gamma: f64,
    pub merged: [f64; 2],
    pub angle: f64,
}

#[derive(Debug, Serialize)]
pub struct GateResponse {
    pub base: [f64; 2],
    pub supporter: [f64; 2],
    pub sweep: Vec<GatePoint>,
}

fn unit(deg: f64) -> [f64; 2] {
    let r = deg.to_radians();
    [r.cos(), r.sin()]
}

/// How the session embedding moves between the supporter and the base
/// embedding as the gate grows, in a 2-d feature space.
pub fn gate_geometry(req: &GateRequest) -> Result<GateResponse, String> {
    let s = |e: mealwise::Error| e.to_string();
    let [c, si] = unit(req.mapper_rotation);
    let rotation = Matrix::from_rows(&[vec![c, -si], vec![si, c]]).expect("2x2");
    let head = HeadParams::new(rotation, Matrix::identity(2)).map_err(s)?;
    let ws = Matrix::from_rows(&[
        unit(req.supporter_angles[0]).to_vec(),
        unit(req.supporter_angles[1]).to_vec(),
    ])
    .expect("2x2");
    let session = SessionParams::new(1, ws, Matrix::identity(2), 2).map_err(s)?;
    let h = unit(req.feature_angle);
    let z = feature_map(&h, &head).map_err(s)?;
    let sup = supporter(&h, &session).map_err(s)?;
    let sweep = req
        .gammas
        .iter()
        .map(|&g| {
            let m = session_logits(&h, &z, &session, g).map_err(s)?;
            Ok(GatePoint {
                gamma: g,
                merged: [m[0], m[1]],
                angle: m[1].atan2(m[0]).to_degrees(),
            })
        })
        .collect::<Result<Vec<_>, String>>()?;
    Ok(GateResponse {
        base: [z[0], z[1]],
        supporter: [sup[0], sup[1]],
        sweep,
    })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceRequest {
    /// Classifier probabilities, reused for every meal.
    pub probabilities: Vec<f64>,
    /// `[class, time_index, location_index]` per confirmed meal.
    pub meals: Vec<[usize; 3]>,
    #[serde(default = "default_alphas")]
    pub alphas: [f64; 3],
}

fn default_alphas() -> [f64; 3] {
    let f = ForgettingFactors::default();
    [f.alpha_f, f.alpha_t, f.alpha_l]
}

#[derive(Debug, Serialize)]
pub struct TraceStep {
    pub predicted: usize,
    pub correct: bool,
    pub mf: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct TraceResponse {
    pub times: Vec<String>,
    pub locations: Vec<String>,
    pub steps: Vec<TraceStep>,
}

/// Replay confirmed meals through a fresh profile, recording the
/// personalized decision before each update and the frequencies after it.
pub fn personalizer_trace(req: &TraceRequest) -> Result<TraceResponse, String> {
    let s = |e: mealwise::Error| e.to_string();
    let ctx = ContextSpace::default();
    let [f, t, l] = req.alphas;
    let factors = ForgettingFactors::new(f, t, l).map_err(s)?;
    let mut profile = new_profile("demo", req.probabilities.len(), &ctx, factors).map_err(s)?;
    let mut steps = Vec::with_capacity(req.meals.len());
    for &[class, time, location] in &req.meals {
        let meal = MealContext::new(time, location);
        let d = predict(&req.probabilities, &profile, meal, FactorMask::ALL).map_err(s)?;
        profile.update(class, meal).map_err(s)?;
        steps.push(TraceStep {
            predicted: d.class,
            correct: d.class == class,
            mf: profile.mf().to_vec(),
        });
    }
    Ok(TraceResponse {
        times: ctx.times().to_vec(),
        locations: ctx.locations().to_vec(),
        steps,
    })
}

#[wasm_bindgen]
pub fn ablation_curves(request: &str) -> String {
    respond(parse::<AblationRequest>(request).and_then(|r| ablation(&r)))
}

#[wasm_bindgen]
pub fn gate_sweep(request: &str) -> String {
    respond(parse::<GateRequest>(request).and_then(|r| gate_geometry(&r)))
}

#[wasm_bindgen]
pub fn trace_personalizer(request: &str) -> String {
    respond(parse::<TraceRequest>(request).and_then(|r| personalizer_trace(&r)))
}

/// Default request bodies, keyed by export name.
#[wasm_bindgen]
pub fn default_requests() -> String {
    let mut m = BTreeMap::new();
    m.insert("ablation_curves", serde_json::json!({}));
    m.insert("gate_sweep", serde_json::json!({}));
    m.insert(
        "trace_personalizer",
        serde_json::json!({ "probabilities": [0.4, 0.35, 0.25], "meals": [[1, 0, 0], [1, 0, 0], [2, 2, 1], [1, 0, 0]] }),
    );
    serde_json::to_string(&m).expect("static json")
}
