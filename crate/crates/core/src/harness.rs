//! Online evaluation: stream each user's meals through a classifier and the
//! personalizer, then aggregate accuracy at checkpoints, per-session
//! breakdowns and factor ablations.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::Example;
use crate::linalg::argmax;
use crate::pdsn::PdsnModel;
use crate::personalizer::{self, new_profile, ContextSpace, FactorMask, ForgettingFactors, MealContext, UserProfile};
use crate::simulator::{MealStream, SimulatedUser};

/// Anything that turns a feature vector into class probabilities.
pub trait Classifier {
    fn num_classes(&self) -> usize;
    fn probabilities(&self, h: &[f64]) -> Result<Vec<f64>>;
}

impl Classifier for PdsnModel {
    fn num_classes(&self) -> usize {
        PdsnModel::num_classes(self)
    }

    fn probabilities(&self, h: &[f64]) -> Result<Vec<f64>> {
        PdsnModel::probabilities(self, h)
    }
}

/// When the profile learns from a meal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateCadence {
    /// After every meal, with the confirmed class.
    #[default]
    EveryMeal,
    /// Only when the prediction was wrong and the user corrected it.
    OnErrorOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunOptions {
    pub factors: FactorMask,
    pub cadence: UpdateCadence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MealOutcome {
    pub meal_index: usize,
    pub true_class: usize,
    pub predicted_class: usize,
    pub correct: bool,
    pub context: MealContext,
    /// Personalized scores underflowed and the bare prediction was used.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamRunRecord {
    pub user_id: String,
    pub entries: Vec<MealOutcome>,
}

impl StreamRunRecord {
    pub fn correct_flags(&self) -> impl Iterator<Item = bool> + '_ {
        self.entries.iter().map(|e| e.correct)
    }
}

/// Stream one user's meals in order, mutating `profile` as feedback arrives.
pub fn run_personalized_stream<C: Classifier + ?Sized>(
    model: &C,
    profile: &mut UserProfile,
    stream: &MealStream,
    options: RunOptions,
) -> Result<StreamRunRecord> {
    if model.num_classes() != profile.num_classes() {
        return Err(Error::invalid(format!(
            "model has {} classes, profile has {}",
            model.num_classes(),
            profile.num_classes()
        )));
    }
    let mut entries = Vec::with_capacity(stream.len());
    for (i, ev) in stream.events.iter().enumerate() {
        if ev.class >= profile.num_classes() {
            return Err(Error::invalid(format!("stream class {} out of range", ev.class)));
        }
        let p = model.probabilities(&ev.embedding)?;
        let (predicted, degenerate) = if options.factors.is_none() {
            (
                argmax(&p).ok_or_else(|| Error::invalid("empty probability vector"))?,
                false,
            )
        } else {
            let d = personalizer::predict(&p, profile, ev.context, options.factors)?;
            (d.class, d.degenerate)
        };
        let correct = predicted == ev.class;
        let learn = match options.cadence {
            UpdateCadence::EveryMeal => true,
            UpdateCadence::OnErrorOnly => !correct,
        };
        if learn && !options.factors.is_none() {
            profile.update_masked(ev.class, ev.context, options.factors)?;
        }
        entries.push(MealOutcome {
            meal_index: i + 1,
            true_class: ev.class,
            predicted_class: predicted,
            correct,
            context: ev.context,
            degenerate,
        });
    }
    Ok(StreamRunRecord {
        user_id: profile.user_id().to_string(),
        entries,
    })
}

/// How accuracy at checkpoint `k` is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccuracyMode {
    /// Over meals `1..=k`.
    #[default]
    Cumulative,
    /// Over the last `n` meals ending at `k`.
    Windowed(usize),
}

pub const DEFAULT_CHECKPOINTS: [usize; 4] = [75, 150, 225, 300];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimestepReport {
    pub checkpoints: Vec<usize>,
    pub mean: Vec<f64>,
    /// Population standard deviation across users.
    pub std: Vec<f64>,
}

/// Population mean and standard deviation.
fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn timestep_accuracy(
    records: &[StreamRunRecord],
    checkpoints: &[usize],
    mode: AccuracyMode,
) -> Result<TimestepReport> {
    if records.is_empty() {
        return Err(Error::invalid("no run records"));
    }
    if checkpoints.is_empty() || checkpoints.contains(&0) {
        return Err(Error::invalid("checkpoints must be non-empty and >= 1"));
    }
    let max = *checkpoints.iter().max().expect("non-empty");
    if let Some(short) = records.iter().find(|r| r.entries.len() < max) {
        return Err(Error::invalid(format!(
            "user {} has {} meals, checkpoint {max} needs more",
            short.user_id,
            short.entries.len()
        )));
    }
    if let AccuracyMode::Windowed(0) = mode {
        return Err(Error::invalid("window must be >= 1"));
    }
    let mut mean = Vec::with_capacity(checkpoints.len());
    let mut std = Vec::with_capacity(checkpoints.len());
    for &k in checkpoints {
        let start = match mode {
            AccuracyMode::Cumulative => 0,
            AccuracyMode::Windowed(w) => k.saturating_sub(w),
        };
        let per_user: Vec<f64> = records
            .iter()
            .map(|r| {
                let window = &r.entries[start..k];
                window.iter().filter(|e| e.correct).count() as f64 / window.len() as f64
            })
            .collect();
        let (m, s) = mean_std(&per_user);
        mean.push(m);
        std.push(s);
    }
    Ok(TimestepReport {
        checkpoints: checkpoints.to_vec(),
        mean,
        std,
    })
}

/// Top-1 accuracy on base classes, new classes and both pooled.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BreakdownReport {
    pub variant: String,
    pub base_acc: f64,
    pub new_acc: f64,
    pub total_acc: f64,
    pub base_count: usize,
    pub new_count: usize,
}

pub fn breakdown_base_new<C: Classifier + ?Sized>(
    variant: impl Into<String>,
    model: &C,
    base_test: &[Example<'_>],
    new_test: &[Example<'_>],
) -> Result<BreakdownReport> {
    if base_test.is_empty() || new_test.is_empty() {
        return Err(Error::invalid("breakdown needs non-empty base and new test sets"));
    }
    let base_labels: std::collections::HashSet<usize> = base_test.iter().map(|e| e.label).collect();
    if new_test.iter().any(|e| base_labels.contains(&e.label)) {
        return Err(Error::invalid("base and new test sets share labels"));
    }
    let count = |set: &[Example<'_>]| -> Result<usize> {
        let mut ok = 0;
        for e in set {
            if argmax(&model.probabilities(e.features)?) == Some(e.label) {
                ok += 1;
            }
        }
        Ok(ok)
    };
    let (b, n) = (count(base_test)?, count(new_test)?);
    Ok(BreakdownReport {
        variant: variant.into(),
        base_acc: b as f64 / base_test.len() as f64,
        new_acc: n as f64 / new_test.len() as f64,
        total_acc: (b + n) as f64 / (base_test.len() + new_test.len()) as f64,
        base_count: base_test.len(),
        new_count: new_test.len(),
    })
}

/// The five factor configurations compared in an ablation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Base,
    #[serde(rename = "frequency")]
    FrequencyOnly,
    #[serde(rename = "time")]
    TimeOnly,
    #[serde(rename = "location")]
    LocationOnly,
    All,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [
        Scenario::Base,
        Scenario::FrequencyOnly,
        Scenario::TimeOnly,
        Scenario::LocationOnly,
        Scenario::All,
    ];

    pub fn mask(self) -> FactorMask {
        let (frequency, time, location) = match self {
            Scenario::Base => (false, false, false),
            Scenario::FrequencyOnly => (true, false, false),
            Scenario::TimeOnly => (false, true, false),
            Scenario::LocationOnly => (false, false, true),
            Scenario::All => (true, true, true),
        };
        FactorMask {
            frequency,
            time,
            location,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Base => "base",
            Scenario::FrequencyOnly => "frequency",
            Scenario::TimeOnly => "time",
            Scenario::LocationOnly => "location",
            Scenario::All => "all",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown scenario {s:?}")))
    }
}

/// Parse a factor list such as `all`, `none`, or `frequency,time`.
pub fn parse_factors(s: &str) -> Result<FactorMask> {
    match s {
        "all" => return Ok(FactorMask::ALL),
        "none" => return Ok(FactorMask::NONE),
        _ => {}
    }
    let mut mask = FactorMask::NONE;
    for part in s.split(',').map(str::trim) {
        match part {
            "frequency" | "freq" => mask.frequency = true,
            "time" => mask.time = true,
            "location" | "loc" => mask.location = true,
            other => return Err(Error::invalid(format!("unknown factor {other:?}"))),
        }
    }
    Ok(mask)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationConfig {
    pub scenarios: Vec<Scenario>,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            scenarios: Scenario::ALL.to_vec(),
        }
    }
}

/// Settings shared by every user of an evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSettings {
    pub context: ContextSpace,
    pub factors: ForgettingFactors,
    pub cadence: UpdateCadence,
    pub checkpoints: Vec<usize>,
    pub mode: AccuracyMode,
    /// Worker threads; results do not depend on this.
    pub jobs: usize,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            context: ContextSpace::default(),
            factors: ForgettingFactors::default(),
            cadence: UpdateCadence::default(),
            checkpoints: DEFAULT_CHECKPOINTS.to_vec(),
            mode: AccuracyMode::default(),
            jobs: 1,
        }
    }
}

/// Run every user from a fresh profile. Users are independent, so they are
/// spread over `settings.jobs` threads; output order follows `users`.
pub fn run_users<C: Classifier + Sync + ?Sized>(
    model: &C,
    users: &[SimulatedUser],
    settings: &EvalSettings,
    factors: FactorMask,
) -> Result<Vec<StreamRunRecord>> {
    let run_one = |u: &SimulatedUser| -> Result<StreamRunRecord> {
        let mut profile = new_profile(
            &*u.pattern.user_id,
            model.num_classes(),
            &settings.context,
            settings.factors,
        )?;
        run_personalized_stream(
            model,
            &mut profile,
            &u.stream,
            RunOptions {
                factors,
                cadence: settings.cadence,
            },
        )
    };
    let jobs = settings.jobs.max(1).min(users.len().max(1));
    if jobs == 1 {
        return users.iter().map(run_one).collect();
    }
    let chunk = users.len().div_ceil(jobs);
    std::thread::scope(|scope| {
        let handles: Vec<_> = users
            .chunks(chunk)
            .map(|part| scope.spawn(move || part.iter().map(run_one).collect::<Result<Vec<_>>>()))
            .collect();
        let mut out = Vec::with_capacity(users.len());
        for h in handles {
            out.extend(h.join().expect("evaluation worker panicked")?);
        }
        Ok(out)
    })
}

/// Evaluate one factor configuration and aggregate at the checkpoints.
pub fn evaluate_factors<C: Classifier + Sync + ?Sized>(
    model: &C,
    users: &[SimulatedUser],
    settings: &EvalSettings,
    factors: FactorMask,
) -> Result<TimestepReport> {
    let records = run_users(model, users, settings, factors)?;
    timestep_accuracy(&records, &settings.checkpoints, settings.mode)
}

/// One report per scenario, all over the same users, streams and model.
pub fn run_ablation<C: Classifier + Sync + ?Sized>(
    model: &C,
    users: &[SimulatedUser],
    settings: &EvalSettings,
    config: &AblationConfig,
) -> Result<BTreeMap<Scenario, TimestepReport>> {
    if config.scenarios.is_empty() {
        return Err(Error::invalid("ablation needs at least one scenario"));
    }
    config
        .scenarios
        .iter()
        .map(|&sc| Ok((sc, evaluate_factors(model, users, settings, sc.mask())?)))
        .collect()
}

/// `scenario,model,checkpoint,mean,std` rows.
pub fn write_timestep_table<W: Write>(mut out: W, rows: &[(String, String, TimestepReport)]) -> Result<()> {
    let io = |e| Error::io("<table>", e);
    writeln!(out, "scenario,model,checkpoint,mean,std").map_err(io)?;
    for (scenario, model, report) in rows {
        for (i, k) in report.checkpoints.iter().enumerate() {
            writeln!(out, "{scenario},{model},{k},{},{}", report.mean[i], report.std[i]).map_err(io)?;
        }
    }
    Ok(())
}

/// `checkpoint,scenario,mean,std` rows, grouped by scenario.
pub fn write_plot_data<W: Write>(mut out: W, reports: &BTreeMap<Scenario, TimestepReport>) -> Result<()> {
    let io = |e| Error::io("<plot data>", e);
    writeln!(out, "checkpoint,scenario,mean,std").map_err(io)?;
    for (sc, r) in reports {
        for (i, k) in r.checkpoints.iter().enumerate() {
            writeln!(out, "{k},{sc},{},{}", r.mean[i], r.std[i]).map_err(io)?;
        }
    }
    Ok(())
}

/// `variant,base_acc,new_acc,total_acc,base_count,new_count` rows.
pub fn write_breakdown_table<W: Write>(mut out: W, rows: &[BreakdownReport]) -> Result<()> {
    let io = |e| Error::io("<breakdown>", e);
    writeln!(out, "variant,base_acc,new_acc,total_acc,base_count,new_count").map_err(io)?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.variant, r.base_acc, r.new_acc, r.total_acc, r.base_count, r.new_count
        )
        .map_err(io)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{MealEvent, PersonalPattern};

    /// Returns fixed probabilities regardless of input.
    struct Constant(Vec<f64>);

    impl Classifier for Constant {
        fn num_classes(&self) -> usize {
            self.0.len()
        }
        fn probabilities(&self, _h: &[f64]) -> Result<Vec<f64>> {
            Ok(self.0.clone())
        }
    }

    /// Reads the class straight out of the first feature.
    struct Oracle(usize);

    impl Classifier for Oracle {
        fn num_classes(&self) -> usize {
            self.0
        }
        fn probabilities(&self, h: &[f64]) -> Result<Vec<f64>> {
            let mut p = vec![0.0; self.0];
            p[h[0] as usize] = 1.0;
            Ok(p)
        }
    }

    fn stream(classes: &[usize]) -> MealStream {
        MealStream {
            events: classes
                .iter()
                .enumerate()
                .map(|(i, &c)| MealEvent {
                    class: c,
                    context: MealContext::new(i % 2, 0),
                    record: i,
                    embedding: vec![c as f64],
                })
                .collect(),
        }
    }

    fn record(flags: &[bool]) -> StreamRunRecord {
        StreamRunRecord {
            user_id: "u".into(),
            entries: flags
                .iter()
                .enumerate()
                .map(|(i, &c)| MealOutcome {
                    meal_index: i + 1,
                    true_class: 0,
                    predicted_class: if c { 0 } else { 1 },
                    correct: c,
                    context: MealContext::new(0, 0),
                    degenerate: false,
                })
                .collect(),
        }
    }

    fn profile(n: usize) -> UserProfile {
        new_profile(
            "u",
            n,
            &ContextSpace::with_sizes(2, 1).unwrap(),
            ForgettingFactors::default(),
        )
        .unwrap()
    }

    #[test]
    fn disabled_factors_reproduce_bare_argmax() {
        let model = Constant(vec![0.2, 0.5, 0.3]);
        let mut p = profile(3);
        let rec = run_personalized_stream(
            &model,
            &mut p,
            &stream(&[0, 1, 2, 0, 0]),
            RunOptions {
                factors: FactorMask::NONE,
                ..RunOptions::default()
            },
        )
        .unwrap();
        assert!(rec.entries.iter().all(|e| e.predicted_class == 1));
        assert_eq!(p, profile(3));
        assert_eq!(
            rec.entries.iter().map(|e| e.meal_index).collect::<Vec<_>>(),
            vec![1, 2, 3, 4, 5]
        );
    }

    #[test]
    fn single_food_converges_despite_a_confused_model() {
        // The model prefers class 1, the user only ever eats class 0.
        let model = Constant(vec![0.3, 0.45, 0.25]);
        let mut p = new_profile(
            "u",
            3,
            &ContextSpace::with_sizes(2, 1).unwrap(),
            ForgettingFactors::new(0.05, 0.04, 0.04).unwrap(),
        )
        .unwrap();
        let rec = run_personalized_stream(&model, &mut p, &stream(&[0; 100]), RunOptions::default()).unwrap();
        assert!(!rec.entries[0].correct);
        let first_ok = rec.entries.iter().position(|e| e.correct).unwrap();
        assert!(rec.entries[first_ok..].iter().all(|e| e.correct));
        assert!(first_ok < 20);
    }

    #[test]
    fn error_only_cadence_skips_correct_meals() {
        let model = Oracle(3);
        let mut p = profile(3);
        run_personalized_stream(
            &model,
            &mut p,
            &stream(&[0, 1, 2]),
            RunOptions {
                cadence: UpdateCadence::OnErrorOnly,
                ..RunOptions::default()
            },
        )
        .unwrap();
        assert_eq!(p, profile(3));
    }

    #[test]
    fn class_count_mismatch_is_rejected() {
        let mut p = profile(4);
        assert!(
            run_personalized_stream(&Constant(vec![0.5, 0.5]), &mut p, &stream(&[0]), RunOptions::default()).is_err()
        );
    }

    #[test]
    fn cumulative_checkpoints() {
        let r = timestep_accuracy(&[record(&[true, false, true, true])], &[2, 4], AccuracyMode::Cumulative).unwrap();
        assert_eq!(r.mean, vec![0.5, 0.75]);
        assert_eq!(r.std, vec![0.0, 0.0]);
        let w = timestep_accuracy(
            &[record(&[true, false, true, true])],
            &[2, 4],
            AccuracyMode::Windowed(2),
        )
        .unwrap();
        assert_eq!(w.mean, vec![0.5, 1.0]);
    }

    #[test]
    fn std_is_population_std() {
        let recs = [record(&[true, true]), record(&[false, false])];
        let r = timestep_accuracy(&recs, &[2], AccuracyMode::Cumulative).unwrap();
        assert_eq!(r.mean, vec![0.5]);
        assert_eq!(r.std, vec![0.5]);
        let same = [record(&[true, false]), record(&[true, false])];
        assert_eq!(
            timestep_accuracy(&same, &[2], AccuracyMode::Cumulative).unwrap().std,
            vec![0.0]
        );
    }

    #[test]
    fn prefix_property() {
        let short = record(&[true, false, true]);
        let long = record(&[true, false, true, false, false, false]);
        let a = timestep_accuracy(&[short], &[1, 2, 3], AccuracyMode::Cumulative).unwrap();
        let b = timestep_accuracy(&[long], &[1, 2, 3], AccuracyMode::Cumulative).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn short_streams_are_rejected() {
        assert!(timestep_accuracy(&[record(&[true; 3])], &[4], AccuracyMode::Cumulative).is_err());
        assert!(timestep_accuracy(&[], &[1], AccuracyMode::Cumulative).is_err());
    }

    #[test]
    fn breakdown_pooled_total() {
        let model = Oracle(4);
        let feats: Vec<Vec<f64>> = (0..4).map(|c| vec![c as f64]).collect();
        let base: Vec<Example> = (0..100)
            .map(|i| Example {
                label: 0,
                features: &feats[if i < 90 { 0 } else { 1 }],
            })
            .collect();
        let new: Vec<Example> = (0..100)
            .map(|i| Example {
                label: 3,
                features: &feats[if i < 50 { 3 } else { 2 }],
            })
            .collect();
        let r = breakdown_base_new("m", &model, &base, &new).unwrap();
        assert_eq!((r.base_acc, r.new_acc), (0.9, 0.5));
        assert!((r.total_acc - 0.7).abs() < 1e-15);

        let perfect: Vec<Example> = (0..3)
            .map(|c| Example {
                label: c,
                features: &feats[c],
            })
            .collect();
        let r = breakdown_base_new("m", &model, &perfect[..2], &perfect[2..]).unwrap();
        assert_eq!((r.base_acc, r.new_acc, r.total_acc), (1.0, 1.0, 1.0));
        assert!(breakdown_base_new("m", &model, &[], &perfect).is_err());
        assert!(breakdown_base_new("m", &model, &perfect, &perfect).is_err());
    }

    #[test]
    fn factor_parsing() {
        assert_eq!(parse_factors("all").unwrap(), FactorMask::ALL);
        assert_eq!(parse_factors("none").unwrap(), FactorMask::NONE);
        assert_eq!(
            parse_factors("frequency,time").unwrap(),
            FactorMask {
                frequency: true,
                time: true,
                location: false
            }
        );
        assert!(parse_factors("weather").is_err());
        assert_eq!("time".parse::<Scenario>().unwrap(), Scenario::TimeOnly);
    }

    #[test]
    fn job_count_does_not_change_results() {
        let model = Constant(vec![0.3, 0.4, 0.3]);
        let users: Vec<SimulatedUser> = (0..7)
            .map(|u| SimulatedUser {
                pattern: PersonalPattern {
                    user_id: format!("u{u}"),
                    food_subset: vec![u % 3],
                    food_freq: vec![1.0],
                    food_time_cond: vec![vec![0.5, 0.5]],
                    food_loc_cond: vec![vec![1.0]],
                },
                stream: stream(&[u % 3; 20]),
            })
            .collect();
        let mut settings = EvalSettings {
            context: ContextSpace::with_sizes(2, 1).unwrap(),
            checkpoints: vec![10, 20],
            ..EvalSettings::default()
        };
        let one = run_users(&model, &users, &settings, FactorMask::ALL).unwrap();
        settings.jobs = 3;
        assert_eq!(run_users(&model, &users, &settings, FactorMask::ALL).unwrap(), one);
        assert_eq!(one[4].user_id, "u4");
    }
}
