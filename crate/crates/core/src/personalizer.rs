//! Per-user contextual re-weighting of classifier probabilities.
//!
//! A [`UserProfile`] keeps three pieces of state learned from the user's own
//! meal history:
//!
//! - `mf`, the probability of eating each food,
//! - `mt`, the probability of each meal time given the food,
//! - `ml`, the probability of each location given the food.
//!
//! A classifier's probabilities are multiplied by the matching entries of
//! all three ([`personalize`]); after the true food is known the state moves
//! toward it by an exponential update governed by the forgetting factors
//! ([`UserProfile::update`]). Every update is a convex combination of the
//! old distribution and a one-hot vector, so the simplex constraints hold
//! exactly in real arithmetic and to rounding error in floating point.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, ParseErrorKind, Result};
use crate::linalg::{argmax, Matrix};

/// Discrete meal times and locations a user can report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextSpace {
    times: Vec<String>,
    locations: Vec<String>,
}

impl ContextSpace {
    pub fn new(times: Vec<String>, locations: Vec<String>) -> Result<Self> {
        if times.is_empty() || locations.is_empty() {
            return Err(Error::invalid("context space needs at least one time and one location"));
        }
        for (what, labels) in [("time", &times), ("location", &locations)] {
            let mut seen = std::collections::HashSet::new();
            if let Some(dup) = labels.iter().find(|l| !seen.insert(l.as_str())) {
                return Err(Error::invalid(format!("duplicate {what} label {dup:?}")));
            }
        }
        Ok(Self { times, locations })
    }

    /// Context space with generated labels `t0..`, `l0..`.
    pub fn with_sizes(num_times: usize, num_locations: usize) -> Result<Self> {
        Self::new(
            (0..num_times).map(|i| format!("t{i}")).collect(),
            (0..num_locations).map(|i| format!("l{i}")).collect(),
        )
    }

    pub fn times(&self) -> &[String] {
        &self.times
    }

    pub fn locations(&self) -> &[String] {
        &self.locations
    }

    pub fn num_times(&self) -> usize {
        self.times.len()
    }

    pub fn num_locations(&self) -> usize {
        self.locations.len()
    }
}

impl Default for ContextSpace {
    fn default() -> Self {
        Self::new(
            ["breakfast", "lunch", "dinner", "snack"].map(String::from).to_vec(),
            ["home", "work", "restaurant"].map(String::from).to_vec(),
        )
        .expect("default labels are unique")
    }
}

/// Step sizes of the exponential updates for frequency, time and location.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForgettingFactors {
    pub alpha_f: f64,
    pub alpha_t: f64,
    pub alpha_l: f64,
}

impl ForgettingFactors {
    pub fn new(alpha_f: f64, alpha_t: f64, alpha_l: f64) -> Result<Self> {
        let f = Self {
            alpha_f,
            alpha_t,
            alpha_l,
        };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, a) in [
            ("alpha_f", self.alpha_f),
            ("alpha_t", self.alpha_t),
            ("alpha_l", self.alpha_l),
        ] {
            if !(a > 0.0 && a < 1.0) {
                return Err(Error::invalid(format!("{name} = {a} must lie strictly inside (0, 1)")));
            }
        }
        Ok(())
    }
}

impl Default for ForgettingFactors {
    fn default() -> Self {
        Self {
            alpha_f: 0.003,
            alpha_t: 0.04,
            alpha_l: 0.04,
        }
    }
}

/// Time and location of one meal, as indices into a [`ContextSpace`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MealContext {
    pub time_index: usize,
    pub location_index: usize,
}

impl MealContext {
    pub fn new(time_index: usize, location_index: usize) -> Self {
        Self {
            time_index,
            location_index,
        }
    }
}

/// Which context factors take part in re-weighting and updating.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FactorMask {
    pub frequency: bool,
    pub time: bool,
    pub location: bool,
}

impl FactorMask {
    pub const ALL: Self = Self {
        frequency: true,
        time: true,
        location: true,
    };
    pub const NONE: Self = Self {
        frequency: false,
        time: false,
        location: false,
    };

    pub fn is_none(&self) -> bool {
        !(self.frequency || self.time || self.location)
    }
}

impl Default for FactorMask {
    fn default() -> Self {
        Self::ALL
    }
}

/// Personalizer state for a single user.
#[derive(Debug, Clone, PartialEq)]
pub struct UserProfile {
    user_id: String,
    mf: Vec<f64>,
    mt: Matrix,
    ml: Matrix,
    factors: ForgettingFactors,
}

/// Uniform initial state: every food, and every time/location per food, is equally likely.
pub fn new_profile(
    user_id: impl Into<String>,
    num_classes: usize,
    context: &ContextSpace,
    factors: ForgettingFactors,
) -> Result<UserProfile> {
    if num_classes == 0 {
        return Err(Error::invalid("profile needs at least one class"));
    }
    factors.validate()?;
    let (nt, nl) = (context.num_times(), context.num_locations());
    Ok(UserProfile {
        user_id: user_id.into(),
        mf: vec![1.0 / num_classes as f64; num_classes],
        mt: filled(num_classes, nt, 1.0 / nt as f64),
        ml: filled(num_classes, nl, 1.0 / nl as f64),
        factors,
    })
}

fn filled(rows: usize, cols: usize, v: f64) -> Matrix {
    Matrix::from_vec(rows, cols, vec![v; rows * cols]).expect("shape matches")
}

impl UserProfile {
    pub fn user_id(&self) -> &str {
        &self.user_id
    }

    pub fn num_classes(&self) -> usize {
        self.mf.len()
    }

    pub fn num_times(&self) -> usize {
        self.mt.cols()
    }

    pub fn num_locations(&self) -> usize {
        self.ml.cols()
    }

    pub fn mf(&self) -> &[f64] {
        &self.mf
    }

    pub fn mt(&self) -> &Matrix {
        &self.mt
    }

    pub fn ml(&self) -> &Matrix {
        &self.ml
    }

    pub fn factors(&self) -> ForgettingFactors {
        self.factors
    }

    fn check_context(&self, ctx: MealContext) -> Result<()> {
        if ctx.time_index >= self.num_times() {
            return Err(Error::invalid(format!(
                "time index {} out of range for {} times",
                ctx.time_index,
                self.num_times()
            )));
        }
        if ctx.location_index >= self.num_locations() {
            return Err(Error::invalid(format!(
                "location index {} out of range for {} locations",
                ctx.location_index,
                self.num_locations()
            )));
        }
        Ok(())
    }

    /// Move the profile toward a confirmed meal of `true_class` in `ctx`.
    pub fn update(&mut self, true_class: usize, ctx: MealContext) -> Result<()> {
        self.update_masked(true_class, ctx, FactorMask::ALL)
    }

    /// Like [`update`](Self::update) but only for the enabled factors.
    pub fn update_masked(&mut self, true_class: usize, ctx: MealContext, mask: FactorMask) -> Result<()> {
        if true_class >= self.num_classes() {
            return Err(Error::invalid(format!(
                "class {true_class} out of range for {} classes",
                self.num_classes()
            )));
        }
        self.check_context(ctx)?;
        if mask.frequency {
            reinforce(&mut self.mf, true_class, self.factors.alpha_f);
        }
        if mask.time {
            reinforce(self.mt.row_mut(true_class), ctx.time_index, self.factors.alpha_t);
        }
        if mask.location {
            reinforce(self.ml.row_mut(true_class), ctx.location_index, self.factors.alpha_l);
        }
        Ok(())
    }

    /// Grow the profile by `k_new` classes.
    ///
    /// Existing frequencies are scaled by `|F| / (|F| + k_new)` and each
    /// newcomer starts at `1 / (|F| + k_new)`; new time and location rows
    /// are uniform.
    pub fn expand_classes(&mut self, k_new: usize) -> Result<()> {
        if k_new == 0 {
            return Err(Error::invalid("expand_classes needs k_new >= 1"));
        }
        let old = self.num_classes();
        let total = old + k_new;
        let scale = old as f64 / total as f64;
        self.mf.iter_mut().for_each(|m| *m *= scale);
        self.mf.extend(std::iter::repeat_n(1.0 / total as f64, k_new));
        self.mt = grow_rows(&self.mt, k_new);
        self.ml = grow_rows(&self.ml, k_new);
        Ok(())
    }
}

fn grow_rows(m: &Matrix, extra: usize) -> Matrix {
    let cols = m.cols();
    let mut data = m.as_slice().to_vec();
    data.extend(std::iter::repeat_n(1.0 / cols as f64, extra * cols));
    Matrix::from_vec(m.rows() + extra, cols, data).expect("shape matches")
}

/// `v[i] += α(1 − v[i])` for the winner, `v[j] *= 1 − α` for the rest.
fn reinforce(v: &mut [f64], winner: usize, alpha: f64) {
    for (j, x) in v.iter_mut().enumerate() {
        if j == winner {
            *x += alpha * (1.0 - *x);
        } else {
            *x *= 1.0 - alpha;
        }
    }
}

/// Personalized scores `p_f · mf_f · mt[f, t] · ml[f, l]` (unnormalized).
pub fn personalize(p: &[f64], profile: &UserProfile, ctx: MealContext) -> Result<Vec<f64>> {
    personalize_masked(p, profile, ctx, FactorMask::ALL)
}

/// [`personalize`] with disabled factors left out of the product.
pub fn personalize_masked(p: &[f64], profile: &UserProfile, ctx: MealContext, mask: FactorMask) -> Result<Vec<f64>> {
    if p.len() != profile.num_classes() {
        return Err(Error::Dimension {
            expected: profile.num_classes(),
            got: p.len(),
        });
    }
    profile.check_context(ctx)?;
    Ok(p.iter()
        .enumerate()
        .map(|(f, &pf)| {
            let mut s = pf;
            if mask.frequency {
                s *= profile.mf[f];
            }
            if mask.time {
                s *= profile.mt.get(f, ctx.time_index);
            }
            if mask.location {
                s *= profile.ml.get(f, ctx.location_index);
            }
            s
        })
        .collect())
}

/// Copy of `scores` scaled to sum to one; all-zero input is returned unchanged.
pub fn normalized(scores: &[f64]) -> Vec<f64> {
    let sum: f64 = scores.iter().sum();
    if sum > 0.0 {
        scores.iter().map(|s| s / sum).collect()
    } else {
        scores.to_vec()
    }
}

/// Outcome of [`detect`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Detection {
    pub class: usize,
    /// Every score was zero, so `class` carries no information.
    pub degenerate: bool,
}

/// Argmax of the personalized scores, lowest index on ties.
pub fn detect(pp: &[f64]) -> Result<Detection> {
    let class = argmax(pp).ok_or_else(|| Error::invalid("cannot detect on an empty score vector"))?;
    Ok(Detection {
        class,
        degenerate: pp.iter().all(|&s| s == 0.0),
    })
}

/// Personalized prediction that falls back to the bare classifier when the
/// personalized scores underflow to zero.
pub fn predict(p: &[f64], profile: &UserProfile, ctx: MealContext, mask: FactorMask) -> Result<Detection> {
    let pp = personalize_masked(p, profile, ctx, mask)?;
    let det = detect(&pp)?;
    if det.degenerate {
        let class = argmax(p).ok_or_else(|| Error::invalid("empty probability vector"))?;
        return Ok(Detection {
            class,
            degenerate: true,
        });
    }
    Ok(det)
}

/// Serialized form of a profile, one JSON object per user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSnapshot {
    pub user_id: String,
    pub classes: usize,
    pub mf: Vec<f64>,
    pub mt: Vec<Vec<f64>>,
    pub ml: Vec<Vec<f64>>,
    pub alphas: [f64; 3],
}

impl From<&UserProfile> for ProfileSnapshot {
    fn from(p: &UserProfile) -> Self {
        let rows = |m: &Matrix| (0..m.rows()).map(|r| m.row(r).to_vec()).collect();
        Self {
            user_id: p.user_id.clone(),
            classes: p.num_classes(),
            mf: p.mf.clone(),
            mt: rows(&p.mt),
            ml: rows(&p.ml),
            alphas: [p.factors.alpha_f, p.factors.alpha_t, p.factors.alpha_l],
        }
    }
}

impl TryFrom<ProfileSnapshot> for UserProfile {
    type Error = Error;

    fn try_from(s: ProfileSnapshot) -> Result<Self> {
        let [alpha_f, alpha_t, alpha_l] = s.alphas;
        let factors = ForgettingFactors::new(alpha_f, alpha_t, alpha_l)?;
        let mt = Matrix::from_rows(&s.mt).ok_or_else(|| Error::invalid("ragged mt"))?;
        let ml = Matrix::from_rows(&s.ml).ok_or_else(|| Error::invalid("ragged ml"))?;
        if s.mf.len() != s.classes || mt.rows() != s.classes || ml.rows() != s.classes {
            return Err(Error::invalid("profile shapes disagree with class count"));
        }
        if s.classes == 0 || mt.cols() == 0 || ml.cols() == 0 {
            return Err(Error::invalid("profile has an empty dimension"));
        }
        Ok(Self {
            user_id: s.user_id,
            mf: s.mf,
            mt,
            ml,
            factors,
        })
    }
}

pub fn write_profiles<W: Write>(mut out: W, profiles: &[UserProfile]) -> Result<()> {
    for p in profiles {
        let line = crate::json::to_string(&ProfileSnapshot::from(p))?;
        writeln!(out, "{line}").map_err(|e| Error::io("<profiles>", e))?;
    }
    Ok(())
}

pub fn read_profiles<R: BufRead>(input: R) -> Result<Vec<UserProfile>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<profiles>", e))?;
        if line.is_empty() {
            continue;
        }
        let snap: ProfileSnapshot = serde_json::from_str(&line)
            .map_err(|e| Error::parse(i + 1, ParseErrorKind::MalformedRecord(e.to_string())))?;
        out.push(UserProfile::try_from(snap)?);
    }
    Ok(out)
}

pub fn save_profiles(path: &Path, profiles: &[UserProfile]) -> Result<()> {
    let mut buf = Vec::new();
    write_profiles(&mut buf, profiles)?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load_profiles(path: &Path) -> Result<Vec<UserProfile>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_profiles(std::io::BufReader::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn space(t: usize, l: usize) -> ContextSpace {
        ContextSpace::with_sizes(t, l).unwrap()
    }

    fn profile(f: usize, t: usize, l: usize) -> UserProfile {
        new_profile("u", f, &space(t, l), ForgettingFactors::default()).unwrap()
    }

    fn with_alpha_f(mut p: UserProfile, a: f64) -> UserProfile {
        p.factors.alpha_f = a;
        p
    }

    #[test]
    fn uniform_init() {
        let p = profile(4, 3, 2);
        assert_eq!(p.mf(), &[0.25; 4]);
        for r in 0..4 {
            assert_eq!(p.mt().row(r), &[1.0 / 3.0; 3]);
            assert_eq!(p.ml().row(r), &[0.5, 0.5]);
        }
        let p = profile(1, 1, 1);
        assert_eq!(p.mf(), &[1.0]);
        assert_eq!(p.mt().as_slice(), &[1.0]);
        assert_eq!(p.ml().as_slice(), &[1.0]);
    }

    #[test]
    fn food101_sized_profile_satisfies_simplex() {
        let p = profile(101, 4, 3);
        assert_eq!(p.mf()[7], 1.0 / 101.0);
        assert!((p.mf().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for r in 0..101 {
            assert!((p.mt().row(r).iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!((p.ml().row(r).iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_degenerate_construction() {
        let f = ForgettingFactors::default();
        assert!(matches!(
            new_profile("u", 0, &space(1, 1), f),
            Err(Error::InvalidArgument(_))
        ));
        assert!(ContextSpace::new(vec![], vec!["home".into()]).is_err());
        assert!(ContextSpace::new(vec!["a".into(), "a".into()], vec!["home".into()]).is_err());
        assert!(ForgettingFactors::new(0.0, 0.5, 0.5).is_err());
        assert!(ForgettingFactors::new(0.5, 1.0, 0.5).is_err());
    }

    #[test]
    fn personalize_is_the_elementwise_product() {
        let mut p = profile(2, 2, 2);
        p.mf = vec![0.9, 0.1];
        let pp = personalize(&[0.5, 0.5], &p, MealContext::new(0, 1)).unwrap();
        assert!((pp[0] - 0.1125).abs() < 1e-15);
        assert!((pp[1] - 0.0125).abs() < 1e-15);
    }

    #[test]
    fn fresh_profile_scales_by_constant() {
        let p = profile(3, 4, 2);
        let probs = [0.2, 0.3, 0.5];
        let pp = personalize(&probs, &p, MealContext::new(2, 1)).unwrap();
        for (a, b) in pp.iter().zip(probs) {
            assert!((a - b / 24.0).abs() < 1e-15);
        }
        let n = normalized(&pp);
        assert!((n.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn strong_frequency_prior_flips_argmax() {
        let mut p = profile(2, 2, 2);
        p.mf = vec![0.99, 0.01];
        let probs = [0.2, 0.8];
        let pp = personalize(&probs, &p, MealContext::new(0, 0)).unwrap();
        // brute-force product
        let expect: Vec<f64> = probs.iter().zip(&p.mf).map(|(a, m)| a * m * 0.25).collect();
        assert_eq!(argmax(&probs), Some(1));
        assert_eq!(argmax(&expect), Some(0));
        assert_eq!(detect(&pp).unwrap().class, 0);
    }

    #[test]
    fn personalize_checks_dimensions() {
        let p = profile(3, 2, 2);
        assert!(matches!(
            personalize(&[0.5, 0.5], &p, MealContext::new(0, 0)),
            Err(Error::Dimension { expected: 3, got: 2 })
        ));
        assert!(personalize(&[0.2, 0.3, 0.5], &p, MealContext::new(2, 0)).is_err());
    }

    #[test]
    fn detect_rules() {
        assert_eq!(
            detect(&[0.1, 0.7, 0.2]).unwrap(),
            Detection {
                class: 1,
                degenerate: false
            }
        );
        assert_eq!(detect(&[0.4, 0.4]).unwrap().class, 0);
        assert_eq!(
            detect(&[0.0, 0.0, 0.0]).unwrap(),
            Detection {
                class: 0,
                degenerate: true
            }
        );
        assert!(detect(&[]).is_err());
    }

    #[test]
    fn predict_falls_back_on_underflow() {
        let mut p = profile(3, 1, 1);
        p.mf = vec![0.0, 0.0, 1.0];
        let det = predict(&[0.1, 0.9, 0.0], &p, MealContext::new(0, 0), FactorMask::ALL).unwrap();
        assert_eq!(
            det,
            Detection {
                class: 1,
                degenerate: true
            }
        );
    }

    #[test]
    fn frequency_update_matches_hand_arithmetic() {
        let mut p = with_alpha_f(profile(4, 1, 1), 0.1);
        p.update(0, MealContext::new(0, 0)).unwrap();
        let expect = [0.325, 0.225, 0.225, 0.225];
        for (a, b) in p.mf().iter().zip(expect) {
            assert!((a - b).abs() < 1e-15, "{a} vs {b}");
        }
        assert!((p.mf().iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn time_update_touches_only_the_true_row() {
        let mut p = profile(3, 3, 2);
        let before = p.clone();
        p.update(2, MealContext::new(1, 0)).unwrap();
        let row = p.mt().row(2);
        assert!((row[0] - 0.32).abs() < 1e-15);
        assert!((row[1] - 0.36).abs() < 1e-15);
        assert!((row[2] - 0.32).abs() < 1e-15);
        for r in 0..2 {
            assert_eq!(p.mt().row(r), before.mt().row(r));
            assert_eq!(p.ml().row(r), before.ml().row(r));
        }
    }

    #[test]
    fn repeated_updates_follow_closed_form() {
        let f = 7usize;
        let alpha = 0.04;
        let mut p = with_alpha_f(profile(f, 2, 2), alpha);
        for n in 1..=100 {
            p.update(3, MealContext::new(0, 0)).unwrap();
            let closed = 1.0 - (1.0 - alpha).powi(n) * (1.0 - 1.0 / f as f64);
            assert!((p.mf()[3] - closed).abs() < 1e-12, "n={n}");
        }
    }

    #[test]
    fn masked_update_skips_disabled_factors() {
        let mut p = profile(3, 2, 2);
        let before = p.clone();
        let mask = FactorMask {
            frequency: false,
            time: true,
            location: false,
        };
        p.update_masked(1, MealContext::new(1, 1), mask).unwrap();
        assert_eq!(p.mf(), before.mf());
        assert_eq!(p.ml(), before.ml());
        assert_ne!(p.mt(), before.mt());
    }

    #[test]
    fn update_rejects_out_of_range() {
        let mut p = profile(3, 2, 2);
        assert!(p.update(3, MealContext::new(0, 0)).is_err());
        assert!(p.update(0, MealContext::new(2, 0)).is_err());
        assert!(p.update(0, MealContext::new(0, 2)).is_err());
    }

    #[test]
    fn expand_classes_rescales_proportionally() {
        let mut p = profile(4, 2, 2);
        p.expand_classes(1).unwrap();
        for m in p.mf() {
            assert!((m - 0.2).abs() < 1e-15);
        }

        let mut p = profile(2, 3, 2);
        p.mf = vec![0.7, 0.3];
        p.expand_classes(2).unwrap();
        let expect = [0.35, 0.15, 0.25, 0.25];
        for (a, b) in p.mf().iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((p.mf().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(p.mt().rows(), 4);
        assert_eq!(p.mt().row(3), &[1.0 / 3.0; 3]);
        assert_eq!(p.ml().row(2), &[0.5, 0.5]);

        assert!(p.expand_classes(0).is_err());
    }

    #[test]
    fn snapshot_round_trip_is_bit_exact() {
        let mut p = profile(5, 3, 2);
        for i in 0..50 {
            p.update(i % 5, MealContext::new(i % 3, i % 2)).unwrap();
        }
        let mut buf = Vec::new();
        write_profiles(&mut buf, std::slice::from_ref(&p)).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("\"alphas\""));
        let back = read_profiles(&buf[..]).unwrap();
        assert_eq!(back, vec![p]);
    }
}
