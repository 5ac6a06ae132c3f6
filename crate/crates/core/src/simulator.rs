//! Simulated personal eating patterns and context-tagged meal streams.
//!
//! Each user eats from a random subset of the global food classes. Within
//! the subset, frequencies follow a Zipf law over a random ranking, and each
//! food has its own symmetric-Dirichlet distribution over meal times and
//! locations. Low concentration gives peaky, food-specific habits; high
//! concentration gives near-uniform context that carries no signal.

use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, ParseErrorKind, Result};
use crate::features::{EmbeddingDataset, Split};
use crate::personalizer::{ContextSpace, MealContext};

pub const PATTERN_FORMAT: &str = "pat/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatternSpec {
    pub num_users: usize,
    pub classes_per_user_mean: f64,
    pub meals_per_user: usize,
    /// Zipf exponent; 0 makes every food in the subset equally frequent.
    pub frequency_skew: f64,
    pub context_space: ContextSpace,
    /// Dirichlet concentration of the per-food time distributions.
    pub context_concentration: f64,
    /// Concentration of the per-food location distributions when it should
    /// differ from `context_concentration`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub location_concentration: Option<f64>,
    pub seed: u64,
}

impl Default for PatternSpec {
    /// Twenty users, 44 foods on average, 300 meals each.
    fn default() -> Self {
        Self {
            num_users: 20,
            classes_per_user_mean: 44.0,
            meals_per_user: 300,
            frequency_skew: 1.0,
            context_space: ContextSpace::default(),
            context_concentration: 0.3,
            location_concentration: None,
            seed: 0,
        }
    }
}

impl PatternSpec {
    pub fn validate(&self) -> Result<()> {
        if self.meals_per_user == 0 {
            return Err(Error::invalid("meals_per_user must be >= 1"));
        }
        if !(self.classes_per_user_mean >= 1.0 && self.classes_per_user_mean.is_finite()) {
            return Err(Error::invalid("classes_per_user_mean must be >= 1"));
        }
        if !(self.frequency_skew >= 0.0 && self.frequency_skew.is_finite()) {
            return Err(Error::invalid("frequency_skew must be >= 0"));
        }
        for c in [Some(self.context_concentration), self.location_concentration]
            .into_iter()
            .flatten()
        {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::invalid("context concentration must be > 0"));
            }
        }
        Ok(())
    }

    pub fn location_concentration(&self) -> f64 {
        self.location_concentration.unwrap_or(self.context_concentration)
    }
}

/// One simulated user's habits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonalPattern {
    pub user_id: String,
    /// Global class indices, most frequent first.
    pub food_subset: Vec<usize>,
    pub food_freq: Vec<f64>,
    pub food_time_cond: Vec<Vec<f64>>,
    pub food_loc_cond: Vec<Vec<f64>>,
}

impl PersonalPattern {
    /// Position of a global class in the subset.
    pub fn position(&self, class: usize) -> Option<usize> {
        self.food_subset.iter().position(|&c| c == class)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MealEvent {
    pub class: usize,
    pub context: MealContext,
    /// Index of the embedding record in the source dataset.
    pub record: usize,
    pub embedding: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MealStream {
    pub events: Vec<MealEvent>,
}

impl MealStream {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// Draw from a categorical distribution by inverse CDF.
pub(crate) fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Rounding can leave the total a hair below one.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Symmetric Dirichlet draw via normalized Gamma variates.
fn sample_dirichlet<R: Rng + ?Sized>(k: usize, concentration: f64, rng: &mut R) -> Vec<f64> {
    let gamma = Gamma::new(concentration, 1.0).expect("concentration validated > 0");
    let mut v: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
    let sum: f64 = v.iter().sum();
    if !(sum > 0.0 && sum.is_finite()) {
        // Every variate underflowed; the limit of a vanishing concentration is one-hot.
        let hot = rng.random_range(0..k);
        return (0..k).map(|i| if i == hot { 1.0 } else { 0.0 }).collect();
    }
    v.iter_mut().for_each(|x| *x /= sum);
    v
}

/// Zipf weights `1 / rank^skew`, normalized.
pub fn zipf_weights(n: usize, skew: f64) -> Vec<f64> {
    let w: Vec<f64> = (1..=n).map(|r| (r as f64).powf(-skew)).collect();
    let sum: f64 = w.iter().sum();
    w.into_iter().map(|x| x / sum).collect()
}

pub fn sample_user_pattern<R: Rng + ?Sized>(
    spec: &PatternSpec,
    user_id: impl Into<String>,
    global_classes: &[usize],
    rng: &mut R,
) -> Result<PersonalPattern> {
    spec.validate()?;
    let n = global_classes.len();
    if spec.classes_per_user_mean > n as f64 {
        return Err(Error::invalid(format!(
            "classes_per_user_mean {} exceeds the {n} available classes",
            spec.classes_per_user_mean
        )));
    }
    let poisson = Poisson::new(spec.classes_per_user_mean).expect("mean validated >= 1");
    let size = (poisson.sample(rng) as usize).clamp(1, n);
    let mut pool = global_classes.to_vec();
    let (chosen, _) = pool.partial_shuffle(rng, size);
    let food_subset = chosen.to_vec();
    let food_freq = zipf_weights(size, spec.frequency_skew);
    let nt = spec.context_space.num_times();
    let nl = spec.context_space.num_locations();
    let food_time_cond = (0..size)
        .map(|_| sample_dirichlet(nt, spec.context_concentration, rng))
        .collect();
    let food_loc_cond = (0..size)
        .map(|_| sample_dirichlet(nl, spec.location_concentration(), rng))
        .collect();
    Ok(PersonalPattern {
        user_id: user_id.into(),
        food_subset,
        food_freq,
        food_time_cond,
        food_loc_cond,
    })
}

pub fn sample_meal_stream<R: Rng + ?Sized>(
    pattern: &PersonalPattern,
    embeddings: &EmbeddingDataset,
    length: usize,
    rng: &mut R,
) -> Result<MealStream> {
    let by_class = embeddings.indices_by_class(Split::Test);
    for &c in &pattern.food_subset {
        if by_class.get(c).is_none_or(Vec::is_empty) {
            return Err(Error::InsufficientData(format!(
                "class {c} has no test-split embeddings"
            )));
        }
    }
    let events = (0..length)
        .map(|_| {
            let k = sample_categorical(&pattern.food_freq, rng);
            let class = pattern.food_subset[k];
            let time_index = sample_categorical(&pattern.food_time_cond[k], rng);
            let location_index = sample_categorical(&pattern.food_loc_cond[k], rng);
            let pool = &by_class[class];
            let record = pool[rng.random_range(0..pool.len())];
            MealEvent {
                class,
                context: MealContext::new(time_index, location_index),
                record,
                embedding: embeddings.records()[record].vector.clone(),
            }
        })
        .collect();
    Ok(MealStream { events })
}

/// A simulated user together with their materialized stream.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedUser {
    pub pattern: PersonalPattern,
    pub stream: MealStream,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatternCorpus {
    pub spec: PatternSpec,
    pub users: Vec<SimulatedUser>,
}

/// All users of `spec` over every class of `embeddings`. User `u` draws from
/// its own generator, so the corpus does not depend on generation order.
pub fn generate_corpus(spec: &PatternSpec, embeddings: &EmbeddingDataset) -> Result<PatternCorpus> {
    spec.validate()?;
    let classes: Vec<usize> = (0..embeddings.num_classes()).collect();
    let users = (0..spec.num_users)
        .map(|u| {
            let mut rng = crate::rng::for_user(spec.seed, u as u64);
            let pattern = sample_user_pattern(spec, format!("user{u:02}"), &classes, &mut rng)?;
            let stream = sample_meal_stream(&pattern, embeddings, spec.meals_per_user, &mut rng)?;
            Ok(SimulatedUser { pattern, stream })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PatternCorpus {
        spec: spec.clone(),
        users,
    })
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CorpusHeader {
    format: String,
    spec: PatternSpec,
    embedding_dim: usize,
    embedding_classes: usize,
    embedding_records: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct UserLine {
    #[serde(flatten)]
    pattern: PersonalPattern,
    /// `[class, time_index, location_index, record]` per meal.
    stream: Vec<[usize; 4]>,
}

pub fn write_corpus<W: Write>(mut out: W, corpus: &PatternCorpus, embeddings: &EmbeddingDataset) -> Result<()> {
    let io = |e| Error::io("<patterns>", e);
    let header = CorpusHeader {
        format: PATTERN_FORMAT.into(),
        spec: corpus.spec.clone(),
        embedding_dim: embeddings.dim(),
        embedding_classes: embeddings.num_classes(),
        embedding_records: embeddings.records().len(),
    };
    writeln!(out, "{}", crate::json::to_string(&header)?).map_err(io)?;
    for u in &corpus.users {
        let line = UserLine {
            pattern: u.pattern.clone(),
            stream: u
                .stream
                .events
                .iter()
                .map(|e| [e.class, e.context.time_index, e.context.location_index, e.record])
                .collect(),
        };
        writeln!(out, "{}", crate::json::to_string(&line)?).map_err(io)?;
    }
    Ok(())
}

/// Read a corpus, resolving embedding references against `embeddings`.
pub fn read_corpus<R: BufRead>(input: R, embeddings: &EmbeddingDataset) -> Result<PatternCorpus> {
    let mut lines = input.lines();
    let header_line = lines
        .next()
        .ok_or_else(|| Error::parse(1, ParseErrorKind::MalformedHeader("empty file".into())))?
        .map_err(|e| Error::io("<patterns>", e))?;
    let header: CorpusHeader = serde_json::from_str(&header_line)
        .map_err(|e| Error::parse(1, ParseErrorKind::MalformedHeader(e.to_string())))?;
    if header.format != PATTERN_FORMAT {
        return Err(Error::parse(
            1,
            ParseErrorKind::MalformedHeader(format!("unsupported format {:?}", header.format)),
        ));
    }
    if header.embedding_classes != embeddings.num_classes()
        || header.embedding_records != embeddings.records().len()
        || header.embedding_dim != embeddings.dim()
    {
        return Err(Error::invalid(format!(
            "pattern corpus was built over {} classes / {} records of dim {}, embeddings have {} / {} of dim {}",
            header.embedding_classes,
            header.embedding_records,
            header.embedding_dim,
            embeddings.num_classes(),
            embeddings.records().len(),
            embeddings.dim()
        )));
    }
    let mut users = Vec::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let line = line.map_err(|e| Error::io("<patterns>", e))?;
        let u: UserLine = serde_json::from_str(&line)
            .map_err(|e| Error::parse(lineno, ParseErrorKind::MalformedRecord(e.to_string())))?;
        let bad = |msg: String| Error::parse(lineno, ParseErrorKind::MalformedRecord(msg));
        let events = u
            .stream
            .iter()
            .map(|&[class, t, l, record]| {
                let rec = embeddings
                    .record(record)
                    .ok_or_else(|| bad(format!("record {record} out of range")))?;
                if rec.class != class {
                    return Err(bad(format!("record {record} is class {} not {class}", rec.class)));
                }
                if t >= header.spec.context_space.num_times() || l >= header.spec.context_space.num_locations() {
                    return Err(bad("context index out of range".into()));
                }
                Ok(MealEvent {
                    class,
                    context: MealContext::new(t, l),
                    record,
                    embedding: rec.vector.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        users.push(SimulatedUser {
            pattern: u.pattern,
            stream: MealStream { events },
        });
    }
    Ok(PatternCorpus {
        spec: header.spec,
        users,
    })
}

pub fn save_corpus(path: &Path, corpus: &PatternCorpus, embeddings: &EmbeddingDataset) -> Result<()> {
    let mut buf = Vec::new();
    write_corpus(&mut buf, corpus, embeddings)?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load_corpus(path: &Path, embeddings: &EmbeddingDataset) -> Result<PatternCorpus> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_corpus(std::io::BufReader::new(f), embeddings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{generate_synthetic, split_dataset, SyntheticClusterSpec};

    fn embeddings(classes: usize) -> EmbeddingDataset {
        let ds = generate_synthetic(&SyntheticClusterSpec {
            num_classes: classes,
            dim: 4,
            centroid_separation: 5.0,
            noise_sigma: 1.0,
            samples_per_class: 10,
            seed: 0,
        })
        .unwrap();
        let (tr, te) = split_dataset(&ds, 0.3, 0).unwrap();
        EmbeddingDataset::combine(tr, te).unwrap()
    }

    fn assert_simplex(v: &[f64]) {
        assert!(v.iter().all(|&x| x >= 0.0));
        assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-9, "{v:?}");
    }

    fn tv(a: &[f64], b: &[f64]) -> f64 {
        0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
    }

    #[test]
    fn zero_skew_is_uniform() {
        let spec = PatternSpec {
            frequency_skew: 0.0,
            classes_per_user_mean: 10.0,
            ..PatternSpec::default()
        };
        let classes: Vec<usize> = (0..30).collect();
        let p = sample_user_pattern(&spec, "u", &classes, &mut crate::rng::for_user(1, 0)).unwrap();
        let n = p.food_subset.len() as f64;
        assert!(p.food_freq.iter().all(|&f| (f - 1.0 / n).abs() < 1e-12));
    }

    #[test]
    fn large_concentration_flattens_context() {
        let spec = PatternSpec {
            context_concentration: 1e6,
            classes_per_user_mean: 10.0,
            ..PatternSpec::default()
        };
        let classes: Vec<usize> = (0..30).collect();
        let p = sample_user_pattern(&spec, "u", &classes, &mut crate::rng::for_user(1, 0)).unwrap();
        for row in p.food_time_cond.iter().chain(&p.food_loc_cond) {
            let u = 1.0 / row.len() as f64;
            assert!(row.iter().all(|&x| (x - u).abs() < 0.01), "{row:?}");
        }
    }

    #[test]
    fn patterns_are_simplices_even_when_peaky() {
        let classes: Vec<usize> = (0..101).collect();
        for conc in [1e-3, 0.05, 1.0, 50.0] {
            let spec = PatternSpec {
                context_concentration: conc,
                ..PatternSpec::default()
            };
            for u in 0..5 {
                let p = sample_user_pattern(&spec, "u", &classes, &mut crate::rng::for_user(3, u)).unwrap();
                assert_simplex(&p.food_freq);
                p.food_time_cond.iter().for_each(|r| assert_simplex(r));
                p.food_loc_cond.iter().for_each(|r| assert_simplex(r));
                let mut sorted = p.food_subset.clone();
                sorted.sort_unstable();
                sorted.dedup();
                assert_eq!(sorted.len(), p.food_subset.len());
            }
        }
    }

    #[test]
    fn mean_larger_than_class_count_is_rejected() {
        let spec = PatternSpec {
            classes_per_user_mean: 11.0,
            ..PatternSpec::default()
        };
        let classes: Vec<usize> = (0..10).collect();
        assert!(sample_user_pattern(&spec, "u", &classes, &mut crate::rng::for_user(0, 0)).is_err());
    }

    #[test]
    fn food101_like_corpus_counts() {
        let emb = embeddings(101);
        let corpus = generate_corpus(&PatternSpec::default(), &emb).unwrap();
        assert_eq!(corpus.users.len(), 20);
        assert!(corpus.users.iter().all(|u| u.stream.len() == 300));
        assert!(corpus.users.iter().all(|u| u
            .stream
            .events
            .iter()
            .all(|e| u.pattern.position(e.class).is_some() && emb.records()[e.record].split == Split::Test)));
        let mean = corpus.users.iter().map(|u| u.pattern.food_subset.len()).sum::<usize>() as f64 / 20.0;
        assert!((mean - 44.0).abs() < 5.0, "mean subset size {mean}");
    }

    #[test]
    fn single_food_stream() {
        let emb = embeddings(5);
        let p = PersonalPattern {
            user_id: "solo".into(),
            food_subset: vec![3],
            food_freq: vec![1.0],
            food_time_cond: vec![vec![0.5, 0.5]],
            food_loc_cond: vec![vec![1.0]],
        };
        let s = sample_meal_stream(&p, &emb, 300, &mut crate::rng::for_user(0, 0)).unwrap();
        assert_eq!(s.len(), 300);
        assert!(s.events.iter().all(|e| e.class == 3 && e.context.location_index == 0));
    }

    #[test]
    fn missing_test_embeddings_is_insufficient_data() {
        let ds = generate_synthetic(&SyntheticClusterSpec {
            num_classes: 3,
            dim: 2,
            centroid_separation: 1.0,
            noise_sigma: 0.1,
            samples_per_class: 4,
            seed: 0,
        })
        .unwrap();
        let p = PersonalPattern {
            user_id: "u".into(),
            food_subset: vec![0],
            food_freq: vec![1.0],
            food_time_cond: vec![vec![1.0]],
            food_loc_cond: vec![vec![1.0]],
        };
        assert!(matches!(
            sample_meal_stream(&p, &ds, 10, &mut crate::rng::for_user(0, 0)),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn empirical_marginals_converge() {
        let emb = embeddings(20);
        let spec = PatternSpec {
            classes_per_user_mean: 12.0,
            frequency_skew: 1.5,
            context_concentration: 0.5,
            ..PatternSpec::default()
        };
        let classes: Vec<usize> = (0..20).collect();
        let mut rng = crate::rng::for_user(11, 0);
        let p = sample_user_pattern(&spec, "u", &classes, &mut rng).unwrap();
        let s = sample_meal_stream(&p, &emb, 10_000, &mut rng).unwrap();
        let k = p.food_subset.len();
        let mut counts = vec![0.0; k];
        let mut time_counts = vec![vec![0.0; 4]; k];
        for e in &s.events {
            let i = p.position(e.class).unwrap();
            counts[i] += 1.0;
            time_counts[i][e.context.time_index] += 1.0;
        }
        let emp: Vec<f64> = counts.iter().map(|c| c / 10_000.0).collect();
        assert!(tv(&emp, &p.food_freq) <= 0.02, "tv {}", tv(&emp, &p.food_freq));
        let mut checked = 0;
        for i in 0..k {
            if counts[i] >= 500.0 {
                let e: Vec<f64> = time_counts[i].iter().map(|c| c / counts[i]).collect();
                assert!(tv(&e, &p.food_time_cond[i]) <= 0.05);
                checked += 1;
            }
        }
        assert!(checked >= 1);
    }

    #[test]
    fn corpus_is_deterministic_and_round_trips() {
        let emb = embeddings(30);
        let spec = PatternSpec {
            num_users: 3,
            classes_per_user_mean: 8.0,
            meals_per_user: 50,
            ..PatternSpec::default()
        };
        let a = generate_corpus(&spec, &emb).unwrap();
        assert_eq!(a, generate_corpus(&spec, &emb).unwrap());
        let mut buf = Vec::new();
        write_corpus(&mut buf, &a, &emb).unwrap();
        assert_eq!(read_corpus(&buf[..], &emb).unwrap(), a);
        assert!(read_corpus(&buf[..], &embeddings(31)).is_err());
    }
}
