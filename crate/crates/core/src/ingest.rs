//! Rating-log ingestion and dataset construction.
//!
//! The pipeline goes: parse a delimited rating log, binarize ratings,
//! deduplicate (user, item) pairs keeping the most recent event, map external
//! ids to dense indices, then resample into the skewed split whose test
//! partition simulates uniform item exposure. A synthetic generator with
//! known ground-truth reward probabilities is provided for oracle testing.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{CauseError, Result};
use crate::math::{sigmoid, Matrix};
use crate::types::{Interaction, SampleOrigin};

/// Supported rating-log layouts; both carry `user, item, rating, timestamp`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RatingFormat {
    CommaSep,
    DoubleColonSep,
}

impl RatingFormat {
    fn separator(&self) -> &'static str {
        match self {
            RatingFormat::CommaSep => ",",
            RatingFormat::DoubleColonSep => "::",
        }
    }

    pub fn from_token(s: &str) -> Result<Self> {
        match s {
            "comma" => Ok(RatingFormat::CommaSep),
            "double_colon" => Ok(RatingFormat::DoubleColonSep),
            other => Err(CauseError::Config(format!(
                "unknown rating format `{other}` (expected `comma` or `double_colon`)"
            ))),
        }
    }
}

/// One raw rating event as it appears in the log.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RatingRecord {
    pub user_id: String,
    pub item_id: String,
    pub rating: u8,
    pub timestamp: i64,
}

/// External-id to dense-index maps for users and items.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IdMaps {
    pub users: HashMap<String, usize>,
    pub items: HashMap<String, usize>,
}

impl IdMaps {
    /// Identity maps for data that is already dense-indexed.
    pub fn identity(num_users: usize, num_items: usize) -> Self {
        IdMaps {
            users: (0..num_users).map(|i| (i.to_string(), i)).collect(),
            items: (0..num_items).map(|i| (i.to_string(), i)).collect(),
        }
    }
}

/// Event-count fractions for the train / validation / test partitions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitFractions {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl SplitFractions {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.validation, self.test];
        if parts.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(CauseError::Config(
                "split fractions must lie in [0, 1]".into(),
            ));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(CauseError::Config(format!(
                "split fractions must sum to 1 (got {sum})"
            )));
        }
        if self.validation + self.test <= 0.0 {
            return Err(CauseError::Config(
                "validation + test fraction must be positive".into(),
            ));
        }
        Ok(())
    }
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions {
            train: 0.7,
            validation: 0.1,
            test: 0.2,
        }
    }
}

/// The resampled dataset: biased training sample `s_c`, uniform-exposure
/// training sample `s_t`, and uniform-exposure validation/test partitions.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitDataset {
    pub s_c: Vec<Interaction>,
    pub s_t: Vec<Interaction>,
    pub validation: Vec<Interaction>,
    pub test: Vec<Interaction>,
    pub num_users: usize,
    pub num_items: usize,
    pub id_maps: IdMaps,
}

impl SplitDataset {
    pub fn total_events(&self) -> usize {
        self.s_c.len() + self.s_t.len() + self.validation.len() + self.test.len()
    }
}

/// Split provenance recorded in the manifest sidecar.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitMeta {
    pub seed: u64,
    pub fractions: SplitFractions,
    pub s_t_injection: f64,
}

/// Parse a rating log with one `user, item, rating, timestamp` event per
/// line. Blank lines are skipped; anything else malformed is an error that
/// names the offending line.
pub fn parse_ratings(path: &Path, format: RatingFormat) -> Result<Vec<RatingRecord>> {
    let text = fs::read_to_string(path)?;
    let mut records = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        records.push(parse_rating_line(line, format, idx + 1)?);
    }
    Ok(records)
}

fn parse_rating_line(line: &str, format: RatingFormat, lineno: usize) -> Result<RatingRecord> {
    let fields: Vec<&str> = line.split(format.separator()).collect();
    if fields.len() != 4 {
        return Err(CauseError::Parse {
            line: lineno,
            msg: format!("expected 4 fields, got {}", fields.len()),
        });
    }
    let rating: i64 = fields[2].trim().parse().map_err(|_| CauseError::Parse {
        line: lineno,
        msg: format!("invalid rating `{}`", fields[2]),
    })?;
    if !(1..=5).contains(&rating) {
        return Err(CauseError::Parse {
            line: lineno,
            msg: format!("rating {rating} outside 1..=5"),
        });
    }
    let timestamp: i64 = fields[3].trim().parse().map_err(|_| CauseError::Parse {
        line: lineno,
        msg: format!("invalid timestamp `{}`", fields[3]),
    })?;
    Ok(RatingRecord {
        user_id: fields[0].trim().to_string(),
        item_id: fields[1].trim().to_string(),
        rating: rating as u8,
        timestamp,
    })
}

/// A 5-star rating is a positive reward; everything else is zero.
pub fn binarize(rating: u8) -> Result<bool> {
    if !(1..=5).contains(&rating) {
        return Err(CauseError::Domain(format!(
            "rating {rating} outside 1..=5"
        )));
    }
    Ok(rating == 5)
}

/// Binarize and dense-index a record list. Duplicate (user, item) pairs keep
/// the event with the largest timestamp (later file position wins ties).
/// Dense indices are assigned in first-appearance order, so the result is
/// reproducible from the input alone.
pub fn index_events(records: &[RatingRecord]) -> Result<(Vec<Interaction>, IdMaps)> {
    let mut maps = IdMaps::default();
    let mut kept: Vec<Interaction> = Vec::new();
    let mut kept_ts: Vec<i64> = Vec::new();
    let mut slot_of: HashMap<(usize, usize), usize> = HashMap::new();

    for rec in records {
        let next_user = maps.users.len();
        let user = *maps.users.entry(rec.user_id.clone()).or_insert(next_user);
        let next_item = maps.items.len();
        let item = *maps.items.entry(rec.item_id.clone()).or_insert(next_item);
        let reward = binarize(rec.rating)?;
        let event = Interaction::new(user, item, reward, SampleOrigin::Control);
        match slot_of.get(&(user, item)) {
            Some(&slot) => {
                if rec.timestamp >= kept_ts[slot] {
                    kept[slot] = event;
                    kept_ts[slot] = rec.timestamp;
                }
            }
            None => {
                slot_of.insert((user, item), kept.len());
                kept.push(event);
                kept_ts.push(rec.timestamp);
            }
        }
    }
    Ok((kept, maps))
}

/// Per-item event counts.
pub fn item_counts(events: &[Interaction], num_items: usize) -> Vec<usize> {
    let mut counts = vec![0usize; num_items];
    for e in events {
        counts[e.item] += 1;
    }
    counts
}

/// Chi-square distance between the empirical item marginal of `counts` and
/// the uniform distribution over the same support.
pub fn chi_square_vs_uniform(counts: &[usize]) -> f64 {
    let k = counts.len();
    let n: usize = counts.iter().sum();
    if k == 0 || n == 0 {
        return 0.0;
    }
    let u = 1.0 / k as f64;
    counts
        .iter()
        .map(|&c| {
            let p = c as f64 / n as f64;
            (p - u) * (p - u) / u
        })
        .sum()
}

/// Resample events into the skewed split.
///
/// Each event enters the uniform pool with probability proportional to the
/// reciprocal of its item's (add-one smoothed) popularity, scaled so the
/// expected pool mass equals `validation + test` of all events. The pool is
/// then cut into validation and test by their fraction ratio, and a further
/// `s_t_injection` share of the test-distribution events is moved into the
/// uniform-exposure training sample `s_t`. The remainder of the input stays
/// in the biased training sample `s_c`.
///
/// Deterministic for a fixed seed: a ChaCha8 generator seeded with `seed`
/// draws one uniform variate per event (in input order), then shuffles the
/// pool, then shuffles the test portion.
pub fn make_skew_split(
    events: &[Interaction],
    num_users: usize,
    num_items: usize,
    id_maps: IdMaps,
    fractions: SplitFractions,
    s_t_injection: f64,
    seed: u64,
) -> Result<SplitDataset> {
    if events.is_empty() {
        return Err(CauseError::Data("no events to split".into()));
    }
    fractions.validate()?;
    if !(0.0..=1.0).contains(&s_t_injection) {
        return Err(CauseError::Config(
            "s_t_injection must lie in [0, 1]".into(),
        ));
    }
    for e in events {
        if e.user >= num_users || e.item >= num_items {
            return Err(CauseError::Data(format!(
                "event ({}, {}) outside bounds {num_users}x{num_items}",
                e.user, e.item
            )));
        }
    }

    let counts = item_counts(events, num_items);
    let weights: Vec<f64> = events
        .iter()
        .map(|e| 1.0 / (counts[e.item] + 1) as f64)
        .collect();
    let weight_sum: f64 = weights.iter().sum();
    let uniform_mass = (fractions.validation + fractions.test) * events.len() as f64;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool: Vec<usize> = Vec::new();
    let mut biased: Vec<usize> = Vec::new();
    for (idx, w) in weights.iter().enumerate() {
        let p = (uniform_mass * w / weight_sum).min(1.0);
        if rng.random::<f64>() < p {
            pool.push(idx);
        } else {
            biased.push(idx);
        }
    }

    pool.shuffle(&mut rng);
    let val_share = fractions.validation / (fractions.validation + fractions.test);
    let n_val = ((pool.len() as f64) * val_share).round() as usize;
    let n_val = n_val.min(pool.len());
    let mut val_idx: Vec<usize> = pool[..n_val].to_vec();
    let mut test_pool: Vec<usize> = pool[n_val..].to_vec();

    test_pool.shuffle(&mut rng);
    let k_st = ((test_pool.len() as f64) * s_t_injection).round() as usize;
    let k_st = k_st.min(test_pool.len());
    let mut st_idx: Vec<usize> = test_pool[..k_st].to_vec();
    let mut test_idx: Vec<usize> = test_pool[k_st..].to_vec();

    // Emit each partition in original event order.
    val_idx.sort_unstable();
    st_idx.sort_unstable();
    test_idx.sort_unstable();

    let retag = |indices: &[usize], origin: SampleOrigin| -> Vec<Interaction> {
        indices
            .iter()
            .map(|&i| Interaction::new(events[i].user, events[i].item, events[i].reward, origin))
            .collect()
    };

    Ok(SplitDataset {
        s_c: retag(&biased, SampleOrigin::Control),
        s_t: retag(&st_idx, SampleOrigin::Treatment),
        validation: retag(&val_idx, SampleOrigin::Treatment),
        test: retag(&test_idx, SampleOrigin::Treatment),
        num_users,
        num_items,
        id_maps,
    })
}

/// Full file pipeline: parse, binarize, deduplicate, index, split.
pub fn load_split_from_ratings(
    path: &Path,
    format: RatingFormat,
    fractions: SplitFractions,
    s_t_injection: f64,
    seed: u64,
) -> Result<SplitDataset> {
    let records = parse_ratings(path, format)?;
    let (events, id_maps) = index_events(&records)?;
    if events.is_empty() {
        return Err(CauseError::Data(format!(
            "no events in rating file {}",
            path.display()
        )));
    }
    let num_users = id_maps.users.len();
    let num_items = id_maps.items.len();
    make_skew_split(
        &events,
        num_users,
        num_items,
        id_maps,
        fractions,
        s_t_injection,
        seed,
    )
}

/// Parameters of the synthetic benchmark generator. Defaults match the
/// desk-scale benchmark used throughout the test suite.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub num_users: usize,
    pub num_items: usize,
    pub latent_dim: usize,
    pub zipf_exponent: f64,
    pub events_per_user: usize,
    pub seed: u64,
    pub true_bias: f64,
    pub s_t_injection: f64,
    pub fractions: SplitFractions,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            num_users: 200,
            num_items: 100,
            latent_dim: 8,
            zipf_exponent: 1.0,
            events_per_user: 800,
            seed: 42,
            true_bias: -0.5,
            s_t_injection: 0.05,
            fractions: SplitFractions::default(),
        }
    }
}

/// Ground truth behind a synthetic dataset: the factors that generated the
/// Bernoulli reward means and the logging exposure distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticGroundTruth {
    pub true_user_factors: Matrix,
    pub true_item_factors: Matrix,
    pub true_bias: f64,
    pub reward_matrix: Matrix,
    pub logging_exposure: Vec<f64>,
}

/// Zipf probabilities over `num_items` ranks: p(j) proportional to
/// (j + 1)^-exponent. Exponent zero gives the uniform distribution.
pub fn zipf_probs(num_items: usize, exponent: f64) -> Result<Vec<f64>> {
    if num_items == 0 {
        return Err(CauseError::Data("zipf over zero items".into()));
    }
    if exponent < 0.0 {
        return Err(CauseError::Domain("zipf exponent must be >= 0".into()));
    }
    let raw: Vec<f64> = (0..num_items)
        .map(|j| ((j + 1) as f64).powf(-exponent))
        .collect();
    let norm: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|w| w / norm).collect())
}

/// Reward means sigma(<u_i, v_j> + bias) for every user-item pair.
pub fn reward_matrix_from_factors(users: &Matrix, items: &Matrix, bias: f64) -> Result<Matrix> {
    if users.cols() != items.cols() {
        return Err(CauseError::Dimension {
            expected: users.cols(),
            got: items.cols(),
        });
    }
    let mut out = Matrix::zeros(users.rows(), items.rows());
    for i in 0..users.rows() {
        for j in 0..items.rows() {
            let score = crate::math::inner_product(users.row(i), items.row(j))? + bias;
            out.set(i, j, sigmoid(score));
        }
    }
    Ok(out)
}

fn sample_categorical(cumulative: &[f64], u: f64) -> usize {
    let idx = cumulative.partition_point(|&c| c <= u);
    idx.min(cumulative.len() - 1)
}

/// Generate a synthetic split with known ground truth.
///
/// True factors are Gaussian with standard deviation 1/sqrt(latent_dim);
/// reward means are sigma(<u, v> + bias). The control sample draws items
/// from the Zipf logging exposure, the uniform pool draws items uniformly,
/// and every reward is a Bernoulli draw from the true mean. Deterministic
/// for a fixed seed.
pub fn gen_synthetic(cfg: &SyntheticConfig) -> Result<(SplitDataset, SyntheticGroundTruth)> {
    if cfg.num_users == 0 || cfg.num_items == 0 || cfg.latent_dim == 0 || cfg.events_per_user == 0
    {
        return Err(CauseError::Data(
            "synthetic sizes must all be positive".into(),
        ));
    }
    cfg.fractions.validate()?;
    if !(0.0..=1.0).contains(&cfg.s_t_injection) {
        return Err(CauseError::Config(
            "s_t_injection must lie in [0, 1]".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let sd = 1.0 / (cfg.latent_dim as f64).sqrt();
    let normal = Normal::new(0.0, sd).expect("valid normal");
    let true_user_factors =
        Matrix::from_fn(cfg.num_users, cfg.latent_dim, |_, _| normal.sample(&mut rng));
    let true_item_factors =
        Matrix::from_fn(cfg.num_items, cfg.latent_dim, |_, _| normal.sample(&mut rng));
    let reward_matrix =
        reward_matrix_from_factors(&true_user_factors, &true_item_factors, cfg.true_bias)?;

    let logging_exposure = zipf_probs(cfg.num_items, cfg.zipf_exponent)?;
    let mut zipf_cum = Vec::with_capacity(cfg.num_items);
    let mut acc = 0.0;
    for p in &logging_exposure {
        acc += p;
        zipf_cum.push(acc);
    }

    let n_total = cfg.num_users * cfg.events_per_user;
    let m_c = ((n_total as f64) * cfg.fractions.train).round() as usize;
    let m_c = m_c.min(n_total);
    let m_u = n_total - m_c;
    let n_val = (((n_total as f64) * cfg.fractions.validation).round() as usize).min(m_u);
    let test_pool_n = m_u - n_val;
    let k_st = (((test_pool_n as f64) * cfg.s_t_injection).round() as usize).min(test_pool_n);

    let draw = |item_cum: Option<&[f64]>, origin, rng: &mut ChaCha8Rng| {
        let user = rng.random_range(0..cfg.num_users);
        let item = match item_cum {
            Some(cum) => sample_categorical(cum, rng.random::<f64>()),
            None => rng.random_range(0..cfg.num_items),
        };
        let reward = rng.random::<f64>() < reward_matrix.get(user, item);
        Interaction::new(user, item, reward, origin)
    };

    let s_c: Vec<Interaction> = (0..m_c)
        .map(|_| draw(Some(&zipf_cum), SampleOrigin::Control, &mut rng))
        .collect();
    let uniform: Vec<Interaction> = (0..m_u)
        .map(|_| draw(None, SampleOrigin::Treatment, &mut rng))
        .collect();

    // Uniform draws are i.i.d., so consecutive slices are already random.
    let validation = uniform[..n_val].to_vec();
    let s_t = uniform[n_val..n_val + k_st].to_vec();
    let test = uniform[n_val + k_st..].to_vec();

    let split = SplitDataset {
        s_c,
        s_t,
        validation,
        test,
        num_users: cfg.num_users,
        num_items: cfg.num_items,
        id_maps: IdMaps::identity(cfg.num_users, cfg.num_items),
    };
    let truth = SyntheticGroundTruth {
        true_user_factors,
        true_item_factors,
        true_bias: cfg.true_bias,
        reward_matrix,
        logging_exposure,
    };
    Ok((split, truth))
}

const PARTITION_TAGS: [(&str, usize); 4] = [("sc", 0), ("st", 1), ("val", 2), ("test", 3)];

/// Write a split as a text manifest (`user item reward partition` per line)
/// plus a `<path>.meta` sidecar with counts and provenance in key=value form.
pub fn write_split_manifest(path: &Path, split: &SplitDataset, meta: &SplitMeta) -> Result<()> {
    let mut out = String::new();
    let parts: [(&str, &[Interaction]); 4] = [
        ("sc", &split.s_c),
        ("st", &split.s_t),
        ("val", &split.validation),
        ("test", &split.test),
    ];
    for (tag, events) in parts {
        for e in events {
            writeln!(out, "{} {} {} {}", e.user, e.item, e.reward as u8, tag)
                .expect("write to string");
        }
    }
    fs::write(path, out)?;

    let mut side = String::new();
    writeln!(side, "num_users={}", split.num_users).unwrap();
    writeln!(side, "num_items={}", split.num_items).unwrap();
    writeln!(side, "n_sc={}", split.s_c.len()).unwrap();
    writeln!(side, "n_st={}", split.s_t.len()).unwrap();
    writeln!(side, "n_validation={}", split.validation.len()).unwrap();
    writeln!(side, "n_test={}", split.test.len()).unwrap();
    writeln!(side, "seed={}", meta.seed).unwrap();
    writeln!(side, "fraction_train={}", meta.fractions.train).unwrap();
    writeln!(side, "fraction_validation={}", meta.fractions.validation).unwrap();
    writeln!(side, "fraction_test={}", meta.fractions.test).unwrap();
    writeln!(side, "s_t_injection={}", meta.s_t_injection).unwrap();
    fs::write(sidecar_path(path), side)?;
    Ok(())
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(".meta");
    std::path::PathBuf::from(os)
}

/// Load a split manifest written by [`write_split_manifest`]. The sidecar is
/// required for the user/item counts; id maps come back as identities.
pub fn read_split_manifest(path: &Path) -> Result<SplitDataset> {
    let side_text = fs::read_to_string(sidecar_path(path)).map_err(|e| {
        CauseError::Data(format!(
            "missing manifest sidecar {}: {e}",
            sidecar_path(path).display()
        ))
    })?;
    let mut num_users = None;
    let mut num_items = None;
    for (idx, line) in side_text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| CauseError::Parse {
            line: idx + 1,
            msg: "expected key=value".into(),
        })?;
        match key.trim() {
            "num_users" => num_users = value.trim().parse::<usize>().ok(),
            "num_items" => num_items = value.trim().parse::<usize>().ok(),
            _ => {}
        }
    }
    let (num_users, num_items) = match (num_users, num_items) {
        (Some(u), Some(i)) => (u, i),
        _ => {
            return Err(CauseError::Data(
                "manifest sidecar lacks num_users/num_items".into(),
            ))
        }
    };

    let text = fs::read_to_string(path)?;
    let mut parts: [Vec<Interaction>; 4] = [Vec::new(), Vec::new(), Vec::new(), Vec::new()];
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(CauseError::Parse {
                line: lineno,
                msg: format!("expected 4 fields, got {}", fields.len()),
            });
        }
        let user: usize = fields[0].parse().map_err(|_| CauseError::Parse {
            line: lineno,
            msg: format!("invalid user index `{}`", fields[0]),
        })?;
        let item: usize = fields[1].parse().map_err(|_| CauseError::Parse {
            line: lineno,
            msg: format!("invalid item index `{}`", fields[1]),
        })?;
        let reward = match fields[2] {
            "0" => false,
            "1" => true,
            other => {
                return Err(CauseError::Parse {
                    line: lineno,
                    msg: format!("invalid reward `{other}` (expected 0 or 1)"),
                })
            }
        };
        if user >= num_users || item >= num_items {
            return Err(CauseError::Parse {
                line: lineno,
                msg: format!("event ({user}, {item}) outside bounds {num_users}x{num_items}"),
            });
        }
        let slot = PARTITION_TAGS
            .iter()
            .find(|(tag, _)| *tag == fields[3])
            .map(|(_, slot)| *slot)
            .ok_or_else(|| CauseError::Parse {
                line: lineno,
                msg: format!("unknown partition tag `{}`", fields[3]),
            })?;
        let origin = if slot == 0 {
            SampleOrigin::Control
        } else {
            SampleOrigin::Treatment
        };
        parts[slot].push(Interaction::new(user, item, reward, origin));
    }
    let [s_c, s_t, validation, test] = parts;
    Ok(SplitDataset {
        s_c,
        s_t,
        validation,
        test,
        num_users,
        num_items,
        id_maps: IdMaps::identity(num_users, num_items),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;

    fn event(user: usize, item: usize, reward: bool) -> Interaction {
        Interaction::new(user, item, reward, SampleOrigin::Control)
    }

    #[test]
    fn parses_both_formats() {
        let r = parse_rating_line("1::32::5::978300019", RatingFormat::DoubleColonSep, 1).unwrap();
        assert_eq!(
            r,
            RatingRecord {
                user_id: "1".into(),
                item_id: "32".into(),
                rating: 5,
                timestamp: 978300019
            }
        );
        let r = parse_rating_line("7,9,3,100", RatingFormat::CommaSep, 1).unwrap();
        assert_eq!(r.user_id, "7");
        assert_eq!(r.item_id, "9");
        assert_eq!(r.rating, 3);
    }

    #[test]
    fn parse_error_carries_line_number() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "1,2,5,10").unwrap();
        writeln!(f, "7,9,six,100").unwrap();
        let err = parse_ratings(f.path(), RatingFormat::CommaSep).unwrap_err();
        match err {
            CauseError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn binarize_thresholds_at_five() {
        assert!(binarize(5).unwrap());
        assert!(!binarize(4).unwrap());
        assert!(!binarize(1).unwrap());
        assert!(binarize(0).is_err());
        assert!(binarize(6).is_err());
    }

    #[test]
    fn dedup_keeps_last_by_timestamp() {
        let recs = vec![
            RatingRecord {
                user_id: "a".into(),
                item_id: "x".into(),
                rating: 5,
                timestamp: 100,
            },
            RatingRecord {
                user_id: "a".into(),
                item_id: "x".into(),
                rating: 1,
                timestamp: 200,
            },
            RatingRecord {
                user_id: "a".into(),
                item_id: "x".into(),
                rating: 3,
                timestamp: 50,
            },
        ];
        let (events, maps) = index_events(&recs).unwrap();
        assert_eq!(events.len(), 1);
        assert!(!events[0].reward); // the ts=200 record (rating 1) wins
        assert_eq!(maps.users.len(), 1);
        assert_eq!(maps.items.len(), 1);
    }

    #[test]
    fn skew_split_equal_popularity_hits_expected_sizes() {
        // 10 items, 100 events each: resampling degenerates to a plain
        // 30% Bernoulli, so sizes land near 700/100/200.
        let events: Vec<Interaction> = (0..1000)
            .map(|k| event(k % 37, k % 10, k % 5 == 0))
            .collect();
        let split = make_skew_split(
            &events,
            37,
            10,
            IdMaps::identity(37, 10),
            SplitFractions::default(),
            0.0,
            7,
        )
        .unwrap();
        let slack = 20; // 2% of the event count
        assert!((split.s_c.len() as i64 - 700).unsigned_abs() as usize <= slack);
        assert!((split.validation.len() as i64 - 100).unsigned_abs() as usize <= slack);
        assert!((split.test.len() as i64 - 200).unsigned_abs() as usize <= slack);
        assert!(split.s_t.is_empty());
    }

    #[test]
    fn skew_split_flattens_zipf_marginal() {
        // Item counts follow Zipf(1.0) over 50 items.
        let num_items = 50;
        let mut events = Vec::new();
        for j in 0..num_items {
            let n = (2000.0 / (j + 1) as f64).round() as usize;
            for k in 0..n.max(1) {
                events.push(event((j * 31 + k) % 97, j, (j + k) % 4 == 0));
            }
        }
        let split = make_skew_split(
            &events,
            97,
            num_items,
            IdMaps::identity(97, num_items),
            SplitFractions::default(),
            0.0,
            11,
        )
        .unwrap();

        // Counting oracle, written out independently of chi_square_vs_uniform.
        let oracle = |evs: &[Interaction]| -> f64 {
            let mut counts = vec![0usize; num_items];
            for e in evs {
                counts[e.item] += 1;
            }
            let n: usize = counts.iter().sum();
            let u = 1.0 / num_items as f64;
            counts
                .iter()
                .map(|&c| {
                    let p = c as f64 / n as f64;
                    (p - u) * (p - u) / u
                })
                .sum()
        };
        let raw = oracle(&events);
        let test = oracle(&split.test);
        assert!(
            test < raw,
            "test marginal chi-square {test} not below raw {raw}"
        );
    }

    #[test]
    fn skew_split_is_deterministic() {
        let events: Vec<Interaction> = (0..500).map(|k| event(k % 23, k % 17, k % 3 == 0)).collect();
        let a = make_skew_split(
            &events,
            23,
            17,
            IdMaps::identity(23, 17),
            SplitFractions::default(),
            0.25,
            99,
        )
        .unwrap();
        let b = make_skew_split(
            &events,
            23,
            17,
            IdMaps::identity(23, 17),
            SplitFractions::default(),
            0.25,
            99,
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn skew_split_rejects_bad_input() {
        assert!(make_skew_split(
            &[],
            1,
            1,
            IdMaps::identity(1, 1),
            SplitFractions::default(),
            0.0,
            1
        )
        .is_err());
        let bad = SplitFractions {
            train: 0.5,
            validation: 0.1,
            test: 0.1,
        };
        assert!(make_skew_split(
            &[event(0, 0, true)],
            1,
            1,
            IdMaps::identity(1, 1),
            bad,
            0.0,
            1
        )
        .is_err());
    }

    #[test]
    fn synthetic_zero_factors_give_half_rewards() {
        let users = Matrix::zeros(3, 2);
        let items = Matrix::zeros(4, 2);
        let r = reward_matrix_from_factors(&users, &items, 0.0).unwrap();
        for i in 0..3 {
            for j in 0..4 {
                assert_eq!(r.get(i, j), 0.5);
            }
        }
    }

    #[test]
    fn zipf_zero_exponent_is_uniform_sampling() {
        let cfg = SyntheticConfig {
            num_users: 50,
            num_items: 20,
            zipf_exponent: 0.0,
            events_per_user: 200,
            seed: 3,
            ..SyntheticConfig::default()
        };
        let (split, truth) = gen_synthetic(&cfg).unwrap();
        for p in &truth.logging_exposure {
            assert!((p - 0.05).abs() < 1e-12);
        }
        let counts = item_counts(&split.s_c, cfg.num_items);
        let n = split.s_c.len() as f64;
        let p = 1.0 / cfg.num_items as f64;
        let sigma = (n * p * (1.0 - p)).sqrt();
        for &c in &counts {
            assert!(
                (c as f64 - n * p).abs() <= 3.0 * sigma,
                "count {c} outside 3 sigma of {}",
                n * p
            );
        }
    }

    #[test]
    fn zipf_one_marginal_matches_exact_probabilities() {
        let cfg = SyntheticConfig {
            num_users: 100,
            num_items: 100,
            zipf_exponent: 1.0,
            events_per_user: 1430,
            seed: 7,
            ..SyntheticConfig::default()
        };
        let (split, _) = gen_synthetic(&cfg).unwrap();
        let counts = item_counts(&split.s_c, cfg.num_items);
        let n = split.s_c.len() as f64;
        assert!(n >= 1e5, "want at least 1e5 logged events, got {n}");

        // Oracle: exact Zipf(1) normalization via the harmonic number.
        let harmonic: f64 = (1..=cfg.num_items).map(|k| 1.0 / k as f64).sum();
        for (j, &c) in counts.iter().enumerate() {
            let p = 1.0 / ((j + 1) as f64 * harmonic);
            let sigma = (n * p * (1.0 - p)).sqrt();
            assert!(
                (c as f64 - n * p).abs() <= 3.0 * sigma,
                "item {j}: count {c}, expected {:.1} +- {:.1}",
                n * p,
                3.0 * sigma
            );
        }
    }

    #[test]
    fn synthetic_is_bit_reproducible() {
        let cfg = SyntheticConfig {
            num_users: 30,
            num_items: 15,
            events_per_user: 20,
            seed: 123,
            ..SyntheticConfig::default()
        };
        let (split_a, truth_a) = gen_synthetic(&cfg).unwrap();
        let (split_b, truth_b) = gen_synthetic(&cfg).unwrap();
        assert_eq!(split_a, split_b);
        assert_eq!(truth_a.reward_matrix, truth_b.reward_matrix);
        assert_eq!(truth_a.true_user_factors, truth_b.true_user_factors);
    }

    #[test]
    fn manifest_round_trip() {
        let cfg = SyntheticConfig {
            num_users: 12,
            num_items: 9,
            events_per_user: 10,
            seed: 8,
            ..SyntheticConfig::default()
        };
        let (split, _) = gen_synthetic(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bench.split");
        let meta = SplitMeta {
            seed: 8,
            fractions: cfg.fractions,
            s_t_injection: cfg.s_t_injection,
        };
        write_split_manifest(&path, &split, &meta).unwrap();
        let loaded = read_split_manifest(&path).unwrap();
        assert_eq!(loaded.s_c, split.s_c);
        assert_eq!(loaded.s_t, split.s_t);
        assert_eq!(loaded.validation, split.validation);
        assert_eq!(loaded.test, split.test);
        assert_eq!(loaded.num_users, split.num_users);
        assert_eq!(loaded.num_items, split.num_items);
    }

    #[test]
    fn id_maps_cover_every_partition() {
        let mut text = String::new();
        for u in 0..25usize {
            for i in 0..14usize {
                if (u * 3 + i) % 4 == 0 {
                    continue;
                }
                let rating = 1 + (u * 5 + i * 7) % 5;
                text.push_str(&format!("u{u},m{i},{rating},{}\n", 100 + u + i));
            }
        }
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        let split = load_split_from_ratings(
            f.path(),
            RatingFormat::CommaSep,
            SplitFractions::default(),
            0.1,
            4,
        )
        .unwrap();

        let user_indices: std::collections::HashSet<usize> =
            split.id_maps.users.values().copied().collect();
        let item_indices: std::collections::HashSet<usize> =
            split.id_maps.items.values().copied().collect();
        for e in split.test.iter().chain(&split.s_t) {
            assert!(user_indices.contains(&e.user));
            assert!(item_indices.contains(&e.item));
        }
    }

    #[test]
    fn manifest_requires_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("orphan.split");
        fs::write(&path, "0 0 1 sc\n").unwrap();
        assert!(read_split_manifest(&path).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn partitions_are_disjoint_and_exhaustive(
            raw in proptest::collection::vec((0usize..20, 0usize..10, proptest::bool::ANY), 1..200),
            seed in proptest::num::u64::ANY,
            injection in 0.0f64..=1.0,
        ) {
            let events: Vec<Interaction> =
                raw.iter().map(|&(u, i, y)| event(u, i, y)).collect();
            let split = make_skew_split(
                &events, 20, 10, IdMaps::identity(20, 10),
                SplitFractions::default(), injection, seed,
            ).unwrap();

            prop_assert_eq!(split.total_events(), events.len());
            let mut reassembled: Vec<(usize, usize, bool)> = split
                .s_c.iter()
                .chain(&split.s_t)
                .chain(&split.validation)
                .chain(&split.test)
                .map(|e| (e.user, e.item, e.reward))
                .collect();
            let mut original: Vec<(usize, usize, bool)> =
                events.iter().map(|e| (e.user, e.item, e.reward)).collect();
            reassembled.sort_unstable();
            original.sort_unstable();
            prop_assert_eq!(reassembled, original);
        }
    }
}
