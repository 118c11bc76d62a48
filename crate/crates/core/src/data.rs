//! Daily load records, min-max normalization, sample construction, sharding
//! and a synthetic series generator.
//!
//! Each sample forecasts day `d` from the nine preceding-day entries
//! (`d-8 ..= d-2`, then `d-2` and `d-1` again), every step a triple of
//! normalized load, normalized temperature and `day_type / 2`. The readout
//! context carries the forecast day's normalized temperature and day type.

use alloc::vec::Vec;
use core::f64::consts::PI;
use core::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::lstm::SequenceSample;

/// Historical days needed before a target day.
pub const HISTORY_DAYS: usize = 8;
/// Steps per sample.
pub const SEQUENCE_LEN: usize = 9;
/// Features per step.
pub const STEP_FEATURES: usize = 3;
/// Readout context width.
pub const CONTEXT_FEATURES: usize = 2;

/// Day number (since 1970-01-01) of 2016-01-04, a Monday.
pub const SYNTHETIC_START_DAY: i64 = 16_804;
pub const MIN_SYNTHETIC_DAYS: usize = 30;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DataError {
    #[error("record for day {day}: load must be positive, got {load}")]
    NonPositiveLoad { day: i64, load: f64 },
    #[error("record for day {day}: temperature is not finite")]
    NonFiniteTemperature { day: i64 },
    #[error("unknown day type code {0} (expected 0, 1 or 2)")]
    UnknownDayType(i64),
    #[error("{feature} is constant over the fitting range; cannot normalize")]
    ConstantFeature { feature: Feature },
    #[error("need at least {needed} records, got {got}")]
    InsufficientHistory { needed: usize, got: usize },
    #[error("records are not consecutive days at position {0}")]
    NotConsecutive(usize),
    #[error("cannot split {samples} samples across {agents} agents")]
    TooFewSamples { samples: usize, agents: usize },
    #[error("agent count must be at least 1")]
    NoAgents,
    #[error("shard is empty")]
    EmptyShard,
    #[error("sample {0} has a shape different from the first sample")]
    InconsistentShape(usize),
    #[error("split fractions must be nonnegative and sum to 1, got {0:?}")]
    BadFractions([f64; 3]),
    #[error("synthetic series needs at least {MIN_SYNTHETIC_DAYS} days, got {0}")]
    TooFewDays(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum DayType {
    Workday = 0,
    Saturday = 1,
    /// Sunday or public holiday.
    Holiday = 2,
}

impl DayType {
    pub fn from_code(code: i64) -> Result<Self, DataError> {
        match code {
            0 => Ok(DayType::Workday),
            1 => Ok(DayType::Saturday),
            2 => Ok(DayType::Holiday),
            other => Err(DataError::UnknownDayType(other)),
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    /// Code scaled onto `[0, 1]`.
    pub fn scaled(self) -> f64 {
        f64::from(self.code()) / 2.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DailyRecord {
    /// Days since 1970-01-01.
    pub day: i64,
    pub load: f64,
    pub temperature: f64,
    pub day_type: DayType,
}

impl DailyRecord {
    pub fn new(day: i64, load: f64, temperature: f64, day_type: DayType) -> Result<Self, DataError> {
        if !(load > 0.0) || !load.is_finite() {
            return Err(DataError::NonPositiveLoad { day, load });
        }
        if !temperature.is_finite() {
            return Err(DataError::NonFiniteTemperature { day });
        }
        Ok(Self { day, load, temperature, day_type })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Feature {
    Load,
    Temperature,
}

impl core::fmt::Display for Feature {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(match self {
            Feature::Load => "load",
            Feature::Temperature => "temperature",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FeatureRange {
    pub min: f64,
    pub max: f64,
}

impl FeatureRange {
    fn fit(feature: Feature, values: impl Iterator<Item = f64>) -> Result<Self, DataError> {
        let (min, max) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
        if !(max > min) {
            return Err(DataError::ConstantFeature { feature });
        }
        Ok(Self { min, max })
    }

    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        (x - self.min) / (self.max - self.min)
    }

    #[inline]
    pub fn invert(&self, x: f64) -> f64 {
        x * (self.max - self.min) + self.min
    }
}

/// Min-max scaling fitted on a training range. Values outside that range
/// map outside `[0, 1]`; nothing is clamped.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Normalizer {
    pub load: FeatureRange,
    pub temperature: FeatureRange,
}

impl Normalizer {
    pub fn fit(records: &[DailyRecord]) -> Result<Self, DataError> {
        Ok(Self {
            load: FeatureRange::fit(Feature::Load, records.iter().map(|r| r.load))?,
            temperature: FeatureRange::fit(Feature::Temperature, records.iter().map(|r| r.temperature))?,
        })
    }

    pub fn range(&self, feature: Feature) -> &FeatureRange {
        match feature {
            Feature::Load => &self.load,
            Feature::Temperature => &self.temperature,
        }
    }

    pub fn apply(&self, feature: Feature, value: f64) -> f64 {
        self.range(feature).apply(value)
    }

    pub fn invert(&self, feature: Feature, value: f64) -> f64 {
        self.range(feature).invert(value)
    }
}

pub fn fit_normalizer(records: &[DailyRecord]) -> Result<Normalizer, DataError> {
    Normalizer::fit(records)
}

fn check_consecutive(records: &[DailyRecord]) -> Result<(), DataError> {
    match records.windows(2).position(|w| w[1].day != w[0].day + 1) {
        Some(i) => Err(DataError::NotConsecutive(i + 1)),
        None => Ok(()),
    }
}

/// One sample per target day with a full history; `records.len() - 8` in total.
pub fn build_samples(records: &[DailyRecord], norm: &Normalizer) -> Result<Vec<SequenceSample>, DataError> {
    if records.len() <= HISTORY_DAYS {
        return Err(DataError::InsufficientHistory { needed: HISTORY_DAYS + 1, got: records.len() });
    }
    check_consecutive(records)?;
    let step = |r: &DailyRecord| {
        alloc::vec![
            norm.apply(Feature::Load, r.load),
            norm.apply(Feature::Temperature, r.temperature),
            r.day_type.scaled(),
        ]
    };
    let samples = (HISTORY_DAYS..records.len())
        .map(|d| {
            let mut steps: Vec<Vec<f64>> = records[d - 8..=d - 2].iter().map(step).collect();
            steps.push(step(&records[d - 2]));
            steps.push(step(&records[d - 1]));
            let target = &records[d];
            SequenceSample {
                steps,
                readout_context: alloc::vec![
                    norm.apply(Feature::Temperature, target.temperature),
                    target.day_type.scaled()
                ],
                target: norm.apply(Feature::Load, target.load),
            }
        })
        .collect();
    Ok(samples)
}

/// Chronological split of `n` samples into train/validation/test index
/// ranges. Train and validation sizes are floored; test takes the rest.
pub fn split_ranges(n: usize, fractions: [f64; 3]) -> Result<[Range<usize>; 3], DataError> {
    let sum: f64 = fractions.iter().sum();
    if fractions.iter().any(|f| !(*f >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
        return Err(DataError::BadFractions(fractions));
    }
    let n_train = libm::floor(n as f64 * fractions[0]) as usize;
    let n_val = (libm::floor(n as f64 * fractions[1]) as usize).min(n - n_train);
    Ok([0..n_train, n_train..n_train + n_val, n_train + n_val..n])
}

/// Normalized train/validation/test samples plus the normalizer fitted on
/// the records the training samples touch.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedData {
    pub normalizer: Normalizer,
    pub train: Vec<SequenceSample>,
    pub validation: Vec<SequenceSample>,
    pub test: Vec<SequenceSample>,
    /// Day number of each test sample's target.
    pub test_days: Vec<i64>,
}

pub fn prepare(records: &[DailyRecord], fractions: [f64; 3]) -> Result<PreparedData, DataError> {
    if records.len() <= HISTORY_DAYS {
        return Err(DataError::InsufficientHistory { needed: HISTORY_DAYS + 1, got: records.len() });
    }
    let n_samples = records.len() - HISTORY_DAYS;
    let [train, val, test] = split_ranges(n_samples, fractions)?;
    if train.is_empty() {
        return Err(DataError::InsufficientHistory { needed: HISTORY_DAYS + 2, got: records.len() });
    }
    let normalizer = Normalizer::fit(&records[..train.end + HISTORY_DAYS])?;
    let mut all = build_samples(records, &normalizer)?;
    let test_days = records[HISTORY_DAYS + test.start..].iter().map(|r| r.day).collect();
    let test_samples = all.split_off(test.start);
    let val_samples = all.split_off(val.start);
    Ok(PreparedData { normalizer, train: all, validation: val_samples, test: test_samples, test_days })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ShardStrategy {
    /// Consecutive time blocks; earlier agents take the remainder.
    #[default]
    Contiguous,
    /// Sample `k` goes to agent `k mod N`.
    RoundRobin,
}

/// Where a shard's samples came from in the full sample list.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Provenance {
    Range { start: usize, end: usize },
    Strided { offset: usize, stride: usize },
    Whole { len: usize },
}

/// A private per-agent dataset partition.
#[derive(Debug, Clone, PartialEq)]
pub struct Shard {
    samples: Vec<SequenceSample>,
    provenance: Provenance,
}

impl Shard {
    pub fn new(samples: Vec<SequenceSample>, provenance: Provenance) -> Result<Self, DataError> {
        let first = samples.first().ok_or(DataError::EmptyShard)?;
        let shape = |s: &SequenceSample| {
            (s.steps.len(), s.steps.first().map_or(0, Vec::len), s.readout_context.len())
        };
        let want = shape(first);
        if let Some(i) = samples
            .iter()
            .position(|s| shape(s) != want || s.steps.iter().any(|x| x.len() != want.1))
        {
            return Err(DataError::InconsistentShape(i));
        }
        Ok(Self { samples, provenance })
    }

    pub fn whole(samples: Vec<SequenceSample>) -> Result<Self, DataError> {
        let len = samples.len();
        Self::new(samples, Provenance::Whole { len })
    }

    pub fn samples(&self) -> &[SequenceSample] {
        &self.samples
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// `(D, E)` of the contained samples.
    pub fn feature_dims(&self) -> (usize, usize) {
        let s = &self.samples[0];
        (s.steps[0].len(), s.readout_context.len())
    }

    pub fn into_samples(self) -> Vec<SequenceSample> {
        self.samples
    }
}

pub fn shard_dataset(
    samples: &[SequenceSample],
    n_agents: usize,
    strategy: ShardStrategy,
) -> Result<Vec<Shard>, DataError> {
    if n_agents == 0 {
        return Err(DataError::NoAgents);
    }
    if samples.len() < n_agents {
        return Err(DataError::TooFewSamples { samples: samples.len(), agents: n_agents });
    }
    match strategy {
        ShardStrategy::Contiguous => {
            let base = samples.len() / n_agents;
            let extra = samples.len() % n_agents;
            let mut start = 0;
            (0..n_agents)
                .map(|i| {
                    let end = start + base + usize::from(i < extra);
                    let shard = Shard::new(samples[start..end].to_vec(), Provenance::Range { start, end });
                    start = end;
                    shard
                })
                .collect()
        }
        ShardStrategy::RoundRobin => (0..n_agents)
            .map(|i| {
                let picked = samples.iter().skip(i).step_by(n_agents).cloned().collect();
                Shard::new(picked, Provenance::Strided { offset: i, stride: n_agents })
            })
            .collect(),
    }
}

fn weekly_factor(day_type: DayType) -> f64 {
    match day_type {
        DayType::Workday => 1.0,
        DayType::Saturday => 0.3,
        DayType::Holiday => 0.0,
    }
}

/// Desk-scale daily series with yearly and weekly seasonality and a
/// temperature response. Day 0 is a Monday.
pub fn gen_synthetic(days: usize, seed: u64) -> Result<Vec<DailyRecord>, DataError> {
    if days < MIN_SYNTHETIC_DAYS {
        return Err(DataError::TooFewDays(days));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let temp_noise = Normal::new(0.0, 2.0).expect("valid sigma");
    let load_noise = Normal::new(0.0, 20.0).expect("valid sigma");
    let records = (0..days)
        .map(|d| {
            let t = d as f64;
            let day_type = match d % 7 {
                5 => DayType::Saturday,
                6 => DayType::Holiday,
                _ => DayType::Workday,
            };
            let temperature = 15.0 + 10.0 * libm::sin(2.0 * PI * (t - 30.0) / 365.0) + temp_noise.sample(&mut rng);
            let load = 1000.0 + 200.0 * libm::sin(2.0 * PI * t / 365.0) + 150.0 * weekly_factor(day_type)
                - 8.0 * (temperature - 15.0)
                + load_noise.sample(&mut rng);
            DailyRecord { day: SYNTHETIC_START_DAY + d as i64, load: load.max(1.0), temperature, day_type }
        })
        .collect();
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn records(n: usize) -> Vec<DailyRecord> {
        (0..n)
            .map(|d| {
                DailyRecord::new(
                    d as i64,
                    500.0 + 10.0 * d as f64 + 3.0 * ((d * 7) % 5) as f64,
                    (d % 11) as f64 - 2.0,
                    DayType::from_code((d % 3) as i64).unwrap(),
                )
                .unwrap()
            })
            .collect()
    }

    #[test]
    fn record_validation() {
        assert!(matches!(
            DailyRecord::new(3, -5.0, 10.0, DayType::Workday),
            Err(DataError::NonPositiveLoad { day: 3, .. })
        ));
        assert!(DailyRecord::new(3, 5.0, f64::NAN, DayType::Workday).is_err());
        assert_eq!(DayType::from_code(3), Err(DataError::UnknownDayType(3)));
    }

    #[test]
    fn normalizer_endpoints() {
        let rs = records(20);
        let n = Normalizer::fit(&rs).unwrap();
        let min = rs.iter().map(|r| r.load).fold(f64::INFINITY, f64::min);
        let max = rs.iter().map(|r| r.load).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(n.apply(Feature::Load, min), 0.0);
        assert_eq!(n.apply(Feature::Load, max), 1.0);
        assert!(n.apply(Feature::Load, max + 100.0) > 1.0);
        assert!(n.apply(Feature::Temperature, -50.0) < 0.0);
    }

    #[test]
    fn constant_feature_rejected() {
        let rs: Vec<_> =
            (0..5).map(|d| DailyRecord::new(d, 100.0 + d as f64, 7.0, DayType::Workday).unwrap()).collect();
        assert_eq!(
            Normalizer::fit(&rs),
            Err(DataError::ConstantFeature { feature: Feature::Temperature })
        );
    }

    #[test]
    fn sample_counts_and_alignment() {
        let rs = records(9);
        let n = Normalizer::fit(&rs).unwrap();
        let s = build_samples(&rs, &n).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].steps[0][0], n.apply(Feature::Load, rs[0].load));
        assert_eq!(s[0].steps.len(), SEQUENCE_LEN);
        assert_eq!(s[0].steps[6], s[0].steps[7]);
        assert_eq!(s[0].steps[8][0], n.apply(Feature::Load, rs[7].load));
        assert_eq!(s[0].readout_context, vec![n.apply(Feature::Temperature, rs[8].temperature), rs[8].day_type.scaled()]);
        assert_eq!(s[0].target, n.apply(Feature::Load, rs[8].load));

        let rs = records(100);
        let n = Normalizer::fit(&rs).unwrap();
        assert_eq!(build_samples(&rs, &n).unwrap().len(), 92);
        assert_eq!(
            build_samples(&rs[..8], &n),
            Err(DataError::InsufficientHistory { needed: 9, got: 8 })
        );
    }

    #[test]
    fn gaps_rejected() {
        let mut rs = records(12);
        rs.remove(4);
        let n = Normalizer::fit(&rs).unwrap();
        assert_eq!(build_samples(&rs, &n), Err(DataError::NotConsecutive(4)));
    }

    #[test]
    fn contiguous_shards() {
        let rs = records(17);
        let n = Normalizer::fit(&rs).unwrap();
        let s = build_samples(&rs, &n).unwrap();
        let sizes: Vec<_> = shard_dataset(&s[..8], 4, ShardStrategy::Contiguous).unwrap().iter().map(Shard::len).collect();
        assert_eq!(sizes, [2, 2, 2, 2]);
        let shards = shard_dataset(&s, 4, ShardStrategy::Contiguous).unwrap();
        let sizes: Vec<_> = shards.iter().map(Shard::len).collect();
        assert_eq!(sizes, [3, 2, 2, 2]);
        assert_eq!(shards[1].provenance(), &Provenance::Range { start: 3, end: 5 });
        assert_eq!(
            shard_dataset(&s[..3], 4, ShardStrategy::Contiguous).unwrap_err(),
            DataError::TooFewSamples { samples: 3, agents: 4 }
        );
    }

    #[test]
    fn round_robin_shards() {
        let rs = records(14);
        let n = Normalizer::fit(&rs).unwrap();
        let s = build_samples(&rs, &n).unwrap();
        let shards = shard_dataset(&s, 2, ShardStrategy::RoundRobin).unwrap();
        assert_eq!(shards[0].samples(), &[s[0].clone(), s[2].clone(), s[4].clone()]);
        assert_eq!(shards[1].samples(), &[s[1].clone(), s[3].clone(), s[5].clone()]);
    }

    #[test]
    fn split_and_prepare() {
        assert_eq!(split_ranges(722, [0.8, 0.1, 0.1]).unwrap(), [0..577, 577..649, 649..722]);
        assert!(split_ranges(10, [0.8, 0.3, 0.1]).is_err());
        let rs = records(60);
        let p = prepare(&rs, [0.8, 0.1, 0.1]).unwrap();
        assert_eq!((p.train.len(), p.validation.len(), p.test.len()), (41, 5, 6));
        assert_eq!(p.test_days.len(), 6);
        assert_eq!(p.test_days[0], rs[8 + 46].day);
        assert_eq!(p.normalizer, Normalizer::fit(&rs[..49]).unwrap());
    }

    #[test]
    fn synthetic_basics() {
        let a = gen_synthetic(60, 7).unwrap();
        assert_eq!(a, gen_synthetic(60, 7).unwrap());
        assert_ne!(a, gen_synthetic(60, 8).unwrap());
        assert!(a.iter().all(|r| r.load > 0.0));
        assert_eq!(a[0].day_type, DayType::Workday);
        assert_eq!(a[5].day_type, DayType::Saturday);
        assert_eq!(a[6].day_type, DayType::Holiday);
        assert_eq!(gen_synthetic(20, 7), Err(DataError::TooFewDays(20)));
    }

    fn autocorr(x: &[f64], lag: usize) -> f64 {
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        let var: f64 = x.iter().map(|v| (v - mean) * (v - mean)).sum();
        let cov: f64 = x.windows(lag + 1).map(|w| (w[0] - mean) * (w[lag] - mean)).sum();
        cov / var
    }

    #[test]
    fn synthetic_weekly_structure_dominates() {
        let loads: Vec<f64> = gen_synthetic(730, 7).unwrap().iter().map(|r| r.load).collect();
        assert!(autocorr(&loads, 7) > autocorr(&loads, 3));
    }
}
