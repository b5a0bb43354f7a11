use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::real::Real;
use super::NnError;
use crate::prelude::*;
use crate::rng::stage_rng;
use crate::robot::{RavenStateRecord, SimSample, RECORD_LEN};

/// One (state record, position error) pair; the error is true minus
/// reported position in mm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingPair {
    pub trajectory_id: u32,
    pub record: RavenStateRecord,
    pub error: [f64; 3],
}

impl From<SimSample> for TrainingPair {
    fn from(s: SimSample) -> Self {
        let error = s.error().into();
        Self {
            trajectory_id: s.trajectory_id,
            record: s.record,
            error,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectorySpan {
    pub id: u32,
    pub start: usize,
    pub end: usize,
}

impl TrajectorySpan {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

/// Per-dimension affine standardization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalization {
    /// Population mean and standard deviation of each column. Constant
    /// columns get a unit scale so they map to zero.
    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a [f64]>, dim: usize) -> Result<Self, NnError> {
        let mut n = 0usize;
        let mut mean = vec![0.0; dim];
        let mut m2 = vec![0.0; dim];
        // Welford: stable with large offsets such as positions in mm
        for row in rows {
            if row.len() != dim {
                return Err(NnError::ShapeMismatch {
                    expected: dim,
                    got: row.len(),
                });
            }
            n += 1;
            for j in 0..dim {
                let d = row[j] - mean[j];
                mean[j] += d / n as f64;
                m2[j] += d * (row[j] - mean[j]);
            }
        }
        if n == 0 {
            return Err(NnError::EmptyDataset);
        }
        let std = m2
            .iter()
            .map(|v| {
                let s = (v / n as f64).sqrt();
                if s > 0.0 { s } else { 1.0 }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply_into<T: Real>(&self, row: &[f64], out: &mut [T]) {
        for j in 0..self.mean.len() {
            out[j] = T::of((row[j] - self.mean[j]) / self.std[j]);
        }
    }

    pub fn invert(&self, j: usize, v: f64) -> f64 {
        v * self.std[j] + self.mean[j]
    }
}

/// Training pairs grouped into contiguous trajectories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub pairs: Vec<TrainingPair>,
    pub trajectories: Vec<TrajectorySpan>,
    /// Feature statistics of the training split this set belongs to.
    pub normalization: Option<Normalization>,
}

impl Dataset {
    /// Group pairs by trajectory. Each trajectory's pairs must be adjacent.
    pub fn new(pairs: Vec<TrainingPair>) -> Result<Self, NnError> {
        let mut trajectories: Vec<TrajectorySpan> = Vec::new();
        for (i, p) in pairs.iter().enumerate() {
            if p.record.values.len() != RECORD_LEN {
                return Err(NnError::ShapeMismatch {
                    expected: RECORD_LEN,
                    got: p.record.values.len(),
                });
            }
            match trajectories.last_mut() {
                Some(s) if s.id == p.trajectory_id => s.end = i + 1,
                _ => {
                    if trajectories.iter().any(|s| s.id == p.trajectory_id) {
                        return Err(NnError::NonContiguousTrajectory(p.trajectory_id));
                    }
                    trajectories.push(TrajectorySpan {
                        id: p.trajectory_id,
                        start: i,
                        end: i + 1,
                    });
                }
            }
        }
        Ok(Self {
            pairs,
            trajectories,
            normalization: None,
        })
    }

    pub fn from_samples(samples: Vec<SimSample>) -> Result<Self, NnError> {
        Self::new(samples.into_iter().map(TrainingPair::from).collect())
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn trajectory_ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.trajectories.iter().map(|s| s.id)
    }

    fn with_pairs(&self, pairs: Vec<TrainingPair>) -> Result<Self, NnError> {
        let mut d = Self::new(pairs)?;
        d.normalization = self.normalization.clone();
        Ok(d)
    }

    /// Pairs of the given trajectories, in this set's order.
    pub fn select_trajectories(&self, ids: &[u32]) -> Result<Self, NnError> {
        let pairs = self
            .trajectories
            .iter()
            .filter(|s| ids.contains(&s.id))
            .flat_map(|s| self.pairs[s.start..s.end].iter().cloned())
            .collect();
        self.with_pairs(pairs)
    }

    /// Normalized feature matrix, row-major `len x 118`.
    pub fn feature_matrix<T: Real>(&self, norm: &Normalization) -> Vec<T> {
        let mut x = vec![T::zero(); self.len() * RECORD_LEN];
        for (p, row) in self.pairs.iter().zip(x.chunks_exact_mut(RECORD_LEN)) {
            norm.apply_into(&p.record.values, row);
        }
        x
    }

    /// Standardized label matrix, row-major `len x 3`.
    pub fn label_matrix<T: Real>(&self, norm: &Normalization) -> Vec<T> {
        let mut y = vec![T::zero(); self.len() * 3];
        for (p, row) in self.pairs.iter().zip(y.chunks_exact_mut(3)) {
            norm.apply_into(&p.error, row);
        }
        y
    }

    pub fn feature_stats(&self) -> Result<Normalization, NnError> {
        Normalization::fit(self.pairs.iter().map(|p| p.record.values.as_slice()), RECORD_LEN)
    }

    pub fn label_stats(&self) -> Result<Normalization, NnError> {
        Normalization::fit(self.pairs.iter().map(|p| p.error.as_slice()), 3)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitKind {
    Train,
    Val,
    Test,
}

impl SplitKind {
    pub fn name(self) -> &'static str {
        match self {
            SplitKind::Train => "train",
            SplitKind::Val => "val",
            SplitKind::Test => "test",
        }
    }
}

/// Target fractions by sample count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    /// Largest allowed gap between realized and target fraction.
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train: 0.8,
            val: 0.1,
            test: 0.1,
            tolerance: 0.05,
            seed: 0,
        }
    }
}

pub const MIN_TRAJECTORIES: usize = 10;

impl SplitSpec {
    pub fn validate(&self) -> Result<(), NnError> {
        let f = [self.train, self.val, self.test];
        if f.iter().any(|v| !(0.0..=1.0).contains(v)) || ((f[0] + f[1] + f[2]) - 1.0).abs() > 1e-9 {
            return Err(NnError::InvalidSplit("fractions must be in [0, 1] and sum to 1"));
        }
        if !(self.tolerance >= 0.0) {
            return Err(NnError::InvalidSplit("tolerance must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
    /// Which split each trajectory went to (empty for point-level splits).
    pub assignment: Vec<(u32, SplitKind)>,
}

impl DatasetSplit {
    /// Attach the training split's feature statistics to all three sets.
    fn normalized(mut self) -> Result<Self, NnError> {
        let stats = self.train.feature_stats()?;
        for d in [&mut self.train, &mut self.val, &mut self.test] {
            d.normalization = Some(stats.clone());
        }
        Ok(self)
    }

    pub fn part(&self, kind: SplitKind) -> &Dataset {
        match kind {
            SplitKind::Train => &self.train,
            SplitKind::Val => &self.val,
            SplitKind::Test => &self.test,
        }
    }
}

fn check_realized(total: usize, counts: [usize; 3], spec: &SplitSpec) -> Result<(), NnError> {
    let targets = [spec.train, spec.val, spec.test];
    for (k, kind) in [SplitKind::Train, SplitKind::Val, SplitKind::Test].into_iter().enumerate() {
        let realized = counts[k] as f64 / total as f64;
        if (realized - targets[k]).abs() > spec.tolerance + 1e-12 || (targets[k] > 0.0 && counts[k] == 0) {
            return Err(NnError::SplitImbalance {
                split: kind.name(),
                realized,
                target: targets[k],
            });
        }
    }
    Ok(())
}

/// Assign whole trajectories to train, validation and test. Trajectories are
/// visited in a seeded random order; test and validation each take
/// trajectories while doing so keeps them nearest their target sample count,
/// and the rest go to training.
pub fn split_by_trajectory(ds: &Dataset, spec: &SplitSpec) -> Result<DatasetSplit, NnError> {
    spec.validate()?;
    if ds.trajectories.len() < MIN_TRAJECTORIES {
        return Err(NnError::TooFewTrajectories {
            have: ds.trajectories.len(),
            need: MIN_TRAJECTORIES,
        });
    }
    let total = ds.len();
    let mut order: Vec<TrajectorySpan> = ds.trajectories.clone();
    order.shuffle(&mut stage_rng(spec.seed, "split/trajectory"));

    let mut assignment = Vec::with_capacity(order.len());
    let mut counts = [0usize; 3];
    let targets = [spec.train, spec.val, spec.test].map(|f| f * total as f64);
    let mut rest = order.into_iter().peekable();
    for (k, kind) in [(2, SplitKind::Test), (1, SplitKind::Val)] {
        while let Some(s) = rest.peek() {
            if (counts[k] + s.len()) as f64 - targets[k] > targets[k] - counts[k] as f64 {
                break;
            }
            counts[k] += s.len();
            assignment.push((s.id, kind));
            rest.next();
        }
    }
    for s in rest {
        counts[0] += s.len();
        assignment.push((s.id, SplitKind::Train));
    }
    check_realized(total, counts, spec)?;

    let ids = |kind| -> Vec<u32> { assignment.iter().filter(|(_, k)| *k == kind).map(|(id, _)| *id).collect() };
    let split = DatasetSplit {
        train: ds.select_trajectories(&ids(SplitKind::Train))?,
        val: ds.select_trajectories(&ids(SplitKind::Val))?,
        test: ds.select_trajectories(&ids(SplitKind::Test))?,
        assignment,
    };
    split.normalized()
}

/// Assign individual pairs at random, ignoring trajectories. Used only to
/// show what trajectory-level splitting protects against.
pub fn split_random_points(ds: &Dataset, spec: &SplitSpec) -> Result<DatasetSplit, NnError> {
    spec.validate()?;
    if ds.is_empty() {
        return Err(NnError::EmptyDataset);
    }
    let total = ds.len();
    let mut idx: Vec<usize> = (0..total).collect();
    idx.shuffle(&mut stage_rng(spec.seed, "split/points"));
    let n_test = (spec.test * total as f64).round() as usize;
    let n_val = (spec.val * total as f64).round() as usize;
    let mut kind = vec![SplitKind::Train; total];
    for &i in &idx[..n_test] {
        kind[i] = SplitKind::Test;
    }
    for &i in &idx[n_test..n_test + n_val] {
        kind[i] = SplitKind::Val;
    }
    let take = |want: SplitKind| -> Result<Dataset, NnError> {
        // original order keeps every trajectory contiguous within a part
        ds.with_pairs(
            ds.pairs
                .iter()
                .zip(&kind)
                .filter(|(_, k)| **k == want)
                .map(|(p, _)| p.clone())
                .collect(),
        )
    };
    let split = DatasetSplit {
        train: take(SplitKind::Train)?,
        val: take(SplitKind::Val)?,
        test: take(SplitKind::Test)?,
        assignment: Vec::new(),
    };
    split.normalized()
}
