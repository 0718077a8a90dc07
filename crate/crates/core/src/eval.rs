//! Measurement protocols: sequence completion, linear-classifier accuracy
//! and kNN accuracy.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datamodel::{standardize, Frame, LabeledSet, UnlabeledSet};
use crate::error::{shape_check, Error, Result};
use crate::mining::{mine_triplets, MiningConfig};
use crate::network::{argmax, embed, Model, NetworkParams};
use crate::rng::seeded;

/// The first two frames of an evenly spaced triplet and the frame that completes it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryPair {
    pub clip_id: String,
    pub t1: usize,
    pub t2: usize,
    pub t3: usize,
}

/// `2·z2 − z1`
pub fn extrapolate(z1: &[f64], z2: &[f64]) -> Result<Vec<f64>> {
    shape_check("extrapolation input", z1.len(), z2.len())?;
    Ok(z1.iter().zip(z2).map(|(a, b)| 2.0 * b - a).collect())
}

/// Draws up to `count` queries from the positive triplets of `u` with
/// window `t_seconds`.
pub fn sample_queries(u: &UnlabeledSet, t_seconds: f64, count: usize, seed: u64) -> Result<Vec<QueryPair>> {
    let cfg = MiningConfig {
        t_seconds,
        triplet_neg_ratio: 0,
        max_triplets: count.max(1),
        seed,
        ..MiningConfig::default()
    };
    let mined = mine_triplets(u, &cfg)?;
    Ok(mined
        .samples
        .into_iter()
        .take(count)
        .map(|s| QueryPair {
            clip_id: s.clip_id,
            t1: s.l,
            t2: s.m,
            t3: s.n,
        })
        .collect())
}

/// Candidate frames identified by clip and frame index.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CandidatePool {
    entries: Vec<(String, usize)>,
    lookup: HashMap<(String, usize), usize>,
}

impl CandidatePool {
    fn insert(&mut self, clip_id: &str, frame: usize) {
        let key = (clip_id.to_string(), frame);
        if !self.lookup.contains_key(&key) {
            self.lookup.insert(key.clone(), self.entries.len());
            self.entries.push(key);
        }
    }

    pub fn entries(&self) -> &[(String, usize)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn position(&self, clip_id: &str, frame: usize) -> Option<usize> {
        self.lookup.get(&(clip_id.to_string(), frame)).copied()
    }
}

/// Query images and ground truths, plus up to `n_per_clip` random further
/// frames from every clip the queries touch. Entries are unique.
pub fn build_pool(queries: &[QueryPair], u: &UnlabeledSet, n_per_clip: usize, seed: u64) -> Result<CandidatePool> {
    let mut pool = CandidatePool::default();
    let mut clips = Vec::new();
    let mut seen = HashSet::new();
    for q in queries {
        let clip = u
            .clip(&q.clip_id)
            .ok_or_else(|| Error::Validation(format!("query references unknown clip `{}`", q.clip_id)))?;
        if q.t3 >= clip.len() || !(q.t1 < q.t2 && q.t2 - q.t1 == q.t3 - q.t2) {
            return Err(Error::Validation(format!(
                "query ({}, {}, {}) is not an evenly spaced triplet inside clip `{}`",
                q.t1, q.t2, q.t3, q.clip_id
            )));
        }
        for t in [q.t1, q.t2, q.t3] {
            pool.insert(&q.clip_id, t);
        }
        if seen.insert(q.clip_id.as_str()) {
            clips.push(clip);
        }
    }
    let mut rng = seeded(seed);
    for clip in clips {
        let free: Vec<usize> = (0..clip.len())
            .filter(|&t| pool.position(clip.id(), t).is_none())
            .collect();
        let take = n_per_clip.min(free.len());
        let mut picked: Vec<usize> = index::sample(&mut rng, free.len(), take).into_iter().map(|i| free[i]).collect();
        picked.sort_unstable();
        for t in picked {
            pool.insert(clip.id(), t);
        }
    }
    Ok(pool)
}

/// `1 + |{c ≠ truth : d(c, target) < d(truth, target)}|` under L2.
pub fn rank_of(target: &[f64], candidates: &[Vec<f64>], truth: usize) -> Result<usize> {
    if truth >= candidates.len() {
        return Err(Error::Contract(format!(
            "ground truth index {truth} outside pool of {}",
            candidates.len()
        )));
    }
    let d2 = |z: &[f64]| -> f64 { z.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum() };
    let reference = d2(&candidates[truth]);
    let closer = candidates
        .iter()
        .enumerate()
        .filter(|&(i, c)| i != truth && d2(c) < reference)
        .count();
    Ok(1 + closer)
}

fn embed_all(net: &NetworkParams, frames: &[&Frame]) -> Result<Vec<Vec<f64>>> {
    frames
        .par_iter()
        .map(|f| embed(net, &standardize(f.pixels())))
        .collect()
}

fn frame<'a>(u: &'a UnlabeledSet, clip_id: &str, t: usize) -> Result<&'a Frame> {
    u.clip(clip_id)
        .and_then(|c| c.frames().get(t))
        .ok_or_else(|| Error::Validation(format!("frame {t} of clip `{clip_id}` does not exist")))
}

/// Rank of each query's ground truth in the pool.
pub fn seqcomp_ranks(net: &NetworkParams, u: &UnlabeledSet, queries: &[QueryPair], pool: &CandidatePool) -> Result<Vec<usize>> {
    let pool_frames = pool
        .entries
        .iter()
        .map(|(c, t)| frame(u, c, *t))
        .collect::<Result<Vec<_>>>()?;
    let pool_z = embed_all(net, &pool_frames)?;
    queries
        .par_iter()
        .map(|q| {
            let truth = pool.position(&q.clip_id, q.t3).ok_or_else(|| {
                Error::Contract(format!("ground truth {}:{} missing from the pool", q.clip_id, q.t3))
            })?;
            let z1 = embed(net, &standardize(frame(u, &q.clip_id, q.t1)?.pixels()))?;
            let z2 = embed(net, &standardize(frame(u, &q.clip_id, q.t2)?.pixels()))?;
            rank_of(&extrapolate(&z1, &z2)?, &pool_z, truth)
        })
        .collect()
}

/// Mean percentile rank `mean(r / pool_size) · 100`.
pub fn eta(ranks: &[usize], pool_size: usize) -> Result<f64> {
    if ranks.is_empty() {
        return Err(Error::Contract("η needs at least one rank".into()));
    }
    if let Some(r) = ranks.iter().find(|&&r| r == 0 || r > pool_size) {
        return Err(Error::Contract(format!("rank {r} outside [1, {pool_size}]")));
    }
    let total: f64 = ranks.iter().map(|&r| r as f64 / pool_size as f64).sum();
    Ok(100.0 * total / ranks.len() as f64)
}

/// Fraction of `test` the model's own classifier labels correctly.
pub fn linear_accuracy(model: &Model, test: &LabeledSet) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::Contract("test set is empty".into()));
    }
    let frames: Vec<&Frame> = test.images().iter().collect();
    let zs = embed_all(&model.net, &frames)?;
    let correct = zs
        .iter()
        .zip(test.labels())
        .filter(|(z, &y)| argmax(&model.classifier.matrix().mul_vec(z)) == y)
        .count();
    Ok(correct as f64 / test.len() as f64)
}

/// Majority vote among the `k` nearest training features (L2, index order
/// on distance ties). A vote tie goes to the tied class whose nearest
/// member is closest. `exclude` removes one training index from the search.
pub fn knn_predict(train: &[Vec<f64>], labels: &[usize], query: &[f64], k: usize, exclude: Option<usize>) -> usize {
    let mut order: Vec<(f64, usize)> = train
        .iter()
        .enumerate()
        .filter(|&(i, _)| Some(i) != exclude)
        .map(|(i, z)| (z.iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum(), i))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    order.truncate(k);
    // (votes, position of the nearest member) per class
    let mut tally: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for (pos, &(_, i)) in order.iter().enumerate() {
        let e = tally.entry(labels[i]).or_insert((0, pos));
        e.0 += 1;
    }
    tally
        .into_iter()
        .max_by(|a, b| a.1 .0.cmp(&b.1 .0).then(b.1 .1.cmp(&a.1 .1)))
        .map(|(class, _)| class)
        .expect("k >= 1 and a nonempty training set")
}

/// kNN accuracy in feature space. With `exclude_self`, train and test must
/// be the same set and each item ignores itself.
pub fn knn_accuracy(net: &NetworkParams, train: &LabeledSet, test: &LabeledSet, k: usize, exclude_self: bool) -> Result<f64> {
    let available = train.len() - usize::from(exclude_self);
    if k == 0 || available < k {
        return Err(Error::Contract(format!(
            "k = {k} needs at least k training items, have {available}"
        )));
    }
    if test.is_empty() {
        return Err(Error::Contract("test set is empty".into()));
    }
    if exclude_self && train.len() != test.len() {
        return Err(Error::Contract("exclude_self requires test to be the training set".into()));
    }
    let train_z = embed_all(net, &train.images().iter().collect::<Vec<_>>())?;
    let test_z = embed_all(net, &test.images().iter().collect::<Vec<_>>())?;
    let correct = test_z
        .iter()
        .enumerate()
        .filter(|&(i, z)| knn_predict(&train_z, train.labels(), z, k, exclude_self.then_some(i)) == test.labels()[i])
        .count();
    Ok(correct as f64 / test.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalReport {
    pub eta: Option<f64>,
    pub ranks: Vec<usize>,
    pub pool_size: Option<usize>,
    pub accuracy: Option<f64>,
    pub config: BTreeMap<String, String>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(format!("bad report: {e}")))
    }

    pub fn ranks_csv(&self, queries: &[QueryPair]) -> String {
        let mut out = String::from("query,clip_id,t1,t2,t3,rank\n");
        for (i, (q, r)) in queries.iter().zip(&self.ranks).enumerate() {
            writeln!(out, "{i},{},{},{},{},{r}", q.clip_id, q.t1, q.t2, q.t3).unwrap();
        }
        out
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}
