//! Mining of temporal pairs and triplets from unlabeled clips.
//!
//! Candidate tuples are never materialized. For every clip the candidates
//! split into blocks of equal gap structure (all pairs with gap `g`, all
//! triplets with spacings `(a, b)`), each block holding `len - span`
//! tuples, so a global rank can be unranked in `O(log blocks)`. Sampling
//! draws distinct ranks uniformly and unranks them.

use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;

use rand::seq::index;

use crate::datamodel::UnlabeledSet;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PairSample {
    pub clip_id: String,
    /// Later frame.
    pub j: usize,
    /// Earlier frame.
    pub k: usize,
    pub positive: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TripletSample {
    pub clip_id: String,
    pub l: usize,
    pub m: usize,
    pub n: usize,
    pub positive: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MiningConfig {
    /// Temporal window in seconds; converted per clip by flooring.
    pub t_seconds: f64,
    pub pair_neg_ratio: usize,
    pub triplet_neg_ratio: usize,
    pub max_pairs: usize,
    pub max_triplets: usize,
    pub seed: u64,
}

impl Default for MiningConfig {
    fn default() -> Self {
        MiningConfig {
            t_seconds: 2.0,
            pair_neg_ratio: 3,
            triplet_neg_ratio: 1,
            max_pairs: 20_000,
            max_triplets: 20_000,
            seed: 0,
        }
    }
}

impl MiningConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_seconds > 0.0 && self.t_seconds.is_finite()) {
            return Err(Error::Config(format!(
                "temporal window must be positive, got {}",
                self.t_seconds
            )));
        }
        if self.max_pairs == 0 || self.max_triplets == 0 {
            return Err(Error::Config("tuple caps must be at least 1".into()));
        }
        Ok(())
    }
}

impl fmt::Display for MiningConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "t_seconds={} pair_neg_ratio={} triplet_neg_ratio={} max_pairs={} max_triplets={} seed={}",
            self.t_seconds,
            self.pair_neg_ratio,
            self.triplet_neg_ratio,
            self.max_pairs,
            self.max_triplets,
            self.seed
        )
    }
}

/// Tuples emitted by one mining run.
#[derive(Debug, Clone, PartialEq)]
pub struct Mined<S> {
    pub samples: Vec<S>,
    pub positives: usize,
    pub negatives: usize,
    /// Clips too short to contribute a single positive.
    pub skipped_clips: usize,
}

impl<S> Mined<S> {
    /// Negatives per positive actually achieved.
    pub fn achieved_ratio(&self) -> f64 {
        if self.positives == 0 {
            0.0
        } else {
            self.negatives as f64 / self.positives as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Block {
    clip: usize,
    /// Offsets of the tuple members relative to the first frame.
    first_gap: usize,
    second_gap: usize,
    count: usize,
}

/// An implicitly enumerated, ordered set of same-clip tuples.
#[derive(Debug, Clone, Default)]
pub struct Candidates {
    blocks: Vec<Block>,
    /// Prefix sums of block counts; `starts[i]` is the rank of block `i`'s first tuple.
    starts: Vec<usize>,
    total: usize,
}

impl Candidates {
    fn push(&mut self, clip: usize, first_gap: usize, second_gap: usize, count: usize) {
        if count == 0 {
            return;
        }
        self.starts.push(self.total);
        self.blocks.push(Block {
            clip,
            first_gap,
            second_gap,
            count,
        });
        self.total += count;
    }

    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    /// Unranks to `(clip index, [first, second, third])`. For pairs the
    /// third entry repeats the second.
    pub fn get(&self, rank: usize) -> (usize, [usize; 3]) {
        assert!(rank < self.total, "rank {rank} out of {}", self.total);
        let b = self.starts.partition_point(|&s| s <= rank) - 1;
        let block = self.blocks[b];
        let first = rank - self.starts[b];
        let second = first + block.first_gap;
        (block.clip, [first, second, second + block.second_gap])
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, [usize; 3])> + '_ {
        (0..self.total).map(move |r| self.get(r))
    }
}

/// Positive and negative pair candidates for one clip length.
///
/// Positives have gap `1..=t`; negatives have gap `>= 2t + 1`.
pub fn pair_candidates(clip: usize, len: usize, t: usize, pos: &mut Candidates, neg: &mut Candidates) {
    if t == 0 {
        return;
    }
    for g in 1..=t.min(len.saturating_sub(1)) {
        pos.push(clip, g, 0, len - g);
    }
    for g in (2 * t + 1)..len {
        neg.push(clip, g, 0, len - g);
    }
}

/// Positive and negative triplet candidates for one clip length.
///
/// Positives are evenly spaced with spacing `1..=t`; negatives have
/// `m - l` in `1..=t` and `n - m >= 2t`.
pub fn triplet_candidates(
    clip: usize,
    len: usize,
    t: usize,
    pos: &mut Candidates,
    neg: &mut Candidates,
) {
    if t == 0 {
        return;
    }
    for s in 1..=t {
        pos.push(clip, s, s, len.saturating_sub(2 * s));
    }
    for a in 1..=t {
        for b in (2 * t)..len {
            neg.push(clip, a, b, len.saturating_sub(a + b));
        }
    }
}

fn window(u: &UnlabeledSet, cfg: &MiningConfig) -> Vec<usize> {
    u.clips()
        .iter()
        .map(|c| c.window_frames(cfg.t_seconds))
        .collect()
}

/// Picks how many positives and negatives to draw under the cap and ratio.
fn plan(pos_avail: usize, neg_avail: usize, ratio: usize, cap: usize) -> (usize, usize) {
    let n_pos = (cap / (ratio + 1)).max(1).min(pos_avail);
    let n_neg = (n_pos * ratio).min(neg_avail).min(cap - n_pos);
    (n_pos, n_neg)
}

fn draw(cands: &Candidates, amount: usize, rng: &mut crate::rng::Rng) -> Vec<(usize, [usize; 3])> {
    let mut ranks = index::sample(rng, cands.len(), amount).into_vec();
    ranks.sort_unstable();
    ranks.into_iter().map(|r| cands.get(r)).collect()
}

fn check_availability(pos: &Candidates, neg: &Candidates, ratio: usize, what: &str) -> Result<()> {
    if pos.is_empty() {
        return Err(Error::Mining(format!(
            "no clip is long enough to contain a positive {what}"
        )));
    }
    if ratio > 0 && neg.is_empty() {
        return Err(Error::Mining(format!(
            "no clip is long enough to contain a negative {what} beyond the buffer gap"
        )));
    }
    Ok(())
}

pub fn mine_pairs(u: &UnlabeledSet, cfg: &MiningConfig) -> Result<Mined<PairSample>> {
    cfg.validate()?;
    let (mut pos, mut neg) = (Candidates::default(), Candidates::default());
    let mut skipped = 0;
    for (ci, (clip, t)) in u.clips().iter().zip(window(u, cfg)).enumerate() {
        if t == 0 || clip.len() < 2 {
            skipped += 1;
        }
        pair_candidates(ci, clip.len(), t, &mut pos, &mut neg);
    }
    check_availability(&pos, &neg, cfg.pair_neg_ratio, "pair")?;
    let (n_pos, n_neg) = plan(pos.len(), neg.len(), cfg.pair_neg_ratio, cfg.max_pairs);
    let mut rng = seeded(derive_seed(cfg.seed, 0));
    let to_sample = |(ci, idx): (usize, [usize; 3]), positive| PairSample {
        clip_id: u.clips()[ci].id().to_string(),
        j: idx[1],
        k: idx[0],
        positive,
    };
    let mut samples: Vec<PairSample> = draw(&pos, n_pos, &mut rng)
        .into_iter()
        .map(|c| to_sample(c, true))
        .collect();
    samples.extend(draw(&neg, n_neg, &mut rng).into_iter().map(|c| to_sample(c, false)));
    Ok(Mined {
        samples,
        positives: n_pos,
        negatives: n_neg,
        skipped_clips: skipped,
    })
}

pub fn mine_triplets(u: &UnlabeledSet, cfg: &MiningConfig) -> Result<Mined<TripletSample>> {
    cfg.validate()?;
    let (mut pos, mut neg) = (Candidates::default(), Candidates::default());
    let mut skipped = 0;
    for (ci, (clip, t)) in u.clips().iter().zip(window(u, cfg)).enumerate() {
        if t == 0 || clip.len() < 3 {
            skipped += 1;
        }
        triplet_candidates(ci, clip.len(), t, &mut pos, &mut neg);
    }
    check_availability(&pos, &neg, cfg.triplet_neg_ratio, "triplet")?;
    let (n_pos, n_neg) = plan(pos.len(), neg.len(), cfg.triplet_neg_ratio, cfg.max_triplets);
    let mut rng = seeded(derive_seed(cfg.seed, 1));
    let to_sample = |(ci, idx): (usize, [usize; 3]), positive| TripletSample {
        clip_id: u.clips()[ci].id().to_string(),
        l: idx[0],
        m: idx[1],
        n: idx[2],
        positive,
    };
    let mut samples: Vec<TripletSample> = draw(&pos, n_pos, &mut rng)
        .into_iter()
        .map(|c| to_sample(c, true))
        .collect();
    samples.extend(draw(&neg, n_neg, &mut rng).into_iter().map(|c| to_sample(c, false)));
    Ok(Mined {
        samples,
        positives: n_pos,
        negatives: n_neg,
        skipped_clips: skipped,
    })
}

/// Contents of a tuple file.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TupleFile {
    pub config: Option<MiningConfig>,
    pub pairs: Vec<PairSample>,
    pub triplets: Vec<TripletSample>,
}

const TUPLE_MAGIC: &str = "# ssfa-tuples v1";

impl TupleFile {
    pub fn to_text(&self) -> String {
        let mut out = String::from(TUPLE_MAGIC);
        out.push('\n');
        if let Some(cfg) = &self.config {
            writeln!(out, "# {cfg}").unwrap();
        }
        for p in &self.pairs {
            writeln!(out, "PAIR {} {} {} {}", p.clip_id, p.j, p.k, u8::from(p.positive)).unwrap();
        }
        for t in &self.triplets {
            writeln!(
                out,
                "TRIP {} {} {} {} {}",
                t.clip_id,
                t.l,
                t.m,
                t.n,
                u8::from(t.positive)
            )
            .unwrap();
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut file = TupleFile::default();
        for (no, line) in text.lines().enumerate() {
            let bad = |why: &str| Error::Format(format!("tuple line {}: {why}", no + 1));
            if let Some(comment) = line.strip_prefix('#') {
                if comment.trim_start().starts_with("t_seconds=") {
                    file.config = Some(parse_config(comment).ok_or_else(|| bad("bad config echo"))?);
                }
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let num = |s: &str| s.parse::<usize>().map_err(|_| bad("expected an integer"));
            let flag = |s: &str| match s {
                "0" => Ok(false),
                "1" => Ok(true),
                _ => Err(bad("label must be 0 or 1")),
            };
            match fields.as_slice() {
                [] => {}
                ["PAIR", id, j, k, p] => {
                    let (j, k) = (num(j)?, num(k)?);
                    if j <= k {
                        return Err(bad("pair requires j > k"));
                    }
                    file.pairs.push(PairSample {
                        clip_id: id.to_string(),
                        j,
                        k,
                        positive: flag(p)?,
                    });
                }
                ["TRIP", id, l, m, n, p] => {
                    let (l, m, n) = (num(l)?, num(m)?, num(n)?);
                    if !(l < m && m < n) {
                        return Err(bad("triplet requires l < m < n"));
                    }
                    file.triplets.push(TripletSample {
                        clip_id: id.to_string(),
                        l,
                        m,
                        n,
                        positive: flag(p)?,
                    });
                }
                _ => return Err(bad("expected PAIR or TRIP record")),
            }
        }
        Ok(file)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        TupleFile::parse(&text)
    }
}

fn parse_config(s: &str) -> Option<MiningConfig> {
    let mut cfg = MiningConfig::default();
    for kv in s.split_whitespace() {
        let (k, v) = kv.split_once('=')?;
        match k {
            "t_seconds" => cfg.t_seconds = v.parse().ok()?,
            "pair_neg_ratio" => cfg.pair_neg_ratio = v.parse().ok()?,
            "triplet_neg_ratio" => cfg.triplet_neg_ratio = v.parse().ok()?,
            "max_pairs" => cfg.max_pairs = v.parse().ok()?,
            "max_triplets" => cfg.max_triplets = v.parse().ok()?,
            "seed" => cfg.seed = v.parse().ok()?,
            _ => return None,
        }
    }
    Some(cfg)
}
