//! Joint minibatch training with Nesterov momentum, early stopping, and
//! the staged greedy hyperparameter search.

use std::fmt::Write as _;

use rand::seq::SliceRandom;

use crate::datamodel::{standardize, LabeledSet, UnlabeledSet};
use crate::error::{Error, Result};
use crate::losses::{self, total_objective, Labeled, Margins, Pair, Triplet};
use crate::mining::{PairSample, TripletSample};
use crate::network::{embed, ClassifierWeights, LayerSpec, Model, NetworkParams, Params};
use crate::rng::{derive_seed, seeded, Rng};

/// One Nesterov update in lookahead form:
///
/// ```text
/// v ← μ·v − lr·∇f(θ + μ·v)
/// θ ← θ + v
/// ```
///
/// `grad_fn` receives the lookahead point `θ + μ·v`.
pub fn nesterov_step<P: Params>(
    params: &mut P,
    velocity: &mut P,
    grad_fn: impl FnOnce(&P) -> Result<P>,
    lr: f64,
    momentum: f64,
) -> Result<()> {
    let mut lookahead = params.clone();
    lookahead.add_scaled(momentum, velocity);
    let grad = grad_fn(&lookahead)?;
    if !grad.all_finite() {
        return Err(Error::NonFinite { term: "gradient" });
    }
    velocity.scale(momentum);
    velocity.add_scaled(-lr, &grad);
    params.add_scaled(1.0, velocity);
    Ok(())
}

/// Velocity buffers for the full parameter set, zero-initialized.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub velocity: Model,
}

impl OptimizerState {
    pub fn new(model: &Model) -> Self {
        OptimizerState {
            velocity: model.zeros_like(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub momentum: f64,
    /// Weight of the unsupervised term.
    pub lambda: f64,
    /// Weight of steadiness relative to slowness inside the unsupervised term.
    pub lambda2: f64,
    pub margins: Margins,
    pub batch_labeled: usize,
    pub batch_pairs: usize,
    pub batch_triplets: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub val_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.01,
            momentum: 0.9,
            lambda: 0.0,
            lambda2: 0.0,
            margins: Margins::default(),
            batch_labeled: 16,
            batch_pairs: 32,
            batch_triplets: 32,
            max_epochs: 200,
            patience: 20,
            seed: 0,
            val_fraction: 0.2,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("learning rate must be positive, got {}", self.lr));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must lie in [0, 1), got {}", self.momentum));
        }
        if !(self.lambda >= 0.0 && self.lambda2 >= 0.0) {
            return bad(format!(
                "regularization weights must be nonnegative, got λ={} λ′={}",
                self.lambda, self.lambda2
            ));
        }
        if self.margins.delta_pair < 0.0 || self.margins.delta_triplet < 0.0 {
            return bad("margins must be nonnegative".into());
        }
        if self.batch_labeled == 0 {
            return bad("batch_labeled must be at least 1".into());
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return bad(format!("val_fraction must lie in (0, 1), got {}", self.val_fraction));
        }
        Ok(())
    }
}

/// Standardized, flattened labeled images.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedSet {
    pub inputs: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl PreparedSet {
    pub fn new(set: &LabeledSet) -> Self {
        PreparedSet {
            inputs: set.images().iter().map(|f| standardize(f.pixels())).collect(),
            labels: set.labels().to_vec(),
            num_classes: set.num_classes(),
        }
    }

    fn subset(&self, idx: &[usize]) -> PreparedSet {
        PreparedSet {
            inputs: idx.iter().map(|&i| self.inputs[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
        }
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

/// Mined tuples resolved against standardized clip frames.
#[derive(Debug, Clone, Default)]
pub struct TupleBank {
    frames: Vec<Vec<Vec<f64>>>,
    pairs: Vec<(usize, usize, usize, bool)>,
    triplets: Vec<(usize, [usize; 3], bool)>,
}

impl TupleBank {
    pub fn new(u: &UnlabeledSet, pairs: &[PairSample], triplets: &[TripletSample]) -> Result<Self> {
        let frames: Vec<Vec<Vec<f64>>> = u
            .clips()
            .iter()
            .map(|c| c.frames().iter().map(|f| standardize(f.pixels())).collect())
            .collect();
        let locate = |id: &str, idx: &[usize]| -> Result<usize> {
            let ci = u
                .clip_index(id)
                .ok_or_else(|| Error::Validation(format!("tuple references unknown clip `{id}`")))?;
            let len = frames[ci].len();
            if let Some(&bad) = idx.iter().find(|&&i| i >= len) {
                return Err(Error::Validation(format!(
                    "tuple frame {bad} out of range for clip `{id}` ({len} frames)"
                )));
            }
            Ok(ci)
        };
        let pairs = pairs
            .iter()
            .map(|p| Ok((locate(&p.clip_id, &[p.j, p.k])?, p.j, p.k, p.positive)))
            .collect::<Result<Vec<_>>>()?;
        let triplets = triplets
            .iter()
            .map(|t| Ok((locate(&t.clip_id, &[t.l, t.m, t.n])?, [t.l, t.m, t.n], t.positive)))
            .collect::<Result<Vec<_>>>()?;
        Ok(TupleBank {
            frames,
            pairs,
            triplets,
        })
    }

    pub fn empty() -> Self {
        TupleBank::default()
    }

    pub fn num_pairs(&self) -> usize {
        self.pairs.len()
    }

    pub fn num_triplets(&self) -> usize {
        self.triplets.len()
    }

    fn input_dim(&self) -> Option<usize> {
        self.frames.first().and_then(|c| c.first()).map(Vec::len)
    }

    pub fn pair(&self, i: usize) -> Pair<'_> {
        let (c, j, k, p) = self.pairs[i];
        (&self.frames[c][j], &self.frames[c][k], p)
    }

    pub fn triplet(&self, i: usize) -> Triplet<'_> {
        let (c, [l, m, n], p) = self.triplets[i];
        (&self.frames[c][l], &self.frames[c][m], &self.frames[c][n], p)
    }
}

/// Endless stream of indices that reshuffles after every full pass.
#[derive(Debug, Clone)]
struct Cycler {
    order: Vec<usize>,
    pos: usize,
}

impl Cycler {
    fn new(n: usize) -> Self {
        Cycler {
            order: (0..n).collect(),
            pos: n,
        }
    }

    fn take(&mut self, count: usize, rng: &mut Rng) -> Vec<usize> {
        if self.order.is_empty() {
            return Vec::new();
        }
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            if self.pos == self.order.len() {
                self.order.shuffle(rng);
                self.pos = 0;
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub supervised: f64,
    pub slowness: Option<f64>,
    pub steadiness: Option<f64>,
    pub val_loss: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    /// The epoch with the lowest validation loss (earliest on ties).
    pub fn best(&self) -> Option<&EpochRecord> {
        self.epochs
            .iter()
            .fold(None, |best: Option<&EpochRecord>, r| match best {
                Some(b) if b.val_loss <= r.val_loss => Some(b),
                _ => Some(r),
            })
    }

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut out = String::from("epoch,L_s,R2,R3,val_loss,val_acc\n");
        for r in &self.epochs {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.epoch,
                r.supervised,
                opt(r.slowness),
                opt(r.steadiness),
                r.val_loss,
                r.val_acc
            )
            .unwrap();
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the best validation loss.
    pub model: Model,
    pub history: TrainHistory,
    pub best_epoch: usize,
}

/// Splits indices per class, sending `round(n_c · fraction)` of each class
/// (at least one when the class has two or more members) to validation.
pub fn stratified_split(labels: &[usize], num_classes: usize, fraction: f64, rng: &mut Rng) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::new();
    let mut val = Vec::new();
    for class in 0..num_classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        members.shuffle(rng);
        let n = members.len();
        let mut take = (n as f64 * fraction).round() as usize;
        if n >= 2 {
            take = take.clamp(1, n - 1);
        } else {
            take = 0;
        }
        val.extend_from_slice(&members[..take]);
        train.extend_from_slice(&members[take..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

/// Mean softmax loss and accuracy of `model` on a prepared set.
pub fn evaluate_classifier(model: &Model, set: &PreparedSet) -> Result<(f64, f64)> {
    let zs = set
        .inputs
        .iter()
        .map(|x| embed(&model.net, x))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&[f64]> = zs.iter().map(Vec::as_slice).collect();
    let loss = losses::softmax_loss(&model.classifier, &refs, &set.labels)?;
    let correct = zs
        .iter()
        .zip(&set.labels)
        .filter(|(z, &y)| crate::network::argmax(&model.classifier.matrix().mul_vec(z)) == y)
        .count();
    Ok((loss.value, correct as f64 / set.len() as f64))
}

fn check_tuples(cfg: &TrainConfig, tuples: &TupleBank) -> Result<()> {
    if cfg.lambda > 0.0 && tuples.num_pairs() == 0 && tuples.num_triplets() == 0 {
        return Err(Error::Config(
            "λ > 0 requires mined pairs or triplets".into(),
        ));
    }
    if cfg.lambda > 0.0 && cfg.lambda2 > 0.0 && tuples.num_triplets() == 0 {
        return Err(Error::Config("λ′ > 0 requires mined triplets".into()));
    }
    Ok(())
}

struct Streams {
    pairs: Cycler,
    triplets: Cycler,
}

impl Streams {
    fn new(tuples: &TupleBank) -> Self {
        Streams {
            pairs: Cycler::new(tuples.num_pairs()),
            triplets: Cycler::new(tuples.num_triplets()),
        }
    }

    fn draw<'a>(
        &mut self,
        tuples: &'a TupleBank,
        cfg: &TrainConfig,
        rng: &mut Rng,
    ) -> (Vec<Pair<'a>>, Vec<Triplet<'a>>) {
        let pairs = self
            .pairs
            .take(cfg.batch_pairs, rng)
            .into_iter()
            .map(|i| tuples.pair(i))
            .collect();
        let triplets = self
            .triplets
            .take(cfg.batch_triplets, rng)
            .into_iter()
            .map(|i| tuples.triplet(i))
            .collect();
        (pairs, triplets)
    }
}

#[derive(Default)]
struct TermMeans {
    sums: [f64; 3],
    counts: [usize; 3],
}

impl TermMeans {
    fn add(&mut self, obj: &losses::Objective) {
        for (i, v) in [obj.supervised, obj.slowness, obj.steadiness].into_iter().enumerate() {
            if let Some(v) = v {
                self.sums[i] += v;
                self.counts[i] += 1;
            }
        }
    }

    fn mean(&self, i: usize) -> Option<f64> {
        (self.counts[i] > 0).then(|| self.sums[i] / self.counts[i] as f64)
    }
}

/// Trains the feature network and classifier on `L_s + λ·(R2 + λ′·R3)`.
///
/// An epoch is one pass over the labeled training split; the pair and
/// triplet streams cycle independently and reshuffle after each pass.
pub fn train(s: &LabeledSet, tuples: &TupleBank, spec: &LayerSpec, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    check_tuples(cfg, tuples)?;
    if s.is_empty() {
        return Err(Error::Config("labeled set is empty".into()));
    }
    let prepared = PreparedSet::new(s);
    if prepared.inputs[0].len() != spec.input_dim() {
        return Err(Error::Shape(format!(
            "images have {} pixels, network expects {}",
            prepared.inputs[0].len(),
            spec.input_dim()
        )));
    }
    if let Some(d) = tuples.input_dim().filter(|&d| d != spec.input_dim()) {
        return Err(Error::Shape(format!(
            "clip frames have {d} pixels, network expects {}",
            spec.input_dim()
        )));
    }
    let mut rng = seeded(derive_seed(cfg.seed, 0x5EED));
    let (train_idx, val_idx) = stratified_split(&prepared.labels, prepared.num_classes, cfg.val_fraction, &mut rng);
    if val_idx.is_empty() {
        return Err(Error::Config(
            "validation split is empty; each class needs at least two labeled images".into(),
        ));
    }
    let train_set = prepared.subset(&train_idx);
    let val_set = prepared.subset(&val_idx);

    let mut model = Model::init(spec, prepared.num_classes, cfg.seed);
    let mut state = OptimizerState::new(&model);
    let mut streams = Streams::new(tuples);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = TrainHistory::default();
    let mut best: Option<(f64, Model, usize)> = None;
    let mut since_best = 0;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut means = TermMeans::default();
        for chunk in order.chunks(cfg.batch_labeled) {
            let labeled: Vec<Labeled<'_>> = chunk
                .iter()
                .map(|&i| (train_set.inputs[i].as_slice(), train_set.labels[i]))
                .collect();
            let (pairs, triplets) = streams.draw(tuples, cfg, &mut rng);
            let mut objective = None;
            nesterov_step(
                &mut model,
                &mut state.velocity,
                |at| {
                    let obj = total_objective(at, &labeled, &pairs, &triplets, cfg.lambda, cfg.lambda2, &cfg.margins)?;
                    let grad = obj.grad.clone();
                    objective = Some(obj);
                    Ok(grad)
                },
                cfg.lr,
                cfg.momentum,
            )?;
            means.add(objective.as_ref().unwrap());
        }
        let (val_loss, val_acc) = evaluate_classifier(&model, &val_set)?;
        if !val_loss.is_finite() {
            return Err(Error::NonFinite { term: "validation loss" });
        }
        history.epochs.push(EpochRecord {
            epoch,
            supervised: means.mean(0).unwrap_or(0.0),
            slowness: means.mean(1),
            steadiness: means.mean(2),
            val_loss,
            val_acc,
        });
        if best.as_ref().is_none_or(|(b, _, _)| val_loss < *b) {
            best = Some((val_loss, model.clone(), epoch));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    let (_, model, best_epoch) = best.ok_or_else(|| Error::Config("max_epochs must be at least 1".into()))?;
    Ok(TrainOutcome {
        model,
        history,
        best_epoch,
    })
}

/// Trains the feature network on `λ·(R2 + λ′·R3)` alone and returns
/// snapshots: the initialization followed by the parameters after each
/// cumulative step count in `checkpoints` (which must be increasing).
pub fn train_unsupervised(
    tuples: &TupleBank,
    spec: &LayerSpec,
    cfg: &TrainConfig,
    checkpoints: &[usize],
) -> Result<Vec<NetworkParams>> {
    cfg.validate()?;
    if tuples.num_pairs() == 0 && tuples.num_triplets() == 0 {
        return Err(Error::Config("unsupervised training needs mined tuples".into()));
    }
    if checkpoints.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("checkpoints must be strictly increasing".into()));
    }
    let mut rng = seeded(derive_seed(cfg.seed, 0x5EED));
    let net = crate::network::init_glorot(spec, cfg.seed);
    let mut model = Model::new(net, ClassifierWeights::zeros(1, spec.output_dim()))?;
    let mut state = OptimizerState::new(&model);
    let mut streams = Streams::new(tuples);
    let mut snapshots = vec![model.net.clone()];
    let mut step = 0;
    for &target in checkpoints {
        while step < target {
            let (pairs, triplets) = streams.draw(tuples, cfg, &mut rng);
            nesterov_step(
                &mut model,
                &mut state.velocity,
                |at| Ok(total_objective(at, &[], &pairs, &triplets, cfg.lambda, cfg.lambda2, &cfg.margins)?.grad),
                cfg.lr,
                cfg.momentum,
            )?;
            step += 1;
        }
        snapshots.push(model.net.clone());
    }
    Ok(snapshots)
}

/// Candidate values for each stage of [`greedy_cv`].
#[derive(Debug, Clone, PartialEq)]
pub struct SearchGrids {
    pub lr: Vec<f64>,
    pub lambda: Vec<f64>,
    pub lambda2: Vec<f64>,
    pub delta_triplet: Vec<f64>,
}

/// `10^lo, 10^(lo+0.5), …, 10^hi`
pub fn log_grid(lo: f64, hi: f64) -> Vec<f64> {
    let steps = ((hi - lo) / 0.5).round() as i32;
    (0..=steps).map(|i| 10f64.powf(lo + 0.5 * f64::from(i))).collect()
}

impl Default for SearchGrids {
    fn default() -> Self {
        SearchGrids {
            lr: vec![0.1, 0.01, 0.001, 0.0001],
            lambda: log_grid(-2.0, 1.5),
            lambda2: log_grid(-2.0, 1.5),
            delta_triplet: vec![0.0, 0.1, 1.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchEntry {
    pub stage: &'static str,
    pub candidate: f64,
    /// Best validation loss, or `None` when training diverged.
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub best: TrainConfig,
    pub log: Vec<SearchEntry>,
}

impl SearchOutcome {
    pub fn log_csv(&self) -> String {
        let mut out = String::from("stage,candidate,val_loss\n");
        for e in &self.log {
            let loss = e.val_loss.map(|v| v.to_string()).unwrap_or_else(|| "diverged".into());
            writeln!(out, "{},{},{}", e.stage, e.candidate, loss).unwrap();
        }
        out
    }
}

/// Staged search: learning rate with no regularization, then λ with
/// λ′ = 0, then λ′, then the triplet margin. Each stage keeps the candidate
/// with the lowest best-epoch validation loss, preferring the smaller value
/// on ties.
pub fn greedy_cv(
    s: &LabeledSet,
    tuples: &TupleBank,
    spec: &LayerSpec,
    base: &TrainConfig,
    grids: &SearchGrids,
) -> Result<SearchOutcome> {
    type Setter = fn(&mut TrainConfig, f64);
    let stages: [(&'static str, &[f64], Setter); 4] = [
        ("lr", &grids.lr, |c, v| c.lr = v),
        ("lambda", &grids.lambda, |c, v| c.lambda = v),
        ("lambda2", &grids.lambda2, |c, v| c.lambda2 = v),
        ("delta_triplet", &grids.delta_triplet, |c, v| c.margins.delta_triplet = v),
    ];
    if stages.iter().any(|(_, g, _)| g.is_empty()) {
        return Err(Error::Config("every search grid needs at least one candidate".into()));
    }
    let mut current = TrainConfig {
        lambda: 0.0,
        lambda2: 0.0,
        ..base.clone()
    };
    let mut log = Vec::new();
    for (stage, grid, set) in stages {
        let mut winner: Option<(f64, f64)> = None;
        for &candidate in grid {
            let mut cfg = current.clone();
            set(&mut cfg, candidate);
            let val_loss = match train(s, tuples, spec, &cfg) {
                Ok(out) => out.history.best().map(|r| r.val_loss),
                Err(Error::NonFinite { .. }) => None,
                Err(e) => return Err(e),
            };
            log.push(SearchEntry {
                stage,
                candidate,
                val_loss,
            });
            if let Some(loss) = val_loss {
                let better = match winner {
                    None => true,
                    Some((wl, wc)) => loss < wl || (loss == wl && candidate < wc),
                };
                if better {
                    winner = Some((loss, candidate));
                }
            }
        }
        let (_, chosen) = winner.ok_or(Error::Search { stage })?;
        set(&mut current, chosen);
    }
    Ok(SearchOutcome { best: current, log })
}
