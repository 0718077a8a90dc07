//! Canonical synthetic fixtures and the desk-scale comparison pipeline
//! shared by the command line and the acceptance suite.

use std::fmt;
use std::str::FromStr;

use crate::datamodel::{LabeledSet, UnlabeledSet};
use crate::error::{Error, Result};
use crate::eval::{build_pool, eta, knn_accuracy, linear_accuracy, sample_queries, seqcomp_ranks};
use crate::losses::Metric;
use crate::mining::{mine_pairs, mine_triplets, MiningConfig};
use crate::network::{LayerSpec, Model};
use crate::rng::derive_seed;
use crate::synth::{gen_labeled, gen_unlabeled, SynthConfig};
use crate::trainer::{train, train_unsupervised, TrainConfig, TupleBank};

/// Training variants compared in the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Untrained network at its initialization.
    Random,
    /// Supervised loss only.
    Unreg,
    /// Slowness under the L1 distance.
    Sfa1,
    /// Slowness under the L2 distance.
    Sfa2,
    /// Slowness plus steadiness.
    Ssfa,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Random, Method::Unreg, Method::Sfa1, Method::Sfa2, Method::Ssfa];

    pub fn name(self) -> &'static str {
        match self {
            Method::Random => "random",
            Method::Unreg => "unreg",
            Method::Sfa1 => "sfa1",
            Method::Sfa2 => "sfa2",
            Method::Ssfa => "ssfa",
        }
    }

    /// Applies the variant's regularization pattern to `cfg`, taking the
    /// nonzero weights from `lambda` and `lambda2`.
    pub fn apply(self, cfg: &mut TrainConfig, lambda: f64, lambda2: f64) {
        let (l, l2, metric) = match self {
            Method::Random | Method::Unreg => (0.0, 0.0, Metric::L2),
            Method::Sfa1 => (lambda, 0.0, Metric::L1),
            Method::Sfa2 => (lambda, 0.0, Metric::L2),
            Method::Ssfa => (lambda, lambda2, Metric::L2),
        };
        cfg.lambda = l;
        cfg.lambda2 = l2;
        cfg.margins.metric = metric;
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method `{s}` (expected random, unreg, sfa1, sfa2 or ssfa)")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub synth: SynthConfig,
    pub labeled_per_class: usize,
    pub test_per_class: usize,
    /// Held-out clips used for sequence-completion queries.
    pub query_clips: usize,
    pub num_queries: usize,
    pub pool_n: usize,
    pub hidden: usize,
    pub dim: usize,
    pub mining: MiningConfig,
    pub train: TrainConfig,
    pub sfa_lambda: f64,
    pub ssfa_lambda: f64,
    pub ssfa_lambda2: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            synth: SynthConfig::default(),
            labeled_per_class: 5,
            test_per_class: 25,
            query_clips: 20,
            num_queries: 200,
            pool_n: 5,
            hidden: 32,
            dim: 16,
            mining: MiningConfig::default(),
            train: TrainConfig {
                batch_labeled: 2,
                max_epochs: 500,
                patience: 500,
                ..TrainConfig::default()
            },
            sfa_lambda: 0.3,
            ssfa_lambda: 0.3,
            ssfa_lambda2: 1.0,
        }
    }
}

impl ExperimentConfig {
    pub fn spec(&self) -> LayerSpec {
        LayerSpec::one_hidden(self.synth.grid * self.synth.grid, self.hidden, self.dim)
    }

    pub fn weights(&self, method: Method) -> (f64, f64) {
        match method {
            Method::Ssfa => (self.ssfa_lambda, self.ssfa_lambda2),
            _ => (self.sfa_lambda, 0.0),
        }
    }
}

/// Datasets for one experiment seed. Every set comes from its own derived
/// generator stream.
#[derive(Debug, Clone)]
pub struct Fixtures {
    pub clips: UnlabeledSet,
    pub query_clips: UnlabeledSet,
    pub labeled: LabeledSet,
    pub test: LabeledSet,
}

impl Fixtures {
    pub fn generate(cfg: &ExperimentConfig, seed: u64) -> Result<Self> {
        let synth = |stream: u64, clips: usize| SynthConfig {
            seed: derive_seed(seed, stream),
            num_clips: clips,
            ..cfg.synth.clone()
        };
        Ok(Fixtures {
            clips: gen_unlabeled(&synth(0, cfg.synth.num_clips))?,
            query_clips: gen_unlabeled(&synth(1, cfg.query_clips))?,
            labeled: gen_labeled(&synth(2, 1), cfg.labeled_per_class)?,
            test: gen_labeled(&synth(3, 1), cfg.test_per_class)?,
        })
    }

    pub fn tuples(&self, mining: &MiningConfig) -> Result<TupleBank> {
        let pairs = mine_pairs(&self.clips, mining)?;
        let triplets = mine_triplets(&self.clips, mining)?;
        TupleBank::new(&self.clips, &pairs.samples, &triplets.samples)
    }
}

/// Scores of one trained model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scores {
    pub eta: f64,
    pub accuracy: f64,
}

pub fn train_method(fx: &Fixtures, tuples: &TupleBank, cfg: &ExperimentConfig, method: Method, seed: u64) -> Result<Model> {
    let spec = cfg.spec();
    let mut tc = TrainConfig { seed, ..cfg.train.clone() };
    let (l, l2) = cfg.weights(method);
    method.apply(&mut tc, l, l2);
    if method == Method::Random {
        return Ok(Model::init(&spec, fx.labeled.num_classes(), seed));
    }
    Ok(train(&fx.labeled, tuples, &spec, &tc)?.model)
}

pub fn score(fx: &Fixtures, model: &Model, cfg: &ExperimentConfig, seed: u64) -> Result<Scores> {
    let queries = sample_queries(&fx.query_clips, cfg.mining.t_seconds, cfg.num_queries, derive_seed(seed, 4))?;
    let pool = build_pool(&queries, &fx.query_clips, cfg.pool_n, derive_seed(seed, 5))?;
    let ranks = seqcomp_ranks(&model.net, &fx.query_clips, &queries, &pool)?;
    Ok(Scores {
        eta: eta(&ranks, pool.len())?,
        accuracy: linear_accuracy(model, &fx.test)?,
    })
}

/// Trains and scores every method in `methods` on the fixtures of `seed`.
pub fn compare(cfg: &ExperimentConfig, methods: &[Method], seed: u64) -> Result<Vec<(Method, Scores)>> {
    let fx = Fixtures::generate(cfg, seed)?;
    let tuples = fx.tuples(&MiningConfig { seed, ..cfg.mining.clone() })?;
    methods
        .iter()
        .map(|&m| {
            let model = train_method(&fx, &tuples, cfg, m, seed)?;
            Ok((m, score(&fx, &model, cfg, seed)?))
        })
        .collect()
}

/// Settings for the unsupervised-only trend experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct TrendConfig {
    pub experiment: ExperimentConfig,
    /// Cumulative optimizer steps at which kNN accuracy is recorded.
    pub stages: Vec<usize>,
    pub k: usize,
}

impl Default for TrendConfig {
    fn default() -> Self {
        TrendConfig {
            experiment: ExperimentConfig {
                labeled_per_class: 25,
                test_per_class: 50,
                ..ExperimentConfig::default()
            },
            stages: vec![100, 200, 300],
            k: 5,
        }
    }
}

/// kNN accuracy of the test set against the labeled set at initialization
/// and after every stage of training on the unsupervised term alone.
pub fn unsupervised_trend(cfg: &TrendConfig, seed: u64) -> Result<Vec<f64>> {
    let ex = &cfg.experiment;
    let fx = Fixtures::generate(ex, seed)?;
    let tuples = fx.tuples(&MiningConfig { seed, ..ex.mining.clone() })?;
    let mut tc = TrainConfig { seed, ..ex.train.clone() };
    Method::Ssfa.apply(&mut tc, ex.ssfa_lambda, ex.ssfa_lambda2);
    let snapshots = train_unsupervised(&tuples, &ex.spec(), &tc, &cfg.stages)?;
    snapshots
        .iter()
        .map(|net| knn_accuracy(net, &fx.labeled, &fx.test, cfg.k, false))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("sfa3".parse::<Method>().is_err());
    }

    #[test]
    fn presets() {
        let mut cfg = TrainConfig::default();
        Method::Sfa1.apply(&mut cfg, 0.3, 1.0);
        assert_eq!((cfg.lambda, cfg.lambda2, cfg.margins.metric), (0.3, 0.0, Metric::L1));
        Method::Ssfa.apply(&mut cfg, 0.1, 0.3);
        assert_eq!((cfg.lambda, cfg.lambda2, cfg.margins.metric), (0.1, 0.3, Metric::L2));
        Method::Unreg.apply(&mut cfg, 0.1, 0.3);
        assert_eq!((cfg.lambda, cfg.lambda2), (0.0, 0.0));
    }

    #[test]
    fn fixtures_are_disjoint_streams() {
        let cfg = ExperimentConfig {
            synth: SynthConfig { num_clips: 4, ..SynthConfig::default() },
            query_clips: 2,
            ..ExperimentConfig::default()
        };
        let fx = Fixtures::generate(&cfg, 3).unwrap();
        assert_eq!(fx.labeled.len(), 20);
        assert_eq!(fx.test.len(), 100);
        assert_ne!(fx.clips.clips()[0].frames()[0], fx.query_clips.clips()[0].frames()[0]);
    }
}
