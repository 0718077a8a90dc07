use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ssfa::datamodel::{load_labeled, load_unlabeled, save_labeled, save_unlabeled};
use ssfa::eval::{build_pool, eta, knn_accuracy, linear_accuracy, sample_queries, seqcomp_ranks, EvalReport};
use ssfa::experiment::{ExperimentConfig, Fixtures, Method};
use ssfa::gradcheck::{self, GradCheckConfig, Term};
use ssfa::losses::{Margins, Metric};
use ssfa::mining::{mine_pairs, mine_triplets, MiningConfig, TupleFile};
use ssfa::network::{load_checkpoint, save_checkpoint, LayerSpec};
use ssfa::synth::{compass_velocities, gen_labeled, gen_unlabeled, MotionMode, SynthConfig};
use ssfa::trainer::{greedy_cv, train, SearchGrids, TrainConfig, TupleBank};
use ssfa::{Error, Result};

use crate::args::*;

fn prepare_out(dir: &Path, echo: &str) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write(&dir.join("effective_config.txt"), echo)
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn config_map(echo: &str) -> BTreeMap<String, String> {
    echo.lines()
        .filter_map(|l| l.split_once(" = "))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

pub fn synth(a: &SynthArgs, echo: &str) -> Result<()> {
    prepare_out(&a.out, echo)?;
    let cfg = SynthConfig {
        grid: a.grid,
        clip_len: a.clip_len,
        num_clips: a.clips,
        velocity_set: compass_velocities().into_iter().map(|(x, y)| (x * a.speed, y * a.speed)).collect(),
        motion: match a.mode {
            Mode::Steady => MotionMode::Steady,
            Mode::Jerky => MotionMode::Jerky,
        },
        noise_sigma: a.noise,
        seed: a.seed,
        ..SynthConfig::default()
    };
    let clips = save_unlabeled(&gen_unlabeled(&cfg)?, &a.out, "clips")?;
    println!("wrote {} clips to {}", a.clips, clips.display());
    if a.per_class > 0 {
        let labeled = gen_labeled(&cfg, a.per_class)?;
        let path = save_labeled(&labeled, &a.out, "labeled")?;
        println!("wrote {} labeled images to {}", labeled.len(), path.display());
    }
    Ok(())
}

pub fn fixtures(a: &FixturesArgs, echo: &str) -> Result<()> {
    prepare_out(&a.out, echo)?;
    let fx = Fixtures::generate(&ExperimentConfig::default(), a.seed)?;
    for path in [
        save_unlabeled(&fx.clips, &a.out, "clips")?,
        save_unlabeled(&fx.query_clips, &a.out, "query_clips")?,
        save_labeled(&fx.labeled, &a.out, "labeled")?,
        save_labeled(&fx.test, &a.out, "test")?,
    ] {
        println!("wrote {}", path.display());
    }
    Ok(())
}

pub fn mine(a: &MineArgs, echo: &str) -> Result<()> {
    prepare_out(&a.out, echo)?;
    let u = load_unlabeled(&a.clips)?;
    let cfg = MiningConfig {
        t_seconds: a.t,
        pair_neg_ratio: a.pair_neg_ratio,
        triplet_neg_ratio: a.triplet_neg_ratio,
        max_pairs: a.max_pairs,
        max_triplets: a.max_triplets,
        seed: a.seed,
    };
    let pairs = mine_pairs(&u, &cfg)?;
    let triplets = mine_triplets(&u, &cfg)?;
    println!(
        "pairs: {} positive, {} negative (ratio 1:{:.3}); triplets: {} positive, {} negative (ratio 1:{:.3})",
        pairs.positives,
        pairs.negatives,
        pairs.achieved_ratio(),
        triplets.positives,
        triplets.negatives,
        triplets.achieved_ratio()
    );
    if pairs.skipped_clips + triplets.skipped_clips > 0 {
        println!(
            "clips too short for the window: {} for pairs, {} for triplets",
            pairs.skipped_clips, triplets.skipped_clips
        );
    }
    let file = TupleFile {
        config: Some(cfg),
        pairs: pairs.samples,
        triplets: triplets.samples,
    };
    file.save(a.out.join("tuples.txt"))
}

fn preset(m: MethodArg) -> Method {
    match m {
        MethodArg::Unreg => Method::Unreg,
        MethodArg::Sfa1 => Method::Sfa1,
        MethodArg::Sfa2 => Method::Sfa2,
        MethodArg::Ssfa => Method::Ssfa,
    }
}

pub fn train_cmd(a: &TrainArgs, echo: &str) -> Result<()> {
    let method = preset(a.method);
    let labeled = load_labeled(&a.labeled)?;
    let tuples = match (method, &a.clips, &a.tuples) {
        (Method::Unreg, _, _) => TupleBank::empty(),
        (_, Some(clips), Some(tuples)) => {
            let u = load_unlabeled(clips)?;
            let file = TupleFile::load(tuples)?;
            TupleBank::new(&u, &file.pairs, &file.triplets)?
        }
        _ => {
            return Err(Error::Config(format!(
                "--method {} needs --clips and --tuples",
                method.name()
            )))
        }
    };
    prepare_out(&a.out, echo)?;
    let input = labeled.images()[0].len();
    let spec = LayerSpec::new(vec![input, a.hidden, a.dim])?;
    let mut cfg = TrainConfig {
        lr: a.lr,
        momentum: a.momentum,
        margins: Margins {
            delta_pair: a.delta_pair,
            delta_triplet: a.delta_triplet,
            metric: Metric::L2,
        },
        batch_labeled: a.batch_labeled,
        batch_pairs: a.batch_pairs,
        batch_triplets: a.batch_triplets,
        max_epochs: a.epochs,
        patience: a.patience,
        seed: a.seed,
        val_fraction: a.val_fraction,
        ..TrainConfig::default()
    };
    method.apply(&mut cfg, a.lambda, a.lambda2);
    if a.cv {
        let mut grids = SearchGrids::default();
        if cfg.lambda == 0.0 {
            grids.lambda = vec![0.0];
        }
        if cfg.lambda2 == 0.0 {
            grids.lambda2 = vec![0.0];
            grids.delta_triplet = vec![cfg.margins.delta_triplet];
        }
        let search = greedy_cv(&labeled, &tuples, &spec, &cfg, &grids)?;
        write(&a.out.join("search_log.csv"), &search.log_csv())?;
        cfg = search.best;
        println!(
            "search chose lr={} lambda={} lambda2={} delta_triplet={}",
            cfg.lr, cfg.lambda, cfg.lambda2, cfg.margins.delta_triplet
        );
    }
    let outcome = train(&labeled, &tuples, &spec, &cfg)?;
    save_checkpoint(&outcome.model, a.out.join("model.ckpt"))?;
    write(&a.out.join("history.csv"), &outcome.history.to_csv())?;
    let best = outcome.history.best().expect("at least one epoch");
    println!(
        "{} epochs, best epoch {} with validation loss {:.6} and accuracy {:.3}",
        outcome.history.epochs.len(),
        outcome.best_epoch,
        best.val_loss,
        best.val_acc
    );
    Ok(())
}

pub fn eval_seqcomp(a: &SeqcompArgs, echo: &str) -> Result<()> {
    let model = load_checkpoint(&a.checkpoint)?;
    let u = load_unlabeled(&a.clips)?;
    prepare_out(&a.out, echo)?;
    let queries = sample_queries(&u, a.t, a.queries, a.seed)?;
    let pool = build_pool(&queries, &u, a.pool_n, a.seed)?;
    let ranks = seqcomp_ranks(&model.net, &u, &queries, &pool)?;
    let report = EvalReport {
        eta: Some(eta(&ranks, pool.len())?),
        ranks,
        pool_size: Some(pool.len()),
        accuracy: None,
        config: config_map(echo),
    };
    report.save_json(&a.out.join("seqcomp.json"))?;
    write(&a.out.join("ranks.csv"), &report.ranks_csv(&queries))?;
    println!("eta = {:.4} over {} queries, pool of {}", report.eta.unwrap(), queries.len(), pool.len());
    Ok(())
}

pub fn eval_cls(a: &ClsArgs, echo: &str) -> Result<()> {
    let model = load_checkpoint(&a.checkpoint)?;
    let test = load_labeled(&a.test)?;
    prepare_out(&a.out, echo)?;
    let acc = linear_accuracy(&model, &test)?;
    let report = EvalReport {
        accuracy: Some(acc),
        config: config_map(echo),
        ..EvalReport::default()
    };
    report.save_json(&a.out.join("cls.json"))?;
    println!("accuracy = {acc:.4} over {} images", test.len());
    Ok(())
}

pub fn eval_knn(a: &KnnArgs, echo: &str) -> Result<()> {
    let model = load_checkpoint(&a.checkpoint)?;
    let train = load_labeled(&a.train)?;
    let test = load_labeled(&a.test)?;
    prepare_out(&a.out, echo)?;
    let acc = knn_accuracy(&model.net, &train, &test, a.k, a.exclude_self)?;
    let report = EvalReport {
        accuracy: Some(acc),
        config: config_map(echo),
        ..EvalReport::default()
    };
    report.save_json(&a.out.join("knn.json"))?;
    println!("{}-NN accuracy = {acc:.4} over {} images", a.k, test.len());
    Ok(())
}

/// Returns whether every term passed.
pub fn gradcheck(a: &GradcheckArgs, echo: &str) -> Result<bool> {
    let cfg = GradCheckConfig {
        points: a.points,
        step: a.step,
        tolerance: a.tolerance,
        seed: a.seed,
        metric: match a.metric {
            MetricArg::L2 => Metric::L2,
            MetricArg::L1 => Metric::L1,
        },
        inject_sign_flip: a.inject_sign_flip.map(|t| match t {
            TermArg::Softmax => Term::Softmax,
            TermArg::Slowness => Term::Slowness,
            TermArg::Steadiness => Term::Steadiness,
            TermArg::Total => Term::Total,
        }),
    };
    let report = gradcheck::run(&cfg)?;
    let mut text = String::new();
    for t in &report.terms {
        writeln!(
            text,
            "{:<16} points={} redrawn={} max_rel_error={:.3e} {}",
            t.term.name(),
            t.points,
            t.redrawn,
            t.max_rel_error,
            if t.passed { "PASS" } else { "FAIL" }
        )
        .unwrap();
    }
    print!("{text}");
    if let Some(out) = &a.out {
        prepare_out(out, echo)?;
        write(&out.join("gradcheck.txt"), &text)?;
    }
    Ok(report.passed())
}
