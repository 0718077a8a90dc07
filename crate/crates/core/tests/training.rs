use ssfa::datamodel::LabeledSet;
use ssfa::gradcheck::{self, GradCheckConfig};
use ssfa::losses::{term_gradients, total_objective, Margins, Metric};
use ssfa::mining::{mine_pairs, mine_triplets, MiningConfig};
use ssfa::network::{LayerSpec, Model, Params};
use ssfa::synth::{gen_labeled, gen_unlabeled, SynthConfig};
use ssfa::trainer::{greedy_cv, nesterov_step, train, SearchGrids, TrainConfig, TupleBank};

/// The same method written in the form `θ' = θ − lr·g`, `θ ← θ' + μ·(θ' − θ'_prev)`
/// where gradients are taken at the iterate itself.
fn rewritten(theta0: &[f64], grad: impl Fn(&[f64]) -> Vec<f64>, lr: f64, mu: f64, steps: usize) -> Vec<f64> {
    // φ tracks θ + μv, the point where the lookahead gradient is taken
    let mut phi = theta0.to_vec();
    let mut prev = theta0.to_vec();
    for _ in 0..steps {
        let g = grad(&phi);
        let next: Vec<f64> = phi.iter().zip(&g).map(|(p, g)| p - lr * g).collect();
        phi = next.iter().zip(&prev).map(|(n, p)| n + mu * (n - p)).collect();
        prev = next;
    }
    prev
}

#[test]
fn lookahead_matches_rewritten_form() {
    // a smooth non-quadratic objective
    let grad = |x: &[f64]| -> Vec<f64> { x.iter().enumerate().map(|(i, v)| (i as f64 + 1.0) * v + v.sin()).collect() };
    let start = vec![1.0, -0.5, 2.0, 0.25];
    let mut theta = start.clone();
    let mut v = vec![0.0; 4];
    for _ in 0..100 {
        nesterov_step(&mut theta, &mut v, |p| Ok(grad(p)), 0.05, 0.9).unwrap();
    }
    let other = rewritten(&start, grad, 0.05, 0.9, 100);
    for (a, b) in theta.iter().zip(&other) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
}

fn small_world(seed: u64) -> (LabeledSet, TupleBank, LayerSpec) {
    let synth = SynthConfig { grid: 8, num_clips: 6, clip_len: 12, seed, ..SynthConfig::default() };
    let u = gen_unlabeled(&synth).unwrap();
    let s = gen_labeled(&synth, 5).unwrap();
    let mining = MiningConfig { max_pairs: 200, max_triplets: 200, seed, ..MiningConfig::default() };
    let pairs = mine_pairs(&u, &mining).unwrap();
    let triplets = mine_triplets(&u, &mining).unwrap();
    let bank = TupleBank::new(&u, &pairs.samples, &triplets.samples).unwrap();
    (s, bank, LayerSpec::one_hidden(64, 10, 6))
}

#[test]
fn objective_gradient_is_linear_in_the_terms() {
    let (s, bank, spec) = small_world(1);
    let model = Model::init(&spec, 4, 3);
    let inputs: Vec<Vec<f64>> = s.images().iter().map(|f| ssfa::datamodel::standardize(f.pixels())).collect();
    let labeled: Vec<(&[f64], usize)> = inputs.iter().zip(s.labels()).map(|(x, &y)| (x.as_slice(), y)).collect();
    let pairs: Vec<_> = (0..20).map(|i| bank.pair(i * 7 % bank.num_pairs())).collect();
    let triplets: Vec<_> = (0..20).map(|i| bank.triplet(i * 5 % bank.num_triplets())).collect();
    let margins = Margins { delta_triplet: 0.1, ..Margins::default() };
    let (lambda, lambda2) = (0.3, 3.0);
    let total = total_objective(&model, &labeled, &pairs, &triplets, lambda, lambda2, &margins).unwrap();
    let terms = term_gradients(&model, &labeled, &pairs, &triplets, &margins).unwrap();
    let (ls, g_s) = terms.supervised.unwrap();
    let (r2, g_2) = terms.slowness.unwrap();
    let (r3, g_3) = terms.steadiness.unwrap();
    let mut combined = g_s.clone();
    combined.add_scaled(lambda, &g_2);
    combined.add_scaled(lambda * lambda2, &g_3);
    assert!(combined.max_abs_diff(&total.grad) < 1e-12);
    assert!((total.value - (ls + lambda * (r2 + lambda2 * r3))).abs() < 1e-12);
}

#[test]
fn same_seed_same_history() {
    let (s, bank, spec) = small_world(2);
    let cfg = TrainConfig { lambda: 0.3, lambda2: 1.0, max_epochs: 15, batch_labeled: 4, seed: 9, ..TrainConfig::default() };
    let a = train(&s, &bank, &spec, &cfg).unwrap();
    let b = train(&s, &bank, &spec, &cfg).unwrap();
    assert_eq!(a.history, b.history);
    assert_eq!(a.model, b.model);
    assert_eq!(a.history.to_csv(), b.history.to_csv());
    assert!(a.history.epochs.iter().all(|r| r.supervised.is_finite() && r.slowness.unwrap().is_finite()));
}

#[test]
fn early_stopping_returns_best_epoch() {
    let (s, bank, spec) = small_world(3);
    let cfg = TrainConfig { lr: 0.1, max_epochs: 60, patience: 5, batch_labeled: 4, ..TrainConfig::default() };
    let out = train(&s, &bank, &spec, &cfg).unwrap();
    let best = out.history.best().unwrap();
    assert_eq!(best.epoch, out.best_epoch);
    assert!(out.history.epochs.len() <= out.best_epoch + cfg.patience);
}

#[test]
fn regularized_training_needs_tuples() {
    let (s, _, spec) = small_world(4);
    let cfg = TrainConfig { lambda: 1.0, ..TrainConfig::default() };
    assert!(matches!(train(&s, &TupleBank::empty(), &spec, &cfg), Err(ssfa::Error::Config(_))));
    let unreg = TrainConfig { max_epochs: 2, ..TrainConfig::default() };
    assert!(train(&s, &TupleBank::empty(), &spec, &unreg).is_ok());
}

#[test]
fn single_image_classes_have_no_validation_split() {
    let (s, bank, spec) = small_world(5);
    let one_each = s.select(&[0, 5, 10, 15]);
    assert!(matches!(
        train(&one_each, &bank, &spec, &TrainConfig::default()),
        Err(ssfa::Error::Config(_))
    ));
}

#[test]
fn greedy_search_logs_every_stage() {
    let (s, bank, spec) = small_world(6);
    let base = TrainConfig { max_epochs: 4, batch_labeled: 8, ..TrainConfig::default() };
    let grids = SearchGrids {
        lr: vec![0.1, 0.01],
        lambda: vec![0.1, 1.0],
        lambda2: vec![0.3],
        delta_triplet: vec![0.0, 0.1, 1.0],
    };
    let out = greedy_cv(&s, &bank, &spec, &base, &grids).unwrap();
    let stages: Vec<&str> = out.log.iter().map(|e| e.stage).collect();
    assert_eq!(stages, ["lr", "lr", "lambda", "lambda", "lambda2", "delta_triplet", "delta_triplet", "delta_triplet"]);
    assert!(grids.lr.contains(&out.best.lr));
    assert_eq!(out.best.lambda2, 0.3);
    assert!(out.log_csv().starts_with("stage,candidate,val_loss\nlr,0.1,"));
}

#[test]
fn search_fails_when_a_stage_always_diverges() {
    let (s, bank, spec) = small_world(7);
    let base = TrainConfig { max_epochs: 30, batch_labeled: 4, ..TrainConfig::default() };
    let grids = SearchGrids { lr: vec![1e6], ..SearchGrids::default() };
    assert!(matches!(
        greedy_cv(&s, &bank, &spec, &base, &grids),
        Err(ssfa::Error::Search { stage: "lr" })
    ));
}

#[test]
fn finite_difference_suite_passes() {
    for metric in [Metric::L2, Metric::L1] {
        let report = gradcheck::run(&GradCheckConfig { metric, ..GradCheckConfig::default() }).unwrap();
        for t in &report.terms {
            assert!(t.points >= 100 && t.passed, "{}: {:e}", t.term.name(), t.max_rel_error);
        }
    }
}
