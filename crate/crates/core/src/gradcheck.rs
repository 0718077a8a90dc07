//! Finite-difference verification of every analytic gradient.
//!
//! Each check draws a random one-hidden-layer network and random batches,
//! evaluates a loss term composed through the network, and compares its
//! analytic parameter gradient against central differences. Points whose
//! numeric derivative is ill-defined (a hinge within `1e-3` of its margin,
//! a coincident positive pair, a ReLU pre-activation within `1e-4` of zero)
//! are redrawn.

use rand::Rng as _;

use crate::error::Result;
use crate::losses::{self, distance, Labeled, Margins, Metric, Pair, Triplet};
use crate::network::{forward, LayerSpec, Model, Params};
use crate::rng::{derive_seed, seeded, Rng};

/// Central-difference gradient of `f` at `x`.
pub fn numeric_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = f(&probe);
            probe[i] = orig - h;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `max_i |a_i − n_i| / max(1, |n_i|)`
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / n.abs().max(1.0))
        .fold(0.0, f64::max)
}

/// Overwrites a parameter set's values from a flat vector.
pub fn set_flat<P: Params>(p: &mut P, flat: &[f64]) {
    let mut it = flat.iter();
    for buf in p.buffers_mut() {
        for v in buf.iter_mut() {
            *v = *it.next().expect("flat vector too short");
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Term {
    Softmax,
    Slowness,
    Steadiness,
    Total,
}

impl Term {
    pub const ALL: [Term; 4] = [Term::Softmax, Term::Slowness, Term::Steadiness, Term::Total];

    pub fn name(self) -> &'static str {
        match self {
            Term::Softmax => "softmax L_s",
            Term::Slowness => "slowness R2",
            Term::Steadiness => "steadiness R3",
            Term::Total => "total objective",
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckConfig {
    pub points: usize,
    pub step: f64,
    pub tolerance: f64,
    pub seed: u64,
    pub metric: Metric,
    /// Negates the analytic gradient of this term before comparing, to
    /// confirm the checker notices a wrong gradient.
    pub inject_sign_flip: Option<Term>,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            points: 100,
            step: 1e-5,
            tolerance: 1e-4,
            seed: 0,
            metric: Metric::L2,
            inject_sign_flip: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TermReport {
    pub term: Term,
    pub points: usize,
    /// Points redrawn because they sat on a non-differentiable boundary.
    pub redrawn: usize,
    pub max_rel_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub terms: Vec<TermReport>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.terms.iter().all(|t| t.passed)
    }
}

struct Fixture {
    model: Model,
    labeled: Vec<(Vec<f64>, usize)>,
    pairs: Vec<(Vec<f64>, Vec<f64>, bool)>,
    triplets: Vec<(Vec<f64>, Vec<f64>, Vec<f64>, bool)>,
    lambda: f64,
    lambda2: f64,
    margins: Margins,
}

const INPUT: usize = 6;
const HIDDEN: usize = 5;
const FEATURES: usize = 4;
const CLASSES: usize = 3;

fn random_input(rng: &mut Rng) -> Vec<f64> {
    (0..INPUT).map(|_| rng.random_range(-1.5..1.5)).collect()
}

impl Fixture {
    fn draw(rng: &mut Rng, metric: Metric) -> Self {
        let spec = LayerSpec::one_hidden(INPUT, HIDDEN, FEATURES);
        let mut model = Model::init(&spec, CLASSES, rng.random());
        for layer in model.net.layers_mut() {
            layer.bias.iter_mut().for_each(|b| *b = rng.random_range(-0.3..0.3));
        }
        let labeled = (0..4)
            .map(|_| (random_input(rng), rng.random_range(0..CLASSES)))
            .collect();
        let pairs = (0..4)
            .map(|_| (random_input(rng), random_input(rng), rng.random_bool(0.5)))
            .collect();
        let triplets = (0..4)
            .map(|_| {
                (
                    random_input(rng),
                    random_input(rng),
                    random_input(rng),
                    rng.random_bool(0.5),
                )
            })
            .collect();
        Fixture {
            model,
            labeled,
            pairs,
            triplets,
            lambda: rng.random_range(0.1..3.0),
            lambda2: rng.random_range(0.1..3.0),
            margins: Margins {
                delta_pair: 1.0,
                delta_triplet: rng.random_range(0.1..1.5),
                metric,
            },
        }
    }

    fn batches(&self) -> (Vec<Labeled<'_>>, Vec<Pair<'_>>, Vec<Triplet<'_>>) {
        (
            self.labeled.iter().map(|(x, y)| (x.as_slice(), *y)).collect(),
            self.pairs.iter().map(|(a, b, p)| (a.as_slice(), b.as_slice(), *p)).collect(),
            self.triplets
                .iter()
                .map(|(a, b, c, p)| (a.as_slice(), b.as_slice(), c.as_slice(), *p))
                .collect(),
        )
    }

    fn inputs(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.labeled
            .iter()
            .map(|(x, _)| x)
            .chain(self.pairs.iter().flat_map(|(a, b, _)| [a, b]))
            .chain(self.triplets.iter().flat_map(|(a, b, c, _)| [a, b, c]))
    }

    /// Whether finite differences are trustworthy at this point.
    fn is_smooth(&self) -> bool {
        let z = |x: &[f64]| forward(&self.model.net, x).map(|(z, t)| (z, t.pre));
        for x in self.inputs() {
            let (_, pre) = z(x).unwrap();
            if pre[0].iter().any(|a| a.abs() < 1e-4) {
                return false;
            }
        }
        let margins = self.margins;
        let kink_free = |a: &[f64], b: &[f64], positive: bool, delta: f64| {
            let (d, _) = distance(a, b, margins.metric);
            let smooth_distance = match margins.metric {
                Metric::L2 => d > 1e-3,
                // L1 kinks wherever a coordinate difference crosses zero
                Metric::L1 => a.iter().zip(b).all(|(x, y)| (x - y).abs() > 1e-3),
            };
            if positive {
                smooth_distance
            } else {
                // beyond the margin the loss is flat, so only the hinge matters
                (d - delta).abs() > 1e-3 && (d > delta || smooth_distance)
            }
        };
        for (a, b, p) in &self.pairs {
            if !kink_free(&z(a).unwrap().0, &z(b).unwrap().0, *p, margins.delta_pair) {
                return false;
            }
        }
        for (l, m, n, p) in &self.triplets {
            let (zl, zm, zn) = (z(l).unwrap().0, z(m).unwrap().0, z(n).unwrap().0);
            let u: Vec<f64> = zl.iter().zip(&zm).map(|(a, b)| a - b).collect();
            let v: Vec<f64> = zm.iter().zip(&zn).map(|(a, b)| a - b).collect();
            if !kink_free(&u, &v, *p, margins.delta_triplet) {
                return false;
            }
        }
        true
    }

    fn evaluate(&self, term: Term, model: &Model) -> Result<(f64, Model)> {
        let (labeled, pairs, triplets) = self.batches();
        let (l, p, t, lambda, lambda2): (&[Labeled<'_>], &[Pair<'_>], &[Triplet<'_>], f64, f64) =
            match term {
                Term::Softmax => (&labeled, &[], &[], 0.0, 0.0),
                Term::Slowness => (&[], &pairs, &[], 1.0, 0.0),
                Term::Steadiness => (&[], &[], &triplets, 1.0, 1.0),
                Term::Total => (&labeled, &pairs, &triplets, self.lambda, self.lambda2),
            };
        let obj = losses::total_objective(model, l, p, t, lambda, lambda2, &self.margins)?;
        Ok((obj.value, obj.grad))
    }
}

fn check_term(term: Term, cfg: &GradCheckConfig) -> Result<TermReport> {
    let mut rng = seeded(derive_seed(cfg.seed, term as u64));
    let mut max_err: f64 = 0.0;
    let mut redrawn = 0;
    let mut done = 0;
    while done < cfg.points {
        let fx = Fixture::draw(&mut rng, cfg.metric);
        if !fx.is_smooth() {
            redrawn += 1;
            continue;
        }
        let (_, grad) = fx.evaluate(term, &fx.model)?;
        let mut analytic = grad.to_flat();
        if cfg.inject_sign_flip == Some(term) {
            analytic.iter_mut().for_each(|g| *g = -*g);
        }
        let theta = fx.model.to_flat();
        let numeric = numeric_gradient(
            |flat| {
                let mut m = fx.model.clone();
                set_flat(&mut m, flat);
                fx.evaluate(term, &m).map(|(v, _)| v).unwrap_or(f64::NAN)
            },
            &theta,
            cfg.step,
        );
        max_err = max_err.max(max_relative_error(&analytic, &numeric));
        done += 1;
    }
    Ok(TermReport {
        term,
        points: done,
        redrawn,
        max_rel_error: max_err,
        passed: max_err <= cfg.tolerance,
    })
}

/// Runs the finite-difference check for every loss term.
pub fn run(cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    let terms = Term::ALL
        .iter()
        .map(|&t| check_term(t, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(GradCheckReport { terms })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numeric_gradient_of_quadratic() {
        let g = numeric_gradient(|x| x[0] * x[0] + 3.0 * x[1], &[2.0, -1.0], 1e-5);
        assert!((g[0] - 4.0).abs() < 1e-8);
        assert!((g[1] - 3.0).abs() < 1e-8);
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(max_relative_error(&[1.0, 10.5], &[0.5, 10.0]), 0.5);
    }

    #[test]
    fn small_suite_passes() {
        let cfg = GradCheckConfig {
            points: 10,
            ..GradCheckConfig::default()
        };
        let report = run(&cfg).unwrap();
        assert!(report.passed(), "{report:?}");
        let l1 = run(&GradCheckConfig {
            metric: Metric::L1,
            ..cfg
        })
        .unwrap();
        assert!(l1.passed(), "{l1:?}");
    }

    #[test]
    fn sign_flip_is_caught() {
        let cfg = GradCheckConfig {
            points: 3,
            inject_sign_flip: Some(Term::Steadiness),
            ..GradCheckConfig::default()
        };
        let report = run(&cfg).unwrap();
        assert!(!report.passed());
        let failing: Vec<Term> = report.terms.iter().filter(|t| !t.passed).map(|t| t.term).collect();
        assert_eq!(failing, vec![Term::Steadiness]);
    }
}
