//! Objective terms and their exact gradients.
//!
//! Feature-level losses take feature vectors and return gradients with
//! respect to each of them. [`total_objective`] composes them with the
//! network: every tuple member is a replica of the same feature map, so the
//! per-member feature gradients are backpropagated into one shared gradient
//! buffer.

use crate::error::{shape_check, Error, Result};
use crate::network::{backward_accumulate, forward, ClassifierWeights, Matrix, Model, Params};

/// A pair with its coherence label (`true` for temporal neighbours).
pub type Pair<'a> = (&'a [f64], &'a [f64], bool);
/// A triplet `(l, m, n)` with its coherence label.
pub type Triplet<'a> = (&'a [f64], &'a [f64], &'a [f64], bool);
/// A labeled example.
pub type Labeled<'a> = (&'a [f64], usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Metric {
    /// Euclidean distance (unsquared).
    #[default]
    L2,
    L1,
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l2" => Ok(Metric::L2),
            "l1" => Ok(Metric::L1),
            other => Err(Error::Config(format!("unknown metric `{other}`"))),
        }
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Metric::L2 => "l2",
            Metric::L1 => "l1",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Margins {
    pub delta_pair: f64,
    pub delta_triplet: f64,
    pub metric: Metric,
}

impl Default for Margins {
    fn default() -> Self {
        Margins {
            delta_pair: 1.0,
            delta_triplet: 1.0,
            metric: Metric::L2,
        }
    }
}

/// A loss value with gradients with respect to each input feature vector
/// (in input order) and, for the softmax loss, the classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub feature_grads: Vec<Vec<f64>>,
    pub classifier_grad: Option<Matrix>,
}

/// Distance and its gradient with respect to `a` (the gradient with respect
/// to `b` is the negation).
pub fn distance(a: &[f64], b: &[f64], metric: Metric) -> (f64, Vec<f64>) {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    match metric {
        Metric::L2 => {
            let d = diff.iter().map(|v| v * v).sum::<f64>().sqrt();
            if d == 0.0 {
                (0.0, vec![0.0; diff.len()])
            } else {
                let g = diff.iter().map(|v| v / d).collect();
                (d, g)
            }
        }
        Metric::L1 => {
            let d = diff.iter().map(|v| v.abs()).sum();
            let g = diff
                .iter()
                .map(|&v| if v > 0.0 { 1.0 } else if v < 0.0 { -1.0 } else { 0.0 })
                .collect();
            (d, g)
        }
    }
}

/// `p·d(a,b) + (1−p)·max(δ − d(a,b), 0)`.
pub fn contrastive(a: &[f64], b: &[f64], positive: bool, delta: f64, metric: Metric) -> Result<LossValue> {
    shape_check("contrastive operands", a.len(), b.len())?;
    let (d, grad_d) = distance(a, b, metric);
    let (value, sign) = if positive {
        (d, 1.0)
    } else if d < delta {
        (delta - d, -1.0)
    } else {
        (0.0, 0.0)
    };
    let ga: Vec<f64> = grad_d.iter().map(|g| sign * g).collect();
    let gb: Vec<f64> = ga.iter().map(|g| -g).collect();
    Ok(LossValue {
        value,
        feature_grads: vec![ga, gb],
        classifier_grad: None,
    })
}

fn scale_all(grads: &mut [Vec<f64>], s: f64) {
    for g in grads {
        g.iter_mut().for_each(|v| *v *= s);
    }
}

/// Mean negative log softmax probability of the correct class.
pub fn softmax_loss(w: &ClassifierWeights, zs: &[&[f64]], ys: &[usize]) -> Result<LossValue> {
    if zs.is_empty() {
        return Err(Error::Contract("softmax loss on an empty batch".into()));
    }
    shape_check("labels", zs.len(), ys.len())?;
    let c = w.num_classes();
    let inv_n = 1.0 / zs.len() as f64;
    let mut value = 0.0;
    let mut dw = Matrix::zeros(c, w.dim());
    let mut feature_grads = Vec::with_capacity(zs.len());
    for (&z, &y) in zs.iter().zip(ys) {
        shape_check("feature vector", w.dim(), z.len())?;
        if y >= c {
            return Err(Error::Contract(format!("label {y} out of range for {c} classes")));
        }
        let logits = w.matrix().mul_vec(z);
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        value += sum.ln() - (logits[y] - max);
        // ∂/∂logits = softmax − onehot
        let mut delta: Vec<f64> = exps.iter().map(|e| e / sum).collect();
        delta[y] -= 1.0;
        delta.iter_mut().for_each(|d| *d *= inv_n);
        dw.add_outer(1.0, &delta, z);
        feature_grads.push(w.matrix().tr_mul_vec(&delta));
    }
    Ok(LossValue {
        value: value * inv_n,
        feature_grads,
        classifier_grad: Some(dw),
    })
}

/// Mean contrastive loss over feature pairs (slowness). Gradients are
/// ordered `a₀, b₀, a₁, b₁, …`.
pub fn pair_loss(pairs: &[Pair<'_>], margins: &Margins) -> Result<LossValue> {
    if pairs.is_empty() {
        return Err(Error::Contract("pair loss on an empty batch".into()));
    }
    let mut value = 0.0;
    let mut feature_grads = Vec::with_capacity(2 * pairs.len());
    for &(a, b, p) in pairs {
        let l = contrastive(a, b, p, margins.delta_pair, margins.metric)?;
        value += l.value;
        feature_grads.extend(l.feature_grads);
    }
    let inv_n = 1.0 / pairs.len() as f64;
    scale_all(&mut feature_grads, inv_n);
    Ok(LossValue {
        value: value * inv_n,
        feature_grads,
        classifier_grad: None,
    })
}

/// Mean contrastive loss on the difference vectors `z_l − z_m` and
/// `z_m − z_n` (steadiness). Gradients are ordered `l₀, m₀, n₀, l₁, …`.
pub fn triplet_loss(triplets: &[Triplet<'_>], margins: &Margins) -> Result<LossValue> {
    if triplets.is_empty() {
        return Err(Error::Contract("triplet loss on an empty batch".into()));
    }
    let mut value = 0.0;
    let mut feature_grads = Vec::with_capacity(3 * triplets.len());
    for &(zl, zm, zn, p) in triplets {
        shape_check("triplet member", zl.len(), zm.len())?;
        shape_check("triplet member", zl.len(), zn.len())?;
        let u: Vec<f64> = zl.iter().zip(zm).map(|(a, b)| a - b).collect();
        let v: Vec<f64> = zm.iter().zip(zn).map(|(a, b)| a - b).collect();
        let l = contrastive(&u, &v, p, margins.delta_triplet, margins.metric)?;
        value += l.value;
        let (gu, gv) = (&l.feature_grads[0], &l.feature_grads[1]);
        feature_grads.push(gu.clone());
        feature_grads.push(gu.iter().zip(gv).map(|(a, b)| b - a).collect());
        feature_grads.push(gv.iter().map(|g| -g).collect());
    }
    let inv_n = 1.0 / triplets.len() as f64;
    scale_all(&mut feature_grads, inv_n);
    Ok(LossValue {
        value: value * inv_n,
        feature_grads,
        classifier_grad: None,
    })
}

/// `R2 + λ′·R3`; an empty side contributes zero. Gradients list the pair
/// members first, then the triplet members.
pub fn unsup_loss(
    pairs: &[Pair<'_>],
    triplets: &[Triplet<'_>],
    lambda2: f64,
    margins: &Margins,
) -> Result<LossValue> {
    if pairs.is_empty() && triplets.is_empty() {
        return Err(Error::Contract("unsupervised loss with no pairs or triplets".into()));
    }
    let mut out = LossValue {
        value: 0.0,
        feature_grads: Vec::new(),
        classifier_grad: None,
    };
    if !pairs.is_empty() {
        let r2 = pair_loss(pairs, margins)?;
        out.value += r2.value;
        out.feature_grads.extend(r2.feature_grads);
    }
    if !triplets.is_empty() {
        let mut r3 = triplet_loss(triplets, margins)?;
        out.value += lambda2 * r3.value;
        scale_all(&mut r3.feature_grads, lambda2);
        out.feature_grads.extend(r3.feature_grads);
    }
    Ok(out)
}

/// Value and parameter gradient of the joint objective, with the
/// individual term values for logging.
#[derive(Debug, Clone, PartialEq)]
pub struct Objective {
    pub value: f64,
    pub supervised: Option<f64>,
    pub slowness: Option<f64>,
    pub steadiness: Option<f64>,
    pub grad: Model,
}

/// Per-term values and unweighted gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct TermGradients {
    pub supervised: Option<(f64, Model)>,
    pub slowness: Option<(f64, Model)>,
    pub steadiness: Option<(f64, Model)>,
}

fn check_finite(term: &'static str, loss: &LossValue) -> Result<()> {
    let finite = loss.value.is_finite()
        && loss.feature_grads.iter().flatten().all(|v| v.is_finite())
        && loss
            .classifier_grad
            .as_ref()
            .is_none_or(|m| m.data().iter().all(|v| v.is_finite()));
    if finite {
        Ok(())
    } else {
        Err(Error::NonFinite { term })
    }
}

fn supervised_term(model: &Model, batch: &[Labeled<'_>], weight: f64, grad: &mut Model) -> Result<f64> {
    let mut tapes = Vec::with_capacity(batch.len());
    let mut zs = Vec::with_capacity(batch.len());
    for &(x, _) in batch {
        let (z, tape) = forward(&model.net, x)?;
        zs.push(z);
        tapes.push(tape);
    }
    let z_refs: Vec<&[f64]> = zs.iter().map(Vec::as_slice).collect();
    let ys: Vec<usize> = batch.iter().map(|&(_, y)| y).collect();
    let loss = softmax_loss(&model.classifier, &z_refs, &ys)?;
    check_finite("L_s", &loss)?;
    if weight != 0.0 {
        if let Some(dw) = &loss.classifier_grad {
            crate::network::axpy(grad.classifier.matrix_mut().data_mut(), weight, dw.data());
        }
        for (tape, dz) in tapes.iter().zip(&loss.feature_grads) {
            backward_accumulate(&model.net, tape, dz, weight, &mut grad.net)?;
        }
    }
    Ok(loss.value)
}

fn tuple_term<const K: usize>(
    term: &'static str,
    model: &Model,
    members: &[[&[f64]; K]],
    loss_fn: impl FnOnce(&[Vec<f64>]) -> Result<LossValue>,
    weight: f64,
    grad: &mut Model,
) -> Result<f64> {
    let mut tapes = Vec::with_capacity(K * members.len());
    let mut zs = Vec::with_capacity(K * members.len());
    for tuple in members {
        for x in tuple {
            let (z, tape) = forward(&model.net, x)?;
            zs.push(z);
            tapes.push(tape);
        }
    }
    let loss = loss_fn(&zs)?;
    check_finite(term, &loss)?;
    if weight != 0.0 {
        for (tape, dz) in tapes.iter().zip(&loss.feature_grads) {
            backward_accumulate(&model.net, tape, dz, weight, &mut grad.net)?;
        }
    }
    Ok(loss.value)
}

fn slowness_term(model: &Model, pairs: &[Pair<'_>], margins: &Margins, weight: f64, grad: &mut Model) -> Result<f64> {
    let members: Vec<[&[f64]; 2]> = pairs.iter().map(|&(a, b, _)| [a, b]).collect();
    tuple_term("R2", model, &members, |zs| {
        let feats: Vec<Pair<'_>> = pairs
            .iter()
            .enumerate()
            .map(|(i, &(_, _, p))| (zs[2 * i].as_slice(), zs[2 * i + 1].as_slice(), p))
            .collect();
        pair_loss(&feats, margins)
    }, weight, grad)
}

fn steadiness_term(
    model: &Model,
    triplets: &[Triplet<'_>],
    margins: &Margins,
    weight: f64,
    grad: &mut Model,
) -> Result<f64> {
    let members: Vec<[&[f64]; 3]> = triplets.iter().map(|&(a, b, c, _)| [a, b, c]).collect();
    tuple_term("R3", model, &members, |zs| {
        let feats: Vec<Triplet<'_>> = triplets
            .iter()
            .enumerate()
            .map(|(i, &(_, _, _, p))| {
                (zs[3 * i].as_slice(), zs[3 * i + 1].as_slice(), zs[3 * i + 2].as_slice(), p)
            })
            .collect();
        triplet_loss(&feats, margins)
    }, weight, grad)
}

/// `L_s + λ·(R2 + λ′·R3)` on image-level batches.
///
/// Gradients accumulate into one buffer in the fixed order L_s, R2, R3. An
/// empty batch skips its term; a zero weight still evaluates the term for
/// logging but skips its backward pass.
#[allow(clippy::too_many_arguments)]
pub fn total_objective(
    model: &Model,
    labeled: &[Labeled<'_>],
    pairs: &[Pair<'_>],
    triplets: &[Triplet<'_>],
    lambda: f64,
    lambda2: f64,
    margins: &Margins,
) -> Result<Objective> {
    if labeled.is_empty() && pairs.is_empty() && triplets.is_empty() {
        return Err(Error::Contract("objective on empty batches".into()));
    }
    let mut grad = model.zeros_like();
    let mut value = 0.0;
    let supervised = if labeled.is_empty() {
        None
    } else {
        Some(supervised_term(model, labeled, 1.0, &mut grad)?)
    };
    value += supervised.unwrap_or(0.0);
    let slowness = if pairs.is_empty() {
        None
    } else {
        Some(slowness_term(model, pairs, margins, lambda, &mut grad)?)
    };
    value += lambda * slowness.unwrap_or(0.0);
    let steadiness = if triplets.is_empty() {
        None
    } else {
        Some(steadiness_term(model, triplets, margins, lambda * lambda2, &mut grad)?)
    };
    value += lambda * lambda2 * steadiness.unwrap_or(0.0);
    if !value.is_finite() {
        return Err(Error::NonFinite { term: "objective" });
    }
    Ok(Objective {
        value,
        supervised,
        slowness,
        steadiness,
        grad,
    })
}

/// Each term's value and unweighted gradient, computed independently.
pub fn term_gradients(
    model: &Model,
    labeled: &[Labeled<'_>],
    pairs: &[Pair<'_>],
    triplets: &[Triplet<'_>],
    margins: &Margins,
) -> Result<TermGradients> {
    let run = |f: &dyn Fn(&mut Model) -> Result<f64>| -> Result<(f64, Model)> {
        let mut g = model.zeros_like();
        let v = f(&mut g)?;
        Ok((v, g))
    };
    Ok(TermGradients {
        supervised: (!labeled.is_empty())
            .then(|| run(&|g| supervised_term(model, labeled, 1.0, g)))
            .transpose()?,
        slowness: (!pairs.is_empty())
            .then(|| run(&|g| slowness_term(model, pairs, margins, 1.0, g)))
            .transpose()?,
        steadiness: (!triplets.is_empty())
            .then(|| run(&|g| steadiness_term(model, triplets, margins, 1.0, g)))
            .transpose()?,
    })
}
