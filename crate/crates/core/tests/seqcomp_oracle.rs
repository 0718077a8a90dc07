use rand::{Rng as _, SeedableRng};
use rand_distr::StandardNormal;
use rand_xoshiro::Xoshiro256PlusPlus;
use ssfa::eval::{eta, extrapolate, rank_of};

fn random_vec(rng: &mut Xoshiro256PlusPlus, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample(StandardNormal)).collect()
}

fn brute_rank(target: &[f64], cands: &[Vec<f64>], truth: usize) -> usize {
    let mut order: Vec<(f64, usize)> = cands
        .iter()
        .enumerate()
        .map(|(i, c)| (c.iter().zip(target).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt(), i))
        .collect();
    order.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    order.iter().position(|&(_, i)| i == truth).unwrap() + 1
}

#[test]
fn rank_matches_sorted_distances() {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(11);
    for _ in 0..100 {
        let d = rng.random_range(1..8);
        let n = rng.random_range(2..60);
        let cands: Vec<Vec<f64>> = (0..n).map(|_| random_vec(&mut rng, d)).collect();
        let z1 = random_vec(&mut rng, d);
        let z2 = random_vec(&mut rng, d);
        let target = extrapolate(&z1, &z2).unwrap();
        let truth = rng.random_range(0..n);
        assert_eq!(rank_of(&target, &cands, truth).unwrap(), brute_rank(&target, &cands, truth));
    }
}

#[test]
fn collinear_truth_ranks_first() {
    let z1 = [0.0, 1.0];
    let z2 = [1.0, 2.0];
    let cands = vec![vec![5.0, 5.0], vec![2.0, 3.0], vec![1.0, 2.0], vec![0.0, 1.0]];
    assert_eq!(rank_of(&extrapolate(&z1, &z2).unwrap(), &cands, 1).unwrap(), 1);
}

#[test]
fn null_model_sits_at_fifty() {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(5);
    let pool = 50;
    let ranks: Vec<usize> = (0..2000)
        .map(|_| {
            let cands: Vec<Vec<f64>> = (0..pool).map(|_| random_vec(&mut rng, 8)).collect();
            let target = random_vec(&mut rng, 8);
            rank_of(&target, &cands, rng.random_range(0..pool)).unwrap()
        })
        .collect();
    let e = eta(&ranks, pool).unwrap();
    assert!((e - 50.0).abs() < 5.0, "η = {e}");
}

#[test]
fn eta_is_rotation_invariant() {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(9);
    let (c, s) = (0.6f64, 0.8f64);
    let rot = |v: &[f64]| vec![c * v[0] - s * v[1], s * v[0] + c * v[1]];
    let mut plain = Vec::new();
    let mut turned = Vec::new();
    for _ in 0..50 {
        let cands: Vec<Vec<f64>> = (0..20).map(|_| random_vec(&mut rng, 2)).collect();
        let target = random_vec(&mut rng, 2);
        let truth = rng.random_range(0..20);
        plain.push(rank_of(&target, &cands, truth).unwrap());
        let rc: Vec<Vec<f64>> = cands.iter().map(|v| rot(v)).collect();
        turned.push(rank_of(&rot(&target), &rc, truth).unwrap());
    }
    assert_eq!(eta(&plain, 20).unwrap(), eta(&turned, 20).unwrap());
}
