use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use ssfa_bench::{bank, clips, inputs};
use ssfa::losses::{total_objective, Margins};
use ssfa::mining::{mine_pairs, mine_triplets, MiningConfig};
use ssfa::network::{backward, forward, LayerSpec, Model};

fn network(c: &mut Criterion) {
    let u = clips(4);
    let x = inputs(&u, 1).remove(0);
    let model = Model::init(&LayerSpec::one_hidden(256, 32, 16), 4, 0);
    c.bench_function("forward 256-32-16", |b| b.iter(|| forward(&model.net, black_box(&x)).unwrap()));
    let (z, tape) = forward(&model.net, &x).unwrap();
    c.bench_function("backward 256-32-16", |b| b.iter(|| backward(&model.net, &tape, black_box(&z)).unwrap()));
}

fn objective(c: &mut Criterion) {
    let u = clips(40);
    let bank = bank(&u);
    let xs = inputs(&u, 16);
    let labeled: Vec<(&[f64], usize)> = xs.iter().enumerate().map(|(i, x)| (x.as_slice(), i % 4)).collect();
    let pairs: Vec<_> = (0..32).map(|i| bank.pair(i * 31 % bank.num_pairs())).collect();
    let triplets: Vec<_> = (0..32).map(|i| bank.triplet(i * 17 % bank.num_triplets())).collect();
    let model = Model::init(&LayerSpec::one_hidden(256, 32, 16), 4, 0);
    let margins = Margins::default();
    c.bench_function("total objective 16+32+32", |b| {
        b.iter(|| total_objective(&model, &labeled, &pairs, &triplets, 1.0, 1.0, &margins).unwrap())
    });
}

fn mining(c: &mut Criterion) {
    let u = clips(200);
    let cfg = MiningConfig::default();
    c.bench_function("mine pairs 200 clips", |b| {
        b.iter_batched(|| cfg.clone(), |cfg| mine_pairs(&u, &cfg).unwrap(), BatchSize::SmallInput)
    });
    c.bench_function("mine triplets 200 clips", |b| b.iter(|| mine_triplets(&u, black_box(&cfg)).unwrap()));
}

criterion_group!(benches, network, objective, mining);
criterion_main!(benches);
