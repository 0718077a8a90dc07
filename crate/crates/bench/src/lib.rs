//! Shared inputs for the benchmarks.

use ssfa::datamodel::{standardize, UnlabeledSet};
use ssfa::mining::{mine_pairs, mine_triplets, MiningConfig};
use ssfa::synth::{gen_unlabeled, SynthConfig};
use ssfa::trainer::TupleBank;

pub fn clips(num_clips: usize) -> UnlabeledSet {
    gen_unlabeled(&SynthConfig { num_clips, ..SynthConfig::default() }).expect("default synth config is valid")
}

pub fn inputs(u: &UnlabeledSet, count: usize) -> Vec<Vec<f64>> {
    u.clips()
        .iter()
        .flat_map(|c| c.frames())
        .take(count)
        .map(|f| standardize(f.pixels()))
        .collect()
}

pub fn bank(u: &UnlabeledSet) -> TupleBank {
    let cfg = MiningConfig::default();
    let pairs = mine_pairs(u, &cfg).expect("clips are long enough");
    let triplets = mine_triplets(u, &cfg).expect("clips are long enough");
    TupleBank::new(u, &pairs.samples, &triplets.samples).expect("tuples come from these clips")
}
