//! Seeded fixtures shared by the benchmarks.

use dmrag_core::fusion::{BetaParams, Channel, FusionModel, DEFAULT_EPSILON};
use dmrag_core::ingest::{self, AttackCategory, CsvOptions, LabeledInstance, RawLogRecord};
use dmrag_core::memory::{Embedder, HashEmbedder, LtmStore};
use dmrag_core::pipeline::{Models, Pipeline, PipelineConfig};
use dmrag_core::synth::{self, SynthOptions};
use dmrag_core::{LogisticModel, MockBackend};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn unit_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f32> {
    let v: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() - 0.5).collect();
    dmrag_core::memory::unit_or_basis(&v)
}

pub fn store(entries: usize, dim: usize, seed: u64) -> LtmStore {
    let mut r = rng(seed);
    let mut s = LtmStore::new(dim, "bench");
    for i in 0..entries {
        s.add(format!("entry {i}"), 0.95, unit_vector(&mut r, dim), vec![i as u64], i as u64)
            .expect("unit vector");
    }
    s
}

pub fn instances(n: usize, dim: usize, seed: u64) -> Vec<LabeledInstance> {
    let mut r = rng(seed);
    (0..n)
        .map(|i| {
            let y = u8::from(r.random::<f64>() < 0.45);
            let shift = if y == 1 { 0.15 } else { 0.0 };
            LabeledInstance {
                id: i as u64,
                x: (0..dim).map(|_| (r.random::<f64>() * 0.85 + shift).min(1.0)).collect(),
                y,
                category: if y == 1 { AttackCategory::Generic } else { AttackCategory::Normal },
            }
        })
        .collect()
}

pub fn random_fusion(channels: usize, seed: u64) -> FusionModel {
    let mut r = rng(seed);
    let mut p = || BetaParams::new(r.random_range(0.5..8.0), r.random_range(0.5..8.0)).expect("positive");
    let chans = (0..channels)
        .map(|i| Channel {
            name: format!("c{i}"),
            anomalous: p(),
            normal: p(),
        })
        .collect();
    FusionModel::new(chans, 0.45, DEFAULT_EPSILON).expect("valid model")
}

/// Synthetic flows plus models fitted on them.
pub fn pipeline_fixture(rows: usize) -> (Vec<RawLogRecord>, Models) {
    let mut buf = Vec::new();
    synth::write_csv(
        &mut buf,
        &SynthOptions {
            rows,
            ..SynthOptions::default()
        },
    )
    .expect("in-memory write");
    let records = ingest::parse_reader(buf.as_slice(), &CsvOptions::labeled()).expect("synthetic csv parses");
    let normalizer = ingest::fit_normalizer(&records).expect("non-empty");
    let mut confidence = LogisticModel::new(vec![0.1; normalizer.len()], -2.0);
    confidence.bind_normalizer(&normalizer).expect("matching dimension");
    let fusion = random_fusion(1, 3);
    (
        records,
        Models {
            normalizer,
            confidence,
            fusion,
        },
    )
}

pub fn mock_pipeline(models: Models) -> Pipeline {
    let embedder = HashEmbedder::default();
    let ltm = LtmStore::new(embedder.dimension(), embedder.id());
    Pipeline::new(PipelineConfig::default(), models, Box::new(embedder), Box::new(MockBackend), ltm)
        .expect("valid setup")
}
