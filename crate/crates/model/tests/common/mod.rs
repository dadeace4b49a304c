#![allow(dead_code)]

use cgep_core::dataset::{build_dataset, BuildOptions};
use cgep_core::ecg::CgepInstance;
use cgep_core::synth::{synth_corpus, SynthConfig};
use cgep_core::tokenize::SpecialTokens;
use cgep_model::{Ablation, EncoderConfig, ModelConfig, ParamStore, SedgplModel, Vocab};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn synth_instances(docs: usize, k: usize, seed: u64) -> Vec<CgepInstance> {
    let corpus = synth_corpus(&SynthConfig {
        docs,
        seed,
        ..SynthConfig::default()
    });
    build_dataset(&corpus, &BuildOptions::new(k, seed))
        .expect("synthetic corpus builds")
        .instances
}

pub fn toy_model<S: cgep_model::tensor::Scalar>(
    instances: &[CgepInstance],
    ablation: Ablation,
    seed: u64,
) -> (SedgplModel, ParamStore<S>) {
    let vocab = Vocab::from_instances(SpecialTokens::default(), instances);
    let config = ModelConfig {
        encoder: EncoderConfig::toy(vocab.len()),
        max_tokens: 200,
        ablation,
        candidate_context: Default::default(),
    };
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = SedgplModel::new(config, vocab, &mut store, &mut rng);
    (model, store)
}
