use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use pocketflow::encoder::Context;
use pocketflow::generator::{GenConfig, Generator};
use pocketflow::pdb::normalize_bfactors;
use pocketflow::trainer::{build_steps, loss_and_grad, toy_complex, toy_dataset};
use pocketflow::{Model, ModelConfig, Vocabulary};

fn setup() -> (Model, pocketflow::ParamSet, Vocabulary) {
    let vocab = Vocabulary::default();
    let (model, params) = Model::initialized(ModelConfig::default(), vocab.clone(), 0).unwrap();
    (model, params, vocab)
}

fn encoder(c: &mut Criterion) {
    let (model, params, vocab) = setup();
    let (pocket, ligand) = toy_complex(&vocab).unwrap();
    let bw = normalize_bfactors(&pocket).unwrap();
    let ctx = Context::new(&pocket, &bw, &ligand.atoms).unwrap();
    let prep = model.encoder().prepare(&ctx).unwrap();
    c.bench_function("encoder_forward_8_atoms", |b| {
        b.iter(|| {
            model
                .encoder()
                .forward(black_box(params.values()), black_box(&prep))
        })
    });
}

fn flows(c: &mut Criterion) {
    let (model, params, _) = setup();
    let flow = model.type_flow();
    let cond = vec![0.1; flow.cond_dim()];
    let x = vec![0.2; flow.dim()];
    c.bench_function("type_flow_log_prob", |b| {
        b.iter(|| {
            flow.log_prob(black_box(params.values()), black_box(&x), &cond)
                .unwrap()
        })
    });
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    c.bench_function("type_flow_sample", |b| {
        b.iter(|| {
            flow.sample(black_box(params.values()), &cond, &mut rng)
                .unwrap()
        })
    });
}

fn training(c: &mut Criterion) {
    let (model, params, vocab) = setup();
    let data = toy_dataset(&vocab, 10, 0.1, 0).unwrap();
    let steps = build_steps(&model, &data, 0.25, 0).unwrap();
    c.bench_function("loss_and_grad_30_steps", |b| {
        b.iter(|| loss_and_grad(&model, black_box(params.values()), &steps).unwrap())
    });
}

fn generation(c: &mut Criterion) {
    let (model, params, vocab) = setup();
    let (pocket, _) = toy_complex(&vocab).unwrap();
    let cfg = GenConfig::default();
    let generator = Generator::new(&model, params.values(), &cfg);
    let mut seed = 0u64;
    c.bench_function("generate_ligand", |b| {
        b.iter(|| {
            seed += 1;
            generator
                .generate_ligand(&pocket, &mut ChaCha8Rng::seed_from_u64(seed))
                .unwrap()
        })
    });
}

criterion_group!(benches, encoder, flows, training, generation);
criterion_main!(benches);
