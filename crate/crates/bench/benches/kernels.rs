use criterion::{black_box, criterion_group, criterion_main, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tdcsem::classical_inversion::{ForwardSetup, InverseProblem, Penalty, Residuals};
use tdcsem::em_forward::{forward_transient, peak_normalize_encode, EarthModel, FrequencyGrid, SurveyGeometry};
use tdcsem::phys_decoder::{decode_with_jacobian, DepthGrid, DEFAULT_TAU};
use tdcsem::synth_data::ParamRanges;
use tdcsem::tcn_core::{random_input, Mode, Network, NetworkConfig};

fn forward(c: &mut Criterion) {
    let model = EarthModel::two_layer(3.2, 0.5, 80.0, 30.0);
    let geom = SurveyGeometry::default();
    let grid = FrequencyGrid::paper64();
    c.bench_function("forward_transient_paper64", |b| {
        b.iter(|| forward_transient(black_box(&model), &geom, &grid).unwrap())
    });
    let t = forward_transient(&model, &geom, &grid).unwrap();
    c.bench_function("peak_normalize_encode", |b| b.iter(|| peak_normalize_encode(black_box(&t)).unwrap()));
}

fn decoder(c: &mut Criterion) {
    let ranges = ParamRanges::default();
    let grid = DepthGrid::default();
    let theta = [0.4, 0.6, 0.3, 0.7];
    c.bench_function("decode_with_jacobian", |b| {
        b.iter(|| decode_with_jacobian(black_box(&theta), DEFAULT_TAU, &grid, &ranges).unwrap())
    });
}

fn network(c: &mut Criterion) {
    let cfg = NetworkConfig::small();
    let net = Network::new(cfg.clone(), 1).unwrap();
    let x = random_input(64, cfg.in_channels, cfg.seq_len, &mut ChaCha8Rng::seed_from_u64(2));
    c.bench_function("dual_tcn_small_eval_batch64", |b| {
        b.iter(|| net.predict(black_box(&x), Mode::Eval, &mut ChaCha8Rng::seed_from_u64(0)).unwrap())
    });
}

fn residuals(c: &mut Criterion) {
    let setup = ForwardSetup::default();
    let obs = setup.simulate(&[0.3, 0.6, 0.4, 0.7]).unwrap();
    let mut problem = InverseProblem::new(&obs, &setup, 4, Penalty::None).unwrap();
    c.bench_function("inverse_problem_residuals", |b| b.iter(|| problem.residuals(black_box(&[0.5, 0.5, 0.5, 0.5])).unwrap()));
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = forward, decoder, network, residuals
}
criterion_main!(benches);
