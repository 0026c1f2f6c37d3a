use std::sync::OnceLock;

use tdcsem::synth_data::{generate_dataset, AmplitudeAug, Curriculum, Dataset, GenerationConfig, TrainNoise, WaveformNoise};
use tdcsem::tcn_core::NetworkConfig;
use tdcsem::training::{train, ModelCheckpoint, TrainConfig, TrainOutcome};

fn dataset() -> &'static Dataset {
    static DS: OnceLock<Dataset> = OnceLock::new();
    DS.get_or_init(|| {
        let cfg = GenerationConfig { n: 120, seed: 5, ..Default::default() };
        let dir = tempfile::tempdir().unwrap();
        generate_dataset(&cfg, &dir.path().join("d.tdcsemds")).unwrap()
    })
}

fn config() -> TrainConfig {
    let mut c = TrainConfig::desk();
    c.epochs = 4;
    c.batch_size = 16;
    c.network = NetworkConfig { seq_len: 128, ..NetworkConfig::tiny() };
    c.noise = TrainNoise {
        waveform: WaveformNoise::White,
        amplitude: AmplitudeAug::amp_aug(),
        curriculum: Some(Curriculum { clean_until: 2.0, ramp_until: 3.0 }),
    };
    c
}

fn run() -> &'static TrainOutcome {
    static OUT: OnceLock<TrainOutcome> = OnceLock::new();
    OUT.get_or_init(|| train(dataset(), &config()).unwrap())
}

#[test]
fn losses_are_finite_and_logged_per_epoch() {
    let out = run();
    assert_eq!(out.log.len(), 4);
    for (i, r) in out.log.iter().enumerate() {
        assert_eq!(r.epoch, i);
        assert!(r.train_loss.is_finite() && r.val_loss.is_finite());
        assert_eq!(r.val_rmse.len(), 4);
    }
}

#[test]
fn best_checkpoint_has_lowest_validation_loss() {
    let out = run();
    let min = out.log.iter().map(|r| r.val_loss).fold(f64::INFINITY, f64::min);
    assert_eq!(out.best.best_val_loss, min);
    assert_eq!(out.log[out.best.epoch].val_loss, min);
}

#[test]
fn amplitude_augmentation_waits_for_curriculum() {
    let out = run();
    assert_eq!(out.log[0].amp_sigma, 0.0);
    assert_eq!(out.log[1].amp_sigma, 0.0);
    assert!(out.log[3].amp_sigma > 0.0);
}

#[test]
fn training_is_deterministic() {
    let again = train(dataset(), &config()).unwrap();
    assert_eq!(again.log, run().log);
    let (mut a, mut b) = (Vec::new(), Vec::new());
    again.best.write_to(&mut a).unwrap();
    run().best.write_to(&mut b).unwrap();
    assert_eq!(a, b);
}

#[test]
fn checkpoint_round_trips_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    run().best.save(&path).unwrap();
    let back = ModelCheckpoint::load(&path).unwrap();
    assert_eq!(&back, &run().best);
    let mut bytes = std::fs::read(&path).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 1;
    std::fs::write(&path, bytes).unwrap();
    assert!(ModelCheckpoint::load(&path).is_err());
}
