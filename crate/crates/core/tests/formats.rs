mod common;

use common::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tlg::grounding::{GroundingModel, ModelConfig, Preset, VideoFeatures};
use tlg::io::json_stems;
use tlg::metrics::MaskSequence;
use tlg::propagation::ProposalSet;
use tlg::synth::{write_benchmark, BenchmarkLayout, Scene, SynthConfig};
use tlg::tensor_io::{Checkpoint, Tensor};
use tlg::TrackletSet;

fn write_read_write<T>(value: &T, write: impl Fn(&T, &std::path::Path), read: impl Fn(&std::path::Path) -> T) {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    write(value, &a);
    write(&read(&a), &b);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn tracklet_set_json(seed in any::<u64>(), n in 0usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let set = to_set(&random_tracklets(&mut rng, n, 4, 7, 5), 4, 7, 5);
        write_read_write(&set, |s, p| s.write(p).unwrap(), |p| TrackletSet::read(p).unwrap());
        let dir = tempfile::tempdir().unwrap();
        set.write(&dir.path().join("s.json")).unwrap();
        prop_assert_eq!(TrackletSet::read(&dir.path().join("s.json")).unwrap(), set);
    }

    #[test]
    fn tensor_files(dims in prop::collection::vec(0usize..5, 0..4), seed in any::<u64>()) {
        let len: usize = dims.iter().product();
        let data: Vec<f32> = (0..len).map(|i| ((i as u64 ^ seed) as f32).sin()).collect();
        let t = Tensor::new(dims, data).unwrap();
        write_read_write(&t, |t, p| t.write(p).unwrap(), |p| Tensor::read(p).unwrap());
    }
}

#[test]
fn checkpoints_round_trip_for_both_presets() {
    for preset in [Preset::Desk, Preset::Paper] {
        let config = if preset == Preset::Paper {
            // full width, a single layer keeps the test quick
            ModelConfig {
                layers: 1,
                ..preset.config()
            }
        } else {
            preset.config()
        };
        let model = GroundingModel::random(config, 1).unwrap();
        write_read_write(
            &model,
            |m, p| m.save(p).unwrap(),
            |p| GroundingModel::load(p, config.heads).unwrap(),
        );
        let dir = tempfile::tempdir().unwrap();
        model.save(&dir.path().join("m")).unwrap();
        let ck = Checkpoint::read(&dir.path().join("m")).unwrap();
        assert_eq!(ck.tensors.len(), 12 * config.layers + 6);
        assert_eq!(ck.tensors[0].0, "layer0.wq");
    }
}

#[test]
fn benchmark_artifacts_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    write_benchmark(&SynthConfig::hard_noisy(), 2, 9, dir.path()).unwrap();
    let layout = BenchmarkLayout::new(dir.path());
    for id in json_stems(&dir.path().join("scenes")).unwrap() {
        write_read_write(
            &Scene::read(&layout.scene(&id)).unwrap(),
            |s, p| s.write(p).unwrap(),
            |p| Scene::read(p).unwrap(),
        );
        write_read_write(
            &ProposalSet::read(&layout.proposals(&id)).unwrap(),
            |s, p| s.write(p).unwrap(),
            |p| ProposalSet::read(p).unwrap(),
        );
        write_read_write(
            &VideoFeatures::read(&layout.features(&id)).unwrap(),
            |s, p| s.write(p).unwrap(),
            |p| VideoFeatures::read(p).unwrap(),
        );
        write_read_write(
            &MaskSequence::read(&layout.gt(&id)).unwrap(),
            |s, p| s.write(p).unwrap(),
            |p| MaskSequence::read(p).unwrap(),
        );
    }
}
