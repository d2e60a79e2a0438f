use std::path::{Path, PathBuf};

use arena_core::campaign::{load_trajectories, run_campaign, CampaignConfig, MethodSpec, Trajectory};
use arena_core::optimizer::bo::{AcquisitionKind, BoConfig, FeaturizationMode};
use arena_core::BenchmarkDataset;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn bo(acquisition: AcquisitionKind, featurization: FeaturizationMode, descriptors: Vec<PathBuf>) -> CampaignConfig {
    let mut c = CampaignConfig::new("tiny", MethodSpec::Bo {
        config: BoConfig {
            acquisition,
            featurization,
            ..Default::default()
        },
        descriptor_paths: descriptors,
    });
    c.budget = 5;
    c.base_seed = 17;
    c
}

#[test]
fn every_bo_variant_replays_exactly() {
    let ds = BenchmarkDataset::load(fixture("tiny.json")).unwrap();
    let descriptors = vec![fixture("tiny_catalyst_descriptors.csv"), fixture("tiny_solvent_descriptors.csv")];
    for acquisition in [AcquisitionKind::Ei, AcquisitionKind::Pi, AcquisitionKind::Ucb] {
        for (mode, paths) in [
            (FeaturizationMode::OneHot, vec![]),
            (FeaturizationMode::Descriptors, descriptors.clone()),
        ] {
            let config = bo(acquisition, mode, paths);
            let a = run_campaign(&config, &ds, 1).unwrap();
            let b = run_campaign(&config, &ds, 1).unwrap();
            assert_eq!(a.without_timestamps(), b.without_timestamps(), "{acquisition:?} {mode:?}");
            assert_eq!(a.records.len(), 5);
            assert_eq!(a.duplicates(), 0);
        }
    }
}

#[test]
fn trajectories_round_trip_through_disk() {
    let ds = BenchmarkDataset::load(fixture("amination_replicates.json")).unwrap();
    let mut config = CampaignConfig::new("amination", MethodSpec::Random);
    config.budget = 36;
    let dir = tempfile::tempdir().unwrap();
    let runs: Vec<Trajectory> = (0..3).map(|r| run_campaign(&config, &ds, r).unwrap()).collect();
    for t in &runs {
        t.save(dir.path().join(format!("{}.json", t.run_id))).unwrap();
    }
    let mut loaded = load_trajectories(dir.path()).unwrap();
    loaded.sort_by(|a, b| a.run_id.cmp(&b.run_id));
    assert_eq!(loaded, runs);
    // two cells are unmeasured, so an exhaustive run carries exactly two missing markers
    assert!(loaded.iter().all(|t| t.records.iter().filter(|r| r.is_missing()).count() == 2));
    assert_eq!(Trajectory::from_json_str(&runs[0].to_json_string()).unwrap(), runs[0]);
}

#[test]
fn seeds_separate_runs() {
    let ds = BenchmarkDataset::load(fixture("coupling_8x10x12.json")).unwrap();
    let config = CampaignConfig::new("coupling", MethodSpec::Random);
    let a = run_campaign(&config, &ds, 0).unwrap();
    let b = run_campaign(&config, &ds, 1).unwrap();
    assert_ne!(a.suggestions().collect::<Vec<_>>(), b.suggestions().collect::<Vec<_>>());
    assert_ne!(a.run_id, b.run_id);
}
