use std::sync::Arc;

use arena_core::optimizer::Reasoning;
use arena_service::state::{AssignmentInput, CampaignState, CreateCampaign, SubmitSuggestion};
use arena_service::store::{EVENTS_FILE, SNAPSHOT_FILE};
use arena_service::{ServiceConfig, ServiceState};
use serde_json::json;

const TINY: &str = include_str!("../../core/fixtures/tiny.json");

fn open(dir: &std::path::Path, every: usize) -> Arc<ServiceState> {
    ServiceState::open(ServiceConfig {
        data_dir: Some(dir.to_path_buf()),
        snapshot_every: Some(every),
        ..Default::default()
    })
    .unwrap()
}

fn human(budget: usize) -> CreateCampaign {
    ServiceState::parse_create(&json!({"dataset": "tiny", "method": {"modality": "human"}, "budget": budget}).to_string())
        .unwrap()
}

fn submit(iteration: usize, labels: [&str; 2], note: &str) -> SubmitSuggestion {
    SubmitSuggestion {
        iteration,
        assignment: AssignmentInput::Labels(labels.iter().map(|s| s.to_string()).collect()),
        reasoning: Reasoning {
            analysis: note.into(),
            ..Default::default()
        },
        author: None,
    }
}

#[test]
fn state_survives_restart() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = {
        let s = open(dir.path(), 1000);
        s.register_dataset(TINY).unwrap();
        let a = s.create_campaign(human(2), "ada".into()).unwrap().summary.id;
        let b = s.create_campaign(human(4), "bob".into()).unwrap().summary.id;
        s.submit_suggestion(&a, submit(1, ["Ni", "THF"], "line one\nline \"two\""), Some("ada")).unwrap();
        s.submit_suggestion(&a, submit(2, ["Pd", "DMF"], ""), Some("ada")).unwrap();
        s.submit_suggestion(&b, submit(1, ["Pd", "MeCN"], "x"), Some("bob")).unwrap();
        s.publish(&a, "ada").unwrap();
        (a, b)
    };
    assert!(!dir.path().join(SNAPSHOT_FILE).exists());

    let s = open(dir.path(), 1000);
    let va = s.get_campaign(&a).unwrap();
    assert_eq!(va.summary.state, CampaignState::Complete);
    assert!(va.summary.published);
    assert_eq!(
        va.trajectory.records[0].reasoning.as_ref().unwrap().analysis,
        "line one\nline \"two\""
    );
    let vb = s.get_campaign(&b).unwrap();
    assert_eq!(vb.summary.next_iteration, 2);
    s.submit_suggestion(&b, submit(2, ["Pd", "THF"], ""), Some("bob")).unwrap();
    assert_eq!(s.leaderboard(Some("tiny")).len(), 1);

    let c = s.create_campaign(human(1), "cy".into()).unwrap().summary.id;
    assert!(c > b, "{c} should follow {b}");
}

#[test]
fn snapshot_compacts_log_and_replays() {
    let dir = tempfile::tempdir().unwrap();
    let id = {
        let s = open(dir.path(), 3);
        s.register_dataset(TINY).unwrap();
        let id = s.create_campaign(human(5), "ada".into()).unwrap().summary.id;
        for (i, solvent) in ["DMF", "THF", "MeCN", "DMF"].iter().enumerate() {
            s.submit_suggestion(&id, submit(i + 1, ["Pd", solvent], ""), Some("ada")).unwrap();
        }
        id
    };
    assert!(dir.path().join(SNAPSHOT_FILE).exists());
    let log = std::fs::read_to_string(dir.path().join(EVENTS_FILE)).unwrap();
    assert!(log.lines().count() < 6, "log was not compacted:\n{log}");

    let s = open(dir.path(), 3);
    let t = s.trajectory(&id).unwrap();
    assert_eq!(t.records.len(), 4);
    assert_eq!(t.records.iter().map(|r| r.index).collect::<Vec<_>>(), vec![1, 2, 3, 4]);
    s.submit_suggestion(&id, submit(5, ["Ni", "THF"], ""), Some("ada")).unwrap();
    drop(s);
    let s = open(dir.path(), 3);
    assert_eq!(s.get_campaign(&id).unwrap().summary.state, CampaignState::Complete);
}

#[test]
fn torn_final_line_is_ignored() {
    let dir = tempfile::tempdir().unwrap();
    {
        let s = open(dir.path(), 1000);
        s.register_dataset(TINY).unwrap();
    }
    let path = dir.path().join(EVENTS_FILE);
    let mut log = std::fs::read_to_string(&path).unwrap();
    log.push_str("{\"seq\": 2, \"event\": {\"kind\": \"publ");
    std::fs::write(&path, log).unwrap();
    let s = open(dir.path(), 1000);
    assert_eq!(s.list_datasets().len(), 1);
}
