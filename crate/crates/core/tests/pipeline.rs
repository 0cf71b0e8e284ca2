use std::collections::BTreeMap;
use std::path::Path;

use ecppdm::config::{PipelineConfig, Settings};
use ecppdm::pipeline::{self, Layout, Stage};

fn settings(dir: &Path, edit: impl FnOnce(&mut PipelineConfig)) -> Settings {
    let mut cfg = PipelineConfig::default();
    cfg.output.dir = dir.into();
    edit(&mut cfg);
    cfg.validate().unwrap()
}

fn snapshot(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

#[test]
fn stages_compose_to_the_full_run() {
    let whole = tempfile::tempdir().unwrap();
    pipeline::run_pipeline(&settings(whole.path(), |_| {})).unwrap();

    let staged = tempfile::tempdir().unwrap();
    let s = settings(staged.path(), |_| {});
    pipeline::keygen(&s).unwrap();
    for (id, _) in &s.sources {
        pipeline::send(&s, id).unwrap();
    }
    pipeline::receive(&s).unwrap();
    pipeline::etl(&s).unwrap();
    pipeline::perturb(&s).unwrap();
    pipeline::mine(&s).unwrap();
    pipeline::report(&s).unwrap();

    let (a, b) = (snapshot(whole.path()), snapshot(staged.path()));
    assert_eq!(a.keys().collect::<Vec<_>>(), b.keys().collect::<Vec<_>>());
    for (name, bytes) in &a {
        assert!(b[name] == *bytes, "{name} differs");
    }
}

#[test]
fn reruns_are_identical_and_seed_matters() {
    let one = tempfile::tempdir().unwrap();
    let two = tempfile::tempdir().unwrap();
    let other = tempfile::tempdir().unwrap();
    pipeline::run_pipeline(&settings(one.path(), |_| {})).unwrap();
    pipeline::run_pipeline(&settings(two.path(), |_| {})).unwrap();
    pipeline::run_pipeline(&settings(other.path(), |c| c.seed = 7)).unwrap();
    assert_eq!(snapshot(one.path()), snapshot(two.path()));
    let layout = |d: &Path| std::fs::read(Layout::new(d).perturbed()).unwrap();
    assert_ne!(layout(one.path()), layout(other.path()));
}

#[test]
fn nothing_sent_leaves_staging_empty() {
    let dir = tempfile::tempdir().unwrap();
    let s = settings(dir.path(), |_| {});
    pipeline::keygen(&s).unwrap();
    let summary = pipeline::receive_files(&s).unwrap();
    assert!(summary.staged.is_empty());
    let staging = Layout::new(dir.path()).staging();
    assert_eq!(std::fs::read_dir(staging).unwrap().count(), 0);
    let err = pipeline::etl(&s).unwrap_err();
    assert_eq!(err.stage, Stage::Etl);
}

#[test]
fn receive_clears_stale_staging() {
    let dir = tempfile::tempdir().unwrap();
    let s = settings(dir.path(), |_| {});
    pipeline::keygen(&s).unwrap();
    pipeline::send(&s, "S1").unwrap();
    pipeline::receive_files(&s).unwrap();
    std::fs::remove_dir_all(Layout::new(dir.path()).dropbox()).unwrap();
    pipeline::receive_files(&s).unwrap();
    assert_eq!(std::fs::read_dir(Layout::new(dir.path()).staging()).unwrap().count(), 0);
}

#[test]
fn zero_variance_recovers_every_rule() {
    let dir = tempfile::tempdir().unwrap();
    let s = settings(dir.path(), |c| c.perturbation.variance = 0.0);
    let outcome = pipeline::run_pipeline(&s).unwrap();
    for row in &outcome.report.rows {
        assert_eq!(row.original_rules, row.perturbed_rules);
        assert_eq!(row.recovery_percent, 100.0);
    }
    let layout = Layout::new(dir.path());
    assert_eq!(std::fs::read(layout.cleaned()).unwrap(), std::fs::read(layout.perturbed()).unwrap());
}

#[test]
fn missing_keys_fail_at_send() {
    let dir = tempfile::tempdir().unwrap();
    let s = settings(dir.path(), |_| {});
    let err = pipeline::send(&s, "S1").unwrap_err();
    assert_eq!(err.stage, Stage::Send);
    assert!(!err.is_transport());
}
