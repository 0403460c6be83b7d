use std::collections::BTreeSet;
use std::fs;
use std::io::Write;

use aurascreen::chem::parse_smiles;
use aurascreen::harness::{generate_world, WorldConfig};
use aurascreen::screening::{property_filter, run_campaign, write_report, CampaignConfig, Rule, ScreenReport};

fn setup(dir: &std::path::Path) -> CampaignConfig {
    let w = generate_world(WorldConfig { size: 1500, seed: 12, ..WorldConfig::default() });
    let [lib, prot, act] = w.write_files(dir).unwrap();
    let mut f = fs::OpenOptions::new().append(true).open(&lib).unwrap();
    writeln!(f, "C1CC\tBROKEN1").unwrap();
    writeln!(f, "CC(C)(C)(C)C\tVALENCE1").unwrap();
    let mut cfg = CampaignConfig::new("SYN12", prot, lib);
    cfg.known_actives_path = Some(act);
    cfg.stage1_keep = 400;
    cfg.stage2_keep = 80;
    cfg.shortlist_size = 15;
    cfg.clustering.compounds_per_center = 300;
    cfg
}

fn bytes(report: &ScreenReport) -> Vec<u8> {
    let mut out = report.to_json().unwrap().into_bytes();
    out.extend(report.shortlist_csv().unwrap());
    out.extend(report.distribution_csv().unwrap());
    out
}

#[test]
fn containment_sizes_and_reasons() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path());
    let (report, _) = run_campaign(&cfg).unwrap();

    assert_eq!(report.metadata.library_size, 1502);
    assert_eq!(report.metadata.scored, 1500);
    let skipped: BTreeSet<&str> = report.skipped.iter().map(|s| s.id.as_str()).collect();
    assert_eq!(skipped, BTreeSet::from(["BROKEN1", "VALENCE1"]));
    assert_eq!(report.metadata.prior_centroids.len(), 5);

    assert_eq!(report.stage1.len(), 400);
    assert_eq!(report.stage2.len(), 80);
    let s1: BTreeSet<&str> = report.stage1.iter().map(|r| r.id.as_str()).collect();
    let s2: BTreeSet<&str> = report.stage2.iter().map(|r| r.id.as_str()).collect();
    assert!(s2.is_subset(&s1));
    assert!(report
        .stage1
        .windows(2)
        .all(|w| w[0].score > w[1].score || (w[0].score == w[1].score && w[0].id < w[1].id)));

    let survivors: BTreeSet<&str> = report.verdicts.iter().filter(|v| v.passed).map(|v| v.id.as_str()).collect();
    assert!(survivors.iter().all(|id| s2.contains(id)));
    let short: Vec<&str> = report.shortlist.iter().map(|e| e.id.as_str()).collect();
    assert!(short.iter().all(|id| survivors.contains(id)));
    assert_eq!(short.len(), survivors.len().min(15));
    assert_eq!(report.verdicts.len(), 80);

    for (v, entry) in report.verdicts.iter().zip(&report.stage2) {
        assert_eq!(v.id, entry.id);
        assert_eq!(v.passed, v.reasons.is_empty());
        assert!(v.reasons.iter().all(|r| r.holds()), "{}: {:?}", v.id, v.reasons);
        let novelty = v.reasons.iter().any(|r| r.rule == Rule::Novelty);
        let near = v.nearest_active.as_ref().map_or(0.0, |n| n.similarity);
        assert_eq!(novelty, near > cfg.filters.novelty_cutoff);
    }
    for e in &report.shortlist {
        let mol = parse_smiles(&e.smiles).unwrap();
        assert!(property_filter(&mol, &e.descriptors, &cfg.filters).is_empty());
    }
}

#[test]
fn identical_across_reruns_and_workers() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = setup(dir.path());
    let first = bytes(&run_campaign(&cfg).unwrap().0);
    assert_eq!(first, bytes(&run_campaign(&cfg).unwrap().0));
    cfg.worker_count = 3;
    assert_eq!(first, bytes(&run_campaign(&cfg).unwrap().0));

    let out = dir.path().join("out");
    let (report, timings) = run_campaign(&cfg).unwrap();
    write_report(&out, &report, &timings).unwrap();
    for name in ["report.json", "shortlist.csv", "score_distribution.csv", "timings.json"] {
        assert!(out.join(name).exists(), "{name}");
    }
}
