use std::collections::{BTreeMap, BTreeSet};

use aurascreen::chem::{parse_smiles, write_smiles_random, Descriptors};
use aurascreen::cluster::{butina_cluster_with, ClusterOptions};
use aurascreen::fingerprint::{ecfp, ecfp4, tanimoto, Fingerprint};
use aurascreen::harness::world::random_smiles;
use aurascreen::losses::{dpo_loss, plackett_luce_prob, sft_loss, RankingGroup, SftBatch};
use aurascreen::metrics::{enrichment_factor, top_count};
use aurascreen::model::{AffinityHead, HeadConfig, TokenReps};
use aurascreen::sampler::{
    curate, distill_accept, group_batches, label_activity, label_bin, ActivityLabel, ActivityRecord, AssayKind,
    DistillCandidate,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn grammar_smiles(seed: u64) -> String {
    random_smiles(&mut ChaCha8Rng::seed_from_u64(seed))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn respellings_keep_descriptors_and_bits(seed in any::<u64>()) {
        let smiles = grammar_smiles(seed);
        let mol = parse_smiles(&smiles).unwrap();
        let d = Descriptors::compute(&mol);
        let fp = ecfp4(&mol).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        for _ in 0..3 {
            let other = parse_smiles(&write_smiles_random(&mol, &mut rng)).unwrap();
            prop_assert_eq!(&Descriptors::compute(&other), &d);
            prop_assert_eq!(&ecfp4(&other).unwrap(), &fp);
        }
    }

    #[test]
    fn fragments_add(a in any::<u64>(), b in any::<u64>()) {
        let (sa, sb) = (grammar_smiles(a), grammar_smiles(b));
        let da = Descriptors::compute(&parse_smiles(&sa).unwrap());
        let db = Descriptors::compute(&parse_smiles(&sb).unwrap());
        let dab = Descriptors::compute(&parse_smiles(&format!("{sa}.{sb}")).unwrap());
        prop_assert!((dab.molecular_weight - da.molecular_weight - db.molecular_weight).abs() < 1e-9);
        prop_assert_eq!(dab.rings, da.rings + db.rings);
        prop_assert_eq!(dab.fragments, 2);
    }

    #[test]
    fn larger_radius_is_a_superset(seed in any::<u64>()) {
        let mol = parse_smiles(&grammar_smiles(seed)).unwrap();
        let mut prev = ecfp(&mol, 0, 2048).unwrap();
        for r in 1..4 {
            let next = ecfp(&mol, r, 2048).unwrap();
            prop_assert!(next.contains(&prev));
            prev = next;
        }
    }

    #[test]
    fn tanimoto_symmetric_and_bounded(a in proptest::collection::vec(0usize..256, 0..40), b in proptest::collection::vec(0usize..256, 0..40)) {
        let fa = Fingerprint::from_bits(256, a.clone()).unwrap();
        let fb = Fingerprint::from_bits(256, b).unwrap();
        let t = tanimoto(&fa, &fb).unwrap();
        prop_assert_eq!(t, tanimoto(&fb, &fa).unwrap());
        prop_assert!((0.0..=1.0).contains(&t));
        if !a.is_empty() {
            prop_assert_eq!(tanimoto(&fa, &fa).unwrap(), 1.0);
        }
    }

    #[test]
    fn butina_partitions_and_respects_threshold(seed in any::<u64>(), n in 1usize..60, threshold in 0.2f64..0.9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fps: BTreeMap<String, Fingerprint> = (0..n)
            .map(|i| {
                let bits: Vec<usize> = (0..rng.gen_range(1..12)).map(|_| rng.gen_range(0..48)).collect();
                (format!("c{i:03}"), Fingerprint::from_bits(64, bits).unwrap())
            })
            .collect();
        let opts = ClusterOptions { threshold, workers: 1, ..ClusterOptions::default() };
        let clusters = butina_cluster_with(&fps, &opts).unwrap();
        let mut seen = BTreeSet::new();
        for c in &clusters {
            for m in &c.member_ids {
                prop_assert!(seen.insert(m.clone()));
                if *m != c.seed_id {
                    prop_assert!(tanimoto(&fps[m], &fps[&c.seed_id]).unwrap() > threshold);
                }
            }
        }
        prop_assert_eq!(seen.len(), n);
        let again = butina_cluster_with(&fps, &ClusterOptions { workers: 3, ..opts }).unwrap();
        prop_assert_eq!(clusters, again);
    }

    #[test]
    fn head_weights_and_equivariance(seed in any::<u64>(), np in 1usize..6, nl in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let head = AffinityHead::new(HeadConfig::default(), &mut rng);
        let lig: Vec<bool> = (0..np + nl).map(|i| i >= np).collect();
        let mut r = TokenReps::zeros(lig, 16, 8);
        r.s.iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0));
        r.z.iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0));
        let out = head.apply(&r).unwrap();
        prop_assert!((out.norm_weights.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        prop_assert!(out.norm_weights.iter().all(|&w| w > 0.0));
        let lig_sum: f64 = out.raw_weights[np..].iter().sum();
        let prot_sum: f64 = out.raw_weights[..np].iter().sum();
        prop_assert!((lig_sum - 2.0 * prot_sum).abs() <= 1e-12 * lig_sum);

        let mut perm: Vec<usize> = (0..np + nl).collect();
        for i in (1..perm.len()).rev() {
            perm.swap(i, rng.gen_range(0..=i));
        }
        let moved = head.apply(&r.permuted(&perm)).unwrap();
        prop_assert!((moved.affinity - out.affinity).abs() < 1e-8);
    }

    #[test]
    fn plackett_luce_shift_and_dpo_monotone(scores in proptest::collection::vec(-3.0f64..3.0, 2..6), shift in -50.0f64..50.0, bump in 0.01f64..1.0) {
        let k = scores.len();
        let order: Vec<usize> = (0..k).collect();
        let g = RankingGroup::new(scores.clone(), order.clone());
        let shifted = RankingGroup::new(scores.iter().map(|s| s + shift).collect(), order.clone());
        prop_assert!((plackett_luce_prob(&g).unwrap() - plackett_luce_prob(&shifted).unwrap()).abs() < 1e-9);
        let mut up = scores.clone();
        up[0] += bump;
        let (before, grads) = dpo_loss(&[g]).unwrap();
        let (after, _) = dpo_loss(&[RankingGroup::new(up, order)]).unwrap();
        prop_assert!(grads[0][0] <= 0.0);
        prop_assert!(after <= before);
        // A saturated top term at tau 0.1 leaves nothing to decrease in f64.
        if grads[0][0] < -1e-6 {
            prop_assert!(after < before);
        }
    }

    #[test]
    fn sft_scale_invariant(pairs in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0, 0.1f64..3.0), 1..10), c in 0.1f64..10.0) {
        let mk = |c: f64| SftBatch {
            y_pred: pairs.iter().map(|p| p.0 * c).collect(),
            y_true: pairs.iter().map(|p| p.1 * c).collect(),
            sigma_exp: pairs.iter().map(|p| p.2 * c).collect(),
            input_grad_norms: vec![0.0; pairs.len()],
            lambda: 0.0,
        };
        let (a, _) = sft_loss(&mk(1.0)).unwrap();
        let (b, _) = sft_loss(&mk(c)).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
    }

    #[test]
    fn curation_and_batching(seed in any::<u64>(), sizes in proptest::collection::vec(1usize..40, 1..5), batch in 1usize..9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut records = Vec::new();
        for (t, &n) in sizes.iter().enumerate() {
            for c in 0..n {
                let p = 5.0 + (rng.gen_range(0..20) as f64) * 0.05;
                records.push(ActivityRecord::dose_response(&format!("T{t}"), &format!("C{t}_{c}"), p));
            }
        }
        let kept = curate(&records, seed);
        prop_assert!(kept.len() <= records.len());
        prop_assert_eq!(&kept, &curate(&records, seed));
        let mut by_target: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        for r in &kept {
            by_target.entry(&r.target_id).or_default().push(r.label());
        }
        for (t, labels) in &by_target {
            let total = records.iter().filter(|r| &r.target_id == t).count();
            prop_assert!(total >= 10);
            let all_min = records.iter().filter(|r| &r.target_id == t).map(|r| r.label()).fold(f64::INFINITY, f64::min);
            let mut bins: BTreeMap<usize, usize> = BTreeMap::new();
            for &l in labels {
                *bins.entry(label_bin(l, all_min)).or_default() += 1;
            }
            prop_assert!(bins.values().all(|&c| c <= 5));
        }
        let batches = group_batches(&kept, batch, seed).unwrap();
        let mut covered = vec![0usize; kept.len()];
        for b in &batches {
            prop_assert!(b.len() <= batch);
            prop_assert!(b.iter().all(|&i| kept[i].target_id == kept[b[0]].target_id));
            for &i in b {
                covered[i] += 1;
            }
        }
        prop_assert!(covered.iter().all(|&c| c == 1));
    }

    #[test]
    fn labels_partition(nm in proptest::option::of(0.0f64..1e6), pchembl in proptest::option::of(2.0f64..11.0), screening in any::<bool>()) {
        let rec = ActivityRecord {
            target_id: "T".into(),
            compound_id: "C".into(),
            pxc50: None,
            activity_value_nm: nm,
            pchembl,
            assay_kind: if screening { AssayKind::Screening } else { AssayKind::DoseResponse },
        };
        let l = label_activity(&rec);
        let inactive = nm.is_some_and(|v| v > 20000.0) || pchembl.is_some_and(|p| p < 4.5);
        prop_assert_eq!(l == ActivityLabel::Inactive, inactive);
    }

    #[test]
    fn distill_accept_is_monotone(iptm in 0.0f64..1.0, lptm in 0.0f64..1.0, plddt in 0.0f64..100.0, ident in 0.0f64..1.0, ic50 in 0.0f64..1e4, d in 0.0f64..0.5) {
        let c = DistillCandidate { iptm, ligand_ptm: lptm, protein_plddt: plddt, max_seq_identity_to_holdout: ident, ic50_nm: ic50 };
        if distill_accept(&c) {
            for raised in [
                DistillCandidate { iptm: iptm + d, ..c },
                DistillCandidate { ligand_ptm: lptm + d, ..c },
                DistillCandidate { protein_plddt: plddt + 100.0 * d, ..c },
                DistillCandidate { ic50_nm: ic50 + 1e3 * d, ..c },
            ] {
                prop_assert!(distill_accept(&raised));
            }
        }
    }

    #[test]
    fn ef_bounded_and_monotone_invariant(entries in proptest::collection::vec((-10.0f64..10.0, any::<bool>()), 1..300), f in 0.005f64..0.5) {
        prop_assume!(entries.iter().any(|e| e.1));
        let ef = enrichment_factor(&entries, f).unwrap();
        let n = entries.len();
        prop_assert!(ef <= 1.0 / f + 1e-9);
        let positives = entries.iter().filter(|e| e.1).count();
        prop_assert!(ef <= top_count(f, n).min(positives) as f64 / positives as f64 / f + 1e-9);
        let moved: Vec<(f64, bool)> = entries.iter().map(|&(s, a)| (s.exp() * 3.0 - 1.0, a)).collect();
        prop_assert_eq!(ef, enrichment_factor(&moved, f).unwrap());
    }
}

#[test]
fn auroc_agrees_with_sampled_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let entries: Vec<(f64, bool)> = (0..500)
        .map(|_| {
            let active = rng.gen_bool(0.2);
            let s = (rng.gen_range(0..40) as f64) + if active { 8.0 } else { 0.0 };
            (s, active)
        })
        .collect();
    let pos: Vec<f64> = entries.iter().filter(|e| e.1).map(|e| e.0).collect();
    let neg: Vec<f64> = entries.iter().filter(|e| !e.1).map(|e| e.0).collect();
    let draws = 100_000;
    let mut wins = 0.0;
    for _ in 0..draws {
        let (p, n) = (pos[rng.gen_range(0..pos.len())], neg[rng.gen_range(0..neg.len())]);
        wins += if p > n {
            1.0
        } else if p == n {
            0.5
        } else {
            0.0
        };
    }
    let exact = aurascreen::metrics::auroc(&entries).unwrap();
    assert!((exact - wins / draws as f64).abs() < 0.01, "{exact} vs {}", wins / draws as f64);
}
