use aurascreen::chem::parse_smiles;
use aurascreen::harness::train::group_specs;
use aurascreen::harness::{
    generate_world, train_head_dpo, train_student, HeadTrainConfig, StudentExample, StudentTrainConfig, WorldConfig,
};
use aurascreen::model::optim::OptimizerConfig;
use aurascreen::model::{Student, StudentConfig, StudentInput, Teacher, TeacherConfig, TokenReps};
use aurascreen::sampler::build_dpo_groups;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn noise_free_world_is_fit_and_block_means_decrease() {
    let w = generate_world(WorldConfig { size: 1000, noise: 0.0, seed: 3, ..WorldConfig::default() });
    let examples: Vec<StudentExample> = (0..w.len())
        .map(|i| StudentExample {
            fp: w.fingerprints[i].clone(),
            prior: vec![0.0; 16],
            target_hidden: None,
            target_score: w.labels[i],
        })
        .collect();
    let mut s = Student::new(StudentConfig::default(), &mut ChaCha8Rng::seed_from_u64(1));
    let cfg = StudentTrainConfig { epochs: 100, ..StudentTrainConfig::default() };
    let r = train_student(&mut s, &w.protein, &examples, &cfg).unwrap();

    let mse = examples
        .iter()
        .map(|e| {
            let inp = StudentInput {
                fp: e.fp.clone(),
                protein_embedding: w.protein.clone(),
                prior_embedding: e.prior.clone(),
            };
            (s.apply(&inp).unwrap().score - e.target_score).powi(2)
        })
        .sum::<f64>()
        / examples.len() as f64;
    assert!(mse < 0.05, "training mse {mse}");

    let blocks: Vec<f64> = r.curve[1..].chunks(10).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect();
    assert!(blocks.windows(2).all(|p| p[1] < p[0]), "{blocks:?}");
}

#[test]
fn pairwise_preferences_from_planted_scores_are_learned() {
    let w = generate_world(WorldConfig { size: 200, noise: 0.0, seed: 8, ..WorldConfig::default() });
    let idx: Vec<usize> = (0..60).collect();
    let records = w.activity_records(&idx);
    let groups = group_specs(&build_dpo_groups(&records, 2, 10.0).unwrap(), 1.0);
    assert_eq!(groups.len(), 30);

    let teacher_cfg = TeacherConfig::default().with_protein_dim(w.protein.len());
    let mut teacher = Teacher::new(teacher_cfg).unwrap();
    let inputs: Vec<TokenReps> = idx
        .iter()
        .map(|&i| teacher.featurizer.featurize(&parse_smiles(&w.records[i].smiles).unwrap(), &w.protein).unwrap())
        .collect();
    let cfg = HeadTrainConfig {
        epochs: 150,
        lr: 3e-3,
        optimizer: OptimizerConfig::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 },
        ..HeadTrainConfig::default()
    };
    let r = train_head_dpo(&mut teacher, &inputs, &groups, &cfg).unwrap();
    assert!(r.final_metric > 0.9, "mean P = {} (from {})", r.final_metric, r.initial_metric);

    let mut again = Teacher::new(teacher_cfg).unwrap();
    assert_eq!(train_head_dpo(&mut again, &inputs, &groups, &cfg).unwrap().curve, r.curve);
}
