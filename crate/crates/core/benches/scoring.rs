// Stage-1 student scoring, sequential against the rayon pool.
// Without the `parallel` feature both rows run on one thread.

use std::collections::{BTreeMap, HashMap};
use std::hint::black_box;

use aurascreen::cluster::{build_prior_index, butina_cluster};
use aurascreen::harness::{generate_world, WorldConfig};
use aurascreen::model::{Student, StudentConfig, Teacher, TeacherConfig};
use aurascreen::screening::{prepare_compounds, stage1_scores};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn stage1(c: &mut Criterion) {
    let world = generate_world(WorldConfig { size: 4000, seed: 3, ..WorldConfig::default() });
    let (compounds, _) = prepare_compounds(&world.records, world.config.fp_width, 1);
    let sample: BTreeMap<_, _> = compounds.iter().take(500).map(|c| (c.id.clone(), c.fp.clone())).collect();
    let clusters = butina_cluster(&sample, 0.6).unwrap();
    let teacher = Teacher::new(TeacherConfig::default().with_protein_dim(world.protein.len())).unwrap();
    let by_id: HashMap<_, _> = compounds.iter().map(|c| (c.id.as_str(), c)).collect();
    let embeddings: HashMap<String, Vec<f64>> = clusters
        .iter()
        .map(|cl| {
            (cl.centroid_id.clone(), teacher.embedding(&by_id[cl.centroid_id.as_str()].mol, &world.protein).unwrap())
        })
        .collect();
    let index = build_prior_index(&clusters, &sample, &embeddings, 1000, compounds.len()).unwrap();
    let scfg =
        StudentConfig { fp_width: world.config.fp_width, d_protein: world.protein.len(), ..StudentConfig::default() };
    let student = Student::new(scfg, &mut ChaCha8Rng::seed_from_u64(1));

    let mut group = c.benchmark_group("stage1_scores");
    group.sample_size(10);
    group.throughput(Throughput::Elements(compounds.len() as u64));
    for (label, workers) in [("sequential", 1usize), ("pool", 0)] {
        group.bench_with_input(BenchmarkId::from_parameter(label), &workers, |b, &w| {
            b.iter(|| black_box(stage1_scores(&compounds, &student, &world.protein, &index, w).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, stage1);
criterion_main!(benches);
