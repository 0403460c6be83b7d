//! Sphere-exclusion clustering of fingerprints and the centroid prior index
//! that feeds teacher embeddings to the student scorer.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, Write};

use thiserror::Error;

use crate::fingerprint::{fnv1a, tanimoto_unchecked, Fingerprint, FingerprintError};
use crate::par;

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("cannot cluster an empty library")]
    EmptyLibrary,
    #[error("similarity threshold must lie in (0, 1], got {0}")]
    InvalidThreshold(f64),
    #[error("fingerprint widths differ")]
    WidthMismatch,
    #[error("no teacher embedding for centroid {0}")]
    MissingEmbedding(String),
    #[error("prior embeddings have inconsistent dimension ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("prior index is empty")]
    EmptyIndex,
    #[error("malformed prior index: {0}")]
    Malformed(String),
    #[error(transparent)]
    Fingerprint(#[from] FingerprintError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub const DEFAULT_THRESHOLD: f64 = 0.6;
pub const DEFAULT_COMPOUNDS_PER_CENTER: usize = 100_000;
pub const DEFAULT_MAX_CLUSTER_LIBRARY: usize = 200_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cluster {
    /// Sorted by id.
    pub member_ids: Vec<String>,
    pub centroid_id: String,
    pub seed_id: String,
}

impl Cluster {
    pub fn len(&self) -> usize {
        self.member_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.member_ids.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterOptions {
    pub threshold: f64,
    /// Libraries above this size are clustered on a deterministic sample;
    /// the remaining compounds join the most similar seed above threshold or
    /// become singletons.
    pub max_library: usize,
    pub sample_seed: u64,
    pub workers: usize,
}

impl Default for ClusterOptions {
    fn default() -> Self {
        ClusterOptions {
            threshold: DEFAULT_THRESHOLD,
            max_library: DEFAULT_MAX_CLUSTER_LIBRARY,
            sample_seed: 0,
            workers: 1,
        }
    }
}

/// Clusters with the default options apart from the threshold.
pub fn butina_cluster(fps: &BTreeMap<String, Fingerprint>, threshold: f64) -> Result<Vec<Cluster>, ClusterError> {
    butina_cluster_with(fps, &ClusterOptions { threshold, ..ClusterOptions::default() })
}

pub fn butina_cluster_with(
    fps: &BTreeMap<String, Fingerprint>,
    opts: &ClusterOptions,
) -> Result<Vec<Cluster>, ClusterError> {
    if fps.is_empty() {
        return Err(ClusterError::EmptyLibrary);
    }
    if !(opts.threshold > 0.0 && opts.threshold <= 1.0) {
        return Err(ClusterError::InvalidThreshold(opts.threshold));
    }
    let entries: Vec<(&String, &Fingerprint)> = fps.iter().collect();
    let width = entries[0].1.width();
    if entries.iter().any(|(_, f)| f.width() != width) {
        return Err(ClusterError::WidthMismatch);
    }

    let (core, rest): (Vec<usize>, Vec<usize>) = if entries.len() > opts.max_library.max(1) {
        let mut order: Vec<(u64, usize)> = (0..entries.len())
            .map(|i| {
                let mut key = opts.sample_seed.to_le_bytes().to_vec();
                key.extend_from_slice(entries[i].0.as_bytes());
                (fnv1a(&key), i)
            })
            .collect();
        order.sort_unstable();
        let mut core: Vec<usize> = order[..opts.max_library.max(1)].iter().map(|&(_, i)| i).collect();
        let mut rest: Vec<usize> = order[opts.max_library.max(1)..].iter().map(|&(_, i)| i).collect();
        core.sort_unstable();
        rest.sort_unstable();
        (core, rest)
    } else {
        ((0..entries.len()).collect(), Vec::new())
    };

    let core_fps: Vec<&Fingerprint> = core.iter().map(|&i| entries[i].1).collect();
    let groups = sphere_exclusion(&core_fps, opts.threshold, opts.workers);
    let mut members: Vec<Vec<usize>> = groups.iter().map(|g| g.iter().map(|&k| core[k]).collect()).collect();
    let seeds: Vec<usize> = members.iter().map(|m| m[0]).collect();

    if !rest.is_empty() {
        let joins = par::map(&rest, opts.workers, |&i| {
            let mut best: Option<(f64, usize)> = None;
            for (c, &s) in seeds.iter().enumerate() {
                let t = tanimoto_unchecked(entries[i].1, entries[s].1);
                // Entry indices follow id order, so ties resolve to the smallest seed id.
                if t > opts.threshold && best.is_none_or(|(bt, bc)| t > bt || (t == bt && s < seeds[bc])) {
                    best = Some((t, c));
                }
            }
            best.map(|(_, c)| c)
        });
        for (&i, join) in rest.iter().zip(joins) {
            match join {
                Some(c) => members[c].push(i),
                None => members.push(vec![i]),
            }
        }
    }

    let clusters = par::map(&members, opts.workers, |m| {
        let seed = m[0];
        let mut sorted = m.clone();
        sorted.sort_unstable();
        let centroid = centroid_of(&sorted, &entries);
        Cluster {
            member_ids: sorted.iter().map(|&i| entries[i].0.clone()).collect(),
            centroid_id: entries[centroid].0.clone(),
            seed_id: entries[seed].0.clone(),
        }
    });
    Ok(clusters)
}

/// Returns groups of indices with the seed first.
fn sphere_exclusion(fps: &[&Fingerprint], threshold: f64, workers: usize) -> Vec<Vec<usize>> {
    let n = fps.len();
    let upper = par::map_indexed(n, workers, |i| {
        ((i + 1)..n).filter(|&j| tanimoto_unchecked(fps[i], fps[j]) > threshold).collect::<Vec<usize>>()
    });
    let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, row) in upper.iter().enumerate() {
        for &j in row {
            neighbors[i].push(j);
            neighbors[j].push(i);
        }
    }
    drop(upper);

    let mut count: Vec<usize> = neighbors.iter().map(Vec::len).collect();
    let mut queue: BTreeSet<(Reverse<usize>, usize)> = (0..n).map(|i| (Reverse(count[i]), i)).collect();
    let mut assigned = vec![false; n];
    let mut groups = Vec::new();
    while let Some(&(_, seed)) = queue.iter().next() {
        let mut group = vec![seed];
        group.extend(neighbors[seed].iter().copied().filter(|&j| !assigned[j]));
        group[1..].sort_unstable();
        for &v in &group {
            assigned[v] = true;
            queue.remove(&(Reverse(count[v]), v));
        }
        for &v in &group {
            for &u in &neighbors[v] {
                if !assigned[u] {
                    queue.remove(&(Reverse(count[u]), u));
                    count[u] -= 1;
                    queue.insert((Reverse(count[u]), u));
                }
            }
        }
        groups.push(group);
    }
    groups
}

/// Member with the highest mean similarity to the others; `members` is sorted
/// by id so the first maximum wins ties.
fn centroid_of(members: &[usize], entries: &[(&String, &Fingerprint)]) -> usize {
    if members.len() <= 2 {
        return members[0];
    }
    let mut best = (f64::NEG_INFINITY, members[0]);
    for &a in members {
        let total: f64 =
            members.iter().filter(|&&b| b != a).map(|&b| tanimoto_unchecked(entries[a].1, entries[b].1)).sum();
        if total > best.0 {
            best = (total, a);
        }
    }
    best.1
}

#[derive(Debug, Clone, PartialEq)]
pub struct Centroid {
    pub id: String,
    pub fingerprint: Fingerprint,
    pub embedding: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CentroidIndex {
    pub dim: usize,
    pub budget: usize,
    pub centroids: Vec<Centroid>,
}

pub fn centroid_budget(library_size: usize, compounds_per_center: usize) -> usize {
    library_size.div_ceil(compounds_per_center.max(1)).max(1)
}

pub fn build_prior_index(
    clusters: &[Cluster],
    fps: &BTreeMap<String, Fingerprint>,
    embeddings: &HashMap<String, Vec<f64>>,
    compounds_per_center: usize,
    library_size: usize,
) -> Result<CentroidIndex, ClusterError> {
    let budget = centroid_budget(library_size, compounds_per_center);
    let mut ranked: Vec<&Cluster> = clusters.iter().collect();
    ranked.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.centroid_id.cmp(&b.centroid_id)));
    let mut centroids = Vec::new();
    let mut dim = None;
    for c in ranked.into_iter().take(budget) {
        let emb =
            embeddings.get(&c.centroid_id).ok_or_else(|| ClusterError::MissingEmbedding(c.centroid_id.clone()))?;
        let fp = fps.get(&c.centroid_id).ok_or_else(|| ClusterError::MissingEmbedding(c.centroid_id.clone()))?;
        match dim {
            None => dim = Some(emb.len()),
            Some(d) if d != emb.len() => return Err(ClusterError::DimensionMismatch(d, emb.len())),
            _ => {}
        }
        centroids.push(Centroid { id: c.centroid_id.clone(), fingerprint: fp.clone(), embedding: emb.clone() });
    }
    let dim = dim.ok_or(ClusterError::EmptyIndex)?;
    Ok(CentroidIndex { dim, budget, centroids })
}

impl CentroidIndex {
    /// Position of the most similar centroid; ties go to the smallest id.
    pub fn nearest_position(&self, fp: &Fingerprint) -> Result<usize, ClusterError> {
        let mut best: Option<(f64, usize)> = None;
        for (k, c) in self.centroids.iter().enumerate() {
            if c.fingerprint.width() != fp.width() {
                return Err(ClusterError::WidthMismatch);
            }
            let t = tanimoto_unchecked(fp, &c.fingerprint);
            if best.is_none_or(|(bt, bk)| t > bt || (t == bt && c.id < self.centroids[bk].id)) {
                best = Some((t, k));
            }
        }
        best.map(|(_, k)| k).ok_or(ClusterError::EmptyIndex)
    }

    pub fn nearest(&self, fp: &Fingerprint) -> Result<&Centroid, ClusterError> {
        Ok(&self.centroids[self.nearest_position(fp)?])
    }
}

pub fn nearest_centroid<'a>(fp: &Fingerprint, index: &'a CentroidIndex) -> Result<(&'a str, &'a [f64]), ClusterError> {
    let c = index.nearest(fp)?;
    Ok((&c.id, &c.embedding))
}

pub fn write_prior_index<W: Write>(mut w: W, index: &CentroidIndex) -> Result<(), ClusterError> {
    writeln!(w, "dim={} count={}", index.dim, index.centroids.len())?;
    for c in &index.centroids {
        let floats: Vec<String> = c.embedding.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}\t{}\t{}", c.id, c.fingerprint.to_hex(), floats.join(" "))?;
    }
    Ok(())
}

/// Reads a prior index. The budget is not stored, so it is set to the centroid count.
pub fn read_prior_index<R: BufRead>(r: R) -> Result<CentroidIndex, ClusterError> {
    let mut lines = r.lines();
    let header = lines.next().ok_or_else(|| ClusterError::Malformed("missing header".into()))??;
    let mut dim = None;
    let mut count = None;
    for part in header.split_whitespace() {
        match part.split_once('=') {
            Some(("dim", v)) => dim = v.parse::<usize>().ok(),
            Some(("count", v)) => count = v.parse::<usize>().ok(),
            _ => return Err(ClusterError::Malformed(format!("bad header field {part:?}"))),
        }
    }
    let (dim, count) = match (dim, count) {
        (Some(d), Some(c)) => (d, c),
        _ => return Err(ClusterError::Malformed("header must be `dim=<D> count=<K>`".into())),
    };
    let mut centroids = Vec::with_capacity(count);
    for (n, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(ClusterError::Malformed(format!("line {}: expected 3 tab-separated fields", n + 2)));
        }
        let embedding: Vec<f64> = fields[2]
            .split_whitespace()
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|e| ClusterError::Malformed(format!("line {}: {e}", n + 2)))?;
        if embedding.len() != dim {
            return Err(ClusterError::DimensionMismatch(dim, embedding.len()));
        }
        centroids.push(Centroid {
            id: fields[0].to_string(),
            fingerprint: Fingerprint::from_hex(fields[1])?,
            embedding,
        });
    }
    if centroids.len() != count {
        return Err(ClusterError::Malformed(format!("header says {count} centroids, found {}", centroids.len())));
    }
    if centroids.is_empty() {
        return Err(ClusterError::EmptyIndex);
    }
    Ok(CentroidIndex { dim, budget: count, centroids })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fp(bits: &[usize]) -> Fingerprint {
        Fingerprint::from_bits(64, bits.iter().copied()).unwrap()
    }

    fn map(items: &[(&str, &[usize])]) -> BTreeMap<String, Fingerprint> {
        items.iter().map(|(id, b)| (id.to_string(), fp(b))).collect()
    }

    #[test]
    fn identical_and_disjoint() {
        let same = map(&[("a", &[1, 2]), ("b", &[1, 2]), ("c", &[1, 2])]);
        let c = butina_cluster(&same, 0.6).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].member_ids, vec!["a", "b", "c"]);
        assert_eq!(c[0].centroid_id, "a");
        let disjoint = map(&[("a", &[1]), ("b", &[2]), ("c", &[3])]);
        assert_eq!(butina_cluster(&disjoint, 0.6).unwrap().len(), 3);
        assert!(matches!(butina_cluster(&BTreeMap::new(), 0.6), Err(ClusterError::EmptyLibrary)));
        assert!(matches!(butina_cluster(&same, 0.0), Err(ClusterError::InvalidThreshold(_))));
    }

    #[test]
    fn three_plus_two() {
        let lib = map(&[
            ("a", &[0, 1, 2, 3, 4]),
            ("b", &[0, 1, 2, 3, 5]),
            ("c", &[0, 1, 2, 3, 6]),
            ("d", &[20, 21, 22]),
            ("e", &[20, 21, 22, 23]),
        ]);
        let c = butina_cluster(&lib, 0.6).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c[0].member_ids, vec!["a", "b", "c"]);
        assert_eq!(c[1].member_ids, vec!["d", "e"]);
    }

    #[test]
    fn budget_and_selection() {
        assert_eq!(centroid_budget(50_000, 100_000), 1);
        assert_eq!(centroid_budget(250_000, 100_000), 3);
        assert_eq!(centroid_budget(0, 100_000), 1);
        let mk = |id: &str, n: usize| Cluster {
            member_ids: (0..n).map(|k| format!("{id}{k}")).collect(),
            centroid_id: id.to_string(),
            seed_id: id.to_string(),
        };
        let clusters = vec![mk("p", 2), mk("q", 8), mk("r", 10), mk("m", 8), mk("s", 1)];
        let fps: BTreeMap<String, Fingerprint> =
            ["p", "q", "r", "m", "s"].iter().map(|s| (s.to_string(), fp(&[1]))).collect();
        let emb: HashMap<String, Vec<f64>> = fps.keys().map(|k| (k.clone(), vec![0.5, 1.0])).collect();
        let idx = build_prior_index(&clusters, &fps, &emb, 100_000, 150_000).unwrap();
        let ids: Vec<&str> = idx.centroids.iter().map(|c| c.id.as_str()).collect();
        assert_eq!(ids, vec!["r", "m"]);
        let mut missing = emb.clone();
        missing.remove("r");
        assert!(
            matches!(build_prior_index(&clusters, &fps, &missing, 100_000, 10), Err(ClusterError::MissingEmbedding(id)) if id == "r")
        );
    }

    #[test]
    fn nearest_and_round_trip() {
        let idx = CentroidIndex {
            dim: 2,
            budget: 3,
            centroids: vec![
                Centroid { id: "z".into(), fingerprint: fp(&[1, 2, 3]), embedding: vec![1.0, 2.0] },
                Centroid { id: "y".into(), fingerprint: fp(&[1, 2, 4]), embedding: vec![0.1, -3.5e-7] },
                Centroid { id: "x".into(), fingerprint: fp(&[9]), embedding: vec![0.0, 1.0 / 3.0] },
            ],
        };
        assert_eq!(nearest_centroid(&fp(&[1, 2, 3]), &idx).unwrap().0, "z");
        assert_eq!(nearest_centroid(&fp(&[1, 2]), &idx).unwrap().0, "y");
        assert_eq!(nearest_centroid(&fp(&[9, 10]), &idx).unwrap().0, "x");
        let mut buf = Vec::new();
        write_prior_index(&mut buf, &idx).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("dim=2 count=3\nz\t"));
        let back = read_prior_index(&buf[..]).unwrap();
        assert_eq!(back.centroids, idx.centroids);
        assert!(read_prior_index(&b"dim=2 count=2\nz\t00\t1 2\n"[..]).is_err());
    }

    #[test]
    fn sampling_keeps_a_partition() {
        let lib: BTreeMap<String, Fingerprint> =
            (0..60).map(|i| (format!("c{i:03}"), fp(&[i % 7, 7 + i % 5, 20 + i % 3]))).collect();
        let opts = ClusterOptions { max_library: 20, ..ClusterOptions::default() };
        let clusters = butina_cluster_with(&lib, &opts).unwrap();
        let mut all: Vec<&String> = clusters.iter().flat_map(|c| &c.member_ids).collect();
        all.sort();
        assert_eq!(all, lib.keys().collect::<Vec<_>>());
        for c in &clusters {
            for m in &c.member_ids {
                if *m != c.seed_id {
                    assert!(tanimoto_unchecked(&lib[m], &lib[&c.seed_id]) > 0.6);
                }
            }
        }
    }
}
