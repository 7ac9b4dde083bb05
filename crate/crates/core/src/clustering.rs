//! k-means over MRH signatures with L1 assignment and mean centroids.
//!
//! Seeds are taken at regular intervals through the (chronological) input, so
//! results are deterministic. Each returned centroid is the exact average of
//! its members and the objective never increases between recorded iterations.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ingest::save_signatures;
use crate::matching::d_raw;
use crate::signature::{average_signatures, MrhSignature};
use crate::{Error, Result};

pub const DEFAULT_MAX_ITER: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClusterMode {
    /// Cluster each video on its own.
    Single,
    /// Cluster all of a person's videos together.
    Multiple,
}

impl fmt::Display for ClusterMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClusterMode::Single => "single",
            ClusterMode::Multiple => "multiple",
        })
    }
}

impl FromStr for ClusterMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(ClusterMode::Single),
            "multiple" => Ok(ClusterMode::Multiple),
            other => Err(Error::InvalidParameter(format!("unknown cluster mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    pub k: usize,
    pub centroids: Vec<MrhSignature>,
    /// Centroid index of each input signature.
    pub assignments: Vec<usize>,
    /// Sum of raw L1 distances from each signature to its centroid.
    pub objective: f64,
    /// Assignment passes performed, at most `max_iter`.
    pub iterations: usize,
    /// Objective after each accepted pass; strictly decreasing.
    pub objective_trace: Vec<f64>,
}

/// JSON sidecar stored next to a centroid signature file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSidecar {
    pub k: usize,
    pub assignments: Vec<usize>,
    pub objective: f64,
    pub iterations: usize,
    pub objective_trace: Vec<f64>,
}

impl ClusterModel {
    pub fn sidecar(&self) -> ClusterSidecar {
        ClusterSidecar {
            k: self.k,
            assignments: self.assignments.clone(),
            objective: self.objective,
            iterations: self.iterations,
            objective_trace: self.objective_trace.clone(),
        }
    }

    /// Writes centroids to `<stem>.mrh` and the sidecar to `<stem>.json`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        save_signatures(dir.join(format!("{stem}.mrh")), &self.centroids)?;
        let json_path = dir.join(format!("{stem}.json"));
        let text = serde_json::to_string_pretty(&self.sidecar())?;
        fs::write(&json_path, text).map_err(|e| Error::io(json_path, e))
    }
}

/// Seed positions `floor(i * n / k)` for `i in 0..k`.
pub fn seed_indices(n: usize, k: usize) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    if k > n {
        return Err(Error::TooManyClusters { k, available: n });
    }
    Ok((0..k).map(|i| i * n / k).collect())
}

pub fn seed_clusters(signatures: &[MrhSignature], k: usize) -> Result<Vec<MrhSignature>> {
    Ok(seed_indices(signatures.len(), k)?
        .into_iter()
        .map(|i| signatures[i].clone())
        .collect())
}

fn nearest(sig: &MrhSignature, centroids: &[MrhSignature]) -> Result<(usize, f64)> {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = d_raw(sig, c)?;
        // strict comparison keeps ties on the lowest index
        if d < best.1 {
            best = (i, d);
        }
    }
    Ok(best)
}

/// Nearest-centroid labels plus each signature's distance to its centroid.
fn assign(signatures: &[MrhSignature], centroids: &[MrhSignature]) -> Result<(Vec<usize>, Vec<f64>)> {
    let pairs = signatures
        .par_iter()
        .map(|s| nearest(s, centroids))
        .collect::<Result<Vec<_>>>()?;
    Ok(pairs.into_iter().unzip())
}

/// Moves the farthest signature of a multi-member cluster into each empty cluster.
fn repair_empty(assignments: &mut [usize], distances: &mut [f64], k: usize) {
    loop {
        let mut sizes = vec![0usize; k];
        for &a in assignments.iter() {
            sizes[a] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return;
        };
        let mut donor: Option<usize> = None;
        for (j, &a) in assignments.iter().enumerate() {
            if sizes[a] > 1 && donor.is_none_or(|d| distances[j] > distances[d]) {
                donor = Some(j);
            }
        }
        // k <= n guarantees a multi-member cluster while one is empty
        let j = donor.expect("a cluster with at least two members");
        assignments[j] = empty;
        distances[j] = 0.0;
    }
}

fn centroids_of(signatures: &[MrhSignature], assignments: &[usize], k: usize) -> Result<Vec<MrhSignature>> {
    let mut members: Vec<Vec<&MrhSignature>> = vec![Vec::new(); k];
    for (s, &a) in signatures.iter().zip(assignments) {
        members[a].push(s);
    }
    members
        .into_iter()
        .map(|m| {
            let owned: Vec<MrhSignature> = m.into_iter().cloned().collect();
            average_signatures(&owned)
        })
        .collect()
}

fn objective(signatures: &[MrhSignature], assignments: &[usize], centroids: &[MrhSignature]) -> Result<f64> {
    let mut total = 0.0;
    for (s, &a) in signatures.iter().zip(assignments) {
        total += d_raw(s, &centroids[a])?;
    }
    Ok(total)
}

/// Lloyd iterations under L1 assignment, stopping when assignments settle,
/// the objective stops decreasing, or `max_iter` passes have run.
pub fn kmeans_cluster(signatures: &[MrhSignature], k: usize, max_iter: usize) -> Result<ClusterModel> {
    if max_iter == 0 {
        return Err(Error::InvalidParameter("max_iter must be at least 1".into()));
    }
    let seeds = seed_clusters(signatures, k)?;
    let (mut assignments, mut dist) = assign(signatures, &seeds)?;
    repair_empty(&mut assignments, &mut dist, k);
    let mut centroids = centroids_of(signatures, &assignments, k)?;
    let mut obj = objective(signatures, &assignments, &centroids)?;
    let mut trace = vec![obj];
    let mut iterations = 1;

    while iterations < max_iter {
        let (mut next, mut next_dist) = assign(signatures, &centroids)?;
        repair_empty(&mut next, &mut next_dist, k);
        iterations += 1;
        if next == assignments {
            break;
        }
        let next_centroids = centroids_of(signatures, &next, k)?;
        let next_obj = objective(signatures, &next, &next_centroids)?;
        // mean centroids are not L1-optimal, so descent is enforced here
        if next_obj >= obj {
            break;
        }
        assignments = next;
        centroids = next_centroids;
        obj = next_obj;
        trace.push(obj);
    }

    Ok(ClusterModel {
        k,
        centroids,
        assignments,
        objective: obj,
        iterations,
        objective_trace: trace,
    })
}

/// Gallery representatives for one person's videos (each in chronological order).
pub fn cluster_gallery(
    videos: &[Vec<MrhSignature>],
    k: usize,
    mode: ClusterMode,
    max_iter: usize,
) -> Result<Vec<MrhSignature>> {
    if videos.is_empty() {
        return Err(Error::Empty("gallery videos"));
    }
    if videos.iter().any(Vec::is_empty) {
        return Err(Error::Empty("gallery video signatures"));
    }
    match mode {
        ClusterMode::Single => {
            let mut reps = Vec::with_capacity(videos.len() * k);
            for v in videos {
                reps.extend(kmeans_cluster(v, k, max_iter)?.centroids);
            }
            Ok(reps)
        }
        ClusterMode::Multiple => {
            let all: Vec<MrhSignature> = videos.iter().flatten().cloned().collect();
            Ok(kmeans_cluster(&all, k, max_iter)?.centroids)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signature::REGION_COUNT;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sig(rng: &mut ChaCha8Rng, g: usize) -> MrhSignature {
        let mut values = Vec::new();
        for _ in 0..REGION_COUNT {
            let raw: Vec<f64> = (0..g).map(|_| rng.random::<f64>()).collect();
            let s: f64 = raw.iter().sum();
            values.extend(raw.iter().map(|v| v / s));
        }
        MrhSignature::from_values(g, values).unwrap()
    }

    fn random_set(seed: u64, n: usize, g: usize) -> Vec<MrhSignature> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| random_sig(&mut rng, g)).collect()
    }

    #[test]
    fn seeding_examples() {
        assert_eq!(seed_indices(10, 2).unwrap(), vec![0, 5]);
        assert_eq!(seed_indices(7, 3).unwrap(), vec![0, 2, 4]);
        assert_eq!(seed_indices(5, 5).unwrap(), vec![0, 1, 2, 3, 4]);
        assert!(matches!(seed_indices(3, 4), Err(Error::TooManyClusters { .. })));
        assert!(seed_indices(3, 0).is_err());
    }

    #[test]
    fn k_one_is_the_plain_average() {
        let sigs = random_set(1, 9, 4);
        let model = kmeans_cluster(&sigs, 1, DEFAULT_MAX_ITER).unwrap();
        assert_eq!(model.centroids, vec![average_signatures(&sigs).unwrap()]);
        assert!(model.assignments.iter().all(|&a| a == 0));
    }

    #[test]
    fn two_identical_groups_separate_perfectly() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (a, b) = (random_sig(&mut rng, 3), random_sig(&mut rng, 3));
        let mut sigs = vec![a.clone(); 4];
        sigs.extend(vec![b.clone(); 6]);
        let model = kmeans_cluster(&sigs, 2, DEFAULT_MAX_ITER).unwrap();
        assert!(model.objective < 1e-12);
        let near = |x: &MrhSignature| {
            model.centroids.iter().any(|c| c.values().iter().zip(x.values()).all(|(p, q)| (p - q).abs() < 1e-15))
        };
        assert!(near(&a) && near(&b));
    }

    #[test]
    fn k_equal_n_reproduces_inputs() {
        let sigs = random_set(3, 6, 3);
        let model = kmeans_cluster(&sigs, 6, DEFAULT_MAX_ITER).unwrap();
        assert_eq!(model.centroids, sigs);
        assert_eq!(model.objective, 0.0);
    }

    #[test]
    fn duplicates_trigger_empty_cluster_repair() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_sig(&mut rng, 3);
        let b = random_sig(&mut rng, 3);
        let sigs = vec![a.clone(), a.clone(), a, b];
        let model = kmeans_cluster(&sigs, 3, DEFAULT_MAX_ITER).unwrap();
        let mut sizes = [0; 3];
        model.assignments.iter().for_each(|&x| sizes[x] += 1);
        assert!(sizes.iter().all(|&s| s >= 1));
    }

    #[test]
    fn beats_random_assignments() {
        let sigs = random_set(5, 12, 4);
        let model = kmeans_cluster(&sigs, 3, DEFAULT_MAX_ITER).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..1000 {
            // random assignment with every cluster populated
            let mut labels: Vec<usize> = (0..12).map(|i| i % 3).collect();
            for i in (1..12).rev() {
                labels.swap(i, rng.random_range(0..=i));
            }
            let cents = centroids_of(&sigs, &labels, 3).unwrap();
            let obj = objective(&sigs, &labels, &cents).unwrap();
            assert!(model.objective <= obj + 1e-12, "{} > {}", model.objective, obj);
        }
    }

    #[test]
    fn gallery_modes() {
        let videos: Vec<Vec<MrhSignature>> = (0..5).map(|v| random_set(10 + v, 6, 3)).collect();
        assert_eq!(cluster_gallery(&videos, 2, ClusterMode::Single, 20).unwrap().len(), 10);
        assert_eq!(cluster_gallery(&videos, 2, ClusterMode::Multiple, 20).unwrap().len(), 2);
        let one = vec![random_set(20, 7, 3)];
        assert_eq!(
            cluster_gallery(&one, 3, ClusterMode::Single, 20).unwrap(),
            cluster_gallery(&one, 3, ClusterMode::Multiple, 20).unwrap()
        );
        assert!(cluster_gallery(&videos, 7, ClusterMode::Single, 20).is_err());
        assert!(cluster_gallery(&videos, 30, ClusterMode::Multiple, 20).is_ok());
        assert!(cluster_gallery(&videos, 31, ClusterMode::Multiple, 20).is_err());
    }

    #[test]
    fn sidecar_serialises() {
        let model = kmeans_cluster(&random_set(6, 5, 2), 2, 20).unwrap();
        let json = serde_json::to_string(&model.sidecar()).unwrap();
        let back: ClusterSidecar = serde_json::from_str(&json).unwrap();
        assert_eq!(back, model.sidecar());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn model_contracts(seed in any::<u64>(), n in 1usize..25, k_frac in 0.0f64..1.0, max_iter in 1usize..25) {
            let sigs = random_set(seed, n, 3);
            let k = 1 + ((n - 1) as f64 * k_frac) as usize;
            let model = kmeans_cluster(&sigs, k, max_iter).unwrap();
            prop_assert!(model.iterations <= max_iter);
            prop_assert_eq!(model.centroids.len(), k);
            for w in model.objective_trace.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-9);
            }
            for (c, cent) in model.centroids.iter().enumerate() {
                let members: Vec<MrhSignature> = sigs.iter().zip(&model.assignments)
                    .filter(|(_, &a)| a == c).map(|(s, _)| s.clone()).collect();
                prop_assert!(!members.is_empty());
                let avg = average_signatures(&members).unwrap();
                for (x, y) in avg.values().iter().zip(cent.values()) {
                    prop_assert!((x - y).abs() < 1e-9);
                }
                for r in cent.regions() {
                    prop_assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                }
            }
            let direct = objective(&sigs, &model.assignments, &model.centroids).unwrap();
            prop_assert!((direct - model.objective).abs() < 1e-9);
            prop_assert_eq!(&model, &kmeans_cluster(&sigs, k, max_iter).unwrap());
        }
    }
}
