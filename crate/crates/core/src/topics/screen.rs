//! Hierarchical clustering of category centroids to bound the topic count.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Linkage {
    #[default]
    Average,
    Single,
    Complete,
}

impl std::str::FromStr for Linkage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "average" => Ok(Self::Average),
            "single" => Ok(Self::Single),
            "complete" => Ok(Self::Complete),
            other => Err(Error::invalid(format!("unknown linkage {other:?}"))),
        }
    }
}

/// Cosine distance `1 - cos(a, b)`. Two zero vectors are identical (0); a zero
/// vector against a nonzero one is maximally distant (1).
pub fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    match (na > 0.0, nb > 0.0) {
        (false, false) => 0.0,
        (true, true) => (1.0 - dot / (na * nb)).max(0.0),
        _ => 1.0,
    }
}

/// Agglomerative clustering, merging the closest pair while its linkage
/// distance is at most `threshold`. Returns a cluster id per input, numbered
/// by first appearance.
pub fn cluster_centroids(centroids: &[Vec<f64>], linkage: Linkage, threshold: f64) -> Vec<usize> {
    let n = centroids.len();
    let mut dist = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let d = cosine_distance(&centroids[i], &centroids[j]);
            dist[i][j] = d;
            dist[j][i] = d;
        }
    }
    let mut members: Vec<Option<Vec<usize>>> = (0..n).map(|i| Some(vec![i])).collect();
    loop {
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..n {
            if members[i].is_none() {
                continue;
            }
            for j in i + 1..n {
                if members[j].is_none() {
                    continue;
                }
                if best.is_none_or(|(_, _, d)| dist[i][j] < d) {
                    best = Some((i, j, dist[i][j]));
                }
            }
        }
        let Some((i, j, d)) = best else { break };
        if d > threshold {
            break;
        }
        let (ni, nj) = (members[i].as_ref().unwrap().len() as f64, members[j].as_ref().unwrap().len() as f64);
        for m in 0..n {
            if m == i || m == j || members[m].is_none() {
                continue;
            }
            // Lance-Williams update
            let merged = match linkage {
                Linkage::Average => (ni * dist[i][m] + nj * dist[j][m]) / (ni + nj),
                Linkage::Single => dist[i][m].min(dist[j][m]),
                Linkage::Complete => dist[i][m].max(dist[j][m]),
            };
            dist[i][m] = merged;
            dist[m][i] = merged;
        }
        let moved = members[j].take().unwrap();
        members[i].as_mut().unwrap().extend(moved);
    }
    let mut labels = vec![usize::MAX; n];
    let mut next = 0;
    for i in 0..n {
        if labels[i] != usize::MAX {
            continue;
        }
        let group = members.iter().flatten().find(|g| g.contains(&i)).unwrap();
        for m in group {
            labels[*m] = next;
        }
        next += 1;
    }
    labels
}

/// Number of clusters left at `threshold`; the recommended upper bound on K.
/// Fewer than two centroids are returned as-is.
pub fn screen_topic_count(centroids: &[Vec<f64>], linkage: Linkage, threshold: f64) -> usize {
    if centroids.len() < 2 {
        return centroids.len();
    }
    cluster_centroids(centroids, linkage, threshold).into_iter().max().map_or(0, |m| m + 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Independent average linkage: recompute every cluster-pair mean from the
    /// raw pairwise distances at each step.
    fn brute_force_average(centroids: &[Vec<f64>], threshold: f64) -> usize {
        let mut clusters: Vec<Vec<usize>> = (0..centroids.len()).map(|i| vec![i]).collect();
        loop {
            let mut best: Option<(usize, usize, f64)> = None;
            for a in 0..clusters.len() {
                for b in a + 1..clusters.len() {
                    let mut sum = 0.0;
                    for x in &clusters[a] {
                        for y in &clusters[b] {
                            sum += cosine_distance(&centroids[*x], &centroids[*y]);
                        }
                    }
                    let d = sum / (clusters[a].len() * clusters[b].len()) as f64;
                    if best.is_none_or(|(_, _, bd)| d < bd - 1e-12) {
                        best = Some((a, b, d));
                    }
                }
            }
            match best {
                Some((a, b, d)) if d <= threshold => {
                    let moved = clusters.remove(b);
                    clusters[a].extend(moved);
                }
                _ => return clusters.len(),
            }
        }
    }

    #[test]
    fn identical_centroids_form_one_cluster() {
        let c = vec![vec![1.0, 2.0, 0.0]; 5];
        assert_eq!(screen_topic_count(&c, Linkage::Average, 0.1), 1);
    }

    #[test]
    fn two_orthogonal_groups() {
        let c = vec![
            vec![1.0, 0.1, 0.0, 0.0],
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.9, 0.2, 0.0, 0.0],
            vec![0.0, 0.0, 1.0, 0.1],
            vec![0.0, 0.0, 1.0, 0.0],
        ];
        // intra-group distances are below 0.05, inter-group distances are 1
        assert_eq!(screen_topic_count(&c, Linkage::Average, 0.5), 2);
        assert_eq!(brute_force_average(&c, 0.5), 2);
        let labels = cluster_centroids(&c, Linkage::Average, 0.5);
        assert_eq!(labels, [0, 0, 0, 1, 1]);
    }

    #[test]
    fn degenerate_inputs() {
        assert_eq!(screen_topic_count(&[], Linkage::Average, 0.5), 0);
        assert_eq!(screen_topic_count(&[vec![1.0]], Linkage::Average, 0.5), 1);
        assert_eq!(cosine_distance(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
        assert_eq!(cosine_distance(&[0.0, 0.0], &[1.0, 0.0]), 1.0);
    }

    #[test]
    fn threshold_extremes() {
        let c = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]];
        assert_eq!(screen_topic_count(&c, Linkage::Average, 1.0), 1);
        assert_eq!(screen_topic_count(&c, Linkage::Average, -1.0), 3);
        assert_eq!(screen_topic_count(&c, Linkage::Single, 0.3), 1);
        assert_eq!(screen_topic_count(&c, Linkage::Complete, 0.3), 2);
    }

    proptest! {
        #[test]
        fn average_linkage_matches_brute_force(
            c in proptest::collection::vec(proptest::collection::vec(0.0f64..1.0, 4), 2..12),
            threshold in 0.0f64..0.6,
        ) {
            prop_assert_eq!(
                screen_topic_count(&c, Linkage::Average, threshold),
                brute_force_average(&c, threshold)
            );
        }
    }
}
