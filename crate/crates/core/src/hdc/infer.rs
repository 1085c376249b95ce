//! L1 nearest-class inference and the kNN-L1 baseline.

use serde::{Deserialize, Serialize};

use crate::crp::Hypervector;
use crate::error::{invalid, shape_err, Error, Result};

use super::memory::ClassMemory;

/// Outcome of classifying one query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub class_id: usize,
    pub distances: Vec<i64>,
    pub branch: usize,
}

fn gcd(a: u128, b: u128) -> u128 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Index of the smallest value, lowest index on ties.
pub fn argmin<T: PartialOrd + Copy>(values: &[T]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if best.is_none_or(|b| v < values[b]) {
            best = Some(i);
        }
    }
    best
}

/// Classifies `query` against the class table of `branch`.
///
/// Class `j` stores `C_j ≈ sum_j · Q_j / M_j` over `n_j` samples, i.e. the
/// class mean is `C_j · M_j / (Q_j · n_j)`. With `L = lcm_j(Q_j · n_j)` the
/// distance is `Σ_d |q_d · L − C_jd · M_j · L / (Q_j · n_j)|`: the L1 distance
/// from the query to each class mean, in the common unit `1/L`, computed
/// exactly in integers.
pub fn infer(query: &Hypervector, memory: &ClassMemory, branch: usize) -> Result<Prediction> {
    let table = memory.branch(branch)?;
    if query.dim() != memory.hv_dim() {
        return Err(shape_err!("query has {} entries, memory expects {}", query.dim(), memory.hv_dim()));
    }
    let overflow = || Error::Overflow("distance exceeds i64".into());
    let units: Vec<u128> = table.classes.iter().map(|c| c.scale_den as u128 * c.shots.max(1) as u128).collect();
    let lcm = units.iter().try_fold(1u128, |acc, &u| (acc / gcd(acc, u)).checked_mul(u)).ok_or_else(overflow)?;
    let lcm = i128::try_from(lcm).map_err(|_| overflow())?;

    let distances = table
        .classes
        .iter()
        .zip(&units)
        .map(|(c, &u)| {
            let factor = c.scale_num as i128 * (lcm / u as i128);
            let mut acc: i128 = 0;
            for (&q, &v) in query.values.iter().zip(&c.values) {
                acc += (q as i128 * lcm - v as i128 * factor).abs();
            }
            i64::try_from(acc).map_err(|_| overflow())
        })
        .collect::<Result<Vec<i64>>>()?;
    let class_id = argmin(&distances).expect("memory has at least two classes");
    Ok(Prediction { class_id, distances, branch })
}

/// 1-nearest-neighbour under L1 distance in feature space; the earliest
/// support sample wins ties.
pub fn knn_l1_baseline(query: &[i32], support: &[(Vec<i32>, usize)]) -> Result<usize> {
    if support.is_empty() {
        return Err(invalid!("support set is empty"));
    }
    let mut best = (i64::MAX, 0usize);
    for (x, label) in support {
        if x.len() != query.len() {
            return Err(shape_err!("support feature has {} entries, query has {}", x.len(), query.len()));
        }
        let d: i64 = x.iter().zip(query).map(|(&a, &b)| (a as i64 - b as i64).abs()).sum();
        if d < best.0 {
            best = (d, *label);
        }
    }
    Ok(best.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crp::CrpConfig;
    use crate::hdc::memory::{ClassMemory, ClassSums};
    use crate::hdc::train::train_single_pass;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn memory_from(hvs: &[Vec<i32>], bits: u8) -> ClassMemory {
        let d = hvs[0].len();
        let encoded: Vec<(Hypervector, usize)> =
            hvs.iter().enumerate().map(|(i, v)| (Hypervector::new(v.clone()), i)).collect();
        train_single_pass(&encoded, CrpConfig::new(16, d, 0).unwrap(), bits).unwrap()
    }

    #[test]
    fn identity_query_has_zero_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let hvs: Vec<Vec<i32>> = (0..5).map(|_| (0..32).map(|_| rng.random_range(-100..100)).collect()).collect();
        let m = memory_from(&hvs, 16);
        let p = infer(&Hypervector::new(hvs[3].clone()), &m, 0).unwrap();
        assert_eq!(p.distances[3], 0);
        assert_eq!(p.class_id, 3);
    }

    #[test]
    fn opposite_classes() {
        let m = memory_from(&[vec![1; 16], vec![-1; 16]], 4);
        let p = infer(&Hypervector::new(vec![1; 16]), &m, 0).unwrap();
        assert_eq!(p.class_id, 0);
        assert_eq!(p.distances, vec![0, 32]);
    }

    #[test]
    fn ties_go_to_lowest_class() {
        let m = memory_from(&[vec![1; 16], vec![-1; 16]], 4);
        let p = infer(&Hypervector::new(vec![0; 16]), &m, 0).unwrap();
        assert_eq!(p.distances[0], p.distances[1]);
        assert_eq!(p.class_id, 0);
        assert_eq!(argmin(&[3, 1, 1]), Some(1));
        assert_eq!(argmin::<i64>(&[]), None);
    }

    #[test]
    fn matches_brute_force_scan_over_dequantized_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let d = 256;
        let mut sums = ClassSums::new(10, d);
        for c in 0..10 {
            for _ in 0..3 {
                let hv: Vec<i32> = (0..d).map(|_| rng.random_range(-300..300)).collect();
                sums.add(c, &hv).unwrap();
            }
        }
        let cfg = CrpConfig::new(16, d, 0).unwrap();
        for bits in [1u8, 4, 8, 16] {
            let m = ClassMemory::new(bits, vec![sums.quantize(bits, cfg).unwrap()]).unwrap();
            for _ in 0..20 {
                let q: Vec<i32> = (0..d).map(|_| rng.random_range(-300..300)).collect();
                let p = infer(&Hypervector::new(q.clone()), &m, 0).unwrap();
                // Oracle: floating-point L1 to each dequantized class mean.
                let scan: Vec<f64> = m.branches()[0]
                    .classes
                    .iter()
                    .map(|c| {
                        let k = c.scale() / c.shots as f64;
                        q.iter().zip(&c.values).map(|(&a, &v)| (a as f64 - v as f64 * k).abs()).sum()
                    })
                    .collect();
                let best = scan.iter().cloned().fold(f64::INFINITY, f64::min);
                assert!((scan[p.class_id] - best).abs() <= 1e-9 * best.max(1.0), "bits {bits}");
            }
        }
    }

    #[test]
    fn scaling_everything_keeps_the_argmin() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let hvs: Vec<Vec<i32>> = (0..4).map(|_| (0..64).map(|_| rng.random_range(-50..50)).collect()).collect();
        let q: Vec<i32> = (0..64).map(|_| rng.random_range(-50..50)).collect();
        for bits in [4u8, 16] {
            let base = infer(&Hypervector::new(q.clone()), &memory_from(&hvs, bits), 0).unwrap();
            for a in [2, 3, 7] {
                let scaled: Vec<Vec<i32>> = hvs.iter().map(|h| h.iter().map(|v| v * a).collect()).collect();
                let qs: Vec<i32> = q.iter().map(|v| v * a).collect();
                let p = infer(&Hypervector::new(qs), &memory_from(&scaled, bits), 0).unwrap();
                assert_eq!(p.class_id, base.class_id);
            }
        }
    }

    #[test]
    fn dimension_and_branch_errors() {
        let m = memory_from(&[vec![1; 16], vec![-1; 16]], 4);
        assert!(infer(&Hypervector::new(vec![1; 32]), &m, 0).is_err());
        assert!(infer(&Hypervector::new(vec![1; 16]), &m, 1).is_err());
    }

    #[test]
    fn knn_basics() {
        let support = vec![(vec![0, 0], 0), (vec![4, 4], 1), (vec![2, 3], 2)];
        assert_eq!(knn_l1_baseline(&[4, 4], &support).unwrap(), 1);
        // Equidistant (L1 = 4) from supports 0 and 1: the first wins.
        assert_eq!(knn_l1_baseline(&[2, 2], &[(vec![0, 0], 0), (vec![4, 4], 1)]).unwrap(), 0);
        assert!(knn_l1_baseline(&[1, 1], &[]).is_err());
        assert!(knn_l1_baseline(&[1], &support).is_err());
    }

    #[test]
    fn knn_matches_exhaustive_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let support: Vec<(Vec<i32>, usize)> =
            (0..25).map(|i| ((0..64).map(|_| rng.random_range(0..16)).collect(), i / 5)).collect();
        for _ in 0..50 {
            let q: Vec<i32> = (0..64).map(|_| rng.random_range(0..16)).collect();
            let dists: Vec<i64> = support
                .iter()
                .map(|(x, _)| x.iter().zip(&q).map(|(a, b)| (*a as i64 - *b as i64).abs()).sum())
                .collect();
            let best = argmin(&dists).unwrap();
            assert_eq!(knn_l1_baseline(&q, &support).unwrap(), support[best].1);
        }
    }
}
