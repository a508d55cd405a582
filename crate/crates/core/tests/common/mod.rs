//! Shared test helpers: random instances, a brute-force solver that works on
//! plain vectors, and a constraint checker.
#![allow(dead_code)]

use cohort_explain::{CohortModel, ImportanceMatrix, TagMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct Instance {
    pub w: Vec<Vec<f64>>,
    pub d: Vec<Vec<u8>>,
    pub k: usize,
}

impl Instance {
    pub fn n(&self) -> usize {
        self.w.len()
    }

    pub fn importances(&self) -> ImportanceMatrix {
        ImportanceMatrix::from_rows_unnamed(&self.w).unwrap()
    }

    pub fn tags(&self) -> TagMatrix {
        TagMatrix::from_rows_unnamed(&self.d).unwrap()
    }
}

/// Random instance. Importances are small integers half the time so that
/// exact ties in compactness show up.
pub fn random_instance(
    rng: &mut ChaCha8Rng,
    n: std::ops::RangeInclusive<usize>,
    m: std::ops::RangeInclusive<usize>,
    r: std::ops::RangeInclusive<usize>,
    k: std::ops::RangeInclusive<usize>,
) -> Instance {
    let n = rng.random_range(n);
    let m = rng.random_range(m);
    let r = rng.random_range(r);
    let k = rng.random_range(k).min(n);
    let integer = rng.random_bool(0.5);
    let density = rng.random_range(0.45..0.85);
    let w = (0..n)
        .map(|_| {
            (0..m)
                .map(|_| {
                    if integer {
                        rng.random_range(-3i32..=3) as f64
                    } else {
                        rng.random_range(-1.0..1.0)
                    }
                })
                .collect()
        })
        .collect();
    let d = (0..n)
        .map(|_| (0..r).map(|_| u8::from(rng.random_bool(density))).collect())
        .collect();
    Instance { w, d, k }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Calls `f` on every canonical label vector of length `n` with exactly `k`
/// distinct labels, in lexicographic order.
pub fn for_each_partition(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    fn rec(labels: &mut Vec<usize>, n: usize, k: usize, used: usize, f: &mut dyn FnMut(&[usize])) {
        let i = labels.len();
        if i == n {
            if used == k {
                f(labels);
            }
            return;
        }
        // Not enough samples left to open the remaining cohorts.
        if k - used > n - i {
            return;
        }
        for t in 0..=used.min(k - 1) {
            labels.push(t);
            rec(labels, n, k, used.max(t + 1), f);
            labels.pop();
        }
    }
    rec(&mut Vec::with_capacity(n), n, k, 0, &mut f);
}

/// Tags shared by every member of cohort `t`, by direct scan.
pub fn shared_tags(d: &[Vec<u8>], labels: &[usize], t: usize) -> Vec<usize> {
    let r = d.first().map_or(0, Vec::len);
    (0..r)
        .filter(|&p| labels.iter().zip(d).all(|(&l, row)| l != t || row[p] == 1))
        .collect()
}

pub fn direct_descriptiveness(d: &[Vec<u8>], labels: &[usize], k: usize) -> usize {
    (0..k).map(|t| shared_tags(d, labels, t).len()).min().unwrap_or(0)
}

/// Sum over cohorts of squared distances between every unordered member pair.
pub fn direct_compactness(w: &[Vec<f64>], labels: &[usize]) -> f64 {
    let mut total = 0.0;
    for i in 0..w.len() {
        for j in i + 1..w.len() {
            if labels[i] == labels[j] {
                total += w[i].iter().zip(&w[j]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
            }
        }
    }
    total
}

#[derive(Debug, Clone)]
pub struct BruteForce {
    pub q: usize,
    pub cost: f64,
    pub labels: Vec<usize>,
}

/// Two-phase optimum by enumeration: best descriptiveness, then the cheapest
/// partition reaching it.
pub fn brute_force(inst: &Instance) -> BruteForce {
    let mut all = Vec::new();
    for_each_partition(inst.n(), inst.k, |labels| {
        all.push((
            direct_descriptiveness(&inst.d, labels, inst.k),
            direct_compactness(&inst.w, labels),
            labels.to_vec(),
        ));
    });
    let q = all.iter().map(|a| a.0).max().expect("at least one partition");
    let (_, cost, labels) = all
        .into_iter()
        .filter(|a| a.0 >= q)
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    BruteForce { q, cost, labels }
}

/// Checks every structural constraint on a fitted model against the raw
/// instance; returns a description of the first violation.
pub fn check_constraints(inst: &Instance, model: &CohortModel) -> Result<(), String> {
    let labels = model.partition.labels();
    let k = model.k();
    if k != inst.k {
        return Err(format!("expected {} cohorts, got {k}", inst.k));
    }
    if labels.len() != inst.n() {
        return Err(format!("{} labels for {} samples", labels.len(), inst.n()));
    }
    if let Some(&l) = labels.iter().find(|&&l| l >= k) {
        return Err(format!("label {l} out of range"));
    }
    for t in 0..k {
        if !labels.contains(&t) {
            return Err(format!("cohort {t} is empty"));
        }
    }
    let firsts: Vec<usize> = (0..k)
        .map(|t| labels.iter().position(|&l| l == t).unwrap())
        .collect();
    if firsts.windows(2).any(|p| p[0] >= p[1]) {
        return Err(format!("not canonical: first occurrences {firsts:?}"));
    }
    for t in 0..k {
        let set: Vec<usize> = model.tag_sets[t].indices().collect();
        for (i, &l) in labels.iter().enumerate() {
            if l == t {
                if let Some(&p) = set.iter().find(|&&p| inst.d[i][p] != 1) {
                    return Err(format!("sample {i} in cohort {t} lacks its tag {p}"));
                }
            }
        }
        let shared = shared_tags(&inst.d, labels, t);
        if shared != set {
            return Err(format!("cohort {t}: tags {set:?}, members share {shared:?}"));
        }
    }
    let desc = direct_descriptiveness(&inst.d, labels, k);
    if model.descriptiveness != desc {
        return Err(format!("descriptiveness {} vs direct {desc}", model.descriptiveness));
    }
    let cost = direct_compactness(&inst.w, labels);
    if (model.compactness - cost).abs() > 1e-9 * cost.abs().max(1.0) {
        return Err(format!("compactness {} vs direct {cost}", model.compactness));
    }
    Ok(())
}
