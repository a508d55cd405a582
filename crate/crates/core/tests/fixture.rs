mod common;

use cohort_explain::metrics::{adjusted_rand_index, evaluate_model};
use cohort_explain::repid::fit_tree;
use cohort_explain::synthetic::{default_tag_config, generate, SyntheticData, TwoRegionSpec};
use cohort_explain::{derive_tags, solve, SolverOptions, TagMatrix};
use common::{brute_force, Instance};

fn fixture(spec: &TwoRegionSpec) -> (SyntheticData, TagMatrix) {
    let data = generate(spec).unwrap();
    let d = derive_tags(&data.table, &default_tag_config(spec)).unwrap();
    (data, d)
}

fn as_instance(data: &SyntheticData, d: &TagMatrix, k: usize) -> Instance {
    Instance {
        w: data.importances.rows().map(<[f64]>::to_vec).collect(),
        d: (0..d.n_rows())
            .map(|i| (0..d.n_tags()).map(|p| u8::from(d.get(i, p))).collect())
            .collect(),
        k,
    }
}

#[test]
fn brute_force_optimum_separates_regions() {
    for seed in 0..5 {
        let spec = TwoRegionSpec { n_per_region: 5, rng_seed: seed, ..Default::default() };
        let (data, d) = fixture(&spec);
        let bf = brute_force(&as_instance(&data, &d, 2));
        assert_eq!(adjusted_rand_index(&bf.labels, &data.labels), 1.0, "seed {seed}");
        let res = solve(&data.importances, &d, 2, &SolverOptions::exact()).unwrap();
        assert_eq!(res.model.partition.labels(), bf.labels.as_slice());
    }
}

#[test]
fn cohort_means_equal_analytic_region_means() {
    let spec = TwoRegionSpec { n_per_region: 60, rng_seed: 7, ..Default::default() };
    let (data, d) = fixture(&spec);
    let res = solve(&data.importances, &d, 2, &SolverOptions::default()).unwrap();
    let eval = evaluate_model(&res.model, &data.importances, &d).unwrap();
    for t in 0..2 {
        let members: Vec<usize> = res.model.partition.members(t).collect();
        let region = data.labels[members[0]];
        let v = spec.weights(region);
        // Mean of v_j (x_j - mu_j) over the region is v_j (mean region x_j - mu_j).
        for j in 0..2 {
            let xbar = members.iter().map(|&i| data.points[i][j]).sum::<f64>() / members.len() as f64;
            let analytic = v[j] * (xbar - data.dataset_mean[j]);
            assert!((eval.cohort_means[t][j] - analytic).abs() < 1e-9);
        }
    }
}

#[test]
fn tree_splits_on_region_tag() {
    let spec = TwoRegionSpec { n_per_region: 50, spread: 0.0, ..Default::default() };
    let (data, d) = fixture(&spec);
    let tree = fit_tree(&data.importances, &d, 2).unwrap();
    assert_eq!(adjusted_rand_index(tree.partition().labels(), &data.labels), 1.0);
    // The first split uses one of the region-aligned axis tags.
    let tag = tree.leaves[0].path[0].0;
    assert!(tag < 4, "split on {}", d.labels()[tag]);
}
