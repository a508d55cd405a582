//! Two-region ground-truth fixture.
//!
//! Samples fall in one of two boxes: low on both axes or high on both axes.
//! Each region has its own linear model, and the local importance of a sample
//! is the exact attribution of that model, `w_j = v_j * (x_j - mu_j)`, with
//! `mu` the dataset mean. A categorical nuisance column adds tags that carry
//! no signal.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::{Column, FeatureTable};
use crate::types::{ImportanceMatrix, TagDerivationConfig, TagRule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TwoRegionSpec {
    pub n_per_region: usize,
    pub axis_names: [String; 2],
    pub axis1_range: (f64, f64),
    pub axis2_range: (f64, f64),
    /// Region boundary on axis 1; the low region lies below it.
    pub axis1_threshold: f64,
    pub axis2_threshold: f64,
    pub low_weights: [f64; 2],
    pub high_weights: [f64; 2],
    /// Standard deviation of Gaussian noise added to every importance value.
    pub noise: f64,
    /// Fraction of each region box that samples spread over, centred on the
    /// box centre. 1 is the whole box, 0 collapses a region to a point.
    pub spread: f64,
    /// Levels of the nuisance column; 0 omits it.
    pub nuisance_levels: usize,
    pub nuisance_name: String,
    pub rng_seed: u64,
}

impl Default for TwoRegionSpec {
    fn default() -> Self {
        Self {
            n_per_region: 100,
            axis_names: ["BMI".into(), "potassium".into()],
            axis1_range: (10.0, 60.0),
            axis2_range: (1.0, 5.0),
            axis1_threshold: 35.0,
            axis2_threshold: 3.0,
            low_weights: [-1.0, 2.0],
            high_weights: [3.0, -1.0],
            noise: 0.0,
            spread: 1.0,
            nuisance_levels: 3,
            nuisance_name: "site".into(),
            rng_seed: 0,
        }
    }
}

impl TwoRegionSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.n_per_region == 0 {
            return bad("n_per_region must be at least 1");
        }
        if self.axis_names[0] == self.axis_names[1]
            || self.axis_names.contains(&self.nuisance_name)
        {
            return bad("axis and nuisance column names must be distinct");
        }
        let inside = |(lo, hi): (f64, f64), t: f64| lo.is_finite() && hi.is_finite() && lo < t && t < hi;
        if !inside(self.axis1_range, self.axis1_threshold) || !inside(self.axis2_range, self.axis2_threshold) {
            return bad("thresholds must lie strictly inside finite axis ranges");
        }
        let weights = self.low_weights.iter().chain(&self.high_weights);
        if weights.clone().any(|v| !v.is_finite()) {
            return bad("weights must be finite");
        }
        let flips = self
            .low_weights
            .iter()
            .zip(&self.high_weights)
            .any(|(a, b)| a * b < 0.0);
        if !flips {
            return bad("regional weights must differ in sign on at least one axis");
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return bad("noise must be a finite non-negative number");
        }
        if !(0.0..=1.0).contains(&self.spread) {
            return bad("spread must lie in [0, 1]");
        }
        Ok(())
    }

    /// Box `[lo, hi]` per axis for region 0 (low) or 1 (high).
    pub fn region_box(&self, region: usize) -> [(f64, f64); 2] {
        if region == 0 {
            [
                (self.axis1_range.0, self.axis1_threshold),
                (self.axis2_range.0, self.axis2_threshold),
            ]
        } else {
            [
                (self.axis1_threshold, self.axis1_range.1),
                (self.axis2_threshold, self.axis2_range.1),
            ]
        }
    }

    pub fn weights(&self, region: usize) -> [f64; 2] {
        if region == 0 {
            self.low_weights
        } else {
            self.high_weights
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub table: FeatureTable,
    pub importances: ImportanceMatrix,
    /// Ground-truth region per sample: 0 low, 1 high.
    pub labels: Vec<usize>,
    pub sample_ids: Vec<String>,
    /// Raw axis coordinates, one `[x1, x2]` per sample.
    pub points: Vec<[f64; 2]>,
    pub dataset_mean: [f64; 2],
}

/// Exact attribution of a linear model with independent features.
pub fn linear_attribution(weights: &[f64], x: &[f64], mean: &[f64]) -> Vec<f64> {
    weights
        .iter()
        .zip(x.iter().zip(mean))
        .map(|(v, (x, mu))| v * (x - mu))
        .collect()
}

fn draw(rng: &mut impl Rng, (lo, hi): (f64, f64), spread: f64) -> f64 {
    let centre = 0.5 * (lo + hi);
    if spread == 0.0 {
        return centre;
    }
    let half = 0.5 * spread * (hi - lo);
    // Upper end stays open so no sample lands on the other region's boundary.
    let v = rng.random_range(centre - half..centre + half);
    v.clamp(lo, hi)
}

pub fn generate(spec: &TwoRegionSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let mut rng = crate::rng(spec.rng_seed);
    let n = 2 * spec.n_per_region;

    let mut samples: Vec<(usize, [f64; 2], usize)> = Vec::with_capacity(n);
    for region in 0..2 {
        let bx = spec.region_box(region);
        for _ in 0..spec.n_per_region {
            let x = [draw(&mut rng, bx[0], spec.spread), draw(&mut rng, bx[1], spec.spread)];
            let level = if spec.nuisance_levels > 0 {
                rng.random_range(0..spec.nuisance_levels)
            } else {
                0
            };
            samples.push((region, x, level));
        }
    }
    samples.shuffle(&mut rng);

    let mut mean = [0.0; 2];
    for (_, x, _) in &samples {
        mean[0] += x[0];
        mean[1] += x[1];
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let normal = Normal::new(0.0, spec.noise).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let mut values = Vec::with_capacity(2 * n);
    for (region, x, _) in &samples {
        for v in linear_attribution(&spec.weights(*region), x, &mean) {
            let eps = if spec.noise > 0.0 { normal.sample(&mut rng) } else { 0.0 };
            values.push(v + eps);
        }
    }
    let importances = ImportanceMatrix::new(values, spec.axis_names.to_vec())?;

    let mut columns = vec![
        (
            spec.axis_names[0].clone(),
            Column::Continuous(samples.iter().map(|s| s.1[0]).collect()),
        ),
        (
            spec.axis_names[1].clone(),
            Column::Continuous(samples.iter().map(|s| s.1[1]).collect()),
        ),
    ];
    if spec.nuisance_levels > 0 {
        columns.push((
            spec.nuisance_name.clone(),
            Column::Categorical(samples.iter().map(|s| format!("L{}", s.2 + 1)).collect()),
        ));
    }

    Ok(SyntheticData {
        table: FeatureTable::new(columns)?,
        importances,
        labels: samples.iter().map(|s| s.0).collect(),
        sample_ids: (0..n).map(|i| format!("s{i}")).collect(),
        points: samples.iter().map(|s| s.1).collect(),
        dataset_mean: mean,
    })
}

/// Median split on both axes plus one-hot nuisance levels. With equal region
/// sizes the axis medians fall between the regions, so each region owns one
/// tag per axis.
pub fn default_tag_config(spec: &TwoRegionSpec) -> TagDerivationConfig {
    let mut rules = vec![
        (spec.axis_names[0].clone(), TagRule::Quantile(2)),
        (spec.axis_names[1].clone(), TagRule::Quantile(2)),
    ];
    if spec.nuisance_levels > 0 {
        rules.push((spec.nuisance_name.clone(), TagRule::OneHot));
    }
    TagDerivationConfig::new(rules)
}

/// Root mean square of all importance values.
pub fn importance_scale(w: &ImportanceMatrix) -> f64 {
    let values = w.as_slice();
    if values.is_empty() {
        return 0.0;
    }
    (values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::derive_tags;

    #[test]
    fn attribution_vanishes_at_mean() {
        assert_eq!(linear_attribution(&[3.0, -1.0], &[2.0, 5.0], &[2.0, 5.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn same_region_difference_is_weighted_gap() {
        let spec = TwoRegionSpec { n_per_region: 5, ..Default::default() };
        let data = generate(&spec).unwrap();
        let idx: Vec<usize> = (0..10).filter(|&i| data.labels[i] == 1).take(2).collect();
        let (a, b) = (idx[0], idx[1]);
        let v = spec.high_weights;
        for j in 0..2 {
            let got = data.importances.row(a)[j] - data.importances.row(b)[j];
            let want = v[j] * (data.points[a][j] - data.points[b][j]);
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn regions_stay_in_their_boxes() {
        let spec = TwoRegionSpec { n_per_region: 50, rng_seed: 3, ..Default::default() };
        let data = generate(&spec).unwrap();
        for (x, &r) in data.points.iter().zip(&data.labels) {
            let bx = spec.region_box(r);
            for j in 0..2 {
                assert!(bx[j].0 <= x[j] && x[j] <= bx[j].1);
            }
            assert_eq!(x[0] >= spec.axis1_threshold, r == 1);
        }
        assert_eq!(data.labels.iter().filter(|&&r| r == 1).count(), 50);
    }

    #[test]
    fn deterministic_per_seed() {
        let spec = TwoRegionSpec { n_per_region: 20, noise: 0.1, rng_seed: 9, ..Default::default() };
        assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
        let other = TwoRegionSpec { rng_seed: 10, ..spec.clone() };
        assert_ne!(generate(&spec).unwrap().importances, generate(&other).unwrap().importances);
    }

    #[test]
    fn median_tags_follow_regions() {
        let spec = TwoRegionSpec { n_per_region: 30, rng_seed: 1, ..Default::default() };
        let data = generate(&spec).unwrap();
        let d = derive_tags(&data.table, &default_tag_config(&spec)).unwrap();
        assert_eq!(d.n_tags(), 4 + spec.nuisance_levels);
        for i in 0..d.n_rows() {
            let high = data.labels[i] == 1;
            assert_eq!(d.get(i, 0), !high);
            assert_eq!(d.get(i, 1), high);
        }
    }

    #[test]
    fn point_regions_have_constant_importances() {
        let spec = TwoRegionSpec { n_per_region: 4, spread: 0.0, ..Default::default() };
        let data = generate(&spec).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                if data.labels[i] == data.labels[j] {
                    assert_eq!(data.importances.row(i), data.importances.row(j));
                }
            }
        }
        let d = derive_tags(&data.table, &default_tag_config(&spec)).unwrap();
        assert_eq!(&d.labels()[..2], &["BMI<35".to_string(), "35<=BMI".to_string()]);
    }

    #[test]
    fn rejects_bad_specs() {
        let same_sign = TwoRegionSpec { high_weights: [-2.0, 1.0], ..Default::default() };
        assert!(matches!(same_sign.validate(), Err(Error::InvalidConfig(_))));
        let empty = TwoRegionSpec { n_per_region: 0, ..Default::default() };
        assert!(empty.validate().is_err());
        let outside = TwoRegionSpec { axis1_threshold: 70.0, ..Default::default() };
        assert!(outside.validate().is_err());
    }

    #[test]
    fn importance_scale_is_rms() {
        let w = ImportanceMatrix::from_rows_unnamed(&[vec![3.0, 4.0], vec![0.0, 0.0]]).unwrap();
        assert!((importance_scale(&w) - (25.0f64 / 4.0).sqrt()).abs() < 1e-15);
    }
}
