//! Feature importance reports and Shapley attributions.

mod shap;

pub use shap::*;

use indexmap::IndexMap;
use ndarray::ArrayView2;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linear::LinearModel;
use crate::metrics::Metric;
use crate::model::ForecastModel;
use crate::par;
use crate::timeseries::SupervisedDataset;
use crate::tree::{tree_rng, EnsembleModel};

/// Largest feature count the exhaustive Shapley enumeration accepts.
pub const MAX_BRUTE_FORCE_FEATURES: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImportanceMethod {
    SplitGain,
    SplitCount,
    Coefficient,
    Permutation,
    MeanAbsShap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Scores are raw values (negatives clipped) divided by their maximum.
    DivideByMax,
    /// Every raw score was zero (or negative); scores are all zero.
    AllZero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub method: ImportanceMethod,
    pub normalization: Normalization,
    pub scores: IndexMap<String, f64>,
    pub raw_scores: IndexMap<String, f64>,
}

impl ImportanceReport {
    pub fn from_raw(method: ImportanceMethod, feature_names: &[String], raw: Vec<f64>) -> Result<Self> {
        if feature_names.len() != raw.len() {
            return Err(Error::Dimension {
                expected: feature_names.len(),
                got: raw.len(),
            });
        }
        let max = raw.iter().copied().fold(0.0, f64::max);
        let normalization = if max > 0.0 {
            Normalization::DivideByMax
        } else {
            Normalization::AllZero
        };
        let mut scores = IndexMap::with_capacity(raw.len());
        let mut raw_scores = IndexMap::with_capacity(raw.len());
        for (name, &r) in feature_names.iter().zip(&raw) {
            let s = if max > 0.0 { r.max(0.0) / max } else { 0.0 };
            if scores.insert(name.clone(), s).is_some() {
                return Err(Error::Validation(format!("duplicate feature `{name}` in importance report")));
            }
            raw_scores.insert(name.clone(), r);
        }
        Ok(Self {
            method,
            normalization,
            scores,
            raw_scores,
        })
    }

    /// Features by descending score; equal scores keep input order.
    pub fn ranking(&self) -> Vec<(&str, f64)> {
        let mut v: Vec<(&str, f64)> = self.scores.iter().map(|(k, v)| (k.as_str(), *v)).collect();
        v.sort_by(|a, b| b.1.total_cmp(&a.1));
        v
    }

    pub fn top(&self) -> Option<&str> {
        self.ranking().first().map(|(name, _)| *name)
    }
}

/// Total SSE reduction of each feature's splits over all trees.
pub fn split_gain_importance(model: &EnsembleModel, feature_names: &[String]) -> Result<ImportanceReport> {
    let mut raw = vec![0.0; model.n_features];
    for tree in &model.trees {
        tree.for_each_split(&mut |f, gain| raw[f] += gain);
    }
    ImportanceReport::from_raw(ImportanceMethod::SplitGain, feature_names, raw)
}

/// Number of splits on each feature over all trees.
pub fn split_count_importance(model: &EnsembleModel, feature_names: &[String]) -> Result<ImportanceReport> {
    let mut raw = vec![0.0; model.n_features];
    for tree in &model.trees {
        tree.for_each_split(&mut |f, _| raw[f] += 1.0);
    }
    ImportanceReport::from_raw(ImportanceMethod::SplitCount, feature_names, raw)
}

/// Absolute standardized coefficients.
pub fn coefficient_importance(model: &LinearModel, feature_names: &[String]) -> Result<ImportanceReport> {
    let raw = model.coefficients.iter().map(|b| b.abs()).collect();
    ImportanceReport::from_raw(ImportanceMethod::Coefficient, feature_names, raw)
}

/// Mean increase of `metric` when one column of `data` is shuffled.
/// `context` holds rows preceding `data` for sequence models.
/// Raw scores stay signed; negatives are clipped only in the normalized scores.
pub fn permutation_importance(
    model: &dyn ForecastModel,
    data: &SupervisedDataset,
    context: ArrayView2<f64>,
    metric: Metric,
    repeats: usize,
    seed: u64,
) -> Result<ImportanceReport> {
    if repeats == 0 {
        return Err(Error::Config("permutation importance needs at least one repeat".into()));
    }
    let y = data.y.as_slice().expect("contiguous target");
    let base_pred = model.predict_with_context(context, data.x.view())?;
    let baseline = metric.evaluate(y, base_pred.as_slice().expect("contiguous"))?;
    let raw = par::map_range(data.n_features(), |j| -> Result<f64> {
        let mut total = 0.0;
        let mut x = data.x.clone();
        let original = data.x.column(j);
        for r in 0..repeats {
            let mut rng = tree_rng(seed, j * repeats + r);
            let mut col: Vec<f64> = original.to_vec();
            col.shuffle(&mut rng);
            x.column_mut(j).iter_mut().zip(&col).for_each(|(d, s)| *d = *s);
            let pred = model.predict_with_context(context, x.view())?;
            total += metric.evaluate(y, pred.as_slice().expect("contiguous"))? - baseline;
        }
        Ok(total / repeats as f64)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    ImportanceReport::from_raw(ImportanceMethod::Permutation, &data.feature_names, raw)
}

/// Mean absolute attribution per feature.
pub fn mean_abs_shap(attributions: &[Attribution], feature_names: &[String]) -> Result<ImportanceReport> {
    if attributions.is_empty() {
        return Err(Error::InsufficientData("mean |SHAP| over zero attributions".into()));
    }
    let p = feature_names.len();
    let mut raw = vec![0.0; p];
    for a in attributions {
        if a.phi.len() != p {
            return Err(Error::Dimension {
                expected: p,
                got: a.phi.len(),
            });
        }
        raw.iter_mut().zip(&a.phi).for_each(|(r, v)| *r += v.abs());
    }
    let n = attributions.len() as f64;
    raw.iter_mut().for_each(|r| *r /= n);
    ImportanceReport::from_raw(ImportanceMethod::MeanAbsShap, feature_names, raw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linear::{fit_lasso, LinearHyperparams, LinearKind};
    use crate::model::FittedModel;
    use crate::timeseries::Frequency;
    use crate::tree::{fit_gbm, MaxFeatures, TreeHyperparams, TreeNode};
    use crate::EnsembleKind;
    use chrono::NaiveDate;
    use ndarray::{Array1, Array2};

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("f{i}")).collect()
    }

    fn stump_model(feature: usize, n_features: usize) -> EnsembleModel {
        EnsembleModel {
            kind: EnsembleKind::ExtraTrees,
            trees: vec![TreeNode::Split {
                feature,
                threshold: 0.5,
                cover: 4,
                gain: 3.0,
                left: Box::new(TreeNode::Leaf { value: 1.0, cover: 2 }),
                right: Box::new(TreeNode::Leaf { value: 2.0, cover: 2 }),
            }],
            base_score: 0.0,
            learning_rate: 1.0,
            n_features,
        }
    }

    #[test]
    fn stump_and_leaf_importance() {
        let r = split_gain_importance(&stump_model(0, 3), &names(3)).unwrap();
        assert_eq!(r.scores.values().copied().collect::<Vec<_>>(), vec![1.0, 0.0, 0.0]);
        let mut leafy = stump_model(0, 2);
        leafy.trees = vec![TreeNode::Leaf { value: 1.0, cover: 3 }];
        let r = split_gain_importance(&leafy, &names(2)).unwrap();
        assert_eq!(r.normalization, Normalization::AllZero);
        assert!(r.scores.values().all(|s| *s == 0.0));
        let c = split_count_importance(&stump_model(1, 2), &names(2)).unwrap();
        assert_eq!(c.raw_scores["f1"], 1.0);
    }

    fn additive_grid() -> (Array2<f64>, Array1<f64>) {
        let mut rows = Vec::new();
        for a in 0..10 {
            for b in 0..10 {
                rows.push([a as f64, b as f64]);
            }
        }
        let x = Array2::from_shape_fn((rows.len(), 2), |(i, j)| rows[i][j]);
        let y = x.rows().into_iter().map(|r| 2.0 * r[0] + r[1]).collect();
        (x, y)
    }

    #[test]
    fn dominant_feature_ranks_first() {
        let (x, y) = additive_grid();
        let hp = TreeHyperparams {
            n_estimators: 20,
            max_depth: 3,
            max_features: MaxFeatures::All,
            learning_rate: 0.3,
            seed: 1,
        };
        let m = fit_gbm(x.view(), y.view(), &hp).unwrap();
        let r = split_gain_importance(&m, &names(2)).unwrap();
        assert_eq!(r.top(), Some("f0"));
        let atts: Vec<Attribution> = x.rows().into_iter().map(|row| tree_shap(&m, row).unwrap()).collect();
        assert_eq!(mean_abs_shap(&atts, &names(2)).unwrap().top(), Some("f0"));
    }

    #[test]
    fn coefficient_scores() {
        let m = LinearModel {
            kind: LinearKind::Ridge,
            alpha: 1.0,
            coefficients: vec![3.0, -1.0],
            intercept: 0.0,
            feature_means: vec![0.0; 2],
            feature_sds: vec![1.0; 2],
            converged: true,
            sweeps: 0,
        };
        let r = coefficient_importance(&m, &names(2)).unwrap();
        assert_eq!(r.scores["f0"], 1.0);
        assert!((r.scores["f1"] - 1.0 / 3.0).abs() < 1e-15);

        let (x, _) = additive_grid();
        let noise: Array1<f64> = (0..x.nrows()).map(|i| ((i * 37) % 11) as f64 * 0.01).collect();
        let y = x.column(0).mapv(|v| 2.0 * v) + &noise;
        let lasso = fit_lasso(x.view(), y.view(), LinearHyperparams { alpha: 0.1 }).unwrap();
        assert_eq!(coefficient_importance(&lasso, &names(2)).unwrap().top(), Some("f0"));
        let big = fit_lasso(x.view(), y.view(), LinearHyperparams { alpha: 1e4 }).unwrap();
        assert_eq!(coefficient_importance(&big, &names(2)).unwrap().normalization, Normalization::AllZero);
    }

    fn dataset(x: Array2<f64>, y: Array1<f64>) -> SupervisedDataset {
        let d0 = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        let n = y.len();
        SupervisedDataset {
            timestamps: (0..n).map(|i| d0 + chrono::Days::new(i as u64)).collect(),
            feature_names: names(x.ncols()),
            x,
            target_now: y.clone(),
            y,
            horizon: 1,
            frequency: Frequency::Daily,
            target_name: "t".into(),
        }
    }

    #[test]
    fn permutation_cases() {
        let (x, _) = additive_grid();
        let y = x.column(0).to_owned() + 1.0;
        let model = FittedModel::Linear(LinearModel {
            kind: LinearKind::Ridge,
            alpha: 0.0,
            coefficients: vec![x.column(0).std(0.0), 0.0],
            intercept: x.column(0).mean().unwrap() + 1.0,
            feature_means: vec![x.column(0).mean().unwrap(), 0.0],
            feature_sds: vec![x.column(0).std(0.0), 1.0],
            converged: true,
            sweeps: 0,
        });
        let data = dataset(x, y);
        let ctx = Array2::zeros((0, 2));
        let a = permutation_importance(&model, &data, ctx.view(), Metric::Nrmse, 3, 5).unwrap();
        assert!(a.raw_scores["f0"] > 0.0);
        assert_eq!(a.raw_scores["f1"], 0.0);
        let b = permutation_importance(&model, &data, ctx.view(), Metric::Nrmse, 3, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mean_abs_shap_cases() {
        let att = |phi: Vec<f64>| Attribution {
            timestamp: None,
            base_value: 0.0,
            prediction: phi.iter().sum(),
            phi,
        };
        assert!(mean_abs_shap(&[], &names(2)).is_err());
        let r = mean_abs_shap(&[att(vec![2.0, -1.0])], &names(2)).unwrap();
        assert_eq!(r.scores["f1"], 0.5);
        let r = mean_abs_shap(&[att(vec![0.0, 3.0]), att(vec![0.0, -3.0])], &names(2)).unwrap();
        assert_eq!(r.scores["f1"], 1.0);
        assert_eq!(r.scores["f0"], 0.0);
    }

    #[test]
    fn report_json_shape() {
        let r = ImportanceReport::from_raw(ImportanceMethod::Permutation, &names(2), vec![-0.5, 0.25]).unwrap();
        let v = serde_json::to_value(&r).unwrap();
        assert_eq!(v["method"], "permutation");
        assert_eq!(v["normalization"], "divide_by_max");
        assert_eq!(v["scores"]["f0"], 0.0);
        assert_eq!(v["raw_scores"]["f0"], -0.5);
    }
}
