use std::fmt;
use std::io::Write;
use std::str::FromStr;

use chrono::NaiveDate;
use ndarray::{s, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::MAX_BRUTE_FORCE_FEATURES;
use crate::error::{Error, Result};
use crate::gru::GruModel;
use crate::linear::LinearModel;
use crate::model::FittedModel;
use crate::par;
use crate::timeseries::SupervisedDataset;
use crate::tree::{EnsembleModel, TreeNode};

/// One explained prediction: `base_value + Σ phi = prediction`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub timestamp: Option<NaiveDate>,
    pub base_value: f64,
    pub phi: Vec<f64>,
    pub prediction: f64,
}

impl Attribution {
    /// `|base + Σphi − prediction|`.
    pub fn local_accuracy_error(&self) -> f64 {
        (self.base_value + self.phi.iter().sum::<f64>() - self.prediction).abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapMethod {
    /// Linear for linear models, tree for ensembles, exact for GRU.
    Auto,
    Tree,
    Linear,
    /// Exhaustive enumeration with background-mean substitution.
    Exact,
}

impl ShapMethod {
    pub fn resolve(self, model: &FittedModel) -> Result<ShapMethod> {
        match (self, model) {
            (ShapMethod::Auto, FittedModel::Linear(_)) => Ok(ShapMethod::Linear),
            (ShapMethod::Auto, FittedModel::Ensemble(_)) => Ok(ShapMethod::Tree),
            (ShapMethod::Auto, FittedModel::Gru(_)) | (ShapMethod::Exact, _) => Ok(ShapMethod::Exact),
            (ShapMethod::Tree, FittedModel::Ensemble(_)) => Ok(ShapMethod::Tree),
            (ShapMethod::Linear, FittedModel::Linear(_)) => Ok(ShapMethod::Linear),
            (m, _) => Err(Error::Method(format!(
                "{m} attribution is not available for a {} model",
                family_name(model)
            ))),
        }
    }

    /// How absent features are treated, recorded alongside outputs.
    pub fn convention(self) -> &'static str {
        match self {
            ShapMethod::Auto => "auto",
            ShapMethod::Tree => "path-dependent: absent features follow both children weighted by training cover",
            ShapMethod::Linear => "interventional: absent features set to their training means",
            ShapMethod::Exact => "exhaustive coalitions: absent features replaced by training means",
        }
    }
}

fn family_name(model: &FittedModel) -> &'static str {
    match model {
        FittedModel::Linear(_) => "linear",
        FittedModel::Ensemble(_) => "tree ensemble",
        FittedModel::Gru(_) => "GRU",
    }
}

impl fmt::Display for ShapMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ShapMethod::Auto => "auto",
            ShapMethod::Tree => "tree",
            ShapMethod::Linear => "linear",
            ShapMethod::Exact => "exact",
        })
    }
}

impl FromStr for ShapMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "auto" => Ok(ShapMethod::Auto),
            "tree" => Ok(ShapMethod::Tree),
            "linear" => Ok(ShapMethod::Linear),
            "exact" => Ok(ShapMethod::Exact),
            _ => Err(Error::Config(format!("unknown SHAP method {s:?}"))),
        }
    }
}

/// `phi_j = β_j (z_j − mean background z_j)`. Without a background the
/// training means are used, so every `z` mean is zero and the base value is
/// the intercept.
pub fn linear_shap(model: &LinearModel, instance: ArrayView1<f64>, background: Option<ArrayView2<f64>>) -> Result<Attribution> {
    let p = model.n_features();
    if instance.len() != p {
        return Err(Error::Dimension {
            expected: p,
            got: instance.len(),
        });
    }
    let z_mean = match background {
        None => vec![0.0; p],
        Some(bg) => {
            if bg.ncols() != p {
                return Err(Error::Dimension { expected: p, got: bg.ncols() });
            }
            if bg.nrows() == 0 {
                return Err(Error::InsufficientData("empty SHAP background".into()));
            }
            bg.mean_axis(Axis(0))
                .expect("nonempty background")
                .iter()
                .zip(&model.feature_means)
                .zip(&model.feature_sds)
                .map(|((v, m), s)| (v - m) / s)
                .collect()
        }
    };
    let z = model.standardize_row(instance);
    let phi: Vec<f64> = (0..p).map(|j| model.coefficients[j] * (z[j] - z_mean[j])).collect();
    let base_value = model.intercept + (0..p).map(|j| model.coefficients[j] * z_mean[j]).sum::<f64>();
    Ok(Attribution {
        timestamp: None,
        base_value,
        phi,
        prediction: model.predict_row(instance),
    })
}

#[derive(Debug, Clone, Copy)]
struct PathElement {
    feature: Option<usize>,
    zero_fraction: f64,
    one_fraction: f64,
    weight: f64,
}

fn extend_path(path: &mut Vec<PathElement>, zero_fraction: f64, one_fraction: f64, feature: Option<usize>) {
    let d = path.len();
    path.push(PathElement {
        feature,
        zero_fraction,
        one_fraction,
        weight: if d == 0 { 1.0 } else { 0.0 },
    });
    let df = (d + 1) as f64;
    for i in (0..d).rev() {
        path[i + 1].weight += one_fraction * path[i].weight * (i + 1) as f64 / df;
        path[i].weight = zero_fraction * path[i].weight * (d - i) as f64 / df;
    }
}

fn unwind_path(path: &mut Vec<PathElement>, index: usize) {
    let d = path.len() - 1;
    let one = path[index].one_fraction;
    let zero = path[index].zero_fraction;
    let df = (d + 1) as f64;
    let mut next = path[d].weight;
    for j in (0..d).rev() {
        if one != 0.0 {
            let tmp = path[j].weight;
            path[j].weight = next * df / ((j + 1) as f64 * one);
            next = tmp - path[j].weight * zero * (d - j) as f64 / df;
        } else {
            path[j].weight = path[j].weight * df / (zero * (d - j) as f64);
        }
    }
    for j in index..d {
        path[j].feature = path[j + 1].feature;
        path[j].zero_fraction = path[j + 1].zero_fraction;
        path[j].one_fraction = path[j + 1].one_fraction;
    }
    path.pop();
}

/// Total weight of the path with element `index` removed.
fn unwound_sum(path: &[PathElement], index: usize) -> f64 {
    let d = path.len() - 1;
    let one = path[index].one_fraction;
    let zero = path[index].zero_fraction;
    let df = (d + 1) as f64;
    let mut total = 0.0;
    if one != 0.0 {
        let mut next = path[d].weight;
        for j in (0..d).rev() {
            let tmp = next * df / ((j + 1) as f64 * one);
            total += tmp;
            next = path[j].weight - tmp * zero * (d - j) as f64 / df;
        }
    } else {
        for j in (0..d).rev() {
            total += path[j].weight * df / (zero * (d - j) as f64);
        }
    }
    total
}

fn tree_shap_recurse(
    node: &TreeNode,
    x: ArrayView1<f64>,
    mut path: Vec<PathElement>,
    zero_fraction: f64,
    one_fraction: f64,
    feature: Option<usize>,
    phi: &mut [f64],
) {
    extend_path(&mut path, zero_fraction, one_fraction, feature);
    match node {
        TreeNode::Leaf { value, .. } => {
            for i in 1..path.len() {
                let w = unwound_sum(&path, i);
                let e = path[i];
                let f = e.feature.expect("only the root element lacks a feature");
                phi[f] += w * (e.one_fraction - e.zero_fraction) * value;
            }
        }
        TreeNode::Split {
            feature: split,
            threshold,
            cover,
            left,
            right,
            ..
        } => {
            let (hot, cold) = if x[*split] <= *threshold {
                (left, right)
            } else {
                (right, left)
            };
            let (mut iz, mut io) = (1.0, 1.0);
            if let Some(k) = (1..path.len()).find(|&k| path[k].feature == Some(*split)) {
                iz = path[k].zero_fraction;
                io = path[k].one_fraction;
                unwind_path(&mut path, k);
            }
            let c = *cover as f64;
            tree_shap_recurse(hot, x, path.clone(), iz * hot.cover() as f64 / c, io, Some(*split), phi);
            tree_shap_recurse(cold, x, path, iz * cold.cover() as f64 / c, 0.0, Some(*split), phi);
        }
    }
}

/// Path-dependent Shapley values of one tree; returns `(base, phi)`.
pub fn single_tree_shap(tree: &TreeNode, x: ArrayView1<f64>, n_features: usize) -> (f64, Vec<f64>) {
    let mut phi = vec![0.0; n_features];
    tree_shap_recurse(tree, x, Vec::new(), 1.0, 1.0, None, &mut phi);
    (tree.expected_value(), phi)
}

/// Exact path-dependent Shapley values of an ensemble prediction.
pub fn tree_shap(model: &EnsembleModel, x: ArrayView1<f64>) -> Result<Attribution> {
    if x.len() != model.n_features {
        return Err(Error::Dimension {
            expected: model.n_features,
            got: x.len(),
        });
    }
    let w = model.tree_weight();
    let mut base = 0.0;
    let mut phi = vec![0.0; model.n_features];
    for tree in &model.trees {
        let (b, p) = single_tree_shap(tree, x, model.n_features);
        base += b;
        phi.iter_mut().zip(&p).for_each(|(a, v)| *a += v);
    }
    phi.iter_mut().for_each(|v| *v *= w);
    Ok(Attribution {
        timestamp: None,
        base_value: model.offset() + w * base,
        phi,
        prediction: model.predict_row(x),
    })
}

/// Expected tree output when only the features in `coalition` (bit j set
/// for feature j) are known: known features route `x`, unknown features
/// average both children by cover.
pub fn tree_value_function(tree: &TreeNode, x: ArrayView1<f64>, coalition: u32) -> f64 {
    match tree {
        TreeNode::Leaf { value, .. } => *value,
        TreeNode::Split {
            feature,
            threshold,
            cover,
            left,
            right,
            ..
        } => {
            if coalition >> feature & 1 == 1 {
                let next = if x[*feature] <= *threshold { left } else { right };
                tree_value_function(next, x, coalition)
            } else {
                (left.cover() as f64 * tree_value_function(left, x, coalition)
                    + right.cover() as f64 * tree_value_function(right, x, coalition))
                    / *cover as f64
            }
        }
    }
}

/// [`tree_value_function`] summed over an ensemble with its offset and weight.
pub fn ensemble_value_function(model: &EnsembleModel, x: ArrayView1<f64>, coalition: u32) -> f64 {
    model.offset()
        + model.tree_weight()
            * model
                .trees
                .iter()
                .map(|t| tree_value_function(t, x, coalition))
                .sum::<f64>()
}

/// Shapley values by enumerating all `2^n` coalitions.
pub fn brute_force_shapley(value_fn: impl Fn(u32) -> f64, n_features: usize) -> Result<Vec<f64>> {
    if n_features > MAX_BRUTE_FORCE_FEATURES {
        return Err(Error::TooManyFeatures(n_features));
    }
    let n = n_features;
    let values: Vec<f64> = (0..1u32 << n).map(&value_fn).collect();
    // weight[s] = s!(n−s−1)!/n!
    let mut weight = vec![0.0; n.max(1)];
    let fact = |k: usize| (1..=k).map(|i| i as f64).product::<f64>();
    for (s, w) in weight.iter_mut().enumerate().take(n) {
        *w = fact(s) * fact(n - s - 1) / fact(n);
    }
    let mut phi = vec![0.0; n];
    for (j, pj) in phi.iter_mut().enumerate() {
        let bit = 1u32 << j;
        for set in 0..1u32 << n {
            if set & bit == 0 {
                *pj += weight[set.count_ones() as usize] * (values[(set | bit) as usize] - values[set as usize]);
            }
        }
    }
    Ok(phi)
}

/// Exact Shapley values of `f` on `window` (rows are time steps; one row
/// for non-sequence models), replacing features outside a coalition by
/// `background_means` in every row.
pub fn substitution_shap(
    f: impl Fn(ArrayView2<f64>) -> Result<f64>,
    window: ArrayView2<f64>,
    background_means: &[f64],
) -> Result<Attribution> {
    let p = window.ncols();
    if background_means.len() != p {
        return Err(Error::Dimension {
            expected: p,
            got: background_means.len(),
        });
    }
    if p > MAX_BRUTE_FORCE_FEATURES {
        return Err(Error::TooManyFeatures(p));
    }
    let mut values = Vec::with_capacity(1 << p);
    let mut masked = window.to_owned();
    for set in 0..1u32 << p {
        for j in 0..p {
            let src = set >> j & 1 == 1;
            for (t, v) in masked.column_mut(j).iter_mut().enumerate() {
                *v = if src { window[[t, j]] } else { background_means[j] };
            }
        }
        values.push(f(masked.view())?);
    }
    let phi = brute_force_shapley(|s| values[s as usize], p)?;
    Ok(Attribution {
        timestamp: None,
        base_value: values[0],
        prediction: values[(1usize << p) - 1],
        phi,
    })
}

/// Signed attributions for consecutive forecasts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionTable {
    pub method: ShapMethod,
    pub convention: String,
    pub feature_names: Vec<String>,
    pub rows: Vec<Attribution>,
}

impl AttributionTable {
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["timestamp".to_string(), "base_value".into(), "prediction".into()];
        header.extend(self.feature_names.iter().cloned());
        csv_result(w.write_record(&header))?;
        for row in &self.rows {
            let mut rec = vec![
                row.timestamp.map(|d| d.to_string()).unwrap_or_default(),
                row.base_value.to_string(),
                row.prediction.to_string(),
            ];
            // Adding 0.0 turns -0 into 0.
            rec.extend(row.phi.iter().map(|v| (v + 0.0).to_string()));
            csv_result(w.write_record(&rec))?;
        }
        csv_result(w.flush().map_err(csv::Error::from))
    }

    pub fn max_local_accuracy_error(&self) -> f64 {
        self.rows.iter().map(|r| r.local_accuracy_error()).fold(0.0, f64::max)
    }
}

fn csv_result<T>(r: std::result::Result<T, csv::Error>) -> Result<T> {
    r.map_err(|e| Error::io("<csv output>", std::io::Error::other(e)))
}

/// One attribution per row of `test`. `train_x` supplies background means
/// for the substitution method and history for sequence models.
pub fn shap_timeseries(
    model: &FittedModel,
    test: &SupervisedDataset,
    train_x: ArrayView2<f64>,
    method: ShapMethod,
) -> Result<AttributionTable> {
    let method = method.resolve(model)?;
    let p = test.n_features();
    if train_x.ncols() != p {
        return Err(Error::Dimension { expected: p, got: train_x.ncols() });
    }
    if method == ShapMethod::Exact && p > MAX_BRUTE_FORCE_FEATURES {
        return Err(Error::TooManyFeatures(p));
    }
    let means: Vec<f64> = if train_x.nrows() > 0 {
        train_x.mean_axis(Axis(0)).expect("nonempty").to_vec()
    } else {
        test.x.mean_axis(Axis(0)).map(|m| m.to_vec()).unwrap_or_else(|| vec![0.0; p])
    };
    let history: Option<(Array2<f64>, &GruModel)> = match model {
        FittedModel::Gru(g) => Some((g.stack_history(train_x, test.x.view())?, g)),
        _ => None,
    };
    let rows = par::map_range(test.n_rows(), |i| -> Result<Attribution> {
        let x = test.x.row(i);
        let mut att = match (method, model, &history) {
            (ShapMethod::Tree, FittedModel::Ensemble(m), _) => tree_shap(m, x)?,
            (ShapMethod::Linear, FittedModel::Linear(m), _) => linear_shap(m, x, None)?,
            (_, _, Some((full, g))) => {
                let window = full.slice(s![i..i + g.lookback, ..]);
                substitution_shap(|w| g.predict_window(w), window, &means)?
            }
            _ => {
                let row = x.insert_axis(Axis(0));
                substitution_shap(|w| Ok(point_predict(model, w.row(0))), row, &means)?
            }
        };
        att.timestamp = Some(test.timestamps[i]);
        Ok(att)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(AttributionTable {
        method,
        convention: method.convention().to_string(),
        feature_names: test.feature_names.clone(),
        rows,
    })
}

fn point_predict(model: &FittedModel, x: ArrayView1<f64>) -> f64 {
    match model {
        FittedModel::Linear(m) => m.predict_row(x),
        FittedModel::Ensemble(m) => m.predict_row(x),
        FittedModel::Gru(_) => unreachable!("sequence models take the windowed path"),
    }
}
