use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::kernel::{accumulate_logsig, log_logistic, logistic, logit_ceiling, Catalog, FeatureMap, PreferencePair, RewardModel};

fn d_tol() -> f64 {
    1e-8
}
fn d_iters() -> usize {
    100
}
fn d_ridge() -> f64 {
    1e-3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MStepOptions {
    /// Stop once the largest gradient component falls below this.
    #[serde(default = "d_tol")]
    pub tol_grad: f64,
    #[serde(default = "d_iters")]
    pub max_iter: usize,
    /// L2 penalty `ridge / 2 * |theta|^2` on the mean log-likelihood.
    #[serde(default = "d_ridge")]
    pub ridge: f64,
}

impl Default for MStepOptions {
    fn default() -> Self {
        Self {
            tol_grad: d_tol(),
            max_iter: d_iters(),
            ridge: d_ridge(),
        }
    }
}

/// Weighted pair log-likelihood in a form cheap to evaluate repeatedly.
///
/// `J(theta) = sum_i w_i ln sigma(theta . d_i) / sum_i w_i - ridge / 2 * |theta|^2`
/// with `w_i = beta(kappa_i) * reward_class_weight_i` and `d_i` the feature
/// difference of the pair. Pairs with identical difference vectors are merged
/// and zero-weight pairs dropped.
#[derive(Debug, Clone)]
pub struct PairObjective {
    diffs: Vec<Vec<f64>>,
    weights: Vec<f64>,
    total_weight: f64,
    ridge: f64,
    dim: usize,
}

impl PairObjective {
    pub fn new(pairs: &[PreferencePair], catalog: &Catalog, map: FeatureMap, ridge: f64) -> Result<Self> {
        if !(ridge >= 0.0 && ridge.is_finite()) {
            return Err(LabError::OutOfRange {
                name: "ridge",
                value: ridge,
                range: "[0, inf)",
            });
        }
        let mut index: BTreeMap<Vec<u64>, usize> = BTreeMap::new();
        let mut diffs = Vec::new();
        let mut weights: Vec<f64> = Vec::new();
        let mut total_weight = 0.0;
        for p in pairs {
            p.validate()?;
            let w = p.reward_weight();
            if w == 0.0 {
                continue;
            }
            let d = map.pair_difference(catalog, &p.state.features, p.preferred, p.dispreferred, p.contract)?;
            let key: Vec<u64> = d.iter().map(|x| x.to_bits()).collect();
            match index.get(&key) {
                Some(&i) => weights[i] += w,
                None => {
                    index.insert(key, diffs.len());
                    diffs.push(d);
                    weights.push(w);
                }
            }
            total_weight += w;
        }
        if !(total_weight > 0.0) {
            return Err(LabError::AllZeroWeights);
        }
        if !total_weight.is_finite() {
            return Err(LabError::NonFiniteObjective);
        }
        Ok(Self {
            diffs,
            weights,
            total_weight,
            ridge,
            dim: map.dim(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of distinct difference vectors.
    pub fn support(&self) -> usize {
        self.diffs.len()
    }

    pub fn value(&self, theta: &[f64]) -> f64 {
        let bound = logit_ceiling();
        let mut ll = 0.0;
        for (d, w) in self.diffs.iter().zip(&self.weights) {
            let z: f64 = theta.iter().zip(d).map(|(t, x)| t * x).sum();
            ll += w * log_logistic(z.clamp(-bound, bound));
        }
        ll / self.total_weight - 0.5 * self.ridge * theta.iter().map(|t| t * t).sum::<f64>()
    }

    pub fn value_and_grad(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.dim];
        let mut ll = 0.0;
        for (d, w) in self.diffs.iter().zip(&self.weights) {
            ll += accumulate_logsig(theta, d, *w, &mut grad);
        }
        let scale = 1.0 / self.total_weight;
        for (g, t) in grad.iter_mut().zip(theta) {
            *g = *g * scale - self.ridge * t;
        }
        let value = ll * scale - 0.5 * self.ridge * theta.iter().map(|t| t * t).sum::<f64>();
        (value, grad)
    }

    /// Negative Hessian, which is positive semi-definite.
    fn curvature(&self, theta: &[f64]) -> DMatrix<f64> {
        let n = self.dim;
        let mut h = DMatrix::<f64>::zeros(n, n);
        for (d, w) in self.diffs.iter().zip(&self.weights) {
            let z: f64 = theta.iter().zip(d).map(|(t, x)| t * x).sum();
            let s = logistic(z);
            let c = w * s * (1.0 - s) / self.total_weight;
            if c == 0.0 {
                continue;
            }
            for i in 0..n {
                if d[i] == 0.0 {
                    continue;
                }
                let ci = c * d[i];
                for j in 0..n {
                    h[(i, j)] += ci * d[j];
                }
            }
        }
        for i in 0..n {
            h[(i, i)] += self.ridge;
        }
        h
    }

    fn newton_direction(&self, theta: &[f64], grad: &[f64]) -> Vec<f64> {
        let h = self.curvature(theta);
        let g = DVector::from_column_slice(grad);
        let scale = (h.trace() / self.dim as f64).max(1e-12);
        let mut jitter = 0.0;
        for _ in 0..8 {
            let mut m = h.clone();
            for i in 0..self.dim {
                m[(i, i)] += jitter;
            }
            if let Some(ch) = m.cholesky() {
                let step = ch.solve(&g);
                if step.iter().all(|x| x.is_finite()) {
                    return step.iter().copied().collect();
                }
            }
            jitter = if jitter == 0.0 { 1e-10 * scale } else { jitter * 100.0 };
        }
        grad.to_vec()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MStepResult {
    pub model: RewardModel,
    pub objective: f64,
    pub iterations: usize,
    pub grad_max: f64,
    pub converged: bool,
    /// Objective after every accepted step, starting with the initial value.
    pub objective_trace: Vec<f64>,
}

const ARMIJO: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;

/// Maximises the pair objective from `init` by damped Newton ascent with a
/// backtracking (Armijo) line search. Every accepted step increases the
/// objective.
pub fn m_step_objective(objective: &PairObjective, init: &RewardModel, options: &MStepOptions) -> Result<MStepResult> {
    let map = init.map();
    if map.dim() != objective.dim() {
        return Err(LabError::DimensionMismatch {
            what: "initial theta",
            expected: objective.dim(),
            got: map.dim(),
        });
    }
    let mut theta = init.theta().to_vec();
    let (mut value, mut grad) = objective.value_and_grad(&theta);
    if !value.is_finite() {
        return Err(LabError::NonFiniteObjective);
    }
    let mut trace = vec![value];
    let mut iterations = 0;
    let grad_max = |g: &[f64]| g.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut converged = grad_max(&grad) < options.tol_grad;
    while !converged && iterations < options.max_iter {
        let dir = objective.newton_direction(&theta, &grad);
        let slope: f64 = dir.iter().zip(&grad).map(|(d, g)| d * g).sum();
        let dir = if slope > 0.0 { dir } else { grad.clone() };
        let slope: f64 = dir.iter().zip(&grad).map(|(d, g)| d * g).sum();
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let cand: Vec<f64> = theta.iter().zip(&dir).map(|(x, d)| x + t * d).collect();
            let v = objective.value(&cand);
            if !v.is_finite() {
                return Err(LabError::NonFiniteObjective);
            }
            if v >= value + ARMIJO * t * slope && v >= value {
                accepted = Some((cand, v));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, _)) = accepted else {
            break;
        };
        theta = cand;
        let (v, g) = objective.value_and_grad(&theta);
        value = v;
        grad = g;
        trace.push(value);
        iterations += 1;
        converged = grad_max(&grad) < options.tol_grad;
    }
    Ok(MStepResult {
        model: RewardModel::new(map, theta)?,
        objective: value,
        iterations,
        grad_max: grad_max(&grad),
        converged,
        objective_trace: trace,
    })
}

/// Fits the reward model to weighted preference pairs.
pub fn m_step(
    pairs: &[PreferencePair],
    catalog: &Catalog,
    init: &RewardModel,
    options: &MStepOptions,
) -> Result<MStepResult> {
    let objective = PairObjective::new(pairs, catalog, init.map(), options.ridge)?;
    m_step_objective(&objective, init, options)
}
