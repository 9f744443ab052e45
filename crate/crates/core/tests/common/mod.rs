//! Reference computations written independently of the library, used as
//! oracles by the integration tests.
#![allow(dead_code)]

use override_lab::kernel::{
    ActionId, Catalog, ClinicalAction, ClinicianId, ContractContext, ContractId, ContractKind, Decision, DomainId,
    InteractionRecord, PatientId, PatientState, PreferencePair,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `ln sigma(x)` without overflow for large negative `x`.
pub fn ln_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

pub fn entropy_bits(p: f64) -> f64 {
    let h = |q: f64| if q > 0.0 { -q * q.log2() } else { 0.0 };
    h(p) + h(1.0 - p)
}

/// `[s (x) a, a, c (x) a]`, action coordinate fastest.
pub fn features(state: &[f64], action: &[f64], contract: &[f64]) -> Vec<f64> {
    let mut f = Vec::new();
    for s in state {
        f.extend(action.iter().map(|a| s * a));
    }
    f.extend_from_slice(action);
    for c in contract {
        f.extend(action.iter().map(|a| c * a));
    }
    f
}

pub fn pair_diff(catalog: &Catalog, state: &[f64], hi: ActionId, lo: ActionId, contract: ContractId) -> Vec<f64> {
    let c = &catalog.contract(contract).features;
    let a = features(state, &catalog.action(hi).features, c);
    let b = features(state, &catalog.action(lo).features, c);
    a.iter().zip(&b).map(|(x, y)| x - y).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `sum_i w_i ln sigma(theta . d_i) / sum_i w_i - ridge / 2 |theta|^2`.
pub fn weighted_objective(diffs: &[Vec<f64>], weights: &[f64], ridge: f64, theta: &[f64]) -> f64 {
    let total: f64 = weights.iter().sum();
    let ll: f64 = diffs.iter().zip(weights).map(|(d, w)| w * ln_sigmoid(dot(theta, d))).sum();
    ll / total - 0.5 * ridge * dot(theta, theta)
}

/// Difference vectors and weights of library pairs, recomputed from scratch.
pub fn pair_terms(pairs: &[PreferencePair], catalog: &Catalog) -> (Vec<Vec<f64>>, Vec<f64>) {
    pairs
        .iter()
        .filter(|p| p.capability_weight * p.reward_class_weight > 0.0)
        .map(|p| {
            (
                pair_diff(catalog, &p.state.features, p.preferred, p.dispreferred, p.contract),
                p.capability_weight * p.reward_class_weight,
            )
        })
        .unzip()
}

/// Central finite-difference gradient.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    let mut y = x.to_vec();
    for i in 0..x.len() {
        y[i] = x[i] + h;
        let up = f(&y);
        y[i] = x[i] - h;
        let down = f(&y);
        y[i] = x[i];
        g[i] = (up - down) / (2.0 * h);
    }
    g
}

/// `|a - b|_inf / max(|b|_inf, floor)`.
pub fn rel_err(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let num = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    let den = b.iter().fold(0.0f64, |m, y| m.max(y.abs())).max(floor);
    num / den
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// Plain Bradley-Terry fit: every pair counts once, mean log-likelihood with
/// an L2 penalty, solved by undamped Newton from zero.
pub fn bradley_terry(diffs: &[Vec<f64>], ridge: f64, dim: usize) -> Vec<f64> {
    let n = diffs.len() as f64;
    let mut theta = vec![0.0; dim];
    for _ in 0..200 {
        let mut g: Vec<f64> = theta.iter().map(|t| -ridge * t).collect();
        let mut h = vec![vec![0.0; dim]; dim];
        for (i, row) in h.iter_mut().enumerate() {
            row[i] = ridge;
        }
        for d in diffs {
            let p = sigmoid(dot(&theta, d));
            for i in 0..dim {
                g[i] += (1.0 - p) * d[i] / n;
                for j in 0..dim {
                    h[i][j] += p * (1.0 - p) * d[i] * d[j] / n;
                }
            }
        }
        if g.iter().all(|x| x.abs() < 1e-14) {
            break;
        }
        let step = solve(h, g);
        for (t, s) in theta.iter_mut().zip(&step) {
            *t += s;
        }
    }
    theta
}

/// Maximises `f` over the box `[-bound, bound]^dim` by exhaustive grid
/// search, re-gridding around the best point until the cell width is below
/// `tol`.
pub fn grid_search(f: impl Fn(&[f64]) -> f64, dim: usize, bound: f64, points: usize, tol: f64) -> (Vec<f64>, f64) {
    let mut lo = vec![-bound; dim];
    let mut hi = vec![bound; dim];
    let mut best = (vec![0.0; dim], f64::NEG_INFINITY);
    loop {
        let step: Vec<f64> = lo.iter().zip(&hi).map(|(l, h)| (h - l) / (points - 1) as f64).collect();
        let mut idx = vec![0usize; dim];
        let mut x = vec![0.0; dim];
        'grid: loop {
            for k in 0..dim {
                x[k] = lo[k] + step[k] * idx[k] as f64;
            }
            let v = f(&x);
            if v > best.1 {
                best = (x.clone(), v);
            }
            for k in 0..dim {
                idx[k] += 1;
                if idx[k] < points {
                    continue 'grid;
                }
                idx[k] = 0;
            }
            break;
        }
        if step.iter().all(|s| *s < tol) {
            return best;
        }
        for k in 0..dim {
            lo[k] = (best.0[k] - 2.0 * step[k]).max(-bound);
            hi[k] = (best.0[k] + 2.0 * step[k]).min(bound);
        }
    }
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut r = vec![0.0; v.len()];
        for i in 0..v.len() {
            let less = v.iter().filter(|w| **w < v[i]).count() as f64;
            let equal = v.iter().filter(|w| **w == v[i]).count() as f64;
            r[i] = less + (equal + 1.0) / 2.0;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

pub fn random_catalog(rng: &mut ChaCha8Rng, actions: usize, action_dim: usize, contract_dim: usize) -> Catalog {
    let acts = (0..actions)
        .map(|i| ClinicalAction {
            id: ActionId(i),
            name: format!("a{i}"),
            class: format!("c{i}"),
            features: (0..action_dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
            complexity: rng.random_range(0.0..1.0),
        })
        .collect();
    let contracts = (0..2)
        .map(|i| ContractContext {
            id: ContractId(i),
            name: format!("k{i}"),
            kind: ContractKind::Custom,
            features: (0..contract_dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
        })
        .collect();
    Catalog::new(acts, contracts, ActionId(0)).unwrap()
}

pub fn random_state(rng: &mut ChaCha8Rng, dim: usize) -> PatientState {
    let f = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    PatientState::new(PatientId(rng.random_range(0..1000)), DomainId(0), 0, f, rng.random_range(0..50)).unwrap()
}

pub fn random_records(rng: &mut ChaCha8Rng, cat: &Catalog, n: usize, clinicians: u32) -> Vec<InteractionRecord> {
    (0..n)
        .map(|_| {
            let rec = ActionId(rng.random_range(1..cat.len()));
            let alt = ActionId((rec.0 + rng.random_range(1..cat.len())) % cat.len());
            let (decision, executed) = match rng.random_range(0..3) {
                0 => (Decision::accept(), rec),
                1 => (Decision::modify(alt), alt),
                _ => (Decision::reject(Some(alt)), alt),
            };
            InteractionRecord::new(
                random_state(rng, 1),
                rec,
                decision,
                executed,
                ClinicianId(rng.random_range(0..clinicians)),
                ContractId(rng.random_range(0..2)),
                None,
            )
            .unwrap()
        })
        .collect()
}

