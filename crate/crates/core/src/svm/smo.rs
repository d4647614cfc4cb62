//! Sequential minimal optimization for the weighted hinge-loss SVM with a
//! linear kernel and an unregularized bias.
//!
//! Primal:  min ½‖w‖² + Σᵢ uᵢ · max(0, 1 − yᵢ(w·xᵢ + b)),  uᵢ = C · weight(yᵢ)
//! Dual:    min ½ αᵀQα − Σ αᵢ  s.t. yᵀα = 0, 0 ≤ αᵢ ≤ uᵢ,  Qᵢⱼ = yᵢyⱼ xᵢ·xⱼ
//!
//! Working pairs are chosen with second-order information (maximal gain
//! over all violating partners of the steepest index). The KKT tolerance
//! is tightened until the duality gap, measured against the primal at the
//! exactly optimal bias for the current `w`, is within the requested
//! objective tolerance.
//!
//! Pair updates converge slowly on degenerate problems (few features, large
//! C), where many multipliers must travel far along nearly flat directions.
//! Periodically, and before each gap check, a polishing pass minimizes the
//! dual over all free multipliers at once with projected conjugate gradient
//! and steps toward that minimizer as far as the box allows.

use std::collections::HashMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::features::FeatureVector;

const TAU: f64 = 1e-12;
const INITIAL_KKT_EPS: f64 = 1e-3;
/// Row cache budget in f64 entries (64 MiB).
const CACHE_ENTRIES: usize = 8 << 20;
/// Conjugate-gradient steps allowed per polishing pass.
const POLISH_CG_STEPS: usize = 100;
/// Consecutive passes allowed while bounds keep blocking the step.
const POLISH_PASSES: usize = 20;
/// KKT violation that lets a bound multiplier join a polishing pass.
const RELEASE_TOL: f64 = 1e-9;
/// Ridge added to the polishing system, relative to the largest diagonal.
const RIDGE: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct Problem<'a> {
    pub x: Vec<&'a FeatureVector>,
    /// ±1 labels.
    pub y: Vec<f64>,
    /// Box bound per example (C times its class weight).
    pub upper: Vec<f64>,
    pub n_features: usize,
}

#[derive(Debug, Clone)]
pub struct SolverOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub seed: u64,
    pub record_trace: bool,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub primal: f64,
    pub dual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Minimized dual objective after every pair update or polishing pass.
    pub trace: Vec<f64>,
}

/// Kernel rows computed through a column index and kept in a bounded cache.
struct Rows<'a> {
    x: &'a [&'a FeatureVector],
    columns: Vec<Vec<(u32, f64)>>,
    cache: HashMap<usize, (u64, Arc<[f64]>)>,
    clock: u64,
    capacity_rows: usize,
}

impl<'a> Rows<'a> {
    fn new(x: &'a [&'a FeatureVector], n_features: usize) -> Self {
        let mut columns = vec![Vec::new(); n_features];
        for (r, v) in x.iter().enumerate() {
            for &(c, val) in &v.entries {
                columns[c].push((r as u32, val));
            }
        }
        let capacity_rows = (CACHE_ENTRIES / x.len().max(1)).max(2);
        Rows {
            x,
            columns,
            cache: HashMap::new(),
            clock: 0,
            capacity_rows,
        }
    }

    fn get(&mut self, i: usize) -> Arc<[f64]> {
        self.clock += 1;
        if let Some(entry) = self.cache.get_mut(&i) {
            entry.0 = self.clock;
            return entry.1.clone();
        }
        let mut row = vec![0.0; self.x.len()];
        for &(c, v) in &self.x[i].entries {
            for &(r, u) in &self.columns[c] {
                row[r as usize] += v * u;
            }
        }
        let row: Arc<[f64]> = row.into();
        if self.cache.len() >= self.capacity_rows {
            if let Some(&oldest) = self.cache.iter().min_by_key(|(_, e)| e.0).map(|(k, _)| k) {
                self.cache.remove(&oldest);
            }
        }
        self.cache.insert(i, (self.clock, row.clone()));
        row
    }
}

/// Bias minimizing `Σ uᵢ max(0, 1 − yᵢ(sᵢ + b))` and the minimal value.
/// When the minimum is attained on an interval its midpoint is returned.
pub fn optimal_bias(scores: &[f64], y: &[f64], upper: &[f64]) -> (f64, f64) {
    let hinge = |b: f64| -> f64 {
        scores
            .iter()
            .zip(y)
            .zip(upper)
            .map(|((s, yi), u)| u * (1.0 - yi * (s + b)).max(0.0))
            .sum()
    };
    // a positive stops contributing above 1 − s, a negative starts above −1 − s;
    // either way the slope rises by u at its breakpoint
    let mut points: Vec<(f64, f64)> = scores
        .iter()
        .zip(y)
        .zip(upper)
        .map(|((s, yi), u)| (if *yi > 0.0 { 1.0 - s } else { -1.0 - s }, *u))
        .collect();
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = upper.iter().sum();
    let pos_total: f64 = y.iter().zip(upper).filter(|(yi, _)| **yi > 0.0).map(|(_, u)| u).sum();
    let flat_tol = 1e-12 * total.max(1.0);

    let mut slope = -pos_total;
    let mut k = 0;
    while k < points.len() {
        let t = points[k].0;
        while k < points.len() && points[k].0 == t {
            slope += points[k].1;
            k += 1;
        }
        if slope > flat_tol {
            return (t, hinge(t));
        }
        if slope >= -flat_tol {
            let b = match points.get(k) {
                Some(next) => 0.5 * (t + next.0),
                None => t,
            };
            return (b, hinge(b));
        }
    }
    // only reachable with a single class present
    let b = points.last().map_or(0.0, |p| p.0);
    (b, hinge(b))
}

pub fn solve(problem: &Problem<'_>, opts: &SolverOptions) -> Solution {
    let n = problem.x.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(opts.seed));

    let x: Vec<&FeatureVector> = order.iter().map(|&i| problem.x[i]).collect();
    let y: Vec<f64> = order.iter().map(|&i| problem.y[i]).collect();
    let upper: Vec<f64> = order.iter().map(|&i| problem.upper[i]).collect();
    let diag: Vec<f64> = x.iter().map(|v| v.squared_norm()).collect();

    let mut rows = Rows::new(&x, problem.n_features);
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let mut trace = Vec::new();
    let mut iterations = 0usize;
    let mut eps = INITIAL_KKT_EPS;
    let polish_every = n.max(50);

    let in_up = |a: f64, yi: f64, u: f64| if yi > 0.0 { a < u } else { a > 0.0 };
    let in_low = |a: f64, yi: f64, u: f64| if yi > 0.0 { a > 0.0 } else { a < u };

    loop {
        // inner SMO sweep at the current KKT tolerance
        let mut capped = false;
        loop {
            if iterations >= opts.max_iterations {
                capped = true;
                break;
            }
            let mut gmax = f64::NEG_INFINITY;
            let mut i_sel = usize::MAX;
            for t in 0..n {
                if in_up(alpha[t], y[t], upper[t]) {
                    let v = -y[t] * grad[t];
                    if v >= gmax {
                        gmax = v;
                        i_sel = t;
                    }
                }
            }
            if i_sel == usize::MAX {
                break;
            }
            let i = i_sel;
            let row_i = rows.get(i);
            let mut gmax2 = f64::NEG_INFINITY;
            let mut best_gain = f64::INFINITY;
            let mut j_sel = usize::MAX;
            for t in 0..n {
                if !in_low(alpha[t], y[t], upper[t]) {
                    continue;
                }
                let v = y[t] * grad[t];
                if v >= gmax2 {
                    gmax2 = v;
                }
                let grad_diff = gmax + v;
                if grad_diff > 0.0 {
                    let quad = diag[i] + diag[t] - 2.0 * row_i[t];
                    let quad = if quad > 0.0 { quad } else { TAU };
                    let gain = -(grad_diff * grad_diff) / quad;
                    if gain <= best_gain {
                        best_gain = gain;
                        j_sel = t;
                    }
                }
            }
            if gmax + gmax2 < eps || j_sel == usize::MAX {
                break;
            }
            let j = j_sel;
            let row_j = rows.get(j);

            let (ci, cj) = (upper[i], upper[j]);
            let (old_i, old_j) = (alpha[i], alpha[j]);
            let qij = y[i] * y[j] * row_i[j];
            if y[i] != y[j] {
                let quad = diag[i] + diag[j] + 2.0 * qij;
                let quad = if quad > 0.0 { quad } else { TAU };
                let delta = (-grad[i] - grad[j]) / quad;
                let diff = alpha[i] - alpha[j];
                alpha[i] += delta;
                alpha[j] += delta;
                if diff > 0.0 {
                    if alpha[j] < 0.0 {
                        alpha[j] = 0.0;
                        alpha[i] = diff;
                    }
                } else if alpha[i] < 0.0 {
                    alpha[i] = 0.0;
                    alpha[j] = -diff;
                }
                if diff > ci - cj {
                    if alpha[i] > ci {
                        alpha[i] = ci;
                        alpha[j] = ci - diff;
                    }
                } else if alpha[j] > cj {
                    alpha[j] = cj;
                    alpha[i] = cj + diff;
                }
            } else {
                let quad = diag[i] + diag[j] - 2.0 * qij;
                let quad = if quad > 0.0 { quad } else { TAU };
                let delta = (grad[i] - grad[j]) / quad;
                let sum = alpha[i] + alpha[j];
                alpha[i] -= delta;
                alpha[j] += delta;
                if sum > ci {
                    if alpha[i] > ci {
                        alpha[i] = ci;
                        alpha[j] = sum - ci;
                    }
                } else if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = sum;
                }
                if sum > cj {
                    if alpha[j] > cj {
                        alpha[j] = cj;
                        alpha[i] = sum - cj;
                    }
                } else if alpha[i] < 0.0 {
                    alpha[i] = 0.0;
                    alpha[j] = sum;
                }
            }

            let di = (alpha[i] - old_i) * y[i];
            let dj = (alpha[j] - old_j) * y[j];
            for k in 0..n {
                grad[k] += y[k] * (row_i[k] * di + row_j[k] * dj);
            }
            iterations += 1;
            if opts.record_trace {
                trace.push(dual_value(&alpha, &grad));
            }
            if iterations % polish_every == 0 && iterations < opts.max_iterations {
                let passes = polish(&x, &y, &upper, &mut alpha, &mut grad, problem.n_features);
                if passes > 0 {
                    iterations += passes;
                    if opts.record_trace {
                        trace.push(dual_value(&alpha, &grad));
                    }
                }
            }
        }
        let passes = if capped { 0 } else { polish(&x, &y, &upper, &mut alpha, &mut grad, problem.n_features) };
        if passes > 0 {
            iterations += passes;
            if opts.record_trace {
                trace.push(dual_value(&alpha, &grad));
            }
        }

        let state = evaluate(&x, &y, &upper, &alpha, problem.n_features);
        // refresh gradients from w to shed accumulated rounding
        for k in 0..n {
            grad[k] = y[k] * state.scores[k] - 1.0;
        }
        let gap = state.primal - state.dual;
        let converged = gap <= opts.tolerance;
        if converged || capped || eps < 1e-15 {
            return Solution {
                weights: state.weights,
                bias: state.bias,
                primal: state.primal,
                dual: state.dual,
                iterations,
                converged,
                trace,
            };
        }
        eps /= 10.0;
    }
}

/// Sparse `Σ cᵢ yᵢ xᵢ` over `idx` as a dense feature vector.
fn combine(x: &[&FeatureVector], y: &[f64], idx: &[usize], coef: &[f64], n_features: usize) -> Vec<f64> {
    let mut out = vec![0.0; n_features];
    for (&i, &c) in idx.iter().zip(coef) {
        if c != 0.0 {
            for &(f, v) in &x[i].entries {
                out[f] += c * y[i] * v;
            }
        }
    }
    out
}

/// Polishing passes over the free multipliers, repeated while a bound cuts
/// the step short. Returns the number of passes that lowered the dual.
fn polish(
    x: &[&FeatureVector],
    y: &[f64],
    upper: &[f64],
    alpha: &mut [f64],
    grad: &mut [f64],
    n_features: usize,
) -> usize {
    let mut passes = 0;
    while passes < POLISH_PASSES {
        match polish_pass(x, y, upper, alpha, grad, n_features) {
            Some(blocked) => {
                passes += 1;
                if !blocked {
                    break;
                }
            }
            None => break,
        }
    }
    passes
}

/// One pass: `None` when the dual could not be lowered, otherwise whether a
/// bound stopped a step before its line minimizer.
fn polish_pass(
    x: &[&FeatureVector],
    y: &[f64],
    upper: &[f64],
    alpha: &mut [f64],
    grad: &mut [f64],
    n_features: usize,
) -> Option<bool> {
    let is_free = |i: usize| alpha[i] > 0.0 && alpha[i] < upper[i];
    let free: Vec<usize> = (0..alpha.len()).filter(|&i| is_free(i)).collect();
    if free.is_empty() {
        return None;
    }
    // bound multipliers that the bias implied by the free ones would release
    let b = -free.iter().map(|&i| y[i] * grad[i]).sum::<f64>() / free.len() as f64;
    let mut work: Vec<usize> = (0..alpha.len())
        .filter(|&i| {
            let g = grad[i] + b * y[i];
            is_free(i) || (alpha[i] <= 0.0 && g < -RELEASE_TOL) || (alpha[i] >= upper[i] && g > RELEASE_TOL)
        })
        .collect();

    let mut d;
    loop {
        if work.len() < 2 {
            return None;
        }
        d = newton_direction(x, y, &work, grad, n_features);
        // a bound multiplier pushed outward stays where it is
        let keep: Vec<bool> = work
            .iter()
            .zip(&d)
            .map(|(&i, &v)| !((alpha[i] <= 0.0 && v < 0.0) || (alpha[i] >= upper[i] && v > 0.0)))
            .collect();
        if keep.iter().all(|k| *k) {
            break;
        }
        work = work.iter().zip(&keep).filter(|(_, k)| **k).map(|(i, _)| *i).collect();
    }

    let mut outcome = None;
    if d.iter().any(|v| *v != 0.0) {
        outcome = box_step(x, y, upper, alpha, grad, &work, &d, n_features);
        if outcome == Some(true) {
            return outcome;
        }
    }
    // gradient left over in directions of (near) zero curvature, where the
    // dual is linear and only a bound stops the descent
    let e = projected_descent(y, &work, grad);
    match box_step(x, y, upper, alpha, grad, &work, &e, n_features) {
        None => outcome,
        done => done,
    }
}

/// `−g` over `idx`, projected onto the hyperplane `yᵀd = 0`.
fn projected_descent(y: &[f64], idx: &[usize], grad: &[f64]) -> Vec<f64> {
    let mut r: Vec<f64> = idx.iter().map(|&i| -grad[i]).collect();
    project(y, idx, &mut r);
    r
}

fn project(y: &[f64], idx: &[usize], v: &mut [f64]) {
    let s = idx.iter().zip(v.iter()).map(|(&i, a)| y[i] * a).sum::<f64>() / idx.len() as f64;
    idx.iter().zip(v.iter_mut()).for_each(|(&i, a)| *a -= s * y[i]);
}

/// Approximate minimizer of `½dᵀ(Q + μI)d + gᵀd` over `idx` subject to
/// `yᵀd = 0`, by conjugate gradient. The small ridge μ keeps the system
/// nonsingular; along directions where Q is flat the result grows like 1/μ,
/// so the line search then walks to the box.
fn newton_direction(x: &[&FeatureVector], y: &[f64], idx: &[usize], grad: &[f64], n_features: usize) -> Vec<f64> {
    let ridge = RIDGE * idx.iter().map(|&i| x[i].squared_norm()).fold(1.0, f64::max);
    let mut r = projected_descent(y, idx, grad);
    let r0 = r.iter().map(|v| v * v).sum::<f64>();
    let mut d = vec![0.0; idx.len()];
    if r0 == 0.0 {
        return d;
    }
    let mut p = r.clone();
    let mut rr = r0;
    for _ in 0..POLISH_CG_STEPS.min(idx.len()) {
        let u = combine(x, y, idx, &p, n_features);
        let mut qp: Vec<f64> = idx.iter().zip(&p).map(|(&i, pi)| y[i] * x[i].dot(&u) + ridge * pi).collect();
        let curv = p.iter().zip(&qp).map(|(a, b)| a * b).sum::<f64>();
        let step = rr / curv;
        d.iter_mut().zip(&p).for_each(|(a, b)| *a += step * b);
        project(y, idx, &mut qp);
        r.iter_mut().zip(&qp).for_each(|(a, b)| *a -= step * b);
        let rr_next = r.iter().map(|v| v * v).sum::<f64>();
        if rr_next <= 1e-24 * r0 {
            break;
        }
        let beta = rr_next / rr;
        p.iter_mut().zip(&r).for_each(|(a, b)| *a = b + beta * *a);
        rr = rr_next;
    }
    d
}

/// Exact line search along `dir` (over the `free` multipliers) clipped to the
/// box. `None` when `dir` is not a descent direction, otherwise whether the
/// box cut the step short.
#[allow(clippy::too_many_arguments)]
fn box_step(
    x: &[&FeatureVector],
    y: &[f64],
    upper: &[f64],
    alpha: &mut [f64],
    grad: &mut [f64],
    free: &[usize],
    dir: &[f64],
    n_features: usize,
) -> Option<bool> {
    let slope: f64 = free.iter().zip(dir).map(|(&i, v)| grad[i] * v).sum();
    if !(slope < 0.0) {
        return None;
    }
    let dw = combine(x, y, free, dir, n_features);
    let curv: f64 = dw.iter().map(|v| v * v).sum();
    let t_line = if curv > 1e-14 * dir.iter().map(|v| v * v).sum::<f64>() {
        -slope / curv
    } else {
        f64::INFINITY
    };
    let mut t_box = f64::INFINITY;
    let mut blocking = None;
    for (k, &i) in free.iter().enumerate() {
        let limit = if dir[k] > 0.0 {
            (upper[i] - alpha[i]) / dir[k]
        } else if dir[k] < 0.0 {
            -alpha[i] / dir[k]
        } else {
            continue;
        };
        if limit < t_box {
            t_box = limit;
            blocking = Some(k);
        }
    }
    let blocked = t_box <= t_line;
    let t = t_line.min(t_box);
    // a direction made of rounding noise moves yᵀα off zero when scaled up
    let drift = t * free.iter().zip(dir).map(|(&i, v)| y[i] * v).sum::<f64>().abs();
    let scale = free.iter().map(|&i| upper[i]).fold(1.0, f64::max);
    if !(t > 0.0 && t.is_finite()) || drift > 1e-12 * scale {
        return None;
    }
    for (k, &i) in free.iter().enumerate() {
        alpha[i] = (alpha[i] + t * dir[k]).clamp(0.0, upper[i]);
    }
    if let (true, Some(k)) = (blocked, blocking) {
        let i = free[k];
        alpha[i] = if dir[k] > 0.0 { upper[i] } else { 0.0 };
    }
    for k in 0..alpha.len() {
        grad[k] += t * y[k] * x[k].dot(&dw);
    }
    Some(blocked)
}

/// Minimized dual objective `½αᵀQα − Σα` from the gradient `Qα − 1`.
fn dual_value(alpha: &[f64], grad: &[f64]) -> f64 {
    0.5 * alpha.iter().zip(grad).map(|(a, g)| a * (g - 1.0)).sum::<f64>()
}

struct State {
    weights: Vec<f64>,
    bias: f64,
    scores: Vec<f64>,
    primal: f64,
    dual: f64,
}

fn evaluate(x: &[&FeatureVector], y: &[f64], upper: &[f64], alpha: &[f64], n_features: usize) -> State {
    let mut weights = vec![0.0; n_features];
    for ((v, yi), a) in x.iter().zip(y).zip(alpha) {
        if *a != 0.0 {
            for &(c, val) in &v.entries {
                weights[c] += a * yi * val;
            }
        }
    }
    let scores: Vec<f64> = x.iter().map(|v| v.dot(&weights)).collect();
    let norm2: f64 = weights.iter().map(|w| w * w).sum();
    let (bias, hinge) = optimal_bias(&scores, y, upper);
    State {
        primal: 0.5 * norm2 + hinge,
        dual: alpha.iter().sum::<f64>() - 0.5 * norm2,
        weights,
        bias,
        scores,
    }
}
