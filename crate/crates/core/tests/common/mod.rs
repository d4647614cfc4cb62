//! Test-only helpers: an interior-point QP oracle for the weighted SVM
//! primal and random instance generation.

#![allow(dead_code)]

pub mod checks;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, NonnegativeConeT, SolverStatus,
};
use rand::Rng;
use revex::features::FeatureVector;

/// Dense weighted-SVM instance.
#[derive(Debug, Clone)]
pub struct Instance {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub c: f64,
    pub w_pos: f64,
    pub w_neg: f64,
}

impl Instance {
    pub fn dim(&self) -> usize {
        self.x[0].len()
    }

    pub fn sparse(&self) -> Vec<FeatureVector> {
        self.x
            .iter()
            .map(|row| FeatureVector {
                entries: row
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(i, v)| (i, *v))
                    .collect(),
            })
            .collect()
    }

    pub fn bound(&self, i: usize) -> f64 {
        self.c * if self.y[i] > 0.0 { self.w_pos } else { self.w_neg }
    }

    /// Primal objective evaluated directly from its definition.
    pub fn objective(&self, w: &[f64], b: f64) -> f64 {
        let reg: f64 = 0.5 * w.iter().map(|v| v * v).sum::<f64>();
        let loss: f64 = (0..self.y.len())
            .map(|i| {
                let f: f64 = self.x[i].iter().zip(w).map(|(a, b)| a * b).sum::<f64>() + b;
                self.bound(i) * (1.0 - self.y[i] * f).max(0.0)
            })
            .sum();
        reg + loss
    }
}

pub fn random_instance<R: Rng>(rng: &mut R, max_n: usize, max_d: usize) -> Instance {
    let d = rng.gen_range(1..=max_d);
    let n = rng.gen_range(2..=max_n);
    let mut y: Vec<f64> = (0..n)
        .map(|_| if rng.gen_bool(0.5) { 1.0 } else { -1.0 })
        .collect();
    y[0] = 1.0;
    y[1] = -1.0;
    let shift: f64 = rng.gen_range(0.0..2.0);
    let x = y
        .iter()
        .map(|&yi| {
            (0..d)
                .map(|_| {
                    if rng.gen_bool(0.2) {
                        0.0
                    } else {
                        // small integers keep the data close to count features
                        (rng.gen_range(-3i32..=3) as f64) + yi * shift
                    }
                })
                .collect()
        })
        .collect();
    Instance {
        x,
        y,
        c: 10f64.powf(rng.gen_range(-2.0..=2.0)),
        w_pos: 10f64.powf(rng.gen_range(-1.0..=1.0)),
        w_neg: 10f64.powf(rng.gen_range(-1.0..=1.0)),
    }
}

/// Solves the primal QP over (w, b, ξ) with an interior-point method and
/// returns `(w, b, objective)`, the objective recomputed at the returned point.
pub fn qp_oracle(inst: &Instance) -> (Vec<f64>, f64, f64) {
    let n = inst.y.len();
    let d = inst.dim();
    let nv = d + 1 + n;

    // P = diag(1 for w, 0 otherwise), upper triangle
    let mut colptr = vec![0usize];
    let mut rowval = Vec::new();
    let mut nzval = Vec::new();
    for j in 0..nv {
        if j < d {
            rowval.push(j);
            nzval.push(1.0);
        }
        colptr.push(rowval.len());
    }
    let p = CscMatrix::new(nv, nv, colptr, rowval, nzval);
    let mut q = vec![0.0; nv];
    for i in 0..n {
        q[d + 1 + i] = inst.bound(i);
    }

    // rows 0..n:   -y_i x_i·w - y_i b - ξ_i <= -1
    // rows n..2n:  -ξ_i <= 0
    let mut dense = vec![vec![0.0; nv]; 2 * n];
    let mut rhs = vec![0.0; 2 * n];
    for i in 0..n {
        for k in 0..d {
            dense[i][k] = -inst.y[i] * inst.x[i][k];
        }
        dense[i][d] = -inst.y[i];
        dense[i][d + 1 + i] = -1.0;
        rhs[i] = -1.0;
        dense[n + i][d + 1 + i] = -1.0;
    }
    let a = CscMatrix::from(&dense);
    let cones = [NonnegativeConeT(2 * n)];
    let settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .max_iter(500)
        .tol_gap_abs(1e-12)
        .tol_gap_rel(1e-12)
        .tol_feas(1e-12)
        .tol_ktratio(1e-10)
        .build()
        .unwrap();
    let mut solver = DefaultSolver::new(&p, &q, &a, &rhs, &cones, settings).unwrap();
    solver.solve();
    assert!(
        matches!(
            solver.solution.status,
            SolverStatus::Solved | SolverStatus::AlmostSolved
        ),
        "oracle failed: {:?}",
        solver.solution.status
    );
    let w = solver.solution.x[..d].to_vec();
    let b = solver.solution.x[d];
    let obj = inst.objective(&w, b);
    (w, b, obj)
}
