//! Sparse concept coding.
//!
//! Training vectors are embedded with Laplacian eigenmaps over a p-nearest
//! neighbour graph, a ridge regression maps feature space onto that
//! embedding to give the concept basis `U`, and each training vector is then
//! coded against `U` with the lasso. Test vectors are projected as `Uᵀx`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Column-per-sample feature matrix (`D × M`) with one class label per column.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: DMatrix<f64>,
    labels: Vec<usize>,
}

impl FeatureMatrix {
    pub fn new(data: DMatrix<f64>, labels: Vec<usize>) -> Result<Self> {
        if data.ncols() == 0 || data.nrows() == 0 {
            return invalid("feature matrix needs at least one non-empty column");
        }
        if labels.len() != data.ncols() {
            return invalid(format!(
                "{} labels for {} columns",
                labels.len(),
                data.ncols()
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return invalid("feature matrix contains non-finite entries");
        }
        Ok(Self { data, labels })
    }

    pub fn from_columns(columns: &[Vec<f64>], labels: Vec<usize>) -> Result<Self> {
        let Some(first) = columns.first() else {
            return invalid("feature matrix needs at least one column");
        };
        let dim = first.len();
        if let Some(bad) = columns.iter().position(|c| c.len() != dim) {
            return invalid(format!(
                "column {bad} has dimension {}, expected {dim}",
                columns[bad].len()
            ));
        }
        let data = DMatrix::from_fn(dim, columns.len(), |r, c| columns[c][r]);
        Self::new(data, labels)
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn len(&self) -> usize {
        self.data.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.data.ncols() == 0
    }

    /// Columns at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let data = self.data.select_columns(indices);
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Self::new(data, labels)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoderConfig {
    /// Concept dimension.
    pub k: usize,
    /// Ridge regulariser.
    pub tau: f64,
    /// Lasso regulariser.
    pub rho: f64,
    /// Neighbours per sample in the embedding graph.
    pub graph_p: usize,
    /// Eigenvalues above `(1 − 1e−9)·eig_threshold` are discarded.
    pub eig_threshold: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for CoderConfig {
    fn default() -> Self {
        Self {
            k: 64,
            tau: 1000.0,
            rho: 1e-3,
            graph_p: 5,
            eig_threshold: 2.0,
            max_iter: 10_000,
            tol: 1e-7,
            seed: 0,
        }
    }
}

impl CoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return invalid("concept dimension k must be ≥ 1");
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return invalid(format!("ridge parameter tau = {} must be > 0", self.tau));
        }
        if !(self.rho.is_finite() && self.rho >= 0.0) {
            return invalid(format!("lasso parameter rho = {} must be ≥ 0", self.rho));
        }
        if self.graph_p == 0 {
            return invalid("graph_p must be ≥ 1");
        }
        if !(self.eig_threshold.is_finite() && self.eig_threshold > 0.0) {
            return invalid("eig_threshold must be > 0");
        }
        if self.max_iter == 0 || !(self.tol.is_finite() && self.tol > 0.0) {
            return invalid("lasso max_iter and tol must be positive");
        }
        Ok(())
    }
}

/// Affinity added between every pair of samples so the graph is connected.
pub const AFFINITY_FLOOR: f64 = 1e-6;

/// `M × k` spectral coordinates, one row per training sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub y: DMatrix<f64>,
    /// Laplacian eigenvalues of the kept columns, ascending.
    pub eigenvalues: Vec<f64>,
}

fn pairwise_sq_distances(x: &DMatrix<f64>) -> DMatrix<f64> {
    let m = x.ncols();
    let gram = x.transpose() * x;
    let mut d = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in (i + 1)..m {
            let v = (gram[(i, i)] + gram[(j, j)] - 2.0 * gram[(i, j)]).max(0.0);
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    d
}

/// Symmetric-normalised Laplacian `I − D^{-1/2} W D^{-1/2}` of the binary
/// symmetric p-NN graph plus the uniform affinity floor.
pub fn normalized_laplacian(x: &DMatrix<f64>, graph_p: usize) -> DMatrix<f64> {
    let m = x.ncols();
    let dist = pairwise_sq_distances(x);
    let mut w = DMatrix::from_fn(m, m, |i, j| if i == j { 0.0 } else { AFFINITY_FLOOR });
    let p = graph_p.min(m.saturating_sub(1));
    let mut order: Vec<usize> = Vec::with_capacity(m);
    for i in 0..m {
        order.clear();
        order.extend((0..m).filter(|&j| j != i));
        let by_distance =
            |&a: &usize, &b: &usize| dist[(i, a)].total_cmp(&dist[(i, b)]).then(a.cmp(&b));
        if p < order.len() {
            order.select_nth_unstable_by(p, by_distance);
        }
        for &j in &order[..p] {
            w[(i, j)] = 1.0 + AFFINITY_FLOOR;
            w[(j, i)] = 1.0 + AFFINITY_FLOOR;
        }
    }
    let inv_sqrt: Vec<f64> = w.row_sum().iter().map(|d| 1.0 / d.sqrt()).collect();
    DMatrix::from_fn(m, m, |i, j| {
        let delta = if i == j { 1.0 } else { 0.0 };
        delta - w[(i, j)] * inv_sqrt[i] * inv_sqrt[j]
    })
}

/// Flips `v` so that its largest-magnitude entry (first on ties) is positive.
pub(crate) fn fix_sign(mut v: DVector<f64>) -> DVector<f64> {
    let mut pivot = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[pivot].abs() {
            pivot = i;
        }
    }
    if v[pivot] < 0.0 {
        v.neg_mut();
    }
    v
}

/// Laplacian eigenmap of the columns of `x`.
pub fn spectral_embedding(x: &FeatureMatrix, config: &CoderConfig) -> Result<Embedding> {
    config.validate()?;
    let m = x.len();
    if m < config.k + 1 {
        return invalid(format!(
            "embedding dimension k = {} needs at least {} samples, got {m}",
            config.k,
            config.k + 1
        ));
    }
    let lap = normalized_laplacian(&x.data, config.graph_p);
    let eig = lap.symmetric_eigen();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .total_cmp(&eig.eigenvalues[b])
            .then(a.cmp(&b))
    });
    let cutoff = (1.0 - 1e-9) * config.eig_threshold;
    let kept: Vec<usize> = order
        .into_iter()
        .skip(1)
        .filter(|&i| eig.eigenvalues[i] <= cutoff)
        .take(config.k)
        .collect();
    if kept.len() < config.k {
        return invalid(format!(
            "only {} usable eigenvectors for k = {}",
            kept.len(),
            config.k
        ));
    }
    let mut y = DMatrix::zeros(m, config.k);
    for (col, &i) in kept.iter().enumerate() {
        y.set_column(col, &fix_sign(eig.eigenvectors.column(i).into_owned()));
    }
    Ok(Embedding {
        y,
        eigenvalues: kept.iter().map(|&i| eig.eigenvalues[i]).collect(),
    })
}

/// `D × k` basis mapping feature vectors into concept space.
#[derive(Debug, Clone, PartialEq)]
pub struct ConceptBasis {
    pub u: DMatrix<f64>,
    pub tau: f64,
}

impl ConceptBasis {
    pub fn dim(&self) -> usize {
        self.u.nrows()
    }

    pub fn k(&self) -> usize {
        self.u.ncols()
    }
}

/// Ridge solution `U = (X Xᵀ + τ I)^{-1} X Y`.
///
/// When `M < D` the equivalent `X (Xᵀ X + τ I)^{-1} Y` is solved instead.
pub fn learn_basis(x: &FeatureMatrix, y: &Embedding, tau: f64) -> Result<ConceptBasis> {
    if !(tau.is_finite() && tau > 0.0) {
        return invalid(format!("ridge parameter tau = {tau} must be > 0"));
    }
    let (d, m) = x.data.shape();
    if y.y.nrows() != m {
        return invalid(format!(
            "embedding has {} rows for {m} samples",
            y.y.nrows()
        ));
    }
    let x = &x.data;
    let u = if d <= m {
        let mut gram = x * x.transpose();
        for i in 0..d {
            gram[(i, i)] += tau;
        }
        let rhs = x * &y.y;
        let chol = gram.cholesky().ok_or_else(|| {
            Error::InvalidArgument("ridge system is not positive definite".into())
        })?;
        chol.solve(&rhs)
    } else {
        let mut gram = x.transpose() * x;
        for i in 0..m {
            gram[(i, i)] += tau;
        }
        let chol = gram.cholesky().ok_or_else(|| {
            Error::InvalidArgument("ridge system is not positive definite".into())
        })?;
        x * chol.solve(&y.y)
    };
    Ok(ConceptBasis { u, tau })
}

/// Cyclic coordinate descent for `½‖x − U a‖² + ρ‖a‖₁` with a cached Gram
/// matrix, so many columns can be coded against one basis cheaply.
pub struct LassoSolver<'a> {
    basis: &'a ConceptBasis,
    gram: DMatrix<f64>,
    pub rho: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl<'a> LassoSolver<'a> {
    pub fn new(basis: &'a ConceptBasis, rho: f64, tol: f64, max_iter: usize) -> Result<Self> {
        if !(rho.is_finite() && rho >= 0.0) {
            return invalid(format!("lasso parameter rho = {rho} must be ≥ 0"));
        }
        if !(tol.is_finite() && tol > 0.0) || max_iter == 0 {
            return invalid("lasso tol and max_iter must be positive");
        }
        Ok(Self {
            basis,
            gram: basis.u.transpose() * &basis.u,
            rho,
            tol,
            max_iter,
        })
    }

    /// Largest violation of the lasso optimality conditions at `a`, given
    /// the smooth-part gradient `g = Uᵀ(U a − x)`.
    fn kkt_violation(&self, a: &DVector<f64>, g: &DVector<f64>) -> f64 {
        a.iter()
            .zip(g.iter())
            .map(|(&aj, &gj)| {
                if aj != 0.0 {
                    (gj + self.rho * aj.signum()).abs()
                } else {
                    (gj.abs() - self.rho).max(0.0)
                }
            })
            .fold(0.0, f64::max)
    }

    pub fn encode(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let u = &self.basis.u;
        if x.len() != u.nrows() {
            return invalid(format!(
                "vector dimension {} does not match basis dimension {}",
                x.len(),
                u.nrows()
            ));
        }
        let k = u.ncols();
        let b = u.transpose() * x;
        let mut a: DVector<f64> = DVector::zeros(k);
        let mut ga: DVector<f64> = DVector::zeros(k);
        let mut violation = f64::INFINITY;
        for _ in 0..self.max_iter {
            for j in 0..k {
                let gjj = self.gram[(j, j)];
                let old = a[j];
                let new = if gjj > 0.0 {
                    let r = b[j] - ga[j] + gjj * old;
                    r.signum() * (r.abs() - self.rho).max(0.0) / gjj
                } else {
                    0.0
                };
                if new != old {
                    ga.axpy(new - old, &self.gram.column(j), 1.0);
                    a[j] = new;
                }
            }
            ga = &self.gram * &a;
            let g = &ga - &b;
            violation = self.kkt_violation(&a, &g);
            if violation <= self.tol {
                return Ok(a);
            }
        }
        Err(Error::ConvergeFailure {
            iterations: self.max_iter,
            kkt_violation: violation,
            residual: (x - u * &a).norm(),
        })
    }
}

/// Lasso code of `x` against `basis`.
pub fn lasso_encode(
    x: &DVector<f64>,
    basis: &ConceptBasis,
    rho: f64,
    tol: f64,
    max_iter: usize,
) -> Result<DVector<f64>> {
    LassoSolver::new(basis, rho, tol, max_iter)?.encode(x)
}

/// `k × M` lasso codes, one column per input column.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCodes {
    pub a: DMatrix<f64>,
    pub rho: f64,
    /// Frobenius norm of `X − U A`.
    pub reconstruction_error: f64,
}

impl SparseCodes {
    /// Fraction of entries with magnitude ≤ `eps`.
    pub fn sparsity(&self, eps: f64) -> f64 {
        let zeros = self.a.iter().filter(|v| v.abs() <= eps).count();
        zeros as f64 / self.a.len() as f64
    }
}

pub fn encode_matrix(
    x: &FeatureMatrix,
    basis: &ConceptBasis,
    config: &CoderConfig,
) -> Result<SparseCodes> {
    if x.dim() != basis.dim() {
        return invalid(format!(
            "feature dimension {} does not match basis dimension {}",
            x.dim(),
            basis.dim()
        ));
    }
    let solver = LassoSolver::new(basis, config.rho, config.tol, config.max_iter)?;
    let columns: Vec<DVector<f64>> = (0..x.len())
        .into_par_iter()
        .map(|i| {
            solver
                .encode(&x.data.column(i).into_owned())
                .map_err(|e| Error::Column {
                    column: i,
                    source: Box::new(e),
                })
        })
        .collect::<Result<_>>()?;
    let a = DMatrix::from_columns(&columns);
    let reconstruction_error = (&x.data - &basis.u * &a).norm();
    Ok(SparseCodes {
        a,
        rho: config.rho,
        reconstruction_error,
    })
}

/// `Uᵀ x`.
pub fn project_test(x: &DVector<f64>, basis: &ConceptBasis) -> Result<DVector<f64>> {
    if x.len() != basis.dim() {
        return invalid(format!(
            "vector dimension {} does not match basis dimension {}",
            x.len(),
            basis.dim()
        ));
    }
    Ok(basis.u.tr_mul(x))
}
