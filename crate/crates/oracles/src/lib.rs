//! Brute-force references for checking the fast code paths. Nothing here
//! shares code with the library under test.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};

type Cell = (i32, i32);

/// Every 4-cell piece of the 4×4 block, grown one edge neighbour at a time
/// from each seed cell and deduplicated. Cells are `(x, y)`, sorted.
pub fn grown_tetrominoes() -> BTreeSet<Vec<Cell>> {
    let inside = |(x, y): Cell| (0..4).contains(&x) && (0..4).contains(&y);
    let mut frontier: BTreeSet<Vec<Cell>> = (0..4)
        .flat_map(|x| (0..4).map(move |y| vec![(x, y)]))
        .collect();
    for _ in 1..4 {
        let mut next = BTreeSet::new();
        for piece in &frontier {
            for &(x, y) in piece {
                for n in [(x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1)] {
                    if inside(n) && !piece.contains(&n) {
                        let mut grown = piece.clone();
                        grown.push(n);
                        grown.sort_unstable();
                        next.insert(grown);
                    }
                }
            }
        }
        frontier = next;
    }
    frontier
}

/// Tetrominoes as ascending linear indices `y·4 + x`, ordered by their
/// smallest cell, concatenated.
fn canonical(pieces: &[&Vec<Cell>]) -> [u8; 16] {
    let mut sets: Vec<Vec<u8>> = pieces
        .iter()
        .map(|p| {
            let mut v: Vec<u8> = p.iter().map(|&(x, y)| (y * 4 + x) as u8).collect();
            v.sort_unstable();
            v
        })
        .collect();
    sets.sort_by_key(|s| s[0]);
    let mut key = [0u8; 16];
    for (i, s) in sets.iter().enumerate() {
        key[i * 4..i * 4 + 4].copy_from_slice(s);
    }
    key
}

/// All tilings of the 4×4 block by four tetrominoes, found by trying every
/// 4-subset of placed pieces; canonical keys in ascending order.
pub fn brute_force_tilings() -> Vec<[u8; 16]> {
    let shapes: Vec<Vec<Cell>> = grown_tetrominoes().into_iter().collect();
    let disjoint = |a: &Vec<Cell>, b: &Vec<Cell>| a.iter().all(|c| !b.contains(c));
    let mut found = BTreeSet::new();
    let n = shapes.len();
    for a in 0..n {
        for b in a + 1..n {
            if !disjoint(&shapes[a], &shapes[b]) {
                continue;
            }
            for c in b + 1..n {
                if !disjoint(&shapes[a], &shapes[c]) || !disjoint(&shapes[b], &shapes[c]) {
                    continue;
                }
                for d in c + 1..n {
                    let pieces = [&shapes[a], &shapes[b], &shapes[c], &shapes[d]];
                    let cells: BTreeSet<Cell> =
                        pieces.iter().flat_map(|p| p.iter().copied()).collect();
                    if cells.len() == 16 {
                        found.insert(canonical(&pieces));
                    }
                }
            }
        }
    }
    found.into_iter().collect()
}

const H: [[f64; 4]; 4] = [
    [0.5, 0.5, 0.5, 0.5],
    [0.5, -0.5, 0.5, -0.5],
    [0.5, 0.5, -0.5, -0.5],
    [0.5, -0.5, -0.5, 0.5],
];

/// Haar coefficients of a block (by linear index) under a tiling given as a
/// canonical key; row 0 low-pass, rows 1..=3 high-pass.
pub fn tiling_coefficients(block: &[f64; 16], key: &[u8; 16]) -> [[f64; 4]; 4] {
    let mut out = [[0.0; 4]; 4];
    for alpha in 0..4 {
        for (gamma, &cell) in key[alpha * 4..alpha * 4 + 4].iter().enumerate() {
            for (l, row) in out.iter_mut().enumerate() {
                row[alpha] += H[l][gamma] * block[usize::from(cell)];
            }
        }
    }
    out
}

pub fn tiling_cost(block: &[f64; 16], key: &[u8; 16]) -> f64 {
    tiling_coefficients(block, key)[1..]
        .iter()
        .flatten()
        .map(|w| w.abs())
        .sum()
}

/// `Σ_i ‖Uᵀx_i − y_i‖² + τ‖U‖²_F` minimised by plain gradient descent.
pub fn ridge_by_gradient_descent(x: &DMatrix<f64>, y: &DMatrix<f64>, tau: f64) -> DMatrix<f64> {
    let xxt = x * x.transpose();
    let lmax = xxt.symmetric_eigenvalues().max();
    let step = 1.0 / (2.0 * (lmax + tau));
    let mut u = DMatrix::zeros(x.nrows(), y.ncols());
    for _ in 0..200_000 {
        let grad = 2.0 * (x * (x.transpose() * &u - y) + tau * &u);
        if grad.norm() < 1e-13 {
            break;
        }
        u -= step * grad;
    }
    u
}

pub fn lasso_objective(u: &DMatrix<f64>, x: &DVector<f64>, a: &DVector<f64>, rho: f64) -> f64 {
    0.5 * (x - u * a).norm_squared() + rho * a.lp_norm(1)
}

/// Exact minimiser of `½‖x − U a‖² + ρ‖a‖₁` by enumerating every sign
/// pattern and solving the stationarity equations on its support.
pub fn lasso_by_orthants(u: &DMatrix<f64>, x: &DVector<f64>, rho: f64) -> DVector<f64> {
    let k = u.ncols();
    let mut best = (
        lasso_objective(u, x, &DVector::zeros(k), rho),
        DVector::zeros(k),
    );
    for code in 0..3usize.pow(k as u32) {
        let signs: Vec<i32> = (0..k)
            .map(|j| (code / 3usize.pow(j as u32) % 3) as i32 - 1)
            .collect();
        let support: Vec<usize> = (0..k).filter(|&j| signs[j] != 0).collect();
        if support.is_empty() {
            continue;
        }
        let us = u.select_columns(&support);
        let s = DVector::from_iterator(support.len(), support.iter().map(|&j| f64::from(signs[j])));
        let Some(sol) = (us.transpose() * &us)
            .lu()
            .solve(&(us.transpose() * x - rho * s))
        else {
            continue;
        };
        if support
            .iter()
            .zip(sol.iter())
            .any(|(&j, &v)| v * f64::from(signs[j]) <= 0.0)
        {
            continue;
        }
        let mut a = DVector::zeros(k);
        for (&j, &v) in support.iter().zip(sol.iter()) {
            a[j] = v;
        }
        let f = lasso_objective(u, x, &a, rho);
        if f < best.0 {
            best = (f, a);
        }
    }
    best.1
}

/// Largest violation of the lasso subgradient optimality conditions.
pub fn lasso_kkt_violation(u: &DMatrix<f64>, x: &DVector<f64>, a: &DVector<f64>, rho: f64) -> f64 {
    let g = u.transpose() * (u * a - x);
    a.iter()
        .zip(g.iter())
        .map(|(&aj, &gj)| {
            if aj != 0.0 {
                (gj + rho * aj.signum()).abs()
            } else {
                (gj.abs() - rho).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

/// `I − D^{-1/2} W D^{-1/2}` where `W` joins each column to its `p` nearest
/// columns (ties by index), symmetrised, plus `floor` between every pair.
pub fn reference_laplacian(x: &DMatrix<f64>, p: usize, floor: f64) -> DMatrix<f64> {
    let m = x.ncols();
    let mut w = DMatrix::from_element(m, m, floor);
    for i in 0..m {
        w[(i, i)] = 0.0;
        let mut others: Vec<(f64, usize)> = (0..m)
            .filter(|&j| j != i)
            .map(|j| ((x.column(i) - x.column(j)).norm_squared(), j))
            .collect();
        others.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        for &(_, j) in others.iter().take(p) {
            w[(i, j)] = 1.0 + floor;
            w[(j, i)] = 1.0 + floor;
        }
    }
    let deg: Vec<f64> = (0..m).map(|i| w.row(i).sum()).collect();
    DMatrix::from_fn(m, m, |i, j| {
        f64::from(u8::from(i == j)) - w[(i, j)] / (deg[i] * deg[j]).sqrt()
    })
}

/// Cyclic Jacobi eigensolver; eigenpairs sorted by ascending eigenvalue.
pub fn jacobi_eigen(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let mut a = a.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    off += a[(i, j)] * a[(i, j)];
                }
            }
        }
        if off < 1e-26 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[(p, q)].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                let t = if theta == 0.0 {
                    1.0
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].partial_cmp(&a[(j, j)]).unwrap());
    (
        order.iter().map(|&i| a[(i, i)]).collect(),
        v.select_columns(&order),
    )
}
