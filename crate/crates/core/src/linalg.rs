//! Compressed-sparse-row storage and the Krylov machinery used for the
//! per-step coupled solve and the diagnostic Poisson problems.

use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::field::check_len;

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    dim: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(dim: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut sorted = triplets.to_vec();
        sorted.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; dim + 1];
        let mut col_idx = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in sorted {
            assert!(r < dim && c < dim, "triplet ({r}, {c}) outside a {dim}x{dim} matrix");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            col_idx.push(c);
            values.push(v);
            row_ptr[r + 1] += 1;
            last = Some((r, c));
        }
        for r in 0..dim {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self {
            dim,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Wraps raw CSR arrays after checking the structural invariants.
    pub fn from_raw(
        dim: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        check_len("row offsets", dim + 1, row_ptr.len())?;
        let nnz = *row_ptr.last().unwrap();
        check_len("column indices", nnz, col_idx.len())?;
        check_len("values", nnz, values.len())?;
        if row_ptr[0] != 0 || row_ptr.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Breakdown("row offsets must start at 0 and not decrease".into()));
        }
        for r in 0..dim {
            let cols = &col_idx[row_ptr[r]..row_ptr[r + 1]];
            if cols.iter().any(|&c| c >= dim) || cols.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Breakdown(format!(
                    "row {r}: column indices must be in range and strictly increasing"
                )));
            }
        }
        Ok(Self {
            dim,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            dim,
            row_ptr: (0..=dim).collect(),
            col_idx: (0..dim).collect(),
            values: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Entries of row `r` as `(col, value)` pairs.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.col_idx[span.clone()].binary_search(&c) {
            Ok(p) => self.values[span.start + p],
            Err(_) => 0.0,
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("matvec input", self.dim, x.len())?;
        let mut y = vec![0.0; self.dim];
        self.matvec_into(x, &mut y);
        Ok(y)
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        for (r, yr) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for p in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[p] * x[self.col_idx[p]];
            }
            *yr = acc;
        }
    }
}

/// Incomplete LU factorisation restricted to the sparsity pattern of `A`.
#[derive(Clone, Debug)]
pub struct Ilu0 {
    dim: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    lu: Vec<f64>,
    diag: Vec<usize>,
    shift: f64,
}

impl Ilu0 {
    /// Factorises `A`, retrying with a growing diagonal shift when a pivot
    /// vanishes. Fails only when a diagonal entry is structurally absent.
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        let mut diag = vec![0usize; a.dim];
        for (r, d) in diag.iter_mut().enumerate() {
            let span = a.row_ptr[r]..a.row_ptr[r + 1];
            *d = match a.col_idx[span.clone()].binary_search(&r) {
                Ok(p) => span.start + p,
                Err(_) => {
                    return Err(Error::Breakdown(format!("row {r} has no diagonal entry")))
                }
            };
        }
        let scale = a.values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        let mut shift = 0.0;
        for _ in 0..12 {
            if let Some(lu) = factor(a, &diag, shift) {
                return Ok(Self {
                    dim: a.dim,
                    row_ptr: a.row_ptr.clone(),
                    col_idx: a.col_idx.clone(),
                    lu,
                    diag,
                    shift,
                });
            }
            shift = if shift == 0.0 { 1e-8 * scale } else { shift * 10.0 };
        }
        Err(Error::Breakdown("incomplete factorisation failed even with diagonal shift".into()))
    }

    /// Diagonal shift that was needed for a stable factorisation (0 if none).
    pub fn shift(&self) -> f64 {
        self.shift
    }

    /// `z = (LU)^{-1} r`.
    pub fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
        for i in 0..self.dim {
            let mut acc = z[i];
            for p in self.row_ptr[i]..self.diag[i] {
                acc -= self.lu[p] * z[self.col_idx[p]];
            }
            z[i] = acc;
        }
        for i in (0..self.dim).rev() {
            let mut acc = z[i];
            for p in self.diag[i] + 1..self.row_ptr[i + 1] {
                acc -= self.lu[p] * z[self.col_idx[p]];
            }
            z[i] = acc / self.lu[self.diag[i]];
        }
    }
}

fn factor(a: &CsrMatrix, diag: &[usize], shift: f64) -> Option<Vec<f64>> {
    let mut lu = a.values.clone();
    for &d in diag {
        lu[d] += shift;
    }
    let mut pos = vec![usize::MAX; a.dim];
    for i in 0..a.dim {
        let (start, end) = (a.row_ptr[i], a.row_ptr[i + 1]);
        for p in start..end {
            pos[a.col_idx[p]] = p;
        }
        let row_scale = a.values[start..end].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for p in start..diag[i] {
            let k = a.col_idx[p];
            let factor = lu[p] / lu[diag[k]];
            lu[p] = factor;
            for q in diag[k] + 1..a.row_ptr[k + 1] {
                let target = pos[a.col_idx[q]];
                if target != usize::MAX {
                    lu[target] -= factor * lu[q];
                }
            }
        }
        for p in start..end {
            pos[a.col_idx[p]] = usize::MAX;
        }
        let pivot = lu[diag[i]];
        if !pivot.is_finite() || pivot.abs() <= 1e-12 * row_scale.max(f64::MIN_POSITIVE) {
            return None;
        }
    }
    Some(lu)
}

/// Preconditioner actually in use; falls back to diagonal scaling when the
/// incomplete factorisation is structurally impossible.
#[derive(Clone, Debug)]
pub enum Preconditioner {
    Ilu0(Ilu0),
    Jacobi(Vec<f64>),
}

impl Preconditioner {
    pub fn ilu0_or_jacobi(a: &CsrMatrix) -> Self {
        match Ilu0::new(a) {
            Ok(ilu) => Preconditioner::Ilu0(ilu),
            Err(_) => Preconditioner::Jacobi(
                (0..a.dim)
                    .map(|r| {
                        let d = a.get(r, r);
                        if d != 0.0 {
                            1.0 / d
                        } else {
                            1.0
                        }
                    })
                    .collect(),
            ),
        }
    }

    pub fn apply(&self, r: &[f64], z: &mut [f64]) {
        match self {
            Preconditioner::Ilu0(ilu) => ilu.apply(r, z),
            Preconditioner::Jacobi(inv) => {
                for ((z, r), d) in z.iter_mut().zip(r).zip(inv) {
                    *z = r * d;
                }
            }
        }
    }

    pub fn shift(&self) -> f64 {
        match self {
            Preconditioner::Ilu0(ilu) => ilu.shift(),
            Preconditioner::Jacobi(_) => 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverConfig {
    /// Relative residual target `||b - Ax|| / ||b||`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 10_000,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub residual: f64,
    pub wall_time: Duration,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn true_residual(a: &CsrMatrix, b: &[f64], x: &[f64], r: &mut [f64]) -> f64 {
    a.matvec_into(x, r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    norm(r)
}

/// Right-preconditioned BiCGStab, warm-started from `x0`.
///
/// On success the returned iterate satisfies `||b - Ax|| <= tol ||b||`, as
/// measured by a fresh matrix-vector product. One restart is allowed after a
/// breakdown of the recurrence.
pub fn bicgstab(
    a: &CsrMatrix,
    precond: &Preconditioner,
    b: &[f64],
    x0: &[f64],
    config: SolverConfig,
) -> Result<(Vec<f64>, SolveStats)> {
    let start = Instant::now();
    let n = a.dim;
    check_len("right-hand side", n, b.len())?;
    check_len("initial guess", n, x0.len())?;
    if !(config.tol > 0.0) {
        return Err(Error::InvalidParameter {
            key: "tol",
            reason: "must be positive".into(),
        });
    }
    let b_norm = norm(b);
    if b_norm == 0.0 {
        return Ok((
            vec![0.0; n],
            SolveStats {
                iterations: 0,
                residual: 0.0,
                wall_time: start.elapsed(),
            },
        ));
    }
    let target = config.tol * b_norm;

    let mut x = x0.to_vec();
    let mut r = vec![0.0; n];
    let mut rel = true_residual(a, b, &x, &mut r) / b_norm;
    let mut best = (rel, x.clone());
    let mut iterations = 0;
    let mut breakdowns = 0;

    let (mut p, mut v, mut p_hat, mut s_hat, mut t) = (
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
    );

    'cycles: while rel > config.tol && iterations < config.max_iter {
        let r_hat = r.clone();
        let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
        p.fill(0.0);
        v.fill(0.0);
        loop {
            if iterations >= config.max_iter {
                break 'cycles;
            }
            iterations += 1;
            let rho_new = dot(&r_hat, &r);
            if rho_new.abs() < 1e-300 || omega == 0.0 {
                breakdowns += 1;
                break;
            }
            let beta = (rho_new / rho) * (alpha / omega);
            for i in 0..n {
                p[i] = r[i] + beta * (p[i] - omega * v[i]);
            }
            precond.apply(&p, &mut p_hat);
            a.matvec_into(&p_hat, &mut v);
            let denom = dot(&r_hat, &v);
            if denom.abs() < 1e-300 {
                breakdowns += 1;
                break;
            }
            alpha = rho_new / denom;
            // r now holds s
            for i in 0..n {
                r[i] -= alpha * v[i];
            }
            if norm(&r) <= target {
                for i in 0..n {
                    x[i] += alpha * p_hat[i];
                }
                break;
            }
            precond.apply(&r, &mut s_hat);
            a.matvec_into(&s_hat, &mut t);
            let tt = dot(&t, &t);
            omega = if tt > 0.0 { dot(&t, &r) / tt } else { 0.0 };
            for i in 0..n {
                x[i] += alpha * p_hat[i] + omega * s_hat[i];
                r[i] -= omega * t[i];
            }
            rho = rho_new;
            if norm(&r) <= target {
                break;
            }
        }
        // The recurrence residual drifts; always judge on the true one.
        rel = true_residual(a, b, &x, &mut r) / b_norm;
        if !rel.is_finite() {
            return Err(Error::Breakdown("non-finite residual".into()));
        }
        if rel < best.0 {
            best = (rel, x.clone());
        }
        if breakdowns > 1 {
            return Err(Error::Breakdown(format!(
                "recurrence broke down twice (relative residual {rel:.3e})"
            )));
        }
    }

    if rel <= config.tol {
        Ok((
            x,
            SolveStats {
                iterations,
                residual: rel,
                wall_time: start.elapsed(),
            },
        ))
    } else {
        Err(Error::NotConverged {
            iterations,
            residual: best.0,
            tol: config.tol,
            best: best.1,
        })
    }
}

/// Conjugate gradients for a symmetric positive (semi)definite operator.
///
/// `project` is applied to every residual and search direction, which lets
/// the caller restrict the iteration to the complement of a known null space.
pub fn conjugate_gradient(
    apply: impl Fn(&[f64], &mut [f64]),
    project: impl Fn(&mut [f64]),
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, SolveStats)> {
    let start = Instant::now();
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    project(&mut r);
    let b_norm = norm(&r);
    if b_norm == 0.0 {
        return Ok((x, SolveStats::default()));
    }
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut rr = dot(&r, &r);
    for it in 1..=max_iter {
        apply(&p, &mut ap);
        project(&mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::Breakdown("operator is not positive on the search space".into()));
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        if rr_new.sqrt() <= tol * b_norm {
            return Ok((
                x,
                SolveStats {
                    iterations: it,
                    residual: rr_new.sqrt() / b_norm,
                    wall_time: start.elapsed(),
                },
            ));
        }
        let beta = rr_new / rr;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        project(&mut p);
        rr = rr_new;
    }
    Err(Error::NotConverged {
        iterations: max_iter,
        residual: rr.sqrt() / b_norm,
        tol,
        best: x,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn two_by_two() -> CsrMatrix {
        CsrMatrix::from_triplets(2, &[(0, 0, 2.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 2.0)])
    }

    fn tridiag(n: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 4.0 + i as f64 * 0.1));
            if i > 0 {
                t.push((i, i - 1, -1.0 - 0.05 * i as f64));
            }
            if i + 1 < n {
                t.push((i, i + 1, -1.3));
            }
        }
        CsrMatrix::from_triplets(n, &t)
    }

    fn dense_solve(a: &CsrMatrix, b: &[f64]) -> Vec<f64> {
        let n = a.dim();
        let m = nalgebra::DMatrix::from_fn(n, n, |r, c| a.get(r, c));
        m.lu().solve(&nalgebra::DVector::from_column_slice(b)).unwrap().as_slice().to_vec()
    }

    #[test]
    fn matvec_examples() {
        let x = [1.5, -2.0, 3.0];
        assert_eq!(CsrMatrix::identity(3).matvec(&x).unwrap(), x.to_vec());
        assert_eq!(two_by_two().matvec(&[1.0, 1.0]).unwrap(), vec![3.0, 3.0]);
        let zero = CsrMatrix::from_triplets(3, &[]);
        assert_eq!(zero.matvec(&x).unwrap(), vec![0.0; 3]);
        assert!(zero.matvec(&[1.0]).is_err());
    }

    #[test]
    fn triplets_sum_duplicates_and_sort() {
        let a = CsrMatrix::from_triplets(2, &[(1, 1, 1.0), (0, 1, 2.0), (1, 1, 3.0), (1, 0, 5.0)]);
        assert_eq!(a.row_ptr(), &[0, 1, 3]);
        assert_eq!(a.col_idx(), &[1, 0, 1]);
        assert_eq!(a.values(), &[2.0, 5.0, 4.0]);
        assert!(CsrMatrix::from_raw(2, vec![0, 2, 1], vec![0, 1], vec![1.0, 1.0]).is_err());
        assert!(CsrMatrix::from_raw(2, vec![0, 2, 2], vec![1, 0], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn ilu0_is_exact_on_diagonal_and_tridiagonal() {
        let d = CsrMatrix::from_triplets(3, &[(0, 0, 2.0), (1, 1, 4.0), (2, 2, -8.0)]);
        let ilu = Ilu0::new(&d).unwrap();
        let mut z = vec![0.0; 3];
        ilu.apply(&[2.0, 2.0, 2.0], &mut z);
        assert_eq!(z, vec![1.0, 0.5, -0.25]);

        let a = tridiag(12);
        let ilu = Ilu0::new(&a).unwrap();
        assert_eq!(ilu.shift(), 0.0);
        let b: Vec<f64> = (0..12).map(|i| (i as f64).sin()).collect();
        let mut z = vec![0.0; 12];
        ilu.apply(&b, &mut z);
        let exact = dense_solve(&a, &b);
        for (u, v) in z.iter().zip(&exact) {
            assert_relative_eq!(u, v, epsilon = 1e-13);
        }
    }

    #[test]
    fn zero_pivot_engages_shift() {
        let a = CsrMatrix::from_triplets(2, &[(0, 0, 0.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 0.0)]);
        let pre = Preconditioner::ilu0_or_jacobi(&a);
        assert!(matches!(pre, Preconditioner::Ilu0(_)));
        assert!(pre.shift() > 0.0);
        let (x, _) = bicgstab(&a, &pre, &[2.0, 3.0], &[0.0, 0.0], SolverConfig::default()).unwrap();
        assert_relative_eq!(x[0], 3.0, epsilon = 1e-9);
        assert_relative_eq!(x[1], 2.0, epsilon = 1e-9);
    }

    #[test]
    fn missing_diagonal_falls_back_to_jacobi() {
        let a = CsrMatrix::from_triplets(2, &[(0, 1, 1.0), (1, 0, 1.0), (1, 1, 2.0)]);
        assert!(Ilu0::new(&a).is_err());
        assert!(matches!(Preconditioner::ilu0_or_jacobi(&a), Preconditioner::Jacobi(_)));
    }

    #[test]
    fn bicgstab_examples() {
        let id = CsrMatrix::identity(4);
        let pre = Preconditioner::ilu0_or_jacobi(&id);
        let b = [1.0, -2.0, 3.0, 0.5];
        let (x, stats) = bicgstab(&id, &pre, &b, &[0.0; 4], SolverConfig::default()).unwrap();
        assert_eq!(x, b.to_vec());
        assert!(stats.iterations <= 1);

        let a = two_by_two();
        let pre = Preconditioner::Jacobi(vec![0.5, 0.5]);
        let (x, _) = bicgstab(&a, &pre, &[3.0, 3.0], &[0.0, 0.0], SolverConfig::default()).unwrap();
        assert_relative_eq!(x[0], 1.0, epsilon = 1e-9);
        assert_relative_eq!(x[1], 1.0, epsilon = 1e-9);

        let (x, stats) = bicgstab(&a, &pre, &[0.0, 0.0], &[5.0, 5.0], SolverConfig::default()).unwrap();
        assert_eq!((x, stats.iterations), (vec![0.0, 0.0], 0));
    }

    #[test]
    fn non_convergence_carries_best_iterate() {
        let a = tridiag(50);
        let pre = Preconditioner::Jacobi(vec![1.0; 50]);
        let b = vec![1.0; 50];
        let cfg = SolverConfig {
            tol: 1e-14,
            max_iter: 2,
        };
        match bicgstab(&a, &pre, &b, &vec![0.0; 50], cfg) {
            Err(Error::NotConverged { best, residual, .. }) => {
                assert_eq!(best.len(), 50);
                assert!(residual > 1e-14);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    fn sparse_strategy() -> impl Strategy<Value = (usize, Vec<(usize, usize, f64)>, Vec<f64>)> {
        (2usize..64).prop_flat_map(|n| {
            (
                Just(n),
                prop::collection::vec((0..n, 0..n, -5.0f64..5.0), 0..4 * n),
                prop::collection::vec(-3.0f64..3.0, n),
            )
        })
    }

    proptest! {
        #[test]
        fn matvec_matches_dense((n, trips, x) in sparse_strategy()) {
            let a = CsrMatrix::from_triplets(n, &trips);
            let mut dense = vec![vec![0.0; n]; n];
            for &(r, c, v) in &trips {
                dense[r][c] += v;
            }
            let y = a.matvec(&x).unwrap();
            for r in 0..n {
                let expect: f64 = (0..n).map(|c| dense[r][c] * x[c]).sum();
                prop_assert!((y[r] - expect).abs() <= 1e-12 * (1.0 + expect.abs()));
            }
        }

        #[test]
        fn solutions_meet_residual_contract((n, trips, b) in sparse_strategy()) {
            // diagonally dominant shift keeps the system nonsingular
            let mut trips = trips;
            for i in 0..n {
                trips.push((i, i, 25.0 * n as f64));
            }
            let a = CsrMatrix::from_triplets(n, &trips);
            let pre = Preconditioner::ilu0_or_jacobi(&a);
            let cfg = SolverConfig::default();
            let (cold, _) = bicgstab(&a, &pre, &b, &vec![0.0; n], cfg).unwrap();
            let ax = a.matvec(&cold).unwrap();
            let res: f64 = ax.iter().zip(&b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
            let bn: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!(res <= cfg.tol * bn * (1.0 + 1e-9));

            let guess: Vec<f64> = cold.iter().map(|v| v * 0.9 + 0.01).collect();
            let (warm, _) = bicgstab(&a, &pre, &b, &guess, cfg).unwrap();
            let xn = cold.iter().map(|v| v * v).sum::<f64>().sqrt();
            let diff = cold.iter().zip(&warm).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
            prop_assert!(diff <= 10.0 * cfg.tol * xn.max(1e-300) + 1e-300);
        }
    }
}
