//! Truncated lattice model of the Koopman operator and self-adjoint norm
//! estimation.
//!
//! Characters of the torus are indexed by nonzero integer frequency vectors,
//! and an automorphism permutes them through the transposed matrix.  A
//! finitely supported measure on the group therefore acts on the frequency
//! lattice as a weighted sum of permutation operators.  Truncating to a
//! sup-norm window and *dropping* the images that leave it compresses the
//! operator, which keeps every norm estimate a certified lower bound of the
//! untruncated norm and preserves self-adjointness for symmetric measures.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::enumerate::ShellMeasure;
use crate::interval::rational_to_f64;
use crate::matrix::GroupElement;
use crate::scalar::Real;
use crate::walks::{return_prob_norm_estimate, ReturnProbEstimate};

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("frequency lattice model requires dimension 2, got {0}")]
    NotPlaneLattice(usize),
    #[error("measure support must be nonempty")]
    EmptySupport,
    #[error("weights must be positive")]
    NonPositiveWeight,
    #[error("weights must sum to one, got {0}")]
    NonProbability(BigRational),
    #[error("window must be at least 1")]
    WindowZero,
    #[error("window {window} needs {bytes} working bytes, over the budget {budget}")]
    WindowBudget { window: u32, bytes: u128, budget: u128 },
    #[error("matrix entry exceeds the machine range of the lattice model")]
    EntryOverflow,
    #[error("norm estimation requires a symmetric measure")]
    NonSymmetric,
    #[error("frequency vector must be nonzero")]
    ZeroFrequency,
}

/// Transpose action on the frequency lattice: `b -> g^T b`, exact and
/// invertible, never zero on nonzero input.
pub fn dual_act(g: &GroupElement, b: &[BigInt]) -> Result<Vec<BigInt>, SpectralError> {
    if b.iter().all(|c| c.is_zero()) {
        return Err(SpectralError::ZeroFrequency);
    }
    let d = g.dim();
    if b.len() != d {
        return Err(SpectralError::NotPlaneLattice(b.len()));
    }
    Ok((0..d).map(|i| (0..d).map(|j| g.entry(j, i) * &b[j]).sum()).collect())
}

/// Working-memory budget for the iteration vectors (three live vectors).
const DEFAULT_MEMORY_BUDGET: u128 = 2_000_000_000;
/// Windows up to this point count store an explicit sparse table; larger
/// windows apply the action matrix-free from the atom matrices.
const TABLE_POINT_LIMIT: usize = 1 << 20;

#[derive(Debug, Clone)]
struct Atom {
    element: GroupElement,
    /// Transposed matrix `[t00, t01, t10, t11]`, machine integers.
    t: [i64; 4],
    weight: BigRational,
    weight_f: f64,
    /// Fraction of window points whose image leaves the window.
    dropped: f64,
}

#[derive(Debug)]
enum Backing {
    /// CSR over window points: `out[i] = sum w[j] * v[col[j]]`.
    Table { row_ptr: Vec<u32>, col: Vec<u32>, w: Vec<f64> },
    /// Row intervals recomputed from the atom matrices on every apply.
    MatrixFree,
}

/// Compression of the measure's lattice action to a sup-norm window.
#[derive(Debug)]
pub struct TruncatedLatticeOperator {
    window: u32,
    atoms: Vec<Atom>,
    backing: Backing,
}

fn floor_div(a: i64, b: i64) -> i64 {
    a.div_euclid(b)
}

fn ceil_div(a: i64, b: i64) -> i64 {
    -(-a).div_euclid(b)
}

/// Solutions of `|p + q * b2| <= bw` as a closed interval, `None` when empty,
/// unbounded encoded with the window bound applied later.
fn coeff_range(mut p: i64, mut q: i64, bw: i64) -> Option<(i64, i64)> {
    if q == 0 {
        return if p.abs() <= bw { Some((i64::MIN / 4, i64::MAX / 4)) } else { None };
    }
    if q < 0 {
        p = -p;
        q = -q;
    }
    let lo = ceil_div(-bw - p, q);
    let hi = floor_div(bw - p, q);
    if lo > hi {
        None
    } else {
        Some((lo, hi))
    }
}

/// Range of `b2` for which `(b1, b2)` and its image both stay in the window.
fn row_range(t: &[i64; 4], b1: i64, bw: i64) -> Option<(i64, i64)> {
    let (l1, h1) = coeff_range(t[0] * b1, t[1], bw)?;
    let (l2, h2) = coeff_range(t[2] * b1, t[3], bw)?;
    let lo = l1.max(l2).max(-bw);
    let hi = h1.min(h2).min(bw);
    if lo > hi {
        None
    } else {
        Some((lo, hi))
    }
}

impl TruncatedLatticeOperator {
    pub fn window(&self) -> u32 {
        self.window
    }

    fn side(&self) -> usize {
        2 * self.window as usize + 1
    }

    /// Number of window slots, including the masked origin.
    pub fn dim(&self) -> usize {
        self.side() * self.side()
    }

    /// Active frequency vectors (the origin is excluded).
    pub fn active_points(&self) -> usize {
        self.dim() - 1
    }

    pub fn atoms(&self) -> impl Iterator<Item = (&GroupElement, &BigRational)> {
        self.atoms.iter().map(|a| (&a.element, &a.weight))
    }

    /// Per-atom fraction of window points whose image is dropped.
    pub fn dropped_mass(&self) -> Vec<(GroupElement, f64)> {
        self.atoms.iter().map(|a| (a.element.clone(), a.dropped)).collect()
    }

    /// Measure-weighted total dropped fraction.
    pub fn total_dropped_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight_f * a.dropped).sum()
    }

    pub fn is_table(&self) -> bool {
        matches!(self.backing, Backing::Table { .. })
    }

    /// Exact symmetry check: every atom's inverse carries the same weight.
    /// Compression drops `(b, g^T b)` exactly when the reverse pair is
    /// dropped for the inverse atom, so a symmetric measure yields a table
    /// equal to its adjoint at any window.
    pub fn is_self_adjoint(&self) -> bool {
        self.atoms.iter().all(|a| {
            let inv = a.element.inverse();
            self.atoms.iter().any(|b| b.element == inv && b.weight == a.weight)
        })
    }

    /// `out = A v`, deterministic for any thread count (each output slot is
    /// written by exactly one task, atom order fixed).
    pub fn apply(&self, v: &[f64], out: &mut [f64]) {
        assert_eq!(v.len(), self.dim());
        assert_eq!(out.len(), self.dim());
        match &self.backing {
            Backing::Table { row_ptr, col, w } => {
                out.par_iter_mut().enumerate().for_each(|(i, slot)| {
                    let mut acc = 0.0;
                    for j in row_ptr[i] as usize..row_ptr[i + 1] as usize {
                        acc += w[j] * v[col[j] as usize];
                    }
                    *slot = acc;
                });
            }
            Backing::MatrixFree => {
                let bw = self.window as i64;
                let side = self.side() as i64;
                let origin = (bw * side + bw) as usize;
                out.par_chunks_mut(side as usize).enumerate().for_each(|(row, out_row)| {
                    let b1 = row as i64 - bw;
                    out_row.fill(0.0);
                    for a in &self.atoms {
                        let Some((lo, hi)) = row_range(&a.t, b1, bw) else { continue };
                        let mut uidx =
                            (a.t[0] * b1 + a.t[1] * lo + bw) * side + (a.t[2] * b1 + a.t[3] * lo + bw);
                        let stride = a.t[1] * side + a.t[3];
                        for b2 in lo..=hi {
                            out_row[(b2 + bw) as usize] += a.weight_f * v[uidx as usize];
                            uidx += stride;
                        }
                    }
                });
                // The origin is not a lattice character; keep its slot silent.
                out[origin] = 0.0;
            }
        }
    }

    /// Explicit `(b_in, b_out, weight)` entries; `None` in matrix-free mode.
    pub fn coo_entries(&self) -> Option<Vec<((i64, i64), (i64, i64), f64)>> {
        let Backing::Table { row_ptr, col, w } = &self.backing else {
            return None;
        };
        let bw = self.window as i64;
        let side = self.side() as i64;
        let unpack = |i: i64| (i / side - bw, i % side - bw);
        let mut entries = Vec::with_capacity(col.len());
        for i in 0..self.dim() {
            for j in row_ptr[i] as usize..row_ptr[i + 1] as usize {
                // Row index is the output point b; the stored column holds
                // its image g^T b, read from v.
                entries.push((unpack(col[j] as i64), unpack(i as i64), w[j]));
            }
        }
        Some(entries)
    }

    /// Connected components of the window under the symmetrized action
    /// (singletons with no incident action are omitted).  The operator is
    /// block-diagonal over this partition, so each block can be processed
    /// independently.
    pub fn components(&self) -> Option<Vec<Vec<u32>>> {
        let Backing::Table { row_ptr, col, .. } = &self.backing else {
            return None;
        };
        let n = self.dim();
        // Undirected adjacency: row pattern plus its transpose.
        let mut adj: Vec<Vec<u32>> = vec![Vec::new(); n];
        for i in 0..n {
            for j in row_ptr[i] as usize..row_ptr[i + 1] as usize {
                adj[i].push(col[j]);
                adj[col[j] as usize].push(i as u32);
            }
        }
        let mut seen = vec![false; n];
        let mut comps = Vec::new();
        for start in 0..n {
            if seen[start] || adj[start].is_empty() {
                continue;
            }
            let mut comp = Vec::new();
            let mut stack = vec![start as u32];
            seen[start] = true;
            while let Some(node) = stack.pop() {
                comp.push(node);
                for &next in &adj[node as usize] {
                    if !seen[next as usize] {
                        seen[next as usize] = true;
                        stack.push(next);
                    }
                }
            }
            comp.sort_unstable();
            comps.push(comp);
        }
        Some(comps)
    }

    /// Restriction to one component (table mode): same action on the
    /// sub-window, indices remapped.
    pub fn restrict(&self, nodes: &[u32]) -> Option<RestrictedOperator> {
        let Backing::Table { row_ptr, col, w } = &self.backing else {
            return None;
        };
        let mut remap: BTreeMap<u32, u32> = BTreeMap::new();
        for (new, &old) in nodes.iter().enumerate() {
            remap.insert(old, new as u32);
        }
        let mut r_ptr = Vec::with_capacity(nodes.len() + 1);
        let mut r_col = Vec::new();
        let mut r_w = Vec::new();
        r_ptr.push(0u32);
        for &old in nodes {
            for j in row_ptr[old as usize] as usize..row_ptr[old as usize + 1] as usize {
                if let Some(&c) = remap.get(&col[j]) {
                    r_col.push(c);
                    r_w.push(w[j]);
                }
            }
            r_ptr.push(r_col.len() as u32);
        }
        Some(RestrictedOperator { row_ptr: r_ptr, col: r_col, w: r_w })
    }
}

/// A component block of a table-mode operator.
#[derive(Debug)]
pub struct RestrictedOperator {
    row_ptr: Vec<u32>,
    col: Vec<u32>,
    w: Vec<f64>,
}

impl RestrictedOperator {
    pub fn dim(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn apply(&self, v: &[f64], out: &mut [f64]) {
        out.par_iter_mut().enumerate().for_each(|(i, slot)| {
            let mut acc = 0.0;
            for j in self.row_ptr[i] as usize..self.row_ptr[i + 1] as usize {
                acc += self.w[j] * v[self.col[j] as usize];
            }
            *slot = acc;
        });
    }
}

/// Builds the windowed compression of the measure given as (element, weight)
/// atoms.  Duplicated elements are merged; the weights must be positive and
/// sum to one.
pub fn build_truncated_operator(
    atoms: &[(GroupElement, BigRational)],
    window: u32,
) -> Result<TruncatedLatticeOperator, SpectralError> {
    build_with_budget(atoms, window, DEFAULT_MEMORY_BUDGET)
}

pub fn build_with_budget(
    atoms: &[(GroupElement, BigRational)],
    window: u32,
    budget: u128,
) -> Result<TruncatedLatticeOperator, SpectralError> {
    if window == 0 {
        return Err(SpectralError::WindowZero);
    }
    if atoms.is_empty() {
        return Err(SpectralError::EmptySupport);
    }
    let side = 2 * window as u128 + 1;
    let bytes = 3 * 8 * side * side;
    if bytes > budget {
        return Err(SpectralError::WindowBudget { window, bytes, budget });
    }
    let mut merged: BTreeMap<GroupElement, BigRational> = BTreeMap::new();
    let mut total = BigRational::zero();
    for (g, w) in atoms {
        if g.dim() != 2 {
            return Err(SpectralError::NotPlaneLattice(g.dim()));
        }
        if !w.is_positive() {
            return Err(SpectralError::NonPositiveWeight);
        }
        total += w;
        *merged.entry(g.clone()).or_insert_with(BigRational::zero) += w;
    }
    if total != BigRational::one() {
        return Err(SpectralError::NonProbability(total));
    }

    let bw = window as i64;
    let mut built = Vec::with_capacity(merged.len());
    // Keep all index arithmetic (entry * coordinate, then a 2-term sum and
    // the flattened index) inside i64.
    let entry_bound = i64::MAX / 4 / side as i64;
    for (g, weight) in merged {
        let to_i64 = |i: usize, j: usize| {
            g.entry(i, j)
                .to_i64()
                .filter(|e| e.abs() <= entry_bound)
                .ok_or(SpectralError::EntryOverflow)
        };
        // Transposed matrix, row-major.
        let t = [to_i64(0, 0)?, to_i64(1, 0)?, to_i64(0, 1)?, to_i64(1, 1)?];
        let mut kept = 0u64;
        for b1 in -bw..=bw {
            if let Some((lo, hi)) = row_range(&t, b1, bw) {
                kept += (hi - lo + 1) as u64;
                if b1 == 0 && lo <= 0 && 0 <= hi {
                    kept -= 1; // origin is not a character
                }
            }
        }
        let points = (side * side - 1) as u64;
        let dropped = 1.0 - kept as f64 / points as f64;
        built.push(Atom { element: g, t, weight_f: rational_to_f64(&weight), weight, dropped });
    }

    let dim = (side * side) as usize;
    let backing = if dim <= TABLE_POINT_LIMIT {
        let side = side as i64;
        let mut rows: Vec<Vec<(u32, f64)>> = vec![Vec::new(); dim];
        for a in &built {
            for b1 in -bw..=bw {
                let Some((lo, hi)) = row_range(&a.t, b1, bw) else { continue };
                for b2 in lo..=hi {
                    if b1 == 0 && b2 == 0 {
                        continue;
                    }
                    let out_idx = ((b1 + bw) * side + (b2 + bw)) as usize;
                    let in_idx = ((a.t[0] * b1 + a.t[1] * b2 + bw) * side
                        + (a.t[2] * b1 + a.t[3] * b2 + bw)) as u32;
                    rows[out_idx].push((in_idx, a.weight_f));
                }
            }
        }
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut col = Vec::new();
        let mut w = Vec::new();
        row_ptr.push(0u32);
        for row in rows {
            for (c, weight) in row {
                col.push(c);
                w.push(weight);
            }
            row_ptr.push(col.len() as u32);
        }
        Backing::Table { row_ptr, col, w }
    } else {
        Backing::MatrixFree
    };

    Ok(TruncatedLatticeOperator { window, atoms: built, backing })
}

/// Uniform shell measure as a lattice operator.
pub fn build_shell_operator(
    mu: &ShellMeasure,
    window: u32,
) -> Result<TruncatedLatticeOperator, SpectralError> {
    let w = mu.weight();
    let atoms: Vec<(GroupElement, BigRational)> =
        mu.atoms().iter().map(|g| (g.clone(), w.clone())).collect();
    build_truncated_operator(&atoms, window)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormMethod {
    PowerIteration,
    Lanczos,
}

/// A certified lower bound for the operator norm with its convergence data.
#[derive(Debug, Clone, Copy)]
pub struct NormEstimate<R: Real> {
    /// `|A y| / |y|` of the final iterate: a lower bound of the norm.
    pub value: R,
    pub iterations: usize,
    /// `|A y - rho y| / |y|` with `rho` the Rayleigh quotient of `y`.
    pub residual: R,
    pub method: NormMethod,
    /// False when `max_iter` was reached with residual above tolerance; the
    /// value is then still a valid lower bound, enclosed in
    /// `[value, min(1, value + residual)]` when the spectrum is clustered.
    pub converged: bool,
}

// ---- deterministic dense kernels -----------------------------------------
//
// Fixed-size chunked reductions: partial sums are produced per chunk index
// and combined in order, so results are identical for every thread count.

const CHUNK: usize = 1 << 16;

fn det_dot(a: &[f64], b: &[f64]) -> f64 {
    a.par_chunks(CHUNK)
        .zip(b.par_chunks(CHUNK))
        .map(|(ca, cb)| ca.iter().zip(cb).map(|(x, y)| x * y).sum::<f64>())
        .collect::<Vec<_>>()
        .iter()
        .sum()
}

fn det_norm(a: &[f64]) -> f64 {
    det_dot(a, a).sqrt()
}

fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    y.par_chunks_mut(CHUNK).zip(x.par_chunks(CHUNK)).for_each(|(cy, cx)| {
        for (yy, xx) in cy.iter_mut().zip(cx) {
            *yy += alpha * xx;
        }
    });
}

fn scale_vec(y: &mut [f64], alpha: f64) {
    y.par_chunks_mut(CHUNK).for_each(|cy| {
        for yy in cy.iter_mut() {
            *yy *= alpha;
        }
    });
}

/// Seeded start vector supported off the origin slot.
fn seeded_start(dim: usize, origin: Option<usize>, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>() - 0.5).collect();
    if let Some(o) = origin {
        v[o] = 0.0;
    }
    let n = det_norm(&v);
    if n > 0.0 {
        scale_vec(&mut v, 1.0 / n);
    }
    v
}

/// Largest magnitude eigenvalue of a symmetric tridiagonal matrix.
fn tridiag_top(alpha: &[f64], beta: &[f64]) -> (f64, Vec<f64>) {
    let k = alpha.len();
    let mut m = nalgebra::DMatrix::<f64>::zeros(k, k);
    for i in 0..k {
        m[(i, i)] = alpha[i];
        if i + 1 < k {
            m[(i, i + 1)] = beta[i];
            m[(i + 1, i)] = beta[i];
        }
    }
    let eig = nalgebra::SymmetricEigen::new(m);
    let mut best = 0usize;
    for i in 0..k {
        if eig.eigenvalues[i].abs() > eig.eigenvalues[best].abs() {
            best = i;
        }
    }
    (eig.eigenvalues[best], eig.eigenvectors.column(best).iter().copied().collect())
}

trait ApplyOp {
    fn op_dim(&self) -> usize;
    fn op_apply(&self, v: &[f64], out: &mut [f64]);
    fn origin(&self) -> Option<usize>;
}

impl ApplyOp for TruncatedLatticeOperator {
    fn op_dim(&self) -> usize {
        self.dim()
    }
    fn op_apply(&self, v: &[f64], out: &mut [f64]) {
        self.apply(v, out)
    }
    fn origin(&self) -> Option<usize> {
        let b = self.window as usize;
        Some(b * self.side() + b)
    }
}

impl ApplyOp for RestrictedOperator {
    fn op_dim(&self) -> usize {
        self.dim()
    }
    fn op_apply(&self, v: &[f64], out: &mut [f64]) {
        self.apply(v, out)
    }
    fn origin(&self) -> Option<usize> {
        None
    }
}

fn certify<R: Real>(
    op: &impl ApplyOp,
    y: &[f64],
    iterations: usize,
    method: NormMethod,
    tol: f64,
) -> NormEstimate<R> {
    let ny = det_norm(y);
    if ny == 0.0 {
        return NormEstimate {
            value: R::zero(),
            iterations,
            residual: R::zero(),
            method,
            converged: true,
        };
    }
    let mut ay = vec![0.0; y.len()];
    op.op_apply(y, &mut ay);
    let value = det_norm(&ay) / ny;
    let rho = det_dot(y, &ay) / (ny * ny);
    axpy(&mut ay, -rho, y);
    let residual = det_norm(&ay) / ny;
    NormEstimate {
        value: R::from_f64_lossy(value),
        iterations,
        residual: R::from_f64_lossy(residual),
        method,
        converged: residual <= tol,
    }
}

/// Splits a converged `A^2` iterate into its half-spectrum parts: for
/// `v = c+ u+ + c- u-` with `A u+- = +-lambda u+-`, the combinations
/// `A v +- |A v| v` land in the individual eigenspaces.  Both candidates are
/// genuine vectors, so both certificates are valid lower bounds; return the
/// better one.
fn disambiguate<R: Real>(
    op: &impl ApplyOp,
    v: &[f64],
    iterations: usize,
    tol: f64,
) -> NormEstimate<R> {
    let mut av = vec![0.0; v.len()];
    op.op_apply(v, &mut av);
    let n1 = det_norm(&av);
    let mut plus = av.clone();
    axpy(&mut plus, n1, v);
    let mut minus = av;
    axpy(&mut minus, -n1, v);
    let e_plus = certify::<R>(op, &plus, iterations, NormMethod::PowerIteration, tol);
    let e_minus = certify::<R>(op, &minus, iterations, NormMethod::PowerIteration, tol);
    let close = (e_plus.value - e_minus.value).abs() <= R::from_f64_lossy(10.0 * tol);
    if close && e_plus.converged != e_minus.converged {
        return if e_plus.converged { e_plus } else { e_minus };
    }
    if e_plus.value >= e_minus.value {
        e_plus
    } else {
        e_minus
    }
}

fn power_iteration<R: Real>(op: &impl ApplyOp, tol: f64, max_iter: usize, seed: u64) -> NormEstimate<R> {
    let dim = op.op_dim();
    let mut v = seeded_start(dim, op.origin(), seed);
    let mut w = vec![0.0; dim];
    let mut w2 = vec![0.0; dim];
    let mut res = vec![0.0; dim];
    let mut iterations = 0;
    while iterations < max_iter {
        // Iterate on A^2 so spectra symmetric about zero cannot stall the
        // sequence between the +-lambda extremes; track both the A and the
        // A^2 residual of the current unit iterate.
        op.op_apply(&v, &mut w);
        iterations += 1;
        let n1 = det_norm(&w);
        if n1 == 0.0 {
            return certify(op, &v, iterations, NormMethod::PowerIteration, tol);
        }
        let rho1 = det_dot(&v, &w);
        res.copy_from_slice(&w);
        axpy(&mut res, -rho1, &v);
        let r1 = det_norm(&res);
        op.op_apply(&w, &mut w2);
        iterations += 1;
        let n2 = det_norm(&w2);
        if n2 == 0.0 {
            scale_vec(&mut w, 1.0 / n1);
            return certify(op, &w, iterations, NormMethod::PowerIteration, tol);
        }
        let rho2 = det_dot(&v, &w2);
        res.copy_from_slice(&w2);
        axpy(&mut res, -rho2, &v);
        let r2 = det_norm(&res);
        std::mem::swap(&mut v, &mut w2);
        scale_vec(&mut v, 1.0 / n2);
        if r1 <= tol || r2 <= tol {
            break;
        }
    }
    disambiguate(op, &v, iterations, tol)
}

/// Without reorthogonalization the Krylov basis degrades after a few hundred
/// steps; past this point more iterations no longer help.
const LANCZOS_STEP_CAP: usize = 500;

fn lanczos<R: Real>(op: &impl ApplyOp, tol: f64, max_iter: usize, seed: u64) -> NormEstimate<R> {
    let dim = op.op_dim();
    let v0 = seeded_start(dim, op.origin(), seed);
    let cap = max_iter.min(LANCZOS_STEP_CAP).min(dim);
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();

    // Pass 1: tridiagonal coefficients, with a periodic convergence check on
    // the top Ritz value (residual bound beta_k * |last eigenvector entry|).
    {
        let mut vp: Vec<f64> = vec![0.0; dim];
        let mut v = v0.clone();
        let mut w = vec![0.0; dim];
        let mut last_theta = f64::NAN;
        for k in 0..cap {
            op.op_apply(&v, &mut w);
            let a = det_dot(&v, &w);
            alphas.push(a);
            axpy(&mut w, -a, &v);
            if k > 0 {
                axpy(&mut w, -betas[k - 1], &vp);
            }
            let b = det_norm(&w);
            betas.push(b);
            if b < 1e-13 {
                break;
            }
            scale_vec(&mut w, 1.0 / b);
            std::mem::swap(&mut vp, &mut v);
            std::mem::swap(&mut v, &mut w);
            if (k + 1) % 5 == 0 || k + 1 == cap {
                let (theta, s) = tridiag_top(&alphas, &betas[..alphas.len() - 1]);
                let eta = b * s.last().copied().unwrap_or(0.0).abs();
                let drift =
                    if last_theta.is_nan() { f64::INFINITY } else { (theta - last_theta).abs() };
                last_theta = theta;
                if eta <= tol && drift <= tol {
                    break;
                }
            }
        }
    }

    // Pass 2: replay the recurrence, accumulating the Ritz vector of the
    // top eigenpair of the tridiagonal matrix.
    let steps = alphas.len();
    let (_, s) = tridiag_top(&alphas, &betas[..steps - 1]);
    let mut y = vec![0.0; dim];
    {
        let mut vp: Vec<f64> = vec![0.0; dim];
        let mut v = v0;
        let mut w = vec![0.0; dim];
        for k in 0..steps {
            axpy(&mut y, s[k], &v);
            if k + 1 == steps {
                break;
            }
            op.op_apply(&v, &mut w);
            axpy(&mut w, -alphas[k], &v);
            if k > 0 {
                axpy(&mut w, -betas[k - 1], &vp);
            }
            if betas[k] < 1e-13 {
                break;
            }
            scale_vec(&mut w, 1.0 / betas[k]);
            std::mem::swap(&mut vp, &mut v);
            std::mem::swap(&mut v, &mut w);
        }
    }
    certify(op, &y, steps, NormMethod::Lanczos, tol)
}

/// Threshold between the dense-friendly power iteration and Lanczos.
const POWER_DIM_LIMIT: usize = 20_000;

/// Estimates the largest-magnitude eigenvalue of the compression from a
/// seeded random start.  The reported value is the exact norm ratio of the
/// final iterate, hence always a certified lower bound for the operator norm
/// (and so for the untruncated norm); it is nondecreasing in the window for
/// converged runs on nested windows.
pub fn operator_norm_estimate<R: Real>(
    op: &TruncatedLatticeOperator,
    tol: f64,
    max_iter: usize,
    seed: u64,
) -> Result<NormEstimate<R>, SpectralError> {
    if !op.is_self_adjoint() {
        return Err(SpectralError::NonSymmetric);
    }
    assert!(tol > 0.0 && max_iter > 0);
    Ok(if op.dim() <= POWER_DIM_LIMIT {
        power_iteration(op, tol, max_iter, seed)
    } else {
        lanczos(op, tol, max_iter, seed)
    })
}

/// Norm estimate of one component block; same contract as
/// [`operator_norm_estimate`].
pub fn restricted_norm_estimate<R: Real>(
    block: &RestrictedOperator,
    tol: f64,
    max_iter: usize,
    seed: u64,
) -> NormEstimate<R> {
    if block.dim() <= POWER_DIM_LIMIT {
        power_iteration(block, tol, max_iter, seed)
    } else {
        lanczos(block, tol, max_iter, seed)
    }
}

/// Rayleigh-style certified lower bound `|A v| / |v|` of one test vector.
pub fn rayleigh_lower_bound(op: &TruncatedLatticeOperator, v: &[f64]) -> f64 {
    let n = det_norm(v);
    if n == 0.0 {
        return 0.0;
    }
    let mut av = vec![0.0; v.len()];
    op.apply(v, &mut av);
    det_norm(&av) / n
}

/// Side-by-side norm estimates from the lattice compression and from the
/// return-probability sequence; both are lower bounds of the same norm.
#[derive(Debug)]
pub struct KestenReport<R: Real> {
    pub lattice: NormEstimate<R>,
    pub walk: ReturnProbEstimate<R>,
    pub gap: R,
}

pub fn kesten_crosscheck<R: Real>(
    mu: &ShellMeasure,
    window: u32,
    k_max: usize,
    budget: usize,
    tol: f64,
    max_iter: usize,
    seed: u64,
) -> Result<KestenReport<R>, SpectralError> {
    let op = build_shell_operator(mu, window)?;
    let lattice = operator_norm_estimate::<R>(&op, tol, max_iter, seed)?;
    let walk = return_prob_norm_estimate::<R>(mu, k_max, budget);
    let gap = if lattice.value > walk.norm_estimate() {
        lattice.value - walk.norm_estimate()
    } else {
        walk.norm_estimate() - lattice.value
    };
    Ok(KestenReport { lattice, walk, gap })
}
