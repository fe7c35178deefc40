//! Small dense linear algebra, compensated summation, seeded RNG streams,
//! finite differences, and the CSV text format for matrices and vectors.
//!
//! Problem sizes in this crate are tiny (tens of rows at most), so matrices
//! are plain row-major `Vec<f64>` storage with no blocking or sparsity.
//! Everything here is deterministic: given the same inputs (and for
//! [`RngStream`], the same `(seed, stream_id)`), results are bit-identical
//! across runs and thread counts.

use crate::error::{Error, Result};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Dense row-major matrix of `f64`.
///
/// Construction validates that every entry is finite; operations that
/// combine matrices check shapes and report mismatches as errors rather
/// than panicking.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Builds a matrix from row-major data. Errors if the data length does
    /// not equal `rows * cols` or any entry is non-finite.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch {
                context: "matrix construction",
                expected: format!("{} entries ({rows}x{cols})", rows * cols),
                actual: format!("{} entries", data.len()),
            });
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "matrix construction (entry {bad})"
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds a matrix from a slice of equal-length rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        if let Some((i, row)) = rows.iter().enumerate().find(|(_, row)| row.len() != c) {
            return Err(Error::ShapeMismatch {
                context: "matrix construction from rows",
                expected: format!("{c} entries per row"),
                actual: format!("{} entries in row {i}", row.len()),
            });
        }
        Matrix::new(r, c, rows.concat())
    }

    /// All-zeros matrix.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Identity matrix of order `n`.
    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Matrix with every entry equal to `value`.
    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    /// Row `i` as a slice.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Flat row-major view of the entries.
    pub fn entries(&self) -> &[f64] {
        &self.data
    }

    /// Returns an error if any entry is NaN or infinite.
    pub fn validate_finite(&self, context: &str) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite(context.to_string()))
        }
    }

    /// Matrix-vector product. Errors on dimension mismatch.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::ShapeMismatch {
                context: "matrix-vector product",
                expected: format!("vector of length {}", self.cols),
                actual: format!("length {}", x.len()),
            });
        }
        Ok((0..self.rows)
            .map(|i| dot(self.row(i), x))
            .collect())
    }

    /// Matrix product `self * other`. Errors on inner-dimension mismatch.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::ShapeMismatch {
                context: "matrix product",
                expected: format!("left cols = right rows = {}", self.cols),
                actual: format!("right has {} rows", other.rows),
            });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        Ok(out)
    }

    /// Transposed copy.
    pub fn transposed(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }

    /// Entrywise sum. Errors on shape mismatch.
    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "matrix sum", |a, b| a + b)
    }

    /// Entrywise difference `self - other`. Errors on shape mismatch.
    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "matrix difference", |a, b| a - b)
    }

    /// Copy with every entry multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Matrix {
        self.map(|v| c * v)
    }

    /// Copy with `f` applied to every entry.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    fn zip_with(
        &self,
        other: &Matrix,
        context: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch {
                context,
                expected: format!("{}x{}", self.rows, self.cols),
                actual: format!("{}x{}", other.rows, other.cols),
            });
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// Outer product `x yᵀ` of two vectors.
    pub fn outer(x: &[f64], y: &[f64]) -> Matrix {
        let mut out = Matrix::zeros(x.len(), y.len());
        for (i, &xi) in x.iter().enumerate() {
            for (j, &yj) in y.iter().enumerate() {
                out[(i, j)] = xi * yj;
            }
        }
        out
    }

    /// Frobenius norm.
    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Largest absolute entry (0 for an empty matrix).
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    /// Smallest entry.
    pub fn min_entry(&self) -> f64 {
        self.data.iter().fold(f64::INFINITY, |acc, &v| acc.min(v))
    }

    /// Symmetric part `(A + Aᵀ)/2` of a square matrix.
    pub fn symmetric_part(&self) -> Result<Matrix> {
        if self.rows != self.cols {
            return Err(Error::ShapeMismatch {
                context: "symmetric part",
                expected: "square matrix".to_string(),
                actual: format!("{}x{}", self.rows, self.cols),
            });
        }
        let mut out = self.clone();
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(i, j)] = 0.5 * (self[(i, j)] + self[(j, i)]);
            }
        }
        Ok(out)
    }

    /// Largest absolute difference from the transpose, 0 for symmetric.
    pub fn asymmetry(&self) -> f64 {
        if self.rows != self.cols {
            return f64::INFINITY;
        }
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Frobenius distance `‖a − b‖_F`. Errors on shape mismatch.
pub fn mat_frobenius_distance(a: &Matrix, b: &Matrix) -> Result<f64> {
    Ok(a.sub(b)?.frobenius_norm())
}

/// Dot product. Panics on length mismatch; callers validate shapes first.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "dot product length mismatch");
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// Euclidean norm of a vector.
pub fn l2_norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Entrywise difference `a - b` of two equal-length vectors.
pub fn vec_sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    assert_eq!(a.len(), b.len(), "vector difference length mismatch");
    a.iter().zip(b).map(|(&x, &y)| x - y).collect()
}

/// Largest absolute difference between two equal-length vectors.
pub fn linf_distance(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "vector distance length mismatch");
    a.iter()
        .zip(b)
        .fold(0.0, |acc, (&x, &y)| acc.max((x - y).abs()))
}

/// log(Σ exp(x_i)) computed against the running maximum, immune to
/// overflow. Returns −∞ for an empty slice or when every term is −∞.
pub fn logsumexp(xs: &[f64]) -> f64 {
    let max = xs.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = xs.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

/// Compensated (Kahan–Neumaier) accumulator. Adding n terms keeps the
/// rounding error at O(ε) instead of O(nε), which matters when grid
/// enumerations sum millions of near-cancelling products.
#[derive(Clone, Copy, Debug, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    /// Folds another accumulator into this one. Used to combine per-block
    /// partial sums in a fixed order after a parallel map.
    pub fn merge(&mut self, other: KahanSum) {
        self.add(other.sum);
        self.add(other.comp);
    }

    pub fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Seeded, splittable random stream.
///
/// Two streams built from the same `(seed, stream_id)` produce bit-identical
/// output; distinct stream ids give statistically independent sequences.
/// [`RngStream::substream`] derives child streams deterministically, so
/// Monte Carlo work can be split into blocks whose results do not depend
/// on thread count or scheduling.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        RngStream {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Deterministically derived child stream. Children of distinct
    /// `(stream_id, index)` pairs get distinct stream ids.
    pub fn substream(&self, index: u64) -> RngStream {
        let child = splitmix64(
            splitmix64(self.stream_id ^ 0x9e37_79b9_7f4a_7c15).wrapping_add(index),
        );
        RngStream::new(self.seed, child)
    }

    /// Uniform draw from [0, 1).
    pub fn uniform(&mut self) -> f64 {
        // 53 random mantissa bits, the standard uniform-double construction.
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }
}

/// SplitMix64 mixing step; used only to derive child stream ids.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Default step for finite differences around `x0`.
pub fn default_fd_step(x0: f64) -> f64 {
    1e-4 * x0.abs().max(1.0)
}

fn eval_finite(f: &mut impl FnMut(f64) -> Result<f64>, x: f64) -> Result<f64> {
    let v = f(x)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(format!(
            "finite difference evaluation at x = {x}"
        )))
    }
}

/// Central difference `(f(x0+h) − f(x0−h)) / 2h`.
///
/// Exact (up to rounding) for quadratics. Errors if `h <= 0` or if `f`
/// returns a non-finite value at either evaluation point.
pub fn finite_difference_scalar(
    mut f: impl FnMut(f64) -> Result<f64>,
    x0: f64,
    h: f64,
) -> Result<f64> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "finite difference step must be positive and finite, got {h}"
        )));
    }
    let hi = eval_finite(&mut f, x0 + h)?;
    let lo = eval_finite(&mut f, x0 - h)?;
    Ok((hi - lo) / (2.0 * h))
}

/// Second-order one-sided difference `(-3 f(x0) + 4 f(x0+h) - f(x0+2h)) / 2h`.
///
/// Used instead of the central rule when `x0` sits within `2h` of a domain
/// boundary on the left (for example a dark-current entry near zero).
pub fn forward_difference_richardson(
    mut f: impl FnMut(f64) -> Result<f64>,
    x0: f64,
    h: f64,
) -> Result<f64> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "finite difference step must be positive and finite, got {h}"
        )));
    }
    let f0 = eval_finite(&mut f, x0)?;
    let f1 = eval_finite(&mut f, x0 + h)?;
    let f2 = eval_finite(&mut f, x0 + 2.0 * h)?;
    Ok((-3.0 * f0 + 4.0 * f1 - f2) / (2.0 * h))
}

/// Eigenvalues of the symmetric part of a square matrix, ascending.
///
/// Cyclic Jacobi iteration; the matrices this crate meets are at most
/// tens of rows, where Jacobi is both simple and accurate.
pub fn symmetric_eigenvalues(m: &Matrix) -> Result<Vec<f64>> {
    let n = m.rows();
    let mut a = m.symmetric_part()?;
    if n == 0 {
        return Ok(vec![]);
    }
    let scale = a.max_abs().max(1.0);
    let tol = 1e-14 * scale;
    for _sweep in 0..100 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off = off.max(a[(p, q)].abs());
            }
        }
        if off <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.abs() <= tol * 1e-2 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (1.0 + theta * theta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eigs: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    eigs.sort_by(|x, y| x.partial_cmp(y).expect("eigenvalues are finite"));
    Ok(eigs)
}

// ---------------------------------------------------------------------------
// CSV text format: one row per line, comma separators, '.' decimal point,
// no header. Formatting uses the shortest representation that parses back
// to the same f64 bits, so write → read round-trips exactly.
// ---------------------------------------------------------------------------

fn format_f64(v: f64) -> String {
    format!("{v}")
}

/// Formats a matrix as CSV, one row per line, with a trailing newline.
pub fn format_matrix_csv(m: &Matrix) -> String {
    let mut out = String::new();
    for i in 0..m.rows() {
        let row: Vec<String> = m.row(i).iter().map(|&v| format_f64(v)).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Formats a vector as a single CSV row with a trailing newline.
pub fn format_vector_csv(v: &[f64]) -> String {
    let row: Vec<String> = v.iter().map(|&x| format_f64(x)).collect();
    let mut out = row.join(",");
    out.push('\n');
    out
}

fn parse_f64(token: &str, line: usize, col: usize) -> Result<f64> {
    let trimmed = token.trim();
    let v: f64 = trimmed.parse().map_err(|_| {
        Error::Parse(format!(
            "line {}, field {}: cannot parse {trimmed:?} as a number",
            line + 1,
            col + 1
        ))
    })?;
    if !v.is_finite() {
        return Err(Error::Parse(format!(
            "line {}, field {}: non-finite value {trimmed:?}",
            line + 1,
            col + 1
        )));
    }
    Ok(v)
}

/// Parses CSV text into a matrix. Rejects ragged rows and empty input.
pub fn parse_matrix_csv(text: &str) -> Result<Matrix> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: Result<Vec<f64>> = line
            .split(',')
            .enumerate()
            .map(|(j, tok)| parse_f64(tok, i, j))
            .collect();
        rows.push(row?);
    }
    if rows.is_empty() {
        return Err(Error::Parse("empty matrix text".to_string()));
    }
    let width = rows[0].len();
    if let Some((i, row)) = rows.iter().enumerate().find(|(_, r)| r.len() != width) {
        return Err(Error::Parse(format!(
            "ragged rows: line {} has {} fields, expected {}",
            i + 1,
            row.len(),
            width
        )));
    }
    Matrix::from_rows(&rows)
}

/// Parses a vector from CSV text: either a single row, or one entry per line.
pub fn parse_vector_csv(text: &str) -> Result<Vec<f64>> {
    let m = parse_matrix_csv(text)?;
    if m.rows() == 1 {
        Ok(m.row(0).to_vec())
    } else if m.cols() == 1 {
        Ok((0..m.rows()).map(|i| m[(i, 0)]).collect())
    } else {
        Err(Error::Parse(format!(
            "expected a vector (one row or one column), got {}x{}",
            m.rows(),
            m.cols()
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn matrix_construction_validates_shape_and_finiteness() {
        assert!(Matrix::new(2, 2, vec![1.0, 2.0, 3.0]).is_err());
        assert!(Matrix::new(1, 2, vec![1.0, f64::NAN]).is_err());
        let m = Matrix::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(m[(1, 0)], 3.0);
    }

    #[test]
    fn matvec_and_matmul_agree_with_hand_computation() {
        let m = Matrix::from_rows(&[vec![1.0, 0.5], vec![0.2, 1.0]]).unwrap();
        assert_eq!(m.matvec(&[1.0, 1.0]).unwrap(), vec![1.5, 1.2]);
        let p = m.matmul(&Matrix::identity(2)).unwrap();
        assert_eq!(p, m);
        let t = m.transposed();
        assert_eq!(t[(0, 1)], 0.2);
        assert!(m.matvec(&[1.0]).is_err());
    }

    #[test]
    fn frobenius_distance_matches_examples() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let b = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 5.0]]).unwrap();
        assert_eq!(mat_frobenius_distance(&a, &b).unwrap(), 1.0);
        assert_eq!(mat_frobenius_distance(&a, &a).unwrap(), 0.0);
        let c = Matrix::zeros(1, 2);
        assert!(mat_frobenius_distance(&a, &c).is_err());
    }

    #[test]
    fn central_difference_is_exact_on_quadratics() {
        let d = finite_difference_scalar(|x| Ok(x * x), 3.0, 1e-4).unwrap();
        assert!((d - 6.0).abs() < 1e-9, "got {d}");
    }

    #[test]
    fn central_difference_of_even_function_at_zero_is_zero() {
        let d = finite_difference_scalar(|x| Ok(x.abs()), 0.0, 1e-4).unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn finite_difference_rejects_bad_step_and_nonfinite_values() {
        assert!(finite_difference_scalar(Ok, 0.0, 0.0).is_err());
        let err = finite_difference_scalar(|x| Ok(1.0 / x), 1e-4, 1e-4).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("finite difference evaluation at x ="), "{msg}");
    }

    #[test]
    fn one_sided_difference_is_second_order() {
        // Exact for quadratics, like the central rule.
        let d = forward_difference_richardson(|x| Ok(x * x), 1.0, 1e-4).unwrap();
        assert!((d - 2.0).abs() < 1e-9, "got {d}");
        // On x³ the residual is O(h²).
        let d3 = forward_difference_richardson(|x| Ok(x * x * x), 1.0, 1e-4).unwrap();
        assert!((d3 - 3.0).abs() < 1e-6, "got {d3}");
    }

    #[test]
    fn logsumexp_handles_empty_and_neg_infinity() {
        assert_eq!(logsumexp(&[]), f64::NEG_INFINITY);
        assert_eq!(
            logsumexp(&[f64::NEG_INFINITY, f64::NEG_INFINITY]),
            f64::NEG_INFINITY
        );
        let v = logsumexp(&[-1000.0, -1000.0]);
        assert!((v - (-1000.0 + 2f64.ln())).abs() < 1e-12);
        let w = logsumexp(&[0.0, f64::NEG_INFINITY]);
        assert_eq!(w, 0.0);
    }

    #[test]
    fn kahan_recovers_cancelled_small_terms() {
        let mut k = KahanSum::new();
        for &x in &[1e16, 1.0, -1e16] {
            k.add(x);
        }
        assert_eq!(k.total(), 1.0);
        let naive: f64 = [1e16, 1.0, -1e16].iter().sum();
        assert_eq!(naive, 0.0);
    }

    #[test]
    fn kahan_merge_matches_sequential_accumulation() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64 * 1e-3 - 0.05).collect();
        let mut whole = KahanSum::new();
        for &x in &xs {
            whole.add(x);
        }
        let mut left = KahanSum::new();
        let mut right = KahanSum::new();
        for &x in &xs[..500] {
            left.add(x);
        }
        for &x in &xs[500..] {
            right.add(x);
        }
        left.merge(right);
        assert!((left.total() - whole.total()).abs() < 1e-12);
    }

    #[test]
    fn rng_stream_is_reproducible_and_streams_differ() {
        let mut a = RngStream::new(42, 0);
        let mut b = RngStream::new(42, 0);
        let seq_a: Vec<u64> = (0..10).map(|_| a.next_u64()).collect();
        let seq_b: Vec<u64> = (0..10).map(|_| b.next_u64()).collect();
        assert_eq!(seq_a, seq_b);
        let mut c = RngStream::new(42, 1);
        let seq_c: Vec<u64> = (0..10).map(|_| c.next_u64()).collect();
        assert_ne!(seq_a, seq_c);
    }

    #[test]
    fn substreams_are_deterministic_and_distinct() {
        let root = RngStream::new(7, 0);
        let ids: Vec<u64> = (0..100).map(|i| root.substream(i).stream_id()).collect();
        let again: Vec<u64> = (0..100).map(|i| root.substream(i).stream_id()).collect();
        assert_eq!(ids, again);
        let mut sorted = ids.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), ids.len(), "collision among substream ids");
    }

    #[test]
    fn uniform_draws_live_in_unit_interval() {
        let mut s = RngStream::new(123, 5);
        for _ in 0..1000 {
            let u = s.uniform();
            assert!((0.0..1.0).contains(&u));
        }
    }

    #[test]
    fn jacobi_eigenvalues_match_known_spectra() {
        let m = Matrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let e = symmetric_eigenvalues(&m).unwrap();
        assert!((e[0] - 1.0).abs() < 1e-12 && (e[1] - 3.0).abs() < 1e-12);

        let d = Matrix::from_rows(&[
            vec![3.0, 0.0, 0.0],
            vec![0.0, -1.0, 0.0],
            vec![0.0, 0.0, 0.5],
        ])
        .unwrap();
        let e = symmetric_eigenvalues(&d).unwrap();
        assert_eq!(e, vec![-1.0, 0.5, 3.0]);

        // Outer products are PSD with one nonzero eigenvalue ‖x‖².
        let x = [1.0, -2.0, 0.5];
        let e = symmetric_eigenvalues(&Matrix::outer(&x, &x)).unwrap();
        assert!(e[0] > -1e-12 && e[1] > -1e-12);
        assert!((e[2] - dot(&x, &x)).abs() < 1e-10);
    }

    #[test]
    fn csv_round_trips_the_documented_example() {
        let text = "1.5,2.0\n3.25,4.0\n";
        let m = parse_matrix_csv(text).unwrap();
        assert_eq!(m.shape(), (2, 2));
        assert_eq!(m[(1, 0)], 3.25);
        let back = format_matrix_csv(&m);
        assert_eq!(back, "1.5,2\n3.25,4\n");
        let m2 = parse_matrix_csv(&back).unwrap();
        assert_eq!(m, m2);
    }

    #[test]
    fn csv_rejects_ragged_rows_and_garbage() {
        assert!(parse_matrix_csv("1,2\n3\n").is_err());
        assert!(parse_matrix_csv("1,two\n").is_err());
        assert!(parse_matrix_csv("").is_err());
        assert!(parse_matrix_csv("inf,1\n").is_err());
    }

    #[test]
    fn vector_csv_accepts_row_and_column_layouts() {
        assert_eq!(parse_vector_csv("1,2,3\n").unwrap(), vec![1.0, 2.0, 3.0]);
        assert_eq!(parse_vector_csv("1\n2\n3\n").unwrap(), vec![1.0, 2.0, 3.0]);
        assert!(parse_vector_csv("1,2\n3,4\n").is_err());
        assert_eq!(format_vector_csv(&[0.5, -1.0]), "0.5,-1\n");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn csv_round_trip_is_bit_exact(
            rows in 1usize..5,
            cols in 1usize..5,
            raw in proptest::collection::vec(-1e300f64..1e300, 1..25),
        ) {
            let need = rows * cols;
            prop_assume!(raw.len() >= need);
            let m = Matrix::new(rows, cols, raw[..need].to_vec()).unwrap();
            let text = format_matrix_csv(&m);
            let back = parse_matrix_csv(&text).unwrap();
            prop_assert_eq!(m.entries(), back.entries());
        }

        #[test]
        fn logsumexp_matches_naive_on_moderate_inputs(
            xs in proptest::collection::vec(-30.0f64..30.0, 1..8)
        ) {
            let naive: f64 = xs.iter().map(|x| x.exp()).sum::<f64>().ln();
            let stable = logsumexp(&xs);
            prop_assert!((naive - stable).abs() < 1e-10);
        }

        #[test]
        fn central_difference_exact_on_random_quadratics(
            a in -5.0f64..5.0,
            b in -5.0f64..5.0,
            c in -5.0f64..5.0,
            x0 in -3.0f64..3.0,
        ) {
            let d = finite_difference_scalar(
                |x| Ok(a * x * x + b * x + c),
                x0,
                default_fd_step(x0),
            ).unwrap();
            prop_assert!((d - (2.0 * a * x0 + b)).abs() < 1e-7);
        }
    }
}
