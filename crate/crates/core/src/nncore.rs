//! Small dense-network numerics: row-major matrices, linear layers with
//! hand-written backward passes, RMSE loss, AdaDelta and a central-difference
//! gradient checker.

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("empty batch")]
    EmptyBatch,
    #[error("non-finite gradient at parameter {0}")]
    NonFiniteGradient(usize),
}

pub type Result<T> = std::result::Result<T, NnError>;

/// Row-major `f64` matrix. Rows are samples when used as a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(NnError::Shape {
                op: "from_vec",
                left: (rows, cols),
                right: (data.len(), 1),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(NnError::Shape {
                    op: "from_rows",
                    left: (1, cols),
                    right: (1, r.len()),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
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

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    fn check_same(&self, other: &Matrix, op: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(NnError::Shape {
                op,
                left: self.shape(),
                right: other.shape(),
            });
        }
        Ok(())
    }

    /// `self · otherᵀ`.
    pub fn matmul_t(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(NnError::Shape {
                op: "matmul_t",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let mut out = Matrix::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            let a = self.row(i);
            for j in 0..other.rows {
                out.data[i * other.rows + j] = dot(a, other.row(j));
            }
        }
        Ok(out)
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(NnError::Shape {
                op: "matmul",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ · other`.
    pub fn t_matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows {
            return Err(NnError::Shape {
                op: "t_matmul",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let mut out = Matrix::zeros(self.cols, other.cols);
        for r in 0..self.rows {
            let a_row = self.row(r);
            let b_row = other.row(r);
            for (i, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.check_same(other, "add")?;
        Ok(self.zip_map(other, |a, b| a + b))
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.check_same(other, "sub")?;
        Ok(self.zip_map(other, |a, b| a - b))
    }

    pub fn add_assign(&mut self, other: &Matrix) -> Result<()> {
        self.check_same(other, "add_assign")?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    fn zip_map(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Matrix {
        self.map(|v| v * s)
    }

    /// Column sums as a vector of length `cols`.
    pub fn col_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for row in self.iter_rows() {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        out
    }

    /// Copies the selected rows, in order.
    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Fully connected layer with identity activation: `y = x·Wᵀ + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// `out × in`
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrads {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl DenseGrads {
    pub fn zeros_like(layer: &DenseLayer) -> Self {
        DenseGrads {
            weights: Matrix::zeros(layer.out_dim(), layer.in_dim()),
            bias: vec![0.0; layer.out_dim()],
        }
    }

    pub fn write_flat(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(self.weights.as_slice());
        out.extend_from_slice(&self.bias);
    }
}

impl DenseLayer {
    pub fn new(weights: Matrix, bias: Vec<f64>) -> Result<Self> {
        if bias.len() != weights.rows() {
            return Err(NnError::Shape {
                op: "dense_new",
                left: weights.shape(),
                right: (bias.len(), 1),
            });
        }
        Ok(DenseLayer { weights, bias })
    }

    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        DenseLayer {
            weights: Matrix::zeros(out_dim, in_dim),
            bias: vec![0.0; out_dim],
        }
    }

    /// Glorot-uniform weights, zero bias. Draws `out·in` values row-major.
    pub fn glorot<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let data = (0..in_dim * out_dim)
            .map(|_| rng.random_range(-limit..=limit))
            .collect();
        DenseLayer {
            weights: Matrix {
                rows: out_dim,
                cols: in_dim,
                data,
            },
            bias: vec![0.0; out_dim],
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn param_count(&self) -> usize {
        self.weights.as_slice().len() + self.bias.len()
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.in_dim() {
            return Err(NnError::Shape {
                op: "dense_forward",
                left: x.shape(),
                right: self.weights.shape(),
            });
        }
        let mut y = x.matmul_t(&self.weights)?;
        let cols = y.cols();
        for row in y.data.chunks_exact_mut(cols.max(1)) {
            for (v, b) in row.iter_mut().zip(&self.bias) {
                *v += b;
            }
        }
        Ok(y)
    }

    /// Returns the parameter gradients and the gradient with respect to `x`.
    pub fn backward(&self, x: &Matrix, upstream: &Matrix) -> Result<(DenseGrads, Matrix)> {
        if x.cols() != self.in_dim()
            || upstream.cols() != self.out_dim()
            || x.rows() != upstream.rows()
        {
            return Err(NnError::Shape {
                op: "dense_backward",
                left: x.shape(),
                right: upstream.shape(),
            });
        }
        let grads = DenseGrads {
            weights: upstream.t_matmul(x)?,
            bias: upstream.col_sums(),
        };
        let grad_x = upstream.matmul(&self.weights)?;
        Ok((grads, grad_x))
    }

    pub fn write_flat(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(self.weights.as_slice());
        out.extend_from_slice(&self.bias);
    }

    /// Overwrites parameters from the front of `src`, returning the remainder.
    pub fn read_flat<'a>(&mut self, src: &'a [f64]) -> &'a [f64] {
        let nw = self.weights.as_slice().len();
        let nb = self.bias.len();
        self.weights.as_mut_slice().copy_from_slice(&src[..nw]);
        self.bias.copy_from_slice(&src[nw..nw + nb]);
        &src[nw + nb..]
    }
}

/// Root-mean-squared error over every element of the batch and its gradient
/// with respect to `x_hat`.
pub fn rmse_loss(x_hat: &Matrix, x: &Matrix) -> Result<(f64, Matrix)> {
    if x_hat.shape() != x.shape() {
        return Err(NnError::Shape {
            op: "rmse_loss",
            left: x_hat.shape(),
            right: x.shape(),
        });
    }
    let n = x.as_slice().len();
    if n == 0 {
        return Err(NnError::EmptyBatch);
    }
    let diff = x_hat.sub(x)?;
    let sq: f64 = diff.as_slice().iter().map(|d| d * d).sum();
    let loss = (sq / n as f64).sqrt();
    if loss == 0.0 {
        return Ok((0.0, Matrix::zeros(x.rows(), x.cols())));
    }
    let scale = 1.0 / (n as f64 * loss);
    Ok((loss, diff.scale(scale)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaDeltaConfig {
    pub rho: f64,
    pub epsilon: f64,
}

impl Default for AdaDeltaConfig {
    fn default() -> Self {
        AdaDeltaConfig {
            rho: 0.95,
            epsilon: 1e-6,
        }
    }
}

/// Running averages of squared gradients and squared updates.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaDeltaState {
    pub config: AdaDeltaConfig,
    pub mean_sq_grad: Vec<f64>,
    pub mean_sq_update: Vec<f64>,
}

impl AdaDeltaState {
    pub fn new(param_count: usize, config: AdaDeltaConfig) -> Self {
        AdaDeltaState {
            config,
            mean_sq_grad: vec![0.0; param_count],
            mean_sq_update: vec![0.0; param_count],
        }
    }

    /// One AdaDelta update, applied in place.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.mean_sq_grad.len() {
            return Err(NnError::Shape {
                op: "adadelta_step",
                left: (params.len(), 1),
                right: (grads.len(), 1),
            });
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(NnError::NonFiniteGradient(i));
        }
        let AdaDeltaConfig { rho, epsilon } = self.config;
        for (((p, &g), eg), ex) in params
            .iter_mut()
            .zip(grads)
            .zip(self.mean_sq_grad.iter_mut())
            .zip(self.mean_sq_update.iter_mut())
        {
            if g == 0.0 {
                // Zero-gradient entries leave parameters and accumulators untouched.
                continue;
            }
            *eg = rho * *eg + (1.0 - rho) * g * g;
            let dx = -((*ex + epsilon).sqrt() / (*eg + epsilon).sqrt()) * g;
            *ex = rho * *ex + (1.0 - rho) * dx * dx;
            *p += dx;
        }
        Ok(())
    }
}

/// Largest relative disagreement between `analytic` and central differences
/// of `loss` around `params`, with step `h = 1e-5`.
pub fn gradient_check<F>(loss: F, params: &[f64], analytic: &[f64]) -> f64
where
    F: Fn(&[f64]) -> f64,
{
    const H: f64 = 1e-5;
    let mut probe = params.to_vec();
    let mut worst = 0.0f64;
    for i in 0..params.len() {
        let orig = probe[i];
        probe[i] = orig + H;
        let up = loss(&probe);
        probe[i] = orig - H;
        let down = loss(&probe);
        probe[i] = orig;
        let numeric = (up - down) / (2.0 * H);
        let a = analytic[i];
        let err = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
        worst = worst.max(err);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
        let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
        Matrix::from_vec(rows, cols, data).unwrap()
    }

    #[test]
    fn identity_layer_passes_through() {
        let layer = DenseLayer::new(Matrix::identity(3), vec![0.0; 3]).unwrap();
        let x = Matrix::from_rows(&[[1.0, -2.0, 3.0], [0.5, 0.0, 9.0]]).unwrap();
        assert_eq!(layer.forward(&x).unwrap(), x);
    }

    #[test]
    fn zero_weights_emit_bias() {
        let mut layer = DenseLayer::zeros(4, 2);
        layer.bias = vec![0.5, -1.5];
        let y = layer.forward(&Matrix::from_rows(&[[1.0; 4], [7.0; 4]]).unwrap()).unwrap();
        assert_eq!(y.as_slice(), &[0.5, -1.5, 0.5, -1.5]);
    }

    #[test]
    fn hand_computed_forward() {
        let w = Matrix::from_rows(&[[1.0, 1.0], [0.0, 1.0]]).unwrap();
        let layer = DenseLayer::new(w, vec![0.0, 0.0]).unwrap();
        let y = layer.forward(&Matrix::from_rows(&[[1.0, 2.0]]).unwrap()).unwrap();
        assert_eq!(y.as_slice(), &[3.0, 2.0]);
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let layer = DenseLayer::zeros(3, 2);
        assert!(matches!(
            layer.forward(&Matrix::zeros(1, 4)),
            Err(NnError::Shape { .. })
        ));
        assert!(layer.backward(&Matrix::zeros(1, 3), &Matrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn zero_upstream_zero_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let layer = DenseLayer::glorot(5, 3, &mut rng);
        let x = random_matrix(4, 5, &mut rng);
        let (g, gx) = layer.backward(&x, &Matrix::zeros(4, 3)).unwrap();
        assert!(g.weights.as_slice().iter().all(|&v| v == 0.0));
        assert!(g.bias.iter().all(|&v| v == 0.0));
        assert!(gx.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scalar_layer_backward() {
        let layer = DenseLayer::new(Matrix::from_rows(&[[3.0]]).unwrap(), vec![0.25]).unwrap();
        let x = Matrix::from_rows(&[[2.0]]).unwrap();
        let (g, gx) = layer.backward(&x, &Matrix::from_rows(&[[1.0]]).unwrap()).unwrap();
        assert_eq!(g.weights.as_slice(), &[2.0]);
        assert_eq!(g.bias, vec![1.0]);
        assert_eq!(gx.as_slice(), &[3.0]);
    }

    /// A fixed random linear functional of the layer output gives a scalar
    /// loss whose gradient is exactly the backward pass with that upstream.
    #[test]
    fn dense_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let layer = DenseLayer::glorot(30, 20, &mut rng);
        let x = random_matrix(8, 30, &mut rng);
        let target = random_matrix(8, 20, &mut rng);
        let loss_of = |p: &[f64]| {
            let mut l = layer.clone();
            l.read_flat(p);
            let y = l.forward(&x).unwrap();
            rmse_loss(&y, &target).unwrap().0
        };
        let y = layer.forward(&x).unwrap();
        let (_, up) = rmse_loss(&y, &target).unwrap();
        let (g, _) = layer.backward(&x, &up).unwrap();
        let mut params = Vec::new();
        layer.write_flat(&mut params);
        let mut analytic = Vec::new();
        g.write_flat(&mut analytic);
        let err = gradient_check(loss_of, &params, &analytic);
        assert!(err < 1e-6, "relative error {err}");
    }

    #[test]
    fn dense_grad_x_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let layer = DenseLayer::glorot(6, 4, &mut rng);
        let x = random_matrix(3, 6, &mut rng);
        let target = random_matrix(3, 4, &mut rng);
        let y = layer.forward(&x).unwrap();
        let (_, up) = rmse_loss(&y, &target).unwrap();
        let (_, gx) = layer.backward(&x, &up).unwrap();
        let err = gradient_check(
            |p| {
                let xm = Matrix::from_vec(3, 6, p.to_vec()).unwrap();
                rmse_loss(&layer.forward(&xm).unwrap(), &target).unwrap().0
            },
            x.as_slice(),
            gx.as_slice(),
        );
        assert!(err < 1e-6, "relative error {err}");
    }

    #[test]
    fn rmse_of_identical_is_zero() {
        let x = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        let (l, g) = rmse_loss(&x, &x).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rmse_of_constant_offset() {
        let x = Matrix::zeros(3, 5);
        let (l, _) = rmse_loss(&x.map(|_| -0.75), &x).unwrap();
        assert!((l - 0.75).abs() < 1e-15);
    }

    #[test]
    fn rmse_errors() {
        assert_eq!(
            rmse_loss(&Matrix::zeros(0, 30), &Matrix::zeros(0, 30)).unwrap_err(),
            NnError::EmptyBatch
        );
        assert!(rmse_loss(&Matrix::zeros(1, 3), &Matrix::zeros(1, 4)).is_err());
    }

    #[test]
    fn rmse_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_matrix(16, 30, &mut rng);
        let b = random_matrix(16, 30, &mut rng);
        let (_, g) = rmse_loss(&a, &b).unwrap();
        let err = gradient_check(
            |p| rmse_loss(&Matrix::from_vec(16, 30, p.to_vec()).unwrap(), &b).unwrap().0,
            a.as_slice(),
            g.as_slice(),
        );
        assert!(err < 1e-6, "relative error {err}");
    }

    #[test]
    fn adadelta_first_step() {
        let mut st = AdaDeltaState::new(1, AdaDeltaConfig { rho: 0.95, epsilon: 1e-6 });
        let mut p = [0.0];
        st.step(&mut p, &[1.0]).unwrap();
        // RMS[Δx]/RMS[g] with both accumulators fresh: -sqrt(1e-6 / 0.050001),
        // i.e. -sqrt(1/50001) = -4.472091234...e-3.
        assert!((p[0] - (-4.472_091_234e-3)).abs() < 1e-12, "{}", p[0]);
        assert!((st.mean_sq_grad[0] - 0.05).abs() < 1e-15);
        assert!((st.mean_sq_update[0] - 0.05 * p[0] * p[0]).abs() < 1e-18);
    }

    #[test]
    fn adadelta_zero_gradient_fixed_point() {
        let mut st = AdaDeltaState::new(3, AdaDeltaConfig::default());
        let mut p = [1.0, -2.0, 3.0];
        st.step(&mut p, &[0.5, -0.5, 1.0]).unwrap();
        let (p0, s0) = (p, st.clone());
        st.step(&mut p, &[0.0; 3]).unwrap();
        assert_eq!(p, p0);
        assert_eq!(st, s0);
    }

    #[test]
    fn adadelta_rejects_nan() {
        let mut st = AdaDeltaState::new(2, AdaDeltaConfig::default());
        let mut p = [0.0, 0.0];
        assert_eq!(
            st.step(&mut p, &[0.0, f64::NAN]),
            Err(NnError::NonFiniteGradient(1))
        );
    }

    #[test]
    fn gradient_check_vacuous() {
        assert_eq!(gradient_check(|_| 1.0, &[], &[]), 0.0);
    }

    proptest! {
        #[test]
        fn adadelta_moves_against_gradient(
            g in prop::collection::vec(-10.0f64..10.0, 1..20),
            steps in 1usize..5,
        ) {
            let mut st = AdaDeltaState::new(g.len(), AdaDeltaConfig::default());
            let mut p = vec![0.0; g.len()];
            for _ in 0..steps {
                let before = p.clone();
                st.step(&mut p, &g).unwrap();
                for i in 0..g.len() {
                    let dx = p[i] - before[i];
                    if g[i] != 0.0 {
                        prop_assert!(dx * g[i] < 0.0);
                    } else {
                        prop_assert_eq!(dx, 0.0);
                    }
                }
                prop_assert!(st.mean_sq_grad.iter().all(|&v| v >= 0.0));
                prop_assert!(st.mean_sq_update.iter().all(|&v| v >= 0.0));
            }
        }

        #[test]
        fn backward_matches_finite_differences_random_shapes(
            seed in any::<u64>(),
            n_in in 1usize..31,
            n_out in 1usize..21,
            batch in 1usize..6,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let layer = DenseLayer::glorot(n_in, n_out, &mut rng);
            let x = random_matrix(batch, n_in, &mut rng);
            let coeffs = random_matrix(batch, n_out, &mut rng);
            // Linear functional sum(coeffs ⊙ y): its upstream gradient is `coeffs`.
            let loss = |p: &[f64]| {
                let mut l = layer.clone();
                l.read_flat(p);
                let y = l.forward(&x).unwrap();
                y.as_slice().iter().zip(coeffs.as_slice()).map(|(a, b)| a * b).sum::<f64>()
            };
            let (g, _) = layer.backward(&x, &coeffs).unwrap();
            let mut params = Vec::new();
            layer.write_flat(&mut params);
            let mut analytic = Vec::new();
            g.write_flat(&mut analytic);
            prop_assert!(gradient_check(loss, &params, &analytic) < 1e-5);
        }
    }
}
