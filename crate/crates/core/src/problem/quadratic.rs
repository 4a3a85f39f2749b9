use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::hilbert::{BilinearForm, DualFunctional, GramOperator, PrimalVector};
use crate::problem::{CompositeProblem, ConvexityEstimates};
use crate::scalar::Scalar;
use crate::sparse::CsrMatrix;

/// `F(x) = ½ xᵀQx + bᵀx + Σ w_j |x_j|` on a space with Gram matrix `R`.
///
/// Small dense instances of this type serve as test problems with computable
/// convexity constants.
#[derive(Debug, Clone)]
pub struct QuadraticL1<T> {
    hessian: BilinearForm<T>,
    linear: DualFunctional<T>,
    weights: Vec<T>,
    mask: Vec<bool>,
    gram: GramOperator<T>,
    convexity: ConvexityEstimates<T>,
}

impl<T: Scalar> QuadraticL1<T> {
    pub fn new(hessian: CsrMatrix<T>, linear: Vec<T>, weights: Vec<T>, gram: GramOperator<T>) -> Result<Self> {
        let n = gram.dim();
        for len in [hessian.size(), linear.len(), weights.len()] {
            if len != n {
                return Err(Error::DimensionMismatch { expected: n, found: len });
            }
        }
        if weights.iter().any(|&w| w < T::zero()) {
            return Err(Error::InvalidParameter("L1 weights must be nonnegative".into()));
        }
        Ok(Self {
            hessian: BilinearForm::new(hessian),
            linear: DualFunctional::from_vec(linear),
            weights,
            mask: vec![false; n],
            gram,
            convexity: ConvexityEstimates { kappa1: None, kappa2: Some(T::zero()) },
        })
    }

    /// Random instance with `Q = BBᵀ + kappa R` for a random dense SPD Gram
    /// matrix `R`, so the model is at least `kappa`-elliptic in the `R` norm.
    pub fn random(n: usize, kappa: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = random_spd(n, 0.5, &mut rng);
        let b = random_spd(n, 0.0, &mut rng);
        let q: Vec<f64> = b.iter().zip(&r).map(|(&x, &y)| x + kappa * y).collect();
        let lin: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.5)).collect();
        let conv = |v: Vec<f64>| v.into_iter().map(T::lit).collect::<Vec<T>>();
        let gram = GramOperator::new(CsrMatrix::from_dense(n, &conv(r))).expect("random Gram is SPD");
        let mut p = Self::new(CsrMatrix::from_dense(n, &conv(q)), conv(lin), conv(w), gram).expect("consistent sizes");
        p.convexity.kappa1 = Some(T::lit(kappa));
        p
    }

    pub fn with_convexity(mut self, convexity: ConvexityEstimates<T>) -> Self {
        self.convexity = convexity;
        self
    }

    pub fn with_weights(mut self, weights: Vec<T>) -> Self {
        assert_eq!(weights.len(), self.weights.len());
        self.weights = weights;
        self
    }

    pub fn hessian(&self) -> &BilinearForm<T> {
        &self.hessian
    }

    pub fn linear(&self) -> &DualFunctional<T> {
        &self.linear
    }
}

/// Row-major `AAᵀ/n + shift I` with uniform entries of `A` in `[-1, 1]`.
pub(crate) fn random_spd(n: usize, shift: f64, rng: &mut impl Rng) -> Vec<f64> {
    let a: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            m[i * n + j] = (0..n).map(|k| a[i * n + k] * a[j * n + k]).sum::<f64>() / n as f64;
        }
        m[i * n + i] += shift;
    }
    // exact symmetry
    for i in 0..n {
        for j in 0..i {
            m[i * n + j] = m[j * n + i];
        }
    }
    m
}

impl<T: Scalar> CompositeProblem<T> for QuadraticL1<T> {
    fn gram(&self) -> &GramOperator<T> {
        &self.gram
    }

    fn l1_weights(&self) -> &[T] {
        &self.weights
    }

    fn mask(&self) -> &[bool] {
        &self.mask
    }

    fn convexity(&self) -> ConvexityEstimates<T> {
        self.convexity
    }

    fn eval_f(&self, u: &PrimalVector<T>) -> Result<T> {
        if u.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: u.len() });
        }
        Ok(T::lit(0.5) * self.hessian.quadratic(u) + self.linear.apply(u))
    }

    fn eval_grad_f(&self, u: &PrimalVector<T>) -> Result<DualFunctional<T>> {
        if u.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: u.len() });
        }
        Ok(self.hessian.apply(u).plus(&self.linear))
    }

    fn eval_hessian(&self, _u: &PrimalVector<T>) -> Result<BilinearForm<T>> {
        Ok(self.hessian.clone())
    }
}
