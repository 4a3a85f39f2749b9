//! The discretized Hilbert space: primal coefficient vectors, dual functionals
//! and the Gram operator realizing the inner product and the Riesz map.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::sparse::{CsrMatrix, EnvelopeCholesky};

/// Negative radicands above this magnitude signal a non-SPD Gram matrix.
const RADICAND_FLOOR: f64 = -1e-14;

/// Coefficient vector of an element of the primal space.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimalVector<T>(Vec<T>);

/// Coefficient vector of a bounded linear functional; entry `j` is the value
/// on basis vector `e_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualFunctional<T>(Vec<T>);

macro_rules! coefficient_vector {
    ($ty:ident) => {
        impl<T: Scalar> $ty<T> {
            pub fn from_vec(coeffs: Vec<T>) -> Self {
                Self(coeffs)
            }

            pub fn zeros(n: usize) -> Self {
                Self(vec![T::zero(); n])
            }

            pub fn len(&self) -> usize {
                self.0.len()
            }

            pub fn is_empty(&self) -> bool {
                self.0.is_empty()
            }

            pub fn as_slice(&self) -> &[T] {
                &self.0
            }

            pub fn as_mut_slice(&mut self) -> &mut [T] {
                &mut self.0
            }

            pub fn into_vec(self) -> Vec<T> {
                self.0
            }

            pub fn is_finite(&self) -> bool {
                self.0.iter().all(|v| v.is_finite())
            }

            /// `self += a * other`
            pub fn axpy(&mut self, a: T, other: &Self) {
                assert_eq!(self.len(), other.len());
                self.0.iter_mut().zip(&other.0).for_each(|(s, &o)| *s += a * o);
            }

            pub fn plus(&self, other: &Self) -> Self {
                assert_eq!(self.len(), other.len());
                Self(self.0.iter().zip(&other.0).map(|(&a, &b)| a + b).collect())
            }

            pub fn minus(&self, other: &Self) -> Self {
                assert_eq!(self.len(), other.len());
                Self(self.0.iter().zip(&other.0).map(|(&a, &b)| a - b).collect())
            }

            pub fn scaled(&self, s: T) -> Self {
                Self(self.0.iter().map(|&a| a * s).collect())
            }

            pub fn max_abs(&self) -> T {
                self.0.iter().fold(T::zero(), |m, v| m.max(v.abs()))
            }

            pub fn euclidean_norm(&self) -> T {
                self.0.iter().map(|&v| v * v).sum::<T>().sqrt()
            }
        }

        impl<T> std::ops::Index<usize> for $ty<T> {
            type Output = T;
            fn index(&self, i: usize) -> &T {
                &self.0[i]
            }
        }

        impl<T> std::ops::IndexMut<usize> for $ty<T> {
            fn index_mut(&mut self, i: usize) -> &mut T {
                &mut self.0[i]
            }
        }
    };
}

coefficient_vector!(PrimalVector);
coefficient_vector!(DualFunctional);

impl<T: Scalar> DualFunctional<T> {
    /// Evaluates the functional at `v`.
    pub fn apply(&self, v: &PrimalVector<T>) -> T {
        assert_eq!(self.len(), v.len());
        self.0.iter().zip(&v.0).map(|(&a, &b)| a * b).sum()
    }
}

/// Symmetric bilinear form on the primal space, e.g. a (generalized) Hessian.
#[derive(Debug, Clone)]
pub struct BilinearForm<T>(CsrMatrix<T>);

impl<T: Scalar> BilinearForm<T> {
    pub fn new(matrix: CsrMatrix<T>) -> Self {
        Self(matrix)
    }

    pub fn matrix(&self) -> &CsrMatrix<T> {
        &self.0
    }

    pub fn into_matrix(self) -> CsrMatrix<T> {
        self.0
    }

    pub fn size(&self) -> usize {
        self.0.size()
    }

    /// `H v` as a dual functional.
    pub fn apply(&self, v: &PrimalVector<T>) -> DualFunctional<T> {
        DualFunctional(self.0.mul_vec(v.as_slice()))
    }

    /// `H(v, v)`.
    pub fn quadratic(&self, v: &PrimalVector<T>) -> T {
        self.0.quad_form(v.as_slice())
    }
}

/// Sparse SPD Gram matrix with a cached Cholesky factorization.
///
/// Immutable after construction, so it can be shared freely between threads.
#[derive(Debug, Clone)]
pub struct GramOperator<T> {
    matrix: CsrMatrix<T>,
    factor: EnvelopeCholesky<T>,
}

impl<T: Scalar> GramOperator<T> {
    /// Factorizes `matrix`; fails if it is not symmetric positive definite.
    pub fn new(matrix: CsrMatrix<T>) -> Result<Self> {
        if matrix.asymmetry() > T::zero() {
            return Err(Error::InvalidParameter("Gram matrix is not symmetric".into()));
        }
        let factor = EnvelopeCholesky::factor(&matrix)?;
        Ok(Self { matrix, factor })
    }

    pub fn identity(n: usize) -> Self {
        Self::new(CsrMatrix::identity(n)).expect("identity is SPD")
    }

    pub fn dim(&self) -> usize {
        self.matrix.size()
    }

    pub fn matrix(&self) -> &CsrMatrix<T> {
        &self.matrix
    }

    fn check(&self, n: usize) -> Result<()> {
        if n != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: n });
        }
        Ok(())
    }

    /// Riesz map `v -> <v, .>_X`.
    pub fn apply(&self, v: &PrimalVector<T>) -> Result<DualFunctional<T>> {
        self.check(v.len())?;
        Ok(DualFunctional(self.matrix.mul_vec(v.as_slice())))
    }

    /// Inverse Riesz map: the primal representative of `l`.
    pub fn riesz_inverse(&self, l: &DualFunctional<T>) -> Result<PrimalVector<T>> {
        self.check(l.len())?;
        Ok(PrimalVector(self.factor.solve(l.as_slice())))
    }

    pub fn inner(&self, v: &PrimalVector<T>, w: &PrimalVector<T>) -> Result<T> {
        self.check(v.len())?;
        self.check(w.len())?;
        let rv = self.matrix.mul_vec(v.as_slice());
        Ok(rv.iter().zip(w.as_slice()).map(|(&a, &b)| a * b).sum())
    }

    pub fn primal_norm(&self, v: &PrimalVector<T>) -> Result<T> {
        self.check(v.len())?;
        checked_sqrt(self.matrix.quad_form(v.as_slice()))
    }

    pub fn dual_norm(&self, l: &DualFunctional<T>) -> Result<T> {
        let r = self.riesz_inverse(l)?;
        checked_sqrt(l.apply(&r))
    }
}

pub(crate) fn checked_sqrt<T: Scalar>(radicand: T) -> Result<T> {
    if !radicand.is_finite() || radicand < T::lit(RADICAND_FLOOR) {
        return Err(Error::NegativeRadicand { value: radicand.as_f64() });
    }
    Ok(radicand.max(T::zero()).sqrt())
}
