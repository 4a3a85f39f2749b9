//! Vector-valued model problem on the unit cube with homogeneous Dirichlet
//! boundary conditions, discretized by multilinear (Q1) elements:
//!
//! ```text
//! f(u) = ∫ ½|∇u|² + α max(|∇u| - 1, 0)² + β u1³u2²u3 / (1 + |u|²) + ρ·u
//! g(u) = ∫ c |u|₁
//! ```
//!
//! Gradient terms use tensor two-point Gauss quadrature per element; the
//! pointwise terms (`β`, `ρ` and `g`) use nodal quadrature with the lumped
//! mass weights, which keeps them separable per node.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::hilbert::{BilinearForm, DualFunctional, GramOperator, PrimalVector};
use crate::problem::CompositeProblem;
use crate::scalar::Scalar;
use crate::sparse::{CsrMatrix, SparsityPattern};

/// Field components per node.
pub const COMPONENTS: usize = 3;

/// Inner product of the primal space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NormChoice {
    /// Full H¹: stiffness plus mass.
    #[default]
    H1,
    /// Gradient seminorm: stiffness only.
    H1Semi,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig<T> {
    pub dim: usize,
    pub nodes_per_axis: usize,
    pub alpha: T,
    pub beta: T,
    pub c: T,
    /// Load factor; the force field is `rho * (1, 1, 1)`.
    pub rho: T,
    pub norm: NormChoice,
}

impl<T: Scalar> ModelConfig<T> {
    /// Grid obtained by `levels` uniform refinements of a 5-node-per-axis grid.
    pub fn with_levels(dim: usize, levels: u32) -> Self {
        Self { nodes_per_axis: 4 * (1 << levels) + 1, ..Self::new(dim, 5) }
    }

    /// Default experiment parameters `α = 40, β = 40, c = 80, ρ = -100`.
    pub fn new(dim: usize, nodes_per_axis: usize) -> Self {
        Self {
            dim,
            nodes_per_axis,
            alpha: T::lit(40.0),
            beta: T::lit(40.0),
            c: T::lit(80.0),
            rho: T::lit(-100.0),
            norm: NormChoice::H1,
        }
    }
}

/// Reference-element data shared by all cells of the uniform grid.
#[derive(Debug, Clone)]
struct Quadrature<T> {
    weights: Vec<T>,
    /// `grads[q][a][k]`: physical derivative of local shape `a` along axis `k`.
    grads: Vec<Vec<[T; 3]>>,
}

impl<T: Scalar> Quadrature<T> {
    fn gauss2(dim: usize, h: T) -> Self {
        let off = T::lit(0.5 / 3f64.sqrt());
        let half = T::lit(0.5);
        let pts = [half - off, half + off];
        let nloc = 1 << dim;
        let mut weights = Vec::new();
        let mut grads = Vec::new();
        for q in 0..nloc {
            let xi: Vec<T> = (0..dim).map(|k| pts[(q >> k) & 1]).collect();
            weights.push(h.powi(dim as i32) * half.powi(dim as i32));
            let g = (0..nloc)
                .map(|a| {
                    let mut d = [T::zero(); 3];
                    for (k, dk) in d.iter_mut().enumerate().take(dim) {
                        let mut v = if (a >> k) & 1 == 1 { T::one() } else { -T::one() };
                        for (l, &x) in xi.iter().enumerate() {
                            if l != k {
                                v *= if (a >> l) & 1 == 1 { x } else { T::one() - x };
                            }
                        }
                        *dk = v / h;
                    }
                    d
                })
                .collect();
            grads.push(g);
        }
        Self { weights, grads }
    }
}

/// Discretized model problem; immutable after [`ModelProblem::assemble`].
#[derive(Debug, Clone)]
pub struct ModelProblem<T> {
    config: ModelConfig<T>,
    num_nodes: usize,
    cells: Vec<Vec<usize>>,
    quad: Quadrature<T>,
    pattern: Arc<SparsityPattern>,
    stiffness: CsrMatrix<T>,
    mass: CsrMatrix<T>,
    gram: GramOperator<T>,
    lumped_mass: Vec<T>,
    weights: Vec<T>,
    mask: Vec<bool>,
}

impl<T: Scalar> ModelProblem<T> {
    pub fn assemble(config: ModelConfig<T>) -> Result<Self> {
        let (d, n) = (config.dim, config.nodes_per_axis);
        if !(1..=3).contains(&d) {
            return Err(Error::InvalidParameter(format!("dimension {d} not in 1..=3")));
        }
        if n < 3 {
            return Err(Error::InvalidParameter(format!("need at least 3 nodes per axis, got {n}")));
        }
        if !(config.c > T::zero()) {
            return Err(Error::InvalidParameter("L1 weight c must be positive".into()));
        }
        let num_nodes = n.pow(d as u32);
        let h = T::one() / T::from_usize(n - 1).unwrap();
        let strides: Vec<usize> = (0..d).map(|k| n.pow(k as u32)).collect();
        let multi = |node: usize| -> Vec<usize> { (0..d).map(|k| (node / strides[k]) % n).collect() };

        let ncell = (n - 1).pow(d as u32);
        let cells: Vec<Vec<usize>> = (0..ncell)
            .map(|e| {
                let base: usize = (0..d).map(|k| ((e / (n - 1).pow(k as u32)) % (n - 1)) * strides[k]).sum();
                (0..1usize << d)
                    .map(|a| base + (0..d).filter(|&k| (a >> k) & 1 == 1).map(|k| strides[k]).sum::<usize>())
                    .collect()
            })
            .collect();

        let ndof = COMPONENTS * num_nodes;
        let pattern = Arc::new(SparsityPattern::from_entries(
            ndof,
            cells.iter().flat_map(|cell| {
                cell.iter().flat_map(move |&a| {
                    cell.iter().flat_map(move |&b| {
                        (0..COMPONENTS).flat_map(move |c| (0..COMPONENTS).map(move |e| (3 * a + c, 3 * b + e)))
                    })
                })
            }),
        ));

        let quad = Quadrature::gauss2(d, h);
        let nloc = 1 << d;
        // Scalar element matrices, identical on every cell.
        let mut k_loc = vec![T::zero(); nloc * nloc];
        let mut m_loc = vec![T::zero(); nloc * nloc];
        let off = T::lit(0.5 / 3f64.sqrt());
        let half = T::lit(0.5);
        for (q, &w) in quad.weights.iter().enumerate() {
            let shape = |a: usize| -> T {
                (0..d).fold(T::one(), |acc, k| {
                    let x = if (q >> k) & 1 == 1 { half + off } else { half - off };
                    acc * if (a >> k) & 1 == 1 { x } else { T::one() - x }
                })
            };
            for a in 0..nloc {
                for b in 0..nloc {
                    let ga = &quad.grads[q][a];
                    let gb = &quad.grads[q][b];
                    let dot = (0..d).fold(T::zero(), |s, k| s + ga[k] * gb[k]);
                    k_loc[a * nloc + b] += w * dot;
                    m_loc[a * nloc + b] += w * (shape(a) * shape(b));
                }
            }
        }
        let mut stiffness = CsrMatrix::zeros(pattern.clone());
        let mut mass = CsrMatrix::zeros(pattern.clone());
        for cell in &cells {
            for (la, &a) in cell.iter().enumerate() {
                for (lb, &b) in cell.iter().enumerate() {
                    for c in 0..COMPONENTS {
                        stiffness.add_at(3 * a + c, 3 * b + c, k_loc[la * nloc + lb]);
                        mass.add_at(3 * a + c, 3 * b + c, m_loc[la * nloc + lb]);
                    }
                }
            }
        }

        let mut lumped_mass = vec![T::zero(); num_nodes];
        let mut node_mask = vec![false; num_nodes];
        for (node, m) in lumped_mass.iter_mut().enumerate() {
            let idx = multi(node);
            *m = idx.iter().fold(T::one(), |acc, &i| acc * if i == 0 || i == n - 1 { h * half } else { h });
            node_mask[node] = idx.iter().any(|&i| i == 0 || i == n - 1);
        }
        let mask: Vec<bool> = node_mask.iter().flat_map(|&b| [b; COMPONENTS]).collect();
        let weights: Vec<T> = lumped_mass.iter().flat_map(|&m| [config.c * m; COMPONENTS]).collect();

        let mut gram_matrix = match config.norm {
            NormChoice::H1 => stiffness.add_scaled(&mass, T::one()),
            NormChoice::H1Semi => stiffness.clone(),
        };
        gram_matrix.apply_mask(&mask, T::one());
        let gram = GramOperator::new(gram_matrix)?;

        Ok(Self { config, num_nodes, cells, quad, pattern, stiffness, mass, gram, lumped_mass, weights, mask })
    }

    pub fn config(&self) -> &ModelConfig<T> {
        &self.config
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn lumped_mass(&self) -> &[T] {
        &self.lumped_mass
    }

    /// Vector-valued stiffness matrix before boundary elimination.
    pub fn stiffness(&self) -> &CsrMatrix<T> {
        &self.stiffness
    }

    /// Vector-valued consistent mass matrix before boundary elimination.
    pub fn consistent_mass(&self) -> &CsrMatrix<T> {
        &self.mass
    }

    fn check(&self, u: &PrimalVector<T>) -> Result<()> {
        if u.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: u.len() });
        }
        Ok(())
    }

    /// Jacobian `∇u` (rows: components, columns: axes) at quadrature point `q` of a cell.
    #[inline]
    fn jacobian(&self, cell: &[usize], q: usize, u: &[T]) -> [[T; 3]; 3] {
        let mut g = [[T::zero(); 3]; 3];
        for (la, &a) in cell.iter().enumerate() {
            let dn = &self.quad.grads[q][la];
            for (c, row) in g.iter_mut().enumerate() {
                let ua = u[3 * a + c];
                for k in 0..self.config.dim {
                    row[k] += ua * dn[k];
                }
            }
        }
        g
    }

    fn frobenius(g: &[[T; 3]; 3]) -> T {
        g.iter().flatten().map(|&v| v * v).sum::<T>().sqrt()
    }
}

/// `φ(u) = u1³ u2² u3 / (1 + |u|²)` with gradient and Hessian.
pub(crate) fn rational_term<T: Scalar>(u: [T; 3]) -> (T, [T; 3], [[T; 3]; 3]) {
    let [a, b, c] = u;
    let two = T::lit(2.0);
    let three = T::lit(3.0);
    let six = T::lit(6.0);
    let p = a * a * a * b * b * c;
    let dp = [three * a * a * b * b * c, two * a * a * a * b * c, a * a * a * b * b];
    let ddp = [
        [six * a * b * b * c, six * a * a * b * c, three * a * a * b * b],
        [six * a * a * b * c, two * a * a * a * c, two * a * a * a * b],
        [three * a * a * b * b, two * a * a * a * b, T::zero()],
    ];
    let q = T::one() + a * a + b * b + c * c;
    let dq = [two * a, two * b, two * c];
    let val = p / q;
    let mut grad = [T::zero(); 3];
    let mut hess = [[T::zero(); 3]; 3];
    for j in 0..3 {
        grad[j] = dp[j] / q - p * dq[j] / (q * q);
        for k in 0..3 {
            let ddq = if j == k { two } else { T::zero() };
            hess[j][k] = ddp[j][k] / q - (dp[j] * dq[k] + dp[k] * dq[j] + p * ddq) / (q * q)
                + two * p * dq[j] * dq[k] / (q * q * q);
        }
    }
    (val, grad, hess)
}

impl<T: Scalar> CompositeProblem<T> for ModelProblem<T> {
    fn gram(&self) -> &GramOperator<T> {
        &self.gram
    }

    fn l1_weights(&self) -> &[T] {
        &self.weights
    }

    fn mask(&self) -> &[bool] {
        &self.mask
    }

    fn eval_f(&self, u: &PrimalVector<T>) -> Result<T> {
        self.check(u)?;
        let (alpha, beta, rho) = (self.config.alpha, self.config.beta, self.config.rho);
        let u = u.as_slice();
        let half = T::lit(0.5);
        let mut total = T::zero();
        for (e, cell) in self.cells.iter().enumerate() {
            let mut cell_sum = T::zero();
            for (q, &w) in self.quad.weights.iter().enumerate() {
                let s = Self::frobenius(&self.jacobian(cell, q, u));
                let excess = (s - T::one()).max(T::zero());
                cell_sum += w * (half * s * s + alpha * excess * excess);
            }
            if !cell_sum.is_finite() {
                return Err(Error::NonFinite { element: e });
            }
            total += cell_sum;
        }
        for (i, &m) in self.lumped_mass.iter().enumerate() {
            let ui = [u[3 * i], u[3 * i + 1], u[3 * i + 2]];
            let (phi, _, _) = rational_term(ui);
            let v = m * (beta * phi + rho * (ui[0] + ui[1] + ui[2]));
            if !v.is_finite() {
                return Err(Error::NonFiniteNode { node: i });
            }
            total += v;
        }
        Ok(total)
    }

    fn eval_grad_f(&self, u: &PrimalVector<T>) -> Result<DualFunctional<T>> {
        self.check(u)?;
        let (alpha, beta, rho) = (self.config.alpha, self.config.beta, self.config.rho);
        let d = self.config.dim;
        let us = u.as_slice();
        let two = T::lit(2.0);
        let mut grad = vec![T::zero(); self.dim()];
        for (e, cell) in self.cells.iter().enumerate() {
            for (q, &w) in self.quad.weights.iter().enumerate() {
                let g = self.jacobian(cell, q, us);
                let s = Self::frobenius(&g);
                let factor = if s > T::one() { T::one() + two * alpha * (s - T::one()) / s } else { T::one() };
                for (la, &a) in cell.iter().enumerate() {
                    let dn = &self.quad.grads[q][la];
                    for c in 0..COMPONENTS {
                        let v = (0..d).fold(T::zero(), |acc, k| acc + g[c][k] * dn[k]);
                        grad[3 * a + c] += w * factor * v;
                    }
                }
            }
            if cell
                .iter()
                .any(|&a| !grad[3 * a].is_finite() || !grad[3 * a + 1].is_finite() || !grad[3 * a + 2].is_finite())
            {
                return Err(Error::NonFinite { element: e });
            }
        }
        for (i, &m) in self.lumped_mass.iter().enumerate() {
            let (_, dphi, _) = rational_term([us[3 * i], us[3 * i + 1], us[3 * i + 2]]);
            for c in 0..COMPONENTS {
                grad[3 * i + c] += m * (beta * dphi[c] + rho);
                if !grad[3 * i + c].is_finite() {
                    return Err(Error::NonFiniteNode { node: i });
                }
            }
        }
        for (gj, &masked) in grad.iter_mut().zip(&self.mask) {
            if masked {
                *gj = T::zero();
            }
        }
        Ok(DualFunctional::from_vec(grad))
    }

    fn eval_hessian(&self, u: &PrimalVector<T>) -> Result<BilinearForm<T>> {
        self.check(u)?;
        let (alpha, beta) = (self.config.alpha, self.config.beta);
        let d = self.config.dim;
        let us = u.as_slice();
        let two = T::lit(2.0);
        let mut h = self.stiffness.clone();
        debug_assert!(Arc::ptr_eq(h.pattern(), &self.pattern));
        for (e, cell) in self.cells.iter().enumerate() {
            for (q, &w) in self.quad.weights.iter().enumerate() {
                let g = self.jacobian(cell, q, us);
                let s = Self::frobenius(&g);
                // Newton derivative of the squared max term: zero branch for s <= 1.
                if !(s > T::one()) {
                    continue;
                }
                if !s.is_finite() {
                    return Err(Error::NonFinite { element: e });
                }
                let a1 = two * alpha * (T::one() - T::one() / s);
                let a2 = two * alpha / (s * s * s);
                for (la, &a) in cell.iter().enumerate() {
                    let dna = &self.quad.grads[q][la];
                    for (lb, &b) in cell.iter().enumerate() {
                        let dnb = &self.quad.grads[q][lb];
                        let dot = (0..d).fold(T::zero(), |acc, k| acc + dna[k] * dnb[k]);
                        let mut ga = [T::zero(); 3];
                        let mut gb = [T::zero(); 3];
                        for c in 0..COMPONENTS {
                            ga[c] = (0..d).fold(T::zero(), |acc, k| acc + g[c][k] * dna[k]);
                            gb[c] = (0..d).fold(T::zero(), |acc, k| acc + g[c][k] * dnb[k]);
                        }
                        for c in 0..COMPONENTS {
                            for ec in 0..COMPONENTS {
                                let mut v = a2 * ga[c] * gb[ec];
                                if c == ec {
                                    v += a1 * dot;
                                }
                                h.add_at(3 * a + c, 3 * b + ec, w * v);
                            }
                        }
                    }
                }
            }
        }
        for (i, &m) in self.lumped_mass.iter().enumerate() {
            let (_, _, hphi) = rational_term([us[3 * i], us[3 * i + 1], us[3 * i + 2]]);
            for c in 0..COMPONENTS {
                for ec in 0..COMPONENTS {
                    let v = m * beta * hphi[c][ec];
                    if !v.is_finite() {
                        return Err(Error::NonFiniteNode { node: i });
                    }
                    h.add_at(3 * i + c, 3 * i + ec, v);
                }
            }
        }
        h.apply_mask(&self.mask, T::zero());
        Ok(BilinearForm::new(h))
    }
}
