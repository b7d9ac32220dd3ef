//! Symbolic moment and localizing matrices over truncated moment vectors.
//!
//! A [`MomentVectorLayout`] fixes the flat indexing of a truncated moment
//! sequence (all monomials of a block up to a total degree, graded lex). A
//! [`SymbolicMatrix`] is a symmetric matrix whose entries are linear forms in
//! those flat positions; instantiating it on a numeric moment vector yields
//! the moment matrix `M_r(z)` or a localizing matrix `M_r(theta z)`.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::polyalg::{basis_size, monomial_basis, MultiIndex, Polynomial, VariableBlock};

#[derive(Debug, Error)]
pub enum MomentError {
    #[error("degree overflow: needs moments of degree {needed} but layout holds {available}")]
    DegreeOverflow { needed: u32, available: u32 },
    #[error("moment vector length {got}, layout expects {expected}")]
    LengthMismatch { got: usize, expected: usize },
    #[error("marginal variables are not a sub-block of the layout")]
    NotSubBlock,
}

/// Flat indexing of all monomials of `block` with degree at most
/// `max_total_degree`, in graded lexicographic order. Position 0 is the
/// constant monomial.
#[derive(Debug, Clone)]
pub struct MomentVectorLayout {
    pub block: Arc<VariableBlock>,
    pub max_total_degree: u32,
    pub basis: Vec<MultiIndex>,
    index: HashMap<MultiIndex, usize>,
}

impl MomentVectorLayout {
    pub fn new(block: Arc<VariableBlock>, max_total_degree: u32) -> Self {
        let basis = monomial_basis(block.num_vars(), max_total_degree);
        let index = basis
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, m)| (m, i))
            .collect();
        MomentVectorLayout { block, max_total_degree, basis, index }
    }

    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    pub fn position(&self, mono: &MultiIndex) -> Option<usize> {
        self.index.get(mono).copied()
    }

    /// Flat linear form of `L(p)` for a polynomial over this layout's block.
    pub fn linear_functional(&self, p: &Polynomial) -> Result<LinearForm, MomentError> {
        let mut form = LinearForm::zero();
        for (mono, &c) in &p.terms {
            match self.position(mono) {
                Some(pos) => form.push(pos, c),
                None => {
                    return Err(MomentError::DegreeOverflow {
                        needed: mono.degree(),
                        available: self.max_total_degree,
                    })
                }
            }
        }
        form.normalize();
        Ok(form)
    }

    /// Moments of a weighted sum of Dirac measures with the given support
    /// points and weights.
    pub fn atomic_moments(&self, atoms: &[(f64, Vec<f64>)]) -> Vec<f64> {
        self.basis
            .iter()
            .map(|mono| atoms.iter().map(|(w, pt)| w * mono.eval(pt)).sum())
            .collect()
    }
}

/// Sparse linear form `constant + sum coeff * moment[pos]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearForm {
    pub constant: f64,
    pub terms: Vec<(usize, f64)>,
}

impl LinearForm {
    pub fn zero() -> Self {
        LinearForm { constant: 0.0, terms: Vec::new() }
    }

    pub fn push(&mut self, pos: usize, coeff: f64) {
        self.terms.push((pos, coeff));
    }

    /// Sort by position, merge duplicates, drop near-zero coefficients.
    pub fn normalize(&mut self) {
        self.terms.sort_unstable_by_key(|&(pos, _)| pos);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(self.terms.len());
        for &(pos, c) in &self.terms {
            match merged.last_mut() {
                Some(last) if last.0 == pos => last.1 += c,
                _ => merged.push((pos, c)),
            }
        }
        merged.retain(|&(_, c)| c.abs() > crate::polyalg::COEFF_EPS);
        self.terms = merged;
    }

    pub fn add_scaled(&mut self, other: &LinearForm, factor: f64) {
        self.constant += factor * other.constant;
        for &(pos, c) in &other.terms {
            self.terms.push((pos, factor * c));
        }
        self.normalize();
    }

    pub fn eval(&self, moments: &[f64]) -> f64 {
        self.constant
            + self
                .terms
                .iter()
                .map(|&(pos, c)| c * moments[pos])
                .sum::<f64>()
    }

    /// Remap every referenced position through `map`.
    pub fn remap(&self, map: &[usize]) -> LinearForm {
        LinearForm {
            constant: self.constant,
            terms: self.terms.iter().map(|&(pos, c)| (map[pos], c)).collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.constant == 0.0 && self.terms.is_empty()
    }
}

/// Symmetric matrix of linear forms in moment positions; only the upper
/// triangle is stored, row-major.
#[derive(Debug, Clone)]
pub struct SymbolicMatrix {
    pub side: usize,
    upper: Vec<LinearForm>,
}

impl SymbolicMatrix {
    fn tri_index(&self, row: usize, col: usize) -> usize {
        let (r, c) = if row <= col { (row, col) } else { (col, row) };
        r * self.side - r * (r + 1) / 2 + c
    }

    pub fn entry(&self, row: usize, col: usize) -> &LinearForm {
        &self.upper[self.tri_index(row, col)]
    }

    /// Iterate the stored upper triangle as `(row, col, form)` with
    /// `row <= col`, rows outer.
    pub fn upper_triangle(&self) -> impl Iterator<Item = (usize, usize, &LinearForm)> {
        let side = self.side;
        (0..side)
            .flat_map(move |r| (r..side).map(move |c| (r, c)))
            .zip(self.upper.iter())
            .map(|((r, c), form)| (r, c, form))
    }

    /// Remap all referenced positions (e.g. from a marginal layout into the
    /// full layout).
    pub fn remap(&self, map: &[usize]) -> SymbolicMatrix {
        SymbolicMatrix {
            side: self.side,
            upper: self.upper.iter().map(|f| f.remap(map)).collect(),
        }
    }

    /// Shift all referenced positions by a fixed offset (for concatenated
    /// decision vectors).
    pub fn offset(&self, delta: usize) -> SymbolicMatrix {
        SymbolicMatrix {
            side: self.side,
            upper: self
                .upper
                .iter()
                .map(|f| LinearForm {
                    constant: f.constant,
                    terms: f.terms.iter().map(|&(p, c)| (p + delta, c)).collect(),
                })
                .collect(),
        }
    }
}

/// `M_r(z)`: rows and columns indexed by monomials of degree <= `r`, entry
/// `(gamma, beta) = z_{gamma+beta}`.
pub fn moment_matrix(layout: &MomentVectorLayout, r: u32) -> Result<SymbolicMatrix, MomentError> {
    localizing_matrix(layout, &Polynomial::constant(layout.block.clone(), 1.0), r)
}

/// `M_d(theta z)`: entry `(gamma, beta) = sum_delta theta_delta
/// z_{delta+gamma+beta}`.
pub fn localizing_matrix(
    layout: &MomentVectorLayout,
    theta: &Polynomial,
    d: u32,
) -> Result<SymbolicMatrix, MomentError> {
    debug_assert_eq!(theta.block, layout.block);
    let needed = 2 * d + theta.degree();
    if needed > layout.max_total_degree {
        return Err(MomentError::DegreeOverflow { needed, available: layout.max_total_degree });
    }
    let rows = monomial_basis(layout.block.num_vars(), d);
    let side = rows.len();
    debug_assert_eq!(side, basis_size(layout.block.num_vars(), d));
    let mut upper = Vec::with_capacity(side * (side + 1) / 2);
    for i in 0..side {
        for j in i..side {
            let base = rows[i].add(&rows[j]);
            let mut form = LinearForm::zero();
            for (delta, &c) in &theta.terms {
                let pos = layout
                    .position(&base.add(delta))
                    .expect("degree bound checked above");
                form.push(pos, c);
            }
            form.normalize();
            upper.push(form);
        }
    }
    Ok(SymbolicMatrix { side, upper })
}

/// Variable subset selecting a marginal of a `(t | x | u)` moment layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Marginal {
    Time,
    State,
    Control,
    TimeState,
}

/// Map from positions of the marginal layout (same degree bound, sub-block
/// variables only) to positions of the full layout, padding the remaining
/// exponents with zero.
pub fn marginal_projection(
    full: &MomentVectorLayout,
    target: Marginal,
) -> Result<(MomentVectorLayout, Vec<usize>), MomentError> {
    let block = &full.block;
    let sub: Arc<VariableBlock> = match target {
        Marginal::Time if block.has_time => VariableBlock::time_only(),
        Marginal::State if block.n > 0 => VariableBlock::state(block.n),
        Marginal::Control if block.m > 0 => VariableBlock::control_only(block.m),
        Marginal::TimeState if block.has_time && block.n > 0 => VariableBlock::time_state(block.n),
        _ => return Err(MomentError::NotSubBlock),
    };
    let vars: Vec<usize> = match target {
        Marginal::Time => vec![block.time_index().unwrap()],
        Marginal::State => (0..block.n).map(|i| block.state_index(i)).collect(),
        Marginal::Control => (0..block.m).map(|j| block.control_index(j)).collect(),
        Marginal::TimeState => std::iter::once(block.time_index().unwrap())
            .chain((0..block.n).map(|i| block.state_index(i)))
            .collect(),
    };
    let sub_layout = MomentVectorLayout::new(sub, full.max_total_degree);
    let map = sub_layout
        .basis
        .iter()
        .map(|mono| {
            let mut e = vec![0u32; block.num_vars()];
            for (k, &v) in vars.iter().enumerate() {
                e[v] = mono.0[k];
            }
            full.position(&MultiIndex(e)).expect("same degree bound")
        })
        .collect();
    Ok((sub_layout, map))
}

/// Instantiate a symbolic matrix on a numeric moment vector.
pub fn evaluate_symbolic(
    matrix: &SymbolicMatrix,
    moments: &[f64],
    layout_len: usize,
) -> Result<DMatrix<f64>, MomentError> {
    if moments.len() != layout_len {
        return Err(MomentError::LengthMismatch { got: moments.len(), expected: layout_len });
    }
    let mut out = DMatrix::zeros(matrix.side, matrix.side);
    for (r, c, form) in matrix.upper_triangle() {
        let v = form.eval(moments);
        out[(r, c)] = v;
        out[(c, r)] = v;
    }
    Ok(out)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |a, &b| a.min(b))
}
