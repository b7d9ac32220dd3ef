//! Sparse multivariate polynomial arithmetic over a declared variable block.
//!
//! A [`VariableBlock`] fixes an ordered list of variables (optional time `t`,
//! states `x1..xn`, controls `u1..um`). Polynomials are sparse maps from
//! multi-indices to `f64` coefficients. Monomials are ordered in graded
//! lexicographic order: degree first, then lexicographically with earlier
//! variables ranked higher, so for two variables the order-2 basis reads
//! `1, x1, x2, x1^2, x1*x2, x2^2`. This order is fixed; moment-vector
//! positions depend on it being reproducible across modules and runs.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

/// Coefficients smaller than this in magnitude are dropped after arithmetic.
pub const COEFF_EPS: f64 = 1e-14;

#[derive(Debug, Error)]
pub enum PolyError {
    #[error("parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },
    #[error("unknown variable `{name}` at byte {pos}")]
    UnknownVariable { pos: usize, name: String },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Exponent vector of a monomial, one entry per variable of its block.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MultiIndex(pub Vec<u32>);

impl MultiIndex {
    pub fn zeros(num_vars: usize) -> Self {
        MultiIndex(vec![0; num_vars])
    }

    pub fn unit(num_vars: usize, var: usize) -> Self {
        let mut e = vec![0; num_vars];
        e[var] = 1;
        MultiIndex(e)
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn num_vars(&self) -> usize {
        self.0.len()
    }

    /// Componentwise sum.
    pub fn add(&self, other: &MultiIndex) -> MultiIndex {
        debug_assert_eq!(self.0.len(), other.0.len());
        MultiIndex(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| a + b)
                .collect(),
        )
    }

    /// Evaluate the monomial at a point.
    pub fn eval(&self, point: &[f64]) -> f64 {
        debug_assert_eq!(self.0.len(), point.len());
        self.0
            .iter()
            .zip(point)
            .map(|(&e, &v)| v.powi(e as i32))
            .product()
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for MultiIndex {
    /// Graded lexicographic: lower degree first; within a degree, the
    /// monomial with the lexicographically larger exponent vector comes
    /// first (`x1^2` before `x1*x2` before `x2^2`).
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| other.0.cmp(&self.0))
    }
}

/// All multi-indices over `num_vars` variables with degree at most `max_deg`,
/// in graded lexicographic order. The result has
/// `binomial(num_vars + max_deg, max_deg)` entries and starts with the
/// constant monomial.
pub fn monomial_basis(num_vars: usize, max_deg: u32) -> Vec<MultiIndex> {
    let mut out = Vec::with_capacity(basis_size(num_vars, max_deg));
    let mut current = vec![0u32; num_vars];
    for deg in 0..=max_deg {
        emit_degree(num_vars, deg, 0, deg, &mut current, &mut out);
    }
    out
}

fn emit_degree(
    num_vars: usize,
    _deg: u32,
    var: usize,
    remaining: u32,
    current: &mut Vec<u32>,
    out: &mut Vec<MultiIndex>,
) {
    if num_vars == 0 {
        if remaining == 0 {
            out.push(MultiIndex(vec![]));
        }
        return;
    }
    if var == num_vars - 1 {
        current[var] = remaining;
        out.push(MultiIndex(current.clone()));
        current[var] = 0;
        return;
    }
    for e in (0..=remaining).rev() {
        current[var] = e;
        emit_degree(num_vars, _deg, var + 1, remaining - e, current, out);
        current[var] = 0;
    }
}

/// `binomial(num_vars + max_deg, max_deg)`.
pub fn basis_size(num_vars: usize, max_deg: u32) -> usize {
    let mut size: usize = 1;
    for i in 1..=num_vars {
        size = size * (max_deg as usize + i) / i;
    }
    size
}

/// Ordered variable block `(t | x1..xn | u1..um)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VariableBlock {
    pub has_time: bool,
    pub n: usize,
    pub m: usize,
    pub names: Vec<String>,
}

impl VariableBlock {
    fn build(has_time: bool, n: usize, m: usize) -> Self {
        let mut names = Vec::new();
        if has_time {
            names.push("t".to_string());
        }
        for i in 1..=n {
            names.push(format!("x{i}"));
        }
        for j in 1..=m {
            names.push(format!("u{j}"));
        }
        VariableBlock { has_time, n, m, names }
    }

    pub fn state(n: usize) -> Arc<Self> {
        Arc::new(Self::build(false, n, 0))
    }

    pub fn time_state(n: usize) -> Arc<Self> {
        Arc::new(Self::build(true, n, 0))
    }

    pub fn state_control(n: usize, m: usize) -> Arc<Self> {
        Arc::new(Self::build(false, n, m))
    }

    pub fn time_state_control(n: usize, m: usize) -> Arc<Self> {
        Arc::new(Self::build(true, n, m))
    }

    pub fn time_only() -> Arc<Self> {
        Arc::new(Self::build(true, 0, 0))
    }

    pub fn control_only(m: usize) -> Arc<Self> {
        Arc::new(Self::build(false, 0, m))
    }

    pub fn num_vars(&self) -> usize {
        (self.has_time as usize) + self.n + self.m
    }

    /// Index of the time variable, if present.
    pub fn time_index(&self) -> Option<usize> {
        self.has_time.then_some(0)
    }

    /// Index of state variable `i` (zero-based).
    pub fn state_index(&self, i: usize) -> usize {
        debug_assert!(i < self.n);
        (self.has_time as usize) + i
    }

    /// Index of control variable `j` (zero-based).
    pub fn control_index(&self, j: usize) -> usize {
        debug_assert!(j < self.m);
        (self.has_time as usize) + self.n + j
    }

    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|v| v == name)
    }
}

/// Sparse polynomial with real coefficients over a [`VariableBlock`].
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    pub block: Arc<VariableBlock>,
    pub terms: BTreeMap<MultiIndex, f64>,
}

impl Polynomial {
    pub fn zero(block: Arc<VariableBlock>) -> Self {
        Polynomial { block, terms: BTreeMap::new() }
    }

    pub fn constant(block: Arc<VariableBlock>, c: f64) -> Self {
        let mut p = Self::zero(block);
        if c.abs() > COEFF_EPS {
            let nv = p.block.num_vars();
            p.terms.insert(MultiIndex::zeros(nv), c);
        }
        p
    }

    pub fn variable(block: Arc<VariableBlock>, var: usize) -> Self {
        let nv = block.num_vars();
        let mut p = Self::zero(block);
        p.terms.insert(MultiIndex::unit(nv, var), 1.0);
        p
    }

    pub fn monomial(block: Arc<VariableBlock>, index: MultiIndex, coeff: f64) -> Self {
        let mut p = Self::zero(block);
        if coeff.abs() > COEFF_EPS {
            p.terms.insert(index, coeff);
        }
        p
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Maximum term degree; the zero polynomial has degree 0 by convention.
    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|i| i.degree()).max().unwrap_or(0)
    }

    fn insert(&mut self, index: MultiIndex, coeff: f64) {
        let entry = self.terms.entry(index);
        match entry {
            std::collections::btree_map::Entry::Vacant(v) => {
                if coeff.abs() > COEFF_EPS {
                    v.insert(coeff);
                }
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let c = *o.get() + coeff;
                if c.abs() > COEFF_EPS {
                    *o.get_mut() = c;
                } else {
                    o.remove();
                }
            }
        }
    }

    pub fn add(&self, other: &Polynomial) -> Polynomial {
        debug_assert_eq!(self.block, other.block);
        let mut out = self.clone();
        for (i, &c) in &other.terms {
            out.insert(i.clone(), c);
        }
        out
    }

    pub fn sub(&self, other: &Polynomial) -> Polynomial {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, factor: f64) -> Polynomial {
        let mut out = Polynomial::zero(self.block.clone());
        for (i, &c) in &self.terms {
            let c = c * factor;
            if c.abs() > COEFF_EPS {
                out.terms.insert(i.clone(), c);
            }
        }
        out
    }

    pub fn mul(&self, other: &Polynomial) -> Polynomial {
        debug_assert_eq!(self.block, other.block);
        let mut out = Polynomial::zero(self.block.clone());
        for (i, &a) in &self.terms {
            for (j, &b) in &other.terms {
                out.insert(i.add(j), a * b);
            }
        }
        out
    }

    pub fn pow(&self, e: u32) -> Polynomial {
        let mut out = Polynomial::constant(self.block.clone(), 1.0);
        for _ in 0..e {
            out = out.mul(self);
        }
        out
    }

    pub fn eval(&self, point: &[f64]) -> f64 {
        self.terms.iter().map(|(i, &c)| c * i.eval(point)).sum()
    }

    /// Formal partial derivative with respect to variable `var`.
    pub fn differentiate(&self, var: usize) -> Polynomial {
        let mut out = Polynomial::zero(self.block.clone());
        for (i, &c) in &self.terms {
            let e = i.0[var];
            if e == 0 {
                continue;
            }
            let mut d = i.clone();
            d.0[var] = e - 1;
            out.insert(d, c * e as f64);
        }
        out
    }

    /// Compose with one affine map `v -> a*v + b` per variable.
    pub fn affine_substitute(&self, maps: &[(f64, f64)]) -> Polynomial {
        assert_eq!(maps.len(), self.block.num_vars());
        let mut out = Polynomial::zero(self.block.clone());
        for (i, &c) in &self.terms {
            let mut term = Polynomial::constant(self.block.clone(), c);
            for (var, &(a, b)) in maps.iter().enumerate() {
                if i.0[var] == 0 {
                    continue;
                }
                let mut lin = Polynomial::constant(self.block.clone(), b);
                lin.insert(
                    MultiIndex::unit(self.block.num_vars(), var),
                    a,
                );
                term = term.mul(&lin.pow(i.0[var]));
            }
            out = out.add(&term);
        }
        out
    }

    /// Re-express this polynomial over a larger block, matching variables by
    /// role: time to time, state `i` to state `i`, control `j` to control `j`.
    pub fn embed(&self, target: &Arc<VariableBlock>) -> Polynomial {
        assert!(self.block.n <= target.n && self.block.m <= target.m);
        assert!(!self.block.has_time || target.has_time, "target block lacks time");
        let mut map = Vec::with_capacity(self.block.num_vars());
        if self.block.has_time {
            map.push(target.time_index().unwrap());
        }
        for i in 0..self.block.n {
            map.push(target.state_index(i));
        }
        for j in 0..self.block.m {
            map.push(target.control_index(j));
        }
        let nv = target.num_vars();
        let mut out = Polynomial::zero(target.clone());
        for (i, &c) in &self.terms {
            let mut e = vec![0u32; nv];
            for (from, &to) in map.iter().enumerate() {
                e[to] = i.0[from];
            }
            out.insert(MultiIndex(e), c);
        }
        out
    }

    /// Restrict to a smaller block; fails if the polynomial involves
    /// variables missing from the target (e.g. a control inside a state
    /// polynomial).
    pub fn restrict(&self, target: &Arc<VariableBlock>) -> Result<Polynomial, PolyError> {
        let mut out = Polynomial::zero(target.clone());
        for (i, &c) in &self.terms {
            let mut e = vec![0u32; target.num_vars()];
            if self.block.has_time {
                let et = i.0[self.block.time_index().unwrap()];
                if et > 0 {
                    match target.time_index() {
                        Some(ti) => e[ti] = et,
                        None => {
                            return Err(PolyError::DimensionMismatch(
                                "polynomial depends on t but target block has no time".into(),
                            ))
                        }
                    }
                }
            }
            for k in 0..self.block.n {
                let ek = i.0[self.block.state_index(k)];
                if ek > 0 {
                    if k >= target.n {
                        return Err(PolyError::DimensionMismatch(format!(
                            "polynomial depends on x{} outside target block",
                            k + 1
                        )));
                    }
                    e[target.state_index(k)] = ek;
                }
            }
            for k in 0..self.block.m {
                let ek = i.0[self.block.control_index(k)];
                if ek > 0 {
                    if k >= target.m {
                        return Err(PolyError::DimensionMismatch(format!(
                            "polynomial depends on u{} outside target block",
                            k + 1
                        )));
                    }
                    e[target.control_index(k)] = ek;
                }
            }
            out.insert(MultiIndex(e), c);
        }
        Ok(out)
    }

    /// True if no term involves the given variable.
    pub fn independent_of(&self, var: usize) -> bool {
        self.terms.keys().all(|i| i.0[var] == 0)
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (i, &c) in &self.terms {
            let mag = c.abs();
            if first {
                if c < 0.0 {
                    write!(f, "-")?;
                }
                first = false;
            } else if c < 0.0 {
                write!(f, " - ")?;
            } else {
                write!(f, " + ")?;
            }
            let is_const = i.degree() == 0;
            if is_const || (mag - 1.0).abs() > COEFF_EPS {
                write!(f, "{mag}")?;
                if !is_const {
                    write!(f, "*")?;
                }
            }
            let mut sep = false;
            for (var, &e) in i.0.iter().enumerate() {
                if e == 0 {
                    continue;
                }
                if sep {
                    write!(f, "*")?;
                }
                sep = true;
                write!(f, "{}", self.block.names[var])?;
                if e > 1 {
                    write!(f, "^{e}")?;
                }
            }
        }
        Ok(())
    }
}

/// The generator `A` of the controlled flow:
/// `A phi = d phi/dt + sum_k f_k * d phi/dx_k`.
///
/// `phi` must not involve controls; `f` must have one component per state of
/// the full block. The result lives in the block of `f`.
pub fn apply_generator(phi: &Polynomial, f: &[Polynomial]) -> Result<Polynomial, PolyError> {
    if f.is_empty() {
        return Err(PolyError::DimensionMismatch("empty dynamics vector".into()));
    }
    let full = f[0].block.clone();
    if f.len() != full.n {
        return Err(PolyError::DimensionMismatch(format!(
            "dynamics has {} components for {} states",
            f.len(),
            full.n
        )));
    }
    if phi.block.m != 0 {
        return Err(PolyError::DimensionMismatch(
            "test function must not involve controls".into(),
        ));
    }
    let phi_full = phi.embed(&full);
    let mut out = Polynomial::zero(full.clone());
    if let Some(ti) = full.time_index() {
        out = out.add(&phi_full.differentiate(ti));
    }
    for (k, fk) in f.iter().enumerate() {
        debug_assert_eq!(fk.block, full);
        out = out.add(&fk.mul(&phi_full.differentiate(full.state_index(k))));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Parser: signed decimal coefficients, `+ - * ^`, parentheses, implicit
// multiplication between adjacent factors ("2x1", "t(1-t)").
// ---------------------------------------------------------------------------

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    block: Arc<VariableBlock>,
}

pub fn parse_poly(text: &str, block: &Arc<VariableBlock>) -> Result<Polynomial, PolyError> {
    let mut p = Parser { src: text.as_bytes(), pos: 0, block: block.clone() };
    let poly = p.expr()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(PolyError::Parse {
            pos: p.pos,
            msg: format!("unexpected `{}`", p.src[p.pos] as char),
        });
    }
    Ok(poly)
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<Polynomial, PolyError> {
        let mut acc = match self.peek() {
            Some(b'-') => {
                self.pos += 1;
                self.term()?.scale(-1.0)
            }
            Some(b'+') => {
                self.pos += 1;
                self.term()?
            }
            _ => self.term()?,
        };
        while let Some(c) = self.peek() {
            match c {
                b'+' => {
                    self.pos += 1;
                    acc = acc.add(&self.term()?);
                }
                b'-' => {
                    self.pos += 1;
                    acc = acc.sub(&self.term()?);
                }
                _ => break,
            }
        }
        Ok(acc)
    }

    fn term(&mut self) -> Result<Polynomial, PolyError> {
        let mut acc = self.factor()?;
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    acc = acc.mul(&self.factor()?);
                }
                // implicit multiplication
                Some(c) if c == b'(' || c.is_ascii_alphabetic() || c.is_ascii_digit() || c == b'.' => {
                    acc = acc.mul(&self.factor()?);
                }
                _ => break,
            }
        }
        Ok(acc)
    }

    fn factor(&mut self) -> Result<Polynomial, PolyError> {
        let base = self.primary()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let at = self.pos;
            match self.peek() {
                Some(b'-') => {
                    return Err(PolyError::Parse { pos: at, msg: "negative exponent".into() })
                }
                Some(c) if c.is_ascii_digit() => {}
                _ => return Err(PolyError::Parse { pos: at, msg: "expected exponent".into() }),
            }
            let start = self.pos;
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            let e: u32 = std::str::from_utf8(&self.src[start..self.pos])
                .unwrap()
                .parse()
                .map_err(|_| PolyError::Parse { pos: start, msg: "exponent overflow".into() })?;
            Ok(base.pow(e))
        } else {
            Ok(base)
        }
    }

    fn primary(&mut self) -> Result<Polynomial, PolyError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(PolyError::Parse { pos: self.pos, msg: "expected `)`".into() });
                }
                self.pos += 1;
                Ok(inner)
            }
            Some(b'-') => {
                self.pos += 1;
                Ok(self.factor()?.scale(-1.0))
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => {
                let start = self.pos;
                while self.pos < self.src.len()
                    && (self.src[self.pos].is_ascii_digit()
                        || self.src[self.pos] == b'.'
                        || ((self.src[self.pos] == b'e' || self.src[self.pos] == b'E')
                            && self.pos + 1 < self.src.len()
                            && (self.src[self.pos + 1].is_ascii_digit()
                                || self.src[self.pos + 1] == b'-'
                                || self.src[self.pos + 1] == b'+'))
                        || ((self.src[self.pos] == b'-' || self.src[self.pos] == b'+')
                            && self.pos > start
                            && (self.src[self.pos - 1] == b'e' || self.src[self.pos - 1] == b'E')))
                {
                    self.pos += 1;
                }
                let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                let v: f64 = text
                    .parse()
                    .map_err(|_| PolyError::Parse { pos: start, msg: format!("bad number `{text}`") })?;
                Ok(Polynomial::constant(self.block.clone(), v))
            }
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self.pos < self.src.len()
                    && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
                {
                    self.pos += 1;
                }
                let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                match self.block.var_index(name) {
                    Some(idx) => Ok(Polynomial::variable(self.block.clone(), idx)),
                    None => Err(PolyError::UnknownVariable { pos: start, name: name.to_string() }),
                }
            }
            Some(c) => Err(PolyError::Parse {
                pos: self.pos,
                msg: format!("unexpected `{}`", c as char),
            }),
            None => Err(PolyError::Parse { pos: self.pos, msg: "unexpected end of input".into() }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn b2() -> Arc<VariableBlock> {
        VariableBlock::state(2)
    }

    #[test]
    fn parse_examples() {
        let p = parse_poly("x1^2 + 2*x2", &b2()).unwrap();
        assert_eq!(p.terms.len(), 2);
        assert_eq!(p.terms[&MultiIndex(vec![2, 0])], 1.0);
        assert_eq!(p.terms[&MultiIndex(vec![0, 1])], 2.0);

        let z = parse_poly("0", &b2()).unwrap();
        assert!(z.is_zero());
        assert_eq!(z.degree(), 0);

        let bt = VariableBlock::time_only();
        let p = parse_poly("t*(1-t)", &bt).unwrap();
        assert_eq!(p.terms[&MultiIndex(vec![1])], 1.0);
        assert_eq!(p.terms[&MultiIndex(vec![2])], -1.0);
    }

    #[test]
    fn parse_implicit_mul_and_errors() {
        let p = parse_poly("2x1 - 3.5x2^2", &b2()).unwrap();
        assert_eq!(p.terms[&MultiIndex(vec![1, 0])], 2.0);
        assert_eq!(p.terms[&MultiIndex(vec![0, 2])], -3.5);

        assert!(matches!(
            parse_poly("x1 + y", &b2()),
            Err(PolyError::UnknownVariable { .. })
        ));
        assert!(matches!(parse_poly("x1^-2", &b2()), Err(PolyError::Parse { .. })));
        assert!(matches!(parse_poly("x1 + ", &b2()), Err(PolyError::Parse { .. })));
    }

    #[test]
    fn basis_order_and_sizes() {
        let basis = monomial_basis(2, 2);
        let expect: Vec<MultiIndex> = [
            vec![0, 0],
            vec![1, 0],
            vec![0, 1],
            vec![2, 0],
            vec![1, 1],
            vec![0, 2],
        ]
        .into_iter()
        .map(MultiIndex)
        .collect();
        assert_eq!(basis, expect);
        assert_eq!(monomial_basis(1, 3).len(), 4);
        assert_eq!(monomial_basis(0, 5).len(), 1);
        assert_eq!(basis_size(3, 4), 35);
        assert_eq!(basis_size(5, 8), 1287);
    }

    #[test]
    fn basis_round_trip() {
        let basis = monomial_basis(3, 4);
        assert_eq!(basis.len(), basis_size(3, 4));
        for (i, mono) in basis.iter().enumerate() {
            let pos = basis.iter().position(|m| m == mono).unwrap();
            assert_eq!(pos, i);
        }
        // basis is sorted under the declared order
        for w in basis.windows(2) {
            assert!(w[0] < w[1]);
        }
    }

    #[test]
    fn differentiate_examples() {
        let p = parse_poly("x1^2", &b2()).unwrap();
        assert_eq!(format!("{}", p.differentiate(0)), "2*x1");

        let btx = VariableBlock::time_state(2);
        let p = parse_poly("x1", &btx).unwrap();
        assert!(p.differentiate(0).is_zero());
        let p = parse_poly("t*x2^3", &btx).unwrap();
        assert_eq!(format!("{}", p.differentiate(2)), "3*t*x2^2");
    }

    #[test]
    fn affine_substitute_examples() {
        let p = parse_poly("x1^2", &b2()).unwrap();
        let q = p.affine_substitute(&[(2.0, 1.0), (1.0, 0.0)]);
        assert_eq!(format!("{q}"), "1 + 4*x1 + 4*x1^2");

        let p = parse_poly("x1^2*x2 - 3*x1 + 2", &b2()).unwrap();
        let same = p.affine_substitute(&[(1.0, 0.0), (1.0, 0.0)]);
        assert_eq!(p, same);

        let p = parse_poly("x1*x2", &b2()).unwrap();
        let q = p.affine_substitute(&[(-1.0, 0.0), (-1.0, 0.0)]);
        assert_eq!(p, q);
    }

    #[test]
    fn generator_examples() {
        // double integrator: f1 = x2, f2 = u
        let full = VariableBlock::time_state_control(2, 1);
        let f = vec![
            parse_poly("x2", &full).unwrap(),
            parse_poly("u1", &full).unwrap(),
        ];
        let phi_block = VariableBlock::time_state(2);

        let one = parse_poly("1", &phi_block).unwrap();
        assert!(apply_generator(&one, &f).unwrap().is_zero());

        let t = parse_poly("t", &phi_block).unwrap();
        assert_eq!(format!("{}", apply_generator(&t, &f).unwrap()), "1");

        let x1 = parse_poly("x1", &phi_block).unwrap();
        assert_eq!(format!("{}", apply_generator(&x1, &f).unwrap()), "x2");
    }

    #[test]
    fn generator_dimension_mismatch() {
        let full = VariableBlock::time_state_control(2, 1);
        let f = vec![parse_poly("x2", &full).unwrap()];
        let phi = parse_poly("x1", &VariableBlock::time_state(2)).unwrap();
        assert!(apply_generator(&phi, &f).is_err());
    }

    #[test]
    fn generator_linearity() {
        let full = VariableBlock::time_state_control(2, 1);
        let f = vec![
            parse_poly("x2 - t*x1", &full).unwrap(),
            parse_poly("u1 + x1*x2", &full).unwrap(),
        ];
        let pb = VariableBlock::time_state(2);
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..20 {
            let basis = monomial_basis(3, 3);
            let rand_poly = |rng: &mut StdRng| {
                let mut p = Polynomial::zero(pb.clone());
                for mono in &basis {
                    if rng.gen_bool(0.4) {
                        p.insert(mono.clone(), rng.gen_range(-2.0..2.0));
                    }
                }
                p
            };
            let phi = rand_poly(&mut rng);
            let psi = rand_poly(&mut rng);
            let (a, b) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let lhs = apply_generator(&phi.scale(a).add(&psi.scale(b)), &f).unwrap();
            let rhs = apply_generator(&phi, &f)
                .unwrap()
                .scale(a)
                .add(&apply_generator(&psi, &f).unwrap().scale(b));
            let diff = lhs.sub(&rhs);
            for &c in diff.terms.values() {
                assert!(c.abs() < 1e-9);
            }
        }
    }

    #[test]
    fn generator_matches_finite_difference_along_flow() {
        // A phi at (t,x,u) equals d/dt phi(t, x(t)) along xdot = f.
        let full = VariableBlock::time_state_control(2, 1);
        let f = vec![
            parse_poly("x2 + 0.3*t", &full).unwrap(),
            parse_poly("u1 - 0.5*x1", &full).unwrap(),
        ];
        let pb = VariableBlock::time_state(2);
        let phi = parse_poly("x1^2*x2 + t*x1 - 2*x2", &pb).unwrap();
        let a_phi = apply_generator(&phi, &f).unwrap();
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..50 {
            let pt = [
                rng.gen_range(0.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ];
            let (t, x1, x2) = (pt[0], pt[1], pt[2]);
            let f1 = f[0].eval(&pt);
            let f2 = f[1].eval(&pt);
            let h = 1e-6;
            let fwd = phi.eval(&[t + h, x1 + h * f1, x2 + h * f2]);
            let bwd = phi.eval(&[t - h, x1 - h * f1, x2 - h * f2]);
            let fd = (fwd - bwd) / (2.0 * h);
            let exact = a_phi.eval(&pt);
            assert_relative_eq!(fd, exact, max_relative = 1e-6, epsilon = 1e-6);
        }
    }

    proptest! {
        #[test]
        fn parse_print_round_trip(coeffs in proptest::collection::vec(-100.0f64..100.0, 1..6)) {
            let block = VariableBlock::state(2);
            let basis = monomial_basis(2, 3);
            let mut p = Polynomial::zero(block.clone());
            for (k, c) in coeffs.iter().enumerate() {
                p.insert(basis[k % basis.len()].clone(), *c);
            }
            let text = format!("{p}");
            let q = parse_poly(&text, &block).unwrap();
            prop_assert_eq!(p.terms.len(), q.terms.len());
            for (i, c) in &p.terms {
                let d = q.terms.get(i).copied().unwrap_or(0.0);
                prop_assert!((c - d).abs() <= 1e-9 * (1.0 + c.abs()));
            }
            // and printing again is stable
            prop_assert_eq!(text, format!("{q}"));
        }
    }
}
