//! Expression graphs over model variables and their compiled polynomial
//! form, which provides exact gradients and Hessians.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use crate::scalar::Scalar;

/// Highest total degree a compiled polynomial may have.
pub const MAX_DEGREE: usize = 3;

#[derive(Debug)]
enum Node<T> {
    Const(T),
    Var(usize),
    Sum(Vec<Expr<T>>),
    Neg(Expr<T>),
    Mul(Expr<T>, Expr<T>),
    Square(Expr<T>),
    /// Determinant of the Hermitian 3×3 matrix with diagonal `a, b, c` and
    /// upper entries `x = m12`, `y = m13`, `z = m23`; arguments are
    /// `[a, b, c, xr, xi, yr, yi, zr, zi]`.
    Det3(Box<[Expr<T>; 9]>),
}

/// Shared handle to a node of an expression DAG. Cloning is cheap.
#[derive(Debug)]
pub struct Expr<T>(Arc<Node<T>>);

impl<T> Clone for Expr<T> {
    fn clone(&self) -> Self {
        Expr(Arc::clone(&self.0))
    }
}

impl<T: Scalar> Expr<T> {
    pub fn constant(v: T) -> Self {
        Expr(Arc::new(Node::Const(v)))
    }

    pub fn var(index: usize) -> Self {
        Expr(Arc::new(Node::Var(index)))
    }

    pub fn sum(items: Vec<Expr<T>>) -> Self {
        Expr(Arc::new(Node::Sum(items)))
    }

    pub fn square(self) -> Self {
        Expr(Arc::new(Node::Square(self)))
    }

    pub fn det3(args: [Expr<T>; 9]) -> Self {
        Expr(Arc::new(Node::Det3(Box::new(args))))
    }

    /// `coef · var`
    pub fn term(coef: T, index: usize) -> Self {
        Expr::constant(coef) * Expr::var(index)
    }

    /// `Σ coef_k · var_k + constant`
    pub fn linear(terms: &[(T, usize)], constant: T) -> Self {
        let mut items: Vec<Expr<T>> = terms
            .iter()
            .map(|(c, v)| Expr::term(c.clone(), *v))
            .collect();
        if !constant.is_zero() {
            items.push(Expr::constant(constant));
        }
        Expr::sum(items)
    }

    /// Direct evaluation of the graph, independent of compilation.
    pub fn eval(&self, x: &[T]) -> T {
        match &*self.0 {
            Node::Const(c) => c.clone(),
            Node::Var(i) => x[*i].clone(),
            Node::Sum(items) => items.iter().fold(T::zero(), |acc, e| acc + e.eval(x)),
            Node::Neg(e) => -e.eval(x),
            Node::Mul(a, b) => a.eval(x) * b.eval(x),
            Node::Square(e) => {
                let v = e.eval(x);
                v.clone() * v
            }
            Node::Det3(args) => {
                let v: Vec<T> = args.iter().map(|e| e.eval(x)).collect();
                det3_value(&v)
            }
        }
    }

    /// Upper bound on the polynomial degree.
    pub fn degree(&self) -> usize {
        match &*self.0 {
            Node::Const(_) => 0,
            Node::Var(_) => 1,
            Node::Sum(items) => items.iter().map(Expr::degree).max().unwrap_or(0),
            Node::Neg(e) => e.degree(),
            Node::Mul(a, b) => a.degree() + b.degree(),
            Node::Square(e) => 2 * e.degree(),
            Node::Det3(args) => 3 * args.iter().map(Expr::degree).max().unwrap_or(0),
        }
    }

    /// Expands the graph into a canonical sparse polynomial.
    pub fn compile(&self) -> Result<Poly<T>, DegreeError> {
        let map = self.expand()?;
        Ok(Poly::from_map(map))
    }

    fn expand(&self) -> Result<BTreeMap<Monomial, T>, DegreeError> {
        Ok(match &*self.0 {
            Node::Const(c) => BTreeMap::from([(Monomial::ONE, c.clone())]),
            Node::Var(i) => BTreeMap::from([(Monomial::var(*i), T::one())]),
            Node::Sum(items) => {
                let mut acc = BTreeMap::new();
                for e in items {
                    add_into(&mut acc, e.expand()?, T::one());
                }
                acc
            }
            Node::Neg(e) => {
                let mut acc = BTreeMap::new();
                add_into(&mut acc, e.expand()?, -T::one());
                acc
            }
            Node::Mul(a, b) => multiply(&a.expand()?, &b.expand()?)?,
            Node::Square(e) => {
                let m = e.expand()?;
                multiply(&m, &m)?
            }
            Node::Det3(args) => {
                let parts: Vec<BTreeMap<Monomial, T>> =
                    args.iter().map(Expr::expand).collect::<Result<_, _>>()?;
                let mut acc = BTreeMap::new();
                for (coef, slots) in det3_template::<T>() {
                    let mut prod = BTreeMap::from([(Monomial::ONE, coef)]);
                    for s in slots {
                        prod = multiply(&prod, &parts[s])?;
                    }
                    add_into(&mut acc, prod, T::one());
                }
                acc
            }
        })
    }
}

impl<T: Scalar> Add for Expr<T> {
    type Output = Expr<T>;
    fn add(self, rhs: Self) -> Self {
        Expr::sum(vec![self, rhs])
    }
}

impl<T: Scalar> Sub for Expr<T> {
    type Output = Expr<T>;
    fn sub(self, rhs: Self) -> Self {
        Expr::sum(vec![self, -rhs])
    }
}

impl<T: Scalar> Mul for Expr<T> {
    type Output = Expr<T>;
    fn mul(self, rhs: Self) -> Self {
        Expr(Arc::new(Node::Mul(self, rhs)))
    }
}

impl<T: Scalar> Neg for Expr<T> {
    type Output = Expr<T>;
    fn neg(self) -> Self {
        Expr(Arc::new(Node::Neg(self)))
    }
}

/// The canonical Hermitian 3×3 determinant as `(coef, slot list)` pairs over
/// `[a, b, c, xr, xi, yr, yi, zr, zi]`.
pub fn det3_template<T: Scalar>() -> Vec<(T, Vec<usize>)> {
    const A: usize = 0;
    const B: usize = 1;
    const C: usize = 2;
    const XR: usize = 3;
    const XI: usize = 4;
    const YR: usize = 5;
    const YI: usize = 6;
    const ZR: usize = 7;
    const ZI: usize = 8;
    let one = T::one;
    let two = || T::one() + T::one();
    vec![
        (one(), vec![A, B, C]),
        (-one(), vec![A, ZR, ZR]),
        (-one(), vec![A, ZI, ZI]),
        (-one(), vec![B, YR, YR]),
        (-one(), vec![B, YI, YI]),
        (-one(), vec![C, XR, XR]),
        (-one(), vec![C, XI, XI]),
        (two(), vec![YR, XR, ZR]),
        (-two(), vec![YR, XI, ZI]),
        (two(), vec![YI, XR, ZI]),
        (two(), vec![YI, XI, ZR]),
    ]
}

/// Evaluates the determinant template at slot values `v`.
pub fn det3_value<T: Scalar>(v: &[T]) -> T {
    det3_template::<T>()
        .into_iter()
        .fold(T::zero(), |acc, (c, slots)| {
            acc + slots.iter().fold(c, |p, &s| p * v[s].clone())
        })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DegreeError(pub usize);

impl fmt::Display for DegreeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "expression has degree {} > {MAX_DEGREE}", self.0)
    }
}

impl std::error::Error for DegreeError {}

/// Sorted multiset of at most three variable indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Monomial {
    len: u8,
    vars: [u32; MAX_DEGREE],
}

impl Monomial {
    pub const ONE: Monomial = Monomial {
        len: 0,
        vars: [0; MAX_DEGREE],
    };

    pub fn var(i: usize) -> Self {
        Monomial {
            len: 1,
            vars: [i as u32, 0, 0],
        }
    }

    pub fn from_vars(vs: &[usize]) -> Result<Self, DegreeError> {
        if vs.len() > MAX_DEGREE {
            return Err(DegreeError(vs.len()));
        }
        let mut vars = [0u32; MAX_DEGREE];
        for (k, &v) in vs.iter().enumerate() {
            vars[k] = v as u32;
        }
        vars[..vs.len()].sort_unstable();
        Ok(Monomial {
            len: vs.len() as u8,
            vars,
        })
    }

    pub fn vars(&self) -> impl Iterator<Item = usize> + '_ {
        self.vars[..self.len as usize].iter().map(|&v| v as usize)
    }

    pub fn degree(&self) -> usize {
        self.len as usize
    }

    fn times(&self, other: &Monomial) -> Result<Monomial, DegreeError> {
        let d = self.degree() + other.degree();
        if d > MAX_DEGREE {
            return Err(DegreeError(d));
        }
        let vs: Vec<usize> = self.vars().chain(other.vars()).collect();
        Monomial::from_vars(&vs)
    }
}

fn add_into<T: Scalar>(acc: &mut BTreeMap<Monomial, T>, src: BTreeMap<Monomial, T>, scale: T) {
    for (m, c) in src {
        let c = c * scale.clone();
        match acc.get_mut(&m) {
            Some(v) => *v = v.clone() + c,
            None => {
                acc.insert(m, c);
            }
        }
    }
}

fn multiply<T: Scalar>(
    a: &BTreeMap<Monomial, T>,
    b: &BTreeMap<Monomial, T>,
) -> Result<BTreeMap<Monomial, T>, DegreeError> {
    let mut out: BTreeMap<Monomial, T> = BTreeMap::new();
    for (ma, ca) in a {
        if ca.is_zero() {
            continue;
        }
        for (mb, cb) in b {
            if cb.is_zero() {
                continue;
            }
            let m = ma.times(mb)?;
            let c = ca.clone() * cb.clone();
            match out.get_mut(&m) {
                Some(v) => *v = v.clone() + c,
                None => {
                    out.insert(m, c);
                }
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Term<T> {
    pub coef: T,
    pub mono: Monomial,
}

/// Sparse polynomial of degree at most three in canonical form: monomials
/// sorted, merged, and nonzero.
#[derive(Clone, Debug, PartialEq)]
pub struct Poly<T> {
    pub terms: Vec<Term<T>>,
}

impl<T: Scalar> Poly<T> {
    fn from_map(map: BTreeMap<Monomial, T>) -> Self {
        Poly {
            terms: map
                .into_iter()
                .filter(|(_, c)| !c.is_zero())
                .map(|(mono, coef)| Term { coef, mono })
                .collect(),
        }
    }

    pub fn zero() -> Self {
        Poly { terms: Vec::new() }
    }

    pub fn from_terms(terms: Vec<(T, Vec<usize>)>) -> Result<Self, DegreeError> {
        let mut map = BTreeMap::new();
        for (c, vs) in terms {
            add_into(
                &mut map,
                BTreeMap::from([(Monomial::from_vars(&vs)?, c)]),
                T::one(),
            );
        }
        Ok(Poly::from_map(map))
    }

    pub fn degree(&self) -> usize {
        self.terms
            .iter()
            .map(|t| t.mono.degree())
            .max()
            .unwrap_or(0)
    }

    pub fn constant(&self) -> T {
        match self.terms.first() {
            Some(t) if t.mono.degree() == 0 => t.coef.clone(),
            _ => T::zero(),
        }
    }

    pub fn is_linear(&self) -> bool {
        self.degree() <= 1
    }

    /// Sorted, distinct variables appearing in the polynomial.
    pub fn support(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.terms.iter().flat_map(|t| t.mono.vars()).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn scale(&mut self, s: &T) {
        for t in &mut self.terms {
            t.coef = t.coef.clone() * s.clone();
        }
    }

    pub fn eval(&self, x: &[T]) -> T {
        self.terms.iter().fold(T::zero(), |acc, t| {
            acc + t.mono.vars().fold(t.coef.clone(), |p, v| p * x[v].clone())
        })
    }

    /// Calls `f(var, ∂p/∂var)` once per term contribution; callers sum
    /// repeated indices.
    pub fn for_each_grad(&self, x: &[T], mut f: impl FnMut(usize, T)) {
        for t in &self.terms {
            let vs: Vec<usize> = t.mono.vars().collect();
            for k in 0..vs.len() {
                let mut g = t.coef.clone();
                for (l, &v) in vs.iter().enumerate() {
                    if l != k {
                        g = g * x[v].clone();
                    }
                }
                f(vs[k], g);
            }
        }
    }

    pub fn gradient(&self, x: &[T]) -> BTreeMap<usize, T> {
        let mut out: BTreeMap<usize, T> = BTreeMap::new();
        self.for_each_grad(x, |v, g| {
            let e = out.entry(v).or_insert_with(T::zero);
            *e = e.clone() + g;
        });
        out
    }

    /// Calls `f(row, col, value)` with `row >= col` for each contribution to
    /// the lower triangle of the Hessian.
    pub fn for_each_hess(&self, x: &[T], mut f: impl FnMut(usize, usize, T)) {
        for t in &self.terms {
            let vs: Vec<usize> = t.mono.vars().collect();
            for a in 0..vs.len() {
                for b in a + 1..vs.len() {
                    let mut val = t.coef.clone();
                    for (l, &v) in vs.iter().enumerate() {
                        if l != a && l != b {
                            val = val * x[v].clone();
                        }
                    }
                    let (i, j) = (vs[a], vs[b]);
                    if i == j {
                        f(i, i, val.clone() + val);
                    } else {
                        f(i.max(j), i.min(j), val);
                    }
                }
            }
        }
    }

    pub fn hessian(&self, x: &[T]) -> BTreeMap<(usize, usize), T> {
        let mut out: BTreeMap<(usize, usize), T> = BTreeMap::new();
        self.for_each_hess(x, |i, j, v| {
            let e = out.entry((i, j)).or_insert_with(T::zero);
            *e = e.clone() + v;
        });
        out
    }

    /// Lower-triangle positions that can be nonzero.
    pub fn hess_pattern(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for t in &self.terms {
            let vs: Vec<usize> = t.mono.vars().collect();
            for a in 0..vs.len() {
                for b in a + 1..vs.len() {
                    out.push((vs[a].max(vs[b]), vs[a].min(vs[b])));
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Re-expresses the coefficients in another scalar type.
    pub fn map_scalar<U: Scalar>(&self) -> Poly<U> {
        Poly {
            terms: self
                .terms
                .iter()
                .map(|t| Term {
                    coef: U::from_f64(t.coef.to_f64()),
                    mono: t.mono,
                })
                .collect(),
        }
    }
}

impl<T: Scalar + fmt::Display> fmt::Display for Poly<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (k, t) in self.terms.iter().enumerate() {
            if k > 0 {
                write!(f, " ")?;
            }
            write!(f, "{:+}", t.coef)?;
            for v in t.mono.vars() {
                write!(f, "*x{v}")?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::ratio;
    use num_rational::BigRational;

    fn x(i: usize) -> Expr<f64> {
        Expr::var(i)
    }

    #[test]
    fn compile_merges_like_terms() {
        let e = x(0) * x(1) + x(1) * x(0) - Expr::constant(2.0) * x(0) * x(1) + x(2);
        let p = e.compile().unwrap();
        assert_eq!(p.terms.len(), 1);
        assert_eq!(p.support(), vec![2]);
    }

    #[test]
    fn degree_above_three_is_rejected() {
        let e = (x(0) * x(1)).square();
        assert_eq!(e.compile().unwrap_err(), DegreeError(4));
    }

    #[test]
    fn det3_of_identity_and_rank_one() {
        let v = [1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        assert_eq!(det3_value(&v), 1.0);
        let ones = [1.0, 1.0, 1.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0];
        assert_eq!(det3_value(&ones), 0.0);
    }

    #[test]
    fn det3_node_compiles_to_template() {
        let args: [Expr<f64>; 9] = std::array::from_fn(x);
        let p = Expr::det3(args).compile().unwrap();
        assert_eq!(p.terms.len(), 11);
        assert_eq!(p.degree(), 3);
    }

    #[test]
    fn hessian_rule_on_cubic() {
        // p = 3 a² b  →  ∂²/∂a² = 6b, ∂²/∂a∂b = 6a
        let p = Poly::from_terms(vec![(3.0, vec![0, 0, 1])]).unwrap();
        let h = p.hessian(&[2.0, 5.0]);
        assert_eq!(h[&(0, 0)], 30.0);
        assert_eq!(h[&(1, 0)], 12.0);
        assert!(!h.contains_key(&(1, 1)));
        let c = Poly::from_terms(vec![(1.0, vec![0, 0, 0])]).unwrap();
        assert_eq!(c.hessian(&[2.0])[&(0, 0)], 12.0);
    }

    #[test]
    fn gradient_matches_hand_derivative() {
        let p = (x(0).square() + x(0) * x(1) * x(2)).compile().unwrap();
        let g = p.gradient(&[1.0, 2.0, 3.0]);
        assert_eq!(g[&0], 2.0 + 6.0);
        assert_eq!(g[&1], 3.0);
        assert_eq!(g[&2], 2.0);
    }

    #[test]
    fn exact_rational_evaluation() {
        let e: Expr<BigRational> = Expr::var(0) * Expr::var(1) - Expr::constant(ratio(1, 3));
        let p = e.compile().unwrap();
        let v = p.eval(&[ratio(1, 2), ratio(2, 3)]);
        assert_eq!(v, BigRational::from_integer(0.into()));
        assert_eq!(e.eval(&[ratio(1, 2), ratio(2, 3)]), v);
    }
}
