//! Truncated multivariate Taylor arithmetic ("jets") up to total order four.
//!
//! A [`Jet`] stores the Taylor coefficients `∂^α f(p) / α!` of a scalar
//! function of the chart variables around a base point, for every
//! multi-index with `|α| ≤ order`. Ring operations and the elementary
//! functions propagate these coefficients exactly, so the partial
//! derivatives of any expression built from them are available to
//! floating-point precision. Differentiating a jet consumes one order.
//!
//! Monomials are laid out by increasing total degree, so a jet of order
//! `k` is simply the prefix of the full order-4 coefficient vector.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};
use std::sync::OnceLock;


use thiserror::Error;

/// Highest total derivative order carried by a jet.
pub const MAX_ORDER: usize = 4;

/// Largest supported number of chart variables.
pub const MAX_VARS: usize = 12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum JetError {
    #[error("derivative order {0} exceeds the supported maximum of {MAX_ORDER}")]
    OrderOverflow(usize),
    #[error("jet order exhausted: no derivative information left")]
    OrderExhausted,
    #[error("domain error: {0}")]
    Domain(String),
    #[error("unsupported number of chart variables: {0}")]
    Vars(usize),
    #[error("finite-difference step {step} is too small for derivative order {order}")]
    StepTooSmall { step: f64, order: usize },
    #[error("expected {expected} chart coordinates, got {got}")]
    Arity { expected: usize, got: usize },
}

/// Exponent vector of a monomial in the chart variables.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MultiIndex(Vec<u8>);

impl MultiIndex {
    pub fn new(exponents: Vec<u8>) -> Result<Self, JetError> {
        let idx = MultiIndex(exponents);
        if idx.order() > MAX_ORDER {
            return Err(JetError::OrderOverflow(idx.order()));
        }
        Ok(idx)
    }

    /// Multi-index with a single nonzero exponent.
    pub fn axis(nvars: usize, var: usize, power: u8) -> Result<Self, JetError> {
        let mut e = vec![0u8; nvars];
        e[var] = power;
        Self::new(e)
    }

    pub fn exponents(&self) -> &[u8] {
        &self.0
    }

    pub fn nvars(&self) -> usize {
        self.0.len()
    }

    pub fn order(&self) -> usize {
        self.0.iter().map(|&e| e as usize).sum()
    }

    /// `α! = Π α_k!`
    pub fn factorial(&self) -> f64 {
        self.0
            .iter()
            .map(|&e| (1..=e as u32).product::<u32>() as f64)
            .product()
    }
}

/// Monomial bookkeeping for one variable count, shared by all jets.
pub struct Layout {
    nvars: usize,
    monomials: Vec<Vec<u8>>,
    degree: Vec<u8>,
    /// Number of monomials with degree `<= d`.
    count_upto: [usize; MAX_ORDER + 1],
    /// `(i, j, k)` with `mono[i] + mono[j] = mono[k]`, sorted by `deg(k)`.
    /// Factor pairs `(i, j)`, `i < j`, grouped by product monomial.
    pairs: Vec<(u16, u16)>,
    /// Square root monomial of each monomial, if any.
    diag: Vec<Option<u16>>,
    /// `pairs[pair_start[k]..pair_start[k + 1]]` multiply into monomial `k`.
    pair_start: Vec<usize>,
    /// For variable `v` and monomial index `a` of degree `< MAX_ORDER`:
    /// `(index of a + e_v, exponent factor)`.
    shift: Vec<Vec<(u16, f64)>>,
}

impl Layout {
    fn build(nvars: usize) -> Layout {
        let mut monomials: Vec<Vec<u8>> = Vec::new();
        for d in 0..=MAX_ORDER {
            let mut cur = vec![0u8; nvars];
            enumerate_degree(nvars, 0, d, &mut cur, &mut monomials);
        }
        let degree: Vec<u8> = monomials
            .iter()
            .map(|m| m.iter().sum::<u8>())
            .collect();
        let mut count_upto = [0usize; MAX_ORDER + 1];
        for (d, slot) in count_upto.iter_mut().enumerate() {
            *slot = degree.iter().filter(|&&g| g as usize <= d).count();
        }
        let find = |e: &[u8]| monomials.iter().position(|m| m.as_slice() == e);

        let mut pairs = Vec::new();
        for (i, a) in monomials.iter().enumerate() {
            for (j, b) in monomials.iter().enumerate() {
                if j < i || degree[i] + degree[j] > MAX_ORDER as u8 {
                    continue;
                }
                let sum: Vec<u8> = a.iter().zip(b).map(|(x, y)| x + y).collect();
                let k = find(&sum).expect("monomial closure");
                pairs.push((i as u16, j as u16, k as u16));
            }
        }
        pairs.sort_by_key(|&(_, _, k)| k);
        let mut pair_start = vec![0usize; monomials.len() + 1];
        for &(i, j, k) in &pairs {
            if i != j {
                pair_start[k as usize + 1] += 1;
            }
        }
        for k in 0..monomials.len() {
            pair_start[k + 1] += pair_start[k];
        }
        let mut diag = vec![None; monomials.len()];
        for &(i, j, k) in &pairs {
            if i == j {
                diag[k as usize] = Some(i);
            }
        }
        let pairs = pairs.into_iter().filter(|(i, j, _)| i != j).map(|(i, j, _)| (i, j)).collect();

        let mut shift = Vec::with_capacity(nvars);
        for v in 0..nvars {
            let mut col = Vec::with_capacity(count_upto[MAX_ORDER - 1]);
            for mono in monomials.iter().take(count_upto[MAX_ORDER - 1]) {
                let mut up = mono.clone();
                up[v] += 1;
                let src = find(&up).expect("shifted monomial");
                col.push((src as u16, up[v] as f64));
            }
            shift.push(col);
        }

        Layout {
            nvars,
            monomials,
            degree,
            count_upto,
            pairs,
            diag,
            pair_start,
            shift,
        }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    fn len(&self, order: usize) -> usize {
        self.count_upto[order]
    }

    fn index_of(&self, e: &[u8]) -> Option<usize> {
        self.monomials.iter().position(|m| m.as_slice() == e)
    }
}

fn enumerate_degree(nvars: usize, var: usize, left: usize, cur: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
    if var + 1 == nvars {
        cur[var] = left as u8;
        out.push(cur.clone());
        cur[var] = 0;
        return;
    }
    for e in (0..=left).rev() {
        cur[var] = e as u8;
        enumerate_degree(nvars, var + 1, left - e, cur, out);
    }
    cur[var] = 0;
}

static LAYOUTS: [OnceLock<Layout>; MAX_VARS + 1] = [const { OnceLock::new() }; MAX_VARS + 1];

/// Shared layout for `nvars` chart variables.
pub fn layout(nvars: usize) -> Result<&'static Layout, JetError> {
    if nvars == 0 || nvars > MAX_VARS {
        return Err(JetError::Vars(nvars));
    }
    Ok(LAYOUTS[nvars].get_or_init(|| Layout::build(nvars)))
}

type Coeffs = Vec<f64>;

/// Truncated Taylor expansion of a scalar function of the chart variables.
#[derive(Clone)]
pub struct Jet {
    layout: &'static Layout,
    order: u8,
    c: Coeffs,
}

impl fmt::Debug for Jet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Jet")
            .field("nvars", &self.layout.nvars)
            .field("order", &self.order)
            .field("coeffs", &self.c.as_slice())
            .finish()
    }
}

impl Jet {
    /// Constant function with the given nominal order.
    pub fn constant(nvars: usize, order: usize, value: f64) -> Result<Jet, JetError> {
        if order > MAX_ORDER {
            return Err(JetError::OrderOverflow(order));
        }
        let layout = layout(nvars)?;
        let mut c: Coeffs = vec![0.0; layout.len(order)];
        c[0] = value;
        Ok(Jet {
            layout,
            order: order as u8,
            c,
        })
    }

    /// The chart coordinate `x_var` expanded around `value`, at full order.
    pub fn variable(nvars: usize, var: usize, value: f64) -> Result<Jet, JetError> {
        let mut j = Jet::constant(nvars, MAX_ORDER, value)?;
        if var >= nvars {
            return Err(JetError::Arity {
                expected: nvars,
                got: var + 1,
            });
        }
        // degree-1 monomials follow the constant in layout order
        let e = MultiIndex::axis(nvars, var, 1)?;
        let idx = j.layout.index_of(e.exponents()).expect("linear monomial");
        j.c[idx] = 1.0;
        Ok(j)
    }

    /// All chart variables seeded at `point`.
    pub fn seed(point: &[f64]) -> Result<Vec<Jet>, JetError> {
        (0..point.len())
            .map(|k| Jet::variable(point.len(), k, point[k]))
            .collect()
    }

    /// Constant with the same variable count and order as `self`.
    pub fn constant_like(&self, value: f64) -> Jet {
        let mut c: Coeffs = vec![0.0; self.c.len()];
        c[0] = value;
        Jet {
            layout: self.layout,
            order: self.order,
            c,
        }
    }

    pub fn zero_like(&self) -> Jet {
        self.constant_like(0.0)
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    pub fn order(&self) -> usize {
        self.order as usize
    }

    pub fn nvars(&self) -> usize {
        self.layout.nvars
    }

    /// Taylor coefficient `∂^α f / α!`; zero for `|α|` beyond the order.
    pub fn coeff(&self, alpha: &MultiIndex) -> f64 {
        if alpha.order() > self.order() {
            return 0.0;
        }
        self.layout
            .index_of(alpha.exponents())
            .map(|i| self.c[i])
            .unwrap_or(0.0)
    }

    /// Partial derivative `∂^α f` at the base point.
    pub fn partial(&self, alpha: &MultiIndex) -> Result<f64, JetError> {
        if alpha.nvars() != self.nvars() {
            return Err(JetError::Arity {
                expected: self.nvars(),
                got: alpha.nvars(),
            });
        }
        if alpha.order() > self.order() {
            return Err(JetError::OrderOverflow(alpha.order()));
        }
        Ok(self.coeff(alpha) * alpha.factorial())
    }

    /// Drops every coefficient above `order`.
    pub fn truncate(&self, order: usize) -> Jet {
        let order = order.min(self.order());
        let n = self.layout.len(order);
        Jet {
            layout: self.layout,
            order: order as u8,
            c: self.c[..n].to_vec(),
        }
    }

    /// `∂f/∂x_var` as a jet of one lower order.
    pub fn derivative(&self, var: usize) -> Result<Jet, JetError> {
        if self.order == 0 {
            return Err(JetError::OrderExhausted);
        }
        let order = self.order() - 1;
        let n = self.layout.len(order);
        let shift = &self.layout.shift[var];
        let mut c: Coeffs = Vec::with_capacity(n);
        for &(src, factor) in shift.iter().take(n) {
            c.push(self.c[src as usize] * factor);
        }
        Ok(Jet {
            layout: self.layout,
            order: order as u8,
            c,
        })
    }

    /// `∂f/∂x_var` at the base point.
    pub fn derivative_value(&self, var: usize) -> Result<f64, JetError> {
        if self.order == 0 {
            return Err(JetError::OrderExhausted);
        }
        let (src, factor) = self.layout.shift[var][0];
        Ok(self.c[src as usize] * factor)
    }

    /// The part of `self` without its constant term.
    fn nilpotent(&self) -> Jet {
        let mut v = self.clone();
        v.c[0] = 0.0;
        v
    }

    /// `g(self)` given the derivatives `g^(k)(self.value())`, `k = 0..=order`.
    pub fn compose(&self, derivs: &[f64]) -> Jet {
        let order = self.order();
        let mut out = self.constant_like(derivs[0]);
        if order == 0 {
            return out;
        }
        let v = self.nilpotent();
        let mut power = v.clone();
        let mut fact = 1.0;
        for (k, &dk) in derivs.iter().enumerate().take(order + 1).skip(1) {
            fact *= k as f64;
            let w = dk / fact;
            if w != 0.0 {
                for (o, p) in out.c.iter_mut().zip(power.c.iter()) {
                    *o += w * p;
                }
            }
            if k < order {
                power = &power * &v;
            }
        }
        out
    }

    pub fn sin(&self) -> Jet {
        let (s, c) = self.value().sin_cos();
        self.compose(&[s, c, -s, -c, s])
    }

    pub fn cos(&self) -> Jet {
        let (s, c) = self.value().sin_cos();
        self.compose(&[c, -s, -c, s, c])
    }

    pub fn exp(&self) -> Jet {
        let e = self.value().exp();
        self.compose(&[e; MAX_ORDER + 1])
    }

    pub fn sqrt(&self) -> Result<Jet, JetError> {
        let x = self.value();
        if !(x > 0.0) {
            return Err(JetError::Domain(format!("square root of non-positive value {x}")));
        }
        let r = x.sqrt();
        Ok(self.compose(&[
            r,
            0.5 / r,
            -0.25 / (r * x),
            0.375 / (r * x * x),
            -0.9375 / (r * x * x * x),
        ]))
    }

    pub fn recip(&self) -> Result<Jet, JetError> {
        let x = self.value();
        if x.abs() < 1e-300 || !x.is_finite() {
            return Err(JetError::Domain(format!("reciprocal of {x}")));
        }
        let r = 1.0 / x;
        Ok(self.compose(&[r, -r * r, 2.0 * r * r * r, -6.0 * r.powi(4), 24.0 * r.powi(5)]))
    }

    pub fn div(&self, rhs: &Jet) -> Result<Jet, JetError> {
        Ok(self * &rhs.recip()?)
    }

    pub fn scale(&self, k: f64) -> Jet {
        let mut out = self.clone();
        out.c.iter_mut().for_each(|x| *x *= k);
        out
    }

    pub fn is_finite(&self) -> bool {
        self.c.iter().all(|x| x.is_finite())
    }

    /// Largest coefficient magnitude.
    pub fn max_abs(&self) -> f64 {
        self.c.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    fn check_layout(&self, rhs: &Jet) {
        assert!(
            std::ptr::eq(self.layout, rhs.layout),
            "jets over different variable counts ({} vs {})",
            self.layout.nvars,
            rhs.layout.nvars
        );
    }
}

fn add_jets(a: &Jet, b: &Jet, sign: f64) -> Jet {
    a.check_layout(b);
    let order = a.order.min(b.order);
    let n = a.layout.len(order as usize);
    let mut c: Coeffs = Vec::with_capacity(n);
    for i in 0..n {
        c.push(a.c[i] + sign * b.c[i]);
    }
    Jet {
        layout: a.layout,
        order,
        c,
    }
}

fn mul_jets(a: &Jet, b: &Jet) -> Jet {
    a.check_layout(b);
    let order = a.order.min(b.order);
    let layout = a.layout;
    let n = layout.len(order as usize);
    let (ac, bc) = (a.c.as_slice(), b.c.as_slice());
    let mut c: Coeffs = Vec::with_capacity(n);
    for (w, d) in layout.pair_start[..=n].windows(2).zip(&layout.diag) {
        let mut s: f64 = layout.pairs[w[0]..w[1]]
            .iter()
            .map(|&(i, j)| {
                let (i, j) = (i as usize, j as usize);
                ac[i] * bc[j] + ac[j] * bc[i]
            })
            .sum();
        if let Some(i) = d {
            s += ac[*i as usize] * bc[*i as usize];
        }
        c.push(s);
    }
    Jet { layout, order, c }
}

impl Add<&Jet> for &Jet {
    type Output = Jet;
    fn add(self, rhs: &Jet) -> Jet {
        add_jets(self, rhs, 1.0)
    }
}

impl Sub<&Jet> for &Jet {
    type Output = Jet;
    fn sub(self, rhs: &Jet) -> Jet {
        add_jets(self, rhs, -1.0)
    }
}

impl Mul<&Jet> for &Jet {
    type Output = Jet;
    fn mul(self, rhs: &Jet) -> Jet {
        mul_jets(self, rhs)
    }
}

macro_rules! forward_owned {
    ($tr:ident, $m:ident) => {
        impl $tr<Jet> for Jet {
            type Output = Jet;
            fn $m(self, rhs: Jet) -> Jet {
                (&self).$m(&rhs)
            }
        }
        impl $tr<&Jet> for Jet {
            type Output = Jet;
            fn $m(self, rhs: &Jet) -> Jet {
                (&self).$m(rhs)
            }
        }
        impl $tr<Jet> for &Jet {
            type Output = Jet;
            fn $m(self, rhs: Jet) -> Jet {
                self.$m(&rhs)
            }
        }
    };
}
forward_owned!(Add, add);
forward_owned!(Sub, sub);
forward_owned!(Mul, mul);

impl AddAssign<&Jet> for Jet {
    fn add_assign(&mut self, rhs: &Jet) {
        self.check_layout(rhs);
        if rhs.order < self.order {
            *self = self.truncate(rhs.order());
        }
        for (a, b) in self.c.iter_mut().zip(rhs.c.iter()) {
            *a += b;
        }
    }
}

impl SubAssign<&Jet> for Jet {
    fn sub_assign(&mut self, rhs: &Jet) {
        self.check_layout(rhs);
        if rhs.order < self.order {
            *self = self.truncate(rhs.order());
        }
        for (a, b) in self.c.iter_mut().zip(rhs.c.iter()) {
            *a -= b;
        }
    }
}

impl Neg for &Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Mul<f64> for &Jet {
    type Output = Jet;
    fn mul(self, k: f64) -> Jet {
        self.scale(k)
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(self, k: f64) -> Jet {
        self.scale(k)
    }
}

impl Add<f64> for &Jet {
    type Output = Jet;
    fn add(self, k: f64) -> Jet {
        let mut out = self.clone();
        out.c[0] += k;
        out
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(mut self, k: f64) -> Jet {
        self.c[0] += k;
        self
    }
}

/// Complex-valued jet stored as a pair of real jets.
#[derive(Debug, Clone)]
pub struct ComplexJet {
    pub re: Jet,
    pub im: Jet,
}

impl ComplexJet {
    pub fn new(re: Jet, im: Jet) -> Self {
        ComplexJet { re, im }
    }

    pub fn real(re: Jet) -> Self {
        let im = re.zero_like();
        ComplexJet { re, im }
    }

    /// `e^{iθ}`
    pub fn expi(theta: &Jet) -> Self {
        ComplexJet {
            re: theta.cos(),
            im: theta.sin(),
        }
    }

    pub fn scale(&self, k: f64) -> Self {
        ComplexJet {
            re: self.re.scale(k),
            im: self.im.scale(k),
        }
    }

    /// Multiplication by a real jet.
    pub fn mul_real(&self, k: &Jet) -> Self {
        ComplexJet {
            re: &self.re * k,
            im: &self.im * k,
        }
    }

    pub fn mul(&self, rhs: &ComplexJet) -> Self {
        ComplexJet {
            re: &self.re * &rhs.re - &self.im * &rhs.im,
            im: &self.re * &rhs.im + &self.im * &rhs.re,
        }
    }

    /// Multiplication by a complex constant.
    pub fn mul_c(&self, re: f64, im: f64) -> Self {
        ComplexJet {
            re: self.re.scale(re) - self.im.scale(im),
            im: self.re.scale(im) + self.im.scale(re),
        }
    }
}

/// Scalar map of the chart coordinates that can be evaluated on jets.
pub type ScalarMap<'a> = dyn Fn(&[Jet]) -> Result<Jet, JetError> + Send + Sync + 'a;

/// Evaluates a jet-capable map at a plain point using order-0 jets.
pub fn eval_scalar(map: &ScalarMap<'_>, p: &[f64]) -> Result<f64, JetError> {
    let x: Vec<Jet> = p
        .iter()
        .map(|&v| Jet::constant(p.len(), 0, v))
        .collect::<Result<_, _>>()?;
    Ok(map(&x)?.value())
}

/// Exact `∂^α f(p)` by jet propagation.
pub fn derivative(map: &ScalarMap<'_>, p: &[f64], alpha: &MultiIndex) -> Result<f64, JetError> {
    if alpha.order() > MAX_ORDER {
        return Err(JetError::OrderOverflow(alpha.order()));
    }
    if alpha.nvars() != p.len() {
        return Err(JetError::Arity {
            expected: p.len(),
            got: alpha.nvars(),
        });
    }
    let x = Jet::seed(p)?;
    let f = map(&x)?;
    if !f.is_finite() {
        return Err(JetError::Domain("non-finite jet coefficients".into()));
    }
    f.partial(alpha)
}

/// Central-difference stencils of second-order accuracy, `(offset, weight)`
/// for `h^n f^(n)`.
fn stencil(n: usize) -> &'static [(i32, f64)] {
    match n {
        0 => &[(0, 1.0)],
        1 => &[(-1, -0.5), (1, 0.5)],
        2 => &[(-1, 1.0), (0, -2.0), (1, 1.0)],
        3 => &[(-2, -0.5), (-1, 1.0), (1, -1.0), (2, 0.5)],
        4 => &[(-2, 1.0), (-1, -4.0), (0, 6.0), (1, -4.0), (2, 1.0)],
        _ => unreachable!("order checked by caller"),
    }
}

fn fd_plain(map: &ScalarMap<'_>, p: &[f64], alpha: &MultiIndex, h: f64) -> Result<f64, JetError> {
    let stencils: Vec<&[(i32, f64)]> = alpha.exponents().iter().map(|&e| stencil(e as usize)).collect();
    let mut total = 0.0;
    let mut counter = vec![0usize; p.len()];
    let mut x = p.to_vec();
    loop {
        let mut w = 1.0;
        for (k, st) in stencils.iter().enumerate() {
            let (off, wk) = st[counter[k]];
            x[k] = p[k] + off as f64 * h;
            w *= wk;
        }
        total += w * eval_scalar(map, &x)?;
        // odometer over the tensor-product stencil
        let mut k = 0;
        loop {
            if k == p.len() {
                return Ok(total / h.powi(alpha.order() as i32));
            }
            counter[k] += 1;
            if counter[k] < stencils[k].len() {
                break;
            }
            counter[k] = 0;
            k += 1;
        }
    }
}

/// Finite-difference estimate of `∂^α f(p)`.
///
/// Tensor-product central differences (truncation error `O(h²)`) combined
/// by one Richardson step over `h` and `h/2`, leaving `O(h⁴)`.
pub fn fd_derivative(map: &ScalarMap<'_>, p: &[f64], alpha: &MultiIndex, step: f64) -> Result<f64, JetError> {
    let order = alpha.order();
    if order > MAX_ORDER {
        return Err(JetError::OrderOverflow(order));
    }
    if alpha.nvars() != p.len() {
        return Err(JetError::Arity {
            expected: p.len(),
            got: alpha.nvars(),
        });
    }
    if !(step > 0.0) || (order == MAX_ORDER && step < 1e-4) {
        return Err(JetError::StepTooSmall { step, order });
    }
    if order == 0 {
        return eval_scalar(map, p);
    }
    let coarse = fd_plain(map, p, alpha, step)?;
    let fine = fd_plain(map, p, alpha, step / 2.0)?;
    Ok((4.0 * fine - coarse) / 3.0)
}

/// Every multi-index over `nvars` variables with `|α| <= max_order`.
pub fn multi_indices(nvars: usize, max_order: usize) -> Result<Vec<MultiIndex>, JetError> {
    let l = layout(nvars)?;
    let max_order = max_order.min(MAX_ORDER);
    Ok(l.monomials
        .iter()
        .zip(&l.degree)
        .filter(|(_, &d)| d as usize <= max_order)
        .map(|(m, _)| MultiIndex(m.clone()))
        .collect())
}

/// Vectors of jets (ambient coordinates of a jet-valued field).
pub mod vector {
    use super::Jet;

    pub fn dot(a: &[Jet], b: &[Jet]) -> Jet {
        let mut acc = &a[0] * &b[0];
        for (x, y) in a.iter().zip(b).skip(1) {
            acc += &(x * y);
        }
        acc
    }

    pub fn add(a: &[Jet], b: &[Jet]) -> Vec<Jet> {
        a.iter().zip(b).map(|(x, y)| x + y).collect()
    }

    pub fn sub(a: &[Jet], b: &[Jet]) -> Vec<Jet> {
        a.iter().zip(b).map(|(x, y)| x - y).collect()
    }

    pub fn scale(a: &[Jet], k: &Jet) -> Vec<Jet> {
        a.iter().map(|x| x * k).collect()
    }

    pub fn scale_f64(a: &[Jet], k: f64) -> Vec<Jet> {
        a.iter().map(|x| x.scale(k)).collect()
    }

    /// `a += k * b`
    pub fn axpy(a: &mut [Jet], k: &Jet, b: &[Jet]) {
        for (x, y) in a.iter_mut().zip(b) {
            *x += &(k * y);
        }
    }

    /// `a -= k * b`
    pub fn axmy(a: &mut [Jet], k: &Jet, b: &[Jet]) {
        for (x, y) in a.iter_mut().zip(b) {
            *x -= &(k * y);
        }
    }

    pub fn values(a: &[Jet]) -> Vec<f64> {
        a.iter().map(Jet::value).collect()
    }

    pub fn truncate(a: &[Jet], order: usize) -> Vec<Jet> {
        a.iter().map(|x| x.truncate(order)).collect()
    }

    pub fn order(a: &[Jet]) -> usize {
        a.iter().map(Jet::order).min().unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mi(e: &[u8]) -> MultiIndex {
        MultiIndex::new(e.to_vec()).unwrap()
    }

    #[test]
    fn layout_sizes() {
        assert_eq!(layout(1).unwrap().len(4), 5);
        assert_eq!(layout(2).unwrap().len(4), 15);
        assert_eq!(layout(3).unwrap().len(4), 35);
        assert_eq!(layout(4).unwrap().len(4), 70);
        assert_eq!(layout(4).unwrap().len(2), 15);
        assert!(layout(0).is_err());
    }

    #[test]
    fn quartic_mixed_partial() {
        let f = |x: &[Jet]| Ok(&(&x[0] * &x[0]) * &(&x[1] * &x[1]));
        let d = derivative(&f, &[1.0, 1.0], &mi(&[2, 2])).unwrap();
        assert!((d - 4.0).abs() < 1e-12);
    }

    #[test]
    fn sine_third_derivative() {
        let f = |x: &[Jet]| Ok(x[0].sin());
        let d = derivative(&f, &[0.0], &mi(&[3])).unwrap();
        assert!((d + 1.0).abs() < 1e-15);
    }

    #[test]
    fn fifth_order_rejected() {
        assert_eq!(MultiIndex::new(vec![3, 2]), Err(JetError::OrderOverflow(5)));
    }

    #[test]
    fn sqrt_of_negative_is_domain_error() {
        let f = |x: &[Jet]| x[0].sqrt();
        assert!(matches!(
            derivative(&f, &[-1.0], &mi(&[1])),
            Err(JetError::Domain(_))
        ));
    }

    #[test]
    fn derivative_consumes_order() {
        let x = Jet::variable(2, 0, 0.3).unwrap();
        let f = x.sin();
        let mut g = f.clone();
        for _ in 0..4 {
            g = g.derivative(0).unwrap();
        }
        assert_eq!(g.order(), 0);
        assert!((g.value() - 0.3f64.sin()).abs() < 1e-15);
        assert_eq!(g.derivative(1).unwrap_err(), JetError::OrderExhausted);
    }

    #[test]
    fn fd_cubic_second_derivative() {
        let f = |x: &[Jet]| Ok(&(&x[0] * &x[0]) * &x[0]);
        let d = fd_derivative(&f, &[1.0], &mi(&[2]), 1e-2).unwrap();
        assert!((d - 6.0).abs() < 1e-8, "{d}");
    }

    #[test]
    fn fd_cos_fourth_derivative() {
        // real part of e^{iμx} with μ = 1
        let f = |x: &[Jet]| Ok(ComplexJet::expi(&x[0]).re);
        let d = fd_derivative(&f, &[0.0], &mi(&[4]), 1e-2).unwrap();
        assert!((d - 1.0).abs() < 1e-4, "{d}");
    }

    #[test]
    fn fd_guards() {
        let f = |x: &[Jet]| Ok(x[0].clone());
        assert!(matches!(
            fd_derivative(&f, &[0.0], &mi(&[4]), 5e-5),
            Err(JetError::StepTooSmall { .. })
        ));
        assert!(fd_derivative(&f, &[0.0], &mi(&[2]), 5e-5).is_ok());
        assert!(fd_derivative(&f, &[0.0], &mi(&[1]), 0.0).is_err());
    }

    #[test]
    fn reciprocal_and_division() {
        let x = Jet::variable(1, 0, 2.0).unwrap();
        let one = x.constant_like(1.0);
        let q = one.div(&x).unwrap();
        // d^k/dx^k (1/x) = (-1)^k k! / x^{k+1}
        for k in 0..=4u8 {
            let want = (-1f64).powi(k as i32) * (1..=k as u32).product::<u32>() as f64 / 2f64.powi(k as i32 + 1);
            assert!((q.partial(&mi(&[k])).unwrap() - want).abs() < 1e-14);
        }
    }

    #[test]
    fn mixed_orders_truncate_to_minimum() {
        let x = Jet::variable(2, 0, 1.0).unwrap();
        let y = Jet::variable(2, 1, 1.0).unwrap().truncate(2);
        let p = &x * &y;
        assert_eq!(p.order(), 2);
        assert_eq!(p.coeff(&mi(&[1, 1])), 1.0);
    }
}
