//! Real polynomials in the ambient coordinates `x1, y1, ..., xn, yn` and
//! complex polynomials in the disc variable `z`.

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Sparse real polynomial in `nvars` variables, keyed by exponent vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct Poly {
    nvars: usize,
    terms: BTreeMap<Vec<u8>, f64>,
}

impl Poly {
    pub fn zero(nvars: usize) -> Self {
        Self { nvars, terms: BTreeMap::new() }
    }

    pub fn constant(nvars: usize, c: f64) -> Self {
        let mut p = Self::zero(nvars);
        p.add_term(vec![0; nvars], c);
        p
    }

    /// The coordinate function with index `k` (0-based, `x1` is 0, `y1` is 1).
    pub fn var(nvars: usize, k: usize) -> Self {
        let mut e = vec![0u8; nvars];
        e[k] = 1;
        let mut p = Self::zero(nvars);
        p.add_term(e, 1.0);
        p
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    fn add_term(&mut self, exps: Vec<u8>, c: f64) {
        if c == 0.0 {
            return;
        }
        let entry = self.terms.entry(exps.clone()).or_insert(0.0);
        *entry += c;
        if *entry == 0.0 {
            self.terms.remove(&exps);
        }
    }

    pub fn degree(&self) -> usize {
        self.terms
            .keys()
            .map(|e| e.iter().map(|&d| d as usize).sum())
            .max()
            .unwrap_or(0)
    }

    pub fn eval(&self, p: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| {
                e.iter()
                    .zip(p)
                    .fold(*c, |acc, (&d, &x)| acc * x.powi(d as i32))
            })
            .sum()
    }

    pub fn deriv(&self, k: usize) -> Self {
        let mut out = Self::zero(self.nvars);
        for (e, c) in &self.terms {
            if e[k] > 0 {
                let mut e2 = e.clone();
                e2[k] -= 1;
                out.add_term(e2, c * e[k] as f64);
            }
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (e, c) in &other.terms {
            out.add_term(e.clone(), *c);
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = Self::zero(self.nvars);
        for (e, c) in &self.terms {
            out.add_term(e.clone(), c * s);
        }
        out
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut out = Self::zero(self.nvars);
        for (e1, c1) in &self.terms {
            for (e2, c2) in &other.terms {
                let e: Vec<u8> = e1.iter().zip(e2).map(|(a, b)| a + b).collect();
                out.add_term(e, c1 * c2);
            }
        }
        out
    }

    pub fn powi(&self, k: u32) -> Self {
        let mut out = Self::constant(self.nvars, 1.0);
        for _ in 0..k {
            out = out.mul(self);
        }
        out
    }

    /// Parses expressions such as `"1 - 0.5*x1*y2^2 + (x2 + y1)^2"`.
    pub fn parse(src: &str, nvars: usize) -> Result<Self> {
        let mut parser = Parser { chars: src.chars().collect(), pos: 0, nvars };
        let p = parser.expr()?;
        parser.skip_ws();
        if parser.pos != parser.chars.len() {
            return Err(parser.fail("trailing input"));
        }
        Ok(p)
    }
}

fn var_name(k: usize) -> String {
    let axis = if k % 2 == 0 { 'x' } else { 'y' };
    format!("{}{}", axis, k / 2 + 1)
}

impl fmt::Display for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (e, c) in &self.terms {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "{c}")?;
            for (k, &d) in e.iter().enumerate() {
                match d {
                    0 => {}
                    1 => write!(f, "*{}", var_name(k))?,
                    _ => write!(f, "*{}^{}", var_name(k), d)?,
                }
            }
        }
        Ok(())
    }
}

struct Parser {
    chars: Vec<char>,
    pos: usize,
    nvars: usize,
}

impl Parser {
    fn fail(&self, msg: &str) -> Error {
        let src: String = self.chars.iter().collect();
        Error::Config(format!("polynomial '{src}': {msg} at offset {}", self.pos))
    }

    fn skip_ws(&mut self) {
        while self.pos < self.chars.len() && self.chars[self.pos].is_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.chars.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<Poly> {
        let mut acc = self.term()?;
        while let Some(c) = self.peek() {
            match c {
                '+' => {
                    self.pos += 1;
                    acc = acc.add(&self.term()?);
                }
                '-' => {
                    self.pos += 1;
                    acc = acc.sub(&self.term()?);
                }
                _ => break,
            }
        }
        Ok(acc)
    }

    fn term(&mut self) -> Result<Poly> {
        let mut acc = self.power()?;
        loop {
            match self.peek() {
                Some('*') => {
                    self.pos += 1;
                    acc = acc.mul(&self.power()?);
                }
                // juxtaposition such as "2x1" or "x1 y1"
                Some(c) if c == '(' || c == 'x' || c == 'y' || c.is_ascii_digit() => {
                    acc = acc.mul(&self.power()?);
                }
                _ => return Ok(acc),
            }
        }
    }

    fn power(&mut self) -> Result<Poly> {
        let base = self.unary()?;
        if self.peek() == Some('^') {
            self.pos += 1;
            self.skip_ws();
            let start = self.pos;
            while self.pos < self.chars.len() && self.chars[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            let digits: String = self.chars[start..self.pos].iter().collect();
            let k: u32 = digits.parse().map_err(|_| self.fail("expected integer exponent"))?;
            if k > 8 {
                return Err(self.fail("exponent too large"));
            }
            return Ok(base.powi(k));
        }
        Ok(base)
    }

    fn unary(&mut self) -> Result<Poly> {
        match self.peek() {
            Some('-') => {
                self.pos += 1;
                Ok(self.unary()?.scale(-1.0))
            }
            Some('+') => {
                self.pos += 1;
                self.unary()
            }
            _ => self.primary(),
        }
    }

    fn primary(&mut self) -> Result<Poly> {
        match self.peek() {
            Some('(') => {
                self.pos += 1;
                let p = self.expr()?;
                if self.peek() != Some(')') {
                    return Err(self.fail("expected ')'"));
                }
                self.pos += 1;
                Ok(p)
            }
            Some(c) if c == 'x' || c == 'y' => {
                self.pos += 1;
                let start = self.pos;
                while self.pos < self.chars.len() && self.chars[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
                let digits: String = self.chars[start..self.pos].iter().collect();
                let k: usize = digits.parse().map_err(|_| self.fail("expected variable index"))?;
                let idx = 2 * k.checked_sub(1).ok_or_else(|| self.fail("indices start at 1"))?
                    + usize::from(c == 'y');
                if idx >= self.nvars {
                    return Err(self.fail("variable out of range"));
                }
                Ok(Poly::var(self.nvars, idx))
            }
            Some(c) if c.is_ascii_digit() || c == '.' => {
                let start = self.pos;
                while self.pos < self.chars.len() {
                    let ch = self.chars[self.pos];
                    let exp_sign = (ch == '-' || ch == '+')
                        && self.pos > start
                        && matches!(self.chars[self.pos - 1], 'e' | 'E');
                    if ch.is_ascii_digit() || ch == '.' || ch == 'e' || ch == 'E' || exp_sign {
                        self.pos += 1;
                    } else {
                        break;
                    }
                }
                let lit: String = self.chars[start..self.pos].iter().collect();
                let v: f64 = lit.parse().map_err(|_| self.fail("bad number"))?;
                Ok(Poly::constant(self.nvars, v))
            }
            _ => Err(self.fail("unexpected token")),
        }
    }
}

/// A vector field on R^{2n} with polynomial components.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorFieldExpr {
    pub components: Vec<Poly>,
}

impl VectorFieldExpr {
    pub fn new(components: Vec<Poly>) -> Result<Self> {
        let dim = components.len();
        if dim == 0 || components.iter().any(|c| c.nvars() != dim) {
            return Err(Error::InvalidArgument(
                "vector field needs one component per ambient coordinate".into(),
            ));
        }
        Ok(Self { components })
    }

    pub fn constant(v: &[f64]) -> Self {
        let dim = v.len();
        Self { components: v.iter().map(|&c| Poly::constant(dim, c)).collect() }
    }

    pub fn parse(srcs: &[&str]) -> Result<Self> {
        let dim = srcs.len();
        let comps = srcs.iter().map(|s| Poly::parse(s, dim)).collect::<Result<Vec<_>>>()?;
        if let Some(p) = comps.iter().find(|p| p.degree() > 3) {
            return Err(Error::Config(format!("degree {} exceeds 3", p.degree())));
        }
        Self::new(comps)
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn eval(&self, p: &[f64]) -> Vec<f64> {
        self.components.iter().map(|c| c.eval(p)).collect()
    }

    /// Row-major Jacobian `∂V_i/∂p_j`.
    pub fn jacobian(&self, p: &[f64]) -> Vec<Vec<f64>> {
        let d = self.dim();
        self.components
            .iter()
            .map(|c| (0..d).map(|j| c.deriv(j).eval(p)).collect())
            .collect()
    }

    /// Lie bracket `[A, B]^i = A^j ∂_j B^i − B^j ∂_j A^i`.
    pub fn bracket(&self, other: &Self) -> Self {
        let d = self.dim();
        let comps = (0..d)
            .map(|i| {
                let mut acc = Poly::zero(d);
                for j in 0..d {
                    acc = acc
                        .add(&self.components[j].mul(&other.components[i].deriv(j)))
                        .sub(&other.components[j].mul(&self.components[i].deriv(j)));
                }
                acc
            })
            .collect();
        Self { components: comps }
    }
}

/// Complex polynomial in one variable, `coeffs[k]` multiplies `z^k`.
#[derive(Clone, Debug, PartialEq)]
pub struct CPoly {
    pub coeffs: Vec<Complex64>,
}

impl CPoly {
    pub fn new(coeffs: Vec<Complex64>) -> Self {
        let mut p = Self { coeffs };
        p.trim();
        p
    }

    pub fn from_real(coeffs: &[f64]) -> Self {
        Self::new(coeffs.iter().map(|&c| Complex64::new(c, 0.0)).collect())
    }

    pub fn z() -> Self {
        Self::from_real(&[0.0, 1.0])
    }

    fn trim(&mut self) {
        while self.coeffs.last().is_some_and(|c| c.norm() == 0.0) {
            self.coeffs.pop();
        }
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        self.coeffs.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, c| acc * z + c)
    }

    pub fn deriv(&self) -> Self {
        Self::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, c)| c * k as f64)
                .collect(),
        )
    }

    /// Antiderivative with zero constant term.
    pub fn integral(&self) -> Self {
        let mut out = vec![Complex64::new(0.0, 0.0)];
        out.extend(self.coeffs.iter().enumerate().map(|(k, c)| c / (k + 1) as f64));
        Self::new(out)
    }

    pub fn mul(&self, other: &Self) -> Self {
        if self.coeffs.is_empty() || other.coeffs.is_empty() {
            return Self::new(vec![]);
        }
        let mut out = vec![Complex64::new(0.0, 0.0); self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Self::new(out)
    }

    pub fn add(&self, other: &Self) -> Self {
        let len = self.coeffs.len().max(other.coeffs.len());
        let zero = Complex64::new(0.0, 0.0);
        Self::new(
            (0..len)
                .map(|k| {
                    self.coeffs.get(k).copied().unwrap_or(zero)
                        + other.coeffs.get(k).copied().unwrap_or(zero)
                })
                .collect(),
        )
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self::new(self.coeffs.iter().map(|c| c * s).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_eval() {
        let p = Poly::parse("1 - 0.5*x1*y2^2 + (x2 + y1)^2", 4).unwrap();
        let pt = [2.0, 3.0, 5.0, 7.0];
        let expect = 1.0 - 0.5 * 2.0 * 49.0 + (5.0 + 3.0f64).powi(2);
        assert!((p.eval(&pt) - expect).abs() < 1e-12);
        assert_eq!(p.degree(), 3);
    }

    #[test]
    fn parse_juxtaposition_and_exponent_literals() {
        let p = Poly::parse("2x1 y1 + 1e-3", 2).unwrap();
        assert!((p.eval(&[1.5, 2.0]) - (6.0 + 1e-3)).abs() < 1e-14);
        let q = Poly::parse("-x1 - -y1", 2).unwrap();
        assert_eq!(q.eval(&[1.0, 4.0]), 3.0);
    }

    #[test]
    fn parse_errors() {
        assert!(Poly::parse("x3", 4).is_err());
        assert!(Poly::parse("x1 +", 2).is_err());
        assert!(Poly::parse("(x1", 2).is_err());
        assert!(Poly::parse("x0", 2).is_err());
    }

    #[test]
    fn derivative_of_monomial() {
        let p = Poly::parse("x1^3*y1", 2).unwrap();
        let d = p.deriv(0);
        assert!((d.eval(&[2.0, 5.0]) - 3.0 * 4.0 * 5.0).abs() < 1e-12);
        assert!(p.deriv(1).deriv(1).is_zero());
    }

    #[test]
    fn bracket_of_x1_direction_and_l1() {
        // [∂x1, ∂x2 + x1 ∂x3] = ∂x3 on R^6
        let y = VectorFieldExpr::parse(&["1", "0", "0", "0", "0", "0"]).unwrap();
        let t = VectorFieldExpr::parse(&["0", "0", "1", "0", "x1", "0"]).unwrap();
        let b = y.bracket(&t);
        let v = b.eval(&[0.3, -0.2, 0.1, 0.0, 0.5, 0.7]);
        assert_eq!(v, vec![0.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let back = t.bracket(&y).eval(&[0.0; 6]);
        assert_eq!(back[4], -1.0);
    }

    #[test]
    fn vector_field_degree_cap() {
        assert!(VectorFieldExpr::parse(&["x1^4", "0"]).is_err());
    }

    #[test]
    fn cpoly_calculus() {
        let z = CPoly::z();
        let p = z.mul(&z);
        assert_eq!(p.degree(), 2);
        let q = p.integral();
        let w = Complex64::new(0.3, -0.4);
        assert!((q.eval(w) - w * w * w / 3.0).norm() < 1e-15);
        assert!((q.deriv().eval(w) - w * w).norm() < 1e-15);
    }
}
