//! Trigonometric series in chart coordinates.
//!
//! Initial conditions and graph profiles are written as sums of products of
//! `cos`/`sin` factors, e.g. `0.05*sin(x0)^2*cos(2*x1) - 0.1`. Internally a
//! series is a list of complex exponentials c·exp(i k·x), which makes products,
//! powers and exact derivatives of any order straightforward.

use crate::error::{FlowError, Result};
use num_complex::Complex64;

#[derive(Debug, Clone, PartialEq)]
pub struct TrigSeries {
    terms: Vec<([f64; 2], Complex64)>,
}

impl TrigSeries {
    pub fn zero() -> Self {
        TrigSeries { terms: Vec::new() }
    }

    pub fn constant(c: f64) -> Self {
        TrigSeries { terms: vec![([0.0, 0.0], Complex64::new(c, 0.0))] }
    }

    /// cos(k·x) for wave vector k.
    pub fn cos(k: [f64; 2]) -> Self {
        let half = Complex64::new(0.5, 0.0);
        TrigSeries { terms: vec![(k, half), ([-k[0], -k[1]], half)] }
    }

    /// sin(k·x) for wave vector k.
    pub fn sin(k: [f64; 2]) -> Self {
        let c = Complex64::new(0.0, -0.5);
        TrigSeries { terms: vec![(k, c), ([-k[0], -k[1]], -c)] }
    }

    pub fn scale(mut self, s: f64) -> Self {
        for t in &mut self.terms {
            t.1 *= s;
        }
        self
    }

    pub fn add(mut self, other: &TrigSeries) -> Self {
        self.terms.extend_from_slice(&other.terms);
        self.merged()
    }

    pub fn mul(&self, other: &TrigSeries) -> Self {
        let mut terms = Vec::with_capacity(self.terms.len() * other.terms.len());
        for (ka, ca) in &self.terms {
            for (kb, cb) in &other.terms {
                terms.push(([ka[0] + kb[0], ka[1] + kb[1]], ca * cb));
            }
        }
        TrigSeries { terms }.merged()
    }

    pub fn powi(&self, n: u32) -> Self {
        let mut r = TrigSeries::constant(1.0);
        for _ in 0..n {
            r = r.mul(self);
        }
        r
    }

    fn merged(self) -> Self {
        let mut out: Vec<([f64; 2], Complex64)> = Vec::with_capacity(self.terms.len());
        for (k, c) in self.terms {
            match out.iter_mut().find(|(kk, _)| *kk == k) {
                Some(slot) => slot.1 += c,
                None => out.push((k, c)),
            }
        }
        out.retain(|(_, c)| c.norm() > 1e-300);
        TrigSeries { terms: out }
    }

    pub fn eval(&self, x: [f64; 2]) -> f64 {
        self.derivative([0, 0], x)
    }

    /// ∂^α of the series at x.
    pub fn derivative(&self, alpha: [usize; 2], x: [f64; 2]) -> f64 {
        let mut s = Complex64::new(0.0, 0.0);
        for (k, c) in &self.terms {
            let phase = k[0] * x[0] + k[1] * x[1];
            let factor = Complex64::new(0.0, k[0]).powu(alpha[0] as u32)
                * Complex64::new(0.0, k[1]).powu(alpha[1] as u32);
            s += c * factor * Complex64::from_polar(1.0, phase);
        }
        s.re
    }

    /// Wave vectors present in the series.
    pub fn wave_vectors(&self) -> impl Iterator<Item = [f64; 2]> + '_ {
        self.terms.iter().map(|(k, _)| *k)
    }

    /// Parses the expression grammar
    ///
    /// ```text
    /// expr   := ['+'|'-'] term (('+'|'-') term)*
    /// term   := factor ('*' factor)*
    /// factor := number | ('cos'|'sin') '(' [number '*'] var ')' ['^' integer]
    /// var    := x0 | x1 | x | y
    /// ```
    pub fn parse(src: &str) -> Result<Self> {
        let mut p = Parser { s: src.as_bytes(), pos: 0, src };
        let r = p.expr()?;
        p.skip_ws();
        if p.pos != p.s.len() {
            return Err(p.err("unexpected trailing input"));
        }
        Ok(r)
    }
}

struct Parser<'a> {
    s: &'a [u8],
    pos: usize,
    src: &'a str,
}

impl Parser<'_> {
    fn err(&self, msg: &str) -> FlowError {
        FlowError::Parse(format!("{msg} at column {} in `{}`", self.pos + 1, self.src))
    }

    fn skip_ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.s.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<TrigSeries> {
        let mut sign = 1.0;
        if self.eat(b'-') {
            sign = -1.0;
        } else {
            self.eat(b'+');
        }
        let mut acc = self.term()?.scale(sign);
        loop {
            if self.eat(b'+') {
                acc = acc.add(&self.term()?);
            } else if self.eat(b'-') {
                acc = acc.add(&self.term()?.scale(-1.0));
            } else {
                return Ok(acc);
            }
        }
    }

    fn term(&mut self) -> Result<TrigSeries> {
        let mut acc = self.factor()?;
        while self.eat(b'*') {
            acc = acc.mul(&self.factor()?);
        }
        Ok(acc)
    }

    fn number(&mut self) -> Result<f64> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.s.len() {
            let c = self.s[self.pos];
            let exp_sign = (c == b'-' || c == b'+')
                && self.pos > start
                && matches!(self.s[self.pos - 1], b'e' | b'E');
            if c.is_ascii_digit() || c == b'.' || c == b'e' || c == b'E' || exp_sign {
                self.pos += 1;
            } else {
                break;
            }
        }
        let text = &self.src[start..self.pos];
        text.parse::<f64>().map_err(|_| {
            self.pos = start;
            self.err("expected a number")
        })
    }

    fn ident(&mut self) -> &str {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_alphanumeric() {
            self.pos += 1;
        }
        &self.src[start..self.pos]
    }

    fn factor(&mut self) -> Result<TrigSeries> {
        match self.peek() {
            Some(c) if c.is_ascii_digit() || c == b'.' => Ok(TrigSeries::constant(self.number()?)),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.err("expected `)`"));
                }
                self.power(e)
            }
            Some(_) => {
                let save = self.pos;
                let name = self.ident().to_string();
                let is_cos = match name.as_str() {
                    "cos" => true,
                    "sin" => false,
                    _ => {
                        self.pos = save;
                        return Err(self.err("expected `cos`, `sin`, a number or `(`"));
                    }
                };
                if !self.eat(b'(') {
                    return Err(self.err("expected `(`"));
                }
                let mut k = 1.0;
                if matches!(self.peek(), Some(c) if c.is_ascii_digit() || c == b'.') {
                    k = self.number()?;
                    if !self.eat(b'*') {
                        return Err(self.err("expected `*` between wavenumber and variable"));
                    }
                }
                let save = self.pos;
                let axis = match self.ident() {
                    "x0" | "x" => 0,
                    "x1" | "y" => 1,
                    _ => {
                        self.pos = save;
                        return Err(self.err("expected variable x0 or x1"));
                    }
                };
                if !self.eat(b')') {
                    return Err(self.err("expected `)`"));
                }
                let mut kv = [0.0; 2];
                kv[axis] = k;
                let f = if is_cos { TrigSeries::cos(kv) } else { TrigSeries::sin(kv) };
                self.power(f)
            }
            None => Err(self.err("unexpected end of expression")),
        }
    }

    fn power(&mut self, base: TrigSeries) -> Result<TrigSeries> {
        if self.eat(b'^') {
            let n = self.number()?;
            if n < 0.0 || n.fract() != 0.0 || n > 32.0 {
                return Err(self.err("exponent must be an integer in 0..=32"));
            }
            Ok(base.powi(n as u32))
        } else {
            Ok(base)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn evaluates_products_and_powers() {
        let s = TrigSeries::parse("0.05*sin(x0)^2*cos(2*x1) - 0.1").unwrap();
        for &(a, b) in &[(0.3, 1.1), (2.0, -0.7), (1.5707, 3.0)] {
            let want = 0.05 * f64::sin(a).powi(2) * f64::cos(2.0 * b) - 0.1;
            assert!(close(s.eval([a, b]), want));
        }
    }

    #[test]
    fn exact_derivatives() {
        let s = TrigSeries::parse("sin(3*x)*cos(y)").unwrap();
        let x = [0.4, 0.9];
        let want = -27.0 * f64::cos(1.2) * -f64::sin(0.9);
        assert!(close(s.derivative([3, 1], x), want));
    }

    #[test]
    fn parenthesized_sums() {
        let s = TrigSeries::parse("(1 + cos(x0))^2").unwrap();
        assert!(close(s.eval([0.5, 0.0]), (1.0 + f64::cos(0.5)).powi(2)));
    }

    #[test]
    fn rejects_garbage() {
        for bad in ["tan(x0)", "cos(x2)", "cos(2 x0)", "1 +", "sin(x0)^-1"] {
            assert!(TrigSeries::parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn scientific_notation() {
        let s = TrigSeries::parse("1e-3*cos(x0)").unwrap();
        assert!(close(s.eval([0.0, 0.0]), 1e-3));
    }
}
