//! Closed-form scalar expressions in `t`, the spatial coordinates and the
//! period `T`, used to describe weights and nonlinearities.
//!
//! Grammar (usual precedence, `^` binds tightest and takes an integer
//! literal exponent):
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := unary (('*' | '/') unary)*
//! unary := '-' unary | power
//! power := atom ('^' ['-'] integer)?
//! atom  := number | 'pi' | 'T' | 't' | 'x' | 'x1' | 'y' | 'x2'
//!        | ('sin' | 'cos' | 'exp') '(' expr ')' | '(' expr ')'
//! ```

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    /// Not differentiable at 0.
    Abs,
    /// Not differentiable at 0.
    Sqrt,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    /// Time `t`.
    Time,
    /// The period `T` of the weight the expression belongs to.
    Period,
    /// Spatial coordinate along the given axis (0-based).
    Coord(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
    Call(Func, Box<Expr>),
}

impl Expr {
    pub fn constant(c: f64) -> Expr {
        Expr::Const(c)
    }

    pub fn eval(&self, t: f64, x: &[f64], period: f64) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Time => t,
            Expr::Period => period,
            Expr::Coord(a) => x.get(*a).copied().unwrap_or(f64::NAN),
            Expr::Neg(e) => -e.eval(t, x, period),
            Expr::Add(a, b) => a.eval(t, x, period) + b.eval(t, x, period),
            Expr::Sub(a, b) => a.eval(t, x, period) - b.eval(t, x, period),
            Expr::Mul(a, b) => a.eval(t, x, period) * b.eval(t, x, period),
            Expr::Div(a, b) => a.eval(t, x, period) / b.eval(t, x, period),
            Expr::Pow(e, n) => e.eval(t, x, period).powi(*n),
            Expr::Call(f, e) => {
                let v = e.eval(t, x, period);
                match f {
                    Func::Sin => v.sin(),
                    Func::Cos => v.cos(),
                    Func::Exp => v.exp(),
                    Func::Abs => v.abs(),
                    Func::Sqrt => v.sqrt(),
                }
            }
        }
    }

    fn any(&self, pred: &dyn Fn(&Expr) -> bool) -> bool {
        if pred(self) {
            return true;
        }
        match self {
            Expr::Const(_) | Expr::Time | Expr::Period | Expr::Coord(_) => false,
            Expr::Neg(e) | Expr::Pow(e, _) | Expr::Call(_, e) => e.any(pred),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.any(pred) || b.any(pred)
            }
        }
    }

    /// Structural dependence on any spatial coordinate.
    pub fn depends_on_space(&self) -> bool {
        self.any(&|e| matches!(e, Expr::Coord(_)))
    }

    pub fn depends_on_time(&self) -> bool {
        self.any(&|e| matches!(e, Expr::Time))
    }

    /// False when a non-differentiable function appears.
    pub fn is_smooth(&self) -> bool {
        !self.any(&|e| matches!(e, Expr::Call(Func::Abs | Func::Sqrt, _)))
    }

    /// Highest coordinate axis referenced, plus one.
    pub fn spatial_arity(&self) -> usize {
        fn walk(e: &Expr, acc: &mut usize) {
            match e {
                Expr::Coord(a) => *acc = (*acc).max(a + 1),
                Expr::Const(_) | Expr::Time | Expr::Period => {}
                Expr::Neg(e) | Expr::Pow(e, _) | Expr::Call(_, e) => walk(e, acc),
                Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                    walk(a, acc);
                    walk(b, acc)
                }
            }
        }
        let mut n = 0;
        walk(self, &mut n);
        n
    }

    /// Symbolic partial derivative with respect to the coordinate `axis`.
    pub fn diff(&self, axis: usize) -> Expr {
        use Expr::*;
        match self {
            Const(_) | Time | Period => Const(0.0),
            Coord(a) => Const(if *a == axis { 1.0 } else { 0.0 }),
            Neg(e) => -e.diff(axis),
            Add(a, b) => a.diff(axis) + b.diff(axis),
            Sub(a, b) => a.diff(axis) - b.diff(axis),
            Mul(a, b) => a.diff(axis) * (**b).clone() + (**a).clone() * b.diff(axis),
            Div(a, b) => {
                let num = a.diff(axis) * (**b).clone() - (**a).clone() * b.diff(axis);
                Div(Box::new(num), Box::new(Pow(b.clone(), 2)))
            }
            Pow(e, n) => match n {
                0 => Const(0.0),
                _ => Const(*n as f64) * Pow(e.clone(), n - 1) * e.diff(axis),
            },
            Call(Func::Sin, e) => Call(Func::Cos, e.clone()) * e.diff(axis),
            Call(Func::Cos, e) => -(Call(Func::Sin, e.clone()) * e.diff(axis)),
            Call(Func::Exp, e) => Call(Func::Exp, e.clone()) * e.diff(axis),
            Call(Func::Abs, e) => {
                Div(e.clone(), Box::new(Call(Func::Abs, e.clone()))) * e.diff(axis)
            }
            Call(Func::Sqrt, e) => Div(
                Box::new(e.diff(axis)),
                Box::new(Const(2.0) * Call(Func::Sqrt, e.clone())),
            ),
        }
    }

    fn as_const(&self) -> Option<f64> {
        match self {
            Expr::Const(c) => Some(*c),
            _ => None,
        }
    }
}

impl Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        match (self.as_const(), rhs.as_const()) {
            (Some(a), Some(b)) => Expr::Const(a + b),
            (Some(0.0), _) => rhs,
            (_, Some(0.0)) => self,
            _ => Expr::Add(Box::new(self), Box::new(rhs)),
        }
    }
}

impl Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        match (self.as_const(), rhs.as_const()) {
            (Some(a), Some(b)) => Expr::Const(a - b),
            (_, Some(0.0)) => self,
            (Some(0.0), _) => -rhs,
            _ => Expr::Sub(Box::new(self), Box::new(rhs)),
        }
    }
}

impl Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        match (self.as_const(), rhs.as_const()) {
            (Some(a), Some(b)) => Expr::Const(a * b),
            (Some(a), _) | (_, Some(a)) if a == 0.0 => Expr::Const(0.0),
            (Some(1.0), _) => rhs,
            (_, Some(1.0)) => self,
            _ => Expr::Mul(Box::new(self), Box::new(rhs)),
        }
    }
}

impl Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        match self {
            Expr::Const(c) => Expr::Const(-c),
            Expr::Neg(e) => *e,
            e => Expr::Neg(Box::new(e)),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => {
                if *c < 0.0 {
                    write!(f, "({c:?})")
                } else {
                    write!(f, "{c:?}")
                }
            }
            Expr::Time => f.write_str("t"),
            Expr::Period => f.write_str("T"),
            Expr::Coord(0) => f.write_str("x"),
            Expr::Coord(1) => f.write_str("y"),
            Expr::Coord(a) => write!(f, "x{}", a + 1),
            Expr::Neg(e) => write!(f, "(-{e})"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Pow(e, n) => write!(f, "({e})^{n}"),
            Expr::Call(func, e) => {
                let name = match func {
                    Func::Sin => "sin",
                    Func::Cos => "cos",
                    Func::Exp => "exp",
                    Func::Abs => "abs",
                    Func::Sqrt => "sqrt",
                };
                write!(f, "{name}({e})")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Op(char),
}

fn tokenize(src: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            let v = text
                .parse::<f64>()
                .map_err(|_| Error::Expression(format!("bad number `{text}`")))?;
            out.push(Token::Num(v));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Token::Ident(chars[start..i].iter().collect()));
        } else if "+-*/^()".contains(c) {
            out.push(Token::Op(c));
            i += 1;
        } else {
            return Err(Error::Expression(format!("unexpected character `{c}`")));
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn eat_op(&mut self, op: char) -> bool {
        if self.peek() == Some(&Token::Op(op)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_op(&mut self, op: char) -> Result<()> {
        if self.eat_op(op) {
            Ok(())
        } else {
            Err(Error::Expression(format!(
                "expected `{op}` at token {}",
                self.pos
            )))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            if self.eat_op('+') {
                lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat_op('-') {
                lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat_op('*') {
                lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat_op('/') {
                lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat_op('-') {
            Ok(Expr::Neg(Box::new(self.unary()?)))
        } else if self.eat_op('+') {
            self.unary()
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if !self.eat_op('^') {
            return Ok(base);
        }
        let negative = self.eat_op('-');
        match self.peek().cloned() {
            Some(Token::Num(v)) if v.fract() == 0.0 && v.abs() < 64.0 => {
                self.pos += 1;
                let n = v as i32;
                Ok(Expr::Pow(Box::new(base), if negative { -n } else { n }))
            }
            _ => Err(Error::Expression(
                "exponent must be an integer literal".to_string(),
            )),
        }
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.peek().cloned() {
            Some(Token::Num(v)) => {
                self.pos += 1;
                Ok(Expr::Const(v))
            }
            Some(Token::Op('(')) => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect_op(')')?;
                Ok(e)
            }
            Some(Token::Ident(name)) => {
                self.pos += 1;
                let func = match name.as_str() {
                    "sin" => Some(Func::Sin),
                    "cos" => Some(Func::Cos),
                    "exp" => Some(Func::Exp),
                    "abs" => Some(Func::Abs),
                    "sqrt" => Some(Func::Sqrt),
                    _ => None,
                };
                if let Some(func) = func {
                    self.expect_op('(')?;
                    let arg = self.expr()?;
                    self.expect_op(')')?;
                    return Ok(Expr::Call(func, Box::new(arg)));
                }
                match name.as_str() {
                    "t" => Ok(Expr::Time),
                    "T" => Ok(Expr::Period),
                    "pi" => Ok(Expr::Const(std::f64::consts::PI)),
                    "x" | "x1" => Ok(Expr::Coord(0)),
                    "y" | "x2" => Ok(Expr::Coord(1)),
                    other => Err(Error::Expression(format!("unknown identifier `{other}`"))),
                }
            }
            Some(tok) => Err(Error::Expression(format!("unexpected token {tok:?}"))),
            None => Err(Error::Expression(
                "unexpected end of expression".to_string(),
            )),
        }
    }
}

impl FromStr for Expr {
    type Err = Error;

    fn from_str(s: &str) -> Result<Expr> {
        let mut p = Parser {
            tokens: tokenize(s)?,
            pos: 0,
        };
        let e = p.expr()?;
        if p.pos != p.tokens.len() {
            return Err(Error::Expression(format!(
                "trailing input after token {}",
                p.pos
            )));
        }
        Ok(e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn ev(s: &str, t: f64, x: &[f64]) -> f64 {
        s.parse::<Expr>().unwrap().eval(t, x, 2.0)
    }

    #[test]
    fn precedence_and_functions() {
        assert_eq!(ev("1 + 2 * 3", 0.0, &[]), 7.0);
        assert_eq!(ev("-2^2", 0.0, &[]), -4.0);
        assert_eq!(ev("(1 + 2) * 3", 0.0, &[]), 9.0);
        assert_eq!(ev("2 * x - y", 0.0, &[3.0, 1.0]), 5.0);
        assert!((ev("sin(2*pi*t/T)", 0.5, &[]) - (PI / 2.0).sin()).abs() < 1e-15);
        assert!((ev("cos(pi*x)^2 + exp(0)", 0.0, &[0.25]) - 1.5).abs() < 1e-15);
        assert_eq!(ev("1e-3 * 2", 0.0, &[]), 2e-3);
        assert_eq!(ev("x^-1", 0.0, &[4.0]), 0.25);
    }

    #[test]
    fn rejects_malformed() {
        for bad in ["1 +", "sin x", "x ^ 0.5", "foo", "(1", "1 2", "3 $ 4"] {
            assert!(bad.parse::<Expr>().is_err(), "{bad}");
        }
    }

    #[test]
    fn dependence_queries() {
        let e: Expr = "sin(2*pi*t/T) + 0.5".parse().unwrap();
        assert!(!e.depends_on_space());
        assert!(e.depends_on_time());
        let e: Expr = "cos(y) * t".parse().unwrap();
        assert!(e.depends_on_space());
        assert_eq!(e.spatial_arity(), 2);
    }

    #[test]
    fn derivative_matches_central_difference() {
        let e: Expr = "sin(3*x) * exp(-x^2) + x^3 / (1 + x^2) - cos(t*x)"
            .parse()
            .unwrap();
        let d = e.diff(0);
        for &x in &[-0.7, 0.1, 0.4, 1.3] {
            let h = 1e-5;
            let fd = (e.eval(0.3, &[x + h], 1.0) - e.eval(0.3, &[x - h], 1.0)) / (2.0 * h);
            assert!((d.eval(0.3, &[x], 1.0) - fd).abs() < 1e-8);
        }
    }

    #[test]
    fn display_round_trips() {
        let src = "-(cos(2*pi*x) - 0.2) * sin(2*pi*t/T) + (x - 0.5)^2 / 3 - y";
        let e: Expr = src.parse().unwrap();
        let again: Expr = e.to_string().parse().unwrap();
        for &(t, x, y) in &[(0.1, 0.2, 0.3), (0.7, -1.0, 2.0)] {
            assert_eq!(e.eval(t, &[x, y], 1.5), again.eval(t, &[x, y], 1.5));
        }
    }
}
