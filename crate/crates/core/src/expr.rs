//! Tiny expression language for initial profiles in `x`.
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := '-' factor | atom ('^' factor)?
//! atom   := number | 'x' | 'pi' | '(' expr ')' | name '(' expr (',' expr)* ')'
//! ```
//!
//! Functions: `sin`, `cos`, `exp`, `min`, `max`, `clamp(u, lo, hi)` and
//! `bump(x, center, width)` = `exp(−((x−center)/width)²)`.

use alloc::boxed::Box;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::f64::consts::PI;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("expression error at byte {pos}: {msg}")]
pub struct ExprError {
    pub pos: usize,
    pub msg: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    X,
    Neg(Box<Expr>),
    Bin(char, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Min,
    Max,
    Clamp,
    Bump,
}

impl Func {
    fn parse(name: &str) -> Option<(Func, usize)> {
        Some(match name {
            "sin" => (Func::Sin, 1),
            "cos" => (Func::Cos, 1),
            "exp" => (Func::Exp, 1),
            "min" => (Func::Min, 2),
            "max" => (Func::Max, 2),
            "clamp" => (Func::Clamp, 3),
            "bump" | "gauss" => (Func::Bump, 3),
            _ => return None,
        })
    }
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr, ExprError> {
        let mut p = Parser { s: src.as_bytes(), i: 0 };
        let e = p.expr()?;
        p.ws();
        if p.i != p.s.len() {
            return Err(p.err("trailing input"));
        }
        Ok(e)
    }

    pub fn constant(c: f64) -> Expr {
        Expr::Num(c)
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Expr::Num(c) => *c,
            Expr::X => x,
            Expr::Neg(a) => -a.eval(x),
            Expr::Bin(op, a, b) => {
                let (u, v) = (a.eval(x), b.eval(x));
                match op {
                    '+' => u + v,
                    '-' => u - v,
                    '*' => u * v,
                    '/' => u / v,
                    _ => u.powf(v),
                }
            }
            Expr::Call(f, args) => {
                let a: Vec<f64> = args.iter().map(|e| e.eval(x)).collect();
                match f {
                    Func::Sin => a[0].sin(),
                    Func::Cos => a[0].cos(),
                    Func::Exp => a[0].exp(),
                    Func::Min => a[0].min(a[1]),
                    Func::Max => a[0].max(a[1]),
                    Func::Clamp => a[0].max(a[1]).min(a[2]),
                    Func::Bump => {
                        let z = (a[0] - a[1]) / a[2];
                        (-z * z).exp()
                    }
                }
            }
        }
    }
}

struct Parser<'a> {
    s: &'a [u8],
    i: usize,
}

impl Parser<'_> {
    fn err(&self, msg: &str) -> ExprError {
        ExprError { pos: self.i, msg: msg.to_string() }
    }

    fn ws(&mut self) {
        while self.i < self.s.len() && self.s[self.i].is_ascii_whitespace() {
            self.i += 1;
        }
    }

    fn eat(&mut self, c: u8) -> bool {
        self.ws();
        if self.s.get(self.i) == Some(&c) {
            self.i += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut e = self.term()?;
        loop {
            if self.eat(b'+') {
                e = Expr::Bin('+', Box::new(e), Box::new(self.term()?));
            } else if self.eat(b'-') {
                e = Expr::Bin('-', Box::new(e), Box::new(self.term()?));
            } else {
                return Ok(e);
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut e = self.factor()?;
        loop {
            if self.eat(b'*') {
                e = Expr::Bin('*', Box::new(e), Box::new(self.factor()?));
            } else if self.eat(b'/') {
                e = Expr::Bin('/', Box::new(e), Box::new(self.factor()?));
            } else {
                return Ok(e);
            }
        }
    }

    fn factor(&mut self) -> Result<Expr, ExprError> {
        if self.eat(b'-') {
            return Ok(Expr::Neg(Box::new(self.factor()?)));
        }
        let a = self.atom()?;
        if self.eat(b'^') {
            return Ok(Expr::Bin('^', Box::new(a), Box::new(self.factor()?)));
        }
        Ok(a)
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        self.ws();
        let start = self.i;
        let Some(&c) = self.s.get(self.i) else { return Err(self.err("unexpected end")) };
        if c == b'(' {
            self.i += 1;
            let e = self.expr()?;
            if !self.eat(b')') {
                return Err(self.err("expected ')'"));
            }
            return Ok(e);
        }
        if c.is_ascii_digit() || c == b'.' {
            while self.i < self.s.len() {
                let d = self.s[self.i];
                let exp_sign = (d == b'+' || d == b'-') && matches!(self.s[self.i - 1], b'e' | b'E');
                if d.is_ascii_digit() || d == b'.' || d == b'e' || d == b'E' || exp_sign {
                    self.i += 1;
                } else {
                    break;
                }
            }
            let txt = core::str::from_utf8(&self.s[start..self.i]).unwrap();
            return txt.parse::<f64>().map(Expr::Num).map_err(|_| ExprError { pos: start, msg: "bad number".to_string() });
        }
        if c.is_ascii_alphabetic() {
            while self.i < self.s.len() && (self.s[self.i].is_ascii_alphanumeric() || self.s[self.i] == b'_') {
                self.i += 1;
            }
            let name = core::str::from_utf8(&self.s[start..self.i]).unwrap();
            match name {
                "x" | "x1" => return Ok(Expr::X),
                "pi" => return Ok(Expr::Num(PI)),
                _ => {}
            }
            let Some((f, arity)) = Func::parse(name) else {
                return Err(ExprError { pos: start, msg: alloc::format!("unknown name '{name}'") });
            };
            if !self.eat(b'(') {
                return Err(self.err("expected '('"));
            }
            let mut args = Vec::new();
            loop {
                args.push(self.expr()?);
                if self.eat(b',') {
                    continue;
                }
                if self.eat(b')') {
                    break;
                }
                return Err(self.err("expected ',' or ')'"));
            }
            if args.len() != arity {
                return Err(ExprError { pos: start, msg: alloc::format!("{name} takes {arity} argument(s)") });
            }
            return Ok(Expr::Call(f, args));
        }
        Err(self.err("unexpected character"))
    }
}
