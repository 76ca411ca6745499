//! Tiny closed-form expression grammar for boundary functions and inline
//! dynamics: `+ - * /`, `abs`, `min`, `max`, `pow`, numeric constants and
//! the variables x1..x3 (plus u1..u3 where controls are in scope).
//!
//! Deliberately no transcendental functions; every construct is exactly
//! reproducible across platforms.

use std::fmt;

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    State(usize),
    Input(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Abs(Box<Expr>),
    Min(Box<Expr>, Box<Expr>),
    Max(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParseError {
    pub pos: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "column {}: {}", self.pos + 1, self.message)
    }
}

impl std::error::Error for ParseError {}

impl Expr {
    pub fn eval(&self, x: &[f64], u: &[f64]) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::State(i) => x[*i],
            Expr::Input(i) => u[*i],
            Expr::Neg(a) => -a.eval(x, u),
            Expr::Add(a, b) => a.eval(x, u) + b.eval(x, u),
            Expr::Sub(a, b) => a.eval(x, u) - b.eval(x, u),
            Expr::Mul(a, b) => a.eval(x, u) * b.eval(x, u),
            Expr::Div(a, b) => a.eval(x, u) / b.eval(x, u),
            Expr::Abs(a) => a.eval(x, u).abs(),
            Expr::Min(a, b) => a.eval(x, u).min(b.eval(x, u)),
            Expr::Max(a, b) => a.eval(x, u).max(b.eval(x, u)),
            Expr::Pow(a, b) => a.eval(x, u).powf(b.eval(x, u)),
        }
    }

    /// Highest state index referenced, plus one.
    pub fn state_arity(&self) -> usize {
        self.fold(&|e| match e {
            Expr::State(i) => i + 1,
            _ => 0,
        })
    }

    pub fn input_arity(&self) -> usize {
        self.fold(&|e| match e {
            Expr::Input(i) => i + 1,
            _ => 0,
        })
    }

    fn fold(&self, leaf: &impl Fn(&Expr) -> usize) -> usize {
        let own = leaf(self);
        let sub = match self {
            Expr::Const(_) | Expr::State(_) | Expr::Input(_) => 0,
            Expr::Neg(a) | Expr::Abs(a) => a.fold(leaf),
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Min(a, b)
            | Expr::Max(a, b)
            | Expr::Pow(a, b) => a.fold(leaf).max(b.fold(leaf)),
        };
        own.max(sub)
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    allow_inputs: bool,
}

/// Parse an expression over x1..x3. `allow_inputs` additionally admits
/// u1..u3 for inline dynamics.
pub fn parse(src: &str, allow_inputs: bool) -> Result<Expr, ParseError> {
    let mut p = Parser {
        src: src.as_bytes(),
        pos: 0,
        allow_inputs,
    };
    let e = p.expr()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(p.err("unexpected trailing input"));
    }
    Ok(e)
}

impl<'a> Parser<'a> {
    fn err(&self, message: &str) -> ParseError {
        ParseError {
            pos: self.pos,
            message: message.into(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> Result<(), ParseError> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(&format!("expected '{}'", c as char)))
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some(b'-') => {
                    self.pos += 1;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.factor()?;
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.factor()?));
                }
                Some(b'/') => {
                    self.pos += 1;
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.factor()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn factor(&mut self) -> Result<Expr, ParseError> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.factor()?)));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.eat(b')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.ident(),
            _ => Err(self.err("expected a number, variable, function, or '('")),
        }
    }

    fn number(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_digit() || self.src[self.pos] == b'.')
        {
            self.pos += 1;
        }
        // exponent notation is excluded on purpose; plain decimals only
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        text.parse::<f64>()
            .map(Expr::Const)
            .map_err(|_| ParseError {
                pos: start,
                message: format!("bad number literal '{text}'"),
            })
    }

    fn ident(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
        {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        match name {
            "x1" => return Ok(Expr::State(0)),
            "x2" => return Ok(Expr::State(1)),
            "x3" => return Ok(Expr::State(2)),
            "u1" | "u2" | "u3" => {
                if !self.allow_inputs {
                    return Err(ParseError {
                        pos: start,
                        message: format!("'{name}' is not allowed in this expression"),
                    });
                }
                let i = (name.as_bytes()[1] - b'1') as usize;
                return Ok(Expr::Input(i));
            }
            _ => {}
        }
        let arity = match name {
            "abs" => 1,
            "min" | "max" | "pow" => 2,
            _ => {
                return Err(ParseError {
                    pos: start,
                    message: format!("unknown identifier '{name}'"),
                })
            }
        };
        self.eat(b'(')?;
        let a = self.expr()?;
        let e = if arity == 1 {
            Expr::Abs(Box::new(a))
        } else {
            self.eat(b',')?;
            let b = self.expr()?;
            match name {
                "min" => Expr::Min(Box::new(a), Box::new(b)),
                "max" => Expr::Max(Box::new(a), Box::new(b)),
                _ => Expr::Pow(Box::new(a), Box::new(b)),
            }
        };
        self.eat(b')')?;
        Ok(e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval1(src: &str, x: f64) -> f64 {
        parse(src, false).unwrap().eval(&[x], &[])
    }

    #[test]
    fn arithmetic_and_precedence() {
        assert_eq!(eval1("1 + 2 * 3", 0.0), 7.0);
        assert_eq!(eval1("(1 + 2) * 3", 0.0), 9.0);
        assert_eq!(eval1("2 - 3 - 4", 0.0), -5.0);
        assert_eq!(eval1("12 / 3 / 2", 0.0), 2.0);
        assert_eq!(eval1("-x1 * x1", 3.0), -9.0);
    }

    #[test]
    fn functions() {
        assert_eq!(eval1("max(0, 1 - abs(x1))", 0.25), 0.75);
        assert_eq!(eval1("max(0, 1 - abs(x1))", 2.0), 0.0);
        assert_eq!(eval1("min(x1, 2)", 5.0), 2.0);
        assert_eq!(eval1("pow(x1, 3)", 2.0), 8.0);
    }

    #[test]
    fn inputs_gated() {
        assert!(parse("u1 + x1", false).is_err());
        let e = parse("x2 + u1", true).unwrap();
        assert_eq!(e.eval(&[0.0, 3.0], &[4.0]), 7.0);
        assert_eq!(e.state_arity(), 2);
        assert_eq!(e.input_arity(), 1);
    }

    #[test]
    fn diagnostics_carry_position() {
        let err = parse("1 + sin(x1)", false).unwrap_err();
        assert_eq!(err.pos, 4);
        assert!(err.message.contains("sin"));
        assert!(parse("1 + ", false).is_err());
        assert!(parse("min(1)", false).is_err());
        assert!(parse("1 2", false).is_err());
        assert!(parse("1e3", false).is_err());
    }

    #[test]
    fn scalar_example_dynamics_expression() {
        let e = parse("x1 + (x1 + pow(x1, 3)) / (1 + abs(x1)) * u1", true).unwrap();
        let v = e.eval(&[0.5], &[-1.0]);
        assert!((v - (0.5 - 0.625 / 1.5)).abs() < 1e-12);
    }
}
