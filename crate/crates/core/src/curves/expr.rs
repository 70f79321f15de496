//! Tiny arithmetic-expression language for user-defined curves.
//!
//! Grammar (whitespace ignored):
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := unary (('*' | '/') unary)*
//! unary := '-' unary | '+' unary | power
//! power := atom ('^' unary)?
//! atom  := number | 't' | 'pi' | 'e' | func '(' args ')' | '(' expr ')'
//! func  := sin | cos | tan | exp | sqrt | pow
//! ```
//!
//! Expressions are evaluated on dual numbers so every curve gets an exact
//! first derivative in `t`.

use std::fmt;

use crate::error::{Error, Result};
use crate::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Sqrt,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Time,
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

/// Value and derivative with respect to `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual<T> {
    pub v: T,
    pub d: T,
}

impl<T: Real> Dual<T> {
    fn constant(v: T) -> Self {
        Dual { v, d: T::zero() }
    }
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr> {
        let tokens = tokenize(src)?;
        let mut p = Parser { tokens, pos: 0 };
        let e = p.expr()?;
        if p.pos != p.tokens.len() {
            return Err(Error::Expression(format!(
                "unexpected trailing input {:?} in {src:?}",
                p.tokens[p.pos]
            )));
        }
        Ok(e)
    }

    pub fn eval<T: Real>(&self, t: T) -> T {
        self.eval_dual(t).v
    }

    pub fn eval_dual<T: Real>(&self, t: T) -> Dual<T> {
        match self {
            Expr::Num(v) => Dual::constant(T::lit(*v)),
            Expr::Time => Dual { v: t, d: T::one() },
            Expr::Neg(a) => {
                let a = a.eval_dual(t);
                Dual { v: -a.v, d: -a.d }
            }
            Expr::Add(a, b) => {
                let (a, b) = (a.eval_dual(t), b.eval_dual(t));
                Dual {
                    v: a.v + b.v,
                    d: a.d + b.d,
                }
            }
            Expr::Sub(a, b) => {
                let (a, b) = (a.eval_dual(t), b.eval_dual(t));
                Dual {
                    v: a.v - b.v,
                    d: a.d - b.d,
                }
            }
            Expr::Mul(a, b) => {
                let (a, b) = (a.eval_dual(t), b.eval_dual(t));
                Dual {
                    v: a.v * b.v,
                    d: a.d * b.v + a.v * b.d,
                }
            }
            Expr::Div(a, b) => {
                let (a, b) = (a.eval_dual(t), b.eval_dual(t));
                Dual {
                    v: a.v / b.v,
                    d: (a.d * b.v - a.v * b.d) / (b.v * b.v),
                }
            }
            Expr::Pow(a, b) => {
                let (a, b) = (a.eval_dual(t), b.eval_dual(t));
                let v = a.v.powf(b.v);
                let d = if b.d == T::zero() {
                    // constant exponent: valid for negative bases too
                    if a.d == T::zero() {
                        T::zero()
                    } else {
                        b.v * a.v.powf(b.v - T::one()) * a.d
                    }
                } else {
                    v * (b.d * a.v.ln() + b.v * a.d / a.v)
                };
                Dual { v, d }
            }
            Expr::Call(f, a) => {
                let a = a.eval_dual(t);
                match f {
                    Func::Sin => Dual {
                        v: a.v.sin(),
                        d: a.v.cos() * a.d,
                    },
                    Func::Cos => Dual {
                        v: a.v.cos(),
                        d: -a.v.sin() * a.d,
                    },
                    Func::Tan => {
                        let c = a.v.cos();
                        Dual {
                            v: a.v.tan(),
                            d: a.d / (c * c),
                        }
                    }
                    Func::Exp => {
                        let v = a.v.exp();
                        Dual { v, d: v * a.d }
                    }
                    Func::Sqrt => {
                        let v = a.v.sqrt();
                        Dual {
                            v,
                            d: a.d / (T::lit(2.0) * v),
                        }
                    }
                }
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Time => write!(f, "t"),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Pow(a, b) => write!(f, "({a} ^ {b})"),
            Expr::Call(func, a) => {
                let name = match func {
                    Func::Sin => "sin",
                    Func::Cos => "cos",
                    Func::Tan => "tan",
                    Func::Exp => "exp",
                    Func::Sqrt => "sqrt",
                };
                write!(f, "{name}({a})")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
}

fn tokenize(src: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            c if c.is_whitespace() => i += 1,
            '+' | '-' | '*' | '/' | '^' => {
                out.push(Token::Op(c));
                i += 1;
            }
            '(' => {
                out.push(Token::LParen);
                i += 1;
            }
            ')' => {
                out.push(Token::RParen);
                i += 1;
            }
            ',' => {
                out.push(Token::Comma);
                i += 1;
            }
            c if c.is_ascii_digit() || c == '.' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    i += 1;
                }
                // exponent part, e.g. 1e-3
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
                    .map_err(|_| Error::Expression(format!("bad number {text:?}")))?;
                out.push(Token::Num(v));
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                out.push(Token::Ident(chars[start..i].iter().collect()));
            }
            'π' => {
                out.push(Token::Ident("pi".into()));
                i += 1;
            }
            other => return Err(Error::Expression(format!("unexpected character {other:?}"))),
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

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn expect(&mut self, want: Token) -> Result<()> {
        match self.next() {
            Some(t) if t == want => Ok(()),
            other => Err(Error::Expression(format!(
                "expected {want:?}, found {other:?}"
            ))),
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        while let Some(Token::Op(c @ ('+' | '-'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.term()?;
            lhs = if c == '+' {
                Expr::Add(Box::new(lhs), Box::new(rhs))
            } else {
                Expr::Sub(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        while let Some(Token::Op(c @ ('*' | '/'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = if c == '*' {
                Expr::Mul(Box::new(lhs), Box::new(rhs))
            } else {
                Expr::Div(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        match self.peek() {
            Some(Token::Op('-')) => {
                self.pos += 1;
                Ok(Expr::Neg(Box::new(self.unary()?)))
            }
            Some(Token::Op('+')) => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if let Some(Token::Op('^')) = self.peek() {
            self.pos += 1;
            // right-associative
            let exp = self.unary()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.next() {
            Some(Token::Num(v)) => Ok(Expr::Num(v)),
            Some(Token::LParen) => {
                let e = self.expr()?;
                self.expect(Token::RParen)?;
                Ok(e)
            }
            Some(Token::Ident(name)) => match name.as_str() {
                "t" => Ok(Expr::Time),
                "pi" => Ok(Expr::Num(std::f64::consts::PI)),
                "e" => Ok(Expr::Num(std::f64::consts::E)),
                "pow" => {
                    self.expect(Token::LParen)?;
                    let a = self.expr()?;
                    self.expect(Token::Comma)?;
                    let b = self.expr()?;
                    self.expect(Token::RParen)?;
                    Ok(Expr::Pow(Box::new(a), Box::new(b)))
                }
                "sin" | "cos" | "tan" | "exp" | "sqrt" => {
                    let f = match name.as_str() {
                        "sin" => Func::Sin,
                        "cos" => Func::Cos,
                        "tan" => Func::Tan,
                        "exp" => Func::Exp,
                        _ => Func::Sqrt,
                    };
                    self.expect(Token::LParen)?;
                    let a = self.expr()?;
                    self.expect(Token::RParen)?;
                    Ok(Expr::Call(f, Box::new(a)))
                }
                other => Err(Error::Expression(format!("unknown identifier {other:?}"))),
            },
            other => Err(Error::Expression(format!("unexpected token {other:?}"))),
        }
    }
}
