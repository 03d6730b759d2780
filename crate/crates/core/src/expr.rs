//! Closed-form expression trees with exact symbolic differentiation.
//!
//! Expressions are written in a small infix language:
//!
//! ```text
//! expr    := sum
//! sum     := product (('+' | '-') product)*
//! product := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := atom ('^' unary)?
//! atom    := number | name | name '(' expr (',' expr)* ')' | '(' expr ')'
//! ```
//!
//! Names resolve, in order, to variables of the parsing context, to named
//! parameters (bound to their numeric value at parse time), and to the
//! constants `pi` and `e`. Functions: `sin cos tan exp ln sqrt abs atan2 pow`.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Ln,
    Sqrt,
    Abs,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
        }
    }

    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "exp" => Func::Exp,
            "ln" => Func::Ln,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            _ => return None,
        })
    }

    fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Func::Sin => x.sin(),
            Func::Cos => x.cos(),
            Func::Tan => x.tan(),
            Func::Exp => x.exp(),
            Func::Ln => x.ln(),
            Func::Sqrt => x.sqrt(),
            Func::Abs => x.abs(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
    Atan2(Box<Expr>, Box<Expr>),
}

use Expr::*;

// Simplifying constructors. They fold constants and drop neutral elements
// and nothing else, so building bottom-up is idempotent.

pub fn constant(c: f64) -> Expr {
    Const(c)
}

pub fn var(i: usize) -> Expr {
    Var(i)
}

pub fn neg(a: Expr) -> Expr {
    match a {
        Const(c) => Const(-c),
        Neg(inner) => *inner,
        other => Neg(Box::new(other)),
    }
}

pub fn add(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Const(x), Const(y)) => Const(x + y),
        (Const(z), e) | (e, Const(z)) if z == 0.0 => e,
        (a, b) => Add(Box::new(a), Box::new(b)),
    }
}

pub fn sub(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Const(x), Const(y)) => Const(x - y),
        (e, Const(z)) if z == 0.0 => e,
        (Const(z), e) if z == 0.0 => neg(e),
        (a, b) => Sub(Box::new(a), Box::new(b)),
    }
}

pub fn mul(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Const(x), Const(y)) => Const(x * y),
        (Const(z), _) | (_, Const(z)) if z == 0.0 => Const(0.0),
        (Const(o), e) | (e, Const(o)) if o == 1.0 => e,
        (Const(m), e) | (e, Const(m)) if m == -1.0 => neg(e),
        (a, b) => Mul(Box::new(a), Box::new(b)),
    }
}

pub fn div(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Const(x), Const(y)) if y != 0.0 => Const(x / y),
        (Const(z), _) if z == 0.0 => Const(0.0),
        (e, Const(o)) if o == 1.0 => e,
        (a, b) => Div(Box::new(a), Box::new(b)),
    }
}

pub fn pow(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Const(x), Const(y)) => Const(x.powf(y)),
        (_, Const(z)) if z == 0.0 => Const(1.0),
        (e, Const(o)) if o == 1.0 => e,
        (a, b) => Pow(Box::new(a), Box::new(b)),
    }
}

pub fn call(f: Func, a: Expr) -> Expr {
    match a {
        Const(c) => Const(f.apply(c)),
        other => Call(f, Box::new(other)),
    }
}

pub fn atan2(y: Expr, x: Expr) -> Expr {
    match (y, x) {
        (Const(a), Const(b)) => Const(a.atan2(b)),
        (y, x) => Atan2(Box::new(y), Box::new(x)),
    }
}

pub fn sin(a: Expr) -> Expr {
    call(Func::Sin, a)
}

pub fn cos(a: Expr) -> Expr {
    call(Func::Cos, a)
}

pub fn sqrt(a: Expr) -> Expr {
    call(Func::Sqrt, a)
}

impl Expr {
    /// Parses `text` with the given variable names and named parameters.
    pub fn parse(text: &str, vars: &[&str], params: &BTreeMap<String, f64>) -> Result<Expr> {
        let tokens = lex(text)?;
        let mut p = Parser {
            tokens,
            pos: 0,
            vars,
            params,
            text,
        };
        let e = p.sum()?;
        if p.pos != p.tokens.len() {
            return Err(p.error("trailing input"));
        }
        Ok(e)
    }

    pub fn eval<T: Scalar>(&self, vars: &[T]) -> T {
        match self {
            Const(c) => T::lit(*c),
            Var(i) => vars[*i],
            Neg(a) => -a.eval(vars),
            Add(a, b) => a.eval(vars) + b.eval(vars),
            Sub(a, b) => a.eval(vars) - b.eval(vars),
            Mul(a, b) => a.eval(vars) * b.eval(vars),
            Div(a, b) => a.eval(vars) / b.eval(vars),
            Pow(a, b) => {
                let base = a.eval(vars);
                match **b {
                    Const(c) if c.fract() == 0.0 && c.abs() <= 64.0 => base.powi(c as i32),
                    Const(c) if c == 0.5 => base.sqrt(),
                    _ => base.powf(b.eval(vars)),
                }
            }
            Call(f, a) => f.apply(a.eval(vars)),
            Atan2(y, x) => y.eval(vars).atan2(x.eval(vars)),
        }
    }

    /// Exact partial derivative with respect to variable `i`.
    pub fn diff(&self, i: usize) -> Expr {
        match self {
            Const(_) => Const(0.0),
            Var(j) => Const(if *j == i { 1.0 } else { 0.0 }),
            Neg(a) => neg(a.diff(i)),
            Add(a, b) => add(a.diff(i), b.diff(i)),
            Sub(a, b) => sub(a.diff(i), b.diff(i)),
            Mul(a, b) => add(
                mul(a.diff(i), (**b).clone()),
                mul((**a).clone(), b.diff(i)),
            ),
            Div(a, b) => {
                // (a' b - a b') / b^2
                let num = sub(
                    mul(a.diff(i), (**b).clone()),
                    mul((**a).clone(), b.diff(i)),
                );
                div(num, pow((**b).clone(), Const(2.0)))
            }
            Pow(a, b) => {
                let da = a.diff(i);
                let db = b.diff(i);
                if let Const(c) = **b {
                    mul(
                        mul(Const(c), pow((**a).clone(), Const(c - 1.0))),
                        da,
                    )
                } else {
                    // a^b (b' ln a + b a' / a)
                    let inner = add(
                        mul(db, call(Func::Ln, (**a).clone())),
                        div(mul((**b).clone(), da), (**a).clone()),
                    );
                    mul(self.clone(), inner)
                }
            }
            Call(f, a) => {
                let da = a.diff(i);
                if da == Const(0.0) {
                    return Const(0.0);
                }
                let a = (**a).clone();
                let outer = match f {
                    Func::Sin => cos(a),
                    Func::Cos => neg(sin(a)),
                    Func::Tan => div(Const(1.0), pow(cos(a), Const(2.0))),
                    Func::Exp => call(Func::Exp, a),
                    Func::Ln => div(Const(1.0), a),
                    Func::Sqrt => div(Const(0.5), sqrt(a)),
                    Func::Abs => div(a.clone(), call(Func::Abs, a)),
                };
                mul(outer, da)
            }
            Atan2(y, x) => {
                // (x y' - y x') / (x^2 + y^2)
                let num = sub(
                    mul((**x).clone(), y.diff(i)),
                    mul((**y).clone(), x.diff(i)),
                );
                let den = add(
                    pow((**x).clone(), Const(2.0)),
                    pow((**y).clone(), Const(2.0)),
                );
                div(num, den)
            }
        }
    }

    /// Replaces every variable `i` by `subs[i]`.
    pub fn substitute(&self, subs: &[Expr]) -> Expr {
        match self {
            Const(c) => Const(*c),
            Var(j) => subs[*j].clone(),
            Neg(a) => neg(a.substitute(subs)),
            Add(a, b) => add(a.substitute(subs), b.substitute(subs)),
            Sub(a, b) => sub(a.substitute(subs), b.substitute(subs)),
            Mul(a, b) => mul(a.substitute(subs), b.substitute(subs)),
            Div(a, b) => div(a.substitute(subs), b.substitute(subs)),
            Pow(a, b) => pow(a.substitute(subs), b.substitute(subs)),
            Call(f, a) => call(*f, a.substitute(subs)),
            Atan2(y, x) => atan2(y.substitute(subs), x.substitute(subs)),
        }
    }

    /// Largest variable index referenced, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Const(_) => None,
            Var(j) => Some(*j),
            Neg(a) | Call(_, a) => a.max_var(),
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) | Pow(a, b) | Atan2(a, b) => {
                a.max_var().max(b.max_var())
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Const(c) if *c == 0.0)
    }

    /// Renders the expression with the given variable names; the output
    /// parses back to the same tree.
    pub fn display<'a>(&'a self, names: &'a [&'a str]) -> Display<'a> {
        Display { expr: self, names }
    }

    fn precedence(&self) -> u8 {
        match self {
            Add(..) | Sub(..) => 1,
            Mul(..) | Div(..) => 2,
            Neg(_) => 3,
            Const(c) if *c < 0.0 || (*c == 0.0 && c.is_sign_negative()) => 3,
            Pow(..) => 4,
            _ => 5,
        }
    }
}

pub struct Display<'a> {
    expr: &'a Expr,
    names: &'a [&'a str],
}

impl Display<'_> {
    fn child<'b>(&'b self, e: &'b Expr) -> Display<'b> {
        Display {
            expr: e,
            names: self.names,
        }
    }

    fn wrap(&self, f: &mut fmt::Formatter<'_>, e: &Expr, parens: bool) -> fmt::Result {
        if parens {
            write!(f, "({})", self.child(e))
        } else {
            write!(f, "{}", self.child(e))
        }
    }

    fn binary(&self, f: &mut fmt::Formatter<'_>, op: &str, a: &Expr, b: &Expr) -> fmt::Result {
        let p = self.expr.precedence();
        self.wrap(f, a, a.precedence() < p)?;
        write!(f, " {op} ")?;
        // left-associative: equal precedence on the right needs parentheses
        self.wrap(f, b, b.precedence() <= p)
    }
}

impl fmt::Display for Display<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.expr {
            Const(c) => write!(f, "{c}"),
            Var(i) => match self.names.get(*i) {
                Some(n) => write!(f, "{n}"),
                None => write!(f, "_{i}"),
            },
            Neg(a) => {
                write!(f, "-")?;
                self.wrap(f, a, a.precedence() < 3 || matches!(**a, Neg(_) | Const(_)))
            }
            Add(a, b) => self.binary(f, "+", a, b),
            Sub(a, b) => self.binary(f, "-", a, b),
            Mul(a, b) => self.binary(f, "*", a, b),
            Div(a, b) => self.binary(f, "/", a, b),
            Pow(a, b) => {
                self.wrap(f, a, a.precedence() < 5)?;
                write!(f, "^")?;
                self.wrap(f, b, b.precedence() < 5)
            }
            Call(func, a) => write!(f, "{}({})", func.name(), self.child(a)),
            Atan2(y, x) => write!(f, "atan2({}, {})", self.child(y), self.child(x)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    i = j;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let s = &text[start..i];
            let v: f64 = s.parse().map_err(|_| Error::Parse {
                pos: start,
                msg: format!("bad number `{s}`"),
            })?;
            out.push((Tok::Num(v), start));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((Tok::Ident(text[start..i].to_string()), start));
        } else if "+-*/^(),".contains(c) {
            out.push((Tok::Op(c), i));
            i += 1;
        } else {
            return Err(Error::Parse {
                pos: i,
                msg: format!("unexpected character `{c}`"),
            });
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<(Tok, usize)>,
    pos: usize,
    vars: &'a [&'a str],
    params: &'a BTreeMap<String, f64>,
    text: &'a str,
}

impl Parser<'_> {
    fn error(&self, msg: &str) -> Error {
        let pos = self
            .tokens
            .get(self.pos)
            .map_or(self.text.len(), |t| t.1);
        Error::Parse {
            pos,
            msg: msg.to_string(),
        }
    }

    fn peek_op(&self) -> Option<char> {
        match self.tokens.get(self.pos) {
            Some((Tok::Op(c), _)) => Some(*c),
            _ => None,
        }
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.peek_op() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(&format!("expected `{c}`")))
        }
    }

    fn sum(&mut self) -> Result<Expr> {
        let mut lhs = self.product()?;
        while let Some(op @ ('+' | '-')) = self.peek_op() {
            self.pos += 1;
            let rhs = self.product()?;
            lhs = if op == '+' { add(lhs, rhs) } else { sub(lhs, rhs) };
        }
        Ok(lhs)
    }

    fn product(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        while let Some(op @ ('*' | '/')) = self.peek_op() {
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = if op == '*' { mul(lhs, rhs) } else { div(lhs, rhs) };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.peek_op() == Some('-') {
            self.pos += 1;
            return Ok(neg(self.unary()?));
        }
        if self.peek_op() == Some('+') {
            self.pos += 1;
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.peek_op() == Some('^') {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(pow(base, exp));
        }
        Ok(base)
    }

    fn args(&mut self) -> Result<Vec<Expr>> {
        self.expect('(')?;
        let mut out = vec![self.sum()?];
        while self.peek_op() == Some(',') {
            self.pos += 1;
            out.push(self.sum()?);
        }
        self.expect(')')?;
        Ok(out)
    }

    fn atom(&mut self) -> Result<Expr> {
        let Some((tok, _)) = self.tokens.get(self.pos).cloned() else {
            return Err(self.error("unexpected end of input"));
        };
        match tok {
            Tok::Num(v) => {
                self.pos += 1;
                Ok(Const(v))
            }
            Tok::Op('(') => {
                self.pos += 1;
                let e = self.sum()?;
                self.expect(')')?;
                Ok(e)
            }
            Tok::Ident(name) => {
                self.pos += 1;
                if self.peek_op() == Some('(') {
                    let at = self.pos;
                    let mut args = self.args()?;
                    let arity = |n: usize, args: &Vec<Expr>, p: &Self| {
                        if args.len() == n {
                            Ok(())
                        } else {
                            Err(Error::Parse {
                                pos: p.tokens[at].1,
                                msg: format!("`{name}` takes {n} argument(s)"),
                            })
                        }
                    };
                    return match name.as_str() {
                        "atan2" => {
                            arity(2, &args, self)?;
                            let x = args.pop().unwrap();
                            Ok(atan2(args.pop().unwrap(), x))
                        }
                        "pow" => {
                            arity(2, &args, self)?;
                            let b = args.pop().unwrap();
                            Ok(pow(args.pop().unwrap(), b))
                        }
                        other => match Func::from_name(other) {
                            Some(f) => {
                                arity(1, &args, self)?;
                                Ok(call(f, args.pop().unwrap()))
                            }
                            None => Err(Error::Parse {
                                pos: self.tokens[at - 1].1,
                                msg: format!("unknown function `{other}`"),
                            }),
                        },
                    };
                }
                if let Some(i) = self.vars.iter().position(|v| *v == name) {
                    return Ok(Var(i));
                }
                if let Some(v) = self.params.get(&name) {
                    return Ok(Const(*v));
                }
                match name.as_str() {
                    "pi" => Ok(Const(std::f64::consts::PI)),
                    "e" => Ok(Const(std::f64::consts::E)),
                    _ => {
                        self.pos -= 1;
                        Err(self.error(&format!("unknown symbol `{name}`")))
                    }
                }
            }
            Tok::Op(c) => Err(self.error(&format!("unexpected `{c}`"))),
        }
    }
}
