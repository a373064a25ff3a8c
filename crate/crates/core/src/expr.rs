//! A small expression language for test functions of one real variable.
//!
//! Grammar (standard precedence, `^` binds tightest and associates right,
//! unary minus binds looser than `^`):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' unary)?
//! atom   := number | 'x' | ident '(' expr (',' expr)* ')' | '(' expr ')'
//! ```
//!
//! Known functions: `exp sin cos tanh abs` (one argument), `min max`
//! (two), `clamp` (three). Syntax errors carry the byte offset of the
//! offending token.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Sin,
    Cos,
    Tanh,
    Abs,
    Min,
    Max,
    Clamp,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tanh => "tanh",
            Func::Abs => "abs",
            Func::Min => "min",
            Func::Max => "max",
            Func::Clamp => "clamp",
        }
    }

    fn arity(self) -> usize {
        match self {
            Func::Exp | Func::Sin | Func::Cos | Func::Tanh | Func::Abs => 1,
            Func::Min | Func::Max => 2,
            Func::Clamp => 3,
        }
    }

    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "exp" => Func::Exp,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tanh" => Func::Tanh,
            "abs" => Func::Abs,
            "min" => Func::Min,
            "max" => Func::Max,
            "clamp" => Func::Clamp,
            _ => return None,
        })
    }
}

/// Abstract syntax tree of an expression in the variable `x`.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var,
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

impl Expr {
    /// Evaluate at `x`. Evaluation is total with IEEE semantics: division
    /// by zero yields an infinity, `clamp` with an inverted range yields
    /// NaN; consumers that require finite values must check the result.
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Expr::Num(c) => *c,
            Expr::Var => x,
            Expr::Neg(e) => -e.eval(x),
            Expr::Bin(op, a, b) => {
                let (a, b) = (a.eval(x), b.eval(x));
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                    BinOp::Pow => a.powf(b),
                }
            }
            Expr::Call(func, args) => match func {
                Func::Exp => args[0].eval(x).exp(),
                Func::Sin => args[0].eval(x).sin(),
                Func::Cos => args[0].eval(x).cos(),
                Func::Tanh => args[0].eval(x).tanh(),
                Func::Abs => args[0].eval(x).abs(),
                Func::Min => args[0].eval(x).min(args[1].eval(x)),
                Func::Max => args[0].eval(x).max(args[1].eval(x)),
                Func::Clamp => {
                    let v = args[0].eval(x);
                    let lo = args[1].eval(x);
                    let hi = args[2].eval(x);
                    if lo > hi {
                        f64::NAN
                    } else {
                        v.max(lo).min(hi)
                    }
                }
            },
        }
    }

    /// Whether the tree is a bare literal (possibly negated), in which
    /// case its bounds are known exactly.
    pub fn literal_value(&self) -> Option<f64> {
        match self {
            Expr::Num(c) => Some(*c),
            Expr::Neg(e) => e.literal_value().map(|c| -c),
            _ => None,
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Bin(BinOp::Add | BinOp::Sub, ..) => 1,
            Expr::Bin(BinOp::Mul | BinOp::Div, ..) => 2,
            Expr::Neg(_) => 3,
            Expr::Bin(BinOp::Pow, ..) => 4,
            Expr::Num(_) | Expr::Var | Expr::Call(..) => 5,
        }
    }

    fn fmt_prec(&self, f: &mut std::fmt::Formatter<'_>, min_prec: u8) -> std::fmt::Result {
        let prec = self.precedence();
        if prec < min_prec {
            write!(f, "(")?;
        }
        match self {
            Expr::Num(c) => write!(f, "{c:?}")?,
            Expr::Var => write!(f, "x")?,
            Expr::Neg(e) => {
                write!(f, "-")?;
                e.fmt_prec(f, 3)?;
            }
            Expr::Bin(op, a, b) => {
                let (sym, left_min, right_min) = match op {
                    BinOp::Add => (" + ", 1, 2),
                    BinOp::Sub => (" - ", 1, 2),
                    BinOp::Mul => (" * ", 2, 3),
                    BinOp::Div => (" / ", 2, 3),
                    BinOp::Pow => ("^", 5, 4),
                };
                a.fmt_prec(f, left_min)?;
                write!(f, "{sym}")?;
                b.fmt_prec(f, right_min)?;
            }
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    a.fmt_prec(f, 0)?;
                }
                write!(f, ")")?;
            }
        }
        if prec < min_prec {
            write!(f, ")")?;
        }
        Ok(())
    }
}

impl std::fmt::Display for Expr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.fmt_prec(f, 0)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
}

struct Lexer<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            bytes: text.as_bytes(),
            pos: 0,
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    /// Next token with its starting byte offset; `None` at end of input.
    fn next(&mut self) -> Result<Option<(Tok, usize)>> {
        self.skip_ws();
        if self.pos >= self.bytes.len() {
            return Ok(None);
        }
        let start = self.pos;
        let b = self.bytes[start];
        let simple = match b {
            b'+' => Some(Tok::Plus),
            b'-' => Some(Tok::Minus),
            b'*' => Some(Tok::Star),
            b'/' => Some(Tok::Slash),
            b'^' => Some(Tok::Caret),
            b'(' => Some(Tok::LParen),
            b')' => Some(Tok::RParen),
            b',' => Some(Tok::Comma),
            _ => None,
        };
        if let Some(t) = simple {
            self.pos += 1;
            return Ok(Some((t, start)));
        }
        if b.is_ascii_digit() || b == b'.' {
            let mut end = start;
            while end < self.bytes.len() && (self.bytes[end].is_ascii_digit() || self.bytes[end] == b'.') {
                end += 1;
            }
            if end < self.bytes.len() && (self.bytes[end] == b'e' || self.bytes[end] == b'E') {
                let mut exp_end = end + 1;
                if exp_end < self.bytes.len() && (self.bytes[exp_end] == b'+' || self.bytes[exp_end] == b'-') {
                    exp_end += 1;
                }
                if exp_end < self.bytes.len() && self.bytes[exp_end].is_ascii_digit() {
                    while exp_end < self.bytes.len() && self.bytes[exp_end].is_ascii_digit() {
                        exp_end += 1;
                    }
                    end = exp_end;
                }
            }
            let text = std::str::from_utf8(&self.bytes[start..end]).expect("ascii");
            let value: f64 = text.parse().map_err(|_| Error::Parse {
                offset: start,
                message: format!("malformed number `{text}`"),
            })?;
            self.pos = end;
            return Ok(Some((Tok::Num(value), start)));
        }
        if b.is_ascii_alphabetic() || b == b'_' {
            let mut end = start;
            while end < self.bytes.len()
                && (self.bytes[end].is_ascii_alphanumeric() || self.bytes[end] == b'_')
            {
                end += 1;
            }
            let text = std::str::from_utf8(&self.bytes[start..end]).expect("ascii");
            self.pos = end;
            return Ok(Some((Tok::Ident(text.to_string()), start)));
        }
        Err(Error::Parse {
            offset: start,
            message: format!("unexpected byte 0x{b:02x}"),
        })
    }
}

struct Parser {
    tokens: Vec<(Tok, usize)>,
    index: usize,
    end_offset: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.index).map(|(t, _)| t)
    }

    fn offset(&self) -> usize {
        self.tokens
            .get(self.index)
            .map(|(_, o)| *o)
            .unwrap_or(self.end_offset)
    }

    fn advance(&mut self) -> Option<Tok> {
        let t = self.tokens.get(self.index).map(|(t, _)| t.clone());
        if t.is_some() {
            self.index += 1;
        }
        t
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<()> {
        if self.peek() == Some(&tok) {
            self.index += 1;
            Ok(())
        } else {
            Err(Error::Parse {
                offset: self.offset(),
                message: format!("expected {what}"),
            })
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Plus) => BinOp::Add,
                Some(Tok::Minus) => BinOp::Sub,
                _ => break,
            };
            self.index += 1;
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Star) => BinOp::Mul,
                Some(Tok::Slash) => BinOp::Div,
                _ => break,
            };
            self.index += 1;
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.peek() == Some(&Tok::Minus) {
            self.index += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.peek() == Some(&Tok::Caret) {
            self.index += 1;
            let exponent = self.unary()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        let offset = self.offset();
        match self.advance() {
            Some(Tok::Num(v)) => Ok(Expr::Num(v)),
            Some(Tok::Ident(name)) => {
                if name == "x" {
                    return Ok(Expr::Var);
                }
                let func = Func::from_name(&name).ok_or_else(|| Error::Parse {
                    offset,
                    message: format!("unknown identifier `{name}`"),
                })?;
                self.expect(Tok::LParen, "`(` after function name")?;
                let mut args = vec![self.expr()?];
                while self.peek() == Some(&Tok::Comma) {
                    self.index += 1;
                    args.push(self.expr()?);
                }
                self.expect(Tok::RParen, "`)` closing the argument list")?;
                if args.len() != func.arity() {
                    return Err(Error::Parse {
                        offset,
                        message: format!(
                            "{} takes {} argument(s), got {}",
                            func.name(),
                            func.arity(),
                            args.len()
                        ),
                    });
                }
                Ok(Expr::Call(func, args))
            }
            Some(Tok::LParen) => {
                let inner = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(inner)
            }
            Some(tok) => Err(Error::Parse {
                offset,
                message: format!("unexpected token {tok:?}"),
            }),
            None => Err(Error::Parse {
                offset,
                message: "unexpected end of input".into(),
            }),
        }
    }
}

/// Parse an expression, rejecting trailing garbage.
pub fn parse_expr(text: &str) -> Result<Expr> {
    let mut lexer = Lexer::new(text);
    let mut tokens = Vec::new();
    while let Some(t) = lexer.next()? {
        tokens.push(t);
    }
    let mut parser = Parser {
        tokens,
        index: 0,
        end_offset: text.len(),
    };
    let expr = parser.expr()?;
    if parser.index != parser.tokens.len() {
        return Err(Error::Parse {
            offset: parser.offset(),
            message: "trailing input after expression".into(),
        });
    }
    Ok(expr)
}

/// Where a pair of (sup, Lipschitz) bounds came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundsOrigin {
    /// Exact, from a literal constant.
    Exact,
    /// Estimated by sampling, with a 1.25 safety factor.
    Sampled,
}

/// Conservative bounds for an expression on a working radius.
#[derive(Debug, Clone, Copy)]
pub struct SampledBounds {
    pub sup: f64,
    pub lipschitz: f64,
    pub origin: BoundsOrigin,
    /// Set when the sampled magnitude keeps growing toward the edge of the
    /// sampling window, which disqualifies the function from bounded-mode
    /// (grid) use.
    pub growth_detected: bool,
}

/// Number of sample points used by [`infer_bounds`].
pub const BOUND_SAMPLES: usize = 10_000;

/// Safety factor applied to sampled bounds.
pub const BOUND_SAFETY: f64 = 1.25;

/// Estimate sup-norm and Lipschitz bounds for `e` by sampling
/// [`BOUND_SAMPLES`] points on `[-2L, 2L]` and applying [`BOUND_SAFETY`].
///
/// Bare literals are bounded exactly. A non-finite sample rejects the
/// function for bounded-mode use. Growth toward the window edge (outer
/// maximum exceeding the inner maximum by more than 5%) sets
/// `growth_detected`.
pub fn infer_bounds(e: &Expr, radius: f64) -> Result<SampledBounds> {
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::Parameter(format!(
            "bounds radius must be positive, got {radius}"
        )));
    }
    if let Some(c) = e.literal_value() {
        return Ok(SampledBounds {
            sup: c.abs(),
            lipschitz: 0.0,
            origin: BoundsOrigin::Exact,
            growth_detected: false,
        });
    }
    let lo = -2.0 * radius;
    let step = 4.0 * radius / (BOUND_SAMPLES - 1) as f64;
    let mut sup_inner = 0.0f64;
    let mut sup_outer = 0.0f64;
    let mut lipschitz = 0.0f64;
    let mut prev = f64::NAN;
    for i in 0..BOUND_SAMPLES {
        let x = lo + i as f64 * step;
        let v = e.eval(x);
        if !v.is_finite() {
            return Err(Error::Parameter(format!(
                "`{e}` evaluates to {v} at x = {x}; rejected for bounded-mode use"
            )));
        }
        if x.abs() <= radius {
            sup_inner = sup_inner.max(v.abs());
        } else {
            sup_outer = sup_outer.max(v.abs());
        }
        if i > 0 {
            lipschitz = lipschitz.max((v - prev).abs() / step);
        }
        prev = v;
    }
    Ok(SampledBounds {
        sup: BOUND_SAFETY * sup_inner.max(sup_outer),
        lipschitz: BOUND_SAFETY * lipschitz,
        origin: BoundsOrigin::Sampled,
        growth_detected: sup_outer > 1.05 * sup_inner,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn eval(text: &str, x: f64) -> f64 {
        parse_expr(text).unwrap().eval(x)
    }

    #[test]
    fn basic_evaluation() {
        assert_eq!(eval("x", 3.0), 3.0);
        assert_eq!(eval("clamp(x^2, 0, 25)", 7.0), 25.0);
        assert!((eval("cos(x) + 0.5*sin(2*x)", 0.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn precedence() {
        assert_eq!(eval("2+3*4", 0.0), 14.0);
        assert_eq!(eval("2^3^2", 0.0), 512.0);
        // unary minus binds looser than `^`
        assert_eq!(eval("-x^2", 3.0), -9.0);
        assert_eq!(eval("2*3^2", 0.0), 18.0);
        assert_eq!(eval("10 - 4 - 3", 0.0), 3.0);
        assert_eq!(eval("16 / 4 / 2", 0.0), 2.0);
        assert_eq!(eval("2^-1", 0.0), 0.5);
    }

    #[test]
    fn errors_carry_offsets() {
        match parse_expr("2 +* 3") {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        match parse_expr("foo(x)") {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 0),
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(parse_expr("min(x)").is_err());
        assert!(parse_expr("cos(x, 1)").is_err());
        assert!(parse_expr("1 + ").is_err());
        assert!(parse_expr("(1 + 2").is_err());
        assert!(parse_expr("1 2").is_err());
        assert!(parse_expr("").is_err());
    }

    #[test]
    fn ieee_eval_semantics() {
        assert!(eval("1/x", 0.0).is_infinite());
        assert!(eval("clamp(x, 2, 1)", 0.0).is_nan());
    }

    #[test]
    fn infer_bounds_examples() {
        // a literal is bounded exactly
        let b = infer_bounds(&parse_expr("2").unwrap(), 10.0).unwrap();
        assert_eq!(b.sup, 2.0);
        assert_eq!(b.lipschitz, 0.0);
        assert_eq!(b.origin, BoundsOrigin::Exact);
        // sampled bounds for cos stay within the 1.25 safety factor
        let b = infer_bounds(&parse_expr("cos(x)").unwrap(), 10.0).unwrap();
        assert!(b.sup >= 1.0 && b.sup <= 1.25 + 1e-9);
        assert!(b.lipschitz >= 0.99 && b.lipschitz <= 1.25 + 1e-9);
        assert!(!b.growth_detected);
        // the identity keeps growing: flagged, M around 25 on radius 10
        let b = infer_bounds(&parse_expr("x").unwrap(), 10.0).unwrap();
        assert!(b.growth_detected);
        assert!((b.sup - 25.0).abs() < 0.1);
        // tanh saturates: not flagged
        let b = infer_bounds(&parse_expr("tanh(x)").unwrap(), 10.0).unwrap();
        assert!(!b.growth_detected);
        // non-finite samples are rejected
        assert!(infer_bounds(&parse_expr("1/(x-x)").unwrap(), 10.0).is_err());
    }

    fn arb_expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![
            (0u32..1000).prop_map(|n| Expr::Num(n as f64 / 8.0)),
            Just(Expr::Var),
        ];
        leaf.prop_recursive(4, 48, 3, |inner| {
            prop_oneof![
                inner.clone().prop_map(|e| Expr::Neg(Box::new(e))),
                (inner.clone(), inner.clone(), 0u8..5).prop_map(|(a, b, op)| {
                    let op = [BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div, BinOp::Pow]
                        [op as usize];
                    Expr::Bin(op, Box::new(a), Box::new(b))
                }),
                inner.clone().prop_map(|e| Expr::Call(Func::Cos, vec![e])),
                inner.clone().prop_map(|e| Expr::Call(Func::Abs, vec![e])),
                (inner.clone(), inner.clone())
                    .prop_map(|(a, b)| Expr::Call(Func::Max, vec![a, b])),
                (inner.clone(), inner.clone(), inner)
                    .prop_map(|(a, b, c)| Expr::Call(Func::Clamp, vec![a, b, c])),
            ]
        })
    }

    proptest! {
        #[test]
        fn pretty_print_round_trips(e in arb_expr()) {
            let printed = e.to_string();
            let reparsed = parse_expr(&printed).unwrap();
            prop_assert_eq!(reparsed, e);
        }

        #[test]
        fn fuzzed_bytes_never_panic(bytes in proptest::collection::vec(any::<u8>(), 0..64)) {
            if let Ok(text) = std::str::from_utf8(&bytes) {
                let _ = parse_expr(text);
            }
        }
    }
}
