//! Coefficient formula mini-language.
//!
//! Grammar (one variable `n`, the constant `pi`, five functions):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' unary)?
//! primary := number | 'n' | 'pi' | func '(' expr (',' expr)* ')' | '(' expr ')'
//! func    := 'sin' | 'cos' | 'ln' | 'exp' | 'pow'
//! ```
//!
//! `^` is right associative and binds tighter than unary minus, so `-n^2`
//! is `-(n^2)`.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Ln,
    Exp,
    Pow,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "ln" => Func::Ln,
            "exp" => Func::Exp,
            "pow" => Func::Pow,
            _ => return None,
        })
    }

    fn arity(self) -> usize {
        match self {
            Func::Pow => 2,
            _ => 1,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Ln => "ln",
            Func::Exp => "exp",
            Func::Pow => "pow",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

/// Parsed expression tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    N,
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

impl Expr {
    pub fn eval(&self, n: f64) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::N => n,
            Expr::Neg(e) => -e.eval(n),
            Expr::Bin(op, a, b) => {
                let (a, b) = (a.eval(n), b.eval(n));
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                    BinOp::Pow => a.powf(b),
                }
            }
            Expr::Call(f, args) => match f {
                Func::Sin => args[0].eval(n).sin(),
                Func::Cos => args[0].eval(n).cos(),
                Func::Ln => args[0].eval(n).ln(),
                Func::Exp => args[0].eval(n).exp(),
                Func::Pow => args[0].eval(n).powf(args[1].eval(n)),
            },
        }
    }

    pub fn depends_on_n(&self) -> bool {
        match self {
            Expr::Num(_) => false,
            Expr::N => true,
            Expr::Neg(e) => e.depends_on_n(),
            Expr::Bin(_, a, b) => a.depends_on_n() || b.depends_on_n(),
            Expr::Call(_, args) => args.iter().any(Expr::depends_on_n),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v}"),
            Expr::N => write!(f, "n"),
            Expr::Neg(e) => write!(f, "(-{e})"),
            Expr::Bin(op, a, b) => {
                let sym = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                    BinOp::Pow => "^",
                };
                write!(f, "({a} {sym} {b})")
            }
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExprErrorKind {
    Syntax,
    UnknownFunction,
    Arity,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{column}: {message}")]
pub struct ExprError {
    pub kind: ExprErrorKind,
    pub line: usize,
    pub column: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
    End,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

fn lex(src: &str, line0: usize, col0: usize) -> Result<Vec<Token>, ExprError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut line, mut col) = (line0, col0);
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        if c == '\n' {
            line += 1;
            col = 1;
            i += 1;
            continue;
        }
        if c.is_whitespace() {
            col += 1;
            i += 1;
            continue;
        }
        let start = i;
        let tok = if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
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
            let v = text.parse::<f64>().map_err(|_| ExprError {
                kind: ExprErrorKind::Syntax,
                line: tl,
                column: tc,
                message: format!("malformed number `{text}`"),
            })?;
            Tok::Num(v)
        } else if c.is_ascii_alphabetic() || c == '_' {
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            Tok::Ident(chars[start..i].iter().collect())
        } else {
            i += 1;
            match c {
                '+' | '-' | '*' | '/' | '^' => Tok::Op(c),
                '\u{2212}' => Tok::Op('-'),
                '\u{00d7}' => Tok::Op('*'),
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                ',' => Tok::Comma,
                _ => {
                    return Err(ExprError {
                        kind: ExprErrorKind::Syntax,
                        line: tl,
                        column: tc,
                        message: format!("unexpected character `{c}`"),
                    })
                }
            }
        };
        col += i - start;
        out.push(Token { tok, line: tl, column: tc });
    }
    out.push(Token { tok: Tok::End, line, column: col });
    Ok(out)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn next(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err(t: &Token, kind: ExprErrorKind, message: String) -> ExprError {
        ExprError { kind, line: t.line, column: t.column, message }
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), ExprError> {
        let t = self.next();
        if t.tok == want {
            Ok(())
        } else {
            Err(Self::err(&t, ExprErrorKind::Syntax, format!("expected {what}, found {}", describe(&t.tok))))
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek().tok {
                Tok::Op('+') => BinOp::Add,
                Tok::Op('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.next();
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek().tok {
                Tok::Op('*') => BinOp::Mul,
                Tok::Op('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.next();
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if self.peek().tok == Tok::Op('-') {
            self.next();
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.primary()?;
        if self.peek().tok == Tok::Op('^') {
            self.next();
            let exp = self.unary()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, ExprError> {
        let t = self.next();
        match &t.tok {
            Tok::Num(v) => Ok(Expr::Num(*v)),
            Tok::LParen => {
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Tok::Ident(name) if name == "n" => Ok(Expr::N),
            Tok::Ident(name) if name == "pi" => Ok(Expr::Num(std::f64::consts::PI)),
            Tok::Ident(name) => {
                if self.peek().tok != Tok::LParen {
                    return Err(Self::err(&t, ExprErrorKind::Syntax, format!("unknown identifier `{name}`")));
                }
                let func = Func::from_name(name).ok_or_else(|| {
                    Self::err(&t, ExprErrorKind::UnknownFunction, format!("unknown function `{name}`"))
                })?;
                self.next();
                let mut args = vec![self.expr()?];
                while self.peek().tok == Tok::Comma {
                    self.next();
                    args.push(self.expr()?);
                }
                self.expect(Tok::RParen, "`)`")?;
                if args.len() != func.arity() {
                    return Err(Self::err(
                        &t,
                        ExprErrorKind::Arity,
                        format!("`{name}` takes {} argument(s), got {}", func.arity(), args.len()),
                    ));
                }
                Ok(Expr::Call(func, args))
            }
            other => Err(Self::err(&t, ExprErrorKind::Syntax, format!("unexpected {}", describe(other)))),
        }
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Num(v) => format!("number {v}"),
        Tok::Ident(s) => format!("identifier `{s}`"),
        Tok::Op(c) => format!("`{c}`"),
        Tok::LParen => "`(`".into(),
        Tok::RParen => "`)`".into(),
        Tok::Comma => "`,`".into(),
        Tok::End => "end of input".into(),
    }
}

/// Parses a formula. Error positions are 1-based within `src`.
pub fn parse(src: &str) -> Result<Expr, ExprError> {
    parse_at(src, 1, 1)
}

/// Parses a formula that starts at `line`, `column` of some enclosing
/// document, so error positions point into that document.
pub fn parse_at(src: &str, line: usize, column: usize) -> Result<Expr, ExprError> {
    let toks = lex(src, line, column)?;
    let mut p = Parser { toks, pos: 0 };
    let e = p.expr()?;
    let t = p.peek().clone();
    if t.tok != Tok::End {
        return Err(Parser::err(&t, ExprErrorKind::Syntax, format!("unexpected {}", describe(&t.tok))));
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(s: &str, n: f64) -> f64 {
        parse(s).unwrap().eval(n)
    }

    #[test]
    fn precedence() {
        assert_eq!(ev("1 + 2 * 3", 0.0), 7.0);
        assert_eq!(ev("(1 + 2) * 3", 0.0), 9.0);
        assert_eq!(ev("-n^2", 3.0), -9.0);
        assert_eq!(ev("2^3^2", 0.0), 512.0);
        assert_eq!(ev("8 / 4 / 2", 0.0), 1.0);
        assert_eq!(ev("n - 1 - 1", 5.0), 3.0);
        assert_eq!(ev("2 * -n", 4.0), -8.0);
    }

    #[test]
    fn functions_and_constants() {
        assert!((ev("sin(pi / 2)", 0.0) - 1.0).abs() < 1e-15);
        assert_eq!(ev("ln(1)", 0.0), 0.0);
        assert_eq!(ev("exp(0) + cos(0)", 0.0), 2.0);
        assert_eq!(ev("pow(2, n)", 10.0), 1024.0);
        assert_eq!(ev("1.5e2", 0.0), 150.0);
        assert_eq!(ev("3 \u{00d7} 2 \u{2212} 1", 0.0), 5.0);
    }

    #[test]
    fn shifted_exponent_formula() {
        let e = parse("exp(n*sin(ln(n)) - (n+1)*sin(ln(n+1)))").unwrap();
        for n in 1..20 {
            let n = n as f64;
            let want = (n * n.ln().sin() - (n + 1.0) * (n + 1.0).ln().sin()).exp();
            assert_eq!(e.eval(n), want);
        }
        assert!(e.depends_on_n());
        assert!(!parse("exp(2) * 3").unwrap().depends_on_n());
    }

    #[test]
    fn error_positions() {
        let e = parse("sin(n) + foo(n)").unwrap_err();
        assert_eq!(e.kind, ExprErrorKind::UnknownFunction);
        assert_eq!((e.line, e.column), (1, 10));

        let e = parse("1 +\n  * 2").unwrap_err();
        assert_eq!(e.kind, ExprErrorKind::Syntax);
        assert_eq!((e.line, e.column), (2, 3));

        let e = parse("pow(n)").unwrap_err();
        assert_eq!(e.kind, ExprErrorKind::Arity);

        let e = parse_at("n $", 4, 10).unwrap_err();
        assert_eq!((e.line, e.column), (4, 12));

        assert!(parse("(n + 1").is_err());
        assert!(parse("n n").is_err());
        assert!(parse("x").is_err());
        assert!(parse("").is_err());
    }

    #[test]
    fn display_round_trips() {
        let src = "exp(2*((n+1)*sin(ln(n+1)) - n*sin(ln(n))))";
        let e = parse(src).unwrap();
        let again = parse(&e.to_string()).unwrap();
        for n in 1..10 {
            assert_eq!(e.eval(n as f64), again.eval(n as f64));
        }
    }
}
