//! Recursive-descent parser for the expression grammar.
//!
//! Grammar (highest precedence last):
//!
//! ```text
//! expr   := term (('+' | '-') term)*            left associative
//! term   := unary (('*' | '/') unary)*          left associative
//! unary  := '-' unary | power
//! power  := atom ('^' integer)*
//! atom   := number | ident | ident '(' expr ')' | '(' expr ')'
//! ```
//!
//! `^` binds tighter than unary minus, so `-x^2` reads as `-(x^2)`. The
//! identifier `t` is reserved for the simulation time. Function names are
//! limited to `sin`, `cos`, `tan`, `exp`.

use super::{ExprError, Expression};

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer { src, pos: 0 }
    }

    fn error(&self, message: impl Into<String>) -> ExprError {
        ExprError::Syntax {
            position: self.pos,
            message: message.into(),
        }
    }

    fn tokens(mut self) -> Result<Vec<(usize, Token)>, ExprError> {
        let bytes = self.src.as_bytes();
        let mut out = Vec::new();
        while self.pos < bytes.len() {
            let start = self.pos;
            let c = bytes[self.pos] as char;
            match c {
                ' ' | '\t' | '\r' | '\n' => {
                    self.pos += 1;
                }
                '+' => {
                    out.push((start, Token::Plus));
                    self.pos += 1;
                }
                '-' => {
                    out.push((start, Token::Minus));
                    self.pos += 1;
                }
                '*' => {
                    out.push((start, Token::Star));
                    self.pos += 1;
                }
                '/' => {
                    out.push((start, Token::Slash));
                    self.pos += 1;
                }
                '^' => {
                    out.push((start, Token::Caret));
                    self.pos += 1;
                }
                '(' => {
                    out.push((start, Token::LParen));
                    self.pos += 1;
                }
                ')' => {
                    out.push((start, Token::RParen));
                    self.pos += 1;
                }
                '0'..='9' | '.' => {
                    let mut end = self.pos;
                    let mut seen_dot = false;
                    while end < bytes.len() {
                        match bytes[end] as char {
                            '0'..='9' => end += 1,
                            '.' if !seen_dot => {
                                seen_dot = true;
                                end += 1;
                            }
                            _ => break,
                        }
                    }
                    // Optional exponent suffix.
                    if end < bytes.len() && (bytes[end] == b'e' || bytes[end] == b'E') {
                        let mut e = end + 1;
                        if e < bytes.len() && (bytes[e] == b'+' || bytes[e] == b'-') {
                            e += 1;
                        }
                        if e < bytes.len() && bytes[e].is_ascii_digit() {
                            while e < bytes.len() && bytes[e].is_ascii_digit() {
                                e += 1;
                            }
                            end = e;
                        }
                    }
                    let text = &self.src[self.pos..end];
                    let value: f64 = text
                        .parse()
                        .map_err(|_| self.error(format!("invalid number `{text}`")))?;
                    out.push((start, Token::Num(value)));
                    self.pos = end;
                }
                'a'..='z' | 'A'..='Z' | '_' => {
                    let mut end = self.pos;
                    while end < bytes.len()
                        && ((bytes[end] as char).is_ascii_alphanumeric() || bytes[end] == b'_')
                    {
                        end += 1;
                    }
                    out.push((start, Token::Ident(self.src[self.pos..end].to_string())));
                    self.pos = end;
                }
                _ => return Err(self.error(format!("unexpected character `{c}`"))),
            }
        }
        Ok(out)
    }
}

struct Parser {
    tokens: Vec<(usize, Token)>,
    index: usize,
    len: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.index).map(|(_, t)| t)
    }

    fn position(&self) -> usize {
        self.tokens
            .get(self.index)
            .map(|(p, _)| *p)
            .unwrap_or(self.len)
    }

    fn bump(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.index).map(|(_, t)| t.clone());
        self.index += 1;
        t
    }

    fn error(&self, message: impl Into<String>) -> ExprError {
        ExprError::Syntax {
            position: self.position(),
            message: message.into(),
        }
    }

    fn expect(&mut self, want: Token, what: &str) -> Result<(), ExprError> {
        match self.peek() {
            Some(t) if *t == want => {
                self.index += 1;
                Ok(())
            }
            _ => Err(self.error(format!("expected {what}"))),
        }
    }

    fn expr(&mut self) -> Result<Expression, ExprError> {
        let mut acc = self.term()?;
        loop {
            match self.peek() {
                Some(Token::Plus) => {
                    self.index += 1;
                    acc = Expression::Add(Box::new(acc), Box::new(self.term()?));
                }
                Some(Token::Minus) => {
                    self.index += 1;
                    acc = Expression::Sub(Box::new(acc), Box::new(self.term()?));
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<Expression, ExprError> {
        let mut acc = self.unary()?;
        loop {
            match self.peek() {
                Some(Token::Star) => {
                    self.index += 1;
                    acc = Expression::Mul(Box::new(acc), Box::new(self.unary()?));
                }
                Some(Token::Slash) => {
                    self.index += 1;
                    acc = Expression::Div(Box::new(acc), Box::new(self.unary()?));
                }
                _ => return Ok(acc),
            }
        }
    }

    fn unary(&mut self) -> Result<Expression, ExprError> {
        if let Some(Token::Minus) = self.peek() {
            self.index += 1;
            Ok(Expression::Neg(Box::new(self.unary()?)))
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<Expression, ExprError> {
        let mut base = self.atom()?;
        while let Some(Token::Caret) = self.peek() {
            self.index += 1;
            let exp = match self.bump() {
                Some(Token::Num(v)) => {
                    if v.fract() != 0.0 || v < 0.0 || v > u32::MAX as f64 {
                        return Err(ExprError::NonIntegerExponent);
                    }
                    v as u32
                }
                Some(Token::Minus) => return Err(ExprError::NonIntegerExponent),
                _ => return Err(ExprError::NonIntegerExponent),
            };
            base = Expression::Pow(Box::new(base), exp);
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expression, ExprError> {
        match self.bump() {
            Some(Token::Num(v)) => Ok(Expression::Const(v)),
            Some(Token::Ident(name)) => {
                if let Some(Token::LParen) = self.peek() {
                    self.index += 1;
                    let inner = self.expr()?;
                    self.expect(Token::RParen, "closing `)`")?;
                    let arg = Box::new(inner);
                    match name.as_str() {
                        "sin" => Ok(Expression::Sin(arg)),
                        "cos" => Ok(Expression::Cos(arg)),
                        "tan" => Ok(Expression::Tan(arg)),
                        "exp" => Ok(Expression::Exp(arg)),
                        _ => Err(ExprError::UnknownFunction(name)),
                    }
                } else if name == "t" {
                    Ok(Expression::Time)
                } else {
                    Ok(Expression::Var(name))
                }
            }
            Some(Token::LParen) => {
                let inner = self.expr()?;
                self.expect(Token::RParen, "closing `)`")?;
                Ok(inner)
            }
            _ => Err(self.error("expected a number, identifier, or `(`")),
        }
    }
}

/// Parses an expression, reporting syntax errors with a byte offset.
pub fn parse_expression(text: &str) -> Result<Expression, ExprError> {
    let tokens = Lexer::new(text).tokens()?;
    let mut parser = Parser {
        tokens,
        index: 0,
        len: text.len(),
    };
    let e = parser.expr()?;
    if parser.index != parser.tokens.len() {
        return Err(parser.error("unexpected trailing input"));
    }
    Ok(e)
}
