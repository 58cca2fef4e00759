//! Recursive-descent parser for the expression grammar.

use super::{BinOp, ExprKind, Expression, Func, Span, Variable};
use thiserror::Error;

#[derive(Clone, Debug, Error, PartialEq, Eq)]
#[error("parse error at byte {offset}: {kind}")]
pub struct ParseError {
    /// Byte offset into the source where the error was detected.
    pub offset: usize,
    pub kind: ParseErrorKind,
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum ParseErrorKind {
    #[error("expected one of {expected:?}")]
    Expected { expected: Vec<&'static str> },
    #[error("unknown identifier `{name}`")]
    UnknownIdentifier { name: String },
    #[error("variable `{name}` out of range (n={n}, m={m})")]
    IndexOutOfRange { name: String, n: usize, m: usize },
    #[error("malformed number")]
    MalformedNumber,
    #[error("trailing input")]
    TrailingInput,
    #[error("empty source")]
    EmptySource,
}

/// Parses `source` into an [`Expression`] for a system with `n` state and
/// `m` control variables. Variable indices are validated here, so evaluation
/// never sees an out-of-range index.
pub fn parse(source: &str, n: usize, m: usize) -> Result<Expression, ParseError> {
    if source.trim().is_empty() {
        return Err(ParseError {
            offset: 0,
            kind: ParseErrorKind::EmptySource,
        });
    }
    let mut p = Parser {
        src: source.as_bytes(),
        pos: 0,
        n,
        m,
    };
    let expr = p.expr()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(ParseError {
            offset: p.pos,
            kind: ParseErrorKind::TrailingInput,
        });
    }
    Ok(expr)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    n: usize,
    m: usize,
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expected(&self, expected: Vec<&'static str>) -> ParseError {
        ParseError {
            offset: self.pos,
            kind: ParseErrorKind::Expected { expected },
        }
    }

    fn expr(&mut self) -> Result<Expression, ParseError> {
        let start = self.current_offset();
        let mut lhs = self.term()?;
        while let Some(c) = self.peek() {
            let op = match c {
                b'+' => BinOp::Add,
                b'-' => BinOp::Sub,
                _ => break,
            };
            self.pos += 1;
            let rhs = self.term()?;
            let span = Span {
                start,
                end: rhs.span.end,
            };
            lhs = Expression {
                kind: ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)),
                span,
            };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expression, ParseError> {
        let start = self.current_offset();
        let mut lhs = self.factor()?;
        while let Some(c) = self.peek() {
            let op = match c {
                b'*' => BinOp::Mul,
                b'/' => BinOp::Div,
                _ => break,
            };
            self.pos += 1;
            let rhs = self.factor()?;
            let span = Span {
                start,
                end: rhs.span.end,
            };
            lhs = Expression {
                kind: ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)),
                span,
            };
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<Expression, ParseError> {
        let base = self.unary()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let k = self.integer()?;
            let span = Span {
                start: base.span.start,
                end: self.pos,
            };
            return Ok(Expression {
                kind: ExprKind::Pow(Box::new(base), k),
                span,
            });
        }
        Ok(base)
    }

    fn unary(&mut self) -> Result<Expression, ParseError> {
        if self.peek() == Some(b'-') {
            let start = self.pos;
            self.pos += 1;
            let inner = self.unary()?;
            let span = Span {
                start,
                end: inner.span.end,
            };
            return Ok(Expression {
                kind: ExprKind::Neg(Box::new(inner)),
                span,
            });
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Expression, ParseError> {
        match self.peek() {
            Some(b'(') => {
                let start = self.pos;
                self.pos += 1;
                let inner = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(self.expected(vec![")"]));
                }
                self.pos += 1;
                Ok(Expression {
                    kind: inner.kind,
                    span: Span {
                        start,
                        end: self.pos,
                    },
                })
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.identifier(),
            _ => Err(self.expected(vec!["number", "pi", "identifier", "function", "("])),
        }
    }

    fn current_offset(&mut self) -> usize {
        self.skip_ws();
        self.pos
    }

    fn number(&mut self) -> Result<Expression, ParseError> {
        let start = self.pos;
        let mut end = self.pos;
        let mut seen_digit = false;
        while end < self.src.len() {
            let c = self.src[end];
            if c.is_ascii_digit() {
                seen_digit = true;
                end += 1;
            } else if c == b'.' {
                end += 1;
            } else if (c == b'e' || c == b'E') && seen_digit {
                // exponent part: e[+-]?digits
                let mut cursor = end + 1;
                if cursor < self.src.len() && (self.src[cursor] == b'+' || self.src[cursor] == b'-')
                {
                    cursor += 1;
                }
                if cursor < self.src.len() && self.src[cursor].is_ascii_digit() {
                    end = cursor;
                    while end < self.src.len() && self.src[end].is_ascii_digit() {
                        end += 1;
                    }
                }
                break;
            } else {
                break;
            }
        }
        let text = std::str::from_utf8(&self.src[start..end]).unwrap();
        let value: f64 = text.parse().map_err(|_| ParseError {
            offset: start,
            kind: ParseErrorKind::MalformedNumber,
        })?;
        self.pos = end;
        Ok(Expression {
            kind: ExprKind::Literal(value),
            span: Span { start, end },
        })
    }

    /// Signed integer exponent after `^`.
    fn integer(&mut self) -> Result<i32, ParseError> {
        self.skip_ws();
        let start = self.pos;
        let mut end = self.pos;
        if end < self.src.len() && self.src[end] == b'-' {
            end += 1;
        }
        let digits_start = end;
        while end < self.src.len() && self.src[end].is_ascii_digit() {
            end += 1;
        }
        if end == digits_start {
            return Err(ParseError {
                offset: start,
                kind: ParseErrorKind::Expected {
                    expected: vec!["integer"],
                },
            });
        }
        let text = std::str::from_utf8(&self.src[start..end]).unwrap();
        let value: i32 = text.parse().map_err(|_| ParseError {
            offset: start,
            kind: ParseErrorKind::MalformedNumber,
        })?;
        self.pos = end;
        Ok(value)
    }

    fn identifier(&mut self) -> Result<Expression, ParseError> {
        let start = self.pos;
        let mut end = self.pos;
        while end < self.src.len()
            && (self.src[end].is_ascii_alphanumeric() || self.src[end] == b'_')
        {
            end += 1;
        }
        let name = std::str::from_utf8(&self.src[start..end])
            .unwrap()
            .to_owned();
        self.pos = end;
        let span = Span { start, end };

        if let Some(func) = match name.as_str() {
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            "exp" => Some(Func::Exp),
            "log" => Some(Func::Log),
            "sqrt" => Some(Func::Sqrt),
            "tanh" => Some(Func::Tanh),
            _ => None,
        } {
            if self.peek() != Some(b'(') {
                return Err(self.expected(vec!["("]));
            }
            self.pos += 1;
            let arg = self.expr()?;
            if self.peek() != Some(b')') {
                return Err(self.expected(vec![")"]));
            }
            self.pos += 1;
            return Ok(Expression {
                kind: ExprKind::Apply(func, Box::new(arg)),
                span: Span {
                    start,
                    end: self.pos,
                },
            });
        }

        match name.as_str() {
            "pi" => Ok(Expression {
                kind: ExprKind::Pi,
                span,
            }),
            "t" => Ok(Expression {
                kind: ExprKind::Var(Variable::Time),
                span,
            }),
            _ => {
                let (prefix, rest) = name.split_at(1);
                let index: Option<usize> = rest.parse().ok().filter(|_| !rest.is_empty());
                match (prefix, index) {
                    ("x", Some(i)) if i >= 1 && i <= self.n => Ok(Expression {
                        kind: ExprKind::Var(Variable::State(i - 1)),
                        span,
                    }),
                    ("u", Some(i)) if i >= 1 && i <= self.m => Ok(Expression {
                        kind: ExprKind::Var(Variable::Control(i - 1)),
                        span,
                    }),
                    ("x", Some(_)) | ("u", Some(_)) => Err(ParseError {
                        offset: start,
                        kind: ParseErrorKind::IndexOutOfRange {
                            name,
                            n: self.n,
                            m: self.m,
                        },
                    }),
                    _ => Err(ParseError {
                        offset: start,
                        kind: ParseErrorKind::UnknownIdentifier { name },
                    }),
                }
            }
        }
    }
}
