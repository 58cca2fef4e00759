//! Arithmetic expressions in the variables `x1..xn`, `u1..um` and `t`,
//! evaluated together with exact first derivatives.
//!
//! Expressions are parsed once (see [`parse`]) and are immutable afterwards;
//! evaluation is pure, so values may be shared freely across threads. The
//! supported grammar is
//!
//! ```text
//! expr   := term (("+"|"-") term)*
//! term   := factor (("*"|"/") factor)*
//! factor := unary ("^" integer)?
//! unary  := "-" unary | atom
//! atom   := number | "pi" | ident | func "(" expr ")" | "(" expr ")"
//! ident  := "t" | "x"digits | "u"digits
//! ```
//!
//! with `func` one of `sin`, `cos`, `exp`, `log`, `sqrt`, `tanh`. Exponents
//! are integer literals so the derivative of every well-formed expression is
//! total wherever `log`, `sqrt` and `/` are defined.

mod dual;
mod parser;

pub use dual::Dual;
pub use parser::{parse, ParseError, ParseErrorKind};

use nalgebra::DVector;
use thiserror::Error;

/// Byte range of a sub-expression in the original source text.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variable {
    /// `x1..xn`, stored zero-based.
    State(usize),
    /// `u1..um`, stored zero-based.
    Control(usize),
    Time,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
    Tanh,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Tanh => "tanh",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ExprKind {
    Literal(f64),
    Pi,
    Var(Variable),
    Neg(Box<Expression>),
    Binary(BinOp, Box<Expression>, Box<Expression>),
    /// Integer power of the base expression.
    Pow(Box<Expression>, i32),
    Apply(Func, Box<Expression>),
}

/// Parsed abstract syntax tree; see the module docs for the grammar.
#[derive(Clone, Debug, PartialEq)]
pub struct Expression {
    pub kind: ExprKind,
    pub span: Span,
}

/// Evaluation failure at a point outside the domain of a sub-expression.
#[derive(Clone, Debug, Error, PartialEq)]
pub enum DomainError {
    #[error("log of non-positive value {value} at bytes {}..{}", span.start, span.end)]
    Log { value: f64, span: Span },
    #[error("sqrt of negative value {value} at bytes {}..{}", span.start, span.end)]
    Sqrt { value: f64, span: Span },
    #[error("division by zero at bytes {}..{}", span.start, span.end)]
    DivisionByZero { span: Span },
    #[error("zero raised to negative power {exponent} at bytes {}..{}", span.start, span.end)]
    ZeroToNegativePower { exponent: i32, span: Span },
}

impl Expression {
    /// Value of the expression at `(x, u, t)`.
    pub fn eval(&self, x: &[f64], u: &[f64], t: f64) -> Result<f64, DomainError> {
        match &self.kind {
            ExprKind::Literal(c) => Ok(*c),
            ExprKind::Pi => Ok(std::f64::consts::PI),
            ExprKind::Var(Variable::State(i)) => Ok(x[*i]),
            ExprKind::Var(Variable::Control(i)) => Ok(u[*i]),
            ExprKind::Var(Variable::Time) => Ok(t),
            ExprKind::Neg(e) => Ok(-e.eval(x, u, t)?),
            ExprKind::Binary(op, a, b) => {
                let va = a.eval(x, u, t)?;
                let vb = b.eval(x, u, t)?;
                match op {
                    BinOp::Add => Ok(va + vb),
                    BinOp::Sub => Ok(va - vb),
                    BinOp::Mul => Ok(va * vb),
                    BinOp::Div => {
                        if vb == 0.0 {
                            Err(DomainError::DivisionByZero { span: b.span })
                        } else {
                            Ok(va / vb)
                        }
                    }
                }
            }
            ExprKind::Pow(e, k) => {
                let v = e.eval(x, u, t)?;
                if v == 0.0 && *k < 0 {
                    Err(DomainError::ZeroToNegativePower {
                        exponent: *k,
                        span: e.span,
                    })
                } else {
                    Ok(v.powi(*k))
                }
            }
            ExprKind::Apply(f, e) => {
                let v = e.eval(x, u, t)?;
                match f {
                    Func::Sin => Ok(v.sin()),
                    Func::Cos => Ok(v.cos()),
                    Func::Exp => Ok(v.exp()),
                    Func::Log => {
                        if v <= 0.0 {
                            Err(DomainError::Log {
                                value: v,
                                span: e.span,
                            })
                        } else {
                            Ok(v.ln())
                        }
                    }
                    Func::Sqrt => {
                        if v < 0.0 {
                            Err(DomainError::Sqrt {
                                value: v,
                                span: e.span,
                            })
                        } else {
                            Ok(v.sqrt())
                        }
                    }
                    Func::Tanh => Ok(v.tanh()),
                }
            }
        }
    }

    /// Forward-mode evaluation with the seed layout `(x1..xn, u1..um, t)`.
    pub fn eval_dual(&self, x: &[f64], u: &[f64], t: f64) -> Result<Dual, DomainError> {
        let seeds = x.len() + u.len() + 1;
        self.eval_dual_inner(x, u, t, seeds)
    }

    fn eval_dual_inner(
        &self,
        x: &[f64],
        u: &[f64],
        t: f64,
        seeds: usize,
    ) -> Result<Dual, DomainError> {
        match &self.kind {
            ExprKind::Literal(c) => Ok(Dual::constant(*c, seeds)),
            ExprKind::Pi => Ok(Dual::constant(std::f64::consts::PI, seeds)),
            ExprKind::Var(Variable::State(i)) => Ok(Dual::variable(x[*i], *i, seeds)),
            ExprKind::Var(Variable::Control(i)) => Ok(Dual::variable(u[*i], x.len() + *i, seeds)),
            ExprKind::Var(Variable::Time) => Ok(Dual::variable(t, seeds - 1, seeds)),
            ExprKind::Neg(e) => Ok(e.eval_dual_inner(x, u, t, seeds)?.neg()),
            ExprKind::Binary(op, a, b) => {
                let da = a.eval_dual_inner(x, u, t, seeds)?;
                let db = b.eval_dual_inner(x, u, t, seeds)?;
                match op {
                    BinOp::Add => Ok(da.add(&db)),
                    BinOp::Sub => Ok(da.sub(&db)),
                    BinOp::Mul => Ok(da.mul(&db)),
                    BinOp::Div => {
                        if db.value == 0.0 {
                            Err(DomainError::DivisionByZero { span: b.span })
                        } else {
                            Ok(da.div(&db))
                        }
                    }
                }
            }
            ExprKind::Pow(e, k) => {
                let d = e.eval_dual_inner(x, u, t, seeds)?;
                if d.value == 0.0 && *k < 0 {
                    Err(DomainError::ZeroToNegativePower {
                        exponent: *k,
                        span: e.span,
                    })
                } else {
                    Ok(d.powi(*k))
                }
            }
            ExprKind::Apply(f, e) => {
                let d = e.eval_dual_inner(x, u, t, seeds)?;
                match f {
                    Func::Sin => Ok(d.sin()),
                    Func::Cos => Ok(d.cos()),
                    Func::Exp => Ok(d.exp()),
                    Func::Log => {
                        if d.value <= 0.0 {
                            Err(DomainError::Log {
                                value: d.value,
                                span: e.span,
                            })
                        } else {
                            Ok(d.log())
                        }
                    }
                    Func::Sqrt => {
                        if d.value < 0.0 {
                            Err(DomainError::Sqrt {
                                value: d.value,
                                span: e.span,
                            })
                        } else {
                            Ok(d.sqrt())
                        }
                    }
                    Func::Tanh => Ok(d.tanh()),
                }
            }
        }
    }
}

/// Value and gradients of an expression at a point.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub value: f64,
    pub grad_x: DVector<f64>,
    pub grad_u: DVector<f64>,
    pub d_t: f64,
}

/// Evaluates `e` at `(x, u, t)` returning the value together with
/// `∂e/∂x`, `∂e/∂u` and `∂e/∂t` from a single forward-mode pass.
pub fn eval_with_gradient(
    e: &Expression,
    x: &[f64],
    u: &[f64],
    t: f64,
) -> Result<Evaluation, DomainError> {
    let n = x.len();
    let m = u.len();
    let d = e.eval_dual(x, u, t)?;
    Ok(Evaluation {
        value: d.value,
        grad_x: DVector::from_fn(n, |i, _| d.partials[i]),
        grad_u: DVector::from_fn(m, |i, _| d.partials[n + i]),
        d_t: d.partials[n + m],
    })
}

impl std::fmt::Display for Expression {
    /// Fully parenthesized rendering; re-parsing it yields an equivalent tree.
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.kind {
            ExprKind::Literal(c) => {
                if *c == c.trunc() && c.abs() < 1e15 {
                    write!(f, "{c:.1}")
                } else {
                    write!(f, "{c:?}")
                }
            }
            ExprKind::Pi => write!(f, "pi"),
            ExprKind::Var(Variable::State(i)) => write!(f, "x{}", i + 1),
            ExprKind::Var(Variable::Control(i)) => write!(f, "u{}", i + 1),
            ExprKind::Var(Variable::Time) => write!(f, "t"),
            ExprKind::Neg(e) => write!(f, "(-{e})"),
            ExprKind::Binary(op, a, b) => {
                let sym = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                };
                write!(f, "({a} {sym} {b})")
            }
            ExprKind::Pow(e, k) => {
                // compound bases need parentheses: the grammar allows a
                // single exponent per factor
                let atomic = matches!(
                    e.kind,
                    ExprKind::Pi | ExprKind::Var(_) | ExprKind::Apply(..)
                ) || matches!(e.kind, ExprKind::Literal(c) if c >= 0.0);
                if atomic {
                    write!(f, "{e}^{k}")
                } else {
                    write!(f, "({e})^{k}")
                }
            }
            ExprKind::Apply(func, e) => write!(f, "{}({e})", func.name()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn identity_control_variable() {
        let e = parse("u1", 1, 1).unwrap();
        assert_relative_eq!(e.eval(&[0.0], &[3.0], 0.0).unwrap(), 3.0);
    }

    #[test]
    fn shifted_square() {
        let e = parse("1 + (u1 - t)^2", 1, 1).unwrap();
        assert_relative_eq!(e.eval(&[0.0], &[0.5], 0.5).unwrap(), 1.0);
    }

    #[test]
    fn product_partial_matches_finite_difference() {
        let e = parse("u1*u2", 1, 2).unwrap();
        let ev = eval_with_gradient(&e, &[0.0], &[2.0, 5.0], 0.0).unwrap();
        assert_relative_eq!(ev.grad_u[0], 5.0);
        let h = 1e-6;
        let fd = (e.eval(&[0.0], &[2.0 + h, 5.0], 0.0).unwrap()
            - e.eval(&[0.0], &[2.0 - h, 5.0], 0.0).unwrap())
            / (2.0 * h);
        assert_relative_eq!(ev.grad_u[0], fd, epsilon = 1e-8);
    }

    #[test]
    fn cubic_has_flat_derivative_at_origin() {
        let e = parse("u1^3", 1, 1).unwrap();
        let ev = eval_with_gradient(&e, &[0.0], &[0.0], 0.0).unwrap();
        assert_relative_eq!(ev.value, 0.0);
        assert_relative_eq!(ev.grad_u[0], 0.0);
    }

    #[test]
    fn sine_time_derivative() {
        let e = parse("sin(t)", 0, 0).unwrap();
        let ev = eval_with_gradient(&e, &[], &[], 0.0).unwrap();
        assert_relative_eq!(ev.value, 0.0);
        assert_relative_eq!(ev.d_t, 1.0);
    }

    #[test]
    fn mixed_gradient_components() {
        let e = parse("x1*x2 + exp(u1)", 2, 1).unwrap();
        let ev = eval_with_gradient(&e, &[2.0, 3.0], &[0.0], 0.0).unwrap();
        assert_relative_eq!(ev.value, 7.0);
        assert_relative_eq!(ev.grad_x[0], 3.0);
        assert_relative_eq!(ev.grad_x[1], 2.0);
        assert_relative_eq!(ev.grad_u[0], 1.0);
    }

    #[test]
    fn parse_errors_carry_offsets() {
        // unknown identifier
        match parse("1 + y", 1, 1) {
            Err(ParseError {
                offset: 4,
                kind: ParseErrorKind::UnknownIdentifier { name },
            }) => {
                assert_eq!(name, "y");
            }
            other => panic!("unexpected: {other:?}"),
        }
        // variable index out of range
        match parse("u2", 1, 1) {
            Err(ParseError {
                offset: 0,
                kind: ParseErrorKind::IndexOutOfRange { .. },
            }) => {}
            other => panic!("unexpected: {other:?}"),
        }
        // expected-token set at an unclosed parenthesis
        match parse("sin(t", 0, 0) {
            Err(ParseError {
                offset: 5,
                kind: ParseErrorKind::Expected { expected },
            }) => {
                assert!(expected.contains(&")"));
            }
            other => panic!("unexpected: {other:?}"),
        }
        // empty source rejected
        assert!(matches!(
            parse("  ", 1, 1),
            Err(ParseError {
                kind: ParseErrorKind::EmptySource,
                ..
            })
        ));
    }

    #[test]
    fn domain_errors_point_at_subexpression() {
        let e = parse("1 / (u1 - 1)", 1, 1).unwrap();
        match e.eval(&[0.0], &[1.0], 0.0) {
            Err(DomainError::DivisionByZero { span }) => {
                assert_eq!(span, Span { start: 4, end: 12 });
            }
            other => panic!("unexpected: {other:?}"),
        }
        let e = parse("log(t - 2)", 0, 0).unwrap();
        assert!(matches!(
            e.eval(&[], &[], 1.0),
            Err(DomainError::Log { .. })
        ));
    }

    #[test]
    fn integer_exponents_including_negative() {
        let e = parse("u1^-2", 1, 1).unwrap();
        assert_relative_eq!(e.eval(&[0.0], &[2.0], 0.0).unwrap(), 0.25);
        assert!(matches!(
            e.eval(&[0.0], &[0.0], 0.0),
            Err(DomainError::ZeroToNegativePower { .. })
        ));
    }
}
