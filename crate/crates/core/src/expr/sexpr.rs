//! S-expression reader and the textual form of [`Expr`].
//!
//! ```text
//! (add (mul 2.0 (sin (var 0))) (var 1))
//! ```
//!
//! `add` and `mul` accept two or more operands; everything else has fixed
//! arity. `;` starts a comment that runs to the end of the line.

use std::fmt;

use thiserror::Error;

use super::Expr;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("unknown operator `{0}`")]
    UnknownOperator(String),
    #[error("`{op}` expects {expected} operand(s), got {got}")]
    Arity { op: String, expected: String, got: usize },
    #[error("invalid number `{0}`")]
    Number(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum SExp {
    Atom(String),
    List(Vec<SExp>),
}

impl SExp {
    pub fn as_atom(&self) -> Option<&str> {
        match self {
            SExp::Atom(a) => Some(a),
            SExp::List(_) => None,
        }
    }

    pub fn as_list(&self) -> Option<&[SExp]> {
        match self {
            SExp::List(items) => Some(items),
            SExp::Atom(_) => None,
        }
    }

    /// For `(head rest...)`, the head atom and the rest.
    pub fn head(&self) -> Option<(&str, &[SExp])> {
        let items = self.as_list()?;
        let (first, rest) = items.split_first()?;
        Some((first.as_atom()?, rest))
    }
}

impl fmt::Display for SExp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SExp::Atom(a) => f.write_str(a),
            SExp::List(items) => {
                f.write_str("(")?;
                for (k, it) in items.iter().enumerate() {
                    if k > 0 {
                        f.write_str(" ")?;
                    }
                    write!(f, "{it}")?;
                }
                f.write_str(")")
            }
        }
    }
}

/// Reads every top-level form in `text`.
pub fn parse_sexps(text: &str) -> Result<Vec<SExp>, ParseError> {
    let mut stack: Vec<Vec<SExp>> = vec![Vec::new()];
    let mut atom = String::new();
    let mut chars = text.chars().peekable();

    fn flush(atom: &mut String, stack: &mut [Vec<SExp>]) {
        if !atom.is_empty() {
            stack.last_mut().unwrap().push(SExp::Atom(std::mem::take(atom)));
        }
    }

    while let Some(c) = chars.next() {
        match c {
            ';' => {
                flush(&mut atom, &mut stack);
                while let Some(&n) = chars.peek() {
                    if n == '\n' {
                        break;
                    }
                    chars.next();
                }
            }
            '(' => {
                flush(&mut atom, &mut stack);
                stack.push(Vec::new());
            }
            ')' => {
                flush(&mut atom, &mut stack);
                if stack.len() == 1 {
                    return Err(ParseError::Syntax("unbalanced `)`".into()));
                }
                let done = stack.pop().unwrap();
                stack.last_mut().unwrap().push(SExp::List(done));
            }
            c if c.is_whitespace() => flush(&mut atom, &mut stack),
            c => atom.push(c),
        }
    }
    flush(&mut atom, &mut stack);
    if stack.len() != 1 {
        return Err(ParseError::Syntax("unbalanced `(`".into()));
    }
    Ok(stack.pop().unwrap())
}

pub(super) fn parse_number(a: &str) -> Result<f64, ParseError> {
    let v: f64 = a.parse().map_err(|_| ParseError::Number(a.to_string()))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(ParseError::Number(a.to_string()))
    }
}

fn parse_index(s: &SExp) -> Result<usize, ParseError> {
    s.as_atom()
        .and_then(|a| a.parse().ok())
        .ok_or_else(|| ParseError::Number(s.to_string()))
}

pub(super) fn expr_from_sexp(s: &SExp) -> Result<Expr, ParseError> {
    let (op, args) = match s {
        SExp::Atom(a) => return parse_number(a).map(Expr::constant),
        SExp::List(_) => s
            .head()
            .ok_or_else(|| ParseError::Syntax(format!("expected (operator ...), got {s}")))?,
    };
    let arity = |expected: usize| -> Result<(), ParseError> {
        if args.len() == expected {
            Ok(())
        } else {
            Err(ParseError::Arity { op: op.into(), expected: expected.to_string(), got: args.len() })
        }
    };
    let sub = |k: usize| expr_from_sexp(&args[k]);
    Ok(match op {
        "var" => {
            arity(1)?;
            Expr::var(parse_index(&args[0])?)
        }
        "input" => {
            arity(1)?;
            Expr::input(parse_index(&args[0])?)
        }
        "const" => {
            arity(1)?;
            let a = args[0].as_atom().ok_or_else(|| ParseError::Number(args[0].to_string()))?;
            Expr::constant(parse_number(a)?)
        }
        "add" | "mul" => {
            if args.len() < 2 {
                return Err(ParseError::Arity { op: op.into(), expected: "2+".into(), got: args.len() });
            }
            let mut acc = sub(0)?;
            for k in 1..args.len() {
                let rhs = sub(k)?;
                acc = if op == "add" { acc.add(&rhs) } else { acc.mul(&rhs) };
            }
            acc
        }
        "sub" => {
            arity(2)?;
            sub(0)?.sub(&sub(1)?)
        }
        "div" => {
            arity(2)?;
            sub(0)?.div(&sub(1)?)
        }
        "pow" => {
            arity(2)?;
            let n = args[1]
                .as_atom()
                .and_then(|a| a.parse::<u32>().ok())
                .ok_or_else(|| ParseError::Syntax(format!("pow exponent must be a non-negative integer, got {}", args[1])))?;
            sub(0)?.powi(n)
        }
        "neg" => {
            arity(1)?;
            sub(0)?.neg()
        }
        "sin" => {
            arity(1)?;
            sub(0)?.sin()
        }
        "cos" => {
            arity(1)?;
            sub(0)?.cos()
        }
        "tanh" => {
            arity(1)?;
            sub(0)?.tanh()
        }
        other => return Err(ParseError::UnknownOperator(other.to_string())),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_documented_example() {
        let e = Expr::parse("(add (mul 2.0 (sin (var 0))) (var 1))").unwrap();
        assert_eq!(e.to_string(), "(add (mul 2.0 (sin (var 0))) (var 1))");
        let v = e.eval_point(&[0.5, 1.0]).unwrap();
        assert!((v - (2.0 * 0.5f64.sin() + 1.0)).abs() < 1e-15);
    }

    #[test]
    fn comments_and_nary() {
        let e = Expr::parse("; dynamics\n(add (var 0) (var 1) 3) ; trailing").unwrap();
        assert_eq!(e.eval_point(&[1.0, 2.0]).unwrap(), 6.0);
    }

    #[test]
    fn constants_round_trip_exactly() {
        let c = 0.1 + 0.2;
        let e = Expr::constant(c) * Expr::var(0);
        let back = Expr::parse(&e.to_string()).unwrap();
        assert_eq!(back.eval_point(&[1.0]).unwrap(), c);
    }

    #[test]
    fn errors() {
        assert!(matches!(Expr::parse("(foo 1)"), Err(ParseError::UnknownOperator(_))));
        assert!(matches!(Expr::parse("(sin 1 2)"), Err(ParseError::Arity { .. })));
        assert!(matches!(Expr::parse("(pow (var 0) -1)"), Err(ParseError::Syntax(_))));
        assert!(matches!(Expr::parse("(add 1 2"), Err(ParseError::Syntax(_))));
        assert!(matches!(Expr::parse("1 2"), Err(ParseError::Syntax(_))));
        assert!(matches!(Expr::parse("inf"), Err(ParseError::Number(_))));
    }
}
