//! Text form for kernel expressions.
//!
//! Grammar (whitespace insignificant between tokens):
//!
//! ```text
//! expr := term ('+' term)*
//! term := atom ('*' atom)*
//! atom := NAME '(' kv (',' kv)* ')' | '(' expr ')'
//! kv   := ('ls' | 'var') '=' FLOAT
//! ```
//!
//! Names: `linear`, `rbf`, `exp`, `matern12`, `matern32`, `matern52`,
//! `white`, `bias` (`exp` is an alias for `matern12`). A missing `ls`
//! defaults to 1.0, a missing `var` to 1.0. `+` is left-associative and
//! `*` binds tighter than `+`.

use super::KernelExpr;
use crate::error::{Error, Result};

/// Parses the kernel DSL described in the module docs.
pub fn parse_kernel(text: &str) -> Result<KernelExpr> {
    let mut p = Parser {
        bytes: text.as_bytes(),
        pos: 0,
    };
    let expr = p.expr()?;
    p.skip_ws();
    if p.pos != p.bytes.len() {
        return Err(p.syntax("end of input"));
    }
    expr.validate()?;
    Ok(expr)
}

/// Canonical text form: every hyperparameter explicit, `*`-children
/// parenthesized where precedence demands it. Parsing the output
/// reproduces the input tree structurally.
pub fn print_kernel(k: &KernelExpr) -> String {
    match k {
        KernelExpr::Linear { variance } => format!("linear(var={variance})"),
        KernelExpr::White { variance } => format!("white(var={variance})"),
        KernelExpr::Bias { variance } => format!("bias(var={variance})"),
        KernelExpr::Rbf {
            lengthscale,
            variance,
        } => format!("rbf(ls={lengthscale}, var={variance})"),
        KernelExpr::Matern12 {
            lengthscale,
            variance,
        } => format!("matern12(ls={lengthscale}, var={variance})"),
        KernelExpr::Matern32 {
            lengthscale,
            variance,
        } => format!("matern32(ls={lengthscale}, var={variance})"),
        KernelExpr::Matern52 {
            lengthscale,
            variance,
        } => format!("matern52(ls={lengthscale}, var={variance})"),
        KernelExpr::Sum(l, r) => {
            // '+' is left-associative: a bare right-hand Sum needs parens.
            let right = if matches!(**r, KernelExpr::Sum(..)) {
                format!("({})", print_kernel(r))
            } else {
                print_kernel(r)
            };
            format!("{} + {}", print_kernel(l), right)
        }
        KernelExpr::Product(l, r) => {
            let left = if matches!(**l, KernelExpr::Sum(..)) {
                format!("({})", print_kernel(l))
            } else {
                print_kernel(l)
            };
            let right = if matches!(**r, KernelExpr::Sum(..) | KernelExpr::Product(..)) {
                format!("({})", print_kernel(r))
            } else {
                print_kernel(r)
            };
            format!("{left} * {right}")
        }
    }
}

struct Parser<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn syntax(&self, expected: &str) -> Error {
        Error::Syntax {
            pos: self.pos,
            expected: expected.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.bytes.get(self.pos).copied()
    }

    fn eat(&mut self, b: u8) -> bool {
        if self.peek() == Some(b) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, b: u8, what: &str) -> Result<()> {
        if self.eat(b) {
            Ok(())
        } else {
            Err(self.syntax(what))
        }
    }

    fn expr(&mut self) -> Result<KernelExpr> {
        let mut node = self.term()?;
        while self.eat(b'+') {
            let rhs = self.term()?;
            node = KernelExpr::Sum(Box::new(node), Box::new(rhs));
        }
        Ok(node)
    }

    fn term(&mut self) -> Result<KernelExpr> {
        let mut node = self.atom()?;
        while self.eat(b'*') {
            let rhs = self.atom()?;
            node = KernelExpr::Product(Box::new(node), Box::new(rhs));
        }
        Ok(node)
    }

    fn atom(&mut self) -> Result<KernelExpr> {
        if self.eat(b'(') {
            let inner = self.expr()?;
            self.expect(b')', "')'")?;
            return Ok(inner);
        }
        let name_pos = {
            self.skip_ws();
            self.pos
        };
        let name = self.ident("kernel name")?;
        self.expect(b'(', "'('")?;
        let mut ls: Option<f64> = None;
        let mut var: Option<f64> = None;
        loop {
            self.kv(&mut ls, &mut var)?;
            if !self.eat(b',') {
                break;
            }
        }
        self.expect(b')', "')'")?;
        leaf(&name, name_pos, ls, var)
    }

    fn ident(&mut self, what: &str) -> Result<String> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.bytes.len()
            && (self.bytes[self.pos].is_ascii_alphanumeric() || self.bytes[self.pos] == b'_')
        {
            self.pos += 1;
        }
        if self.pos == start {
            return Err(self.syntax(what));
        }
        Ok(std::str::from_utf8(&self.bytes[start..self.pos])
            .unwrap()
            .to_string())
    }

    fn kv(&mut self, ls: &mut Option<f64>, var: &mut Option<f64>) -> Result<()> {
        self.skip_ws();
        let key_pos = self.pos;
        let key = self.ident("'ls' or 'var'")?;
        self.expect(b'=', "'='")?;
        let value = self.float()?;
        let slot = match key.as_str() {
            "ls" => ls,
            "var" => var,
            _ => {
                return Err(Error::Syntax {
                    pos: key_pos,
                    expected: "'ls' or 'var'".to_string(),
                })
            }
        };
        if slot.is_some() {
            return Err(Error::InvalidHyperparameter(format!(
                "duplicate `{key}` at byte {key_pos}"
            )));
        }
        *slot = Some(value);
        Ok(())
    }

    fn float(&mut self) -> Result<f64> {
        self.skip_ws();
        let start = self.pos;
        // sign, digits, fraction, exponent
        if self.pos < self.bytes.len() && (self.bytes[self.pos] == b'+' || self.bytes[self.pos] == b'-')
        {
            self.pos += 1;
        }
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.pos < self.bytes.len() && self.bytes[self.pos] == b'.' {
            self.pos += 1;
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
        }
        if self.pos < self.bytes.len() && (self.bytes[self.pos] == b'e' || self.bytes[self.pos] == b'E')
        {
            self.pos += 1;
            if self.pos < self.bytes.len()
                && (self.bytes[self.pos] == b'+' || self.bytes[self.pos] == b'-')
            {
                self.pos += 1;
            }
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
        }
        let text = std::str::from_utf8(&self.bytes[start..self.pos]).unwrap();
        text.parse::<f64>().map_err(|_| Error::Syntax {
            pos: start,
            expected: "number".to_string(),
        })
    }
}

fn leaf(name: &str, pos: usize, ls: Option<f64>, var: Option<f64>) -> Result<KernelExpr> {
    let takes_ls = matches!(name, "rbf" | "exp" | "matern12" | "matern32" | "matern52");
    let takes_var_only = matches!(name, "linear" | "white" | "bias");
    if !takes_ls && !takes_var_only {
        return Err(Error::UnknownKernelName {
            pos,
            name: name.to_string(),
        });
    }
    if !takes_ls && ls.is_some() {
        return Err(Error::InvalidHyperparameter(format!(
            "kernel `{name}` takes no lengthscale"
        )));
    }
    let variance = var.unwrap_or(1.0);
    let lengthscale = ls.unwrap_or(1.0);
    Ok(match name {
        "linear" => KernelExpr::Linear { variance },
        "white" => KernelExpr::White { variance },
        "bias" => KernelExpr::Bias { variance },
        "rbf" => KernelExpr::Rbf {
            lengthscale,
            variance,
        },
        "exp" | "matern12" => KernelExpr::Matern12 {
            lengthscale,
            variance,
        },
        "matern32" => KernelExpr::Matern32 {
            lengthscale,
            variance,
        },
        _ => KernelExpr::Matern52 {
            lengthscale,
            variance,
        },
    })
}
