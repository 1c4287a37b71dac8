//! Fixed-point arithmetic evaluator: decimals with six fractional digits,
//! `+ - * /` (also `− × ÷`), parentheses and unary minus.

use std::fmt;

pub const SCALE: i128 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Fixed(pub i128);

impl fmt::Display for Fixed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        let scale = SCALE as u128;
        write!(f, "{sign}{}.{:06}", abs / scale, abs % scale)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CalcError {
    #[error("unexpected input at {0}")]
    Syntax(usize),
    #[error("division by zero")]
    DivisionByZero,
    #[error("overflow")]
    Overflow,
}

struct Parser {
    chars: Vec<(usize, char)>,
    pos: usize,
}

pub fn eval_fixed(src: &str) -> Result<Fixed, CalcError> {
    let mut p = Parser {
        chars: src.char_indices().collect(),
        pos: 0,
    };
    let v = p.expr()?;
    p.skip_ws();
    if p.pos != p.chars.len() {
        return Err(CalcError::Syntax(p.offset()));
    }
    Ok(Fixed(v))
}

impl Parser {
    fn offset(&self) -> usize {
        self.chars.get(self.pos).map_or(usize::MAX, |(i, _)| *i)
    }

    fn skip_ws(&mut self) {
        while self.raw().is_some_and(char::is_whitespace) {
            self.pos += 1;
        }
    }

    fn raw(&self) -> Option<char> {
        self.chars.get(self.pos).map(|(_, c)| *c)
    }

    /// Next non-blank character.
    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.raw()
    }

    fn expr(&mut self) -> Result<i128, CalcError> {
        let mut acc = self.term()?;
        while let Some(c) = self.peek() {
            let add = match c {
                '+' => true,
                '-' | '−' => false,
                _ => break,
            };
            self.pos += 1;
            let rhs = self.term()?;
            acc = if add { acc.checked_add(rhs) } else { acc.checked_sub(rhs) }.ok_or(CalcError::Overflow)?;
        }
        Ok(acc)
    }

    fn term(&mut self) -> Result<i128, CalcError> {
        let mut acc = self.unary()?;
        while let Some(c) = self.peek() {
            let mul = match c {
                '*' | '×' => true,
                '/' | '÷' => false,
                _ => break,
            };
            self.pos += 1;
            let rhs = self.unary()?;
            acc = if mul {
                acc.checked_mul(rhs).map(|v| v / SCALE)
            } else if rhs == 0 {
                return Err(CalcError::DivisionByZero);
            } else {
                acc.checked_mul(SCALE).map(|v| v / rhs)
            }
            .ok_or(CalcError::Overflow)?;
        }
        Ok(acc)
    }

    fn unary(&mut self) -> Result<i128, CalcError> {
        if matches!(self.peek(), Some('-' | '−')) {
            self.pos += 1;
            return self.unary()?.checked_neg().ok_or(CalcError::Overflow);
        }
        if self.peek() == Some('(') {
            self.pos += 1;
            let v = self.expr()?;
            if self.peek() != Some(')') {
                return Err(CalcError::Syntax(self.offset()));
            }
            self.pos += 1;
            return Ok(v);
        }
        self.number()
    }

    fn number(&mut self) -> Result<i128, CalcError> {
        self.skip_ws();
        let start = self.offset();
        let mut int: i128 = 0;
        let mut frac: i128 = 0;
        let mut frac_digits = 0u32;
        let mut seen_digit = false;
        let mut in_frac = false;
        while let Some(c) = self.raw() {
            match c {
                '0'..='9' => {
                    let d = i128::from(c as u8 - b'0');
                    if in_frac {
                        // Digits past the sixth are truncated.
                        if frac_digits < 6 {
                            frac = frac * 10 + d;
                            frac_digits += 1;
                        }
                    } else {
                        int = int.checked_mul(10).and_then(|v| v.checked_add(d)).ok_or(CalcError::Overflow)?;
                    }
                    seen_digit = true;
                }
                '.' if !in_frac => in_frac = true,
                _ => break,
            }
            self.pos += 1;
        }
        if !seen_digit {
            return Err(CalcError::Syntax(start));
        }
        let frac_scaled = frac * 10i128.pow(6 - frac_digits);
        int.checked_mul(SCALE)
            .and_then(|v| v.checked_add(frac_scaled))
            .ok_or(CalcError::Overflow)
    }
}
