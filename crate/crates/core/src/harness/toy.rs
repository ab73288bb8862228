//! Postfix arithmetic interpreter for the toy program language.
//!
//! Tokens are `x`, integer literals and the operators `+ - *`. The input
//! binds `x` (`"x=3"` or `"3"`); the program's output is the single value
//! left on the stack.

use std::fmt;

use super::{Outcome, Runner, LanguageTag};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ToyError {
    StackUnderflow { token: String },
    UnknownToken(String),
    Overflow,
    EmptyProgram,
    LeftoverStack(usize),
    BadInput(String),
    StepLimit(usize),
}

impl fmt::Display for ToyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ToyError::StackUnderflow { token } => write!(f, "stack underflow at {token:?}"),
            ToyError::UnknownToken(t) => write!(f, "unknown token {t:?}"),
            ToyError::Overflow => f.write_str("integer overflow"),
            ToyError::EmptyProgram => f.write_str("empty program"),
            ToyError::LeftoverStack(n) => write!(f, "{n} values left on the stack"),
            ToyError::BadInput(s) => write!(f, "cannot bind x from input {s:?}"),
            ToyError::StepLimit(n) => write!(f, "step limit of {n} exceeded"),
        }
    }
}

pub fn parse_binding(input: &str) -> Result<i64, ToyError> {
    let s = input.trim();
    let value = s.strip_prefix("x").map_or(s, |rest| rest.trim_start().trim_start_matches('=').trim());
    value.parse().map_err(|_| ToyError::BadInput(input.to_string()))
}

/// Evaluates `program` with `x` bound, executing at most `max_steps` tokens.
pub fn evaluate(program: &str, x: i64, max_steps: usize) -> Result<i64, ToyError> {
    let mut stack: Vec<i64> = Vec::new();
    for (step, token) in program.split_whitespace().enumerate() {
        if step >= max_steps {
            return Err(ToyError::StepLimit(max_steps));
        }
        let value = match token {
            "x" => x,
            "+" | "-" | "*" => {
                let (Some(b), Some(a)) = (stack.pop(), stack.pop()) else {
                    return Err(ToyError::StackUnderflow { token: token.to_string() });
                };
                match token {
                    "+" => a.checked_add(b),
                    "-" => a.checked_sub(b),
                    _ => a.checked_mul(b),
                }
                .ok_or(ToyError::Overflow)?
            }
            lit => lit.parse().map_err(|_| ToyError::UnknownToken(lit.to_string()))?,
        };
        stack.push(value);
    }
    match stack.len() {
        0 => Err(ToyError::EmptyProgram),
        1 => Ok(stack[0]),
        n => Err(ToyError::LeftoverStack(n)),
    }
}

/// In-process runner for the toy language. Exceeding the step budget is
/// reported as a timeout.
#[derive(Debug, Clone, Copy)]
pub struct ToyRunner {
    pub max_steps: usize,
}

impl Default for ToyRunner {
    fn default() -> Self {
        Self { max_steps: 64 }
    }
}

impl Runner for ToyRunner {
    fn language(&self) -> LanguageTag {
        LanguageTag::Toy
    }

    fn execute(&self, program: &str, input: &str) -> Outcome {
        let result = parse_binding(input).and_then(|x| evaluate(program, x, self.max_steps));
        match result {
            Ok(v) => Outcome::Completed(v.to_string()),
            Err(ToyError::StepLimit(_)) => Outcome::Timeout,
            Err(e) => Outcome::RuntimeError(e.to_string()),
        }
    }
}
