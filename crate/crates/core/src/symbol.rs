use std::fmt;

use serde::{Deserialize, Serialize};

/// A letter of a finite alphabet.
///
/// Integers carry a numeric value (used by squared-error and absolute
/// distortion); labels are opaque; blocks are interned tuples produced by
/// the sliding-block reduction.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Symbol {
    Int(i64),
    Label(String),
    Block(Vec<Symbol>),
}

impl Symbol {
    /// Parses a token: integers become [`Symbol::Int`], anything else a label.
    pub fn parse(token: &str) -> Symbol {
        let token = token.trim();
        match token.parse::<i64>() {
            Ok(v) => Symbol::Int(v),
            Err(_) => Symbol::Label(token.to_string()),
        }
    }

    pub fn numeric(&self) -> Option<f64> {
        match self {
            Symbol::Int(v) => Some(*v as f64),
            _ => None,
        }
    }
}

impl From<i64> for Symbol {
    fn from(v: i64) -> Self {
        Symbol::Int(v)
    }
}

impl From<&str> for Symbol {
    fn from(v: &str) -> Self {
        Symbol::Label(v.to_string())
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Symbol::Int(v) => write!(f, "{v}"),
            Symbol::Label(s) => write!(f, "{s}"),
            Symbol::Block(parts) => {
                write!(f, "(")?;
                for (i, p) in parts.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{p}")?;
                }
                write!(f, ")")
            }
        }
    }
}

/// Convenience for building integer alphabets `{lo, ..., hi}`.
pub fn int_alphabet(lo: i64, hi: i64) -> Vec<Symbol> {
    (lo..=hi).map(Symbol::Int).collect()
}
