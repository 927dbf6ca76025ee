use std::fmt;

use serde::{Deserialize, Serialize};

/// Index of a client thread.
pub type ThreadId = usize;

/// A value stored in a data structure or returned by an operation.
///
/// `Unit` plays the role of the bottom value returned by enqueues (and by a
/// dequeue that gives up, in the emptiness-check variant).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Unit,
    Int(i64),
    Bool(bool),
}

impl Value {
    pub fn as_int(self) -> Option<i64> {
        match self {
            Value::Int(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_bool(self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(b),
            _ => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Unit => f.write_str("⊥"),
            Value::Int(v) => write!(f, "{v}"),
            Value::Bool(b) => write!(f, "{b}"),
        }
    }
}

/// Operation names across the supported structures.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Op {
    Enq,
    Deq,
    Insert,
    Remove,
    Contains,
}

impl Op {
    pub fn name(self) -> &'static str {
        match self {
            Op::Enq => "enq",
            Op::Deq => "deq",
            Op::Insert => "insert",
            Op::Remove => "remove",
            Op::Contains => "contains",
        }
    }

    pub fn parse(s: &str) -> Option<Op> {
        match s.to_ascii_lowercase().as_str() {
            "enq" | "enqueue" => Some(Op::Enq),
            "deq" | "dequeue" => Some(Op::Deq),
            "ins" | "insert" => Some(Op::Insert),
            "rem" | "remove" => Some(Op::Remove),
            "con" | "contains" => Some(Op::Contains),
            _ => None,
        }
    }

    pub fn is_queue_op(self) -> bool {
        matches!(self, Op::Enq | Op::Deq)
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}
