use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::ast::Expr;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Null,
    Bool(bool),
    Int(i64),
    Record(BTreeMap<String, Value>),
}

impl Value {
    pub fn type_name(&self) -> &'static str {
        match self {
            Value::Null => "null",
            Value::Bool(_) => "bool",
            Value::Int(_) => "int",
            Value::Record(_) => "record",
        }
    }

    /// The literal expression that evaluates to this value.
    pub fn to_expr(&self) -> Expr {
        match self {
            Value::Null => Expr::Null,
            Value::Bool(b) => Expr::Bool(*b),
            Value::Int(n) => Expr::Int(*n),
            Value::Record(fields) => {
                Expr::Record(fields.iter().map(|(k, v)| (k.clone(), v.to_expr())).collect())
            }
        }
    }

    /// Zero value of the same shape: 0, false, empty record; null stays null.
    pub fn type_default(&self) -> Value {
        match self {
            Value::Null => Value::Null,
            Value::Bool(_) => Value::Bool(false),
            Value::Int(_) => Value::Int(0),
            Value::Record(_) => Value::Record(BTreeMap::new()),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_expr())
    }
}

/// Ordered variable bindings as seen at one program point.
pub type Bindings = Vec<(String, Value)>;

pub fn lookup<'a>(bindings: &'a Bindings, name: &str) -> Option<&'a Value> {
    bindings.iter().find(|(n, _)| n == name).map(|(_, v)| v)
}
