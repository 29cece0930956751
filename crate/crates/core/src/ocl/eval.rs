//! Evaluation of type-checked constraint expressions against one element
//! of a model instance.

use crate::instance::{AttrValue, Eid, ModelInstance, RefSlot, Scalar};
use crate::metamodel::Feature;

use super::{ArrowOp, BinOp, OclExpr, UnaryOp};

/// Runtime value of a constraint expression. `Unset` is the result of
/// navigating an unset single-valued feature.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
    Object(Eid),
    Collection(Vec<Value>),
    Unset,
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("arithmetic over an unset value")]
    UnsetArithmetic,
    #[error("arithmetic result is not finite")]
    NonFinite,
    #[error("navigation .{feature} on a non-object value")]
    BadNavigation { feature: String },
    #[error("arrow operation on a non-collection value")]
    NotACollection,
    #[error("unknown name {0}")]
    UnknownName(String),
    #[error("boolean operation over a non-boolean value")]
    NotABoolean,
}

fn scalar_value(s: &Scalar) -> Value {
    match s {
        Scalar::Str(v) => Value::Str(v.clone()),
        Scalar::Bool(b) => Value::Bool(*b),
        Scalar::Int(n) => Value::Int(*n),
        Scalar::Float(x) => Value::Float(*x),
    }
}

/// Equality used by `=`, `<>` and `includes`: numbers compare across
/// int/float, objects by identity, both-unset is equal, and a set value
/// never equals an unset one.
fn value_eq(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Unset, Value::Unset) => true,
        (Value::Unset, _) | (_, Value::Unset) => false,
        (Value::Int(x), Value::Float(y)) | (Value::Float(y), Value::Int(x)) => {
            *x as f64 == *y
        }
        (a, b) => a == b,
    }
}

/// Evaluate `x` with `self` bound to element `e` of instance `i`.
pub fn evaluate(x: &OclExpr, e: Eid, i: &ModelInstance) -> Result<Value, EvalError> {
    eval(x, e, i, &mut Vec::new())
}

fn eval(
    x: &OclExpr,
    slf: Eid,
    i: &ModelInstance,
    env: &mut Vec<(String, Value)>,
) -> Result<Value, EvalError> {
    match x {
        OclExpr::IntLit(n) => Ok(Value::Int(*n)),
        OclExpr::FloatLit(f) => Ok(Value::Float(*f)),
        OclExpr::StrLit(s) => Ok(Value::Str(s.clone())),
        OclExpr::BoolLit(b) => Ok(Value::Bool(*b)),
        OclExpr::SelfRef => Ok(Value::Object(slf)),
        OclExpr::Var(name) => env
            .iter()
            .rev()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.clone())
            .ok_or_else(|| EvalError::UnknownName(name.clone())),
        OclExpr::Nav { base, feature } => {
            let base_value = eval(base, slf, i, env)?;
            match base_value {
                // Navigation propagates unset.
                Value::Unset => Ok(Value::Unset),
                Value::Object(eid) => navigate(i, eid, feature),
                _ => Err(EvalError::BadNavigation {
                    feature: feature.clone(),
                }),
            }
        }
        OclExpr::Arrow { base, op } => {
            let items = match eval(base, slf, i, env)? {
                Value::Collection(items) => items,
                _ => return Err(EvalError::NotACollection),
            };
            match op {
                ArrowOp::Size => Ok(Value::Int(items.len() as i64)),
                ArrowOp::IsEmpty => Ok(Value::Bool(items.is_empty())),
                ArrowOp::NotEmpty => Ok(Value::Bool(!items.is_empty())),
                ArrowOp::Includes(arg) => {
                    let needle = eval(arg, slf, i, env)?;
                    Ok(Value::Bool(items.iter().any(|v| value_eq(v, &needle))))
                }
                ArrowOp::ForAll { var, body } => {
                    for item in items {
                        env.push((var.clone(), item));
                        let r = eval(body, slf, i, env);
                        env.pop();
                        match r? {
                            Value::Bool(true) => {}
                            Value::Bool(false) => return Ok(Value::Bool(false)),
                            _ => return Err(EvalError::NotABoolean),
                        }
                    }
                    Ok(Value::Bool(true))
                }
                ArrowOp::Exists { var, body } => {
                    for item in items {
                        env.push((var.clone(), item));
                        let r = eval(body, slf, i, env);
                        env.pop();
                        match r? {
                            Value::Bool(true) => return Ok(Value::Bool(true)),
                            Value::Bool(false) => {}
                            _ => return Err(EvalError::NotABoolean),
                        }
                    }
                    Ok(Value::Bool(false))
                }
                ArrowOp::Select { var, body } => {
                    let mut kept = Vec::new();
                    for item in items {
                        env.push((var.clone(), item.clone()));
                        let r = eval(body, slf, i, env);
                        env.pop();
                        match r? {
                            Value::Bool(true) => kept.push(item),
                            Value::Bool(false) => {}
                            _ => return Err(EvalError::NotABoolean),
                        }
                    }
                    Ok(Value::Collection(kept))
                }
            }
        }
        OclExpr::Unary { op, expr } => {
            let v = eval(expr, slf, i, env)?;
            match (op, v) {
                (UnaryOp::Not, Value::Bool(b)) => Ok(Value::Bool(!b)),
                (UnaryOp::Not, _) => Err(EvalError::NotABoolean),
                (UnaryOp::Neg, Value::Int(n)) => Ok(Value::Int(-n)),
                (UnaryOp::Neg, Value::Float(x)) => Ok(Value::Float(-x)),
                (UnaryOp::Neg, Value::Unset) => Err(EvalError::UnsetArithmetic),
                (UnaryOp::Neg, _) => Err(EvalError::UnsetArithmetic),
            }
        }
        OclExpr::Binary { op, lhs, rhs } => binary(*op, lhs, rhs, slf, i, env),
    }
}

fn navigate(i: &ModelInstance, eid: Eid, feature: &str) -> Result<Value, EvalError> {
    let Some(e) = i.element(eid) else {
        return Err(EvalError::BadNavigation {
            feature: feature.to_string(),
        });
    };
    match i.metamodel.feature(&e.class, feature) {
        Some(Feature::Attribute(a)) => Ok(match e.attr(feature) {
            Some(AttrValue::One(s)) => scalar_value(s),
            Some(AttrValue::Many(vs)) => {
                Value::Collection(vs.iter().map(scalar_value).collect())
            }
            // Unset many-valued features are empty collections.
            None if a.many => Value::Collection(Vec::new()),
            None => Value::Unset,
        }),
        Some(Feature::Reference(r)) => Ok(match e.slot(feature) {
            Some(RefSlot::One(t)) => Value::Object(*t),
            Some(RefSlot::Many(ts)) => {
                Value::Collection(ts.iter().map(|t| Value::Object(*t)).collect())
            }
            None if r.many() => Value::Collection(Vec::new()),
            None => Value::Unset,
        }),
        None => Err(EvalError::BadNavigation {
            feature: feature.to_string(),
        }),
    }
}

fn binary(
    op: BinOp,
    lhs: &OclExpr,
    rhs: &OclExpr,
    slf: Eid,
    i: &ModelInstance,
    env: &mut Vec<(String, Value)>,
) -> Result<Value, EvalError> {
    // Short-circuit the boolean connectives.
    match op {
        BinOp::And => {
            return match eval(lhs, slf, i, env)? {
                Value::Bool(false) => Ok(Value::Bool(false)),
                Value::Bool(true) => match eval(rhs, slf, i, env)? {
                    b @ Value::Bool(_) => Ok(b),
                    _ => Err(EvalError::NotABoolean),
                },
                _ => Err(EvalError::NotABoolean),
            }
        }
        BinOp::Or => {
            return match eval(lhs, slf, i, env)? {
                Value::Bool(true) => Ok(Value::Bool(true)),
                Value::Bool(false) => match eval(rhs, slf, i, env)? {
                    b @ Value::Bool(_) => Ok(b),
                    _ => Err(EvalError::NotABoolean),
                },
                _ => Err(EvalError::NotABoolean),
            }
        }
        BinOp::Implies => {
            return match eval(lhs, slf, i, env)? {
                Value::Bool(false) => Ok(Value::Bool(true)),
                Value::Bool(true) => match eval(rhs, slf, i, env)? {
                    b @ Value::Bool(_) => Ok(b),
                    _ => Err(EvalError::NotABoolean),
                },
                _ => Err(EvalError::NotABoolean),
            }
        }
        _ => {}
    }

    let a = eval(lhs, slf, i, env)?;
    let b = eval(rhs, slf, i, env)?;
    match op {
        BinOp::Eq => Ok(Value::Bool(value_eq(&a, &b))),
        // `<>` over one unset operand is false, like every other
        // comparison against unset; both-unset is also false (negation of
        // the both-unset `=` case).
        BinOp::Ne => match (&a, &b) {
            (Value::Unset, Value::Unset) => Ok(Value::Bool(false)),
            (Value::Unset, _) | (_, Value::Unset) => Ok(Value::Bool(false)),
            _ => Ok(Value::Bool(!value_eq(&a, &b))),
        },
        BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => {
            if matches!(a, Value::Unset) || matches!(b, Value::Unset) {
                return Ok(Value::Bool(false));
            }
            let (x, y) = (as_f64(&a)?, as_f64(&b)?);
            Ok(Value::Bool(match op {
                BinOp::Lt => x < y,
                BinOp::Le => x <= y,
                BinOp::Gt => x > y,
                _ => x >= y,
            }))
        }
        BinOp::Add | BinOp::Sub | BinOp::Mul => {
            if matches!(a, Value::Unset) || matches!(b, Value::Unset) {
                return Err(EvalError::UnsetArithmetic);
            }
            match (&a, &b) {
                (Value::Int(x), Value::Int(y)) => {
                    let r = match op {
                        BinOp::Add => x.checked_add(*y),
                        BinOp::Sub => x.checked_sub(*y),
                        _ => x.checked_mul(*y),
                    };
                    r.map(Value::Int).ok_or(EvalError::NonFinite)
                }
                _ => {
                    let (x, y) = (as_f64(&a)?, as_f64(&b)?);
                    let r = match op {
                        BinOp::Add => x + y,
                        BinOp::Sub => x - y,
                        _ => x * y,
                    };
                    if r.is_finite() {
                        Ok(Value::Float(r))
                    } else {
                        Err(EvalError::NonFinite)
                    }
                }
            }
        }
        BinOp::Div => {
            if matches!(a, Value::Unset) || matches!(b, Value::Unset) {
                return Err(EvalError::UnsetArithmetic);
            }
            let (x, y) = (as_f64(&a)?, as_f64(&b)?);
            if y == 0.0 {
                return Err(EvalError::DivisionByZero);
            }
            let r = x / y;
            if r.is_finite() {
                Ok(Value::Float(r))
            } else {
                Err(EvalError::NonFinite)
            }
        }
        BinOp::And | BinOp::Or | BinOp::Implies => unreachable!("handled above"),
    }
}

fn as_f64(v: &Value) -> Result<f64, EvalError> {
    match v {
        Value::Int(n) => Ok(*n as f64),
        Value::Float(x) => Ok(*x),
        _ => Err(EvalError::UnsetArithmetic),
    }
}
