//! Constraint language: a boolean-expression subset of OCL parsed from
//! class annotations and evaluated as invariants after each mutation.
//!
//! Grammar (see docs/ocl-grammar.md for the full EBNF), lowest precedence
//! first: `implies` (right-assoc), `or`, `and`, comparison (`=`, `<>`,
//! `<`, `<=`, `>`, `>=`), additive, multiplicative, unary (`not`, `-`),
//! then postfix navigation (`.feature`) and arrow operations
//! (`->size()`, `->isEmpty()`, `->notEmpty()`, `->includes(x)`,
//! `->forAll(v | b)`, `->exists(v | b)`, `->select(v | b)`).

mod eval;
mod parse;

pub use eval::{evaluate, EvalError, Value};

use crate::instance::{Eid, ModelInstance};
use crate::metamodel::{DataType, Feature, Metamodel};

/// Expression tree of the constraint subset.
#[derive(Debug, Clone, PartialEq)]
pub enum OclExpr {
    IntLit(i64),
    FloatLit(f64),
    StrLit(String),
    BoolLit(bool),
    SelfRef,
    /// An iterator variable bound by forAll/exists/select.
    Var(String),
    /// Attribute or reference navigation on an object-valued expression.
    Nav {
        base: Box<OclExpr>,
        feature: String,
    },
    /// Collection operation applied with arrow syntax.
    Arrow {
        base: Box<OclExpr>,
        op: ArrowOp,
    },
    Unary {
        op: UnaryOp,
        expr: Box<OclExpr>,
    },
    Binary {
        op: BinOp,
        lhs: Box<OclExpr>,
        rhs: Box<OclExpr>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum ArrowOp {
    Size,
    IsEmpty,
    NotEmpty,
    Includes(Box<OclExpr>),
    ForAll { var: String, body: Box<OclExpr> },
    Exists { var: String, body: Box<OclExpr> },
    Select { var: String, body: Box<OclExpr> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Not,
    Neg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Add,
    Sub,
    Mul,
    Div,
    And,
    Or,
    Implies,
}

/// Static type of an expression under a context class.
#[derive(Debug, Clone, PartialEq)]
pub enum Ty {
    Bool,
    Int,
    Float,
    Str,
    Object(String),
    Collection(Box<Ty>),
}

impl std::fmt::Display for Ty {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Ty::Bool => write!(f, "boolean"),
            Ty::Int => write!(f, "integer"),
            Ty::Float => write!(f, "float"),
            Ty::Str => write!(f, "string"),
            Ty::Object(c) => write!(f, "{c}"),
            Ty::Collection(e) => write!(f, "collection({e})"),
        }
    }
}

impl Ty {
    fn from_datatype(d: DataType) -> Ty {
        match d {
            DataType::String => Ty::Str,
            DataType::Boolean => Ty::Bool,
            DataType::Integer => Ty::Int,
            DataType::Float => Ty::Float,
        }
    }

    fn is_numeric(&self) -> bool {
        matches!(self, Ty::Int | Ty::Float)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum OclError {
    /// `at` is a zero-based character offset into the constraint text.
    #[error("syntax error at offset {at}: {message}")]
    Syntax { at: usize, message: String },
    #[error("type error: {0}")]
    Type(String),
    #[error("invariant root must be boolean, got {0}")]
    NonBooleanRoot(Ty),
    #[error("invariant {name} on class {class}: {source}")]
    Invariant {
        class: String,
        name: String,
        #[source]
        source: Box<OclError>,
    },
}

/// A named constraint attached to a context class.
#[derive(Debug, Clone)]
pub struct Invariant {
    pub name: String,
    pub context: String,
    pub source: String,
    pub ast: OclExpr,
    /// Listed in the class's "Ecore/constraints" annotation.
    pub active: bool,
}

/// All invariants of a metamodel, parsed and type-checked at load time.
#[derive(Debug, Clone, Default)]
pub struct InvariantSet {
    pub invariants: Vec<Invariant>,
}

impl InvariantSet {
    /// Active invariants applicable to elements of `class`: those whose
    /// context is `class` or one of its supertypes.
    pub fn applicable<'a>(
        &'a self,
        m: &'a Metamodel,
        class: &'a str,
    ) -> impl Iterator<Item = &'a Invariant> {
        self.invariants
            .iter()
            .filter(move |inv| inv.active && m.is_subtype(class, &inv.context).unwrap_or(false))
    }
}

/// How an invariant failed on a particular element.
#[derive(Debug, Clone, PartialEq)]
pub enum ViolationKind {
    /// The invariant evaluated to false.
    Violated,
    /// Evaluation failed (e.g. division by zero); fail-closed, so this
    /// still blocks the mutation, but is reported distinctly.
    EvalError(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub invariant: String,
    pub context: String,
    pub element: Eid,
    pub kind: ViolationKind,
}

/// Outcome of checking one instance; empty iff all active invariants hold.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ViolationReport {
    pub violations: Vec<Violation>,
}

impl ViolationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Parse and type-check a constraint under a context class. The root
/// expression must be boolean-typed.
pub fn parse_ocl(text: &str, context: &str, m: &Metamodel) -> Result<OclExpr, OclError> {
    let ast = parse::parse(text)?;
    let ty = typecheck(&ast, context, m, &mut Vec::new())?;
    if ty != Ty::Bool {
        return Err(OclError::NonBooleanRoot(ty));
    }
    Ok(ast)
}

/// Parse every "OCL" annotation entry of every class, failing fast on the
/// first parse or type error. Entries named in "Ecore/constraints" are
/// marked active.
pub fn collect_invariants(m: &Metamodel) -> Result<InvariantSet, OclError> {
    let mut invariants = Vec::new();
    for class in m.classes() {
        for (name, source) in &class.annotations.ocl {
            let ast = parse_ocl(source, &class.name, m).map_err(|e| OclError::Invariant {
                class: class.name.clone(),
                name: name.clone(),
                source: Box::new(e),
            })?;
            invariants.push(Invariant {
                name: name.clone(),
                context: class.name.clone(),
                source: source.to_string(),
                ast,
                active: class.annotations.active_constraints.contains(name),
            });
        }
    }
    Ok(InvariantSet { invariants })
}

/// Evaluate every active invariant on every element whose class matches,
/// over the whole instance. Returns an empty report when validation is
/// deactivated for the instance.
pub fn check_instance(i: &ModelInstance, set: &InvariantSet) -> ViolationReport {
    let mut report = ViolationReport::default();
    if !i.validation_active {
        return report;
    }
    for e in i.elements() {
        for inv in set.applicable(&i.metamodel, &e.class) {
            let kind = match evaluate(&inv.ast, e.eid, i) {
                Ok(Value::Bool(true)) => continue,
                Ok(Value::Bool(false)) => ViolationKind::Violated,
                Ok(other) => {
                    ViolationKind::EvalError(format!("non-boolean result {other:?}"))
                }
                Err(err) => ViolationKind::EvalError(err.to_string()),
            };
            report.violations.push(Violation {
                invariant: inv.name.clone(),
                context: inv.context.clone(),
                element: e.eid,
                kind,
            });
        }
    }
    report
}

// ---------------------------------------------------------------------------
// Type checking
// ---------------------------------------------------------------------------

/// Infer the type of `x` with `self` bound to `context` and iterator
/// variables bound in `env` (innermost last).
fn typecheck(
    x: &OclExpr,
    context: &str,
    m: &Metamodel,
    env: &mut Vec<(String, Ty)>,
) -> Result<Ty, OclError> {
    match x {
        OclExpr::IntLit(_) => Ok(Ty::Int),
        OclExpr::FloatLit(_) => Ok(Ty::Float),
        OclExpr::StrLit(_) => Ok(Ty::Str),
        OclExpr::BoolLit(_) => Ok(Ty::Bool),
        OclExpr::SelfRef => Ok(Ty::Object(context.to_string())),
        OclExpr::Var(name) => env
            .iter()
            .rev()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t.clone())
            .ok_or_else(|| OclError::Type(format!("unknown name {name}"))),
        OclExpr::Nav { base, feature } => {
            let base_ty = typecheck(base, context, m, env)?;
            let Ty::Object(class) = base_ty else {
                return Err(OclError::Type(format!(
                    "navigation .{feature} requires an object, got {base_ty}"
                )));
            };
            match m.feature(&class, feature) {
                Some(Feature::Attribute(a)) => {
                    let elem = Ty::from_datatype(a.datatype);
                    Ok(if a.many {
                        Ty::Collection(Box::new(elem))
                    } else {
                        elem
                    })
                }
                Some(Feature::Reference(r)) => {
                    let elem = Ty::Object(r.target.clone());
                    Ok(if r.many() {
                        Ty::Collection(Box::new(elem))
                    } else {
                        elem
                    })
                }
                None => Err(OclError::Type(format!(
                    "class {class} has no feature {feature}"
                ))),
            }
        }
        OclExpr::Arrow { base, op } => {
            let base_ty = typecheck(base, context, m, env)?;
            let Ty::Collection(elem) = base_ty else {
                return Err(OclError::Type(format!(
                    "arrow operation requires a collection, got {base_ty}"
                )));
            };
            match op {
                ArrowOp::Size => Ok(Ty::Int),
                ArrowOp::IsEmpty | ArrowOp::NotEmpty => Ok(Ty::Bool),
                ArrowOp::Includes(arg) => {
                    let arg_ty = typecheck(arg, context, m, env)?;
                    if !eq_compatible(&arg_ty, &elem) {
                        return Err(OclError::Type(format!(
                            "includes argument type {arg_ty} does not match element type {elem}"
                        )));
                    }
                    Ok(Ty::Bool)
                }
                ArrowOp::ForAll { var, body } | ArrowOp::Exists { var, body } => {
                    env.push((var.clone(), (*elem).clone()));
                    let body_ty = typecheck(body, context, m, env);
                    env.pop();
                    match body_ty? {
                        Ty::Bool => Ok(Ty::Bool),
                        other => Err(OclError::Type(format!(
                            "iterator body must be boolean, got {other}"
                        ))),
                    }
                }
                ArrowOp::Select { var, body } => {
                    env.push((var.clone(), (*elem).clone()));
                    let body_ty = typecheck(body, context, m, env);
                    env.pop();
                    match body_ty? {
                        Ty::Bool => Ok(Ty::Collection(elem)),
                        other => Err(OclError::Type(format!(
                            "select body must be boolean, got {other}"
                        ))),
                    }
                }
            }
        }
        OclExpr::Unary { op, expr } => {
            let ty = typecheck(expr, context, m, env)?;
            match op {
                UnaryOp::Not if ty == Ty::Bool => Ok(Ty::Bool),
                UnaryOp::Not => Err(OclError::Type(format!("not requires boolean, got {ty}"))),
                UnaryOp::Neg if ty.is_numeric() => Ok(ty),
                UnaryOp::Neg => Err(OclError::Type(format!(
                    "unary minus requires a number, got {ty}"
                ))),
            }
        }
        OclExpr::Binary { op, lhs, rhs } => {
            let lt = typecheck(lhs, context, m, env)?;
            let rt = typecheck(rhs, context, m, env)?;
            match op {
                BinOp::And | BinOp::Or | BinOp::Implies => {
                    if lt == Ty::Bool && rt == Ty::Bool {
                        Ok(Ty::Bool)
                    } else {
                        Err(OclError::Type(format!(
                            "boolean connective over {lt} and {rt}"
                        )))
                    }
                }
                BinOp::Eq | BinOp::Ne => {
                    if eq_compatible(&lt, &rt) {
                        Ok(Ty::Bool)
                    } else {
                        Err(OclError::Type(format!("cannot compare {lt} with {rt}")))
                    }
                }
                BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => {
                    if lt.is_numeric() && rt.is_numeric() {
                        Ok(Ty::Bool)
                    } else {
                        Err(OclError::Type(format!(
                            "ordering comparison requires numbers, got {lt} and {rt}"
                        )))
                    }
                }
                BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Div => {
                    if lt.is_numeric() && rt.is_numeric() {
                        Ok(if lt == Ty::Float || rt == Ty::Float || *op == BinOp::Div {
                            Ty::Float
                        } else {
                            Ty::Int
                        })
                    } else {
                        Err(OclError::Type(format!(
                            "arithmetic requires numbers, got {lt} and {rt}"
                        )))
                    }
                }
            }
        }
    }
}

/// Whether two types may appear on the two sides of `=`/`<>`: equal types,
/// any two numbers, or any two object types (dynamic subtype dispatch).
fn eq_compatible(a: &Ty, b: &Ty) -> bool {
    a == b
        || (a.is_numeric() && b.is_numeric())
        || matches!((a, b), (Ty::Object(_), Ty::Object(_)))
}
