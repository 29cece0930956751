//! Differential checking of the constraint evaluator: random well-typed
//! expressions are generated as source text, parsed, and evaluated both by
//! the production evaluator and by an independently written brute-force
//! interpreter in this file. The two must agree — value for value, error
//! for error — on every (expression, instance) pair.

use std::sync::Arc;

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

use metarest_core::instance::{AttrValue, Eid, RefSlot, Scalar};
use metarest_core::ocl::{evaluate, parse_ocl, ArrowOp, BinOp, OclExpr, UnaryOp, Value};
use metarest_core::sample::random_instance;
use metarest_core::{Metamodel, ModelInstance};

// ---------------------------------------------------------------------------
// Random expression source generator (context class: Member)
// ---------------------------------------------------------------------------

/// Static kind of an iterator variable; every quantifier in the generated
/// grammar ranges over Parent collections, so a single kind suffices.
#[derive(Clone, Copy, PartialEq)]
enum Kind {
    Parent,
}

struct Gen<'a> {
    rng: &'a mut StdRng,
    /// Iterator variables in scope, with their kinds.
    vars: Vec<(String, Kind)>,
    next_var: usize,
}

impl Gen<'_> {
    fn boolean(&mut self, depth: usize) -> String {
        if depth == 0 {
            return if self.rng.gen() { "true" } else { "false" }.to_string();
        }
        match self.rng.gen_range(0..12) {
            0 => format!("({} and {})", self.boolean(depth - 1), self.boolean(depth - 1)),
            1 => format!("({} or {})", self.boolean(depth - 1), self.boolean(depth - 1)),
            2 => format!(
                "({} implies {})",
                self.boolean(depth - 1),
                self.boolean(depth - 1)
            ),
            3 => format!("not {}", self.boolean(depth - 1)),
            4 => {
                let op = ["<", "<=", ">", ">=", "=", "<>"].choose(self.rng).unwrap();
                format!("({} {op} {})", self.numeric(depth - 1), self.numeric(depth - 1))
            }
            5 => {
                let op = ["=", "<>"].choose(self.rng).unwrap();
                format!("({} {op} {})", self.string(depth - 1), self.string(depth - 1))
            }
            6 => format!("{}->isEmpty()", self.parent_collection(depth - 1)),
            7 => format!("{}->notEmpty()", self.parent_collection(depth - 1)),
            8 => {
                if let Some(parent) = self.parent_object() {
                    format!("{}->includes({parent})", self.parent_collection(depth - 1))
                } else {
                    self.boolean(depth - 1)
                }
            }
            9 | 10 => {
                let quantifier = ["forAll", "exists"].choose(self.rng).unwrap();
                let collection = self.parent_collection(depth - 1);
                let var = self.fresh_var(Kind::Parent);
                let body = self.boolean(depth - 1);
                self.vars.pop();
                format!("{collection}->{quantifier}({var} | {body})")
            }
            _ => {
                let op = ["=", "<>"].choose(self.rng).unwrap();
                match (self.parent_object(), self.parent_object()) {
                    (Some(a), Some(b)) => format!("({a} {op} {b})"),
                    _ => self.boolean(depth - 1),
                }
            }
        }
    }

    fn numeric(&mut self, depth: usize) -> String {
        if depth == 0 {
            return match self.rng.gen_range(0..4) {
                0 => self.rng.gen_range(-20..20).to_string(),
                1 => format!("{:.1}", self.rng.gen_range(-200..200) as f64 / 10.0),
                2 => "self.age".to_string(),
                _ => "self.favorite.weight".to_string(),
            };
        }
        match self.rng.gen_range(0..6) {
            0 => format!("({} + {})", self.numeric(depth - 1), self.numeric(depth - 1)),
            1 => format!("({} - {})", self.numeric(depth - 1), self.numeric(depth - 1)),
            2 => format!("({} * {})", self.numeric(depth - 1), self.numeric(depth - 1)),
            3 => format!("({} / {})", self.numeric(depth - 1), self.numeric(depth - 1)),
            4 => format!("-{}", self.numeric(depth - 1)),
            _ => format!("{}->size()", self.parent_collection(depth - 1)),
        }
    }

    fn string(&mut self, _depth: usize) -> String {
        match self.rng.gen_range(0..5) {
            0 => "'Simpson'".to_string(),
            1 => r"'x\'y'".to_string(),
            2 => "self.firstName".to_string(),
            3 => "self.lastName".to_string(),
            _ => match self.var_of(Kind::Parent) {
                Some(v) => format!("{v}.firstName"),
                None => "'Flanders'".to_string(),
            },
        }
    }

    fn parent_collection(&mut self, depth: usize) -> String {
        let base = match self.var_of(Kind::Parent) {
            Some(v) if self.rng.gen_bool(0.3) => format!("{v}.parents"),
            _ => "self.parents".to_string(),
        };
        if depth > 0 && self.rng.gen_bool(0.3) {
            let var = self.fresh_var(Kind::Parent);
            let body = self.boolean(depth - 1);
            self.vars.pop();
            format!("{base}->select({var} | {body})")
        } else {
            base
        }
    }

    fn parent_object(&mut self) -> Option<String> {
        self.var_of(Kind::Parent)
    }

    fn var_of(&mut self, kind: Kind) -> Option<String> {
        let matching: Vec<&String> = self
            .vars
            .iter()
            .filter(|(_, k)| *k == kind)
            .map(|(n, _)| n)
            .collect();
        matching.choose(self.rng).map(|s| s.to_string())
    }

    fn fresh_var(&mut self, kind: Kind) -> String {
        self.next_var += 1;
        let name = format!("v{}", self.next_var);
        self.vars.push((name.clone(), kind));
        name
    }
}

// ---------------------------------------------------------------------------
// Independent brute-force interpreter
// ---------------------------------------------------------------------------

/// Oracle values; `Missing` models the unset result.
#[derive(Debug, Clone, PartialEq)]
enum OVal {
    B(bool),
    I(i64),
    F(f64),
    S(String),
    O(Eid),
    L(Vec<OVal>),
    Missing,
}

type ORes = Result<OVal, String>;

fn o_eval(x: &OclExpr, slf: Eid, i: &ModelInstance, env: &[(String, OVal)]) -> ORes {
    match x {
        OclExpr::IntLit(n) => Ok(OVal::I(*n)),
        OclExpr::FloatLit(f) => Ok(OVal::F(*f)),
        OclExpr::StrLit(s) => Ok(OVal::S(s.clone())),
        OclExpr::BoolLit(b) => Ok(OVal::B(*b)),
        OclExpr::SelfRef => Ok(OVal::O(slf)),
        OclExpr::Var(name) => env
            .iter()
            .rev()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.clone())
            .ok_or_else(|| format!("unbound {name}")),
        OclExpr::Nav { base, feature } => match o_eval(base, slf, i, env)? {
            OVal::Missing => Ok(OVal::Missing),
            OVal::O(eid) => o_feature(i, eid, feature),
            _ => Err("navigation on non-object".to_string()),
        },
        OclExpr::Arrow { base, op } => {
            let OVal::L(items) = o_eval(base, slf, i, env)? else {
                return Err("arrow on non-collection".to_string());
            };
            o_arrow(op, items, slf, i, env)
        }
        OclExpr::Unary { op, expr } => {
            let v = o_eval(expr, slf, i, env)?;
            match op {
                UnaryOp::Not => match v {
                    OVal::B(b) => Ok(OVal::B(!b)),
                    _ => Err("not on non-boolean".to_string()),
                },
                UnaryOp::Neg => match v {
                    OVal::I(n) => Ok(OVal::I(-n)),
                    OVal::F(f) => Ok(OVal::F(-f)),
                    _ => Err("negation on non-number".to_string()),
                },
            }
        }
        OclExpr::Binary { op, lhs, rhs } => o_binary(*op, lhs, rhs, slf, i, env),
    }
}

fn o_feature(i: &ModelInstance, eid: Eid, feature: &str) -> ORes {
    let element = i.element(eid).ok_or("dangling object")?;
    if let Some(value) = element.attr(feature) {
        return Ok(match value {
            AttrValue::One(s) => o_scalar(s),
            AttrValue::Many(vs) => OVal::L(vs.iter().map(o_scalar).collect()),
        });
    }
    if let Some(slot) = element.refs.get(feature) {
        return Ok(match slot {
            RefSlot::One(t) => OVal::O(*t),
            RefSlot::Many(ts) => OVal::L(ts.iter().map(|t| OVal::O(*t)).collect()),
        });
    }
    // Absent feature: empty collection if declared many, otherwise unset.
    use metarest_core::metamodel::Feature;
    match i.metamodel.feature(&element.class, feature) {
        Some(Feature::Attribute(a)) if a.many => Ok(OVal::L(Vec::new())),
        Some(Feature::Reference(r)) if r.many() => Ok(OVal::L(Vec::new())),
        Some(_) => Ok(OVal::Missing),
        None => Err(format!("unknown feature {feature}")),
    }
}

fn o_scalar(s: &Scalar) -> OVal {
    match s {
        Scalar::Str(v) => OVal::S(v.clone()),
        Scalar::Bool(b) => OVal::B(*b),
        Scalar::Int(n) => OVal::I(*n),
        Scalar::Float(f) => OVal::F(*f),
    }
}

fn o_arrow(
    op: &ArrowOp,
    items: Vec<OVal>,
    slf: Eid,
    i: &ModelInstance,
    env: &[(String, OVal)],
) -> ORes {
    match op {
        ArrowOp::Size => Ok(OVal::I(items.len() as i64)),
        ArrowOp::IsEmpty => Ok(OVal::B(items.is_empty())),
        ArrowOp::NotEmpty => Ok(OVal::B(!items.is_empty())),
        ArrowOp::Includes(arg) => {
            let needle = o_eval(arg, slf, i, env)?;
            Ok(OVal::B(items.iter().any(|v| o_eq(v, &needle))))
        }
        ArrowOp::ForAll { var, body } => {
            for item in items {
                let mut scope = env.to_vec();
                scope.push((var.clone(), item));
                match o_eval(body, slf, i, &scope)? {
                    OVal::B(true) => {}
                    OVal::B(false) => return Ok(OVal::B(false)),
                    _ => return Err("quantifier body not boolean".to_string()),
                }
            }
            Ok(OVal::B(true))
        }
        ArrowOp::Exists { var, body } => {
            for item in items {
                let mut scope = env.to_vec();
                scope.push((var.clone(), item));
                match o_eval(body, slf, i, &scope)? {
                    OVal::B(true) => return Ok(OVal::B(true)),
                    OVal::B(false) => {}
                    _ => return Err("quantifier body not boolean".to_string()),
                }
            }
            Ok(OVal::B(false))
        }
        ArrowOp::Select { var, body } => {
            let mut kept = Vec::new();
            for item in items {
                let mut scope = env.to_vec();
                scope.push((var.clone(), item.clone()));
                match o_eval(body, slf, i, &scope)? {
                    OVal::B(true) => kept.push(item),
                    OVal::B(false) => {}
                    _ => return Err("selection body not boolean".to_string()),
                }
            }
            Ok(OVal::L(kept))
        }
    }
}

fn o_eq(a: &OVal, b: &OVal) -> bool {
    match (a, b) {
        (OVal::Missing, OVal::Missing) => true,
        (OVal::Missing, _) | (_, OVal::Missing) => false,
        (OVal::I(x), OVal::F(y)) | (OVal::F(y), OVal::I(x)) => *x as f64 == *y,
        _ => a == b,
    }
}

fn o_num(v: &OVal) -> Result<f64, String> {
    match v {
        OVal::I(n) => Ok(*n as f64),
        OVal::F(f) => Ok(*f),
        _ => Err("not a number".to_string()),
    }
}

fn o_binary(
    op: BinOp,
    lhs: &OclExpr,
    rhs: &OclExpr,
    slf: Eid,
    i: &ModelInstance,
    env: &[(String, OVal)],
) -> ORes {
    // Boolean connectives short-circuit on the left operand.
    if matches!(op, BinOp::And | BinOp::Or | BinOp::Implies) {
        let OVal::B(a) = o_eval(lhs, slf, i, env)? else {
            return Err("connective on non-boolean".to_string());
        };
        let decided = match op {
            BinOp::And => !a,
            BinOp::Or => a,
            BinOp::Implies => !a,
            _ => unreachable!(),
        };
        if decided {
            return Ok(OVal::B(matches!(op, BinOp::Or | BinOp::Implies)));
        }
        return match o_eval(rhs, slf, i, env)? {
            OVal::B(b) => Ok(OVal::B(b)),
            _ => Err("connective on non-boolean".to_string()),
        };
    }

    let a = o_eval(lhs, slf, i, env)?;
    let b = o_eval(rhs, slf, i, env)?;
    match op {
        BinOp::Eq => Ok(OVal::B(o_eq(&a, &b))),
        // Any unset operand makes `<>` false, including both-unset.
        BinOp::Ne => {
            if matches!(a, OVal::Missing) || matches!(b, OVal::Missing) {
                Ok(OVal::B(false))
            } else {
                Ok(OVal::B(!o_eq(&a, &b)))
            }
        }
        BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => {
            if matches!(a, OVal::Missing) || matches!(b, OVal::Missing) {
                return Ok(OVal::B(false));
            }
            let (x, y) = (o_num(&a)?, o_num(&b)?);
            Ok(OVal::B(match op {
                BinOp::Lt => x < y,
                BinOp::Le => x <= y,
                BinOp::Gt => x > y,
                _ => x >= y,
            }))
        }
        BinOp::Add | BinOp::Sub | BinOp::Mul => {
            if matches!(a, OVal::Missing) || matches!(b, OVal::Missing) {
                return Err("arithmetic on unset".to_string());
            }
            if let (OVal::I(x), OVal::I(y)) = (&a, &b) {
                let r = match op {
                    BinOp::Add => x.checked_add(*y),
                    BinOp::Sub => x.checked_sub(*y),
                    _ => x.checked_mul(*y),
                };
                return r.map(OVal::I).ok_or_else(|| "overflow".to_string());
            }
            let (x, y) = (o_num(&a)?, o_num(&b)?);
            let r = match op {
                BinOp::Add => x + y,
                BinOp::Sub => x - y,
                _ => x * y,
            };
            if r.is_finite() {
                Ok(OVal::F(r))
            } else {
                Err("not finite".to_string())
            }
        }
        BinOp::Div => {
            if matches!(a, OVal::Missing) || matches!(b, OVal::Missing) {
                return Err("arithmetic on unset".to_string());
            }
            let (x, y) = (o_num(&a)?, o_num(&b)?);
            if y == 0.0 {
                return Err("division by zero".to_string());
            }
            let r = x / y;
            if r.is_finite() {
                Ok(OVal::F(r))
            } else {
                Err("not finite".to_string())
            }
        }
        _ => unreachable!(),
    }
}

/// Map a production value into the oracle's domain for comparison.
fn from_value(v: &Value) -> OVal {
    match v {
        Value::Bool(b) => OVal::B(*b),
        Value::Int(n) => OVal::I(*n),
        Value::Float(f) => OVal::F(*f),
        Value::Str(s) => OVal::S(s.clone()),
        Value::Object(e) => OVal::O(*e),
        Value::Collection(vs) => OVal::L(vs.iter().map(from_value).collect()),
        Value::Unset => OVal::Missing,
    }
}

// ---------------------------------------------------------------------------
// The differential run
// ---------------------------------------------------------------------------

/// Compare the production evaluator against the independent interpreter on
/// one expression over every Member element of one instance; panics on the
/// first disagreement and returns the number of elements evaluated.
fn compare_on_instance(
    metamodel: &Arc<Metamodel>,
    ast: &OclExpr,
    source: &str,
    instance: &ModelInstance,
) -> usize {
    let mut evaluations = 0;
    for element in instance.elements() {
        if !metamodel
            .is_subtype(&element.class, "Member")
            .unwrap_or(false)
        {
            continue;
        }
        evaluations += 1;
        let production = evaluate(ast, element.eid, instance);
        let oracle = o_eval(ast, element.eid, instance, &[]);
        match (&production, &oracle) {
            (Ok(p), Ok(o)) => assert_eq!(
                &from_value(p),
                o,
                "value mismatch on {} for {}\n{source}",
                element.eid,
                element.class
            ),
            (Err(_), Err(_)) => {}
            (p, o) => panic!(
                "outcome mismatch on {}: production {p:?}, oracle {o:?}\n{source}",
                element.eid
            ),
        }
    }
    evaluations
}

/// Run `rounds` random expressions of the given depth over a pool of random
/// instances; returns (expression/instance pairs, element evaluations).
pub fn differential_run(
    metamodel: &Arc<Metamodel>,
    rounds: u64,
    depth: usize,
    instance_pool: usize,
    max_elements: usize,
) -> (usize, usize) {
    let instances: Vec<ModelInstance> = (0..instance_pool as u64)
        .map(|seed| {
            let mut rng = StdRng::seed_from_u64(1000 + seed);
            random_instance(metamodel, &mut rng, "T", max_elements)
        })
        .collect();

    let mut pairs = 0usize;
    let mut evaluations = 0usize;
    for round in 0..rounds {
        let mut rng = StdRng::seed_from_u64(round);
        let mut generator = Gen {
            rng: &mut rng,
            vars: Vec::new(),
            next_var: 0,
        };
        let source = generator.boolean(depth);
        let ast = parse_ocl(&source, "Member", metamodel)
            .unwrap_or_else(|e| panic!("generated source must parse: {e}\n{source}"));
        let instance = &instances[(round % instances.len() as u64) as usize];
        pairs += 1;
        evaluations += compare_on_instance(metamodel, &ast, &source, instance);
    }
    (pairs, evaluations)
}

/// The random generator exercises every operator; this checks a few
/// hand-written expressions against the oracle as well.
pub fn hand_written_check(metamodel: &Arc<Metamodel>) {
    let mut rng = StdRng::seed_from_u64(42);
    let instance = random_instance(metamodel, &mut rng, "T", 30);
    let sources = [
        "self.parents->size() <= 2",
        "self.parents->forAll(p | p.age > 0 implies p.age < 200)",
        "self.parents->select(p | p.firstName <> self.firstName)->notEmpty() or true",
        "self.favorite.weight > 0.0 or self.favorite.weight <= 0.0 or true",
        "self.age * 2 >= self.age implies not (self.age < 0 and self.age > 0)",
        "self.parents->exists(p | p.parents->isEmpty())",
        "self.firstName = self.firstName and self.lastName = self.lastName",
    ];
    for source in sources {
        let ast = parse_ocl(source, "Member", metamodel).unwrap();
        compare_on_instance(metamodel, &ast, source, &instance);
    }
}
