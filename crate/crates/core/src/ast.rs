//! Abstract syntax for Cajal terms, values, types and linear contexts.
//!
//! Terms carry type annotations on their binders so that checking is
//! syntax directed. Names are reference counted strings; cloning an
//! expression never copies identifier text.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::sync::Arc;

/// An identifier.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Name(Arc<str>);

impl Name {
    pub fn new(s: &str) -> Self {
        Name(Arc::from(s))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<&str> for Name {
    fn from(s: &str) -> Self {
        Name::new(s)
    }
}

impl From<String> for Name {
    fn from(s: String) -> Self {
        Name(Arc::from(s))
    }
}

impl fmt::Debug for Name {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", &*self.0)
    }
}

impl fmt::Display for Name {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Type {
    Bool,
    Lolli(Box<Type>, Box<Type>),
}

impl Type {
    pub fn lolli(domain: Type, codomain: Type) -> Type {
        Type::Lolli(Box::new(domain), Box::new(codomain))
    }

    /// `2 -o 2`
    pub fn bool_to_bool() -> Type {
        Type::lolli(Type::Bool, Type::Bool)
    }

    pub fn is_arrow(&self) -> bool {
        matches!(self, Type::Lolli(..))
    }

    pub fn depth(&self) -> usize {
        match self {
            Type::Bool => 1,
            Type::Lolli(a, b) => 1 + a.depth().max(b.depth()),
        }
    }
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Type::Bool => f.write_str("2"),
            Type::Lolli(a, b) => {
                if a.is_arrow() {
                    write!(f, "({a}) -o {b}")
                } else {
                    write!(f, "{a} -o {b}")
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Expr {
    Var(Name),
    True,
    False,
    If(Box<Expr>, Box<Expr>, Box<Expr>),
    Lam(Name, Type, Box<Expr>),
    App(Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn var(name: impl Into<Name>) -> Expr {
        Expr::Var(name.into())
    }

    pub fn lam(binder: impl Into<Name>, annot: Type, body: Expr) -> Expr {
        Expr::Lam(binder.into(), annot, Box::new(body))
    }

    pub fn app(func: Expr, arg: Expr) -> Expr {
        Expr::App(Box::new(func), Box::new(arg))
    }

    pub fn ite(cond: Expr, then_branch: Expr, else_branch: Expr) -> Expr {
        Expr::If(Box::new(cond), Box::new(then_branch), Box::new(else_branch))
    }

    pub fn is_value(&self) -> bool {
        matches!(self, Expr::True | Expr::False | Expr::Lam(..))
    }

    /// Number of syntax nodes.
    pub fn size(&self) -> usize {
        match self {
            Expr::Var(_) | Expr::True | Expr::False => 1,
            Expr::If(c, t, e) => 1 + c.size() + t.size() + e.size(),
            Expr::Lam(_, _, b) => 1 + b.size(),
            Expr::App(f, a) => 1 + f.size() + a.size(),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Expr::Var(_) | Expr::True | Expr::False => 1,
            Expr::If(c, t, e) => 1 + c.depth().max(t.depth()).max(e.depth()),
            Expr::Lam(_, _, b) => 1 + b.depth(),
            Expr::App(f, a) => 1 + f.depth().max(a.depth()),
        }
    }

    pub fn contains_lam(&self) -> bool {
        self.any(&|e| matches!(e, Expr::Lam(..)))
    }

    pub fn contains_if(&self) -> bool {
        self.any(&|e| matches!(e, Expr::If(..)))
    }

    fn any(&self, pred: &dyn Fn(&Expr) -> bool) -> bool {
        if pred(self) {
            return true;
        }
        match self {
            Expr::Var(_) | Expr::True | Expr::False => false,
            Expr::If(c, t, e) => c.any(pred) || t.any(pred) || e.any(pred),
            Expr::Lam(_, _, b) => b.any(pred),
            Expr::App(f, a) => f.any(pred) || a.any(pred),
        }
    }

    /// All binder names, in pre-order.
    pub fn binders(&self) -> Vec<Name> {
        fn go(e: &Expr, out: &mut Vec<Name>) {
            match e {
                Expr::Var(_) | Expr::True | Expr::False => {}
                Expr::If(c, t, f) => {
                    go(c, out);
                    go(t, out);
                    go(f, out);
                }
                Expr::Lam(x, _, b) => {
                    out.push(x.clone());
                    go(b, out);
                }
                Expr::App(f, a) => {
                    go(f, out);
                    go(a, out);
                }
            }
        }
        let mut out = Vec::new();
        go(self, &mut out);
        out
    }
}

/// Canonical forms: the subset of expressions that evaluation produces.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Value {
    True,
    False,
    Lam(Name, Type, Box<Expr>),
}

impl Value {
    pub fn from_bool(b: bool) -> Value {
        if b {
            Value::True
        } else {
            Value::False
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::True => Some(true),
            Value::False => Some(false),
            Value::Lam(..) => None,
        }
    }

    pub fn to_expr(&self) -> Expr {
        self.clone().into()
    }
}

impl From<Value> for Expr {
    fn from(v: Value) -> Expr {
        match v {
            Value::True => Expr::True,
            Value::False => Expr::False,
            Value::Lam(x, t, b) => Expr::Lam(x, t, b),
        }
    }
}

impl TryFrom<Expr> for Value {
    type Error = Expr;

    fn try_from(e: Expr) -> Result<Value, Expr> {
        match e {
            Expr::True => Ok(Value::True),
            Expr::False => Ok(Value::False),
            Expr::Lam(x, t, b) => Ok(Value::Lam(x, t, b)),
            other => Err(other),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.to_expr(), f)
    }
}

/// An ordered list of typed bindings with distinct names.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Context {
    bindings: Vec<(Name, Type)>,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("variable `{0}` is bound twice in the context")]
pub struct DuplicateBinding(pub Name);

impl Context {
    pub fn new() -> Self {
        Context::default()
    }

    pub fn from_bindings<I, N>(bindings: I) -> Result<Self, DuplicateBinding>
    where
        I: IntoIterator<Item = (N, Type)>,
        N: Into<Name>,
    {
        let mut ctx = Context::new();
        for (name, ty) in bindings {
            ctx.push(name.into(), ty)?;
        }
        Ok(ctx)
    }

    pub fn push(&mut self, name: Name, ty: Type) -> Result<(), DuplicateBinding> {
        if self.contains(&name) {
            return Err(DuplicateBinding(name));
        }
        self.bindings.push((name, ty));
        Ok(())
    }

    /// Extends the context, replacing any existing binding of the same name.
    pub fn extended(&self, name: Name, ty: Type) -> Context {
        let mut bindings: Vec<_> = self.bindings.iter().filter(|(n, _)| *n != name).cloned().collect();
        bindings.push((name, ty));
        Context { bindings }
    }

    pub fn get(&self, name: &Name) -> Option<&Type> {
        self.bindings.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn contains(&self, name: &Name) -> bool {
        self.get(name).is_some()
    }

    pub fn len(&self) -> usize {
        self.bindings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bindings.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Name, &Type)> {
        self.bindings.iter().map(|(n, t)| (n, t))
    }

    pub fn domain(&self) -> BTreeSet<Name> {
        self.bindings.iter().map(|(n, _)| n.clone()).collect()
    }

    /// The bindings whose names are in `keep`, in original order.
    pub fn restrict(&self, keep: &BTreeSet<Name>) -> Context {
        Context { bindings: self.bindings.iter().filter(|(n, _)| keep.contains(n)).cloned().collect() }
    }

    /// Same bindings regardless of order.
    pub fn same_bindings(&self, other: &Context) -> bool {
        self.len() == other.len() && self.iter().all(|(n, t)| other.get(n) == Some(t))
    }
}

impl fmt::Display for Context {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (n, t)) in self.bindings.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{n}:{t}")?;
        }
        Ok(())
    }
}

pub fn free_vars(e: &Expr) -> BTreeSet<Name> {
    fn go(e: &Expr, bound: &mut Vec<Name>, out: &mut BTreeSet<Name>) {
        match e {
            Expr::Var(x) => {
                if !bound.contains(x) {
                    out.insert(x.clone());
                }
            }
            Expr::True | Expr::False => {}
            Expr::If(c, t, f) => {
                go(c, bound, out);
                go(t, bound, out);
                go(f, bound, out);
            }
            Expr::Lam(x, _, b) => {
                bound.push(x.clone());
                go(b, bound, out);
                bound.pop();
            }
            Expr::App(f, a) => {
                go(f, bound, out);
                go(a, bound, out);
            }
        }
    }
    let mut out = BTreeSet::new();
    go(e, &mut Vec::new(), &mut out);
    out
}

/// Picks `base` followed by the smallest positive integer suffix not in `used`.
pub fn fresh_name(name: &Name, used: &HashSet<Name>) -> Name {
    let stem = name.as_str().trim_end_matches(|c: char| c.is_ascii_digit());
    let stem = if stem.is_empty() { name.as_str() } else { stem };
    (1u64..)
        .map(|k| Name::from(format!("{stem}{k}")))
        .find(|candidate| !used.contains(candidate))
        .expect("unbounded suffix search")
}

/// Renames binders so that every binder in the result is distinct from every
/// other binder and from every free variable. Already-fresh terms come back
/// unchanged.
pub fn freshen(e: &Expr) -> Expr {
    let mut used: HashSet<Name> = free_vars(e).into_iter().collect();
    freshen_with(e, &mut used)
}

/// Like [`freshen`], but also avoids every name in `used`, and records the
/// binders it picks there.
pub fn freshen_with(e: &Expr, used: &mut HashSet<Name>) -> Expr {
    fn go(e: &Expr, used: &mut HashSet<Name>, scope: &mut Vec<(Name, Name)>) -> Expr {
        match e {
            Expr::Var(x) => match scope.iter().rev().find(|(from, _)| from == x) {
                Some((_, to)) => Expr::Var(to.clone()),
                None => Expr::Var(x.clone()),
            },
            Expr::True => Expr::True,
            Expr::False => Expr::False,
            Expr::If(c, t, f) => Expr::ite(go(c, used, scope), go(t, used, scope), go(f, used, scope)),
            Expr::Lam(x, ty, b) => {
                let renamed = if used.contains(x) { fresh_name(x, used) } else { x.clone() };
                used.insert(renamed.clone());
                scope.push((x.clone(), renamed.clone()));
                let body = go(b, used, scope);
                scope.pop();
                Expr::Lam(renamed, ty.clone(), Box::new(body))
            }
            Expr::App(f, a) => Expr::app(go(f, used, scope), go(a, used, scope)),
        }
    }
    go(e, used, &mut Vec::new())
}

/// True when all binders are pairwise distinct and none shadows a free variable.
pub fn is_fresh(e: &Expr) -> bool {
    let mut seen: HashSet<Name> = free_vars(e).into_iter().collect();
    e.binders().into_iter().all(|b| seen.insert(b))
}

/// Alpha-equivalence: equal up to consistent renaming of bound variables.
pub fn alpha_eq(a: &Expr, b: &Expr) -> bool {
    fn go(a: &Expr, b: &Expr, sa: &mut Vec<Name>, sb: &mut Vec<Name>) -> bool {
        match (a, b) {
            (Expr::Var(x), Expr::Var(y)) => {
                let ix = sa.iter().rposition(|n| n == x);
                let iy = sb.iter().rposition(|n| n == y);
                match (ix, iy) {
                    (Some(i), Some(j)) => i == j,
                    (None, None) => x == y,
                    _ => false,
                }
            }
            (Expr::True, Expr::True) | (Expr::False, Expr::False) => true,
            (Expr::If(c1, t1, e1), Expr::If(c2, t2, e2)) => {
                go(c1, c2, sa, sb) && go(t1, t2, sa, sb) && go(e1, e2, sa, sb)
            }
            (Expr::Lam(x, tx, b1), Expr::Lam(y, ty, b2)) => {
                if tx != ty {
                    return false;
                }
                sa.push(x.clone());
                sb.push(y.clone());
                let eq = go(b1, b2, sa, sb);
                sa.pop();
                sb.pop();
                eq
            }
            (Expr::App(f1, a1), Expr::App(f2, a2)) => go(f1, f2, sa, sb) && go(a1, a2, sa, sb),
            _ => false,
        }
    }
    go(a, b, &mut Vec::new(), &mut Vec::new())
}

// Printing precedence: a term printed at `Top` may be a lambda or
// conditional; `Spine` is the function position of an application; `Atom`
// requires parentheses around anything compound.
#[derive(Clone, Copy, PartialEq, PartialOrd)]
enum Prec {
    Top,
    Spine,
    Atom,
}

fn write_expr(e: &Expr, prec: Prec, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match e {
        Expr::Var(x) => write!(f, "{x}"),
        Expr::True => f.write_str("tt"),
        Expr::False => f.write_str("ff"),
        Expr::Lam(x, t, b) => {
            if prec > Prec::Top {
                f.write_str("(")?;
            }
            write!(f, "\\{x}:{t}. ")?;
            write_expr(b, Prec::Top, f)?;
            if prec > Prec::Top {
                f.write_str(")")?;
            }
            Ok(())
        }
        Expr::If(c, t, e) => {
            if prec > Prec::Top {
                f.write_str("(")?;
            }
            f.write_str("if ")?;
            write_expr(c, Prec::Top, f)?;
            f.write_str(" then ")?;
            write_expr(t, Prec::Top, f)?;
            f.write_str(" else ")?;
            write_expr(e, Prec::Top, f)?;
            if prec > Prec::Top {
                f.write_str(")")?;
            }
            Ok(())
        }
        Expr::App(func, arg) => {
            if prec > Prec::Spine {
                f.write_str("(")?;
            }
            write_expr(func, Prec::Spine, f)?;
            f.write_str(" ")?;
            write_expr(arg, Prec::Atom, f)?;
            if prec > Prec::Spine {
                f.write_str(")")?;
            }
            Ok(())
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_expr(self, Prec::Top, f)
    }
}

/// Concrete syntax accepted by the parser.
pub fn pretty(e: &Expr) -> String {
    e.to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(xs: &[&str]) -> BTreeSet<Name> {
        xs.iter().map(|x| Name::from(*x)).collect()
    }

    // Collects every variable occurrence, then removes those under a binder
    // of the same name by a separate pass over the term's paths.
    fn naive_free_vars(e: &Expr) -> BTreeSet<Name> {
        fn occurrences(e: &Expr, path: Vec<Name>, out: &mut Vec<(Name, Vec<Name>)>) {
            match e {
                Expr::Var(x) => out.push((x.clone(), path)),
                Expr::True | Expr::False => {}
                Expr::If(c, t, f) => {
                    occurrences(c, path.clone(), out);
                    occurrences(t, path.clone(), out);
                    occurrences(f, path, out);
                }
                Expr::Lam(x, _, b) => {
                    let mut p = path;
                    p.push(x.clone());
                    occurrences(b, p, out);
                }
                Expr::App(f, a) => {
                    occurrences(f, path.clone(), out);
                    occurrences(a, path, out);
                }
            }
        }
        let mut occ = Vec::new();
        occurrences(e, Vec::new(), &mut occ);
        occ.into_iter().filter(|(x, binders)| !binders.contains(x)).map(|(x, _)| x).collect()
    }

    #[test]
    fn free_vars_examples() {
        let closed = Expr::lam("x", Type::Bool, Expr::var("x"));
        assert!(free_vars(&closed).is_empty());

        let open = Expr::ite(Expr::var("x"), Expr::True, Expr::False);
        assert_eq!(free_vars(&open), names(&["x"]));

        let e = Expr::lam("x", Type::Bool, Expr::ite(Expr::var("x"), Expr::var("y"), Expr::var("y")));
        assert_eq!(free_vars(&e), names(&["y"]));
        assert_eq!(free_vars(&e), naive_free_vars(&e));
    }

    #[test]
    fn freshen_renames_shadowed_binder() {
        let e = Expr::lam("x", Type::Bool, Expr::lam("x", Type::Bool, Expr::var("x")));
        let f = freshen(&e);
        assert_eq!(f, Expr::lam("x", Type::Bool, Expr::lam("x1", Type::Bool, Expr::var("x1"))));
        assert!(alpha_eq(&e, &f));
        assert!(is_fresh(&f));
    }

    #[test]
    fn freshen_is_identity_on_fresh_terms() {
        let e = Expr::lam("x", Type::Bool, Expr::var("x"));
        assert_eq!(freshen(&e), e);
    }

    #[test]
    fn freshen_separates_sibling_binders() {
        let id = Expr::lam("x", Type::Bool, Expr::var("x"));
        let e = Expr::app(id.clone(), id);
        let f = freshen(&e);
        assert_eq!(
            f,
            Expr::app(Expr::lam("x", Type::Bool, Expr::var("x")), Expr::lam("x1", Type::Bool, Expr::var("x1")))
        );
        assert!(alpha_eq(&e, &f));
    }

    #[test]
    fn freshen_avoids_free_names() {
        // The binder must not capture the free `x1`.
        let e = Expr::app(Expr::lam("x", Type::Bool, Expr::lam("x", Type::Bool, Expr::var("x"))), Expr::var("x1"));
        let f = freshen(&e);
        assert!(is_fresh(&f));
        assert_eq!(free_vars(&f), names(&["x1"]));
        assert!(alpha_eq(&e, &f));
    }

    #[test]
    fn alpha_eq_distinguishes_free_from_bound() {
        let a = Expr::lam("x", Type::Bool, Expr::var("y"));
        let b = Expr::lam("y", Type::Bool, Expr::var("y"));
        assert!(!alpha_eq(&a, &b));
        let c = Expr::lam("z", Type::Bool, Expr::var("y"));
        assert!(alpha_eq(&a, &c));
    }

    #[test]
    fn pretty_examples() {
        assert_eq!(pretty(&Expr::True), "tt");
        assert_eq!(pretty(&Expr::lam("x", Type::Bool, Expr::var("x"))), "\\x:2. x");
        let t = Type::lolli(Type::bool_to_bool(), Type::bool_to_bool());
        assert_eq!(t.to_string(), "(2 -o 2) -o 2 -o 2");
        let e = Expr::app(
            Expr::app(Expr::var("f"), Expr::app(Expr::var("g"), Expr::True)),
            Expr::lam("x", Type::Bool, Expr::var("x")),
        );
        assert_eq!(pretty(&e), "f (g tt) (\\x:2. x)");
    }

    #[test]
    fn context_rejects_duplicates() {
        let err = Context::from_bindings([("x", Type::Bool), ("x", Type::Bool)]).unwrap_err();
        assert_eq!(err, DuplicateBinding(Name::from("x")));
    }
}
