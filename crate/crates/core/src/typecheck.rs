//! The linear typing judgment `Δ ⊢ e : τ`.
//!
//! Checking is syntax directed. Every subterm reports the set of context
//! variables it consumed; application and conditionals require the usage of
//! their premises to be disjoint, both branches of a conditional must consume
//! the same set, and the root must consume the whole context. The resulting
//! [`Derivation`] records at each node the context restricted to that usage,
//! which is exactly the split the declarative rules need.

use std::collections::BTreeSet;
use std::fmt;

use crate::ast::{Context, Expr, Name, Type};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Rule {
    Var,
    True,
    False,
    Lam,
    App,
    If,
}

/// A checked typing derivation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Derivation {
    pub rule: Rule,
    pub context: Context,
    pub expr: Expr,
    pub ty: Type,
    /// `Lam`: body. `App`: function, argument. `If`: condition, then, else.
    pub premises: Vec<Derivation>,
}

impl Derivation {
    pub fn premise(&self, i: usize) -> &Derivation {
        &self.premises[i]
    }

    /// Number of nodes in the derivation tree.
    pub fn size(&self) -> usize {
        1 + self.premises.iter().map(Derivation::size).sum::<usize>()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Misuse {
    Duplicated,
    Discarded,
}

impl fmt::Display for Misuse {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Misuse::Duplicated => "duplicated",
            Misuse::Discarded => "discarded",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TypeErrorKind {
    UnboundVar(Name),
    Nonlinear(Name, Misuse),
    Mismatch { expected: Type, found: Type },
    NotAFunction(Type),
    NotABool(Type),
}

/// One step from a node to a premise.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Step {
    Body,
    Function,
    Argument,
    Condition,
    Then,
    Else,
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Step::Body => "body",
            Step::Function => "function",
            Step::Argument => "argument",
            Step::Condition => "condition",
            Step::Then => "then",
            Step::Else => "else",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub struct TypeError {
    pub kind: TypeErrorKind,
    /// Path from the root to the offending subterm.
    pub path: Vec<Step>,
}

impl fmt::Display for TypeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            TypeErrorKind::UnboundVar(x) => write!(f, "unbound variable `{x}`")?,
            TypeErrorKind::Nonlinear(x, how) => write!(f, "variable `{x}` is {how}; it must be used exactly once")?,
            TypeErrorKind::Mismatch { expected, found } => write!(f, "expected type `{expected}`, found `{found}`")?,
            TypeErrorKind::NotAFunction(t) => write!(f, "cannot apply a term of type `{t}`")?,
            TypeErrorKind::NotABool(t) => write!(f, "condition has type `{t}`, expected `2`")?,
        }
        f.write_str(" at ")?;
        if self.path.is_empty() {
            return f.write_str("root");
        }
        for (i, s) in self.path.iter().enumerate() {
            if i > 0 {
                f.write_str(".")?;
            }
            write!(f, "{s}")?;
        }
        Ok(())
    }
}

/// `Ok` iff the two usage sets are disjoint; otherwise the overlap.
pub fn split_contexts(left: &BTreeSet<Name>, right: &BTreeSet<Name>) -> Result<(), BTreeSet<Name>> {
    let overlap: BTreeSet<Name> = left.intersection(right).cloned().collect();
    if overlap.is_empty() {
        Ok(())
    } else {
        Err(overlap)
    }
}

struct Checker {
    path: Vec<Step>,
}

impl Checker {
    fn fail<T>(&self, kind: TypeErrorKind) -> Result<T, TypeError> {
        Err(TypeError { kind, path: self.path.clone() })
    }

    fn sub(&mut self, step: Step, ctx: &Context, e: &Expr) -> Result<(Derivation, BTreeSet<Name>), TypeError> {
        self.path.push(step);
        let r = self.infer(ctx, e);
        self.path.pop();
        r
    }

    fn node(
        rule: Rule,
        ctx: &Context,
        usage: &BTreeSet<Name>,
        e: &Expr,
        ty: Type,
        premises: Vec<Derivation>,
    ) -> Derivation {
        Derivation { rule, context: ctx.restrict(usage), expr: e.clone(), ty, premises }
    }

    fn infer(&mut self, ctx: &Context, e: &Expr) -> Result<(Derivation, BTreeSet<Name>), TypeError> {
        match e {
            Expr::Var(x) => {
                let Some(ty) = ctx.get(x) else {
                    return self.fail(TypeErrorKind::UnboundVar(x.clone()));
                };
                let usage = BTreeSet::from([x.clone()]);
                Ok((Self::node(Rule::Var, ctx, &usage, e, ty.clone(), vec![]), usage))
            }
            Expr::True | Expr::False => {
                let rule = if *e == Expr::True { Rule::True } else { Rule::False };
                let usage = BTreeSet::new();
                Ok((Self::node(rule, ctx, &usage, e, Type::Bool, vec![]), usage))
            }
            Expr::Lam(x, annot, body) => {
                let inner = ctx.extended(x.clone(), annot.clone());
                let (d, mut usage) = self.sub(Step::Body, &inner, body)?;
                if !usage.remove(x) {
                    return self.fail(TypeErrorKind::Nonlinear(x.clone(), Misuse::Discarded));
                }
                let ty = Type::lolli(annot.clone(), d.ty.clone());
                Ok((Self::node(Rule::Lam, ctx, &usage, e, ty, vec![d]), usage))
            }
            Expr::App(func, arg) => {
                let (df, uf) = self.sub(Step::Function, ctx, func)?;
                let (da, ua) = self.sub(Step::Argument, ctx, arg)?;
                let Type::Lolli(dom, cod) = &df.ty else {
                    return self.fail(TypeErrorKind::NotAFunction(df.ty.clone()));
                };
                if **dom != da.ty {
                    return self.fail(TypeErrorKind::Mismatch { expected: (**dom).clone(), found: da.ty.clone() });
                }
                if let Err(overlap) = split_contexts(&uf, &ua) {
                    let x = overlap.into_iter().next().expect("non-empty overlap");
                    return self.fail(TypeErrorKind::Nonlinear(x, Misuse::Duplicated));
                }
                let ty = (**cod).clone();
                let usage: BTreeSet<Name> = uf.union(&ua).cloned().collect();
                Ok((Self::node(Rule::App, ctx, &usage, e, ty, vec![df, da]), usage))
            }
            Expr::If(cond, then_b, else_b) => {
                let (dc, uc) = self.sub(Step::Condition, ctx, cond)?;
                let (dt, ut) = self.sub(Step::Then, ctx, then_b)?;
                let (de, ue) = self.sub(Step::Else, ctx, else_b)?;
                if dc.ty != Type::Bool {
                    return self.fail(TypeErrorKind::NotABool(dc.ty.clone()));
                }
                let branches: BTreeSet<Name> = ut.union(&ue).cloned().collect();
                if let Err(overlap) = split_contexts(&uc, &branches) {
                    let x = overlap.into_iter().next().expect("non-empty overlap");
                    return self.fail(TypeErrorKind::Nonlinear(x, Misuse::Duplicated));
                }
                if let Some(x) = ut.symmetric_difference(&ue).next() {
                    return self.fail(TypeErrorKind::Nonlinear(x.clone(), Misuse::Discarded));
                }
                if dt.ty != de.ty {
                    return self.fail(TypeErrorKind::Mismatch { expected: dt.ty.clone(), found: de.ty.clone() });
                }
                let ty = dt.ty.clone();
                let usage: BTreeSet<Name> = uc.union(&ut).cloned().collect();
                Ok((Self::node(Rule::If, ctx, &usage, e, ty, vec![dc, dt, de]), usage))
            }
        }
    }
}

/// Checks `ctx ⊢ e : τ`, requiring every binding of `ctx` to be used exactly once.
pub fn typecheck(ctx: &Context, e: &Expr) -> Result<Derivation, TypeError> {
    let mut checker = Checker { path: Vec::new() };
    let (d, usage) = checker.infer(ctx, e)?;
    if let Some((x, _)) = ctx.iter().find(|(x, _)| !usage.contains(*x)) {
        return checker.fail(TypeErrorKind::Nonlinear(x.clone(), Misuse::Discarded));
    }
    Ok(d)
}

pub fn typecheck_closed(e: &Expr) -> Result<Derivation, TypeError> {
    typecheck(&Context::new(), e)
}

/// Checks each node of a derivation against the declarative rules, with the
/// context splits taken from the premises. Independent of [`typecheck`].
pub fn check_rules(d: &Derivation) -> Result<(), String> {
    let bad = |why: &str| Err(format!("{:?} node for `{}`: {why}", d.rule, d.expr));
    let n = d.premises.len();
    match (&d.rule, &d.expr) {
        (Rule::Var, Expr::Var(x)) => {
            if n != 0 {
                return bad("variables have no premises");
            }
            let mut single = Context::new();
            single.push(x.clone(), d.ty.clone()).expect("fresh context");
            if d.context != single {
                return bad("context must be exactly the variable's binding");
            }
        }
        (Rule::True, Expr::True) | (Rule::False, Expr::False) => {
            if n != 0 || !d.context.is_empty() || d.ty != Type::Bool {
                return bad("constants are typed at 2 in the empty context");
            }
        }
        (Rule::Lam, Expr::Lam(x, annot, body)) => {
            if n != 1 {
                return bad("one premise expected");
            }
            let p = &d.premises[0];
            if p.expr != **body {
                return bad("premise is not the body");
            }
            if d.context.contains(x) {
                return bad("binder already in context");
            }
            let mut extended = d.context.clone();
            extended.push(x.clone(), annot.clone()).expect("binder not in context");
            if !p.context.same_bindings(&extended) {
                return bad("body context must extend the node context with the binder");
            }
            if d.ty != Type::lolli(annot.clone(), p.ty.clone()) {
                return bad("type is not annot -o body type");
            }
            check_rules(p)?;
        }
        (Rule::App, Expr::App(func, arg)) => {
            if n != 2 {
                return bad("two premises expected");
            }
            let (pf, pa) = (&d.premises[0], &d.premises[1]);
            if pf.expr != **func || pa.expr != **arg {
                return bad("premises do not match subterms");
            }
            if !is_split(&d.context, &pf.context, &pa.context) {
                return bad("premise contexts are not a split of the node context");
            }
            if pf.ty != Type::lolli(pa.ty.clone(), d.ty.clone()) {
                return bad("function type does not match argument and result");
            }
            check_rules(pf)?;
            check_rules(pa)?;
        }
        (Rule::If, Expr::If(c, t, e)) => {
            if n != 3 {
                return bad("three premises expected");
            }
            let (pc, pt, pe) = (&d.premises[0], &d.premises[1], &d.premises[2]);
            if pc.expr != **c || pt.expr != **t || pe.expr != **e {
                return bad("premises do not match subterms");
            }
            if !pt.context.same_bindings(&pe.context) {
                return bad("branches must share a context");
            }
            if !is_split(&d.context, &pc.context, &pt.context) {
                return bad("premise contexts are not a split of the node context");
            }
            if pc.ty != Type::Bool || pt.ty != d.ty || pe.ty != d.ty {
                return bad("condition must be 2 and branches must match the node type");
            }
            check_rules(pc)?;
            check_rules(pt)?;
            check_rules(pe)?;
        }
        _ => return bad("rule does not match expression form"),
    }
    Ok(())
}

// Δ = Δ₁ ∪ Δ₂ with disjoint domains.
fn is_split(whole: &Context, left: &Context, right: &Context) -> bool {
    let disjoint = left.iter().all(|(x, _)| !right.contains(x));
    let covered = whole.len() == left.len() + right.len();
    let agree = left.iter().chain(right.iter()).all(|(x, t)| whole.get(x) == Some(t));
    disjoint && covered && agree
}
