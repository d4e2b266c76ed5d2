//! Big-step call-by-value evaluation by substitution.

use std::collections::{BTreeMap, HashSet};

use crate::ast::{free_vars, freshen_with, Context, Expr, Name, Type, Value};
use crate::typecheck::typecheck_closed;

/// Step budget for [`eval`]. Well-typed programs always terminate; running
/// out of fuel on one indicates a bug.
pub const DEFAULT_FUEL: u64 = 1_000_000;

/// Closed values for the free variables of a program.
pub type SourceEnv = BTreeMap<Name, Value>;

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("stuck: condition evaluated to a function")]
    StuckNonBoolCondition,
    #[error("stuck: applied a boolean")]
    StuckNonFunction,
    #[error("unbound variable `{0}`")]
    UnboundVar(Name),
    #[error("fuel exhausted after {0} steps")]
    FuelExhausted(u64),
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum SourceEnvError {
    #[error("no value for `{0}`")]
    Missing(Name),
    #[error("`{0}` is not in the context")]
    Extra(Name),
    #[error("value for `{name}` does not have type `{expected}`")]
    IllTyped { name: Name, expected: Type },
}

/// Checks `Δ ⊢ σ`: the environment binds exactly the context's variables,
/// each to a closed value of the declared type.
pub fn check_source_env(ctx: &Context, env: &SourceEnv) -> Result<(), SourceEnvError> {
    for (x, ty) in ctx.iter() {
        let v = env.get(x).ok_or_else(|| SourceEnvError::Missing(x.clone()))?;
        match typecheck_closed(&v.to_expr()) {
            Ok(d) if d.ty == *ty => {}
            _ => return Err(SourceEnvError::IllTyped { name: x.clone(), expected: ty.clone() }),
        }
    }
    if let Some(x) = env.keys().find(|x| !ctx.contains(x)) {
        return Err(SourceEnvError::Extra(x.clone()));
    }
    Ok(())
}

fn subst_raw(x: &Name, v: &Expr, e: &Expr) -> Expr {
    match e {
        Expr::Var(y) if y == x => v.clone(),
        Expr::Var(_) | Expr::True | Expr::False => e.clone(),
        Expr::If(c, t, f) => Expr::ite(subst_raw(x, v, c), subst_raw(x, v, t), subst_raw(x, v, f)),
        // A binder of the same name shadows `x`.
        Expr::Lam(y, _, _) if y == x => e.clone(),
        Expr::Lam(y, t, b) => Expr::Lam(y.clone(), t.clone(), Box::new(subst_raw(x, v, b))),
        Expr::App(f, a) => Expr::app(subst_raw(x, v, f), subst_raw(x, v, a)),
    }
}

/// `{x ↦ v}(e)`. Copies of `v` get their binders renamed apart so the result
/// keeps every binder distinct.
pub fn substitute(x: &Name, v: &Value, e: &Expr) -> Expr {
    let replaced = subst_raw(x, &v.to_expr(), e);
    let mut used: HashSet<Name> = free_vars(&replaced).into_iter().collect();
    freshen_with(&replaced, &mut used)
}

/// Applies every binding of `env` to `e` at once.
pub fn close(e: &Expr, env: &SourceEnv) -> Expr {
    // Values are closed, so sequential substitution is simultaneous.
    let replaced = env.iter().fold(e.clone(), |acc, (x, v)| subst_raw(x, &v.to_expr(), &acc));
    let mut used: HashSet<Name> = free_vars(&replaced).into_iter().collect();
    freshen_with(&replaced, &mut used)
}

struct Machine {
    steps: u64,
    fuel: u64,
}

impl Machine {
    fn tick(&mut self) -> Result<(), EvalError> {
        if self.steps >= self.fuel {
            return Err(EvalError::FuelExhausted(self.steps));
        }
        self.steps += 1;
        Ok(())
    }

    fn eval(&mut self, e: &Expr) -> Result<Value, EvalError> {
        self.tick()?;
        match e {
            Expr::True => Ok(Value::True),
            Expr::False => Ok(Value::False),
            Expr::Lam(x, t, b) => Ok(Value::Lam(x.clone(), t.clone(), b.clone())),
            Expr::Var(x) => Err(EvalError::UnboundVar(x.clone())),
            Expr::If(c, t, f) => match self.eval(c)? {
                Value::True => self.eval(t),
                Value::False => self.eval(f),
                Value::Lam(..) => Err(EvalError::StuckNonBoolCondition),
            },
            Expr::App(func, arg) => {
                let Value::Lam(x, _, body) = self.eval(func)? else {
                    return Err(EvalError::StuckNonFunction);
                };
                let v = self.eval(arg)?;
                self.eval(&substitute(&x, &v, &body))
            }
        }
    }
}

/// Evaluates `σ(e)` within `fuel` rule applications.
pub fn eval(e: &Expr, env: &SourceEnv, fuel: u64) -> Result<Value, EvalError> {
    eval_counting(e, env, fuel).map(|(v, _)| v)
}

/// Like [`eval`], also returning the number of rule applications used.
pub fn eval_counting(e: &Expr, env: &SourceEnv, fuel: u64) -> Result<(Value, u64), EvalError> {
    let closed = close(e, env);
    if let Some(x) = free_vars(&closed).into_iter().next() {
        return Err(EvalError::UnboundVar(x));
    }
    let mut m = Machine { steps: 0, fuel };
    let v = m.eval(&closed)?;
    Ok((v, m.steps))
}

pub fn eval_closed(e: &Expr) -> Result<Value, EvalError> {
    eval(e, &SourceEnv::new(), DEFAULT_FUEL)
}
