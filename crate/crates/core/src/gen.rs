//! Type-directed generation of linearly typed programs.
//!
//! Generation inverts the typing rules: the context is partitioned between
//! the premises of applications and conditionals, both branches of a
//! conditional receive the same share, and a lambda extends the context with
//! a fresh binder. A branch that cannot consume its share fails and the
//! generator backtracks to another rule, within a fixed budget.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ast::{Context, Expr, Name, Type, Value};
use crate::eval::{eval_closed, SourceEnv};
use crate::tensor::dim;

/// Relative weights for the two type formers when a type is drawn at random.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypeWeights {
    pub bool: f64,
    pub lolli: f64,
}

impl Default for TypeWeights {
    fn default() -> Self {
        TypeWeights { bool: 0.7, lolli: 0.3 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub seed: u64,
    pub max_depth: usize,
    pub type_weights: TypeWeights,
    pub count: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig { seed: 0, max_depth: 8, type_weights: TypeWeights::default(), count: 1000 }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_depth < 1 {
            return Err("max_depth must be at least 1".into());
        }
        let w = self.type_weights;
        if w.bool < 0.0 || w.lolli < 0.0 || (w.bool + w.lolli - 1.0).abs() > 1e-9 {
            return Err("type weights must be non-negative and sum to 1".into());
        }
        Ok(())
    }
}

/// Largest `dim` of a randomly drawn type; bounds the cost of compiling
/// lambdas, which probe every basis vector of their domain.
pub const MAX_RANDOM_DIM: usize = 8;

const CALL_BUDGET: usize = 400;
const ATTEMPTS: usize = 64;

type Binding = (Name, Type);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Strategy {
    Var,
    Const,
    Lam,
    If,
    App,
    Elim,
}

pub struct Generator<'r> {
    rng: &'r mut ChaCha8Rng,
    weights: TypeWeights,
    budget: usize,
    next_binder: usize,
    reserved: HashSet<Name>,
}

impl<'r> Generator<'r> {
    pub fn new(rng: &'r mut ChaCha8Rng, weights: TypeWeights) -> Self {
        Generator { rng, weights, budget: 0, next_binder: 0, reserved: HashSet::new() }
    }

    /// A random type with at most [`MAX_RANDOM_DIM`] dimensions.
    pub fn random_type(&mut self) -> Type {
        loop {
            let t = self.type_of_depth(2);
            if dim(&t) <= MAX_RANDOM_DIM {
                return t;
            }
        }
    }

    fn type_of_depth(&mut self, depth: usize) -> Type {
        let total = self.weights.bool + self.weights.lolli;
        if depth <= 1 || total <= 0.0 || self.rng.random::<f64>() * total < self.weights.bool {
            Type::Bool
        } else {
            let a = self.type_of_depth(depth - 1);
            let b = self.type_of_depth(depth - 1);
            Type::lolli(a, b)
        }
    }

    fn fresh(&mut self) -> Name {
        loop {
            let n = Name::from(format!("v{}", self.next_binder));
            self.next_binder += 1;
            if !self.reserved.contains(&n) {
                return n;
            }
        }
    }

    /// A program `ctx ⊢ e : target` of depth at most `max_depth`, or `None`
    /// if every attempt ran out of budget.
    pub fn program(&mut self, ctx: &Context, target: &Type, max_depth: usize) -> Option<Expr> {
        self.reserved = ctx.domain().into_iter().collect();
        let bindings: Vec<Binding> = ctx.iter().map(|(n, t)| (n.clone(), t.clone())).collect();
        for _ in 0..ATTEMPTS {
            self.budget = CALL_BUDGET;
            self.next_binder = 0;
            if let Some(e) = self.gen(&bindings, target, max_depth) {
                return Some(e);
            }
        }
        None
    }

    /// A closed value of type `t`.
    pub fn value(&mut self, t: &Type, max_depth: usize) -> Option<Value> {
        match t {
            Type::Bool => Some(Value::from_bool(self.rng.random())),
            Type::Lolli(..) => {
                let e = self.program(&Context::new(), t, max_depth)?;
                eval_closed(&e).ok()
            }
        }
    }

    /// Random closed values for every binding of `ctx`.
    pub fn source_env(&mut self, ctx: &Context, max_depth: usize) -> Option<SourceEnv> {
        let mut env = SourceEnv::new();
        for (x, t) in ctx.iter() {
            let v = self.value(t, max_depth)?;
            env.insert(x.clone(), v);
        }
        Some(env)
    }

    fn partition(&mut self, ctx: &[Binding]) -> (Vec<Binding>, Vec<Binding>) {
        let mut left = Vec::new();
        let mut right = Vec::new();
        for b in ctx {
            if self.rng.random::<bool>() {
                left.push(b.clone());
            } else {
                right.push(b.clone());
            }
        }
        (left, right)
    }

    // Argument types of `t` read as `σ₁ -o … -o σₖ -o target`, if it ends in target.
    fn spine_to(t: &Type, target: &Type) -> Option<Vec<Type>> {
        let mut args = Vec::new();
        let mut cur = t;
        loop {
            if cur == target && !args.is_empty() {
                return Some(args);
            }
            match cur {
                Type::Lolli(a, b) => {
                    args.push((**a).clone());
                    cur = b;
                }
                Type::Bool => return None,
            }
        }
    }

    fn gen(&mut self, ctx: &[Binding], target: &Type, depth: usize) -> Option<Expr> {
        if self.budget == 0 {
            return None;
        }
        self.budget -= 1;

        let mut options: Vec<(Strategy, f64)> = Vec::new();
        // Leaves get likelier as the remaining depth shrinks.
        let leaf = 1.0 + 4.0 / depth as f64;
        if ctx.len() == 1 && ctx[0].1 == *target {
            options.push((Strategy::Var, leaf));
        }
        if ctx.is_empty() && *target == Type::Bool {
            options.push((Strategy::Const, leaf));
        }
        if depth > 1 {
            if target.is_arrow() {
                options.push((Strategy::Lam, 2.0));
            }
            options.push((Strategy::If, 1.0));
            options.push((Strategy::App, 0.8));
            if ctx.iter().any(|(_, t)| Self::spine_to(t, target).is_some_and(|a| a.len() < depth)) {
                options.push((Strategy::Elim, 1.5));
            }
        }

        while !options.is_empty() {
            let total: f64 = options.iter().map(|(_, w)| w).sum();
            let mut pick = self.rng.random::<f64>() * total;
            let mut idx = options.len() - 1;
            for (i, (_, w)) in options.iter().enumerate() {
                if pick < *w {
                    idx = i;
                    break;
                }
                pick -= w;
            }
            let (strategy, _) = options.swap_remove(idx);
            if let Some(e) = self.apply(strategy, ctx, target, depth) {
                return Some(e);
            }
            if self.budget == 0 {
                return None;
            }
        }
        None
    }

    fn apply(&mut self, strategy: Strategy, ctx: &[Binding], target: &Type, depth: usize) -> Option<Expr> {
        match strategy {
            Strategy::Var => Some(Expr::Var(ctx[0].0.clone())),
            Strategy::Const => Some(if self.rng.random() { Expr::True } else { Expr::False }),
            Strategy::Lam => {
                let Type::Lolli(a, b) = target else { return None };
                let x = self.fresh();
                let mut inner = ctx.to_vec();
                inner.push((x.clone(), (**a).clone()));
                let body = self.gen(&inner, b, depth - 1)?;
                Some(Expr::lam(x, (**a).clone(), body))
            }
            Strategy::If => {
                let (c1, c2) = self.partition(ctx);
                let cond = self.gen(&c1, &Type::Bool, depth - 1)?;
                let then_b = self.gen(&c2, target, depth - 1)?;
                let else_b = self.gen(&c2, target, depth - 1)?;
                Some(Expr::ite(cond, then_b, else_b))
            }
            Strategy::App => {
                let arg_ty = self.random_type();
                let (c1, c2) = self.partition(ctx);
                let func = self.gen(&c1, &Type::lolli(arg_ty.clone(), target.clone()), depth - 1)?;
                let arg = self.gen(&c2, &arg_ty, depth - 1)?;
                Some(Expr::app(func, arg))
            }
            Strategy::Elim => {
                let mut heads: Vec<(usize, Vec<Type>)> = ctx
                    .iter()
                    .enumerate()
                    .filter_map(|(i, (_, t))| Self::spine_to(t, target).map(|a| (i, a)))
                    .filter(|(_, a)| a.len() < depth)
                    .collect();
                heads.shuffle(self.rng);
                let (i, args) = heads.into_iter().next()?;
                let mut rest: Vec<Binding> = ctx.to_vec();
                let (head, _) = rest.remove(i);
                // Deal the remaining bindings out to the arguments.
                let mut shares: Vec<Vec<Binding>> = vec![Vec::new(); args.len()];
                for b in rest {
                    let k = self.rng.random_range(0..args.len());
                    shares[k].push(b);
                }
                let arg_depth = depth - args.len();
                let mut e = Expr::Var(head);
                for (ty, share) in args.iter().zip(&shares) {
                    let a = self.gen(share, ty, arg_depth)?;
                    e = Expr::app(e, a);
                }
                Some(e)
            }
        }
    }
}

/// One program per seed: `gen_program(cfg, ctx, target)` seeded from `cfg.seed`.
pub fn gen_program(cfg: &GenConfig, ctx: &Context, target: &Type) -> Option<Expr> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    Generator::new(&mut rng, cfg.type_weights).program(ctx, target, cfg.max_depth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::is_fresh;
    use crate::typecheck::{check_rules, typecheck};

    fn cfg(seed: u64) -> GenConfig {
        GenConfig { seed, ..GenConfig::default() }
    }

    #[test]
    fn closed_bool_programs_typecheck() {
        for seed in 0..300 {
            let e = gen_program(&cfg(seed), &Context::new(), &Type::Bool).expect("generates");
            let d = typecheck(&Context::new(), &e).unwrap_or_else(|err| panic!("{e}: {err}"));
            assert_eq!(d.ty, Type::Bool);
            check_rules(&d).unwrap();
            assert!(e.depth() <= 8, "{e}");
            assert!(is_fresh(&e));
        }
    }

    #[test]
    fn open_programs_use_context_exactly_once() {
        let ctx = Context::from_bindings([("x", Type::Bool)]).unwrap();
        for seed in 0..200 {
            let e = gen_program(&cfg(seed), &ctx, &Type::Bool).expect("generates");
            typecheck(&ctx, &e).unwrap_or_else(|err| panic!("{e}: {err}"));
        }
        let ctx = Context::from_bindings([
            ("f", Type::lolli(Type::Bool, Type::bool_to_bool())),
            ("x", Type::Bool),
            ("g", Type::bool_to_bool()),
        ])
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut generator = Generator::new(&mut rng, TypeWeights::default());
        for _ in 0..200 {
            let target = generator.random_type();
            let e = generator.program(&ctx, &target, 8).expect("generates");
            let d = typecheck(&ctx, &e).unwrap_or_else(|err| panic!("{e}: {err}"));
            assert_eq!(d.ty, target);
        }
    }

    #[test]
    fn generated_values_have_their_type() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut generator = Generator::new(&mut rng, TypeWeights::default());
        for _ in 0..100 {
            let t = generator.random_type();
            let v = generator.value(&t, 6).expect("value");
            assert_eq!(typecheck(&Context::new(), &v.to_expr()).unwrap().ty, t);
        }
    }

    #[test]
    fn diversity() {
        let with_both = (0..10_000)
            .filter_map(|seed| gen_program(&cfg(seed), &Context::new(), &Type::Bool))
            .filter(|e| e.contains_lam() && e.contains_if())
            .count();
        assert!(with_both >= 100, "{with_both}");
    }

    #[test]
    fn config_validation() {
        assert!(GenConfig::default().validate().is_ok());
        let bad = GenConfig { max_depth: 0, ..GenConfig::default() };
        assert!(bad.validate().is_err());
        let bad = GenConfig { type_weights: TypeWeights { bool: 0.5, lolli: 0.6 }, ..GenConfig::default() };
        assert!(bad.validate().is_err());
    }
}
