//! Compiling a derivation into an autodiff [`Graph`] instead of a tensor.
//!
//! Free variables are bound to graph nodes holding `vec` representations, so
//! the outputs of trainable networks can stand in for them. Each typing rule
//! becomes the graph op computing the same linear map: conditionals become
//! [`Op::SoftBranch`](crate::autodiff::Op::SoftBranch) (or its hard
//! counterpart), applications become typed applications, and lambdas stack
//! the body's outputs on each basis vector.

use std::collections::BTreeMap;

use crate::ast::{Expr, Name};
use crate::autodiff::{BranchMode, Graph, NodeId};
use crate::tensor::{basis, dim, Tensor, TensorError};
use crate::typecheck::{Derivation, Rule};

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum LinkError {
    #[error("no graph node bound to `{0}`")]
    Unbound(Name),
    #[error("node for `{name}` has {found} rows, its type needs {expected}")]
    WrongWidth { name: Name, expected: usize, found: usize },
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("malformed derivation at `{0}`")]
    Malformed(Expr),
}

/// Graph nodes for free variables, holding `vec` representations.
pub type NodeEnv = BTreeMap<Name, NodeId>;

/// Adds the program of `d` to `g`, reading free variables from `env`.
/// Returns the node holding `vec` of the result.
pub fn lower(g: &mut Graph, d: &Derivation, env: &NodeEnv, mode: BranchMode) -> Result<NodeId, LinkError> {
    for (x, ty) in d.context.iter() {
        let node = *env.get(x).ok_or_else(|| LinkError::Unbound(x.clone()))?;
        let found = g.value(node).rows();
        if found != dim(ty) {
            return Err(LinkError::WrongWidth { name: x.clone(), expected: dim(ty), found });
        }
    }
    go(g, d, env, mode)
}

/// A frozen graph constant holding `vec(t)`.
pub fn constant(g: &mut Graph, t: &Tensor) -> NodeId {
    g.input(t.vec())
}

fn go(g: &mut Graph, d: &Derivation, env: &NodeEnv, mode: BranchMode) -> Result<NodeId, LinkError> {
    match (d.rule, &d.expr) {
        (Rule::Var, Expr::Var(x)) => env.get(x).copied().ok_or_else(|| LinkError::Unbound(x.clone())),
        (Rule::True, _) => Ok(constant(g, &Tensor::boolean(true))),
        (Rule::False, _) => Ok(constant(g, &Tensor::boolean(false))),
        (Rule::Lam, Expr::Lam(x, annot, _)) => {
            let mut inner = env.clone();
            let mut columns = Vec::new();
            for b in basis(annot) {
                inner.insert(x.clone(), constant(g, &b));
                columns.push(go(g, &d.premises[0], &inner, mode)?);
            }
            Ok(g.concat(&columns)?)
        }
        (Rule::App, Expr::App(..)) => {
            let f = go(g, &d.premises[0], env, mode)?;
            let a = go(g, &d.premises[1], env, mode)?;
            Ok(g.apply(f, a, dim(&d.ty))?)
        }
        (Rule::If, Expr::If(..)) => {
            let c = go(g, &d.premises[0], env, mode)?;
            let t = go(g, &d.premises[1], env, mode)?;
            let e = go(g, &d.premises[2], env, mode)?;
            Ok(match mode {
                BranchMode::Soft => g.soft_branch(c, t, e)?,
                BranchMode::Hard => g.hard_branch(c, t, e)?,
            })
        }
        _ => Err(LinkError::Malformed(d.expr.clone())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::{Context, Type};
    use crate::compile::{compile, CompileMode};
    use crate::gen::{Generator, TypeWeights};
    use crate::parser::parse_program;
    use crate::tensor::{Matrix, TargetEnv};
    use crate::typecheck::typecheck;
    use crate::verify::random_tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn eq_lowers_to_its_symbolic_expansion() {
        let p = parse_program(include_str!("../programs/eq.cj")).unwrap();
        let d = typecheck(&p.context, &p.expr).unwrap();
        let (a, b) = ([0.3, -1.2], [2.0, 0.5]);
        let mut g = Graph::new();
        let env = NodeEnv::from([
            (Name::from("x"), g.input(Matrix::column(&a))),
            (Name::from("y"), g.input(Matrix::column(&b))),
        ]);
        let out = lower(&mut g, &d, &env, BranchMode::Soft).unwrap();
        let want = [a[0] * b[0] + a[1] * b[1], a[0] * b[1] + a[1] * b[0]];
        let got = g.value(out).data();
        assert!((got[0] - want[0]).abs() < 1e-12 && (got[1] - want[1]).abs() < 1e-12);
    }

    #[test]
    fn lowering_agrees_with_compiler() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut tensors = ChaCha8Rng::seed_from_u64(9);
        let mut generator = Generator::new(&mut rng, TypeWeights::default());
        let ctx = Context::from_bindings([("x", Type::Bool), ("f", Type::bool_to_bool())]).unwrap();
        for _ in 0..200 {
            let target = generator.random_type();
            let e = generator.program(&ctx, &target, 7).unwrap();
            let d = typecheck(&ctx, &e).unwrap();
            let env: TargetEnv = ctx.iter().map(|(x, t)| (x.clone(), random_tensor(&mut tensors, t))).collect();
            let want = compile(&d, &env, CompileMode::Correct).unwrap().vec();

            let mut g = Graph::new();
            let nodes: NodeEnv = env.iter().map(|(x, t)| (x.clone(), constant(&mut g, t))).collect();
            let out = lower(&mut g, &d, &nodes, BranchMode::Soft).unwrap();
            assert!(g.value(out).max_abs_diff(&want) < 1e-9, "{e}");
        }
    }

    #[test]
    fn batched_inputs_lower_column_by_column() {
        let p = parse_program(include_str!("../programs/xor.cj")).unwrap();
        let d = typecheck(&p.context, &p.expr).unwrap();
        let mut g = Graph::new();
        // Columns: (tt, tt), (tt, ff), (ff, tt), (ff, ff).
        let x = g.input(Matrix::from_rows(&[vec![1.0, 1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0, 1.0]]));
        let y = g.input(Matrix::from_rows(&[vec![1.0, 0.0, 1.0, 0.0], vec![0.0, 1.0, 0.0, 1.0]]));
        let env = NodeEnv::from([(Name::from("x"), x), (Name::from("y"), y)]);
        let out = lower(&mut g, &d, &env, BranchMode::Hard).unwrap();
        assert_eq!(g.value(out).to_rows(), vec![vec![0.0, 1.0, 1.0, 0.0], vec![1.0, 0.0, 0.0, 1.0]]);
    }

    #[test]
    fn environment_errors() {
        let p = parse_program(include_str!("../programs/eq.cj")).unwrap();
        let d = typecheck(&p.context, &p.expr).unwrap();
        let mut g = Graph::new();
        let x = g.input(Matrix::column(&[1.0, 0.0]));
        let env = NodeEnv::from([(Name::from("x"), x)]);
        assert_eq!(lower(&mut g, &d, &env, BranchMode::Soft), Err(LinkError::Unbound(Name::from("y"))));
        let wide = g.input(Matrix::column(&[1.0, 0.0, 0.0]));
        let env = NodeEnv::from([(Name::from("x"), x), (Name::from("y"), wide)]);
        assert!(matches!(lower(&mut g, &d, &env, BranchMode::Soft), Err(LinkError::WrongWidth { .. })));
    }
}
