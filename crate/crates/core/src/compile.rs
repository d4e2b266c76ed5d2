//! Compiling typing derivations to tensors.
//!
//! Variables read the target environment, booleans map to the standard basis
//! of `R²`, a lambda is compiled by probing its body with every basis vector
//! of its domain (column `j` of the matrix is `vec` of the body's output on
//! the `j`-th basis vector), application is typed matrix multiplication, and
//! a conditional is the soft branch `α₁·⟦then⟧ + α₂·⟦else⟧`.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::ast::{Context, Expr, Name};
use crate::eval::SourceEnv;
use crate::tensor::{basis, dim, matmul_typed, reshape, Matrix, TargetEnv, Tensor};
use crate::typecheck::{typecheck_closed, Derivation, Rule};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CompileMode {
    /// Soft branching; preserves program behavior.
    Correct,
    /// Picks the then-branch iff `α₁ = 1`, else the else-branch.
    HardBranch,
    /// Replaces every conditional by a random He-initialized linear map from
    /// `cond ⊗ [vec ⟦then⟧; vec ⟦else⟧]` to `⟦τ⟧`. Same types, different behavior.
    TypePreservingRandom(u64),
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum CompileError {
    #[error("no tensor for `{0}` in the target environment")]
    EnvMissing(Name),
    #[error("tensor for `{0}` does not have the declared type")]
    EnvTypeMismatch(Name),
    #[error("malformed derivation: {0}")]
    MalformedDerivation(String),
}

/// Checks `Δ ⊢ σ⃗`. Entries outside the context are ignored.
pub fn check_target_env(ctx: &Context, env: &TargetEnv) -> Result<(), CompileError> {
    for (x, ty) in ctx.iter() {
        match env.get(x) {
            None => return Err(CompileError::EnvMissing(x.clone())),
            Some(t) if t.ty() != ty => return Err(CompileError::EnvTypeMismatch(x.clone())),
            Some(_) => {}
        }
    }
    Ok(())
}

fn restrict(env: &TargetEnv, ctx: &Context) -> TargetEnv {
    ctx.iter().filter_map(|(x, _)| env.get(x).map(|t| (x.clone(), t.clone()))).collect()
}

// Stable per-node keys so that a conditional gets the same random map every
// time the lambda rule re-compiles it.
fn child_key(key: u64, child: u64) -> u64 {
    let mut z = key ^ (child + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// The `d × 4d` random map used by [`CompileMode::TypePreservingRandom`] at
/// the conditional identified by `key`.
pub fn random_branch_map(seed: u64, key: u64, out_dim: usize) -> Matrix {
    let fan_in = 4 * out_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(child_key(seed, key));
    let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
    let data = (0..out_dim * fan_in).map(|_| normal.sample(&mut rng)).collect();
    Matrix::from_row_major(out_dim, fan_in, data).expect("sized by construction")
}

struct Compiler<'a> {
    mode: CompileMode,
    on_condition: Option<&'a mut dyn FnMut(&Tensor)>,
}

impl Compiler<'_> {
    fn malformed<T>(d: &Derivation, why: &str) -> Result<T, CompileError> {
        Err(CompileError::MalformedDerivation(format!("{:?} node `{}`: {why}", d.rule, d.expr)))
    }

    fn go(&mut self, d: &Derivation, env: &TargetEnv, key: u64) -> Result<Tensor, CompileError> {
        match (d.rule, &d.expr) {
            (Rule::Var, Expr::Var(x)) => {
                let t = env.get(x).ok_or_else(|| CompileError::EnvMissing(x.clone()))?;
                if *t.ty() != d.ty {
                    return Err(CompileError::EnvTypeMismatch(x.clone()));
                }
                Ok(t.clone())
            }
            (Rule::True, _) => Ok(Tensor::boolean(true)),
            (Rule::False, _) => Ok(Tensor::boolean(false)),
            (Rule::Lam, Expr::Lam(x, annot, _)) => {
                let body = &d.premises[0];
                let rows = dim(&body.ty);
                let domain = basis(annot);
                let mut mat = Matrix::zeros(rows, domain.len());
                let mut inner = restrict(env, &d.context);
                for (j, b) in domain.into_iter().enumerate() {
                    inner.insert(x.clone(), b);
                    let column = self.go(body, &inner, child_key(key, 0))?.vec();
                    for i in 0..rows {
                        mat.set(i, j, column.data()[i]);
                    }
                }
                Tensor::new(d.ty.clone(), mat).or_else(|e| Self::malformed(d, &e.to_string()))
            }
            (Rule::App, Expr::App(..)) => {
                let (pf, pa) = (&d.premises[0], &d.premises[1]);
                let f = self.go(pf, &restrict(env, &pf.context), child_key(key, 0))?;
                let a = self.go(pa, &restrict(env, &pa.context), child_key(key, 1))?;
                matmul_typed(&f, &a).or_else(|e| Self::malformed(d, &e.to_string()))
            }
            (Rule::If, Expr::If(..)) => {
                let (pc, pt, pe) = (&d.premises[0], &d.premises[1], &d.premises[2]);
                let cond = self.go(pc, &restrict(env, &pc.context), child_key(key, 0))?;
                if let Some(observe) = self.on_condition.as_mut() {
                    observe(&cond);
                }
                let (a1, a2) = (cond.data()[0], cond.data()[1]);
                let branch_env = restrict(env, &pt.context);
                match self.mode {
                    CompileMode::Correct => {
                        let t = self.go(pt, &branch_env, child_key(key, 1))?;
                        let e = self.go(pe, &branch_env, child_key(key, 2))?;
                        t.scale(a1).add(&e.scale(a2)).or_else(|e| Self::malformed(d, &e.to_string()))
                    }
                    CompileMode::HardBranch => {
                        if a1 == 1.0 {
                            self.go(pt, &branch_env, child_key(key, 1))
                        } else {
                            self.go(pe, &branch_env, child_key(key, 2))
                        }
                    }
                    CompileMode::TypePreservingRandom(seed) => {
                        let t = self.go(pt, &branch_env, child_key(key, 1))?.vec();
                        let e = self.go(pe, &branch_env, child_key(key, 2))?.vec();
                        let n = dim(&d.ty);
                        let branches: Vec<f64> = t.data().iter().chain(e.data()).copied().collect();
                        let input: Vec<f64> =
                            [a1, a2].iter().flat_map(|a| branches.iter().map(move |b| a * b)).collect();
                        let w = random_branch_map(seed, key, n);
                        let out = w.matmul(&Matrix::column(&input)).expect("sized by construction");
                        reshape(&out, &d.ty).or_else(|e| Self::malformed(d, &e.to_string()))
                    }
                }
            }
            _ => Self::malformed(d, "rule does not match expression"),
        }
    }
}

/// Compiles `Δ ⊢ e : τ` under a target environment conforming to `Δ`.
pub fn compile(d: &Derivation, env: &TargetEnv, mode: CompileMode) -> Result<Tensor, CompileError> {
    check_target_env(&d.context, env)?;
    Compiler { mode, on_condition: None }.go(d, env, 0)
}

/// Like [`compile`], calling `on_condition` with every compiled condition of a
/// conditional, in evaluation order.
pub fn compile_observed(
    d: &Derivation,
    env: &TargetEnv,
    mode: CompileMode,
    on_condition: &mut dyn FnMut(&Tensor),
) -> Result<Tensor, CompileError> {
    check_target_env(&d.context, env)?;
    Compiler { mode, on_condition: Some(on_condition) }.go(d, env, 0)
}

/// Compiles a closed program in the correct mode.
pub fn compile_closed(d: &Derivation) -> Result<Tensor, CompileError> {
    compile(d, &TargetEnv::new(), CompileMode::Correct)
}

/// `⟦Δ ⊢ σ⟧`: compiles each closed value at its declared type.
pub fn compile_env(ctx: &Context, src: &SourceEnv) -> Result<TargetEnv, CompileError> {
    let mut out = BTreeMap::new();
    for (x, ty) in ctx.iter() {
        let v = src.get(x).ok_or_else(|| CompileError::EnvMissing(x.clone()))?;
        let d = typecheck_closed(&v.to_expr()).map_err(|_| CompileError::EnvTypeMismatch(x.clone()))?;
        if d.ty != *ty {
            return Err(CompileError::EnvTypeMismatch(x.clone()));
        }
        out.insert(x.clone(), compile_closed(&d)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::{Type, Value};
    use crate::parser::parse_expr;
    use crate::typecheck::typecheck;

    fn closed(src: &str) -> Tensor {
        compile_closed(&typecheck_closed(&parse_expr(src).unwrap()).unwrap()).unwrap()
    }

    fn rows(t: &Tensor) -> Vec<Vec<f64>> {
        t.to_rows()
    }

    #[test]
    fn constants() {
        assert_eq!(closed("tt"), Tensor::boolean(true));
        assert_eq!(closed("ff"), Tensor::boolean(false));
    }

    #[test]
    fn identity_compiles_to_identity_matrix() {
        assert_eq!(rows(&closed("\\x:2. x")), vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert_eq!(closed("(\\x:2. x) tt"), Tensor::boolean(true));
    }

    #[test]
    fn constant_function() {
        assert_eq!(rows(&closed("\\x:2. if x then tt else tt")), vec![vec![1.0, 1.0], vec![0.0, 0.0]]);
    }

    #[test]
    fn church_false() {
        let t = closed("\\x:2. \\y:2. if x then y else y");
        assert_eq!(t.ty(), &Type::lolli(Type::Bool, Type::bool_to_bool()));
        assert_eq!(rows(&t), vec![vec![1.0, 1.0], vec![0.0, 0.0], vec![0.0, 0.0], vec![1.0, 1.0]]);
    }

    #[test]
    fn open_subprogram_scales_identity() {
        // x:2 ⊢ \y:2. if x then y else y compiles to (α₁+α₂)·I.
        let ctx = Context::from_bindings([("x", Type::Bool)]).unwrap();
        let d = typecheck(&ctx, &parse_expr("\\y:2. if x then y else y").unwrap()).unwrap();
        let env = TargetEnv::from([(Name::from("x"), Tensor::new(Type::Bool, Matrix::column(&[0.25, 2.0])).unwrap())]);
        let t = compile(&d, &env, CompileMode::Correct).unwrap();
        assert_eq!(rows(&t), vec![vec![2.25, 0.0], vec![0.0, 2.25]]);
    }

    #[test]
    fn eq_body_symbolic_expansion() {
        // Oracle: expand the soft branch twice by hand.
        // outer = a₁·(b₁⟦tt⟧ + b₂⟦ff⟧) + a₂·(b₁⟦ff⟧ + b₂⟦tt⟧)
        //       = [a₁b₁ + a₂b₂, a₁b₂ + a₂b₁]
        let ctx = Context::from_bindings([("x", Type::Bool), ("y", Type::Bool)]).unwrap();
        let e = parse_expr("if x then (if y then tt else ff) else (if y then ff else tt)").unwrap();
        let d = typecheck(&ctx, &e).unwrap();
        let (a1, a2, b1, b2) = (0.3, -1.7, 2.5, 0.4);
        let env = TargetEnv::from([
            (Name::from("x"), Tensor::new(Type::Bool, Matrix::column(&[a1, a2])).unwrap()),
            (Name::from("y"), Tensor::new(Type::Bool, Matrix::column(&[b1, b2])).unwrap()),
        ]);
        let t = compile(&d, &env, CompileMode::Correct).unwrap();
        let expected = Tensor::new(Type::Bool, Matrix::column(&[a1 * b1 + a2 * b2, a1 * b2 + a2 * b1])).unwrap();
        assert!(t.approx_eq(&expected, 1e-12));
    }

    #[test]
    fn environments() {
        let ctx = Context::from_bindings([("x", Type::Bool)]).unwrap();
        let src = SourceEnv::from([(Name::from("x"), Value::True)]);
        assert_eq!(compile_env(&ctx, &src).unwrap(), TargetEnv::from([(Name::from("x"), Tensor::boolean(true))]));
        assert!(compile_env(&Context::new(), &SourceEnv::new()).unwrap().is_empty());

        let ctx = Context::from_bindings([("f", Type::bool_to_bool())]).unwrap();
        let id = Value::Lam(Name::from("z"), Type::Bool, Box::new(Expr::var("z")));
        let env = compile_env(&ctx, &SourceEnv::from([(Name::from("f"), id)])).unwrap();
        assert_eq!(rows(&env[&Name::from("f")]), vec![vec![1.0, 0.0], vec![0.0, 1.0]]);

        let bad = SourceEnv::from([(Name::from("f"), Value::True)]);
        assert_eq!(compile_env(&ctx, &bad), Err(CompileError::EnvTypeMismatch(Name::from("f"))));
    }

    #[test]
    fn nonconforming_target_env() {
        let ctx = Context::from_bindings([("x", Type::Bool)]).unwrap();
        let d = typecheck(&ctx, &Expr::var("x")).unwrap();
        assert_eq!(
            compile(&d, &TargetEnv::new(), CompileMode::Correct),
            Err(CompileError::EnvMissing(Name::from("x")))
        );
        let env = TargetEnv::from([(Name::from("x"), Tensor::zeros(Type::bool_to_bool()))]);
        assert_eq!(compile(&d, &env, CompileMode::Correct), Err(CompileError::EnvTypeMismatch(Name::from("x"))));
    }

    #[test]
    fn hard_branch_switches_on_first_coordinate() {
        let ctx = Context::from_bindings([("x", Type::Bool)]).unwrap();
        let d = typecheck(&ctx, &parse_expr("if x then tt else ff").unwrap()).unwrap();
        let at = |a: [f64; 2]| {
            let env = TargetEnv::from([(Name::from("x"), Tensor::new(Type::Bool, Matrix::column(&a)).unwrap())]);
            compile(&d, &env, CompileMode::HardBranch).unwrap()
        };
        assert_eq!(at([1.0, 0.0]), Tensor::boolean(true));
        assert_eq!(at([0.0, 1.0]), Tensor::boolean(false));
        assert_eq!(at([0.9, 0.1]), Tensor::boolean(false));
    }

    #[test]
    fn random_mode_keeps_types_and_is_seeded() {
        let d = typecheck_closed(&parse_expr("\\x:2. \\y:2. if x then y else y").unwrap()).unwrap();
        let a = compile(&d, &TargetEnv::new(), CompileMode::TypePreservingRandom(7)).unwrap();
        let b = compile(&d, &TargetEnv::new(), CompileMode::TypePreservingRandom(7)).unwrap();
        let c = compile(&d, &TargetEnv::new(), CompileMode::TypePreservingRandom(8)).unwrap();
        assert_eq!(a.ty(), &d.ty);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, compile_closed(&d).unwrap());
    }
}
