//! Randomized checks of the compiler against the reference semantics.
//!
//! Every case draws its program and inputs from its own seed, derived from the
//! suite seed and the case index, so a failure can be replayed in isolation
//! with [`run_case`].

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ast::{pretty, Context, Expr, Name, Type, Value};
use crate::compile::{compile, compile_env, compile_observed, CompileMode};
use crate::eval::{close, eval, SourceEnv, DEFAULT_FUEL};
use crate::gen::{GenConfig, Generator};
use crate::tensor::{Matrix, TargetEnv, Tensor};
use crate::typecheck::{typecheck, typecheck_closed, Derivation};

pub const BEHAVIOR_TOL: f64 = 1e-9;
pub const LINEARITY_TOL: f64 = 1e-6;
pub const CLOSING_TOL: f64 = 1e-9;
/// Largest magnitude of the scalar in the linearity check.
pub const LINEARITY_SCALE: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Property {
    /// A closed program and its value compile to the same tensor.
    Behavior,
    /// A program compiles to a linear function of each free variable.
    Linearity,
    /// Compiling a closed instance equals compiling under the compiled environment.
    Closing,
    /// Evaluation halts within the default fuel with a value of the right type.
    Termination,
    /// Hard branching agrees with soft branching when every condition is a basis vector.
    HardBranch,
}

impl Property {
    pub const ALL: [Property; 5] =
        [Property::Behavior, Property::Linearity, Property::Closing, Property::Termination, Property::HardBranch];

    pub fn name(self) -> &'static str {
        match self {
            Property::Behavior => "behavior",
            Property::Linearity => "linearity",
            Property::Closing => "closing",
            Property::Termination => "termination",
            Property::HardBranch => "hard-branch",
        }
    }
}

impl fmt::Display for Property {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Property {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Property::ALL.into_iter().find(|p| p.name() == s).ok_or_else(|| format!("unknown property `{s}`"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub case_seed: u64,
    pub context: String,
    pub program: String,
    pub env: String,
    pub expected: String,
    pub got: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropertyReport {
    pub property: Property,
    pub seed: u64,
    pub cases: usize,
    pub passed: usize,
    /// Cases where no program could be generated, or the property's
    /// precondition did not hold.
    pub skipped: usize,
    pub failures: Vec<Failure>,
}

impl PropertyReport {
    pub fn ok(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

impl fmt::Display for PropertyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{}: {} cases, {} passed, {} failed, {} skipped (seed {})",
            self.property,
            self.cases,
            self.passed,
            self.failures.len(),
            self.skipped,
            self.seed
        )?;
        for fail in &self.failures {
            writeln!(f, "  case seed {}", fail.case_seed)?;
            writeln!(f, "    program:  {} |- {}", fail.context, fail.program)?;
            if !fail.env.is_empty() {
                writeln!(f, "    env:      {}", fail.env)?;
            }
            writeln!(f, "    expected: {}", fail.expected)?;
            writeln!(f, "    got:      {}", fail.got)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum CaseOutcome {
    Pass,
    Skip,
    Fail(Failure),
}

/// Seed of case `index` in a suite seeded with `seed`.
pub fn case_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Runs `cfg.count` cases of `property` in parallel; the report lists
/// failures in case order regardless of scheduling.
pub fn run_suite(property: Property, cfg: &GenConfig) -> PropertyReport {
    let outcomes: Vec<CaseOutcome> =
        (0..cfg.count as u64).into_par_iter().map(|i| run_case(property, cfg, case_seed(cfg.seed, i))).collect();
    let mut report =
        PropertyReport { property, seed: cfg.seed, cases: cfg.count, passed: 0, skipped: 0, failures: Vec::new() };
    for o in outcomes {
        match o {
            CaseOutcome::Pass => report.passed += 1,
            CaseOutcome::Skip => report.skipped += 1,
            CaseOutcome::Fail(f) => report.failures.push(f),
        }
    }
    report
}

/// Runs the single case of `property` seeded by `case_seed`.
pub fn run_case(property: Property, cfg: &GenConfig, case_seed: u64) -> CaseOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(case_seed);
    let case = Case { case_seed, max_depth: cfg.max_depth };
    let mut g = Generator::new(&mut rng, cfg.type_weights);
    let outcome = match property {
        Property::Behavior => case.behavior(&mut g),
        Property::Linearity => case.linearity(&mut g),
        Property::Closing => case.closing(&mut g),
        Property::Termination => case.termination(&mut g),
        Property::HardBranch => case.hard_branch(&mut g),
    };
    outcome.unwrap_or(CaseOutcome::Skip)
}

/// A tensor of type `t` with entries uniform in `[-1, 1]`.
pub fn random_tensor(rng: &mut impl Rng, t: &Type) -> Tensor {
    let (r, c) = crate::tensor::shape_of(t);
    let data = (0..r * c).map(|_| rng.random_range(-1.0..=1.0)).collect();
    Tensor::new(t.clone(), Matrix::from_row_major(r, c, data).expect("sized")).expect("shaped")
}

fn show_tensor(t: &Tensor) -> String {
    serde_json::to_string(&t.to_rows()).expect("numbers serialize")
}

fn show_source_env(env: &SourceEnv) -> String {
    env.iter().map(|(x, v)| format!("{x} = {v}")).collect::<Vec<_>>().join(", ")
}

fn show_target_env(env: &TargetEnv) -> String {
    env.iter().map(|(x, t)| format!("{x} = {}", show_tensor(t))).collect::<Vec<_>>().join(", ")
}

struct Case {
    case_seed: u64,
    max_depth: usize,
}

impl Case {
    fn fail(&self, ctx: &Context, e: &Expr, env: String, expected: String, got: String) -> Option<CaseOutcome> {
        Some(CaseOutcome::Fail(Failure {
            case_seed: self.case_seed,
            context: ctx.to_string(),
            program: pretty(e),
            env,
            expected,
            got,
        }))
    }

    // Mostly booleans so that the observable result is a truth value.
    fn target(&self, g: &mut Generator) -> Type {
        if g.random_type() == Type::Bool {
            Type::Bool
        } else {
            g.random_type()
        }
    }

    fn random_context(&self, g: &mut Generator, max_vars: usize) -> Context {
        let names = ["x", "y", "z"];
        let n = 1 + (g.random_type().depth() + g.random_type().depth()) % max_vars;
        let mut ctx = Context::new();
        for name in names.iter().take(n) {
            let t = g.random_type();
            ctx.push(Name::from(*name), t).expect("distinct names");
        }
        ctx
    }

    fn typed(&self, ctx: &Context, e: &Expr) -> Option<Derivation> {
        typecheck(ctx, e).ok()
    }

    fn behavior(&self, g: &mut Generator) -> Option<CaseOutcome> {
        let ctx = Context::new();
        let ty = self.target(g);
        let e = g.program(&ctx, &ty, self.max_depth)?;
        let d = self.typed(&ctx, &e)?;
        let v = match eval(&e, &SourceEnv::new(), DEFAULT_FUEL) {
            Ok(v) => v,
            Err(err) => return self.fail(&ctx, &e, String::new(), "a value".into(), err.to_string()),
        };
        let vd = typecheck_closed(&v.to_expr()).ok()?;
        let got = compile(&d, &TargetEnv::new(), CompileMode::Correct).ok()?;
        let want = compile(&vd, &TargetEnv::new(), CompileMode::Correct).ok()?;
        if got.ty() != want.ty() || got.max_abs_diff(&want) > BEHAVIOR_TOL {
            return self.fail(&ctx, &e, format!("value {v}"), show_tensor(&want), show_tensor(&got));
        }
        if let Some(b) = v.as_bool() {
            let other = Tensor::boolean(!b);
            if got.max_abs_diff(&other) <= BEHAVIOR_TOL {
                return self.fail(
                    &ctx,
                    &e,
                    format!("value {v}"),
                    format!("not {}", show_tensor(&other)),
                    show_tensor(&got),
                );
            }
        }
        Some(CaseOutcome::Pass)
    }

    fn linearity(&self, g: &mut Generator) -> Option<CaseOutcome> {
        let ctx = self.random_context(g, 3);
        let ty = self.target(g);
        let e = g.program(&ctx, &ty, self.max_depth)?;
        let d = self.typed(&ctx, &e)?;
        let x = Name::from("x");
        let tx = ctx.get(&x)?.clone();

        let mut seeds = ChaCha8Rng::seed_from_u64(self.case_seed ^ 0x5eed);
        let mut env = TargetEnv::new();
        for (y, t) in ctx.iter() {
            env.insert(y.clone(), random_tensor(&mut seeds, t));
        }
        let t1 = random_tensor(&mut seeds, &tx);
        let t2 = random_tensor(&mut seeds, &tx);
        let alpha = seeds.random_range(-LINEARITY_SCALE..=LINEARITY_SCALE);

        let at = |t: Tensor| {
            let mut env = env.clone();
            env.insert(x.clone(), t);
            compile(&d, &env, CompileMode::Correct).ok()
        };
        let combined = t1.scale(alpha).add(&t2).ok()?;
        let lhs = at(combined.clone())?;
        let rhs = at(t1)?.scale(alpha).add(&at(t2)?).ok()?;
        if lhs.max_abs_diff(&rhs) > LINEARITY_TOL {
            env.insert(x.clone(), combined);
            return self.fail(
                &ctx,
                &e,
                format!("{}; alpha = {alpha}", show_target_env(&env)),
                show_tensor(&rhs),
                show_tensor(&lhs),
            );
        }
        Some(CaseOutcome::Pass)
    }

    fn closing(&self, g: &mut Generator) -> Option<CaseOutcome> {
        let ctx = self.random_context(g, 3);
        let ty = self.target(g);
        let e = g.program(&ctx, &ty, self.max_depth)?;
        let d = self.typed(&ctx, &e)?;
        let src = g.source_env(&ctx, self.max_depth.min(5))?;
        let closed = close(&e, &src);
        let cd = match typecheck_closed(&closed) {
            Ok(cd) => cd,
            Err(err) => {
                return self.fail(&ctx, &e, show_source_env(&src), "closed instance typechecks".into(), err.to_string())
            }
        };
        let lhs = compile(&cd, &TargetEnv::new(), CompileMode::Correct).ok()?;
        let target_env = compile_env(&ctx, &src).ok()?;
        let rhs = compile(&d, &target_env, CompileMode::Correct).ok()?;
        if lhs.max_abs_diff(&rhs) > CLOSING_TOL {
            return self.fail(&ctx, &e, show_source_env(&src), show_tensor(&rhs), show_tensor(&lhs));
        }
        Some(CaseOutcome::Pass)
    }

    fn termination(&self, g: &mut Generator) -> Option<CaseOutcome> {
        let ctx = self.random_context(g, 3);
        let ty = self.target(g);
        let e = g.program(&ctx, &ty, self.max_depth)?;
        let src = g.source_env(&ctx, self.max_depth.min(5))?;
        match eval(&e, &src, DEFAULT_FUEL) {
            Ok(v) => match typecheck_closed(&v.to_expr()) {
                Ok(vd) if vd.ty == ty => Some(CaseOutcome::Pass),
                _ => self.fail(&ctx, &e, show_source_env(&src), format!("a value of type {ty}"), v.to_string()),
            },
            Err(err) => self.fail(&ctx, &e, show_source_env(&src), "a value".into(), err.to_string()),
        }
    }

    fn hard_branch(&self, g: &mut Generator) -> Option<CaseOutcome> {
        let ctx = Context::new();
        let e = g.program(&ctx, &Type::Bool, self.max_depth)?;
        let d = self.typed(&ctx, &e)?;
        let mut all_basis = true;
        let soft = compile_observed(&d, &TargetEnv::new(), CompileMode::Correct, &mut |c: &Tensor| {
            let data = c.data();
            let basis = data == [1.0, 0.0] || data == [0.0, 1.0];
            all_basis &= basis;
        })
        .ok()?;
        if !all_basis {
            return Some(CaseOutcome::Skip);
        }
        let hard = compile(&d, &TargetEnv::new(), CompileMode::HardBranch).ok()?;
        if hard.max_abs_diff(&soft) > BEHAVIOR_TOL {
            return self.fail(&ctx, &e, String::new(), show_tensor(&soft), show_tensor(&hard));
        }
        Some(CaseOutcome::Pass)
    }
}

/// Compiled outputs of a program for every assignment of basis vectors to
/// the boolean `inputs`, first input most significant, `ff` before `tt`.
pub fn truth_table(d: &Derivation, inputs: &[Name], mode: CompileMode) -> Option<Vec<Tensor>> {
    let n = inputs.len();
    let mut rows = Vec::with_capacity(1 << n);
    for bits in 0..(1u32 << n) {
        let env: TargetEnv = inputs
            .iter()
            .enumerate()
            .map(|(i, x)| (x.clone(), Tensor::boolean(bits >> (n - 1 - i) & 1 == 0)))
            .collect();
        rows.push(compile(d, &env, mode).ok()?);
    }
    Some(rows)
}

/// Closed values for each boolean assignment of `inputs`, in the order used by [`truth_table`].
pub fn boolean_assignments(inputs: &[Name]) -> Vec<SourceEnv> {
    let n = inputs.len();
    (0..(1u32 << n))
        .map(|bits| {
            inputs
                .iter()
                .enumerate()
                .map(|(i, x)| (x.clone(), Value::from_bool(bits >> (n - 1 - i) & 1 == 0)))
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(seed: u64, count: usize) -> GenConfig {
        GenConfig { seed, count, ..GenConfig::default() }
    }

    #[test]
    fn suites_pass_on_small_runs() {
        for p in Property::ALL {
            let r = run_suite(p, &cfg(7, 150));
            assert!(r.ok(), "{r}");
            assert_eq!(r.passed + r.skipped, r.cases);
            assert!(r.passed > r.cases / 2, "{r}");
        }
    }

    #[test]
    fn reports_are_deterministic() {
        let a = run_suite(Property::Linearity, &cfg(3, 64));
        let b = run_suite(Property::Linearity, &cfg(3, 64));
        assert_eq!(a, b);
    }

    #[test]
    fn case_replay_matches_suite() {
        let c = cfg(21, 20);
        let r = run_suite(Property::Closing, &c);
        let replayed =
            (0..20).filter(|&i| run_case(Property::Closing, &c, case_seed(21, i)) == CaseOutcome::Pass).count();
        assert_eq!(replayed, r.passed);
    }

    #[test]
    fn report_json_and_text() {
        let mut r = run_suite(Property::Behavior, &cfg(1, 4));
        r.failures.push(Failure {
            case_seed: 9,
            context: String::new(),
            program: "tt".into(),
            env: String::new(),
            expected: "[[0.0],[1.0]]".into(),
            got: "[[1.0],[0.0]]".into(),
        });
        let json: PropertyReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(json, r);
        assert!(r.to_string().contains("1 failed"));
        assert!(r.to_string().contains("case seed 9"));
    }

    #[test]
    fn property_names_round_trip() {
        for p in Property::ALL {
            assert_eq!(p.name().parse::<Property>(), Ok(p));
        }
        assert!("nope".parse::<Property>().is_err());
    }
}
