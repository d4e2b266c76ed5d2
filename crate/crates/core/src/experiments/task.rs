use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ast::{Expr, Name, Type, Value};
use crate::eval::{eval, SourceEnv, DEFAULT_FUEL};
use crate::parser::parse_program;
use crate::typecheck::{typecheck, typecheck_closed, Derivation};

/// Conditional classification of a pair of inputs by the parity of each.
/// `tt` stands for even.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Eq,
    Xor,
    And,
    Or,
}

impl Task {
    pub const ALL: [Task; 4] = [Task::Eq, Task::Xor, Task::And, Task::Or];

    pub fn name(self) -> &'static str {
        match self {
            Task::Eq => "eq",
            Task::Xor => "xor",
            Task::And => "and",
            Task::Or => "or",
        }
    }

    /// Source of the task's program `x:2, y:2 ⊢ e : 2`.
    pub fn source(self) -> &'static str {
        match self {
            Task::Eq => include_str!("../../programs/eq.cj"),
            Task::Xor => include_str!("../../programs/xor.cj"),
            Task::And => include_str!("../../programs/and.cj"),
            Task::Or => include_str!("../../programs/or.cj"),
        }
    }

    pub fn derivation(self) -> Derivation {
        let p = parse_program(self.source()).expect("task programs parse");
        typecheck(&p.context, &p.expr).expect("task programs typecheck")
    }

    /// The task program over Church booleans `2 -o 2 -o 2`, where true
    /// selects its first argument. Each occurrence of `x` becomes `p tt ff`
    /// and each of `y` becomes `q tt ff`.
    pub fn church_program(self) -> Expr {
        let body = self.derivation().expr;
        let unwrap = |v: &str| Expr::app(Expr::app(Expr::var(v), Expr::True), Expr::False);
        let body = replace_var(&body, "x", &unwrap("p"));
        let body = replace_var(&body, "y", &unwrap("q"));
        Expr::lam("p", church_bool(), Expr::lam("q", church_bool(), body))
    }

    pub fn church_derivation(self) -> Derivation {
        typecheck_closed(&self.church_program()).expect("church task programs typecheck")
    }

    /// ✓ for the parities `(x even, y even)`, read off by running the program.
    pub fn label(self, x_even: bool, y_even: bool) -> bool {
        let env =
            SourceEnv::from([(Name::from("x"), Value::from_bool(x_even)), (Name::from("y"), Value::from_bool(y_even))]);
        let d = self.derivation();
        eval(&d.expr, &env, DEFAULT_FUEL).ok().and_then(|v| v.as_bool()).expect("task programs return booleans")
    }

    /// `(x even, y even, ✓)` for all four parity pairs, `tt` first.
    pub fn truth_table(self) -> [(bool, bool, bool); 4] {
        [(true, true), (true, false), (false, true), (false, false)].map(|(x, y)| (x, y, self.label(x, y)))
    }
}

/// `2 -o 2 -o 2`.
pub fn church_bool() -> Type {
    Type::lolli(Type::Bool, Type::bool_to_bool())
}

/// Church booleans: true returns its first argument, false its second.
pub fn church_value(b: bool) -> Expr {
    let src = if b { "\\a:2. \\b:2. if b then a else a" } else { "\\a:2. \\b:2. if a then b else b" };
    crate::parser::parse_expr(src).expect("fixed source")
}

fn replace_var(e: &Expr, x: &str, with: &Expr) -> Expr {
    match e {
        Expr::Var(y) if y.as_str() == x => with.clone(),
        Expr::Var(_) | Expr::True | Expr::False => e.clone(),
        Expr::If(c, t, f) => Expr::ite(replace_var(c, x, with), replace_var(t, x, with), replace_var(f, x, with)),
        Expr::Lam(y, _, _) if y.as_str() == x => e.clone(),
        Expr::Lam(y, t, b) => Expr::Lam(y.clone(), t.clone(), Box::new(replace_var(b, x, with))),
        Expr::App(f, a) => Expr::app(replace_var(f, x, with), replace_var(a, x, with)),
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Task::ALL
            .into_iter()
            .find(|t| t.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown task `{s}` (expected eq, xor, and, or)"))
    }
}
