//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Every export takes plain arguments and returns a JSON string, so the page
//! needs no generated type bindings and the same functions run natively in
//! tests.

use cajal::autodiff::{grad_probe_branch, BranchMode};
use cajal::compile::{compile, CompileMode};
use cajal::eval::eval_closed;
use cajal::experiments::Task;
use cajal::tensor::{dim, reshape, Matrix, TargetEnv, Tensor};
use cajal::{parse_program, typecheck, Name};
use serde_json::{json, Map, Value as Json};
use wasm_bindgen::prelude::*;

fn error(msg: impl ToString) -> Json {
    json!({ "error": msg.to_string() })
}

fn tensor_json(t: &Tensor) -> Json {
    json!({ "type": t.ty().to_string(), "shape": [t.shape().0, t.shape().1], "rows": t.to_rows() })
}

/// Compiles `src`. Free variables declared in the program's header take
/// their vectors from `inputs`, a JSON object such as `{"x": [0.3, 0.7]}`.
/// Closed programs are also evaluated.
pub fn compile_json(src: &str, inputs: &str) -> Json {
    let program = match parse_program(src) {
        Ok(p) => p,
        Err(e) => return json!({ "error": e.message, "line": e.line, "column": e.column }),
    };
    let d = match typecheck(&program.context, &program.expr) {
        Ok(d) => d,
        Err(e) => return error(e),
    };
    let given: Map<String, Json> = if inputs.trim().is_empty() {
        Map::new()
    } else {
        match serde_json::from_str(inputs) {
            Ok(m) => m,
            Err(_) => return error("inputs must be a JSON object of number lists"),
        }
    };
    let mut env = TargetEnv::new();
    for (x, ty) in program.context.iter() {
        let Some(raw) = given.get(x.as_str()) else {
            return error(format!("no input vector for `{x}`"));
        };
        let Ok(numbers) = serde_json::from_value::<Vec<f64>>(raw.clone()) else {
            return error(format!("input for `{x}` must be a list of numbers"));
        };
        match reshape(&Matrix::column(&numbers), ty) {
            Ok(t) => env.insert(x.clone(), t),
            Err(_) => return error(format!("`{x}` has type {ty} and needs {} numbers", dim(ty))),
        };
    }
    let soft = match compile(&d, &env, CompileMode::Correct) {
        Ok(t) => t,
        Err(e) => return error(e),
    };
    let hard = compile(&d, &env, CompileMode::HardBranch).ok();
    let value = program.context.is_empty().then(|| eval_closed(&d.expr).ok()).flatten();
    json!({
        "context": program.context.to_string(),
        "type": d.ty.to_string(),
        "soft": tensor_json(&soft),
        "hard": hard.as_ref().map(tensor_json),
        "value": value.map(|v| v.to_string()),
    })
}

/// Gradients of a loss through one conditional whose condition is
/// `[a1, a2]`, under soft and hard branching.
pub fn probe_json(a1: f64, a2: f64) -> Json {
    let probe = |mode| {
        let p = grad_probe_branch([a1, a2], mode);
        json!({ "autodiff": p.autodiff, "finite_difference": p.finite_difference })
    };
    json!({ "condition": [a1, a2], "soft": probe(BranchMode::Soft), "hard": probe(BranchMode::Hard) })
}

/// Runs a task program on raw condition vectors `x` and `y`, such as the
/// outputs of two classifiers, with soft and with hard branching.
pub fn link_json(task: &str, x: [f64; 2], y: [f64; 2]) -> Json {
    let task: Task = match task.parse() {
        Ok(t) => t,
        Err(e) => return error(e),
    };
    let d = task.derivation();
    let env = TargetEnv::from([
        (Name::from("x"), Tensor::new(cajal::Type::Bool, Matrix::column(&x)).expect("2-vector")),
        (Name::from("y"), Tensor::new(cajal::Type::Bool, Matrix::column(&y)).expect("2-vector")),
    ]);
    let run = |mode| compile(&d, &env, mode).map(|t| t.data().to_vec()).map_err(|e| e.to_string());
    match (run(CompileMode::Correct), run(CompileMode::HardBranch)) {
        (Ok(soft), Ok(hard)) => json!({
            "task": task.name(),
            "program": d.expr.to_string(),
            "soft": soft,
            "hard": hard,
            "soft_says_yes": soft[0] >= soft[1],
            "hard_says_yes": hard[0] >= hard[1],
        }),
        (Err(e), _) | (_, Err(e)) => error(e),
    }
}

#[wasm_bindgen]
pub fn compile_source(src: &str, inputs: &str) -> String {
    compile_json(src, inputs).to_string()
}

#[wasm_bindgen]
pub fn probe_branch(a1: f64, a2: f64) -> String {
    probe_json(a1, a2).to_string()
}

#[wasm_bindgen]
pub fn link_task(task: &str, x1: f64, x2: f64, y1: f64, y2: f64) -> String {
    link_json(task, [x1, x2], [y1, y2]).to_string()
}
