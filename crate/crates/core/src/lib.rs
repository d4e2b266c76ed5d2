//! Cajal: a linear lambda calculus over booleans whose well-typed programs
//! compile to linear neurons.
//!
//! The pipeline is [`parser`] → [`typecheck`] → [`compile`], with [`eval`]
//! giving the reference semantics the compiler is checked against in
//! [`verify`]. [`autodiff`] and [`experiments`] link compiled programs with
//! trainable networks.

pub mod ast;
pub mod autodiff;
pub mod compile;
pub mod eval;
pub mod experiments;
pub mod gen;
pub mod link;
pub mod parser;
pub mod tensor;
pub mod typecheck;
pub mod verify;

pub use ast::{Context, Expr, Name, Type, Value};
pub use compile::{compile, compile_env, CompileError, CompileMode};
pub use eval::{eval, EvalError, SourceEnv};
pub use parser::{parse_expr, parse_program, parse_type, ParseError, Program};
pub use tensor::{Matrix, TargetEnv, Tensor};
pub use typecheck::{typecheck, Derivation, TypeError};
