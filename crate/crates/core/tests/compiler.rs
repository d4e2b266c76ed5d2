use cajal::ast::Context;
use cajal::autodiff::{BranchMode, Graph};
use cajal::compile::compile_closed;
use cajal::gen::{Generator, TypeWeights};
use cajal::link::{lower, NodeEnv};
use cajal::tensor::{basis, dim, matmul_typed, reshape, shape_of, Matrix};
use cajal::typecheck::typecheck_closed;
use cajal::{compile, parse_program, typecheck, CompileMode, Expr, Name, TargetEnv, Tensor, Type};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_row_major(rows, cols, (0..rows * cols).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn reshape_inverts_column_major_vec(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = Generator::new(&mut rng, TypeWeights { bool: 0.4, lolli: 0.6 }).random_type();
        let (r, c) = shape_of(&t);
        let m = random_matrix(&mut rng, r, c);
        let v: Vec<f64> = (0..c).flat_map(|j| (0..r).map(move |i| (i, j))).map(|(i, j)| m.get(i, j)).collect();
        let back = reshape(&Matrix::column(&v), &t).unwrap();
        prop_assert_eq!(back.matrix(), &m);
        prop_assert_eq!(back.vec(), Matrix::column(&v));
        prop_assert_eq!(r * c, dim(&t));
    }

    #[test]
    fn application_is_matrix_product(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = Generator::new(&mut rng, TypeWeights::default());
        let (a, b) = (g.random_type(), g.random_type());
        let f = g.program(&Context::new(), &Type::lolli(a.clone(), b), 6);
        let v = g.value(&a, 4);
        if let (Some(f), Some(v)) = (f, v) {
            let fd = typecheck_closed(&f).unwrap();
            let vd = typecheck_closed(&v.to_expr()).unwrap();
            let ad = typecheck_closed(&Expr::app(f, v.to_expr())).unwrap();
            let want = matmul_typed(&compile_closed(&fd).unwrap(), &compile_closed(&vd).unwrap()).unwrap();
            prop_assert!(compile_closed(&ad).unwrap().max_abs_diff(&want) < 1e-9);
        }
    }

    #[test]
    fn random_mode_keeps_types(seed in any::<u64>(), mode_seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = Generator::new(&mut rng, TypeWeights::default());
        let t = g.random_type();
        if let Some(e) = g.program(&Context::new(), &t, 8) {
            let d = typecheck_closed(&e).unwrap();
            let env = TargetEnv::new();
            let random = compile(&d, &env, CompileMode::TypePreservingRandom(mode_seed)).unwrap();
            prop_assert_eq!(random.ty(), &t);
            prop_assert_eq!(random, compile(&d, &env, CompileMode::TypePreservingRandom(mode_seed)).unwrap());
        }
    }
}

#[test]
fn lambda_columns_are_images_of_basis_vectors() {
    // NOT on booleans, column j is the image of the j-th basis vector.
    let d = typecheck_closed(&cajal::parse_expr("\\x:2. if x then ff else tt").unwrap()).unwrap();
    let m = compile_closed(&d).unwrap();
    assert_eq!(m.to_rows(), vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
    for (j, e) in basis(&Type::Bool).iter().enumerate() {
        let image = matmul_typed(&m, e).unwrap();
        assert_eq!(image, Tensor::boolean(j == 1));
    }
}

#[test]
fn linking_raw_vectors_into_eq() {
    let p = parse_program(include_str!("../programs/eq.cj")).unwrap();
    let d = typecheck(&p.context, &p.expr).unwrap();
    let (x, y) = ([0.3, 0.7], [1.3, 4.7]);
    let env = TargetEnv::from([
        (Name::from("x"), Tensor::new(Type::Bool, Matrix::column(&x)).unwrap()),
        (Name::from("y"), Tensor::new(Type::Bool, Matrix::column(&y)).unwrap()),
    ]);
    // EQ is x₁·y + x₂·NOT y, and NOT swaps the two coordinates.
    let want = [x[0] * y[0] + x[1] * y[1], x[0] * y[1] + x[1] * y[0]];
    let got = compile(&d, &env, CompileMode::Correct).unwrap();
    assert!((got.data()[0] - want[0]).abs() < 1e-12 && (got.data()[1] - want[1]).abs() < 1e-12);

    // The same program lowered into a graph computes the same vector.
    let mut g = Graph::new();
    let nodes =
        NodeEnv::from([(Name::from("x"), g.input(Matrix::column(&x))), (Name::from("y"), g.input(Matrix::column(&y)))]);
    let out = lower(&mut g, &d, &nodes, BranchMode::Soft).unwrap();
    assert!(g.value(out).max_abs_diff(got.matrix()) < 1e-12);

    // Hard branches on non-basis conditions take the else branch, twice:
    // the outer one into NOT y, the inner one into its `tt`.
    let hard = compile(&d, &env, CompileMode::HardBranch).unwrap();
    assert_eq!(hard.data(), &[1.0, 0.0]);
}

#[test]
fn mistyped_environments_are_rejected() {
    let p = parse_program(include_str!("../programs/xor.cj")).unwrap();
    let d = typecheck(&p.context, &p.expr).unwrap();
    let env = TargetEnv::from([(Name::from("x"), Tensor::boolean(true))]);
    assert!(compile(&d, &env, CompileMode::Correct).is_err());
    let env = TargetEnv::from([
        (Name::from("x"), Tensor::boolean(true)),
        (Name::from("y"), Tensor::zeros(Type::bool_to_bool())),
    ]);
    assert!(compile(&d, &env, CompileMode::Correct).is_err());
}
