use cajal::autodiff::{finite_difference, max_relative_error, AdamState, Graph, ParamStore, FD_STEP};
use cajal::experiments::{
    accuracy, build_model, export_metrics, gen_task_data, read_metrics_csv, run_experiment, train, Budget, DataConfig,
    ExperimentConfig, ModelConfig, ModelKind, Task, YES,
};
use cajal::tensor::Matrix;
use proptest::prelude::*;

fn small_data() -> DataConfig {
    DataConfig { train: 200, test: 100, ..DataConfig::default() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn tensor_product_matches_outer_product(
        a in prop::collection::vec(-3.0f64..3.0, 1..4),
        b in prop::collection::vec(-3.0f64..3.0, 1..4),
    ) {
        let mut g = Graph::new();
        let (x, y) = (g.input(Matrix::column(&a)), g.input(Matrix::column(&b)));
        let out = g.tensor_product(x, y).unwrap();
        let m = a.len();
        for (j, bj) in b.iter().enumerate() {
            for (i, ai) in a.iter().enumerate() {
                prop_assert_eq!(g.value(out).get(i + m * j, 0), ai * bj);
            }
        }
    }

    #[test]
    fn soft_branch_gradients_match_finite_differences(
        cond in prop::collection::vec(-2.0f64..2.0, 2),
        then_b in prop::collection::vec(-2.0f64..2.0, 3),
        else_b in prop::collection::vec(-2.0f64..2.0, 3),
        label in 0usize..3,
    ) {
        let mut store = ParamStore::new();
        let ids = [store.add("c", Matrix::column(&cond)), store.add("t", Matrix::column(&then_b)), store.add("e", Matrix::column(&else_b))];
        let loss = |s: &ParamStore| {
            let mut g = Graph::new();
            let [c, t, e] = ids.map(|id| g.param(s, id));
            let out = g.soft_branch(c, t, e).unwrap();
            let l = g.cross_entropy(out, &[label]).unwrap();
            (g, l)
        };
        let (g, l) = loss(&store);
        let auto = g.backward(l, &store);
        let fd = finite_difference(&store, FD_STEP, |s| { let (g, l) = loss(s); g.value(l).get(0, 0) });
        prop_assert!(max_relative_error(&auto, &fd) < 1e-4);
    }
}

#[test]
fn adam_fits_a_linear_classifier() {
    let mut store = ParamStore::new();
    let w = store.add_zeros("w", 2, 2);
    let b = store.add_zeros("b", 2, 1);
    let x = Matrix::from_rows(&[vec![1.0, -1.0, 2.0, -2.0], vec![0.5, 0.3, -0.1, 0.2]]);
    let labels = [0, 1, 0, 1];
    let mut adam = AdamState::new(&store, 0.05);
    for _ in 0..200 {
        let mut g = Graph::new();
        let input = g.input(x.clone());
        let logits = g.dense(&store, w, b, input, false).unwrap();
        let loss = g.cross_entropy(logits, &labels).unwrap();
        let grads = g.backward(loss, &store);
        adam.step(&mut store, &grads);
    }
    let mut g = Graph::new();
    let input = g.input(x);
    let logits = g.dense(&store, w, b, input, false).unwrap();
    assert_eq!(accuracy(g.value(logits), &labels), 1.0);
}

#[test]
fn data_is_balanced_and_seeded() {
    let data = gen_task_data(Task::Xor, &small_data()).unwrap();
    let yes = data.train.labels.iter().filter(|&&l| l == YES).count();
    assert_eq!(yes * 2, data.train.labels.len());
    assert_eq!(data, gen_task_data(Task::Xor, &small_data()).unwrap());
    let other = gen_task_data(Task::Xor, &DataConfig { seed: 1, ..small_data() }).unwrap();
    assert_ne!(data.train.x1, other.train.x1);
}

#[test]
fn compiled_models_start_with_exact_logic() {
    for task in [Task::Eq, Task::Xor, Task::And, Task::Or] {
        for kind in [ModelKind::D, ModelKind::C] {
            let cfg =
                ModelConfig { kind, input_dim: 16, hidden: 32, lr: 1e-3, batch: 32, seed: 3, steps: 10, eval_every: 5 };
            assert_eq!(build_model(&cfg, task).unwrap().basis_fidelity(), Some(1.0), "{task} {kind}");
        }
    }
}

#[test]
fn training_improves_accuracy() {
    let data = gen_task_data(Task::Eq, &small_data()).unwrap();
    let cfg = ModelConfig {
        kind: ModelKind::D,
        input_dim: 16,
        hidden: 16,
        lr: 1e-2,
        batch: 32,
        seed: 0,
        steps: 200,
        eval_every: 100,
    };
    let curve = train(&cfg, &data).unwrap();
    assert_eq!(curve.iter().map(|p| p.0).collect::<Vec<_>>(), vec![0, 100, 200]);
    assert!(curve[2].1 > 0.9, "{curve:?}");
}

#[test]
fn exported_metrics_read_back() {
    let cfg = ExperimentConfig {
        models: vec![ModelKind::I, ModelKind::T],
        lrs: vec![1e-2],
        batches: vec![16],
        seeds: vec![0, 1],
        budget: Budget::Steps(20),
        eval_every: 10,
        hidden: 8,
        data: small_data(),
    };
    let series = run_experiment(Task::And, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let out = export_metrics(&series, dir.path()).unwrap();
    assert_eq!(read_metrics_csv(Task::And, &out.csv).unwrap(), series);
    let svg = std::fs::read_to_string(&out.plot).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("</svg>"));
}
