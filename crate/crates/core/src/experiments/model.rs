use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::{SyntheticDataset, YES};
use super::{church_value, ExperimentError, Task};
use crate::ast::{Expr, Name};
use crate::autodiff::{AdamState, BranchMode, Graph, NodeId, ParamId, ParamStore};
use crate::compile::compile_closed;
use crate::link::{constant, lower, NodeEnv};
use crate::tensor::{Matrix, Tensor};
use crate::typecheck::{typecheck_closed, Derivation};

/// The four ways of wiring a classifier for a task.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    /// One ReLU network over both inputs; no compiled structure.
    I,
    /// Two parity encoders linked into the task program, with conditionals
    /// as soft branches.
    D,
    /// Two encoders producing Church booleans, applied to the compiled
    /// Church-encoded task program.
    C,
    /// Two parity encoders whose outputs' tensor product feeds a trainable
    /// random linear map: the compiled program's types without its behavior.
    T,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::I, ModelKind::D, ModelKind::C, ModelKind::T];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::I => "I",
            ModelKind::D => "D",
            ModelKind::C => "C",
            ModelKind::T => "T",
        }
    }

    /// Width of each encoder's output.
    fn code_width(self) -> usize {
        match self {
            ModelKind::C => 8,
            _ => 2,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown model `{s}` (expected I, D, C, T)"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub input_dim: usize,
    pub hidden: usize,
    pub lr: f64,
    pub batch: usize,
    pub seed: u64,
    pub steps: usize,
    /// Test accuracy is recorded at step 0, every `eval_every` steps, and at the end.
    pub eval_every: usize,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: &str| Err(ExperimentError::Config(m.into()));
        if self.input_dim == 0 || self.hidden == 0 {
            return bad("layer sizes must be positive");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("learning rate must be positive");
        }
        if self.batch == 0 {
            return bad("batch size must be positive");
        }
        if self.eval_every == 0 {
            return bad("evaluation interval must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
struct Dense {
    w: ParamId,
    b: ParamId,
}

impl Dense {
    fn new(store: &mut ParamStore, name: &str, rows: usize, cols: usize, rng: &mut impl Rng) -> Dense {
        Dense {
            w: store.add_he(format!("{name}.w"), rows, cols, rng),
            b: store.add_zeros(format!("{name}.b"), rows, 1),
        }
    }
}

/// `input → hidden (ReLU) → output`.
#[derive(Clone, Copy, Debug)]
struct Mlp {
    l1: Dense,
    l2: Dense,
}

impl Mlp {
    fn new(store: &mut ParamStore, name: &str, sizes: [usize; 3], rng: &mut impl Rng) -> Mlp {
        Mlp {
            l1: Dense::new(store, &format!("{name}.0"), sizes[1], sizes[0], rng),
            l2: Dense::new(store, &format!("{name}.1"), sizes[2], sizes[1], rng),
        }
    }

    fn forward(&self, g: &mut Graph, store: &ParamStore, x: NodeId) -> Result<NodeId, ExperimentError> {
        let h = g.dense(store, self.l1.w, self.l1.b, x, true)?;
        Ok(g.dense(store, self.l2.w, self.l2.b, h, false)?)
    }
}

#[derive(Clone, Debug)]
enum Logic {
    Indirect(Mlp),
    Direct { enc: [Mlp; 2], program: Derivation },
    Church { enc: [Mlp; 2], program: Tensor },
    Typed { enc: [Mlp; 2], head: ParamId },
}

#[derive(Clone, Debug)]
pub struct Model {
    pub kind: ModelKind,
    pub task: Task,
    pub store: ParamStore,
    logic: Logic,
}

/// Builds an untrained model. `D` and `C` embed the compiled task program as
/// frozen graph constants; `T` and `I` draw all weights from `seed`.
pub fn build_model(cfg: &ModelConfig, task: Task) -> Result<Model, ExperimentError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(INIT_STREAM);
    let mut store = ParamStore::new();
    let (n, h, k) = (cfg.input_dim, cfg.hidden, cfg.kind.code_width());
    let encoders = |store: &mut ParamStore, rng: &mut ChaCha8Rng| {
        [Mlp::new(store, "enc1", [n, h, k], rng), Mlp::new(store, "enc2", [n, h, k], rng)]
    };
    let logic = match cfg.kind {
        ModelKind::I => Logic::Indirect(Mlp::new(&mut store, "mlp", [2 * n, h, 2], &mut rng)),
        ModelKind::D => Logic::Direct { enc: encoders(&mut store, &mut rng), program: task.derivation() },
        ModelKind::C => {
            Logic::Church { enc: encoders(&mut store, &mut rng), program: compile_closed(&task.church_derivation())? }
        }
        ModelKind::T => {
            let enc = encoders(&mut store, &mut rng);
            let head = store.add_he("head", 2, 4, &mut rng);
            Logic::Typed { enc, head }
        }
    };
    Ok(Model { kind: cfg.kind, task, store, logic })
}

const INIT_STREAM: u64 = 10;
const BATCH_STREAM: u64 = 11;

impl Model {
    /// Number of trainable scalars.
    pub fn param_count(&self) -> usize {
        self.store.count()
    }

    /// The compiled tensor embedded in the model, if any: the closed program
    /// `λx.λy. e` for `D`, the Church-encoded program for `C`.
    pub fn frozen_tensor(&self) -> Option<Tensor> {
        match &self.logic {
            Logic::Direct { program, .. } => {
                let bindings: Vec<_> = program.context.iter().collect();
                let closed = bindings
                    .into_iter()
                    .rev()
                    .fold(program.expr.clone(), |body, (x, t)| Expr::lam(x.clone(), t.clone(), body));
                typecheck_closed(&closed).ok().and_then(|d| compile_closed(&d).ok())
            }
            Logic::Church { program, .. } => Some(program.clone()),
            _ => None,
        }
    }

    /// Logits `2 × batch` for input columns `x1`, `x2`.
    pub fn logits(&self, g: &mut Graph, x1: NodeId, x2: NodeId) -> Result<NodeId, ExperimentError> {
        let s = &self.store;
        match &self.logic {
            Logic::Indirect(mlp) => {
                let x = g.concat(&[x1, x2])?;
                mlp.forward(g, s, x)
            }
            Logic::Direct { enc, .. } | Logic::Church { enc, .. } | Logic::Typed { enc, .. } => {
                let a = enc[0].forward(g, s, x1)?;
                let b = enc[1].forward(g, s, x2)?;
                self.combine(g, a, b)
            }
        }
    }

    /// The part after the encoders, applied to their outputs `a` and `b`.
    pub fn combine(&self, g: &mut Graph, a: NodeId, b: NodeId) -> Result<NodeId, ExperimentError> {
        match &self.logic {
            Logic::Indirect(_) => Err(ExperimentError::Config("model I has no encoders".into())),
            Logic::Direct { program, .. } => {
                let env = NodeEnv::from([(Name::from("x"), a), (Name::from("y"), b)]);
                Ok(lower(g, program, &env, BranchMode::Soft)?)
            }
            Logic::Church { program, .. } => {
                let f = constant(g, program);
                let partial = g.apply(f, a, 16)?;
                Ok(g.apply(partial, b, 2)?)
            }
            Logic::Typed { head, .. } => {
                let ab = g.tensor_product(a, b)?;
                let w = g.param(&self.store, *head);
                Ok(g.matmul(w, ab)?)
            }
        }
    }

    /// Accuracy on the four parity pairs when the encoders are bypassed and
    /// their ideal outputs fed in: basis booleans for `D` and `T`, compiled
    /// Church booleans for `C`. `None` for `I`.
    pub fn basis_fidelity(&self) -> Option<f64> {
        let code = |b: bool| -> Vec<f64> {
            match self.kind {
                ModelKind::C => {
                    let d = typecheck_closed(&church_value(b)).expect("church booleans typecheck");
                    compile_closed(&d).expect("closed").vec().data().to_vec()
                }
                _ => Tensor::boolean(b).vec().data().to_vec(),
            }
        };
        if self.kind == ModelKind::I {
            return None;
        }
        let table = self.task.truth_table();
        let columns = |pick: fn(&(bool, bool, bool)) -> bool| {
            let cols: Vec<Vec<f64>> = table.iter().map(|r| code(pick(r))).collect();
            let rows = cols[0].len();
            let mut m = Matrix::zeros(rows, cols.len());
            for (j, c) in cols.iter().enumerate() {
                for (i, v) in c.iter().enumerate() {
                    m.set(i, j, *v);
                }
            }
            m
        };
        let mut g = Graph::new();
        let a = g.input(columns(|r| r.0));
        let b = g.input(columns(|r| r.1));
        let out = self.combine(&mut g, a, b).ok()?;
        let labels: Vec<usize> = table.iter().map(|r| if r.2 { YES } else { 1 - YES }).collect();
        Some(accuracy(g.value(out), &labels))
    }
}

/// Fraction of columns where the prediction (✓ iff `y₁ ≥ y₂`) matches the label.
pub fn accuracy(logits: &Matrix, labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let correct = labels
        .iter()
        .enumerate()
        .filter(|&(j, &l)| {
            let predicted = if logits.get(0, j) >= logits.get(1, j) { YES } else { 1 - YES };
            predicted == l
        })
        .count();
    correct as f64 / labels.len() as f64
}

/// Test accuracy of `model` on the whole test split.
pub fn evaluate(model: &Model, data: &SyntheticDataset) -> Result<f64, ExperimentError> {
    let mut g = Graph::new();
    let x1 = g.input(data.test.x1.clone());
    let x2 = g.input(data.test.x2.clone());
    let out = model.logits(&mut g, x1, x2)?;
    Ok(accuracy(g.value(out), &data.test.labels))
}

/// Test accuracy over training: `(step, accuracy)` pairs.
pub fn train(cfg: &ModelConfig, data: &SyntheticDataset) -> Result<Vec<(usize, f64)>, ExperimentError> {
    let mut model = build_model(cfg, data.task)?;
    if data.config.dim != cfg.input_dim {
        return Err(ExperimentError::Config(format!(
            "model expects {}-dimensional inputs, data has {}",
            cfg.input_dim, data.config.dim
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(BATCH_STREAM);
    let mut adam = AdamState::new(&model.store, cfg.lr);
    let mut curve = vec![(0, evaluate(&model, data)?)];
    let n = data.train.len();
    for step in 1..=cfg.steps {
        let idx: Vec<usize> = (0..cfg.batch).map(|_| rng.random_range(0..n)).collect();
        let (x1, x2, labels) = data.train.batch(&idx);
        let mut g = Graph::new();
        let (x1, x2) = (g.input(x1), g.input(x2));
        let logits = model.logits(&mut g, x1, x2)?;
        let loss = g.cross_entropy(logits, &labels)?;
        let grads = g.backward(loss, &model.store);
        adam.step(&mut model.store, &grads);
        if step % cfg.eval_every == 0 || step == cfg.steps {
            curve.push((step, evaluate(&model, data)?));
        }
    }
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::{gen_task_data, DataConfig};

    fn cfg(kind: ModelKind) -> ModelConfig {
        ModelConfig { kind, input_dim: 16, hidden: 32, lr: 3e-3, batch: 32, seed: 1, steps: 0, eval_every: 50 }
    }

    #[test]
    fn compiled_logic_is_faithful_before_training() {
        for task in Task::ALL {
            for kind in [ModelKind::D, ModelKind::C] {
                let m = build_model(&cfg(kind), task).unwrap();
                assert_eq!(m.basis_fidelity(), Some(1.0), "{task} {kind}");
            }
            assert_eq!(build_model(&cfg(ModelKind::I), task).unwrap().basis_fidelity(), None);
        }
    }

    #[test]
    fn direct_combination_is_eq_expansion() {
        let m = build_model(&cfg(ModelKind::D), Task::Eq).unwrap();
        let (a, b) = ([0.7, -0.2], [1.5, 0.25]);
        let mut g = Graph::new();
        let (an, bn) = (g.input(Matrix::column(&a)), g.input(Matrix::column(&b)));
        let out = m.combine(&mut g, an, bn).unwrap();
        let want = [a[0] * b[0] + a[1] * b[1], a[0] * b[1] + a[1] * b[0]];
        for (x, y) in g.value(out).data().iter().zip(want) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn direct_frozen_tensor_is_the_curried_program() {
        let m = build_model(&cfg(ModelKind::D), Task::Eq).unwrap();
        let t = m.frozen_tensor().unwrap();
        assert_eq!(t.shape(), (4, 2));
        assert!(build_model(&cfg(ModelKind::I), Task::Eq).unwrap().frozen_tensor().is_none());
        assert_eq!(build_model(&cfg(ModelKind::C), Task::Eq).unwrap().frozen_tensor().unwrap().shape(), (16, 8));
    }

    #[test]
    fn parameter_partition() {
        let enc = 2 * (16 * 32 + 32 + 32 * 2 + 2);
        assert_eq!(build_model(&cfg(ModelKind::D), Task::Eq).unwrap().param_count(), enc);
        assert_eq!(build_model(&cfg(ModelKind::T), Task::Eq).unwrap().param_count(), enc + 8);
        let church = 2 * (16 * 32 + 32 + 32 * 8 + 8);
        assert_eq!(build_model(&cfg(ModelKind::C), Task::Eq).unwrap().param_count(), church);
        assert_eq!(build_model(&cfg(ModelKind::I), Task::Eq).unwrap().param_count(), 32 * 32 + 32 + 32 * 2 + 2);
    }

    #[test]
    fn typed_head_depends_on_seed() {
        let a = build_model(&cfg(ModelKind::T), Task::Eq).unwrap();
        let b = build_model(&ModelConfig { seed: 2, ..cfg(ModelKind::T) }, Task::Eq).unwrap();
        assert_ne!(a.store, b.store);
    }

    #[test]
    fn training_is_deterministic_and_learns() {
        let data = gen_task_data(Task::Eq, &DataConfig { train: 400, test: 200, ..DataConfig::default() }).unwrap();
        let c = ModelConfig { steps: 300, ..cfg(ModelKind::D) };
        let a = train(&c, &data).unwrap();
        assert_eq!(a, train(&c, &data).unwrap());
        assert_eq!(a.first().unwrap().0, 0);
        assert_eq!(a.last().unwrap().0, 300);
        assert!(a.last().unwrap().1 > 0.9, "{a:?}");
    }

    #[test]
    fn accuracy_ties_count_as_yes() {
        let logits = Matrix::from_rows(&[vec![1.0, 0.0, 2.0], vec![1.0, 3.0, 1.0]]);
        assert_eq!(accuracy(&logits, &[YES, 1 - YES, 1 - YES]), 2.0 / 3.0);
    }
}
