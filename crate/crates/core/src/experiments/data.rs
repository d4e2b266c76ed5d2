use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{ExperimentError, Task};
use crate::tensor::Matrix;

/// Label index of ✓; ✗ is `1`. Matches `⟦tt⟧ = [1, 0]`.
pub const YES: usize = 0;
pub const NO: usize = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    /// Feature dimension of each input.
    pub dim: usize,
    pub train: usize,
    pub test: usize,
    /// Distance between the two cluster means, in units of the noise std.
    pub separation: f64,
    pub seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig { dim: 16, train: 2000, test: 1000, separation: 6.0, seed: 0 }
    }
}

/// Paired samples stored column-wise.
#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub x1: Matrix,
    pub x2: Matrix,
    /// `(x1 even, x2 even)` per sample.
    pub parities: Vec<(bool, bool)>,
    /// [`YES`] or [`NO`] per sample.
    pub labels: Vec<usize>,
}

impl Split {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// The samples at `idx`, in that order.
    pub fn batch(&self, idx: &[usize]) -> (Matrix, Matrix, Vec<usize>) {
        (gather(&self.x1, idx), gather(&self.x2, idx), idx.iter().map(|&i| self.labels[i]).collect())
    }
}

fn gather(m: &Matrix, idx: &[usize]) -> Matrix {
    let mut out = Matrix::zeros(m.rows(), idx.len());
    for (c, &j) in idx.iter().enumerate() {
        for i in 0..m.rows() {
            out.set(i, c, m.get(i, j));
        }
    }
    out
}

/// Two Gaussian clusters, one per parity, standing in for images of digits.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticDataset {
    pub task: Task,
    pub config: DataConfig,
    pub even_mean: Vec<f64>,
    pub odd_mean: Vec<f64>,
    pub train: Split,
    pub test: Split,
}

// Independent streams for cluster placement and each split.
const MEANS: u64 = 1;
const TRAIN: u64 = 2;
const TEST: u64 = 3;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Labels alternate ✓/✗ and each sample's parity pair is drawn uniformly
/// among the pairs carrying its label, so both classes are equally frequent
/// for every task.
pub fn gen_task_data(task: Task, config: &DataConfig) -> Result<SyntheticDataset, ExperimentError> {
    if config.train < 100 || config.test < 100 {
        return Err(ExperimentError::Config("train and test sizes must be at least 100".into()));
    }
    if config.dim == 0 {
        return Err(ExperimentError::Config("feature dimension must be positive".into()));
    }
    let mut rng = stream(config.seed, MEANS);
    let center: Vec<f64> = (0..config.dim).map(|_| rng.sample(StandardNormal)).collect();
    let dir: Vec<f64> = (0..config.dim).map(|_| rng.sample(StandardNormal)).collect();
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    let half = config.separation / 2.0;
    let even_mean: Vec<f64> = center.iter().zip(&dir).map(|(c, d)| c + half * d / norm).collect();
    let odd_mean: Vec<f64> = center.iter().zip(&dir).map(|(c, d)| c - half * d / norm).collect();

    let table = task.truth_table();
    let split = |n: usize, rng: &mut ChaCha8Rng| {
        let mut x1 = Matrix::zeros(config.dim, n);
        let mut x2 = Matrix::zeros(config.dim, n);
        let mut parities = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for j in 0..n {
            let yes = j % 2 == 0;
            let pairs: Vec<(bool, bool)> = table.iter().filter(|r| r.2 == yes).map(|r| (r.0, r.1)).collect();
            let (p1, p2) = pairs[rng.random_range(0..pairs.len())];
            for (m, even) in [(&mut x1, p1), (&mut x2, p2)] {
                let mean = if even { &even_mean } else { &odd_mean };
                for (i, mu) in mean.iter().enumerate() {
                    let noise: f64 = StandardNormal.sample(rng);
                    m.set(i, j, mu + noise);
                }
            }
            parities.push((p1, p2));
            labels.push(if yes { YES } else { NO });
        }
        Split { x1, x2, parities, labels }
    };
    let train = split(config.train, &mut stream(config.seed, TRAIN));
    let test = split(config.test, &mut stream(config.seed, TEST));
    Ok(SyntheticDataset { task, config: config.clone(), even_mean, odd_mean, train, test })
}
