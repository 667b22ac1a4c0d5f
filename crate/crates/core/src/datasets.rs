//! Seeded generators for the four synthetic regression tasks.
//!
//! Every task has scalar inputs and outputs. Training inputs are drawn
//! uniformly from a union of intervals (component chosen with probability
//! proportional to its length), observations are `f(x) + σε` with
//! `ε ~ N(0, 1)`.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::model::{mlp, train::prior_draw, MlpArchitecture, ParamVector, RegressionDataset};
use crate::rng::{child_rng, std_normal, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskId {
    Af1,
    Af2,
    Af3,
    Af4,
}

impl TaskId {
    pub const ALL: [TaskId; 4] = [TaskId::Af1, TaskId::Af2, TaskId::Af3, TaskId::Af4];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskId::Af1 => "af1",
            TaskId::Af2 => "af2",
            TaskId::Af3 => "af3",
            TaskId::Af4 => "af4",
        }
    }

    /// Index used when deriving seeds.
    pub fn index(self) -> u64 {
        self as u64
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskId {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('#', "").as_str() {
            "af1" => Ok(TaskId::Af1),
            "af2" => Ok(TaskId::Af2),
            "af3" => Ok(TaskId::Af3),
            "af4" => Ok(TaskId::Af4),
            other => Err(invalid(format!("unknown task id {other:?}"))),
        }
    }
}

/// Latent function of the second task.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Af2Latent {
    /// `0.1x³`.
    #[default]
    Cubic,
    /// `0.1x²`.
    Quadratic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: TaskId,
    pub noise_sigma: f64,
    pub n_train: usize,
    pub n_test: usize,
    /// Training inputs are uniform on the union of these intervals.
    pub train_support: Vec<(f64, f64)>,
    /// Extra training points drawn uniformly here, appended after the others.
    pub extra_support: Option<((f64, f64), usize)>,
    pub test_support: (f64, f64),
    #[serde(default)]
    pub af2_latent: Af2Latent,
}

/// Architecture of the network generating the fourth task's targets.
pub fn teacher_architecture() -> MlpArchitecture {
    MlpArchitecture::new(vec![1, 100, 100, 100, 1]).expect("static architecture")
}

impl TaskSpec {
    pub fn standard(id: TaskId) -> Self {
        match id {
            TaskId::Af1 => Self {
                id,
                noise_sigma: 0.2,
                n_train: 100,
                n_test: 200,
                train_support: vec![(-3.0, 3.0)],
                extra_support: None,
                test_support: (-3.0, 3.0),
                af2_latent: Af2Latent::Cubic,
            },
            TaskId::Af2 => Self {
                id,
                noise_sigma: 0.25,
                n_train: 100,
                n_test: 200,
                train_support: vec![(-4.0, -1.0), (1.0, 4.0)],
                extra_support: None,
                test_support: (-4.0, 4.0),
                af2_latent: Af2Latent::Cubic,
            },
            TaskId::Af3 => Self {
                id,
                noise_sigma: 0.25,
                n_train: 82,
                n_test: 200,
                train_support: vec![(-6.0, -2.0), (2.0, 6.0)],
                extra_support: Some(((-2.0, 2.0), 2)),
                test_support: (-6.0, 6.0),
                af2_latent: Af2Latent::Cubic,
            },
            TaskId::Af4 => Self {
                id,
                noise_sigma: 0.02,
                n_train: 120,
                n_test: 120,
                train_support: vec![(-10.0, -6.0), (6.0, 10.0), (14.0, 18.0)],
                extra_support: None,
                test_support: (-12.0, 22.0),
                af2_latent: Af2Latent::Cubic,
            },
        }
    }

    pub fn with_noise(mut self, sigma: f64) -> Self {
        self.noise_sigma = sigma;
        self
    }

    /// Whether some test inputs fall outside the training support.
    pub fn has_ood_test_inputs(&self) -> bool {
        let (lo, hi) = self.test_support;
        let covered: f64 = self.train_support.iter().map(|(a, b)| b.min(hi) - a.max(lo)).sum();
        covered < hi - lo - 1e-12
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise_sigma >= 0.0) || self.n_test < 2 || self.train_support.is_empty() {
            return Err(invalid(
                "a task needs σ ≥ 0, at least two test points and a training support",
            ));
        }
        let extra = self.extra_support.map_or(0, |(_, k)| k);
        if self.n_train <= extra {
            return Err(invalid("training size must exceed the number of extra points"));
        }
        if self
            .train_support
            .iter()
            .chain([&self.test_support])
            .any(|(a, b)| !(a < b))
        {
            return Err(invalid("every interval must have positive length"));
        }
        Ok(())
    }

    /// Noiseless `f(x)`; the fourth task needs its teacher weights.
    pub fn latent(&self, x: f64, teacher: Option<&ParamVector>) -> Result<f64> {
        Ok(match self.id {
            TaskId::Af1 => (2.0 * x).cos() + x.sin(),
            TaskId::Af2 => match self.af2_latent {
                Af2Latent::Cubic => 0.1 * x.powi(3),
                Af2Latent::Quadratic => 0.1 * x * x,
            },
            TaskId::Af3 => -(1.0 + x) * (1.2 * x).sin(),
            TaskId::Af4 => {
                let w = teacher.ok_or_else(|| invalid("the teacher task needs teacher weights"))?;
                mlp::forward(&teacher_architecture(), w, &[x])?[0]
            }
        })
    }

    /// `n` evenly spaced points spanning the test support.
    pub fn grid(&self, n: usize) -> Vec<f64> {
        let (lo, hi) = self.test_support;
        match n {
            0 => vec![],
            1 => vec![0.5 * (lo + hi)],
            _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
        }
    }
}

/// Uniform draw from a union of disjoint intervals.
pub fn sample_union(intervals: &[(f64, f64)], rng: &mut Rng) -> f64 {
    let total: f64 = intervals.iter().map(|(a, b)| b - a).sum();
    let mut u = rng.random::<f64>() * total;
    for &(a, b) in intervals {
        let len = b - a;
        if u < len {
            return a + u;
        }
        u -= len;
    }
    let (_, b) = intervals[intervals.len() - 1];
    b
}

/// Replicated training sets plus one shared test set for a task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicateBundle {
    pub task: TaskSpec,
    pub seed: u64,
    pub training_sets: Vec<RegressionDataset>,
    pub test_set: RegressionDataset,
    /// `f(x)` at each test input.
    pub latent_test: Vec<f64>,
    /// Weights of the generating network (fourth task only).
    pub teacher: Option<ParamVector>,
}

impl ReplicateBundle {
    pub fn latent(&self, x: f64) -> Result<f64> {
        self.task.latent(x, self.teacher.as_ref())
    }

    pub fn test_inputs(&self) -> &[f64] {
        self.test_set.inputs_flat()
    }

    pub fn test_targets(&self) -> &[f64] {
        self.test_set.targets_flat()
    }
}

fn draw_set(
    task: &TaskSpec,
    xs: Vec<f64>,
    teacher: Option<&ParamVector>,
    rng: &mut Rng,
) -> Result<(RegressionDataset, Vec<f64>)> {
    let latent = xs
        .iter()
        .map(|&x| task.latent(x, teacher))
        .collect::<Result<Vec<f64>>>()?;
    let ys: Vec<f64> = latent.iter().map(|f| f + task.noise_sigma * std_normal(rng)).collect();
    Ok((RegressionDataset::from_xy(&xs, &ys)?, latent))
}

/// Draws the teacher (if any), the test set and `n_replicates` independent
/// training sets, each from its own stream derived from `seed`.
pub fn generate(task: &TaskSpec, n_replicates: usize, seed: u64) -> Result<ReplicateBundle> {
    task.validate()?;
    let teacher = (task.id == TaskId::Af4).then(|| {
        let arch = teacher_architecture();
        prior_draw(arch.parameter_count(), &mut child_rng(seed, &[0]))
    });
    let mut rng = child_rng(seed, &[1]);
    let (lo, hi) = task.test_support;
    let test_xs: Vec<f64> = (0..task.n_test).map(|_| rng.random_range(lo..hi)).collect();
    let (test_set, latent_test) = draw_set(task, test_xs, teacher.as_ref(), &mut rng)?;
    let training_sets = (0..n_replicates as u64)
        .map(|j| {
            let mut rng = child_rng(seed, &[2, j]);
            let extra = task.extra_support.map_or(0, |(_, k)| k);
            let mut xs: Vec<f64> = (0..task.n_train - extra)
                .map(|_| sample_union(&task.train_support, &mut rng))
                .collect();
            if let Some(((a, b), k)) = task.extra_support {
                xs.extend((0..k).map(|_| rng.random_range(a..b)));
            }
            draw_set(task, xs, teacher.as_ref(), &mut rng).map(|(d, _)| d)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ReplicateBundle {
        task: task.clone(),
        seed,
        training_sets,
        test_set,
        latent_test,
        teacher,
    })
}

/// Summary written next to the dataset CSVs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub task: TaskId,
    pub seed: u64,
    pub noise_sigma: f64,
    pub input_dim: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub n_replicates: usize,
    pub train_support: Vec<(f64, f64)>,
    pub test_support: (f64, f64),
    pub train_files: Vec<String>,
    pub test_file: String,
    pub teacher_file: Option<String>,
}

fn write_xy(path: &Path, xs: &[f64], ys: &[f64], y_name: &str) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["x1", y_name])?;
    for (x, y) in xs.iter().zip(ys) {
        w.write_record([x.to_string(), y.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes one CSV per training set (`x1,y`), the test set (`x1,y,f`), the
/// teacher weights when present, and `<task>_manifest.json`. Returns the
/// manifest path.
pub fn write_bundle(bundle: &ReplicateBundle, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let task = bundle.task.id;
    let mut train_files = Vec::with_capacity(bundle.training_sets.len());
    for (j, set) in bundle.training_sets.iter().enumerate() {
        let name = format!("{task}_train_{j:03}.csv");
        write_xy(&dir.join(&name), set.inputs_flat(), set.targets_flat(), "y")?;
        train_files.push(name);
    }
    let test_file = format!("{task}_test.csv");
    {
        let mut w = csv::Writer::from_path(dir.join(&test_file))?;
        w.write_record(["x1", "y", "f"])?;
        for i in 0..bundle.test_set.len() {
            w.write_record([
                bundle.test_set.input(i)[0].to_string(),
                bundle.test_set.target(i)[0].to_string(),
                bundle.latent_test[i].to_string(),
            ])?;
        }
        w.flush()?;
    }
    let teacher_file = match &bundle.teacher {
        Some(w) => {
            let name = format!("{task}_teacher.json");
            fs::write(dir.join(&name), serde_json::to_string(w)?)?;
            Some(name)
        }
        None => None,
    };
    let manifest = DatasetManifest {
        task,
        seed: bundle.seed,
        noise_sigma: bundle.task.noise_sigma,
        input_dim: 1,
        n_train: bundle.task.n_train,
        n_test: bundle.task.n_test,
        n_replicates: bundle.training_sets.len(),
        train_support: bundle.task.train_support.clone(),
        test_support: bundle.task.test_support,
        train_files,
        test_file,
        teacher_file,
    };
    let path = dir.join(format!("{task}_manifest.json"));
    fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(path)
}
