use std::fs::File;

use frugalzo::{make_synthetic_classification, make_toy, Dataset, LogisticTask, Objective, Quadratic, Toy, ToyFn};

use crate::spec::{CliError, CliResult, ExperimentSpec};

pub const SYNTHETIC_DIM: usize = 200;
pub const SYNTHETIC_EXAMPLES: usize = 512;
pub const QUADRATIC_DIM: usize = 100;

pub enum Task {
    Toy(Toy),
    Quadratic(Quadratic),
    Logistic(LogisticTask),
}

impl Task {
    pub fn build(spec: &ExperimentSpec, seed: u64) -> CliResult<Task> {
        let name = spec.task_name()?;
        let data_seed = spec.data_seed.unwrap_or(seed);
        if let Ok(toy) = name.parse::<ToyFn>() {
            return Ok(Task::Toy(make_toy(toy)));
        }
        match name {
            "quadratic" => Ok(Task::Quadratic(Quadratic::random(
                spec.dim.unwrap_or(QUADRATIC_DIM),
                data_seed,
            ))),
            "synthetic" => {
                if let Some(path) = &spec.data {
                    let file = File::open(path)
                        .map_err(|e| CliError::Config(format!("`data`: cannot open {}: {e}", path.display())))?;
                    let data = Dataset::read_csv(file).map_err(|e| CliError::Config(format!("`data`: {e}")))?;
                    return Ok(Task::Logistic(LogisticTask::from_dataset(path.display().to_string(), data)));
                }
                let d = spec.dim.unwrap_or(SYNTHETIC_DIM);
                let n = spec.examples.unwrap_or(SYNTHETIC_EXAMPLES);
                if d < 2 || n < 2 {
                    return Err(CliError::Config("`dim` and `examples` must both be >= 2".into()));
                }
                Ok(Task::Logistic(make_synthetic_classification(d, n, data_seed)))
            }
            other => Err(CliError::Config(format!(
                "`task`: unknown task `{other}` (f1, f2, f3, quadratic, synthetic)"
            ))),
        }
    }

    pub fn objective(&self) -> &(dyn Objective + Sync) {
        match self {
            Task::Toy(t) => t,
            Task::Quadratic(q) => q,
            Task::Logistic(l) => l,
        }
    }
}
