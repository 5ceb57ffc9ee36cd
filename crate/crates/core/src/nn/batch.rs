use serde::{Deserialize, Serialize};

use super::spec::InputKind;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Inputs {
    /// `n x dim`, row-major.
    Flat { dim: usize, data: Vec<f64> },
    /// `n x steps x features`, sample-major then step-major.
    Sequence {
        steps: usize,
        features: usize,
        data: Vec<f64>,
    },
}

impl Inputs {
    pub fn sample_len(&self) -> usize {
        match *self {
            Inputs::Flat { dim, .. } => dim,
            Inputs::Sequence {
                steps, features, ..
            } => steps * features,
        }
    }

    pub fn data(&self) -> &[f64] {
        match self {
            Inputs::Flat { data, .. } | Inputs::Sequence { data, .. } => data,
        }
    }

    fn kind(&self) -> InputKind {
        match *self {
            Inputs::Flat { dim, .. } => InputKind::Flat { dim },
            Inputs::Sequence {
                steps, features, ..
            } => InputKind::Sequence { steps, features },
        }
    }
}

/// Regression targets are one value per sample; class targets are stored as
/// labels, which is a one-hot matrix whose rows sum to one by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Targets {
    Regression(Vec<f64>),
    Classes { n_classes: usize, labels: Vec<usize> },
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Regression(y) => y.len(),
            Targets::Classes { labels, .. } => labels.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn one_hot(&self) -> Option<Vec<Vec<f64>>> {
        match self {
            Targets::Regression(_) => None,
            Targets::Classes { n_classes, labels } => Some(
                labels
                    .iter()
                    .map(|&l| {
                        let mut row = vec![0.0; *n_classes];
                        row[l] = 1.0;
                        row
                    })
                    .collect(),
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Batch {
    inputs: Inputs,
    targets: Targets,
}

impl Batch {
    pub fn new(inputs: Inputs, targets: Targets) -> Result<Self> {
        let per = inputs.sample_len();
        if per == 0 {
            return Err(Error::Shape("samples have zero input length".into()));
        }
        let data = inputs.data();
        if data.len() % per != 0 {
            return Err(Error::Shape(format!(
                "input buffer of {} values is not a multiple of {per}",
                data.len()
            )));
        }
        let n = data.len() / per;
        if n == 0 {
            return Err(Error::Shape("batch is empty".into()));
        }
        if targets.len() != n {
            return Err(Error::Shape(format!(
                "{n} input samples but {} targets",
                targets.len()
            )));
        }
        if let Targets::Classes { n_classes, labels } = &targets {
            if let Some(&bad) = labels.iter().find(|&&l| l >= *n_classes) {
                return Err(Error::Shape(format!(
                    "label {bad} out of range for {n_classes} classes"
                )));
            }
        }
        Ok(Batch { inputs, targets })
    }

    pub fn flat(dim: usize, data: Vec<f64>, targets: Targets) -> Result<Self> {
        Batch::new(Inputs::Flat { dim, data }, targets)
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn inputs(&self) -> &Inputs {
        &self.inputs
    }

    pub fn targets(&self) -> &Targets {
        &self.targets
    }

    pub fn input_kind(&self) -> InputKind {
        self.inputs.kind()
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        let per = self.inputs.sample_len();
        &self.inputs.data()[i * per..(i + 1) * per]
    }

    pub fn regression_targets(&self) -> Option<&[f64]> {
        match &self.targets {
            Targets::Regression(y) => Some(y),
            Targets::Classes { .. } => None,
        }
    }

    pub fn labels(&self) -> Option<&[usize]> {
        match &self.targets {
            Targets::Classes { labels, .. } => Some(labels),
            Targets::Regression(_) => None,
        }
    }

    /// Copies the given rows, in the given order, into a new batch.
    pub fn subset(&self, rows: &[usize]) -> Result<Batch> {
        let per = self.inputs.sample_len();
        let mut data = Vec::with_capacity(rows.len() * per);
        for &r in rows {
            if r >= self.len() {
                return Err(Error::Shape(format!("row {r} out of range ({})", self.len())));
            }
            data.extend_from_slice(self.sample(r));
        }
        let inputs = match self.inputs {
            Inputs::Flat { dim, .. } => Inputs::Flat { dim, data },
            Inputs::Sequence {
                steps, features, ..
            } => Inputs::Sequence {
                steps,
                features,
                data,
            },
        };
        let targets = match &self.targets {
            Targets::Regression(y) => Targets::Regression(rows.iter().map(|&r| y[r]).collect()),
            Targets::Classes { n_classes, labels } => Targets::Classes {
                n_classes: *n_classes,
                labels: rows.iter().map(|&r| labels[r]).collect(),
            },
        };
        Batch::new(inputs, targets)
    }

    /// Concatenates batches with identical input shapes and target kinds.
    pub fn concat(parts: &[&Batch]) -> Result<Batch> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Shape("nothing to concatenate".into()))?;
        let mut data = Vec::new();
        let mut reg = Vec::new();
        let mut labels = Vec::new();
        for b in parts {
            if b.input_kind() != first.input_kind() {
                return Err(Error::Shape("concatenating batches of different input shapes".into()));
            }
            data.extend_from_slice(b.inputs.data());
            match (&b.targets, &first.targets) {
                (Targets::Regression(y), Targets::Regression(_)) => reg.extend_from_slice(y),
                (
                    Targets::Classes { n_classes, labels: l },
                    Targets::Classes { n_classes: k, .. },
                ) if n_classes == k => labels.extend_from_slice(l),
                _ => return Err(Error::Shape("concatenating batches of different target kinds".into())),
            }
        }
        let inputs = match first.inputs {
            Inputs::Flat { dim, .. } => Inputs::Flat { dim, data },
            Inputs::Sequence {
                steps, features, ..
            } => Inputs::Sequence {
                steps,
                features,
                data,
            },
        };
        let targets = match &first.targets {
            Targets::Regression(_) => Targets::Regression(reg),
            Targets::Classes { n_classes, .. } => Targets::Classes {
                n_classes: *n_classes,
                labels,
            },
        };
        Batch::new(inputs, targets)
    }
}
