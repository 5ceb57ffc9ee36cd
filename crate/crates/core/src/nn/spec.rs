use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Linear,
    Softmax,
}

/// What an LSTM layer hands to the next layer: the final hidden state only,
/// or the hidden state at every step (needed to stack recurrent layers).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LstmReturn {
    LastState,
    Sequence,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Layer {
    Dense {
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
    },
    Lstm {
        in_dim: usize,
        hidden_dim: usize,
        #[serde(rename = "return")]
        ret: LstmReturn,
    },
    Dropout {
        rate: f64,
    },
}

impl Layer {
    pub fn param_count(&self) -> usize {
        match *self {
            Layer::Dense { in_dim, out_dim, .. } => (in_dim + 1) * out_dim,
            Layer::Lstm {
                in_dim, hidden_dim, ..
            } => 4 * hidden_dim * (in_dim + hidden_dim + 1),
            Layer::Dropout { .. } => 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputKind {
    Flat { dim: usize },
    Sequence { steps: usize, features: usize },
}

/// Output head of a model, which fixes the loss: MSE for regression and
/// categorical cross-entropy for a softmax classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    Regression { outputs: usize },
    Classification { classes: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Shape {
    Flat(usize),
    Seq(usize, usize),
}

impl Shape {
    pub(crate) fn len(self) -> usize {
        match self {
            Shape::Flat(d) => d,
            Shape::Seq(t, d) => t * d,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "UncheckedSpec")]
pub struct ModelSpec {
    input: InputKind,
    layers: Vec<Layer>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct UncheckedSpec {
    input: InputKind,
    layers: Vec<Layer>,
}

impl TryFrom<UncheckedSpec> for ModelSpec {
    type Error = Error;

    fn try_from(raw: UncheckedSpec) -> Result<Self> {
        ModelSpec::new(raw.input, raw.layers)
    }
}

impl ModelSpec {
    pub fn new(input: InputKind, layers: Vec<Layer>) -> Result<Self> {
        let spec = ModelSpec { input, layers };
        spec.validate()?;
        Ok(spec)
    }

    pub fn input(&self) -> InputKind {
        self.input
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Analytic parameter count: `(in+1)*out` per dense layer and
    /// `4h(d+h+1)` per LSTM layer.
    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    pub fn head(&self) -> Head {
        match self.layers.last() {
            Some(Layer::Dense {
                out_dim,
                activation: Activation::Softmax,
                ..
            }) => Head::Classification { classes: *out_dim },
            Some(Layer::Dense { out_dim, .. }) => Head::Regression { outputs: *out_dim },
            Some(Layer::Lstm { hidden_dim, .. }) => Head::Regression {
                outputs: *hidden_dim,
            },
            _ => unreachable!("validated spec ends in a dense or lstm layer"),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self.head() {
            Head::Regression { outputs } => outputs,
            Head::Classification { classes } => classes,
        }
    }

    pub(crate) fn input_shape(&self) -> Shape {
        match self.input {
            InputKind::Flat { dim } => Shape::Flat(dim),
            InputKind::Sequence { steps, features } => Shape::Seq(steps, features),
        }
    }

    /// Shapes flowing into each layer, plus the final output shape.
    pub(crate) fn shapes(&self) -> Vec<Shape> {
        let mut shapes = vec![self.input_shape()];
        for layer in &self.layers {
            let cur = *shapes.last().unwrap();
            let next = match (*layer, cur) {
                (Layer::Dense { out_dim, .. }, _) => Shape::Flat(out_dim),
                (
                    Layer::Lstm {
                        hidden_dim,
                        ret: LstmReturn::Sequence,
                        ..
                    },
                    Shape::Seq(t, _),
                ) => Shape::Seq(t, hidden_dim),
                (Layer::Lstm { hidden_dim, .. }, _) => Shape::Flat(hidden_dim),
                (Layer::Dropout { .. }, s) => s,
            };
            shapes.push(next);
        }
        shapes
    }

    fn validate(&self) -> Result<()> {
        let err = |msg: String| Err(Error::Spec(msg));
        if self.layers.is_empty() {
            return err("model has no layers".into());
        }
        let mut shape = self.input_shape();
        if shape.len() == 0 {
            return err("input dimension is zero".into());
        }
        let last = self.layers.len() - 1;
        for (idx, layer) in self.layers.iter().enumerate() {
            shape = match (*layer, shape) {
                (
                    Layer::Dense {
                        in_dim,
                        out_dim,
                        activation,
                    },
                    Shape::Flat(d),
                ) => {
                    if in_dim != d {
                        return err(format!("layer {idx}: dense expects {in_dim} inputs, gets {d}"));
                    }
                    if out_dim == 0 {
                        return err(format!("layer {idx}: dense layer has zero units"));
                    }
                    if activation == Activation::Softmax {
                        if idx != last {
                            return err(format!("layer {idx}: softmax only allowed on the final layer"));
                        }
                        if out_dim < 2 {
                            return err(format!("layer {idx}: softmax needs at least two outputs"));
                        }
                    }
                    Shape::Flat(out_dim)
                }
                (Layer::Dense { .. }, Shape::Seq(..)) => {
                    return err(format!("layer {idx}: dense layer receives a sequence"));
                }
                (
                    Layer::Lstm {
                        in_dim,
                        hidden_dim,
                        ret,
                    },
                    Shape::Seq(t, d),
                ) => {
                    if in_dim != d {
                        return err(format!("layer {idx}: lstm expects {in_dim} features, gets {d}"));
                    }
                    if hidden_dim == 0 {
                        return err(format!("layer {idx}: lstm layer has zero units"));
                    }
                    match ret {
                        LstmReturn::Sequence => Shape::Seq(t, hidden_dim),
                        LstmReturn::LastState => Shape::Flat(hidden_dim),
                    }
                }
                (Layer::Lstm { .. }, Shape::Flat(_)) => {
                    return err(format!("layer {idx}: lstm layer receives a flat vector"));
                }
                (Layer::Dropout { rate }, s) => {
                    if !(0.0..1.0).contains(&rate) {
                        return err(format!("layer {idx}: dropout rate {rate} outside [0, 1)"));
                    }
                    if idx == last {
                        return err(format!("layer {idx}: dropout cannot be the final layer"));
                    }
                    s
                }
            };
        }
        if let Shape::Seq(..) = shape {
            return err("model output is a sequence; final lstm must return its last state".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(i: usize, o: usize, a: Activation) -> Layer {
        Layer::Dense {
            in_dim: i,
            out_dim: o,
            activation: a,
        }
    }

    #[test]
    fn medical_parameter_count() {
        let spec = ModelSpec::new(
            InputKind::Flat { dim: 5 },
            vec![
                dense(5, 40, Activation::Relu),
                dense(40, 40, Activation::Relu),
                dense(40, 20, Activation::Relu),
                dense(20, 1, Activation::Linear),
            ],
        )
        .unwrap();
        assert_eq!(spec.param_count(), 240 + 1640 + 820 + 21);
        assert_eq!(spec.param_count(), 2721);
        assert_eq!(spec.head(), Head::Regression { outputs: 1 });
    }

    #[test]
    fn mobile_parameter_count() {
        let spec = ModelSpec::new(
            InputKind::Flat { dim: 9 },
            vec![
                dense(9, 28, Activation::Relu),
                dense(28, 14, Activation::Relu),
                dense(14, 1, Activation::Linear),
            ],
        )
        .unwrap();
        assert_eq!(spec.param_count(), 701);
    }

    #[test]
    fn lstm_parameter_count() {
        let l = Layer::Lstm {
            in_dim: 4,
            hidden_dim: 3,
            ret: LstmReturn::LastState,
        };
        assert_eq!(l.param_count(), 96);
    }

    #[test]
    fn fine_dust_stack_validates() {
        let spec = ModelSpec::new(
            InputKind::Sequence {
                steps: 48,
                features: 21,
            },
            vec![
                Layer::Lstm {
                    in_dim: 21,
                    hidden_dim: 10,
                    ret: LstmReturn::Sequence,
                },
                Layer::Dropout { rate: 0.25 },
                Layer::Lstm {
                    in_dim: 10,
                    hidden_dim: 5,
                    ret: LstmReturn::LastState,
                },
                Layer::Dropout { rate: 0.35 },
                dense(5, 3, Activation::Softmax),
            ],
        )
        .unwrap();
        assert_eq!(spec.head(), Head::Classification { classes: 3 });
        assert_eq!(spec.param_count(), 40 * 32 + 20 * 16 + 18);
    }

    #[test]
    fn rejects_inconsistent_dims() {
        let r = ModelSpec::new(
            InputKind::Flat { dim: 5 },
            vec![dense(4, 2, Activation::Linear)],
        );
        assert!(matches!(r, Err(Error::Spec(_))));
    }

    #[test]
    fn rejects_inner_softmax_and_trailing_dropout() {
        let inner = ModelSpec::new(
            InputKind::Flat { dim: 2 },
            vec![dense(2, 3, Activation::Softmax), dense(3, 3, Activation::Softmax)],
        );
        assert!(inner.is_err());
        let trailing = ModelSpec::new(
            InputKind::Flat { dim: 2 },
            vec![dense(2, 3, Activation::Linear), Layer::Dropout { rate: 0.1 }],
        );
        assert!(trailing.is_err());
        let bad_rate = ModelSpec::new(
            InputKind::Flat { dim: 2 },
            vec![Layer::Dropout { rate: 1.0 }, dense(2, 1, Activation::Linear)],
        );
        assert!(bad_rate.is_err());
    }

    #[test]
    fn rejects_sequence_output() {
        let r = ModelSpec::new(
            InputKind::Sequence {
                steps: 3,
                features: 2,
            },
            vec![Layer::Lstm {
                in_dim: 2,
                hidden_dim: 2,
                ret: LstmReturn::Sequence,
            }],
        );
        assert!(r.is_err());
    }
}
