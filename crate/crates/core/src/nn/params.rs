use rand::Rng;
use serde::{Deserialize, Serialize};

use super::spec::{Layer, ModelSpec};
use crate::{rng, Error, Result};

/// Location of one layer's parameters inside the flat vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slot {
    pub offset: usize,
    pub len: usize,
}

/// Flat, ordered vector of every trainable weight of a model. This is the
/// only thing exchanged between the server and its clients.
///
/// Dense layers store `W` (out x in, row-major) followed by `b`. LSTM layers
/// store the input kernel (4h x d), the recurrent kernel (4h x h) and the
/// bias (4h), with gate blocks ordered input, forget, cell, output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    values: Vec<f64>,
    layout: Vec<Slot>,
}

fn layout_for(spec: &ModelSpec) -> Vec<Slot> {
    let mut offset = 0;
    spec.layers()
        .iter()
        .map(|l| {
            let slot = Slot {
                offset,
                len: l.param_count(),
            };
            offset += slot.len;
            slot
        })
        .collect()
}

impl ParamVector {
    pub fn zeros(spec: &ModelSpec) -> Self {
        ParamVector {
            values: vec![0.0; spec.param_count()],
            layout: layout_for(spec),
        }
    }

    pub fn from_values(spec: &ModelSpec, values: Vec<f64>) -> Result<Self> {
        let expected = spec.param_count();
        if values.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                got: values.len(),
            });
        }
        Ok(ParamVector {
            values,
            layout: layout_for(spec),
        })
    }

    /// Reassembles a vector from per-layer views, the inverse of
    /// [`ParamVector::layer`].
    pub fn from_layers(spec: &ModelSpec, views: &[&[f64]]) -> Result<Self> {
        let layout = layout_for(spec);
        if views.len() != layout.len() {
            return Err(Error::LengthMismatch {
                expected: layout.len(),
                got: views.len(),
            });
        }
        let mut values = Vec::with_capacity(spec.param_count());
        for (slot, view) in layout.iter().zip(views) {
            if view.len() != slot.len {
                return Err(Error::LengthMismatch {
                    expected: slot.len,
                    got: view.len(),
                });
            }
            values.extend_from_slice(view);
        }
        Ok(ParamVector { values, layout })
    }

    pub fn zeros_like(&self) -> Self {
        ParamVector {
            values: vec![0.0; self.values.len()],
            layout: self.layout.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn layout(&self) -> &[Slot] {
        &self.layout
    }

    pub fn layer(&self, idx: usize) -> &[f64] {
        let s = self.layout[idx];
        &self.values[s.offset..s.offset + s.len]
    }

    pub fn layer_mut(&mut self, idx: usize) -> &mut [f64] {
        let s = self.layout[idx];
        &mut self.values[s.offset..s.offset + s.len]
    }

    pub(crate) fn check_same_len(&self, other: &ParamVector) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                got: other.len(),
            });
        }
        Ok(())
    }

    /// `self - other`, element-wise.
    pub fn sub(&self, other: &ParamVector) -> Result<ParamVector> {
        self.check_same_len(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a - b)
            .collect();
        Ok(ParamVector {
            values,
            layout: self.layout.clone(),
        })
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, scale: f64, other: &ParamVector) -> Result<()> {
        self.check_same_len(other)?;
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += scale * b;
        }
        Ok(())
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &ParamVector) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Deterministic Glorot-uniform initialization. Biases start at zero except
/// LSTM forget-gate biases, which start at one.
pub fn build_model(spec: &ModelSpec, seed: u64) -> ParamVector {
    let mut params = ParamVector::zeros(spec);
    for (idx, layer) in spec.layers().iter().enumerate() {
        let mut rng = rng::stream(seed, &[0x1417, idx as u64]);
        let view = params.layer_mut(idx);
        match *layer {
            Layer::Dense { in_dim, out_dim, .. } => {
                let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
                for w in &mut view[..in_dim * out_dim] {
                    *w = rng.random_range(-limit..limit);
                }
            }
            Layer::Lstm {
                in_dim, hidden_dim, ..
            } => {
                let h4 = 4 * hidden_dim;
                let kernel = h4 * in_dim;
                let recurrent = h4 * hidden_dim;
                let k_limit = (6.0 / (in_dim + h4) as f64).sqrt();
                let r_limit = (6.0 / (hidden_dim + h4) as f64).sqrt();
                for w in &mut view[..kernel] {
                    *w = rng.random_range(-k_limit..k_limit);
                }
                for w in &mut view[kernel..kernel + recurrent] {
                    *w = rng.random_range(-r_limit..r_limit);
                }
                let bias = &mut view[kernel + recurrent..];
                for b in &mut bias[hidden_dim..2 * hidden_dim] {
                    *b = 1.0;
                }
            }
            Layer::Dropout { .. } => {}
        }
    }
    params
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, InputKind, LstmReturn};
    use proptest::prelude::*;

    fn medical() -> ModelSpec {
        let d = |i, o, a| Layer::Dense {
            in_dim: i,
            out_dim: o,
            activation: a,
        };
        ModelSpec::new(
            InputKind::Flat { dim: 5 },
            vec![
                d(5, 40, Activation::Relu),
                d(40, 40, Activation::Relu),
                d(40, 20, Activation::Relu),
                d(20, 1, Activation::Linear),
            ],
        )
        .unwrap()
    }

    #[test]
    fn build_is_deterministic_with_zero_biases() {
        let spec = medical();
        let a = build_model(&spec, 11);
        let b = build_model(&spec, 11);
        let c = build_model(&spec, 12);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.len(), 2721);
        for (idx, layer) in spec.layers().iter().enumerate() {
            if let Layer::Dense { in_dim, out_dim, .. } = *layer {
                assert!(a.layer(idx)[in_dim * out_dim..].iter().all(|&b| b == 0.0));
            }
        }
    }

    #[test]
    fn lstm_forget_bias_is_one() {
        let spec = ModelSpec::new(
            InputKind::Sequence {
                steps: 5,
                features: 4,
            },
            vec![
                Layer::Lstm {
                    in_dim: 4,
                    hidden_dim: 3,
                    ret: LstmReturn::LastState,
                },
                Layer::Dense {
                    in_dim: 3,
                    out_dim: 1,
                    activation: Activation::Linear,
                },
            ],
        )
        .unwrap();
        let p = build_model(&spec, 1);
        let bias = &p.layer(0)[12 * 4 + 12 * 3..];
        assert_eq!(bias, &[0., 0., 0., 1., 1., 1., 0., 0., 0., 0., 0., 0.]);
    }

    #[test]
    fn length_mismatch_is_reported() {
        let spec = medical();
        assert!(matches!(
            ParamVector::from_values(&spec, vec![0.0; 3]),
            Err(Error::LengthMismatch { expected: 2721, got: 3 })
        ));
    }

    proptest! {
        #[test]
        fn layer_views_round_trip(seed in any::<u64>()) {
            let spec = medical();
            let p = build_model(&spec, seed);
            let views: Vec<&[f64]> = (0..spec.layers().len()).map(|i| p.layer(i)).collect();
            let q = ParamVector::from_layers(&spec, &views).unwrap();
            prop_assert_eq!(p, q);
        }
    }
}
