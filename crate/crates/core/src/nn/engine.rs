use rand::Rng;

use super::batch::{Batch, Targets};
use super::params::ParamVector;
use super::spec::{Activation, Head, Layer, LstmReturn, ModelSpec, Shape};
use crate::{par, rng, Error, Result};

/// Samples per accumulation chunk. Chunk partial sums are reduced in chunk
/// order, so the result is identical for any thread count.
const CHUNK: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Dropout active, masks drawn from streams derived from `seed`.
    Train { seed: u64 },
    Infer,
}

/// Row-major `rows x cols` model output.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl OutputMatrix {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// First column, the prediction of a single-output regression head.
    pub fn column0(&self) -> Vec<f64> {
        (0..self.rows).map(|i| self.data[i * self.cols]).collect()
    }

    /// Index of the largest entry per row; ties go to the lower index.
    pub fn argmax(&self) -> Vec<usize> {
        (0..self.rows)
            .map(|i| {
                let row = self.row(i);
                let mut best = 0;
                for (j, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = j;
                    }
                }
                best
            })
            .collect()
    }
}

enum Cache {
    Dense {
        input: Vec<f64>,
        pre: Vec<f64>,
    },
    Lstm {
        input: Vec<f64>,
        steps: usize,
        /// activated gates, `steps x 4h`
        gates: Vec<f64>,
        cells: Vec<f64>,
        tanh_c: Vec<f64>,
        hs: Vec<f64>,
    },
    Dropout {
        mask: Option<Vec<f64>>,
    },
}

struct Trace {
    caches: Vec<Cache>,
    out: Vec<f64>,
    /// Pre-activation of the final layer, used for stable log-softmax.
    logits: Vec<f64>,
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_finite(layer: usize, values: &[f64]) -> Result<()> {
    if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numeric {
            layer,
            detail: format!("value {} at position {pos}", values[pos]),
        });
    }
    Ok(())
}

fn forward_sample(
    spec: &ModelSpec,
    params: &ParamVector,
    shapes: &[Shape],
    x: &[f64],
    mode: Mode,
    sample: usize,
) -> Result<Trace> {
    let mut caches = Vec::with_capacity(spec.layers().len());
    let mut cur = x.to_vec();
    let mut logits = Vec::new();
    for (idx, layer) in spec.layers().iter().enumerate() {
        let p = params.layer(idx);
        match *layer {
            Layer::Dense {
                in_dim,
                out_dim,
                activation,
            } => {
                let (w, b) = p.split_at(in_dim * out_dim);
                let pre: Vec<f64> = (0..out_dim)
                    .map(|j| b[j] + dot(&w[j * in_dim..(j + 1) * in_dim], &cur))
                    .collect();
                let out = match activation {
                    Activation::Relu => pre.iter().map(|&v| v.max(0.0)).collect(),
                    Activation::Linear => pre.clone(),
                    Activation::Softmax => {
                        let m = pre.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        let e: Vec<f64> = pre.iter().map(|&v| (v - m).exp()).collect();
                        let s: f64 = e.iter().sum();
                        e.into_iter().map(|v| v / s).collect()
                    }
                };
                check_finite(idx, &out)?;
                check_finite(idx, &pre)?;
                if idx + 1 == spec.layers().len() {
                    logits = pre.clone();
                }
                let input = std::mem::replace(&mut cur, out);
                caches.push(Cache::Dense { input, pre });
            }
            Layer::Lstm {
                in_dim,
                hidden_dim: h,
                ret,
            } => {
                let steps = match shapes[idx] {
                    Shape::Seq(t, _) => t,
                    Shape::Flat(_) => unreachable!("validated"),
                };
                let h4 = 4 * h;
                let (w, rest) = p.split_at(h4 * in_dim);
                let (u, b) = rest.split_at(h4 * h);
                let mut gates = vec![0.0; steps * h4];
                let mut cells = vec![0.0; steps * h];
                let mut tanh_c = vec![0.0; steps * h];
                let mut hs = vec![0.0; steps * h];
                let zero = vec![0.0; h];
                for t in 0..steps {
                    let xt = &cur[t * in_dim..(t + 1) * in_dim];
                    let (h_prev, c_prev) = if t == 0 {
                        (&zero[..], &zero[..])
                    } else {
                        (&hs[(t - 1) * h..t * h], &cells[(t - 1) * h..t * h])
                    };
                    let g = &mut gates[t * h4..(t + 1) * h4];
                    for r in 0..h4 {
                        let z = b[r]
                            + dot(&w[r * in_dim..(r + 1) * in_dim], xt)
                            + dot(&u[r * h..(r + 1) * h], h_prev);
                        g[r] = if (2 * h..3 * h).contains(&r) {
                            z.tanh()
                        } else {
                            sigmoid(z)
                        };
                    }
                    let mut c_new = vec![0.0; h];
                    for j in 0..h {
                        c_new[j] = g[h + j] * c_prev[j] + g[j] * g[2 * h + j];
                    }
                    for j in 0..h {
                        let tc = c_new[j].tanh();
                        tanh_c[t * h + j] = tc;
                        hs[t * h + j] = g[3 * h + j] * tc;
                        cells[t * h + j] = c_new[j];
                    }
                }
                check_finite(idx, &hs)?;
                check_finite(idx, &cells)?;
                let out = match ret {
                    LstmReturn::Sequence => hs.clone(),
                    LstmReturn::LastState => hs[(steps - 1) * h..].to_vec(),
                };
                let input = std::mem::replace(&mut cur, out);
                caches.push(Cache::Lstm {
                    input,
                    steps,
                    gates,
                    cells,
                    tanh_c,
                    hs,
                });
            }
            Layer::Dropout { rate } => {
                let mask = match mode {
                    Mode::Train { seed } if rate > 0.0 => {
                        let mut r = rng::stream(seed, &[sample as u64, idx as u64]);
                        let keep = 1.0 / (1.0 - rate);
                        let mask: Vec<f64> = (0..cur.len())
                            .map(|_| if r.random::<f64>() < rate { 0.0 } else { keep })
                            .collect();
                        for (v, m) in cur.iter_mut().zip(&mask) {
                            *v *= m;
                        }
                        Some(mask)
                    }
                    _ => None,
                };
                caches.push(Cache::Dropout { mask });
            }
        }
    }
    if logits.is_empty() {
        logits = cur.clone();
    }
    Ok(Trace {
        caches,
        out: cur,
        logits,
    })
}

/// Per-sample loss and, if requested, the gradient of that loss with respect
/// to the final layer (pre-activation for softmax, output otherwise).
fn sample_loss(head: Head, trace: &Trace, targets: &Targets, i: usize, want_grad: bool) -> (f64, Vec<f64>) {
    match (head, targets) {
        (Head::Regression { .. }, Targets::Regression(y)) => {
            let diff = trace.out[0] - y[i];
            let g = if want_grad { vec![2.0 * diff] } else { Vec::new() };
            (diff * diff, g)
        }
        (Head::Classification { .. }, Targets::Classes { labels, .. }) => {
            let z = &trace.logits;
            let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + z.iter().map(|&v| (v - m).exp()).sum::<f64>().ln();
            let label = labels[i];
            let g = if want_grad {
                trace
                    .out
                    .iter()
                    .enumerate()
                    .map(|(j, &p)| if j == label { p - 1.0 } else { p })
                    .collect()
            } else {
                Vec::new()
            };
            (lse - z[label], g)
        }
        _ => unreachable!("head and targets checked by validate"),
    }
}

fn backward_sample(spec: &ModelSpec, params: &ParamVector, trace: &Trace, mut g: Vec<f64>, grad: &mut ParamVector) {
    let n_layers = spec.layers().len();
    for idx in (0..n_layers).rev() {
        let layer = &spec.layers()[idx];
        let need_input_grad = idx > 0;
        let slot = params.layout()[idx];
        let p = &params.values()[slot.offset..slot.offset + slot.len];
        let gp = &mut grad.values_mut()[slot.offset..slot.offset + slot.len];
        match (*layer, &trace.caches[idx]) {
            (
                Layer::Dense {
                    in_dim,
                    out_dim,
                    activation,
                },
                Cache::Dense { input, pre },
            ) => {
                match activation {
                    Activation::Relu => {
                        for (gj, &z) in g.iter_mut().zip(pre) {
                            if z <= 0.0 {
                                *gj = 0.0;
                            }
                        }
                    }
                    // softmax gradient arrives already taken w.r.t. the logits
                    Activation::Linear | Activation::Softmax => {}
                }
                let (w, _) = p.split_at(in_dim * out_dim);
                let (gw, gb) = gp.split_at_mut(in_dim * out_dim);
                let mut g_in = if need_input_grad { vec![0.0; in_dim] } else { Vec::new() };
                for j in 0..out_dim {
                    let gj = g[j];
                    if gj == 0.0 {
                        continue;
                    }
                    gb[j] += gj;
                    let row = &mut gw[j * in_dim..(j + 1) * in_dim];
                    for (gwk, &xk) in row.iter_mut().zip(input) {
                        *gwk += gj * xk;
                    }
                    if need_input_grad {
                        let wrow = &w[j * in_dim..(j + 1) * in_dim];
                        for (gi, &wk) in g_in.iter_mut().zip(wrow) {
                            *gi += gj * wk;
                        }
                    }
                }
                g = g_in;
            }
            (
                Layer::Lstm {
                    in_dim,
                    hidden_dim: h,
                    ret,
                },
                Cache::Lstm {
                    input,
                    steps,
                    gates,
                    cells,
                    tanh_c,
                    hs,
                },
            ) => {
                let steps = *steps;
                let h4 = 4 * h;
                let (w, rest) = p.split_at(h4 * in_dim);
                let (u, _) = rest.split_at(h4 * h);
                let (gw, rest) = gp.split_at_mut(h4 * in_dim);
                let (gu, gb) = rest.split_at_mut(h4 * h);
                let mut dh_seq = vec![0.0; steps * h];
                match ret {
                    LstmReturn::Sequence => dh_seq.copy_from_slice(&g),
                    LstmReturn::LastState => dh_seq[(steps - 1) * h..].copy_from_slice(&g),
                }
                let mut dx = if need_input_grad { vec![0.0; steps * in_dim] } else { Vec::new() };
                let mut dh_next = vec![0.0; h];
                let mut dc_next = vec![0.0; h];
                let mut dz = vec![0.0; h4];
                let zero = vec![0.0; h];
                for t in (0..steps).rev() {
                    let gt = &gates[t * h4..(t + 1) * h4];
                    let c_prev = if t == 0 { &zero[..] } else { &cells[(t - 1) * h..t * h] };
                    let h_prev = if t == 0 { &zero[..] } else { &hs[(t - 1) * h..t * h] };
                    for j in 0..h {
                        let dh = dh_seq[t * h + j] + dh_next[j];
                        let (i, f, gg, o) = (gt[j], gt[h + j], gt[2 * h + j], gt[3 * h + j]);
                        let tc = tanh_c[t * h + j];
                        let d_o = dh * tc;
                        let dc = dc_next[j] + dh * o * (1.0 - tc * tc);
                        dc_next[j] = dc * f;
                        dz[j] = dc * gg * i * (1.0 - i);
                        dz[h + j] = dc * c_prev[j] * f * (1.0 - f);
                        dz[2 * h + j] = dc * i * (1.0 - gg * gg);
                        dz[3 * h + j] = d_o * o * (1.0 - o);
                    }
                    let xt = &input[t * in_dim..(t + 1) * in_dim];
                    dh_next.iter_mut().for_each(|v| *v = 0.0);
                    for r in 0..h4 {
                        let d = dz[r];
                        if d == 0.0 {
                            continue;
                        }
                        gb[r] += d;
                        for (gwk, &xk) in gw[r * in_dim..(r + 1) * in_dim].iter_mut().zip(xt) {
                            *gwk += d * xk;
                        }
                        for (guk, &hk) in gu[r * h..(r + 1) * h].iter_mut().zip(h_prev) {
                            *guk += d * hk;
                        }
                        for (dn, &uk) in dh_next.iter_mut().zip(&u[r * h..(r + 1) * h]) {
                            *dn += d * uk;
                        }
                        if need_input_grad {
                            let dxt = &mut dx[t * in_dim..(t + 1) * in_dim];
                            for (dk, &wk) in dxt.iter_mut().zip(&w[r * in_dim..(r + 1) * in_dim]) {
                                *dk += d * wk;
                            }
                        }
                    }
                }
                g = dx;
            }
            (Layer::Dropout { .. }, Cache::Dropout { mask }) => {
                if let Some(mask) = mask {
                    for (gj, m) in g.iter_mut().zip(mask) {
                        *gj *= m;
                    }
                }
            }
            _ => unreachable!("cache kind follows layer kind"),
        }
    }
}

fn validate(spec: &ModelSpec, params: &ParamVector, batch: &Batch) -> Result<Head> {
    if params.len() != spec.param_count() {
        return Err(Error::LengthMismatch {
            expected: spec.param_count(),
            got: params.len(),
        });
    }
    if batch.input_kind() != spec.input() {
        return Err(Error::Shape(format!(
            "batch input {:?} does not match model input {:?}",
            batch.input_kind(),
            spec.input()
        )));
    }
    let head = spec.head();
    match (head, batch.targets()) {
        (Head::Regression { outputs: 1 }, Targets::Regression(_)) => {}
        (Head::Classification { classes }, Targets::Classes { n_classes, .. }) if classes == *n_classes => {}
        (h, _) => {
            return Err(Error::Shape(format!("targets do not match model head {h:?}")));
        }
    }
    Ok(head)
}

fn chunks(n: usize) -> usize {
    n.div_ceil(CHUNK)
}

pub fn forward(spec: &ModelSpec, params: &ParamVector, batch: &Batch, mode: Mode) -> Result<OutputMatrix> {
    if params.len() != spec.param_count() {
        return Err(Error::LengthMismatch {
            expected: spec.param_count(),
            got: params.len(),
        });
    }
    if batch.input_kind() != spec.input() {
        return Err(Error::Shape(format!(
            "batch input {:?} does not match model input {:?}",
            batch.input_kind(),
            spec.input()
        )));
    }
    let shapes = spec.shapes();
    let n = batch.len();
    let cols = spec.output_dim();
    let parts = par::try_map_indexed(chunks(n), |c| {
        let mut out = Vec::with_capacity(CHUNK * cols);
        for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
            let trace = forward_sample(spec, params, &shapes, batch.sample(i), mode, i)?;
            out.extend_from_slice(&trace.out);
        }
        Ok(out)
    })?;
    Ok(OutputMatrix {
        rows: n,
        cols,
        data: parts.concat(),
    })
}

/// Mean squared error for regression heads, mean categorical cross-entropy
/// for softmax heads.
pub fn loss(spec: &ModelSpec, params: &ParamVector, batch: &Batch, mode: Mode) -> Result<f64> {
    let head = validate(spec, params, batch)?;
    let shapes = spec.shapes();
    let n = batch.len();
    let parts = par::try_map_indexed(chunks(n), |c| {
        let mut acc = 0.0;
        for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
            let trace = forward_sample(spec, params, &shapes, batch.sample(i), mode, i)?;
            acc += sample_loss(head, &trace, batch.targets(), i, false).0;
        }
        Ok(acc)
    })?;
    Ok(parts.iter().sum::<f64>() / n as f64)
}

pub fn loss_and_gradient(
    spec: &ModelSpec,
    params: &ParamVector,
    batch: &Batch,
    mode: Mode,
) -> Result<(f64, ParamVector)> {
    let head = validate(spec, params, batch)?;
    let shapes = spec.shapes();
    let n = batch.len();
    let parts = par::try_map_indexed(chunks(n), |c| {
        let mut grad = params.zeros_like();
        let mut acc = 0.0;
        for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
            let trace = forward_sample(spec, params, &shapes, batch.sample(i), mode, i)?;
            let (l, g) = sample_loss(head, &trace, batch.targets(), i, true);
            acc += l;
            backward_sample(spec, params, &trace, g, &mut grad);
        }
        Ok((acc, grad))
    })?;
    let mut total = params.zeros_like();
    let mut loss = 0.0;
    for (l, g) in &parts {
        loss += l;
        for (t, v) in total.values_mut().iter_mut().zip(g.values()) {
            *t += v;
        }
    }
    let scale = 1.0 / n as f64;
    total.values_mut().iter_mut().for_each(|v| *v *= scale);
    Ok((loss * scale, total))
}

pub fn gradient(spec: &ModelSpec, params: &ParamVector, batch: &Batch, mode: Mode) -> Result<ParamVector> {
    loss_and_gradient(spec, params, batch, mode).map(|(_, g)| g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{build_model, InputKind, Inputs};

    fn dense(i: usize, o: usize, a: Activation) -> Layer {
        Layer::Dense {
            in_dim: i,
            out_dim: o,
            activation: a,
        }
    }

    fn reg_spec() -> ModelSpec {
        ModelSpec::new(
            InputKind::Flat { dim: 3 },
            vec![dense(3, 4, Activation::Relu), dense(4, 1, Activation::Linear)],
        )
        .unwrap()
    }

    #[test]
    fn zero_params_give_zero_output() {
        let spec = reg_spec();
        let p = ParamVector::zeros(&spec);
        let b = Batch::flat(3, vec![1., -2., 3., 4., 5., 6.], Targets::Regression(vec![0., 0.])).unwrap();
        let out = forward(&spec, &p, &b, Mode::Infer).unwrap();
        assert_eq!(out.data, vec![0.0, 0.0]);
    }

    #[test]
    fn zero_softmax_is_uniform_and_ce_is_ln3() {
        let spec = ModelSpec::new(
            InputKind::Flat { dim: 2 },
            vec![dense(2, 5, Activation::Relu), dense(5, 3, Activation::Softmax)],
        )
        .unwrap();
        let mut p = build_model(&spec, 3);
        p.layer_mut(1).iter_mut().for_each(|v| *v = 0.0);
        let t = Targets::Classes {
            n_classes: 3,
            labels: vec![0, 1, 2, 1],
        };
        let b = Batch::flat(2, vec![0.1, 0.2, 1.0, -1.0, 3.0, -0.5, 0.0, 0.0], t).unwrap();
        let out = forward(&spec, &p, &b, Mode::Infer).unwrap();
        for i in 0..4 {
            for &v in out.row(i) {
                assert!((v - 1.0 / 3.0).abs() < 1e-15);
            }
        }
        let l = loss(&spec, &p, &b, Mode::Infer).unwrap();
        assert!((l - 3f64.ln()).abs() < 1e-12);
        assert!((l - 1.0986).abs() < 1e-4);
    }

    #[test]
    fn mse_matches_definition() {
        // one linear unit with weight 1 on a single feature reproduces the input
        let spec = ModelSpec::new(InputKind::Flat { dim: 1 }, vec![dense(1, 1, Activation::Linear)]).unwrap();
        let p = ParamVector::from_values(&spec, vec![1.0, 0.0]).unwrap();
        let b = Batch::flat(1, vec![1., 2., 2.], Targets::Regression(vec![1., 2., 3.])).unwrap();
        let l = loss(&spec, &p, &b, Mode::Infer).unwrap();
        assert!((l - 1.0 / 3.0).abs() < 1e-15);
        let exact = Batch::flat(1, vec![1., 2., 3.], Targets::Regression(vec![1., 2., 3.])).unwrap();
        assert_eq!(loss(&spec, &p, &exact, Mode::Infer).unwrap(), 0.0);
    }

    #[test]
    fn zero_target_zero_param_gradient_vanishes() {
        let spec = reg_spec();
        let p = ParamVector::zeros(&spec);
        let b = Batch::flat(3, vec![1., 2., 3.], Targets::Regression(vec![0.])).unwrap();
        let g = gradient(&spec, &p, &b, Mode::Infer).unwrap();
        assert!(g.values().iter().all(|&v| v == 0.0));
        assert_eq!(g.len(), p.len());
    }

    #[test]
    fn target_scale_of_one_is_identity() {
        let spec = reg_spec();
        let p = build_model(&spec, 9);
        let y = vec![0.3, -1.2];
        let b1 = Batch::flat(3, vec![1., 2., 3., -1., 0.5, 2.], Targets::Regression(y.clone())).unwrap();
        let b2 = Batch::flat(
            3,
            vec![1., 2., 3., -1., 0.5, 2.],
            Targets::Regression(y.iter().map(|v| v * 1.0).collect()),
        )
        .unwrap();
        assert_eq!(
            gradient(&spec, &p, &b1, Mode::Infer).unwrap(),
            gradient(&spec, &p, &b2, Mode::Infer).unwrap()
        );
    }

    fn dropout_spec(rate: f64) -> ModelSpec {
        ModelSpec::new(
            InputKind::Flat { dim: 3 },
            vec![
                dense(3, 6, Activation::Relu),
                Layer::Dropout { rate },
                dense(6, 1, Activation::Linear),
            ],
        )
        .unwrap()
    }

    fn some_batch() -> Batch {
        let data: Vec<f64> = (0..60).map(|i| ((i * 37) % 11) as f64 / 7.0 - 0.6).collect();
        Batch::flat(3, data, Targets::Regression((0..20).map(|i| i as f64 / 20.0).collect())).unwrap()
    }

    #[test]
    fn dropout_rate_zero_is_identity() {
        let spec = dropout_spec(0.0);
        let p = build_model(&spec, 2);
        let b = some_batch();
        let train = forward(&spec, &p, &b, Mode::Train { seed: 5 }).unwrap();
        let infer = forward(&spec, &p, &b, Mode::Infer).unwrap();
        assert_eq!(train, infer);
    }

    #[test]
    fn dropout_is_seeded_and_inactive_at_inference() {
        let spec = dropout_spec(0.5);
        let p = build_model(&spec, 2);
        let b = some_batch();
        let a = forward(&spec, &p, &b, Mode::Train { seed: 5 }).unwrap();
        let a2 = forward(&spec, &p, &b, Mode::Train { seed: 5 }).unwrap();
        let c = forward(&spec, &p, &b, Mode::Train { seed: 6 }).unwrap();
        assert_eq!(a, a2);
        assert_ne!(a, c);
        let inf = forward(&spec, &p, &b, Mode::Infer).unwrap();
        let no_drop = forward(&dropout_spec(0.0), &p, &b, Mode::Infer).unwrap();
        assert_eq!(inf, no_drop);
    }

    #[test]
    fn non_finite_activation_names_layer() {
        let spec = reg_spec();
        let mut p = build_model(&spec, 1);
        p.values_mut()[0] = f64::INFINITY;
        let b = Batch::flat(3, vec![1., 1., 1.], Targets::Regression(vec![0.])).unwrap();
        match loss(&spec, &p, &b, Mode::Infer) {
            Err(Error::Numeric { layer, .. }) => assert_eq!(layer, 0),
            other => panic!("expected numeric error, got {other:?}"),
        }
    }

    #[test]
    fn shape_and_head_mismatches_error() {
        let spec = reg_spec();
        let p = build_model(&spec, 1);
        let wrong_dim = Batch::flat(2, vec![1., 1.], Targets::Regression(vec![0.])).unwrap();
        assert!(matches!(forward(&spec, &p, &wrong_dim, Mode::Infer), Err(Error::Shape(_))));
        let wrong_head = Batch::flat(
            3,
            vec![1., 1., 1.],
            Targets::Classes {
                n_classes: 3,
                labels: vec![0],
            },
        )
        .unwrap();
        assert!(matches!(loss(&spec, &p, &wrong_head, Mode::Infer), Err(Error::Shape(_))));
        let seq = Batch::new(
            Inputs::Sequence {
                steps: 1,
                features: 3,
                data: vec![1., 1., 1.],
            },
            Targets::Regression(vec![0.]),
        )
        .unwrap();
        assert!(forward(&spec, &p, &seq, Mode::Infer).is_err());
    }
}
