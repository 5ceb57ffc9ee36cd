//! Round-based cross-silo federated training.
//!
//! Clients only ever hand parameter deltas back to the server: the
//! orchestration below never passes one client's batch to another client or
//! to the aggregation step.

use serde::{Deserialize, Serialize};

use crate::data::{split, LabeledTable};
use crate::eval::r_squared;
use crate::nn::{forward, loss, Batch, ModelSpec, Mode, ParamVector, Targets};
use crate::optim::{LrSchedule, OptimizerConfig, OptimizerKind, OptimizerState};
use crate::train::{run_epochs, BatchSize};
use crate::{par, rng, Error, Result};

/// One silo's private data.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientDataset {
    pub key: String,
    pub train: Batch,
    /// Held out for round-by-round monitoring only.
    pub eval: Option<Batch>,
}

impl ClientDataset {
    pub fn n_train(&self) -> usize {
        self.train.len()
    }
}

/// Splits `table` into one client per distinct value of `key_column`. Each
/// client holds back `eval_fraction` of its rows for monitoring. `encode`
/// turns a client's sub-table (key column already removed) into a batch.
pub fn partition_by_key<F>(
    table: &LabeledTable,
    key_column: &str,
    eval_fraction: f64,
    seed: u64,
    encode: F,
) -> Result<Vec<ClientDataset>>
where
    F: Fn(&LabeledTable) -> Result<Batch>,
{
    if !(0.0..1.0).contains(&eval_fraction) {
        return Err(Error::Config(format!("eval fraction {eval_fraction} must be in [0, 1)")));
    }
    table
        .partition_by(key_column)?
        .into_iter()
        .map(|(key, part)| {
            if part.is_empty() {
                return Err(Error::Config(format!("client {key} has no rows")));
            }
            let (train_rows, eval_rows) = if eval_fraction > 0.0 && part.len() >= 2 {
                let parts = split(
                    part.len(),
                    &[1.0 - eval_fraction, eval_fraction],
                    rng::derive(seed, &[rng::key_hash(&key)]),
                    true,
                )?;
                (parts[0].clone(), Some(parts[1].clone()))
            } else {
                ((0..part.len()).collect(), None)
            };
            let train = encode(&part.select_rows(&train_rows))?;
            let eval = eval_rows.map(|rows| encode(&part.select_rows(&rows))).transpose()?;
            Ok(ClientDataset { key, train, eval })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FederatedPlan {
    pub rounds: usize,
    pub local_epochs: usize,
    pub client_opt: OptimizerConfig,
    pub server_opt: OptimizerConfig,
    #[serde(default)]
    pub client_lr_schedule: Option<LrSchedule>,
    pub batch_size: BatchSize,
    #[serde(default)]
    pub seed: u64,
}

impl FederatedPlan {
    pub fn validate(&self) -> Result<()> {
        if self.local_epochs == 0 {
            return Err(Error::Config("local_epochs must be at least 1".into()));
        }
        if self.client_opt.kind == OptimizerKind::FedAdam {
            return Err(Error::Config("fedadam is a server optimizer".into()));
        }
        self.client_opt.validate()?;
        self.server_opt.validate()?;
        if let Some(s) = &self.client_lr_schedule {
            s.validate()?;
        }
        if let BatchSize::Fixed(0) = self.batch_size {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        Ok(())
    }

    /// Total number of local passes over each client's data.
    pub fn epoch_budget(&self) -> usize {
        self.rounds * self.local_epochs
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientUpdate {
    pub key: String,
    pub delta: ParamVector,
    pub weight: f64,
    pub train_loss: f64,
}

/// Local training of one client from the broadcast parameters. The client
/// optimizer starts fresh every round; epoch indices are global
/// (`round * E + e`) so the client schedule and shuffles run on across
/// rounds. Returns `params_after - global`.
pub fn local_update(
    spec: &ModelSpec,
    client: &ClientDataset,
    global: &ParamVector,
    plan: &FederatedPlan,
    round: usize,
) -> Result<ClientUpdate> {
    let mut params = global.clone();
    let mut opt = OptimizerState::new(plan.client_opt, params.len());
    let start = round * plan.local_epochs;
    let seed = client_seed(plan.seed, &client.key);
    let wrap = |e: Error| Error::Round {
        round,
        client: client.key.clone(),
        source: Box::new(e),
    };
    let record = run_epochs(
        spec,
        &mut params,
        &client.train,
        &mut opt,
        plan.client_lr_schedule.as_ref(),
        plan.batch_size,
        start..start + plan.local_epochs,
        seed,
    )
    .map_err(wrap)?;
    let train_loss = record.last().map_or(f64::NAN, |r| r.2);
    Ok(ClientUpdate {
        key: client.key.clone(),
        delta: params.sub(global).map_err(wrap)?,
        weight: client.n_train() as f64,
        train_loss,
    })
}

/// Seed of a client's local shuffles and dropout masks. Combined with the
/// global epoch index it yields a distinct stream per (round, client).
pub fn client_seed(plan_seed: u64, key: &str) -> u64 {
    rng::derive(plan_seed, &[rng::key_hash(key)])
}

/// Sample-weighted mean of the deltas, summed in ascending key order.
pub fn aggregate(updates: &[ClientUpdate]) -> Result<ParamVector> {
    let first = updates
        .first()
        .ok_or_else(|| Error::Data("nothing to aggregate".into()))?;
    let mut order: Vec<&ClientUpdate> = updates.iter().collect();
    order.sort_by(|a, b| a.key.cmp(&b.key));
    let mut acc = ParamVector::zeros_like(&first.delta);
    let mut total = 0.0;
    for u in order {
        if !(u.weight > 0.0) {
            return Err(Error::Data(format!("client {} has non-positive weight", u.key)));
        }
        acc.add_scaled(u.weight, &u.delta)?;
        total += u.weight;
    }
    for v in acc.values_mut() {
        *v /= total;
    }
    Ok(acc)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientRound {
    pub key: String,
    pub n_train: usize,
    pub train_loss: f64,
    pub eval_loss: Option<f64>,
    /// R² or accuracy of the new global model on the client's held-out rows.
    pub eval_metric: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub server_lr: f64,
    pub delta_norm: f64,
    pub clients: Vec<ClientRound>,
}

pub type RoundHistory = Vec<RoundRecord>;

fn eval_metric(spec: &ModelSpec, params: &ParamVector, batch: &Batch) -> Result<f64> {
    let out = forward(spec, params, batch, Mode::Infer)?;
    match batch.targets() {
        Targets::Regression(y) => {
            if y.len() < 2 {
                return Ok(f64::NAN);
            }
            r_squared(y, &out.column0()).or(Ok(f64::NAN))
        }
        Targets::Classes { labels, .. } => {
            let pred = out.argmax();
            Ok(pred.iter().zip(labels).filter(|(p, t)| p == t).count() as f64 / labels.len() as f64)
        }
    }
}

/// Federated training from `init` for `plan.rounds` rounds.
pub fn run_federated(
    spec: &ModelSpec,
    clients: &[ClientDataset],
    init: &ParamVector,
    plan: &FederatedPlan,
) -> Result<(ParamVector, RoundHistory)> {
    plan.validate()?;
    if clients.is_empty() {
        return Err(Error::Config("a federation needs at least one client".into()));
    }
    let mut keys: Vec<&str> = clients.iter().map(|c| c.key.as_str()).collect();
    keys.sort_unstable();
    if keys.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Config("client keys must be unique".into()));
    }
    let kind = spec.input();
    if let Some(c) = clients.iter().find(|c| c.train.input_kind() != kind) {
        return Err(Error::Shape(format!("client {} has inputs {:?}, model expects {kind:?}", c.key, c.train.input_kind())));
    }
    if init.len() != spec.param_count() {
        return Err(Error::LengthMismatch {
            expected: spec.param_count(),
            got: init.len(),
        });
    }

    let mut global = init.clone();
    let mut server = OptimizerState::new(plan.server_opt, global.len());
    let mut history = Vec::with_capacity(plan.rounds);
    for round in 0..plan.rounds {
        let updates = par::try_map_slice(clients, |c| local_update(spec, c, &global, plan, round))?;
        let delta = aggregate(&updates)?;
        let lr = plan.server_opt.lr;
        let direction: Vec<f64> = match plan.server_opt.kind {
            OptimizerKind::FedAdam => delta.values().to_vec(),
            OptimizerKind::Sgd | OptimizerKind::Adam => delta.values().iter().map(|d| -d).collect(),
        };
        server.apply(global.values_mut(), &direction, lr)?;
        if !global.is_finite() {
            return Err(Error::Data(format!("global model became non-finite after round {round}")));
        }
        let client_rounds = par::try_map_slice(clients, |c| {
            let update = updates.iter().find(|u| u.key == c.key).expect("one update per client");
            let (eval_loss, eval_metric) = match &c.eval {
                Some(b) if !b.is_empty() => (
                    Some(loss(spec, &global, b, Mode::Infer)?),
                    Some(eval_metric(spec, &global, b)?),
                ),
                _ => (None, None),
            };
            Ok(ClientRound {
                key: c.key.clone(),
                n_train: c.n_train(),
                train_loss: update.train_loss,
                eval_loss,
                eval_metric,
            })
        })?;
        history.push(RoundRecord {
            round,
            server_lr: lr,
            delta_norm: delta.norm(),
            clients: client_rounds,
        });
    }
    Ok((global, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Cell;
    use crate::nn::{build_model, Activation, InputKind, Layer};
    use crate::train::{train, TrainConfig};

    fn spec() -> ModelSpec {
        ModelSpec::new(
            InputKind::Flat { dim: 3 },
            vec![
                Layer::Dense {
                    in_dim: 3,
                    out_dim: 6,
                    activation: Activation::Relu,
                },
                Layer::Dense {
                    in_dim: 6,
                    out_dim: 1,
                    activation: Activation::Linear,
                },
            ],
        )
        .unwrap()
    }

    fn batch(n: usize, offset: usize) -> Batch {
        let x: Vec<f64> = (0..n * 3).map(|i| (((i + offset) * 37) % 101) as f64 / 101.0).collect();
        let y = x.chunks(3).map(|r| r[0] - 0.5 * r[1] * r[2] + 0.2).collect();
        Batch::flat(3, x, Targets::Regression(y)).unwrap()
    }

    fn client(key: &str, n: usize, offset: usize) -> ClientDataset {
        ClientDataset {
            key: key.into(),
            train: batch(n, offset),
            eval: Some(batch(8, offset + 1000)),
        }
    }

    fn plan(rounds: usize, local_epochs: usize, batch_size: BatchSize) -> FederatedPlan {
        FederatedPlan {
            rounds,
            local_epochs,
            client_opt: OptimizerConfig::sgd(0.1),
            server_opt: OptimizerConfig::sgd(1.0),
            client_lr_schedule: None,
            batch_size,
            seed: 11,
        }
    }

    #[test]
    fn single_client_matches_centralized_training() {
        let spec = spec();
        let init = build_model(&spec, 2);
        for batch_size in [BatchSize::Full, BatchSize::Fixed(7)] {
            let c = client("only", 40, 0);
            let p = plan(6, 3, batch_size);
            let (fed, history) = run_federated(&spec, std::slice::from_ref(&c), &init, &p).unwrap();
            assert_eq!(history.len(), 6);
            let cfg = TrainConfig {
                epochs: 18,
                optimizer: p.client_opt,
                schedule: None,
                batch_size,
                seed: client_seed(p.seed, "only"),
                restore_best: false,
            };
            let (central, _) = train(&spec, &init, &c.train, None, &cfg).unwrap();
            assert!(fed.max_abs_diff(&central) <= 1e-12);
        }
    }

    #[test]
    fn zero_rounds_return_init() {
        let spec = spec();
        let init = build_model(&spec, 2);
        let (out, history) = run_federated(&spec, &[client("a", 10, 0)], &init, &plan(0, 1, BatchSize::Full)).unwrap();
        assert_eq!(out, init);
        assert!(history.is_empty());
    }

    #[test]
    fn one_step_delta_is_negative_scaled_gradient() {
        let spec = spec();
        let init = build_model(&spec, 5);
        let c = client("a", 20, 3);
        let p = plan(1, 1, BatchSize::Full);
        let u = local_update(&spec, &c, &init, &p, 0).unwrap();
        let g = crate::nn::gradient(&spec, &init, &c.train, Mode::Train { seed: 0 }).unwrap();
        for (d, g) in u.delta.values().iter().zip(g.values()) {
            assert!((d + 0.1 * g).abs() < 1e-15);
        }
        assert_eq!(u.weight, 20.0);
    }

    #[test]
    fn zero_gradient_data_gives_zero_delta() {
        let spec = spec();
        let mut init = build_model(&spec, 5);
        init.values_mut().iter_mut().for_each(|v| *v = 0.0);
        let c = ClientDataset {
            key: "a".into(),
            train: Batch::flat(3, vec![0.3; 12], Targets::Regression(vec![0.0; 4])).unwrap(),
            eval: None,
        };
        let u = local_update(&spec, &c, &init, &plan(1, 4, BatchSize::Fixed(2)), 0).unwrap();
        assert!(u.delta.values().iter().all(|&d| d == 0.0));
    }

    fn vector(values: Vec<f64>) -> ParamVector {
        let spec = ModelSpec::new(
            InputKind::Flat { dim: values.len() - 1 },
            vec![Layer::Dense {
                in_dim: values.len() - 1,
                out_dim: 1,
                activation: Activation::Linear,
            }],
        )
        .unwrap();
        ParamVector::from_values(&spec, values).unwrap()
    }

    fn update(key: &str, delta: Vec<f64>, weight: f64) -> ClientUpdate {
        ClientUpdate {
            key: key.into(),
            delta: vector(delta),
            weight,
            train_loss: 0.0,
        }
    }

    #[test]
    fn weighted_mean_example() {
        let agg = aggregate(&[update("a", vec![1.0, 3.0], 1.0), update("b", vec![3.0, 5.0], 3.0)]).unwrap();
        assert_eq!(agg.values(), &[2.5, 4.5]);
        let same = aggregate(&[update("a", vec![0.3, -1.0], 2.0), update("b", vec![0.3, -1.0], 7.0)]).unwrap();
        assert!(same.max_abs_diff(&vector(vec![0.3, -1.0])) < 1e-15);
        assert!(aggregate(&[update("a", vec![1.0, 2.0], 1.0), update("b", vec![1.0, 2.0, 3.0], 1.0)]).is_err());
    }

    #[test]
    fn aggregation_order_and_duplication_invariance() {
        let ups = vec![
            update("x", vec![0.1, 0.7, -0.3], 3.0),
            update("a", vec![1.1, -0.2, 0.9], 5.0),
            update("m", vec![-0.4, 0.05, 0.6], 2.0),
        ];
        let base = aggregate(&ups).unwrap();
        let mut rev = ups.clone();
        rev.reverse();
        assert_eq!(aggregate(&rev).unwrap(), base);
        let mut dup = ups.clone();
        dup[0].weight = 1.5;
        dup.push(update("y", vec![0.1, 0.7, -0.3], 1.5));
        assert!(aggregate(&dup).unwrap().max_abs_diff(&base) < 1e-15);
    }

    #[test]
    fn federation_is_deterministic_and_client_order_free() {
        let spec = spec();
        let init = build_model(&spec, 8);
        let clients = vec![client("b", 30, 1), client("a", 25, 2), client("c", 12, 3)];
        let mut p = plan(4, 2, BatchSize::Fixed(5));
        p.server_opt = OptimizerConfig::fedadam(0.05);
        let (one, h1) = run_federated(&spec, &clients, &init, &p).unwrap();
        let mut rev = clients.clone();
        rev.reverse();
        let (two, _) = run_federated(&spec, &rev, &init, &p).unwrap();
        assert_eq!(one, two);
        assert!(one.is_finite());
        assert_eq!(h1.len(), 4);
        assert!(h1.iter().all(|r| r.clients.iter().all(|c| c.eval_metric.is_some())));
    }

    #[test]
    fn divergence_names_round_and_client() {
        let spec = spec();
        let init = build_model(&spec, 8);
        let mut bad = client("bad", 10, 0);
        bad.train = Batch::flat(3, vec![1e200; 30], Targets::Regression(vec![1e200; 10])).unwrap();
        let err = run_federated(&spec, &[client("a", 10, 0), bad], &init, &plan(2, 1, BatchSize::Full)).unwrap_err();
        match err {
            Error::Round { round, client, .. } => assert_eq!((round, client.as_str()), (0, "bad")),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn partition_counts_and_key_removal() {
        let rows: Vec<Vec<Cell>> = (0..30)
            .map(|i| {
                vec![
                    Cell::Num(i as f64),
                    Cell::Text(["n", "s", "e"][i % 3].into()),
                    Cell::Num(2.0 * i as f64),
                ]
            })
            .collect();
        let table = LabeledTable::new(vec!["x".into(), "region".into(), "y".into()], rows, "y", Some("region")).unwrap();
        let encode = |t: &LabeledTable| {
            assert!(t.column_index("region").is_err());
            let x = t.numeric_column("x")?;
            Batch::flat(1, x, Targets::Regression(t.targets()?))
        };
        let clients = partition_by_key(&table, "region", 0.1, 4, encode).unwrap();
        assert_eq!(clients.len(), 3);
        let total: usize = clients
            .iter()
            .map(|c| c.n_train() + c.eval.as_ref().map_or(0, Batch::len))
            .sum();
        assert_eq!(total, 30);
        assert!(clients.iter().all(|c| c.eval.as_ref().unwrap().len() == 1));
        let single = partition_by_key(&table.select_rows(&[0, 3, 6]), "region", 0.0, 4, encode).unwrap();
        assert_eq!(single.len(), 1);
        assert_eq!(single[0].n_train(), 3);
    }
}
