//! Training loops: standard, adversarial, and reweighter training.
//!
//! All three share one epoch driver: seeded shuffling, fixed-size batches
//! with the incomplete tail dropped, SGD with momentum and weight decay, and
//! cosine-annealed learning rate. They differ only in how the per-batch loss
//! is assembled:
//!
//! * standard — cross-entropy of the plain forward on natural inputs;
//! * adversarial — cross-entropy of the plain forward on inner-attack
//!   examples only, with the attack mask choosing which modalities move;
//! * reweighter — natural samples go through the plain forward, adversarial
//!   samples (both modalities attacked) through the reweighted forward, and
//!   the total is `l(y_nat) + lambda * (l(y_adv) + mean of auxiliary
//!   losses)`, the auxiliary terms acting as deep supervision.
//!
//! Every loop is bit-reproducible from its config seed. Parameters that do
//! not appear in a step's graph (reweighter weights during standard or
//! adversarial training) are left untouched by the optimizer, including
//! weight decay.

use std::path::Path;

use crate::attacks::{run_attack, AttackConfig, ModalityMask};
use crate::datagen::{stack_batch, Dataset};
use crate::nets::{argmax_rows, FusionModel};
use crate::rng::Rng;
use crate::tensor::{Tape, Tensor};
use crate::{Error, Result};

const TAG_SHUFFLE: u64 = 0x7368_7566_666c; // "shuffl"
const TAG_INNER_ATTACK: u64 = 0x696e_6e65_72; // "inner"

/// Hyperparameters shared by all training modes.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr0: f64,
    pub lr_min: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Balance between the natural-sample loss and the reweighter loss.
    pub lambda: f64,
    /// Inner-maximization attack; the mask is overridden per training mode.
    pub attack: AttackConfig,
    pub seed: u64,
}

impl TrainConfig {
    /// SGD momentum 0.9, weight decay 5e-4, lr 0.01 with cosine annealing to
    /// zero, lambda 1, and a 10-step inner attack with random start, step
    /// 2/255 and budget 8/255 per modality.
    pub fn default_with_seed(seed: u64) -> Self {
        use crate::attacks::UNIT;
        TrainConfig {
            epochs: 30,
            batch_size: 16,
            lr0: 0.01,
            lr_min: 0.0,
            momentum: 0.9,
            weight_decay: 5e-4,
            lambda: 1.0,
            attack: AttackConfig::pgd(
                8.0 * UNIT,
                8.0 * UNIT,
                2.0 * UNIT,
                10,
                ModalityMask::Both,
            ),
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Train("batch size must be at least 1".into()));
        }
        if !(self.lr0 > 0.0) {
            return Err(Error::Train(format!(
                "initial learning rate must be positive, got {}",
                self.lr0
            )));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::Train(format!(
                "lambda must be nonnegative, got {}",
                self.lambda
            )));
        }
        self.attack.validate()
    }
}

/// `lr_min + (lr0 - lr_min) * (1 + cos(pi * t / t_max)) / 2`.
pub fn cosine_lr(t: usize, t_max: usize, lr0: f64, lr_min: f64) -> f64 {
    if t_max == 0 {
        return lr0;
    }
    let phase = std::f64::consts::PI * (t as f64) / (t_max as f64);
    lr_min + 0.5 * (lr0 - lr_min) * (1.0 + phase.cos())
}

/// In-place SGD update of one parameter:
/// `v = momentum * v + (grad + weight_decay * param); param -= lr * v`.
pub fn sgd_update(
    param: &mut [f64],
    grad: &[f64],
    velocity: &mut [f64],
    lr: f64,
    momentum: f64,
    weight_decay: f64,
) {
    for ((p, &g), v) in param.iter_mut().zip(grad).zip(velocity.iter_mut()) {
        *v = momentum * *v + (g + weight_decay * *p);
        *p -= lr * *v;
    }
}

/// Momentum state across steps, one buffer per model parameter.
pub struct Sgd {
    momentum: f64,
    weight_decay: f64,
    velocity: Vec<Vec<f64>>,
}

impl Sgd {
    pub fn new(momentum: f64, weight_decay: f64) -> Self {
        Sgd {
            momentum,
            weight_decay,
            velocity: Vec::new(),
        }
    }

    /// Applies one update. `grads` aligns with the model's parameter order;
    /// `None` entries (parameters absent from the step's graph) are skipped.
    pub fn step(&mut self, model: &mut FusionModel, grads: &[Option<Vec<f64>>], lr: f64) {
        let mut params = model.params_mut();
        if self.velocity.len() != params.len() {
            self.velocity = params.iter().map(|t| vec![0.0; t.numel()]).collect();
        }
        for ((param, grad), velocity) in params
            .iter_mut()
            .zip(grads)
            .zip(self.velocity.iter_mut())
        {
            if let Some(g) = grad {
                sgd_update(
                    param.data_mut(),
                    g,
                    velocity,
                    lr,
                    self.momentum,
                    self.weight_decay,
                );
            }
        }
    }
}

/// Loss components of one optimization step.
#[derive(Debug, Clone)]
pub struct StepStats {
    pub l_total: f64,
    pub l_nat: f64,
    pub l_adv: f64,
    /// Mean of the auxiliary losses (the deep-supervision term), 0 when the
    /// mode has none.
    pub l_aux: f64,
    pub correct: usize,
    pub seen: usize,
}

/// Per-epoch aggregates written to the training log.
#[derive(Debug, Clone)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    pub l_total: f64,
    pub l_nat: f64,
    pub l_adv: f64,
    pub l_aux: f64,
    pub train_acc: f64,
}

/// Full training history.
#[derive(Debug, Clone, Default)]
pub struct TrainLog {
    pub epochs: Vec<EpochStats>,
}

impl TrainLog {
    /// Writes `epoch,lr,l_total,l_nat,l_adv,l_aux,train_acc` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("epoch,lr,l_total,l_nat,l_adv,l_aux,train_acc\n");
        for e in &self.epochs {
            out.push_str(&format!(
                "{},{:.8},{:.8},{:.8},{:.8},{:.8},{:.4}\n",
                e.epoch, e.lr, e.l_total, e.l_nat, e.l_adv, e.l_aux, e.train_acc
            ));
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

/// Which loss the loop optimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMode {
    Standard,
    Adversarial(ModalityMask),
    Reweighter,
}

fn collect_grads(tape: &Tape, vars: &[crate::tensor::Var]) -> Vec<Option<Vec<f64>>> {
    vars.iter()
        .map(|&v| tape.grad(v).map(|g| g.to_vec()))
        .collect()
}

/// One standard step: cross-entropy of the plain forward on natural inputs.
pub fn standard_step(
    model: &mut FusionModel,
    x_r: &Tensor,
    x_s: &Tensor,
    labels: &[usize],
    opt: &mut Sgd,
    lr: f64,
) -> Result<StepStats> {
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape, true);
    let vr = tape.leaf(x_r, false);
    let vs = tape.leaf(x_s, false);
    let pass = model.forward_plain(&mut tape, &bound, vr, vs)?;
    let loss = tape.softmax_cross_entropy(pass.logits, labels)?;
    let loss_value = tape.value(loss)[0];
    let predictions = argmax_rows(&tape.to_tensor(pass.logits));
    tape.backward(loss)?;
    let grads = collect_grads(&tape, &bound.vars);
    opt.step(model, &grads, lr);
    let correct = predictions
        .iter()
        .zip(labels)
        .filter(|(p, y)| p == y)
        .count();
    Ok(StepStats {
        l_total: loss_value,
        l_nat: loss_value,
        l_adv: 0.0,
        l_aux: 0.0,
        correct,
        seen: labels.len(),
    })
}

/// One adversarial step: generate the inner batch under `mask`, then
/// minimize cross-entropy of the plain forward on the adversarial inputs
/// only.
pub fn adversarial_step(
    model: &mut FusionModel,
    x_r: &Tensor,
    x_s: &Tensor,
    labels: &[usize],
    mask: ModalityMask,
    cfg: &TrainConfig,
    opt: &mut Sgd,
    lr: f64,
    attack_seed: u64,
) -> Result<StepStats> {
    let mut attack = cfg.attack.clone();
    attack.mask = mask;
    let adv = run_attack(model, x_r, x_s, labels, &attack, attack_seed)?;

    let mut tape = Tape::new();
    let bound = model.bind(&mut tape, true);
    let vr = tape.leaf(&adv.x_r, false);
    let vs = tape.leaf(&adv.x_s, false);
    let pass = model.forward_plain(&mut tape, &bound, vr, vs)?;
    let loss = tape.softmax_cross_entropy(pass.logits, labels)?;
    let loss_value = tape.value(loss)[0];
    let predictions = argmax_rows(&tape.to_tensor(pass.logits));
    tape.backward(loss)?;
    let grads = collect_grads(&tape, &bound.vars);
    opt.step(model, &grads, lr);
    let correct = predictions
        .iter()
        .zip(labels)
        .filter(|(p, y)| p == y)
        .count();
    Ok(StepStats {
        l_total: loss_value,
        l_nat: 0.0,
        l_adv: loss_value,
        l_aux: 0.0,
        correct,
        seen: labels.len(),
    })
}

/// One reweighter step; see the module docs for the loss. The inner attack
/// touches both modalities and targets the reweighted path, excluding
/// auxiliary heads. Reported accuracy is on the natural samples.
pub fn amr_step(
    model: &mut FusionModel,
    x_r: &Tensor,
    x_s: &Tensor,
    labels: &[usize],
    cfg: &TrainConfig,
    opt: &mut Sgd,
    lr: f64,
    attack_seed: u64,
) -> Result<StepStats> {
    let s = model.amr_count();
    if s == 0 {
        return Err(Error::Train(
            "reweighter training requires at least one reweighter module".into(),
        ));
    }
    let mut attack = cfg.attack.clone();
    attack.mask = ModalityMask::Both;
    let adv = run_attack(model, x_r, x_s, labels, &attack, attack_seed)?;

    let mut tape = Tape::new();
    let bound = model.bind(&mut tape, true);

    let nat_r = tape.leaf(x_r, false);
    let nat_s = tape.leaf(x_s, false);
    let nat_pass = model.forward_plain(&mut tape, &bound, nat_r, nat_s)?;
    let l_nat = tape.softmax_cross_entropy(nat_pass.logits, labels)?;

    let adv_r = tape.leaf(&adv.x_r, false);
    let adv_s = tape.leaf(&adv.x_s, false);
    let adv_pass = model.forward_reweighted(&mut tape, &bound, adv_r, adv_s)?;
    let l_adv = tape.softmax_cross_entropy(adv_pass.logits, labels)?;

    let mut aux_values = Vec::with_capacity(s);
    let mut aux_sum = None;
    for &aux_logits in &adv_pass.aux {
        let l = tape.softmax_cross_entropy(aux_logits, labels)?;
        aux_values.push(tape.value(l)[0]);
        aux_sum = Some(match aux_sum {
            None => l,
            Some(acc) => tape.add(acc, l)?,
        });
    }
    let aux_mean = tape.scalar_mul(aux_sum.expect("s >= 1"), 1.0 / s as f64)?;
    let l_amr = tape.add(l_adv, aux_mean)?;
    let weighted = tape.scalar_mul(l_amr, cfg.lambda)?;
    let l_total = tape.add(l_nat, weighted)?;

    let stats = StepStats {
        l_total: tape.value(l_total)[0],
        l_nat: tape.value(l_nat)[0],
        l_adv: tape.value(l_adv)[0],
        l_aux: tape.value(aux_mean)[0],
        correct: argmax_rows(&tape.to_tensor(nat_pass.logits))
            .iter()
            .zip(labels)
            .filter(|(p, y)| p == y)
            .count(),
        seen: labels.len(),
    };
    tape.backward(l_total)?;
    let grads = collect_grads(&tape, &bound.vars);
    opt.step(model, &grads, lr);
    Ok(stats)
}

fn run_training(
    model: &mut FusionModel,
    dataset: &Dataset,
    cfg: &TrainConfig,
    mode: TrainMode,
) -> Result<TrainLog> {
    cfg.validate()?;
    if mode == TrainMode::Reweighter && model.amr_count() == 0 {
        return Err(Error::Train(
            "reweighter training requires at least one reweighter module".into(),
        ));
    }
    let mut opt = Sgd::new(cfg.momentum, cfg.weight_decay);
    let mut log = TrainLog::default();
    let batches_per_epoch = dataset.len() / cfg.batch_size;
    for epoch in 0..cfg.epochs {
        let lr = cosine_lr(epoch, cfg.epochs, cfg.lr0, cfg.lr_min);
        let mut order: Vec<usize> = (0..dataset.len()).collect();
        Rng::derive(cfg.seed, TAG_SHUFFLE, epoch as u64).shuffle(&mut order);

        let mut totals = StepStats {
            l_total: 0.0,
            l_nat: 0.0,
            l_adv: 0.0,
            l_aux: 0.0,
            correct: 0,
            seen: 0,
        };
        for bi in 0..batches_per_epoch {
            let idx = &order[bi * cfg.batch_size..(bi + 1) * cfg.batch_size];
            let items: Vec<&crate::datagen::ModalPair> =
                idx.iter().map(|&i| &dataset.samples[i]).collect();
            let (x_r, x_s, labels) = stack_batch(&items)?;
            let step_index = (epoch * batches_per_epoch + bi) as u64;
            let attack_seed =
                Rng::derive(cfg.seed, TAG_INNER_ATTACK, step_index).next_u64();
            let stats = match mode {
                TrainMode::Standard => {
                    standard_step(model, &x_r, &x_s, &labels, &mut opt, lr)?
                }
                TrainMode::Adversarial(mask) => adversarial_step(
                    model,
                    &x_r,
                    &x_s,
                    &labels,
                    mask,
                    cfg,
                    &mut opt,
                    lr,
                    attack_seed,
                )?,
                TrainMode::Reweighter => {
                    amr_step(model, &x_r, &x_s, &labels, cfg, &mut opt, lr, attack_seed)?
                }
            };
            totals.l_total += stats.l_total;
            totals.l_nat += stats.l_nat;
            totals.l_adv += stats.l_adv;
            totals.l_aux += stats.l_aux;
            totals.correct += stats.correct;
            totals.seen += stats.seen;
        }
        let nb = batches_per_epoch.max(1) as f64;
        log.epochs.push(EpochStats {
            epoch,
            lr,
            l_total: totals.l_total / nb,
            l_nat: totals.l_nat / nb,
            l_adv: totals.l_adv / nb,
            l_aux: totals.l_aux / nb,
            train_acc: if totals.seen == 0 {
                0.0
            } else {
                100.0 * totals.correct as f64 / totals.seen as f64
            },
        });
    }
    Ok(log)
}

/// Minimizes cross-entropy of the plain forward on natural samples.
pub fn train_standard(
    model: &mut FusionModel,
    dataset: &Dataset,
    cfg: &TrainConfig,
) -> Result<TrainLog> {
    run_training(model, dataset, cfg, TrainMode::Standard)
}

/// Min-max training: each step attacks under `mask`, then minimizes
/// cross-entropy of the plain forward on the adversarial inputs.
pub fn train_adversarial(
    model: &mut FusionModel,
    dataset: &Dataset,
    cfg: &TrainConfig,
    mask: ModalityMask,
) -> Result<TrainLog> {
    run_training(model, dataset, cfg, TrainMode::Adversarial(mask))
}

/// Reweighter training with the composite natural + adversarial +
/// deep-supervision loss.
pub fn train_amr(
    model: &mut FusionModel,
    dataset: &Dataset,
    cfg: &TrainConfig,
) -> Result<TrainLog> {
    run_training(model, dataset, cfg, TrainMode::Reweighter)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate, SynthSpec};
    use crate::nets::ModelConfig;

    #[test]
    fn cosine_schedule_endpoints_and_midpoint() {
        assert_eq!(cosine_lr(0, 10, 0.01, 0.0), 0.01);
        assert!((cosine_lr(10, 10, 0.01, 0.0) - 0.0).abs() < 1e-18);
        assert!((cosine_lr(5, 10, 0.01, 0.0) - 0.005).abs() < 1e-15);
        assert!((cosine_lr(10, 10, 0.01, 0.001) - 0.001).abs() < 1e-18);
    }

    #[test]
    fn sgd_single_step_without_momentum() {
        let mut p = vec![1.0];
        let mut v = vec![0.0];
        sgd_update(&mut p, &[1.0], &mut v, 0.1, 0.0, 0.0);
        assert!((p[0] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn sgd_zero_grad_leaves_param_unchanged() {
        let mut p = vec![0.7];
        let mut v = vec![0.0];
        sgd_update(&mut p, &[0.0], &mut v, 0.1, 0.9, 0.0);
        assert_eq!(p[0], 0.7);
    }

    #[test]
    fn sgd_two_momentum_steps_match_hand_recurrence() {
        // v1 = 1, p1 = -0.1; v2 = 0.9 + 1 = 1.9, p2 = -0.1 - 0.19 = -0.29
        let mut p = vec![0.0];
        let mut v = vec![0.0];
        sgd_update(&mut p, &[1.0], &mut v, 0.1, 0.9, 0.0);
        sgd_update(&mut p, &[1.0], &mut v, 0.1, 0.9, 0.0);
        assert!((p[0] - (-0.29)).abs() < 1e-15);
    }

    #[test]
    fn sgd_weight_decay_enters_the_velocity() {
        let mut p = vec![1.0];
        let mut v = vec![0.0];
        sgd_update(&mut p, &[0.0], &mut v, 0.1, 0.0, 0.5);
        // v = 0 + (0 + 0.5 * 1) = 0.5, p = 1 - 0.05
        assert!((p[0] - 0.95).abs() < 1e-15);
    }

    fn tiny_dataset(seed: u64) -> Dataset {
        generate(&SynthSpec {
            num_classes: 2,
            samples_per_class: 12,
            dense_shape: vec![2, 2, 2, 4],
            sparse_shape: vec![3, 4, 5],
            dense_snr: 1.0,
            sparse_snr: 2.0,
            dense_nuisance_std: 0.05,
            seed,
        })
        .unwrap()
    }

    fn tiny_model(amr_count: usize, seed: u64) -> FusionModel {
        FusionModel::new(ModelConfig {
            num_classes: 2,
            dense_input: vec![2, 2, 2, 4],
            sparse_input: vec![3, 4, 5],
            dense_blocks: vec![vec![4, 2, 2, 2], vec![4, 2, 2, 2]],
            sparse_blocks: vec![vec![4, 2, 3], vec![4, 2, 3]],
            amr_count,
            init_seed: seed,
        })
        .unwrap()
    }

    fn tiny_cfg(epochs: usize, seed: u64) -> TrainConfig {
        let mut cfg = TrainConfig::default_with_seed(seed);
        cfg.epochs = epochs;
        cfg.batch_size = 8;
        cfg.attack.steps = 2;
        cfg.attack.random_start = false;
        cfg
    }

    #[test]
    fn zero_epochs_leaves_parameters_unchanged() {
        let ds = tiny_dataset(1);
        let mut model = tiny_model(0, 2);
        let before: Vec<Vec<f64>> = model
            .params()
            .iter()
            .map(|(_, t)| t.data().to_vec())
            .collect();
        train_standard(&mut model, &ds, &tiny_cfg(0, 3)).unwrap();
        for ((_, t), b) in model.params().iter().zip(&before) {
            assert_eq!(t.data(), b.as_slice());
        }
    }

    #[test]
    fn first_epoch_reduces_training_loss() {
        let ds = tiny_dataset(4);
        let mut model = tiny_model(0, 5);

        // loss at init
        let items: Vec<_> = ds.samples.iter().collect();
        let (xr, xs, y) = stack_batch(&items).unwrap();
        let mut tape = Tape::new();
        let bound = model.bind(&mut tape, false);
        let vr = tape.leaf(&xr, false);
        let vs = tape.leaf(&xs, false);
        let pass = model.forward_plain(&mut tape, &bound, vr, vs).unwrap();
        let l = tape.softmax_cross_entropy(pass.logits, &y).unwrap();
        let init_loss = tape.value(l)[0];

        train_standard(&mut model, &ds, &tiny_cfg(1, 6)).unwrap();

        let mut tape = Tape::new();
        let bound = model.bind(&mut tape, false);
        let vr = tape.leaf(&xr, false);
        let vs = tape.leaf(&xs, false);
        let pass = model.forward_plain(&mut tape, &bound, vr, vs).unwrap();
        let l = tape.softmax_cross_entropy(pass.logits, &y).unwrap();
        let after = tape.value(l)[0];
        assert!(after < init_loss, "{after} !< {init_loss}");
    }

    #[test]
    fn training_is_bit_reproducible() {
        let ds = tiny_dataset(7);
        let run = || {
            let mut model = tiny_model(1, 8);
            train_amr(&mut model, &ds, &tiny_cfg(2, 9)).unwrap();
            model
                .params()
                .iter()
                .flat_map(|(_, t)| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>())
                .collect::<Vec<u64>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn zero_budget_adversarial_matches_standard_trajectory() {
        let ds = tiny_dataset(10);
        let mut cfg = tiny_cfg(2, 11);
        cfg.attack.eps_r = 0.0;
        cfg.attack.eps_s = 0.0;
        let mut at_model = tiny_model(0, 12);
        train_adversarial(&mut at_model, &ds, &cfg, ModalityMask::Both).unwrap();
        let mut st_model = tiny_model(0, 12);
        train_standard(&mut st_model, &ds, &cfg).unwrap();
        for ((_, a), (_, b)) in at_model.params().iter().zip(st_model.params()) {
            assert_eq!(a.data(), b.data());
        }
    }

    #[test]
    fn dense_only_inner_attack_leaves_sparse_untouched() {
        let ds = tiny_dataset(13);
        let model = tiny_model(0, 14);
        let items: Vec<_> = ds.samples.iter().take(4).collect();
        let (xr, xs, y) = stack_batch(&items).unwrap();
        let mut attack = tiny_cfg(1, 15).attack;
        attack.mask = ModalityMask::DenseOnly;
        let adv = run_attack(&model, &xr, &xs, &y, &attack, 99).unwrap();
        assert!(adv.delta_s.data().iter().all(|&v| v == 0.0));
        assert!(adv.delta_r.data().iter().any(|&v| v != 0.0));
    }

    #[test]
    fn amr_training_requires_a_module() {
        let ds = tiny_dataset(16);
        let mut model = tiny_model(0, 17);
        let err = train_amr(&mut model, &ds, &tiny_cfg(1, 18)).unwrap_err();
        assert!(err.to_string().contains("reweighter"));
    }

    #[test]
    fn amr_loss_composition_arithmetic() {
        // l_amr = l(y', y) + mean aux; l_total = l_nat + lambda * l_amr
        let ds = tiny_dataset(19);
        let mut model = tiny_model(1, 20);
        let mut cfg = tiny_cfg(1, 21);
        cfg.lambda = 1.0;
        let items: Vec<_> = ds.samples.iter().take(8).collect();
        let (xr, xs, y) = stack_batch(&items).unwrap();
        let mut opt = Sgd::new(cfg.momentum, cfg.weight_decay);
        let stats = amr_step(&mut model, &xr, &xs, &y, &cfg, &mut opt, 0.01, 7).unwrap();
        let recomposed = stats.l_nat + cfg.lambda * (stats.l_adv + stats.l_aux);
        assert!((stats.l_total - recomposed).abs() <= 1e-12);
    }

    #[test]
    fn lambda_zero_still_trains_natural_path_only() {
        // With lambda 0 the reweighter weights receive gradient only through
        // the weighted branch, which is scaled to zero; shared parameters
        // still move through the natural loss.
        let ds = tiny_dataset(22);
        let mut model = tiny_model(1, 23);
        let w_before = model.amr(0).w_r.data().to_vec();
        let fusion_before = model
            .params()
            .iter()
            .find(|(n, _)| n == "fusion.weight")
            .map(|(_, t)| t.data().to_vec())
            .unwrap();
        let mut cfg = tiny_cfg(1, 24);
        cfg.lambda = 0.0;
        cfg.weight_decay = 0.0;
        train_amr(&mut model, &ds, &cfg).unwrap();
        assert_eq!(model.amr(0).w_r.data(), w_before.as_slice());
        let fusion_after = model
            .params()
            .iter()
            .find(|(n, _)| n == "fusion.weight")
            .map(|(_, t)| t.data().to_vec())
            .unwrap();
        assert_ne!(fusion_before, fusion_after);
    }
}
