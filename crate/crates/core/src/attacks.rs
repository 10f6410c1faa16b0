//! Gradient attacks on the two-modality model.
//!
//! All three methods share one projected-sign-ascent driver: per step, both
//! modality gradients come from a single forward/backward pass, each attacked
//! modality takes a `sign`-of-gradient step, and the iterate is projected
//! back into the per-modality L-inf ball, then into the valid value range
//! when one is configured. FGSM is the driver with one step and step size
//! equal to the budget; the CW variant swaps cross-entropy for the
//! untargeted margin `max_{i != y} z_i - z_y` while keeping the driver.
//!
//! Attacks target the model's deployed prediction path (reweighted when the
//! model carries reweighter modules) and never include auxiliary heads in
//! the objective. `sign(0) = 0`, so gradient-dead coordinates stay put.
//!
//! Generation is pure given `(model, inputs, seed)`: random starts draw from
//! per-sample streams keyed by a hash of the sample's own values, so results
//! depend on neither batch boundaries nor sample order.

use crate::nets::FusionModel;
use crate::rng::Rng;
use crate::tensor::{Tape, Tensor, Var};
use crate::{Error, Result};

/// One attack-strength unit used throughout configs: 1/255.
pub const UNIT: f64 = 1.0 / 255.0;

const TAG_START_R: u64 = 0x7273_7461_7274; // "rstart"
const TAG_START_S: u64 = 0x7373_7461_7274; // "sstart"

/// Attack objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackMethod {
    /// One sign step of size epsilon.
    Fgsm,
    /// Iterated projected sign ascent on cross-entropy.
    Pgd,
    /// Iterated projected sign ascent on the untargeted margin.
    Cw,
}

impl AttackMethod {
    pub fn name(self) -> &'static str {
        match self {
            AttackMethod::Fgsm => "fgsm",
            AttackMethod::Pgd => "pgd",
            AttackMethod::Cw => "cw",
        }
    }
}

/// Which modalities the attacker may touch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModalityMask {
    DenseOnly,
    SparseOnly,
    Both,
}

impl ModalityMask {
    pub fn attacks_dense(self) -> bool {
        matches!(self, ModalityMask::DenseOnly | ModalityMask::Both)
    }

    pub fn attacks_sparse(self) -> bool {
        matches!(self, ModalityMask::SparseOnly | ModalityMask::Both)
    }

    pub fn name(self) -> &'static str {
        match self {
            ModalityMask::DenseOnly => "xr",
            ModalityMask::SparseOnly => "xs",
            ModalityMask::Both => "xrs",
        }
    }
}

/// Full attack description. Budgets and step size are in input units (use
/// [`UNIT`] to convert from the 1/255 convention).
#[derive(Debug, Clone)]
pub struct AttackConfig {
    pub method: AttackMethod,
    pub eps_r: f64,
    pub eps_s: f64,
    pub alpha: f64,
    pub steps: usize,
    pub random_start: bool,
    pub mask: ModalityMask,
    /// Valid-range bounds for the dense modality, applied after ball
    /// projection. Image-like data lives in [0, 1].
    pub clamp_r: Option<(f64, f64)>,
    /// Valid-range bounds for the sparse modality; unbounded by default.
    pub clamp_s: Option<(f64, f64)>,
}

impl AttackConfig {
    pub fn pgd(eps_r: f64, eps_s: f64, alpha: f64, steps: usize, mask: ModalityMask) -> Self {
        AttackConfig {
            method: AttackMethod::Pgd,
            eps_r,
            eps_s,
            alpha,
            steps,
            random_start: true,
            mask,
            clamp_r: Some((0.0, 1.0)),
            clamp_s: None,
        }
    }

    pub fn fgsm(eps_r: f64, eps_s: f64, mask: ModalityMask) -> Self {
        AttackConfig {
            method: AttackMethod::Fgsm,
            eps_r,
            eps_s,
            alpha: eps_r.max(eps_s).max(f64::MIN_POSITIVE),
            steps: 1,
            random_start: false,
            mask,
            clamp_r: Some((0.0, 1.0)),
            clamp_s: None,
        }
    }

    pub fn cw(eps_r: f64, eps_s: f64, alpha: f64, steps: usize, mask: ModalityMask) -> Self {
        AttackConfig {
            method: AttackMethod::Cw,
            ..AttackConfig::pgd(eps_r, eps_s, alpha, steps, mask)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.eps_r < 0.0 || self.eps_s < 0.0 {
            return Err(Error::Attack(format!(
                "budgets must be nonnegative, got eps_r {} eps_s {}",
                self.eps_r, self.eps_s
            )));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::Attack(format!(
                "step size must be positive, got {}",
                self.alpha
            )));
        }
        if self.steps < 1 {
            return Err(Error::Attack("step count must be at least 1".into()));
        }
        if self.method == AttackMethod::Fgsm && (self.steps != 1 || self.random_start) {
            return Err(Error::Attack(
                "fgsm implies a single step without random start".into(),
            ));
        }
        Ok(())
    }

    /// Per-modality step sizes: the budget itself for FGSM, `alpha` otherwise.
    fn step_sizes(&self) -> (f64, f64) {
        match self.method {
            AttackMethod::Fgsm => (self.eps_r, self.eps_s),
            _ => (self.alpha, self.alpha),
        }
    }

    /// Short descriptor such as `pgd20-xrs-e8` for file names and reports.
    pub fn descriptor(&self) -> String {
        let eps = (self.eps_r.max(self.eps_s) / UNIT).round() as i64;
        format!(
            "{}{}-{}-e{}",
            self.method.name(),
            self.steps,
            self.mask.name(),
            eps
        )
    }
}

/// Perturbed inputs plus the perturbations and the config that made them.
#[derive(Debug, Clone)]
pub struct AdversarialBatch {
    pub x_r: Tensor,
    pub x_s: Tensor,
    pub delta_r: Tensor,
    pub delta_s: Tensor,
    pub config: AttackConfig,
}

impl AdversarialBatch {
    /// Max-abs perturbation per modality.
    pub fn delta_linf(&self) -> (f64, f64) {
        let linf = |t: &Tensor| t.data().iter().map(|v| v.abs()).fold(0.0, f64::max);
        (linf(&self.delta_r), linf(&self.delta_s))
    }
}

/// Records the attack objective for `logits` on `tape`.
///
/// Cross-entropy for FGSM/PGD; for CW, the batch-mean untargeted margin
/// `max_{i != y} z_i - z_y`, linearized at the current argmax (ties toward
/// the lowest index), which has the margin's subgradient everywhere.
pub fn attack_loss(
    tape: &mut Tape,
    logits: Var,
    labels: &[usize],
    method: AttackMethod,
) -> Result<Var> {
    match method {
        AttackMethod::Fgsm | AttackMethod::Pgd => {
            Ok(tape.softmax_cross_entropy(logits, labels)?)
        }
        AttackMethod::Cw => {
            let shape = tape.shape(logits).to_vec();
            if shape.len() != 2 || shape[0] != labels.len() {
                return Err(Error::Attack(format!(
                    "cw loss expects [B,N] logits with B = {} labels, got {:?}",
                    labels.len(),
                    shape
                )));
            }
            let (b, n) = (shape[0], shape[1]);
            let values = tape.value(logits).to_vec();
            let mut selector = vec![0.0; b * n];
            for (row, &y) in labels.iter().enumerate() {
                if y >= n {
                    return Err(Error::Attack(format!(
                        "label {y} out of range [0, {n})"
                    )));
                }
                let z = &values[row * n..(row + 1) * n];
                let mut best: Option<usize> = None;
                for i in 0..n {
                    if i == y {
                        continue;
                    }
                    if best.map_or(true, |bi| z[i] > z[bi]) {
                        best = Some(i);
                    }
                }
                let rival = best.ok_or_else(|| {
                    Error::Attack("cw loss needs at least two classes".into())
                })?;
                selector[row * n + rival] = 1.0;
                selector[row * n + y] = -1.0;
            }
            let sel = tape.leaf_from(vec![b, n], selector, false)?;
            let picked = tape.elementwise_mul(logits, sel)?;
            let mean = tape.mean_over_axes(picked, &[0, 1])?;
            // mean over B*N entries times N = batch-mean margin
            Ok(tape.scalar_mul(mean, n as f64)?)
        }
    }
}

/// Evaluates the attack objective for fixed inputs, without gradients.
pub fn attack_loss_value(
    model: &FusionModel,
    x_r: &Tensor,
    x_s: &Tensor,
    labels: &[usize],
    method: AttackMethod,
) -> Result<f64> {
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape, false);
    let vr = tape.leaf(x_r, false);
    let vs = tape.leaf(x_s, false);
    let pass = model.forward_bound(&mut tape, &bound, vr, vs, model.uses_reweighted_path())?;
    let loss = attack_loss(&mut tape, pass.logits, labels, method)?;
    Ok(tape.value(loss)[0])
}

/// Per-sample losses of the attack objective at fixed inputs. Used by
/// monotonicity checks; the batch objective is the mean of these.
pub fn per_sample_losses(
    model: &FusionModel,
    x_r: &Tensor,
    x_s: &Tensor,
    labels: &[usize],
    method: AttackMethod,
) -> Result<Vec<f64>> {
    let batch = labels.len();
    let per_r = x_r.numel() / batch;
    let per_s = x_s.numel() / batch;
    let mut out = Vec::with_capacity(batch);
    for b in 0..batch {
        let mut rshape = x_r.shape().to_vec();
        rshape[0] = 1;
        let mut sshape = x_s.shape().to_vec();
        sshape[0] = 1;
        let xr = Tensor::new(rshape, x_r.data()[b * per_r..(b + 1) * per_r].to_vec())?;
        let xs = Tensor::new(sshape, x_s.data()[b * per_s..(b + 1) * per_s].to_vec())?;
        out.push(attack_loss_value(model, &xr, &xs, &[labels[b]], method)?);
    }
    Ok(out)
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Stream key for one sample's random start: a splitmix fold over the bit
/// patterns of both modality rows.
fn sample_key(dense_row: &[f64], sparse_row: &[f64]) -> u64 {
    let mut h: u64 = 0x5361_6d70_6c65_4b65; // "SampleKe"
    for &v in dense_row.iter().chain(sparse_row) {
        h ^= v.to_bits();
        crate::rng::splitmix64(&mut h);
    }
    h
}

/// One projected sign step for every entry of a modality.
fn signed_step_project(
    cur: &mut [f64],
    grad: &[f64],
    origin: &[f64],
    step: f64,
    eps: f64,
    clamp: Option<(f64, f64)>,
) {
    for ((c, &g), &o) in cur.iter_mut().zip(grad).zip(origin) {
        let mut v = *c + step * sign(g);
        // Both constraints are axis-aligned boxes; applying the ball
        // projection first and the range clamp second lands in their
        // intersection.
        v = v.max(o - eps).min(o + eps);
        if let Some((lo, hi)) = clamp {
            v = v.clamp(lo, hi);
        }
        *c = v;
    }
}

/// Multimodal projected sign ascent (the PGD-K family, all three methods).
pub fn pgd_multimodal(
    model: &FusionModel,
    x_r: &Tensor,
    x_s: &Tensor,
    labels: &[usize],
    cfg: &AttackConfig,
    seed: u64,
) -> Result<AdversarialBatch> {
    cfg.validate()?;
    let batch = labels.len();
    if x_r.shape()[0] != batch || x_s.shape()[0] != batch {
        return Err(Error::Attack(format!(
            "batch mismatch: {} labels, inputs {:?} / {:?}",
            batch,
            x_r.shape(),
            x_s.shape()
        )));
    }
    let touch_r = cfg.mask.attacks_dense() && cfg.eps_r > 0.0;
    let touch_s = cfg.mask.attacks_sparse() && cfg.eps_s > 0.0;
    let (step_r, step_s) = cfg.step_sizes();

    let mut cur_r = x_r.clone();
    let mut cur_s = x_s.clone();

    if cfg.random_start {
        let per_r = x_r.numel() / batch;
        let per_s = x_s.numel() / batch;
        let keys: Vec<u64> = (0..batch)
            .map(|b| {
                sample_key(
                    &x_r.data()[b * per_r..(b + 1) * per_r],
                    &x_s.data()[b * per_s..(b + 1) * per_s],
                )
            })
            .collect();
        let start = |t: &mut Tensor, origin: &Tensor, eps: f64, tag: u64, clamp: Option<(f64, f64)>| {
            let per = t.numel() / batch;
            for b in 0..batch {
                let mut rng = Rng::derive(seed, tag, keys[b]);
                for i in b * per..(b + 1) * per {
                    let mut v = origin.data()[i] + rng.uniform_in(-eps, eps);
                    if let Some((lo, hi)) = clamp {
                        v = f64::clamp(v, lo, hi);
                    }
                    t.data_mut()[i] = v;
                }
            }
        };
        if touch_r {
            start(&mut cur_r, x_r, cfg.eps_r, TAG_START_R, cfg.clamp_r);
        }
        if touch_s {
            start(&mut cur_s, x_s, cfg.eps_s, TAG_START_S, cfg.clamp_s);
        }
    }

    if touch_r || touch_s {
        for _ in 0..cfg.steps {
            let mut tape = Tape::new();
            let bound = model.bind(&mut tape, false);
            let vr = tape.leaf(&cur_r, touch_r);
            let vs = tape.leaf(&cur_s, touch_s);
            // Joint gradient: one forward/backward serves both modalities.
            let pass =
                model.forward_bound(&mut tape, &bound, vr, vs, model.uses_reweighted_path())?;
            let loss = attack_loss(&mut tape, pass.logits, labels, cfg.method)?;
            tape.backward(loss)?;
            if touch_r {
                let grad = tape.grad(vr).expect("dense input requested gradient");
                signed_step_project(
                    cur_r.data_mut(),
                    grad,
                    x_r.data(),
                    step_r,
                    cfg.eps_r,
                    cfg.clamp_r,
                );
            }
            if touch_s {
                let grad = tape.grad(vs).expect("sparse input requested gradient");
                signed_step_project(
                    cur_s.data_mut(),
                    grad,
                    x_s.data(),
                    step_s,
                    cfg.eps_s,
                    cfg.clamp_s,
                );
            }
        }
    }

    let delta = |cur: &Tensor, orig: &Tensor| {
        Tensor::new(
            cur.shape().to_vec(),
            cur.data()
                .iter()
                .zip(orig.data())
                .map(|(a, b)| a - b)
                .collect(),
        )
        .expect("same shape")
    };
    Ok(AdversarialBatch {
        delta_r: delta(&cur_r, x_r),
        delta_s: delta(&cur_s, x_s),
        x_r: cur_r,
        x_s: cur_s,
        config: cfg.clone(),
    })
}

/// Single sign step of size epsilon: the driver above with `K = 1`,
/// per-modality step `epsilon`, and no random start, so the two entry points
/// agree bit for bit by construction.
pub fn fgsm(
    model: &FusionModel,
    x_r: &Tensor,
    x_s: &Tensor,
    labels: &[usize],
    cfg: &AttackConfig,
    seed: u64,
) -> Result<AdversarialBatch> {
    if cfg.method != AttackMethod::Fgsm {
        return Err(Error::Attack(format!(
            "fgsm called with method {}",
            cfg.method.name()
        )));
    }
    pgd_multimodal(model, x_r, x_s, labels, cfg, seed)
}

/// Dispatches on the configured method.
pub fn run_attack(
    model: &FusionModel,
    x_r: &Tensor,
    x_s: &Tensor,
    labels: &[usize],
    cfg: &AttackConfig,
    seed: u64,
) -> Result<AdversarialBatch> {
    match cfg.method {
        AttackMethod::Fgsm => fgsm(model, x_r, x_s, labels, cfg, seed),
        AttackMethod::Pgd | AttackMethod::Cw => {
            pgd_multimodal(model, x_r, x_s, labels, cfg, seed)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::ModelConfig;

    fn tiny_model(amr_count: usize) -> FusionModel {
        FusionModel::new(ModelConfig {
            num_classes: 3,
            dense_input: vec![2, 2, 2, 2],
            sparse_input: vec![2, 2, 3],
            dense_blocks: vec![vec![3, 2, 2, 2]],
            sparse_blocks: vec![vec![3, 2, 3]],
            amr_count,
            init_seed: 5,
        })
        .unwrap()
    }

    fn inputs(batch: usize, seed: u64) -> (Tensor, Tensor, Vec<usize>) {
        let mut rng = Rng::new(seed);
        let rn = batch * 16;
        let sn = batch * 12;
        let xr = Tensor::new(
            vec![batch, 2, 2, 2, 2],
            (0..rn).map(|_| rng.uniform()).collect(),
        )
        .unwrap();
        let xs = Tensor::new(
            vec![batch, 2, 2, 3],
            (0..sn).map(|_| rng.uniform_in(-1.0, 1.0)).collect(),
        )
        .unwrap();
        let labels = (0..batch).map(|_| rng.below(3)).collect();
        (xr, xs, labels)
    }

    #[test]
    fn cw_margin_matches_direct_arithmetic() {
        let mut tape = Tape::new();
        let z = tape
            .leaf_from(vec![1, 3], vec![2.0, 1.0, 0.5], false)
            .unwrap();
        let l = attack_loss(&mut tape, z, &[0], AttackMethod::Cw).unwrap();
        assert!((tape.value(l)[0] - (-1.0)).abs() < 1e-12);

        let mut tape = Tape::new();
        let z = tape.leaf_from(vec![1, 2], vec![0.5, 2.0], false).unwrap();
        let l = attack_loss(&mut tape, z, &[0], AttackMethod::Cw).unwrap();
        assert!((tape.value(l)[0] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn cw_batch_loss_is_mean_of_margins() {
        let mut tape = Tape::new();
        let z = tape
            .leaf_from(vec![2, 3], vec![2.0, 1.0, 0.5, 0.0, 3.0, -1.0], false)
            .unwrap();
        let l = attack_loss(&mut tape, z, &[0, 1], AttackMethod::Cw).unwrap();
        // margins: (1.0 - 2.0) = -1.0 and (0.0 - 3.0) = -3.0, mean -2.0
        assert!((tape.value(l)[0] - (-2.0)).abs() < 1e-12);
    }

    #[test]
    fn uniform_logits_cross_entropy_is_ln_n() {
        let mut tape = Tape::new();
        let z = tape.leaf(&Tensor::zeros(vec![4, 5]), false);
        let l = attack_loss(&mut tape, z, &[0, 1, 2, 3], AttackMethod::Pgd).unwrap();
        assert!((tape.value(l)[0] - 5.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn projection_clips_candidate_into_ball() {
        // x0 = 0.5, eps = 0.1, candidate 0.75 projects to 0.6
        let mut cur = vec![0.65];
        signed_step_project(&mut cur, &[1.0], &[0.5], 0.1, 0.1, None);
        assert_eq!(cur, vec![0.6]);
    }

    #[test]
    fn sign_step_matches_fgsm_examples() {
        // positive gradient moves up by eps
        let mut cur = vec![0.5];
        signed_step_project(&mut cur, &[0.3], &[0.5], 0.1, 0.1, None);
        assert_eq!(cur, vec![0.6]);
        // zero gradient leaves the entry exactly in place
        let mut cur = vec![0.5];
        signed_step_project(&mut cur, &[0.0], &[0.5], 0.1, 0.1, None);
        assert_eq!(cur, vec![0.5]);
    }

    #[test]
    fn zero_budget_returns_input_exactly() {
        let model = tiny_model(0);
        let (xr, xs, y) = inputs(3, 2);
        let mut cfg = AttackConfig::pgd(0.0, 0.0, 2.0 * UNIT, 5, ModalityMask::Both);
        cfg.random_start = true;
        let adv = pgd_multimodal(&model, &xr, &xs, &y, &cfg, 7).unwrap();
        assert_eq!(adv.x_r.data(), xr.data());
        assert_eq!(adv.x_s.data(), xs.data());
    }

    #[test]
    fn masked_modality_is_untouched_bitwise() {
        let model = tiny_model(0);
        let (xr, xs, y) = inputs(4, 3);
        let cfg = AttackConfig::pgd(
            8.0 * UNIT,
            8.0 * UNIT,
            2.0 * UNIT,
            4,
            ModalityMask::SparseOnly,
        );
        let adv = pgd_multimodal(&model, &xr, &xs, &y, &cfg, 11).unwrap();
        assert_eq!(adv.x_r.data(), xr.data());
        assert!(adv.delta_r.data().iter().all(|&v| v == 0.0));
        let (_, ds) = adv.delta_linf();
        assert!(ds > 0.0, "sparse modality should move");
    }

    #[test]
    fn budgets_and_clamps_hold() {
        let model = tiny_model(1);
        let (xr, xs, y) = inputs(4, 5);
        let cfg = AttackConfig::pgd(8.0 * UNIT, 4.0 * UNIT, 2.0 * UNIT, 6, ModalityMask::Both);
        let adv = pgd_multimodal(&model, &xr, &xs, &y, &cfg, 13).unwrap();
        let (dr, ds) = adv.delta_linf();
        assert!(dr <= 8.0 * UNIT + 1e-12);
        assert!(ds <= 4.0 * UNIT + 1e-12);
        assert!(adv.x_r.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn fixed_seed_attacks_are_deterministic() {
        let model = tiny_model(0);
        let (xr, xs, y) = inputs(3, 8);
        let cfg = AttackConfig::pgd(8.0 * UNIT, 8.0 * UNIT, 2.0 * UNIT, 5, ModalityMask::Both);
        let a = pgd_multimodal(&model, &xr, &xs, &y, &cfg, 21).unwrap();
        let b = pgd_multimodal(&model, &xr, &xs, &y, &cfg, 21).unwrap();
        assert_eq!(a.x_r.data(), b.x_r.data());
        assert_eq!(a.x_s.data(), b.x_s.data());
    }

    #[test]
    fn random_start_streams_are_batching_independent() {
        // Content-keyed streams: attacking samples one at a time must equal
        // attacking them as one batch.
        let model = tiny_model(0);
        let (xr, xs, y) = inputs(3, 9);
        let cfg = AttackConfig::pgd(8.0 * UNIT, 8.0 * UNIT, 2.0 * UNIT, 1, ModalityMask::Both);
        let whole = pgd_multimodal(&model, &xr, &xs, &y, &cfg, 31).unwrap();
        let per_r = 16;
        let per_s = 12;
        for b in 0..3 {
            let xr1 = Tensor::new(
                vec![1, 2, 2, 2, 2],
                xr.data()[b * per_r..(b + 1) * per_r].to_vec(),
            )
            .unwrap();
            let xs1 = Tensor::new(
                vec![1, 2, 2, 3],
                xs.data()[b * per_s..(b + 1) * per_s].to_vec(),
            )
            .unwrap();
            let one = pgd_multimodal(&model, &xr1, &xs1, &[y[b]], &cfg, 31).unwrap();
            assert_eq!(one.x_r.data(), &whole.x_r.data()[b * per_r..(b + 1) * per_r]);
            assert_eq!(one.x_s.data(), &whole.x_s.data()[b * per_s..(b + 1) * per_s]);
        }
    }

    #[test]
    fn fgsm_rejects_multi_step_config() {
        let mut cfg = AttackConfig::fgsm(8.0 * UNIT, 8.0 * UNIT, ModalityMask::Both);
        cfg.steps = 3;
        assert!(cfg.validate().is_err());
        let mut cfg = AttackConfig::fgsm(8.0 * UNIT, 8.0 * UNIT, ModalityMask::Both);
        cfg.random_start = true;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn loss_is_nondecreasing_on_a_linear_model() {
        // Zero-block branches plus the affine fusion head make the logits
        // linear in the inputs, so each projected sign step cannot lower the
        // convex cross-entropy objective.
        let model = FusionModel::new(ModelConfig {
            num_classes: 3,
            dense_input: vec![2, 2, 2, 2],
            sparse_input: vec![2, 2, 3],
            dense_blocks: vec![],
            sparse_blocks: vec![],
            amr_count: 0,
            init_seed: 3,
        })
        .unwrap();
        let (xr, xs, y) = inputs(6, 12);
        let mut prev = f64::NEG_INFINITY;
        for k in 1..=6 {
            let cfg = AttackConfig {
                random_start: false,
                ..AttackConfig::pgd(8.0 * UNIT, 8.0 * UNIT, 2.0 * UNIT, k, ModalityMask::Both)
            };
            let adv = pgd_multimodal(&model, &xr, &xs, &y, &cfg, 1).unwrap();
            let loss =
                attack_loss_value(&model, &adv.x_r, &adv.x_s, &y, AttackMethod::Pgd).unwrap();
            assert!(
                loss >= prev - 1e-12,
                "loss decreased at k={k}: {prev} -> {loss}"
            );
            prev = loss;
        }
    }
}
