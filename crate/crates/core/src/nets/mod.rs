//! Two-stream branch networks, fusion head, and forward modes.
//!
//! The dense branch consumes `[B, C, T, H, W]` video-like inputs, the sparse
//! branch `[B, C, T, V]` vertex-sequence inputs. Each branch is a stack of
//! blocks; a block flattens the per-sample features, applies one affine map,
//! a relu, and reshapes to that block's declared output feature shape. Block
//! output shapes are fixed at construction and queryable, so reweighter
//! modules can bind parameter matrices of exactly matching shape.
//!
//! Reweighters attach to the last `S` blocks of both branches at once:
//! module `k` (0-based) binds block `last - k` of each branch. On the
//! reweighted path each bound block's output is multiplied by the module's
//! weight matrices before flowing onward, and the module emits an auxiliary
//! prediction from its pooled features. With all-ones weights the two paths
//! agree bit for bit, and with `S = 0` they are literally the same code path.

mod checkpoint;

pub use checkpoint::{load_checkpoint, save_checkpoint};

use serde::{Deserialize, Serialize};

use crate::amr::{global_pool, AmrModule, BoundAmr};
use crate::rng::Rng;
use crate::tensor::{Tape, Tensor, Var};
use crate::{Error, Result};

/// Affine layer `[B, in] -> [B, out]` with weight `[in, out]`, bias `[1, out]`.
#[derive(Debug, Clone)]
pub struct Affine {
    pub weight: Tensor,
    pub bias: Tensor,
}

#[derive(Debug, Clone, Copy)]
pub struct BoundAffine {
    pub weight: Var,
    pub bias: Var,
}

impl Affine {
    /// Weights drawn uniformly with the relu-preserving `sqrt(6)/sqrt(fan_in)`
    /// bound, biases zero.
    fn new(in_features: usize, out_features: usize, rng: &mut Rng) -> Self {
        let bound = (6.0 / in_features as f64).sqrt();
        let data: Vec<f64> = (0..in_features * out_features)
            .map(|_| rng.uniform_in(-bound, bound))
            .collect();
        Affine {
            weight: Tensor::new(vec![in_features, out_features], data).expect("sized above"),
            bias: Tensor::zeros(vec![1, out_features]),
        }
    }

    fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundAffine {
        BoundAffine {
            weight: tape.leaf(&self.weight, trainable),
            bias: tape.leaf(&self.bias, trainable),
        }
    }

    fn apply(tape: &mut Tape, bound: &BoundAffine, x: Var) -> Result<Var> {
        let h = tape.matmul(x, bound.weight)?;
        let shape = tape.shape(h).to_vec();
        let b = tape.broadcast(bound.bias, &shape)?;
        Ok(tape.add(h, b)?)
    }
}

/// Stack of flatten-affine-relu blocks over a fixed input feature shape.
///
/// `input_shape` and every block shape exclude the batch axis and are
/// channels-first. A branch may have zero blocks, in which case its features
/// are the raw input (useful for strictly linear models).
#[derive(Debug, Clone)]
pub struct BranchNet {
    input_shape: Vec<usize>,
    block_shapes: Vec<Vec<usize>>,
    blocks: Vec<Affine>,
}

impl BranchNet {
    pub fn new(input_shape: Vec<usize>, block_shapes: Vec<Vec<usize>>, rng: &mut Rng) -> Self {
        let mut blocks = Vec::with_capacity(block_shapes.len());
        let mut in_features: usize = input_shape.iter().product();
        for shape in &block_shapes {
            let out_features = shape.iter().product();
            blocks.push(Affine::new(in_features, out_features, rng));
            in_features = out_features;
        }
        BranchNet {
            input_shape,
            block_shapes,
            blocks,
        }
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    /// Declared output feature shape of every block, in order.
    pub fn block_output_shapes(&self) -> &[Vec<usize>] {
        &self.block_shapes
    }

    /// Feature shape produced by the final block (the input shape when the
    /// branch has no blocks).
    pub fn final_shape(&self) -> &[usize] {
        self.block_shapes.last().map_or(&self.input_shape, |s| s)
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    fn apply_block(
        &self,
        tape: &mut Tape,
        bound: &BoundAffine,
        index: usize,
        x: Var,
        batch: usize,
    ) -> Result<Var> {
        let flat_in: usize = tape.shape(x)[1..].iter().product();
        let flat = tape.reshape(x, &[batch, flat_in])?;
        let h = Affine::apply(tape, bound, flat)?;
        let r = tape.relu(h)?;
        let mut shaped = vec![batch];
        shaped.extend_from_slice(&self.block_shapes[index]);
        Ok(tape.reshape(r, &shaped)?)
    }
}

/// Full model description, serialized into checkpoints.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ModelConfig {
    pub num_classes: usize,
    /// Dense branch input `[C, T, H, W]`.
    pub dense_input: Vec<usize>,
    /// Sparse branch input `[C, T, V]`.
    pub sparse_input: Vec<usize>,
    /// Per-block output feature shapes of the dense branch.
    pub dense_blocks: Vec<Vec<usize>>,
    /// Per-block output feature shapes of the sparse branch.
    pub sparse_blocks: Vec<Vec<usize>>,
    /// Number of reweighter modules bound to the trailing blocks.
    pub amr_count: usize,
    pub init_seed: u64,
}

impl ModelConfig {
    /// Desk-scale default: three blocks per branch, features `[8,4,4,4]` and
    /// `[8,4,5]`, four classes.
    pub fn default_with(amr_count: usize, init_seed: u64) -> Self {
        ModelConfig {
            num_classes: 4,
            dense_input: vec![3, 4, 8, 8],
            sparse_input: vec![3, 4, 5],
            dense_blocks: vec![vec![8, 4, 4, 4]; 3],
            sparse_blocks: vec![vec![8, 4, 5]; 3],
            amr_count,
            init_seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::Model(format!(
                "need at least 2 classes, got {}",
                self.num_classes
            )));
        }
        if self.dense_input.len() != 4 {
            return Err(Error::Model(format!(
                "dense input must be [C,T,H,W], got {:?}",
                self.dense_input
            )));
        }
        if self.sparse_input.len() != 3 {
            return Err(Error::Model(format!(
                "sparse input must be [C,T,V], got {:?}",
                self.sparse_input
            )));
        }
        for s in &self.dense_blocks {
            if s.len() != 4 || s.iter().any(|&d| d == 0) {
                return Err(Error::Model(format!("bad dense block shape {s:?}")));
            }
        }
        for s in &self.sparse_blocks {
            if s.len() != 3 || s.iter().any(|&d| d == 0) {
                return Err(Error::Model(format!("bad sparse block shape {s:?}")));
            }
        }
        let max_s = self.dense_blocks.len().min(self.sparse_blocks.len());
        if self.amr_count > max_s {
            return Err(Error::Model(format!(
                "amr_count {} exceeds available blocks ({} dense, {} sparse)",
                self.amr_count,
                self.dense_blocks.len(),
                self.sparse_blocks.len()
            )));
        }
        Ok(())
    }
}

/// Two branches, a late-fusion head, and `S` reweighter modules.
pub struct FusionModel {
    config: ModelConfig,
    branch_r: BranchNet,
    branch_s: BranchNet,
    fusion: Affine,
    amrs: Vec<AmrModule>,
}

/// Tape handles for every parameter of a model, in parameter order.
pub struct BoundModel {
    blocks_r: Vec<BoundAffine>,
    blocks_s: Vec<BoundAffine>,
    fusion: BoundAffine,
    amrs: Vec<BoundAmr>,
    /// Flat view aligned with [`FusionModel::params`].
    pub vars: Vec<Var>,
}

/// Output of one forward pass.
pub struct ForwardPass {
    /// Fusion-head logits `[B, N]`.
    pub logits: Var,
    /// Auxiliary predictions, one per reweighter, in module order. Empty on
    /// the plain path.
    pub aux: Vec<Var>,
}

impl FusionModel {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = Rng::derive(config.init_seed, 0x6d6f64656c, 0); // "model"
        let branch_r = BranchNet::new(
            config.dense_input.clone(),
            config.dense_blocks.clone(),
            &mut rng,
        );
        let branch_s = BranchNet::new(
            config.sparse_input.clone(),
            config.sparse_blocks.clone(),
            &mut rng,
        );
        let fused_channels = branch_r.final_shape()[0] + branch_s.final_shape()[0];
        let fusion = Affine::new(fused_channels, config.num_classes, &mut rng);
        let mut amrs = Vec::with_capacity(config.amr_count);
        for k in 0..config.amr_count {
            let r_shape = &config.dense_blocks[config.dense_blocks.len() - 1 - k];
            let s_shape = &config.sparse_blocks[config.sparse_blocks.len() - 1 - k];
            amrs.push(AmrModule::new(r_shape, s_shape, config.num_classes));
        }
        Ok(FusionModel {
            config,
            branch_r,
            branch_s,
            fusion,
            amrs,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn branch_r(&self) -> &BranchNet {
        &self.branch_r
    }

    pub fn branch_s(&self) -> &BranchNet {
        &self.branch_s
    }

    pub fn amr_count(&self) -> usize {
        self.amrs.len()
    }

    pub fn amr(&self, k: usize) -> &AmrModule {
        &self.amrs[k]
    }

    pub fn num_classes(&self) -> usize {
        self.config.num_classes
    }

    /// Whether the deployed prediction path applies reweighting.
    pub fn uses_reweighted_path(&self) -> bool {
        !self.amrs.is_empty()
    }

    /// All trainable parameters as `(name, tensor)`, in the fixed order used
    /// by checkpoints, optimizers, and [`FusionModel::bind`].
    pub fn params(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (i, b) in self.branch_r.blocks.iter().enumerate() {
            out.push((format!("branch_r.block{i}.weight"), &b.weight));
            out.push((format!("branch_r.block{i}.bias"), &b.bias));
        }
        for (i, b) in self.branch_s.blocks.iter().enumerate() {
            out.push((format!("branch_s.block{i}.weight"), &b.weight));
            out.push((format!("branch_s.block{i}.bias"), &b.bias));
        }
        out.push(("fusion.weight".into(), &self.fusion.weight));
        out.push(("fusion.bias".into(), &self.fusion.bias));
        for (k, amr) in self.amrs.iter().enumerate() {
            out.push((format!("amr{k}.w_r"), &amr.w_r));
            out.push((format!("amr{k}.w_s"), &amr.w_s));
            out.push((format!("amr{k}.aux_weight"), &amr.aux_weight));
            out.push((format!("amr{k}.aux_bias"), &amr.aux_bias));
        }
        out
    }

    /// Mutable parameter tensors in the same order as [`FusionModel::params`].
    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = Vec::new();
        for b in &mut self.branch_r.blocks {
            out.push(&mut b.weight);
            out.push(&mut b.bias);
        }
        for b in &mut self.branch_s.blocks {
            out.push(&mut b.weight);
            out.push(&mut b.bias);
        }
        out.push(&mut self.fusion.weight);
        out.push(&mut self.fusion.bias);
        for amr in &mut self.amrs {
            out.push(&mut amr.w_r);
            out.push(&mut amr.w_s);
            out.push(&mut amr.aux_weight);
            out.push(&mut amr.aux_bias);
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|(_, t)| t.numel()).sum()
    }

    /// Creates tape leaves for every parameter. With `trainable` false the
    /// leaves receive no gradients, which keeps attack passes cheap.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundModel {
        let mut vars = Vec::new();
        let blocks_r: Vec<BoundAffine> = self
            .branch_r
            .blocks
            .iter()
            .map(|b| b.bind(tape, trainable))
            .collect();
        for b in &blocks_r {
            vars.push(b.weight);
            vars.push(b.bias);
        }
        let blocks_s: Vec<BoundAffine> = self
            .branch_s
            .blocks
            .iter()
            .map(|b| b.bind(tape, trainable))
            .collect();
        for b in &blocks_s {
            vars.push(b.weight);
            vars.push(b.bias);
        }
        let fusion = self.fusion.bind(tape, trainable);
        vars.push(fusion.weight);
        vars.push(fusion.bias);
        let amrs: Vec<BoundAmr> = self.amrs.iter().map(|a| a.bind(tape, trainable)).collect();
        for a in &amrs {
            vars.push(a.w_r);
            vars.push(a.w_s);
            vars.push(a.aux_weight);
            vars.push(a.aux_bias);
        }
        BoundModel {
            blocks_r,
            blocks_s,
            fusion,
            amrs,
            vars,
        }
    }

    fn check_inputs(&self, tape: &Tape, x_r: Var, x_s: Var) -> Result<usize> {
        let sr = tape.shape(x_r);
        let ss = tape.shape(x_s);
        let ok_r = sr.len() == 5 && sr[1..] == *self.branch_r.input_shape();
        let ok_s = ss.len() == 4 && ss[1..] == *self.branch_s.input_shape();
        if !ok_r || !ok_s || sr[0] != ss[0] || sr[0] == 0 {
            return Err(Error::Model(format!(
                "input shapes {:?} / {:?} do not match branch contracts [B,{:?}] / [B,{:?}]",
                sr,
                ss,
                self.branch_r.input_shape(),
                self.branch_s.input_shape()
            )));
        }
        Ok(sr[0])
    }

    /// Forward pass over already-bound parameters. `reweighted` selects the
    /// path through the reweighter modules.
    pub fn forward_bound(
        &self,
        tape: &mut Tape,
        bound: &BoundModel,
        x_r: Var,
        x_s: Var,
        reweighted: bool,
    ) -> Result<ForwardPass> {
        let batch = self.check_inputs(tape, x_r, x_s)?;
        let s = self.amrs.len();
        let len_r = self.branch_r.num_blocks();
        let len_s = self.branch_s.num_blocks();
        let pre_r = len_r - s;
        let pre_s = len_s - s;

        let mut fr = x_r;
        for i in 0..pre_r {
            fr = self
                .branch_r
                .apply_block(tape, &bound.blocks_r[i], i, fr, batch)?;
        }
        let mut fs = x_s;
        for i in 0..pre_s {
            fs = self
                .branch_s
                .apply_block(tape, &bound.blocks_s[i], i, fs, batch)?;
        }

        let mut aux: Vec<Option<Var>> = vec![None; s];
        for j in 0..s {
            fr = self
                .branch_r
                .apply_block(tape, &bound.blocks_r[pre_r + j], pre_r + j, fr, batch)?;
            fs = self
                .branch_s
                .apply_block(tape, &bound.blocks_s[pre_s + j], pre_s + j, fs, batch)?;
            if reweighted {
                // module k counts backwards from the last block
                let k = s - 1 - j;
                let (nr, ns) = AmrModule::reweight(tape, &bound.amrs[k], fr, fs)?;
                fr = nr;
                fs = ns;
                let pooled = AmrModule::pool_and_classify(tape, &bound.amrs[k], fr, fs)?;
                aux[k] = Some(pooled.y_star);
            }
        }

        let z_r = global_pool(tape, fr)?;
        let z_s = global_pool(tape, fs)?;
        let z = tape.concat_along_axis(&[z_r, z_s], 1)?;
        let logits = Affine::apply(tape, &bound.fusion, z)?;
        let aux = if reweighted {
            aux.into_iter().map(|v| v.expect("filled above")).collect()
        } else {
            Vec::new()
        };
        Ok(ForwardPass { logits, aux })
    }

    /// Plain path: reweighter weights and auxiliary heads are not applied.
    pub fn forward_plain(
        &self,
        tape: &mut Tape,
        bound: &BoundModel,
        x_r: Var,
        x_s: Var,
    ) -> Result<ForwardPass> {
        self.forward_bound(tape, bound, x_r, x_s, false)
    }

    /// Reweighted path: features of each bound block are multiplied by the
    /// module's weight matrices before flowing onward, and each module emits
    /// its auxiliary prediction.
    pub fn forward_reweighted(
        &self,
        tape: &mut Tape,
        bound: &BoundModel,
        x_r: Var,
        x_s: Var,
    ) -> Result<ForwardPass> {
        self.forward_bound(tape, bound, x_r, x_s, true)
    }

    /// One-shot logits on a fresh tape, without gradients.
    pub fn logits_for(&self, x_r: &Tensor, x_s: &Tensor, reweighted: bool) -> Result<Tensor> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, false);
        let vr = tape.leaf(x_r, false);
        let vs = tape.leaf(x_s, false);
        let pass = self.forward_bound(&mut tape, &bound, vr, vs, reweighted)?;
        Ok(tape.to_tensor(pass.logits))
    }

    /// Logits on the deployed path (reweighted when the model has modules).
    pub fn deployed_logits(&self, x_r: &Tensor, x_s: &Tensor) -> Result<Tensor> {
        self.logits_for(x_r, x_s, self.uses_reweighted_path())
    }

    /// Runtime feature shapes at every block of both branches for a given
    /// batch size, as actually produced on a tape.
    pub fn runtime_block_shapes(
        &self,
        batch: usize,
    ) -> Result<(Vec<Vec<usize>>, Vec<Vec<usize>>)> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, false);
        let mut rshape = vec![batch];
        rshape.extend_from_slice(self.branch_r.input_shape());
        let mut sshape = vec![batch];
        sshape.extend_from_slice(self.branch_s.input_shape());
        let vr = tape.leaf(&Tensor::zeros(rshape), false);
        let vs = tape.leaf(&Tensor::zeros(sshape), false);
        let mut fr = vr;
        let mut out_r = Vec::new();
        for i in 0..self.branch_r.num_blocks() {
            fr = self
                .branch_r
                .apply_block(&mut tape, &bound.blocks_r[i], i, fr, batch)?;
            out_r.push(tape.shape(fr).to_vec());
        }
        let mut fs = vs;
        let mut out_s = Vec::new();
        for i in 0..self.branch_s.num_blocks() {
            fs = self
                .branch_s
                .apply_block(&mut tape, &bound.blocks_s[i], i, fs, batch)?;
            out_s.push(tape.shape(fs).to_vec());
        }
        Ok((out_r, out_s))
    }
}

/// Row argmax with ties broken toward the lowest class index.
pub fn argmax_rows(logits: &Tensor) -> Vec<usize> {
    let n = logits.shape()[1];
    logits
        .data()
        .chunks(n)
        .map(|row| {
            let mut best = 0usize;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}
