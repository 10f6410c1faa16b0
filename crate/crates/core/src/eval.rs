//! Robustness evaluation: scenario accuracies, Avg, RI, and sweep curves.
//!
//! The protocol measures four accuracies per model: clean inputs, dense
//! modality attacked, sparse modality attacked, and both attacked. `Avg` is
//! the mean of the three attacked accuracies; `RI` compares a defense `m`
//! against an undefended baseline `n` as `(clean_m + avg_m) - (clean_n +
//! avg_n)`, so a defense that buys robustness by giving up clean accuracy is
//! penalized.
//!
//! Adversarial examples are regenerated for every model under test (adaptive
//! evaluation); nothing is reused across models. All accuracies are percent,
//! kept at full precision internally and rounded to two decimals only in
//! output files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::attacks::{run_attack, AttackConfig, ModalityMask, UNIT};
use crate::datagen::{stack_batch, Dataset};
use crate::nets::{argmax_rows, FusionModel};
use crate::{Error, Result};

/// Evaluation batch size; results do not depend on it because attack
/// randomness is keyed per sample.
const EVAL_BATCH: usize = 32;

/// One model/attack evaluation.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EvalReport {
    pub model: String,
    pub attack: String,
    pub acc_clean: f64,
    pub acc_xr: f64,
    pub acc_xs: f64,
    pub acc_xrs: f64,
    pub avg: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ri: Option<f64>,
}

impl EvalReport {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<EvalReport> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// `(xr + xs + xrs) / 3`.
pub fn avg_metric(xr: f64, xs: f64, xrs: f64) -> f64 {
    (xr + xs + xrs) / 3.0
}

/// `(clean_m + avg_m) - (clean_n + avg_n)`.
pub fn ri_metric(clean_m: f64, avg_m: f64, clean_n: f64, avg_n: f64) -> f64 {
    (clean_m + avg_m) - (clean_n + avg_n)
}

/// Percent of correctly classified samples, optionally under an attack
/// regenerated for this model. Prediction runs on the chosen forward path.
pub fn accuracy_with_path(
    model: &FusionModel,
    dataset: &Dataset,
    attack: Option<&AttackConfig>,
    seed: u64,
    reweighted: bool,
) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::Eval("cannot evaluate on an empty dataset".into()));
    }
    let n = dataset.len();
    let mut correct = 0usize;
    let mut start = 0usize;
    while start < n {
        let end = (start + EVAL_BATCH).min(n);
        let items: Vec<&crate::datagen::ModalPair> =
            dataset.samples[start..end].iter().collect();
        let (x_r, x_s, labels) = stack_batch(&items)?;
        let (x_r, x_s) = match attack {
            Some(cfg) => {
                let adv = run_attack(model, &x_r, &x_s, &labels, cfg, seed)?;
                (adv.x_r, adv.x_s)
            }
            None => (x_r, x_s),
        };
        let logits = model.logits_for(&x_r, &x_s, reweighted)?;
        correct += argmax_rows(&logits)
            .iter()
            .zip(&labels)
            .filter(|(p, y)| p == y)
            .count();
        start = end;
    }
    Ok(100.0 * correct as f64 / n as f64)
}

/// [`accuracy_with_path`] on the model's deployed path: reweighted whenever
/// the model carries reweighter modules, for clean and attacked inputs alike.
pub fn accuracy(
    model: &FusionModel,
    dataset: &Dataset,
    attack: Option<&AttackConfig>,
    seed: u64,
) -> Result<f64> {
    accuracy_with_path(model, dataset, attack, seed, model.uses_reweighted_path())
}

/// Options for assembling a full report.
#[derive(Debug, Clone)]
pub struct ScenarioOptions {
    /// Evaluate clean inputs on the plain path even when the model carries
    /// reweighters (ablation switch; default false).
    pub clean_plain_path: bool,
    pub seed: u64,
}

impl Default for ScenarioOptions {
    fn default() -> Self {
        ScenarioOptions {
            clean_plain_path: false,
            seed: 0,
        }
    }
}

/// Runs all four scenarios with `attack_template` (its mask is overridden
/// per scenario) and assembles the report. `baseline`, when given, is the
/// undefended model's `(clean, avg)` pair used for RI.
pub fn evaluate_scenarios(
    model: &FusionModel,
    model_name: &str,
    dataset: &Dataset,
    attack_template: &AttackConfig,
    baseline: Option<(f64, f64)>,
    opts: &ScenarioOptions,
) -> Result<EvalReport> {
    let deployed = model.uses_reweighted_path();
    let clean_path = if opts.clean_plain_path { false } else { deployed };
    let acc_clean = accuracy_with_path(model, dataset, None, opts.seed, clean_path)?;
    let scenario = |mask: ModalityMask| -> Result<f64> {
        let mut cfg = attack_template.clone();
        cfg.mask = mask;
        accuracy_with_path(model, dataset, Some(&cfg), opts.seed, deployed)
    };
    let acc_xr = scenario(ModalityMask::DenseOnly)?;
    let acc_xs = scenario(ModalityMask::SparseOnly)?;
    let acc_xrs = scenario(ModalityMask::Both)?;
    let avg = avg_metric(acc_xr, acc_xs, acc_xrs);
    let ri = baseline.map(|(clean_n, avg_n)| ri_metric(acc_clean, avg, clean_n, avg_n));
    Ok(EvalReport {
        model: model_name.to_string(),
        attack: attack_template.descriptor(),
        acc_clean,
        acc_xr,
        acc_xs,
        acc_xrs,
        avg,
        ri,
    })
}

/// Accuracy at each budget in `eps_numerators` (units of 1/255, ascending).
/// A zero budget reports clean accuracy exactly.
pub fn robustness_curve(
    model: &FusionModel,
    dataset: &Dataset,
    attack_template: &AttackConfig,
    eps_numerators: &[f64],
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    if eps_numerators.is_empty() {
        return Err(Error::Eval("epsilon list must not be empty".into()));
    }
    if eps_numerators.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Eval("epsilon list must be strictly ascending".into()));
    }
    if eps_numerators[0] < 0.0 {
        return Err(Error::Eval("epsilon must be nonnegative".into()));
    }
    let mut points = Vec::with_capacity(eps_numerators.len());
    for &num in eps_numerators {
        let acc = if num == 0.0 {
            accuracy(model, dataset, None, seed)?
        } else {
            let mut cfg = attack_template.clone();
            cfg.eps_r = num * UNIT;
            cfg.eps_s = num * UNIT;
            if cfg.method == crate::attacks::AttackMethod::Fgsm {
                cfg.alpha = num * UNIT;
            }
            accuracy(model, dataset, Some(&cfg), seed)?
        };
        points.push((num, acc));
    }
    Ok(points)
}

/// Writes `eps_numerator_over_255,accuracy_percent` rows.
pub fn write_curve_csv(points: &[(f64, f64)], path: &Path) -> Result<()> {
    let mut out = String::from("eps_numerator_over_255,accuracy_percent\n");
    for (eps, acc) in points {
        out.push_str(&format!("{},{:.2}\n", eps, acc));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Writes one row per report: `model,attack,clean,xr,xs,xrs,avg,ri`.
pub fn write_reports_csv(reports: &[EvalReport], path: &Path) -> Result<()> {
    let mut out = String::from("model,attack,clean,xr,xs,xrs,avg,ri\n");
    for r in reports {
        let ri = r.ri.map_or(String::new(), |v| format!("{:.2}", v));
        out.push_str(&format!(
            "{},{},{:.2},{:.2},{:.2},{:.2},{:.2},{}\n",
            r.model, r.attack, r.acc_clean, r.acc_xr, r.acc_xs, r.acc_xrs, r.avg, ri
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate, SynthSpec};
    use crate::nets::ModelConfig;

    fn tiny_setup() -> (FusionModel, Dataset) {
        let spec = SynthSpec {
            num_classes: 2,
            samples_per_class: 6,
            dense_shape: vec![2, 2, 2, 4],
            sparse_shape: vec![3, 4, 5],
            dense_snr: 1.0,
            sparse_snr: 2.0,
            dense_nuisance_std: 0.05,
            seed: 31,
        };
        let ds = generate(&spec).unwrap();
        let model = FusionModel::new(ModelConfig {
            num_classes: 2,
            dense_input: vec![2, 2, 2, 4],
            sparse_input: vec![3, 4, 5],
            dense_blocks: vec![vec![4, 2, 2, 2]],
            sparse_blocks: vec![vec![4, 2, 3]],
            amr_count: 0,
            init_seed: 32,
        })
        .unwrap();
        (model, ds)
    }

    #[test]
    fn avg_metric_reproduces_reported_rows() {
        assert!((avg_metric(68.54, 80.40, 66.52) - 71.82).abs() <= 0.005);
        assert!((avg_metric(6.39, 25.18, 1.66) - 11.08).abs() <= 0.005);
        assert_eq!(avg_metric(0.0, 0.0, 0.0), 0.0);
    }

    #[test]
    fn ri_metric_reproduces_reported_rows() {
        assert!((ri_metric(81.65, 71.82, 88.09, 4.69) - 60.69).abs() <= 0.01);
        assert!((ri_metric(43.89, 36.56, 62.37, 2.38) - 15.70).abs() <= 0.01);
        assert_eq!(ri_metric(50.0, 20.0, 50.0, 20.0), 0.0);
    }

    #[test]
    fn accuracy_counts_correct_predictions() {
        let (model, ds) = tiny_setup();
        let acc = accuracy(&model, &ds, None, 0).unwrap();
        let mut correct = 0;
        for s in &ds.samples {
            let mut rshape = vec![1];
            rshape.extend_from_slice(s.dense.shape());
            let mut sshape = vec![1];
            sshape.extend_from_slice(s.sparse.shape());
            let xr =
                crate::tensor::Tensor::new(rshape, s.dense.data().to_vec()).unwrap();
            let xs =
                crate::tensor::Tensor::new(sshape, s.sparse.data().to_vec()).unwrap();
            let logits = model.deployed_logits(&xr, &xs).unwrap();
            if argmax_rows(&logits)[0] == s.label {
                correct += 1;
            }
        }
        assert!((acc - 100.0 * correct as f64 / ds.len() as f64).abs() < 1e-12);
    }

    #[test]
    fn zero_budget_attack_equals_clean_accuracy() {
        let (model, ds) = tiny_setup();
        let clean = accuracy(&model, &ds, None, 5).unwrap();
        let cfg = AttackConfig::pgd(0.0, 0.0, 2.0 * UNIT, 3, ModalityMask::Both);
        let attacked = accuracy(&model, &ds, Some(&cfg), 5).unwrap();
        assert_eq!(clean, attacked);
    }

    #[test]
    fn accuracy_is_invariant_under_dataset_permutation() {
        let (model, ds) = tiny_setup();
        let mut permuted = ds.clone();
        permuted.samples.reverse();
        permuted.samples.swap(1, 7);
        let cfg = AttackConfig::pgd(8.0 * UNIT, 8.0 * UNIT, 2.0 * UNIT, 2, ModalityMask::Both);
        let a = accuracy(&model, &ds, Some(&cfg), 9).unwrap();
        let b = accuracy(&model, &permuted, Some(&cfg), 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let (model, ds) = tiny_setup();
        let empty = Dataset {
            spec: ds.spec.clone(),
            samples: Vec::new(),
        };
        assert!(accuracy(&model, &empty, None, 0).is_err());
    }

    #[test]
    fn report_round_trips_through_json() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.json");
        let report = EvalReport {
            model: "at-xrs".into(),
            attack: "pgd20-xrs-e8".into(),
            acc_clean: 61.42,
            acc_xr: 61.41,
            acc_xs: 40.41,
            acc_xrs: 40.32,
            avg: avg_metric(61.41, 40.41, 40.32),
            ri: Some(16.02),
        };
        report.write_json(&path).unwrap();
        let loaded = EvalReport::read_json(&path).unwrap();
        assert_eq!(report, loaded);
    }

    #[test]
    fn curve_has_one_point_per_epsilon_and_clean_at_zero() {
        let (model, ds) = tiny_setup();
        let template = AttackConfig::pgd(
            8.0 * UNIT,
            8.0 * UNIT,
            2.0 * UNIT,
            2,
            ModalityMask::Both,
        );
        let points = robustness_curve(&model, &ds, &template, &[0.0, 4.0, 8.0], 3).unwrap();
        assert_eq!(points.len(), 3);
        let clean = accuracy(&model, &ds, None, 3).unwrap();
        assert_eq!(points[0], (0.0, clean));
    }

    #[test]
    fn curve_rejects_bad_epsilon_lists() {
        let (model, ds) = tiny_setup();
        let template = AttackConfig::pgd(
            8.0 * UNIT,
            8.0 * UNIT,
            2.0 * UNIT,
            1,
            ModalityMask::Both,
        );
        assert!(robustness_curve(&model, &ds, &template, &[], 0).is_err());
        assert!(robustness_curve(&model, &ds, &template, &[4.0, 2.0], 0).is_err());
    }

    #[test]
    fn scenario_report_stores_exact_avg_of_its_accuracies() {
        let (model, ds) = tiny_setup();
        let template = AttackConfig::pgd(
            4.0 * UNIT,
            4.0 * UNIT,
            2.0 * UNIT,
            2,
            ModalityMask::Both,
        );
        let report = evaluate_scenarios(
            &model,
            "test",
            &ds,
            &template,
            Some((50.0, 10.0)),
            &ScenarioOptions::default(),
        )
        .unwrap();
        assert_eq!(
            report.avg,
            avg_metric(report.acc_xr, report.acc_xs, report.acc_xrs)
        );
        let expected_ri = ri_metric(report.acc_clean, report.avg, 50.0, 10.0);
        assert_eq!(report.ri, Some(expected_ri));
    }
}
