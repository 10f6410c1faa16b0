// Scratch harness for sizing the default experiment configs.

use mmrobust::attacks::{AttackConfig, ModalityMask, UNIT};
use mmrobust::datagen::{generate, split, SynthSpec};
use mmrobust::eval::{accuracy, avg_metric};
use mmrobust::nets::{FusionModel, ModelConfig};
use mmrobust::training::{train_adversarial, train_amr, train_standard, TrainConfig};
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let mode = args.get(1).map(|s| s.as_str()).unwrap_or("st");
    let seed: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0);
    let epochs: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(30);
    let spc: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(200);

    let envf = |k: &str, d: f64| -> f64 {
        std::env::var(k)
            .ok()
            .and_then(|v| v.parse().ok())
            .unwrap_or(d)
    };
    let mut spec = SynthSpec::default_with_seed(seed);
    spec.samples_per_class = spc;
    spec.dense_nuisance_std = envf("NUIS", spec.dense_nuisance_std);
    spec.dense_snr = envf("DSNR", spec.dense_snr);
    spec.sparse_snr = envf("SSNR", spec.sparse_snr);
    let ds = generate(&spec).unwrap();
    let (train, test) = split(&ds, 0.75, seed).unwrap();
    eprintln!("dataset: {} train, {} test", train.len(), test.len());

    let model_cfg = |s: usize| ModelConfig::default_with(s, seed.wrapping_add(1000));
    let mut tcfg = TrainConfig::default_with_seed(seed.wrapping_add(2000));
    tcfg.epochs = epochs;
    tcfg.lr0 = envf("LR", tcfg.lr0);
    tcfg.lambda = envf("LAMBDA", tcfg.lambda);
    tcfg.weight_decay = envf("WD", tcfg.weight_decay);
    tcfg.batch_size = envf("BS", tcfg.batch_size as f64) as usize;

    let eval_attack = AttackConfig::pgd(8.0 * UNIT, 8.0 * UNIT, 2.0 * UNIT, 20, ModalityMask::Both);

    let t0 = Instant::now();
    let (name, model) = match mode {
        "st" => {
            let mut m = FusionModel::new(model_cfg(0)).unwrap();
            let log = train_standard(&mut m, &train, &tcfg).unwrap();
            eprintln!("final train acc {:.2}", log.epochs.last().unwrap().train_acc);
            ("standard", m)
        }
        "at" => {
            let mut m = FusionModel::new(model_cfg(0)).unwrap();
            let log = train_adversarial(&mut m, &train, &tcfg, ModalityMask::Both).unwrap();
            eprintln!("final train acc {:.2}", log.epochs.last().unwrap().train_acc);
            ("at-xrs", m)
        }
        "amr" => {
            let mut m = FusionModel::new(model_cfg(1)).unwrap();
            let log = train_amr(&mut m, &train, &tcfg).unwrap();
            eprintln!("final train acc {:.2}", log.epochs.last().unwrap().train_acc);
            ("amr-s1", m)
        }
        other => panic!("unknown mode {other}"),
    };
    let train_time = t0.elapsed();

    let t1 = Instant::now();
    let clean = accuracy(&model, &test, None, seed).unwrap();
    let acc_for = |mask: ModalityMask| {
        let mut cfg = eval_attack.clone();
        cfg.mask = mask;
        accuracy(&model, &test, Some(&cfg), seed).unwrap()
    };
    let xr = acc_for(ModalityMask::DenseOnly);
    let xs = acc_for(ModalityMask::SparseOnly);
    let xrs = acc_for(ModalityMask::Both);
    let eval_time = t1.elapsed();

    println!(
        "{name} seed={seed} epochs={epochs} spc={spc}: clean={clean:.2} xr={xr:.2} xs={xs:.2} xrs={xrs:.2} avg={:.2} | train {:.1?} eval {:.1?}",
        avg_metric(xr, xs, xrs),
        train_time,
        eval_time
    );
    if let Some(k) = std::env::var_os("SHOW_WEIGHTS") {
        let _ = k;
        if model.amr_count() > 0 {
            for i in 0..model.amr_count() {
                let (wr, ws) = model.amr(i).mean_weights();
                println!("  amr{i}: mean w_r {wr:.4} mean w_s {ws:.4}");
            }
        }
    }
}
