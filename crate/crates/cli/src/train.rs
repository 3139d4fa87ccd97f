use std::path::PathBuf;

use clap::Args;
use oac_core::pipeline::{train_with, write_loss_csv, DataSetup, TrainConfig};

use crate::args::Setting;
use crate::{Failure, Outcome};

/// Resolved training configuration, written next to the checkpoint.
pub const TRAIN_FILE: &str = "train.txt";

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// `key = value` configuration file; unset keys keep their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Receives checkpoint/, loss.csv and train.txt.
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Run seed; overrides the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// ADAM learning rate [config default: 2e-4].
    #[arg(long)]
    pub lr: Option<f64>,
    /// Pairs per step [config default: 32].
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Passes over `steps_per_epoch` batches [config default: 50].
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Batches per epoch [config default: 40].
    #[arg(long)]
    pub steps_per_epoch: Option<usize>,
    /// Extra `KEY=VALUE` overrides, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub settings: Vec<Setting>,
}

fn resolve(a: &TrainArgs) -> Result<TrainConfig, Failure> {
    let mut cfg = match &a.config {
        Some(p) => TrainConfig::read(p).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?,
        None => TrainConfig::default(),
    };
    let mut set = |key: &str, value: String| -> Result<(), Failure> {
        match cfg.set(key, &value) {
            Ok(true) => Ok(()),
            Ok(false) => Err(Failure::Usage(format!("unknown configuration key `{key}`"))),
            Err(m) => Err(Failure::Usage(format!("{key}: {m}"))),
        }
    };
    if let Some(v) = a.seed {
        set("seed", v.to_string())?;
    }
    if let Some(v) = a.lr {
        set("learning_rate", v.to_string())?;
    }
    if let Some(v) = a.batch_size {
        set("batch_size", v.to_string())?;
    }
    if let Some(v) = a.epochs {
        set("epochs", v.to_string())?;
    }
    if let Some(v) = a.steps_per_epoch {
        set("steps_per_epoch", v.to_string())?;
    }
    for s in &a.settings {
        set(&s.key, s.value.clone())?;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(a: TrainArgs) -> Outcome {
    let cfg = resolve(&a)?;
    print!("{cfg}");
    println!("seed = {}", cfg.seed());
    let data = DataSetup::new(&cfg)?;
    std::fs::create_dir_all(&a.out_dir)?;
    std::fs::write(a.out_dir.join(TRAIN_FILE), cfg.to_kv())?;
    let total = cfg.total_steps();
    let every = (total / 20).max(1);
    let mut seen = Vec::with_capacity(total);
    let result = train_with(&cfg, &data, |step, loss| {
        seen.push(loss);
        if (step + 1) % every == 0 || step + 1 == total {
            eprintln!("step {}/{total} loss {loss:.6e}", step + 1);
        }
    });
    let loss_path = a.out_dir.join("loss.csv");
    let out = match result {
        Ok(out) => out,
        Err(e) => {
            // keep the curve that led up to the failure
            write_loss_csv(&loss_path, &seen)?;
            return Err(e.into());
        }
    };
    write_loss_csv(&loss_path, &out.losses)?;
    let ckpt = a.out_dir.join("checkpoint");
    out.model.save(&ckpt)?;
    std::fs::write(ckpt.join(TRAIN_FILE), cfg.to_kv())?;
    let v = out.validation;
    println!(
        "validation: {} pairs, mean TGD {:.6e}, identity TGD {:.6e}, ratio {:.4}",
        v.count,
        v.mean_tgd,
        v.identity_tgd,
        v.mean_tgd / v.identity_tgd
    );
    println!("wrote {}", ckpt.display());
    Ok(())
}
