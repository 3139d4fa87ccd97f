use std::path::{Path, PathBuf};

use clap::Args;
use oac_core::geometry::{bilinear_warp, make_regular_grid, tgd};
use oac_core::io::pnm;
use oac_core::pipeline::{dump_attention, DataSetup};
use oac_core::{Model, Mode, Tensor};

use crate::args::{format_theta, read_thetas};
use crate::eval::checkpoint_config;
use crate::{Failure, Outcome};

#[derive(Args, Debug)]
pub struct WarpArgs {
    /// PGM or PPM image to warp.
    #[arg(long, requires_all = ["theta_file", "out"], conflicts_with = "checkpoint")]
    pub image: Option<PathBuf>,
    /// One transform (6 affine or 2g² TPS values); output pixel `g`
    /// samples the image at `T(g)`.
    #[arg(long)]
    pub theta_file: Option<PathBuf>,
    /// Output image path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Checkpoint whose prediction on a held-out synthetic pair is shown.
    #[arg(long, requires_all = ["pair", "out_dir"])]
    pub checkpoint: Option<PathBuf>,
    /// Index of the held-out synthetic pair.
    #[arg(long)]
    pub pair: Option<usize>,
    /// Receives source, target, warped source, theta.txt and the attention
    /// map.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

fn extension(image: &Tensor) -> &'static str {
    if image.shape()[0] == 1 {
        "pgm"
    } else {
        "ppm"
    }
}

pub fn run(a: WarpArgs) -> Outcome {
    match (&a.image, &a.checkpoint) {
        (Some(image), None) => warp_file(image, a.theta_file.as_deref().unwrap(), a.out.as_deref().unwrap()),
        (None, Some(ckpt)) => warp_pair(ckpt, a.pair.unwrap(), a.out_dir.as_deref().unwrap()),
        _ => Err(Failure::Usage("give --image with --theta-file, or --checkpoint with --pair".into())),
    }
}

fn warp_file(image: &Path, theta_file: &Path, out: &Path) -> Outcome {
    let thetas = read_thetas(theta_file)?;
    let [theta] = thetas.as_slice() else {
        return Err(Failure::Usage(format!("{}: expected exactly one transform", theta_file.display())));
    };
    println!(
        "image = {}\ntheta = {}\nfamily = {}\nseed = none\nout = {}",
        image.display(),
        format_theta(theta),
        theta.family(),
        out.display()
    );
    let img = pnm::read(image)?;
    pnm::write(out, &bilinear_warp(&img, theta)?)?;
    Ok(())
}

fn warp_pair(ckpt: &Path, index: usize, out_dir: &Path) -> Outcome {
    let model = Model::load(ckpt).map_err(|e| Failure::Usage(format!("{}: {e}", ckpt.display())))?;
    let cfg = checkpoint_config(ckpt, &model)?;
    print!("{cfg}");
    println!("seed = {}\npair = {index}", cfg.seed());
    let data = DataSetup::new(&cfg)?;
    let pair = data.validation_pair(&cfg, index)?;
    let sample = data.featurize(&pair)?;
    let (theta, state) = model.predict(&sample.source, &sample.target, Mode::Eval)?;
    let grid = make_regular_grid(cfg.tgd_grid)?;
    let (err, _) = tgd(&theta, &pair.theta_gt, &grid)?;
    let (base, _) = tgd(&pair.theta_gt.family().identity(), &pair.theta_gt, &grid)?;
    std::fs::create_dir_all(out_dir)?;
    let ext = extension(&pair.source);
    pnm::write(out_dir.join(format!("source.{ext}")), &pair.source)?;
    pnm::write(out_dir.join(format!("target.{ext}")), &pair.target)?;
    // the source resampled by the prediction should line up with the target
    pnm::write(out_dir.join(format!("warped.{ext}")), &bilinear_warp(&pair.source, &theta)?)?;
    std::fs::write(
        out_dir.join("theta.txt"),
        format!("# predicted\n{}\n# ground truth\n{}\n", format_theta(&theta), format_theta(&pair.theta_gt)),
    )?;
    let (csv, _) = dump_attention(out_dir, index, &state.alpha)?;
    println!("predicted theta = {}", format_theta(&theta));
    println!("ground truth    = {}", format_theta(&pair.theta_gt));
    println!("TGD {err:.6e} (identity {base:.6e})");
    println!("attention written to {}", csv.display());
    Ok(())
}
