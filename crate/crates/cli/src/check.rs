use std::time::Instant;

use oac_core::correlation::{
    correlation_map, count_multiplications, normalize_correlation, oac_backward, oac_backward_reordered,
    oac_forward_direct, oac_forward_direct_counted, oac_forward_reordered, oac_forward_reordered_counted,
    CorrelationMap, OacKernelBank, OacPath,
};
use oac_core::network::CORRELATION_EPS;
use oac_core::rng::seeded;
use oac_core::tensor::{l2_normalize_channels, MulCount, Tensor};
use rand::Rng;

use crate::args::Dims;
use crate::{Failure, Outcome};

const FORWARD_TOL: f64 = 1e-10;
const GRAD_TOL: f64 = 1e-8;
const FEATURE_DIM: usize = 4;

fn instance(d: Dims, rng: &mut impl Rng) -> Result<(CorrelationMap, OacKernelBank), Failure> {
    let mut feats = || l2_normalize_channels(&Tensor::uniform(&[FEATURE_DIM, d.height, d.width], -1.0, 1.0, rng), 1e-12);
    let (a, b) = (feats()?, feats()?);
    let c = normalize_correlation(&correlation_map(&a, &b)?, CORRELATION_EPS)?;
    let mut bank = OacKernelBank::init(d.kernels, d.height, d.width, true, rng);
    if let Some(bias) = bank.bias.as_mut() {
        bias.value = Tensor::uniform(&[d.kernels], -0.3, 0.3, rng);
    }
    Ok((c, bank))
}

/// Same bank with every kernel's offset sheet rotated by 180°, i.e. the
/// offset sign flipped.
fn mirrored(bank: &OacKernelBank) -> OacKernelBank {
    let mut out = bank.clone();
    let (h, w) = (bank.height() as isize, bank.width() as isize);
    for n in 0..bank.kernels() {
        for s in 1 - h..h {
            for t in 1 - w..w {
                out.set_weight(n, s, t, bank.weight(n, -s, -t));
            }
        }
    }
    out
}

pub fn equivalence(dims: Dims, trials: usize, seed: u64, corrupt: bool) -> Outcome {
    println!("dims = {dims}\ntrials = {trials}\nfeature_dim = {FEATURE_DIM}\nseed = {seed}");
    if corrupt {
        println!("corrupt_layout = true");
    }
    let mut rng = seeded(seed);
    let (mut fwd, mut grad) = (0.0f64, 0.0f64);
    for _ in 0..trials {
        let (c, bank) = instance(dims, &mut rng)?;
        let other = if corrupt { mirrored(&bank) } else { bank.clone() };
        let a = oac_forward_direct(&c, &bank)?;
        let b = oac_forward_reordered(&c, &other)?;
        fwd = fwd.max(a.values.max_abs_diff(&b.values));
        let up = Tensor::uniform(a.values.shape(), -1.0, 1.0, &mut rng);
        let ga = oac_backward(&c, &bank, &a, &up, false)?;
        let gb = oac_backward_reordered(&c, &other, &b, &up, false)?;
        grad = grad.max(ga.weights.max_abs_diff(&gb.weights));
    }
    println!("max output deviation = {fwd:e} (tolerance {FORWARD_TOL:e})");
    println!("max weight-gradient deviation = {grad:e} (tolerance {GRAD_TOL:e})");
    if fwd <= FORWARD_TOL && grad <= GRAD_TOL {
        println!("equivalent");
        Ok(())
    } else {
        Err(Failure::Numeric("direct and reordered OAC paths disagree".into()))
    }
}

fn median_ms(mut times: Vec<f64>) -> f64 {
    times.sort_by(f64::total_cmp);
    times[times.len() / 2]
}

pub fn bench(dims: Vec<Dims>, repeats: usize, seed: u64) -> Outcome {
    let dims = if dims.is_empty() {
        vec![Dims {
            height: 15,
            width: 15,
            kernels: 128,
        }]
    } else {
        dims
    };
    let repeats = repeats.max(1);
    let list: Vec<String> = dims.iter().map(|d| d.to_string()).collect();
    println!("dims = {}\nrepeats = {repeats}\nseed = {seed}", list.join(" "));
    println!("dims,path,formula,instrumented,median_ms");
    let mut rng = seeded(seed);
    let mut mismatch = false;
    for d in dims {
        let (c, bank) = instance(d, &mut rng)?;
        let (h, w, n) = (d.height as u64, d.width as u64, d.kernels as u64);
        let mut counts = [0u64; 2];
        for (slot, path) in [OacPath::Direct, OacPath::Reordered].into_iter().enumerate() {
            let mut times = Vec::with_capacity(repeats);
            for _ in 0..repeats {
                let mut count = MulCount::default();
                let start = Instant::now();
                match path {
                    OacPath::Direct => oac_forward_direct_counted(&c, &bank, &mut count)?,
                    OacPath::Reordered => oac_forward_reordered_counted(&c, &bank, &mut count)?,
                };
                times.push(start.elapsed().as_secs_f64() * 1e3);
                counts[slot] = count.0;
            }
            let formula = count_multiplications(h, w, n, path);
            mismatch |= formula != counts[slot];
            println!("{d},{path},{formula},{},{:.3}", counts[slot], median_ms(times));
        }
        println!("{d} reordered/direct multiplies = {:.3}", counts[1] as f64 / counts[0] as f64);
    }
    if mismatch {
        return Err(Failure::Numeric("instrumented counts differ from the closed form".into()));
    }
    Ok(())
}
