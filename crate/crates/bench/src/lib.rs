//! Fixtures shared by the benchmarks.

use oac_core::correlation::{correlation_map, normalize_correlation, CorrelationMap, OacKernelBank};
use oac_core::rng::seeded;
use oac_core::tensor::l2_normalize_channels;
use oac_core::Tensor;

/// Grid sizes benchmarked, up to the full-size 15×15 grid with 128 kernels.
pub const OAC_SIZES: [(usize, usize, usize); 3] = [(4, 4, 2), (8, 8, 16), (15, 15, 128)];

/// Normalised correlation of two random unit feature maps and a random
/// bank, reproducible from `seed`.
pub fn oac_instance(h: usize, w: usize, n: usize, seed: u64) -> (CorrelationMap, OacKernelBank) {
    let mut rng = seeded(seed);
    let mut feats = || l2_normalize_channels(&Tensor::uniform(&[16, h, w], -1.0, 1.0, &mut rng), 1e-12).unwrap();
    let (a, b) = (feats(), feats());
    let c = normalize_correlation(&correlation_map(&a, &b).unwrap(), 1e-12).unwrap();
    (c, OacKernelBank::init(n, h, w, true, &mut rng))
}

/// Input, weight and upstream gradient for a `c_in → c_out` convolution
/// with a `k × k` kernel on an `h × w` map.
pub fn conv_instance(c_in: usize, c_out: usize, k: usize, h: usize, w: usize, seed: u64) -> (Tensor, Tensor, Tensor) {
    let mut rng = seeded(seed);
    let x = Tensor::uniform(&[c_in, h, w], -1.0, 1.0, &mut rng);
    let weight = Tensor::uniform(&[c_out, c_in, k, k], -0.1, 0.1, &mut rng);
    let up = Tensor::uniform(&[c_out, h + 1 - k, w + 1 - k], -1.0, 1.0, &mut rng);
    (x, weight, up)
}
