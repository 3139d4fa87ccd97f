//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit status if
//! any criterion fails. Tolerances and limits are pinned below.

use std::path::Path;
use std::time::{Duration, Instant};

use oac_core::correlation::{
    correlation_map, count_multiplications, normalize_correlation, oac_backward, oac_backward_reordered,
    oac_forward_direct, oac_forward_direct_counted, oac_forward_reordered, oac_forward_reordered_counted,
    reorder_by_offset, CorrelationMap, OacKernelBank, OacPath,
};
use oac_core::geometry::{
    make_regular_grid, pck, sample_random_transform, tgd, AffineParams, ImageFrame, PointMap, TpsBasis, TpsParams,
    TransformFamily, TransformParams,
};
use oac_core::network::{AttentionHead, EmbeddingKind, Linear, Model, ModelConfig, PointwiseBlock};
use oac_core::pipeline::{synthetic_keypoints, train, write_loss_csv, CorpusSource, DataSetup, TrainConfig};
use oac_core::rng::seeded;
use oac_core::tensor::gradcheck::{grad_check, grad_check_at, GradCheckReport, GRAD_TOLERANCE};
use oac_core::tensor::{
    conv2d, conv2d_backward, l2_normalize_channels, spatial_softmax, spatial_softmax_backward, BatchNorm, Mode,
    MulCount, Tensor,
};
use rand::Rng;

const EQUIV_INSTANCES: usize = 500;
const EQUIV_FORWARD_TOL: f64 = 1e-10;
const EQUIV_GRAD_TOL: f64 = 1e-8;
const EQUIV_LIMIT: Duration = Duration::from_secs(30);
const COUNT_LIMIT: Duration = Duration::from_secs(10);
const GRAD_LIMIT: Duration = Duration::from_secs(120);
const ATTENTION_SUM_TOL: f64 = 1e-12;
const TGD_TOL: f64 = 1e-12;
const TPS_TOL: f64 = 1e-10;
const DESK_SEEDS: [u64; 3] = [0, 1, 2];
const DESK_STEPS: usize = 2000;
const DESK_BATCH: usize = 16;
const DESK_LR: f64 = 2e-4;
const DESK_RATIO: f64 = 0.2;
const DESK_LIMIT: Duration = Duration::from_secs(300);
const PCK_ALPHAS: [f64; 3] = [0.05, 0.1, 0.15];

type Outcome = (bool, String);

fn secs(d: Duration) -> String {
    format!("{:.1} s", d.as_secs_f64())
}

fn unit_features(d: usize, h: usize, w: usize, rng: &mut impl Rng) -> Tensor {
    l2_normalize_channels(&Tensor::uniform(&[d, h, w], -1.0, 1.0, rng), 1e-12).unwrap()
}

fn random_correlation(d: usize, h: usize, w: usize, rng: &mut impl Rng) -> CorrelationMap {
    let (a, b) = (unit_features(d, h, w, rng), unit_features(d, h, w, rng));
    normalize_correlation(&correlation_map(&a, &b).unwrap(), 1e-12).unwrap()
}

fn random_bank(n: usize, h: usize, w: usize, rng: &mut impl Rng) -> OacKernelBank {
    let mut bank = OacKernelBank::init(n, h, w, true, rng);
    if let Some(b) = bank.bias.as_mut() {
        // push some pre-activations below zero so the ReLU mask matters
        b.value = Tensor::uniform(&[n], -0.3, 0.3, rng);
    }
    bank
}

fn oac_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = seeded(101);
    let (mut fwd, mut grad) = (0.0f64, 0.0f64);
    for _ in 0..EQUIV_INSTANCES {
        let (h, w, n) = (rng.random_range(2..=6), rng.random_range(2..=6), rng.random_range(1..=4));
        let d = rng.random_range(1..=4);
        let c = random_correlation(d, h, w, &mut rng);
        let bank = random_bank(n, h, w, &mut rng);
        let a = oac_forward_direct(&c, &bank).unwrap();
        let b = oac_forward_reordered(&c, &bank).unwrap();
        fwd = fwd.max(a.values.max_abs_diff(&b.values));
        let up = Tensor::uniform(&[n, h, w], -1.0, 1.0, &mut rng);
        let ga = oac_backward(&c, &bank, &a, &up, false).unwrap();
        let gb = oac_backward_reordered(&c, &bank, &b, &up, false).unwrap();
        grad = grad.max(ga.weights.max_abs_diff(&gb.weights));
        grad = grad.max(ga.bias.unwrap().max_abs_diff(&gb.bias.unwrap()));
    }
    let t = start.elapsed();
    let pass = fwd <= EQUIV_FORWARD_TOL && grad <= EQUIV_GRAD_TOL && t < EQUIV_LIMIT;
    (
        pass,
        format!(
            "{EQUIV_INSTANCES} instances, max output diff {fwd:.1e} (tol {EQUIV_FORWARD_TOL:e}), max weight-gradient diff \
             {grad:.1e} (tol {EQUIV_GRAD_TOL:e}), {} (limit {})",
            secs(t),
            secs(EQUIV_LIMIT)
        ),
    )
}

fn multiply_counts() -> Outcome {
    let start = Instant::now();
    let mut rng = seeded(102);
    let mut pass = true;
    let mut notes = Vec::new();
    for (h, w, n) in [(4, 4, 2), (8, 8, 16), (15, 15, 128)] {
        let c = random_correlation(4, h, w, &mut rng);
        let bank = random_bank(n, h, w, &mut rng);
        let (mut direct, mut reordered) = (MulCount::default(), MulCount::default());
        oac_forward_direct_counted(&c, &bank, &mut direct).unwrap();
        oac_forward_reordered_counted(&c, &bank, &mut reordered).unwrap();
        let (h, w, n) = (h as u64, w as u64, n as u64);
        let want = (
            count_multiplications(h, w, n, OacPath::Direct),
            count_multiplications(h, w, n, OacPath::Reordered),
        );
        // independent expansion of the closed forms
        let hand = (n * h * h * w * w, n * (2 * h * h - h) * (2 * w * w - w));
        pass &= direct.0 == want.0 && reordered.0 == want.1 && want == hand;
        notes.push(format!("({h},{w},{n}) {} / {}", direct.0, reordered.0));
        if (h, w, n) == (15, 15, 128) {
            pass &= direct.0 == 6_480_000 && reordered.0 == 24_220_800;
            notes.push(format!("ratio {:.3}", reordered.0 as f64 / direct.0 as f64));
        }
    }
    let t = start.elapsed();
    pass &= t < COUNT_LIMIT;
    (pass, format!("direct / reordered: {}, {} (limit {})", notes.join(", "), secs(t), secs(COUNT_LIMIT)))
}

/// `Σ r ⊙ y`, the scalar used to probe every backward pass.
fn probe(r: &Tensor, y: &Tensor) -> f64 {
    r.data().iter().zip(y.data()).map(|(a, b)| a * b).sum()
}

fn with(x: &Tensor, v: &[f64]) -> Tensor {
    Tensor::new(x.shape().to_vec(), v.to_vec()).unwrap()
}

struct Checks(Vec<(String, GradCheckReport)>);

impl Checks {
    fn add(&mut self, name: &str, report: GradCheckReport) {
        self.0.push((name.to_string(), report));
    }

    fn failures(&self) -> Vec<String> {
        self.0
            .iter()
            .filter(|(_, r)| !r.passed)
            .map(|(n, r)| format!("{n} ({:.1e})", r.max_rel_error))
            .collect()
    }

    fn worst(&self) -> f64 {
        self.0.iter().map(|(_, r)| r.max_rel_error).fold(0.0, f64::max)
    }
}

fn check_conv(out: &mut Checks, rng: &mut impl Rng) {
    let x = Tensor::uniform(&[2, 5, 6], -1.0, 1.0, rng);
    let k = Tensor::uniform(&[3, 2, 3, 3], -1.0, 1.0, rng);
    let b = Tensor::uniform(&[3], -1.0, 1.0, rng);
    let r = Tensor::uniform(&[3, 5, 6], -1.0, 1.0, rng);
    let g = conv2d_backward(&x, &k, 1, &r, true).unwrap();
    let f = |x: &Tensor, k: &Tensor, b: &Tensor| probe(&r, &conv2d(x, k, Some(b), 1).unwrap());
    out.add("conv input", grad_check(|v| f(&with(&x, v), &k, &b), x.data(), g.input.unwrap().data(), GRAD_TOLERANCE));
    out.add("conv weight", grad_check(|v| f(&x, &with(&k, v), &b), k.data(), g.weights.data(), GRAD_TOLERANCE));
    out.add("conv bias", grad_check(|v| f(&x, &k, &with(&b, v)), b.data(), g.bias.data(), GRAD_TOLERANCE));
}

fn check_batch_norm(out: &mut Checks, rng: &mut impl Rng) {
    let mut bn = BatchNorm::new(4);
    bn.gamma.value = Tensor::uniform(&[4], 0.5, 1.5, rng);
    bn.beta.value = Tensor::uniform(&[4], -0.5, 0.5, rng);
    let x = Tensor::uniform(&[7, 4], -2.0, 2.0, rng);
    let r = Tensor::uniform(&[7, 4], -1.0, 1.0, rng);
    let (_, cache) = bn.forward(&x, Mode::Train).unwrap();
    let dx = bn.backward(&cache, &r).unwrap();
    let base = bn.clone();
    let f = |bn: &BatchNorm, x: &Tensor| probe(&r, &bn.forward(x, Mode::Train).unwrap().0);
    out.add("batch norm input", grad_check(|v| f(&base, &with(&x, v)), x.data(), dx.data(), GRAD_TOLERANCE));
    let gamma = grad_check(
        |v| {
            let mut m = base.clone();
            m.gamma.value = with(&base.gamma.value, v);
            f(&m, &x)
        },
        base.gamma.value.data(),
        bn.gamma.grad.data(),
        GRAD_TOLERANCE,
    );
    out.add("batch norm gamma", gamma);
    let beta = grad_check(
        |v| {
            let mut m = base.clone();
            m.beta.value = with(&base.beta.value, v);
            f(&m, &x)
        },
        base.beta.value.data(),
        bn.beta.grad.data(),
        GRAD_TOLERANCE,
    );
    out.add("batch norm beta", beta);
}

fn check_oac(out: &mut Checks, rng: &mut impl Rng) {
    let (h, w, n) = (3, 4, 2);
    let c = random_correlation(3, h, w, rng);
    let bank = random_bank(n, h, w, rng);
    let r = Tensor::uniform(&[n, h, w], -1.0, 1.0, rng);
    let y = oac_forward_direct(&c, &bank).unwrap();
    let g = oac_backward(&c, &bank, &y, &r, true).unwrap();
    let f = |c: &CorrelationMap, b: &OacKernelBank| probe(&r, &oac_forward_direct(c, b).unwrap().values);
    let wrt_w = grad_check(
        |v| {
            let mut b = bank.clone();
            b.weights.value = with(&bank.weights.value, v);
            f(&c, &b)
        },
        bank.weights.value.data(),
        g.weights.data(),
        GRAD_TOLERANCE,
    );
    out.add("oac weight", wrt_w);
    let bias = bank.bias.as_ref().unwrap().value.clone();
    let wrt_b = grad_check(
        |v| {
            let mut b = bank.clone();
            b.bias.as_mut().unwrap().value = with(&bias, v);
            f(&c, &b)
        },
        bias.data(),
        g.bias.unwrap().data(),
        GRAD_TOLERANCE,
    );
    out.add("oac bias", wrt_b);
    let cv = c.values().clone();
    let wrt_c = grad_check(
        |v| f(&CorrelationMap::from_tensor(with(&cv, v)).unwrap(), &bank),
        cv.data(),
        g.correlation.unwrap().data(),
        GRAD_TOLERANCE,
    );
    out.add("oac correlation", wrt_c);
}

fn check_mlps(out: &mut Checks, rng: &mut impl Rng) {
    let mut block = PointwiseBlock::new(5, 4, rng);
    block.linear.bias.as_mut().unwrap().value = Tensor::uniform(&[4], -0.5, 0.5, rng);
    block.bn.gamma.value = Tensor::uniform(&[4], 0.5, 1.5, rng);
    block.bn.beta.value = Tensor::uniform(&[4], -0.5, 0.5, rng);
    let x = Tensor::uniform(&[9, 5], -1.0, 1.0, rng);
    let r = Tensor::uniform(&[9, 4], -1.0, 1.0, rng);
    let (_, cache) = block.forward(&x, Mode::Train).unwrap();
    let mut trained = block.clone();
    let dx = trained.backward(&cache, &r).unwrap();
    let f = |b: &PointwiseBlock, x: &Tensor| probe(&r, &b.forward(x, Mode::Train).unwrap().0);
    out.add("mlp block input", grad_check(|v| f(&block, &with(&x, v)), x.data(), dx.data(), GRAD_TOLERANCE));
    let n_params = block.clone().parameters_mut().len();
    for pi in 0..n_params {
        let (value, grad) = {
            let mut t = trained.clone();
            let p = &t.parameters_mut()[pi];
            (p.value.clone(), p.grad.clone())
        };
        let rep = grad_check(
            |v| {
                let mut b = block.clone();
                b.parameters_mut()[pi].value = with(&value, v);
                f(&b, &x)
            },
            value.data(),
            grad.data(),
            GRAD_TOLERANCE,
        );
        out.add(&format!("mlp block param {pi}"), rep);
    }
    let mut lin = Linear::he(4, 1, false, rng);
    let x = Tensor::uniform(&[6, 4], -1.0, 1.0, rng);
    let r = Tensor::uniform(&[6, 1], -1.0, 1.0, rng);
    let base = lin.clone();
    let dx = lin.backward(&x, &r).unwrap();
    let f = |l: &Linear, x: &Tensor| probe(&r, &l.forward(x).unwrap());
    out.add("score layer input", grad_check(|v| f(&base, &with(&x, v)), x.data(), dx.data(), GRAD_TOLERANCE));
    let rep = grad_check(
        |v| {
            let mut l = base.clone();
            l.weight.value = with(&base.weight.value, v);
            f(&l, &x)
        },
        base.weight.value.data(),
        lin.weight.grad.data(),
        GRAD_TOLERANCE,
    );
    out.add("score layer weight", rep);
}

fn check_softmax(out: &mut Checks, rng: &mut impl Rng) {
    let s = Tensor::uniform(&[1, 3, 4], -2.0, 2.0, rng);
    let r = Tensor::uniform(&[1, 3, 4], -1.0, 1.0, rng);
    let alpha = spatial_softmax(&s).unwrap();
    let ds = spatial_softmax_backward(&alpha, &r).unwrap();
    let rep = grad_check(
        |v| probe(&r, &spatial_softmax(&with(&s, v)).unwrap()),
        s.data(),
        ds.data(),
        GRAD_TOLERANCE,
    );
    out.add("spatial softmax", rep);
}

fn check_head(out: &mut Checks, rng: &mut impl Rng) {
    for family in [TransformFamily::Affine, TransformFamily::TPS] {
        let (encoded, channels, batch) = ((2, 3), 4, 2);
        let mut head = AttentionHead::new(family, EmbeddingKind::Learned, encoded, channels, 5, 3, rng);
        for p in head.parameters_mut() {
            let shape = p.value.shape().to_vec();
            p.value = Tensor::uniform(&shape, -0.6, 0.6, rng);
        }
        for bn in [&mut head.g1.bn, &mut head.g2.bn, &mut head.s1.bn] {
            bn.gamma.value = Tensor::uniform(&[bn.channels()], 0.5, 1.5, rng);
        }
        let q = family.param_count();
        let x = Tensor::uniform(&[batch * 6, channels], 0.0, 1.0, rng);
        let r = Tensor::uniform(&[batch, q], -1.0, 1.0, rng);
        let (_, cache) = head.forward(&x, batch, Mode::Train).unwrap();
        let mut trained = head.clone();
        let dx = trained.backward(&cache, &r).unwrap();
        let f = |h: &AttentionHead, x: &Tensor| probe(&r, &h.forward(x, batch, Mode::Train).unwrap().0);
        out.add(&format!("{family} head features"), grad_check(|v| f(&head, &with(&x, v)), x.data(), dx.data(), GRAD_TOLERANCE));
        let n_params = head.clone().parameters_mut().len();
        for pi in 0..n_params {
            let (value, grad) = {
                let mut t = trained.clone();
                let p = &t.parameters_mut()[pi];
                (p.value.clone(), p.grad.clone())
            };
            let rep = grad_check(
                |v| {
                    let mut h = head.clone();
                    h.parameters_mut()[pi].value = with(&value, v);
                    f(&h, &x)
                },
                value.data(),
                grad.data(),
                GRAD_TOLERANCE,
            );
            out.add(&format!("{family} head param {pi}"), rep);
        }
    }
}

fn check_geometry(out: &mut Checks) {
    let grid = make_regular_grid(7).unwrap();
    for family in [TransformFamily::Affine, TransformFamily::TPS] {
        let (t, gt) = (sample_random_transform(family, 31), sample_random_transform(family, 32));
        let (_, g) = tgd(&t, &gt, &grid).unwrap();
        let rep = grad_check(
            |v| tgd(&TransformParams::from_slice(family, v).unwrap(), &gt, &grid).unwrap().0,
            t.as_slice(),
            &g,
            GRAD_TOLERANCE,
        );
        out.add(&format!("{family} tgd"), rep);
    }
    let basis = TpsBasis::new(3).unwrap();
    let TransformParams::Tps(t) = sample_random_transform(TransformFamily::TPS, 33) else {
        unreachable!()
    };
    let k = basis.anchors().len();
    let pts = [[0.3, -0.7], [-0.45, 0.1], [0.9, 0.95]];
    let weights = [[0.7, -1.1], [0.4, 0.5], [-0.9, 0.2]];
    let f = |d: &[f64]| {
        let t = TpsParams::new(3, d.to_vec()).unwrap();
        pts.iter().zip(&weights).map(|(&p, r)| {
            let q = basis.apply(&t, p);
            r[0] * q[0] + r[1] * q[1]
        }).sum::<f64>()
    };
    let mut analytic = vec![0.0; 2 * k];
    for (&p, r) in pts.iter().zip(&weights) {
        for (i, beta) in basis.coefficients(p).iter().enumerate() {
            analytic[i] += r[0] * beta;
            analytic[k + i] += r[1] * beta;
        }
    }
    out.add("tps point transform", grad_check(f, t.displacements(), &analytic, GRAD_TOLERANCE));
}

fn small_model_config(family: TransformFamily) -> ModelConfig {
    ModelConfig {
        feature_dim: 8,
        height: 8,
        width: 8,
        kernels: 3,
        encoder_channels: 4,
        g_width: 5,
        s_hidden: 3,
        init_scale: 1.0,
        seed: 21,
        ..ModelConfig::desk(family)
    }
}

fn check_end_to_end(out: &mut Checks, rng: &mut impl Rng) {
    for family in [TransformFamily::Affine, TransformFamily::TPS] {
        let cfg = small_model_config(family);
        let mut model = Model::new(cfg.clone()).unwrap();
        for (name, p) in model.named_parameters_mut() {
            let shape = p.value.shape().to_vec();
            p.value = if name.ends_with("gamma") {
                Tensor::uniform(&shape, 0.5, 1.5, rng)
            } else {
                Tensor::uniform(&shape, -0.3, 0.3, rng)
            };
        }
        let pairs: Vec<(Tensor, Tensor)> =
            (0..3).map(|_| (unit_features(8, 8, 8, rng), unit_features(8, 8, 8, rng))).collect();
        let gts: Vec<TransformParams> = (0..3).map(|i| sample_random_transform(family, 50 + i)).collect();
        let grid = make_regular_grid(5).unwrap();
        let loss = |m: &Model| -> (f64, Tensor) {
            let inputs: Vec<(&Tensor, &Tensor)> = pairs.iter().map(|(a, b)| (a, b)).collect();
            let pass = m.forward(&inputs, Mode::Train).unwrap();
            let mut total = 0.0;
            let mut grad = Vec::new();
            for (t, gt) in pass.thetas.iter().zip(&gts) {
                let (l, g) = tgd(t, gt, &grid).unwrap();
                total += l / 3.0;
                grad.extend(g.iter().map(|v| v / 3.0));
            }
            (total, Tensor::new(vec![3, cfg.param_count()], grad).unwrap())
        };
        let base = model.clone();
        let (_, dtheta) = loss(&model);
        let inputs: Vec<(&Tensor, &Tensor)> = pairs.iter().map(|(a, b)| (a, b)).collect();
        let pass = model.forward(&inputs, Mode::Train).unwrap();
        model.backward(&pass, &dtheta).unwrap();
        let names: Vec<String> = model.named_parameters_mut().into_iter().map(|(n, _)| n).collect();
        for (pi, name) in names.iter().enumerate() {
            let (value, grad) = {
                let mut m = model.clone();
                let p = &m.parameters_mut()[pi];
                (p.value.clone(), p.grad.clone())
            };
            let idx: Vec<usize> = (0..value.len()).step_by(value.len().div_ceil(30)).collect();
            let rep = grad_check_at(
                |v| {
                    let mut m = base.clone();
                    m.parameters_mut()[pi].value = with(&value, v);
                    loss(&m).0
                },
                value.data(),
                grad.data(),
                &idx,
                GRAD_TOLERANCE,
            );
            out.add(&format!("{family} end-to-end {name}"), rep);
        }
    }
}

fn gradient_integrity() -> Outcome {
    let start = Instant::now();
    let mut rng = seeded(103);
    let mut checks = Checks(Vec::new());
    check_conv(&mut checks, &mut rng);
    check_batch_norm(&mut checks, &mut rng);
    check_oac(&mut checks, &mut rng);
    check_mlps(&mut checks, &mut rng);
    check_softmax(&mut checks, &mut rng);
    check_head(&mut checks, &mut rng);
    check_geometry(&mut checks);
    check_end_to_end(&mut checks, &mut rng);
    let t = start.elapsed();
    let failed = checks.failures();
    let pass = failed.is_empty() && t < GRAD_LIMIT;
    let mut detail = format!(
        "{} checks, worst relative error {:.1e} (tol {GRAD_TOLERANCE:e}), {} (limit {})",
        checks.0.len(),
        checks.worst(),
        secs(t),
        secs(GRAD_LIMIT)
    );
    if !failed.is_empty() {
        detail += &format!(", failing: {}", failed.join("; "));
    }
    (pass, detail)
}

fn shape_chain() -> Outcome {
    let mut rng = seeded(104);
    let mut pass = true;
    let mut notes = Vec::new();
    for family in [TransformFamily::Affine, TransformFamily::TPS] {
        let model = Model::new(ModelConfig::full(family)).unwrap();
        let pairs: Vec<(Tensor, Tensor)> =
            (0..2).map(|_| (unit_features(512, 15, 15, &mut rng), unit_features(512, 15, 15, &mut rng))).collect();
        let inputs: Vec<(&Tensor, &Tensor)> = pairs.iter().map(|(a, b)| (a, b)).collect();
        let fwd = model.forward(&inputs, Mode::Train).unwrap();
        let c = fwd.correlation(0);
        let chain = [
            c.values().shape().to_vec(),
            reorder_by_offset(c).values().shape().to_vec(),
            fwd.displacement(0).values.shape().to_vec(),
        ];
        let state = fwd.attention_state(0);
        let alpha_sum: f64 = state.alpha.data().iter().sum();
        let q = fwd.thetas[0].as_slice().len();
        let want_q = if family == TransformFamily::Affine { 6 } else { 18 };
        pass &= chain == [vec![225, 15, 15], vec![841, 15, 15], vec![128, 15, 15]]
            && state.local_features.shape() == [128, 9, 9]
            && state.alpha.len() == 81
            && state.attended.len() == 128
            && q == want_q
            && (alpha_sum - 1.0).abs() <= ATTENTION_SUM_TOL;
        if family == TransformFamily::Affine {
            notes.push(format!(
                "{:?} -> {:?} -> {:?} -> {:?} -> {} probabilities (sum - 1 = {:.1e}) -> tau {}",
                chain[0],
                chain[1],
                chain[2],
                state.local_features.shape(),
                state.alpha.len(),
                alpha_sum - 1.0,
                state.attended.len()
            ));
        }
        notes.push(format!("{family} theta {q}"));
    }
    (pass, notes.join(", "))
}

fn geometry_identities() -> Outcome {
    let mut worst = [0.0f64; 4];
    for seed in 0..200 {
        let mut rng = seeded(1000 + seed);
        let n = rng.random_range(2..=25);
        let grid = make_regular_grid(n).unwrap();
        for family in [TransformFamily::Affine, TransformFamily::TPS] {
            let t = sample_random_transform(family, seed);
            worst[0] = worst[0].max(tgd(&t, &t, &grid).unwrap().0.abs());
        }
        let (tx, ty) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let shifted = TransformParams::Affine(AffineParams::translation(tx, ty));
        let l = tgd(&shifted, &TransformFamily::Affine.identity(), &grid).unwrap().0;
        worst[1] = worst[1].max((l - (tx * tx + ty * ty)).abs());
        let grid_side = rng.random_range(2..=5);
        let zero = TransformParams::Tps(TpsParams::zeros(grid_side));
        let p = [rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5)];
        let q = zero.map_point(p);
        worst[2] = worst[2].max((q[0] - p[0]).abs().max((q[1] - p[1]).abs()));
        let drawn = sample_random_transform(TransformFamily::Tps { grid: grid_side }, seed);
        let TransformParams::Tps(t) = &drawn else { unreachable!() };
        for (k, &a) in t.anchors().iter().enumerate() {
            let (q, d) = (drawn.map_point(a), t.displacement(k));
            worst[3] = worst[3].max((q[0] - a[0] - d[0]).abs().max((q[1] - a[1] - d[1]).abs()));
        }
    }
    let pass = worst[0] == 0.0 && worst[1] <= TGD_TOL && worst[2] <= TPS_TOL && worst[3] <= TPS_TOL;
    (
        pass,
        format!(
            "200 draws: TGD(t,t) max {:.1e}, translation TGD error {:.1e} (tol {TGD_TOL:e}), zero TPS error {:.1e}, \
             anchor error {:.1e} (tol {TPS_TOL:e})",
            worst[0], worst[1], worst[2], worst[3]
        ),
    )
}

fn desk_config(seed: u64) -> TrainConfig {
    let mut cfg = TrainConfig {
        learning_rate: DESK_LR,
        batch_size: DESK_BATCH,
        epochs: 1,
        steps_per_epoch: DESK_STEPS,
        validation_pairs: 200,
        ..TrainConfig::default()
    };
    cfg.model.seed = seed;
    cfg
}

fn desk_learning() -> Outcome {
    let start = Instant::now();
    let mut pass = true;
    let mut notes = Vec::new();
    for seed in DESK_SEEDS {
        let cfg = desk_config(seed);
        assert_eq!((cfg.model.feature_dim, cfg.model.height, cfg.model.width), (16, 8, 8));
        assert_eq!(cfg.model.family, TransformFamily::Affine);
        assert!(matches!(cfg.corpus, CorpusSource::Procedural { .. }));
        let out = train(&cfg).unwrap();
        let ratio = out.validation.mean_tgd / out.validation.identity_tgd;
        pass &= ratio <= DESK_RATIO;
        notes.push(format!(
            "seed {seed}: {:.4} / {:.4} = {ratio:.3}",
            out.validation.mean_tgd, out.validation.identity_tgd
        ));
    }
    let t = start.elapsed();
    pass &= t < DESK_LIMIT;
    (
        pass,
        format!(
            "held-out TGD / identity TGD (limit {DESK_RATIO}): {}, {} (limit {})",
            notes.join(", "),
            secs(t),
            secs(DESK_LIMIT)
        ),
    )
}

fn pck_oracle() -> Outcome {
    let frame = ImageFrame::new(240, 320);
    let family = TransformFamily::Affine;
    let thetas: Vec<TransformParams> = (0..20).map(|i| sample_random_transform(family, 300 + i)).collect();
    let sets: Vec<_> = thetas
        .iter()
        .enumerate()
        .map(|(i, t)| synthetic_keypoints(format!("pair{i}"), t, frame, 15, i as u64).unwrap())
        .collect();
    let oracle = pck(&sets, &thetas, frame, 0.1).unwrap().value();
    let mut monotone = true;
    let mut curve = Vec::new();
    for guess in 0..5 {
        let preds: Vec<TransformParams> = (0..20).map(|i| sample_random_transform(family, 900 + 20 * guess + i)).collect();
        let v: Vec<f64> = PCK_ALPHAS.iter().map(|&a| pck(&sets, &preds, frame, a).unwrap().value()).collect();
        monotone &= v.windows(2).all(|w| w[0] <= w[1]);
        if guess == 0 {
            curve = v;
        }
    }
    let pass = oracle == 1.0 && monotone;
    (
        pass,
        format!(
            "oracle PCK@0.1 = {oracle}, random predictions over alpha {PCK_ALPHAS:?}: {curve:.3?}{}",
            if monotone { " (monotone in all 5 trials)" } else { " (not monotone)" }
        ),
    )
}

fn run_once(dir: &Path) -> String {
    let cfg = TrainConfig {
        batch_size: 8,
        epochs: 2,
        steps_per_epoch: 15,
        corpus: CorpusSource::Procedural { count: 60 },
        validation_pairs: 16,
        ..desk_config(7)
    };
    let out = train(&cfg).unwrap();
    out.model.save(dir.join("checkpoint")).unwrap();
    write_loss_csv(dir.join("loss.csv"), &out.losses).unwrap();
    let data = DataSetup::new(&cfg).unwrap();
    let report = oac_core::pipeline::evaluate_tgd(
        &out.model,
        &data.validation_samples(&cfg, cfg.validation_pairs).unwrap(),
        &make_regular_grid(cfg.tgd_grid).unwrap(),
    )
    .unwrap();
    format!("{:e} {:e}", report.mean_tgd, report.identity_tgd)
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            out.extend(files(&path));
        } else {
            out.push((path.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&path).unwrap()));
        }
    }
    out.sort();
    out
}

fn determinism() -> Outcome {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (ea, eb) = (run_once(a.path()), run_once(b.path()));
    let (fa, fb) = (files(a.path()), files(b.path()));
    let pass = fa == fb && ea == eb && fa.iter().any(|(n, _)| n == "loss.csv");
    (
        pass,
        format!(
            "{} files compared byte for byte ({}), evaluation {}",
            fa.len(),
            if fa == fb { "identical" } else { "different" },
            if ea == eb { "identical" } else { "different" }
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("oac-equivalence", oac_equivalence),
        ("multiply-counts", multiply_counts),
        ("gradient-integrity", gradient_integrity),
        ("shape-chain", shape_chain),
        ("geometry-identities", geometry_identities),
        ("desk-learning", desk_learning),
        ("pck-oracle", pck_oracle),
        ("determinism", determinism),
    ];
    let mut failures = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let (pass, detail) = run();
        failures += usize::from(!pass);
        println!("[{}] {} {name}: {detail}", if pass { "PASS" } else { "FAIL" }, i + 1);
    }
    if failures > 0 {
        println!("{failures} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
    println!("all {} criteria passed", criteria.len());
}
