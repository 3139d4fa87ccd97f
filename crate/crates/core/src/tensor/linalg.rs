//! Matrix products on row-major slices. Shapes are checked by the callers.

/// `out[r, o] = Σ_i x[r, i] · w[o, i]` for `x: rows×inner`, `w: outs×inner`.
pub fn matmul_nt(x: &[f64], w: &[f64], rows: usize, inner: usize, outs: usize) -> Vec<f64> {
    debug_assert_eq!(x.len(), rows * inner);
    debug_assert_eq!(w.len(), outs * inner);
    let mut out = vec![0.0; rows * outs];
    for (xr, orow) in x.chunks_exact(inner).zip(out.chunks_exact_mut(outs)) {
        for (o, wr) in w.chunks_exact(inner).enumerate() {
            orow[o] = xr.iter().zip(wr).map(|(a, b)| a * b).sum();
        }
    }
    out
}

/// `out[r, c] = Σ_k a[r, k] · b[k, c]` for `a: rows×inner`, `b: inner×cols`.
pub fn matmul_nn(a: &[f64], b: &[f64], rows: usize, inner: usize, cols: usize) -> Vec<f64> {
    debug_assert_eq!(a.len(), rows * inner);
    debug_assert_eq!(b.len(), inner * cols);
    let mut out = vec![0.0; rows * cols];
    for (ar, orow) in a.chunks_exact(inner).zip(out.chunks_exact_mut(cols)) {
        for (k, &av) in ar.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            for (o, bv) in orow.iter_mut().zip(&b[k * cols..(k + 1) * cols]) {
                *o += av * bv;
            }
        }
    }
    out
}

/// `out[i, j] += Σ_r a[r, i] · b[r, j]` for `a: rows×m`, `b: rows×n`;
/// accumulates into `out: m×n`.
pub fn add_matmul_tn(out: &mut [f64], a: &[f64], b: &[f64], rows: usize, m: usize, n: usize) {
    debug_assert_eq!(a.len(), rows * m);
    debug_assert_eq!(b.len(), rows * n);
    debug_assert_eq!(out.len(), m * n);
    for (ar, br) in a.chunks_exact(m).zip(b.chunks_exact(n)) {
        for (i, &av) in ar.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            for (o, bv) in out[i * n..(i + 1) * n].iter_mut().zip(br) {
                *o += av * bv;
            }
        }
    }
}
