//! Raw numeric kernels behind the differentiable ops. Everything here works on
//! flat row-major slices; shape bookkeeping lives in [`crate::graph`].

/// `c = a·b + beta·c` with `a: m×k`, `b: k×n`, `c: m×n`, all row-major.
pub fn matmul_nn(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64], beta: f64) {
    gemm(m, k, n, a, (k as isize, 1), b, (n as isize, 1), c, beta);
}

/// `c = a·bᵀ + beta·c` with `a: m×k`, `b: n×k`.
pub fn matmul_nt(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64], beta: f64) {
    gemm(m, k, n, a, (k as isize, 1), b, (1, k as isize), c, beta);
}

/// `c = aᵀ·b + beta·c` with `a: k×m`, `b: k×n`.
pub fn matmul_tn(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64], beta: f64) {
    gemm(m, k, n, a, (1, m as isize), b, (n as isize, 1), c, beta);
}

#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (isize, isize),
    b: &[f64],
    (rsb, csb): (isize, isize),
    c: &mut [f64],
    beta: f64,
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c[..m * n].iter_mut().for_each(|v| *v *= beta);
        return;
    }
    // SAFETY: the asserts above guarantee every strided access stays inside
    // the slices for the row-major layouts described by the callers.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub in_c: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_c: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeom {
    pub fn out_h(&self) -> usize {
        (self.in_h + 2 * self.pad - self.kh) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.in_w + 2 * self.pad - self.kw) / self.stride + 1
    }

    pub fn patch_len(&self) -> usize {
        self.in_c * self.kh * self.kw
    }

    pub fn in_len(&self) -> usize {
        self.in_c * self.in_h * self.in_w
    }

    pub fn out_len(&self) -> usize {
        self.out_c * self.out_h() * self.out_w()
    }
}

/// Unrolls one sample `[C, H, W]` into columns `[C·kh·kw, out_h·out_w]`.
pub fn im2col(geom: &ConvGeom, x: &[f64], cols: &mut [f64]) {
    let (oh, ow) = (geom.out_h(), geom.out_w());
    let p = oh * ow;
    let pad = geom.pad as isize;
    let mut row = 0;
    for c in 0..geom.in_c {
        let plane = &x[c * geom.in_h * geom.in_w..(c + 1) * geom.in_h * geom.in_w];
        for ki in 0..geom.kh {
            for kj in 0..geom.kw {
                let dst = &mut cols[row * p..(row + 1) * p];
                for oy in 0..oh {
                    let iy = (oy * geom.stride + ki) as isize - pad;
                    let line = &mut dst[oy * ow..(oy + 1) * ow];
                    if iy < 0 || iy >= geom.in_h as isize {
                        line.fill(0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * geom.in_w..(iy as usize + 1) * geom.in_w];
                    for (ox, v) in line.iter_mut().enumerate() {
                        let ix = (ox * geom.stride + kj) as isize - pad;
                        *v = if ix < 0 || ix >= geom.in_w as isize {
                            0.0
                        } else {
                            src[ix as usize]
                        };
                    }
                }
                row += 1;
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters column gradients back onto `[C, H, W]`.
pub fn col2im_add(geom: &ConvGeom, cols: &[f64], dx: &mut [f64]) {
    let (oh, ow) = (geom.out_h(), geom.out_w());
    let p = oh * ow;
    let pad = geom.pad as isize;
    let mut row = 0;
    for c in 0..geom.in_c {
        let plane = &mut dx[c * geom.in_h * geom.in_w..(c + 1) * geom.in_h * geom.in_w];
        for ki in 0..geom.kh {
            for kj in 0..geom.kw {
                let src = &cols[row * p..(row + 1) * p];
                for oy in 0..oh {
                    let iy = (oy * geom.stride + ki) as isize - pad;
                    if iy < 0 || iy >= geom.in_h as isize {
                        continue;
                    }
                    let line = &mut plane[iy as usize * geom.in_w..(iy as usize + 1) * geom.in_w];
                    for ox in 0..ow {
                        let ix = (ox * geom.stride + kj) as isize - pad;
                        if ix >= 0 && ix < geom.in_w as isize {
                            line[ix as usize] += src[oy * ow + ox];
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

/// Batched cross-correlation. `weight` is `[out_c, in_c·kh·kw]`.
pub fn conv2d_forward(geom: &ConvGeom, batch: usize, x: &[f64], weight: &[f64], bias: &[f64]) -> Vec<f64> {
    let p = geom.out_h() * geom.out_w();
    let k = geom.patch_len();
    let mut out = vec![0.0; batch * geom.out_len()];
    let mut cols = vec![0.0; k * p];
    for b in 0..batch {
        im2col(geom, &x[b * geom.in_len()..(b + 1) * geom.in_len()], &mut cols);
        let y = &mut out[b * geom.out_len()..(b + 1) * geom.out_len()];
        for (o, chunk) in y.chunks_exact_mut(p).enumerate() {
            chunk.fill(bias[o]);
        }
        matmul_nn(geom.out_c, k, p, weight, &cols, y, 1.0);
    }
    out
}

/// Returns `(dx, dweight, dbias)`; `dx` is skipped when `need_dx` is false.
pub fn conv2d_backward(
    geom: &ConvGeom,
    batch: usize,
    x: &[f64],
    weight: &[f64],
    dout: &[f64],
    need_dx: bool,
) -> (Option<Vec<f64>>, Vec<f64>, Vec<f64>) {
    let p = geom.out_h() * geom.out_w();
    let k = geom.patch_len();
    let mut dw = vec![0.0; geom.out_c * k];
    let mut db = vec![0.0; geom.out_c];
    let mut dx = need_dx.then(|| vec![0.0; batch * geom.in_len()]);
    let mut cols = vec![0.0; k * p];
    let mut dcols = if need_dx { vec![0.0; k * p] } else { Vec::new() };
    for b in 0..batch {
        let g = &dout[b * geom.out_len()..(b + 1) * geom.out_len()];
        for (o, chunk) in g.chunks_exact(p).enumerate() {
            db[o] += chunk.iter().sum::<f64>();
        }
        im2col(geom, &x[b * geom.in_len()..(b + 1) * geom.in_len()], &mut cols);
        matmul_nt(geom.out_c, p, k, g, &cols, &mut dw, 1.0);
        if let Some(dx) = dx.as_mut() {
            matmul_tn(k, geom.out_c, p, weight, g, &mut dcols, 0.0);
            col2im_add(geom, &dcols, &mut dx[b * geom.in_len()..(b + 1) * geom.in_len()]);
        }
    }
    (dx, dw, db)
}

/// 2×2 max pooling with stride 2 (floor). Returns values and source indices.
pub fn maxpool2_forward(batch: usize, c: usize, h: usize, w: usize, x: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(batch * c * oh * ow);
    let mut arg = Vec::with_capacity(batch * c * oh * ow);
    for plane in 0..batch * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + 2 * oy * w + 2 * ox;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * oy + dy) * w + 2 * ox + dx;
                    if x[idx] > x[best] {
                        best = idx;
                    }
                }
                out.push(x[best]);
                arg.push(best);
            }
        }
    }
    (out, arg)
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Per-sample normalisation over `[C, H·W]` with per-channel affine.
/// Returns `(y, xhat, inv_std)`.
pub fn layer_norm_forward(
    batch: usize,
    channels: usize,
    x: &[f64],
    gamma: &[f64],
    beta: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let per = x.len() / batch;
    let spatial = per / channels;
    let mut y = vec![0.0; x.len()];
    let mut xhat = vec![0.0; x.len()];
    let mut inv_std = Vec::with_capacity(batch);
    for b in 0..batch {
        let xs = &x[b * per..(b + 1) * per];
        let mean = xs.iter().sum::<f64>() / per as f64;
        let var = xs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / per as f64;
        let istd = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        inv_std.push(istd);
        for (i, v) in xs.iter().enumerate() {
            let c = i / spatial;
            let h = (v - mean) * istd;
            xhat[b * per + i] = h;
            y[b * per + i] = h * gamma[c] + beta[c];
        }
    }
    (y, xhat, inv_std)
}

/// Returns `(dx, dgamma, dbeta)`.
pub fn layer_norm_backward(
    batch: usize,
    channels: usize,
    xhat: &[f64],
    inv_std: &[f64],
    gamma: &[f64],
    dy: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let per = xhat.len() / batch;
    let spatial = per / channels;
    let n = per as f64;
    let mut dx = vec![0.0; xhat.len()];
    let mut dgamma = vec![0.0; channels];
    let mut dbeta = vec![0.0; channels];
    let mut dxhat = vec![0.0; per];
    for b in 0..batch {
        let xh = &xhat[b * per..(b + 1) * per];
        let g = &dy[b * per..(b + 1) * per];
        let mut sum_d = 0.0;
        let mut sum_dx = 0.0;
        for i in 0..per {
            let c = i / spatial;
            dgamma[c] += g[i] * xh[i];
            dbeta[c] += g[i];
            dxhat[i] = g[i] * gamma[c];
            sum_d += dxhat[i];
            sum_dx += dxhat[i] * xh[i];
        }
        let k = inv_std[b] / n;
        for i in 0..per {
            dx[b * per + i] = k * (n * dxhat[i] - sum_d - xh[i] * sum_dx);
        }
    }
    (dx, dgamma, dbeta)
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// Sigmoid-gated synapse sums. `pre` is `[batch, p]`; the four parameter
/// matrices are `[p, q]`. Output is `[batch, 2q]`: the reversal-weighted sum
/// `Σᵢ s·w·A` followed by the conductance sum `Σᵢ s·w`.
pub fn synapse_forward(
    batch: usize,
    p: usize,
    q: usize,
    pre: &[f64],
    slope: &[f64],
    offset: &[f64],
    weight: &[f64],
    reversal: &[f64],
) -> Vec<f64> {
    let mut out = vec![0.0; batch * 2 * q];
    for b in 0..batch {
        let (num, den) = out[b * 2 * q..(b + 1) * 2 * q].split_at_mut(q);
        for i in 0..p {
            let v = pre[b * p + i];
            for j in 0..q {
                let ij = i * q + j;
                let s = sigmoid(slope[ij] * (v - offset[ij]));
                let ws = weight[ij] * s;
                num[j] += ws * reversal[ij];
                den[j] += ws;
            }
        }
    }
    out
}

pub struct SynapseGrads {
    pub pre: Vec<f64>,
    pub slope: Vec<f64>,
    pub offset: Vec<f64>,
    pub weight: Vec<f64>,
    pub reversal: Vec<f64>,
}

#[allow(clippy::too_many_arguments)]
pub fn synapse_backward(
    batch: usize,
    p: usize,
    q: usize,
    pre: &[f64],
    slope: &[f64],
    offset: &[f64],
    weight: &[f64],
    reversal: &[f64],
    dout: &[f64],
) -> SynapseGrads {
    let mut g = SynapseGrads {
        pre: vec![0.0; batch * p],
        slope: vec![0.0; p * q],
        offset: vec![0.0; p * q],
        weight: vec![0.0; p * q],
        reversal: vec![0.0; p * q],
    };
    for b in 0..batch {
        let (dnum, dden) = dout[b * 2 * q..(b + 1) * 2 * q].split_at(q);
        for i in 0..p {
            let v = pre[b * p + i];
            let mut dpre = 0.0;
            for j in 0..q {
                let ij = i * q + j;
                let d = v - offset[ij];
                let s = sigmoid(slope[ij] * d);
                let coeff = dnum[j] * reversal[ij] + dden[j];
                g.reversal[ij] += dnum[j] * weight[ij] * s;
                g.weight[ij] += coeff * s;
                let dz = coeff * weight[ij] * s * (1.0 - s);
                g.slope[ij] += dz * d;
                g.offset[ij] -= dz * slope[ij];
                dpre += dz * slope[ij];
            }
            g.pre[b * p + i] = dpre;
        }
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_variants_agree() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]; // 2×3
        let b = [7.0, 8.0, 9.0, 10.0, 11.0, 12.0]; // 3×2
        let mut c = [0.0; 4];
        matmul_nn(2, 3, 2, &a, &b, &mut c, 0.0);
        assert_eq!(c, [58.0, 64.0, 139.0, 154.0]);
        // bᵀ stored as 2×3
        let bt = [7.0, 9.0, 11.0, 8.0, 10.0, 12.0];
        let mut c2 = [0.0; 4];
        matmul_nt(2, 3, 2, &a, &bt, &mut c2, 0.0);
        assert_eq!(c, c2);
        // aᵀ stored as 3×2
        let at = [1.0, 4.0, 2.0, 5.0, 3.0, 6.0];
        let mut c3 = [0.0; 4];
        matmul_tn(2, 3, 2, &at, &b, &mut c3, 0.0);
        assert_eq!(c, c3);
    }

    #[test]
    fn im2col_padding_zero_fills() {
        let geom = ConvGeom { in_c: 1, in_h: 2, in_w: 2, out_c: 1, kh: 3, kw: 3, stride: 1, pad: 1 };
        let x = [1.0, 2.0, 3.0, 4.0];
        let mut cols = vec![f64::NAN; 9 * 4];
        im2col(&geom, &x, &mut cols);
        // centre tap reproduces the image
        assert_eq!(&cols[4 * 4..5 * 4], &x);
        // top-left tap sees only x[0] at output (1,1)
        assert_eq!(&cols[0..4], &[0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn maxpool_picks_window_max() {
        let x = [1.0, 5.0, 2.0, 0.0, 3.0, 4.0, 8.0, 1.0];
        let (y, arg) = maxpool2_forward(1, 1, 2, 4, &x);
        assert_eq!(y, vec![5.0, 8.0]);
        assert_eq!(arg, vec![1, 6]);
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
        assert!((softplus(0.0) - std::f64::consts::LN_2).abs() < 1e-15);
    }
}
