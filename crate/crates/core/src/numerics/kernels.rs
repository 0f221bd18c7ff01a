//! Plain loop kernels. Every output element accumulates its terms in a
//! fixed order that does not depend on how many rows are processed, so a
//! row computed inside a short window is bit-identical to the same row
//! computed inside a long one.

/// `c[m×n] += a[m×k] · b[k×n]`
pub fn gemm_nn(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let crow = &mut c[i * n..(i + 1) * n];
        for (p, &aip) in arow.iter().enumerate() {
            let brow = &b[p * n..(p + 1) * n];
            for (cv, bv) in crow.iter_mut().zip(brow) {
                *cv += aip * bv;
            }
        }
    }
}

/// `c[m×n] += a[m×k] · b[n×k]ᵀ`
pub fn gemm_nt(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            c[i * n + j] += dot(arow, brow);
        }
    }
}

/// `c[k×n] += a[m×k]ᵀ · b[m×n]`
pub fn gemm_tn(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for p in 0..m {
        let arow = &a[p * k..(p + 1) * k];
        let brow = &b[p * n..(p + 1) * n];
        for (i, &aval) in arow.iter().enumerate() {
            let crow = &mut c[i * n..(i + 1) * n];
            for (cv, bv) in crow.iter_mut().zip(brow) {
                *cv += aval * bv;
            }
        }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four independent accumulators; the order is fixed by slice length only
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let j = 4 * i;
        acc[0] += a[j] * b[j];
        acc[1] += a[j + 1] * b[j + 1];
        acc[2] += a[j + 2] * b[j + 2];
        acc[3] += a[j + 3] * b[j + 3];
    }
    let mut tail = 0.0;
    for j in 4 * chunks..a.len() {
        tail += a[j] * b[j];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Geometry of a grouped 1-D convolution over time.
///
/// Input is `[T × in_ch]`, weights are `[out_ch × kernel × in_ch/groups]`,
/// output is `[T_out × out_ch]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad_left: usize,
    pub pad_right: usize,
    pub groups: usize,
}

impl ConvGeometry {
    pub fn out_len(&self, t: usize) -> usize {
        let padded = t + self.pad_left + self.pad_right;
        if padded < self.kernel {
            0
        } else {
            (padded - self.kernel) / self.stride + 1
        }
    }

    pub fn in_per_group(&self) -> usize {
        self.in_ch / self.groups
    }

    pub fn out_per_group(&self) -> usize {
        self.out_ch / self.groups
    }

    pub fn weight_len(&self) -> usize {
        self.out_ch * self.kernel * self.in_per_group()
    }

    #[inline]
    fn input_row(&self, t_out: usize, k: usize, t_in: usize) -> Option<usize> {
        let pos = (t_out * self.stride + k) as isize - self.pad_left as isize;
        (pos >= 0 && (pos as usize) < t_in).then_some(pos as usize)
    }
}

pub fn conv1d_forward(x: &[f64], t_in: usize, w: &[f64], bias: &[f64], geo: &ConvGeometry) -> Vec<f64> {
    let t_out = geo.out_len(t_in);
    let cg = geo.in_per_group();
    let og = geo.out_per_group();
    let mut out = vec![0.0; t_out * geo.out_ch];
    for t in 0..t_out {
        let orow = &mut out[t * geo.out_ch..(t + 1) * geo.out_ch];
        orow.copy_from_slice(bias);
        for k in 0..geo.kernel {
            let Some(r) = geo.input_row(t, k, t_in) else { continue };
            let xrow = &x[r * geo.in_ch..(r + 1) * geo.in_ch];
            for g in 0..geo.groups {
                let xg = &xrow[g * cg..(g + 1) * cg];
                for o in g * og..(g + 1) * og {
                    let wo = &w[(o * geo.kernel + k) * cg..(o * geo.kernel + k + 1) * cg];
                    orow[o] += dot(wo, xg);
                }
            }
        }
    }
    out
}

/// Accumulates adjoints of a convolution. `dx` may be `None` when the input
/// does not need a gradient.
#[allow(clippy::too_many_arguments)]
pub fn conv1d_backward(
    x: &[f64],
    t_in: usize,
    w: &[f64],
    dout: &[f64],
    geo: &ConvGeometry,
    mut dx: Option<&mut [f64]>,
    dw: Option<&mut [f64]>,
    db: Option<&mut [f64]>,
) {
    let t_out = geo.out_len(t_in);
    let cg = geo.in_per_group();
    let og = geo.out_per_group();
    if let Some(db) = db {
        for t in 0..t_out {
            for (d, g) in db.iter_mut().zip(&dout[t * geo.out_ch..(t + 1) * geo.out_ch]) {
                *d += g;
            }
        }
    }
    let mut dw = dw;
    for t in 0..t_out {
        let drow = &dout[t * geo.out_ch..(t + 1) * geo.out_ch];
        for k in 0..geo.kernel {
            let Some(r) = geo.input_row(t, k, t_in) else { continue };
            for g in 0..geo.groups {
                for o in g * og..(g + 1) * og {
                    let go = drow[o];
                    if go == 0.0 {
                        continue;
                    }
                    let woff = (o * geo.kernel + k) * cg;
                    if let Some(dw) = dw.as_deref_mut() {
                        let xg = &x[r * geo.in_ch + g * cg..r * geo.in_ch + (g + 1) * cg];
                        for (d, xv) in dw[woff..woff + cg].iter_mut().zip(xg) {
                            *d += go * xv;
                        }
                    }
                    if let Some(dx) = dx.as_deref_mut() {
                        let wo = &w[woff..woff + cg];
                        let dxg = &mut dx[r * geo.in_ch + g * cg..r * geo.in_ch + (g + 1) * cg];
                        for (d, wv) in dxg.iter_mut().zip(wo) {
                            *d += go * wv;
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    c[i * n + j] += a[i * k + p] * b[p * n + j];
                }
            }
        }
        c
    }

    fn transpose(a: &[f64], r: usize, c: usize) -> Vec<f64> {
        let mut t = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                t[j * r + i] = a[i * c + j];
            }
        }
        t
    }

    #[test]
    fn gemm_variants_agree() {
        let (m, k, n) = (3, 5, 7);
        let a: Vec<f64> = (0..m * k).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64 * 0.11).cos()).collect();
        let want = naive(&a, &b, m, k, n);

        let mut c = vec![0.0; m * n];
        gemm_nn(&a, &b, &mut c, m, k, n);
        let bt = transpose(&b, k, n);
        let mut c2 = vec![0.0; m * n];
        gemm_nt(&a, &bt, &mut c2, m, k, n);
        let at = transpose(&a, m, k);
        let mut c3 = vec![0.0; m * n];
        gemm_tn(&at, &b, &mut c3, k, m, n);
        for i in 0..m * n {
            assert!((c[i] - want[i]).abs() < 1e-12);
            assert!((c2[i] - want[i]).abs() < 1e-12);
            assert!((c3[i] - want[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn conv_lengths() {
        let geo = ConvGeometry {
            in_ch: 1,
            out_ch: 1,
            kernel: 5,
            stride: 2,
            pad_left: 2,
            pad_right: 2,
            groups: 1,
        };
        assert_eq!(geo.out_len(1), 1);
        assert_eq!(geo.out_len(100), 50);
        assert_eq!(geo.out_len(101), 51);
    }

    #[test]
    fn conv_identity_kernel() {
        // kernel 3, centre tap 1: output equals input
        let geo = ConvGeometry {
            in_ch: 2,
            out_ch: 2,
            kernel: 3,
            stride: 1,
            pad_left: 1,
            pad_right: 1,
            groups: 2,
        };
        let x = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let w = vec![0.0, 1.0, 0.0, 0.0, 1.0, 0.0];
        let y = conv1d_forward(&x, 3, &w, &[0.0, 0.0], &geo);
        assert_eq!(y, x);
    }
}
