//! Forward and vector-Jacobian kernels for the supported primitives.
//!
//! All loops run in a fixed order so results are bit-reproducible.

/// Geometry of a stride-1, zero-padded ("same") convolution.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub in_c: usize,
    pub out_c: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
}

impl ConvGeom {
    fn pad(&self) -> usize {
        self.k / 2
    }

    /// Output columns `j` for which `j + kj - pad` lands inside the input.
    fn valid(&self, kj: usize, len: usize) -> (usize, usize) {
        let pad = self.pad();
        let lo = pad.saturating_sub(kj);
        let hi = (len + pad).saturating_sub(kj).min(len);
        (lo, hi)
    }
}

pub(crate) fn conv2d_forward(g: ConvGeom, x: &[f64], w: &[f64], b: &[f64]) -> Vec<f64> {
    let ConvGeom { in_c, out_c, h, w: width, k } = g;
    let pad = g.pad();
    let plane = h * width;
    let mut out = vec![0.0; out_c * plane];
    for o in 0..out_c {
        let dst = &mut out[o * plane..(o + 1) * plane];
        dst.iter_mut().for_each(|v| *v = b[o]);
        for c in 0..in_c {
            let src = &x[c * plane..(c + 1) * plane];
            for ki in 0..k {
                let (ilo, ihi) = g.valid(ki, h);
                for kj in 0..k {
                    let weight = w[((o * in_c + c) * k + ki) * k + kj];
                    let (jlo, jhi) = g.valid(kj, width);
                    for i in ilo..ihi {
                        let si = (i + ki - pad) * width;
                        let row = &mut dst[i * width + jlo..i * width + jhi];
                        let srow = &src[si + jlo + kj - pad..si + jhi + kj - pad];
                        for (d, s) in row.iter_mut().zip(srow) {
                            *d += weight * s;
                        }
                    }
                }
            }
        }
    }
    out
}

pub(crate) fn conv2d_backward_input(g: ConvGeom, w: &[f64], gout: &[f64]) -> Vec<f64> {
    let ConvGeom { in_c, out_c, h, w: width, k } = g;
    let pad = g.pad();
    let plane = h * width;
    let mut gx = vec![0.0; in_c * plane];
    for o in 0..out_c {
        let src = &gout[o * plane..(o + 1) * plane];
        for c in 0..in_c {
            let dst = &mut gx[c * plane..(c + 1) * plane];
            for ki in 0..k {
                let (ilo, ihi) = g.valid(ki, h);
                for kj in 0..k {
                    let weight = w[((o * in_c + c) * k + ki) * k + kj];
                    let (jlo, jhi) = g.valid(kj, width);
                    for i in ilo..ihi {
                        let di = (i + ki - pad) * width;
                        let drow = &mut dst[di + jlo + kj - pad..di + jhi + kj - pad];
                        let grow = &src[i * width + jlo..i * width + jhi];
                        for (d, s) in drow.iter_mut().zip(grow) {
                            *d += weight * s;
                        }
                    }
                }
            }
        }
    }
    gx
}

pub(crate) fn conv2d_backward_weight(g: ConvGeom, x: &[f64], gout: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let ConvGeom { in_c, out_c, h, w: width, k } = g;
    let pad = g.pad();
    let plane = h * width;
    let mut gw = vec![0.0; out_c * in_c * k * k];
    let mut gb = vec![0.0; out_c];
    for o in 0..out_c {
        let go = &gout[o * plane..(o + 1) * plane];
        gb[o] = go.iter().sum();
        for c in 0..in_c {
            let src = &x[c * plane..(c + 1) * plane];
            for ki in 0..k {
                let (ilo, ihi) = g.valid(ki, h);
                for kj in 0..k {
                    let (jlo, jhi) = g.valid(kj, width);
                    let mut acc = 0.0;
                    for i in ilo..ihi {
                        let si = (i + ki - pad) * width;
                        let grow = &go[i * width + jlo..i * width + jhi];
                        let srow = &src[si + jlo + kj - pad..si + jhi + kj - pad];
                        acc += grow.iter().zip(srow).map(|(a, b)| a * b).sum::<f64>();
                    }
                    gw[((o * in_c + c) * k + ki) * k + kj] = acc;
                }
            }
        }
    }
    (gw, gb)
}

pub(crate) fn dense_forward(x: &[f64], w: &[f64], b: &[f64]) -> Vec<f64> {
    let n_in = x.len();
    b.iter()
        .enumerate()
        .map(|(o, &bias)| {
            let row = &w[o * n_in..(o + 1) * n_in];
            bias + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
        })
        .collect()
}

pub(crate) fn dense_backward_input(w: &[f64], gout: &[f64], n_in: usize) -> Vec<f64> {
    let mut gx = vec![0.0; n_in];
    for (o, &g) in gout.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        let row = &w[o * n_in..(o + 1) * n_in];
        for (d, &wv) in gx.iter_mut().zip(row) {
            *d += wv * g;
        }
    }
    gx
}

pub(crate) fn dense_backward_weight(x: &[f64], gout: &[f64]) -> Vec<f64> {
    let mut gw = Vec::with_capacity(x.len() * gout.len());
    for &g in gout {
        gw.extend(x.iter().map(|&xv| g * xv));
    }
    gw
}

/// 2x2 stride-2 max pooling over `(c, h, w)`; trailing odd rows and columns
/// are dropped. Returns the pooled values and, per output, the flat input
/// index that won (first maximum in row-major window order).
pub(crate) fn maxpool2_forward(c: usize, h: usize, w: usize, x: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut arg = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        let base = ch * h * w;
        for i in 0..oh {
            for j in 0..ow {
                let mut best = base + (2 * i) * w + 2 * j;
                for (di, dj) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * i + di) * w + 2 * j + dj;
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

/// Numerically stable softmax.
pub(crate) fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|&v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

pub(crate) fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + z.iter().map(|&v| (v - m).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct definition with explicit bounds checks, used as the oracle.
    fn conv_naive(g: ConvGeom, x: &[f64], w: &[f64], b: &[f64]) -> Vec<f64> {
        let pad = (g.k / 2) as isize;
        let mut out = vec![0.0; g.out_c * g.h * g.w];
        for o in 0..g.out_c {
            for i in 0..g.h {
                for j in 0..g.w {
                    let mut acc = b[o];
                    for c in 0..g.in_c {
                        for ki in 0..g.k {
                            for kj in 0..g.k {
                                let si = i as isize + ki as isize - pad;
                                let sj = j as isize + kj as isize - pad;
                                if si < 0 || sj < 0 || si >= g.h as isize || sj >= g.w as isize {
                                    continue;
                                }
                                acc += w[((o * g.in_c + c) * g.k + ki) * g.k + kj]
                                    * x[(c * g.h + si as usize) * g.w + sj as usize];
                            }
                        }
                    }
                    out[(o * g.h + i) * g.w + j] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn conv_matches_naive_definition() {
        let g = ConvGeom { in_c: 2, out_c: 3, h: 5, w: 4, k: 3 };
        let x: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin()).collect();
        let w: Vec<f64> = (0..54).map(|i| (i as f64 * 0.11).cos()).collect();
        let b = vec![0.1, -0.2, 0.3];
        let fast = conv2d_forward(g, &x, &w, &b);
        let slow = conv_naive(g, &x, &w, &b);
        for (a, e) in fast.iter().zip(&slow) {
            assert!((a - e).abs() < 1e-12);
        }
    }

    #[test]
    fn maxpool_ties_go_to_first() {
        let x = vec![1.0, 1.0, 1.0, 1.0];
        let (v, arg) = maxpool2_forward(1, 2, 2, &x);
        assert_eq!(v, vec![1.0]);
        assert_eq!(arg, vec![0]);
    }
}
