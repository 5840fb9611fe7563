//! 3D convolution kernels (im2col + GEMM) on `[batch, channels, d, h, w]` layouts.
//!
//! The three kernels are the three faces of one trilinear form
//! `<y, conv(x, w)>`, so each one's gradient is expressed by the other two.

/// Cubic kernel geometry shared by a convolution and its transpose.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ConvGeometry {
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeometry {
    pub const fn new(kernel: usize, stride: usize, pad: usize) -> Self {
        Self {
            kernel,
            stride,
            pad,
        }
    }

    /// `k = 1, s = 1, p = 0`.
    pub const fn pointwise() -> Self {
        Self::new(1, 1, 0)
    }

    /// Output length along one axis, or `None` when the kernel does not fit.
    pub fn output_len(&self, n: usize) -> Option<usize> {
        let padded = n + 2 * self.pad;
        if padded < self.kernel || self.stride == 0 {
            return None;
        }
        Some((padded - self.kernel) / self.stride + 1)
    }

    pub fn output_dims(&self, dims: [usize; 3]) -> Option<[usize; 3]> {
        Some([
            self.output_len(dims[0])?,
            self.output_len(dims[1])?,
            self.output_len(dims[2])?,
        ])
    }

    fn is_pointwise(&self) -> bool {
        self.kernel == 1 && self.stride == 1 && self.pad == 0
    }

    fn taps(&self) -> usize {
        self.kernel * self.kernel * self.kernel
    }
}

/// `c[m,n] = beta * c + op(a)[m,k] * op(b)[k,n]` with row-major storage.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_trans: bool,
    b: &[f64],
    b_trans: bool,
    beta: f64,
    c: &mut [f64],
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if a_trans { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_trans { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the slices cover exactly the strided extents given above.
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

fn im2col(x: &[f64], channels: usize, dims: [usize; 3], geo: ConvGeometry, out: [usize; 3], col: &mut [f64]) {
    let k = geo.kernel;
    let p: usize = out.iter().product();
    let [d, h, w] = dims;
    let (s, pad) = (geo.stride as isize, geo.pad as isize);
    for c in 0..channels {
        let xc = &x[c * d * h * w..(c + 1) * d * h * w];
        for kd in 0..k {
            for kh in 0..k {
                for kw in 0..k {
                    let row = ((c * k + kd) * k + kh) * k + kw;
                    let dst = &mut col[row * p..(row + 1) * p];
                    let mut idx = 0;
                    for od in 0..out[0] {
                        let id = od as isize * s - pad + kd as isize;
                        let d_ok = id >= 0 && (id as usize) < d;
                        for oh in 0..out[1] {
                            let ih = oh as isize * s - pad + kh as isize;
                            let dh_ok = d_ok && ih >= 0 && (ih as usize) < h;
                            let base = if dh_ok { (id as usize * h + ih as usize) * w } else { 0 };
                            for ow in 0..out[2] {
                                let iw = ow as isize * s - pad + kw as isize;
                                dst[idx] = if dh_ok && iw >= 0 && (iw as usize) < w {
                                    xc[base + iw as usize]
                                } else {
                                    0.0
                                };
                                idx += 1;
                            }
                        }
                    }
                }
            }
        }
    }
}

fn col2im(col: &[f64], channels: usize, dims: [usize; 3], geo: ConvGeometry, out: [usize; 3], x: &mut [f64]) {
    let k = geo.kernel;
    let p: usize = out.iter().product();
    let [d, h, w] = dims;
    let (s, pad) = (geo.stride as isize, geo.pad as isize);
    for c in 0..channels {
        let xc = &mut x[c * d * h * w..(c + 1) * d * h * w];
        for kd in 0..k {
            for kh in 0..k {
                for kw in 0..k {
                    let row = ((c * k + kd) * k + kh) * k + kw;
                    let src = &col[row * p..(row + 1) * p];
                    let mut idx = 0;
                    for od in 0..out[0] {
                        let id = od as isize * s - pad + kd as isize;
                        let d_ok = id >= 0 && (id as usize) < d;
                        for oh in 0..out[1] {
                            let ih = oh as isize * s - pad + kh as isize;
                            let dh_ok = d_ok && ih >= 0 && (ih as usize) < h;
                            let base = if dh_ok { (id as usize * h + ih as usize) * w } else { 0 };
                            for ow in 0..out[2] {
                                let iw = ow as isize * s - pad + kw as isize;
                                if dh_ok && iw >= 0 && (iw as usize) < w {
                                    xc[base + iw as usize] += src[idx];
                                }
                                idx += 1;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Shapes of one convolution: `x [b, cin, dims]`, `w [cout, cin, k, k, k]`, `y [b, cout, out]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ConvShape {
    pub batch: usize,
    pub cin: usize,
    pub cout: usize,
    pub dims: [usize; 3],
    pub out: [usize; 3],
    pub geo: ConvGeometry,
}

impl ConvShape {
    fn in_len(&self) -> usize {
        self.cin * self.dims.iter().product::<usize>()
    }
    fn out_pixels(&self) -> usize {
        self.out.iter().product()
    }
    fn rows(&self) -> usize {
        self.cin * self.geo.taps()
    }
}

pub(crate) fn conv_forward(x: &[f64], w: &[f64], cs: &ConvShape) -> Vec<f64> {
    let p = cs.out_pixels();
    let mut y = vec![0.0; cs.batch * cs.cout * p];
    let pointwise = cs.geo.is_pointwise();
    let mut col = if pointwise { Vec::new() } else { vec![0.0; cs.rows() * p] };
    for b in 0..cs.batch {
        let xb = &x[b * cs.in_len()..(b + 1) * cs.in_len()];
        let yb = &mut y[b * cs.cout * p..(b + 1) * cs.cout * p];
        if pointwise {
            gemm(cs.cout, cs.cin, p, w, false, xb, false, 0.0, yb);
        } else {
            im2col(xb, cs.cin, cs.dims, cs.geo, cs.out, &mut col);
            gemm(cs.cout, cs.rows(), p, w, false, &col, false, 0.0, yb);
        }
    }
    y
}

/// Adjoint of [`conv_forward`] in `x`: maps `gy [b, cout, out]` to `[b, cin, dims]`.
pub(crate) fn conv_transpose(gy: &[f64], w: &[f64], cs: &ConvShape) -> Vec<f64> {
    let p = cs.out_pixels();
    let mut gx = vec![0.0; cs.batch * cs.in_len()];
    let pointwise = cs.geo.is_pointwise();
    let mut col = if pointwise { Vec::new() } else { vec![0.0; cs.rows() * p] };
    for b in 0..cs.batch {
        let gyb = &gy[b * cs.cout * p..(b + 1) * cs.cout * p];
        let gxb = &mut gx[b * cs.in_len()..(b + 1) * cs.in_len()];
        if pointwise {
            gemm(cs.cin, cs.cout, p, w, true, gyb, false, 0.0, gxb);
        } else {
            gemm(cs.rows(), cs.cout, p, w, true, gyb, false, 0.0, &mut col);
            col2im(&col, cs.cin, cs.dims, cs.geo, cs.out, gxb);
        }
    }
    gx
}

/// Adjoint of [`conv_forward`] in `w`: correlates `x` with `gy` into `[cout, cin, k, k, k]`.
pub(crate) fn conv_weight(x: &[f64], gy: &[f64], cs: &ConvShape) -> Vec<f64> {
    let p = cs.out_pixels();
    let mut gw = vec![0.0; cs.cout * cs.rows()];
    let pointwise = cs.geo.is_pointwise();
    let mut col = if pointwise { Vec::new() } else { vec![0.0; cs.rows() * p] };
    for b in 0..cs.batch {
        let xb = &x[b * cs.in_len()..(b + 1) * cs.in_len()];
        let gyb = &gy[b * cs.cout * p..(b + 1) * cs.cout * p];
        if pointwise {
            gemm(cs.cout, p, cs.cin, gyb, false, xb, true, 1.0, &mut gw);
        } else {
            im2col(xb, cs.cin, cs.dims, cs.geo, cs.out, &mut col);
            gemm(cs.cout, p, cs.rows(), gyb, false, &col, true, 1.0, &mut gw);
        }
    }
    gw
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_conv(x: &[f64], w: &[f64], cs: &ConvShape) -> Vec<f64> {
        let k = cs.geo.kernel;
        let [d, h, wd] = cs.dims;
        let [od, oh, ow] = cs.out;
        let mut y = vec![0.0; cs.batch * cs.cout * od * oh * ow];
        for b in 0..cs.batch {
            for co in 0..cs.cout {
                for z in 0..od {
                    for yy in 0..oh {
                        for xx in 0..ow {
                            let mut acc = 0.0;
                            for ci in 0..cs.cin {
                                for a in 0..k {
                                    for bb in 0..k {
                                        for c in 0..k {
                                            let iz = (z * cs.geo.stride + a) as isize - cs.geo.pad as isize;
                                            let iy = (yy * cs.geo.stride + bb) as isize - cs.geo.pad as isize;
                                            let ix = (xx * cs.geo.stride + c) as isize - cs.geo.pad as isize;
                                            if iz < 0 || iy < 0 || ix < 0 {
                                                continue;
                                            }
                                            let (iz, iy, ix) = (iz as usize, iy as usize, ix as usize);
                                            if iz >= d || iy >= h || ix >= wd {
                                                continue;
                                            }
                                            let xv = x[(((b * cs.cin + ci) * d + iz) * h + iy) * wd + ix];
                                            let wv = w[(((co * cs.cin + ci) * k + a) * k + bb) * k + c];
                                            acc += xv * wv;
                                        }
                                    }
                                }
                            }
                            y[(((b * cs.cout + co) * od + z) * oh + yy) * ow + xx] = acc;
                        }
                    }
                }
            }
        }
        y
    }

    fn pseudo(n: usize, seed: u64) -> Vec<f64> {
        let mut s = seed;
        (0..n)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
            })
            .collect()
    }

    fn shape(geo: ConvGeometry) -> ConvShape {
        let dims = [6, 5, 4];
        ConvShape {
            batch: 2,
            cin: 3,
            cout: 2,
            dims,
            out: geo.output_dims(dims).unwrap(),
            geo,
        }
    }

    #[test]
    fn forward_matches_naive_loop() {
        for geo in [ConvGeometry::new(4, 2, 1), ConvGeometry::new(3, 1, 1), ConvGeometry::pointwise()] {
            let cs = shape(geo);
            let x = pseudo(cs.batch * cs.in_len(), 1);
            let w = pseudo(cs.cout * cs.rows(), 2);
            let fast = conv_forward(&x, &w, &cs);
            let slow = naive_conv(&x, &w, &cs);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn transpose_and_weight_kernels_are_adjoints() {
        for geo in [ConvGeometry::new(4, 2, 1), ConvGeometry::pointwise()] {
            let cs = shape(geo);
            let x = pseudo(cs.batch * cs.in_len(), 3);
            let w = pseudo(cs.cout * cs.rows(), 4);
            let gy = pseudo(cs.batch * cs.cout * cs.out_pixels(), 5);
            let y = conv_forward(&x, &w, &cs);
            let lhs: f64 = y.iter().zip(&gy).map(|(a, b)| a * b).sum();
            let gx = conv_transpose(&gy, &w, &cs);
            let via_x: f64 = gx.iter().zip(&x).map(|(a, b)| a * b).sum();
            let gw = conv_weight(&x, &gy, &cs);
            let via_w: f64 = gw.iter().zip(&w).map(|(a, b)| a * b).sum();
            assert!((lhs - via_x).abs() < 1e-10 * lhs.abs().max(1.0));
            assert!((lhs - via_w).abs() < 1e-10 * lhs.abs().max(1.0));
        }
    }

    #[test]
    fn strided_ladder_halves_each_axis() {
        let geo = ConvGeometry::new(4, 2, 1);
        assert_eq!(geo.output_dims([64, 64, 64]), Some([32, 32, 32]));
        assert_eq!(geo.output_len(2), Some(1));
        assert_eq!(geo.output_len(1), None);
    }
}
