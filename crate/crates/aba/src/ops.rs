//! Forward and backward kernels for the network operators.
//!
//! The autodiff graph and the plain inference paths share these functions.
//! All batch-parallel loops assign whole images to tasks, so every output
//! element keeps a fixed sequential reduction order (see `linalg`).

use crate::error::{AbaError, Result};
use crate::linalg::{axpy, dot, sum_lanes};
use crate::tensor::{Scalar, Tensor};
use rayon::prelude::*;

pub struct ConvDims {
    pub batch: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
}

impl ConvDims {
    pub fn check<T: Scalar>(input: &Tensor<T>, kernel: &Tensor<T>) -> Result<ConvDims> {
        let ishape = input.shape();
        let kshape = kernel.shape();
        if ishape.len() != 4 {
            return Err(AbaError::shape("conv2d input", "B x C x H x W", format!("{:?}", ishape)));
        }
        if kshape.len() != 4 || kshape[2] != kshape[3] {
            return Err(AbaError::shape(
                "conv2d kernel",
                "C_out x C_in x k x k",
                format!("{:?}", kshape),
            ));
        }
        let k = kshape[2];
        if k % 2 == 0 {
            return Err(AbaError::invalid(format!("conv2d kernel size must be odd, got {}", k)));
        }
        if kshape[1] != ishape[1] {
            return Err(AbaError::shape(
                "conv2d channels",
                format!("kernel C_in {}", kshape[1]),
                format!("input C {}", ishape[1]),
            ));
        }
        Ok(ConvDims {
            batch: ishape[0],
            c_in: ishape[1],
            c_out: kshape[0],
            h: ishape[2],
            w: ishape[3],
            k,
        })
    }
}

/// Unpack one image into the patch matrix `col[c_in*k*k][h*w]` (zero padded).
fn im2col<T: Scalar>(img: &[T], c_in: usize, h: usize, w: usize, k: usize, col: &mut [T]) {
    let pad = k / 2;
    let hw = h * w;
    debug_assert_eq!(col.len(), c_in * k * k * hw);
    let mut q = 0;
    for c in 0..c_in {
        let plane = &img[c * hw..(c + 1) * hw];
        for u in 0..k {
            for v in 0..k {
                let row = &mut col[q * hw..(q + 1) * hw];
                for i in 0..h {
                    let dst = &mut row[i * w..(i + 1) * w];
                    let si = i as isize + u as isize - pad as isize;
                    if si < 0 || si >= h as isize {
                        dst.fill(T::zero());
                        continue;
                    }
                    let src = &plane[si as usize * w..(si as usize + 1) * w];
                    // j maps to source column j + v - pad
                    let shift = v as isize - pad as isize;
                    let j_lo = (-shift).max(0) as usize;
                    let j_hi = ((w as isize - shift).min(w as isize)).max(0) as usize;
                    dst[..j_lo].fill(T::zero());
                    dst[j_hi..].fill(T::zero());
                    if j_lo < j_hi {
                        let s_lo = (j_lo as isize + shift) as usize;
                        dst[j_lo..j_hi].copy_from_slice(&src[s_lo..s_lo + (j_hi - j_lo)]);
                    }
                }
                q += 1;
            }
        }
    }
}

/// Scatter-add the patch matrix gradient back into an image gradient.
fn col2im_add<T: Scalar>(col: &[T], c_in: usize, h: usize, w: usize, k: usize, img: &mut [T]) {
    let pad = k / 2;
    let hw = h * w;
    let mut q = 0;
    for c in 0..c_in {
        for u in 0..k {
            for v in 0..k {
                let row = &col[q * hw..(q + 1) * hw];
                for i in 0..h {
                    let si = i as isize + u as isize - pad as isize;
                    if si < 0 || si >= h as isize {
                        continue;
                    }
                    let shift = v as isize - pad as isize;
                    let j_lo = (-shift).max(0) as usize;
                    let j_hi = ((w as isize - shift).min(w as isize)).max(0) as usize;
                    if j_lo < j_hi {
                        let s_lo = (j_lo as isize + shift) as usize;
                        let dst =
                            &mut img[c * hw + si as usize * w..c * hw + (si as usize + 1) * w];
                        axpy(
                            &mut dst[s_lo..s_lo + (j_hi - j_lo)],
                            T::one(),
                            &row[i * w + j_lo..i * w + j_hi],
                        );
                    }
                }
                q += 1;
            }
        }
    }
}

/// Same-padding stride-1 convolution. Output shape equals the input spatial shape.
pub fn conv2d_forward<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: Option<&Tensor<T>>,
) -> Result<Tensor<T>> {
    let d = ConvDims::check(input, kernel)?;
    if let Some(b) = bias {
        if b.shape() != [d.c_out] {
            return Err(AbaError::shape("conv2d bias", format!("[{}]", d.c_out), format!("{:?}", b.shape())));
        }
    }
    let hw = d.h * d.w;
    let q = d.c_in * d.k * d.k;
    let mut out = Tensor::zeros(&[d.batch, d.c_out, d.h, d.w]);
    let wflat = kernel.data();
    let bias_data = bias.map(|b| b.data());
    let run = |img: &[T], col: &mut Vec<T>, out_b: &mut [T]| {
        im2col(img, d.c_in, d.h, d.w, d.k, col);
        for oc in 0..d.c_out {
            let orow = &mut out_b[oc * hw..(oc + 1) * hw];
            match bias_data {
                Some(bd) => orow.fill(bd[oc]),
                None => orow.fill(T::zero()),
            }
            let wrow = &wflat[oc * q..(oc + 1) * q];
            for (p, &wv) in wrow.iter().enumerate() {
                axpy(orow, wv, &col[p * hw..(p + 1) * hw]);
            }
        }
    };
    let in_chunk = d.c_in * hw;
    let out_chunk = d.c_out * hw;
    if d.batch * d.c_out * q * hw >= crate::linalg::PAR_FLOP_THRESHOLD {
        input
            .data()
            .par_chunks(in_chunk)
            .zip(out.data_mut().par_chunks_mut(out_chunk))
            .for_each_init(
                || vec![T::zero(); q * hw],
                |col, (img, out_b)| run(img, col, out_b),
            );
    } else {
        let mut col = vec![T::zero(); q * hw];
        for (img, out_b) in input
            .data()
            .chunks(in_chunk)
            .zip(out.data_mut().chunks_mut(out_chunk))
        {
            run(img, &mut col, out_b);
        }
    }
    Ok(out)
}

pub struct ConvGrads<T> {
    pub d_input: Option<Tensor<T>>,
    pub d_kernel: Option<Tensor<T>>,
    pub d_bias: Option<Tensor<T>>,
}

pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    grad_out: &Tensor<T>,
    need_input: bool,
    need_kernel: bool,
    need_bias: bool,
) -> Result<ConvGrads<T>> {
    let d = ConvDims::check(input, kernel)?;
    let hw = d.h * d.w;
    let q = d.c_in * d.k * d.k;
    let wflat = kernel.data();
    let in_chunk = d.c_in * hw;
    let out_chunk = d.c_out * hw;

    let mut d_input = if need_input {
        Some(Tensor::zeros(&[d.batch, d.c_in, d.h, d.w]))
    } else {
        None
    };

    // Per-image work: optionally fill the input gradient slice, and return
    // this image's kernel/bias gradient contribution. Contributions are
    // summed afterwards in image order so the reduction order is fixed.
    let per_image = |col: &mut Vec<T>,
                     img: &[T],
                     go_b: &[T],
                     dx_b: Option<&mut [T]>|
     -> (Vec<T>, Vec<T>) {
        let mut dw_part = Vec::new();
        let mut db_part = Vec::new();
        if need_kernel {
            im2col(img, d.c_in, d.h, d.w, d.k, col);
            dw_part = vec![T::zero(); d.c_out * q];
            for oc in 0..d.c_out {
                let grow = &go_b[oc * hw..(oc + 1) * hw];
                let dwrow = &mut dw_part[oc * q..(oc + 1) * q];
                for (p, dwv) in dwrow.iter_mut().enumerate() {
                    *dwv = dot(grow, &col[p * hw..(p + 1) * hw]);
                }
            }
        }
        if need_bias {
            db_part = (0..d.c_out)
                .map(|oc| sum_lanes(&go_b[oc * hw..(oc + 1) * hw]))
                .collect();
        }
        if let Some(dx_b) = dx_b {
            // dcol[q][hw] = sum_oc w[oc][q] * grad_out[oc][hw], then fold back.
            col.fill(T::zero());
            for oc in 0..d.c_out {
                let grow = &go_b[oc * hw..(oc + 1) * hw];
                let wrow = &wflat[oc * q..(oc + 1) * q];
                for (p, &wv) in wrow.iter().enumerate() {
                    axpy(&mut col[p * hw..(p + 1) * hw], wv, grow);
                }
            }
            col2im_add(col, d.c_in, d.h, d.w, d.k, dx_b);
        }
        (dw_part, db_part)
    };

    let parts: Vec<(Vec<T>, Vec<T>)> = match d_input.as_mut() {
        Some(dx) => input
            .data()
            .par_chunks(in_chunk)
            .zip(grad_out.data().par_chunks(out_chunk))
            .zip(dx.data_mut().par_chunks_mut(in_chunk))
            .map_init(
                || vec![T::zero(); q * hw],
                |col, ((img, go_b), dx_b)| per_image(col, img, go_b, Some(dx_b)),
            )
            .collect(),
        None => input
            .data()
            .par_chunks(in_chunk)
            .zip(grad_out.data().par_chunks(out_chunk))
            .map_init(
                || vec![T::zero(); q * hw],
                |col, (img, go_b)| per_image(col, img, go_b, None),
            )
            .collect(),
    };

    let d_kernel = if need_kernel {
        let mut acc = Tensor::zeros(kernel.shape());
        for (dw, _) in &parts {
            axpy(acc.data_mut(), T::one(), dw);
        }
        Some(acc)
    } else {
        None
    };
    let d_bias = if need_bias {
        let mut acc = Tensor::zeros(&[d.c_out]);
        for (_, db) in &parts {
            axpy(acc.data_mut(), T::one(), db);
        }
        Some(acc)
    } else {
        None
    };

    Ok(ConvGrads {
        d_input,
        d_kernel,
        d_bias,
    })
}

/// 2x2, stride-2 max pooling. Returns the pooled tensor and the flat argmax
/// index (within each image plane) used to route the gradient; ties go to the
/// first maximum in row-major order.
pub fn max_pool2_forward<T: Scalar>(input: &Tensor<T>) -> Result<(Tensor<T>, Vec<u32>)> {
    let s = input.shape();
    if s.len() != 4 {
        return Err(AbaError::shape("max_pool2 input", "B x C x H x W", format!("{:?}", s)));
    }
    let (b, c, h, w) = (s[0], s[1], s[2], s[3]);
    if h % 2 != 0 || w % 2 != 0 {
        return Err(AbaError::invalid(format!(
            "max_pool2 requires even spatial extent, got {}x{}",
            h, w
        )));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor::zeros(&[b, c, oh, ow]);
    let mut arg = vec![0u32; b * c * oh * ow];
    let data = input.data();
    let od = out.data_mut();
    for bc in 0..b * c {
        let plane = &data[bc * h * w..(bc + 1) * h * w];
        for i in 0..oh {
            for j in 0..ow {
                let mut best_idx = (2 * i) * w + 2 * j;
                let mut best = plane[best_idx];
                for (du, dv) in [(0usize, 1usize), (1, 0), (1, 1)] {
                    let idx = (2 * i + du) * w + (2 * j + dv);
                    if plane[idx] > best {
                        best = plane[idx];
                        best_idx = idx;
                    }
                }
                od[bc * oh * ow + i * ow + j] = best;
                arg[bc * oh * ow + i * ow + j] = best_idx as u32;
            }
        }
    }
    Ok((out, arg))
}

pub fn max_pool2_backward<T: Scalar>(
    input_shape: &[usize],
    arg: &[u32],
    grad_out: &Tensor<T>,
) -> Tensor<T> {
    let (b, c, h, w) = (
        input_shape[0],
        input_shape[1],
        input_shape[2],
        input_shape[3],
    );
    let (oh, ow) = (h / 2, w / 2);
    let mut dx = Tensor::zeros(input_shape);
    let dxd = dx.data_mut();
    let god = grad_out.data();
    for bc in 0..b * c {
        for p in 0..oh * ow {
            let flat = bc * oh * ow + p;
            dxd[bc * h * w + arg[flat] as usize] += god[flat];
        }
    }
    dx
}

pub fn leaky_relu_forward<T: Scalar>(input: &Tensor<T>, slope: f64) -> Tensor<T> {
    if slope == 0.0 {
        // plain relu; max keeps the zero positive so the in-place inference
        // path produces bit-equal activations
        return input.map(|v| v.max(T::zero()));
    }
    let s = T::from_f64(slope);
    input.map(|v| if v >= T::zero() { v } else { s * v })
}

/// Derivative is 1 for x >= 0 (including exactly 0), `slope` otherwise.
pub fn leaky_relu_backward<T: Scalar>(input: &Tensor<T>, grad_out: &Tensor<T>, slope: f64) -> Tensor<T> {
    let s = T::from_f64(slope);
    let mut dx = grad_out.clone();
    for (g, &x) in dx.data_mut().iter_mut().zip(input.data().iter()) {
        if x < T::zero() {
            *g *= s;
        }
    }
    dx
}

/// Fully connected layer: out[B x out] = x[B x in] * W^T + bias, with W
/// stored [out, in] (fan-in contiguous).
pub fn linear_forward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
) -> Result<Tensor<T>> {
    let (xs, ws) = (input.shape(), weight.shape());
    if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[1] {
        return Err(AbaError::shape(
            "linear",
            format!("[B x {}] input for weight {:?}", ws.get(1).copied().unwrap_or(0), ws),
            format!("{:?}", xs),
        ));
    }
    let (b, d_in, d_out) = (xs[0], xs[1], ws[0]);
    if let Some(bt) = bias {
        if bt.shape() != [d_out] {
            return Err(AbaError::shape("linear bias", format!("[{}]", d_out), format!("{:?}", bt.shape())));
        }
    }
    // Transposed weight makes the inner loop an axpy over the output width.
    let mut wt = vec![T::zero(); d_in * d_out];
    crate::linalg::transpose(weight.data(), d_out, d_in, &mut wt);
    let mut out = Tensor::zeros(&[b, d_out]);
    let xd = input.data();
    let bias_data = bias.map(|v| v.data());
    let run = |row: usize, o: &mut [T]| {
        match bias_data {
            Some(bd) => o.copy_from_slice(bd),
            None => o.fill(T::zero()),
        }
        let xr = &xd[row * d_in..(row + 1) * d_in];
        for (i, &xv) in xr.iter().enumerate() {
            axpy(o, xv, &wt[i * d_out..(i + 1) * d_out]);
        }
    };
    if b * d_in * d_out >= crate::linalg::PAR_FLOP_THRESHOLD {
        out.data_mut()
            .par_chunks_mut(d_out)
            .enumerate()
            .for_each(|(r, o)| run(r, o));
    } else {
        for (r, o) in out.data_mut().chunks_mut(d_out).enumerate() {
            run(r, o);
        }
    }
    Ok(out)
}

pub struct LinearGrads<T> {
    pub d_input: Option<Tensor<T>>,
    pub d_weight: Option<Tensor<T>>,
    pub d_bias: Option<Tensor<T>>,
}

pub fn linear_backward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
    need_input: bool,
    need_weight: bool,
    need_bias: bool,
) -> Result<LinearGrads<T>> {
    let (b, d_in) = (input.shape()[0], input.shape()[1]);
    let d_out = weight.shape()[0];
    let god = grad_out.data();
    let d_input = if need_input {
        let mut dx = Tensor::zeros(&[b, d_in]);
        let wd = weight.data();
        let run = |row: usize, o: &mut [T]| {
            let gr = &god[row * d_out..(row + 1) * d_out];
            for (oc, &gv) in gr.iter().enumerate() {
                axpy(o, gv, &wd[oc * d_in..(oc + 1) * d_in]);
            }
        };
        if b * d_in * d_out >= crate::linalg::PAR_FLOP_THRESHOLD {
            dx.data_mut()
                .par_chunks_mut(d_in)
                .enumerate()
                .for_each(|(r, o)| run(r, o));
        } else {
            for (r, o) in dx.data_mut().chunks_mut(d_in).enumerate() {
                run(r, o);
            }
        }
        Some(dx)
    } else {
        None
    };
    let d_weight = if need_weight {
        // dW[o][i] = sum_b grad[b][o] * x[b][i]; the batch loop stays
        // sequential so the reduction order is fixed.
        let mut dw = Tensor::zeros(&[d_out, d_in]);
        let xd = input.data();
        let dwd = dw.data_mut();
        for r in 0..b {
            let xr = &xd[r * d_in..(r + 1) * d_in];
            let gr = &god[r * d_out..(r + 1) * d_out];
            for (oc, &gv) in gr.iter().enumerate() {
                axpy(&mut dwd[oc * d_in..(oc + 1) * d_in], gv, xr);
            }
        }
        Some(dw)
    } else {
        None
    };
    let d_bias = if need_bias {
        let mut db = Tensor::zeros(&[d_out]);
        let dbd = db.data_mut();
        for r in 0..b {
            axpy(dbd, T::one(), &god[r * d_out..(r + 1) * d_out]);
        }
        Some(db)
    } else {
        None
    };
    Ok(LinearGrads {
        d_input,
        d_weight,
        d_bias,
    })
}

/// Row-wise softmax of a B x K matrix.
pub fn softmax_forward<T: Scalar>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    let s = logits.shape();
    if s.len() != 2 {
        return Err(AbaError::shape("softmax input", "B x K", format!("{:?}", s)));
    }
    let k = s[1];
    let mut out = logits.clone();
    for row in out.data_mut().chunks_mut(k) {
        let m = row.iter().cloned().fold(T::neg_infinity(), T::max);
        let mut z = T::zero();
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            z += *v;
        }
        for v in row.iter_mut() {
            *v /= z;
        }
    }
    Ok(out)
}

/// dL/dlogits for y = softmax(x): s * (g - <g, s>) per row.
pub fn softmax_backward<T: Scalar>(softmax_out: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    let k = softmax_out.shape()[1];
    let mut dx = Tensor::zeros(softmax_out.shape());
    for ((drow, srow), grow) in dx
        .data_mut()
        .chunks_mut(k)
        .zip(softmax_out.data().chunks(k))
        .zip(grad_out.data().chunks(k))
    {
        let mut gs = T::zero();
        for (g, s) in grow.iter().zip(srow.iter()) {
            gs += *g * *s;
        }
        for ((d, &s), &g) in drow.iter_mut().zip(srow.iter()).zip(grow.iter()) {
            *d = s * (g - gs);
        }
    }
    dx
}

/// Mean negative log-softmax at the label index; the cross-entropy loss.
pub fn log_softmax_nll_forward<T: Scalar>(logits: &Tensor<T>, labels: &[usize]) -> Result<T> {
    let s = logits.shape();
    if s.len() != 2 || s[0] != labels.len() {
        return Err(AbaError::shape(
            "log_softmax_nll",
            format!("B x K with B == {} labels", labels.len()),
            format!("{:?}", s),
        ));
    }
    let k = s[1];
    let mut total = T::zero();
    for (row, &label) in logits.data().chunks(k).zip(labels.iter()) {
        if label >= k {
            return Err(AbaError::invalid(format!(
                "label {} out of range for {} classes",
                label, k
            )));
        }
        let m = row.iter().cloned().fold(T::neg_infinity(), T::max);
        let mut z = T::zero();
        for &v in row {
            z += (v - m).exp();
        }
        total += m + z.ln() - row[label];
    }
    Ok(total / T::from_f64(labels.len() as f64))
}

pub fn log_softmax_nll_backward<T: Scalar>(
    logits: &Tensor<T>,
    labels: &[usize],
    grad: T,
) -> Tensor<T> {
    let k = logits.shape()[1];
    let b = labels.len();
    let scale = grad / T::from_f64(b as f64);
    let mut dx = Tensor::zeros(logits.shape());
    for ((drow, row), &label) in dx
        .data_mut()
        .chunks_mut(k)
        .zip(logits.data().chunks(k))
        .zip(labels.iter())
    {
        let m = row.iter().cloned().fold(T::neg_infinity(), T::max);
        let mut z = T::zero();
        for &v in row {
            z += (v - m).exp();
        }
        for (d, &v) in drow.iter_mut().zip(row.iter()) {
            *d = scale * (v - m).exp() / z;
        }
        drow[label] -= scale;
    }
    dx
}

/// Floor applied inside logarithms to avoid -inf on saturated distributions.
pub const LOG_FLOOR: f64 = 1e-12;

/// Tolerance for the row-normalization precondition of `kl_categorical`.
pub const ROW_SUM_TOL: f64 = 1e-6;

fn check_rows_normalized<T: Scalar>(t: &Tensor<T>, what: &'static str) -> Result<()> {
    let k = t.shape()[1];
    let tol = T::from_f64(ROW_SUM_TOL);
    for row in t.data().chunks(k) {
        let mut s = T::zero();
        for &v in row {
            s += v;
        }
        if (s - T::one()).abs() > tol {
            return Err(AbaError::invalid(format!(
                "{} row not normalized: sum = {}",
                what, s
            )));
        }
    }
    Ok(())
}

/// Batch-mean KL divergence between rows of two categorical distributions.
pub fn kl_categorical_forward<T: Scalar>(p: &Tensor<T>, q: &Tensor<T>) -> Result<T> {
    if p.shape() != q.shape() || p.shape().len() != 2 {
        return Err(AbaError::shape(
            "kl_categorical",
            format!("{:?}", p.shape()),
            format!("{:?}", q.shape()),
        ));
    }
    check_rows_normalized(p, "kl_categorical p")?;
    check_rows_normalized(q, "kl_categorical q")?;
    let floor = T::from_f64(LOG_FLOOR);
    let b = p.shape()[0];
    let mut total = T::zero();
    for (&pv, &qv) in p.data().iter().zip(q.data().iter()) {
        if pv > T::zero() {
            let lp = pv.max(floor).ln();
            let lq = qv.max(floor).ln();
            total += pv * (lp - lq);
        }
    }
    Ok(total / T::from_f64(b as f64))
}

pub fn kl_categorical_backward<T: Scalar>(
    p: &Tensor<T>,
    q: &Tensor<T>,
    grad: T,
) -> (Tensor<T>, Tensor<T>) {
    let floor = T::from_f64(LOG_FLOOR);
    let b = p.shape()[0];
    let scale = grad / T::from_f64(b as f64);
    let mut dp = Tensor::zeros(p.shape());
    let mut dq = Tensor::zeros(q.shape());
    for (((dpv, dqv), &pv), &qv) in dp
        .data_mut()
        .iter_mut()
        .zip(dq.data_mut().iter_mut())
        .zip(p.data().iter())
        .zip(q.data().iter())
    {
        let pf = pv.max(floor);
        let qf = qv.max(floor);
        let mut g = pf.ln() - qf.ln();
        if pv > floor {
            g += T::one();
        }
        *dpv = scale * g;
        if qv > floor {
            *dqv = -scale * pv / qf;
        }
    }
    (dp, dq)
}

/// Numerically stable ln(1 + e^x).
#[inline]
pub fn softplus<T: Scalar>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Inverse of `softplus`; useful for initializing rho from a target sigma.
pub fn softplus_inv(sigma: f64) -> f64 {
    // ln(e^s - 1), computed to avoid overflow for large s
    if sigma > 30.0 {
        sigma
    } else {
        sigma.exp_m1().ln()
    }
}

/// Closed-form KL(N(mu, sigma^2) || N(0, prior_var)) summed over all entries,
/// with sigma = softplus(rho).
pub fn gaussian_kl_prior_forward<T: Scalar>(mu: &Tensor<T>, rho: &Tensor<T>, prior_var: f64) -> T {
    let s2 = T::from_f64(prior_var);
    let half = T::from_f64(0.5);
    let log_s = T::from_f64(prior_var.sqrt().ln());
    let mut total = T::zero();
    for (&m, &r) in mu.data().iter().zip(rho.data().iter()) {
        let sig = softplus(r);
        total += log_s - sig.ln() + (sig * sig + m * m) / (s2 + s2) - half;
    }
    total
}

pub fn gaussian_kl_prior_backward<T: Scalar>(
    mu: &Tensor<T>,
    rho: &Tensor<T>,
    prior_var: f64,
    grad: T,
) -> (Tensor<T>, Tensor<T>) {
    let s2 = T::from_f64(prior_var);
    let mut dmu = Tensor::zeros(mu.shape());
    let mut drho = Tensor::zeros(rho.shape());
    for (((dm, dr), &m), &r) in dmu
        .data_mut()
        .iter_mut()
        .zip(drho.data_mut().iter_mut())
        .zip(mu.data().iter())
        .zip(rho.data().iter())
    {
        let sig = softplus(r);
        *dm = grad * m / s2;
        let dsig = sig / s2 - T::one() / sig;
        *dr = grad * dsig * sigmoid(r);
    }
    (dmu, drho)
}
