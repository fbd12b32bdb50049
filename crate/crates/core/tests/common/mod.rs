//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use everest::evsim::SimConfig;
use everest::nn::{Mode, ModelParams};
use everest::qtcodec::QuadTree;
use everest::{Frame, Plane, Tensor3};
use rand::Rng;

pub fn random_frame(rng: &mut impl Rng, h: usize, w: usize) -> Frame {
    Plane::from_fn(h, w, |_, _| rng.gen::<f64>())
}

pub fn random_tensor(rng: &mut impl Rng, c: usize, h: usize, w: usize) -> Tensor3<f64> {
    Tensor3::from_vec(c, h, w, (0..c * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn px(img: &Frame, y: isize, x: isize) -> f64 {
    let (h, w) = img.dims();
    img.get(y.clamp(0, h as isize - 1) as usize, x.clamp(0, w as isize - 1) as usize)
}

/// Sobel responses straight from the 3x3 kernels with edge replication.
pub fn naive_sobel(img: &Frame, y: usize, x: usize) -> (f64, f64) {
    let kx = [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]];
    let (mut gx, mut gy) = (0.0, 0.0);
    for dy in 0..3 {
        for dx in 0..3 {
            let v = px(img, y as isize + dy as isize - 1, x as isize + dx as isize - 1);
            gx += kx[dy][dx] * v;
            gy += kx[dx][dy] * v;
        }
    }
    (gx, gy)
}

/// Per-pixel loss: `sum ((1 + lf E)(f - r))^2 + sum (lt (4 - E) g)^2` over both directions.
pub fn naive_loss(f: &Frame, r: &Frame, ebar: &Frame, lambda_fid: f64, lambda_tv: f64) -> f64 {
    let (h, w) = f.dims();
    let mut fid = 0.0;
    let mut tv = 0.0;
    for y in 0..h {
        for x in 0..w {
            let e = ebar.get(y, x);
            let d = (1.0 + lambda_fid * e) * (f.get(y, x) - r.get(y, x));
            fid += d * d;
            let (gx, gy) = naive_sobel(r, y, x);
            let k = lambda_tv * (4.0 - e);
            tv += (k * gx).powi(2) + (k * gy).powi(2);
        }
    }
    fid + tv
}

/// Event times per pixel found by stepping the log-intensity path in
/// `substeps` increments and bisecting each bracketed crossing.
pub fn dense_events(prev: &Frame, next: &Frame, t0: f64, t1: f64, cfg: SimConfig, substeps: usize) -> Vec<Vec<(f64, i8)>> {
    let lg = |v: f64| (v + cfg.log_eps).ln();
    prev.data()
        .iter()
        .zip(next.data())
        .map(|(&a, &b)| {
            let (l0, l1) = (lg(a), lg(b));
            let path = |s: f64| l0 + s * (l1 - l0);
            let mut reference = l0;
            let mut out = Vec::new();
            let mut s_prev = 0.0;
            for k in 1..=substeps {
                let s = k as f64 / substeps as f64;
                loop {
                    let l = path(s);
                    let (target, p) = if l - reference >= cfg.threshold {
                        (reference + cfg.threshold, 1i8)
                    } else if reference - l >= cfg.threshold {
                        (reference - cfg.threshold, -1i8)
                    } else {
                        break;
                    };
                    let (mut lo, mut hi) = (s_prev, s);
                    for _ in 0..80 {
                        let mid = 0.5 * (lo + hi);
                        let reached = if p > 0 { path(mid) >= target } else { path(mid) <= target };
                        if reached {
                            hi = mid;
                        } else {
                            lo = mid;
                        }
                    }
                    out.push((t0 + hi * (t1 - t0), p));
                    reference = target;
                    s_prev = hi;
                }
                s_prev = s;
            }
            out
        })
        .collect()
}

/// Two-pass MSE then PSNR with unit peak.
pub fn two_pass_psnr(a: &Frame, b: &Frame) -> f64 {
    let n = a.len() as f64;
    let diffs: Vec<f64> = a.data().iter().zip(b.data()).map(|(x, y)| x - y).collect();
    let mean_sq = diffs.iter().map(|d| d * d).sum::<f64>() / n;
    10.0 * (1.0 / mean_sq).log10()
}

/// SSIM with every 11x11 window evaluated directly (weighted two-pass moments).
pub fn brute_ssim(a: &Frame, b: &Frame) -> f64 {
    let (h, w) = a.dims();
    let n = 11;
    let sigma: f64 = 1.5;
    let g1: Vec<f64> = (0..n).map(|i| (-((i as f64 - 5.0).powi(2)) / (2.0 * sigma * sigma)).exp()).collect();
    let mut win = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            win[i * n + j] = g1[i] * g1[j];
        }
    }
    let total: f64 = win.iter().sum();
    win.iter_mut().for_each(|v| *v /= total);
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let mut acc = 0.0;
    let mut count = 0;
    for y0 in 0..=h - n {
        for x0 in 0..=w - n {
            let (mut ma, mut mb) = (0.0, 0.0);
            for i in 0..n {
                for j in 0..n {
                    ma += win[i * n + j] * a.get(y0 + i, x0 + j);
                    mb += win[i * n + j] * b.get(y0 + i, x0 + j);
                }
            }
            let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
            for i in 0..n {
                for j in 0..n {
                    let da = a.get(y0 + i, x0 + j) - ma;
                    let db = b.get(y0 + i, x0 + j) - mb;
                    va += win[i * n + j] * da * da;
                    vb += win[i * n + j] * db * db;
                    cov += win[i * n + j] * da * db;
                }
            }
            acc += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    acc / count as f64
}

/// Paints each leaf with its 8-bit value.
pub fn paint_leaves(tree: &QuadTree) -> Frame {
    let (h, w) = tree.dims();
    let mut out = Plane::zeros(h, w);
    for (r, mean) in tree.leaves() {
        let level = (mean * 255.0).round().clamp(0.0, 255.0) / 255.0;
        for y in r.y0..r.y0 + r.height {
            for x in r.x0..r.x0 + r.width {
                out.set(y, x, level);
            }
        }
    }
    out
}

pub fn mse(a: &Frame, b: &Frame) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64
}

/// Scalar objective `sum_i <weights_i, net(batch)_i>` used for finite differences.
pub fn probe_objective(params: &ModelParams<f64>, batch: &[Tensor3<f64>], weights: &[Frame], mode: Mode) -> f64 {
    let (out, _) = params.forward_batch(batch, mode).unwrap();
    out.iter()
        .zip(weights)
        .map(|(o, w)| o.data().iter().zip(w.data()).map(|(a, b)| a * b).sum::<f64>())
        .sum()
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}
