//! PSNR and SSIM for frames with unit peak value.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::image::Plane;
use crate::qtcodec::Region;
use crate::scalar::Scalar;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

pub fn mse<T: Scalar>(a: &Plane<T>, b: &Plane<T>) -> Result<f64> {
    a.check_same_dims(b)?;
    if a.is_empty() {
        return Err(Error::InvalidValue("MSE of empty images".into()));
    }
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = x.as_f64() - y.as_f64();
            d * d
        })
        .sum();
    Ok(sum / a.len() as f64)
}

/// `10 log10(1 / MSE)`; identical images give `f64::INFINITY`.
pub fn psnr<T: Scalar>(a: &Plane<T>, b: &Plane<T>) -> Result<f64> {
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(-10.0 * m.log10())
}

/// Normalized 1-D Gaussian; the 2-D window is its outer product.
pub fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let c = (SSIM_WINDOW / 2) as f64;
    let mut g: [f64; SSIM_WINDOW] =
        std::array::from_fn(|i| (-((i as f64 - c).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp());
    let s: f64 = g.iter().sum();
    for v in &mut g {
        *v /= s;
    }
    g
}

/// Separable "valid" filtering: only windows lying fully inside the image.
fn filter_valid(img: &[f64], h: usize, w: usize, g: &[f64; SSIM_WINDOW]) -> (Vec<f64>, usize, usize) {
    let (oh, ow) = (h + 1 - SSIM_WINDOW, w + 1 - SSIM_WINDOW);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = g.iter().enumerate().map(|(k, &gk)| gk * img[y * w + x + k]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = g.iter().enumerate().map(|(k, &gk)| gk * rows[(y + k) * ow + x]).sum();
        }
    }
    (out, oh, ow)
}

/// Local SSIM from window moments; written so swapping `a` and `b` gives
/// bit-identical results.
#[inline]
pub(crate) fn ssim_from_moments(mu_a: f64, mu_b: f64, e_aa: f64, e_bb: f64, e_ab: f64) -> f64 {
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let var_a = e_aa - mu_a * mu_a;
    let var_b = e_bb - mu_b * mu_b;
    let cov = e_ab - mu_a * mu_b;
    ((2.0 * (mu_a * mu_b) + c1) * (2.0 * cov + c2)) / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2))
}

/// Mean SSIM over all fully valid 11x11 Gaussian windows (sigma 1.5,
/// K1 = 0.01, K2 = 0.03, dynamic range 1).
pub fn ssim<T: Scalar>(a: &Plane<T>, b: &Plane<T>) -> Result<f64> {
    a.check_same_dims(b)?;
    let (h, w) = a.dims();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::InvalidValue(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {h}x{w}"
        )));
    }
    let g = gaussian_window();
    let av: Vec<f64> = a.data().iter().map(|v| v.as_f64()).collect();
    let bv: Vec<f64> = b.data().iter().map(|v| v.as_f64()).collect();
    let prod = |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(p, q)| p * q).collect() };
    let (mu_a, oh, ow) = filter_valid(&av, h, w, &g);
    let (mu_b, ..) = filter_valid(&bv, h, w, &g);
    let (e_aa, ..) = filter_valid(&prod(&av, &av), h, w, &g);
    let (e_bb, ..) = filter_valid(&prod(&bv, &bv), h, w, &g);
    let (e_ab, ..) = filter_valid(&prod(&av, &bv), h, w, &g);
    let total: f64 = (0..oh * ow)
        .map(|i| ssim_from_moments(mu_a[i], mu_b[i], e_aa[i], e_bb[i], e_ab[i]))
        .sum();
    Ok(total / (oh * ow) as f64)
}

/// Quality of one frame, optionally with values for a highlighted crop.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameQuality {
    pub frame_index: usize,
    pub psnr: f64,
    pub ssim: f64,
    pub psnr_roi: Option<f64>,
    pub ssim_roi: Option<f64>,
}

impl FrameQuality {
    pub fn measure<T: Scalar>(frame_index: usize, reference: &Plane<T>, test: &Plane<T>, roi: Option<Region>) -> Result<Self> {
        let (psnr_roi, ssim_roi) = match roi {
            Some(r) => {
                let a = reference.crop(r.y0, r.x0, r.height, r.width)?;
                let b = test.crop(r.y0, r.x0, r.height, r.width)?;
                (Some(psnr(&a, &b)?), Some(ssim(&a, &b)?))
            }
            None => (None, None),
        };
        Ok(Self { frame_index, psnr: psnr(reference, test)?, ssim: ssim(reference, test)?, psnr_roi, ssim_roi })
    }

    /// `PSNR: 20.70 (23.23)` style label; the crop value is in parentheses.
    pub fn psnr_label(&self) -> String {
        match self.psnr_roi {
            Some(r) => format!("PSNR: {:.2} ({:.2})", self.psnr, r),
            None => format!("PSNR: {:.2}", self.psnr),
        }
    }

    pub fn ssim_label(&self) -> String {
        match self.ssim_roi {
            Some(r) => format!("SSIM: {:.4} ({:.4})", self.ssim, r),
            None => format!("SSIM: {:.4}", self.ssim),
        }
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn mean(vals: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut s, mut n) = (0.0, 0usize);
    for v in vals {
        s += v;
        n += 1;
    }
    (n > 0).then(|| s / n as f64)
}

/// Per-frame metrics of one image sequence against its reference.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct QualityReport {
    pub frames: Vec<FrameQuality>,
}

impl QualityReport {
    pub fn mean_psnr(&self) -> Option<f64> {
        mean(self.frames.iter().map(|f| f.psnr))
    }

    pub fn mean_ssim(&self) -> Option<f64> {
        mean(self.frames.iter().map(|f| f.ssim))
    }

    pub fn mean_psnr_roi(&self) -> Option<f64> {
        mean(self.frames.iter().filter_map(|f| f.psnr_roi))
    }

    pub fn mean_ssim_roi(&self) -> Option<f64> {
        mean(self.frames.iter().filter_map(|f| f.ssim_roi))
    }

    /// `frame_index,psnr,ssim,psnr_roi,ssim_roi`; empty cells when no crop
    /// was given, `inf` for identical frames.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("frame_index,psnr,ssim,psnr_roi,ssim_roi\n");
        for f in &self.frames {
            let _ = writeln!(s, "{},{},{},{},{}", f.frame_index, f.psnr, f.ssim, opt(f.psnr_roi), opt(f.ssim_roi));
        }
        s
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        for f in &self.frames {
            let _ = writeln!(s, "frame {:>6}  {}  {}", f.frame_index, f.psnr_label(), f.ssim_label());
        }
        let _ = writeln!(s, "frames: {}", self.frames.len());
        let _ = writeln!(s, "mean PSNR: {}", fmt_mean(self.mean_psnr(), 4));
        let _ = writeln!(s, "mean SSIM: {}", fmt_mean(self.mean_ssim(), 4));
        if self.frames.iter().any(|f| f.psnr_roi.is_some()) {
            let _ = writeln!(s, "mean PSNR (crop): {}", fmt_mean(self.mean_psnr_roi(), 4));
            let _ = writeln!(s, "mean SSIM (crop): {}", fmt_mean(self.mean_ssim_roi(), 4));
        }
        s
    }
}

pub(crate) fn fmt_mean(v: Option<f64>, prec: usize) -> String {
    v.map(|x| format!("{x:.prec$}")).unwrap_or_else(|| "n/a".into())
}

/// Parses a `x,y,w,h` crop rectangle.
pub fn parse_rect(s: &str) -> Result<Region> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::InvalidValue(format!("bad rectangle {s:?}, expected x,y,w,h")))?;
    match parts[..] {
        [x0, y0, width, height] if width > 0 && height > 0 => Ok(Region { x0, y0, width, height }),
        _ => Err(Error::InvalidValue(format!("bad rectangle {s:?}, expected x,y,w,h"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_frames() {
        let a = Plane::from_fn(12, 12, |y, x| ((y * 5 + x * 3) % 7) as f64 / 6.0);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        assert_eq!(ssim(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn uniform_offset_is_twenty_db() {
        let a = Plane::filled(4, 4, 0.2);
        let b = Plane::filled(4, 4, 0.3);
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-9);
    }

    #[test]
    fn constant_black_vs_white() {
        let a = Plane::filled(11, 11, 0.0);
        let b = Plane::filled(11, 11, 1.0);
        let expected = 1e-4 / (1.0 + 1e-4);
        assert!((ssim(&a, &b).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn too_small_for_ssim() {
        let a = Plane::<f64>::zeros(10, 20);
        assert!(ssim(&a, &a).is_err());
        assert!(psnr(&a, &Plane::zeros(10, 21)).is_err());
    }

    #[test]
    fn window_sums_to_one() {
        let s: f64 = gaussian_window().iter().sum();
        assert!((s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn report_csv_and_labels() {
        let q = FrameQuality { frame_index: 1, psnr: 20.7, ssim: 0.7893, psnr_roi: Some(23.23), ssim_roi: Some(0.8119) };
        assert_eq!(q.psnr_label(), "PSNR: 20.70 (23.23)");
        assert_eq!(q.ssim_label(), "SSIM: 0.7893 (0.8119)");
        let r = QualityReport {
            frames: vec![q, FrameQuality { frame_index: 2, psnr: f64::INFINITY, ssim: 1.0, psnr_roi: None, ssim_roi: None }],
        };
        let csv = r.to_csv();
        assert!(csv.contains("1,20.7,0.7893,23.23,0.8119\n"));
        assert!(csv.contains("2,inf,1,,\n"));
    }

    #[test]
    fn rect_parsing() {
        assert_eq!(parse_rect("1,2,30,40").unwrap(), Region { x0: 1, y0: 2, width: 30, height: 40 });
        assert!(parse_rect("1,2,3").is_err());
        assert!(parse_rect("1,2,0,4").is_err());
    }
}
