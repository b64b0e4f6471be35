//! PSNR, SSIM and MS-SSIM on `[0, 1]` images.
//!
//! All arithmetic is done in `f64` whatever the tensor scalar is. Multi-channel
//! SSIM is the mean of the per-channel values.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Grid, Tensor};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
pub const MS_SSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];
/// Stand-in for an infinite PSNR in serialized output.
pub const PSNR_CAP_DB: f64 = 100.0;

/// Which representation the metrics see.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColorSpace {
    #[default]
    Rgb,
    /// BT.601 luma only.
    Luma,
}

impl std::str::FromStr for ColorSpace {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rgb" => Ok(Self::Rgb),
            "luma" | "y" => Ok(Self::Luma),
            other => Err(Error::invalid_config(format!("unknown colour space `{other}`"))),
        }
    }
}

fn planes<T: Scalar>(t: &Tensor<T>) -> Vec<Grid<f64>> {
    (0..t.channels())
        .map(|c| {
            Grid::from_vec(
                t.width(),
                t.height(),
                t.plane(c).iter().map(|v| v.to_f64_lossy()).collect(),
            )
            .expect("plane shape")
        })
        .collect()
}

/// Converts a `[0, 1]` tensor to the requested colour space.
pub fn to_space<T: Scalar>(t: &Tensor<T>, space: ColorSpace) -> Tensor<T> {
    match space {
        ColorSpace::Rgb => t.clone(),
        ColorSpace::Luma if t.channels() == 3 => {
            let (r, g, b) = (t.plane(0), t.plane(1), t.plane(2));
            let y = (0..r.len())
                .map(|i| T::of(0.299) * r[i] + T::of(0.587) * g[i] + T::of(0.114) * b[i])
                .collect();
            Tensor::from_vec(1, t.height(), t.width(), y).expect("plane shape")
        }
        ColorSpace::Luma => t.clone(),
    }
}

/// `10 log10(peak^2 / MSE)`; `+inf` for identical inputs.
pub fn psnr<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, peak: f64) -> Result<f64> {
    a.ensure_shape(b, "psnr inputs")?;
    if a.is_empty() {
        return Err(Error::invalid_input("psnr of empty images"));
    }
    let mse = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| {
            let d = x.to_f64_lossy() - y.to_f64_lossy();
            d * d
        })
        .sum::<f64>()
        / a.len() as f64;
    Ok(if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / mse).log10()
    })
}

/// Normalized 1D Gaussian of length `size`.
pub fn gaussian_window(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let raw: Vec<f64> = (0..size)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

/// Separable filtering over valid positions only.
fn filter_valid(g: &Grid<f64>, k: &[f64]) -> Grid<f64> {
    let n = k.len();
    let (w, h) = (g.width(), g.height());
    let (ow, oh) = (w + 1 - n, h + 1 - n);
    let rows = Grid::from_fn(ow, h, |x, y| (0..n).map(|i| k[i] * g.get(x + i, y)).sum::<f64>());
    Grid::from_fn(ow, oh, |x, y| (0..n).map(|i| k[i] * rows.get(x, y + i)).sum::<f64>())
}

/// Mean SSIM and mean contrast-structure term for one channel.
fn ssim_plane(a: &Grid<f64>, b: &Grid<f64>, window: usize) -> (f64, f64) {
    let k = gaussian_window(window, SSIM_SIGMA);
    let c1 = (SSIM_K1 * 1.0f64).powi(2);
    let c2 = (SSIM_K2 * 1.0f64).powi(2);
    let mu_a = filter_valid(a, &k);
    let mu_b = filter_valid(b, &k);
    let aa = filter_valid(&a.zip_map(a, |x, y| x * y), &k);
    let bb = filter_valid(&b.zip_map(b, |x, y| x * y), &k);
    let ab = filter_valid(&a.zip_map(b, |x, y| x * y), &k);
    let n = mu_a.len() as f64;
    let (mut s_sum, mut cs_sum) = (0.0, 0.0);
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a.data()[i], mu_b.data()[i]);
        let va = aa.data()[i] - ma * ma;
        let vb = bb.data()[i] - mb * mb;
        let cov = ab.data()[i] - ma * mb;
        let cs = (2.0 * cov + c2) / (va + vb + c2);
        let l = (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1);
        s_sum += l * cs;
        cs_sum += cs;
    }
    (s_sum / n, cs_sum / n)
}

fn ssim_cs(a: &[Grid<f64>], b: &[Grid<f64>], window: usize) -> (f64, f64) {
    let parts: Vec<(f64, f64)> = a.iter().zip(b).map(|(x, y)| ssim_plane(x, y, window)).collect();
    let n = parts.len() as f64;
    (
        parts.iter().map(|p| p.0).sum::<f64>() / n,
        parts.iter().map(|p| p.1).sum::<f64>() / n,
    )
}

/// Gaussian-windowed SSIM (11x11, sigma 1.5, dynamic range 1), averaged over valid windows and channels.
pub fn ssim<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    a.ensure_shape(b, "ssim inputs")?;
    if a.height() < SSIM_WINDOW || a.width() < SSIM_WINDOW {
        return Err(Error::invalid_input(format!(
            "ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {}x{}",
            a.width(),
            a.height()
        )));
    }
    Ok(ssim_cs(&planes(a), &planes(b), SSIM_WINDOW).0)
}

fn avg_pool2(g: &Grid<f64>) -> Grid<f64> {
    Grid::from_fn(g.width() / 2, g.height() / 2, |x, y| {
        (g.get(2 * x, 2 * y) + g.get(2 * x + 1, 2 * y) + g.get(2 * x, 2 * y + 1) + g.get(2 * x + 1, 2 * y + 1))
            / 4.0
    })
}

/// Smallest side that still yields five dyadic scales of at least 2 pixels.
pub const MS_SSIM_MIN_SIDE: usize = 32;

/// Five-scale MS-SSIM with 2x2 average pooling between scales.
///
/// At scales smaller than the 11-pixel window, the window shrinks to the image
/// side. Negative per-scale terms are clamped to zero before the product.
pub fn ms_ssim<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    a.ensure_shape(b, "ms-ssim inputs")?;
    if a.height().min(a.width()) < MS_SSIM_MIN_SIDE {
        return Err(Error::invalid_input(format!(
            "ms-ssim needs at least {MS_SSIM_MIN_SIDE}x{MS_SSIM_MIN_SIDE} pixels, got {}x{}",
            a.width(),
            a.height()
        )));
    }
    let (mut pa, mut pb) = (planes(a), planes(b));
    let mut value = 1.0;
    for (scale, &w) in MS_SSIM_WEIGHTS.iter().enumerate() {
        let side = pa[0].width().min(pa[0].height());
        let (s, cs) = ssim_cs(&pa, &pb, SSIM_WINDOW.min(side));
        let term = if scale + 1 == MS_SSIM_WEIGHTS.len() { s } else { cs };
        value *= term.max(0.0).powf(w);
        if scale + 1 < MS_SSIM_WEIGHTS.len() {
            pa = pa.iter().map(avg_pool2).collect();
            pb = pb.iter().map(avg_pool2).collect();
        }
    }
    Ok(value)
}

/// Metrics for one image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageMetrics {
    pub image_id: String,
    /// Capped at [`PSNR_CAP_DB`] when the images are identical.
    pub psnr_db: f64,
    pub psnr_infinite: bool,
    pub ssim: f64,
    pub ms_ssim: f64,
}

impl ImageMetrics {
    /// Computes all metrics from `[-1, 1]` tensors.
    pub fn compute<T: Scalar>(
        image_id: impl Into<String>,
        pred: &Tensor<T>,
        target: &Tensor<T>,
        space: ColorSpace,
    ) -> Result<Self> {
        let a = to_space(&pred.to_unit_range(), space);
        let b = to_space(&target.to_unit_range(), space);
        let p = psnr(&a, &b, 1.0)?;
        Ok(Self {
            image_id: image_id.into(),
            psnr_db: p.min(PSNR_CAP_DB),
            psnr_infinite: p.is_infinite(),
            ssim: ssim(&a, &b)?,
            ms_ssim: ms_ssim(&a, &b)?,
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricMeans {
    pub psnr_db: f64,
    pub ssim: f64,
    pub ms_ssim: f64,
}

/// Per-image metrics plus their arithmetic means.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub color_space: ColorSpace,
    pub count: usize,
    pub mean: MetricMeans,
    #[serde(skip)]
    pub images: Vec<ImageMetrics>,
}

impl MetricReport {
    pub fn from_images(images: Vec<ImageMetrics>, color_space: ColorSpace) -> Self {
        let n = images.len().max(1) as f64;
        let mean = MetricMeans {
            psnr_db: images.iter().map(|m| m.psnr_db).sum::<f64>() / n,
            ssim: images.iter().map(|m| m.ssim).sum::<f64>() / n,
            ms_ssim: images.iter().map(|m| m.ms_ssim).sum::<f64>() / n,
        };
        Self {
            color_space,
            count: images.len(),
            mean,
            images,
        }
    }

    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for m in &self.images {
            w.serialize(m).map_err(|e| Error::data(format!("csv: {e}")))?;
        }
        w.flush().map_err(|e| Error::data(format!("csv: {e}")))?;
        Ok(())
    }

    pub fn save(&self, csv_path: impl AsRef<Path>, json_path: impl AsRef<Path>) -> Result<()> {
        let csv_path = csv_path.as_ref();
        let f = std::fs::File::create(csv_path).map_err(|e| Error::io(csv_path, e))?;
        self.write_csv(f)?;
        let json_path = json_path.as_ref();
        std::fs::write(json_path, serde_json::to_string_pretty(self)? + "\n")
            .map_err(|e| Error::io(json_path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img(seed: u64, c: usize, n: usize) -> Tensor<f64> {
        use rand::{Rng, SeedableRng};
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(c, n, n, |_, _, _| r.gen::<f64>())
    }

    #[test]
    fn psnr_closed_forms() {
        let a = Tensor::filled(3, 4, 4, 0.5f64);
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), f64::INFINITY);
        let b = a.map(|v| v + 0.1);
        assert!((psnr(&a, &b, 1.0).unwrap() - 20.0).abs() < 1e-9);
        let z = Tensor::zeros(3, 4, 4);
        assert!((psnr(&a, &z, 1.0).unwrap() - 6.020599913279624).abs() < 1e-12);
    }

    #[test]
    fn ssim_identity_and_luminance_only_case() {
        let a = img(1, 3, 16);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let c = Tensor::filled(1, 16, 16, 0.4f64);
        let d = c.map(|v| v + 0.1);
        let c1 = 1e-4;
        let want = (2.0 * 0.4 * 0.5 + c1) / (0.16 + 0.25 + c1);
        assert!((ssim(&c, &d).unwrap() - want).abs() < 1e-10);
        assert!(ssim(&Tensor::<f64>::zeros(1, 8, 8), &Tensor::zeros(1, 8, 8)).is_err());
    }

    #[test]
    fn ms_ssim_bounds() {
        let a = img(2, 3, 64);
        let b = a.map(|v| (v * 0.8 + 0.1).min(1.0));
        assert!((ms_ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let v = ms_ssim(&a, &b).unwrap();
        assert!((0.0..=1.0).contains(&v));
        assert!(ms_ssim(&img(3, 1, 16), &img(4, 1, 16)).is_err());
    }

    #[test]
    fn report_means_and_csv() {
        let ims = vec![
            ImageMetrics {
                image_id: "a".into(),
                psnr_db: 20.0,
                psnr_infinite: false,
                ssim: 0.5,
                ms_ssim: 0.6,
            },
            ImageMetrics {
                image_id: "b".into(),
                psnr_db: PSNR_CAP_DB,
                psnr_infinite: true,
                ssim: 1.0,
                ms_ssim: 1.0,
            },
        ];
        let r = MetricReport::from_images(ims, ColorSpace::Rgb);
        assert_eq!(r.mean.psnr_db, 60.0);
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("image_id,psnr_db,psnr_infinite,ssim,ms_ssim\n"));
        assert!(text.contains("b,100.0,true,1.0,1.0"));
    }
}
