//! Procedural stand-ins for face images and detector output.
//!
//! [`synth_face`] draws a frontal cartoon face (hair, ears, skin, brows, eyes,
//! nose, mouth) and returns detections whose boxes are the exact extents of the
//! drawn parts. [`template_detections`] produces jittered boxes from an aligned
//! face template for images whose geometry is unknown.

use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{save_rgb, DatasetLayout, HR_SIZE};
use crate::error::{Error, Result};
use crate::heatmap::{to_detections_jsonl, BBox, DetectionEntry, ImageDetections, Label};
use crate::tensor::Tensor;

const SUPERSAMPLE: usize = 4;

struct Canvas {
    rgb: Vec<[f64; 3]>,
}

#[derive(Clone, Copy)]
struct Ellipse {
    cx: f64,
    cy: f64,
    rx: f64,
    ry: f64,
}

impl Ellipse {
    fn new(cx: f64, cy: f64, rx: f64, ry: f64) -> Self {
        Self { cx, cy, rx, ry }
    }

    fn inside(&self, x: f64, y: f64) -> bool {
        let (dx, dy) = ((x - self.cx) / self.rx, (y - self.cy) / self.ry);
        dx * dx + dy * dy <= 1.0
    }

    fn bbox(&self) -> BBox {
        let n = HR_SIZE as f64;
        BBox::new(
            (self.cx - self.rx).floor().clamp(0.0, n) as i64,
            (self.cy - self.ry).floor().clamp(0.0, n) as i64,
            (self.cx + self.rx).ceil().clamp(0.0, n) as i64,
            (self.cy + self.ry).ceil().clamp(0.0, n) as i64,
        )
    }
}

fn union(a: BBox, b: BBox) -> BBox {
    BBox::new(a.x1.min(b.x1), a.y1.min(b.y1), a.x2.max(b.x2), a.y2.max(b.y2))
}

impl Canvas {
    fn new() -> Self {
        Self {
            rgb: vec![[0.0; 3]; HR_SIZE * HR_SIZE],
        }
    }

    /// Blends `color` over the ellipse with anti-aliased coverage; `shade` scales
    /// the colour by a function of the normalized radius.
    fn ellipse(&mut self, e: Ellipse, color: [f64; 3], alpha: f64, shade: impl Fn(f64) -> f64) {
        let b = e.bbox();
        let step = 1.0 / SUPERSAMPLE as f64;
        for y in b.y1..b.y2 {
            for x in b.x1..b.x2 {
                let mut hits = 0;
                for sy in 0..SUPERSAMPLE {
                    for sx in 0..SUPERSAMPLE {
                        let px = x as f64 + (sx as f64 + 0.5) * step;
                        let py = y as f64 + (sy as f64 + 0.5) * step;
                        hits += e.inside(px, py) as usize;
                    }
                }
                if hits == 0 {
                    continue;
                }
                let cov = alpha * hits as f64 / (SUPERSAMPLE * SUPERSAMPLE) as f64;
                let (dx, dy) = ((x as f64 + 0.5 - e.cx) / e.rx, (y as f64 + 0.5 - e.cy) / e.ry);
                let s = shade((dx * dx + dy * dy).sqrt());
                let px = &mut self.rgb[y as usize * HR_SIZE + x as usize];
                for c in 0..3 {
                    px[c] = px[c] * (1.0 - cov) + (color[c] * s).clamp(0.0, 1.0) * cov;
                }
            }
        }
    }

    fn to_tensor(&self) -> Tensor<f64> {
        Tensor::from_fn(3, HR_SIZE, HR_SIZE, |c, y, x| self.rgb[y * HR_SIZE + x][c] * 2.0 - 1.0)
    }
}

fn jitter(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.gen_range(lo..hi)
}

fn color_near(rng: &mut ChaCha8Rng, base: [f64; 3], spread: f64) -> [f64; 3] {
    base.map(|v| (v + rng.gen_range(-spread..spread)).clamp(0.0, 1.0))
}

fn flat(_: f64) -> f64 {
    1.0
}

/// Rendered image in `[-1, 1]` plus its detections.
#[derive(Clone, Debug)]
pub struct SyntheticFace {
    pub image: Tensor<f64>,
    pub detections: ImageDetections,
}

/// Per-image generator; `index` selects an independent stream under `seed`.
fn face_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub fn synth_face(image_id: &str, seed: u64, index: u64) -> SyntheticFace {
    let mut rng = face_rng(seed, index);
    let mut canvas = Canvas::new();

    let top = [jitter(&mut rng, 0.2, 0.9), jitter(&mut rng, 0.2, 0.9), jitter(&mut rng, 0.2, 0.9)];
    let bottom = color_near(&mut rng, top, 0.3);
    for y in 0..HR_SIZE {
        let t = y as f64 / (HR_SIZE - 1) as f64;
        for x in 0..HR_SIZE {
            canvas.rgb[y * HR_SIZE + x] = [0, 1, 2].map(|c| top[c] * (1.0 - t) + bottom[c] * t);
        }
    }

    let cx = 64.0 + jitter(&mut rng, -4.0, 4.0);
    let cy = 68.0 + jitter(&mut rng, -4.0, 4.0);
    let rx = jitter(&mut rng, 34.0, 41.0);
    let ry = jitter(&mut rng, 44.0, 50.0);
    let tone = jitter(&mut rng, 0.55, 1.08);
    let skin = color_near(&mut rng, [0.86 * tone, 0.66 * tone, 0.54 * tone], 0.04);
    let shade = jitter(&mut rng, 0.12, 1.0);
    let hair = color_near(&mut rng, [0.55 * shade, 0.38 * shade, 0.22 * shade], 0.05);
    let dark = skin.map(|v| v * 0.55);

    let hair_back = Ellipse::new(cx, cy - ry * 0.3, rx * 1.12, ry * 0.82);
    canvas.ellipse(hair_back, hair, 1.0, |r| 1.0 - 0.2 * r);

    let ear_ry = jitter(&mut rng, 9.0, 13.0);
    let ear_rx = jitter(&mut rng, 5.0, 7.5);
    let ear_y = cy + jitter(&mut rng, -4.0, 2.0);
    let ears = [-1.0, 1.0].map(|s| Ellipse::new(cx + s * rx * 0.98, ear_y, ear_rx, ear_ry));
    for e in ears {
        canvas.ellipse(e, skin.map(|v| v * 0.9), 1.0, |r| 1.0 - 0.25 * r);
        canvas.ellipse(Ellipse::new(e.cx, e.cy, e.rx * 0.45, e.ry * 0.6), dark, 0.6, flat);
    }

    let face = Ellipse::new(cx, cy, rx, ry);
    canvas.ellipse(face, skin, 1.0, |r| 1.05 - 0.2 * r * r);
    let fringe = Ellipse::new(cx + jitter(&mut rng, -6.0, 6.0), cy - ry * 0.86, rx * 0.95, ry * 0.32);
    canvas.ellipse(fringe, hair, 1.0, |r| 1.0 - 0.15 * r);

    let eye_dx = jitter(&mut rng, 13.0, 17.0);
    let eye_y = cy - jitter(&mut rng, 6.0, 11.0);
    let eye_rx = jitter(&mut rng, 5.5, 7.5);
    let eye_ry = jitter(&mut rng, 2.8, 4.0);
    let iris_color = color_near(&mut rng, [0.3, 0.35, 0.4], 0.2);
    let eyes = [-1.0, 1.0].map(|s| Ellipse::new(cx + s * eye_dx, eye_y, eye_rx, eye_ry));
    let look = jitter(&mut rng, -1.5, 1.5);
    for e in eyes {
        canvas.ellipse(e, [0.95, 0.95, 0.93], 1.0, flat);
        let r = eye_ry * 0.85;
        canvas.ellipse(Ellipse::new(e.cx + look, e.cy, r, r), iris_color, 1.0, |t| 1.0 - 0.3 * t);
        canvas.ellipse(Ellipse::new(e.cx + look, e.cy, r * 0.45, r * 0.45), [0.03; 3], 1.0, flat);
    }

    let brow_gap = jitter(&mut rng, 6.0, 9.0);
    let brow_ry = jitter(&mut rng, 1.3, 2.4);
    let brows = [-1.0, 1.0].map(|s| {
        Ellipse::new(cx + s * (eye_dx + 0.5), eye_y - brow_gap, eye_rx * 1.35, brow_ry)
    });
    for b in brows {
        canvas.ellipse(b, hair, 0.95, flat);
    }

    let nose_y = eye_y + jitter(&mut rng, 16.0, 21.0);
    let bridge = Ellipse::new(cx, (eye_y + nose_y) / 2.0, 2.2, (nose_y - eye_y) / 2.0);
    canvas.ellipse(bridge, skin.map(|v| v * 0.85), 0.7, |r| 1.0 - 0.1 * r);
    let tip = Ellipse::new(cx, nose_y, jitter(&mut rng, 4.5, 6.5), jitter(&mut rng, 3.0, 4.0));
    canvas.ellipse(tip, skin.map(|v| v * 0.92), 1.0, |r| 1.08 - 0.2 * r);
    for s in [-1.0, 1.0] {
        canvas.ellipse(Ellipse::new(cx + s * tip.rx * 0.55, nose_y + tip.ry * 0.55, 1.4, 1.0), dark, 1.0, flat);
    }

    let mouth_y = nose_y + jitter(&mut rng, 10.0, 14.0);
    let lips = color_near(&mut rng, [0.72, 0.3, 0.32], 0.12);
    let mouth = Ellipse::new(cx, mouth_y, jitter(&mut rng, 8.5, 13.0), jitter(&mut rng, 2.5, 4.5));
    canvas.ellipse(mouth, lips, 1.0, |r| 1.0 - 0.2 * r);
    canvas.ellipse(Ellipse::new(cx, mouth_y, mouth.rx * 0.85, 0.7), lips.map(|v| v * 0.45), 1.0, flat);

    let chin = Ellipse::new(cx, cy + ry * 0.82, rx * 0.42, ry * 0.2);

    let nose_box = union(bridge.bbox(), tip.bbox());
    let head_box = union(union(hair_back.bbox(), face.bbox()), union(ears[0].bbox(), ears[1].bbox()));
    let mut parts: Vec<(Label, BBox)> = vec![
        (Label::Head, head_box),
        (Label::Face, face.bbox()),
        (Label::Chin, chin.bbox()),
        (Label::Nose, nose_box),
        (Label::NoseTip, tip.bbox()),
        (Label::Mouth, mouth.bbox()),
    ];
    for i in 0..2 {
        parts.push((Label::Eyes, eyes[i].bbox()));
        parts.push((Label::Eyebrows, brows[i].bbox()));
        parts.push((Label::Ears, ears[i].bbox()));
    }
    let detections = parts
        .into_iter()
        .map(|(label, bbox)| DetectionEntry {
            label,
            confidence: (rng.gen_range(0.3..0.95f64) * 1000.0).round() / 1000.0,
            bbox,
        })
        .collect();
    SyntheticFace {
        image: canvas.to_tensor(),
        detections: ImageDetections {
            image_id: image_id.to_string(),
            detections,
        },
    }
}

/// Jittered boxes from an aligned 128x128 face template; geometry of the
/// actual image is not consulted.
pub fn template_detections(image_id: &str, seed: u64, index: u64) -> ImageDetections {
    let mut rng = face_rng(seed, index);
    let template: [(Label, [f64; 4]); 12] = [
        (Label::Head, [14.0, 4.0, 114.0, 124.0]),
        (Label::Face, [26.0, 22.0, 102.0, 118.0]),
        (Label::Eyes, [36.0, 52.0, 56.0, 62.0]),
        (Label::Eyes, [72.0, 52.0, 92.0, 62.0]),
        (Label::Eyebrows, [32.0, 42.0, 58.0, 49.0]),
        (Label::Eyebrows, [70.0, 42.0, 96.0, 49.0]),
        (Label::Nose, [56.0, 54.0, 72.0, 82.0]),
        (Label::NoseTip, [58.0, 72.0, 70.0, 82.0]),
        (Label::Mouth, [48.0, 88.0, 80.0, 100.0]),
        (Label::Chin, [48.0, 102.0, 80.0, 118.0]),
        (Label::Ears, [16.0, 56.0, 28.0, 84.0]),
        (Label::Ears, [100.0, 56.0, 112.0, 84.0]),
    ];
    let (dx, dy) = (rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0));
    let detections = template
        .iter()
        .map(|(label, b)| {
            let j = |rng: &mut ChaCha8Rng, v: f64, d: f64| {
                (v + d + rng.gen_range(-1.5..1.5)).round().clamp(0.0, HR_SIZE as f64) as i64
            };
            let x1 = j(&mut rng, b[0], dx);
            let y1 = j(&mut rng, b[1], dy);
            let x2 = j(&mut rng, b[2], dx).max(x1 + 2).min(HR_SIZE as i64);
            let y2 = j(&mut rng, b[3], dy).max(y1 + 2).min(HR_SIZE as i64);
            DetectionEntry {
                label: *label,
                confidence: (rng.gen_range(0.3..0.95f64) * 1000.0).round() / 1000.0,
                bbox: BBox::new(x1.min(x2 - 1), y1.min(y2 - 1), x2, y2),
            }
        })
        .collect();
    ImageDetections {
        image_id: image_id.to_string(),
        detections,
    }
}

pub fn synth_id(index: usize) -> String {
    format!("synth_{index:06}")
}

/// Writes `count` synthetic faces to `{root}/hr` and their detections to
/// `{root}/detections.jsonl`. Returns the ids in order.
pub fn write_synthetic_dataset(root: &Path, count: usize, seed: u64) -> Result<Vec<String>> {
    let layout = DatasetLayout::new(root);
    std::fs::create_dir_all(layout.hr_dir()).map_err(|e| Error::io(layout.hr_dir(), e))?;
    let mut ids = Vec::with_capacity(count);
    let mut records = Vec::with_capacity(count);
    for i in 0..count {
        let id = synth_id(i);
        let face = synth_face(&id, seed, i as u64);
        save_rgb(layout.hr_path(&id), &face.image)?;
        records.push(face.detections);
        ids.push(id);
    }
    let path = layout.detections_path();
    std::fs::write(&path, to_detections_jsonl(&records)?).map_err(|e| Error::io(&path, e))?;
    Ok(ids)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn faces_are_deterministic_and_valid() {
        let a = synth_face("x", 7, 3);
        let b = synth_face("x", 7, 3);
        assert_eq!(a.image, b.image);
        assert_eq!(a.detections, b.detections);
        assert_ne!(synth_face("x", 7, 4).image, a.image);
        a.detections.validate(HR_SIZE, HR_SIZE).unwrap();
        assert_eq!(a.detections.detections.len(), 12);
        assert!(a.image.data().iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn template_boxes_are_valid() {
        for i in 0..50 {
            let d = template_detections("t", 1, i);
            d.validate(HR_SIZE, HR_SIZE).unwrap();
            assert!(Label::ALL.iter().all(|l| d.detections.iter().any(|e| e.label == *l)));
        }
    }
}
