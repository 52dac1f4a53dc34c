use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Dataset, LabelVocabulary, LabeledExample};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GlyphShape {
    Disk,
    Square,
    Triangle,
    Ring,
}

impl GlyphShape {
    const ALL: [GlyphShape; 4] = [GlyphShape::Disk, GlyphShape::Square, GlyphShape::Triangle, GlyphShape::Ring];

    fn name(self) -> &'static str {
        match self {
            GlyphShape::Disk => "disk",
            GlyphShape::Square => "square",
            GlyphShape::Triangle => "triangle",
            GlyphShape::Ring => "ring",
        }
    }

    /// Whether local pixel `(row, col)` of a `size`-square box is inked.
    fn covers(self, row: usize, col: usize, size: usize) -> bool {
        let c = (size as f64 - 1.0) / 2.0;
        let r = size as f64 / 2.0;
        let (dy, dx) = (row as f64 - c, col as f64 - c);
        let d2 = dy * dy + dx * dx;
        match self {
            GlyphShape::Disk => d2 <= r * r,
            GlyphShape::Square => true,
            GlyphShape::Triangle => dx.abs() <= (row as f64 + 1.0) / 2.0,
            GlyphShape::Ring => d2 <= r * r && d2 >= (r * 0.5) * (r * 0.5),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Glyph {
    pub shape: GlyphShape,
    pub color: [u8; 3],
}

/// Images of non-overlapping coloured glyphs, one glyph kind per label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    /// `(height, width)`.
    pub canvas: (usize, usize),
    pub num_labels: usize,
    /// Defaults to [`SyntheticSpec::default_glyphs`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub glyph_table: Option<Vec<Glyph>>,
    /// Inclusive `(min, max)` glyphs per image.
    pub objects_per_image: (usize, usize),
    pub num_train: usize,
    pub num_test: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            canvas: (64, 64),
            num_labels: 8,
            glyph_table: None,
            objects_per_image: (1, 4),
            num_train: 256,
            num_test: 64,
            seed: 0,
        }
    }
}

fn hue_color(i: usize, n: usize) -> [u8; 3] {
    let h = 6.0 * i as f64 / n as f64;
    let x = 1.0 - (h % 2.0 - 1.0).abs();
    let (r, g, b) = match h as usize {
        0 => (1.0, x, 0.0),
        1 => (x, 1.0, 0.0),
        2 => (0.0, 1.0, x),
        3 => (0.0, x, 1.0),
        4 => (x, 0.0, 1.0),
        _ => (1.0, 0.0, x),
    };
    [r, g, b].map(|v: f64| (v * 255.0).round() as u8)
}

impl SyntheticSpec {
    /// Shapes cycle through disk, square, triangle, ring; colours are evenly
    /// spaced fully saturated hues.
    pub fn default_glyphs(num_labels: usize) -> Vec<Glyph> {
        (0..num_labels)
            .map(|i| Glyph { shape: GlyphShape::ALL[i % 4], color: hue_color(i, num_labels) })
            .collect()
    }

    pub fn glyphs(&self) -> Vec<Glyph> {
        self.glyph_table.clone().unwrap_or_else(|| Self::default_glyphs(self.num_labels))
    }

    /// Side of the placement grid; each glyph gets its own cell.
    fn grid(&self) -> usize {
        ((self.objects_per_image.1 as f64).sqrt().ceil() as usize).max(2)
    }

    fn glyph_size(&self) -> usize {
        self.canvas.0.min(self.canvas.1) / self.grid() * 3 / 4
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        let (lo, hi) = self.objects_per_image;
        if self.num_labels == 0 {
            return bad("num_labels must be positive".into());
        }
        if lo < 1 || lo > hi || hi > self.num_labels {
            return bad(format!("objects_per_image ({lo}, {hi}) must satisfy 1 <= min <= max <= {}", self.num_labels));
        }
        if self.glyph_size() < 4 {
            return bad(format!("canvas {:?} too small for {hi} glyphs", self.canvas));
        }
        let glyphs = self.glyphs();
        if glyphs.len() != self.num_labels {
            return bad(format!("glyph table has {} entries for {} labels", glyphs.len(), self.num_labels));
        }
        for (i, g) in glyphs.iter().enumerate() {
            if g.color == [0, 0, 0] || glyphs[..i].iter().any(|h| h.color == g.color) {
                return bad(format!("glyph {i} colour {:?} is black or repeated", g.color));
            }
        }
        Ok(())
    }

    pub fn vocabulary(&self) -> Result<LabelVocabulary> {
        LabelVocabulary::new(self.glyphs().iter().enumerate().map(|(i, g)| format!("{}_{i}", g.shape.name())))
    }
}

fn render(spec: &SyntheticSpec, glyphs: &[Glyph], rng: &mut ChaCha8Rng) -> (Vec<f32>, Vec<bool>) {
    let (h, w) = spec.canvas;
    let (lo, hi) = spec.objects_per_image;
    let n = rng.random_range(lo..=hi);
    let labels = sample(rng, spec.num_labels, n).into_vec();
    let grid = spec.grid();
    let cells = sample(rng, grid * grid, n).into_vec();
    let (cell_h, cell_w) = (h / grid, w / grid);
    let size = spec.glyph_size();

    let mut pixels = vec![0f32; h * w * 3];
    let mut target = vec![false; spec.num_labels];
    for (&label, &cell) in labels.iter().zip(&cells) {
        target[label] = true;
        let g = glyphs[label];
        let top = (cell / grid) * cell_h + rng.random_range(0..=cell_h - size);
        let left = (cell % grid) * cell_w + rng.random_range(0..=cell_w - size);
        let color = g.color.map(|c| f32::from(c) / 255.0);
        for r in 0..size {
            for c in 0..size {
                if g.shape.covers(r, c, size) {
                    let o = ((top + r) * w + left + c) * 3;
                    pixels[o..o + 3].copy_from_slice(&color);
                }
            }
        }
    }
    (pixels, target)
}

fn split(spec: &SyntheticSpec, glyphs: &[Glyph], stream: u64, count: usize, tag: &str) -> Result<Vec<LabeledExample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(stream);
    (0..count)
        .map(|i| {
            let (pixels, target) = render(spec, glyphs, &mut rng);
            Ok(LabeledExample {
                image: Tensor::new(pixels, &[spec.canvas.0, spec.canvas.1, 3])?,
                target,
                source_id: format!("{tag}_{i:05}.png"),
            })
        })
        .collect()
}

/// Deterministic in `spec`; train and test come from separate random streams.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let glyphs = spec.glyphs();
    Ok(Dataset {
        train: split(spec, &glyphs, 0, spec.num_train, "train")?,
        test: split(spec, &glyphs, 1, spec.num_test, "test")?,
        vocab: spec.vocabulary()?,
    })
}
