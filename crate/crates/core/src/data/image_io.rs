use std::path::Path;

use image::imageops::{self, FilterType};
use image::{ImageBuffer, Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Decodes an 8-bit image as `(H, W, 3)` values in `[0, 1]`, resized to
/// `size` (height, width) when it differs.
pub fn load_image(path: impl AsRef<Path>, size: Option<(usize, usize)>) -> Result<Tensor<f32>> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(Error::MissingImage(path.to_path_buf()));
    }
    let rgb = image::open(path)?.to_rgb8();
    let t = rgb_to_tensor(&rgb)?;
    match size {
        Some(s) if s != (t.shape()[0], t.shape()[1]) => resize_bilinear(&t, s),
        _ => Ok(t),
    }
}

pub fn rgb_to_tensor(img: &RgbImage) -> Result<Tensor<f32>> {
    let (w, h) = img.dimensions();
    let data = img.as_raw().iter().map(|&v| f32::from(v) / 255.0).collect();
    Tensor::new(data, &[h as usize, w as usize, 3])
}

/// Rounds `(H, W, 3)` values in `[0, 1]` to 8 bits.
pub fn tensor_to_rgb(t: &Tensor<f32>) -> Result<RgbImage> {
    let &[h, w, 3] = t.shape() else {
        return Err(Error::shape("tensor_to_rgb", format!("expected (H, W, 3), got {:?}", t.shape())));
    };
    let raw = t.data().iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    Ok(RgbImage::from_raw(w as u32, h as u32, raw).expect("buffer matches dims"))
}

pub fn save_png(path: impl AsRef<Path>, t: &Tensor<f32>) -> Result<()> {
    tensor_to_rgb(t)?.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

/// Bilinear (triangle filter) resize of an `(H, W, 3)` tensor.
pub fn resize_bilinear(t: &Tensor<f32>, (height, width): (usize, usize)) -> Result<Tensor<f32>> {
    let &[h, w, 3] = t.shape() else {
        return Err(Error::shape("resize", format!("expected (H, W, 3), got {:?}", t.shape())));
    };
    let src: ImageBuffer<Rgb<f32>, Vec<f32>> =
        ImageBuffer::from_raw(w as u32, h as u32, t.to_vec()).expect("buffer matches dims");
    let out = imageops::resize(&src, width as u32, height as u32, FilterType::Triangle);
    let data = out.into_raw().into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
    Tensor::new(data, &[height, width, 3])
}
