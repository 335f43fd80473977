//! Raster file io: 8-bit PNG/PGM/PPM for images, 16-bit grayscale PNG for
//! attribution maps. Loads divide integer intensities by the type maximum;
//! saves clamp to `[0, 1]` and round half up. All writes go through a
//! temporary file renamed into place so readers never observe partial output.

use std::fs;
use std::io::Cursor;
use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{DynamicImage, ExtendedColorType, ImageEncoder, ImageFormat};

use super::{Image, ScalarField};
use crate::error::{Error, Result};

/// Quantizes a unit-interval value to 8 bits, rounding half up.
#[inline]
pub fn quantize8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Quantizes a unit-interval value to 16 bits, rounding half up.
#[inline]
pub fn quantize16(v: f64) -> u16 {
    (v.clamp(0.0, 1.0) * 65535.0).round() as u16
}

fn format_for(path: &Path) -> Result<ImageFormat> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .unwrap_or_default();
    match ext.as_str() {
        "png" => Ok(ImageFormat::Png),
        "pgm" | "ppm" | "pnm" => Ok(ImageFormat::Pnm),
        other => Err(Error::invalid(format!(
            "unsupported image extension {other:?} for {}",
            path.display()
        ))),
    }
}

/// Writes `bytes` to `path` atomically via a sibling temp file.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Loads an 8- or 16-bit PNG/PGM/PPM into the unit interval. Alpha channels
/// are dropped; sample depth sets the divisor (255 or 65535).
pub fn load_image(path: &Path) -> Result<Image> {
    let dynamic = image::open(path)?;
    let (w, h) = (dynamic.width() as usize, dynamic.height() as usize);
    let (channels, data): (usize, Vec<f64>) = match dynamic {
        DynamicImage::ImageLuma8(buf) => {
            (1, buf.into_raw().iter().map(|&v| v as f64 / 255.0).collect())
        }
        DynamicImage::ImageLumaA8(buf) => (
            1,
            buf.into_raw().chunks_exact(2).map(|px| px[0] as f64 / 255.0).collect(),
        ),
        DynamicImage::ImageRgb8(buf) => {
            (3, buf.into_raw().iter().map(|&v| v as f64 / 255.0).collect())
        }
        DynamicImage::ImageRgba8(buf) => (
            3,
            buf.into_raw()
                .chunks_exact(4)
                .flat_map(|px| px[..3].iter().map(|&v| v as f64 / 255.0).collect::<Vec<_>>())
                .collect(),
        ),
        DynamicImage::ImageLuma16(buf) => {
            (1, buf.into_raw().iter().map(|&v| v as f64 / 65535.0).collect())
        }
        DynamicImage::ImageRgb16(buf) => {
            (3, buf.into_raw().iter().map(|&v| v as f64 / 65535.0).collect())
        }
        other => {
            return Err(Error::invalid(format!(
                "unsupported pixel layout {:?} in {}",
                other.color(),
                path.display()
            )))
        }
    };
    Image::new(h, w, channels, data)
}

/// Saves an image as 8-bit PNG/PGM/PPM chosen by extension. PGM forces
/// grayscale and PPM forces RGB via channel conversion (raw P5/P6
/// encodings); PNG keeps the image's own channel count.
pub fn save_image(path: &Path, image: &Image) -> Result<()> {
    format_for(path)?;
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or_default()
        .to_ascii_lowercase();
    let image = match ext.as_str() {
        "pgm" => image.to_channels(1)?,
        "ppm" | "pnm" => image.to_channels(3)?,
        _ => image.clone(),
    };
    let (h, w) = (image.height() as u32, image.width() as u32);
    let raw: Vec<u8> = image.data().iter().map(|&v| quantize8(v)).collect();
    let mut bytes = Vec::new();
    if ext == "png" {
        let dynamic = match image.channels() {
            1 => DynamicImage::ImageLuma8(
                image::GrayImage::from_raw(w, h, raw)
                    .ok_or_else(|| Error::invalid("buffer size mismatch"))?,
            ),
            _ => DynamicImage::ImageRgb8(
                image::RgbImage::from_raw(w, h, raw)
                    .ok_or_else(|| Error::invalid("buffer size mismatch"))?,
            ),
        };
        dynamic.write_to(&mut Cursor::new(&mut bytes), ImageFormat::Png)?;
    } else {
        let (subtype, color) = match image.channels() {
            1 => (PnmSubtype::Graymap(SampleEncoding::Binary), ExtendedColorType::L8),
            _ => (PnmSubtype::Pixmap(SampleEncoding::Binary), ExtendedColorType::Rgb8),
        };
        PnmEncoder::new(&mut bytes)
            .with_subtype(subtype)
            .write_image(&raw, w, h, color)?;
    }
    atomic_write(path, &bytes)
}

/// Saves an attribution map as a 16-bit grayscale PNG,
/// `pixel = round(value · 65535)` after clamping to `[0, 1]`.
pub fn save_map_png(path: &Path, map: &ScalarField) -> Result<()> {
    let raw: Vec<u16> = map.data().iter().map(|&v| quantize16(v)).collect();
    let buf = image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::from_raw(
        map.width() as u32,
        map.height() as u32,
        raw,
    )
    .ok_or_else(|| Error::invalid("buffer size mismatch"))?;
    let mut bytes = Vec::new();
    DynamicImage::ImageLuma16(buf).write_to(&mut Cursor::new(&mut bytes), ImageFormat::Png)?;
    atomic_write(path, &bytes)
}

/// Loads a grayscale PNG attribution map back into `[0, 1]`.
pub fn load_map_png(path: &Path) -> Result<ScalarField> {
    let dynamic = image::open(path)?;
    let (w, h) = (dynamic.width() as usize, dynamic.height() as usize);
    let data: Vec<f64> = match dynamic {
        DynamicImage::ImageLuma16(buf) => {
            buf.into_raw().iter().map(|&v| v as f64 / 65535.0).collect()
        }
        DynamicImage::ImageLuma8(buf) => {
            buf.into_raw().iter().map(|&v| v as f64 / 255.0).collect()
        }
        other => {
            return Err(Error::invalid(format!(
                "attribution map must be grayscale, found {:?} in {}",
                other.color(),
                path.display()
            )))
        }
    };
    ScalarField::new(h, w, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_rgb() -> Image {
        let mut data = Vec::new();
        for i in 0..4 * 5 * 3 {
            data.push((i % 7) as f64 / 7.0);
        }
        Image::new(4, 5, 3, data).unwrap()
    }

    #[test]
    fn png_rgb_round_trip_is_exact_after_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.png");
        let img = sample_rgb();
        save_image(&path, &img).unwrap();
        let back = load_image(&path).unwrap();
        assert_eq!(back.channels(), 3);
        for (orig, got) in img.data().iter().zip(back.data()) {
            let expected = quantize8(*orig) as f64 / 255.0;
            assert!((got - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn pgm_is_binary_and_grayscale() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.pgm");
        save_image(&path, &sample_rgb()).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..2], b"P5", "expected raw PGM magic");
        let back = load_image(&path).unwrap();
        assert_eq!(back.channels(), 1);
        assert_eq!((back.height(), back.width()), (4, 5));
    }

    #[test]
    fn ppm_is_binary_and_rgb() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.ppm");
        let gray = Image::new(2, 2, 1, vec![0.0, 0.25, 0.5, 1.0]).unwrap();
        save_image(&path, &gray).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..2], b"P6", "expected raw PPM magic");
        let back = load_image(&path).unwrap();
        assert_eq!(back.channels(), 3);
        assert!((back.get(0, 1, 0) - 64.0 / 255.0).abs() < 1e-12);
    }

    #[test]
    fn quantization_rounds_half_up() {
        // 0.5/255 boundary: 1.5/255 quantizes to 2.
        assert_eq!(quantize8(1.5 / 255.0), 2);
        assert_eq!(quantize8(1.49 / 255.0), 1);
        assert_eq!(quantize8(-0.5), 0);
        assert_eq!(quantize8(2.0), 255);
        // 0.5 · 65535 = 32767.5 exactly; half rounds up.
        assert_eq!(quantize16(0.5), 32768);
        assert_eq!(quantize16(1.0), 65535);
        assert_eq!(quantize16(0.0), 0);
    }

    #[test]
    fn map_png_round_trip_is_16_bit() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("map.png");
        let data: Vec<f64> = (0..9).map(|i| i as f64 / 8.0).collect();
        let map = ScalarField::new(3, 3, data).unwrap();
        save_map_png(&path, &map).unwrap();
        let back = load_map_png(&path).unwrap();
        for (orig, got) in map.data().iter().zip(back.data()) {
            let expected = quantize16(*orig) as f64 / 65535.0;
            assert!((got - expected).abs() < 1e-12);
        }
        // 1/8 is not representable at 8 bits but survives 16-bit quantization
        // to better than 1e-5.
        assert!((back.get(0, 1) - 0.125).abs() < 1e-5);
    }

    #[test]
    fn unknown_extension_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let img = Image::filled(2, 2, 1, 0.5).unwrap();
        assert!(save_image(&dir.path().join("x.jpg"), &img).is_err());
        assert!(save_image(&dir.path().join("x"), &img).is_err());
    }

    #[test]
    fn atomic_write_leaves_no_temp_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.bin");
        atomic_write(&path, b"payload").unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"payload");
        let names: Vec<_> = std::fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        assert_eq!(names.len(), 1);
    }
}
