//! Color rendering of attribution maps: a fixed 5-stop colormap, a 50%
//! alpha blend over the input, and red crosses at fixation locations.
//!
//! Exact bytes, so goldens stay stable: a map value `t` in [0,1] picks the
//! segment `i = min(floor(4t), 3)` of the stop list black, blue, green,
//! yellow, red and interpolates each channel linearly within it; the overlay
//! pixel is `round(255 * (0.5*image + 0.5*color))` per channel, except under
//! a cross arm where the pixel is pure red `(255, 0, 0)`.

use fovex::foveation::Fixation;
use fovex::imaging::{Image, ScalarField};
use fovex::{Error, Result};

/// Unit-intensity RGB stops at t = 0, 0.25, 0.5, 0.75, 1.
const STOPS: [[f64; 3]; 5] = [
    [0.0, 0.0, 0.0],
    [0.0, 0.0, 1.0],
    [0.0, 1.0, 0.0],
    [1.0, 1.0, 0.0],
    [1.0, 0.0, 0.0],
];

/// Colormap value in unit intensities, linear between stops.
pub fn colormap01(t: f64) -> [f64; 3] {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let scaled = t * 4.0;
    let i = (scaled.floor() as usize).min(3);
    let frac = scaled - i as f64;
    let a = STOPS[i];
    let b = STOPS[i + 1];
    [
        a[0] + (b[0] - a[0]) * frac,
        a[1] + (b[1] - a[1]) * frac,
        a[2] + (b[2] - a[2]) * frac,
    ]
}

/// Arm radius of a fixation cross on an `h×w` canvas.
fn cross_radius(height: usize, width: usize) -> usize {
    (height.min(width) / 16).max(2)
}

fn fixation_pixel(f: &Fixation, height: usize, width: usize) -> (usize, usize) {
    let row = ((f.y * height as f64).floor() as usize).min(height - 1);
    let col = ((f.x * width as f64).floor() as usize).min(width - 1);
    (row, col)
}

/// Blends the colormapped map over a 3-channel image of the same size at 50%
/// alpha and paints a red cross at every fixation.
pub fn overlay(image: &Image, map: &ScalarField, fixations: &[Fixation]) -> Result<Image> {
    if image.channels() != 3 {
        return Err(Error::invalid("overlay wants a 3-channel image"));
    }
    if image.height() != map.height() || image.width() != map.width() {
        return Err(Error::invalid(format!(
            "overlay image is {}x{} but the map is {}x{}",
            image.height(),
            image.width(),
            map.height(),
            map.width()
        )));
    }
    let (h, w) = (map.height(), map.width());
    let mut data = Vec::with_capacity(h * w * 3);
    for r in 0..h {
        for c in 0..w {
            let color = colormap01(map.get(r, c));
            for ch in 0..3 {
                data.push(0.5 * image.get(r, c, ch) + 0.5 * color[ch]);
            }
        }
    }
    let radius = cross_radius(h, w);
    let paint = |data: &mut [f64], r: usize, c: usize| {
        let i = (r * w + c) * 3;
        data[i] = 1.0;
        data[i + 1] = 0.0;
        data[i + 2] = 0.0;
    };
    for f in fixations {
        let (row, col) = fixation_pixel(f, h, w);
        for c in col.saturating_sub(radius)..=(col + radius).min(w - 1) {
            paint(&mut data, row, c);
        }
        for r in row.saturating_sub(radius)..=(row + radius).min(h - 1) {
            paint(&mut data, r, col);
        }
    }
    Image::new(h, w, 3, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Colormap value as the bytes a saved PNG will contain.
    fn colormap(t: f64) -> [u8; 3] {
        let c = colormap01(t);
        [
            (c[0] * 255.0).round() as u8,
            (c[1] * 255.0).round() as u8,
            (c[2] * 255.0).round() as u8,
        ]
    }

    #[test]
    fn colormap_hits_the_five_stops_exactly() {
        assert_eq!(colormap(0.0), [0, 0, 0]);
        assert_eq!(colormap(0.25), [0, 0, 255]);
        assert_eq!(colormap(0.5), [0, 255, 0]);
        assert_eq!(colormap(0.75), [255, 255, 0]);
        assert_eq!(colormap(1.0), [255, 0, 0]);
    }

    #[test]
    fn colormap_interpolates_linearly_between_stops() {
        // Halfway between blue and green: both channels at 127.5, rounded up.
        assert_eq!(colormap(0.375), [0, 128, 128]);
        // A tenth into the first segment: 0.4 of the way to blue.
        assert_eq!(colormap(0.1), [0, 0, 102]);
    }

    #[test]
    fn colormap_clamps_out_of_range_input() {
        assert_eq!(colormap(-0.5), colormap(0.0));
        assert_eq!(colormap(7.0), colormap(1.0));
        assert_eq!(colormap(f64::NAN), colormap(0.0));
    }

    #[test]
    fn overlay_blends_at_half_alpha() {
        let image = Image::filled(8, 8, 3, 0.0).unwrap();
        let map = ScalarField::new(8, 8, vec![1.0; 64]).unwrap();
        let out = overlay(&image, &map, &[]).unwrap();
        // Black image under a full-red map: every pixel half red.
        assert_eq!(out.get(3, 3, 0), 0.5);
        assert_eq!(out.get(3, 3, 1), 0.0);
        assert_eq!(out.get(3, 3, 2), 0.0);
    }

    #[test]
    fn crosses_paint_pure_red_arms() {
        let image = Image::filled(32, 32, 3, 1.0).unwrap();
        let map = ScalarField::zeros(32, 32);
        let f = Fixation::new(0.5, 0.5);
        let out = overlay(&image, &map, &[f]).unwrap();
        let center = fixation_pixel(&f, 32, 32);
        assert_eq!(center, (16, 16));
        let radius = cross_radius(32, 32);
        for c in 16 - radius..=16 + radius {
            assert_eq!(
                (out.get(16, c, 0), out.get(16, c, 1), out.get(16, c, 2)),
                (1.0, 0.0, 0.0)
            );
        }
        for r in 16 - radius..=16 + radius {
            assert_eq!(
                (out.get(r, 16, 0), out.get(r, 16, 1), out.get(r, 16, 2)),
                (1.0, 0.0, 0.0)
            );
        }
        // Off the arms the blend of white image and black map is mid-gray.
        assert_eq!(out.get(0, 0, 0), 0.5);
    }

    #[test]
    fn crosses_clip_at_the_border() {
        let image = Image::filled(16, 16, 3, 0.0).unwrap();
        let map = ScalarField::zeros(16, 16);
        let out = overlay(&image, &map, &[Fixation::new(1.0, 1.0)]).unwrap();
        assert_eq!(out.get(15, 15, 0), 1.0, "corner fixation lands on the last pixel");
    }

    #[test]
    fn overlay_rejects_shape_mismatches() {
        let image = Image::filled(8, 8, 3, 0.0).unwrap();
        let map = ScalarField::zeros(4, 4);
        assert!(overlay(&image, &map, &[]).is_err());
        let gray = Image::filled(8, 8, 1, 0.0).unwrap();
        let map8 = ScalarField::zeros(8, 8);
        assert!(overlay(&gray, &map8, &[]).is_err());
    }
}
