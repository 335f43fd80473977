//! Planted-patch reference predictor: each class owns a bounding box, and
//! its logit is the sharpness-scaled mean local contrast of the input inside
//! that box. Gaussian blur provably lowers local contrast, so foveation has
//! a monotone, verifiable effect on the logits, and the ground-truth
//! evidence region is known exactly.
//!
//! Local contrast of a pixel is its absolute deviation from the mean of its
//! 3×3 neighborhood (clipped at borders), averaged over box and channels:
//!
//! `logit_k = sharpness · mean_{p ∈ bbox_k, ch} |x[p,ch] − mean(win(p), ch)|`
//!
//! The score is piecewise linear in the input, so the gradient is exact
//! between sign changes; `sign(0) = 0` at kinks.

use super::{check_request, softmax, Predictor, PredictorDescriptor, PredictorOutput};
use crate::error::{Error, Result};
use crate::imaging::{Image, Rect};

#[derive(Debug, Clone)]
pub struct PlantedPatchPredictor {
    descriptor: PredictorDescriptor,
    bboxes: Vec<Rect>,
    sharpness: f64,
}

impl PlantedPatchPredictor {
    pub fn new(
        mut descriptor: PredictorDescriptor,
        bboxes: Vec<Rect>,
        sharpness: f64,
    ) -> Result<Self> {
        descriptor.supports_gradient = true;
        descriptor.validate()?;
        if bboxes.len() != descriptor.num_classes {
            return Err(Error::invalid(format!(
                "{} bboxes for {} classes",
                bboxes.len(),
                descriptor.num_classes
            )));
        }
        for b in &bboxes {
            if b.area() == 0 {
                return Err(Error::invalid("zero-area patch bbox"));
            }
            if b.x + b.w > descriptor.input_width || b.y + b.h > descriptor.input_height {
                return Err(Error::invalid(format!(
                    "bbox {b:?} exceeds {}x{} input",
                    descriptor.input_height, descriptor.input_width
                )));
            }
        }
        if !(sharpness > 0.0) || !sharpness.is_finite() {
            return Err(Error::invalid("sharpness must be positive"));
        }
        Ok(Self { descriptor, bboxes, sharpness })
    }

    /// Canonical layout for registry use: classes tile a near-square grid,
    /// each patch a centered half-cell.
    pub fn with_grid_layout(descriptor: PredictorDescriptor, sharpness: f64) -> Result<Self> {
        let k = descriptor.num_classes;
        let rows = (k as f64).sqrt().ceil() as usize;
        let cols = k.div_ceil(rows);
        let (h, w) = (descriptor.input_height, descriptor.input_width);
        let bboxes = (0..k)
            .map(|class| {
                let (gr, gc) = (class / cols, class % cols);
                let cell_h = h / rows;
                let cell_w = w / cols;
                let ph = (cell_h / 2).max(1);
                let pw = (cell_w / 2).max(1);
                Rect::new(
                    gc * cell_w + (cell_w - pw) / 2,
                    gr * cell_h + (cell_h - ph) / 2,
                    pw,
                    ph,
                )
            })
            .collect();
        Self::new(descriptor, bboxes, sharpness)
    }

    pub fn bbox(&self, class: usize) -> Rect {
        self.bboxes[class]
    }

    /// Mean of the 3×3 neighborhood clipped to the image (4, 6, or 9 cells).
    fn window_mean(&self, image: &Image, row: usize, col: usize, channel: usize) -> (f64, usize) {
        let (h, w) = (self.descriptor.input_height, self.descriptor.input_width);
        let mut sum = 0.0;
        let mut n = 0;
        for r in row.saturating_sub(1)..=(row + 1).min(h - 1) {
            for c in col.saturating_sub(1)..=(col + 1).min(w - 1) {
                sum += image.get(r, c, channel);
                n += 1;
            }
        }
        (sum / n as f64, n)
    }

    fn contrast(&self, image: &Image, class: usize) -> f64 {
        let b = self.bboxes[class];
        let ch = self.descriptor.input_channels;
        let mut total = 0.0;
        for row in b.y..b.y + b.h {
            for col in b.x..b.x + b.w {
                for channel in 0..ch {
                    let (mean, _) = self.window_mean(image, row, col, channel);
                    total += (image.get(row, col, channel) - mean).abs();
                }
            }
        }
        total / (b.area() * ch) as f64
    }

    fn contrast_gradient(&self, image: &Image, class: usize) -> Vec<f64> {
        let b = self.bboxes[class];
        let (h, w, ch) = (
            self.descriptor.input_height,
            self.descriptor.input_width,
            self.descriptor.input_channels,
        );
        let norm = 1.0 / (b.area() * ch) as f64;
        let mut grad = vec![0.0; h * w * ch];
        for row in b.y..b.y + b.h {
            for col in b.x..b.x + b.w {
                for channel in 0..ch {
                    let (mean, n) = self.window_mean(image, row, col, channel);
                    let diff = image.get(row, col, channel) - mean;
                    let sign = if diff > 0.0 {
                        1.0
                    } else if diff < 0.0 {
                        -1.0
                    } else {
                        0.0
                    };
                    if sign == 0.0 {
                        continue;
                    }
                    grad[(row * w + col) * ch + channel] += sign * norm;
                    let scatter = sign * norm / n as f64;
                    for r in row.saturating_sub(1)..=(row + 1).min(h - 1) {
                        for c in col.saturating_sub(1)..=(col + 1).min(w - 1) {
                            grad[(r * w + c) * ch + channel] -= scatter;
                        }
                    }
                }
            }
        }
        grad
    }
}

impl Predictor for PlantedPatchPredictor {
    fn descriptor(&self) -> &PredictorDescriptor {
        &self.descriptor
    }

    fn predict(
        &mut self,
        image: &Image,
        target: Option<usize>,
        want_gradient: bool,
    ) -> Result<PredictorOutput> {
        check_request(&self.descriptor, image, target, want_gradient)?;
        let scores: Vec<f64> = (0..self.descriptor.num_classes)
            .map(|k| self.sharpness * self.contrast(image, k))
            .collect();
        let probabilities = softmax(&scores);
        let input_gradient = if want_gradient {
            let mut g = self.contrast_gradient(image, target.unwrap());
            for v in &mut g {
                *v *= self.sharpness;
            }
            Some(g)
        } else {
            None
        };
        Ok(PredictorOutput { scores, probabilities, input_gradient })
    }

    fn loss_input_gradient(&mut self, image: &Image, target: usize) -> Result<Vec<f64>> {
        check_request(&self.descriptor, image, Some(target), true)?;
        let out = self.predict(image, None, false)?;
        let n = self.descriptor.input_len();
        let mut acc = vec![0.0; n];
        for k in 0..self.descriptor.num_classes {
            let coeff = out.probabilities[k] - if k == target { 1.0 } else { 0.0 };
            if coeff == 0.0 {
                continue;
            }
            let gk = self.contrast_gradient(image, k);
            for (a, g) in acc.iter_mut().zip(&gk) {
                *a += coeff * self.sharpness * g;
            }
        }
        Ok(acc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::{blur, make_gaussian_kernel};
    use crate::predictor::test_support::logit_gradient_fd_audit;

    fn desc(k: usize, h: usize, w: usize) -> PredictorDescriptor {
        PredictorDescriptor {
            name: "planted".into(),
            num_classes: k,
            input_height: h,
            input_width: w,
            input_channels: 1,
            supports_gradient: true,
        }
    }

    /// Flat 0.5 background with a 0.2/0.8 checkerboard inside each listed
    /// rect.
    fn patched_image(h: usize, w: usize, patches: &[Rect]) -> Image {
        let mut data = vec![0.5; h * w];
        for p in patches {
            for row in p.y..p.y + p.h {
                for col in p.x..p.x + p.w {
                    data[row * w + col] = if (row + col) % 2 == 0 { 0.8 } else { 0.2 };
                }
            }
        }
        Image::new(h, w, 1, data).unwrap()
    }

    #[test]
    fn flat_input_gives_near_uniform_probabilities() {
        let boxes = vec![Rect::new(1, 1, 4, 4), Rect::new(8, 8, 4, 4)];
        let mut p = PlantedPatchPredictor::new(desc(2, 16, 16), boxes, 10.0).unwrap();
        let img = Image::filled(16, 16, 1, 0.5).unwrap();
        let out = p.predict(&img, None, false).unwrap();
        for prob in &out.probabilities {
            assert!((prob - 0.5).abs() < 1e-9);
        }
    }

    #[test]
    fn contrast_in_a_patch_selects_its_class() {
        let boxes = vec![Rect::new(2, 2, 5, 5), Rect::new(9, 9, 5, 5)];
        let mut p = PlantedPatchPredictor::new(desc(2, 16, 16), boxes.clone(), 10.0).unwrap();
        let img = patched_image(16, 16, &boxes[..1]);
        let out = p.predict(&img, None, false).unwrap();
        assert!(out.scores[0] > out.scores[1]);
        assert!(out.probabilities[0] > 0.9);
    }

    #[test]
    fn checkerboard_logit_matches_scalar_oracle() {
        let bbox = Rect::new(3, 3, 4, 4);
        let mut p = PlantedPatchPredictor::new(desc(2, 12, 12), vec![bbox, bbox], 7.0).unwrap();
        let img = patched_image(12, 12, &[bbox]);
        let out = p.predict(&img, None, false).unwrap();

        // Independent scalar re-evaluation of the scoring rule.
        let mut total = 0.0;
        for row in bbox.y..bbox.y + bbox.h {
            for col in bbox.x..bbox.x + bbox.w {
                let mut sum = 0.0;
                let mut n = 0.0;
                for r in row - 1..=row + 1 {
                    for c in col - 1..=col + 1 {
                        sum += img.get(r, c, 0);
                        n += 1.0;
                    }
                }
                total += (img.get(row, col, 0) - sum / n).abs();
            }
        }
        let expected = 7.0 * total / 16.0;
        assert!((out.scores[0] - expected).abs() < 1e-12);
        assert!(out.scores[0] > 0.5, "checkerboard patch should score well");
    }

    #[test]
    fn blurring_the_patch_lowers_its_logit_and_probability() {
        let boxes = vec![Rect::new(2, 2, 6, 6), Rect::new(10, 10, 5, 5)];
        let mut p = PlantedPatchPredictor::new(desc(2, 18, 18), boxes.clone(), 12.0).unwrap();
        let sharp = patched_image(18, 18, &boxes[..1]);
        let kernel = make_gaussian_kernel(2.0, 9).unwrap();
        let blurred = blur(&sharp, &kernel);
        let out_sharp = p.predict(&sharp, None, false).unwrap();
        let out_blur = p.predict(&blurred, None, false).unwrap();
        assert!(out_sharp.scores[0] > out_blur.scores[0]);
        assert!(out_sharp.probabilities[0] > out_blur.probabilities[0]);
    }

    #[test]
    fn analytic_gradient_survives_fd_audit() {
        // Piecewise-linear score: away from sign kinks the FD is exact. The
        // checkerboard keeps |x − mean| far above the probe step.
        let boxes = vec![Rect::new(0, 0, 4, 4), Rect::new(4, 4, 4, 4)];
        let mut p = PlantedPatchPredictor::new(desc(2, 8, 8), boxes.clone(), 5.0).unwrap();
        let img = patched_image(8, 8, &boxes);
        for target in 0..2 {
            let err = logit_gradient_fd_audit(&mut p, &img, target, 1e-5);
            assert!(err <= 1e-6, "target {target}: rel err {err}");
        }
    }

    #[test]
    fn border_windows_use_clipped_neighborhoods() {
        // A corner patch exercises the 4- and 6-cell windows.
        let bbox = Rect::new(0, 0, 2, 2);
        let mut p = PlantedPatchPredictor::new(desc(2, 6, 6), vec![bbox, bbox], 1.0).unwrap();
        let mut data = vec![0.0; 36];
        data[0] = 1.0; // corner pixel (0,0), window = {(0,0),(0,1),(1,0),(1,1)}
        let img = Image::new(6, 6, 1, data).unwrap();
        let out = p.predict(&img, None, false).unwrap();
        // Scalar oracle over the 4 bbox pixels:
        // (0,0): |1 − 1/4| = 0.75 (4-cell corner window)
        // (0,1): |0 − 1/6| (6-cell edge window), (1,0): same
        // (1,1): |0 − 1/9| (full 9-cell window).
        let expected = (0.75 + 1.0 / 6.0 + 1.0 / 6.0 + 1.0 / 9.0) / 4.0;
        assert!((out.scores[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn constructor_rejects_bad_boxes() {
        assert!(PlantedPatchPredictor::new(desc(2, 8, 8), vec![Rect::new(0, 0, 4, 4)], 1.0)
            .is_err());
        assert!(PlantedPatchPredictor::new(
            desc(2, 8, 8),
            vec![Rect::new(0, 0, 0, 4), Rect::new(0, 0, 4, 4)],
            1.0
        )
        .is_err());
        assert!(PlantedPatchPredictor::new(
            desc(2, 8, 8),
            vec![Rect::new(6, 6, 4, 4), Rect::new(0, 0, 4, 4)],
            1.0
        )
        .is_err());
        assert!(PlantedPatchPredictor::new(
            desc(2, 8, 8),
            vec![Rect::new(0, 0, 4, 4), Rect::new(4, 4, 4, 4)],
            0.0
        )
        .is_err());
    }

    #[test]
    fn grid_layout_tiles_disjoint_in_bounds_patches() {
        for k in [2, 3, 4, 6, 9] {
            let p = PlantedPatchPredictor::with_grid_layout(desc(k, 64, 64), 10.0).unwrap();
            for a in 0..k {
                let ba = p.bbox(a);
                assert!(ba.area() >= 1);
                assert!(ba.x + ba.w <= 64 && ba.y + ba.h <= 64);
                for b in 0..a {
                    let bb = p.bbox(b);
                    let overlap_w =
                        (ba.x + ba.w).min(bb.x + bb.w).saturating_sub(ba.x.max(bb.x));
                    let overlap_h =
                        (ba.y + ba.h).min(bb.y + bb.h).saturating_sub(ba.y.max(bb.y));
                    assert_eq!(overlap_w * overlap_h, 0, "classes {a} and {b} overlap");
                }
            }
        }
    }
}
