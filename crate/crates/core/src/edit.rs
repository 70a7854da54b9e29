//! Layer-masked linear edits `w' = w + alpha * d`.

use serde::{Deserialize, Serialize};

use crate::direction::EditDirection;
use crate::error::{Error, Result};
use crate::latent::{FlatVector, LatentCode, LayerMask};
use crate::scalar::Scalar;

pub const DEFAULT_ALPHA: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct EditInstruction<T: Scalar> {
    pub direction: EditDirection<T>,
    pub alpha: T,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layer_mask_override: Option<LayerMask>,
}

impl<T: Scalar> EditInstruction<T> {
    pub fn new(direction: EditDirection<T>, alpha: T) -> Self {
        Self {
            direction,
            alpha,
            layer_mask_override: None,
        }
    }

    pub fn with_mask(mut self, mask: LayerMask) -> Self {
        self.layer_mask_override = Some(mask);
        self
    }

    pub fn effective_mask(&self) -> &LayerMask {
        self.layer_mask_override.as_ref().unwrap_or(&self.direction.layer_mask)
    }
}

/// Add `alpha * delta` to every layer in `mask`; other layers are untouched.
pub fn apply_delta<T: Scalar>(
    w: &LatentCode<T>,
    delta: &FlatVector<T>,
    mask: &LayerMask,
    alpha: T,
) -> Result<LatentCode<T>> {
    if !alpha.is_finite() {
        return Err(Error::NonFinite(0));
    }
    let (layers, dim) = w.shape();
    if delta.dim() != layers * dim {
        return Err(Error::DimMismatch {
            expected: layers * dim,
            got: delta.dim(),
        });
    }
    if let Some(&index) = mask.included().iter().find(|&&l| l >= layers) {
        return Err(Error::MaskOutOfRange { index, layers });
    }
    let mut out = w.clone();
    if alpha == T::zero() {
        return Ok(out);
    }
    let d = delta.as_slice();
    let data = out.data_mut();
    for &l in mask.included() {
        let range = l * dim..(l + 1) * dim;
        for (x, &dx) in data[range.clone()].iter_mut().zip(&d[range]) {
            *x += alpha * dx;
        }
    }
    LatentCode::from_flat(layers, dim, out.into_vec())
}

pub fn apply_edit<T: Scalar>(w: &LatentCode<T>, instr: &EditInstruction<T>) -> Result<LatentCode<T>> {
    apply_delta(w, &instr.direction.direction, instr.effective_mask(), instr.alpha)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequentialResult<T: Scalar> {
    pub latent: LatentCode<T>,
    /// Latent after each instruction, in order.
    pub intermediates: Vec<LatentCode<T>>,
}

/// Left fold of [`apply_edit`]; errors carry the failing instruction index.
pub fn apply_sequential<T: Scalar>(w: &LatentCode<T>, instrs: &[EditInstruction<T>]) -> Result<SequentialResult<T>> {
    let mut current = w.clone();
    let mut intermediates = Vec::with_capacity(instrs.len());
    for (i, instr) in instrs.iter().enumerate() {
        current = apply_edit(&current, instr).map_err(|e| Error::at_step(i, e))?;
        intermediates.push(current.clone());
    }
    Ok(SequentialResult {
        latent: current,
        intermediates,
    })
}

/// Frames at strengths `alpha * t / (steps - 1)` for `t = 0..steps`.
pub fn interpolate_edit<T: Scalar>(
    w: &LatentCode<T>,
    instr: &EditInstruction<T>,
    steps: usize,
) -> Result<Vec<LatentCode<T>>> {
    if steps < 2 {
        return Err(Error::BadStepCount(steps));
    }
    let last = T::lit((steps - 1) as f64);
    (0..steps)
        .map(|t| {
            let alpha = if t == steps - 1 {
                instr.alpha
            } else {
                instr.alpha * T::lit(t as f64) / last
            };
            apply_delta(w, &instr.direction.direction, instr.effective_mask(), alpha)
        })
        .collect()
}

/// Per-attribute generator layer ranges (inclusive upper bounds as published).
pub const LAYER_PRESETS: &[(&str, &[usize])] = &[
    ("hair", &[0, 1, 2, 3, 4, 5, 6]),
    ("hat", &[0, 1, 2, 3, 4, 5, 6]),
    ("eyeglasses", &[0, 1, 2, 3, 4, 5, 6, 7, 8, 9]),
    ("smile", &[5, 6]),
    ("pose", &[0, 1, 2, 3, 4]),
    ("facial_hair", &[6, 7, 10]),
    ("lighting", &[7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18]),
    ("eye_close", &[5, 6, 7]),
];

fn canonical(attribute: &str) -> String {
    let name = attribute.trim().to_ascii_lowercase().replace(['-', ' '], "_");
    match name.as_str() {
        "eyeglass" | "glasses" => "eyeglasses".into(),
        "eyes_closed" | "eyeclose" => "eye_close".into(),
        "beard" => "facial_hair".into(),
        _ => name,
    }
}

pub fn preset_layers(attribute: &str) -> Option<&'static [usize]> {
    let name = canonical(attribute);
    LAYER_PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, layers)| *layers)
}

/// Preset mask for `attribute`, clipped to `[0, layers)`; dropped indices are
/// recorded on the mask.
pub fn preset_layer_mask(attribute: &str, layers: usize) -> Result<LayerMask> {
    let preset = preset_layers(attribute).ok_or_else(|| Error::UnknownAttribute(attribute.to_owned()))?;
    Ok(LayerMask::clipped(layers, preset.iter().copied()))
}

/// Style-sampling strength ranges and lambda bound per attribute.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StylePreset {
    pub epsilon: f64,
    pub alpha_range: (f64, f64),
}

pub const STYLE_EPSILON: f64 = 0.35;

pub fn style_preset(attribute: &str) -> Option<StylePreset> {
    match canonical(attribute).as_str() {
        "eyeglasses" => Some(StylePreset {
            epsilon: STYLE_EPSILON,
            alpha_range: (0.36, 0.46),
        }),
        "hair" => Some(StylePreset {
            epsilon: STYLE_EPSILON,
            alpha_range: (0.48, 0.58),
        }),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::direction::Method;
    use proptest::prelude::*;

    fn direction(layers: usize, dim: usize, data: Vec<f64>, mask: LayerMask) -> EditDirection<f64> {
        let d = EditDirection {
            attribute: "t".into(),
            direction: FlatVector::new(data).unwrap(),
            layer_mask: mask,
            n_pairs: 1,
            singular_values: vec![1.0],
            objective: 1.0,
            method: Method::Svd,
            warnings: vec![],
        };
        assert_eq!((d.layers(), d.dim()), (layers, dim));
        d
    }

    fn e1(layers: usize, dim: usize) -> EditDirection<f64> {
        direction(
            layers,
            dim,
            FlatVector::basis(layers * dim, 0).into_vec(),
            LayerMask::all(layers),
        )
    }

    fn latent(layers: usize, dim: usize) -> LatentCode<f64> {
        LatentCode::from_flat(layers, dim, (0..layers * dim).map(|i| i as f64 * 0.1 - 0.7).collect()).unwrap()
    }

    #[test]
    fn zero_alpha_is_identity() {
        let w = latent(3, 4);
        let out = apply_edit(&w, &EditInstruction::new(e1(3, 4), 0.0)).unwrap();
        assert_eq!(out, w);
        let neg_zero = LatentCode::from_flat(1, 1, vec![-0.0]).unwrap();
        let out = apply_edit(&neg_zero, &EditInstruction::new(e1(1, 1), 0.0)).unwrap();
        assert_eq!(out.as_slice()[0].to_bits(), (-0.0f64).to_bits());
    }

    #[test]
    fn axis_edit_moves_one_coordinate() {
        let w = latent(3, 4);
        let out = apply_edit(&w, &EditInstruction::new(e1(3, 4), 1.0)).unwrap();
        let changed: Vec<usize> = (0..12).filter(|&i| out.as_slice()[i] != w.as_slice()[i]).collect();
        assert_eq!(changed, vec![0]);
        assert_eq!(out.as_slice()[0], w.as_slice()[0] + 1.0);
    }

    #[test]
    fn mask_errors() {
        let w = latent(3, 4);
        let instr = EditInstruction::new(e1(3, 4), 1.0).with_mask(LayerMask::new(5, [4]).unwrap());
        assert!(matches!(apply_edit(&w, &instr), Err(Error::MaskOutOfRange { .. })));
        let bad = EditInstruction::new(e1(2, 4), 1.0);
        assert!(matches!(apply_edit(&w, &bad), Err(Error::DimMismatch { .. })));
    }

    #[test]
    fn sequential_examples() {
        let w = latent(2, 3);
        let out = apply_sequential(&w, &[]).unwrap();
        assert_eq!(out.latent, w);
        assert!(out.intermediates.is_empty());

        let d = direction(
            2,
            3,
            vec![0.5, 0.5, 0.5, 0.5, 0.0, 0.0],
            LayerMask::new(2, [1]).unwrap(),
        );
        let out = apply_sequential(
            &w,
            &[EditInstruction::new(d.clone(), 0.7), EditInstruction::new(d, -0.7)],
        )
        .unwrap();
        assert_eq!(out.intermediates.len(), 2);
        for (a, b) in out.latent.as_slice().iter().zip(w.as_slice()) {
            assert!((a - b).abs() < 1e-9);
        }

        let err = apply_sequential(
            &w,
            &[EditInstruction::new(e1(2, 3), 1.0), EditInstruction::new(e1(3, 3), 1.0)],
        )
        .unwrap_err();
        assert!(matches!(err, Error::AtStep { index: 1, .. }));
    }

    #[test]
    fn interpolation_examples() {
        let w = latent(2, 2);
        let instr = EditInstruction::new(e1(2, 2), 1.0);
        let frames = interpolate_edit(&w, &instr, 2).unwrap();
        assert_eq!(frames[0], w);
        assert_eq!(frames[1], apply_edit(&w, &instr).unwrap());

        let frames = interpolate_edit(&w, &instr, 3).unwrap();
        assert!((frames[1].as_slice()[0] - (w.as_slice()[0] + 0.5)).abs() < 1e-12);

        let d = direction(2, 2, vec![0.5, -0.5, 0.5, 0.5], LayerMask::all(2));
        let frames = interpolate_edit(&w, &EditInstruction::new(d, 2.5), 7).unwrap();
        let step: Vec<f64> = frames[1]
            .as_slice()
            .iter()
            .zip(frames[0].as_slice())
            .map(|(a, b)| a - b)
            .collect();
        for pair in frames.windows(2) {
            for (i, (a, b)) in pair[1].as_slice().iter().zip(pair[0].as_slice()).enumerate() {
                assert!((a - b - step[i]).abs() < 1e-9);
            }
        }
        assert!(matches!(interpolate_edit(&w, &instr, 1), Err(Error::BadStepCount(1))));
    }

    #[test]
    fn presets() {
        assert_eq!(preset_layer_mask("smile", 18).unwrap().included(), &[5, 6]);
        assert_eq!(preset_layer_mask("facial_hair", 18).unwrap().included(), &[6, 7, 10]);
        assert_eq!(preset_layer_mask("facial-hair", 18).unwrap().included(), &[6, 7, 10]);
        let lighting = preset_layer_mask("lighting", 18).unwrap();
        assert_eq!(lighting.included(), &(7..18).collect::<Vec<_>>()[..]);
        assert_eq!(lighting.clipped_indices(), &[18]);
        assert_eq!(
            preset_layer_mask("hair", 18).unwrap().included(),
            &[0, 1, 2, 3, 4, 5, 6]
        );
        assert_eq!(preset_layer_mask("hat", 18).unwrap().included().len(), 7);
        assert_eq!(preset_layer_mask("eyeglasses", 18).unwrap().included().len(), 10);
        assert_eq!(preset_layer_mask("pose", 18).unwrap().included(), &[0, 1, 2, 3, 4]);
        assert_eq!(preset_layer_mask("eye_close", 18).unwrap().included(), &[5, 6, 7]);
        assert!(matches!(
            preset_layer_mask("freckles", 18),
            Err(Error::UnknownAttribute(_))
        ));
        assert_eq!(style_preset("eyeglass").unwrap().alpha_range, (0.36, 0.46));
        assert_eq!(style_preset("hair").unwrap().alpha_range, (0.48, 0.58));
    }

    proptest! {
        #[test]
        fn additivity_and_locality(
            w in proptest::collection::vec(-3.0f64..3.0, 12),
            d in proptest::collection::vec(-1.0f64..1.0, 12),
            a1 in -2.0f64..2.0,
            a2 in -2.0f64..2.0,
            mask in proptest::collection::vec(0usize..3, 0..3),
        ) {
            let w = LatentCode::from_flat(3, 4, w).unwrap();
            let mask = LayerMask::new(3, mask).unwrap();
            let d = FlatVector::new(d).unwrap();
            let once = apply_delta(&w, &d, &mask, a1 + a2).unwrap();
            let twice = apply_delta(&apply_delta(&w, &d, &mask, a1).unwrap(), &d, &mask, a2).unwrap();
            for (x, y) in once.as_slice().iter().zip(twice.as_slice()) {
                prop_assert!((x - y).abs() < 1e-9);
            }
            for l in (0..3).filter(|l| !mask.contains(*l)) {
                for (x, y) in once.row(l).iter().zip(w.row(l)) {
                    prop_assert_eq!(x.to_bits(), y.to_bits());
                }
            }
        }
    }
}
