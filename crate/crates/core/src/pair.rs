//! Positive/negative pair fabrication and latent pair datasets.

use std::path::Path;

use crate::error::{Error, Result, Warning};
use crate::latent::LatentCode;
use crate::scalar::{Scalar, ZERO_NORM};

/// Interleaved 8-bit RGB image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl RasterImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(Error::ShapeMismatch(format!(
                "{width}x{height} RGB image needs {} bytes, got {}",
                width * height * 3,
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        Self {
            width,
            height,
            data: rgb.repeat(width * height),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<Self> {
        let img = image::open(path).map_err(|e| Error::Image(e.to_string()))?;
        let rgb = img.to_rgb8();
        let (w, h) = rgb.dimensions();
        Self::new(w as usize, h as usize, rgb.into_raw())
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.encode_png()?)?;
        Ok(())
    }

    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let buf = image::RgbImage::from_raw(self.width as u32, self.height as u32, self.data.clone())
            .ok_or_else(|| Error::Image("buffer size".into()))?;
        let mut out = std::io::Cursor::new(Vec::new());
        buf.write_to(&mut out, image::ImageFormat::Png)
            .map_err(|e| Error::Image(e.to_string()))?;
        Ok(out.into_inner())
    }

    pub fn decode_png(bytes: &[u8]) -> Result<Self> {
        let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
            .map_err(|e| Error::Image(e.to_string()))?;
        let rgb = img.to_rgb8();
        let (w, h) = rgb.dimensions();
        Self::new(w as usize, h as usize, rgb.into_raw())
    }
}

/// Per-pixel blend weights in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PartMask {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl PartMask {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "{width}x{height} mask needs {} weights, got {}",
                width * height,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|m| !(0.0..=1.0).contains(m)) {
            return Err(Error::ShapeMismatch(format!(
                "mask weight {} at index {i} outside [0, 1]",
                data[i]
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn uniform(width: usize, height: usize, weight: f64) -> Result<Self> {
        Self::new(width, height, vec![weight; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn weights(&self) -> &[f64] {
        &self.data
    }

    /// Single-channel PNG, 255 maps to 1.0. Colour inputs are reduced to luma.
    pub fn load_png(path: impl AsRef<Path>) -> Result<Self> {
        let img = image::open(path).map_err(|e| Error::Image(e.to_string()))?;
        let gray = img.to_luma8();
        let (w, h) = gray.dimensions();
        let data = gray.into_raw().into_iter().map(|v| f64::from(v) / 255.0).collect();
        Self::new(w as usize, h as usize, data)
    }
}

/// Cut-and-paste blend: `out = (1 - m) * negative + m * source`, rounded half-up.
pub fn blend_pair(source: &RasterImage, negative: &RasterImage, mask: &PartMask) -> Result<RasterImage> {
    let dims = (source.width, source.height);
    for (what, d) in [
        ("negative", (negative.width, negative.height)),
        ("mask", (mask.width, mask.height)),
    ] {
        if d == dims {
            continue;
        }
        if d.0 * d.1 != dims.0 * dims.1 {
            return Err(Error::DimMismatch {
                expected: dims.0 * dims.1,
                got: d.0 * d.1,
            });
        }
        return Err(Error::ShapeMismatch(format!(
            "{what} is {}x{}, source is {}x{}",
            d.0, d.1, dims.0, dims.1
        )));
    }
    let data = source
        .data
        .chunks_exact(3)
        .zip(negative.data.chunks_exact(3))
        .zip(&mask.data)
        .flat_map(|((src, neg), &m)| {
            (0..3).map(move |c| {
                let v = (1.0 - m) * f64::from(neg[c]) + m * f64::from(src[c]);
                (v + 0.5).floor().clamp(0.0, 255.0) as u8
            })
        })
        .collect();
    RasterImage::new(dims.0, dims.1, data)
}

/// Mirror columns: `x -> width - 1 - x`.
pub fn flip_horizontal(image: &RasterImage) -> RasterImage {
    let mut data = Vec::with_capacity(image.data.len());
    for row in image.data.chunks_exact(image.width * 3) {
        for px in row.chunks_exact(3).rev() {
            data.extend_from_slice(px);
        }
    }
    RasterImage {
        width: image.width,
        height: image.height,
        data,
    }
}

/// Ordered (positive, negative) latent pairs for one attribute.
#[derive(Debug, Clone, PartialEq)]
pub struct PairDataset<T: Scalar> {
    attribute: String,
    layers: usize,
    dim: usize,
    pairs: Vec<(LatentCode<T>, LatentCode<T>)>,
    provenance: Vec<String>,
}

impl<T: Scalar> PairDataset<T> {
    pub fn attribute(&self) -> &str {
        &self.attribute
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[(LatentCode<T>, LatentCode<T>)] {
        &self.pairs
    }

    pub fn provenance(&self) -> &[String] {
        &self.provenance
    }

    pub fn warnings(&self) -> Vec<Warning> {
        if self.pairs.len() == 1 {
            vec![Warning::SinglePair]
        } else {
            Vec::new()
        }
    }

    /// Subset by pair index, keeping the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let pairs = indices.iter().map(|&i| self.pairs[i].clone()).collect();
        let provenance = indices.iter().map(|&i| self.provenance[i].clone()).collect();
        assemble_with_provenance(&self.attribute, pairs, provenance)
    }
}

pub fn assemble_dataset<T: Scalar>(
    attribute: &str,
    pairs: Vec<(LatentCode<T>, LatentCode<T>)>,
) -> Result<PairDataset<T>> {
    let provenance = vec![String::new(); pairs.len()];
    assemble_with_provenance(attribute, pairs, provenance)
}

pub fn assemble_with_provenance<T: Scalar>(
    attribute: &str,
    pairs: Vec<(LatentCode<T>, LatentCode<T>)>,
    provenance: Vec<String>,
) -> Result<PairDataset<T>> {
    let (layers, dim) = pairs.first().ok_or(Error::EmptyDataset)?.0.shape();
    if provenance.len() != pairs.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} provenance entries for {} pairs",
            provenance.len(),
            pairs.len()
        )));
    }
    for (k, (p, n)) in pairs.iter().enumerate() {
        for w in [p, n] {
            if w.shape() != (layers, dim) {
                return Err(Error::ShapeMismatch(format!(
                    "pair {k} has shape {:?}, expected {:?}",
                    w.shape(),
                    (layers, dim)
                )));
            }
        }
        let diff = p
            .as_slice()
            .iter()
            .zip(n.as_slice())
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum::<T>()
            .sqrt();
        if diff < T::lit(ZERO_NORM) {
            return Err(Error::DegeneratePair(k));
        }
    }
    Ok(PairDataset {
        attribute: attribute.to_owned(),
        layers,
        dim,
        pairs,
        provenance,
    })
}

/// An unpaired list of latents sharing one shape (edit inputs/outputs).
#[derive(Debug, Clone, PartialEq)]
pub struct LatentBatch<T: Scalar> {
    pub label: String,
    layers: usize,
    dim: usize,
    latents: Vec<LatentCode<T>>,
    pub provenance: Vec<String>,
}

impl<T: Scalar> LatentBatch<T> {
    pub fn new(label: &str, latents: Vec<LatentCode<T>>) -> Result<Self> {
        let provenance = vec![String::new(); latents.len()];
        Self::with_provenance(label, latents, provenance)
    }

    pub fn with_provenance(label: &str, latents: Vec<LatentCode<T>>, provenance: Vec<String>) -> Result<Self> {
        let (layers, dim) = latents.first().ok_or(Error::EmptyDataset)?.shape();
        if let Some(bad) = latents.iter().find(|w| w.shape() != (layers, dim)) {
            return Err(Error::ShapeMismatch(format!(
                "latent shape {:?} differs from {:?}",
                bad.shape(),
                (layers, dim)
            )));
        }
        if provenance.len() != latents.len() {
            return Err(Error::ShapeMismatch("provenance length".into()));
        }
        Ok(Self {
            label: label.to_owned(),
            layers,
            dim,
            latents,
            provenance,
        })
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn latents(&self) -> &[LatentCode<T>] {
        &self.latents
    }

    pub fn into_latents(self) -> Vec<LatentCode<T>> {
        self.latents
    }

    pub fn len(&self) -> usize {
        self.latents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.latents.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lat(v: &[f64]) -> LatentCode<f64> {
        LatentCode::from_flat(1, v.len(), v.to_vec()).unwrap()
    }

    #[test]
    fn blend_extremes_and_midpoint() {
        let src = RasterImage::filled(2, 2, [200, 10, 255]);
        let neg = RasterImage::filled(2, 2, [100, 20, 0]);
        let zero = PartMask::uniform(2, 2, 0.0).unwrap();
        let one = PartMask::uniform(2, 2, 1.0).unwrap();
        let half = PartMask::uniform(2, 2, 0.5).unwrap();
        assert_eq!(blend_pair(&src, &neg, &zero).unwrap(), neg);
        assert_eq!(blend_pair(&src, &neg, &one).unwrap(), src);
        let mid = blend_pair(&src, &neg, &half).unwrap();
        assert_eq!(mid.pixel(0, 0), [150, 15, 128]); // 127.5 rounds half-up
    }

    #[test]
    fn blend_rejects_mismatched_inputs() {
        let src = RasterImage::filled(2, 2, [0; 3]);
        let neg = RasterImage::filled(3, 2, [0; 3]);
        let mask = PartMask::uniform(2, 2, 0.0).unwrap();
        assert!(blend_pair(&src, &neg, &mask).is_err());
        let neg = RasterImage::filled(1, 4, [0; 3]);
        assert!(matches!(blend_pair(&src, &neg, &mask), Err(Error::ShapeMismatch(_))));
        assert!(PartMask::new(1, 1, vec![1.5]).is_err());
        assert!(RasterImage::new(2, 2, vec![0; 5]).is_err());
    }

    #[test]
    fn flip_examples() {
        let img = RasterImage::new(2, 1, vec![1, 2, 3, 4, 5, 6]).unwrap();
        assert_eq!(flip_horizontal(&img).as_bytes(), &[4, 5, 6, 1, 2, 3]);

        let pattern: Vec<u8> = (0..27).collect();
        let img = RasterImage::new(3, 3, pattern).unwrap();
        let flipped = flip_horizontal(&img);
        for y in 0..3 {
            for x in 0..3 {
                assert_eq!(flipped.pixel(x, y), img.pixel(2 - x, y));
            }
        }
        assert_eq!(flip_horizontal(&flipped), img);
    }

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let img = RasterImage::new(2, 2, (0..12).map(|v| v * 20).collect()).unwrap();
        let p = dir.path().join("x.png");
        img.save_png(&p).unwrap();
        assert_eq!(RasterImage::load_png(&p).unwrap(), img);

        let gray = image::GrayImage::from_raw(2, 1, vec![0, 255]).unwrap();
        let mp = dir.path().join("m.png");
        gray.save(&mp).unwrap();
        assert_eq!(PartMask::load_png(&mp).unwrap().weights(), &[0.0, 1.0]);
    }

    #[test]
    fn assemble_examples() {
        let pairs: Vec<_> = (0..10)
            .map(|k| (lat(&[k as f64 + 1.0, 0.0]), lat(&[0.0, k as f64])))
            .collect();
        let ds = assemble_dataset("smile", pairs.clone()).unwrap();
        assert_eq!(ds.len(), 10);
        assert_eq!(ds.pairs(), &pairs[..]);
        assert!(ds.warnings().is_empty());

        let one = assemble_dataset("smile", vec![pairs[0].clone()]).unwrap();
        assert_eq!(one.warnings(), vec![Warning::SinglePair]);

        assert!(matches!(
            assemble_dataset("smile", vec![(lat(&[1.0]), lat(&[1.0]))]),
            Err(Error::DegeneratePair(0))
        ));
        assert!(matches!(
            assemble_dataset::<f64>("smile", vec![]),
            Err(Error::EmptyDataset)
        ));
        assert!(matches!(
            assemble_dataset("smile", vec![pairs[0].clone(), (lat(&[1.0]), lat(&[0.0]))]),
            Err(Error::ShapeMismatch(_))
        ));
    }

    proptest! {
        #[test]
        fn blend_is_convex(
            src in proptest::collection::vec(any::<u8>(), 12),
            neg in proptest::collection::vec(any::<u8>(), 12),
            m in proptest::collection::vec(0.0f64..=1.0, 4),
            binary in proptest::collection::vec(any::<bool>(), 4),
        ) {
            let s = RasterImage::new(2, 2, src).unwrap();
            let n = RasterImage::new(2, 2, neg).unwrap();
            let out = blend_pair(&s, &n, &PartMask::new(2, 2, m).unwrap()).unwrap();
            for i in 0..12 {
                let (a, b) = (s.as_bytes()[i], n.as_bytes()[i]);
                prop_assert!(out.as_bytes()[i] >= a.min(b) && out.as_bytes()[i] <= a.max(b));
            }
            let bm: Vec<f64> = binary.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
            let sel = blend_pair(&s, &n, &PartMask::new(2, 2, bm).unwrap()).unwrap();
            for p in 0..4 {
                let pick = if binary[p] { &s } else { &n };
                prop_assert_eq!(&sel.as_bytes()[p * 3..p * 3 + 3], &pick.as_bytes()[p * 3..p * 3 + 3]);
            }
        }
    }
}
