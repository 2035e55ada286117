//! Dataset loading and normalization.
//!
//! Every loader has a byte- or text-level entry point (`parse_*`) that never
//! panics on malformed input, plus a path-level wrapper (`load_*`). Inputs are
//! always scaled into `[0, 1]`.

use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;

use crate::numerics::{Matrix, Rng};
use crate::{Error, Result};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
pub const MNIST_CLASSES: usize = 10;
pub const CIFAR10_CLASSES: usize = 10;
pub const CIFAR10_FEATURES: usize = 3072;
pub const CIFAR10_RECORD: usize = CIFAR10_FEATURES + 1;

/// Labelled instances, one per row of `inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    /// instances × features, every value in `[0, 1]`.
    pub inputs: Matrix,
    pub labels: Vec<usize>,
    pub class_count: usize,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        inputs: Matrix,
        labels: Vec<usize>,
        class_count: usize,
    ) -> Result<Self> {
        let d = Self {
            name: name.into(),
            inputs,
            labels,
            class_count,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if self.inputs.rows() != self.labels.len() {
            return Err(Error::pre(format!(
                "{} input rows but {} labels",
                self.inputs.rows(),
                self.labels.len()
            )));
        }
        if let Some((i, &l)) = self
            .labels
            .iter()
            .enumerate()
            .find(|(_, &l)| l >= self.class_count)
        {
            return Err(Error::pre(format!(
                "label {l} at instance {i} is outside 0..{}",
                self.class_count
            )));
        }
        if let Some(v) = self
            .inputs
            .as_slice()
            .iter()
            .find(|v| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::pre(format!("input value {v} outside [0, 1]")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self) -> usize {
        self.inputs.cols()
    }

    /// Rows `idx` in the given order.
    pub fn select(&self, idx: &[usize]) -> Dataset {
        Dataset {
            name: self.name.clone(),
            inputs: self.inputs.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            class_count: self.class_count,
        }
    }

    /// Index of the first instance of every class, in class order.
    pub fn one_per_class(&self) -> Result<Vec<usize>> {
        (0..self.class_count)
            .map(|c| {
                self.labels
                    .iter()
                    .position(|&l| l == c)
                    .ok_or_else(|| Error::pre(format!("class {c} has no instance in {}", self.name)))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataSplit {
    pub train: Dataset,
    pub test: Dataset,
}

impl DataSplit {
    pub fn new(train: Dataset, test: Dataset) -> Result<Self> {
        if train.features() != test.features() || train.class_count != test.class_count {
            return Err(Error::pre(format!(
                "train ({} features, {} classes) and test ({} features, {} classes) disagree",
                train.features(),
                train.class_count,
                test.features(),
                test.class_count
            )));
        }
        Ok(Self { train, test })
    }
}

/// Reads a file, transparently inflating gzip content.
pub fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    inflate_if_gzip(raw)
}

pub fn inflate_if_gzip(raw: Vec<u8>) -> Result<Vec<u8>> {
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::format(0, format!("gzip: {e}")))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn be_u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::format(
                self.bytes.len() as u64,
                format!(
                    "truncated while reading {what}: need {n} bytes at offset {}, file has {}",
                    self.pos,
                    self.bytes.len()
                ),
            )),
        }
    }
}

/// Decodes an IDX image file and label file pair (already inflated).
pub fn parse_idx(images: &[u8], labels: &[u8], class_count: usize) -> Result<Dataset> {
    let mut img = Cursor::new(images);
    let magic = img.be_u32("image magic")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::format(
            0,
            format!("image magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}"),
        ));
    }
    let count = img.be_u32("image count")? as usize;
    let rows = img.be_u32("image rows")? as usize;
    let cols = img.be_u32("image cols")? as usize;
    let features = rows
        .checked_mul(cols)
        .filter(|&f| f > 0)
        .ok_or_else(|| Error::format(8, format!("invalid image dimensions {rows}x{cols}")))?;
    let payload_len = count
        .checked_mul(features)
        .ok_or_else(|| Error::format(4, "image count overflows"))?;
    let pixels = img.take(payload_len, "pixels")?;

    let mut lbl = Cursor::new(labels);
    let magic = lbl.be_u32("label magic")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::format(
            0,
            format!("label magic {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}"),
        ));
    }
    let label_count = lbl.be_u32("label count")? as usize;
    if label_count != count {
        return Err(Error::format(
            4,
            format!("label file holds {label_count} labels but image file holds {count} images"),
        ));
    }
    let raw_labels = lbl.take(label_count, "labels")?;
    let mut out_labels = Vec::with_capacity(count);
    for (i, &l) in raw_labels.iter().enumerate() {
        if (l as usize) >= class_count {
            return Err(Error::format(
                8 + i as u64,
                format!("label {l} is not below class count {class_count}"),
            ));
        }
        out_labels.push(l as usize);
    }

    let data = pixels.iter().map(|&p| p as f64 / 255.0).collect();
    let inputs = Matrix::from_vec(count, features, data)?;
    Ok(Dataset {
        name: "idx".into(),
        inputs,
        labels: out_labels,
        class_count,
    })
}

/// Loads an MNIST-style IDX pair; `.gz` files are inflated.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let images = read_maybe_gz(images_path.as_ref())?;
    let labels = read_maybe_gz(labels_path.as_ref())?;
    let mut d = parse_idx(&images, &labels, MNIST_CLASSES)?;
    d.name = "mnist".into();
    Ok(d)
}

/// Encodes a dataset as an IDX pair (pixels re-quantized to bytes). Image
/// dimensions are written as `1 × features`.
pub fn to_idx(d: &Dataset) -> (Vec<u8>, Vec<u8>) {
    let mut images = Vec::with_capacity(16 + d.inputs.as_slice().len());
    images.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
    images.extend_from_slice(&(d.len() as u32).to_be_bytes());
    images.extend_from_slice(&1u32.to_be_bytes());
    images.extend_from_slice(&(d.features() as u32).to_be_bytes());
    images.extend(d.inputs.as_slice().iter().map(|v| (v * 255.0).round() as u8));
    let mut labels = Vec::with_capacity(8 + d.len());
    labels.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    labels.extend_from_slice(&(d.len() as u32).to_be_bytes());
    labels.extend(d.labels.iter().map(|&l| l as u8));
    (images, labels)
}

/// Parses whitespace-separated text where each nonempty line carries
/// `feature_count` values followed by an integral label.
pub fn parse_amat(text: &str, feature_count: usize) -> Result<Dataset> {
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != feature_count + 1 {
            return Err(Error::line(
                line_no,
                format!("expected {} fields, found {}", feature_count + 1, fields.len()),
            ));
        }
        for tok in &fields[..feature_count] {
            let v: f64 = tok
                .parse()
                .map_err(|_| Error::line(line_no, format!("non-numeric token {tok:?}")))?;
            if !v.is_finite() {
                return Err(Error::line(line_no, format!("non-finite value {tok:?}")));
            }
            data.push(v.clamp(0.0, 1.0));
        }
        let tok = fields[feature_count];
        let l: f64 = tok
            .parse()
            .map_err(|_| Error::line(line_no, format!("non-numeric label {tok:?}")))?;
        if !(l >= 0.0 && l.fract() == 0.0 && l < u32::MAX as f64) {
            return Err(Error::line(line_no, format!("label {tok:?} is not a non-negative integer")));
        }
        labels.push(l as usize);
    }
    let class_count = labels.iter().max().map_or(1, |m| m + 1);
    let inputs = Matrix::from_vec(labels.len(), feature_count, data)?;
    Ok(Dataset {
        name: "amat".into(),
        inputs,
        labels,
        class_count,
    })
}

pub fn load_amat(path: impl AsRef<Path>, feature_count: usize) -> Result<Dataset> {
    let path = path.as_ref();
    let raw = read_maybe_gz(path)?;
    let text = String::from_utf8(raw).map_err(|e| {
        Error::format(e.utf8_error().valid_up_to() as u64, "amat file is not UTF-8")
    })?;
    let mut d = parse_amat(&text, feature_count)?;
    d.name = "mnist_rot".into();
    Ok(d)
}

/// Writes a dataset in the amat layout using shortest round-trip formatting.
pub fn to_amat(d: &Dataset) -> String {
    let mut out = String::new();
    for (row, label) in d.inputs.row_iter().zip(&d.labels) {
        for v in row {
            out.push_str(&format!("{v} "));
        }
        out.push_str(&format!("{label}\n"));
    }
    out
}

/// Decodes concatenated CIFAR-10 records (1 label byte + 3072 pixel bytes).
pub fn parse_cifar10(bytes: &[u8]) -> Result<Dataset> {
    if !bytes.len().is_multiple_of(CIFAR10_RECORD) {
        let whole = bytes.len() / CIFAR10_RECORD * CIFAR10_RECORD;
        return Err(Error::format(
            whole as u64,
            format!(
                "size {} is not a multiple of the {CIFAR10_RECORD}-byte record",
                bytes.len()
            ),
        ));
    }
    let count = bytes.len() / CIFAR10_RECORD;
    let mut data = Vec::with_capacity(count * CIFAR10_FEATURES);
    let mut labels = Vec::with_capacity(count);
    for (i, rec) in bytes.chunks_exact(CIFAR10_RECORD).enumerate() {
        let l = rec[0] as usize;
        if l >= CIFAR10_CLASSES {
            return Err(Error::format(
                (i * CIFAR10_RECORD) as u64,
                format!("label {l} is not below {CIFAR10_CLASSES}"),
            ));
        }
        labels.push(l);
        data.extend(rec[1..].iter().map(|&p| p as f64 / 255.0));
    }
    Ok(Dataset {
        name: "cifar10".into(),
        inputs: Matrix::from_vec(count, CIFAR10_FEATURES, data)?,
        labels,
        class_count: CIFAR10_CLASSES,
    })
}

/// Loads and concatenates CIFAR-10 binary batches in the given order.
pub fn load_cifar10<P: AsRef<Path>>(batch_paths: &[P]) -> Result<Dataset> {
    let mut all = Vec::new();
    for p in batch_paths {
        let bytes = std::fs::read(p.as_ref()).map_err(|e| Error::io(p.as_ref(), e))?;
        if bytes.len() % CIFAR10_RECORD != 0 {
            // Report the error against this file rather than the concatenation.
            parse_cifar10(&bytes)?;
        }
        all.extend_from_slice(&bytes);
    }
    parse_cifar10(&all)
}

/// Parameters of the Gaussian-blob generator.
#[derive(Debug, Clone, PartialEq)]
pub struct BlobSpec {
    pub class_count: usize,
    pub features: usize,
    pub per_class: usize,
    pub spread: f64,
    pub seed: u64,
}

/// Gaussian clusters around uniform random centroids, clipped to `[0, 1]`,
/// shuffled and split 80/20 into train and test.
pub fn synth_blobs(spec: &BlobSpec) -> Result<DataSplit> {
    if spec.class_count == 0 || spec.features == 0 || spec.per_class == 0 {
        return Err(Error::pre("synth_blobs counts must all be >= 1"));
    }
    if !(spec.spread >= 0.0) {
        return Err(Error::pre(format!("spread must be >= 0, got {}", spec.spread)));
    }
    let mut rng = Rng::new(spec.seed);
    let centroids = Matrix::from_fn(spec.class_count, spec.features, |_, _| rng.uniform());
    let total = spec.class_count * spec.per_class;
    let mut order: Vec<usize> = (0..total).collect();
    rng.shuffle(&mut order);

    let mut data = Vec::with_capacity(total * spec.features);
    let mut labels = Vec::with_capacity(total);
    for &slot in &order {
        let class = slot / spec.per_class;
        labels.push(class);
        for &c in centroids.row(class) {
            let noise = if spec.spread > 0.0 { spec.spread * rng.normal() } else { 0.0 };
            data.push((c + noise).clamp(0.0, 1.0));
        }
    }
    let all = Dataset {
        name: "blobs".into(),
        inputs: Matrix::from_vec(total, spec.features, data)?,
        labels,
        class_count: spec.class_count,
    };
    let n_train = (total * 4 + 2) / 5;
    let train_idx: Vec<usize> = (0..n_train).collect();
    let test_idx: Vec<usize> = (n_train..total).collect();
    DataSplit::new(all.select(&train_idx), all.select(&test_idx))
}

/// Uniform sample of `n` instances without replacement, in sampled order.
pub fn subsample(d: &Dataset, n: usize, seed: u64) -> Result<Dataset> {
    if n > d.len() {
        return Err(Error::pre(format!(
            "cannot subsample {n} instances from {}",
            d.len()
        )));
    }
    let mut idx: Vec<usize> = (0..d.len()).collect();
    let mut rng = Rng::new(seed);
    for i in 0..n {
        let j = i + rng.below(d.len() - i);
        idx.swap(i, j);
    }
    idx.truncate(n);
    Ok(d.select(&idx))
}

/// Rotates every square image by an independent uniform angle in `[0, 2π)`
/// with bilinear interpolation about the image centre; pixels sampled from
/// outside the frame are 0. The result is named `mnist_rot_synth`.
pub fn rotate(d: &Dataset, seed: u64) -> Result<Dataset> {
    let f = d.features();
    let side = (f as f64).sqrt().round() as usize;
    if side * side != f || f == 0 {
        return Err(Error::pre(format!("rotate needs square images, got {f} features")));
    }
    let mut rng = Rng::new(seed);
    let c = (side as f64 - 1.0) / 2.0;
    let mut out = Matrix::zeros(d.len(), f);
    for (i, src) in d.inputs.row_iter().enumerate() {
        let theta = rng.uniform() * std::f64::consts::TAU;
        let (s, co) = theta.sin_cos();
        let dst = out.row_mut(i);
        for y in 0..side {
            for x in 0..side {
                // Inverse-map the destination pixel into the source frame.
                let dx = x as f64 - c;
                let dy = y as f64 - c;
                let sx = co * dx + s * dy + c;
                let sy = -s * dx + co * dy + c;
                dst[y * side + x] = bilinear(src, side, sx, sy).clamp(0.0, 1.0);
            }
        }
    }
    Ok(Dataset {
        name: "mnist_rot_synth".into(),
        inputs: out,
        labels: d.labels.clone(),
        class_count: d.class_count,
    })
}

fn bilinear(img: &[f64], side: usize, x: f64, y: f64) -> f64 {
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let at = |xi: f64, yi: f64| -> f64 {
        if xi < 0.0 || yi < 0.0 || xi >= side as f64 || yi >= side as f64 {
            0.0
        } else {
            img[yi as usize * side + xi as usize]
        }
    };
    at(x0, y0) * (1.0 - fx) * (1.0 - fy)
        + at(x0 + 1.0, y0) * fx * (1.0 - fy)
        + at(x0, y0 + 1.0) * (1.0 - fx) * fy
        + at(x0 + 1.0, y0 + 1.0) * fx * fy
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idx_fixture(pixels: &[u8], rows: u32, cols: u32, labels: &[u8]) -> (Vec<u8>, Vec<u8>) {
        let n = labels.len() as u32;
        let mut img = Vec::new();
        img.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
        img.extend_from_slice(&n.to_be_bytes());
        img.extend_from_slice(&rows.to_be_bytes());
        img.extend_from_slice(&cols.to_be_bytes());
        img.extend_from_slice(pixels);
        let mut lbl = Vec::new();
        lbl.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
        lbl.extend_from_slice(&n.to_be_bytes());
        lbl.extend_from_slice(labels);
        (img, lbl)
    }

    #[test]
    fn idx_single_zero_image() {
        let (img, lbl) = idx_fixture(&[0; 784], 28, 28, &[3]);
        let d = parse_idx(&img, &lbl, 10).unwrap();
        assert_eq!(d.inputs.shape(), (1, 784));
        assert!(d.inputs.as_slice().iter().all(|&v| v == 0.0));
        assert_eq!(d.labels, vec![3]);
    }

    #[test]
    fn idx_scales_by_255() {
        let (img, lbl) = idx_fixture(&[0, 51, 255, 102], 2, 2, &[0]);
        let d = parse_idx(&img, &lbl, 10).unwrap();
        assert_eq!(d.inputs.as_slice(), &[0.0, 0.2, 1.0, 0.4]);
    }

    #[test]
    fn idx_rejects_label_out_of_range() {
        let (img, lbl) = idx_fixture(&[0; 4], 2, 2, &[10]);
        let err = parse_idx(&img, &lbl, 10).unwrap_err();
        assert!(matches!(err, Error::Format { offset: 8, .. }), "{err}");
    }

    #[test]
    fn idx_rejects_bad_magic_and_mismatch() {
        let (mut img, lbl) = idx_fixture(&[0; 4], 2, 2, &[1]);
        img[3] = 0x01;
        assert!(matches!(parse_idx(&img, &lbl, 10), Err(Error::Format { offset: 0, .. })));

        let (img, _) = idx_fixture(&[0; 8], 2, 2, &[1, 2]);
        let (_, lbl) = idx_fixture(&[0; 4], 2, 2, &[1]);
        assert!(matches!(parse_idx(&img, &lbl, 10), Err(Error::Format { offset: 4, .. })));
    }

    #[test]
    fn idx_truncation_reports_offset() {
        let (img, lbl) = idx_fixture(&[7; 8], 2, 2, &[1, 2]);
        let err = parse_idx(&img[..img.len() - 1], &lbl, 10).unwrap_err();
        match err {
            Error::Format { offset, .. } => assert_eq!(offset, img.len() as u64 - 1),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn idx_round_trip_is_idempotent() {
        let (img, lbl) = idx_fixture(&[0, 1, 2, 3, 128, 200, 254, 255], 2, 2, &[4, 9]);
        let a = parse_idx(&img, &lbl, 10).unwrap();
        let (img2, lbl2) = to_idx(&a);
        let b = parse_idx(&img2, &lbl2, 10).unwrap();
        assert_eq!(a.inputs, b.inputs);
        assert_eq!(a.labels, b.labels);
    }

    #[test]
    fn amat_exact_values() {
        let text = "0.25 0.5 1\n\n0 1.5 0\n";
        let d = parse_amat(text, 2).unwrap();
        assert_eq!(d.inputs.as_slice(), &[0.25, 0.5, 0.0, 1.0]);
        assert_eq!(d.labels, vec![1, 0]);
        assert_eq!(d.class_count, 2);
        let again = parse_amat(&to_amat(&d), 2).unwrap();
        assert_eq!(again.inputs, d.inputs);
    }

    #[test]
    fn amat_accepts_float_labels() {
        let d = parse_amat("0.1 0.2 7.000000000000000000e+00\n", 2).unwrap();
        assert_eq!(d.labels, vec![7]);
    }

    #[test]
    fn amat_wrong_field_count_names_line() {
        let mut text = String::from(&"0 ".repeat(784));
        text.push_str("1\n");
        text.push_str(&"0 ".repeat(783));
        text.push_str("1\n");
        let err = parse_amat(&text, 784).unwrap_err();
        assert!(matches!(err, Error::Line { line: 2, .. }), "{err}");
    }

    #[test]
    fn amat_non_numeric() {
        assert!(matches!(parse_amat("0.1 x 1\n", 2), Err(Error::Line { line: 1, .. })));
        assert!(matches!(parse_amat("0.1 0.2 -1\n", 2), Err(Error::Line { line: 1, .. })));
    }

    #[test]
    fn cifar_single_record() {
        let mut rec = vec![6u8];
        rec.extend((0..3072).map(|i| (i % 256) as u8));
        let d = parse_cifar10(&rec).unwrap();
        assert_eq!(d.inputs.shape(), (1, 3072));
        assert_eq!(d.labels, vec![6]);
        assert_eq!(d.inputs[(0, 255)], 1.0);
    }

    #[test]
    fn cifar_empty_and_bad_size() {
        let d = parse_cifar10(&[]).unwrap();
        assert!(d.is_empty());
        assert!(matches!(parse_cifar10(&[0; 3074]), Err(Error::Format { offset: 3073, .. })));
    }

    #[test]
    fn blobs_zero_spread_sits_on_centroids() {
        let s = synth_blobs(&BlobSpec {
            class_count: 3,
            features: 4,
            per_class: 10,
            spread: 0.0,
            seed: 1,
        })
        .unwrap();
        assert_eq!(s.train.len() + s.test.len(), 30);
        for d in [&s.train, &s.test] {
            for (row, &l) in d.inputs.row_iter().zip(&d.labels) {
                let first = s.train.labels.iter().position(|&x| x == l).unwrap();
                assert_eq!(row, s.train.inputs.row(first));
            }
        }
    }

    #[test]
    fn blobs_are_deterministic() {
        let spec = BlobSpec {
            class_count: 4,
            features: 5,
            per_class: 20,
            spread: 0.1,
            seed: 77,
        };
        assert_eq!(synth_blobs(&spec).unwrap(), synth_blobs(&spec).unwrap());
        assert_eq!(synth_blobs(&spec).unwrap().train.len(), 64);
    }

    #[test]
    fn subsample_edge_cases() {
        let s = synth_blobs(&BlobSpec {
            class_count: 2,
            features: 3,
            per_class: 10,
            spread: 0.1,
            seed: 3,
        })
        .unwrap();
        let d = &s.train;
        let full = subsample(d, d.len(), 5).unwrap();
        let mut a: Vec<_> = full.inputs.row_iter().map(|r| r.to_vec()).collect();
        let mut b: Vec<_> = d.inputs.row_iter().map(|r| r.to_vec()).collect();
        a.sort_by(|x, y| x.partial_cmp(y).unwrap());
        b.sort_by(|x, y| x.partial_cmp(y).unwrap());
        assert_eq!(a, b);
        assert!(subsample(d, 0, 5).unwrap().is_empty());
        assert!(matches!(subsample(d, d.len() + 1, 5), Err(Error::Precondition(_))));
        assert_eq!(subsample(d, 7, 9).unwrap(), subsample(d, 7, 9).unwrap());
    }

    #[test]
    fn rotation_preserves_centre_pixel_and_range() {
        let mut px = vec![0u8; 9];
        px[4] = 255;
        let (img, lbl) = idx_fixture(&px, 3, 3, &[2]);
        let d = parse_idx(&img, &lbl, 10).unwrap();
        let r = rotate(&d, 4).unwrap();
        assert_eq!(r.name, "mnist_rot_synth");
        assert!((r.inputs[(0, 4)] - 1.0).abs() < 1e-12);
        assert!(r.validate().is_ok());
    }

    #[test]
    fn one_per_class_missing_class() {
        let d = Dataset::new("t", Matrix::zeros(2, 1), vec![0, 0], 2).unwrap();
        assert!(d.one_per_class().is_err());
    }
}
