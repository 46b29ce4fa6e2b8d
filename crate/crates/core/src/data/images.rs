use std::path::Path;

use super::{read_idx_file, DataError, Dataset};

/// Labeled images stored channel-major, `[n][channel][row][col]`, which is the
/// layout convolution layers consume.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageDataset {
    pub pixels: Vec<f64>,
    pub labels: Vec<u8>,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub classes: usize,
}

impl ImageDataset {
    pub fn new(
        pixels: Vec<f64>,
        labels: Vec<u8>,
        (channels, height, width): (usize, usize, usize),
        classes: usize,
    ) -> Result<Self, DataError> {
        if pixels.len() != labels.len() * channels * height * width {
            return Err(DataError::Invalid(format!(
                "{} pixel values for {} images of {channels}x{height}x{width}",
                pixels.len(),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|l| **l as usize >= classes) {
            return Err(DataError::Invalid(format!("label {bad} outside 0..{classes}")));
        }
        Ok(Self {
            pixels,
            labels,
            channels,
            height,
            width,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image_len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn image(&self, i: usize) -> &[f64] {
        &self.pixels[i * self.image_len()..(i + 1) * self.image_len()]
    }

    pub fn subset(&self, indices: &[usize]) -> ImageDataset {
        let mut pixels = Vec::with_capacity(indices.len() * self.image_len());
        for &i in indices {
            pixels.extend_from_slice(self.image(i));
        }
        ImageDataset {
            pixels,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            ..*self
        }
    }

    /// Flattened images paired with one-hot targets.
    pub fn to_dataset(&self) -> Dataset {
        let mut targets = vec![0.0; self.len() * self.classes];
        for (i, &l) in self.labels.iter().enumerate() {
            targets[i * self.classes + l as usize] = 1.0;
        }
        Dataset::new(self.pixels.clone(), targets, self.image_len(), self.classes)
            .expect("image dataset invariants hold")
    }
}

/// Loads MNIST-style IDX image and label files (gzip or raw). Pixels keep
/// their byte values.
pub fn load_mnist(images: &Path, labels: &Path) -> Result<ImageDataset, DataError> {
    let img = read_idx_file(images)?;
    let lab = read_idx_file(labels)?;
    if img.dims.len() != 3 || lab.dims.len() != 1 {
        return Err(DataError::Invalid(format!(
            "expected N×H×W images and N labels, found {:?} and {:?}",
            img.dims, lab.dims
        )));
    }
    if img.dims[0] != lab.dims[0] {
        return Err(DataError::Invalid(format!(
            "{} images but {} labels",
            img.dims[0], lab.dims[0]
        )));
    }
    ImageDataset::new(
        img.data.iter().map(|&b| f64::from(b)).collect(),
        lab.data,
        (1, img.dims[1], img.dims[2]),
        10,
    )
}

/// Per-channel statistics of the training images after scaling by `1/255`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Divides by 255, then standardizes every channel with the mean and standard
/// deviation of the training pixels. The test split reuses those statistics.
pub fn normalize_images(
    train: &ImageDataset,
    test: &ImageDataset,
) -> Result<(ImageDataset, ImageDataset, ImageStats), DataError> {
    if (train.channels, train.height, train.width) != (test.channels, test.height, test.width) {
        return Err(DataError::Invalid("train and test image shapes differ".into()));
    }
    if train.is_empty() {
        return Err(DataError::Invalid("empty training split".into()));
    }
    let plane = train.height * train.width;
    let mut stats = ImageStats {
        mean: Vec::with_capacity(train.channels),
        std: Vec::with_capacity(train.channels),
    };
    for c in 0..train.channels {
        let values = || {
            (0..train.len()).flat_map(move |i| train.image(i)[c * plane..(c + 1) * plane].iter().map(|v| v / 255.0))
        };
        let n = (train.len() * plane) as f64;
        let mean = values().sum::<f64>() / n;
        let var = values().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        if !(var > 0.0) {
            return Err(DataError::Invalid(format!("channel {c} has zero standard deviation")));
        }
        stats.mean.push(mean);
        stats.std.push(var.sqrt());
    }
    let apply = |d: &ImageDataset| {
        let mut out = d.clone();
        for img in out.pixels.chunks_mut(d.image_len()) {
            for (c, ch) in img.chunks_mut(plane).enumerate() {
                for v in ch {
                    *v = (*v / 255.0 - stats.mean[c]) / stats.std[c];
                }
            }
        }
        out
    };
    Ok((apply(train), apply(test), stats))
}
