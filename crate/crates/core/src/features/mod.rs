//! Local features: Harris corners, determinant-of-Hessian blobs, and a
//! 128-dimensional gradient-histogram descriptor computed at each point.

mod blob;
mod descriptor;
pub mod filter;
mod harris;
mod image;
mod io;

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::FormatError;

pub use self::blob::{detect_blobs, hessian_stack};
pub use self::descriptor::describe;
pub use self::harris::{detect_corners, harris_response};
pub use self::image::{GrayImage, LUMA_WEIGHTS};
pub use self::io::{decode_descriptors, encode_descriptors, load_descriptors, save_descriptors, MVDS_MAGIC};

/// Length of every descriptor.
pub const DESCRIPTOR_DIM: usize = 128;

/// Smallest image side accepted by the detectors.
pub const MIN_IMAGE_SIDE: usize = 16;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("image too small: {width}x{height} (minimum {MIN_IMAGE_SIDE}x{MIN_IMAGE_SIDE})")]
    ImageTooSmall { width: usize, height: usize },
    #[error("descriptor patch out of bounds at ({x:.1}, {y:.1})")]
    PatchOutOfBounds { x: f64, y: f64 },
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("descriptor channel {found} stored in the {expected} list")]
    ChannelMismatch { expected: Channel, found: Channel },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Format(#[from] FormatError),
}

/// Which detector produced a point or descriptor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Corner,
    Blob,
}

impl Channel {
    pub const ALL: [Channel; 2] = [Channel::Corner, Channel::Blob];

    pub fn tag(self) -> u8 {
        match self {
            Channel::Corner => 0,
            Channel::Blob => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Channel::Corner),
            1 => Some(Channel::Blob),
            _ => None,
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Channel::Corner => "corner",
            Channel::Blob => "blob",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterestPoint {
    pub x: f64,
    pub y: f64,
    /// Characteristic size in pixels.
    pub scale: f64,
    pub response: f64,
    pub channel: Channel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Descriptor {
    pub values: [f32; DESCRIPTOR_DIM],
    pub channel: Channel,
}

impl Descriptor {
    pub fn new(values: [f32; DESCRIPTOR_DIM], channel: Channel) -> Self {
        Self { values, channel }
    }

    pub fn zeros(channel: Channel) -> Self {
        Self::new([0.0; DESCRIPTOR_DIM], channel)
    }

    pub fn norm(&self) -> f64 {
        self.values
            .iter()
            .map(|&v| (v as f64) * (v as f64))
            .sum::<f64>()
            .sqrt()
    }
}

/// Per-image descriptors, one list per channel.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DescriptorSet {
    image_id: String,
    corners: Vec<Descriptor>,
    blobs: Vec<Descriptor>,
}

impl DescriptorSet {
    pub fn new(
        image_id: impl Into<String>,
        corners: Vec<Descriptor>,
        blobs: Vec<Descriptor>,
    ) -> Result<Self, FeatureError> {
        for (expected, list) in [(Channel::Corner, &corners), (Channel::Blob, &blobs)] {
            if let Some(d) = list.iter().find(|d| d.channel != expected) {
                return Err(FeatureError::ChannelMismatch {
                    expected,
                    found: d.channel,
                });
            }
        }
        Ok(Self {
            image_id: image_id.into(),
            corners,
            blobs,
        })
    }

    pub fn empty(image_id: impl Into<String>) -> Self {
        Self {
            image_id: image_id.into(),
            ..Self::default()
        }
    }

    pub fn image_id(&self) -> &str {
        &self.image_id
    }

    pub fn set_image_id(&mut self, id: impl Into<String>) {
        self.image_id = id.into();
    }

    pub fn corners(&self) -> &[Descriptor] {
        &self.corners
    }

    pub fn blobs(&self) -> &[Descriptor] {
        &self.blobs
    }

    pub fn channel(&self, channel: Channel) -> &[Descriptor] {
        match channel {
            Channel::Corner => &self.corners,
            Channel::Blob => &self.blobs,
        }
    }

    pub fn len(&self) -> usize {
        self.corners.len() + self.blobs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Detector and descriptor parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    /// Harris sensitivity κ in `det(M) - κ·trace(M)²`.
    pub harris_kappa: f64,
    /// Gaussian integration window of the structure tensor.
    pub harris_sigma: f64,
    /// Corner threshold as a fraction of the image's maximum Harris response.
    pub harris_threshold: f64,
    pub nms_radius: f64,
    /// Cap per channel.
    pub max_points: usize,
    /// Gaussian scales of the blob stack.
    pub scales: Vec<f64>,
    /// Minimum scale-normalized determinant-of-Hessian response.
    pub blob_threshold: f64,
    /// Point scale that maps to a 16 px descriptor patch; corners are reported at this scale.
    pub base_scale: f64,
    /// Decoded images are downscaled so that their longer side is at most this many pixels.
    pub max_image_side: Option<u32>,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            harris_kappa: 0.04,
            harris_sigma: 1.5,
            harris_threshold: 1e-4,
            nms_radius: 4.0,
            max_points: 1000,
            scales: (0..9).map(|i| 1.6 * 2f64.powf(i as f64 / 3.0)).collect(),
            blob_threshold: 1e-3,
            base_scale: 2.0,
            max_image_side: Some(640),
        }
    }
}

pub(crate) fn check_size(img: &GrayImage) -> Result<(), FeatureError> {
    if img.width() < MIN_IMAGE_SIDE || img.height() < MIN_IMAGE_SIDE {
        return Err(FeatureError::ImageTooSmall {
            width: img.width(),
            height: img.height(),
        });
    }
    Ok(())
}

/// Detects both channels and describes every point whose patch fits the border rule.
pub fn extract(img: &GrayImage, cfg: &DetectorConfig) -> Result<DescriptorSet, FeatureError> {
    let corners = describe_all(img, &detect_corners(img, cfg)?, cfg)?;
    let blobs = describe_all(img, &detect_blobs(img, cfg)?, cfg)?;
    DescriptorSet::new(String::new(), corners, blobs)
}

fn describe_all(
    img: &GrayImage,
    points: &[InterestPoint],
    cfg: &DetectorConfig,
) -> Result<Vec<Descriptor>, FeatureError> {
    let mut out = Vec::with_capacity(points.len());
    for pt in points {
        match describe(img, pt, cfg) {
            Ok(d) => out.push(d),
            Err(FeatureError::PatchOutOfBounds { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Reads a view payload from disk: either an `MVDS` descriptor file or an
/// encoded image, which is decoded and run through [`extract`].
pub fn load_view(path: &Path, cfg: &DetectorConfig) -> Result<DescriptorSet, FeatureError> {
    let bytes = std::fs::read(path)?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    descriptors_from_payload(&bytes, &id, cfg)
}

/// Auto-detects the payload kind by its leading bytes.
pub fn descriptors_from_payload(
    bytes: &[u8],
    image_id: &str,
    cfg: &DetectorConfig,
) -> Result<DescriptorSet, FeatureError> {
    if bytes.starts_with(MVDS_MAGIC) {
        return Ok(decode_descriptors(bytes, image_id)?);
    }
    let img = GrayImage::decode(bytes, cfg.max_image_side)?;
    let mut ds = extract(&img, cfg)?;
    ds.set_image_id(image_id);
    Ok(ds)
}
