use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ops::{conv_output_extent, deconv_output_extent, Kernel, Stride};
use crate::tensor::MapDims;

/// Channel counts of the last encoder block that yield the compared
/// descriptor sizes.
pub const CANONICAL_D3: [usize; 7] = [8, 16, 32, 64, 128, 256, 512];
pub const DEFAULT_D1: usize = 128;
pub const DEFAULT_D2: usize = 128;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backbone {
    Vgg16,
    Alexnet,
    /// Any other feature source; geometry comes entirely from the `ArchSpec`.
    Custom,
}

impl Backbone {
    pub fn tag(self) -> u8 {
        match self {
            Backbone::Vgg16 => 0,
            Backbone::Alexnet => 1,
            Backbone::Custom => 255,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Backbone::Vgg16),
            1 => Some(Backbone::Alexnet),
            255 => Some(Backbone::Custom),
            _ => None,
        }
    }

    /// conv5 feature-map size at 640×480 input, pre-ReLU.
    pub fn feature_dims(self) -> Option<MapDims> {
        match self {
            Backbone::Vgg16 => Some(MapDims::new(512, 30, 40)),
            Backbone::Alexnet => Some(MapDims::new(256, 28, 38)),
            Backbone::Custom => None,
        }
    }

    pub fn blocks(self) -> Option<[BlockGeometry; 3]> {
        let s1 = Stride::new(1, 1);
        let s2 = Stride::new(2, 2);
        match self {
            Backbone::Vgg16 => Some([
                BlockGeometry::new(Kernel::new(4, 4), s1),
                BlockGeometry::new(Kernel::new(7, 5), s2),
                BlockGeometry::new(Kernel::new(5, 3), s2),
            ]),
            Backbone::Alexnet => Some([
                BlockGeometry::new(Kernel::new(4, 4), s1),
                BlockGeometry::new(Kernel::new(5, 3), s2),
                BlockGeometry::new(Kernel::new(5, 3), s2),
            ]),
            Backbone::Custom => None,
        }
    }
}

impl fmt::Display for Backbone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Backbone::Vgg16 => "vgg16",
            Backbone::Alexnet => "alexnet",
            Backbone::Custom => "custom",
        })
    }
}

impl FromStr for Backbone {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "vgg16" => Ok(Backbone::Vgg16),
            "alexnet" => Ok(Backbone::Alexnet),
            "custom" => Ok(Backbone::Custom),
            other => Err(Error::Config(format!("unknown backbone {other:?}"))),
        }
    }
}

/// Kernel and stride of one encoder block; the mirrored decoder block uses
/// the same pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BlockGeometry {
    pub kernel: Kernel,
    pub stride: Stride,
}

impl BlockGeometry {
    pub const fn new(kernel: Kernel, stride: Stride) -> Self {
        Self { kernel, stride }
    }
}

impl fmt::Display for BlockGeometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}x{}/{}x{}",
            self.kernel.h, self.kernel.w, self.stride.h, self.stride.w
        )
    }
}

impl FromStr for BlockGeometry {
    type Err = Error;

    /// `KHxKW/S` or `KHxKW/SHxSW`, e.g. `7x5/2`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("block {s:?} is not of the form KHxKW/S[xS]"));
        let (k, st) = s.split_once('/').ok_or_else(bad)?;
        let pair = |t: &str| -> Result<(usize, usize)> {
            match t.split_once('x') {
                Some((a, b)) => Ok((
                    a.trim().parse().map_err(|_| bad())?,
                    b.trim().parse().map_err(|_| bad())?,
                )),
                None => {
                    let v = t.trim().parse().map_err(|_| bad())?;
                    Ok((v, v))
                }
            }
        };
        let (kh, kw) = pair(k)?;
        let (sh, sw) = pair(st)?;
        Ok(Self::new(Kernel::new(kh, kw), Stride::new(sh, sw)))
    }
}

/// Architecture of the autoencoder: three encoder blocks with channels
/// `c → d1 → d2 → d3`, mirrored by three decoder blocks back to `c`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ArchSpec {
    pub backbone: Backbone,
    pub input: MapDims,
    pub d1: usize,
    pub d2: usize,
    pub d3: usize,
    pub blocks: [BlockGeometry; 3],
}

impl ArchSpec {
    pub fn for_backbone(backbone: Backbone, d1: usize, d2: usize, d3: usize) -> Result<Self> {
        match (backbone.feature_dims(), backbone.blocks()) {
            (Some(input), Some(blocks)) => Ok(Self {
                backbone,
                input,
                d1,
                d2,
                d3,
                blocks,
            }),
            _ => Err(Error::Config(
                "custom backbones need explicit input dims and blocks".into(),
            )),
        }
    }

    pub fn vgg16(d1: usize, d2: usize, d3: usize) -> Self {
        Self::for_backbone(Backbone::Vgg16, d1, d2, d3).expect("vgg16 geometry is built in")
    }

    pub fn alexnet(d1: usize, d2: usize, d3: usize) -> Self {
        Self::for_backbone(Backbone::Alexnet, d1, d2, d3).expect("alexnet geometry is built in")
    }

    pub fn custom(input: MapDims, d1: usize, d2: usize, d3: usize, blocks: [BlockGeometry; 3]) -> Self {
        Self {
            backbone: Backbone::Custom,
            input,
            d1,
            d2,
            d3,
            blocks,
        }
    }

    pub fn channels(&self) -> [usize; 4] {
        [self.input.c, self.d1, self.d2, self.d3]
    }

    pub fn is_canonical_d3(&self) -> bool {
        CANONICAL_D3.contains(&self.d3)
    }

    /// Feature-map sizes entering each encoder block plus the encoder output
    /// (four entries). Fails when a block does not fit or when the strided
    /// arithmetic drops rows/columns, which would break the decoder's shape
    /// round trip.
    pub fn stage_dims(&self) -> Result<[MapDims; 4]> {
        let channels = self.channels();
        if let Some(i) = channels.iter().position(|&c| c == 0) {
            return Err(Error::Architecture(format!(
                "channel count {} must be at least 1",
                ["input", "d1", "d2", "d3"][i]
            )));
        }
        let mut dims = [self.input; 4];
        if self.input.h == 0 || self.input.w == 0 {
            return Err(Error::Architecture(format!(
                "input dims {} must be positive",
                self.input
            )));
        }
        for (i, b) in self.blocks.iter().enumerate() {
            let prev = dims[i];
            if b.stride.h == 0 || b.stride.w == 0 || b.kernel.h == 0 || b.kernel.w == 0 {
                return Err(Error::Architecture(format!(
                    "encoder block {} has a zero kernel or stride ({b})",
                    i + 1
                )));
            }
            let h = conv_output_extent(prev.h, b.kernel.h, b.stride.h);
            let w = conv_output_extent(prev.w, b.kernel.w, b.stride.w);
            let (h, w) = match (h, w) {
                (Some(h), Some(w)) => (h, w),
                _ => {
                    return Err(Error::Architecture(format!(
                        "encoder block {} ({b}) produces non-positive spatial dims from {}x{}",
                        i + 1,
                        prev.h,
                        prev.w
                    )))
                }
            };
            if deconv_output_extent(h, b.kernel.h, b.stride.h) != prev.h
                || deconv_output_extent(w, b.kernel.w, b.stride.w) != prev.w
            {
                return Err(Error::Architecture(format!(
                    "encoder block {} ({b}) on {}x{} leaves a stride remainder; \
                     the decoder cannot restore the input size",
                    i + 1,
                    prev.h,
                    prev.w
                )));
            }
            dims[i + 1] = MapDims::new(channels[i + 1], h, w);
        }
        Ok(dims)
    }

    pub fn encoder_output(&self) -> Result<MapDims> {
        Ok(self.stage_dims()?[3])
    }

    /// Length of the flattened descriptor, `d3·h''·w''`.
    pub fn descriptor_len(&self) -> Result<usize> {
        Ok(self.encoder_output()?.len())
    }

    pub fn validate(&self) -> Result<()> {
        self.stage_dims().map(|_| ())
    }
}
