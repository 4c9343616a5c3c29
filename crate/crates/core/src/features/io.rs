//! `MVDS` descriptor files.
//!
//! Little-endian layout: magic `MVDS`, version u16 = 1, channel count u16 = 2,
//! then for each channel a tag u8 (0 = corner, 1 = blob), a descriptor count
//! u32, the dimension u16 = 128 and `count × 128` f32 values, row-major.
//! Trailing bytes are rejected.

use std::path::Path;

use super::{Channel, Descriptor, DescriptorSet, FeatureError, DESCRIPTOR_DIM};
use crate::codec::{FormatError, Reader, Writer};

pub const MVDS_MAGIC: &[u8; 4] = b"MVDS";
const VERSION: u16 = 1;

pub fn encode_descriptors(ds: &DescriptorSet) -> Vec<u8> {
    let mut w = Writer::new();
    w.bytes(MVDS_MAGIC);
    w.u16(VERSION);
    w.u16(Channel::ALL.len() as u16);
    for channel in Channel::ALL {
        let list = ds.channel(channel);
        w.u8(channel.tag());
        w.u32(list.len() as u32);
        w.u16(DESCRIPTOR_DIM as u16);
        for d in list {
            for &v in &d.values {
                w.f32(v);
            }
        }
    }
    w.into_inner()
}

pub fn decode_descriptors(bytes: &[u8], image_id: &str) -> Result<DescriptorSet, FormatError> {
    let mut r = Reader::new(bytes);
    r.magic("MVDS")?;
    let version = r.u16()?;
    if version != VERSION {
        return Err(FormatError::BadVersion {
            found: version,
            expected: VERSION,
        });
    }
    let channels = r.u16()?;
    if channels != 2 {
        return Err(FormatError::Corrupt(format!("channel count {channels}")));
    }
    let mut lists: [Option<Vec<Descriptor>>; 2] = [None, None];
    for _ in 0..channels {
        let tag = r.u8()?;
        let channel = Channel::from_tag(tag)
            .ok_or_else(|| FormatError::Corrupt(format!("unknown channel tag {tag}")))?;
        let count = r.u32()? as usize;
        let dim = r.u16()?;
        if dim as usize != DESCRIPTOR_DIM {
            return Err(FormatError::Corrupt(format!("descriptor dimension {dim}")));
        }
        if count.saturating_mul(DESCRIPTOR_DIM * 4) > r.remaining() {
            return Err(FormatError::Truncated);
        }
        let mut list = Vec::with_capacity(count);
        for _ in 0..count {
            let mut values = [0f32; DESCRIPTOR_DIM];
            for v in values.iter_mut() {
                *v = r.f32()?;
            }
            list.push(Descriptor::new(values, channel));
        }
        let slot = &mut lists[channel.tag() as usize];
        if slot.is_some() {
            return Err(FormatError::Corrupt(format!("duplicate {channel} block")));
        }
        *slot = Some(list);
    }
    r.finish()?;
    let [corners, blobs] = lists;
    Ok(DescriptorSet::new(
        image_id,
        corners.unwrap_or_default(),
        blobs.unwrap_or_default(),
    )
    .expect("channels assigned from block tags"))
}

pub fn save_descriptors(ds: &DescriptorSet, path: &Path) -> Result<(), FeatureError> {
    std::fs::write(path, encode_descriptors(ds))?;
    Ok(())
}

/// Loads an `MVDS` file; the image id is taken from the file stem.
pub fn load_descriptors(path: &Path) -> Result<DescriptorSet, FeatureError> {
    let bytes = std::fs::read(path)?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(decode_descriptors(&bytes, &id)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_set(n: usize) -> DescriptorSet {
        let make = |i: usize, channel| {
            let mut values = [0f32; DESCRIPTOR_DIM];
            for (j, v) in values.iter_mut().enumerate() {
                *v = ((i * 31 + j * 7) % 97) as f32 / 97.0;
            }
            Descriptor::new(values, channel)
        };
        DescriptorSet::new(
            "img",
            (0..n).map(|i| make(i, Channel::Corner)).collect(),
            (0..n / 2).map(|i| make(i + n, Channel::Blob)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn empty_set_layout() {
        let bytes = encode_descriptors(&DescriptorSet::empty("e"));
        assert_eq!(
            bytes,
            [
                b'M', b'V', b'D', b'S', 1, 0, 2, 0, // header
                0, 0, 0, 0, 0, 128, 0, // corner block
                1, 0, 0, 0, 0, 128, 0, // blob block
            ]
        );
        assert_eq!(decode_descriptors(&bytes, "e").unwrap(), DescriptorSet::empty("e"));
    }

    #[test]
    fn roundtrip_is_bitwise() {
        let ds = sample_set(1000);
        let bytes = encode_descriptors(&ds);
        assert_eq!(bytes.len(), 4 + 2 + 2 + 2 * 7 + 1500 * 128 * 4);
        let back = decode_descriptors(&bytes, "img").unwrap();
        assert_eq!(encode_descriptors(&back), bytes);
        assert_eq!(back, ds);
    }

    #[test]
    fn rejects_corruption() {
        let mut bytes = encode_descriptors(&sample_set(3));
        assert!(matches!(
            decode_descriptors(&bytes[..bytes.len() - 1], "x"),
            Err(FormatError::Truncated)
        ));
        bytes.push(0);
        assert!(matches!(decode_descriptors(&bytes, "x"), Err(FormatError::Corrupt(_))));
        bytes.pop();
        bytes[4] = 2;
        assert!(matches!(
            decode_descriptors(&bytes, "x"),
            Err(FormatError::BadVersion { found: 2, .. })
        ));
        bytes[0] = b'X';
        assert!(matches!(decode_descriptors(&bytes, "x"), Err(FormatError::BadMagic { .. })));
    }

    #[test]
    fn file_roundtrip_uses_stem_as_id() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("view_3.mvds");
        let mut ds = sample_set(10);
        save_descriptors(&ds, &path).unwrap();
        ds.set_image_id("view_3");
        assert_eq!(load_descriptors(&path).unwrap(), ds);
    }
}
