//! `SSRF` frame container.
//!
//! Layout, all little-endian: magic `SSRF`, version `u32`, `N u32`, `M u32`,
//! frame count `u32`, then per frame: `frame_id u32`, parameter count `u32`,
//! `params f32[]`, `lr_disp f32[N*3]`, `hr_flag u8`, and `hr_disp f32[M*3]`
//! when the flag is 1.
//!
//! Values are held as `f64` in memory but always pass through `f32`, so a
//! written container reads back to the same in-memory values and rewriting it
//! yields identical bytes.

use std::fs;
use std::path::Path;

use super::Vec3;
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"SSRF";
const VERSION: u32 = 1;

/// One paired sample: coarse displacements, optional fine targets, and the
/// activation parameters that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementFrame {
    pub frame_id: u32,
    pub params: Vec<f64>,
    pub lr_disp: Vec<Vec3>,
    pub hr_disp: Option<Vec<Vec3>>,
}

impl DisplacementFrame {
    /// Checks row counts against the meshes and that every value is finite.
    pub fn validate(&self, lattice_vertices: usize, surface_vertices: usize) -> Result<()> {
        if self.lr_disp.len() != lattice_vertices {
            return Err(Error::shape(format!(
                "frame {}: {} coarse rows, lattice has {lattice_vertices}",
                self.frame_id,
                self.lr_disp.len()
            )));
        }
        if let Some(hr) = &self.hr_disp {
            if hr.len() != surface_vertices {
                return Err(Error::shape(format!(
                    "frame {}: {} surface rows, surface has {surface_vertices}",
                    self.frame_id,
                    hr.len()
                )));
            }
        }
        let finite = self
            .lr_disp
            .iter()
            .chain(self.hr_disp.iter().flatten())
            .flatten()
            .chain(&self.params)
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::shape(format!(
                "frame {} has non-finite values",
                self.frame_id
            )));
        }
        Ok(())
    }

    /// Rounds every value to single precision, the container's storage type.
    pub fn quantized(mut self) -> Self {
        let q = |v: &mut f64| *v = *v as f32 as f64;
        self.params.iter_mut().for_each(q);
        self.lr_disp.iter_mut().flatten().for_each(q);
        if let Some(hr) = &mut self.hr_disp {
            hr.iter_mut().flatten().for_each(q);
        }
        self
    }
}

/// All frames of one dataset, sized against a lattice and a surface.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSet {
    pub lattice_vertices: usize,
    pub surface_vertices: usize,
    pub frames: Vec<DisplacementFrame>,
}

impl FrameSet {
    pub fn new(
        lattice_vertices: usize,
        surface_vertices: usize,
        frames: Vec<DisplacementFrame>,
    ) -> Result<Self> {
        for f in &frames {
            f.validate(lattice_vertices, surface_vertices)?;
        }
        Ok(FrameSet {
            lattice_vertices,
            surface_vertices,
            frames,
        })
    }

    pub fn get(&self, frame_id: u32) -> Option<&DisplacementFrame> {
        self.frames.iter().find(|f| f.frame_id == frame_id)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        for v in [
            VERSION,
            self.lattice_vertices as u32,
            self.surface_vertices as u32,
            self.frames.len() as u32,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let put = |out: &mut Vec<u8>, v: f64| out.extend_from_slice(&(v as f32).to_le_bytes());
        for f in &self.frames {
            out.extend_from_slice(&f.frame_id.to_le_bytes());
            out.extend_from_slice(&(f.params.len() as u32).to_le_bytes());
            for &p in &f.params {
                put(&mut out, p);
            }
            for &c in f.lr_disp.iter().flatten() {
                put(&mut out, c);
            }
            match &f.hr_disp {
                Some(hr) => {
                    out.push(1);
                    for &c in hr.iter().flatten() {
                        put(&mut out, c);
                    }
                }
                None => out.push(0),
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Format("missing SSRF magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported SSRF version {version}")));
        }
        let n = r.u32()? as usize;
        let m = r.u32()? as usize;
        let count = r.u32()? as usize;
        let mut frames = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let frame_id = r.u32()?;
            let pc = r.u32()? as usize;
            let params = (0..pc).map(|_| r.f32()).collect::<Result<_>>()?;
            let lr_disp = r.vec3s(n)?;
            let hr_disp = match r.take(1)?[0] {
                0 => None,
                1 => Some(r.vec3s(m)?),
                flag => return Err(Error::Format(format!("bad hr flag {flag}"))),
            };
            frames.push(DisplacementFrame {
                frame_id,
                params,
                lr_disp,
                hr_disp,
            });
        }
        if r.pos != bytes.len() {
            return Err(Error::Format("trailing bytes after last frame".into()));
        }
        FrameSet::new(n, m, frames)
    }
}

pub(crate) struct Reader<'a> {
    pub bytes: &'a [u8],
    pub pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Reader { bytes, pos: 0 }
    }

    pub fn is_done(&self) -> bool {
        self.pos == self.bytes.len()
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format("unexpected end of data".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn f32(&mut self) -> Result<f64> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()) as f64)
    }

    fn vec3s(&mut self, n: usize) -> Result<Vec<Vec3>> {
        (0..n)
            .map(|_| Ok([self.f32()?, self.f32()?, self.f32()?]))
            .collect()
    }
}

pub fn write_frames(set: &FrameSet, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path.as_ref(), set.to_bytes()).map_err(|e| Error::io(path.as_ref(), e))
}

pub fn read_frames(path: impl AsRef<Path>) -> Result<FrameSet> {
    let bytes = fs::read(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
    FrameSet::from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn frame(id: u32, n: usize, m: Option<usize>, seed: f64) -> DisplacementFrame {
        DisplacementFrame {
            frame_id: id,
            params: vec![seed, 0.5],
            lr_disp: (0..n).map(|i| [i as f64 * seed, -seed, 0.1]).collect(),
            hr_disp: m.map(|m| (0..m).map(|j| [seed, j as f64 / 7.0, 2.0]).collect()),
        }
        .quantized()
    }

    #[test]
    fn header_layout() {
        let set = FrameSet::new(2, 3, vec![frame(9, 2, None, 1.0)]).unwrap();
        let bytes = set.to_bytes();
        assert_eq!(&bytes[..4], b"SSRF");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(bytes[16..20].try_into().unwrap()), 1);
        // id + param count + 2 params + 6 lr floats + flag
        assert_eq!(bytes.len(), 20 + 4 + 4 + 8 + 24 + 1);
    }

    #[test]
    fn rejects_wrong_rows_and_truncation() {
        assert!(FrameSet::new(3, 3, vec![frame(0, 2, None, 1.0)]).is_err());
        let set = FrameSet::new(2, 3, vec![frame(0, 2, Some(3), 1.0)]).unwrap();
        let bytes = set.to_bytes();
        assert!(FrameSet::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(FrameSet::from_bytes(&bad), Err(Error::Format(_))));
    }

    #[test]
    fn non_finite_values_are_rejected() {
        let mut f = frame(0, 2, None, 1.0);
        f.lr_disp[1][2] = f64::NAN;
        assert!(f.validate(2, 0).is_err());
    }

    proptest! {
        #[test]
        fn binary_round_trip_is_bit_exact(seeds in prop::collection::vec(-1e3f64..1e3, 1..4)) {
            let frames = seeds.iter().enumerate()
                .map(|(i, &s)| frame(i as u32, 4, (i % 2 == 0).then_some(5), s))
                .collect();
            let set = FrameSet::new(4, 5, frames).unwrap();
            let bytes = set.to_bytes();
            let back = FrameSet::from_bytes(&bytes).unwrap();
            prop_assert_eq!(&back, &set);
            prop_assert_eq!(back.to_bytes(), bytes);
        }
    }
}
