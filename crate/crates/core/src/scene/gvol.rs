//! `GVOL1` density volume files.
//!
//! One ASCII header line `GVOL1 Nx Ny Nz dx dy dz ox oy oz` (SI units,
//! origin = minimum corner) followed by `Nx*Ny*Nz` little-endian `f32`
//! samples, x fastest. Samples are narrowed to `f32` on save.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::DensityVolume;
use crate::error::{Error, Result};
use crate::math::Vec3;

const MAGIC: &str = "GVOL1";
const MAX_HEADER: usize = 1024;

pub fn write_density_volume<W: Write>(mut w: W, vol: &DensityVolume) -> std::io::Result<()> {
    let [nx, ny, nz] = vol.dims();
    let [dx, dy, dz] = vol.spacing();
    let o = vol.origin();
    writeln!(w, "{MAGIC} {nx} {ny} {nz} {dx} {dy} {dz} {} {} {}", o.x, o.y, o.z)?;
    let mut buf = Vec::with_capacity(vol.rho().len() * 4);
    for &r in vol.rho() {
        buf.extend_from_slice(&(r as f32).to_le_bytes());
    }
    w.write_all(&buf)?;
    w.flush()
}

pub fn read_density_volume<R: Read>(mut r: R) -> Result<DensityVolume> {
    let mut header = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        match r.read(&mut byte) {
            Ok(0) => return Err(Error::VolumeFormat("unterminated header".into())),
            Ok(_) if byte[0] == b'\n' => break,
            Ok(_) => header.push(byte[0]),
            Err(e) => return Err(Error::VolumeFormat(format!("reading header: {e}"))),
        }
        if header.len() > MAX_HEADER {
            return Err(Error::VolumeFormat("header line too long".into()));
        }
    }
    let header = String::from_utf8(header).map_err(|_| Error::VolumeFormat("header is not UTF-8".into()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.first() != Some(&MAGIC) {
        return Err(Error::VolumeFormat(format!("bad magic, expected {MAGIC}")));
    }
    if fields.len() != 10 {
        return Err(Error::VolumeFormat(format!("header has {} fields, expected 10", fields.len())));
    }
    let dims: Vec<usize> = fields[1..4]
        .iter()
        .map(|s| s.parse().map_err(|_| Error::VolumeFormat(format!("bad dimension `{s}`"))))
        .collect::<Result<_>>()?;
    let reals: Vec<f64> = fields[4..10]
        .iter()
        .map(|s| s.parse().map_err(|_| Error::VolumeFormat(format!("bad number `{s}`"))))
        .collect::<Result<_>>()?;
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::VolumeFormat("dimensions overflow".into()))?;

    let mut data = Vec::new();
    r.read_to_end(&mut data)
        .map_err(|e| Error::VolumeFormat(format!("reading samples: {e}")))?;
    if data.len() != count * 4 {
        return Err(Error::VolumeFormat(format!(
            "expected {count} samples ({} bytes), found {} bytes",
            count * 4,
            data.len()
        )));
    }
    let rho: Vec<f64> = data
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    if rho.iter().any(|v| !v.is_finite()) {
        return Err(Error::VolumeFormat("non-finite density sample".into()));
    }
    DensityVolume::new(
        [dims[0], dims[1], dims[2]],
        [reals[0], reals[1], reals[2]],
        Vec3::new(reals[3], reals[4], reals[5]),
        rho,
    )
    .map_err(|e| Error::VolumeFormat(e.to_string()))
}

pub fn save_density_volume(path: impl AsRef<Path>, vol: &DensityVolume) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_density_volume(BufWriter::new(f), vol).map_err(|e| Error::io(path, e))
}

pub fn load_density_volume(path: impl AsRef<Path>) -> Result<DensityVolume> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_density_volume(BufReader::new(f))
}
