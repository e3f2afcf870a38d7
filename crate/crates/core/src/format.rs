//! ENSK1 ensemble files.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! header
//!   magic        5 bytes  "ENSK1"
//!   kind         u8       0 = states_at_time, 1 = frozen_paths
//!   count        u64      number of members
//!   horizon      f64      horizon (paths) or snapshot time (states)
//!   lineage_len  u32
//!   lineage      lineage_len × u64
//! state record
//!   position 3×f64, velocity 3×f64, last_event_time f64
//! path record
//!   position 3×f64, velocity 3×f64 at t = 0
//!   event_count  u32
//!   events       event_count × (time f64, velocity 3×f64)
//! ```
//!
//! Positions at jump times are not stored; they are rebuilt on load with the
//! same arithmetic used when the path was recorded, so a round trip is
//! bit-exact.

use crate::measures::{Ensemble, MeasureError, Members, ParticlePath, ParticleState};
use crate::vec3::Vec3;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;
use thiserror::Error;

pub const MAGIC: &[u8; 5] = b"ENSK1";

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("not an ENSK1 file")]
    BadMagic,
    #[error("unknown ensemble kind byte {0}")]
    BadKind(u8),
    #[error("invalid ensemble content: {0}")]
    Invalid(#[from] MeasureError),
}

pub fn write_ensemble<W: Write>(e: &Ensemble, mut w: W) -> Result<(), FormatError> {
    w.write_all(MAGIC)?;
    let kind: u8 = match e.members() {
        Members::States(_) => 0,
        Members::Paths(_) => 1,
    };
    w.write_all(&[kind])?;
    w.write_all(&(e.len() as u64).to_le_bytes())?;
    w.write_all(&e.time_horizon().to_le_bytes())?;
    w.write_all(&(e.seed_lineage().len() as u32).to_le_bytes())?;
    for s in e.seed_lineage() {
        w.write_all(&s.to_le_bytes())?;
    }
    match e.members() {
        Members::States(states) => {
            for s in states {
                put_vec(&mut w, s.position)?;
                put_vec(&mut w, s.velocity)?;
                w.write_all(&s.last_event_time.to_le_bytes())?;
            }
        }
        Members::Paths(paths) => {
            for p in paths {
                put_vec(&mut w, p.initial().position)?;
                put_vec(&mut w, p.initial().velocity)?;
                w.write_all(&(p.events().len() as u32).to_le_bytes())?;
                for ev in p.events() {
                    w.write_all(&ev.time.to_le_bytes())?;
                    put_vec(&mut w, ev.velocity)?;
                }
            }
        }
    }
    Ok(())
}

pub fn read_ensemble<R: Read>(mut r: R) -> Result<Ensemble, FormatError> {
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(FormatError::BadMagic);
    }
    let kind = get_u8(&mut r)?;
    let count = get_u64(&mut r)? as usize;
    let horizon = get_f64(&mut r)?;
    let lineage_len = get_u32(&mut r)? as usize;
    let lineage = (0..lineage_len)
        .map(|_| get_u64(&mut r))
        .collect::<Result<Vec<_>, _>>()?;
    match kind {
        0 => {
            let mut states = Vec::with_capacity(count.min(1 << 24));
            for _ in 0..count {
                let position = get_vec(&mut r)?;
                let velocity = get_vec(&mut r)?;
                let last_event_time = get_f64(&mut r)?;
                states.push(ParticleState {
                    position,
                    velocity,
                    last_event_time,
                });
            }
            Ok(Ensemble::from_states(states, horizon, lineage)?)
        }
        1 => {
            let mut paths = Vec::with_capacity(count.min(1 << 24));
            for _ in 0..count {
                let position = get_vec(&mut r)?;
                let velocity = get_vec(&mut r)?;
                let mut path = ParticlePath::ballistic(position, velocity);
                let n = get_u32(&mut r)?;
                for _ in 0..n {
                    let t = get_f64(&mut r)?;
                    let v = get_vec(&mut r)?;
                    path.push_jump(t, v)?;
                }
                paths.push(path);
            }
            Ok(Ensemble::from_paths(paths, horizon, lineage)?)
        }
        other => Err(FormatError::BadKind(other)),
    }
}

pub fn save(e: &Ensemble, path: &Path) -> Result<(), FormatError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_ensemble(e, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Ensemble, FormatError> {
    read_ensemble(BufReader::new(File::open(path)?))
}

fn put_vec<W: Write>(w: &mut W, v: Vec3) -> io::Result<()> {
    for c in v.to_array() {
        w.write_all(&c.to_le_bytes())?;
    }
    Ok(())
}

fn get_u8<R: Read>(r: &mut R) -> io::Result<u8> {
    let mut b = [0u8; 1];
    r.read_exact(&mut b)?;
    Ok(b[0])
}

fn get_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn get_u64<R: Read>(r: &mut R) -> io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn get_f64<R: Read>(r: &mut R) -> io::Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn get_vec<R: Read>(r: &mut R) -> io::Result<Vec3> {
    Ok(Vec3::new(get_f64(r)?, get_f64(r)?, get_f64(r)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let e = Ensemble::from_states(
            vec![ParticleState {
                position: Vec3::ZERO,
                velocity: Vec3::new(1.0, 2.0, 3.0),
                last_event_time: 0.5,
            }],
            0.5,
            vec![7],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_ensemble(&e, &mut buf).unwrap();
        assert_eq!(&buf[..5], b"ENSK1");
        assert_eq!(buf[5], 0);
        assert_eq!(u64::from_le_bytes(buf[6..14].try_into().unwrap()), 1);
        assert_eq!(f64::from_le_bytes(buf[14..22].try_into().unwrap()), 0.5);
        assert_eq!(u32::from_le_bytes(buf[22..26].try_into().unwrap()), 1);
        assert_eq!(buf.len(), 26 + 8 + 7 * 8);
        assert_eq!(read_ensemble(buf.as_slice()).unwrap(), e);
    }

    #[test]
    fn rejects_foreign_files() {
        assert!(matches!(
            read_ensemble(&b"ENSK2xxxxxxxxxxxxxxxxxxxxxx"[..]),
            Err(FormatError::BadMagic)
        ));
        let mut bad = b"ENSK1".to_vec();
        bad.push(9);
        bad.extend_from_slice(&[0u8; 20]);
        assert!(matches!(
            read_ensemble(bad.as_slice()),
            Err(FormatError::BadKind(9))
        ));
    }
}
