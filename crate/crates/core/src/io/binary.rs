//! STPF1: a little-endian binary dump of a solved surface.
//!
//! ```text
//! magic "STPF1"
//! u32 nt, u32 nx, f64 scale, i64 kink (-1 for none)
//! f64 t[nt], f64 x[nx]
//! f64 values[nt*nx], f64 obstacle[nt*nx], f64 residual[nt*nx]
//! u8 region[nt*nx]             (0 continue, 1 stop)
//! u32 n_actions, then per action u32 len + UTF-8 name
//! u8 has_action, then u16 action[nt*nx] when set
//! ```

use std::io::{Read, Write};

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::solver::{Region, ValueSurface};

pub const MAGIC: &[u8; 5] = b"STPF1";

pub fn write_surface_binary(s: &ValueSurface, mut w: impl Write) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_u32::<LE>(s.nt() as u32)?;
    w.write_u32::<LE>(s.nx() as u32)?;
    w.write_f64::<LE>(s.scale)?;
    w.write_i64::<LE>(s.grid.kink.map_or(-1, |k| k as i64))?;
    for v in s.grid.t.iter().chain(&s.grid.x).chain(&s.values).chain(&s.obstacle).chain(&s.residual) {
        w.write_f64::<LE>(*v)?;
    }
    for r in &s.region {
        w.write_u8(matches!(r, Region::Stop) as u8)?;
    }
    w.write_u32::<LE>(s.action_names.len() as u32)?;
    for name in &s.action_names {
        w.write_u32::<LE>(name.len() as u32)?;
        w.write_all(name.as_bytes())?;
    }
    match &s.action {
        Some(a) => {
            w.write_u8(1)?;
            for v in a {
                w.write_u16::<LE>(*v)?;
            }
        }
        None => w.write_u8(0)?,
    }
    Ok(())
}

fn f64s(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    let mut v = vec![0.0; n];
    r.read_f64_into::<LE>(&mut v)?;
    Ok(v)
}

pub fn read_surface_binary(mut r: impl Read) -> Result<ValueSurface> {
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}; expected STPF1")));
    }
    let nt = r.read_u32::<LE>()? as usize;
    let nx = r.read_u32::<LE>()? as usize;
    let scale = r.read_f64::<LE>()?;
    let kink = r.read_i64::<LE>()?;
    let n = nt
        .checked_mul(nx)
        .filter(|&n| n > 0 && n < 1 << 31)
        .ok_or_else(|| Error::Format(format!("implausible dimensions {nt}x{nx}")))?;
    let t = f64s(&mut r, nt)?;
    let x = f64s(&mut r, nx)?;
    let values = f64s(&mut r, n)?;
    let obstacle = f64s(&mut r, n)?;
    let residual = f64s(&mut r, n)?;
    let mut raw = vec![0u8; n];
    r.read_exact(&mut raw)?;
    let region = raw
        .iter()
        .map(|&b| match b {
            0 => Ok(Region::Continue),
            1 => Ok(Region::Stop),
            _ => Err(Error::Format(format!("bad region byte {b}"))),
        })
        .collect::<Result<Vec<_>>>()?;
    let n_names = r.read_u32::<LE>()? as usize;
    let mut action_names = Vec::with_capacity(n_names.min(1 << 16));
    for _ in 0..n_names {
        let len = r.read_u32::<LE>()? as usize;
        let mut buf = vec![0u8; len.min(1 << 16)];
        r.read_exact(&mut buf)?;
        action_names.push(String::from_utf8(buf).map_err(|e| Error::Format(e.to_string()))?);
    }
    let action = match r.read_u8()? {
        0 => None,
        1 => {
            let mut a = vec![0u16; n];
            r.read_u16_into::<LE>(&mut a)?;
            Some(a)
        }
        b => return Err(Error::Format(format!("bad action flag {b}"))),
    };
    Ok(ValueSurface {
        grid: Grid::from_nodes(t, x, usize::try_from(kink).ok()),
        values,
        obstacle,
        region,
        residual,
        action,
        action_names,
        scale,
    })
}
