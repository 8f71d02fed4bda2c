//! SFLD1 field files: one text header line followed by little-endian f64
//! node values, x-fastest, components interleaved.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{BoundaryTag, DirectionField, GridSpec};
use crate::error::{Error, Result};

pub const MAGIC: &str = "SFLD1";

pub fn write_field(field: &DirectionField, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_to(field, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_field(path: impl AsRef<Path>) -> Result<DirectionField> {
    read_from(&mut BufReader::new(File::open(path)?))
}

pub fn write_to(field: &DirectionField, w: &mut impl Write) -> Result<()> {
    let g = field.grid();
    let [nx, ny, nz] = g.dims();
    let [ox, oy, oz] = g.origin();
    writeln!(
        w,
        "{MAGIC} {nx} {ny} {nz} {} {} {ox} {oy} {oz} {}",
        field.components(),
        g.spacing(),
        field.boundary()
    )?;
    for v in field.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_from(r: &mut impl BufRead) -> Result<DirectionField> {
    let mut header = Vec::new();
    r.take(4096).read_until(b'\n', &mut header)?;
    if header.last() != Some(&b'\n') {
        return Err(Error::Format("missing or overlong header line".into()));
    }
    let header = std::str::from_utf8(&header[..header.len() - 1])
        .map_err(|_| Error::Format("header is not UTF-8".into()))?;
    let tokens: Vec<&str> = header.split_ascii_whitespace().collect();
    if tokens.first() != Some(&MAGIC) {
        return Err(Error::Format(format!("bad magic, expected {MAGIC}")));
    }
    if tokens.len() != 10 {
        return Err(Error::Format(format!("header has {} fields, expected 10", tokens.len())));
    }
    let int = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::Format(format!("bad integer {s:?} in header")))
    };
    let real = |s: &str| {
        s.parse::<f64>()
            .map_err(|_| Error::Format(format!("bad number {s:?} in header")))
    };
    let dims = [int(tokens[1])?, int(tokens[2])?, int(tokens[3])?];
    let components = int(tokens[4])?;
    let spacing = real(tokens[5])?;
    let origin = [real(tokens[6])?, real(tokens[7])?, real(tokens[8])?];
    let boundary: BoundaryTag = tokens[9].parse()?;
    let grid = GridSpec::new(dims, spacing, origin).map_err(|e| Error::Format(e.to_string()))?;
    if components != 3 && components != 4 {
        return Err(Error::Format(format!("unsupported component count {components}")));
    }
    let count = grid.len() * components;
    let mut bytes = Vec::with_capacity(count * 8);
    r.read_to_end(&mut bytes)?;
    if bytes.len() != count * 8 {
        return Err(Error::Format(format!(
            "payload holds {} bytes, header implies {}",
            bytes.len(),
            count * 8
        )));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect();
    DirectionField::new(grid, components, values, boundary)
        .map_err(|e| Error::Format(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn sample() -> DirectionField {
        let g = GridSpec::new([4, 3, 5], 0.1 + 0.2, [-1.0 / 3.0, 0.0, 7.25]).unwrap();
        DirectionField::from_fn(g, BoundaryTag::DirichletTrace, |p| {
            let v = [p[0].sin(), p[1].cos() + 0.1, p[2] * 1e-7];
            let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            [v[0] / n, v[1] / n, v[2] / n]
        })
        .unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let f = sample();
        let mut buf = Vec::new();
        write_to(&f, &mut buf).unwrap();
        let g = read_from(&mut Cursor::new(buf)).unwrap();
        assert_eq!(f.grid(), g.grid());
        assert_eq!(f.boundary(), g.boundary());
        assert!(f.values().iter().zip(g.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let mut buf = Vec::new();
        write_to(&sample(), &mut buf).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(matches!(read_from(&mut Cursor::new(buf)), Err(Error::Format(_))));
    }

    #[test]
    fn short_vector_count_is_rejected() {
        let mut buf = b"SFLD1 4 4 4 3 0.5 0 0 0 free\n".to_vec();
        for _ in 0..63 * 3 {
            buf.extend_from_slice(&1.0f64.to_le_bytes());
        }
        assert!(matches!(read_from(&mut Cursor::new(buf)), Err(Error::Format(_))));
    }

    #[test]
    fn bad_magic_is_rejected() {
        let buf = b"SFLD2 4 4 4 3 0.5 0 0 0 free\n".to_vec();
        assert!(matches!(read_from(&mut Cursor::new(buf)), Err(Error::Format(_))));
        let buf = b"not a field at all".to_vec();
        assert!(matches!(read_from(&mut Cursor::new(buf)), Err(Error::Format(_))));
    }
}
