//! Greyscale portable float map (`Pf`) reading and writing.
//!
//! Rows are stored bottom to top; a negative scale marks little-endian data.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::hdr_fusion::Image;

pub fn write_pfm(image: &Image, mut out: impl Write) -> Result<()> {
    write!(out, "Pf\n{} {}\n-1.0\n", image.width, image.height)?;
    let mut buf = Vec::with_capacity(image.data.len() * 4);
    for y in (0..image.height).rev() {
        for x in 0..image.width {
            buf.extend_from_slice(&(image.get(x, y) as f32).to_le_bytes());
        }
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn write_pfm_file(image: &Image, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    write_pfm(image, &mut w)?;
    w.flush()?;
    Ok(())
}

fn header_token(r: &mut impl BufRead) -> Result<String> {
    let mut tok = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        if r.read(&mut byte)? == 0 {
            break;
        }
        if byte[0].is_ascii_whitespace() {
            if tok.is_empty() {
                continue;
            }
            break;
        }
        tok.push(byte[0]);
        if tok.len() > 64 {
            return Err(Error::Format("PFM header token too long".into()));
        }
    }
    if tok.is_empty() {
        return Err(Error::Format("truncated PFM header".into()));
    }
    String::from_utf8(tok).map_err(|_| Error::Format("PFM header is not ASCII".into()))
}

pub fn read_pfm(input: impl Read) -> Result<Image> {
    let mut r = BufReader::new(input);
    match header_token(&mut r)?.as_str() {
        "Pf" => {}
        "PF" => return Err(Error::Format("colour PFM is not supported; expected greyscale `Pf`".into())),
        other => return Err(Error::Format(format!("not a PFM file (magic {other:?})"))),
    }
    let parse_dim = |s: String| {
        s.parse::<usize>()
            .map_err(|_| Error::Format(format!("bad PFM dimension {s:?}")))
    };
    let width = parse_dim(header_token(&mut r)?)?;
    let height = parse_dim(header_token(&mut r)?)?;
    let scale: f32 = header_token(&mut r)?
        .parse()
        .map_err(|_| Error::Format("bad PFM scale".into()))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::Format("PFM scale must be finite and nonzero".into()));
    }
    let n = width
        .checked_mul(height)
        .ok_or_else(|| Error::Format("PFM dimensions overflow".into()))?;
    let mut raw = vec![0u8; n * 4];
    r.read_exact(&mut raw)
        .map_err(|_| Error::Format(format!("PFM pixel data shorter than {width}x{height}")))?;
    let mut data = vec![0.0; n];
    for (i, chunk) in raw.chunks_exact(4).enumerate() {
        let bytes = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if scale < 0.0 {
            f32::from_le_bytes(bytes)
        } else {
            f32::from_be_bytes(bytes)
        };
        let (row, x) = (i / width, i % width);
        data[(height - 1 - row) * width + x] = v as f64;
    }
    Image::new(width, height, data).map_err(|e| Error::Format(e.to_string()))
}

pub fn read_pfm_file(path: impl AsRef<Path>) -> Result<Image> {
    read_pfm(std::fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_orientation() {
        let img = Image::new(3, 2, vec![1.0, 2.0, 3.0, 4.5, 5.0, 6.25]).unwrap();
        let mut buf = Vec::new();
        write_pfm(&img, &mut buf).unwrap();
        assert!(buf.starts_with(b"Pf\n3 2\n-1.0\n"));
        // bottom row first
        assert_eq!(&buf[12..16], &4.5f32.to_le_bytes());
        assert_eq!(read_pfm(&buf[..]).unwrap(), img);
    }

    #[test]
    fn big_endian_input() {
        let mut buf = b"Pf\n1 1\n1.0\n".to_vec();
        buf.extend_from_slice(&2.5f32.to_be_bytes());
        assert_eq!(read_pfm(&buf[..]).unwrap().data, vec![2.5]);
    }

    #[test]
    fn rejects_malformed() {
        assert!(read_pfm(&b"P6\n1 1\n255\n"[..]).is_err());
        assert!(read_pfm(&b"PF\n1 1\n-1.0\n"[..]).is_err());
        assert!(read_pfm(&b"Pf\n2 2\n-1.0\n\0\0\0\0"[..]).is_err());
    }
}
