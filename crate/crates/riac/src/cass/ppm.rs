//! Binary PPM (P6, maxval 255) image I/O.

use super::CassImage;
use crate::error::{Error, Result};
use crate::skeleton::PartLabel;
use std::io::{Read, Write};
use std::path::Path;

pub fn write_ppm(path: &Path, image: &CassImage) -> Result<()> {
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let header = format!("P6\n{} {}\n255\n", image.width, image.height);
    file.write_all(header.as_bytes())
        .and_then(|_| file.write_all(&image.pixels))
        .map_err(|e| Error::io(path, e))
}

pub fn read_ppm(path: &Path, part: PartLabel, sequence_id: &str) -> Result<CassImage> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let mut pos = 0usize;
    let mut field = |bytes: &[u8]| -> Result<String> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::parse(path, 1, "truncated PPM header"));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    if field(&bytes)? != "P6" {
        return Err(Error::parse(path, 1, "not a binary PPM (P6) file"));
    }
    let width: usize =
        field(&bytes)?.parse().map_err(|_| Error::parse(path, 1, "malformed width"))?;
    let height: usize =
        field(&bytes)?.parse().map_err(|_| Error::parse(path, 1, "malformed height"))?;
    let maxval: usize =
        field(&bytes)?.parse().map_err(|_| Error::parse(path, 1, "malformed maxval"))?;
    if maxval != 255 {
        return Err(Error::parse(path, 1, format!("unsupported maxval {maxval}")));
    }
    pos += 1; // single whitespace byte after maxval
    let need = width * height * 3;
    if bytes.len() < pos + need {
        return Err(Error::parse(path, 1, "truncated PPM pixel data"));
    }
    Ok(CassImage {
        width,
        height,
        pixels: bytes[pos..pos + need].to_vec(),
        part,
        sequence_id: sequence_id.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_round_trips_byte_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.ppm");
        let mut img = CassImage::new(5, PartLabel::Rh, "seq-1");
        for (i, b) in img.pixels.iter_mut().enumerate() {
            *b = (i * 7 % 256) as u8;
        }
        write_ppm(&path, &img).unwrap();
        let back = read_ppm(&path, PartLabel::Rh, "seq-1").unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn non_p6_and_truncated_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let ascii = dir.path().join("ascii.ppm");
        std::fs::write(&ascii, "P3\n1 1\n255\n0 0 0\n").unwrap();
        assert!(read_ppm(&ascii, PartLabel::Hs, "x").is_err());

        let short = dir.path().join("short.ppm");
        std::fs::write(&short, b"P6\n2 2\n255\n\x00\x01").unwrap();
        assert!(read_ppm(&short, PartLabel::Hs, "x").is_err());
    }
}
