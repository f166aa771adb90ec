//! Binary P6 PPM reader/writer, maxval 255 only. Chosen so image I/O is
//! bit-exact with zero codec dependencies; other formats are converted
//! externally.

use thiserror::Error;

use super::Raster;

#[derive(Debug, Error, PartialEq)]
pub enum PpmError {
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("truncated PPM payload: expected {expected} bytes, got {got}")]
    Truncated { expected: usize, got: usize },
    #[error("malformed PPM header")]
    BadHeader,
}

pub fn write_ppm(img: &Raster) -> Vec<u8> {
    let header = format!("P6\n{} {}\n255\n", img.width(), img.height());
    let mut out = Vec::with_capacity(header.len() + img.data().len());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(img.data());
    out
}

pub fn read_ppm(bytes: &[u8]) -> Result<Raster, PpmError> {
    if bytes.len() < 2 || &bytes[0..2] != b"P6" {
        let magic = String::from_utf8_lossy(&bytes[..bytes.len().min(2)]).into_owned();
        return Err(PpmError::UnsupportedFormat(format!("magic {magic:?}, want P6")));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for f in fields.iter_mut() {
        *f = read_header_int(bytes, &mut pos)?;
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(PpmError::UnsupportedFormat(format!("maxval {maxval}, want 255")));
    }
    // exactly one whitespace byte separates the header from the payload
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(PpmError::BadHeader);
    }
    pos += 1;
    let expected = width * height * 3;
    let got = bytes.len() - pos;
    if got < expected {
        return Err(PpmError::Truncated { expected, got });
    }
    Ok(Raster::new(width, height, bytes[pos..pos + expected].to_vec()))
}

/// Skip whitespace and `#` comments, then read a decimal integer.
fn read_header_int(bytes: &[u8], pos: &mut usize) -> Result<usize, PpmError> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
        } else {
            break;
        }
    }
    let start = *pos;
    while *pos < bytes.len() && bytes[*pos].is_ascii_digit() {
        *pos += 1;
    }
    if *pos == start {
        return Err(PpmError::BadHeader);
    }
    std::str::from_utf8(&bytes[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or(PpmError::BadHeader)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    #[test]
    fn two_pixel_layout() {
        let img = Raster::new(2, 1, vec![255, 0, 0, 0, 0, 255]);
        let bytes = write_ppm(&img);
        assert_eq!(&bytes[..9], b"P6\n2 1\n255\n"[..9].as_ref());
        assert_eq!(&bytes[bytes.len() - 6..], &[255, 0, 0, 0, 0, 255]);
        assert_eq!(read_ppm(&bytes).unwrap(), img);
    }

    #[test]
    fn random_round_trip_bit_exact() {
        let mut rng = RngStream::new(3);
        let data: Vec<u8> = (0..13 * 7 * 3).map(|_| rng.below(256) as u8).collect();
        let img = Raster::new(13, 7, data);
        assert_eq!(read_ppm(&write_ppm(&img)).unwrap(), img);
    }

    #[test]
    fn ascii_p3_rejected() {
        let err = read_ppm(b"P3\n1 1\n255\n1 2 3\n").unwrap_err();
        assert!(matches!(err, PpmError::UnsupportedFormat(_)));
    }

    #[test]
    fn wrong_maxval_rejected() {
        let err = read_ppm(b"P6\n1 1\n65535\n\0\0\0\0\0\0").unwrap_err();
        assert!(matches!(err, PpmError::UnsupportedFormat(_)));
    }

    #[test]
    fn truncated_payload() {
        let err = read_ppm(b"P6\n2 2\n255\nabc").unwrap_err();
        assert_eq!(err, PpmError::Truncated { expected: 12, got: 3 });
    }

    #[test]
    fn header_comments_accepted() {
        let img = read_ppm(b"P6\n# a comment\n1 1\n255\nxyz").unwrap();
        assert_eq!(img.get(0, 0), [b'x', b'y', b'z']);
    }
}
