//! PGM (P2/P5) and PPM (P3/P6) with maxval 255.

use std::fs;
use std::path::Path;

use super::{Image, ImageError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PnmEncoding {
    /// ASCII samples (P2/P3).
    Plain,
    /// Raw bytes (P5/P6).
    Binary,
}

struct Header {
    plain: bool,
    channels: usize,
    width: usize,
    height: usize,
    data_start: usize,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(ImageError::CorruptHeader(format!("missing {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| ImageError::CorruptHeader(format!("bad {what}")))
    }
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    if bytes.len() < 2 || bytes[0] != b'P' {
        return Err(ImageError::UnsupportedFormat("missing netpbm magic".into()));
    }
    let (plain, channels) = match bytes[1] {
        b'2' => (true, 1),
        b'3' => (true, 3),
        b'5' => (false, 1),
        b'6' => (false, 3),
        other => {
            return Err(ImageError::UnsupportedFormat(format!(
                "netpbm variant P{}",
                other as char
            )))
        }
    };
    let mut cur = Cursor { bytes, pos: 2 };
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(ImageError::CorruptHeader("zero dimension".into()));
    }
    if maxval != 255 {
        return Err(ImageError::UnsupportedFormat(format!("maxval {maxval}")));
    }
    if !plain {
        // exactly one whitespace byte separates the header from raster data
        match bytes.get(cur.pos) {
            Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
            _ => return Err(ImageError::CorruptHeader("no separator before raster".into())),
        }
    }
    Ok(Header {
        plain,
        channels,
        width,
        height,
        data_start: cur.pos,
    })
}

pub fn decode_pnm(bytes: &[u8]) -> Result<Image> {
    let h = parse_header(bytes)?;
    let expected = h.width * h.height * h.channels;
    let pixels = if h.plain {
        let mut cur = Cursor {
            bytes,
            pos: h.data_start,
        };
        let mut out = Vec::with_capacity(expected);
        while out.len() < expected {
            cur.skip_space_and_comments();
            if cur.pos >= bytes.len() {
                return Err(ImageError::TruncatedData {
                    expected,
                    found: out.len(),
                });
            }
            let v = cur.number("sample")?;
            if v > 255 {
                return Err(ImageError::CorruptHeader(format!("sample {v} exceeds maxval")));
            }
            out.push(v as u8);
        }
        out
    } else {
        let raster = &bytes[h.data_start..];
        if raster.len() < expected {
            return Err(ImageError::TruncatedData {
                expected,
                found: raster.len(),
            });
        }
        raster[..expected].to_vec()
    };
    Image::new(h.height, h.width, h.channels, pixels)
}

pub fn encode_pnm(image: &Image, encoding: PnmEncoding) -> Vec<u8> {
    let magic = match (encoding, image.channels) {
        (PnmEncoding::Plain, 1) => "P2",
        (PnmEncoding::Plain, _) => "P3",
        (PnmEncoding::Binary, 1) => "P5",
        (PnmEncoding::Binary, _) => "P6",
    };
    let mut out = format!("{magic}\n{} {}\n255\n", image.width, image.height).into_bytes();
    match encoding {
        PnmEncoding::Binary => out.extend_from_slice(&image.pixels),
        PnmEncoding::Plain => {
            let row_len = image.width * image.channels;
            for row in image.pixels.chunks(row_len) {
                let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                out.extend_from_slice(line.join(" ").as_bytes());
                out.push(b'\n');
            }
        }
    }
    out
}

pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| ImageError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode_pnm(&bytes)
}

/// Writes binary PGM/PPM.
pub fn save_image(path: impl AsRef<Path>, image: &Image) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pnm(image, PnmEncoding::Binary)).map_err(|source| ImageError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_pixel_pgm() {
        let img = decode_pnm(b"P2\n1 1\n255\n0\n").unwrap();
        assert_eq!(img, Image::new(1, 1, 1, vec![0]).unwrap());
        let img = decode_pnm(b"P5 1 1 255\n\x00").unwrap();
        assert_eq!(img.pixels, vec![0]);
    }

    #[test]
    fn comments_after_magic() {
        let src = b"P3\n# made by hand\n2 1 # width height\n# max\n255\n1 2 3  4 5 6\n";
        let img = decode_pnm(src).unwrap();
        assert_eq!((img.height, img.width, img.channels), (1, 2, 3));
        assert_eq!(img.pixels, vec![1, 2, 3, 4, 5, 6]);
    }

    #[test]
    fn binary_data_may_contain_hash_bytes() {
        let mut src = b"P5\n3 1\n255\n".to_vec();
        src.extend_from_slice(&[b'#', b'\n', 7]);
        assert_eq!(decode_pnm(&src).unwrap().pixels, vec![b'#', b'\n', 7]);
    }

    #[test]
    fn truncated_ppm() {
        let err = decode_pnm(b"P6\n4 4\n255\n\x01\x02\x03").unwrap_err();
        assert!(matches!(err, ImageError::TruncatedData { expected: 48, found: 3 }));
        let err = decode_pnm(b"P2\n2 2\n255\n1 2 3").unwrap_err();
        assert!(matches!(err, ImageError::TruncatedData { expected: 4, found: 3 }));
    }

    #[test]
    fn header_errors() {
        assert!(matches!(decode_pnm(b"P4\n1 1\n"), Err(ImageError::UnsupportedFormat(_))));
        assert!(matches!(decode_pnm(b"GIF89a"), Err(ImageError::UnsupportedFormat(_))));
        assert!(matches!(decode_pnm(b"P5\n1 1\n65535\n\0\0"), Err(ImageError::UnsupportedFormat(_))));
        assert!(matches!(decode_pnm(b"P5\nx 1\n255\n"), Err(ImageError::CorruptHeader(_))));
        assert!(matches!(decode_pnm(b"P5\n0 1\n255\n"), Err(ImageError::CorruptHeader(_))));
    }

    #[test]
    fn plain_and_binary_encodings_agree() {
        let img = Image::new(2, 2, 3, (0..12).map(|v| v * 20).collect()).unwrap();
        for enc in [PnmEncoding::Plain, PnmEncoding::Binary] {
            assert_eq!(decode_pnm(&encode_pnm(&img, enc)).unwrap(), img);
        }
    }

    #[test]
    fn missing_file_mentions_path() {
        let err = load_image("/nonexistent/dir/x.pgm").unwrap_err();
        assert!(err.to_string().contains("/nonexistent/dir/x.pgm"));
    }
}
