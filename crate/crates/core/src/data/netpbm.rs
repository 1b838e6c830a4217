//! PGM / PPM reading (P2, P3, P5, P6) into 8-bit grayscale.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Row-major 8-bit grayscale image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::Input(format!(
                "{width}x{height} image needs {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        Ok(GrayImage {
            width,
            height,
            pixels,
        })
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * self.width + col]
    }
}

/// ITU-R BT.601 luma, rounded to nearest.
#[inline]
pub fn luma(r: u16, g: u16, b: u16) -> u8 {
    (0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64)
        .round()
        .clamp(0.0, 255.0) as u8
}

pub fn load_image(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_netpbm(&bytes)
}

fn perr(offset: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        what: "netpbm",
        offset,
        msg: msg.into(),
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    /// Skips whitespace and `#` comments.
    fn skip_space(&mut self) {
        while self.pos < self.buf.len() {
            match self.buf[self.pos] {
                b' ' | b'\t' | b'\n' | b'\r' | 0x0b | 0x0c => self.pos += 1,
                b'#' => {
                    while self.pos < self.buf.len() && self.buf[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u32> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.buf.len() && self.buf[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(if self.pos >= self.buf.len() {
                perr(self.pos, format!("unexpected end of file reading {what}"))
            } else {
                perr(
                    self.pos,
                    format!("expected {what}, found byte 0x{:02x}", self.buf[self.pos]),
                )
            });
        }
        std::str::from_utf8(&self.buf[start..self.pos])
            .expect("ascii digits")
            .parse::<u32>()
            .map_err(|_| perr(start, format!("{what} out of range")))
    }
}

/// Parses a PGM or PPM file. Color images are reduced to luma; samples
/// with a maxval other than 255 are rescaled to 0..=255.
pub fn parse_netpbm(bytes: &[u8]) -> Result<GrayImage> {
    if bytes.len() < 2 || bytes[0] != b'P' {
        return Err(perr(0, "missing netpbm magic number"));
    }
    let (binary, channels) = match bytes[1] {
        b'2' => (false, 1),
        b'3' => (false, 3),
        b'5' => (true, 1),
        b'6' => (true, 3),
        other => {
            return Err(perr(
                1,
                format!("unsupported netpbm variant P{}", other as char),
            ))
        }
    };
    let mut cur = Cursor { buf: bytes, pos: 2 };
    let width = cur.number("width")? as usize;
    let height = cur.number("height")? as usize;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(perr(cur.pos, "image has zero size"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(perr(cur.pos, format!("maxval {maxval} outside 1..=65535")));
    }
    let n = width * height * channels;
    let mut samples = Vec::with_capacity(n);
    if binary {
        // exactly one whitespace byte separates the header from the raster
        match bytes.get(cur.pos) {
            Some(c) if c.is_ascii_whitespace() => cur.pos += 1,
            _ => return Err(perr(cur.pos, "expected whitespace before raster")),
        }
        let wide = maxval > 255;
        let need = n * if wide { 2 } else { 1 };
        let raster = &bytes[cur.pos..];
        if raster.len() < need {
            return Err(perr(
                bytes.len(),
                format!(
                    "truncated raster: expected {need} bytes, got {}",
                    raster.len()
                ),
            ));
        }
        if wide {
            samples.extend(
                raster[..need]
                    .chunks_exact(2)
                    .map(|c| u16::from_be_bytes([c[0], c[1]])),
            );
        } else {
            samples.extend(raster[..need].iter().map(|&b| b as u16));
        }
        if let Some(k) = samples.iter().position(|&s| s as u32 > maxval) {
            let off = cur.pos + if wide { 2 * k } else { k };
            return Err(perr(off, format!("sample exceeds maxval {maxval}")));
        }
    } else {
        for _ in 0..n {
            let start = cur.pos;
            let v = cur.number("sample")?;
            if v > maxval {
                return Err(perr(start, format!("sample {v} exceeds maxval {maxval}")));
            }
            samples.push(v as u16);
        }
    }

    let scale = |s: u16| -> u16 {
        if maxval == 255 {
            s
        } else {
            ((s as f64) * 255.0 / maxval as f64).round() as u16
        }
    };
    let pixels = if channels == 1 {
        samples.iter().map(|&s| scale(s) as u8).collect()
    } else {
        samples
            .chunks_exact(3)
            .map(|c| luma(scale(c[0]), scale(c[1]), scale(c[2])))
            .collect()
    };
    GrayImage::new(width, height, pixels)
}

/// Encodes an image as binary (P5) or plain (P2) PGM.
pub fn encode_pgm(img: &GrayImage, binary: bool) -> Vec<u8> {
    let mut out = Vec::with_capacity(img.pixels.len() * if binary { 1 } else { 4 } + 32);
    let magic = if binary { "P5" } else { "P2" };
    write!(out, "{magic}\n{} {}\n255\n", img.width, img.height).expect("vec write");
    if binary {
        out.extend_from_slice(&img.pixels);
    } else {
        for row in img.pixels.chunks(img.width) {
            let line: Vec<String> = row.iter().map(|p| p.to_string()).collect();
            writeln!(out, "{}", line.join(" ")).expect("vec write");
        }
    }
    out
}

pub fn save_pgm(path: impl AsRef<Path>, img: &GrayImage) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_pgm(img, true)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiny_binary_pgm() {
        let mut f = b"P5\n2 2\n255\n".to_vec();
        f.extend_from_slice(&[0, 255, 128, 64]);
        let img = parse_netpbm(&f).unwrap();
        assert_eq!((img.width, img.height), (2, 2));
        assert_eq!(img.pixels, vec![0, 255, 128, 64]);
    }

    #[test]
    fn ascii_and_binary_agree() {
        let img = GrayImage::new(3, 2, vec![1, 2, 3, 250, 0, 77]).unwrap();
        let p5 = parse_netpbm(&encode_pgm(&img, true)).unwrap();
        let p2 = parse_netpbm(&encode_pgm(&img, false)).unwrap();
        assert_eq!(p5, img);
        assert_eq!(p2, img);
    }

    #[test]
    fn comments_and_color() {
        let f = b"P3 # rgb\n# a comment line\n2 1\n255\n255 255 255   10 20 30\n";
        let img = parse_netpbm(f).unwrap();
        assert_eq!(img.pixels[0], 255);
        assert_eq!(img.pixels[1], luma(10, 20, 30));
        assert_eq!(luma(10, 20, 30), 18); // 2.99 + 11.74 + 3.42 = 18.15

        let mut f = b"P6\n1 1\n255\n".to_vec();
        f.extend_from_slice(&[255, 255, 255]);
        assert_eq!(parse_netpbm(&f).unwrap().pixels, vec![255]);
    }

    #[test]
    fn sixteen_bit_samples_are_rescaled() {
        let mut f = b"P5\n2 1\n65535\n".to_vec();
        f.extend_from_slice(&[0xff, 0xff, 0x80, 0x00]);
        let img = parse_netpbm(&f).unwrap();
        assert_eq!(img.pixels, vec![255, 128]);
        let f = b"P2\n2 1\n15\n15 0\n";
        assert_eq!(parse_netpbm(f).unwrap().pixels, vec![255, 0]);
    }

    #[test]
    fn errors_carry_offsets() {
        let mut f = b"P5\n2 2\n255\n".to_vec();
        f.extend_from_slice(&[1, 2, 3]);
        match parse_netpbm(&f) {
            Err(Error::Parse { offset, msg, .. }) => {
                assert_eq!(offset, f.len());
                assert!(msg.contains("expected 4 bytes, got 3"), "{msg}");
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_netpbm(b"P7\n"),
            Err(Error::Parse { offset: 1, .. })
        ));
        assert!(matches!(
            parse_netpbm(b"P2\n2 x\n"),
            Err(Error::Parse { offset: 5, .. })
        ));
        assert!(parse_netpbm(b"P2 1 1 10 11").is_err());
        assert!(parse_netpbm(b"GIF89a").is_err());
        assert!(parse_netpbm(b"P2 1 2 255 7").is_err());
    }
}
