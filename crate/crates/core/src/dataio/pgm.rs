//! Binary (P5) PGM annotator masks: 0 is background, 255 foreground.

use std::path::Path;

use crate::error::{Error, Result};
use crate::mask::BinaryMask;

use super::atomic_write;

pub fn encode_pgm(mask: &BinaryMask) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", mask.width(), mask.height()).into_bytes();
    out.extend(mask.values().iter().map(|&v| v * 255));
    out
}

pub fn decode_pgm(bytes: &[u8], path: &Path) -> Result<BinaryMask> {
    let mut pos = 0usize;
    let err = |reason: String| Error::format(path, reason);

    if bytes.get(..2) != Some(b"P5") {
        return Err(err("not a binary PGM: expected magic \"P5\"".into()));
    }
    pos += 2;

    let mut header = [0usize; 3];
    for (slot, name) in header.iter_mut().zip(["width", "height", "maxval"]) {
        // whitespace and '#' comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        let text = std::str::from_utf8(&bytes[start..pos]).expect("ascii digits");
        *slot = text.parse().map_err(|_| err(format!("missing or invalid {name} at byte {start}")))?;
    }
    let [width, height, maxval] = header;
    if maxval != 255 {
        return Err(err(format!("maxval {maxval} unsupported, expected 255")));
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(err(format!("expected whitespace after header at byte {pos}")));
    }
    pos += 1;

    let n = width
        .checked_mul(height)
        .filter(|&n| n > 0)
        .ok_or_else(|| err(format!("invalid dimensions {width}x{height}")))?;
    let payload = &bytes[pos..];
    if payload.len() != n {
        return Err(err(format!("expected {n} pixel bytes after byte {pos}, got {}", payload.len())));
    }
    let mut values = Vec::with_capacity(n);
    for (i, &b) in payload.iter().enumerate() {
        match b {
            0 => values.push(0),
            255 => values.push(1),
            g => return Err(err(format!("non-binary gray value {g} at byte {}", pos + i))),
        }
    }
    BinaryMask::new(width, height, values)
}

pub fn read_pgm(path: &Path) -> Result<BinaryMask> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes, path)
}

pub fn write_pgm(path: &Path, mask: &BinaryMask) -> Result<()> {
    atomic_write(path, &encode_pgm(mask))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn all_white_is_all_ones() {
        let mut bytes = b"P5\n3 2\n255\n".to_vec();
        bytes.extend([255u8; 6]);
        let m = decode_pgm(&bytes, Path::new("w.pgm")).unwrap();
        assert_eq!(m, BinaryMask::ones(3, 2).unwrap());
    }

    #[test]
    fn gray_rejected() {
        let mut bytes = b"P5 2 1 255\n".to_vec();
        bytes.extend([0u8, 128]);
        let msg = decode_pgm(&bytes, Path::new("g.pgm")).unwrap_err().to_string();
        assert!(msg.contains("128"), "{msg}");
    }

    #[test]
    fn header_comments_accepted() {
        let mut bytes = b"P5\n# made by hand\n2 1\n# depth\n255\n".to_vec();
        bytes.extend([255u8, 0]);
        assert_eq!(decode_pgm(&bytes, Path::new("c")).unwrap().values(), &[1, 0]);
    }

    #[test]
    fn malformed_rejected() {
        let p = Path::new("bad");
        assert!(decode_pgm(b"P2\n1 1\n255\n0", p).is_err());
        assert!(decode_pgm(b"P5\n1 1\n15\n\x00", p).is_err());
        assert!(decode_pgm(b"P5\n2 2\n255\n\x00\x00", p).is_err());
        assert!(decode_pgm(b"P5\n0 2\n255\n", p).is_err());
        assert!(decode_pgm(b"P5\n", p).is_err());
    }

    proptest! {
        #[test]
        fn roundtrip(w in 1usize..12, h in 1usize..12, seed in any::<u64>()) {
            let values: Vec<u8> = (0..w * h).map(|i| ((seed >> (i % 64)) & 1) as u8).collect();
            let m = BinaryMask::new(w, h, values).unwrap();
            prop_assert_eq!(decode_pgm(&encode_pgm(&m), Path::new("r")).unwrap(), m);
        }
    }
}
