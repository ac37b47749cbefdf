//! File formats: binary PGM (P5), IDX archives, score CSV, key = value text.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Writes via a sibling temp file and a rename so readers never observe a
/// partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Cursor over a byte slice that reports offsets on failure.
pub struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        ByteReader { bytes, pos: 0 }
    }

    pub fn offset(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::parse(
                self.pos,
                format!("truncated: need {n} bytes, {} left", self.remaining()),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u32_le(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u32_be(&mut self) -> Result<u32> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64_le(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64_le(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// 8-bit grayscale raster.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.pixels);
    out
}

pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(Error::parse(0, "not a binary PGM (missing P5 magic)"));
    }
    let mut pos = 2;
    let mut header = [0usize; 3];
    for field in header.iter_mut() {
        // whitespace and comments
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
        if start == pos {
            return Err(Error::parse(pos, "expected a header integer"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .unwrap()
            .parse()
            .map_err(|_| Error::parse(start, "header integer out of range"))?;
    }
    let [width, height, maxval] = header;
    if maxval == 0 || maxval > 255 {
        return Err(Error::parse(pos, format!("unsupported maxval {maxval}")));
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::parse(pos, "expected whitespace after maxval"));
    }
    pos += 1;
    let n = width * height;
    if bytes.len() - pos < n {
        return Err(Error::parse(
            bytes.len(),
            format!("truncated raster: need {n} bytes, {} left", bytes.len() - pos),
        ));
    }
    Ok(GrayImage {
        width,
        height,
        pixels: bytes[pos..pos + n].to_vec(),
    })
}

pub fn write_pgm(path: &Path, img: &GrayImage) -> Result<()> {
    write_atomic(path, &encode_pgm(img))
}

pub fn read_pgm(path: &Path) -> Result<GrayImage> {
    decode_pgm(&read_file(path)?)
}

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// `n` unsigned-byte images of `rows × cols`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxImages {
    pub rows: usize,
    pub cols: usize,
    pub images: Vec<Vec<u8>>,
}

pub fn encode_idx_images(set: &IdxImages) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
    for d in [set.images.len(), set.rows, set.cols] {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    set.images.iter().for_each(|img| out.extend_from_slice(img));
    out
}

pub fn decode_idx_images(bytes: &[u8]) -> Result<IdxImages> {
    let mut r = ByteReader::new(bytes);
    let magic = r.u32_be()?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::parse(0, format!("bad IDX image magic {magic:#010x}")));
    }
    let n = r.u32_be()? as usize;
    let rows = r.u32_be()? as usize;
    let cols = r.u32_be()? as usize;
    let need = n * rows * cols;
    if r.remaining() != need {
        return Err(Error::parse(
            r.offset(),
            format!("IDX body holds {} bytes, header declares {need}", r.remaining()),
        ));
    }
    let images = (0..n)
        .map(|_| r.take(rows * cols).map(<[u8]>::to_vec))
        .collect::<Result<_>>()?;
    Ok(IdxImages { rows, cols, images })
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

pub fn decode_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let mut r = ByteReader::new(bytes);
    let magic = r.u32_be()?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::parse(0, format!("bad IDX label magic {magic:#010x}")));
    }
    let n = r.u32_be()? as usize;
    if r.remaining() != n {
        return Err(Error::parse(
            r.offset(),
            format!("IDX body holds {} labels, header declares {n}", r.remaining()),
        ));
    }
    Ok(r.take(n)?.to_vec())
}

/// One line of a score file.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreRow {
    pub image_id: String,
    pub label: u8,
    pub score: f64,
}

pub const SCORE_HEADER: &str = "image_id,label,score";

pub fn format_scores(rows: &[ScoreRow]) -> String {
    let mut s = String::from(SCORE_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(s, "{},{},{}", r.image_id, r.label, r.score);
    }
    s
}

pub fn parse_scores(text: &str) -> Result<Vec<ScoreRow>> {
    let mut rows = Vec::new();
    let mut offset = 0;
    for (i, line) in text.split_inclusive('\n').enumerate() {
        let at = offset;
        offset += line.len();
        let line = line.trim_end();
        if line.is_empty() || (i == 0 && line == SCORE_HEADER) {
            continue;
        }
        let fields: Vec<_> = line.split(',').collect();
        let [id, label, score] = fields[..] else {
            return Err(Error::parse(at, format!("expected 3 fields, got {}", fields.len())));
        };
        let label = match label {
            "0" => 0,
            "1" => 1,
            _ => return Err(Error::parse(at, format!("label must be 0 or 1, got `{label}`"))),
        };
        let score = score
            .parse()
            .map_err(|_| Error::parse(at, format!("bad score `{score}`")))?;
        rows.push(ScoreRow {
            image_id: id.to_string(),
            label,
            score,
        });
    }
    Ok(rows)
}

/// Parses `key = value` lines. `#` starts a comment; duplicate keys are errors.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let at = offset;
        offset += line.len();
        let content = line.split('#').next().unwrap().trim();
        if content.is_empty() {
            continue;
        }
        let Some((k, v)) = content.split_once('=') else {
            return Err(Error::parse(at, format!("expected `key = value`, got `{content}`")));
        };
        let key = k.trim().to_string();
        if key.is_empty() {
            return Err(Error::parse(at, "empty key"));
        }
        if map.insert(key.clone(), v.trim().to_string()).is_some() {
            return Err(Error::parse(at, format!("duplicate key `{key}`")));
        }
    }
    Ok(map)
}

pub fn format_key_values<'a>(pairs: impl IntoIterator<Item = (&'a str, String)>) -> String {
    pairs
        .into_iter()
        .map(|(k, v)| format!("{k} = {v}\n"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_round_trip() {
        let img = GrayImage {
            width: 3,
            height: 2,
            pixels: vec![0, 10, 255, 128, 7, 99],
        };
        assert_eq!(decode_pgm(&encode_pgm(&img)).unwrap(), img);
    }

    #[test]
    fn pgm_with_comment_header() {
        let mut bytes = b"P5 # comment\n2 # w\n1\n255\n".to_vec();
        bytes.extend([1, 2]);
        let img = decode_pgm(&bytes).unwrap();
        assert_eq!((img.width, img.height, img.pixels), (2, 1, vec![1, 2]));
    }

    #[test]
    fn pgm_truncated_and_bad_magic() {
        let img = GrayImage {
            width: 4,
            height: 4,
            pixels: vec![9; 16],
        };
        let bytes = encode_pgm(&img);
        assert!(decode_pgm(&bytes[..bytes.len() - 1]).is_err());
        assert!(matches!(decode_pgm(b"P2\n1 1\n255\n0"), Err(Error::Parse { offset: 0, .. })));
    }

    #[test]
    fn idx_header_parsed() {
        let mut bytes = vec![0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 3, 0, 0, 0, 2];
        bytes.extend(0u8..12);
        let set = decode_idx_images(&bytes).unwrap();
        assert_eq!((set.rows, set.cols, set.images.len()), (3, 2, 2));
        assert_eq!(set.images[1], (6u8..12).collect::<Vec<_>>());
        assert_eq!(encode_idx_images(&set), bytes);
    }

    #[test]
    fn idx_truncated_is_error_with_offset() {
        let mut bytes = vec![0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 3, 0, 0, 0, 2];
        bytes.extend(0u8..11);
        assert!(matches!(decode_idx_images(&bytes), Err(Error::Parse { offset: 16, .. })));
        assert!(matches!(decode_idx_images(&bytes[..10]), Err(Error::Parse { .. })));
        let labels = vec![0, 0, 8, 1, 0, 0, 0, 3, 1, 0];
        assert!(decode_idx_labels(&labels).is_err());
        assert!(matches!(decode_idx_images(&labels), Err(Error::Parse { offset: 0, .. })));
    }

    #[test]
    fn idx_labels_round_trip() {
        let labels = vec![0, 1, 1, 0];
        assert_eq!(decode_idx_labels(&encode_idx_labels(&labels)).unwrap(), labels);
    }

    #[test]
    fn scores_round_trip_and_reject_garbage() {
        let rows = vec![
            ScoreRow { image_id: "test_0".into(), label: 0, score: 0.125 },
            ScoreRow { image_id: "test_1".into(), label: 1, score: 1.0e-7 / 3.0 },
        ];
        assert_eq!(parse_scores(&format_scores(&rows)).unwrap(), rows);
        assert!(parse_scores("a,2,0.1\n").is_err());
        assert!(parse_scores("a,1\n").is_err());
    }

    #[test]
    fn key_values() {
        let m = parse_key_values("# header\na = 1\n b=two # trailing\n\n").unwrap();
        assert_eq!(m["a"], "1");
        assert_eq!(m["b"], "two");
        assert!(parse_key_values("a = 1\na = 2\n").is_err());
        assert!(parse_key_values("novalue\n").is_err());
        let text = format_key_values([("x", "1".to_string())]);
        assert_eq!(text, "x = 1\n");
    }

    #[test]
    fn atomic_write_leaves_no_temp() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub/file.bin");
        write_atomic(&p, b"abc").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"abc");
        assert!(!dir.path().join("sub/file.bin.tmp").exists());
    }
}
