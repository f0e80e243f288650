//! Binary PGM (`P5`, maxval 255) frame files.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use crate::image::Image;

#[derive(Debug, thiserror::Error)]
pub enum PgmError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("not a binary PGM: {0}")]
    Format(String),
    #[error("unsupported maxval {0}, only 255 is accepted")]
    MaxVal(u32),
}

/// Parses a `P5` byte stream.
pub fn decode(bytes: &[u8]) -> Result<Image, PgmError> {
    let mut pos = 0usize;
    let magic = next_token(bytes, &mut pos).ok_or_else(|| PgmError::Format("empty".into()))?;
    if magic != b"P5" {
        return Err(PgmError::Format(format!(
            "magic {:?}",
            String::from_utf8_lossy(magic)
        )));
    }
    let mut header = [0u32; 3];
    for (slot, name) in header.iter_mut().zip(["width", "height", "maxval"]) {
        let tok = next_token(bytes, &mut pos)
            .ok_or_else(|| PgmError::Format(format!("missing {name}")))?;
        *slot = std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| PgmError::Format(format!("bad {name}")))?;
    }
    let [width, height, maxval] = header;
    if maxval != 255 {
        return Err(PgmError::MaxVal(maxval));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let (w, h) = (width as usize, height as usize);
    let raster = bytes
        .get(pos..pos + w * h)
        .ok_or_else(|| PgmError::Format("truncated raster".into()))?;
    Ok(Image::from_vec(w, h, raster.to_vec()).expect("raster sized from header"))
}

fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Option<&'a [u8]> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    (*pos > start).then(|| &bytes[start..*pos])
}

pub fn encode(img: &Image) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.as_slice());
    out
}

pub fn read(path: &Path) -> Result<Image, PgmError> {
    let bytes = fs::read(path).map_err(|source| PgmError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode(&bytes)
}

pub fn write(path: &Path, img: &Image) -> Result<(), PgmError> {
    let io_err = |source| PgmError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut f = fs::File::create(path).map_err(io_err)?;
    f.write_all(&encode(img)).map_err(io_err)
}

/// `.pgm` files of a directory in lexicographic filename order.
pub fn list_frames(dir: &Path) -> io::Result<Vec<PathBuf>> {
    let mut frames: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .is_some_and(|ext| ext.eq_ignore_ascii_case("pgm"))
        })
        .collect();
    frames.sort();
    Ok(frames)
}
