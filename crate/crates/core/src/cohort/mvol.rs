//! MVOL / MMASK volume files.
//!
//! Both formats are a short ASCII header followed by a raw payload:
//!
//! ```text
//! MVOL 1
//! dims <nx> <ny> <nz>
//! spacing <sx> <sy> <sz>
//! origin <ox> <oy> <oz>
//! data float32 le
//! <nx*ny*nz little-endian f32, x-fastest>
//! ```
//!
//! An MMASK file uses the magic `MMASK 1`, inserts one `lesion <id> <site>`
//! line per label after `origin`, ends the header with `data uint8` and
//! stores one byte per voxel: 0 for background or k for the k-th lesion line.

use std::fs;
use std::path::Path;

use super::grid::Grid;
use super::volume::{Lesion, LesionSet, Site, VoxelVolume};
use super::CohortError;

const VOLUME_MAGIC: &str = "MVOL 1";
const MASK_MAGIC: &str = "MMASK 1";
const VOLUME_DATA: &str = "data float32 le";
const MASK_DATA: &str = "data uint8";

struct HeaderReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    line_no: usize,
}

impl<'a> HeaderReader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        HeaderReader {
            bytes,
            pos: 0,
            line_no: 0,
        }
    }

    fn next_line(&mut self) -> Result<(usize, &'a str), CohortError> {
        self.line_no += 1;
        let rest = &self.bytes[self.pos..];
        let end = rest.iter().position(|&b| b == b'\n').ok_or(CohortError::Format {
            line: self.line_no,
            message: "unterminated header line".into(),
        })?;
        let line = std::str::from_utf8(&rest[..end]).map_err(|_| CohortError::Format {
            line: self.line_no,
            message: "header is not valid UTF-8".into(),
        })?;
        self.pos += end + 1;
        Ok((self.line_no, line))
    }

    fn payload(&self) -> &'a [u8] {
        &self.bytes[self.pos..]
    }
}

fn format_err(line: usize, text: &str, what: &str) -> CohortError {
    CohortError::Format {
        line,
        message: format!("{what}: '{text}'"),
    }
}

fn parse_triple<T: std::str::FromStr>(
    (line, text): (usize, &str),
    key: &str,
) -> Result<[T; 3], CohortError> {
    let mut parts = text.split(' ');
    if parts.next() != Some(key) {
        return Err(format_err(line, text, &format!("expected '{key}' line")));
    }
    let vals: Vec<T> = parts
        .map(|p| p.parse::<T>())
        .collect::<Result<_, _>>()
        .map_err(|_| format_err(line, text, &format!("malformed '{key}' values")))?;
    if vals.len() != 3 {
        return Err(format_err(line, text, &format!("'{key}' needs three values")));
    }
    let mut it = vals.into_iter();
    Ok([it.next().unwrap(), it.next().unwrap(), it.next().unwrap()])
}

fn read_geometry(r: &mut HeaderReader<'_>, magic: &str) -> Result<Grid, CohortError> {
    let (line, text) = r.next_line()?;
    if text != magic {
        return Err(format_err(line, text, &format!("expected magic '{magic}'")));
    }
    let dims_line = r.next_line()?;
    let dims: [usize; 3] = parse_triple(dims_line, "dims")?;
    let spacing_line = r.next_line()?;
    let spacing: [f64; 3] = parse_triple(spacing_line, "spacing")?;
    let origin: [f64; 3] = parse_triple(r.next_line()?, "origin")?;
    let grid = Grid::new(dims, spacing, origin);
    if let Err(msg) = grid.validate() {
        let line = if msg.contains("spacing") { spacing_line.0 } else { dims_line.0 };
        return Err(CohortError::Format { line, message: msg });
    }
    Ok(grid)
}

fn write_geometry(out: &mut Vec<u8>, magic: &str, grid: &Grid) {
    let [nx, ny, nz] = grid.dims;
    let [sx, sy, sz] = grid.spacing;
    let [ox, oy, oz] = grid.origin;
    out.extend_from_slice(
        format!("{magic}\ndims {nx} {ny} {nz}\nspacing {sx} {sy} {sz}\norigin {ox} {oy} {oz}\n")
            .as_bytes(),
    );
}

pub fn decode_volume(bytes: &[u8]) -> Result<VoxelVolume, CohortError> {
    let mut r = HeaderReader::new(bytes);
    let grid = read_geometry(&mut r, VOLUME_MAGIC)?;
    let (line, text) = r.next_line()?;
    if text != VOLUME_DATA {
        return Err(format_err(line, text, &format!("expected '{VOLUME_DATA}'")));
    }
    let payload = r.payload();
    let expected = grid.len() * 4;
    if payload.len() != expected {
        return Err(CohortError::Truncated {
            expected,
            found: payload.len(),
        });
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    VoxelVolume::new(grid, data)
}

pub fn encode_volume(volume: &VoxelVolume) -> Vec<u8> {
    let mut out = Vec::with_capacity(128 + volume.data.len() * 4);
    write_geometry(&mut out, VOLUME_MAGIC, &volume.grid);
    out.extend_from_slice(VOLUME_DATA.as_bytes());
    out.push(b'\n');
    for v in &volume.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn load_volume(path: &Path) -> Result<VoxelVolume, CohortError> {
    let bytes = fs::read(path).map_err(|e| CohortError::io(path, e))?;
    decode_volume(&bytes).map_err(|e| e.in_file(path))
}

pub fn write_volume(volume: &VoxelVolume, path: &Path) -> Result<(), CohortError> {
    fs::write(path, encode_volume(volume)).map_err(|e| CohortError::io(path, e))
}

pub fn decode_mask(bytes: &[u8]) -> Result<LesionSet, CohortError> {
    let mut r = HeaderReader::new(bytes);
    let grid = read_geometry(&mut r, MASK_MAGIC)?;
    let mut labels: Vec<(String, Site)> = Vec::new();
    loop {
        let (line, text) = r.next_line()?;
        if text == MASK_DATA {
            break;
        }
        let parts: Vec<&str> = text.split(' ').collect();
        if parts.len() != 3 || parts[0] != "lesion" {
            return Err(format_err(line, text, "expected 'lesion <id> <site>' or 'data uint8'"));
        }
        let site: Site = parts[2]
            .parse()
            .map_err(|e: String| format_err(line, text, &e))?;
        labels.push((parts[1].to_string(), site));
        if labels.len() > 255 {
            return Err(format_err(line, text, "more than 255 lesions"));
        }
    }
    let payload = r.payload();
    if payload.len() != grid.len() {
        return Err(CohortError::Truncated {
            expected: grid.len(),
            found: payload.len(),
        });
    }
    let mut lesions: Vec<Lesion> = labels
        .into_iter()
        .map(|(id, site)| Lesion {
            id,
            site,
            mask: vec![false; grid.len()],
        })
        .collect();
    for (i, &b) in payload.iter().enumerate() {
        if b == 0 {
            continue;
        }
        let k = b as usize;
        if k > lesions.len() {
            return Err(CohortError::Invalid(format!(
                "voxel {i} carries label {k} but only {} lesions are declared",
                lesions.len()
            )));
        }
        lesions[k - 1].mask[i] = true;
    }
    LesionSet::new(grid, lesions)
}

/// Encodes a lesion set. Overlapping lesions cannot be represented in the
/// single-label payload and are rejected.
pub fn encode_mask(set: &LesionSet) -> Result<Vec<u8>, CohortError> {
    if set.lesions.len() > 255 {
        return Err(CohortError::Invalid("more than 255 lesions".into()));
    }
    let mut out = Vec::with_capacity(256 + set.grid.len());
    write_geometry(&mut out, MASK_MAGIC, &set.grid);
    for l in &set.lesions {
        out.extend_from_slice(format!("lesion {} {}\n", l.id, l.site).as_bytes());
    }
    out.extend_from_slice(MASK_DATA.as_bytes());
    out.push(b'\n');
    let start = out.len();
    out.resize(start + set.grid.len(), 0);
    for (k, l) in set.lesions.iter().enumerate() {
        for (i, &m) in l.mask.iter().enumerate() {
            if m {
                if out[start + i] != 0 {
                    return Err(CohortError::Invalid(format!(
                        "voxel {i} belongs to more than one lesion; MMASK stores one label per voxel"
                    )));
                }
                out[start + i] = (k + 1) as u8;
            }
        }
    }
    Ok(out)
}

pub fn load_mask(path: &Path) -> Result<LesionSet, CohortError> {
    let bytes = fs::read(path).map_err(|e| CohortError::io(path, e))?;
    decode_mask(&bytes).map_err(|e| e.in_file(path))
}

pub fn write_mask(set: &LesionSet, path: &Path) -> Result<(), CohortError> {
    fs::write(path, encode_mask(set)?).map_err(|e| CohortError::io(path, e))
}

/// Loads a (volume, mask) pair and refuses mismatched geometry.
pub fn load_pair(volume: &Path, mask: &Path) -> Result<(VoxelVolume, LesionSet), CohortError> {
    let v = load_volume(volume)?;
    let m = load_mask(mask)?;
    m.check_pairing(&v)?;
    Ok((v, m))
}
