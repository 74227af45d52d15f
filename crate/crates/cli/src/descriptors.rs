//! Descriptor files.
//!
//! One block per image. A block starts with `image_id,n_descriptors,dim`
//! and is followed by `n_descriptors` rows of `dim` values, optionally with
//! four integer geometry columns `x,y,w,h` appended. Blank lines and lines
//! starting with `#` are ignored, as is a literal
//! `image_id,n_descriptors,dim` line at the top of the file.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use gmp_core::{DenseMatrix, DescriptorSet, PatchRect};

use crate::error::{CliError, Result};

pub const HEADER: &str = "image_id,n_descriptors,dim";

#[derive(Clone, Debug, PartialEq)]
pub struct ImageDescriptors {
    pub id: String,
    pub descriptors: DescriptorSet,
}

pub fn read_descriptor_file(path: &Path) -> Result<Vec<ImageDescriptors>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_descriptors(&text, path)
}

struct Block {
    id: String,
    header_line: usize,
    expected: usize,
    dim: usize,
    values: Vec<f64>,
    geometry: Vec<PatchRect>,
    with_geometry: Option<bool>,
}

pub fn parse_descriptors(text: &str, path: &Path) -> Result<Vec<ImageDescriptors>> {
    let err = |line: usize, message: String| CliError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut images = Vec::new();
    let mut seen = HashSet::new();
    let mut block: Option<Block> = None;
    let mut first_content = true;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if std::mem::take(&mut first_content) && line.replace(' ', "") == HEADER {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();

        match block.as_mut() {
            None => {
                let b = parse_block_header(&fields).map_err(|m| err(line_no, m))?;
                if !seen.insert(b.0.clone()) {
                    return Err(err(line_no, format!("duplicate image id '{}'", b.0)));
                }
                block = Some(Block {
                    id: b.0,
                    header_line: line_no,
                    expected: b.1,
                    dim: b.2,
                    values: Vec::with_capacity(b.1 * b.2),
                    geometry: Vec::new(),
                    with_geometry: None,
                });
            }
            Some(b) => {
                let has_geo = if fields.len() == b.dim {
                    false
                } else if fields.len() == b.dim + 4 {
                    true
                } else {
                    return Err(err(
                        line_no,
                        format!(
                            "image '{}': expected {} values (or {} with geometry), found {}",
                            b.id,
                            b.dim,
                            b.dim + 4,
                            fields.len()
                        ),
                    ));
                };
                if *b.with_geometry.get_or_insert(has_geo) != has_geo {
                    return Err(err(
                        line_no,
                        format!(
                            "image '{}': geometry columns present on some rows only",
                            b.id
                        ),
                    ));
                }
                for (col, f) in fields[..b.dim].iter().enumerate() {
                    let v: f64 = f.parse().map_err(|_| {
                        err(
                            line_no,
                            format!("column {}: '{f}' is not a number", col + 1),
                        )
                    })?;
                    if !v.is_finite() {
                        return Err(err(
                            line_no,
                            format!("column {}: non-finite value", col + 1),
                        ));
                    }
                    b.values.push(v);
                }
                if has_geo {
                    let mut g = [0i64; 4];
                    for (k, f) in fields[b.dim..].iter().enumerate() {
                        g[k] = f.parse().map_err(|_| {
                            err(
                                line_no,
                                format!("column {}: '{f}' is not an integer", b.dim + k + 1),
                            )
                        })?;
                    }
                    if g[2] < 0 || g[3] < 0 {
                        return Err(err(
                            line_no,
                            "patch width and height must be non-negative".into(),
                        ));
                    }
                    b.geometry.push(PatchRect::new(g[0], g[1], g[2], g[3]));
                }
                if b.values.len() == b.expected * b.dim {
                    images.push(finish(block.take().expect("open block"), path)?);
                }
            }
        }
    }
    if let Some(b) = block {
        let got = b.values.len() / b.dim;
        return Err(err(
            b.header_line,
            format!(
                "image '{}': expected {} descriptors, file ended after {got}",
                b.id, b.expected
            ),
        ));
    }
    if images.is_empty() {
        return Err(err(0, "no images found".into()));
    }
    Ok(images)
}

fn parse_block_header(fields: &[&str]) -> std::result::Result<(String, usize, usize), String> {
    if fields.len() != 3 {
        return Err(format!(
            "expected block header '{HEADER}', found {} fields",
            fields.len()
        ));
    }
    let id = fields[0];
    if id.is_empty() {
        return Err("empty image id".into());
    }
    let n: usize = fields[1]
        .parse()
        .map_err(|_| format!("n_descriptors '{}' is not a count", fields[1]))?;
    let dim: usize = fields[2]
        .parse()
        .map_err(|_| format!("dim '{}' is not a count", fields[2]))?;
    if n == 0 || dim == 0 {
        return Err(format!(
            "image '{id}': n_descriptors and dim must be at least 1"
        ));
    }
    Ok((id.to_string(), n, dim))
}

fn finish(b: Block, path: &Path) -> Result<ImageDescriptors> {
    let to_parse_err = |e: gmp_core::GmpError| CliError::Parse {
        path: PathBuf::from(path),
        line: b.header_line,
        message: format!("image '{}': {e}", b.id),
    };
    let m = DenseMatrix::new(b.expected, b.dim, b.values.clone()).map_err(to_parse_err)?;
    let mut set = DescriptorSet::new(m).map_err(to_parse_err)?;
    if b.with_geometry == Some(true) {
        set = set
            .with_geometry(b.geometry.clone())
            .map_err(to_parse_err)?;
    }
    Ok(ImageDescriptors {
        id: b.id,
        descriptors: set,
    })
}

/// Inverse of [`parse_descriptors`].
pub fn format_descriptors(images: &[ImageDescriptors]) -> String {
    let mut out = format!("{HEADER}\n");
    for img in images {
        let set = &img.descriptors;
        let _ = writeln!(out, "{},{},{}", img.id, set.len(), set.dim());
        for (i, d) in set.iter().enumerate() {
            let mut row: Vec<String> = d.iter().map(|v| v.to_string()).collect();
            if let Some(g) = set.geometry() {
                let r = g[i];
                row.extend([r.x, r.y, r.width, r.height].map(|v| v.to_string()));
            }
            out.push_str(&row.join(","));
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Vec<ImageDescriptors>> {
        parse_descriptors(text, Path::new("test.csv"))
    }

    fn line_of(e: CliError) -> usize {
        match e {
            CliError::Parse { line, .. } => line,
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn two_images() {
        let imgs = parse("image_id,n_descriptors,dim\na,2,2\n0,1\n1,0\n\n# next\nb,1,2\n0.5,0.5\n")
            .unwrap();
        assert_eq!(imgs.len(), 2);
        assert_eq!(imgs[0].id, "a");
        assert_eq!(imgs[0].descriptors.descriptor(1), &[1.0, 0.0]);
        assert_eq!(imgs[1].descriptors.len(), 1);
        assert!(imgs[0].descriptors.geometry().is_none());
    }

    #[test]
    fn geometry_columns() {
        let imgs = parse("a,2,1\n0.5,0,0,4,4\n1.5,-2,3,5,2\n").unwrap();
        let g = imgs[0].descriptors.geometry().unwrap();
        assert_eq!(g[1], PatchRect::new(-2, 3, 5, 2));
    }

    #[test]
    fn errors_carry_line_numbers() {
        assert_eq!(line_of(parse("a,2,2\n0,1\n1,x\n").unwrap_err()), 3);
        assert_eq!(line_of(parse("a,2,2\n0,1\n1,2,3\n").unwrap_err()), 3);
        assert_eq!(line_of(parse("a,1,2\n0,1\na,1,2\n0,0\n").unwrap_err()), 3);
        assert_eq!(line_of(parse("\na,3,2\n0,1\n").unwrap_err()), 2);
        assert_eq!(line_of(parse("a,0,2\n").unwrap_err()), 1);
        assert_eq!(line_of(parse("a,2,1\n1,0,0,1,1\n2\n").unwrap_err()), 3);
        let msg = parse("a,2,2\n0,1\n1,x\n").unwrap_err().to_string();
        assert!(msg.contains("test.csv:3"), "{msg}");
    }

    #[test]
    fn round_trip() {
        let text = "image_id,n_descriptors,dim\nimg,2,2\n0.25,-1\n3,4\n";
        let imgs = parse(text).unwrap();
        assert_eq!(format_descriptors(&imgs), text);
    }
}
