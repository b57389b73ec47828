//! Segmentation masks and per-class IoU / mIoU between a synthetic annotation
//! and its reference.
//!
//! Masks are 8-bit single-channel rasters of class indices, stored as
//! grayscale or palette-indexed PNG. For palette PNGs the raw palette index is
//! the class, never the RGB colour. 255 marks ignored pixels.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SdsError};
use crate::fsutil;
use crate::manifest::{BACKGROUND, IGNORE};

#[derive(Clone, PartialEq, Eq)]
pub struct SegMask {
    height: u32,
    width: u32,
    data: Vec<u8>,
}

impl std::fmt::Debug for SegMask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "SegMask({}x{})", self.height, self.width)
    }
}

impl SegMask {
    pub fn new(height: u32, width: u32, data: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 || data.len() != height as usize * width as usize {
            return Err(SdsError::Mask {
                path: Default::default(),
                msg: format!("{height}x{width} mask with {} values", data.len()),
            });
        }
        Ok(Self { height, width, data })
    }

    pub fn filled(height: u32, width: u32, value: u8) -> Result<Self> {
        Self::new(height, width, vec![value; height as usize * width as usize])
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, row: u32, col: u32) -> u8 {
        self.data[row as usize * self.width as usize + col as usize]
    }

    pub fn set(&mut self, row: u32, col: u32, value: u8) {
        self.data[row as usize * self.width as usize + col as usize] = value;
    }

    /// First value that is neither ignore nor within `0..=num_classes`.
    pub fn out_of_range(&self, num_classes: u8) -> Option<u8> {
        self.data
            .iter()
            .copied()
            .find(|&v| v != IGNORE && v > num_classes)
    }

    /// Write as a palette-indexed PNG using the VOC colour map.
    pub fn save_png(&self, path: &Path) -> Result<()> {
        let mut bytes = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut bytes, self.width, self.height);
            enc.set_color(png::ColorType::Indexed);
            enc.set_depth(png::BitDepth::Eight);
            enc.set_palette(voc_palette().to_vec());
            let mut w = enc.write_header().map_err(|e| png_err(path, e))?;
            w.write_image_data(&self.data).map_err(|e| png_err(path, e))?;
        }
        fsutil::write_atomic(path, &bytes)
    }
}

fn png_err(path: &Path, e: impl std::fmt::Display) -> SdsError {
    SdsError::Mask {
        path: path.to_path_buf(),
        msg: e.to_string(),
    }
}

/// The 256-entry PASCAL VOC colour map, flattened RGB.
pub fn voc_palette() -> [u8; 768] {
    let mut pal = [0u8; 768];
    for i in 0..256usize {
        let (mut r, mut g, mut b) = (0u8, 0u8, 0u8);
        let mut c = i;
        for j in 0..8 {
            r |= ((c & 1) as u8) << (7 - j);
            g |= (((c >> 1) & 1) as u8) << (7 - j);
            b |= (((c >> 2) & 1) as u8) << (7 - j);
            c >>= 3;
        }
        pal[i * 3..i * 3 + 3].copy_from_slice(&[r, g, b]);
    }
    pal
}

/// Load an 8-bit grayscale or palette-indexed PNG and check class range.
pub fn load_mask(path: &Path, num_classes: u8) -> Result<SegMask> {
    let file = File::open(path).map_err(|e| SdsError::io(path, e))?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(png::Transformations::IDENTITY);
    let mut reader = decoder.read_info().map_err(|e| png_err(path, e))?;
    let (color, depth) = {
        let info = reader.info();
        (info.color_type, info.bit_depth)
    };
    if depth != png::BitDepth::Eight || !matches!(color, png::ColorType::Grayscale | png::ColorType::Indexed) {
        return Err(png_err(
            path,
            format!("expected 8-bit single-channel or indexed PNG, got {color:?} at {depth:?}"),
        ));
    }
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| png_err(path, "image too large"))?;
    let mut buf = vec![0u8; size];
    let frame = reader.next_frame(&mut buf).map_err(|e| png_err(path, e))?;
    let (w, h) = (frame.width as usize, frame.height as usize);
    let mut data = Vec::with_capacity(w * h);
    for row in buf.chunks(frame.line_size).take(h) {
        data.extend_from_slice(&row[..w]);
    }
    let mask = SegMask::new(frame.height, frame.width, data).map_err(|e| png_err(path, e))?;
    if let Some(v) = mask.out_of_range(num_classes) {
        return Err(png_err(
            path,
            format!("class index {v} out of range for {num_classes} classes"),
        ));
    }
    Ok(mask)
}

/// Foreground classes in a mask (background and ignore excluded), ascending.
pub fn classes_present(mask: &SegMask) -> Vec<u8> {
    let mut seen = [false; 256];
    for &v in &mask.data {
        seen[v as usize] = true;
    }
    (1..IGNORE).filter(|&c| seen[c as usize]).collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IouOptions {
    /// Count background (0) as an evaluated class.
    #[serde(default)]
    pub include_background: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IouReport {
    pub per_class: BTreeMap<u8, f64>,
    pub miou: f64,
    pub classes_evaluated: Vec<u8>,
    /// No class was evaluated; `miou` is 0 by convention.
    pub degenerate: bool,
}

/// Per-class IoU over pixels where neither mask is ignore.
///
/// The evaluated classes are those that occur in either mask on those pixels,
/// so every evaluated class has a non-empty union.
pub fn miou_pair(y: &SegMask, y_ref: &SegMask, opts: IouOptions) -> Result<IouReport> {
    if (y.height, y.width) != (y_ref.height, y_ref.width) {
        return Err(SdsError::MaskDims(y.height, y.width, y_ref.height, y_ref.width));
    }
    let mut inter = [0u64; 256];
    let mut in_y = [0u64; 256];
    let mut in_ref = [0u64; 256];
    for (&a, &b) in y.data.iter().zip(&y_ref.data) {
        if a == IGNORE || b == IGNORE {
            continue;
        }
        in_y[a as usize] += 1;
        in_ref[b as usize] += 1;
        if a == b {
            inter[a as usize] += 1;
        }
    }
    let first = if opts.include_background { BACKGROUND } else { 1 };
    let mut per_class = BTreeMap::new();
    for c in first..IGNORE {
        let i = c as usize;
        let union = in_y[i] + in_ref[i] - inter[i];
        if union > 0 {
            per_class.insert(c, inter[i] as f64 / union as f64);
        }
    }
    let classes_evaluated: Vec<u8> = per_class.keys().copied().collect();
    let degenerate = classes_evaluated.is_empty();
    let miou = if degenerate {
        0.0
    } else {
        per_class.values().sum::<f64>() / per_class.len() as f64
    };
    Ok(IouReport {
        per_class,
        miou,
        classes_evaluated,
        degenerate,
    })
}
