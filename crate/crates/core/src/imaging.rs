//! RGB image buffers and the multi-level patch-mixed perturbation.
//!
//! An image is cut into an `n`-cell grid and reassembled with the cells in a
//! shuffled order. For each scale `n` and each order index `o` the shuffle is
//! a pure function of `(global_seed, sample_id, n, o)`:
//!
//! 1. `h = fnv1a64(utf8(sample_id))`
//! 2. `s = global_seed`; for `v` in `[h, n, o]`: `s = splitmix64_next(state = s ^ v)`
//! 3. Fisher-Yates over `0..n` driven by a splitmix64 stream seeded with `s`:
//!    for `i` from `n-1` down to `1`, `j = next() % (i + 1)`, swap `i` and `j`.
//!
//! Offline tools that precompute embeddings must reproduce exactly this
//! sequence so that store keys address the same mixed images.

use std::path::Path;

use crate::error::{Result, SdsError};
use crate::fsutil;

/// Packed 8-bit RGB raster, row-major, `height * width * 3` bytes.
#[derive(Clone, PartialEq, Eq)]
pub struct ImageBuffer {
    height: u32,
    width: u32,
    data: Vec<u8>,
}

impl std::fmt::Debug for ImageBuffer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ImageBuffer")
            .field("height", &self.height)
            .field("width", &self.width)
            .finish_non_exhaustive()
    }
}

impl ImageBuffer {
    pub fn new(height: u32, width: u32, data: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(SdsError::Image(format!("empty image {height}x{width}")));
        }
        let expected = height as usize * width as usize * 3;
        if data.len() != expected {
            return Err(SdsError::Image(format!(
                "{height}x{width} image needs {expected} bytes, got {}",
                data.len()
            )));
        }
        Ok(Self { height, width, data })
    }

    pub fn filled(height: u32, width: u32, rgb: [u8; 3]) -> Result<Self> {
        let data = rgb
            .iter()
            .copied()
            .cycle()
            .take(height as usize * width as usize * 3)
            .collect();
        Self::new(height, width, data)
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

    pub fn pixel(&self, row: u32, col: u32) -> [u8; 3] {
        let i = (row as usize * self.width as usize + col as usize) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Load a PNG or JPEG; grayscale and alpha inputs are converted to RGB.
    pub fn load(path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(|source| SdsError::ImageDecode {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_rgb(img.to_rgb8())
    }

    pub fn from_rgb(img: image::RgbImage) -> Result<Self> {
        let (w, h) = img.dimensions();
        Self::new(h, w, img.into_raw())
    }

    pub fn to_rgb(&self) -> image::RgbImage {
        image::RgbImage::from_raw(self.width, self.height, self.data.clone())
            .expect("buffer length checked at construction")
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let mut bytes = Vec::new();
        self.to_rgb()
            .write_to(&mut std::io::Cursor::new(&mut bytes), image::ImageFormat::Png)
            .map_err(|source| SdsError::ImageDecode {
                path: path.to_path_buf(),
                source,
            })?;
        fsutil::write_atomic(path, &bytes)
    }

    /// SHA-256 over dimensions and pixels, hex encoded.
    pub fn checksum(&self) -> String {
        let mut bytes = Vec::with_capacity(8 + self.data.len());
        bytes.extend_from_slice(&self.height.to_le_bytes());
        bytes.extend_from_slice(&self.width.to_le_bytes());
        bytes.extend_from_slice(&self.data);
        fsutil::sha256_hex(&bytes)
    }

    pub fn crop(&self, top: u32, left: u32, height: u32, width: u32) -> Result<Self> {
        if height == 0 || width == 0 || top + height > self.height || left + width > self.width {
            return Err(SdsError::Image(format!(
                "crop {height}x{width}+{top}+{left} outside {}x{}",
                self.height, self.width
            )));
        }
        let row_bytes = width as usize * 3;
        let mut data = Vec::with_capacity(height as usize * row_bytes);
        for r in top..top + height {
            let start = (r as usize * self.width as usize + left as usize) * 3;
            data.extend_from_slice(&self.data[start..start + row_bytes]);
        }
        Self::new(height, width, data)
    }

    /// Per-channel 256-bin histograms.
    pub fn channel_histograms(&self) -> [[u64; 256]; 3] {
        let mut h = [[0u64; 256]; 3];
        for px in self.data.chunks_exact(3) {
            for (c, &v) in px.iter().enumerate() {
                h[c][v as usize] += 1;
            }
        }
        h
    }
}

/// Layout of `n = rows * cols` equal cells over the centred crop of an image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchGrid {
    pub rows: u32,
    pub cols: u32,
    pub patch_h: u32,
    pub patch_w: u32,
    pub top: u32,
    pub left: u32,
}

impl PatchGrid {
    pub fn n(&self) -> usize {
        self.rows as usize * self.cols as usize
    }

    pub fn cropped_height(&self) -> u32 {
        self.rows * self.patch_h
    }

    pub fn cropped_width(&self) -> u32 {
        self.cols * self.patch_w
    }
}

/// Factor `n` as `rows * cols` with `rows <= cols` and `cols - rows` minimal.
pub fn squarest_factors(n: usize) -> (usize, usize) {
    let mut rows = 1;
    let mut r = 1;
    while r * r <= n {
        if n.is_multiple_of(r) {
            rows = r;
        }
        r += 1;
    }
    (rows, n / rows)
}

pub fn make_grid(image: &ImageBuffer, n_patches: usize) -> Result<PatchGrid> {
    let err = || SdsError::Grid {
        height: image.height,
        width: image.width,
        n: n_patches,
    };
    if n_patches == 0 {
        return Err(err());
    }
    let (rows, cols) = squarest_factors(n_patches);
    let (rows, cols) = (u32::try_from(rows).map_err(|_| err())?, u32::try_from(cols).map_err(|_| err())?);
    let patch_h = image.height / rows;
    let patch_w = image.width / cols;
    if patch_h == 0 || patch_w == 0 {
        return Err(err());
    }
    Ok(PatchGrid {
        rows,
        cols,
        patch_h,
        patch_w,
        top: (image.height - rows * patch_h) / 2,
        left: (image.width - cols * patch_w) / 2,
    })
}

/// Crop an image to the area its grid covers.
pub fn crop_to_grid(image: &ImageBuffer, grid: &PatchGrid) -> Result<ImageBuffer> {
    image.crop(grid.top, grid.left, grid.cropped_height(), grid.cropped_width())
}

/// A shuffle of patch indices for one `(scale, order_index)` draw.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation {
    pub order: Vec<usize>,
    pub scale: usize,
    pub order_index: usize,
    pub global_seed: u64,
    pub sample_id: String,
}

impl Permutation {
    pub fn identity(scale: usize) -> Self {
        Self::from_order((0..scale).collect()).expect("identity is a bijection")
    }

    /// Wrap an explicit order; fails unless it is a bijection on `0..len`.
    pub fn from_order(order: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; order.len()];
        for &i in &order {
            if i >= order.len() || std::mem::replace(&mut seen[i], true) {
                return Err(SdsError::Image(format!("{order:?} is not a permutation")));
            }
        }
        Ok(Self {
            scale: order.len(),
            order,
            order_index: 0,
            global_seed: 0,
            sample_id: String::new(),
        })
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.order.len()];
        for (k, &src) in self.order.iter().enumerate() {
            inv[src] = k;
        }
        Self {
            order: inv,
            ..self.clone()
        }
    }
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// splitmix64 generator.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
}

pub fn permutation_seed(global_seed: u64, sample_id: &str, scale: usize, order_index: usize) -> u64 {
    [fnv1a64(sample_id.as_bytes()), scale as u64, order_index as u64]
        .into_iter()
        .fold(global_seed, |s, v| SplitMix64::new(s ^ v).next_u64())
}

pub fn derive_permutation(global_seed: u64, sample_id: &str, scale: usize, order_index: usize) -> Permutation {
    let mut rng = SplitMix64::new(permutation_seed(global_seed, sample_id, scale, order_index));
    let mut order: Vec<usize> = (0..scale).collect();
    for i in (1..scale).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        order.swap(i, j);
    }
    Permutation {
        order,
        scale,
        order_index,
        global_seed,
        sample_id: sample_id.to_string(),
    }
}

/// Reassemble the grid cells so that output cell `k` (row-major) holds input
/// cell `perm.order[k]`.
pub fn mix(image: &ImageBuffer, grid: &PatchGrid, perm: &Permutation) -> Result<ImageBuffer> {
    if perm.order.len() != grid.n() {
        return Err(SdsError::ScaleMismatch {
            perm: perm.order.len(),
            grid: grid.n(),
        });
    }
    let out_h = grid.cropped_height();
    let out_w = grid.cropped_width();
    let mut data = vec![0u8; out_h as usize * out_w as usize * 3];
    let row_bytes = grid.patch_w as usize * 3;
    for (k, &src) in perm.order.iter().enumerate() {
        let (dst_r, dst_c) = (k as u32 / grid.cols, k as u32 % grid.cols);
        let (src_r, src_c) = (src as u32 / grid.cols, src as u32 % grid.cols);
        for y in 0..grid.patch_h {
            let sy = grid.top + src_r * grid.patch_h + y;
            let sx = grid.left + src_c * grid.patch_w;
            let s = (sy as usize * image.width as usize + sx as usize) * 3;
            let dy = dst_r * grid.patch_h + y;
            let dx = dst_c * grid.patch_w;
            let d = (dy as usize * out_w as usize + dx as usize) * 3;
            data[d..d + row_bytes].copy_from_slice(&image.data[s..s + row_bytes]);
        }
    }
    ImageBuffer::new(out_h, out_w, data)
}

/// One patch-mixed variant of a sample image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MixedVariant {
    pub scale: usize,
    pub order_index: usize,
    pub image: ImageBuffer,
}

/// All `scales.len() * n_o` variants, ordered by scale (as given) then order index.
pub fn mixed_variants(
    image: &ImageBuffer,
    scales: &[usize],
    n_o: usize,
    global_seed: u64,
    sample_id: &str,
) -> Result<Vec<MixedVariant>> {
    if scales.is_empty() || n_o == 0 {
        return Err(SdsError::Config("need at least one scale and one order".into()));
    }
    let mut out = Vec::with_capacity(scales.len() * n_o);
    for &scale in scales {
        let grid = make_grid(image, scale)?;
        for order_index in 0..n_o {
            let perm = derive_permutation(global_seed, sample_id, scale, order_index);
            out.push(MixedVariant {
                scale,
                order_index,
                image: mix(image, &grid, &perm)?,
            });
        }
    }
    Ok(out)
}
