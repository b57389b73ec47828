//! Patch-mix an image at each scale and write the variants as PNGs.
//!
//!     cargo run --example patch_mix [image.png]

use sds_core::imaging::{self, ImageBuffer};

fn main() -> sds_core::Result<()> {
    let out = std::env::temp_dir().join("sds-examples/patch_mix");
    let (img, id) = match std::env::args().nth(1) {
        Some(p) => {
            let path = std::path::PathBuf::from(p);
            let id = path.file_stem().unwrap().to_string_lossy().into_owned();
            (ImageBuffer::load(&path)?, id)
        }
        None => {
            // A smooth gradient with a diagonal stripe, so the shuffle is visible.
            let (h, w) = (180u32, 240u32);
            let mut data = Vec::with_capacity((h * w * 3) as usize);
            for r in 0..h {
                for c in 0..w {
                    let stripe = if (r as i32 - c as i32 * 3 / 4).abs() < 12 { 255 } else { 0 };
                    data.extend_from_slice(&[(c * 255 / w) as u8, (r * 255 / h) as u8, stripe]);
                }
            }
            (ImageBuffer::new(h, w, data)?, "gradient".to_string())
        }
    };
    img.save_png(&out.join(format!("{id}.png")))?;

    let seed = 0;
    for scale in [8, 16, 32] {
        let grid = imaging::make_grid(&img, scale)?;
        println!(
            "scale {scale}: {}x{} grid of {}x{} patches, crop offset ({}, {})",
            grid.rows, grid.cols, grid.patch_h, grid.patch_w, grid.top, grid.left
        );
        for order in 0..3 {
            let perm = imaging::derive_permutation(seed, &id, scale, order);
            let mixed = imaging::mix(&img, &grid, &perm)?;
            let path = out.join(format!("{id}_mix_s{scale}_o{order}.png"));
            mixed.save_png(&path)?;
            if order == 0 {
                println!("  order 0 -> {:?}", perm.order);
            }
            // Undo the shuffle to show nothing was lost.
            let back = imaging::mix(&mixed, &imaging::make_grid(&mixed, scale)?, &perm.inverse())?;
            assert_eq!(back, imaging::crop_to_grid(&img, &grid)?);
        }
    }
    println!("variants written to {}", out.display());
    Ok(())
}
