//! Compare a synthetic annotation with a reference mask.
//!
//!     cargo run --example mask_miou [annotation.png reference.png num_classes]

use sds_core::maskmetrics::{self, IouOptions, SegMask};

fn main() -> sds_core::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (y, y_ref) = if let [a, b, n] = args.as_slice() {
        let n: u8 = n.parse().expect("num_classes must be a number");
        (maskmetrics::load_mask(a.as_ref(), n)?, maskmetrics::load_mask(b.as_ref(), n)?)
    } else {
        // A cat (1) and a dog (2); the reference shifts the cat and marks a
        // band as ignore (255).
        let mut y = SegMask::filled(8, 8, 0)?;
        let mut y_ref = SegMask::filled(8, 8, 0)?;
        for r in 0..8 {
            for c in 0..8 {
                if c < 4 && r < 4 {
                    y.set(r, c, 1);
                }
                if (1..5).contains(&c) && r < 4 {
                    y_ref.set(r, c, 1);
                }
                if r >= 5 {
                    y.set(r, c, 2);
                    y_ref.set(r, c, 2);
                }
                if r == 7 {
                    y_ref.set(r, c, 255);
                }
            }
        }
        let dir = std::env::temp_dir().join("sds-examples/mask_miou");
        y.save_png(&dir.join("annotation.png"))?;
        y_ref.save_png(&dir.join("reference.png"))?;
        println!("masks written to {}", dir.display());
        (y, y_ref)
    };

    println!("annotation classes: {:?}", maskmetrics::classes_present(&y));
    for bg in [false, true] {
        let rep = maskmetrics::miou_pair(&y, &y_ref, IouOptions { include_background: bg })?;
        println!("include_background={bg}: miou {:.4}", rep.miou);
        for (c, iou) in &rep.per_class {
            println!("  class {c}: {iou:.4}");
        }
    }
    Ok(())
}
