//! Writes synthetic source scenes for `aberrex degrade`.
//!
//! `cargo run --release -p aberrex --example scenes -- OUT_DIR [COUNT] [SATURATION] [SIZE]`

use std::path::PathBuf;

use aberrex::image::write_image;
use aberrex::scene::color_scene_muted;

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let Some(out) = args.first().map(PathBuf::from) else {
        eprintln!("usage: scenes OUT_DIR [COUNT] [SATURATION] [SIZE]");
        std::process::exit(1);
    };
    let arg = |i: usize, default: &str| args.get(i).map_or(default.to_string(), Clone::clone);
    let count: u64 = arg(1, "48").parse().expect("count");
    let saturation: f32 = arg(2, "0.15").parse().expect("saturation");
    let size: usize = arg(3, "384").parse().expect("size");
    std::fs::create_dir_all(&out).expect("create output directory");
    for i in 0..count {
        let img = color_scene_muted(size, size, 1000 + i, saturation);
        write_image(&img, out.join(format!("s{i:03}.png"))).expect("write scene");
    }
}
