//! Resolves a split string on a canvas and draws the regions.
//!
//! ```text
//! cargo run --example region_layout -- "1,2;2:1,1,1" 24x12
//! ```

use rpg::layout::{parse_split_extended, resolve_regions, serialize_split, Canvas};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let split = args.next().unwrap_or_else(|| "1,2;2:1,1,1".into());
    let canvas: Canvas = args.next().as_deref().unwrap_or("24x12").parse()?;

    let spec = parse_split_extended(&split)?;
    let rects = resolve_regions(&spec, canvas)?;
    println!("split {}  (canonical {})", split, serialize_split(&spec));
    for r in &rects {
        println!("  region {}: {}", r.index, r);
    }

    let glyphs: Vec<char> = ('0'..='9').chain('a'..='z').collect();
    for y in 0..canvas.height {
        let line: String = (0..canvas.width)
            .map(|x| {
                let r = rects.iter().find(|r| r.contains(x, y)).expect("regions tile the canvas");
                glyphs[r.index % glyphs.len()]
            })
            .collect();
        println!("  {line}");
    }
    Ok(())
}
