use std::io::Write;

use super::pca::RgbImage;
use super::similarity::SimRow;

pub const SIMILARITY_HEADER: &str = "block,point,population,mean,std";

pub fn write_similarity_csv<W: Write>(mut w: W, rows: &[SimRow]) -> std::io::Result<()> {
    writeln!(w, "{SIMILARITY_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.block, r.point, r.population, r.mean, r.std
        )?;
    }
    Ok(())
}

fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Binary PPM (P6, maxval 255).
pub fn write_ppm<W: Write>(mut w: W, img: &RgbImage) -> std::io::Result<()> {
    write!(w, "P6\n{} {}\n255\n", img.width, img.height)?;
    let bytes: Vec<u8> = img.pixels.iter().flat_map(|p| p.map(to_byte)).collect();
    w.write_all(&bytes)
}
