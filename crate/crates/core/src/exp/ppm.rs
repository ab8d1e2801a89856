//! Binary PPM (P6) scatter rasters of 2-D sample clouds.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::Tensor;

pub const RASTER_SIZE: usize = 512;

/// Renders samples as dark dots on white, mapping `bounds` onto a
/// `512 x 512` canvas (first bound is the x axis, larger y at the top).
pub fn scatter_raster(samples: &Tensor, bounds: &[(f64, f64)]) -> Result<Vec<u8>> {
    let (n, d) = samples.as_matrix()?;
    if d != 2 || bounds.len() != 2 {
        return Err(Error::Dimension("scatter rasters are 2-D only".into()));
    }
    let w = RASTER_SIZE;
    let h = RASTER_SIZE;
    let mut pix = vec![255u8; w * h * 3];
    let (xl, xh) = bounds[0];
    let (yl, yh) = bounds[1];
    for i in 0..n {
        let p = samples.row(i);
        let fx = (p[0] - xl) / (xh - xl);
        let fy = (p[1] - yl) / (yh - yl);
        if !(0.0..=1.0).contains(&fx) || !(0.0..=1.0).contains(&fy) {
            continue;
        }
        let cx = (fx * (w - 1) as f64).round() as usize;
        let cy = ((1.0 - fy) * (h - 1) as f64).round() as usize;
        for dy in 0..2usize {
            for dx in 0..2usize {
                let (x, y) = (cx.saturating_add(dx).min(w - 1), cy.saturating_add(dy).min(h - 1));
                let at = (y * w + x) * 3;
                pix[at] = 20;
                pix[at + 1] = 20;
                pix[at + 2] = 120;
            }
        }
    }
    Ok(pix)
}

pub fn write_scatter_ppm(path: &Path, samples: &Tensor, bounds: &[(f64, f64)]) -> Result<()> {
    let pix = scatter_raster(samples, bounds)?;
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(f, "P6\n{} {}\n255\n", RASTER_SIZE, RASTER_SIZE)?;
    f.write_all(&pix)?;
    f.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_header_and_size() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.ppm");
        let t = Tensor::from_rows(&[vec![0.0, 0.0], vec![0.9, -0.9]]);
        write_scatter_ppm(&path, &t, &[(-1.0, 1.0), (-1.0, 1.0)]).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let header = b"P6\n512 512\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        assert_eq!(bytes.len(), header.len() + 512 * 512 * 3);
        // some pixels must be non-white
        assert!(bytes[header.len()..].iter().any(|&b| b != 255));
    }

    #[test]
    fn out_of_bounds_points_are_skipped() {
        let t = Tensor::from_rows(&[vec![50.0, 50.0]]);
        let pix = scatter_raster(&t, &[(-1.0, 1.0), (-1.0, 1.0)]).unwrap();
        assert!(pix.iter().all(|&b| b == 255));
    }
}
