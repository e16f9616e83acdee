//! Binary pixmap export of rastered partitions.

use std::io::Write;

use sdot_core::measure::Density;
use sdot_core::shifts::Raster;

/// Label colors, cycled for more than 32 regions.
pub const PALETTE: [[u8; 3]; 32] = [
    [230, 25, 75],
    [60, 180, 75],
    [255, 225, 25],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
    [210, 245, 60],
    [250, 190, 212],
    [0, 128, 128],
    [220, 190, 255],
    [170, 110, 40],
    [255, 250, 200],
    [128, 0, 0],
    [170, 255, 195],
    [128, 128, 0],
    [255, 215, 180],
    [0, 0, 128],
    [128, 128, 128],
    [255, 99, 71],
    [46, 139, 87],
    [218, 165, 32],
    [70, 130, 180],
    [205, 92, 92],
    [106, 90, 205],
    [32, 178, 170],
    [199, 21, 133],
    [154, 205, 50],
    [188, 143, 143],
    [85, 107, 47],
    [176, 196, 222],
];

pub fn color(label: u32) -> [u8; 3] {
    PALETTE[label as usize % PALETTE.len()]
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pixmap {
    pub width: usize,
    pub height: usize,
    pub rgb: Vec<u8>,
}

impl Pixmap {
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.rgb);
        out
    }

    pub fn write(&self, path: &std::path::Path) -> std::io::Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_ppm())
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let k = 3 * (y * self.width + x);
        [self.rgb[k], self.rgb[k + 1], self.rgb[k + 2]]
    }

    pub fn distinct_colors(&self) -> usize {
        let mut c: Vec<&[u8]> = self.rgb.chunks(3).collect();
        c.sort_unstable();
        c.dedup();
        c.len()
    }
}

/// Raster as an image with the second axis pointing up. Three-dimensional
/// rasters become a vertical stack of slices along the last axis, lowest
/// slice on top. With `shade`, zero-density cells are drawn at half intensity.
pub fn render(raster: &Raster, shade: Option<(&Density, f64)>) -> Pixmap {
    let r = raster.resolution;
    let (width, height) = match raster.dim {
        1 => (r, 1),
        2 => (r, r),
        _ => (r, r * r),
    };
    let mut rgb = vec![0u8; 3 * width * height];
    for (flat, &label) in raster.labels.iter().enumerate() {
        let idx = raster.cell_index(flat);
        let (x, y) = match raster.dim {
            1 => (idx[0] as usize, 0),
            2 => (idx[0] as usize, r - 1 - idx[1] as usize),
            _ => (
                idx[0] as usize,
                idx[2] as usize * r + (r - 1 - idx[1] as usize),
            ),
        };
        let mut c = color(label);
        if let Some((density, side)) = shade {
            let h = side / r as f64;
            let center: Vec<f64> = (0..raster.dim).map(|a| (idx[a] as f64 + 0.5) * h).collect();
            if density.value(&center) == 0.0 {
                c = c.map(|v| v / 2);
            }
        }
        let k = 3 * (y * width + x);
        rgb[k..k + 3].copy_from_slice(&c);
    }
    Pixmap { width, height, rgb }
}
