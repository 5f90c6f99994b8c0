use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ActivationMap, GradCamError};
use crate::audio::MelSpectrogram;
use crate::autodiff::bilinear_resize;

/// Anchor colours of the viridis ramp at 0, 1/8, ..., 1.
const VIRIDIS: [[f64; 3]; 9] = [
    [68.0, 1.0, 84.0],
    [71.0, 44.0, 122.0],
    [59.0, 81.0, 139.0],
    [44.0, 113.0, 142.0],
    [33.0, 144.0, 141.0],
    [39.0, 173.0, 129.0],
    [92.0, 200.0, 99.0],
    [170.0, 220.0, 50.0],
    [253.0, 231.0, 37.0],
];

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Colormap {
    /// Perceptually uniform dark-blue to yellow ramp.
    #[default]
    Viridis,
    Gray,
}

impl Colormap {
    /// RGB for an intensity in `[0, 1]`; values outside are clamped.
    pub fn rgb(self, t: f64) -> [f64; 3] {
        let t = t.clamp(0.0, 1.0);
        match self {
            Colormap::Gray => [255.0 * t; 3],
            Colormap::Viridis => {
                let pos = t * (VIRIDIS.len() - 1) as f64;
                let lo = (pos.floor() as usize).min(VIRIDIS.len() - 2);
                let f = pos - lo as f64;
                std::array::from_fn(|c| VIRIDIS[lo][c] * (1.0 - f) + VIRIDIS[lo + 1][c] * f)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OverlayConfig {
    pub colormap: Colormap,
    /// Blend weight of the colour layer where the map equals 1.
    pub opacity: f64,
}

impl Default for OverlayConfig {
    fn default() -> Self {
        Self {
            colormap: Colormap::Viridis,
            opacity: 0.6,
        }
    }
}

/// Heatmap in display orientation: row 0 is the highest frequency band.
#[derive(Clone, Debug, PartialEq)]
pub struct HeatmapImage {
    pub width: usize,
    pub height: usize,
    /// Upsampled map intensity per pixel, in `[0, 1]`.
    pub intensity: Vec<f64>,
    /// Interleaved RGB, `3 · width · height` bytes.
    pub rgb: Vec<u8>,
    pub colormap: Colormap,
    pub has_underlay: bool,
}

fn to_byte(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Upsamples `map` to the network input grid (align-corners bilinear) and
/// blends it over the spectrogram, if given, shown in grayscale.
///
/// Each pixel is `(1 − a)·s + a·colour(m)` with `a = opacity · m`, where `m`
/// is the upsampled map and `s` the min-max scaled spectrogram value.
pub fn overlay_and_upsample(
    map: &ActivationMap,
    spec: Option<&MelSpectrogram>,
    config: &OverlayConfig,
) -> Result<HeatmapImage, GradCamError> {
    let (bands, frames) = map.input;
    if bands == 0 || frames == 0 || map.values.is_empty() {
        return Err(GradCamError::EmptyImage);
    }
    if map.values.len() != map.height * map.width {
        return Err(GradCamError::ShapeMismatch(format!(
            "{} map values for a {}×{} grid",
            map.values.len(),
            map.height,
            map.width
        )));
    }
    if let Some(s) = spec {
        if (s.n_bands, s.frames) != (bands, frames) || s.values.len() != bands * frames {
            return Err(GradCamError::ShapeMismatch(format!(
                "spectrogram is {}×{}, the map came from a {bands}×{frames} input",
                s.n_bands, s.frames
            )));
        }
    }
    let up = if (map.height, map.width) == (bands, frames) {
        map.values.clone()
    } else {
        bilinear_resize(&map.values, map.height, map.width, bands, frames)
    };
    let underlay = spec.map(|s| {
        let lo = s.values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = s.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let span = hi - lo;
        s.values
            .iter()
            .map(|v| if span > 0.0 { 255.0 * (v - lo) / span } else { 0.0 })
            .collect::<Vec<_>>()
    });

    let mut intensity = Vec::with_capacity(bands * frames);
    let mut rgb = Vec::with_capacity(3 * bands * frames);
    for row in 0..bands {
        let band = bands - 1 - row;
        for col in 0..frames {
            let m = up[band * frames + col].clamp(0.0, 1.0);
            intensity.push(m);
            let colour = config.colormap.rgb(m);
            match &underlay {
                Some(g) => {
                    let a = config.opacity * m;
                    let s = g[band * frames + col];
                    rgb.extend(colour.iter().map(|&c| to_byte((1.0 - a) * s + a * c)));
                }
                None => rgb.extend(colour.iter().map(|&c| to_byte(c))),
            }
        }
    }
    Ok(HeatmapImage {
        width: frames,
        height: bands,
        intensity,
        rgb,
        colormap: config.colormap,
        has_underlay: spec.is_some(),
    })
}

fn check_nonempty(img: &HeatmapImage) -> Result<(), GradCamError> {
    if img.width == 0 || img.height == 0 {
        return Err(GradCamError::EmptyImage);
    }
    Ok(())
}

/// Binary PGM (P5, maxval 255) of the map intensity.
pub fn encode_pgm(img: &HeatmapImage) -> Result<Vec<u8>, GradCamError> {
    check_nonempty(img)?;
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(img.intensity.iter().map(|&v| to_byte(255.0 * v)));
    Ok(out)
}

/// Binary PPM (P6, maxval 255) of the coloured overlay.
pub fn encode_ppm(img: &HeatmapImage) -> Result<Vec<u8>, GradCamError> {
    check_nonempty(img)?;
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.rgb);
    Ok(out)
}

#[cfg(feature = "png")]
pub fn encode_png(img: &HeatmapImage) -> Result<Vec<u8>, GradCamError> {
    check_nonempty(img)?;
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, img.width as u32, img.height as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc
            .write_header()
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::Other, e))?;
        writer
            .write_image_data(&img.rgb)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::Other, e))?;
    }
    Ok(out)
}

/// `<clip>_<class>_<layer>`, with path separators in the clip id replaced.
pub fn heatmap_file_stem(clip: &str, class: &str, layer: &str) -> String {
    let clip: String = clip
        .chars()
        .map(|c| if c == '/' || c == '\\' { '_' } else { c })
        .collect();
    format!("{clip}_{class}_{layer}")
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), GradCamError> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(bytes)?;
    Ok(())
}

/// Writes `<stem>.pgm` and `<stem>.ppm` (plus `<stem>.png` with the `png`
/// feature) into `dir` and returns the paths written.
pub fn export_image(img: &HeatmapImage, dir: &Path, stem: &str) -> Result<Vec<PathBuf>, GradCamError> {
    let mut written = Vec::new();
    let pgm = dir.join(format!("{stem}.pgm"));
    write_file(&pgm, &encode_pgm(img)?)?;
    written.push(pgm);
    let ppm = dir.join(format!("{stem}.ppm"));
    write_file(&ppm, &encode_ppm(img)?)?;
    written.push(ppm);
    #[cfg(feature = "png")]
    {
        let png = dir.join(format!("{stem}.png"));
        write_file(&png, &encode_png(img)?)?;
        written.push(png);
    }
    Ok(written)
}
