use std::path::Path;

use crate::dataio::SpatialCoords;
use crate::{Error, Matrix, Result};

/// An 8-bit raster, row-major with interleaved channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<u8>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("image must be non-empty"));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::invalid(format!("unsupported channel count {channels}")));
        }
        if data.len() != width * height * channels {
            return Err(Error::dim(format!(
                "image buffer has {} bytes, expected {}",
                data.len(),
                width * height * channels
            )));
        }
        Ok(Image {
            width,
            height,
            channels,
            data,
        })
    }

    /// Grayscale or RGB from a PNG byte stream; alpha is dropped.
    pub fn from_png_bytes(bytes: &[u8]) -> Result<Self> {
        let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
            .map_err(|e| Error::invalid(format!("PNG decode: {e}")))?;
        Self::from_dynamic(img)
    }

    pub fn load_png(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_png_bytes(&bytes).map_err(|e| match e {
            Error::Invalid(m) => Error::Invalid(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    fn from_dynamic(img: image::DynamicImage) -> Result<Self> {
        use image::ColorType::*;
        let (w, h) = (img.width() as usize, img.height() as usize);
        match img.color() {
            L8 | La8 | L16 | La16 => Image::new(w, h, 1, img.to_luma8().into_raw()),
            _ => Image::new(w, h, 3, img.to_rgb8().into_raw()),
        }
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize, c: usize) -> u8 {
        self.data[(y * self.width + x) * self.channels + c]
    }
}

/// A square pixel patch, row-major with interleaved channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tile {
    pub size: usize,
    pub channels: usize,
    pub data: Vec<u8>,
}

impl Tile {
    pub fn new(size: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        if size == 0 || channels == 0 || data.len() != size * size * channels {
            return Err(Error::dim("tile buffer does not match size × size × channels"));
        }
        Ok(Tile { size, channels, data })
    }

    pub fn channel_values(&self, c: usize) -> impl Iterator<Item = u8> + '_ {
        self.data.iter().skip(c).step_by(self.channels).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TileSet {
    pub tiles: Vec<Tile>,
    pub tile_size: usize,
}

/// Cuts one `tile_size` square per spot, centred on the spot's pixel
/// position (coordinates are pixel units, x = column, y = row). Pixels
/// outside the image are zero.
pub fn extract_tiles(image: &Image, coords: &SpatialCoords, tile_size: usize) -> Result<TileSet> {
    if tile_size < 1 {
        return Err(Error::invalid("tile_size must be at least 1"));
    }
    let half = tile_size as f64 / 2.0;
    let (w, h) = (image.width as f64, image.height as f64);
    let pos = coords.positions();
    let mut tiles = Vec::with_capacity(coords.len());
    for i in 0..coords.len() {
        let (x, y) = (pos[(i, 0)], pos[(i, 1)]);
        if x < -half || y < -half || x > w - 1.0 + half || y > h - 1.0 + half {
            return Err(Error::invalid(format!(
                "spot {:?} at ({x}, {y}) lies outside the {}x{} image by more than half a tile",
                coords.spot_ids()[i],
                image.width,
                image.height
            )));
        }
        let x0 = x.floor() as i64 - (tile_size / 2) as i64;
        let y0 = y.floor() as i64 - (tile_size / 2) as i64;
        let mut data = vec![0u8; tile_size * tile_size * image.channels];
        for ty in 0..tile_size {
            let iy = y0 + ty as i64;
            if iy < 0 || iy >= image.height as i64 {
                continue;
            }
            for tx in 0..tile_size {
                let ix = x0 + tx as i64;
                if ix < 0 || ix >= image.width as i64 {
                    continue;
                }
                for c in 0..image.channels {
                    data[(ty * tile_size + tx) * image.channels + c] = image.pixel(ix as usize, iy as usize, c);
                }
            }
        }
        tiles.push(Tile {
            size: tile_size,
            channels: image.channels,
            data,
        });
    }
    Ok(TileSet { tiles, tile_size })
}

/// Any map from a tile to a fixed-length feature vector.
pub trait TileFeaturizer {
    fn featurize(&self, tile: &Tile) -> Vec<f64>;
}

impl<F: Fn(&Tile) -> Vec<f64>> TileFeaturizer for F {
    fn featurize(&self, tile: &Tile) -> Vec<f64> {
        self(tile)
    }
}

pub const HIST_BINS: usize = 8;

/// Per-channel mean, per-channel population standard deviation, then an
/// 8-bin normalised intensity histogram per channel.
#[derive(Debug, Clone, Copy, Default)]
pub struct StatFeaturizer;

impl TileFeaturizer for StatFeaturizer {
    fn featurize(&self, tile: &Tile) -> Vec<f64> {
        tile_feature_vector(tile)
    }
}

pub fn tile_feature_vector(tile: &Tile) -> Vec<f64> {
    let ch = tile.channels;
    let count = (tile.size * tile.size) as f64;
    let mut means = vec![0.0; ch];
    let mut sds = vec![0.0; ch];
    let mut hists = vec![0.0; ch * HIST_BINS];
    for c in 0..ch {
        let mean = tile.channel_values(c).map(f64::from).sum::<f64>() / count;
        let var = tile
            .channel_values(c)
            .map(|v| (f64::from(v) - mean).powi(2))
            .sum::<f64>()
            / count;
        means[c] = mean;
        sds[c] = var.sqrt();
        for v in tile.channel_values(c) {
            hists[c * HIST_BINS + (v as usize * HIST_BINS / 256)] += 1.0;
        }
    }
    for h in &mut hists {
        *h /= count;
    }
    means.into_iter().chain(sds).chain(hists).collect()
}

/// N × F feature matrix, one row per spot.
#[derive(Debug, Clone, PartialEq)]
pub struct TileFeatures {
    pub vectors: Matrix,
}

impl TileFeatures {
    pub fn new(vectors: Matrix) -> Result<Self> {
        if vectors.ncols() < 2 {
            return Err(Error::dim("tile features need at least 2 dimensions"));
        }
        if vectors.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite tile feature".into()));
        }
        Ok(TileFeatures { vectors })
    }

    pub fn from_tiles(tiles: &TileSet, featurizer: &dyn TileFeaturizer) -> Result<Self> {
        let rows: Vec<Vec<f64>> = tiles.tiles.iter().map(|t| featurizer.featurize(t)).collect();
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::dim("featurizer returned vectors of differing length"));
        }
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        TileFeatures::new(Matrix::from_row_slice(tiles.tiles.len(), dim, &flat))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coords(pts: &[(f64, f64)]) -> SpatialCoords {
        let flat: Vec<f64> = pts.iter().flat_map(|&(x, y)| [x, y]).collect();
        let ids = (0..pts.len()).map(|i| format!("s{i}")).collect();
        SpatialCoords::new(Matrix::from_row_slice(pts.len(), 2, &flat), ids).unwrap()
    }

    #[test]
    fn uniform_image_gives_identical_tiles() {
        let img = Image::new(20, 20, 1, vec![90; 400]).unwrap();
        let ts = extract_tiles(&img, &coords(&[(5.0, 5.0), (12.0, 14.0), (10.0, 10.0)]), 4).unwrap();
        assert_eq!(ts.tiles.len(), 3);
        assert!(ts.tiles.iter().all(|t| t == &ts.tiles[0]));
        assert_eq!(ts.tiles[0].data.len(), 16);
    }

    #[test]
    fn corner_spot_is_zero_padded() {
        let img = Image::new(8, 8, 1, vec![200; 64]).unwrap();
        let ts = extract_tiles(&img, &coords(&[(0.0, 0.0)]), 4).unwrap();
        let t = &ts.tiles[0];
        // rows 0,1 and columns 0,1 fall outside the image
        for ty in 0..4 {
            for tx in 0..4 {
                let want = if ty >= 2 && tx >= 2 { 200 } else { 0 };
                assert_eq!(t.data[ty * 4 + tx], want, "({tx},{ty})");
            }
        }
    }

    #[test]
    fn rejects_far_spots_and_zero_size() {
        let img = Image::new(8, 8, 1, vec![0; 64]).unwrap();
        assert!(extract_tiles(&img, &coords(&[(20.0, 2.0)]), 4).is_err());
        assert!(extract_tiles(&img, &coords(&[(-3.0, 2.0)]), 4).is_err());
        assert!(extract_tiles(&img, &coords(&[(2.0, 2.0)]), 0).is_err());
    }

    #[test]
    fn constant_tile_features() {
        let t = Tile::new(4, 1, vec![100; 16]).unwrap();
        let f = tile_feature_vector(&t);
        assert_eq!(f.len(), 2 + HIST_BINS);
        assert_eq!(f[0], 100.0);
        assert_eq!(f[1], 0.0);
        let mut onehot = [0.0; HIST_BINS];
        onehot[100 * HIST_BINS / 256] = 1.0;
        assert_eq!(&f[2..], &onehot[..]);
    }

    #[test]
    fn checkerboard_mean_and_sd() {
        let data: Vec<u8> = (0..16).map(|i| if (i / 4 + i % 4) % 2 == 0 { 0 } else { 255 }).collect();
        let f = tile_feature_vector(&Tile::new(4, 1, data).unwrap());
        assert_eq!(f[0], 127.5);
        assert_eq!(f[1], 127.5);
        assert_eq!(f[2], 0.5);
        assert_eq!(f[2 + HIST_BINS - 1], 0.5);
    }

    #[test]
    fn rgb_layout() {
        let data: Vec<u8> = (0..4).flat_map(|_| [10u8, 20, 30]).collect();
        let f = tile_feature_vector(&Tile::new(2, 3, data).unwrap());
        assert_eq!(f.len(), 3 * (2 + HIST_BINS));
        assert_eq!(&f[..3], &[10.0, 20.0, 30.0]);
    }

    #[test]
    fn custom_featurizer_closure() {
        let img = Image::new(4, 4, 1, (0..16).collect()).unwrap();
        let ts = extract_tiles(&img, &coords(&[(1.0, 1.0), (2.0, 2.0)]), 2).unwrap();
        let f = |t: &Tile| vec![t.data[0] as f64, t.data[3] as f64];
        let tf = TileFeatures::from_tiles(&ts, &f).unwrap();
        assert_eq!(tf.vectors[(0, 0)], 0.0);
        // origin (1, 1), last pixel (2, 2)
        assert_eq!(tf.vectors[(1, 1)], 10.0);
    }

    #[test]
    fn png_roundtrip() {
        let mut buf = std::io::Cursor::new(Vec::new());
        let img = image::GrayImage::from_fn(3, 2, |x, y| image::Luma([(x * 10 + y) as u8]));
        img.write_to(&mut buf, image::ImageFormat::Png).unwrap();
        let ours = Image::from_png_bytes(buf.get_ref()).unwrap();
        assert_eq!((ours.width, ours.height, ours.channels), (3, 2, 1));
        assert_eq!(ours.pixel(2, 1, 0), 21);
        assert!(Image::from_png_bytes(b"not a png").is_err());
    }
}
