//! W×W patch partition of the band image, per-patch average energy, and
//! selection of the patches that carry payload bits.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use ndarray::{ArrayView2, ArrayViewMut2};
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tf::TfImage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PatchCoord {
    /// 0 = topmost block = highest retained frequencies.
    pub row_block: usize,
    /// 0 = earliest frames.
    pub col_block: usize,
    /// Raster index, `row_block * block_cols + col_block`.
    pub linear_index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMode {
    /// The P patches with least average energy.
    Energy,
    /// P patches drawn by a keyed permutation of all patch indices.
    Keyed,
}

impl fmt::Display for SelectionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SelectionMode::Energy => "energy",
            SelectionMode::Keyed => "keyed",
        })
    }
}

impl FromStr for SelectionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "energy" => Ok(SelectionMode::Energy),
            "keyed" => Ok(SelectionMode::Keyed),
            other => Err(Error::Config(format!("unknown selection mode '{other}'"))),
        }
    }
}

/// Patch layout and energies of one band image.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchGrid {
    pub block_rows: usize,
    pub block_cols: usize,
    pub window: usize,
    /// Average energy per patch in raster order.
    pub energies: Vec<f64>,
    /// Trailing image columns that do not fill a whole patch.
    pub dropped_cols: usize,
}

impl PatchGrid {
    pub fn patch_count(&self) -> usize {
        self.block_rows * self.block_cols
    }

    pub fn coord(&self, linear_index: usize) -> PatchCoord {
        PatchCoord {
            row_block: linear_index / self.block_cols,
            col_block: linear_index % self.block_cols,
            linear_index,
        }
    }

    pub fn coord_at(&self, row_block: usize, col_block: usize) -> Result<PatchCoord> {
        if row_block >= self.block_rows || col_block >= self.block_cols {
            return Err(Error::Index(format!(
                "patch ({row_block}, {col_block}) outside {}x{} grid",
                self.block_rows, self.block_cols
            )));
        }
        Ok(self.coord(row_block * self.block_cols + col_block))
    }

    fn check(&self, coord: PatchCoord) -> Result<()> {
        let expect = self.coord_at(coord.row_block, coord.col_block)?;
        if expect != coord {
            return Err(Error::Index(format!("inconsistent patch coordinate {coord:?}")));
        }
        Ok(())
    }

    /// Reads a patch column-major into a vector of length W².
    pub fn vectorize(&self, band: ArrayView2<'_, Complex64>, coord: PatchCoord) -> Result<Vec<Complex64>> {
        self.check(coord)?;
        let w = self.window;
        let (r0, c0) = (coord.row_block * w, coord.col_block * w);
        let mut out = Vec::with_capacity(w * w);
        for dc in 0..w {
            for dr in 0..w {
                out.push(band[[r0 + dr, c0 + dc]]);
            }
        }
        Ok(out)
    }

    /// Inverse of [`PatchGrid::vectorize`]; touches only the given patch.
    pub fn devectorize(
        &self,
        mut band: ArrayViewMut2<'_, Complex64>,
        coord: PatchCoord,
        vec: &[Complex64],
    ) -> Result<()> {
        self.check(coord)?;
        let w = self.window;
        if vec.len() != w * w {
            return Err(Error::Shape(format!("patch vector has {} entries, need {}", vec.len(), w * w)));
        }
        let (r0, c0) = (coord.row_block * w, coord.col_block * w);
        for dc in 0..w {
            for dr in 0..w {
                band[[r0 + dr, c0 + dc]] = vec[dc * w + dr];
            }
        }
        Ok(())
    }
}

/// Splits the band image into W×W patches and computes their average energy.
pub fn partition(image: &TfImage, window: usize) -> Result<PatchGrid> {
    partition_band(image.band(), window)
}

pub fn partition_band(band: ArrayView2<'_, Complex64>, window: usize) -> Result<PatchGrid> {
    let (rows, cols) = band.dim();
    if window == 0 || rows % window != 0 {
        return Err(Error::Config(format!(
            "patch size {window} must divide the {rows} band rows"
        )));
    }
    if cols < window {
        return Err(Error::TooShort(format!(
            "{cols} frames is fewer than one {window}-frame patch"
        )));
    }
    let block_rows = rows / window;
    let block_cols = cols / window;
    let norm = 1.0 / (window * window) as f64;
    let mut energies = vec![0.0; block_rows * block_cols];
    for (j, e) in energies.iter_mut().enumerate() {
        let (rb, cb) = (j / block_cols, j % block_cols);
        let mut acc = 0.0;
        for dc in 0..window {
            for dr in 0..window {
                acc += band[[rb * window + dr, cb * window + dc]].norm_sqr();
            }
        }
        *e = acc * norm;
    }
    Ok(PatchGrid {
        block_rows,
        block_cols,
        window,
        energies,
        dropped_cols: cols % window,
    })
}

/// Selected patches in embedding order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchSelection {
    pub coords: Vec<PatchCoord>,
    pub mode: SelectionMode,
    pub key: Option<u64>,
}

impl PatchSelection {
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }
}

/// Sorts coordinates column by column, top (high frequency) to bottom.
pub fn embedding_order(coords: &mut [PatchCoord]) {
    coords.sort_by_key(|c| (c.col_block, c.row_block));
}

/// Chooses `count` patches. Energy mode takes the least energies (ties broken
/// by raster index); keyed mode takes the head of a keyed permutation.
pub fn select(grid: &PatchGrid, count: usize, mode: SelectionMode, key: Option<u64>) -> Result<PatchSelection> {
    let total = grid.patch_count();
    if count == 0 {
        return Err(Error::Config("payload must carry at least one bit".into()));
    }
    if count > total {
        return Err(Error::Capacity {
            requested: count,
            max: total,
        });
    }
    if count == total {
        log::warn!("payload uses every one of the {total} patches");
    }
    let mut indices: Vec<usize> = (0..total).collect();
    let key = match mode {
        SelectionMode::Energy => {
            indices.sort_by(|&a, &b| grid.energies[a].total_cmp(&grid.energies[b]).then(a.cmp(&b)));
            None
        }
        SelectionMode::Keyed => {
            let key = key.ok_or_else(|| Error::Config("keyed selection needs a key".into()))?;
            let mut rng = ChaCha20Rng::seed_from_u64(key);
            indices.shuffle(&mut rng);
            Some(key)
        }
    };
    let mut coords: Vec<PatchCoord> = indices[..count].iter().map(|&j| grid.coord(j)).collect();
    embedding_order(&mut coords);
    Ok(PatchSelection { coords, mode, key })
}

/// Fraction of `original` patches also present in `recomputed`.
pub fn verify_recovery(original: &PatchSelection, recomputed: &PatchSelection) -> f64 {
    if original.is_empty() {
        return 1.0;
    }
    let found: HashSet<(usize, usize)> = recomputed
        .coords
        .iter()
        .map(|c| (c.row_block, c.col_block))
        .collect();
    let hits = original
        .coords
        .iter()
        .filter(|c| found.contains(&(c.row_block, c.col_block)))
        .count();
    hits as f64 / original.len() as f64
}
