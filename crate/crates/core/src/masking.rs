//! Binary masks over parameter tensors and the coordinate-list sparse
//! updates trained on top of frozen weights.
//!
//! Random masks are sampled by ranking one uniform key per cell: Bernoulli
//! mode keeps cells whose key falls below p, exact-count mode keeps the
//! round(p * numel) smallest keys. Both modes therefore consume the same
//! stream positions, and masks drawn from identical stream states are nested
//! across densities, which the trend probes rely on to isolate the effect
//! of density.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{DenseMatrix, RngStream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskMode {
    Bernoulli,
    ExactCount,
    StructuredColumns,
}

/// A fixed 0/1 selection over a parameter tensor, stored as sorted row-major
/// linear coordinates. Generated once and immutable afterwards.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mask {
    shape: Vec<usize>,
    #[serde(rename = "p")]
    density: f64,
    mode: MaskMode,
    /// (seed, stream_id) of the generating stream; None for hand-built masks.
    seed: Option<[u64; 2]>,
    coords: Vec<usize>,
}

impl Mask {
    /// Samples a random mask with the given density.
    pub fn gen_random(shape: &[usize], p: f64, mode: MaskMode, rng: &mut RngStream) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::invalid(format!("mask density {p} outside [0, 1]")));
        }
        if mode == MaskMode::StructuredColumns {
            return Err(Error::invalid(
                "use gen_structured for structured-columns masks",
            ));
        }
        let numel = shape.iter().product::<usize>();
        let provenance = Some([rng.seed(), rng.stream_id()]);
        let keys: Vec<f64> = (0..numel).map(|_| rng.next_f64()).collect();
        let coords = match mode {
            MaskMode::Bernoulli => (0..numel).filter(|&i| keys[i] < p).collect(),
            MaskMode::ExactCount => {
                let k = (p * numel as f64).round() as usize;
                let mut order: Vec<usize> = (0..numel).collect();
                order.sort_by(|&a, &b| keys[a].partial_cmp(&keys[b]).unwrap().then(a.cmp(&b)));
                let mut chosen: Vec<usize> = order.into_iter().take(k).collect();
                chosen.sort_unstable();
                chosen
            }
            MaskMode::StructuredColumns => unreachable!(),
        };
        Ok(Self {
            shape: shape.to_vec(),
            density: p,
            mode,
            seed: provenance,
            coords,
        })
    }

    /// Selects ceil(p * cols) whole columns of a 2-D tensor uniformly at
    /// random; every row of a chosen column is trainable.
    pub fn gen_structured(shape: &[usize], p: f64, rng: &mut RngStream) -> Result<Self> {
        if shape.len() != 2 {
            return Err(Error::invalid(format!(
                "structured mask requires a 2-D shape, got {}-D",
                shape.len()
            )));
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::invalid(format!("mask density {p} outside [0, 1]")));
        }
        let (rows, cols) = (shape[0], shape[1]);
        let provenance = Some([rng.seed(), rng.stream_id()]);
        let k = (p * cols as f64).ceil() as usize;
        let keys: Vec<f64> = (0..cols).map(|_| rng.next_f64()).collect();
        let mut order: Vec<usize> = (0..cols).collect();
        order.sort_by(|&a, &b| keys[a].partial_cmp(&keys[b]).unwrap().then(a.cmp(&b)));
        let mut chosen_cols: Vec<usize> = order.into_iter().take(k).collect();
        chosen_cols.sort_unstable();
        let mut coords = Vec::with_capacity(rows * k);
        for r in 0..rows {
            for &c in &chosen_cols {
                coords.push(r * cols + c);
            }
        }
        Ok(Self {
            shape: shape.to_vec(),
            density: p,
            mode: MaskMode::StructuredColumns,
            seed: provenance,
            coords,
        })
    }

    /// Builds a mask from explicit coordinates (sorted, unique, in range).
    pub fn from_coords(shape: &[usize], coords: Vec<usize>) -> Result<Self> {
        let numel = shape.iter().product::<usize>();
        if coords.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("mask coordinates must be sorted and unique"));
        }
        if coords.last().is_some_and(|&c| c >= numel) {
            return Err(Error::invalid("mask coordinate out of range"));
        }
        let density = if numel == 0 {
            0.0
        } else {
            coords.len() as f64 / numel as f64
        };
        Ok(Self {
            shape: shape.to_vec(),
            density,
            mode: MaskMode::ExactCount,
            seed: None,
            coords,
        })
    }

    pub fn full(shape: &[usize]) -> Self {
        let numel = shape.iter().product::<usize>();
        Self {
            shape: shape.to_vec(),
            density: 1.0,
            mode: MaskMode::ExactCount,
            seed: None,
            coords: (0..numel).collect(),
        }
    }

    pub fn empty(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            density: 0.0,
            mode: MaskMode::ExactCount,
            seed: None,
            coords: Vec::new(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn density(&self) -> f64 {
        self.density
    }

    pub fn mode(&self) -> MaskMode {
        self.mode
    }

    pub fn coords(&self) -> &[usize] {
        &self.coords
    }

    pub fn selected_count(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn contains(&self, linear: usize) -> bool {
        self.coords.binary_search(&linear).is_ok()
    }

    /// JSON provenance record {shape, p, mode, seed, coords}.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("mask serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let mask: Mask =
            serde_json::from_str(s).map_err(|e| Error::invalid(format!("mask JSON: {e}")))?;
        Mask::from_coords(&mask.shape, mask.coords.clone()).map(|_| mask)
    }
}

/// Trainable increments over a frozen tensor, aligned with a mask's
/// coordinate list and zero at construction so optimization starts exactly
/// from the pretrained weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparseUpdate {
    mask: Mask,
    values: Vec<f64>,
}

impl SparseUpdate {
    pub fn new(mask: Mask) -> Self {
        let values = vec![0.0; mask.selected_count()];
        Self { mask, values }
    }

    pub fn mask(&self) -> &Mask {
        &self.mask
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn set_values(&mut self, values: Vec<f64>) -> Result<()> {
        if values.len() != self.mask.selected_count() {
            return Err(Error::invalid("value count does not match mask"));
        }
        self.values = values;
        Ok(())
    }

    /// Dense materialization: zero everywhere off the mask.
    pub fn materialize(&self) -> Result<DenseMatrix> {
        let (rows, cols) = shape_2d(self.mask.shape())?;
        let mut out = DenseMatrix::zeros(rows, cols);
        for (&c, &v) in self.mask.coords().iter().zip(&self.values) {
            out.as_mut_slice()[c] = v;
        }
        Ok(out)
    }
}

fn shape_2d(shape: &[usize]) -> Result<(usize, usize)> {
    match shape {
        [rows, cols] => Ok((*rows, *cols)),
        _ => Err(Error::invalid(format!(
            "expected a 2-D shape, got {}-D",
            shape.len()
        ))),
    }
}

/// W + S: adds the sparse increment to a frozen matrix, leaving it untouched.
pub fn apply_update(frozen: &DenseMatrix, upd: &SparseUpdate) -> Result<DenseMatrix> {
    let (rows, cols) = shape_2d(upd.mask().shape())?;
    if frozen.rows() != rows || frozen.cols() != cols {
        return Err(Error::invalid(format!(
            "apply_update shape mismatch: frozen {}x{}, mask {rows}x{cols}",
            frozen.rows(),
            frozen.cols()
        )));
    }
    let mut out = frozen.clone();
    for (&c, &v) in upd.mask().coords().iter().zip(upd.values()) {
        out.as_mut_slice()[c] += v;
    }
    Ok(out)
}

/// Extracts the gradient entries at the mask's coordinates; everything else
/// is discarded because frozen parameters receive no update.
pub fn scatter_grad(dense_grad: &DenseMatrix, mask: &Mask) -> Result<Vec<f64>> {
    let (rows, cols) = shape_2d(mask.shape())?;
    if dense_grad.rows() != rows || dense_grad.cols() != cols {
        return Err(Error::invalid(format!(
            "scatter_grad shape mismatch: grad {}x{}, mask {rows}x{cols}",
            dense_grad.rows(),
            dense_grad.cols()
        )));
    }
    let flat = dense_grad.as_slice();
    Ok(mask.coords().iter().map(|&c| flat[c]).collect())
}
