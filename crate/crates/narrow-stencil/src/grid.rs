//! Tensor-product meshes on d-rectangles with a one-layer ghost extension.
//!
//! Mesh indices follow the 1-based convention `alpha_i in 1..=J_i`; the
//! extended range `0..=J_i+1` adds the ghost layer. A ghost node is valid
//! only when it is reachable as `y +/- 2 h_i e_i` from an interior node `y`;
//! the remaining corner-adjacent ghost slots are representable but carry no
//! value and reject all reads and writes.

use std::sync::Arc;

use smallvec::SmallVec;
use thiserror::Error;

use crate::linalg::DimVec;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("axis {axis}: domain upper bound {upper} must exceed lower bound {lower}")]
    EmptyAxis { axis: usize, lower: f64, upper: f64 },
    #[error("axis {axis}: grids need at least 2 nodes, got {size}")]
    TooFewNodes { axis: usize, size: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("index {0:?} is outside the extended mesh")]
    OutOfRange(Vec<i64>),
    #[error("value at {0:?} is unset")]
    UnsetValue(Vec<i64>),
    #[error("node {0:?} is an excluded ghost and carries no value")]
    ExcludedGhost(Vec<i64>),
}

/// Axis-aligned d-rectangle `(a_1,b_1) x ... x (a_d,b_d)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainBox {
    lower: DimVec,
    upper: DimVec,
}

impl DomainBox {
    pub fn new(lower: &[f64], upper: &[f64]) -> Result<Self, GridError> {
        if lower.len() != upper.len() {
            return Err(GridError::DimensionMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        for (axis, (lo, hi)) in lower.iter().zip(upper.iter()).enumerate() {
            if !(hi > lo) {
                return Err(GridError::EmptyAxis {
                    axis,
                    lower: *lo,
                    upper: *hi,
                });
            }
        }
        Ok(Self {
            lower: SmallVec::from_slice(lower),
            upper: SmallVec::from_slice(upper),
        })
    }

    /// The unit square `(0,1)^2`.
    pub fn unit_square() -> Self {
        Self::new(&[0.0, 0.0], &[1.0, 1.0]).expect("unit square is valid")
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn width(&self, axis: usize) -> f64 {
        self.upper[axis] - self.lower[axis]
    }
}

/// Multi-index into the extended mesh; components are 1-based over the mesh.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MultiIndex(SmallVec<[i64; 4]>);

impl MultiIndex {
    pub fn new(components: &[i64]) -> Self {
        Self(SmallVec::from_slice(components))
    }

    pub fn components(&self) -> &[i64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    #[inline]
    pub fn component(&self, axis: usize) -> i64 {
        self.0[axis]
    }

    /// The index shifted by `delta` steps along `axis`.
    #[inline]
    pub fn offset(&self, axis: usize, delta: i64) -> Self {
        let mut out = self.clone();
        out.0[axis] += delta;
        out
    }

    /// The index shifted by `delta` on every axis simultaneously.
    pub fn offset_all(&self, deltas: &[i64]) -> Self {
        let mut out = self.clone();
        for (c, d) in out.0.iter_mut().zip(deltas.iter()) {
            *c += d;
        }
        out
    }
}

impl From<&[i64]> for MultiIndex {
    fn from(v: &[i64]) -> Self {
        Self::new(v)
    }
}

/// Classification of an extended-mesh node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeClass {
    Interior,
    /// Boundary node outside the auxiliary set (corners and edge nodes
    /// without an interior axis neighbor).
    Boundary,
    /// Boundary node carrying an auxiliary discrete Laplace equation: it has
    /// an axis neighbor in the interior.
    BoundaryAux,
    /// Ghost node reachable as `y +/- 2 h_i e_i` from an interior `y`.
    Ghost,
    /// Ghost slot never referenced by the scheme; carries no value.
    ExcludedGhost,
}

impl NodeClass {
    /// Interior or boundary (the mesh covering the closed domain).
    pub fn is_mesh(self) -> bool {
        matches!(
            self,
            NodeClass::Interior | NodeClass::Boundary | NodeClass::BoundaryAux
        )
    }

    /// Any node on the topological boundary, auxiliary or not.
    pub fn is_boundary(self) -> bool {
        matches!(self, NodeClass::Boundary | NodeClass::BoundaryAux)
    }
}

/// Immutable description of a tensor-product mesh with ghost extension.
#[derive(Debug)]
pub struct GridSpec {
    domain: DomainBox,
    sizes: Vec<usize>,
    spacings: Vec<f64>,
    h_max: f64,
    h_min: f64,
    ext_strides: Vec<usize>,
    ext_len: usize,
    classes: Vec<NodeClass>,
}

impl GridSpec {
    /// Builds the mesh: `J_i` nodes per axis, `h_i = (b_i - a_i)/(J_i - 1)`.
    pub fn new(domain: DomainBox, sizes: &[usize]) -> Result<Self, GridError> {
        if sizes.len() != domain.dim() {
            return Err(GridError::DimensionMismatch {
                expected: domain.dim(),
                got: sizes.len(),
            });
        }
        for (axis, &size) in sizes.iter().enumerate() {
            if size < 2 {
                return Err(GridError::TooFewNodes { axis, size });
            }
        }
        let spacings: Vec<f64> = sizes
            .iter()
            .enumerate()
            .map(|(i, &j)| domain.width(i) / (j as f64 - 1.0))
            .collect();
        let h_max = spacings.iter().cloned().fold(f64::MIN, f64::max);
        let h_min = spacings.iter().cloned().fold(f64::MAX, f64::min);

        let mut ext_strides = vec![0usize; sizes.len()];
        let mut stride = 1usize;
        for (i, &j) in sizes.iter().enumerate() {
            ext_strides[i] = stride;
            stride *= j + 2;
        }
        let ext_len = stride;

        let mut spec = Self {
            domain,
            sizes: sizes.to_vec(),
            spacings,
            h_max,
            h_min,
            ext_strides,
            ext_len,
            classes: Vec::new(),
        };
        let mut classes = Vec::with_capacity(ext_len);
        for idx in spec.extended_box() {
            classes.push(spec.classify_compute(&idx));
        }
        spec.classes = classes;
        Ok(spec)
    }

    pub fn dim(&self) -> usize {
        self.sizes.len()
    }

    pub fn domain(&self) -> &DomainBox {
        &self.domain
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn size(&self, axis: usize) -> usize {
        self.sizes[axis]
    }

    pub fn spacings(&self) -> &[f64] {
        &self.spacings
    }

    #[inline]
    pub fn spacing(&self, axis: usize) -> f64 {
        self.spacings[axis]
    }

    pub fn h_max(&self) -> f64 {
        self.h_max
    }

    pub fn h_min(&self) -> f64 {
        self.h_min
    }

    /// Euclidean diameter of a grid cell, `sqrt(sum_i h_i^2)`; the mesh-size
    /// convention the reference convergence tables are reported in.
    pub fn h_diag(&self) -> f64 {
        self.spacings.iter().map(|h| h * h).sum::<f64>().sqrt()
    }

    /// Number of mesh nodes `prod J_i`.
    pub fn mesh_count(&self) -> usize {
        self.sizes.iter().product()
    }

    /// Number of interior nodes `prod (J_i - 2)`.
    pub fn interior_count(&self) -> usize {
        self.sizes.iter().map(|&j| j.saturating_sub(2)).product()
    }

    #[inline]
    fn in_extended_range(&self, idx: &MultiIndex) -> bool {
        idx.dim() == self.dim()
            && idx
                .components()
                .iter()
                .zip(self.sizes.iter())
                .all(|(&c, &j)| c >= 0 && c <= j as i64 + 1)
    }

    #[inline]
    fn is_interior_comps(&self, comps: &[i64]) -> bool {
        comps
            .iter()
            .zip(self.sizes.iter())
            .all(|(&c, &j)| c >= 2 && c <= j as i64 - 1)
    }

    #[inline]
    fn is_mesh_comps(&self, comps: &[i64]) -> bool {
        comps
            .iter()
            .zip(self.sizes.iter())
            .all(|(&c, &j)| c >= 1 && c <= j as i64)
    }

    fn classify_compute(&self, idx: &MultiIndex) -> NodeClass {
        let comps = idx.components();
        if self.is_mesh_comps(comps) {
            if self.is_interior_comps(comps) {
                return NodeClass::Interior;
            }
            // Boundary node: auxiliary when some axis neighbor is interior.
            for axis in 0..self.dim() {
                for delta in [-1i64, 1] {
                    let mut nb: SmallVec<[i64; 4]> = SmallVec::from_slice(comps);
                    nb[axis] += delta;
                    if self.is_interior_comps(&nb) {
                        return NodeClass::BoundaryAux;
                    }
                }
            }
            return NodeClass::Boundary;
        }
        // Outside the mesh: a valid ghost has an interior witness two steps
        // inward along the exterior axis.
        for axis in 0..self.dim() {
            let c = comps[axis];
            let j = self.sizes[axis] as i64;
            let inward = if c == 0 {
                2
            } else if c == j + 1 {
                -2
            } else {
                continue;
            };
            let mut witness: SmallVec<[i64; 4]> = SmallVec::from_slice(comps);
            witness[axis] += inward;
            if self.is_interior_comps(&witness) {
                return NodeClass::Ghost;
            }
        }
        NodeClass::ExcludedGhost
    }

    /// Classifies a node of the extended mesh.
    pub fn classify(&self, idx: &MultiIndex) -> Result<NodeClass, GridError> {
        if !self.in_extended_range(idx) {
            return Err(GridError::OutOfRange(idx.components().to_vec()));
        }
        Ok(self.classes[self.flat_unchecked(idx)])
    }

    /// Physical coordinate `x_alpha = (a_i + (alpha_i - 1) h_i)_i`.
    pub fn node_coord(&self, idx: &MultiIndex) -> Result<DimVec, GridError> {
        if !self.in_extended_range(idx) {
            return Err(GridError::OutOfRange(idx.components().to_vec()));
        }
        let mut out = DimVec::with_capacity(self.dim());
        for axis in 0..self.dim() {
            out.push(self.coord_axis(axis, idx.component(axis)));
        }
        Ok(out)
    }

    #[inline]
    pub(crate) fn coord_axis(&self, axis: usize, comp: i64) -> f64 {
        self.domain.lower[axis] + (comp as f64 - 1.0) * self.spacings[axis]
    }

    /// Writes the node coordinate into `out` without allocating.
    pub(crate) fn coord_into(&self, idx: &MultiIndex, out: &mut [f64]) {
        for axis in 0..self.dim() {
            out[axis] = self.coord_axis(axis, idx.component(axis));
        }
    }

    #[inline]
    fn flat_unchecked(&self, idx: &MultiIndex) -> usize {
        let mut f = 0usize;
        for axis in 0..self.dim() {
            f += idx.component(axis) as usize * self.ext_strides[axis];
        }
        f
    }

    /// Flat offset of an extended-mesh node into dense storage.
    pub fn flat(&self, idx: &MultiIndex) -> Result<usize, GridError> {
        if !self.in_extended_range(idx) {
            return Err(GridError::OutOfRange(idx.components().to_vec()));
        }
        Ok(self.flat_unchecked(idx))
    }

    pub(crate) fn extended_len(&self) -> usize {
        self.ext_len
    }

    /// Flat offset of an interior node into the interior-only ordering used
    /// by solvers (axis 0 fastest).
    pub fn interior_flat(&self, idx: &MultiIndex) -> Option<usize> {
        if !self.is_interior_comps(idx.components()) {
            return None;
        }
        let mut f = 0usize;
        let mut stride = 1usize;
        for axis in 0..self.dim() {
            f += (idx.component(axis) as usize - 2) * stride;
            stride *= self.sizes[axis] - 2;
        }
        Some(f)
    }

    fn box_iter(lo: Vec<i64>, hi: Vec<i64>) -> BoxIter {
        let empty = lo.iter().zip(hi.iter()).any(|(l, h)| l > h);
        BoxIter {
            cur: lo.clone(),
            lo,
            hi,
            done: empty,
        }
    }

    /// All slots of the extended storage box, including excluded ghosts.
    pub fn extended_box(&self) -> impl Iterator<Item = MultiIndex> {
        let hi: Vec<i64> = self.sizes.iter().map(|&j| j as i64 + 1).collect();
        Self::box_iter(vec![0; self.dim()], hi)
    }

    /// All mesh nodes (interior plus boundary).
    pub fn mesh_indices(&self) -> impl Iterator<Item = MultiIndex> {
        let hi: Vec<i64> = self.sizes.iter().map(|&j| j as i64).collect();
        Self::box_iter(vec![1; self.dim()], hi)
    }

    /// Interior nodes, in the solver's lexicographic order (axis 0 fastest).
    pub fn interior_indices(&self) -> impl Iterator<Item = MultiIndex> {
        let hi: Vec<i64> = self.sizes.iter().map(|&j| j as i64 - 1).collect();
        Self::box_iter(vec![2; self.dim()], hi)
    }

    /// All boundary nodes, auxiliary or not.
    pub fn boundary_indices(&self) -> impl Iterator<Item = MultiIndex> + '_ {
        self.mesh_indices()
            .filter(move |idx| !self.is_interior_comps(idx.components()))
    }

    /// The auxiliary boundary set carrying the ghost-closure equations.
    pub fn boundary_aux_indices(&self) -> impl Iterator<Item = MultiIndex> + '_ {
        self.boundary_indices()
            .filter(move |idx| self.classes[self.flat_unchecked(idx)] == NodeClass::BoundaryAux)
    }

    /// Valid ghost nodes (excluded slots are skipped).
    pub fn ghost_indices(&self) -> impl Iterator<Item = MultiIndex> + '_ {
        self.extended_box()
            .filter(move |idx| self.classes[self.flat_unchecked(idx)] == NodeClass::Ghost)
    }
}

struct BoxIter {
    lo: Vec<i64>,
    hi: Vec<i64>,
    cur: Vec<i64>,
    done: bool,
}

impl Iterator for BoxIter {
    type Item = MultiIndex;

    fn next(&mut self) -> Option<MultiIndex> {
        if self.done {
            return None;
        }
        let out = MultiIndex::new(&self.cur);
        for axis in 0..self.cur.len() {
            self.cur[axis] += 1;
            if self.cur[axis] <= self.hi[axis] {
                return Some(out);
            }
            self.cur[axis] = self.lo[axis];
        }
        self.done = true;
        Some(out)
    }
}

/// Real values on the extended mesh; the unknown and all residuals live here.
///
/// Ghost values stay unset until the auxiliary closure fills them; reading an
/// unset slot is an error, and excluded ghosts reject writes outright.
#[derive(Debug, Clone)]
pub struct GridFunction {
    grid: Arc<GridSpec>,
    vals: Vec<f64>,
    set: Vec<bool>,
}

impl GridFunction {
    /// A grid function with every slot unset.
    pub fn unset(grid: Arc<GridSpec>) -> Self {
        let n = grid.extended_len();
        Self {
            grid,
            vals: vec![0.0; n],
            set: vec![false; n],
        }
    }

    /// Zero on all mesh nodes, ghosts unset.
    pub fn zeros_on_mesh(grid: Arc<GridSpec>) -> Self {
        let mut f = Self::unset(grid.clone());
        for idx in grid.mesh_indices() {
            let k = grid.flat_unchecked(&idx);
            f.set[k] = true;
        }
        f
    }

    /// Samples `v` on all mesh nodes, ghosts unset.
    pub fn from_fn_on_mesh(grid: Arc<GridSpec>, v: impl Fn(&[f64]) -> f64) -> Self {
        let mut f = Self::unset(grid.clone());
        let mut x = vec![0.0; grid.dim()];
        for idx in grid.mesh_indices() {
            grid.coord_into(&idx, &mut x);
            let k = grid.flat_unchecked(&idx);
            f.vals[k] = v(&x);
            f.set[k] = true;
        }
        f
    }

    /// Samples `v` on mesh nodes and valid ghosts (for operator tests that
    /// need full stencil data without running the closure).
    pub fn from_fn_extended(grid: Arc<GridSpec>, v: impl Fn(&[f64]) -> f64) -> Self {
        let mut f = Self::from_fn_on_mesh(grid.clone(), &v);
        let mut x = vec![0.0; grid.dim()];
        for idx in grid.ghost_indices() {
            grid.coord_into(&idx, &mut x);
            let k = grid.flat_unchecked(&idx);
            f.vals[k] = v(&x);
            f.set[k] = true;
        }
        f
    }

    pub fn grid(&self) -> &Arc<GridSpec> {
        &self.grid
    }

    /// Reads the value at `idx`; unset or excluded slots are errors.
    #[inline]
    pub fn value(&self, idx: &MultiIndex) -> Result<f64, GridError> {
        let k = self.grid.flat(idx)?;
        if !self.set[k] {
            return Err(match self.grid.classes[k] {
                NodeClass::ExcludedGhost => GridError::ExcludedGhost(idx.components().to_vec()),
                _ => GridError::UnsetValue(idx.components().to_vec()),
            });
        }
        Ok(self.vals[k])
    }

    /// Writes the value at `idx`; excluded ghosts reject writes.
    pub fn set_value(&mut self, idx: &MultiIndex, v: f64) -> Result<(), GridError> {
        let k = self.grid.flat(idx)?;
        if self.grid.classes[k] == NodeClass::ExcludedGhost {
            return Err(GridError::ExcludedGhost(idx.components().to_vec()));
        }
        self.vals[k] = v;
        self.set[k] = true;
        Ok(())
    }

    #[inline]
    pub(crate) fn value_flat(&self, k: usize) -> Option<f64> {
        if self.set[k] {
            Some(self.vals[k])
        } else {
            None
        }
    }

    #[inline]
    pub(crate) fn set_flat(&mut self, k: usize, v: f64) {
        self.vals[k] = v;
        self.set[k] = true;
    }

    #[inline]
    pub(crate) fn flat_of(&self, idx: &MultiIndex) -> usize {
        self.grid.flat_unchecked(idx)
    }

    /// Maximum absolute value over mesh nodes.
    pub fn max_abs_on_mesh(&self) -> f64 {
        let mut m = 0.0f64;
        for idx in self.grid.mesh_indices() {
            let k = self.grid.flat_unchecked(&idx);
            if self.set[k] {
                m = m.max(self.vals[k].abs());
            }
        }
        m
    }
}
