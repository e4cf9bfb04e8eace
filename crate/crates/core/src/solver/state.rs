use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rod_structure::{axis_potential_u0, AxisPoint, RodConfig, SingularMapSpec};
use crate::seed_map::SeedMap;
use crate::target_geometry::TargetPoint;

use super::grid::Grid;

/// Prescribed data on the outer boundary of the ball, as regular values
/// `(u - u0, v, chi, psi)`.
pub trait BoundaryData {
    fn k(&self) -> usize;
    fn regular_value(&self, x: AxisPoint) -> Result<TargetPoint>;
}

impl BoundaryData for SeedMap {
    fn k(&self) -> usize {
        self.spec.k
    }

    fn regular_value(&self, x: AxisPoint) -> Result<TargetPoint> {
        Ok(self.eval_regular(x))
    }
}

/// Discrete unknowns on every cell: `fields[f][cell]` with field order
/// `u_reg, v, chi_1..chi_k, psi_1..psi_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldState {
    pub grid: Grid,
    pub k: usize,
    pub fields: Vec<Vec<f64>>,
    pub iterations: usize,
    pub converged: bool,
    pub residual: f64,
}

impl FieldState {
    pub fn m(&self) -> usize {
        2 * self.k + 2
    }

    pub fn radius(&self) -> f64 {
        self.grid.radius
    }

    /// Every cell filled from `data`; this is also the initial guess.
    pub fn from_boundary(grid: &Grid, data: &dyn BoundaryData) -> Result<Self> {
        let k = data.k();
        let m = 2 * k + 2;
        let n = grid.num_cells();
        let mut fields = vec![vec![0.0; n]; m];
        for id in 0..n {
            let p = data.regular_value(grid.centre(id))?;
            for (f, x) in p.coords().into_iter().enumerate() {
                fields[f][id] = x;
            }
        }
        Ok(Self { grid: grid.clone(), k, fields, iterations: 0, converged: false, residual: f64::MAX })
    }

    /// Copy values of `prev` onto coinciding active cells; Dirichlet cells keep
    /// their boundary data.
    pub fn warm_start_from(&mut self, prev: &FieldState) {
        for &id in &self.grid.active {
            if let Some(pid) = self.grid.locate_in(id, &prev.grid) {
                if prev.grid.has_value(pid) {
                    for f in 0..self.fields.len() {
                        self.fields[f][id] = prev.fields[f][pid];
                    }
                }
            }
        }
    }

    pub fn u_reg(&self) -> &[f64] {
        &self.fields[0]
    }

    pub fn v(&self) -> &[f64] {
        &self.fields[1]
    }

    pub fn chi(&self, i: usize) -> &[f64] {
        &self.fields[2 + i]
    }

    pub fn psi(&self, i: usize) -> &[f64] {
        &self.fields[2 + self.k + i]
    }

    /// Regular values `(u_reg, v, chi, psi)` of one cell.
    pub fn regular_point(&self, id: usize) -> TargetPoint {
        let x: Vec<f64> = self.fields.iter().map(|f| f[id]).collect();
        TargetPoint::from_coords(self.k, &x)
    }

    /// The map value `(u_reg + u0, v, chi, psi)` at a cell centre.
    pub fn point(&self, rods: &RodConfig, id: usize) -> Result<TargetPoint> {
        let mut p = self.regular_point(id);
        p.u += axis_potential_u0(rods, self.grid.centre(id))?;
        Ok(p)
    }

    pub fn check_finite(&self) -> Result<()> {
        for f in &self.fields {
            for &id in &self.grid.active {
                if !f[id].is_finite() {
                    return Err(Error::NonFinite("field state"));
                }
            }
        }
        Ok(())
    }

    pub fn sup_abs(&self, field: usize) -> f64 {
        self.grid.active.iter().map(|&id| self.fields[field][id].abs()).fold(0.0, f64::max)
    }
}

/// Self-describing checkpoint: header plus the field grids.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub rods: RodConfig,
    pub spec: SingularMapSpec,
    pub field_names: Vec<String>,
    pub state: FieldState,
}

pub const CHECKPOINT_FORMAT: &str = "axiharm-field-checkpoint";

pub fn field_names(k: usize) -> Vec<String> {
    let mut names = vec!["u_reg".to_string(), "v".to_string()];
    names.extend((1..=k).map(|i| format!("chi{i}")));
    names.extend((1..=k).map(|i| format!("psi{i}")));
    names
}

impl Checkpoint {
    pub fn new(rods: &RodConfig, spec: &SingularMapSpec, state: &FieldState) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: 1,
            rods: rods.clone(),
            spec: spec.clone(),
            field_names: field_names(state.k),
            state: state.clone(),
        }
    }

    pub fn write(&self, path: &std::path::Path) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(f, self)?;
        Ok(())
    }

    pub fn read(path: &std::path::Path) -> Result<Self> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        let c: Checkpoint = serde_json::from_reader(f)?;
        if c.format != CHECKPOINT_FORMAT {
            return Err(Error::Config(format!("{} is not a field checkpoint", path.display())));
        }
        Ok(c)
    }
}
