//! Damped Newton on the discrete energy, with red-black nonlinear
//! Gauss-Seidel as fallback.

use faer::sparse::linalg::solvers::{Llt, SymbolicLlt};
use faer::sparse::{Pair, SparseColMat, SymbolicSparseColMat};
use faer::linalg::solvers::Solve;
use faer::{Mat, Side};
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::rod_structure::{axis_potential_u0, RodConfig};
use crate::target_geometry::{covector_norm, TargetPoint, TargetTangent};

use super::energy::{face_local, pack, unknown, unpack, Discretization, FaceLeft, HessianPattern, TWO_PI};
use super::state::FieldState;
use super::SolveParams;

const ARMIJO: f64 = 1e-4;

/// Iteration record shared by both methods.
#[derive(Debug, Clone, Default)]
pub struct History {
    pub energy: Vec<f64>,
    pub residual: Vec<f64>,
    pub newton_steps: usize,
    pub relaxation_sweeps: usize,
}

/// Pointwise tension recovered from the energy gradient:
/// `dF/dx_c = -4 pi V_c (g tau)_c`.
pub struct ResidualMap {
    u0: Vec<f64>,
    inv_weight: Vec<f64>,
}

impl ResidualMap {
    pub fn new(state: &FieldState, rods: &RodConfig) -> Result<Self> {
        let grid = &state.grid;
        let mut u0 = Vec::with_capacity(grid.active.len());
        let mut inv_weight = Vec::with_capacity(grid.active.len());
        for &id in &grid.active {
            u0.push(axis_potential_u0(rods, grid.centre(id))?);
            inv_weight.push(1.0 / (2.0 * TWO_PI * grid.volume(id)));
        }
        Ok(Self { u0, inv_weight })
    }

    /// Per active cell tension norm.
    pub fn norms(&self, state: &FieldState, g: &[f64]) -> Vec<f64> {
        let m = state.m();
        let k = state.k;
        state
            .grid
            .active
            .iter()
            .enumerate()
            .map(|(a, &id)| {
                let mut p = state.regular_point(id);
                p.u += self.u0[a];
                let r: Vec<f64> = g[a * m..(a + 1) * m].iter().map(|x| -x * self.inv_weight[a]).collect();
                covector_norm(&p, &TargetTangent::from_coords(k, &r))
            })
            .collect()
    }

    pub fn max(&self, state: &FieldState, g: &[f64]) -> f64 {
        self.norms(state, g).into_iter().fold(0.0, |a: f64, b| if b.is_nan() { f64::NAN } else { a.max(b) })
    }

    /// Map value at an active cell.
    pub fn point(&self, state: &FieldState, a: usize) -> TargetPoint {
        let mut p = state.regular_point(state.grid.active[a]);
        p.u += self.u0[a];
        p
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn failure(reason: impl Into<String>) -> Error {
    Error::SolverFailure { reason: reason.into() }
}

/// Sparse Cholesky of `H + mu diag(H)` on a fixed pattern.
struct Factorizer {
    n: usize,
    symbolic: SymbolicSparseColMat<usize>,
    argsort: faer::sparse::Argsort<usize>,
    llt_symbolic: SymbolicLlt<usize>,
    diag_slots: Vec<usize>,
}

impl Factorizer {
    fn new(pattern: &HessianPattern, n: usize) -> Result<Self> {
        let mut idx: Vec<Pair<usize, usize>> =
            pattern.entries.iter().map(|&(row, col)| Pair { row, col }).collect();
        idx.extend((0..n).map(|i| Pair { row: i, col: i }));
        let (symbolic, argsort) = SymbolicSparseColMat::try_new_from_indices(n, n, &idx)
            .map_err(|e| failure(format!("sparse pattern: {e:?}")))?;
        let llt_symbolic = SymbolicLlt::try_new(symbolic.as_ref(), Side::Lower)
            .map_err(|e| failure(format!("symbolic factorisation: {e:?}")))?;
        let diag_slots = pattern
            .entries
            .iter()
            .enumerate()
            .filter(|(_, (r, c))| r == c)
            .map(|(e, _)| e)
            .collect();
        Ok(Self { n, symbolic, argsort, llt_symbolic, diag_slots })
    }

    /// Solve `(H + mu D) d = -g`; `None` if the shifted matrix is not
    /// numerically positive definite.
    fn solve(&self, pattern: &HessianPattern, vals: &[f64], mu: f64, g: &[f64]) -> Option<Vec<f64>> {
        let mut diag = vec![0.0; self.n];
        for &e in &self.diag_slots {
            diag[pattern.entries[e].0] += vals[e];
        }
        let mut all = vals.to_vec();
        all.extend(diag.iter().map(|d| mu * d.abs().max(1e-300)));
        let mat = SparseColMat::new_from_argsort(self.symbolic.clone(), &self.argsort, &all).ok()?;
        let llt = Llt::try_new_with_symbolic(self.llt_symbolic.clone(), mat.as_ref(), Side::Lower).ok()?;
        let mut rhs = Mat::from_fn(self.n, 1, |i, _| -g[i]);
        llt.solve_in_place(&mut rhs);
        let d: Vec<f64> = (0..self.n).map(|i| rhs[(i, 0)]).collect();
        d.iter().all(|x| x.is_finite()).then_some(d)
    }
}

/// Energy at `x` written into a scratch copy of `state`.
fn energy_at(disc: &Discretization, scratch: &mut FieldState, x: &[f64]) -> f64 {
    unpack(x, scratch);
    disc.energy(&scratch.fields)
}

/// Damped Newton. Returns `Ok(true)` on convergence, `Ok(false)` if the
/// line search stalls before the tolerance is met.
pub fn newton(
    disc: &Discretization,
    state: &mut FieldState,
    res: &ResidualMap,
    params: &SolveParams,
    hist: &mut History,
) -> Result<bool> {
    let pattern = HessianPattern::new(disc, &state.grid);
    let n = state.grid.active.len() * disc.m();
    if n == 0 {
        return Ok(true);
    }
    let fac = Factorizer::new(&pattern, n)?;
    let mut x = pack(state);
    let mut scratch = state.clone();
    let mut best = f64::INFINITY;
    let mut since_best = 0usize;

    for _ in 0..params.max_iters {
        let (g, vals, f) = pattern.assemble(disc, state);
        let r = res.max(state, &g);
        if !f.is_finite() || r.is_nan() {
            return Err(failure("non-finite energy or residual"));
        }
        hist.energy.push(f);
        hist.residual.push(r);
        state.residual = r;
        if r <= params.tol {
            return Ok(true);
        }
        if r < best {
            best = r;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best > params.patience {
                return Err(failure(format!(
                    "residual has not improved on {best:.3e} for {} Newton steps",
                    params.patience
                )));
            }
        }

        let mut mu = 0.0;
        let mut accepted = false;
        for _attempt in 0..12 {
            let Some(d) = fac.solve(&pattern, &vals, mu, &g) else {
                mu = if mu == 0.0 { 1e-8 } else { mu * 10.0 };
                continue;
            };
            let slope = dot(&g, &d);
            if slope >= 0.0 {
                mu = if mu == 0.0 { 1e-8 } else { mu * 10.0 };
                continue;
            }
            let mut alpha = 1.0;
            for _ in 0..40 {
                let trial: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + alpha * b).collect();
                let ft = energy_at(disc, &mut scratch, &trial);
                // Near the minimum the decrease drops below rounding in F;
                // a full step is then taken if F does not visibly grow.
                let rounding = 64.0 * f64::EPSILON * f.abs().max(1e-300);
                if ft.is_finite() && (ft <= f + ARMIJO * alpha * slope || (alpha == 1.0 && ft <= f + rounding)) {
                    x = trial;
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if accepted {
                break;
            }
            mu = if mu == 0.0 { 1e-8 } else { mu * 10.0 };
        }
        if !accepted {
            return Ok(false);
        }
        unpack(&x, state);
        hist.newton_steps += 1;
        state.iterations += 1;
    }
    Ok(false)
}

/// Gradient and Hessian block of the energy in the unknowns of one cell.
fn cell_block(disc: &Discretization, state: &FieldState, cell: usize) -> (DVector<f64>, DMatrix<f64>) {
    let m = disc.m();
    let n = 2 * m;
    let (mut xl, mut xr) = (vec![0.0; m], vec![0.0; m]);
    let (mut lg, mut lh) = (vec![0.0; n], vec![0.0; n * n]);
    let mut g = DVector::zeros(m);
    let mut h = DMatrix::zeros(m, m);
    for &fi in &disc.cell_faces[cell] {
        let face = &disc.faces[fi];
        disc.gather(face, &state.fields, &mut xl, &mut xr);
        face_local(face, disc.k, &xl, &xr, &mut lg, &mut lh);
        let off = if face.right == cell { m } else { 0 };
        debug_assert!(off == m || face.left == FaceLeft::Cell(cell));
        for p in 0..m {
            g[p] += TWO_PI * lg[off + p];
            for q in 0..m {
                h[(p, q)] += TWO_PI * lh[(off + p) * n + off + q];
            }
        }
    }
    (g, h)
}

/// One red-black sweep of local Newton steps. Each accepted local step
/// lowers the total energy, since only faces touching the cell change.
pub fn relaxation_sweep(disc: &Discretization, state: &mut FieldState) -> Result<()> {
    let m = disc.m();
    for colour in 0..2 {
        for a in 0..state.grid.active.len() {
            let id = state.grid.active[a];
            let (i, j) = state.grid.ij(id);
            if (i + j) % 2 != colour {
                continue;
            }
            let (g, h) = cell_block(disc, state, id);
            let e0 = disc.local_energy(id, &state.fields);
            let old: Vec<f64> = (0..m).map(|f| state.fields[f][id]).collect();
            let mut mu = 0.0;
            let scale = (0..m).map(|p| h[(p, p)].abs()).fold(0.0, f64::max).max(1e-300);
            let mut done = false;
            for _ in 0..8 {
                let shifted = &h + DMatrix::identity(m, m) * (mu * scale);
                let Some(ch) = shifted.cholesky() else {
                    mu = if mu == 0.0 { 1e-10 } else { mu * 100.0 };
                    continue;
                };
                let d = ch.solve(&(-&g));
                let slope = g.dot(&d);
                let mut alpha = 1.0;
                for _ in 0..30 {
                    for f in 0..m {
                        state.fields[f][id] = old[f] + alpha * d[f];
                    }
                    let e1 = disc.local_energy(id, &state.fields);
                    if e1.is_finite() && e1 <= e0 + ARMIJO * alpha * slope.min(0.0) {
                        done = true;
                        break;
                    }
                    alpha *= 0.5;
                }
                if done {
                    break;
                }
                mu = if mu == 0.0 { 1e-10 } else { mu * 100.0 };
            }
            if !done {
                for f in 0..m {
                    state.fields[f][id] = old[f];
                }
            }
        }
    }
    state.check_finite()
}

/// Relaxation until the tolerance, the sweep budget, or stagnation.
pub fn relax(
    disc: &Discretization,
    state: &mut FieldState,
    res: &ResidualMap,
    params: &SolveParams,
    hist: &mut History,
) -> Result<bool> {
    let mut best = f64::INFINITY;
    let mut since_best = 0usize;
    for sweep in 0..params.max_sweeps {
        relaxation_sweep(disc, state)?;
        hist.relaxation_sweeps += 1;
        state.iterations += 1;
        if sweep % params.check_every == 0 || sweep + 1 == params.max_sweeps {
            let g = super::energy::gradient(disc, state);
            let r = res.max(state, &g);
            let f = disc.energy(&state.fields);
            if !f.is_finite() || r.is_nan() {
                return Err(failure("non-finite energy or residual during relaxation"));
            }
            hist.energy.push(f);
            hist.residual.push(r);
            state.residual = r;
            if r <= params.tol {
                return Ok(true);
            }
            if r < 0.999 * best {
                best = r;
                since_best = 0;
            } else {
                since_best += 1;
                if since_best > params.patience {
                    return Ok(false);
                }
            }
        }
    }
    Ok(false)
}

/// Unused unknown slots would break the Hessian pattern; every active cell
/// must touch at least one face.
pub fn check_coverage(disc: &Discretization, state: &FieldState) -> Result<()> {
    for &id in &state.grid.active {
        if disc.cell_faces[id].is_empty() || unknown(&state.grid, disc.m(), id, 0).is_none() {
            return Err(failure(format!("active cell {id} has no faces")));
        }
    }
    Ok(())
}
