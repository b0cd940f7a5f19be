//! Fault classification of a UAV from its linearized dynamics.
//!
//! The rank tests decide controllable / observable. Whether the remaining
//! modes are stable (stabilizable / detectable) is an offline engineering
//! fact carried on the plant as a flag; [`LinearizedPlant::with_pbh_flags`]
//! derives those flags from the matrices when they are available.

use std::fmt;

use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative singular-value cutoff used for numerical rank.
pub const RANK_RTOL: f64 = 1e-10;

/// Linearization `dx = A x + B u`, `y = C x` around an equilibrium.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedPlant {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    pub stable_uncontrollable: bool,
    pub stable_unobservable: bool,
}

impl LinearizedPlant {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::Dimension(format!(
                "A must be square, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.nrows() != a.nrows() {
            return Err(Error::Dimension(format!(
                "B has {} rows, A has {}",
                b.nrows(),
                a.nrows()
            )));
        }
        if c.ncols() != a.ncols() {
            return Err(Error::Dimension(format!(
                "C has {} columns, A has {}",
                c.ncols(),
                a.ncols()
            )));
        }
        if a.nrows() == 0 {
            return Err(Error::Dimension("empty state vector".into()));
        }
        let finite = a.iter().chain(b.iter()).chain(c.iter()).all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidInput("plant matrices contain non-finite entries".into()));
        }
        Ok(Self {
            a,
            b,
            c,
            stable_uncontrollable: false,
            stable_unobservable: false,
        })
    }

    pub fn with_flags(mut self, stable_uncontrollable: bool, stable_unobservable: bool) -> Self {
        self.stable_uncontrollable = stable_uncontrollable;
        self.stable_unobservable = stable_unobservable;
        self
    }

    /// Replaces the declared flags with PBH eigenvalue tests
    /// (continuous time: a mode is stable iff `Re(λ) < 0`).
    pub fn with_pbh_flags(mut self) -> Self {
        self.stable_uncontrollable = pbh_stabilizable(&self.a, &self.b);
        self.stable_unobservable = pbh_detectable(&self.a, &self.c);
        self
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    /// Parses the plant file format: `a`, `b`, `c` as row-major arrays plus
    /// optional `stable_uncontrollable` / `stable_unobservable` flags.
    pub fn from_toml_str(text: &str) -> Result<(Self, PlantFileExtras)> {
        let file: PlantFile =
            toml::from_str(text).map_err(|e| Error::InvalidInput(format!("plant file: {e}")))?;
        let plant = Self::new(
            matrix_from_rows(&file.a, "A")?,
            matrix_from_rows(&file.b, "B")?,
            matrix_from_rows(&file.c, "C")?,
        )?;
        let plant = if file.derive_flags {
            plant.with_pbh_flags()
        } else {
            plant.with_flags(file.stable_uncontrollable, file.stable_unobservable)
        };
        Ok((plant, PlantFileExtras { camera_ok: file.camera_ok }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlantFileExtras {
    pub camera_ok: bool,
}

#[derive(Debug, Deserialize)]
struct PlantFile {
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    c: Vec<Vec<f64>>,
    #[serde(default)]
    stable_uncontrollable: bool,
    #[serde(default)]
    stable_unobservable: bool,
    #[serde(default)]
    derive_flags: bool,
    #[serde(default = "default_true")]
    camera_ok: bool,
}

fn default_true() -> bool {
    true
}

/// Builds a dense matrix from row-major nested vectors. A matrix with zero
/// columns (e.g. no inputs) is written as a list of empty rows.
pub fn matrix_from_rows(rows: &[Vec<f64>], name: &str) -> Result<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Dimension(format!("{name} has ragged rows")));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

/// `[B  AB  A²B … AⁿB]` with `n` the state dimension.
pub fn controllability_matrix(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let m = b.ncols();
    let mut q = DMatrix::zeros(n, m * (n + 1));
    let mut block = b.clone();
    for i in 0..=n {
        q.columns_mut(i * m, m).copy_from(&block);
        block = a * block;
    }
    q
}

/// `[C; CA; CA²; …; CAⁿ]` stacked row-wise.
pub fn observability_matrix(a: &DMatrix<f64>, c: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let p = c.nrows();
    let mut o = DMatrix::zeros(p * (n + 1), n);
    let mut block = c.clone();
    for i in 0..=n {
        o.rows_mut(i * p, p).copy_from(&block);
        block = block * a;
    }
    o
}

/// Numerical rank: singular values above `scale · σ_max · 1e-10`.
pub fn numerical_rank(m: &DMatrix<f64>, scale: usize) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.singular_values();
    let smax = sv.iter().cloned().fold(0.0_f64, f64::max);
    if smax == 0.0 {
        return 0;
    }
    let tol = scale.max(1) as f64 * smax * RANK_RTOL;
    sv.iter().filter(|&&s| s > tol).count()
}

pub fn controllability_rank(plant: &LinearizedPlant) -> usize {
    let q = controllability_matrix(&plant.a, &plant.b);
    numerical_rank(&q, plant.a.nrows().max(plant.b.ncols()))
}

pub fn observability_rank(plant: &LinearizedPlant) -> usize {
    let o = observability_matrix(&plant.a, &plant.c);
    numerical_rank(&o, plant.a.nrows().max(plant.c.nrows()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlClass {
    Controllable,
    Stabilizable,
    Unstabilizable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObserveClass {
    Observable,
    Detectable,
    Undetectable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Healthy,
    Mild,
    Severe,
}

/// Rows of the fault table, in index order 1..=9.
const FAULT_TABLE: [(ControlClass, ObserveClass); 9] = [
    (ControlClass::Controllable, ObserveClass::Observable),
    (ControlClass::Controllable, ObserveClass::Detectable),
    (ControlClass::Stabilizable, ObserveClass::Observable),
    (ControlClass::Stabilizable, ObserveClass::Detectable),
    (ControlClass::Controllable, ObserveClass::Undetectable),
    (ControlClass::Stabilizable, ObserveClass::Undetectable),
    (ControlClass::Unstabilizable, ObserveClass::Observable),
    (ControlClass::Unstabilizable, ObserveClass::Detectable),
    (ControlClass::Unstabilizable, ObserveClass::Undetectable),
];

/// Discrete fault state 1..=18: fault-table row, plus 9 when the camera has failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct FaultState(u8);

impl FaultState {
    pub const COUNT: usize = 18;
    pub const HEALTHY: FaultState = FaultState(1);

    pub fn new(index: u8) -> Result<Self> {
        if (1..=18).contains(&index) {
            Ok(Self(index))
        } else {
            Err(Error::InvalidInput(format!("fault index {index} outside 1..=18")))
        }
    }

    pub fn from_classes(ctrl: ControlClass, obs: ObserveClass, camera_ok: bool) -> Self {
        let row = FAULT_TABLE
            .iter()
            .position(|&(c, o)| c == ctrl && o == obs)
            .expect("fault table covers every class pair") as u8
            + 1;
        Self(if camera_ok { row } else { row + 9 })
    }

    pub fn index(self) -> u8 {
        self.0
    }

    /// Zero-based position, for state codecs.
    pub fn ordinal(self) -> usize {
        self.0 as usize - 1
    }

    pub fn from_ordinal(i: usize) -> Self {
        debug_assert!(i < 18);
        Self(i as u8 + 1)
    }

    pub fn table_row(self) -> u8 {
        (self.0 - 1) % 9 + 1
    }

    pub fn camera_ok(self) -> bool {
        self.0 <= 9
    }

    pub fn ctrl_class(self) -> ControlClass {
        FAULT_TABLE[self.table_row() as usize - 1].0
    }

    pub fn obs_class(self) -> ObserveClass {
        FAULT_TABLE[self.table_row() as usize - 1].1
    }

    pub fn severity(self) -> Severity {
        match self.0 {
            1 => Severity::Healthy,
            2..=4 => Severity::Mild,
            _ => Severity::Severe,
        }
    }

    pub fn is_healthy(self) -> bool {
        self.0 == 1
    }

    pub fn all() -> impl Iterator<Item = FaultState> {
        (1..=18).map(FaultState)
    }
}

impl TryFrom<u8> for FaultState {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        Self::new(v)
    }
}

impl From<FaultState> for u8 {
    fn from(f: FaultState) -> u8 {
        f.0
    }
}

impl fmt::Display for FaultState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

pub fn classify_fault(plant: &LinearizedPlant, camera_ok: bool) -> FaultState {
    let n = plant.state_dim();
    let ctrl = if controllability_rank(plant) == n {
        ControlClass::Controllable
    } else if plant.stable_uncontrollable {
        ControlClass::Stabilizable
    } else {
        ControlClass::Unstabilizable
    };
    let obs = if observability_rank(plant) == n {
        ObserveClass::Observable
    } else if plant.stable_unobservable {
        ObserveClass::Detectable
    } else {
        ObserveClass::Undetectable
    };
    FaultState::from_classes(ctrl, obs, camera_ok)
}

fn unstable_eigenvalues(a: &DMatrix<f64>) -> Vec<Complex<f64>> {
    a.complex_eigenvalues()
        .iter()
        .copied()
        .filter(|l| l.re >= -1e-9)
        .collect()
}

fn complex_rank(m: &DMatrix<Complex<f64>>, scale: usize) -> usize {
    let sv = m.clone().singular_values();
    let smax = sv.iter().cloned().fold(0.0_f64, f64::max);
    if smax == 0.0 {
        return 0;
    }
    let tol = scale.max(1) as f64 * smax * RANK_RTOL;
    sv.iter().filter(|&&s| s > tol).count()
}

/// PBH: `rank [λI − A, B] = n` for every eigenvalue with `Re λ ≥ 0`.
pub fn pbh_stabilizable(a: &DMatrix<f64>, b: &DMatrix<f64>) -> bool {
    let n = a.nrows();
    unstable_eigenvalues(a).into_iter().all(|lambda| {
        let mut m = DMatrix::<Complex<f64>>::zeros(n, n + b.ncols());
        for i in 0..n {
            for j in 0..n {
                let diag = if i == j { lambda } else { Complex::new(0.0, 0.0) };
                m[(i, j)] = diag - Complex::new(a[(i, j)], 0.0);
            }
            for j in 0..b.ncols() {
                m[(i, n + j)] = Complex::new(b[(i, j)], 0.0);
            }
        }
        complex_rank(&m, n.max(b.ncols())) == n
    })
}

/// Dual of [`pbh_stabilizable`]: `rank [λI − A; C] = n` on the unstable spectrum.
pub fn pbh_detectable(a: &DMatrix<f64>, c: &DMatrix<f64>) -> bool {
    pbh_stabilizable(&a.transpose(), &c.transpose())
}
