//! Gaussian-state covariance-matrix algebra in shot-noise units.
//!
//! Quadratures are ordered `(x1, p1, x2, p2, ...)`, so every mode owns a
//! contiguous 2x2 block. Vacuum has covariance `I2`.

use std::fmt;

use nalgebra::{DMatrix, Matrix2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance for the symmetry check.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Smallest admissible eigenvalue of `gamma + i*Omega`.
pub const PHYSICALITY_TOL: f64 = 1e-9;
/// Tolerance on `S Omega S^T = Omega`.
pub const SYMPLECTIC_TOL: f64 = 1e-10;
/// Symplectic eigenvalues this far below one are clamped to one.
pub const CLAMP_TOL: f64 = 1e-6;

/// Identifies the physical role of one mode of a covariance matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "role", content = "index")]
pub enum ModeLabel {
    Alice,
    Bob(u32),
    /// A Bob mode after the trusted-detector beam splitter.
    DetectedBob(u32),
    /// Remaining Bobs folded into one mode by the reduction.
    CombinedRest,
    DetectorAncillaF(u32),
    DetectorAncillaG(u32),
    Environment(u32),
}

impl fmt::Display for ModeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModeLabel::Alice => write!(f, "A"),
            ModeLabel::Bob(i) => write!(f, "B{i}"),
            ModeLabel::DetectedBob(i) => write!(f, "B{i}^d"),
            ModeLabel::CombinedRest => write!(f, "B_R"),
            ModeLabel::DetectorAncillaF(i) => write!(f, "F{i}"),
            ModeLabel::DetectorAncillaG(i) => write!(f, "G{i}"),
            ModeLabel::Environment(i) => write!(f, "E{i}"),
        }
    }
}

/// Real symmetric `2n x 2n` covariance matrix with one label per mode.
#[derive(Debug, Clone, PartialEq)]
pub struct CovMatrix {
    entries: DMatrix<f64>,
    labels: Vec<ModeLabel>,
}

impl CovMatrix {
    pub fn new(entries: DMatrix<f64>, labels: Vec<ModeLabel>) -> Result<Self> {
        if !entries.is_square() {
            return Err(Error::DimensionMismatch {
                expected: entries.nrows(),
                actual: entries.ncols(),
            });
        }
        if entries.nrows() != 2 * labels.len() || labels.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: 2 * labels.len(),
                actual: entries.nrows(),
            });
        }
        for (k, label) in labels.iter().enumerate() {
            if labels[..k].contains(label) {
                return Err(Error::DuplicateMode(*label));
            }
        }
        let asym = asymmetry(&entries);
        if asym > SYMMETRY_TOL {
            return Err(Error::NotSymmetric(asym));
        }
        // Exact symmetry from here on.
        let entries = (&entries + entries.transpose()) * 0.5;
        Ok(Self { entries, labels })
    }

    /// Product of vacua on the given modes.
    pub fn vacuum(labels: Vec<ModeLabel>) -> Result<Self> {
        let n = labels.len();
        Self::new(DMatrix::identity(2 * n, 2 * n), labels)
    }

    /// Single-mode thermal state `V * I2`.
    pub fn thermal(label: ModeLabel, variance: f64) -> Result<Self> {
        if !(variance >= 1.0) {
            return Err(Error::Domain(format!("thermal variance {variance} < 1")));
        }
        Self::new(DMatrix::identity(2, 2) * variance, vec![label])
    }

    pub fn n_modes(&self) -> usize {
        self.labels.len()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn labels(&self) -> &[ModeLabel] {
        &self.labels
    }

    pub fn into_entries(self) -> DMatrix<f64> {
        self.entries
    }

    pub fn contains(&self, label: ModeLabel) -> bool {
        self.labels.contains(&label)
    }

    pub fn index_of(&self, label: ModeLabel) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| *l == label)
            .ok_or(Error::UnknownMode(label))
    }

    /// 2x2 block between the modes at positions `i` and `j`.
    pub fn block(&self, i: usize, j: usize) -> Matrix2<f64> {
        self.entries.fixed_view::<2, 2>(2 * i, 2 * j).into_owned()
    }

    pub fn block_of(&self, a: ModeLabel, b: ModeLabel) -> Result<Matrix2<f64>> {
        Ok(self.block(self.index_of(a)?, self.index_of(b)?))
    }

    /// Quadrature-averaged correlation `(c_xx - c_pp) / 2` for blocks of the
    /// form `C * sigma_z`, as between Alice and a Bob.
    pub fn sigma_z_coefficient(&self, a: ModeLabel, b: ModeLabel) -> Result<f64> {
        let blk = self.block_of(a, b)?;
        Ok(0.5 * (blk[(0, 0)] - blk[(1, 1)]))
    }

    /// Quadrature-averaged correlation `(c_xx + c_pp) / 2` for blocks of the
    /// form `C * I2`, as between two Bobs.
    pub fn identity_coefficient(&self, a: ModeLabel, b: ModeLabel) -> Result<f64> {
        let blk = self.block_of(a, b)?;
        Ok(0.5 * (blk[(0, 0)] + blk[(1, 1)]))
    }

    pub fn relabel(&mut self, from: ModeLabel, to: ModeLabel) -> Result<()> {
        let idx = self.index_of(from)?;
        if from != to && self.contains(to) {
            return Err(Error::DuplicateMode(to));
        }
        self.labels[idx] = to;
        Ok(())
    }

    /// `self (+) other`, modes of `other` appended after those of `self`.
    pub fn direct_sum(&self, other: &CovMatrix) -> Result<CovMatrix> {
        let n = self.entries.nrows();
        let m = other.entries.nrows();
        let mut entries = DMatrix::zeros(n + m, n + m);
        entries.view_mut((0, 0), (n, n)).copy_from(&self.entries);
        entries.view_mut((n, n), (m, m)).copy_from(&other.entries);
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        CovMatrix::new(entries, labels)
    }

    /// Sub-matrix over `modes`, in the given order.
    pub fn select(&self, modes: &[ModeLabel]) -> Result<CovMatrix> {
        let idx = modes
            .iter()
            .map(|m| self.index_of(*m))
            .collect::<Result<Vec<_>>>()?;
        let k = idx.len();
        let mut entries = DMatrix::zeros(2 * k, 2 * k);
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                entries
                    .fixed_view_mut::<2, 2>(2 * a, 2 * b)
                    .copy_from(&self.block(i, j));
            }
        }
        CovMatrix::new(entries, modes.to_vec())
    }

    /// In-place beam splitter on the modes at positions `i` and `j`:
    /// `i' = sqrt(eta) i - sqrt(1-eta) j`, `j' = sqrt(1-eta) i + sqrt(eta) j`.
    /// Equivalent to [`apply_symplectic`] with a beam-splitter operator but
    /// touches only the affected rows and columns.
    pub(crate) fn mix_in_place(&mut self, i: usize, j: usize, eta: f64) {
        let a = eta.sqrt();
        let b = (1.0 - eta).sqrt();
        let dim = self.entries.nrows();
        for q in 0..2 {
            let (ri, rj) = (2 * i + q, 2 * j + q);
            for c in 0..dim {
                let xi = self.entries[(ri, c)];
                let xj = self.entries[(rj, c)];
                self.entries[(ri, c)] = a * xi - b * xj;
                self.entries[(rj, c)] = b * xi + a * xj;
            }
        }
        for q in 0..2 {
            let (ci, cj) = (2 * i + q, 2 * j + q);
            for r in 0..dim {
                let xi = self.entries[(r, ci)];
                let xj = self.entries[(r, cj)];
                self.entries[(r, ci)] = a * xi - b * xj;
                self.entries[(r, cj)] = b * xi + a * xj;
            }
        }
    }

    /// Scale every correlation of mode `i` by `sqrt(t)` and set its own block
    /// to `t * block + added * I2`.
    pub(crate) fn attenuate_in_place(&mut self, i: usize, t: f64, added: f64) {
        let s = t.sqrt();
        for q in 0..2 {
            self.entries.row_mut(2 * i + q).scale_mut(s);
            self.entries.column_mut(2 * i + q).scale_mut(s);
        }
        self.entries[(2 * i, 2 * i)] += added;
        self.entries[(2 * i + 1, 2 * i + 1)] += added;
    }

    /// Phase rotation by pi on mode `i` (`x -> -x`, `p -> -p`).
    pub(crate) fn flip_in_place(&mut self, i: usize) {
        for q in 0..2 {
            self.entries.row_mut(2 * i + q).neg_mut();
            self.entries.column_mut(2 * i + q).neg_mut();
        }
    }

    pub(crate) fn set_block(&mut self, i: usize, j: usize, blk: &Matrix2<f64>) {
        self.entries.fixed_view_mut::<2, 2>(2 * i, 2 * j).copy_from(blk);
        if i != j {
            self.entries
                .fixed_view_mut::<2, 2>(2 * j, 2 * i)
                .copy_from(&blk.transpose());
        }
    }
}

fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let scale = m.amax().max(1.0);
    let mut worst = 0.0_f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst / scale
}

#[derive(Serialize, Deserialize)]
struct CovMatrixRepr {
    labels: Vec<ModeLabel>,
    entries: Vec<Vec<f64>>,
}

impl Serialize for CovMatrix {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let entries = self
            .entries
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect();
        CovMatrixRepr {
            labels: self.labels.clone(),
            entries,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for CovMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = CovMatrixRepr::deserialize(deserializer)?;
        let n = repr.entries.len();
        if repr.entries.iter().any(|r| r.len() != n) {
            return Err(serde::de::Error::custom("covariance matrix rows must be square"));
        }
        let entries = DMatrix::from_fn(n, n, |i, j| repr.entries[i][j]);
        CovMatrix::new(entries, repr.labels).map_err(serde::de::Error::custom)
    }
}

/// Linear symplectic transformation on quadratures.
#[derive(Debug, Clone, PartialEq)]
pub struct SymplecticOp {
    matrix: DMatrix<f64>,
    description: String,
}

impl SymplecticOp {
    pub fn new(matrix: DMatrix<f64>, description: impl Into<String>) -> Result<Self> {
        let dim = matrix.nrows();
        if !matrix.is_square() || dim % 2 != 0 || dim == 0 {
            return Err(Error::DimensionMismatch {
                expected: dim + dim % 2,
                actual: matrix.ncols(),
            });
        }
        let omega = symplectic_form(dim / 2);
        let defect = (&matrix * &omega * matrix.transpose() - &omega).amax();
        if defect > SYMPLECTIC_TOL {
            return Err(Error::Domain(format!(
                "matrix is not symplectic (defect {defect:e})"
            )));
        }
        Ok(Self {
            matrix,
            description: description.into(),
        })
    }

    pub fn identity(n_modes: usize) -> Self {
        Self {
            matrix: DMatrix::identity(2 * n_modes, 2 * n_modes),
            description: "identity".into(),
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    /// `self` followed by `next`.
    pub fn then(&self, next: &SymplecticOp) -> Result<SymplecticOp> {
        if self.matrix.nrows() != next.matrix.nrows() {
            return Err(Error::DimensionMismatch {
                expected: self.matrix.nrows(),
                actual: next.matrix.nrows(),
            });
        }
        Ok(SymplecticOp {
            matrix: &next.matrix * &self.matrix,
            description: format!("{}; {}", self.description, next.description),
        })
    }
}

/// Standard symplectic form `Omega = (+)_n [[0, 1], [-1, 0]]`.
pub fn symplectic_form(n: usize) -> DMatrix<f64> {
    let mut omega = DMatrix::zeros(2 * n, 2 * n);
    for k in 0..n {
        omega[(2 * k, 2 * k + 1)] = 1.0;
        omega[(2 * k + 1, 2 * k)] = -1.0;
    }
    omega
}

/// Result of the uncertainty-principle check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Physicality {
    pub physical: bool,
    /// Smallest eigenvalue of `gamma + i*Omega`; negative values measure the violation.
    pub min_eigenvalue: f64,
}

impl Physicality {
    pub fn violation(&self) -> f64 {
        (-self.min_eigenvalue).max(0.0)
    }
}

pub fn is_physical(gamma: &CovMatrix) -> Physicality {
    physicality_of_entries(&gamma.entries).expect("CovMatrix is symmetric by construction")
}

/// Uncertainty check on a raw matrix. Rejects non-symmetric input.
pub fn physicality_of_entries(entries: &DMatrix<f64>) -> Result<Physicality> {
    if !entries.is_square() || entries.nrows() % 2 != 0 {
        return Err(Error::DimensionMismatch {
            expected: entries.nrows() + entries.nrows() % 2,
            actual: entries.ncols(),
        });
    }
    let asym = asymmetry(entries);
    if asym > SYMMETRY_TOL {
        return Err(Error::NotSymmetric(asym));
    }
    let omega = symplectic_form(entries.nrows() / 2);
    let herm = DMatrix::from_fn(entries.nrows(), entries.ncols(), |i, j| {
        Complex64::new(entries[(i, j)], omega[(i, j)])
    });
    let min_eigenvalue = herm.symmetric_eigenvalues().min();
    Ok(Physicality {
        physical: min_eigenvalue >= -PHYSICALITY_TOL,
        min_eigenvalue,
    })
}

/// `S gamma S^T`.
pub fn apply_symplectic(gamma: &CovMatrix, op: &SymplecticOp) -> Result<CovMatrix> {
    if op.matrix.nrows() != gamma.entries.nrows() {
        return Err(Error::DimensionMismatch {
            expected: gamma.entries.nrows(),
            actual: op.matrix.nrows(),
        });
    }
    let out = &op.matrix * &gamma.entries * op.matrix.transpose();
    let out = (&out + out.transpose()) * 0.5;
    CovMatrix::new(out, gamma.labels.clone())
}

/// Symplectic spectrum together with how much clamping was applied.
#[derive(Debug, Clone, PartialEq)]
pub struct SymplecticSpectrum {
    /// Ascending, one value per mode, all `>= 1`.
    pub values: Vec<f64>,
    /// Largest `1 - nu` that was clamped away.
    pub max_clamp: f64,
}

/// Symplectic eigenvalues via `gamma = L L^T`: the real antisymmetric matrix
/// `A = L^T Omega L` has eigenvalues `+-i nu`, so `nu^2` are the (doubly
/// degenerate) eigenvalues of the symmetric matrix `A^T A`.
pub fn symplectic_spectrum(gamma: &CovMatrix) -> Result<SymplecticSpectrum> {
    let n = gamma.n_modes();
    let chol = gamma.entries.clone().cholesky().ok_or_else(|| {
        let min_eig = gamma.entries.clone().symmetric_eigenvalues().min();
        Error::Numerical(format!(
            "covariance matrix is not positive definite (min eigenvalue {min_eig:e}, {n} modes)"
        ))
    })?;
    let l = chol.l();
    let a = l.transpose() * symplectic_form(n) * &l;
    let ata = a.transpose() * &a;
    let ata = (&ata + ata.transpose()) * 0.5;
    let mut squares: Vec<f64> = ata.symmetric_eigenvalues().iter().copied().collect();
    if squares.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!(
            "non-finite symplectic eigenvalue ({n} modes, max entry {:e})",
            gamma.entries.amax()
        )));
    }
    squares.sort_by(|x, y| x.total_cmp(y));
    let mut values = Vec::with_capacity(n);
    let mut max_clamp = 0.0_f64;
    for pair in squares.chunks(2) {
        let nu = (0.5 * (pair[0] + pair[1])).max(0.0).sqrt();
        if nu < 1.0 {
            let deficit = 1.0 - nu;
            if deficit > CLAMP_TOL {
                return Err(Error::NotPhysical(nu - 1.0));
            }
            max_clamp = max_clamp.max(deficit);
            values.push(1.0);
        } else {
            values.push(nu);
        }
    }
    if max_clamp > 0.0 {
        log::trace!("clamped symplectic eigenvalue by {max_clamp:e}");
    }
    Ok(SymplecticSpectrum { values, max_clamp })
}

pub fn symplectic_eigenvalues(gamma: &CovMatrix) -> Result<Vec<f64>> {
    Ok(symplectic_spectrum(gamma)?.values)
}

/// `G(x) = (x+1) log2(x+1) - x log2(x)`, with `G(0) = 0`.
pub fn g_function(x: f64) -> Result<f64> {
    if x.is_nan() || x < -1e-12 {
        return Err(Error::Domain(format!("G(x) undefined for x = {x}")));
    }
    if x <= 0.0 {
        return Ok(0.0);
    }
    Ok((x + 1.0) * (x + 1.0).log2() - x * x.log2())
}

/// Von Neumann entropy in bits: sum of `G((nu - 1) / 2)`.
pub fn von_neumann_entropy(gamma: &CovMatrix) -> Result<f64> {
    symplectic_eigenvalues(gamma)?
        .into_iter()
        .map(|nu| g_function(0.5 * (nu - 1.0)))
        .sum()
}

/// State of the remaining modes after heterodyne detection of `measured`:
/// `gamma_rest - sigma^T (gamma_m + I2)^{-1} sigma`.
pub fn heterodyne_condition(gamma: &CovMatrix, measured: ModeLabel) -> Result<CovMatrix> {
    let m = gamma.index_of(measured)?;
    if gamma.n_modes() < 2 {
        return Err(Error::Domain(
            "cannot condition a single-mode state on itself".into(),
        ));
    }
    let rest: Vec<ModeLabel> = gamma
        .labels
        .iter()
        .copied()
        .filter(|l| *l != measured)
        .collect();
    let rest_idx: Vec<usize> = (0..gamma.n_modes()).filter(|&k| k != m).collect();
    let k = rest_idx.len();

    let h = (gamma.block(m, m) + Matrix2::identity())
        .try_inverse()
        .ok_or_else(|| Error::Numerical(format!("gamma_{measured} + I2 is singular")))?;
    // sigma: 2 x 2k cross-covariance between the measured and remaining modes.
    let mut sigma = DMatrix::zeros(2, 2 * k);
    for (b, &j) in rest_idx.iter().enumerate() {
        sigma.fixed_view_mut::<2, 2>(0, 2 * b).copy_from(&gamma.block(m, j));
    }
    let h = DMatrix::from_column_slice(2, 2, h.as_slice());
    let correction = sigma.transpose() * h * &sigma;
    let base = gamma.select(&rest)?;
    let out = base.entries - correction;
    let out = (&out + out.transpose()) * 0.5;
    CovMatrix::new(out, rest)
}

/// Trace out the given modes.
pub fn drop_modes(gamma: &CovMatrix, modes: &[ModeLabel]) -> Result<CovMatrix> {
    for m in modes {
        gamma.index_of(*m)?;
    }
    let keep: Vec<ModeLabel> = gamma
        .labels
        .iter()
        .copied()
        .filter(|l| !modes.contains(l))
        .collect();
    if keep.is_empty() {
        return Err(Error::Domain("cannot drop every mode".into()));
    }
    gamma.select(&keep)
}
