//! Floquet quasi-energies computed two independent ways — eigenphases of the
//! single-period propagator, and diagonalization of the truncated
//! extended-space (harmonic) operator — plus Floquet dipole matrix elements
//! and enumeration of the response-function poles `ω = E_α − E_β + ℓΩ`.
//!
//! Quasi-energies are reported in GHz (ordinary frequency), folded to the
//! first zone `[−ω_d/2, +ω_d/2)`.

use ndarray::{s, Array1, Array2};
use ndarray_linalg::Eig;
use num_complex::Complex64 as C64;
use thiserror::Error;

use crate::evolve::{propagator_fn, EvolveError};
use crate::hilbert::{dagger, OperatorMatrix};
use crate::model::{angular, polarization_operator, static_hamiltonian, EnsembleSpec, ModelError};

#[derive(Debug, Error)]
pub enum FloquetError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Evolve(#[from] EvolveError),
    #[error(transparent)]
    Hilbert(#[from] crate::hilbert::HilbertError),
    #[error(transparent)]
    Linalg(#[from] ndarray_linalg::error::LinalgError),
    #[error("drive frequency must be positive, got {freq} GHz")]
    NonPositiveDriveFrequency { freq: f64 },
    #[error("harmonic cutoff must be at least 1")]
    CutoffTooSmall,
    #[error(
        "harmonic cutoff {cutoff} too small: a representative branch leaks \
         weight {edge_weight:.3e} into the outermost harmonic blocks (limit {limit:.1e}), \
         so branch identification would be a guess"
    )]
    BranchAmbiguity {
        cutoff: usize,
        edge_weight: f64,
        limit: f64,
    },
}

pub type Result<T> = std::result::Result<T, FloquetError>;

/// A strictly periodic cosine drive coupling as `−P̂ · (2πA) cos(2π f t + φ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CosineDrive {
    /// Drive frequency ω_d/2π in GHz.
    pub freq: f64,
    /// Drive amplitude A in GHz.
    pub amplitude: f64,
    /// Carrier phase in radians.
    pub phase: f64,
}

impl CosineDrive {
    pub fn new(freq: f64, amplitude: f64) -> Self {
        Self {
            freq,
            amplitude,
            phase: 0.0,
        }
    }

    /// Drive period T = 1/f in ns.
    pub fn period(&self) -> f64 {
        1.0 / self.freq
    }
}

/// Quasi-energy branches at one drive frequency.
#[derive(Debug, Clone)]
pub struct QuasiEnergySpectrum {
    /// Drive frequency Ω/2π in GHz.
    pub drive_freq: f64,
    /// 2^N quasi-energies in GHz, folded to `[−ω_d/2, ω_d/2)`, ascending.
    pub branches: Vec<f64>,
    /// Extended-space Floquet modes, when computed by that route.
    pub modes: Option<FloquetModes>,
}

/// Fourier components of the periodic Floquet modes:
/// `|u_α(t)⟩ = Σ_m e^{−imΩt} |u_α^m⟩`.
#[derive(Debug, Clone)]
pub struct FloquetModes {
    pub harmonic_cutoff: usize,
    pub block_dim: usize,
    /// `blocks[α][m + harmonic_cutoff]` is |u_α^m⟩.
    pub blocks: Vec<Vec<Array1<C64>>>,
}

/// Block-tridiagonal extended-space operator for a monochromatic drive:
/// diagonal blocks `H0 + mΩ`, off-diagonal blocks `V` and `V†` with
/// `V = −P̂·(2πA)/2·e^{iφ}`.
#[derive(Debug, Clone)]
pub struct ExtendedFloquetOperator {
    pub harmonic_cutoff: usize,
    pub block_dim: usize,
    pub matrix: Array2<C64>,
}

impl ExtendedFloquetOperator {
    pub fn assemble(
        ens: &EnsembleSpec,
        drive: &CosineDrive,
        harmonic_cutoff: usize,
    ) -> Result<Self> {
        if drive.freq <= 0.0 {
            return Err(FloquetError::NonPositiveDriveFrequency { freq: drive.freq });
        }
        if harmonic_cutoff < 1 {
            return Err(FloquetError::CutoffTooSmall);
        }
        let h0 = static_hamiltonian(ens)?.into_matrix();
        let pol = polarization_operator(ens)?.into_matrix();
        let v_scale = C64::from_polar(0.5 * angular(drive.amplitude), drive.phase) * -1.0;
        let v = pol.mapv(|z| z * v_scale);
        let v_dag = dagger(&v);
        let d = h0.nrows();
        let m_count = 2 * harmonic_cutoff + 1;
        let total = m_count * d;
        let omega_ang = angular(drive.freq);
        let mut matrix = Array2::<C64>::zeros((total, total));
        for i in 0..m_count {
            let m = i as isize - harmonic_cutoff as isize;
            let row = i * d;
            let mut block = h0.clone();
            for k in 0..d {
                block[(k, k)] += C64::new(m as f64 * omega_ang, 0.0);
            }
            matrix
                .slice_mut(s![row..row + d, row..row + d])
                .assign(&block);
            if i + 1 < m_count {
                let col = (i + 1) * d;
                matrix.slice_mut(s![row..row + d, col..col + d]).assign(&v);
                matrix
                    .slice_mut(s![col..col + d, row..row + d])
                    .assign(&v_dag);
            }
        }
        Ok(Self {
            harmonic_cutoff,
            block_dim: d,
            matrix,
        })
    }

    pub fn total_dim(&self) -> usize {
        (2 * self.harmonic_cutoff + 1) * self.block_dim
    }

    /// Largest entry outside the block-tridiagonal band (zero by assembly).
    pub fn off_band_max(&self) -> f64 {
        let d = self.block_dim;
        let m_count = 2 * self.harmonic_cutoff + 1;
        let mut worst = 0.0f64;
        for bi in 0..m_count {
            for bj in 0..m_count {
                if bi.abs_diff(bj) <= 1 {
                    continue;
                }
                let block = self
                    .matrix
                    .slice(s![bi * d..(bi + 1) * d, bj * d..(bj + 1) * d]);
                for z in block.iter() {
                    worst = worst.max(z.norm());
                }
            }
        }
        worst
    }
}

/// Fold an energy in GHz to the first Floquet zone `[−f/2, f/2)`.
pub fn fold_to_zone(e_ghz: f64, drive_freq: f64) -> f64 {
    let mut x = e_ghz - drive_freq * (e_ghz / drive_freq).round();
    if x >= 0.5 * drive_freq {
        x -= drive_freq;
    }
    if x < -0.5 * drive_freq {
        x += drive_freq;
    }
    x
}

/// Quasi-energies from the single-period propagator: diagonalize `U(T)` and
/// take `E_α = −arg(λ_α)/(2πT)`, folded to the zone and sorted ascending.
///
/// `tol` is the delivered propagator accuracy; the eigenphases inherit it.
pub fn quasi_energies_monodromy(
    ens: &EnsembleSpec,
    drive: &CosineDrive,
    tol: f64,
) -> Result<QuasiEnergySpectrum> {
    if drive.freq <= 0.0 {
        return Err(FloquetError::NonPositiveDriveFrequency { freq: drive.freq });
    }
    let period = drive.period();
    let h0 = static_hamiltonian(ens)?.into_matrix();
    let pol = polarization_operator(ens)?.into_matrix();
    let amp_ang = angular(drive.amplitude);
    let freq_ang = angular(drive.freq);
    let phase = drive.phase;
    let h = move |t: f64| {
        let field = amp_ang * (freq_ang * t + phase).cos();
        let mut ht = h0.clone();
        ht.scaled_add(C64::new(-field, 0.0), &pol);
        ht
    };
    let u = propagator_fn(&h, ens.dim(), &[0.0, period], tol)?;
    let (eigvals, _) = u.matrix().eig()?;
    let mut branches: Vec<f64> = eigvals
        .iter()
        .map(|lambda| fold_to_zone(-lambda.arg() / (std::f64::consts::TAU * period), drive.freq))
        .collect();
    branches.sort_by(f64::total_cmp);
    Ok(QuasiEnergySpectrum {
        drive_freq: drive.freq,
        branches,
        modes: None,
    })
}

/// Extended-space result: the representative spectrum plus the selection
/// weights that certify it.
#[derive(Debug, Clone)]
pub struct ExtendedResult {
    pub spectrum: QuasiEnergySpectrum,
    pub harmonic_cutoff: usize,
    /// Smallest dominant-block weight among the selected representatives.
    /// Near 1 for weak drives; drops to ~0.5 under resonant dressing, where
    /// weight is genuinely shared between adjacent harmonic blocks.
    pub min_selected_weight: f64,
    /// Largest weight a selected branch leaks into its two outermost
    /// harmonic blocks; the truncation-convergence figure of merit.
    pub max_edge_weight: f64,
}

/// A representative branch leaking more than this into the outermost blocks
/// means the harmonic truncation has distorted it.
const EDGE_WEIGHT_LIMIT: f64 = 1e-10;

/// Quasi-energies from the truncated extended-space operator. The 2^N
/// representative branches are the eigenvalues nearest the zone center; if
/// any of their eigenvectors carries appreciable weight in the outermost
/// harmonic blocks the cutoff is too small and an error is returned rather
/// than a guess.
pub fn quasi_energies_extended(
    ens: &EnsembleSpec,
    drive: &CosineDrive,
    harmonic_cutoff: usize,
) -> Result<ExtendedResult> {
    let ext = ExtendedFloquetOperator::assemble(ens, drive, harmonic_cutoff)?;
    let d = ext.block_dim;
    let m = ext.harmonic_cutoff;
    let (vals, vecs) = crate::hilbert::eigh_hermitian(&ext.matrix)?;

    let mut by_center: Vec<usize> = (0..vals.len()).collect();
    by_center.sort_by(|&a, &b| vals[a].abs().total_cmp(&vals[b].abs()));
    let selected = &by_center[..d];

    let block_weight = |k: usize, block: usize| -> f64 {
        vecs.column(k)
            .slice(s![block * d..(block + 1) * d])
            .iter()
            .map(|z| z.norm_sqr())
            .sum()
    };
    // Dominant block per representative: Floquet modes are defined modulo
    // (E → E + kΩ, u^m → u^{m+k}), so gauge-fix each one by centering its
    // dominant block at m = 0. Ties (exact resonant sharing) go to the block
    // nearest the center.
    let dominant_block = |k: usize| -> usize {
        let mut best = (f64::NEG_INFINITY, 0usize);
        for block in 0..2 * m + 1 {
            let w = block_weight(k, block);
            let closer =
                w > best.0 + 1e-12 || (w > best.0 - 1e-12 && block.abs_diff(m) < best.1.abs_diff(m));
            if closer {
                best = (w, block);
            }
        }
        best.1
    };

    let mut min_selected = f64::INFINITY;
    let mut max_edge: f64 = 0.0;
    let mut shifts = Vec::with_capacity(d);
    for &k in selected {
        let b_star = dominant_block(k);
        shifts.push(b_star as isize - m as isize);
        min_selected = min_selected.min(block_weight(k, b_star));
        let edge = block_weight(k, 0)
            + block_weight(k, 1)
            + block_weight(k, 2 * m - 1)
            + block_weight(k, 2 * m);
        max_edge = max_edge.max(edge);
    }
    if max_edge > EDGE_WEIGHT_LIMIT {
        return Err(FloquetError::BranchAmbiguity {
            cutoff: m,
            edge_weight: max_edge,
            limit: EDGE_WEIGHT_LIMIT,
        });
    }

    let mut picks: Vec<(f64, usize, isize)> = selected
        .iter()
        .zip(shifts)
        .map(|(&k, shift)| {
            let e_ghz = vals[k] / std::f64::consts::TAU;
            (fold_to_zone(e_ghz, drive.freq), k, shift)
        })
        .collect();
    picks.sort_by(|a, b| a.0.total_cmp(&b.0));

    let blocks: Vec<Vec<Array1<C64>>> = picks
        .iter()
        .map(|&(_, k, shift)| {
            let col = vecs.column(k);
            (0..2 * m + 1)
                .map(|i| {
                    let src = i as isize + shift;
                    if (0..(2 * m + 1) as isize).contains(&src) {
                        let src = src as usize;
                        col.slice(s![src * d..(src + 1) * d]).to_owned()
                    } else {
                        Array1::zeros(d)
                    }
                })
                .collect()
        })
        .collect();

    Ok(ExtendedResult {
        spectrum: QuasiEnergySpectrum {
            drive_freq: drive.freq,
            branches: picks.iter().map(|(e, _, _)| *e).collect(),
            modes: Some(FloquetModes {
                harmonic_cutoff: m,
                block_dim: d,
                blocks,
            }),
        },
        harmonic_cutoff: m,
        min_selected_weight: min_selected,
        max_edge_weight: max_edge,
    })
}

/// Branch drift as the harmonic cutoff grows; each entry is the folded
/// spectrum at that cutoff.
pub fn extended_convergence(
    ens: &EnsembleSpec,
    drive: &CosineDrive,
    cutoffs: &[usize],
) -> Result<Vec<(usize, Vec<f64>)>> {
    cutoffs
        .iter()
        .map(|&m| {
            Ok((
                m,
                quasi_energies_extended(ens, drive, m)?.spectrum.branches,
            ))
        })
        .collect()
}

/// Floquet dipole matrix elements
/// `d^m_{αβ} = (1/T)∫ e^{imΩt} ⟨u_α(t)|P̂|u_β(t)⟩ dt = Σ_p ⟨u_α^p|P̂|u_β^{p+m}⟩`.
#[derive(Debug, Clone)]
pub struct FloquetDipoleElements {
    pub m_max: usize,
    /// `elements[m + m_max]` is the branch-indexed matrix d^m.
    pub elements: Vec<Array2<C64>>,
}

impl FloquetDipoleElements {
    pub fn get(&self, m: i32, alpha: usize, beta: usize) -> C64 {
        let idx = (m + self.m_max as i32) as usize;
        self.elements[idx][(alpha, beta)]
    }

    pub fn in_range(&self, m: i32) -> bool {
        m.unsigned_abs() as usize <= self.m_max
    }
}

pub fn floquet_dipole_elements(
    modes: &FloquetModes,
    polarization: &OperatorMatrix,
    m_max: usize,
) -> Result<FloquetDipoleElements> {
    if polarization.dim() != modes.block_dim {
        return Err(FloquetError::Hilbert(
            crate::hilbert::HilbertError::DimensionMismatch {
                left: polarization.dim(),
                right: modes.block_dim,
            },
        ));
    }
    let n_branches = modes.blocks.len();
    let cutoff = modes.harmonic_cutoff as i32;
    let p = polarization.matrix();
    let mut elements = Vec::with_capacity(2 * m_max + 1);
    for m in -(m_max as i32)..=(m_max as i32) {
        let mut mat = Array2::<C64>::zeros((n_branches, n_branches));
        for alpha in 0..n_branches {
            for beta in 0..n_branches {
                let mut acc = C64::new(0.0, 0.0);
                for p_idx in -cutoff..=cutoff {
                    let q_idx = p_idx + m;
                    if q_idx < -cutoff || q_idx > cutoff {
                        continue;
                    }
                    let up = &modes.blocks[alpha][(p_idx + cutoff) as usize];
                    let uq = &modes.blocks[beta][(q_idx + cutoff) as usize];
                    let pu = p.dot(uq);
                    acc += up
                        .iter()
                        .zip(pu.iter())
                        .map(|(a, b)| a.conj() * b)
                        .sum::<C64>();
                }
                mat[(alpha, beta)] = acc;
            }
        }
        elements.push(mat);
    }
    Ok(FloquetDipoleElements { m_max, elements })
}

/// One pole of the dipole response function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResponsePole {
    /// Pole frequency `E_α − E_β + ℓ·ω_d` in GHz.
    pub freq: f64,
    pub branch_pair: (usize, usize),
    /// Sideband index ℓ.
    pub sideband: i32,
    /// Relative residue weight (see [`response_poles`]).
    pub weight: f64,
}

#[derive(Debug, Clone)]
pub struct ResponsePoleSet {
    pub poles: Vec<ResponsePole>,
    /// Broadening η in GHz, carried for downstream line-shape use.
    pub eta: f64,
}

/// Weight floor below which poles are dropped.
const POLE_WEIGHT_FLOOR: f64 = 1e-12;

/// Enumerate response poles `ω = E_α − E_β + ℓΩ` for ℓ in `l_range`, with
/// relative weight `|d^ℓ_{αβ}| · Σ_k |d^{k−ℓ}_{βα}|` aggregated over harmonic
/// offsets `k = m − n` with `|k| ≤ k_window`. The stationary-response window
/// `k_window = 0` reduces the weight to `|d^ℓ_{αβ}|²`.
///
/// Only relative weights are meaningful: the residues of the full response
/// function also carry steady-state occupation factors that this enumeration
/// does not attempt to model.
pub fn response_poles(
    spectrum: &QuasiEnergySpectrum,
    elements: &FloquetDipoleElements,
    l_range: std::ops::RangeInclusive<i32>,
    k_window: usize,
    eta: f64,
) -> ResponsePoleSet {
    let n = spectrum.branches.len();
    let mut poles = Vec::new();
    for l in l_range {
        if !elements.in_range(l) {
            continue;
        }
        for alpha in 0..n {
            for beta in 0..n {
                let lead = elements.get(l, alpha, beta).norm();
                if lead == 0.0 {
                    continue;
                }
                let mut partner = 0.0;
                for k in -(k_window as i32)..=(k_window as i32) {
                    let idx = k - l;
                    if elements.in_range(idx) {
                        partner += elements.get(idx, beta, alpha).norm();
                    }
                }
                let weight = lead * partner;
                if weight < POLE_WEIGHT_FLOOR {
                    continue;
                }
                poles.push(ResponsePole {
                    freq: spectrum.branches[alpha] - spectrum.branches[beta]
                        + l as f64 * spectrum.drive_freq,
                    branch_pair: (alpha, beta),
                    sideband: l,
                    weight,
                });
            }
        }
    }
    poles.sort_by(|a, b| a.freq.total_cmp(&b.freq));
    ResponsePoleSet { poles, eta }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::eigh_hermitian;
    use crate::model::TlsParams;
    use approx::assert_abs_diff_eq;
    use ndarray::Array2 as A2;

    fn fig_pair() -> EnsembleSpec {
        EnsembleSpec::pair(3.0, 4.0, 0.05, 0.0).unwrap()
    }

    fn folded_h0_eigs(ens: &EnsembleSpec, freq: f64) -> Vec<f64> {
        let h0 = static_hamiltonian(ens).unwrap();
        let (vals, _) = h0.eigh().unwrap();
        let mut folded: Vec<f64> = vals
            .iter()
            .map(|&v| fold_to_zone(v / std::f64::consts::TAU, freq))
            .collect();
        folded.sort_by(f64::total_cmp);
        folded
    }

    #[test]
    fn monodromy_undriven_limit_matches_folded_h0() {
        let ens = fig_pair();
        let drive = CosineDrive::new(3.7, 0.0);
        let spec = quasi_energies_monodromy(&ens, &drive, 1e-10).unwrap();
        let expect = folded_h0_eigs(&ens, 3.7);
        for (got, want) in spec.branches.iter().zip(expect.iter()) {
            assert_abs_diff_eq!(*got, *want, epsilon = 1e-10);
        }
    }

    #[test]
    fn extended_undriven_limit_matches_folded_h0() {
        let ens = fig_pair();
        let drive = CosineDrive::new(3.7, 0.0);
        let res = quasi_energies_extended(&ens, &drive, 8).unwrap();
        let expect = folded_h0_eigs(&ens, 3.7);
        for (got, want) in res.spectrum.branches.iter().zip(expect.iter()) {
            assert_abs_diff_eq!(*got, *want, epsilon = 1e-10);
        }
        assert!(res.min_selected_weight > 0.999);
    }

    #[test]
    fn resonant_rabi_splitting_single_spin() {
        // Weak resonant drive: the branch gap, taken modulo the drive
        // frequency (the dressed pair straddles the zone edge), equals the
        // Rabi rate A up to Bloch–Siegert-scale corrections.
        let ens = EnsembleSpec::uncoupled(&[4.0], 0.0).unwrap();
        let a = 0.01;
        let drive = CosineDrive::new(4.0, a);
        let mono = quasi_energies_monodromy(&ens, &drive, 1e-11).unwrap();
        let gap = fold_to_zone(mono.branches[1] - mono.branches[0], drive.freq).abs();
        assert!((gap - a).abs() < 0.05 * a, "gap {gap} vs Rabi {a}");

        let ext = quasi_energies_extended(&ens, &drive, 15).unwrap();
        for (m, e) in mono.branches.iter().zip(ext.spectrum.branches.iter()) {
            assert_abs_diff_eq!(*m, *e, epsilon = 1e-6 * drive.freq);
        }
    }

    #[test]
    fn too_small_cutoff_is_reported_not_guessed() {
        let ens = EnsembleSpec::uncoupled(&[4.0], 0.0).unwrap();
        let drive = CosineDrive::new(4.0, 1.5);
        assert!(matches!(
            quasi_energies_extended(&ens, &drive, 1),
            Err(FloquetError::BranchAmbiguity { .. })
        ));
    }

    #[test]
    fn dual_method_agreement_battery() {
        // N ≤ 2, A/2π ≤ 200 MHz battery of deterministic cases.
        let cases: [(&[f64], f64, f64, f64); 5] = [
            (&[4.0], 0.0, 3.1, 0.15),
            (&[4.0], 0.0, 4.6, 0.2),
            (&[3.2, 4.4], 0.03, 3.9, 0.1),
            (&[3.5, 3.8], -0.04, 4.9, 0.2),
            (&[4.0, 4.1], 0.05, 4.05, 0.12),
        ];
        for (freqs, j, wd, a) in cases {
            let ens = if freqs.len() == 2 {
                EnsembleSpec::pair(freqs[0], freqs[1], j, 0.0).unwrap()
            } else {
                EnsembleSpec::uncoupled(freqs, 0.0).unwrap()
            };
            let drive = CosineDrive::new(wd, a);
            let mono = quasi_energies_monodromy(&ens, &drive, 1e-10).unwrap();
            let ext = quasi_energies_extended(&ens, &drive, 15).unwrap();
            let tol = (1e-6 * wd).max(10.0 * 1e-10);
            for (m, e) in mono.branches.iter().zip(ext.spectrum.branches.iter()) {
                assert!(
                    (m - e).abs() < tol,
                    "mismatch {m} vs {e} for ω_d = {wd}, A = {a}"
                );
            }
            for b in &mono.branches {
                assert!((-0.5 * wd..0.5 * wd).contains(b), "branch {b} out of zone");
            }
        }
    }

    #[test]
    fn cutoff_growth_leaves_weak_drive_branches_fixed() {
        let ens = fig_pair();
        let drive = CosineDrive::new(3.7, 0.1);
        let conv = extended_convergence(&ens, &drive, &[10, 20]).unwrap();
        let (m10, m20) = (&conv[0].1, &conv[1].1);
        for (a, b) in m10.iter().zip(m20.iter()) {
            assert!(
                (a - b).abs() < 1e-8,
                "branch drift {} from M=10 to M=20",
                (a - b).abs()
            );
        }
    }

    #[test]
    fn eigenphase_sum_matches_determinant() {
        let ens = fig_pair();
        let drive = CosineDrive::new(4.2, 0.15);
        let period = drive.period();
        let h0 = static_hamiltonian(&ens).unwrap().into_matrix();
        let pol = polarization_operator(&ens).unwrap().into_matrix();
        let h = |t: f64| {
            let field = angular(drive.amplitude) * (angular(drive.freq) * t).cos();
            let mut ht = h0.clone();
            ht.scaled_add(C64::new(-field, 0.0), &pol);
            ht
        };
        let u = propagator_fn(&h, 4, &[0.0, period], 1e-11).unwrap();
        let (eigvals, _) = u.matrix().eig().unwrap();
        let phase_sum: f64 = eigvals.iter().map(|l| -l.arg()).sum();
        let det = eigvals.iter().product::<C64>();
        // Σ(−arg λ) ≡ −arg(det U) (mod 2π)
        let diff = (phase_sum - (-det.arg())) / std::f64::consts::TAU;
        assert_abs_diff_eq!(diff, diff.round(), epsilon = 1e-9);
    }

    #[test]
    fn extended_operator_is_block_tridiagonal_and_hermitian() {
        let ens = fig_pair();
        let drive = CosineDrive {
            freq: 3.9,
            amplitude: 0.12,
            phase: 0.7,
        };
        let ext = ExtendedFloquetOperator::assemble(&ens, &drive, 6).unwrap();
        assert_eq!(ext.total_dim(), 13 * 4);
        assert_eq!(ext.off_band_max(), 0.0);
        assert!(crate::hilbert::hermiticity_error(&ext.matrix) < 1e-12);
    }

    #[test]
    fn dipole_elements_undriven_limits() {
        // Asymmetric TLS so the dipole has both diagonal and off-diagonal
        // structure in the energy eigenbasis.
        let ens = EnsembleSpec::new(
            vec![TlsParams::new(2.0, 3.0), TlsParams::new(1.0, 3.5)],
            A2::zeros((2, 2)),
            0.0,
        )
        .unwrap();
        let drive = CosineDrive::new(3.7, 0.0);
        let res = quasi_energies_extended(&ens, &drive, 5).unwrap();
        let modes = res.spectrum.modes.as_ref().unwrap();
        let pol = polarization_operator(&ens).unwrap();
        let elems = floquet_dipole_elements(modes, &pol, 3).unwrap();

        // m ≠ 0 elements vanish without a drive.
        for m in [-3, -2, -1, 1, 2, 3] {
            for a in 0..4 {
                for b in 0..4 {
                    assert!(elems.get(m, a, b).norm() < 1e-12);
                }
            }
        }

        // m = 0 elements match the bare dipole in the H0 eigenbasis, up to
        // eigenvector phases: compare magnitudes, matching branches through
        // their folded positions.
        let h0 = static_hamiltonian(&ens).unwrap();
        let (h0_vals, h0_vecs) = eigh_hermitian(h0.matrix()).unwrap();
        let folded: Vec<f64> = h0_vals
            .iter()
            .map(|&v| fold_to_zone(v / std::f64::consts::TAU, drive.freq))
            .collect();
        for (alpha, ea) in res.spectrum.branches.iter().enumerate() {
            let ia = folded
                .iter()
                .position(|f| (f - ea).abs() < 1e-9)
                .expect("matching H0 eigenvalue");
            for (beta, eb) in res.spectrum.branches.iter().enumerate() {
                let ib = folded.iter().position(|f| (f - eb).abs() < 1e-9).unwrap();
                let bare = h0_vecs
                    .column(ia)
                    .mapv(|z| z.conj())
                    .dot(&pol.matrix().dot(&h0_vecs.column(ib)));
                assert_abs_diff_eq!(
                    elems.get(0, alpha, beta).norm(),
                    bare.norm(),
                    epsilon = 1e-9
                );
            }
        }
    }

    #[test]
    fn dipole_sidebands_scale_linearly_with_amplitude() {
        let ens = fig_pair();
        let pol = polarization_operator(&ens).unwrap();
        let sideband_norm = |a: f64| {
            let drive = CosineDrive::new(3.7, a);
            let res = quasi_energies_extended(&ens, &drive, 12).unwrap();
            let modes = res.spectrum.modes.unwrap();
            let elems = floquet_dipole_elements(&modes, &pol, 2).unwrap();
            let mut total = 0.0;
            for alpha in 0..4 {
                for beta in 0..4 {
                    total += elems.get(1, alpha, beta).norm_sqr()
                        + elems.get(-1, alpha, beta).norm_sqr();
                }
            }
            total.sqrt()
        };
        let n1 = sideband_norm(0.002);
        let n2 = sideband_norm(0.004);
        let ratio = n2 / n1;
        assert!((ratio - 2.0).abs() < 0.05, "sideband scaling ratio {ratio}");
    }

    #[test]
    fn dipole_element_conjugation_symmetry() {
        let ens = fig_pair();
        let drive = CosineDrive::new(3.6, 0.15);
        let res = quasi_energies_extended(&ens, &drive, 10).unwrap();
        let modes = res.spectrum.modes.as_ref().unwrap();
        let pol = polarization_operator(&ens).unwrap();
        let elems = floquet_dipole_elements(modes, &pol, 4).unwrap();
        for m in -4..=4 {
            for a in 0..4 {
                for b in 0..4 {
                    let lhs = elems.get(m, a, b).conj();
                    let rhs = elems.get(-m, b, a);
                    assert!((lhs - rhs).norm() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn undriven_two_level_poles_at_bare_frequency() {
        // ω₁ = 0.4 GHz with ω_d = 1 GHz: no zone folding, so the only poles
        // sit at ±ω₁ with ℓ = 0.
        let ens = EnsembleSpec::uncoupled(&[0.4], 0.0).unwrap();
        let drive = CosineDrive::new(1.0, 0.0);
        let res = quasi_energies_extended(&ens, &drive, 5).unwrap();
        let modes = res.spectrum.modes.as_ref().unwrap();
        let pol = polarization_operator(&ens).unwrap();
        let elems = floquet_dipole_elements(modes, &pol, 3).unwrap();
        let poles = response_poles(&res.spectrum, &elems, -2..=2, 0, 1e-4);
        let freqs: Vec<f64> = poles.poles.iter().map(|p| p.freq).collect();
        assert_eq!(freqs.len(), 2);
        assert_abs_diff_eq!(freqs[0], -0.4, epsilon = 1e-9);
        assert_abs_diff_eq!(freqs[1], 0.4, epsilon = 1e-9);
        assert!(poles.poles.iter().all(|p| p.sideband == 0));
    }

    #[test]
    fn driven_sideband_pole_weight_scales_quadratically() {
        let ens = EnsembleSpec::uncoupled(&[0.4], 0.0).unwrap();
        let weight_at = |a: f64| {
            let drive = CosineDrive::new(1.0, a);
            let res = quasi_energies_extended(&ens, &drive, 12).unwrap();
            let modes = res.spectrum.modes.as_ref().unwrap();
            let pol = polarization_operator(&ens).unwrap();
            let elems = floquet_dipole_elements(modes, &pol, 3).unwrap();
            let poles = response_poles(&res.spectrum, &elems, -1..=1, 0, 1e-4);
            poles
                .poles
                .iter()
                .filter(|p| p.sideband == 1)
                .map(|p| p.weight)
                .sum::<f64>()
        };
        let w1 = weight_at(0.004);
        let w2 = weight_at(0.008);
        let ratio = w2 / w1;
        assert!((ratio - 4.0).abs() < 0.2, "sideband weight ratio {ratio}");
    }

    #[test]
    fn l_zero_reduces_to_quasi_energy_differences() {
        let ens = fig_pair();
        let drive = CosineDrive::new(3.8, 0.1);
        let res = quasi_energies_extended(&ens, &drive, 10).unwrap();
        let modes = res.spectrum.modes.as_ref().unwrap();
        let pol = polarization_operator(&ens).unwrap();
        let elems = floquet_dipole_elements(modes, &pol, 2).unwrap();
        let poles = response_poles(&res.spectrum, &elems, 0..=0, 0, 1e-4);
        assert!(!poles.poles.is_empty());
        for p in &poles.poles {
            let (a, b) = p.branch_pair;
            let expect = res.spectrum.branches[a] - res.spectrum.branches[b];
            assert_abs_diff_eq!(p.freq, expect, epsilon = 1e-12);
        }
    }
}
