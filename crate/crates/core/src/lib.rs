//! Simulator and analysis toolkit for pulsed driving of dipole-coupled
//! two-level-system (TLS) ensembles.
//!
//! The crate covers the full chain from a physical model to spectra:
//!
//! * [`hilbert`] — dense complex operator algebra on small multi-spin spaces;
//! * [`model`] — TLS parameters, dipole couplings, drive pulses, and the
//!   time-dependent Hamiltonian they assemble into;
//! * [`evolve`] — Lindblad time evolution with collective decay and
//!   unitary propagators;
//! * [`floquet`] — quasi-energies from the single-period propagator and from
//!   the truncated extended-space operator, plus response-pole enumeration;
//! * [`perturb`] — closed-form weak-drive amplitude for two coupled TLS and
//!   its numerical Dyson-series oracle;
//! * [`signal`] — homodyne synthesis/demodulation, phase FFTs, V-structure
//!   maps, slices, peak detection, and spectral-density estimation;
//! * [`experiments`] — named sweep recipes wiring the above end-to-end.
//!
//! Units: user-facing frequencies are ordinary frequencies in GHz, times are
//! in ns. Internally Hamiltonians are angular (rad/ns), so a quoted value
//! `f` GHz enters as `2π·f`.

pub mod evolve;
pub mod experiments;
pub mod floquet;
pub mod hilbert;
pub mod model;
pub mod ode;
pub mod perturb;
pub mod signal;

pub use ndarray;
pub use num_complex;
