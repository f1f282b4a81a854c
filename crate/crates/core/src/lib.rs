//! Modeling and analysis toolkit for flux-tunable superconducting resonators.
//!
//! The toolkit covers the full workflow for a quarter-wave coplanar-waveguide
//! resonator terminated to ground through an rf-SQUID:
//!
//! * [`cpw`] — transmission-line parameters of the bare waveguide from its
//!   cross-section, plus the weak-link feasibility check against the
//!   Ginzburg-Landau coherence length.
//! * [`squid`] — the self-consistent flux equation of the rf-SQUID, including
//!   the multivalued hysteretic branches above the screening threshold, and
//!   the flux-dependent load inductance seen by the resonator.
//! * [`resonator`] — input impedance of the loaded line, resonant-frequency
//!   extraction, flux-tuning curves, notch-type S21 synthesis and photon
//!   number calibration.
//! * [`fit`] — inverse problems: resonance-circle fitting of measured S21
//!   sweeps and model fits to measured tuning curves.
//! * [`noise`] — homodyne IQ analysis: circle calibration, quadrature
//!   decomposition, averaged-periodogram spectra and power-law
//!   characterization versus frequency, drive power and flux.
//!
//! All quantities are SI unless a unit suffix says otherwise; applied and
//! total flux are expressed in units of the flux quantum throughout.

pub mod constants;
pub mod cpw;
pub mod fit;
pub mod noise;
pub mod resonator;
pub mod squid;

pub use cpw::{CpwGeometry, NanobridgeParams, TransmissionLineModel};
pub use fit::{ComplexSweep, ResonanceFit, SweepMetadata, TuningFit};
pub use noise::{CircleCalibration, IqTimeSeries, SpectrumEstimate};
pub use resonator::{ResonatorModel, SweepBaseline, TuningCurve};
pub use squid::{FluxState, SquidParams};
