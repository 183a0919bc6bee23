//! Link-level simulator and demodulation library for a multi-user wireless
//! receiver built from nitrogen-vacancy (NV) centers in fluorescent
//! nanodiamonds (FNDs).
//!
//! The crate is organised along the receive chain:
//!
//! * [`nvphys`] — deterministic ODMR response of FND clusters to superposed
//!   microwave tones under a static magnetic field,
//! * [`scene`] — random FND fields over a camera field of view and
//!   shot-noise-limited frame rendering,
//! * [`modem`] — bit-level source coding, per-user tone maps and the
//!   reference + data slot schedule,
//! * [`rxdetect`] — reference-bank MSE detection, ODMR sweeps and Lorentzian
//!   fitting, reference-free per-FND demodulation and analog calibration
//!   inversion,
//! * [`harness`] — experiment configuration, end-to-end pipelines, BER
//!   sweeps, capacity studies and file I/O.
//!
//! All randomness flows through [`seed`], so identical `(config, seed)`
//! pairs reproduce every output byte regardless of thread count.

pub mod harness;
pub mod modem;
pub mod nvphys;
pub mod rxdetect;
pub mod scene;
pub mod seed;
