//! Deterministic ODMR response model for FND clusters.
//!
//! An NV ensemble under continuous optical pumping shows a fluorescence dip
//! when a microwave tone hits one of its ground-state spin transitions. With
//! a static field `B` along the NV axis the two transitions sit at
//! `D ± γ·B`; each dip is Lorentzian in frequency and its depth saturates
//! with microwave power. This module evaluates that response for arbitrary
//! superpositions of tones; everything here is a pure function of its
//! inputs.

use serde::{Deserialize, Serialize};

/// Zero-field splitting of the NV ground state, MHz.
pub const ZFS_MHZ: f64 = 2870.0;
/// Electron spin gyromagnetic ratio, MHz per gauss.
pub const GYROMAGNETIC_MHZ_PER_G: f64 = 2.8;

/// Spin-resonance parameters of one NV ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NvSpinModel {
    /// Zero-field splitting `D`, MHz.
    pub zfs_freq_mhz: f64,
    /// Gyromagnetic ratio `γ`, MHz/G.
    pub gyromagnetic_mhz_per_g: f64,
    /// ODMR full width at half maximum `Γ`, MHz.
    pub linewidth_fwhm_mhz: f64,
    /// Saturated contrast cap `C_max`, fraction in (0, 1).
    pub contrast_cap: f64,
    /// Microwave saturation power `P_sat`, mW.
    pub saturation_power_mw: f64,
}

impl Default for NvSpinModel {
    fn default() -> Self {
        Self {
            zfs_freq_mhz: ZFS_MHZ,
            gyromagnetic_mhz_per_g: GYROMAGNETIC_MHZ_PER_G,
            linewidth_fwhm_mhz: 10.0,
            contrast_cap: 0.05,
            saturation_power_mw: 1.0,
        }
    }
}

impl NvSpinModel {
    /// Check the model invariants, returning the offending field name.
    pub fn validate(&self) -> Result<(), &'static str> {
        if !(self.zfs_freq_mhz > 0.0) {
            return Err("zfs_freq_mhz");
        }
        if !(self.gyromagnetic_mhz_per_g > 0.0) {
            return Err("gyromagnetic_mhz_per_g");
        }
        if !(self.linewidth_fwhm_mhz > 0.0) {
            return Err("linewidth_fwhm_mhz");
        }
        if !(self.contrast_cap > 0.0 && self.contrast_cap < 1.0) {
            return Err("contrast_cap");
        }
        if !(self.saturation_power_mw > 0.0) {
            return Err("saturation_power_mw");
        }
        Ok(())
    }
}

/// One microwave tone: carrier frequency and transmit power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tone {
    /// Carrier frequency, MHz.
    pub freq_mhz: f64,
    /// Power, dBm.
    pub power_dbm: f64,
}

impl Tone {
    pub fn new(freq_mhz: f64, power_dbm: f64) -> Self {
        Self { freq_mhz, power_dbm }
    }

    /// Same carrier with the power shifted by `delta_db`.
    pub fn attenuated(self, delta_db: f64) -> Self {
        Self {
            freq_mhz: self.freq_mhz,
            power_dbm: self.power_dbm + delta_db,
        }
    }
}

/// Static magnetic field over the field of view: a uniform vector plus a
/// linear spatial gradient, `B(r) = B0 + G·r` with `r = (x, y)` in μm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MagneticFieldMap {
    /// Uniform component, gauss.
    pub uniform_field_g: [f64; 3],
    /// `gradient[i][j] = ∂B_i/∂r_j`, gauss per μm, `j ∈ {x, y}`.
    pub gradient_g_per_um: [[f64; 2]; 3],
}

impl MagneticFieldMap {
    /// No field anywhere.
    pub fn zero() -> Self {
        Self {
            uniform_field_g: [0.0; 3],
            gradient_g_per_um: [[0.0; 2]; 3],
        }
    }

    /// Uniform field with no gradient.
    pub fn uniform(field_g: [f64; 3]) -> Self {
        Self {
            uniform_field_g: field_g,
            gradient_g_per_um: [[0.0; 2]; 3],
        }
    }

    /// Field vector at a position in the focal plane.
    pub fn field_at(&self, position_um: [f64; 2]) -> [f64; 3] {
        let mut b = self.uniform_field_g;
        for i in 0..3 {
            b[i] += self.gradient_g_per_um[i][0] * position_um[0]
                + self.gradient_g_per_um[i][1] * position_um[1];
        }
        b
    }
}

/// One fluorescent nanodiamond cluster.
///
/// `axis_mixture` is empty for the default single-dominant-axis model; a
/// non-empty list of `(unit axis, weight)` pairs spreads the cluster's
/// response over several crystal axes (weights should sum to 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FndCluster {
    pub id: u32,
    /// Position in the field of view, μm.
    pub position_um: [f64; 2],
    /// Dominant NV axis, unit vector.
    pub nv_axis: [f64; 3],
    /// Expected photon rate at reference laser power, counts/ms.
    pub brightness_cpms: f64,
    pub spin_model: NvSpinModel,
    #[serde(default)]
    pub axis_mixture: Vec<([f64; 3], f64)>,
}

impl FndCluster {
    /// Iterate the cluster's `(axis, weight)` pairs. A single-axis cluster
    /// yields its dominant axis with weight 1.
    pub fn axes(&self) -> impl Iterator<Item = ([f64; 3], f64)> + '_ {
        let single = if self.axis_mixture.is_empty() {
            Some((self.nv_axis, 1.0))
        } else {
            None
        };
        single.into_iter().chain(self.axis_mixture.iter().copied())
    }

    pub fn validate(&self) -> Result<(), &'static str> {
        let n2: f64 = self.nv_axis.iter().map(|c| c * c).sum();
        if (n2.sqrt() - 1.0).abs() > 1e-9 {
            return Err("nv_axis");
        }
        if !(self.brightness_cpms > 0.0) {
            return Err("brightness_cpms");
        }
        for (axis, w) in &self.axis_mixture {
            let n2: f64 = axis.iter().map(|c| c * c).sum();
            if (n2.sqrt() - 1.0).abs() > 1e-9 || !(*w > 0.0) {
                return Err("axis_mixture");
            }
        }
        self.spin_model.validate()
    }
}

/// Convert dBm to milliwatts.
pub fn dbm_to_mw(power_dbm: f64) -> f64 {
    10f64.powf(power_dbm / 10.0)
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Absolute axial projection of the field onto an axis at a position, gauss.
pub fn axial_field_on_axis(map: &MagneticFieldMap, position_um: [f64; 2], axis: [f64; 3]) -> f64 {
    dot(map.field_at(position_um), axis).abs()
}

/// Absolute axial field seen by a cluster's dominant axis, gauss.
///
/// Transverse components are ignored: only `|B·n̂|` shifts the resonances.
pub fn axial_field(map: &MagneticFieldMap, cluster: &FndCluster) -> f64 {
    axial_field_on_axis(map, cluster.position_um, cluster.nv_axis)
}

/// Zeeman-split resonance pair `(D − γB, D + γB)`, MHz.
pub fn zeeman_peaks(model: &NvSpinModel, b_axial_g: f64) -> (f64, f64) {
    let shift = model.gyromagnetic_mhz_per_g * b_axial_g;
    (model.zfs_freq_mhz - shift, model.zfs_freq_mhz + shift)
}

/// Unit-height Lorentzian line shape: `(Γ/2)² / ((f − f0)² + (Γ/2)²)`.
///
/// Equals 1 at `f = f0` and 1/2 at `|f − f0| = Γ/2`.
pub fn lorentzian_dip(f_mhz: f64, f0_mhz: f64, fwhm_mhz: f64) -> f64 {
    let hw = fwhm_mhz / 2.0;
    let d = f_mhz - f0_mhz;
    hw * hw / (d * d + hw * hw)
}

/// ODMR contrast of a single tone at the given power.
///
/// Saturation law `C_max · s / (1 + s)` with `s = P/P_sat` in linear units:
/// linear at low drive, asymptoting to `C_max`, so resonant fluorescence
/// decreases monotonically with power.
pub fn contrast_at_power(power_dbm: f64, model: &NvSpinModel) -> f64 {
    let s = dbm_to_mw(power_dbm) / model.saturation_power_mw;
    model.contrast_cap * s / (1.0 + s)
}

/// Total fractional fluorescence dip of one cluster under a tone set.
///
/// Dips from every tone, Zeeman branch and crystal axis add, then clamp at
/// the cluster's contrast cap. At zero field both branches coincide, so a
/// resonant tone contributes twice its single-branch dip before clamping.
pub fn total_dip(cluster: &FndCluster, tones: &[Tone], field_map: &MagneticFieldMap) -> f64 {
    let model = &cluster.spin_model;
    let mut dip = 0.0;
    for (axis, weight) in cluster.axes() {
        let b = axial_field_on_axis(field_map, cluster.position_um, axis);
        let (f_minus, f_plus) = zeeman_peaks(model, b);
        for tone in tones {
            let c = contrast_at_power(tone.power_dbm, model);
            dip += weight
                * c
                * (lorentzian_dip(tone.freq_mhz, f_minus, model.linewidth_fwhm_mhz)
                    + lorentzian_dip(tone.freq_mhz, f_plus, model.linewidth_fwhm_mhz));
        }
    }
    dip.min(model.contrast_cap)
}

/// Expected photon rate of one cluster, counts/ms.
///
/// `brightness · laser_scale · (1 − total_dip)`.
pub fn cluster_fluorescence(
    cluster: &FndCluster,
    tones: &[Tone],
    field_map: &MagneticFieldMap,
    laser_scale: f64,
) -> f64 {
    cluster.brightness_cpms * laser_scale * (1.0 - total_dip(cluster, tones, field_map))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_cluster(axis: [f64; 3]) -> FndCluster {
        FndCluster {
            id: 0,
            position_um: [10.0, 20.0],
            nv_axis: axis,
            brightness_cpms: 1000.0,
            spin_model: NvSpinModel::default(),
            axis_mixture: Vec::new(),
        }
    }

    #[test]
    fn axial_field_zero_field() {
        let map = MagneticFieldMap::zero();
        assert_eq!(axial_field(&map, &test_cluster([0.0, 0.0, 1.0])), 0.0);
    }

    #[test]
    fn axial_field_aligned_and_orthogonal() {
        let map = MagneticFieldMap::uniform([0.0, 0.0, 10.0]);
        assert_eq!(axial_field(&map, &test_cluster([0.0, 0.0, 1.0])), 10.0);
        assert_eq!(axial_field(&map, &test_cluster([1.0, 0.0, 0.0])), 0.0);
    }

    #[test]
    fn axial_field_is_absolute_projection() {
        let map = MagneticFieldMap::uniform([0.0, 0.0, -10.0]);
        assert_eq!(axial_field(&map, &test_cluster([0.0, 0.0, 1.0])), 10.0);
    }

    #[test]
    fn field_map_is_exactly_linear() {
        let map = MagneticFieldMap {
            uniform_field_g: [1.0, 2.0, 3.0],
            gradient_g_per_um: [[0.1, 0.0], [0.0, 0.2], [0.023, 0.0]],
        };
        let b = map.field_at([10.0, 5.0]);
        assert_eq!(b[0], 1.0 + 0.1 * 10.0);
        assert_eq!(b[1], 2.0 + 0.2 * 5.0);
        assert_eq!(b[2], 3.0 + 0.023 * 10.0);
    }

    #[test]
    fn zeeman_peaks_degenerate_at_zero_field() {
        let m = NvSpinModel::default();
        assert_eq!(zeeman_peaks(&m, 0.0), (2870.0, 2870.0));
    }

    #[test]
    fn zeeman_peaks_direct_arithmetic() {
        let m = NvSpinModel::default();
        let (lo, hi) = zeeman_peaks(&m, 10.0);
        assert_eq!(lo, 2842.0);
        assert_eq!(hi, 2898.0);
        assert_eq!(hi - lo, 2.0 * 2.8 * 10.0);
    }

    #[test]
    fn zeeman_inversion_hits_2776_mhz() {
        // Field that moves the lower transition to 2776 MHz.
        let m = NvSpinModel::default();
        let b: f64 = (2870.0 - 2776.0) / 2.8;
        assert!((b - 33.5714285714).abs() < 1e-9);
        let (lo, _) = zeeman_peaks(&m, b);
        assert!((lo - 2776.0).abs() < 1e-9);
    }

    #[test]
    fn zeeman_midpoint_equals_zfs() {
        let m = NvSpinModel::default();
        for b in [0.0, 0.1, 3.3, 33.57, 100.0] {
            let (lo, hi) = zeeman_peaks(&m, b);
            assert!(((lo + hi) / 2.0 - m.zfs_freq_mhz).abs() < 1e-9);
        }
    }

    #[test]
    fn lorentzian_peak_and_half_width() {
        assert_eq!(lorentzian_dip(2870.0, 2870.0, 10.0), 1.0);
        assert!((lorentzian_dip(2875.0, 2870.0, 10.0) - 0.5).abs() < 1e-12);
        assert!((lorentzian_dip(2865.0, 2870.0, 10.0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn lorentzian_is_symmetric_and_peaked_only_at_center() {
        for delta in [0.01, 0.5, 3.0, 40.0] {
            let up = lorentzian_dip(2870.0 + delta, 2870.0, 10.0);
            let dn = lorentzian_dip(2870.0 - delta, 2870.0, 10.0);
            assert!((up - dn).abs() < 1e-12);
            assert!(up < 1.0);
        }
    }

    #[test]
    fn contrast_midpoint_at_saturation_power() {
        let m = NvSpinModel::default();
        // P_sat = 1 mW is 0 dBm.
        let c = contrast_at_power(0.0, &m);
        assert!((c - m.contrast_cap / 2.0).abs() < 1e-12);
    }

    #[test]
    fn contrast_vanishes_without_drive() {
        let m = NvSpinModel::default();
        assert!(contrast_at_power(-200.0, &m) < 1e-12);
    }

    #[test]
    fn contrast_strictly_increasing_and_bounded() {
        let m = NvSpinModel::default();
        let mut prev = 0.0;
        for i in 0..=60 {
            let p = -20.0 + 0.5 * i as f64;
            let c = contrast_at_power(p, &m);
            assert!(c > prev, "not increasing at {p} dBm");
            assert!(c > 0.0 && c < m.contrast_cap);
            prev = c;
        }
    }

    #[test]
    fn fluorescence_without_tones_is_full() {
        let c = test_cluster([0.0, 0.0, 1.0]);
        let map = MagneticFieldMap::zero();
        let rate = cluster_fluorescence(&c, &[], &map, 0.7);
        assert!((rate - 700.0).abs() < 1e-12);
    }

    #[test]
    fn resonant_tone_at_high_power_reaches_the_cap() {
        let c = test_cluster([0.0, 0.0, 1.0]);
        let map = MagneticFieldMap::uniform([0.0, 0.0, 10.0]);
        let (_, f_plus) = zeeman_peaks(&c.spin_model, 10.0);
        let rate = cluster_fluorescence(&c, &[Tone::new(f_plus, 70.0)], &map, 1.0);
        let floor = 1000.0 * (1.0 - c.spin_model.contrast_cap);
        assert!((rate - floor).abs() < 1e-6 * 1000.0);
    }

    #[test]
    fn far_off_resonant_tones_leave_fluorescence_intact() {
        let c = test_cluster([0.0, 0.0, 1.0]);
        let map = MagneticFieldMap::zero();
        // |f − f0| > 100·Γ, two tones; the Lorentzian tail bound
        // (Γ/2)²/(f−f0)² caps each dip term.
        let tones = [Tone::new(2870.0 + 1001.0, 10.0), Tone::new(2870.0 - 1500.0, 10.0)];
        let rate = cluster_fluorescence(&c, &tones, &map, 1.0);
        assert!(rate >= 0.999 * 1000.0);
    }

    #[test]
    fn fluorescence_bounded_and_monotone_in_power() {
        let c = test_cluster([0.0, 0.0, 1.0]);
        let map = MagneticFieldMap::zero();
        let mut prev = f64::INFINITY;
        for p in [-30.0, -20.0, -10.0, 0.0, 10.0, 20.0] {
            let rate = cluster_fluorescence(&c, &[Tone::new(2872.0, p)], &map, 1.0);
            assert!(rate >= 0.0 && rate <= 1000.0);
            assert!(rate <= prev, "fluorescence rose as power rose");
            prev = rate;
        }
    }

    #[test]
    fn right_slope_is_strictly_increasing_in_frequency() {
        // Frequency-demodulation region: (f_plus + 0.3Γ, f_plus + 2Γ).
        let c = test_cluster([0.0, 0.0, 1.0]);
        let map = MagneticFieldMap::uniform([0.0, 0.0, 20.0]);
        let m = &c.spin_model;
        let (_, f_plus) = zeeman_peaks(m, 20.0);
        let g = m.linewidth_fwhm_mhz;
        let mut prev = 0.0;
        for i in 0..=40 {
            let f = f_plus + 0.3 * g + (2.0 - 0.3) * g * i as f64 / 40.0;
            let rate = cluster_fluorescence(&c, &[Tone::new(f, 0.0)], &map, 1.0);
            assert!(rate > prev, "slope not increasing at {f} MHz");
            prev = rate;
        }
    }

    #[test]
    fn gradient_drift_matches_arithmetic() {
        // Two co-oriented clusters 18 μm apart along a 0.023 G/μm gradient:
        // |Δf_plus| = 0.023 · 18 · 2.8 ≈ 1.16 MHz, within 0.3 MHz of 1 MHz.
        let map = MagneticFieldMap {
            uniform_field_g: [0.0, 0.0, 30.0],
            gradient_g_per_um: [[0.0, 0.0], [0.0, 0.0], [0.023, 0.0]],
        };
        let mut a = test_cluster([0.0, 0.0, 1.0]);
        let mut b = test_cluster([0.0, 0.0, 1.0]);
        a.position_um = [0.0, 0.0];
        b.position_um = [18.0, 0.0];
        let m = NvSpinModel::default();
        let (_, fa) = zeeman_peaks(&m, axial_field(&map, &a));
        let (_, fb) = zeeman_peaks(&m, axial_field(&map, &b));
        let drift = (fb - fa).abs();
        assert!((drift - 1.1592).abs() < 1e-9);
        assert!((drift - 1.0).abs() < 0.3);
    }

    #[test]
    fn both_branches_add_at_zero_field() {
        // At B = 0 the coincident branches double the single-branch dip.
        let c = test_cluster([0.0, 0.0, 1.0]);
        let map = MagneticFieldMap::zero();
        let tone = Tone::new(2870.0, -20.0);
        let single = contrast_at_power(-20.0, &c.spin_model);
        let dip = total_dip(&c, &[tone], &map);
        assert!((dip - 2.0 * single).abs() < 1e-12);
    }

    #[test]
    fn axis_mixture_weights_spread_the_response() {
        let mut c = test_cluster([0.0, 0.0, 1.0]);
        c.axis_mixture = vec![([0.0, 0.0, 1.0], 0.5), ([1.0, 0.0, 0.0], 0.5)];
        let map = MagneticFieldMap::uniform([0.0, 0.0, 10.0]);
        let (_, f_plus) = zeeman_peaks(&c.spin_model, 10.0);
        let tone = Tone::new(f_plus, -10.0);
        // The aligned axis sees the shifted peak; the orthogonal axis sits
        // at zero axial field, 28 MHz away from the tone.
        let dip = total_dip(&c, &[tone], &map);
        let single_axis = total_dip(&test_cluster([0.0, 0.0, 1.0]), &[tone], &map);
        assert!(dip < single_axis);
        assert!(dip > 0.49 * single_axis);
    }
}
