//! Device power profiles and the remaining-movement-time model
//! `max(0, (C - P_dev * h) / P_loc)` fitted to measured anchors.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::Scalar;
use crate::scenario::{Cell, EnergyParams, TxPower};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Device {
    Drivers,
    Camera,
    Lidar,
    Hat5g,
    ObjectDetection,
}

impl Device {
    pub const ALL: [Device; 5] =
        [Device::Drivers, Device::Camera, Device::Lidar, Device::Hat5g, Device::ObjectDetection];

    pub fn name(self) -> &'static str {
        match self {
            Device::Drivers => "drivers",
            Device::Camera => "camera",
            Device::Lidar => "lidar",
            Device::Hat5g => "hat5g",
            Device::ObjectDetection => "object_detection",
        }
    }
}

/// Power draw in watts per operating state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DevicePowerProfile {
    pub idle: f64,
    pub started: f64,
    pub working: f64,
}

impl DevicePowerProfile {
    pub fn is_monotone(&self) -> bool {
        0.0 <= self.idle && self.idle <= self.started && self.started <= self.working
    }
}

/// Hours of movement left after running a device for `hours_on` hours.
pub fn remaining_movement_time<T: Scalar>(
    capacity: T,
    device_power: T,
    hours_on: T,
    locomotion_power: T,
) -> T {
    ((capacity - device_power * hours_on) / locomotion_power).max(T::zero())
}

/// A measured point: after `hours_on` hours of `device`, `remaining_hours` of movement remain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub device: Device,
    pub hours_on: f64,
    pub remaining_hours: f64,
}

impl Anchor {
    pub fn new(device: Device, hours_on: f64, remaining_hours: f64) -> Self {
        Self { device, hours_on, remaining_hours }
    }
}

/// Quoted anchors: lidar 2.21 h and camera 1.94 h at 10 h, object detection
/// exhausted at 8 h, the 5G HAT above 3 h at 10 h, and the 0 h band 3.41-3.86 h.
pub fn default_anchors() -> Vec<Anchor> {
    vec![
        Anchor::new(Device::Lidar, 10.0, 2.21),
        Anchor::new(Device::Camera, 10.0, 1.94),
        Anchor::new(Device::ObjectDetection, 8.0, 0.0),
        Anchor::new(Device::Hat5g, 10.0, 3.0),
        Anchor::new(Device::Drivers, 0.0, 3.41),
        Anchor::new(Device::Drivers, 0.0, 3.86),
    ]
}

/// Laptop battery of the first robot, in watt-hours.
pub const DEFAULT_CAPACITY_WH: f64 = 55.0;

#[derive(Debug, Error, PartialEq)]
pub enum FitError {
    #[error("underdetermined fit: {equations} equations for {unknowns} unknowns (rank {rank})")]
    Underdetermined { equations: usize, unknowns: usize, rank: usize },
    #[error("no anchors given")]
    Empty,
    #[error("anchor values must be finite and non-negative")]
    BadAnchor,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FittedProfile {
    pub capacity_wh: f64,
    /// `None` when no anchor constrains it (all anchors at zero remaining time).
    pub locomotion_w: Option<f64>,
    pub device_w: BTreeMap<Device, f64>,
    pub residual_rms: f64,
}

impl FittedProfile {
    pub fn remaining(&self, device: Device, hours_on: f64) -> Option<f64> {
        let p = *self.device_w.get(&device)?;
        Some(remaining_movement_time(self.capacity_wh, p, hours_on, self.locomotion_w?))
    }
}

/// Least-squares fit of `h * P_dev + rem * P_loc = C` over the anchors with
/// `C` fixed. Unknowns no anchor touches are left out rather than reported
/// as underdetermined.
pub fn fit_device_profiles(anchors: &[Anchor], capacity_wh: f64) -> Result<FittedProfile, FitError> {
    if anchors.is_empty() {
        return Err(FitError::Empty);
    }
    if anchors
        .iter()
        .any(|a| !(a.hours_on >= 0.0 && a.remaining_hours >= 0.0 && a.hours_on.is_finite()))
    {
        return Err(FitError::BadAnchor);
    }
    // Column 0 is P_loc, then one column per device with a non-zero hours_on.
    let uses_loc = anchors.iter().any(|a| a.remaining_hours > 0.0);
    let mut devices: Vec<Device> =
        anchors.iter().filter(|a| a.hours_on > 0.0).map(|a| a.device).collect();
    devices.sort();
    devices.dedup();
    let n = devices.len() + 1;
    let design: Vec<Vec<f64>> = anchors
        .iter()
        .map(|a| {
            let mut row = vec![0.0; n];
            row[0] = a.remaining_hours;
            if let Ok(j) = devices.binary_search(&a.device) {
                row[j + 1] += a.hours_on;
            }
            row
        })
        .collect();
    let active: Vec<usize> = (0..n).filter(|&j| j > 0 || uses_loc).collect();
    let k = active.len();
    let mut normal = vec![vec![0.0; k + 1]; k];
    for row in &design {
        for (p, &i) in active.iter().enumerate() {
            for (q, &j) in active.iter().enumerate() {
                normal[p][q] += row[i] * row[j];
            }
            normal[p][k] += row[i] * capacity_wh;
        }
    }
    let (solution, rank) = solve_dense(normal);
    if rank < k {
        return Err(FitError::Underdetermined { equations: anchors.len(), unknowns: k, rank });
    }
    let mut x = vec![0.0; n];
    for (p, &j) in active.iter().enumerate() {
        x[j] = solution[p];
    }
    let sq: f64 = design
        .iter()
        .map(|row| {
            let fit: f64 = row.iter().zip(&x).map(|(a, b)| a * b).sum();
            (fit - capacity_wh).powi(2)
        })
        .sum();
    Ok(FittedProfile {
        capacity_wh,
        locomotion_w: uses_loc.then_some(x[0]),
        device_w: devices.iter().enumerate().map(|(i, d)| (*d, x[i + 1])).collect(),
        residual_rms: (sq / anchors.len() as f64).sqrt(),
    })
}

/// Gauss-Jordan with partial pivoting on an augmented matrix; returns the solution and rank.
fn solve_dense(mut m: Vec<Vec<f64>>) -> (Vec<f64>, usize) {
    let k = m.len();
    let scale = (0..k).map(|i| m[i][i].abs()).fold(0.0, f64::max).max(1.0);
    let mut rank = 0;
    let mut pivot_cols = Vec::new();
    for col in 0..k {
        let Some(p) = (rank..k).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs())) else {
            break;
        };
        if m[p][col].abs() <= 1e-12 * scale {
            continue;
        }
        m.swap(rank, p);
        let piv = m[rank][col];
        for v in m[rank].iter_mut() {
            *v /= piv;
        }
        for r in 0..k {
            if r != rank && m[r][col] != 0.0 {
                let f = m[r][col];
                for c in 0..=k {
                    let d = f * m[rank][c];
                    m[r][c] -= d;
                }
            }
        }
        pivot_cols.push(col);
        rank += 1;
    }
    let mut x = vec![0.0; k];
    for (row, &col) in pivot_cols.iter().enumerate() {
        x[col] = m[row][k];
    }
    (x, rank)
}

/// Contents of `profiles/devices.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileFile {
    pub capacity_wh: f64,
    pub locomotion_w: f64,
    pub devices: BTreeMap<Device, DevicePowerProfile>,
    pub anchors: Vec<Anchor>,
    pub residual_rms: f64,
}

/// USB-meter readings: drivers about 0.1 W, camera about 1 W idle/started,
/// lidar 1.25 W idle and 2 W once spinning.
fn usb_idle_started(device: Device) -> (f64, f64) {
    match device {
        Device::Drivers => (0.1, 0.1),
        Device::Camera => (1.0, 1.0),
        Device::Lidar => (1.25, 2.0),
        Device::Hat5g | Device::ObjectDetection => (0.0, 0.0),
    }
}

impl ProfileFile {
    /// Builds the profile from a fit; `working` is the fitted battery-level draw.
    pub fn from_fit(fit: &FittedProfile, anchors: &[Anchor]) -> Option<Self> {
        let locomotion_w = fit.locomotion_w?;
        let mut devices = BTreeMap::new();
        for d in Device::ALL {
            let (idle, started) = usb_idle_started(d);
            let working = match (d, fit.device_w.get(&d)) {
                (_, Some(w)) => *w,
                (Device::Drivers, None) => 0.1,
                (_, None) => started,
            };
            // No separate idle reading exists for the HAT: it draws its working power throughout.
            let (idle, started) = if d == Device::Hat5g { (working, working) } else { (idle, started) };
            devices.insert(d, DevicePowerProfile { idle, started, working: working.max(started) });
        }
        Some(Self {
            capacity_wh: fit.capacity_wh,
            locomotion_w,
            devices,
            anchors: anchors.to_vec(),
            residual_rms: fit.residual_rms,
        })
    }

    pub fn default_fitted() -> Self {
        let anchors = default_anchors();
        let fit = fit_device_profiles(&anchors, DEFAULT_CAPACITY_WH).expect("default anchors fit");
        Self::from_fit(&fit, &anchors).expect("locomotion identified")
    }

    pub fn working(&self, d: Device) -> f64 {
        self.devices.get(&d).map_or(0.0, |p| p.working)
    }

    pub fn remaining(&self, d: Device, hours_on: f64) -> f64 {
        remaining_movement_time(self.capacity_wh, self.working(d), hours_on, self.locomotion_w)
    }

    /// Remaining movement time for every device at whole hours `0..=max_hours`.
    pub fn remaining_table(&self, max_hours: usize) -> Vec<(usize, BTreeMap<Device, f64>)> {
        (0..=max_hours)
            .map(|h| (h, Device::ALL.iter().map(|d| (*d, self.remaining(*d, h as f64))).collect()))
            .collect()
    }

    pub fn load(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(std::io::Error::other)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("profile serializes")
    }

    /// Per-step energy parameters (watt-hours per step) for a step of `step_seconds`.
    ///
    /// Locomotion draw maps to `P_move`, the HAT link to `P_RX`, camera plus
    /// lidar to `P_SEN`, and on-robot object detection on top of the camera
    /// stream to `P_local`. Transmission grows linearly with distance to the
    /// base station at `tx_w_per_cell` watts per cell.
    pub fn step_energy_params(&self, step_seconds: f64, base_station: Cell, tx_w_per_cell: f64) -> EnergyParams {
        let wh = |w: f64| w * step_seconds / 3600.0;
        let hat = self.devices[&Device::Hat5g];
        EnergyParams {
            p_rx: wh(hat.idle),
            p_sen: wh(self.working(Device::Camera) + self.working(Device::Lidar)),
            p_move_base: wh(self.locomotion_w),
            p_move_diag_factor: std::f64::consts::SQRT_2,
            base_station,
            p_tx: TxPower::Distance {
                p_tx0: wh(hat.working - hat.idle),
                kappa: wh(tx_w_per_cell),
                gamma: 1.0,
            },
            p_local: wh((self.working(Device::ObjectDetection) - self.working(Device::Camera)).max(0.0)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn no_drain_gives_capacity_over_locomotion() {
        assert_eq!(remaining_movement_time(55.0, 3.0, 0.0, 11.0), 5.0);
    }

    #[test]
    fn saturates_at_zero() {
        assert_eq!(remaining_movement_time(55.0, 10.0, 8.0, 11.0), 0.0);
    }

    #[test]
    fn yolo_alone_pins_its_power() {
        let fit = fit_device_profiles(&[Anchor::new(Device::ObjectDetection, 8.0, 0.0)], 55.0).unwrap();
        assert_eq!(fit.device_w[&Device::ObjectDetection], 6.875);
        assert_eq!(fit.locomotion_w, None);
    }

    #[test]
    fn single_anchor_is_underdetermined() {
        let err = fit_device_profiles(&[Anchor::new(Device::Lidar, 10.0, 2.21)], 55.0).unwrap_err();
        assert!(matches!(err, FitError::Underdetermined { unknowns: 2, rank: 1, .. }));
    }

    #[test]
    fn default_fit_reproduces_quoted_values() {
        let p = ProfileFile::default_fitted();
        assert!((p.remaining(Device::Lidar, 10.0) - 2.21).abs() < 0.05);
        assert!((p.remaining(Device::Camera, 10.0) - 1.94).abs() < 0.05);
        assert_eq!(p.remaining(Device::ObjectDetection, 8.0), 0.0);
        assert!(p.working(Device::Camera) > p.working(Device::Lidar));
        let zero = p.remaining(Device::Drivers, 0.0);
        assert!((3.41..=3.86).contains(&zero), "{zero}");
        for d in Device::ALL {
            assert_eq!(p.remaining(d, 0.0), zero);
            assert!(p.devices[&d].is_monotone(), "{d:?}");
        }
        assert!(p.remaining(Device::Hat5g, 10.0) >= 3.0 - 1e-9);
    }

    #[test]
    fn profile_file_round_trips() {
        let p = ProfileFile::default_fitted();
        let back: ProfileFile = serde_json::from_str(&p.to_json_string()).unwrap();
        assert_eq!(back, p);
    }

    proptest! {
        #[test]
        fn non_increasing_in_hours_and_power(c in 1.0f64..100.0, p in 0.0f64..10.0, h in 0.0f64..10.0, dh in 0.0f64..5.0, dp in 0.0f64..5.0, l in 0.1f64..20.0) {
            let base = remaining_movement_time(c, p, h, l);
            prop_assert!(remaining_movement_time(c, p, h + dh, l) <= base + 1e-12);
            prop_assert!(remaining_movement_time(c, p + dp, h, l) <= base + 1e-12);
        }

        #[test]
        fn homogeneous_of_degree_zero(c in 1.0f64..100.0, p in 0.0f64..10.0, h in 0.0f64..10.0, l in 0.1f64..20.0, k in 0.1f64..10.0) {
            let a = remaining_movement_time(c, p, h, l);
            let b = remaining_movement_time(k * c, k * p, h, k * l);
            prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
        }
    }
}
