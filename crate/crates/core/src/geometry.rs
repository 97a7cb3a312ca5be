//! NTN link geometry: slant range, round trip, cell radius per preamble
//! format, and which RTT ranges a fixed BS-side delay can serve.

use serde::{Deserialize, Serialize};

use crate::raconfig::PreambleFormat;
use crate::timing::{decompose_delay, Decomposition, Duration, Standard};

/// Mean Earth radius, km.
pub const EARTH_RADIUS_KM: f64 = 6371.0;
/// Speed of light, km/s.
pub const SPEED_OF_LIGHT_KM_S: f64 = 299_792.458;
/// LEO reference altitude, km.
pub const LEO_ALTITUDE_KM: f64 = 600.0;
/// GEO altitude, km.
pub const GEO_ALTITUDE_KM: f64 = 35_793.0;

const BISECTION_TOL_KM: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Payload {
    /// Base station on board: one service-link hop each way.
    Regenerative,
    /// Bent pipe to a ground gateway; the feeder leg is taken equal to the
    /// service leg.
    Transparent,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NtnGeometry {
    pub h_s: f64,
    pub r_earth: f64,
    pub payload: Payload,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub c: f64,
}

impl NtnGeometry {
    pub fn new(h_s: f64, payload: Payload) -> Self {
        Self { h_s, r_earth: EARTH_RADIUS_KM, payload, alpha_min: 10.0, alpha_max: 90.0, c: SPEED_OF_LIGHT_KM_S }
    }

    pub fn leo() -> Self {
        Self::new(LEO_ALTITUDE_KM, Payload::Regenerative)
    }

    pub fn geo_transparent() -> Self {
        Self::new(GEO_ALTITUDE_KM, Payload::Transparent)
    }

    pub fn is_valid(&self) -> bool {
        self.h_s > 0.0 && 0.0 < self.alpha_min && self.alpha_min <= self.alpha_max && self.alpha_max <= 90.0
    }

    /// Round trip at elevation `alpha_deg`.
    pub fn rtt_at(&self, alpha_deg: f64) -> f64 {
        rtt(slant_range(alpha_deg, self), self.payload)
    }

    /// Smallest and largest round trip over `[alpha_min, alpha_max]`.
    pub fn rtt_range(&self) -> (f64, f64) {
        (self.rtt_at(self.alpha_max), self.rtt_at(self.alpha_min))
    }
}

/// UE-to-platform distance in km at elevation `alpha_deg`.
pub fn slant_range(alpha_deg: f64, g: &NtnGeometry) -> f64 {
    let s = alpha_deg.to_radians().sin();
    let re = g.r_earth;
    (re * re * s * s + g.h_s * g.h_s + 2.0 * re * g.h_s).sqrt() - re * s
}

/// Round-trip time in seconds over slant range `d_km`.
pub fn rtt(d_km: f64, payload: Payload) -> f64 {
    let hops = match payload {
        Payload::Regenerative => 2.0,
        Payload::Transparent => 4.0,
    };
    hops * d_km / SPEED_OF_LIGHT_KM_S
}

/// Distance a preamble CP can absorb: `c * T_cp / 2`, km.
pub fn terrestrial_radius(cp_length_s: f64) -> f64 {
    SPEED_OF_LIGHT_KM_S * cp_length_s / 2.0
}

/// Nearest point of a cell whose far edge is at `alpha_min`.
///
/// Returns `(d_min_km, alpha_max_deg)`: the smallest slant range reachable
/// from `alpha_min` towards nadir while the differential distance stays within
/// the CP budget. `None` when `cp_length_s <= 0`.
pub fn d_min(alpha_min_deg: f64, cp_length_s: f64, g: &NtnGeometry) -> Option<(f64, f64)> {
    if cp_length_s.is_nan() || cp_length_s < 0.0 {
        return None;
    }
    let d_max = slant_range(alpha_min_deg, g);
    let budget = terrestrial_radius(cp_length_s);
    if d_max - slant_range(90.0, g) <= budget {
        return Some((slant_range(90.0, g), 90.0));
    }
    if budget == 0.0 {
        return Some((d_max, alpha_min_deg));
    }
    // D decreases with elevation: find where the differential hits the budget.
    let target = d_max - budget;
    let (mut lo, mut hi) = (alpha_min_deg, 90.0);
    loop {
        let mid = 0.5 * (lo + hi);
        let d = slant_range(mid, g);
        if d > target {
            lo = mid;
        } else {
            hi = mid;
        }
        let (d_lo, d_hi) = (slant_range(lo, g), slant_range(hi, g));
        if d_lo - d_hi <= BISECTION_TOL_KM || hi - lo <= f64::EPSILON * 90.0 {
            // `hi` is feasible (D(hi) <= target); report it so the constraint holds.
            return Some((d_hi.max(target), hi));
        }
    }
}

/// Cell radius from its two edge distances and elevations.
pub fn cell_radius(d_max: f64, d_min: f64, alpha_max_deg: f64, alpha_min_deg: f64) -> f64 {
    let cos = (alpha_max_deg + alpha_min_deg).to_radians().cos();
    (d_max * d_max + d_min * d_min + 2.0 * d_max * d_min * cos).max(0.0).sqrt() / 2.0
}

/// One point of a coverage curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoveragePoint {
    pub alpha_min_deg: f64,
    pub alpha_max_deg: f64,
    pub alpha_cen_deg: f64,
    pub format: PreambleFormat,
    pub radius_km: f64,
}

/// Earth central angle between nadir and the ground point seen at `alpha_deg`, radians.
pub fn central_angle(alpha_deg: f64, g: &NtnGeometry) -> f64 {
    let a = alpha_deg.to_radians();
    (g.r_earth * a.cos() / (g.r_earth + g.h_s)).acos() - a
}

/// Inverse of [`central_angle`].
pub fn elevation_at(central_rad: f64, g: &NtnGeometry) -> f64 {
    let k = g.r_earth / (g.r_earth + g.h_s);
    (central_rad.cos() - k).atan2(central_rad.sin()).to_degrees()
}

/// Elevation at the ground midpoint of a cell whose edges sit on the same
/// side of nadir at `alpha_min_deg` and `alpha_max_deg`.
pub fn cell_center_elevation(alpha_max_deg: f64, alpha_min_deg: f64, g: &NtnGeometry) -> f64 {
    let mid = 0.5 * (central_angle(alpha_min_deg, g) + central_angle(alpha_max_deg, g));
    elevation_at(mid, g)
}

/// Coverage sweep over far-edge elevations for each preamble format.
pub fn coverage_sweep(
    g: &NtnGeometry,
    standard: Standard,
    formats: &[PreambleFormat],
    alpha_min_list: &[f64],
) -> Vec<CoveragePoint> {
    let mut out = Vec::with_capacity(formats.len() * alpha_min_list.len());
    for &format in formats {
        let cp = format.cp_length_ms(standard) / 1e3;
        for &alpha_min in alpha_min_list {
            let d_max = slant_range(alpha_min, g);
            let (dmin, alpha_max) = d_min(alpha_min, cp, g).expect("table CP lengths are positive");
            // Both edges lie on the far side of nadir, so the near edge is seen
            // at 180 - alpha_max from the far edge's horizon.
            out.push(CoveragePoint {
                alpha_min_deg: alpha_min,
                alpha_max_deg: alpha_max,
                alpha_cen_deg: cell_center_elevation(alpha_max, alpha_min, g),
                format,
                radius_km: cell_radius(d_max, dmin, 180.0 - alpha_max, alpha_min),
            });
        }
    }
    out
}

/// CSV with header `alpha_cen_deg,format,radius_km`.
pub fn coverage_csv(points: &[CoveragePoint]) -> String {
    let mut s = String::from("alpha_cen_deg,format,radius_km\n");
    for p in points {
        s.push_str(&format!("{:.6},{},{:.6}\n", p.alpha_cen_deg, p.format, p.radius_km));
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Serviceability {
    Serviceable { sfd: u64, format: PreambleFormat },
    Unserviceable,
}

impl Serviceability {
    pub fn is_serviceable(&self) -> bool {
        matches!(self, Serviceability::Serviceable { .. })
    }
}

/// Whether a cell with round trips in `[rtt_min, rtt_max]` can be served by a
/// fixed BS-side subframe delay. Picks the shortest-CP format that absorbs the
/// residual spread.
pub fn td_serviceability(
    rtt_min: Duration,
    rtt_max: Duration,
    standard: Standard,
    formats: &[PreambleFormat],
) -> Serviceability {
    debug_assert!(rtt_min <= rtt_max);
    let sfd = rtt_min.whole_sf();
    let residual = rtt_max - Duration::from_sf(sfd);
    smallest_fitting_format(residual, standard, formats)
        .map_or(Serviceability::Unserviceable, |format| Serviceability::Serviceable { sfd, format })
}

/// Serviceability under the UE-side approach: each UE removes its own whole
/// subframes and TAC steps, so only the worst per-UE leftover must fit a CP.
pub fn ta_serviceability(
    rtt_min: Duration,
    rtt_max: Duration,
    standard: Standard,
    formats: &[PreambleFormat],
) -> Serviceability {
    debug_assert!(rtt_min <= rtt_max);
    // Worst case: a sub-subframe remainder just below one subframe.
    let worst = Duration::from_samples(Duration::SF.samples() - 1);
    let leftover = decompose_delay(worst).residual;
    let leftover = if rtt_max < Duration::SF { decompose_delay(rtt_max).residual.min(leftover) } else { leftover };
    smallest_fitting_format(leftover, standard, formats)
        .map_or(Serviceability::Unserviceable, |format| Serviceability::Serviceable { sfd: rtt_min.whole_sf(), format })
}

/// Split of a UE's own RTT estimate; the residual is what its CP must absorb.
pub fn ta_split(rtt_est: Duration) -> Decomposition {
    decompose_delay(rtt_est)
}

fn smallest_fitting_format(
    residual: Duration,
    standard: Standard,
    formats: &[PreambleFormat],
) -> Option<PreambleFormat> {
    formats.iter().copied().filter(|f| f.cp_length(standard) >= residual).min_by_key(|f| f.cp_length(standard))
}
