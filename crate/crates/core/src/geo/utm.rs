//! WGS-84 Universal Transverse Mercator via the sixth-order Krüger series.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const WGS84_A: f64 = 6_378_137.0;
const WGS84_F: f64 = 1.0 / 298.257_223_563;
const K0: f64 = 0.9996;
const FALSE_EASTING: f64 = 500_000.0;
const FALSE_NORTHING_SOUTH: f64 = 10_000_000.0;

/// UTM latitude limit (exclusive).
pub const MAX_UTM_LATITUDE: f64 = 84.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct UtmZone {
    pub zone: u8,
    pub north: bool,
}

impl UtmZone {
    pub fn new(zone: u8, north: bool) -> Result<Self> {
        if !(1..=60).contains(&zone) {
            return Err(Error::InvalidArgument(format!("UTM zone {zone} not in 1..=60")));
        }
        Ok(Self { zone, north })
    }

    /// Standard zone for a longitude and latitude (no Norway/Svalbard exceptions).
    pub fn for_point(lat: f64, lon: f64) -> Self {
        let lon = (lon + 180.0).rem_euclid(360.0) - 180.0;
        let zone = (((lon + 180.0) / 6.0).floor() as i64).clamp(0, 59) as u8 + 1;
        Self { zone, north: lat >= 0.0 }
    }

    pub fn central_meridian(&self) -> f64 {
        -183.0 + 6.0 * self.zone as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Utm {
    pub easting: f64,
    pub northing: f64,
    pub zone: UtmZone,
}

struct Series {
    e: f64,
    a_rect: f64,
    alpha: [f64; 6],
    beta: [f64; 6],
}

fn series() -> &'static Series {
    use std::sync::OnceLock;
    static S: OnceLock<Series> = OnceLock::new();
    S.get_or_init(|| {
        let n = WGS84_F / (2.0 - WGS84_F);
        let n2 = n * n;
        let n3 = n2 * n;
        let n4 = n3 * n;
        let n5 = n4 * n;
        let n6 = n5 * n;
        let a_rect = WGS84_A / (1.0 + n) * (1.0 + n2 / 4.0 + n4 / 64.0 + n6 / 256.0);
        let alpha = [
            n / 2.0 - 2.0 * n2 / 3.0 + 5.0 * n3 / 16.0 + 41.0 * n4 / 180.0 - 127.0 * n5 / 288.0 + 7891.0 * n6 / 37800.0,
            13.0 * n2 / 48.0 - 3.0 * n3 / 5.0 + 557.0 * n4 / 1440.0 + 281.0 * n5 / 630.0 - 1983433.0 * n6 / 1935360.0,
            61.0 * n3 / 240.0 - 103.0 * n4 / 140.0 + 15061.0 * n5 / 26880.0 + 167603.0 * n6 / 181440.0,
            49561.0 * n4 / 161280.0 - 179.0 * n5 / 168.0 + 6601661.0 * n6 / 7257600.0,
            34729.0 * n5 / 80640.0 - 3418889.0 * n6 / 1995840.0,
            212378941.0 * n6 / 319334400.0,
        ];
        let beta = [
            n / 2.0 - 2.0 * n2 / 3.0 + 37.0 * n3 / 96.0 - n4 / 360.0 - 81.0 * n5 / 512.0 + 96199.0 * n6 / 604800.0,
            n2 / 48.0 + n3 / 15.0 - 437.0 * n4 / 1440.0 + 46.0 * n5 / 105.0 - 1118711.0 * n6 / 3870720.0,
            17.0 * n3 / 480.0 - 37.0 * n4 / 840.0 - 209.0 * n5 / 4480.0 + 5569.0 * n6 / 90720.0,
            4397.0 * n4 / 161280.0 - 11.0 * n5 / 504.0 - 830251.0 * n6 / 7257600.0,
            4583.0 * n5 / 161280.0 - 108847.0 * n6 / 3991680.0,
            20648693.0 * n6 / 638668800.0,
        ];
        Series { e: (WGS84_F * (2.0 - WGS84_F)).sqrt(), a_rect, alpha, beta }
    })
}

/// Geodetic to UTM in the longitude's standard zone.
pub fn geodetic_to_utm(lat: f64, lon: f64) -> Result<Utm> {
    geodetic_to_utm_in(lat, lon, UtmZone::for_point(lat, lon))
}

/// Geodetic to UTM in a given zone and hemisphere.
pub fn geodetic_to_utm_in(lat: f64, lon: f64, zone: UtmZone) -> Result<Utm> {
    if !lat.is_finite() || !lon.is_finite() || lat.abs() >= MAX_UTM_LATITUDE {
        return Err(Error::PolarLatitude(lat));
    }
    let s = series();
    let phi = lat.to_radians();
    let mut dlon = lon - zone.central_meridian();
    dlon = (dlon + 180.0).rem_euclid(360.0) - 180.0;
    let lam = dlon.to_radians();

    let sin_phi = phi.sin();
    let t = (sin_phi.atanh() - s.e * (s.e * sin_phi).atanh()).sinh();
    let xi_p = t.atan2(lam.cos());
    let eta_p = (lam.sin() / (1.0 + t * t).sqrt()).atanh();

    let mut xi = xi_p;
    let mut eta = eta_p;
    for (j, a) in s.alpha.iter().enumerate() {
        let k = 2.0 * (j + 1) as f64;
        xi += a * (k * xi_p).sin() * (k * eta_p).cosh();
        eta += a * (k * xi_p).cos() * (k * eta_p).sinh();
    }
    let false_northing = if zone.north { 0.0 } else { FALSE_NORTHING_SOUTH };
    Ok(Utm { easting: FALSE_EASTING + K0 * s.a_rect * eta, northing: false_northing + K0 * s.a_rect * xi, zone })
}

/// UTM to geodetic `(lat, lon)` in degrees.
pub fn utm_to_geodetic(easting: f64, northing: f64, zone: UtmZone) -> Result<(f64, f64)> {
    if !easting.is_finite() || !northing.is_finite() {
        return Err(Error::InvalidArgument("non-finite UTM coordinate".into()));
    }
    let s = series();
    let false_northing = if zone.north { 0.0 } else { FALSE_NORTHING_SOUTH };
    let xi = (northing - false_northing) / (K0 * s.a_rect);
    let eta = (easting - FALSE_EASTING) / (K0 * s.a_rect);

    let mut xi_p = xi;
    let mut eta_p = eta;
    for (j, b) in s.beta.iter().enumerate() {
        let k = 2.0 * (j + 1) as f64;
        xi_p -= b * (k * xi).sin() * (k * eta).cosh();
        eta_p -= b * (k * xi).cos() * (k * eta).sinh();
    }
    let tau_p = xi_p.sin() / (eta_p.sinh().hypot(xi_p.cos()));
    let lam = eta_p.sinh().atan2(xi_p.cos());

    // conformal to geodetic latitude by Newton on tau = tan(phi)
    let e2m = 1.0 - s.e * s.e;
    let mut tau = tau_p / e2m;
    for _ in 0..8 {
        let tau1 = (1.0 + tau * tau).sqrt();
        let sig = (s.e * (s.e * tau / tau1).atanh()).sinh();
        let taupa = (1.0 + sig * sig).sqrt() * tau - sig * tau1;
        let dtau = (tau_p - taupa) * (1.0 + e2m * tau * tau) / (e2m * tau1 * (1.0 + taupa * taupa).sqrt());
        tau += dtau;
        if dtau.abs() < 1e-15 * tau.abs().max(1.0) {
            break;
        }
    }
    let lat = tau.atan().to_degrees();
    let mut lon = zone.central_meridian() + lam.to_degrees();
    lon = (lon + 180.0).rem_euclid(360.0) - 180.0;
    Ok((lat, lon))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn central_meridian_on_equator() {
        let u = geodetic_to_utm(0.0, 117.0).unwrap();
        assert_eq!(u.zone.zone, 50);
        assert!((u.easting - 500_000.0).abs() < 1e-9);
        assert!(u.northing.abs() < 1e-9);
    }

    #[test]
    fn zone_selection() {
        assert_eq!(UtmZone::for_point(10.0, -177.0).zone, 1);
        assert_eq!(UtmZone::for_point(10.0, 179.9).zone, 60);
        assert_eq!(UtmZone::for_point(10.0, 180.0).zone, 1);
        assert!(!UtmZone::for_point(-0.1, 3.0).north);
        assert_eq!(UtmZone::for_point(36.0, 114.0).central_meridian(), 117.0);
    }

    #[test]
    fn polar_latitudes_rejected() {
        assert!(matches!(geodetic_to_utm(84.5, 0.0), Err(Error::PolarLatitude(_))));
        assert!(matches!(geodetic_to_utm(-89.0, 0.0), Err(Error::PolarLatitude(_))));
    }

    #[test]
    fn round_trip_across_zone() {
        let zone = UtmZone::new(50, true).unwrap();
        for i in 0..=30 {
            for j in 0..=24 {
                let lat = -79.0 + 5.4 * i as f64;
                let lon = 114.0 + 0.25 * j as f64;
                let z = UtmZone { north: lat >= 0.0, ..zone };
                let u = geodetic_to_utm_in(lat, lon, z).unwrap();
                let (la, lo) = utm_to_geodetic(u.easting, u.northing, z).unwrap();
                assert!((la - lat).abs() < 1e-9, "lat {lat} lon {lon}: {la}");
                assert!((lo - lon).abs() < 1e-9, "lat {lat} lon {lon}: {lo}");
            }
        }
    }
}
