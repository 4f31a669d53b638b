//! UTM forward conversion against reference values produced by an
//! independent transverse Mercator implementation (PROJ 9.5, `+proj=utm
//! +ellps=WGS84`).

use rpcmvs::geo::utm::{geodetic_to_utm_in, utm_to_geodetic, UtmZone};

// (lat, lon, zone, easting, northing)
const REFERENCE: [(f64, f64, u8, f64, f64); 11] = [
    (36.0, 114.0, 50, 229578.629990, 3988111.962343),
    (36.2, 112.1, 50, 59328.910761, 4017276.512240),
    (0.0, 117.0, 50, 500000.000000, 0.000000),
    (-33.9, 18.4, 34, 259583.221660, 6245888.045441),
    (60.5, -1.2, 30, 598872.608755, 6708449.071900),
    (45.0, 9.0, 32, 500000.000000, 4982950.400227),
    (83.5, -177.0, 1, 500000.000000, 9272275.871019),
    (-79.0, 105.0, 48, 500000.000000, 1230025.986202),
    (10.0, -3.01, 30, 498904.044912, 1105412.507909),
    (51.5, -0.1, 30, 701277.665127, 5709417.124848),
    (36.0, 114.0, 49, 770421.370010, 3988111.962343),
];

#[test]
fn forward_matches_reference_to_a_millimeter() {
    for (lat, lon, zone, e, n) in REFERENCE {
        let z = UtmZone::new(zone, lat >= 0.0).unwrap();
        let u = geodetic_to_utm_in(lat, lon, z).unwrap();
        assert!((u.easting - e).abs() < 1e-3, "{lat},{lon}: easting {} vs {e}", u.easting);
        assert!((u.northing - n).abs() < 1e-3, "{lat},{lon}: northing {} vs {n}", u.northing);
    }
}

#[test]
fn inverse_of_reference_points() {
    for (lat, lon, zone, e, n) in REFERENCE {
        let z = UtmZone::new(zone, lat >= 0.0).unwrap();
        let (la, lo) = utm_to_geodetic(e, n, z).unwrap();
        // 1 mm on the ground is ~1e-8 degrees
        assert!((la - lat).abs() < 2e-8, "{lat}: {la}");
        assert!((lo - lon).abs() < 2e-8 / lat.to_radians().cos(), "{lon}: {lo}");
    }
}
