//! Equirectangular geometry. Adequate at city scale.

pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

pub fn meters_per_degree_lat() -> f64 {
    EARTH_RADIUS_M * std::f64::consts::PI / 180.0
}

pub fn meters_per_degree_lon(lat: f64) -> f64 {
    meters_per_degree_lat() * lat.to_radians().cos()
}

/// Local planar frame anchored at a reference point.
#[derive(Debug, Clone, Copy)]
pub struct Projection {
    lon0: f64,
    lat0: f64,
    kx: f64,
    ky: f64,
}

impl Projection {
    pub fn new(lon0: f64, lat0: f64) -> Self {
        Self {
            lon0,
            lat0,
            kx: meters_per_degree_lon(lat0),
            ky: meters_per_degree_lat(),
        }
    }

    pub fn to_xy(&self, lon: f64, lat: f64) -> (f64, f64) {
        ((lon - self.lon0) * self.kx, (lat - self.lat0) * self.ky)
    }

    pub fn to_lon_lat(&self, x: f64, y: f64) -> (f64, f64) {
        (self.lon0 + x / self.kx, self.lat0 + y / self.ky)
    }
}

/// Equirectangular distance in meters.
pub fn distance_m(lon1: f64, lat1: f64, lon2: f64, lat2: f64) -> f64 {
    let kx = meters_per_degree_lon(0.5 * (lat1 + lat2));
    let ky = meters_per_degree_lat();
    ((lon2 - lon1) * kx).hypot((lat2 - lat1) * ky)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_degree_latitude_is_about_111_km() {
        let d = distance_m(116.4, 39.0, 116.4, 40.0);
        assert!((d - 111_195.0).abs() < 10.0);
    }

    #[test]
    fn projection_round_trips() {
        let p = Projection::new(116.4, 39.9);
        let (x, y) = p.to_xy(116.41, 39.91);
        let (lon, lat) = p.to_lon_lat(x, y);
        assert!((lon - 116.41).abs() < 1e-12 && (lat - 39.91).abs() < 1e-12);
        let d = distance_m(116.4, 39.9, 116.41, 39.91);
        assert!((x.hypot(y) - d).abs() / d < 1e-3);
    }
}
