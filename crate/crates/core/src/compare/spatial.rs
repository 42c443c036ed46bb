//! Point-set, vector, temporal and topological comparators.

use crate::model::GeoPoint;

/// Mean Earth radius in metres.
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

/// Great-circle distance in metres.
pub fn haversine_m(a: GeoPoint, b: GeoPoint) -> f64 {
    let (lat1, lat2) = (a.lat().to_radians(), b.lat().to_radians());
    let dlat = lat2 - lat1;
    let dlon = (b.lon() - a.lon()).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// `max(0, 1 - haversine(a, b) / scale)`.
pub fn compare_geo(a: GeoPoint, b: GeoPoint, scale_meters: f64) -> f64 {
    linear_decay(haversine_m(a, b), scale_meters)
}

/// `max(0, 1 - |a - b| / scale)` on Unix seconds.
pub fn compare_temporal(a: i64, b: i64, scale_seconds: f64) -> f64 {
    linear_decay((a as f64 - b as f64).abs(), scale_seconds)
}

/// Euclidean distance decayed linearly over `scale`. `None` on dimension
/// mismatch.
pub fn compare_euclidean(a: &[f64], b: &[f64], scale: f64) -> Option<f64> {
    if a.len() != b.len() {
        return None;
    }
    let d = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    Some(linear_decay(d, scale))
}

fn linear_decay(distance: f64, scale: f64) -> f64 {
    if distance == 0.0 {
        return 1.0;
    }
    (1.0 - distance / scale).clamp(0.0, 1.0)
}

/// Axis-aligned box `[min_lat, min_lon, max_lat, max_lon]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub min_lat: f64,
    pub min_lon: f64,
    pub max_lat: f64,
    pub max_lon: f64,
}

impl BoundingBox {
    pub fn point(p: GeoPoint) -> Self {
        Self {
            min_lat: p.lat(),
            min_lon: p.lon(),
            max_lat: p.lat(),
            max_lon: p.lon(),
        }
    }

    /// Parses `min_lat,min_lon,max_lat,max_lon`; corners may be given in any
    /// order.
    pub fn parse(s: &str) -> Option<Self> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect::<Option<_>>()?;
        let [a, b, c, d] = parts[..] else {
            return None;
        };
        Some(Self {
            min_lat: a.min(c),
            min_lon: b.min(d),
            max_lat: a.max(c),
            max_lon: b.max(d),
        })
    }

    fn area(&self) -> f64 {
        (self.max_lat - self.min_lat) * (self.max_lon - self.min_lon)
    }
}

/// Jaccard ratio of box areas. Degenerate (zero-area) boxes score 1 only
/// when identical.
pub fn compare_boxes(a: BoundingBox, b: BoundingBox) -> f64 {
    if a == b {
        return 1.0;
    }
    let w = (a.max_lon.min(b.max_lon) - a.min_lon.max(b.min_lon)).max(0.0);
    let h = (a.max_lat.min(b.max_lat) - a.min_lat.max(b.min_lat)).max(0.0);
    let inter = w * h;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}
