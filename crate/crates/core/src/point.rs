use serde::Serialize;

use crate::dist::FiniteDist;
use crate::ext_real::ExtReal;

/// A point `(D, R)` on a rate-distortion curve, with the supporting slope
/// and the reproduction distribution that achieves it. Rates are in nats.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RDPoint {
    pub distortion: f64,
    pub rate: ExtReal,
    pub slope: f64,
    pub output_dist: FiniteDist,
}
