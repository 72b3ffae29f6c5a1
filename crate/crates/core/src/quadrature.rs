//! Symmetric quadrature rules on the reference triangle and Gauss rules on
//! edges. Triangle weights sum to one and are scaled by the element area.

/// A point given in barycentric coordinates together with its weight.
#[derive(Debug, Clone, Copy)]
pub struct QuadPoint {
    pub bary: [f64; 3],
    pub weight: f64,
}

const fn qp(a: f64, b: f64, c: f64, weight: f64) -> QuadPoint {
    QuadPoint {
        bary: [a, b, c],
        weight,
    }
}

const D4_A1: f64 = 0.445_948_490_915_965;
const D4_B1: f64 = 0.108_103_018_168_070;
const D4_W1: f64 = 0.223_381_589_678_011;
const D4_A2: f64 = 0.091_576_213_509_771;
const D4_B2: f64 = 0.816_847_572_980_459;
const D4_W2: f64 = 0.109_951_743_655_322;

/// 6-point rule, exact for polynomials of total degree 4.
pub static TRIANGLE_DEGREE4: [QuadPoint; 6] = [
    qp(D4_A1, D4_A1, D4_B1, D4_W1),
    qp(D4_A1, D4_B1, D4_A1, D4_W1),
    qp(D4_B1, D4_A1, D4_A1, D4_W1),
    qp(D4_A2, D4_A2, D4_B2, D4_W2),
    qp(D4_A2, D4_B2, D4_A2, D4_W2),
    qp(D4_B2, D4_A2, D4_A2, D4_W2),
];

const D6_A1: f64 = 0.249_286_745_170_910;
const D6_B1: f64 = 0.501_426_509_658_179;
const D6_W1: f64 = 0.116_786_275_726_379;
const D6_A2: f64 = 0.063_089_014_491_502;
const D6_B2: f64 = 0.873_821_971_016_996;
const D6_W2: f64 = 0.050_844_906_370_207;
const D6_A3: f64 = 0.053_145_049_844_817;
const D6_B3: f64 = 0.310_352_451_033_784;
const D6_C3: f64 = 0.636_502_499_121_399;
const D6_W3: f64 = 0.082_851_075_618_374;

/// 12-point rule, exact for polynomials of total degree 6.
pub static TRIANGLE_DEGREE6: [QuadPoint; 12] = [
    qp(D6_A1, D6_A1, D6_B1, D6_W1),
    qp(D6_A1, D6_B1, D6_A1, D6_W1),
    qp(D6_B1, D6_A1, D6_A1, D6_W1),
    qp(D6_A2, D6_A2, D6_B2, D6_W2),
    qp(D6_A2, D6_B2, D6_A2, D6_W2),
    qp(D6_B2, D6_A2, D6_A2, D6_W2),
    qp(D6_A3, D6_B3, D6_C3, D6_W3),
    qp(D6_A3, D6_C3, D6_B3, D6_W3),
    qp(D6_B3, D6_A3, D6_C3, D6_W3),
    qp(D6_B3, D6_C3, D6_A3, D6_W3),
    qp(D6_C3, D6_A3, D6_B3, D6_W3),
    qp(D6_C3, D6_B3, D6_A3, D6_W3),
];

/// Gauss point on `[0, 1]`: (parameter, weight), weights sum to one.
pub type LinePoint = (f64, f64);

/// 3-point Gauss–Legendre on `[0, 1]`, exact to degree 5.
pub fn gauss3() -> [LinePoint; 3] {
    let d = 0.6f64.sqrt();
    [
        (0.5 - 0.5 * d, 5.0 / 18.0),
        (0.5, 8.0 / 18.0),
        (0.5 + 0.5 * d, 5.0 / 18.0),
    ]
}

/// 5-point Gauss–Legendre on `[0, 1]`, exact to degree 9. Used for edge
/// integrals of non-polynomial data.
pub fn gauss5() -> [LinePoint; 5] {
    let a = (5.0 - 2.0 * (10.0f64 / 7.0).sqrt()).sqrt() / 3.0;
    let b = (5.0 + 2.0 * (10.0f64 / 7.0).sqrt()).sqrt() / 3.0;
    let wa = (322.0 + 13.0 * 70.0f64.sqrt()) / 900.0;
    let wb = (322.0 - 13.0 * 70.0f64.sqrt()) / 900.0;
    let w0 = 128.0 / 225.0;
    [
        (0.5 * (1.0 - b), 0.5 * wb),
        (0.5 * (1.0 - a), 0.5 * wa),
        (0.5, 0.5 * w0),
        (0.5 * (1.0 + a), 0.5 * wa),
        (0.5 * (1.0 + b), 0.5 * wb),
    ]
}
