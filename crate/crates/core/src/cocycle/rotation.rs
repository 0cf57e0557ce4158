use crate::lattice::OperatorSpec;
use std::f64::consts::PI;

/// Fibered rotation number estimated by the projective winding of the
/// vector `(u(n), u(n-1))` over `iterates` steps starting at site 0.
///
/// The direction is kept as an angle `φ ∈ [0, π)`. One step sends
/// `cot φ' = a - tan φ` with `a = E - V(n)`, and the degree-one lift adds
/// `π` whenever `φ ≥ π/2`. The estimate is `total lift / (2π·iterates)`,
/// which makes `N(E) = 1 - 2ρ` for the integrated density of states.
pub fn rotation_number(op: &OperatorSpec, energy: f64, iterates: usize) -> f64 {
    if iterates == 0 {
        return 0.0;
    }
    let (mut c, mut s) = (1.0f64, 0.0f64);
    let mut phi = 0.0f64;
    let mut total = 0.0f64;
    for n in 0..iterates as i64 {
        let a = energy - op.eval_site(n);
        let (mut x, mut y) = (a * c - s, c);
        // projective representative in the closed upper half plane
        if y < 0.0 || (y == 0.0 && x < 0.0) {
            x = -x;
            y = -y;
        }
        let r = x.hypot(y);
        let (nc, ns) = (x / r, y / r);
        let new_phi = ns.atan2(nc);
        let new_phi = if new_phi >= PI { 0.0 } else { new_phi };
        let wrap = if c <= 0.0 { PI } else { 0.0 };
        total += new_phi + wrap - phi;
        phi = new_phi;
        c = nc;
        s = ns;
    }
    total / (2.0 * PI * iterates as f64)
}
