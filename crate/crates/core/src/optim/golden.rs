/// Golden-section search for a maximizer of `f` on `[lo, hi]`.
///
/// Returns a point within `tol` of a local maximizer; for unimodal `f` this
/// is the global one. Boundary maximizers are approached to within `tol`.
pub fn golden_section_maximize<F>(f: F, lo: f64, hi: f64, tol: f64) -> f64
where
    F: Fn(f64) -> f64,
{
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}
