//! Small numeric helpers. Storage is float32 throughout the crate; every
//! reduction (dot products, sums, softmax) accumulates in float64.

/// Dot product of two equal-length f32 slices, accumulated left-to-right in
/// f64. The fixed order keeps results bit-identical across runs.
pub fn dot_f64(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0f64;
    for (x, y) in a.iter().zip(b.iter()) {
        acc += *x as f64 * *y as f64;
    }
    acc
}

pub fn l2_norm(v: &[f32]) -> f64 {
    dot_f64(v, v).sqrt()
}

/// Cosine of two unit-norm vectors, i.e. their dot product. Bitwise-identical
/// inputs short-circuit to exactly 1.0 so that self-similarity is exact even
/// when float32 rounding leaves the stored norm a few ulps away from 1; the
/// strict `< tau` gate at `tau = 1.0` then excludes exact duplicates and
/// nothing else.
pub fn unit_cos(a: &[f32], b: &[f32]) -> f64 {
    if a == b {
        return 1.0;
    }
    dot_f64(a, b)
}

/// Compensated (Neumaier) summation; used where a sum is checked against a
/// tight tolerance.
pub fn neumaier_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}
