use num_complex::Complex64;

/// Trigamma function psi'(w) for Re w > 0.
pub fn trigamma(w: Complex64) -> Complex64 {
    assert!(w.re > 0.0, "trigamma evaluated off the right half plane: {w}");
    let mut w = w;
    let mut acc = Complex64::new(0.0, 0.0);
    while w.norm() < 12.0 {
        acc += 1.0 / (w * w);
        w += 1.0;
    }
    // psi'(w) ~ 1/w + 1/(2w^2) + sum_k B_2k / w^(2k+1)
    const B: [f64; 7] = [1.0 / 6.0, -1.0 / 30.0, 1.0 / 42.0, -1.0 / 30.0, 5.0 / 66.0, -691.0 / 2730.0, 7.0 / 6.0];
    let inv = 1.0 / w;
    let inv2 = inv * inv;
    let mut series = Complex64::new(0.0, 0.0);
    for b in B.iter().rev() {
        series = series * inv2 + b;
    }
    acc + inv + 0.5 * inv2 + series * inv2 * inv
}
