//! The SOS building block: expand, evaluate, differentiate and invert
//! `T(z) = c + ∫₀^z Σ_κ (Σ_l a_{l,κ} u^l)² du`.

use sosflow::sospoly::{self, SosCoeffs};

fn main() -> sosflow::Result<()> {
    // k = 2 squared polynomials of degree r = 2.
    let coeffs = SosCoeffs::from_rows(&[vec![1.0, 0.0, 1.0], vec![0.0, 0.5, 0.0]], -0.3)?;
    let poly = coeffs.expand();
    println!("T has degree {} with power-basis coefficients", poly.degree());
    for (i, c) in poly.coefficients().iter().enumerate() {
        println!("  z^{i}: {c:+.6}");
    }

    println!("\n{:>6} {:>12} {:>12} {:>12}", "z", "T(z)", "T'(z)", "T^-1(T(z))");
    for i in -4..=4 {
        let z = i as f64 * 0.5;
        let x = poly.eval(z);
        let back = sospoly::invert(&coeffs, x, 1e-13)?;
        println!("{z:>6.2} {x:>12.6} {:>12.6} {back:>12.9}", coeffs.deriv(z));
    }

    // A constant map has no inverse.
    let flat = SosCoeffs::from_rows(&[vec![0.0, 0.0]], 1.0)?;
    println!("\ninverting a constant map: {:?}", sospoly::invert(&flat, 2.0, 1e-12).unwrap_err());
    Ok(())
}
