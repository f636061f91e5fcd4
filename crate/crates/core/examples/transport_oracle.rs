//! Exact 1D transport maps: the erf series between uniform and normal, and
//! the tabulated map `G⁻¹ ∘ F` from a standard normal to a mixture.

use sosflow::data;
use sosflow::oracle::{self, kr_map_1d, Cdf1D, Normal1d};
use sosflow::special::normal_quantile;

fn main() -> sosflow::Result<()> {
    println!("series coefficients c_0..c_5: {:?}", oracle::erf_coeffs(5));

    println!("\n{:>5} {:>14} {:>14} {:>10}", "z", "series K=30", "quantile", "error");
    for z in [0.1, 0.25, 0.5, 0.75, 0.9] {
        let s = oracle::uniform_to_normal(0.0, 1.0, z, 30)?;
        let q = normal_quantile(z);
        println!("{z:>5} {s:>14.10} {q:>14.10} {:>10.1e}", (s - q).abs());
    }

    let x = oracle::uniform_to_normal(2.0, 0.5, 0.3, 30)?;
    let back = oracle::normal_to_uniform(2.0, 0.5, x, 40)?;
    println!("\nround trip 0.3 -> {x:.6} -> {back:.12}");

    let source = Cdf1D::new(Normal1d::new(0.0, 1.0)?);
    let target = Cdf1D::new(data::gmm3());
    println!("\nstandard normal to the (-5, 0, 5) mixture:");
    for z in [-2.0, -1.0, -0.5, -0.43, 0.0, 0.43, 0.5, 1.0, 2.0] {
        println!("  T({z:>5}) = {:>8.4}", kr_map_1d(&source, &target, z)?);
    }
    Ok(())
}
