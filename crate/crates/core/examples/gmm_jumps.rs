//! Where the exact normal-to-mixture map jumps, and how its slope settles to
//! the outer component's standard deviation.

use sosflow::oracle::{analyze_gmm_map, Gmm1D};

fn main() -> sosflow::Result<()> {
    let grid: Vec<f64> = (0..=4000).map(|i| -8.0 + 16.0 * i as f64 / 4000.0).collect();
    for means in [vec![-20.0, 20.0], vec![-20.0, -5.0, 15.0]] {
        let g = Gmm1D::equal_weights(&means, &vec![1.0; means.len()])?;
        let a = analyze_gmm_map(&g, &grid)?;
        println!("means {means:?}");
        println!("  threshold {:.3e}", a.threshold);
        for (lo, hi) in &a.jump_intervals {
            println!("  jump over z in [{lo:.3}, {hi:.3}]");
        }
        println!("  end slopes {:.4} / {:.4} (limits {:?})", a.end_slopes.0, a.end_slopes.1, a.asymptotic_slopes);
    }
    Ok(())
}
