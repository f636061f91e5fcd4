//! Masked conditioner: the coefficients for dimension j only see inputs
//! before j, which makes every block triangular.

use sosflow::MaskedNet;

fn main() -> sosflow::Result<()> {
    let mut net = MaskedNet::build(3, &[12, 12], 2, 2, 7)?;
    println!("{} parameters, {} outputs per dimension", net.param_len(), net.out_per_dim());

    // Starts at the identity map for every dimension.
    let init = net.forward(&[0.4, -1.0, 2.0])?;
    for (j, c) in init.coeffs.iter().enumerate() {
        println!("dim {j}: T(0.5) = {:.3}, T'(0.5) = {:.3}", c.expand().eval(0.5), c.deriv(0.5));
    }

    net.perturb(0.5, 1);
    let base = net.forward_raw(&[0.4, -1.0, 2.0])?;
    let per = net.out_per_dim();
    println!("\nwhich output blocks move when one input changes:");
    for i in 0..3 {
        let mut x = vec![0.4, -1.0, 2.0];
        x[i] += 1.0;
        let moved = net.forward_raw(&x)?;
        let changed: Vec<usize> = (0..3)
            .filter(|&j| (0..per).any(|o| moved[j * per + o] != base[j * per + o]))
            .collect();
        println!("  input {i} -> dims {changed:?}");
    }
    Ok(())
}
