//! Fit a 1D SOS flow to the (-5, 0, 5) Gaussian mixture and compare the
//! learned map with the exact one.

use ndarray::Axis;
use sosflow::data;
use sosflow::oracle::{kr_map_1d, Cdf1D, Normal1d};
use sosflow::train::{self, mean_nll};
use sosflow::TrainConfig;

fn main() -> sosflow::Result<()> {
    let ds = data::gen("gmm3", 20_000, 1)?;
    let (train_set, _, test) = data::split(&ds, (0.8, 0.1, 0.1), 7)?;
    let config = TrainConfig {
        batch_size: 1000,
        learning_rate: 1e-3,
        epochs: 600,
        blocks: 4,
        k: 3,
        r: 3,
        hidden_sizes: vec![16],
        clip_grad: true,
        ..TrainConfig::default()
    };
    let fit = train::fit_with_history(&train_set.rows, &config)?;
    for m in fit.history.iter().filter(|m| m.epoch % 50 == 0) {
        println!("epoch {:>4}: train {:.4}, val {:.4}", m.epoch, m.train_nll, m.val_nll.unwrap_or(f64::NAN));
    }
    let truth = ds.true_nll(&test.rows).expect("synthetic")?;
    println!("test NLL {:.4} (true density {truth:.4}, {} rows)", mean_nll(&fit.model, &test.rows), test.rows.len_of(Axis(0)));

    let source = Cdf1D::new(Normal1d::new(0.0, 1.0)?);
    let target = Cdf1D::new(data::gmm3());
    println!("\n{:>6} {:>9} {:>9}", "z", "learned", "exact");
    for i in -8..=8 {
        let z = i as f64 * 0.25;
        println!("{z:>6.2} {:>9.3} {:>9.3}", fit.model.inverse(&[z])?[0], kr_map_1d(&source, &target, z)?);
    }
    Ok(())
}
