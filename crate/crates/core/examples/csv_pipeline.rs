//! Generate a dataset, round-trip it through CSV, split it and evaluate the
//! true log-likelihood on each part.

use sosflow::data;

fn main() -> sosflow::Result<()> {
    let ds = data::gen("mog_grid", 5_000, 4)?;
    let path = std::env::temp_dir().join("mog_grid.csv");
    ds.save_csv(&path)?;

    let (loaded, report) = data::load_csv(&path, b',')?;
    println!(
        "read {} x {} from {} (header {:?}, {} rows rejected)",
        loaded.n(),
        loaded.d(),
        path.display(),
        report.header,
        report.rejected_lines.len()
    );

    let (train, val, test) = data::split(&ds, (0.8, 0.1, 0.1), 0)?;
    for part in [&train, &val, &test] {
        let nll = part.true_nll(&part.rows).expect("synthetic")?;
        println!("{:<16} {:>5} rows, true NLL {nll:.4}", part.name, part.n());
    }
    Ok(())
}
