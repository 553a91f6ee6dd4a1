//! Runs every method on the standard desk benchmark and prints the
//! seed-averaged error table.

use tribekit::harness::{run_matrix, summary_table, DeskBenchmark, Experiment};
use tribekit::{Method, TribeHyperParams};

fn main() -> tribekit::Result<()> {
    let desk = DeskBenchmark::default();
    let data = desk.dataset()?;
    let source = desk.source(&data)?;
    println!("clean accuracy {:.3}", source.accuracy(&data.clean)?);
    for d in &data.domains {
        println!("{:<20} accuracy {:.3}", d.name, source.accuracy(&d.data)?);
    }
    let exp = Experiment::new(
        &source,
        data.domains.iter().map(|d| &d.data).collect(),
        desk.protocol.clone(),
        TribeHyperParams::for_classes(desk.synth.classes),
    );
    let seeds: Vec<u64> = (0..5).collect();
    let outcome = run_matrix(&[exp], &Method::ALL, &seeds, 4)?;
    print!("{}", summary_table(&outcome.summary()));
    Ok(())
}
