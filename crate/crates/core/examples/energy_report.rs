//! Per-frame imaging energy and a day of duty-cycled pipeline energy.
//!
//! `cargo run --example energy_report -- [params_file]`

use gazegate::energy::{comm_energy, energy_report, imaging_energy, isp_energy, sensor_energy, DutyTimes, EnergyParams};

fn main() -> gazegate::Result<()> {
    let params = match std::env::args().nth(1) {
        Some(path) => EnergyParams::load(path.as_ref())?,
        None => EnergyParams::calibrated(),
    };
    let im = &params.imaging;
    println!("per frame: sensor {:.3e} J, isp {:.3e} J, link {:.3e} J, total {:.3e} J",
        sensor_energy(im)?, isp_energy(im)?, comm_energy(im), imaging_energy(im)?);

    let day = 16.0 * 3600.0;
    println!("{:>8} {:>8} {:>9} {:>10} {:>9}", "fusion", "capture", "savings", "avg W", "battery h");
    for (fusion, capture) in [(0.0, 0.0), (0.05, 0.02), (0.1, 0.05), (0.3, 0.2), (1.0, 1.0)] {
        let r = energy_report(&DutyTimes::from_fractions(day, fusion, capture), &params)?;
        println!("{:>8.2} {:>8.2} {:>8.1}% {:>10.4} {:>9.2}",
            fusion, capture, 100.0 * r.savings, r.average_power_w, r.battery_hours);
    }
    Ok(())
}
