//! `validate-config`: check the configuration and print its normalized form.

use super::Context;
use crate::error::CliResult;

pub fn run(ctx: &Context) -> CliResult<()> {
    // The context constructor already parsed and validated; re-validate to
    // keep this verb meaningful if construction ever gets lazier.
    ctx.config.validate()?;
    let model = ctx.config.model()?;
    println!("{}", ctx.config.to_toml());
    println!("# configuration OK");
    println!(
        "# derived: Z0 = {:.3} ohm, phase velocity = {:.4e} m/s, length = {:.4} mm",
        model.line.characteristic_impedance,
        model.line.phase_velocity,
        model.physical_length * 1e3
    );
    println!(
        "# derived: beta_L = {:.4}, LJ(0) = {:.4} pH",
        fluxres::squid::beta_l(&model.squid),
        model.squid.junction_inductance_zero * 1e12
    );
    Ok(())
}
