//! `simulate-tuning`: forward tuning curve of the configured device.

use fluxres::resonator::tuning_curve;

use super::Context;
use crate::error::{CliError, CliResult};
use crate::formats::write_tuning_curve;
use crate::plot::SvgPlot;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RampDirection {
    Up,
    Down,
    UpDown,
}

pub struct SimulateTuningArgs {
    pub from: f64,
    pub to: f64,
    pub points: usize,
    pub direction: RampDirection,
}

pub fn run(ctx: &Context, args: &SimulateTuningArgs) -> CliResult<()> {
    let model = ctx.config.model()?;
    let ramp = build_ramp(args)?;
    let curve =
        tuning_curve(&model, &ramp).map_err(|e| CliError::Validation(format!("forward model: {e}")))?;
    let curve_path = ctx.out_dir.join("tuning_curve.csv");
    write_tuning_curve(&curve_path, &curve)?;
    if curve.applied_flux.is_empty() {
        eprintln!("warning: empty flux ramp, wrote a header-only curve file");
        println!("wrote {}", curve_path.display());
        return Ok(());
    }

    let x_range = SvgPlot::padded_range(curve.applied_flux.iter().copied(), false);
    let y_range = SvgPlot::padded_range(
        curve.resonant_frequency.iter().map(|f| f / 1e9),
        false,
    );
    let mut plot = SvgPlot::new(
        "Resonance tuning versus applied flux",
        "applied flux (Phi0)",
        x_range,
        false,
        "resonant frequency (GHz)",
        y_range,
        false,
    );
    let pts: Vec<(f64, f64)> = curve
        .applied_flux
        .iter()
        .zip(&curve.resonant_frequency)
        .map(|(x, f)| (*x, f / 1e9))
        .collect();
    plot.polyline(&pts, "#1f4e9c", 1.4);
    for jump in &curve.jump_locations {
        plot.vline(*jump, "#c0392b");
        plot.annotate(*jump, y_range.1, &format!("jump at {jump:.4}"));
    }
    let plot_path = ctx.out_dir.join("tuning_curve.svg");
    plot.save(&plot_path)?;
    println!("wrote {}", curve_path.display());
    println!("wrote {}", plot_path.display());
    for jump in &curve.jump_locations {
        println!("hysteretic jump at {jump:.5} flux quanta");
    }
    Ok(())
}

fn build_ramp(args: &SimulateTuningArgs) -> CliResult<Vec<f64>> {
    if args.points == 0 {
        return Ok(Vec::new());
    }
    if !(args.to != args.from) {
        return Err(CliError::Validation(
            "flux ramp endpoints must differ".into(),
        ));
    }
    let n = args.points.max(2);
    let leg: Vec<f64> = (0..n)
        .map(|i| args.from + (args.to - args.from) * i as f64 / (n - 1) as f64)
        .collect();
    Ok(match args.direction {
        RampDirection::Up => leg,
        RampDirection::Down => leg.into_iter().rev().collect(),
        RampDirection::UpDown => {
            let mut ramp = leg.clone();
            ramp.extend(leg.iter().rev().skip(1));
            ramp
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ramp_shapes() {
        let up = build_ramp(&SimulateTuningArgs {
            from: 0.0,
            to: 1.0,
            points: 5,
            direction: RampDirection::Up,
        })
        .unwrap();
        assert_eq!(up, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        let updown = build_ramp(&SimulateTuningArgs {
            from: 0.0,
            to: 1.0,
            points: 3,
            direction: RampDirection::UpDown,
        })
        .unwrap();
        assert_eq!(updown, vec![0.0, 0.5, 1.0, 0.5, 0.0]);
        assert!(build_ramp(&SimulateTuningArgs {
            from: 0.0,
            to: 1.0,
            points: 0,
            direction: RampDirection::Up,
        })
        .unwrap()
        .is_empty());
    }
}
