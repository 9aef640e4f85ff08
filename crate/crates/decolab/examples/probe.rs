//! Scratch probe: t=0 histogram estimate vs bin count for the presets.

use decolab::centropy::{s_c_histogram_series, HistogramGrid};
use decolab::experiments::preset;

fn main() {
    for name in ["fig3", "fig4", "fig5", "fig6", "fig7"] {
        let cfg = preset(name).expect("preset");
        let state = cfg.initial_state().expect("state");
        let integ = cfg.classical.integrator();
        let n_traj = cfg.classical.histogram.n_trajectories;
        let seed = cfg.run.seed;
        for bins in [400usize, 1024, 1600, 2048] {
            let grid = HistogramGrid { bins, half_q: 4.0, half_p: 1.5 };
            let s = &s_c_histogram_series(
                &cfg.system,
                &state,
                &[0.0],
                &integ,
                &grid,
                n_traj,
                seed,
            )
            .expect("series")[0];
            println!(
                "{name} bins={bins:4} value={:+.5} se={:.5} 2se={:.5} pass={:5} coarse={:+.5}",
                s.estimate.value,
                s.estimate.std_error,
                2.0 * s.estimate.std_error,
                s.estimate.value.abs() <= 2.0 * s.estimate.std_error,
                s.coarse_value,
            );
        }
    }
}
