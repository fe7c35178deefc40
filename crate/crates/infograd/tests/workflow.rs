//! Cross-module workflow through the public API only: build a channel
//! and prior from raw data, estimate information two ways, check the
//! gradient against the expected-divergence route, and improve the
//! design, exactly as a library consumer would.

use infograd::bregman::poisson_phi_gradient_via_divergence;
use infograd::channels::PoissonChannel;
use infograd::design::{design_phi, Constraint, DesignMi, DesignOptions, DesignProblem};
use infograd::gradients::poisson_gradients_enum_with_cap;
use infograd::information::{mi_poisson_enum_with_cap, mi_poisson_mc, DEFAULT_CELL_CAP};
use infograd::input_model::FiniteDistribution;
use infograd::numerics::{Matrix, RngStream};

fn sensor_pair() -> (PoissonChannel, FiniteDistribution) {
    let phi = Matrix::from_rows(&[vec![0.8, 0.3], vec![0.1, 1.2]]).unwrap();
    let ch = PoissonChannel::new(phi, vec![0.2, 0.3]).unwrap();
    let d = FiniteDistribution::new(
        vec![vec![0.5, 1.5], vec![2.0, 0.25], vec![1.0, 1.0]],
        vec![0.5, 0.3, 0.2],
    )
    .unwrap();
    (ch, d)
}

#[test]
fn estimators_and_gradient_routes_agree_on_a_fresh_instance() {
    let (ch, d) = sensor_pair();

    let exact = mi_poisson_enum_with_cap(&ch, &d, 1e-12, DEFAULT_CELL_CAP).unwrap();
    assert!(exact.value > 0.0 && exact.value < (3.0f64).ln());

    let mc = mi_poisson_mc(&ch, &d, 200_000, &RngStream::new(314, 0)).unwrap();
    let gap = (mc.value - exact.value).abs();
    assert!(
        gap <= 5.0 * mc.error_bound,
        "Monte Carlo off by {gap:.3e} with standard error {:.3e}",
        mc.error_bound
    );

    let grads = poisson_gradients_enum_with_cap(&ch, &d, 1e-12, DEFAULT_CELL_CAP).unwrap();
    let via_div = poisson_phi_gradient_via_divergence(&ch, &d, 1e-12, DEFAULT_CELL_CAP).unwrap();
    let route_gap = via_div.sub(&grads.phi).unwrap().max_abs();
    assert!(route_gap <= 1e-8, "gradient routes differ by {route_gap:.3e}");
}

#[test]
fn a_designed_channel_beats_the_seeded_start() {
    let (_, d) = sensor_pair();
    let problem =
        DesignProblem::seeded(d, 2, vec![0.2, 0.3], Constraint::Box01, 99).unwrap();
    let options = DesignOptions {
        max_iters: 30,
        tol: 1e-6,
        mi: DesignMi::Enumeration {
            epsilon: 1e-9,
            cell_cap: DEFAULT_CELL_CAP,
        },
    };
    let trace = design_phi(&problem, &options).unwrap();
    assert!(trace.final_mi() >= trace.initial_mi());
    for pair in trace.accepted_mis().windows(2) {
        assert!(pair[1] >= pair[0]);
    }
}
