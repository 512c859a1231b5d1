//! The circuit's output entropy equals the classical replica entropy of its
//! measurement pattern, exactly.

use plaquette_mipt::circuit::{self, CircuitConfig, InitialState};
use plaquette_mipt::plaquette::build_parity_checks;
use plaquette_mipt::replica::{renyi2_via_groups, renyi2_via_replicas};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_config(rng: &mut ChaCha8Rng) -> CircuitConfig {
    let l = rng.random_range(3..=10);
    let t_max = rng.random_range(1..=8);
    let p = [0.1, 0.3, 0.5][rng.random_range(0..3)];
    let init = match rng.random_range(0..4) {
        0 => InitialState::UniformX,
        1 => InitialState::UniformZ,
        2 => InitialState::Staggered,
        _ => InitialState::Random { p_x: 0.5 },
    };
    CircuitConfig::new(l, t_max, p, init, rng.random())
}

#[test]
fn tableau_entropy_equals_replica_entropy_at_every_cut() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..150 {
        let cfg = random_config(&mut rng);
        let (_, mask) = circuit::run(&cfg).unwrap();
        let tab = circuit::final_tableau(&cfg).unwrap();
        let (grid, ic) = circuit::export_classical(&cfg, &mask).unwrap();
        let sys = build_parity_checks(&grid, &ic).unwrap();
        for cut in 0..=cfg.l {
            let qubits: Vec<usize> = (0..2 * cut).collect();
            let quantum = tab.entanglement_entropy(&qubits).unwrap();
            let region = sys.boundary_region(0..cut);
            let replica = renyi2_via_replicas(&sys, &region).unwrap().s2;
            assert_eq!(quantum, replica, "cfg {cfg:?} cut {cut}");
            assert_eq!(renyi2_via_groups(&sys, &region).unwrap().s2, replica);
        }
    }
}

#[test]
fn z_support_is_the_boundary_projection_of_ground_states() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100 {
        let cfg = random_config(&mut rng);
        let (rec, mask) = circuit::run(&cfg).unwrap();
        let (grid, ic) = circuit::export_classical(&cfg, &mask).unwrap();
        let sys = build_parity_checks(&grid, &ic).unwrap();
        let basis = plaquette_mipt::plaquette::symmetry_basis(&sys);
        let footprint_rank = basis.generators.projected_rank(sys.boundary_columns()).unwrap();
        // Dimension of the Z-basis support is the participation entropy.
        assert_eq!(footprint_rank, *rec.pe_z.last().unwrap());
    }
}
