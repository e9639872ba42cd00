use shapecorr::alignment::Displacement;
use shapecorr::descriptors::compute_hks;
use shapecorr::pipeline::{hierarchical_match, MatchParams};
use shapecorr::spectral::compute_basis;
use shapecorr::synth;

#[test]
fn self_match_on_small_sphere() {
    let mesh = synth::biped(2, synth::ArmPose::LeftForward).build().unwrap();
    let params = MatchParams {
        k_max: 24,
        steps: 8,
        ..Default::default()
    };
    let basis = compute_basis(&mesh, params.k_total()).unwrap();
    let hks = compute_hks(&basis, 8).unwrap();
    let init = Displacement::zeros(params.k_init);
    let res = hierarchical_match(
        &mesh, &mesh, &basis, &basis,
        Some((&hks, &hks)),
        &init, &params,
    ).unwrap();
    let n = mesh.num_vertices();
    let identity = res.point_map.assignments.iter().enumerate().filter(|(m, &s)| *m == s).count();
    println!("identity fraction {}/{n}", identity);
    println!("final energy {}", res.final_energy());
    for t in &res.levels {
        assert!(t.alignment_after_p <= t.alignment_before_p + 1e-9, "P-step not monotone at K={}", t.level);
        assert!(t.c_objective_after <= t.c_objective_before + 1e-9 * (1.0 + t.c_objective_before), "C-step not monotone at K={}", t.level);
        for w in t.displacement_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-10 * (1.0 + w[0].abs()));
        }
    }
    assert!(identity as f64 >= 0.99 * n as f64, "only {identity}/{n} identity matches");
}
