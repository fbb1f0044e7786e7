use kernel_pi_web::{
    controller_error_values, greedy_candidate_point, power_map_values, MAX_PROBE_N,
};

const GRID3: [f64; 18] = [
    -1.0, -1.0, -1.0, 0.0, -1.0, 1.0, 0.0, -1.0, 0.0, 0.0, 0.0, 1.0, 1.0, -1.0, 1.0, 0.0, 1.0, 1.0,
];

#[test]
fn power_map_layout_and_zeros_at_centers() {
    let v = power_map_values("matern52", 0.5, &GRID3, 21).unwrap();
    assert_eq!(v.len(), 21 * 21);
    // Probe (i, j) sits at (-1 + i/10, -1 + j/10); centers land on i, j in {0, 10, 20}.
    for i in [0usize, 10, 20] {
        for j in [0usize, 10, 20] {
            assert_eq!(v[i * 21 + j], 0.0);
        }
    }
    assert!(v.iter().all(|p| (0.0..=1.0).contains(p)));
}

#[test]
fn greedy_candidate_is_the_map_maximum() {
    let v = power_map_values("gaussian", 0.7, &GRID3, 41).unwrap();
    let c = greedy_candidate_point("gaussian", 0.7, &GRID3, 41).unwrap();
    let max = v.iter().cloned().fold(0.0, f64::max);
    assert_eq!(c[2], max);

    let mut more = GRID3.to_vec();
    more.extend_from_slice(&c[..2]);
    let after = power_map_values("gaussian", 0.7, &more, 41).unwrap();
    assert!(after.iter().cloned().fold(0.0, f64::max) < max);
}

#[test]
fn controller_error_shrinks_with_the_grid() {
    let sup = |n| {
        controller_error_values("matern52", 0.8, n, 20, 31)
            .unwrap()
            .into_iter()
            .fold(0.0, f64::max)
    };
    let (coarse, fine) = (sup(3), sup(7));
    assert!(fine < coarse, "{fine} vs {coarse}");
    assert_eq!(
        controller_error_values("matern52", 0.8, 5, 20, 31)
            .unwrap()
            .len(),
        31 * 31
    );
}

#[test]
fn bad_inputs_are_rejected() {
    assert!(power_map_values("matern52", 0.5, &[0.0], 21).is_err());
    assert!(power_map_values("matern52", 0.5, &[2.0, 0.0], 21).is_err());
    assert!(power_map_values("cauchy", 0.5, &GRID3, 21).is_err());
    assert!(power_map_values("matern52", -1.0, &GRID3, 21).is_err());
    assert!(power_map_values("matern52", 0.5, &GRID3, MAX_PROBE_N + 1).is_err());
    assert!(controller_error_values("matern12", 0.5, 5, 20, 21).is_err());
    assert!(controller_error_values("matern52", 0.5, 40, 20, 21).is_err());
}
