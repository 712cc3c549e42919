use degenkit_web::{ensemble_map, rotation_scan, trial};

#[test]
fn trial_has_one_series_per_dimension() {
    let v = trial("flip_flop", 3, 7).unwrap();
    assert_eq!(v.inputs.len(), 3);
    assert_eq!(v.targets.len(), 3);
    assert!(v.inputs.iter().all(|s| s.len() == v.time));
    assert_eq!(trial("path_3d", 1, 0).unwrap().targets.len(), 3);
    assert!(trial("maze", 1, 0).is_err());
}

#[test]
fn scan_agrees_with_solver() {
    let a = [0.9, 0.3, -0.2, 0.5];
    let b = [0.4, -0.1, 0.6, 0.8];
    let v = rotation_scan(&a, &b, 7200).unwrap();
    assert_eq!(v.rotations.len(), 7200);
    assert!(v.solver_distance <= v.grid_min + 1e-9);
    assert!(v.grid_min - v.solver_distance < 1e-4);

    // B = R A R^T is at distance zero.
    let (s, c) = 0.7f64.sin_cos();
    let r = nalgebra::Matrix2::new(c, -s, s, c);
    let am = nalgebra::Matrix2::new(a[0], a[1], a[2], a[3]);
    let bm = r * am * r.transpose();
    let v = rotation_scan(&a, &[bm[(0, 0)], bm[(0, 1)], bm[(1, 0)], bm[(1, 1)]], 360).unwrap();
    assert!(v.solver_distance < 1e-6);
    assert!(rotation_scan(&a, &b[..3], 10).is_err());
}

#[test]
fn small_ensemble_embeds() {
    let v = ensemble_map(1, 3, 6, 2).unwrap();
    assert_eq!(v.coords.len(), 3);
    for i in 0..3 {
        assert_eq!(v.pif[i][i], 0.0);
        for j in 0..3 {
            assert_eq!(v.pif[i][j], v.pif[j][i]);
        }
    }
    assert!(ensemble_map(1, 1, 6, 2).is_err());
}
