use lifted_bregman_web::{bregman_curve, circle, rate_table};

#[test]
fn small_circle_keeps_orderings() {
    let d = circle(24, 96, 0.005, 1.5e-2, 3000, 0).unwrap();
    assert_eq!(d.truth().len(), 24 * 24);
    let m = d.metrics();
    let (l2_t, tv_t, l2_lw, tv_lw, l2_tv, tv_tv) = (m[0], m[1], m[2], m[3], m[4], m[5]);
    assert!(tv_tv < tv_t && tv_t < tv_lw, "{m:?}");
    assert!((l2_tv - l2_t).abs() < (l2_lw - l2_t).abs(), "{m:?}");
}

#[test]
fn relu_curve_vanishes_only_at_the_target() {
    let pts = bregman_curve("relu", 0.0, 0.0, 0.7, -2.0, 2.0, 41).unwrap();
    for p in pts.chunks(4) {
        let (z, s, b) = (p[0], p[1], p[2]);
        assert_eq!(s, z.max(0.0));
        assert!(b >= -1e-12);
        if (z - 0.7).abs() > 1e-9 {
            assert!(b > 0.0);
        }
    }
    // B_Psi(x, z) = 1/2 (x - z)^2 when z >= 0 for ReLU
    let p = &pts[4 * 30..4 * 31];
    assert!((p[2] - 0.5 * (0.7 - p[0]).powi(2)).abs() < 1e-12);
}

#[test]
fn curve_rejects_bad_input() {
    assert!(bregman_curve("relu", 0.0, 0.0, -1.0, -1.0, 1.0, 10).is_err());
    assert!(bregman_curve("tanh", 0.0, 0.0, 0.0, -1.0, 1.0, 10).is_err());
    assert!(bregman_curve("zero", 0.0, 0.0, 0.0, 1.0, 1.0, 10).is_err());
}

#[test]
fn rate_rows_within_bound() {
    let t = rate_table(8, 32, 1.0, &[1e-1, 1e-2, 1e-3], 0).unwrap();
    assert_eq!(t.len(), 3 * 4 + 1);
    for r in t[..12].chunks(4) {
        assert!(r[2] <= r[3]);
    }
    assert!(t[12] >= 0.8);
}
