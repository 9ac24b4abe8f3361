use proptest::prelude::*;
use rdest::ba::{rd_curve, rd_solve, BaConfig, DEFAULT_TOL_D};
use rdest::dual::{log_mgf, rate_dual};
use rdest::estimators::{
    arginf_estimate, empirical, lossy_likelihood, penalized_estimate, plugin_parametric, plugin_rd, Penalty, Sample,
};
use rdest::symbol::int_alphabet;
use rdest::{normalize, DistortionModel, ExtReal, FiniteDist, ParamFamily, Symbol};

#[derive(Clone, Debug)]
struct Instance {
    p: FiniteDist,
    q: FiniteDist,
    model: DistortionModel,
}

fn dist(weights: &[f64]) -> FiniteDist {
    normalize(weights, int_alphabet(0, weights.len() as i64 - 1)).unwrap()
}

fn instance() -> impl Strategy<Value = Instance> {
    (2usize..=5, 2usize..=5).prop_flat_map(|(a, b)| {
        (
            prop::collection::vec(0.05f64..1.0, a),
            prop::collection::vec(0.05f64..1.0, b),
            prop::collection::vec(prop::collection::vec(0.0f64..2.0, b), a),
        )
            .prop_map(move |(pw, qw, rows)| Instance {
                p: dist(&pw),
                q: dist(&qw),
                model: DistortionModel::matrix(int_alphabet(0, a as i64 - 1), int_alphabet(0, b as i64 - 1), rows)
                    .unwrap(),
            })
    })
}

fn range(inst: &Instance) -> (f64, f64) {
    (
        rdest::dual::d_min(&inst.p, &inst.q, &inst.model).unwrap(),
        rdest::dual::d_ave(&inst.p, &inst.q, &inst.model).unwrap(),
    )
}

fn binary_sample() -> impl Strategy<Value = Sample> {
    prop::collection::vec(0i64..3, 5..60).prop_map(|v| Sample::discrete(v.into_iter().map(Symbol::Int).collect()).unwrap())
}

fn ternary_model() -> DistortionModel {
    let a = int_alphabet(0, 2);
    DistortionModel::hamming(a.clone(), a).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn log_mgf_is_convex_in_lambda(inst in instance(), a in -20.0f64..0.0, b in -20.0f64..0.0, t in 0.0f64..1.0) {
        let (l1, l3) = if a < b { (a, b) } else { (b, a) };
        let l2 = l1 + t * (l3 - l1);
        let f = |l: f64| log_mgf(&inst.p, &inst.q, &inst.model, l).unwrap();
        let chord = f(l1) + t * (f(l3) - f(l1));
        prop_assert!(f(l2) <= chord + 1e-10);
        // so the dual objective lambda D - Lambda(lambda) is concave
        let d = 0.7;
        let g = |l: f64| l * d - f(l);
        prop_assert!(g(l2) >= g(l1) + t * (g(l3) - g(l1)) - 1e-10);
    }

    #[test]
    fn rate_dual_piecewise_structure(inst in instance()) {
        let (dmin, dave) = range(&inst);
        let r = |d: f64| rate_dual(&inst.p, &inst.q, &inst.model, d).unwrap().rate;
        prop_assert_eq!(r(dmin - 1e-6), ExtReal::Infinite);
        prop_assert_eq!(r(dave), ExtReal::ZERO);
        prop_assert_eq!(r(dave + 1.0), ExtReal::ZERO);
        if dave - dmin > 1e-6 {
            let vals: Vec<f64> = (1..20).map(|i| r(dmin + (dave - dmin) * i as f64 / 20.0).to_f64()).collect();
            prop_assert!(vals.iter().all(|v| v.is_finite() && *v > 0.0));
            prop_assert!(vals.windows(2).all(|w| w[1] <= w[0] + 1e-9));
            prop_assert!(vals.windows(3).all(|w| w[0] - 2.0 * w[1] + w[2] >= -1e-8));
        }
    }

    #[test]
    fn codebook_rate_dominates_rate_distortion(inst in instance(), t in 0.05f64..0.95) {
        let (lo, hi) = rdest::ba::d_floor_and_dmax(&inst.p, &inst.model).unwrap();
        let d = lo + (hi - lo) * t;
        let sol = rd_solve(&inst.p, &inst.model, d, DEFAULT_TOL_D, &BaConfig::default()).unwrap();
        let r = sol.rate.to_f64();
        let any = rate_dual(&inst.p, &inst.q, &inst.model, d).unwrap().rate;
        prop_assert!(any >= ExtReal::Finite(r - 1e-9));
        let at_optimum = rate_dual(&inst.p, &sol.output.unwrap(), &inst.model, d).unwrap().rate.to_f64();
        // an unconverged solve is only trusted up to its reported gap
        let tol = if sol.converged { 1e-6 } else { 1e-6 + sol.gap };
        prop_assert!((at_optimum - r).abs() <= tol, "{} vs {}", at_optimum, r);
    }

    #[test]
    fn rate_distortion_nonincreasing_and_convex(inst in instance()) {
        let (lo, hi) = rdest::ba::d_floor_and_dmax(&inst.p, &inst.model).unwrap();
        prop_assume!(hi - lo > 1e-3);
        let sols: Vec<_> = (0..=12)
            .map(|i| {
                let d = lo + (hi - lo) * (0.02 + 0.96 * i as f64 / 12.0);
                let s = rd_solve(&inst.p, &inst.model, d, DEFAULT_TOL_D, &BaConfig::default()).unwrap();
                (s.rate.to_f64(), if s.converged { 0.0 } else { s.gap })
            })
            .collect();
        prop_assert!(sols.windows(2).all(|w| w[1].0 <= w[0].0 + 1e-8 + w[0].1 + w[1].1));
        prop_assert!(
            sols.windows(3).all(|w| w[0].0 - 2.0 * w[1].0 + w[2].0 >= -1e-7 - w[0].1 - 2.0 * w[1].1 - w[2].1),
            "{:?}",
            sols
        );
    }

    #[test]
    fn slopes_support_the_curve(inst in instance()) {
        let slopes = [-8.0, -4.0, -2.0, -1.0, -0.5, -0.25];
        let pts = rd_curve(&inst.p, &inst.model, &slopes, &BaConfig::default()).unwrap();
        for a in pts.iter().filter(|a| a.converged) {
            for b in &pts {
                let (da, ra) = (a.point.distortion, a.point.rate.to_f64());
                let (db, rb) = (b.point.distortion, b.point.rate.to_f64());
                prop_assert!(rb >= ra + a.point.slope * (db - da) - 1e-6);
            }
        }
    }

    #[test]
    fn plugin_below_every_codebook_rate(sample in binary_sample(), d in 0.0f64..0.8, qs in prop::collection::vec(prop::collection::vec(0.05f64..1.0, 3), 1..5)) {
        let model = ternary_model();
        let family = ParamFamily::grid_from(qs.iter().map(|w| dist(w)).collect()).unwrap();
        let plug = plugin_rd(&sample, &model, d).unwrap().estimate;
        let fam = plugin_parametric(&sample, &family, &model, d).unwrap().estimate;
        prop_assert!(plug <= fam + 1e-5);
        let p_emp = empirical(&sample).unwrap();
        for w in &qs {
            let r = rate_dual(&p_emp, &dist(w), &model, d).unwrap().rate;
            prop_assert!(plug <= r + 1e-5);
        }
    }

    #[test]
    fn penalty_never_lowers_the_estimate(sample in binary_sample(), d in 0.0f64..0.8, c in 0.0f64..5.0, qs in prop::collection::vec(prop::collection::vec(0.05f64..1.0, 3), 1..5)) {
        let model = ternary_model();
        let family = ParamFamily::grid_from(qs.iter().map(|w| dist(w)).collect()).unwrap();
        let base = plugin_parametric(&sample, &family, &model, d).unwrap().estimate;
        let complexity: Vec<f64> = (0..qs.len()).map(|i| i as f64).collect();
        for penalty in [Penalty::Constant { c }, Penalty::Complexity { c, complexity }] {
            let pen = penalized_estimate(&sample, &family, &model, d, &penalty).unwrap().estimate;
            prop_assert!(pen >= base);
        }
    }

    #[test]
    fn lossy_likelihood_above_codebook_rate(xs in prop::collection::vec(0i64..3, 1..7), qw in prop::collection::vec(0.05f64..1.0, 1..4), d in 0.0f64..1.0) {
        let sample = Sample::discrete(xs.into_iter().map(Symbol::Int).collect()).unwrap();
        let q = dist(&qw);
        let model = DistortionModel::hamming(int_alphabet(0, 2), int_alphabet(0, qw.len() as i64 - 1)).unwrap();
        let v = lossy_likelihood(&sample, &q, &model, d).unwrap();
        let lower = rate_dual(&empirical(&sample).unwrap(), &q, &model, d).unwrap().rate;
        match lower {
            ExtReal::Infinite => prop_assert_eq!(v, ExtReal::Infinite),
            ExtReal::Finite(l) => prop_assert!(v >= ExtReal::Finite(l - 1e-9)),
        }
    }

    #[test]
    fn arginf_theta_attains_value(values in prop::collection::vec(-3.0f64..3.0, 5..80), d in 0.05f64..1.0) {
        let sample = Sample::real(values).unwrap();
        let family = ParamFamily::gaussian((-3.0, 3.0), (0.0, 3.0)).unwrap();
        let model = DistortionModel::squared_error(vec![], vec![]).unwrap();
        let eps = 1e-4;
        let r = arginf_estimate(&sample, &family, &model, d, Some(eps)).unwrap();
        match (r.rate, r.theta_rate) {
            (ExtReal::Finite(v), ExtReal::Finite(t)) => prop_assert!(t <= v + eps && t >= v - 1e-9),
            (v, t) => prop_assert_eq!(v, t),
        }
    }
}

#[test]
fn penalty_gap_vanishes_with_n() {
    let model = ternary_model();
    let family = ParamFamily::grid_from(vec![dist(&[1.0, 1.0, 1.0]), dist(&[4.0, 1.0, 1.0])]).unwrap();
    let penalty = Penalty::Constant { c: 2.0 };
    let source = rdest::sources::SourceSpec::iid(dist(&[0.5, 0.3, 0.2]), 9);
    let mut gaps = Vec::new();
    for n in [10, 100, 1000, 10_000] {
        let sample = rdest::sources::generate(&source, n).unwrap();
        let pen = penalized_estimate(&sample, &family, &model, 0.2, &penalty).unwrap().estimate.to_f64();
        let base = plugin_parametric(&sample, &family, &model, 0.2).unwrap().estimate.to_f64();
        assert!(pen >= base);
        gaps.push(pen - base);
    }
    assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
    assert!(gaps[3] < 1e-3);
}
