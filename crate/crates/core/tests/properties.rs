//! Property tests for the library invariants, driven by random seeds and
//! scalars.

use std::path::Path;

use mvi_core::data::{gen_gcn_teacher, gen_probit, gen_two_moons, teacher_dataset};
use mvi_core::graph::{
    erdos_renyi, format_edge_list, gcn_filter, normalized_laplacian, parse_edge_list, spectral_split,
};
use mvi_core::network::{init_params, FilterKind, InitScheme, LayerParams, LayerSpec, LossKind, Mode, Network};
use mvi_core::numerics::{
    activation_vjp, apply_activation, gaussian, normal_cdf, sym_eig, ActivationKind, Matrix, RngStream,
};
use mvi_core::vi::{last_layer_operator, layer_operators, ParamDomain};
use proptest::prelude::*;

fn symmetric(seed: u64, n: usize) -> Matrix {
    let a = gaussian(RngStream::new(seed, 0), 0.0, 1.0, n, n);
    a.add(&a.transpose()).unwrap()
}

fn smooth_activation(i: usize) -> ActivationKind {
    [
        ActivationKind::Sigmoid,
        ActivationKind::Softplus { beta: 1.5 },
        ActivationKind::NormalCdf,
        ActivationKind::Softmax,
    ][i]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_rows_sum_to_one(seed in any::<u64>(), scale in 1e-3f64..500.0) {
        let z = gaussian(RngStream::new(seed, 1), 0.0, scale, 6, 5);
        let p = apply_activation(ActivationKind::Softmax, &z).unwrap();
        for i in 0..p.rows() {
            prop_assert!((p.row(i).iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn activation_vjp_matches_central_differences(seed in any::<u64>(), which in 0usize..4) {
        let act = smooth_activation(which);
        let z = gaussian(RngStream::new(seed, 2), 0.0, 2.0, 3, 4);
        let up = gaussian(RngStream::new(seed, 3), 0.0, 1.0, 3, 4);
        let an = activation_vjp(act, &z, &up).unwrap();
        let h = 1e-5;
        let objective = |m: &Matrix| apply_activation(act, m).unwrap().dot(&up).unwrap();
        for idx in 0..z.len() {
            let mut a = z.clone();
            let mut b = z.clone();
            a.as_mut_slice()[idx] += h;
            b.as_mut_slice()[idx] -= h;
            let fd = (objective(&a) - objective(&b)) / (2.0 * h);
            let v = an.as_slice()[idx];
            prop_assert!((fd - v).abs() <= 1e-5 * v.abs().max(1.0), "{fd} vs {v}");
        }
    }

    #[test]
    fn rayleigh_quotient_within_spectrum(seed in any::<u64>(), n in 1usize..9) {
        let a = symmetric(seed, n);
        let eig = sym_eig(&a).unwrap();
        for k in 0..20 {
            let v = gaussian(RngStream::new(seed, 100 + k), 0.0, 1.0, n, 1);
            let q = v.t_matmul(&a.matmul(&v).unwrap()).unwrap()[(0, 0)] / v.dot(&v).unwrap();
            prop_assert!(eig.min() - 1e-10 <= q && q <= eig.max() + 1e-10);
        }
    }

    #[test]
    fn normal_cdf_is_non_decreasing(a in -8.0f64..8.0, d in 0.0f64..1.0) {
        prop_assert!(normal_cdf(a) <= normal_cdf(a + d));
    }

    #[test]
    fn gcn_filter_is_linear(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let g = erdos_renyi(7, 0.4, RngStream::new(seed, 4)).unwrap();
        let x = gaussian(RngStream::new(seed, 5), 0.0, 1.0, 7, 3);
        let y = gaussian(RngStream::new(seed, 6), 0.0, 1.0, 7, 3);
        let mut mix = x.scale(a);
        mix.axpy(b, &y).unwrap();
        let lhs = gcn_filter(&g, &mix).unwrap();
        let mut rhs = gcn_filter(&g, &x).unwrap().scale(a);
        rhs.axpy(b, &gcn_filter(&g, &y).unwrap()).unwrap();
        prop_assert!(lhs.max_abs_diff(&rhs).unwrap() <= 1e-10);
    }

    #[test]
    fn laplacian_spectrum_in_zero_two(seed in any::<u64>(), n in 2usize..12) {
        let g = erdos_renyi(n, 0.5, RngStream::new(seed, 7)).unwrap();
        let eig = sym_eig(&normalized_laplacian(&g).unwrap()).unwrap();
        prop_assert!(eig.min() >= -1e-10 && eig.max() <= 2.0 + 1e-10);
    }

    #[test]
    fn spectral_parts_are_orthogonal(seed in any::<u64>(), k in 0usize..9) {
        let g = erdos_renyi(8, 0.5, RngStream::new(seed, 8)).unwrap();
        let s = spectral_split(&g, k).unwrap();
        if s.high_basis.cols() > 0 && s.low_basis.cols() > 0 {
            prop_assert!(s.high_basis.t_matmul(&s.low_basis).unwrap().max_abs() <= 1e-8);
        }
    }

    #[test]
    fn edge_list_round_trips(seed in any::<u64>(), n in 1usize..15) {
        let g = erdos_renyi(n, 0.6, RngStream::new(seed, 9)).unwrap();
        let text = format_edge_list(&g);
        let back = parse_edge_list(&text, Path::new("mem")).unwrap();
        prop_assert_eq!(format_edge_list(&back), text);
    }

    #[test]
    fn forward_is_deterministic_and_checkpoints_round_trip(seed in any::<u64>()) {
        let g = erdos_renyi(5, 0.5, RngStream::new(seed, 10)).unwrap();
        let spec = vec![
            LayerSpec::new(FilterKind::Sage, ActivationKind::Softplus { beta: 1.0 }, 2, 3),
            LayerSpec::new(FilterKind::Gcn, ActivationKind::Sigmoid, 3, 1),
        ];
        let net = init_params(spec, Some(g), 5, InitScheme::Teacher, RngStream::new(seed, 11)).unwrap();
        let x = gaussian(RngStream::new(seed, 12), 0.0, 1.0, 20, 2);
        let a = net.predict(&x, Mode::Eval).unwrap();
        prop_assert_eq!(&a, &net.predict(&x, Mode::Eval).unwrap());
        let text = net.to_json().unwrap();
        let back = Network::from_json(&text).unwrap();
        prop_assert_eq!(back.to_json().unwrap(), text);
        prop_assert_eq!(a, back.predict(&x, Mode::Eval).unwrap());
    }

    #[test]
    fn sigmoid_operator_is_monotone(seed in any::<u64>(), sd in 0.1f64..4.0) {
        let g = erdos_renyi(6, 0.5, RngStream::new(seed, 13)).unwrap();
        let spec = vec![LayerSpec::new(FilterKind::Gcn, ActivationKind::Sigmoid, 2, 2)];
        let mut a = init_params(spec.clone(), Some(g.clone()), 6, InitScheme::Glorot, RngStream::new(seed, 14)).unwrap();
        let mut b = a.clone();
        for (net, k) in [(&mut a, 15), (&mut b, 16)] {
            let w = gaussian(RngStream::new(seed, k), 0.0, sd, 2, 2);
            let bias = gaussian(RngStream::new(seed, k + 10), 0.0, sd, 1, 2);
            net.set_params(vec![LayerParams::new(w, Some(bias)).unwrap()]).unwrap();
        }
        let x = gaussian(RngStream::new(seed, 17), 0.0, 1.0, 30, 2);
        let y = gaussian(RngStream::new(seed, 18), 0.0, 1.0, 30, 2).map(|v| f64::from(v > 0.0));
        let op = |n: &Network| {
            let (_, t) = n.forward(&x, Mode::Train).unwrap();
            last_layer_operator(n, &t, &y).unwrap().value
        };
        let df = op(&a).sub(&op(&b)).unwrap();
        let dt = a.params()[0].sub(&b.params()[0]).unwrap();
        prop_assert!(df.dot(&dt).unwrap() >= -1e-10);
    }

    #[test]
    fn per_sample_operators_average_to_the_batch(seed in any::<u64>(), batch in 1usize..8) {
        let g = erdos_renyi(4, 0.6, RngStream::new(seed, 19)).unwrap();
        let spec = vec![
            LayerSpec::new(FilterKind::Gcn, ActivationKind::NormalCdf, 2, 3),
            LayerSpec::new(FilterKind::Dense, ActivationKind::Sigmoid, 3, 1),
        ];
        let net = init_params(spec, Some(g), 4, InitScheme::Teacher, RngStream::new(seed, 20)).unwrap();
        let x = gaussian(RngStream::new(seed, 21), 0.0, 1.0, 4 * batch, 2);
        let y = gaussian(RngStream::new(seed, 22), 0.0, 1.0, 4 * batch, 1).map(|v| f64::from(v > 0.0));
        let (_, t) = net.forward(&x, Mode::Train).unwrap();
        let full = layer_operators(&net, &t, &y, LossKind::Mse).unwrap();
        let mut mean: Vec<_> = full.iter().map(|o| o.value.zeros_like()).collect();
        for s in 0..batch {
            let (_, ts) = net.forward(&x.row_block(4 * s, 4), Mode::Train).unwrap();
            for (m, o) in mean.iter_mut().zip(layer_operators(&net, &ts, &y.row_block(4 * s, 4), LossKind::Mse).unwrap()) {
                m.axpy(1.0 / batch as f64, &o.value).unwrap();
            }
        }
        for (m, f) in mean.iter().zip(&full) {
            prop_assert!(m.sub(&f.value).unwrap().norm() <= 1e-12);
        }
    }

    #[test]
    fn ball_projection_is_non_expansive(seed in any::<u64>(), radius in 0.1f64..5.0) {
        let domain = ParamDomain::EuclideanBall { radius };
        let spec = vec![LayerSpec::new(FilterKind::Dense, ActivationKind::Sigmoid, 3, 2)];
        let nets: Vec<_> = (0..2)
            .map(|k| init_params(spec.clone(), None, 1, InitScheme::Teacher, RngStream::new(seed, 23 + k)).unwrap())
            .collect();
        let (mut pa, mut pb) = (nets[0].params()[0].clone(), nets[1].params()[0].clone());
        let before = pa.sub(&pb).unwrap().norm();
        domain.project_layer(&mut pa);
        domain.project_layer(&mut pb);
        prop_assert!(pa.norm() <= radius * (1.0 + 1e-12));
        prop_assert!(pa.sub(&pb).unwrap().norm() <= before + 1e-12);
    }

    #[test]
    fn generators_are_deterministic_and_finite(seed in any::<u64>()) {
        let (p1, _) = gen_probit(30, 4, seed).unwrap();
        let (p2, _) = gen_probit(30, 4, seed).unwrap();
        prop_assert_eq!(&p1, &p2);
        prop_assert!(p1.features.is_finite());
        let m = gen_two_moons(40, 0.1, seed).unwrap();
        prop_assert_eq!(&m, &gen_two_moons(40, 0.1, seed).unwrap());
        prop_assert!(m.features.is_finite());
    }

    #[test]
    fn teacher_reproduces_its_expectations(seed in 0u64..1000) {
        let g = erdos_renyi(6, 0.5, RngStream::new(seed, 24)).unwrap();
        let spec = vec![
            LayerSpec::new(FilterKind::Gcn, ActivationKind::Relu, 2, 2),
            LayerSpec::new(FilterKind::Gcn, ActivationKind::Sigmoid, 2, 1),
        ];
        let (data, teacher) = gen_gcn_teacher(&g, 10, spec.clone(), seed, seed + 1).unwrap();
        let (again, _) = gen_gcn_teacher(&g, 10, spec, seed, seed + 1).unwrap();
        prop_assert_eq!(&data, &again);
        let stored = data.expectations.clone().unwrap();
        prop_assert_eq!(&teacher.predict(&data.features, Mode::Eval).unwrap(), &stored);
        let fresh = teacher_dataset(&teacher, 10, seed + 2).unwrap();
        prop_assert_eq!(fresh.expectations.unwrap(), teacher.predict(&fresh.features, Mode::Eval).unwrap());
    }
}
