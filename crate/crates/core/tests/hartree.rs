use faer::Mat;
use proptest::prelude::*;
use schatten_core::hartree::*;
use schatten_core::initial::{gaussian_packet, InitialOperator};
use schatten_core::linop::{conjugate_free, Operator, DENSE_LIMIT};
use schatten_core::norms::Trajectory;
use schatten_core::randomize::FamilyKind;
use schatten_core::strichartz::{GridSpec, TimeWindow};
use schatten_core::{ComplexField, DenseOperator, Error, Grid, LowRankOperator, SubgaussianFamily, C64};

fn packets(grid: Grid, rank: usize, seed: u64, eigenvalues: Option<Vec<f64>>) -> LowRankOperator {
    InitialOperator::WavePackets { rank, seed, width: 1.2, center_spread: 1.5, momentum_spread: 0.5, eigenvalues, decay: 0.5 }
        .build(grid)
        .unwrap()
}

fn dense(q: &LowRankOperator) -> DenseOperator {
    q.to_dense().unwrap().symmetrize()
}

fn bg(grid: Grid, f: Distribution, w: Interaction) -> BackgroundState {
    BackgroundSpec::new(f, w).build(grid).unwrap()
}

fn gauss(amplitude: f64, beta: f64) -> Distribution {
    Distribution::Gaussian { amplitude, beta }
}

fn delta(strength: f64) -> Interaction {
    Interaction::Delta { strength }
}

fn smooth_potential(grid: Grid, tau: f64) -> ComplexField {
    let a = gaussian_packet(grid, [0.5 * tau.cos(), -0.3, 0.2], [0.0; 3], 1.1);
    let b = gaussian_packet(grid, [-0.8, 0.4 * tau, 0.0], [0.0; 3], 0.9);
    a.mul(&a.conj()).unwrap().add(&b.mul(&b.conj()).unwrap().scaled(C64::new(-0.5 + 0.2 * tau, 0.0))).unwrap().real_part()
}

fn potential_trajectory(grid: Grid, frames: usize, dt: f64) -> Trajectory {
    Trajectory::new(0.0, dt, (0..frames).map(|k| smooth_potential(grid, k as f64 * dt)).collect()).unwrap()
}

fn max_dist(a: &[DenseOperator], b: &[DenseOperator]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.hs_distance(y).unwrap()).fold(0.0, f64::max)
}

// ---- background ----

#[test]
fn stationarity_of_shipped_backgrounds() {
    let grid = Grid::new(2, 16, 4.0 * std::f64::consts::PI).unwrap();
    assert_eq!(stationarity_residual(&bg(grid, Distribution::Zero, delta(1.0))).unwrap(), 0.0);
    for f in [Distribution::FermiSea { fermi_momentum: 1.0 }, gauss(1.0, 1.0)] {
        for w in [delta(1.0), Interaction::Gaussian { strength: 2.0, width: 0.7 }] {
            let r = stationarity_residual(&bg(grid, f.clone(), w.clone())).unwrap();
            assert!(r <= 1e-10, "{f:?} {w:?}: {r:e}");
        }
    }
}

#[test]
fn background_validation_and_symmetry() {
    let grid = Grid::new(1, 32, 20.0).unwrap();
    assert!(BackgroundSpec::new(gauss(1.0, 0.0), delta(1.0)).build(grid).is_err());
    assert!(BackgroundSpec::new(Distribution::FermiSea { fermi_momentum: -1.0 }, delta(1.0)).build(grid).is_err());
    assert!(BackgroundSpec::new(gauss(1.0, 1.0), Interaction::Gaussian { strength: 1.0, width: 0.0 }).build(grid).is_err());
    let b = bg(grid, gauss(1.0, 1.0), Interaction::Gaussian { strength: 1.0, width: 1.0 });
    assert!(b.w_hat.is_hermitian_symmetric(0.0));
    assert!(b.f_symbol.symbol().iter().all(|v| v.im == 0.0 && v.re.is_finite()));
    let rt: BackgroundSpec = serde_json::from_str(&serde_json::to_string(b.spec()).unwrap()).unwrap();
    assert_eq!(&rt, b.spec());
}

// ---- Duhamel terms ----

#[test]
fn duhamel_trivial_cases() {
    let grid = Grid::new(1, 32, 20.0).unwrap();
    let b = bg(grid, gauss(1.0, 1.0), delta(1.0));
    let a = vec![dense(&packets(grid, 2, 1, None)); 5];
    let zero = Trajectory::zeros(grid, 0.0, 0.01, 5).unwrap();
    for src in [DuhamelSource::Dense(&a), DuhamelSource::Background(&b)] {
        assert_eq!(duhamel_term(&zero, src, 0.04, 0.0).unwrap().to_dense().unwrap().hilbert_schmidt(), 0.0);
    }
    let v = potential_trajectory(grid, 5, 0.01);
    assert_eq!(duhamel_term(&v, DuhamelSource::Dense(&a), 0.0, 0.0).unwrap().to_dense().unwrap().hilbert_schmidt(), 0.0);
    assert!(matches!(duhamel_term(&v, DuhamelSource::Dense(&a), 0.015, 0.0), Err(Error::InvalidArgument(_))));
    assert!(duhamel_term(&v, DuhamelSource::Dense(&a), 0.05, 0.0).is_err());
}

#[test]
fn duhamel_of_constant_data_matches_exact_integral() {
    let grid = Grid::new(1, 32, 20.0).unwrap();
    let n = grid.len();
    let v = smooth_potential(grid, 0.0);
    let a = dense(&packets(grid, 3, 2, None));
    let c = a.commutator_potential(&v).unwrap();
    let cp = c.to_plane_wave();
    let k2 = grid.frequencies_sq();
    // ∫₀ᵗ e^{-i(t-τ)Δ} dτ = (1 − e^{-itΔ}) / (iΔ)
    let exact_at = |t: f64| {
        let m = Mat::from_fn(n, n, |i, j| {
            let d = k2[i] - k2[j];
            let factor = if d == 0.0 { C64::new(t, 0.0) } else { (C64::new(1.0, 0.0) - C64::from_polar(1.0, -t * d)) / C64::new(0.0, d) };
            cp[(i, j)] * factor * C64::new(0.0, -1.0)
        });
        DenseOperator::from_plane_wave(grid, &m).unwrap()
    };
    let t = 0.02;
    let exact = exact_at(t);
    let mut errs = Vec::new();
    for steps in [4usize, 8, 16] {
        let dt = t / steps as f64;
        let vt = Trajectory::new(0.0, dt, vec![v.clone(); steps + 1]).unwrap();
        let d = duhamel_term(&vt, DuhamelSource::Dense(&vec![a.clone(); steps + 1]), t, 0.0).unwrap().to_dense().unwrap();
        errs.push(d.hs_distance(&exact).unwrap());
    }
    for w in errs.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!((order - 2.0).abs() < 0.1, "{errs:?}");
    }
    // -it[V, A] is exact up to O(t²)
    let gap = |t: f64| exact_at(t).hs_distance(&c.scale(C64::new(0.0, -t))).unwrap();
    let ratio = gap(1e-3) / gap(5e-4);
    assert!((3.8..4.2).contains(&ratio), "{ratio}");
}

#[test]
fn duhamel_paths_agree_and_keep_structure() {
    let grid = Grid::new(1, 32, 20.0).unwrap();
    let b = bg(grid, gauss(1.0, 1.0), delta(1.0));
    let frames = 9;
    let v = potential_trajectory(grid, frames, 0.01);
    let q0 = packets(grid, 3, 4, Some(vec![1.0, -0.5, 0.3]));
    let low: Vec<LowRankOperator> = (0..frames).map(|k| conjugate_free(&q0, 0.01 * k as f64)).collect();
    let den: Vec<DenseOperator> = low.iter().map(|x| x.to_dense().unwrap()).collect();
    let all = duhamel_trajectory(&v, DuhamelSource::Dense(&den)).unwrap();
    let all_bg = duhamel_trajectory(&v, DuhamelSource::Background(&b)).unwrap();
    for k in [1usize, 4, 8] {
        let t = 0.01 * k as f64;
        let lr = duhamel_term(&v, DuhamelSource::LowRank(&low), t, 0.0).unwrap();
        let DuhamelValue::LowRank(lr_op) = &lr else { panic!("low-rank input gives low-rank output") };
        assert!(lr_op.rank() <= 2 * 3 * (k + 1));
        let lr = lr.to_dense().unwrap();
        let de = duhamel_term(&v, DuhamelSource::Dense(&den), t, 0.0).unwrap().to_dense().unwrap();
        let scale = de.hilbert_schmidt();
        assert!(lr.hs_distance(&de).unwrap() <= 1e-12 * scale);
        assert!(all[k].hs_distance(&de).unwrap() <= 1e-12 * scale);
        let bgk = duhamel_term(&v, DuhamelSource::Background(&b), t, 0.0).unwrap().to_dense().unwrap();
        assert!(all_bg[k].hs_distance(&bgk).unwrap() <= 1e-12 * bgk.hilbert_schmidt());
        // D[A] is self-adjoint for self-adjoint A and real V
        for op in [&de, &bgk] {
            assert!(op.hermitian_defect() <= 1e-12 * op.hilbert_schmidt().max(1.0));
        }
    }
}

// ---- Picard and the RK4 reference ----

fn opts(t: f64, dt: f64) -> PicardOptions {
    PicardOptions::new(t, dt, 1e-11)
}

#[test]
fn picard_trivial_cases() {
    let grid = Grid::new(1, 32, 20.0).unwrap();
    let b = bg(grid, gauss(1.0, 1.0), delta(1.0));
    let run = picard_solve(&DenseOperator::zeros(grid).unwrap(), &b, &opts(0.02, 1e-3), Scheme::D1).unwrap();
    assert!(run.q.iter().all(|q| q.hilbert_schmidt() == 0.0));
    assert!(run.rho.frames().iter().all(|r| r.max_abs() == 0.0));
    // without interaction the solution is the free conjugation
    let q0 = dense(&packets(grid, 4, 3, None));
    let free_bg = bg(grid, gauss(1.0, 1.0), Interaction::Zero);
    let run = picard_solve(&q0, &free_bg, &opts(0.02, 1e-3), Scheme::D1).unwrap();
    for (q, t) in run.q.iter().zip(&run.q_times) {
        assert!(q.hs_distance(&conjugate_free(&q0, *t)).unwrap() <= 1e-13);
    }
}

#[test]
fn picard_rejects_bad_input() {
    let grid = Grid::new(1, 32, 20.0).unwrap();
    let b = bg(grid, gauss(1.0, 1.0), delta(1.0));
    let q = packets(grid, 2, 3, None);
    let skew = LowRankOperator::new(grid, vec![C64::new(1.0, 0.0)], vec![q.left()[0].clone()], vec![q.left()[1].clone()]).unwrap();
    assert!(matches!(picard_solve(&skew.to_dense().unwrap(), &b, &opts(0.02, 1e-3), Scheme::D1), Err(Error::NotHermitian(_))));
    assert!(picard_solve(&dense(&q), &b, &opts(0.0205, 1e-3), Scheme::D1).is_err());
    let big = Grid::new(3, 16, 10.0).unwrap();
    assert!(matches!(DenseOperator::zeros(big), Err(Error::TooLarge { limit: DENSE_LIMIT, .. })));
}

#[test]
fn picard_schemes_agree_with_oracle() {
    let grid = Grid::new(2, 16, 10.0).unwrap();
    let b = bg(grid, gauss(1.0, 1.0), Interaction::Gaussian { strength: 1.0, width: 1.0 });
    let q0 = dense(&packets(grid, 3, 5, Some(vec![1.0, -0.5, 0.25])));
    let oracle = dense_rk4_oracle(&q0, &b, 0.04, 2e-3).unwrap();
    for scheme in [Scheme::D2, Scheme::D3] {
        let run = picard_solve(&q0, &b, &opts(0.04, 2e-3), scheme).unwrap();
        assert_eq!(run.halvings, 0);
        assert!(max_dist(&run.q, &oracle.q) <= 1e-5, "{scheme:?}");
        assert!(run.self_adjoint_drift() <= 1e-8);
        assert!(run.max_ratio().unwrap() <= 0.9);
        assert!(run.radius > 0.0 && run.data_norm > 0.0);
    }
}

#[test]
fn picard_halves_time_under_strong_coupling() {
    let grid = Grid::new(1, 32, 20.0).unwrap();
    let q0 = dense(&packets(grid, 4, 3, Some(vec![1.0, 1.0, 1.0, 1.0])));
    let strong = bg(grid, gauss(1.0, 1.0), delta(150.0));
    let run = picard_solve(&q0, &strong, &opts(0.4, 2e-3), Scheme::D1).unwrap();
    assert!(run.halvings >= 1, "T stayed at {}", run.t_final);
    assert!((run.t_final - 0.4 / 2f64.powi(run.halvings as i32)).abs() < 2e-3 + 1e-12);
    assert!(run.max_ratio().unwrap() < 0.9);
    let hopeless = bg(grid, gauss(1.0, 1.0), delta(1e7));
    assert!(matches!(picard_solve(&q0, &hopeless, &opts(0.032, 2e-3), Scheme::D1), Err(Error::NoContraction(_))));
}

#[test]
fn iterated_duhamel_forms_hold_at_the_fixed_point() {
    let grid = Grid::new(1, 32, 20.0).unwrap();
    let b = bg(grid, gauss(1.0, 1.0), delta(1.0));
    let q0 = dense(&packets(grid, 4, 8, Some(vec![1.0, -0.6, 0.4, -0.2])));
    let run = picard_solve(&q0, &b, &opts(0.05, 1e-3), Scheme::D1).unwrap();
    let v = &run.potential;
    let free: Vec<DenseOperator> = run.q_times.iter().map(|t| conjugate_free(&q0, *t)).collect();
    let d = |a: &[DenseOperator]| duhamel_trajectory(v, DuhamelSource::Dense(a)).unwrap();
    let dg = duhamel_trajectory(v, DuhamelSource::Background(&b)).unwrap();
    let d2g = d(&dg);
    let d3g = d(&d2g);
    let dfree = d(&free);
    let d2free = d(&dfree);
    let d2q = d(&d(&run.q));
    let d3q = d(&d2q);
    let sum = |parts: &[&Vec<DenseOperator>]| -> Vec<DenseOperator> {
        (0..run.q.len())
            .map(|k| parts.iter().skip(1).fold(parts[0][k].clone(), |acc, p| acc.add(&p[k]).unwrap()))
            .collect()
    };
    let two = sum(&[&free, &dfree, &d2q, &d2g, &dg]);
    let three = sum(&[&free, &dfree, &d2free, &d3q, &d3g, &d2g, &dg]);
    for form in [two, three] {
        for (a, q) in form.iter().zip(&run.q) {
            assert!(a.density().sub(&q.density()).unwrap().norm_l2() <= 1e-9);
            assert!(a.hs_distance(q).unwrap() <= 1e-9);
        }
    }
}

#[test]
fn oracle_structure_and_order() {
    let grid = Grid::new(1, 32, 20.0).unwrap();
    let q0 = dense(&packets(grid, 4, 3, Some(vec![1.0, -0.6, 0.4, -0.2])));
    let free_bg = bg(grid, gauss(1.0, 1.0), Interaction::Zero);
    let run = dense_rk4_oracle(&q0, &free_bg, 0.05, 1e-3).unwrap();
    let spectra = total_spectra(&run, &free_bg).unwrap();
    for s in &spectra {
        for (a, b) in s.iter().zip(&spectra[0]) {
            assert!((a - b).abs() <= 1e-10);
        }
    }
    assert!(run.self_adjoint_drift() <= 1e-9);
    let b = bg(grid, gauss(1.0, 1.0), delta(1.0));
    let coarse = [0.02, 0.01, 0.005].map(|dt| dense_rk4_oracle(&q0, &b, 0.2, dt).unwrap().q.pop().unwrap());
    let e1 = coarse[0].hs_distance(&coarse[1]).unwrap();
    let e2 = coarse[1].hs_distance(&coarse[2]).unwrap();
    assert!((12.0..20.0).contains(&(e1 / e2)), "ratio {}", e1 / e2);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]
    #[test]
    fn picard_keeps_self_adjointness(seed in 0u64..1000, strength in 0.1f64..3.0) {
        let grid = Grid::new(1, 16, 10.0).unwrap();
        let b = bg(grid, gauss(1.0, 1.0), delta(strength));
        let q0 = dense(&packets(grid, 3, seed, None));
        let run = picard_solve(&q0, &b, &opts(0.02, 2e-3), Scheme::D1).unwrap();
        prop_assert!(run.self_adjoint_drift() <= 1e-8);
        prop_assert!(run.max_ratio().unwrap_or(0.0) <= 0.9);
    }
}

// ---- linear response ----

#[test]
fn l1_trivial_cases_and_linearity() {
    let grid = Grid::new(2, 16, 8.0).unwrap();
    let b = bg(grid, gauss(1.0, 1.0), delta(1.0));
    let w = TimeWindow { t_final: 0.2, dt: 0.05 };
    let zero = Trajectory::zeros(grid, 0.0, 0.05, 5).unwrap();
    for out in [l1_apply_direct(&zero, &b).unwrap(), l1_apply_fourier(&zero, &b, 2.0).unwrap()] {
        assert!(out.frames().iter().all(|f| f.max_abs() == 0.0));
    }
    let g1 = random_band_density(grid, 2.0, &w, 1, 0).unwrap();
    let g2 = random_band_density(grid, 2.0, &w, 1, 1).unwrap();
    let no_f = bg(grid, Distribution::Zero, delta(1.0));
    assert!(l1_apply_direct(&g1, &no_f).unwrap().frames().iter().all(|f| f.max_abs() == 0.0));
    let sum = l1_apply_direct(&g1.add(&g2).unwrap(), &b).unwrap();
    let parts = l1_apply_direct(&g1, &b).unwrap().add(&l1_apply_direct(&g2, &b).unwrap()).unwrap();
    let scale = sum.frames().iter().map(|f| f.max_abs()).fold(0.0, f64::max);
    for (a, c) in sum.frames().iter().zip(parts.frames()) {
        assert!(a.sub(c).unwrap().max_abs() <= 1e-12 * scale);
    }
    // the leading frame vanishes and later inputs do not reach earlier outputs
    for out in [l1_apply_direct(&g1, &b).unwrap(), l1_apply_fourier(&g1, &b, 2.0).unwrap()] {
        assert_eq!(out.frame(0).max_abs(), 0.0);
    }
    let mut late = g1.clone();
    late.frames_mut()[4] = late.frame(4).scaled(C64::new(5.0, 0.0));
    let (a, c) = (l1_apply_direct(&g1, &b).unwrap(), l1_apply_direct(&late, &b).unwrap());
    for k in 0..4 {
        assert_eq!(a.frame(k), c.frame(k));
    }
    assert!(matches!(l1_apply_fourier(&g1, &b, f64::NAN), Err(Error::Calibration(_))));
    assert!(matches!(l1_apply_fourier(&g1, &b, 0.0), Err(Error::Calibration(_))));
}

#[test]
fn l1_direct_matches_dense_operator_quadrature() {
    let grid = Grid::new(1, 32, 12.0).unwrap();
    let b = bg(grid, gauss(1.0, 2.0), Interaction::Gaussian { strength: 1.5, width: 0.8 });
    let w = TimeWindow { t_final: 0.3, dt: 0.05 };
    let g = random_band_density(grid, 3.0, &w, 4, 0).unwrap();
    let direct = l1_apply_direct(&g, &b).unwrap();
    let gamma = background_operator(&b).unwrap();
    let dt = w.dt;
    for k in 0..g.len() {
        let mut acc = DenseOperator::zeros(grid).unwrap();
        for j in 0..=k {
            let wt = if k == 0 { 0.0 } else if j == 0 || j == k { 0.5 * dt } else { dt };
            let v = b.potential(g.frame(j)).unwrap();
            let c = gamma.commutator_potential(&v).unwrap();
            acc.axpy(C64::new(0.0, wt), &conjugate_free(&c, (k - j) as f64 * dt)).unwrap();
        }
        let want = acc.density();
        assert!(want.max_imag() <= 1e-12);
        assert!(direct.frame(k).sub(&want.real_part()).unwrap().max_abs() <= 1e-12 * (1.0 + want.max_abs()));
    }
}

#[test]
fn l1_single_mode_fourier_matches_direct() {
    let grid = Grid::new(2, 32, 10.0).unwrap();
    let b = bg(grid, gauss(1.0, 1.0), delta(1.0));
    let dt = 0.05;
    let frames: Vec<ComplexField> = (0..6)
        .map(|k| {
            let t = k as f64 * dt;
            ComplexField::from_fn(grid, |x| {
                let k0 = 2.0 * grid.frequency_spacing();
                C64::new((1.0 + t) * (k0 * x[0] - 0.5 * k0 * x[1]).cos(), 0.0)
            })
        })
        .collect();
    let g = Trajectory::new(0.0, dt, frames).unwrap();
    let direct = l1_apply_direct(&g, &b).unwrap();
    let fourier = l1_apply_fourier(&g, &b, 2.0).unwrap();
    let scale = direct.frames().iter().map(|f| f.norm_l2()).fold(0.0, f64::max);
    assert!(scale > 0.0);
    for (a, c) in direct.frames().iter().zip(fourier.frames()) {
        assert!(a.sub(c).unwrap().norm_l2() <= 1e-6 * scale);
    }
}

#[test]
fn calibration_is_stable_and_guarded() {
    let w = TimeWindow { t_final: 0.2, dt: 0.05 };
    let g32 = Grid::new(2, 32, 10.0).unwrap();
    let b32 = bg(g32, gauss(1.0, 1.0), delta(1.0));
    let a = calibrate_l1_constant(&b32, &w, 2, 11).unwrap();
    let c = calibrate_l1_constant(&b32, &w, 2, 12).unwrap();
    assert!(a.residual <= 1e-6 && a.imag.abs() <= 1e-8);
    assert!((a.c0 - c.c0).abs() <= 1e-8);
    let g3 = Grid::new(3, 8, 4.0).unwrap();
    let b3 = bg(g3, gauss(1.0, 4.0), Interaction::Gaussian { strength: 1.0, width: 0.5 });
    let d3 = calibrate_l1_constant(&b3, &w, 2, 13).unwrap();
    assert!((a.c0 - d3.c0).abs() <= 1e-6);
    assert!(matches!(calibrate_l1_constant(&bg(g32, Distribution::Zero, delta(1.0)), &w, 1, 1), Err(Error::Calibration(_))));
    assert!(matches!(calibrate_l1_constant(&bg(g32, gauss(1.0, 1.0), Interaction::Zero), &w, 1, 1), Err(Error::Calibration(_))));
    let coarse = Grid::new(3, 8, 4.0).unwrap();
    assert!(matches!(calibrate_l1_constant(&bg(coarse, gauss(1.0, 1.0), delta(1.0)), &w, 1, 1), Err(Error::Calibration(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]
    #[test]
    fn fourier_response_is_linear_and_causal(seed in 0u64..10_000, a in -3.0f64..3.0) {
        let grid = Grid::new(1, 64, 20.0).unwrap();
        let b = bg(grid, gauss(1.0, 1.0), delta(1.0));
        let w = TimeWindow { t_final: 0.5, dt: 0.05 };
        let g1 = random_band_density(grid, 4.0, &w, seed, 0).unwrap();
        let g2 = random_band_density(grid, 4.0, &w, seed, 1).unwrap();
        let mix = g1.add(&g2.map(|f| f.scaled(C64::new(a, 0.0)))).unwrap();
        let lhs = l1_apply_fourier(&mix, &b, 2.0).unwrap();
        let r1 = l1_apply_fourier(&g1, &b, 2.0).unwrap();
        let r2 = l1_apply_fourier(&g2, &b, 2.0).unwrap();
        let rhs = r1.add(&r2.map(|f| f.scaled(C64::new(a, 0.0)))).unwrap();
        let scale = rhs.frames().iter().map(|f| f.max_abs()).fold(1e-300, f64::max);
        for (x, y) in lhs.frames().iter().zip(rhs.frames()) {
            prop_assert!(x.sub(y).unwrap().max_abs() <= 1e-12 * scale);
        }
        prop_assert_eq!(lhs.frame(0).max_abs(), 0.0);
    }
}

// ---- linearized solve and scattering ----

#[test]
fn linearized_trivial_cases() {
    let grid = Grid::new(2, 16, 10.0).unwrap();
    let b = bg(grid, gauss(0.5, 1.0), delta(1.0));
    let w = TimeWindow { t_final: 0.5, dt: 0.05 };
    let sol = linearized_solve(&LowRankOperator::zero(grid), &b, &w, 2.0).unwrap();
    assert!(sol.rho.frames().iter().all(|f| f.max_abs() == 0.0));
    assert_eq!(sol.q_at(10).unwrap().hilbert_schmidt(), 0.0);
    let q0 = packets(grid, 4, 2, None);
    let no_f = bg(grid, Distribution::Zero, delta(1.0));
    let sol = linearized_solve(&q0, &no_f, &w, 2.0).unwrap();
    assert_eq!(sol.rho, sol.source);
    assert!(matches!(linearized_solve(&q0, &b, &w, 0.0), Err(Error::Calibration(_))));
}

#[test]
fn marching_matches_fixed_point_iteration() {
    let grid = Grid::new(2, 16, 10.0).unwrap();
    let b = bg(grid, gauss(0.2, 1.0), delta(1.0));
    let q0 = packets(grid, 4, 6, None);
    let w = TimeWindow { t_final: 1.0, dt: 0.05 };
    let sol = linearized_solve(&q0, &b, &w, 2.0).unwrap();
    assert!(sol.residual <= 1e-8, "{}", sol.residual);
    let fp = linearized_fixed_point(&sol.source, &b, 2.0, 1e-14, 200).unwrap();
    let scale = sol.rho.frames().iter().map(|f| f.norm_l2()).fold(0.0, f64::max);
    for (a, c) in sol.rho.frames().iter().zip(fp.frames()) {
        assert!(a.sub(c).unwrap().norm_l2() <= 1e-8 * scale);
    }
    // the reconstruction starts at Q₀ and stays self-adjoint
    assert!(sol.q_at(0).unwrap().hs_distance(&q0.to_dense().unwrap()).unwrap() <= 1e-12);
    let run = sol.run(&[0, 10, 20]).unwrap();
    assert!(run.self_adjoint_drift() <= 1e-8);
    assert_eq!(run.q_times, vec![0.0, 0.5, 1.0]);
}

#[test]
fn linearized_divergence_is_reported() {
    let grid = Grid::new(1, 32, 20.0).unwrap();
    let b = bg(grid, gauss(1.0, 1.0), delta(1.0));
    let q0 = packets(grid, 2, 1, None);
    let r = linearized_solve(&q0, &b, &TimeWindow { t_final: 2.0, dt: 0.05 }, 1e9);
    assert!(matches!(r, Err(Error::Divergence(_))), "{r:?}");
}

#[test]
fn scattering_controls_vanish() {
    let grid = Grid::new(2, 16, 10.0).unwrap();
    let q0 = packets(grid, 2, 2, None);
    let w = TimeWindow { t_final: 2.0, dt: 0.05 };
    let ladder = dyadic_ladder(2.0, 3);
    assert_eq!(ladder, vec![0.0, 0.5, 1.0, 2.0]);
    for b in [bg(grid, Distribution::Zero, delta(1.0)), bg(grid, gauss(0.1, 1.0), Interaction::Zero)] {
        let sol = linearized_solve(&q0, &b, &w, 2.0).unwrap();
        let rep = scattering_diagnostic(&sol, &ladder, scattering_exponent(2)).unwrap();
        assert!(rep.distances.iter().all(|&d| d == 0.0), "{:?}", rep.distances);
        assert!(rep.cauchy_consistent);
    }
    let sol = linearized_solve(&q0, &bg(grid, gauss(0.1, 1.0), delta(1.0)), &w, 2.0).unwrap();
    assert!(scattering_diagnostic(&sol, &[0.0, 0.33], scattering_exponent(2)).is_err());
    assert_eq!(scattering_exponent(2).value(), 4.0);
    assert_eq!(scattering_exponent(3).value(), 3.0);
}

// ---- randomized pipelines ----

fn lwp(d: usize, kind: RandomizationKind, family: SubgaussianFamily, initial: InitialOperator) -> LwpConfig {
    let (n, l, dt) = match d {
        1 => (32, 20.0, 2e-3),
        2 => (16, 10.0, 5e-3),
        _ => (8, 6.0, 1e-2),
    };
    LwpConfig {
        grid: GridSpec { d, n, length: l },
        background: BackgroundSpec::gaussian_delta(),
        initial,
        randomization: kind,
        class: DataClass::Schatten,
        epsilon: 0.1,
        family,
        family_l: Some(SubgaussianFamily::gaussian(9)),
        picard: PicardOptions::new(0.04, dt, 1e-10),
        draws: 3,
        experiment: 2,
    }
}

#[test]
fn degenerate_randomization_of_zero_is_trivial() {
    let cfg = lwp(1, RandomizationKind::Singular, SubgaussianFamily::ones(), InitialOperator::Zero);
    for draw in lwp_ensemble(&cfg).unwrap() {
        assert_eq!(draw.data_norm, 0.0);
        assert!(draw.run.q.iter().all(|q| q.hilbert_schmidt() == 0.0));
    }
}

#[test]
fn rademacher_draws_keep_deterministic_norms() {
    let grid = Grid::new(1, 32, 20.0).unwrap();
    let b = BackgroundSpec::gaussian_delta().build(grid).unwrap();
    let rank4 = InitialOperator::WavePackets { rank: 4, seed: 1, width: 1.2, center_spread: 1.5, momentum_spread: 0.5, eigenvalues: None, decay: 0.5 };
    let cfg = lwp(1, RandomizationKind::Singular, SubgaussianFamily::rademacher(3), rank4.clone());
    let q0 = rank4.build(grid).unwrap();
    let s2 = schatten_core::linop::schatten_norm(&q0, schatten_core::Exponent::TWO).unwrap().value;
    for m in 0..3 {
        let draw = randomized_lwp_pipeline(&q0, &b, &cfg, m).unwrap();
        assert!((draw.class_norm - s2).abs() <= 1e-12 * s2);
    }
    // rank one: |g| = 1 leaves the density norm unchanged
    let rank1 = InitialOperator::WavePackets { rank: 1, seed: 1, width: 1.2, center_spread: 1.5, momentum_spread: 0.5, eigenvalues: None, decay: 0.5 };
    let q1 = rank1.build(grid).unwrap();
    let steps = (cfg.picard.t_target / cfg.picard.dt).round() as usize + 1;
    let det = lwp_data_norm(&q1, &b, RandomizationKind::Singular, steps, cfg.picard.dt).unwrap();
    for m in 0..4 {
        let draw = randomized_lwp_pipeline(&q1, &b, &cfg, m).unwrap();
        assert!((draw.data_norm - det).abs() <= 1e-12 * det, "{} vs {det}", draw.data_norm);
    }
}

#[test]
fn pipeline_validates_classes() {
    let init = InitialOperator::WavePackets { rank: 2, seed: 1, width: 1.2, center_spread: 1.0, momentum_spread: 0.5, eigenvalues: None, decay: 0.5 };
    let mut cfg = lwp(3, RandomizationKind::Singular, SubgaussianFamily::gaussian(1), init.clone());
    cfg.epsilon = 0.6;
    assert!(matches!(lwp_ensemble(&cfg), Err(Error::Exponents(_))));
    cfg.class = DataClass::Sobolev;
    cfg.epsilon = 1.6;
    assert!(matches!(lwp_ensemble(&cfg), Err(Error::Exponents(_))));
    cfg.epsilon = 0.2;
    assert_eq!(cfg.exponents().unwrap(), (0.2, schatten_core::Exponent::new(1.5).unwrap()));
    let mut full = lwp(2, RandomizationKind::Full, SubgaussianFamily::gaussian(1), init);
    full.family_l = None;
    assert!(matches!(lwp_ensemble(&full), Err(Error::InvalidArgument(_))));
}

#[test]
fn pipeline_is_reproducible_across_pools() {
    let init = InitialOperator::WavePackets { rank: 3, seed: 4, width: 1.2, center_spread: 1.5, momentum_spread: 0.5, eigenvalues: None, decay: 0.5 };
    let cfg = lwp(2, RandomizationKind::Full, SubgaussianFamily::new(FamilyKind::Gaussian { variance: 1.0 }, 8).unwrap(), init);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| lwp_ensemble(&cfg).unwrap())
    };
    let (a, b) = (run(1), run(3));
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.summary(), y.summary());
        assert_eq!(x.run.q.last().unwrap(), y.run.q.last().unwrap());
    }
    assert!(a.iter().all(|d| d.data_norm.is_finite() && d.data_norm > 0.0));
}
