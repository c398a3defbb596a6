use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::identities::{psij_residual, psis_residual, self_convergence_rate, split_refinement, EvolutionResidual};
use super::*;
use crate::heat::{build_ladder, HeatConfig};
use std::f64::consts::PI;

use crate::geometry::kernel;
use crate::wave::{self, make_initial_data, DataKind, InitialDataSpec, TrigMode};
use crate::MapField;

fn bump(n: usize, m: usize, amplitude: f64) -> MapField {
    // two overlapping bumps with independent directions, so the image is not a geodesic
    let directions = [[1.0, 0.4, -0.7], [-0.3, 1.0, 0.5]].iter().map(|d| d[..m].to_vec()).collect();
    let spec = InitialDataSpec {
        kind: DataKind::BoostedBump,
        amplitude,
        width: 0.2,
        centers: vec![[0.35, 0.4], [0.45, 0.6]],
        directions,
        boost: [0.5, 0.2],
        mirror: true,
        p0: None,
    };
    let target = TargetConfig::new(m, -1.0).unwrap();
    make_initial_data(&spec, Grid2D::with_extent(n, 1.0).unwrap(), target, 0.0).unwrap()
}

/// Smooth periodic map with a nonzero velocity; its image is not contained in a geodesic.
fn smooth(n: usize, m: usize, amplitude: f64) -> MapField {
    let target = TargetConfig::new(m, -1.0).unwrap();
    let grid = Grid2D::with_extent(n, 1.0).unwrap();
    let dir = |i: usize| {
        let mut v = vec![0.0; m];
        v[i % m] = 1.0;
        v
    };
    let modes = [
        TrigMode { k: [1, 0], phase: 0.0, amplitude, direction: dir(0) },
        TrigMode { k: [0, 1], phase: 0.3, amplitude: 0.7 * amplitude, direction: dir(1) },
        TrigMode { k: [1, 1], phase: 1.1, amplitude: 0.5 * amplitude, direction: dir(2) },
    ];
    let mut state = wave::fourier_map(grid, target, &modes);
    let d = target.dim();
    for node in 0..grid.len() {
        let (x, y) = grid.position(node / n, node % n);
        let (p, v) = (&state.phi[node * d..(node + 1) * d], &mut state.phi_t[node * d..(node + 1) * d]);
        for (c, vc) in v.iter_mut().enumerate() {
            *vc = amplitude * (2.0 * PI * (x + c as f64 * y) + c as f64).sin();
        }
        kernel::tangent_project(p, v);
    }
    state
}

fn caloric(state: &MapField, eps: f64) -> CaloricSlice {
    let ladder = build_ladder(state, &HeatConfig { eps_stop: eps, ..HeatConfig::default() }).unwrap();
    CaloricSlice::new(ladder).unwrap()
}

fn sup(x: &[f64]) -> f64 {
    x.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

#[test]
fn constant_data_gives_vanishing_fields() {
    let target = TargetConfig::new(3, -1.0).unwrap();
    let p = target.project_point(&[2.0, 0.5, -0.3, 1.0]).unwrap();
    let state = MapField::constant(Grid2D::with_extent(16, 1.0).unwrap(), target, &p.coords);
    let slice = caloric(&state, 1e-6);
    let seed = &slice.frames.e_infinity;
    for level in &slice.frames.e {
        for f in level.chunks(12) {
            for (j, v) in seed.vectors.iter().enumerate() {
                for (x, y) in f[j * 4..(j + 1) * 4].iter().zip(v) {
                    assert!((x - y).abs() < 1e-14);
                }
            }
        }
    }
    for lv in &slice.fields.levels {
        for x in lv.psi.iter().chain(lv.a.iter()).chain(lv.dt_psi.iter()).chain(lv.dt_a.iter()) {
            assert_eq!(sup(x), 0.0);
        }
        assert_eq!(sup(&lv.psi_s), 0.0);
    }
    let report = build_report(&slice.fields, &slice.frames, &state.phi, None, &ReconConfig::default()).unwrap();
    for e in &report.entries {
        // entries normalised by ds^2 amplify rounding
        let tolerance = if e.identity.contains("/ds^2") { 1e-9 } else { 1e-13 };
        assert!(e.value.abs() < tolerance, "{} = {}", e.identity, e.value);
    }
}

#[test]
fn frames_are_orthonormal_and_fields_isometric() {
    let state = smooth(32, 3, 0.5);
    let slice = caloric(&state, 1e-4);
    assert!(slice.frames.orthonormality_defect() < 1e-10);
    let lv = &slice.fields.levels[0];
    for axis in 0..2 {
        let d = state.spatial_derivative(axis);
        for (node, chunk) in d.chunks(4).enumerate() {
            let expected = crate::mink_inner(chunk, chunk).sqrt();
            let got = linalg::norm_sq(&lv.psi[1 + axis][node * 3..(node + 1) * 3]).sqrt();
            assert!((expected - got).abs() < 1e-10 * expected.max(1.0));
        }
    }
    for a in &lv.a {
        for x in a.chunks(9) {
            for i in 0..3 {
                for j in 0..3 {
                    assert_eq!(x[i * 3 + j], -x[j * 3 + i]);
                }
            }
        }
    }
}

#[test]
fn boundary_fields_carry_the_wave_energy() {
    let state = bump(32, 2, 1.0);
    let slice = caloric(&state, 1e-3);
    let lv = &slice.fields.levels[0];
    let density: Vec<f64> = (0..state.grid.len())
        .map(|n| 0.5 * (0..3).map(|al| linalg::norm_sq(&lv.psi[al][n * 2..(n + 1) * 2])).sum::<f64>())
        .collect();
    let e = state.grid.integrate_values(&density);
    let reference = wave::energy(&state);
    assert!((e - reference).abs() < 1e-10 * reference, "{e} vs {reference}");
}

#[test]
fn top_level_fields_are_at_the_stopping_scale() {
    let state = bump(32, 2, 1.0);
    let slice = caloric(&state, 1e-4);
    let top = slice.fields.top();
    let eps = slice.ladder.eps_stop;
    for x in top.psi.iter().chain(top.a.iter()) {
        assert!(sup(x) <= 10.0 * eps, "{} vs {eps}", sup(x));
    }
}

#[test]
fn transport_residual_is_quadratic_in_the_step() {
    let state = smooth(32, 2, 0.5);
    let slice = caloric(&state, 1e-3);
    let scale = slice.fields.levels.iter().map(|l| sup(&l.psi_s)).fold(0.0, f64::max);
    for (k, r) in slice.frames.transport_residual.iter().enumerate() {
        let ds = slice.ladder.s_levels[k + 1] - slice.ladder.s_levels[k];
        assert!(*r <= scale * scale * ds * ds, "level {k}: {r} vs {}", scale * scale * ds * ds);
    }
}

fn random_rotation(m: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut gen = vec![0.0; m * m];
    for i in 0..m {
        for j in i + 1..m {
            let v: f64 = rng.gen_range(-3.0..3.0);
            gen[i * m + j] = v;
            gen[j * m + i] = -v;
        }
    }
    linalg::expm(m, &gen)
}

#[test]
fn gauge_invariants_survive_random_rotations() {
    let state = smooth(32, 3, 0.5);
    let slice = caloric(&state, 1e-3);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let f0 = identities::curvature_fields(&slice.fields, 0);
    for _ in 0..3 {
        let u = random_rotation(3, &mut rng);
        let rot = GaugeRotation::constant(&state.grid, 3, &u).unwrap();
        let (fields, _) = gauge_transform(&slice.fields, &slice.frames, &rot).unwrap();
        for (a, b) in slice.fields.levels.iter().zip(&fields.levels) {
            for al in 0..3 {
                let (na, nb) = (pointwise_norm(&a.psi[al], 3), pointwise_norm(&b.psi[al], 3));
                for (x, y) in na.iter().zip(&nb) {
                    assert!((x - y).abs() <= 1e-12 * x.max(1.0));
                }
            }
        }
        let f1 = identities::curvature_fields(&fields, 0);
        for p in 0..3 {
            let (na, nb) = (pointwise_norm(&f0[p], 9), pointwise_norm(&f1[p], 9));
            for (x, y) in na.iter().zip(&nb) {
                assert!((x - y).abs() <= 1e-12 * x.max(1.0));
            }
        }
        let (t0, t1) = (torsion_residual(&slice.fields, 0), torsion_residual(&fields, 0));
        for (a, b) in t0.iter().zip(&t1) {
            for (x, y) in a.pointwise.iter().zip(&b.pointwise) {
                assert!((x - y).abs() <= 1e-10 * x.max(1.0));
            }
        }
    }
    let ident = GaugeRotation::identity(&state.grid, 3);
    let (same, _) = gauge_transform(&slice.fields, &slice.frames, &ident).unwrap();
    assert_eq!(same.levels, slice.fields.levels);
    let bad = GaugeRotation::constant(&state.grid, 3, &[1.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
    assert!(matches!(bad, Err(Error::NotOrthogonal { .. })));
}

/// `exp(θ G)` with `θ = c sin(2π(x1 + x2) + phase) (1 + 0.3 t)`, evaluated at `t = 0`.
fn wavy_rotation(grid: &Grid2D, c: f64, phase: f64) -> GaugeRotation {
    let gen = [0.0, -1.0, 0.0, 1.0, 0.0, 0.5, 0.0, -0.5, 0.0];
    GaugeRotation::exp_of(grid, 3, &gen, |x, y| {
        let (s, co) = (2.0 * PI * (x + y) + phase).sin_cos();
        let dx = 2.0 * PI * c * co;
        [c * s, 0.3 * c * s, dx, dx, 0.3 * dx, 0.3 * dx]
    })
    .unwrap()
}

#[test]
fn composed_transforms_match_the_product_rotation() {
    let state = smooth(16, 3, 0.5);
    let slice = caloric(&state, 1e-2);
    let (u1, u2) = (wavy_rotation(&state.grid, 0.8, 0.3), wavy_rotation(&state.grid, 0.5, 1.9));
    let (once, frames_once) = gauge_transform(&slice.fields, &slice.frames, &u1).unwrap();
    let (twice, frames_twice) = gauge_transform(&once, &frames_once, &u2).unwrap();
    let (single, frames_single) = gauge_transform(&slice.fields, &slice.frames, &u2.compose(&u1).unwrap()).unwrap();
    let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-12 * x.abs().max(1.0));
    for (a, b) in twice.levels.iter().zip(&single.levels) {
        for al in 0..3 {
            assert!(close(&a.psi[al], &b.psi[al]));
            assert!(close(&a.a[al], &b.a[al]));
        }
        for k in 0..2 {
            assert!(close(&a.dt_psi[k], &b.dt_psi[k]));
            assert!(close(&a.dt_a[k], &b.dt_a[k]));
        }
        assert!(close(&a.dt_psi_s, &b.dt_psi_s));
    }
    for (a, b) in frames_twice.e.iter().zip(&frames_single.e) {
        assert!(close(a, b));
    }
}

#[test]
fn transformed_fields_match_fields_of_the_rotated_frames() {
    // re-extracting from the rotated frames agrees with the transformation law up to the
    // second-order error of differencing the rotation
    let errors: Vec<f64> = [16, 32, 64]
        .iter()
        .map(|&n| {
            let state = smooth(n, 3, 0.5);
            let slice = caloric(&state, 1e-2);
            let rot = wavy_rotation(&state.grid, 0.3, 0.7);
            let (fields, frames) = gauge_transform(&slice.fields, &slice.frames, &rot).unwrap();
            let direct = extract_level(&slice.ladder, &frames, 0);
            let lv = &fields.levels[0];
            for al in 0..3 {
                assert!(direct.psi[al].iter().zip(&lv.psi[al]).all(|(x, y)| (x - y).abs() < 1e-12));
            }
            (0..3)
                .map(|al| sup(&identities::sub(&direct.a[al], &lv.a[al])))
                .chain((0..2).map(|k| sup(&identities::sub(&direct.dt_a[k], &lv.dt_a[k]))))
                .fold(0.0, f64::max)
        })
        .collect();
    for w in errors.windows(2) {
        assert!((w[0] / w[1]).log2() > 1.8, "{errors:?}");
    }
}

#[test]
fn torsion_curvature_and_tension_residuals_are_second_order() {
    let slices: Vec<CaloricSlice> = [32, 64].iter().map(|&n| caloric(&smooth(n, 3, 0.5), 1e-2)).collect();
    let at = |i: usize| &slices[i].fields;
    let rate = |f: &dyn Fn(&GaugeFieldSet) -> f64| (f(at(0)) / f(at(1))).log2();
    let torsion = rate(&|g| torsion_residual(g, 0).iter().map(|r| r.sup).fold(0.0, f64::max));
    let curvature = rate(&|g| curvature_residual(g, 0).iter().map(|r| r.sup).fold(0.0, f64::max));
    let tension = rate(&|g| tension_residual(g, 0).sup);
    assert!(torsion > 1.8, "torsion rate {torsion}");
    assert!(curvature > 1.8, "curvature rate {curvature}");
    assert!(tension > 1.8, "tension rate {tension}");
}

#[test]
fn commutators_vanish_only_for_planar_targets() {
    let slice = caloric(&smooth(16, 2, 0.5), 1e-2);
    for k in 0..slice.fields.levels.len() {
        assert_eq!(commutator_sup(&slice.fields, k), 0.0);
    }
    let slice = caloric(&smooth(16, 3, 0.5), 1e-2);
    assert!(commutator_sup(&slice.fields, 0) > 0.0);
}

#[test]
fn heat_evolution_residuals_shrink_with_the_level_spacing() {
    let state = smooth(16, 2, 0.5);
    let residuals: Vec<[EvolutionResidual; 2]> = [1, 2, 4]
        .iter()
        .map(|&split| {
            let cfg = HeatConfig { eps_stop: 1e-2, level_split: split, ..HeatConfig::default() };
            let slice = CaloricSlice::new(build_ladder(&state, &cfg).unwrap()).unwrap();
            [psij_residual(&slice.fields), psis_residual(&slice.fields)]
        })
        .collect();
    for i in 0..2 {
        let rate = self_convergence_rate(&residuals[0][i], &residuals[1][i], &residuals[2][i]).unwrap();
        assert!(rate > 0.9, "{} rate {rate}", residuals[0][i].identity);
    }
}

#[test]
fn reconstruction_errors_in_ds_stay_within_their_budgets() {
    let state = smooth(32, 2, 0.5);
    let cfg = ReconConfig::default();
    let runs: Vec<(FieldReconstruction, FieldReconstruction)> = [1, 2, 4]
        .iter()
        .map(|&split| {
            let heat = HeatConfig { eps_stop: 1e-4, level_split: split, ..HeatConfig::default() };
            let slice = CaloricSlice::new(build_ladder(&state, &heat).unwrap()).unwrap();
            let a = reconstruct_a(&slice.fields, &cfg).unwrap();
            (a, reconstruct_psi(&slice.fields, &cfg).unwrap().reconstruction)
        })
        .collect();
    let pick: [fn(&(FieldReconstruction, FieldReconstruction)) -> &FieldReconstruction; 2] = [|r| &r.0, |r| &r.1];
    for get in pick {
        let [r1, r2, r4] = [get(&runs[0]), get(&runs[1]), get(&runs[2])];
        let split = split_refinement(&r1.residual, &r2.residual, &r4.residual).unwrap();
        assert!(split.rate > 0.9, "{} rate {}", r1.identity, split.rate);
        for (part, (_, budget)) in split.ds_part.iter().zip(r1.budget()) {
            assert!(*part <= budget, "{}: {part} > {budget}", r1.identity);
        }
    }
    let slice = caloric(&state, 1e-4);
    let strict = ReconConfig { tail_tolerance: 1e-16, ..cfg };
    assert!(matches!(reconstruct_a(&slice.fields, &strict), Err(Error::TailTooLarge { .. })));
}

#[test]
fn cubic_correction_scales_with_the_cube_of_the_amplitude() {
    let cfg = ReconConfig::default();
    let sizes: Vec<f64> = [0.4, 0.2, 0.1]
        .iter()
        .map(|&a| reconstruct_psi(&caloric(&smooth(32, 2, a), 1e-4).fields, &cfg).unwrap().correction_sup)
        .collect();
    for w in sizes.windows(2) {
        let exponent = (w[0] / w[1]).log2();
        assert!((exponent - 3.0).abs() < 0.3, "{sizes:?}");
    }
}

#[test]
fn map_reconstruction_converges() {
    let results: Vec<MapReconstruction> = [16, 32, 64]
        .iter()
        .map(|&n| {
            let state = smooth(n, 3, 0.5);
            let slice = caloric(&state, 1e-2);
            reconstruct_map(&slice.fields, &state.phi, &slice.frames.e[0]).unwrap()
        })
        .collect();
    for w in results.windows(2) {
        assert!((w[0].discrepancy / w[1].discrepancy).log2() > 0.9);
        assert!((w[0].path_dependence / w[1].path_dependence).log2() > 0.9);
    }
    let target = TargetConfig::default();
    let state = MapField::constant(Grid2D::with_extent(16, 1.0).unwrap(), target, &target.origin().coords);
    let slice = caloric(&state, 1e-2);
    let flat = reconstruct_map(&slice.fields, &state.phi, &slice.frames.e[0]).unwrap();
    assert_eq!(flat.phi, state.phi);
}
