mod support;

use std::f64::consts::PI;

use gwhp_core::geogen::{random_geology, GeologySpec, GradientRange};
use gwhp_core::sim::{
    advance_temperature, darcy_velocity, run_scenario, solve_flow, solve_pressure, FaceFlux,
    ScenarioSpec, SimParams, TransportConfig, TransportOperator, WellSpec,
};
use gwhp_core::{Grid, ScalarField, VectorField};
use support::{asymmetry, centroid_offset, mms_error, sine_mode, L};

#[test]
fn manufactured_solution_unit_permeability() {
    let start = std::time::Instant::now();
    let k = |_: f64, _: f64| (1.0, 0.0, 0.0);
    let e32 = mms_error(32, &k, &sine_mode);
    let e64 = mms_error(64, &k, &sine_mode);
    let ratio = e32 / e64;
    assert!(ratio >= 3.4, "error ratio {ratio} ({e32:e} -> {e64:e})");
    assert!(ratio.log2() >= 1.8);
    assert!(start.elapsed().as_secs_f64() < 10.0);
}

#[test]
fn manufactured_solution_variable_permeability() {
    // K = K0 (1.5 + sin(2πx/L) cos(πy/L)/2) on top of a regional gradient
    let k0 = 2e-8;
    let k = |x: f64, y: f64| {
        let (a, b) = (2.0 * PI / L, PI / L);
        let v = k0 * (1.5 + 0.5 * (a * x).sin() * (b * y).cos());
        let kx = k0 * 0.5 * a * (a * x).cos() * (b * y).cos();
        let ky = -k0 * 0.5 * b * (a * x).sin() * (b * y).sin();
        (v, kx, ky)
    };
    let p = |x: f64, y: f64| {
        let [v, px, py, pxx, pyy] = sine_mode(x, y);
        [
            1e3 * v + 50.0 * x - 20.0 * y,
            1e3 * px + 50.0,
            1e3 * py - 20.0,
            1e3 * pxx,
            1e3 * pyy,
        ]
    };
    let e32 = mms_error(32, &k, &p);
    let e64 = mms_error(64, &k, &p);
    let order = (e32 / e64).log2();
    assert!(order >= 1.8, "order {order} ({e32:e} -> {e64:e})");
}

#[test]
fn mass_is_conserved_on_random_scenarios() {
    let grid = Grid::default();
    let params = SimParams::default();
    for seed in 0..20 {
        let spec = ScenarioSpec::new(
            grid,
            random_geology(1000 + seed, &GradientRange::default()).unwrap(),
        );
        let flow = solve_flow(&spec, &params).unwrap();
        let flux = &flow.pressure.flux;
        let scale = flux.max_abs();
        let well = grid.index(spec.well.cell.0, spec.well.cell.1);
        let q = spec.well.volumetric_rate(&params);
        for (c, out) in flux.net_outflow().iter().enumerate() {
            let expected = if c == well { q } else { 0.0 };
            assert!(
                (out - expected).abs() <= 1e-10 * scale,
                "seed {seed} cell {c}: imbalance {}",
                out - expected
            );
        }
        assert!(flow.pressure.relative_residual <= 1e-10);
    }
}

fn uniform_spec(gx: f64, gy: f64) -> (ScenarioSpec, ScalarField) {
    let grid = Grid::default();
    let geology = GeologySpec::new(0, 4, gx, gy);
    let mut spec = ScenarioSpec::new(grid, geology);
    spec.control_values = Some(vec![1e-8; 16]);
    let k = spec.permeability().unwrap();
    (spec, k)
}

#[test]
fn uniform_permeability_x_gradient_has_no_transverse_flow() {
    let (spec, k) = uniform_spec(100.0, 0.0);
    assert!(k.values().iter().all(|v| (v - 1e-8).abs() < 1e-20));
    let sol = solve_pressure(&k, (100.0, 0.0), None, &SimParams::default()).unwrap();
    let q = darcy_velocity(&k, &sol.pressure, &spec.boundary_pressure()).unwrap();
    let qx_max = q.x().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    assert!(qx_max > 0.0);
    for (qx, qy) in q.x().iter().zip(q.y()) {
        assert!(qy.abs() <= 1e-10 * qx_max);
        assert!((qx + 1e-8 * 100.0).abs() <= 1e-10 * qx_max);
    }
}

fn uniform_plume(gx: f64) -> (ScenarioSpec, gwhp_core::sim::Sample) {
    let (spec, _) = uniform_spec(gx, 0.0);
    let sample = run_scenario(&spec, &SimParams::default(), &TransportConfig::default()).unwrap();
    (spec, sample)
}

/// Largest column index (flow runs toward −x) of a cell warmer than 10.5 °C.
fn most_upstream_warm_column(t: &ScalarField) -> usize {
    let g = t.grid();
    (0..g.len())
        .filter(|&c| t.values()[c] > 10.5)
        .map(|c| g.coords(c).0)
        .max()
        .unwrap()
}

#[test]
fn uniform_plume_lies_downstream() {
    let (spec, sample) = uniform_plume(1000.0);
    let well = spec.well.cell;
    let (cx, cy) = centroid_offset(&sample.temperature, well);
    let (qx, _) = sample.velocity.mean();
    assert!(qx < 0.0, "flow runs toward -x for a +x pressure gradient");
    assert!(cx * qx > 0.0, "centroid offset {cx} not downstream");
    assert!(cy.abs() < 1.0, "transverse centroid offset {cy}");
    assert!(most_upstream_warm_column(&sample.temperature) <= well.0);
}

#[test]
fn weak_flow_plume_is_bounded_by_stagnation_point() {
    // The injection pushes water upstream until the stagnation point at
    // Q / (2π b q) from the well; no warm water gets further.
    let (spec, sample) = uniform_plume(100.0);
    let params = SimParams::default();
    let q = 1e-8 * 100.0;
    let x_s = spec.well.volumetric_rate(&params) / (2.0 * PI * spec.grid.thickness * q);
    let reach = (x_s / spec.grid.dx).ceil() as usize;
    let col = most_upstream_warm_column(&sample.temperature);
    assert!(
        col <= spec.well.cell.0 + reach,
        "warm column {col}, stagnation {reach} cells upstream"
    );
    let (cx, cy) = centroid_offset(&sample.temperature, spec.well.cell);
    assert!(cx < 0.0 && cy.abs() < 1.0);
}

#[test]
fn zero_gradient_plume_is_radially_symmetric() {
    let (spec, sample) = uniform_plume(0.0);
    for a in asymmetry(&sample.temperature, spec.well.cell) {
        assert!(a <= 0.05, "relative asymmetry {a}");
    }
}

#[test]
fn zero_gradient_pressure_peaks_at_well() {
    let (spec, k) = uniform_spec(0.0, 0.0);
    let sol = solve_pressure(&k, (0.0, 0.0), Some(&spec.well), &SimParams::default()).unwrap();
    let p = &sol.pressure;
    let (wi, wj) = spec.well.cell;
    assert_eq!(p.max(), p.at(wi, wj));
    for d in 1..30 {
        assert!(p.at(wi + d, wj) < p.at(wi + d - 1, wj));
        assert!(p.at(wi, wj - d) < p.at(wi, wj - d + 1));
    }
}

#[test]
fn generated_temperatures_stay_within_physical_bounds() {
    let grid = Grid::default();
    for seed in 0..8 {
        let spec = ScenarioSpec::new(
            grid,
            random_geology(seed, &GradientRange::default()).unwrap(),
        );
        let s = run_scenario(&spec, &SimParams::default(), &TransportConfig::default()).unwrap();
        assert!(
            s.temperature.min() >= 10.0 - 1e-12,
            "seed {seed}: min {}",
            s.temperature.min()
        );
        assert!(
            s.temperature.max() <= 15.0 + 1e-12,
            "seed {seed}: max {}",
            s.temperature.max()
        );
    }
}

/// Independent face-flux computation for a 4×4 checkerboard: every interior
/// face joins a high and a low cell, every boundary face sees half a cell.
#[test]
fn checkerboard_fluxes_match_hand_computation() {
    let grid = Grid::square(4, 4.0).unwrap();
    let (lo, hi) = (1.0, 3.0);
    let k = ScalarField::new(
        grid,
        (0..16)
            .map(|c| if (c % 4 + c / 4) % 2 == 0 { lo } else { hi })
            .collect(),
        "K",
    )
    .unwrap();
    let p = ScalarField::new(grid, (0..16).map(|c| ((c * 7) % 5) as f64).collect(), "Pa").unwrap();
    let bc = |x: f64, y: f64| x - 2.0 * y;
    let q = darcy_velocity(&k, &p, &bc).unwrap();
    // interior faces: harmonic mean of 1 and 3 is 1.5
    let kf = 1.5;
    let pv = |i: usize, j: usize| ((j * 4 + i) * 7 % 5) as f64;
    let kc = |i: usize, j: usize| if (i + j) % 2 == 0 { lo } else { hi };
    for j in 0..4 {
        for i in 0..4 {
            let west = if i == 0 {
                2.0 * kc(i, j) * (bc(0.0, j as f64 + 0.5) - pv(i, j))
            } else {
                kf * (pv(i - 1, j) - pv(i, j))
            };
            let east = if i == 3 {
                2.0 * kc(i, j) * (pv(i, j) - bc(4.0, j as f64 + 0.5))
            } else {
                kf * (pv(i, j) - pv(i + 1, j))
            };
            let south = if j == 0 {
                2.0 * kc(i, j) * (bc(i as f64 + 0.5, 0.0) - pv(i, j))
            } else {
                kf * (pv(i, j - 1) - pv(i, j))
            };
            let north = if j == 3 {
                2.0 * kc(i, j) * (pv(i, j) - bc(i as f64 + 0.5, 4.0))
            } else {
                kf * (pv(i, j) - pv(i, j + 1))
            };
            let (qx, qy) = q.at(i, j);
            assert!((qx - 0.5 * (west + east)).abs() < 1e-12, "qx at ({i},{j})");
            assert!(
                (qy - 0.5 * (south + north)).abs() < 1e-12,
                "qy at ({i},{j})"
            );
        }
    }
}

#[test]
fn linear_pressure_gives_exact_velocity() {
    let grid = Grid::square(8, 16.0).unwrap();
    let k = ScalarField::constant(grid, 3e-8, "K").unwrap();
    let bc = |x: f64, _y: f64| 40.0 * x;
    let p = ScalarField::from_fn(grid, "Pa", bc).unwrap();
    let q = darcy_velocity(&k, &p, &bc).unwrap();
    for (qx, qy) in q.x().iter().zip(q.y()) {
        assert!((qx + 3e-8 * 40.0).abs() < 1e-12 * 1.2e-6);
        assert_eq!(*qy, 0.0);
    }
    let flat = ScalarField::constant(grid, 5.0, "Pa").unwrap();
    let q0 = darcy_velocity(&k, &flat, &|_, _| 5.0).unwrap();
    assert!(q0.x().iter().chain(q0.y()).all(|v| *v == 0.0));
}

#[test]
fn equilibrium_is_preserved() {
    let grid = Grid::default();
    let t = ScalarField::constant(grid, 10.0, "degC").unwrap();
    let flux = FaceFlux::zeros(grid);
    let next = advance_temperature(&t, &flux, None, 0.2, 1.25e-7, 10.0, 15.0, 1e5).unwrap();
    assert_eq!(next.values(), t.values());
}

#[test]
fn pulse_advects_at_seepage_speed() {
    let grid = Grid::new(200, 2, 1.0, 1.0, 1.0).unwrap();
    let (q, porosity) = (1e-6, 0.25);
    let flux = FaceFlux::from_cell_velocity(&VectorField::uniform(grid, q, 0.0, "m/s").unwrap());
    let op = TransportOperator::new(&flux, None, porosity, 0.0).unwrap();
    let mut t: Vec<f64> = (0..grid.len())
        .map(|c| {
            if (20..25).contains(&(c % 200)) {
                15.0
            } else {
                10.0
            }
        })
        .collect();
    let centroid = |t: &[f64]| {
        let (mut s, mut m) = (0.0, 0.0);
        for (c, v) in t.iter().enumerate() {
            let x = (c % 200) as f64 + 0.5;
            s += x * (v - 10.0);
            m += v - 10.0;
        }
        s / m
    };
    let x0 = centroid(&t);
    let dt = 0.8 * op.stable_dt();
    let steps = 100;
    let mut next = t.clone();
    for _ in 0..steps {
        op.step_into(&t, &mut next, 10.0, 15.0, dt).unwrap();
        std::mem::swap(&mut t, &mut next);
    }
    let travel = q / porosity * dt * steps as f64;
    let moved = centroid(&t) - x0;
    assert!(travel > 50.0);
    assert!(
        (moved - travel).abs() < 1.0,
        "moved {moved} m, expected {travel} m"
    );
}

#[test]
fn injected_energy_matches_well_heat_rate() {
    let grid = Grid::default();
    let params = SimParams::default();
    let well = WellSpec::centered(&grid);
    let cell = grid.index(well.cell.0, well.cell.1);
    let q = well.volumetric_rate(&params);
    let t = ScalarField::constant(grid, 10.0, "degC").unwrap();
    let flux = FaceFlux::zeros(grid);
    let dt = 3600.0;
    let next = advance_temperature(
        &t,
        &flux,
        Some((cell, q)),
        params.porosity,
        params.diffusivity(),
        10.0,
        15.0,
        dt,
    )
    .unwrap();
    let pore = params.porosity * grid.cell_volume();
    let added: f64 = next
        .values()
        .iter()
        .map(|v| params.heat_capacity * pore * (v - 10.0))
        .sum();
    let expected = well.heat_rate(&params, 10.0) * dt;
    assert!(
        (added - expected).abs() <= 1e-6 * expected,
        "{added} vs {expected}"
    );
    // only the well cell warms within one step
    assert!(next
        .values()
        .iter()
        .enumerate()
        .all(|(c, v)| c == cell || *v == 10.0));
}

#[test]
fn diffusion_alone_conserves_heat() {
    let grid = Grid::square(16, 32.0).unwrap();
    let flux = FaceFlux::zeros(grid);
    let op = TransportOperator::new(&flux, None, 0.2, 1.25e-7).unwrap();
    let mut t: Vec<f64> = (0..grid.len())
        .map(|c| 10.0 + ((c * 37) % 11) as f64 * 0.3)
        .collect();
    let before: f64 = t.iter().sum();
    let mut next = t.clone();
    for _ in 0..50 {
        op.step_into(&t, &mut next, 10.0, 15.0, op.stable_dt())
            .unwrap();
        std::mem::swap(&mut t, &mut next);
    }
    let after: f64 = t.iter().sum();
    assert!((after - before).abs() < 1e-9 * before);
}
