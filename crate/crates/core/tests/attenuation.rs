mod common;

use common::cert2;
use satchain::lyapunov::{dilation_matrix, reparameterize};
use satchain::sim::{integrate, Scenario, SystemKind};
use satchain::Certificate;

// Right-hand side of the r-rescaled sat-omega loop at state z.
fn rescaled_field(cert: &Certificate, z: &[f64], r: f64) -> Vec<f64> {
    let n = z.len();
    let d = dilation_matrix(r, n);
    let x: Vec<f64> = z.iter().zip(&d).map(|(zi, di)| zi / (r * di)).collect();
    let mut f: Vec<f64> = z[1..].to_vec();
    let gain = cert.ctrl.l_n() / cert.sat.sigma_inf;
    f.push(-gain * cert.sat.eval(cert.k * cert.ctrl.omega_n(&x)));
    f
}

fn saturation_input(cert: &Certificate, z: &[f64], r: f64) -> f64 {
    let d = dilation_matrix(r, z.len());
    let x: Vec<f64> = z.iter().zip(&d).map(|(zi, di)| zi / (r * di)).collect();
    cert.k * cert.ctrl.omega_n(&x)
}

fn worst_residual(r: f64, dt: f64) -> (f64, f64) {
    let cert = cert2();
    let mut scn = Scenario::new(SystemKind::SatOmegaLoop, vec![1.0, -0.5], 10.0);
    scn.solver.dt_out = dt;
    let tr = integrate(&scn, cert).unwrap();
    let z = reparameterize(&tr.t, &tr.x, r).unwrap();
    // Step in output samples; for r > 1 only every r-th sample maps to a grid point.
    let stride = r.max(1.0).round() as usize;
    let h = dt * stride as f64;
    let last = ((tr.t.len() - 1) as f64 * r.min(1.0)) as usize;
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    let (mut checked, mut skipped) = (0usize, 0usize);
    let mut k = 2 * stride;
    while k + 2 * stride <= last {
        let zk = |j: usize| &z[j];
        // The stencil needs a smooth field: skip windows crossing a saturation corner.
        let window: Vec<f64> = (k - 2 * stride..=k + 2 * stride).map(|j| saturation_input(cert, zk(j), r)).collect();
        let crosses = window.iter().any(|u| u.abs() <= cert.sat.b1) && window.iter().any(|u| u.abs() >= cert.sat.b1);
        if crosses {
            skipped += 1;
            k += stride;
            continue;
        }
        checked += 1;
        let f = rescaled_field(cert, zk(k), r);
        for (i, fi) in f.iter().enumerate() {
            let fd = (zk(k - 2 * stride)[i] - 8.0 * zk(k - stride)[i] + 8.0 * zk(k + stride)[i] - zk(k + 2 * stride)[i]) / (12.0 * h);
            worst = worst.max((fd - fi).abs());
            scale = scale.max(fi.abs());
        }
        k += stride;
    }
    assert!(checked > 20 * skipped.max(1), "checked {checked}, skipped {skipped}");
    (worst, scale)
}

// Stencil residuals fall with the spacing until they meet the integrator floor.
#[test]
fn rescaled_trajectories_solve_the_rescaled_loop() {
    for r in [0.5, 2.0] {
        let runs: Vec<(f64, f64)> = [2e-3, 1e-3, 5e-4].iter().map(|&dt| worst_residual(r, dt)).collect();
        let best = runs.iter().map(|x| x.0).fold(f64::INFINITY, f64::min);
        let scale = runs[0].1.max(1.0);
        assert!(best <= 1e-4 * scale, "r = {r}: residual {best:e}");
        assert!(runs[0].0 >= 8.0 * best, "r = {r}: residuals {runs:?}");
    }
}
