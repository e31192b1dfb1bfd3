//! Sampled noise increments from different gauges share their second
//! moments: `E[dn dnᵀ] = D dt` whatever the factor.

use faer::Mat;
use hubbard_gpsr::gauge::GaugeMethod;
use hubbard_gpsr::linalg::frobenius;
use hubbard_gpsr::sde::{sample_wiener, trajectory_rng};
use hubbard_gpsr::testutil::{random_point, rng};
use hubbard_gpsr::{build_lattice, HubbardModel, HubbardParams};
use num_complex::Complex64 as c64;

const SAMPLES: usize = 100_000;
const DT: f64 = 1e-3;

struct Moments {
    mean: Vec<c64>,
    second: Mat<c64>,
}

fn sample_moments(gauge: GaugeMethod, model: &HubbardModel, seed: u64) -> Moments {
    let p = random_point(model.n_sites(), &mut rng(5));
    let nn = model.n_sites() * model.n_sites();
    let mut mean = vec![c64::new(0.0, 0.0); 2 * nn];
    let mut second = Mat::<c64>::zeros(2 * nn, 2 * nn);
    let mut r = trajectory_rng(seed, 0);
    let mut v = vec![c64::new(0.0, 0.0); 2 * nn];
    for _ in 0..SAMPLES {
        let op = gauge.operator(model, &p, &mut r).unwrap();
        let (up, down) = op.apply(&sample_wiener(op.channels(), DT, &mut r));
        for i in 0..model.n_sites() {
            for j in 0..model.n_sites() {
                v[i * model.n_sites() + j] = up[(i, j)];
                v[nn + i * model.n_sites() + j] = down[(i, j)];
            }
        }
        for a in 0..2 * nn {
            mean[a] += v[a];
            for b in 0..2 * nn {
                second[(a, b)] += v[a] * v[b];
            }
        }
    }
    let w = 1.0 / (SAMPLES as f64 * DT);
    Moments {
        mean: mean.iter().map(|m| m / SAMPLES as f64).collect(),
        second: Mat::from_fn(2 * nn, 2 * nn, |a, b| second[(a, b)] * w),
    }
}

#[test]
fn gauges_agree_in_distribution() {
    let ns = 3;
    let model = HubbardModel::new(&build_lattice(&[ns], 1.0).unwrap(), &HubbardParams::default()).unwrap();
    let p = random_point(ns, &mut rng(5));
    let d = model.diffusion_block(&p).unwrap().assemble();
    let dn = frobenius(d.as_ref());

    let gauges = [
        GaugeMethod::Analytic,
        GaugeMethod::randomized(),
        GaugeMethod::RandomizedSvd { rank: None, oversample: 0, power_iters: 0, explicit: true },
        GaugeMethod::ClassicalSvd,
    ];
    let moments: Vec<Moments> = gauges.iter().enumerate().map(|(k, g)| sample_moments(*g, &model, k as u64)).collect();
    for (g, m) in gauges.iter().zip(&moments) {
        let rel = frobenius((&m.second - &d).as_ref()) / dn;
        assert!(rel < 0.03, "{g:?}: second moment off by {rel}");
        let drift: f64 = m.mean.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        // The mean increment has spread ~ sqrt(dt / N) per entry.
        assert!(drift < 10.0 * (DT * dn / SAMPLES as f64).sqrt(), "{g:?}: mean {drift}");
    }
    let between = frobenius((&moments[0].second - &moments[1].second).as_ref()) / dn;
    assert!(between < 0.04, "analytic vs randomized: {between}");
}
