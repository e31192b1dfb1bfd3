//! Occupations and pair correlations with sampling errors.
//!
//! Observable ids use 1-based sites: `n_3_up`, `g2_1up_2up`, `trace_down`.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use num_complex::Complex64 as c64;
use serde::{Deserialize, Serialize};

use crate::ed::EdEvolution;
use crate::error::{Error, Result};
use crate::hf::HfEvolution;
use crate::lattice::Spin;
use crate::phase_space::PhaseSpacePoint;
use crate::sde::{practical_simulation_time, TrajectoryEnsemble};

/// A denominator whose mean is within this many standard errors of zero
/// marks the g² estimate as a pole.
pub const POLE_SIGMAS: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Observable {
    /// `<n_iiσ>`
    Occupation { site: usize, spin: Spin },
    /// `<:n_λ n_κ:> / (<n_λ><n_κ>)`
    G2 { a: (usize, Spin), b: (usize, Spin) },
    /// `Σ_i <n_iiσ>`
    Trace { spin: Spin },
}

impl Observable {
    pub fn occupation(site: usize, spin: Spin) -> Self {
        Observable::Occupation { site, spin }
    }

    pub fn g2(a: (usize, Spin), b: (usize, Spin)) -> Self {
        Observable::G2 { a, b }
    }

    pub fn validate(&self, n_sites: usize) -> Result<()> {
        let check = |i: usize| {
            if i >= n_sites {
                Err(Error::InvalidObservable(format!("site {} outside 1..={n_sites}", i + 1)))
            } else {
                Ok(())
            }
        };
        match *self {
            Observable::Occupation { site, .. } => check(site),
            Observable::G2 { a, b } => {
                check(a.0)?;
                check(b.0)?;
                if a == b {
                    return Err(Error::InvalidObservable(format!(
                        "g2 of site {} with itself at equal spin vanishes identically",
                        a.0 + 1
                    )));
                }
                Ok(())
            }
            Observable::Trace { .. } => Ok(()),
        }
    }

    /// Green's-function entries an ensemble must record to evaluate this.
    pub fn entries(&self, n_sites: usize) -> Vec<(usize, usize, Spin)> {
        match *self {
            Observable::Occupation { site, spin } => vec![(site, site, spin)],
            Observable::G2 { a, b } => {
                let mut e = vec![(a.0, a.0, a.1), (b.0, b.0, b.1)];
                if a.1 == b.1 {
                    e.push((a.0, b.0, a.1));
                    e.push((b.0, a.0, a.1));
                }
                e
            }
            Observable::Trace { spin } => (0..n_sites).map(|i| (i, i, spin)).collect(),
        }
    }
}

/// Union of the entries needed by `obs`, in first-seen order.
pub fn required_entries(obs: &[Observable], n_sites: usize) -> Vec<(usize, usize, Spin)> {
    let mut out = Vec::new();
    for o in obs {
        for e in o.entries(n_sites) {
            if !out.contains(&e) {
                out.push(e);
            }
        }
    }
    out
}

fn spin_tag(s: Spin) -> &'static str {
    s.label()
}

fn parse_spin(s: &str) -> Option<Spin> {
    match s {
        "up" => Some(Spin::Up),
        "down" | "dn" => Some(Spin::Down),
        _ => None,
    }
}

fn parse_site_spin(s: &str) -> Option<(usize, Spin)> {
    let split = s.find(|c: char| !c.is_ascii_digit())?;
    let site: usize = s[..split].parse().ok()?;
    if site == 0 {
        return None;
    }
    Some((site - 1, parse_spin(&s[split..])?))
}

impl fmt::Display for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Observable::Occupation { site, spin } => write!(f, "n_{}_{}", site + 1, spin_tag(spin)),
            Observable::G2 { a, b } => {
                write!(f, "g2_{}{}_{}{}", a.0 + 1, spin_tag(a.1), b.0 + 1, spin_tag(b.1))
            }
            Observable::Trace { spin } => write!(f, "trace_{}", spin_tag(spin)),
        }
    }
}

impl FromStr for Observable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidObservable(format!("cannot parse observable id {s:?}"));
        let parts: Vec<&str> = s.split('_').collect();
        match parts.as_slice() {
            ["n", site, spin] => {
                let site: usize = site.parse().map_err(|_| bad())?;
                if site == 0 {
                    return Err(bad());
                }
                Ok(Observable::Occupation { site: site - 1, spin: parse_spin(spin).ok_or_else(bad)? })
            }
            ["g2", a, b] => Ok(Observable::G2 {
                a: parse_site_spin(a).ok_or_else(bad)?,
                b: parse_site_spin(b).ok_or_else(bad)?,
            }),
            ["trace", spin] => Ok(Observable::Trace { spin: parse_spin(spin).ok_or_else(bad)? }),
            _ => Err(bad()),
        }
    }
}

impl TryFrom<String> for Observable {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Observable> for String {
    fn from(o: Observable) -> String {
        o.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservableSeries {
    pub id: String,
    pub times: Vec<f64>,
    pub mean: Vec<c64>,
    /// Standard error of the real part.
    pub stderr: Vec<f64>,
    /// Standard error of the imaginary part.
    pub stderr_im: Vec<f64>,
    pub alive: Vec<usize>,
    /// g² points whose denominator is statistically compatible with zero.
    pub pole: Vec<bool>,
}

impl ObservableSeries {
    fn empty(id: String) -> Self {
        Self {
            id,
            times: Vec::new(),
            mean: Vec::new(),
            stderr: Vec::new(),
            stderr_im: Vec::new(),
            alive: Vec::new(),
            pole: Vec::new(),
        }
    }

    fn push(&mut self, t: f64, est: Estimate, alive: usize) {
        self.times.push(t);
        self.mean.push(est.mean);
        self.stderr.push(est.stderr_re);
        self.stderr_im.push(est.stderr_im);
        self.alive.push(alive);
        self.pole.push(est.pole);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Index of the snapshot closest in time to `t`.
    pub fn nearest(&self, t: f64) -> Option<usize> {
        (0..self.len()).min_by(|&a, &b| (self.times[a] - t).abs().total_cmp(&(self.times[b] - t).abs()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Estimate {
    mean: c64,
    stderr_re: f64,
    stderr_im: f64,
    pole: bool,
}

fn mean_and_stderr(x: &[c64]) -> Estimate {
    let m = x.len() as f64;
    let mean: c64 = x.iter().sum::<c64>() / m;
    let (mut vr, mut vi) = (0.0, 0.0);
    for v in x {
        vr += (v.re - mean.re).powi(2);
        vi += (v.im - mean.im).powi(2);
    }
    let (se_re, se_im) = if x.len() > 1 {
        ((vr / (m - 1.0) / m).sqrt(), (vi / (m - 1.0) / m).sqrt())
    } else {
        (0.0, 0.0)
    };
    Estimate { mean, stderr_re: se_re, stderr_im: se_im, pole: false }
}

/// Ratio of means `<N> / (<D1><D2>)` with a leave-one-out jackknife error.
fn ratio_estimate(num: &[c64], d1: &[c64], d2: &[c64]) -> Estimate {
    let e1 = mean_and_stderr(d1);
    let e2 = mean_and_stderr(d2);
    let near_zero = |e: &Estimate| e.mean.norm() <= POLE_SIGMAS * e.stderr_re.hypot(e.stderr_im);
    if near_zero(&e1) || near_zero(&e2) {
        let nan = f64::NAN;
        return Estimate { mean: c64::new(nan, nan), stderr_re: nan, stderr_im: nan, pole: true };
    }
    let m = num.len();
    let sn: c64 = num.iter().sum();
    let s1: c64 = d1.iter().sum();
    let s2: c64 = d2.iter().sum();
    let mf = m as f64;
    let mean = (sn / mf) / ((s1 / mf) * (s2 / mf));
    if m < 2 {
        return Estimate { mean, stderr_re: 0.0, stderr_im: 0.0, pole: false };
    }
    let k = mf - 1.0;
    let loo: Vec<c64> = (0..m).map(|i| ((sn - num[i]) / k) / (((s1 - d1[i]) / k) * ((s2 - d2[i]) / k))).collect();
    let bar: c64 = loo.iter().sum::<c64>() / mf;
    let (mut vr, mut vi) = (0.0, 0.0);
    for v in &loo {
        vr += (v.re - bar.re).powi(2);
        vi += (v.im - bar.im).powi(2);
    }
    let f = (mf - 1.0) / mf;
    Estimate { mean, stderr_re: (f * vr).sqrt(), stderr_im: (f * vi).sqrt(), pole: false }
}

/// Wick numerator and the two denominators of g² at a Gaussian point.
fn g2_parts(get: impl Fn(usize, usize, Spin) -> c64, a: (usize, Spin), b: (usize, Spin)) -> (c64, c64, c64) {
    let na = get(a.0, a.0, a.1);
    let nb = get(b.0, b.0, b.1);
    let mut num = na * nb;
    if a.1 == b.1 {
        num -= get(a.0, b.0, a.1) * get(b.0, a.0, a.1);
    }
    (num, na, nb)
}

fn point_value(obs: &Observable, get: impl Fn(usize, usize, Spin) -> c64, n_sites: usize) -> c64 {
    match *obs {
        Observable::Occupation { site, spin } => get(site, site, spin),
        Observable::Trace { spin } => (0..n_sites).map(|i| get(i, i, spin)).sum(),
        Observable::G2 { .. } => unreachable!("g2 is a ratio"),
    }
}

/// Which snapshots of an ensemble a series covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Window {
    /// Up to the practical simulation time, with every trajectory alive.
    #[default]
    PracticalTime,
    /// Every snapshot, averaging over whatever trajectories are alive.
    All,
}

pub fn ensemble_series(e: &TrajectoryEnsemble, obs: &Observable, window: Window) -> Result<ObservableSeries> {
    let ns = e.n_sites();
    obs.validate(ns)?;
    for (i, j, s) in obs.entries(ns) {
        if e.layout.position(i, j, s).is_none() {
            return Err(Error::InvalidObservable(format!(
                "{obs} needs entry ({}, {}, {}) which was not recorded",
                i + 1,
                j + 1,
                s.label()
            )));
        }
    }
    let m = e.len();
    let pst = practical_simulation_time(e);
    let times = e.times();
    let mut out = ObservableSeries::empty(obs.to_string());
    for (idx, &t) in times.iter().enumerate() {
        let alive = e.alive[idx];
        if alive == 0 {
            break;
        }
        if window == Window::PracticalTime && (alive < m || t > pst) {
            break;
        }
        let live: Vec<usize> = (0..m).filter(|&k| e.records[k].snapshots.len() > idx).collect();
        let value = |k: usize| move |i: usize, j: usize, s: Spin| e.value(k, idx, i, j, s).expect("recorded entry");
        let est = match *obs {
            Observable::G2 { a, b } => {
                let parts: Vec<(c64, c64, c64)> = live.iter().map(|&k| g2_parts(value(k), a, b)).collect();
                let num: Vec<c64> = parts.iter().map(|p| p.0).collect();
                let d1: Vec<c64> = parts.iter().map(|p| p.1).collect();
                let d2: Vec<c64> = parts.iter().map(|p| p.2).collect();
                ratio_estimate(&num, &d1, &d2)
            }
            _ => {
                let xs: Vec<c64> = live.iter().map(|&k| point_value(obs, value(k), ns)).collect();
                mean_and_stderr(&xs)
            }
        };
        out.push(t, est, alive);
    }
    Ok(out)
}

/// `<n_iiσ>` up to the practical simulation time.
pub fn occupation(e: &TrajectoryEnsemble, i: usize, s: Spin) -> Result<ObservableSeries> {
    ensemble_series(e, &Observable::occupation(i, s), Window::PracticalTime)
}

pub fn g2(e: &TrajectoryEnsemble, lam: (usize, Spin), kap: (usize, Spin)) -> Result<ObservableSeries> {
    ensemble_series(e, &Observable::g2(lam, kap), Window::PracticalTime)
}

fn exact(mean: f64) -> Estimate {
    Estimate { mean: c64::new(mean, 0.0), stderr_re: 0.0, stderr_im: 0.0, pole: false }
}

fn exact_ratio(num: c64, d1: c64, d2: c64) -> Estimate {
    if d1 == c64::new(0.0, 0.0) || d2 == c64::new(0.0, 0.0) {
        let nan = f64::NAN;
        return Estimate { mean: c64::new(nan, nan), stderr_re: 0.0, stderr_im: 0.0, pole: true };
    }
    Estimate { mean: num / (d1 * d2), stderr_re: 0.0, stderr_im: 0.0, pole: false }
}

pub fn series_from_ed(ev: &EdEvolution, obs: &Observable) -> Result<ObservableSeries> {
    let ns = ev.basis.n_sites();
    obs.validate(ns)?;
    let mut out = ObservableSeries::empty(obs.to_string());
    for (t, o) in ev.times.iter().zip(&ev.observables) {
        let est = match *obs {
            Observable::Occupation { site, spin } => exact(o.occupation(site, spin)),
            Observable::Trace { spin } => exact(o.occupation[spin.index()].iter().sum()),
            Observable::G2 { a, b } => exact_ratio(
                c64::new(o.normal_ordered(a, b), 0.0),
                c64::new(o.occupation(a.0, a.1), 0.0),
                c64::new(o.occupation(b.0, b.1), 0.0),
            ),
        };
        out.push(*t, est, 1);
    }
    Ok(out)
}

fn point_getter(p: &PhaseSpacePoint) -> impl Fn(usize, usize, Spin) -> c64 + '_ {
    move |i, j, s| p.spin(s)[(i, j)]
}

pub fn series_from_hf(ev: &HfEvolution, obs: &Observable) -> Result<ObservableSeries> {
    let ns = ev.states.first().map(|p| p.n_sites()).unwrap_or(0);
    obs.validate(ns)?;
    let mut out = ObservableSeries::empty(obs.to_string());
    for (t, p) in ev.times.iter().zip(&ev.states) {
        let est = match *obs {
            Observable::G2 { a, b } => {
                let (n, d1, d2) = g2_parts(point_getter(p), a, b);
                exact_ratio(n, d1, d2)
            }
            _ => {
                let v = point_value(obs, point_getter(p), ns);
                Estimate { mean: v, stderr_re: 0.0, stderr_im: 0.0, pole: false }
            }
        };
        out.push(*t, est, 1);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CsvRow {
    time: f64,
    observable_id: String,
    mean_re: f64,
    mean_im: f64,
    stderr: f64,
    alive_count: usize,
}

/// Writes `time, observable_id, mean_re, mean_im, stderr, alive_count` rows.
pub fn write_csv<W: Write>(series: &[ObservableSeries], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for s in series {
        for k in 0..s.len() {
            wr.serialize(CsvRow {
                time: s.times[k],
                observable_id: s.id.clone(),
                mean_re: s.mean[k].re,
                mean_im: s.mean[k].im,
                stderr: s.stderr[k],
                alive_count: s.alive[k],
            })
            .map_err(|e| Error::InvalidConfig(format!("csv write failed: {e}")))?;
        }
    }
    wr.flush().map_err(|e| Error::InvalidConfig(format!("csv write failed: {e}")))?;
    Ok(())
}

/// Reads series back, grouped by observable id in first-seen order.
/// Imaginary standard errors are not stored and come back as zero.
pub fn read_csv<R: Read>(r: R) -> Result<Vec<ObservableSeries>> {
    let mut rd = csv::Reader::from_reader(r);
    let mut out: Vec<ObservableSeries> = Vec::new();
    for row in rd.deserialize::<CsvRow>() {
        let row = row.map_err(|e| Error::InvalidConfig(format!("malformed series csv: {e}")))?;
        let pos = match out.iter().position(|s| s.id == row.observable_id) {
            Some(p) => p,
            None => {
                out.push(ObservableSeries::empty(row.observable_id.clone()));
                out.len() - 1
            }
        };
        let est = Estimate {
            mean: c64::new(row.mean_re, row.mean_im),
            stderr_re: row.stderr,
            stderr_im: 0.0,
            pole: row.mean_re.is_nan(),
        };
        out[pos].push(row.time, est, row.alive_count);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_round_trip() {
        for o in [
            Observable::occupation(0, Spin::Up),
            Observable::g2((0, Spin::Up), (1, Spin::Up)),
            Observable::g2((2, Spin::Up), (2, Spin::Down)),
            Observable::Trace { spin: Spin::Down },
        ] {
            assert_eq!(o.to_string().parse::<Observable>().unwrap(), o);
        }
        assert_eq!(Observable::g2((0, Spin::Up), (1, Spin::Down)).to_string(), "g2_1up_2down");
        assert!("n_0_up".parse::<Observable>().is_err());
        assert!("g2_1up".parse::<Observable>().is_err());
    }

    #[test]
    fn same_mode_g2_rejected() {
        assert!(Observable::g2((1, Spin::Up), (1, Spin::Up)).validate(4).is_err());
        assert!(Observable::g2((1, Spin::Up), (1, Spin::Down)).validate(4).is_ok());
        assert!(Observable::occupation(4, Spin::Up).validate(4).is_err());
    }

    #[test]
    fn plain_stderr() {
        let x: Vec<c64> = [1.0, 2.0, 3.0, 4.0].iter().map(|&v| c64::new(v, 0.0)).collect();
        let e = mean_and_stderr(&x);
        assert_eq!(e.mean, c64::new(2.5, 0.0));
        // sample variance 5/3 over 4 samples
        assert!((e.stderr_re - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn jackknife_of_linear_ratio_matches_plain_error() {
        // With constant denominators the ratio is linear in the numerator
        // and the jackknife error equals the plain standard error.
        let num: Vec<c64> = (0..50).map(|k| c64::new((k as f64 * 0.37).sin(), 0.0)).collect();
        let one = vec![c64::new(1.0, 0.0); 50];
        let two = vec![c64::new(2.0, 0.0); 50];
        let r = ratio_estimate(&num, &one, &two);
        let plain = mean_and_stderr(&num);
        assert!((r.mean - plain.mean / 2.0).norm() < 1e-14);
        assert!((r.stderr_re - plain.stderr_re / 2.0).abs() < 1e-12);
    }

    #[test]
    fn pole_flagged() {
        let num = vec![c64::new(1.0, 0.0); 10];
        let d1: Vec<c64> = (0..10).map(|k| c64::new(if k % 2 == 0 { 1.0 } else { -1.0 }, 0.0)).collect();
        let d2 = vec![c64::new(1.0, 0.0); 10];
        let r = ratio_estimate(&num, &d1, &d2);
        assert!(r.pole && r.mean.re.is_nan());
    }

    #[test]
    fn csv_round_trip() {
        let mut s = ObservableSeries::empty("n_1_up".into());
        s.push(0.0, exact(1.0), 4);
        s.push(0.5, Estimate { mean: c64::new(0.25, -1e-3), stderr_re: 0.01, stderr_im: 0.0, pole: false }, 4);
        let mut buf = Vec::new();
        write_csv(std::slice::from_ref(&s), &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("time,observable_id,mean_re,mean_im,stderr,alive_count\n"));
        let back = read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, vec![s]);
    }

    use crate::lattice::{build_lattice, validate_bell, HubbardParams, InitialState};
    use crate::phase_space::HubbardModel;
    use crate::sde::{run_ensemble, BellNoise, InitSampler, IntegratorConfig, RecordMode, Stepper};

    fn delta_ensemble(dims: &[usize], up: Vec<f64>, down: Vec<f64>, u: f64, t_max: f64, m: usize) -> TrajectoryEnsemble {
        let lat = build_lattice(dims, 1.0).unwrap();
        let model = HubbardModel::new(&lat, &HubbardParams { j: 1.0, u, hbar: 1.0 }).unwrap();
        let cfg = IntegratorConfig { dt: 1e-3, t_max, snapshot_stride: 100, ..IntegratorConfig::default() };
        let stepper = Stepper::new(model, cfg).unwrap();
        let p = PhaseSpacePoint::from_diagonal(&up, &down).unwrap();
        run_ensemble(&InitSampler::Delta(p), m, &stepper, 1).unwrap()
    }

    #[test]
    fn two_site_free_oscillation() {
        let e = delta_ensemble(&[2], vec![1.0, 0.0], vec![0.0, 0.0], 0.0, 2.0, 2);
        let s = occupation(&e, 0, Spin::Up).unwrap();
        assert_eq!(s.len(), 21);
        for (t, v) in s.times.iter().zip(&s.mean) {
            assert!((v.re - t.cos().powi(2)).abs() < 1e-10);
            assert!(v.im.abs() < 1e-12);
        }
        assert!(s.stderr.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn product_state_g2_is_wick_value() {
        let e = delta_ensemble(&[2], vec![1.0, 1.0], vec![1.0, 1.0], 1.0, 0.2, 3);
        let s = g2(&e, (0, Spin::Up), (0, Spin::Down)).unwrap();
        assert_eq!(s.mean[0], c64::new(1.0, 0.0));
        let same = g2(&e, (0, Spin::Up), (1, Spin::Up)).unwrap();
        assert_eq!(same.mean[0], c64::new(1.0, 0.0));
        // Fully occupied lattice is frozen.
        assert!(s.mean.iter().all(|v| (v - 1.0).norm() < 1e-12));
        let empty = g2(&delta_ensemble(&[2], vec![1.0, 0.0], vec![1.0, 0.0], 1.0, 1e-3, 2), (1, Spin::Up), (0, Spin::Down)).unwrap();
        assert!(empty.pole[0] && empty.mean[0].re.is_nan());
    }

    #[test]
    fn bell_initial_moments() {
        let lat = build_lattice(&[2], 1.0).unwrap();
        let a = 0.5f64.sqrt();
        let st = InitialState::Bell(validate_bell(c64::new(a, 0.0), c64::new(0.0, a)).unwrap());
        let model = HubbardModel::new(&lat, &HubbardParams::default()).unwrap();
        let cfg = IntegratorConfig { dt: 1e-3, t_max: 1e-3, snapshot_stride: 1, ..IntegratorConfig::default() };
        let stepper = Stepper::new(model, cfg).unwrap();
        let e = run_ensemble(&InitSampler::from_state(&st, BellNoise::Binary).unwrap(), 20_000, &stepper, 9).unwrap();
        let occ = occupation(&e, 0, Spin::Up).unwrap();
        assert!((occ.mean[0].re - 0.5).abs() < 4.0 * occ.stderr[0] + 1e-12);
        let g = g2(&e, (0, Spin::Up), (0, Spin::Down)).unwrap();
        assert!((g.mean[0].re - 2.0).abs() < 4.0 * g.stderr[0], "{} ± {}", g.mean[0], g.stderr[0]);
    }

    #[test]
    fn entry_recording_is_enough() {
        let lat = build_lattice(&[4], 1.0).unwrap();
        let obs = [Observable::g2((0, Spin::Up), (1, Spin::Up)), Observable::occupation(2, Spin::Down)];
        let entries = required_entries(&obs, 4);
        assert_eq!(entries.len(), 5);
        let model = HubbardModel::new(&lat, &HubbardParams::default()).unwrap();
        let cfg = IntegratorConfig { dt: 1e-3, t_max: 0.05, snapshot_stride: 10, record: RecordMode::Entries(entries), ..IntegratorConfig::default() };
        let stepper = Stepper::new(model, cfg).unwrap();
        let p = PhaseSpacePoint::from_diagonal(&[1.0, 1.0, 0.0, 0.0], &[0.0, 0.0, 1.0, 1.0]).unwrap();
        let e = run_ensemble(&InitSampler::Delta(p), 4, &stepper, 2).unwrap();
        for o in &obs {
            assert_eq!(ensemble_series(&e, o, Window::All).unwrap().len(), 6);
        }
        assert!(occupation(&e, 0, Spin::Down).is_err());
    }
}
