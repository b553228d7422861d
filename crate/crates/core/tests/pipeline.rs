use nonlocal_spde::bounds::{compute_bounds, BoundsInputs};
use nonlocal_spde::ensemble::{run_ensemble, write_jsonl, write_stats_csv, EnsembleConfig};
use nonlocal_spde::geometry::DomainSpec;
use nonlocal_spde::integrator::{uniform_checkpoints, PathRecord, StepperConfig};
use nonlocal_spde::noise::{CovarianceKernel, NoiseModel};
use nonlocal_spde::problem::{validate_growth_conditions, DiffusionCoefficient, InitialData, Nonlinearity, ProblemSpec};
use nonlocal_spde::setup::NoiseSpec;
use nonlocal_spde::Setup;

fn problem(lambda: f64, sigma: DiffusionCoefficient, t_max: f64) -> ProblemSpec {
    ProblemSpec {
        lambda,
        q: 0.5,
        f: Nonlinearity::Exp,
        sigma,
        envelope: None,
        initial: InitialData::Eigenfunction { scale: 1.0 },
        t_max,
        domain: DomainSpec::interval(1.0, 31),
    }
}

fn kl() -> NoiseSpec {
    NoiseSpec::Kl { kernel: CovarianceKernel::Gaussian { amplitude: 1.0, length: 0.1 }, eps_tail: 1e-6 }
}

#[test]
fn jsonl_round_trips_records() {
    let s = Setup::new(problem(5.0, DiffusionCoefficient::Linear { c: 0.2 }, 0.05), &kl(), 1e-10).unwrap();
    let cfg = StepperConfig { dt0: 1e-4, keep_fields: true, ..Default::default() };
    let ens = EnsembleConfig { n_paths: 3, master_seed: 11, workers: 2, checkpoints: uniform_checkpoints(0.05, 5) };
    let (_, records) = run_ensemble(&s, &cfg, &ens).unwrap();
    let mut buf = Vec::new();
    write_jsonl(&records, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), 3);
    let back: Vec<PathRecord> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(back, records);
}

#[test]
fn stats_csv_has_one_row_per_checkpoint() {
    let s = Setup::new(problem(5.0, DiffusionCoefficient::Linear { c: 0.2 }, 0.05), &kl(), 1e-10).unwrap();
    let cfg = StepperConfig { dt0: 1e-4, ..Default::default() };
    let ens = EnsembleConfig { n_paths: 8, master_seed: 3, workers: 2, checkpoints: uniform_checkpoints(0.05, 10) };
    let (stats, _) = run_ensemble(&s, &cfg, &ens).unwrap();
    let mut buf = Vec::new();
    write_stats_csv(&stats, &mut buf).unwrap();
    let mut reader = csv::Reader::from_reader(buf.as_slice());
    let headers = reader.headers().unwrap().clone();
    assert_eq!(&headers[0], "t");
    assert!(headers.iter().any(|h| h == "psi"));
    let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 11);
    let t_last: f64 = rows[10][0].parse().unwrap();
    assert!((t_last - 0.05).abs() < 1e-12);
}

#[test]
fn growth_report_for_the_reference_problem() {
    let p = problem(1.0, DiffusionCoefficient::Linear { c: 0.1 }, 1.0);
    let report = validate_growth_conditions(&p, 1.0, 50.0, 200).unwrap();
    assert!(report.passed("f_positive").unwrap());
    assert!(report.passed("f_convex").unwrap());
    assert!(report.passed("f_pow_tail_integrable").unwrap());
    assert!(report.passed("sigma_convex").unwrap());
}

#[test]
fn bounds_agree_with_closed_forms_on_a_fine_grid() {
    let mut p = problem(1.0, DiffusionCoefficient::off(), 1.0);
    p.domain = DomainSpec::interval(1.0, 255);
    p.initial = InitialData::Constant { value: 1.0 };
    let s = Setup::new(p.clone(), &NoiseSpec::Off, 1e-10).unwrap();
    let inputs = BoundsInputs { psi0: s.psi0().unwrap(), delta: 0.1, ell: 2, theta0: None, q1: None };
    let r = compute_bounds(&p.f, 40.0, 0.5, None, &s.grid, &s.eigen, &inputs).unwrap();
    // ξ ≡ 1 and ∫φ₁ = 1 give Ψ₀ = 1; s·e^{−s/2} peaks at s = 2.
    assert!((r.psi0 - 1.0).abs() < 1e-10);
    assert!((r.b.unwrap() - 2.0 / std::f64::consts::E).abs() < 1e-6);
    let m = r.m.unwrap();
    let phi_at = |x: f64| std::f64::consts::FRAC_PI_2 * (std::f64::consts::PI * x).sin();
    assert!((m - phi_at(26.0 / 256.0)).abs() < 1e-3);
    let expected_r = (m / 3.0).sqrt();
    assert!((r.r.unwrap() - expected_r).abs() < 1e-12);
    assert!((r.lambda_min.unwrap() - r.lambda1 * r.b.unwrap() / expected_r).abs() < 1e-9);
}

#[test]
fn kl_spectrum_csv_lists_every_retained_mode() {
    let s = Setup::new(problem(1.0, DiffusionCoefficient::Linear { c: 0.1 }, 1.0), &kl(), 1e-10).unwrap();
    let NoiseModel::Kl(noise) = &s.noise else { panic!("expected KL noise") };
    let mut buf = Vec::new();
    noise.write_spectrum_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().next(), Some("j,gamma"));
    assert_eq!(text.lines().count(), noise.spectrum.len() + 1);
}

#[test]
fn eigen_csv_columns() {
    let s = Setup::new(problem(1.0, DiffusionCoefficient::off(), 1.0), &NoiseSpec::Off, 1e-10).unwrap();
    let mut buf = Vec::new();
    s.eigen.write_csv(&mut buf, &s.grid).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x,phi1,lambda1"));
    assert_eq!(lines.count(), 31);
}
