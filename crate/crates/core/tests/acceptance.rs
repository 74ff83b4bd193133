//! Acceptance suite: one line per criterion, nonzero exit on any failure.

use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use feec::derham::assemble_complex;
use feec::experiments::{run, ExperimentConfig, ExperimentId, Report};
use feec::fem::{BoundaryCondition, ReferenceElement};
use feec::linalg::m_norm;
use feec::mesh::{generate, MeshKind};
use feec::polyform::{homogeneous_basis, homotopy_residual, span_rank, Family, PolyForm, PolySpaceSpec};
use feec::{FeecError, Rational};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

fn experiment(id: ExperimentId) -> Result<Report, String> {
    run(&ExperimentConfig::new(id)).map_err(|e| e.to_string())
}

fn verdict(report: &Report, names: &[&str]) -> Outcome {
    let checks: Vec<_> = report.checks.iter().filter(|c| names.is_empty() || names.iter().any(|n| c.name.starts_with(n))).collect();
    let detail = checks.iter().map(|c| format!("{}={:.4e}", c.name, c.measured)).collect::<Vec<_>>().join("; ");
    if !checks.is_empty() && checks.iter().all(|c| c.pass) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_homogeneous(rng: &mut ChaCha8Rng, n: usize, r: u32, k: usize) -> PolyForm {
    let basis = homogeneous_basis(n, r, k);
    let mut f = PolyForm::zero(n, k);
    for b in &basis {
        if rng.random_bool(0.6) {
            let num = rng.random_range(-9i64..=9);
            let den = rng.random_range(1i64..=5);
            f = f.add(&b.scale(&Rational::new(num.into(), den.into())));
        }
    }
    f
}

fn homotopy_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut count = 0;
    for n in 1..=3 {
        for k in 0..=n {
            for r in 0..=4 {
                for _ in 0..200 {
                    let f = random_homogeneous(&mut rng, n, r, k);
                    let res = homotopy_residual(&f).map_err(|e| e.to_string())?;
                    if !res.is_zero() {
                        return Err(format!("nonzero residual for n={n} k={k} r={r}"));
                    }
                    count += 1;
                }
            }
        }
    }
    Ok(format!("{count} forms, zero residual"))
}

fn dimensions_and_unisolvence() -> Outcome {
    let mut checked = 0;
    let mut unsupported = 0;
    for n in 1..=3usize {
        for k in 0..=n {
            for r in 0..=3u32 {
                for family in [Family::P, Family::PMinus] {
                    if family == Family::PMinus && r == 0 {
                        continue;
                    }
                    let spec = PolySpaceSpec::new(family, r, k, n);
                    let formula = match family {
                        Family::P => binomial(r as u64 + n as u64, n as u64) * binomial(n as u64, k as u64),
                        Family::PMinus => {
                            binomial(r as u64 + n as u64, r as u64 + k as u64) * binomial(r as u64 + k as u64 - 1, k as u64)
                        }
                    } as usize;
                    let basis = spec.basis();
                    let rank = span_rank(&basis, n, spec.max_degree(), k);
                    if spec.dimension() != formula || rank != formula || basis.len() != formula {
                        return Err(format!("{}: formula {formula}, dimension {}, rank {rank}", spec.label(), spec.dimension()));
                    }
                    let element = match ReferenceElement::get(&spec) {
                        Ok(e) => e,
                        Err(FeecError::UnsupportedSpace(_)) => {
                            unsupported += 1;
                            continue;
                        }
                        Err(e) => return Err(e.to_string()),
                    };
                    let dofs = element.dof_matrix(element.shape_basis()).map_err(|e| e.to_string())?;
                    if dofs.rows() != formula || dofs.cols() != formula || dofs.rank() != formula {
                        return Err(format!("{}: DOF matrix {}x{} of rank {}", spec.label(), dofs.rows(), dofs.cols(), dofs.rank()));
                    }
                    checked += 1;
                }
            }
        }
    }
    Ok(format!("{checked} elements unisolvent, {unsupported} spaces without an element (dimension checked only)"))
}

fn hodge_and_poincare() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut worst: f64 = 0.0;
    let domains = [MeshKind::unit_square(4), MeshKind::Annulus { n: 2, r_in: 0.5, r_out: 1.0 }, MeshKind::Cube { n: 1, side: 1.0 }];
    for kind in &domains {
        let m = Arc::new(generate(kind).map_err(|e| e.to_string())?);
        for pattern in feec::polyform::all_patterns(m.dim()) {
            let c = match assemble_complex(&m, m.dim(), 2, &pattern, BoundaryCondition::Natural, None) {
                Ok(c) => c,
                Err(FeecError::InvalidPattern(_)) => continue,
                Err(e) => return Err(e.to_string()),
            };
            for k in 0..=m.dim() {
                for _ in 0..100 {
                    let v: Vec<f64> = (0..c.dim(k)).map(|_| rng.random_range(-1.0..1.0)).collect();
                    let p = c.hodge_decompose(k, &v).map_err(|e| e.to_string())?;
                    let mk = c.mass(k);
                    let total = m_norm(mk, &v).powi(2);
                    let parts = m_norm(mk, &p.exact).powi(2) + m_norm(mk, &p.harmonic).powi(2) + m_norm(mk, &p.coexact).powi(2);
                    let sum: Vec<f64> = (0..v.len()).map(|i| p.exact[i] + p.harmonic[i] + p.coexact[i] - v[i]).collect();
                    worst = worst.max((total - parts).abs() / total).max(m_norm(mk, &sum) / total.sqrt());
                }
            }
        }
    }
    if worst > 1e-10 {
        return Err(format!("Pythagoras defect {worst:.3e}"));
    }
    let mut detail = format!("Pythagoras defect {worst:.2e}");
    let spread = |list: &[f64]| {
        let max = list.iter().copied().fold(f64::MIN, f64::max);
        let min = list.iter().copied().fold(f64::MAX, f64::min);
        (max - min) / min
    };
    let mut ok = true;
    for (pattern, r) in [(Family::PMinus, 1u32), (Family::P, 2)] {
        let mut v_norm: Vec<Vec<f64>> = vec![Vec::new(); 2];
        let mut w_norm: Vec<Vec<f64>> = vec![Vec::new(); 2];
        for n in [2, 4, 8, 16] {
            let m = Arc::new(generate(&MeshKind::unit_square(n)).map_err(|e| e.to_string())?);
            let c = assemble_complex(&m, 2, r, &[pattern], BoundaryCondition::Natural, None).map_err(|e| e.to_string())?;
            for k in 0..2 {
                v_norm[k].push(c.poincare_constant_v(k).map_err(|e| e.to_string())?);
                w_norm[k].push(c.poincare_constant_w(k).map_err(|e| e.to_string())?);
            }
        }
        for k in 0..2 {
            let variation = spread(&v_norm[k]);
            ok &= variation < 0.1;
            detail.push_str(&format!(
                "; c_P(k={k}, r={r}) variation {variation:.2e} (L2-norm constant {:.2e})",
                spread(&w_norm[k])
            ));
        }
    }
    if !ok {
        return Err(detail);
    }
    Ok(detail)
}

fn main() -> ExitCode {
    let eigen = std::cell::OnceCell::new();
    let rates_eigen = || eigen.get_or_init(|| experiment(ExperimentId::RatesEigen)).clone();
    let criteria: Vec<(&str, u64, Box<dyn FnMut() -> Outcome + '_>)> = vec![
        ("1 homotopy identity (exact)", 60, Box::new(homotopy_identity)),
        ("2 dimensions and unisolvence", 120, Box::new(dimensions_and_unisolvence)),
        ("3 cohomology oracle", 300, Box::new(|| verdict(&experiment(ExperimentId::BettiSuite)?, &[]))),
        ("4 mixed Poisson 2D", 180, Box::new(|| verdict(&experiment(ExperimentId::Fig3MixedPoisson)?, &[]))),
        ("5 optimal rates k=n=2", 300, Box::new(|| verdict(&experiment(ExperimentId::RatesHodge)?, &["k=2"]))),
        (
            "6 Maxwell eigenvalues",
            300,
            Box::new(|| {
                let a = verdict(&experiment(ExperimentId::Fig6MaxwellUnstructured)?, &[]);
                let b = verdict(&experiment(ExperimentId::Fig7MaxwellCrisscross)?, &[]);
                match (a, b) {
                    (Ok(a), Ok(b)) => Ok(format!("{a}; {b}")),
                    (a, b) => Err(format!("{} | {}", a.unwrap_or_else(|e| e), b.unwrap_or_else(|e| e))),
                }
            }),
        ),
        ("7 eigenvalue rate doubling", 120, Box::new(|| verdict(&rates_eigen()?, &["scalar"]))),
        ("8 Whitney eigenvalue rate", 180, Box::new(|| verdict(&rates_eigen()?, &["Whitney"]))),
        ("9 annulus harmonic field", 180, Box::new(|| verdict(&experiment(ExperimentId::Fig5Annulus)?, &[]))),
        ("10 L-shape inconsistency", 180, Box::new(|| verdict(&experiment(ExperimentId::Fig4LShape)?, &[]))),
        ("11 elasticity", 300, Box::new(|| verdict(&experiment(ExperimentId::ElasticityAw)?, &[]))),
        ("12 Hodge decomposition and Poincare", 120, Box::new(hodge_and_poincare)),
    ];
    let mut failures = 0;
    for (name, limit, mut f) in criteria {
        let start = Instant::now();
        let outcome = f();
        let elapsed = start.elapsed();
        let in_time = elapsed <= Duration::from_secs(limit);
        let (pass, detail) = match outcome {
            Ok(d) => (in_time, d),
            Err(d) => (false, d),
        };
        failures += !pass as usize;
        println!(
            "{} criterion {name} [{:.1}s/{limit}s] {detail}",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failures} criteria failed");
        ExitCode::FAILURE
    }
}
