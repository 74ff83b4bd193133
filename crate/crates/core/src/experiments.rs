//! Numerical studies behind the `feec` command line tool. Every study
//! returns a [`Report`] with CSV tables, two-column plot series and a list
//! of checks against fixed thresholds.

use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::derham::{assemble_complex, simplicial_betti, DiscreteComplex};
use crate::elasticity::{
    check_unisolvence, displacement_error, div_projection_defect, elasticity_infsup, manufactured_fields,
    solve_elasticity, stress_error, Compliance, StressSpace,
};
use crate::error::{FeecError, Result};
use crate::fem::{BoundaryCondition, ElementType, FESpace};
use crate::hodge::{
    fit_rate, l2_distance, nodal_curl_curl_eigenvalues, nodal_vector_laplacian, solve_b_star, solve_eigen, solve_source,
    source_errors, ManufacturedSolution, MixedPair, ModeKind, NodalBoundary, NodalVectorSpace, RateRow, RateTable,
};
use crate::linalg::{dot, m_norm};
use crate::mesh::{generate, MeshKind, SimplicialComplex};
use crate::polyform::{all_patterns, parse_pattern, Family, PolySpaceSpec};
use crate::Rational;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ExperimentId {
    #[serde(rename = "fig1-1d-primal")]
    Fig1Primal,
    #[serde(rename = "fig2-1d-mixed-stability")]
    Fig2MixedStability,
    #[serde(rename = "fig3-2d-mixed-poisson")]
    Fig3MixedPoisson,
    #[serde(rename = "fig4-lshape-vector-laplacian")]
    Fig4LShape,
    #[serde(rename = "fig5-annulus")]
    Fig5Annulus,
    #[serde(rename = "fig6-maxwell-eig-unstructured")]
    Fig6MaxwellUnstructured,
    #[serde(rename = "fig7-maxwell-eig-crisscross")]
    Fig7MaxwellCrisscross,
    #[serde(rename = "rates-hodge")]
    RatesHodge,
    #[serde(rename = "rates-eigen")]
    RatesEigen,
    #[serde(rename = "betti-suite")]
    BettiSuite,
    #[serde(rename = "elasticity-aw")]
    ElasticityAw,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 11] = [
        Self::Fig1Primal,
        Self::Fig2MixedStability,
        Self::Fig3MixedPoisson,
        Self::Fig4LShape,
        Self::Fig5Annulus,
        Self::Fig6MaxwellUnstructured,
        Self::Fig7MaxwellCrisscross,
        Self::RatesHodge,
        Self::RatesEigen,
        Self::BettiSuite,
        Self::ElasticityAw,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Fig1Primal => "fig1-1d-primal",
            Self::Fig2MixedStability => "fig2-1d-mixed-stability",
            Self::Fig3MixedPoisson => "fig3-2d-mixed-poisson",
            Self::Fig4LShape => "fig4-lshape-vector-laplacian",
            Self::Fig5Annulus => "fig5-annulus",
            Self::Fig6MaxwellUnstructured => "fig6-maxwell-eig-unstructured",
            Self::Fig7MaxwellCrisscross => "fig7-maxwell-eig-crisscross",
            Self::RatesHodge => "rates-hodge",
            Self::RatesEigen => "rates-eigen",
            Self::BettiSuite => "betti-suite",
            Self::ElasticityAw => "elasticity-aw",
        }
    }

    /// `(base mesh parameter, refinement levels)` used when the
    /// configuration leaves them unset.
    pub fn defaults(&self) -> (usize, usize) {
        match self {
            Self::Fig1Primal => (14, 1),
            Self::Fig2MixedStability => (14, 4),
            Self::Fig3MixedPoisson => (8, 4),
            Self::Fig4LShape => (2, 4),
            Self::Fig5Annulus => (1, 3),
            Self::Fig6MaxwellUnstructured => (12, 2),
            Self::Fig7MaxwellCrisscross => (4, 2),
            Self::RatesHodge => (2, 4),
            Self::RatesEigen => (3, 4),
            Self::BettiSuite => (1, 2),
            Self::ElasticityAw => (2, 3),
        }
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentId {
    type Err = FeecError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .find(|id| id.as_str() == s)
            .copied()
            .ok_or_else(|| FeecError::InvalidArgument(format!("unknown experiment id {s:?}")))
    }
}

/// Parameters of a run. Unset fields take the per-experiment defaults.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub id: ExperimentId,
    /// Number of refinement levels.
    #[serde(default)]
    pub levels: Option<usize>,
    /// Coarsest mesh parameter (subdivisions per unit direction or layers).
    #[serde(default)]
    pub base: Option<usize>,
    /// Polynomial degree.
    #[serde(default)]
    pub r: Option<u32>,
    /// Family choices such as `"1"` or `"01"`; `1` selects `P^-`.
    #[serde(default)]
    pub pattern: Option<String>,
    #[serde(default)]
    pub bc: Option<BoundaryCondition>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

fn default_seed() -> u64 {
    1
}

impl ExperimentConfig {
    pub fn new(id: ExperimentId) -> Self {
        Self {
            id,
            levels: None,
            base: None,
            r: None,
            pattern: None,
            bc: None,
            seed: default_seed(),
            out: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn levels(&self) -> usize {
        self.levels.unwrap_or(self.id.defaults().1)
    }

    pub fn base(&self) -> usize {
        self.base.unwrap_or(self.id.defaults().0)
    }

    fn check(&self, min_levels: usize) -> Result<()> {
        if self.levels() < min_levels {
            return Err(FeecError::InvalidArgument(format!(
                "{} needs at least {min_levels} refinement levels",
                self.id
            )));
        }
        if self.base() == 0 {
            return Err(FeecError::InvalidArgument("base mesh parameter must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    AtLeast,
    AtMost,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub threshold: f64,
    pub relation: Relation,
    pub pass: bool,
}

impl Check {
    pub fn at_least(name: &str, measured: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            threshold,
            relation: Relation::AtLeast,
            pass: measured >= threshold,
        }
    }

    pub fn at_most(name: &str, measured: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            threshold,
            relation: Relation::AtMost,
            pass: measured <= threshold,
        }
    }
}

/// Two-column data for plotting.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Series {
    pub name: String,
    pub labels: [String; 2],
    pub points: Vec<(f64, f64)>,
}

impl Series {
    fn new(name: &str, x: &str, y: &str, points: Vec<(f64, f64)>) -> Self {
        Self {
            name: name.into(),
            labels: [x.into(), y.into()],
            points,
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("# {} {}\n", self.labels[0], self.labels[1]);
        for (x, y) in &self.points {
            s.push_str(&format!("{x:.10e} {y:.10e}\n"));
        }
        s
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Report {
    pub id: ExperimentId,
    /// `(name, csv text)`.
    pub tables: Vec<(String, String)>,
    pub series: Vec<Series>,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
}

#[derive(Serialize)]
struct Verdict<'a> {
    id: &'a str,
    pass: bool,
    checks: &'a [Check],
    notes: &'a [String],
}

impl Report {
    fn new(id: ExperimentId) -> Self {
        Self {
            id,
            tables: Vec::new(),
            series: Vec::new(),
            checks: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.pass)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn verdict_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&Verdict {
            id: self.id.as_str(),
            pass: self.passed(),
            checks: &self.checks,
            notes: &self.notes,
        })?)
    }

    /// Writes `<table>.csv`, `<series>.dat` and `verdict.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, csv) in &self.tables {
            std::fs::write(dir.join(format!("{name}.csv")), csv)?;
        }
        for s in &self.series {
            std::fs::write(dir.join(format!("{}.dat", s.name)), s.to_text())?;
        }
        std::fs::write(dir.join("verdict.json"), self.verdict_json()?)?;
        Ok(())
    }

    pub fn summary(&self) -> String {
        let mut s = format!("{}: {}\n", self.id, if self.passed() { "PASS" } else { "FAIL" });
        for c in &self.checks {
            let rel = match c.relation {
                Relation::AtLeast => ">=",
                Relation::AtMost => "<=",
            };
            s.push_str(&format!(
                "  [{}] {} = {:.6e} ({rel} {:.3e})\n",
                if c.pass { "ok" } else { "FAIL" },
                c.name,
                c.measured,
                c.threshold
            ));
        }
        s
    }
}

pub fn run(config: &ExperimentConfig) -> Result<Report> {
    let report = match config.id {
        ExperimentId::Fig1Primal => fig1_primal(config),
        ExperimentId::Fig2MixedStability => fig2_mixed_stability(config),
        ExperimentId::Fig3MixedPoisson => fig3_mixed_poisson(config),
        ExperimentId::Fig4LShape => fig4_lshape(config),
        ExperimentId::Fig5Annulus => fig5_annulus(config),
        ExperimentId::Fig6MaxwellUnstructured => maxwell(config, false),
        ExperimentId::Fig7MaxwellCrisscross => maxwell(config, true),
        ExperimentId::RatesHodge => rates_hodge(config),
        ExperimentId::RatesEigen => rates_eigen(config),
        ExperimentId::BettiSuite => betti_suite(config),
        ExperimentId::ElasticityAw => elasticity_aw(config),
    }?;
    if let Some(dir) = &config.out {
        report.write(dir)?;
    }
    Ok(report)
}

fn mesh(kind: MeshKind) -> Result<Arc<SimplicialComplex>> {
    Ok(Arc::new(generate(&kind)?))
}

fn form(r: u32, k: usize, n: usize) -> ElementType {
    ElementType::Form(PolySpaceSpec::full(r, k, n))
}

fn pattern_or(config: &ExperimentConfig, n: usize, default: Vec<Family>) -> Result<Vec<Family>> {
    match &config.pattern {
        Some(p) => parse_pattern(p),
        None => Ok(default),
    }
    .and_then(|p| {
        if p.len() + 1 == n {
            Ok(p)
        } else {
            Err(FeecError::InvalidPattern(format!("{n}-dimensional complexes take {} family choices", n - 1)))
        }
    })
}

fn sample_1d(space: &FESpace, coeffs: &[f64], points: &[f64]) -> Vec<(f64, f64)> {
    let mesh = space.mesh();
    points
        .iter()
        .filter_map(|&x| {
            (0..mesh.num_cells())
                .find(|&c| mesh.contains_point(c, &[x], 1e-12))
                .map(|c| (x, space.evaluate(coeffs, c, &[x]).0[0]))
        })
        .collect()
}

fn midpoints(mesh: &SimplicialComplex) -> Vec<f64> {
    (0..mesh.num_cells())
        .map(|c| {
            let (v0, j, _) = mesh.cell_map(c);
            v0[0] + 0.5 * j[0]
        })
        .collect()
}

fn rate_check(name: &str, rate: f64, target: f64, tol: f64) -> Check {
    Check::at_most(&format!("{name} |rate - {target}|"), (rate - target).abs(), tol)
}

fn min_ratio(values: &[f64]) -> f64 {
    values.windows(2).map(|w| w[0] / w[1]).fold(f64::INFINITY, f64::min)
}

// ---------------------------------------------------------------- 1D

fn exact_1d() -> (impl Fn(&[f64]) -> Vec<f64> + Sync, impl Fn(&[f64]) -> Vec<f64> + Sync, impl Fn(&[f64]) -> Vec<f64> + Sync) {
    let u = |x: &[f64]| vec![(PI * x[0] / 2.0).cos()];
    let sigma = |x: &[f64]| vec![PI / 2.0 * (PI * x[0] / 2.0).sin()];
    let f = |x: &[f64]| vec![(PI / 2.0).powi(2) * (PI * x[0] / 2.0).cos()];
    (u, sigma, f)
}

fn fig1_primal(config: &ExperimentConfig) -> Result<Report> {
    config.check(1)?;
    let mut report = Report::new(config.id);
    let (u, _, f) = exact_1d();
    let m = mesh(MeshKind::interval(config.base()))?;
    let r = config.r.unwrap_or(1);
    let space = FESpace::new(m.clone(), form(r, 0, 1), BoundaryCondition::Essential)?;
    let k = space.stiffness_matrix();
    let b = space.load_vector(&f, 2 * r + 6);
    let uh = crate::linalg::CholeskySolver::new(&k)?.solve(&b)?;
    let vertices: Vec<f64> = (0..m.num_vertices()).map(|v| m.vertex(v)[0]).collect();
    let nodal = sample_1d(&space, &uh, &vertices);
    let nodal_error = nodal.iter().map(|(x, v)| (v - u(&[*x])[0]).abs()).fold(0.0, f64::max);
    let l2 = space.l2_error(&uh, &u);
    let fine: Vec<f64> = (0..=400).map(|i| -1.0 + 2.0 * i as f64 / 400.0).collect();
    report.series.push(Series::new("uh", "x", "u_h", sample_1d(&space, &uh, &fine)));
    report.series.push(Series::new("u", "x", "u", fine.iter().map(|&x| (x, u(&[x])[0])).collect()));
    report.tables.push((
        "errors".into(),
        format!("cells,dofs,l2_error,max_nodal_error\n{},{},{l2:.6e},{nodal_error:.6e}\n", m.num_cells(), space.dim()),
    ));
    report.checks.push(Check::at_most("max nodal error", nodal_error, 1e-8));
    report.checks.push(Check::at_most("L2 error", l2, 0.05));
    Ok(report)
}

fn fig2_mixed_stability(config: &ExperimentConfig) -> Result<Report> {
    config.check(2)?;
    let mut report = Report::new(config.id);
    let (u, sigma, f) = exact_1d();
    let m = mesh(MeshKind::interval(config.base()))?;
    let stable = MixedPair::new(&m, form(1, 0, 1), form(0, 1, 1))?;
    let unstable = MixedPair::new(&m, form(2, 0, 1), form(0, 1, 1))?;
    let mids = midpoints(&m);
    let mut amplitude = Vec::new();
    for (name, pair) in [("stable", &stable), ("unstable", &unstable)] {
        let (s, uh) = pair.solve(&f)?;
        let vals = sample_1d(&pair.u, &uh, &mids);
        amplitude.push(vals.iter().map(|(x, v)| (v - u(&[*x])[0]).abs()).fold(0.0, f64::max));
        report.series.push(Series::new(&format!("u_{name}"), "x", "u_h", vals));
        let fine: Vec<f64> = (0..=400).map(|i| -1.0 + 2.0 * i as f64 / 400.0).collect();
        report.series.push(Series::new(&format!("sigma_{name}"), "x", "sigma_h", sample_1d(&pair.sigma, &s, &fine)));
        report.notes.push(format!("{name}: L2 error of sigma {:.4e}", pair.sigma.l2_error(&s, &sigma)));
    }
    report.series.push(Series::new("u_exact", "x", "u", mids.iter().map(|&x| (x, u(&[x])[0])).collect()));

    let singular = MixedPair::new(&m, form(1, 0, 1), ElementType::ContinuousComponents { r: 1, k: 1, n: 1 })?;
    let singular_detected = matches!(singular.solve(&f), Err(FeecError::Singular { .. }));

    let mut csv = String::from("cells,infsup_p1_p0,infsup_p2_p0\n");
    let mut unstable_gamma = Vec::new();
    let mut stable_gamma = Vec::new();
    for l in 0..config.levels() {
        let n = 4 << l;
        let ml = mesh(MeshKind::interval(n))?;
        let g1 = MixedPair::new(&ml, form(1, 0, 1), form(0, 1, 1))?.infsup()?;
        let g2 = MixedPair::new(&ml, form(2, 0, 1), form(0, 1, 1))?.infsup()?;
        csv.push_str(&format!("{n},{g1:.6e},{g2:.6e}\n"));
        stable_gamma.push(g1);
        unstable_gamma.push(g2);
    }
    report.tables.push(("infsup".into(), csv));
    report.tables.push((
        "max_error".into(),
        format!("variant,max_error_u\nstable,{:.6e}\nunstable,{:.6e}\n", amplitude[0], amplitude[1]),
    ));
    report.checks.push(Check::at_most("stable max error of u", amplitude[0], 0.2));
    report.checks.push(Check::at_least("unstable/stable error amplitude", amplitude[1] / amplitude[0], 5.0));
    report.checks.push(Check::at_least("P1/P1 singular system detected", singular_detected as u8 as f64, 1.0));
    report.checks.push(Check::at_least(
        "stable inf-sup finest/coarsest",
        stable_gamma.last().unwrap() / stable_gamma[0],
        0.8,
    ));
    report.checks.push(Check::at_most(
        "unstable inf-sup finest/coarsest",
        unstable_gamma.last().unwrap() / unstable_gamma[0],
        0.5,
    ));
    Ok(report)
}

// ---------------------------------------------------------------- 2D mixed Poisson

fn fig3_mixed_poisson(config: &ExperimentConfig) -> Result<Report> {
    config.check(3)?;
    let mut report = Report::new(config.id);
    let u = |x: &[f64]| vec![x[0] * (1.0 - x[0]) * x[1] * (1.0 - x[1])];
    let sigma = |x: &[f64]| vec![x[0] * (1.0 - x[0]) * (1.0 - 2.0 * x[1]), -(1.0 - 2.0 * x[0]) * x[1] * (1.0 - x[1])];
    let f = |x: &[f64]| vec![2.0 * x[0] * (1.0 - x[0]) + 2.0 * x[1] * (1.0 - x[1])];
    let mut rows = Vec::new();
    let mut gamma = Vec::new();
    let mut failed = false;
    let mut gcsv = String::from("n,h,infsup_continuous_p1_p0,solve\n");
    for l in 0..config.levels() {
        let n = config.base() << l;
        let m = mesh(MeshKind::unit_square(n))?;
        let rt = MixedPair::new(&m, ElementType::Form(PolySpaceSpec::trimmed(1, 1, 2)), form(0, 2, 2))?;
        let (s, uh) = rt.solve(&f)?;
        rows.push(RateRow {
            level: l,
            h: m.h(),
            dofs: rt.sigma.dim() + rt.u.dim(),
            errors: vec![rt.sigma.l2_error(&s, &sigma), rt.u.l2_error(&uh, &u)],
        });
        let bad = MixedPair::new(&m, ElementType::ContinuousComponents { r: 1, k: 1, n: 2 }, form(0, 2, 2))?;
        let outcome = match bad.solve(&f) {
            Ok(_) => "ok".to_string(),
            Err(e) => {
                failed = true;
                e.to_string()
            }
        };
        let g = bad.infsup()?;
        gcsv.push_str(&format!("{n},{:.6e},{g:.6e},{outcome}\n", m.h()));
        gamma.push(g);
    }
    let table = RateTable::new(&["sigma", "u"], rows)?;
    report.series.push(Series::new(
        "errors_sigma",
        "h",
        "error",
        table.levels.iter().map(|r| (r.h, r.errors[0])).collect(),
    ));
    report.series.push(Series::new("errors_u", "h", "error", table.levels.iter().map(|r| (r.h, r.errors[1])).collect()));
    report.tables.push(("rates".into(), table.to_csv()));
    report.tables.push(("infsup".into(), gcsv));
    report.checks.push(Check::at_least("rate sigma", table.rates[0], 0.9));
    report.checks.push(Check::at_least("rate u", table.rates[1], 0.9));
    let decay = min_ratio(&gamma);
    report.checks.push(Check::at_least(
        "continuous P1/P0 inf-sup decay per refinement (infinite on solver failure)",
        if failed { f64::INFINITY } else { decay },
        2.0,
    ));
    Ok(report)
}

// ---------------------------------------------------------------- vector Laplacian

fn field_sampler<'a>(space: &'a FESpace, coeffs: &'a [f64]) -> impl Fn(usize, &[f64]) -> Vec<f64> + Sync + 'a {
    move |c, x| space.evaluate(coeffs, c, x).0
}

fn zero_field(_: usize, _: &[f64]) -> Vec<f64> {
    vec![0.0, 0.0]
}

fn fig4_lshape(config: &ExperimentConfig) -> Result<Report> {
    config.check(3)?;
    let mut report = Report::new(config.id);
    let f = |_: &[f64]| vec![-1.0, 0.0];
    let mut meshes = vec![mesh(MeshKind::LShape { n: config.base() })?];
    for _ in 1..config.levels() {
        let next = meshes.last().unwrap().refine_uniform()?;
        meshes.push(Arc::new(next));
    }
    let mut mixed = Vec::new();
    let mut nodal = Vec::new();
    for m in &meshes {
        let c = assemble_complex(m, 2, 1, &[Family::PMinus], BoundaryCondition::Natural, None)?;
        let s = solve_source(&c, 1, &f)?;
        mixed.push((c, s.u));
        let nv = NodalVectorSpace::new(m, NodalBoundary::NormalZero)?;
        let un = nodal_vector_laplacian(&nv, &f)?;
        nodal.push((nv, un));
    }
    let mut csv = String::from("level,h,mixed_norm,mixed_cauchy,nodal_cauchy,nodal_vs_mixed\n");
    let mut cauchy = Vec::new();
    let mut discrepancy = Vec::new();
    for (l, m) in meshes.iter().enumerate() {
        let (c, u) = &mixed[l];
        let a = field_sampler(c.space(1), u);
        let (nv, un) = &nodal[l];
        let b = |cell: usize, x: &[f64]| nv.evaluate(un, cell, x);
        let norm = l2_distance(m, &a, &zero_field, 4);
        let d = l2_distance(m, &a, &b, 4) / norm;
        discrepancy.push(d);
        let (mc, nc) = if l > 0 {
            let parent = m.parent().ok_or_else(|| FeecError::InvalidArgument("refined mesh without parent map".into()))?;
            let (pc, pu) = &mixed[l - 1];
            let coarse = |cell: usize, x: &[f64]| pc.space(1).evaluate(pu, parent[cell], x).0;
            let (pn, pun) = &nodal[l - 1];
            let coarse_nodal = |cell: usize, x: &[f64]| pn.evaluate(pun, parent[cell], x);
            let mc = l2_distance(m, &a, &coarse, 4) / norm;
            let nc = l2_distance(m, &b, &coarse_nodal, 4) / l2_distance(m, &b, &zero_field, 4);
            cauchy.push(mc);
            (mc, nc)
        } else {
            (f64::NAN, f64::NAN)
        };
        csv.push_str(&format!("{l},{:.6e},{norm:.6e},{mc:.6e},{nc:.6e},{d:.6e}\n", m.h()));
    }
    report.tables.push(("convergence".into(), csv));
    let finest = meshes.last().unwrap();
    let (c, u) = mixed.last().unwrap();
    let (nv, un) = nodal.last().unwrap();
    let line: Vec<f64> = (0..=200).map(|i| -1.0 + 2.0 * i as f64 / 200.0).collect();
    let along = |g: &dyn Fn(usize, &[f64]) -> Vec<f64>| -> Vec<(f64, f64)> {
        line.iter()
            .filter_map(|&t| {
                let x = [t, t];
                (0..finest.num_cells()).find(|&cell| finest.contains_point(cell, &x, 1e-12)).map(|cell| (t, g(cell, &x)[0]))
            })
            .collect()
    };
    report.series.push(Series::new("mixed_u1_diagonal", "t", "u1(t,t)", along(&|cell, x| c.space(1).evaluate(u, cell, x).0)));
    report.series.push(Series::new("nodal_u1_diagonal", "t", "u1(t,t)", along(&|cell, x| nv.evaluate(un, cell, x))));
    report.checks.push(Check::at_most("mixed Cauchy differences ratio (successive)", 1.0 / min_ratio(&cauchy), 1.0 - 1e-9));
    report.checks.push(Check::at_least(
        "nodal vs mixed relative difference (minimum over levels)",
        discrepancy.iter().copied().fold(f64::INFINITY, f64::min),
        0.1,
    ));
    Ok(report)
}

fn fig5_annulus(config: &ExperimentConfig) -> Result<Report> {
    config.check(1)?;
    let mut report = Report::new(config.id);
    let f = |x: &[f64]| vec![0.0, x[0]];
    let mut csv = String::from("level,h,harmonic_dim,mixed_orthogonality,bstar_discarded,nodal_vs_mixed\n");
    let mut dims_ok = true;
    let mut worst_orth: f64 = 0.0;
    let mut min_diff = f64::INFINITY;
    for l in 0..config.levels() {
        let n = config.base() << l;
        let m = mesh(MeshKind::Annulus { n, r_in: 0.5, r_out: 1.0 })?;
        let c = assemble_complex(&m, 2, 1, &[Family::PMinus], BoundaryCondition::Natural, None)?;
        let h = c.harmonic_forms(1)?;
        dims_ok &= h.len() == 1;
        let s = solve_source(&c, 1, &f)?;
        let mu = c.mass(1).matvec(&s.u);
        let orth = h.iter().map(|q| dot(q, &mu).abs()).fold(0.0, f64::max) / m_norm(c.mass(1), &s.u);
        worst_orth = worst_orth.max(orth);
        let bstar = solve_b_star(&c, 1, &f)?;
        let nv = NodalVectorSpace::new(&m, NodalBoundary::NormalZero)?;
        let un = nodal_vector_laplacian(&nv, &f)?;
        let a = field_sampler(c.space(1), &s.u);
        let b = |cell: usize, x: &[f64]| nv.evaluate(&un, cell, x);
        let diff = l2_distance(&m, &a, &b, 4) / l2_distance(&m, &a, &zero_field, 4);
        min_diff = min_diff.min(diff);
        csv.push_str(&format!(
            "{l},{:.6e},{},{orth:.3e},{:.6e},{diff:.6e}\n",
            m.h(),
            h.len(),
            bstar.discarded_norm
        ));
        if l + 1 == config.levels() {
            let ring: Vec<(f64, f64)> = (0..=180)
                .filter_map(|i| {
                    let t = 2.0 * PI * i as f64 / 180.0;
                    let x = [0.75 * t.cos(), 0.75 * t.sin()];
                    (0..m.num_cells()).find(|&cell| m.contains_point(cell, &x, 1e-12)).map(|cell| (cell, t, x))
                })
                .map(|(cell, t, x)| (t, (a(cell, &x), b(cell, &x))))
                .map(|(t, (va, _))| (t, -va[0] * t.sin() + va[1] * t.cos()))
                .collect();
            report.series.push(Series::new("mixed_tangential_r075", "theta", "u.t", ring));
            let ring_nodal: Vec<(f64, f64)> = (0..=180)
                .filter_map(|i| {
                    let t = 2.0 * PI * i as f64 / 180.0;
                    let x = [0.75 * t.cos(), 0.75 * t.sin()];
                    (0..m.num_cells())
                        .find(|&cell| m.contains_point(cell, &x, 1e-12))
                        .map(|cell| {
                            let v = b(cell, &x);
                            (t, -v[0] * t.sin() + v[1] * t.cos())
                        })
                })
                .collect();
            report.series.push(Series::new("nodal_tangential_r075", "theta", "u.t", ring_nodal));
        }
    }
    report.tables.push(("annulus".into(), csv));
    report.checks.push(Check::at_least("harmonic 1-forms of dimension 1 at every level", dims_ok as u8 as f64, 1.0));
    report.checks.push(Check::at_most("mixed solution orthogonality to harmonic forms", worst_orth, 1e-10));
    report.checks.push(Check::at_least("nodal vs mixed relative difference (minimum over levels)", min_diff, 0.5));
    Ok(report)
}

// ---------------------------------------------------------------- eigenvalues

/// First eight eigenvalues of the curl-curl problem on `(0, π)²` with
/// tangential boundary condition.
pub const MAXWELL_EIGENVALUES: [f64; 8] = [1.0, 1.0, 2.0, 4.0, 4.0, 5.0, 5.0, 8.0];

fn max_relative_error(values: &[f64], exact: &[f64]) -> f64 {
    if values.len() < exact.len() {
        return f64::INFINITY;
    }
    values.iter().zip(exact).map(|(a, b)| (a - b).abs() / b).fold(0.0, f64::max)
}

fn maxwell(config: &ExperimentConfig, crisscross: bool) -> Result<Report> {
    config.check(2)?;
    let mut report = Report::new(config.id);
    let pattern = pattern_or(config, 2, vec![Family::PMinus])?;
    let r = config.r.unwrap_or(1);
    let bc = config.bc.unwrap_or(BoundaryCondition::Essential);
    let mut csv = String::from("level,n,h,dofs,method");
    for i in 1..=8 {
        csv.push_str(&format!(",lambda{i}"));
    }
    csv.push_str(",max_rel_error\n");
    let mut edge_errors = Vec::new();
    let mut nodal_eighth = Vec::new();
    for l in 0..config.levels() {
        let n = config.base() << l;
        let kind = if crisscross {
            MeshKind::SquareCrisscross { n, side: PI }
        } else {
            MeshKind::SquareUnstructured { n, side: PI, seed: config.seed }
        };
        let m = mesh(kind)?;
        let c = assemble_complex(&m, 2, r, &pattern, bc, None)?;
        let e = solve_eigen(&c, 1, (c.dim(1) - c.harmonic_forms(1)?.len()).min(40))?;
        let vals: Vec<f64> = e.of_kind(ModeKind::BStar).into_iter().take(8).collect();
        let err = max_relative_error(&vals, &MAXWELL_EIGENVALUES);
        edge_errors.push(err);
        let row = |method: &str, dofs: usize, v: &[f64], err: f64| {
            let vs: Vec<String> = (0..8).map(|i| v.get(i).map(|x| format!("{x:.8}")).unwrap_or_default()).collect();
            format!("{l},{n},{:.6e},{dofs},{method},{},{err:.6e}\n", m.h(), vs.join(","))
        };
        csv.push_str(&row("edge", c.dim(1), &vals, err));
        report.series.push(Series::new(
            &format!("edge_level{l}"),
            "index",
            "lambda",
            vals.iter().enumerate().map(|(i, v)| ((i + 1) as f64, *v)).collect(),
        ));
        if crisscross {
            let nv = NodalVectorSpace::new(&m, NodalBoundary::TangentialZero)?;
            let nodal = nodal_curl_curl_eigenvalues(&nv, 8)?;
            nodal_eighth.push(nodal.get(7).copied().unwrap_or(f64::NAN));
            csv.push_str(&row("nodal", nv.dim(), &nodal, max_relative_error(&nodal, &MAXWELL_EIGENVALUES)));
            report.series.push(Series::new(
                &format!("nodal_level{l}"),
                "index",
                "lambda",
                nodal.iter().enumerate().map(|(i, v)| ((i + 1) as f64, *v)).collect(),
            ));
        }
    }
    report.tables.push(("eigenvalues".into(), csv));
    report.checks.push(Check::at_most("edge elements max relative error (finest)", *edge_errors.last().unwrap(), 0.05));
    report.checks.push(Check::at_most(
        "edge elements error ratio finer/coarser (max)",
        edge_errors.windows(2).map(|w| w[1] / w[0]).fold(0.0, f64::max),
        1.0 - 1e-9,
    ));
    if crisscross {
        let last = *nodal_eighth.last().unwrap();
        report.checks.push(Check::at_least("nodal eighth eigenvalue relative deviation from 8 (finest)", (last - 8.0).abs() / 8.0, 0.2));
    }
    Ok(report)
}

// ---------------------------------------------------------------- rates

fn rates_hodge(config: &ExperimentConfig) -> Result<Report> {
    config.check(3)?;
    let mut report = Report::new(config.id);
    let r = config.r.unwrap_or(1);
    if r < 1 {
        return Err(FeecError::InvalidArgument("rates-hodge needs r >= 1".into()));
    }
    let rf = r as f64;

    // k = n = 2: u = sin πx sin πy, σ = (∂y u, −∂x u), dσ = −Δu = f
    let u2 = |x: &[f64]| vec![(PI * x[0]).sin() * (PI * x[1]).sin()];
    let s2 = |x: &[f64]| vec![PI * (PI * x[0]).sin() * (PI * x[1]).cos(), -PI * (PI * x[0]).cos() * (PI * x[1]).sin()];
    let f2 = |x: &[f64]| vec![2.0 * PI * PI * (PI * x[0]).sin() * (PI * x[1]).sin()];
    let mut rows = Vec::new();
    for l in 0..config.levels() {
        let m = mesh(MeshKind::unit_square(config.base() << l))?;
        let pair = MixedPair::new(&m, form(r + 1, 1, 2), form(r, 2, 2))?;
        let (s, u) = pair.solve(&f2)?;
        rows.push(RateRow {
            level: l,
            h: m.h(),
            dofs: pair.sigma.dim() + pair.u.dim(),
            errors: vec![pair.sigma.l2_error(&s, &s2), pair.sigma.d_l2_error(&s, &f2), pair.u.l2_error(&u, &u2)],
        });
    }
    let top = RateTable::new(&["sigma", "d_sigma", "u"], rows)?;
    report.tables.push(("rates_k2".into(), top.to_csv()));
    for (q, name) in top.quantities.iter().enumerate() {
        report.series.push(Series::new(&format!("k2_{name}"), "h", "error", top.levels.iter().map(|r| (r.h, r.errors[q])).collect()));
    }
    report.checks.push(rate_check("k=2 sigma", top.rates[0], rf + 2.0, 0.2));
    report.checks.push(rate_check("k=2 d_sigma", top.rates[1], rf + 1.0, 0.2));
    report.checks.push(rate_check("k=2 u", top.rates[2], rf + 1.0, 0.2));
    report.notes.push("du is identically zero for k = n; its rate is reported by the k = 1 run".into());

    // k = 1: u = ∇ψ + rot φ, ψ = cos πx cos πy, φ = sin πx sin πy
    let (sn, cs) = (|t: f64| (PI * t).sin(), |t: f64| (PI * t).cos());
    let u1 = move |x: &[f64]| {
        vec![
            -PI * sn(x[0]) * cs(x[1]) + PI * sn(x[0]) * cs(x[1]),
            -PI * cs(x[0]) * sn(x[1]) - PI * cs(x[0]) * sn(x[1]),
        ]
    };
    let f1 = move |x: &[f64]| u1(x).into_iter().map(|v| 2.0 * PI * PI * v).collect::<Vec<_>>();
    let s1 = move |x: &[f64]| vec![2.0 * PI * PI * cs(x[0]) * cs(x[1])];
    let ds1 = move |x: &[f64]| vec![-2.0 * PI.powi(3) * sn(x[0]) * cs(x[1]), -2.0 * PI.powi(3) * cs(x[0]) * sn(x[1])];
    let du1 = move |x: &[f64]| vec![2.0 * PI * PI * sn(x[0]) * sn(x[1])];
    let exact = ManufacturedSolution {
        f: &f1,
        sigma: &s1,
        d_sigma: &ds1,
        u: &u1,
        d_u: Some(&du1),
    };
    let mut rows = Vec::new();
    for l in 0..config.levels() {
        let m = mesh(MeshKind::unit_square(config.base() << l))?;
        let specs = vec![
            PolySpaceSpec::full(r + 1, 0, 2),
            PolySpaceSpec::full(r, 1, 2),
            PolySpaceSpec::full(r - 1, 2, 2),
        ];
        let c = DiscreteComplex::from_specs(&m, specs, BoundaryCondition::Natural, None)?;
        let (_, e) = source_errors(&c, 1, &exact)?;
        rows.push(RateRow {
            level: l,
            h: m.h(),
            dofs: c.dim(0) + c.dim(1),
            errors: e.to_vec(),
        });
    }
    let k1 = RateTable::new(&["sigma", "d_sigma", "u", "d_u"], rows)?;
    report.tables.push(("rates_k1".into(), k1.to_csv()));
    for (q, name) in k1.quantities.iter().enumerate() {
        report.series.push(Series::new(&format!("k1_{name}"), "h", "error", k1.levels.iter().map(|r| (r.h, r.errors[q])).collect()));
    }
    report.checks.push(rate_check("k=1 sigma", k1.rates[0], rf + 2.0, 0.2));
    report.checks.push(rate_check("k=1 d_sigma", k1.rates[1], rf + 1.0, 0.2));
    report.checks.push(rate_check("k=1 u", k1.rates[2], rf + 1.0, 0.2));
    report.checks.push(rate_check("k=1 d_u", k1.rates[3], rf, 0.2));
    Ok(report)
}

fn rates_eigen(config: &ExperimentConfig) -> Result<Report> {
    config.check(3)?;
    let mut report = Report::new(config.id);
    let r = config.r.unwrap_or(1);
    let mut csv = String::from("level,n,h,lambda_scalar,error_scalar,lambda_whitney,error_whitney\n");
    let (mut h, mut e0, mut e1) = (Vec::new(), Vec::new(), Vec::new());
    for l in 0..config.levels() {
        let n = config.base() << l;
        let m = mesh(MeshKind::Square { n, side: PI })?;
        let scalar = assemble_complex(&m, 2, r, &[Family::PMinus], BoundaryCondition::Essential, None)?;
        let lam0 = solve_eigen(&scalar, 0, 1)?.values[0];
        let whitney = if r == 1 {
            scalar
        } else {
            assemble_complex(&m, 2, 1, &[Family::PMinus], BoundaryCondition::Essential, None)?
        };
        let e = solve_eigen(&whitney, 1, 6)?;
        let lam1 = e.of_kind(ModeKind::BStar).first().copied().ok_or_else(|| {
            FeecError::NonConvergence("no curl-curl eigenvalue among the lowest modes".into())
        })?;
        csv.push_str(&format!("{l},{n},{:.6e},{lam0:.12},{:.6e},{lam1:.12},{:.6e}\n", m.h(), lam0 - 2.0, lam1 - 1.0));
        h.push(m.h());
        e0.push((lam0 - 2.0).abs());
        e1.push((lam1 - 1.0).abs());
    }
    let rate0 = fit_rate(&h, &e0)?;
    let rate1 = fit_rate(&h, &e1)?;
    report.tables.push(("eigen_rates".into(), csv + &format!("rate,,,,{rate0:.4},,{rate1:.4}\n")));
    report.series.push(Series::new("scalar_error", "h", "error", h.iter().copied().zip(e0.iter().copied()).collect()));
    report.series.push(Series::new("whitney_error", "h", "error", h.iter().copied().zip(e1.iter().copied()).collect()));
    report.checks.push(rate_check("scalar Dirichlet eigenvalue", rate0, 2.0 * r as f64, 0.3));
    report.checks.push(Check::at_least("Whitney curl-curl eigenvalue rate", rate1, 1.7));
    Ok(report)
}

// ---------------------------------------------------------------- cohomology

fn betti_suite(config: &ExperimentConfig) -> Result<Report> {
    config.check(1)?;
    let mut report = Report::new(config.id);
    let max_r = config.r.unwrap_or(3);
    let bc = config.bc.unwrap_or(BoundaryCondition::Natural);
    let relative = bc == BoundaryCondition::Essential;
    let b = config.base();
    let kinds: Vec<(&str, Box<dyn Fn(usize) -> MeshKind>)> = vec![
        ("interval", Box::new(|n| MeshKind::interval(2 * n))),
        ("square", Box::new(|n| MeshKind::unit_square(n))),
        ("lshape", Box::new(|n| MeshKind::LShape { n })),
        ("annulus", Box::new(|n| MeshKind::Annulus { n, r_in: 0.5, r_out: 1.0 })),
        ("cube", Box::new(|n| MeshKind::Cube { n, side: 1.0 })),
    ];
    let mut csv = String::from("domain,level,pattern,r,betti,oracle,match\n");
    let mut mismatches = 0usize;
    let mut inconsistent = 0usize;
    let mut complexes = 0usize;
    let mut skipped = 0usize;
    for (name, kind) in &kinds {
        let mut seen: Option<Vec<usize>> = None;
        for l in 0..config.levels() {
            let m = mesh(kind(b << l))?;
            let oracle = simplicial_betti(&m, relative);
            let patterns = match &config.pattern {
                Some(_) => vec![pattern_or(config, m.dim(), Vec::new())?],
                None => all_patterns(m.dim()),
            };
            for p in &patterns {
                for r in 1..=max_r {
                    let c = match assemble_complex(&m, m.dim(), r, p, bc, None) {
                        Ok(c) => c,
                        Err(FeecError::InvalidPattern(_)) => {
                            skipped += 1;
                            continue;
                        }
                        Err(e) => return Err(e),
                    };
                    let betti = c.betti_numbers()?;
                    complexes += 1;
                    let ok = betti == oracle;
                    mismatches += !ok as usize;
                    if let Some(s) = &seen {
                        inconsistent += (s != &betti) as usize;
                    } else {
                        seen = Some(betti.clone());
                    }
                    let bits: String = p.iter().map(|f| if *f == Family::PMinus { '1' } else { '0' }).collect();
                    csv.push_str(&format!("{name},{l},{bits},{r},{betti:?},{oracle:?},{ok}\n").replace(", ", " "));
                }
            }
        }
    }
    report.tables.push(("betti".into(), csv));
    report.notes.push(format!("{complexes} complexes checked, {skipped} illegal pattern/degree combinations skipped"));
    report.checks.push(Check::at_most("complexes disagreeing with simplicial homology", mismatches as f64, 0.0));
    report.checks.push(Check::at_most("complexes disagreeing across patterns, degrees and levels", inconsistent as f64, 0.0));
    Ok(report)
}

// ---------------------------------------------------------------- elasticity

/// Random non-degenerate triangles with small integer coordinates.
pub fn random_triangles(count: usize, seed: u64) -> Vec<[[Rational; 2]; 3]> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let p: Vec<[i64; 2]> = (0..3).map(|_| [rng.random_range(-20..=20), rng.random_range(-20..=20)]).collect();
        let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[1][1] - p[0][1]) * (p[2][0] - p[0][0]);
        if det != 0 {
            out.push([0, 1, 2].map(|i| p[i].map(crate::rational_from_i64)));
        }
    }
    out
}

fn elasticity_aw(config: &ExperimentConfig) -> Result<Report> {
    config.check(3)?;
    let mut report = Report::new(config.id);
    let failures = random_triangles(500, config.seed).iter().filter(|t| check_unisolvence(t).is_err()).count();
    let (lambda, mu) = (1.0, 1.0);
    let compliance = Compliance::Isotropic { lambda, mu };
    let (sigma, f) = manufactured_fields(lambda, mu);
    let u = |x: &[f64]| {
        let s = (PI * x[0]).sin() * (PI * x[1]).sin();
        [s, s]
    };
    let mut rows = Vec::new();
    let mut defects: f64 = 0.0;
    let mut gammas = Vec::new();
    let mut gcsv = String::from("n,infsup\n");
    for l in 0..config.levels() {
        let n = config.base() << l;
        let m = mesh(MeshKind::unit_square(n))?;
        let space = StressSpace::new(m.clone())?;
        let sol = solve_elasticity(&space, &compliance, &f)?;
        defects = defects.max(div_projection_defect(&space, &sol.sigma, &f)?);
        rows.push(RateRow {
            level: l,
            h: m.h(),
            dofs: space.dim() + sol.u.len(),
            errors: vec![stress_error(&space, &sol.sigma, &sigma), displacement_error(&m, &sol.u, &u)],
        });
        let g = elasticity_infsup(&space)?;
        gcsv.push_str(&format!("{n},{g:.6e}\n"));
        gammas.push(g);
    }
    let table = RateTable::new(&["sigma", "u"], rows)?;
    report.tables.push(("rates".into(), table.to_csv()));
    report.tables.push(("infsup".into(), gcsv));
    report.series.push(Series::new("stress_error", "h", "error", table.levels.iter().map(|r| (r.h, r.errors[0])).collect()));
    let errs: Vec<f64> = table.levels.iter().map(|r| r.errors[0]).collect();
    report.checks.push(Check::at_most("triangles failing unisolvence (of 500)", failures as f64, 0.0));
    report.checks.push(Check::at_most("div sigma_h minus projection of f", defects, 1e-10));
    report.checks.push(Check::at_least("stress error reduction per level (min)", min_ratio(&errs), 1.0 + 1e-9));
    report.checks.push(Check::at_least("stress rate", table.rates[0], 1.0));
    report.checks.push(Check::at_least(
        "inf-sup min over levels / coarsest",
        gammas.iter().copied().fold(f64::INFINITY, f64::min) / gammas[0],
        0.5,
    ));
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_round_trip() {
        for id in ExperimentId::ALL {
            assert_eq!(id.as_str().parse::<ExperimentId>().unwrap(), id);
            let json = serde_json::to_string(&id).unwrap();
            assert_eq!(json, format!("\"{id}\""));
        }
        assert!("fig9".parse::<ExperimentId>().is_err());
    }

    #[test]
    fn config_from_json() {
        let c = ExperimentConfig::from_json(r#"{"id": "rates-hodge", "levels": 3, "bc": "essential"}"#).unwrap();
        assert_eq!(c.id, ExperimentId::RatesHodge);
        assert_eq!(c.levels(), 3);
        assert_eq!(c.base(), 2);
        assert_eq!(c.bc, Some(BoundaryCondition::Essential));
        assert!(ExperimentConfig::from_json(r#"{"id": "rates-hodge", "bogus": 1}"#).is_err());
    }

    #[test]
    fn too_few_levels_is_infeasible() {
        let mut c = ExperimentConfig::new(ExperimentId::RatesEigen);
        c.levels = Some(2);
        assert!(run(&c).is_err());
    }

    #[test]
    fn primal_1d_writes_verdict() {
        let dir = std::env::temp_dir().join(format!("feec-fig1-{}", std::process::id()));
        let mut c = ExperimentConfig::new(ExperimentId::Fig1Primal);
        c.out = Some(dir.clone());
        let report = run(&c).unwrap();
        assert!(report.passed(), "{}", report.summary());
        let verdict: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("verdict.json")).unwrap()).unwrap();
        assert_eq!(verdict["pass"], true);
        assert!(dir.join("uh.dat").exists() && dir.join("errors.csv").exists());
        std::fs::remove_dir_all(dir).ok();
    }
}
