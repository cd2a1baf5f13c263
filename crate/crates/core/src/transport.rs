//! Optimal transport between finitely supported measures on the line, the
//! concavity of `μ ↦ ψ(G⁻¹(μ))`, and the order structure of matrix supports.

use std::collections::VecDeque;

use minilp::{ComparisonOp, OptimizationDirection};
use serde::Serialize;

use crate::cascade::{psi_grid, PsiGridConfig, SpinLaw};
use crate::cone::{conjugate_xi, XiModel};
use crate::error::{Error, Result};
use crate::linalg::{loewner_le, SymMatrix};
use crate::measure::DiscreteMeasure;
use crate::path::quantile_path;

const CONJUGATE_TOL: f64 = 1e-12;
/// Largest `|supp μ|·|supp ν|` handed to the linear programs.
pub const MAX_LP_CELLS: usize = 10_000;

fn check_finite(mu: &DiscreteMeasure<f64>) -> Result<()> {
    if mu.atoms().iter().any(|a| !a.is_finite()) {
        return Err(Error::InvalidMeasure("atoms must be finite".into()));
    }
    Ok(())
}

/// Mass-sorted pieces `(x, x', m)` of the monotone coupling of `μ` and `ν`.
fn monotone_coupling(mu: &DiscreteMeasure<f64>, nu: &DiscreteMeasure<f64>) -> Result<Vec<(usize, usize, f64)>> {
    check_finite(mu)?;
    check_finite(nu)?;
    let sorted = |m: &DiscreteMeasure<f64>| {
        let mut idx: Vec<usize> = (0..m.len()).filter(|&i| m.weights()[i] > 0.0).collect();
        idx.sort_by(|&a, &b| m.atoms()[a].total_cmp(&m.atoms()[b]).then(a.cmp(&b)));
        idx
    };
    let (a, b) = (sorted(mu), sorted(nu));
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (mu.weights()[a[0]], nu.weights()[b[0]]);
    loop {
        let m = ra.min(rb);
        if m > 0.0 {
            out.push((a[i], b[j], m));
        }
        ra -= m;
        rb -= m;
        // the last pair absorbs the round-off of both cumulative sums
        let last_a = i + 1 == a.len();
        let last_b = j + 1 == b.len();
        if last_a && last_b {
            break;
        }
        if (ra <= rb && !last_a) || last_b {
            i += 1;
            ra += mu.weights()[a[i]];
        } else {
            j += 1;
            rb += nu.weights()[b[j]];
        }
    }
    Ok(out)
}

/// `W₂(μ, ν)` from the quantile coupling.
pub fn w2(mu: &DiscreteMeasure<f64>, nu: &DiscreteMeasure<f64>) -> Result<f64> {
    Ok(monotone_coupling(mu, nu)?
        .iter()
        .map(|&(i, j, m)| m * (nu.atoms()[j] - mu.atoms()[i]).powi(2))
        .sum::<f64>()
        .sqrt())
}

fn check_transport(t: f64, model: &XiModel) -> Result<()> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::OutOfRange(format!("transport needs t > 0, got {t}")));
    }
    if model.dim() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: model.dim(),
        });
    }
    Ok(())
}

/// `t·ξ*((x' − x)/t)`.
fn cell_cost(t: f64, model: &XiModel, x: f64, x_prime: f64) -> Result<f64> {
    Ok(t * conjugate_xi(model, &SymMatrix::scalar((x_prime - x) / t), CONJUGATE_TOL)?.value)
}

/// `∫₀¹ t ξ*((q_ν(u) − q_μ(u))/t) du` for the quantile paths of `μ` and `ν`.
pub fn transport_cost_monotone(t: f64, mu: &DiscreteMeasure<f64>, nu: &DiscreteMeasure<f64>, model: &XiModel) -> Result<f64> {
    check_transport(t, model)?;
    monotone_coupling(mu, nu)?
        .iter()
        .map(|&(i, j, m)| Ok(m * cell_cost(t, model, mu.atoms()[i], nu.atoms()[j])?))
        .sum()
}

/// Coupling `π[i][j]` of `μ` (rows) and `ν` (columns).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CouplingMatrix {
    rows: Vec<Vec<f64>>,
}

impl CouplingMatrix {
    /// Checks nonnegativity and both marginals to `1e-10`.
    pub fn new(rows: Vec<Vec<f64>>, mu: &[f64], nu: &[f64]) -> Result<Self> {
        if rows.len() != mu.len() || rows.iter().any(|r| r.len() != nu.len()) {
            return Err(Error::InvalidMeasure("coupling shape does not match the marginals".into()));
        }
        if rows.iter().flatten().any(|&x| !(x >= 0.0)) {
            return Err(Error::InvalidMeasure("coupling has a negative entry".into()));
        }
        for (r, w) in rows.iter().zip(mu) {
            if (r.iter().sum::<f64>() - w).abs() > 1e-10 {
                return Err(Error::InvalidMeasure("row sums differ from the first marginal".into()));
            }
        }
        for (j, w) in nu.iter().enumerate() {
            if (rows.iter().map(|r| r[j]).sum::<f64>() - w).abs() > 1e-10 {
                return Err(Error::InvalidMeasure("column sums differ from the second marginal".into()));
            }
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i][j]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for r in &self.rows {
            let line: Vec<String> = r.iter().map(|x| format!("{x:e}")).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TransportPlan {
    pub cost: f64,
    pub coupling: CouplingMatrix,
    pub pivots: usize,
}

fn cost_matrix(t: f64, mu: &DiscreteMeasure<f64>, nu: &DiscreteMeasure<f64>, model: &XiModel) -> Result<Vec<Vec<f64>>> {
    check_transport(t, model)?;
    check_finite(mu)?;
    check_finite(nu)?;
    if mu.len() * nu.len() > MAX_LP_CELLS {
        return Err(Error::Lp(format!("{}×{} exceeds {MAX_LP_CELLS} cells", mu.len(), nu.len())));
    }
    mu.atoms()
        .iter()
        .map(|&x| nu.atoms().iter().map(|&y| cell_cost(t, model, x, y)).collect())
        .collect()
}

/// Transportation simplex: north-west corner start, potentials from the
/// basis tree, most negative reduced cost enters.
fn transportation_simplex(cost: &[Vec<f64>], supply: &[f64], demand: &[f64]) -> Result<(Vec<Vec<f64>>, usize)> {
    let (m, n) = (supply.len(), demand.len());
    let mut x = vec![vec![0.0; n]; m];
    let mut basic = vec![vec![false; n]; m];
    let (mut sa, mut sb) = (supply.to_vec(), demand.to_vec());
    let (mut i, mut j) = (0, 0);
    loop {
        let v = sa[i].min(sb[j]).max(0.0);
        x[i][j] = v;
        basic[i][j] = true;
        sa[i] -= v;
        sb[j] -= v;
        if i + 1 == m && j + 1 == n {
            break;
        }
        if (sa[i] <= sb[j] && i + 1 < m) || j + 1 == n {
            i += 1;
        } else {
            j += 1;
        }
    }
    let scale = cost.iter().flatten().fold(0.0f64, |a, c| a.max(c.abs()));
    let tol = 1e-13 * (1.0 + scale);
    let max_pivots = 50 * m * n + 100;
    for pivots in 0..max_pivots {
        // nodes 0..m are rows, m..m+n columns; basic cells are tree edges
        let mut pot = vec![f64::NAN; m + n];
        let mut parent = vec![usize::MAX; m + n];
        pot[0] = 0.0;
        let mut queue = VecDeque::from([0usize]);
        while let Some(node) = queue.pop_front() {
            if node < m {
                for c in 0..n {
                    if basic[node][c] && pot[m + c].is_nan() {
                        pot[m + c] = cost[node][c] - pot[node];
                        parent[m + c] = node;
                        queue.push_back(m + c);
                    }
                }
            } else {
                let c = node - m;
                for r in 0..m {
                    if basic[r][c] && pot[r].is_nan() {
                        pot[r] = cost[r][c] - pot[node];
                        parent[r] = node;
                        queue.push_back(r);
                    }
                }
            }
        }
        if pot.iter().any(|p| p.is_nan()) {
            return Err(Error::Lp("basis is not a spanning tree".into()));
        }
        let mut enter = None;
        let mut best = -tol;
        for r in 0..m {
            for c in 0..n {
                let red = cost[r][c] - pot[r] - pot[m + c];
                if !basic[r][c] && red < best {
                    best = red;
                    enter = Some((r, c));
                }
            }
        }
        let Some((er, ec)) = enter else {
            return Ok((x, pivots));
        };
        // tree path from column ec up to the root and from row er up to the root
        let ancestors = |mut node: usize| {
            let mut path = vec![node];
            while parent[node] != usize::MAX {
                node = parent[node];
                path.push(node);
            }
            path
        };
        let pc = ancestors(m + ec);
        let pr = ancestors(er);
        let common = pc.iter().position(|nd| pr.contains(nd)).expect("tree is connected");
        let meet = pc[common];
        let mut path: Vec<usize> = pc[..=common].to_vec();
        let back = pr.iter().position(|&nd| nd == meet).expect("common ancestor");
        path.extend(pr[..back].iter().rev());
        // path runs column ec → ... → row er; its edges alternate −, +, −, ...
        let cells: Vec<(usize, usize)> = path
            .windows(2)
            .map(|w| if w[0] < m { (w[0], w[1] - m) } else { (w[1], w[0] - m) })
            .collect();
        let mut theta = f64::INFINITY;
        let mut leave = None;
        for (k, &(r, c)) in cells.iter().enumerate() {
            if k % 2 == 0 && x[r][c] < theta {
                theta = x[r][c];
                leave = Some((r, c));
            }
        }
        let (lr, lc) = leave.ok_or_else(|| Error::Lp("no leaving cell".into()))?;
        x[er][ec] += theta;
        for (k, &(r, c)) in cells.iter().enumerate() {
            if k % 2 == 0 {
                x[r][c] = (x[r][c] - theta).max(0.0);
            } else {
                x[r][c] += theta;
            }
        }
        x[lr][lc] = 0.0;
        basic[lr][lc] = false;
        basic[er][ec] = true;
    }
    Err(Error::Lp(format!("no optimum after {max_pivots} pivots")))
}

/// `inf_π Σ π_ij t ξ*((x'_j − x_i)/t)` over couplings of `μ` (rows) and `ν` (columns).
pub fn transport_cost_lp(t: f64, mu: &DiscreteMeasure<f64>, nu: &DiscreteMeasure<f64>, model: &XiModel) -> Result<TransportPlan> {
    let cost = cost_matrix(t, mu, nu, model)?;
    let (x, pivots) = transportation_simplex(&cost, mu.weights(), nu.weights())?;
    let total = x.iter().flatten().zip(cost.iter().flatten()).map(|(a, c)| a * c).sum();
    Ok(TransportPlan {
        cost: total,
        coupling: CouplingMatrix::new(x, mu.weights(), nu.weights())?,
        pivots,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct DualGap {
    pub primal: f64,
    pub dual: f64,
    /// `primal − dual`.
    pub gap: f64,
    /// `χ_i` on the atoms of `μ`.
    pub chi: Vec<f64>,
    /// `χ'_j` on the atoms of `ν`.
    pub chi_prime: Vec<f64>,
}

/// `Σ ν_j χ'_j − Σ μ_i χ_i` for potentials with `χ'_j − χ_i ≤ c_ij`.
pub fn dual_value(
    t: f64,
    mu: &DiscreteMeasure<f64>,
    nu: &DiscreteMeasure<f64>,
    model: &XiModel,
    chi: &[f64],
    chi_prime: &[f64],
) -> Result<f64> {
    let cost = cost_matrix(t, mu, nu, model)?;
    if chi.len() != mu.len() || chi_prime.len() != nu.len() {
        return Err(Error::DimensionMismatch {
            expected: mu.len() + nu.len(),
            got: chi.len() + chi_prime.len(),
        });
    }
    for (i, row) in cost.iter().enumerate() {
        for (j, c) in row.iter().enumerate() {
            if chi_prime[j] - chi[i] > c + 1e-12 * (1.0 + c.abs()) {
                return Err(Error::Lp(format!("potentials violate the constraint at ({i}, {j})")));
            }
        }
    }
    Ok(nu.weights().iter().zip(chi_prime).map(|(w, p)| w * p).sum::<f64>()
        - mu.weights().iter().zip(chi).map(|(w, p)| w * p).sum::<f64>())
}

/// Primal optimum from the transportation simplex against the Kantorovich
/// dual `sup {Σ ν_j χ'_j − Σ μ_i χ_i : χ'_j − χ_i ≤ c_ij}` from a general LP solver.
pub fn kantorovich_dual_gap(t: f64, mu: &DiscreteMeasure<f64>, nu: &DiscreteMeasure<f64>, model: &XiModel) -> Result<DualGap> {
    let cost = cost_matrix(t, mu, nu, model)?;
    let primal = transport_cost_lp(t, mu, nu, model)?.cost;
    let mut lp = minilp::Problem::new(OptimizationDirection::Maximize);
    // potentials are defined up to a common shift; pin χ_0
    let chi: Vec<minilp::Variable> = mu
        .weights()
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let bounds = if i == 0 { (0.0, 0.0) } else { (f64::NEG_INFINITY, f64::INFINITY) };
            lp.add_var(-w, bounds)
        })
        .collect();
    let chi_prime: Vec<minilp::Variable> = nu
        .weights()
        .iter()
        .map(|&w| lp.add_var(w, (f64::NEG_INFINITY, f64::INFINITY)))
        .collect();
    for (i, row) in cost.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            lp.add_constraint(&[(chi_prime[j], 1.0), (chi[i], -1.0)], ComparisonOp::Le, c);
        }
    }
    let sol = lp.solve().map_err(|e| Error::Lp(e.to_string()))?;
    let chi: Vec<f64> = chi.iter().map(|v| sol[*v]).collect();
    let chi_prime: Vec<f64> = chi_prime.iter().map(|v| sol[*v]).collect();
    let dual = nu.weights().iter().zip(&chi_prime).map(|(w, p)| w * p).sum::<f64>()
        - mu.weights().iter().zip(&chi).map(|(w, p)| w * p).sum::<f64>();
    Ok(DualGap {
        primal,
        dual,
        gap: primal - dual,
        chi,
        chi_prime,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ConcavityRow {
    pub lambda: f64,
    /// `ψ(G⁻¹(λμ₁ + (1−λ)μ₀))`.
    pub mixture: f64,
    /// `λψ(G⁻¹(μ₁)) + (1−λ)ψ(G⁻¹(μ₀))`.
    pub chord: f64,
    pub gap: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConcavityReport {
    pub rows: Vec<ConcavityRow>,
    pub min_gap: f64,
    /// Gap at `λ = 1/2`.
    pub midpoint_margin: f64,
    /// Whether the spin law is uniform on `{±1}`.
    pub ising: bool,
    pub holds: bool,
}

const CONCAVITY_SLACK: f64 = 1e-6;

fn psi_of_measure(mu: &DiscreteMeasure<f64>, law: &SpinLaw, cfg: &PsiGridConfig) -> Result<f64> {
    psi_grid(&quantile_path(mu)?, law, cfg)
}

/// Evaluates `μ ↦ ψ(G⁻¹(μ))` along the segment from `μ₀` to `μ₁`; the
/// inequality must hold to `1e-6` at every `λ`.
pub fn concavity_probe(
    mu0: &DiscreteMeasure<f64>,
    mu1: &DiscreteMeasure<f64>,
    lambdas: &[f64],
    law: &SpinLaw,
    cfg: &PsiGridConfig,
) -> Result<ConcavityReport> {
    if law.dim() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: law.dim(),
        });
    }
    let p0 = psi_of_measure(mu0, law, cfg)?;
    let p1 = psi_of_measure(mu1, law, cfg)?;
    let mut lams: Vec<f64> = lambdas.to_vec();
    if !lams.iter().any(|&l| l == 0.5) {
        lams.push(0.5);
    }
    lams.sort_by(f64::total_cmp);
    let rows = lams
        .iter()
        .map(|&lambda| {
            let mixture = psi_of_measure(&mu0.mix(mu1, lambda)?, law, cfg)?;
            let chord = lambda * p1 + (1.0 - lambda) * p0;
            Ok(ConcavityRow {
                lambda,
                mixture,
                chord,
                gap: mixture - chord,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let min_gap = rows.iter().map(|r| r.gap).fold(f64::INFINITY, f64::min);
    let midpoint_margin = rows.iter().find(|r| r.lambda == 0.5).expect("inserted").gap;
    let ising = law == &SpinLaw::ising();
    Ok(ConcavityReport {
        rows,
        min_gap,
        midpoint_margin,
        ising,
        holds: min_gap >= -CONCAVITY_SLACK,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct OrderReport {
    pub ordered: bool,
    /// An incomparable pair of atoms.
    pub witness: Option<(SymMatrix, SymMatrix)>,
}

/// Whether every pair of atoms is comparable in the Loewner order.
pub fn totally_ordered_support(mu: &DiscreteMeasure<SymMatrix>) -> OrderReport {
    let atoms: Vec<&SymMatrix> = mu.iter().filter(|(_, w)| *w > 0.0).map(|(a, _)| a).collect();
    for (i, a) in atoms.iter().enumerate() {
        for b in &atoms[i + 1..] {
            if !loewner_le(a, b) && !loewner_le(b, a) {
                return OrderReport {
                    ordered: false,
                    witness: Some(((*a).clone(), (*b).clone())),
                };
            }
        }
    }
    OrderReport {
        ordered: true,
        witness: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::path::{law_map, lp_distance, scalar_law, StepPath};
    use crate::rng::stream;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_measure(rng: &mut impl Rng, max_len: usize) -> DiscreteMeasure<f64> {
        let n = rng.gen_range(1..=max_len);
        let atoms: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..2.0)).collect();
        let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
        let s: f64 = raw.iter().sum();
        DiscreteMeasure::new(atoms, raw.iter().map(|w| w / s).collect()).unwrap()
    }

    /// Minimum over all vertices of the coupling polytope for 2×2 problems:
    /// one free mass `a ∈ [max(0, μ₀ − ν₁), min(μ₀, ν₀)]`.
    fn two_by_two(cost: &[Vec<f64>], mu: &[f64], nu: &[f64]) -> f64 {
        let lo = (mu[0] - nu[1]).max(0.0);
        let hi = mu[0].min(nu[0]);
        let at = |a: f64| {
            a * cost[0][0] + (mu[0] - a) * cost[0][1] + (nu[0] - a) * cost[1][0] + (mu[1] - nu[0] + a) * cost[1][1]
        };
        at(lo).min(at(hi))
    }

    #[test]
    fn w2_of_diracs_and_self() {
        let a = DiscreteMeasure::dirac(0.3);
        let b = DiscreteMeasure::dirac(1.7);
        assert!((w2(&a, &b).unwrap() - 1.4).abs() < 1e-15);
        let mut rng = stream(1, "w2", 0);
        let m = random_measure(&mut rng, 6);
        assert_eq!(w2(&m, &m).unwrap(), 0.0);
    }

    #[test]
    fn monotone_cost_of_a_dirac_shift() {
        // ξ = x²: ξ*(y) = y²/4 for y ≥ 0
        let (t, a) = (0.7, 1.3);
        let c = transport_cost_monotone(t, &DiscreteMeasure::dirac(0.0), &DiscreteMeasure::dirac(a), &XiModel::sk(1.0)).unwrap();
        assert!((c - a * a / (4.0 * t)).abs() < 1e-10, "{c}");
        let m = DiscreteMeasure::new(vec![0.2, 0.9], vec![0.4, 0.6]).unwrap();
        assert!(transport_cost_monotone(t, &m, &m, &XiModel::sk(1.0)).unwrap().abs() < 1e-14);
    }

    #[test]
    fn point_masses_have_the_trivial_coupling() {
        let model = XiModel::sk(0.8);
        let plan = transport_cost_lp(0.5, &DiscreteMeasure::dirac(0.1), &DiscreteMeasure::dirac(0.6), &model).unwrap();
        let direct = 0.5 * conjugate_xi(&model, &SymMatrix::scalar(1.0), CONJUGATE_TOL).unwrap().value;
        assert!((plan.cost - direct).abs() < 1e-15);
        assert_eq!(plan.coupling.get(0, 0), 1.0);
    }

    #[test]
    fn two_atom_instance_matches_vertex_enumeration() {
        let model = XiModel::sk(1.0);
        let mu = DiscreteMeasure::new(vec![0.0, 1.0], vec![0.5, 0.5]).unwrap();
        let nu = DiscreteMeasure::new(vec![0.5, 1.5], vec![0.5, 0.5]).unwrap();
        let cost = cost_matrix(1.0, &mu, &nu, &model).unwrap();
        let lp = transport_cost_lp(1.0, &mu, &nu, &model).unwrap();
        let brute = two_by_two(&cost, mu.weights(), nu.weights());
        assert!((lp.cost - brute).abs() < 1e-12);
        assert!((lp.cost - transport_cost_monotone(1.0, &mu, &nu, &model).unwrap()).abs() < 1e-12);
        assert!(lp.coupling.get(0, 1) < 1e-15 && lp.coupling.get(1, 0) < 1e-15);
    }

    #[test]
    fn lp_solvers_agree_on_random_instances() {
        let model = XiModel::scalar_mixed_pspin(vec![0.0, 0.5, 0.3]).unwrap();
        let mut rng = stream(2, "lp", 0);
        for _ in 0..30 {
            let mu = random_measure(&mut rng, 6);
            let nu = random_measure(&mut rng, 6);
            let t = rng.gen_range(0.2..2.0);
            let mono = transport_cost_monotone(t, &mu, &nu, &model).unwrap();
            let lp = transport_cost_lp(t, &mu, &nu, &model).unwrap();
            assert!((mono - lp.cost).abs() <= 1e-8, "{mono} vs {}", lp.cost);
            let g = kantorovich_dual_gap(t, &mu, &nu, &model).unwrap();
            assert!(g.gap.abs() <= 1e-8, "gap {}", g.gap);
        }
    }

    #[test]
    fn suboptimal_potentials_leave_a_positive_gap() {
        let model = XiModel::sk(1.0);
        let mu = DiscreteMeasure::new(vec![0.0, 1.0], vec![0.3, 0.7]).unwrap();
        let nu = DiscreteMeasure::new(vec![0.5, 2.0], vec![0.6, 0.4]).unwrap();
        let primal = transport_cost_lp(1.0, &mu, &nu, &model).unwrap().cost;
        // zero potentials are feasible since ξ* ≥ 0
        let d = dual_value(1.0, &mu, &nu, &model, &[0.0, 0.0], &[0.0, 0.0]).unwrap();
        assert!(primal - d > 1e-3);
        assert!(dual_value(1.0, &mu, &nu, &model, &[0.0, 0.0], &[10.0, 0.0]).is_err());
        let a = DiscreteMeasure::dirac(0.2);
        let b = DiscreteMeasure::dirac(0.9);
        let g = kantorovich_dual_gap(1.0, &a, &b, &model).unwrap();
        assert!((g.dual - g.primal).abs() < 1e-12);
    }

    #[test]
    fn w2_is_the_l2_distance_of_quantile_paths() {
        let q = StepPath::new(vec![0.3, 0.8], vec![SymMatrix::scalar(0.1), SymMatrix::scalar(0.4), SymMatrix::scalar(1.0)]).unwrap();
        let q2 = StepPath::new(vec![0.5], vec![SymMatrix::scalar(0.2), SymMatrix::scalar(0.7)]).unwrap();
        let a = scalar_law(&law_map(&q)).unwrap();
        let b = scalar_law(&law_map(&q2)).unwrap();
        let d = lp_distance(&q, &q2, 2).unwrap();
        assert!((w2(&a, &b).unwrap() - d).abs() < 1e-10);
    }

    #[test]
    fn concavity_examples() {
        let law = SpinLaw::ising();
        let cfg = PsiGridConfig::default();
        let lams = [0.0, 0.25, 0.5, 0.75, 1.0];
        let m = DiscreteMeasure::new(vec![0.2, 0.6], vec![0.5, 0.5]).unwrap();
        let same = concavity_probe(&m, &m, &lams, &law, &cfg).unwrap();
        assert!(same.rows.iter().all(|r| r.gap.abs() < 1e-8));
        let r = concavity_probe(&DiscreteMeasure::dirac(0.0), &DiscreteMeasure::dirac(1.0), &lams, &law, &cfg).unwrap();
        assert!(r.holds && r.midpoint_margin > 0.0, "{r:?}");
        assert_eq!(r.rows[0].gap, 0.0);
        assert_eq!(r.rows[4].gap, 0.0);
    }

    #[test]
    fn incomparable_diagonals_are_not_totally_ordered() {
        let a = SymMatrix::diag(&[1.0, 0.0]);
        let b = SymMatrix::diag(&[0.0, 1.0]);
        assert!(totally_ordered_support(&DiscreteMeasure::dirac(a.clone())).ordered);
        let mix = DiscreteMeasure::new(vec![a.clone(), b.clone()], vec![0.5, 0.5]).unwrap();
        let r = totally_ordered_support(&mix);
        assert!(!r.ordered);
        assert_eq!(r.witness, Some((a, b)));
    }

    proptest! {
        #[test]
        fn law_map_images_are_totally_ordered(incs in proptest::collection::vec(0.0f64..1.0, 1..5), seed in 0u64..1000) {
            let mut rng = stream(seed, "order", 0);
            let mut acc = SymMatrix::zeros(2);
            let mut values = Vec::new();
            for s in &incs {
                acc = &acc + &crate::rng::random_psd(&mut rng, 2, *s);
                values.push(acc.clone());
            }
            let n = values.len();
            let breaks: Vec<f64> = (1..n).map(|i| i as f64 / n as f64).collect();
            let q = StepPath::new(breaks, values).unwrap();
            prop_assert!(totally_ordered_support(&law_map(&q)).ordered);
        }

        #[test]
        fn monotone_cost_equals_the_lp(seed in 0u64..500) {
            let mut rng = stream(seed, "mono_lp", 0);
            let mu = random_measure(&mut rng, 5);
            let nu = random_measure(&mut rng, 5);
            let model = XiModel::sk(1.0);
            let mono = transport_cost_monotone(0.8, &mu, &nu, &model).unwrap();
            let lp = transport_cost_lp(0.8, &mu, &nu, &model).unwrap().cost;
            prop_assert!((mono - lp).abs() <= 1e-8);
        }
    }
}
