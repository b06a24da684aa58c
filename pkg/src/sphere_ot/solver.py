"""Discrete quadratic-cost transport between sphere measures.

The exact backend is an LP solve (HiGHS dual simplex) over the dense
bipartite graph, with an assignment fast path when both sides have the
same number of equally weighted atoms. Dual potentials are returned in
the cost form psi_i + phi_j <= c(x_i, y_j); the correlation-form convex
potential used for subdifferential queries is derived from them via
c(x, y) = 2 - 2 x.y, giving psi_corr(x) = max_j (x.y_j + phi_j / 2)
= 1 - psi_i / 2 at source atoms.
"""

import csv
import itertools
import json
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import linear_sum_assignment, linprog
from scipy.special import logsumexp

from .errors import ConfigError, ConvergenceError, SolverError
from .geometry import cost_matrix
from .measures import DiscreteMeasure

MASS_TOL = 1e-8
SUPPORT_EPS = 1e-15


@dataclass
class Coupling:
    """Sparse transport plan: positive masses on (source, target) pairs."""

    rows: np.ndarray
    cols: np.ndarray
    mass: np.ndarray
    total_cost: float

    @property
    def size(self) -> int:
        return len(self.mass)

    def row_marginal(self, n_rows: int) -> np.ndarray:
        return np.bincount(self.rows, weights=self.mass, minlength=n_rows)

    def col_marginal(self, n_cols: int) -> np.ndarray:
        return np.bincount(self.cols, weights=self.mass, minlength=n_cols)

    def validate(self, mu: DiscreteMeasure, nu: DiscreteMeasure, tol: float = MASS_TOL) -> None:
        if np.any(self.mass <= 0):
            raise SolverError("coupling entries must be strictly positive")
        row_err = np.max(np.abs(self.row_marginal(mu.count) - mu.weights))
        col_err = np.max(np.abs(self.col_marginal(nu.count) - nu.weights))
        if max(row_err, col_err) > tol:
            raise SolverError(f"marginal violation {max(row_err, col_err):.3e} exceeds {tol}")

    def images_of(self, i: int):
        """Indices and masses of the targets fed by source atom i."""
        sel = self.rows == i
        return self.cols[sel], self.mass[sel]

    def sources_of(self, j: int):
        """Indices and masses of the sources feeding target atom j."""
        sel = self.cols == j
        return self.rows[sel], self.mass[sel]


@dataclass
class DualPotentials:
    """Cost-form dual pair: psi per source atom, phi per target atom."""

    psi: np.ndarray
    phi: np.ndarray

    def feasibility_gap(self, mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
        """max_ij (psi_i + phi_j - c_ij); <= 0 for feasible duals."""
        c = cost_matrix(mu.points, nu.points)
        return float((self.psi[:, None] + self.phi[None, :] - c).max())

    def slackness_gap(self, coupling: Coupling, mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
        """max |psi_i + phi_j - c_ij| over the coupling support."""
        c = cost_matrix(mu.points, nu.points)
        s = self.psi[coupling.rows] + self.phi[coupling.cols] - c[coupling.rows, coupling.cols]
        return float(np.max(np.abs(s))) if len(s) else 0.0


def _check_instance(mu: DiscreteMeasure, nu: DiscreteMeasure) -> None:
    if mu.n != nu.n:
        raise SolverError("measures must live on the same sphere dimension")
    if abs(mu.mass - nu.mass) > MASS_TOL or abs(mu.mass - 1.0) > MASS_TOL:
        raise SolverError(
            f"marginal masses must both equal 1: got {mu.mass:.12f} and {nu.mass:.12f}"
        )


def _coupling_from_dense(plan: np.ndarray, c: np.ndarray) -> Coupling:
    rows, cols = np.nonzero(plan > SUPPORT_EPS)
    mass = plan[rows, cols]
    cost = float(np.sum(mass * c[rows, cols]))
    return Coupling(rows, cols, mass, cost)


def _duals_from_assignment(c: np.ndarray, row_to_col: np.ndarray, max_iter: int | None = None):
    """Dual potentials supporting an optimal assignment.

    Vectorized Bellman-Ford on the column reassignment graph: converges
    because an optimal assignment admits no negative cycle. Returns None
    if the iteration limit is hit (caller falls back to the LP).
    """
    n = c.shape[0]
    col_to_row = np.empty(n, dtype=int)
    col_to_row[row_to_col] = np.arange(n)
    w = c[col_to_row, :] - c[col_to_row, row_to_col[col_to_row]][:, None]
    phi = np.zeros(n)
    limit = max_iter if max_iter is not None else n + 1
    for _ in range(limit):
        cand = (phi[:, None] + w).min(axis=0)
        new = np.minimum(phi, cand)
        if np.array_equal(new, phi):
            psi = c[np.arange(n), row_to_col] - phi[row_to_col]
            return psi, phi
        phi = new
    return None


def _solve_lp(mu: DiscreteMeasure, nu: DiscreteMeasure, c: np.ndarray):
    n, m = mu.count, nu.count
    nm = n * m
    rows = np.concatenate([np.repeat(np.arange(n), m), np.tile(np.arange(m), n) + n])
    cols = np.concatenate([np.arange(nm), np.arange(nm)])
    a_eq = sparse.csr_matrix((np.ones(2 * nm), (rows, cols)), shape=(n + m, nm))
    b_eq = np.concatenate([mu.weights, nu.weights])
    res = linprog(c.ravel(), A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs-ds")
    if res.status != 0:
        raise SolverError(f"LP backend failed: {res.message}")
    plan = res.x.reshape(n, m)
    duals = res.eqlin.marginals
    return _coupling_from_dense(plan, c), DualPotentials(duals[:n].copy(), duals[n:].copy())


def solve_exact(mu: DiscreteMeasure, nu: DiscreteMeasure):
    """Optimal coupling and dual potentials for the discrete quadratic cost.

    Uses the Hungarian assignment path when atom counts and weights match
    (duals recovered by shortest-path potentials), otherwise the LP.
    """
    _check_instance(mu, nu)
    c = cost_matrix(mu.points, nu.points)
    equal_weights = (
        mu.count == nu.count
        and np.allclose(mu.weights, mu.weights[0], rtol=0, atol=1e-12)
        and np.allclose(nu.weights, mu.weights[0], rtol=0, atol=1e-12)
    )
    if equal_weights:
        r, assign = linear_sum_assignment(c)
        duals = _duals_from_assignment(c, assign)
        if duals is not None:
            psi, phi = duals
            mass = np.full(mu.count, mu.weights[0])
            cost = float(np.sum(mass * c[r, assign]))
            return Coupling(r, assign, mass, cost), DualPotentials(psi, phi)
    return _solve_lp(mu, nu, c)


def brute_force_oracle(mu: DiscreteMeasure, nu: DiscreteMeasure) -> Coupling:
    """Exact optimum by enumerating all permutations (equal weights, N <= 8)."""
    n = mu.count
    if nu.count != n or n > 8:
        raise ConfigError("oracle requires equal atom counts with N <= 8")
    if not (
        np.allclose(mu.weights, 1.0 / n, rtol=0, atol=1e-12)
        and np.allclose(nu.weights, 1.0 / n, rtol=0, atol=1e-12)
    ):
        raise ConfigError("oracle requires equal weights 1/N on both sides")
    c = cost_matrix(mu.points, nu.points)
    perms = np.array(list(itertools.permutations(range(n))))
    costs = c[np.arange(n)[None, :], perms].sum(axis=1) / n
    best = perms[np.argmin(costs)]
    mass = np.full(n, 1.0 / n)
    return Coupling(np.arange(n), best, mass, float(costs.min()))


def _round_to_marginals(plan: np.ndarray, mu_w: np.ndarray, nu_w: np.ndarray) -> np.ndarray:
    """Rescale rows and columns, then add a rank-one correction, so the
    plan satisfies both marginals exactly."""
    r = plan.sum(axis=1)
    scale_r = np.minimum(1.0, np.divide(mu_w, r, out=np.ones_like(r), where=r > 0))
    plan = plan * scale_r[:, None]
    s = plan.sum(axis=0)
    scale_c = np.minimum(1.0, np.divide(nu_w, s, out=np.ones_like(s), where=s > 0))
    plan = plan * scale_c[None, :]
    err_r = mu_w - plan.sum(axis=1)
    err_c = nu_w - plan.sum(axis=0)
    total = err_r.sum()
    if total > 0:
        plan = plan + np.outer(err_r, err_c) / total
    return plan


def solve_entropic(
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    reg: float,
    max_iter: int = 20_000,
    tol: float = 1e-8,
):
    """Entropic-regularized transport by log-domain matrix scaling.

    The returned plan is rounded to satisfy both marginals exactly, so its
    linear cost is always >= the exact optimum; it converges to it as
    reg -> 0. Raises ConvergenceError if the marginal violation still
    exceeds tol after max_iter sweeps.
    """
    _check_instance(mu, nu)
    if reg <= 0:
        raise ConfigError("regularization must be positive")
    c = cost_matrix(mu.points, nu.points)
    log_mu = np.log(mu.weights)
    log_nu = np.log(nu.weights)
    f = np.zeros(mu.count)
    g = np.zeros(nu.count)

    def row_violation(f, g):
        z = (f[:, None] + g[None, :] - c) / reg
        rows = np.exp(z).sum(axis=1)
        return np.max(np.abs(rows - mu.weights))

    violation = np.inf
    for it in range(max_iter):
        f = reg * log_mu - reg * logsumexp((g[None, :] - c) / reg, axis=1)
        g = reg * log_nu - reg * logsumexp((f[:, None] - c) / reg, axis=0)
        if it % 10 == 9 or it == max_iter - 1:
            violation = row_violation(f, g)
            if violation <= tol:
                break
    else:
        violation = row_violation(f, g)
    if violation > tol:
        raise ConvergenceError(
            f"marginal violation {violation:.3e} > {tol} after {max_iter} iterations"
        )
    plan = np.exp((f[:, None] + g[None, :] - c) / reg)
    plan = _round_to_marginals(plan, mu.weights, nu.weights)
    return _coupling_from_dense(plan, c), DualPotentials(f, g)


def truncate_support(coupling: Coupling, rel_tol: float) -> Coupling:
    """Drop entries below rel_tol times the largest mass in their row.

    Used to sharpen the support of regularized plans before geometric
    extraction; the result is for support analysis only and no longer
    satisfies the marginals exactly.
    """
    n_rows = int(coupling.rows.max()) + 1 if coupling.size else 0
    row_max = np.zeros(n_rows)
    np.maximum.at(row_max, coupling.rows, coupling.mass)
    keep = coupling.mass >= rel_tol * row_max[coupling.rows]
    return Coupling(
        coupling.rows[keep], coupling.cols[keep], coupling.mass[keep], coupling.total_cost
    )


def total_cost_of(coupling: Coupling, mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    c = cost_matrix(mu.points, nu.points)
    return float(np.sum(coupling.mass * c[coupling.rows, coupling.cols]))


def cyclical_monotonicity_violation(
    coupling: Coupling, mu: DiscreteMeasure, nu: DiscreteMeasure, block: int = 2048
) -> float:
    """Largest positive gain from swapping the targets of two support pairs.

    Zero (up to solver tolerance) exactly when the support admits no
    improving two-cycle, the optimality fingerprint of the plan.
    Equals twice the negative part of the worst support monotonicity dot.
    """
    return max(0.0, -2.0 * support_monotonicity_min(coupling, mu, nu, block))


def support_monotonicity_min(
    coupling: Coupling, mu: DiscreteMeasure, nu: DiscreteMeasure, block: int = 2048
) -> float:
    """min over support pairs of (x_i - x_k) . (y_j - y_l); >= 0 at optimality."""
    xs = mu.points[coupling.rows]
    ys = nu.points[coupling.cols]
    own = np.einsum("ij,ij->i", xs, ys)
    s = len(xs)
    best = np.inf
    for a in range(0, s, block):
        xa = xs[a : a + block]
        ya = ys[a : a + block]
        dots = own[a : a + block, None] + own[None, :] - xa @ ys.T - ya @ xs.T
        best = min(best, float(dots.min()))
    return best


def brenier_potential(
    duals: DualPotentials, nu: DiscreteMeasure, x: np.ndarray, tie_tol: float = 1e-8
):
    """Correlation-form convex potential and its discrete subdifferential at x.

    Returns (value, argmax indices): value = max_j (x . y_j - phi_corr_j)
    with the correlation-form dual phi_corr_j = -phi_j / 2 (from
    c = 2 - 2 x.y), and every j within tie_tol of the maximum. For sources
    of a solved instance the argmax set contains all targets carrying
    coupling mass, and the value equals 1 - psi_i / 2 there.
    """
    scores = nu.points @ np.asarray(x, dtype=float) + duals.phi / 2.0
    value = float(scores.max())
    argmax = np.nonzero(scores >= value - tie_tol)[0]
    return value, argmax


def save_coupling_csv(coupling: Coupling, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["i", "j", "mass"])
        for i, j, m in zip(coupling.rows, coupling.cols, coupling.mass):
            writer.writerow([int(i), int(j), repr(float(m))])


def load_coupling_csv(path, mu: DiscreteMeasure, nu: DiscreteMeasure) -> Coupling:
    rows, cols, mass = [], [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for i, j, m in reader:
            rows.append(int(i))
            cols.append(int(j))
            mass.append(float(m))
    coupling = Coupling(np.array(rows), np.array(cols), np.array(mass), 0.0)
    coupling.total_cost = total_cost_of(coupling, mu, nu)
    return coupling


def save_duals_json(duals: DualPotentials, total_cost: float, path) -> None:
    with open(path, "w") as fh:
        json.dump(
            {
                "phi": [float(v) for v in duals.phi],
                "psi": [float(v) for v in duals.psi],
                "total_cost": float(total_cost),
            },
            fh,
            sort_keys=True,
        )
