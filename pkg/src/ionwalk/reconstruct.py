"""Nonnegative density reconstruction from Fourier-component estimates.

Solves, over discretized densities p on a uniform position grid,

    minimize   sum_j (sum_i p_i Ccos[j,i] - C_j)^2  (+ sine rows when given)
    subject to p >= 0,  h * sum_i p_i = 1,  F(p) <= 4 * kinetic_bound,

where F is the discretized Fisher-information functional
F(p) = h * sum_i ((p_{i+1} - p_{i-1}) / 2h)^2 / p_i, a convex constraint
excluding densities whose kinetic energy would exceed the measured one
(equality holds for wavefunctions without phase gradients, e.g. the ground
state where F = 4 <pi^2> = 1).

The solver is a monotone projected-gradient method on the simplex-like
feasible set; the Fisher constraint is enforced through its Lagrange
multiplier, located by bisection (exact for this convex problem). A small
dense active-set quadratic program is provided as an independent optimality
oracle for the unconstrained-in-F case.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .probe import ProbeScan, width_from_curvature

KIND_LINEAR = "linear"
KIND_X_DIAGONAL = "x_diagonal"
BOUND_INFLATION = 1.1
FEASIBILITY_TOL = 1e-6


class InfeasibleBoundError(ValueError):
    """Kinetic-energy bound admits no density on the given grid."""


@dataclass(frozen=True)
class PositionGrid:
    """Uniform symmetric grid x_i in ground-state widths."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.size < 5:
            raise ValueError("grid needs at least 5 points")
        h = pts[1] - pts[0]
        if not np.allclose(np.diff(pts), h, rtol=0, atol=1e-9 * abs(h)):
            raise ValueError("grid must be uniformly spaced")
        object.__setattr__(self, "points", pts)

    @classmethod
    def symmetric(cls, extent: float, spacing: float = 0.1) -> "PositionGrid":
        n = int(round(extent / spacing))
        return cls(np.arange(-n, n + 1) * spacing)

    @property
    def spacing(self) -> float:
        return float(self.points[1] - self.points[0])

    @property
    def extent(self) -> float:
        return float(self.points[-1])

    @property
    def is_symmetric(self) -> bool:
        return bool(np.allclose(self.points, -self.points[::-1], atol=1e-12))


@dataclass(frozen=True)
class ForwardModel:
    """Kernels mapping grid densities to predicted cos/sin components."""

    kind: str
    k: np.ndarray
    grid: PositionGrid
    ccos: np.ndarray
    csin: np.ndarray
    eta: float


def kernel_positions(x: np.ndarray, kind: str, eta: float) -> np.ndarray:
    """Effective position g(x) entering the probe phase for each model."""
    if kind == KIND_LINEAR:
        return x
    if kind == KIND_X_DIAGONAL:
        if not 0.0 < eta < 1.0:
            raise ValueError(f"x_diagonal kernel requires 0 < eta < 1, got {eta}")
        return x * (1.0 - (eta ** 2 / 8.0) * (x ** 2 + 1.0))
    raise ValueError(f"unknown forward-model kind {kind!r}")


def build_forward_model(k_grid, grid: PositionGrid, kind: str = KIND_LINEAR,
                        eta: float = 0.06) -> ForwardModel:
    """Riemann-sum kernels Ccos[j,i] = cos(k_j g(x_i)) h and the sin analog."""
    k = np.atleast_1d(np.asarray(k_grid, dtype=float))
    g = kernel_positions(grid.points, kind, eta)
    phase = np.outer(k, g)
    h = grid.spacing
    return ForwardModel(kind=kind, k=k, grid=grid,
                        ccos=np.cos(phase) * h, csin=np.sin(phase) * h, eta=eta)


def fisher_floor(spacing: float) -> float:
    return 1e-10 / spacing


def fisher_functional(p: np.ndarray, spacing: float) -> float:
    """Discretized integral of p'(x)^2 / p(x) (central differences)."""
    eps = fisher_floor(spacing)
    d = (p[2:] - p[:-2]) / (2.0 * spacing)
    return float(np.sum(d ** 2 / np.maximum(p[1:-1], eps)) * spacing)


def _fisher_gradient(p: np.ndarray, spacing: float) -> np.ndarray:
    eps = fisher_floor(spacing)
    n = p.size
    d = (p[2:] - p[:-2]) / (2.0 * spacing)
    m = np.maximum(p[1:-1], eps)
    ratio = d / m
    grad = np.zeros(n)
    # d_i depends on p_{i+1} (+) and p_{i-1} (-); i runs over interior 1..n-2
    grad[2:] += ratio
    grad[:-2] -= ratio
    grad[1:-1] -= spacing * ratio ** 2 * (p[1:-1] > eps)
    return grad


def minimum_fisher(grid: PositionGrid) -> float:
    """Smallest continuum Fisher value on the grid interval, 4 pi^2 / L^2."""
    length = grid.points[-1] - grid.points[0]
    return float(4.0 * np.pi ** 2 / length ** 2)


def project_simplex(v: np.ndarray, total: float) -> np.ndarray:
    """Euclidean projection onto {p >= 0, sum p = total}."""
    if not np.all(np.isfinite(v)):
        raise FloatingPointError("simplex projection received non-finite values")
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - total
    idx = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / idx > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


@dataclass(frozen=True)
class DensityEstimate:
    grid: PositionGrid
    density: np.ndarray
    objective: float
    fisher: float
    converged: bool
    iterations: int
    multiplier: float = 0.0
    odd_residual: float | None = None


def estimate_kinetic_bound(p_scan: ProbeScan) -> float:
    """<pi^2> bound from a momentum-axis scan, inflated by 10% for safety."""
    if p_scan.axis != "p":
        raise ValueError("kinetic bound requires a momentum-axis scan")
    width = width_from_curvature(p_scan)
    return BOUND_INFLATION * (width.w / 2.0) ** 2


class _Problem:
    """Least-squares data plus projection used by the inner solver."""

    def __init__(self, a: np.ndarray, b: np.ndarray, spacing: float, even: bool):
        self.a = a
        self.b = b
        self.spacing = spacing
        self.even = even
        self.mass = 1.0 / spacing
        self.lipschitz = 2.0 * np.linalg.norm(a, 2) ** 2

    def lsq(self, p: np.ndarray) -> float:
        r = self.a @ p - self.b
        return float(r @ r)

    def lsq_grad(self, p: np.ndarray) -> np.ndarray:
        return 2.0 * (self.a.T @ (self.a @ p - self.b))

    def project(self, p: np.ndarray) -> np.ndarray:
        if self.even:
            p = 0.5 * (p + p[::-1])
        return project_simplex(p, self.mass)


def _solve_penalized(prob: _Problem, lam: float, p0: np.ndarray,
                     max_iter: int, tol: float) -> tuple[np.ndarray, int]:
    """Accelerated projected gradient (FISTA with restart) on lsq + lam * fisher.

    Backtracks the local Lipschitz estimate, keeps the best iterate, and
    treats non-finite objective values as rejected steps (the Fisher term
    diverges on densities with holes next to mass, which a monotone descent
    from a smooth start never visits).
    """
    h = prob.spacing

    def value(p):
        v = prob.lsq(p) + (lam * fisher_functional(p, h) if lam > 0.0 else 0.0)
        return v if np.isfinite(v) else np.inf

    def grad(p):
        g = prob.lsq_grad(p)
        if lam > 0.0:
            g = g + lam * _fisher_gradient(p, h)
        return g

    p = prob.project(np.array(p0, dtype=float))
    f = value(p)
    best_p, best_f = p, f
    lip = prob.lipschitz
    t_mom = 1.0
    p_prev = p
    stall = 0
    it = 0

    def descend(base, f_base, g_base):
        nonlocal lip
        for _ in range(80):
            cand = prob.project(base - g_base / lip)
            step = cand - base
            f_cand = value(cand)
            if np.isfinite(f_cand) and f_cand <= f_base + g_base @ step + 0.5 * lip * step @ step + 1e-15:
                return cand, f_cand
            lip *= 2.0
        return None, None

    for it in range(1, max_iter + 1):
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_mom ** 2))
        y = p + ((t_mom - 1.0) / t_next) * (p - p_prev)
        cand, f_cand = descend(y, value(y), grad(y))
        if cand is None:
            break
        if f_cand > f:           # restart the momentum when descent is lost
            t_next = 1.0
            cand, f_cand = descend(p, f, grad(p))
            if cand is None:
                break
        p_prev, p, f = p, cand, f_cand
        t_mom = t_next
        if f < best_f - tol * max(1.0, abs(best_f)):
            best_p, best_f = p, f
            stall = 0
        else:
            if f < best_f:
                best_p, best_f = p, f
            stall += 1
            if stall >= 30:
                break
        lip = max(1e-3 * prob.lipschitz, lip * 0.9)
    return best_p, it


def _mix_to_boundary(p_feas: np.ndarray, p_better: np.ndarray, bound: float,
                     spacing: float) -> np.ndarray:
    """Best feasible convex combination of a feasible and an infeasible point.

    F is convex along the segment, so the largest admissible weight on the
    lower-objective (infeasible) end is found by bisection; the result can
    only improve the convex objective over p_feas.
    """
    if fisher_functional(p_better, spacing) <= bound:
        return p_better
    lo, hi = 0.0, 1.0
    for _ in range(50):
        mid = 0.5 * (lo + hi)
        if fisher_functional((1 - mid) * p_feas + mid * p_better, spacing) <= bound:
            lo = mid
        else:
            hi = mid
    return (1 - lo) * p_feas + lo * p_better


def _polish_support(prob: _Problem, p: np.ndarray) -> np.ndarray | None:
    """Exact KKT solve of the equality-constrained LSQ on the active support.

    Entries that come out negative are clamped out and the solve repeats
    (shrinking support, as in classic NNLS), so the polished density is an
    exact stationary point of the restricted problem.
    """
    free = p > 1e-12
    if prob.even:
        free = free | free[::-1]
    if not free.any() or free.sum() > 2000:
        return None
    for _ in range(60):
        nf = int(np.count_nonzero(free))
        if nf == 0:
            return None
        af = prob.a[:, free]
        gmat = 2.0 * (af.T @ af)
        gmat[np.diag_indices_from(gmat)] += 1e-13 * max(1.0, np.trace(gmat) / nf)
        ones = np.full(nf, prob.spacing)
        kkt = np.block([[gmat, ones[:, None]], [ones[None, :], np.zeros((1, 1))]])
        rhs = np.concatenate([2.0 * (af.T @ prob.b), [1.0]])
        try:
            sol = np.linalg.solve(kkt, rhs)
        except np.linalg.LinAlgError:
            return None
        q = sol[:nf]
        if np.all(q >= -1e-10):
            out = np.zeros_like(p)
            out[free] = np.maximum(q, 0.0)
            return prob.project(out)
        drop = np.where(free)[0][q < -1e-10]
        free[drop] = False
        if prob.even:
            free[p.size - 1 - drop] = False
    return None


def reconstruct_density(model: ForwardModel, c_values, s_values=None,
                        kinetic_bound: float | None = None,
                        even_only: bool | None = None,
                        weights=None,
                        max_iter: int = 20000, tol: float = 1e-11) -> DensityEstimate:
    """Constrained least-squares density estimate.

    c_values are the measured cosine components on model.k; s_values the
    sine components or None, in which case the solution is constrained to
    be even (reconstructing the symmetric part). kinetic_bound is <pi^2>;
    the Fisher functional of the result is kept below 4 times it. weights
    optionally scales the residual rows (e.g. inverse shot-noise sigma).
    """
    c = np.asarray(c_values, dtype=float)
    if c.shape != model.k.shape:
        raise ValueError("c_values must match the model's k grid")
    if even_only is None:
        even_only = s_values is None
    if even_only and not model.grid.is_symmetric:
        raise ValueError("even-only reconstruction needs a symmetric grid")
    rows = [model.ccos]
    data = [c]
    odd_residual = None
    if s_values is not None:
        s = np.asarray(s_values, dtype=float)
        if s.shape != model.k.shape:
            raise ValueError("s_values must match the model's k grid")
        if even_only:
            odd_residual = float(np.linalg.norm(s))
        else:
            rows.append(model.csin)
            data.append(s)
    a = np.vstack(rows)
    b = np.concatenate(data)
    if weights is not None:
        wts = np.asarray(weights, dtype=float)
        if wts.size != b.size:
            raise ValueError("weights must match the stacked residual rows")
        if np.any(wts <= 0):
            raise ValueError("weights must be positive")
        wts = np.sqrt(wts / wts.mean())   # only relative weights matter
        a = a * wts[:, None]
        b = b * wts

    h = model.grid.spacing
    bound = None
    if kinetic_bound is not None:
        bound = 4.0 * float(kinetic_bound)
        if bound < minimum_fisher(model.grid) * (1.0 - 1e-9):
            raise InfeasibleBoundError(
                f"Fisher bound {bound:.4g} below the grid minimum "
                f"{minimum_fisher(model.grid):.4g}; no density is feasible"
            )

    prob = _Problem(a, b, h, even_only)
    n = model.grid.points.size
    p0 = np.full(n, 1.0 / (n * h))
    total_iter = 0

    # alternate accelerated descent with exact stationary solves on the
    # current support until neither improves the least-squares value
    p, it = _solve_penalized(prob, 0.0, p0, max_iter, tol)
    total_iter += it
    converged = it < max_iter
    if bound is None or fisher_functional(p, h) <= bound + FEASIBILITY_TOL:
        for _ in range(5):
            improved = False
            polished = _polish_support(prob, p)
            if polished is not None and prob.lsq(polished) < prob.lsq(p) - 1e-15:
                if bound is None or fisher_functional(polished, h) <= bound + FEASIBILITY_TOL:
                    p = polished
                    improved = True
            p_next, it = _solve_penalized(prob, 0.0, p, 2000, tol)
            total_iter += it
            if prob.lsq(p_next) < prob.lsq(p) - tol * max(1.0, prob.lsq(p)):
                p = p_next
                improved = True
            if not improved:
                break
    else:
        polished = _polish_support(prob, p)
        if (polished is not None and prob.lsq(polished) <= prob.lsq(p)
                and fisher_functional(polished, h) <= bound + FEASIBILITY_TOL):
            p = polished
    lam = 0.0

    if bound is not None and fisher_functional(p, h) > bound + FEASIBILITY_TOL:
        # enforce the constraint through its multiplier: F(p(lam)) decreases
        # monotonically in lam, so bracket and bisect. Penalized solves start
        # from the smooth uniform density: monotone descent then keeps
        # lam * F bounded by the start value and never walks into the 1/p
        # cliff that spiky warm starts would create.
        inner_iter = min(max_iter, max(4000, 20 * n))   # larger grids need more
        p_unif = prob.project(np.full(n, 1.0 / (n * h)))
        base = max(prob.lsq(p_unif), 1e-10)
        lam_lo, lam_hi = 0.0, 0.1 * base / max(bound, 1e-12)
        p_hi, it = _solve_penalized(prob, lam_hi, p_unif, inner_iter, tol)
        total_iter += it
        for _ in range(60):
            if fisher_functional(p_hi, h) <= bound:
                break
            lam_lo = lam_hi
            lam_hi *= 4.0
            p_hi, it = _solve_penalized(prob, lam_hi, p_unif, inner_iter, tol)
            total_iter += it
        if fisher_functional(p_hi, h) > bound:
            raise InfeasibleBoundError("could not satisfy the Fisher bound")
        p_feas, lam = p_hi, lam_hi
        for _ in range(30):
            if fisher_functional(p_feas, h) >= bound * 0.95:
                break
            if lam_hi <= lam_lo * 1.05 + 1e-300:
                break
            lam_mid = 0.5 * (lam_lo + lam_hi) if lam_lo > 0 else 0.25 * lam_hi
            # smooth fixed starts keep the inner solves comparable across
            # multipliers; warm starts can report stale Fisher values
            p_mid, it = _solve_penalized(prob, lam_mid, p_unif, inner_iter, tol)
            total_iter += it
            if fisher_functional(p_mid, h) <= bound:
                lam_hi, p_feas, lam = lam_mid, p_mid, lam_mid
            else:
                lam_lo = lam_mid
                mixed = _mix_to_boundary(p_feas, p_mid, bound, h)
                if prob.lsq(mixed) < prob.lsq(p_feas):
                    p_feas = mixed
        p, it = _solve_penalized(prob, lam, p_feas, max_iter, tol)
        total_iter += it
        if fisher_functional(p, h) > bound + FEASIBILITY_TOL:
            p = _mix_to_boundary(p_feas, p, bound, h)
            if prob.lsq(p) > prob.lsq(p_feas):
                p = p_feas
        # complementary slackness: anneal the multiplier toward zero for as
        # long as that keeps the iterate feasible and still pays off in the
        # least-squares value (F proximity alone cannot tell an active
        # bound from a slack one)
        for _ in range(20):
            if lam <= 0.0:
                break
            lam_try = lam / 8.0
            p_try, it = _solve_penalized(prob, lam_try, p, inner_iter, tol)
            total_iter += it
            if fisher_functional(p_try, h) > bound + FEASIBILITY_TOL:
                # ride the segment back to the constraint boundary; any
                # remaining improvement of the infeasible point is convex-
                # combinable into the feasible iterate
                mixed = _mix_to_boundary(p, p_try, bound, h)
                if prob.lsq(mixed) < prob.lsq(p):
                    p = mixed
                break
            gain = prob.lsq(p) - prob.lsq(p_try)
            p, lam = p_try, lam_try
            if gain <= tol * max(1.0, prob.lsq(p)):
                break
        # an exact stationary solve on the final support recovers the
        # unconstrained optimum whenever that optimum is itself feasible
        polished = _polish_support(prob, p)
        if (polished is not None and prob.lsq(polished) < prob.lsq(p)
                and fisher_functional(polished, h) <= bound + FEASIBILITY_TOL):
            p = polished

    p = np.maximum(p, 0.0)
    p = p / (p.sum() * h)
    fisher = fisher_functional(p, h)
    if bound is not None and fisher > bound + FEASIBILITY_TOL:
        raise RuntimeError("solver returned an infeasible density")
    return DensityEstimate(grid=model.grid, density=p, objective=prob.lsq(p),
                           fisher=fisher, converged=converged,
                           iterations=total_iter, multiplier=lam,
                           odd_residual=odd_residual)


def _kkt_on_support(a: np.ndarray, b: np.ndarray, spacing: float,
                    free: np.ndarray) -> tuple[np.ndarray, float, np.ndarray]:
    """Equality-constrained LSQ on a support, shrinking out negative entries."""
    m = a.shape[1]
    free = free.copy()
    for _ in range(m + 1):
        nf = int(np.count_nonzero(free))
        if nf == 0:
            raise RuntimeError("active-set support collapsed")
        af = a[:, free]
        gmat = 2.0 * (af.T @ af)
        gmat[np.diag_indices_from(gmat)] += 1e-13 * max(1.0, np.trace(gmat) / nf)
        ones = np.full(nf, spacing)
        kkt = np.block([[gmat, ones[:, None]], [ones[None, :], np.zeros((1, 1))]])
        rhs = np.concatenate([2.0 * (af.T @ b), [1.0]])
        sol = np.linalg.solve(kkt, rhs)
        q = sol[:nf]
        if np.all(q >= -1e-11):
            p = np.zeros(m)
            p[free] = np.maximum(q, 0.0)
            return p, float(sol[nf]), free
        drop = np.where(free)[0][q < -1e-11]
        free[drop] = False
    raise RuntimeError("active-set shrink did not terminate")


def solve_qp_active_set(a: np.ndarray, b: np.ndarray, spacing: float,
                        max_iter: int | None = None) -> np.ndarray:
    """Active-set solve of min ||Ap - b||^2, p >= 0, spacing * sum(p) = 1.

    Independent small-grid oracle for certifying the projected-gradient
    solver. A Lawson-Hanson nonnegative least squares pass (with the
    normalization embedded as a heavily weighted row) proposes the active
    set; exact KKT solves on the support plus multiplier-driven releases
    then finish the constrained problem to machine accuracy.
    """
    from scipy.optimize import nnls

    m = a.shape[1]
    if max_iter is None:
        max_iter = 20 * m
    penalty = 100.0 * max(1.0, float(np.abs(a).max())) / spacing
    a_aug = np.vstack([a, penalty * spacing * np.ones(m)])
    b_aug = np.concatenate([b, [penalty]])
    p0, _ = nnls(a_aug, b_aug, maxiter=max(300, 30 * m))
    free = p0 > 1e-12
    if not free.any():
        free[:] = True
    gfull = 2.0 * (a.T @ a)
    cvec = -2.0 * (a.T @ b)
    grad_scale = 1.0 + float(np.abs(cvec).max())

    def objective(p):
        r = a @ p - b
        return float(r @ r)

    p, nu, free = _kkt_on_support(a, b, spacing, free)
    best = objective(p)
    for _ in range(max_iter):
        mu = (gfull @ p + cvec) - nu * spacing
        clamped = np.where(~free)[0]
        if clamped.size == 0 or float(np.min(mu[clamped])) >= -1e-9 * grad_scale:
            return p
        trial = free.copy()
        trial[clamped[np.argmin(mu[clamped])]] = True
        p_new, nu_new, free_new = _kkt_on_support(a, b, spacing, trial)
        obj_new = objective(p_new)
        # the cosine kernel makes mirrored grid points exactly degenerate;
        # once releases stop paying off we are at (numerical) optimality
        if obj_new >= best - 1e-14 * max(1.0, best):
            return p
        p, nu, free, best = p_new, nu_new, free_new, obj_new
    raise RuntimeError("active-set solver did not converge")
