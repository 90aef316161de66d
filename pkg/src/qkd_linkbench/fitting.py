"""Deterministic nonlinear least squares and the QBER-curve extraction.

The solver is a damped Gauss-Newton (Levenberg-Marquardt) descent with a
centrally-differenced Jacobian and bounds enforced by projection.  All
schedule constants are fixed module-level values, so a given problem runs
through an identical sequence of floating-point operations every time and
the result is reproducible bit-for-bit.  A brute-force grid minimizer is
provided as an independent cross-check for low-dimensional problems.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "FitProblem",
    "FitResult",
    "least_squares",
    "grid_oracle",
    "fit_qber_curve",
    "poisson_weights",
]

# Fixed solver schedule; determinism beats adaptivity here.
FD_REL_STEP = 1e-6      # central-difference step, relative to |p| + FD_ABS_FLOOR
FD_ABS_FLOOR = 1e-9
LAMBDA_INIT = 1e-3
LAMBDA_UP = 10.0
LAMBDA_DOWN = 3.0
LAMBDA_MAX = 1e12
LAMBDA_MIN = 1e-14


@dataclass(frozen=True)
class FitProblem:
    """Weighted least-squares problem min sum w * (model(p, x) - y)^2.

    ``model`` maps (params, x_array) to predicted y values; bounds default
    to unconstrained.  Weights default to 1.
    """

    model: Callable[[np.ndarray, np.ndarray], np.ndarray]
    x: np.ndarray
    y: np.ndarray
    initial: np.ndarray
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    weights: np.ndarray | None = None

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        p0 = np.asarray(self.initial, dtype=float)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "initial", p0)
        lo = np.full(p0.shape, -np.inf) if self.lower is None else np.asarray(self.lower, float)
        hi = np.full(p0.shape, np.inf) if self.upper is None else np.asarray(self.upper, float)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        w = np.ones_like(y) if self.weights is None else np.asarray(self.weights, float)
        object.__setattr__(self, "weights", w)
        if y.shape != x.shape[:1] and y.shape != x.shape:
            # x may carry extra per-point structure; only the leading length must agree
            if len(y) != len(x):
                raise ValueError("x and y must have the same number of points")
        if len(y) < len(p0):
            raise ValueError("need at least as many data points as parameters")
        if np.any(lo > hi):
            raise ValueError("lower bound exceeds upper bound")
        if np.any(p0 < lo) or np.any(p0 > hi):
            raise ValueError("initial guess violates bounds")
        if np.any(w < 0.0):
            raise ValueError("weights must be non-negative")


@dataclass
class FitResult:
    """Parameter estimates with asymptotic 1-sigma uncertainties.

    ``sigma`` comes from the diagonal of the inverse approximate Hessian
    scaled by the residual variance; ``residual_norm`` is the weighted
    2-norm of the residual at the optimum.
    """

    params: np.ndarray
    sigma: np.ndarray
    residual_norm: float
    converged: bool
    iterations: int
    param_names: tuple[str, ...] | None = None

    def as_dict(self) -> dict[str, float]:
        if self.param_names is None:
            raise ValueError("fit result carries no parameter names")
        return dict(zip(self.param_names, map(float, self.params)))

    def __getitem__(self, name: str) -> float:
        return self.as_dict()[name]


def poisson_weights(counts: np.ndarray) -> np.ndarray:
    """1/max(y, 1) weights for histogram counts."""
    return 1.0 / np.maximum(np.asarray(counts, dtype=float), 1.0)


def _residual(problem: FitProblem, p: np.ndarray, sqrt_w: np.ndarray) -> np.ndarray:
    return sqrt_w * (np.asarray(problem.model(p, problem.x), dtype=float) - problem.y)


def _jacobian(problem: FitProblem, p: np.ndarray, sqrt_w: np.ndarray) -> np.ndarray:
    """Central finite differences, one column per parameter."""
    n_par = len(p)
    cols = []
    for j in range(n_par):
        h = FD_REL_STEP * (abs(p[j]) + FD_ABS_FLOOR)
        pp = p.copy()
        pm = p.copy()
        pp[j] += h
        pm[j] -= h
        cols.append((_residual(problem, pp, sqrt_w) - _residual(problem, pm, sqrt_w)) / (2.0 * h))
    return np.column_stack(cols)


def least_squares(problem: FitProblem, tol: float = 1e-10, max_iter: int = 200) -> FitResult:
    """Minimize the weighted residual; never raises on non-convergence.

    Steps solve (J'J + lambda diag(J'J)) d = -J'r and are accepted only if
    the cost decreases, so the residual is monotone non-increasing over
    accepted iterations.  Terminates when the relative accepted step drops
    below ``tol`` or after ``max_iter`` accepted iterations.
    """
    sqrt_w = np.sqrt(problem.weights)
    p = problem.initial.astype(float).copy()
    r = _residual(problem, p, sqrt_w)
    cost = float(r @ r)
    lam = LAMBDA_INIT
    converged = cost == 0.0
    iterations = 0

    while not converged and iterations < max_iter:
        jac = _jacobian(problem, p, sqrt_w)
        jtj = jac.T @ jac
        jtr = jac.T @ r
        accepted = False
        while lam <= LAMBDA_MAX:
            damped = jtj + lam * np.diag(np.maximum(np.diag(jtj), 1e-30))
            try:
                step = np.linalg.solve(damped, -jtr)
            except np.linalg.LinAlgError:
                step = np.linalg.lstsq(damped, -jtr, rcond=None)[0]
            candidate = np.clip(p + step, problem.lower, problem.upper)
            rel_step = float(np.linalg.norm(candidate - p)) / (float(np.linalg.norm(p)) + 1e-300)
            r_new = _residual(problem, candidate, sqrt_w)
            cost_new = float(r_new @ r_new)
            if cost_new < cost:
                p, r, cost = candidate, r_new, cost_new
                lam = max(lam / LAMBDA_DOWN, LAMBDA_MIN)
                accepted = True
                iterations += 1
                if rel_step < tol or cost == 0.0:
                    converged = True
                break
            if rel_step < tol:
                # No movement possible within parameter resolution (e.g.
                # pinned at a bound): the iterate is terminal.
                converged = True
                break
            lam *= LAMBDA_UP
        if not accepted:
            break

    sigma = _param_sigma(problem, p, r, sqrt_w)
    return FitResult(p, sigma, math.sqrt(cost), converged, iterations)


def _param_sigma(problem, p, r, sqrt_w) -> np.ndarray:
    n, k = len(problem.y), len(p)
    jac = _jacobian(problem, p, sqrt_w)
    try:
        cov = np.linalg.pinv(jac.T @ jac)
    except np.linalg.LinAlgError:
        return np.full(k, np.nan)
    dof = max(n - k, 1)
    s2 = float(r @ r) / dof
    return np.sqrt(np.clip(np.diag(cov) * s2, 0.0, None))


def grid_oracle(problem: FitProblem, grid_resolution: int = 41) -> np.ndarray:
    """Exhaustive minimization over a regular grid spanning the bounds.

    A validation oracle: the solver's residual must not exceed the best
    grid residual (up to grid spacing).  Limited to three parameters.
    """
    k = len(problem.initial)
    if k > 3:
        raise ValueError(f"grid oracle supports at most 3 parameters, got {k}")
    if not (np.all(np.isfinite(problem.lower)) and np.all(np.isfinite(problem.upper))):
        raise ValueError("grid oracle requires finite bounds")
    axes = [np.linspace(problem.lower[j], problem.upper[j], grid_resolution) for j in range(k)]
    sqrt_w = np.sqrt(problem.weights)
    best_cost = math.inf
    best = problem.initial.copy()
    for combo in itertools.product(*axes):
        p = np.array(combo, dtype=float)
        r = _residual(problem, p, sqrt_w)
        cost = float(r @ r)
        if cost < best_cost:
            best_cost = cost
            best = p
    return best


def fit_qber_curve(
    points: np.ndarray,
    source_kind: str,
    mu: float,
    eta_bob: float = 1.0,
    weights: np.ndarray | None = None,
) -> FitResult:
    """Extract (p_dark, e_det) from QBER-vs-loss data.

    ``points`` is an (n, 2) array of (loss_db, qber) with the mean photon
    number supplied as a known constant; ``eta_bob`` converts the dB axis
    from channel loss to total transmittance (leave at 1.0 when the axis
    already is total loss).  Requires at least one point at >= 20 dB where
    the dark-count term is visible.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("points must be an (n, 2) array of (loss_db, qber)")
    loss_db, qber = pts[:, 0], pts[:, 1]
    if len(loss_db) < 3:
        raise ValueError("need at least 3 loss points")
    if loss_db.max() < 20.0:
        raise ValueError("need at least one point at >= 20 dB loss")
    if source_kind not in ("sps", "wcp"):
        raise ValueError(f"source_kind must be 'sps' or 'wcp', got {source_kind!r}")

    def signal(eta):
        return eta * mu if source_kind == "sps" else -np.expm1(-eta * mu)

    def model(params, x):
        p_dark, e_det = params
        s = signal(eta_bob * 10.0 ** (-x / 10.0))
        return (0.5 * p_dark + e_det * s) / (p_dark + s)

    # Data-derived starting point: the low-loss end pins e_det, the
    # highest-loss point then pins p_dark through the dark-count excess.
    e0 = float(np.clip(qber.min(), 1e-6, 0.49))
    i_hi = int(np.argmax(loss_db))
    s_hi = signal(eta_bob * 10.0 ** (-loss_db[i_hi] / 10.0))
    q_hi = min(qber[i_hi], 0.499)
    p0 = float(np.clip(s_hi * (q_hi - e0) / (0.5 - q_hi), 1e-12, 1e-2))

    problem = FitProblem(
        model=model,
        x=loss_db,
        y=qber,
        initial=np.array([p0, e0]),
        lower=np.array([0.0, 0.0]),
        upper=np.array([1e-2, 0.5]),
        weights=weights,
    )
    result = least_squares(problem)
    result.param_names = ("p_dark", "e_det")
    return result
