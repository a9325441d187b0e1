"""
Ball-constrained weighted linear least squares

    argmin ||J qdot - target||^2_W   s.t.   ||qdot|| <= max_norm

The problem is a trust-region subproblem with a convex objective. The normal
matrix H = J^T W J is eigendecomposed once; the unconstrained (lightly
regularised) minimiser is tried first and, when it leaves the ball, the
Lagrange multiplier is found by bisection on the secular equation
||qdot(lambda)|| = max_norm.
"""

import logging
from typing import NamedTuple, Optional, Tuple

import numpy as np

from .errors import ConfigError, DimensionError
from .models import WeightedLeastSquaresProblem

logger = logging.getLogger(__name__)

REGULARIZATION_SCALE = 1e-10
BISECTION_RTOL = 1e-10
BISECTION_MAX_ITER = 200


class KKTTerms(NamedTuple):
    stationarity: float
    feasibility: float
    complementarity: float
    multiplier: float


def normal_equations(problem: WeightedLeastSquaresProblem) -> Tuple[np.ndarray, np.ndarray]:
    """Return H = J^T W J and g = J^T W target"""
    w = problem.row_weights()
    weighted_J = problem.J * w[:, None]
    return problem.J.T @ weighted_J, weighted_J.T @ problem.target


def minimal_regularization(H: np.ndarray) -> float:
    n = H.shape[0]
    return REGULARIZATION_SCALE * float(np.trace(H)) / n if n else 0.0


class SpectralForm(NamedTuple):
    """Eigendecomposition of a normal matrix, reusable across right-hand sides"""
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    lam_min: float

    @classmethod
    def of(cls, H: np.ndarray) -> "SpectralForm":
        eigenvalues, eigenvectors = np.linalg.eigh(0.5 * (H + H.T))
        return cls(np.clip(eigenvalues, 0.0, None), eigenvectors, minimal_regularization(H))


def solve_spectral(form: SpectralForm, g: np.ndarray, max_norm: float) -> Tuple[np.ndarray, float]:
    """Solve the ball-constrained problem for gradient term g

    Returns the minimiser and the multiplier lambda that produced it. The
    multiplier is bracketed and bisected; a Newton step on 1/||qdot(lambda)||
    replaces the midpoint whenever it lands strictly inside the bracket.
    """
    n = form.eigenvalues.size
    if n == 0:
        return np.zeros(0), 0.0
    if form.lam_min <= 0.0 or not np.any(g):
        # H == 0 or g == 0: the objective is flat along every feasible direction
        return np.zeros(n), 0.0

    b = form.eigenvectors.T @ g
    b2 = b * b

    def step_norm(lam: float) -> float:
        return float(np.sqrt(np.sum(b2 / (form.eigenvalues + lam) ** 2)))

    lam_min = form.lam_min
    if step_norm(lam_min) <= max_norm:
        return form.eigenvectors @ (b / (form.eigenvalues + lam_min)), lam_min

    lo = lam_min
    hi = max(float(np.linalg.norm(g)) / max_norm, lam_min)
    while step_norm(hi) > max_norm:
        hi *= 2.0
    lam = hi
    for _ in range(BISECTION_MAX_ITER):
        norm = step_norm(lam)
        gap = norm - max_norm
        if abs(gap) < BISECTION_RTOL * max_norm:
            break
        if gap > 0:
            lo = lam
        else:
            hi = lam
        derivative = float(np.sum(b2 / (form.eigenvalues + lam) ** 3)) / norm ** 3
        candidate = lam - (1.0 / norm - 1.0 / max_norm) / derivative if derivative > 0 else lo
        lam = candidate if lo < candidate < hi else 0.5 * (lo + hi)
    qdot = form.eigenvectors @ (b / (form.eigenvalues + lam))
    norm = float(np.linalg.norm(qdot))
    if norm > 0:
        qdot *= max_norm / norm
    return qdot, lam


def solve_normal_form(H: np.ndarray, g: np.ndarray, max_norm: float) -> Tuple[np.ndarray, float]:
    """Solve the ball-constrained problem given its normal matrix and gradient term"""
    if H.shape[0] == 0:
        return np.zeros(0), 0.0
    return solve_spectral(SpectralForm.of(H), g, max_norm)


def solve_ball_constrained_wls(problem: WeightedLeastSquaresProblem,
                               metric: Optional[np.ndarray] = None) -> np.ndarray:
    """Minimise the weighted residual inside the ball ||qdot|| <= max_norm

    ``metric`` optionally replaces the Euclidean ball with the ellipsoid
    qdot^T diag(metric) qdot <= max_norm^2; every entry must be positive.
    """
    if metric is None:
        H, g = normal_equations(problem)
        qdot, lam = solve_normal_form(H, g, problem.max_norm)
        logger.debug(f"WLS solved: n={qdot.size} lambda={lam:.3e} |qdot|={np.linalg.norm(qdot):.4g}")
        return qdot

    metric = np.asarray(metric, dtype=float).reshape(-1)
    if metric.size != problem.J.shape[1]:
        raise DimensionError(f"metric has {metric.size} entries for {problem.J.shape[1]} unknowns")
    if np.any(metric <= 0):
        raise ConfigError("a metric-scaled command norm needs a strictly positive metric (c > 0)")
    scale = 1.0 / np.sqrt(metric)
    scaled = WeightedLeastSquaresProblem(problem.J * scale[None, :], problem.target,
                                         problem.weights, problem.max_norm, problem.block_size)
    return solve_ball_constrained_wls(scaled) * scale


def kkt_terms(problem: WeightedLeastSquaresProblem, qdot: np.ndarray) -> KKTTerms:
    qdot = np.asarray(qdot, dtype=float).reshape(-1)
    if qdot.size != problem.J.shape[1]:
        raise DimensionError(f"qdot has {qdot.size} entries, J has {problem.J.shape[1]} columns")
    w = problem.row_weights()
    gradient = problem.J.T @ (w * (problem.J @ qdot - problem.target))
    qq = float(qdot @ qdot)
    lam = max(-float(qdot @ gradient) / qq, 0.0) if qq > 0 else 0.0
    norm = float(np.sqrt(qq))
    return KKTTerms(
        stationarity=float(np.max(np.abs(gradient + lam * qdot))) if gradient.size else 0.0,
        feasibility=max(0.0, norm - problem.max_norm),
        complementarity=abs(lam * (norm - problem.max_norm)),
        multiplier=lam,
    )


def kkt_residual(problem: WeightedLeastSquaresProblem, qdot: np.ndarray) -> float:
    terms = kkt_terms(problem, qdot)
    return max(terms.stationarity, terms.feasibility, terms.complementarity)


def objective(problem: WeightedLeastSquaresProblem, qdot: np.ndarray) -> float:
    residual = problem.J @ np.asarray(qdot, dtype=float) - problem.target
    return float(np.sum(problem.row_weights() * residual ** 2))
