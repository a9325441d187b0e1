"""
Embedded invariant suite

Each invariant is a small randomized check over the library's own
operations. ``run_selftest`` can inject a known fault first, so that the
suite itself is shown to catch breakage.
"""

import logging
from contextlib import ExitStack
from dataclasses import dataclass
from typing import Any, Callable, ContextManager, Dict, Iterator, List, Optional
from unittest import mock

import numpy as np

from . import solver
from .models import (
    AdaptiveJacobianState,
    DesiredMotion,
    GeodesicDistanceMatrix,
    GripperPose,
    KFMANBState,
    KFMANDBState,
    ObjectState,
    RewardObservation,
    RobotCommand,
    SphereObstacle,
    WeightedLeastSquaresProblem,
)
from .services import bandits
from .services.controller import combine_terms, nullspace_projector, obstacle_repulsion, stretching_correction
from .services.deformation import broyden_update

logger = logging.getLogger(__name__)

SELFTEST_SEED = 12345
CASES = 1000

Check = Callable[[np.random.Generator, int], None]
INVARIANTS: Dict[str, Check] = {}


def invariant(name: str) -> Callable[[Check], Check]:
    def register(check: Check) -> Check:
        INVARIANTS[name] = check
        return check
    return register


@invariant("solver-kkt")
def check_solver_kkt(rng: np.random.Generator, cases: int) -> None:
    for _ in range(cases):
        rows, cols = int(rng.integers(1, 61)), int(rng.integers(1, 13))
        problem = WeightedLeastSquaresProblem(
            rng.normal(size=(rows, cols)), rng.normal(size=rows), rng.uniform(0.1, 2.0, rows),
            float(rng.uniform(0.01, 2.0)), block_size=1,
        )
        qdot = solver.solve_ball_constrained_wls(problem)
        residual = solver.kkt_residual(problem, qdot)
        assert residual < 1e-6, f"KKT residual {residual:.3e}"


@invariant("kf-reduction")
def check_kf_reduction(rng: np.random.Generator, cases: int) -> None:
    M, eta = 4, 0.7
    for _ in range(cases):
        joint = KFMANDBState.initial(M, 0.3, 0.2, xi=0.0)
        joint = KFMANDBState(joint.mean, joint.covariance, 0.3, 0.2, 0.0, eta)
        single = KFMANBState.initial(M, 0.3, 0.2)
        for _ in range(30):
            obs = RewardObservation(int(rng.integers(M)), float(rng.normal()))
            joint = bandits.kfmandb_correct(bandits.kfmandb_predict(joint, np.eye(M)), obs)
            single = bandits.kfmanb_update(single, obs, noise_scale=eta ** 2)
        assert np.max(np.abs(joint.mean - single.means)) < 1e-9, "means diverge"
        assert np.max(np.abs(np.diag(joint.covariance) - single.variances)) < 1e-9, "variances diverge"


@invariant("kf-covariance-pd")
def check_kf_covariance(rng: np.random.Generator, cases: int) -> None:
    M = 5
    state = KFMANDBState.initial(M, 1.0, 1.0, xi=0.9)
    for _ in range(cases):
        commands = rng.normal(size=(M, 6))
        predicted = bandits.kfmandb_predict(state, bandits.vector_similarity_matrix(commands))
        assert np.max(np.abs(predicted.covariance - predicted.covariance.T)) <= 1e-10, "covariance not symmetric"
        state = bandits.kfmandb_correct(predicted, RewardObservation(int(rng.integers(M)), float(rng.normal())))
        assert np.min(np.linalg.eigvalsh(state.covariance)) > 0, "covariance not positive definite"


@invariant("similarity-psd")
def check_similarity(rng: np.random.Generator, cases: int) -> None:
    for _ in range(cases):
        M, G = int(rng.integers(1, 10)), int(rng.integers(1, 3))
        commands = [RobotCommand.from_vector(rng.normal(size=6 * G)) for _ in range(M)]
        sigma = bandits.command_similarity_matrix(commands, float(rng.uniform(0.0, 1.0)))
        assert np.allclose(sigma, sigma.T, atol=1e-12), "similarity not symmetric"
        assert np.allclose(np.diag(sigma), 1.0), "similarity diagonal is not 1"
        assert np.min(np.linalg.eigvalsh(sigma)) >= -1e-10, "similarity not PSD"


@invariant("broyden-identities")
def check_broyden(rng: np.random.Generator, cases: int) -> None:
    for _ in range(cases):
        rows, cols = int(rng.integers(1, 10)), int(rng.integers(1, 6))
        J = rng.normal(size=(rows, cols))
        qdot = rng.normal(size=cols)
        observed = rng.normal(size=rows)
        fitted = broyden_update(AdaptiveJacobianState(J, 1.0), qdot, observed).state
        assert np.max(np.abs(fitted.J_tilde @ qdot - observed)) < 1e-10, "secant condition violated"
        unchanged = broyden_update(AdaptiveJacobianState(J, 0.5), qdot, J @ qdot).state
        assert np.max(np.abs(unchanged.J_tilde - J)) < 1e-10, "zero residual changed the Jacobian"


@invariant("stretching-balance")
def check_stretching(rng: np.random.Generator, cases: int) -> None:
    for _ in range(cases):
        P = int(rng.integers(2, 12))
        points = ObjectState(rng.normal(size=(P, 3)))
        relaxed = np.abs(rng.normal(size=(P, P))) * 0.5
        relaxed = 0.5 * (relaxed + relaxed.T)
        np.fill_diagonal(relaxed, 0.0)
        motion = stretching_correction(GeodesicDistanceMatrix(relaxed), 0.1, points)
        assert np.max(np.abs(motion.per_point().sum(axis=0))) < 1e-12, "stretching forces do not cancel"


@invariant("combine-orthogonality")
def check_combine(rng: np.random.Generator, cases: int) -> None:
    for _ in range(cases):
        P = int(rng.integers(1, 10))
        e = DesiredMotion(rng.normal(size=3 * P), rng.uniform(size=P))
        s = DesiredMotion(rng.normal(size=3 * P), rng.uniform(size=P))
        d = combine_terms(e, s)
        residual = np.sum((d.per_point() - s.per_point()) * s.per_point(), axis=1)
        assert np.max(np.abs(residual)) < 1e-10, "error term not orthogonal to stretching"


@invariant("repulsion-far-field")
def check_repulsion(rng: np.random.Generator, cases: int) -> None:
    beta = 1000.0
    obstacle = SphereObstacle(np.zeros(3), 0.1)
    for _ in range(cases):
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        gripper = GripperPose.at(direction * (0.1 + 100.0 / beta * 10))
        desired = RobotCommand.from_vector(rng.normal(size=6))
        out = obstacle_repulsion(desired, [obstacle], [gripper], beta, 0.2)
        assert np.max(np.abs(out.as_vector() - desired.as_vector())) < 1e-9, "far-field command changed"
        N = nullspace_projector(rng.normal(size=(3, 6)))
        assert np.max(np.abs(N @ N - N)) < 1e-10, "nullspace projector not idempotent"


# ---------------------------------------------------------------------------
# Fault injection
# ---------------------------------------------------------------------------

def _asymmetric_predict(original: Callable) -> Callable:
    def corrupted(state: KFMANDBState, similarity: np.ndarray) -> KFMANDBState:
        result = original(state, similarity)
        skew = np.triu(np.full_like(result.covariance, 1e-3), k=1)
        return KFMANDBState(result.mean, result.covariance + skew, result.sigma_tr_sq,
                            result.sigma_obs_sq, result.xi, result.eta)
    return corrupted


def _scaled_broyden(original: Callable) -> Callable:
    def corrupted(state: AdaptiveJacobianState, qdot: np.ndarray, observed: np.ndarray):
        return original(state, 0.5 * np.asarray(qdot), observed)
    return corrupted


FAULTS: Dict[str, Callable[[], ContextManager[Any]]] = {
    "kf-asymmetry": lambda: mock.patch.object(
        bandits, "kfmandb_predict", _asymmetric_predict(bandits.kfmandb_predict)),
    "broyden-scale": lambda: mock.patch(
        f"{__name__}.broyden_update", _scaled_broyden(broyden_update)),
}


@dataclass
class InvariantResult:
    name: str
    passed: bool
    message: str = ""


def iter_selftest(inject: Optional[str] = None, seed: int = SELFTEST_SEED,
                  cases: int = CASES) -> Iterator[InvariantResult]:
    if cases < 1:
        raise ValueError(f"cases must be positive, got {cases}")
    if inject is not None and inject not in FAULTS:
        raise KeyError(f"unknown fault '{inject}' (choose from {', '.join(FAULTS)})")
    with ExitStack() as stack:
        if inject is not None:
            logger.warning(f"Injecting fault '{inject}'")
            stack.enter_context(FAULTS[inject]())
        for name, check in INVARIANTS.items():
            try:
                check(np.random.Generator(np.random.Philox(seed)), cases)
            except AssertionError as e:
                yield InvariantResult(name, False, str(e))
            except Exception as e:
                yield InvariantResult(name, False, f"{type(e).__name__}: {e}")
            else:
                yield InvariantResult(name, True)


def run_selftest(inject: Optional[str] = None, seed: int = SELFTEST_SEED,
                 cases: int = CASES) -> List[InvariantResult]:
    return list(iter_selftest(inject, seed, cases))
