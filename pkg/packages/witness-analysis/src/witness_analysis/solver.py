"""Numerical search for distinguishing witnesses: unit vectors φ with <φ|U_k†U_l|φ> = δ_kl.

The objective is f(φ) = Σ_{k<l} |<φ|U_k†U_l|φ>|² on the unit sphere. Each restart runs projected gradient
descent with Armijo backtracking and a renormalization retraction, then a trust-region least-squares polish
that is kept only when it lowers f. A failed search is evidence, never proof: certificates come from
`witness_analysis.prover`.
"""

import itertools
import logging
from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import StrEnum

import numpy as np
from core.config import settings
from core.states import (
    ComplexOperator,
    ComplexVector,
    DimensionMismatchError,
    StateSet,
    gauge_fix,
    normalize,
    random_state_vector,
)
from numpy.typing import NDArray
from scipy.linalg import null_space
from scipy.optimize import least_squares
from tqdm import tqdm

logger = logging.getLogger(__name__)

# Stop descending once the tangent gradient or the relative decrease is this small.
_GRADIENT_FLOOR = 1e-30
_STALL_TOLERANCE = 1e-14
_MIN_STEP = 1e-20


class InvalidSolverParameterError(ValueError):
    """restarts and max_iters must both be at least 1."""


class BoundViolatedError(ValueError):
    """N > dim of the measuring space: the states are indistinguishable outright, no search is run."""


class Verdict(StrEnum):
    WITNESS_FOUND = "WITNESS_FOUND"
    NO_WITNESS_FOUND = "NO_WITNESS_FOUND"


@dataclass(frozen=True)
class WitnessObjectiveValue:
    f: float
    residuals: dict[tuple[int, int], complex]


@dataclass(frozen=True, eq=False)
class WitnessReport:
    verdict: Verdict
    best_phi: ComplexVector
    best_f: float
    restarts: int
    seed: int
    per_restart_best_f: tuple[float, ...]

    @property
    def note(self) -> str:
        if self.verdict is Verdict.WITNESS_FOUND:
            return "witness found: the necessary condition for one-way distinguishability holds"
        return (
            "no witness found numerically; this is evidence, not proof. "
            "Run the infeasibility prover (locclab trace) for a certificate."
        )


@dataclass(frozen=True, eq=False)
class WitnessBasisReport:
    vectors: tuple[ComplexVector, ...]
    completeness: int
    pairwise_gram: NDArray[np.complex128]
    method: str = "greedy"


@dataclass(frozen=True)
class OracleResult:
    min_sampled_f: float
    min_polished_f: float

    @property
    def witness_found(self) -> bool:
        return self.min_polished_f <= settings.EPS_FEAS


@dataclass(frozen=True, eq=False)
class _WitnessProblem:
    """f restricted to φ = frame @ ψ, plus an optional overlap penalty μ Σ |<v|ψ>|²."""

    products: NDArray[np.complex128]  # (K, r, r), frame† U_k†U_l frame for k < l
    penalty_vectors: NDArray[np.complex128] = field(default_factory=lambda: np.zeros((0, 0), dtype=np.complex128))
    penalty_weight: float = 0.0

    @property
    def dim(self) -> int:
        return self.products.shape[1]

    def residuals(self, psi: ComplexVector) -> NDArray[np.complex128]:
        return np.einsum("i,kij,j->k", psi.conj(), self.products, psi)

    def value(self, psi: ComplexVector) -> float:
        f = float(np.sum(np.abs(self.residuals(psi)) ** 2))
        if self.penalty_weight and len(self.penalty_vectors):
            f += self.penalty_weight * float(np.sum(np.abs(self.penalty_vectors.conj() @ psi) ** 2))
        return f

    def wirtinger_gradient(self, psi: ComplexVector) -> ComplexVector:
        """∂f/∂ψ* = Σ r_kl* P_kl ψ + r_kl P_kl† ψ (+ μ Σ v <v|ψ>)."""
        residuals = self.residuals(psi)
        forward = np.einsum("kij,j->ki", self.products, psi)
        backward = np.einsum("kji,j->ki", self.products.conj(), psi)
        grad = residuals.conj() @ forward + residuals @ backward
        if self.penalty_weight and len(self.penalty_vectors):
            overlaps = self.penalty_vectors.conj() @ psi
            grad = grad + self.penalty_weight * (overlaps @ self.penalty_vectors)
        return grad

    def restricted(self, frame: NDArray[np.complex128]) -> "_WitnessProblem":
        """Same objective (without penalty) in the coordinates ψ of φ = frame @ ψ."""
        return _WitnessProblem(products=np.einsum("ai,kab,bj->kij", frame.conj(), self.products, frame))


def _pair_products(unitaries: tuple[ComplexOperator, ...]) -> tuple[list[tuple[int, int]], NDArray[np.complex128]]:
    pairs = list(itertools.combinations(range(len(unitaries)), 2))
    dim = unitaries[0].shape[0]
    products = np.array([unitaries[k].conj().T @ unitaries[l] for k, l in pairs], dtype=np.complex128)
    return pairs, products.reshape(len(pairs), dim, dim)


def _check_phi(phi: ComplexVector, ss: StateSet) -> ComplexVector:
    phi = np.asarray(phi, dtype=np.complex128)
    if phi.shape != (ss.receiver_dim,):
        raise DimensionMismatchError(f"phi has shape {phi.shape}, the measuring space has dimension {ss.receiver_dim}")
    return phi


def objective(phi: ComplexVector, ss: StateSet) -> WitnessObjectiveValue:
    """Pairwise residuals <φ|U_k†U_l|φ> for k < l and f = Σ |residual|²."""
    phi = _check_phi(phi, ss)
    pairs, products = _pair_products(ss.unitaries)
    residuals = _WitnessProblem(products).residuals(phi)
    return WitnessObjectiveValue(
        f=float(np.sum(np.abs(residuals) ** 2)),
        residuals={pair: complex(r) for pair, r in zip(pairs, residuals, strict=True)},
    )


def gradient(phi: ComplexVector, ss: StateSet) -> ComplexVector:
    """Wirtinger gradient ∂f/∂φ*; the real gradient in (Re φ, Im φ) is twice this."""
    phi = _check_phi(phi, ss)
    _, products = _pair_products(ss.unitaries)
    return _WitnessProblem(products).wirtinger_gradient(phi)


def check_nd_bound(ss: StateSet) -> bool:
    """True when N exceeds the dimension of the measuring space, i.e. the set is indistinguishable outright."""
    return ss.n_states > ss.receiver_dim


def _descend(problem: _WitnessProblem, psi: ComplexVector, max_iters: int) -> tuple[ComplexVector, float]:
    """Projected gradient descent on the sphere; f never increases between accepted iterates."""
    f = problem.value(psi)
    for _ in range(max_iters):
        if f <= settings.EPS_FEAS:
            break
        ascent = 2.0 * problem.wirtinger_gradient(psi)
        tangent = ascent - np.real(np.vdot(psi, ascent)) * psi
        slope = float(np.real(np.vdot(tangent, tangent)))
        if slope <= _GRADIENT_FLOOR:
            break
        step = settings.ARMIJO_INITIAL_STEP
        while step >= _MIN_STEP:
            candidate = normalize(psi - step * tangent)
            f_candidate = problem.value(candidate)
            if f_candidate <= f - settings.ARMIJO_C1 * step * slope:
                break
            step *= settings.ARMIJO_SHRINK
        else:
            break
        stalled = f - f_candidate <= _STALL_TOLERANCE * f
        psi, f = candidate, f_candidate
        if stalled:
            break
    return psi, f


def _polish(problem: _WitnessProblem, psi: ComplexVector) -> tuple[ComplexVector, float]:
    """Trust-region least squares on (Re r, Im r, |ψ|² - 1); returns the input unless f improves."""
    dim = problem.dim
    f_start = problem.value(psi)
    if f_start <= settings.EPS_FEAS or not len(problem.products):
        return psi, f_start

    def unpack(x: NDArray[np.float64]) -> ComplexVector:
        return x[:dim] + 1j * x[dim:]

    def residual_vector(x: NDArray[np.float64]) -> NDArray[np.float64]:
        z = unpack(x)
        r = problem.residuals(z)
        return np.concatenate([r.real, r.imag, [np.real(np.vdot(z, z)) - 1.0]])

    def jacobian(x: NDArray[np.float64]) -> NDArray[np.float64]:
        z = unpack(x)
        forward = np.einsum("kij,j->ki", problem.products, z)
        transposed = np.einsum("kji,j->ki", problem.products, z.conj())
        d_re = forward + transposed
        d_im = 1j * (transposed - forward)
        return np.vstack(
            [
                np.hstack([d_re.real, d_im.real]),
                np.hstack([d_re.imag, d_im.imag]),
                np.concatenate([2.0 * z.real, 2.0 * z.imag])[None, :],
            ]
        )

    x0 = np.concatenate([psi.real, psi.imag])
    solution = least_squares(
        residual_vector,
        x0,
        jac=jacobian,
        method="trf",
        tr_solver="exact",
        xtol=1e-15,
        ftol=1e-15,
        gtol=1e-15,
        max_nfev=100,
    )
    candidate = normalize(unpack(solution.x))
    f_candidate = problem.value(candidate)
    if f_candidate < f_start:
        return candidate, f_candidate
    return psi, f_start


def _minimize(problem: _WitnessProblem, psi0: ComplexVector, max_iters: int) -> tuple[ComplexVector, float]:
    psi, f = _descend(problem, psi0, max_iters)
    return _polish(problem, psi) if not problem.penalty_weight else (psi, f)


def _validate(restarts: int, max_iters: int) -> None:
    if restarts < 1 or max_iters < 1:
        raise InvalidSolverParameterError(f"restarts={restarts} and max_iters={max_iters} must both be >= 1")


def _run_restarts(
    task: Callable[[np.random.SeedSequence], tuple[ComplexVector, float]],
    seeds: list[np.random.SeedSequence],
    *,
    stop_on_witness: bool,
    workers: int,
    progress: bool,
) -> list[tuple[ComplexVector, float]]:
    """Runs restarts in index order, in batches of `workers`; stop_on_witness drops results after the first witness."""
    results: list[tuple[ComplexVector, float]] = []
    batch_size = workers if stop_on_witness else len(seeds)
    pbar = tqdm(total=len(seeds), desc="🔎 Witness search", unit="restart", disable=not progress)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for start in range(0, len(seeds), batch_size):
            batch = list(pool.map(task, seeds[start : start + batch_size]))
            pbar.update(len(batch))
            for outcome in batch:
                results.append(outcome)
                if stop_on_witness and outcome[1] <= settings.EPS_FEAS:
                    pbar.close()
                    return results
    pbar.close()
    return results


def solve_witness(
    ss: StateSet,
    restarts: int = settings.RESTARTS,
    seed: int = settings.SEED,
    max_iters: int = settings.MAX_ITERS,
    *,
    stop_on_witness: bool = False,
    workers: int | None = None,
    progress: bool = False,
) -> WitnessReport:
    """Multistart search for a witness in the measuring party's space.

    :param ss: validated state set; pass transpose_set(ss) to test the BtoA direction.
    :type ss: StateSet
    :param restarts: number of independent random starts.
    :type restarts: int
    :param seed: root seed; restart i draws its start from the i-th spawned child sequence.
    :type seed: int
    :param max_iters: gradient iterations per restart.
    :type max_iters: int
    :param stop_on_witness: stop launching restarts once a witness is found.
    :type stop_on_witness: bool
    :raises InvalidSolverParameterError: restarts < 1 or max_iters < 1.
    :raises BoundViolatedError: N exceeds the measuring dimension.
    :return: the best restart, gauge-fixed, with every restart's final f.
    :rtype: WitnessReport
    """
    _validate(restarts, max_iters)
    if check_nd_bound(ss):
        raise BoundViolatedError(f"N={ss.n_states} > {ss.receiver_dim}: no witness search is run")

    dim = ss.receiver_dim
    _, products = _pair_products(ss.unitaries)
    problem = _WitnessProblem(products)

    def task(child: np.random.SeedSequence) -> tuple[ComplexVector, float]:
        return _minimize(problem, random_state_vector(dim, np.random.default_rng(child)), max_iters)

    results = _run_restarts(
        task,
        np.random.SeedSequence(seed).spawn(restarts),
        stop_on_witness=stop_on_witness,
        workers=workers or settings.THREADS,
        progress=progress,
    )
    best = min(range(len(results)), key=lambda i: (results[i][1], i))
    best_phi = gauge_fix(normalize(results[best][0]))
    best_f = objective(best_phi, ss).f
    verdict = Verdict.WITNESS_FOUND if best_f <= settings.EPS_FEAS else Verdict.NO_WITNESS_FOUND
    logger.info("witness search: %s after %d restarts, best f = %.3e", verdict, len(results), best_f)
    return WitnessReport(
        verdict=verdict,
        best_phi=best_phi,
        best_f=best_f,
        restarts=len(results),
        seed=seed,
        per_restart_best_f=tuple(f for _, f in results),
    )


def _next_witness(
    problem: _WitnessProblem,
    found: list[ComplexVector],
    restarts: int,
    seed: np.random.SeedSequence,
    max_iters: int,
) -> ComplexVector | None:
    """One greedy step: a witness orthogonal to `found`, steered by the overlap penalty, finished in the complement."""
    dim = problem.dim
    if found:
        penalized = _WitnessProblem(problem.products, np.array(found), settings.BASIS_PENALTY)
        complement = null_space(np.array(found).conj())
    else:
        penalized = problem
        complement = np.eye(dim, dtype=np.complex128)
    restricted = problem.restricted(complement)

    for child in seed.spawn(restarts):
        start = random_state_vector(dim, np.random.default_rng(child))
        phi, _ = _descend(penalized, start, max_iters)
        coords = complement.conj().T @ phi
        if np.linalg.norm(coords) == 0:
            continue
        coords, f = _polish(restricted, normalize(coords))
        if f <= settings.EPS_FEAS:
            return complement @ coords
    return None


def _joint_basis(
    problem: _WitnessProblem, seeds: list[np.random.SeedSequence], warm_start: list[ComplexVector]
) -> list[ComplexVector] | None:
    """Least squares over a whole d x d matrix: every column a witness, columns orthonormal."""
    dim = problem.dim
    upper = np.triu_indices(dim)

    def unpack(x: NDArray[np.float64]) -> NDArray[np.complex128]:
        return (x[: dim * dim] + 1j * x[dim * dim :]).reshape(dim, dim)

    def residual_vector(x: NDArray[np.float64]) -> NDArray[np.float64]:
        columns = unpack(x)
        witness = np.einsum("im,kij,jm->km", columns.conj(), problem.products, columns).ravel()
        gram = (columns.conj().T @ columns - np.eye(dim))[upper]
        return np.concatenate([witness.real, witness.imag, gram.real, gram.imag])

    for child in seeds:
        rng = np.random.default_rng(child)
        start = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
        for m, vector in enumerate(warm_start):
            start[:, m] = vector
        start, _ = np.linalg.qr(start)
        solution = least_squares(
            residual_vector,
            np.concatenate([start.real.ravel(), start.imag.ravel()]),
            jac="3-point",
            method="trf",
            xtol=1e-15,
            ftol=1e-15,
            gtol=1e-15,
            max_nfev=200,
        )
        columns = _orthonormalize(list(unpack(solution.x).T))
        if all(problem.value(vector) <= settings.EPS_FEAS for vector in columns):
            return columns
    return None


def _orthonormalize(vectors: list[ComplexVector]) -> list[ComplexVector]:
    """Closest orthonormal family (polar factor), so nearly orthonormal input barely moves."""
    if not vectors:
        return []
    left, _, right = np.linalg.svd(np.array(vectors).T, full_matrices=False)
    return list((left @ right).T)


def find_witness_basis(
    ss: StateSet,
    restarts: int = settings.RESTARTS,
    seed: int = settings.SEED,
    max_iters: int = settings.MAX_ITERS,
    attempts: int = settings.BASIS_ATTEMPTS,
) -> WitnessBasisReport:
    """Greedy search for up to d mutually orthonormal witnesses.

    Each greedy step penalizes overlap with the vectors already found (weight BASIS_PENALTY), then finishes
    inside their orthogonal complement. A stalled greedy pass is retried from fresh seeds, and as a last
    resort a joint least-squares solve over a full unitary is tried. The final family is re-orthonormalized
    and every vector re-verified.

    :raises InvalidSolverParameterError: restarts < 1 or max_iters < 1.
    :raises BoundViolatedError: N exceeds the measuring dimension.
    """
    _validate(restarts, max_iters)
    if check_nd_bound(ss):
        raise BoundViolatedError(f"N={ss.n_states} > {ss.receiver_dim}: no witness search is run")

    dim = ss.receiver_dim
    _, products = _pair_products(ss.unitaries)
    problem = _WitnessProblem(products)
    attempt_seeds = np.random.SeedSequence(seed).spawn(max(attempts, 1) + 1)

    best: list[ComplexVector] = []
    method = "greedy"
    for attempt, attempt_seed in enumerate(attempt_seeds[:-1]):
        found: list[ComplexVector] = []
        for step_seed in attempt_seed.spawn(dim):
            vector = _next_witness(problem, found, restarts, step_seed, max_iters)
            if vector is None:
                break
            found.append(vector)
        logger.debug("greedy basis attempt %d found %d of %d witnesses", attempt, len(found), dim)
        if len(found) > len(best):
            best = found
        if len(best) == dim or not best:
            break

    if 0 < len(best) < dim:
        joint = _joint_basis(problem, attempt_seeds[-1].spawn(max(attempts, 1)), best)
        if joint is not None:
            best, method = joint, "joint"

    vectors = [gauge_fix(v) for v in _orthonormalize(best)]
    vectors = [v for v in vectors if problem.value(v) <= settings.EPS_FEAS]
    gram = np.array(vectors).conj() @ np.array(vectors).T if vectors else np.zeros((0, 0), dtype=np.complex128)
    logger.info("witness basis: %d of %d vectors (%s)", len(vectors), dim, method)
    return WitnessBasisReport(
        vectors=tuple(vectors),
        completeness=len(vectors),
        pairwise_gram=gram,
        method=method,
    )


def random_search_oracle(ss: StateSet, samples: int = 10**6, seed: int = 0, polish: int = 8) -> OracleResult:
    """Independent reference: dense uniform sampling of the sphere, then least-squares polish of the best samples.

    Uses no gradient descent, so agreement with solve_witness is a meaningful cross-check.
    """
    dim = ss.receiver_dim
    _, products = _pair_products(ss.unitaries)
    problem = _WitnessProblem(products)
    rng = np.random.default_rng(seed)
    chunk = 100_000
    best_f = np.full(polish, np.inf)
    best_points = np.zeros((polish, dim), dtype=np.complex128)
    remaining = samples
    while remaining > 0:
        size = min(chunk, remaining)
        points = rng.standard_normal((size, dim)) + 1j * rng.standard_normal((size, dim))
        points /= np.linalg.norm(points, axis=1, keepdims=True)
        residuals = np.einsum("ni,kij,nj->nk", points.conj(), products, points)
        values = np.sum(np.abs(residuals) ** 2, axis=1)
        pool_f = np.concatenate([best_f, values])
        pool_points = np.concatenate([best_points, points])
        keep = np.argsort(pool_f, kind="stable")[:polish]
        best_f, best_points = pool_f[keep], pool_points[keep]
        remaining -= size
    polished = [_polish(problem, point)[1] for point, f in zip(best_points, best_f, strict=True) if np.isfinite(f)]
    return OracleResult(min_sampled_f=float(best_f[0]), min_polished_f=float(min(polished)))
