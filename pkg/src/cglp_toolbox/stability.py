"""
Quadratic stability certificates for reset control loops.

A reset loop is quadratically stable when there exist beta and a positive
definite P_rho such that a positive definite P satisfies

    A_cl^T P + P A_cl < 0,    B0^T P = C0 = [beta C_p, 0, P_rho]

with closed-loop states ordered (plant, non-resetting controller states,
resetting controller states) and B0 = [0; 0; I]. The condition is
sufficient only, so a failed search reports ``unknown`` rather than
unstable; ``infeasible`` is reserved for loops whose base linear system is
not Hurwitz.

The search maximizes the margin s with P - s I > 0 and
-(A_cl^T P + P A_cl) - s I > 0 at trace(P) = 1 by a log-barrier Newton
method on the balanced loop; a positive margin gives a certificate.
Controllers whose reset map is the identity are checked as linear loops.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
from scipy import linalg

from .loop_shaping import ControllerDesign, PlantModel, controller_realization
from .model_core import EvaluationError, ModelError, ResetController, StateSpace, as_reset_controller

logger = logging.getLogger(__name__)

DEFAULT_ITERATIONS = 5000
DEFAULT_RESTARTS = 20
MIN_EIG_P = 1e-8
LYAPUNOV_MARGIN = 1e-8
CONSTRAINT_TOLERANCE = 1e-8
SYMMETRY_TOLERANCE = 1e-10
BARRIER_GROWTH = 10.0
MAX_BARRIER_WEIGHT = 1e12
NEWTON_TOLERANCE = 1e-9


class Verdict(str, Enum):
    FEASIBLE = "feasible"
    INFEASIBLE = "infeasible"
    UNKNOWN = "unknown"


class Backend(str, Enum):
    DESCENT = "descent"
    CVXPY = "cvxpy"


@dataclass(frozen=True, eq=False)
class ClosedLoop:
    """
    Feedback interconnection of a plant and a reset controller (e = r - y).

    ``B_ref``/``C_out``/``D_out`` describe the linear map r -> y of the
    base loop.
    """

    A_cl: np.ndarray
    B_ref: np.ndarray
    C_out: np.ndarray
    D_out: float
    C_p: np.ndarray
    n_p: int
    n_nr: int
    n_r: int

    @property
    def n(self) -> int:
        return self.n_p + self.n_nr + self.n_r

    @property
    def B0(self) -> np.ndarray:
        B0 = np.zeros((self.n, self.n_r))
        B0[self.n_p + self.n_nr :, :] = np.eye(self.n_r)
        return B0

    def C0(self, beta: np.ndarray, P_rho: np.ndarray) -> np.ndarray:
        C0 = np.zeros((self.n_r, self.n))
        C0[:, : self.n_p] = np.outer(beta, self.C_p)
        C0[:, self.n_p + self.n_nr :] = P_rho
        return C0

    @property
    def eigenvalues(self) -> np.ndarray:
        return linalg.eigvals(self.A_cl)

    @property
    def is_hurwitz(self) -> bool:
        return self.n == 0 or bool(np.max(self.eigenvalues.real) < 0.0)


@dataclass(frozen=True)
class Residuals:
    min_eig_P: float
    max_eig_lyap: float
    constraint_norm: float
    symmetry_error: float = 0.0

    def to_dict(self) -> Dict[str, float]:
        return {
            "min_eig_P": self.min_eig_P,
            "max_eig_lyap": self.max_eig_lyap,
            "constraint_norm": self.constraint_norm,
            "symmetry_error": self.symmetry_error,
        }


@dataclass(frozen=True, eq=False)
class StabilityCertificate:
    P: np.ndarray
    beta: np.ndarray
    P_rho: np.ndarray
    residuals: Residuals


@dataclass(frozen=True)
class VerificationResult:
    passed: bool
    residuals: Residuals
    failures: Tuple[str, ...] = ()


@dataclass(frozen=True, eq=False)
class CertificateSearch:
    """Outcome of a certificate search."""

    verdict: Verdict
    certificate: Optional[StabilityCertificate] = None
    restarts_used: int = 0
    best_objective: float = float("nan")


@dataclass(frozen=True, eq=False)
class StabilityReport:
    verdict: Verdict
    certificate: Optional[StabilityCertificate]
    eigs: np.ndarray
    restarts_used: int = 0
    best_objective: float = float("nan")

    @property
    def residuals(self) -> Optional[Residuals]:
        return None if self.certificate is None else self.certificate.residuals

    def to_dict(self) -> Dict[str, Any]:
        document: Dict[str, Any] = {
            "verdict": self.verdict.value,
            "eigs": [[float(z.real), float(z.imag)] for z in self.eigs],
            "restarts_used": self.restarts_used,
        }
        if self.certificate is not None:
            document["residuals"] = self.certificate.residuals.to_dict()
            document["beta"] = self.certificate.beta.tolist()
            document["P_rho"] = self.certificate.P_rho.tolist()
        else:
            document["residuals"] = None
            document["beta"] = None
            if np.isfinite(self.best_objective):
                document["best_objective"] = self.best_objective
        return document


def build_closed_loop(plant: StateSpace, ctrl: Union[ResetController, StateSpace]) -> ClosedLoop:
    """
    Assemble A_cl with states ordered (plant, non-resetting, resetting).

    A controller whose reset leaves every state unchanged is taken as linear.

    Raises:
        ModelError: For non-SISO parts or an algebraic loop (D_r D_p != 0)
    """
    ctrl = as_reset_controller(ctrl)
    if ctrl.n_r and ctrl.resets_trivially:
        ctrl = as_reset_controller(ctrl.base)
    if not plant.is_siso:
        raise ModelError("Plant must be SISO")
    base = ctrl.base
    D_p, D_r = float(plant.D[0, 0]), float(base.D[0, 0])
    if D_p * D_r != 0.0:
        raise ModelError("Plant and controller feedthrough form an algebraic loop")

    order = list(range(ctrl.n_r, ctrl.n_states)) + list(range(ctrl.n_r))
    A_r = base.A[np.ix_(order, order)]
    B_r = base.B[order, :]
    C_r = base.C[:, order]
    A_p, B_p, C_p = plant.A, plant.B, plant.C
    n_p, n_c = plant.n_states, ctrl.n_states

    A_cl = np.zeros((n_p + n_c, n_p + n_c))
    A_cl[:n_p, :n_p] = A_p - D_r * B_p @ C_p
    A_cl[:n_p, n_p:] = B_p @ C_r
    A_cl[n_p:, :n_p] = -B_r @ C_p
    A_cl[n_p:, n_p:] = A_r - D_p * B_r @ C_r
    B_ref = np.vstack([D_r * B_p, B_r])
    C_out = np.hstack([C_p, D_p * C_r])
    return ClosedLoop(
        A_cl=A_cl,
        B_ref=B_ref,
        C_out=C_out,
        D_out=D_p * D_r,
        C_p=C_p[0, :].copy(),
        n_p=n_p,
        n_nr=ctrl.n_nr,
        n_r=ctrl.n_r,
    )


def verify_certificate(cert: StabilityCertificate, loop: ClosedLoop) -> VerificationResult:
    """
    Exact eigenvalue and constraint checks, independent of how P was found.

    Definiteness is checked on the balanced loop, T P T against T^-1 A_cl T
    with T the power-of-two diagonal from ``_balance``; the congruence is
    exact in floating point. Eigenvalue residuals are reported for that
    pair normalized to unit spectral norm, so MIN_EIG_P and LYAPUNOV_MARGIN
    act as bounds relative to ||A|| ||P||. Both matrices are factorized
    again by Cholesky in the original coordinates, and the constraint
    B0^T P = C0 is checked there to CONSTRAINT_TOLERANCE ||P||.
    """
    P = np.asarray(cert.P, dtype=float)
    failures: List[str] = []
    if P.shape != (loop.n, loop.n):
        return VerificationResult(
            passed=False,
            residuals=Residuals(float("nan"), float("nan"), float("nan"), float("nan")),
            failures=(f"P has shape {P.shape}, expected {(loop.n, loop.n)}",),
        )
    p_norm = float(np.linalg.norm(P, 2)) if P.size else 0.0
    symmetry_error = float(np.max(np.abs(P - P.T))) if P.size else 0.0
    A_b, scale = _balance(loop)
    P_b = scale[:, np.newaxis] * (0.5 * (P + P.T)) * scale[np.newaxis, :]
    pb_norm = float(np.linalg.norm(P_b, 2)) if P.size else 0.0
    if pb_norm > 0.0:
        P_b = P_b / pb_norm
    min_eig = float(np.min(linalg.eigvalsh(P_b))) if P.size else float("inf")
    max_lyap = float(np.max(linalg.eigvalsh(A_b.T @ P_b + P_b @ A_b))) if P.size else float("-inf")
    if loop.n_r:
        C0 = loop.C0(np.asarray(cert.beta, dtype=float), np.asarray(cert.P_rho, dtype=float))
        constraint = float(np.linalg.norm(loop.B0.T @ P - C0))
    else:
        constraint = 0.0
    residuals = Residuals(min_eig, max_lyap, constraint, symmetry_error)

    if symmetry_error > SYMMETRY_TOLERANCE * max(1.0, p_norm):
        failures.append(f"P is not symmetric (error {symmetry_error:.3e})")
    if not min_eig >= MIN_EIG_P:
        failures.append(f"min eigenvalue of P is {min_eig:.3e}")
    if not max_lyap <= -LYAPUNOV_MARGIN:
        failures.append(f"max eigenvalue of A_cl^T P + P A_cl is {max_lyap:.3e}")
    if not constraint <= CONSTRAINT_TOLERANCE * p_norm:
        failures.append(f"B0^T P - C0 has norm {constraint:.3e}")
    if loop.n_r:
        rho_min = float(np.min(linalg.eigvalsh(0.5 * (cert.P_rho + np.transpose(cert.P_rho)))))
        if not rho_min > 0.0:
            failures.append(f"P_rho is not positive definite (min eigenvalue {rho_min:.3e})")
    if P.size and not failures:
        P_sym = 0.5 * (P + P.T)
        for name, matrix in (
            ("P", P_sym),
            ("-(A_cl^T P + P A_cl)", -(loop.A_cl.T @ P_sym + P_sym @ loop.A_cl)),
        ):
            try:
                linalg.cholesky(matrix, lower=True)
            except linalg.LinAlgError:
                failures.append(f"{name} is not positive definite in the original coordinates")
    return VerificationResult(passed=not failures, residuals=residuals, failures=tuple(failures))


def _basis(n_p: int, n_nr: int, n_r: int, c_row: np.ndarray) -> np.ndarray:
    """Matrices spanning every P with B0^T P = [beta C_p, 0, P_rho]."""
    m = n_p + n_nr
    n = m + n_r
    basis = []
    for i in range(m):
        for j in range(i, m):
            E = np.zeros((n, n))
            E[i, j] = E[j, i] = 1.0
            basis.append(E)
    for k in range(n_r):
        E = np.zeros((n, n))
        E[m + k, :n_p] = c_row
        E[:n_p, m + k] = c_row
        basis.append(E)
    for i in range(n_r):
        for j in range(i, n_r):
            E = np.zeros((n, n))
            E[m + i, m + j] = E[m + j, m + i] = 1.0
            basis.append(E)
    return np.array(basis)


def _coordinates(P: np.ndarray, n_p: int, n_nr: int, n_r: int, c_row: np.ndarray) -> np.ndarray:
    """Least-squares coordinates of P in the constrained basis."""
    m = n_p + n_nr
    v = [P[i, j] for i in range(m) for j in range(i, m)]
    c_norm = float(c_row @ c_row)
    for k in range(n_r):
        v.append(float(P[m + k, :n_p] @ c_row) / c_norm if c_norm > 0.0 else 0.0)
    v += [P[m + i, m + j] for i in range(n_r) for j in range(i, n_r)]
    return np.array(v, dtype=float)


class _BarrierSearch:
    """
    Log-barrier Newton maximization of the margin s subject to P - s I > 0
    and -(A^T P + P A) - s I > 0, over P in the constrained basis with
    trace(P) = 1. Points are x = (w, s) with coordinates v = v0 + Z w.
    """

    def __init__(self, A: np.ndarray, basis: np.ndarray) -> None:
        self._basis = basis
        lyap = np.einsum("ji,kjl->kil", A, basis) + np.einsum("kij,jl->kil", basis, A)
        self.trace = np.einsum("kii->k", basis)
        self.origin = self.trace / float(self.trace @ self.trace)
        self.directions = linalg.null_space(self.trace[np.newaxis, :])
        eye = np.eye(A.shape[0])[np.newaxis]
        self._pos0 = np.tensordot(self.origin, basis, axes=1)
        self._lyap0 = -np.tensordot(self.origin, lyap, axes=1)
        self._d_pos = np.concatenate([np.tensordot(self.directions.T, basis, axes=1), -eye])
        self._d_lyap = np.concatenate([-np.tensordot(self.directions.T, lyap, axes=1), -eye])

    def matrix(self, v: np.ndarray) -> np.ndarray:
        return np.tensordot(v, self._basis, axes=1)

    def coordinates(self, x: np.ndarray) -> np.ndarray:
        return self.origin + self.directions @ x[:-1]

    def blocks(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return (
            self._pos0 + np.tensordot(x, self._d_pos, axes=1),
            self._lyap0 + np.tensordot(x, self._d_lyap, axes=1),
        )

    def start(self, v: np.ndarray) -> np.ndarray:
        """Strictly feasible point at the coordinates v (rescaled to unit trace)."""
        w = self.directions.T @ (v / float(self.trace @ v) - self.origin)
        x = np.append(w, 0.0)
        lowest = min(float(np.min(linalg.eigvalsh(block))) for block in self.blocks(x))
        x[-1] = lowest - max(1e-3, 0.1 * abs(lowest))
        return x

    def value(self, x: np.ndarray, tau: float) -> Optional[float]:
        """Barrier objective, None outside the feasible set."""
        total = -tau * float(x[-1])
        for block in self.blocks(x):
            try:
                factor = linalg.cholesky(block, lower=True)
            except linalg.LinAlgError:
                return None
            total -= 2.0 * float(np.sum(np.log(np.diag(factor))))
        return total

    def derivatives(self, x: np.ndarray, tau: float) -> Tuple[np.ndarray, np.ndarray]:
        grad = np.zeros(x.size)
        grad[-1] = -tau
        hess = np.zeros((x.size, x.size))
        for block, d_block in zip(self.blocks(x), (self._d_pos, self._d_lyap)):
            inverse = linalg.cho_solve(linalg.cho_factor(block), np.eye(block.shape[0]))
            Y = np.einsum("ij,qjk->qik", inverse, d_block)
            grad -= np.einsum("qii->q", Y)
            hess += np.einsum("qij,pji->qp", Y, Y)
        return grad, hess


def _centre(
    search: _BarrierSearch, x: np.ndarray, tau: float, budget: int
) -> Tuple[np.ndarray, int]:
    """Damped Newton steps on the barrier at weight tau; returns the point and steps used."""
    f = search.value(x, tau)
    if f is None:
        raise linalg.LinAlgError("Barrier start point is not strictly feasible")
    for k in range(budget):
        grad, hess = search.derivatives(x, tau)
        if not np.all(np.isfinite(grad)) or not np.all(np.isfinite(hess)):
            raise EvaluationError(f"Certificate search produced non-finite values at tau={tau:g}")
        try:
            step = linalg.solve(hess, -grad, assume_a="pos")
        except linalg.LinAlgError:
            step = -linalg.lstsq(hess, grad)[0]
        decrement = float(-grad @ step)
        if decrement < 2.0 * NEWTON_TOLERANCE:
            return x, k + 1
        t = 1.0
        while t > 1e-12:
            candidate = x + t * step
            f_new = search.value(candidate, tau)
            if f_new is not None and f_new <= f - 0.25 * t * decrement:
                break
            t *= 0.5
        else:
            return x, k + 1
        x, f = candidate, f_new
    return x, budget


def _balance(loop: ClosedLoop) -> Tuple[np.ndarray, np.ndarray]:
    """Balanced and norm-scaled A_cl with its diagonal similarity T (A_b = T^-1 A T)."""
    A_b, (scale, _) = linalg.matrix_balance(loop.A_cl, permute=False, separate=True)
    norm = float(np.linalg.norm(A_b, 2))
    return A_b / (norm if norm > 0.0 else 1.0), scale


def _certificate_from_balanced(
    P_b: np.ndarray, beta_b: np.ndarray, scale: np.ndarray, loop: ClosedLoop
) -> StabilityCertificate:
    """Map a balanced-coordinate solution back to the original states and normalize ||P|| = 1."""
    inv = 1.0 / scale
    P = inv[:, np.newaxis] * P_b * inv[np.newaxis, :]
    P = 0.5 * (P + P.T)
    m = loop.n_p + loop.n_nr
    beta = beta_b * inv[m:]
    # Pinned rows are rebuilt exactly from beta and P_rho
    P[m:, : loop.n_p] = np.outer(beta, loop.C_p)
    P[: loop.n_p, m:] = P[m:, : loop.n_p].T
    P[m:, loop.n_p : m] = 0.0
    P[loop.n_p : m, m:] = 0.0
    norm = float(np.linalg.norm(P, 2))
    P, beta = P / norm, beta / norm
    P_rho = P[m:, m:].copy()
    draft = StabilityCertificate(P=P, beta=beta, P_rho=P_rho, residuals=Residuals(0.0, 0.0, 0.0))
    residuals = verify_certificate(draft, loop).residuals
    return StabilityCertificate(P=P, beta=beta, P_rho=P_rho, residuals=residuals)


def _initial_points(
    A: np.ndarray, loop: ClosedLoop, c_row: np.ndarray, rng: np.random.Generator, restarts: int
) -> List[np.ndarray]:
    dims = (loop.n_p, loop.n_nr, loop.n_r, c_row)
    points = []
    try:
        X = linalg.solve_continuous_lyapunov(A.T, -np.eye(loop.n))
        points.append(_coordinates(0.5 * (X + X.T), *dims))
    except (linalg.LinAlgError, ValueError) as e:
        logger.debug(f"Lyapunov start unavailable: {e}")
    while len(points) < restarts:
        noise = rng.standard_normal((loop.n, loop.n))
        points.append(_coordinates(np.eye(loop.n) + 0.3 * (noise + noise.T), *dims))
    return points[:restarts]


def _find_by_barrier(
    loop: ClosedLoop, seed: int, iterations: int, restarts: int
) -> CertificateSearch:
    A, scale = _balance(loop)
    c_row = loop.C_p * scale[: loop.n_p]
    search = _BarrierSearch(A, _basis(loop.n_p, loop.n_nr, loop.n_r, c_row))
    m = loop.n_p + loop.n_nr
    beta_slice = slice(m * (m + 1) // 2, m * (m + 1) // 2 + loop.n_r)
    rng = np.random.default_rng(seed)
    best = float("-inf")
    used = 0

    for restart, v0 in enumerate(_initial_points(A, loop, c_row, rng, restarts)):
        used = restart + 1
        if not float(search.trace @ v0) > 0.0:
            v0 = _coordinates(np.eye(loop.n), loop.n_p, loop.n_nr, loop.n_r, c_row)
        x = search.start(v0)
        tau, steps = 1.0, 0
        try:
            while tau <= MAX_BARRIER_WEIGHT and steps < iterations:
                x, taken = _centre(search, x, tau, iterations - steps)
                steps += taken
                best = max(best, float(x[-1]))
                if x[-1] > 0.0:
                    v = search.coordinates(x)
                    cert = _certificate_from_balanced(search.matrix(v), v[beta_slice], scale, loop)
                    if verify_certificate(cert, loop).passed:
                        logger.info(
                            f"Stability certificate found at restart {restart} after {steps} "
                            f"Newton steps (margin {x[-1]:.3e})"
                        )
                        return CertificateSearch(Verdict.FEASIBLE, cert, used, -best)
                tau *= BARRIER_GROWTH
        except (linalg.LinAlgError, ValueError) as e:
            logger.debug(f"Restart {restart} broke down: {e}")
            continue
        logger.debug(f"Restart {restart} ended with margin {best:.3e} after {steps} steps")
        if tau > MAX_BARRIER_WEIGHT:
            # Converged; the problem is convex so further starts reach the same margin
            break
    logger.warning(
        f"No stability certificate after {used} restarts (best margin {best:.3e})"
    )
    return CertificateSearch(Verdict.UNKNOWN, None, used, -best)


def _find_by_cvxpy(loop: ClosedLoop) -> CertificateSearch:
    import cvxpy as cp

    A, scale = _balance(loop)
    c_row = (loop.C_p * scale[: loop.n_p]).reshape(1, -1)
    n, m = loop.n, loop.n_p + loop.n_nr
    P = cp.Variable((n, n), symmetric=True)
    beta = cp.Variable((loop.n_r, 1))
    margin = cp.Variable()
    constraints = [
        P >> margin * np.eye(n),
        A.T @ P + P @ A << -margin * np.eye(n),
        cp.trace(P) == 1.0,
        P[m:, : loop.n_p] == beta @ c_row,
    ]
    if loop.n_nr:
        constraints.append(P[m:, loop.n_p : m] == 0.0)
    problem = cp.Problem(cp.Maximize(margin), constraints)
    try:
        problem.solve()
    except cp.error.SolverError as e:
        logger.warning(f"SDP solver failed: {e}")
        return CertificateSearch(Verdict.UNKNOWN)
    if problem.status not in ("optimal", "optimal_inaccurate") or P.value is None:
        logger.warning(f"SDP returned status {problem.status}")
        return CertificateSearch(Verdict.UNKNOWN)
    best = float(margin.value)
    if not best > 0.0:
        logger.warning(f"SDP margin {best:.3e} is not positive")
        return CertificateSearch(Verdict.UNKNOWN, None, 1, -best)
    cert = _certificate_from_balanced(np.asarray(P.value), np.ravel(beta.value), scale, loop)
    if verify_certificate(cert, loop).passed:
        return CertificateSearch(Verdict.FEASIBLE, cert, 1, -best)
    logger.warning("SDP solution failed exact verification")
    return CertificateSearch(Verdict.UNKNOWN, None, 1, -best)


def find_certificate(
    loop: ClosedLoop,
    seed: int = 0,
    iterations: int = DEFAULT_ITERATIONS,
    restarts: int = DEFAULT_RESTARTS,
    backend: Backend = Backend.DESCENT,
) -> CertificateSearch:
    """
    Search for a quadratic stability certificate.

    Restarts run in order and the first verified certificate is returned,
    so the result depends only on ``seed``. The margin problem is convex, so
    later starting points are only tried when a search breaks down
    numerically or runs out of steps.

    Args:
        loop: Closed loop from build_closed_loop
        seed: Seed of the random restarts
        iterations: Newton steps per restart
        restarts: Number of starting points (the first is a Lyapunov solution)
        backend: ``descent`` or ``cvxpy`` (needs the optional cvxpy package)

    Returns:
        ``infeasible`` when A_cl is not Hurwitz, ``feasible`` with a verified
        certificate, or ``unknown`` when the budget runs out

    Raises:
        EvaluationError: If the descent hits non-finite values
    """
    if not loop.is_hurwitz:
        logger.info("Base linear loop is not Hurwitz")
        return CertificateSearch(Verdict.INFEASIBLE)
    if loop.n_r == 0:
        A, scale = _balance(loop)
        X_b = linalg.solve_continuous_lyapunov(A.T, -np.eye(loop.n))
        inv = 1.0 / scale
        X = inv[:, np.newaxis] * (0.5 * (X_b + X_b.T)) * inv[np.newaxis, :]
        X = X / float(np.linalg.norm(X, 2))
        draft = StabilityCertificate(
            P=X, beta=np.zeros(0), P_rho=np.zeros((0, 0)), residuals=Residuals(0.0, 0.0, 0.0)
        )
        check = verify_certificate(draft, loop)
        cert = StabilityCertificate(X, draft.beta, draft.P_rho, check.residuals)
        return CertificateSearch(Verdict.FEASIBLE if check.passed else Verdict.UNKNOWN, cert, 1)
    if Backend(backend) is Backend.CVXPY:
        return _find_by_cvxpy(loop)
    return _find_by_barrier(loop, seed, iterations, restarts)


def check_design(
    design: ControllerDesign,
    plant: PlantModel,
    seed: int = 0,
    iterations: int = DEFAULT_ITERATIONS,
    restarts: int = DEFAULT_RESTARTS,
    backend: Backend = Backend.DESCENT,
) -> StabilityReport:
    """
    Close the loop of a design around the plant model and search a certificate.

    Raises:
        ModelError: For FRF-only plants
    """
    loop = build_closed_loop(plant.state_space, controller_realization(design))
    search = find_certificate(loop, seed, iterations, restarts, backend)
    logger.info(
        f"Stability of {design.family.value} gamma={design.gamma:g}: {search.verdict.value}"
    )
    return StabilityReport(
        verdict=search.verdict,
        certificate=search.certificate,
        eigs=loop.eigenvalues,
        restarts_used=search.restarts_used,
        best_objective=search.best_objective,
    )
