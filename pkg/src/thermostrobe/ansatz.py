"""Ansatz families: parameterized states consistent with a set of observables.

A family maps a parameter vector E (the expectations of its relevant
observables) to a density matrix state_of(E) with Tr(P_m state_of(E)) = E_m.
Families implemented here: generalized Gibbs states exp(-(beta, P))/Z fitted
to the target expectations, the pinching (block-dephasing) family of a
reference observable, the selective (renormalized single-block) family, and
the factorized system-bath family.  The posterior map of a family is
rho -> state_of(Tr(P rho)).
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateAnsatzError,
    DomainError,
    FitError,
    ValidationError,
    ZeroProbabilityBranchError,
)
from .liouville import require_density
from .matcore import (
    dexp_neg,
    frobenius,
    herm_eig,
    hermitize,
    kron,
    partial_trace,
    require_hermitian,
    require_square,
    scale_of,
)

GRAM_COND_MAX = 1e12
EIG_CLUSTER_TOL = 1e-8
BOUNDARY_MARGIN = 1e-9
PSD_FLOOR = -1e-10
ZERO_BRANCH_TOL = 1e-12
IMAG_TOL = 1e-10
JACOBIAN_RCOND = 1e-12


@dataclass(frozen=True, eq=False)
class RelevantSet:
    """Hermitian observables whose expectations parameterize an ansatz family.

    The identity is an implicit member of every relevant set (unit trace), so
    the stored observables must be linearly independent from it and from each
    other; the condition number of the Gram matrix of {I, P_1, ..., P_M} under
    the Frobenius pairing is recorded as gram_condition.
    """

    observables: tuple[np.ndarray, ...]
    gram_condition: float = field(init=False)

    def __post_init__(self) -> None:
        obs = tuple(require_hermitian(P, name=f"observable {m}") for m, P in enumerate(self.observables))
        if not obs:
            raise ValidationError("a relevant set needs at least one observable")
        d = obs[0].shape[0]
        for m, P in enumerate(obs):
            if P.shape[0] != d:
                raise ValidationError("observables have mismatched dimensions")
            traceless = P - (np.trace(P) / d) * np.eye(d)
            if np.max(np.abs(traceless)) <= 1e-12 * scale_of(P):
                raise ValidationError(f"observable {m} is a multiple of the identity")
        basis = [np.eye(d, dtype=complex), *obs]
        n = len(basis)
        G = np.empty((n, n))
        for a in range(n):
            for b in range(n):
                G[a, b] = frobenius(basis[a], basis[b]).real
        cond = float(np.linalg.cond(G))
        if not np.isfinite(cond) or cond > GRAM_COND_MAX:
            raise ValidationError(
                f"observables are linearly dependent (with the identity): Gram condition {cond:.3e}"
            )
        object.__setattr__(self, "observables", obs)
        object.__setattr__(self, "gram_condition", cond)

    @property
    def dim(self) -> int:
        return self.observables[0].shape[0]

    @property
    def size(self) -> int:
        return len(self.observables)


def _as_relevant(observables) -> RelevantSet:
    if isinstance(observables, RelevantSet):
        return observables
    return RelevantSet(tuple(np.asarray(P, dtype=complex) for P in observables))


def _as_params(E, size: int) -> np.ndarray:
    E = np.atleast_1d(np.asarray(E, dtype=float))
    if E.shape != (size,):
        raise ValidationError(f"parameter vector has shape {E.shape}, expected ({size},)")
    return E


# ---------------------------------------------------------------------------
# Generalized Gibbs states


def _gibbs_eig(relevant: RelevantSet, beta: np.ndarray):
    """Eigen-factorization of K = (beta, P) with the spectrum shifted to start at 0."""
    K = np.zeros((relevant.dim, relevant.dim), dtype=complex)
    for b, P in zip(beta, relevant.observables):
        K = K + b * P
    w, U = np.linalg.eigh(hermitize(K))
    shifted = w - w.min()
    weights = np.exp(-shifted)
    Z = float(weights.sum())
    return shifted, U, weights, Z


def gibbs_state(observables, beta) -> np.ndarray:
    """exp(-(beta, P)) / Z, computed with the exponent shifted by its minimum eigenvalue."""
    relevant = _as_relevant(observables)
    beta = _as_params(beta, relevant.size)
    w, U, weights, Z = _gibbs_eig(relevant, beta)
    return hermitize((U * (weights / Z)) @ U.conj().T)


def gibbs_expectations(observables, beta) -> np.ndarray:
    """Expectations Tr(P_m rho_Gibbs(beta)) of the relevant observables."""
    relevant = _as_relevant(observables)
    rho = gibbs_state(relevant, beta)
    out = np.empty(relevant.size)
    for m, P in enumerate(relevant.observables):
        val = frobenius(P, rho)
        if abs(val.imag) > IMAG_TOL * scale_of(P):
            raise ValidationError(f"expectation {m} has imaginary part {val.imag:.3e}")
        out[m] = val.real
    return out


def gibbs_param_derivative(observables, beta) -> np.ndarray:
    """Stack of derivatives d rho_Gibbs / d beta_n (each traceless)."""
    relevant = _as_relevant(observables)
    beta = _as_params(beta, relevant.size)
    w, U, weights, Z = _gibbs_eig(relevant, beta)
    K = hermitize((U * w) @ U.conj().T)
    rho = hermitize((U * (weights / Z)) @ U.conj().T)
    E = np.array([frobenius(P, rho).real for P in relevant.observables])
    out = np.empty((relevant.size, relevant.dim, relevant.dim), dtype=complex)
    for n, P in enumerate(relevant.observables):
        out[n] = dexp_neg(K, P) / Z + rho * E[n]
    return out


def gibbs_jacobian(observables, beta) -> np.ndarray:
    """Response matrix J_mn = d E_m / d beta_n of the Gibbs map (symmetric, negative definite)."""
    relevant = _as_relevant(observables)
    dstack = gibbs_param_derivative(relevant, beta)
    M = relevant.size
    J = np.empty((M, M))
    for m, P in enumerate(relevant.observables):
        for n in range(M):
            J[m, n] = frobenius(P, dstack[n]).real
    return 0.5 * (J + J.T)


def _canonical_bounds(P: np.ndarray) -> tuple[float, float, float]:
    w = np.linalg.eigvalsh(P)
    margin = BOUNDARY_MARGIN * (1.0 + float(np.max(np.abs(w))))
    return float(w.min()), float(w.max()), margin


def _bisect_beta(relevant: RelevantSet, target: float, tol: float) -> float:
    """Monotone bracketing solve for a single observable; E(beta) is strictly decreasing."""

    def resid(b: float) -> float:
        return gibbs_expectations(relevant, [b])[0] - target

    lo, hi = -1.0, 1.0
    while resid(lo) < 0.0:
        lo *= 2.0
        if lo < -1e9:
            raise FitError(f"bracketing failed toward beta -> -inf for target {target}")
    while resid(hi) > 0.0:
        hi *= 2.0
        if hi > 1e9:
            raise FitError(f"bracketing failed toward beta -> +inf for target {target}")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        r = resid(mid)
        if abs(r) <= tol:
            return mid
        if r > 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * max(1.0, abs(mid)):
            break
    mid = 0.5 * (lo + hi)
    if abs(resid(mid)) <= tol:
        return mid
    raise FitError(f"bisection stalled at residual {abs(resid(mid)):.3e} for target {target}")


def fit_beta(observables, target, beta_init=None, tol: float = 1e-10, max_iter: int = 200,
             full_output: bool = False):
    """Solve Tr(P_m rho_Gibbs(beta)) = target_m for beta.

    Damped Newton iteration with the analytic response matrix: each step is
    halved (up to 60 times) until the max-norm residual decreases.  For a
    single observable an out-of-range target raises immediately and a
    monotone bisection takes over if damping stalls.
    """
    relevant = _as_relevant(observables)
    target = _as_params(target, relevant.size)
    if relevant.size == 1:
        kmin, kmax, margin = _canonical_bounds(relevant.observables[0])
        if not (kmin + margin < target[0] < kmax - margin):
            raise DomainError(
                f"target expectation {target[0]:.12g} is on or outside the feasible-domain "
                f"boundary ({kmin:.12g}, {kmax:.12g})"
            )
    beta = np.zeros(relevant.size) if beta_init is None else _as_params(beta_init, relevant.size).copy()
    resid = gibbs_expectations(relevant, beta) - target
    best = float(np.max(np.abs(resid)))
    iterations = 0
    for iterations in range(1, max_iter + 1):
        if best <= tol:
            break
        try:
            J = gibbs_jacobian(relevant, beta)
            step = np.linalg.solve(J, -resid)
        except np.linalg.LinAlgError:
            if relevant.size == 1:
                beta = np.array([_bisect_beta(relevant, float(target[0]), tol)])
                resid = gibbs_expectations(relevant, beta) - target
                best = float(np.max(np.abs(resid)))
                break
            raise FitError(f"singular response matrix at beta {beta}, residual {best:.3e}") from None
        scale = 1.0
        accepted = False
        for _ in range(60):
            candidate = beta + scale * step
            r = gibbs_expectations(relevant, candidate) - target
            if float(np.max(np.abs(r))) < best:
                beta, resid = candidate, r
                best = float(np.max(np.abs(r)))
                accepted = True
                break
            scale *= 0.5
        if not accepted:
            if relevant.size == 1:
                beta = np.array([_bisect_beta(relevant, float(target[0]), tol)])
                resid = gibbs_expectations(relevant, beta) - target
                best = float(np.max(np.abs(resid)))
                break
            raise FitError(f"damped Newton stalled at residual {best:.3e} after {iterations} iterations")
    if best > tol:
        if relevant.size == 1:
            beta = np.array([_bisect_beta(relevant, float(target[0]), tol)])
            resid = gibbs_expectations(relevant, beta) - target
            best = float(np.max(np.abs(resid)))
        if best > tol:
            raise FitError(f"no convergence after {max_iter} iterations, residual {best:.3e}")
    if full_output:
        return beta, {"residual": best, "iterations": iterations}
    return beta


def qubit_beta_closed_form(E: float, omega0: float) -> float:
    """Inverse temperature of a two-level Gibbs state with excitation energy omega0,
    beta = -ln(E / (omega0 - E)) / omega0, defined for E in (0, omega0)."""
    omega0 = float(omega0)
    if omega0 <= 0.0:
        raise ValidationError(f"omega0 must be positive, got {omega0}")
    E = float(E)
    margin = BOUNDARY_MARGIN * (1.0 + omega0)
    if not (margin < E < omega0 - margin):
        raise DomainError(
            f"energy {E:.12g} is on or outside the feasible-domain boundary (0, {omega0:.12g})"
        )
    return -np.log(E / (omega0 - E)) / omega0


# ---------------------------------------------------------------------------
# Family interface


class AnsatzFamily(ABC):
    """Parameterized family of states consistent with its relevant observables."""

    relevant: RelevantSet
    is_linear: bool = False
    label: str = "family"

    @property
    def size(self) -> int:
        return self.relevant.size

    @property
    def dim(self) -> int:
        return self.relevant.dim

    @abstractmethod
    def state_of(self, E) -> np.ndarray:
        """Density matrix with Tr(P_m rho) = E_m."""

    @abstractmethod
    def derivative_of(self, E) -> np.ndarray:
        """Stack of parameter derivatives d state_of / d E_j, shape (M, d, d)."""

    def state_and_derivative(self, E) -> tuple[np.ndarray, np.ndarray]:
        """state_of and derivative_of together; overridden where one fit serves both."""
        return self.state_of(E), self.derivative_of(E)

    def feasible(self, E) -> bool:
        try:
            self.state_of(E)
            return True
        except (DomainError, ValidationError):
            return False


def extract_params(family: AnsatzFamily, rho) -> np.ndarray:
    """Expectations of the family's relevant observables in a given state."""
    rho = require_square(rho, "state")
    if rho.shape[0] != family.dim:
        raise ValidationError("state dimension does not match the family")
    out = np.empty(family.size)
    for m, P in enumerate(family.relevant.observables):
        val = frobenius(P, rho)
        if abs(val.imag) > IMAG_TOL * scale_of(rho):
            raise ValidationError(f"extracted parameter {m} has imaginary part {val.imag:.3e}")
        out[m] = val.real
    return out


def posterior(family: AnsatzFamily, rho) -> np.ndarray:
    """Reset a state onto the family while keeping its relevant expectations."""
    rho = require_density(rho)
    return family.state_of(extract_params(family, rho))


def ansatz_derivative(family: AnsatzFamily, E) -> np.ndarray:
    """Stack of parameter derivatives of the family at E."""
    return family.derivative_of(E)


class GibbsAnsatz(AnsatzFamily):
    """Generalized Gibbs family over a relevant set, with Newton-fitted exponents."""

    is_linear = False

    def __init__(self, observables, fit_tol: float = 1e-11, fit_max_iter: int = 200):
        self.relevant = _as_relevant(observables)
        self.fit_tol = float(fit_tol)
        self.fit_max_iter = int(fit_max_iter)
        self.label = "gibbs-canonical" if self.relevant.size == 1 else "gibbs-generalized"

    @classmethod
    def canonical(cls, hamiltonian, **kwargs) -> "GibbsAnsatz":
        return cls((hamiltonian,), **kwargs)

    def beta_of(self, E, beta_init=None) -> np.ndarray:
        try:
            return fit_beta(self.relevant, E, beta_init=beta_init, tol=self.fit_tol,
                            max_iter=self.fit_max_iter)
        except FitError as err:
            raise DomainError(f"parameters appear infeasible for the Gibbs family: {err}") from err

    def state_of(self, E) -> np.ndarray:
        return gibbs_state(self.relevant, self.beta_of(E))

    def derivative_of(self, E) -> np.ndarray:
        return self.derivative_from_beta(self.beta_of(E))

    def state_and_derivative(self, E) -> tuple[np.ndarray, np.ndarray]:
        beta = self.beta_of(E)
        return gibbs_state(self.relevant, beta), self.derivative_from_beta(beta)

    def derivative_from_beta(self, beta) -> np.ndarray:
        """Parameter derivatives via the chain rule through the fitted exponents."""
        beta = _as_params(beta, self.size)
        dstack = gibbs_param_derivative(self.relevant, beta)
        J = gibbs_jacobian(self.relevant, beta)
        svals = np.linalg.svd(J, compute_uv=False)
        if svals[0] == 0.0 or svals[-1] <= JACOBIAN_RCOND * svals[0]:
            raise DegenerateAnsatzError(
                f"Gibbs response matrix is numerically singular (singular values {svals})"
            )
        Jinv = np.linalg.inv(J)
        return np.einsum("nab,nj->jab", dstack, Jinv)


# ---------------------------------------------------------------------------
# Block-coordinate (linear and selective) families


def _cluster_eigenvalues(w: np.ndarray) -> list[list[int]]:
    tol = EIG_CLUSTER_TOL * (1.0 + float(np.max(np.abs(w))))
    blocks: list[list[int]] = [[0]]
    for i in range(1, len(w)):
        if w[i] - w[blocks[-1][0]] <= tol:
            blocks[-1].append(i)
        else:
            blocks.append([i])
    return blocks


class _BlockCoords:
    """Real coordinates for Hermitian matrices supported on given index blocks.

    Per block the upper triangle is walked row-major: the diagonal entry
    first, then (2 Re, 2 Im) pairs for each off-diagonal entry.  With
    drop_last_diag the final diagonal coordinate is omitted and recovered
    from the unit trace.
    """

    def __init__(self, blocks: list[list[int]], d: int, drop_last_diag: bool):
        self.blocks = [list(b) for b in blocks]
        self.d = d
        self.drop_last_diag = drop_last_diag
        entries: list[tuple[str, int, int]] = []
        for block in self.blocks:
            for a, i in enumerate(block):
                entries.append(("diag", i, i))
                for j in block[a + 1:]:
                    entries.append(("re", i, j))
                    entries.append(("im", i, j))
        if drop_last_diag:
            last = max(m for m, e in enumerate(entries) if e[0] == "diag")
            self.dropped_index = entries[last][1]
            entries.pop(last)
        else:
            self.dropped_index = None
        self.entries = entries

    @property
    def size(self) -> int:
        return len(self.entries)

    def observables(self) -> list[np.ndarray]:
        out = []
        for kind, i, j in self.entries:
            P = np.zeros((self.d, self.d), dtype=complex)
            if kind == "diag":
                P[i, i] = 1.0
            elif kind == "re":
                P[i, j] = 1.0
                P[j, i] = 1.0
            else:
                P[i, j] = 1.0j
                P[j, i] = -1.0j
            out.append(P)
        return out

    def derivatives(self) -> np.ndarray:
        out = np.zeros((self.size, self.d, self.d), dtype=complex)
        for m, (kind, i, j) in enumerate(self.entries):
            if kind == "diag":
                out[m, i, i] = 1.0
                if self.dropped_index is not None:
                    out[m, self.dropped_index, self.dropped_index] = -1.0
            elif kind == "re":
                out[m, i, j] = 0.5
                out[m, j, i] = 0.5
            else:
                out[m, i, j] = 0.5j
                out[m, j, i] = -0.5j
        return out

    def assemble(self, E: np.ndarray, trace: float | None) -> np.ndarray:
        S = np.zeros((self.d, self.d), dtype=complex)
        for value, (kind, i, j) in zip(E, self.entries):
            if kind == "diag":
                S[i, i] += value
            elif kind == "re":
                S[i, j] += 0.5 * value
                S[j, i] += 0.5 * value
            else:
                S[i, j] += 0.5j * value
                S[j, i] += -0.5j * value
        if self.dropped_index is not None:
            if trace is None:
                raise ValidationError("a trace is required to recover the dropped diagonal entry")
            S[self.dropped_index, self.dropped_index] = trace - S.trace().real + S[self.dropped_index, self.dropped_index].real
        return S


def _block_psd_check(S: np.ndarray, what: str) -> None:
    wmin = float(np.linalg.eigvalsh(hermitize(S)).min())
    if wmin < PSD_FLOOR * scale_of(S):
        raise DomainError(f"{what} lies outside the feasible domain: eigenvalue {wmin:.3e} < 0")


class PinchingAnsatz(AnsatzFamily):
    """Linear family keeping the diagonal blocks of a reference observable's eigenbasis."""

    is_linear = True
    label = "pinching"

    def __init__(self, X):
        X = require_hermitian(X, name="pinched observable")
        w, U = herm_eig(X)
        self._U = U
        self._blocks = _cluster_eigenvalues(w)
        d = X.shape[0]
        self._coords = _BlockCoords(self._blocks, d, drop_last_diag=True)
        Ud = U.conj().T
        self.relevant = RelevantSet(tuple(hermitize(U @ P @ Ud) for P in self._coords.observables()))
        self._derivs = np.array([hermitize(U @ D @ Ud) for D in self._coords.derivatives()])

    def state_of(self, E) -> np.ndarray:
        E = _as_params(E, self.size)
        S = self._coords.assemble(E, trace=1.0)
        _block_psd_check(S, "pinching parameter vector")
        return hermitize(self._U @ S @ self._U.conj().T)

    def derivative_of(self, E) -> np.ndarray:
        _as_params(E, self.size)
        return self._derivs.copy()

    def project(self, M) -> np.ndarray:
        """The linear pinching map itself, defined on arbitrary operators."""
        M = require_square(M, "operand")
        Mt = self._U.conj().T @ M @ self._U
        out = np.zeros_like(Mt)
        for block in self._blocks:
            idx = np.ix_(block, block)
            out[idx] = Mt[idx]
        return self._U @ out @ self._U.conj().T


class SelectiveAnsatz(AnsatzFamily):
    """Renormalized single-branch family of a reference observable's eigenvalue.

    Parameters are the unnormalized block components; state_of renormalizes
    the block, so consistency with the relevant observables holds on the
    unit-block-trace slice (where every posterior lands).
    """

    is_linear = False
    label = "selective"

    def __init__(self, X, eigenvalue: float):
        X = require_hermitian(X, name="measured observable")
        w, U = herm_eig(X)
        blocks = _cluster_eigenvalues(w)
        tol = EIG_CLUSTER_TOL * (1.0 + float(np.max(np.abs(w))))
        selected = None
        for block in blocks:
            if abs(float(np.mean(w[block])) - float(eigenvalue)) <= tol:
                selected = block
                break
        if selected is None:
            raise ValidationError(f"eigenvalue {eigenvalue} is not in the spectrum {w}")
        self._U = U
        self._block = selected
        d = X.shape[0]
        self._coords = _BlockCoords([selected], d, drop_last_diag=False)
        Ud = U.conj().T
        self.relevant = RelevantSet(tuple(hermitize(U @ P @ Ud) for P in self._coords.observables()))
        self._raw_derivs = self._coords.derivatives()

    def _sigma_of(self, E: np.ndarray) -> tuple[np.ndarray, float]:
        S = self._coords.assemble(E, trace=None)
        weight = float(S.trace().real)
        if weight < ZERO_BRANCH_TOL:
            raise ZeroProbabilityBranchError(
                f"selected branch has weight {weight:.3e}, below {ZERO_BRANCH_TOL}"
            )
        return S, weight

    def state_of(self, E) -> np.ndarray:
        E = _as_params(E, self.size)
        S, weight = self._sigma_of(E)
        S = S / weight
        _block_psd_check(S, "selective parameter vector")
        return hermitize(self._U @ S @ self._U.conj().T)

    def derivative_of(self, E) -> np.ndarray:
        E = _as_params(E, self.size)
        S, weight = self._sigma_of(E)
        out = np.empty((self.size, self.dim, self.dim), dtype=complex)
        Ud = self._U.conj().T
        for m, D in enumerate(self._raw_derivs):
            raw = D / weight - S * (float(D.trace().real) / weight**2)
            out[m] = hermitize(self._U @ raw @ Ud)
        return out


class FactorizedAnsatz(AnsatzFamily):
    """Linear family rho_S x rho_B with a fixed bath factor."""

    is_linear = True
    label = "factorized"

    def __init__(self, rho_B, dims: tuple[int, int]):
        dS, dB = int(dims[0]), int(dims[1])
        if dS < 2 or dB < 1:
            raise ValidationError(f"factorized dims {dims} must have a nontrivial system factor")
        rho_B = require_density(rho_B, name="bath state")
        if rho_B.shape[0] != dB:
            raise ValidationError(f"bath state dimension {rho_B.shape[0]} does not match dims {dims}")
        self.dims = (dS, dB)
        self.rho_B = rho_B
        self._coords = _BlockCoords([list(range(dS))], dS, drop_last_diag=True)
        eyeB = np.eye(dB, dtype=complex)
        self.relevant = RelevantSet(tuple(kron(P, eyeB) for P in self._coords.observables()))
        self._derivs = np.array([kron(D, rho_B) for D in self._coords.derivatives()])

    def state_of(self, E) -> np.ndarray:
        E = _as_params(E, self.size)
        S = self._coords.assemble(E, trace=1.0)
        _block_psd_check(S, "factorized system parameter vector")
        return kron(hermitize(S), self.rho_B)

    def derivative_of(self, E) -> np.ndarray:
        _as_params(E, self.size)
        return self._derivs.copy()

    def project(self, M) -> np.ndarray:
        """The linear factorization map Tr_B(M) x rho_B on arbitrary operators."""
        return kron(partial_trace(M, self.dims, "S"), self.rho_B)


def pinching_ansatz(X) -> PinchingAnsatz:
    """Family fixing the diagonal blocks of X's eigenbasis (block dephasing)."""
    return PinchingAnsatz(X)


def selective_ansatz(X, eigenvalue: float) -> SelectiveAnsatz:
    """Family of states renormalized onto one eigenvalue branch of X."""
    return SelectiveAnsatz(X, eigenvalue)


def factorized_ansatz(rho_B, dims: tuple[int, int]) -> FactorizedAnsatz:
    """Family of product states with a fixed bath factor."""
    return FactorizedAnsatz(rho_B, dims)
