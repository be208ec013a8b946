"""Repeated measure-evolve protocols and their continuum limits.

The discrete protocol alternates open-system evolution for a time lam * dt
with a reset onto an ansatz family (the posterior map), tracking only the
family parameters E.  In the limit dt -> 0 with alpha = lam^2 * dt held
fixed, the parameter trajectory follows

    dE_m/dt = lam <A_m> + (alpha / 2) (<B_m> - sum_j <A_j> d<A_m>/dE_j)

with A_m the Heisenberg image of P_m under the generator and B_m the
Heisenberg image of A_m.  The correction bracket vanishes whenever the span
of {I, P_1, ..., P_M} is invariant under the adjoint generator.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import ceil

import numpy as np

from .ansatz import (
    AnsatzFamily,
    GibbsAnsatz,
    RelevantSet,
    _as_params,
    _as_relevant,
    extract_params,
    gibbs_expectations,
    gibbs_jacobian,
    gibbs_state,
)
from .errors import (
    CapacityError,
    ContractError,
    DomainError,
    SingularityError,
    ThermostrobeError,
    ValidationError,
)
from .liouville import GkslGenerator, Propagator, apply_heisenberg
from .matcore import frobenius

STEP_CAP_DEFAULT = 10_000_000
GRID_TOL = 1e-9


@dataclass(frozen=True)
class StrobConfig:
    """Protocol scales: reset spacing dt, coupling lam, horizon, and the
    invariant combination alpha = lam^2 * dt kept fixed along refinements."""

    lam: float = 1.0
    dt: float = 0.1
    horizon: float = 1.0
    alpha: float | None = None
    ode_step: float | None = None
    fd_check: bool = False
    fd_step: float = 1e-5
    step_cap: int = STEP_CAP_DEFAULT

    def __post_init__(self) -> None:
        if not (self.dt > 0.0):
            raise ValidationError(f"dt must be positive, got {self.dt}")
        if self.lam < 0.0:
            raise ValidationError(f"lam must be nonnegative, got {self.lam}")
        if self.horizon < 0.0:
            raise ValidationError(f"horizon must be nonnegative, got {self.horizon}")
        implied = self.lam**2 * self.dt
        if self.alpha is None:
            object.__setattr__(self, "alpha", implied)
        elif abs(self.alpha - implied) > 1e-12 * (1.0 + abs(self.alpha)):
            raise ValidationError(
                f"alpha {self.alpha} is inconsistent with lam^2 dt = {implied}"
            )
        if self.ode_step is None:
            target = min(self.dt / 10.0, 1e-2)
            object.__setattr__(self, "ode_step", self.dt / ceil(self.dt / target - GRID_TOL))
        elif not (0.0 < self.ode_step <= self.dt + GRID_TOL):
            raise ValidationError(
                f"ode_step {self.ode_step} must lie in (0, dt={self.dt}]"
            )
        if not (self.fd_step > 0.0):
            raise ValidationError(f"fd_step must be positive, got {self.fd_step}")
        if self.step_cap < 1:
            raise ValidationError(f"step_cap must be at least 1, got {self.step_cap}")

    def n_steps(self) -> int:
        n = round(self.horizon / self.dt)
        if abs(n * self.dt - self.horizon) > GRID_TOL * max(1.0, self.horizon):
            raise ValidationError(
                f"horizon {self.horizon} is not a whole number of dt={self.dt} intervals"
            )
        return int(n)


@dataclass(eq=False)
class Trajectory:
    """Sampled protocol run: times, parameter rows, optional temperature rows."""

    times: np.ndarray
    params: np.ndarray
    temps: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.times)


def _check_cap(n: int, cap: int) -> None:
    if n > cap:
        raise CapacityError(f"run needs {n} steps, above the cap {cap}")


def _with_step_context(err: ThermostrobeError, step: int, t: float) -> ThermostrobeError:
    err.args = (f"protocol step {step} (t = {t:.9g}): {err.args[0] if err.args else err}",)
    return err


def discrete_step(gen: GkslGenerator, family: AnsatzFamily, E, propagator: Propagator | None = None,
                  cfg: StrobConfig | None = None) -> np.ndarray:
    """One measure-evolve round: evolve state_of(E) for lam * dt, then re-extract E."""
    if propagator is None:
        if cfg is None:
            raise ValidationError("discrete_step needs either a propagator or a config")
        propagator = Propagator.build(gen, cfg.lam * cfg.dt)
    rho = family.state_of(E)
    return extract_params(family, propagator.apply(rho))


def run_discrete(gen: GkslGenerator, family: AnsatzFamily, E0, cfg: StrobConfig,
                 with_temps: bool = False) -> Trajectory:
    """Iterate the discrete protocol for horizon / dt rounds."""
    n = cfg.n_steps()
    _check_cap(n, cfg.step_cap)
    propagator = Propagator.build(gen, cfg.lam * cfg.dt)
    ev = _FamilyEvaluator(family)
    E = _as_params(E0, family.size)
    rows = [E]
    for k in range(n):
        try:
            E = extract_params(family, propagator.apply(ev.state(E)))
        except ThermostrobeError as err:
            raise _with_step_context(err, k, k * cfg.dt)
        rows.append(E)
    times = np.arange(n + 1) * cfg.dt
    params = np.array(rows)
    temps = _temps_for(family, params) if with_temps else None
    return Trajectory(times, params, temps, meta={"protocol": "discrete", "dt": cfg.dt, "lam": cfg.lam})


def _temps_for(family: AnsatzFamily, params: np.ndarray) -> np.ndarray | None:
    beta_of = getattr(family, "beta_of", None)
    if beta_of is None:
        return None
    return np.array([beta_of(row) for row in params])


# ---------------------------------------------------------------------------
# Continuum-limit moments


def relevant_velocity(gen: GkslGenerator, family: AnsatzFamily, E) -> np.ndarray:
    """First moments <A_m> = Tr(L*(P_m) state_of(E))."""
    E = _as_params(E, family.size)
    rho = family.state_of(E)
    out = np.empty(family.size)
    for m, P in enumerate(family.relevant.observables):
        out[m] = frobenius(apply_heisenberg(gen, P), rho).real
    return out


def relevant_curvature(gen: GkslGenerator, family: AnsatzFamily, E) -> np.ndarray:
    """Second moments <B_m> = Tr(L*(L*(P_m)) state_of(E))."""
    E = _as_params(E, family.size)
    rho = family.state_of(E)
    out = np.empty(family.size)
    for m, P in enumerate(family.relevant.observables):
        out[m] = frobenius(apply_heisenberg(gen, apply_heisenberg(gen, P)), rho).real
    return out


def velocity_gradient(gen: GkslGenerator, family: AnsatzFamily, E, mode: str = "analytic",
                      fd_step: float = 1e-5) -> np.ndarray:
    """Matrix W_mj = d<A_m>/dE_j along the family."""
    E = _as_params(E, family.size)
    M = family.size
    W = np.empty((M, M))
    if mode == "analytic":
        derivs = family.derivative_of(E)
        for m, P in enumerate(family.relevant.observables):
            A = apply_heisenberg(gen, P)
            for j in range(M):
                W[m, j] = frobenius(A, derivs[j]).real
        return W
    if mode == "fd":
        for j in range(M):
            bump = np.zeros(M)
            bump[j] = fd_step
            W[:, j] = (relevant_velocity(gen, family, E + bump)
                       - relevant_velocity(gen, family, E - bump)) / (2.0 * fd_step)
        return W
    raise ValidationError(f"unknown gradient mode {mode!r}")


def ode_rhs_first_order(gen: GkslGenerator, family: AnsatzFamily, E, cfg: StrobConfig) -> np.ndarray:
    """Leading-order parameter velocity lam <A>."""
    return cfg.lam * relevant_velocity(gen, family, E)


def ode_rhs_second_order(gen: GkslGenerator, family: AnsatzFamily, E, cfg: StrobConfig,
                         gradient_mode: str = "analytic") -> np.ndarray:
    """Parameter velocity with the finite-reset correction at fixed alpha."""
    a = relevant_velocity(gen, family, E)
    b = relevant_curvature(gen, family, E)
    W = velocity_gradient(gen, family, E, mode=gradient_mode, fd_step=cfg.fd_step)
    return cfg.lam * a + 0.5 * cfg.alpha * (b - W @ a)


def heat_capacity(family: GibbsAnsatz, beta: float) -> float:
    """C(beta) = -beta^2 dE/dbeta for a single-observable Gibbs family."""
    if not isinstance(family, GibbsAnsatz) or family.size != 1:
        raise ContractError("heat capacity needs a canonical (single-observable) Gibbs family")
    beta = float(beta)
    if beta == 0.0:
        raise DomainError("heat capacity is undefined at beta = 0 (dbeta/dE blows up)")
    J = gibbs_jacobian(family.relevant, [beta])[0, 0]
    return -(beta**2) * J


def ode_rhs_temperature(gen: GkslGenerator, family: GibbsAnsatz, beta: float, cfg: StrobConfig) -> float:
    """Temperature form of the second-order velocity, dbeta/dt = -(beta^2 / C) dE/dt."""
    beta = float(beta)
    E = gibbs_expectations(family.relevant, [beta])
    dE = ode_rhs_second_order(gen, family, E, cfg)[0]
    C = heat_capacity(family, beta)
    if C < 1e-15 * (1.0 + beta * beta):
        raise SingularityError(f"heat capacity {C:.3e} at beta = {beta:.6g} is too small to invert")
    return dE * (-(beta * beta) / C)


# ---------------------------------------------------------------------------
# Fixed-step integration


def rk4_step(rhs, x: np.ndarray, h: float) -> np.ndarray:
    k1 = rhs(x)
    k2 = rhs(x + 0.5 * h * k1)
    k3 = rhs(x + 0.5 * h * k2)
    k4 = rhs(x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate(rhs, x0, cfg: StrobConfig) -> Trajectory:
    """Classic fourth-order Runge-Kutta with step cfg.ode_step over cfg.horizon,
    recording every step."""
    x = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
    n = max(1, ceil(cfg.horizon / cfg.ode_step - GRID_TOL)) if cfg.horizon > 0.0 else 0
    _check_cap(n, cfg.step_cap)
    h = cfg.horizon / n if n else 0.0

    def vec_rhs(y: np.ndarray) -> np.ndarray:
        return np.atleast_1d(np.asarray(rhs(y), dtype=float))

    rows = [x.copy()]
    for _ in range(n):
        x = rk4_step(vec_rhs, x, h)
        rows.append(x.copy())
    times = np.arange(n + 1) * h
    return Trajectory(times, np.array(rows), meta={"method": "rk4", "step": h})


def _sub_steps(cfg: StrobConfig) -> tuple[int, float]:
    n_sub = max(1, round(cfg.dt / cfg.ode_step))
    return n_sub, cfg.dt / n_sub


def _heisenberg_images(gen: GkslGenerator, relevant: RelevantSet):
    A = [apply_heisenberg(gen, P) for P in relevant.observables]
    B = [apply_heisenberg(gen, Am) for Am in A]
    return A, B


class _FamilyEvaluator:
    """Per-run family access that warm-starts Gibbs fits from the previous point."""

    def __init__(self, family: AnsatzFamily):
        self.family = family
        self._warm = isinstance(family, GibbsAnsatz)
        self._beta = None

    def _beta_of(self, E: np.ndarray) -> np.ndarray:
        beta = self.family.beta_of(E) if self._beta is None else self.family.beta_of(E, beta_init=self._beta)
        self._beta = beta
        return beta

    def state(self, E: np.ndarray) -> np.ndarray:
        if self._warm:
            return gibbs_state(self.family.relevant, self._beta_of(E))
        return self.family.state_of(E)

    def state_and_derivative(self, E: np.ndarray):
        if self._warm:
            beta = self._beta_of(E)
            return gibbs_state(self.family.relevant, beta), self.family.derivative_from_beta(beta)
        return self.family.state_and_derivative(E)


def _prepared_rhs(gen: GkslGenerator, family: AnsatzFamily, cfg: StrobConfig, order: int,
                  mode: str):
    """Velocity closure with the Heisenberg images precomputed once per run."""
    A, B = _heisenberg_images(gen, family.relevant)
    M = family.size
    ev = _FamilyEvaluator(family)

    def velocities(rho: np.ndarray) -> np.ndarray:
        return np.array([frobenius(Am, rho).real for Am in A])

    if order == 1:
        def rhs(E: np.ndarray) -> np.ndarray:
            return cfg.lam * velocities(ev.state(E))
        return rhs

    def rhs(E: np.ndarray) -> np.ndarray:
        if mode == "fd":
            rho = ev.state(E)
            W = np.empty((M, M))
            for j in range(M):
                bump = np.zeros(M)
                bump[j] = cfg.fd_step
                W[:, j] = (velocities(ev.state(E + bump))
                           - velocities(ev.state(E - bump))) / (2.0 * cfg.fd_step)
        else:
            rho, derivs = ev.state_and_derivative(E)
            W = np.array([[frobenius(Am, Dj).real for Dj in derivs] for Am in A])
        a = velocities(rho)
        b = np.array([frobenius(Bm, rho).real for Bm in B])
        return cfg.lam * a + 0.5 * cfg.alpha * (b - W @ a)

    return rhs


def run_ode(gen: GkslGenerator, family: AnsatzFamily, E0, cfg: StrobConfig, order: int = 2,
            with_temps: bool = False, gradient_mode: str | None = None) -> Trajectory:
    """Integrate the continuum-limit parameter velocity, sampled on the dt grid."""
    if order not in (1, 2):
        raise ValidationError(f"order must be 1 or 2, got {order}")
    n = cfg.n_steps()
    n_sub, h = _sub_steps(cfg)
    _check_cap(n * n_sub, cfg.step_cap)
    mode = gradient_mode or ("fd" if cfg.fd_check else "analytic")
    rhs = _prepared_rhs(gen, family, cfg, order, mode)

    E = _as_params(E0, family.size)
    rows = [E]
    fd_dev = 0.0
    for k in range(n):
        try:
            for _ in range(n_sub):
                E = rk4_step(rhs, E, h)
        except ThermostrobeError as err:
            raise _with_step_context(err, k, k * cfg.dt)
        rows.append(E)
    if order == 2 and cfg.fd_check and mode == "fd":
        W_fd = velocity_gradient(gen, family, E, mode="fd", fd_step=cfg.fd_step)
        W_an = velocity_gradient(gen, family, E, mode="analytic")
        fd_dev = float(np.max(np.abs(W_fd - W_an)))
    times = np.arange(n + 1) * cfg.dt
    params = np.array(rows)
    temps = _temps_for(family, params) if with_temps else None
    meta = {"protocol": f"ode{order}", "ode_step": h, "substeps": n_sub,
            "gradient_mode": mode if order == 2 else "none"}
    if cfg.fd_check and order == 2:
        meta["fd_gradient_deviation"] = fd_dev
    return Trajectory(times, params, temps, meta=meta)


def run_ode_temperature(gen: GkslGenerator, family: GibbsAnsatz, beta0: float,
                        cfg: StrobConfig) -> Trajectory:
    """Integrate the temperature form dbeta/dt for a canonical Gibbs family."""
    if not isinstance(family, GibbsAnsatz) or family.size != 1:
        raise ContractError("the temperature velocity needs a canonical Gibbs family")
    n = cfg.n_steps()
    n_sub, h = _sub_steps(cfg)
    _check_cap(n * n_sub, cfg.step_cap)
    A, B = _heisenberg_images(gen, family.relevant)
    relevant = family.relevant

    def rhs(bvec: np.ndarray) -> np.ndarray:
        # known beta: no fitting needed anywhere in the velocity
        beta = _as_params(bvec, 1)
        rho = gibbs_state(relevant, beta)
        derivs = family.derivative_from_beta(beta)
        a = np.array([frobenius(Am, rho).real for Am in A])
        b = np.array([frobenius(Bm, rho).real for Bm in B])
        W = np.array([[frobenius(Am, Dj).real for Dj in derivs] for Am in A])
        dE = (cfg.lam * a + 0.5 * cfg.alpha * (b - W @ a))[0]
        C = heat_capacity(family, float(beta[0]))
        if C < 1e-15 * (1.0 + float(beta[0]) ** 2):
            raise SingularityError(
                f"heat capacity {C:.3e} at beta = {beta[0]:.6g} is too small to invert"
            )
        return np.array([dE * (-(float(beta[0]) ** 2) / C)])

    b = np.array([float(beta0)])
    temps = [b.copy()]
    for k in range(n):
        try:
            for _ in range(n_sub):
                b = rk4_step(rhs, b, h)
        except ThermostrobeError as err:
            raise _with_step_context(err, k, k * cfg.dt)
        temps.append(b.copy())
    times = np.arange(n + 1) * cfg.dt
    temps = np.array(temps)
    params = np.array([gibbs_expectations(family.relevant, row) for row in temps])
    return Trajectory(times, params, temps,
                      meta={"protocol": "ode-temperature", "ode_step": h, "substeps": n_sub})


# ---------------------------------------------------------------------------
# Invariant-subspace diagnostics


@dataclass(eq=False)
class InvarianceResult:
    """Least-squares closure of the adjoint generator on span{I, P_1..P_M}."""

    matrix: np.ndarray
    residual: float
    invariant: bool
    tolerance: float


def invariant_subspace_matrix(gen: GkslGenerator, observables, tol: float = 1e-10) -> InvarianceResult:
    """Fit L*(S_i) = sum_j L_ij S_j over the affine basis S = (I, P_1, ..., P_M).

    The returned matrix includes the identity row (exactly zero, since the
    adjoint of a trace-preserving generator kills I).  When the residual is
    below tol the correction bracket of the second-order velocity vanishes
    identically on the family.
    """
    relevant = _as_relevant(observables)
    d = relevant.dim
    basis = [np.eye(d, dtype=complex), *relevant.observables]
    n = len(basis)
    G = np.empty((n, n))
    for a in range(n):
        for b in range(n):
            G[a, b] = frobenius(basis[a], basis[b]).real
    L = np.zeros((n, n))
    residual_sq = 0.0
    for i, S in enumerate(basis):
        target = apply_heisenberg(gen, S)
        y = np.array([frobenius(Bk, target).real for Bk in basis])
        c = np.linalg.solve(G, y)
        L[i] = c
        fit = sum(ck * Bk for ck, Bk in zip(c, basis))
        residual_sq += float(np.sum(np.abs(target - fit) ** 2))
    residual = float(np.sqrt(residual_sq))
    return InvarianceResult(L, residual, residual <= tol, tol)


def projector_ode_rhs(gen: GkslGenerator, family: AnsatzFamily, rho, cfg: StrobConfig) -> np.ndarray:
    """State-space form of the continuum limit for linear families,
    lam P L P rho + (alpha/2) (P L L P rho - P L P L P rho)."""
    project = getattr(family, "project", None)
    if not family.is_linear or project is None:
        raise ContractError("the state-space velocity is defined for linear families only")
    from .liouville import apply_schrodinger

    Pr = project(rho)
    seed = apply_schrodinger(gen, Pr)
    first = project(seed)
    second = project(apply_schrodinger(gen, seed))
    nested = project(apply_schrodinger(gen, first))
    return cfg.lam * first + 0.5 * cfg.alpha * (second - nested)
