"""Time stepping for ``eps u_tt + alpha u_t + beta u - L u = f(x, u)``.

The linear group is advanced by the Crank-Nicolson (Cayley) map of
``B(u, v) = (v, -(alpha v + S u) / eps)`` with ``S = beta - L_h``. Writing
``m = v + v'`` and ``a = dt / 2``, the step reduces to the single SPD solve

    [(1 + a alpha / eps) + (a^2 / eps) S] m = 2 v - (2 a / eps) S u,

followed by ``u' = u + a m`` and ``v' = m - v``. The nonlinear part enters
through the exact kick ``v <- v + dt f(u) / eps``, composed with two half
linear steps (Strang) or one full step (Lie).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
import scipy.sparse as sp

from . import grid as gr
from . import nemitski
from .errors import BlowUpError, ConfigurationError, NumericalFailure
from .operators import CoefficientSet, conjugate_gradient, energy_form

BLOWUP_THRESHOLD = 1e12


@dataclass(frozen=True)
class StateZ:
    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        if np.shape(self.u) != np.shape(self.v):
            raise ConfigurationError("u and v must live on the same grid")

    @classmethod
    def zeros(cls, grid: gr.Grid) -> "StateZ":
        return cls(np.zeros(grid.size), np.zeros(grid.size))

    def __add__(self, other: "StateZ") -> "StateZ":
        return StateZ(self.u + other.u, self.v + other.v)

    def __sub__(self, other: "StateZ") -> "StateZ":
        return StateZ(self.u - other.u, self.v - other.v)

    def scaled(self, c: float) -> "StateZ":
        return StateZ(c * self.u, c * self.v)


@dataclass(frozen=True)
class EvolutionConfig:
    dt: float
    T: float
    record_every: int = 1
    cg_tol: float = 1e-10
    scheme: str = "strang"

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigurationError("dt must be positive")
        if not self.T >= 0:
            raise ConfigurationError("T must be nonnegative")
        if not self.cg_tol > 0:
            raise ConfigurationError("cg_tol must be positive")
        if int(self.record_every) < 1:
            raise ConfigurationError("record_every must be a positive integer")
        if self.scheme not in ("strang", "lie"):
            raise ConfigurationError(f"unknown scheme {self.scheme!r}")

    @property
    def steps(self) -> int:
        k = int(round(self.T / self.dt))
        if abs(k * self.dt - self.T) > 1e-9 * max(1.0, self.T):
            raise ConfigurationError(f"T={self.T} is not a multiple of dt={self.dt}")
        return k


@dataclass
class Trajectory:
    times: np.ndarray
    states: list
    config: EvolutionConfig
    diagnostics: dict = field(default_factory=dict)
    stencil: list | None = None

    @property
    def U(self) -> np.ndarray:
        return np.array([z.u for z in self.states])

    @property
    def V(self) -> np.ndarray:
        return np.array([z.v for z in self.states])

    @property
    def record_dt(self) -> float:
        return self.config.dt * self.config.record_every

    @property
    def final(self) -> StateZ:
        return self.states[-1]

    def __len__(self) -> int:
        return len(self.times)


class LinearStepper:
    """Cayley steps for fixed coefficients; system matrices are cached per step size."""

    def __init__(self, coeffs: CoefficientSet, cg_tol: float = 1e-10):
        self.coeffs = coeffs
        self.cg_tol = cg_tol
        self._systems: dict[float, sp.csr_matrix] = {}

    def _system(self, a: float) -> sp.csr_matrix:
        mat = self._systems.get(a)
        if mat is None:
            c = self.coeffs
            mat = sp.csr_matrix(sp.diags(1.0 + a * c.alpha / c.eps) + (a * a / c.eps) * c.form_matrix)
            self._systems[a] = mat
        return mat

    def step(self, z: StateZ, dt: float) -> StateZ:
        if dt == 0:
            return z
        c = self.coeffs
        a = 0.5 * dt
        rhs = 2.0 * z.v - (2.0 * a / c.eps) * c.form_matrix.dot(z.u)
        mat = self._system(a)
        try:
            m, _ = conjugate_gradient(mat.dot, rhs, x0=2.0 * z.v, tol=self.cg_tol)
        except NumericalFailure as exc:
            raise NumericalFailure(f"linear step failed: {exc}") from exc
        return StateZ(z.u + a * m, m - z.v)


def linear_step(coeffs: CoefficientSet, z: StateZ, dt: float, cg_tol: float = 1e-10) -> StateZ:
    """One Cayley step of size ``dt`` (negative ``dt`` steps backwards)."""
    coeffs.grid.check(z.u, z.v)
    return LinearStepper(coeffs, cg_tol).step(z, dt)


def kick(spec: nemitski.NonlinearitySpec | None, z: StateZ, dt: float, eps: float) -> StateZ:
    if spec is None:
        return z
    f, _, _ = nemitski.evaluate(spec, z.u)
    return StateZ(z.u, z.v + (dt / eps) * f)


def _step(stepper: LinearStepper, spec, z: StateZ, dt: float, scheme: str) -> StateZ:
    eps = stepper.coeffs.eps
    if scheme == "lie":
        return kick(spec, stepper.step(z, dt), dt, eps)
    z = stepper.step(z, 0.5 * dt)
    z = kick(spec, z, dt, eps)
    return stepper.step(z, 0.5 * dt)


def semiflow_step(coeffs: CoefficientSet, spec, z: StateZ, dt: float,
                  scheme: str = "strang", cg_tol: float = 1e-10) -> StateZ:
    coeffs.grid.check(z.u, z.v)
    return _step(LinearStepper(coeffs, cg_tol), spec, z, dt, scheme)


def energy_norm(coeffs: CoefficientSet, z: StateZ) -> float:
    """``<<z, z>>^{1/2} = ((1/eps) E(u) + |v|^2)^{1/2}``."""
    g = coeffs.grid
    val = energy_form(coeffs, z.u, z.u) / coeffs.eps + gr.l2_inner(g, z.v, z.v)
    return float(np.sqrt(max(val, 0.0)))


def z_norm(grid: gr.Grid, z: StateZ) -> float:
    """``|z|_Z = (|grad u|^2 + |u|^2 + |v|^2)^{1/2}``."""
    return float(np.sqrt(gr.h1_norm(grid, z.u) ** 2 + gr.l2_inner(grid, z.v, z.v)))


def _blown_up(grid, z: StateZ) -> bool:
    if not (np.all(np.isfinite(z.u)) and np.all(np.isfinite(z.v))):
        return True
    return z_norm(grid, z) > BLOWUP_THRESHOLD


def evolve(coeffs: CoefficientSet, spec, z0: StateZ, config: EvolutionConfig,
           recorders: Mapping[str, Callable[[StateZ], float]] | None = None,
           t0: float = 0.0, stencil: bool = False) -> Trajectory:
    """March ``z0`` to ``t0 + T`` with fixed steps, recording every ``record_every`` steps.

    The final state is always recorded. ``spec=None`` gives the linear flow.
    With ``stencil=True`` the states one step before and after every record
    are kept as ``(prev, next)`` pairs (``None`` where unavailable), so time
    derivatives at records can use spacing ``dt`` on a thinned trajectory.
    Raises :class:`BlowUpError` on non-finite values or ``|z|_Z > 1e12``.
    """
    grid = coeffs.grid
    grid.check(z0.u, z0.v)
    steps = config.steps
    stepper = LinearStepper(coeffs, config.cg_tol)
    recorders = dict(recorders or {})
    times, states = [t0], [z0]
    series = {name: [fn(z0)] for name, fn in recorders.items()}
    pairs = [[None, None]] if stencil else None
    z = z0
    last_finite = t0
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(1, steps + 1):
            prev = z
            z = _step(stepper, spec, z, config.dt, config.scheme)
            t = t0 + i * config.dt
            if _blown_up(grid, z):
                raise BlowUpError(f"solution blew up before t={t:.6g}", last_finite_time=last_finite)
            last_finite = t
            if stencil and pairs[-1][1] is None and i - 1 == (len(times) - 1) * config.record_every:
                pairs[-1][1] = z
            if i % config.record_every == 0 or i == steps:
                times.append(t)
                states.append(z)
                if stencil:
                    pairs.append([prev, None])
                for name, fn in recorders.items():
                    series[name].append(fn(z))
    diagnostics = {k: np.asarray(v, dtype=float) for k, v in series.items()}
    if stencil:
        pairs = [tuple(p) for p in pairs]
    return Trajectory(np.asarray(times), states, config, diagnostics, pairs)


@dataclass
class DecayReport:
    max_ratio: float
    mu: float
    passed: bool
    times: np.ndarray
    ratios: np.ndarray


def linear_decay_check(coeffs: CoefficientSet, z0: StateZ, T: float, dt: float, mu: float,
                       tol: float = 0.02, record_every: int = 1,
                       cg_tol: float = 1e-10) -> DecayReport:
    """Max over records of ``<<z(t)>>^{1/2} / (2 exp(-mu t) <<z0>>^{1/2})`` for ``f = 0``."""
    n0 = energy_norm(coeffs, z0)
    config = EvolutionConfig(dt, T, record_every, cg_tol)
    traj = evolve(coeffs, None, z0, config, {"energy": lambda z: energy_norm(coeffs, z)})
    if n0 == 0:
        ratios = np.zeros(len(traj))
    else:
        ratios = traj.diagnostics["energy"] / (2.0 * np.exp(-mu * traj.times) * n0)
    worst = float(ratios.max())
    return DecayReport(worst, mu, worst <= 1.0 + tol, traj.times, ratios)


def _linear_flow(stepper: LinearStepper, z: StateZ, steps: int, dt: float, scheme: str) -> StateZ:
    for _ in range(steps):
        z = _step(stepper, None, z, dt, scheme)
    return z


def mild_residual(coeffs: CoefficientSet, spec, trajectory: Trajectory, t_index: int) -> float:
    """``|z(t) - T(t) z0 - int_0^t T(t - s) Phi(z(s)) ds|_Z`` at record ``t_index``.

    ``T(.)`` is the composed linear substeps of the stepper used by
    :func:`evolve`; the time integral is the trapezoid rule over the records.
    Cost grows linearly in ``t_index``; meant for small grids.
    """
    cfg = trajectory.config
    if not 0 <= t_index < len(trajectory):
        raise ConfigurationError("t_index out of range")
    if len(trajectory) < 2 and t_index > 0:
        raise ConfigurationError("need at least two records")
    if t_index == 0:
        return 0.0
    if t_index == len(trajectory) - 1 and (len(trajectory) - 1) * cfg.record_every != cfg.steps:
        raise ConfigurationError("final record is off the uniform cadence")
    grid = coeffs.grid
    stepper = LinearStepper(coeffs, cfg.cg_tol)
    r = cfg.record_every
    h = trajectory.record_dt

    def phi(z):
        if spec is None:
            return StateZ.zeros(grid)
        f, _, _ = nemitski.evaluate(spec, z.u)
        return StateZ(np.zeros(grid.size), f / coeffs.eps)

    zero = StateZ.zeros(grid)
    acc = zero
    free = trajectory.states[0]
    for j in range(t_index + 1):
        if j > 0:
            acc = _linear_flow(stepper, acc, r, cfg.dt, cfg.scheme)
            free = _linear_flow(stepper, free, r, cfg.dt, cfg.scheme)
        weight = 0.5 * h if j in (0, t_index) else h
        acc = acc + phi(trajectory.states[j]).scaled(weight)
    return z_norm(grid, trajectory.states[t_index] - free - acc)
