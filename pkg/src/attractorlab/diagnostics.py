"""Lyapunov functionals, energy identities and tail bounds along trajectories.

Weighted functionals use a weight ``gamma = gammabar^2`` sampled at the nodes
including the boundary. Gradient terms are interface sums with ``gamma``
averaged arithmetically; the cross term of the identity for ``V`` uses the
interface difference of ``gamma`` and the interface average of
``W = delta u + v``. With this choice the identity

    V' + 2 delta V = int gamma (2 delta eps - alpha) W^2 + int gamma W f - sum W_avg a D(gamma) D(u)

holds exactly for the spatially discrete system, so the residuals measured
here are pure time-discretisation errors.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from . import grid as gr
from . import nemitski
from .errors import ConfigurationError, HypothesisViolation, PreconditionError
from .grid import Grid
from .operators import CoefficientSet, ConstantsBundle, Rates, energy_form, hminus1_norm
from .semiflow import EvolutionConfig, StateZ, Trajectory, evolve, z_norm


@dataclass(frozen=True, eq=False)
class WeightSet:
    grid: Grid
    kind: str
    k: float | None
    gamma: np.ndarray
    gamma_bar: np.ndarray
    grad_gamma: tuple
    grad_gamma_bar: tuple
    gamma_avg: tuple
    gamma_diff: tuple
    gamma_bar_ext: np.ndarray
    gamma_bar_iface: tuple

    @classmethod
    def ones(cls, grid: Grid) -> "WeightSet":
        one = np.ones(grid.size)
        zero = tuple(np.zeros_like(x) for x in gr.sample_interfaces(grid, 0.0))
        ones_i = gr.sample_interfaces(grid, 1.0)
        return cls(grid, "ones", None, one, one, zero, zero, ones_i, zero,
                   gr.sample_extended(grid, 1.0), ones_i)

    @classmethod
    def cutoff(cls, grid: Grid, k: float) -> "WeightSet":
        bar, full, dbar, dfull = gr.cutoff_functions(k)
        cut = gr.cutoffs(grid, k)
        ext = gr.sample_extended(grid, full)
        bar_iface = tuple(gr.sample_interfaces(grid, bar)[d] for d in range(grid.dim))
        return cls(grid, "cutoff", float(k), cut.theta, cut.thetabar, cut.grad_theta,
                   cut.grad_thetabar, gr.interface_average(grid, ext),
                   gr.interface_difference(grid, ext), gr.sample_extended(grid, bar), bar_iface)

    @property
    def label(self) -> str:
        return "ones" if self.kind == "ones" else f"cutoff{self.k:g}"


def _weighted_dirichlet(coeffs: CoefficientSet, u: np.ndarray, weight_iface: tuple) -> float:
    """``sum_d sum a_d w_d (D_d u)^2 h^dim``."""
    g = coeffs.grid
    grads = gr.gradient(g, u)
    return g.cell_volume * float(sum(np.dot(a * w, d * d) for a, w, d in zip(coeffs.a, weight_iface, grads)))


class LyapunovValues(NamedTuple):
    V: float
    Vstar: float
    eta: float
    w: float
    s: float
    s_formula: float


def s_terms(coeffs: CoefficientSet, u: np.ndarray, weights: WeightSet) -> tuple[float, float]:
    """``(s, s_formula)``.

    ``s`` is the exact discrete difference
    ``sum a gamma_avg (Du)^2 - sum a (D(gammabar u))^2``; ``s_formula`` the
    continuum expression ``-2 gammabar u (A grad gammabar) . grad u -
    u^2 (A grad gammabar) . grad gammabar`` evaluated with analytic weight
    samples at the interfaces.
    """
    g = coeffs.grid
    if weights.kind == "ones":
        return 0.0, 0.0
    ext_u = gr.extend(g, u)
    prod = gr.interface_difference(g, weights.gamma_bar_ext * ext_u)
    lhs = _weighted_dirichlet(coeffs, u, weights.gamma_avg)
    rhs = g.cell_volume * float(sum(np.dot(a, p * p) for a, p in zip(coeffs.a, prod)))
    s = lhs - rhs
    ubar = gr.interface_average(g, ext_u)
    du = gr.interface_difference(g, ext_u)
    formula = 0.0
    for a, gb, dgb, ub, d in zip(coeffs.a, weights.gamma_bar_iface, weights.grad_gamma_bar, ubar, du):
        formula += float(np.sum(a * (-2.0 * gb * ub * dgb * d - ub * ub * dgb * dgb)))
    return s, g.cell_volume * formula


def lyapunov_values(coeffs: CoefficientSet, spec, z: StateZ, weights: WeightSet,
                    delta: float, mu: float) -> LyapunovValues:
    g = coeffs.grid
    g.check(z.u, z.v)
    eps, alpha, beta = coeffs.eps, coeffs.alpha, coeffs.beta
    u, v = z.u, z.v
    gam = weights.gamma
    W = delta * u + v
    pointwise = eps * W * W + (beta - delta * alpha + delta**2 * eps) * u * u
    V = 0.5 * (g.cell_volume * float(np.dot(gam, pointwise))
               + _weighted_dirichlet(coeffs, u, weights.gamma_avg))
    if spec is None:
        Vstar = 0.0
    else:
        _, F, _ = nemitski.evaluate(spec, u)
        Vstar = g.cell_volume * float(np.dot(gam, F))
    w = (4 * mu * gr.l2_inner(g, u, v) + gr.l2_inner(g, v, v)
         + (2 * mu / eps) * gr.l2_inner(g, alpha * u, u) + energy_form(coeffs, u, u) / eps)
    s, s_formula = s_terms(coeffs, u, weights)
    return LyapunovValues(V, Vstar, V - Vstar, w, s, s_formula)


def cross_term(coeffs: CoefficientSet, z: StateZ, weights: WeightSet, delta: float) -> float:
    """``int (delta u + v) (A grad gamma) . grad u`` on the staggered grid."""
    if weights.kind == "ones":
        return 0.0
    g = coeffs.grid
    Wbar = gr.average(g, delta * z.u + z.v)
    du = gr.gradient(g, z.u)
    return g.cell_volume * float(
        sum(np.dot(wb * a * dg, d) for wb, a, dg, d in zip(Wbar, coeffs.a, weights.gamma_diff, du))
    )


def identity_rhs(coeffs: CoefficientSet, spec, z: StateZ, weights: WeightSet, delta: float) -> float:
    g = coeffs.grid
    W = delta * z.u + z.v
    out = g.cell_volume * float(np.dot(weights.gamma * (2 * delta * coeffs.eps - coeffs.alpha), W * W))
    if spec is not None:
        f, _, _ = nemitski.evaluate(spec, z.u)
        out += g.cell_volume * float(np.dot(weights.gamma * W, f))
    return out - cross_term(coeffs, z, weights, delta)


def tail_energy(coeffs: CoefficientSet, z: StateZ, k: float | None, delta: float) -> float:
    """``int theta_k ((eps/2) v^2 + (A grad u) . grad u + (beta - delta alpha) u^2)``.

    ``k=None`` gives the total energy (``theta_k = 1``).
    """
    g = coeffs.grid
    weights = WeightSet.ones(g) if k is None else WeightSet.cutoff(g, k)
    return _tail_energy(coeffs, z, weights, delta)


def _tail_energy(coeffs, z, weights, delta):
    g = coeffs.grid
    point = 0.5 * coeffs.eps * z.v**2 + (coeffs.beta - delta * coeffs.alpha) * z.u**2
    return g.cell_volume * float(np.dot(weights.gamma, point)) + _weighted_dirichlet(
        coeffs, z.u, weights.gamma_avg)


def total_energy(coeffs: CoefficientSet, z: StateZ, delta: float) -> float:
    return tail_energy(coeffs, z, None, delta)


# -- checks ------------------------------------------------------------------

@dataclass
class CheckReport:
    name: str
    passed: bool
    value: float
    scale: float = 1.0
    witness: dict | None = None
    times: np.ndarray | None = None
    series: np.ndarray | None = None
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {"name": self.name, "passed": bool(self.passed), "value": float(self.value),
               "scale": float(self.scale), "witness": self.witness}
        out.update({k: v for k, v in self.details.items() if np.isscalar(v) or isinstance(v, (list, dict))})
        return out


def _uniform_records(traj: Trajectory, minimum: int = 3):
    """Times/states restricted to the uniformly spaced prefix of the records."""
    times = np.asarray(traj.times)
    states = list(traj.states)
    if len(times) >= 2:
        step = traj.record_dt
        keep = len(times)
        if not np.isclose(times[-1] - times[-2], step, rtol=1e-9, atol=0):
            keep -= 1
        times, states = times[:keep], states[:keep]
    if len(times) < minimum:
        raise ConfigurationError(f"need at least {minimum} uniformly spaced records, got {len(times)}")
    return times, states


def _derivative_points(traj: Trajectory):
    """``(t, z, z_minus, z_plus, step)`` for every record with a centred difference.

    Stencil pairs recorded by :func:`~attractorlab.semiflow.evolve` give
    spacing ``dt``; otherwise neighbouring uniform records are used.
    """
    if traj.stencil is not None:
        pts = [(float(t), z, zm, zp, traj.config.dt)
               for t, z, (zm, zp) in zip(traj.times, traj.states, traj.stencil)
               if zm is not None and zp is not None]
        if not pts:
            raise ConfigurationError("no record has both stencil neighbours")
        return pts
    times, states = _uniform_records(traj)
    step = traj.record_dt
    return [(float(times[i]), states[i], states[i - 1], states[i + 1], step)
            for i in range(1, len(times) - 1)]


def _derivatives(points, fn):
    """Values of ``fn`` at the points and their centred time derivatives."""
    vals = np.array([fn(z) for _, z, _, _, _ in points])
    dvals = np.array([(fn(zp) - fn(zm)) / (2.0 * step) for _, _, zm, zp, step in points])
    return vals, dvals


def _report(name, res, points, scale, tol, larger_is_worse=True, details=None):
    times = np.array([p[0] for p in points])
    i = int(np.argmax(res) if larger_is_worse else np.argmin(res))
    worst = float(res[i])
    passed = tol is None or (worst <= tol if larger_is_worse else worst >= -tol)
    return CheckReport(name, passed, worst, max(scale, 1e-300), {"t": float(times[i])}, times, res,
                       details or {})


def energy_identity_check(traj: Trajectory, coeffs: CoefficientSet, spec, weights: WeightSet,
                          delta: float, tol: float | None = None) -> CheckReport:
    pts = _derivative_points(traj)
    V, dV = _derivatives(pts, lambda z: lyapunov_values(coeffs, spec, z, weights, delta, 0.0).V)
    rhs = np.array([identity_rhs(coeffs, spec, z, weights, delta) for _, z, _, _, _ in pts])
    res = np.abs(dV + 2 * delta * V - rhs)
    return _report(f"energy_identity[{weights.label}]", res, pts, float(np.max(np.abs(V))), tol)


def vstar_derivative_check(traj: Trajectory, spec, weights: WeightSet,
                           tol: float | None = None) -> CheckReport:
    pts = _derivative_points(traj)
    g = weights.grid
    if spec is None:
        return _report(f"vstar_derivative[{weights.label}]", np.zeros(len(pts)), pts, 1.0, tol)

    def vstar(z):
        return g.cell_volume * float(np.dot(weights.gamma, nemitski.evaluate(spec, z.u)[1]))

    Vs, dVs = _derivatives(pts, vstar)
    rhs = np.array([g.cell_volume * float(np.dot(weights.gamma * nemitski.evaluate(spec, z.u)[0], z.v))
                    for _, z, _, _, _ in pts])
    res = np.abs(dVs - rhs)
    scale = max(float(np.max(np.abs(Vs))), float(np.max(np.abs(rhs))))
    return _report(f"vstar_derivative[{weights.label}]", res, pts, scale, tol)


def ball_energy_check(traj: Trajectory, coeffs: CoefficientSet, spec, delta: float,
                      tol: float | None = None) -> CheckReport:
    """Residual of the integrated equation for ``V_1 - V*`` at every uniform record.

    ``g(s) = int (2 delta eps - alpha) W^2 + delta int u f - 2 delta int F`` is
    integrated against ``exp(2 delta s)`` by the cumulative trapezoid rule.
    """
    from scipy.integrate import cumulative_trapezoid

    times, states = _uniform_records(traj, minimum=1)
    g = coeffs.grid
    ones = WeightSet.ones(g)
    vals = [lyapunov_values(coeffs, spec, z, ones, delta, 0.0) for z in states]
    ball = np.array([v.eta for v in vals])
    src = []
    for z in states:
        W = delta * z.u + z.v
        total = g.cell_volume * float(np.dot(2 * delta * coeffs.eps - coeffs.alpha, W * W))
        if spec is not None:
            f, F, _ = nemitski.evaluate(spec, z.u)
            total += delta * g.cell_volume * float(np.dot(z.u, f)) - 2 * delta * g.cell_volume * float(F.sum())
        src.append(total)
    t0 = times[0]
    rel = times - t0
    integral = cumulative_trapezoid(np.exp(2 * delta * rel) * np.asarray(src), rel, initial=0.0)
    predicted = np.exp(-2 * delta * rel) * (ball[0] + integral)
    res = np.abs(ball - predicted)
    i = int(np.argmax(res))
    scale = max(float(np.max(np.abs(ball))), 1e-300)
    worst = float(res[i])
    return CheckReport("ball_energy", tol is None or worst <= tol, worst, scale,
                       {"t": float(times[i])}, times, res)


def calibrate_tolerance(reports: Sequence[CheckReport], dt: float, h: float,
                        safety: float = 10.0) -> float:
    """``C`` of the tolerance model ``C (dt^2 + h^2)`` from identity residuals."""
    worst = max((r.value for r in reports), default=0.0)
    return safety * worst / (dt * dt + h * h)


def tol_discrete(C: float, dt: float, h: float) -> float:
    return C * (dt * dt + h * h)


def eta_inequality_check(traj: Trajectory, coeffs: CoefficientSet, spec, weights: WeightSet,
                         rates: Rates, certificate: nemitski.DissipativityCertificate,
                         tol: float = 0.0) -> CheckReport:
    """Slack of ``eta' + 2 delta nu eta <= 2 delta (mubar - nu) int gamma c - cross - delta (1 - nu) int s``."""
    pts = _derivative_points(traj)
    g = coeffs.grid
    delta, nu, mubar = rates.delta, rates.nu, certificate.mubar
    eta, deta = _derivatives(pts, lambda z: lyapunov_values(coeffs, spec, z, weights, delta, 0.0).eta)
    const = 2 * delta * (mubar - nu) * g.cell_volume * float(np.dot(weights.gamma, certificate.c))
    cross = np.array([cross_term(coeffs, z, weights, delta) for _, z, _, _, _ in pts])
    s = np.array([s_terms(coeffs, z.u, weights)[0] for _, z, _, _, _ in pts])
    slack = const - cross - delta * (1 - nu) * s - (deta + 2 * delta * nu * eta)
    return _report(f"eta_inequality[{weights.label}]", slack, pts, float(np.max(np.abs(eta))), tol,
                   larger_is_worse=False, details={"tol": tol})


def w_decay_check(traj: Trajectory, coeffs: CoefficientSet, mu: float, tol: float = 0.0) -> CheckReport:
    """Sandwich ``||z||^2 / 2 <= w <= 2 ||z||^2`` at every record and ``w' + 2 mu w <= tol``."""
    g = coeffs.grid
    ones = WeightSet.ones(g)

    def w_of(z):
        return lyapunov_values(coeffs, None, z, ones, 0.0, mu).w

    def norm2(z):
        return energy_form(coeffs, z.u, z.u) / coeffs.eps + gr.l2_inner(g, z.v, z.v)

    w_all = np.array([w_of(z) for z in traj.states])
    n_all = np.array([norm2(z) for z in traj.states])
    lower = float(np.min(w_all - 0.5 * n_all))
    upper = float(np.min(2.0 * n_all - w_all))
    scale = max(float(np.max(n_all)), 1e-300)
    pts = _derivative_points(traj)
    w, dw = _derivatives(pts, w_of)
    decay = dw + 2 * mu * w
    rep = _report("w_decay", decay, pts, scale, tol,
                  details={"sandwich_lower_slack": lower, "sandwich_upper_slack": upper, "tol": tol})
    rep.passed = rep.passed and min(lower, upper) >= -1e-12 * scale
    return rep


# -- tail constants ----------------------------------------------------------

@dataclass
class TailReport:
    k: float | None
    xi_k: float
    zeta_k: float
    c_k: float
    Mbar: float
    Mprime: float
    cprime: float
    cbar: float
    R: float
    mode: str

    def to_dict(self) -> dict:
        return {key: (None if val is None else (val if isinstance(val, str) else float(val)))
                for key, val in self.__dict__.items()}


def _outer_integral(grid: Grid, c: np.ndarray, k: float) -> float:
    mask = grid.radius >= k
    return grid.cell_volume * float(np.sum(np.abs(c)[mask]))


def constants_mode_Mbar(coeffs: CoefficientSet, bundle: ConstantsBundle, R: float) -> float:
    """A-priori bound on ``|eta(0)|`` for ``|z(0)|_Z <= R``."""
    if bundle.Lbeta is None or bundle.La is None or bundle.C2 is None:
        raise ConfigurationError("constants mode needs Lbeta, La and C2 in the bundle")
    d, eps, a1, rho = bundle.delta, coeffs.eps, coeffs.a1, bundle.rhobar
    quad = 0.5 * (2 * d * d * eps * R * R + 2 * eps * R * R + a1 * R * R + (bundle.Lbeta**2 + d * d * eps) * R * R)
    growth = bundle.Cbar * (bundle.La**2 * R * R / 2 + bundle.C2 ** (rho + 2) * R ** (rho + 2) / (rho + 2))
    return quad + growth + R * bundle.taubar


def tail_constants(coeffs: CoefficientSet, spec, bundle: ConstantsBundle,
                   certificate: nemitski.DissipativityCertificate, R: float, k: float | None,
                   mode: str = "trajectory", z0: StateZ | None = None) -> TailReport:
    """Tail constants for cutoff radius ``k`` (``k=None``: the total bound, ``c_k = c'``)."""
    if mode not in ("constants", "trajectory"):
        raise ConfigurationError(f"unknown mode {mode!r}")
    if R < 0:
        raise ConfigurationError("R must be nonnegative")
    g = coeffs.grid
    d, nu, mubar = bundle.delta, bundle.nu, certificate.mubar
    a1 = coeffs.a1
    total_c = g.cell_volume * float(np.sum(np.abs(certificate.c)))
    cbar = 2 * d * (mubar - nu) * total_c
    cprime = 2 * (cbar / (2 * d * nu) + total_c)
    if k is None:
        xi, zeta = cbar, total_c
    else:
        if not k > 0:
            raise ConfigurationError("k must be positive")
        Ct, Ctb = bundle.C_theta, bundle.C_thetabar
        outer = _outer_integral(g, certificate.c, k)
        xi = (2 * d * (mubar - nu) * outer + a1 * (Ct / k) * (d * R + R) * R
              + a1 * d * (1 - nu) * (2 * Ctb / k + Ctb**2 / k**2) * R * R)
        zeta = outer
    c_k = 2 * (xi / (2 * d * nu) + zeta)
    if mode == "trajectory":
        if z0 is None:
            raise ConfigurationError("trajectory mode needs z0")
        weights = WeightSet.ones(g) if k is None else WeightSet.cutoff(g, k)
        Mbar = abs(lyapunov_values(coeffs, spec, z0, weights, d, 0.0).eta)
    else:
        Mbar = constants_mode_Mbar(coeffs, bundle, R)
    return TailReport(k, xi, zeta, c_k, Mbar, 2 * Mbar, cprime, cbar, R, mode)


@dataclass
class TailCheckReport:
    passed: bool
    max_excess: float
    witness: dict | None
    per_k: dict
    reports: dict
    R: float
    series: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"passed": bool(self.passed), "max_excess": self.max_excess, "witness": self.witness,
                "R": self.R, "per_k": {str(k): v for k, v in self.per_k.items()},
                "reports": {str(k): r.to_dict() for k, r in self.reports.items()}}


def measured_radius(traj: Trajectory, grid: Grid) -> np.ndarray:
    return np.array([z_norm(grid, z) for z in traj.states])


def tail_bound_check(traj: Trajectory, coeffs: CoefficientSet, spec, bundle: ConstantsBundle,
                     certificate: nemitski.DissipativityCertificate, R: float | None,
                     ks: Sequence[float], mode: str = "trajectory", tol: float = 0.0,
                     mprime_factor: float = 1.0) -> TailCheckReport:
    """Excess of the tail energies over ``c_k + M' exp(-2 delta nu t)`` (and of the total over ``c'``).

    ``R=None`` uses ``1.01 sup_t |z(t)|_Z``. ``mprime_factor`` rescales ``M'``
    (values below 1 are a falsification probe).
    """
    g = coeffs.grid
    radii = measured_radius(traj, g)
    if R is None:
        R = 1.01 * float(radii.max())
    over = np.flatnonzero(radii > R)
    if over.size:
        i = int(over[0])
        raise PreconditionError(f"|z(t)|_Z = {radii[i]:.6g} exceeds R = {R:.6g} at t = {traj.times[i]:.6g}",
                                witness={"t": float(traj.times[i]), "normZ": float(radii[i])})
    z0 = traj.states[0]
    t = np.asarray(traj.times) - traj.times[0]
    decay = np.exp(-2 * bundle.delta * bundle.nu * t)
    per_k, reports, series = {}, {}, {}
    worst, witness = -np.inf, None
    for k in list(ks) + [None]:
        rep = tail_constants(coeffs, spec, bundle, certificate, R, k, mode, z0)
        weights = WeightSet.ones(g) if k is None else WeightSet.cutoff(g, k)
        energy = np.array([_tail_energy(coeffs, z, weights, bundle.delta) for z in traj.states])
        bound = rep.c_k + mprime_factor * rep.Mprime * decay
        excess = energy - bound
        i = int(np.argmax(excess))
        key = "total" if k is None else k
        per_k[key] = float(excess[i])
        reports[key] = rep
        series[key] = energy
        if excess[i] > worst:
            worst = float(excess[i])
            witness = {"k": key, "t": float(traj.times[i]), "energy": float(energy[i]), "bound": float(bound[i])}
    return TailCheckReport(worst <= tol, worst, witness, per_k, reports, R, series)


def ultimate_bound(cprime: float, c_low: float, eps: float, margin: float = 0.01) -> float:
    """``sqrt((c' + margin c') / min(eps/2, c_low))``."""
    if not c_low > 0:
        raise HypothesisViolation(f"c_low={c_low} must be positive", hypothesis="coercivity")
    return float(np.sqrt((1.0 + margin) * cprime / min(0.5 * eps, c_low)))


def entry_time(times: np.ndarray, norms: np.ndarray, radius: float) -> float | None:
    """First record after which every later norm stays within ``radius``."""
    outside = np.flatnonzero(norms > radius)
    if outside.size == 0:
        return float(times[0])
    last = int(outside[-1])
    return None if last == len(times) - 1 else float(times[last + 1])


# -- Y-norm growth -----------------------------------------------------------

def y_norm(coeffs: CoefficientSet, z: StateZ) -> float:
    """``(|u|^2 + |v|_{H^-1}^2)^{1/2}``."""
    g = coeffs.grid
    return float(np.sqrt(gr.l2_inner(g, z.u, z.u) + hminus1_norm(coeffs, z.v, tol=1e-12) ** 2))


@dataclass
class YGrowthReport:
    C1: float
    C2: float
    max_ratio: float
    times: np.ndarray
    ratios: np.ndarray


def y_growth_probe(coeffs: CoefficientSet, ensemble: Sequence[StateZ], T: float, dt: float,
                   record_every: int = 1, c2_grid=None, cg_tol: float = 1e-12) -> YGrowthReport:
    """Empirical ``(C1, C2)`` with ``|T(t) z|_Y <= C1 exp(C2 t) |z|_Y`` over the ensemble.

    ``C2`` is picked from ``c2_grid`` to minimise ``C1 exp(C2 T)``.
    """
    c2_grid = np.linspace(0.0, 2.0, 41) if c2_grid is None else np.asarray(c2_grid, dtype=float)
    config = EvolutionConfig(dt, T, record_every, cg_tol)
    ratios = []
    times = None
    for z0 in ensemble:
        y0 = y_norm(coeffs, z0)
        traj = evolve(coeffs, None, z0, config)
        times = traj.times
        if y0 == 0:
            ratios.append(np.zeros(len(times)))
            continue
        ratios.append(np.array([y_norm(coeffs, z) for z in traj.states]) / y0)
    if not ratios:
        raise ConfigurationError("empty ensemble")
    R = np.max(np.array(ratios), axis=0)
    best = None
    for c2 in c2_grid:
        c1 = float(np.max(R * np.exp(-c2 * times)))
        cost = c1 * np.exp(c2 * T)
        if best is None or cost < best[0]:
            best = (cost, max(c1, 1.0), float(c2))
    return YGrowthReport(best[1], best[2], float(R.max()), times, R)
