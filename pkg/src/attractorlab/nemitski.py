"""Nonlinearities ``f(x, u)``, their primitives and the Nemitski estimates.

The built-in family is ``f(x, u) = g(x) - b(x) u |u|^rho`` with canonical
primitive ``F(x, u) = g u - b |u|^(rho + 2) / (rho + 2)``. Custom nonlinearities
are given as vectorised callables ``f(x, u)``, ``df(x, u)`` and optionally
``F(x, u)``, where ``x`` is the tuple of node coordinate arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import grid as gr
from .errors import ConfigurationError, CriterionFailed, HypothesisViolation, NumericalFailure
from .grid import Grid

BUILTIN = "builtin-power"
CUSTOM = "custom"

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(40)


@dataclass(frozen=True, eq=False)
class NonlinearitySpec:
    grid: Grid
    kind: str
    g: np.ndarray
    b: np.ndarray
    rhobar: float
    a: np.ndarray
    Cbar: float
    f: Callable | None = None
    df: Callable | None = None
    F: Callable | None = None

    @property
    def taubar(self) -> float:
        """``|f(., 0)|_{L^2}``."""
        return gr.lp_norm(self.grid, self.g, 2)


def builtin_power(grid: Grid, g=0.0, b=1.0, rhobar: float = 2.0, a=0.0,
                  Cbar: float | None = None) -> NonlinearitySpec:
    """``f = g - b u |u|^rhobar``. ``Cbar`` defaults to ``(rhobar + 1) max b``."""
    if rhobar < 0:
        raise ConfigurationError("rhobar must be nonnegative")
    g_v = g if isinstance(g, np.ndarray) else gr.sample(grid, g)
    b_v = b if isinstance(b, np.ndarray) else gr.sample(grid, b)
    a_v = a if isinstance(a, np.ndarray) else gr.sample(grid, a)
    grid.check(g_v, b_v, a_v)
    if Cbar is None:
        Cbar = (rhobar + 1.0) * float(np.max(np.abs(b_v)))
    return NonlinearitySpec(grid, BUILTIN, g_v, b_v, float(rhobar), a_v, float(Cbar))


def custom(grid: Grid, f: Callable, df: Callable, F: Callable | None = None, *,
           rhobar: float, Cbar: float, a=0.0) -> NonlinearitySpec:
    """Wrap vectorised callables ``f(x, u)``, ``df(x, u)`` and optional ``F(x, u)``.

    Without ``F`` the primitive is computed by 40-point Gauss-Legendre
    quadrature of ``f`` over ``[0, u]``.
    """
    a_v = a if isinstance(a, np.ndarray) else gr.sample(grid, a)
    g_v = np.asarray(f(grid.mesh, np.zeros(grid.size)), dtype=float)
    zero = np.zeros(grid.size)
    return NonlinearitySpec(grid, CUSTOM, g_v, zero, float(rhobar), a_v, float(Cbar), f, df, F)


def _quadrature_primitive(f, x, u):
    half = 0.5 * u
    total = np.zeros_like(u)
    for node, weight in zip(_GL_NODES, _GL_WEIGHTS):
        total += weight * f(x, half * (node + 1.0))
    return half * total


def _check_finite(name, values):
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        raise NumericalFailure(f"custom {name} is not finite at node {int(bad[0])}", value=int(bad[0]))
    return values


def evaluate(spec: NonlinearitySpec, u: np.ndarray):
    """Pointwise ``(f(u), F(u), d_u f(u))``."""
    spec.grid.check(u)
    if spec.kind == BUILTIN:
        r = spec.rhobar
        au = np.abs(u)
        p = au**r
        f = spec.g - spec.b * u * p
        F = spec.g * u - spec.b * au ** (r + 2) / (r + 2)
        df = -spec.b * (r + 1) * p
        return f, F, df
    x = spec.grid.mesh
    f = _check_finite("f", np.asarray(spec.f(x, u), dtype=float))
    df = _check_finite("df", np.asarray(spec.df(x, u), dtype=float))
    if spec.F is not None:
        F = np.asarray(spec.F(x, u), dtype=float)
    else:
        F = _quadrature_primitive(spec.f, x, u)
    return f, _check_finite("F", F), df


def _evaluate_table(spec: NonlinearitySpec, u: np.ndarray):
    """Evaluate on a ``(samples, nodes)`` table of u-values."""
    fs, Fs, dfs = zip(*(evaluate(spec, row) for row in u))
    return np.array(fs), np.array(Fs), np.array(dfs)


@dataclass
class AuditReport:
    name: str
    max_violation: float
    witness: dict | None = None
    passed: bool = True
    details: dict = field(default_factory=dict)


def _u_samples(u_range, samples, seed=None):
    lo, hi = u_range
    grid_vals = np.linspace(lo, hi, samples)
    if seed is None:
        return grid_vals
    extra = np.random.default_rng(seed).uniform(lo, hi, samples)
    return np.concatenate([grid_vals, extra])


def growth_audit(spec: NonlinearitySpec, u_range=(-10.0, 10.0), samples: int = 201,
                 seed: int | None = 0) -> AuditReport:
    """Max of ``|d_u f| - Cbar (|a| + |u|^rho)`` over nodes and sampled u."""
    us = _u_samples(u_range, samples, seed)
    table = np.repeat(us[:, None], spec.grid.size, axis=1)
    _, _, df = _evaluate_table(spec, table)
    viol = np.abs(df) - spec.Cbar * (np.abs(spec.a)[None, :] + np.abs(table) ** spec.rhobar)
    i, j = np.unravel_index(int(np.argmax(viol)), viol.shape)
    worst = float(viol[i, j])
    return AuditReport("growth", worst, {"node": int(j), "u": float(us[i])}, worst <= 0)


def critical_exponent(N: int) -> float:
    return np.inf if N <= 2 else 2.0 * N / (N - 2)


def classify_exponent(rhobar: float, N: int) -> str:
    if N not in (1, 2, 3):
        raise ConfigurationError("N must be 1, 2 or 3")
    if rhobar < 0:
        raise ConfigurationError("rhobar must be nonnegative")
    if N <= 2:
        return "subcritical"
    lhs, star = 2.0 * (rhobar + 1.0), critical_exponent(N)
    if np.isclose(lhs, star, rtol=0, atol=1e-12):
        return "critical"
    return "subcritical" if lhs < star else "supercritical"


@dataclass(frozen=True, eq=False)
class DissipativityCertificate:
    mubar: float
    c: np.ndarray
    provenance: str
    integral_c: float


def _certificate(grid, mubar, c, provenance):
    c = np.maximum(np.asarray(c, dtype=float), 0.0)
    return DissipativityCertificate(float(mubar), c, provenance, float(grid.cell_volume * c.sum()))


def dissipativity_constants(spec: NonlinearitySpec, b0: float | None = None) -> DissipativityCertificate:
    """Closed-form certificate for the built-in family with ``mubar = 1``.

    ``c(x) = sup_u F(x, u)``; ``f u - F <= 0`` holds identically for
    ``mubar = 1`` since the forcing terms cancel.
    """
    if spec.kind != BUILTIN:
        raise ConfigurationError("closed-form certificate needs the built-in family")
    b0 = float(np.min(spec.b)) if b0 is None else b0
    if not (b0 > 0 and np.all(spec.b >= b0)):
        raise HypothesisViolation(
            f"absorption b must be bounded below by a positive b0 (min b = {float(np.min(spec.b))})",
            hypothesis="dissipativity",
        )
    r = spec.rhobar
    ag = np.abs(spec.g)
    c = ((r + 1) / (r + 2)) * ag ** ((r + 2) / (r + 1)) * spec.b ** (-1.0 / (r + 1))
    return _certificate(spec.grid, 1.0, c, "closed-form")


def dissipativity_from_convexity(D: np.ndarray, gamma: float, nu: float,
                                 spec: NonlinearitySpec, u_samples) -> DissipativityCertificate:
    """Certificate from convexity of ``u -> (gamma D - F)^nu``.

    Convexity is certified by nonnegative second differences on ``u_samples``
    at every node; ``F <= D`` is checked on the same samples.
    """
    if not (gamma > 1 and nu > 1):
        raise ConfigurationError("gamma and nu must both exceed 1")
    grid = spec.grid
    grid.check(D)
    if np.any(D <= 0):
        node = int(np.flatnonzero(D <= 0)[0])
        raise CriterionFailed(f"D must be positive; D <= 0 at node {node}", node=node)
    us = np.sort(np.asarray(u_samples, dtype=float))
    table = np.repeat(us[:, None], grid.size, axis=1)
    _, F, _ = _evaluate_table(spec, table)
    above = F > D[None, :]
    if np.any(above):
        i, j = map(int, np.argwhere(above)[0])
        raise CriterionFailed(f"F > D at node {j}, u={us[i]}", node=j, u=float(us[i]))
    phi = (gamma * D[None, :] - F) ** nu
    # second differences on a possibly non-uniform u grid
    du = np.diff(us)
    slopes = np.diff(phi, axis=0) / du[:, None]
    second = np.diff(slopes, axis=0)
    scale = float(np.max(np.abs(phi)))
    bad = second < -1e-10 * scale
    if np.any(bad):
        i, j = map(int, np.argwhere(bad)[0])
        raise CriterionFailed(f"convexity violated at node {j}, u={us[i + 1]}", node=j, u=float(us[i + 1]))
    factor = max(1.0, gamma**nu * (gamma - 1) ** (1 - nu) / nu)
    return _certificate(grid, 1.0 / nu, factor * D, "convexity")


def dissipativity_audit(spec: NonlinearitySpec, certificate: DissipativityCertificate,
                        u_range=(-10.0, 10.0), samples: int = 2001) -> AuditReport:
    """Max violation of ``f u - mubar F <= c`` and ``F <= c``."""
    c = certificate.c
    spec.grid.check(c)
    if not np.all(np.isfinite(c)):
        raise ConfigurationError("certificate c must be finite everywhere")
    us = _u_samples(u_range, samples)
    table = np.repeat(us[:, None], spec.grid.size, axis=1)
    f, F, _ = _evaluate_table(spec, table)
    first = f * table - certificate.mubar * F - c[None, :]
    second = F - c[None, :]
    worst = {}
    for name, arr in (("fu-mubarF<=c", first), ("F<=c", second)):
        i, j = np.unravel_index(int(np.argmax(arr)), arr.shape)
        worst[name] = (float(arr[i, j]), {"node": int(j), "u": float(us[i])})
    name = max(worst, key=lambda k: worst[k][0])
    value, witness = worst[name]
    return AuditReport("dissipativity", value, {"inequality": name, **witness}, value <= 0,
                       {k: v[0] for k, v in worst.items()})


# -- Nemitski estimates ------------------------------------------------------

@dataclass
class EstimateReport:
    slacks: dict
    critical_ratio: float | None = None

    @property
    def min_slack(self) -> float:
        return min(self.slacks.values())


def estimate_suite(spec: NonlinearitySpec, u: np.ndarray, h: np.ndarray, coeffs=None,
                   a_split: tuple | None = None, r: float | None = None) -> EstimateReport:
    """Slack ``RHS - LHS`` of the pointwise and integral Nemitski estimates.

    Pointwise slacks are minima over nodes. With ``coeffs`` the critical
    ``H^{-1}`` Lipschitz estimate is evaluated as the ratio of its left side
    to the structural factor (its constant is not certified).
    """
    grid = spec.grid
    grid.check(u, h)
    C, rho = spec.Cbar, spec.rhobar
    a = np.abs(spec.a)
    m1 = max(1.0, 2.0 ** (rho - 1))
    m0 = max(1.0, 2.0**rho)
    fu, Fu, _ = evaluate(spec, u)
    fuh, Fuh, _ = evaluate(spec, u + h)
    f0 = spec.g
    au, ah = np.abs(u), np.abs(h)

    def Lp(v, p):
        return gr.lp_norm(grid, v, p)

    s = {}
    s["|f(u)-f(0)|"] = float(np.min(C * a * au + C * au ** (rho + 1) - np.abs(fu - f0)))
    s["|f(u+h)-f(u)|"] = float(np.min(C * a * ah + C * m1 * (au**rho + ah**rho) * ah - np.abs(fuh - fu)))
    s["|F(u)|"] = float(np.min(C * (a * au**2 / 2 + au ** (rho + 2) / (rho + 2)) + au * np.abs(f0) - np.abs(Fu)))
    s["|F(u+h)-F(u)|"] = float(np.min(
        (np.abs(f0) + C * a * (au + ah) + C * m0 * (au ** (rho + 1) + ah ** (rho + 1))) * ah
        - np.abs(Fuh - Fu)))
    s["|F(u+h)-F(u)-f(u)h|"] = float(np.min(
        (C * a + C * m1 * (au**rho + ah**rho)) * ah**2 - np.abs(Fuh - Fu - fu * h)))

    q = 2 * (rho + 1)
    s["|f(u)|_L2"] = (Lp(f0, 2) + C * (Lp(a * u, 2) + Lp(u, q) ** (rho + 1))) - Lp(fu, 2)
    s["|f(u+h)-f(u)|_L2"] = (C * Lp(a * h, 2) + C * m1 * (Lp(u, q) ** rho + Lp(h, q) ** rho) * Lp(h, q)
                             - Lp(fuh - fu, 2))
    s["|F(u)|_L1"] = (C * (Lp(a * u**2, 1) / 2 + Lp(u, rho + 2) ** (rho + 2) / (rho + 2))
                      + Lp(u, 2) * Lp(f0, 2) - Lp(Fu, 1))
    s["|F(u+h)-F(u)|_L1"] = ((Lp(f0, 2) + C * (Lp(a * u, 2) + Lp(a * h, 2))
                              + C * m0 * (Lp(u, q) ** (rho + 1) + Lp(h, q) ** (rho + 1))) * Lp(h, 2)
                             - Lp(Fuh - Fu, 1))
    s["|F(u+h)-F(u)-f(u)h|_L1"] = ((C * Lp(a * h, 2) + C * m1 * (Lp(u, q) ** rho + Lp(h, q) ** rho) * Lp(h, q))
                                   * Lp(h, 2) - Lp(Fuh - Fu - fu * h, 1))

    ratio = None
    if coeffs is not None:
        from .operators import hminus1_norm

        a1_part, a2_part = a_split if a_split is not None else (np.zeros_like(a), a)
        r = r if r is not None else max(grid.dim, 2)
        star = critical_exponent(grid.dim)
        structure = ((Lp(a1_part, r) + Lp(a2_part, np.inf)) * Lp(h, 2)
                     + (Lp(u, star) ** rho + Lp(h, star) ** rho) * Lp(h, 2))
        lhs = hminus1_norm(coeffs, fuh - fu)
        ratio = lhs / structure if structure > 0 else 0.0
    return EstimateReport(s, ratio)


def frechet_remainder(spec: NonlinearitySpec, u: np.ndarray, h: np.ndarray, t: float = 1e-4) -> float:
    """Relative error of ``int f(u) h`` as the derivative of ``u -> int F(u)`` along ``h``.

    The derivative is approximated by the central quotient with step ``t``;
    the error is divided by ``|f(u)|_{L^2} |h|_{L^2}``, which bounds the exact
    derivative and avoids dividing by a cancelling ``int f(u) h``.
    """
    grid = spec.grid
    grid.check(u, h)
    fu, _, _ = evaluate(spec, u)
    _, Fp, _ = evaluate(spec, u + t * h)
    _, Fm, _ = evaluate(spec, u - t * h)
    quotient = grid.cell_volume * float(np.sum(Fp - Fm)) / (2 * t)
    scale = gr.lp_norm(grid, fu, 2) * gr.lp_norm(grid, h, 2)
    if scale == 0:
        return abs(quotient)
    return abs(quotient - gr.l2_inner(grid, fu, h)) / scale
