"""Elliptic operator in flux form, quadratic forms and their constants.

The operator ``L u = sum_d d_d(a_d d_d u)`` is discretised as
``divergence(a * gradient(u))`` with the interface coefficients ``a_d``. Since
:func:`~attractorlab.grid.divergence` is the exact negative adjoint of
:func:`~attractorlab.grid.gradient`, the discrete Green identity
``<L u, w> = -<A grad u, grad w>`` holds up to rounding.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import grid as gr
from .errors import ConfigurationError, HypothesisViolation, NumericalFailure
from .grid import Grid

log = logging.getLogger(__name__)

DENSE_LIMIT = 1500


@dataclass(frozen=True, eq=False)
class CoefficientSet:
    """``eps``, damping ``alpha``, potential ``beta`` and diagonal ``A``.

    ``a`` holds one flat interface array per axis. The certified bounds
    ``a0 <= a <= a1`` and ``alpha0 <= alpha <= alpha1`` are validated against
    the samples on construction.
    """

    grid: Grid
    eps: float
    alpha: np.ndarray
    beta: np.ndarray
    a: tuple
    a0: float
    a1: float
    alpha0: float
    alpha1: float

    def __post_init__(self):
        g = self.grid
        if not self.eps > 0:
            raise ConfigurationError(f"eps must be positive, got {self.eps}")
        g.check(self.alpha, self.beta)
        g.check_staggered(self.a)
        for name, arr in (("alpha", self.alpha), ("beta", self.beta), *(("a", x) for x in self.a)):
            if not np.all(np.isfinite(arr)):
                raise ConfigurationError(f"coefficient {name} has non-finite samples")
        amin = min(float(x.min()) for x in self.a)
        amax = max(float(x.max()) for x in self.a)
        if not (0 < self.a0 <= amin and amax <= self.a1):
            raise HypothesisViolation(
                f"ellipticity bounds a0={self.a0}, a1={self.a1} do not enclose "
                f"interface samples [{amin}, {amax}]",
                hypothesis="ellipticity",
            )
        if not (self.alpha0 <= float(self.alpha.min()) and float(self.alpha.max()) <= self.alpha1):
            raise ConfigurationError("alpha bounds do not enclose the alpha samples")

    @cached_property
    def stiffness(self) -> sp.csr_matrix:
        """``K_A = sum_d D_d^T diag(a_d) D_d``, so that ``L_h = -K_A``."""
        mats = self.grid.difference_matrices
        k = sum(d.T @ sp.diags(a) @ d for d, a in zip(mats, self.a))
        return sp.csr_matrix(k)

    @cached_property
    def laplacian(self) -> sp.csr_matrix:
        """``-Delta_h`` (coefficient 1), used by the plain ``H^1`` norm."""
        return sp.csr_matrix(sum(d.T @ d for d in self.grid.difference_matrices))

    @cached_property
    def form_matrix(self) -> sp.csr_matrix:
        """``S = -L_h + diag(beta)``."""
        return sp.csr_matrix(self.stiffness + sp.diags(self.beta))


def _node_values(grid: Grid, value) -> np.ndarray:
    if isinstance(value, np.ndarray):
        grid.check(value)
        return value.astype(float)
    return gr.sample(grid, value)


def _interface_values(grid: Grid, value) -> tuple:
    """Analytic interface samples for callables; node arrays are averaged."""
    if isinstance(value, np.ndarray):
        grid.check(value)
        ext = np.pad(np.reshape(value, grid.shape), 1, mode="edge")
        return gr.interface_average(grid, ext)
    if isinstance(value, (tuple, list)):
        if len(value) != grid.dim:
            raise ConfigurationError("need one diffusion coefficient per axis")
        return tuple(_interface_values(grid, v)[d] for d, v in enumerate(value))
    return gr.sample_interfaces(grid, value)


def make_coefficients(
    grid: Grid,
    eps: float = 1.0,
    alpha=0.0,
    beta=0.0,
    a=1.0,
    *,
    a0: float | None = None,
    a1: float | None = None,
    alpha0: float | None = None,
    alpha1: float | None = None,
) -> CoefficientSet:
    """Sample coefficients on ``grid``.

    ``alpha`` and ``beta`` may be constants, callables of the coordinates or
    node arrays. ``a`` may additionally be a per-axis sequence. Bounds default
    to the extreme samples.
    """
    alpha_v = _node_values(grid, alpha)
    beta_v = _node_values(grid, beta)
    a_v = _interface_values(grid, a)
    amin = min(float(x.min()) for x in a_v)
    amax = max(float(x.max()) for x in a_v)
    return CoefficientSet(
        grid=grid,
        eps=float(eps),
        alpha=alpha_v,
        beta=beta_v,
        a=a_v,
        a0=amin if a0 is None else float(a0),
        a1=amax if a1 is None else float(a1),
        alpha0=float(alpha_v.min()) if alpha0 is None else float(alpha0),
        alpha1=float(alpha_v.max()) if alpha1 is None else float(alpha1),
    )


def flux(coeffs: CoefficientSet, u: np.ndarray) -> tuple:
    return tuple(a * g for a, g in zip(coeffs.a, gr.gradient(coeffs.grid, u)))


def apply_L(coeffs: CoefficientSet, u: np.ndarray) -> np.ndarray:
    return gr.divergence(coeffs.grid, flux(coeffs, u))


def energy_form(coeffs: CoefficientSet, u: np.ndarray, w: np.ndarray) -> float:
    """``<A grad u, grad w> + <beta u, w>``."""
    g = coeffs.grid
    return gr.staggered_inner(g, flux(coeffs, u), gr.gradient(g, w)) + gr.l2_inner(
        g, coeffs.beta * u, w
    )


def h1_scalar(coeffs: CoefficientSet, u: np.ndarray, w: np.ndarray) -> float:
    return energy_form(coeffs, u, w) / coeffs.eps


# -- iterative solvers -------------------------------------------------------

class NegativeCurvature(NumericalFailure):
    """CG met a direction with ``p^T A p <= 0``."""


def conjugate_gradient(
    matvec: Callable[[np.ndarray], np.ndarray],
    b: np.ndarray,
    x0: np.ndarray | None = None,
    tol: float = 1e-10,
    maxiter: int | None = None,
) -> tuple[np.ndarray, int]:
    """Plain CG for a symmetric positive definite operator.

    Stops when ``|r| <= tol * |b|``. Returns ``(x, iterations)``.
    """
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros_like(b), 0
    maxiter = maxiter if maxiter is not None else 10 * b.size + 100
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    r = b - matvec(x) if x0 is not None else b.copy()
    p = r.copy()
    rr = float(np.dot(r, r))
    target = (tol * bnorm) ** 2
    for it in range(maxiter + 1):
        if rr <= target:
            return x, it
        ap = matvec(p)
        curvature = float(np.dot(p, ap))
        if curvature <= 0.0:
            raise NegativeCurvature(
                f"non-positive curvature {curvature:.3e} after {it} CG iterations",
                value=curvature,
            )
        step = rr / curvature
        x += step * p
        r -= step * ap
        rr_new = float(np.dot(r, r))
        p *= rr_new / rr
        p += r
        rr = rr_new
    raise NumericalFailure(
        f"CG did not reach tol={tol:g} in {maxiter} iterations "
        f"(relative residual {np.sqrt(rr) / bnorm:.3e})"
    )


@dataclass(frozen=True)
class EigenResult:
    value: float
    vector: np.ndarray
    iterations: int


def lambda1(coeffs: CoefficientSet, tol: float = 1e-8, maxiter: int = 500,
            cg_tol: float | None = None) -> EigenResult:
    """Smallest eigenvalue of ``S = -L_h + diag(beta)`` by inverse iteration.

    Inner solves use CG with shift 0. If ``S`` turns out not to be positive
    definite, the iteration is restarted on ``S + sigma I`` with a Gershgorin
    shift; a non-positive Ritz value then raises :class:`HypothesisViolation`.
    """
    g = coeffs.grid
    S = coeffs.form_matrix
    cg_tol = cg_tol if cg_tol is not None else min(1e-12, tol * 1e-3)
    try:
        return _inverse_iteration(coeffs, S, 0.0, tol, maxiter, cg_tol)
    except NegativeCurvature:
        log.info("S not positive definite at shift 0; retrying with Gershgorin shift")
    sigma = max(0.0, -float(coeffs.beta.min())) + 1.0
    shifted = sp.csr_matrix(S + sigma * sp.identity(g.size))
    try:
        res = _inverse_iteration(coeffs, shifted, sigma, tol, maxiter, cg_tol)
    except NegativeCurvature as exc:  # pragma: no cover - Gershgorin shift makes S + sigma PD
        raise NumericalFailure("shift heuristic exhausted", value=exc.value) from exc
    if res.value <= 0:
        raise HypothesisViolation(
            f"lambda1 <= 0: smallest Ritz value {res.value:.6g}", hypothesis="lambda1>0", value=res.value
        )
    return res


def _inverse_iteration(coeffs, matrix, sigma, tol, maxiter, cg_tol) -> EigenResult:
    g = coeffs.grid
    x = np.ones(g.size)
    x /= np.sqrt(gr.l2_inner(g, x, x))
    lam_prev = None
    y = None
    for it in range(1, maxiter + 1):
        guess = None if y is None else x / max(lam_prev + sigma, 1e-300)
        y, _ = conjugate_gradient(matrix.dot, x, x0=guess, tol=cg_tol)
        x = y / np.sqrt(gr.l2_inner(g, y, y))
        lam = energy_form(coeffs, x, x)
        if sigma and lam <= 0:
            raise HypothesisViolation(
                f"lambda1 <= 0: smallest Ritz value {lam:.6g}", hypothesis="lambda1>0", value=lam
            )
        if lam_prev is not None and abs(lam - lam_prev) <= tol * abs(lam):
            return EigenResult(float(lam), x, it)
        lam_prev = lam
    raise NumericalFailure(
        f"inverse iteration did not converge in {maxiter} iterations", value=lam_prev
    )


def _largest_eigenvalue(a: sp.spmatrix, b: sp.spmatrix | None = None) -> float:
    """Largest eigenvalue of the symmetric pencil ``(a, b)``, ``b`` SPD."""
    n = a.shape[0]
    if n <= DENSE_LIMIT:
        vals = scipy.linalg.eigh(a.toarray(), None if b is None else b.toarray(), eigvals_only=True)
        return float(vals[-1])
    # fixed start vector: ARPACK's default is random, which breaks reproducibility
    v0 = np.ones(n)
    try:
        if b is None:
            vals = spla.eigsh(a, k=1, which="LA", return_eigenvectors=False, tol=1e-10, v0=v0)
        else:
            vals = spla.eigsh(a, k=1, M=sp.csc_matrix(b), which="LA",
                              return_eigenvectors=False, tol=1e-10, v0=v0)
    except spla.ArpackNoConvergence as exc:
        raise NumericalFailure("pencil eigen-solve did not converge") from exc
    return float(vals[0])


def form_bound_constant(coeffs: CoefficientSet, eps_bar: float) -> float:
    """Smallest ``C`` with ``<|beta| u, u> - eps_bar |u|_{H^1}^2 <= C |u|^2``."""
    if eps_bar < 0:
        raise ConfigurationError("eps_bar must be nonnegative")
    absb = np.abs(coeffs.beta)
    if not np.any(absb):
        return 0.0
    n = coeffs.grid.size
    m = sp.diags(absb) - eps_bar * (coeffs.laplacian + sp.identity(n))
    return max(0.0, _largest_eigenvalue(sp.csr_matrix(m)))


RHO_GRID = np.round(np.arange(0.05, 0.951, 0.05), 10)


@dataclass(frozen=True)
class CoerciveConstants:
    c_low: float
    C_up: float
    eps_bar: float
    rho: float
    kappa: float


def coercive_constants(coeffs: CoefficientSet, kappa: float, lam1: float | None = None,
                       eps_bars=None) -> CoerciveConstants:
    """Best ``c`` of the coercivity sandwich over a finite ``(rho, eps_bar)`` set.

    For each ``eps_bar`` the analytic maximiser in ``rho`` is searched in
    addition to the fixed grid ``{0.05, ..., 0.95}``.
    """
    lam1 = lambda1(coeffs).value if lam1 is None else lam1
    if not 0 <= kappa < lam1:
        raise HypothesisViolation(f"kappa={kappa} must lie in [0, lambda1={lam1})", hypothesis="lambda1>0")
    a0, a1 = coeffs.a0, coeffs.a1
    if eps_bars is None:
        eps_bars = a0 * np.geomspace(1e-6, 0.9, 25)
    best = None
    for eb in eps_bars:
        if not 0 < eb < a0:
            continue
        c_eb = form_bound_constant(coeffs, eb)
        rhos = list(RHO_GRID)
        star = (lam1 - kappa) / (a0 + lam1 + c_eb)
        if 0 < star < 1:
            rhos.append(star)
        for rho in rhos:
            c = min(rho * (a0 - eb), (1 - rho) * (lam1 - kappa) - rho * (eb + c_eb + kappa))
            if best is None or c > best.c_low:
                best = CoerciveConstants(c, max(a1 + eb, eb + c_eb), float(eb), float(rho), kappa)
    if best is None or best.c_low <= 0:
        raise HypothesisViolation(
            f"no admissible coercivity constant for kappa={kappa}", hypothesis="lambda1>0",
            value=None if best is None else best.c_low,
        )
    return best


def operator_bounds(coeffs: CoefficientSet, a_field: np.ndarray) -> tuple[float, float]:
    """Norms of ``u -> |beta|^{1/2} u`` and ``u -> |a|^{1/2} u`` from ``H^1_0`` to ``L^2``."""
    g = coeffs.grid
    g.check(a_field)
    gram = sp.csr_matrix(coeffs.laplacian + sp.identity(g.size))

    def bound(weight):
        w = np.abs(weight)
        if not np.any(w):
            return 0.0
        return float(np.sqrt(max(0.0, _largest_eigenvalue(sp.diags(w).tocsr(), gram))))

    return bound(coeffs.beta), bound(a_field)


def embedding_constant(grid: Grid, q: float, restarts: int = 8, seed: int = 0,
                       maxiter: int = 200, tol: float = 1e-10) -> float:
    """Best found ``|u|_{L^q} / |u|_{H^1}`` (a lower bound of the embedding constant).

    Each start runs the H^1-preconditioned normalised ascent
    ``u <- (K + I)^{-1} (|u|^{q-2} u)`` followed by normalisation, which never
    decreases the ratio. Starts are drawn sequentially from one generator so
    more restarts can only raise the estimate.
    """
    if q < 2:
        raise ConfigurationError("q must be >= 2")
    lap = sp.csr_matrix(sum(d.T @ d for d in grid.difference_matrices))
    solve = spla.factorized(sp.csc_matrix(lap + sp.identity(grid.size)))
    rng = np.random.default_rng(seed)
    best = 0.0

    def ratio(u):
        return gr.lp_norm(grid, u, q) / gr.h1_norm(grid, u)

    for _ in range(restarts):
        centre = rng.uniform(-0.5, 0.5, size=grid.dim) * grid.half_width
        width = rng.uniform(0.05, 0.5) * grid.half_width
        bump = np.exp(-sum((c - x0) ** 2 for c, x0 in zip(grid.mesh, centre)) / width**2)
        u = bump * (1.0 + 0.1 * rng.standard_normal(grid.size))
        r = ratio(u)
        for _ in range(maxiter):
            step = solve(np.abs(u) ** (q - 2) * u)
            nxt = step / gr.h1_norm(grid, step)
            r_new = ratio(nxt)
            if r_new < r:
                break
            u, converged = nxt, r_new - r <= tol * r_new
            r = r_new
            if converged:
                break
        best = max(best, r)
    return best


def hminus1_norm(coeffs: CoefficientSet, w: np.ndarray, tol: float = 1e-10) -> float:
    """``sqrt(eps <S^{-1} w, w>)``: the norm dual to ``<.,.>_1``."""
    coeffs.grid.check(w)
    if not np.any(w):
        return 0.0
    try:
        y, _ = conjugate_gradient(coeffs.form_matrix.dot, w, tol=tol)
    except NegativeCurvature as exc:
        raise HypothesisViolation("S is not positive definite", hypothesis="lambda1>0") from exc
    return float(np.sqrt(max(0.0, coeffs.eps * gr.l2_inner(coeffs.grid, y, w))))


# -- rates -------------------------------------------------------------------

@dataclass(frozen=True)
class Rates:
    mu: float
    delta: float
    nu: float


def rate_conditions(eps, alpha0, alpha1, lam1, mubar, rates: Rates) -> dict[str, bool]:
    mu, delta, nu = rates.mu, rates.delta, rates.nu
    return {
        "0<2mu<=min(1,alpha0/(2eps),lambda1/(eps+alpha1))":
            0 < 2 * mu <= min(1.0, alpha0 / (2 * eps), lam1 / (eps + alpha1)),
        "nu<=min(1,mubar/2)": 0 < nu <= min(1.0, mubar / 2),
        "lambda1-delta*alpha1>0": lam1 - delta * alpha1 > 0,
        "alpha0-2*delta*eps>=0": alpha0 - 2 * delta * eps >= 0,
        "delta>0": delta > 0,
    }


def select_rates(coeffs: CoefficientSet, lam1: float, mubar: float, theta: float = 0.5) -> Rates:
    eps, alpha0, alpha1 = coeffs.eps, coeffs.alpha0, coeffs.alpha1
    if not lam1 > 0:
        raise HypothesisViolation(f"lambda1={lam1} must be positive", hypothesis="lambda1>0")
    if not alpha0 > 0:
        raise HypothesisViolation(f"alpha0={alpha0} must be positive", hypothesis="damping alpha0>0")
    if not mubar > 0:
        raise HypothesisViolation(f"mubar={mubar} must be positive", hypothesis="dissipativity")
    if not 0 < theta < 1:
        raise ConfigurationError("theta must lie in (0, 1)")
    mu = 0.5 * min(1.0, alpha0 / (2 * eps), lam1 / (eps + alpha1))
    delta = theta * min(lam1 / alpha1, alpha0 / (2 * eps))
    nu = min(1.0, mubar / 2)
    rates = Rates(mu, delta, nu)
    failed = [k for k, ok in rate_conditions(eps, alpha0, alpha1, lam1, mubar, rates).items() if not ok]
    if failed:  # pragma: no cover - guaranteed by construction
        raise HypothesisViolation(f"rate selection violates {failed}")
    return rates


@dataclass
class ConstantsBundle:
    lambda1: float
    mu: float
    delta: float
    nu: float
    mubar: float
    Cbar: float
    rhobar: float
    taubar: float
    Lbeta: float | None = None
    La: float | None = None
    C2: float | None = None
    C_theta: float = gr.C_THETA
    C_thetabar: float = gr.C_THETABAR
    c_eps_bar: dict = field(default_factory=dict)
    coercive: dict = field(default_factory=dict)
    estimate_mode: bool = True

    def to_dict(self) -> dict:
        out = {k: v for k, v in self.__dict__.items() if k not in ("c_eps_bar", "coercive")}
        out["c_eps_bar"] = {repr(float(k)): v for k, v in self.c_eps_bar.items()}
        out["coercive"] = {
            repr(float(k)): {"c_low": c.c_low, "C_up": c.C_up, "eps_bar": c.eps_bar, "rho": c.rho}
            for k, c in self.coercive.items()
        }
        return out
