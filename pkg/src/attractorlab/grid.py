"""Uniform tensor grids on the box ``(-X, X)^dim`` with zero Dirichlet data.

Fields are flat ``numpy`` arrays of length ``n**dim`` in row-major order over
the interior nodes; boundary nodes carry the value 0 and are never stored.
Staggered fields (gradients, interface coefficients) are tuples with one flat
array per axis; along axis ``d`` they hold ``n + 1`` interface values
including both boundary interfaces, so axis ``d`` has shape
``(n,) * d + (n + 1,) + (n,) * (dim - d - 1)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, NamedTuple

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError, ResolutionError, ShapeError

Staggered = tuple  # tuple[np.ndarray, ...], one flat array per axis


@dataclass(frozen=True)
class Grid:
    dim: int
    half_width: float
    n: int

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ConfigurationError(f"dim must be 1 or 2, got {self.dim}")
        if not self.half_width > 0:
            raise ConfigurationError(f"half_width must be positive, got {self.half_width}")
        if int(self.n) != self.n or self.n < 3:
            raise ConfigurationError(f"n must be an integer >= 3, got {self.n}")

    @property
    def h(self) -> float:
        return 2.0 * self.half_width / (self.n + 1)

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.dim

    @property
    def size(self) -> int:
        return self.n**self.dim

    @property
    def cell_volume(self) -> float:
        return self.h**self.dim

    @cached_property
    def coords(self) -> np.ndarray:
        """1-D node coordinates along any axis."""
        return -self.half_width + (np.arange(self.n) + 1) * self.h

    @cached_property
    def extended_coords(self) -> np.ndarray:
        """Node coordinates including the two boundary nodes."""
        return -self.half_width + np.arange(self.n + 2) * self.h

    @cached_property
    def interface_coords_1d(self) -> np.ndarray:
        return -self.half_width + (np.arange(self.n + 1) + 0.5) * self.h

    @cached_property
    def mesh(self) -> tuple:
        """Flat coordinate arrays of the interior nodes, one per axis."""
        grids = np.meshgrid(*([self.coords] * self.dim), indexing="ij")
        return tuple(g.ravel() for g in grids)

    @cached_property
    def radius(self) -> np.ndarray:
        return np.sqrt(sum(c**2 for c in self.mesh))

    def staggered_shape(self, axis: int) -> tuple:
        shape = list(self.shape)
        shape[axis] += 1
        return tuple(shape)

    def interface_mesh(self, axis: int) -> tuple:
        """Flat coordinates of the interfaces normal to ``axis``."""
        axes = [self.coords] * self.dim
        axes[axis] = self.interface_coords_1d
        grids = np.meshgrid(*axes, indexing="ij")
        return tuple(g.ravel() for g in grids)

    @cached_property
    def extended_mesh(self) -> tuple:
        grids = np.meshgrid(*([self.extended_coords] * self.dim), indexing="ij")
        return tuple(grids)

    @cached_property
    def difference_matrices(self) -> tuple:
        """Sparse maps nodes -> interfaces, ``(u_right - u_left) / h``."""
        n = self.n
        one_d = sp.diags(
            [np.ones(n), -np.ones(n)], [0, -1], shape=(n + 1, n), format="csr"
        ) / self.h
        if self.dim == 1:
            return (one_d.tocsr(),)
        eye = sp.identity(n, format="csr")
        return (sp.kron(one_d, eye, format="csr"), sp.kron(eye, one_d, format="csr"))

    def check(self, *fields: np.ndarray) -> None:
        for f in fields:
            if np.shape(f) != (self.size,):
                raise ShapeError(
                    f"field of shape {np.shape(f)} does not live on a grid with {self.size} nodes"
                )

    def check_staggered(self, field: Staggered) -> None:
        if len(field) != self.dim:
            raise ShapeError(f"staggered field has {len(field)} axes, grid has {self.dim}")
        for d, f in enumerate(field):
            if np.shape(f) != (int(np.prod(self.staggered_shape(d))),):
                raise ShapeError(f"staggered component {d} has shape {np.shape(f)}")


def build_grid(dim: int, half_width: float, n: int) -> Grid:
    return Grid(int(dim), float(half_width), int(n))


def sample(grid: Grid, fn: Callable | float) -> np.ndarray:
    """Evaluate ``fn(*coords)`` (or a constant) at the interior nodes."""
    if callable(fn):
        values = np.asarray(fn(*grid.mesh), dtype=float)
        return np.broadcast_to(values, (grid.size,)).copy()
    return np.full(grid.size, float(fn))


def sample_interfaces(grid: Grid, fn: Callable | float) -> Staggered:
    out = []
    for d in range(grid.dim):
        size = int(np.prod(grid.staggered_shape(d)))
        if callable(fn):
            values = np.asarray(fn(*grid.interface_mesh(d)), dtype=float)
            out.append(np.broadcast_to(values, (size,)).copy())
        else:
            out.append(np.full(size, float(fn)))
    return tuple(out)


def sample_extended(grid: Grid, fn: Callable | float) -> np.ndarray:
    """Samples on the node grid including boundary nodes, shape ``(n+2,)*dim``."""
    shape = (grid.n + 2,) * grid.dim
    if callable(fn):
        return np.broadcast_to(np.asarray(fn(*grid.extended_mesh), dtype=float), shape).copy()
    return np.full(shape, float(fn))


def extend(grid: Grid, u: np.ndarray) -> np.ndarray:
    """Zero (Dirichlet) extension of a field to the boundary nodes."""
    return np.pad(np.reshape(u, grid.shape), 1)


def _interface_pairs(grid: Grid, ext: np.ndarray, axis: int):
    inner = [slice(1, -1)] * grid.dim
    inner[axis] = slice(None)
    e = ext[tuple(inner)]
    left = [slice(None)] * grid.dim
    right = [slice(None)] * grid.dim
    left[axis] = slice(0, -1)
    right[axis] = slice(1, None)
    return e[tuple(left)].ravel(), e[tuple(right)].ravel()


def interface_difference(grid: Grid, ext: np.ndarray) -> Staggered:
    """Per-axis ``(right - left) / h`` of an extended node array."""
    h = grid.h
    return tuple(
        (r - l) / h for l, r in (_interface_pairs(grid, ext, d) for d in range(grid.dim))
    )


def interface_average(grid: Grid, ext: np.ndarray) -> Staggered:
    """Per-axis arithmetic mean of neighbouring values of an extended node array."""
    return tuple(
        0.5 * (l + r) for l, r in (_interface_pairs(grid, ext, d) for d in range(grid.dim))
    )


def gradient(grid: Grid, u: np.ndarray) -> Staggered:
    grid.check(u)
    return interface_difference(grid, extend(grid, u))


def average(grid: Grid, u: np.ndarray) -> Staggered:
    """Interface averages of a Dirichlet field (boundary value 0)."""
    grid.check(u)
    return interface_average(grid, extend(grid, u))


def divergence(grid: Grid, flux: Staggered) -> np.ndarray:
    """Node-centred ``sum_d (F_{m+1/2} - F_{m-1/2}) / h``; negative adjoint of :func:`gradient`."""
    grid.check_staggered(flux)
    out = np.zeros(grid.shape)
    for d, f in enumerate(flux):
        out += np.diff(np.reshape(f, grid.staggered_shape(d)), axis=d) / grid.h
    return out.ravel()


def l2_inner(grid: Grid, u: np.ndarray, w: np.ndarray) -> float:
    grid.check(u, w)
    return grid.cell_volume * float(np.dot(u, w))


def staggered_inner(grid: Grid, f: Staggered, g: Staggered) -> float:
    return grid.cell_volume * float(sum(np.dot(a, b) for a, b in zip(f, g)))


def lp_norm(grid: Grid, u: np.ndarray, p: float) -> float:
    grid.check(u)
    if np.isinf(p):
        return float(np.max(np.abs(u))) if u.size else 0.0
    return float((grid.cell_volume * np.sum(np.abs(u) ** p)) ** (1.0 / p))


def h1_norm(grid: Grid, u: np.ndarray) -> float:
    g = gradient(grid, u)
    return float(np.sqrt(staggered_inner(grid, g, g) + l2_inner(grid, u, u)))


def inner_and_norms(grid: Grid, u: np.ndarray, w: np.ndarray, p: float):
    """``(<u, w>, |u|_{L^p}, |u|_{H^1})`` with the node quadrature."""
    if not p >= 1:
        raise ConfigurationError(f"p must be >= 1, got {p}")
    return l2_inner(grid, u, w), lp_norm(grid, u, p), h1_norm(grid, u)


def _window_offsets(h: float) -> tuple[int, int]:
    # nodes at offsets m*h with -1/2 <= m*h < 1/2
    eps = 1e-9
    lo = int(np.ceil(-0.5 / h - eps))
    hi = int(np.ceil(0.5 / h - eps)) - 1
    return lo, hi


def lpu_norm(grid: Grid, u: np.ndarray, p: float) -> float:
    """Uniformly local ``L^p`` norm over unit cubes centred at the nodes.

    The function is extended by zero outside the box. Windows are half-open,
    ``[y - 1/2, y + 1/2)`` per axis, so a window always contains ``round(1/h)``
    nodes per axis when ``1/h`` is an integer.
    """
    grid.check(u)
    if not p >= 1:
        raise ConfigurationError(f"p must be >= 1, got {p}")
    if grid.h > 1.0:
        raise ResolutionError(f"grid spacing h={grid.h} exceeds the unit window")
    lo, hi = _window_offsets(grid.h)
    sums = np.reshape(np.abs(u) ** p, grid.shape)
    n = grid.n
    idx = np.arange(n)
    upper = np.clip(idx + hi, -1, n - 1) + 1
    lower = np.clip(idx + lo, 0, n)
    for d in range(grid.dim):
        cs = np.cumsum(sums, axis=d)
        cs = np.concatenate([np.zeros_like(np.take(cs, [0], axis=d)), cs], axis=d)
        sums = np.take(cs, upper, axis=d) - np.take(cs, lower, axis=d)
    return float(np.max(grid.cell_volume * sums) ** (1.0 / p))


# -- cutoffs -----------------------------------------------------------------

def smoothstep(t):
    """Quintic ``6t^5 - 15t^4 + 10t^3`` clamped to [0, 1]; C^2 with zero ends."""
    t = np.clip(t, 0.0, 1.0)
    return t**3 * (t * (6.0 * t - 15.0) + 10.0)


def smoothstep_derivative(t):
    t = np.asarray(t, dtype=float)
    inside = (t > 0.0) & (t < 1.0)
    return np.where(inside, 30.0 * t**2 * (1.0 - t) ** 2, 0.0)


def profile_bar(s):
    """``0`` for ``s <= 1``, ``1`` for ``s >= 2``, quintic smoothstep between."""
    return smoothstep(np.asarray(s, dtype=float) - 1.0)


def profile_bar_derivative(s):
    return smoothstep_derivative(np.asarray(s, dtype=float) - 1.0)


def profile(s):
    return profile_bar(s) ** 2


def profile_derivative(s):
    return 2.0 * profile_bar(s) * profile_bar_derivative(s)


C_THETABAR = 2.0 * np.sqrt(2.0) * 15.0 / 8.0


def _sup_profile_derivative(samples: int = 200_001) -> float:
    s = np.linspace(1.0, 2.0, samples)
    return float(np.max(np.abs(profile_derivative(s))))


C_THETA = 2.0 * np.sqrt(2.0) * _sup_profile_derivative()


class Cutoffs(NamedTuple):
    thetabar: np.ndarray
    theta: np.ndarray
    grad_thetabar: Staggered
    grad_theta: Staggered
    C_theta: float
    C_thetabar: float


def _radial(k: float, prof, dprof):
    def value(*x):
        return prof(sum(c**2 for c in x) / k**2)

    def partial(axis):
        def fn(*x):
            s = sum(c**2 for c in x) / k**2
            return (2.0 / k**2) * dprof(s) * x[axis]
        return fn

    return value, partial


def cutoff_functions(k: float):
    """Analytic ``(thetabar_k, theta_k, d thetabar_k / dx_d, d theta_k / dx_d)`` makers."""
    if not k > 0:
        raise ConfigurationError(f"cutoff radius k must be positive, got {k}")
    bar, dbar = _radial(k, profile_bar, profile_bar_derivative)
    full, dfull = _radial(k, profile, profile_derivative)
    return bar, full, dbar, dfull


def cutoffs(grid: Grid, k: float) -> Cutoffs:
    bar, full, dbar, dfull = cutoff_functions(k)
    grad_bar = tuple(sample_interfaces(grid, dbar(d))[d] for d in range(grid.dim))
    grad_full = tuple(sample_interfaces(grid, dfull(d))[d] for d in range(grid.dim))
    return Cutoffs(
        thetabar=sample(grid, bar),
        theta=sample(grid, full),
        grad_thetabar=grad_bar,
        grad_theta=grad_full,
        C_theta=C_THETA,
        C_thetabar=C_THETABAR,
    )
