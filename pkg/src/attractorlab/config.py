"""Experiment configuration (JSON) and construction of the model objects."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import grid as gr
from . import nemitski
from .errors import ConfigurationError
from .expr import as_function
from .grid import Grid
from .operators import CoefficientSet, make_coefficients
from .semiflow import EvolutionConfig, StateZ, z_norm

DEFAULTS: dict[str, Any] = {
    "grid": {"dim": 1, "half_width": 1.5707963267948966, "n": 157},
    "coefficients": {"eps": 1.0, "alpha": 2.0, "beta": 0.0, "a": 1.0, "bounds": {}},
    "nonlinearity": {"kind": "builtin-power", "g": 0.0, "b": 1.0, "rhobar": 2.0, "a": 0.0, "Cbar": None},
    "evolution": {"dt": 1e-3, "T": 1.0, "record_every": 10, "cg_tol": 1e-10, "scheme": "strang"},
    "initial": {"kind": "gaussian", "amp": 1.0, "center": [0.0, 0.0], "sigma": 1.0, "on": "u",
                "R_declared": None},
    "diagnostics": {"weights": ["ones"], "ks": [], "delta_policy": {"theta": 0.5},
                    "checks": ["ultimate_bound", "tail_bound"], "mode": "trajectory",
                    "safety": 10.0, "decay_tol": 0.02, "waive": [], "embedding_restarts": 8},
    "output": {"csv_path": "series.csv", "json_path": "report.json"},
}

KNOWN_CHECKS = ("decay", "w_decay", "energy_identity", "vstar_derivative", "ball_energy", "eta",
                "tail_bound", "ultimate_bound", "y_growth")


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict) and key != "bounds":
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


@dataclass
class ExperimentConfig:
    data: dict
    base_dir: Path = field(default_factory=Path.cwd)

    @classmethod
    def from_dict(cls, data: dict, base_dir: Path | str | None = None) -> "ExperimentConfig":
        unknown = set(data) - set(DEFAULTS) - {"name"}
        if unknown:
            raise ConfigurationError(f"unknown config sections {sorted(unknown)}")
        cfg = cls(_merge(DEFAULTS, data), Path(base_dir) if base_dir else Path.cwd())
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"invalid JSON in {path}: {exc}") from exc
        return cls.from_dict(data, path.parent)

    def __getitem__(self, key):
        return self.data[key]

    @property
    def name(self) -> str:
        return self.data.get("name", "experiment")

    def validate(self) -> None:
        checks = self.data["diagnostics"]["checks"]
        bad = [c for c in checks if c not in KNOWN_CHECKS]
        if bad:
            raise ConfigurationError(f"unknown checks {bad}; known: {list(KNOWN_CHECKS)}")
        if self.data["initial"]["kind"] not in ("gaussian", "random", "zero"):
            raise ConfigurationError(f"unknown initial kind {self.data['initial']['kind']!r}")
        if self.data["nonlinearity"]["kind"] not in ("builtin-power", "none"):
            raise ConfigurationError(f"unknown nonlinearity kind {self.data['nonlinearity']['kind']!r}")
        # parse every expression eagerly so syntax errors surface before any work
        for section, keys in (("coefficients", ("alpha", "beta", "a")), ("nonlinearity", ("g", "b", "a"))):
            for key in keys:
                val = self.data[section][key]
                for item in (val if isinstance(val, list) else [val]):
                    if isinstance(item, str):
                        as_function(item)
        self.evolution()

    # -- builders -------------------------------------------------------------

    def grid(self) -> Grid:
        g = self.data["grid"]
        return gr.build_grid(g["dim"], g["half_width"], g["n"])

    def _field(self, grid: Grid, value):
        """Constant, expression string, or ``{"file": path}`` flat CSV of node values."""
        if isinstance(value, (int, float)):
            return float(value)
        if isinstance(value, str):
            fn = as_function(value)
            samples = gr.sample(grid, fn)
            if not np.all(np.isfinite(samples)):
                raise ConfigurationError(f"expression {value!r} is not finite on the grid")
            return samples
        if isinstance(value, dict) and "file" in value:
            path = self.base_dir / value["file"]
            try:
                arr = np.loadtxt(path, delimiter=",", ndmin=1).ravel()
            except OSError as exc:
                raise ConfigurationError(f"cannot read field file {path}: {exc}") from exc
            grid.check(arr)
            return arr
        raise ConfigurationError(f"cannot interpret field value {value!r}")

    def _interface_field(self, grid: Grid, value):
        if isinstance(value, str):
            return as_function(value)
        return self._field(grid, value)

    def coefficients(self, grid: Grid) -> CoefficientSet:
        c = self.data["coefficients"]
        a = c["a"]
        if isinstance(a, list):
            if len(a) != grid.dim:
                raise ConfigurationError("need one diffusion coefficient per axis")
            a = tuple(self._interface_field(grid, v) for v in a)
        else:
            a = self._interface_field(grid, a)
        bounds = c.get("bounds") or {}
        return make_coefficients(grid, c["eps"], self._field(grid, c["alpha"]), self._field(grid, c["beta"]),
                                 a, **{k: bounds[k] for k in ("a0", "a1", "alpha0", "alpha1") if k in bounds})

    def nonlinearity(self, grid: Grid) -> nemitski.NonlinearitySpec | None:
        nl = self.data["nonlinearity"]
        if nl["kind"] == "none":
            return None

        def arr(v):
            x = self._field(grid, v)
            return x if isinstance(x, np.ndarray) else np.full(grid.size, x)

        return nemitski.builtin_power(grid, arr(nl["g"]), arr(nl["b"]), nl["rhobar"], arr(nl["a"]), nl["Cbar"])

    def evolution(self) -> EvolutionConfig:
        e = self.data["evolution"]
        return EvolutionConfig(float(e["dt"]), float(e["T"]), int(e["record_every"]), float(e["cg_tol"]),
                               e["scheme"])

    def initial_states(self, grid: Grid, seed: int | None = None) -> list[StateZ]:
        """Initial data; ``random`` with ``count > 1`` gives an ensemble."""
        ini = self.data["initial"]
        kind = ini["kind"]
        if kind == "zero":
            return [StateZ.zeros(grid)]
        if kind == "gaussian":
            centre = list(ini.get("center", [0.0, 0.0]))[: grid.dim]
            centre += [0.0] * (grid.dim - len(centre))
            r2 = sum((c - x0) ** 2 for c, x0 in zip(grid.mesh, centre))
            bump = ini["amp"] * np.exp(-r2 / ini["sigma"] ** 2)
            on = ini.get("on", "u")
            if on not in ("u", "v", "both"):
                raise ConfigurationError(f"initial.on must be u, v or both, got {on!r}")
            zero = np.zeros(grid.size)
            return [StateZ(bump if on in ("u", "both") else zero, bump.copy() if on in ("v", "both") else zero)]
        base_seed = ini.get("seed", 0) if seed is None else seed
        rng = np.random.default_rng(base_seed)
        return [random_state(grid, rng, ini.get("smoothing", 1.0), ini.get("modes", 16), ini.get("radius"))
                for _ in range(int(ini.get("count", 1)))]


def random_state(grid: Grid, rng: np.random.Generator, smoothing: float = 1.0, modes: int = 16,
                 radius: float | None = None) -> StateZ:
    """Random sine series with coefficients decaying like ``j^-smoothing``.

    With ``radius`` the state is rescaled to ``|z|_Z = radius * U`` with
    ``U`` uniform on ``(0, 1]``.
    """
    X = grid.half_width

    def field_():
        out = np.zeros(grid.size)
        idx = np.arange(1, modes + 1)
        if grid.dim == 1:
            coef = rng.standard_normal(modes) / idx**smoothing
            basis = np.sin(np.outer(grid.mesh[0] + X, idx) * np.pi / (2 * X))
            return basis @ coef
        coef = rng.standard_normal((modes, modes)) / np.add.outer(idx, idx) ** smoothing
        bx = np.sin(np.outer(grid.mesh[0] + X, idx) * np.pi / (2 * X))
        by = np.sin(np.outer(grid.mesh[1] + X, idx) * np.pi / (2 * X))
        out += np.einsum("ni,ij,nj->n", bx, coef, by)
        return out

    z = StateZ(field_(), field_())
    if radius is not None:
        scale = radius * (1.0 - rng.uniform()) / max(z_norm(grid, z), 1e-300)
        z = z.scaled(scale)
    return z
