"""Command line entry point and the experiment pipeline.

Exit codes: 0 all checks passed, 1 hypothesis violation or invalid input,
2 numerical failure (including blow-up), 3 a check failed.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import diagnostics as dg
from . import grid as gr
from . import nemitski
from . import operators as op
from . import semiflow as sf
from .config import ExperimentConfig
from .errors import (
    CheckFailure,
    ConfigurationError,
    HypothesisViolation,
    NumericalFailure,
    PreconditionError,
    ResolutionError,
    ShapeError,
)

log = logging.getLogger("attractorlab")

SCHEMA = "attractor-lab/1"
COMMANDS = ("hypotheses", "lambda1", "constants", "simulate", "decay", "tails", "dissipativity", "identities")
COMMAND_CHECKS = {
    "decay": ["decay", "w_decay"],
    "tails": ["tail_bound", "eta"],
    "identities": ["energy_identity", "vstar_derivative", "ball_energy", "eta"],
}
# tolerance calibration for tail_bound also needs dt-spaced derivatives
DERIVATIVE_CHECKS = {"energy_identity", "vstar_derivative", "eta", "w_decay", "tail_bound"}
IDENTITY_RTOL = 1e-4

EXIT_OK, EXIT_HYPOTHESIS, EXIT_NUMERICAL, EXIT_CHECK = 0, 1, 2, 3


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, CheckFailure):
        return EXIT_CHECK
    if isinstance(exc, NumericalFailure):
        return EXIT_NUMERICAL
    if isinstance(exc, (HypothesisViolation, ConfigurationError, ShapeError, ResolutionError,
                        PreconditionError)):
        return EXIT_HYPOTHESIS
    raise exc


def worker_count() -> int:
    raw = os.environ.get("ATTRACTORLAB_THREADS")
    if raw is None:
        return max(1, min(4, os.cpu_count() or 1))
    try:
        n = int(raw)
    except ValueError:
        raise ConfigurationError(f"ATTRACTORLAB_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise ConfigurationError("ATTRACTORLAB_THREADS must be >= 1")
    return n


def jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    if obj is None or isinstance(obj, str):
        return obj
    if hasattr(obj, "to_dict"):
        return jsonable(obj.to_dict())
    return repr(obj)


@dataclass
class RunResult:
    exit_code: int
    report: dict
    trajectory: sf.Trajectory | None = None
    columns: dict = field(default_factory=dict)
    paths: dict = field(default_factory=dict)


class _Run:
    """State shared by the pipeline stages of one experiment."""

    def __init__(self, cfg: ExperimentConfig, command: str, seed: int | None):
        self.cfg = cfg
        self.command = command
        self.seed = seed
        self.report: dict = {"schema": SCHEMA, "command": command, "name": cfg.name,
                             "seed": seed, "config": cfg.data}
        self.trajectory = None
        self.columns: dict = {}
        self.failed: list[str] = []

    # (1) model objects
    def build(self):
        cfg = self.cfg
        self.grid = cfg.grid()
        self.coeffs = cfg.coefficients(self.grid)
        self.spec = cfg.nonlinearity(self.grid)
        self.report["grid"] = {"dim": self.grid.dim, "half_width": self.grid.half_width,
                               "n": self.grid.n, "h": self.grid.h}

    # (2) hypothesis audit
    def lambda1(self):
        res = op.lambda1(self.coeffs)
        self.lam1 = res.value
        self.report["lambda1"] = {"value": res.value, "iterations": res.iterations}

    def hypotheses(self):
        g, c = self.grid, self.coeffs
        hyp = {"ellipticity": {"a0": c.a0, "a1": c.a1, "passed": True},
               "lambda1_positive": self.lam1 > 0}
        lpu = {}
        for name, arr in (("beta", c.beta), ("a", None if self.spec is None else self.spec.a)):
            if arr is None:
                continue
            try:
                lpu[name] = {str(p): gr.lpu_norm(g, arr, p) for p in (1.0, 2.0, math.inf)}
            except ResolutionError as exc:
                lpu[name] = {"error": str(exc)}
        hyp["lpu_norms"] = lpu
        self.report["hypotheses"] = hyp
        self.certify()

    def certify(self):
        waive = set(self.cfg["diagnostics"]["waive"])
        g = self.grid
        if self.spec is None:
            self.certificate = nemitski.DissipativityCertificate(1.0, np.zeros(g.size), "user", 0.0)
            self.report["dissipativity"] = {"mubar": 1.0, "integral_c": 0.0, "provenance": "linear"}
            return
        growth = nemitski.growth_audit(self.spec)
        self.report.setdefault("hypotheses", {})["growth"] = {
            "max_violation": growth.max_violation, "witness": growth.witness, "passed": growth.passed}
        if "dissipativity" in waive:
            self.certificate = nemitski.DissipativityCertificate(1.0, np.zeros(g.size), "user", 0.0)
            self.report["dissipativity"] = {"waived": True}
            return
        if not growth.passed and "growth" not in waive:
            raise HypothesisViolation(f"growth condition violated by {growth.max_violation:.3e} "
                                      f"at {growth.witness}", hypothesis="growth")
        cert = nemitski.dissipativity_constants(self.spec)
        audit = nemitski.dissipativity_audit(self.spec, cert)
        scale = max(1.0, float(np.max(cert.c)))
        self.report["dissipativity"] = {"mubar": cert.mubar, "integral_c": cert.integral_c,
                                        "provenance": cert.provenance,
                                        "audit": {"max_violation": audit.max_violation,
                                                  "witness": audit.witness}}
        if audit.max_violation > 1e-9 * scale:
            raise HypothesisViolation(f"dissipativity audit failed: {audit.witness}", hypothesis="dissipativity")
        self.certificate = cert

    # (3)+(4) rates and constants
    def rates(self):
        theta = self.cfg["diagnostics"]["delta_policy"].get("theta", 0.5)
        self.rates_ = op.select_rates(self.coeffs, self.lam1, self.certificate.mubar, theta)
        c = self.coeffs
        self.report["rates"] = {
            "mu": self.rates_.mu, "delta": self.rates_.delta, "nu": self.rates_.nu,
            "conditions": op.rate_conditions(c.eps, c.alpha0, c.alpha1, self.lam1, self.certificate.mubar,
                                             self.rates_)}

    def bundle(self, full: bool):
        spec, r = self.spec, self.rates_
        b = op.ConstantsBundle(self.lam1, r.mu, r.delta, r.nu, self.certificate.mubar,
                               0.0 if spec is None else spec.Cbar, 0.0 if spec is None else spec.rhobar,
                               0.0 if spec is None else spec.taubar)
        if full:
            a_field = np.zeros(self.grid.size) if spec is None else spec.a
            b.Lbeta, b.La = op.operator_bounds(self.coeffs, a_field)
            restarts = int(self.cfg["diagnostics"]["embedding_restarts"])
            b.C2 = op.embedding_constant(self.grid, b.rhobar + 2, restarts=restarts,
                                         seed=0 if self.seed is None else self.seed)
            for eb in (0.1 * self.coeffs.a0, 0.5 * self.coeffs.a0):
                b.c_eps_bar[eb] = op.form_bound_constant(self.coeffs, eb)
        for kappa in (0.0, r.delta * self.coeffs.alpha1):
            b.coercive[kappa] = op.coercive_constants(self.coeffs, kappa, self.lam1)
        self.constants = b
        self.report["constants"] = b.to_dict()

    def constants_mode_tails(self):
        R = self.cfg["initial"].get("R_declared")
        if R is None:
            R = max(sf.z_norm(self.grid, z) for z in self.initial())
        ks = self.cfg["diagnostics"]["ks"]
        reps = {str(k): dg.tail_constants(self.coeffs, self.spec, self.constants, self.certificate, R, k,
                                          "constants").to_dict() for k in list(ks) + [None]}
        self.report["tail_constants_estimate"] = {"R": R, "reports": reps, "C2_is_lower_bound": True}
        self.report["ultimate_bound"] = self.ultimate()

    def ultimate(self) -> dict:
        # c' depends on neither R nor the M-bar mode
        rep = dg.tail_constants(self.coeffs, self.spec, self.constants, self.certificate, 0.0, None,
                                "trajectory", sf.StateZ.zeros(self.grid))
        kappa = self.rates_.delta * self.coeffs.alpha1
        c_low = self.constants.coercive[kappa].c_low
        return {"R_inf": dg.ultimate_bound(rep.cprime, c_low, self.coeffs.eps), "cprime": rep.cprime,
                "c_low": c_low, "kappa": kappa, "margin": 0.01}

    # (5) evolution
    def initial(self):
        if not hasattr(self, "_initial"):
            self._initial = self.cfg.initial_states(self.grid, self.seed)
        return self._initial

    def evolve(self, checks):
        linear = self.command == "decay"
        spec = None if linear else self.spec
        econf = self.cfg.evolution()
        stencil = bool(DERIVATIVE_CHECKS & set(checks))
        self.trajectory = sf.evolve(self.coeffs, spec, self.initial()[0], econf, stencil=stencil)
        self.evolved_spec = spec

    # (6) checks
    def run_checks(self, checks):
        cfg, g, c, traj = self.cfg, self.grid, self.coeffs, self.trajectory
        diag = cfg["diagnostics"]
        r = self.rates_
        spec = self.evolved_spec
        econf = traj.config
        results = []
        weights = [dg.WeightSet.ones(g) if w == "ones" else dg.WeightSet.cutoff(g, float(w))
                   for w in diag["weights"]]
        slack_cols = {}
        need_tol = {"eta", "tail_bound", "w_decay"} & set(checks)
        tol = 0.0
        if need_tol:
            calib = [dg.energy_identity_check(traj, c, spec, w, r.delta) for w in weights]
            calib.append(dg.vstar_derivative_check(traj, spec, weights[0]))
            C = dg.calibrate_tolerance(calib, econf.dt, g.h, diag["safety"])
            tol = dg.tol_discrete(C, econf.dt, g.h)
            self.report["tolerance"] = {"C": C, "tol_discrete": tol, "model": "C*(dt^2+h^2)"}
        index = {float(t): i for i, t in enumerate(traj.times)}

        def column(rep, name, transform=lambda v: v):
            col = [None] * len(traj)
            for t, v in zip(rep.times, rep.series):
                col[index[float(t)]] = transform(float(v))
            slack_cols[name] = col

        for name in checks:
            if name in ("energy_identity", "vstar_derivative"):
                for w in weights:
                    rep = (dg.energy_identity_check(traj, c, spec, w, r.delta) if name == "energy_identity"
                           else dg.vstar_derivative_check(traj, spec, w))
                    rep.passed = rep.value <= IDENTITY_RTOL * rep.scale
                    results.append(rep)
                    column(rep, f"{name}_{w.label}", lambda v, s=rep.scale: IDENTITY_RTOL * s - v)
            elif name == "ball_energy":
                rep = dg.ball_energy_check(traj, c, spec, r.delta)
                rep.passed = rep.value <= IDENTITY_RTOL * rep.scale
                results.append(rep)
                column(rep, name, lambda v, s=rep.scale: IDENTITY_RTOL * s - v)
            elif name == "eta":
                for w in weights:
                    rep = dg.eta_inequality_check(traj, c, spec, w, r, self.certificate, tol)
                    results.append(rep)
                    column(rep, f"eta_{w.label}")
            elif name == "w_decay":
                rep = dg.w_decay_check(traj, c, r.mu, tol)
                results.append(rep)
                column(rep, name, lambda v: tol - v)
            elif name == "decay":
                results.append(self.decay_check(slack_cols))
            elif name == "tail_bound":
                results.append(self.tail_check(tol, slack_cols))
            elif name == "ultimate_bound":
                results.append(self.ultimate_check())
            elif name == "y_growth":
                rep = dg.y_growth_probe(c, self.initial(), econf.T, econf.dt, econf.record_every, cg_tol=econf.cg_tol)
                results.append(dg.CheckReport("y_growth", True, rep.max_ratio, 1.0, None,
                                              details={"C1": rep.C1, "C2": rep.C2, "empirical": True}))
        self.slack_cols = slack_cols
        self.report["checks"] = [rep.to_dict() for rep in results]
        self.failed = [rep.name for rep in results if not rep.passed]

    def decay_check(self, slack_cols):
        c, econf = self.coeffs, self.cfg.evolution()
        tol = self.cfg["diagnostics"]["decay_tol"]
        mu = self.rates_.mu

        def one(z0):
            return sf.linear_decay_check(c, z0, econf.T, econf.dt, mu, tol, econf.record_every, econf.cg_tol)

        states = self.initial()
        with ThreadPoolExecutor(max_workers=worker_count()) as pool:
            reports = list(pool.map(one, states))
        worst = max(range(len(reports)), key=lambda i: reports[i].max_ratio)
        slack_cols["decay"] = [1.0 + tol - v for v in reports[0].ratios]
        rep = reports[worst]
        t_worst = float(rep.times[int(np.argmax(rep.ratios))])
        return dg.CheckReport("decay", all(x.passed for x in reports), rep.max_ratio, 1.0,
                              {"member": worst, "t": t_worst},
                              details={"mu": mu, "tol": tol, "members": len(reports),
                                       "max_ratios": [x.max_ratio for x in reports]})

    def tail_check(self, tol, slack_cols):
        diag = self.cfg["diagnostics"]
        R = self.cfg["initial"].get("R_declared")
        tb = dg.tail_bound_check(self.trajectory, self.coeffs, self.evolved_spec, self.constants,
                                 self.certificate, R, diag["ks"], diag["mode"], tol)
        t = np.asarray(self.trajectory.times) - self.trajectory.times[0]
        decay = np.exp(-2 * self.constants.delta * self.constants.nu * t)
        slack = np.full(len(t), np.inf)
        for key, energy in tb.series.items():
            rep = tb.reports[key]
            slack = np.minimum(slack, rep.c_k + rep.Mprime * decay - energy)
        for key, energy in tb.series.items():
            if key != "total":
                self.columns[f"tail_k{key:g}"] = energy
        slack_cols["tail_bound"] = list(slack)
        self.report["tails"] = tb.to_dict()
        return dg.CheckReport("tail_bound", tb.passed, tb.max_excess, 1.0, tb.witness,
                              details={"tol": tol, "R": tb.R})

    def ultimate_check(self):
        info = self.ultimate()
        radius = 1.1 * info["R_inf"]
        entries = []
        c, spec, econf = self.coeffs, self.evolved_spec, self.cfg.evolution()
        members = [self.trajectory] + [sf.evolve(c, spec, z0, econf) for z0 in self.initial()[1:]]
        for traj in members:
            norms = dg.measured_radius(traj, self.grid)
            entries.append(dg.entry_time(traj.times, norms, radius))
        info["entry_times"] = entries
        info["radius_checked"] = radius
        self.report["ultimate_bound"] = info
        passed = all(e is not None for e in entries)
        worst = max((e for e in entries if e is not None), default=None)
        return dg.CheckReport("ultimate_bound", passed, math.inf if not passed else worst, 1.0,
                              None if passed else {"member": entries.index(None)},
                              details={"R_inf": info["R_inf"]})

    # (7) series for the CSV
    def series(self):
        g, c, traj = self.grid, self.coeffs, self.trajectory
        ones = dg.WeightSet.ones(g)
        r = self.rates_
        vals = [dg.lyapunov_values(c, self.evolved_spec, z, ones, r.delta, r.mu) for z in traj.states]
        cols = {
            "t": list(traj.times),
            "V": [v.V for v in vals],
            "Vstar": [v.Vstar for v in vals],
            "eta": [v.eta for v in vals],
            "w": [v.w for v in vals],
            "normZ": [sf.z_norm(g, z) for z in traj.states],
            "energyNorm": [sf.energy_norm(c, z) for z in traj.states],
            "totalEnergy": [dg.total_energy(c, z, r.delta) for z in traj.states],
        }
        for key in sorted(k for k in self.columns if k.startswith("tail_k")):
            cols[key] = list(self.columns[key])
        for key, col in getattr(self, "slack_cols", {}).items():
            cols[f"slack_{key}"] = col
        self.columns_out = cols


def run_experiment(cfg: ExperimentConfig, command: str = "simulate", seed: int | None = None,
                   out_dir: str | Path | None = None) -> RunResult:
    """Run the pipeline for ``command``; artifacts are written when ``out_dir`` is given."""
    if command not in COMMANDS:
        raise ConfigurationError(f"unknown command {command!r}")
    run = _Run(cfg, command, seed)
    code = EXIT_OK
    try:
        run.build()
        run.lambda1()
        if command != "lambda1":
            if command == "dissipativity":
                run.certify()
            else:
                run.hypotheses()
        if command in ("constants", "simulate", "decay", "tails", "identities"):
            run.rates()
            full = command == "constants" or cfg["diagnostics"]["mode"] == "constants"
            run.bundle(full)
            if command == "constants":
                run.constants_mode_tails()
        if command in ("simulate", "decay", "tails", "identities"):
            checks = COMMAND_CHECKS.get(command, cfg["diagnostics"]["checks"])
            run.evolve(checks)
            run.run_checks(checks)
            run.series()
            if run.failed:
                raise CheckFailure(f"checks failed: {run.failed}", witness=run.failed)
    except Exception as exc:  # noqa: BLE001 - mapped onto the exit-code contract
        code = exit_code_for(exc)
        err = {"type": type(exc).__name__, "message": str(exc)}
        for attr in ("hypothesis", "last_finite_time", "witness", "node", "u"):
            if getattr(exc, attr, None) is not None:
                err[attr] = getattr(exc, attr)
        run.report["error"] = err
        log.error("%s: %s", type(exc).__name__, exc)
    run.report["exit_code"] = code
    result = RunResult(code, run.report, run.trajectory, getattr(run, "columns_out", {}))
    if out_dir is not None:
        result.paths = emit(result, cfg, out_dir)
    return result


def emit(result: RunResult, cfg: ExperimentConfig, out_dir: str | Path) -> dict:
    """Write the JSON report and, if a trajectory exists, the CSV series."""
    out = Path(out_dir)
    paths = {}
    try:
        out.mkdir(parents=True, exist_ok=True)
        json_path = out / cfg["output"]["json_path"]
        json_path.write_text(json.dumps(jsonable(result.report), indent=2, sort_keys=True) + "\n")
        paths["json"] = str(json_path)
        if result.columns:
            csv_path = out / cfg["output"]["csv_path"]
            write_csv(csv_path, result.columns)
            paths["csv"] = str(csv_path)
    except OSError as exc:
        raise OSError(f"cannot write output under {out}: {exc}") from exc
    return paths


def write_csv(path: Path, columns: dict) -> None:
    names = list(columns)
    rows = len(columns["t"])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(names)
        for i in range(rows):
            writer.writerow(["" if columns[n][i] is None else repr(float(columns[n][i])) for n in names])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="attractorlab",
                                     description="Damped wave equation simulation and verification lab.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="experiment JSON file")
        p.add_argument("--seed", type=int, default=None, help="overrides initial.seed")
        p.add_argument("--out-dir", default=".", help="directory for the CSV and JSON outputs")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = ExperimentConfig.load(args.config)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_HYPOTHESIS
    result = run_experiment(cfg, args.command, args.seed, args.out_dir)
    summary = {"exit_code": result.exit_code, **result.paths}
    if "error" in result.report:
        summary["error"] = result.report["error"]["message"]
    print(json.dumps(summary, sort_keys=True))
    return result.exit_code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
