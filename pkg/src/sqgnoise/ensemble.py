"""Reproducible ensemble of pathwise runs and the probability-bound experiment.

Path i always uses the Wiener stream derived from (master_seed, i), so the
report depends only on the config, never on the worker count or on which
worker ran which index.  Results are reduced in index order by the parent
process, the only writer.
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig
from .diagnostics import condition_check
from .io import write_field, write_json, write_rows_csv, write_trajectory_jsonl
from .solver import TrajectoryRecord, integrate_transformed
from .spectral import gevrey_norm
from .stochastic import BrownianPath, derive_seed, finite_horizon_crossing_probability, sample_path

WORKERS_ENV = "SQGNOISE_WORKERS"
REPORT_COLUMNS = ["path_index", "crossed", "crossing_time", "monotone", "success",
                  "terminal_gevrey_norm", "terminal_sobolev_norm", "error"]


@dataclass(frozen=True)
class PathOutcome:
    path_index: int
    crossed: bool
    crossing_time: float | None
    monotone: bool | None
    terminal_gevrey_norm: float | None
    terminal_sobolev_norm: float | None
    error: str | None = None
    record: TrajectoryRecord | None = field(default=None, compare=False, repr=False)

    @property
    def success(self) -> bool:
        """No crossing on [0, T] and a monotone norm series; errors count as failures."""
        return self.error is None and not self.crossed and self.monotone is True

    def row(self) -> dict:
        return {"path_index": self.path_index, "crossed": self.crossed,
                "crossing_time": self.crossing_time, "monotone": self.monotone,
                "success": self.success, "terminal_gevrey_norm": self.terminal_gevrey_norm,
                "terminal_sobolev_norm": self.terminal_sobolev_norm, "error": self.error}


@dataclass
class EnsembleReport:
    outcomes: list
    horizon: float
    params: object
    shifted_hypothesis: bool
    unshifted_hypothesis: bool
    horizon_slack: float = 0.01

    @property
    def n_paths(self) -> int:
        return len(self.outcomes)

    @property
    def n_success(self) -> int:
        return sum(o.success for o in self.outcomes)

    @property
    def empirical_success_rate(self) -> float:
        return self.n_success / self.n_paths

    @property
    def std_error(self) -> float:
        p = self.empirical_success_rate
        return math.sqrt(p * (1 - p) / self.n_paths)

    @property
    def analytic_bound(self) -> float:
        """1 - exp(-2 alpha beta / nu^2): needs ||u0||_{G^sigma_{alpha+eps}} <= nu^2/2 - beta."""
        p = self.params
        return 1 - math.exp(-2 * p.alpha * p.beta / p.nu**2)

    @property
    def analytic_bound_shifted(self) -> float:
        """1 - exp(-2 (alpha - eps) beta / nu^2): needs ||theta0||_{G^sigma_alpha} <= nu^2/2 - beta."""
        p = self.params
        return 1 - math.exp(-2 * (p.alpha - p.epsilon) * p.beta / p.nu**2)

    @property
    def finite_horizon_survival(self) -> float:
        """P(no crossing on [0, horizon]) under continuous monitoring."""
        return 1 - finite_horizon_crossing_probability(self.horizon, self.params)

    @property
    def applicable_bound(self) -> float | None:
        if self.shifted_hypothesis:
            return self.analytic_bound
        if self.unshifted_hypothesis:
            return self.analytic_bound_shifted
        return None

    @property
    def passed(self) -> bool:
        """One-sided check: rate >= bound - 3 std_error - horizon_slack."""
        b = self.applicable_bound
        if b is None:
            return False
        return self.empirical_success_rate >= b - 3 * self.std_error - self.horizon_slack

    def summary(self) -> dict:
        return {
            "n_paths": self.n_paths,
            "n_success": self.n_success,
            "n_errors": sum(o.error is not None for o in self.outcomes),
            "n_crossed": sum(o.crossed for o in self.outcomes),
            "empirical_success_rate": self.empirical_success_rate,
            "std_error": self.std_error,
            "horizon": self.horizon,
            "analytic_bound_alpha": self.analytic_bound,
            "analytic_bound_alpha_minus_eps": self.analytic_bound_shifted,
            "hypothesis_alpha_plus_eps_norm": self.shifted_hypothesis,
            "hypothesis_alpha_norm": self.unshifted_hypothesis,
            "finite_horizon_survival": self.finite_horizon_survival,
            "horizon_slack": self.horizon_slack,
            "pass": self.passed,
        }


def _outcome(i: int, cfg: RunConfig, path: BrownianPath, keep: bool) -> PathOutcome:
    """Run one member; overflow and non-finite states are recorded as failures."""
    try:
        rec = integrate_transformed(cfg.initial_field(), path, cfg.solver(stop_on_crossing=True),
                                    cfg.params)
    except ArithmeticError as err:
        return PathOutcome(i, False, None, None, None, None, f"{type(err).__name__}: {err}")
    return PathOutcome(i, rec.crossed, rec.crossing_time,
                       rec.monotone,
                       float(rec.gevrey_norm[-1]), float(rec.sobolev_norm[-1]),
                       record=rec if keep else None)


def _run_one(args) -> PathOutcome:
    i, cfg_doc, keep = args
    cfg = RunConfig.from_dict(cfg_doc, validate=False)
    pth = cfg.doc["path"]
    path = sample_path(derive_seed(pth["master_seed"], i), pth["T"], pth["h"])
    return _outcome(i, cfg, path, keep)


def worker_count(default: int | None = None) -> int:
    raw = os.environ.get(WORKERS_ENV)
    if raw is None:
        return default or 1
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{WORKERS_ENV}={raw!r} is not an integer") from None
    if n < 1:
        raise ValueError(f"{WORKERS_ENV} must be >= 1")
    return n


def run_ensemble(config: RunConfig, workers: int | None = None,
                 paths: list[BrownianPath] | None = None) -> EnsembleReport:
    """Integrate every ensemble member and reduce in path-index order.

    ``workers`` defaults to the SQGNOISE_WORKERS environment variable (else 1).
    Passing ``paths`` (a list of BrownianPath) replaces the seeded draws; it is
    used for forced-path tests and always runs serially.
    """
    config.validate()
    doc = config.to_dict()
    n = doc["ensemble"]["n_paths"]
    keep = doc["ensemble"]["save_trajectories"]
    p = config.params
    if paths is not None:
        outs = [_outcome(i, config, path, i < keep) for i, path in enumerate(paths)]
    else:
        workers = workers or worker_count()
        jobs = [(i, doc, i < keep) for i in range(n)]
        if workers == 1:
            outs = [_run_one(j) for j in jobs]
        else:
            with ProcessPoolExecutor(max_workers=workers) as ex:
                outs = list(ex.map(_run_one, jobs, chunksize=max(1, n // (8 * workers))))
    outs.sort(key=lambda o: o.path_index)
    if [o.path_index for o in outs] != list(range(len(outs))):
        raise RuntimeError("ensemble lost or duplicated path indices")
    u0 = config.initial_field()
    shifted = condition_check(u0, p)["admissible"]
    unshifted = gevrey_norm(u0, p.alpha, p, p.sigma) <= p.threshold
    return EnsembleReport(outs, doc["solver"]["T_end"], p, shifted, unshifted,
                          doc["ensemble"]["horizon_slack"])


def manifest(config: RunConfig, command: str, extra: dict | None = None) -> dict:
    """Deterministic run manifest (no wall time; that goes to timing.json)."""
    doc = config.to_dict()
    p = config.params
    out = {
        "command": command,
        "code_version": __version__,
        "config": doc,
        "grid": {"N": config.grid.N, "dealias_cutoff": config.grid.dealias_cutoff},
        "scheme": doc["solver"]["scheme"],
        "seeds": {"master_seed": doc["path"]["master_seed"], "initial_seed": doc["initial"]["seed"],
                  "derivation": "SeedSequence(master_seed, spawn_key=(path_index,))"},
        "hypothesis_violations": p.hypothesis_violations(),
    }
    if extra:
        out.update(extra)
    return out


def write_run_dir(out_dir, config: RunConfig, report: EnsembleReport, command: str = "ensemble",
                  wall_time: float | None = None) -> Path:
    """Write manifest.json, report.csv, summary.json, trajectories/, fields/, timing.json, DONE."""
    out = Path(out_dir)
    (out / "trajectories").mkdir(parents=True, exist_ok=True)
    (out / "fields").mkdir(exist_ok=True)
    done = out / "DONE"
    if done.exists():
        done.unlink()
    write_json(out / "manifest.json", manifest(config, command))
    write_rows_csv(out / "report.csv", REPORT_COLUMNS, [o.row() for o in report.outcomes])
    write_json(out / "summary.json", report.summary())
    write_field(out / "fields" / "u0.gsqg", config.initial_field(), config.params.s)
    for o in report.outcomes:
        if o.record is not None:
            write_trajectory_jsonl(out / "trajectories" / f"path_{o.path_index:06d}.jsonl", o.record)
            if o.record.final_u is not None:
                write_field(out / "fields" / f"final_{o.path_index:06d}.gsqg", o.record.final_u,
                            config.params.s)
    if wall_time is not None:
        write_json(out / "timing.json", {"wall_time_s": wall_time})
    done.write_text("ok\n")
    return out


def timed_ensemble(config: RunConfig, workers: int | None = None) -> tuple[EnsembleReport, float]:
    t0 = time.perf_counter()
    rep = run_ensemble(config, workers)
    return rep, time.perf_counter() - t0


def success_curve(report: EnsembleReport, n_points: int = 50) -> list[dict]:
    """Fraction of paths not yet crossed at evenly spaced times (plot-ready)."""
    times = np.array([np.inf if o.crossing_time is None else o.crossing_time
                      for o in report.outcomes])
    grid = np.linspace(0, report.horizon, n_points + 1)
    return [{"t": float(t), "surviving_fraction": float(np.mean(times > t))} for t in grid]
