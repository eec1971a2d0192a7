"""Sweep definitions and the experiment runner behind the CLI.

One experiment produces ``<tag>.csv`` (one row per sweep point, scheme,
CSI case and precoder), ``<tag>_reports.csv`` (per-geometry SE rows),
``<tag>_timing.csv`` (wall time per row) and ``<tag>.png``.  Every MSP
value depends only on the seed and the row key; wall time is kept out of
the main CSV so reruns reproduce it byte for byte.
"""

from __future__ import annotations

import csv
import json
import subprocess
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .asymptotics import verify_observer_limit, verify_jammer_limit
from .baselines import run_baseline
from .optimizer import Budget
from .scenario import ConfigError, SystemParams
from .spectral import ExpectationPlan, append_reports, signaling_load

EXPERIMENTS = ("D_sweep", "M_sweep", "csi_cases", "N_sweep", "Nr_sweep", "rhoJ_sweep",
               "asymptotics", "signaling")
TOTAL_ANTENNAS = 240

RESULT_HEADER = ("sweep_value", "scheme", "csi_case", "precoder", "msp_mean", "msp_stderr")


@dataclass(frozen=True)
class ExperimentSpec:
    """One figure: a sweep over ``grid`` of every (scheme, case, precoder) combination."""

    tag: str
    grid: tuple
    schemes: tuple = ("OPT",)
    cases: tuple = ("case1", "case2")
    precoders: tuple = ("ZF", "MRT")
    plan: ExpectationPlan = ExpectationPlan()
    budget: Budget = Budget()
    out: Path = Path("results")
    seed: int = 0
    params: SystemParams = SystemParams()

    def __post_init__(self):
        if self.tag not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.tag!r}; expected one of {EXPERIMENTS}")
        if len(self.grid) == 0:
            raise ValueError("empty sweep grid")
        if self.tag not in ("csi_cases", "signaling"):
            if any(not (np.isfinite(v) and v > 0) for v in self.grid):
                raise ValueError("sweep values must be positive")


def default_spec(tag, **kw) -> ExperimentSpec:
    """Sweeps matching the reference figures, at the module-default plan."""
    table = {
        "D_sweep": dict(grid=(0.5, 1.0, 1.5), schemes=("OPT", "COLOCATED")),
        "M_sweep": dict(grid=(2, 4, 6, 8, 12, 16, 24),
                        schemes=("OPT", "RMA_OPA", "RMA_EPA"), cases=("case1",)),
        "csi_cases": dict(grid=("perfect", "case1", "case2"), cases=("case1",)),
        "N_sweep": dict(grid=(1, 10, 20, 30, 40, 50)),
        "Nr_sweep": dict(grid=(1, 2, 4, 8, 16, 32)),
        "rhoJ_sweep": dict(grid=(0.001, 0.01, 0.1, 0.2, 0.5, 1.0)),
        "asymptotics": dict(grid=(8, 16, 32, 64, 128), cases=("case1",), precoders=("MRT",)),
        "signaling": dict(grid=tuple(range(0, 9)), cases=("case1", "case2"), precoders=("ZF",)),
    }
    if tag not in table:
        raise ValueError(f"unknown experiment {tag!r}; expected one of {EXPERIMENTS}")
    return ExperimentSpec(tag=tag, **{**table[tag], **kw})


def point_params(spec: ExperimentSpec, value, precoder) -> tuple[SystemParams, str]:
    """Parameters for one sweep value; returns ``(params, monitor_csi)``."""
    p = spec.params.replace(precoder_kind=precoder)
    tag = spec.tag
    if tag == "D_sweep":
        return p.replace(D=float(value)), "estimated"
    if tag == "M_sweep":
        M = int(value)
        if TOTAL_ANTENNAS % M:
            raise ConfigError(f"M={M} does not divide {TOTAL_ANTENNAS} antennas")
        return p.replace(M=M, N=TOTAL_ANTENNAS // M), "estimated"
    if tag == "csi_cases":
        return p, ("perfect" if value == "perfect" else "estimated")
    if tag == "N_sweep":
        return p.replace(N=int(value)), "estimated"
    if tag == "Nr_sweep":
        return p.replace(Nr=int(value), Nt=int(value)), "estimated"
    if tag == "rhoJ_sweep":
        return p.replace(P_J=float(value)), "estimated"
    raise ValueError(f"{tag} is not an MSP sweep")


def git_revision(cwd=None):
    try:
        out = subprocess.run(["git", "rev-parse", "HEAD"], capture_output=True, text=True,
                             cwd=cwd, timeout=5)
        return out.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    rows: list = field(default_factory=list)
    skipped: list = field(default_factory=list)
    files: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)


def _fmt(v):
    return f"{v:.10g}" if isinstance(v, float) else str(v)


def _check_writable(out: Path):
    out.mkdir(parents=True, exist_ok=True)
    probe = out / ".write_probe"
    probe.write_text("")
    probe.unlink()


def run_experiment(spec: ExperimentSpec, map_fn=map, plot=True) -> ExperimentResult:
    """Run every point of ``spec`` and write the result files."""
    out = Path(spec.out)
    _check_writable(out)
    result = ExperimentResult(spec)
    if spec.tag == "asymptotics":
        _run_asymptotics(spec, result)
    elif spec.tag == "signaling":
        _run_signaling(spec, result)
    else:
        _run_msp_sweep(spec, result, map_fn)
    if plot and spec.tag != "signaling":
        from .plotting import plot_experiment

        png = out / f"{spec.tag}.png"
        plot_experiment(result.files["results"], png, spec.tag)
        result.files["figure"] = png
    _write_manifest(spec, result)
    return result


def _run_msp_sweep(spec, result, map_fn):
    out = Path(spec.out)
    main = out / f"{spec.tag}.csv"
    reports = out / f"{spec.tag}_reports.csv"
    timing = out / f"{spec.tag}_timing.csv"
    for f in (main, reports, timing):
        f.unlink(missing_ok=True)
    rows, times = [], []
    for value in spec.grid:
        for precoder in spec.precoders:
            try:
                params, monitor_csi = point_params(spec, value, precoder)
            except ConfigError as exc:
                result.skipped.append({"sweep_value": value, "precoder": precoder,
                                       "reason": str(exc)})
                continue
            for scheme in spec.schemes:
                if spec.tag == "csi_cases":
                    cases = ("case1",) if value == "perfect" else (value,)
                else:
                    cases = spec.cases
                for case in cases:
                    t0 = time.perf_counter()
                    est = run_baseline(scheme, params, spec.plan, seed=spec.seed, case=case,
                                       budget=spec.budget, map_fn=map_fn,
                                       monitor_csi=monitor_csi)
                    dt = time.perf_counter() - t0
                    key = (value, scheme, case, precoder)
                    rows.append(key + (est.msp, est.stderr))
                    times.append(key + (dt,))
                    append_reports(reports, est.reports, est.configs,
                                   extra=dict(zip(RESULT_HEADER[:4], key)))
    _write_rows(main, RESULT_HEADER, rows)
    _write_rows(timing, RESULT_HEADER[:4] + ("runtime_s",), times)
    result.rows = rows
    result.files.update(results=main, reports=reports, timing=timing)


def _write_rows(path, header, rows):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


ASYMPTOTIC_HEADER = ("sweep", "nodes", "quantity", "value")


def _run_asymptotics(spec, result):
    out = Path(spec.out)
    rng = np.random.default_rng([spec.seed, 7])
    params = spec.params
    p2 = verify_observer_limit(params, M_o_sweep=tuple(int(v) for v in spec.grid), rng=rng)
    p3 = verify_jammer_limit(params, rng=rng)
    rows = []
    for i, m in enumerate(p2.M_o):
        rows += [("observers", int(m), "noise", p2.noise[i]),
                 ("observers", int(m), "interference", p2.interference[i]),
                 ("observers", int(m), "deviation", p2.deviation[i])]
    for i, m in enumerate(p3.M_J):
        rows += [("jammers", int(m), "cpu_jamming", p3.cpu_jamming[i]),
                 ("jammers", int(m), "ur_mean", p3.ur_mean[i]),
                 ("jammers", int(m), "ur_fluctuation", p3.ur_fluctuation[i])]
    main = out / "asymptotics.csv"
    _write_rows(main, ASYMPTOTIC_HEADER, rows)
    result.rows = rows
    result.files["results"] = main
    result.summary = {"noise_slope": p2.noise_slope,
                      "interference_slope": p2.interference_slope,
                      "cpu_ratio": p3.cpu_ratio, "ur_spread": p3.ur_spread}


SIGNALING_HEADER = ("csi_case", "observers", "scalars_per_block", "stat_params")


def report_signaling(params: SystemParams, observers):
    """Rows ``(case, M_o, scalars, stat_params)`` for both CSI cases."""
    rows = []
    for case in ("case1", "case2"):
        for M_o in observers:
            rows.append((case, int(M_o)) + signaling_load(params, int(M_o), case))
    return rows


def format_signaling(rows):
    lines = [f"{'case':<6} {'M_o':>4} {'scalars':>8} {'stats':>6}"]
    lines += [f"{c:<6} {m:>4} {s:>8} {t if t else '--':>6}" for c, m, s, t in rows]
    return "\n".join(lines)


def _run_signaling(spec, result):
    rows = report_signaling(spec.params, spec.grid)
    main = Path(spec.out) / "signaling.csv"
    _write_rows(main, SIGNALING_HEADER, rows)
    result.rows = rows
    result.files["results"] = main


def _write_manifest(spec, result):
    path = Path(spec.out) / f"{spec.tag}_manifest.json"
    doc = {
        "experiment": spec.tag,
        "seed": spec.seed,
        "grid": list(spec.grid),
        "schemes": list(spec.schemes),
        "cases": list(spec.cases),
        "precoders": list(spec.precoders),
        "plan": asdict(spec.plan),
        "budget": asdict(spec.budget),
        "params": spec.params.to_dict(),
        "git": git_revision(Path(__file__).parent),
        "skipped": result.skipped,
        "files": {k: str(v) for k, v in result.files.items()},
    }
    if result.summary:
        doc["summary"] = result.summary
    path.write_text(json.dumps(doc, indent=2, default=str))
    result.files["manifest"] = path
