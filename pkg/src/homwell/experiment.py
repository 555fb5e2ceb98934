"""Convergence studies across the separated-scale schedule.

A schedule fixes geometric sequences eps_n = eps0 rho^n, delta_n =
delta0 rho^(alpha n); alpha < 2/3 keeps eps_n / delta_n^{3/2} decaying,
which is the regime every non-probe run must stay in.  For each n a planar
transition problem is minimized and the row records both energies, the
discrepancy between them, the oscillation bound, perimeters of the well
projection and the distance to it.

Rows are plain dataclasses so they serialize to CSV and JSON without any
schema glue; emit writes both formats with full round-trip floats.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from homwell.field import (
    l1_distance,
    perimeter,
    poincare_bound_from_budget,
    project_to_wells,
)
from homwell.geodesic import minimize_KH
from homwell.homogenize import homogenized
from homwell.minimize import (
    SolverOptions,
    TransitionProblem,
    minimize_diffuse,
    suggest_divisions,
)
from homwell.potential import RotatedModulation, TruncatedPotential, truncate

__all__ = [
    "ScalingSchedule",
    "ExperimentRow",
    "RowTable",
    "run_schedule",
    "fit_scaling",
    "ScalingFit",
    "isotropy_study",
    "IsotropyRow",
    "IsotropyTable",
    "probe_exponent",
    "ProbeResult",
    "boundary_term",
    "emit",
    "DEFAULT_ANGLES",
]

REGIME_ALPHA = 2.0 / 3.0


@dataclass(frozen=True)
class ScalingSchedule:
    """eps_n = eps0 rho^n, delta_n = delta0 rho^(alpha n), n = 0..n_max.

    n_max is the last row index; -1 is allowed and encodes the empty
    schedule, for which run_schedule returns an empty table.
    """

    eps0: float = 0.23
    delta0: float = 0.2
    rho: float = 0.5
    alpha: float = 0.5
    n_max: int = 5

    def __post_init__(self):
        if not (0.0 < self.rho < 1.0):
            raise ValueError("rho must lie in (0, 1)")
        if self.eps0 <= 0 or self.delta0 <= 0:
            raise ValueError("eps0 and delta0 must be positive")
        if not (0.0 < self.alpha < 1.0):
            raise ValueError("alpha must lie in (0, 1)")
        if self.n_max < -1:
            raise ValueError("n_max must be at least -1")

    def pair(self, n):
        return self.eps0 * self.rho**n, self.delta0 * self.rho ** (self.alpha * n)

    def ratio(self, n):
        eps, delta = self.pair(n)
        return eps / delta**1.5

    def rows(self):
        return list(range(self.n_max + 1))


@dataclass
class ExperimentRow:
    n: int
    eps: float
    delta: float
    eps_over_delta_3_2: float
    energy: float
    homogenized_energy: float
    discrepancy: float
    poincare_bound: float
    perimeter_reconstructed: float
    sharp_energy: float
    l1_to_projection: float
    wall_time_s: float
    status: str


_ROW_FIELDS = [f.name for f in dataclasses.fields(ExperimentRow)]


class RowTable(list):
    """List of ExperimentRow with run-level constants attached."""

    def __init__(self, rows=(), meta=None):
        super().__init__(rows)
        self.meta = dict(meta or {})


def boundary_term(eps, delta, cap, boundary_perimeter):
    """Energy that an eps-wide boundary strip can hide: cap * eps * |bdry| / delta."""
    return cap * eps * boundary_perimeter / delta


def _nan_row(n, eps, delta, ratio, status):
    return ExperimentRow(n=n, eps=eps, delta=delta, eps_over_delta_3_2=ratio,
                         energy=math.nan, homogenized_energy=math.nan,
                         discrepancy=math.nan, poincare_bound=math.nan,
                         perimeter_reconstructed=math.nan, sharp_energy=math.nan,
                         l1_to_projection=math.nan, wall_time_s=0.0, status=status)


def _solve_row(spec, n, eps, delta, divisions, options, kh, box):
    """One schedule row; returns (row with raw unit-constant bound, grad budget)."""
    t0 = time.perf_counter()
    problem = TransitionProblem(spec=spec, eps=eps, delta=delta, box=box,
                                divisions=divisions, bc="pair")
    u, report = minimize_diffuse(problem, options)
    elapsed = time.perf_counter() - t0

    a, b = (spec.inner.wells if isinstance(spec, TruncatedPotential) else spec.wells)
    proj = project_to_wells(u, a, b)
    per_rec = perimeter(proj, a, b, method="reconstructed")
    row = ExperimentRow(
        n=n, eps=eps, delta=delta, eps_over_delta_3_2=eps / delta**1.5,
        energy=report.total,
        homogenized_energy=report.homogenized_total,
        discrepancy=report.discrepancy,
        poincare_bound=math.nan,
        perimeter_reconstructed=per_rec,
        sharp_energy=kh * per_rec,
        l1_to_projection=l1_distance(u, proj),
        wall_time_s=elapsed,
        status="ok",
    )
    return row, report.grad_budget


def run_schedule(spec, schedule, kh=None, options=None, deterministic_timing=True,
                 threads=1, on_row: Optional[Callable] = None, probe=False, box=None):
    """Minimize the flat-interface problem at every (eps_n, delta_n).

    The oscillation-bound column uses one reference gradient budget (row 0)
    and one fitted constant across all rows, so in log-log coordinates it
    is an exact line of slope 1 against eps/delta^{3/2}.  Failed rows are
    kept with status text and NaN entries; the run continues.

    Refuses alpha >= 2/3 unless probe=True: outside that regime the
    separation hypothesis fails and the rows mean something else.
    """
    if schedule.alpha >= REGIME_ALPHA and not probe:
        raise ValueError(f"alpha = {schedule.alpha} is outside the regime alpha < 2/3; "
                         "pass probe=True to run it anyway")
    options = options or SolverOptions()
    tpot = spec if isinstance(spec, TruncatedPotential) else truncate(spec)
    if kh is None:
        kh = minimize_KH(homogenized(tpot)).kh

    side = 1.0 if box is None else float(np.asarray(box)[0, 1] - np.asarray(box)[0, 0])
    N = tpot.dim_x
    bdry_perim = 2.0 * N * side ** (N - 1)
    L = tpot.lipschitz_global()
    volume = side**N

    ns = schedule.rows()
    tasks = []
    for n in ns:
        eps, delta = schedule.pair(n)
        div = suggest_divisions(eps, delta, side)
        tasks.append((n, eps, delta, div))

    rows = []
    budgets = {}

    def handle(n, eps, delta, outcome):
        if isinstance(outcome, Exception):
            row = _nan_row(n, eps, delta, eps / delta**1.5, f"failed: {outcome}")
        else:
            row, budgets[n] = outcome
        rows.append(row)
        if on_row is not None:
            on_row(row)

    if threads > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(_solve_row, tpot, n, eps, delta, div, options, kh, box)
                       for n, eps, delta, div in tasks]
            for (n, eps, delta, _), fut in zip(tasks, futures):
                try:
                    handle(n, eps, delta, fut.result())
                except Exception as exc:  # per-row failure, keep going
                    handle(n, eps, delta, exc)
    else:
        for n, eps, delta, div in tasks:
            try:
                handle(n, eps, delta, _solve_row(tpot, n, eps, delta, div, options, kh, box))
            except Exception as exc:
                handle(n, eps, delta, exc)

    # reference budget and fitted constant come from the first clean row;
    # the bound column is then a closed formula in (eps, delta) alone
    t_ref = math.nan
    c_fit = 1.0
    first_ok = next((r for r in rows if r.status == "ok"), None)
    if first_ok is not None:
        t_ref = budgets[first_ok.n]
        raw0 = poincare_bound_from_budget(t_ref, first_ok.eps, first_ok.delta,
                                          L, 1.0, volume)
        if raw0 > 0.0 and first_ok.discrepancy > 0.0:
            c_fit = first_ok.discrepancy / raw0
    for r in rows:
        if r.status == "ok":
            r.poincare_bound = poincare_bound_from_budget(t_ref, r.eps, r.delta,
                                                          L, c_fit, volume)
        if deterministic_timing:
            r.wall_time_s = 0.0

    meta = {"kh": kh, "t_ref": t_ref, "c_poincare": c_fit, "lipschitz": L,
            "cap": tpot.cap, "boundary_perimeter": bdry_perim, "volume": volume}
    return RowTable(rows, meta)


@dataclass(frozen=True)
class ScalingFit:
    slope: float
    intercept: float
    r_squared: float


def fit_scaling(rows, column="discrepancy"):
    """Least-squares line of log(column) against log(eps/delta^{3/2}).

    Uses rows with status ok and strictly positive values; all-zero columns
    (homogeneous modulation) are rejected loudly since their log-log fit
    would be meaningless.
    """
    ok = [r for r in rows if r.status == "ok" and math.isfinite(getattr(r, column))]
    vals = [(r.eps_over_delta_3_2, getattr(r, column)) for r in ok]
    pos = [(x, y) for x, y in vals if y > 0.0]
    if vals and not pos:
        raise ValueError(f"column {column!r} is identically zero; nothing to fit")
    if len(pos) < 3:
        raise ValueError(f"need at least 3 positive rows to fit, have {len(pos)}")
    x = np.log([p[0] for p in pos])
    y = np.log([p[1] for p in pos])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - float(np.sum(resid**2)) / ss_tot
    return ScalingFit(slope=float(slope), intercept=float(intercept), r_squared=r2)


DEFAULT_ANGLES = (0.0, math.pi / 6.0, math.pi / 4.0, math.pi / 3.0, math.pi / 2.0)


@dataclass
class IsotropyRow:
    theta: float
    energy: float
    interface_length: float
    energy_per_length: float
    status: str


class IsotropyTable(list):
    def __init__(self, rows=(), meta=None):
        super().__init__(rows)
        self.meta = dict(meta or {})

    def spread(self):
        """(max - min) / mean of energy per unit length over clean rows."""
        vals = [r.energy_per_length for r in self if r.status == "ok"]
        if not vals:
            return math.nan
        mean = sum(vals) / len(vals)
        return (max(vals) - min(vals)) / mean


def isotropy_study(spec, eps, delta, angles=DEFAULT_ANGLES, kh=None, options=None,
                   divisions=None, threads=1):
    """Planar-interface energies per unit reconstructed length across angles.

    Each angle is realized by rotating the microstructure underneath an
    axis-aligned strip whose interface stays on the horizontal midline, so
    no transition layer is ever clipped at a box corner and a homogeneous
    modulation gives the same problem at every angle.  The transition
    constant of the homogenized potential is direction-free, so the
    per-length energies should agree across theta; the spread method
    quantifies the residual anisotropy at finite eps, delta.
    """
    options = options or SolverOptions()
    tpot = spec if isinstance(spec, TruncatedPotential) else truncate(spec)
    if tpot.dim_x != 2:
        raise ValueError("isotropy study needs dim_x = 2")
    if kh is None:
        kh = minimize_KH(homogenized(tpot)).kh
    if divisions is None:
        divisions = suggest_divisions(eps, delta)

    rows = []
    if threads > 1 and len(angles) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(_isotropy_task, tpot, eps, delta, divisions,
                                   options, th) for th in angles]
            for th, fut in zip(angles, futures):
                try:
                    rows.append(fut.result())
                except Exception as exc:
                    rows.append(IsotropyRow(theta=th, energy=math.nan,
                                            interface_length=math.nan,
                                            energy_per_length=math.nan,
                                            status=f"failed: {exc}"))
    else:
        for th in angles:
            try:
                rows.append(_isotropy_task(tpot, eps, delta, divisions, options, th))
            except Exception as exc:
                rows.append(IsotropyRow(theta=th, energy=math.nan,
                                        interface_length=math.nan,
                                        energy_per_length=math.nan,
                                        status=f"failed: {exc}"))
    return IsotropyTable(rows, {"kh": kh, "eps": eps, "delta": delta,
                                "divisions": divisions})


def _isotropy_task(tpot, eps, delta, divisions, options, theta):
    work = tpot
    if theta != 0.0:
        inner = dataclasses.replace(
            tpot.inner,
            modulation=RotatedModulation(tpot.inner.modulation, theta))
        work = dataclasses.replace(tpot, inner=inner)
    problem = TransitionProblem(spec=work, eps=eps, delta=delta,
                                divisions=divisions, bc="pair")
    u, report = minimize_diffuse(problem, options)
    a, b = work.wells
    proj = project_to_wells(u, a, b)
    length = perimeter(proj, a, b, method="reconstructed")
    return IsotropyRow(theta=theta, energy=report.total, interface_length=length,
                       energy_per_length=report.total / length, status="ok")


@dataclass
class ProbeResult:
    alpha: float
    rows: RowTable
    discrepancy_decays: Optional[bool]
    gamma_gap_decays: Optional[bool]


def _decays(values):
    vals = [v for v in values if math.isfinite(v) and v > 0.0]
    if len(vals) < 2:
        return None
    return bool(vals[-1] < vals[0])


def probe_exponent(spec, alphas, eps0=0.23, delta0=0.2, rho=0.5, n_max=3,
                   kh=None, options=None, threads=1):
    """Exploratory sweep over the delta exponent, regime guard off.

    For each alpha the schedule runs as usual and the result records whether
    the discrepancy and the gap |F_n - K_H * P_n| still shrink from first to
    last row.  No assertion is made either way; alpha >= 2/3 is exactly the
    territory where the separation hypothesis stops holding.
    """
    options = options or SolverOptions()
    tpot = spec if isinstance(spec, TruncatedPotential) else truncate(spec)
    if kh is None:
        kh = minimize_KH(homogenized(tpot)).kh
    out = []
    for alpha in alphas:
        schedule = ScalingSchedule(eps0=eps0, delta0=delta0, rho=rho,
                                   alpha=alpha, n_max=n_max)
        rows = run_schedule(tpot, schedule, kh=kh, options=options, probe=True,
                            threads=threads)
        gaps = [abs(r.energy - r.sharp_energy) for r in rows if r.status == "ok"]
        dvals = [r.discrepancy for r in rows if r.status == "ok"]
        out.append(ProbeResult(alpha=alpha, rows=rows,
                               discrepancy_decays=_decays(dvals),
                               gamma_gap_decays=_decays(gaps)))
    return out


def _format_value(v):
    if isinstance(v, float):
        # repr of the builtin float is the shortest round-trip form; numpy
        # scalars repr with their type name, so normalize first
        return repr(float(v))
    return str(v)


def emit(rows, path, fmt=None):
    """Write rows as CSV or JSON; format inferred from the extension.

    Column order is the row field order; floats are written in round-trip
    precision so CSV and JSON parse back to identical values.
    """
    path = str(path)
    if fmt is None:
        if path.endswith(".csv"):
            fmt = "csv"
        elif path.endswith(".json"):
            fmt = "json"
        else:
            raise ValueError(f"cannot infer format from {path!r}; pass fmt")
    dicts = [dataclasses.asdict(r) for r in rows]
    try:
        if fmt == "csv":
            with open(path, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(_ROW_FIELDS)
                for d in dicts:
                    writer.writerow([_format_value(d[k]) for k in _ROW_FIELDS])
        elif fmt == "json":
            with open(path, "w") as fh:
                json.dump(dicts, fh, indent=2)
                fh.write("\n")
        else:
            raise ValueError(f"unknown format {fmt!r}")
    except OSError as exc:
        raise OSError(f"cannot write rows to {path}: {exc}") from exc


def parse_rows(path, fmt=None):
    """Inverse of emit; returns ExperimentRow objects."""
    path = str(path)
    if fmt is None:
        fmt = "csv" if path.endswith(".csv") else "json"
    rows = []
    if fmt == "csv":
        with open(path, newline="") as fh:
            for rec in csv.DictReader(fh):
                rows.append(_row_from_dict(rec, parse=True))
    else:
        with open(path) as fh:
            for rec in json.load(fh):
                rows.append(_row_from_dict(rec, parse=False))
    return rows


def _row_from_dict(rec, parse):
    kwargs = {}
    for f in dataclasses.fields(ExperimentRow):
        v = rec[f.name]
        if f.type in ("int", int):
            kwargs[f.name] = int(v)
        elif f.type in ("float", float):
            kwargs[f.name] = float(v) if parse else float(v)
        else:
            kwargs[f.name] = str(v)
    return ExperimentRow(**kwargs)
