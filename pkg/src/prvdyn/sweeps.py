"""Batch experiments: stability charts, restitution sweeps and the hysteresis cycle."""
from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .csvio import write_csv
from .equilibrium import tank_pressure_curve
from .pdm import InflowSchedule, RunSettings, SimResult, initial_state, simulate
from .system import ValveSystem


@dataclass(frozen=True)
class Thresholds:
    """Classification thresholds; every output records the values used."""

    decay_factor: float = 10.0
    decay_window: float = 0.5
    settle_window: float = 0.2
    amp_fraction: float = 0.01
    chatter_impacts: int = 20
    chatter_window: float = 0.1


@dataclass
class RunClassification:
    opening: str  # stable | unstable | indeterminate
    closing: str
    label: str
    metrics: dict = field(default_factory=dict)


LABELS = {("stable", "stable"): "SoSc", ("stable", "unstable"): "SoUc", ("unstable", "stable"): "UoSc", ("unstable", "unstable"): "UoUc"}


def _label(opening, closing):
    return LABELS.get((opening, closing), "indeterminate")


def max_impacts_in_window(times: Sequence[float], width: float) -> int:
    t = np.sort(np.asarray(times, float))
    if t.size == 0:
        return 0
    j = np.searchsorted(t, t + width, side="right")
    return int(np.max(j - np.arange(t.size)))


def dominant_frequency(t: np.ndarray, x: np.ndarray) -> float:
    if t.size < 8:
        return float("nan")
    tu = np.linspace(t[0], t[-1], t.size)
    xu = np.interp(tu, t, x)
    xu = xu - np.polyval(np.polyfit(tu - tu[0], xu, 1), tu - tu[0])
    amp = np.abs(np.fft.rfft(xu))
    freq = np.fft.rfftfreq(tu.size, tu[1] - tu[0])
    if amp.size < 2 or not np.any(amp[1:] > 0):
        return 0.0
    return float(freq[1 + int(np.argmax(amp[1:]))])


def classify_run(result: SimResult, x_stop: float, th: Thresholds = Thresholds()) -> RunClassification:
    """Label the opening and closing transients of one run.

    Opening is stable when the lift oscillation after the first peak shrinks
    by ``decay_factor`` (or below ``amp_fraction`` of x_stop) within
    ``decay_window`` and no impacts occur after the settle window.  Closing
    is unstable when more than ``chatter_impacts`` impacts fall in any
    ``chatter_window`` around closure.
    """
    s, ev = result.samples, result.events
    t, x = s["t"], s["x"]
    impacts = [e.t for e in ev if e.kind in ("seat-impact", "stop-impact")]
    opens = [e.t for e in ev if e.kind == "valve-open"]
    if not opens and x.size and x[0] > 0.0:
        # the run starts with the valve already open
        opens = [float(t[0])]
    closes = [e.t for e in ev if e.kind == "blowdown-close"]
    reversal = result.status == "flow-reversal"
    metrics = {
        "max_overshoot": float("nan"),
        "impacts": len(impacts),
        "max_impacts_per_window": max_impacts_in_window(impacts, th.chatter_window),
        "frequency_hz": float("nan"),
        "settled": bool(result.summary.get("settled", False)),
        "thresholds": asdict(th),
    }
    opening = "indeterminate"
    if opens:
        t_open = opens[0]
        first_close = next((c for c in closes if c > t_open), math.inf)
        w = (t >= t_open) & (t <= min(first_close, t_open + th.decay_window + 0.5))
        tw, xw = t[w], x[w]
        # first pronounced local maximum of the lift after opening
        k = None
        big = 0.5 * float(np.max(xw)) if xw.size else 0.0
        for i in range(1, xw.size - 1):
            if tw[i] > t_open + th.decay_window:
                break
            if xw[i] >= xw[i - 1] and xw[i] > xw[i + 1] and xw[i] >= big:
                k = i
                break
        t_peak = tw[k] if k is not None else t_open
        t_chk = t_peak + th.decay_window
        late = [ti for ti in impacts if ti > t_open + th.settle_window and ti < first_close]
        if reversal and (not closes or result.summary["t_final"] < first_close):
            opening = "unstable"
        elif t_chk <= t[-1] and t_chk <= first_close:
            head = (t >= t_peak) & (t <= t_peak + 0.1 * th.decay_window)
            tail = (t >= t_chk - 0.1 * th.decay_window) & (t <= t_chk)
            ref = float(np.mean(x[tail]))
            a0 = float(np.max(np.abs(x[head] - ref))) if np.any(head) else 0.0
            # the tank pressure drifts slowly, so remove the linear trend first
            tt, xt = t[tail], x[tail]
            resid = xt - np.polyval(np.polyfit(tt - tt[0], xt, 1), tt - tt[0]) if xt.size > 2 else xt - xt.mean()
            a1 = 0.5 * float(np.ptp(resid))
            decayed = a1 <= a0 / th.decay_factor or a1 < th.amp_fraction * x_stop
            opening = "stable" if decayed and not late else "unstable"
            win = (t >= t_open) & (t <= t_chk)
            metrics["max_overshoot"] = float((np.max(x[win]) - ref) / x_stop)
            metrics["frequency_hz"] = dominant_frequency(t[win], x[win])
        elif late:
            opening = "unstable"
    closing = "indeterminate"
    if closes:
        tc = closes[0]
        around = [ti for ti in impacts if tc - th.chatter_window <= ti <= tc + 1.0]
        closing = "unstable" if max_impacts_in_window(around, th.chatter_window) > th.chatter_impacts else "stable"
    elif opens and not reversal:
        # no reclosure within the horizon: judged on chatter after the settle window
        after = [ti for ti in impacts if ti > opens[0] + th.settle_window]
        closing = "unstable" if max_impacts_in_window(after, th.chatter_window) > th.chatter_impacts else "stable"
    return RunClassification(opening, closing, _label(opening, closing), metrics)


# ---------------------------------------------------------------------------
# stability chart


def resolve_jobs(jobs: Optional[int] = None) -> int:
    if jobs is None:
        env = os.environ.get("PRVDYN_JOBS")
        jobs = int(env) if env else 1
    return max(1, int(jobs))


def _pmap(fn, args, jobs):
    if jobs > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(fn, args))
    return [fn(a) for a in args]


def _chart_cell(arg):
    system, q, L, run, p0_frac, th = arg
    s = system.replace(L=L)
    sched = InflowSchedule.constant(q * system.capacity())
    res = simulate(s, sched, run, initial=initial_state(s, run.n_nodes, p0_frac * s.p_set))
    c = classify_run(res, s.x_stop, th)
    if res.status == "flow-reversal":
        c.metrics["status"] = "flow-reversal"
    return (q, L, c)


@dataclass
class StabilityChart:
    cells: list  # (q, L, RunClassification) in q-major order
    boundary: Optional[object] = None


def stability_chart(
    L_grid: Sequence[float],
    q_grid: Sequence[float],
    system: ValveSystem,
    run: RunSettings = RunSettings(t_end=1.5, sample_dt=1e-4),
    thresholds: Thresholds = Thresholds(),
    p0_fraction: float = 0.99,
    jobs: Optional[int] = None,
    with_boundary: bool = False,
) -> StabilityChart:
    """Classify one closed-valve opening run per (q, L) cell."""
    args = [(system, float(q), float(L), run, p0_fraction, thresholds) for q in q_grid for L in L_grid]
    cells = _pmap(_chart_cell, args, resolve_jobs(jobs))
    boundary = None
    if with_boundary and len(q_grid):
        from .geometry import EffectiveAreaModel
        from .qwm import hopf_boundary

        plain = system.replace(aeff=EffectiveAreaModel())
        boundary = hopf_boundary(plain, [q for q in q_grid if 0 < q <= 1])
    return StabilityChart(cells, boundary)


def write_chart_csv(chart: StabilityChart, path, header_lines=()) -> None:
    rows = [(q, L, c.label, c.opening, c.closing, c.metrics["max_overshoot"], c.metrics["impacts"]) for q, L, c in chart.cells]
    write_csv(path, ["q", "L", "label", "opening", "closing", "max_overshoot", "impacts"], rows, header_lines)


# ---------------------------------------------------------------------------
# restitution sweep


@dataclass
class PoincareSection:
    r: float
    lifts: np.ndarray
    status: str = "completed"

    @property
    def spread(self) -> float:
        return float(np.ptp(self.lifts)) if self.lifts.size else float("nan")


def section_lifts(result: SimResult, x_stop: float, t_discard: float) -> np.ndarray:
    """Lifts at velocity-zero crossings after the discard time.

    A run resting on the stop has no crossings; its section is the stop itself.
    """
    sec = result.section
    pts = sec[sec[:, 0] >= t_discard, 1] if sec.size else np.zeros(0)
    if pts.size == 0 and result.summary.get("final_contact") == "stop-contact":
        pts = np.array([x_stop])
    return np.clip(pts, 0.0, x_stop)


def _sweep_cell(arg):
    system, r, q, run, discard, p0_frac = arg
    s = system.with_geometry(e0=r, e1=r)
    res = simulate(s, InflowSchedule.constant(q * system.capacity()), run, initial=initial_state(s, run.n_nodes, p0_frac * s.p_set))
    return PoincareSection(r, section_lifts(res, s.x_stop, discard * run.t_end), res.status)


def restitution_sweep(
    r_grid: Sequence[float],
    system: ValveSystem,
    q: float,
    run: RunSettings = RunSettings(t_end=5.0, sample_dt=1e-3),
    discard: float = 0.5,
    p0_fraction: float = 0.99,
    jobs: Optional[int] = None,
) -> list:
    """Poincare section of the lift for each restitution coefficient (seat and stop alike)."""
    for r in r_grid:
        if not 0.0 <= r <= 1.0:
            raise ValueError("restitution coefficients must lie in [0, 1]")
    args = [(system, float(r), q, run, discard, p0_fraction) for r in r_grid]
    return _pmap(_sweep_cell, args, resolve_jobs(jobs))


def count_clusters(lifts: np.ndarray, tol: float) -> int:
    """Number of groups of sorted section points separated by more than tol."""
    if lifts.size == 0:
        return 0
    v = np.sort(lifts)
    return 1 + int(np.sum(np.diff(v) > tol))


def write_sweep_csv(sections: list, path, header_lines=()) -> None:
    rows = [(sec.r, x) for sec in sections for x in sec.lifts]
    write_csv(path, ["r", "section_lift"], rows, header_lines)


# ---------------------------------------------------------------------------
# hysteresis cycle

STAGES = ("pressure-build", "pop-open", "pseudo-equilibrium", "blowdown-close")


def hysteresis_stages(result: SimResult, system: ValveSystem, exact_gas: bool = True) -> dict:
    """Time-stamp the four stages of the first relief cycle.

    Stage boundaries are the first valve opening, the valve coming to rest on
    the stop, its release from the stop and the reclosure on the seat.
    """
    ev = result.events
    t0 = float(result.samples["t"][0])

    def first(kind, after=-math.inf):
        return next((e for e in ev if e.kind == kind and e.t > after), None)

    open_ev = first("valve-open")
    stick = first("stick-stop", open_ev.t if open_ev else math.inf)
    close = first("blowdown-close", stick.t if stick else math.inf)
    # brief stick/release bursts follow the pop; the stage ends at the last
    # release from the stop before reclosure
    rels = [e for e in ev if e.kind == "release" and stick is not None and e.t > stick.t and (close is None or e.t < close.t)]
    rel = rels[-1] if rels else None
    if rel is None:
        close = None
    marks = [t0, open_ev, stick, rel, close]
    stages, missing = {}, []
    for i, name in enumerate(STAGES):
        a, b = marks[i], marks[i + 1]
        ta = a if isinstance(a, float) else (a.t if a is not None else None)
        if ta is None or b is None:
            if i == 0 and ta is not None:
                # never opened: the build-up lasts the whole run
                stages[name] = {"start": ta, "end": float(result.samples["t"][-1])}
            else:
                missing.append(name)
            continue
        stages[name] = {"start": ta, "end": b.t}
    out = {"stages": stages, "missing": missing}
    if stick is not None:
        chatter = [e.t for e in ev if e.kind == "stop-impact" and open_ev.t < e.t <= stick.t]
        out["chatter_impacts"] = len(chatter)
        if len(chatter) >= 2:
            out["chatter_frequency_hz"] = (len(chatter) - 1) / (chatter[-1] - chatter[0])
    # one relief cycle: stop arrival to the next stop arrival after reclosure,
    # falling back to first opening to reopening
    if close is not None:
        stick2 = first("stick-stop", close.t)
        reopen = first("valve-open", close.t)
        if stick is not None and stick2 is not None:
            out["cycling_frequency_hz"] = 1.0 / (stick2.t - stick.t)
        elif reopen is not None:
            out["cycling_frequency_hz"] = 1.0 / (reopen.t - open_ev.t)
    if "cycling_frequency_hz" in out and "chatter_frequency_hz" in out:
        out["frequency_ratio"] = out["chatter_frequency_hz"] / out["cycling_frequency_hz"]
    P_stop = tank_pressure_curve(system, system.x_stop, exact_gas)
    out["P_stop"] = P_stop
    if rel is not None:
        out["release_pressure"] = rel.p_r
    if close is not None:
        out["close_pressure"] = close.p_r
        out["close_error"] = (close.p_r - P_stop) / P_stop
    return out


def hysteresis_scenario(
    system: ValveSystem,
    schedule: InflowSchedule,
    run: RunSettings = RunSettings(t_end=10.0, sample_dt=1e-3),
    p0_fraction: float = 0.99,
) -> tuple:
    res = simulate(system, schedule, run, initial=initial_state(system, run.n_nodes, p0_fraction * system.p_set))
    return res, hysteresis_stages(res, system)


def write_stages_json(stages: dict, path) -> None:
    with open(path, "w", newline="\n") as fh:
        json.dump(stages, fh, indent=2, sort_keys=True)
        fh.write("\n")
