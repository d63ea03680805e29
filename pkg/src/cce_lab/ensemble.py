"""Bath-state sampling, ensemble averages, field sweeps and T2 extraction."""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Sequence

import numpy as np
from scipy.optimize import curve_fit

from .cce import CceConfig, CoherenceCurve, PulseSequence, cce_coherence, enumerate_clusters
from .geometry import SpinBath
from .hamiltonians import BathState, local_frame, overhauser_of_state
from .models import CentralSpinModel
from .spinops import projections

INV_E = math.exp(-1.0)


class EnsembleCapError(ValueError):
    pass


def sample_bath_state(bath: SpinBath, seed) -> BathState:
    """Independent uniformly distributed label for every nucleus."""
    rng = np.random.default_rng(seed)
    mult = np.rint(2 * bath.spins + 1).astype(int)
    idx = rng.integers(0, mult)
    return BathState(bath.spins - idx)


def near_zero_state(bath: SpinBath, seed, projection: str | None = None, target: float = 0.0,
                    max_sweeps: int = 50, exhaustive_limit: int = 1 << 16) -> BathState:
    """Random state adjusted by greedy label changes until ``h_M`` is close to ``target`` (kHz).

    Each pass applies the single-site label change that brings ``h_M``
    closest to the target; it stops when no change improves it. Baths with
    at most ``exhaustive_limit`` product states are searched exhaustively
    instead (ties go to the first state in enumeration order).
    """
    if projection is None:
        projection = "z" if bath.scenario == "dqd" else "vector"
    c = local_frame(bath, projection).couplings
    labels = [projections(float(s)) for s in bath.spins]
    if math.prod(len(lab) for lab in labels) <= exhaustive_limit:
        grid = np.array(list(itertools.product(*labels)))
        return BathState(grid[int(np.argmin(np.abs(grid @ c - target)))])
    m = sample_bath_state(bath, seed).m.copy()
    for _ in range(max_sweeps * len(bath)):
        h = math.fsum(c * m)
        best = (abs(h - target), None, None)
        for i in range(len(bath)):
            for lab in projections(float(bath.spins[i])):
                val = abs(h + c[i] * (lab - m[i]) - target)
                if val < best[0] - 1e-15:
                    best = (val, i, lab)
        if best[1] is None:
            break
        m[best[1]] = best[2]
    return BathState(m)


@dataclass(frozen=True)
class T2Result:
    t2: float  # ms; window end when not decayed
    decayed: bool
    method: str = "crossing"
    fit: dict[str, float] | None = None


def _stretched(t, t2, p):
    return np.exp(-(t / t2) ** p)


def extract_t2(curve: CoherenceCurve, method: str = "crossing") -> T2Result:
    """Coherence time from ``|L(t)|``.

    ``crossing`` takes the first 1/e crossing (linear interpolation between
    grid points); ``fit`` fits ``exp(-(t/T2)^p)`` to ``|L|``.
    """
    t = curve.times
    mag = curve.magnitude
    below = np.flatnonzero(mag < INV_E)
    if method == "crossing":
        if len(below) == 0:
            return T2Result(float(t[-1]), False)
        i = int(below[0])
        if i == 0:
            return T2Result(float(t[0]), True)
        t0, t1, y0, y1 = t[i - 1], t[i], mag[i - 1], mag[i]
        return T2Result(float(t0 + (y0 - INV_E) * (t1 - t0) / (y0 - y1)), True)
    if method == "fit":
        guess = extract_t2(curve).t2
        try:
            (t2, p), _ = curve_fit(_stretched, t, mag, p0=(guess, 2.0),
                                   bounds=([1e-12, 0.1], [np.inf, 10.0]), maxfev=10000)
        except RuntimeError:
            return T2Result(float(t[-1]), False, "fit")
        return T2Result(float(t2), bool(t2 <= t[-1]), "fit", {"T2": float(t2), "p": float(p)})
    raise ValueError(f"unknown T2 method {method!r}")


@dataclass(frozen=True)
class EnsembleSpec:
    """Average over all states of the nearest ``n_exact_avg`` nuclei times random far states."""

    n_exact_avg: int = 10
    n_far_samples: int = 1
    seed: int = 0
    max_states: int = 1 << 12

    def __post_init__(self):
        if self.n_exact_avg < 0 or self.n_far_samples < 1:
            raise ValueError("n_exact_avg must be >= 0 and n_far_samples >= 1")

    def states(self, bath: SpinBath) -> list[BathState]:
        """Deterministic list of product states (near enumeration outermost)."""
        n = self.n_exact_avg
        if n > len(bath):
            raise ValueError(f"n_exact_avg = {n} exceeds the bath size {len(bath)}")
        labels = [projections(float(s)) for s in bath.spins[:n]]
        total = math.prod(len(lab) for lab in labels) * self.n_far_samples
        if total > self.max_states:
            raise EnsembleCapError(f"{total} ensemble states exceed the cap {self.max_states}")
        far = [sample_bath_state(bath, [self.seed, k]) for k in range(self.n_far_samples)]
        out = []
        for near in itertools.product(*labels):
            for f in far:
                out.append(f.with_labels(range(n), near) if n else f)
        return out

    def to_dict(self) -> dict[str, Any]:
        return {"n_exact_avg": self.n_exact_avg, "n_far_samples": self.n_far_samples,
                "seed": self.seed, "max_states": self.max_states}


def _map_ordered(fn: Callable, items: Sequence, workers: int) -> list:
    if workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def ensemble_average(bath: SpinBath, spec: EnsembleSpec, model: CentralSpinModel, seq: PulseSequence,
                     times, config: CceConfig, clusters=None) -> CoherenceCurve:
    """Mean complex coherence over the states of ``spec``; summed in state order."""
    states = spec.states(bath)
    workers = config.resolved_workers()
    inner = replace(config, workers=1)
    if clusters is None:
        clusters = enumerate_clusters(bath, config)
    curves = _map_ordered(lambda M: cce_coherence(bath, M, model, seq, inner, times, clusters=clusters).values,
                          states, workers)
    acc = np.zeros(len(times), dtype=complex)
    for v in curves:
        acc = acc + v
    meta = {"scenario": model.scenario, "model": model.describe(), "sequence": seq.to_dict(),
            "cce_order": config.max_order, "cce": config.to_dict(), "method": "cce-ensemble",
            "seed": bath.seed, "ensemble": spec.to_dict(), "n_states": len(states),
            "bath_state_id": f"ensemble:{spec.seed}:{spec.n_exact_avg}x{spec.n_far_samples}",
            "constants_hash": model.constants.digest()}
    return CoherenceCurve(times, acc / len(states), meta)


@dataclass
class SweepResult:
    fields: np.ndarray
    t2: np.ndarray  # ms
    decayed: np.ndarray
    overhauser_khz: float | None
    curves: list[CoherenceCurve] = field(default_factory=list, repr=False)
    histogram: dict[str, list] | None = None
    metadata: dict[str, Any] = field(default_factory=dict)

    def to_csv(self) -> str:
        lines = ["B,T2_ms,flag"]
        for b, t, d in zip(self.fields, self.t2, self.decayed):
            lines.append(f"{float(b)!r},{float(t)!r},{'decayed' if d else 'not-decayed'}")
        return "\n".join(lines) + "\n"

    def to_json(self) -> dict[str, Any]:
        return {"fields": [float(b) for b in self.fields], "T2_ms": [float(t) for t in self.t2],
                "decayed": [bool(d) for d in self.decayed], "overhauser_khz": self.overhauser_khz,
                "histogram": self.histogram, "metadata": self.metadata}

    def peak(self) -> tuple[float, float]:
        i = int(np.argmax(self.t2))
        return float(self.fields[i]), float(self.t2[i])

    def fwhm(self) -> float:
        """Full width at half maximum of the main T2 peak, interpolated on the grid."""
        b, t2 = self.fields, self.t2
        i = int(np.argmax(t2))
        half = t2[i] / 2

        def edge(step):
            j = i
            while 0 <= j + step < len(b) and t2[j + step] > half:
                j += step
            if not 0 <= j + step < len(b):
                return b[j]
            k = j + step
            return b[j] + (t2[j] - half) * (b[k] - b[j]) / (t2[j] - t2[k])

        return float(edge(1) - edge(-1))


def overhauser_histogram(bath: SpinBath, states: Sequence[BathState], bins: int = 30,
                         projection: str | None = None) -> dict[str, list]:
    h = np.array([overhauser_of_state(bath, M, projection) for M in states])
    counts, edges = np.histogram(h, bins=bins)
    return {"edges_khz": edges.tolist(), "counts": counts.tolist()}


def field_sweep(bath: SpinBath, state: BathState | EnsembleSpec, model_factory: Callable[[float], CentralSpinModel],
                seq: PulseSequence, fields, times, config: CceConfig, t2_method: str = "crossing",
                keep_curves: bool = False) -> SweepResult:
    """T2 versus field for one pure state or an ensemble.

    ``model_factory`` maps a field value to a model, e.g.
    ``lambda B: NVModel(B_gauss=B)``.
    """
    fields = np.asarray(fields, dtype=float)
    if fields.size == 0:
        raise ValueError("empty field grid")
    if np.any(np.diff(fields) <= 0):
        raise ValueError("field grid must be strictly increasing")
    clusters = enumerate_clusters(bath, config)
    t2, dec, curves = [], [], []
    pure = isinstance(state, BathState)
    for b in fields:
        model = model_factory(float(b))
        if pure:
            curve = cce_coherence(bath, state, model, seq, config, times, clusters=clusters)
        else:
            curve = ensemble_average(bath, state, model, seq, times, config, clusters=clusters)
        res = extract_t2(curve, t2_method)
        t2.append(res.t2)
        dec.append(res.decayed)
        if keep_curves:
            curves.append(curve)
    if pure:
        h = overhauser_of_state(bath, state, model.projection)
        hist = overhauser_histogram(bath, [state], bins=1, projection=model.projection)
    else:
        h = None
        hist = overhauser_histogram(bath, state.states(bath), projection=model.projection)
    meta = {"sequence": seq.to_dict(), "cce": config.to_dict(), "seed": bath.seed, "t2_method": t2_method,
            "state": state.state_id if pure else state.to_dict(), "window_ms": [float(times[0]), float(times[-1])]}
    return SweepResult(fields, np.array(t2), np.array(dec), h, curves, hist, meta)
