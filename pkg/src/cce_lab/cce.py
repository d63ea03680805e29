"""Cluster-correlation expansion engine.

The coherence for a bath product state ``|M>`` is

    L(t) = <M| U_p(t)^dagger U_q(t) |M>

where the two qubit branches ``p`` and ``q`` start on the ``plus`` and
``zero`` conditional Hamiltonians and swap them at every refocusing event
(none for FID, one at half time for a Hahn echo, one per drive-phase flip for
a rotary echo). For FID this is ``<M|exp(i H_plus t) exp(-i H_zero t)|M>``.

The expansion multiplies cluster correlations up to order ``K``::

    L^(K) = prod_{|C| <= K} Lt_C,     Lt_C = L_C / prod_{C' < C} Lt_C'

with the empty cluster contributing the phase of the frozen-bath splitting.
Clusters are evaluated order by order in batches of fixed size; batches of
one order may run on several threads and are reduced in cluster order, so
the result does not depend on the worker count.
"""

from __future__ import annotations

import csv
import hashlib
import io
import itertools
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .geometry import SpinBath
from .hamiltonians import (BathState, ClusterHamiltonians, build_cluster_batch, frozen_splitting,
                           local_frame)
from .models import CentralSpinModel

NEAR_ZERO = 1e-12
DEFAULT_GRID_POINTS = 200
#: complex elements per evaluation batch; fixes the chunking independently of threads
BATCH_BUDGET = 1 << 21

Cluster = tuple[int, ...]


class NearZeroDivisorError(ArithmeticError):
    """A sub-cluster correlation vanished during the recursive division."""

    def __init__(self, cluster: Cluster, time_index: int, value: float):
        self.cluster = cluster
        self.time_index = time_index
        self.value = value
        super().__init__(f"cluster correlation of {cluster} has |value| = {value:.3e} at time index "
                         f"{time_index}; the expansion has broken down")


class UnsupportedSequenceError(ValueError):
    pass


@dataclass(frozen=True)
class PulseSequence:
    """Refocusing schedule applied to the central spin.

    Times passed to the engine are always total evolution times; a Hahn echo
    flips the branches at ``t/2``. Rotary echoes take either absolute
    ``switch_times`` (ms) or ``switch_fractions`` of each total time.
    """

    kind: str = "fid"
    switch_times: tuple[float, ...] = ()
    switch_fractions: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in ("fid", "hahn", "rotary"):
            raise ValueError(f"unknown sequence kind {self.kind!r}")
        for name in ("switch_times", "switch_fractions"):
            vals = tuple(float(v) for v in getattr(self, name))
            if any(b <= a for a, b in zip(vals, vals[1:])):
                raise ValueError(f"{name} must be strictly increasing")
            if any(v < 0 for v in vals):
                raise ValueError(f"{name} must be non-negative")
            object.__setattr__(self, name, vals)
        if self.switch_times and self.switch_fractions:
            raise ValueError("give switch_times or switch_fractions, not both")
        if any(f > 1 for f in self.switch_fractions):
            raise ValueError("switch fractions must lie in [0, 1]")
        if self.kind != "rotary" and (self.switch_times or self.switch_fractions):
            raise ValueError("only rotary echoes take a switch schedule")

    @classmethod
    def fid(cls) -> "PulseSequence":
        return cls("fid")

    @classmethod
    def hahn(cls) -> "PulseSequence":
        return cls("hahn")

    @classmethod
    def rotary(cls, switch_times: Sequence[float] = (), switch_fractions: Sequence[float] = ()) -> "PulseSequence":
        return cls("rotary", tuple(switch_times), tuple(switch_fractions))

    def durations(self, times) -> np.ndarray:
        """Segment durations, shape ``(n_switches + 1, len(times))``."""
        t = np.asarray(times, dtype=float)
        if self.kind == "fid":
            return t[None, :]
        if self.kind == "hahn":
            return np.stack([t / 2, t - t / 2])
        if self.switch_fractions:
            edges = [np.zeros_like(t)] + [f * t for f in self.switch_fractions] + [t]
        else:
            edges = [np.zeros_like(t)] + [np.minimum(s, t) for s in self.switch_times] + [t]
        if self.switch_times and self.switch_times[-1] > t.max(initial=0.0):
            raise ValueError("rotary switch time outside the evaluated window")
        return np.diff(np.stack(edges), axis=0)

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind, "switch_times": list(self.switch_times),
                "switch_fractions": list(self.switch_fractions)}


def empty_cluster_phase(seq: PulseSequence, times, splitting_khz: float) -> np.ndarray:
    """Coherence of the frozen bath: ``exp(i E_M sum_k (-1)^k tau_k)``."""
    durs = seq.durations(times)
    signs = (-1.0) ** np.arange(len(durs))
    return np.exp(1j * 2 * np.pi * splitting_khz * (signs[:, None] * durs).sum(axis=0))


@dataclass
class CoherenceCurve:
    times: np.ndarray  # ms, total evolution time
    values: np.ndarray  # complex
    metadata: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=complex)
        if self.times.shape != self.values.shape:
            raise ValueError("times and values must have the same shape")

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.values)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["time_ms", "re_L", "im_L", "abs_L"])
        for t, v in zip(self.times, self.values):
            w.writerow([repr(float(t)), repr(float(v.real)), repr(float(v.imag)), repr(float(abs(v)))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, metadata: dict | None = None) -> "CoherenceCurve":
        rows = list(csv.DictReader(io.StringIO(text)))
        t = [float(r["time_ms"]) for r in rows]
        v = [complex(float(r["re_L"]), float(r["im_L"])) for r in rows]
        return cls(np.array(t), np.array(v), metadata or {})

    def save(self, stem: str | Path) -> tuple[Path, Path]:
        """Write ``<stem>.csv`` and the ``<stem>.json`` metadata sidecar."""
        stem = Path(stem)
        csv_path, json_path = stem.with_suffix(".csv"), stem.with_suffix(".json")
        csv_path.write_text(self.to_csv())
        json_path.write_text(json.dumps(self.metadata, indent=1, sort_keys=True, default=str))
        return csv_path, json_path

    @classmethod
    def load(cls, stem: str | Path) -> "CoherenceCurve":
        stem = Path(stem)
        meta_path = stem.with_suffix(".json")
        meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
        return cls.from_csv(stem.with_suffix(".csv").read_text(), meta)


@dataclass(frozen=True)
class CceConfig:
    """Truncation settings.

    ``pair_cutoff`` is the largest allowed distance (nm) between any two
    nuclei of a cluster. A sequence gives one cutoff per order starting at
    order 2 (the last entry repeats); cutoffs must not grow with the order so
    every sub-cluster of an enumerated cluster is enumerated too.
    """

    max_order: int = 2
    pair_cutoff: float | tuple[float, ...] = float("inf")
    mode: str = "modified"
    workers: int | None = None

    def __post_init__(self):
        if self.max_order < 1:
            raise ValueError("max_order must be >= 1")
        cuts = self.cutoffs()
        if any(c <= 0 for c in cuts.values()):
            raise ValueError("cluster cutoff must be positive")
        orders = sorted(cuts)
        if any(cuts[b] > cuts[a] for a, b in zip(orders, orders[1:])):
            raise ValueError("cluster cutoffs must not increase with order")
        if self.mode not in ("modified", "original"):
            raise ValueError(f"unknown mode {self.mode!r}")

    def cutoffs(self) -> dict[int, float]:
        pc = self.pair_cutoff
        seq = list(pc) if isinstance(pc, (tuple, list)) else [pc]
        return {k: float(seq[min(k - 2, len(seq) - 1)]) for k in range(2, self.max_order + 1)}

    def resolved_workers(self) -> int:
        if self.workers:
            return int(self.workers)
        return int(os.environ.get("CCE_LAB_THREADS", "1"))

    def to_dict(self) -> dict[str, Any]:
        pc = self.pair_cutoff
        return {"max_order": self.max_order, "mode": self.mode,
                "pair_cutoff": list(pc) if isinstance(pc, (tuple, list)) else pc}


def enumerate_clusters(bath: SpinBath, config: CceConfig) -> dict[int, np.ndarray]:
    """Clusters of every order up to ``config.max_order``, lexicographically sorted.

    Returns ``{order: int array of shape (n_clusters, order)}``. Clusters
    never mix nuclei from different groups (independent dots).
    """
    n = len(bath)
    out = {1: np.arange(n)[:, None]}
    if config.max_order == 1:
        return out
    cuts = config.cutoffs()
    groups = np.asarray(bath.groups)
    cut2 = cuts[2]
    if np.isinf(cut2):
        nbrs = [set(np.flatnonzero((groups == groups[i]) & (np.arange(n) > i)).tolist()) for i in range(n)]
    else:
        tree = cKDTree(bath.positions)
        nbrs = [set() for _ in range(n)]
        for i, j in tree.query_pairs(cut2, output_type="ndarray"):
            if groups[i] == groups[j]:
                nbrs[min(i, j)].add(max(i, j))
    pos = bath.positions
    prev = [(i,) for i in range(n)]
    for k in range(2, config.max_order + 1):
        cut = cuts[k]
        cur = []
        for cl in prev:
            # a cluster inherited from order k-1 passed the looser cutoff only
            if k > 2 and not np.isinf(cut) and any(
                    np.linalg.norm(pos[a] - pos[b]) > cut for a, b in itertools.combinations(cl, 2)):
                continue
            cand = nbrs[cl[-1]] if k == 2 else nbrs[cl[0]]
            for j in sorted(cand):
                if j <= cl[-1]:
                    continue
                if k > 2 and not all(j in nbrs[i] for i in cl[1:]):
                    continue
                if not np.isinf(cut) and np.any(np.linalg.norm(pos[list(cl)] - pos[j], axis=1) > cut):
                    continue
                cur.append(cl + (j,))
        cur.sort()
        out[k] = np.array(cur, dtype=int).reshape(-1, k)
        prev = cur
    return out


def evaluate_branches(h_plus: np.ndarray, h_zero: np.ndarray, initial: np.ndarray,
                      durations: np.ndarray) -> np.ndarray:
    """Branch overlap ``<U_p m|U_q m>`` for stacks of Hamiltonians.

    ``h_plus``/``h_zero`` have shape ``(B, D, D)`` (rad/ms), ``initial`` the
    basis index of ``|m>`` per stack entry, ``durations`` the segment lengths
    ``(S, T)`` in ms. One eigendecomposition per Hamiltonian serves all
    times. Returns ``(B, T)``.
    """
    w = {}
    v = {}
    w["p"], v["p"] = np.linalg.eigh(h_plus)
    w["z"], v["z"] = np.linalg.eigh(h_zero)
    g = v["p"].conj().swapaxes(-1, -2) @ v["z"]  # zero-basis coeffs -> plus-basis coeffs
    gh = g.conj().swapaxes(-1, -2)
    rows = np.arange(len(initial))
    nt = durations.shape[1]
    coef = {
        "P": np.repeat(v["p"][rows, initial, :].conj()[:, :, None], nt, axis=2),
        "Q": np.repeat(v["z"][rows, initial, :].conj()[:, :, None], nt, axis=2),
    }
    basis = {"P": "p", "Q": "z"}
    for k, dur in enumerate(durations):
        for br in ("P", "Q"):
            if k:
                coef[br] = (gh if basis[br] == "p" else g) @ coef[br]
                basis[br] = "z" if basis[br] == "p" else "p"
            coef[br] *= np.exp(-1j * w[basis[br]][:, :, None] * dur[None, None, :])
    q = coef["Q"]
    q = g @ q if basis["P"] == "p" else gh @ q
    return np.einsum("bdt,bdt->bt", coef["P"].conj(), q)


def _check_sequence(seq: PulseSequence, scenario: str) -> None:
    if seq.kind == "rotary" and scenario != "driven":
        raise UnsupportedSequenceError("rotary echoes are defined for the driven-spin scenario only")


def cluster_coherence(ch: ClusterHamiltonians, seq: PulseSequence, times, scenario: str | None = None,
                      reduced: bool = False) -> np.ndarray:
    """Coherence ``L_C(t)`` caused by one cluster.

    With ``reduced=True`` the empty-cluster phase is divided out.
    """
    if scenario is not None:
        _check_sequence(seq, scenario)
    durs = seq.durations(times)
    val = evaluate_branches(ch.h_plus[None], ch.h_zero[None], np.array([ch.initial]), durs)[0]
    if reduced:
        return val
    return val * empty_cluster_phase(seq, times, ch.splitting_khz)


def cluster_correlation(cluster: Cluster, coherence: np.ndarray,
                        sub_correlations: dict[Cluster, np.ndarray]) -> np.ndarray:
    """``Lt_C = L_C / prod Lt_C'`` over the proper non-empty sub-clusters given.

    Sub-clusters missing from ``sub_correlations`` count as 1. The
    empty-cluster factor must already be divided out of ``coherence`` (or
    supplied under the key ``()``).
    """
    out = np.array(coherence, dtype=complex)
    cluster = tuple(cluster)
    for r in range(0, len(cluster)):
        for sub in itertools.combinations(cluster, r):
            if sub not in sub_correlations:
                continue
            div = sub_correlations[sub]
            mags = np.abs(div)
            i = int(np.argmin(mags))
            if mags[i] < NEAR_ZERO:
                raise NearZeroDivisorError(sub, i, float(mags[i]))
            out = out / div
    return out


def _batch_size(dim: int, nt: int) -> int:
    return max(1, BATCH_BUDGET // (dim * (dim + 2 * nt)))


def config_hash(payload: dict[str, Any]) -> str:
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def cce_coherence(bath: SpinBath, M: BathState, model: CentralSpinModel, seq: PulseSequence,
                  config: CceConfig, times, clusters: dict[int, np.ndarray] | None = None,
                  return_orders: bool = False):
    """Modified (or second-order comparison) CCE coherence curve.

    ``clusters`` may be supplied to reuse an enumeration across calls. With
    ``return_orders=True`` also returns ``{K: values}`` for every truncation
    order ``K <= max_order`` computed along the way.
    """
    if len(bath) == 0:
        raise ValueError("empty bath")
    _check_sequence(seq, model.scenario)
    M.validate(bath)
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) <= 0):
        raise ValueError("times must be strictly increasing")
    frame = local_frame(bath, model.projection)
    durs = seq.durations(times)
    nt = len(times)
    if clusters is None:
        clusters = enumerate_clusters(bath, config)
    kmax = config.max_order
    _, e_m = frozen_splitting(model, bath, M)
    workers = config.resolved_workers()

    needed: dict[int, set[Cluster]] = {k: set() for k in range(1, kmax)}
    for k in range(2, kmax + 1):
        for cl in clusters.get(k, np.zeros((0, k), int)):
            needed[k - 1].update(itertools.combinations(tuple(int(i) for i in cl), k - 1))
    store: dict[Cluster, np.ndarray] = {}

    def run_chunk(chunk: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        batch = build_cluster_batch(bath, model, M, chunk, config.mode, frame)
        vals = evaluate_branches(batch.h_plus, batch.h_zero, batch.initial, durs)
        k = chunk.shape[1]
        for r in range(1, k):
            for sub_pos in itertools.combinations(range(k), r):
                subs = [store[tuple(int(x) for x in row)] for row in chunk[:, sub_pos]]
                div = np.stack(subs)
                mags = np.abs(div)
                if mags.min() < NEAR_ZERO:
                    b, i = np.unravel_index(int(np.argmin(mags)), mags.shape)
                    raise NearZeroDivisorError(tuple(int(x) for x in chunk[b, sub_pos]), int(i),
                                               float(mags[b, i]))
                vals = vals / div
        return vals, np.prod(vals, axis=0)

    total = np.ones(nt, dtype=complex)
    per_order: dict[int, np.ndarray] = {}
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for k in range(1, kmax + 1):
            arr = clusters.get(k, np.zeros((0, k), int))
            step = _batch_size(frame.dim**k, nt)
            chunks = [arr[i:i + step] for i in range(0, len(arr), step)]
            results = pool.map(run_chunk, chunks) if workers > 1 else map(run_chunk, chunks)
            for chunk, (vals, prod) in zip(chunks, results):
                total = total * prod
                if k < kmax and needed[k]:
                    for row, v in zip(chunk, vals):
                        key = tuple(int(x) for x in row)
                        if key in needed[k]:
                            store[key] = v
            per_order[k] = total.copy()

    phase = empty_cluster_phase(seq, times, e_m)
    metadata = {
        "scenario": model.scenario,
        "model": model.describe(),
        "sequence": seq.to_dict(),
        "cce_order": kmax,
        "cce": config.to_dict(),
        "method": "cce",
        "seed": bath.seed,
        "bath_state_id": M.state_id,
        "n_spins": len(bath),
        "n_clusters": {int(k): int(len(v)) for k, v in clusters.items()},
        "splitting_khz": e_m,
        "constants_hash": model.constants.digest(),
    }
    metadata["config_hash"] = config_hash({k: metadata[k] for k in ("model", "sequence", "cce", "seed",
                                                                     "bath_state_id", "n_spins")})
    curve = CoherenceCurve(times, total * phase, metadata)
    if return_orders:
        return curve, {k: v * phase for k, v in per_order.items()}
    return curve
