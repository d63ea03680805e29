"""Coupling tensors, bath states and conditional cluster Hamiltonians.

Working basis
-------------
Each nucleus is quantized along its own hyperfine axis: the eigenbasis of
``A_j . I_j`` for NV baths (``projection='vector'``) or of ``I_z`` when only
the z component of the coupling matters (double dot, driven spin). In this
basis the Overhauser field of a product state ``|M> = (x)_j |m_j>`` is simply
``h_M = sum_j m_j c_j`` where ``c_j`` is the coupling along the local axis.

Conditional Hamiltonians
------------------------
For a cluster ``C`` the nuclei outside ``C`` are frozen at their labels in
``M`` and the central splitting becomes a diagonal operator on the cluster,
``E_C(m_C) = sqrt(gap^2 + (offset + h_frozen + sum_{j in C} m_j c_j)^2)``.
The two qubit branches evolve under::

    H_plus = c_plus * E_C + H_b(C)
    H_zero = c_zero * E_C + H_b(C)

where ``H_b(C)`` holds the intra-cluster nuclear Zeeman (``-gamma B I_z``
rotated into the local frames) and the intra-cluster dipolar couplings. The
NV single-spin Hamiltonian therefore includes ``-gamma B.I_j``; leaving it
out would make every single-spin correlation a pure phase.

Matrices are returned in rad/ms with the frozen-bath splitting ``E_M``
removed (``H_plus - c_plus E_M``, ``H_zero - c_zero E_M``); the dropped
global factor is exactly the empty-cluster phase ``exp(i E_M t)``.
"""

from __future__ import annotations

import hashlib
import math
import weakref
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .constants import DEFAULT_CONSTANTS, TWO_PI, PhysicalConstants
from .couplings import (Z_AXIS, dipolar_tensors, hyperfine_vectors, secular_coefficient,
                        secular_tensors)
from .geometry import DotEnvelope, SpinBath, SpinSite, envelope_density
from .models import CentralSpinModel, NVModel
from .spinops import embed, kron_chain, projections, spin_operators


class InvalidPairError(ValueError):
    pass


class ExpansionError(ZeroDivisionError):
    """Second-order expansion of the splitting is undefined (E_M = 0)."""


@dataclass(frozen=True)
class DipolarTensor:
    pair: tuple[int, int]
    tensor: np.ndarray  # kHz


@dataclass(frozen=True)
class HyperfineVector:
    site: int
    vector: np.ndarray  # kHz

    @property
    def magnitude(self) -> float:
        return float(np.linalg.norm(self.vector))

    @property
    def axis(self) -> np.ndarray:
        return self.vector / self.magnitude


def dipolar_tensor(site_i: SpinSite, site_j: SpinSite, pair: tuple[int, int] = (0, 1),
                   constants: PhysicalConstants = DEFAULT_CONSTANTS) -> DipolarTensor:
    """Nuclear point-dipole tensor ``k g_i g_j / r^3 (1 - 3 rhat rhat)`` in kHz."""
    disp = np.asarray(site_j.position, float) - np.asarray(site_i.position, float)
    return DipolarTensor(pair, dipolar_tensors(disp, site_i.gamma_n, site_j.gamma_n, constants))


def hyperfine_vector(site: SpinSite, nv_axis=Z_AXIS, index: int = 0,
                     constants: PhysicalConstants = DEFAULT_CONSTANTS) -> HyperfineVector:
    """Row of the electron-nuclear dipolar tensor along the NV axis (kHz)."""
    if not np.any(np.asarray(site.position)):
        raise ValueError("nuclear site coincides with the central spin")
    vec = hyperfine_vectors(np.asarray(site.position, float)[None], site.gamma_n,
                            nv_axis=nv_axis, constants=constants)[0]
    return HyperfineVector(index, vec)


def contact_coupling(site: SpinSite, envelope: DotEnvelope, constants: PhysicalConstants = DEFAULT_CONSTANTS,
                     lattice_const: float | None = None, center=(0.0, 0.0, 0.0)) -> float:
    """Fermi contact coupling ``A_n a^3 |f(r)|^2`` in kHz."""
    a = constants.gaas_lattice_nm if lattice_const is None else lattice_const
    a_n = constants.isotopes[site.species].hyperfine_khz
    r = np.asarray(site.position, float) - np.asarray(center, float)
    return float(a_n * a**3 * envelope_density(r, envelope))


def gaas_pair_hamiltonian(site_i: SpinSite, site_j: SpinSite, B_tesla: float,
                          constants: PhysicalConstants = DEFAULT_CONSTANTS) -> np.ndarray:
    """Secular two-nucleus Hamiltonian in the ``I_z`` product basis (rad/ms).

    Homo-nuclear pairs keep ``(D/2)(3 Iz Iz - I.I)``, hetero-nuclear pairs
    only ``D Iz Iz``; both nuclei carry their Zeeman term ``-gamma B Iz``.
    """
    if site_i.group != site_j.group:
        raise InvalidPairError("nuclei belong to different dots")
    disp = np.asarray(site_j.position, float) - np.asarray(site_i.position, float)
    coeff = secular_coefficient(disp, site_i.gamma_n, site_j.gamma_n, constants)
    tensor = secular_tensors(coeff, site_i.species == site_j.species)
    oi, oj = spin_operators(site_i.spin), spin_operators(site_j.spin)
    dims = [oi.dim, oj.dim]
    b_gauss = B_tesla * 1e4
    h = -site_i.gamma_n * b_gauss * embed(oi.sz, 0, dims) - site_j.gamma_n * b_gauss * embed(oj.sz, 1, dims)
    vi, vj = oi.vector, oj.vector
    for x in range(3):
        for y in range(3):
            if tensor[x, y]:
                h = h + tensor[x, y] * np.kron(vi[x], vj[y])
    return TWO_PI * h


@dataclass(frozen=True)
class NVEigenbasis:
    energy: float  # kHz
    theta: float
    plus: np.ndarray  # in the {|+1>, |-1>} basis
    minus: np.ndarray


def nv_eigenbasis(model: NVModel, h_z: float) -> NVEigenbasis:
    """Diagonalize the ``{|+1>, |-1>}`` block with Overhauser field ``h_z`` (kHz)."""
    w = model.offset_khz + h_z
    theta = math.atan2(model.gap_khz, w)
    plus = np.array([math.cos(theta / 2), math.sin(theta / 2)])
    minus = np.array([-math.sin(theta / 2), math.cos(theta / 2)])
    return NVEigenbasis(math.hypot(model.gap_khz, w), theta, plus, minus)


@dataclass(frozen=True, eq=False)
class BathState:
    """One projection label per nucleus along its local quantization axis."""

    m: np.ndarray

    def __post_init__(self):
        arr = np.array(self.m, dtype=float)
        arr.flags.writeable = False
        object.__setattr__(self, "m", arr)

    def __len__(self) -> int:
        return len(self.m)

    def validate(self, bath: SpinBath) -> None:
        if len(self.m) != len(bath):
            raise ValueError(f"state has {len(self.m)} labels for {len(bath)} nuclei")
        bad = (np.abs(self.m) > bath.spins + 1e-12) | (np.abs(np.mod(bath.spins - self.m, 1.0)) > 1e-12)
        if np.any(bad):
            i = int(np.flatnonzero(bad)[0])
            raise ValueError(f"label {self.m[i]} invalid for spin {bath.spins[i]} at site {i}")

    def digits(self, bath: SpinBath) -> np.ndarray:
        """Index of each label in the descending-projection basis."""
        return np.rint(bath.spins - self.m).astype(int)

    @property
    def state_id(self) -> str:
        return hashlib.sha256(np.ascontiguousarray(self.m).tobytes()).hexdigest()[:12]

    def with_labels(self, indices: Sequence[int], labels: Sequence[float]) -> "BathState":
        m = self.m.copy()
        m[list(indices)] = labels
        return BathState(m)


@dataclass(frozen=True)
class LocalFrame:
    """Per-nucleus quantization axes and spin operators in those frames."""

    couplings: np.ndarray  # kHz, coupling along the local axis
    axes: np.ndarray
    ops: np.ndarray  # (N, 3, d, d): lab components of I expressed in the local basis
    spin: float

    @property
    def dim(self) -> int:
        return self.ops.shape[-1]


_FRAME_CACHE: "weakref.WeakKeyDictionary[SpinBath, dict]" = weakref.WeakKeyDictionary()


def local_frame(bath: SpinBath, projection: str = "vector") -> LocalFrame:
    cache = _FRAME_CACHE.setdefault(bath, {})
    if projection in cache:
        return cache[projection]
    spins = np.unique(bath.spins)
    if len(spins) != 1:
        raise ValueError("cluster engine needs a bath with a single nuclear spin value")
    s = float(spins[0])
    if projection == "vector":
        couplings = np.linalg.norm(bath.hyperfine, axis=1)
        if np.any(couplings == 0):
            raise ValueError("nucleus with vanishing hyperfine vector has no quantization axis")
        axes = bath.hyperfine / couplings[:, None]
    elif projection == "z":
        couplings = bath.hyperfine[:, 2].copy()
        axes = np.tile(Z_AXIS, (len(bath), 1))
    else:
        raise ValueError(f"unknown projection {projection!r}")
    vec = spin_operators(s).vector
    n_dot_i = np.einsum("nx,xij->nij", axes, vec)
    _, u = np.linalg.eigh(n_dot_i)
    u = u[:, :, ::-1]  # descending projection, matching spin_operators ordering
    ops = np.einsum("nji,xjk,nkl->nxil", u.conj(), vec, u)
    frame = LocalFrame(couplings, axes, ops, s)
    cache[projection] = frame
    return frame


def overhauser_of_state(bath: SpinBath, M: BathState, projection: str | None = None) -> float:
    """Overhauser field (kHz) of a product state in the local basis.

    NV baths: ``sum_j m_j |A_j|``. Double-dot baths: ``h1 - h2`` from the
    z couplings (second dot stored with negative sign).
    """
    if projection is None:
        projection = "z" if bath.scenario == "dqd" else "vector"
    M.validate(bath)
    c = local_frame(bath, projection).couplings
    return math.fsum(c * M.m)


def pair_tensors(bath: SpinBath, model: CentralSpinModel, i, j) -> np.ndarray:
    """Intra-bath coupling tensors for index arrays ``i``, ``j`` (kHz)."""
    i = np.asarray(i)
    j = np.asarray(j)
    disp = bath.positions[j] - bath.positions[i]
    gi, gj = bath.gammas[i], bath.gammas[j]
    if model.dipolar == "full":
        return dipolar_tensors(disp, gi, gj, model.constants)
    same = np.asarray(bath.species)[i] == np.asarray(bath.species)[j]
    return secular_tensors(secular_coefficient(disp, gi, gj, model.constants), same)


def frozen_splitting(model: CentralSpinModel, bath: SpinBath, M: BathState) -> tuple[float, float]:
    """``(offset + h_M, E_M)`` in kHz."""
    delta = model.offset_khz + overhauser_of_state(bath, M, model.projection)
    return delta, math.hypot(model.gap_khz, delta)


def splitting_shift(model: CentralSpinModel, delta_m: float, shift, mode: str = "modified"):
    """``E(delta_m + shift) - E(delta_m)`` in kHz.

    ``mode='modified'`` is exact (evaluated without cancellation);
    ``mode='original'`` is the second-order expansion about ``delta_m``.
    """
    shift = np.asarray(shift, dtype=float)
    e_m = math.hypot(model.gap_khz, delta_m)
    if mode == "modified":
        delta = delta_m + shift
        denom = np.hypot(model.gap_khz, delta) + e_m
        safe = np.where(denom > 0, denom, 1.0)
        return np.where(denom > 0, shift * (delta + delta_m) / safe, 0.0)
    if mode == "original":
        if e_m == 0.0:
            raise ExpansionError("second-order expansion undefined at E_M = 0")
        return (delta_m / e_m) * shift + shift**2 / (2.0 * e_m)
    raise ValueError(f"unknown mode {mode!r}")


@dataclass(frozen=True)
class ClusterBatch:
    """Conditional Hamiltonians for a stack of equally sized clusters."""

    clusters: np.ndarray  # (B, k)
    h_plus: np.ndarray  # (B, D, D) rad/ms, offset c_plus * E_M removed
    h_zero: np.ndarray
    shifts: np.ndarray  # (B, D) E_C - E_M in kHz
    initial: np.ndarray  # (B,) index of |m_C> in the cluster product basis
    splitting_khz: float
    weights: tuple[float, float]


def _digit_grid(d: int, k: int) -> np.ndarray:
    if k == 0:
        return np.zeros((1, 0), dtype=int)
    return np.indices((d,) * k).reshape(k, -1).T


def _place(ops_at: dict[int, np.ndarray], k: int, d: int) -> np.ndarray:
    eye = np.eye(d)
    return kron_chain([ops_at.get(p, eye) for p in range(k)])


def build_cluster_batch(bath: SpinBath, model: CentralSpinModel, M: BathState, clusters,
                        mode: str = "modified", frame: LocalFrame | None = None) -> ClusterBatch:
    clusters = np.asarray(clusters, dtype=int)
    if clusters.ndim == 1:
        clusters = clusters[None, :]
    nb, k = clusters.shape
    frame = frame or local_frame(bath, model.projection)
    d = frame.dim
    dim = d**k
    c = frame.couplings
    delta_m = model.offset_khz + math.fsum(c * M.m)
    e_m = math.hypot(model.gap_khz, delta_m)

    digits = _digit_grid(d, k)
    m_grid = projections(frame.spin)[digits]  # (D, k)
    cc = c[clusters]
    m_init = M.m[clusters]
    shift = np.einsum("bdk,bk->bd", m_grid[None, :, :] - m_init[:, None, :], cc)
    dE = splitting_shift(model, delta_m, shift, mode)

    init_digits = np.rint(frame.spin - m_init).astype(int)
    initial = (init_digits * (d ** np.arange(k - 1, -1, -1))).sum(axis=1) if k else np.zeros(nb, int)

    h_b = np.zeros((nb, dim, dim), dtype=complex)
    scale = model.bath_scale
    if k and scale:
        ops = frame.ops[clusters]  # (B, k, 3, d, d)
        bz = model.bath_field_gauss
        if bz:
            for p in range(k):
                zee = (-scale * bz * bath.gammas[clusters[:, p]])[:, None, None] * ops[:, p, 2]
                h_b += _place({p: zee}, k, d)
        for p in range(k):
            for q in range(p + 1, k):
                t = scale * pair_tensors(bath, model, clusters[:, p], clusters[:, q])
                tq = np.einsum("bxy,byij->bxij", t, ops[:, q])
                for x in range(3):
                    h_b += _place({p: ops[:, p, x], q: tq[:, x]}, k, d)
    h_b *= TWO_PI
    w_plus, w_zero = model.branch_weights
    diag = np.arange(dim)
    h_plus = h_b.copy()
    h_zero = h_b
    h_plus[:, diag, diag] += TWO_PI * w_plus * dE
    if w_zero:
        h_zero[:, diag, diag] += TWO_PI * w_zero * dE
    return ClusterBatch(clusters, h_plus, h_zero, dE, initial, e_m, (w_plus, w_zero))


@dataclass(frozen=True)
class ClusterHamiltonians:
    """Conditional Hamiltonians of a single cluster (see module notes)."""

    cluster: tuple[int, ...]
    h_plus: np.ndarray
    h_zero: np.ndarray
    energies: np.ndarray  # E_C(m_C; M) in kHz for every cluster basis state
    splitting_khz: float  # E_M
    initial: int
    weights: tuple[float, float] = field(default=(1.0, 0.0))

    @property
    def dim(self) -> int:
        return self.h_plus.shape[0]


def _single(batch: ClusterBatch) -> ClusterHamiltonians:
    return ClusterHamiltonians(tuple(int(i) for i in batch.clusters[0]), batch.h_plus[0], batch.h_zero[0],
                               batch.splitting_khz + batch.shifts[0], batch.splitting_khz,
                               int(batch.initial[0]), batch.weights)


def cluster_hamiltonians(model: CentralSpinModel, bath: SpinBath, M: BathState,
                         cluster: Sequence[int]) -> ClusterHamiltonians:
    """Modified-CCE conditional Hamiltonians for one cluster (may be empty)."""
    M.validate(bath)
    return _single(build_cluster_batch(bath, model, M, [tuple(sorted(cluster))]))


def original_cce_pair_hamiltonian(model: CentralSpinModel, bath: SpinBath, M: BathState,
                                  pair: Sequence[int]) -> ClusterHamiltonians:
    """Conditional Hamiltonians with the splitting expanded to second order.

    The diagonal becomes ``(Delta_M/E_M) delta + delta^2 / (2 E_M)``, where
    ``delta`` is the cluster's Overhauser deviation; the ``delta_i delta_j``
    cross terms are the hyperfine-mediated couplings between the nuclei.
    """
    M.validate(bath)
    return _single(build_cluster_batch(bath, model, M, [tuple(sorted(pair))], mode="original"))
