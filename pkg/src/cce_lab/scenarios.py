"""Adapters for the double-dot and driven-spin scenarios."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np
from scipy.linalg import expm

from .cce import PulseSequence, empty_cluster_phase
from .constants import TWO_PI
from .geometry import SpinBath, generate_diamond_bath
from .hamiltonians import BathState, ClusterHamiltonians, local_frame, overhauser_of_state
from .models import DoubleDotModel, DrivenSpinModel


def dqd_cluster_energy(model: DoubleDotModel, bath: SpinBath, M: BathState, cluster: Sequence[int],
                       m_cluster: Sequence[float]) -> float:
    """Qubit splitting (kHz) with the cluster in ``m_cluster`` and all other nuclei frozen in ``M``.

    The Overhauser difference ``h1 - h2`` is carried by the z couplings,
    whose second-dot entries are negative.
    """
    cluster = [int(i) for i in cluster]
    m_cluster = np.asarray(m_cluster, dtype=float)
    if len(cluster) != len(m_cluster):
        raise ValueError("one label per cluster site is required")
    spins = bath.spins[cluster]
    bad = (np.abs(m_cluster) > spins + 1e-12) | (np.abs(np.mod(spins - m_cluster, 1.0)) > 1e-12)
    if np.any(bad):
        raise ValueError(f"labels {m_cluster[bad].tolist()} out of range for spins {spins[bad].tolist()}")
    c = local_frame(bath, "z").couplings
    h = overhauser_of_state(bath, M, "z") + float(np.dot(c[cluster], m_cluster - M.m[cluster]))
    return math.hypot(model.gap_khz, model.offset_khz + h)


def remainder_overhauser_sigma(bath: SpinBath) -> float:
    """Standard deviation (kHz) of ``h1 - h2`` from nuclei outside the explicit bath."""
    parts = bath.metadata.get("parts", [bath.metadata])
    return math.sqrt(sum(float(p.get("remainder_variance_khz2", 0.0)) for p in parts))


def sample_frozen_overhauser(bath: SpinBath, seed) -> float:
    """Gaussian draw of the static remainder field (kHz) for a double-dot bath."""
    return float(np.random.default_rng(seed).normal(0.0, remainder_overhauser_sigma(bath)))


def generate_driven_bath(seed: int, **kwargs) -> SpinBath:
    """13C bath for the driven-spin scenario (diamond lattice geometry)."""
    bath = generate_diamond_bath(seed, **kwargs)
    return SpinBath(bath.positions, bath.species, bath.gammas, bath.spins, bath.hyperfine, bath.groups,
                    "driven", bath.seed, dict(bath.metadata))


def rotary_echo_propagator(model: DrivenSpinModel, ch: ClusterHamiltonians, schedule: PulseSequence | Sequence[float],
                           t: float) -> complex:
    """Cluster coherence at total time ``t`` from explicit segment propagators.

    Reversing the drive phase keeps the dressed splitting but swaps the
    dressed states, so each switch exchanges the two conditional
    Hamiltonians. ``schedule`` is a rotary ``PulseSequence`` or a list of
    absolute switch times (ms).
    """
    if not isinstance(schedule, PulseSequence):
        schedule = PulseSequence.rotary(switch_times=schedule)
    if schedule.kind != "rotary":
        raise ValueError("rotary_echo_propagator needs a rotary schedule")
    durs = schedule.durations([t])[:, 0]
    dim = ch.dim
    hs = (ch.h_plus, ch.h_zero)
    u = [np.eye(dim, dtype=complex), np.eye(dim, dtype=complex)]
    for k, tau in enumerate(durs):
        for br in (0, 1):
            u[br] = expm(-1j * hs[(br + k) % 2] * tau) @ u[br]
    psi = np.zeros(dim, dtype=complex)
    psi[ch.initial] = 1.0
    val = np.vdot(u[0] @ psi, u[1] @ psi)
    return complex(val * empty_cluster_phase(schedule, [t], ch.splitting_khz)[0])
