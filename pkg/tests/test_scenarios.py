import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.linalg import expm

from cce_lab.cce import CceConfig, PulseSequence, cce_coherence, cluster_coherence, enumerate_clusters
from cce_lab.ensemble import sample_bath_state
from cce_lab.geometry import generate_double_dot_bath
from cce_lab.hamiltonians import BathState, cluster_hamiltonians, overhauser_of_state
from cce_lab.models import DoubleDotModel, DrivenSpinModel
from cce_lab.scenarios import (dqd_cluster_energy, generate_driven_bath, remainder_overhauser_sigma,
                               rotary_echo_propagator, sample_frozen_overhauser)

T = np.linspace(0, 1, 11)


@pytest.fixture(scope="module")
def dqd():
    return generate_double_dot_bath((5, 6), max_sites=20)


def test_dqd_energy_at_cancellation(dqd):
    # h1 = h2 when both dots are unpolarized in the same pattern with equal couplings: use zero labels
    model = DoubleDotModel()
    M = sample_bath_state(dqd, 0)
    h = overhauser_of_state(dqd, M, "z")
    cancel = DoubleDotModel(frozen_overhauser_khz=-h)
    assert dqd_cluster_energy(cancel, dqd, M, [0], [M.m[0]]) == pytest.approx(2.4e5, rel=1e-12)
    assert model.gap_khz == pytest.approx(abs(-0.24) * 1e6)


def test_dqd_flip_changes_h1_by_three_a(dqd):
    M = BathState(np.full(len(dqd), 1.5))
    j = 2
    a = dqd.hyperfine[j, 2]
    model = DoubleDotModel()
    e0 = dqd_cluster_energy(model, dqd, M, [j], [1.5])
    e1 = dqd_cluster_energy(model, dqd, M, [j], [-1.5])
    h0 = overhauser_of_state(dqd, M, "z")
    assert e0 == pytest.approx(math.hypot(2.4e5, h0))
    assert e1 == pytest.approx(math.hypot(2.4e5, h0 - 3 * a))


def test_dqd_full_cluster_energy_is_global(dqd):
    model = DoubleDotModel()
    M = sample_bath_state(dqd, 3)
    cl = [0, 1, 25]
    e = dqd_cluster_energy(model, dqd, M, cl, M.m[cl])
    assert e == pytest.approx(math.hypot(2.4e5, overhauser_of_state(dqd, M, "z")))


def test_dqd_energy_label_errors(dqd):
    M = sample_bath_state(dqd, 0)
    with pytest.raises(ValueError):
        dqd_cluster_energy(DoubleDotModel(), dqd, M, [0], [2.5])
    with pytest.raises(ValueError):
        dqd_cluster_energy(DoubleDotModel(), dqd, M, [0], [1.0])
    with pytest.raises(ValueError):
        dqd_cluster_energy(DoubleDotModel(), dqd, M, [0, 1], [0.5])


def test_dqd_cross_dot_pairs_never_enumerated(dqd):
    cl = enumerate_clusters(dqd, CceConfig(2))
    assert all(dqd.groups[a] == dqd.groups[b] for a, b in cl[2])


def test_dqd_cce1_correlations_are_one(dqd):
    M = sample_bath_state(dqd, 2)
    _, orders = cce_coherence(dqd, M, DoubleDotModel(), PulseSequence.hahn(), CceConfig(1), T,
                              return_orders=True)
    assert np.abs(orders[1] - 1).max() < 1e-10


def test_dqd_magic_angle_pair_is_trivial():
    # two nuclei of one species at the magic angle have vanishing secular coupling
    base = generate_double_dot_bath((5, 6), max_sites=2)
    theta = math.acos(1 / math.sqrt(3))
    pos = np.array([[0, 0, 0], [0.5 * math.sin(theta), 0, 0.5 * math.cos(theta)]])
    from cce_lab.geometry import SpinBath
    bath = SpinBath(pos, ("As75", "As75"), np.full(2, base.gammas[0]), np.full(2, 1.5),
                    np.array([[0, 0, 10.0], [0, 0, 12.0]]), np.zeros(2, int), "dqd", 0, {})
    M = BathState(np.array([1.5, -0.5]))
    ch = cluster_hamiltonians(DoubleDotModel(), bath, M, (0, 1))
    val = cluster_coherence(ch, PulseSequence.hahn(), T, reduced=True)
    singles = [cluster_coherence(cluster_hamiltonians(DoubleDotModel(), bath, M, (j,)), PulseSequence.hahn(), T,
                                 reduced=True) for j in (0, 1)]
    assert np.allclose(val / (singles[0] * singles[1]), 1.0, atol=1e-10)


def test_remainder_field_statistics():
    b = generate_double_dot_bath((1, 2), max_sites=100)
    sigma = remainder_overhauser_sigma(b)
    parts = b.metadata["parts"]
    assert sigma == pytest.approx(math.sqrt(sum(p["remainder_variance_khz2"] for p in parts)))
    draws = np.array([sample_frozen_overhauser(b, k) for k in range(400)])
    assert abs(draws.std() / sigma - 1) < 0.15
    assert sample_frozen_overhauser(b, 7) == sample_frozen_overhauser(b, 7)


@pytest.fixture(scope="module")
def driven():
    bath = generate_driven_bath(4).nearest(2)
    model = DrivenSpinModel(rabi_khz=30.0, detuning_khz=2.0, bath_field=50.0)
    M = sample_bath_state(bath, 0)
    return bath, model, M


def test_rotary_zero_switches_equals_fid(driven):
    bath, model, M = driven
    ch = cluster_hamiltonians(model, bath, M, (0, 1))
    fid = cluster_coherence(ch, PulseSequence.fid(), T)
    rot = [rotary_echo_propagator(model, ch, PulseSequence.rotary(), t) for t in T]
    assert np.allclose(rot, fid, atol=1e-12)


def test_rotary_midpoint_refocuses_static_bath(driven):
    bath, _, M = driven
    model = DrivenSpinModel(rabi_khz=30.0, detuning_khz=2.0, bath_scale=0.0)
    ch = cluster_hamiltonians(model, bath, M, (0, 1))
    vals = [rotary_echo_propagator(model, ch, PulseSequence.rotary(switch_fractions=(0.5,)), t) for t in T]
    assert np.allclose(np.abs(vals), 1.0, atol=1e-9)


@given(st.lists(st.floats(0.01, 0.99), min_size=1, max_size=4, unique=True))
def test_rotary_matches_brute_force_segments(fracs):
    bath = generate_driven_bath(4).nearest(2)
    model = DrivenSpinModel(rabi_khz=30.0, detuning_khz=2.0, bath_field=50.0)
    M = sample_bath_state(bath, 1)
    ch = cluster_hamiltonians(model, bath, M, (0, 1))
    fr = tuple(sorted(fracs))
    t = 0.8
    switches = [0.0] + [f * t for f in fr] + [t]
    hs = (ch.h_plus, ch.h_zero)
    u = [np.eye(4, dtype=complex), np.eye(4, dtype=complex)]
    for k in range(len(switches) - 1):
        tau = switches[k + 1] - switches[k]
        u[0] = expm(-1j * hs[k % 2] * tau) @ u[0]
        u[1] = expm(-1j * hs[(k + 1) % 2] * tau) @ u[1]
    psi = np.zeros(4, complex)
    psi[ch.initial] = 1
    signs = sum((-1) ** k * (switches[k + 1] - switches[k]) for k in range(len(switches) - 1))
    brute = np.vdot(u[0] @ psi, u[1] @ psi) * np.exp(2j * np.pi * ch.splitting_khz * signs)
    got = rotary_echo_propagator(model, ch, PulseSequence.rotary(switch_fractions=fr), t)
    assert abs(got - brute) < 1e-10
    # engine path agrees as well
    eng = cluster_coherence(ch, PulseSequence.rotary(switch_fractions=fr), [t], scenario="driven")[0]
    assert abs(eng - brute) < 1e-10


def test_rotary_absolute_switch_times(driven):
    bath, model, M = driven
    ch = cluster_hamiltonians(model, bath, M, (0, 1))
    a = rotary_echo_propagator(model, ch, [0.3], 0.6)
    b = rotary_echo_propagator(model, ch, PulseSequence.rotary(switch_fractions=(0.5,)), 0.6)
    assert a == pytest.approx(b, abs=1e-12)
    with pytest.raises(ValueError):
        rotary_echo_propagator(model, ch, [0.9], 0.6)
    with pytest.raises(ValueError):
        rotary_echo_propagator(model, ch, PulseSequence.hahn(), 0.6)


def test_driven_bath_scenario():
    b = generate_driven_bath(1)
    assert b.scenario == "driven" and set(b.species) == {"C13"}
