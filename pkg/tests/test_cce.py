import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.linalg import expm

from cce_lab.cce import (CceConfig, CoherenceCurve, NearZeroDivisorError, PulseSequence,
                         UnsupportedSequenceError, cce_coherence, cluster_coherence, cluster_correlation,
                         empty_cluster_phase, enumerate_clusters, evaluate_branches)
from cce_lab.ensemble import near_zero_state, sample_bath_state
from cce_lab.exact import exact_coherence
from cce_lab.geometry import generate_diamond_bath, generate_double_dot_bath
from cce_lab.hamiltonians import BathState, cluster_hamiltonians
from cce_lab.models import DoubleDotModel, NVModel

T = np.linspace(0, 1.5, 31)


@pytest.fixture(scope="module")
def bath6():
    return generate_diamond_bath(7).nearest(6)


@pytest.mark.parametrize("seq", [PulseSequence.fid(), PulseSequence.hahn(),
                                 PulseSequence.rotary(switch_fractions=(0.2, 0.7))])
def test_durations_sum_to_total_time(seq):
    d = seq.durations(T)
    assert np.allclose(d.sum(axis=0), T)
    assert np.all(d >= 0)


def test_hahn_switches_at_half_time():
    d = PulseSequence.hahn().durations([2.0])
    assert d[:, 0].tolist() == [1.0, 1.0]


def test_sequence_validation():
    with pytest.raises(ValueError):
        PulseSequence("cpmg")
    with pytest.raises(ValueError):
        PulseSequence.rotary(switch_times=(0.5, 0.2))
    with pytest.raises(ValueError):
        PulseSequence("hahn", switch_fractions=(0.5,))
    with pytest.raises(ValueError):
        PulseSequence.rotary(switch_times=(3.0,)).durations(T)


def test_empty_cluster_phase():
    e = 123.4
    fid = empty_cluster_phase(PulseSequence.fid(), T, e)
    assert np.allclose(fid, np.exp(2j * np.pi * e * T))
    assert np.allclose(empty_cluster_phase(PulseSequence.hahn(), T, e), 1.0)


def brute_branch_overlap(hp, hz, init, durs):
    psi = np.zeros(hp.shape[0], complex)
    psi[init] = 1
    out = []
    for col in durs.T:
        u = [np.eye(len(psi)), np.eye(len(psi))]
        for k, tau in enumerate(col):
            u[0] = expm(-1j * (hp if k % 2 == 0 else hz) * tau) @ u[0]
            u[1] = expm(-1j * (hz if k % 2 == 0 else hp) * tau) @ u[1]
        out.append(np.vdot(u[0] @ psi, u[1] @ psi))
    return np.array(out)


@given(st.integers(0, 10**6), st.sampled_from(["fid", "hahn", "rotary"]))
def test_evaluate_branches_matches_expm(seed, kind):
    r = np.random.default_rng(seed)
    d = 4
    a = r.normal(size=(2, d, d)) + 1j * r.normal(size=(2, d, d))
    hp, hz = a[0] + a[0].conj().T, a[1] + a[1].conj().T
    seq = PulseSequence.rotary(switch_fractions=(0.3, 0.5, 0.9)) if kind == "rotary" else PulseSequence(kind)
    t = np.linspace(0, 1, 5)
    durs = seq.durations(t)
    init = int(r.integers(d))
    got = evaluate_branches(hp[None], hz[None], np.array([init]), durs)[0]
    assert np.allclose(got, brute_branch_overlap(hp, hz, init, durs), atol=1e-10)


def test_curve_csv_roundtrip_is_bitwise(tmp_path):
    r = np.random.default_rng(0)
    c = CoherenceCurve(np.linspace(0, 1, 7), r.normal(size=7) + 1j * r.normal(size=7), {"a": 1})
    c.save(tmp_path / "curve")
    back = CoherenceCurve.load(tmp_path / "curve")
    assert np.array_equal(back.values, c.values)
    assert np.array_equal(back.times, c.times)
    assert back.metadata == {"a": 1}
    assert back.to_csv() == c.to_csv()
    assert c.to_csv().splitlines()[0] == "time_ms,re_L,im_L,abs_L"


def test_config_validation():
    assert CceConfig(3, (1.0, 0.8)).cutoffs() == {2: 1.0, 3: 0.8}
    assert CceConfig(4, 1.0).cutoffs() == {2: 1.0, 3: 1.0, 4: 1.0}
    with pytest.raises(ValueError):
        CceConfig(3, (0.5, 0.8))
    with pytest.raises(ValueError):
        CceConfig(0)
    with pytest.raises(ValueError):
        CceConfig(2, mode="exact")
    with pytest.raises(ValueError):
        CceConfig(2, -1.0)


def test_enumeration_without_cutoff_is_all_subsets(bath6):
    cl = enumerate_clusters(bath6, CceConfig(4))
    for k in range(1, 5):
        assert [tuple(x) for x in cl[k]] == list(itertools.combinations(range(6), k))


@given(st.integers(0, 50), st.floats(0.5, 2.0), st.floats(0.3, 1.0))
def test_enumeration_matches_brute_force(seed, c2, frac):
    bath = generate_diamond_bath(seed, radius=2.0, abundance=0.03).nearest(14)
    cfg = CceConfig(3, (c2, c2 * frac))
    cl = enumerate_clusters(bath, cfg)
    pos = bath.positions
    for k, cut in ((2, c2), (3, c2 * frac)):
        brute = [c for c in itertools.combinations(range(len(bath)), k)
                 if all(np.linalg.norm(pos[a] - pos[b]) <= cut for a, b in itertools.combinations(c, 2))]
        assert [tuple(x) for x in cl[k]] == brute


def test_enumeration_never_mixes_groups():
    bath = generate_double_dot_bath((1, 2), max_sites=15, separation=0.0)
    cl = enumerate_clusters(bath, CceConfig(3, 2.0))
    for k in (2, 3):
        for c in cl[k]:
            assert len(set(bath.groups[c])) == 1
    assert len(cl[2]) > 0


def test_cluster_correlation_divides_subclusters():
    a = np.array([0.5, 0.25])
    subs = {(1,): np.array([0.5, 0.5]), (2,): np.array([2.0, 0.5])}
    assert np.allclose(cluster_correlation((1, 2), a, subs), [0.5, 1.0])
    assert np.allclose(cluster_correlation((1, 2), a, {}), a)
    with pytest.raises(NearZeroDivisorError) as err:
        cluster_correlation((1, 2), a, {(1,): np.array([1.0, 1e-14])})
    assert err.value.cluster == (1,)


@pytest.mark.parametrize("kind", ["fid", "hahn"])
@pytest.mark.parametrize("B", [0.0, 0.07])
def test_full_order_expansion_is_exact(bath6, kind, B):
    model = NVModel(B_gauss=B)
    M = sample_bath_state(bath6, 3)
    seq = PulseSequence(kind)
    cce = cce_coherence(bath6, M, model, seq, CceConfig(6), T)
    ex = exact_coherence(bath6, M, model, seq, T)
    assert np.abs(cce.values - ex.values).max() < 1e-9


def test_single_cluster_coherence_matches_engine(bath6):
    model = NVModel(B_gauss=0.02)
    M = sample_bath_state(bath6, 1)
    seq = PulseSequence.hahn()
    ch = cluster_hamiltonians(model, bath6.nearest(2), BathState(M.m[:2]), (0, 1))
    sub = bath6.nearest(2)
    full = cce_coherence(sub, BathState(M.m[:2]), model, seq, CceConfig(2), T)
    assert np.allclose(cluster_coherence(ch, seq, T), full.values, atol=1e-12)


def test_nv_zero_field_single_spin_correlations_trivial(bath6):
    model = NVModel(B_gauss=0.0)
    M = sample_bath_state(bath6, 0)
    _, orders = cce_coherence(bath6, M, model, PulseSequence.hahn(), CceConfig(2), T, return_orders=True)
    assert np.allclose(orders[1], 1.0, atol=1e-12)


@given(st.integers(0, 10**4), st.floats(0.0, 0.1))
def test_static_bath_hahn_refocuses(seed, B):
    bath = generate_diamond_bath(seed % 50, radius=2.5).nearest(8)
    model = NVModel(B_gauss=B, bath_scale=0.0)
    M = sample_bath_state(bath, seed)
    c = cce_coherence(bath, M, model, PulseSequence.hahn(), CceConfig(3), T)
    assert np.allclose(np.abs(c.values), 1.0, atol=1e-9)


@given(st.integers(0, 10**4))
def test_magnitude_bounded_by_one_in_full_order(seed):
    bath = generate_diamond_bath(seed % 30, radius=2.5).nearest(4)
    M = sample_bath_state(bath, seed)
    c = cce_coherence(bath, M, NVModel(B_gauss=0.03), PulseSequence.hahn(), CceConfig(4), T)
    assert np.all(np.abs(c.values) <= 1 + 1e-9)


def test_worker_count_does_not_change_bits():
    bath = generate_diamond_bath(4, radius=3.0)
    M = near_zero_state(bath, 0)
    model = NVModel(B_gauss=0.01)
    args = (bath, M, model, PulseSequence.hahn())
    a = cce_coherence(*args, CceConfig(2, 1.2, workers=1), T)
    b = cce_coherence(*args, CceConfig(2, 1.2, workers=4), T)
    assert a.to_csv() == b.to_csv()


def test_engine_errors(bath6):
    M = sample_bath_state(bath6, 0)
    with pytest.raises(UnsupportedSequenceError):
        cce_coherence(bath6, M, NVModel(), PulseSequence.rotary(switch_fractions=(0.5,)), CceConfig(2), T)
    with pytest.raises(ValueError):
        cce_coherence(bath6, M, NVModel(), PulseSequence.hahn(), CceConfig(2), T[::-1])
    with pytest.raises(ValueError):
        cce_coherence(bath6, BathState(M.m[:3]), NVModel(), PulseSequence.hahn(), CceConfig(2), T)


def test_dqd_engine_runs_and_single_spins_trivial():
    bath = generate_double_dot_bath((3, 4), max_sites=12)
    M = sample_bath_state(bath, 0)
    _, orders = cce_coherence(bath, M, DoubleDotModel(), PulseSequence.hahn(), CceConfig(2), T,
                              return_orders=True)
    assert np.abs(orders[1] - 1).max() < 1e-10


def test_metadata_fields(bath6):
    M = sample_bath_state(bath6, 0)
    c = cce_coherence(bath6, M, NVModel(), PulseSequence.hahn(), CceConfig(2), T)
    for key in ("scenario", "model", "sequence", "cce_order", "seed", "bath_state_id", "config_hash",
                "constants_hash", "n_clusters"):
        assert key in c.metadata
    assert c.metadata["n_clusters"] == {1: 6, 2: 15}
    assert c.metadata["bath_state_id"] == M.state_id


# measured max|L1 - L2| is 1.18, 0.95, 0.89 against a bound of 0.05: pair correlations carry
# a large share of the decay near the clock transition, and at B = 0 L(1) is exactly 1
@pytest.mark.xfail(strict=True, reason="pair correlations are not small next to single-spin ones at these fields")
@pytest.mark.parametrize("B", [0.0, 0.05, 0.1])
def test_single_spin_correlations_dominate_at_low_field(B):
    bath = generate_diamond_bath(15, radius=4.5, max_sites=500)
    M = near_zero_state(bath, 15)
    t = np.linspace(0, 2, 41)
    _, orders = cce_coherence(bath, M, NVModel(B_gauss=B), PulseSequence.hahn(), CceConfig(2, 1.5), t,
                              return_orders=True)
    assert np.abs(orders[1] - orders[2]).max() < 0.05 * (1 - np.abs(orders[2]).min())
