import itertools

import numpy as np
import pytest

from eipsim import core, oracle
from eipsim.core import DimensionMismatch, PairState, PreconditionViolated


def test_run_all_passes():
    res = oracle.run_all()
    bad = [r for r in res if not r.passed]
    assert not bad, bad


def test_eng_on_01_pair_d3():
    dist = oracle.simulate_protocol_step([PairState.ERR01], [1], 3).dist
    assert dist == pytest.approx([0, 1, 0], abs=1e-12)
    dist = oracle.simulate_protocol_step([PairState.ERR10], [1], 3).dist
    assert dist == pytest.approx([0, 0, 1], abs=1e-12)


def test_post_states_normalised():
    res = oracle.simulate_protocol_step([PairState.MIXED, PairState.ERR01], [1, 1], 3,
                                        p=0.5, keep_post=True)
    for j, parts in res.post.items():
        assert sum(w * np.vdot(t, t).real for w, t in parts) == pytest.approx(1.0)


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        oracle.simulate_protocol_step([0, 1], [1], 3)
    st = oracle.DenseState.product([[(1.0, oracle.bell_d(0, 0, 2))]])
    with pytest.raises(DimensionMismatch):
        st.apply_two(np.eye(9), 0, 1)
    with pytest.raises(PreconditionViolated):
        oracle.build_bcx(1)


@pytest.mark.parametrize("d", range(2, 8))
def test_bcx_unitary(d):
    assert oracle.unitarity_deviation(oracle.build_bcx(d)) < 1e-12


def test_bcx_qubit_is_cnot():
    cnot = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]])
    assert np.allclose(oracle.build_bcx(2), cnot)


@pytest.mark.parametrize("F,k", [(1.0, 1), (0.9, 2), (0.8, 3)])
def test_embedding(F, k):
    r = oracle.validate_embedding(F, k)
    assert r.passed, r


def test_embedding_limit():
    with pytest.raises(PreconditionViolated):
        oracle.validate_embedding(0.9, 4)


@pytest.mark.parametrize("d", range(2, 8))
def test_isotropic(d):
    assert oracle.validate_isotropic(d).passed


def test_dejmps_dense_success_probability():
    w, p = oracle.dejmps_dense([0.9, 0.05, 0.05, 0.0])
    assert p == pytest.approx(0.82)


def test_ghz_parity_with_separable_is_random():
    assert oracle.ghz_parity_readout([3, 0]) == pytest.approx(0.5)
    assert oracle.ghz_parity_readout([7, 0]) == pytest.approx(1.0)
    assert oracle.ghz_parity_readout([7, 7]) == pytest.approx(0.0)


def test_mutated_counter_shift_is_caught(monkeypatch):
    orig = core.counter_shift
    monkeypatch.setattr(core, "counter_shift", lambda s, r, d: (-orig(s, r, d)) % d)
    r = oracle.check_symbolic_equivalence(n_max=2, d_max=4)
    assert not r.passed and r.max_dev > 0.5


def test_tolerance_override_tightens():
    r = oracle.check_kraus(tol=0.0)
    assert r.tol == 0.0 and r.max_dev >= 0.0


@pytest.mark.parametrize("per_power", [False, True])
def test_noisy_gate_symbolic_matches(per_power):
    for cfg in itertools.product(range(3), repeat=2):
        a = oracle.simulate_protocol_step(cfg, [2, 3], 5, q=0.8, per_power=per_power).dist
        b = oracle.symbolic_step(cfg, [2, 3], 5, q=0.8, per_power=per_power)
        assert np.abs(a - b).sum() < 1e-10
