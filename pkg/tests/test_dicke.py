import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cubicspin.dicke import (
    CssParams,
    DickeVector,
    SpinEnsemble,
    ValidationError,
    build_collective_ops,
    css_cross_elements,
    css_state,
    dicke_state,
    expectation,
    ghz_state,
    ladder_coefficients,
    sx_eigenbasis,
)

angles = st.floats(min_value=0.0, max_value=2 * math.pi, allow_nan=False)


@pytest.mark.parametrize("bad", [0, -3, 2.5, "4", True, None])
def test_ensemble_rejects_bad_n(bad):
    with pytest.raises(ValidationError):
        SpinEnsemble(bad)


@pytest.mark.parametrize("n, parity", [(1, "odd"), (2, "even"), (201, "odd"), (1500, "even")])
def test_ensemble_basics(n, parity):
    ens = SpinEnsemble(n)
    assert ens.parity == parity
    assert ens.dim == n + 1
    assert ens.m[0] == n / 2 and ens.m[-1] == -n / 2


def test_single_spin_ops_are_half_pauli():
    ops = build_collective_ops(SpinEnsemble(1))
    np.testing.assert_allclose(ops.Sx.dense(), [[0, 0.5], [0.5, 0]])
    np.testing.assert_allclose(ops.Sy.dense(), [[0, -0.5j], [0.5j, 0]])
    np.testing.assert_allclose(ops.Sz.dense(), [[0.5, 0], [0, -0.5]])


def test_spin_one_ladder():
    ops = build_collective_ops(SpinEnsemble(2))
    np.testing.assert_allclose(np.diag(ops.Sz.dense()), [1, 0, -1])
    sp = ops.Splus.dense()
    np.testing.assert_allclose([sp[0, 1], sp[1, 2]], [math.sqrt(2), math.sqrt(2)])
    assert np.count_nonzero(sp) == 2


@pytest.mark.parametrize("n", [1, 2, 5, 6, 11])
def test_commutators_and_casimir(n):
    ops = build_collective_ops(SpinEnsemble(n))
    x, y, z = ops.Sx.dense(), ops.Sy.dense(), ops.Sz.dense()
    assert np.max(np.abs(x @ y - y @ x - 1j * z)) < 1e-12
    assert np.max(np.abs(y @ z - z @ y - 1j * x)) < 1e-12
    S = n / 2
    np.testing.assert_allclose(x @ x + y @ y + z @ z, S * (S + 1) * np.eye(n + 1), atol=1e-11)


def test_ladder_coefficients_integer_form():
    n = 7
    k = np.arange(1, n + 1)
    np.testing.assert_allclose(ladder_coefficients(n) ** 2, k * (n - k + 1))


def test_css_examples():
    np.testing.assert_allclose(css_state(SpinEnsemble(1), theta=0.0).amplitudes, [1, 0])
    np.testing.assert_allclose(css_state(SpinEnsemble(2)).amplitudes, [0.5, 1 / math.sqrt(2), 0.5])
    ens = SpinEnsemble(20)
    ops = build_collective_ops(ens)
    psi = css_state(ens)
    assert abs(expectation(psi, ops.Sx) - 10) < 1e-12
    assert abs(expectation(psi, ops.Sz)) < 1e-12


@pytest.mark.parametrize("n", [4, 30, 201])
def test_css_ladder_moment(n):
    ens = SpinEnsemble(n)
    ops = build_collective_ops(ens)
    S = ens.S
    val = expectation(css_state(ens), ops.Splus.matrix @ ops.Sminus.matrix)
    assert abs(val - (S * S + S / 2)) < 1e-9 * S * S


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 80), theta=st.floats(0, math.pi), phi=angles)
def test_css_normalized_and_polarized(n, theta, phi):
    ens = SpinEnsemble(n)
    psi = css_state(ens, CssParams(theta, phi))
    assert abs(psi.norm - 1) < 1e-10
    ops = build_collective_ops(ens)
    S = ens.S
    mean = [expectation(psi, o).real for o in ops]
    expected = S * np.array([math.sin(theta) * math.cos(phi), math.sin(theta) * math.sin(phi),
                             math.cos(theta)])
    np.testing.assert_allclose(mean, expected, atol=1e-9 * max(S, 1))


@pytest.mark.parametrize("n", [2, 9, 200, 1500])
def test_antipodal_css_orthogonal(n):
    ens = SpinEnsemble(n)
    a = css_state(ens, phi=0.3)
    b = css_state(ens, phi=0.3 + math.pi)
    assert abs(a.overlap(b)) < 1e-12


@settings(max_examples=25, deadline=None)
@given(n=st.integers(2, 60), varphi=angles, sign=st.sampled_from([1, -1]))
def test_ghz_is_normalized_cat(n, varphi, sign):
    ens = SpinEnsemble(n)
    g = ghz_state(ens, varphi, sign)
    assert abs(g.norm - 1) < 1e-12
    a = css_state(ens, phi=varphi)
    assert abs(abs(a.overlap(g)) ** 2 - 0.5) < 1e-10


def test_dicke_state_validation():
    ens = SpinEnsemble(3)
    assert dicke_state(ens, 1.5).amplitudes[0] == 1
    with pytest.raises(ValidationError):
        dicke_state(ens, 1.0)
    with pytest.raises(ValidationError):
        dicke_state(ens, 2.5)


def test_state_shape_checked():
    with pytest.raises(ValidationError):
        DickeVector(SpinEnsemble(3), np.ones(3))
    with pytest.raises(ValidationError):
        expectation(css_state(SpinEnsemble(3)), np.eye(5))


@pytest.mark.parametrize("n", [1, 6, 41])
def test_sx_eigenbasis_top_vector_is_x_css(n):
    w, v = sx_eigenbasis(n)
    assert abs(w[0] - n / 2) < 1e-10
    np.testing.assert_allclose(v[:, 0], css_state(SpinEnsemble(n)).amplitudes.real, atol=1e-10)


def test_cross_elements_diagonal_case():
    ens = SpinEnsemble(10)
    ce = css_cross_elements(ens, 0.0, 0.0)
    S = ens.S
    assert abs(ce.m_pm - (S * S + S / 2)) < 1e-10
    assert abs(ce.m_sphi(0.0) - S) < 1e-10


def test_cross_elements_exponentially_small():
    S = 30
    ce = css_cross_elements(SpinEnsemble(2 * S), 0.0, math.pi / 2)
    assert abs(ce.m_sphi(0.0)) <= S * math.cos(math.pi / 4) ** (2 * S - 1)


def test_cross_elements_large_n_negligible():
    ens = SpinEnsemble(1500)
    ce = css_cross_elements(ens, math.pi / 12, math.pi / 3)
    S2 = ens.S**2
    for v in (ce.m_sp2, ce.m_sm2, ce.m_pm, ce.m_mp):
        assert abs(v) < 1e-6 * S2
