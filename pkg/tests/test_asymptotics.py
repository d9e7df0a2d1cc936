import numpy as np
import pytest
from hypothesis import given, strategies as st

from cloakbench.asymptotics import (ExpansionTable, ScreenOperator, aperture_identity, aperture_wave,
                                    dipole_sum, expansion_check_full, leading_partial_far_field,
                                    phase_factor, screen_M, screen_mesh)
from cloakbench.geometry import GeometryError, MeshResolution, PartialGeneratorSpec
from cloakbench.solver import PlaneWave, fibonacci_directions


@pytest.fixture(scope="module")
def small_screen():
    return screen_mesh(h0=0.5, factor=0.5, levels=2)


@pytest.fixture(scope="module")
def small_op(small_screen):
    return ScreenOperator(small_screen, 1.0)


def _unit(rng, n):
    v = rng.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def test_phase_factor_examples():
    assert phase_factor(np.array([1.0, 0, 0]), np.zeros(3)) == pytest.approx(1.0)
    z = np.array([0.0, 0.0, 2.0])
    assert phase_factor(np.array([0, 0, 1.0]), z, 1.5) == pytest.approx(np.exp(-3j))
    assert phase_factor(np.array([1.0, 0, 0]), z) == pytest.approx(1.0)


def test_phase_factor_matches_plane_phase(rng):
    xh = _unit(rng, 1000)
    z = rng.normal(size=(1000, 3)) * 2
    s, r = dipole_sum(xh, z)
    assert np.abs(s.imag).max() < 1e-12
    got = phase_factor(xh, z, 1.3)
    want = np.exp(-1.3j * np.sum(xh * z, axis=1))
    assert np.abs(got - want).max() < 1e-12


@given(st.floats(0, 2 * np.pi), st.floats(0, 2 * np.pi), st.floats(0, np.pi))
def test_aperture_identity(a, b, c):
    n = np.array([np.sin(c) * np.cos(a), np.sin(c) * np.sin(a), np.cos(c)])
    d = np.array([np.cos(b), np.sin(b), 0.3])
    d /= np.linalg.norm(d)
    p = np.cross(d, [0.2, -0.5, 0.9])
    p /= np.linalg.norm(p)
    lhs, rhs = aperture_identity(p, d, n)
    assert np.abs(lhs - rhs).max() < 1e-14


@given(st.floats(0, 1))
def test_aperture_wave(eps):
    w = aperture_wave(eps)
    n = PartialGeneratorSpec().basis[2]
    assert np.linalg.norm(np.cross(w.pv, n)) == pytest.approx(eps, abs=1e-12)
    assert abs(w.pv @ w.dv) < 1e-14


def test_aperture_wave_range():
    with pytest.raises(ValueError):
        aperture_wave(1.5)


def test_screen_mesh_invariants():
    s = screen_mesh(PartialGeneratorSpec(side=2.0), h0=0.4, levels=3)
    assert s.boundary_loop_length() == pytest.approx(8.0, rel=1e-12)
    assert s.h_min == pytest.approx(0.05)
    assert s.grading_constant() < 3
    assert not s.mesh.closed
    with pytest.raises(GeometryError):
        screen_mesh(factor=1.5)


def test_screen_mesh_grades_towards_rim():
    s = screen_mesh(h0=0.2, levels=3)
    r = s.mesh.centroids - np.asarray(s.spec.center, float)
    rho = 0.5 - np.abs(r[:, :2]).max(axis=1)
    assert s.mesh.diameters[rho < 0.02].max() < s.mesh.diameters[rho > 0.2].min()


def test_static_screen_operator_real(small_screen):
    M = screen_M(small_screen, 0.0).matrix
    assert np.abs(np.imag(M)).max() < 1e-14


def test_flat_screen_operator_vanishes(small_screen):
    M = screen_M(small_screen, 1.0).matrix
    assert np.abs(M).max() < 1e-14


def test_bbM_zero_and_linearity(small_op):
    nb = small_op.gram.shape[0]
    assert np.all(small_op.apply(np.zeros(nb)).coef == 0)
    rng = np.random.default_rng(3)
    x, y = rng.normal(size=nb), rng.normal(size=nb)
    lhs = small_op.apply(2 * x - 3j * y).coef
    rhs = 2 * small_op.apply(x).coef - 3j * small_op.apply(y).coef
    assert np.abs(lhs - rhs).max() < 1e-12 * (1 + np.abs(rhs).max())


def test_leading_pattern_normal_polarisation(small_screen, small_op):
    ff = leading_partial_far_field(small_screen, 1.0, aperture_wave(0.0), fibonacci_directions(30), small_op)
    assert ff.norm_linf() < 1e-12


def test_expansion_table_csv(tmp_path):
    t = ExpansionTable(np.array([0.2, 0.1]), np.array([0.4, 0.1]), np.array([1.0, 0.5]), {"omega": 1.0})
    assert np.isnan(t.ratio[0]) and t.ratio[1] == pytest.approx(4.0)
    assert t.ratio_cap[1] == pytest.approx(2.0)
    text = t.to_csv(tmp_path / "e.csv")
    assert text.splitlines()[0] == "# omega=1.0"
    assert text.splitlines()[1] == "delta,residual_facade,residual_cap,ratio"
    assert (tmp_path / "e.csv").read_text() == text


def test_expansion_zero_density(segment):
    t = expansion_check_full(segment, [0.2, 0.1], c=(0, 0, 0), resolution=MeshResolution(n_circ=8, h_max=0.2))
    assert np.all(t.residual_facade == 0) and np.all(t.residual_cap == 0)


def test_expansion_needs_straight_curve(arc):
    with pytest.raises(GeometryError):
        expansion_check_full(arc, [0.2, 0.1])
