import numpy as np
import pytest
from hypothesis import given, strategies as st

from cloakbench import mie
from cloakbench.asymptotics import screen_mesh
from cloakbench.geometry import GeometryError, sphere_mesh
from cloakbench.solver import (FarFieldPattern, PECOperator, PlaneWave, far_field, fibonacci_directions,
                               incident_fields, mie_far_field, read_far_field_csv, scattered_field, solve_pec)


@pytest.fixture(scope="module")
def small_solution():
    mesh = sphere_mesh(1.0, 4)
    wave = PlaneWave((1, 0, 0), (0, 0, 1), 1.0)
    return mesh, wave, solve_pec(mesh, wave)


def test_plane_wave_validation():
    with pytest.raises(ValueError):
        PlaneWave((1, 0, 0), (1, 0, 0))
    with pytest.raises(ValueError):
        PlaneWave((2, 0, 0), (0, 0, 1))
    w = PlaneWave.normalized((1, 0, 1), (0, 0, 2))
    assert np.allclose(w.pv, [1, 0, 0]) and np.allclose(w.dv, [0, 0, 1])


@given(st.floats(0.2, 4.0))
def test_incident_fields_maxwell(omega):
    w = PlaneWave((0, 1, 0), (1, 0, 0), omega)
    x = np.array([0.3, -0.2, 0.5])
    h = 1e-5
    J = np.zeros((3, 3), complex)
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        J[:, k] = (incident_fields(w, x + e)[0] - incident_fields(w, x - e)[0]) / (2 * h)
    curl = np.array([J[2, 1] - J[1, 2], J[0, 2] - J[2, 0], J[1, 0] - J[0, 1]])
    _, H = incident_fields(w, x)
    assert np.abs(curl - 1j * omega * H).max() < 1e-6 * omega


def test_fibonacci_grid():
    d = fibonacci_directions(266)
    assert d.shape == (266, 3)
    assert np.allclose(np.linalg.norm(d, axis=1), 1)
    assert np.abs(d.mean(axis=0)).max() < 1e-2


def test_mie_optical_theorem():
    # extinction from the forward amplitude equals the integrated scattered power
    k, p, dv = 1.7, np.array([1.0, 0, 0]), np.array([0, 0, 1.0])
    mu, wmu = np.polynomial.legendre.leggauss(60)
    phi = np.linspace(0, 2 * np.pi, 121)[:-1]
    T, P = np.meshgrid(np.arccos(mu), phi, indexing="ij")
    dirs = np.stack([np.sin(T) * np.cos(P), np.sin(T) * np.sin(P), np.cos(T)], -1).reshape(-1, 3)
    A = mie.sphere_far_field(1.0, k, p, dv, dirs)
    w = (wmu[:, None] * np.full(len(phi), 2 * np.pi / len(phi))[None, :]).ravel()
    sca = np.sum(w * np.sum(np.abs(A) ** 2, axis=1))
    fwd = mie.sphere_far_field(1.0, k, p, dv, dv[None])[0]
    ext = 4 * np.pi / k * np.imag(fwd @ p)
    assert abs(sca - ext) < 1e-8 * ext
    assert np.abs(np.sum(A * dirs, axis=1)).max() < 1e-12


def test_mie_truncation_check():
    assert mie.check_truncation(1.0, 1.0, (1, 0, 0), (0, 0, 1), fibonacci_directions(50)) < 1e-10


def test_small_sphere_against_series(small_solution):
    mesh, wave, sol = small_solution
    dirs = fibonacci_directions()
    ff = far_field(mesh, sol.density, dirs, wave=wave)
    ref = mie_far_field(1.0, 1.0, wave, dirs)
    assert ff.relative_l2(ref) < 0.03
    assert sol.residual < 1e-10
    assert ff.transversality() < 1e-10


def test_far_field_direct_evaluation(small_solution):
    mesh, wave, sol = small_solution
    xh = np.array([[0.6, 0.0, 0.8], [0.0, -1.0, 0.0]])
    ff = far_field(mesh, sol.density, xh, wave=wave).values
    errs = []
    for R in (1e3, 1e4):
        E, _ = scattered_field(mesh, sol.density, R * xh, 1.0)
        approx = E * R * np.exp(-1j * R)
        errs.append(np.abs(approx - ff).max() / np.abs(ff).max())
    assert errs[1] < 1e-3
    assert 5 < errs[0] / errs[1] < 20


def test_amplitude_linearity(small_solution):
    mesh, wave, sol = small_solution
    op = PECOperator(mesh, 1.0)
    s2 = op.solve(PlaneWave(wave.p, wave.d, 1.0, 2.0))
    assert np.allclose(s2.density.coef, 2 * sol.density.coef, rtol=1e-12, atol=1e-14)


def test_far_field_csv_roundtrip(tmp_path, small_solution):
    mesh, wave, sol = small_solution
    ff = far_field(mesh, sol.density, fibonacci_directions(20), wave=wave)
    text = ff.to_csv(tmp_path / "f.csv")
    assert text.startswith("# omega=1.0") and "mesh_hash=" in text
    d, v = read_far_field_csv(tmp_path / "f.csv")
    assert np.allclose(d, ff.directions, atol=1e-14) and np.array_equal(v, ff.values)


def test_open_surface_rejected():
    s = screen_mesh(h0=0.5, levels=1)
    with pytest.raises(GeometryError):
        PECOperator(s.mesh, 1.0)


def test_norms():
    d = fibonacci_directions(100)
    f = FarFieldPattern(d, np.tile([1.0, 0, 0], (100, 1)).astype(complex))
    assert f.norm_linf() == pytest.approx(1.0)
    assert f.norm_l2() == pytest.approx(np.sqrt(4 * np.pi))


def test_mirror_symmetry(small_solution):
    # z -> -z maps the icosphere onto itself; the scattered field is a polar vector
    mesh, _, _ = small_solution
    R = np.diag([1.0, 1.0, -1.0])
    w1 = PlaneWave((1, 0, 0), (0, 0.6, 0.8), 1.0)
    w2 = PlaneWave((1, 0, 0), (0, 0.6, -0.8), 1.0)
    op = PECOperator(mesh, 1.0)
    dirs = fibonacci_directions(60)
    a1 = far_field(mesh, op.solve(w1).density, dirs @ R, wave=w1).values @ R
    a2 = far_field(mesh, op.solve(w2).density, dirs, wave=w2).values
    assert np.abs(a1 - a2).max() < 1e-8 * np.abs(a2).max()
