"""Acceptance suite: one verdict line per criterion, printed and collected for the run summary.

Run ``pytest tests/test_acceptance.py -v -s`` to see the lines as they are produced.
"""
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from cloakbench import cli
from cloakbench.geometry import MeshResolution, RegionTag, sphere_mesh, tube_domain, refine
from cloakbench.harness import experiments
from cloakbench.harness.config import load_config
from cloakbench.potentials import default_offset, jump_test, scalar_trace_test
from cloakbench.transform import LocationClass, cloak_exponents, jacobians, push_forward

CONFIGS = Path(__file__).resolve().parents[1] / "scripts" / "configs"
VERDICTS = []


def verdict(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    VERDICTS.append(line)
    print(line)
    assert ok, line


def run_config(name, out, **over):
    cfg = load_config(CONFIGS / name, out=str(out), **over)
    t0 = time.perf_counter()
    table = experiments.run(cfg)
    return table, time.perf_counter() - t0


def _checks(table):
    return {c.name: c for c in table.checks}


def test_criterion_01_sphere(tmp_path):
    table, wall = run_config("sphere.cfg", tmp_path)
    err = float(_checks(table)["relative L2 error vs series oracle < 0.02"].detail)
    edges = table.meta["n_edges"]
    ok = err < 0.02 and wall < 300 and 2500 <= edges <= 3500
    verdict(1, ok, f"relative L2 {err:.4f} (< 0.02), {edges} edges, {wall:.1f} s (< 300 s)")


def _field(x):
    return np.stack([np.sin(x[:, 1]), np.cos(x[:, 2]), x[:, 0]], axis=1)


def _scalar(x):
    return np.cos(x[:, 0]) + x[:, 1] * x[:, 2]


def test_criterion_02_jump_identities(segment):
    meshes = {"sphere": sphere_mesh(1.0, 4),
              "tube": tube_domain(segment, 0.2, MeshResolution(n_circ=8, h_max=0.2))}
    parts, ok = [], True
    for name, m in meshes.items():
        fine = refine(m, 1)
        tau = default_offset(m)
        j = (jump_test(m, 1.0, _field, tau), jump_test(fine, 1.0, _field, tau))
        s = (scalar_trace_test(m, 1.0, _scalar, tau), scalar_trace_test(fine, 1.0, _scalar, tau))
        rj, rs = j[0] / j[1], s[0] / s[1]
        ok &= rj >= 1.5 and rs >= 1.5
        parts.append(f"{name}: jump {j[0]:.3g}->{j[1]:.3g} (x{rj:.2f}), trace {s[0]:.3g}->{s[1]:.3g} (x{rs:.2f})")
    verdict(2, ok, "; ".join(parts) + " (factor >= 1.5)")


def test_criterion_03_jacobians(segment, rng):
    worst_n, worst_det, worst_sw, count = 0.0, 0.0, 0.0, 0
    for delta in (0.2, 0.1, 0.05):
        m = tube_domain(segment, delta, MeshResolution(n_circ=12, h_max=0.1))
        B, det, loc = jacobians(m.vertices, delta, segment)
        fac = loc == LocationClass.TUBE_FACADE.value
        y = m.vertices[fac]
        _, z = segment.nearest(y)
        nu = (y - z) / np.linalg.norm(y - z, axis=1, keepdims=True)
        Bn = np.einsum("pij,pj->pi", B[fac], nu)
        worst_n = max(worst_n, np.abs(Bn - nu / delta).max() * delta)
        worst_det = max(worst_det, np.abs(det[fac] * delta ** 2 - 1).max())
        V = rng.normal(size=(len(B), 100, 3))
        V /= np.linalg.norm(V, axis=2, keepdims=True)
        q = np.einsum("pki,pij,pkj->pk", V, B, V)
        worst_sw = max(worst_sw, max(np.max(1 - q), np.max(q - 1 / delta)) * delta)
        count += int(fac.sum())
    ok = worst_n < 1e-8 and worst_det < 1e-8 and worst_sw <= 1e-10
    verdict(3, ok, f"{count} facade nodes: |B nu - nu/delta| {worst_n:.1e}, |det B delta^2 - 1| {worst_det:.1e}, "
                   f"sandwich violation {max(worst_sw, 0.0):.1e}")


def test_criterion_04_push_forward(rng):
    n = 1000
    Q, _ = np.linalg.qr(rng.normal(size=(n, 3, 3)))
    m = np.einsum("pij,pj,pkj->pik", Q, rng.uniform(0.2, 5.0, size=(n, 3)), Q)

    def jac():
        U, _ = np.linalg.qr(rng.normal(size=(n, 3, 3)))
        V, _ = np.linalg.qr(rng.normal(size=(n, 3, 3)))
        B = np.einsum("pij,pj,pkj->pik", U, rng.uniform(0.3, 3.0, size=(n, 3)), V)
        B[np.linalg.det(B) < 0, 0] *= -1
        return B

    B1, B2 = jac(), jac()
    scale = np.abs(m).max(axis=(1, 2))
    e_id = np.max(np.abs(push_forward(m, np.broadcast_to(np.eye(3), m.shape)) - m).max(axis=(1, 2)) / scale)
    comp, direct = push_forward(push_forward(m, B1), B2), push_forward(m, B2 @ B1)
    e_fun = np.max(np.abs(comp - direct).max(axis=(1, 2)) / np.abs(direct).max(axis=(1, 2)))
    pf = push_forward(m, B1)
    want = np.linalg.det(m) / np.linalg.det(B1)
    e_det = np.max(np.abs(np.linalg.det(pf) - want) / np.abs(want))
    spd = bool(np.all(np.linalg.eigvalsh(pf) > 0) and np.all(pf == np.swapaxes(pf, 1, 2)))
    ok = max(e_id, e_fun, e_det) <= 1e-12 and spd
    verdict(4, ok, f"identity {e_id:.1e}, functoriality {e_fun:.1e}, det law {e_det:.1e}, SPD kept {spd}")


def test_criterion_05_full_rate(tmp_path):
    table, wall = run_config("sweep_full.cfg", tmp_path)
    f = table.fit
    ok = table.passed and wall < 1800
    verdict(5, ok, f"slope {f.slope:.3f} (band [1.6, 2.4]), r2 {f.r2:.4f} (>= 0.98), {wall:.0f} s (< 1800 s)")


def test_criterion_06_partial_rate(tmp_path):
    table, _ = run_config("sweep_partial.cfg", tmp_path)
    c = _checks(table)
    f = table.fit
    ctrl = c["worst-aperture control: last/first > 0.5"].detail
    verdict(6, table.passed, f"slope {f.slope:.3f} (band [0.7, 1.3]), r2 {f.r2:.4f} (>= 0.95), "
                             f"control last/first {ctrl} (> 0.5)")


def test_criterion_07_aperture(tmp_path):
    table, _ = run_config("aperture.cfg", tmp_path)
    pairs = [c for c in table.checks if c.name.startswith("doubling")]
    detail = ", ".join(f"{c.name.split(':')[0].removeprefix('doubling eps ')} x{c.detail}" for c in pairs)
    verdict(7, bool(pairs) and table.passed, f"delta 0.05: {detail} (each in [1.6, 2.4])")


def test_criterion_08_expansion(tmp_path):
    table, _ = run_config("expansion.cfg", tmp_path)
    c = _checks(table)
    fac = c["facade ratio r(delta)/r(delta/2) in [3, 5]"].detail
    slab = c["slab face ratio in [1.5, 2.5]"].detail
    verdict(8, table.passed, f"facade ratios {fac} (band [3, 5]); slab ratios {slab} (band [1.5, 2.5])")


def test_criterion_09_leading_order(tmp_path):
    table, _ = run_config("leading_order.cfg", tmp_path)
    diffs = _checks(table)["relative L2 difference decreases monotonically"].detail
    verdict(9, table.passed, f"relative L2 differences over delta 0.2, 0.1, 0.05: {diffs} (strictly decreasing)")


def test_criterion_10_exponents():
    a = cloak_exponents(0, 2, 0)
    b = cloak_exponents(0, Fraction(5, 2), 0)
    ok = (a.beta == 1 and a.beta_prime == 0 and a.full_rate == 2
          and b.beta_2 == Fraction(1, 2) and b.partial_rate == 1)
    verdict(10, ok, f"(0,2,0): beta={a.beta} beta'={a.beta_prime} full rate={a.full_rate}; "
                    f"(0,5/2,0): beta_2={b.beta_2} partial rate={b.partial_rate}")


def _strip_wall(text):
    out = []
    for line in text.splitlines():
        if line.startswith("sweep_var,") or (line and line[0].isdigit()):
            line = line.rsplit(",", 1)[0]
        out.append(line)
    return "\n".join(out)


def test_criterion_11_reproducibility(tmp_path, capsys):
    cfg = str(CONFIGS / "repro.cfg")
    codes = [cli.main(["sweep_full", "--config", cfg, "--out", str(tmp_path / k)]) for k in "ab"]
    capsys.readouterr()
    a, b = tmp_path / "a", tmp_path / "b"
    names = sorted(p.name for p in a.glob("*.csv"))
    same = names == sorted(p.name for p in b.glob("*.csv")) and len(names) >= 4
    for nm in names:
        ta, tb = (a / nm).read_text(), (b / nm).read_text()
        if nm == "results.csv":
            ta, tb = _strip_wall(ta), _strip_wall(tb)
        same &= ta == tb
    ok = same and codes[0] == codes[1] and codes[0] in (0, 2)
    verdict(11, ok, f"{len(names)} CSV files bitwise identical across two runs (wall_ms excluded): {same}")
