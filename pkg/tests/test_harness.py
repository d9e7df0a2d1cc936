import numpy as np
import pytest
from hypothesis import given, strategies as st

from cloakbench import cli
from cloakbench.harness import experiments
from cloakbench.harness.config import ConfigError, ExperimentConfig, parse_config
from cloakbench.harness.fitting import fit_loglog_slope, slope_fit
from cloakbench.harness.results import ResultTable, Row
from cloakbench.solver import ResonanceError


def _sphere_cfg(tmp_path, **kw):
    base = dict(kind="validate_sphere", sphere_frequency=2, n_dirs=40, out=str(tmp_path))
    base.update(kw)
    return ExperimentConfig(**base).validate()


def test_parse_config_roundtrip():
    cfg = parse_config("kind = sweep_full\ndeltas = 0.2, 0.1, 0.05  # comment\ngate = false\n")
    assert cfg.kind == "sweep_full" and cfg.deltas == (0.2, 0.1, 0.05) and cfg.gate is False
    again = parse_config(cfg.to_text())
    assert again.hash == cfg.hash


@pytest.mark.parametrize("text", [
    "kind = sweep_full\nbogus = 1\n",
    "kind = sweep_full\ndeltas =\n",
    "kind = sweep_full\ndeltas = 0.05, 0.1, 0.2\n",
    "kind = sweep_full\ndeltas = 0.2, 0.2\n",
    "kind = sweep_partial\ndeltas = 0.6, 0.3\n",
    "kind = nothing\n",
    "kind = rates\nomega = -1\n",
    "kind = rates\nomega = 1\nomega = 2\n",
    "kind = rates\np = 1,0,0\n",
    "kind = rates\np = 1,0,0\nd = 1,0,0\n",
    "kind = rates\ns = two\n",
    "kind = rates\ngarbage line\n",
])
def test_invalid_configs(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_hash_ignores_output_dir():
    a = ExperimentConfig(out="x")
    assert a.hash == ExperimentConfig(out="y").hash
    assert a.hash != ExperimentConfig(omega=2.0).hash


@pytest.mark.parametrize("f, want", [
    (lambda d: d ** 2, 2.0),
    (lambda d: 3.7 * d, 1.0),
])
def test_slope_exact(f, want):
    d = np.array([0.2, 0.1, 0.05, 0.025])
    s, _, r2 = fit_loglog_slope(np.c_[d, f(d)])
    assert s == pytest.approx(want, abs=1e-12) and r2 == pytest.approx(1.0)


def test_slope_with_higher_order_term():
    d = np.array([0.2, 0.1, 0.05])
    s, _, _ = fit_loglog_slope(np.c_[d, d ** 2 + 0.01 * d ** 3])
    assert 1.99 <= s <= 2.01


@given(st.floats(-3, 3), st.floats(0.1, 10))
def test_slope_property(k, c):
    d = np.geomspace(0.5, 0.01, 5)
    f = slope_fit(d, c * d ** k)
    assert f.slope == pytest.approx(k, abs=1e-9)
    assert f.ci95[0] <= f.slope <= f.ci95[1]


def test_slope_rejects_bad_data():
    with pytest.raises(ValueError):
        slope_fit([0.1, 0.2], [1, 2])
    with pytest.raises(ValueError):
        slope_fit([0.1, 0.2, 0.3], [1, 0, 2])


def test_result_table_csv():
    t = ResultTable("x", meta={"omega": 1.0})
    t.add(Row(0.1, 1.0, 2.0, 10, 1e-15, True, 5.0))
    t.add(Row(0.05, 0.5, 1.0, 10, 1e-15, False, 5.0))
    lines = t.to_csv().splitlines()
    assert lines[0] == "# omega=1.0"
    assert lines[2] == "sweep_var,norm_linf,norm_l2,n_edges,solve_residual,gated,wall_ms"
    assert "wall_ms" not in t.to_csv(include_wall=False)
    assert t.fit_slope() is None
    with pytest.raises(ValueError):
        Row(0.1, -1.0, 1.0, 1, 0.0)


def test_sphere_run_artifacts(tmp_path):
    cfg = _sphere_cfg(tmp_path)
    table = experiments.run(cfg)
    names = {p.name for p in tmp_path.iterdir()}
    assert {"results.csv", "report.txt", "farfield_0.csv", "mesh_0.vtk", "mie.csv"} <= names
    for p in tmp_path.glob("*.csv"):
        assert p.read_text().startswith(f"# config_hash={cfg.hash}")
    assert len(table.rows) == 1


def test_determinism(tmp_path):
    a = experiments.run(_sphere_cfg(tmp_path / "a"))
    b = experiments.run(_sphere_cfg(tmp_path / "b"))
    assert a.to_csv(include_wall=False) == b.to_csv(include_wall=False)
    assert (tmp_path / "a/farfield_0.csv").read_text() == (tmp_path / "b/farfield_0.csv").read_text()


def test_amplitude_scales_norms(tmp_path):
    a = experiments.run(_sphere_cfg(tmp_path / "a"))
    b = experiments.run(_sphere_cfg(tmp_path / "b", amplitude=2.0))
    assert b.rows[0].norm_linf == pytest.approx(2 * a.rows[0].norm_linf, rel=1e-12)
    assert b.rows[0].norm_l2 == pytest.approx(2 * a.rows[0].norm_l2, rel=1e-12)


def test_cli_exit_codes(tmp_path, capsys, monkeypatch):
    good = tmp_path / "r.cfg"
    good.write_text("kind = rates\ns = 5/2\n")
    assert cli.main(["rates", "--config", str(good), "--out", str(tmp_path / "o")]) == 0
    assert "5/2" in capsys.readouterr().out
    bad = tmp_path / "b.cfg"
    bad.write_text("kind = sweep_full\nwhat = 1\n")
    assert cli.main(["sweep_full", "--config", str(bad)]) == 3
    empty = tmp_path / "e.cfg"
    empty.write_text("kind = sweep_full\ndeltas =\n")
    assert cli.main(["sweep_full", "--config", str(empty)]) == 3
    assert cli.main(["rates", "--config", str(tmp_path / "missing.cfg")]) == 3
    assert cli.main(["sweep_full", "--config", str(good)]) == 3

    loose = tmp_path / "s.cfg"
    loose.write_text("sphere_frequency = 1\nn_dirs = 40\nwrite_mesh = false\n")
    assert cli.main(["validate_sphere", "--config", str(loose), "--out", str(tmp_path / "s")]) == 2

    def boom(cfg, out=None):
        raise ResonanceError("singular")
    monkeypatch.setitem(experiments.EXPERIMENTS, "rates", boom)
    assert cli.main(["rates", "--out", str(tmp_path / "z")]) == 4
