import csv
import io
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from fdhom.cli import main
from fdhom.config import load_config, parse_config
from fdhom.errors import ConfigError
from fdhom.experiments import gamma_minima_experiment, render_csv
from fdhom.integrands import make_surface, make_volume

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

SMALL = """
seed = 3
output = "unused"

[volume]
family = "iso_norm"

[surface]
family = "iso_norm"

[discretization]
n = 1
h = 0.125
levels = 33

[homogenize]
formulas = ["f_hom", "g_hom", "f_hom_inf"]
r_schedule = [4, 8, 16]
xi = [-2.0, 0.5, 2.0]
zeta = [1.0]

[cell_solve]
pair = "F_G"
datum = "step"
zeta = 1.0
r = 2.0

[stochastic]
ensemble = { kind = "iid_cell", law = [[1.0, 0.5], [3.0, 0.5]], surface_law = [[2.0, 1.0]] }
xi = 1.0
h = 0.5
r_schedule = [4, 8, 16]
n_omega = 5

[gamma]
interval = [0.0, 3.0]
epsilons = [0.5, 0.25]
cells_per_period = 4
levels = 21
hom_r_schedule = [4, 8, 16]
"""


@pytest.fixture
def small(tmp_path):
    p = tmp_path / "small.toml"
    p.write_text(SMALL)
    return p


def _table(path):
    text = path.read_text()
    meta = dict(line[2:].split(": ", 1) for line in text.splitlines() if line.startswith("# "))
    body = [line for line in text.splitlines() if not line.startswith("#")]
    return meta, list(csv.DictReader(io.StringIO("\n".join(body))))


def test_shipped_configs_validate():
    for p in sorted(CONFIGS.glob("*.toml")):
        cfg = load_config(p)
        assert len(cfg.digest()) == 64


@pytest.mark.parametrize("data,loc", [
    ({"bogus": 1}, "bogus"),
    ({"discretization": {"levels": 4}}, "discretization.levels"),
    ({"homogenize": {"r_schedule": [4, 2, 8]}}, "homogenize.r_schedule"),
    ({"discretization": {"h": -1}}, "discretization.h"),
])
def test_schema_errors_carry_path(data, loc):
    with pytest.raises(ConfigError) as err:
        parse_config(data)
    assert err.value.path == loc


def test_digest_is_stable_and_sensitive(small):
    a = load_config(small)
    b = load_config(small)
    assert a.digest() == b.digest()
    assert a.model_copy(update={"seed": 4}).digest() != a.digest()


def test_check_subcommand_all_pass(small, tmp_path, capsys):
    assert main(["check", "--config", str(small), "--out", str(tmp_path / "o")]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and out.count("PASS") >= 2
    summary = json.loads((tmp_path / "o" / "check.json").read_text())["summary"]
    assert all(summary["volume"].values()) and all(summary["surface"].values())


def test_check_subcommand_reports_failure(tmp_path):
    p = tmp_path / "q.toml"
    p.write_text('[volume]\nfamily = "quadratic"\nconstants = { c3 = 10.0 }\n'
                 '[surface]\nfamily = "iso_norm"\n[check]\nnorms = [0.5, 1.0, 100.0]\n')
    assert main(["check", "--config", str(p), "--out", str(tmp_path)]) == 1


def test_homogenize_summary_rows(small, tmp_path):
    assert main(["homogenize", "--config", str(small), "--out", str(tmp_path), "--workers", "1"]) == 0
    meta, rows = _table(tmp_path / "homogenize.csv")
    assert meta["experiment"] == "homogenize" and meta["seed"] == "3"
    assert meta["config_sha256"] == load_config(small).digest()
    limits = {(r["formula"], r["param"]): float(r["limit"]) for r in rows if r["r"] == "limit"}
    assert limits[("f_hom", "xi=-2.0")] == pytest.approx(2.0, rel=0.03)
    assert limits[("f_hom", "xi=0.5")] == pytest.approx(0.5, rel=0.03)
    assert limits[("g_hom", "zeta=1.0;nu=1.0")] == pytest.approx(1.0, rel=0.03)
    assert limits[("f_hom_inf", "xi=2.0")] == pytest.approx(2.0, rel=0.03)
    assert list(rows[0]) == ["formula", "param", "r", "value", "normalized", "limit", "spread"]


def test_cell_solve_writes_field(small, tmp_path):
    assert main(["cell-solve", "--config", str(small), "--out", str(tmp_path)]) == 0
    summary = json.loads((tmp_path / "cell_solve.json").read_text())["summary"]
    assert summary["value"] == pytest.approx(1.0, abs=1e-12)
    assert (tmp_path / "cell_solve_field.csv").exists()


def test_stochastic_byte_identical_and_worker_independent(small, tmp_path):
    for name, workers in (("a", "1"), ("b", "1"), ("c", "2")):
        assert main(["stochastic", "--config", str(small), "--out", str(tmp_path / name),
                     "--workers", workers]) == 0
    a = (tmp_path / "a" / "stochastic.csv").read_bytes()
    assert a == (tmp_path / "b" / "stochastic.csv").read_bytes()
    assert a == (tmp_path / "c" / "stochastic.csv").read_bytes()
    _, rows = _table(tmp_path / "a" / "stochastic.csv")
    assert {"process", "r", "omega", "value"} <= set(rows[0])


def test_seed_override_changes_output(small, tmp_path):
    main(["stochastic", "--config", str(small), "--out", str(tmp_path / "a")])
    main(["stochastic", "--config", str(small), "--out", str(tmp_path / "b"),
          "--seed-override", "0xffffffffffffffff"])
    meta, _ = _table(tmp_path / "b" / "stochastic.csv")
    assert meta["seed"] == str(2**64 - 1)
    assert (tmp_path / "a" / "stochastic.csv").read_bytes() != \
        (tmp_path / "b" / "stochastic.csv").read_bytes()


def test_output_directory_from_environment(small, tmp_path, monkeypatch):
    monkeypatch.setenv("FDHOM_OUT_DIR", str(tmp_path / "env"))
    assert main(["check", "--config", str(small)]) == 0
    assert (tmp_path / "env" / "check.txt").exists()


def test_gamma_subcommand(small, tmp_path):
    assert main(["gamma", "--config", str(small), "--out", str(tmp_path)]) == 0
    _, rows = _table(tmp_path / "gamma.csv")
    assert [float(r["epsilon"]) for r in rows] == [0.5, 0.25]
    assert all(float(r["gap"]) <= 1e-12 for r in rows)


def test_config_error_exit_code(tmp_path, capsys):
    p = tmp_path / "bad.toml"
    p.write_text('[volume]\nfamily = "iso_norm"\nparams = { foo = 1 }\n[surface]\nfamily = "iso_norm"\n')
    assert main(["check", "--config", str(p), "--out", str(tmp_path)]) == 2
    assert "volume.params" in capsys.readouterr().err
    p.write_text("not toml = = 1")
    assert main(["check", "--config", str(p)]) == 2
    assert main(["check", "--config", str(tmp_path / "missing.toml")]) == 2


def test_missing_section_exit_code(tmp_path, capsys):
    p = tmp_path / "m.toml"
    p.write_text('[volume]\nfamily = "iso_norm"\n[surface]\nfamily = "iso_norm"\n')
    assert main(["homogenize", "--config", str(p), "--out", str(tmp_path)]) == 2
    assert "homogenize" in capsys.readouterr().err


def test_incommensurate_epsilon():
    f, g = make_volume("laminate"), make_surface("iso_norm", {"c": 2.0})
    with pytest.raises(ConfigError):
        gamma_minima_experiment(f, g, 1.3, 0.0, 1.0, [0.3], hom_r_schedule=(4, 8, 16))


def test_gamma_homogeneous_gap_zero():
    f, g = make_volume("iso_norm"), make_surface("iso_norm")
    rows, summary = gamma_minima_experiment(f, g, 1.3, 0.0, 1.0, [0.25, 0.125],
                                            cells_per_period=4, levels=21,
                                            hom_r_schedule=(4, 8, 16))
    assert all(r.gap <= 1e-12 for r in rows)
    assert summary["sandwich"][0] <= summary["min_hom"] <= summary["sandwich"][1] + 1e-12


def test_render_csv_is_plain_and_round_trips():
    text = render_csv({"seed": "1"}, ("a", "b"), [[0.1, None], ["x", np.int64(3)]])
    assert text == "# seed: 1\na,b\n0.1,\nx,3\n"


def test_module_entry_point(small, tmp_path):
    res = subprocess.run([sys.executable, "-m", "fdhom", "check", "--config", str(small),
                          "--out", str(tmp_path)], capture_output=True, text=True)
    assert res.returncode == 0 and "PASS" in res.stdout
