import json

import numpy as np
import pytest

from inhomk.cli import main
from inhomk.geometry import PointPattern, Window
from inhomk.intensity import CovariateField
from inhomk.io import (
    read_covariate_field,
    read_matrix_csv,
    read_pattern_csv,
    write_covariate_field,
    write_matrix_csv,
    write_pattern_csv,
)
from inhomk.simulate import simulate_poisson


def test_pattern_round_trip_exact(tmp_path):
    pat = simulate_poisson(150.0, Window(2, 2.0), seed=1)
    path = tmp_path / "pat.csv"
    write_pattern_csv(path, pat)
    back = read_pattern_csv(path)
    assert back.window == pat.window
    np.testing.assert_array_equal(back.points, pat.points)


def test_pattern_window_flags_override_sidecar(tmp_path):
    pat = PointPattern(Window(2, 1.0), [[0.1, 0.2]])
    path = tmp_path / "p.csv"
    write_pattern_csv(path, pat)
    back = read_pattern_csv(path, side=4.0, dim=2)
    assert back.window.side == 4.0


def test_pattern_missing_window(tmp_path):
    path = tmp_path / "q.csv"
    path.write_text("x,y\n0.0,0.0\n")
    with pytest.raises(ValueError, match="window unknown"):
        read_pattern_csv(path)


def test_pattern_malformed(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("x,y\n0.0,zap\n")
    with pytest.raises(ValueError, match="malformed"):
        read_pattern_csv(path, side=1.0, dim=2)


def test_empty_pattern_round_trip(tmp_path):
    pat = PointPattern(Window(2, 1.0), np.empty((0, 2)))
    path = tmp_path / "empty.csv"
    write_pattern_csv(path, pat)
    assert len(read_pattern_csv(path)) == 0


def test_covariate_field_round_trip(tmp_path):
    rng = np.random.default_rng(2)
    field = CovariateField(Window(2, 3.0), rng.normal(size=(4, 4, 2)))
    path = tmp_path / "field.csv"
    write_covariate_field(path, field)
    back = read_covariate_field(path)
    assert back.window == field.window
    np.testing.assert_array_equal(back.values, field.values)


def test_matrix_round_trip(tmp_path):
    mat = np.random.default_rng(3).normal(size=(5, 5))
    path = tmp_path / "m.csv"
    write_matrix_csv(path, mat)
    np.testing.assert_array_equal(read_matrix_csv(path), mat)


def test_cli_simulate_gof_reproducible(tmp_path, capsys):
    pat_path = tmp_path / "pat.csv"
    args = [
        "simulate", "--model", "poisson", "--rho", "200", "--side", "1",
        "--seed", "7", "-o", str(pat_path),
    ]
    assert main(args) == 0
    out1 = tmp_path / "g1.json"
    out2 = tmp_path / "g2.json"
    gof_args = ["gof", str(pat_path), "--R", "0.05", "--mode", "estimated",
                "--M", "2000", "--seed", "9"]
    assert main(gof_args + ["-o", str(out1)]) == 0
    assert main(gof_args + ["-o", str(out2)]) == 0
    assert out1.read_bytes() == out2.read_bytes()
    payload = json.loads(out1.read_text())
    assert payload["reject"] in (True, False)


def test_cli_kfunc_monotone(tmp_path, capsys):
    pat_path = tmp_path / "pat.csv"
    main(["simulate", "--model", "poisson", "--rho", "300", "--side", "1",
          "--seed", "3", "-o", str(pat_path)])
    curve_path = tmp_path / "curve.csv"
    assert main(["kfunc", str(pat_path), "--R", "0.05", "--grid", "50",
                 "--intensity", "constant", "--fit", "-o", str(curve_path)]) == 0
    rows = curve_path.read_text().strip().splitlines()
    assert rows[0] == "r,khat"
    assert len(rows) == 51
    vals = [float(line.split(",")[1]) for line in rows[1:]]
    assert vals == sorted(vals)


def test_cli_matern_and_fit(tmp_path, capsys):
    pat_path = tmp_path / "m.csv"
    assert main(["simulate", "--model", "matern", "--kappa", "25", "--mu", "8",
                 "--rdisp", "0.2", "--side", "1", "--seed", "4",
                 "-o", str(pat_path)]) == 0
    out = tmp_path / "fit.json"
    assert main(["fit", str(pat_path), "--model", "constant", "-o", str(out)]) == 0
    assert json.loads(out.read_text())["beta_hat"] > 0


def test_cli_cov_blocks(tmp_path, capsys):
    prefix = tmp_path / "blocks"
    assert main(["cov", "--g-model", "poisson", "--beta", "200", "--grid", "5",
                 "-o", str(prefix)]) == 0
    c = read_matrix_csv(str(prefix) + ".c.csv")
    ctilde = read_matrix_csv(str(prefix) + ".c_tilde.csv")
    assert c.shape == (5, 5) and ctilde.shape == (5, 5)
    assert np.all(np.diag(ctilde) <= np.diag(c))
    meta = json.loads((tmp_path / "blocks.meta.json").read_text())
    assert meta["beta"] == 200.0


def test_cli_crit(tmp_path, capsys):
    out = tmp_path / "crit.json"
    assert main(["crit", "--rho", "200", "--mode", "estimated", "--M", "1000",
                 "--seed", "3", "-o", str(out)]) == 0
    payload = json.loads(out.read_text())
    assert payload["critical_value"] > 0
    assert payload["M"] == 1000


def test_cli_crit_cache(tmp_path, capsys):
    cache = tmp_path / "cache.json"
    args = ["crit", "--rho", "150", "--M", "1000", "--seed", "4",
            "--cache", str(cache)]
    out1, out2 = tmp_path / "c1.json", tmp_path / "c2.json"
    assert main(args + ["-o", str(out1)]) == 0
    assert cache.exists() and len(json.loads(cache.read_text())) == 1
    assert main(args + ["-o", str(out2)]) == 0
    assert out1.read_bytes() == out2.read_bytes()
    # a different alpha is a different key
    assert main(args + ["--alpha", "0.1", "-o", str(out2)]) == 0
    assert len(json.loads(cache.read_text())) == 2


def test_cli_study(tmp_path, capsys):
    cfg = {
        "process": "poisson",
        "rho": 200.0,
        "sides": [1.0],
        "modes": ["estimated"],
        "replicates": 120,
        "sample_size": 500,
        "seed": 5,
    }
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(cfg))
    out = tmp_path / "table.csv"
    assert main(["study", "--config", str(cfg_path), "-o", str(out)]) == 0
    lines = out.read_text().strip().splitlines()
    assert lines[0].startswith("process,")
    assert len(lines) == 2


def test_cli_domain_error_exit_code(capsys):
    assert main(["gof", "does-not-exist.csv", "--seed", "1"]) == 1
    err = capsys.readouterr().err
    assert "error:" in err


def test_cli_usage_error_exit_code():
    with pytest.raises(SystemExit) as exc:
        main(["bogus-command"])
    assert exc.value.code == 2
