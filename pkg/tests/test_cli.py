"""
End-to-end tests of the command-line interface.
"""
import json

import numpy as np
import pytest

from emf_sg.cli import EXIT_OK, EXIT_USAGE, _compare_mean, main, normalize_argv, parse_grid
from emf_sg.errors import DomainError
from emf_sg.schemas import RunManifest


def read_csv(path):
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0].startswith("# emf-sg v")
    return lines[0], lines[1], lines[2:]


def test_parse_grid():
    grid = parse_grid("-10:1:20")
    assert len(grid) == 31
    assert grid[0] == -10.0 and grid[-1] == 20.0
    np.testing.assert_allclose(parse_grid("0:0.1:0.3"), [0.0, 0.1, 0.2, 0.3])
    assert parse_grid("-50").tolist() == [-50.0]
    for bad in ("1:0:3", "5:1:0", "a:b:c", "1:2"):
        with pytest.raises(DomainError):
            parse_grid(bad)


def test_normalize_argv():
    argv = ["metric", "--t-db", "-10:1:20", "--te-dbm", "-50", "--threads", "2"]
    assert normalize_argv(argv) == ["metric", "--t-db=-10:1:20", "--te-dbm=-50", "--threads", "2"]
    assert normalize_argv(["sweep", "--decades", "-1:2"]) == ["sweep", "--decades=-1:2"]


def test_coverage_curve(tmp_path):
    out = tmp_path / "cov.csv"
    code = main(["metric", "--metric", "coverage-ul", "--t-db", "-10:1:20", "-o", str(out)])
    assert code == EXIT_OK
    _, header, rows = read_csv(out)
    assert header == "axis,value,half_width"
    assert len(rows) == 31
    values = [float(r.split(",")[1]) for r in rows]
    assert all(0.0 <= v <= 1.0 for v in values)
    assert all(b <= a + 1e-9 for a, b in zip(values, values[1:]))


def test_joint_metric_is_one_row(tmp_path):
    out = tmp_path / "joint.csv"
    code = main(["metric", "--metric", "joint-uec", "--tc-db", "0", "--te-dbm", "-50", "-o", str(out)])
    assert code == EXIT_OK
    _, _, rows = read_csv(out)
    assert len(rows) == 1
    axis, value, _ = rows[0].split(",")
    assert float(axis) == pytest.approx(10.0)
    assert 0.0 <= float(value) <= 1.0


def test_identical_runs_give_identical_bytes(tmp_path):
    first, second = tmp_path / "a.csv", tmp_path / "b.csv"
    for out in (first, second):
        assert main(["metric", "--metric", "mean-exposure-dl", "-o", str(out)]) == EXIT_OK
    assert first.read_bytes() == second.read_bytes()


def test_manifest_sidecar_matches_header(tmp_path):
    out, sidecar = tmp_path / "mean.csv", tmp_path / "mean.json"
    code = main(["metric", "--metric", "mean-exposure-ul", "-o", str(out), "--manifest", str(sidecar)])
    assert code == EXIT_OK
    first_line, _, _ = read_csv(out)
    manifest = RunManifest.model_validate_json(sidecar.read_text(encoding="utf-8"))
    assert first_line.endswith(f"manifest={manifest.digest()}")
    assert manifest.command == "metric"
    assert manifest.versions["emf_sg"]


def test_unknown_metric_is_usage_error(tmp_path):
    assert main(["metric", "--metric", "nonsense", "-o", str(tmp_path / "x.csv")]) == EXIT_USAGE


def test_missing_argument_is_usage_error():
    assert main(["metric"]) == EXIT_USAGE
    assert main(["frobnicate"]) == EXIT_USAGE


def test_bad_config_is_usage_error(tmp_path):
    config = tmp_path / "bad.toml"
    config.write_text("[network]\nalpha = 1.8\n", encoding="utf-8")
    code = main(["metric", "--metric", "mean-exposure-dl", "--config", str(config),
                 "-o", str(tmp_path / "x.csv")])
    assert code == EXIT_USAGE


def test_sweep_rejects_reversed_decades(tmp_path):
    code = main(["sweep", "--scenario", "a", "--metric", "mean-exposure-dl", "--decades", "3:1",
                 "-o", str(tmp_path / "x.csv")])
    assert code == EXIT_USAGE


def test_sweep_writes_optimum(tmp_path):
    out = tmp_path / "sweep.csv"
    code = main(["sweep", "--scenario", "a", "--metric", "mean-exposure-dl", "--decades", "0:1",
                 "-o", str(out)])
    assert code == EXIT_OK
    _, header, rows = read_csv(out)
    assert header == "axis,value,half_width,branch,clamped"
    assert rows[-1].startswith("#optimum,")
    # 20 points per decade, both ends included
    assert len(rows) == 22


def test_simulate_and_registry(tmp_path, small_config):
    out = tmp_path / "samples.csv"
    registry = f"sqlite:///{tmp_path / 'runs.db'}"
    code = main(["simulate", "--config", small_config, "--registry", registry, "--threads", "2",
                 "-o", str(out)])
    assert code == EXIT_OK
    first_line, header, rows = read_csv(out)
    assert header == "realization_id,sinr_ul,sinr_dl,exp_ul_w,exp_dl_w,r0_m"
    assert len(rows) == 8
    digest = first_line.rsplit("=", 1)[1]

    listing = tmp_path / "runs.csv"
    assert main(["runs", "--registry", registry, "-o", str(listing)]) == EXIT_OK
    lines = listing.read_text(encoding="utf-8").splitlines()
    assert len(lines) == 2
    assert digest in lines[1]
    assert str(out) in lines[1]


def test_simulate_independent_of_threads(tmp_path, small_config):
    one, four = tmp_path / "one.csv", tmp_path / "four.csv"
    assert main(["simulate", "--config", small_config, "--threads", "1", "-o", str(one)]) == EXIT_OK
    assert main(["simulate", "--config", small_config, "--threads", "4", "-o", str(four)]) == EXIT_OK
    assert one.read_bytes() == four.read_bytes()


def test_runs_without_registry_is_usage_error(monkeypatch):
    monkeypatch.delenv("EMF_SG_REGISTRY_URL", raising=False)
    assert main(["runs"]) == EXIT_USAGE


def test_dump_realization(tmp_path, small_config):
    out = tmp_path / "net.csv"
    assert main(["dump-realization", "--config", small_config, "--seed", "4", "-o", str(out)]) == EXIT_OK
    _, header, rows = read_csv(out)
    assert header == "kind,x_m,y_m,serving_bs,selected"
    kinds = {r.split(",")[0] for r in rows}
    assert kinds == {"bs", "ue"}
    # BS 0 at the origin is always active
    assert rows[0] == "bs,0,0,0,1"


def test_validate_needs_enough_realizations(tmp_path, small_config):
    code = main(["validate", "--config", small_config, "--n", "10", "-o", str(tmp_path / "v.csv")])
    assert code == EXIT_USAGE


def test_mean_comparison_widens_with_mc_band():
    row = _compare_mean("mean-exposure-ul", 10.0, 1.0, 1.08, 0.0, 0.05)
    assert row[0] == "mean-exposure-ul"
    assert float(row[5]) == pytest.approx(0.08)
    assert row[-1] == "fail"
    assert _compare_mean("mean-exposure-ul", 10.0, 1.0, 1.08, 0.04, 0.05)[-1] == "pass"


def test_ul_mean_cap_mass_flag(tmp_path):
    def ul_mean(cap_mass):
        out = tmp_path / f"{cap_mass}.csv"
        assert main(["metric", "--metric", "mean-exposure-ul", "--cap-mass", cap_mass, "-o", str(out)]) == EXIT_OK
        return float(read_csv(out)[2][0].split(",")[1])

    assert ul_mean("inner") != pytest.approx(ul_mean("outer"), rel=1e-3)
    assert main(["metric", "--metric", "mean-exposure-ul", "--cap-mass", "middle"]) == EXIT_USAGE


CAPPED_CONFIG = """
[network]
lambda_b_per_km2 = 10.0
lambda_u_per_km2 = 100.0
tau_m = 2000.0
r_e_m = 10.0
epsilon = 0.0
p_u_0_dbm = 30.0

[mc]
n = 10000
seed = 5
"""


@pytest.mark.slow
def test_validate_passes_at_working_tolerance(tmp_path):
    config = tmp_path / "capped.toml"
    config.write_text(CAPPED_CONFIG, encoding="utf-8")
    out = tmp_path / "v.csv"
    code = main(["validate", "--config", str(config), "--tolerance", "0.06", "--mean-tolerance", "0.2",
                 "-o", str(out)])
    _, header, rows = read_csv(out)
    assert header == "metric,axis,analytic,mc,mc_half_width,gap,result"
    names = {r.split(",")[0] for r in rows}
    assert {"mean-exposure-ul", "mean-exposure-dl", "mean-exposure-total"} <= names
    assert {"cdf-exposure-dl", "coverage-ul", "coverage-dl"} <= names
    assert [r for r in rows if not r.endswith(",pass")] == []
    assert code == EXIT_OK


if __name__ == "__main__":
    pytest.main([__file__])
