import json
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import pytest

from app.core.errors import UsageError
from app.main import EXIT_INVALID, EXIT_OK, EXIT_RUNTIME, main, parse_seed_range, resolve_scenario_path
from app.services import run_store
from app.services.scenario_io import canonical_dict, parse_scenario

SHORT = """
[game]
name = "quadratic-separable"

[[game.clusters]]
bounds = [[0.0, 2.0], [0.0, 2.0]]
target = [1.5, 0.5]

[[game.clusters]]
bounds = [[-1.0, 1.0], [-1.0, 1.0], [-1.0, 1.0]]
target = [0.2, -0.3, 0.0]

[[graphs]]
preset = "complete"

[[graphs]]
preset = "path"

[schedule]
alpha0 = 1.0
sigma0 = 0.5
a = 1.0
b = {b}

[run]
iterations = 200
seeds = [1, 2]
record_every = 50
"""


@pytest.fixture
def short_toml(tmp_path):
    path = tmp_path / "short.toml"
    path.write_text(SHORT.format(b="0.3333333333333333"))
    return path


def test_validate_bundled_scenario_by_name(capsys):
    assert main(["validate", "cournot.toml"]) == EXIT_OK
    out = capsys.readouterr().out.splitlines()
    assert out[0].startswith("ok ") and len(out[0].split()[1]) == 64
    assert "clusters=[4, 4]" in out[1]


def test_validate_canonical_prints_toml(capsys, cournot_toml):
    assert main(["validate", "cournot", "--canonical"]) == EXIT_OK
    printed = tomllib.loads(capsys.readouterr().out)
    assert printed == canonical_dict(parse_scenario(cournot_toml))


def test_validate_rejects_bad_schedule(tmp_path, capsys):
    path = tmp_path / "bad.toml"
    path.write_text(SHORT.format(b="1.0"))
    assert main(["validate", str(path)]) == EXIT_INVALID
    assert "2a - 2b > 1" in capsys.readouterr().err


def test_missing_file_is_a_runtime_error(tmp_path, capsys):
    assert main(["validate", str(tmp_path / "nowhere.toml")]) == EXIT_RUNTIME
    assert "error:" in capsys.readouterr().err


def test_solve_writes_equilibrium(tmp_path, capsys):
    out = tmp_path / "solve"
    assert main(["solve", "cournot", "--out", str(out)]) == EXIT_OK
    report = json.loads(capsys.readouterr().out)
    assert report["converged"] and report["kkt_ok"]
    cluster2 = report["clusters"][1]
    assert cluster2[0] == pytest.approx(10.0, abs=1e-6)
    assert cluster2[3] == pytest.approx(10.0, abs=1e-6)
    assert json.loads((out / "equilibrium.json").read_text())["point"] == report["point"]


def test_solve_reuses_cached_equilibrium(short_toml, tmp_path, capsys):
    out = tmp_path / "solve"
    assert main(["solve", str(short_toml), "--out", str(out)]) == EXIT_OK
    first = capsys.readouterr().out
    assert (out / "equilibria.db").exists()
    assert main(["solve", str(short_toml), "--out", str(out)]) == EXIT_OK
    assert capsys.readouterr().out == first


def test_run_writes_every_artifact(short_toml, tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["run", str(short_toml), "--seed", "2", "--out", str(out)]) == EXIT_OK
    directory = run_store.seed_directory(out, 2)
    for name in (run_store.TRAJECTORY_FILE, run_store.SUMMARY_FILE, run_store.TIMING_FILE, run_store.PLOT_FILE):
        assert (directory / name).exists()
    printed = json.loads(capsys.readouterr().out)
    assert printed["seed"] == 2 and printed["iterations"] == 200
    assert "wall_clock" not in printed


def test_run_defaults_to_scenario_seeds(short_toml, tmp_path):
    out = tmp_path / "run"
    assert main(["run", str(short_toml), "--out", str(out)]) == EXIT_OK
    assert sorted(p.name for p in out.glob("seed-*")) == ["seed-1", "seed-2"]


def test_run_outputs_are_reproducible(short_toml, tmp_path):
    dirs = [tmp_path / "a", tmp_path / "b"]
    for d in dirs:
        assert main(["run", str(short_toml), "--seed", "1", "--out", str(d)]) == EXIT_OK
    for name in (run_store.TRAJECTORY_FILE, run_store.SUMMARY_FILE):
        a, b = (run_store.seed_directory(d, 1) / name for d in dirs)
        assert a.read_bytes() == b.read_bytes()


def test_sweep_aggregates_seeds(short_toml, tmp_path, capsys):
    out = tmp_path / "sweep"
    assert main(["sweep", str(short_toml), "--seeds", "1..3", "--workers", "1", "--out", str(out)]) == EXIT_OK
    aggregate = json.loads(capsys.readouterr().out)
    assert aggregate["seeds"] == [1, 2, 3]
    per_seed = [run_store.read_run_summary(run_store.seed_directory(out, s)).final_error for s in (1, 2, 3)]
    assert aggregate["final_errors"] == per_seed
    assert aggregate["median_error"] == sorted(per_seed)[1]
    assert (out / "sweep.json").exists()
    assert (out / run_store.PLOT_FILE).exists()


def test_seed_range_parsing():
    assert parse_seed_range("1..4") == [1, 2, 3, 4]
    assert parse_seed_range("7, 3,5") == [7, 3, 5]
    for bad in ("4..1", "a..b", "", "1,x"):
        with pytest.raises(UsageError):
            parse_seed_range(bad)


def test_bad_seed_range_is_an_invalid_argument(short_toml, tmp_path, capsys):
    assert main(["sweep", str(short_toml), "--seeds", "5..1", "--out", str(tmp_path)]) == EXIT_INVALID
    assert "--seeds" in capsys.readouterr().err
    assert not (tmp_path / "sweep.json").exists()


def test_scenario_name_resolution(cournot_toml, tmp_path):
    assert resolve_scenario_path("cournot") == cournot_toml
    assert resolve_scenario_path("cournot.toml") == cournot_toml
    local = tmp_path / "mine.toml"
    local.write_text("")
    assert resolve_scenario_path(str(local)) == local.resolve()


def test_tune_scores_valid_cells_and_rejects_the_rest(short_toml, tmp_path, capsys):
    out = tmp_path / "tune"
    argv = ["tune", str(short_toml), "--alpha0", "0.5,1", "--sigma0", "0.5,2", "--seeds", "1..2",
            "--iterations", "100", "--workers", "1", "--out", str(out)]
    assert main(argv) == EXIT_OK
    summary = json.loads(capsys.readouterr().out)
    assert summary["iterations"] == 100 and summary["seeds"] == [1, 2]
    assert [(c["alpha0"], c["sigma0"]) for c in summary["cells"]] == [(0.5, 0.5), (0.5, 2.0), (1.0, 0.5), (1.0, 2.0)]
    for cell in summary["cells"]:
        if cell["sigma0"] == 2.0:
            assert "sigma-radius" in cell["rejected"]
            assert cell["median_error"] is None and cell["final_errors"] == []
        else:
            assert cell["rejected"] == [] and len(cell["final_errors"]) == 2
            assert cell["median_error"] == pytest.approx(sum(cell["final_errors"]) / 2)
    scored = [c["median_error"] for c in summary["cells"] if c["median_error"] is not None]
    assert summary["best"]["median_error"] == min(scored)
    assert json.loads((out / "tune.json").read_text()) == summary


def test_tune_rejects_a_bad_grid(short_toml, tmp_path, capsys):
    assert main(["tune", str(short_toml), "--alpha0", "1,x", "--out", str(tmp_path)]) == EXIT_INVALID
    assert "invalid number list" in capsys.readouterr().err
    assert not (tmp_path / "tune.json").exists()
