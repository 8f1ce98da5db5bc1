import csv
import json
import subprocess
import sys

import pytest

from microgrid_ems import cli
from microgrid_ems import sim as sim_mod
from microgrid_ems.config import dump_toml, settings_from_dict
from microgrid_ems.forecast import ingest_csv
from microgrid_ems.milp import export_model_text, import_model_text
from microgrid_ems.uc import expected_p0_counts
from microgrid_ems.model import default_config

REPORT_FILES = ("slots.csv", "summary.txt", "generation_stack.csv", "hourly_cost.csv")


def _without_wall_time(path):
    rows = [line.split("\t") for line in path.read_text().splitlines()]
    col = rows[0].index("wall_time")
    return [r[:col] + r[col + 1:] for r in rows]


@pytest.fixture(scope="module")
def run_dirs(tmp_path_factory):
    """Two identical 24-slot runs plus a one-stage run on the same seed."""
    base = tmp_path_factory.mktemp("runs")
    codes = {}
    for name, extra in (("a", []), ("b", []), ("one", ["--mode", "one-stage"])):
        codes[name] = cli.main(["run", "--horizon", "24", "--seed", "2",
                                "--out", str(base / name), *extra])
    return base, codes


class TestGenerateTraces:
    def test_week_is_deterministic(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        assert cli.main(["generate-traces", "--horizon", "168", "--seed", "7", "--out", str(a)]) == 0
        assert cli.main(["generate-traces", "--horizon", "168", "--seed", "7", "--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()
        rows = list(csv.DictReader(a.open()))
        assert len(rows) == 168
        assert max(float(r["p_rg_kw"]) for r in rows) == 1200.0

    def test_short_horizon_is_trace_error(self, tmp_path, capsys):
        code = cli.main(["generate-traces", "--horizon", "23", "--out", str(tmp_path / "t.csv")])
        assert code == cli.EXIT_TRACE
        assert "trace error" in capsys.readouterr().err

    def test_with_forecasts_ingests(self, tmp_path):
        path = tmp_path / "f.csv"
        cli.main(["generate-traces", "--horizon", "24", "--with-forecasts", "--out", str(path)])
        assert ingest_csv(path).hour_ahead is not None

    def test_unwritable_output_is_io_error(self, tmp_path):
        assert cli.main(["generate-traces", "--horizon", "24", "--out", str(tmp_path)]) == cli.EXIT_IO


class TestRun:
    def test_clean_run_writes_everything(self, run_dirs):
        base, codes = run_dirs
        assert codes == {"a": 0, "b": 0, "one": 0}
        for name in REPORT_FILES + ("decisions.tsv", "manifest.json"):
            assert (base / "a" / name).stat().st_size > 0
        summary = (base / "a" / "summary.txt").read_text()
        for key in ("total cost:", "shortage %:", "Q_T:"):
            assert key in summary
        assert len((base / "a" / "slots.csv").read_text().splitlines()) == 25

    def test_identical_runs_identical_bytes(self, run_dirs):
        base, _ = run_dirs
        for name in REPORT_FILES:
            assert (base / "a" / name).read_bytes() == (base / "b" / name).read_bytes(), name
        # the dispatch log carries per-slot solve times; everything else must match
        a, b = (_without_wall_time(base / k / "decisions.tsv") for k in "ab")
        assert a == b and len(a) == 25

    def test_manifest_determines_rerun(self, run_dirs):
        base, _ = run_dirs
        ma = json.loads((base / "a" / "manifest.json").read_text())
        mb = json.loads((base / "b" / "manifest.json").read_text())
        volatile = ("started", "finished", "output_dir", "argv", "timings_s")
        assert {k: v for k, v in ma.items() if k not in volatile} == \
               {k: v for k, v in mb.items() if k not in volatile}
        assert ma["seeds"] == [2] and ma["scenarios"][0]["mode"] == "two-stage"
        # the stored config alone rebuilds the settings
        settings = settings_from_dict(ma["config"])
        assert settings_from_dict(ma["config"]) == settings_from_dict(
            json.loads(json.dumps(ma["config"])))
        assert settings.microgrid == default_config()

    def test_paired_one_stage_summary(self, run_dirs):
        base, _ = run_dirs
        one = (base / "one" / "summary.txt").read_text()
        assert one.startswith("scenario: one-stage-only rho=1 seed=2")
        assert "decision" not in one

    def test_config_error_exit(self, tmp_path, capsys):
        code = cli.main(["run", "--horizon", "24", "--alpha-avg", "0.5", "--out", str(tmp_path)])
        assert code == cli.EXIT_CONFIG
        assert "config error" in capsys.readouterr().err

    def test_bad_trace_file_exit(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("slot_index,d_ie_kw,d_e_kw,p_rg_kw\n0,100,50,-3\n")
        code = cli.main(["run", "--horizon", "24", "--traces", str(bad), "--out", str(tmp_path)])
        assert code == cli.EXIT_TRACE

    def test_short_trace_file_exit(self, tmp_path):
        path = tmp_path / "t.csv"
        cli.main(["generate-traces", "--horizon", "24", "--out", str(path)])
        code = cli.main(["run", "--horizon", "48", "--traces", str(path), "--out", str(tmp_path)])
        assert code == cli.EXIT_TRACE

    def test_solver_failure_exit(self, tmp_path, capsys):
        # an emission cap this small leaves the day-ahead problem infeasible
        cfg = tmp_path / "c.toml"
        cfg.write_text("[qos]\nemission_cap = 10.0\n")
        code = cli.main(["run", "--horizon", "24", "--config", str(cfg),
                         "--out", str(tmp_path / "o")])
        assert code == cli.EXIT_SOLVER
        assert "infeasible" in capsys.readouterr().err

    def test_hard_violation_exit(self, tmp_path, monkeypatch):
        real = sim_mod.hard_violations

        def doctored(dec, t, *args, **kwargs):
            out = real(dec, t, *args, **kwargs)
            return out + [{"slot": t, "kind": "ramp", "detail": "injected"}] if t == 3 else out

        monkeypatch.setattr(sim_mod, "hard_violations", doctored)
        code = cli.main(["run", "--horizon", "24", "--out", str(tmp_path)])
        assert code == cli.EXIT_INVARIANT
        assert "violations: 1" in (tmp_path / "summary.txt").read_text()

    def test_argparse_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            cli.main(["run", "--mode", "three-stage", "--out", "x"])
        assert exc.value.code == cli.EXIT_USAGE


class TestExportModel:
    def test_p0_tally(self, tmp_path, capsys):
        path = tmp_path / "p0.txt"
        assert cli.main(["export-model", "--which", "p0", "--horizon", "24",
                         "--out", str(path)]) == 0
        model = import_model_text(path.read_text())
        nb, nc = expected_p0_counts(default_config(), 24)
        assert len(model.binaries) == nb and model.num_vars == nb + nc
        assert f"tally: {nb} binaries" in capsys.readouterr().out

    def test_p1_round_trip(self, tmp_path):
        path = tmp_path / "p1.txt"
        assert cli.main(["export-model", "--which", "p1", "--slot", "0", "--horizon", "24",
                         "--out", str(path)]) == 0
        text = path.read_text()
        model = import_model_text(text)
        assert export_model_text(model) == text
        assert len(model.binaries) == 2

    def test_p1_deterministic(self, tmp_path):
        paths = [tmp_path / f"{k}.txt" for k in "ab"]
        for p in paths:
            cli.main(["export-model", "--which", "p1", "--slot", "5", "--horizon", "24",
                      "--out", str(p)])
        assert paths[0].read_bytes() == paths[1].read_bytes()

    @pytest.mark.parametrize("argv", [["--which", "p2"], ["--which", "p0", "--day", "1"],
                                      ["--which", "p1", "--slot", "24"]])
    def test_usage_errors(self, tmp_path, argv):
        code = cli.main(["export-model", "--horizon", "24", *argv, "--out", str(tmp_path / "m")])
        assert code == cli.EXIT_USAGE


class TestValidateConfig:
    def test_default(self, capsys):
        assert cli.main(["validate-config"]) == 0
        assert capsys.readouterr().out.startswith("ok: 3 CGs, 2 ESSs")

    def test_file(self, tmp_path):
        path = tmp_path / "c.toml"
        path.write_text(dump_toml(settings_from_dict({"qos": {"alpha_avg": 0.2}})))
        assert cli.main(["validate-config", "--config", str(path)]) == 0

    def test_unknown_key(self, tmp_path):
        path = tmp_path / "c.toml"
        path.write_text("[qos]\nalpha = 0.2\n")
        assert cli.main(["validate-config", "--config", str(path)]) == cli.EXIT_CONFIG

    def test_missing_file(self, tmp_path):
        code = cli.main(["validate-config", "--config", str(tmp_path / "nope.toml")])
        assert code == cli.EXIT_CONFIG


def test_sweep_rho(tmp_path):
    code = cli.main(["sweep-rho", "--horizon", "24", "--rhos", "0,1", "--out", str(tmp_path)])
    assert code == 0
    lines = (tmp_path / "sweep.csv").read_text().splitlines()
    assert lines[0] == "rho,total_cost[two-stage],total_cost[one-stage-only]"
    assert len(lines) == 3
    assert (tmp_path / "cumulative_differences.csv").exists()
    assert len(json.loads((tmp_path / "manifest.json").read_text())["scenarios"]) == 4


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "microgrid_ems", "validate-config"],
                         capture_output=True, text=True, check=False)
    assert res.returncode == 0 and res.stdout.startswith("ok:")
