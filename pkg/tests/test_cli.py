import json
import shutil
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from cascade_lab import io
from cascade_lab.cli import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, build_parser, main
from cascade_lab.config import ConfigError, parse_config, validate_config

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


@pytest.fixture
def workdir(tmp_path):
    """Copy of the sample configs whose outputs land under tmp_path."""
    for item in CONFIGS.iterdir():
        if item.is_file():
            shutil.copy(item, tmp_path / item.name)
    return tmp_path


def write_config(directory, name, data):
    path = directory / name
    path.write_text(json.dumps(data))
    return path


def edit_config(workdir, mode, **changes):
    data = json.loads((workdir / f"{mode}.json").read_text())
    data.update(changes)
    data = {k: v for k, v in data.items() if v is not None}
    return write_config(workdir, f"{mode}_edited.json", data)


class TestParseConfig:
    def test_minimal_trace(self, workdir):
        cfg = parse_config(workdir / "trace.json")
        assert cfg.mode == "trace"
        assert cfg.get("model") == "constant-in"
        assert cfg.get("network") == workdir / "path3.edges"
        assert cfg.output == workdir / "out/trace"

    def test_illegal_model_names_field(self, workdir):
        path = edit_config(workdir, "trace", model="constant-sideways")
        with pytest.raises(ConfigError) as exc:
            parse_config(path)
        assert exc.value.field == "model"
        assert "constant-sideways" in str(exc.value)

    def test_zero_sigma(self):
        raw = {"version": 1, "mode": "phase", "output": "o", "method": "mf1",
               "mu": [0.1], "sigma": [0.0, 0.1]}
        with pytest.raises(ConfigError) as exc:
            validate_config(raw)
        assert exc.value.field == "sigma"

    def test_unknown_field(self, workdir):
        with pytest.raises(ConfigError, match="colour"):
            parse_config(edit_config(workdir, "trace", colour="red"))

    def test_missing_field(self, workdir):
        with pytest.raises(ConfigError) as exc:
            parse_config(edit_config(workdir, "trace", nodes=None))
        assert exc.value.field == "nodes"

    def test_wrong_version(self, workdir):
        with pytest.raises(ConfigError) as exc:
            parse_config(edit_config(workdir, "trace", version=2))
        assert exc.value.field == "version"

    def test_grid_forms(self):
        base = {"version": 1, "mode": "phase", "output": "o", "method": "mf1"}
        cfg = validate_config({**base, "mu": [0.1, 0.2], "sigma": {"start": 0.1, "stop": 1, "num": 10}})
        assert len(cfg.get("sigma")) == 10 and cfg.get("sigma")[-1] == 1.0

    def test_mf2_rejects_other_classes(self):
        raw = {"version": 1, "mode": "phase", "output": "o", "method": "mf2", "class": "iii",
               "mu": [0.1], "sigma": [0.1]}
        with pytest.raises(ConfigError) as exc:
            validate_config(raw)
        assert exc.value.field == "class"

    def test_stochastic_rejects_llss(self, workdir):
        with pytest.raises(ConfigError) as exc:
            parse_config(edit_config(workdir, "stochastic", model="overload-llss"))
        assert exc.value.field == "model"

    def test_invalid_json_reports_line(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{\n "version": 1,\n}')
        with pytest.raises(ConfigError, match="line 3"):
            parse_config(path)

    def test_seed_needed_for_seeded_modes(self, workdir):
        cfg = parse_config(edit_config(workdir, "vm", seed=None))
        with pytest.raises(ConfigError) as exc:
            cfg.with_overrides()
        assert exc.value.field == "seed"
        assert cfg.with_overrides(seed=3).seed == 3


def run(args):
    return main([str(a) for a in args])


class TestExitCodes:
    def test_missing_config(self, tmp_path, capsys):
        assert run(["trace", "--config", tmp_path / "none.json"]) == EXIT_CONFIG
        assert "cannot read" in capsys.readouterr().err

    def test_bad_config(self, workdir, capsys):
        path = edit_config(workdir, "trace", model="constant-sideways")
        assert run(["trace", "--config", path]) == EXIT_CONFIG
        assert "'model'" in capsys.readouterr().err

    def test_mode_mismatch(self, workdir):
        assert run(["phase", "--config", workdir / "trace.json"]) == EXIT_CONFIG

    def test_bad_input_file(self, workdir, capsys):
        (workdir / "path3.edges").write_text("n 3 undirected\n0 7 1\n")
        assert run(["trace", "--config", workdir / "trace.json"]) == EXIT_CONFIG
        assert "path3.edges:2:" in capsys.readouterr().err

    def test_bad_financial_system(self, workdir, capsys):
        (workdir / "two_firms.json").write_text(json.dumps(
            {"n": 2, "x0": [2, 1], "A": [[0, 0.5], [1, 0]], "theta": [0, 0]}))
        assert run(["clearing", "--config", workdir / "clearing.json"]) == EXIT_CONFIG
        assert "row 0" in capsys.readouterr().err

    def test_runtime_failure(self, workdir, capsys):
        path = edit_config(workdir, "trace", max_steps=1)
        assert run(["trace", "--config", path]) == EXIT_RUNTIME
        assert "CascadeDidNotTerminate" in capsys.readouterr().err

    def test_missing_seed(self, workdir):
        path = edit_config(workdir, "vm", seed=None)
        assert run(["vm", "--config", path]) == EXIT_CONFIG
        assert run(["vm", "--config", path, "--seed", 1, "--replicas", 10]) == EXIT_OK

    def test_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            build_parser().parse_args(["trace"])
        assert exc.value.code == 2


class TestModes:
    def test_trace_path_graph(self, workdir):
        assert run(["trace", "--config", workdir / "trace.json"]) == EXIT_OK
        data = json.loads((workdir / "out/trace/trace.json").read_text())
        assert data["schema_version"] == 1 and data["converged"]
        assert [step["s"] for step in data["steps"]] == [
            [0, 0, 0], [1, 0, 0], [1, 1, 0], [1, 1, 1]]
        assert data["steps"][2]["phi"] == [1.0, 0.5, 1.0]
        assert data["terminated_at"] == 3

    def test_phase_grid(self, workdir):
        path = edit_config(workdir, "phase", mu={"start": 0, "stop": 1, "num": 50},
                           sigma={"start": 0.02, "stop": 1, "num": 50})
        assert run(["phase", "--config", path]) == EXIT_OK
        rows = io.read_phase_csv(workdir / "out/phase/phase.csv")
        assert rows.shape == (2500, 4)
        assert np.all((rows[:, 3] >= rows[:, 2] - 1e-12) & (rows[:, 3] <= 1))
        meta = json.loads((workdir / "out/phase/phase.json").read_text())
        assert meta["mu"]["count"] == 50 and meta["method"] == "mf1"

    def test_clearing(self, workdir):
        assert run(["clearing", "--config", workdir / "clearing.json"]) == EXIT_OK
        data = json.loads((workdir / "out/clearing/clearing.json").read_text())
        assert data["defaults"] == [0]
        assert data["x_star"] == [1.0, 1.0]

    def test_sis(self, workdir):
        assert run(["sis", "--config", workdir / "sis.json"]) == EXIT_OK
        data = json.loads((workdir / "out/sis/sis_summary.json").read_text())
        assert data["converged_x"] == pytest.approx(data["predicted_fixed_point"], abs=1e-9)

    def test_vm(self, workdir):
        assert run(["vm", "--config", workdir / "vm.json", "--replicas", 300]) == EXIT_OK
        data = json.loads((workdir / "out/vm/vm_summary.json").read_text())
        assert data["replicas"] == 300 and data["unresolved"] == 0
        assert data["consensus_one"] + data["consensus_zero"] == pytest.approx(1.0)

    def test_stochastic_alias(self, workdir):
        assert run(["stochastic-cascade", "--config", workdir / "stochastic.json",
                    "--replicas", 5]) == EXIT_OK
        data = json.loads((workdir / "out/stochastic/stochastic_summary.json").read_text())
        assert data["replicas"] == 5 and len(data["final_x"]) == 5

    def test_out_override(self, workdir, tmp_path):
        target = tmp_path / "elsewhere"
        assert run(["clearing", "--config", workdir / "clearing.json", "--out", target]) == EXIT_OK
        assert (target / "clearing.json").exists()

    def test_verbose_flag_either_side(self, workdir):
        assert run(["-v", "clearing", "--config", workdir / "clearing.json"]) == EXIT_OK
        assert run(["clearing", "--config", workdir / "clearing.json", "-v"]) == EXIT_OK


def outputs(directory):
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir())}


class TestReproducibility:
    @pytest.mark.parametrize("mode, extra", [
        ("vm", ["--replicas", 600]),
        ("stochastic", ["--replicas", 20]),
    ])
    def test_rerun_is_byte_identical(self, workdir, mode, extra):
        first, second = workdir / "a", workdir / "b"
        cfg = workdir / f"{mode}.json"
        assert run([mode, "--config", cfg, "--out", first, *extra]) == EXIT_OK
        assert run([mode, "--config", cfg, "--out", second, *extra]) == EXIT_OK
        assert outputs(first) == outputs(second)

    @pytest.mark.parametrize("mode, extra", [
        ("vm", ["--replicas", 600]),
        ("stochastic", ["--replicas", 20]),
    ])
    def test_threads_do_not_change_results(self, workdir, mode, extra):
        cfg = workdir / f"{mode}.json"
        assert run([mode, "--config", cfg, "--out", workdir / "t1", "--threads", 1, *extra]) == 0
        assert run([mode, "--config", cfg, "--out", workdir / "t4", "--threads", 4, *extra]) == 0
        assert outputs(workdir / "t1") == outputs(workdir / "t4")

    def test_seed_changes_results(self, workdir):
        cfg = workdir / "vm.json"
        run(["vm", "--config", cfg, "--out", workdir / "s1", "--replicas", 300, "--seed", 1])
        run(["vm", "--config", cfg, "--out", workdir / "s2", "--replicas", 300, "--seed", 2])
        assert outputs(workdir / "s1") != outputs(workdir / "s2")

    def test_phase_threads(self, workdir):
        path = edit_config(workdir, "phase", mu=[0.1, 0.2, 0.5], sigma=[0.1, 0.4, 0.9])
        run(["phase", "--config", path, "--out", workdir / "p1", "--threads", 1])
        run(["phase", "--config", path, "--out", workdir / "p3", "--threads", 3])
        assert outputs(workdir / "p1") == outputs(workdir / "p3")


def test_module_entry_point(workdir):
    proc = subprocess.run([sys.executable, "-m", "cascade_lab", "clearing", "--config",
                           str(workdir / "clearing.json")], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (workdir / "out/clearing/clearing.json").exists()


def test_module_entry_point_exit_code(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "cascade_lab", "trace", "--config",
                           str(tmp_path / "missing.json")], capture_output=True, text=True)
    assert proc.returncode == 2
