import json
import subprocess
import sys

import powertalk as pt
from powertalk.cli import main


def cli(*args, env_out=None, monkeypatch=None):
    if env_out is not None:
        monkeypatch.setenv("POWERTALK_OUTDIR", str(env_out))
    return main(list(args))


class TestValidate:
    def test_golden_ok(self, capsys):
        assert cli("validate", str(pt.builtin_scenario_path("baseline"))) == 0
        assert "ok" in capsys.readouterr().out

    def test_validation_error_category(self, tmp_path, capsys):
        bad = tmp_path / "bad.yaml"
        bad.write_text(pt.builtin_scenario_path("baseline")
                       .read_text(encoding="utf-8")
                       .replace("type_costs: [5.0, 7.5, 10.0, 50.0]",
                                "type_costs: [5.0, 7.5, 4.0, 50.0]"),
                       encoding="utf-8")
        assert cli("validate", str(bad)) == 1
        err = json.loads(capsys.readouterr().err)
        assert err["error"]["category"] == "validation"

    def test_parse_error_category(self, tmp_path, capsys):
        bad = tmp_path / "broken.yaml"
        bad.write_text("{{nope", encoding="utf-8")
        assert cli("validate", str(bad)) == 1
        err = json.loads(capsys.readouterr().err)
        assert err["error"]["category"] == "parse"


class TestRun:
    def test_writes_trace_and_summary(self, tmp_path, capsys):
        out = tmp_path / "out"
        code = cli("run", str(pt.builtin_scenario_path("baseline")),
                   "--seed", "3", "--out", str(out))
        assert code == 0
        assert (out / "period_trace.csv").exists()
        assert (out / "period_summary.csv").exists()
        trace = pt.read_table(out / "period_trace.csv")
        assert trace.kind == "period_trace"
        assert len(trace.rows) == 40 * 10

    def test_byte_identical_reruns(self, tmp_path):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        scenario = str(pt.builtin_scenario_path("baseline"))
        assert cli("run", scenario, "--seed", "5", "--out", str(out_a)) == 0
        assert cli("run", scenario, "--seed", "5", "--out", str(out_b)) == 0
        for name in ("period_trace.csv", "period_summary.csv"):
            assert (out_a / name).read_bytes() == (out_b / name).read_bytes()

    def test_env_var_output_dir(self, tmp_path, capsys, monkeypatch):
        env_out = tmp_path / "from_env"
        code = cli("run", str(pt.builtin_scenario_path("baseline")),
                   "--seed", "1", env_out=env_out, monkeypatch=monkeypatch)
        assert code == 0
        assert (env_out / "period_trace.csv").exists()


class TestExp:
    def test_quantization_writes_csv_and_plot(self, tmp_path):
        out = tmp_path / "exp"
        code = cli("exp", "quantization",
                   "--scenario", str(pt.builtin_scenario_path("baseline")),
                   "--out", str(out), "--trials", "20", "--seed", "8")
        assert code == 0
        table = pt.read_table(out / "quantization.csv")
        assert table.kind == "quantization"
        assert (out / "quantization.gp").read_text(encoding="utf-8").startswith("#")

    def test_detection_small(self, tmp_path):
        out = tmp_path / "exp"
        code = cli("exp", "detection",
                   "--scenario", str(pt.builtin_scenario_path("baseline")),
                   "--out", str(out), "--trials", "50", "--seed", "8")
        assert code == 0
        assert pt.read_table(out / "detection.csv").kind == "detection"

    def test_console_entry_point(self):
        proc = subprocess.run(
            [sys.executable, "-m", "powertalk.cli", "validate",
             str(pt.builtin_scenario_path("baseline"))],
            capture_output=True, text=True)
        assert proc.returncode == 0
        assert "ok" in proc.stdout
