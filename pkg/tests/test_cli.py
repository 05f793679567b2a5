import json

import pytest

from samknn.cli import main
from samknn.synth import read_sidecar, read_stream


@pytest.fixture(scope="module")
def stream_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "s.csv"
    assert main(["generate", str(path), "--kind", "stuck_zero", "--sensor", "1", "--onset", "1500",
                 "--end", "1600", "--n-sensors", "5", "--duration", "2000", "--seed", "3"]) == 0
    return path


class TestGenerate:
    def test_writes_stream_and_sidecar(self, stream_csv):
        t, x = read_stream(stream_csv)
        assert x.shape == (2000, 5)
        meta = read_sidecar(stream_csv.with_suffix(".scenario"))
        assert meta["anomaly_kind"] == "stuck_zero" and meta["onset"] == "1500" and meta["end"] == "1600"

    def test_builtin(self, tmp_path):
        assert main(["generate", str(tmp_path / "o.csv"), "--scenario", "overflow"]) == 0
        assert read_sidecar(tmp_path / "o.scenario")["anomaly_kind"] == "overflow"

    def test_invalid_spec_exits_nonzero(self, tmp_path, capsys):
        assert main(["generate", str(tmp_path / "x.csv"), "--kind", "leak", "--sensor", "99"]) != 0
        assert "error" in capsys.readouterr().err

    def test_unwritable(self, tmp_path):
        assert main(["generate", str(tmp_path / "missing" / "x.csv")]) != 0


class TestRun:
    def test_report(self, stream_csv, tmp_path, capsys):
        out = tmp_path / "r"
        assert main(["run", "--input", str(stream_csv), "--method", "knn", "--output", str(out)]) == 0
        assert "tp" in capsys.readouterr().out
        assert (out / "report.csv").read_text().splitlines()[1].startswith("knn,s,1,")

    def test_config_file_and_override(self, stream_csv, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"inputs": [str(stream_csv)], "method": "linear", "window": 300}))
        out = tmp_path / "r"
        assert main(["run", "--config", str(cfg), "--method", "knn", "--output", str(out)]) == 0
        saved = json.loads((out / "config.json").read_text())
        assert saved["method"] == "knn" and saved["window"] == 300

    def test_twice_is_byte_identical(self, stream_csv, tmp_path):
        for name in ("a", "b"):
            assert main(["run", "--input", str(stream_csv), "--output", str(tmp_path / name), "--log-all"]) == 0
        for f in ("report.csv", "report.txt", "alarms_s.csv", "config.json"):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()

    def test_missing_input(self, capsys):
        assert main(["run", "--input", "nope.csv"]) != 0
        assert "nope.csv" in capsys.readouterr().err

    def test_bad_config_json(self, tmp_path, capsys):
        (tmp_path / "bad.json").write_text("{")
        assert main(["run", "--config", str(tmp_path / "bad.json")]) != 0
        assert "bad.json" in capsys.readouterr().err

    def test_unknown_config_key(self, tmp_path):
        (tmp_path / "k.json").write_text('{"colour": 1}')
        assert main(["run", "--config", str(tmp_path / "k.json")]) != 0


class TestCompareAndBench:
    def test_compare_methods(self, stream_csv, tmp_path, capsys):
        assert main(["compare", "--methods", "sam", "knn", "--input", str(stream_csv), "--out", str(tmp_path)]) == 0
        rows = (tmp_path / "comparison.csv").read_text().splitlines()
        assert [r.split(",")[0] for r in rows[1:]] == ["sam", "knn"]

    def test_compare_needs_something(self):
        assert main(["compare"]) != 0

    def test_bench_reports_rate(self, stream_csv, capsys):
        assert main(["bench", "--scenario", str(stream_csv), "--method", "knn"]) == 0
        out = capsys.readouterr().out
        assert "steps_per_second=" in out and "steps=1997" in out

    def test_bench_sensor_out_of_range(self, stream_csv):
        assert main(["bench", "--scenario", str(stream_csv), "--sensor", "9"]) != 0
