"""
End-to-end checks: the CLI driven the way a user drives it, files in and reports out.
"""
import math

import numpy as np
import pandas as pd
import pytest
from click.testing import CliRunner

from cli_bench import cli, main
from reporter import read_report


class TestSystem:
    """Simulate, segment, benchmark and worst-case flows through the public entry point"""

    def test_simulate_then_segment(self, tmp_path):
        series = tmp_path / "series.csv"
        report = tmp_path / "report.jsonl"
        assert main(["simulate", "-m", "gauss", "--n", "300", "-k", "100", "--params", "0,3", "--seed", "2",
                     "-o", str(series)]) == 0
        assert main(["segment", "-i", str(series), "-p", "log:2", "-o", str(report)]) == 0

        record = read_report(str(report))[1]
        assert record["n"] == 300
        assert record["changepoints"][-1] == 300
        assert any(abs(c - 100) <= 3 for c in record["changepoints"])
        assert any(abs(c - 200) <= 3 for c in record["changepoints"])
        assert record["remaining_candidates"] < 300

    def test_pruning_modes_agree_through_cli(self, tmp_path):
        series = tmp_path / "counts.csv"
        assert main(["simulate", "-m", "poisson", "--n", "200", "-k", "50", "-o", str(series)]) == 0
        reports = {}
        for pruning in ("none", "pelt", "dust"):
            path = tmp_path / f"{pruning}.jsonl"
            assert main(["segment", "-i", str(series), "-m", "poisson", "--scale-table", "--pruning", pruning,
                         "--no-timing", "-o", str(path)]) == 0
            reports[pruning] = read_report(str(path))[1]
        assert reports["none"]["changepoints"] == reports["pelt"]["changepoints"] == reports["dust"]["changepoints"]
        assert reports["none"]["global_cost"] == pytest.approx(reports["dust"]["global_cost"])
        assert reports["dust"]["remaining_candidates"] <= reports["pelt"]["remaining_candidates"]

    def test_meanvar_two_constraints(self, tmp_path):
        series = tmp_path / "mv.csv"
        assert main(["simulate", "-m", "meanvar", "--n", "200", "-k", "100", "-o", str(series)]) == 0
        report = tmp_path / "mv.jsonl"
        assert main(["segment", "-i", str(series), "-m", "meanvar", "-s", "meanvar", "--constraints", "2",
                     "-p", "log:4", "-o", str(report)]) == 0
        header, record = read_report(str(report))
        assert header["config"]["constraints"] == 2
        assert record["strategy"] == "meanvar"

    def test_bench_length_sweep(self, tmp_path):
        report = tmp_path / "bench.jsonl"
        raw = tmp_path / "bench.csv"
        code = main(["bench", "-r", "2", "--lengths", "50:200:3", "-s", "op", "-s", "exact1d", "-s", "pelt",
                     "--fit", "--csv", str(raw), "-o", str(report)])
        assert code == 0

        lines = read_report(str(report))
        records = [line for line in lines if line["kind"] == "record"]
        assert len(records) == 18
        assert sum(line["kind"] == "summary" for line in lines) == 9
        assert sum(line["kind"] == "fit" for line in lines) == 3
        for record in records:
            assert record["error"] is None
            if record["strategy"] == "op":
                assert record["remaining_candidates"] == record["n"]

        frame = pd.read_csv(raw)
        assert len(frame) == 18
        assert set(frame["strategy"]) == {"op", "exact1d", "pelt"}

        fits = {line["strategy"]: line["slope"] for line in lines if line["kind"] == "fit"}
        assert fits["op"] == pytest.approx(1.0, abs=1e-9)

    def test_worstcase_then_segment(self, tmp_path):
        n = 120
        series = tmp_path / "worst.csv"
        report = tmp_path / "worst.jsonl"
        beta = 2.0 * math.log(n)
        assert main(["worstcase", "--n", str(n), "-p", f"abs:{beta!r}", "-o", str(series)]) == 0
        assert main(["segment", "-i", str(series), "-p", f"abs:{beta!r}", "-o", str(report)]) == 0
        assert read_report(str(report))[1]["remaining_candidates"] == n

    def test_poisson_worstcase_rounded(self, tmp_path):
        series = tmp_path / "rounded.csv"
        assert main(["worstcase", "-m", "poisson", "--n", "50", "--mean", "10", "-p", "abs:5", "--rounded",
                     "-o", str(series)]) == 0
        values = pd.read_csv(series, header=None).to_numpy().ravel()
        assert np.all(values == np.round(values))
        assert np.all(np.diff(values) >= 0)

    def test_cli_runner_help_and_stdout(self):
        runner = CliRunner()
        result = runner.invoke(cli, ["--help"])
        assert result.exit_code == 0
        for command in ("segment", "simulate", "worstcase", "bench"):
            assert command in result.output

        result = runner.invoke(cli, ["simulate", "--n", "5", "-m", "bernoulli", "--header"])
        assert result.exit_code == 0
        rows = result.stdout.strip().splitlines()
        assert rows[0] == "c0"
        assert len(rows) == 6

    def test_stdin_input(self):
        runner = CliRunner()
        result = runner.invoke(cli, ["segment", "-i", "-", "--no-timing"], input="1\n1\n1\n9\n9\n9\n")
        assert result.exit_code == 0
        record = [line for line in result.stdout.splitlines() if '"record"' in line]
        assert '"changepoints": [3, 6]' in record[0]
