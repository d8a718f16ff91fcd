import csv
import os

import numpy as np
import pytest

from smcsmooth.cli import main
from smcsmooth.errors import DegenerateWeightsError


def run_cli(*argv):
    return main(list(argv))


@pytest.fixture()
def dataset(tmp_path):
    out = tmp_path / "sim"
    code = run_cli("simulate", "--model", "ar1", "--t", "30",
                   "--seed", "3", "--out", str(out))
    assert code == 0
    return out / "ar1_dataset.csv"


class TestSimulate:
    def test_writes_dataset(self, dataset):
        with open(dataset) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["t", "y", "x"]
        assert len(rows) == 31

    def test_explicit_theta(self, tmp_path):
        out = tmp_path / "sim2"
        code = run_cli("simulate", "--model", "ar1", "--t", "5", "--seed",
                       "0", "--theta", "1,0,0", "--x0", "2.5",
                       "--out", str(out))
        assert code == 0
        with open(out / "ar1_dataset.csv") as fh:
            rows = list(csv.reader(fh))[1:]
        assert all(float(r[1]) == 2.5 for r in rows)

    def test_bad_theta_is_data_error(self, tmp_path):
        code = run_cli("simulate", "--model", "ar1", "--theta", "1,2",
                       "--out", str(tmp_path))
        assert code == 2


class TestFilterSmoothMcmc:
    def test_storvik_filter_outputs(self, dataset, tmp_path):
        out = tmp_path / "filt"
        code = run_cli("filter", "--model", "ar1", "--data", str(dataset),
                       "--algorithm", "storvik", "--n", "300",
                       "--seed", "1", "--out", str(out))
        assert code == 0
        assert (out / "ar1_storvik_history.npz").exists()
        with open(out / "ar1_storvik_summary.csv") as fh:
            header = next(csv.reader(fh))
        assert header[:6] == ["t", "state_mean", "state_sd", "state_q025",
                              "state_q500", "state_q975"]

    def test_bootstrap_needs_valid_theta(self, dataset, tmp_path):
        code = run_cli("filter", "--model", "ar1", "--data", str(dataset),
                       "--algorithm", "bootstrap", "--theta", "oops",
                       "--out", str(tmp_path))
        assert code == 2

    @pytest.mark.parametrize("algorithm", ["pls", "plsa", "refilter",
                                           "refilter_ffbs", "godsill"])
    def test_smoothers_run(self, algorithm, dataset, tmp_path):
        out = tmp_path / algorithm
        code = run_cli("smooth", "--model", "ar1", "--data", str(dataset),
                       "--algorithm", algorithm, "--n", "200", "--n0", "80",
                       "--m0", "40", "--theta", "0.75,1,1",
                       "--seed", "2", "--out", str(out))
        assert code == 0
        with open(out / f"ar1_{algorithm}_smooth.csv") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["t", "mean", "q025", "q500", "q975"]
        assert len(rows) == 31

    def test_mcmc_trace(self, dataset, tmp_path):
        out = tmp_path / "mcmc"
        code = run_cli("mcmc", "--model", "ar1", "--data", str(dataset),
                       "--iterations", "300", "--seed", "4",
                       "--out", str(out))
        assert code == 0
        with open(out / "ar1_mcmc_trace.csv") as fh:
            header = next(csv.reader(fh))
        assert header == ["iteration", "phi", "w", "v"]

    def test_correlate(self, dataset, tmp_path):
        out = tmp_path / "corr"
        code = run_cli("correlate", "--model", "ar1", "--data", str(dataset),
                       "--n", "200", "--seed", "5", "--out", str(out))
        assert code == 0
        assert (out / "ar1_correlation.csv").exists()

    def test_evidence_table(self, dataset, tmp_path, capsys):
        code = run_cli("evidence", "--model", "ar1", "--data", str(dataset),
                       "--n", "200,400", "--mcmc-iterations", "300",
                       "--seed", "6", "--out", str(tmp_path / "ev"))
        assert code == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0] == "method,n,log_marginal"
        assert len(lines) == 4
        methods = {line.split(",")[0] for line in lines[1:]}
        assert methods == {"smc", "harmonic_mean"}


class TestBench:
    def test_runs_config_file(self, tmp_path, capsys):
        cfg = tmp_path / "bench.cfg"
        cfg.write_text(
            "model = ar1\n"
            "t = 20\n"
            "replications = 1\n"
            "seed = 11\n"
            "reference_iterations = 800\n"
            "algorithms = refilter\n"
            "refilter.n = 200\n"
            "refilter.n0 = 80\n"
            "refilter.m0 = 40\n"
        )
        out = tmp_path / "bench_out"
        code = run_cli("bench", "--config", str(cfg), "--out", str(out))
        assert code == 0
        assert (out / "metrics.csv").exists()
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0] == "algorithm,mae_star,maep_star,seconds"

    def test_missing_config_is_data_error(self, tmp_path):
        assert run_cli("bench", "--config", str(tmp_path / "nope.cfg")) == 2


class TestSv:
    def _write_prices(self, path, n=40):
        rng = np.random.default_rng(0)
        prices = 100 * np.exp(np.cumsum(0.01 * rng.standard_normal(n)))
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["date", "price"])
            for i, p in enumerate(prices):
                writer.writerow([f"2020-01-{i + 1:02d}", f"{p:.6f}"])

    def test_pipeline(self, tmp_path):
        prices = tmp_path / "prices.csv"
        self._write_prices(prices)
        out = tmp_path / "sv"
        code = run_cli("sv", "--prices", str(prices), "--n", "300",
                       "--n0", "100", "--m0", "80", "--iterations", "200",
                       "--seed", "7", "--out", str(out))
        assert code == 0
        for name in ("sv_filter.csv", "sv_refilter_smooth.csv",
                     "sv_mcmc_trace.csv", "sv_mcmc_smooth.csv"):
            assert (out / name).exists()

    def test_requires_exactly_one_input(self, tmp_path):
        assert run_cli("sv", "--out", str(tmp_path)) == 2


class TestExitCodes:
    def test_usage_error_is_one(self):
        with pytest.raises(SystemExit) as info:
            run_cli("filter", "--model", "nope", "--data", "x.csv")
        assert info.value.code == 1

    def test_unknown_command_is_one(self):
        with pytest.raises(SystemExit) as info:
            run_cli("frobnicate")
        assert info.value.code == 1

    def test_missing_data_file_is_two(self, tmp_path):
        code = run_cli("filter", "--model", "ar1",
                       "--data", str(tmp_path / "absent.csv"))
        assert code == 2

    def test_numerical_degeneracy_is_three(self, dataset, monkeypatch):
        import smcsmooth.cli as cli

        def explode(*args, **kwargs):
            raise DegenerateWeightsError(4)

        monkeypatch.setattr(cli, "storvik_filter", explode)
        code = run_cli("filter", "--model", "ar1", "--data", str(dataset),
                       "--algorithm", "storvik")
        assert code == 3
