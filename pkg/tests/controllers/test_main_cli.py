import os
import shutil
import tempfile

import pytest

from edpcea.controllers.run_controller import RunController
from edpcea.main import EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, build_parser, cli_main, load_config
from edpcea.repositories.output_repository import read_frame
from edpcea.utils.errors import NumericError

FAST = ["--iters", "12", "--burnin", "4", "--thin", "2", "--set", "V=4", "--set", "log_every=0"]


class TestCli:
    def setup_method(self, method):
        self.tmp_dir = tempfile.mkdtemp(prefix="edpcea_test_")
        self.data = os.path.join(self.tmp_dir, "data.csv")
        self.draws = os.path.join(self.tmp_dir, "draws.jsonl")

    def teardown_method(self, method):
        shutil.rmtree(self.tmp_dir, ignore_errors=True)

    def simulate(self):
        assert cli_main(["simulate", "--n", "40", "--seed", "3", "--out", self.data]) == EXIT_OK

    def test_usage_errors(self):
        assert cli_main([]) == EXIT_USAGE
        assert cli_main(["fit", "--out", self.draws]) == EXIT_USAGE
        assert cli_main(["plot-data", "trace", "--source", self.draws, "--out-dir", self.tmp_dir]) == EXIT_USAGE
        assert cli_main(["simulate", "--n", "ten", "--out", self.data]) == EXIT_USAGE

    def test_invalid_input(self):
        assert cli_main(["estimate", "--draws", os.path.join(self.tmp_dir, "absent.jsonl")]) == EXIT_VALIDATION
        assert cli_main(["simulate", "--n", "0", "--out", self.data]) == EXIT_VALIDATION
        self.simulate()
        assert cli_main(["fit", "--data", self.data, "--out", self.draws, "--iters", "5",
                         "--burnin", "5"]) == EXIT_VALIDATION
        assert cli_main(["fit", "--data", self.data, "--out", self.draws, "--set", "colour=red"]) == EXIT_VALIDATION

    def test_undecodable_dataset_exits_with_validation(self):
        with open(self.data, "wb") as f:
            f.write(b"y,t,delta,a\n\xff\xfe,1.0,1,1\n")
        assert cli_main(["fit", "--data", self.data, "--out", self.draws]) == EXIT_VALIDATION

    def test_numeric_failure(self, monkeypatch):
        self.simulate()

        def broken_fit(self, data_path, out, workers=None):
            raise NumericError("non-finite draw")

        monkeypatch.setattr(RunController, "fit", broken_fit)
        assert cli_main(["fit", "--data", self.data, "--out", self.draws]) == EXIT_NUMERIC

    def test_pipeline(self, capsys):
        truth = os.path.join(self.tmp_dir, "truth.csv")
        assert cli_main(["simulate", "--setting", "bimodal_low", "--n", "40", "--out", self.data,
                         "--truth", truth]) == EXIT_OK
        assert os.path.exists(truth)
        assert cli_main(["fit", "--data", self.data, "--out", self.draws, "--seed", "4"] + FAST) == EXIT_OK
        assert cli_main(["estimate", "--draws", self.draws, "--kappa", "1.5"]) == EXIT_OK
        summary = read_frame(os.path.join(self.tmp_dir, "nmb_summary.csv"))
        assert 1.5 in summary["kappa"].tolist()
        out_dir = os.path.join(self.tmp_dir, "sub")
        assert cli_main(["subgroups", "--draws", self.draws, "--out-dir", out_dir, "--threshold", "0.3"]) == EXIT_OK
        assert os.path.exists(os.path.join(out_dir, "graph_edges.csv"))
        assert cli_main(["plot-data", "hazard", "--source", self.draws, "--out-dir", out_dir]) == EXIT_OK
        assert len(read_frame(os.path.join(out_dir, "hazard.csv"))) == 4
        assert cli_main(["summarize", self.draws]) == EXIT_OK
        assert "# Posterior draws" in capsys.readouterr().out
        report = os.path.join(self.tmp_dir, "report.html")
        assert cli_main(["summarize", self.draws, "--html", "--out", report]) == EXIT_OK
        with open(report, encoding="utf-8") as f:
            assert "<h1>Posterior draws</h1>" in f.read()


class TestLoadConfig:
    def setup_method(self, method):
        self.tmp_dir = tempfile.mkdtemp(prefix="edpcea_test_")

    def teardown_method(self, method):
        shutil.rmtree(self.tmp_dir, ignore_errors=True)

    def test_precedence(self):
        path = os.path.join(self.tmp_dir, "run.yaml")
        with open(path, "w", encoding="utf-8") as f:
            f.write("iters: 500\nburnin: 100\nseed: 2\n")
        args = build_parser().parse_args(["fit", "--data", "d.csv", "--out", "o.jsonl", "--config", path,
                                          "--seed", "7", "--set", "burnin=50"])
        config = load_config(args)
        assert (config.iters, config.burnin, config.seed) == (500, 50, 7)

    def test_defaults_yield_to_flags(self):
        args = build_parser().parse_args(["evaluate", "--out-dir", self.tmp_dir, "--set", "add_intercept=false"])
        assert load_config(args, add_intercept=True).add_intercept is False
        args = build_parser().parse_args(["evaluate", "--out-dir", self.tmp_dir])
        assert load_config(args, add_intercept=True).add_intercept is True
        assert args.replicates == 50 and args.n == 500
