import json
import math

import pandas as pd
import pytest
from src.drawdown_put.cli import (
    EXIT_CHECK_FAILED,
    EXIT_INVALID,
    EXIT_OK,
    main,
    parse_args,
    run_config_from_args,
)
from src.drawdown_put.mc_oracle import horizon_for_tolerance
from src.drawdown_put.pricing import optimal_barrier, price_value


class TestParseArgs:
    def test_defaults(self):
        args = parse_args(["barrier"])
        assert args.r == 0.1
        assert args.sigma == 0.2
        assert args.strike == 100.0
        assert args.drawdown == 1.2

    def test_missing_command_exits(self):
        with pytest.raises(SystemExit):
            parse_args([])

    def test_config_file_below_flags(self, tmp_path):
        """Test that flags beat the config file, which beats the defaults"""
        path = tmp_path / "run.cfg"
        path.write_text("r = 0.05\nsigma = 0.3\n")
        args = parse_args(["barrier", "--config", str(path), "--sigma", "0.25"])
        assert args.r == 0.05
        assert args.sigma == 0.25

    def test_config_file_can_name_command(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("command = barrier\n")
        assert parse_args(["--config", str(path)]).command == "barrier"


class TestRunConfigFromArgs:
    def test_state_from_prices(self):
        cfg = run_config_from_args(parse_args(["price", "--x", "90", "--xbar", "100"]))
        assert cfg.state.x == pytest.approx(math.log(90.0))
        assert cfg.state.x_bar == pytest.approx(math.log(100.0))
        assert cfg.mc is None

    def test_xbar_defaults_to_spot(self):
        cfg = run_config_from_args(parse_args(["price", "--x", "90"]))
        assert cfg.state.x == cfg.state.x_bar

    def test_mc_horizon_default(self):
        cfg = run_config_from_args(parse_args(["mc", "--x", "95", "--xbar", "100"]))
        assert cfg.mc.t_max == pytest.approx(horizon_for_tolerance(cfg.model, 1e-4))

    def test_verify_skip_mc_has_no_mc(self):
        assert run_config_from_args(parse_args(["verify", "--skip-mc"])).mc is None

    def test_grids_are_logs(self):
        cfg = run_config_from_args(parse_args(["sweep", "--x-grid", "80,90", "--xbar", "100"]))
        assert list(cfg.sweep_axes["xs"]) == pytest.approx([math.log(80.0), math.log(90.0)])


class TestMain:
    def test_price_csv(self, params, tmp_path):
        out = tmp_path / "price.csv"
        assert main(["price", "--x", "90", "--xbar", "100", "--out", str(out)]) == EXIT_OK
        frame = pd.read_csv(out, comment="#")
        assert frame["value"].iloc[0] == pytest.approx(
            price_value(params, math.log(90.0), math.log(100.0)),
            rel=1e-15,
        )
        assert frame["regime"].iloc[0] == "ContinuationLowMax"

    def test_price_json(self, tmp_path):
        out = tmp_path / "price.json"
        assert main(["price", "--x", "95", "--xbar", "100", "--format", "json", "--out", str(out)]) == EXIT_OK
        payload = json.loads(out.read_text())
        assert payload["meta"]["command"] == "price"
        assert len(payload["records"]) == 1

    def test_price_to_stdout(self, capsys):
        assert main(["price", "--x", "100"]) == EXIT_OK

    def test_price_paired_grids(self, params, tmp_path):
        out = tmp_path / "prices.csv"
        assert main(["price", "--x-grid", "85,95", "--xbar-grid", "100,100", "--out", str(out)]) == EXIT_OK
        frame = pd.read_csv(out, comment="#")
        expected = [price_value(params, math.log(s), math.log(100.0)) for s in (85.0, 95.0)]
        assert list(frame["price"]) == pytest.approx(expected, rel=1e-15)
        assert list(frame["regime"]) == ["StoppedAtBarrier", "ContinuationLowMax"]

    def test_price_grid_lengths_must_match(self, capsys):
        assert main(["price", "--x-grid", "85,95", "--xbar-grid", "100"]) == EXIT_INVALID
        assert "price" in capsys.readouterr().out

    def test_spot_above_max_is_invalid(self):
        assert main(["price", "--x", "110", "--xbar", "100"]) == EXIT_INVALID

    def test_nonpositive_rate_is_invalid(self):
        assert main(["barrier", "--r", "0"]) == EXIT_INVALID

    def test_drawdown_ratio_at_most_one_is_invalid(self):
        assert main(["barrier", "--drawdown", "1.0"]) == EXIT_INVALID

    def test_price_at_float_limit_drawdown(self, tmp_path):
        out = tmp_path / "price.json"
        argv = ["price", "--x", "100", "--drawdown", "1e308", "--format", "json", "--out", str(out)]
        assert main(argv) == EXIT_OK
        record = json.loads(out.read_text())["records"][0]
        assert 0.0 <= record["value"] <= 100.0

    def test_bad_grid_is_invalid(self):
        assert main(["sweep", "--x-grid", "1:2"]) == EXIT_INVALID

    def test_unknown_config_key_is_invalid(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("volatility = 0.3\n")
        assert main(["barrier", "--config", str(path)]) == EXIT_INVALID

    def test_barrier_record(self, tmp_path):
        out = tmp_path / "barrier.json"
        assert main(["barrier", "--format", "json", "--out", str(out)]) == EXIT_OK
        record = json.loads(out.read_text())["records"][0]
        assert record["exp_a_star"] == pytest.approx(86.35, abs=0.05)
        assert abs(record["root_residual"]) <= 1e-12

    def test_sweep_preset(self, tmp_path):
        out = tmp_path / "sweep.csv"
        assert main(["sweep", "--figure", "1", "--points", "6", "--out", str(out)]) == EXIT_OK
        assert len(pd.read_csv(out, comment="#")) == 6

    def test_verify_passes(self, tmp_path):
        out = tmp_path / "verify.json"
        assert main(["verify", "--skip-mc", "--format", "json", "--out", str(out)]) == EXIT_OK
        assert json.loads(out.read_text())["all_passed"] is True

    def test_verify_perturbed_fails(self, tmp_path):
        """Test that shifting a* by 0.01 makes verify exit 1"""
        out = tmp_path / "verify.csv"
        assert main(["verify", "--skip-mc", "--perturb-astar", "0.01", "--out", str(out)]) == EXIT_CHECK_FAILED

    def test_mc_record(self, tmp_path):
        out = tmp_path / "mc.json"
        argv = ["mc", "--x", "95", "--xbar", "100", "--paths", "200", "--tmax", "40", "--format", "json"]
        assert main(argv + ["--out", str(out)]) == EXIT_OK
        record = json.loads(out.read_text())["records"][0]
        assert record["n_effective"] == 200
        assert record["z_score"] is not None

    def test_mc_extrapolated_record(self, tmp_path):
        out = tmp_path / "mc.json"
        argv = ["mc", "--x", "95", "--xbar", "100", "--paths", "200", "--tmax", "40", "--extrapolate"]
        assert main(argv + ["--format", "json", "--out", str(out)]) == EXIT_OK
        record = json.loads(out.read_text())["records"][0]
        assert record["extrapolated"] is True
        assert record["monitoring_bias_bound"] == 0.0

    def test_mc_writes_first_path(self, params, tmp_path):
        out, path_out = tmp_path / "mc.json", tmp_path / "path.csv"
        argv = ["mc", "--x", "95", "--xbar", "100", "--paths", "20", "--tmax", "40", "--format", "json"]
        assert main(argv + ["--out", str(out), "--path-out", str(path_out)]) == EXIT_OK
        path = pd.read_csv(path_out)
        assert list(path.columns) == ["t", "x", "x_bar", "drawdown"]
        assert path["x"].iloc[0] == pytest.approx(math.log(95.0))
        last = path.iloc[-1]
        assert last["x"] <= optimal_barrier(params) + 1e-9 or last["drawdown"] >= params.c - 1e-9
        assert not ((path["x"].iloc[:-1] <= optimal_barrier(params) - 1e-9).any())

    def test_mc_single_path(self, tmp_path):
        out = tmp_path / "mc.json"
        argv = ["mc", "--x", "95", "--xbar", "100", "--paths", "1", "--tmax", "40", "--format", "json"]
        assert main(argv + ["--out", str(out)]) == EXIT_OK
        assert json.loads(out.read_text())["records"][0]["stderr"] is None

    def test_barrier_search_small(self, params, tmp_path):
        out = tmp_path / "search.csv"
        argv = ["barrier", "--search", "--paths", "100", "--tmax", "30", "--out", str(out)]
        assert main(argv) == EXIT_OK
        frame = pd.read_csv(out, comment="#")
        assert len(frame) == 7
        assert frame["a_star"].iloc[0] == pytest.approx(optimal_barrier(params), rel=1e-15)
