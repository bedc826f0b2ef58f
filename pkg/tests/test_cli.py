"""Command-line interface: dispatch, exit codes, deterministic artifacts."""
import json
import math

import pytest

from markovdim.cli import EXIT_DOMAIN, EXIT_NOT_CONVERGED, EXIT_OK, EXIT_USAGE, main


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


class TestPressureCommand:
    def test_sv_closed_form_case(self, capsys):
        code, out, _ = run(capsys, "pressure", "--map", "sv:0.9",
                           "--potential", "neg-t-logT:7", "--nmax", "1024",
                           "--tol", "1e-8")
        assert code == EXIT_OK
        payload = json.loads(out)
        assert payload["result"]["converged"] is True
        assert payload["result"]["value"] == pytest.approx(-15.46743902409920, abs=1e-6)
        assert payload["config"]["map"] == "sv:0.9"
        assert payload["version"]

    def test_nonconvergent_exit_with_partial_results(self, capsys):
        code, out, _ = run(capsys, "pressure", "--map", "sv:0.9",
                           "--potential", "zero", "--nmax", "64")
        assert code == EXIT_NOT_CONVERGED
        payload = json.loads(out)
        levels = payload["result"]["per_level"]
        assert len(levels) >= 5
        vals = [p for _, p in levels]
        assert all(b >= a - 1e-9 for a, b in zip(vals, vals[1:]))

    def test_domain_error_exit(self, capsys):
        code, _, err = run(capsys, "pressure", "--map", "sv:0.3", "--potential", "zero")
        assert code == EXIT_DOMAIN
        assert "lambda" in err

    def test_csv_format(self, capsys):
        code, out, _ = run(capsys, "pressure", "--map", "sv:0.9",
                           "--potential", "neg-t-logT:8", "--nmax", "64",
                           "--tol", "1e-4", "--format", "csv")
        assert code == EXIT_OK
        assert "N,P_N" in out
        assert out.count("\n") >= 8


class TestDimensionCommand:
    def test_hyperbolic(self, capsys):
        code, out, _ = run(capsys, "dimension", "hyperbolic", "--lambda", "0.75",
                           "--tol", "1e-5", "--nmax", "1024")
        payload = json.loads(out)
        assert payload["result"]["value"] == pytest.approx(0.8281444907572746, abs=1e-4)

    def test_variational(self, capsys):
        code, out, _ = run(capsys, "dimension", "variational", "--lambda", "0.9",
                           "--alpha", "2.3991795", "--nmax", "256", "--tol", "1e-3")
        assert code == EXIT_OK
        payload = json.loads(out)
        assert payload["result"]["dimension"] == pytest.approx(0.553, abs=5e-3)
        assert payload["result"]["hypothesis_unverified"] is False

    def test_variational_needs_alpha(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["dimension", "variational", "--lambda", "0.9"])
        assert exc.value.code == EXIT_USAGE


class TestSpectrumCommands:
    def test_figure1_shape(self, capsys):
        code, out, _ = run(capsys, "figure1", "--lambda", "0.9", "--points", "50")
        assert code == EXIT_OK
        lines = [l for l in out.strip().split("\n")]
        body = [l for l in lines if l and not l.startswith("#")][1:]
        assert len(body) == 51  # 50 curve samples plus the appended jump point
        last = body[-1].split(",")
        assert float(last[0]) == pytest.approx(2.4079456086518722, rel=1e-12)
        assert float(last[1]) == 1.0
        assert last[2] == "ESCAPE_VALUE"
        assert any(l.startswith("# discontinuity,") for l in lines)

    def test_spectrum_birkhoff(self, capsys):
        code, out, _ = run(capsys, "spectrum-birkhoff", "--lambda", "0.9",
                           "--grid-points", "4", "--nmax", "48", "--tol", "1e-2")
        assert code == EXIT_OK
        assert "ESCAPE_VALUE" in out


class TestSimulateAndEscape:
    def test_simulate(self, capsys):
        code, out, _ = run(capsys, "simulate", "--map", "sv:0.9", "--x0", "0.95",
                           "--horizon", "1")
        payload = json.loads(out)
        assert payload["result"]["itinerary"] == [1]
        assert payload["result"]["birkhoff_logT"][-1] == pytest.approx(
            2.302585092994046, rel=1e-12)

    def test_escape_json(self, capsys):
        code, out, _ = run(capsys, "escape", "--map", "sv:0.9", "--samples", "1000",
                           "--horizon", "200", "--seed", "4")
        payload = json.loads(out)
        assert payload["result"]["fraction_escaping"] > 0.0

    def test_escape_csv_deterministic(self, capsys, tmp_path):
        f1, f2 = tmp_path / "a.csv", tmp_path / "b.csv"
        for f in (f1, f2):
            code = main(["escape", "--map", "sv:0.9", "--samples", "1000",
                         "--horizon", "100", "--seed", "4", "--per-orbit",
                         "--out", str(f)])
            assert code == EXIT_OK
        assert f1.read_bytes() == f2.read_bytes()

    def test_thread_knob_does_not_change_results(self, capsys, tmp_path):
        results = []
        for th in ("1", "4"):
            f = tmp_path / f"t{th}.json"
            main(["escape", "--map", "sv:0.75", "--samples", "1200",
                  "--horizon", "120", "--seed", "9", "--threads", th,
                  "--out", str(f)])
            results.append(json.loads(f.read_text())["result"])
        assert results[0] == results[1]


class TestValidateCommand:
    def test_valid_sv(self, capsys, tmp_path):
        f = tmp_path / "sv.json"
        f.write_text(json.dumps({"sv_lambda": 0.9}))
        code, out, _ = run(capsys, "validate", "--config", str(f))
        assert code == EXIT_OK
        assert json.loads(out)["violations"] == []

    def test_overlap_named(self, capsys, tmp_path):
        cfg = {"branches": [{"index": 1, "left": 0.0, "right": 0.6, "slope": 2.0},
                            {"index": 2, "left": 0.5, "right": 1.0, "slope": 2.5}],
               "transitions": [[True, True], [True, True]]}
        f = tmp_path / "bad.json"
        f.write_text(json.dumps(cfg))
        code, out, _ = run(capsys, "validate", "--config", str(f))
        assert code == EXIT_DOMAIN
        msgs = json.loads(out)["violations"]
        assert any("1" in v and "2" in v for v in msgs)

    def test_negative_override_with_floor(self, capsys, tmp_path):
        f = tmp_path / "pot.json"
        f.write_text(json.dumps({"depth": 1, "default": 1.0,
                                 "overrides": {"1": -2.0}, "positivity_floor": 0.5}))
        code, out, _ = run(capsys, "validate", "--config", str(f))
        assert code == EXIT_DOMAIN
        assert json.loads(out)["violations"]


class TestExitCodes:
    def test_usage(self):
        with pytest.raises(SystemExit) as exc:
            main(["no-such-command"])
        assert exc.value.code == EXIT_USAGE

    def test_unknown_flag(self):
        with pytest.raises(SystemExit) as exc:
            main(["pressure", "--map", "sv:0.9", "--potential", "zero", "--bogus"])
        assert exc.value.code == EXIT_USAGE
