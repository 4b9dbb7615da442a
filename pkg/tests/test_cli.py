import csv
import io
import json

import numpy as np
import pytest

from homog3.cheeger import SWEEP_COLUMNS
from homog3.cli import BALL_COLUMNS, main, run

SL2 = '{"type":"sl2tilde","lambda":[1,1,1]}'
H3 = '{"type":"semidirect","A":[[1,0],[0,1]]}'
S2R = '{"type":"s2xr","kappa":1}'


def run_json(args):
    return json.loads(run(args))


def run_csv(args):
    return list(csv.DictReader(io.StringIO(run(args))))


class TestCommands:
    def test_curvature_sl2(self):
        out = run_json(["curvature", "--metric", SL2])
        np.testing.assert_allclose(out["ricci_eigenvalues"], [-6, -6, 2], atol=1e-8)

    def test_describe(self):
        out = run_json(["describe", "--metric", H3])
        assert (out["Ch"], out["Hcrit"], out["unimodular"]) == (2.0, 1.0, False)

    def test_describe_and_curvature_accept_matrix(self):
        assert run_json(["describe", "--A", "1,0,0,1"]) == run_json(["describe", "--metric", H3])
        out = run_json(["curvature", "--A", "2,0,2,0"])
        np.testing.assert_allclose(out["ricci_eigenvalues"], [-6, -6, 2], atol=1e-8)

    def test_cylinder_ratio(self):
        assert run_json(["cylinder-ratio", "--metric", S2R, "--R", "2"])["ratio"] == 1.0

    def test_leaf(self):
        out = run_json(["leaf", "--A", "2,0,2,0", "--z", "0.5", "--grid", "16"])
        assert out["mean_curvature"] == 1.0
        assert out["mean_curvature_numeric_max_error"] < 1e-10
        assert abs(out["jacobi_potential"]) < 1e-12

    def test_ball_csv(self):
        rows = run_csv(["ball", "--A", "1,0,0,1", "--r", "0.1", "--mesh", "8x16x8"])
        assert list(rows[0]) == list(BALL_COLUMNS)
        assert float(rows[0]["r"]) == 0.1
        assert float(rows[0]["ratio"]) == pytest.approx(1.002, abs=1e-4)

    def test_divergence(self):
        out = run_json(["divergence", "--A", "1,0,0,1", "--box", "0,1,0,1,0,1"])
        assert out["volume_integral"] == pytest.approx(out["expected_volume_integral"], rel=1e-8)
        out = run_json(["divergence", "--A", "2,1,0,1", "--box", "0,1,0,1,0,1", "--field", "killing:1,2,0.5"])
        assert out["discrepancy"] <= 1e-6 * out["boundary_area"]

    def test_cheeger_box(self, tmp_path):
        path = tmp_path / "sweep.csv"
        assert run(["cheeger-box", "--A", "1,0,0,1", "--ns", "4,8", "--t0s", "1,2", "--out", str(path)]) == ""
        rows = list(csv.DictReader(path.open(encoding="utf-8")))
        assert list(rows[0]) == list(SWEEP_COLUMNS)
        assert len(rows) == 4
        assert all(float(r["ratio"]) > float(r["trace_A"]) for r in rows)

    def test_quotient_end(self):
        out = run_json(["quotient-end", "--A", "2,0,2,0", "--T", "1", "--lattice", "1,0,0.5,2"])
        assert out["residual_quadrature"] <= 1e-8
        assert out["area_decay_factor"] == pytest.approx(np.exp(-2.0), rel=1e-10)

    def test_jacobi(self):
        out = run_json(["jacobi", "--A", "1,0,0,1", "--grid", "16"])
        assert out["kernel_dimension"] == 1
        assert out["kernel_mean"][0] == pytest.approx(1.0)
        assert out["second_eigenvalue"] < 0
        assert out["self_adjointness_residual"] < 1e-12

    def test_continue_cmc(self):
        out = run_json(["continue-cmc", "--A", "1,0,0,1", "--eps", "0.01", "--grid", "16"])
        assert out["residual"] <= 1e-8
        assert [r["step"] for r in out["trace"]] == list(range(out["steps"] + 1))


class TestPlumbing:
    @pytest.mark.parametrize(
        "args",
        [
            ["describe", "--metric", H3],
            ["curvature", "--metric", SL2],
            ["jacobi", "--A", "1,0,0,1", "--grid", "16", "--seed", "3"],
            ["cheeger-box", "--A", "2,0,2,0", "--ns", "4,8", "--t0s", "1,8"],
            ["continue-cmc", "--A", "1,0,0,1", "--grid", "8"],
        ],
    )
    def test_deterministic(self, args):
        assert run(args) == run(args)

    def test_json_round_trip(self):
        text = run(["quotient-end", "--A", "1,0,0,1"])
        again = json.dumps(json.loads(text), indent=2, sort_keys=True, allow_nan=False) + "\n"
        assert again == text

    def test_seed_position(self):
        a = run(["--seed", "5", "jacobi", "--A", "1,0,0,1", "--grid", "8"])
        b = run(["jacobi", "--A", "1,0,0,1", "--grid", "8", "--seed", "5"])
        assert a == b and json.loads(a)["seed"] == 5

    def test_json_table_output(self):
        rows = json.loads(run(["--format", "json", "cheeger-box", "--A", "1,0,0,1", "--ns", "4", "--t0s", "1"]))
        assert rows[0]["n"] == 4

    @pytest.mark.parametrize(
        "args",
        [
            ["describe", "--metric", '{"type":"s2xr","kappa":-1}'],
            ["describe", "--metric", '{"type":"sl2tilde","lambda":[1,2,1]}'],
            ["describe"],
            ["nosuch"],
            ["ball", "--A", "1,0,0,1", "--r", "0.1", "--mesh", "4x4x4"],
            ["ball", "--A", "1,0,0"],
            ["leaf", "--A", "1,0,0,1", "--metric", H3],
            ["cylinder-ratio", "--metric", H3, "--R", "1"],
            ["cylinder-ratio", "--metric", S2R, "--R", "inf"],
            ["divergence", "--A", "1,0,0,1", "--box", "0,1,0,1,0,1", "--field", "radial"],
            ["continue-cmc", "--A", "1,0,0,1", "--format", "csv"],
            ["continue-cmc", "--A", "1,0,0,1", "--eps", "0.5"],
        ],
    )
    def test_validation_exit_1(self, args, capsys):
        assert main(args) == 1
        err = capsys.readouterr().err
        assert err.count("\n") == 1 and err.startswith("homog3: error:")

    @pytest.mark.parametrize(
        "args",
        [
            ["quotient-end", "--A", "1,0,0,-1"],
            ["ball", "--A", "2,0,2,0", "--r", "3", "--mesh", "8x8x8"],
            ["ball", "--A", "1,0,0,1", "--r", "3", "--h", "0.5"],
        ],
    )
    def test_numerical_exit_2(self, args, capsys):
        assert main(args) == 2
        assert capsys.readouterr().err.startswith("homog3: numerical failure:")

    def test_success_exit_0(self, capsys):
        assert main(["describe", "--metric", H3]) == 0
        assert json.loads(capsys.readouterr().out)["Ch"] == 2.0
