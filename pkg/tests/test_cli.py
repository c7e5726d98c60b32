import csv
import json
import os
import subprocess
import sys

import pytest

from dsmflow.cli import EXIT_GATE, EXIT_OK, EXIT_SOLVER, EXIT_USAGE, EXIT_VERIFY, main


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_solve_holder_converges(tmp_path, capsys):
    out = tmp_path / "run"
    code = main(["solve", "monotone-holder", "--kappa", "0.5", "--n", "16", "--out", str(out),
                 "--check", "envelope", "--check", "convergence"])
    assert code == EXIT_OK
    man = json.loads((out / "manifest.json").read_text())
    assert man["status"] == "Converged"
    f_norm = (16 * 2.0 ** 2) ** 0.5  # f_i = +-2
    assert man["metrics"]["final_residual"] <= 1e-8 * (1 + f_norm)
    # the unregularized residual keeps the O(r) regularization bias
    assert man["metrics"]["final_unregularized_residual"] <= 2 * man["metrics"]["final_r"] * 4
    rows = read_csv(out / "trace.csv")
    assert rows[0] == ["t", "r", "residual", "envelope", "dist_to_w", "dist_to_y"]
    assert "PASS envelope" in capsys.readouterr().out


def test_solve_gate_failure_exit_2(tmp_path, capsys):
    out = tmp_path / "run"
    code = main(["solve", "monotone-holder", "--g0", "1e6", "--out", str(out)])
    assert code == EXIT_GATE
    text = capsys.readouterr().out
    assert "distance" in text and "lower g0" in text
    assert json.loads((out / "manifest.json").read_text())["status"] == "GateFailure"
    assert not (out / "trace.csv").exists()


def test_solve_force_runs_despite_gate(tmp_path):
    out = tmp_path / "run"
    code = main(["solve", "monotone-holder", "--g0", "1e6", "--force", "--out", str(out)])
    assert code in (EXIT_OK, EXIT_SOLVER)
    assert (out / "trace.csv").exists()


def test_solve_solver_failure_exit_3(tmp_path):
    code = main(["solve", "wellposed-linear", "--t-max", "1", "--out", str(tmp_path)])
    assert code == EXIT_SOLVER
    assert json.loads((tmp_path / "manifest.json").read_text())["status"] == "HorizonReached"


def test_failed_check_exit_1(tmp_path):
    # without a known solution the convergence check cannot pass
    spec = {"kind": "linear", "n": 2, "data": [2.0, 0.0, 0.0, 3.0], "rhs": [1.0, 1.0],
            "asserted_constants": {"c0": 0.0, "kappa": 1.0, "c1": 1.0, "b": 1.0, "eps0": 1e6}}
    path = tmp_path / "p.json"
    path.write_text(json.dumps(spec))
    code = main(["solve", "--problem-file", str(path), "--check", "convergence",
                 "--out", str(tmp_path / "o")])
    assert code == EXIT_VERIFY
    man = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert man["status"] == "Converged" and "error" in man["checks_result"]["convergence"]


def test_scalar_run_matches_oracle(tmp_path):
    from scipy.integrate import solve_ivp

    from dsmflow.gallery import gallery_make
    from dsmflow.plan import plan_run

    assert main(["solve", "wellposed-linear", "--n", "1", "--out", str(tmp_path)]) == EXIT_OK
    sched = plan_run(gallery_make("wellposed-linear", n=1)).schedule
    rows = [r for r in read_csv(tmp_path / "trace.csv")[1:] if r[5] and float(r[1]) >= 1e-2]
    times = [float(r[0]) for r in rows]
    sol = solve_ivp(lambda t, u: -u + 2.0 / (2.0 + sched.r(t)), (0, times[-1]), [0.0],
                    method="DOP853", rtol=1e-12, atol=1e-14, t_eval=times)
    # u rises from 0 toward y = 1 from below, so u = 1 - dist_to_y
    for r, ref in zip(rows, sol.y[0]):
        assert abs((1.0 - float(r[5])) - ref) <= 1e-6


def test_manifest_rerun_is_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["solve", "monotone-holder", "--n", "4", "--seed", "7", "--out", str(a)]) == EXIT_OK
    assert main(["solve", "--manifest", str(a / "manifest.json"), "--out", str(b)]) == EXIT_OK
    assert (a / "trace.csv").read_bytes() == (b / "trace.csv").read_bytes()
    assert (a / "path.csv").read_bytes() == (b / "path.csv").read_bytes()


def test_json_format(tmp_path):
    assert main(["solve", "wellposed-linear", "--format", "json", "--out", str(tmp_path)]) == EXIT_OK
    data = json.loads((tmp_path / "trace.json").read_text())
    assert data[0]["t"] == 0.0 and data[0]["r"] > 0
    assert set(data[0]) == {"t", "r", "residual", "envelope", "dist_to_w", "dist_to_y"}


def test_problem_file(tmp_path):
    spec = {"kind": "linear", "n": 2, "data": [2.0, 0.0, 0.0, 3.0], "known_solution": [1.0, -1.0],
            "asserted_constants": {"c0": 0.0, "kappa": 1.0, "c1": 1.0, "b": 1.0, "eps0": 1e6}}
    path = tmp_path / "p.json"
    path.write_text(json.dumps(spec))
    assert main(["solve", "--problem-file", str(path), "--out", str(tmp_path / "o")]) == EXIT_OK


@pytest.mark.parametrize("argv", [
    [],
    ["solve"],
    ["solve", "no-such-problem"],
    ["solve", "monotone-holder", "--kappa", "2"],
    ["verify", "nonsense"],
    ["bench", "wellposed-linear", "--baselines", "bogus"],
    ["schedule", "--b", "1"],
    ["solve", "wellposed-linear", "--rel-tol", "-1"],
])
def test_usage_errors(tmp_path, argv):
    assert main(argv + ["--out", str(tmp_path)] if argv else argv) == EXIT_USAGE


def test_verify_schedule_suite(tmp_path, capsys):
    assert main(["verify", "schedule", "--out", str(tmp_path)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "PASS schedule/" in out and "FAIL" not in out
    rows = read_csv(tmp_path / "verify.csv")
    assert rows[0] == ["suite", "name", "passed", "value", "limit"]
    detail = json.loads((tmp_path / "verify.json").read_text())
    assert detail["passed"] and detail["suite"] == "schedule"


def test_verify_lemma1_suite(tmp_path, capsys):
    assert main(["verify", "lemma1", "--out", str(tmp_path)]) == EXIT_OK
    assert "logistic" in capsys.readouterr().out


def test_bench_wellposed(tmp_path, capsys):
    assert main(["bench", "wellposed-linear", "--out", str(tmp_path)]) == EXIT_OK
    rows = read_csv(tmp_path / "bench.csv")
    assert rows[0] == ["method", "status", "solves", "final_residual", "dist_to_y", "rank"]
    assert [r[0] for r in rows[1:]] == ["dsm", "newton-plain", "fixed-a", "geometric-a"]
    assert all(r[1] == "converged" for r in rows[1:])


def test_bench_empty_baselines(tmp_path):
    assert main(["bench", "wellposed-linear", "--baselines", "", "--out", str(tmp_path)]) == EXIT_OK
    rows = read_csv(tmp_path / "bench.csv")
    assert [r[0] for r in rows[1:]] == ["dsm"]


def test_schedule_explicit_inputs(tmp_path, capsys):
    argv = ["schedule", "--b", "1", "--kappa", "1", "--c0", "0", "--c1", "1", "--c2", "1",
            "--g0", "0.25", "--r0", "1", "--t", "0", "--t", "12", "--out", str(tmp_path)]
    assert main(argv) == EXIT_OK
    text = capsys.readouterr().out
    assert "t=12: r=0.5 " in text
    rows = read_csv(tmp_path / "schedule_eval.csv")
    assert [float(x) for x in rows[1][:3]] == [0.0, 1.0, -0.125]


def test_schedule_gate_failure(tmp_path):
    argv = ["schedule", "--b", "1", "--kappa", "1", "--c0", "0", "--c1", "1", "--c2", "1",
            "--g0", "100", "--r0", "1", "--out", str(tmp_path)]
    assert main(argv) == EXIT_GATE


def test_schedule_for_gallery_problem(tmp_path):
    assert main(["schedule", "monotone-holder", "--out", str(tmp_path)]) == EXIT_OK
    data = json.loads((tmp_path / "schedule.json").read_text())
    assert data["schedule"]["k"] == 2


def test_console_script_and_log_level(tmp_path):
    env = dict(os.environ, DSM_LOG="DEBUG")
    proc = subprocess.run([sys.executable, "-m", "dsmflow.cli", "schedule", "monotone-holder",
                           "--out", str(tmp_path)], env=env, capture_output=True, text=True)
    assert proc.returncode == EXIT_OK
    assert "DEBUG" in proc.stderr
    quiet = subprocess.run([sys.executable, "-m", "dsmflow.cli", "schedule", "monotone-holder",
                            "--out", str(tmp_path)], env=dict(os.environ, DSM_LOG="ERROR"),
                           capture_output=True, text=True)
    assert "DEBUG" not in quiet.stderr


def test_unknown_log_level_falls_back_to_warning(tmp_path):
    env = dict(os.environ, DSM_LOG="LOUD")
    proc = subprocess.run([sys.executable, "-m", "dsmflow.cli", "schedule", "monotone-holder",
                           "--out", str(tmp_path)], env=env, capture_output=True, text=True)
    assert proc.returncode == EXIT_OK and "DEBUG" not in proc.stderr
