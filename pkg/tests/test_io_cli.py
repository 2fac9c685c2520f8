import json
import math

import numpy as np
import pytest

from gbsim import FormatError, squeezed_state, vacuum_state
from gbsim.cli import main
from gbsim.gaussian import random_state
from gbsim.serialize import (
    complex_matrix_from_dict,
    complex_matrix_to_dict,
    load_state,
    save_matrix,
    save_state,
    state_from_dict,
    state_to_dict,
)

from conftest import tmsv


class TestSerialization:
    def test_state_round_trip_exact(self, rng, tmp_path):
        state = random_state(3, rng)
        path = tmp_path / "state.json"
        save_state(state, path)
        back = load_state(path)
        assert np.array_equal(back.V, state.V)
        assert np.array_equal(back.r, state.r)

    def test_file_rewrite_byte_identical(self, rng, tmp_path):
        state = random_state(2, rng)
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        save_state(state, a)
        save_state(load_state(a), b)
        assert a.read_bytes() == b.read_bytes()

    def test_complex_matrix_round_trip(self, rng):
        M = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
        back = complex_matrix_from_dict(complex_matrix_to_dict(M))
        assert np.array_equal(back, M)

    def test_wrong_hbar_rejected(self):
        data = state_to_dict(vacuum_state(1))
        data["hbar"] = 1
        with pytest.raises(FormatError):
            state_from_dict(data)

    def test_malformed_rejected(self):
        with pytest.raises(FormatError):
            state_from_dict({"modes": 2, "V": [[1.0]], "r": [0.0]})


def run_cli(*argv):
    return main([str(a) for a in argv])


class TestCliExitCodes:
    def test_missing_file_is_format_error(self, tmp_path):
        assert run_cli("tor", tmp_path / "nope.json") == 3

    def test_invalid_json_is_format_error(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert run_cli("tor", bad) == 3

    def test_unphysical_kernel_is_numerical_error(self, tmp_path):
        bad = tmp_path / "kernel.json"
        save_matrix(np.array([[0, 1.5], [1.5, 0]], dtype=complex), bad)
        assert run_cli("tor", bad) == 2

    def test_success_is_zero(self, tmp_path):
        path = tmp_path / "kernel.json"
        t = math.tanh(1.0)
        save_matrix(np.array([[0, t], [t, 0]], dtype=complex), path)
        assert run_cli("tor", path) == 0


class TestCliValues:
    def test_tor_zero_kernel(self, tmp_path, capsys):
        path = tmp_path / "zero.json"
        save_matrix(np.zeros((2, 2), dtype=complex), path)
        assert run_cli("tor", path) == 0
        out = json.loads(capsys.readouterr().out)
        assert abs(out["value"]) < 1e-15
        assert out["terms"] == 2

    def test_tor_squeezed_anchor(self, tmp_path, capsys):
        path = tmp_path / "kernel.json"
        t = math.tanh(1.0)
        save_matrix(np.array([[0, t], [t, 0]], dtype=complex), path)
        run_cli("tor", path)
        out = json.loads(capsys.readouterr().out)
        assert out["value"] == pytest.approx(math.cosh(1.0) - 1, abs=1e-12)

    def test_haf_all_ones(self, tmp_path, capsys):
        path = tmp_path / "ones.json"
        save_matrix(np.ones((4, 4), dtype=complex), path)
        assert run_cli("haf", path) == 0
        out = json.loads(capsys.readouterr().out)
        assert out["re"] == pytest.approx(3.0)

    def test_prob_squeezed(self, tmp_path, capsys):
        state_path = tmp_path / "sq.json"
        save_state(squeezed_state([1.0]), state_path)
        assert run_cli("prob", state_path, "--pattern", "1") == 0
        out = json.loads(capsys.readouterr().out)
        assert out["p"] == pytest.approx(1 - 1 / math.cosh(1.0), abs=1e-10)
        assert out["p"] == pytest.approx(0.3519453, abs=5e-7)

    def test_prob_vacuum_empty(self, tmp_path, capsys):
        state_path = tmp_path / "vac.json"
        save_state(vacuum_state(2), state_path)
        run_cli("prob", state_path, "--pattern", "")
        out = json.loads(capsys.readouterr().out)
        assert out["p"] == pytest.approx(1.0)

    def test_dist_normalization(self, tmp_path, capsys, rng):
        state_path = tmp_path / "state.json"
        save_state(random_state(3, rng), state_path)
        out_path = tmp_path / "dist.json"
        assert run_cli("dist", state_path, "--out", out_path) == 0
        data = json.loads(out_path.read_text())
        assert abs(data["normalization_defect"]) < 1e-9
        total = sum(row["p"] for row in data["probabilities"])
        assert total == pytest.approx(1.0, abs=1e-9)
        patterns = [tuple(row["pattern"]) for row in data["probabilities"]]
        assert patterns == sorted(patterns)


class TestCliPrep:
    def test_vacuum_file(self, tmp_path, capsys):
        out = tmp_path / "vac.json"
        assert run_cli("prep", "--squeeze", "0", "--unitary", "identity", "--out", out) == 0
        state = load_state(out)
        assert np.array_equal(state.V, np.eye(2))

    def test_squeezed_file(self, tmp_path, capsys):
        out = tmp_path / "sq.json"
        run_cli("prep", "--squeeze", "1", "--unitary", "identity", "--out", out)
        state = load_state(out)
        assert np.allclose(np.diag(state.V), [math.exp(2), math.exp(-2)])

    def test_haar_deterministic(self, tmp_path, capsys):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        run_cli("prep", "--squeeze", "0.5,0.5", "--unitary", "haar(7)", "--out", a)
        run_cli("prep", "--squeeze", "0.5,0.5", "--unitary", "haar(7)", "--out", b)
        assert a.read_bytes() == b.read_bytes()


class TestCliSample:
    def test_vacuum_all_empty(self, tmp_path, capsys):
        state_path = tmp_path / "vac.json"
        save_state(vacuum_state(2), state_path)
        out = tmp_path / "samples.jsonl"
        assert run_cli("--seed", 5, "sample", state_path, "-n", 100, "--out", out) == 0
        rows = [json.loads(line) for line in out.read_text().splitlines()]
        assert len(rows) == 100
        assert all(row["pattern"] == [] for row in rows)

    def test_seed_reproducibility_across_threads(self, tmp_path, capsys):
        state_path = tmp_path / "state.json"
        save_state(tmsv(1.0), state_path)
        outs = []
        for threads, name in ((1, "a.jsonl"), (8, "b.jsonl")):
            out = tmp_path / name
            assert run_cli("--seed", 42, "--threads", threads, "sample", state_path, "-n", 200, "--out", out) == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]

    def test_tmsv_coincidence_frequency(self, tmp_path, capsys):
        state_path = tmp_path / "tmsv.json"
        save_state(tmsv(1.0), state_path)
        out = tmp_path / "samples.jsonl"
        n = 100_000
        assert run_cli("--seed", 2024, "sample", state_path, "-n", n, "--out", out) == 0
        rows = [json.loads(line) for line in out.read_text().splitlines()]
        freq = sum(1 for row in rows if row["pattern"] == [1, 2]) / n
        p = 1 - 1 / math.cosh(1.0) ** 2
        assert p == pytest.approx(0.580026, abs=5e-7)
        assert abs(freq - p) < 3 * math.sqrt(p * (1 - p) / n)
        histogram = json.loads(capsys.readouterr().out)["click_histogram"]
        assert set(histogram) <= {"0", "2"}

    def test_requires_seed(self, tmp_path, capsys):
        state_path = tmp_path / "vac.json"
        save_state(vacuum_state(1), state_path)
        assert run_cli("sample", state_path, "-n", 5, "--out", tmp_path / "x.jsonl") == 3


class TestCliHerald:
    def test_squeezed_click(self, tmp_path, capsys):
        state_path = tmp_path / "sq.json"
        save_state(squeezed_state([1.0]), state_path)
        assert run_cli("herald", state_path, "--click", "1") == 0
        out = json.loads(capsys.readouterr().out)
        assert out["herald_probability"] == pytest.approx(1 - 1 / math.cosh(1.0), rel=1e-10)

    def test_impossible_event(self, tmp_path, capsys):
        state_path = tmp_path / "vac.json"
        save_state(vacuum_state(1), state_path)
        assert run_cli("herald", state_path, "--click", "1") == 2


class TestCliCollision:
    def test_report(self, tmp_path, capsys):
        state_path = tmp_path / "sq.json"
        save_state(squeezed_state([1.0]), state_path)
        assert run_cli("collision", state_path) == 0
        out = json.loads(capsys.readouterr().out)
        assert out["epsilon"] == pytest.approx(1 - 1 / math.cosh(1.0), abs=1e-10)


class TestCliCv:
    def test_pipeline_a_deterministic(self, tmp_path, capsys):
        outs = []
        for name in ("a.jsonl", "b.jsonl"):
            out = tmp_path / name
            code = run_cli(
                "--seed", 9, "cv", "--pipeline", "A", "--modes", 2, "--shots", 10,
                "--squeeze", "0.6,0.6", "--out", out,
            )
            assert code == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]

    def test_pipeline_c_records(self, tmp_path, capsys):
        out = tmp_path / "c.jsonl"
        code = run_cli(
            "--seed", 4, "cv", "--pipeline", "C", "--modes", 2, "--shots", 3,
            "--heralds", 1, "--out", out,
        )
        assert code == 0
        rows = [json.loads(line) for line in out.read_text().splitlines()]
        assert len(rows) == 3
        for row in rows:
            assert all(rec["povm"] == "hom" for rec in row["cv"])


class TestCliValidate:
    def test_passes_at_small_scale(self, capsys):
        assert run_cli("--seed", 123, "validate", "--scale", "small") == 0
        out = json.loads(capsys.readouterr().out)
        assert out["passed"] is True

    def test_passes_at_default_scale(self, capsys):
        assert run_cli("--seed", 2024, "validate") == 0
        out = json.loads(capsys.readouterr().out)
        assert out["passed"] is True
        assert len(out["checks"]) == 7

    def test_tor_sign_flip_caught(self, capsys):
        assert run_cli("--seed", 123, "validate", "--scale", "small", "--mutate", "tor_sign_flip") == 1
        out = json.loads(capsys.readouterr().out)
        failed = {c["name"] for c in out["checks"] if not c["passed"]}
        assert "threshold_oracle" in failed

    def test_wrong_reduction_caught(self, capsys):
        assert run_cli("--seed", 123, "validate", "--scale", "small", "--mutate", "haf_wrong_reduction") == 1
        out = json.loads(capsys.readouterr().out)
        failed = {c["name"] for c in out["checks"] if not c["passed"]}
        assert "hafnian_diagonal" in failed or "hafnian_oracle" in failed


class TestCliBench:
    def test_smoke_tiny(self, tmp_path, capsys):
        out = tmp_path / "bench.csv"
        assert run_cli("--seed", 1, "bench", "--kind", "tor", "--sizes", "2,3,4,5", "--out", out) == 0
        lines = out.read_text().splitlines()
        assert lines[0].startswith("size,")
        assert len(lines) == 5
        # N = 2 stays comfortably inside the smoke budget
        n2 = float(lines[1].split(",")[1])
        assert n2 < 0.01
