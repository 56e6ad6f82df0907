import csv
import json

import numpy as np
import pytest

from shb.errors import BundleError, EmptyFile, Inconsistent, MalformedLine, NonMonotoneIndices
from shb.io import parse_libsvm, read_bundle, read_csv_matrix, write_bundle, write_csv_matrix
from shb.problems import Problem, gen_problem


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestParseLibsvm:
    def test_minimal_two_lines(self, tmp_path):
        p = write(tmp_path, "a.txt", "1 1:1.0\n0 2:2.0\n")
        np.testing.assert_array_equal(parse_libsvm(p), [[1.0, 0.0], [0.0, 2.0]])

    def test_index_gap_fills_zeros(self, tmp_path):
        p = write(tmp_path, "a.txt", "1 3:5\n")
        np.testing.assert_array_equal(parse_libsvm(p), [[0.0, 0.0, 5.0]])

    def test_width_is_global_max_index(self, tmp_path):
        p = write(tmp_path, "a.txt", "1 5:1\n-1 1:2\n")
        got = parse_libsvm(p)
        assert got.shape == (2, 5)
        assert got[1, 0] == 2.0

    def test_label_only_line_gives_zero_row(self, tmp_path):
        p = write(tmp_path, "a.txt", "1\n-1 2:3\n")
        np.testing.assert_array_equal(parse_libsvm(p), [[0.0, 0.0], [0.0, 3.0]])

    def test_scientific_notation_values(self, tmp_path):
        p = write(tmp_path, "a.txt", "+1 1:-1.5e-3 4:2E2\n")
        got = parse_libsvm(p)
        assert got[0, 0] == pytest.approx(-1.5e-3)
        assert got[0, 3] == 200.0

    def test_trailing_blank_lines_tolerated(self, tmp_path):
        p = write(tmp_path, "a.txt", "1 1:1\n\n\n")
        assert parse_libsvm(p).shape == (1, 1)

    def test_empty_file(self, tmp_path):
        with pytest.raises(EmptyFile):
            parse_libsvm(write(tmp_path, "a.txt", ""))

    def test_blank_only_file(self, tmp_path):
        with pytest.raises(EmptyFile):
            parse_libsvm(write(tmp_path, "a.txt", "\n\n"))

    def test_interior_blank_line(self, tmp_path):
        with pytest.raises(MalformedLine) as exc:
            parse_libsvm(write(tmp_path, "a.txt", "1 1:1\n\n1 1:1\n"))
        assert exc.value.line_no == 2

    def test_bad_label(self, tmp_path):
        with pytest.raises(MalformedLine) as exc:
            parse_libsvm(write(tmp_path, "a.txt", "abc 1:1\n"))
        assert exc.value.token == "abc"

    def test_token_without_colon(self, tmp_path):
        with pytest.raises(MalformedLine):
            parse_libsvm(write(tmp_path, "a.txt", "1 5\n"))

    def test_bad_value(self, tmp_path):
        with pytest.raises(MalformedLine) as exc:
            parse_libsvm(write(tmp_path, "a.txt", "1 1:x\n"))
        assert exc.value.line_no == 1

    def test_zero_index_not_one_based(self, tmp_path):
        with pytest.raises(MalformedLine):
            parse_libsvm(write(tmp_path, "a.txt", "1 0:1\n"))

    def test_duplicate_index(self, tmp_path):
        with pytest.raises(NonMonotoneIndices):
            parse_libsvm(write(tmp_path, "a.txt", "1 2:1 2:2\n"))

    def test_decreasing_index(self, tmp_path):
        with pytest.raises(NonMonotoneIndices) as exc:
            parse_libsvm(write(tmp_path, "a.txt", "1 1:1\n1 3:1 2:1\n"))
        assert exc.value.line_no == 2

    def test_shuffled_lines_permute_rows(self, tmp_path):
        text = "1 1:1 3:2\n0 2:5\n1 1:7\n"
        lines = text.strip().split("\n")
        shuffled = "\n".join([lines[2], lines[0], lines[1]]) + "\n"
        a = parse_libsvm(write(tmp_path, "a.txt", text))
        b = parse_libsvm(write(tmp_path, "b.txt", shuffled))
        rows_a = sorted(map(tuple, a.tolist()))
        rows_b = sorted(map(tuple, b.tolist()))
        assert rows_a == rows_b


class TestCsvMatrix:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        a = rng.standard_normal((4, 3))
        path = tmp_path / "m.csv"
        write_csv_matrix(a, path)
        np.testing.assert_array_equal(read_csv_matrix(path), a)

    def test_strict_reader_accepts_output(self, tmp_path):
        a = np.random.default_rng(1).standard_normal((3, 2))
        path = tmp_path / "m.csv"
        write_csv_matrix(a, path)
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh, strict=True))
        assert len(rows) == 4  # header + 3 data rows
        assert all(len(r) == 2 for r in rows)

    def test_ragged_rejected(self, tmp_path):
        p = write(tmp_path, "m.csv", "c1,c2\n1.0,2.0\n3.0\n")
        with pytest.raises(MalformedLine):
            read_csv_matrix(p)

    def test_header_only_rejected(self, tmp_path):
        with pytest.raises(EmptyFile):
            read_csv_matrix(write(tmp_path, "m.csv", "c1,c2\n"))


class TestBundle:
    def test_round_trip_bit_identical(self, tmp_path):
        problem = gen_problem(7, 4, seed=99)
        manifest = write_bundle(problem, tmp_path / "prob.json")
        back = read_bundle(manifest)
        assert problem.a.tobytes() == back.a.tobytes()
        assert problem.b.tobytes() == back.b.tobytes()
        assert problem.planted_solution.tobytes() == back.planted_solution.tobytes()
        assert problem.source == back.source
        assert problem == back

    def test_round_trip_without_planted(self, tmp_path):
        problem = Problem(a=np.eye(3), b=np.array([1.0, 2.0, 3.0]), source="hand")
        back = read_bundle(write_bundle(problem, tmp_path / "p.json"))
        assert back.planted_solution is None
        assert problem == back

    def test_checksum_detects_corruption(self, tmp_path):
        problem = gen_problem(3, 2, seed=1)
        manifest = write_bundle(problem, tmp_path / "p.json")
        payload = tmp_path / "p.bin"
        raw = bytearray(payload.read_bytes())
        raw[0] ^= 0xFF
        payload.write_bytes(bytes(raw))
        with pytest.raises(BundleError):
            read_bundle(manifest)

    def test_wrong_kind_rejected(self, tmp_path):
        p = tmp_path / "x.json"
        p.write_text(json.dumps({"kind": "other"}))
        with pytest.raises(BundleError):
            read_bundle(p)

    def test_truncated_payload_rejected(self, tmp_path):
        problem = gen_problem(3, 2, seed=2)
        manifest = write_bundle(problem, tmp_path / "p.json")
        payload = tmp_path / "p.bin"
        raw = payload.read_bytes()[:-8]
        payload.write_bytes(raw)
        meta = json.loads(manifest.read_text())
        import hashlib

        meta["checksum_sha256"] = hashlib.sha256(raw).hexdigest()
        manifest.write_text(json.dumps(meta))
        with pytest.raises(BundleError):
            read_bundle(manifest)


class TestProblem:
    def test_planted_consistency_enforced(self):
        with pytest.raises(Inconsistent):
            Problem(
                a=np.eye(2),
                b=np.array([1.0, 1.0]),
                planted_solution=np.array([5.0, 5.0]),
            )

    def test_generation_is_deterministic(self):
        p1 = gen_problem(10, 6, seed=123)
        p2 = gen_problem(10, 6, seed=123)
        assert p1 == p2
        p3 = gen_problem(10, 6, seed=124)
        assert not np.array_equal(p1.a, p3.a)

    def test_generated_problem_is_consistent(self):
        p = gen_problem(20, 8, seed=5)
        resid = np.linalg.norm(p.a @ p.planted_solution - p.b)
        assert resid <= 1e-10 * (1.0 + np.linalg.norm(p.b))

    def test_generated_full_column_rank(self):
        from shb.sketch import hessian_spectrum, row_sampling

        p = gen_problem(100, 50, seed=7)
        spec = hessian_spectrum(p.a, row_sampling(p.a))
        assert spec.rank == 50
