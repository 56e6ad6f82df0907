"""File formats: LIBSVM text ingestion, dense CSV, and the problem bundle.

The bundle is the canonical interchange format: a JSON manifest next to
a flat little-endian float64 payload holding A, b and the optional
planted solution, checksummed so round-trips are bit-exact.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from shb.errors import BundleError, EmptyFile, MalformedLine, NonMonotoneIndices
from shb.linalg import as_matrix
from shb.problems import Problem

BUNDLE_KIND = "shb-problem"
BUNDLE_VERSION = 1


def parse_libsvm(path) -> np.ndarray:
    """Dense feature matrix from a LIBSVM-format text file.

    Each line is `<label> <index>:<value> ...` with 1-based, strictly
    increasing indices.  Labels are parsed for validity and discarded;
    only the feature matrix is kept.  Column count is the largest index
    seen anywhere; absent entries are zero.  Trailing blank lines are
    tolerated, interior ones are not.
    """
    text = Path(path).read_text()
    lines = text.splitlines()
    while lines and not lines[-1].strip():
        lines.pop()
    if not lines:
        raise EmptyFile(f"{path}: no data rows")

    rows: list[list[tuple[int, float]]] = []
    max_index = 0
    for line_no, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            raise MalformedLine(f"{path}:{line_no}: blank line", line_no=line_no)
        tokens = line.split()
        try:
            float(tokens[0])
        except ValueError:
            raise MalformedLine(
                f"{path}:{line_no}: label {tokens[0]!r} is not a number",
                line_no=line_no,
                token=tokens[0],
            ) from None
        feats: list[tuple[int, float]] = []
        prev = 0
        for tok in tokens[1:]:
            idx_s, sep, val_s = tok.partition(":")
            if not sep:
                raise MalformedLine(
                    f"{path}:{line_no}: token {tok!r} has no ':'", line_no=line_no, token=tok
                )
            try:
                idx = int(idx_s)
                val = float(val_s)
            except ValueError:
                raise MalformedLine(
                    f"{path}:{line_no}: cannot parse token {tok!r}", line_no=line_no, token=tok
                ) from None
            if idx < 1:
                raise MalformedLine(
                    f"{path}:{line_no}: index {idx} is not 1-based", line_no=line_no, token=tok
                )
            if idx <= prev:
                raise NonMonotoneIndices(
                    f"{path}:{line_no}: index {idx} after {prev} is not strictly increasing",
                    line_no=line_no,
                )
            prev = idx
            feats.append((idx, val))
            if idx > max_index:
                max_index = idx
        rows.append(feats)

    mat = np.zeros((len(rows), max_index))
    for i, feats in enumerate(rows):
        for idx, val in feats:
            mat[i, idx - 1] = val
    return mat


def write_csv_matrix(a, path) -> None:
    """Dense matrix to CSV with a generated header row."""
    a = as_matrix(a, "a")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"c{j + 1}" for j in range(a.shape[1])])
        for row in a:
            writer.writerow([repr(float(v)) for v in row])


def read_csv_matrix(path) -> np.ndarray:
    """Dense matrix from CSV; the first row is a header and is skipped."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        rows = list(reader)
    if len(rows) < 2:
        raise EmptyFile(f"{path}: no data rows")
    width = len(rows[0])
    data = []
    for line_no, row in enumerate(rows[1:], start=2):
        if len(row) != width:
            raise MalformedLine(
                f"{path}:{line_no}: expected {width} cells, got {len(row)}", line_no=line_no
            )
        try:
            data.append([float(c) for c in row])
        except ValueError:
            raise MalformedLine(
                f"{path}:{line_no}: non-numeric cell", line_no=line_no
            ) from None
    return np.asarray(data)


def _bundle_paths(path) -> tuple[Path, Path]:
    manifest = Path(path)
    if manifest.suffix != ".json":
        manifest = manifest.with_suffix(".json")
    return manifest, manifest.with_suffix(".bin")


def write_bundle(problem: Problem, path) -> Path:
    """Write a problem as manifest JSON plus raw little-endian payload.

    Payload layout: A row-major, then b, then the planted solution when
    present, all float64.  The manifest records dimensions, provenance
    and a sha256 checksum of the payload bytes.
    """
    manifest_path, payload_path = _bundle_paths(path)
    rows, cols = problem.shape
    parts = [np.ascontiguousarray(problem.a, dtype="<f8").tobytes()]
    parts.append(np.ascontiguousarray(problem.b, dtype="<f8").tobytes())
    if problem.planted_solution is not None:
        parts.append(np.ascontiguousarray(problem.planted_solution, dtype="<f8").tobytes())
    payload = b"".join(parts)
    manifest = {
        "kind": BUNDLE_KIND,
        "version": BUNDLE_VERSION,
        "rows": rows,
        "cols": cols,
        "has_planted": problem.planted_solution is not None,
        "source": problem.source,
        "payload": payload_path.name,
        "checksum_sha256": hashlib.sha256(payload).hexdigest(),
    }
    payload_path.write_bytes(payload)
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n")
    return manifest_path


def read_bundle(path) -> Problem:
    """Read a problem bundle back, verifying the payload checksum."""
    manifest_path, _ = _bundle_paths(path)
    try:
        manifest = json.loads(manifest_path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise BundleError(f"{manifest_path}: cannot read manifest: {exc}") from exc
    if manifest.get("kind") != BUNDLE_KIND:
        raise BundleError(f"{manifest_path}: not a problem bundle")
    if manifest.get("version") != BUNDLE_VERSION:
        raise BundleError(f"{manifest_path}: unsupported version {manifest.get('version')!r}")
    payload_path = manifest_path.parent / manifest["payload"]
    try:
        payload = payload_path.read_bytes()
    except OSError as exc:
        raise BundleError(f"{payload_path}: cannot read payload: {exc}") from exc
    if hashlib.sha256(payload).hexdigest() != manifest["checksum_sha256"]:
        raise BundleError(f"{payload_path}: checksum mismatch")
    rows, cols = int(manifest["rows"]), int(manifest["cols"])
    has_planted = bool(manifest["has_planted"])
    expected = 8 * (rows * cols + rows + (cols if has_planted else 0))
    if len(payload) != expected:
        raise BundleError(
            f"{payload_path}: payload holds {len(payload)} bytes, expected {expected}"
        )
    flat = np.frombuffer(payload, dtype="<f8")
    a = flat[: rows * cols].reshape(rows, cols).copy()
    b = flat[rows * cols : rows * cols + rows].copy()
    planted = flat[rows * cols + rows :].copy() if has_planted else None
    return Problem(a=a, b=b, planted_solution=planted, source=str(manifest["source"]))
