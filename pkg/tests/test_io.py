"""Binary tensor container and CSV round-trips."""

import numpy as np
import pytest

from cpstream import (
    ConvergenceTrace,
    DenseTensor,
    InvalidShapeError,
    read_matrix_csv,
    read_tensor,
    read_trace_csv,
    write_matrix_csv,
    write_tensor,
    write_trace_csv,
)


def test_tensor_roundtrip_shapes(tmp_path):
    rng = np.random.default_rng(30)
    for dims in [(2, 3), (3, 4, 5), (2, 2, 3, 2)]:
        data = rng.standard_normal(dims)
        path = tmp_path / "t.nten"
        write_tensor(path, DenseTensor(data))
        back = read_tensor(path)
        assert back.dims == dims
        assert np.array_equal(back.data, data)


def test_tensor_write_is_deterministic(tmp_path):
    data = np.random.default_rng(31).standard_normal((3, 4, 5))
    a, b = tmp_path / "a.nten", tmp_path / "b.nten"
    write_tensor(a, data)
    write_tensor(b, data)
    assert a.read_bytes() == b.read_bytes()


def test_tensor_bad_magic(tmp_path):
    path = tmp_path / "x.nten"
    path.write_bytes(b"XXXX" + bytes(20))
    with pytest.raises(ValueError, match="magic"):
        read_tensor(path)


def test_tensor_bad_version(tmp_path):
    path = tmp_path / "x.nten"
    good = tmp_path / "g.nten"
    write_tensor(good, np.zeros((2, 2)))
    raw = bytearray(good.read_bytes())
    raw[4] = 9
    path.write_bytes(bytes(raw))
    with pytest.raises(ValueError, match="version"):
        read_tensor(path)


def test_tensor_truncated_payload(tmp_path):
    good = tmp_path / "g.nten"
    write_tensor(good, np.zeros((2, 3)))
    path = tmp_path / "x.nten"
    path.write_bytes(good.read_bytes()[:-8])
    with pytest.raises(ValueError, match="payload"):
        read_tensor(path)


def test_matrix_csv_roundtrip_exact(tmp_path):
    rng = np.random.default_rng(32)
    mat = rng.standard_normal((5, 3))
    path = tmp_path / "m.csv"
    write_matrix_csv(path, mat)
    assert path.read_text().splitlines()[0] == "c1,c2,c3"
    # repr serialization keeps doubles exactly
    assert np.array_equal(read_matrix_csv(path), mat)


def test_matrix_csv_header_required(tmp_path):
    path = tmp_path / "m.csv"
    path.write_text("x,y\n1,2\n")
    with pytest.raises(ValueError):
        read_matrix_csv(path)


def test_matrix_csv_ragged_row(tmp_path):
    path = tmp_path / "m.csv"
    path.write_text("c1,c2\n1.0,2.0\n3.0\n")
    with pytest.raises(ValueError, match="fields"):
        read_matrix_csv(path)


def test_matrix_csv_rejects_tensor():
    with pytest.raises(InvalidShapeError):
        write_matrix_csv("/tmp/never.csv", np.zeros((2, 2, 2)))


def test_trace_csv_roundtrip(tmp_path):
    trace = ConvergenceTrace()
    trace.add(0, 1.25, -0.5)
    trace.add(50, 0.3, 0.7, 12.5)
    path = tmp_path / "trace.csv"
    write_trace_csv(path, trace)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,rmse,fit,wall_ms"
    assert lines[1].endswith(",0.0")  # wall_ms defaults to zero
    back = read_trace_csv(path)
    assert back.entries == trace.entries


def test_trace_csv_header_check(tmp_path):
    path = tmp_path / "trace.csv"
    path.write_text("t,rmse\n0,1.0\n")
    with pytest.raises(ValueError):
        read_trace_csv(path)
