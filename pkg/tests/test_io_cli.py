import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from kmv.cli import main
from kmv.core import exact_matvec
from kmv.io import (
    BadMagicError,
    MatrixFormatError,
    NonFiniteDataError,
    TruncatedPayloadError,
    UnsupportedDtypeError,
    read_matrix,
    write_matrix,
)
from kmv.synth import ClusteredSpec, clustered_problem, gaussian_x


def test_round_trip_bit_exact(tmp_path):
    m = np.array([[1.5, -2.25], [0.0, 1e-300], [3.14159, 2.71828]])
    path = str(tmp_path / "m.kmv")
    write_matrix(m, path)
    back = read_matrix(path)
    assert back.shape == (3, 2)
    assert np.array_equal(back, m)
    assert back.tobytes() == m.tobytes()


def test_vector_written_as_column(tmp_path):
    path = str(tmp_path / "v.kmv")
    write_matrix(np.arange(4.0), path)
    assert read_matrix(path).shape == (4, 1)


def test_bad_magic(tmp_path):
    path = tmp_path / "bad.kmv"
    path.write_bytes(b"NOPE" + b"\x00" * 40)
    with pytest.raises(BadMagicError):
        read_matrix(str(path))


def test_truncated_payload(tmp_path):
    path = str(tmp_path / "t.kmv")
    write_matrix(np.ones((4, 4)), path)
    blob = open(path, "rb").read()
    open(path, "wb").write(blob[:-8])
    with pytest.raises(TruncatedPayloadError):
        read_matrix(path)


def test_oversized_payload_rejected(tmp_path):
    path = str(tmp_path / "o.kmv")
    write_matrix(np.ones((2, 2)), path)
    with open(path, "ab") as fh:
        fh.write(b"\x00" * 8)
    with pytest.raises(MatrixFormatError):
        read_matrix(path)


def test_unsupported_dtype_tag(tmp_path):
    path = tmp_path / "d.kmv"
    path.write_bytes(struct.pack("<4sIQQ", b"KMV1", 2, 1, 1) + b"\x00" * 8)
    with pytest.raises(UnsupportedDtypeError):
        read_matrix(str(path))


def test_non_finite_rejected_on_read(tmp_path):
    path = tmp_path / "n.kmv"
    payload = np.array([[np.inf]]).tobytes()
    path.write_bytes(struct.pack("<4sIQQ", b"KMV1", 1, 1, 1) + payload)
    with pytest.raises(NonFiniteDataError):
        read_matrix(str(path))
    with pytest.raises(NonFiniteDataError):
        write_matrix(np.array([[np.nan]]), str(tmp_path / "w.kmv"))


def test_csv_ingestion(tmp_path):
    path = tmp_path / "m.csv"
    path.write_text("1.5,2.0\n3.0,4.0\n")
    m = read_matrix(str(path), fmt="csv")
    np.testing.assert_array_equal(m, [[1.5, 2.0], [3.0, 4.0]])
    bad = tmp_path / "bad.csv"
    bad.write_text("1.5,abc\n")
    with pytest.raises(MatrixFormatError):
        read_matrix(str(bad), fmt="csv")


@given(
    m=arrays(
        np.float64,
        st.tuples(st.integers(1, 6), st.integers(1, 5)),
        elements=st.floats(-1e12, 1e12, allow_nan=False),
    )
)
@settings(max_examples=40, deadline=None)
def test_round_trip_property(m, tmp_path_factory):
    path = str(tmp_path_factory.mktemp("io") / "m.kmv")
    write_matrix(m, path)
    assert np.array_equal(read_matrix(path), m)


def write_instance(tmp_path, n=320, d=6, seed=0):
    problem = clustered_problem(ClusteredSpec(n=n, d=d), seed=seed)
    x = gaussian_x(n, seed + 1)
    paths = {
        "keys": str(tmp_path / "keys.kmv"),
        "queries": str(tmp_path / "queries.kmv"),
        "x": str(tmp_path / "x.kmv"),
    }
    write_matrix(problem.keys.data, paths["keys"])
    write_matrix(problem.queries.data, paths["queries"])
    write_matrix(x, paths["x"])
    return problem, x, paths


def test_cli_exact_then_approx_error_bound(tmp_path):
    problem, x, paths = write_instance(tmp_path)
    out_exact = str(tmp_path / "exact.kmv")
    out_approx = str(tmp_path / "approx.kmv")
    assert main(["exact", "--keys", paths["keys"], "--queries", paths["queries"],
                 "--x", paths["x"], "--sigma", "1.0", "--out", out_exact]) == 0
    assert main(["approx", "--keys", paths["keys"], "--queries", paths["queries"],
                 "--x", paths["x"], "--sigma", "1.0", "--eps", "0.5",
                 "--seed", "3", "--out", out_approx]) == 0
    y_exact = read_matrix(out_exact).ravel()
    y_approx = read_matrix(out_approx).ravel()
    np.testing.assert_allclose(y_exact, exact_matvec(problem, x), rtol=1e-12)
    assert np.linalg.norm(y_exact - y_approx) <= 0.5 * np.linalg.norm(x)


def test_cli_approx_reproducible_with_seed(tmp_path):
    _, _, paths = write_instance(tmp_path, seed=5)
    outs = []
    for tag in ("a", "b"):
        out = str(tmp_path / f"{tag}.kmv")
        assert main(["approx", "--keys", paths["keys"], "--queries", paths["queries"],
                     "--x", paths["x"], "--sigma", "1.0", "--eps", "0.5",
                     "--seed", "42", "--out", out]) == 0
        outs.append(read_matrix(out))
    assert np.array_equal(outs[0], outs[1])


def test_cli_missing_flag_usage_error(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc_info:
        main(["exact", "--keys", "nope.kmv"])
    assert exc_info.value.code == 2
    assert "usage" in capsys.readouterr().err.lower()


def test_cli_missing_file_data_error(tmp_path, capsys):
    code = main(["exact", "--keys", str(tmp_path / "absent.kmv"),
                 "--queries", str(tmp_path / "absent.kmv"),
                 "--x", str(tmp_path / "absent.kmv"),
                 "--sigma", "1.0", "--out", str(tmp_path / "o.kmv")])
    assert code == 3


def test_cli_bad_file_data_error(tmp_path):
    bad = tmp_path / "bad.kmv"
    bad.write_bytes(b"JUNKJUNKJUNK")
    code = main(["exact", "--keys", str(bad), "--queries", str(bad),
                 "--x", str(bad), "--sigma", "1.0",
                 "--out", str(tmp_path / "o.kmv")])
    assert code == 3


def test_cli_reduce_round_trip(tmp_path):
    rng = np.random.default_rng(7)
    write_matrix(rng.normal(size=(16, 4)), str(tmp_path / "k.kmv"))
    write_matrix(rng.normal(size=(16, 4)), str(tmp_path / "q.kmv"))
    code = main(["reduce", "--keys", str(tmp_path / "k.kmv"),
                 "--queries", str(tmp_path / "q.kmv"),
                 "--out-keys", str(tmp_path / "rk.kmv"),
                 "--out-queries", str(tmp_path / "rq.kmv"),
                 "--out-scales", str(tmp_path / "rs.kmv")])
    assert code == 0
    rk = read_matrix(str(tmp_path / "rk.kmv"))
    rq = read_matrix(str(tmp_path / "rq.kmv"))
    rs = read_matrix(str(tmp_path / "rs.kmv"))
    assert rk.shape == (16, 5)
    assert rq.shape == (16, 5)
    assert rs.shape == (16, 1)
    norms = np.einsum("ij,ij->i", rk, rk)
    np.testing.assert_allclose(norms, norms.max(), rtol=1e-9)


def test_cli_attention_small(tmp_path):
    rng = np.random.default_rng(8)
    n, d = 40, 4
    q, k = rng.normal(size=(n, d)), rng.normal(size=(n, d))
    v = rng.normal(size=(n, 2))
    for name, arr in [("k", k), ("q", q), ("v", v)]:
        write_matrix(arr, str(tmp_path / f"{name}.kmv"))
    out = str(tmp_path / "att.kmv")
    code = main(["attention", "--keys", str(tmp_path / "k.kmv"),
                 "--queries", str(tmp_path / "q.kmv"),
                 "--values", str(tmp_path / "v.kmv"),
                 "--eps", "0.5", "--out", out])
    assert code == 0
    a = np.exp(q @ k.T / np.sqrt(d))
    expected = (a @ v) / a.sum(axis=1, keepdims=True)
    np.testing.assert_allclose(read_matrix(out), expected, atol=1e-8)


def test_cli_validate_identical_points(tmp_path):
    n = 32
    pts = np.full((n, 3), 2.0)
    write_matrix(pts, str(tmp_path / "k.kmv"))
    write_matrix(pts, str(tmp_path / "q.kmv"))
    report_path = str(tmp_path / "report.json")
    code = main(["validate", "--keys", str(tmp_path / "k.kmv"),
                 "--queries", str(tmp_path / "q.kmv"), "--sigma", "1.0",
                 "--min-prefix", "4", "--json", report_path])
    assert code == 0
    blob = json.load(open(report_path))
    assert blob["max_ratio"] == pytest.approx(n - 1.0)
    assert blob["order_stats"]["r_n1"] == pytest.approx(1.0)


def test_cli_bench_tiny(tmp_path):
    report_path = str(tmp_path / "bench.json")
    code = main(["bench", "--sizes", "64,96", "--d", "4", "--eps", "0.5",
                 "--seed", "1", "--repeats", "1", "--json", report_path])
    assert code == 0
    blob = json.load(open(report_path))
    assert [c["n"] for c in blob["cells"]] == [64, 96]
    assert all(c["exact_seconds"] > 0 for c in blob["cells"])


def test_cli_csv_inputs(tmp_path):
    rng = np.random.default_rng(9)
    keys = rng.normal(size=(20, 2))
    (tmp_path / "k.csv").write_text("\n".join(",".join(map(str, r)) for r in keys))
    (tmp_path / "q.csv").write_text("\n".join(",".join(map(str, r)) for r in keys))
    (tmp_path / "x.csv").write_text("\n".join(str(v) for v in rng.normal(size=20)))
    out = str(tmp_path / "y.kmv")
    code = main(["exact", "--keys", str(tmp_path / "k.csv"),
                 "--queries", str(tmp_path / "q.csv"),
                 "--x", str(tmp_path / "x.csv"),
                 "--format", "csv", "--sigma", "1.0", "--out", out])
    assert code == 0
    assert read_matrix(out).shape == (20, 1)
