import socket
import subprocess
import sys
import time

import numpy as np
import pytest

from conftest import int_gradient
from homagg import bench
from homagg.cli import EXIT_PROTOCOL, EXIT_VALIDATION, main
from homagg.gradient import SparsityProfile, read_gradient, write_gradient


def test_sweep_rows_and_determinism():
    spec = bench.SweepSpec(1 << 14, SparsityProfile(0.304, seed=3), fractions=(0.02, 1.0),
                           seeds=2, batch_width=128)
    rows = bench.cmd_sweep(spec)
    assert [(r["fraction"], r["seed"]) for r in rows] == [(0.02, 3), (0.02, 4), (1.0, 3), (1.0, 4)]
    assert all(r["recovery_rate"] < 1 for r in rows[:2])
    assert all(r["recovery_rate"] == 1.0 for r in rows[2:])
    text = bench.write_csv(rows, bench.SWEEP_COLUMNS, "sweep")
    assert text == bench.write_csv(bench.cmd_sweep(spec), bench.SWEEP_COLUMNS, "sweep")
    assert text.startswith("# homagg-csv v1 sweep\nfraction,seed,rows,")


def test_sweep_pool_matches_serial():
    spec = bench.SweepSpec(1 << 12, SparsityProfile(0.5, seed=1), fractions=(0.5, 1.5),
                           batch_width=64)
    assert bench.cmd_sweep(spec, jobs=2) == bench.cmd_sweep(spec)


def test_sweep_spec_validation():
    with pytest.raises(ValueError):
        bench.SweepSpec(100, SparsityProfile(0.5), fractions=(0.0,))
    with pytest.raises(ValueError):
        bench.SweepSpec(100, SparsityProfile(0.5), fractions=(2.5,))


def test_theory_csv():
    rows = bench.cmd_theory()
    assert len(rows) == 16 and all(r["ratio"] < 1.6 for r in rows)
    clamped = bench.cmd_theory([1], [0.5])
    assert clamped[0]["epsilon"] == 1.0
    parsed = bench.read_csv(bench.write_csv(rows, bench.THEORY_COLUMNS, "theory"))
    assert list(parsed[0]) == list(bench.THEORY_COLUMNS)
    assert float(parsed[-1]["ratio"]) == rows[-1]["ratio"]


def test_throughput_small_grid():
    rows = bench.cmd_throughput([20_000, 40_000], batch_width=64, repeats=1)
    assert rows[0]["compress_ratio"] == "" and rows[1]["recover_ratio"] > 0
    with pytest.raises(ValueError):
        bench.cmd_throughput([40_000, 20_000])


def test_merge_time_independent_of_sparsity():
    dense = bench.cmd_throughput([1 << 18], sparsity=0.0, batch_width=1024, repeats=5)[0]
    sparse = bench.cmd_throughput([1 << 18], sparsity=0.99, batch_width=1024, repeats=5)[0]
    assert 0.2 < dense["merge_s"] / sparse["merge_s"] < 5


def test_cli_theory_and_plot(tmp_path, capsys):
    png = tmp_path / "t.png"
    assert main(["theory", "--plot", str(png)]) == 0
    out = capsys.readouterr().out
    assert out.splitlines()[1] == "C,lambda,epsilon,S1,S2,Smin,ratio"
    assert png.stat().st_size > 0


def test_cli_sweep_to_file(tmp_path):
    out = tmp_path / "s.csv"
    png = tmp_path / "s.png"
    assert main(["--seed", "2", "sweep", "--n-params", "8192", "--fractions", "0.1,1.5",
                 "--batch-width", "64", "--out", str(out), "--plot", str(png)]) == 0
    rows = bench.read_csv(out.read_text())
    assert [r["seed"] for r in rows] == ["2", "2"]
    assert rows[1]["recovery_rate"] == "1.0"
    assert png.exists()


def test_cli_compress_recover_allreduce(tmp_path, capsys):
    g = int_gradient(5000, 0.7, 1)
    write_gradient(tmp_path / "g.lhcg", g)
    assert main(["--batch-width", "64", "compress", "--input", str(tmp_path / "g.lhcg"),
                 "--fraction", "1.0", "--out", str(tmp_path / "g.lhcs")]) == 0
    assert main(["recover", "--input", str(tmp_path / "g.lhcs"),
                 "--out", str(tmp_path / "r.lhcg")]) == 0
    assert np.array_equal(read_gradient(tmp_path / "r.lhcg"), g)
    assert "recovery_rate" in capsys.readouterr().out
    h = int_gradient(5000, 0.7, 2)
    write_gradient(tmp_path / "h.lhcg", h)
    assert main(["--batch-width", "64", "allreduce", "--inputs", str(tmp_path / "g.lhcg"),
                 str(tmp_path / "h.lhcg"), "--out", str(tmp_path / "s.lhcg")]) == 0
    assert np.array_equal(read_gradient(tmp_path / "s.lhcg"), g + h)


def test_cli_validation_exit_code(tmp_path):
    bad = tmp_path / "bad.lhcg"
    bad.write_bytes(b"nope")
    assert main(["recover", "--input", str(bad), "--out", str(tmp_path / "x")]) == EXIT_VALIDATION
    with pytest.raises(SystemExit) as exc:
        main(["sweep", "--index", "zip"])
    assert exc.value.code == 2


def test_cli_protocol_exit_code(tmp_path):
    write_gradient(tmp_path / "g.lhcg", np.ones(10, np.float32))
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]
    assert main(["worker", "--server", f"127.0.0.1:{port}", "--id", "0",
                 "--input", str(tmp_path / "g.lhcg"), "--timeout", "1"]) == EXIT_PROTOCOL


def free_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def test_cli_serve_and_workers_processes(tmp_path):
    port = free_port()
    srv = subprocess.Popen([sys.executable, "-m", "homagg.cli", "serve", "--bind",
                            f"127.0.0.1:{port}", "--workers", "2"])
    try:
        for _ in range(100):
            try:
                socket.create_connection(("127.0.0.1", port), timeout=0.2).close()
                break
            except OSError:
                time.sleep(0.05)
        xs = [int_gradient(6000, 0.8, k) for k in range(2)]
        procs = []
        for k, x in enumerate(xs):
            write_gradient(tmp_path / f"{k}.lhcg", x)
            procs.append(subprocess.Popen(
                [sys.executable, "-m", "homagg.cli", "--batch-width", "64", "worker",
                 "--server", f"127.0.0.1:{port}", "--id", str(k), "--input",
                 str(tmp_path / f"{k}.lhcg"), "--out", str(tmp_path / f"out{k}.lhcg")]))
        assert [p.wait(60) for p in procs] == [0, 0]
        for k in range(2):
            assert np.array_equal(read_gradient(tmp_path / f"out{k}.lhcg"), xs[0] + xs[1])
    finally:
        srv.terminate()
        srv.wait(10)
