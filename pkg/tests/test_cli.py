import math
import os

import numpy as np
import pytest

from permatch.cli import main, read_config_file, read_graph, read_permutation, write_graph
from permatch.gibbs import DrawArchive
from permatch.perm_core import Permutation, canonical_cycles, parse_cycles
from permatch.summarize import nmi


def _read_bytes(path):
    with open(path, "rb") as fh:
        return fh.read()


def test_simulate_writes_expected_artifacts(tmp_path):
    out = tmp_path / "sim"
    rc = main(
        [
            "simulate",
            "--n", "20", "--blocks", "2", "--p-in", "0.6", "--p-out", "0.1",
            "--alpha", "0.05", "--beta", "0.05", "--seed", "7",
            "--out", str(out),
        ]
    )
    assert rc == 0
    for name in ("y1.csv", "y2.csv", "parent.csv", "pi.txt", "z.txt", "config"):
        assert (out / name).exists()
    y1 = read_graph(out / "y1.csv")
    y2 = read_graph(out / "y2.csv")
    assert y1.shape == (20, 20)
    assert np.array_equal(y1, y1.T) and np.array_equal(y2, y2.T)
    assert np.all(np.diag(y1) == 0)
    cfg = read_config_file(out / "config")
    assert cfg["seed"] == 7 and cfg["p_in"] == 0.6


def test_simulate_noiseless_alignment(tmp_path):
    out = tmp_path / "sim0"
    main(
        [
            "simulate", "--n", "12", "--blocks", "2",
            "--alpha", "0", "--beta", "0", "--seed", "3", "--out", str(out),
        ]
    )
    y1 = read_graph(out / "y1.csv")
    y2 = read_graph(out / "y2.csv")
    pi = read_permutation(out / "pi.txt")
    p0 = np.asarray(pi.one_line) - 1
    assert np.array_equal(y1, y2[np.ix_(p0, p0)])


def test_simulate_deterministic(tmp_path):
    args = [
        "simulate", "--n", "10", "--blocks", "2",
        "--alpha", "0.05", "--beta", "0.05", "--seed", "11",
    ]
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    main(args + ["--out", str(out_a)])
    main(args + ["--out", str(out_b)])
    for name in ("y1.csv", "y2.csv", "parent.csv", "pi.txt", "z.txt", "config"):
        assert _read_bytes(out_a / name) == _read_bytes(out_b / name)


def test_graph_roundtrip_and_edge_list(tmp_path):
    rng = np.random.default_rng(0)
    n = 8
    iu = np.triu_indices(n, 1)
    y = np.zeros((n, n), dtype=np.uint8)
    y[iu] = (rng.random(iu[0].size) < 0.4).astype(np.uint8)
    y = y + y.T
    dense = tmp_path / "g.csv"
    write_graph(dense, y)
    assert np.array_equal(read_graph(dense), y)

    edges = tmp_path / "g.edges"
    with open(edges, "w") as fh:
        for u, v in zip(*np.nonzero(np.triu(y))):
            fh.write(f"{u + 1} {v + 1}\n")
            fh.write(f"{v + 1} {u + 1}\n")  # duplicates must be tolerated
    assert np.array_equal(read_graph(edges, n=n), y)
    assert np.array_equal(read_graph(edges, fmt="edges", n=n), y)


def test_fit_and_outputs(tmp_path):
    sim = tmp_path / "sim"
    main(
        [
            "simulate", "--n", "6", "--blocks", "2",
            "--alpha", "0.05", "--beta", "0.05", "--seed", "5", "--out", str(sim),
        ]
    )
    fit = tmp_path / "fit"
    rc = main(
        [
            "fit",
            "--graph1", str(sim / "y1.csv"), "--graph2", str(sim / "y2.csv"),
            "--n-iter", "60", "--burn-in", "10", "--thin", "2",
            "--seed", "1", "--init", "identity", "--store-parent",
            "--out", str(fit),
        ]
    )
    assert rc == 0
    with open(fit / "scalars.csv") as fh:
        lines = fh.read().strip().splitlines()
    assert len(lines) == 61  # header plus one row per sweep
    assert lines[0] == "iter,alpha,beta,theta,log_joint,k"
    for line in lines[1:]:
        log_joint = float(line.split(",")[4])
        assert math.isfinite(log_joint)
    draws = DrawArchive.load_pi_draws(fit / "pi.draws")
    assert draws.shape == ((60 - 10) // 2, 6)
    assert (fit / "meta").exists() and (fit / "parent.draws").exists()


def test_fit_multiple_chains_distinct_seeds(tmp_path):
    sim = tmp_path / "sim"
    main(
        [
            "simulate", "--n", "5", "--blocks", "1",
            "--alpha", "0.1", "--beta", "0.1", "--seed", "2", "--out", str(sim),
        ]
    )
    fit = tmp_path / "fit"
    main(
        [
            "fit",
            "--graph1", str(sim / "y1.csv"), "--graph2", str(sim / "y2.csv"),
            "--n-iter", "30", "--seed", "9", "--chains", "3",
            "--init", "identity", "--out", str(fit),
        ]
    )
    seeds = set()
    for c in range(3):
        meta = read_config_file(fit / f"chain{c:02d}" / "meta")
        seeds.add(meta["seed"])
        assert (fit / f"chain{c:02d}" / "pi.draws").exists()
    assert len(seeds) == 3


def test_fit_deterministic_end_to_end(tmp_path):
    sim = tmp_path / "sim"
    main(
        [
            "simulate", "--n", "6", "--blocks", "2",
            "--alpha", "0.05", "--beta", "0.05", "--seed", "4", "--out", str(sim),
        ]
    )
    outs = []
    for tag in ("f1", "f2"):
        fit = tmp_path / tag
        main(
            [
                "fit",
                "--graph1", str(sim / "y1.csv"), "--graph2", str(sim / "y2.csv"),
                "--n-iter", "50", "--burn-in", "10", "--seed", "13",
                "--store-parent", "--out", str(fit),
            ]
        )
        outs.append(fit)
    for name in ("pi.draws", "scalars.csv", "parent.draws", "meta"):
        assert _read_bytes(outs[0] / name) == _read_bytes(outs[1] / name)


def test_summarize_degenerate_draws(tmp_path):
    pi = parse_cycles("(12345)")
    draws_path = tmp_path / "pi.draws"
    with open(draws_path, "w") as fh:
        for _ in range(10):
            fh.write(pi.to_text() + "\n")
    out = tmp_path / "point.txt"
    report = tmp_path / "report.csv"
    rc = main(
        [
            "summarize", "--draws", str(draws_path),
            "--out", str(out), "--report", str(report), "--seed", "3",
        ]
    )
    assert rc == 0
    assert read_permutation(out) == pi
    with open(report) as fh:
        header, values = fh.read().strip().splitlines()
    row = dict(zip(header.split(","), values.split(",")))
    assert float(row["f_c"]) == 0.0


def test_summarize_report_columns_with_truth(tmp_path):
    sim = tmp_path / "sim"
    main(
        [
            "simulate", "--n", "8", "--blocks", "2",
            "--alpha", "0.01", "--beta", "0.01", "--seed", "6", "--out", str(sim),
        ]
    )
    fit = tmp_path / "fit"
    main(
        [
            "fit",
            "--graph1", str(sim / "y1.csv"), "--graph2", str(sim / "y2.csv"),
            "--n-iter", "200", "--burn-in", "50", "--thin", "5",
            "--seed", "2", "--store-parent", "--out", str(fit),
        ]
    )
    out = tmp_path / "point.txt"
    report = tmp_path / "report.csv"
    main(
        [
            "summarize", "--draws", str(fit / "pi.draws"),
            "--out", str(out), "--report", str(report),
            "--truth", str(sim / "pi.txt"),
            "--graph1", str(sim / "y1.csv"), "--graph2", str(sim / "y2.csv"),
            "--parent-draws", str(fit / "parent.draws"),
            "--parent-truth", str(sim / "parent.csv"),
            "--seed", "3",
        ]
    )
    with open(report) as fh:
        header, values = fh.read().strip().splitlines()
    row = dict(zip(header.split(","), values.split(",")))
    for col in (
        "n", "n_draws", "f_c", "d_c_truth", "post_expected_d_c_truth",
        "nmi_truth", "frobenius", "auc",
    ):
        assert col in row
    assert 0.0 <= float(row["nmi_truth"]) <= 1.0
    assert 0.0 <= float(row["auc"]) <= 1.0


def test_summarize_fast_respects_zhat(tmp_path):
    rng = np.random.default_rng(1)
    draws_path = tmp_path / "pi.draws"
    with open(draws_path, "w") as fh:
        for _ in range(15):
            fh.write(Permutation(tuple(rng.permutation(6) + 1)).to_text() + "\n")
    zhat_path = tmp_path / "zhat.txt"
    with open(zhat_path, "w") as fh:
        fh.write("1 1 2 2 3 3\n")
    out = tmp_path / "point.txt"
    main(
        [
            "summarize", "--draws", str(draws_path), "--out", str(out),
            "--fast", "--zhat", str(zhat_path), "--seed", "5",
        ]
    )
    pi_hat = read_permutation(out)
    assert nmi(canonical_cycles(pi_hat).z, [1, 1, 2, 2, 3, 3]) == pytest.approx(1.0)


def test_diagnose_outputs(tmp_path):
    draws_path = tmp_path / "pi.draws"
    rows = [
        parse_cycles("(12)(3)").to_text(),
        parse_cycles("(12)(3)").to_text(),
        parse_cycles("(123)").to_text(),
    ]
    with open(draws_path, "w") as fh:
        fh.write("\n".join(rows) + "\n")
    out = tmp_path / "diag"
    main(["diagnose", "--draws", str(draws_path), "--out", str(out)])
    freq = np.loadtxt(out / "mapping_freq.csv", delimiter=",")
    assert np.allclose(freq.sum(axis=1), 1.0, atol=1e-12)
    # hand counts: pi(1) = 2 in all three draws; pi(2) = 1 twice, 3 once
    assert freq[0, 1] == pytest.approx(1.0)
    assert freq[1, 0] == pytest.approx(2.0 / 3.0)
    assert freq[1, 2] == pytest.approx(1.0 / 3.0)
    with open(out / "cycle_trace.csv") as fh:
        lines = fh.read().strip().splitlines()
    assert lines[0] == "draw,k"
    assert [line.split(",")[1] for line in lines[1:]] == ["2", "2", "1"]


def test_diagnose_constant_archive_is_permutation_matrix(tmp_path):
    draws_path = tmp_path / "pi.draws"
    pi = parse_cycles("(1234)")
    with open(draws_path, "w") as fh:
        for _ in range(5):
            fh.write(pi.to_text() + "\n")
    out = tmp_path / "diag"
    main(["diagnose", "--draws", str(draws_path), "--out", str(out)])
    freq = np.loadtxt(out / "mapping_freq.csv", delimiter=",")
    expected = np.zeros((4, 4))
    for i in range(4):
        expected[i, pi(i + 1) - 1] = 1.0
    assert np.array_equal(freq, expected)


def test_oracle_prior_dump(tmp_path):
    out = tmp_path / "prior.csv"
    rc = main(
        [
            "oracle", "prior", "--family", "dirichlet", "--theta", "1.0",
            "--n", "3", "--out", str(out),
        ]
    )
    assert rc == 0
    with open(out) as fh:
        lines = fh.read().strip().splitlines()
    assert len(lines) == 7  # header + 3! rows
    probs = [math.exp(float(line.rsplit(",", 1)[1])) for line in lines[1:]]
    assert sum(probs) == pytest.approx(1.0, abs=1e-10)
    assert all(p == pytest.approx(1 / 6, abs=1e-12) for p in probs)


def test_oracle_posterior_dump(tmp_path):
    sim = tmp_path / "sim"
    main(
        [
            "simulate", "--n", "3", "--blocks", "1",
            "--alpha", "0.1", "--beta", "0.1", "--seed", "1", "--out", str(sim),
        ]
    )
    out = tmp_path / "post.csv"
    main(
        [
            "oracle", "posterior",
            "--graph1", str(sim / "y1.csv"), "--graph2", str(sim / "y2.csv"),
            "--family", "dirichlet", "--theta", "1.0", "--out", str(out),
        ]
    )
    with open(out) as fh:
        lines = fh.read().strip().splitlines()
    probs = [math.exp(float(line.rsplit(",", 1)[1])) for line in lines[1:]]
    assert sum(probs) == pytest.approx(1.0, abs=1e-8)
