"""Command-line interface: simulate, fit, summarize, diagnose, oracle.

Every subcommand reads and writes plain text artifacts (dense 0/1 CSV or
1-based edge lists for graphs, one-line rows for permutation draws, flat
``key = value`` config files) and is deterministic given ``--seed``: a
master seed derives per-chain and per-restart streams, and every run
directory echoes the configuration actually used.
"""
from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .csbm import Graphs, simulate
from .eperpf import family_from_spec, uniform_given_partition
from .gibbs import DrawArchive, SamplerConfig, run
from .oracle import enumerate_permutations, exact_posterior_table, exact_prior_table
from .perm_core import Permutation, canonical_cycles, cayley_distance
from .summarize import (
    PosteriorPermSample,
    SummaryConfig,
    expected_cayley,
    fast_persalso,
    frobenius_discrepancy,
    auc_parent,
    nmi,
    partition_point_estimate,
    persalso,
)
from .csbm import Hyperparams, ParentMatrix


# ---------------------------------------------------------------------------
# file formats


def read_graph(path, fmt: str | None = None, n: int | None = None) -> np.ndarray:
    """Read an adjacency matrix: dense 0/1 CSV or a 1-based edge list.

    Auto-detection: a square table of 0/1 entries is dense; two integer
    columns are an undirected edge list (deduplicated, n inferred from the
    largest node unless given).
    """
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.split("#")[0].strip()
            if not line:
                continue
            parts = line.replace(",", " ").split()
            rows.append([int(float(t)) for t in parts])
    if not rows:
        raise ValueError(f"{path}: empty graph file")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise ValueError(f"{path}: ragged rows")
    arr = np.asarray(rows, dtype=np.int64)
    if fmt is None:
        if arr.shape[0] == arr.shape[1] and arr.min() >= 0 and arr.max() <= 1:
            fmt = "dense"
        elif width == 2:
            fmt = "edges"
        else:
            raise ValueError(f"{path}: cannot auto-detect format")
    if fmt == "dense":
        return arr.astype(np.uint8)
    if fmt != "edges":
        raise ValueError(f"unknown graph format {fmt!r}")
    if width != 2:
        raise ValueError(f"{path}: edge list needs two columns")
    size = int(arr.max()) if n is None else n
    if arr.min() < 1 or arr.max() > size:
        raise ValueError(f"{path}: edge endpoints outside 1..{size}")
    y = np.zeros((size, size), dtype=np.uint8)
    for u, v in arr:
        if u != v:
            y[u - 1, v - 1] = y[v - 1, u - 1] = 1
    return y


def write_graph(path, y: np.ndarray):
    with open(path, "w") as fh:
        for row in y:
            fh.write(",".join(str(int(x)) for x in row) + "\n")


def read_permutation(path) -> Permutation:
    with open(path) as fh:
        return Permutation.from_text(fh.read())


def write_permutation(path, pi: Permutation):
    with open(path, "w") as fh:
        fh.write(pi.to_text() + "\n")


def read_config_file(path) -> dict:
    """Flat ``key = value`` pairs; values parsed as bool, int, float or string."""
    out = {}
    with open(path) as fh:
        for line in fh:
            line = line.split("#")[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}: malformed line {line!r}")
            key, _, raw = line.partition("=")
            out[key.strip()] = _parse_value(raw.strip())
    return out


def _parse_value(raw: str):
    raw = raw.strip().strip('"').strip("'")
    if raw.lower() in ("true", "false"):
        return raw.lower() == "true"
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        pass
    return raw


def _write_config_echo(path, values: dict):
    with open(path, "w") as fh:
        for key in sorted(values):
            val = values[key]
            if isinstance(val, str):
                fh.write(f'{key} = "{val}"\n')
            else:
                fh.write(f"{key} = {val}\n")


def _family_from_args(args) -> object:
    params = {}
    if args.theta is not None:
        params["theta"] = args.theta
    if args.discount is not None:
        params["discount"] = args.discount
    if getattr(args, "gamma", None) is not None:
        params["gamma"] = args.gamma
    return family_from_spec(args.family, **params)


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(args) -> int:
    rng = np.random.default_rng(args.seed)
    os.makedirs(args.out, exist_ok=True)
    if args.blocks is not None:
        sizes = [args.n // args.blocks] * args.blocks
        for i in range(args.n - sum(sizes)):
            sizes[i] += 1
        z = [j + 1 for j, size in enumerate(sizes) for _ in range(size)]
        pi = uniform_given_partition(z, rng)
        k = args.blocks
        xi = np.full((k, k), args.p_out)
        np.fill_diagonal(xi, args.p_in)
        truth, parent, graphs = simulate(
            args.n, rng, pi=pi, xi=xi, alpha=args.alpha, beta=args.beta
        )
    else:
        family = _family_from_args(args)
        truth, parent, graphs = simulate(
            args.n,
            rng,
            family=family,
            a_xi=args.a_xi,
            b_xi=args.b_xi,
            alpha=args.alpha,
            beta=args.beta,
        )
    write_graph(os.path.join(args.out, "y1.csv"), graphs.y1)
    write_graph(os.path.join(args.out, "y2.csv"), graphs.y2)
    write_graph(os.path.join(args.out, "parent.csv"), parent.y)
    write_permutation(os.path.join(args.out, "pi.txt"), truth)
    z = canonical_cycles(truth).z
    with open(os.path.join(args.out, "z.txt"), "w") as fh:
        fh.write(" ".join(str(t) for t in z) + "\n")
    echo = {
        "n": args.n,
        "alpha": args.alpha,
        "beta": args.beta,
        "seed": args.seed,
    }
    if args.blocks is not None:
        echo.update(blocks=args.blocks, p_in=args.p_in, p_out=args.p_out)
    else:
        echo.update(family=args.family, a_xi=args.a_xi, b_xi=args.b_xi)
    _write_config_echo(os.path.join(args.out, "config"), echo)
    print(f"simulated n={args.n} into {args.out}")
    return 0


def _sampler_config_from(args) -> SamplerConfig:
    values: dict = {}
    if args.config:
        values.update(read_config_file(args.config))
    for key in (
        "n_iter",
        "burn_in",
        "thin",
        "seed",
        "init",
        "init_sweeps",
        "check_every",
    ):
        cli_val = getattr(args, key, None)
        if cli_val is not None:
            values[key] = cli_val
    if getattr(args, "store_parent", False):
        values["store_parent"] = True
    fam_name = values.pop("family", None)
    fam_params = {
        key.removeprefix("family_"): values.pop(key)
        for key in list(values)
        if key.startswith("family_")
    }
    if getattr(args, "family", None):
        fam_name = args.family
        fam_params = {}
        for pname in ("theta", "discount", "gamma"):
            pval = getattr(args, pname, None)
            if pval is not None:
                fam_params[pname] = pval
    family = family_from_spec(fam_name or "dirichlet", **(fam_params or {"theta": 1.0}))
    hyper = Hyperparams(
        a0=values.pop("a0", 1.0),
        b0=values.pop("b0", 1.0),
        a1=values.pop("a1", 1.0),
        b1=values.pop("b1", 1.0),
        a_xi=values.pop("a_xi", 1.0),
        b_xi=values.pop("b_xi", 1.0),
    )
    return SamplerConfig(family=family, hyper=hyper, **values)


def cmd_fit(args) -> int:
    y1 = read_graph(args.graph1, fmt=args.format, n=args.n)
    y2 = read_graph(args.graph2, fmt=args.format, n=args.n)
    graphs = Graphs(y1, y2)
    config = _sampler_config_from(args)
    os.makedirs(args.out, exist_ok=True)
    if args.chains == 1:
        archive = run(graphs, config)
        archive.save(args.out)
        print(f"fit: {archive.n_draws} draws -> {args.out}")
        return 0
    children = np.random.SeedSequence(config.seed).spawn(args.chains)
    for c, seq in enumerate(children):
        chain_seed = int(seq.generate_state(1)[0])
        chain_config = SamplerConfig(
            **{**_config_kwargs(config), "seed": chain_seed}
        )
        archive = run(graphs, chain_config)
        chain_dir = os.path.join(args.out, f"chain{c:02d}")
        archive.save(chain_dir)
        print(f"fit: chain {c} seed {chain_seed} -> {chain_dir}")
    return 0


def _config_kwargs(config: SamplerConfig) -> dict:
    return {
        "n_iter": config.n_iter,
        "burn_in": config.burn_in,
        "thin": config.thin,
        "seed": config.seed,
        "family": config.family,
        "hyper": config.hyper,
        "update_theta": config.update_theta,
        "theta_shape": config.theta_shape,
        "theta_rate": config.theta_rate,
        "check_every": config.check_every,
        "init": config.init,
        "init_sweeps": config.init_sweeps,
        "store_parent": config.store_parent,
    }


def cmd_summarize(args) -> int:
    rows = DrawArchive.load_pi_draws(args.draws)
    sample = PosteriorPermSample(rows)
    config = SummaryConfig(
        n_zeal=args.n_zeal,
        n_runs=args.n_runs,
        seed=args.seed,
        fast_mode=args.fast,
    )
    if args.fast:
        if args.zhat:
            with open(args.zhat) as fh:
                z_hat = np.asarray([int(t) for t in fh.read().split()])
        else:
            z_draws = np.stack(
                [canonical_cycles(Permutation(tuple(row))).z for row in rows]
            )
            z_hat = partition_point_estimate(
                z_draws, rng=np.random.default_rng(args.seed)
            )
        pi_hat, f_c = fast_persalso(sample, z_hat, config)
    else:
        pi_hat, f_c = persalso(sample, config)
    write_permutation(args.out, pi_hat)

    header = ["n", "n_draws", "f_c"]
    values = [str(sample.n), str(sample.size), repr(float(f_c))]
    if args.truth:
        truth = read_permutation(args.truth)
        header += ["d_c_truth", "post_expected_d_c_truth", "nmi_truth"]
        values += [
            str(cayley_distance(pi_hat, truth)),
            repr(float(expected_cayley(sample, truth))),
            repr(float(nmi(canonical_cycles(pi_hat).z, canonical_cycles(truth).z))),
        ]
    if args.graph1 and args.graph2:
        graphs = Graphs(read_graph(args.graph1), read_graph(args.graph2))
        header.append("frobenius")
        values.append(repr(float(frobenius_discrepancy(graphs, pi_hat))))
    if args.parent_draws and args.parent_truth:
        bits = _read_parent_bits(args.parent_draws)
        truth_parent = ParentMatrix(read_graph(args.parent_truth))
        header.append("auc")
        values.append(repr(float(auc_parent(bits, truth_parent))))
    if args.report:
        with open(args.report, "w") as fh:
            fh.write(",".join(header) + "\n")
            fh.write(",".join(values) + "\n")
    print(f"summarize: f_C = {f_c} -> {args.out}")
    return 0


def _read_parent_bits(path) -> np.ndarray:
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append([int(ch) for ch in line])
    return np.asarray(rows, dtype=np.uint8)


def cmd_diagnose(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    rows = DrawArchive.load_pi_draws(args.draws)
    n = rows.shape[1]
    freq = np.zeros((n, n))
    for row in rows:
        freq[np.arange(n), row - 1] += 1.0
    freq /= rows.shape[0]
    with open(os.path.join(args.out, "mapping_freq.csv"), "w") as fh:
        for row in freq:
            fh.write(",".join(repr(float(x)) for x in row) + "\n")
    with open(os.path.join(args.out, "cycle_trace.csv"), "w") as fh:
        fh.write("draw,k\n")
        for i, row in enumerate(rows, start=1):
            k = canonical_cycles(Permutation(tuple(row))).k
            fh.write(f"{i},{k}\n")
    if args.scalars:
        import shutil

        shutil.copyfile(args.scalars, os.path.join(args.out, "trace.csv"))
    print(f"diagnose: {rows.shape[0]} draws -> {args.out}")
    return 0


def cmd_oracle(args) -> int:
    if args.table == "prior":
        family = _family_from_args(args)
        table = exact_prior_table(family, args.n)
    else:
        y1 = read_graph(args.graph1)
        y2 = read_graph(args.graph2)
        table = exact_posterior_table(
            Graphs(y1, y2), Hyperparams(), _family_from_args(args)
        )
    with open(args.out, "w") as fh:
        fh.write("one_line,log_prob\n")
        for key, logp in sorted(table.entries.items()):
            fh.write('"' + " ".join(str(x) for x in key) + f'",{logp!r}\n')
    print(f"oracle: {len(table.entries)} rows -> {args.out}")
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_family_args(p, default=None):
    p.add_argument("--family", default=default)
    p.add_argument("--theta", type=float, default=None)
    p.add_argument("--discount", type=float, default=None)
    p.add_argument("--gamma", type=float, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="permatch",
        description="Bayesian graph matching with exchangeable permutation priors",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="draw a correlated pair of networks")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--blocks", type=int, default=None)
    p.add_argument("--p-in", dest="p_in", type=float, default=0.6)
    p.add_argument("--p-out", dest="p_out", type=float, default=0.1)
    _add_family_args(p, default="dirichlet")
    p.add_argument("--a-xi", dest="a_xi", type=float, default=1.0)
    p.add_argument("--b-xi", dest="b_xi", type=float, default=1.0)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--beta", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="run the Gibbs sampler")
    p.add_argument("--graph1", required=True)
    p.add_argument("--graph2", required=True)
    p.add_argument("--format", choices=("dense", "edges"), default=None)
    p.add_argument("--n", type=int, default=None, help="node count for edge lists")
    p.add_argument("--config", default=None)
    p.add_argument("--n-iter", dest="n_iter", type=int, default=None)
    p.add_argument("--burn-in", dest="burn_in", type=int, default=None)
    p.add_argument("--thin", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--init", choices=("sbm", "pa_gcrp", "identity"), default=None)
    p.add_argument("--init-sweeps", dest="init_sweeps", type=int, default=None)
    p.add_argument("--check-every", dest="check_every", type=int, default=None)
    p.add_argument("--store-parent", dest="store_parent", action="store_true")
    _add_family_args(p)
    p.add_argument("--chains", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("summarize", help="point estimate from permutation draws")
    p.add_argument("--draws", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--report", default=None)
    p.add_argument("--truth", default=None)
    p.add_argument("--graph1", default=None)
    p.add_argument("--graph2", default=None)
    p.add_argument("--parent-draws", dest="parent_draws", default=None)
    p.add_argument("--parent-truth", dest="parent_truth", default=None)
    p.add_argument("--fast", action="store_true")
    p.add_argument("--zhat", default=None)
    p.add_argument("--n-runs", dest="n_runs", type=int, default=8)
    p.add_argument("--n-zeal", dest="n_zeal", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("diagnose", help="trace and mapping-frequency diagnostics")
    p.add_argument("--draws", required=True)
    p.add_argument("--scalars", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("oracle", help="dump exact small-n tables")
    p.add_argument("table", choices=("prior", "posterior"))
    p.add_argument("--n", type=int, default=4)
    _add_family_args(p, default="dirichlet")
    p.add_argument("--graph1", default=None)
    p.add_argument("--graph2", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_oracle)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
