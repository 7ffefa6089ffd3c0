"""Command line front end.

Models are JSON objects ``{"n": .., "edges": [[v, w], ..], "J": [..], "mu": [..]}``;
a decomposition is ``{"c": .., "root": .., "nodes": [..]}``.  Files written
by ``gen`` hold ``{"model": .., "decomposition": .., "seed": ..}`` and are
accepted wherever a model is expected.  Errors are printed to stdout as
``{"error": kind, "message": ..}`` with exit status 1.
"""
from __future__ import annotations

import csv
import functools
import json
import sys
import time

import click
import numpy as np

from . import approx as approx_mod
from .decomposition import NiceDecomposition, single_node, validate
from .decomposition import infer as dec_infer
from .decomposition import sample as dec_sample
from .errors import InvalidDecomposition, IsingError, NotK33Free
from .generator import random_k33_free, random_planar_model
from .graph import is_planar
from .minorfree import k5_decompose, k33_decompose
from .model import IsingModel
from .oracle import brute_force_log_Z, brute_force_marginals, grid_transfer_log_Z
from .planar import log_Z_planar, sample_planar

APPROX_COLUMNS = ["trial", "alpha", "family", "bound", "exact", "e_logZ", "e_pair",
                  "e_singleton", "iters", "wall_ms"]
BENCH_COLUMNS = ["N", "infer_ms", "sample_ms"]


def _fail(err: IsingError):
    click.echo(json.dumps(err.to_dict()))
    sys.exit(1)


def reports_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except IsingError as err:
            _fail(err)
    return wrapper


def _seed(seed):
    if seed is None:
        seed = int(np.random.SeedSequence().entropy % (1 << 63))
        click.echo(f"seed: {seed}", err=True)
    return seed


def make_rng(seed) -> np.random.Generator:
    """Counter-based generator, so streams can be split reproducibly."""
    return np.random.Generator(np.random.Philox(seed))


def load_model(path):
    with open(path) as fh:
        data = json.load(fh)
    dec = None
    if "model" in data:
        if data.get("decomposition") is not None:
            dec = NiceDecomposition.from_dict(data["decomposition"])
        data = data["model"]
    return IsingModel.from_dict(data), dec


def load_decomposition(path):
    with open(path) as fh:
        return NiceDecomposition.from_dict(json.load(fh))


def auto_decompose(model: IsingModel):
    """``None`` for planar graphs, else a K33-free or K5-free decomposition."""
    if is_planar(model.graph):
        return None
    try:
        return k33_decompose(model.graph)
    except NotK33Free:
        return k5_decompose(model.graph)


def route(model, dec):
    """Planar engine when no decomposition is needed, else a checked decomposition."""
    if dec is None:
        dec = auto_decompose(model)
    elif validate(model.graph, dec):
        raise InvalidDecomposition("; ".join(str(v) for v in validate(model.graph, dec)[:5]))
    return dec


@click.group()
def main():
    """Exact inference and sampling for zero-field Ising models."""


@main.command()
@click.argument("model_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--dec", "dec_path", type=click.Path(exists=True, dir_okay=False),
              help="Decomposition JSON; found automatically when omitted.")
@reports_errors
def infer(model_path, dec_path):
    """Print log Z."""
    model, dec = load_model(model_path)
    if dec_path:
        dec = load_decomposition(dec_path)
    dec = route(model, dec)
    value = log_Z_planar(model) if dec is None else dec_infer(model, dec)
    click.echo(f"{value:.15g}")


@main.command()
@click.argument("model_path", type=click.Path(exists=True, dir_okay=False))
@click.option("-m", "--samples", default=1, show_default=True, type=click.IntRange(min=0))
@click.option("--seed", type=int)
@click.option("--dec", "dec_path", type=click.Path(exists=True, dir_okay=False))
@click.option("-o", "--out", type=click.File("w"), default="-")
@reports_errors
def sample(model_path, samples, seed, dec_path, out):
    """Write i.i.d. configurations, one row of +-1 per sample."""
    model, dec = load_model(model_path)
    if dec_path:
        dec = load_decomposition(dec_path)
    seed = _seed(seed)
    dec = route(model, dec)
    if samples == 0:
        return
    rng = make_rng(seed)
    X = sample_planar(model, rng, size=samples) if dec is None else dec_sample(model, dec, rng, size=samples)
    for row in np.asarray(X, dtype=int):
        out.write(" ".join(str(v) for v in row) + "\n")


@main.command()
@click.option("--kind", type=click.Choice(["k33free", "planar"]), default="k33free", show_default=True)
@click.option("-n", "--n", "n", required=True, type=int)
@click.option("--seed", type=int)
@click.option("--std", default=0.1, show_default=True, help="Coupling standard deviation.")
@click.option("-o", "--out", type=click.File("w"), default="-")
@reports_errors
def gen(kind, n, seed, std, out):
    """Generate a random model together with a valid decomposition."""
    seed = _seed(seed)
    if kind == "planar":
        model = random_planar_model(n, seed, std=std)
        data = {"model": model.to_dict(), "decomposition": single_node(model.graph).to_dict(),
                "seed": seed}
    else:
        data = random_k33_free(n, seed, std=std).to_dict()
    out.write(json.dumps(data) + "\n")


@main.command()
@click.argument("model_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--method", type=click.Choice(["auto", "k33", "k5"]), default="auto", show_default=True)
@click.option("-o", "--out", type=click.File("w"), default="-")
@reports_errors
def decompose(model_path, method, out):
    """Write a nice decomposition of the model's graph."""
    model, _ = load_model(model_path)
    g = model.graph
    if method == "k33":
        dec = k33_decompose(g)
    elif method == "k5":
        dec = k5_decompose(g)
    else:
        dec = auto_decompose(model) or single_node(g)
    out.write(dec.to_json() + "\n")


@main.command()
@click.option("-H", "--H", "H", default=8, show_default=True, type=int)
@click.option("--alpha", "alphas", multiple=True, type=float, default=(1.0, 2.0, 3.0), show_default=True)
@click.option("--trials", default=20, show_default=True, type=int)
@click.option("--family", type=click.Choice(["psg", "dsg", "both"]), default="both", show_default=True)
@click.option("--seed", type=int)
@click.option("-o", "--out", type=click.File("w"), default="-")
@reports_errors
def approx(H, alphas, trials, family, seed, out):
    """Upper-bound experiment on random H x H grids with fields (CSV)."""
    seed = _seed(seed)
    names = ["psg", "dsg"] if family == "both" else [family]
    fams = {"psg": approx_mod.psg_family, "dsg": approx_mod.dsg_family}
    built = {k: fams[k](H) for k in names}
    writer = csv.writer(out)
    writer.writerow(APPROX_COLUMNS)
    streams = np.random.SeedSequence(seed).spawn(len(alphas))
    for alpha, ss in zip(alphas, streams):
        rng = np.random.Generator(np.random.Philox(ss))
        for t in range(trials):
            ap = approx_mod.random_grid_model(H, alpha, rng)
            exact = approx_mod.exact_reference(ap)
            for k in names:
                res = approx_mod.optimize_bound(ap, built[k])
                e = approx_mod.error_metrics(res, exact)
                writer.writerow([t, alpha, k, f"{res.log_Z_grid:.12g}", f"{exact.log_Z:.12g}",
                                 f"{e[0]:.6g}", f"{e[1]:.6g}", f"{e[2]:.6g}", res.iterations,
                                 f"{res.wall_ms:.1f}"])
                out.flush()


def bench_rows(sizes, seeds, samples=1):
    """Per-size medians of inference and sampling wall time on random K33-free models."""
    rows = []
    for N in sizes:
        ti, ts = [], []
        for s in range(seeds):
            gm = random_k33_free(N, seed=s)
            t0 = time.perf_counter()
            dec_infer(gm.model, gm.decomposition)
            t1 = time.perf_counter()
            dec_sample(gm.model, gm.decomposition, seed=s, size=samples)
            t2 = time.perf_counter()
            ti.append(1e3 * (t1 - t0))
            ts.append(1e3 * (t2 - t1))
        rows.append((N, float(np.median(ti)), float(np.median(ts))))
    return rows


def loglog_slope(xs, ys) -> float:
    return float(np.polyfit(np.log(xs), np.log(ys), 1)[0])


@main.command()
@click.option("--sizes", default="256,512,1024,2048,4096,8192", show_default=True,
              help="Comma separated ascending N values.")
@click.option("--seeds", default=5, show_default=True, type=click.IntRange(min=1))
@click.option("-o", "--out", type=click.File("w"), default="-")
@reports_errors
def bench(sizes, seeds, out):
    """Timing CSV (N, infer_ms, sample_ms) with medians over seeds."""
    Ns = [int(x) for x in sizes.split(",") if x.strip()]
    if Ns != sorted(Ns):
        raise click.BadParameter("sizes must be ascending", param_hint="--sizes")
    rows = bench_rows(Ns, seeds)
    writer = csv.writer(out)
    writer.writerow(BENCH_COLUMNS)
    for N, a, b in rows:
        writer.writerow([N, f"{a:.3f}", f"{b:.3f}"])
    if len(rows) >= 2:
        Nv = [r[0] for r in rows]
        click.echo(f"slope infer={loglog_slope(Nv, [r[1] for r in rows]):.3f} "
                   f"sample={loglog_slope(Nv, [r[2] for r in rows]):.3f}", err=True)


@main.command()
@click.argument("model_path", type=click.Path(exists=True, dir_okay=False), required=False)
@click.option("--grid", "H", type=int, help="Use an H x H grid model instead (transfer matrix).")
@click.option("--alpha", default=1.0, show_default=True)
@click.option("--seed", type=int)
@click.option("--marginals", is_flag=True, help="Also print E[x_v x_w] and E[x_v].")
@reports_errors
def oracle(model_path, H, alpha, seed, marginals):
    """Reference values by enumeration (or transfer matrix for grids)."""
    if H is not None:
        seed = _seed(seed)
        ap = approx_mod.random_grid_model(H, alpha, make_rng(seed))
        if marginals:
            ref = approx_mod.exact_reference(ap)
            click.echo(json.dumps({"log_Z": ref.log_Z, "pair": list(2 * ref.pair - 1),
                                   "single": list(2 * ref.single - 1)}))
        else:
            click.echo(f"{grid_transfer_log_Z(H, ap.grid.J, ap.grid.mu):.15g}")
        return
    if model_path is None:
        raise click.UsageError("give a model file or --grid H")
    model, _ = load_model(model_path)
    if marginals:
        pair, single = brute_force_marginals(model)
        click.echo(json.dumps({"log_Z": brute_force_log_Z(model), "pair": list(pair),
                               "single": list(single)}))
    else:
        click.echo(f"{brute_force_log_Z(model):.15g}")


if __name__ == "__main__":
    main()
