"""Command-line front end: detect / generate / evaluate.

Exit codes: 0 success, 2 user/input error, 3 internal invariant failure,
4 infeasible generator config.
"""

from __future__ import annotations

import functools
import json
import sys
import time

import click
import numpy as np

from . import __version__
from .dataset import load_dataset
from .datagen import (
    SyntheticConfig,
    generate_realistic,
    generate_synthetic,
    save_annotated_csv,
)
from .errors import InfeasibleConfigError, InputError, InternalError, MetricError
from .metrics import evaluate_rankings
from .ranking import DEFAULT_CAPACITY, DEFAULT_ITERATIONS, OutlierRankings, c_allout


def _trap(f):
    @functools.wraps(f)
    def wrapper(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except InfeasibleConfigError as exc:
            click.echo(f"infeasible config: {exc}", err=True)
            sys.exit(4)
        except InternalError as exc:
            click.echo(f"internal invariant failure: {exc}", err=True)
            sys.exit(3)
        except (InputError, MetricError, ValueError, OSError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(2)

    return wrapper


def _write_json(path, payload) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def _manifest(command: str, config: dict, inputs: dict, seconds: float,
              distance_calls: int | None = None) -> dict:
    out = {
        "command": command,
        "tool_version": __version__,
        "config": config,
        "inputs": inputs,
        "timings": {"seconds": seconds},
    }
    if distance_calls is not None:
        out["distance_calls"] = distance_calls
    return out


@click.group()
@click.version_option(__version__)
def main() -> None:
    """Detect outliers, call their types, and reproduce the testbeds."""


@main.command()
@click.argument("input_path", type=click.Path(exists=True, dir_okay=False))
@click.option("-b", "--iterations", default=DEFAULT_ITERATIONS, show_default=True,
              help="Refinement iteration cap.")
@click.option("--capacity", default=DEFAULT_CAPACITY, show_default=True,
              help="Tree node capacity.")
@click.option("--distance-matrix", is_flag=True,
              help="Treat the input as an n x n distance matrix.")
@click.option("--metric", default="euclidean", show_default=True)
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False))
@click.option("--format", "fmt", type=click.Choice(["json", "csv"]), default="json",
              show_default=True)
@click.option("--threads", default=1, show_default=True, envvar="CALLOUT_THREADS",
              help="Scoring threads; output is identical for any value.")
@_trap
def detect(input_path, iterations, capacity, distance_matrix, metric, output, fmt, threads):
    """Rank outliers in INPUT_PATH and write the four rankings + scores."""
    ds = load_dataset(input_path, distance_matrix=distance_matrix, metric=metric)
    t0 = time.perf_counter()
    result = c_allout(ds, b=iterations, capacity=capacity, threads=threads)
    seconds = time.perf_counter() - t0
    table = result.scores
    if fmt == "json":
        payload = {
            "n": ds.n,
            "rankings": result.rankings.as_dict(),
            "scores": {
                "s_o": [float(v) for v in table.s_o],
                "s_g": [float(v) for v in table.s_g],
                "s_c": [float(v) for v in table.s_c],
                "d_nn": [float(v) for v in table.d_nn],
            },
            "knee_radius": float(result.rankings.knee_radius),
        }
        _write_json(output, payload)
    else:
        pos = {}
        for name, perm in result.rankings.as_dict().items():
            p = np.empty(ds.n, dtype=int)
            p[np.asarray(perm)] = np.arange(1, ds.n + 1)
            pos[name] = p
        with open(output, "w") as fh:
            fh.write("object_id,overall_rank,global_rank,local_rank,collective_rank,"
                     "s_o,s_g,s_c,d_nn\n")
            for i in range(ds.n):
                fh.write(
                    f"{i},{pos['overall'][i]},{pos['global'][i]},{pos['local'][i]},"
                    f"{pos['collective'][i]},{table.s_o[i]!r},{table.s_g[i]!r},"
                    f"{table.s_c[i]!r},{table.d_nn[i]!r}\n"
                )
    config = {
        "b": iterations,
        "capacity": capacity,
        "seed": None,
        "metric": ds.metric,
        "threads": threads,
        "format": fmt,
    }
    _write_json(
        f"{output}.manifest.json",
        _manifest("detect", config, {"input": str(input_path), "n": ds.n}, seconds,
                  distance_calls=result.diagnostics["distance_calls"]),
    )
    click.echo(
        f"detect: n={ds.n} iterations={result.diagnostics['iterations_used']} "
        f"leaves={result.diagnostics['n_leaves']} wrote {output}"
    )


def _synthetic_config(raw: dict, seed: int) -> SyntheticConfig:
    required = {"n_clusters", "pts_per_cluster_range", "n_outliers_total",
                "inlier_std_range", "dims"}
    missing = required - raw.keys()
    if missing:
        raise InputError(f"synthetic config missing keys: {sorted(missing)}")
    known = required | {"local_std_factor", "global_std_factor",
                        "collective_cluster_size", "collective_std_fraction", "seed"}
    unknown = raw.keys() - known
    if unknown:
        raise InputError(f"synthetic config has unknown keys: {sorted(unknown)}")
    kwargs = {k: v for k, v in raw.items() if k != "seed"}
    kwargs["pts_per_cluster_range"] = tuple(kwargs["pts_per_cluster_range"])
    kwargs["inlier_std_range"] = tuple(kwargs["inlier_std_range"])
    return SyntheticConfig(seed=seed, **kwargs)


@main.command()
@click.argument("kind", type=click.Choice(["synthetic", "realistic"]))
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--seed", default=0, show_default=True,
              help="Single source of randomness for the run.")
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False))
@_trap
def generate(kind, config_path, seed, output):
    """Generate a labeled dataset from a JSON config and write it as CSV."""
    with open(config_path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InputError(f"{config_path}: invalid JSON ({exc})") from exc
    t0 = time.perf_counter()
    if kind == "synthetic":
        cfg = _synthetic_config(raw, seed)
        dataset = generate_synthetic(cfg)
        config_echo = dict(raw, seed=seed)
    else:
        for key in ("inliers", "counts"):
            if key not in raw:
                raise InputError(f"realistic config missing key: {key}")
        base = load_dataset(raw["inliers"])
        if base.features is None:
            raise InputError("realistic generation needs a feature CSV, not a distance matrix")
        counts = tuple(int(c) for c in raw["counts"])
        if len(counts) != 3:
            raise InputError(f"counts must be [global, local, collective], got {raw['counts']}")
        dataset = generate_realistic(base.features, counts, k_max=int(raw.get("k_max", 9)),
                                     seed=seed)
        config_echo = dict(raw, seed=seed)
    seconds = time.perf_counter() - t0
    save_annotated_csv(dataset, output)
    manifest = _manifest(f"generate {kind}", config_echo, {"config_file": str(config_path)},
                         seconds)
    manifest["counts"] = dataset.counts()
    manifest["n"] = dataset.n
    _write_json(f"{output}.manifest.json", manifest)
    counts = dataset.counts()
    click.echo(
        f"generate {kind}: n={dataset.n} "
        f"global={counts['global']} local={counts['local']} "
        f"collective={counts['collective']} wrote {output}"
    )


@main.command()
@click.argument("rankings_file", type=click.Path(exists=True, dir_okay=False))
@click.argument("labels_file", type=click.Path(exists=True, dir_okay=False))
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False))
@_trap
def evaluate(rankings_file, labels_file, output):
    """Score a detect run against labeled ground truth."""
    with open(rankings_file) as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InputError(f"{rankings_file}: invalid JSON ({exc})") from exc
    try:
        perms = payload["rankings"]
        rankings = OutlierRankings(
            overall=np.asarray(perms["overall"], dtype=int),
            global_=np.asarray(perms["global"], dtype=int),
            local=np.asarray(perms["local"], dtype=int),
            collective=np.asarray(perms["collective"], dtype=int),
            knee_radius=float(payload.get("knee_radius", 0.0)),
            local_set_size=0,
        )
        n = int(payload["n"])
    except (KeyError, TypeError) as exc:
        raise InputError(f"{rankings_file}: not a rankings file ({exc})") from exc
    labeled = load_dataset(labels_file)
    if labeled.labels is None:
        raise InputError(f"{labels_file}: no label column")
    if labeled.n != n:
        raise InputError(f"count mismatch: rankings for n={n}, labels for n={labeled.n}")
    report = evaluate_rankings(rankings, labeled.labels)
    _write_json(output, report)
    for name, entry in report.items():
        if entry is None:
            click.echo(f"{name}: skipped (no positives of this type)")
        else:
            click.echo(
                f"{name}: AUCROC={entry['aucroc']:.4f} AUCPR={entry['aucpr']:.4f} "
                f"(n_pos={entry['n_pos']})"
            )


if __name__ == "__main__":  # pragma: no cover
    main()
