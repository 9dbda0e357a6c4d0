"""Command line driver: simulate, build training triples, train the CDF
network, construct confidence sets, check coverage, and run the chi-square
baseline fit.

All commands read one YAML config (nested key/value) selected with
``--config``; individual keys can be overridden with ``--set a.b.c=value``.
Every stochastic stage derives its streams from the single ``seed`` key, on
a stage-specific stream id, so reruns and different worker counts produce
byte-identical outputs.

Exit codes: 0 success, 2 config error, 3 training failure, 4 fit
non-convergence.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from confsim import cosmo
from confsim.core import ParamPoint, SeedSpec, UniformBoxPrior, derive_stream, map_indexed
from confsim.inference import (
    CdfEstimate,
    HistogramCdf,
    GridSpec,
    NetworkCdf,
    TripleSet,
    confidence_set,
    coverage,
    histogram_cdf,
    make_training_set,
)
from confsim.nn import MlpSpec, TrainConfig, TrainingDiverged, load_model, save_model, train
from confsim.problems import Problem, build_problem, bundled_data_path

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_TRAIN = 3
EXIT_FIT = 4

# stage-specific stream ids keep the random streams of different pipeline
# stages disjoint even though they share one root seed
STAGE_SIMULATE = 1
STAGE_TRIPLES = 2
STAGE_COVERAGE = 4
STAGE_FIT = 5


class ConfigError(Exception):
    pass


DEFAULTS: dict = {
    "onoff": {
        "problem": "onoff",
        "seed": 20240501,
        "outdir": "runs/onoff",
        "workers": 1,
        "prior": {"lows": [0.0, 0.0], "highs": [20.0, 20.0]},
        "observed": {"N": 3, "M": 7},
        "simulator": {},
        "network": {
            "hidden": [12, 12, 12, 12, 12, 12],
            "activation": "prelu",
            "batch_norm": True,
            "feature_scale": [10.0, 20.0, 20.0],
        },
        "train": {
            "batch_size": 1024,
            "learning_rate": 6.0e-4,
            "max_iterations": 120000,
            "patience_iterations": 25000,
            "validation_fraction": 0.05,
            "eval_every": 500,
        },
        "make_train": {"observed_mode": "shuffle"},
        "histogram": {"bins": 10},
        "grid": {"shape": [200, 200]},
        "taus": [0.68, 0.80, 0.90, 0.95],
    },
    "cosmo": {
        "problem": "cosmo",
        "seed": 20240501,
        "outdir": "runs/cosmo",
        "workers": 1,
        "prior": {"lows": [0.05, 66.0], "highs": [0.65, 76.0]},
        "observed": {},
        "simulator": {},
        "network": {
            "hidden": [20, 20, 20, 20, 20],
            "activation": "relu",
            "batch_norm": False,
            "feature_scale": [1.0, 10.0, 100.0],
        },
        "train": {
            "batch_size": 50,
            "learning_rate": 1.0e-3,
            "max_iterations": 200000,
            "patience_iterations": 50000,
            "validation_fraction": 0.02,
            "eval_every": 500,
        },
        "make_train": {"observed_mode": "shuffle"},
        "histogram": {"bins": 10},
        "grid": {"shape": [200, 200]},
        "taus": [0.68, 0.80, 0.90, 0.95],
    },
    "sir": {
        "problem": "sir",
        "seed": 20240501,
        "outdir": "runs/sir",
        "workers": 1,
        "prior": {"lows": [0.1, 1.25e-3], "highs": [0.9, 3.25e-3]},
        "observed": {},
        "simulator": {"population": 763, "s0": 762, "i0": 1, "r0": 0},
        "network": {
            "hidden": [25, 25, 25, 25, 25, 25],
            "activation": "relu",
            "batch_norm": False,
            "feature_scale": [1.0, 1.0, 0.005],
        },
        "train": {
            "batch_size": 50,
            "learning_rate": 1.0e-3,
            "max_iterations": 200000,
            "patience_iterations": 50000,
            "validation_fraction": 0.02,
            "eval_every": 500,
        },
        "make_train": {"observed_mode": "shuffle"},
        "histogram": {"bins": 10},
        "grid": {"shape": [200, 200]},
        "taus": [0.68, 0.80, 0.90, 0.95],
    },
}


def _deep_merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _deep_merge(out[k], v)
        else:
            out[k] = v
    return out


def _apply_set(cfg: dict, assignment: str) -> None:
    if "=" not in assignment:
        raise ConfigError(f"--set expects key.path=value, got {assignment!r}")
    path, raw = assignment.split("=", 1)
    keys = path.strip().split(".")
    node = cfg
    for k in keys[:-1]:
        if not isinstance(node.get(k), dict):
            node[k] = {}
        node = node[k]
    node[keys[-1]] = yaml.safe_load(raw)


def load_config(path: str | None, problem: str | None, sets: list[str]) -> dict:
    user: dict = {}
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {path}")
        with open(p) as fh:
            user = yaml.safe_load(fh) or {}
        if not isinstance(user, dict):
            raise ConfigError(f"config root must be a mapping, got {type(user).__name__}")
    name = problem or user.get("problem")
    if name not in DEFAULTS:
        raise ConfigError(
            f"problem must be one of {sorted(DEFAULTS)}, got {name!r} "
            "(set it in the config or with --problem)"
        )
    cfg = _deep_merge(copy.deepcopy(DEFAULTS[name]), user)
    cfg["problem"] = name
    for s in sets:
        _apply_set(cfg, s)
    return cfg


@dataclass
class RunConfig:
    raw: dict
    problem: Problem
    seed: int
    outdir: Path
    workers: int
    taus: tuple[float, ...]
    grid_shape: tuple[int, ...]

    def stage_seed(self, stage: int) -> SeedSpec:
        return SeedSpec(self.seed, stream_id=stage)


def validate_config(cfg: dict) -> RunConfig:
    try:
        lows = [float(v) for v in cfg["prior"]["lows"]]
        highs = [float(v) for v in cfg["prior"]["highs"]]
        seed = int(cfg["seed"])
        workers = int(cfg.get("workers", 1))
        taus = tuple(float(t) for t in cfg["taus"])
        grid_shape = tuple(int(n) for n in cfg["grid"]["shape"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    if any(b <= a for a, b in zip(taus, taus[1:])) or any(not 0 < t < 1 for t in taus):
        raise ConfigError(f"taus must be strictly increasing within (0, 1), got {taus}")
    if workers < 1:
        raise ConfigError("workers must be >= 1")
    name = cfg["problem"]
    names = {"onoff": ("mu", "nu"), "cosmo": ("n", "H0"), "sir": ("alpha", "beta")}[name]
    try:
        prior = UniformBoxPrior(tuple(lows), tuple(highs), names)
    except ValueError as exc:
        raise ConfigError(f"invalid prior box: {exc}") from exc
    for key in ("template", "data"):
        val = cfg.get("simulator", {}).get(key)
        if val is not None and not Path(val).exists():
            raise ConfigError(f"simulator.{key} file not found: {val}")
    obs_file = cfg.get("observed", {}).get("file")
    if obs_file is not None and not Path(obs_file).exists():
        raise ConfigError(f"observed.file not found: {obs_file}")
    try:
        problem = build_problem(name, prior, cfg.get("simulator", {}))
    except (ValueError, OSError) as exc:
        raise ConfigError(f"cannot build problem {name!r}: {exc}") from exc
    return RunConfig(
        cfg, problem, seed, Path(cfg["outdir"]), workers, taus, grid_shape
    )


def load_observed(rc: RunConfig):
    obs = rc.raw.get("observed", {})
    if "file" in obs and obs["file"] is not None:
        return rc.problem.read_dataset(Path(obs["file"]))
    if rc.problem.name == "onoff":
        if "N" not in obs or "M" not in obs:
            raise ConfigError("onoff observed data needs N and M (or observed.file)")
        from confsim.onoff import OnOffData

        return OnOffData(int(obs["N"]), int(obs["M"]))
    if rc.problem.name == "cosmo":
        return rc.problem.read_dataset(
            Path(rc.raw.get("simulator", {}).get("template", bundled_data_path("sn_moduli.csv")))
        )
    return rc.problem.read_dataset(
        Path(rc.raw.get("simulator", {}).get("data", bundled_data_path("boarding_school_flu.csv")))
    )


def _mlp_spec(rc: RunConfig) -> tuple[MlpSpec, np.ndarray]:
    net = rc.raw["network"]
    sizes = (1 + rc.problem.prior.dim, *[int(h) for h in net["hidden"]], 1)
    spec = MlpSpec(sizes, net.get("activation", "relu"), bool(net.get("batch_norm", False)))
    scale = np.asarray([float(v) for v in net["feature_scale"]], dtype=float)
    return spec, scale


def _train_config(rc: RunConfig) -> TrainConfig:
    t = rc.raw["train"]
    return TrainConfig(
        batch_size=int(t["batch_size"]),
        learning_rate=float(t["learning_rate"]),
        max_iterations=int(t["max_iterations"]),
        patience_iterations=int(t["patience_iterations"]),
        validation_fraction=float(t["validation_fraction"]),
        seed=int(t.get("seed", rc.seed)),
        eval_every=int(t.get("eval_every", 500)),
    )


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


# ---------------------------------------------------------------------------
# triples and artifacts on disk
# ---------------------------------------------------------------------------


def write_triples(triples: TripleSet, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["z", "lambda_obs", *triples.param_names])
        for i in range(len(triples)):
            w.writerow(
                [int(triples.z[i]), _fmt(triples.lambda_obs[i]),
                 *(_fmt(v) for v in triples.thetas[i])]
            )


def read_triples(path: Path) -> TripleSet:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:2] != ["z", "lambda_obs"]:
            raise ConfigError(f"{path}: expected triple CSV header z,lambda_obs,...")
        names = tuple(header[2:])
        z, lam, thetas = [], [], []
        for row in reader:
            z.append(int(row[0]))
            lam.append(float(row[1]))
            thetas.append([float(v) for v in row[2:]])
    return TripleSet(
        np.array(z, dtype=np.uint8), np.array(lam), np.array(thetas, dtype=float),
        names, n_requested=len(z), n_failed=0,
    )


def save_histogram(est: HistogramCdf, names: tuple[str, ...], path: Path) -> None:
    arrays = {"h_values": est.values, "h_counts": est.counts}
    for k, e in enumerate(est.edges):
        arrays[f"edges{k}"] = e
    header = json.dumps({"names": list(names), "dim": len(est.edges)})
    np.savez(path, header=np.frombuffer(header.encode(), dtype=np.uint8), **arrays)


def load_estimator(path: Path, domain: UniformBoxPrior | None = None) -> CdfEstimate:
    with np.load(path) as data:
        if "h_values" in data:
            header = json.loads(bytes(data["header"]).decode())
            edges = [data[f"edges{k}"] for k in range(header["dim"])]
            return HistogramCdf(edges, data["h_values"], data["h_counts"])
    return NetworkCdf(load_model(path), domain=domain)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_simulate(rc: RunConfig, count: int) -> list[Path]:
    """Draw ``count`` (theta, dataset) pairs from the prior and simulator."""
    if count < 1:
        raise ConfigError("count must be >= 1")
    rc.outdir.mkdir(parents=True, exist_ok=True)
    seed = rc.stage_seed(STAGE_SIMULATE)
    prior = rc.problem.prior

    def one(i: int):
        rng = derive_stream(seed, i)
        from confsim.core import prior_sample

        theta = prior_sample(prior, rng)
        return theta, rc.problem.simulate(theta, rng)

    rows = map_indexed(one, count, rc.workers)
    written: list[Path] = []
    thetas_path = rc.outdir / "thetas.csv"
    with open(thetas_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["dataset", *prior.names])
        for i, (theta, _) in enumerate(rows):
            w.writerow([i, *(_fmt(v) for v in theta.values)])
    written.append(thetas_path)
    if rc.problem.name == "onoff":
        path = rc.outdir / "datasets.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([*prior.names, "N", "M"])
            for theta, d in rows:
                w.writerow([*(_fmt(v) for v in theta.values), d.N, d.M])
        written.append(path)
    else:
        for i, (_, d) in enumerate(rows):
            path = rc.outdir / f"dataset_{i:04d}.csv"
            rc.problem.write_dataset(d, path)
            written.append(path)
    return written


def cmd_make_train(rc: RunConfig, count: int, out: Path | None = None) -> Path:
    """Build the training triples CSV (z, lambda_obs, parameters)."""
    mode = rc.raw.get("make_train", {}).get("observed_mode", "shuffle")
    if mode not in ("shuffle", "fresh", "fixed"):
        raise ConfigError(f"make_train.observed_mode must be shuffle/fresh/fixed, got {mode!r}")
    observed = load_observed(rc) if mode == "fixed" else mode
    triples = make_training_set(
        rc.problem.simulate,
        rc.problem.statistic,
        rc.problem.prior,
        count,
        rc.stage_seed(STAGE_TRIPLES),
        observed=observed,
        workers=rc.workers,
    )
    rc.outdir.mkdir(parents=True, exist_ok=True)
    out = out or rc.outdir / "triples.csv"
    write_triples(triples, out)
    print(f"wrote {len(triples)} triples to {out} ({triples.n_failed} rows skipped)")
    return out


def cmd_train(rc: RunConfig, triples_path: Path, out: Path | None = None) -> Path:
    """Train the CDF regression network on a triples file."""
    triples = read_triples(triples_path)
    spec, scale = _mlp_spec(rc)
    cfg = _train_config(rc)
    if len(triples) < 10 * cfg.batch_size:
        raise ConfigError(
            f"{len(triples)} triples is fewer than 10 * batch_size = {10 * cfg.batch_size}"
        )
    model, log = train(spec, triples.features(), triples.targets(), cfg, feature_scale=scale)
    rc.outdir.mkdir(parents=True, exist_ok=True)
    out = out or rc.outdir / "model.npz"
    save_model(model, out)
    log_path = out.with_name(out.stem + "_log.csv")
    with open(log_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "train_loss", "val_loss"])
        for it, tr, va in log:
            w.writerow([it, _fmt(tr), _fmt(va)])
    best = min(v for _, _, v in log)
    print(f"best validation loss {best:.6f}; model saved to {out}")
    return out


def cmd_make_hist(rc: RunConfig, triples_path: Path, out: Path | None = None) -> Path:
    """Bin fixed-observed-data triples into the histogram CDF artifact."""
    triples = read_triples(triples_path)
    bins = int(rc.raw.get("histogram", {}).get("bins", 10))
    est = histogram_cdf(triples, bins=bins, box=rc.problem.prior)
    rc.outdir.mkdir(parents=True, exist_ok=True)
    out = out or rc.outdir / "histogram.npz"
    save_histogram(est, triples.param_names, out)
    print(f"histogram CDF with {int(est.valid.sum())} populated bins saved to {out}")
    return out


def cmd_sets(
    rc: RunConfig,
    artifact: Path,
    observed_path: Path | None = None,
    out_grid: Path | None = None,
    out_bound: Path | None = None,
) -> tuple[Path, Path]:
    """Confidence-set grid and boundary CSVs for the observed dataset."""
    est = load_estimator(artifact, domain=rc.problem.prior)
    observed = (
        rc.problem.read_dataset(observed_path) if observed_path else load_observed(rc)
    )
    prior = rc.problem.prior
    grid = GridSpec(prior.lows, prior.highs, rc.grid_shape, prior.names)
    cs = confidence_set(est, observed, rc.problem.statistic, grid, rc.taus)
    rc.outdir.mkdir(parents=True, exist_ok=True)
    out_grid = out_grid or rc.outdir / "set_grid.csv"
    out_bound = out_bound or rc.outdir / "set_boundaries.csv"
    nodes = grid.nodes()
    with open(out_grid, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([*prior.names, "lambda_obs", "phat"])
        lam = cs.lambda_obs.ravel()
        ph = cs.phat.ravel()
        for k in range(nodes.shape[0]):
            w.writerow([*(_fmt(v) for v in nodes[k]), _fmt(lam[k]), _fmt(ph[k])])
    with open(out_bound, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["tau", "segment_id", *prior.names])
        for tau in rc.taus:
            polys = cs.boundaries[tau]
            if not polys:
                print(f"warning: confidence set boundary empty at tau={tau}")
            for si, poly in enumerate(polys):
                for pt in poly:
                    w.writerow([_fmt(tau), si, *(_fmt(v) for v in pt)])
    names = ", ".join(f"{n}={v:.6g}" for n, v in zip(prior.names, cs.best_fit.values))
    print(f"best fit: {names}")
    return out_grid, out_bound


def cmd_coverage(
    rc: RunConfig, artifact: Path, theta_file: Path, T: int, out: Path | None = None
) -> Path:
    """Monte Carlo coverage at each parameter point listed in theta_file."""
    if T < 100:
        raise ConfigError("T must be at least 100")
    est = load_estimator(artifact, domain=rc.problem.prior)
    prior = rc.problem.prior
    points: list[ParamPoint] = []
    with open(theta_file, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or set(prior.names) - set(reader.fieldnames):
            raise ConfigError(f"{theta_file}: expected CSV header with {prior.names}")
        for row in reader:
            vals = tuple(float(row[n]) for n in prior.names)
            if not prior.contains(vals):
                raise ConfigError(f"theta {vals} lies outside the prior box")
            points.append(ParamPoint(vals, prior.names))
    rc.outdir.mkdir(parents=True, exist_ok=True)
    out = out or rc.outdir / "coverage.csv"
    seed = rc.stage_seed(STAGE_COVERAGE)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([*prior.names, "tau", "p", "stderr", "T"])
        for k, theta in enumerate(points):
            rows = coverage(
                est, rc.problem.simulate, rc.problem.statistic, theta,
                rc.taus, T, SeedSpec(seed.root_seed, stream_id=seed.stream_id + 100 * k),
                workers=rc.workers,
            )
            for r in rows:
                w.writerow(
                    [*(_fmt(v) for v in theta.values), _fmt(r.tau), _fmt(r.p),
                     _fmt(r.stderr), r.T]
                )
    print(f"coverage written to {out}")
    return out


def cmd_fit(rc: RunConfig, observed_path: Path | None = None) -> dict:
    """Chi-square baseline fit (supernova problem only)."""
    if rc.problem.name != "cosmo":
        raise ConfigError("the chi-square fit is only defined for the cosmo problem")
    catalog = (
        rc.problem.read_dataset(observed_path) if observed_path else load_observed(rc)
    )
    prior = rc.problem.prior
    bounds = ((prior.lows[0], prior.highs[0]), (prior.lows[1], prior.highs[1]))
    theta, chi2_min = cosmo.fit_chi2(catalog, bounds, seed=rc.seed)
    ndf = len(catalog) - 2
    age, rip = cosmo.age_and_rip(theta)
    report = {
        "n": theta.n,
        "H0": theta.H0,
        "chi2": chi2_min,
        "ndf": ndf,
        "chi2_per_ndf": chi2_min / ndf,
        "age_H0_t0": age,
        "t_rip_over_t0": rip,
    }
    rc.outdir.mkdir(parents=True, exist_ok=True)
    with open(rc.outdir / "fit.json", "w") as fh:
        json.dump(report, fh, indent=2)
    zg = np.geomspace(catalog.z.min(), catalog.z.max(), 256)
    with open(rc.outdir / "fit_curve.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["z", "mu"])
        for z in zg:
            w.writerow([_fmt(z), _fmt(cosmo.distance_modulus(float(z), theta))])
    print(
        f"n={theta.n:.6g} H0={theta.H0:.6g} chi2={chi2_min:.2f} ndf={ndf} "
        f"chi2/ndf={chi2_min / ndf:.4f} H0*t0={age:.4f} t_rip/t0={rip:.4f}"
    )
    return report


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="confsim",
        description="simulation-based confidence sets: simulate, train, invert, validate",
    )
    ap.add_argument("--config", help="YAML config file")
    ap.add_argument("--problem", choices=sorted(DEFAULTS), help="problem preset")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VAL",
                    help="override a config key, e.g. --set train.batch_size=256")
    ap.add_argument("--seed", type=int, help="override the root seed")
    ap.add_argument("--workers", type=int, help="override worker count")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate datasets from the prior")
    p.add_argument("--count", type=int, required=True)

    p = sub.add_parser("make-train", help="generate training triples")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--out", type=Path)

    p = sub.add_parser("train", help="train the CDF network on triples")
    p.add_argument("--triples", type=Path, required=True)
    p.add_argument("--out", type=Path)

    p = sub.add_parser("make-hist", help="histogram CDF artifact from fixed-data triples")
    p.add_argument("--triples", type=Path, required=True)
    p.add_argument("--out", type=Path)

    p = sub.add_parser("sets", help="confidence-set grid and boundaries")
    p.add_argument("--artifact", type=Path, required=True)
    p.add_argument("--observed", type=Path)

    p = sub.add_parser("coverage", help="Monte Carlo coverage at listed points")
    p.add_argument("--artifact", type=Path, required=True)
    p.add_argument("--points", type=Path, required=True)
    p.add_argument("-T", "--trials", type=int, default=2000)

    p = sub.add_parser("fit", help="chi-square baseline fit (cosmo)")
    p.add_argument("--observed", type=Path)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.problem, args.set)
        if args.seed is not None:
            cfg["seed"] = args.seed
        if args.workers is not None:
            cfg["workers"] = args.workers
        rc = validate_config(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "simulate":
            cmd_simulate(rc, args.count)
        elif args.command == "make-train":
            cmd_make_train(rc, args.count, args.out)
        elif args.command == "train":
            cmd_train(rc, args.triples, args.out)
        elif args.command == "make-hist":
            cmd_make_hist(rc, args.triples, args.out)
        elif args.command == "sets":
            cmd_sets(rc, args.artifact, args.observed)
        elif args.command == "coverage":
            cmd_coverage(rc, args.artifact, args.points, args.trials)
        elif args.command == "fit":
            cmd_fit(rc, args.observed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingDiverged as exc:
        print(f"training failure: {exc}", file=sys.stderr)
        return EXIT_TRAIN
    except cosmo.FitNonConvergence as exc:
        print(f"fit did not converge: {exc}", file=sys.stderr)
        return EXIT_FIT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
