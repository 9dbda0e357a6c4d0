"""Wiring of the three bundled inference problems.

Each problem exposes the same trio the inference engine needs: a box prior,
a simulator ``(theta, rng) -> dataset``, and a statistic
``(dataset, theta) -> float``, together with dataset readers/writers for the
CSV formats the command line uses.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Callable

import numpy as np

from confsim import cosmo, onoff, sir
from confsim.core import ParamPoint, UniformBoxPrior

__all__ = ["Problem", "build_problem", "bundled_data_path"]


def bundled_data_path(name: str) -> Path:
    """Path of a data file shipped inside the package."""
    return Path(resources.files("confsim").joinpath("data", name))


@dataclass(frozen=True)
class Problem:
    name: str
    param_names: tuple[str, ...]
    prior: UniformBoxPrior
    simulate: Callable[[ParamPoint, np.random.Generator], object]
    statistic: Callable[[object, ParamPoint], float]
    read_dataset: Callable[[Path], object]
    write_dataset: Callable[[object, Path], None]
    dataset_size: Callable[[object], int]


def _read_catalog(path: Path) -> cosmo.SupernovaCatalog:
    z, x, s = [], [], []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or set(reader.fieldnames) < {"z", "x", "sigma"}:
            raise ValueError(f"{path}: expected CSV header z,x,sigma")
        for row in reader:
            z.append(float(row["z"]))
            x.append(float(row["x"]))
            s.append(float(row["sigma"]))
    return cosmo.SupernovaCatalog(np.array(z), np.array(x), np.array(s))


def _write_catalog(cat: cosmo.SupernovaCatalog, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["z", "x", "sigma"])
        for row in zip(cat.z, cat.x, cat.sigma):
            w.writerow([repr(float(v)) for v in row])


def _read_epidemic(path: Path) -> tuple[tuple[float, ...], sir.EpidemicSeries]:
    ts, xs = [], []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or set(reader.fieldnames) < {"t", "x"}:
            raise ValueError(f"{path}: expected CSV header t,x")
        for row in reader:
            ts.append(float(row["t"]))
            xs.append(int(float(row["x"])))
    return tuple(ts), sir.EpidemicSeries(tuple(xs))


def _write_epidemic(times, series: sir.EpidemicSeries, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "x"])
        for t, x in zip(times, series.counts):
            w.writerow([repr(float(t)), int(x)])


def build_problem(name: str, prior: UniformBoxPrior, settings: dict) -> Problem:
    """Instantiate one of the bundled problems.

    ``settings`` carries the per-problem simulator configuration: the
    template catalog path for the supernova problem; population, initial
    compartments, and the observation-time data file for the epidemic one.
    """
    if name == "onoff":
        def simulate(theta: ParamPoint, rng) -> onoff.OnOffData:
            return onoff.simulate_onoff(onoff.OnOffParams(*theta.values), rng)

        def statistic(d: onoff.OnOffData, theta: ParamPoint) -> float:
            return onoff.lambda_onoff(d, onoff.OnOffParams(*theta.values))

        def read_d(path: Path) -> onoff.OnOffData:
            with open(path, newline="") as fh:
                reader = csv.DictReader(fh)
                if reader.fieldnames is None or set(reader.fieldnames) < {"N", "M"}:
                    raise ValueError(f"{path}: expected CSV header N,M")
                row = next(iter(reader))
            return onoff.OnOffData(int(row["N"]), int(row["M"]))

        def write_d(d: onoff.OnOffData, path: Path) -> None:
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["N", "M"])
                w.writerow([d.N, d.M])

        return Problem(
            name, ("mu", "nu"), prior, simulate, statistic,
            read_d, write_d, lambda d: 2,
        )

    if name == "cosmo":
        template_path = Path(settings.get("template", bundled_data_path("sn_moduli.csv")))
        template = _read_catalog(template_path)

        def simulate(theta: ParamPoint, rng) -> cosmo.SupernovaCatalog:
            return cosmo.simulate_catalog(cosmo.CosmoParams(*theta.values), template, rng)

        def statistic(cat: cosmo.SupernovaCatalog, theta: ParamPoint) -> float:
            return cosmo.lambda_cosmo(cat, cosmo.CosmoParams(*theta.values))

        return Problem(
            name, ("n", "H0"), prior, simulate, statistic,
            _read_catalog, _write_catalog, len,
        )

    if name == "sir":
        data_path = Path(settings.get("data", bundled_data_path("boarding_school_flu.csv")))
        times, _ = _read_epidemic(data_path)
        cfg = sir.EpidemicConfig(
            population=int(settings.get("population", 763)),
            s0=int(settings.get("s0", 762)),
            i0=int(settings.get("i0", 1)),
            r0_count=int(settings.get("r0", 0)),
            obs_times=times,
        )

        def simulate(theta: ParamPoint, rng) -> sir.EpidemicSeries:
            return sir.simulate_ctmc(sir.SirParams(*theta.values), cfg, rng)

        def statistic(d: sir.EpidemicSeries, theta: ParamPoint) -> float:
            return sir.lambda_sir(d, sir.SirParams(*theta.values), cfg)

        def read_d(path: Path) -> sir.EpidemicSeries:
            obs_times, series = _read_epidemic(path)
            if obs_times != times:
                raise ValueError(
                    f"{path}: observation times do not match the configured ones"
                )
            return series

        def write_d(d: sir.EpidemicSeries, path: Path) -> None:
            _write_epidemic(times, d, path)

        return Problem(
            name, ("alpha", "beta"), prior, simulate, statistic,
            read_d, write_d, len,
        )

    raise ValueError(f"unknown problem {name!r} (expected onoff, cosmo, or sir)")
