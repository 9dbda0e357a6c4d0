import csv
import hashlib
import math
from pathlib import Path

import numpy as np
import pytest

from confsim_plots import PlotJob, SchemaError, render
from confsim_plots.cli import main


def write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


@pytest.fixture
def catalog_csv(tmp_path):
    rng = np.random.default_rng(0)
    z = np.geomspace(0.02, 1.2, 40)
    mu = 25.0 + 5.0 * np.log10(3e5 * z / 70.0)
    path = tmp_path / "catalog.csv"
    write_csv(path, ["z", "x", "sigma"],
              [(zz, m + 0.2 * rng.standard_normal(), 0.2) for zz, m in zip(z, mu)])
    return path


@pytest.fixture
def curve_csv(tmp_path):
    z = np.geomspace(0.02, 1.2, 50)
    mu = 25.0 + 5.0 * np.log10(3e5 * z / 70.0)
    path = tmp_path / "curve.csv"
    write_csv(path, ["z", "mu"], list(zip(z, mu)))
    return path


@pytest.fixture
def boundaries_csv(tmp_path):
    # four tau families, one closed square segment each
    rows = []
    for k, tau in enumerate((0.68, 0.80, 0.90, 0.95)):
        r = 1.0 + k
        corners = [(-r, -r), (r, -r), (r, r), (-r, r), (-r, -r)]
        rows += [(tau, 0, x, y) for x, y in corners]
    path = tmp_path / "bounds.csv"
    write_csv(path, ["tau", "segment_id", "mu", "nu"], rows)
    return path


@pytest.fixture
def coverage_csv(tmp_path):
    rows = []
    rng = np.random.default_rng(1)
    T = 2000
    for i in range(12):
        for tau in (0.68, 0.90):
            p = min(max(tau + 0.01 * rng.standard_normal(), 0.0), 1.0)
            rows.append((1.0 + i, 2.0, tau, p, math.sqrt(p * (1 - p) / T), T))
    path = tmp_path / "coverage.csv"
    write_csv(path, ["mu", "nu", "tau", "p", "stderr", "T"], rows)
    return path


@pytest.fixture
def epidemic_csv(tmp_path):
    counts = [3, 8, 26, 76, 225, 298, 258, 233, 189, 128, 68, 29, 14]
    path = tmp_path / "flu.csv"
    write_csv(path, ["t", "x"], list(enumerate(counts, start=1)))
    return path


def test_fit_overlay_renders(tmp_path, catalog_csv, curve_csv):
    out = tmp_path / "fit.png"
    res = render(PlotJob("fit_overlay", {"catalog": catalog_csv, "curve": curve_csv}, out))
    assert out.exists() and out.stat().st_size > 0
    assert res.n_series == 2


def test_contours_four_families(tmp_path, boundaries_csv):
    out = tmp_path / "sets.png"
    res = render(PlotJob("contours", {"boundaries": boundaries_csv}, out,
                         style={"best_fit": (0.0, 0.0)}))
    assert out.exists()
    assert res.n_series == 4
    assert sum(1 for l in res.legend_labels if l.startswith("tau=")) == 4
    assert "best fit" in res.legend_labels


def test_contours_dashed_histogram_family(tmp_path, boundaries_csv):
    out = tmp_path / "sets2.png"
    res = render(PlotJob(
        "contours",
        {"boundaries": boundaries_csv, "boundaries_dashed": boundaries_csv},
        out,
    ))
    assert res.n_series == 8
    assert sum("(hist)" in l for l in res.legend_labels) == 4


def test_contours_empty_family_labelled(tmp_path, boundaries_csv):
    out = tmp_path / "sets3.png"
    res = render(PlotJob("contours", {"boundaries": boundaries_csv}, out,
                         style={"taus": [0.68, 0.80, 0.90, 0.95, 0.99]}))
    assert any(l == "tau=0.99 (empty)" for l in res.legend_labels)
    assert res.n_series == 4  # the empty family draws no line


def test_coverage_points_and_reference_lines(tmp_path, coverage_csv):
    out = tmp_path / "cov.png"
    res = render(PlotJob("coverage", {"coverage": coverage_csv}, out))
    assert out.exists()
    assert res.n_series == 2  # one errorbar family per tau
    assert res.legend_labels == ("tau=0.68", "tau=0.9")


def test_epidemic_bar_plot(tmp_path, epidemic_csv):
    out = tmp_path / "flu.png"
    res = render(PlotJob("epidemic", {"data": epidemic_csv}, out))
    assert out.exists()
    assert res.n_series == 1


def test_schema_error_names_missing_column(tmp_path):
    bad = tmp_path / "bad.csv"
    write_csv(bad, ["tau", "p", "stderr"], [(0.68, 0.67, 0.01)])  # no T column
    with pytest.raises(SchemaError, match="'T'"):
        render(PlotJob("coverage", {"coverage": bad}, tmp_path / "x.png"))


def test_unknown_kind_rejected(tmp_path):
    with pytest.raises(SchemaError):
        PlotJob("histogram3d", {}, tmp_path / "x.png")


def test_rendering_is_readonly_and_deterministic(tmp_path, coverage_csv):
    before = coverage_csv.read_bytes()
    out1 = tmp_path / "a.png"
    out2 = tmp_path / "b.png"
    render(PlotJob("coverage", {"coverage": coverage_csv}, out1))
    render(PlotJob("coverage", {"coverage": coverage_csv}, out2))
    assert coverage_csv.read_bytes() == before
    h1 = hashlib.sha256(out1.read_bytes()).hexdigest()
    h2 = hashlib.sha256(out2.read_bytes()).hexdigest()
    assert h1 == h2


def test_cli_roundtrip(tmp_path, epidemic_csv, capsys):
    out = tmp_path / "cli.png"
    assert main(["epidemic", "--data", str(epidemic_csv), "--out", str(out)]) == 0
    assert out.exists()
    assert main(["coverage", "--coverage", str(tmp_path / "missing.csv"),
                 "--out", str(tmp_path / "y.png")]) == 2
