"""Sweep harness: the full (framework x size x seed) grid with reports.

``run_sweep`` prepares the shared artifacts once, runs every grid cell,
and writes a self-contained output directory::

    out/
      manifest.json        experiment config, data provenance, backbones
      cells/<cell>.json    one record per grid cell
      records.csv          long form: framework,samples_per_class,seed,metric,value
      aggregate.csv        mean/std over seeds per (framework, size, metric)
      charts/<metric>.svg  learning-curve charts with error bars

Everything is derived deterministically from the experiment config, so
re-running a sweep reproduces every output byte for byte. Cells may run
on a thread pool (``jobs``); results are ordered by grid position, not
completion, so parallel runs match serial ones exactly.
"""

import csv
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict

import numpy as np

from . import __version__, frameworks
from .errors import DataError
from .kernels import BACKEND

RECORD_FIELDS = ("framework", "samples_per_class", "seed", "metric", "value")
AGGREGATE_FIELDS = ("framework", "samples_per_class", "metric", "mean", "std")
CHART_METRICS = ("accuracy", "kappa", "macro_f1")
_COLORS = {"manual": "#1f77b4", "threshold": "#2ca02c", "scratch": "#d62728"}


def grid_cells(exp):
    """Grid coordinates in canonical order: framework, size, seed."""
    return [
        (fw, size, seed)
        for fw in exp.sweep.frameworks
        for size in exp.sweep.sizes
        for seed in exp.sweep.seeds
    ]


def run_sweep(exp, out_dir, jobs=1, log_every=0):
    """Run the whole grid and write the output directory; returns records."""
    bench = frameworks.prepare(exp, log_every=log_every)
    cells = grid_cells(exp)
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(lambda c: frameworks.run_cell(bench, *c), cells))
    else:
        results = []
        for fw, size, seed in cells:
            if log_every:
                print(f"cell framework={fw} samples_per_class={size} seed={seed}", flush=True)
            results.append(frameworks.run_cell(bench, fw, size, seed))

    records = []
    for rec in results:
        for metric, value in rec["metrics"].items():
            records.append(
                {
                    "framework": rec["framework"],
                    "samples_per_class": rec["samples_per_class"],
                    "seed": rec["seed"],
                    "metric": metric,
                    "value": float(value),
                }
            )

    os.makedirs(os.path.join(out_dir, "cells"), exist_ok=True)
    for rec in results:
        name = f"{rec['framework']}-n{rec['samples_per_class']}-s{rec['seed']}.json"
        _write_json(os.path.join(out_dir, "cells", name), rec)
    _write_json(
        os.path.join(out_dir, "manifest.json"),
        {
            "version": __version__,
            "backend": BACKEND,
            "experiment": asdict(exp),
            "grid": [list(c) for c in cells],
            "data": bench.manifest(),
        },
    )
    write_records(os.path.join(out_dir, "records.csv"), records)
    write_reports(out_dir, records)
    return records


def write_reports(out_dir, records):
    """Aggregate ``records`` and write aggregate.csv plus the charts."""
    rows = aggregate(records)
    _write_csv(os.path.join(out_dir, "aggregate.csv"), AGGREGATE_FIELDS, rows)
    os.makedirs(os.path.join(out_dir, "charts"), exist_ok=True)
    for metric in CHART_METRICS:
        picked = [r for r in rows if r["metric"] == metric]
        if picked:
            svg = render_chart(picked, metric)
            path = os.path.join(out_dir, "charts", f"{metric}.svg")
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(svg)


def aggregate(records):
    """Across-seed mean/std rows in records order (std: ddof=1, 0 if lone)."""
    groups = {}
    order = []
    for rec in records:
        key = (rec["framework"], rec["samples_per_class"], rec["metric"])
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(rec["value"])
    rows = []
    for fw, size, metric in order:
        vals = np.asarray(groups[(fw, size, metric)], dtype=np.float64)
        rows.append(
            {
                "framework": fw,
                "samples_per_class": size,
                "metric": metric,
                "mean": float(vals.mean()),
                "std": float(vals.std(ddof=1)) if vals.size > 1 else 0.0,
            }
        )
    return rows


def write_records(path, records):
    _write_csv(path, RECORD_FIELDS, records)


def load_records(path):
    """records.csv back into a list of dicts (used by the report command)."""
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            if tuple(reader.fieldnames or ()) != RECORD_FIELDS:
                raise DataError(f"{path} does not look like a records file: header {reader.fieldnames}")
            records = [
                {
                    "framework": row["framework"],
                    "samples_per_class": int(row["samples_per_class"]),
                    "seed": int(row["seed"]),
                    "metric": row["metric"],
                    "value": float(row["value"]),
                }
                for row in reader
            ]
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    except ValueError as exc:
        raise DataError(f"malformed records row in {path}: {exc}") from exc
    return records


def _format(value):
    return repr(value) if isinstance(value, float) else str(value)


def _write_csv(path, fields, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(fields)
        for row in rows:
            writer.writerow([_format(row[f]) for f in fields])


def _write_json(path, payload):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def render_chart(rows, metric, width=640, height=420):
    """Line chart with error bars as a standalone SVG string.

    ``rows`` are aggregate rows of one metric: x = samples_per_class,
    y = mean with a +-std whisker, one line per framework.
    """
    ml, mr, mt, mb = 64, 24, 40, 48
    pw, ph = width - ml - mr, height - mt - mb
    sizes = sorted({r["samples_per_class"] for r in rows})
    fws = []
    for r in rows:
        if r["framework"] not in fws:
            fws.append(r["framework"])

    ys = [r["mean"] - r["std"] for r in rows] + [r["mean"] + r["std"] for r in rows]
    lo, hi = min(ys), max(ys)
    if hi - lo < 1e-9:
        lo, hi = lo - 0.5, hi + 0.5
    pad = 0.06 * (hi - lo)
    lo, hi = lo - pad, hi + pad

    def sx(size):
        if len(sizes) == 1:
            return ml + pw / 2
        return ml + pw * (sizes.index(size) / (len(sizes) - 1))

    def sy(v):
        return mt + ph * (1.0 - (v - lo) / (hi - lo))

    parts = [
        f'<?xml version="1.0" encoding="UTF-8"?>\n'
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="22" text-anchor="middle" font-size="15">{metric} vs training set size</text>',
    ]
    # axes and ticks
    parts.append(
        f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{mt + ph}" stroke="black"/>'
        f'<line x1="{ml}" y1="{mt + ph}" x2="{ml + pw}" y2="{mt + ph}" stroke="black"/>'
    )
    for k in range(5):
        v = lo + (hi - lo) * k / 4
        y = sy(v)
        parts.append(
            f'<line x1="{ml - 4}" y1="{y:.1f}" x2="{ml}" y2="{y:.1f}" stroke="black"/>'
            f'<text x="{ml - 8}" y="{y + 4:.1f}" text-anchor="end">{v:.2f}</text>'
        )
    for size in sizes:
        x = sx(size)
        parts.append(
            f'<line x1="{x:.1f}" y1="{mt + ph}" x2="{x:.1f}" y2="{mt + ph + 4}" stroke="black"/>'
            f'<text x="{x:.1f}" y="{mt + ph + 18}" text-anchor="middle">{size}</text>'
        )
    parts.append(
        f'<text x="{ml + pw / 2:.1f}" y="{height - 10}" text-anchor="middle">samples per class</text>'
        f'<text x="18" y="{mt + ph / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 18 {mt + ph / 2:.1f})">{metric}</text>'
    )
    for fi, fw in enumerate(fws):
        color = _COLORS.get(fw, "#555555")
        pts = [(sx(r["samples_per_class"]), r) for r in rows if r["framework"] == fw]
        pts.sort(key=lambda p: p[0])
        line = " ".join(f"{x:.1f},{sy(r['mean']):.1f}" for x, r in pts)
        parts.append(f'<polyline points="{line}" fill="none" stroke="{color}" stroke-width="2"/>')
        for x, r in pts:
            y0, y1 = sy(r["mean"] - r["std"]), sy(r["mean"] + r["std"])
            parts.append(
                f'<line x1="{x:.1f}" y1="{y0:.1f}" x2="{x:.1f}" y2="{y1:.1f}" stroke="{color}"/>'
                f'<line x1="{x - 4:.1f}" y1="{y0:.1f}" x2="{x + 4:.1f}" y2="{y0:.1f}" stroke="{color}"/>'
                f'<line x1="{x - 4:.1f}" y1="{y1:.1f}" x2="{x + 4:.1f}" y2="{y1:.1f}" stroke="{color}"/>'
                f'<circle cx="{x:.1f}" cy="{sy(r["mean"]):.1f}" r="3.5" fill="{color}"/>'
            )
        ly = mt + 8 + 16 * fi
        parts.append(
            f'<line x1="{ml + pw - 120}" y1="{ly}" x2="{ml + pw - 96}" y2="{ly}" '
            f'stroke="{color}" stroke-width="2"/>'
            f'<text x="{ml + pw - 90}" y="{ly + 4}">{fw}</text>'
        )
    parts.append("</svg>\n")
    return "\n".join(parts)
