"""Command line front end: compress, decompress, sweep and select-k.

Results go to stdout as ``key=value`` lines.  Exit status 2 means bad
usage or a missing input file, 1 any other failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import codec
from .clusterlab import FeatureSet, cluster, extract_features
from .datasel import SparsifyConfig, optimize_tonal, optimize_tonal_quantized, sparsify_mask
from .diffusion import InfluenceBasis, inpaint, influence_basis
from .errors import PDEQuantError
from .imagegrid import ImageGrid, Mask, mse, read_pbm, read_pgm, to_bytes, write_pbm, write_pgm
from .indices import (INDEX_NAMES, GapConfig, calinski_harabasz, davies_bouldin, format_value,
                      gap_statistic, select_k, silhouette_mean, _safe)

log = logging.getLogger("pdequant")

QUANTS = ("equidistant", "kmeans", "ward", "gmm")
TONAL_MODES = ("none", "continuous", "quantized")
VALUE_VARIANTS = range(3, 9)

SWEEP_COLUMNS = ["k", "quant", "levels", "mse_plain", "mse_tonal", "ratio_plain", "ratio_tonal",
                 "bytes_plain", "bytes_tonal", *INDEX_NAMES, "mse_original"]
PLOT_METRICS = ["mse_plain", "mse_tonal", "ratio_plain", "ratio_tonal", *INDEX_NAMES]


class UsageError(Exception):
    pass


# pipeline -----------------------------------------------------------------

def build_table(image: ImageGrid, mask: Mask, quant: str, k: int, feature: int = 4, seed=0):
    """Quantisation table plus the clustering and features behind it (None for equidistant)."""
    if quant == "equidistant":
        return codec.make_equidistant(k), None, None
    if feature not in VALUE_VARIANTS:
        raise UsageError(f"clustered quantisation needs a grey value feature (3..8), got {feature}")
    features = extract_features(image, mask, feature)
    clustering = cluster(features, quant, k, seed=seed)
    return codec.make_clustered(clustering), clustering, features


def encode_point(image: ImageGrid, mask: Mask, table: codec.QuantTable, tonal: str = "none",
                 basis: InfluenceBasis | None = None) -> codec.EncodedPayload:
    f = image.values.ravel()[mask.indices()]
    if tonal == "none":
        return codec.encode(f, mask, table)
    if basis is None:
        basis = influence_basis(mask)
    if tonal == "continuous":
        g = optimize_tonal(image, mask, basis).grey_values
        return codec.encode(g, mask, table)
    if tonal == "quantized":
        stored = table.stored()
        g = optimize_tonal_quantized(image, mask, basis, stored).grey_values
        return codec.encode(g, mask, stored)
    raise UsageError(f"unknown tonal mode {tonal!r}")


def reconstruct(payload) -> ImageGrid:
    """Decoded container -> inpainted image (real valued)."""
    mask, values = codec.decode(payload)
    return inpaint(mask, values)


def original_mse(image: ImageGrid, mask: Mask) -> float:
    return mse(inpaint(mask, image.values.ravel()[mask.indices()]), image)


# argument helpers ---------------------------------------------------------

def _existing(path: str | None, what: str) -> Path | None:
    if path is None:
        return None
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"{what} not found: {path}")
    return p


def _load_inputs(args):
    if args.image is None:
        raise UsageError("--image is required")
    image = read_pgm(_existing(args.image, "image"))
    if args.mask is not None:
        mask = read_pbm(_existing(args.mask, "mask"))
        if mask.shape != image.shape:
            raise UsageError("mask and image differ in size")
    else:
        log.info("sparsifying to density %g with seed %d", args.density, args.seed)
        mask = sparsify_mask(image, SparsifyConfig(args.density, seed=args.seed))
    mask.check_inpaintable()
    return image, mask


def _indices_arg(values) -> tuple:
    if not values:
        return ()
    if "all" in values:
        return INDEX_NAMES
    return tuple(name for name in INDEX_NAMES if name in values)


def _emit(**pairs):
    for key, value in pairs.items():
        if isinstance(value, float):
            value = format_value(value)
        print(f"{key}={value}")


# commands -----------------------------------------------------------------

def cmd_compress(args) -> int:
    image, mask = _load_inputs(args)
    table, _, _ = build_table(image, mask, args.quant, args.k, args.feature, args.seed)
    payload = encode_point(image, mask, table, args.tonal)
    out = Path(args.out) if args.out else Path(args.image).with_suffix(".pqc")
    out.write_bytes(payload.to_bytes())
    recon = reconstruct(payload)
    _emit(out=str(out), width=image.width, height=image.height, mask_pixels=mask.count,
          k=payload.k, bytes=payload.total_bytes, ratio=codec.compression_ratio(payload),
          mse=mse(ImageGrid(to_bytes(recon.values)), image), mse_real=mse(recon, image))
    return 0


def cmd_decompress(args) -> int:
    src = _existing(args.container, "container")
    payload = codec.parse(src.read_bytes())
    out = Path(args.out) if args.out else src.with_suffix(".pgm")
    if args.raw:
        mask, indices, table = codec.decode_indices(payload)
        write_pbm(mask, out.with_suffix(".pbm"))
        ys, xs = np.nonzero(mask.known)
        with open(out.with_suffix(".csv"), "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["x", "y", "index", "value"])
            for x, y, i in zip(xs.tolist(), ys.tolist(), indices.tolist()):
                writer.writerow([x, y, i, format_value(table.levels[i])])
        _emit(mask=str(out.with_suffix(".pbm")), values=str(out.with_suffix(".csv")),
              mask_pixels=mask.count, k=table.k)
        return 0
    recon = reconstruct(payload)
    write_pgm(recon, out)
    _emit(out=str(out), width=recon.width, height=recon.height, k=payload.k)
    return 0


@dataclass(frozen=True)
class SweepPoint:
    quant: str
    k: int


# worker state for the process pool; set once per process
_STATE: dict = {}


def _init_worker(state):
    _STATE.clear()
    _STATE.update(state)


def _index_values(features: FeatureSet, clustering, names, k, quant, seed) -> dict:
    out = {}
    if clustering is None or not names:
        return out
    if "ch" in names:
        out["ch"] = _safe(calinski_harabasz, features, clustering)
    if "db" in names:
        out["db"] = _safe(davies_bouldin, features, clustering)
    if "silhouette" in names:
        out["silhouette"] = _safe(silhouette_mean, features, clustering)
    if "gap" in names:
        out["gap"] = gap_statistic(features, {k: clustering}, GapConfig(seed=seed), quant).gap[0]
    return out


def _run_point(point: SweepPoint) -> dict:
    s = _STATE
    image, mask, outdir = s["image"], s["mask"], s["outdir"]
    table, clustering, features = build_table(image, mask, point.quant, point.k, s["feature"],
                                              s["seed"])
    row = {"k": point.k, "quant": point.quant, "levels": table.k}
    modes = [("plain", "none")]
    if s["tonal"] != "none":
        modes.append(("tonal", s["tonal"]))
    for tag, mode in modes:
        payload = encode_point(image, mask, table, mode, s["basis"])
        data = payload.to_bytes()
        (outdir / "containers" / f"{point.quant}_k{point.k:03d}_{tag}.pqc").write_bytes(data)
        row[f"mse_{tag}"] = mse(reconstruct(codec.parse(data)), image)
        row[f"ratio_{tag}"] = codec.compression_ratio(payload)
        row[f"bytes_{tag}"] = payload.total_bytes
    row.update(_index_values(features, clustering, s["indices"], point.k, point.quant, s["seed"]))
    row["mse_original"] = s["mse_original"]
    return row


def sweep_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SWEEP_COLUMNS)
    for row in rows:
        cells = []
        for col in SWEEP_COLUMNS:
            v = row.get(col)
            cells.append("" if v is None else v if isinstance(v, (str, int)) else format_value(v))
        writer.writerow(cells)
    return buf.getvalue()


def cmd_sweep(args) -> int:
    if not 2 <= args.k_min <= args.k_max <= 256:
        raise UsageError(f"k range must lie within [2, 256], got [{args.k_min}, {args.k_max}]")
    image, mask = _load_inputs(args)
    outdir = Path(args.out or "sweep_out")
    (outdir / "containers").mkdir(parents=True, exist_ok=True)
    write_pbm(mask, outdir / "mask.pbm")
    for quant in args.quant:
        if quant != "equidistant" and args.feature not in VALUE_VARIANTS:
            raise UsageError(f"clustered quantisation needs a grey value feature (3..8)")

    state = {
        "image": image, "mask": mask, "outdir": outdir, "feature": args.feature,
        "seed": args.seed, "tonal": args.tonal, "indices": _indices_arg(args.index),
        "basis": influence_basis(mask) if args.tonal != "none" else None,
        "mse_original": original_mse(image, mask),
    }
    points = [SweepPoint(q, k) for k in range(args.k_min, args.k_max + 1) for q in args.quant]
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs, initializer=_init_worker, initargs=(state,)) as pool:
            rows = list(pool.map(_run_point, points))
    else:
        _init_worker(state)
        rows = [_run_point(p) for p in points]
    order = {q: i for i, q in enumerate(args.quant)}
    rows.sort(key=lambda r: (r["k"], order[r["quant"]]))

    text = sweep_csv(rows)
    (outdir / "sweep.csv").write_text(text)
    for name, svg in plots_from_csv(text).items():
        (outdir / name).write_text(svg)
    _emit(csv=str(outdir / "sweep.csv"), rows=len(rows), mse_original=state["mse_original"])
    return 0


def cmd_select_k(args) -> int:
    if args.quant == "equidistant":
        raise UsageError("select-k needs a clustering algorithm (kmeans, ward or gmm)")
    image, mask = _load_inputs(args)
    names = _indices_arg(args.index) or INDEX_NAMES
    features = extract_features(image, mask, args.feature)
    report = select_k(features, args.quant, args.k_min, args.k_max, names, seed=args.seed)
    if args.out:
        Path(args.out).write_text(report.to_csv())
    for name in names:
        print(f"chosen_{name}={report.chosen[name]}")
    return 0


# plotting -----------------------------------------------------------------

_COLOURS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]


def svg_line_chart(series: dict, title: str, xlabel: str, ylabel: str,
                   width: int = 640, height: int = 400) -> str:
    """Minimal SVG with one polyline per series; ``series`` maps name -> [(x, y), ...]."""
    left, right, top, bottom = 70, 130, 40, 50
    pts = [p for s in series.values() for p in s]
    xs = [p[0] for p in pts] or [0.0]
    ys = [p[1] for p in pts] or [0.0]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    if x1 == x0:
        x0, x1 = x0 - 1, x1 + 1
    if y1 == y0:
        y0, y1 = y0 - 1, y1 + 1
    pw, ph = width - left - right, height - top - bottom

    def sx(x):
        return left + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return top + ph - (y - y0) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<text x="{width / 2:.1f}" y="22" text-anchor="middle" font-size="15">{title}</text>',
           f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>',
           f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>']
    for i in range(5):
        tx = x0 + (x1 - x0) * i / 4
        ty = y0 + (y1 - y0) * i / 4
        out.append(f'<text x="{sx(tx):.1f}" y="{top + ph + 16}" text-anchor="middle" '
                   f'font-size="11">{tx:.4g}</text>')
        out.append(f'<text x="{left - 6}" y="{sy(ty) + 4:.1f}" text-anchor="end" '
                   f'font-size="11">{ty:.4g}</text>')
    out.append(f'<text x="{left + pw / 2:.1f}" y="{height - 10}" text-anchor="middle" '
               f'font-size="12">{xlabel}</text>')
    out.append(f'<text x="16" y="{top + ph / 2:.1f}" text-anchor="middle" font-size="12" '
               f'transform="rotate(-90 16 {top + ph / 2:.1f})">{ylabel}</text>')
    for i, (name, s) in enumerate(series.items()):
        colour = _COLOURS[i % len(_COLOURS)]
        coords = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in s)
        out.append(f'<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{coords}"/>')
        ly = top + 14 + 18 * i
        out.append(f'<line x1="{left + pw + 10}" y1="{ly - 4}" x2="{left + pw + 30}" y2="{ly - 4}" '
                   f'stroke="{colour}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw + 35}" y="{ly}" font-size="12">{name}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def plots_from_csv(text: str) -> dict:
    """One chart per metric column that holds data, one line per quantiser."""
    rows = list(csv.DictReader(io.StringIO(text)))
    charts = {}
    for metric in PLOT_METRICS:
        series: dict = {}
        for row in rows:
            if row.get(metric, "") != "":
                series.setdefault(row["quant"], []).append((float(row["k"]), float(row[metric])))
        if series:
            charts[f"{metric}.svg"] = svg_line_chart(series, metric, "k", metric)
    return charts


# entry point --------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pdequant", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def inputs(p):
        p.add_argument("--image", help="input PGM (P5)")
        p.add_argument("--mask", help="mask PBM (P4, 1 = known); sparsified when omitted")
        p.add_argument("--density", type=float, default=0.05, help="mask density for sparsification")
        p.add_argument("--feature", type=int, default=4, choices=range(1, 9), metavar="1..8")
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("compress", help="code an image into a PQC container")
    inputs(p)
    p.add_argument("--quant", choices=QUANTS, default="equidistant")
    p.add_argument("--k", type=int, default=32)
    p.add_argument("--tonal", choices=TONAL_MODES, default="none")
    p.add_argument("--out", help="container path (default: image path with .pqc)")
    p.set_defaults(func=cmd_compress)

    p = sub.add_parser("decompress", help="reconstruct an image from a container")
    p.add_argument("container")
    p.add_argument("--out", help="output PGM (default: container path with .pgm)")
    p.add_argument("--raw", action="store_true", help="dump mask PBM and values CSV instead")
    p.set_defaults(func=cmd_decompress)

    p = sub.add_parser("sweep", help="compress over a range of k and write CSV and SVG")
    inputs(p)
    p.add_argument("--quant", nargs="+", choices=QUANTS, default=["equidistant", "kmeans"])
    p.add_argument("--k-min", type=int, default=12)
    p.add_argument("--k-max", type=int, default=72)
    p.add_argument("--tonal", choices=TONAL_MODES, default="quantized")
    p.add_argument("--index", nargs="*", choices=[*INDEX_NAMES, "all"], default=[])
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", help="output directory (default: sweep_out)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("select-k", help="choose the number of clusters with validity indices")
    inputs(p)
    p.add_argument("--quant", choices=QUANTS[1:], default="kmeans")
    p.add_argument("--k-min", type=int, default=2)
    p.add_argument("--k-max", type=int, default=10)
    p.add_argument("--index", nargs="+", choices=[*INDEX_NAMES, "all"], default=["all"])
    p.add_argument("--out", help="CSV file for the per-k index values")
    p.set_defaults(func=cmd_select_k)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(format="%(levelname)s %(name)s: %(message)s")
    level = os.environ.get("PQC_LOG", "WARNING").upper()
    log.setLevel(level if isinstance(logging.getLevelName(level), int) else "WARNING")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (FileNotFoundError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (PDEQuantError, ValueError, OSError, ArithmeticError, MemoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
