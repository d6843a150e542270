"""Metrics file I/O: per-run download/goodput CSVs and run manifests."""

from __future__ import annotations

import csv
import json
from pathlib import Path

from .engine import MetricsRecord, relay_goodput_series

DOWNLOADS_CSV = "downloads.csv"
GOODPUT_CSV = "goodput.csv"
MANIFEST_JSON = "manifest.json"

DOWNLOAD_COLUMNS = ("kind", "client", "start_s", "ttfb_s", "ttlb_s", "outcome")


def write_metrics(metrics: MetricsRecord, outdir) -> None:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    with open(outdir / DOWNLOADS_CSV, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(DOWNLOAD_COLUMNS)
        writer.writerows(metrics.downloads)
    with open(outdir / GOODPUT_CSV, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(("second", "goodput_bits"))
        writer.writerows(relay_goodput_series(metrics))


def read_downloads(path) -> list[dict]:
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def write_manifest(outdir, network: int, sim: int, seed: int, cfg_hash: str,
                   duration_s: float, status: str) -> None:
    doc = {
        "network": network,
        "sim": sim,
        "seed": seed,
        "config_hash": cfg_hash,
        "duration_s": duration_s,
        "status": status,
        "downloads": DOWNLOADS_CSV,
        "goodput": GOODPUT_CSV,
    }
    with open(Path(outdir) / MANIFEST_JSON, "w") as f:
        json.dump(doc, f, indent=1, sort_keys=True)
        f.write("\n")


def read_manifest(path) -> dict:
    with open(path) as f:
        return json.load(f)
