#!/usr/bin/env python3
"""Regenerate the bundled synthetic fixture corpus under tests/fixtures/.

The corpus is small but structurally realistic: 8 hourly snapshots over
~560 relays with stable flags and churn, descriptor records for all but
a couple of relays, 5 days of per-country user counts, and a 20-city
map. Committed outputs are deterministic (fixed seed); rerun this script
only when the fixture design changes.
"""

import json
import math
from pathlib import Path

import numpy as np

import sys

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))
from torsim.inetmap import City, InternetMap, save_map  # noqa: E402

OUT = Path(__file__).resolve().parents[1] / "tests" / "fixtures"

SEED = 20260826
COUNTRIES = ["us", "de", "fr", "gb", "nl", "ru"]
CITIES_PER_COUNTRY = {"us": 5, "de": 4, "fr": 3, "gb": 3, "nl": 3, "ru": 2}

# relay class sizes; with mean presence ~0.6 the median per-snapshot
# counts land near {D: 46, E: 68, G: 170, M: 284}, while the pool stays
# much larger than their sum so sampled networks differ meaningfully
CLASS_SIZES = {"D": 77, "E": 114, "G": 284, "M": 473}
N_SNAPSHOTS = 8
N_USER_DAYS = 5
BASE_TS = 1700000000


def make_map(rng):
    cities = []
    for cc, count in CITIES_PER_COUNTRY.items():
        for k in range(count):
            cities.append(
                City(
                    id=f"{cc}-{k}",
                    country=cc,
                    up_bandwidth=10e9,
                    down_bandwidth=10e9,
                )
            )
    edges = {}
    ids = sorted(c.id for c in cities)
    for i, a in enumerate(ids):
        for b in ids[i + 1 :]:
            same_country = a[:2] == b[:2]
            lat_ms = rng.uniform(2, 15) if same_country else rng.uniform(15, 90)
            edges[(a, b)] = round(lat_ms * 1000.0, 1)  # microseconds
    imap = InternetMap(cities, edges)
    save_map(imap, OUT / "map.graphml")
    return [c.id for c in cities]


def make_relays(rng):
    relays = []
    idx = 0
    for cls, size in CLASS_SIZES.items():
        for _ in range(size):
            cc = COUNTRIES[rng.integers(len(COUNTRIES))]
            # heavy-tailed capacity in bytes/s (~0.1..100 MB/s)
            b = float(np.round(np.exp(rng.normal(15.0, 1.4)), 0))
            relays.append(
                {
                    "fp": f"relay{idx:04d}",
                    "cc": cc,
                    "ip": f"10.{idx // 256}.{idx % 256}.1",
                    "guard": cls in ("D", "G"),
                    "exit": cls in ("D", "E"),
                    "capacity": b,
                    "rate": round(b * 0.9, 0),
                    "burst": round(b * rng.uniform(2.0, 6.0), 0),
                    "weight": float(np.round(np.exp(rng.normal(6.0, 1.2)), 2)),
                    "presence": float(rng.uniform(0.25, 0.95)),
                }
            )
            idx += 1
    return relays


def make_snapshots(rng, relays):
    with open(OUT / "snapshots.jsonl", "w") as f:
        for snap_i in range(N_SNAPSHOTS):
            present = []
            for r in relays:
                if rng.random() < r["presence"]:
                    present.append(
                        {
                            "fp": r["fp"],
                            "ip": r["ip"],
                            "cc": r["cc"],
                            "guard": r["guard"],
                            "exit": r["exit"],
                            "weight": round(
                                r["weight"] * rng.uniform(0.9, 1.1), 3
                            ),
                        }
                    )
            doc = {"timestamp": BASE_TS + 3600 * snap_i, "relays": present}
            f.write(json.dumps(doc) + "\n")


def make_descriptors(rng, relays):
    # last two relays get no descriptors, exercising the drop path
    with open(OUT / "descriptors.jsonl", "w") as f:
        for r in relays[:-2]:
            for _ in range(rng.integers(1, 4)):
                f.write(
                    json.dumps(
                        {
                            "fp": r["fp"],
                            "obs_bw": round(r["capacity"] * rng.uniform(0.95, 1.05), 0),
                            "rate": r["rate"],
                            "burst": r["burst"],
                        }
                    )
                    + "\n"
                )


def make_users(rng):
    base = {"us": 300, "de": 250, "fr": 120, "gb": 100, "nl": 80, "ru": 150}
    with open(OUT / "users.jsonl", "w") as f:
        for day in range(N_USER_DAYS):
            for cc, count in base.items():
                jitter = int(rng.integers(-20, 21))
                f.write(
                    json.dumps(
                        {
                            "date": f"2023-11-{day + 1:02d}",
                            "cc": cc,
                            "count": max(1, count + jitter),
                        }
                    )
                    + "\n"
                )


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    rng = np.random.Generator(np.random.PCG64(SEED))
    make_map(rng)
    relays = make_relays(rng)
    make_snapshots(rng, relays)
    make_descriptors(rng, relays)
    make_users(rng)
    print(f"wrote fixtures to {OUT}")


if __name__ == "__main__":
    main()
