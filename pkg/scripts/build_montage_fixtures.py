"""Regenerate the shipped montage fixtures under src/eegrecon/data/montages.

The 128-electrode root uses 10-10 positions plus 10-5 'h' half positions
(only labels whose prefix is in the region table). Fpz is left out: it is
the usual ground site on 128-channel caps and dropping it keeps the count even.

Coordinates are an azimuthal-equidistant projection centred on Cz (radius 1
is 90 degrees from the vertex). Each row is a coronal small circle at the
row's anterior-posterior angle; the number sets how far along it, from the
midline to the equator. Fp and O sit on the 10 % ring instead.

    python scripts/build_montage_fixtures.py
"""

import json
import math
import re
from pathlib import Path

from eegrecon import montage as mt

OUT = Path(__file__).resolve().parents[1] / "src" / "eegrecon" / "data" / "montages"

# 18 degrees per 10 % step along the nasion-inion line; negative is anterior
ROW_ANGLE = {
    "Fp": -72, "AF": -54, "F": -36, "FC": -18, "FT": -18,
    "C": 0, "T": 0, "CP": 18, "TP": 18,
    "P": 36, "PO": 54, "O": 72,
}

ROWS = {
    "Fp": ["Fp1", "Fp2", "Fp1h", "Fp2h"],
    "AF": ["AFz", "AF1", "AF2", "AF3", "AF4", "AF5", "AF6", "AF7", "AF8",
           "AF1h", "AF2h", "AF3h", "AF4h"],
    "F": ["Fz"] + [f"F{i}" for i in range(1, 11)] + [f"F{i}h" for i in range(1, 7)],
    "FC": ["FCz"] + [f"FC{i}" for i in range(1, 7)] + [f"FC{i}h" for i in range(1, 7)],
    "FT": ["FT7", "FT8", "FT9", "FT10", "FT7h", "FT8h"],
    "C": ["Cz"] + [f"C{i}" for i in range(1, 7)] + [f"C{i}h" for i in range(1, 7)],
    "T": ["T7", "T8", "T9", "T10", "T7h", "T8h"],
    "CP": ["CPz"] + [f"CP{i}" for i in range(1, 7)] + [f"CP{i}h" for i in range(1, 7)],
    "TP": ["TP7", "TP8", "TP9", "TP10", "TP7h", "TP8h"],
    "P": ["Pz"] + [f"P{i}" for i in range(1, 11)] + [f"P{i}h" for i in range(1, 7)],
    "PO": ["POz"] + [f"PO{i}" for i in range(1, 11)] + [f"PO{i}h" for i in range(1, 5)],
    "O": ["Oz", "O1", "O2", "O1h", "O2h"],
}

# Fp and O rows sit at the rim of the 10-10 grid; their 1/2 positions are
# the 10-20 sites roughly 18 degrees off midline
RIM_ROWS = {"Fp", "O"}


def lateral_angle(row, num, half):
    if row in RIM_ROWS:
        base = 18.0
        return base / 2 if half else base
    # odd n (left) and even n (right) both map to 9 * (n + n % 2)
    ang = 9.0 * (num + num % 2)
    if half:
        # 'nh' lies between n and n - 2 (towards the midline)
        ang -= 9.0
    return ang


def position(label):
    m = re.fullmatch(r"(Fp|AF|FT|FC|F|TP|T|CP|C|PO|P|O)(z|\d+)(h?)", label)
    row, num, half = m.group(1), m.group(2), bool(m.group(3))
    a = math.radians(ROW_ANGLE[row])
    if num == "z":
        psi, sign = 0.0, 0
    else:
        n = int(num)
        psi = math.radians(lateral_angle(row, n, half))
        sign = -1 if n % 2 else 1
    if row in RIM_ROWS:
        # on the 10 % ring (72 degrees from the vertex), offset around the rim
        front = row == "Fp"
        az = math.pi / 2 - sign * psi if front else -math.pi / 2 + sign * psi
        r = 0.8
        return round(r * math.cos(az), 6), round(r * math.sin(az), 6)
    # rows are coronal small circles: fixed y, swept from the midline to the equator
    x = sign * math.cos(a) * math.sin(psi)
    y = -math.sin(a)
    z = math.cos(a) * math.cos(psi)
    theta = math.acos(max(-1.0, min(1.0, z)))
    phi = math.atan2(y, x)
    r = theta / (math.pi / 2)
    return round(r * math.cos(phi), 6), round(r * math.sin(phi), 6)


def main():
    labels = [lab for row in ROWS.values() for lab in row]
    assert len(labels) == len(set(labels)) == 128, len(labels)
    root = [{"label": lab, "x": position(lab)[0], "y": position(lab)[1]} for lab in labels]
    OUT.mkdir(parents=True, exist_ok=True)
    (OUT / "std-128.json").write_text(json.dumps(root, indent=1) + "\n")

    parent = mt.load_fixture("std-128")
    for n in (64, 32, 24):
        child = mt.subsample(parent, n, policy="coverage", name=f"std-{n}")
        spec = {"name": child.name, "parent": "std-128", "labels": child.labels}
        (OUT / f"std-{n}.json").write_text(json.dumps(spec, indent=1) + "\n")
        print(child.name, mt.region_counts(child))


if __name__ == "__main__":
    main()
