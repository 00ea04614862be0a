"""Electrode layouts, region tags and reduced montages.

Region membership follows the label prefix:

    Fp, AF, F   -> frontal
    FC, C       -> central
    CP, P       -> parietal
    PO, O       -> occipital
    FT, T, TP   -> temporal

A trailing ``z`` marks a midline electrode; odd numbers are left, even are
right. Fixtures live in ``eegrecon/data/montages`` as JSON: the root is a
list of ``{label, x, y}``, reduced montages are ``{name, parent, labels}``.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    IdentityNotAllowed,
    IndexOutOfRange,
    InfeasibleCoverage,
    MissingPrerequisite,
    UnknownLabel,
    ValidationError,
)
from .records import EegTrial

REGIONS = ("frontal", "central", "parietal", "occipital", "temporal")

_PREFIX_REGION = {
    "FP": "frontal", "AF": "frontal", "F": "frontal",
    "FC": "central", "C": "central",
    "CP": "parietal", "P": "parietal",
    "PO": "occipital", "O": "occipital",
    "FT": "temporal", "T": "temporal", "TP": "temporal",
}
# longest prefixes first so FC wins over F, TP over T
_LABEL_RE = re.compile(r"(FP|AF|FT|FC|F|TP|T|CP|C|PO|P|O)(Z|\d+H?)", re.IGNORECASE)


def _parse(label: str):
    m = _LABEL_RE.fullmatch(label.strip())
    if m is None:
        raise UnknownLabel(f"not a recognised 10-20/10-10 label: {label!r}")
    return m.group(1).upper(), m.group(2).upper()


def region_of(label: str) -> str:
    prefix, _ = _parse(label)
    return _PREFIX_REGION[prefix]


def hemisphere_of(label: str) -> str:
    _, pos = _parse(label)
    if pos == "Z":
        return "midline"
    return "left" if int(pos.rstrip("H")) % 2 else "right"


@dataclass(frozen=True)
class Electrode:
    label: str
    x: float
    y: float
    region: str = ""
    hemisphere: str = ""

    def __post_init__(self):
        if not self.region:
            object.__setattr__(self, "region", region_of(self.label))
        if not self.hemisphere:
            object.__setattr__(self, "hemisphere", hemisphere_of(self.label))


@dataclass(frozen=True)
class Montage:
    """Ordered electrode list. The order is the channel order of trials
    recorded (or projected) with this montage. ``source_indices`` index the
    immediate parent and are empty for a root montage."""

    name: str
    electrodes: tuple[Electrode, ...]
    source_indices: tuple[int, ...] = ()
    parent: Montage | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        labels = [e.label for e in self.electrodes]
        if len(set(labels)) != len(labels):
            raise ValidationError(f"duplicate electrode labels in montage {self.name}")
        if self.parent is not None:
            if len(self.source_indices) != len(self.electrodes):
                raise ValidationError("source_indices must match electrode count")
            if len(set(self.source_indices)) != len(self.source_indices):
                raise ValidationError("source_indices must be distinct")

    def __len__(self):
        return len(self.electrodes)

    @property
    def labels(self) -> list[str]:
        return [e.label for e in self.electrodes]

    @property
    def coords(self) -> np.ndarray:
        return np.array([[e.x, e.y] for e in self.electrodes], dtype=np.float64)

    @property
    def is_root(self) -> bool:
        return self.parent is None

    def index(self, label: str) -> int:
        return self.labels.index(label)

    def region_indices(self, region: str) -> list[int]:
        return [i for i, e in enumerate(self.electrodes) if e.region == region]

    def indices_into(self, ancestor: Montage | str | None = None) -> np.ndarray:
        """Compose ``source_indices`` up the parent chain.

        With no ancestor given, returns indices into the root montage.
        """
        target = ancestor.name if isinstance(ancestor, Montage) else ancestor
        idx = np.arange(len(self))
        node = self
        while node.name != target and node.parent is not None:
            idx = np.asarray(node.source_indices, dtype=np.int64)[idx]
            node = node.parent
        if target is not None and node.name != target:
            raise ValidationError(f"{target} is not an ancestor of {self.name}")
        return idx

    def select(self, indices: Sequence[int], name: str) -> Montage:
        """Child montage made of the given parent indices (kept in given order)."""
        indices = [int(i) for i in indices]
        for i in indices:
            if not 0 <= i < len(self):
                raise IndexOutOfRange(f"electrode index {i} outside montage of size {len(self)}")
        return Montage(name, tuple(self.electrodes[i] for i in indices), tuple(indices), self)

    def without_region(self, region: str) -> Montage:
        keep = [i for i, e in enumerate(self.electrodes) if e.region != region]
        return self.select(keep, f"{self.name}-no-{region}")


def region_counts(m: Montage) -> dict[str, dict[str, int]]:
    out = {r: {"total": 0, "left": 0, "right": 0, "midline": 0} for r in REGIONS}
    for e in m.electrodes:
        out[e.region]["total"] += 1
        out[e.region][e.hemisphere] += 1
    return out


def check_coverage(m: Montage, min_per_region: int = 2) -> bool:
    for c in region_counts(m).values():
        if c["total"] < min_per_region or abs(c["left"] - c["right"]) > 1:
            return False
    return True


# ---------------------------------------------------------------- fixtures

def _fixture_dir():
    return resources.files("eegrecon") / "data" / "montages"


def fixture_names() -> list[str]:
    return sorted(p.name[:-5] for p in _fixture_dir().iterdir() if p.name.endswith(".json"))


def root_from_records(name: str, records) -> Montage:
    return Montage(name, tuple(Electrode(r["label"], float(r["x"]), float(r["y"])) for r in records))


def load_fixture(name: str, search_dir: str | Path | None = None) -> Montage:
    """Load a named montage, resolving reduced montages through their parents.

    ``search_dir`` is checked before the packaged fixtures.
    """
    text = None
    if search_dir is not None:
        p = Path(search_dir) / f"{name}.json"
        if p.exists():
            text = p.read_text()
    if text is None:
        res = _fixture_dir() / f"{name}.json"
        if not res.is_file():
            raise MissingPrerequisite(f"montage fixture {name}.json", "unknown montage name")
        text = res.read_text()
    spec = json.loads(text)
    if isinstance(spec, list):
        return root_from_records(name, spec)
    parent = load_fixture(spec["parent"], search_dir)
    try:
        idx = [parent.index(lab) for lab in spec["labels"]]
    except ValueError as exc:
        raise UnknownLabel(f"{name}: label not in parent {spec['parent']}: {exc}") from None
    return parent.select(idx, spec.get("name", name))


def load_montage_file(path: str | Path) -> Montage:
    path = Path(path)
    return load_fixture(path.stem, path.parent)


# -------------------------------------------------------------- subsample

def _mirror_units(m: Montage, members: list[int]):
    """Split a region's electrodes into midline singles, mirrored left/right
    pairs and unpaired lateral leftovers."""
    mid = [i for i in members if m.electrodes[i].hemisphere == "midline"]
    left = [i for i in members if m.electrodes[i].hemisphere == "left"]
    right = [i for i in members if m.electrodes[i].hemisphere == "right"]
    pairs, used = [], set()
    for i in left:
        ex, ey = m.electrodes[i].x, m.electrodes[i].y
        best, best_d = None, math.inf
        for j in right:
            if j in used:
                continue
            d = math.hypot(m.electrodes[j].x + ex, m.electrodes[j].y - ey)
            if d < best_d - 1e-12:
                best, best_d = j, d
        if best is not None:
            used.add(best)
            pairs.append((i, best))
    paired = {i for p in pairs for i in p}
    leftovers = [i for i in left + right if i not in paired]
    return [(i,) for i in mid], pairs, leftovers


def _pick_region(m: Montage, members: list[int], quota: int) -> list[int]:
    xy = m.coords
    mids, pairs, leftovers = _mirror_units(m, members)
    units = [tuple(u) for u in mids] + [tuple(p) for p in pairs]
    # seed: unit holding the electrode closest to the midline
    seed_el = min(members, key=lambda i: (abs(xy[i, 0]), i))
    chosen: list[int] = []
    remaining = quota

    def take(unit):
        nonlocal remaining
        chosen.extend(unit)
        remaining -= len(unit)
        if unit in units:
            units.remove(unit)

    # quota is at least 2, so the seed unit always fits
    take(next((u for u in units if seed_el in u), (seed_el,)))

    while remaining > 0:
        cands = [u for u in units if len(u) <= remaining]
        if remaining == 1:
            singles = [(i,) for u in units if len(u) == 2 for i in u] + [(i,) for i in leftovers]
            cands = cands + [s for s in singles if s[0] not in chosen]
        if not cands:
            break

        def score(u):
            d = min(np.min(np.hypot(xy[chosen, 0] - xy[i, 0], xy[chosen, 1] - xy[i, 1])) for i in u)
            return (-d, min(u))

        take(min(cands, key=score))
    return chosen


def _allocate(sizes: dict[str, int], target: int) -> dict[str, int]:
    total = sum(sizes.values())
    ideal = {r: target * n / total for r, n in sizes.items()}
    quota = {r: min(sizes[r], max(2, int(math.floor(ideal[r])))) for r in sizes}
    order = list(sizes)
    while sum(quota.values()) < target:
        grow = [r for r in order if quota[r] < sizes[r]]
        r = max(grow, key=lambda r: (ideal[r] - quota[r], -order.index(r)))
        quota[r] += 1
    while sum(quota.values()) > target:
        shrink = [r for r in order if quota[r] > 2]
        r = min(shrink, key=lambda r: (ideal[r] - quota[r], order.index(r)))
        quota[r] -= 1
    return quota


def subsample(parent: Montage, target_count: int, policy: str = "coverage",
              name: str | None = None) -> Montage:
    """Reduce ``parent`` to ``target_count`` electrodes.

    ``coverage`` keeps at least two electrodes per region with left/right
    counts within one, choosing inside each region by greedy farthest-point
    selection over mirrored pairs. ``uniform`` takes evenly spaced indices.
    Output keeps the parent's channel order.
    """
    n = len(parent)
    name = name or f"{parent.name}-{target_count}"
    if target_count >= n:
        raise IdentityNotAllowed(f"target {target_count} >= parent size {n}")
    if target_count < 1:
        raise ValidationError("target_count must be positive")
    if policy == "uniform":
        idx = np.unique(np.round(np.linspace(0, n - 1, target_count)).astype(int))
        return parent.select(idx.tolist(), name)
    if policy not in ("coverage", "coverage-preserving"):
        raise ValidationError(f"unknown policy {policy!r}")

    members = {r: parent.region_indices(r) for r in REGIONS}
    missing = [r for r, idx in members.items() if len(idx) < 2]
    if missing:
        raise InfeasibleCoverage(f"parent lacks two electrodes in: {', '.join(missing)}")
    if target_count < 2 * len(REGIONS):
        raise InfeasibleCoverage(f"{target_count} electrodes cannot give two per region")
    quota = _allocate({r: len(v) for r, v in members.items()}, target_count)
    picked = []
    for r in REGIONS:
        picked += _pick_region(parent, members[r], quota[r])
    return parent.select(sorted(picked), name)


def project_trial(trial: EegTrial, montage: Montage) -> EegTrial:
    """Select the rows of ``trial`` that ``montage`` keeps, in montage order."""
    if montage.is_root:
        if trial.channels != len(montage):
            raise IndexOutOfRange(
                f"root montage {montage.name} has {len(montage)} channels, trial has {trial.channels}")
        return trial.with_data(trial.data.copy(), montage.name)
    idx = np.asarray(montage.source_indices, dtype=np.int64)
    if trial.montage and trial.montage != montage.parent.name:
        # a trial tagged with a further ancestor: compose indices up to it
        node = montage.parent
        while node is not None and node.name != trial.montage:
            node = node.parent
        if node is not None:
            idx = montage.indices_into(node)
    if idx.size and (idx.max() >= trial.channels or idx.min() < 0):
        raise IndexOutOfRange(
            f"montage {montage.name} references channel {int(idx.max())} "
            f"of a {trial.channels}-channel trial")
    return trial.with_data(trial.data[idx].copy(), montage.name)
