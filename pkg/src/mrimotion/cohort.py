"""Cohort bookkeeping: rosters, patient-level and stratified splits, class balancing,
volume stores and simulated-corpus construction.

Every split first sorts the roster by ``volume_id`` and then draws from a
generator seeded by the caller, so plans depend only on the roster's
content and the seed, never on input order.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy import ndimage

from . import __version__
from .errors import (
    EmptyStratum,
    InsufficientPatients,
    MissingVolume,
    SingleClass,
    StoreWriteError,
)
from .motion import SEVERITY_TABLE, simulate_pair, volume_seed
from .volume import SIDECAR_SUFFIX, SEVERITIES, Volume, load_volume, save_volume

RECORD_SUFFIX = ".motion.json"


@dataclass(frozen=True)
class RosterEntry:
    volume_id: str
    patient_id: str
    modality: str = "T1"
    is_corrupted: bool = False
    severity_label: Optional[str] = None
    center: str = ""
    source_id: Optional[str] = None  # clean partner of a simulated volume

    def __post_init__(self):
        if not self.patient_id:
            raise ValueError(f"{self.volume_id}: empty patient_id")


@dataclass(frozen=True)
class Roster:
    entries: tuple = ()

    def __post_init__(self):
        entries = tuple(sorted(self.entries, key=lambda e: e.volume_id))
        ids = [e.volume_id for e in entries]
        if len(set(ids)) != len(ids):
            raise ValueError("roster volume ids must be unique")
        object.__setattr__(self, "entries", entries)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def by_id(self) -> dict:
        return {e.volume_id: e for e in self.entries}

    def to_json(self) -> str:
        return json.dumps({"entries": [asdict(e) for e in self.entries]}, indent=1) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "Roster":
        return cls(tuple(RosterEntry(**e) for e in json.loads(text)["entries"]))


@dataclass(frozen=True)
class SplitPlan:
    subsets: dict
    seed: int
    policy: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps({"subsets": self.subsets, "seed": self.seed, "policy": self.policy},
                          indent=1) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "SplitPlan":
        d = json.loads(text)
        return cls(d["subsets"], d["seed"], d.get("policy", {}))

    def sizes(self) -> dict:
        return {k: len(v) for k, v in self.subsets.items()}


def _check_fractions(fractions: Mapping[str, float]) -> None:
    if not fractions:
        raise ValueError("no subsets requested")
    if any(f < 0 for f in fractions.values()):
        raise ValueError("fractions must be non-negative")
    if abs(math.fsum(fractions.values()) - 1.0) > 1e-9:
        raise ValueError(f"fractions must sum to 1, got {math.fsum(fractions.values())}")


def patient_level_split(r: Roster, fractions: Mapping[str, float], seed: int) -> SplitPlan:
    """Assign whole patients to subsets, approaching the target volume fractions.

    Patients are shuffled, then each goes to the subset with the largest
    remaining volume deficit (ties to the earlier-declared subset). A patient
    is never divided, even if that costs fraction fidelity.
    """
    _check_fractions(fractions)
    if len(r) == 0:
        raise InsufficientPatients("roster is empty")
    patients: dict[str, list[str]] = {}
    for e in r:
        patients.setdefault(e.patient_id, []).append(e.volume_id)
    order = sorted(patients)
    rng = np.random.default_rng(seed)
    shuffled = [order[i] for i in rng.permutation(len(order))]

    names = list(fractions)
    total = len(r)
    targets = np.array([fractions[n] * total for n in names])
    counts = np.zeros(len(names))
    subsets = {n: [] for n in names}
    for pid in shuffled:
        deficit = np.where(targets > 0, targets - counts, -np.inf)
        idx = int(np.argmax(deficit))
        subsets[names[idx]].extend(patients[pid])
        counts[idx] += len(patients[pid])
    return SplitPlan({n: sorted(v) for n, v in subsets.items()}, int(seed),
                     {"kind": "patient_level", "fractions": dict(fractions)})


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def stratified_split(r: Roster, strata_key: str, fraction: float, seed: int,
                     names: tuple = ("train", "val"),
                     strata_values: Optional[Sequence] = None) -> SplitPlan:
    """Send a seeded ``fraction`` of every stratum to the first subset.

    Per-stratum counts are rounded to nearest (halves up), with a floor of
    one item when the fraction is positive.
    """
    if not 0 <= fraction <= 1:
        raise ValueError("fraction must lie in [0, 1]")
    if len(r) == 0:
        raise EmptyStratum("roster is empty")
    strata: dict = {}
    for e in r:
        strata.setdefault(getattr(e, strata_key), []).append(e.volume_id)
    if strata_values is not None:
        empty = [v for v in strata_values if v not in strata]
        if empty:
            raise EmptyStratum(f"strata without entries: {empty}")
    rng = np.random.default_rng(seed)
    first, second = [], []
    for value in sorted(strata, key=repr):
        ids = strata[value]
        n_first = round_half_up(fraction * len(ids))
        if fraction > 0:
            n_first = max(1, n_first)
        perm = rng.permutation(len(ids))
        first += [ids[i] for i in perm[:n_first]]
        second += [ids[i] for i in perm[n_first:]]
    return SplitPlan({names[0]: sorted(first), names[1]: sorted(second)}, int(seed),
                     {"kind": "stratified", "key": strata_key, "fraction": fraction})


def balanced_undersample(r: Roster, class_key: str, seed: int) -> Roster:
    """Randomly thin every class down to the minority-class count."""
    classes: dict = {}
    for e in r:
        classes.setdefault(getattr(e, class_key), []).append(e)
    if len(classes) < 2:
        raise SingleClass(f"need at least two classes of {class_key!r}, found {len(classes)}")
    keep_n = min(len(v) for v in classes.values())
    rng = np.random.default_rng(seed)
    kept = []
    for value in sorted(classes, key=repr):
        members = classes[value]
        idx = np.sort(rng.choice(len(members), size=keep_n, replace=False))
        kept += [members[i] for i in idx]
    return Roster(tuple(kept))


@dataclass
class ArithmeticReport:
    size_mismatches: dict = field(default_factory=dict)  # name -> (expected, actual)
    overlaps: list = field(default_factory=list)  # (subset, subset, shared count)
    patient_leaks: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not (self.size_mismatches or self.overlaps or self.patient_leaks)


def cohort_arithmetic_check(plan: SplitPlan, expected: Mapping[str, int],
                            roster: Optional[Roster] = None) -> ArithmeticReport:
    """Check subset sizes against an expected table, and disjointness.

    With a roster, patient leakage across subsets is reported as well.
    """
    report = ArithmeticReport()
    for name, n in expected.items():
        actual = len(plan.subsets.get(name, []))
        if actual != n:
            report.size_mismatches[name] = (n, actual)
    names = sorted(plan.subsets)
    sets = {n: set(plan.subsets[n]) for n in names}
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            shared = len(sets[a] & sets[b])
            if shared:
                report.overlaps.append((a, b, shared))
    if roster is not None:
        lookup = roster.by_id()
        owner: dict = {}
        for name in names:
            for vid in plan.subsets[name]:
                pid = lookup[vid].patient_id
                owner.setdefault(pid, set()).add(name)
        report.patient_leaks = sorted(p for p, s in owner.items() if len(s) > 1)
    return report


# -- augmentation --------------------------------------------------------------


def augment_pair(a: Volume, b: Volume, seed: int, max_angle: float = 5.0):
    """Apply the same seeded left-right flip and in-plane rotation to both members."""
    rng = np.random.default_rng(seed)
    flip = bool(rng.integers(2))
    angle = float(rng.uniform(-max_angle, max_angle))

    def _apply(v: Volume) -> Volume:
        data = v.data[:, :, ::-1] if flip else v.data
        data = ndimage.rotate(data, angle, axes=(2, 1), reshape=False, order=1, mode="constant")
        return Volume(np.clip(data, 0.0, None), v.meta, v.spacing)

    return _apply(a), _apply(b)


# -- volume stores -------------------------------------------------------------


def store_ids(store) -> list[str]:
    """Ids of all MRIF volumes in a directory, sorted."""
    store = Path(store)
    if not store.is_dir():
        raise MissingVolume(f"store {store} does not exist")
    return sorted(p.name[: -len(SIDECAR_SUFFIX)] for p in store.glob("*" + SIDECAR_SUFFIX))


def store_load(store, volume_id: str) -> Volume:
    path = Path(store) / (volume_id + SIDECAR_SUFFIX)
    if not path.exists():
        raise MissingVolume(f"volume {volume_id!r} not found in {store}")
    return load_volume(path)


def store_save(store, volume_id: str, v: Volume) -> Path:
    try:
        return save_volume(v, Path(store) / (volume_id + SIDECAR_SUFFIX))
    except OSError as exc:
        raise StoreWriteError(f"cannot write {volume_id!r} to {store}: {exc}") from exc


def corpus_jobs(clean_ids: Sequence[str], per_severity_counts: Mapping[str, int]):
    """Round-robin plan of (job index, clean id, level) over the sorted clean ids."""
    ids = sorted(clean_ids)
    jobs = []
    for level in SEVERITIES:
        n = int(per_severity_counts.get(level, 0))
        if n < 0:
            raise ValueError("severity counts must be non-negative")
        for _ in range(n):
            if not ids:
                raise MissingVolume("no clean volumes to corrupt")
            j = len(jobs)
            jobs.append((j, ids[j % len(ids)], level))
    return jobs


def corrupted_id(clean_id: str, level: str, index: int) -> str:
    return f"{clean_id}__{level}__{index:05d}"


def build_simulated_corpus(clean_ids: Sequence[str], per_severity_counts: Mapping[str, int],
                           seed: int, source_store, dest_store, threads: int = 1):
    """Corrupt clean volumes into paired simulated data.

    Job ``j`` corrupts clean volume ``sorted(clean_ids)[j % n]`` with seed
    ``seed + j``, so the corpus is identical for any thread count.

    Returns
    -------
    roster : Roster
        Clean and corrupted members; corrupted entries carry ``source_id``.
    records : dict
        Corrupted volume id to its CorruptionRecord.
    """
    jobs = corpus_jobs(clean_ids, per_severity_counts)
    if not jobs:
        return Roster(()), {}
    used = sorted({cid for _, cid, _ in jobs})
    sources = {cid: store_load(source_store, cid) for cid in used}
    dest = Path(dest_store)
    try:
        dest.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise StoreWriteError(f"cannot create {dest}: {exc}") from exc

    def run(job):
        j, cid, level = job
        corrupted, _, record = simulate_pair(sources[cid], level, volume_seed(seed, j))
        vid = corrupted_id(cid, level, j)
        store_save(dest, vid, corrupted)
        try:
            record.save(dest / (vid + RECORD_SUFFIX))
        except OSError as exc:
            raise StoreWriteError(str(exc)) from exc
        return vid, cid, corrupted.meta, record

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        results = list(pool.map(run, jobs))

    entries, records = [], {}
    for cid in used:
        v = sources[cid]
        store_save(dest, cid, v)
        entries.append(RosterEntry(cid, v.meta.patient_id, v.meta.modality, False, None,
                                   v.meta.center))
    for vid, cid, meta, record in results:
        entries.append(RosterEntry(vid, meta.patient_id, meta.modality, True,
                                   meta.severity_label, meta.center, source_id=cid))
        records[vid] = record
    roster = Roster(tuple(entries))
    (dest / "roster.json").write_text(roster.to_json())
    manifest = {
        "toolkit_version": __version__,
        "seed": int(seed),
        "seed_rule": "seed + job_index",
        "counts": {lvl: int(per_severity_counts.get(lvl, 0)) for lvl in SEVERITIES},
        "profiles": {k: {"phase_bound": p.phase_bound, "retain_ratio_range": list(p.retain_ratio_range)}
                     for k, p in SEVERITY_TABLE.items()},
    }
    (dest / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return roster, records
