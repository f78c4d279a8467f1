"""
Cohort bookkeeping and simulated corpora
========================================

Splits work on a roster of volumes. Patient-level splits keep every volume
of a patient in one subset; stratified splits keep label proportions.
"""

import tempfile
from collections import Counter

from mrimotion import shepp_logan_volume
from mrimotion.cohort import (
    Roster,
    RosterEntry,
    balanced_undersample,
    build_simulated_corpus,
    cohort_arithmetic_check,
    patient_level_split,
    store_save,
    stratified_split,
)

entries = [RosterEntry(f"r{p:03d}_{v}", f"r{p:03d}") for p in range(168) for v in range(2)]
real = Roster(tuple(entries))
plan = patient_level_split(real, {"test": 160 / 336, "train": 176 / 336}, seed=0)
print(plan.sizes(), cohort_arithmetic_check(plan, {"test": 160, "train": 176}, real))

# %%
# Balancing 600 corrupted against 428 clean volumes, then a 70/30
# stratified split of the 856 survivors.

pool = Roster(tuple(RosterEntry(f"m{i:04d}", f"m{i:04d}", is_corrupted=i < 600) for i in range(1028)))
balanced = balanced_undersample(pool, "is_corrupted", seed=1)
split = stratified_split(balanced, "is_corrupted", 0.7, seed=1)
lookup = balanced.by_id()
for name, members in split.subsets.items():
    print(name, len(members), Counter(lookup[v].is_corrupted for v in members))

# %%
# Building a small simulated corpus. Clean volumes are reused round-robin when
# more corrupted volumes are requested than there are sources.

with tempfile.TemporaryDirectory() as tmp:
    for i in range(3):
        v = shepp_logan_volume(2, 64, 64, seed=i, patient_id=f"pt{i}")
        store_save(f"{tmp}/clean", f"clean{i}", v)
    roster, records = build_simulated_corpus(
        [f"clean{i}" for i in range(3)], {"mild": 2, "moderate": 2, "severe": 1},
        seed=5, source_store=f"{tmp}/clean", dest_store=f"{tmp}/sim")
    for e in roster:
        if e.is_corrupted:
            print(e.volume_id, "from", e.source_id, f"keep {records[e.volume_id].drawn_retain_ratio:.2f}")
