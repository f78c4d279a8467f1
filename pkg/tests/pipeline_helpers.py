"""Shared fixtures-as-functions for the CLI and end-to-end tests."""

import hashlib
from pathlib import Path

from scipy import ndimage

from mrimotion.cli import main
from mrimotion.cohort import Roster, store_load, store_save
from mrimotion.phantom import shepp_logan_volume


def make_clean_store(path, n=4, nz=4, size=64):
    for i in range(n):
        v = shepp_logan_volume(nz, size, size, noise=0.01, seed=i, patient_id=f"pt{i:02d}")
        store_save(path, f"clean{i:02d}", v)


def smooth_store(src, roster_path, dest):
    """A stand-in restoration method: light Gaussian smoothing of each corrupted volume."""
    roster = Roster.from_json(Path(roster_path).read_text())
    for e in roster:
        if e.is_corrupted:
            v = store_load(src, e.volume_id)
            store_save(dest, e.volume_id, v.with_data(ndimage.gaussian_filter(v.data, (0, 0.8, 0.8))))


def run(*argv):
    return main([str(a) for a in argv])


def pipeline(threads=1, seed=7, counts="mild=4,moderate=3,severe=3"):
    """simulate -> assess (two methods) -> compare -> report, in the current directory."""
    make_clean_store("clean")
    steps = [
        ("simulate", "--in", "clean", "--out", "sim", "--counts", counts),
        ("assess", "--pred", "sim", "--gt", "sim", "--method", "corrupted", "--out", "m_corrupted"),
    ]
    codes = [run(*s, "--seed", seed, "--threads", threads) for s in steps]
    smooth_store("sim", "sim/roster.json", "restored")
    steps = [
        ("assess", "--pred", "restored", "--gt", "sim", "--roster", "sim/roster.json",
         "--method", "smoothed", "--out", "m_smoothed"),
        ("compare", "--metrics", "m_corrupted/metrics.csv", "m_smoothed/metrics.csv",
         "--baseline", "corrupted", "--dataset", "phantom", "--out", "cmp"),
        ("report", "--metrics", "m_corrupted/metrics.csv", "m_smoothed/metrics.csv",
         "--roster", "sim/roster.json", "--out", "rep"),
    ]
    codes += [run(*s, "--seed", seed, "--threads", threads) for s in steps]
    return codes


def tree_digest(root, dirs=("sim", "m_corrupted", "m_smoothed", "cmp", "rep")):
    """Map of relative path to SHA-256 for every file under the output directories."""
    out = {}
    for d in dirs:
        for p in sorted(Path(root, d).rglob("*")):
            if p.is_file():
                out[str(p.relative_to(root))] = hashlib.sha256(p.read_bytes()).hexdigest()
    return out
