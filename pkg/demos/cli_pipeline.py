"""
The command-line pipeline
=========================

The same steps as the shell commands

    mrimotion simulate --in clean --out sim --counts mild=4,moderate=3,severe=3 --seed 7
    mrimotion assess --pred sim --gt sim --method corrupted --out m_corrupted
    mrimotion compare --metrics m_corrupted/metrics.csv m_smoothed/metrics.csv --out cmp
    mrimotion report --metrics m_corrupted/metrics.csv --roster sim/roster.json --out rep

run in-process in a scratch directory. A smoothed copy of the corrupted
volumes plays the part of a second method.
"""

import os
import tempfile
from pathlib import Path

from scipy import ndimage

from mrimotion import shepp_logan_volume
from mrimotion.cli import main
from mrimotion.cohort import Roster, store_load, store_save

os.chdir(tempfile.mkdtemp(prefix="mrimotion-demo-"))
for i in range(4):
    store_save("clean", f"clean{i:02d}", shepp_logan_volume(4, 64, 64, noise=0.01, seed=i,
                                                             patient_id=f"pt{i:02d}"))

main(["simulate", "--in", "clean", "--out", "sim", "--counts", "mild=4,moderate=3,severe=3",
      "--seed", "7"])
main(["assess", "--pred", "sim", "--gt", "sim", "--method", "corrupted", "--out", "m_corrupted"])

roster = Roster.from_json(Path("sim/roster.json").read_text())
for e in roster:
    if e.is_corrupted:
        v = store_load("sim", e.volume_id)
        store_save("smoothed", e.volume_id, v.with_data(ndimage.gaussian_filter(v.data, (0, 0.8, 0.8))))
main(["assess", "--pred", "smoothed", "--gt", "sim", "--roster", "sim/roster.json",
      "--method", "smoothed", "--out", "m_smoothed"])

main(["compare", "--metrics", "m_corrupted/metrics.csv", "m_smoothed/metrics.csv",
      "--dataset", "phantom", "--out", "cmp"])
main(["report", "--metrics", "m_corrupted/metrics.csv", "m_smoothed/metrics.csv",
      "--roster", "sim/roster.json", "--out", "rep"])

print(Path("cmp/table.md").read_text())
print(Path("rep/severity_table.md").read_text())
print("outputs in", os.getcwd())
