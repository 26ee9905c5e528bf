"""End-to-end run on the bundled colour-blob world, driven through the CLI.

Writes a 3-class data set (20 train and 20 test images per class), then runs
every stage in order and prints the reports.  Takes a few minutes on one CPU.

    python demos/blob_world_walkthrough.py [work_dir]
"""

import shutil
import sys
from pathlib import Path

import numpy as np

from txt2img_mhn.blobs import make_blob_world
from txt2img_mhn.cli import main
from txt2img_mhn.data import write_blob_world

STAGES = ["bpe-train", "train-vqvae", "train-mhn", "generate", "evaluate", "zeroshot", "inspect-prototypes"]


def run(work: Path) -> None:
    classes = ("red", "green", "blue")
    write_blob_world(
        work / "data",
        make_blob_world(20, classes, 32, np.random.default_rng(1)),
        make_blob_world(20, classes, 32, np.random.default_rng(2)),
    )
    config = work / "run.json"
    shutil.copy(Path(__file__).with_name("blob_world.json"), config)
    out = work / "run"
    for stage in STAGES:
        print(f"== {stage}", flush=True)
        extra = ["--prompt", "a red square on white ground", "--prompt", "a blue circle on gray ground"] if stage == "generate" else []
        code = main([stage, "--config", str(config), "--out", str(out), "-v", *extra])
        if code:
            sys.exit(f"{stage} exited with {code}")
    for name in ("metrics.txt", "oa_report.txt", "prototypes.txt", "generated/prompts.tsv"):
        print(f"-- {name}\n{(out / name).read_text()}")


if __name__ == "__main__":
    run(Path(sys.argv[1]) if len(sys.argv) > 1 else Path("blob_world_run"))
