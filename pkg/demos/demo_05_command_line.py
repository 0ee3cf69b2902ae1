"""
The command-line pipeline
=========================

The same workflow through ``python -m ctckws``: synthesize a corpus, train,
spot keywords in the evaluation stream, and score the detections. Files
land in a temporary directory. Takes about three minutes on one CPU core.
"""

import subprocess
import sys
import tempfile
from pathlib import Path


def kws(*args):
    cmd = [sys.executable, "-m", "ctckws", *map(str, args)]
    print("$", " ".join(cmd[2:]), flush=True)
    subprocess.run(cmd, check=True)


work = Path(tempfile.mkdtemp(prefix="ctckws-"))
kws("synth", work / "corpus", "--seed", 3, "--sentences", 120, "--eval-sentences", 40)
kws("train", work / "corpus", work / "model.bin", "--updates", 1500, "--loss-log",
    work / "loss.csv")
kws("spot", work / "corpus" / "stream.kwstrm", "--model", work / "model.bin",
    "--keywords", work / "corpus" / "keywords_multi.txt", "--threshold-per-char", 3.0,
    "--out", work / "detections.csv", "--scores", work / "scores.kwstrm")
kws("eval", work / "corpus" / "truth.csv", "--scores", work / "scores.kwstrm",
    "--keywords", work / "corpus" / "keywords_multi.txt", "--out", work / "pr.csv")

print("\nfirst detections:")
print("".join((work / "detections.csv").read_text().splitlines(keepends=True)[:6]))
print("outputs in", work)
