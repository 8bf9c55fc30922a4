"""Driving an out-of-process worker over the wire protocol
===========================================================

Backends can live in another process (where the heavyweight model and
its GPU state belong) and speak newline-delimited JSON on stdin/stdout.
This demo drives the bundled stub worker (a thresholding model with no
weights) through the exact protocol a real model worker implements.

Needs the worker from ../worker;  falls back to a plain transcript dump
if it is missing.
"""

import os
import sys
import tempfile

import numpy as np

from gazeseg import (
    RemoteBackend,
    SegmentRequest,
    load_volume,
    make_volume,
    run_transcript,
    write_volume,
)
from gazeseg.prompts import Mode, PromptPoint, PromptSet

worker_script = os.path.join(os.path.dirname(__file__), "..", "worker", "sam_worker.py")
if not os.path.exists(worker_script):
    sys.exit("the worker package is not present; nothing to demo")
worker_cmd = [sys.executable, os.path.abspath(worker_script), "--model", "stub"]

out_dir = tempfile.mkdtemp(prefix="gazeseg_demo_")
arr = np.zeros((96, 96), dtype=np.int16)
arr[20:70, 30:80] = 700
image_path = os.path.join(out_dir, "square.gsv")
write_volume(make_volume(arr), image_path)
vol = load_volume(image_path)

# --- the raw conversation -----------------------------------------------------
print("scripted transcript (one JSON object per line):")
replies = run_transcript(
    worker_cmd,
    [
        {"type": "hello"},
        {"type": "set_image", "image_path": image_path, "slice": 0},
        {"type": "segment", "request_id": 1, "points": [[40, 40]], "labels": [1]},
        {"type": "shutdown"},
    ],
)
for reply in replies:
    print(f"  <- {reply[:100]}{'...' if len(reply) > 100 else ''}")

# --- the same worker behind the Backend interface -------------------------------
# RemoteBackend does the handshake, checks the worker loaded the exact
# bytes we did (content hash), and maps protocol errors to
# BackendUnavailable.
backend = RemoteBackend(worker_cmd)
try:
    backend.prepare(vol, 0)
    prompt = PromptSet(vol.image_id, 0, Mode.ALL_POINTS, (PromptPoint(40, 40, 0),), 1)
    result = backend.segment(SegmentRequest(1, vol.image_id, 0, prompt))
    print(f"\nworker mask: {result.mask.foreground_count()} foreground px "
          f"(expected {50 * 50}), score {result.score}")
finally:
    backend.close()
