"""Record a headless session, replay it bit-exactly, export a dataset
======================================================================

The whole live loop runs without hardware or UI: a scanpath script feeds
the engine, every fixation becomes a prompt, the reference backend masks
it, and a session log captures everything needed to reproduce the run.
Replay pushes the recorded gaze through the identical pipeline with a
synchronous dispatcher, so mask files come out byte-identical.
"""

import os
import tempfile

import numpy as np

from gazeseg import (
    ReferenceBackend,
    ScanpathSpec,
    ScanpathTarget,
    ScreenPoint,
    export_dataset,
    make_volume,
    read_session,
    replay,
    run_scripted_session,
    write_volume,
)

out_dir = tempfile.mkdtemp(prefix="gazeseg_demo_")

# a two-slice volume with a bright structure on slice 0
arr = np.zeros((2, 128, 128), dtype=np.int16)
arr[0, 30:90, 40:100] = 800
arr[1, 50:70, 50:70] = 500
image_path = os.path.join(out_dir, "volume.gsv")
write_volume(make_volume(arr), image_path)

# the user looks at the structure, then glances at a second spot, then away
scanpath = ScanpathSpec(
    (
        ScanpathTarget(ScreenPoint(60.0, 50.0), 400.0, 1.5),
        ScanpathTarget(ScreenPoint(80.0, 70.0), 300.0, 1.0),
        ScanpathTarget(ScreenPoint(5.0, 120.0), 250.0, 0.5),
    ),
    transit_samples=4,
)

session_path = os.path.join(out_dir, "reading.gss")
outcome = run_scripted_session(scanpath, session_path, image_path, seed=42)
print(f"recorded session -> {session_path}")
print(f"saved mask       -> {outcome['saved_masks'][0]}")

events = read_session(session_path)
kinds = {}
for e in events:
    kinds[e.kind] = kinds.get(e.kind, 0) + 1
print(f"\n{len(events)} events: " + ", ".join(f"{k} x{n}" for k, n in sorted(kinds.items())))

# --- replay twice and compare bytes ------------------------------------------
live_bytes = open(outcome["saved_masks"][0], "rb").read()
for k in range(2):
    replay_dir = os.path.join(out_dir, f"replay_{k}")
    finals = replay(session_path, ReferenceBackend(), out_dir=replay_dir)
    name = os.path.basename(outcome["saved_masks"][0])
    replayed = open(os.path.join(replay_dir, name), "rb").read()
    print(f"replay {k}: final masks for {sorted(z for _, z in finals)}, "
          f"saved mask byte-identical: {replayed == live_bytes}")
    assert replayed == live_bytes

# --- export (volume, gaze, mask) triples ---------------------------------------
dataset_dir = os.path.join(out_dir, "dataset")
triples = export_dataset(session_path, dataset_dir)
print(f"\nexported {len(triples)} dataset triple(s):")
print(open(os.path.join(dataset_dir, "manifest.txt")).read().strip())
