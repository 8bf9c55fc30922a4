#!/usr/bin/env python3
"""Out-of-process segmentation worker.

Speaks newline-delimited JSON on stdin/stdout:

    {"type":"hello"}                                   -> {"type":"hello_ack","name":...,"version":...}
    {"type":"set_image","image_path":p,"slice":z}      -> {"type":"ready","image_id":...}
    {"type":"segment","request_id":n,"points":[[x,y]],
     "labels":[1,...]}                                 -> {"type":"mask","request_id":n,"iw":...,
                                                           "ih":...,"rle":[...],"score":s}
    {"type":"shutdown"}                                -> (exit 0)

Anything malformed gets {"type":"error","message":...}; the loop never
crashes on bad input. Requests are strictly serial.

The default ``stub`` model needs no weights: a pixel is foreground when
its intensity is >= the mean intensity of the prompt points. The ``sam``
model is an optional runtime flag wrapping a locally installed promptable
segmentation checkpoint; which checkpoint or multimask setting fits best
is left to the operator.

Deliberately self-contained: reads .gsv volumes and emits RLE itself so
the worker can ship and run with no dependency on the engine package.
"""

import argparse
import array
import hashlib
import json
import sys

PROTOCOL_VERSION = "1"


def reply(obj):
    sys.stdout.write(json.dumps(obj, separators=(",", ":")) + "\n")
    sys.stdout.flush()


def fail(message):
    reply({"type": "error", "message": message})


def load_gsv_slice(path, z):
    """Returns (iw, ih, list of int16 row-major values, image_id hex)."""
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii", errors="replace").split()
        if not header or header[0] != "GSV1":
            raise ValueError("not a GSV1 file")
        if len(header) != 7:
            raise ValueError("malformed GSV1 header")
        iw, ih, depth = int(header[1]), int(header[2]), int(header[3])
        if iw < 1 or ih < 1 or depth < 1:
            raise ValueError("non-positive dimensions")
        payload = fh.read()
    if len(payload) != iw * ih * depth * 2:
        raise ValueError("payload size does not match header")
    if not 0 <= z < depth:
        raise ValueError(f"slice {z} outside [0, {depth})")
    values = array.array("h")
    values.frombytes(payload[z * iw * ih * 2 : (z + 1) * iw * ih * 2])
    if sys.byteorder == "big":
        values.byteswap()
    return iw, ih, values, hashlib.sha256(payload).hexdigest()


def rle_encode(flat):
    """Alternating run lengths over a row-major scan, background first."""
    runs = []
    current = False
    count = 0
    for v in flat:
        v = bool(v)
        if v == current:
            count += 1
        else:
            runs.append(count)
            current = v
            count = 1
    runs.append(count)
    return runs


class StubModel:
    """Threshold rule: foreground iff intensity >= mean prompt intensity."""

    name = "stub"

    def segment(self, iw, ih, values, points):
        refs = [values[y * iw + x] for x, y in points]
        threshold = sum(refs) / len(refs)
        return [v >= threshold for v in values], 1.0


class SamModel:
    """Adapter over a locally installed SAM checkpoint; optional."""

    name = "sam"

    def __init__(self, checkpoint, model_type, multimask):
        try:
            import numpy as np
            import torch  # noqa: F401
            from segment_anything import SamPredictor, sam_model_registry
        except ImportError as exc:
            raise RuntimeError(f"sam model unavailable: {exc}") from exc
        self._np = np
        sam = sam_model_registry[model_type](checkpoint=checkpoint)
        self._predictor = SamPredictor(sam)
        self._multimask = multimask
        self._embedded = None

    def segment(self, iw, ih, values, points):
        np = self._np
        slice_arr = np.asarray(values, dtype=np.float64).reshape(ih, iw)
        if self._embedded != (iw, ih, id(values)):
            lo, hi = slice_arr.min(), slice_arr.max()
            gray = ((slice_arr - lo) / max(hi - lo, 1.0) * 255.0).astype(np.uint8)
            self._predictor.set_image(np.stack([gray] * 3, axis=-1))
            self._embedded = (iw, ih, id(values))
        coords = np.array(points, dtype=np.float64)
        labels = np.ones(len(points), dtype=np.int64)
        masks, scores, _ = self._predictor.predict(
            point_coords=coords, point_labels=labels, multimask_output=self._multimask
        )
        best = int(np.argmax(scores))
        return masks[best].ravel().tolist(), float(scores[best])


def run_protocol(model):
    iw = ih = None
    values = None
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        try:
            msg = json.loads(line)
        except json.JSONDecodeError:
            fail("message is not valid JSON")
            continue
        if not isinstance(msg, dict):
            fail("message must be a JSON object")
            continue
        mtype = msg.get("type")

        if mtype == "hello":
            reply({"type": "hello_ack", "name": model.name, "version": PROTOCOL_VERSION})

        elif mtype == "set_image":
            try:
                iw, ih, values, image_id = load_gsv_slice(
                    msg["image_path"], int(msg.get("slice", 0))
                )
            except (KeyError, TypeError, ValueError, OSError) as exc:
                fail(f"cannot load image: {exc}")
                continue
            reply({"type": "ready", "image_id": image_id})

        elif mtype == "segment":
            if values is None:
                fail("segment before set_image")
                continue
            try:
                request_id = int(msg["request_id"])
                points = [(int(x), int(y)) for x, y in msg["points"]]
                labels = [int(v) for v in msg.get("labels", [1] * len(points))]
            except (KeyError, TypeError, ValueError):
                fail("segment needs request_id and [[x,y],...] points")
                continue
            if not points:
                fail("segment needs at least one point")
                continue
            if len(labels) != len(points) or any(v != 1 for v in labels):
                fail("only foreground (label 1) points are supported")
                continue
            if any(not (0 <= x < iw and 0 <= y < ih) for x, y in points):
                fail("point outside image bounds")
                continue
            try:
                flat, score = model.segment(iw, ih, values, points)
            except Exception as exc:  # model faults must not kill the loop
                fail(f"model failure: {exc}")
                continue
            reply(
                {
                    "type": "mask",
                    "request_id": request_id,
                    "iw": iw,
                    "ih": ih,
                    "rle": rle_encode(flat),
                    "score": score,
                }
            )

        elif mtype == "shutdown":
            return 0

        else:
            fail(f"unknown message type {mtype!r}")
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--model", choices=("stub", "sam"), default="stub")
    parser.add_argument("--checkpoint", default=None, help="sam model weights path")
    parser.add_argument("--model-type", default="vit_b", help="sam registry key")
    parser.add_argument(
        "--multimask", action="store_true", help="let sam propose multiple masks"
    )
    args = parser.parse_args(argv)

    if args.model == "sam":
        try:
            model = SamModel(args.checkpoint, args.model_type, args.multimask)
        except RuntimeError as exc:
            print(str(exc), file=sys.stderr)
            return 2
    else:
        model = StubModel()
    return run_protocol(model)


if __name__ == "__main__":
    sys.exit(main())
