import os
import struct
import sys

import pytest

WORKER = os.path.join(os.path.dirname(__file__), "..", "sam_worker.py")


@pytest.fixture
def worker_cmd():
    return [sys.executable, os.path.abspath(WORKER), "--model", "stub"]


@pytest.fixture
def fixture_volume(tmp_path):
    """4x4x2 volume with intensities 0..31; matches the golden transcript."""
    payload = b"".join(struct.pack("<h", v) for v in range(32))
    path = tmp_path / "fix.gsv"
    path.write_bytes(b"GSV1 4 4 2 1.0 1.0 1.0\n" + payload)
    return str(path)
