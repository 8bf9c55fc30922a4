import numpy as np
import pytest

from gazeseg.volume import make_volume, write_volume


@pytest.fixture
def two_plateau_volume(tmp_path):
    """64x64 slice: left half intensity 0, right half 100."""
    arr = np.zeros((64, 64), dtype=np.int16)
    arr[:, 32:] = 100
    vol = make_volume(arr)
    path = tmp_path / "plateau.gsv"
    write_volume(vol, str(path))
    return str(path)


@pytest.fixture
def blob_volume(tmp_path):
    """128x128x3 volume with one bright square blob per slice."""
    rng = np.random.Generator(np.random.PCG64(7))
    vol_arr = rng.integers(0, 40, size=(3, 128, 128), dtype=np.int16)
    for z in range(3):
        vol_arr[z, 30:80, 40 + 10 * z : 90 + 10 * z] = 900 + 10 * z
    vol = make_volume(vol_arr, spacing=(0.8, 0.8, 2.5))
    path = tmp_path / "blob.gsv"
    write_volume(vol, str(path))
    return str(path)
