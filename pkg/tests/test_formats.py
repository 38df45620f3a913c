import numpy as np
import pytest

from msmri import formats
from msmri.exceptions import FormatError
from msmri.forward_model import make_radial_trajectory
from conftest import crandn


def f32_complex(z):
    return z.real.astype(np.float32).astype(float) + 1j * z.imag.astype(np.float32).astype(float)


def test_image_round_trip(tmp_path, rng):
    img = f32_complex(crandn(rng, 5, 7, 3))
    formats.save_image(tmp_path / "a.cimg", img)
    back = formats.load_image(tmp_path / "a.cimg")
    assert np.array_equal(back, img)
    assert (tmp_path / "a.cimg").stat().st_size == 4 + 4 + 12 + 8 * img.size


def test_image_layout_is_phase_major(tmp_path):
    img = np.arange(12, dtype=float).reshape(2, 3, 2) + 0j
    formats.save_image(tmp_path / "a.cimg", img)
    raw = np.frombuffer((tmp_path / "a.cimg").read_bytes()[20:], dtype="<f4")
    np.testing.assert_array_equal(raw[0::2], np.transpose(img.real, (2, 0, 1)).ravel())


def test_coils_and_kspace_round_trip(tmp_path, rng):
    S = f32_complex(crandn(rng, 3, 4, 5))
    y = f32_complex(crandn(rng, 2, 3, 17))
    formats.save_coils(tmp_path / "s.coil", S)
    formats.save_kspace(tmp_path / "y.ksp", y)
    assert np.array_equal(formats.load_coils(tmp_path / "s.coil"), S)
    assert np.array_equal(formats.load_kspace(tmp_path / "y.ksp"), y)


def test_trajectory_round_trip(tmp_path):
    traj = make_radial_trajectory(16, 5, 3)
    formats.save_trajectory_arrays(tmp_path / "t.trj", traj.coords, traj.dcf)
    coords, dcf = formats.load_trajectory_arrays(tmp_path / "t.trj")
    assert np.array_equal(coords, traj.coords)
    assert np.array_equal(dcf, traj.dcf)


@pytest.mark.parametrize("mangle", ["magic", "version", "truncate", "extra"])
def test_corrupted_files_rejected(tmp_path, rng, mangle):
    p = tmp_path / "a.cimg"
    formats.save_image(p, crandn(rng, 4, 4, 1))
    raw = bytearray(p.read_bytes())
    if mangle == "magic":
        raw[:4] = b"XXXX"
    elif mangle == "version":
        raw[4] = 9
    elif mangle == "truncate":
        raw = raw[:-4]
    else:
        raw += b"\0\0\0\0"
    p.write_bytes(bytes(raw))
    with pytest.raises(FormatError):
        formats.load_image(p)


def test_wrong_container_rejected(tmp_path, rng):
    formats.save_kspace(tmp_path / "y.ksp", crandn(rng, 1, 1, 4))
    with pytest.raises(FormatError, match="magic"):
        formats.load_image(tmp_path / "y.ksp")
