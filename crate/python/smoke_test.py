"""Smoke test for the tridecon extension module.

Run after `pip install -e crates/py --no-build-isolation`:

    python python/smoke_test.py
"""

import tempfile
from pathlib import Path

import numpy as np

import tridecon


def main() -> None:
    clean = tridecon.phantom((32, 32, 32), ellipsoids=4, tubes=2, seed=5)
    assert clean.shape == (32, 32, 32) and clean.dtype == np.float32
    assert 0.0 <= clean.min() and clean.max() <= 1.0

    noisy = tridecon.degrade(clean, sigma_top=0.4, sigma_bottom=1.8, photons=300.0, seed=5)
    assert noisy.shape == clean.shape
    assert not np.array_equal(noisy, clean)

    # Defocus surrogate: blurring (with noise switched off) must read as
    # less in focus, per section and volume-wide.
    blurred = tridecon.degrade(
        clean, sigma_top=2.5, sigma_bottom=2.5, decay_tau=None, photons=1e12, seed=1
    )
    mid_clean = (clean[16] * 255.0).astype(np.float64)
    mid_blurred = (blurred[16] * 255.0).astype(np.float64)
    assert tridecon.ifq_surrogate(mid_blurred) > tridecon.ifq_surrogate(mid_clean)

    sharp_q = tridecon.volume_quality(clean, metric="ifq-surrogate")
    blurred_q = tridecon.volume_quality(blurred, metric="ifq-surrogate")
    assert blurred_q["score"] > sharp_q["score"]
    assert set(sharp_q["axes"]) == {"xy", "xz", "yz"}
    assert len(sharp_q["axes"]["xy"]["sections"]) == 32

    # BRISQUE is deterministic and stays in its documented range; its
    # builtin model is calibrated for textured content, so no ordering is
    # asserted on synthetic phantoms.
    score = tridecon.brisque(mid_clean)
    assert 0.0 <= score <= 100.0
    assert tridecon.brisque(mid_clean) == score

    fused = tridecon.fuse(noisy, noisy, noisy)
    assert np.array_equal(fused, noisy), "fusing a volume with itself must be exact"

    with tempfile.TemporaryDirectory() as tmp:
        root = Path(tmp)
        ckpts = {}
        for axis in ("xy", "xz", "yz"):
            ckpts[axis] = str(root / f"identity-{axis}.ckpt")
            tridecon.write_identity_checkpoint(ckpts[axis], axis)

        one = tridecon.restore_axis(noisy, ckpts["xy"])
        assert np.allclose(one, noisy, atol=1e-6)

        three = tridecon.restore(noisy, xy=ckpts["xy"], xz=ckpts["xz"], yz=ckpts["yz"])
        assert np.allclose(three, noisy, atol=1e-6)

        only_xy = tridecon.restore(noisy, xy=ckpts["xy"], weights=(1.0, 0.0, 0.0))
        assert np.allclose(only_xy, noisy, atol=1e-6)

        try:
            tridecon.restore(noisy, xy=ckpts["xy"])  # missing xz/yz with nonzero weights
        except ValueError:
            pass
        else:
            raise AssertionError("restore accepted missing checkpoints with nonzero weights")

        tiff = str(root / "vol.tiff")
        tridecon.save_tiff(noisy, tiff)
        back = tridecon.load_tiff(tiff)
        assert np.abs(back - noisy).max() <= 0.5 / 65535.0 + 1e-7

    print("smoke test passed")


if __name__ == "__main__":
    main()
