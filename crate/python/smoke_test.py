#!/usr/bin/env python3
"""Smoke test for the fndlink_py extension module.

Builds the extension with cargo, loads it, and exercises the main types and
operations end to end:

    python3 python/smoke_test.py
"""

import json
import math
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

REPO_ROOT = Path(__file__).resolve().parent.parent


def build_and_import():
    subprocess.run(
        ["cargo", "build", "-p", "fndlink-py", "--release"],
        cwd=REPO_ROOT,
        check=True,
    )
    built = REPO_ROOT / "target" / "release" / "libfndlink_py.so"
    if not built.exists():  # e.g. macOS
        built = REPO_ROOT / "target" / "release" / "libfndlink_py.dylib"
    stage = Path(tempfile.mkdtemp(prefix="fndlink_py_"))
    shutil.copy(built, stage / "fndlink_py.so")
    sys.path.insert(0, str(stage))
    import fndlink_py

    return fndlink_py


def approx(a, b, tol=1e-9):
    assert abs(a - b) <= tol, f"{a} != {b} (tol {tol})"


def main():
    fp = build_and_import()

    # Physics: Zeeman arithmetic, line shape, saturation.
    model = fp.NvSpinModel()
    lo, hi = fp.zeeman_peaks(model, 10.0)
    approx(lo, 2842.0)
    approx(hi, 2898.0)
    approx(fp.lorentzian_dip(2875.0, 2870.0, 10.0), 0.5)
    approx(fp.contrast_at_power(0.0, model), model.contrast_cap / 2.0)

    cluster = fp.FndCluster(0, [8.0, 8.0], [0.0, 0.0, 1.0], 500.0)
    field = fp.MagneticFieldMap.zero()
    rate = fp.cluster_fluorescence(cluster, [], field, 1.0)
    approx(rate, 500.0)
    dipped = fp.cluster_fluorescence(cluster, [fp.Tone(2870.0, 30.0)], field, 1.0)
    assert dipped < rate

    # Scene rendering: determinism and averaging.
    fov = fp.FieldOfView(16.0, 16.0, 16, 16)
    clusters = fp.generate_clusters(7, 3, fov)
    assert len(clusters) == 3
    scene = fp.Scene(clusters, field, fov, 1.0)
    noise = fp.NoiseModel()
    tones = [[fp.Tone(2870.0, -6.0)] for _ in clusters]
    a = scene.render(tones, noise, False, 123)
    b = scene.render(tones, noise, False, 123)
    assert a.counts() == b.counts(), "seeded renders must be identical"
    assert a.dims == (16, 16)
    avg = fp.average_frames([a, b])
    approx(avg.total(), a.total(), 1e-6)

    # Modem: image round trip and BER.
    pixels = [(i * 37) % 256 for i in range(28 * 28)]
    bits = fp.encode_image(pixels, 28, 28)
    assert len(bits) == 6272
    assert list(fp.decode_image(bits, 28, 28)) == pixels
    flipped = list(bits)
    flipped[0] ^= 1
    approx(fp.ber(bits, flipped), 1.0 / 6272.0)

    fsk = fp.paper_symbol_maps("fsk-zfs")
    assert fsk.users == 2
    approx(fsk.tone_for(0, 1).freq_mhz, 2900.0)

    # Detection: exact reference match wins.
    det = scene.render(tones, noise, True, 0)
    quiet = scene.render([[] for _ in clusters], noise, True, 0)
    detected = fp.mse_detect(det, [([0], det), ([1], quiet)])
    assert list(detected) == [0]

    # Fitting: recover a synthetic dip.
    freqs = [2830.0 + i for i in range(81)]
    trace = [
        1000.0 * (1.0 - 0.2 * 25.0 / ((f - 2871.0) ** 2 + 25.0)) for f in freqs
    ]
    baseline, peaks, converged = fp.fit_lorentzian(freqs, trace, 1)
    assert converged
    approx(baseline, 1000.0, 1e-3)
    center, fwhm, contrast = peaks[0]
    approx(center, 2871.0, 1e-3)
    approx(fwhm, 10.0, 1e-3)
    approx(contrast, 0.2, 1e-6)

    # Harness: a small deterministic end-to-end simulate run.
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        img = tmp / "msg.pgm"
        w, h = 8, 8
        img.write_bytes(
            b"P5\n%d %d\n255\n" % (w, h) + bytes((i * 11) % 256 for i in range(w * h))
        )
        config = {
            "scheme": "fsk-zfs",
            "master_seed": 5,
            "n_ref": 4,
            "deterministic": True,
            "users": [{"images": [str(img)]}, {"images": [str(img)]}],
        }
        report = json.loads(fp.run_simulate(json.dumps(config), str(tmp / "out")))
        assert report["aggregate_ber"] == 0.0
        assert report["per_user_bits"] == [512, 512]
        recovered = (tmp / "out" / "recovered_user0_img0.pgm").read_bytes()
        assert recovered == img.read_bytes()

        # Capacity study through the JSON entry point.
        cap_config = {
            "scheme": "fsk-reffree",
            "master_seed": 11,
            "cluster_count": 20,
            "capacity": {"seeds": 2, "n_users": None},
        }
        cap = json.loads(fp.run_capacity(json.dumps(cap_config), str(tmp / "cap")))
        assert cap["capacity"]["seeds"] == 2
        assert all(a >= 1 for a in cap["capacity"]["assigned_per_seed"])

    sine_check = sum(math.sin(x) ** 2 for x in range(3))  # keep math import honest
    assert sine_check >= 0
    print("fndlink_py smoke test: all checks passed")


if __name__ == "__main__":
    main()
