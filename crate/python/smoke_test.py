"""Smoke test for the patchbound Python extension.

Build and install first:
    maturin build --release -m crates/py/Cargo.toml -o dist && pip install dist/patchbound-*.whl
"""

import math
import os
import struct
import tempfile

import patchbound as pb


def plg1_bytes(n_classes, geometry, images):
    """Encode a PLG1 file by hand from the documented layout."""
    out = b"PLG1" + struct.pack("<9I", len(images), n_classes, *geometry, 0)
    for image_id, rows, cols, label, logits in images:
        out += struct.pack("<4I", image_id, rows, cols, 0 if label is None else label + 1)
        out += struct.pack("<%df" % len(logits), *logits)
    return out


def main():
    p = pb.BoundParams(50000, 10, 32, 32, 3, patch_height=8, patch_width=8)
    b = pb.image_bound(p)
    assert b.t_eff == 49.0 and b.d_t == 192.0
    assert abs(b.total - 0.7414348389) < 1e-9, b

    full = pb.image_bound(pb.BoundParams.preset("imagenet1k"))
    assert full.noise_term == 0.0 and full.roughness == 1.0 and full.t_eff == 1.0

    try:
        pb.BoundParams(50000, 10, 32, 32, 3, patch_height=33)
    except ValueError as e:
        assert "patch exceeds image" in str(e)
    else:
        raise AssertionError("oversized patch accepted")

    env = pb.bound_envelope(pb.BoundParams.preset("stl10"))
    assert all(b[2] <= a[2] for a, b in zip(env, env[1:]))
    assert all(e <= r for _, r, e in env)

    assert len(pb.enumerate_grid(32, 32, 8, 8, 4, 4)) == 49
    assert pb.enumerate_grid(5, 5, 3, 3)[:2] == [(0, 0), (0, 1)]

    # 5x5 image, 3x3 patches, stride 1 -> 3x3 grid, two classes
    rows = cols = 3
    logits = []
    for i in range(rows * cols):
        logits += [float(i), float(8 - i) + 0.5]
    data = plg1_bytes(2, (5, 5, 3, 3, 1, 1), [(7, rows, cols, 1, logits)])
    s = pb.LogitSet.from_bytes(data)
    assert s.to_bytes() == data
    assert s.image_ids == [7] and s.labels == [1] and s.geometry == (5, 5, 3, 3, 1, 1)
    [(image_id, means, predicted)] = s.predictions()
    assert image_id == 7 and means == [4.0, 4.5] and predicted == 1
    assert s.patchwise_accuracy() == 100.0
    heat = s.heatmap(7, 0)
    assert len(heat) == 5 and heat[1][1:4] == [0.0, 1.0, 2.0] and heat[0] == [0.0] * 5
    for cut in (0, 39, 40, len(data) - 1):
        try:
            pb.LogitSet.from_bytes(data[:cut])
        except ValueError:
            pass
        else:
            raise AssertionError("truncated file accepted at %d bytes" % cut)

    means, predicted = pb.average_predict([1.0, 3.0, 5.0, 3.0], 2, 2)
    assert means == [3.0, 3.0] and predicted == 0

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "x.plg")
        assert s.write(path) == len(data)
        again = pb.LogitSet.read(path)
        assert again.to_bytes() == data
        pgm = os.path.join(d, "m.pgm")
        again.render_heatmap(7, 1, pgm)
        with open(pgm, "rb") as f:
            assert f.read().startswith(b"P5\n5 5\n255\n")
        try:
            pb.LogitSet.read(os.path.join(d, "missing.plg"))
        except OSError:
            pass
        else:
            raise AssertionError("missing file accepted")

    slope, _, _ = pb.fit_scaling_exponent(2, [100, 1000, 10000], trials=20, seed=7)
    assert abs(slope + 0.5) < 0.1, slope
    mu = pb.estimate_mesh_norm(2, 10000, 100, 3)
    assert 0.0 < mu < 0.02

    fixtures = pb.builtin_fixtures()
    assert len(fixtures) == 19 and ("cifar10", 8, 98.6, 84.2) in fixtures
    cmp = pb.compare_dataset("cifar10")
    assert [r[0] for r in cmp] == [4, 8, 16, 24, 32]
    assert all(0.0 < r[2] for r in cmp)

    avg, single, test_logits = pb.train_toy(n_train=1000, n_test=100, steps=3000, seed=1)
    assert len(test_logits) == 100
    assert avg == test_logits.patchwise_accuracy()
    assert avg > single, (avg, single)
    assert math.isfinite(avg)

    print("python smoke test passed: bound %.6f, toy %.1f%% vs %.1f%%, mesh slope %.3f" % (b.total, avg, single, slope))


if __name__ == "__main__":
    main()
