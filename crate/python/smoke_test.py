"""Smoke test for the `ruap` extension module.

Builds the cdylib with cargo unless RUAP_SKIP_BUILD is set, copies it next to
this script as ruap.so and exercises the main entry points.
"""

import math
import os
import pathlib
import shutil
import subprocess
import sys
import tempfile

HERE = pathlib.Path(__file__).resolve().parent
ROOT = HERE.parent


def build():
    if not os.environ.get("RUAP_SKIP_BUILD"):
        subprocess.run(["cargo", "build", "-p", "ruap-py", "--release"], cwd=ROOT, check=True)
    lib = ROOT / "target" / "release" / "libruap.so"
    if not lib.exists():
        lib = ROOT / "target" / "debug" / "libruap.so"
    shutil.copy(lib, HERE / "ruap.so")
    sys.path.insert(0, str(HERE))


def main():
    build()
    import ruap

    assert ruap.chernoff_sample_count(0.1, 0.05) == 185
    assert ruap.argmax([1.0, 3.0, 3.0]) == 1

    v = ruap.Tensor(1, 2, 1, [3.0, 4.0])
    assert v.norm("l2") == 5.0 and v.norm("linf") == 4.0
    p = v.project("l2", 1.0)
    assert math.isclose(p.norm(), 1.0) and p.project("l2", 1.0) == p

    shift = ruap.Sample(tx=1.0)
    img = ruap.Tensor(1, 3, 1, [1.0, 2.0, 3.0])
    assert shift.apply(img).data == [0.0, 1.0, 2.0]

    ts = ruap.TransformSet("R(10), T(2, 2), Sh(2), Sc(2), B(2, 0.001)")
    samples = ts.sample(5, seed=1)
    assert len(samples) == 5 and all(ts.contains(s) for s in samples)

    data = ruap.Dataset.toy(200, seed=1)
    model = ruap.Classifier.train(data, epochs=10, learning_rate=0.05, seed=0)
    acc = model.accuracy(data)
    assert acc >= 0.9, acc

    images = data.images[:40]
    u, trace = ruap.attack("robust-uap", model, images, ts, "l2", 1.0, gamma=0.3, max_epochs=1, max_inner_iters=5, psi=0.25)
    assert u.norm() <= 1.0 + 1e-12
    assert trace.startswith("epoch")

    rep = ruap.evaluate(model, images, ts, u, [0.2, 0.3], "l2", 1.0)
    assert rep["n_samples"] == 185
    rates = [r for _, r in rep["asr_r"]]
    assert rates[0] >= rates[1]
    r = ruap.estimate_robustness(model, images, ts, u, 0.3, 50, 7, "l2", 1.0)
    assert 0.0 <= r <= 1.0

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "m.ruap")
        model.save(path)
        assert ruap.Classifier.load(path).logits(images[0]) == model.logits(images[0])
        try:
            ruap.Classifier.load(os.path.join(d, "missing"))
        except OSError as e:
            assert str(e).startswith("io:")
        else:
            raise AssertionError("expected OSError")

    try:
        ruap.TransformSet("Q(1)")
    except ValueError as e:
        assert str(e).startswith("parse:")

    print(f"ok: toy accuracy {acc:.3f}, robust-uap |u|={u.norm():.3f}, asr_r={rep['asr_r']}")


if __name__ == "__main__":
    main()
