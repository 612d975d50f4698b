#!/usr/bin/env python3
"""Smoke test for the bimodal_py extension module.

Builds expectations from first principles and exercises the main types and
operations end to end, including a full synthetic pipeline run.

Usage:
    cargo build -p bimodal-py --release
    python3 python/smoke_test.py
"""

import math
import shutil
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]


def load_module():
    """Copies the built cdylib next to a temp dir under its import name."""
    candidates = []
    for profile in ("release", "debug"):
        for pattern in ("libbimodal_py.so", "libbimodal_py.dylib", "bimodal_py.dll"):
            candidates.extend((ROOT / "target" / profile).glob(pattern))
    if not candidates:
        sys.exit(
            "bimodal_py library not found; run `cargo build -p bimodal-py --release` first"
        )
    lib = max(candidates, key=lambda p: p.stat().st_mtime)
    stage = Path(tempfile.mkdtemp(prefix="bimodal_py_"))
    suffix = ".pyd" if lib.suffix == ".dll" else ".so"
    shutil.copy2(lib, stage / f"bimodal_py{suffix}")
    sys.path.insert(0, str(stage))
    import bimodal_py  # noqa: E402

    return bimodal_py


checks = []


def check(name, ok, detail=""):
    checks.append((name, ok))
    status = "ok" if ok else "FAIL"
    print(f"{status} - {name}" + (f" ({detail})" if detail else ""))


def main():
    m = load_module()

    check("sigmoid symmetry", m.sigmoid(0.0) == 0.5)
    check(
        "sigmoid value",
        abs(m.sigmoid(2.0) - 0.8807970779778823) < 1e-14,
        f"{m.sigmoid(2.0)}",
    )
    check("l1 distance", m.l1_distance([1.0, 2.0], [0.0, 0.0]) == 3.0)

    rows = m.softmax_rows([[1.0, 2.0]])
    check("softmax", abs(rows[0][1] - 0.7310585786300049) < 1e-14)

    check(
        "auc pair counting",
        m.auc([(0.9, True), (0.8, True), (0.7, False), (0.85, False)]) == 0.75,
    )
    p, degenerate = m.pair_probability(1.0, 2.0)
    check("pair probability", abs(p - 0.2) < 1e-15 and not degenerate)

    d = m.derange(6, seed=1)
    check("derangement", sorted(d) == list(range(6)) and all(i != j for i, j in enumerate(d)))

    vocab = m.Vocabulary.build([["dog", "cat"], ["dog", "sun"], ["dog"]], 2)
    check("vocabulary order", vocab.words() == ["dog", "cat"])
    # encode returns the bits as a compact bytes object
    check("bow encode", vocab.encode(["cat", "cat", "whale"]) == bytes([0, 1]))

    # Tiny RBM run: reconstruction error must fall on two repeated patterns.
    data = [[1.0, 1.0, 1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.0, 1.0, 1.0, 1.0]] * 10
    rbm = m.Rbm("bernoulli", 6, 4, seed=7)
    history = rbm.train(data, epochs=150, epsilon=0.1, batch_size=10, seed=7)
    check(
        "rbm learns",
        history[-1] < 0.5 * history[0],
        f"{history[0]:.3f} -> {history[-1]:.3f}",
    )
    h = rbm.hidden_activation([1.0, 1.0, 1.0, 0.0, 0.0, 0.0])
    check("rbm hidden in (0,1)", all(0.0 < x < 1.0 for x in h))

    rsm = m.Rbm("replicated_softmax", 5, 3, seed=0)
    zero_w = m.Rbm("replicated_softmax", 5, 3, seed=0)
    check(
        "rsm needs word count",
        _raises(lambda: zero_w.hidden_activation([1, 0, 1, 0, 0])),
    )

    # Siamese: loss decomposition and a small training run.
    net = m.Siamese(4, 3, seed=5)
    li, lt, lc, total = net.loss([0.2, 0.4, 0.6, 0.8], [0.1, 0.3, 0.5, 0.7], True, 0.5, 0.2)
    check(
        "loss decomposition",
        abs(total - (0.5 * (li + lt) + 0.5 * lc)) < 1e-12,
    )
    pairs = []
    for i in range(24):
        center = 0.2 if i % 2 == 0 else 0.8
        pairs.append(
            (
                [center + 0.02 * ((i * 7) % 5 - 2) for _ in range(4)],
                [center + 0.02 * ((i * 3) % 5 - 2) for _ in range(4)],
            )
        )
    net.train(pairs, epochs=60, learning_rate=0.1, batch_size=8, lam=None, seed=3)
    pos = net.dissimilarity(*pairs[0])
    neg = net.dissimilarity(pairs[0][0], pairs[1][1])
    check("siamese separates clusters", pos < neg, f"pos {pos:.4f} vs neg {neg:.4f}")

    # Feature extraction on a tiny gradient image.
    w, h = 16, 12
    rgb = bytearray()
    for y in range(h):
        for x in range(w):
            rgb += bytes((x * 16 % 256, y * 20 % 256, (x + y) % 256))
    values, layout = m.extract_image_features(w, h, bytes(rgb))
    check("image features 1296", len(values) == 1296)
    check(
        "feature layout",
        layout == [("mpeg7", 0, 784), ("gist", 784, 512)],
        str(layout),
    )

    # Full pipeline on synthetic data.
    with tempfile.TemporaryDirectory() as tmp:
        data_dir = str(Path(tmp) / "data")
        _, _, config = m.generate_synthetic(
            data_dir, pairs=80, triples=16, clusters=4, noise=0.2, seed=11
        )
        ws = str(Path(tmp) / "ws")
        m.run_pipeline(config, ws)
        metrics = dict(m.read_metrics(ws))
        acc = float(metrics["accuracy"])
        check("pipeline accuracy >= 0.8", acc >= 0.8, f"accuracy {acc}")
        check("pipeline auc present", 0.0 <= float(metrics["auc"]) <= 1.0)

        # Stage guard: rerunning without force fails.
        check(
            "overwrite protection",
            _raises(lambda: m.run_stage("choose", config, ws)),
        )

    failed = [name for name, ok in checks if not ok]
    print(f"\n{len(checks) - len(failed)}/{len(checks)} checks passed")
    if failed:
        sys.exit(1)


def _raises(fn):
    try:
        fn()
        return False
    except ValueError:
        return True


if __name__ == "__main__":
    main()
