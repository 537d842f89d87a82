"""End-to-end acceptance suite.

One test per shipped guarantee, each printing a PASS line (run with -s to
see them). The expensive end-to-end check trains both backbones on the
bundled synthetic dataset via the repro script exactly as a user would.
"""

import csv
import time

import numpy as np
import pytest

from fd import fd_gradient, grad_check, rel_err
from melbird import convnet, dsp, metrics, repro, transformer
from melbird import tensor as T
from melbird.audio import Segment
from melbird.cli import main as cli_main
from melbird.tensor import GradTape, Tensor, backward
from melbird.train import TrainConfig, TrainingLog, bce_loss, cosine_lr, early_stop
from test_metrics import reference_macro_f1, reference_samples_f1


def ok(n, label):
    print(f"\nACCEPTANCE {n:02d} ({label}): PASS")


def test_c01_mel_anchor():
    assert 999.5 <= float(dsp.hz_to_mel(1000.0)) <= 1000.5
    ok(1, "1000 Hz maps to ~1000 mel")


def test_c02_pipeline_shape():
    rng = np.random.default_rng(0)
    t = np.arange(320000) / 32000.0
    wave = 0.4 * np.sin(2 * np.pi * 1200 * t) + rng.normal(0, 0.02, 320000)
    seg = Segment(np.clip(wave, -1, 1), "clip", 0.0)
    started = time.monotonic()
    spec = dsp.mel_spectrogram(seg, dsp.MelParams())
    img = dsp.to_image(spec)
    elapsed = time.monotonic() - started
    assert spec.values.shape == (128, 1001)
    assert spec.values.max() == 0.0
    assert spec.values.min() >= -80.0
    assert img.pixels.shape == (224, 224)
    assert img.pixels.min() >= 0.0 and img.pixels.max() <= 1.0
    assert elapsed < 1.0
    ok(2, "10 s/32 kHz -> 128x1001 dB -> 224x224 image")


def test_c03_patch_counts():
    overlapping = transformer.AstConfig(num_classes=5, patch_size=16, patch_stride=10,
                                        embed_dim=768, n_layers=1, n_heads=12)
    assert overlapping.tokens_per_axis == 21
    assert overlapping.n_patches == 441
    w = transformer.init_weights(overlapping, 0)
    tokens = transformer.embed(
        transformer.patchify(np.zeros((224, 224)), overlapping), w, overlapping
    )
    assert tokens.shape[0] == 442
    non_overlapping = transformer.AstConfig(num_classes=5, patch_size=16, patch_stride=16,
                                            embed_dim=64, n_layers=1, n_heads=4)
    assert non_overlapping.n_patches == 196
    ok(3, "patch/token counts for stride 10 and 16")


def _proj(rng, shape):
    r = Tensor(rng.normal(size=shape))
    return lambda out: T.sum_(T.mul(out, r))


GRAD_SEEDS = range(20)


def test_c04_gradient_suite():
    started = time.monotonic()
    for seed in GRAD_SEEDS:
        rng = np.random.default_rng(seed)
        p = _proj(rng, (3, 2))
        grad_check(lambda a, b: p(T.matmul(a, b)),
                   [rng.normal(size=(3, 4)), rng.normal(size=(4, 2))])
        p = _proj(rng, (3, 5))
        grad_check(lambda x: p(T.softmax(x, axis=-1)), [rng.normal(size=(3, 5))])
        p = _proj(rng, (3, 6))
        grad_check(lambda x, g, b: p(T.layer_norm(x, g, b)),
                   [rng.normal(size=(3, 6)), rng.normal(size=6), rng.normal(size=6)])
        p = _proj(rng, (4, 3))
        grad_check(lambda x: p(T.gelu(x)), [rng.normal(size=(4, 3))])
        grad_check(lambda x: p(T.sigmoid(x)), [rng.normal(size=(4, 3))])
        p = _proj(rng, (3, 4, 4))
        grad_check(lambda x, k: p(convnet.conv2d(x, k, 1)),
                   [rng.normal(size=(2, 4, 4)), rng.normal(size=(3, 2, 3, 3))])
        t = rng.integers(0, 2, size=(3, 4)).astype(np.float64)
        grad_check(lambda x: bce_loss(x, t), [rng.uniform(0.05, 0.95, size=(3, 4))])
    for seed in GRAD_SEEDS:
        _check_mbconv(seed)
    for seed in GRAD_SEEDS:
        _check_micro_ast(seed)
        _check_micro_cnn(seed)
    elapsed = time.monotonic() - started
    assert elapsed < 120.0, f"gradient suite took {elapsed:.0f}s"
    ok(4, f"finite-difference suite, 20 instances/op, {elapsed:.0f}s")


def _check_mbconv(seed):
    rng = np.random.default_rng(seed)
    spec = convnet.BlockSpec(2, 3, 1, 3)
    x = rng.normal(size=(3, 5, 5))
    arrays = {
        "x": x,
        "block.expand.k": rng.normal(size=(6, 3, 1, 1)) * 0.5,
        "block.expand.g": rng.uniform(0.5, 1.5, size=6),
        "block.expand.b": rng.normal(size=6) * 0.1,
        "block.dw.k": rng.normal(size=(6, 3, 3)) * 0.5,
        "block.dw.g": rng.uniform(0.5, 1.5, size=6),
        "block.dw.b": rng.normal(size=6) * 0.1,
        "block.project.k": rng.normal(size=(3, 6, 1, 1)) * 0.5,
        "block.project.g": rng.uniform(0.5, 1.5, size=3),
        "block.project.b": rng.normal(size=3) * 0.1,
    }
    names = list(arrays)
    p = _proj(rng, (3, 5, 5))

    def build(*tensors):
        w = dict(zip(names, tensors))
        return p(convnet.mbconv_block(w["x"], w, "block.", spec))

    grad_check(build, [arrays[n] for n in names])


MICRO_AST = transformer.AstConfig(num_classes=3, patch_size=2, patch_stride=2, embed_dim=8,
                                  n_layers=1, n_heads=1, mlp_ratio=2, image_size=4)
MICRO_CNN = convnet.CnnConfig(num_classes=3, stem_channels=4,
                              blocks=(convnet.BlockSpec(2, 4, 2, 3),),
                              head_channels=8, image_size=8)


def _check_micro_ast(seed):
    rng = np.random.default_rng(seed)
    weights = transformer.init_weights(MICRO_AST, seed)
    img = rng.uniform(size=(4, 4))
    targets = np.eye(3)[rng.integers(0, 3)][None, :]
    with GradTape() as tape:
        loss = bce_loss(transformer.forward(img, weights, MICRO_AST), targets)
    backward(loss, tape)

    def f(x):
        w = {k: Tensor(v.data) for k, v in weights.items()}
        w["patch.w"] = Tensor(x)
        return float(bce_loss(transformer.forward(img, w, MICRO_AST), targets).data)

    assert rel_err(weights["patch.w"].grad, fd_gradient(f, weights["patch.w"].data)) <= 1e-4


def _check_micro_cnn(seed):
    rng = np.random.default_rng(seed)
    weights = convnet.init_weights(MICRO_CNN, seed)
    img = rng.uniform(size=(8, 8))
    targets = np.eye(3)[rng.integers(0, 3)][None, :]
    with GradTape() as tape:
        loss = bce_loss(convnet.forward(img, weights, MICRO_CNN), targets)
    backward(loss, tape)

    def f(x):
        w = {k: Tensor(v.data) for k, v in weights.items()}
        w["stem.k"] = Tensor(x)
        return float(bce_loss(convnet.forward(img, w, MICRO_CNN), targets).data)

    assert rel_err(weights["stem.k"].grad, fd_gradient(f, weights["stem.k"].data)) <= 1e-4


def test_c05_attention_normalization():
    cfg = transformer.AstConfig(num_classes=4, patch_size=14, patch_stride=14, embed_dim=24,
                                n_layers=12, n_heads=12, mlp_ratio=2, image_size=28)
    weights = transformer.init_weights(cfg, 0)
    probs = []
    transformer.forward(np.random.default_rng(0).uniform(size=(28, 28)), weights, cfg,
                        attn_probs=probs)
    assert len(probs) == 12 * 12
    for mat in probs:
        assert np.allclose(mat.sum(axis=1), 1.0, atol=1e-6)
    ok(5, "attention rows sum to 1 across a 12-layer pass")


def test_c06_schedule_and_stopping():
    cfg = TrainConfig(learning_rate=1e-4, total_epochs=40)
    assert abs(cosine_lr(0, cfg) - 1e-4) <= 1e-12
    assert abs(cosine_lr(20, cfg) - 5e-5) <= 1e-12
    assert abs(cosine_lr(40, cfg) - 0.0) <= 1e-12
    history = [1.0 - 0.01 * i for i in range(21)] + [0.85] * 10
    stop, best = early_stop(history, patience=10)
    assert stop and best == 21 and len(history) == 31
    assert not early_stop(history[:30], patience=10)[0]
    resets = [1.0] + [1.1] * 8 + [0.5]
    assert not early_stop(resets, patience=10)[0]
    ok(6, "cosine endpoints exact; best@21 + patience 10 stops at 31")


def test_c07_metric_oracle_equivalence():
    started = time.monotonic()
    rng = np.random.default_rng(123)
    for _ in range(1000):
        pred = rng.integers(0, 2, size=(20, 6))
        target = rng.integers(0, 2, size=(20, 6))
        macro, _ = metrics.macro_f1(pred, target)
        assert abs(macro - reference_macro_f1(pred, target)) < 1e-12
        assert abs(metrics.samples_f1(pred, target)
                   - reference_samples_f1(pred, target)) < 1e-12
    _, _, f1 = metrics.f1_from_counts(6, 2, 4)
    assert abs(f1 - 0.6667) <= 1e-4
    elapsed = time.monotonic() - started
    assert elapsed < 10.0
    ok(7, f"1000 random cases match brute force, {elapsed:.1f}s")


@pytest.fixture(scope="module")
def repro_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("repro")
    started = time.monotonic()
    assert repro.run(out, seed=0) == 0
    elapsed = time.monotonic() - started
    return {"out": out, "elapsed": elapsed}


def test_c08_synthetic_end_to_end(repro_dir):
    out = repro_dir["out"]
    assert repro_dir["elapsed"] <= 1800.0, f"repro took {repro_dir['elapsed']:.0f}s"
    targets = {"ast": 0.90, "cnn": 0.80}
    best_seen = {}
    for kind, need in targets.items():
        log = TrainingLog.from_csv(out / f"training_log_{kind}.csv")
        assert len(log.records) <= 30
        best = max(r.val_macro_f1 for r in log.records[:30])
        assert best >= need, f"{kind} best val macro F1 {best:.3f} < {need}"
        best_seen[kind] = best
        running = np.minimum.accumulate([r.val_loss for r in log.records])
        assert np.all(np.diff(running) <= 0)
    assert best_seen["ast"] >= 5.0 * (1.0 / 8.0)  # at least 5x the chance rate
    # a converged model ranks a training clip's own class first
    clip = out / "audio" / "species00" / "clip000.wav"
    import io
    from contextlib import redirect_stdout

    buf = io.StringIO()
    with redirect_stdout(buf):
        assert cli_main(["predict", str(out / "model-ast.weights"), str(clip),
                         "--topk", "3"]) == 0
    top_label = buf.getvalue().splitlines()[0].split("\t")[0]
    assert top_label == "species00"
    ok(8, f"synthetic 8-class run: both models converge in "
          f"{repro_dir['elapsed']:.0f}s")


def test_c09_qualitative_behaviours(repro_dir):
    # (a) skewed labels + accuracy only on the frequent class
    rng = np.random.default_rng(2)
    n, c = 300, 10
    true_cls = np.where(rng.uniform(size=n) < 0.8, 0, rng.integers(1, c, size=n))
    target = np.eye(c, dtype=int)[true_cls]
    pred_cls = np.where(true_cls == 0, 0, (true_cls + 1) % c)
    pred = np.eye(c, dtype=int)[pred_cls]
    macro, _ = metrics.macro_f1(pred, target)
    samples = metrics.samples_f1(pred, target)
    assert samples >= macro

    # (b) comparison table: both models, both F1 flavours, losses, seconds
    out = repro_dir["out"]
    with open(out / "comparison.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["model"] for r in rows] == ["ast", "cnn"]
    for r in rows:
        for col in ("train_macro_f1", "val_macro_f1", "train_samples_f1",
                    "val_samples_f1", "train_loss", "val_loss", "total_seconds"):
            float(r[col])
    text = (out / "comparison.txt").read_text().strip().splitlines()
    assert len(text) == 4
    assert len(text[0].split("  ")) >= 5

    # both models beat a uniform-random predictor's expected samples F1
    sim = np.random.default_rng(7)
    chance = np.mean([
        metrics.samples_f1(
            metrics.binarize(sim.uniform(size=(64, 8))), np.eye(8, dtype=int)[sim.integers(0, 8, 64)]
        )
        for _ in range(200)
    ])
    for r in rows:
        assert float(r["val_samples_f1"]) > chance
    ok(9, "samples F1 >= macro F1 on skewed labels; table has both models")


TINY_CFG = """\
model.type = ast
ast.patch_size = 32
ast.patch_stride = 32
ast.embed_dim = 16
ast.n_layers = 1
ast.n_heads = 2
ast.mlp_ratio = 2
cnn.stem_channels = 4
cnn.blocks = 1:4:2:3,2:8:2:3
cnn.head_channels = 16
train.learning_rate = 1e-3
train.total_epochs = 2
train.train_batch = 10
train.val_batch = 2
train.patience = 2
train.seed = 0
data.val_fraction = 0.25
"""


def _strip_seconds(csv_path, drop):
    with open(csv_path, newline="") as fh:
        rows = list(csv.reader(fh))
    keep = [i for i, name in enumerate(rows[0]) if name not in drop]
    return [[row[i] for i in keep] for row in rows]


def test_c10_command_determinism(tmp_path):
    cfg = tmp_path / "tiny.cfg"
    cfg.write_text(TINY_CFG)
    runs = []
    for tag in ("one", "two"):
        tree = tmp_path / tag / "tree"
        out = tmp_path / tag / "run"
        assert cli_main(["synth", "--out", str(tree), "--classes", "3", "--clips", "4",
                         "--seed", "0"]) == 0
        assert cli_main(["manifest", str(tree), "--out", str(out),
                         "--config", str(cfg)]) == 0
        assert cli_main(["features", str(out / "manifest.csv"), "--out", str(out)]) == 0
        assert cli_main(["compare", "--out", str(out), "--config", str(cfg)]) == 0
        assert cli_main(["eval", str(out / "model-ast.weights"), "--out", str(out),
                         "--split", "val"]) == 0
        runs.append((tree, out))

    (tree_a, out_a), (tree_b, out_b) = runs
    wav_a = sorted(p.relative_to(tree_a) for p in tree_a.rglob("*.wav"))
    wav_b = sorted(p.relative_to(tree_b) for p in tree_b.rglob("*.wav"))
    assert wav_a == wav_b
    for rel in wav_a:
        assert (tree_a / rel).read_bytes() == (tree_b / rel).read_bytes()

    # CSVs and cache keys embed absolute clip paths, which necessarily differ
    # between the two runs; normalise those before byte comparison
    def norm(path, tree):
        return path.read_bytes().replace(str(tree).encode(), b"TREE")

    for name in ("manifest.csv", "histogram.csv", "split_train.csv", "split_val.csv",
                 "features.bin"):
        assert norm(out_a / name, tree_a) == norm(out_b / name, tree_b)
    for kind in ("ast", "cnn"):
        assert (out_a / f"model-{kind}.weights").read_bytes() == (
            out_b / f"model-{kind}.weights").read_bytes()
        assert _strip_seconds(out_a / f"training_log_{kind}.csv", {"seconds"}) == \
            _strip_seconds(out_b / f"training_log_{kind}.csv", {"seconds"})
    assert _strip_seconds(out_a / "comparison.csv", {"total_seconds"}) == \
        _strip_seconds(out_b / "comparison.csv", {"total_seconds"})
    assert (out_a / "metrics_ast_val.csv").read_bytes() == (
        out_b / "metrics_ast_val.csv").read_bytes()
    ok(10, "reruns with the same seed are byte-identical (timings aside)")
