"""End-to-end acceptance gate.

Each test exercises one headline guarantee of the package at its stated
tolerance and prints a single PASS/FAIL line so the whole gate can be read
at a glance with `pytest tests/test_acceptance.py -v -s`.
"""

import json
import time

import numpy as np
import pytest

from xspect.core import Image, Modality, Rng
from xspect import (
    attention,
    discrepancy,
    losses,
    ltg,
    reflection,
    retrieval,
)
from xspect.cli import main as cli_main

V, N = Modality.VIS, Modality.NIR


def _verdict(name: str, ok: bool, detail: str = ""):
    tail = f"  ({detail})" if detail else ""
    print(f"\n[{'PASS' if ok else 'FAIL'}] {name}{tail}")
    assert ok, f"{name}{tail}"


def test_01_reflection_ratio_constancy():
    t0 = time.perf_counter()
    scene = reflection.demo_scene(materials=3, seed=101, shaded=True)
    rmap = reflection.band_ratio(
        reflection.render(scene, "N"), reflection.render(scene, "G")
    )
    stats = reflection.ratio_constancy_stats(rmap, scene.material_map)
    cvs = [stats[m]["cv"] for m in range(3)]
    means = [stats[m]["mean"] for m in range(3)]
    max_cv = max(cvs)
    sep_ok = all(
        abs(means[i] - means[j]) > 10.0 * max(max_cv, 1e-300) * abs(means[j])
        for i in range(3)
        for j in range(3)
        if i != j
    )
    elapsed = time.perf_counter() - t0
    ok = max_cv < 1e-6 and sep_ok and elapsed < 5.0
    _verdict(
        "reflection ratio constancy",
        ok,
        f"max per-material cv {max_cv:.2e}, {elapsed:.2f}s",
    )


def test_02_linear_fit_recovery():
    worst = 0.0
    for seed in (1, 2, 3):
        scene = reflection.demo_scene(materials=1, seed=seed, shaded=True)
        a = reflection.render(scene, "N").pixels[0].ravel()
        b = reflection.render(scene, "G").pixels[0].ravel()
        fit = reflection.fit_linear_factor(np.column_stack([a, b]))
        expected = reflection.analytic_ratio(scene, "N", "G", 0)
        worst = max(worst, abs(fit.slope - expected) / expected)
    _verdict("linear-fit ratio recovery", worst < 1e-9, f"worst rel err {worst:.2e}")


def test_03_embedding_discrepancy_directionality():
    wins = 0
    for seed in range(10):
        imgs = discrepancy.synthetic_images(100, 3, 48, 24, seed)
        uni = discrepancy.run_experiment(imgs, "uniform", 6, Rng(seed, 0))
        per = discrepancy.run_experiment(imgs, "per-part", 6, Rng(seed, 1))
        if (
            uni.mean_only_paired_mean == 0.0
            and uni.mean_only_centroid_distance == 0.0
            and per.mean_only_paired_mean > 0.0
            and per.paired_mean > uni.paired_mean
        ):
            wins += 1
    _verdict("embedding discrepancy directionality", wins == 10, f"{wins}/10 seeds")


def test_04_patch_scaling_contract_bulk():
    cfg = ltg.LtgConfig()  # library defaults: p=0.5, s in [0.02,0.4], r in [0.3,1/0.3]
    n_runs = 100_000
    imgs = [discrepancy.synthetic_images(1, 3, 16, 8, k)[0] for k in range(8)]
    t0 = time.perf_counter()
    applied = 0
    bad = []
    w, h = imgs[0].width, imgs[0].height
    for k in range(n_runs):
        img = imgs[k % len(imgs)]
        out, memory, trace = ltg.generate(img, cfg, Rng.for_image(4242, k))
        applied += trace.applied
        if out.pixels.min() < 0.0 or out.pixels.max() > 1.0:
            bad.append("pixel range")
        if np.abs(out.pixels - img.pixels * memory).max() > 1e-12:
            bad.append("memory identity")
        if trace.termination not in ("probability-skip", "threshold", "iteration-cap"):
            bad.append("termination")
        if trace.iterations > cfg.max_iters:
            bad.append("iteration cap")
        for rect, _ in trace.steps:
            # each side is a nearest-integer rounding of the real target, so
            # some (w*, h*) within +/- 0.5 of the recorded sides must satisfy
            # the area and aspect ranges
            area_hi = (rect.w + 0.5) * (rect.h + 0.5)
            area_lo = (rect.w - 0.5) * (rect.h - 0.5)
            if not (
                rect.fits(w, h)
                and area_hi >= cfg.s_min * w * h
                and area_lo <= cfg.s_max * w * h
                and (rect.h + 0.5) / (rect.w - 0.5) >= cfg.r_min
                and (rect.h - 0.5) / (rect.w + 0.5) <= cfg.r_max
            ):
                bad.append("geometry")
        if bad:
            break
    elapsed = time.perf_counter() - t0
    rate = applied / n_runs
    ok = not bad and abs(rate - 0.5) <= 0.01 and elapsed < 60.0
    _verdict(
        "patch scaling bulk contract",
        ok,
        f"apply-rate {rate:.4f}, {elapsed:.1f}s" + (f", violated: {bad[0]}" if bad else ""),
    )


def test_05_beta_generator_moments():
    rng = Rng(505)
    gen = ltg.FactorGenerator("beta", a=0.5, b=0.5)
    n = 1_000_000
    draws = np.fromiter(
        (ltg.sample_factor(rng, gen) for _ in range(n)), dtype=float, count=n
    )
    mean, var = float(draws.mean()), float(draws.var())
    moments_ok = abs(mean - 0.5) < 0.003 and abs(var - 0.125) < 0.002

    # constant-generator mode: exactly one rectangle at a fixed factor
    img = discrepancy.synthetic_images(1, 3, 24, 12, 77)[0]
    cfg = ltg.LtgConfig(
        p=1.0, max_iters=1, generator=ltg.FactorGenerator("constant", c=0.5)
    )
    out, memory, trace = ltg.generate(img, cfg, Rng(7, 0))
    rect, alphas = trace.steps[0]
    inside = np.zeros(memory.shape, dtype=bool)
    inside[:, rect.y:rect.y + rect.h, rect.x:rect.x + rect.w] = True
    exact_ok = (
        trace.iterations == 1
        and np.all(memory[~inside] == 1.0)
        and all(
            alphas[c]
            == 0.5 / img.pixels[c, rect.y:rect.y + rect.h, rect.x:rect.x + rect.w].max()
            for c in range(3)
        )
    )
    _verdict(
        "factor generator moments",
        moments_ok and exact_ok,
        f"mean {mean:.4f}, var {var:.4f}",
    )


def _random_batch(rng: np.random.Generator, ids=3, per_mod=4, dim=8):
    feats, labels, mods = [], [], []
    for y in range(ids):
        anchor = rng.normal(size=dim)
        for m in (V, N):
            for _ in range(per_mod):
                feats.append(anchor + 0.4 * rng.normal(size=dim))
                labels.append(y)
                mods.append(m)
    return losses.ModalityBatch(
        np.array(feats), np.array(labels), np.array(mods, dtype=object)
    )


def _mining_gap(batch) -> float:
    """Smallest margin by which the hardest positive/negative choice wins.

    Finite differences are only valid where the mined indices are locally
    stable, so tie-adjacent batches are resampled instead of checked.
    """
    f, ids = batch.features, batch.ids
    dist = np.linalg.norm(f[:, None, :] - f[None, :, :], axis=2)
    gap = np.inf
    for a in range(batch.n):
        pos = np.sort(dist[a][ids == ids[a]])
        neg = np.sort(dist[a][ids != ids[a]])
        if len(pos) >= 2:
            gap = min(gap, pos[-1] - pos[-2])
        if len(neg) >= 2:
            gap = min(gap, neg[1] - neg[0])
        gap = min(gap, pos[-1])  # zero-distance hard positive is a kink
    return float(gap)


def test_06_gradient_suite():
    rng = np.random.default_rng(606)
    worst = {}
    fns = {
        "center": losses.center_loss,
        "cross_center": losses.cross_center_loss,
        "hetero_center": losses.hetero_center_loss,
        "triplet": lambda b: losses.triplet_batch_hard(b, margin=10.0),
    }
    for name, fn in fns.items():
        worst[name] = 0.0
        for _ in range(100):
            batch = _random_batch(rng)
            if name == "triplet":
                while _mining_gap(batch) < 1e-3:
                    batch = _random_batch(rng)
            res = fn(batch)
            num = losses.fd_gradient(
                lambda f: fn(batch.with_features(f)).value, batch.features
            )
            denom = max(np.abs(num).max(), 1e-12)
            worst[name] = max(worst[name], float(np.abs(res.gradient - num).max() / denom))
    worst["softmax_ce"] = 0.0
    for _ in range(100):
        logits = rng.normal(size=(10, 4))
        labels = rng.integers(0, 4, size=10)
        res = losses.softmax_ce(logits, labels)
        num = losses.fd_gradient(lambda z: losses.softmax_ce(z, labels).value, logits)
        worst["softmax_ce"] = max(
            worst["softmax_ce"], float(np.abs(res.gradient - num).max() / np.abs(num).max())
        )
    bad = {k: v for k, v in worst.items() if v >= 1e-6}
    _verdict(
        "analytic-gradient suite",
        not bad,
        "max rel err " + ", ".join(f"{k}={v:.1e}" for k, v in worst.items()),
    )


def test_07_hand_computed_loss_values():
    def batch(feats, ids, mods):
        return losses.ModalityBatch(
            np.array(feats, dtype=float), np.array(ids), np.array(mods, dtype=object)
        )

    square = batch([[0, 0], [2, 0], [0, 2], [2, 2]], [0] * 4, [V, V, N, N])
    checks = {
        "cross-center=10": abs(losses.cross_center_loss(square).value - 10.0),
        "center=1": abs(
            losses.center_loss(batch([[0, 0], [2, 0]], [0, 0], [V, V])).value - 1.0
        ),
        "hetero-center=1": abs(losses.hetero_center_loss(square).value - 1.0),
        "triplet=3.5": abs(
            losses.triplet_batch_hard(
                batch([[0.0], [1.0], [10.0], [11.0]], [0, 0, 1, 1], [V, N, V, N]),
                margin=12.0,
            ).value
            - 3.5
        ),
    }
    bad = {k: v for k, v in checks.items() if v > 1e-12}
    _verdict("hand-computed loss values", not bad, f"max abs err {max(checks.values()):.1e}")


def test_08_descent_dynamics():
    rng = np.random.default_rng(808)
    ok_all, detail = True, []
    for trial in range(3):
        batch = _random_batch(rng)
        shift = np.zeros(batch.dim)
        shift[0] = 1.5
        feats = batch.features + np.where(batch.is_vis()[:, None], shift, -shift)
        batch = batch.with_features(feats)
        traj_cc, _, _ = losses.descent_smoke(batch, 200, 0.1, losses.cross_center_loss)
        traj_c, _, _ = losses.descent_smoke(batch, 200, 0.1, losses.center_loss)
        shrunk = traj_cc[-1, 0] < 0.01 * traj_cc[0, 0]
        monotone = np.all(np.diff(traj_cc[10:, 1]) <= 1e-12)
        tighter = traj_cc[-1, 1] <= traj_c[-1, 1]
        ok_all &= bool(shrunk and monotone and tighter)
        detail.append(f"final/initial {traj_cc[-1, 0] / traj_cc[0, 0]:.1e}")
    _verdict("descent dynamics", ok_all, "; ".join(detail))


def test_09_attention_and_parts():
    f = np.random.default_rng(909).normal(size=(16, 24, 8))
    t = attention.ModalityTransform.seeded(16, 16, seed=9)
    proj = attention.Projection.seeded(16, 8, seed=9)
    amap = attention.mam_attention(f, t, V)
    in_range = bool(np.all(amap > 0.0) and np.all(amap < 1.0))
    parts, global_vec = attention.forward_pipeline(f, t, V, 12, proj)
    attended = attention.apply_attention(f, amap)
    pooled = attention.pcb_split_gap(attended, 12)
    identity = float(np.abs(pooled.mean(axis=0) - attended.mean(axis=(1, 2))).max())
    manual = np.stack([attention.reduce_fc(v, proj) for v in pooled])
    compose = float(np.abs(parts.reduced - manual).max())
    shapes = parts.reduced.shape == (12, 8) and global_vec.shape == (16,)
    ok = in_range and identity < 1e-12 and compose < 1e-12 and shapes
    _verdict(
        "attention and part pipeline",
        ok,
        f"gap identity {identity:.1e}, composition {compose:.1e}",
    )


def test_10_retrieval_metrics_vs_bruteforce():
    rng = np.random.default_rng(1010)
    exact = 0
    for _ in range(200):
        n_ids = int(rng.integers(2, 6))
        query, gallery = [], []
        for y in range(n_ids):
            anchor = rng.normal(size=4)
            for _ in range(int(rng.integers(1, 5))):
                query.append(
                    retrieval.LabeledFeature(anchor + rng.normal(size=4), y, V)
                )
            for _ in range(int(rng.integers(1, 9))):
                gallery.append(
                    retrieval.LabeledFeature(anchor + rng.normal(size=4), y, N)
                )
        rset = retrieval.RetrievalSet(query, gallery)
        max_rank = len(gallery)
        curve = retrieval.cmc(rset, max_rank)
        got_map = retrieval.mean_ap(rset)

        hits = np.zeros(max_rank)
        aps = []
        for q in query:
            dists = [float(np.linalg.norm(q.feature - g.feature)) for g in gallery]
            order = sorted(range(len(dists)), key=lambda j: (dists[j], j))
            matches = [gallery[j].identity == q.identity for j in order]
            hits[matches.index(True):] += 1
            precs, seen = [], 0
            for pos, m in enumerate(matches):
                if m:
                    seen += 1
                    precs.append(seen / (pos + 1))
            aps.append(sum(precs) / len(precs))
        cmc_exact = np.array_equal(curve.accuracy, hits / len(query))
        map_exact = abs(got_map - np.mean(aps)) < 1e-12
        exact += cmc_exact and map_exact

    hand = retrieval.RetrievalSet(
        [retrieval.LabeledFeature(np.array([0.0]), 0, V)],
        [
            retrieval.LabeledFeature(np.array([1.0]), 0, N),
            retrieval.LabeledFeature(np.array([2.0]), 1, N),
            retrieval.LabeledFeature(np.array([3.0]), 0, N),
        ],
    )
    hand_ok = retrieval.mean_ap(hand) == pytest.approx(5.0 / 6.0, rel=1e-12)
    _verdict("retrieval metrics vs brute force", exact == 200 and hand_ok, f"{exact}/200 exact")


def test_11_cli_reproducibility(tmp_path):
    from xspect.core import save_image

    img_dir = tmp_path / "imgs"
    img_dir.mkdir()
    for i, img in enumerate(discrepancy.synthetic_images(3, 3, 16, 8, 1234)):
        save_image(img, img_dir / f"img{i}.png")

    runs = {
        "synth": lambda out: cli_main(
            ["synth", "--out", str(out), "--seed", "3", "--height", "16", "--width", "12"]
        ),
        "ltg": lambda out: cli_main(
            ["ltg", "--in", str(img_dir), "--out", str(out), "--seed", "3"]
        ),
        "discrepancy": lambda out: cli_main(
            ["discrepancy", "--synthetic", "6", "--seed", "3", "--report", str(out / "r.json")]
        ),
        "loss-check": lambda out: cli_main(
            ["loss-check", "--seed", "3", "--trials", "2", "--out", str(out / "r.json")]
        ),
        "descent": lambda out: cli_main(
            ["descent", "--seed", "3", "--steps", "20", "--out", str(out / "r.csv")]
        ),
        "attn": lambda out: cli_main(
            ["attn", "--demo", "--seed", "3", "--channels", "4", "--height", "6",
             "--width", "3", "--out", str(out / "r.csv")]
        ),
    }
    mismatched = []
    for name, fn in runs.items():
        blobs = []
        for tag in ("a", "b"):
            out = tmp_path / f"{name}-{tag}"
            out.mkdir()
            assert fn(out) == 0
            blobs.append(
                {p.name: p.read_bytes() for p in sorted(out.iterdir()) if p.is_file()}
            )
        if blobs[0] != blobs[1]:
            mismatched.append(name)
    _verdict(
        "CLI reproducibility",
        not mismatched,
        "all randomized subcommands byte-identical" if not mismatched else f"mismatch: {mismatched}",
    )
