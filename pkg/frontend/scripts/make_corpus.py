#!/usr/bin/env python3
"""Generate the cross-language parity corpus consumed by the vitest suite.

Uses only the public Python API. JSON float serialization is shortest
round-trip on both sides, so expected values survive the trip exactly.

Usage: python3 scripts/make_corpus.py  (from the frontend/ directory)
"""

import json
from pathlib import Path

import numpy as np

from xspect.core import Image, Modality, Rng
from xspect.ltg import FactorGenerator, LtgConfig, generate
from xspect.losses import (
    ModalityBatch,
    center_loss,
    cross_center_loss,
    hetero_center_loss,
    softmax_ce,
    triplet_batch_hard,
)

OUT = Path(__file__).resolve().parent.parent / "tests" / "corpus.json"


def rng_cases():
    cases = []
    for seed, stream in ((0, 0), (1, 0), (42, 7), (2**63, 12345), (99, 99)):
        r = Rng(seed, stream)
        u64 = [str(r.next_u64()) for _ in range(4)]
        u01 = [r.u01() for _ in range(4)]
        normals = [r.normal() for _ in range(4)]
        gammas = [r.gamma(0.5), r.gamma(2.5)]
        betas = [r.beta(0.5, 0.5), r.beta(2.0, 5.0)]
        cases.append(
            {
                "seed": seed,
                "stream": stream,
                "u64": u64,
                "u01": u01,
                "normal": normals,
                "gamma": gammas,
                "beta": betas,
            }
        )
    return cases


def random_grid_image(channels, height, width, seed):
    r = Rng(seed, 0xC0FFEE)
    px = np.empty((channels, height, width))
    for i in range(px.size):
        px.flat[i] = r.randint_below(4096) / 4096
    return Image(px)


def config_to_json(cfg: LtgConfig):
    return {
        "p": cfg.p,
        "sMin": cfg.s_min,
        "sMax": cfg.s_max,
        "rMin": cfg.r_min,
        "rMax": cfg.r_max,
        "tMin": cfg.t_min,
        "maxIters": cfg.max_iters,
        "generator": {
            "kind": cfg.generator.kind,
            "a": cfg.generator.a,
            "b": cfg.generator.b,
            "c": cfg.generator.c,
        },
    }


def ltg_cases(count=100):
    configs = [
        LtgConfig(),
        LtgConfig(p=1.0),
        LtgConfig(p=1.0, generator=FactorGenerator("uniform")),
        LtgConfig(p=1.0, generator=FactorGenerator("constant", c=0.5), max_iters=1),
        LtgConfig(p=1.0, max_iters=5),
        LtgConfig(p=0.0),
        LtgConfig(p=1.0, s_min=0.1, s_max=0.6, r_min=0.5, r_max=2.0),
        LtgConfig(p=1.0, t_min=1e-3),
    ]
    shapes = [(3, 16, 8), (1, 12, 12), (3, 24, 10), (2, 9, 7)]
    cases = []
    for k in range(count):
        cfg = configs[k % len(configs)]
        c, h, w = shapes[k % len(shapes)]
        img = random_grid_image(c, h, w, seed=1000 + k)
        out, memory, trace = generate(img, cfg, Rng.for_image(5000 + k, 0))
        cases.append(
            {
                "seed": 5000 + k,
                "shape": [c, h, w],
                "pixels": list(img.pixels.ravel()),
                "config": config_to_json(cfg),
                "expected": {
                    "applied": trace.applied,
                    "termination": trace.termination,
                    "steps": [
                        {
                            "rect": {"x": r.x, "y": r.y, "w": r.w, "h": r.h},
                            "alphas": list(a),
                        }
                        for r, a in trace.steps
                    ],
                    "output": list(out.pixels.ravel()),
                    "memory": list(memory.ravel()),
                },
            }
        )
    return cases


def random_batch(rng: Rng, ids, per_mod, dim):
    feats, labels, mods = [], [], []
    for y in range(ids):
        anchor = [rng.u01() * 4 - 2 for _ in range(dim)]
        for m in (Modality.VIS, Modality.NIR):
            for _ in range(per_mod):
                feats.append([a + 0.5 * (rng.u01() * 2 - 1) for a in anchor])
                labels.append(y)
                mods.append(m.value)
    return feats, labels, mods


def loss_cases(per_loss=20):
    cases = []
    rng = Rng(77, 0x105)
    for name in ("center", "cross_center", "hetero_center", "triplet"):
        for k in range(per_loss):
            ids = 2 + k % 3
            per_mod = 2 + k % 2
            dim = 3 + k % 4
            feats, labels, mods = random_batch(rng, ids, per_mod, dim)
            batch = ModalityBatch(
                np.array(feats), np.array(labels), np.array(mods, dtype=object)
            )
            params = {}
            if name == "center":
                res = center_loss(batch)
            elif name == "cross_center":
                res = cross_center_loss(batch)
            elif name == "hetero_center":
                res = hetero_center_loss(batch)
            else:
                margin = 0.3 + 0.5 * (k % 4)
                params = {"margin": margin}
                res = triplet_batch_hard(batch, margin)
            cases.append(
                {
                    "name": name,
                    "features": feats,
                    "ids": labels,
                    "modalities": mods,
                    "params": params,
                    "expected": {
                        "value": res.value,
                        "gradient": [list(row) for row in res.gradient],
                    },
                }
            )
    for k in range(per_loss):
        n = 4 + k % 5
        classes = 3 + k % 3
        logits = [[rng.u01() * 6 - 3 for _ in range(classes)] for _ in range(n)]
        labels = [rng.randint_below(classes) for _ in range(n)]
        res = softmax_ce(np.array(logits), np.array(labels))
        cases.append(
            {
                "name": "softmax_ce",
                "features": logits,
                "ids": labels,
                "modalities": [],
                "params": {},
                "expected": {
                    "value": res.value,
                    "gradient": [list(row) for row in res.gradient],
                },
            }
        )
    return cases


def main():
    corpus = {
        "rng": rng_cases(),
        "ltg": ltg_cases(),
        "loss": loss_cases(),
    }
    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text(json.dumps(corpus) + "\n", encoding="utf-8")
    print(f"wrote {OUT} ({len(corpus['ltg'])} ltg cases, {len(corpus['loss'])} loss cases)")


if __name__ == "__main__":
    main()
