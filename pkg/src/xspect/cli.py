"""Command-line front end: synth, ratio-map, ltg, discrepancy, loss-check,
descent, attn, eval.

Every randomized subcommand takes --seed and produces byte-identical reports
for equal seeds.  A flat key=value config file can pre-load any flag; explicit
flags win.  Exit codes: 0 success, 1 usage error, 2 data/protocol error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .core import (
    FormatError,
    Image,
    MissingModalityError,
    Modality,
    ProtocolError,
    Rng,
    load_features,
    load_image,
    save_image,
)
from . import attention, discrepancy, losses, ltg, reflection, retrieval

USAGE_ERROR = 1
DATA_ERROR = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _read_config_file(path: str) -> dict[str, str]:
    p = Path(path)
    if not p.exists():
        raise FormatError(f"no such config file: {p}")
    values = {}
    for line in p.read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise FormatError(f"bad config line (expected key=value): {line!r}")
        key, _, val = line.partition("=")
        values[key.strip()] = val.strip()
    return values


def _merge_config(args: argparse.Namespace, defaults: dict):
    """Resolve each option as: explicit flag > config file value > default."""
    file_vals = _read_config_file(args.config) if getattr(args, "config", None) else {}
    effective = {}
    for key, default in defaults.items():
        flag_val = getattr(args, key, None)
        if flag_val is not None:
            effective[key] = flag_val
        elif key in file_vals:
            raw = file_vals[key]
            if isinstance(default, bool):
                effective[key] = raw.lower() in ("1", "true", "yes", "on")
            elif default is not None:
                effective[key] = type(default)(raw)
            else:
                effective[key] = raw
        else:
            effective[key] = default
    return argparse.Namespace(**effective)


_OUTPUT_KEYS = frozenset(
    {"out", "report", "trace", "pca", "out_csv", "out_json", "config"}
)


def _report(command: str, config: dict, payload: dict) -> str:
    # destinations are excluded so equal-seed runs stay byte-identical
    # regardless of where the report lands
    config = {k: v for k, v in config.items() if k not in _OUTPUT_KEYS}
    doc = {
        "tool": "xspect",
        "version": __version__,
        "command": command,
        "config": config,
    }
    doc.update(payload)
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def _write(path: str | None, text: str):
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _load_dir(path: str) -> tuple[list[str], list[Image]]:
    d = Path(path)
    if not d.is_dir():
        raise FormatError(f"no such input directory: {d}")
    names = sorted(p.name for p in d.glob("*.png"))
    if not names:
        raise FormatError(f"no PNG images in {d}")
    return names, [load_image(d / n) for n in names]


def cmd_synth(args) -> int:
    cfg = _merge_config(args, dict(
        materials=3, height=32, width=48, seed=0, shaded=False, out=None, config=None,
    ))
    if cfg.out is None:
        raise UsageError("synth requires --out DIR")
    scene = reflection.demo_scene(
        cfg.materials, cfg.height, cfg.width, cfg.seed, shaded=cfg.shaded
    )
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    for j in reflection.SPECTRA:
        save_image(reflection.render(scene, j), out / f"{j}.png")
    ratios = {
        f"{a}/{b}": {
            str(m): reflection.analytic_ratio(scene, a, b, m)
            for m in scene.reflectance
        }
        for a, b in (("N", "G"), ("N", "R"), ("N", "B"))
    }
    _write(
        str(out / "scene.json"),
        _report("synth", vars(cfg), {"analytic_ratios": ratios}),
    )
    return 0


def cmd_ratio_map(args) -> int:
    cfg = _merge_config(args, dict(
        a=None, b=None, eps=reflection.DEFAULT_EPS, materials=None,
        out_csv=None, out_json=None, config=None,
    ))
    if cfg.a is None or cfg.b is None:
        raise UsageError("ratio-map requires --a and --b images")
    img_a = load_image(cfg.a)
    img_b = load_image(cfg.b)
    rmap = reflection.band_ratio(img_a, img_b, cfg.eps)
    if cfg.out_csv:
        lines = ["x,y,ratio,mask"]
        h, w = rmap.values.shape
        for y in range(h):
            for x in range(w):
                lines.append(
                    f"{x},{y},{float(rmap.values[y, x])!r},{int(rmap.mask[y, x])}"
                )
        _write(cfg.out_csv, "\n".join(lines) + "\n")
    masked = rmap.values[rmap.mask]
    stats: dict = {
        "masked_pixels": int(rmap.mask.sum()),
        "mean": float(masked.mean()) if masked.size else None,
        "cv": float(masked.std() / abs(masked.mean()))
        if masked.size >= 2 and masked.mean() != 0
        else None,
    }
    if cfg.materials:
        mat = np.floor(load_image(cfg.materials).pixels[0] * 255.0 + 0.5).astype(int)
        stats["per_material"] = {
            str(m): v for m, v in reflection.ratio_constancy_stats(rmap, mat).items()
        }
    _write(cfg.out_json, _report("ratio-map", {k: v for k, v in vars(cfg).items()}, {"stats": stats}))
    return 0


def cmd_ltg(args) -> int:
    cfg = _merge_config(args, dict(
        **{"in": None}, out=None, p=0.5, s_min=0.02, s_max=0.4, r_min=0.3,
        r_max=1.0 / 0.3, t_min=1e-6, max_iters=200, gen="beta:0.5,0.5",
        seed=0, trace=None, config=None,
    ))
    in_dir = getattr(cfg, "in")
    if in_dir is None or cfg.out is None:
        raise UsageError("ltg requires --in DIR and --out DIR")
    names, imgs = _load_dir(in_dir)
    config = ltg.LtgConfig(
        p=cfg.p, s_min=cfg.s_min, s_max=cfg.s_max, r_min=cfg.r_min,
        r_max=cfg.r_max, t_min=cfg.t_min, max_iters=cfg.max_iters,
        generator=ltg.FactorGenerator.parse(cfg.gen),
    )
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    results = ltg.generate_batch(imgs, config, cfg.seed)
    trace_lines = []
    summary = []
    for name, (img, memory, trace) in zip(names, results):
        save_image(img, out / name)
        summary.append({
            "image": name,
            "applied": trace.applied,
            "termination": trace.termination,
            "iterations": trace.iterations,
            "min_memory": float(memory.min()),
        })
        trace_lines.append(json.dumps({
            "image": name,
            "applied": trace.applied,
            "termination": trace.termination,
            "rects": [
                {"x": r.x, "y": r.y, "w": r.w, "h": r.h, "alphas": list(a)}
                for r, a in trace.steps
            ],
        }, sort_keys=True))
    if cfg.trace:
        _write(cfg.trace, "\n".join(trace_lines) + "\n")
    _write(
        str(out / "ltg_report.json"),
        _report("ltg", vars(cfg), {"images": summary}),
    )
    return 0


def cmd_discrepancy(args) -> int:
    cfg = _merge_config(args, dict(
        **{"in": None}, mode="per-part", parts=6, seed=0, synthetic=0,
        report=None, pca=None, config=None,
    ))
    in_dir = getattr(cfg, "in")
    if cfg.mode not in ("per-part", "uniform"):
        raise UsageError(f"unknown mode {cfg.mode!r}")
    if in_dir:
        _, imgs = _load_dir(in_dir)
    elif cfg.synthetic:
        imgs = discrepancy.synthetic_images(cfg.synthetic, 3, 48, 24, cfg.seed)
    else:
        raise UsageError("discrepancy requires --in DIR or --synthetic N")
    rng = Rng(cfg.seed, 0xD15C)
    rep = discrepancy.run_experiment(
        imgs, cfg.mode, cfg.parts, rng, with_pca=cfg.pca is not None
    )
    if cfg.pca is not None:
        half = len(imgs)
        lines = ["set,index,pc1,pc2"]
        for i, (p1, p2) in enumerate(rep.pca):
            which = "original" if i < half else "transformed"
            lines.append(f"{which},{i % half},{float(p1)!r},{float(p2)!r}")
        _write(cfg.pca, "\n".join(lines) + "\n")
    _write(cfg.report, _report("discrepancy", vars(cfg), {
        "projection": "pca",
        "centroid_distance": rep.centroid_distance,
        "paired_mean": rep.paired_mean,
        "paired_max": rep.paired_max,
        "mean_only_centroid_distance": rep.mean_only_centroid_distance,
        "mean_only_paired_mean": rep.mean_only_paired_mean,
    }))
    return 0


def _random_batch(rng: Rng, ids: int, per_mod: int, dim: int, spread: float = 1.0):
    feats, labels, mods = [], [], []
    for y in range(ids):
        anchor = [spread * (rng.u01() * 2 - 1) for _ in range(dim)]
        for m in (Modality.VIS, Modality.NIR):
            for _ in range(per_mod):
                feats.append([a + 0.3 * (rng.u01() * 2 - 1) for a in anchor])
                labels.append(y)
                mods.append(m)
    return losses.ModalityBatch(np.array(feats), np.array(labels), np.array(mods, dtype=object))


def cmd_loss_check(args) -> int:
    cfg = _merge_config(args, dict(
        seed=0, trials=20, ids=3, per_mod=4, dim=8, out=None, config=None,
    ))
    rng = Rng(cfg.seed, 0x1055)
    checks = {name: 0.0 for name in ("center", "cross_center", "hetero_center", "softmax_ce", "triplet")}
    for _ in range(cfg.trials):
        batch = _random_batch(rng, cfg.ids, cfg.per_mod, cfg.dim)
        for name, fn in (
            ("center", losses.center_loss),
            ("cross_center", losses.cross_center_loss),
            ("hetero_center", losses.hetero_center_loss),
            ("triplet", lambda b: losses.triplet_batch_hard(b, 10.0)),
        ):
            res = fn(batch)
            num = losses.fd_gradient(lambda f: fn(batch.with_features(f)).value, batch.features)
            denom = max(np.abs(num).max(), 1e-12)
            checks[name] = max(checks[name], float(np.abs(res.gradient - num).max() / denom))
        logits = np.array([[rng.u01() * 4 - 2 for _ in range(cfg.ids)] for _ in range(batch.n)])
        res = losses.softmax_ce(logits, batch.ids)
        num = losses.fd_gradient(lambda z: losses.softmax_ce(z, batch.ids).value, logits)
        denom = max(np.abs(num).max(), 1e-12)
        checks["softmax_ce"] = max(checks["softmax_ce"], float(np.abs(res.gradient - num).max() / denom))
    payload = {
        "max_relative_error": checks,
        "all_below_1e-6": bool(all(v < 1e-6 for v in checks.values())),
    }
    _write(cfg.out, _report("loss-check", vars(cfg), payload))
    return 0


def cmd_descent(args) -> int:
    cfg = _merge_config(args, dict(
        seed=0, ids=3, per_mod=4, dim=8, steps=200, lr=0.1,
        loss="cross_center", separation=2.0, out=None, config=None,
    ))
    loss_fn = {
        "cross_center": losses.cross_center_loss,
        "center": losses.center_loss,
        "hetero_center": losses.hetero_center_loss,
    }.get(cfg.loss)
    if loss_fn is None:
        raise UsageError(f"unknown loss {cfg.loss!r}")
    rng = Rng(cfg.seed, 0xDE5C)
    batch = _random_batch(rng, cfg.ids, cfg.per_mod, cfg.dim)
    # push the two modalities of every identity apart along one axis
    shift = np.zeros(cfg.dim)
    shift[0] = cfg.separation / 2.0
    feats = batch.features + np.where(batch.is_vis()[:, None], shift, -shift)
    batch = batch.with_features(feats)
    traj, _, diverged = losses.descent_smoke(batch, cfg.steps, cfg.lr, loss_fn)
    lines = ["step,loss,mean_center_gap"]
    for i, (val, gap) in enumerate(traj):
        lines.append(f"{i},{float(val)!r},{float(gap)!r}")
    if diverged:
        lines.append("# diverged: loss increased for 10 consecutive steps")
    _write(cfg.out, "\n".join(lines) + "\n")
    return 0


def cmd_attn(args) -> int:
    cfg = _merge_config(args, dict(
        demo=False, seed=0, channels=16, height=24, width=8, out=None, config=None,
    ))
    if not cfg.demo:
        raise UsageError("attn currently only supports --demo")
    rng = Rng(cfg.seed, 0xA77)
    fmap = np.array([
        [[rng.u01() * 2 - 1 for _ in range(cfg.width)] for _ in range(cfg.height)]
        for _ in range(cfg.channels)
    ])
    transform = attention.ModalityTransform.seeded(cfg.channels, cfg.channels, cfg.seed)
    amap = attention.mam_attention(fmap, transform, Modality.VIS)
    lines = ["x,y,value"]
    for y in range(cfg.height):
        for x in range(cfg.width):
            lines.append(f"{x},{y},{float(amap[y, x])!r}")
    _write(cfg.out, "\n".join(lines) + "\n")
    return 0


def cmd_eval(args) -> int:
    cfg = _merge_config(args, dict(
        query=None, gallery=None, ranks="1,10,20", out=None, config=None,
    ))
    if cfg.query is None or cfg.gallery is None:
        raise UsageError("eval requires --query and --gallery feature CSVs")
    rset = retrieval.RetrievalSet(load_features(cfg.query), load_features(cfg.gallery))
    ranks = sorted({int(r) for r in str(cfg.ranks).split(",")})
    curve = retrieval.cmc(rset, max_rank=max(ranks))
    payload = {
        "ap_convention": "non-interpolated retrieval AP",
        "cmc": {f"rank-{r}": curve.at(r) for r in ranks},
        "mAP": retrieval.mean_ap(rset),
        "queries": len(rset.query),
        "gallery": len(rset.gallery),
    }
    _write(cfg.out, _report("eval", vars(cfg), payload))
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="xspect", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, flags):
        p = sub.add_parser(name)
        p.add_argument("--config", default=None)
        for flag, kind in flags.items():
            if kind is bool:
                p.add_argument(f"--{flag.replace('_', '-')}", action="store_true", default=None, dest=flag)
            else:
                p.add_argument(f"--{flag.replace('_', '-')}", type=kind, default=None, dest=flag)
        p.set_defaults(fn=fn)

    add("synth", cmd_synth, dict(materials=int, height=int, width=int, seed=int, shaded=bool, out=str))
    add("ratio-map", cmd_ratio_map, dict(a=str, b=str, eps=float, materials=str, out_csv=str, out_json=str))
    add("ltg", cmd_ltg, {"in": str, "out": str, "p": float, "s_min": float,
                         "s_max": float, "r_min": float, "r_max": float,
                         "t_min": float, "max_iters": int, "gen": str,
                         "seed": int, "trace": str})
    add("discrepancy", cmd_discrepancy, {"in": str, "mode": str, "parts": int,
                                         "seed": int, "synthetic": int,
                                         "report": str, "pca": str})
    add("loss-check", cmd_loss_check, dict(seed=int, trials=int, ids=int, per_mod=int, dim=int, out=str))
    add("descent", cmd_descent, dict(seed=int, ids=int, per_mod=int, dim=int,
                                     steps=int, lr=float, loss=str,
                                     separation=float, out=str))
    add("attn", cmd_attn, dict(demo=bool, seed=int, channels=int, height=int, width=int, out=str))
    add("eval", cmd_eval, dict(query=str, gallery=str, ranks=str, out=str))
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except (FormatError, ProtocolError, MissingModalityError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_ERROR
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_ERROR


if __name__ == "__main__":
    sys.exit(main())
