"""Command line entry points: train, eval, editing commands, serve."""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np
import torch

from stylemap import editing, metrics
from stylemap.config import Config, load_config
from stylemap.data import load_image, load_mask, load_split, save_image, toy_split


def _load_model(path):
    return editing.EditModel.from_checkpoint(path)


def cmd_train(args):
    cfg = load_config(args.config) if args.config else Config()
    from stylemap.training import train_loop

    def log(step, bundle):
        vals = " ".join(f"{k}={v:.4f}" for k, v in bundle.values().items() if v)
        print(f"step {step}: {vals}", flush=True)

    state, _ = train_loop(cfg, args.out, resume=args.resume, log_fn=log)
    print(f"done: {state.step} steps, checkpoint at {os.path.join(args.out, 'last.ckpt')}")


def cmd_eval(args):
    from stylemap.checkpoint import load_meta
    from stylemap.features import RandomConvFeatures

    model = _load_model(args.ckpt)
    cfg = model.cfg
    if args.dataset:
        cfg.data.source = "dir"
        cfg.data.path = args.dataset
    size = cfg.network.image_size
    extractor = RandomConvFeatures(seed=cfg.train.perceptual_seed)
    train_set = load_split(cfg.data, "train", size)
    test_set = load_split(cfg.data, "test", size)
    want = [m.strip() for m in args.metrics.split(",") if m.strip()]
    report = {
        "checkpoint": os.path.abspath(args.ckpt),
        "step": load_meta(args.ckpt)["step"],
        "config_digest": cfg.digest(),
        "seed": args.seed,
        "metrics": {},
    }
    train_feats = None
    if "fid" in want or "fidlerp" in want:
        n = min(len(train_set), args.feature_count)
        train_feats = metrics.compute_features(extractor, train_set.images[:n])
    for name in want:
        if name == "fid":
            gen = torch.Generator().manual_seed(args.seed)
            z = torch.randn(train_feats.features.shape[0], cfg.network.latent_dim, generator=gen)
            fake = torch.cat([model.sample(z[i : i + 64]) for i in range(0, z.shape[0], 64)])
            value = metrics.frechet_distance(
                metrics.compute_features(extractor, fake), train_feats
            )
        elif name == "fidlerp":
            value = metrics.fid_lerp(
                model, test_set.images, train_feats, extractor,
                num_samples=train_feats.features.shape[0], seed=args.seed,
            )
        elif name == "recon":
            value = metrics.reconstruction_metrics(model, test_set.images, extractor)
        elif name == "editmse":
            value = metrics.edit_mse_metrics(model, test_set.images)
        else:
            print(f"unknown metric {name!r}", file=sys.stderr)
            return 2
        report["metrics"][name] = value
        print(f"{name}: {value}")
    with open(args.report, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
    print(f"report written to {args.report}")


def cmd_generate(args):
    model = _load_model(args.ckpt)
    gen = torch.Generator().manual_seed(args.seed)
    z = torch.randn(args.count, model.net.latent_dim, generator=gen)
    os.makedirs(args.out, exist_ok=True)
    imgs = model.sample(z, psi=args.psi)
    for i in range(args.count):
        save_image(os.path.join(args.out, f"sample_{i:04d}.png"), imgs[i])
    print(f"wrote {args.count} samples to {args.out}")


def cmd_edit(args):
    model = _load_model(args.ckpt)
    size = model.net.image_size
    x = load_image(args.original, size)[None]
    x_ref = load_image(args.reference, size)[None]
    mask = load_mask(args.mask, size)
    out = model.local_edit(x, x_ref, mask, space=args.space)
    save_image(args.out, out[0])
    print(f"edited image written to {args.out}")


def cmd_transplant(args):
    model = _load_model(args.ckpt)
    size = model.net.image_size
    w = model.encode(load_image(args.original, size)[None])
    w_ref = model.encode(load_image(args.reference, size)[None])
    src, dst = [], []
    for spec_str in args.box:
        try:
            s, d = spec_str.split(":")
            src.append(tuple(int(v) for v in s.split(",")))
            dst.append(tuple(int(v) for v in d.split(",")))
            if len(src[-1]) != 4 or len(dst[-1]) != 4:
                raise ValueError
        except ValueError:
            print(f"bad box {spec_str!r}; expected top,left,h,w:top,left,h,w", file=sys.stderr)
            return 2
    out = model.decode(editing.transplant(w, w_ref, src, dst))
    save_image(args.out, out[0])
    print(f"transplant written to {args.out}")


def cmd_mix(args):
    model = _load_model(args.ckpt)
    size = model.net.image_size
    pyr = model.resize(model.encode(load_image(args.original, size)[None]))
    pyr_ref = model.resize(model.encode(load_image(args.reference, size)[None]))
    if args.structure_only:
        levels = editing.structure_only_levels(len(pyr))
    else:
        levels = {int(v) for v in args.levels.split(",")} if args.levels else set(range(len(pyr)))
    mask = load_mask(args.mask, size) if args.mask else None
    out = model.decode_pyramid(editing.style_mix(pyr, pyr_ref, levels, mask))
    save_image(args.out, out[0])
    print(f"style mix written to {args.out}")


def cmd_interp(args):
    model = _load_model(args.ckpt)
    size = model.net.image_size
    w_a = model.encode(load_image(args.a, size)[None])
    w_b = model.encode(load_image(args.b, size)[None])
    out = model.decode(editing.interpolate(w_a, w_b, args.t))
    save_image(args.out, out[0])
    print(f"interpolation written to {args.out}")


def cmd_semantic(args):
    model = _load_model(args.ckpt)
    size = model.net.image_size
    w = model.encode(load_image(args.image, size)[None])
    direction = torch.from_numpy(np.load(args.direction).astype("float32"))
    region = None
    if args.region:
        region = editing.shrink_mask(load_mask(args.region, size), model.net.stylemap_hw)
    out = model.decode(model.scaled_semantic_edit(w, direction, args.strength, region))
    save_image(args.out, out[0])
    print(f"semantic edit written to {args.out}")


def cmd_fit_direction(args):
    model = _load_model(args.ckpt)
    size = model.net.image_size

    def encode_dir(folder):
        names = sorted(n for n in os.listdir(folder) if n.endswith(".png"))
        imgs = torch.stack([load_image(os.path.join(folder, n), size) for n in names])
        return model.encode(imgs)

    pos = encode_dir(args.positives)
    neg = encode_dir(args.negatives)
    maps = torch.cat([pos, neg])
    labels = [1] * pos.shape[0] + [0] * neg.shape[0]
    direction = editing.fit_semantic_direction(maps, labels)
    np.save(args.out, direction.numpy())
    print(f"direction written to {args.out}")


def cmd_toy_export(args):
    ds = toy_split(args.split, args.count, args.seed, args.size)
    os.makedirs(args.out, exist_ok=True)
    for i in range(len(ds)):
        save_image(os.path.join(args.out, f"{args.split}_{i:05d}.png"), ds[i])
    print(f"wrote {len(ds)} toy images to {args.out}")


def cmd_serve(args):
    import uvicorn

    from stylemap.checkpoint import load_meta
    from stylemap.service import create_app, load_directions

    model = _load_model(args.ckpt)
    directions = load_directions(args.directions) if args.directions else {}
    info = {"step": load_meta(args.ckpt)["step"], "config_digest": model.cfg.digest()}
    app = create_app(model, directions, capacity=args.sessions, info=info)
    if args.ui:
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=args.ui, html=True), name="ui")
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")


def build_parser():
    p = argparse.ArgumentParser(prog="stylemap", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train networks")
    t.add_argument("--config", help="YAML config; defaults are desk scale")
    t.add_argument("--out", required=True, help="output directory")
    t.add_argument("--resume", help="checkpoint to resume from")
    t.set_defaults(fn=cmd_train)

    e = sub.add_parser("eval", help="compute metrics into a JSON report")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--dataset", help="dataset root; defaults to the checkpoint's dataset")
    e.add_argument("--metrics", default="fid,fidlerp,recon,editmse")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--feature-count", type=int, default=512)
    e.add_argument("--report", default="report.json")
    e.set_defaults(fn=cmd_eval)

    g = sub.add_parser("generate", help="sample images from the mapping network")
    g.add_argument("--ckpt", required=True)
    g.add_argument("--count", type=int, default=16)
    g.add_argument("--psi", type=float, default=0.7, help="truncation toward the mean stylemap")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(fn=cmd_generate)

    d = sub.add_parser("edit", help="masked local edit from a reference image")
    d.add_argument("--ckpt", required=True)
    d.add_argument("--original", required=True)
    d.add_argument("--reference", required=True)
    d.add_argument("--mask", required=True, help="grayscale PNG; 255 takes the reference")
    d.add_argument("--space", choices=("wplus", "w"), default="wplus")
    d.add_argument("--out", required=True)
    d.set_defaults(fn=cmd_edit)

    tr = sub.add_parser("transplant", help="copy stylemap boxes between images")
    tr.add_argument("--ckpt", required=True)
    tr.add_argument("--original", required=True)
    tr.add_argument("--reference", required=True)
    tr.add_argument(
        "--box", action="append", required=True,
        help="src:dst as top,left,h,w:top,left,h,w in stylemap cells; repeatable",
    )
    tr.add_argument("--out", required=True)
    tr.set_defaults(fn=cmd_transplant)

    m = sub.add_parser("mix", help="swap pyramid levels from a reference")
    m.add_argument("--ckpt", required=True)
    m.add_argument("--original", required=True)
    m.add_argument("--reference", required=True)
    m.add_argument("--levels", help="comma-separated level indices; default all")
    m.add_argument("--structure-only", action="store_true",
                   help="original first level, reference for the rest")
    m.add_argument("--mask", help="restrict the swap to a region")
    m.add_argument("--out", required=True)
    m.set_defaults(fn=cmd_mix)

    i = sub.add_parser("interp", help="interpolate between two projected images")
    i.add_argument("--ckpt", required=True)
    i.add_argument("--a", required=True)
    i.add_argument("--b", required=True)
    i.add_argument("--t", type=float, required=True)
    i.add_argument("--out", required=True)
    i.set_defaults(fn=cmd_interp)

    s = sub.add_parser("semantic", help="move a projection along a semantic direction")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--image", required=True)
    s.add_argument("--direction", required=True, help=".npy direction file")
    s.add_argument("--strength", type=float, required=True,
                   help="in multiples of the mapped spread along the direction")
    s.add_argument("--region", help="optional mask restricting the edit")
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_semantic)

    f = sub.add_parser("fit-direction", help="fit a semantic direction from labeled folders")
    f.add_argument("--ckpt", required=True)
    f.add_argument("--positives", required=True)
    f.add_argument("--negatives", required=True)
    f.add_argument("--out", required=True, help=".npy output")
    f.set_defaults(fn=cmd_fit_direction)

    x = sub.add_parser("toy-export", help="write procedural toy images as PNGs")
    x.add_argument("--split", choices=("train", "val", "test"), default="train")
    x.add_argument("--count", type=int, default=16)
    x.add_argument("--seed", type=int, default=7)
    x.add_argument("--size", type=int, default=32)
    x.add_argument("--out", required=True)
    x.set_defaults(fn=cmd_toy_export)

    v = sub.add_parser("serve", help="run the HTTP editing service")
    v.add_argument("--ckpt", required=True)
    v.add_argument("--port", type=int, default=8000)
    v.add_argument("--host", default="127.0.0.1")
    v.add_argument("--sessions", type=int, default=64)
    v.add_argument("--directions", help="directory of <name>.npy semantic directions")
    v.add_argument("--ui", help="static directory to mount at /ui")
    v.set_defaults(fn=cmd_serve)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.fn(args) or 0


if __name__ == "__main__":
    sys.exit(main())
