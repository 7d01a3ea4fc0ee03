"""Command-line entry point: ``cgtex {synth,expand,inpaint,eval,gradcheck}``.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
Results go to stdout; progress goes to stderr.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import re
import sys
from contextlib import nullcontext
from pathlib import Path

import numpy as np

from . import energy as E
from . import texture_io as tio
from .checkpoint import load_checkpoint, load_meta, save_checkpoint
from .config import ConfigError, JobConfig, dump_config, load_config
from .errors import ContractError
from .generator import GeneratorNet, GeneratorSpec, build_generator, check_size, generate
from .inpaint import InpaintConfig, default_inpaint_spec, inpaint
from .metrics import score
from .plotting import plot_energy_trace, plot_inpaint_energies, plot_scores
from .sampler import SamplerConfig
from .trainer import TrainConfig, train

log = logging.getLogger("cgtex")


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- helpers

def _threads(workers):
    n = workers or os.environ.get("CGTEX_THREADS")
    if not n:
        return nullcontext()
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=int(n))


def _load_exemplar(path, cfg: JobConfig) -> tio.TextureExemplar:
    tex = tio.load_texture(path)
    if cfg.modality is not None and cfg.modality != tex.modality:
        raise UsageError(f"config says modality {cfg.modality!r} but {path} is a {tex.modality} texture")
    if cfg.resize is not None:
        if tex.modality == "image":
            tex.data = tio.resize_image(tex.data, tuple(cfg.resize))
        elif tex.modality == "dynamic":
            tex.data = np.stack([tio.resize_image(tex.data[:, :, t], tuple(cfg.resize))
                                 for t in range(tex.data.shape[2])], axis=2)
    if cfg.clip is not None and tex.modality == "sound":
        tex.data = tex.data[: cfg.clip]
    return tex


def network_spec(cfg: JobConfig, for_inpaint: bool = False) -> E.NetworkSpec:
    if for_inpaint and cfg.m is None and cfg.n is None:
        spec = default_inpaint_spec(cfg.modality, cfg.statistic)
        if cfg.channels:
            for layer in spec.deep + spec.shallow:
                layer.channels = cfg.channels
        return spec
    return E.default_spec(cfg.modality, cfg.m, cfg.n, cfg.statistic, cfg.channels)


def _sampler(cfg: JobConfig) -> SamplerConfig:
    return SamplerConfig(step_size=cfg.step_size, n_steps=cfg.N, noise=cfg.noise,
                         preconditioner=cfg.preconditioner, seed=cfg.seed)


def _write_trace(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "chain", "energy"])
        for it, k, e in rows:
            w.writerow([it, k, f"{e:.9g}"])


def _out_path(directory: Path, stem: str, modality: str) -> Path:
    return directory / (stem + tio.texture_suffix(modality))


def _save(path, data, modality, sample_rate):
    tio.save_texture(path, data, modality, sample_rate)
    if modality == "dynamic":
        tio.save_gif(Path(str(path) + ".gif"), data)


def parse_size(text: str) -> tuple[int, ...]:
    if not re.fullmatch(r"\d+(x\d+)*", text):
        raise UsageError(f"--size must look like 128x128, 512x512x48 or 122880, got {text!r}")
    return tuple(int(v) for v in text.split("x"))


# ---------------------------------------------------------------- commands

def cmd_synth(args) -> int:
    base = load_config(args.config)
    tex = _load_exemplar(args.exemplar, base)
    cfg = base.materialize(tex.modality)
    out = Path(args.out or cfg.output_dir)
    cfg.output_dir = str(out)
    out.mkdir(parents=True, exist_ok=True)
    dump_config(cfg, out / "effective-config.json")

    spec = network_spec(cfg)
    spec_g = GeneratorSpec(cfg.modality, cfg.generator.octaves, cfg.generator.width)
    tcfg = TrainConfig(mode=cfg.mode, K=cfg.K, T=cfg.T, sampler=_sampler(cfg), lr_d=cfg.lr_d,
                       lr_g=cfg.lr_g, d_optimizer=cfg.d_optimizer, init_std=cfg.init_std,
                       kle_weight=cfg.kle_weight, seed=cfg.seed)
    rate = tex.sample_rate or 22050

    callback = None
    if cfg.snapshot_every:
        snap = out / "snapshots"
        snap.mkdir(exist_ok=True)

        def callback(state):
            if state.iteration % cfg.snapshot_every == 0:
                for k, s in enumerate(state.samples):
                    _save(_out_path(snap, f"iter{state.iteration:06d}_sample{k}", cfg.modality),
                          s, cfg.modality, rate)

    log.info("training %s %s on %s exemplar %s", cfg.mode, spec.label, cfg.modality, tex.shape)
    state = train(tex.data, spec, tcfg, spec_g, callback=callback)

    for k, s in enumerate(state.samples):
        _save(_out_path(out, f"sample_{k}", cfg.modality), s, cfg.modality, rate)
    _write_trace(state.trace, out / "energy_trace.csv")
    plot_energy_trace(state.trace, out / "energy_trace.png", f"{cfg.mode} {spec.label}")
    tensors = state.net.state_dict()
    meta = {"modality": cfg.modality, "mode": cfg.mode, "network": spec.to_dict(),
            "exemplar_shape": list(tex.shape), "sample_rate": rate, "iterations": state.iteration}
    if state.gen is not None:
        tensors.update(state.gen.state_dict())
        meta["generator"] = spec_g.to_dict()
    save_checkpoint(out / "checkpoint.cgcn", tensors, meta)
    print(json.dumps({"output_dir": str(out), "iterations": state.iteration,
                      "final_mean_energy": state.mean_energy(state.iteration)}))
    return 0


def cmd_expand(args) -> int:
    meta = load_meta(args.checkpoint)
    if "generator" not in meta:
        raise UsageError(f"{args.checkpoint} holds no generator; train with mode f-cgcnn first")
    spec_g = GeneratorSpec(**meta["generator"])
    size = parse_size(args.size)
    _, nsp = E.modality_layout(spec_g.modality)
    if len(size) != nsp:
        raise UsageError(f"{spec_g.modality} textures need {nsp} extents in --size, got {len(size)}")
    try:
        check_size(size, spec_g.octaves)
    except ContractError as exc:
        raise UsageError(str(exc)) from exc
    gen = build_generator(spec_g)
    gen.load_state_dict(load_checkpoint(args.checkpoint))
    data = generate(gen, gen.noise(size, args.seed)).data
    out = Path(args.out) if args.out else _out_path(Path("."), "expanded", spec_g.modality)
    out.parent.mkdir(parents=True, exist_ok=True)
    _save(out, data, spec_g.modality, meta.get("sample_rate", 22050))
    print(json.dumps({"output": str(out), "shape": list(data.shape)}))
    return 0


def _parse_mask(mask: str, tex: tio.TextureExemplar, border: int) -> tio.MaskRegion:
    m = re.fullmatch(r"(\d+):(\d+)", mask)
    if m:
        if tex.modality != "sound":
            raise UsageError("interval masks apply to sound textures only")
        return tio.interval_mask(int(m.group(1)), int(m.group(2)), tex.shape[0], border)
    if tex.modality == "sound":
        raise UsageError("sound inpainting takes a START:STOP sample interval as mask")
    frames = tex.shape[2] if tex.modality == "dynamic" else None
    region = tio.load_mask(mask, border, frames)
    if region.omega.shape != tex.shape[: region.omega.ndim]:
        raise UsageError(f"mask {region.omega.shape} does not match texture {tex.shape}")
    return region


def cmd_inpaint(args) -> int:
    base = load_config(args.config)
    tex = _load_exemplar(args.exemplar, base)
    cfg = base.materialize(tex.modality)
    if args.border is not None:
        cfg.inpaint.border = args.border
    out = Path(args.out or cfg.output_dir)
    cfg.output_dir = str(out)
    out.mkdir(parents=True, exist_ok=True)
    region = _parse_mask(args.mask, tex, cfg.inpaint.border)
    dump_config(cfg, out / "effective-config.json")
    ic = cfg.inpaint
    grid = tuple(ic.grid_stride) if isinstance(ic.grid_stride, list) else ic.grid_stride
    icfg = InpaintConfig(searches=ic.searches, updates=ic.updates, sampler=_sampler(cfg),
                         grid_stride=grid, spec=network_spec(cfg, for_inpaint=True),
                         template=tuple(ic.template) if ic.template else None,
                         lr_d=cfg.lr_d, d_optimizer=cfg.d_optimizer, seed=cfg.seed)
    if icfg.template is None and tex.modality == "dynamic":
        log.warning("no user template for a dynamic texture; falling back to grid search")
    res = inpaint(tex.data, region, icfg, tex.modality)
    target = _out_path(out, "inpainted", tex.modality)
    _save(target, res.texture, tex.modality, tex.sample_rate or 22050)
    sidecar = {
        "border_width": region.border_width,
        "closure_bbox": [[s.start, s.stop] for s in region.bbox()],
        "iterations": [
            {"template_offset": list(m.offset), "template_extents": list(m.extents),
             "search_energy": m.energy, "start_energy": s, "end_energy": e}
            for m, s, e in zip(res.templates, res.start_energies, res.end_energies)
        ],
    }
    (out / "inpaint.json").write_text(json.dumps(sidecar, indent=2) + "\n")
    plot_inpaint_energies(res.start_energies, res.end_energies, out / "inpaint_energy.png")
    print(json.dumps({"output": str(target), "templates": [list(m.offset) for m in res.templates]}))
    return 0


def _load_array(path) -> np.ndarray:
    return tio.load_texture(path).data


def cmd_eval(args) -> int:
    if args.batch:
        with open(args.batch, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
        if rows and rows[0][:1] == ["id"]:
            rows = rows[1:]
        ids, scores = [], []
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(["pair_id", "score"])
        for row in rows:
            if len(row) != 3:
                raise UsageError(f"batch rows need id,a,b; got {row}")
            s = score(_load_array(row[1]), _load_array(row[2]))
            ids.append(row[0])
            scores.append(s)
            w.writerow([row[0], f"{s:.4f}"])
        if args.figure:
            plot_scores(ids, scores, args.figure)
        return 0
    if not (args.a and args.b):
        raise UsageError("eval needs two textures or --batch")
    print(f"{score(_load_array(args.a), _load_array(args.b)):.4f}")
    return 0


def cmd_gradcheck(args) -> int:
    from .gradcheck import TOL, run_suite
    ok = True
    for r in run_suite(cases=args.cases, seed=args.seed):
        status = "PASS" if r.passed else "FAIL"
        ok &= r.passed
        print(f"{r.name:22s} cases={r.cases:3d} max_rel_err={r.max_rel_err:.3e} "
              f"tol={TOL:.0e} {r.seconds:6.2f}s {status}")
    return 0 if ok else 1


# ---------------------------------------------------------------- wiring

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cgtex", description="Texture synthesis, expansion and inpainting with conditional generative ConvNets.")
    p.add_argument("--workers", type=int, default=None,
                   help="BLAS thread count (overrides CGTEX_THREADS); results do not depend on it")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="train c-cgcnn / f-cgcnn / fixed-d on an exemplar")
    s.add_argument("exemplar", help="PNG image, frame directory or WAV file")
    s.add_argument("--config", help="JSON job config")
    s.add_argument("--out", help="output directory (overrides output_dir)")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("expand", help="sample a trained generator at any valid size")
    s.add_argument("checkpoint")
    s.add_argument("--size", required=True, help="e.g. 512x512, 512x512x48 or 122880")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_expand)

    s = sub.add_parser("inpaint", help="fill a corrupted region")
    s.add_argument("exemplar")
    s.add_argument("mask", help="mask PNG (nonzero = corrupted) or START:STOP for sound")
    s.add_argument("--config")
    s.add_argument("--border", type=int)
    s.add_argument("--out")
    s.set_defaults(func=cmd_inpaint)

    s = sub.add_parser("eval", help="MS-SSIM between two textures")
    s.add_argument("a", nargs="?")
    s.add_argument("b", nargs="?")
    s.add_argument("--batch", help="CSV of id,a,b rows; prints pair_id,score CSV")
    s.add_argument("--figure", help="bar chart of batch scores")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("gradcheck", help="finite-difference check of every differentiable op")
    s.add_argument("--cases", type=int, default=20)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if args.verbose:
        logging.getLogger("cgtex").setLevel(logging.INFO)
    try:
        with _threads(args.workers):
            return args.func(args)
    except ConfigError as exc:
        print(f"cgtex: config error at {exc}", file=sys.stderr)
        return 2
    except (UsageError, ContractError, FileNotFoundError) as exc:
        print(f"cgtex: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        log.debug("failure", exc_info=True)
        print(f"cgtex: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
