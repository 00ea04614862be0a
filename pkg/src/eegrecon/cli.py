"""Command line entry point: one subcommand per pipeline stage.

    eegrecon prepare            dataset (synthetic if absent), autoencoder,
                                text-conditional backbone, metric backbone
    eegrecon train-decoder      one decoder per montage + accuracy CSV
    eegrecon train-controlnet   one adapter per montage on the frozen backbone
    eegrecon generate           reconstructions for every test trial and gamma
    eegrecon boost              describe + refine every reconstruction
    eegrecon evaluate           MetricReport CSV over montage x gamma x raw/boosted
    eegrecon ablate             electrode and region knockouts, topomaps
    eegrecon study-stats        preference statistics from a CSV of choices

Exit codes: 0 success, 1 validation error, 2 missing prerequisite.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import platform
import sys
import time
import zlib
from dataclasses import replace
from pathlib import Path

import numpy as np
import torch
from filelock import FileLock, Timeout

from . import ablation as ab
from . import boosting
from . import config as cfgmod
from . import metrics
from . import montage as mt
from . import study_stats
from .dataset_io import EegDataset, generate_synthetic, read_image, synthetic_labels
from .decoder import (
    DecoderConfig,
    DecoderHyper,
    DecoderModel,
    decode_batch,
    make_caption,
    topk_report,
    train_for_montage,
)
from .diffusion import (
    ControlNetHyper,
    DiffusionEngine,
    EngineConfig,
    pretrain_autoencoder,
    pretrain_backbone,
    train_controlnet,
)
from .diffusion.training import psnr
from .errors import ConfigValidationError, EegReconError, MissingPrerequisite, ValidationError

log = logging.getLogger("eegrecon")

COMMANDS = ("prepare", "train-decoder", "train-controlnet", "generate", "boost", "evaluate",
            "ablate", "study-stats")
# study-stats is left out: it reads an external CSV of human choices
PIPELINE = COMMANDS[:-1]


def derive_seed(seed: int, *parts) -> int:
    key = ":".join(str(p) for p in (seed,) + parts)
    return zlib.crc32(key.encode()) & 0x7FFFFFFF


def gamma_tag(g: float) -> str:
    return f"{float(g):g}"


def _f(x) -> str:
    return "" if x is None else f"{float(x):.6f}"


class Run:
    """Paths, seeds and provenance for one command invocation."""

    def __init__(self, command: str, cfg: cfgmod.RunConfig):
        self.command = command
        self.cfg = cfg
        self.out = Path(cfg.output)
        self.artifacts: list[str] = []
        self.seeds: dict[str, int] = {"seed": cfg.seed}
        self.extra: dict = {}
        self.started = time.time()

    # paths
    @property
    def base_engine(self) -> Path:
        return self.out / "base" / "engine_base.ckpt"

    @property
    def metric_backbone(self) -> Path:
        return self.out / "base" / "metric_backbone.ckpt"

    @property
    def reports(self) -> Path:
        return self.out / "reports"

    def mdir(self, montage: str) -> Path:
        return self.out / montage

    def decoder_path(self, montage: str) -> Path:
        return self.mdir(montage) / "decoder.ckpt"

    def engine_path(self, montage: str) -> Path:
        return self.mdir(montage) / "engine.ckpt"

    def raw_dir(self, montage: str, gamma: float) -> Path:
        return self.mdir(montage) / f"g{gamma_tag(gamma)}" / "raw"

    def boosted_dir(self, montage: str, gamma: float) -> Path:
        return self.mdir(montage) / f"g{gamma_tag(gamma)}" / "boosted"

    def seed_for(self, *parts) -> int:
        s = derive_seed(self.cfg.seed, *parts)
        self.seeds[":".join(str(p) for p in parts)] = s
        return s

    def record(self, path: Path):
        self.artifacts.append(str(Path(path).relative_to(self.out)) if Path(path).is_relative_to(self.out)
                              else str(path))

    def write_manifest(self):
        import eegrecon
        versions = {"python": platform.python_version(), "numpy": np.__version__,
                    "torch": torch.__version__, "eegrecon": getattr(eegrecon, "__version__", "0.1.0")}
        doc = {"command": self.command, "config_hash": self.cfg.hash(), "config": self.cfg.to_dict(),
               "seeds": self.seeds, "versions": versions, "artifacts": sorted(set(self.artifacts)),
               "started": self.started, "finished": time.time(), **self.extra}
        path = self.out / "manifests" / f"{self.command}.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        return path


def _require(path: Path, what: str) -> Path:
    if not Path(path).exists():
        raise MissingPrerequisite(path, what)
    return Path(path)


def _dataset(run: Run) -> EegDataset:
    _require(run.cfg.dataset_path / "manifest.json", "dataset manifest (run prepare)")
    return EegDataset(run.cfg.dataset_path)


def resolve_montage(run: Run, ds: EegDataset, name: str) -> mt.Montage:
    """The named montage expressed as a selection of the dataset's own channels."""
    root = ds.root_montage()
    if name == root.name:
        return root
    m = mt.load_fixture(name, run.cfg.montage_dir or None)
    missing = [lab for lab in m.labels if lab not in root.labels]
    if missing:
        raise ConfigValidationError(f"montage {name} uses electrodes the dataset lacks: {missing[:5]}")
    return root.select([root.index(lab) for lab in m.labels], name)


def _engine_config(run: Run, ds: EegDataset) -> EngineConfig:
    e = run.cfg.engine
    man = ds.manifest
    return EngineConfig(image_size=int(man.image_size[0]), latent_channels=e.latent_channels,
                        pixel_space=e.pixel_space, unet_ch=e.unet_ch, T=e.T,
                        beta_start=e.beta_start, beta_end=e.beta_end,
                        eeg_channels=man.channels, eeg_samples=man.samples_per_trial)


def _images_for(ds: EegDataset, trial_ids) -> np.ndarray:
    return np.stack([ds.image(ds.trial(t).image_id).pixels for t in trial_ids])


def _write_csv(path: Path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _read_jsonl(path: Path) -> list[dict]:
    return [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]


def _write_jsonl(path: Path, rows):
    path.write_text("".join(json.dumps(r, sort_keys=True) + "\n" for r in rows))


# ---------------------------------------------------------------- commands

def cmd_prepare(run: Run, args) -> None:
    cfg = run.cfg
    root = cfg.dataset_path
    if not (root / "manifest.json").exists():
        if cfg.synthetic is None:
            raise MissingPrerequisite(root / "manifest.json", "dataset manifest")
        s = cfg.synthetic
        informative = s.informative
        if isinstance(informative, str):
            labels, _ = synthetic_labels(s.channels)
            informative = [i for i, lab in enumerate(labels) if mt.region_of(lab) == informative]
        log.info("generating synthetic dataset at %s", root)
        generate_synthetic(root, s.num_classes, s.channels, s.samples, s.n_per_class,
                           informative, s.seed, s.amplitude)
        run.extra["informative_channels"] = list(informative)
    ds = EegDataset(root)
    run.record(root / "manifest.json")
    tr = ds.manifest.splits["train"]
    images = _images_for(ds, tr)
    labels = np.array([ds.trial(t).class_label for t in tr])

    torch.manual_seed(run.seed_for("engine-init"))
    eng = DiffusionEngine(_engine_config(run, ds))
    e = cfg.engine
    ae_hist = pretrain_autoencoder(eng, images, e.ae_steps, e.batch, e.ae_lr, run.seed_for("ae"))
    val = _images_for(ds, ds.manifest.splits["val"]) if ds.manifest.splits["val"] else images[:16]
    run.extra["autoencoder_psnr_val"] = psnr(val, eng.roundtrip(val))
    base_hist = pretrain_backbone(eng, images, labels, ds.class_names, e.base_steps, e.batch,
                                  e.base_lr, run.seed_for("backbone"))
    eng.meta = {"ae_loss_last": ae_hist[-1] if ae_hist else None,
                "base_loss_last": base_hist[-1] if base_hist else None,
                "projector": "conv1d k7 s2 -> conv1d k5 s2 -> avgpool -> linear (toy stand-in)"}
    eng.save(run.base_engine)
    run.record(run.base_engine)

    bb = metrics.train_backbone(images, labels, ds.manifest.num_classes, cfg.metrics.backbone_steps,
                                seed=run.seed_for("metric-backbone"))
    bb.save(run.metric_backbone)
    run.record(run.metric_backbone)
    print(f"prepared {root} (val PSNR {run.extra['autoencoder_psnr_val']:.2f} dB)")


def _decoder_hyper(cfg) -> tuple[DecoderHyper, DecoderConfig]:
    d = cfg.decoder
    return (DecoderHyper(d.epochs, d.batch, d.lr),
            DecoderConfig(d.hidden, d.layers, d.pool, d.spatial, d.channel_dropout))


def cmd_train_decoder(run: Run, args) -> None:
    ds = _dataset(run)
    hyper, dconf = _decoder_hyper(run.cfg)
    rows = []
    for name in run.cfg.montages:
        mon = resolve_montage(run, ds, name)
        model = train_for_montage(ds, mon, hyper, run.seed_for("decoder", name), dconf)
        model.save(run.decoder_path(name))
        run.record(run.decoder_path(name))
        X, y, _ = ds.arrays("test", mon)
        rep = topk_report(decode_batch(model, X), y, run.cfg.metrics.ways, run.cfg.seed)
        rows.append([name, len(mon), "test", rep.ways, _f(rep.top1), rep.k5, _f(rep.top5),
                     _f(model.history["val_acc"][-1]) if model.history["val_acc"] else "",
                     run.seeds[f"decoder:{name}"]])
        print(f"decoder {name}: test top-1 {rep.top1:.3f}")
    path = run.reports / "decoder_accuracy.csv"
    _write_csv(path, ["montage", "channels", "split", "ways", "top1", "k5", "top5", "val_top1", "seed"],
               rows)
    run.record(path)


def _captions(model: DecoderModel, X: np.ndarray, class_names):
    scores = decode_batch(model, X)
    return [make_caption(s, class_names) for s in scores]


def cmd_train_controlnet(run: Run, args) -> None:
    ds = _dataset(run)
    _require(run.base_engine, "pretrained backbone (run prepare)")
    c = run.cfg.controlnet
    hyper = ControlNetHyper(c.lr, c.batch, c.epochs, c.max_steps, c.p_uncond)
    for name in run.cfg.montages:
        dec_path = _require(run.decoder_path(name), f"decoder for {name} (run train-decoder)")
        mon = resolve_montage(run, ds, name)
        model = DecoderModel.load(dec_path)
        eng = DiffusionEngine.load(run.base_engine).for_montage(name, len(mon),
                                                                run.seed_for("projector", name))
        splits = {}
        for split in ("train", "val"):
            X, _, ids = ds.arrays(split, mon)
            caps = [c_.text for c_ in _captions(model, X, ds.class_names)] if len(X) else []
            lat = eng.encode_image(_images_for(ds, ids)) if ids else None
            splits[split] = (X, lat, caps)
        val = splits["val"] if len(splits["val"][0]) else None
        hist = train_controlnet(eng, *splits["train"], hyper=hyper,
                                seed=run.seed_for("controlnet", name), val=val)
        eng.meta["controlnet"] = {k: hist[k] for k in ("hyper", "seed", "frozen_sha256")}
        eng.save(run.engine_path(name))
        run.record(run.engine_path(name))
        hpath = run.mdir(name) / "controlnet_history.json"
        hist = {k: v for k, v in hist.items() if k != "seconds"}
        hpath.write_text(json.dumps(hist, indent=1, sort_keys=True) + "\n")
        run.record(hpath)
        print(f"controlnet {name}: {len(hist['train_loss'])} steps, "
              f"last loss {hist['train_loss'][-1]:.4f}")


def cmd_generate(run: Run, args) -> None:
    ds = _dataset(run)
    S = run.cfg.samples_per_trial
    for name in run.cfg.montages:
        dec_path = _require(run.decoder_path(name), f"decoder for {name} (run train-decoder)")
        eng_path = _require(run.engine_path(name), f"adapter for {name} (run train-controlnet)")
        mon = resolve_montage(run, ds, name)
        model = DecoderModel.load(dec_path)
        eng = DiffusionEngine.load(eng_path)
        X, _, ids = ds.arrays("test", mon)
        caps = _captions(model, X, ds.class_names)
        base = run.seed_for("generate", name)
        # same noise for every gamma so outputs differ by guidance alone
        jobs = [(i, s) for i in range(len(ids)) for s in range(S)]
        for g in run.cfg.gammas:
            out_dir = run.raw_dir(name, g)
            out_dir.mkdir(parents=True, exist_ok=True)
            meta = []
            for start in range(0, len(jobs), 64):
                chunk = jobs[start:start + 64]
                imgs = eng.sample(X[[i for i, _ in chunk]], [caps[i].text for i, _ in chunk],
                                  gamma=g, steps=run.cfg.sample_steps,
                                  seed=[base + i * S + s for i, s in chunk])
                for (i, s), img in zip(chunk, imgs):
                    fname = f"{ids[i]}_{s}_{gamma_tag(g)}.png"
                    _save_png(out_dir / fname, img)
                    meta.append({"trial_id": ids[i], "sample_idx": s, "gamma": g,
                                 "seed": base + i * S + s, "caption": caps[i].text,
                                 "predicted_label": caps[i].source_label,
                                 "predicted_class": ds.class_names[caps[i].source_label],
                                 "image_id": ds.trial(ids[i]).image_id, "file": fname,
                                 "steps": run.cfg.sample_steps, "montage": name})
            _write_jsonl(out_dir / "samples.jsonl", meta)
            run.record(out_dir / "samples.jsonl")
            print(f"generate {name} gamma={gamma_tag(g)}: {len(meta)} images")


def _save_png(path: Path, pixels: np.ndarray):
    from PIL import Image
    Image.fromarray(np.asarray(pixels, dtype=np.uint8), "RGB").save(path, format="PNG")


def _describer(cfg):
    b = cfg.boost
    if b.describer == "mock":
        return boosting.MockDescriber()
    r = b.remote
    return boosting.RemoteDescriber(boosting.RemoteConfig(r.url, r.timeout, r.retries, r.max_concurrency))


def cmd_boost(run: Run, args) -> None:
    b = run.cfg.boost
    _require(run.base_engine, "pretrained backbone (run prepare)")
    # refinement only needs the frozen image/text stack, never EEG or adapters
    eng = DiffusionEngine.load(run.base_engine)
    describer = _describer(run.cfg)
    for name in run.cfg.montages:
        for g in run.cfg.gammas:
            raw = run.raw_dir(name, g)
            meta = _read_jsonl(_require(raw / "samples.jsonl", f"raw samples for {name} (run generate)"))
            images = np.stack([read_image(raw / m["file"]).pixels for m in meta])
            base = run.seed_for("boost", name, gamma_tag(g))
            out, bmeta = boosting.boost(images, describer, eng, b.strength, b.gamma,
                                        seed=[base + i for i in range(len(meta))], steps=b.steps,
                                        hints=[m["predicted_class"] for m in meta])
            out_dir = run.boosted_dir(name, g)
            out_dir.mkdir(parents=True, exist_ok=True)
            side = []
            for m, img, bm in zip(meta, out, bmeta):
                fname = f"{m['trial_id']}_{m['sample_idx']}_boosted.png"
                _save_png(out_dir / fname, img)
                side.append({"trial_id": m["trial_id"], "sample_idx": m["sample_idx"],
                             "description": bm["description"], "prompt": bm["prompt"],
                             "strength": bm["strength"], "seed": bm["seed"],
                             "gamma": bm["gamma"], "steps": bm["steps"],
                             "describer": bm["describer"], "source": f"../raw/{m['file']}",
                             "image_id": m["image_id"], "file": fname})
            _write_jsonl(out_dir / "boosted.jsonl", side)
            run.record(out_dir / "boosted.jsonl")
            print(f"boost {name} gamma={gamma_tag(g)}: {len(side)} images")


def gain(raw: float, boosted: float, higher_is_better: bool) -> float:
    """Signed relative improvement: positive means boosting helped."""
    if raw == 0:
        return float("nan")
    return (boosted - raw) / raw if higher_is_better else (raw - boosted) / raw


def cmd_evaluate(run: Run, args) -> None:
    ds = _dataset(run)
    bb = metrics.CnnBackbone.load(_require(run.metric_backbone, "metric backbone (run prepare)"))
    rows, gains, accs = [], [], []
    for name in run.cfg.montages:
        channels = len(resolve_montage(run, ds, name))
        for g in run.cfg.gammas:
            values = {}
            for boosted in (False, True):
                d = run.boosted_dir(name, g) if boosted else run.raw_dir(name, g)
                side = d / ("boosted.jsonl" if boosted else "samples.jsonl")
                meta = _read_jsonl(_require(side, f"{'boosted' if boosted else 'raw'} images for "
                                                  f"{name} gamma={gamma_tag(g)}"))
                imgs = np.stack([read_image(d / m["file"]).pixels for m in meta])
                refs = np.stack([ds.image(m["image_id"]).pixels for m in meta])
                v = metrics.evaluate_images(imgs, refs, bb, boosted, run.cfg.metrics.is_splits)
                values[boosted] = v
                tag = "boosted" if boosted else "raw"
                rows.append([f"{name}_g{gamma_tag(g)}_{tag}", name, channels, gamma_tag(g),
                             int(boosted), len(imgs), _f(v["is"]), _f(v["fid"]), _f(v["lpips"]),
                             _f(v["clip_sim"]), bb.tag, run.cfg.seed])
                if not boosted:
                    labels = [ds.trial(m["trial_id"]).class_label for m in meta]
                    rep = topk_report(np.log(bb.probs(imgs) + 1e-12), labels,
                                      run.cfg.metrics.ways, run.cfg.seed)
                    accs.append([name, channels, gamma_tag(g), rep.ways, _f(rep.top1), rep.k5,
                                 _f(rep.top5), bb.tag])
            for metric, hib in (("is", True), ("fid", False), ("lpips", False)):
                r, b_ = values[False][metric], values[True][metric]
                gains.append([name, channels, gamma_tag(g), metric, _f(r), _f(b_),
                              f"{100 * gain(r, b_, hib):+.2f}"])
    path = run.reports / "metrics.csv"
    _write_csv(path, metrics.REPORT_COLUMNS, rows)
    run.record(path)
    gpath = run.reports / "boost_gains.csv"
    _write_csv(gpath, ["montage", "channels", "gamma", "metric", "raw", "boosted", "gain_pct"], gains)
    run.record(gpath)
    apath = run.reports / "image_accuracy.csv"
    _write_csv(apath, ["montage", "channels", "gamma", "ways", "top1", "k5", "top5", "backbone_tag"],
               accs)
    run.record(apath)
    note = run.reports / "metrics_notes.json"
    note.write_text(json.dumps({
        "fid": "pooled over the whole test set, features = metric backbone embedding",
        "is_splits": run.cfg.metrics.is_splits, "backbone_tag": bb.tag,
        "excluded_for_boosted": ["clip_sim", "top-k accuracy"],
        "gain_pct": "IS: (boosted-raw)/raw; FID, LPIPS: (raw-boosted)/raw; times 100"},
        indent=2, sort_keys=True) + "\n")
    run.record(note)
    print(f"evaluate: {len(rows)} metric rows -> {path}")


def cmd_ablate(run: Run, args) -> None:
    ds = _dataset(run)
    a = run.cfg.ablation
    name = args.montage[0] if args.montage else a.montage
    mon = resolve_montage(run, ds, name)
    dec = DecoderModel.load(_require(run.decoder_path(name), f"decoder for {name} (run train-decoder)"))
    X, y, _ = ds.arrays("test", mon)
    base = ab.baseline(X, y, dec, mon, a.ways, run.cfg.seed)
    elec = ab.electrode_sweep(X, y, dec, mon, a.ways, run.cfg.seed)
    hyper, dconf = _decoder_hyper(run.cfg)

    def factory(reduced):
        return train_for_montage(ds, reduced, hyper, run.seed_for("ablate-decoder", reduced.name), dconf)

    present = [r for r in mt.REGIONS if mon.region_indices(r)]
    regions = ab.region_sweep(X, y, mon, a.mode, dec, factory, a.ways, run.cfg.seed, present)
    out = run.out / "ablation" / name
    files = ab.topomap_export([r.top1 for r in elec], mon, out / "electrode_top1",
                              drops=[r.drop_top1 for r in elec])
    for f in files.values():
        run.record(Path(f))
    _write_csv(out / "regions.csv", ["region", "remaining_channels", "top1", "top5", "drop_top1",
                                     "drop_top5", "mode"],
               [[r.region, r.remaining_channels, _f(r.top1), _f(r.top5), _f(r.drop_top1),
                 _f(r.drop_top5), r.mode] for r in regions])
    run.record(out / "regions.csv")
    ab.write_summary(out / "summary.json", base, elec, regions, name, a.ways)
    run.record(out / "summary.json")
    worst = max(regions, key=lambda r: r.drop_top1)
    print(f"ablate {name}: baseline top-1 {base['top1']:.3f}; largest region drop "
          f"{worst.region} ({worst.drop_top1:+.3f})")


def cmd_study_stats(run: Run, args) -> None:
    src = args.input or run.cfg.study_csv
    if not src:
        raise ConfigValidationError("study-stats needs --input or study_csv in the config")
    trials = study_stats.read_csv(_require(Path(src), "preference CSV"))
    summary = study_stats.summarize(trials)
    path = run.reports / "study_stats.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    study_stats.write_summary(summary, path)
    run.record(path)
    o = summary["overall"]
    print(f"study-stats: n={o['n']} rate={o['preference_rate']:.4f} "
          f"weighted={o['weighted_preference_rate']:.4f}")


HANDLERS = {"prepare": cmd_prepare, "train-decoder": cmd_train_decoder,
            "train-controlnet": cmd_train_controlnet, "generate": cmd_generate,
            "boost": cmd_boost, "evaluate": cmd_evaluate, "ablate": cmd_ablate,
            "study-stats": cmd_study_stats}


# -------------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run config")
    common.add_argument("--output", help="output directory (overrides config)")
    common.add_argument("--dataset", help="dataset directory (overrides config)")
    common.add_argument("--seed", type=int)
    common.add_argument("--montage", action="append", help="montage name; repeatable")
    common.add_argument("--gamma", action="append", type=float, help="CFG scale; repeatable")
    common.add_argument("--boost-strength", type=float)
    common.add_argument("--threads", type=int, default=1,
                        help="torch intra-op threads (1 keeps runs bit-reproducible)")
    common.add_argument("-v", "--verbose", action="store_true")
    p = argparse.ArgumentParser(prog="eegrecon", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, parents=[common])
        if name == "study-stats":
            sp.add_argument("--input", help="CSV with trial_id,channels,chose_boosted,confidence")
    return p


def apply_overrides(cfg: cfgmod.RunConfig, args) -> cfgmod.RunConfig:
    if args.output:
        cfg.output = args.output
    if args.dataset:
        cfg.dataset = args.dataset
    if args.seed is not None:
        cfg.seed = args.seed
    if args.montage and args.command != "ablate":
        cfg.montages = list(args.montage)
    if args.gamma:
        cfg.gammas = list(args.gamma)
    if args.boost_strength is not None:
        cfg.boost = replace(cfg.boost, strength=args.boost_strength)
    return cfg


def run_command(args) -> int:
    cfg = apply_overrides(cfgmod.load(args.config), args).validate()
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    try:
        with FileLock(str(out / ".eegrecon.lock"), timeout=0):
            run = Run(args.command, cfg)
            HANDLERS[args.command](run, args)
            run.write_manifest()
    except Timeout:
        raise ValidationError(f"{out} is locked by another eegrecon process") from None
    return 0


def run_pipeline(common_args) -> int:
    """Run every pipeline stage in order with the same flags; stop at the first failure."""
    for command in PIPELINE:
        code = main([command, *common_args])
        if code:
            return code
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    torch.set_num_threads(max(1, args.threads))
    try:
        return run_command(args)
    except MissingPrerequisite as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (ValidationError, EegReconError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
