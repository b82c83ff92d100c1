"""``mmnet`` command line: train, eval, export-attn, gradcheck, synth.

Exit codes: 0 success, 1 gradient check failed, 2 config error, 3 IO error,
4 non-finite value, 5 any other data/protocol error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import gradcheck, kernels
from .checkpoint import Checkpoint
from .config import RunConfig
from .data import load_dataset, save_dataset
from .errors import CheckpointError, ConfigError, MMNetError, NonFiniteError
from .export import export_attention
from .model import build_model
from .rng import Rng, derive_seed
from .synth import SynthSpec, synth_dataset
from .train import evaluate, model_from_checkpoint, pooled_report, run_fold

log = logging.getLogger("mmnet")


def load_config(args) -> RunConfig:
    config = RunConfig.load(args.config) if getattr(args, "config", None) else RunConfig()
    overrides = {}
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    if getattr(args, "out", None) and args.command == "train":
        overrides["out_dir"] = args.out
    return RunConfig.from_strings(overrides, base=config) if overrides else config


def resolve_dataset(config: RunConfig, path=None):
    if path:
        return load_dataset(path)
    if config.dataset:
        return load_dataset(config.dataset)
    if config.uses_synth:
        spec = SynthSpec(config.synth_subjects, config.synth_classes, config.synth_samples_per)
        return synth_dataset(spec, Rng(derive_seed(config.seed, "synth")))
    raise ConfigError("no dataset: set 'dataset' or the synth_* keys")


def _fold_job(job):
    ds, config, subject = job
    return run_fold(ds, config, subject)


def cmd_train(args) -> int:
    config = load_config(args)
    ds = resolve_dataset(config)
    if ds.num_classes != config.num_classes:
        raise ConfigError(f"dataset has {ds.num_classes} classes, config expects {config.num_classes}")
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    config.save(out / "config.txt")
    subjects = ds.subjects
    if len(subjects) < 2:
        raise MMNetError(f"leave-one-subject-out needs >= 2 subjects, got {len(subjects)}")
    jobs = [(ds, config, s) for s in subjects]
    if args.workers > 1:
        with ProcessPoolExecutor(args.workers) as pool:
            folds = list(pool.map(_fold_job, jobs))
    else:
        folds = [_fold_job(j) for j in jobs]
    digest = config.digest
    for f in folds:
        fdir = out / "folds" / f.subject
        fdir.mkdir(parents=True, exist_ok=True)
        f.checkpoint.save(fdir / "checkpoint.bin")
        header = f"# mmnet train log fold={f.subject} config_digest={digest}\n"
        (fdir / "train.log").write_text(header + "".join(r.to_line() + "\n" for r in f.checkpoint.log))
        (fdir / "report.txt").write_text(f.report.to_text(digest))
    pooled = pooled_report(ds, folds)
    (out / "pooled_report.txt").write_text(pooled.to_text(digest))
    print(f"{len(folds)} folds  accuracy={pooled.accuracy:.4f}  macro_f1={pooled.macro_f1:.4f}  -> {out}")
    return 0


def _load_checkpoint(args, config):
    return Checkpoint.load(args.checkpoint, config)


def cmd_eval(args) -> int:
    config = load_config(args)
    ckpt = _load_checkpoint(args, config)
    ds = resolve_dataset(config, args.dataset)
    if args.subject:
        ds = ds.subset([i for i, s in enumerate(ds.samples) if s.subject_id == args.subject])
    report = evaluate(ds, ckpt)
    text = report.to_text(config.digest)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_export_attn(args) -> int:
    config = load_config(args)
    model = model_from_checkpoint(_load_checkpoint(args, config))
    ds = resolve_dataset(config, args.dataset)
    if not 0 <= args.sample < len(ds):
        raise MMNetError(f"sample index {args.sample} outside dataset of {len(ds)}")
    paths, degenerate = export_attention(model, ds.samples[args.sample], args.out, config.digest)
    for block in degenerate:
        print(f"mmnet: warning: block {block} attention map is constant; written as all zeros", file=sys.stderr)
    for p in paths:
        print(p)
    return 0


def cmd_gradcheck(args) -> int:
    results = gradcheck.run_op_suite(args.instances, args.seed)
    if not args.skip_model:
        config = load_config(args)
        rng = np.random.default_rng(args.seed)
        onset = rng.random((3, 224, 224))
        apex = np.clip(onset + 0.1 * rng.standard_normal(onset.shape), 0.0, 1.0)
        model = build_model(config)
        label = int(rng.integers(config.num_classes))
        results.append(gradcheck.check_model_loss(model, onset, apex, label, args.model_entries, args.seed))
    bad = [r for r in results if not r.passed]
    print(f"backend: {kernels.BACKEND}")
    for r in results:
        print(f"{'ok  ' if r.passed else 'FAIL'} {r.name:22s} worst_rel_err={r.worst:.3e} "
              f"instances={r.instances} time={r.seconds:.2f}s"
              + (f" redrawn_at_kinks={r.rejected}" if r.rejected else ""))
    if bad:
        print("gradcheck failed: " + ", ".join(r.name for r in bad), file=sys.stderr)
        return 1
    return 0


def cmd_synth(args) -> int:
    ds = synth_dataset(SynthSpec(args.subjects, args.classes, args.samples_per), Rng(args.seed))
    save_dataset(ds, args.out)
    print(f"{len(ds)} samples, {len(ds.subjects)} subjects, classes: {' '.join(ds.class_names)} -> {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mmnet", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = p.add_subparsers(dest="command", required=True)

    def config_args(sp):
        sp.add_argument("--config", help="run config file (key = value); defaults when omitted")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key (repeatable)")

    sp = sub.add_parser("train", help="leave-one-subject-out training and evaluation")
    config_args(sp)
    sp.add_argument("--out", help="output directory (overrides out_dir)")
    sp.add_argument("--workers", type=int, default=1, help="train folds in N processes")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="evaluate a checkpoint")
    config_args(sp)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--dataset", help="dataset directory (default: from config)")
    sp.add_argument("--subject", help="only this subject's samples")
    sp.add_argument("--out", help="write the report here instead of stdout")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("export-attn", help="write attention maps and overlays for one sample")
    config_args(sp)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--dataset", help="dataset directory (default: from config)")
    sp.add_argument("--sample", type=int, default=0, help="sample index in the dataset")
    sp.add_argument("--out", required=True, help="output directory")
    sp.set_defaults(func=cmd_export_attn)

    sp = sub.add_parser("gradcheck", help="finite-difference check of every op and the model loss")
    config_args(sp)
    sp.add_argument("--instances", type=int, default=20)
    sp.add_argument("--model-entries", type=int, default=20)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--skip-model", action="store_true")
    sp.set_defaults(func=cmd_gradcheck)

    sp = sub.add_parser("synth", help="generate a synthetic dataset")
    sp.add_argument("--out", required=True)
    sp.add_argument("--subjects", type=int, default=4)
    sp.add_argument("--classes", type=int, default=2)
    sp.add_argument("--samples-per", type=int, default=2)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, CheckpointError) as exc:
        print(f"mmnet: config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"mmnet: io error: {exc}", file=sys.stderr)
        return 3
    except NonFiniteError as exc:
        print(f"mmnet: non-finite value: {exc}", file=sys.stderr)
        return 4
    except MMNetError as exc:
        print(f"mmnet: error: {exc}", file=sys.stderr)
        return 5


if __name__ == "__main__":
    sys.exit(main())
