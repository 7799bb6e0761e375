#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
ModalFuse: multi-modal fusion transformer engine.
Command-line entry point: synth, train, eval, dump-attn, gradcheck, compare, view-attn.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from ablations import build_variant, count_parameters
from checkpoint import load_checkpoint
from config import load_run_config
from data import read_dataset, select_modalities, synthesize_dataset, write_dataset, write_manifest
from errors import ConfigError, DataError, HusformerError
from models import VARIANTS, ModalitySpec, ModelConfig
from presets import preset_names, preset_specs
from reports import compare_reports, format_comparison, read_report, write_report
from tensor import gradient_check
from training import check_compatible, cross_validate, evaluate, mae_loss

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

GRADCHECK_TOLERANCE = 1e-4
GRADCHECK_MAX_PARAMS = 20_000


def _write_json(payload: dict, out: Path | None):
    text = json.dumps(payload, indent=2, sort_keys=True)
    if out is None:
        print(text)
        return
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(text + "\n", encoding="utf-8")


def cmd_synth(args) -> int:
    if not 0.0 <= args.coupling <= 1.0:
        raise ConfigError(f"--coupling must lie in [0, 1], got {args.coupling}")
    if args.samples < args.classes:
        raise ConfigError(f"--samples ({args.samples}) must be >= --classes ({args.classes})")
    specs = preset_specs(args.preset) if args.preset else None
    n = len(specs) if specs else args.modalities
    dataset = synthesize_dataset(n, specs, args.samples, args.classes, args.coupling, args.seed, noise=args.noise)
    write_dataset(dataset, args.output)
    write_manifest(args.output, {
        "generator": "phase-coupled sinusoids",
        "modalities": [{"name": s.name, "channels": s.channels, "input_dim": s.input_dim} for s in dataset.specs],
        "preset": args.preset,
        "samples": args.samples,
        "classes": args.classes,
        "coupling": args.coupling,
        "noise": args.noise,
        "seed": args.seed,
    })
    print(f"wrote {args.output}: N={len(dataset)} n={len(dataset.specs)} c={dataset.num_classes} "
          f"coupling={args.coupling} seed={args.seed}")
    return EXIT_OK


def _dump_samples(model, dataset, indices, out_dir: Path) -> list[Path]:
    bad = [i for i in indices if not 0 <= i < len(dataset)]
    if bad:
        raise DataError(f"sample indices {bad} out of range [0, {len(dataset)})")
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for i in indices:
        _, _, dump = model.predict_sample(dataset.sample(i), dump=True)
        path = out_dir / f"sample_{i:05d}.json"
        path.write_text(json.dumps(dump.to_json_dict(), sort_keys=True) + "\n", encoding="utf-8")
        written.append(path)
    return written


def cmd_train(args) -> int:
    run = load_run_config(args.config, overrides={"variant": args.variant, "jobs": args.jobs})
    dataset = read_dataset(run.dataset)
    if run.raw["modalities"] is not None:
        dataset = select_modalities(dataset, run.raw["modalities"])
    check_compatible(run.model, dataset)
    bad = [i for i in run.dump_attention if i >= len(dataset)]
    if bad:
        raise ConfigError(f"dump_attention indices {bad} out of range [0, {len(dataset)})")

    out = run.output_dir
    out.mkdir(parents=True, exist_ok=True)
    report = cross_validate(dataset, run.model, run.train, jobs=run.jobs, checkpoint_dir=out, config_echo=run.raw)
    write_report(report, out / "report.json")
    if run.dump_attention:
        model = load_checkpoint(out / "fold_00.hsck")
        _dump_samples(model, dataset, run.dump_attention, out / "attention")
    print(f"{report.variant.kind}: acc {report.acc_mean:.4f} +/- {report.acc_std:.4f}, "
          f"f1 {report.f1_mean:.4f} +/- {report.f1_std:.4f} over {len(report.folds)} folds")
    return EXIT_OK


def _load_pair(checkpoint: Path, dataset_path: Path):
    model = load_checkpoint(checkpoint)
    dataset = read_dataset(dataset_path)
    names = [m.name for m in model.cfg.modalities]
    if [s.name for s in dataset.specs] != names and set(names) <= {s.name for s in dataset.specs}:
        dataset = select_modalities(dataset, names)
    check_compatible(model.cfg, dataset)
    return model, dataset


def cmd_eval(args) -> int:
    model, dataset = _load_pair(args.checkpoint, args.dataset)
    indices = None
    if args.report is not None:
        folds = read_report(args.report)["folds"]
        match = [f for f in folds if f["fold"] == args.fold]
        if not match:
            raise ConfigError(f"--fold {args.fold} is not in {args.report}")
        indices = match[0]["test_indices"]
    ev = evaluate(model, dataset, indices)
    _write_json({
        "samples": int(ev.confusion.sum()),
        "acc": ev.acc,
        "f1": ev.f1,
        "confusion": ev.confusion.tolist(),
        "hard_mae": ev.hard_mae,
        "loss": ev.loss,
    }, args.output)
    return EXIT_OK


def cmd_dump_attn(args) -> int:
    model, dataset = _load_pair(args.checkpoint, args.dataset)
    for path in _dump_samples(model, dataset, args.indices, Path(args.output)):
        print(path)
    return EXIT_OK


def tiny_config(variant: str = "husformer") -> ModelConfig:
    """Two modalities (2x4 and 3x5), D=8, two heads, one layer per stack."""
    return ModelConfig(
        modalities=[ModalitySpec("a", 2, 4, kernel_size=3), ModalitySpec("b", 3, 5, kernel_size=1)],
        hidden_dim=8, heads=2, cm_layers=1, sa_layers=1, ffn_dim=8,
        attn_dropout=0.1, output_dropout=0.1, num_classes=3, variant=variant,
    )


def run_gradcheck(cfg: ModelConfig, seed: int = 0, batch: int = 2,
                  max_params: int = GRADCHECK_MAX_PARAMS, h: float = 1e-5) -> float:
    """Full-loss gradient check of a freshly built model in eval mode."""
    model = build_variant(cfg, seed=seed)
    n_params = count_parameters(model)
    if n_params > max_params:
        raise ConfigError(f"{cfg.variant} has {n_params} parameters; gradcheck is capped at {max_params}")
    rng = np.random.default_rng(seed)
    inputs = [rng.standard_normal((batch, m.channels, m.input_dim)) for m in cfg.modalities]
    labels = rng.integers(0, cfg.num_classes, size=batch)
    err = gradient_check(lambda: mae_loss(model.forward(inputs).probabilities, labels), model.parameters(), h=h)
    logger.info("gradcheck %s: %d parameters, max relative error %.3e", cfg.variant, n_params, err)
    return err


def cmd_gradcheck(args) -> int:
    if args.config is not None:
        base = load_run_config(args.config).model
    else:
        base = tiny_config()
    variants = VARIANTS if args.all_variants else [args.variant or base.variant]
    ok = True
    for variant in variants:
        cfg = ModelConfig.from_dict({**base.to_dict(), "variant": variant})
        err = run_gradcheck(cfg, max_params=args.max_params)
        passed = err < args.tolerance
        ok = ok and passed
        print(f"{variant}: max relative error {err:.3e} {'PASS' if passed else 'FAIL'} (tolerance {args.tolerance:g})")
    return EXIT_OK if ok else EXIT_FAILURE


def cmd_compare(args) -> int:
    result = compare_reports(read_report(args.report_a), read_report(args.report_b))
    print(format_comparison(result))
    if args.output is not None:
        _write_json(result, args.output)
    return EXIT_OK


def cmd_view_attn(args) -> int:
    try:
        from PySide6.QtWidgets import QApplication
        from ui.main_window import AttentionViewer
    except ImportError:
        print("error: the attention viewer needs PySide6 and matplotlib (pip install 'modalfuse[viewer]')",
              file=sys.stderr)
        return EXIT_FAILURE

    app = QApplication.instance() or QApplication(sys.argv[:1])
    app.setApplicationName("ModalFuse Attention Viewer")
    app.setApplicationDisplayName("Attention Viewer")
    app.setOrganizationName("ModalFuse")
    window = AttentionViewer(args.dump)
    window.show()
    return app.exec()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="modalfuse", description="Multi-modal fusion transformer engine.")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic HSF1 dataset")
    p.add_argument("--modalities", type=int, default=3)
    p.add_argument("--samples", type=int, default=2000)
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--coupling", type=float, default=1.0)
    p.add_argument("--noise", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--preset", choices=preset_names())
    p.add_argument("-o", "--output", type=Path, required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="cross-validate a run config")
    p.add_argument("config", type=Path)
    p.add_argument("--variant", choices=VARIANTS)
    p.add_argument("--jobs", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p.add_argument("checkpoint", type=Path)
    p.add_argument("dataset", type=Path)
    p.add_argument("--report", type=Path, help="restrict to a fold's test indices from this report")
    p.add_argument("--fold", type=int, default=0)
    p.add_argument("-o", "--output", type=Path)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("dump-attn", help="export attention matrices for samples")
    p.add_argument("checkpoint", type=Path)
    p.add_argument("dataset", type=Path)
    p.add_argument("--indices", type=int, nargs="+", required=True)
    p.add_argument("-o", "--output", type=Path, default=Path("attention"))
    p.set_defaults(func=cmd_dump_attn)

    p = sub.add_parser("gradcheck", help="finite-difference check of the full loss gradient")
    p.add_argument("config", type=Path, nargs="?")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--variant", choices=VARIANTS)
    group.add_argument("--all-variants", action="store_true")
    p.add_argument("--max-params", type=int, default=GRADCHECK_MAX_PARAMS)
    p.add_argument("--tolerance", type=float, default=GRADCHECK_TOLERANCE)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("compare", help="Welch t-test between two reports")
    p.add_argument("report_a", type=Path)
    p.add_argument("report_b", type=Path)
    p.add_argument("-o", "--output", type=Path)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("view-attn", help="open an attention dump in the viewer")
    p.add_argument("dump", type=Path)
    p.set_defaults(func=cmd_view_attn)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except (ConfigError, DataError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (HusformerError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
