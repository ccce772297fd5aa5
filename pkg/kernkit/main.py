"""
kernkit command-line entry point.

Every subcommand resolves its RunConfig (defaults, --config file, KERNKIT_*
environment, flags), echoes it next to its outputs and maps errors to
``code: message`` lines on stderr with exit codes 1 (usage), 2 (validation)
and 3 (runtime).
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np
from pydantic import ValidationError

from kernkit import __version__
from kernkit.baselines import fit_baseline, save_baseline
from kernkit.config import ConfigManager, RunConfig
from kernkit.dataset.records import load_font_record, load_kerning_table, save_kerning_table
from kernkit.dataset.splits import load_corpus
from kernkit.dataset.synth import generate_synthetic_corpus
from kernkit.errors import CheckpointError, KernkitError, NumericError, UsageError
from kernkit.evaluation import evaluate, write_report_bundle
from kernkit.features.encoder import classifier_logits, encoder_graph, init_encoder, pretrain_encoder
from kernkit.models.pairwise import init_pairwise, pairwise_graph
from kernkit.models.setwise import init_setwise, setwise_graph
from kernkit.numerics.gradcheck import grad_check
from kernkit.numerics.params import ParameterStore
from kernkit.numerics.rng import make_rng
from kernkit.numerics.tensor import Graph, Tensor, cross_entropy, float_mode, set_float_mode
from kernkit.predictors import KerningModel, parse_methods
from kernkit.render import (
    compose_comparison,
    compose_offset_examples,
    compose_word,
    word_glyphs,
    write_gap_csv,
    write_pgm,
)
from kernkit.schemas import BaselineKind, EncoderConfig, FeatureKind, ModelKind, PairwiseConfig, SetwiseConfig
from kernkit.training.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from kernkit.training.manager import mae_loss_graph, train

logger = logging.getLogger(__name__)

GRADCHECK_TOLERANCE = 1e-5


class ArgumentParser(argparse.ArgumentParser):
    """argparse with usage problems raised as UsageError (exit 1)."""

    def error(self, message: str) -> None:
        raise UsageError(f"{self.prog}: {message}")


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with flat RunConfig keys")
    common.add_argument("--threads", type=int, help="Worker thread cap")
    common.add_argument("--float-mode", choices=["float32", "float64"], help="Float precision")
    common.add_argument("--log-level", help="Root log level (DEBUG, INFO, WARNING, ...)")
    common.add_argument("--log-file", help="Also write JSON log lines to this file")
    common.add_argument("--seed", type=int, help="Run seed")
    return common


def build_parser() -> ArgumentParser:
    common = _common_parser()
    parser = ArgumentParser(prog="kernkit", description="Learn and evaluate letter spacing (kerning).")
    parser.add_argument("--version", action="version", version=f"kernkit {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=ArgumentParser)

    p = sub.add_parser("synth", parents=[common], help="Generate a synthetic corpus")
    p.add_argument("--out", required=True, help="Corpus directory")
    p.add_argument("--n-categories", type=int)
    p.add_argument("--image-size", type=int)
    p.add_argument("--train-fonts", type=int)
    p.add_argument("--val-fonts", type=int)
    p.add_argument("--test-fonts", type=int)
    p.add_argument("--mode", choices=["A", "B"])
    p.add_argument("--fonts-per-family", type=int)
    p.add_argument("--fixed-gap", type=float)
    p.add_argument("--shapes", help="Comma-separated subset of the parametric shapes")

    p = sub.add_parser("pretrain-encoder", parents=[common], help="Pretrain and freeze the glyph encoder")
    p.add_argument("--corpus", help="Corpus directory")
    p.add_argument("--out", required=True, help="Encoder checkpoint path")
    p.add_argument("--feature-dim", type=int)
    p.add_argument("--encoder-max-epochs", type=int)
    p.add_argument("--encoder-patience", type=int)

    p = sub.add_parser("train", parents=[common], help="Train a kerning model")
    p.add_argument("--model", choices=[k.value for k in ModelKind])
    p.add_argument("--features", choices=[k.value for k in FeatureKind])
    p.add_argument("--corpus", help="Corpus directory")
    p.add_argument("--encoder", help="Encoder checkpoint (encoder features)")
    p.add_argument("--out", required=True, help="Model checkpoint path")
    p.add_argument("--log", help="Training log CSV (default: next to the checkpoint)")
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--max-epochs", type=int)

    p = sub.add_parser("fit-baseline", parents=[common], help="Fit a baseline on the training split")
    p.add_argument("--kind", required=True, choices=[k.value for k in BaselineKind])
    p.add_argument("--corpus", help="Corpus directory")
    p.add_argument("--out", required=True, help="Baseline artefact (JSON)")

    p = sub.add_parser("kern", parents=[common], help="Predict a font's kerning table")
    p.add_argument("--model", required=True, dest="checkpoint", help="Model checkpoint")
    p.add_argument("--font-dir", required=True, help="Font record directory")
    p.add_argument("--out", required=True, help="Output kerning.json")

    p = sub.add_parser("eval", parents=[common], help="Evaluate methods on a split")
    p.add_argument("--corpus", help="Corpus directory")
    p.add_argument("--methods", required=True, help="name=artifact,... (artifact: checkpoint, baseline JSON or gt)")
    p.add_argument("--out", required=True, help="Report directory")
    p.add_argument("--split", default="test", choices=["train", "val", "test"])
    p.add_argument("--pairs", type=int, default=5, help="Pairs exported with raw error distributions")

    p = sub.add_parser("render", parents=[common], help="Render a word preview as PGM")
    p.add_argument("--font-dir", required=True, help="Font record directory")
    p.add_argument("--word", required=True)
    p.add_argument("--spaces", default="gt", help="gt or a kerning.json")
    p.add_argument("--compare", help="kerning.json drawn as a second row against --spaces")
    p.add_argument("--offset", type=float, help="Draw rows at spaces -/+ this AE")
    p.add_argument("--out", required=True, help="Output PGM")

    p = sub.add_parser("gradcheck", parents=[common], help="Finite-difference gradient check")
    p.add_argument("--model", dest="gradcheck_model", required=True, choices=["pairwise", "setwise", "encoder"])
    p.add_argument("--tiny", action="store_true", help="Tiny configuration (N=4, H=8, D=8, d_model=8)")
    p.add_argument("--samples", type=int, default=32, help="Scalar parameters checked")
    return parser


# Flags that map one-to-one onto RunConfig fields
RUN_CONFIG_FLAGS = (
    "threads", "float_mode", "log_level", "log_file", "seed",
    "n_categories", "image_size", "train_fonts", "val_fonts", "test_fonts", "mode",
    "fonts_per_family", "fixed_gap", "corpus", "encoder", "feature_dim",
    "encoder_max_epochs", "encoder_patience", "model", "features", "lr", "batch_size",
    "patience", "max_epochs",
)


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    values = {name: getattr(args, name) for name in RUN_CONFIG_FLAGS if getattr(args, name, None) is not None}
    if getattr(args, "shapes", None):
        values["shapes"] = [s.strip() for s in args.shapes.split(",") if s.strip()]
    return values


def _require(value: Optional[str], flag: str) -> str:
    if not value:
        raise UsageError(f"{flag} is required")
    return value


def _output_dir(path: str) -> Path:
    target = Path(path)
    return target if target.suffix == "" else target.parent


# Subcommands

def cmd_synth(args: argparse.Namespace, cfg: RunConfig, manager: ConfigManager) -> int:
    manifest = generate_synthetic_corpus(cfg.synth_config(), args.out, threads=cfg.threads)
    manager.save_effective(cfg, args.out)
    print(f"{len(manifest.all_ids())} fonts written to {args.out}")
    return 0


def cmd_pretrain_encoder(args: argparse.Namespace, cfg: RunConfig, manager: ConfigManager) -> int:
    corpus = load_corpus(_require(cfg.corpus, "--corpus"))
    encoder_cfg = cfg.encoder_config()
    result = pretrain_encoder(
        corpus.fonts("train", threads=cfg.threads), encoder_cfg, corpus.fonts("val", threads=cfg.threads)
    )
    train_fonts = corpus.fonts("train")
    ckpt = Checkpoint(
        params=result.params,
        kind="encoder",
        config={
            "encoder": encoder_cfg.model_dump(mode="json"),
            "n_categories": train_fonts[0].n,
            "image_size": train_fonts[0].image_size,
            "best_accuracy": result.best_accuracy,
        },
        best_val_loss=1.0 - result.best_accuracy,
        epoch=result.best_epoch,
    )
    save_checkpoint(ckpt, args.out)
    manager.save_effective(cfg, _output_dir(args.out))
    print(f"held-out accuracy {result.best_accuracy:.4f} at epoch {result.best_epoch}")
    return 0


def load_encoder(path: str) -> ParameterStore:
    ckpt = load_checkpoint(path)
    if ckpt.kind != "encoder":
        raise CheckpointError(f"{path} holds a '{ckpt.kind}' checkpoint, expected an encoder")
    return ckpt.params.freeze()


def cmd_train(args: argparse.Namespace, cfg: RunConfig, manager: ConfigManager) -> int:
    train_cfg = cfg.train_config()
    corpus = load_corpus(_require(cfg.corpus, "--corpus"))
    encoder = None
    if train_cfg.features == FeatureKind.ENCODER:
        encoder = load_encoder(_require(cfg.encoder, "--encoder"))
    log_path = args.log or str(Path(args.out).with_suffix(".log.csv"))
    result = train(train_cfg, corpus, encoder=encoder, log_path=log_path, threads=cfg.threads)
    save_checkpoint(result.checkpoint, args.out)
    manager.save_effective(cfg, _output_dir(args.out))
    print(f"best validation MAE {result.checkpoint.best_val_loss:.4f} at epoch {result.best_epoch}")
    return 0


def cmd_fit_baseline(args: argparse.Namespace, cfg: RunConfig, manager: ConfigManager) -> int:
    corpus = load_corpus(_require(cfg.corpus, "--corpus"))
    baseline = fit_baseline(BaselineKind(args.kind), corpus.fonts("train", threads=cfg.threads))
    save_baseline(baseline, args.out)
    manager.save_effective(cfg, _output_dir(args.out))
    print(f"{args.kind} baseline written to {args.out}")
    return 0


def cmd_kern(args: argparse.Namespace, cfg: RunConfig, manager: ConfigManager) -> int:
    model = KerningModel(load_checkpoint(args.checkpoint), threads=cfg.threads)
    record = load_font_record(args.font_dir, require_table=False)
    save_kerning_table(model.predict(record), args.out)
    manager.save_effective(cfg, _output_dir(args.out))
    print(f"{record.n}x{record.n} table for {record.font_id} written to {args.out}")
    return 0


def cmd_eval(args: argparse.Namespace, cfg: RunConfig, manager: ConfigManager) -> int:
    corpus = load_corpus(_require(cfg.corpus, "--corpus"))
    methods = parse_methods(args.methods, threads=cfg.threads)
    report = evaluate(methods, corpus.fonts(args.split, threads=cfg.threads), threads=cfg.threads)
    write_report_bundle(report, args.out, pair_count=args.pairs)
    manager.save_effective(cfg, args.out)
    for name, method in report.methods.items():
        print(f"{name}: MAE {method.mae:.3f}, wins {method.wins}, fonts below "
              f"{report.below_threshold:g}: {method.fonts_below}")
    return 0


def cmd_render(args: argparse.Namespace, cfg: RunConfig, manager: ConfigManager) -> int:
    record = load_font_record(args.font_dir, require_table=args.spaces == "gt")
    if args.spaces == "gt":
        table = record.require_table().values
    else:
        table = load_kerning_table(args.spaces, record.labels).values
    glyphs, spaces = word_glyphs(record.glyphs, table, args.word, record.labels)
    out = Path(args.out)
    if args.compare:
        estimated = load_kerning_table(args.compare, record.labels).values
        _, est_spaces = word_glyphs(record.glyphs, estimated, args.word, record.labels)
        comparison = compose_comparison(glyphs, spaces, est_spaces)
        write_pgm(comparison.stacked, out)
        write_gap_csv(comparison, out.with_suffix(".csv"))
    elif args.offset is not None:
        write_pgm(compose_offset_examples(glyphs, spaces, args.offset), out)
    else:
        write_pgm(compose_word(glyphs, spaces), out)
    manager.save_effective(cfg, _output_dir(args.out))
    print(f"'{args.word}' rendered to {out}")
    return 0


def tiny_gradcheck(model: str, samples: int, seed: int) -> float:
    """
    Gradient check of one model on a tiny random problem (N=4, H=8, D=8, d_model=8).

    Returns:
        Max relative error over the sampled parameters
    """
    n, size, d = 4, 8, 8
    rng = make_rng(seed, "gradcheck-data", model)
    LossFn = Callable[[Graph], Tensor]
    with float_mode("float64"):
        if model == "pairwise":
            cfg = PairwiseConfig(feature_dim=d, n_categories=n, hidden=(8, 8))
            params = init_pairwise(cfg, seed)
            features = rng.normal(size=(n, d))
            first, second = np.divmod(np.arange(n * n), n)
            eye = np.eye(n)
            inputs = np.concatenate([features[first], features[second], eye[first], eye[second]], axis=1)
            targets = 3.0 * rng.normal(size=n * n)
            loss_fn: LossFn = lambda g: mae_loss_graph(pairwise_graph(g, inputs), targets)
        elif model == "setwise":
            cfg = SetwiseConfig(feature_dim=d, d_model=8, n_heads=2, ffn_dim=16, n_layers=1)
            params = init_setwise(cfg, seed)
            features = rng.normal(size=(2, n, d))
            targets = 3.0 * rng.normal(size=(2, n, n))
            loss_fn = lambda g: mae_loss_graph(setwise_graph(g, features, cfg), targets)
        else:
            cfg = EncoderConfig(feature_dim=d, channels=(2, 2, 2, 2), seed=seed)
            params = init_encoder(cfg, n)
            pixels = rng.random((3, size, size)) < 0.4
            labels = np.arange(3) % n
            loss_fn = lambda g: cross_entropy(classifier_logits(g, pixels), labels)
        return grad_check(loss_fn, params, sample_count=samples, seed=seed)


def cmd_gradcheck(args: argparse.Namespace, cfg: RunConfig, manager: ConfigManager) -> int:
    if not args.tiny:
        raise UsageError("gradcheck currently supports only --tiny")
    error = tiny_gradcheck(args.gradcheck_model, args.samples, cfg.seed)
    print(f"max relative error: {error:.3e}")
    if error > GRADCHECK_TOLERANCE:
        raise NumericError(f"gradient check failed: {error:.3e} above {GRADCHECK_TOLERANCE:g}")
    return 0


COMMANDS: Dict[str, Callable[[argparse.Namespace, RunConfig, ConfigManager], int]] = {
    "synth": cmd_synth,
    "pretrain-encoder": cmd_pretrain_encoder,
    "train": cmd_train,
    "fit-baseline": cmd_fit_baseline,
    "kern": cmd_kern,
    "eval": cmd_eval,
    "render": cmd_render,
    "gradcheck": cmd_gradcheck,
}


def _fail(error: KernkitError) -> int:
    print(error.one_line(), file=sys.stderr)
    return error.exit_code


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run one subcommand and return the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        return _fail(e)
    except SystemExit as e:
        # --help and --version
        return int(e.code or 0)
    if not args.command:
        parser.print_help(sys.stderr)
        return UsageError.exit_code

    manager = ConfigManager()
    try:
        cfg = manager.load(args.config, _overrides(args))
        manager.setup_logging(cfg.log_level, cfg.log_file)
        set_float_mode(cfg.float_mode)
        logger.debug(f"Running {args.command} with {cfg.effective()}")
        return COMMANDS[args.command](args, cfg, manager)
    except KernkitError as e:
        if e.exit_code == 3:
            logger.error(f"{args.command} failed: {e.message}", exc_info=True)
        return _fail(e)
    except ValidationError as e:
        first = e.errors()[0]
        where = ".".join(str(part) for part in first["loc"]) or e.title
        print(f"validation_error: {where}: {first['msg']}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        print("runtime_error: interrupted", file=sys.stderr)
        return 3
    except Exception as e:
        logger.error(f"Unexpected error in {args.command}: {e}", exc_info=True)
        print(f"runtime_error: {' '.join(str(e).split())}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
