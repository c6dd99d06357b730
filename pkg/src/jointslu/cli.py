"""Command-line entry point: train, eval, predict, gradcheck, graph-dump.

Exit codes: 0 success, 1 runtime failure, 2 usage / config / input error.
"""

from __future__ import annotations

import argparse
import contextlib
import dataclasses
import json
import logging
import sys
from pathlib import Path

from .config import TrainConfig
from .corpus import DatasetParseError, generate_synthetic, read_dataset
from .graphs import build_i2s_graph, build_s2i_graph, edge_list_text
from .train import evaluate, fit, grad_check, load_model, micro_config, save_model

log = logging.getLogger("jointslu")

PATH_KEYS = ("train", "dev", "test", "out_dir", "checkpoint")
SYNTHETIC_TEMPLATES = 6


class UsageError(Exception):
    """Bad flags, config or input files; maps to exit code 2."""


# -- config assembly ---------------------------------------------------------
def _coerce(field: dataclasses.Field, raw: str):
    kind = field.type if isinstance(field.type, str) else field.type.__name__
    if kind == "bool":
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise UsageError(f"{field.name}: expected a boolean, got {raw!r}")
    try:
        return {"int": int, "float": float}.get(kind, str)(raw)
    except ValueError:
        raise UsageError(f"{field.name}: cannot parse {raw!r} as {kind}") from None


def load_settings(args, base: TrainConfig | None = None) -> tuple[TrainConfig, dict]:
    """Merge ``base`` (defaults if None), config file, ``--set`` overrides and
    dedicated flags, in that order. Returns the config plus the path settings.
    """
    rec: dict = base.to_dict() if base is not None else {}
    if args.config:
        try:
            loaded = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise UsageError(f"config file not found: {args.config}") from None
        except json.JSONDecodeError as e:
            raise UsageError(f"config file {args.config} is not valid JSON: {e}") from None
        if not isinstance(loaded, dict):
            raise UsageError("config file must hold a JSON object")
        rec.update(loaded)
    paths = {k: rec.pop(k) for k in PATH_KEYS if k in rec}
    fields = {f.name: f for f in dataclasses.fields(TrainConfig)}
    for item in getattr(args, "set", None) or []:
        key, sep, raw = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        if key not in fields:
            raise UsageError(f"unknown config key: {key}")
        rec[key] = _coerce(fields[key], raw)
    flag_map = {
        "seed": "seed", "window": "window", "queue_size": "queue_size",
        "lambda_i": "lambda_i", "lambda_s": "lambda_s", "epochs": "epochs",
    }
    for attr, key in flag_map.items():
        value = getattr(args, attr, None)
        if value is not None:
            rec[key] = value
    if getattr(args, "no_scl", False):
        rec["scl_enabled"] = False
    for key in PATH_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            paths[key] = str(value)
    try:
        config = TrainConfig.from_dict(rec)
    except (TypeError, ValueError) as e:
        raise UsageError(f"invalid config: {e}") from None
    return config, paths


def _read(path, lowercase: bool):
    try:
        return read_dataset(path, lowercase=lowercase)
    except FileNotFoundError:
        raise UsageError(f"dataset not found: {path}") from None
    except DatasetParseError as e:
        raise UsageError(f"{path}: {e}") from None


def _synthetic_splits(seed: int, n_train: int):
    return (
        generate_synthetic(SYNTHETIC_TEMPLATES, n_train, seed),
        generate_synthetic(SYNTHETIC_TEMPLATES, max(n_train // 4, 1), seed + 1),
        generate_synthetic(SYNTHETIC_TEMPLATES, max(n_train // 4, 1), seed + 2),
    )


# -- commands ----------------------------------------------------------------
def cmd_train(args) -> int:
    config, paths = load_settings(args)
    if "out_dir" not in paths:
        raise UsageError("train needs an output directory (--out-dir or out_dir in the config)")
    out = Path(paths["out_dir"])
    if args.synthetic:
        train, dev, test = _synthetic_splits(config.seed, args.synthetic_samples)
    else:
        if "train" not in paths:
            raise UsageError("train needs --train FILE or --synthetic")
        train = _read(paths["train"], config.lowercase)
        dev = _read(paths["dev"], config.lowercase) if "dev" in paths else None
        test = _read(paths["test"], config.lowercase) if "test" in paths else None
    if not train:
        raise UsageError("training set is empty")
    out.mkdir(parents=True, exist_ok=True)
    effective = {**config.to_dict(), **{k: v for k, v in paths.items() if k != "checkpoint"}}
    if args.synthetic:
        effective["synthetic_samples"] = args.synthetic_samples
    (out / "config.json").write_text(json.dumps(effective, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    state = fit(config, train, dev=dev, out_dir=out)
    if state.best_params is not None:
        state.model.params.load_arrays(state.best_params)
    else:  # zero epochs: keep the initial parameters as the checkpoint
        save_model(out / "best.ckpt", state.model, state.vocab)
    split, name = (test, "test") if test else ((dev, "dev") if dev else (train, "train"))
    report = evaluate(state.model, state.vocab, split)
    (out / "report.json").write_text(report.to_json() + "\n", encoding="utf-8")
    print(f"best epoch {state.best_epoch}, {name} split:")
    print(report.to_text())
    return 0


def _load_checkpoint(path):
    if not path:
        raise UsageError("--checkpoint is required")
    try:
        return load_model(path)
    except FileNotFoundError as e:
        raise UsageError(str(e)) from None


def cmd_eval(args) -> int:
    _, paths = load_settings(args)
    model, vocab = _load_checkpoint(paths.get("checkpoint"))
    path = paths.get("test") or paths.get("dev") or paths.get("train")
    if not path:
        raise UsageError("eval needs a dataset (--test, --dev or --train)")
    samples = _read(path, vocab.lowercase)
    report = evaluate(model, vocab, samples)
    print(report.to_text())
    print(report.to_json())
    return 0


def _utterances(args):
    if args.text:
        yield " ".join(args.text)
        return
    opened = open(args.input, encoding="utf-8") if args.input else contextlib.nullcontext(sys.stdin)
    with opened as stream:
        yield from stream


def cmd_predict(args) -> int:
    _, paths = load_settings(args)
    model, vocab = _load_checkpoint(paths.get("checkpoint"))
    if args.input and not Path(args.input).exists():
        raise UsageError(f"input file not found: {args.input}")
    for line in _utterances(args):
        tokens = line.split()
        if not tokens:
            continue
        pred = model.predict(vocab.word_ids(tokens))
        rec = {
            "tokens": tokens,
            "intents": sorted(vocab.intent_index.item(j) for j in pred.intents),
            "slots": [vocab.slot_index.item(j) for j in pred.slots],
        }
        print(json.dumps(rec))
    return 0


def cmd_gradcheck(args) -> int:
    seed = args.seed if args.seed is not None else 0
    config, _ = load_settings(args, base=micro_config(seed))
    report = grad_check(config=config, seed=seed, n_params=args.n_params, tolerance=args.tolerance)
    print(report.to_text(per_term=args.per_term))
    return 0 if report.passed else 1


def cmd_graph_dump(args) -> int:
    if args.n < 1 or args.m < 1 or args.w < 0:
        raise UsageError("graph-dump needs n >= 1, m >= 1, w >= 0")
    labels = not args.numeric
    print(f"# S2I graph n={args.n} w={args.w}")
    print(edge_list_text(build_s2i_graph(args.n, args.w), labels=labels))
    print(f"# I2S graph n={args.n} m={args.m} w={args.w}")
    print(edge_list_text(build_i2s_graph(args.n, args.m, args.w), labels=labels))
    return 0


# -- parser ------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="jointslu", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_flags(p):
        p.add_argument("--config", help="JSON file of config fields and paths")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any config field")
        p.add_argument("--seed", type=int)

    p = sub.add_parser("train", help="train a model and write checkpoint, losses and report")
    add_config_flags(p)
    p.add_argument("--train")
    p.add_argument("--dev")
    p.add_argument("--test")
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--synthetic", action="store_true", help="train on generated data")
    p.add_argument("--synthetic-samples", type=int, default=20, help="training utterances for --synthetic")
    p.add_argument("--no-scl", action="store_true", help="drop the contrastive terms")
    p.add_argument("--window", type=int)
    p.add_argument("--queue-size", dest="queue_size", type=int)
    p.add_argument("--lambda-i", dest="lambda_i", type=float)
    p.add_argument("--lambda-s", dest="lambda_s", type=float)
    p.add_argument("--epochs", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p.add_argument("--config", help="JSON file; only its path keys are used")
    p.add_argument("--checkpoint")
    p.add_argument("--test")
    p.add_argument("--dev")
    p.add_argument("--train")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="predict intents and slots for whitespace-tokenized text")
    p.add_argument("--config", help="JSON file; only its path keys are used")
    p.add_argument("--checkpoint")
    p.add_argument("--input", help="file with one utterance per line (default: stdin)")
    p.add_argument("text", nargs="*", help="a single utterance")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("gradcheck", help="finite-difference check of every loss term")
    add_config_flags(p)
    p.add_argument("--per-term", action="store_true")
    p.add_argument("--n-params", type=int, default=240)
    p.add_argument("--tolerance", type=float, default=1e-4, help="max relative error to pass")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("graph-dump", help="print the S2I and I2S edge lists")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m", type=int, default=1)
    p.add_argument("--w", type=int, default=1)
    p.add_argument("--numeric", action="store_true", help="print 'src dst relation' rows")
    p.set_defaults(func=cmd_graph_dump)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001 - report and map to the runtime exit code
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
