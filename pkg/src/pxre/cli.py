"""Command-line entry point.

Subcommands: render, pretrain, train, eval, zeroshot, build-dataset,
validate, report. Exit codes: 0 success, 1 domain error, 2 usage error.
Structured logs go to stderr (JSON lines with --log-json); every
artifact-producing run writes a manifest.json next to its outputs.

The PXRE_CACHE environment variable names the default checkpoint/cache
directory used when --out is omitted for training subcommands.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import corpus as corpus_mod
from .data import AUTO, DataFormatError, load_jsonl, split_counts, validate
from .experiment import (
    ExperimentConfig,
    build_model,
    evaluate,
    select_checkpoint,
    train,
    zero_shot_eval,
)
from .langs import DEFAULT_LANGUAGES
from .manifest import RunManifest
from .model import BackboneConfig, TransformerBackbone
from .reporting import emit_report
from .templates import get_template, load_template_file, render, wrap_language_ids

log = logging.getLogger("pxre")

DOMAIN_ERRORS = (ValueError, RuntimeError, OSError, KeyError)


class _JsonFormatter(logging.Formatter):
    def format(self, record: logging.LogRecord) -> str:
        payload = {
            "level": record.levelname.lower(),
            "name": record.name,
            "message": record.getMessage(),
        }
        return json.dumps(payload, ensure_ascii=False)


def _setup_logging(json_logs: bool) -> None:
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(
        _JsonFormatter() if json_logs else logging.Formatter("%(levelname)s %(message)s")
    )
    root = logging.getLogger("pxre")
    root.handlers[:] = [handler]
    root.setLevel(logging.INFO)


def cache_dir() -> Path:
    return Path(os.environ.get("PXRE_CACHE", "~/.cache/pxre")).expanduser()


def _langs(value: str) -> tuple[str, ...]:
    return tuple(x.strip() for x in value.split(",") if x.strip())


# ---------------------------------------------------------------------------
# subcommands


def cmd_validate(args) -> int:
    ds = load_jsonl(args.data, AUTO)
    violations = validate(ds)
    if violations:
        for v in violations[:20]:
            print(v, file=sys.stderr)
        log.error("%d violation(s) in %s", len(violations), args.data)
        return 1
    log.info("%s: %d instances, %d labels, no violations", args.data, len(ds), len(ds.label_space))
    return 0


def cmd_render(args, argv) -> int:
    ds = load_jsonl(args.data, AUTO)
    if args.template_file:
        template = load_template_file(args.template_file, Path(args.template_file).stem)
    else:
        template = get_template(args.template)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(argv)
    manifest.add_input(args.data)
    out_path = out_dir / "rendered.jsonl"
    with out_path.open("w", encoding="utf-8") as fh:
        for inst in ds:
            pair = render(template, inst)
            if not args.no_lang_ids:
                pair = wrap_language_ids(pair, inst.lang, args.languages)
            fh.write(
                json.dumps(
                    {
                        "id": inst.id,
                        "template": template.name,
                        "lang": inst.lang,
                        "enc_tokens": list(pair.enc_tokens),
                        "dec_tokens": list(pair.dec_tokens),
                        "enc_mask_positions": list(pair.enc_mask_positions),
                        "dec_mask_positions": list(pair.dec_mask_positions),
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )
    manifest.add_artifact(out_path)
    manifest.write(out_dir)
    log.info("rendered %d instances with %s -> %s", len(ds), template.name, out_path)
    return 0


def cmd_pretrain(args, argv) -> int:
    from .checkpoint import save_backbone
    from .pretrain import build_pretrain_vocab, pretrain

    corpus_dir = Path(args.corpus)
    corpus: dict[str, list[list[str]]] = {}
    for path in sorted(corpus_dir.glob("*.txt")):
        lang = path.stem
        corpus[lang] = [
            line.split() for line in path.read_text(encoding="utf-8").splitlines() if line.strip()
        ]
    if not corpus:
        raise DataFormatError(f"no *.txt corpus files found in {corpus_dir}")
    languages = tuple(sorted(set(DEFAULT_LANGUAGES) | set(corpus)))
    vocab = build_pretrain_vocab(corpus, languages)
    config = BackboneConfig(
        d_model=args.d_model,
        n_layers_enc=args.layers,
        n_layers_dec=args.layers,
        n_heads=args.heads,
        ffn_width=args.ffn_width,
        max_len=args.max_len,
        seed=args.seed,
    )
    model = TransformerBackbone(config, vocab)
    losses = pretrain(model, corpus, steps=args.steps, seed=args.seed, batch_size=args.batch_size, lr=args.lr)

    out_dir = Path(args.out) if args.out else cache_dir() / "pretrain"
    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt = out_dir / "backbone.ckpt"
    save_backbone(model, ckpt)
    (out_dir / "losses.json").write_text(json.dumps(losses) + "\n", encoding="utf-8")
    manifest = RunManifest(argv, seed=args.seed)
    manifest.add_input(args.corpus)
    manifest.add_artifact(ckpt)
    manifest.add_artifact(out_dir / "losses.json")
    manifest.write(out_dir)
    log.info(
        "pretrained %d steps: loss %.4f -> %.4f; checkpoint at %s",
        len(losses), losses[0], losses[-1], ckpt,
    )
    return 0


def parse_config_file(path) -> dict:
    """Flat ``key = value`` text config, UTF-8; # starts a (line or inline) comment."""
    path = Path(path)
    if not path.exists():
        raise DataFormatError(f"config file not found: {path}")
    out: dict[str, str] = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise DataFormatError(f"{path}:{lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        if " #" in value:
            value = value[: value.index(" #")]
        out[key.strip()] = value.strip()
    return out


_BOOL = {"true": True, "false": False, "1": True, "0": False, "yes": True, "no": False}


def experiment_config_from_file(path) -> tuple[ExperimentConfig, dict]:
    raw = parse_config_file(path)
    backbone_keys = {
        "d_model": int, "n_layers_enc": int, "n_layers_dec": int, "n_heads": int,
        "ffn_width": int, "max_len": int, "dropout": float,
    }
    bb_kwargs = {k: fn(raw.pop(k)) for k, fn in backbone_keys.items() if k in raw}
    cfg_kwargs: dict = {}
    casts = {
        "template": str, "head_mode": str, "pooling": str, "source_lang": str,
        "template_file": str, "backbone_checkpoint": str,
        "lr": float, "batch_size": int, "max_epochs": int, "seed": int,
        "eval_lang_id_mode": str,
    }
    for key, fn in casts.items():
        if key in raw:
            cfg_kwargs[key] = fn(raw.pop(key))
    if "target_langs" in raw:
        cfg_kwargs["target_langs"] = _langs(raw.pop("target_langs"))
    if "languages" in raw:
        cfg_kwargs["languages"] = _langs(raw.pop("languages"))
    if "language_id_wrapping" in raw:
        cfg_kwargs["language_id_wrapping"] = _BOOL[raw.pop("language_id_wrapping").lower()]
    seed = cfg_kwargs.get("seed", 0)
    if "backbone_seed" in raw:
        bb_kwargs["seed"] = int(raw.pop("backbone_seed"))
    else:
        bb_kwargs.setdefault("seed", seed)
    cfg_kwargs["backbone"] = BackboneConfig(**bb_kwargs)
    extras = {
        k: raw.pop(k)
        for k in ("train_data", "dev_data", "test_data", "out", "name")
        if k in raw
    }
    if raw:
        raise DataFormatError(f"{path}: unknown config keys: {sorted(raw)}")
    return ExperimentConfig(**cfg_kwargs), extras


def cmd_train(args, argv) -> int:
    from .checkpoint import save_model

    config, extras = experiment_config_from_file(args.config)
    train_path = args.train_data or extras.get("train_data")
    dev_path = args.dev_data or extras.get("dev_data")
    if not train_path or not dev_path:
        raise DataFormatError(
            "train_data and dev_data must be given (config keys or flags)"
        )
    train_ds = load_jsonl(train_path, AUTO, split="train")
    dev_ds = load_jsonl(dev_path, train_ds.label_space, split="dev")

    ckpts = train(config, train_ds, dev_ds)
    best = select_checkpoint(ckpts)
    model = build_model(ckpts, best, name=extras.get("name", "model"))

    out_dir = Path(args.out or extras.get("out") or cache_dir() / "train")
    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt_path = out_dir / "model.ckpt"
    save_model(model, ckpt_path)
    epochs = [
        {"epoch": c.epoch, "dev_loss": c.dev_loss} for c in ckpts.checkpoints
    ]
    (out_dir / "epochs.json").write_text(
        json.dumps({"selected": best.epoch, "epochs": epochs}, indent=2) + "\n",
        encoding="utf-8",
    )
    manifest = RunManifest(argv, seed=config.seed, config_fingerprint=config.fingerprint())
    for p in (args.config, train_path, dev_path):
        manifest.add_input(p)
    manifest.add_artifact(ckpt_path)
    manifest.add_artifact(out_dir / "epochs.json")
    manifest.write(out_dir)
    log.info("selected epoch %d (dev loss %.4f); model at %s", best.epoch, best.dev_loss, ckpt_path)
    return 0


def cmd_eval(args, argv) -> int:
    from .checkpoint import load_model

    model = load_model(args.model)
    ds = load_jsonl(args.data, model.label_space, split="test")
    report = evaluate(model, ds)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    emit_report([report], "json", out_dir / "report.json")
    emit_report([report], "md", out_dir / "report.md")
    manifest = RunManifest(argv, config_fingerprint=report.config_fingerprint)
    manifest.add_input(args.model)
    manifest.add_input(args.data)
    manifest.add_artifact(out_dir / "report.json")
    manifest.add_artifact(out_dir / "report.md")
    manifest.write(out_dir)
    print(emit_report([report], "md"), end="")
    return 0


def _target_path(args, lang: str) -> Path:
    if args.data:
        return Path(args.data.replace("{lang}", lang))
    base = Path(args.data_dir)
    for candidate in (base / f"{lang}.jsonl", base / lang / "test.jsonl"):
        if candidate.exists():
            return candidate
    raise DataFormatError(f"no test data for target language {lang!r} under {base}")


def cmd_zeroshot(args, argv) -> int:
    from .checkpoint import load_model

    model = load_model(args.model)
    targets = _langs(args.targets)
    datasets = [
        load_jsonl(_target_path(args, lang), model.label_space, split="test")
        for lang in targets
    ]
    reports = zero_shot_eval(model.config, model, datasets)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    emit_report(reports, "json", out_dir / "reports.json")
    emit_report(reports, "md", out_dir / "reports.md")
    manifest = RunManifest(argv, config_fingerprint=model.config.fingerprint())
    manifest.add_input(args.model)
    for lang in targets:
        manifest.add_input(_target_path(args, lang))
    manifest.add_artifact(out_dir / "reports.json")
    manifest.add_artifact(out_dir / "reports.md")
    manifest.write(out_dir)
    print(emit_report(reports, "md"), end="")
    return 0


def cmd_build_dataset(args, argv) -> int:
    sentences = corpus_mod.ingest_conllu(args.conllu)
    target_lines = [
        ln for ln in Path(args.target).read_text(encoding="utf-8").splitlines()
    ]
    records = corpus_mod.pair_records(sentences, target_lines)
    lexicon = corpus_mod.load_lexicon(args.lexicon) if args.lexicon else {}
    triples: list = []
    for sent in sentences:
        triples.extend(corpus_mod.extract_triples(sent))
    triples = corpus_mod.with_relation_keys(triples, lexicon)
    kept, label_space = corpus_mod.select_top_k(triples, args.k)
    instances, stats = corpus_mod.build_instances(records, kept, target_lang=args.target_lang)
    ratios = tuple(float(x) for x in args.ratios.split(","))
    report = corpus_mod.split_emit(
        instances,
        label_space,
        ratios,
        args.seed,
        args.out,
        dataset_name=args.name,
        target_lang=args.target_lang,
        extra_report={"k": args.k, **stats},
    )
    manifest = RunManifest(argv, seed=args.seed)
    manifest.add_input(args.conllu)
    manifest.add_input(args.target)
    if args.lexicon:
        manifest.add_input(args.lexicon)
    for split in ("train", "dev", "test"):
        manifest.add_artifact(Path(args.out) / f"{split}.jsonl")
    manifest.add_artifact(Path(args.out) / "build_report.json")
    manifest.write(args.out)
    log.info(
        "built %d instances (%d label-only), splits %s",
        report["n_instances"], report["n_label_only"], report["counts"],
    )
    return 0


def cmd_report_splits(args) -> int:
    base = Path(args.data)
    files = sorted(base.glob("**/*.jsonl"))
    if not files:
        raise DataFormatError(f"no .jsonl files under {base}")
    datasets = [load_jsonl(p, AUTO, name=p.parent.name if p.parent != base else base.name, split=p.stem) for p in files]
    counts = split_counts(datasets)
    print("| Dataset | Lang | Split | Instances |")
    print("|---|---|---|---|")
    for (name, lang, split), n in counts.items():
        print(f"| {name} | {lang} | {split} | {n} |")
    return 0


def cmd_report_evals(args) -> int:
    from .reporting import reports_from_json

    base = Path(args.indir)
    reports = []
    for path in sorted(base.glob("**/*.json")):
        if path.name in ("manifest.json", "build_report.json", "epochs.json", "losses.json"):
            continue
        try:
            reports.extend(reports_from_json(path.read_text(encoding="utf-8")))
        except (json.JSONDecodeError, ValueError, KeyError):
            continue
    if not reports:
        raise DataFormatError(f"no evaluation reports found under {base}")
    print(emit_report(reports, args.format), end="")
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pxre",
        description="Prompt-template relation extraction: training, zero-shot "
        "cross-lingual evaluation, and dataset construction.",
    )
    parser.add_argument("--log-json", action="store_true", help="JSON logs on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="validate a JSONL dataset")
    p.add_argument("--data", required=True)

    p = sub.add_parser("render", help="render instances through a template")
    p.add_argument("--template", default="Prompt_1")
    p.add_argument("--template-file")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--no-lang-ids", action="store_true")
    p.add_argument("--languages", type=_langs, default=DEFAULT_LANGUAGES)

    p = sub.add_parser("pretrain", help="toy denoising pretraining")
    p.add_argument("--corpus", required=True, help="directory of <lang>.txt files")
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.add_argument("--d-model", type=int, default=64)
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--heads", type=int, default=4)
    p.add_argument("--ffn-width", type=int, default=128)
    p.add_argument("--max-len", type=int, default=256)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--lr", type=float, default=1e-3)

    p = sub.add_parser("train", help="fine-tune on a source-language dataset")
    p.add_argument("--config", required=True)
    p.add_argument("--train-data")
    p.add_argument("--dev-data")
    p.add_argument("--out")

    p = sub.add_parser("eval", help="evaluate a trained model on one dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("zeroshot", help="zero-shot transfer to target languages")
    p.add_argument("--model", required=True)
    p.add_argument("--targets", required=True, help="comma-separated language codes")
    p.add_argument("--data-dir", default=".", help="directory with <lang>.jsonl test sets")
    p.add_argument("--data", help="path pattern with a {lang} placeholder")
    p.add_argument("--out", required=True)

    p = sub.add_parser("build-dataset", help="build an XRE dataset from a parallel corpus")
    p.add_argument("--conllu", required=True)
    p.add_argument("--target", required=True, help="line-aligned target-language text")
    p.add_argument("--k", type=int, default=106)
    p.add_argument("--ratios", default="0.9424,0.0225,0.0351")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out", required=True)
    p.add_argument("--lexicon", help="2-column TSV: form<TAB>lemma")
    p.add_argument("--target-lang", default="zh")
    p.add_argument("--name", default="built")

    p = sub.add_parser("report", help="tabulate split counts or evaluation reports")
    rsub = p.add_subparsers(dest="what")
    ps = rsub.add_parser("splits")
    ps.add_argument("--data", required=True)
    pe = rsub.add_parser("evals")
    pe.add_argument("--in", dest="indir", required=True)
    pe.add_argument("--format", choices=("md", "json"), default="md")
    # train_eval-style shorthand: `report --in DIR --format md`
    p.add_argument("--in", dest="indir")
    p.add_argument("--format", choices=("md", "json"), default="md")

    return parser


def dispatch(argv: list[str]) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _setup_logging(args.log_json)
    try:
        if args.command == "validate":
            return cmd_validate(args)
        if args.command == "render":
            return cmd_render(args, argv)
        if args.command == "pretrain":
            return cmd_pretrain(args, argv)
        if args.command == "train":
            return cmd_train(args, argv)
        if args.command == "eval":
            return cmd_eval(args, argv)
        if args.command == "zeroshot":
            return cmd_zeroshot(args, argv)
        if args.command == "build-dataset":
            return cmd_build_dataset(args, argv)
        if args.command == "report":
            if getattr(args, "what", None) == "splits":
                return cmd_report_splits(args)
            if getattr(args, "what", None) == "evals" or args.indir:
                return cmd_report_evals(args)
            parser.error("report requires 'splits', 'evals', or --in")
        parser.error(f"unknown command {args.command!r}")
    except DOMAIN_ERRORS as exc:
        log.error("%s", exc)
        return 1
    return 0


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
