"""Command-line entry point.

Sub-commands: prepare | synth | train | eval | export-embeddings.
Every value can come from a JSON config file (--config) with CLI flags
taking precedence over the file and the file over built-in defaults; each
run writes the resolved configuration next to its outputs as the audit
record. Errors exit nonzero with one machine-parseable line on stderr:
``error:<category>: <message>``.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import evaluation, pca, training
from .corpus import (
    load_corpus,
    load_frequencies,
    save_corpus,
    save_frequencies,
    sense_frequencies,
    build_partition,
)
from .errors import BisenseError, ConfigError, DataError, ResourceError
from .lexicon import LemmaKey, POS_TAGS, candidate_senses, gloss_text, load_inventory, save_inventory
from .model import (
    BiEncoderConfig,
    embed_senses,
    init_bi_encoder,
    load_model,
    save_model,
    context_forward,
)
from .encoder import pool_word
from .synth import SynthConfig, generate_synthetic
from .tokenizer import build_vocab, load_vocab, save_vocab

TRAIN_DEFAULTS = {
    "d_model": 64,
    "n_layers": 2,
    "n_heads": 4,
    "d_ff": 256,
    "dropout_rate": 0.1,
    "max_context_len": 64,
    "max_gloss_len": 32,
    "epochs": 20,
    "context_batch": 4,
    "gloss_batch": 256,
    "peak_lr": 1e-4,
    "warmup": 100,
    "weight_decay": 0.0,
    "seed": 0,
    "balanced": False,
    "tied": False,
    "freeze_ctx": False,
    "freeze_gls": False,
    "kshot": None,
    "system": "bem",
    "linear_steps": 2000,
    "linear_lr": 1e-2,
}

SYNTH_DEFAULTS = {
    "n_lemmas": 40,
    "senses_per_lemma": [2, 4],
    "zipf_exponent": 1.0,
    "vocab_size": 1200,
    "train_instances": 4000,
    "eval_instances": 800,
    "zero_shot_fraction": 0.1,
    "seed": 0,
}


def _resolve(defaults: dict, config_path: str | None, cli_values: dict) -> dict:
    merged = dict(defaults)
    if config_path:
        if not os.path.exists(config_path):
            raise ResourceError(f"config file not found: {config_path}")
        with open(config_path, encoding="utf-8") as fh:
            overlay = json.load(fh)
        unknown = set(overlay) - set(defaults)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        merged.update(overlay)
    for key, value in cli_values.items():
        if value is not None:
            merged[key] = value
    return merged


def _write_json(path: str, obj: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, ensure_ascii=False)
        fh.write("\n")


def _require(path: str, what: str) -> str:
    if not os.path.exists(path):
        raise ResourceError(f"{what} not found: {path}")
    return path


def cmd_prepare(args: argparse.Namespace) -> int:
    inv = load_inventory(_require(args.inventory, "inventory"))
    corpus = load_corpus(_require(args.train, "training corpus"), inv)
    texts = [sent.words for sent in corpus.sentences]
    texts += [gloss_text(inv, e.sense_id).split() for e in inv.entries]
    vocab = build_vocab(texts, min_freq=args.min_freq)
    save_vocab(vocab, args.out)
    _write_json(
        args.out + ".config.json",
        {"command": "prepare", "train": args.train, "inventory": args.inventory,
         "min_freq": args.min_freq, "out": args.out, "vocab_size": len(vocab)},
    )
    print(f"wrote {len(vocab)} tokens to {args.out}")
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    cfg = _resolve(SYNTH_DEFAULTS, args.config, {"seed": args.seed})
    seed = cfg.pop("seed")
    cfg["senses_per_lemma"] = tuple(cfg["senses_per_lemma"])
    synth_cfg = SynthConfig(**cfg)
    train_c, eval_c, inv = generate_synthetic(synth_cfg, seed)
    os.makedirs(args.out_dir, exist_ok=True)
    save_corpus(train_c, os.path.join(args.out_dir, "train.jsonl"))
    save_corpus(eval_c, os.path.join(args.out_dir, "eval.jsonl"))
    save_inventory(inv, os.path.join(args.out_dir, "inventory.jsonl"))
    save_frequencies(sense_frequencies(train_c), os.path.join(args.out_dir, "train_freq.json"))
    snapshot = dict(cfg)
    snapshot["senses_per_lemma"] = list(snapshot["senses_per_lemma"])
    snapshot.update({"command": "synth", "seed": seed, "out_dir": args.out_dir})
    _write_json(os.path.join(args.out_dir, "config.json"), snapshot)
    print(
        f"wrote {len(train_c.instances)} train / {len(eval_c.instances)} eval "
        f"instances, {len(inv)} senses to {args.out_dir}"
    )
    return 0


def _train_flag_values(args: argparse.Namespace) -> dict:
    return {
        "epochs": args.epochs,
        "context_batch": args.context_batch,
        "gloss_batch": args.gloss_batch,
        "peak_lr": args.peak_lr,
        "warmup": args.warmup,
        "seed": args.seed,
        "balanced": True if args.balanced else None,
        "tied": True if args.tied else None,
        "freeze_ctx": True if args.freeze_ctx else None,
        "freeze_gls": True if args.freeze_gls else None,
        "kshot": args.kshot,
        "system": args.system,
    }


def cmd_train(args: argparse.Namespace) -> int:
    cfg = _resolve(TRAIN_DEFAULTS, args.config, _train_flag_values(args))
    inv = load_inventory(_require(args.inventory, "inventory"))
    vocab = load_vocab(_require(args.vocab, "vocabulary"))
    train_c = load_corpus(_require(args.train, "training corpus"), inv,
                          max_sentence_words=cfg["max_context_len"])
    dev_c = None
    if args.dev:
        dev_c = load_corpus(_require(args.dev, "dev corpus"), inv,
                            max_sentence_words=cfg["max_context_len"])
    os.makedirs(args.out_dir, exist_ok=True)

    model_cfg = BiEncoderConfig(
        d_model=cfg["d_model"], n_layers=cfg["n_layers"], n_heads=cfg["n_heads"],
        d_ff=cfg["d_ff"], dropout_rate=cfg["dropout_rate"],
        max_context_len=cfg["max_context_len"], max_gloss_len=cfg["max_gloss_len"],
        tied=cfg["tied"], freeze_ctx=cfg["freeze_ctx"], freeze_gls=cfg["freeze_gls"],
    )
    model = init_bi_encoder(vocab, model_cfg, seed=cfg["seed"])
    freq = sense_frequencies(train_c)
    save_frequencies(freq, os.path.join(args.out_dir, "train_freq.json"))

    snapshot = dict(cfg)
    snapshot.update({"command": "train", "train": args.train, "dev": args.dev,
                     "inventory": args.inventory, "vocab": args.vocab,
                     "out_dir": args.out_dir})

    if cfg["system"] == "linear":
        train_cfg = training.TrainConfig(seed=cfg["seed"])
        head = training.train_linear_head(
            model, train_c, inv, train_cfg,
            steps=cfg["linear_steps"], lr=cfg["linear_lr"],
        )
        save_model(os.path.join(args.out_dir, "checkpoint_final.ckpt"), model, head=head)
        _write_json(os.path.join(args.out_dir, "config.json"), snapshot)
        _write_json(os.path.join(args.out_dir, "metrics.json"),
                    {"system": "linear", "head_senses": len(head.sense_ids),
                     "steps": cfg["linear_steps"]})
        print(f"trained linear head over {len(head.sense_ids)} senses -> {args.out_dir}")
        return 0
    if cfg["system"] != "bem":
        raise ConfigError(f"unknown system {cfg['system']!r}")

    train_cfg = training.TrainConfig(
        epochs=cfg["epochs"], context_batch=cfg["context_batch"],
        gloss_batch=cfg["gloss_batch"], peak_lr=cfg["peak_lr"],
        warmup_steps=cfg["warmup"], weight_decay=cfg["weight_decay"],
        seed=cfg["seed"], balanced=cfg["balanced"],
    )
    fit_corpus = train_c
    if cfg["kshot"] is not None:
        usable, _ = training._usable_instances(train_c, inv)
        full_total = cfg["epochs"] * math.ceil(len(usable) / cfg["context_batch"])
        from .corpus import kshot_filter

        fit_corpus = kshot_filter(train_c, cfg["kshot"], cfg["seed"])
        freq = sense_frequencies(fit_corpus)
        train_cfg = training.TrainConfig(
            epochs=cfg["epochs"], context_batch=cfg["context_batch"],
            gloss_batch=cfg["gloss_batch"], peak_lr=cfg["peak_lr"],
            warmup_steps=cfg["warmup"], weight_decay=cfg["weight_decay"],
            seed=cfg["seed"], balanced=cfg["balanced"],
            fixed_total_steps=full_total,
        )
        snapshot["fixed_total_steps"] = full_total

    result = training.train(model, fit_corpus, dev_c, inv, freq, train_cfg)
    state = result.state

    with open(os.path.join(args.out_dir, "loss_trace.csv"), "w", encoding="utf-8") as fh:
        fh.write("step,loss\n")
        for i, loss in enumerate(state.loss_trace):
            fh.write(f"{i},{loss!r}\n")
    with open(os.path.join(args.out_dir, "dev_trace.csv"), "w", encoding="utf-8") as fh:
        fh.write("epoch,f1\n")
        for epoch, f1 in state.dev_trace:
            fh.write(f"{epoch},{f1!r}\n")
    save_model(os.path.join(args.out_dir, "checkpoint_final.ckpt"), result.model,
               extra_meta={"train_config": train_cfg.to_dict()})
    save_model(os.path.join(args.out_dir, "checkpoint_best.ckpt"), result.best_model(),
               extra_meta={"train_config": train_cfg.to_dict(),
                           "best_dev_f1": state.best_dev if state.dev_trace else None})
    training.save_train_state(os.path.join(args.out_dir, "train_state.ckpt"),
                              result.model, state, train_cfg)
    _write_json(os.path.join(args.out_dir, "config.json"), snapshot)
    metrics = {
        "system": "bem",
        "total_steps": state.step,
        "fixed_total_steps": train_cfg.fixed_total_steps,
        "final_loss": state.loss_trace[-1] if state.loss_trace else None,
        "skipped_instances": state.skipped,
        "dev_f1_first": state.dev_trace[0][1] if state.dev_trace else None,
        "dev_f1_final": state.dev_trace[-1][1] if state.dev_trace else None,
        "best_dev_f1": state.best_dev if state.dev_trace else None,
    }
    _write_json(os.path.join(args.out_dir, "metrics.json"), metrics)
    print(f"trained {state.step} steps -> {args.out_dir}")
    return 0


def _load_train_freq(path: str):
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
    try:
        header = json.loads(first)
    except json.JSONDecodeError:
        header = {}
    if isinstance(header, dict) and header.get("format") == "wsd-corpus":
        raise ConfigError(
            "--train-freq expects a sense-frequencies JSON file; "
            "run `bisense train` (which writes train_freq.json) or "
            "`bisense synth` first"
        )
    return load_frequencies(path)


def cmd_eval(args: argparse.Namespace) -> int:
    inv = load_inventory(_require(args.inventory, "inventory"))
    train_freq = _load_train_freq(_require(args.train_freq, "training frequencies"))
    model = head = None
    system = args.baseline
    if args.model:
        vocab = load_vocab(_require(args.vocab, "vocabulary"))
        model, head, _ = load_model(_require(args.model, "model checkpoint"), vocab)
        if system is None:
            system = "linear" if head is not None else "bem"
    if system is None:
        raise ConfigError("need --model and/or --baseline {s1,mfs,linear}")
    if system == "linear" and head is None:
        raise ConfigError("--baseline linear needs --model with a linear checkpoint")
    if system in ("bem",) and model is None:
        raise ConfigError("--model is required to evaluate the bi-encoder")

    os.makedirs(args.out, exist_ok=True)
    reports: dict[str, evaluation.EvalReport] = {}
    all_report = None
    seen_names = set()
    for path in args.eval:
        eval_c = load_corpus(_require(path, "eval corpus"), inv)
        name = eval_c.name
        if name in seen_names:
            raise DataError(f"duplicate eval corpus name {name!r}")
        seen_names.add(name)
        part = build_partition(eval_c, train_freq, None, inv)
        preds = evaluation.run_system(
            system, eval_c, inv=inv, train_freq=train_freq, model=model, head=head
        )
        evaluation.save_predictions(preds, os.path.join(args.out, f"preds_{name}.txt"))
        rep = evaluation.score(preds, eval_c, part)
        reports[name] = rep
        all_report = rep if all_report is None else all_report + rep
    reports["ALL"] = all_report
    _write_json(
        os.path.join(args.out, "report.json"),
        {"system": system, "datasets": {n: r.to_dict() for n, r in reports.items()}},
    )
    table = evaluation.render_report(reports)
    with open(os.path.join(args.out, "report.txt"), "w", encoding="utf-8") as fh:
        fh.write(table)
    _write_json(
        os.path.join(args.out, "config.json"),
        {"command": "eval", "system": system, "model": args.model,
         "baseline": args.baseline, "eval": list(args.eval),
         "train_freq": args.train_freq, "inventory": args.inventory,
         "vocab": args.vocab, "out": args.out},
    )
    print(table, end="")
    return 0


def cmd_export_embeddings(args: argparse.Namespace) -> int:
    inv = load_inventory(_require(args.inventory, "inventory"))
    vocab = load_vocab(_require(args.vocab, "vocabulary"))
    model, _, _ = load_model(_require(args.model, "model checkpoint"), vocab)
    corpus = load_corpus(_require(args.corpus, "corpus"), inv)

    lemma, _, pos = args.lemma.partition(":")
    lemma = lemma.casefold()
    if pos and pos not in POS_TAGS:
        raise ConfigError(f"pos must be one of {POS_TAGS}, got {pos!r}")
    pos_list = (pos,) if pos else POS_TAGS
    keys = [LemmaKey(lemma, p) for p in pos_list if inv.has_lemma(LemmaKey(lemma, p))]
    mentions = [
        inst for inst in corpus.instances
        if inst.lemma_key.lemma == lemma and (not pos or inst.lemma_key.pos == pos)
    ]
    if not keys and not mentions:
        raise DataError(f"lemma {args.lemma!r} not found in corpus or inventory")

    rows = []
    for inst in mentions:
        words = corpus.sentences[inst.sentence_index].words
        rec, encoded = context_forward(model, [words])
        if inst.token_index >= len(encoded[0].word_spans):
            continue
        vec = pool_word(rec.hidden[0], encoded[0].word_spans[inst.token_index])
        rows.append({"id": inst.instance_id, "kind": "context",
                     "label": inst.gold[0], "vector": vec})
    senses = [s for key in keys for s in candidate_senses(inv, key)]
    sense_vecs = embed_senses(model, senses, inv)
    for s in senses:
        rows.append({"id": s, "kind": "sense", "label": s, "vector": sense_vecs[s]})
    if not rows:
        raise DataError(f"no embeddable rows for lemma {args.lemma!r}")

    coords = None
    if args.project == "pca2":
        mat = np.stack([r["vector"] for r in rows])
        comps, mean = pca.fit_pca(mat, 2)
        coords = pca.project(mat, comps, mean)
    header = {
        "format": "embedding-dump", "version": 1,
        "d_model": model.cfg.d_model, "lemma": args.lemma,
        "projection": args.project,
        "rows": len(rows),
    }
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for i, r in enumerate(rows):
            rec = {"id": r["id"], "kind": r["kind"], "label": r["label"],
                   "vector": [float(x) for x in r["vector"]]}
            if coords is not None:
                rec["xy"] = [float(coords[i, 0]), float(coords[i, 1])]
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    _write_json(
        args.out + ".config.json",
        {"command": "export-embeddings", "model": args.model, "corpus": args.corpus,
         "lemma": args.lemma, "inventory": args.inventory, "vocab": args.vocab,
         "project": args.project, "out": args.out},
    )
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bisense",
        description="Bi-encoder word sense disambiguation toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="build a subword vocabulary")
    p.add_argument("--train", required=True)
    p.add_argument("--inventory", required=True)
    p.add_argument("--min-freq", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("synth", help="generate a seeded synthetic benchmark")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train the bi-encoder (or the linear baseline)")
    p.add_argument("--train", required=True)
    p.add_argument("--dev")
    p.add_argument("--inventory", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--config")
    p.add_argument("--balanced", action="store_true", default=False)
    p.add_argument("--tied", action="store_true", default=False)
    p.add_argument("--freeze-ctx", action="store_true", default=False)
    p.add_argument("--freeze-gls", action="store_true", default=False)
    p.add_argument("--kshot", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--context-batch", type=int)
    p.add_argument("--gloss-batch", type=int)
    p.add_argument("--peak-lr", type=float)
    p.add_argument("--warmup", type=int)
    p.add_argument("--system", choices=["bem", "linear"])
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a system on evaluation corpora")
    p.add_argument("--model")
    p.add_argument("--baseline", choices=["s1", "mfs", "linear"])
    p.add_argument("--eval", nargs="+", required=True)
    p.add_argument("--train-freq", required=True)
    p.add_argument("--inventory", required=True)
    p.add_argument("--vocab")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("export-embeddings", help="dump context and sense vectors")
    p.add_argument("--model", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--lemma", required=True, help="lemma or lemma:pos")
    p.add_argument("--inventory", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--project", choices=["pca2"])
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_embeddings)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except BisenseError as exc:
        sys.stderr.write(f"error:{exc.category}: {exc}\n")
        return 1
    except FileNotFoundError as exc:
        sys.stderr.write(f"error:resource: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
