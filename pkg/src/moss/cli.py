"""Command line entry points: data generation, training, evaluation, ablation
sweeps, error reports, and an interactive chat loop.

Every command prints its resolved configuration before acting so a run can be
reproduced from its log. Exit codes: 0 ok, 2 usage, 3 data problems, 4
runtime failures. MOSS_LOG={quiet|info|debug} controls verbosity.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

from .corpus import (CorpusError, Vocab, build_vocab, load_corpus,
                     save_corpus, state_summary, GO)
from .evaluation import (EvaluationError, error_report, evaluate,
                         save_error_report)
from .kb import KbError, KnowledgeBase
from .network import (ContractError, DialogPrediction, FrameworkConfig,
                      INSTANCE_NAMES, MossModel, TurnPrediction)
from .synthetic import (GenConfig, GenerationError, TaskSchema, build_kb,
                        generate, get_schema, response_act_recoverer, split,
                        strip_to_raw, subsample_with_complement)
from .training import TrainConfig, train
from .autodiff.optim import TrainingError

log = logging.getLogger("moss")

DATA_ERRORS = (CorpusError, KbError, GenerationError, EvaluationError,
               FileNotFoundError, json.JSONDecodeError)
RUNTIME_ERRORS = (ContractError, TrainingError)


def _setup_logging():
    level = {"quiet": logging.WARNING, "info": logging.INFO,
             "debug": logging.DEBUG}.get(os.environ.get("MOSS_LOG", "info"),
                                         logging.INFO)
    logging.basicConfig(level=level, format="%(message)s")
    return level


def _print_resolved(command: str, resolved: dict):
    print(json.dumps({"command": command, "config": resolved}, sort_keys=True))


# ---------------------------------------------------------------------------
# commands


def cmd_gen_data(args) -> int:
    schema = get_schema(args.task)
    kb = build_kb(schema, seed=args.seed)
    cfg = GenConfig(n_dialogs=args.n, seed=args.seed, max_turns=args.max_turns,
                    annotation_dropout={m: getattr(args, f"dropout_{m}")
                                        for m in ("nlu", "dst", "dpl", "nlg")
                                        if getattr(args, f"dropout_{m}") > 0},
                    task=args.task)
    _print_resolved("gen-data", {"task": args.task, "n": args.n,
                                 "seed": args.seed,
                                 "max_turns": args.max_turns,
                                 "dropout": cfg.annotation_dropout,
                                 "out": str(args.out)})
    corpus = generate(schema, kb, cfg)
    train_c, valid_c, test_c = split(corpus, (3, 1, 1), seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_corpus(corpus, out / "corpus.jsonl")
    save_corpus(train_c, out / "train.jsonl")
    save_corpus(valid_c, out / "valid.jsonl")
    save_corpus(test_c, out / "test.jsonl")
    kb.save(out / "kb.json")
    schema.save(out / "schema.json")
    log.info("wrote %d dialogs (%d/%d/%d split) to %s", len(corpus),
             len(train_c), len(valid_c), len(test_c), out)
    return 0


def _load_data_dir(data_dir: Path):
    kb = KnowledgeBase.load(data_dir / "kb.json")
    train_c = load_corpus(data_dir / "train.jsonl")
    valid_p = data_dir / "valid.jsonl"
    valid_c = load_corpus(valid_p) if valid_p.exists() else None
    return kb, train_c, valid_c


def cmd_train(args) -> int:
    data_dir = Path(args.data)
    kb, train_c, valid_c = _load_data_dir(data_dir)

    if args.train_config:
        with open(args.train_config, encoding="utf-8") as fh:
            tcfg = TrainConfig.from_json(json.load(fh))
    else:
        tcfg = TrainConfig()
    if args.seed is not None:
        tcfg.seed = args.seed
    if args.epochs is not None:
        tcfg.max_epochs = args.epochs

    if args.config:
        fw = FrameworkConfig.load(args.config)
    else:
        fw = FrameworkConfig.instance(args.instance, vocab_size=len(
            build_vocab(train_c, limit=tcfg.vocab_limit)))

    complement = None
    if args.fraction is not None:
        train_c, complement = subsample_with_complement(
            train_c, args.fraction, seed=tcfg.seed)
    if args.raw_complement:
        if complement is None:
            raise ContractError("--raw-complement requires --fraction")
        train_c = train_c + strip_to_raw(complement)

    _print_resolved("train", {"data": str(data_dir), "out": str(args.out),
                              "instance": args.instance,
                              "fraction": args.fraction,
                              "raw_complement": args.raw_complement,
                              "framework": fw.to_json(),
                              "training": tcfg.to_json()})
    result = train(tcfg, fw, train_c, kb, valid=valid_c, out_dir=args.out,
                   quiet=log.getEffectiveLevel() > logging.INFO)
    kb.save(Path(args.out) / "kb.json")  # make the model directory runnable
    log.info("best epoch %d (validation loss %.4f); model saved under %s",
             result.best_epoch, result.best_valid, args.out)
    return 0


def _load_model_dir(model_dir: Path) -> MossModel:
    config = FrameworkConfig.load(model_dir / "config.json")
    vocab = Vocab.load(model_dir / "vocab.txt")
    return MossModel.load(model_dir / "model.ckpt", config, vocab)


def _find_kb(args, data_path: Path) -> KnowledgeBase:
    if args.kb:
        return KnowledgeBase.load(args.kb)
    sibling = data_path.parent / "kb.json"
    if sibling.exists():
        return KnowledgeBase.load(sibling)
    raise FileNotFoundError(f"no KB given and {sibling} does not exist")


def _find_act_recoverer(args, data_path: Path):
    schema_path = Path(args.schema) if args.schema else \
        data_path.parent / "schema.json"
    if schema_path.exists():
        return response_act_recoverer(TaskSchema.load(schema_path))
    return None


def _gold_predictions(corpus) -> list[DialogPrediction]:
    preds = []
    for d in corpus:
        turns = [TurnPrediction(
            semantics=list(t.semantics) if t.semantics else None,
            state=list(t.state or []),
            acts=list(t.acts) if t.acts else None,
            response=list(t.response or []),
            degree_bucket=0) for t in d.turns]
        preds.append(DialogPrediction(dialog_id=d.dialog_id, source="gold",
                                      turns=turns))
    return preds


def cmd_eval(args) -> int:
    data_path = Path(args.data)
    corpus = load_corpus(data_path)
    kb = _find_kb(args, data_path)
    recover = _find_act_recoverer(args, data_path)
    _print_resolved("eval", {"model": str(args.model), "data": str(data_path),
                             "gold_as_predictions": args.gold_as_predictions,
                             "out": str(args.out) if args.out else None})
    if args.gold_as_predictions:
        preds = _gold_predictions(corpus)
        report = evaluate(preds, corpus, kb, response_act_fn=recover,
                          allow_gold_rollout=True)
    else:
        if not args.model:
            print("error: eval needs --model (or --gold-as-predictions)",
                  file=sys.stderr)
            return 2
        model = _load_model_dir(Path(args.model))
        preds = model.predict_corpus(kb, corpus)
        report = evaluate(preds, corpus, kb, response_act_fn=recover)
    print(report.to_text())
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "metrics.json").write_text(
            json.dumps(report.to_json(), indent=1), encoding="utf-8")
        (out / "metrics.txt").write_text(report.to_text() + "\n",
                                         encoding="utf-8")
        from .plots import render_metric_figure
        render_metric_figure(report, out / "metrics.png")
        log.info("report written to %s (json, txt, png)", out)
    return 0


SWEEP_COLUMNS = ["instance", "fraction", "seed", "mat", "succ_f1", "bleu",
                 "nlu_acc", "dst_acc", "dpl_acc", "succ_acc"]


def _sweep_cell(packed):
    instance, fraction, seed, epochs, data_dir = packed
    kb, train_c, valid_c = _load_data_dir(Path(data_dir))
    test_c = load_corpus(Path(data_dir) / "test.jsonl")
    sample, _ = subsample_with_complement(train_c, fraction, seed=seed)
    tcfg = TrainConfig(seed=seed)
    if epochs is not None:
        tcfg.max_epochs = epochs
    vocab = build_vocab(sample, limit=tcfg.vocab_limit)
    fw = FrameworkConfig.instance(instance, vocab_size=len(vocab))
    result = train(tcfg, fw, sample, kb, valid=valid_c, vocab=vocab)
    schema_path = Path(data_dir) / "schema.json"
    recover = response_act_recoverer(TaskSchema.load(schema_path)) \
        if schema_path.exists() else None
    preds = result.model.predict_corpus(kb, test_c)
    report = evaluate(preds, test_c, kb, response_act_fn=recover)
    row = {"instance": instance, "fraction": fraction, "seed": seed}
    row.update({k: getattr(report, k) for k in SWEEP_COLUMNS[3:]})
    return row


def cmd_sweep(args) -> int:
    fractions = [float(x) for x in args.fractions.split(",") if x]
    instances = [x.strip() for x in args.instances.split(",") if x.strip()]
    unknown = [i for i in instances if i not in INSTANCE_NAMES]
    if unknown:
        raise ContractError(f"unknown instances {unknown}; choose from "
                            f"{INSTANCE_NAMES}")
    _print_resolved("sweep", {"data": str(args.data), "out": str(args.out),
                              "fractions": fractions, "instances": instances,
                              "seed": args.seed, "epochs": args.epochs,
                              "jobs": args.jobs})
    cells = [(inst, frac, args.seed, args.epochs, str(args.data))
             for inst in instances for frac in fractions]
    if args.jobs > 1:
        import multiprocessing as mp
        with mp.Pool(args.jobs) as pool:
            rows = pool.map(_sweep_cell, cells)
    else:
        rows = [_sweep_cell(c) for c in cells]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "sweep.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: ("" if row.get(k) is None else row.get(k))
                             for k in SWEEP_COLUMNS})
    from .plots import render_sweep_figure
    render_sweep_figure(rows, out / "sweep.png")
    log.info("sweep grid of %d cells written to %s (csv, png)", len(rows), out)
    return 0


def cmd_error_report(args) -> int:
    data_path = Path(args.data)
    corpus = load_corpus(data_path)
    kb = _find_kb(args, data_path)
    model = _load_model_dir(Path(args.model))
    _print_resolved("error-report", {"model": str(args.model),
                                     "data": str(data_path),
                                     "out": str(args.out)})
    preds = model.predict_corpus(kb, corpus)
    records = error_report(preds, corpus)
    save_error_report(records, args.out)
    first = sum(r.first_wrong_module for r in records)
    log.info("%d error records (%d first-wrong) written to %s", len(records),
             first, args.out)
    return 0


def cmd_chat(args) -> int:
    model = _load_model_dir(Path(args.model))
    data_dir = Path(args.model)
    kb = KnowledgeBase.load(args.kb) if args.kb else \
        KnowledgeBase.load(data_dir / "kb.json")
    _print_resolved("chat", {"model": str(args.model)})
    print("type a message; 'quit' ends the session")
    summary, resp = [GO], [GO]
    while True:
        try:
            line = input("you> ").strip()
        except EOFError:
            break
        if not line or line == "quit":
            break
        out = model.forward_turn(summary, resp, line.lower().split(), kb)
        if out.semantics is not None:
            print("  nlu :", " ".join(out.semantics.content))
        print("  dst :", " ".join(out.state.content))
        print("  kb  :", f"bucket {out.degree.bucket} "
                         f"({out.degree.count} matches)")
        if out.acts is not None:
            print("  dpl :", " ".join(out.acts.content))
        print("  sys :", " ".join(out.response.content))
        summary = state_summary(out.state.content,
                                out.acts.content if out.acts else None)
        resp = out.response.content or [GO]
    return 0


# ---------------------------------------------------------------------------
# argument wiring


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="moss",
        description="modular-supervision task-oriented dialog framework")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate an annotated toy corpus")
    p.add_argument("--task", choices=["simple", "complex"], default="simple")
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--max-turns", type=int, default=12)
    for m in ("nlu", "dst", "dpl", "nlg"):
        p.add_argument(f"--dropout-{m}", type=float, default=0.0,
                       help=f"probability of masking {m} per dialog")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("train", help="train a framework instance")
    p.add_argument("--data", required=True, help="directory from gen-data")
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="framework config JSON")
    p.add_argument("--train-config", help="training config JSON")
    p.add_argument("--instance", choices=INSTANCE_NAMES, default="all")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--fraction", type=float, default=None)
    p.add_argument("--raw-complement", action="store_true",
                   help="add the unsampled remainder as generation-only "
                        "dialogs")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a model under predicted rollout")
    p.add_argument("--model", help="model directory from train")
    p.add_argument("--data", required=True, help="corpus file to score")
    p.add_argument("--kb", help="KB JSON (default: kb.json beside the data)")
    p.add_argument("--schema", help="task schema JSON for act recovery")
    p.add_argument("--out", help="directory for metrics.{json,txt,png}")
    p.add_argument("--gold-as-predictions", action="store_true",
                   help="score the gold annotations against themselves "
                        "(metric plumbing check)")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("sweep", help="instances x data-fractions grid")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--fractions", default="0.2,0.4,0.6,0.8,1.0")
    p.add_argument("--instances", default="all,wo_nlu,wo_dpl,wo_nlu_dpl")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("error-report", help="per-module error localization")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--kb")
    p.add_argument("--out", required=True, help="error records JSONL path")
    p.set_defaults(fn=cmd_error_report)

    p = sub.add_parser("chat", help="interactive loop against a checkpoint")
    p.add_argument("--model", required=True)
    p.add_argument("--kb")
    p.set_defaults(fn=cmd_chat)

    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    try:
        return args.fn(args)
    except DATA_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except RUNTIME_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
