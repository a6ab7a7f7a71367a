"""Command-line entry point wiring the pipeline: tokenize, align, mine,
filter, train, eval, score, attn-export, agree, serve, suite-manifest.

Exit codes: 0 success, 1 usage error, 2 data error.  All randomness is
controlled by --seed, and outputs are byte-reproducible under a fixed seed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import aligner, metrics, miner, model as model_mod, synthetic, trainer
from .corpus import (PronounLexicon, build_manifest, load_corpus, make_sentence,
                     pronoun_indices, tokenize, write_manifest)
from .errors import DataError, UsageError

CONFIG_ENV = "ANAPHORA_EVAL_CONFIG"


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's 2
        raise UsageError(message)


def _read_config_file(path: str | None) -> dict[str, str]:
    if path is None:
        path = os.environ.get(CONFIG_ENV)
    if path is None:
        return {}
    values = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise DataError(f"{path}:{lineno}: expected key=value")
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    return values


def _apply_config(args, config: dict[str, str], argv: list[str]) -> None:
    """Fill args from the config file; explicit flags keep precedence."""
    given = set()
    for item in argv:
        if item.startswith("--"):
            given.add(item.split("=", 1)[0][2:].replace("-", "_"))
    for key, raw in config.items():
        attr = key.replace("-", "_")
        if attr == "config" or not hasattr(args, attr) or attr in given:
            continue
        current = getattr(args, attr)
        if isinstance(current, bool):
            value: object = raw.lower() in ("1", "true", "yes")
        elif isinstance(current, int):
            value = int(raw)
        elif isinstance(current, float):
            value = float(raw)
        else:
            value = raw
        setattr(args, attr, value)


def _load_lexicon(args) -> PronounLexicon:
    if getattr(args, "lexicon", None):
        return PronounLexicon.load(args.lexicon, getattr(args, "error_dims", None))
    return PronounLexicon.default()


def _out_fh(path: str | None):
    if path is None or path == "-":
        return sys.stdout
    return open(path, "w", encoding="utf-8")


# -- subcommand handlers -------------------------------------------------------

def _cmd_tokenize(args) -> int:
    docs = load_corpus(args.input, format=args.format)
    fh = _out_fh(args.output)
    try:
        for doc in docs:
            for sent in doc.sentences:
                fh.write(" ".join(t.surface for t in sent.tokens) + "\n")
    finally:
        if fh is not sys.stdout:
            fh.close()
    return 0


def _read_token_lines(path: str) -> list[list[str]]:
    docs = load_corpus(path, format="flat")
    if not docs:
        return []
    return [[t.lower for t in sent.tokens] for sent in docs[0].sentences]


def _cmd_align(args) -> int:
    src = _read_token_lines(args.src)
    tgt = _read_token_lines(args.tgt)
    if len(src) != len(tgt):
        raise DataError(f"line count mismatch: {len(src)} vs {len(tgt)}")
    pairs = list(zip(src, tgt))
    for s, t in pairs:
        if not s or not t:
            raise DataError("empty line in parallel corpus")
    if args.load_model:
        fwd_model = aligner.load_model(args.load_model + ".fwd")
        bwd_model = aligner.load_model(args.load_model + ".bwd")
    else:
        fwd_model = aligner.em_train(pairs, args.iterations, mode=args.mode,
                                     warmup=args.warmup, tension=args.tension,
                                     null_prob=args.null_prob)
        bwd_model = aligner.em_train([(t, s) for s, t in pairs], args.iterations,
                                     mode=args.mode, warmup=args.warmup,
                                     tension=args.tension, null_prob=args.null_prob)
    if args.save_model:
        aligner.save_model(fwd_model, args.save_model + ".fwd")
        aligner.save_model(bwd_model, args.save_model + ".bwd")
    link_sets = []
    for s, t in pairs:
        fwd = aligner.viterbi_align((s, t), fwd_model)
        bwd = aligner.flip_links(aligner.viterbi_align((t, s), bwd_model))
        link_sets.append(aligner.symmetrize(fwd, bwd, heuristic=args.heuristic))
    aligner.write_pharaoh(link_sets, args.output)
    print(f"aligned {len(link_sets)} pairs -> {args.output}")
    return 0


def _cmd_mine(args) -> int:
    lexicon = _load_lexicon(args)
    ref_docs = load_corpus(args.ref, format=args.format)
    sys_docs = load_corpus(args.sys, format=args.format)
    alignments = aligner.read_pharaoh(args.alignments)
    sources = None
    if args.sources:
        source_docs = load_corpus(args.sources, format=args.format)
        sources = [s.text for d in source_docs for s in d.sentences]
    pairs = miner.harvest(ref_docs, sys_docs, alignments, lexicon, mode=args.mode,
                          k=args.k, lang_pair=args.lang_pair, sources=sources)
    miner.write_pairs(pairs, args.output)
    print(f"mined {len(pairs)} pairs -> {args.output}")
    return 0


def _cmd_filter(args) -> int:
    pairs = miner.read_pairs(args.pairs)
    table = miner.read_agreement_table(args.table)
    kept = miner.filter_pairs(pairs, table, args.tau, strict=not args.permissive)
    miner.write_pairs(kept, args.output)
    print(f"kept {len(kept)} of {len(pairs)} pairs -> {args.output}")
    return 0


def _cmd_train(args) -> int:
    train_pairs = miner.read_pairs(args.pairs)
    dev_pairs = miner.read_pairs(args.dev)
    tcfg = trainer.TrainConfig(lr=args.lr, batch_size=args.batch_size,
                               max_epochs=args.epochs, patience=args.patience,
                               seed=args.seed, clip_norm=args.clip)
    pretrained = model_mod.load_embeddings_text(args.embeddings) if args.embeddings else None
    params, vocab, config, log = trainer.train(
        train_pairs, dev_pairs, tcfg, d=args.d, h=args.hidden,
        context_mode=args.context_mode, encoder=args.encoder, M=args.slots,
        margin=args.margin, pretrained=pretrained, min_freq=args.min_freq,
        log_path=args.log, timing=args.timing)
    model_mod.save_checkpoint(args.output, config, vocab, params)
    best = max(log, key=lambda r: r["dev_accuracy"])
    print(f"trained {len(log)} epochs; best dev accuracy {best['dev_accuracy']:.4f} "
          f"-> {args.output}")
    return 0


def _cmd_eval(args) -> int:
    config, vocab, params = model_mod.load_checkpoint(args.checkpoint)
    pairs = miner.read_pairs(args.pairs)
    report = trainer.evaluate_accuracy(params, vocab, config, pairs)
    payload = {"accuracy": report.accuracy, "n": report.n, "ties": report.tie_count}
    if args.per_pair:
        payload["per_pair"] = [
            {"ref_form": k[0], "sys_form": k[1], "n": v.n, "accuracy": v.accuracy}
            for k, v in sorted(report.per_pair.items())
        ]
    fh = _out_fh(args.output)
    try:
        fh.write(json.dumps(payload, indent=2) + "\n")
    finally:
        if fh is not sys.stdout:
            fh.close()
    print(f"accuracy {report.accuracy:.4f} on {report.n} pairs ({report.tie_count} ties)",
          file=sys.stderr)
    return 0


def _context_sentences(args) -> list:
    texts = []
    if args.context_file:
        docs = load_corpus(args.context_file, format="flat")
        if docs:
            texts = [s.text for s in docs[0].sentences]
    texts.extend(args.context or [])
    return [make_sentence("ctx", i, t) for i, t in enumerate(texts)]


def _score_one(text: str, context, config, params, vocab, lexicon):
    sent = make_sentence("cand", 0, text)
    pidx = pronoun_indices(sent, lexicon)
    ctx = context if config.context_mode != "NC" else []
    y, trace, _ = model_mod.score_side((ctx, sent, pidx), config, params, vocab)
    return y, trace


def _cmd_score(args) -> int:
    config, vocab, params = model_mod.load_checkpoint(args.checkpoint)
    lexicon = _load_lexicon(args)
    context = _context_sentences(args)
    y_a, _ = _score_one(args.candidate_a, context, config, params, vocab, lexicon)
    y_b, _ = _score_one(args.candidate_b, context, config, params, vocab, lexicon)
    winner = "a" if y_a > y_b else ("b" if y_b > y_a else "tie")
    print(json.dumps({"y_a": y_a, "y_b": y_b, "winner": winner}))
    return 0


def _cmd_attn_export(args) -> int:
    config, vocab, params = model_mod.load_checkpoint(args.checkpoint)
    if config.encoder != "bilstm":
        raise DataError("attention export requires a bilstm-encoder checkpoint")
    lexicon = _load_lexicon(args)
    context = _context_sentences(args)
    _, trace = _score_one(args.text, context, config, params, vocab, lexicon)
    model_mod.export_attention(trace, args.output)
    print(f"attention map -> {args.output}")
    return 0


def _cmd_agree(args) -> int:
    records = metrics.read_judgments(args.judgments)
    report = metrics.agreement_report(records)
    payload = report.to_dict()
    if args.pairs:
        pairs = miner.read_pairs(args.pairs)
        assignments, _ = metrics.normalize_judgments(records)
        item_forms = {p.id: p.mismatch_forms[0] for p in pairs if p.mismatch_forms}
        table = metrics.agreement_by_pronoun_pair(assignments, item_forms)
        if args.table_output:
            miner.write_agreement_table(table, args.table_output)
        payload["by_pronoun_pair"] = [
            {"ref_form": k[0], "sys_form": k[1], "ac1": v[0], "pct_ref": v[1], "n": v[2]}
            for k, v in sorted(table.items())
        ]
    fh = _out_fh(args.output)
    try:
        fh.write(json.dumps(payload, indent=2) + "\n")
    finally:
        if fh is not sys.stdout:
            fh.close()
    excl = "n/a" if report.ac1_excl_ties is None else f"{report.ac1_excl_ties:.4f}"
    print(f"AC1 incl ties {report.ac1_incl_ties:.4f}, excl ties {excl}, "
          f"Avg%Ref {report.avg_pct_ref:.4f}", file=sys.stderr)
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .annotation_service import create_app

    app = create_app(args.root)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def _cmd_suite_manifest(args) -> int:
    manifest = build_manifest(args.root)
    write_manifest(manifest, args.output)
    print(f"{len(manifest.rows)} languages -> {args.output}")
    return 0


def _cmd_synth(args) -> int:
    pairs = synthetic.generate_corpus(args.n, seed=args.seed)
    train_p, dev_p, test_p = synthetic.split_corpus(pairs, seed=args.seed)
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    miner.write_pairs(train_p, out / "train.jsonl")
    miner.write_pairs(dev_p, out / "dev.jsonl")
    miner.write_pairs(test_p, out / "test.jsonl")
    print(f"wrote {len(train_p)}/{len(dev_p)}/{len(test_p)} pairs under {out}")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="anaphora-eval",
                     description="Pronoun-translation evaluation pipeline")
    parser.add_argument("--config", help=f"key=value config file (or ${CONFIG_ENV})")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("tokenize", help="tokenize a corpus file")
    p.add_argument("--input", required=True)
    p.add_argument("--output", default="-")
    p.add_argument("--format", choices=["flat", "doc-blocks"], default="flat")
    p.set_defaults(func=_cmd_tokenize)

    p = sub.add_parser("align", help="train EM aligner and write Pharaoh links")
    p.add_argument("--src", required=True, help="source-side file, one sentence per line")
    p.add_argument("--tgt", required=True, help="target-side file, one sentence per line")
    p.add_argument("--output", required=True)
    p.add_argument("--iterations", type=int, default=10)
    p.add_argument("--mode", choices=["model1", "diagonal"], default="diagonal")
    p.add_argument("--warmup", type=int, default=5)
    p.add_argument("--tension", type=float, default=4.0)
    p.add_argument("--null-prob", type=float, default=0.08)
    p.add_argument("--heuristic", default="grow-diag-final-and",
                   choices=["intersection", "union", "grow-diag-final-and"])
    p.add_argument("--save-model", help="path prefix for .fwd/.bwd model files")
    p.add_argument("--load-model", help="path prefix of saved .fwd/.bwd models")
    p.set_defaults(func=_cmd_align)

    p = sub.add_parser("mine", help="extract pronoun-mismatch ranking pairs")
    p.add_argument("--ref", required=True)
    p.add_argument("--sys", required=True)
    p.add_argument("--alignments", required=True,
                   help="Pharaoh links, i-j = system position i to reference position j")
    p.add_argument("--mode", choices=["ref-vs-sys", "ref-vs-noisy"], default="ref-vs-noisy")
    p.add_argument("--k", type=int, default=2, help="context window size")
    p.add_argument("--lang-pair", default="")
    p.add_argument("--format", choices=["flat", "doc-blocks"], default="flat")
    p.add_argument("--sources", help="optional source-text file, parallel lines")
    p.add_argument("--lexicon")
    p.add_argument("--error-dims")
    p.add_argument("--output", required=True)
    p.set_defaults(func=_cmd_mine)

    p = sub.add_parser("filter", help="drop pairs below the agreement threshold")
    p.add_argument("--pairs", required=True)
    p.add_argument("--table", required=True, help="agreement table TSV")
    p.add_argument("--tau", type=float, default=0.8)
    p.add_argument("--permissive", action="store_true",
                   help="keep pairs with form pairs absent from the table")
    p.add_argument("--output", required=True)
    p.set_defaults(func=_cmd_filter)

    p = sub.add_parser("train", help="train the ranking model")
    p.add_argument("--pairs", required=True)
    p.add_argument("--dev", required=True)
    p.add_argument("--output", required=True, help="checkpoint path")
    p.add_argument("--log", help="JSON-lines epoch log")
    p.add_argument("--d", type=int, default=32, help="embedding dimension")
    p.add_argument("--hidden", type=int, default=32, help="LSTM hidden dimension")
    p.add_argument("--slots", type=int, default=12, help="max pronoun slots M")
    p.add_argument("--margin", type=float, default=0.1)
    p.add_argument("--context-mode", choices=["NC", "RC", "CRC"], default="NC")
    p.add_argument("--encoder", choices=["average-baseline", "bilstm"], default="bilstm")
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--patience", type=int, default=5)
    p.add_argument("--clip", type=float, default=5.0)
    p.add_argument("--min-freq", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--embeddings", help="pre-trained text vectors (word v1 .. vd)")
    p.add_argument("--timing", action="store_true",
                   help="record real wall time in the log (breaks byte-reproducibility)")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="pairwise accuracy of a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--pairs", required=True)
    p.add_argument("--output", default="-")
    p.add_argument("--per-pair", action="store_true")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("score", help="compare two candidate texts under shared context")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--candidate-a", required=True)
    p.add_argument("--candidate-b", required=True)
    p.add_argument("--context", action="append", help="context sentence (repeatable)")
    p.add_argument("--context-file", help="file of context sentences")
    p.add_argument("--lexicon")
    p.add_argument("--error-dims")
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("attn-export", help="export an attention heatmap TSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--text", required=True)
    p.add_argument("--context", action="append")
    p.add_argument("--context-file")
    p.add_argument("--lexicon")
    p.add_argument("--error-dims")
    p.add_argument("--output", required=True)
    p.set_defaults(func=_cmd_attn_export)

    p = sub.add_parser("agree", help="agreement statistics over judgments")
    p.add_argument("--judgments", required=True)
    p.add_argument("--pairs", help="ranking pairs for the per-pronoun-pair table")
    p.add_argument("--table-output", help="agreement table TSV output")
    p.add_argument("--output", default="-")
    p.set_defaults(func=_cmd_agree)

    p = sub.add_parser("serve", help="run the annotation HTTP service")
    p.add_argument("--root", required=True, help="directory of campaign subdirectories")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.set_defaults(func=_cmd_serve)

    p = sub.add_parser("suite-manifest", help="build the test-suite manifest TSV")
    p.add_argument("--root", required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=_cmd_suite_manifest)

    p = sub.add_parser("synth", help="generate the synthetic ranking corpus")
    p.add_argument("--n", type=int, default=6000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output-dir", required=True)
    p.set_defaults(func=_cmd_synth)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    if argv is None:
        argv = sys.argv[1:]
    try:
        args = parser.parse_args(argv)
        _apply_config(args, _read_config_file(args.config), list(argv))
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
