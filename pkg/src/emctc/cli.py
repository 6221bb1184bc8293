"""Command-line entry point: gen, train, decode, align, eval, verify.

Exit codes: 0 on success, 1 when training diverges or a verify check fails,
2 for usage errors (bad flags, missing files, malformed inputs).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import theorylab
from ._io import atomic_write_text
from .config import ConfigError, load_config
from .corpus import CorpusFormatError, GenSpec, gen_corpus, read_corpus, write_corpus
from .decoder import DecoderConfig, emit_cn_text, emit_lattice_text, lattice_to_cn
from .metrics import histogram, write_csv, write_histogram_csv
from .model import HeadConfig, LrSchedule, load_checkpoint, save_checkpoint
from .pipeline import (SUMMARY_COLUMNS, UTT_COLUMNS, align_record, decode_record, evaluate, heldout_wer_fn,
                       init_params, make_lm, read_records, write_records)
from .scoring import read_embeddings, write_embeddings
from .train import TrainConfig, TrainingDiverged, train

log = logging.getLogger("emctc")


class UsageError(Exception):
    pass


def _config(args):
    cfg = load_config(getattr(args, "config", None) or getattr(args, "spec", None), args.set)
    if getattr(args, "seed", None) is not None:
        cfg.set("seed", args.seed)
    return cfg


def _emb_path(corpus_path: str, explicit: str | None) -> str:
    return explicit or corpus_path + ".emb"


def cmd_gen(args) -> int:
    cfg = _config(args)
    spec = cfg.build(GenSpec)
    rng = np.random.default_rng(cfg["seed"])
    vocab = spec.make_vocab(rng)
    corpus = gen_corpus(spec, vocab, cfg["count"], rng)
    write_corpus(args.out, corpus)
    write_embeddings(_emb_path(args.out, args.emb), vocab)
    log.info("wrote %d utterances to %s", len(corpus), args.out)
    return 0


def _split_heldout(corpus, frac):
    k = int(round(len(corpus) * frac))
    if k == 0 or k >= len(corpus):
        return corpus, []
    return corpus[:-k], corpus[-k:]


def cmd_train(args) -> int:
    cfg = _config(args)
    corpus = read_corpus(args.corpus)
    if not corpus:
        raise UsageError(f"{args.corpus}: corpus is empty")
    vocab = read_embeddings(_emb_path(args.corpus, args.emb))
    if args.heldout:
        heldout = read_corpus(args.heldout)
    else:
        corpus, heldout = _split_heldout(corpus, cfg["heldout_fraction"])
    heads = cfg.build(HeadConfig)
    dec = cfg.build(DecoderConfig)
    params = init_params(corpus[0].features.shape[1], vocab.dim, cfg["num_hyps"], corpus, cfg["hidden"],
                         cfg["context"], cfg["duration_init"], cfg["init_seed"], heads)
    try:
        result = train(params, corpus, vocab, cfg.build(LrSchedule), cfg.build(TrainConfig), heldout, heads,
                       heldout_wer_fn(vocab, dec, heads))
    except TrainingDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    save_checkpoint(args.out, result.params, heads, {"best_epoch": result.best_epoch}, vocab)
    rows = [m.__dict__ for m in result.metrics]
    write_csv(args.metrics or args.out + ".metrics.csv", rows,
              ["epoch", "step", "lr", "train_loss", "heldout_loss", "heldout_wer"])
    log.info("best epoch %d written to %s", result.best_epoch, args.out)
    return 0


def _load_model(args):
    params, heads, _, vocab = load_checkpoint(args.checkpoint)
    if args.emb:
        vocab = read_embeddings(args.emb)
    if vocab is None:
        raise UsageError("checkpoint holds no embedding matrix; pass --emb")
    return params, heads, vocab


def _lm(cfg, vocab):
    transcripts = None
    if cfg["lm"] == "bigram":
        if not cfg["lm_corpus"]:
            raise ConfigError("lm = bigram needs lm_corpus")
        transcripts = [u.words for u in read_corpus(cfg["lm_corpus"])]
    try:
        return make_lm(cfg["lm"], vocab, transcripts, cfg["lm_smoothing"])
    except (ValueError, KeyError) as exc:
        raise ConfigError(str(exc)) from None


def cmd_decode(args) -> int:
    cfg = _config(args)
    params, heads, vocab = _load_model(args)
    dec = cfg.build(DecoderConfig)
    lm = _lm(cfg, vocab)
    out = Path(args.out)
    (out / "lattices").mkdir(parents=True, exist_ok=True)
    (out / "cn").mkdir(exist_ok=True)
    records = []
    for utt in read_corpus(args.corpus):
        rec, res = decode_record(params, utt, vocab, dec, heads, lm)
        records.append(rec)
        atomic_write_text(out / "lattices" / f"{utt.id}.lat", emit_lattice_text(res.lattice))
        atomic_write_text(out / "cn" / f"{utt.id}.cn", emit_cn_text(lattice_to_cn(res.lattice)))
    write_records(out / "hyps.jsonl", records)
    return 0


def cmd_align(args) -> int:
    cfg = _config(args)
    params, heads, vocab = _load_model(args)
    dec = cfg.build(DecoderConfig)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    records = [align_record(params, u, vocab, dec, heads) for u in read_corpus(args.corpus)]
    n_flag = sum(r.flagged for r in records)
    if n_flag:
        log.warning("%d utterances could not be aligned", n_flag)
    write_records(out / "alignments.jsonl", records)
    return 0


def cmd_eval(args) -> int:
    cfg = _config(args)
    refs = read_corpus(args.ref)
    hyp_dir = Path(args.hyp)
    sources = [p for p in (hyp_dir / "hyps.jsonl", hyp_dir / "alignments.jsonl") if p.exists()]
    if not sources:
        raise FileNotFoundError(f"{hyp_dir}: neither hyps.jsonl nor alignments.jsonl found")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    bw = cfg["hist_bin_ms"]
    for src in sources:
        tag = src.stem
        hyps = read_records(src)
        rows, summary = evaluate(refs, hyps)
        write_csv(out / f"{tag}_utterances.csv", rows, UTT_COLUMNS)
        write_csv(out / f"{tag}_summary.csv", [summary], SUMMARY_COLUMNS)
        offsets = [x for h in hyps for x in h.offsets_ms]
        durations = [x for h in hyps for x in h.durations_ms]
        write_histogram_csv(out / f"{tag}_offsets_hist.csv", *histogram(offsets, bw))
        write_histogram_csv(out / f"{tag}_durations_hist.csv", *histogram(durations, bw))
        print(f"{tag}: wer={summary['wer']} neer={summary['neer']} mu_alpha={summary['mu_alpha']} "
              f"mu_beta={summary['mu_beta']}")
    return 0


def cmd_verify(args) -> int:
    result = theorylab.run_suite(args.seed if args.seed is not None else 0)
    out = Path(args.out)
    if out.suffix != ".csv":
        out.mkdir(parents=True, exist_ok=True)
        out = out / "verify.csv"
    theorylab.write_suite_csv(out, result)
    for c in result.checks:
        status = "PASS" if c.passed else ("FAIL" if c.asserted else "info")
        print(f"{status} {c.name}: {c.detail}")
    return 0 if result.ok else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="emctc", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_flag="--config"):
        sp.add_argument(config_flag, default=None, help="flat key = value file")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
        sp.add_argument("--seed", type=int, default=None)

    g = sub.add_parser("gen", help="write a synthetic corpus and its embedding matrix")
    common(g, "--spec")
    g.add_argument("--out", required=True)
    g.add_argument("--emb", default=None, help="embedding matrix path (default: <out>.emb)")
    g.set_defaults(fn=cmd_gen)

    t = sub.add_parser("train", help="train the toy encoder")
    common(t)
    t.add_argument("--corpus", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--emb", default=None, help="embedding matrix (default: <corpus>.emb)")
    t.add_argument("--heldout", default=None, help="held-out corpus (default: split off heldout_fraction)")
    t.add_argument("--metrics", default=None, help="per-epoch CSV (default: <out>.metrics.csv)")
    t.set_defaults(fn=cmd_train)

    for name, fn, hlp in (("decode", cmd_decode, "hypotheses, lattices and confusion networks"),
                          ("align", cmd_align, "forced alignment to the reference words")):
        d = sub.add_parser(name, help=hlp)
        common(d)
        d.add_argument("--corpus", required=True)
        d.add_argument("--checkpoint", required=True)
        d.add_argument("--emb", default=None, help="swap in another embedding matrix")
        d.add_argument("--out", required=True, help="output directory")
        d.set_defaults(fn=fn)

    e = sub.add_parser("eval", help="WER, NEER, segmentation error and histograms")
    common(e)
    e.add_argument("--ref", required=True)
    e.add_argument("--hyp", required=True, help="directory written by decode or align")
    e.add_argument("--out", required=True)
    e.set_defaults(fn=cmd_eval)

    v = sub.add_parser("verify", help="run the numerical analysis checks")
    v.add_argument("--out", required=True, help="directory or .csv path")
    v.add_argument("--seed", type=int, default=None)
    v.set_defaults(fn=cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.fn(args)
    except (UsageError, ConfigError, CorpusFormatError, FileNotFoundError, IsADirectoryError,
            NotADirectoryError) as exc:
        parser.print_usage(sys.stderr)
        print(f"{parser.prog}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
