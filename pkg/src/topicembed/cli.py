"""Command-line interface.

Subcommands cover the full pipeline: vocabulary construction, training,
embedding/topic exports, and the evaluation protocols. Config values
resolve as CLI flag > --config JSON file > built-in default, and every
run echoes its fully resolved configuration to stderr. Exit codes:
0 success, 2 I/O error, 3 training divergence, 4 vocabulary/checkpoint
mismatch.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import corpus as corpus_mod
from . import evaluation, figures, inference, trainer
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .densemode import DenseConfig, DenseModel, DenseVectorFile, build_dense_instances
from .model import Model, ModelConfig
from .trainer import TrainConfig, TrainingDiverged


class VocabularyMismatch(RuntimeError):
    pass


DEFAULTS = {
    "vocab_size": 8000,
    "latent_dim": 100,
    "n_topics": 50,
    "hidden_dim": 256,
    "n_samples": 1,
    "window_size": 10,
    "eta0": 0.0005,
    "lr_decay": 0.95,
    "max_iter": 100,
    "batch_size": 2048,
    "optimizer": "adam",
    "convergence_tol": 1e-4,
    "seed": 0,
    "mode": "bow",
    "top_words": 10,
    "cooc_window": 110,
}


def resolve_config(args):
    """flag > config file > default; echoes the result to stderr."""
    cfg = dict(DEFAULTS)
    path = getattr(args, "config", None)
    if path:
        with open(path, encoding="utf-8") as fh:
            loaded = json.load(fh)
        unknown = set(loaded) - set(cfg)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(loaded)
    for key in cfg:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    print(
        f"resolved config: {json.dumps(cfg, sort_keys=True)}",
        file=sys.stderr,
    )
    return cfg


def _load_model(ckpt_path, vocab):
    header, arrays = load_checkpoint(ckpt_path)
    if header["vocab_hash"] != vocab.content_hash():
        raise VocabularyMismatch(
            f"{ckpt_path} was trained with a different vocabulary"
        )
    conf = dict(header["config"])
    if header["mode"] == "dense":
        model = DenseModel.from_arrays(DenseConfig(**conf), arrays)
    else:
        model = Model.from_arrays(ModelConfig(**conf), arrays)
    return model, header


def _instances_for(model, header, docs, vocab, cfg, vectors_path=None):
    window = header["extra"].get("window_size", cfg["window_size"])
    if model.mode == "dense":
        if vectors_path is None:
            raise ValueError("dense-mode checkpoints need --vectors")
        vec_file = DenseVectorFile.load(vectors_path)
        return build_dense_instances(docs, vocab, vec_file, window)
    instances, _ = corpus_mod.corpus_instances(docs, vocab, window)
    return instances


def cmd_build_vocab(args):
    cfg = resolve_config(args)
    stopwords = (
        corpus_mod.load_stopwords(args.stopwords)
        if args.stopwords
        else corpus_mod.default_stopwords()
    )
    docs = corpus_mod.read_corpus(args.corpus, stopwords)
    vocab = corpus_mod.build_vocab(docs, cfg["vocab_size"], stopwords)
    vocab.save(args.output)
    print(f"wrote {len(vocab)} tokens to {args.output}", file=sys.stderr)
    return 0


def cmd_train(args):
    cfg = resolve_config(args)
    vocab = corpus_mod.Vocabulary.load(args.vocab)
    docs = corpus_mod.read_corpus(args.corpus)
    seed = cfg["seed"]

    train_cfg = TrainConfig(
        eta0=cfg["eta0"],
        lr_decay=cfg["lr_decay"],
        max_iter=cfg["max_iter"],
        batch_size=cfg["batch_size"],
        seed=seed,
        optimizer=cfg["optimizer"],
        convergence_tol=cfg["convergence_tol"],
    )
    extra = {"window_size": cfg["window_size"]}
    vocab_hash = vocab.content_hash()

    def checkpoint_cb(epoch, model, report):
        if args.checkpoint_every and (epoch + 1) % args.checkpoint_every == 0:
            save_checkpoint(args.output, model, vocab_hash, seed, extra=extra)

    if cfg["mode"] == "dense":
        if not args.vectors:
            raise ValueError("--mode dense requires --vectors")
        vec_file = DenseVectorFile.load(args.vectors)
        instances = build_dense_instances(docs, vocab, vec_file, cfg["window_size"])
        model_cfg = DenseConfig(
            vocab_size=len(vocab),
            latent_dim=cfg["latent_dim"],
            n_topics=cfg["n_topics"],
            hidden_dim=cfg["hidden_dim"],
            n_samples=cfg["n_samples"],
            embed_dim=vec_file.dim,
        )
        model = DenseModel(model_cfg, rng=trainer.init_rng(seed))
        if train_cfg.max_iter == 0:
            report = trainer.TrainReport()
        else:
            model, report = trainer.fit(model, instances, train_cfg, on_epoch_end=checkpoint_cb)
    else:
        instances, stats = corpus_mod.corpus_instances(docs, vocab, cfg["window_size"])
        print(
            f"{stats.n_documents} documents, {stats.n_tokens} tokens, "
            f"{stats.n_instances} instances",
            file=sys.stderr,
        )
        model_cfg = ModelConfig(
            vocab_size=len(vocab),
            latent_dim=cfg["latent_dim"],
            n_topics=cfg["n_topics"],
            hidden_dim=cfg["hidden_dim"],
            n_samples=cfg["n_samples"],
        )
        model, report = trainer.train(
            instances, model_cfg, train_cfg, on_epoch_end=checkpoint_cb
        )

    save_checkpoint(args.output, model, vocab_hash, seed, extra=extra)
    report_path = args.report or args.output + ".report.csv"
    report.to_csv(report_path)
    if not args.no_figures and report.epochs_run:
        figures.save_training_curves(report, _fig_path(report_path))
    print(
        f"trained {report.epochs_run} epochs"
        + (" (converged)" if report.converged else "")
        + f"; checkpoint at {args.output}",
        file=sys.stderr,
    )
    return 0


def _fig_path(csv_path):
    return (csv_path[:-4] if csv_path.endswith(".csv") else csv_path) + ".png"


def cmd_embed(args):
    cfg = resolve_config(args)
    vocab = corpus_mod.Vocabulary.load(args.vocab)
    model, header = _load_model(args.checkpoint, vocab)
    docs = corpus_mod.read_corpus(args.corpus)
    instances = _instances_for(model, header, docs, vocab, cfg, args.vectors)
    embeddings = inference.universal_embed(instances, model)
    inference.write_word2vec(args.output, vocab, embeddings)
    print(f"wrote {len(embeddings)} embeddings to {args.output}", file=sys.stderr)
    return 0


def cmd_topics(args):
    cfg = resolve_config(args)
    vocab = corpus_mod.Vocabulary.load(args.vocab)
    model, _ = _load_model(args.checkpoint, vocab)
    tables = inference.topic_top_words(model, vocab, cfg["top_words"])
    inference.write_topic_table(args.output, tables)
    print(f"wrote {len(tables)} topics to {args.output}", file=sys.stderr)
    return 0


def cmd_word_topics(args):
    cfg = resolve_config(args)
    vocab = corpus_mod.Vocabulary.load(args.vocab)
    model, header = _load_model(args.checkpoint, vocab)
    docs = corpus_mod.read_corpus(args.corpus)
    instances = _instances_for(model, header, docs, vocab, cfg, args.vectors)
    words = [w for w in args.words.split(",") if w]
    rows = [
        (word, inference.word_topic_distribution(word, instances, vocab, model))
        for word in words
    ]
    inference.write_distributions(args.output, rows)
    print(f"wrote {len(rows)} word distributions to {args.output}", file=sys.stderr)
    return 0


def cmd_sentence_topics(args):
    resolve_config(args)
    vocab = corpus_mod.Vocabulary.load(args.vocab)
    model, _ = _load_model(args.checkpoint, vocab)
    if model.mode == "dense":
        raise ValueError("sentence-topics requires a bag-of-words checkpoint")
    sentences = []
    if args.sentence:
        sentences.extend(args.sentence)
    if args.sentences_file:
        with open(args.sentences_file, encoding="utf-8") as fh:
            sentences.extend(line.strip() for line in fh if line.strip())
    if not sentences:
        raise ValueError("no sentences given (use --sentence or --sentences-file)")
    rows = []
    for sent in sentences:
        tokens = corpus_mod.tokenize(sent)
        rows.append((sent.replace(",", " "), inference.sentence_topic_distribution(tokens, vocab, model)))
    inference.write_distributions(args.output, rows)
    print(f"wrote {len(rows)} sentence distributions to {args.output}", file=sys.stderr)
    return 0


def cmd_eval_sim(args):
    cfg = resolve_config(args)
    vocab = corpus_mod.Vocabulary.load(args.vocab)
    model, header = _load_model(args.checkpoint, vocab)
    docs = corpus_mod.read_corpus(args.corpus)
    instances = _instances_for(model, header, docs, vocab, cfg, args.vectors)
    embeddings = inference.universal_embed(instances, model)
    vectors = {
        vocab.id_to_token[wid]: emb.vector for wid, emb in embeddings.items()
    }
    rows, panels = [], []
    for path in args.benchmark:
        bench = evaluation.read_sim_benchmark(path)
        result = evaluation.eval_word_similarity(bench, vectors)
        rows.append((bench.name, result))
        covered = [
            (g, inference.cosine(vectors[w1], vectors[w2]))
            for w1, w2, g in bench.pairs
            if w1 in vectors and w2 in vectors
        ]
        panels.append(
            (bench.name, [g for g, _ in covered], [m for _, m in covered], result.rho)
        )
    with open(args.output, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("benchmark,rho,coverage,n_scored,n_total\n")
        for name, r in rows:
            fh.write(f"{name},{r.rho:.6f},{r.coverage:.6f},{r.n_scored},{r.n_total}\n")
    if not args.no_figures:
        figures.save_similarity_scatter(panels, _fig_path(args.output))
    for name, r in rows:
        print(f"{name}: rho={r.rho:.4f} coverage={r.coverage:.3f}", file=sys.stderr)
    return 0


def cmd_eval_lexsub(args):
    cfg = resolve_config(args)
    vocab = corpus_mod.Vocabulary.load(args.vocab)
    model, header = _load_model(args.checkpoint, vocab)
    instances = evaluation.read_lexsub(args.instances)
    if args.lexsub_mode == "baladd":
        if not args.corpus:
            raise ValueError("baladd mode needs the training corpus for universal vectors")
        docs = corpus_mod.read_corpus(args.corpus)
        corpus_instances = _instances_for(model, header, docs, vocab, cfg, args.vectors)
        embeddings = inference.universal_embed(corpus_instances, model)
        vectors = {
            vocab.id_to_token[wid]: emb.vector for wid, emb in embeddings.items()
        }
        result = evaluation.eval_lexsub(instances, vocab, mode="baladd", vectors=vectors)
    else:
        if model.mode == "dense":
            raise ValueError("contextual lexsub requires a bag-of-words checkpoint")
        result = evaluation.eval_lexsub(instances, vocab, model=model, mode="contextual")
    with open(args.output, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("mode,accuracy,hits,evaluated,skipped\n")
        fh.write(
            f"{args.lexsub_mode},{result.accuracy:.6f},{result.hits},"
            f"{result.evaluated},{result.skipped}\n"
        )
    if not args.no_figures:
        figures.save_lexsub_bars(result, _fig_path(args.output))
    print(
        f"lexsub ({args.lexsub_mode}): accuracy={result.accuracy:.4f} "
        f"({result.hits}/{result.evaluated}, {result.skipped} skipped)",
        file=sys.stderr,
    )
    return 0


def cmd_eval_coherence(args):
    cfg = resolve_config(args)
    vocab = corpus_mod.Vocabulary.load(args.vocab)
    model, _ = _load_model(args.checkpoint, vocab)
    tables = inference.topic_top_words(model, vocab, cfg["top_words"])
    topics = [[word for word, _ in rows] for rows in tables]
    reference = corpus_mod.read_corpus(args.reference)
    result = evaluation.npmi_coherence(topics, reference, window=cfg["cooc_window"])
    with open(args.output, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("topic,coherence\n")
        for t, score in enumerate(result.topic_scores):
            fh.write(f"{t},{score:.6f}\n")
        fh.write(f"mean,{result.mean_score:.6f}\n")
    if not args.no_figures:
        figures.save_coherence_bars(result.topic_scores, result.mean_score, _fig_path(args.output))
    if result.missing_words:
        print(
            f"warning: {len(result.missing_words)} top words missing from the "
            f"reference corpus: {', '.join(result.missing_words[:10])}",
            file=sys.stderr,
        )
    print(f"mean coherence {result.mean_score:.4f}", file=sys.stderr)
    return 0


def _add_common(p):
    p.add_argument("--seed", type=int, default=None, help="RNG seed")
    p.add_argument("--config", default=None, help="JSON config file")
    p.add_argument("--mode", choices=("bow", "dense"), default=None,
                   help="input representation (default bow)")
    p.add_argument("--no-figures", action="store_true",
                   help="skip rendering companion figures")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="topicembed",
        description="Joint topic and topic-specific word embedding learning",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-vocab", help="build a vocabulary TSV from a corpus")
    p.add_argument("corpus")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--vocab-size", dest="vocab_size", type=int, default=None)
    p.add_argument("--stopwords", default=None, help="stopword file (one token per line)")
    _add_common(p)
    p.set_defaults(func=cmd_build_vocab)

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    p.add_argument("corpus")
    p.add_argument("vocab")
    p.add_argument("-o", "--output", required=True, help="checkpoint path")
    p.add_argument("--report", default=None, help="per-epoch CSV (default <ckpt>.report.csv)")
    p.add_argument("--vectors", default=None, help="dense input vectors (word2vec text)")
    p.add_argument("--checkpoint-every", type=int, default=0,
                   help="also write the checkpoint every K epochs")
    p.add_argument("--window", dest="window_size", type=int, default=None)
    p.add_argument("--latent-dim", dest="latent_dim", type=int, default=None)
    p.add_argument("--topics", dest="n_topics", type=int, default=None)
    p.add_argument("--hidden-dim", dest="hidden_dim", type=int, default=None)
    p.add_argument("--samples", dest="n_samples", type=int, default=None)
    p.add_argument("--eta0", type=float, default=None)
    p.add_argument("--lr-decay", dest="lr_decay", type=float, default=None)
    p.add_argument("--max-iter", dest="max_iter", type=int, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.add_argument("--optimizer", choices=("sgd", "adam"), default=None)
    p.add_argument("--convergence-tol", dest="convergence_tol", type=float, default=None)
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("embed", help="export universal embeddings (word2vec text)")
    p.add_argument("checkpoint")
    p.add_argument("corpus")
    p.add_argument("vocab")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--vectors", default=None, help="dense input vectors (dense mode)")
    _add_common(p)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("topics", help="export top words per topic (TSV)")
    p.add_argument("checkpoint")
    p.add_argument("vocab")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("-k", dest="top_words", type=int, default=None)
    _add_common(p)
    p.set_defaults(func=cmd_topics)

    p = sub.add_parser("word-topics", help="export aggregated word topic distributions")
    p.add_argument("checkpoint")
    p.add_argument("corpus")
    p.add_argument("vocab")
    p.add_argument("--words", required=True, help="comma-separated word list")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--vectors", default=None)
    _add_common(p)
    p.set_defaults(func=cmd_word_topics)

    p = sub.add_parser("sentence-topics", help="export sentence topic distributions")
    p.add_argument("checkpoint")
    p.add_argument("vocab")
    p.add_argument("--sentence", action="append", default=None)
    p.add_argument("--sentences-file", default=None)
    p.add_argument("-o", "--output", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_sentence_topics)

    p = sub.add_parser("eval-sim", help="word similarity benchmarks (Spearman)")
    p.add_argument("checkpoint")
    p.add_argument("corpus")
    p.add_argument("vocab")
    p.add_argument("--benchmark", action="append", required=True,
                   help="TSV benchmark file; repeatable")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--vectors", default=None)
    _add_common(p)
    p.set_defaults(func=cmd_eval_sim)

    p = sub.add_parser("eval-lexsub", help="lexical substitution accuracy")
    p.add_argument("checkpoint")
    p.add_argument("vocab")
    p.add_argument("--instances", required=True, help="lexsub instance file")
    p.add_argument("--lexsub-mode", choices=("contextual", "baladd"), default="contextual")
    p.add_argument("--corpus", default=None, help="training corpus (baladd mode)")
    p.add_argument("--vectors", default=None)
    p.add_argument("-o", "--output", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_eval_lexsub)

    p = sub.add_parser("eval-coherence", help="NPMI topic coherence")
    p.add_argument("checkpoint")
    p.add_argument("vocab")
    p.add_argument("--reference", required=True, help="reference corpus (one doc per line)")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("-k", dest="top_words", type=int, default=None)
    p.add_argument("--cooc-window", dest="cooc_window", type=int, default=None)
    _add_common(p)
    p.set_defaults(func=cmd_eval_coherence)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except TrainingDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except VocabularyMismatch as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except (OSError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
