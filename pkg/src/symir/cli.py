"""Single entry point exposing every pipeline stage with reproducible runs.

Every command that writes an artifact also writes a ``<output>.manifest.json``
beside it carrying the resolved configuration, the seed, and sha256 checksums
of the outputs, so a run is reproducible from its manifest alone (manifests
contain no timestamps).

Exit codes: 0 success, 1 malformed arguments, 2 input errors, 3 internal
invariant breach.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .abc_notation import (
    AbcError,
    emit_abc,
    emit_interleaved,
    interleaved_to_standard,
    parse_abc,
    standard_to_interleaved,
    strip_instruments,
    strip_lyrics,
)
from .corpus import read_kv_config, read_triplets, write_triplets
from .langid import StubLanguageIdentifier, bundled_identifier
from .model import ModelConfig, load_checkpoint, save_checkpoint
from .mtf import MtfError, document_text, midi_to_mtf, mtf_to_midi, parse_mtf
from .patching import patchize_abc, patchize_mtf, truncate
from .refinery import ClientUnavailable, HttpChatClient, MockLlmClient, refine_corpus
from .retrieval import (
    EmbeddingIndex,
    IoFailure,
    LabeledDataset,
    export_embeddings,
    hit_rate_at_k,
    import_embeddings,
    linear_probe,
    mrr,
    retrieval_ranks,
    search,
)
from .smf import SmfError, SmfFile, merge_tracks, parse_smf, write_smf
from .tokenizers import HashWordTokenizer
from .training import (
    EmptyCorpus,
    TrainConfig,
    music_embedding,
    text_embedding,
    train_clamp,
    train_m3,
)

INPUT_ERRORS = (SmfError, MtfError, AbcError, IoFailure, ClientUnavailable,
                EmptyCorpus, OSError, ValueError, KeyError, json.JSONDecodeError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(primary_output: Path, command: str, config: dict,
                   outputs: list[Path]) -> Path:
    manifest = {
        "tool": "symir",
        "version": __version__,
        "command": command,
        "config": config,
        "outputs": {out.name: _sha256(out) for out in sorted(outputs)},
    }
    path = Path(str(primary_output) + ".manifest.json")
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")
    return path


# -- convert -----------------------------------------------------------------

def cmd_convert(args) -> int:
    source = Path(args.input)
    target = Path(args.output)
    if args.direction == "midi2mtf":
        smf = parse_smf(source.read_bytes())
        stream = merge_tracks(smf)
        doc = midi_to_mtf(stream, smf.ticks_per_beat,
                          on_unsupported="error" if args.strict_meta else "skip")
        target.write_text(document_text(doc), encoding="utf-8")
    elif args.direction == "mtf2midi":
        doc = parse_mtf(source.read_text(encoding="utf-8"))
        events, ticks = mtf_to_midi(doc)
        smf = SmfFile(ticks_per_beat=ticks, format=0, tracks=[list(events)])
        target.write_bytes(write_smf(smf))
    elif args.direction == "abc2interleaved":
        text = source.read_text(encoding="utf-8")
        if args.strip_lyrics:
            text = strip_lyrics(text)
        if args.strip_instruments:
            text = strip_instruments(text, "abc")
        tune = parse_abc(text)
        target.write_text(emit_interleaved(standard_to_interleaved(tune)),
                          encoding="utf-8")
    else:  # interleaved2abc
        tune = parse_abc(source.read_text(encoding="utf-8"))
        standard = interleaved_to_standard(standard_to_interleaved(tune))
        target.write_text(emit_abc(standard), encoding="utf-8")
    config = {"direction": args.direction, "input": str(source),
              "output": str(target), "strip_lyrics": args.strip_lyrics,
              "strip_instruments": args.strip_instruments,
              "strict_meta": args.strict_meta}
    write_manifest(target, "convert", config, [target])
    return 0


# -- tokenize -----------------------------------------------------------------

def cmd_tokenize(args) -> int:
    source = Path(args.input)
    target = Path(args.output)
    text = source.read_text(encoding="utf-8")
    seq = patchize_abc(text) if args.modality == "abc" else patchize_mtf(text)
    rng = np.random.default_rng(args.seed)
    seq = truncate(seq, args.max_patches, rng)
    with open(target, "w", encoding="utf-8") as handle:
        for patch in seq:
            handle.write(f"{patch.kind}\t{json.dumps(patch.text)}\n")
    config = {"modality": args.modality, "max_patches": args.max_patches,
              "seed": args.seed, "input": str(source), "output": str(target)}
    write_manifest(target, "tokenize", config, [target])
    return 0


# -- train ---------------------------------------------------------------------

def _train_config_from_file(path: str | None, seed: int) -> TrainConfig:
    values = read_kv_config(path) if path else {}
    return TrainConfig(
        batch_size=int(values.get("batch_size", 16)),
        learning_rate=float(values.get("learning_rate", 1e-3)),
        warmup_steps=int(values.get("warmup_steps", 50)),
        max_epochs=int(values.get("max_epochs", 100)),
        seed=int(values.get("seed", seed)),
        logit_scale=float(values.get("logit_scale", 1.0)),
        weight_decay=float(values.get("weight_decay", 0.0)),
    )


def cmd_train(args) -> int:
    triplets = read_triplets(args.corpus)
    config = _train_config_from_file(args.config, args.seed)
    target = Path(args.out)
    max_steps = args.max_steps
    if args.stage == "m3":
        items = []
        for triplet in triplets:
            items.append(("abc", triplet.abc))
            items.append(("mtf", triplet.mtf))
        result = train_m3(items, config, max_steps=max_steps)
        kind = "m3"
    else:
        m3_params = None
        if args.init_from:
            m3_params, _ = load_checkpoint(args.init_from)
        result = train_clamp(triplets, config, m3_params=m3_params,
                             max_steps=max_steps)
        kind = "clamp"
    save_checkpoint(target, result.params, config=result.model_config,
                    kind=kind, meta={"losses_first": result.losses[:1],
                                     "losses_last": result.losses[-1:],
                                     "steps": len(result.losses)})
    config_dict = {"stage": args.stage, "corpus": args.corpus,
                   "config_file": args.config, "seed": config.seed,
                   "max_steps": max_steps,
                   "train_config": {k: getattr(config, k)
                                    for k in ("batch_size", "learning_rate",
                                              "warmup_steps", "max_epochs",
                                              "seed", "logit_scale",
                                              "weight_decay")}}
    write_manifest(target, "train", config_dict, [target])
    return 0


# -- refine ----------------------------------------------------------------------

def cmd_refine(args) -> int:
    corpus = read_triplets(args.corpus)
    if args.mock:
        client = MockLlmClient(malformed_rate=args.mock_malformed_rate,
                               seed=args.seed)
        identifier = StubLanguageIdentifier()
    else:
        if not args.endpoint:
            raise UsageError("--endpoint is required without --mock")
        client = HttpChatClient(args.endpoint)
        identifier = bundled_identifier()
    refined, stats = refine_corpus(corpus, client, seed=args.seed,
                                   identifier=identifier,
                                   progress_path=args.progress,
                                   parallel=args.parallel)
    target = Path(args.out)
    write_triplets(target, refined)
    outputs = [target]
    if args.stats:
        stats_path = Path(args.stats)
        with open(stats_path, "w", encoding="utf-8") as handle:
            handle.write("lang,count_before,count_after\n")
            for lang, before, after in stats.rows():
                handle.write(f"{lang},{before},{after}\n")
        outputs.append(stats_path)
    config = {"corpus": args.corpus, "out": args.out, "seed": args.seed,
              "mock": args.mock, "endpoint": args.endpoint,
              "parallel": args.parallel,
              "mock_malformed_rate": args.mock_malformed_rate}
    write_manifest(target, "refine", config, outputs)
    return 0


# -- embed / search / eval ----------------------------------------------------------

def _load_model(path):
    params, header = load_checkpoint(path)
    model_config = ModelConfig.from_dict(header["model_config"])
    return params, model_config


def cmd_embed(args) -> int:
    params, model_config = _load_model(args.checkpoint)
    triplets = read_triplets(args.corpus)
    tokenizer = HashWordTokenizer(model_config.text_vocab_size)
    ids, rows = [], []
    for index, triplet in enumerate(triplets):
        item_id = f"{args.id_prefix}{index:06d}"
        if args.side == "music":
            music = triplet.abc if args.modality == "abc" else triplet.mtf
            vector = music_embedding(music, args.modality, params, model_config)
        else:
            text = triplet.raw_text or triplet.llm_en or triplet.llm_nen
            vector = text_embedding(text, tokenizer, params, model_config)
        ids.append(item_id)
        rows.append(vector)
    index = EmbeddingIndex(ids=ids, matrix=np.stack(rows))
    target = Path(args.out)
    export_embeddings(index, target)
    config = {"checkpoint": args.checkpoint, "corpus": args.corpus,
              "side": args.side, "modality": args.modality,
              "id_prefix": args.id_prefix, "out": args.out}
    write_manifest(target, "embed", config, [target])
    return 0


def cmd_search(args) -> int:
    index = import_embeddings(args.index)
    queries = import_embeddings(args.query_file)
    k = min(args.k, len(index))
    lines = ["query_id,rank,candidate_id,score"]
    for query_id, vector in zip(queries.ids, queries.matrix):
        result = search(index, vector, k=k, metric=args.metric,
                        query_id=query_id)
        for rank, (candidate, score) in enumerate(zip(result.ids,
                                                      result.scores), start=1):
            lines.append(f"{query_id},{rank},{candidate},{repr(float(score))}")
    output = "\n".join(lines) + "\n"
    if args.out:
        target = Path(args.out)
        target.write_text(output, encoding="utf-8")
        config = {"index": args.index, "query_file": args.query_file,
                  "k": args.k, "metric": args.metric, "out": args.out}
        write_manifest(target, "search", config, [target])
    else:
        sys.stdout.write(output)
    return 0


def cmd_eval(args) -> int:
    if args.task == "retrieval" and not (args.index and args.queries):
        raise UsageError("eval retrieval requires --index and --queries")
    if args.task == "probe" and not (args.train and args.test):
        raise UsageError("eval probe requires --train and --test")
    target = Path(args.out)
    rows = [("metric", "value")]
    if args.task == "retrieval":
        candidates = import_embeddings(args.index)
        queries = import_embeddings(args.queries)
        ranks = retrieval_ranks(queries, candidates, metric=args.metric)
        rows.append(("mrr", mrr(ranks)))
        for k in (1, 10, 100):
            if k <= len(candidates):
                rows.append((f"hr@{k}", hit_rate_at_k(ranks, k)))
    else:  # probe
        train_set = _labeled_dataset(args.train)
        test_set = _labeled_dataset(args.test)
        result = linear_probe(train_set, test_set)
        rows.append(("macro_f1", result.macro_f1))
        rows.append(("accuracy", result.accuracy))
    with open(target, "w", encoding="utf-8") as handle:
        for name, value in rows:
            handle.write(f"{name},{value}\n")
    config = {key: value for key, value in vars(args).items()
              if key not in ("func",) and value is not None}
    write_manifest(target, "eval", config, [target])
    return 0


def _labeled_dataset(path) -> LabeledDataset:
    """Labeled embeddings: csv rows of `id,label,coord...` under a header."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    labels, rows = [], []
    for line in lines[1:]:
        cells = line.split(",")
        labels.append(int(cells[1]))
        rows.append([float(cell) for cell in cells[2:]])
    return LabeledDataset(np.array(rows), np.array(labels))


# -- parser ---------------------------------------------------------------------------

def build_parser() -> _Parser:
    parser = _Parser(prog="symir",
                     description="Symbolic music retrieval pipeline stages")
    parser.add_argument("--version", action="version", version=__version__)
    commands = parser.add_subparsers(dest="command", required=True)

    convert = commands.add_parser("convert", help="format conversions")
    convert.add_argument("direction", choices=["midi2mtf", "mtf2midi",
                                               "abc2interleaved",
                                               "interleaved2abc"])
    convert.add_argument("input")
    convert.add_argument("output")
    convert.add_argument("--strip-lyrics", action="store_true")
    convert.add_argument("--strip-instruments", action="store_true")
    convert.add_argument("--strict-meta", action="store_true",
                         help="fail on messages with no text rendering")
    convert.set_defaults(func=cmd_convert)

    tokenize = commands.add_parser("tokenize", help="bar patching dump")
    tokenize.add_argument("input")
    tokenize.add_argument("output")
    tokenize.add_argument("--modality", choices=["abc", "mtf"], required=True)
    tokenize.add_argument("--max-patches", type=int, default=512)
    tokenize.add_argument("--seed", type=int, default=0)
    tokenize.set_defaults(func=cmd_tokenize)

    train = commands.add_parser("train", help="training loops")
    train.add_argument("stage", choices=["m3", "clamp"])
    train.add_argument("--corpus", required=True)
    train.add_argument("--config", help="key=value training config file")
    train.add_argument("--seed", type=int, default=0)
    train.add_argument("--out", required=True)
    train.add_argument("--max-steps", type=int)
    train.add_argument("--init-from", help="music tower checkpoint (clamp)")
    train.set_defaults(func=cmd_train)

    refine = commands.add_parser("refine", help="metadata refinement")
    refine.add_argument("--corpus", required=True)
    refine.add_argument("--out", required=True)
    refine.add_argument("--endpoint")
    refine.add_argument("--mock", action="store_true")
    refine.add_argument("--mock-malformed-rate", type=float, default=0.0)
    refine.add_argument("--seed", type=int, default=0)
    refine.add_argument("--parallel", type=int, default=1)
    refine.add_argument("--progress")
    refine.add_argument("--stats")
    refine.set_defaults(func=cmd_refine)

    embed = commands.add_parser("embed", help="embed a corpus to an index")
    embed.add_argument("--checkpoint", required=True)
    embed.add_argument("--corpus", required=True)
    embed.add_argument("--out", required=True)
    embed.add_argument("--side", choices=["music", "text"], default="music")
    embed.add_argument("--modality", choices=["abc", "mtf"], default="abc")
    embed.add_argument("--id-prefix", default="item")
    embed.set_defaults(func=cmd_embed)

    search_parser = commands.add_parser("search", help="similarity search")
    search_parser.add_argument("--index", required=True)
    search_parser.add_argument("--query-file", required=True)
    search_parser.add_argument("--k", type=int, default=10)
    search_parser.add_argument("--metric", choices=["cosine", "dot"],
                               default="cosine")
    search_parser.add_argument("--out")
    search_parser.set_defaults(func=cmd_search)

    evaluate = commands.add_parser("eval", help="retrieval / probe metrics")
    evaluate.add_argument("task", choices=["retrieval", "probe"])
    evaluate.add_argument("--index")
    evaluate.add_argument("--queries")
    evaluate.add_argument("--train")
    evaluate.add_argument("--test")
    evaluate.add_argument("--metric", choices=["cosine", "dot"],
                          default="cosine")
    evaluate.add_argument("--out", required=True)
    evaluate.set_defaults(func=cmd_eval)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        sys.stderr.write(f"symir: error: {exc}\n")
        parser.print_usage(sys.stderr)
        return 1
    try:
        return args.func(args)
    except UsageError as exc:
        sys.stderr.write(f"symir: error: {exc}\n")
        return 1
    except INPUT_ERRORS as exc:
        sys.stderr.write(f"symir: input error: {exc}\n")
        return 2
    except Exception as exc:  # internal invariant breach
        sys.stderr.write(f"symir: internal error: {exc!r}\n")
        return 3


if __name__ == "__main__":
    sys.exit(main())
