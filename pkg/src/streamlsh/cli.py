"""Command-line driver.

    streamlsh generate --out data
    streamlsh run --corpus.path data/corpus.jsonl --index.policy smooth:0.95
    streamlsh query --query.snapshot out/snapshot.jsonl --query.text "storm warning"
    streamlsh analyze --analyze.preset fig4
    streamlsh eval --corpus.path data/corpus.jsonl --eval.r_age 10:100:10

Every config key can be set as ``--section.key value``.  Exit codes: 0 ok,
1 validation or parse error, 2 I/O error, 3 internal invariant violation.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .analysis import grid_rows, preset_rows
from .config import SCHEMA, ExperimentConfig, parse_assignments
from .corpus import (
    build_vocabulary, read_corpus, read_interest, replay, to_items, write_corpus, write_interest,
)
from .dynapop import InterestEvent
from .errors import CorpusParseError, DomainError, InvariantViolation, ProtocolError, ValidationError
from .evaluation import SUMMARY_COLUMNS, approx_set, sample_queries, split_point, summary_rows, synthesize_interest
from .experiment import compare_policies, expected_size
from .lsh import derive_seed
from .policies import Smooth, Threshold, parse_policy
from .stream import Item, StreamIndexConfig, StreamLSH
from .synth import generate_items, generate_records
from .vector import SparseVector, Vocabulary, tokenize, vectorize

log = logging.getLogger("streamlsh")

EXIT_OK, EXIT_VALIDATION, EXIT_IO, EXIT_INVARIANT = 0, 1, 2, 3

# per-command branches of the master seed
_SPLIT, _INTEREST = 1, 2


def _meta(command: str, cfg: ExperimentConfig) -> dict:
    # the output directory is left out so relocated reruns stay byte-identical
    config = cfg.to_dict()
    config["run"] = {k: v for k, v in config["run"].items() if k != "out"}
    return {"command": command, "version": __version__, "seed": cfg.seed, "config": config}


def _write_jsonl(path: Path, meta: dict, rows: Sequence[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"meta": meta}, sort_keys=True) + "\n")
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def _write_csv(path: Path, meta: dict, rows: Sequence[dict], columns: Sequence[str] | None = None) -> None:
    if columns is None:
        columns = list(dict.fromkeys(k for r in rows for k in r))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("# " + json.dumps(meta, sort_keys=True) + "\n")
        w = csv.DictWriter(fh, fieldnames=list(columns), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def _out_dir(cfg: ExperimentConfig) -> Path:
    out = Path(cfg["run"]["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_items(cfg: ExperimentConfig) -> tuple[list[Item], Vocabulary | None]:
    """Corpus items from ``[corpus] path``, or a fresh synthetic stream when unset."""
    path = cfg["corpus"]["path"]
    if not path:
        log.info("no corpus path; generating a synthetic stream")
        return list(generate_items(cfg.generator_spec(), cfg.seed)), None
    records = read_corpus(path)
    vocab = build_vocabulary(records)
    return to_items(records, vocab, cfg.follower_norm()), vocab


def _index_config(cfg: ExperimentConfig, policy) -> StreamIndexConfig:
    idx = cfg["index"]
    return StreamIndexConfig(idx["k"], idx["L"], policy, seed=cfg.seed, hash_seed=cfg.hash_seed(),
                             dynapop=cfg.dynapop(), evicted_cache=idx["evicted_cache"])


def cmd_generate(cfg: ExperimentConfig) -> int:
    out = _out_dir(cfg) / "corpus.jsonl"
    n = write_corpus(generate_records(cfg.generator_spec(), cfg.seed), out, meta=_meta("generate", cfg))
    print(f"wrote {n} items to {out}")
    return EXIT_OK


def cmd_run(cfg: ExperimentConfig) -> int:
    items, vocab = _load_items(cfg)
    interest = read_interest(cfg["corpus"]["interest"]) if cfg["corpus"]["interest"] else []
    if interest and cfg.dynapop() is None:
        raise ValidationError("an interest stream needs [dynapop] enabled = true")
    index_cfg = _index_config(cfg, parse_policy(cfg["index"]["policy"]))
    first = min([*(it.tick for it in items[:1]), *(e.tick for e in interest[:1])], default=0)
    index = StreamLSH(index_cfg, start_tick=first)
    meta = _meta("run", cfg)
    out = _out_dir(cfg)
    with open(out / "ticks.jsonl", "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"meta": meta}, sort_keys=True) + "\n")
        for stats in replay(index, items, interest):
            fh.write(json.dumps(stats.to_dict(), sort_keys=True) + "\n")
    index.save(out / "snapshot.jsonl", meta={**meta, "vocabulary": None if vocab is None else vocab.to_dict()})
    print(f"replayed {len(items)} items through tick {index.now}; {index.total_entries()} entries, "
          f"{sum(1 for _ in index.live_items())} live items")
    return EXIT_OK


def _parse_query_vector(text: str) -> SparseVector:
    """``"3:0.5,17:1.25"`` or a JSON list of ``[index, weight]`` pairs."""
    text = text.strip()
    try:
        if text.startswith("["):
            return SparseVector.from_pairs(json.loads(text))
        pairs = [p.split(":") for p in text.split(",") if p.strip()]
        return SparseVector.from_pairs([(int(i), float(w)) for i, w in pairs])
    except (ValueError, TypeError) as exc:
        raise ValidationError(f"bad query vector {text!r}: {exc}") from exc


def cmd_query(cfg: ExperimentConfig) -> int:
    q = cfg["query"]
    if not q["snapshot"]:
        raise ValidationError("[query] snapshot is required")
    index = StreamLSH.load(q["snapshot"])
    if q["text"]:
        vocab = (index.meta or {}).get("vocabulary")
        if vocab is None:
            raise ValidationError("the snapshot has no vocabulary; query with a vector instead")
        vec = vectorize(tokenize(q["text"]), Vocabulary.from_dict(vocab))
    else:
        vec = _parse_query_vector(q["vector"])
    if vec.norm == 0.0:
        raise DomainError("query vector has zero norm")
    now = index.now
    rows = []
    for r in cfg.radii("query"):
        hits = []
        for item_id, sim in approx_set(index, vec, r, now).items():
            it = index.item(item_id)
            hits.append((sim, item_id, now - it.tick, it.quality, index.popularity(item_id, now)))
        hits.sort(key=lambda h: (-h[0], h[1]))
        if q["limit"] > 0:
            hits = hits[:q["limit"]]
        for rank, (s, item_id, age, quality, pop) in enumerate(hits, start=1):
            rows.append({"R_sim": r.r_sim, "R_age": r.r_age, "R_quality": r.r_quality, "R_pop": r.r_pop,
                         "rank": rank, "id": item_id, "similarity": s, "age": age, "quality": quality,
                         "popularity": pop})
    out = _out_dir(cfg) / "query.jsonl"
    _write_jsonl(out, _meta("query", cfg), rows)
    for row in rows:
        print(f"{row['id']}\tsim={row['similarity']:.4f}\tage={row['age']}\tquality={row['quality']:.3f}")
    print(f"{len(rows)} results written to {out}")
    return EXIT_OK


def cmd_analyze(cfg: ExperimentConfig) -> int:
    a = cfg["analyze"]
    if a["preset"]:
        rows = preset_rows(a["preset"], a["k"], a["L"], a["p"])
        name = a["preset"]
    else:
        grid = parse_assignments(a["grid"])
        fixed = {k: v[0] for k, v in parse_assignments(a["fixed"]).items()}
        if any(len(v) != 1 for v in parse_assignments(a["fixed"]).values()):
            raise ValidationError("[analyze] fixed takes one value per name")
        rows = grid_rows(a["function"], grid, fixed)
        name = a["function"]
    out = _out_dir(cfg) / f"analyze-{name}.csv"
    _write_csv(out, _meta("analyze", cfg), rows)
    print(f"{len(rows)} rows written to {out}")
    return EXIT_OK


def _resolve_policies(cfg: ExperimentConfig, train: Sequence[Item]) -> dict:
    """Turn ``kind:auto`` entries into sizes matched to the first explicit policy."""
    specs = cfg.policy_specs()
    explicit = [parse_policy(s) for _, s in specs if not s.endswith(":auto")]
    resolved = {}
    for label, spec in specs:
        if not spec.endswith(":auto"):
            resolved[label] = parse_policy(spec)
        elif spec.startswith("bucket"):
            resolved[label] = None
        else:
            smooth = next((p for p in explicit if isinstance(p, Smooth)), None)
            if smooth is None:
                raise ValidationError("threshold:auto needs a smooth policy to match")
            resolved[label] = Threshold(max(1, round(expected_size(smooth, train, 1))))
    return resolved


def _split_corpus(cfg: ExperimentConfig, fraction: float) -> tuple[list[Item], list[Item]]:
    """Tick-aligned train/test split; text is weighted with train-only IDF.

    Test records sharing no term with the train vocabulary cannot be
    vectorized and are skipped.
    """
    path = cfg["corpus"]["path"]
    if not path:
        items, _ = _load_items(cfg)
        cut = split_point(items, fraction)
        return items[:cut], items[cut:]
    records = read_corpus(path)
    cut = split_point(records, fraction)
    vocab = build_vocabulary(records[:cut])
    train = to_items(records[:cut], vocab, cfg.follower_norm())
    test = []
    for rec in records[cut:]:
        try:
            test.extend(to_items([rec], vocab, cfg.follower_norm()))
        except DomainError:
            log.info("skipping test record %r: no train-vocabulary terms", rec.id)
    return train, test


def cmd_eval(cfg: ExperimentConfig) -> int:
    e, d = cfg["eval"], cfg["dynapop"]
    train, test = _split_corpus(cfg, e["train_fraction"])
    queries = sample_queries(test, e["sample_size"], np.random.default_rng(derive_seed(cfg.seed, _SPLIT)))
    interest: list[InterestEvent] = []
    if cfg["corpus"]["interest"]:
        interest = read_interest(cfg["corpus"]["interest"])
    elif d["enabled"] and d["synthesize"]:
        train, interest = synthesize_interest(train, d["query_probability"], d["top_n"],
                                              np.random.default_rng(derive_seed(cfg.seed, _INTEREST)),
                                              d["stream_fraction"])
    if interest and not d["enabled"]:
        raise ValidationError("an interest stream needs [dynapop] enabled = true")
    policies = _resolve_policies(cfg, train)
    runs = compare_policies(train, queries, cfg.radii("eval"), cfg["index"]["k"], cfg["index"]["L"], policies,
                            seed=cfg.seed, hash_seed=cfg.hash_seed(), capacity_tol=e["capacity_tol"],
                            dynapop=cfg.dynapop(), interest=interest)
    meta = _meta("eval", cfg)
    out = _out_dir(cfg)
    records = []
    summary = []
    for run in runs:
        records.extend(run.report.to_records())
        summary.extend(summary_rows(run.report))
    _write_jsonl(out / "recall.jsonl", meta, records)
    _write_csv(out / "recall.csv", meta, summary, SUMMARY_COLUMNS)
    if interest:
        write_interest(interest, out / "interest.jsonl", meta=meta)
    for row in summary:
        print(f"{row['policy']:<10} R_sim={row['R_sim']} R_age={row['R_age']} R_q={row['R_quality']} "
              f"R_pop={row['R_pop']} recall={row['recall']}")
    return EXIT_OK


COMMANDS = {"generate": cmd_generate, "run": cmd_run, "query": cmd_query, "analyze": cmd_analyze,
            "eval": cmd_eval}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="streamlsh", description="Similarity search over item streams.")
    parser.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI config file")
    common.add_argument("--seed", type=int, help="master seed (same as --run.seed)")
    common.add_argument("--out", help="output directory (same as --run.out)")
    common.add_argument("-v", "--verbose", action="store_true")
    keys = common.add_argument_group("config keys")
    for section, fields in SCHEMA.items():
        for key, default in fields.items():
            keys.add_argument(f"--{section}.{key}", dest=f"{section}.{key}", metavar=type(default).__name__.upper(),
                              default=None, help=argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "generate": "write a synthetic planted-cluster corpus",
        "run": "replay a corpus through one index; write tick stats and a snapshot",
        "query": "radius query against a snapshot",
        "analyze": "evaluate closed forms over a preset or custom grid",
        "eval": "recall-at-radius comparison of retention policies",
    }
    for name, text in helps.items():
        sub.add_parser(name, parents=[common], help=text, description=text + ". Any config key may be "
                       "given as --section.key VALUE; see the config module for the list.")
    return parser


def _overrides(args: argparse.Namespace) -> dict[str, dict[str, str]]:
    out: dict[str, dict[str, str]] = {}
    for dest, value in vars(args).items():
        if value is not None and "." in dest:
            section, key = dest.split(".", 1)
            out.setdefault(section, {})[key] = value
    if args.seed is not None:
        out.setdefault("run", {})["seed"] = args.seed
    if args.out is not None:
        out.setdefault("run", {})["out"] = args.out
    return out


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = ExperimentConfig.load(args.config, _overrides(args))
        cfg.validate(args.command)
        return COMMANDS[args.command](cfg)
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (ValidationError, DomainError, ProtocolError, CorpusParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
