"""Command-line entry point: ``kgsim <subcommand> [flags]``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical divergence.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import fields
from pathlib import Path

from . import __version__
from .analytics import export_projection, pca_2d
from .evaluation import evaluate, format_table, write_ranks_csv, write_report_csv
from .inference import batch_assess, write_assessments_csv
from .models import CheckpointError, load_checkpoint, save_checkpoint
from .similarity import annotate, load_fingerprints, top_k_similar, write_similarity_csv
from .store import (TripleFormatError, build_filter_index, export_tsv, ingest_tsv,
                    load_entity_types, load_names, split, train_valid_test_split)
from .training import (CONFIG_KEYS_REVERSE, DivergenceError, TrainConfig, config_from_text,
                       grid_search, parse_grid, train)

logger = logging.getLogger("kgsim")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _csv_list(text):
    return [x for x in text.split(",") if x]


def _add_train_flags(p):
    g = p.add_argument_group("config overrides")
    g.add_argument("--model")
    g.add_argument("--dim", type=int)
    g.add_argument("--loss")
    g.add_argument("--optimizer")
    g.add_argument("--lr", type=float)
    g.add_argument("--reg")
    g.add_argument("--reg-lambda", type=float)
    g.add_argument("--negatives", type=int)
    g.add_argument("--epochs", type=int)
    g.add_argument("--batch", type=int)
    g.add_argument("--seed", type=int)
    g.add_argument("--init-scale", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="kgsim", description="Knowledge-graph embeddings, link prediction "
                     "and embedding-based entity similarity.")
    parser.add_argument("--version", action="version", version=f"kgsim {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("split", help="split a triple TSV into train/test")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--test-frac", type=float, default=0.2)
    p.add_argument("--valid-frac", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out-train", required=True)
    p.add_argument("--out-test", required=True)
    p.add_argument("--out-valid")

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    p.add_argument("--config")
    p.add_argument("--train", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--loss-log", help="CSV of per-epoch mean loss")
    _add_train_flags(p)

    p = sub.add_parser("grid", help="train and rank a grid of configs")
    p.add_argument("--grid", required=True)
    p.add_argument("--config", help="base config applied under every grid line")
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--valid")
    p.add_argument("--metric", default="mrr")
    p.add_argument("--protocol", choices=["raw", "filtered"], default="filtered")
    p.add_argument("--out")

    p = sub.add_parser("eval", help="link-prediction metrics for a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--known", action="append", default=[],
                   help="extra triple files for the filter (train, valid); repeatable")
    p.add_argument("--protocol", choices=["raw", "filtered", "both"], default="both")
    p.add_argument("--hits", type=lambda s: [int(x) for x in _csv_list(s)], default=[1, 3, 10])
    p.add_argument("--out")
    p.add_argument("--ranks-out")
    p.add_argument("--threads", type=int, default=1)

    p = sub.add_parser("assess", help="rank/score/probability for statements")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--statements", required=True)
    p.add_argument("--known", action="append", default=[])
    p.add_argument("--protocol", choices=["raw", "filtered"], default="filtered")
    p.add_argument("--out")

    p = sub.add_parser("similar", help="top-k similar entities for a query")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--query", required=True)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--out")
    p.add_argument("--types", help="entity<TAB>type file")
    p.add_argument("--candidate-type", help="restrict candidates to this type")
    p.add_argument("--candidates", help="file with one candidate label per line")
    p.add_argument("--entity-type", help="restrict the profile entity set to this type")
    p.add_argument("--relations", type=_csv_list, help="comma-separated relation labels")
    p.add_argument("--both-sides", action="store_true")
    p.add_argument("--names", help="entity<TAB>display name file")
    p.add_argument("--fingerprints", help="entity<TAB>hex fingerprint file")
    p.add_argument("--threads", type=int, default=1)

    p = sub.add_parser("project", help="2D PCA coordinates of entity embeddings")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--types")
    p.add_argument("--out", required=True)
    return parser


def resolve_config(args) -> TrainConfig:
    cfg = TrainConfig()
    if getattr(args, "config", None):
        cfg = config_from_text(Path(args.config).read_text(encoding="utf-8"), cfg)
    overrides = []
    for f in fields(TrainConfig):
        key = CONFIG_KEYS_REVERSE[f.name]
        value = getattr(args, key.replace("-", "_"), None)
        if value is not None:
            overrides.append(f"{key}={value}")
    if overrides:
        cfg = config_from_text(" ".join(overrides), cfg)
    return cfg


def echo_config(cfg: TrainConfig) -> str:
    text = f"kgsim {__version__} config: {cfg.to_text()}"
    logger.info(text)
    return text


def _open_out(path):
    return open(path, "w", newline="", encoding="utf-8") if path else sys.stdout


def cmd_split(args):
    store = ingest_tsv(args.input)
    if args.valid_frac > 0:
        if not args.out_valid:
            raise UsageError("--valid-frac requires --out-valid")
        tr, va, te = train_valid_test_split(store, args.valid_frac, args.test_frac, args.seed)
        export_tsv(va, args.out_valid)
    else:
        tr, te = split(store, args.test_frac, args.seed)
    export_tsv(tr, args.out_train)
    export_tsv(te, args.out_test)
    logger.info("split %d triples: %d train, %d test", len(store), len(tr), len(te))


def cmd_train(args):
    cfg = resolve_config(args)
    echo_config(cfg)
    store = ingest_tsv(args.train)
    params, report = train(store, cfg)
    save_checkpoint(args.checkpoint, params, store.entity_dict, store.relation_dict)
    for i, loss in enumerate(report.epoch_losses):
        logger.debug("epoch %d loss %.6f", i, loss)
    if report.epoch_losses:
        logger.info("final epoch loss %.6f (%.1fs)", report.epoch_losses[-1], report.wall_time)
    if args.loss_log:
        with open(args.loss_log, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "loss"])
            w.writerows(enumerate(report.epoch_losses))


def cmd_grid(args):
    base = resolve_config(args)
    grid = parse_grid(Path(args.grid).read_text(encoding="utf-8"), base)
    if not grid:
        raise UsageError("grid file has no configs")
    tr = ingest_tsv(args.train)
    te = ingest_tsv(args.test, tr.entity_dict, tr.relation_dict)
    extra = [ingest_tsv(args.valid, tr.entity_dict, tr.relation_dict)] if args.valid else []
    rows = grid_search(tr, grid, te, args.metric, extra, args.protocol)
    fh = _open_out(args.out)
    try:
        keys = sorted({k for r in rows for k in r.metrics}) or ["mrr"]
        w = csv.writer(fh)
        w.writerow(["rank", "config", *keys, "error"])
        for i, r in enumerate(rows, start=1):
            echo_config(r.config)
            w.writerow([i, r.config.to_text(), *(f"{r.metrics[k]:.6f}" if k in r.metrics else ""
                                                  for k in keys), r.error or ""])
    finally:
        if fh is not sys.stdout:
            fh.close()


def _load_with_known(args, path):
    params, ents, rels = load_checkpoint(args.checkpoint)
    target = ingest_tsv(path, ents, rels) if path else None
    known = [ingest_tsv(p, ents, rels) for p in args.known]
    stores = ([target] if target is not None else []) + known
    filt = build_filter_index(stores) if stores else None
    return params, ents, rels, target, filt


def cmd_eval(args):
    params, _, _, test, filt = _load_with_known(args, args.test)
    protocols = ["raw", "filtered"] if args.protocol == "both" else [args.protocol]
    reports = [evaluate(params, test, filt, p, args.hits, n_jobs=args.threads) for p in protocols]
    print(format_table(reports))
    if args.out:
        write_report_csv(reports, args.out)
    if args.ranks_out:
        write_ranks_csv(reports[-1], test, args.ranks_out)


def cmd_assess(args):
    params, ents, rels = load_checkpoint(args.checkpoint)
    known = [ingest_tsv(p, ents, rels) for p in args.known]
    filt = build_filter_index(known) if known else None
    if args.protocol == "filtered" and filt is None:
        raise UsageError("--protocol filtered needs at least one --known file")
    statements = []
    with open(args.statements, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) < 3:
                raise TripleFormatError(f"{args.statements}:{lineno}: expected 3 fields")
            statements.append(parts[:3])
    rows = batch_assess(params, statements, ents, rels, filt, args.protocol)
    for r in rows:
        if r.error:
            logger.warning("%s: %s", r.statement, r.error)
    if args.out:
        write_assessments_csv(rows, args.out)
    else:
        write_assessments_csv(rows, "/dev/stdout")


def _label_set(d, labels, what):
    out = []
    for label in labels:
        if label not in d:
            raise KeyError(f"unknown {what} label {label!r}")
        out.append(d.encode(label))
    return out


def cmd_similar(args):
    params, ents, rels = load_checkpoint(args.checkpoint)
    if args.query not in ents:
        raise KeyError(f"unknown entity label {args.query!r}")
    query = ents.encode(args.query)
    types = load_entity_types(args.types, ents) if args.types else {}
    if (args.candidate_type or args.entity_type) and not types:
        raise UsageError("type filters need --types")
    if args.candidates:
        labels = [ln.strip() for ln in Path(args.candidates).read_text(encoding="utf-8").splitlines()
                  if ln.strip()]
        cand = [c for c in _label_set(ents, labels, "candidate") if c != query]
    else:
        cand = [i for i in range(len(ents)) if i != query]
    if args.candidate_type:
        cand = [c for c in cand if types.get(c) == args.candidate_type]
    entities = None
    if args.entity_type:
        entities = [i for i, t in types.items() if t == args.entity_type]
    relations = _label_set(rels, args.relations, "relation") if args.relations else None
    rows = top_k_similar(params, query, cand, args.k, relations, entities,
                         args.both_sides, args.threads)
    names = load_names(args.names) if args.names else None
    fps = load_fingerprints(args.fingerprints) if args.fingerprints else None
    annotate(rows, ents, names, fps, args.query)
    for r in rows:
        if r.degenerate:
            logger.warning("%s: profile MSE below floor; ratio is capped", r.label)
    write_similarity_csv(rows, args.out or "/dev/stdout", names is not None, fps is not None)


def cmd_project(args):
    params, ents, _ = load_checkpoint(args.checkpoint)
    types = load_entity_types(args.types, ents) if args.types else {}
    proj = pca_2d(params.entity_emb)
    export_projection(proj, ents.id_to_label, types, args.out)
    logger.info("explained variance: %.6g, %.6g", *proj.explained_variance)


COMMANDS = {"split": cmd_split, "train": cmd_train, "grid": cmd_grid, "eval": cmd_eval,
            "assess": cmd_assess, "similar": cmd_similar, "project": cmd_project}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"kgsim: error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr, force=True)
    try:
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"kgsim: error: {exc}", file=sys.stderr)
        return 1
    except DivergenceError as exc:
        logger.error("%s", exc)
        return 3
    except (TripleFormatError, CheckpointError, KeyError, ValueError, IndexError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        logger.error("%s", msg)
        return 2
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
