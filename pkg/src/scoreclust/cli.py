"""Command-line front end: synth -> cluster -> cut -> eval / render.

Every command that writes files also writes ``<out>.manifest.json``; running
``scoreclust run --manifest FILE`` repeats that exact invocation.

Exit status: 0 success, 1 usage error, 2 data error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .dendro import cut_height, cut_k, export_dot, export_newick, read_partition, write_partition
from .evaluate import error_breakdown, per_subject_structure, purity, write_records
from .linkage import is_monotone, read_merge_table, write_merge_table, cluster
from .score_space import (LABEL_FIELDS, load_metadata, load_similarity, subset, to_distance,
                          write_binary, write_metadata, write_tabular)
from .synth import SynthConfig, generate, read_settings

log = logging.getLogger("scoreclust")

OUT_DIR_ENV = "SCORECLUST_OUT_DIR"
EXIT_USAGE = 1
EXIT_DATA = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _out_path(p: str | None) -> Path | None:
    if p is None:
        return None
    path = Path(p)
    base = os.environ.get(OUT_DIR_ENV)
    if base and not path.is_absolute():
        path = Path(base) / path
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _write_manifest(args, inputs, outputs) -> None:
    record = {
        "tool": "scoreclust",
        "version": __version__,
        "command": args.command,
        "args": {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "command", "verbose")},
        "inputs": [str(p) for p in inputs if p],
        "outputs": [str(p) for p in outputs if p],
        "seed": getattr(args, "seed", None),
    }
    path = Path(str(outputs[0]) + ".manifest.json")
    path.write_text(json.dumps(record, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_matrix(sim, path: Path, fmt: str) -> None:
    if fmt == "binary":
        write_binary(sim, path)
    else:
        write_tabular(sim, path, delimiter="\t")


def cmd_synth(args):
    items = read_settings(args.config) if args.config else {}
    for kv in args.set or []:
        if "=" not in kv:
            raise UsageError(f"--set expects key=value, got {kv!r}")
        k, v = kv.split("=", 1)
        items[k] = v
    if args.seed is not None:
        items["seed"] = str(args.seed)
    cfg = SynthConfig.from_mapping(items)
    sim, meta = generate(cfg)
    out = _out_path(args.out)
    meta_out = _out_path(args.metadata) if args.metadata else out.with_name(out.name + ".meta.csv")
    _write_matrix(sim, out, args.format)
    write_metadata(meta, meta_out)
    print(f"wrote {sim.n} images from {cfg.n_subjects} subjects to {out} and {meta_out}")
    args.seed = cfg.seed
    _write_manifest(args, [args.config], [out, meta_out])


def cmd_subset(args):
    sim = load_similarity(args.input)
    meta = load_metadata(args.metadata)
    field, _, values = args.where.partition("=")
    if field not in LABEL_FIELDS or not values:
        raise UsageError(f"--where expects FIELD=value[,value...] with FIELD in {', '.join(LABEL_FIELDS)}")
    wanted = set(values.split(","))
    sub = subset(sim, lambda r: r.label(field) in wanted, meta)
    out = _out_path(args.out)
    _write_matrix(sub, out, args.format)
    print(f"kept {sub.n} of {sim.n} images")
    _write_manifest(args, [args.input, args.metadata], [out])


def cmd_cluster(args):
    sim = load_similarity(args.input)
    tree = cluster(to_distance(sim), args.method, ward_variant=args.ward_variant, consume=True)
    out = _out_path(args.out)
    write_merge_table(tree, out)
    outputs = [out]
    if args.newick:
        p = _out_path(args.newick)
        p.write_text(export_newick(tree) + "\n", encoding="utf-8")
        outputs.append(p)
    if args.dot:
        p = _out_path(args.dot)
        p.write_text(export_dot(tree), encoding="utf-8")
        outputs.append(p)
    print(f"{args.method}: {tree.n_leaves} leaves, root height {float(tree.heights[-1])!r}")
    _write_manifest(args, [args.input], outputs)


def cmd_cut(args):
    if (args.k is None) == (args.height is None):
        raise UsageError("cut needs exactly one of --k or --height")
    tree = read_merge_table(args.input)
    p = cut_k(tree, args.k) if args.k is not None else cut_height(tree, args.height)
    out = _out_path(args.out)
    write_partition(p, out)
    print(f"{p.k} clusters over {len(p)} images")
    _write_manifest(args, [args.input], [out])


def cmd_eval(args):
    meta = load_metadata(args.metadata)
    out = _out_path(args.out)
    if args.per_subject:
        matrix = load_similarity(args.input)
        reports, skipped = per_subject_structure(matrix, meta, args.method, args.by,
                                                 jobs=args.jobs, ward_variant=args.ward_variant)
        records = []
        for s, r in reports:
            records.append({"record": "subject", "subject_id": s, "by": args.by,
                            "n_images": r.n_images, "purity": r.overall_purity,
                            "homogeneous_clusters": r.homogeneous_clusters})
        mean = sum(r.overall_purity for _, r in reports) / len(reports)
        records.insert(0, {"record": "summary", "by": args.by, "subjects": len(reports),
                           "skipped": skipped, "mean_purity": mean})
        print(f"mean 2-cluster {args.by} purity over {len(reports)} subjects: {mean:.4f}")
    else:
        p = read_partition(args.input)
        report = purity(p, meta, args.by)
        records = report.to_records()
        print(report.format_table())
        if args.breakdown:
            fields = args.breakdown.split(",")
            for f in fields:
                if f not in LABEL_FIELDS:
                    raise UsageError(f"unknown label field {f!r} in --breakdown")
            bd = error_breakdown(p, meta, args.by, fields, scope=args.scope)
            records += bd.to_records()
            print(bd.format_table())
    if out:
        write_records(records, out)
        _write_manifest(args, [args.input, args.metadata], [out])


def cmd_render(args):
    tree = read_merge_table(args.input)
    meta = load_metadata(args.metadata) if args.metadata else None
    if args.by and meta is None:
        raise UsageError("--by needs --metadata")
    text = export_dot(tree, meta, args.by) if args.format == "dot" else export_newick(tree) + "\n"
    out = _out_path(args.out)
    out.write_text(text, encoding="utf-8")
    _write_manifest(args, [args.input, args.metadata], [out])


def cmd_check(args):
    tree = read_merge_table(args.input)
    if not is_monotone(tree):
        print(f"{args.input}: merge heights are not monotone", file=sys.stderr)
        return EXIT_DATA
    print(f"ok: {tree.n_leaves - 1} merges, monotone heights, root at {float(tree.heights[-1])!r}")
    return 0


def cmd_run(args):
    record = json.loads(Path(args.manifest).read_text(encoding="utf-8"))
    argv = [record["command"]]
    for key, val in record["args"].items():
        if val is None or val is False:
            continue
        flag = "--" + key.replace("_", "-")
        if val is True:
            argv.append(flag)
        elif isinstance(val, list):
            for v in val:
                argv += [flag, str(v)]
        else:
            argv += [flag, str(val)]
    log.info("replaying: %s", " ".join(argv))
    return main(argv)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="scoreclust", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic similarity matrix and metadata")
    p.add_argument("--config", help="key=value settings file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one setting")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True, help="matrix output path")
    p.add_argument("--metadata", help="metadata output path (default: OUT.meta.csv)")
    p.add_argument("--format", choices=("tsv", "binary"), default="binary")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("subset", help="keep the images whose metadata matches")
    p.add_argument("--input", required=True)
    p.add_argument("--metadata", required=True)
    p.add_argument("--where", required=True, metavar="FIELD=V1[,V2]")
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("tsv", "binary"), default="binary")
    p.set_defaults(func=cmd_subset)

    p = sub.add_parser("cluster", help="build a dendrogram from a similarity matrix")
    p.add_argument("--input", required=True)
    p.add_argument("--method", choices=("single", "complete", "ward"), default="ward")
    p.add_argument("--ward-variant", choices=("D", "D2"), default="D")
    p.add_argument("--out", required=True, help="merge table (TSV)")
    p.add_argument("--newick")
    p.add_argument("--dot")
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("cut", help="flatten a dendrogram into a partition")
    p.add_argument("--input", required=True, help="merge table")
    p.add_argument("--k", type=int)
    p.add_argument("--height", type=float)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_cut)

    p = sub.add_parser("eval", help="purity of a partition against metadata")
    p.add_argument("--input", required=True, help="partition file, or matrix with --per-subject")
    p.add_argument("--metadata", required=True)
    p.add_argument("--by", choices=LABEL_FIELDS, default="subject")
    p.add_argument("--breakdown", metavar="F1,F2", help="cross-tabulate misclustered images")
    p.add_argument("--scope", choices=("misassigned", "error_clusters"), default="misassigned")
    p.add_argument("--per-subject", action="store_true",
                   help="cluster each subject's images separately and score the 2-cluster cut")
    p.add_argument("--method", choices=("single", "complete", "ward"), default="ward")
    p.add_argument("--ward-variant", choices=("D", "D2"), default="D")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", help="JSON-lines report")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("render", help="export a dendrogram as DOT or Newick")
    p.add_argument("--input", required=True, help="merge table")
    p.add_argument("--metadata")
    p.add_argument("--by", choices=LABEL_FIELDS, help="colour leaves by this field")
    p.add_argument("--format", choices=("dot", "newick"), default="dot")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("check", help="validate a merge table and its height order")
    p.add_argument("--input", required=True)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("run", help="repeat the run recorded in a manifest")
    p.add_argument("--manifest", required=True)
    p.set_defaults(func=cmd_run)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args) or 0
    except UsageError as exc:
        print(f"scoreclust {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, KeyError, OSError) as exc:
        print(f"scoreclust {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
