"""Command-line entry point.

Exit codes: 0 ok, 1 internal error, 2 domain error, 3 I/O error, 4 bad flags.
Structured output is UTF-8 JSON, one document (or one JSONL line) per result,
always newline-terminated.  Errors go to stderr as a JSON object.
"""

import argparse
import io
import json
import os
import sys
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

from exprkit import __version__, curation, latex_ast as ast, metrics, resolution, sml, tables, tokenizer

EXIT_OK, EXIT_INTERNAL, EXIT_DOMAIN, EXIT_IO, EXIT_FLAGS = 0, 1, 2, 3, 4


class DomainError(Exception):
    def __init__(self, code: str, message: str, **extra):
        super().__init__(message)
        self.payload = {"error": code, "message": message, **extra}


class FlagError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        _report({"error": "BadFlags", "message": message})
        sys.exit(EXIT_FLAGS)


def _report(payload: dict) -> None:
    sys.stderr.write(json.dumps(payload, ensure_ascii=False) + "\n")
    sys.stderr.flush()


def _dump(obj) -> str:
    return json.dumps(obj, ensure_ascii=False)


# -- I/O helpers --------------------------------------------------------------


def _read_text(path: Optional[str]) -> str:
    if path in (None, "-"):
        return sys.stdin.buffer.read().decode("utf-8")
    return Path(path).read_text(encoding="utf-8")


class _Output:
    """Collects output and writes it once, to ``path`` or stdout."""

    def __init__(self, path: Optional[str]):
        self.path = path
        self.buf = io.StringIO()

    def write(self, s: str) -> None:
        self.buf.write(s)

    def line(self, s: str) -> None:
        self.buf.write(s if s.endswith("\n") else s + "\n")

    def flush(self) -> None:
        data = self.buf.getvalue().encode("utf-8")
        if self.path in (None, "-"):
            sys.stdout.buffer.write(data)
            sys.stdout.buffer.flush()
        else:
            Path(self.path).write_bytes(data)


def _items(text: str, lines: bool) -> List[str]:
    if not lines:
        return [text[:-1] if text.endswith("\n") else text]
    return text.splitlines()


def _json_load(text: str, where: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise DomainError("MalformedJson", "%s: %s" % (where, exc.msg)) from None


def _read_jsonl(path: str) -> Iterator[Tuple[int, dict]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if line.strip():
                obj = _json_load(line, "%s:%d" % (path, lineno))
                if not isinstance(obj, dict):
                    raise DomainError("MalformedJson", "%s:%d: expected an object" % (path, lineno))
                yield lineno, obj


# -- config -------------------------------------------------------------------


def _curation_config(args) -> curation.CurationConfig:
    d = dict(tables.defaults()["curation"])
    for key in ("min_tokens", "max_tokens", "length_unit"):
        value = getattr(args, key, None)
        if value is not None:
            d[key] = value
    if getattr(args, "strip_tags", None) is not None:
        d["strip_tags"] = [t for t in args.strip_tags.split(",") if t]
    if getattr(args, "lenient", False):
        d["require_strict_parse"] = False
    try:
        return curation.CurationConfig.from_dict(d)
    except curation.InvalidConfig as exc:
        raise FlagError(str(exc)) from None


def _profile(args) -> curation.DifficultyProfile:
    path = getattr(args, "profile", None)
    if path is None:
        return curation.DifficultyProfile.default()
    return curation.DifficultyProfile.from_dict(_json_load(_read_text(path), path),
                                                curation.DifficultyProfile.default())


def _mode(args) -> ast.ParseMode:
    return ast.ParseMode.LENIENT if args.mode == "lenient" else ast.ParseMode.STRICT


# -- parse / render -----------------------------------------------------------


def _tree_lines(node, indent: int = 0) -> Iterator[str]:
    pad = "  " * indent
    d = ast.to_dict(node)
    label = d["type"]
    extras = [("%s=%s" % (k, json.dumps(v, ensure_ascii=False))) for k, v in sorted(d.items())
              if k != "type" and not isinstance(v, (dict, list))]
    yield pad + " ".join([label] + extras)
    for child in ast.children(node):
        yield from _tree_lines(child, indent + 1)


def cmd_parse(args) -> int:
    out = _Output(args.output)
    mode = _mode(args)
    for n, src in enumerate(_items(_read_text(args.input), args.lines), 1):
        try:
            tree, diags = ast.parse_with_diagnostics(ast.lex(src), mode)
        except ast.ParseError as exc:
            raise DomainError(exc.code, exc.message, span=list(exc.span), item=n) from None
        for d in diags:
            _report(dict(d.to_dict(), item=n, level="warning"))
        if args.format == "text":
            out.line("\n".join(_tree_lines(tree)))
        else:
            out.line(_dump(ast.to_dict(tree)))
    out.flush()
    return EXIT_OK


def cmd_render(args) -> int:
    out = _Output(args.output)
    for n, src in enumerate(_items(_read_text(args.input), args.lines), 1):
        out.line(ast.render(_load_tree(src, n)))
    out.flush()
    return EXIT_OK


# -- sml ----------------------------------------------------------------------


def _load_tree(src: str, n: int):
    try:
        return ast.from_dict(_json_load(src, "item %d" % n))
    except ValueError as exc:
        raise DomainError("MalformedTree", str(exc), item=n) from None


def cmd_sml(args) -> int:
    out = _Output(args.output)
    mode = _mode(args)
    for n, src in enumerate(_items(_read_text(args.input), args.lines), 1):
        if args.action == "encode":
            try:
                if args.source == "tree":
                    seq = sml.encode_sml(_load_tree(src, n))
                else:
                    seq = sml.latex_to_sml(src, mode)
            except ast.ParseError as exc:
                raise DomainError(exc.code, exc.message, span=list(exc.span), item=n) from None
            out.line(sml.to_text(seq) if args.format == "text" else _dump(sml.to_json(seq)))
        else:
            try:
                if args.format == "text":
                    seq = sml.from_text(src)
                else:
                    seq = sml.from_json(_json_load(src, "item %d" % n))
                if args.target == "tree":
                    out.line(_dump(ast.to_dict(sml.decode_sml(seq))))
                else:
                    out.line(sml.sml_to_latex(seq))
            except sml.SmlError as exc:
                raise DomainError(exc.code, exc.message, position=exc.position, item=n) from None
            except ValueError as exc:
                raise DomainError("MalformedSml", str(exc), item=n) from None
    out.flush()
    return EXIT_OK


# -- tokenizer ----------------------------------------------------------------


def _specials(path: Optional[str]) -> List[str]:
    if path is None:
        return list(tables.default_special_list())
    return [line for line in _read_text(path).splitlines() if line and not line.startswith("#")]


def cmd_tok(args) -> int:
    if args.action == "train":
        corpus = _read_text(args.corpus).splitlines()
        model = tokenizer.train_bpe(corpus, args.vocab_size, _specials(args.specials))
        Path(args.out).write_text(tokenizer.dumps_model(model), encoding="utf-8")
        _report({"level": "info", "vocab_size": model.vocab_size, "merges": len(model.merges)})
        return EXIT_OK
    model = tokenizer.load_model(args.model)
    out = _Output(args.output)
    for n, src in enumerate(_items(_read_text(args.input), args.lines), 1):
        if args.action == "encode":
            out.line(_dump(model.encode(src)))
        else:
            ids = _json_load(src, "item %d" % n)
            if not isinstance(ids, list):
                raise DomainError("MalformedIds", "item %d: expected a JSON list of ids" % n)
            out.line(_dump(model.decode(ids)) if args.format == "json" else model.decode(ids))
    out.flush()
    return EXIT_OK


# -- fit ----------------------------------------------------------------------


def cmd_fit(args) -> int:
    params = resolution.FitParams(args.h, args.w, args.patch, args.budget)
    plan = resolution.plan_resolution(params)
    d = plan.to_dict()
    d["mdr_bound"] = float(resolution.mdr_bound(args.patch, args.h, args.w))
    out = _Output(args.output)
    out.line(_dump(d))
    out.flush()
    return EXIT_OK


# -- score / report -----------------------------------------------------------


def _score_rows(pred_path: str, ref_path: str, auto_tier: bool):
    preds: Dict[str, str] = {}
    for lineno, obj in _read_jsonl(pred_path):
        sid = obj.get("id")
        if not isinstance(sid, str) or not isinstance(obj.get("latex"), str):
            raise DomainError("MalformedRow", "%s:%d: need string id and latex" % (pred_path, lineno))
        if sid in preds:
            raise DomainError("DuplicateId", "%s:%d: duplicate id %r" % (pred_path, lineno, sid))
        preds[sid] = obj["latex"]
    rows = []
    seen = set()
    profile = curation.DifficultyProfile.default()
    for lineno, obj in _read_jsonl(ref_path):
        sid, ref = obj.get("id"), obj.get("latex")
        if not isinstance(sid, str) or not isinstance(ref, str):
            raise DomainError("MalformedRow", "%s:%d: need string id and latex" % (ref_path, lineno))
        if sid in seen:
            raise DomainError("DuplicateId", "%s:%d: duplicate id %r" % (ref_path, lineno, sid))
        seen.add(sid)
        tier = obj.get("tier")
        if tier is None and auto_tier:
            st = curation.compute_stats(ref, mode=ast.ParseMode.LENIENT)
            sample = curation.Sample(sid, ref, None, st.token_len, st.line_count, st.depth, st.vocab)
            tier = curation.assign_tier(curation.difficulty_score(sample, profile), profile)
        missing = sid not in preds
        rows.append((sid, tier, missing, metrics.score_sample(preds.get(sid, ""), ref)))
    return rows


def _score_summary(rows) -> dict:
    scores = [r[3] for r in rows]
    overall = metrics.overall(scores)
    return {
        "count": len(rows),
        "missing_predictions": sum(1 for r in rows if r[2]),
        "overall": overall.to_dict() if overall else None,
        "tiers": [t.to_dict() for t in metrics.aggregate((r[3], r[1]) for r in rows)],
        "note": "cdm_lite is an approximation computed without rendering",
    }


def _summary_text(summary: dict) -> str:
    header = ["tier", "n", "BLEU", "R1-F", "R2-F", "RL-F", "edit", "cdm_lite-F"]
    table = [header]
    reps = list(summary["tiers"])
    if summary["overall"]:
        reps.append(summary["overall"])
    for r in reps:
        table.append([r["tier"], str(r["count"]), "%.4f" % r["bleu"], "%.4f" % r["rouge1"]["f1"],
                      "%.4f" % r["rouge2"]["f1"], "%.4f" % r["rougeL"]["f1"], "%.3f" % r["avg_edit"],
                      "%.4f" % r["cdm_lite"]["f1"]])
    widths = [max(len(row[i]) for row in table) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(row, widths)))
             for row in table]
    return "\n".join(lines) + "\n"


def cmd_score(args) -> int:
    rows = _score_rows(args.pred, args.ref, args.auto_tier)
    summary = _score_summary(rows)
    out = _Output(args.output)
    if args.format == "text":
        out.write(_summary_text(summary))
    else:
        out.line(_dump(summary))
    out.flush()
    return EXIT_OK


def cmd_report(args) -> int:
    from exprkit import plotting

    if not args.ref and not args.manifest:
        raise FlagError("report needs --ref/--pred and/or --manifest")
    if bool(args.ref) != bool(args.pred):
        raise FlagError("--pred and --ref go together")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report: dict = {"version": __version__}
    text_parts: List[str] = []
    if args.ref:
        rows = _score_rows(args.pred, args.ref, args.auto_tier)
        summary = _score_summary(rows)
        report["scores"] = summary
        text_parts.append(_summary_text(summary))
        tsv = ["id\ttier\tbleu\trouge1_f\trouge2_f\trougeL_f\tedit\tcdm_lite_f"]
        for sid, tier, _, s in rows:
            tsv.append("\t".join([sid, tier or "", "%.6f" % s.bleu, "%.6f" % s.rouge1.f1,
                                  "%.6f" % s.rouge2.f1, "%.6f" % s.rougeL.f1, str(s.edit_distance),
                                  "%.6f" % s.cdm_lite.f1]))
        (out_dir / "scores.tsv").write_text("\n".join(tsv) + "\n", encoding="utf-8")
        reports = metrics.aggregate((r[3], r[1]) for r in rows)
        plotting.tier_metric_figure(reports, out_dir / "tier_metrics.png")
    if args.manifest:
        config = _curation_config(args)
        with open(args.manifest, encoding="utf-8") as fh:
            stats = curation.corpus_stats(curation.iter_manifest(fh), config)
        report["corpus"] = stats.to_dict()
        text_parts.append(stats.to_text())
        tsv = ["table\tbucket\tcount"]
        tsv += ["length\t%s\t%d" % p for p in zip(stats.length_labels, stats.length_counts)]
        tsv += ["lines\t%s\t%d" % p for p in zip(stats.line_labels, stats.line_counts)]
        tsv += ["all\tinvalid\t%d" % stats.invalid, "all\ttotal\t%d" % stats.total]
        (out_dir / "buckets.tsv").write_text("\n".join(tsv) + "\n", encoding="utf-8")
        plotting.bucket_figure(stats, out_dir / "buckets.png")
    (out_dir / "report.json").write_text(_dump(report) + "\n", encoding="utf-8")
    (out_dir / "report.txt").write_text("\n".join(text_parts), encoding="utf-8")
    return EXIT_OK


# -- curate -------------------------------------------------------------------


def _manifest(path: str) -> Iterator[curation.Sample]:
    fh = open(path, encoding="utf-8")
    try:
        yield from curation.iter_manifest(fh)
    finally:
        fh.close()


def cmd_curate(args) -> int:
    config = _curation_config(args)
    out = _Output(args.output)
    if args.action == "clean":
        for s in _manifest(args.input):
            latex, notes = curation.clean_with_diagnostics(s.latex, config)
            for note in notes:
                _report({"level": "warning", "id": s.id, "message": note})
            s.latex = latex
            s.diagnostics.extend(notes)
            out.write(curation.dump_jsonl(s.to_dict()))
    elif args.action == "filter":
        prov = []
        for s in _manifest(args.input):
            verdict = curation.is_valid(s.latex, config)
            if verdict.ok:
                out.write(curation.dump_jsonl(s.to_dict()))
            else:
                prov.append(curation.Provenance(s.id, "validate", ",".join(verdict.reasons)))
        _write_provenance(args.provenance, prov)
    elif args.action == "stats":
        stats = curation.corpus_stats(_manifest(args.input), config)
        for sid in stats.invalid_ids:
            _report({"level": "warning", "id": sid, "message": "unparseable; counted as invalid"})
        out.write(stats.to_text() if args.format == "text" else _dump(stats.to_dict()) + "\n")
    elif args.action == "tier":
        profile = _profile(args)
        for s in _manifest(args.input):
            try:
                s = curation.with_stats(s, config.length_unit)
            except ast.ParseError as exc:
                raise DomainError(exc.code, "sample %r: %s" % (s.id, exc)) from None
            s.tier = curation.assign_tier(curation.difficulty_score(s, profile), profile)
            out.write(curation.dump_jsonl(s.to_dict()))
    else:
        profile = _profile(args)
        result = curation.run_pipeline(_manifest(args.input), config, profile)
        curation.write_manifest(result.samples, out)
        _write_provenance(args.provenance, result.provenance)
        if args.stats:
            summary = {"stats": result.stats.to_dict(), "tiers": result.tier_counts,
                       "dropped": len(result.provenance)}
            Path(args.stats).write_text(_dump(summary) + "\n", encoding="utf-8")
    out.flush()
    return EXIT_OK


def _write_provenance(path: Optional[str], records) -> None:
    if path is None:
        for r in records:
            _report(dict(r.to_dict(), level="dropped"))
        return
    Path(path).write_text("".join(curation.dump_jsonl(r.to_dict()) for r in records), encoding="utf-8")


# -- argument parsing ---------------------------------------------------------


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("not an integer: %r" % text) from None
    if v <= 0:
        raise argparse.ArgumentTypeError("must be positive: %r" % text)
    return v


def _non_negative_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("not an integer: %r" % text) from None
    if v < 0:
        raise argparse.ArgumentTypeError("must be non-negative: %r" % text)
    return v


def _add_io(p, lines=True, fmt=("json", "text")):
    p.add_argument("input", nargs="?", default="-", help="input file (default: stdin)")
    p.add_argument("-o", "--output", help="output file (default: stdout)")
    if lines:
        p.add_argument("--lines", action="store_true", help="treat each input line as one item")
    if fmt:
        p.add_argument("--format", choices=fmt, default=fmt[0])


def _add_mode(p):
    p.add_argument("--mode", choices=("strict", "lenient"), default="strict")


def _add_curation_flags(p):
    p.add_argument("--min-tokens", type=_non_negative_int)
    p.add_argument("--max-tokens", type=_non_negative_int)
    p.add_argument("--length-unit", choices=curation.LENGTH_UNITS)
    p.add_argument("--strip-tags", help="comma-separated command names")
    p.add_argument("--lenient", action="store_true", help="do not require a strict parse")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="exprkit", description="Math-expression recognition toolkit.")
    parser.add_argument("--version", action="version", version="exprkit " + __version__)
    parser.add_argument("--config-dir", help="directory whose data files override the shipped ones")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("parse", help="LaTeX to syntax tree")
    _add_io(p)
    _add_mode(p)
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("render", help="syntax tree JSON to canonical LaTeX")
    _add_io(p, fmt=None)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("sml", help="structured token sequences")
    ssub = p.add_subparsers(dest="action", required=True, parser_class=_Parser)
    for action in ("encode", "decode"):
        t = ssub.add_parser(action)
        _add_io(t)
        _add_mode(t)
    ssub.choices["encode"].add_argument("--from", dest="source", choices=("latex", "tree"), default="latex",
                                        help="input items are LaTeX or syntax-tree JSON")
    ssub.choices["decode"].add_argument("--to", dest="target", choices=("latex", "tree"), default="latex",
                                        help="emit LaTeX or syntax-tree JSON")
    p.set_defaults(func=cmd_sml)

    p = sub.add_parser("tok", help="byte-level BPE tokenizer")
    tsub = p.add_subparsers(dest="action", required=True, parser_class=_Parser)
    t = tsub.add_parser("train")
    t.add_argument("--corpus", required=True, help="text file, one document per line")
    t.add_argument("--vocab-size", type=_positive_int, required=True)
    t.add_argument("--specials", help="special-token file (default: shipped list)")
    t.add_argument("--out", required=True, help="model file to write")
    for action in ("encode", "decode"):
        t = tsub.add_parser(action)
        t.add_argument("--model", required=True)
        _add_io(t, fmt=("json", "text") if action == "decode" else None)
    p.set_defaults(func=cmd_tok)

    p = sub.add_parser("fit", help="resolution plan for a patch budget")
    p.add_argument("--h", type=_positive_int, required=True)
    p.add_argument("--w", type=_positive_int, required=True)
    p.add_argument("--patch", type=_positive_int, required=True)
    p.add_argument("--budget", type=_positive_int, required=True)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("score", help="metrics for predictions against references")
    p.add_argument("--pred", required=True, help="JSONL {id, latex}")
    p.add_argument("--ref", required=True, help="JSONL {id, latex, tier?}")
    p.add_argument("--auto-tier", action="store_true", help="tier untiered references by difficulty score")
    p.add_argument("--format", choices=("json", "text"), default="json")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("curate", help="corpus curation")
    p.add_argument("action", choices=("clean", "filter", "stats", "tier", "run"))
    p.add_argument("--in", dest="input", required=True, help="input manifest JSONL")
    p.add_argument("-o", "--output", help="output manifest or table (default: stdout)")
    p.add_argument("--provenance", help="JSONL file for dropped-sample records (default: stderr)")
    p.add_argument("--stats", help="JSON file for pipeline statistics (run only)")
    p.add_argument("--profile", help="difficulty profile JSON")
    p.add_argument("--format", choices=("json", "text"), default="json")
    _add_curation_flags(p)
    p.set_defaults(func=cmd_curate)

    p = sub.add_parser("report", help="scores and corpus tables with figures")
    p.add_argument("--pred")
    p.add_argument("--ref")
    p.add_argument("--manifest")
    p.add_argument("--auto-tier", action="store_true")
    p.add_argument("--out-dir", required=True)
    _add_curation_flags(p)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config_dir:
        os.environ[tables.CONFIG_ENV_VAR] = args.config_dir
        tables.clear_caches()
    try:
        return args.func(args)
    except FlagError as exc:
        _report({"error": "BadFlags", "message": str(exc)})
        return EXIT_FLAGS
    except DomainError as exc:
        _report(exc.payload)
        return EXIT_DOMAIN
    except (ast.ParseError, sml.SmlError) as exc:
        _report({"error": exc.code, "message": str(exc)})
        return EXIT_DOMAIN
    except (tokenizer.TokenizerError, curation.CurationError, resolution.InvalidParams,
            UnicodeDecodeError) as exc:
        _report({"error": type(exc).__name__, "message": str(exc)})
        return EXIT_DOMAIN
    except OSError as exc:
        _report({"error": "IOError", "message": str(exc)})
        return EXIT_IO
    except Exception as exc:  # noqa: BLE001
        _report({"error": "Internal", "message": "%s: %s" % (type(exc).__name__, exc)})
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
