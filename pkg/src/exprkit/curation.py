"""Corpus curation: clean, validate, deduplicate, bucket and tier.

Manifests are JSONL streams of ``{id, latex, image?, tier?, stats?}``.  All
thresholds come from ``data/defaults.json`` unless overridden.
"""

import bisect
import hashlib
import json
import math
import re
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, TextIO, Tuple

from exprkit import latex_ast as ast
from exprkit import tables

TIERS = ("Easy", "Moderate", "Complex")
LENGTH_UNITS = ("lexer", "chars")

MALFORMED = "Malformed"
TOO_SIMPLISTIC = "TooSimplistic"
TOO_LONG = "TooLong"

STAGES = ("clean", "validate", "dedup")


class CurationError(ValueError):
    pass


class DuplicateId(CurationError):
    pass


class InvalidProfile(CurationError):
    pass


class InvalidConfig(CurationError):
    pass


class ManifestError(CurationError):
    def __init__(self, message: str, line: int):
        super().__init__("line %d: %s" % (line, message))
        self.line = line


# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------


@dataclass
class Sample:
    id: str
    latex: str
    image_ref: Optional[str] = None
    token_len: Optional[int] = None
    line_count: Optional[int] = None
    depth: Optional[int] = None
    vocab: Optional[int] = None
    tier: Optional[str] = None
    diagnostics: List[str] = field(default_factory=list)

    def has_stats(self) -> bool:
        return None not in (self.token_len, self.line_count, self.depth, self.vocab)

    def to_dict(self) -> dict:
        d = {"id": self.id, "latex": self.latex}
        if self.image_ref is not None:
            d["image"] = self.image_ref
        if self.tier is not None:
            d["tier"] = self.tier
        stats = {k: getattr(self, k) for k in ("token_len", "line_count", "depth", "vocab")
                 if getattr(self, k) is not None}
        if stats:
            d["stats"] = stats
        if self.diagnostics:
            d["diagnostics"] = list(self.diagnostics)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Sample":
        if not isinstance(d, dict):
            raise CurationError("sample must be an object")
        sid, latex = d.get("id"), d.get("latex")
        if not isinstance(sid, str) or not sid:
            raise CurationError("sample id must be a nonempty string")
        if not isinstance(latex, str):
            raise CurationError("sample %r: latex must be a string" % sid)
        tier = d.get("tier")
        if tier is not None and tier not in TIERS:
            raise CurationError("sample %r: unknown tier %r" % (sid, tier))
        stats = d.get("stats") or {}
        if not isinstance(stats, dict):
            raise CurationError("sample %r: stats must be an object" % sid)
        for k, v in stats.items():
            if isinstance(v, bool) or not isinstance(v, int) or v < 0:
                raise CurationError("sample %r: stat %s must be a non-negative integer" % (sid, k))
        return cls(
            id=sid,
            latex=latex,
            image_ref=d.get("image"),
            token_len=stats.get("token_len"),
            line_count=stats.get("line_count"),
            depth=stats.get("depth"),
            vocab=stats.get("vocab"),
            tier=tier,
            diagnostics=list(d.get("diagnostics") or []),
        )


def _strictly_increasing(xs: Sequence[int]) -> bool:
    return all(a < b for a, b in zip(xs, xs[1:]))


@dataclass(frozen=True)
class CurationConfig:
    strip_tags: Tuple[str, ...]
    min_tokens: int
    max_tokens: int
    require_strict_parse: bool
    length_bucket_edges: Tuple[int, ...]
    line_bucket_edges: Tuple[int, ...]
    length_unit: str = "lexer"
    length_bucket_floor: int = 0
    line_bucket_floor: int = 1

    def __post_init__(self):
        for name in ("length_bucket_edges", "line_bucket_edges"):
            edges = getattr(self, name)
            if not edges or not _strictly_increasing(edges):
                raise InvalidConfig("%s must be nonempty and strictly increasing" % name)
        if self.length_bucket_floor > self.length_bucket_edges[0]:
            raise InvalidConfig("length_bucket_floor exceeds the first edge")
        if self.line_bucket_floor > self.line_bucket_edges[0]:
            raise InvalidConfig("line_bucket_floor exceeds the first edge")
        if self.min_tokens < 0 or self.max_tokens < self.min_tokens:
            raise InvalidConfig("need 0 <= min_tokens <= max_tokens")
        if self.length_unit not in LENGTH_UNITS:
            raise InvalidConfig("length_unit must be one of %s" % ", ".join(LENGTH_UNITS))

    @classmethod
    def from_dict(cls, d: dict) -> "CurationConfig":
        try:
            return cls(
                strip_tags=tuple(d["strip_tags"]),
                min_tokens=int(d["min_tokens"]),
                max_tokens=int(d["max_tokens"]),
                require_strict_parse=bool(d["require_strict_parse"]),
                length_bucket_edges=tuple(int(x) for x in d["length_bucket_edges"]),
                line_bucket_edges=tuple(int(x) for x in d["line_bucket_edges"]),
                length_unit=d.get("length_unit", "lexer"),
                length_bucket_floor=int(d.get("length_bucket_floor", 0)),
                line_bucket_floor=int(d.get("line_bucket_floor", 1)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, InvalidConfig):
                raise
            raise InvalidConfig("bad curation config: %s" % exc) from exc

    @classmethod
    def default(cls) -> "CurationConfig":
        return cls.from_dict(tables.defaults()["curation"])


@dataclass(frozen=True)
class DifficultyProfile:
    w_len: float
    w_lines: float
    w_depth: float
    w_vocab: float
    len_cap: float
    lines_cap: float
    depth_cap: float
    vocab_cap: float
    easy_below: float
    moderate_below: float

    def __post_init__(self):
        weights = (self.w_len, self.w_lines, self.w_depth, self.w_vocab)
        if any(not math.isfinite(w) or w < 0 for w in weights):
            raise InvalidProfile("weights must be finite and non-negative")
        if abs(math.fsum(weights) - 1.0) > 1e-9:
            raise InvalidProfile("weights must sum to 1")
        caps = (self.len_cap, self.lines_cap, self.depth_cap, self.vocab_cap)
        if any(not math.isfinite(c) or c <= 0 for c in caps):
            raise InvalidProfile("caps must be positive")
        if not 0 < self.easy_below < self.moderate_below < 1:
            raise InvalidProfile("need 0 < easy_below < moderate_below < 1")

    @classmethod
    def from_dict(cls, d: dict, base: Optional["DifficultyProfile"] = None) -> "DifficultyProfile":
        """Build from ``{weights, caps, thresholds}``; missing fields come from ``base``."""
        if not isinstance(d, dict):
            raise InvalidProfile("difficulty profile must be an object")
        fields = asdict(base) if base is not None else {}
        for section in ("weights", "caps", "thresholds"):
            part = d.get(section, {})
            if not isinstance(part, dict):
                raise InvalidProfile("%s must be an object" % section)
            fields.update(part)
        try:
            return cls(**fields)
        except TypeError as exc:
            raise InvalidProfile("bad difficulty profile: %s" % exc) from exc

    @classmethod
    def default(cls) -> "DifficultyProfile":
        return cls.from_dict(tables.defaults()["difficulty"])


# ---------------------------------------------------------------------------
# Cleaning
# ---------------------------------------------------------------------------

_TRAILING_COMMAND = re.compile(r"\\[A-Za-z]+$")


def _skip_group(tokens: List[ast.MathToken], i: int) -> Optional[int]:
    """Index just past the balanced brace group starting at ``i``."""
    if i >= len(tokens) or tokens[i].kind != ast.OPEN:
        return None
    level = 0
    for j in range(i, len(tokens)):
        if tokens[j].kind == ast.OPEN:
            level += 1
        elif tokens[j].kind == ast.CLOSE:
            level -= 1
            if level == 0:
                return j + 1
    return None


def _skip_bracket(tokens: List[ast.MathToken], i: int) -> Optional[int]:
    if i >= len(tokens) or tokens[i].kind != ast.SYMBOL or tokens[i].value != "[":
        return i
    for j in range(i + 1, len(tokens)):
        if tokens[j].kind == ast.SYMBOL and tokens[j].value == "]":
            return j + 1
    return None


def _join(left: str, gap: str, right: str) -> str:
    # the gap is whitespace/comments between the neighbouring tokens
    if "%" in gap or "\n" in gap:
        # a comment must stay terminated by its newline
        glue = gap.rstrip(" \t")
    elif not left or not right:
        glue = ""
    elif gap:
        glue = " "
    else:
        glue = ""
    if not glue and _TRAILING_COMMAND.search(left) and right[:1].isalpha():
        glue = " "
    return left + glue + right


def _clean_pass(latex: str, tags: frozenset, arity: Dict[str, int],
                diagnostics: List[str]) -> str:
    tokens = ast.lex(latex)
    out = latex
    # adjacent cuts are merged, then applied right to left so spans stay valid
    cuts = []
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if tok.kind != ast.COMMAND or tok.value not in tags:
            i += 1
            continue
        j = i + 1
        if j < len(tokens) and tokens[j].kind == ast.SYMBOL and tokens[j].value == "*":
            j += 1
        j = _skip_bracket(tokens, j)
        for _ in range(arity.get(tok.value, 1)):
            if j is None:
                break
            j = _skip_group(tokens, j)
        if j is None:
            diagnostics.append("unparseable \\%s at %d: left unchanged" % (tok.value, tok.start))
            i += 1
            continue
        if cuts and cuts[-1][1] == i:
            cuts[-1] = (cuts[-1][0], j)
        else:
            cuts.append((i, j))
        i = j
    for i, j in reversed(cuts):
        start = tokens[i - 1].end if i > 0 else 0
        stop = tokens[j].start if j < len(tokens) else len(out)
        gap = out[start:tokens[i].start] + out[tokens[j - 1].end:stop]
        left = out[:start]
        right = out[stop:]
        out = _join(left, gap if left and right else "", right)
    return out


def clean_with_diagnostics(latex: str, config: Optional[CurationConfig] = None) -> Tuple[str, List[str]]:
    config = config or CurationConfig.default()
    tags = frozenset(config.strip_tags)
    arity = {name: e.arity for name, e in tables.arity_table().items()}
    diagnostics: List[str] = []
    out = latex
    while True:
        notes: List[str] = []
        nxt = _clean_pass(out, tags, arity, notes)
        if nxt == out:
            diagnostics.extend(notes)
            break
        out = nxt
    return out, diagnostics


def clean(latex: str, config: Optional[CurationConfig] = None) -> str:
    """Remove strip-tag commands with their arguments.  Idempotent."""
    return clean_with_diagnostics(latex, config)[0]


# ---------------------------------------------------------------------------
# Validation, dedup, stats
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Validity:
    ok: bool
    reasons: Tuple[str, ...]

    def to_dict(self) -> dict:
        return {"ok": self.ok, "reasons": list(self.reasons)}


def token_length(latex: str, unit: str = "lexer") -> int:
    if unit == "chars":
        return len(latex)
    if unit == "lexer":
        return len(ast.lex(latex))
    raise InvalidConfig("unknown length unit %r" % unit)


def is_valid(latex: str, config: Optional[CurationConfig] = None) -> Validity:
    config = config or CurationConfig.default()
    reasons = []
    if config.require_strict_parse:
        try:
            ast.parse(ast.lex(latex), ast.ParseMode.STRICT)
        except ast.ParseError:
            reasons.append(MALFORMED)
    n = token_length(latex, config.length_unit)
    if n < config.min_tokens:
        reasons.append(TOO_SIMPLISTIC)
    if n > config.max_tokens:
        reasons.append(TOO_LONG)
    return Validity(not reasons, tuple(reasons))


def canonical_form(latex: str) -> str:
    return ast.render(ast.normalize(ast.parse(ast.lex(latex), ast.ParseMode.LENIENT)))


def dedup_key(latex: str) -> str:
    """SHA-256 hex digest of the normalized canonical rendering."""
    return hashlib.sha256(canonical_form(latex).encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class Stats:
    token_len: int
    line_count: int
    depth: int
    vocab: int


def distinct_commands(tokens: Iterable[ast.MathToken]) -> int:
    return len({t.lexeme for t in tokens if t.kind in (ast.COMMAND, ast.BEGIN)})


def compute_stats(latex: str, unit: str = "lexer", mode: ast.ParseMode = ast.ParseMode.STRICT) -> Stats:
    """Structural statistics; raises ParseError when ``mode`` is Strict."""
    tokens = ast.lex(latex)
    tree = ast.parse(tokens, mode)
    n = len(tokens) if unit == "lexer" else token_length(latex, unit)
    return Stats(n, ast.count_lines(tree), ast.depth(tree), distinct_commands(tokens))


def with_stats(sample: Sample, unit: str = "lexer") -> Sample:
    """Fill any missing cached stats; existing values are kept."""
    if sample.has_stats():
        return sample
    st = compute_stats(sample.latex, unit)
    return replace(
        sample,
        token_len=st.token_len if sample.token_len is None else sample.token_len,
        line_count=st.line_count if sample.line_count is None else sample.line_count,
        depth=st.depth if sample.depth is None else sample.depth,
        vocab=st.vocab if sample.vocab is None else sample.vocab,
    )


def stale_stats(sample: Sample, unit: str = "lexer") -> List[str]:
    """Names of cached stats that disagree with recomputation."""
    st = compute_stats(sample.latex, unit)
    return [k for k in ("token_len", "line_count", "depth", "vocab")
            if getattr(sample, k) is not None and getattr(sample, k) != getattr(st, k)]


# ---------------------------------------------------------------------------
# Buckets
# ---------------------------------------------------------------------------


def bucket_labels(edges: Sequence[int], floor: int) -> List[str]:
    labels = []
    lo = floor
    for e in edges:
        labels.append(str(e) if lo == e else "%d-%d" % (lo, e))
        lo = e + 1
    labels.append(">%d" % edges[-1])
    return labels


def bucket_index(value: int, edges: Sequence[int]) -> int:
    """Upper edges are inclusive; values below the floor fall in the first bucket."""
    return bisect.bisect_left(edges, value)


def length_bucket(token_len: int, config: Optional[CurationConfig] = None) -> str:
    config = config or CurationConfig.default()
    labels = bucket_labels(config.length_bucket_edges, config.length_bucket_floor)
    return labels[bucket_index(token_len, config.length_bucket_edges)]


def line_bucket(line_count: int, config: Optional[CurationConfig] = None) -> str:
    config = config or CurationConfig.default()
    labels = bucket_labels(config.line_bucket_edges, config.line_bucket_floor)
    return labels[bucket_index(line_count, config.line_bucket_edges)]


# ---------------------------------------------------------------------------
# Difficulty
# ---------------------------------------------------------------------------


def _sat(x: float, cap: float) -> float:
    return min(x / cap, 1.0)


def difficulty_score(sample: Sample, profile: Optional[DifficultyProfile] = None) -> float:
    profile = profile or DifficultyProfile.default()
    s = with_stats(sample)
    score = math.fsum((profile.w_len * _sat(s.token_len, profile.len_cap),
                       profile.w_lines * _sat(s.line_count, profile.lines_cap),
                       profile.w_depth * _sat(s.depth, profile.depth_cap),
                       profile.w_vocab * _sat(s.vocab, profile.vocab_cap)))
    return min(max(score, 0.0), 1.0)


def assign_tier(score: float, profile: Optional[DifficultyProfile] = None) -> str:
    profile = profile or DifficultyProfile.default()
    if score < profile.easy_below:
        return "Easy"
    if score < profile.moderate_below:
        return "Moderate"
    return "Complex"


# ---------------------------------------------------------------------------
# Corpus statistics
# ---------------------------------------------------------------------------


@dataclass
class CorpusStats:
    length_labels: List[str]
    line_labels: List[str]
    length_counts: List[int]
    line_counts: List[int]
    valid: int = 0
    invalid: int = 0
    invalid_ids: List[str] = field(default_factory=list)

    @property
    def total(self) -> int:
        return self.valid + self.invalid

    def to_dict(self) -> dict:
        return {
            "length": dict(zip(self.length_labels, self.length_counts)),
            "lines": dict(zip(self.line_labels, self.line_counts)),
            "valid": self.valid,
            "invalid": self.invalid,
            "total": self.total,
        }

    def to_text(self) -> str:
        def table(title: str, labels: List[str], counts: List[int]) -> List[str]:
            rows = list(zip(labels, (str(c) for c in counts)))
            rows += [("invalid", str(self.invalid)), ("total", str(self.total))]
            w0 = max(len(title), *(len(r[0]) for r in rows))
            w1 = max(len("count"), *(len(r[1]) for r in rows))
            lines = ["%-*s  %*s" % (w0, title, w1, "count")]
            lines += ["%-*s  %*s" % (w0, a, w1, b) for a, b in rows]
            return lines

        out = table("length", self.length_labels, self.length_counts)
        out.append("")
        out += table("lines", self.line_labels, self.line_counts)
        return "\n".join(out) + "\n"


def corpus_stats(samples: Iterable[Sample], config: Optional[CurationConfig] = None) -> CorpusStats:
    """Bucket counts in one pass.  Unparseable samples land in the invalid row."""
    config = config or CurationConfig.default()
    len_labels = bucket_labels(config.length_bucket_edges, config.length_bucket_floor)
    line_labels = bucket_labels(config.line_bucket_edges, config.line_bucket_floor)
    stats = CorpusStats(len_labels, line_labels, [0] * len(len_labels), [0] * len(line_labels))
    seen = set()
    for sample in samples:
        if sample.id in seen:
            raise DuplicateId("duplicate sample id %r" % sample.id)
        seen.add(sample.id)
        token_len, line_count = sample.token_len, sample.line_count
        if token_len is None or line_count is None:
            try:
                st = compute_stats(sample.latex, config.length_unit)
            except ast.ParseError as exc:
                sample.diagnostics.append("%s: %s" % (exc.code, exc))
                stats.invalid += 1
                stats.invalid_ids.append(sample.id)
                continue
            token_len = st.token_len if token_len is None else token_len
            line_count = st.line_count if line_count is None else line_count
        stats.length_counts[bucket_index(token_len, config.length_bucket_edges)] += 1
        stats.line_counts[bucket_index(line_count, config.line_bucket_edges)] += 1
        stats.valid += 1
    return stats


# ---------------------------------------------------------------------------
# Pipeline
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Provenance:
    id: str
    stage: str
    reason: str

    def to_dict(self) -> dict:
        return {"id": self.id, "stage": self.stage, "reason": self.reason}


def iter_pipeline(samples: Iterable[Sample], config: Optional[CurationConfig] = None,
                  profile: Optional[DifficultyProfile] = None) -> Iterator[object]:
    """Yield each curated :class:`Sample` or a :class:`Provenance` for each drop, in input order."""
    config = config or CurationConfig.default()
    profile = profile or DifficultyProfile.default()
    seen_ids = set()
    keys: Dict[str, str] = {}
    for sample in samples:
        if sample.id in seen_ids:
            raise DuplicateId("duplicate sample id %r" % sample.id)
        seen_ids.add(sample.id)
        latex, notes = clean_with_diagnostics(sample.latex, config)
        if not latex.strip():
            yield Provenance(sample.id, "clean", "EmptyAfterClean")
            continue
        verdict = is_valid(latex, config)
        if not verdict.ok:
            yield Provenance(sample.id, "validate", ",".join(verdict.reasons))
            continue
        key = dedup_key(latex)
        if key in keys:
            yield Provenance(sample.id, "dedup", "DuplicateOf:%s" % keys[key])
            continue
        keys[key] = sample.id
        try:
            st = compute_stats(latex, config.length_unit)
        except ast.ParseError:
            # only reachable when strict parsing is not required
            st = compute_stats(latex, config.length_unit, ast.ParseMode.LENIENT)
            notes.append("stats computed from lenient parse")
        out = Sample(sample.id, latex, sample.image_ref, st.token_len, st.line_count,
                     st.depth, st.vocab, None, list(sample.diagnostics) + notes)
        out.tier = assign_tier(difficulty_score(out, profile), profile)
        yield out


@dataclass
class PipelineResult:
    samples: List[Sample]
    provenance: List[Provenance]
    stats: CorpusStats
    tier_counts: Dict[str, int]


def run_pipeline(samples: Iterable[Sample], config: Optional[CurationConfig] = None,
                 profile: Optional[DifficultyProfile] = None) -> PipelineResult:
    config = config or CurationConfig.default()
    kept: List[Sample] = []
    dropped: List[Provenance] = []
    for item in iter_pipeline(samples, config, profile):
        (kept if isinstance(item, Sample) else dropped).append(item)
    tiers = {t: 0 for t in TIERS}
    for s in kept:
        tiers[s.tier] += 1
    return PipelineResult(kept, dropped, corpus_stats(kept, config), tiers)


# ---------------------------------------------------------------------------
# Manifest I/O
# ---------------------------------------------------------------------------


def iter_manifest(stream: TextIO) -> Iterator[Sample]:
    for lineno, line in enumerate(stream, 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ManifestError("invalid JSON: %s" % exc.msg, lineno) from exc
        try:
            yield Sample.from_dict(obj)
        except CurationError as exc:
            raise ManifestError(str(exc), lineno) from exc


def dump_jsonl(obj: dict) -> str:
    return json.dumps(obj, ensure_ascii=False) + "\n"


def write_manifest(samples: Iterable[Sample], stream: TextIO) -> int:
    n = 0
    for s in samples:
        stream.write(dump_jsonl(s.to_dict()))
        n += 1
    return n
