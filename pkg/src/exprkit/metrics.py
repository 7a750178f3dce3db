"""Recognition metrics over math token streams.

All string metrics share one tokenization: the surface lexemes of
:func:`exprkit.latex_ast.lex`.  ``cdm_lite`` is a rendering-free stand-in
for CDM: it matches canonicalized visible tokens by LCS instead of
matching rendered bounding boxes, and is labeled as an approximation
wherever it is reported.
"""

import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from exprkit import latex_ast as ast

TIERS = ("Easy", "Moderate", "Complex")


def token_stream(latex: str) -> List[str]:
    return [t.lexeme for t in ast.lex(latex)]


def _f1(p: float, r: float) -> float:
    return 0.0 if p + r == 0 else 2 * p * r / (p + r)


@dataclass(frozen=True)
class PRF:
    recall: float
    precision: float
    f1: float


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def ngram_matches(pred: Sequence[str], ref: Sequence[str], n: int) -> Tuple[int, int]:
    """Clipped n-gram matches of ``pred`` against ``ref`` and pred's n-gram total."""
    p, r = _ngrams(pred, n), _ngrams(ref, n)
    matched = sum(min(c, r[g]) for g, c in p.items())
    return matched, max(len(pred) - n + 1, 0)


def bleu(pred: Sequence[str], ref: Sequence[str], max_n: int = 4) -> float:
    """Uniform-weight BLEU with add-one smoothing on orders that have no match."""
    if max_n < 1:
        raise ValueError("max_n must be >= 1")
    if not pred:
        return 0.0
    log_sum = 0.0
    for n in range(1, max_n + 1):
        matched, total = ngram_matches(pred, ref, n)
        if matched == 0:
            matched, total = matched + 1, total + 1
        log_sum += math.log(matched / total)
    if len(pred) >= len(ref):
        bp = 1.0
    else:
        bp = math.exp(1 - len(ref) / len(pred))
    return min(1.0, bp * math.exp(log_sum / max_n))


def rouge_n(pred: Sequence[str], ref: Sequence[str], n: int) -> PRF:
    if n < 1:
        raise ValueError("n must be >= 1")
    matched, pred_total = ngram_matches(pred, ref, n)
    ref_total = max(len(ref) - n + 1, 0)
    recall = matched / ref_total if ref_total else 0.0
    precision = matched / pred_total if pred_total else 0.0
    return PRF(recall, precision, _f1(precision, recall))


def lcs_length(a: Sequence, b: Sequence) -> int:
    """LCS length in O(min(len)) memory."""
    if len(a) < len(b):
        a, b = b, a
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, 1):
            if x == y:
                cur.append(prev[j - 1] + 1)
            else:
                cur.append(max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(pred: Sequence[str], ref: Sequence[str]) -> PRF:
    lcs = lcs_length(pred, ref)
    recall = lcs / len(ref) if ref else 0.0
    precision = lcs / len(pred) if pred else 0.0
    return PRF(recall, precision, _f1(precision, recall))


def edit_distance(pred: Sequence, ref: Sequence) -> int:
    """Token-level Levenshtein distance, unit costs."""
    if len(pred) < len(ref):
        pred, ref = ref, pred
    prev = list(range(len(ref) + 1))
    for i, x in enumerate(pred, 1):
        cur = [i]
        for j, y in enumerate(ref, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y)))
        prev = cur
    return prev[-1]


def visible_tokens(latex: str) -> List[str]:
    """Canonical visible symbols of an expression, in reading order.

    Structural commands (``\\frac``, ``\\sqrt``, accents, environment
    names) count as visible; braces, script markers and alignment
    separators do not.
    """
    tree = ast.normalize(ast.parse(ast.lex(latex), ast.ParseMode.LENIENT))
    out: List[str] = []
    _visible(tree, out)
    return out


def _visible(node, out: List[str]) -> None:
    if isinstance(node, ast.Symbol):
        out.append(node.lexeme)
        return
    if isinstance(node, ast.Fraction):
        out.append("\\" + node.command)
    elif isinstance(node, ast.Radical):
        out.append("\\sqrt")
    elif isinstance(node, ast.Command):
        out.append("\\" + node.name)
    elif isinstance(node, ast.Text):
        out.extend(c for c in node.text if not c.isspace())
    elif isinstance(node, ast.Environment):
        out.append("\\begin{%s}" % node.name)
    elif isinstance(node, ast.Delimited):
        if node.left != ".":
            out.append(node.left)
        _visible(node.body, out)
        if node.right != ".":
            out.append(node.right)
        return
    for c in ast.children(node):
        _visible(c, out)


@dataclass(frozen=True)
class CdmLite:
    recall: float
    f1: float


def cdm_lite(pred: str, ref: str) -> CdmLite:
    """Approximate CDM: LCS over canonical visible tokens (no rendering)."""
    p, r = visible_tokens(pred), visible_tokens(ref)
    if not p and not r:
        return CdmLite(1.0, 1.0)
    matched = lcs_length(p, r)
    recall = matched / len(r) if r else 0.0
    precision = matched / len(p) if p else 0.0
    return CdmLite(recall, _f1(precision, recall))


@dataclass(frozen=True)
class SampleScore:
    bleu: float
    rouge1: PRF
    rouge2: PRF
    rougeL: PRF
    edit_distance: int
    cdm_lite: CdmLite

    def to_dict(self) -> dict:
        return asdict(self)


def score_sample(pred: str, ref: str) -> SampleScore:
    p, r = token_stream(pred), token_stream(ref)
    return SampleScore(
        bleu=bleu(p, r),
        rouge1=rouge_n(p, r, 1),
        rouge2=rouge_n(p, r, 2),
        rougeL=rouge_l(p, r),
        edit_distance=edit_distance(p, r),
        cdm_lite=cdm_lite(pred, ref),
    )


@dataclass
class TierReport:
    tier: str
    count: int
    bleu: float
    rouge1: Dict[str, float]
    rouge2: Dict[str, float]
    rougeL: Dict[str, float]
    avg_edit: float
    cdm_lite: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def _mean_report(tier: str, scores: List[SampleScore]) -> TierReport:
    n = len(scores)

    def mean(values: Iterable[float]) -> float:
        total = 0.0
        for v in values:
            total += v
        return total / n

    def prf(attr: str) -> Dict[str, float]:
        return {k: mean(getattr(getattr(s, attr), k) for s in scores)
                for k in ("recall", "precision", "f1")}

    return TierReport(
        tier=tier,
        count=n,
        bleu=mean(s.bleu for s in scores),
        rouge1=prf("rouge1"),
        rouge2=prf("rouge2"),
        rougeL=prf("rougeL"),
        avg_edit=mean(s.edit_distance for s in scores),
        cdm_lite={k: mean(getattr(s.cdm_lite, k) for s in scores) for k in ("recall", "f1")},
    )


def aggregate(scored: Iterable[Tuple[SampleScore, Optional[str]]]) -> List[TierReport]:
    """Per-tier means in Easy/Moderate/Complex order; empty tiers are omitted.

    Samples whose tier is not one of the three are skipped here and only
    contribute to :func:`overall`.
    """
    by_tier: Dict[str, List[SampleScore]] = {t: [] for t in TIERS}
    for score, tier in scored:
        if tier in by_tier:
            by_tier[tier].append(score)
    return [_mean_report(t, by_tier[t]) for t in TIERS if by_tier[t]]


def overall(scores: Sequence[SampleScore]) -> Optional[TierReport]:
    return _mean_report("Overall", list(scores)) if scores else None
