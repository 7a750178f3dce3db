"""Byte-level BPE with atomic special tokens.

Special tokens (LaTeX commands, environment markers, SML structural tokens)
are cut out of the input before anything else happens, by leftmost-longest
matching.  The remaining spans are split into bytes and merged with the
learned rules, so no merge ever crosses a special-token boundary and every
input is encodable.

Ids are positional: specials first (in list order), then the 256 byte
values, then one id per merge rule.
"""

import heapq
import json
import re
from collections import Counter, defaultdict
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

FORMAT_VERSION = "bpe-math/1"

Pair = Tuple[bytes, bytes]


class TokenizerError(ValueError):
    pass


class VocabTooSmall(TokenizerError):
    pass


class EmptyCorpus(TokenizerError):
    pass


class UnknownId(TokenizerError):
    pass


class FormatVersionMismatch(TokenizerError):
    pass


class CorruptModel(TokenizerError):
    pass


def _special_pattern(specials: Sequence[str]) -> Optional["re.Pattern"]:
    if not specials:
        return None
    # longest first: alternation order decides between matches at one position
    ordered = sorted(specials, key=lambda s: (-len(s), s))
    return re.compile("|".join(re.escape(s) for s in ordered))


def split_specials(text: str, specials: Sequence[str], pattern=None) -> List[Tuple[bool, str]]:
    """Cut ``text`` into ``(is_special, piece)`` chunks, leftmost-longest."""
    pattern = pattern if pattern is not None else _special_pattern(specials)
    if pattern is None:
        return [(False, text)] if text else []
    out = []
    pos = 0
    for m in pattern.finditer(text):
        if m.start() > pos:
            out.append((False, text[pos:m.start()]))
        out.append((True, m.group()))
        pos = m.end()
    if pos < len(text):
        out.append((False, text[pos:]))
    return out


class TokenizerModel:
    """Immutable trained tokenizer."""

    def __init__(self, specials: Sequence[str], merges: Sequence[Pair], version: str = FORMAT_VERSION):
        self.specials = tuple(specials)
        self.merges = tuple((bytes(a), bytes(b)) for a, b in merges)
        self.version = version
        self._check()
        self.special_ids = {s: i for i, s in enumerate(self.specials)}
        self.byte_offset = len(self.specials)
        self.merge_offset = self.byte_offset + 256
        self.ranks = {pair: i for i, pair in enumerate(self.merges)}
        self.token_bytes: List[bytes] = [s.encode("utf-8") for s in self.specials]
        self.token_bytes += [bytes([b]) for b in range(256)]
        self.token_bytes += [a + b for a, b in self.merges]
        self.merged_ids = {a + b: self.merge_offset + i for i, (a, b) in enumerate(self.merges)}
        self._pattern = _special_pattern(self.specials)
        self._cache: Dict[str, Tuple[int, ...]] = {}

    def _check(self) -> None:
        if len(set(self.specials)) != len(self.specials) or not all(self.specials):
            raise CorruptModel("special tokens must be nonempty and unique")
        known = {bytes([b]) for b in range(256)}
        special_bytes = {s.encode("utf-8") for s in self.specials}
        for i, (a, b) in enumerate(self.merges):
            if a not in known or b not in known:
                raise CorruptModel("merge %d references an underivable token" % i)
            if a + b in known:
                raise CorruptModel("merge %d duplicates an existing token" % i)
            if a + b in special_bytes:
                raise CorruptModel("merge %d produces a special token" % i)
            known.add(a + b)

    @property
    def vocab_size(self) -> int:
        return len(self.specials) + 256 + len(self.merges)

    @property
    def vocab(self) -> Dict[str, int]:
        """Surface string of each token (escaped for raw bytes) to id.

        Specials are keyed by their text; byte and merge tokens by their
        escaped byte form prefixed with ``b:`` so they cannot collide.
        """
        out = {s: i for i, s in enumerate(self.specials)}
        for i in range(self.byte_offset, self.vocab_size):
            out["b:" + escape_bytes(self.token_bytes[i])] = i
        return out

    def __eq__(self, other) -> bool:
        if not isinstance(other, TokenizerModel):
            return NotImplemented
        return (self.version, self.specials, self.merges) == (other.version, other.specials, other.merges)

    def __hash__(self) -> int:
        return hash((self.version, self.specials, self.merges))

    def __repr__(self) -> str:
        return "TokenizerModel(specials=%d, merges=%d)" % (len(self.specials), len(self.merges))

    # -- encoding ---------------------------------------------------------

    def _merge_piece(self, piece: str) -> Tuple[int, ...]:
        cached = self._cache.get(piece)
        if cached is not None:
            return cached
        parts = [bytes([b]) for b in piece.encode("utf-8")]
        while len(parts) > 1:
            best, best_rank = None, None
            for pair in zip(parts, parts[1:]):
                rank = self.ranks.get(pair)
                if rank is not None and (best_rank is None or rank < best_rank):
                    best, best_rank = pair, rank
            if best is None:
                break
            parts = _apply_merge(parts, best)
        ids = tuple(self.byte_offset + p[0] if len(p) == 1 else self.merged_ids[p] for p in parts)
        if len(self._cache) < 100_000:
            self._cache[piece] = ids
        return ids

    def encode(self, text: str) -> List[int]:
        out: List[int] = []
        for is_special, piece in split_specials(text, self.specials, self._pattern):
            if is_special:
                out.append(self.special_ids[piece])
            else:
                out.extend(self._merge_piece(piece))
        return out

    def decode(self, ids: Iterable[int]) -> str:
        chunks = []
        size = self.vocab_size
        for i in ids:
            if not isinstance(i, int) or i < 0 or i >= size:
                raise UnknownId("id %r outside vocabulary of %d" % (i, size))
            chunks.append(self.token_bytes[i])
        return b"".join(chunks).decode("utf-8", errors="replace")

    def token_spans(self, ids: Sequence[int]) -> List[Tuple[int, int]]:
        """Byte offsets covered by each id in the UTF-8 encoding."""
        spans = []
        pos = 0
        for i in ids:
            n = len(self.token_bytes[i])
            spans.append((pos, pos + n))
            pos += n
        return spans


def _apply_merge(parts: List[bytes], pair: Pair) -> List[bytes]:
    a, b = pair
    out = []
    i = 0
    n = len(parts)
    while i < n:
        if i + 1 < n and parts[i] == a and parts[i + 1] == b:
            out.append(a + b)
            i += 2
        else:
            out.append(parts[i])
            i += 1
    return out


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


def _tie_key(pair: Pair) -> Tuple[bytes, bytes]:
    # ties go to the lexicographically smallest merged string, then left part
    return (pair[0] + pair[1], pair[0])


def train_bpe(corpus: Iterable[str], vocab_size: int, special_tokens: Sequence[str] = ()) -> TokenizerModel:
    """Learn merges until ``vocab_size`` tokens exist or no pair is left.

    Pair counts are whole-corpus occurrence counts; the most frequent pair
    wins, ties broken by :func:`_tie_key`.  Deterministic for a fixed corpus
    order.
    """
    specials = list(special_tokens)
    base = len(specials) + 256
    if vocab_size < base:
        raise VocabTooSmall("vocab_size %d < %d specials + 256 bytes" % (vocab_size, len(specials)))
    pattern = _special_pattern(specials)
    word_freq: Counter = Counter()
    seen_any = False
    for line in corpus:
        seen_any = True
        for is_special, piece in split_specials(line, specials, pattern):
            if not is_special:
                word_freq[piece] += 1
    if not seen_any:
        raise EmptyCorpus("corpus is empty")

    words: List[List[bytes]] = []
    freqs: List[int] = []
    for piece, f in sorted(word_freq.items()):
        words.append([bytes([b]) for b in piece.encode("utf-8")])
        freqs.append(f)

    pair_counts: Dict[Pair, int] = defaultdict(int)
    where: Dict[Pair, set] = defaultdict(set)
    for wi, w in enumerate(words):
        for pair in zip(w, w[1:]):
            pair_counts[pair] += freqs[wi]
            where[pair].add(wi)

    heap = [(-c, _tie_key(p), p) for p, c in pair_counts.items()]
    heapq.heapify(heap)
    merges: List[Pair] = []
    # every token string must be unique, so a pair whose concatenation
    # already exists is never merged
    existing = {bytes([b]) for b in range(256)} | {s.encode("utf-8") for s in specials}
    budget = vocab_size - base
    while len(merges) < budget and heap:
        neg, _, pair = heapq.heappop(heap)
        count = pair_counts.get(pair, 0)
        if count <= 0 or pair[0] + pair[1] in existing:
            continue
        if -neg != count:
            heapq.heappush(heap, (-count, _tie_key(pair), pair))
            continue
        merges.append(pair)
        existing.add(pair[0] + pair[1])
        touched = set()
        for wi in sorted(where.pop(pair, ())):
            w = words[wi]
            f = freqs[wi]
            for p in zip(w, w[1:]):
                pair_counts[p] -= f
                touched.add(p)
            w = _apply_merge(w, pair)
            words[wi] = w
            for p in zip(w, w[1:]):
                pair_counts[p] += f
                where[p].add(wi)
                touched.add(p)
        pair_counts.pop(pair, None)
        for p in touched:
            c = pair_counts.get(p, 0)
            if c > 0:
                heapq.heappush(heap, (-c, _tie_key(p), p))
            else:
                pair_counts.pop(p, None)
    return TokenizerModel(specials, merges)


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------


def escape_bytes(b: bytes) -> str:
    out = []
    for x in b:
        if x == 0x5C:
            out.append("\\\\")
        elif 0x20 <= x < 0x7F:
            out.append(chr(x))
        else:
            out.append("\\x%02x" % x)
    return "".join(out)


_ESCAPE = re.compile(r"\\\\|\\x([0-9a-f]{2})|\\")


def unescape_bytes(s: str) -> bytes:
    out = bytearray()
    pos = 0
    for m in _ESCAPE.finditer(s):
        out += s[pos:m.start()].encode("ascii")
        if m.group(0) == "\\\\":
            out.append(0x5C)
        elif m.group(1) is not None:
            out.append(int(m.group(1), 16))
        else:
            raise CorruptModel("dangling backslash in %r" % s)
        pos = m.end()
    try:
        out += s[pos:].encode("ascii")
    except UnicodeEncodeError:
        raise CorruptModel("non-ASCII character in merge entry %r" % s) from None
    return bytes(out)


def dumps_model(model: TokenizerModel) -> str:
    doc = {
        "version": model.version,
        "specials": list(model.specials),
        "merges": [[escape_bytes(a), escape_bytes(b)] for a, b in model.merges],
    }
    return json.dumps(doc, ensure_ascii=False, indent=1) + "\n"


def loads_model(text: str) -> TokenizerModel:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CorruptModel("not valid JSON: %s" % exc) from None
    if not isinstance(doc, dict):
        raise CorruptModel("model file must hold a JSON object")
    if doc.get("version") != FORMAT_VERSION:
        raise FormatVersionMismatch("unsupported model version %r" % doc.get("version"))
    specials, merges = doc.get("specials"), doc.get("merges")
    if not isinstance(specials, list) or not all(isinstance(s, str) for s in specials):
        raise CorruptModel("'specials' must be a list of strings")
    if not isinstance(merges, list) or not all(
            isinstance(m, list) and len(m) == 2 and all(isinstance(x, str) for x in m) for m in merges):
        raise CorruptModel("'merges' must be a list of string pairs")
    pairs = [(unescape_bytes(a), unescape_bytes(b)) for a, b in merges]
    return TokenizerModel(specials, pairs, doc["version"])


def save_model(model: TokenizerModel, destination: Union[str, Path]) -> None:
    Path(destination).write_text(dumps_model(model), encoding="utf-8")


def load_model(source: Union[str, Path]) -> TokenizerModel:
    try:
        text = Path(source).read_text(encoding="utf-8")
    except UnicodeDecodeError:
        raise CorruptModel("model file is not UTF-8") from None
    return loads_model(text)


def default_special_tokens() -> List[str]:
    """Commands from the arity table, grammar keywords, environment
    markers and SML structural tokens, in that order."""
    from exprkit import sml, tables

    out = ["\\" + name for name in tables.arity_table()]
    out += ["\\left", "\\right"]
    for env in tables.environment_table():
        out += ["\\begin{%s}" % env, "\\end{%s}" % env]
    out += sml.reserved_tokens()
    seen = set()
    return [s for s in out if not (s in seen or seen.add(s))]
