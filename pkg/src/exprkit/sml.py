"""Structured Mathematical Language: a flat token encoding of syntax trees.

Every structural slot of a tree is bracketed by an open/close token pair
carrying its role (``<frac>`` ... ``</frac>``), leaves are emitted verbatim,
and sibling order is the order of the sequence.  The encoding is a
pre-order walk, so decoding is a single left-to-right pass.

Slot conventions:

* argument slots (NUM, DEN, BODY, IDX, OPT and command-argument GRP) always
  hold a group in the tree and list the group's children directly;
* BASE/SUB/SUP hold any node: a lone node is emitted as itself, a group
  with zero or several children is emitted as its children;
* CELL and DELIM list the children of their ``Sequence`` directly;
* a root ``Sequence`` with other than one child is written as its bare
  children at top level.
"""

import json
import re
from dataclasses import dataclass
from typing import List, Optional, Sequence as Seq, Tuple

from exprkit import latex_ast as ast
from exprkit import tables

FRAC, NUM, DEN = "frac", "num", "den"
RAD, IDX, BODY = "rad", "idx", "body"
SCR, BASE, SUB, SUP = "scr", "base", "sub", "sup"
GRP, SEQ = "grp", "seq"
ENV, ROW, CELL = "env", "row", "cell"
CMD, OPT, TEXT, DELIM = "cmd", "opt", "text", "delim"

ROLES = (FRAC, NUM, DEN, RAD, IDX, BODY, SCR, BASE, SUB, SUP, GRP, SEQ,
         ENV, ROW, CELL, CMD, OPT, TEXT, DELIM)
# roles whose open token must carry a payload
PAYLOAD_REQUIRED = {ENV: 1, CMD: 1, DELIM: 2}
# roles whose open token may carry a one-element payload
PAYLOAD_OPTIONAL = {FRAC, TEXT}

OPEN, CLOSE, LEAF = "open", "close", "leaf"


@dataclass(frozen=True)
class SmlToken:
    kind: str
    role: str = ""
    payload: Tuple[str, ...] = ()
    value: str = ""

    def __str__(self) -> str:
        return token_to_text(self)


def Open(role: str, *payload: str) -> SmlToken:
    return SmlToken(OPEN, role, tuple(payload))


def Close(role: str) -> SmlToken:
    return SmlToken(CLOSE, role)


def Leaf(value: str) -> SmlToken:
    return SmlToken(LEAF, value=value)


class SmlError(ValueError):
    code = "SmlError"

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (token {position})")
        self.message = message
        self.position = position


class UnbalancedSml(SmlError):
    code = "UnbalancedSml"


class RoleOrderViolation(SmlError):
    code = "RoleOrderViolation"

    def __init__(self, position: int, expected: str, found: str):
        super().__init__("expected %s, found %s" % (expected, found), position)
        self.expected = expected
        self.found = found


class EmptyRequiredScope(SmlError):
    code = "EmptyRequiredScope"

    def __init__(self, role: str, position: int):
        super().__init__("empty <%s> scope" % role, position)
        self.role = role


# ---------------------------------------------------------------------------
# Encoding
# ---------------------------------------------------------------------------


def encode_sml(tree) -> List[SmlToken]:
    out: List[SmlToken] = []
    if isinstance(tree, ast.Sequence) and len(tree.children) != 1:
        for child in tree.children:
            _emit(child, out)
    else:
        _emit(tree, out)
    return out


def _scope(role: str, payload: Tuple[str, ...], nodes, out: List[SmlToken]) -> None:
    out.append(SmlToken(OPEN, role, payload))
    for n in nodes:
        _emit(n, out)
    out.append(SmlToken(CLOSE, role))


def _arg_children(node) -> Tuple:
    if not isinstance(node, ast.Group):
        raise ValueError("argument slot must hold a Group, got %r" % (node,))
    return node.children


def _loose(node) -> Tuple:
    if isinstance(node, ast.Group) and len(node.children) != 1:
        return node.children
    return (node,)


def _emit(node, out: List[SmlToken]) -> None:
    if isinstance(node, ast.Symbol):
        if not node.lexeme:
            raise ValueError("empty symbol lexeme")
        out.append(SmlToken(LEAF, value=node.lexeme))
    elif isinstance(node, ast.Group):
        _scope(GRP, (), node.children, out)
    elif isinstance(node, ast.Sequence):
        _scope(SEQ, (), node.children, out)
    elif isinstance(node, ast.Fraction):
        out.append(SmlToken(OPEN, FRAC, () if node.command == "frac" else (node.command,)))
        _scope(NUM, (), _arg_children(node.numerator), out)
        _scope(DEN, (), _arg_children(node.denominator), out)
        out.append(SmlToken(CLOSE, FRAC))
    elif isinstance(node, ast.Radical):
        out.append(SmlToken(OPEN, RAD))
        if node.index is not None:
            _scope(IDX, (), _arg_children(node.index), out)
        _scope(BODY, (), _arg_children(node.radicand), out)
        out.append(SmlToken(CLOSE, RAD))
    elif isinstance(node, ast.Script):
        out.append(SmlToken(OPEN, SCR))
        _scope(BASE, (), _loose(node.base), out)
        if node.subscript is not None:
            _scope(SUB, (), _loose(node.subscript), out)
        if node.superscript is not None:
            _scope(SUP, (), _loose(node.superscript), out)
        out.append(SmlToken(CLOSE, SCR))
    elif isinstance(node, ast.Command):
        out.append(SmlToken(OPEN, CMD, (node.name,)))
        if node.optional_arg is not None:
            _scope(OPT, (), _arg_children(node.optional_arg), out)
        for arg in node.args:
            _scope(GRP, (), _arg_children(arg), out)
        out.append(SmlToken(CLOSE, CMD))
    elif isinstance(node, ast.Text):
        out.append(SmlToken(OPEN, TEXT, () if node.command == "text" else (node.command,)))
        if node.text:
            out.append(SmlToken(LEAF, value=node.text))
        out.append(SmlToken(CLOSE, TEXT))
    elif isinstance(node, ast.Environment):
        out.append(SmlToken(OPEN, ENV, (node.name,)))
        for arg in node.args:
            _scope(GRP, (), _arg_children(arg), out)
        for row in node.rows:
            out.append(SmlToken(OPEN, ROW))
            for cell in row.cells:
                _scope(CELL, (), cell.children, out)
            out.append(SmlToken(CLOSE, ROW))
        out.append(SmlToken(CLOSE, ENV))
    elif isinstance(node, ast.Delimited):
        _scope(DELIM, (node.left, node.right), node.body.children, out)
    else:
        raise TypeError("not a tree node: %r" % (node,))


# ---------------------------------------------------------------------------
# Decoding
# ---------------------------------------------------------------------------


def _describe(tok: Optional[SmlToken]) -> str:
    return "end of sequence" if tok is None else token_to_text(tok)


class _Decoder:

    def __init__(self, tokens: Seq[SmlToken]):
        self.toks = list(tokens)
        self.pos = 0
        self.arity = tables.arity_table()

    def peek(self) -> Optional[SmlToken]:
        return self.toks[self.pos] if self.pos < len(self.toks) else None

    def is_open(self, role: str) -> bool:
        tok = self.peek()
        return tok is not None and tok.kind == OPEN and tok.role == role

    def expect_open(self, role: str) -> SmlToken:
        tok = self.peek()
        if tok is None:
            raise UnbalancedSml("missing <%s>" % role, self.pos)
        if tok.kind != OPEN or tok.role != role:
            raise RoleOrderViolation(self.pos, "<%s>" % role, _describe(tok))
        self._check_payload(tok)
        self.pos += 1
        return tok

    def expect_close(self, role: str) -> None:
        tok = self.peek()
        if tok is None:
            raise UnbalancedSml("missing </%s>" % role, self.pos)
        if tok.kind != CLOSE or tok.role != role:
            if tok.kind == CLOSE:
                raise UnbalancedSml("</%s> closes <%s>" % (tok.role, role), self.pos)
            raise RoleOrderViolation(self.pos, "</%s>" % role, _describe(tok))
        self.pos += 1

    def _check_payload(self, tok: SmlToken) -> None:
        need = PAYLOAD_REQUIRED.get(tok.role)
        if need is not None:
            ok = len(tok.payload) == need and all(tok.payload)
        elif tok.role in PAYLOAD_OPTIONAL:
            ok = len(tok.payload) <= 1 and all(tok.payload)
        else:
            ok = tok.role in ROLES and not tok.payload
        if not ok:
            raise RoleOrderViolation(self.pos, "well-formed <%s> payload" % tok.role, _describe(tok))

    def nodes_until_close(self) -> List:
        items = []
        while True:
            tok = self.peek()
            if tok is None or tok.kind == CLOSE:
                return items
            items.append(self.node())

    def scope(self, role: str) -> List:
        self.expect_open(role)
        items = self.nodes_until_close()
        self.expect_close(role)
        return items

    def node(self):
        tok = self.peek()
        start = self.pos
        if tok.kind == LEAF:
            if not tok.value:
                raise RoleOrderViolation(start, "nonempty leaf", "empty leaf")
            self.pos += 1
            return ast.Symbol(tok.value)
        if tok.kind == CLOSE:
            raise UnbalancedSml("unexpected </%s>" % tok.role, start)
        self._check_payload(tok)
        role = tok.role
        if role == GRP:
            return ast.Group(tuple(self.scope(GRP)))
        if role == SEQ:
            return ast.Sequence(tuple(self.scope(SEQ)))
        if role == FRAC:
            self.pos += 1
            num = ast.Group(tuple(self.scope(NUM)))
            den = ast.Group(tuple(self.scope(DEN)))
            self.expect_close(FRAC)
            return ast.Fraction(num, den, tok.payload[0] if tok.payload else "frac")
        if role == RAD:
            self.pos += 1
            index = ast.Group(tuple(self.scope(IDX))) if self.is_open(IDX) else None
            body = ast.Group(tuple(self.scope(BODY)))
            self.expect_close(RAD)
            return ast.Radical(body, index)
        if role == SCR:
            self.pos += 1
            base = self._loose(self.scope(BASE))
            sub = self._loose(self.scope(SUB)) if self.is_open(SUB) else None
            sup = self._loose(self.scope(SUP)) if self.is_open(SUP) else None
            if sub is None and sup is None:
                raise EmptyRequiredScope(SCR, start)
            self.expect_close(SCR)
            return ast.Script(base, sub, sup)
        if role == CMD:
            self.pos += 1
            name = tok.payload[0]
            opt = ast.Group(tuple(self.scope(OPT))) if self.is_open(OPT) else None
            args = []
            while self.is_open(GRP):
                args.append(ast.Group(tuple(self.scope(GRP))))
            entry = self.arity.get(name)
            if entry is None or entry.arity != len(args) or (opt is not None and not entry.optional):
                expected = "%d argument(s) for <cmd:%s>" % (entry.arity, name) if entry else \
                    "a known command"
                raise RoleOrderViolation(self.pos, expected, _describe(self.peek()))
            self.expect_close(CMD)
            return ast.Command(name, tuple(args), opt)
        if role == TEXT:
            self.pos += 1
            text = ""
            nxt = self.peek()
            if nxt is not None and nxt.kind == LEAF:
                text = nxt.value
                self.pos += 1
            self.expect_close(TEXT)
            return ast.Text(text, tok.payload[0] if tok.payload else "text")
        if role == ENV:
            self.pos += 1
            args = []
            while self.is_open(GRP):
                args.append(ast.Group(tuple(self.scope(GRP))))
            rows = []
            while self.is_open(ROW):
                row_start = self.pos
                self.pos += 1
                cells = []
                while self.is_open(CELL):
                    cells.append(ast.Sequence(tuple(self.scope(CELL))))
                if not cells:
                    raise EmptyRequiredScope(ROW, row_start)
                self.expect_close(ROW)
                rows.append(ast.Row(tuple(cells)))
            if not rows:
                raise EmptyRequiredScope(ENV, start)
            self.expect_close(ENV)
            return ast.Environment(tok.payload[0], tuple(rows), tuple(args))
        if role == DELIM:
            items = self.scope(DELIM)
            return ast.Delimited(tok.payload[0], ast.Sequence(tuple(items)), tok.payload[1])
        raise RoleOrderViolation(start, "a node", _describe(tok))

    @staticmethod
    def _loose(items):
        return items[0] if len(items) == 1 else ast.Group(tuple(items))

    def decode(self):
        items = []
        while self.pos < len(self.toks):
            tok = self.peek()
            if tok.kind == CLOSE:
                raise UnbalancedSml("unexpected </%s>" % tok.role, self.pos)
            items.append(self.node())
        return items[0] if len(items) == 1 else ast.Sequence(tuple(items))


def decode_sml(seq: Seq[SmlToken]):
    """Rebuild the tree; raises :class:`SmlError` on malformed input."""
    return _Decoder(seq).decode()


def validate_sml(seq: Seq[SmlToken]) -> Optional[SmlError]:
    """``None`` if ``seq`` is well formed, else the earliest violation."""
    try:
        _Decoder(seq).decode()
    except SmlError as err:
        return err
    return None


def latex_to_sml(src: str, mode: ast.ParseMode = ast.ParseMode.STRICT) -> List[SmlToken]:
    return encode_sml(ast.parse(ast.lex(src), mode))


def sml_to_latex(seq: Seq[SmlToken]) -> str:
    return ast.render(decode_sml(seq))


# ---------------------------------------------------------------------------
# Text and JSON forms
# ---------------------------------------------------------------------------

_ESCAPES = {"%": "%25", " ": "%20", "\t": "%09", "\n": "%0A", "\r": "%0D",
            ":": "%3A", "<": "%3C", ">": "%3E"}
_STRUCTURAL = re.compile(r"^<(/?)([a-z]+)((?::[^:>]*)*)>$")


def _escape_payload(s: str) -> str:
    return "".join(_ESCAPES.get(c, c) for c in s)


def _escape_leaf(s: str) -> str:
    out = "".join(_ESCAPES[c] if c in "% \t\n\r" else c for c in s)
    if out.startswith("<"):
        out = "%3C" + out[1:]
    return out


def _unescape(s: str) -> str:
    return re.sub(r"%([0-9A-F]{2})", lambda m: chr(int(m.group(1), 16)), s)


def token_to_text(tok: SmlToken) -> str:
    if tok.kind == LEAF:
        return _escape_leaf(tok.value)
    if tok.kind == CLOSE:
        return "</%s>" % tok.role
    return "<%s>" % ":".join((tok.role,) + tuple(_escape_payload(p) for p in tok.payload))


def structural_text(role: str, *payload: str, close: bool = False) -> str:
    """Reserved surface string for a structural token."""
    return token_to_text(Close(role) if close else Open(role, *payload))


def to_text(seq: Seq[SmlToken]) -> str:
    return " ".join(token_to_text(t) for t in seq)


def from_text(text: str) -> List[SmlToken]:
    out = []
    for piece in text.split():
        m = _STRUCTURAL.match(piece)
        if m:
            payload = tuple(_unescape(p) for p in m.group(3).split(":")[1:])
            out.append(SmlToken(CLOSE if m.group(1) else OPEN, m.group(2), () if m.group(1) else payload))
        else:
            out.append(SmlToken(LEAF, value=_unescape(piece)))
    return out


def to_json(seq: Seq[SmlToken]) -> list:
    out = []
    for tok in seq:
        if tok.kind == LEAF:
            out.append({"t": LEAF, "v": tok.value})
        elif tok.payload:
            out.append({"t": tok.kind, "r": tok.role, "p": list(tok.payload)})
        else:
            out.append({"t": tok.kind, "r": tok.role})
    return out


def from_json(items) -> List[SmlToken]:
    out = []
    try:
        for d in items:
            if d["t"] == LEAF:
                out.append(SmlToken(LEAF, value=d["v"]))
            elif d["t"] in (OPEN, CLOSE):
                out.append(SmlToken(d["t"], d["r"], tuple(d.get("p", ()))))
            else:
                raise ValueError("unknown token type %r" % d["t"])
    except (KeyError, TypeError) as exc:
        raise ValueError("malformed SML JSON: %s" % exc) from None
    return out


def dumps(seq: Seq[SmlToken]) -> str:
    return json.dumps(to_json(seq), ensure_ascii=False)


def reserved_tokens() -> List[str]:
    """Structural token strings without payload, plus payload forms for the
    shipped environment and command tables."""
    out = []
    for role in ROLES:
        if role not in PAYLOAD_REQUIRED:
            out.append(structural_text(role))
        out.append(structural_text(role, close=True))
    for name in tables.environment_table():
        out.append(structural_text(ENV, name))
    for name, entry in tables.arity_table().items():
        if entry.arity > 0 and name not in ast.FRACTION_COMMANDS and name != "sqrt" \
                and name not in ast.TEXT_COMMANDS:
            out.append(structural_text(CMD, name))
    return out
