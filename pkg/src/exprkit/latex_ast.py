"""LaTeX math lexer, parser and canonical renderer.

The tree produced here is the common currency of the package: SML encoding,
metric canonicalization, deduplication and difficulty features all work on
it.  Nodes are frozen dataclasses, so structural equality and hashing come
for free and trees can be shared between threads.

Canonical form (what :func:`render` emits and :func:`parse` reads back to
the same tree):

* command arguments are always braced groups;
* scripts are always braced, subscript before superscript;
* a single space is inserted after a letter command only when a letter
  follows it.
"""

import enum
import re
import string
from dataclasses import dataclass
from typing import Iterator, List, Optional, Tuple, Union

from exprkit import tables

# ---------------------------------------------------------------------------
# Tokens
# ---------------------------------------------------------------------------

COMMAND = "command"
OPEN = "open"
CLOSE = "close"
SUP = "sup"
SUB = "sub"
AMP = "amp"
ROWBREAK = "rowbreak"
SYMBOL = "symbol"
BEGIN = "begin"
END = "end"
TEXT = "text"

TEXT_COMMANDS = frozenset({"text", "textrm", "textbf", "textit", "mbox"})
FRACTION_COMMANDS = frozenset({"frac", "dfrac", "tfrac", "cfrac"})

_LETTERS = frozenset(string.ascii_letters)
_ENV_NAME = re.compile(r"\s*\{([A-Za-z]+\*?)\}")
_TRAILING_COMMAND = re.compile(r"\\[A-Za-z]+$")


@dataclass(frozen=True)
class MathToken:
    kind: str
    value: str
    start: int
    end: int

    @property
    def span(self) -> Tuple[int, int]:
        return (self.start, self.end)

    @property
    def lexeme(self) -> str:
        """Surface form of the token, as it would be written back."""
        if self.kind == COMMAND:
            return "\\" + self.value
        if self.kind == BEGIN:
            return "\\begin{%s}" % self.value
        if self.kind == END:
            return "\\end{%s}" % self.value
        return _FIXED_LEXEMES.get(self.kind, self.value)


_FIXED_LEXEMES = {OPEN: "{", CLOSE: "}", SUP: "^", SUB: "_", AMP: "&", ROWBREAK: "\\\\"}


def lex(src: str) -> List[MathToken]:
    """Split ``src`` into math tokens.

    Comments and whitespace are dropped (whitespace inside text-mode
    arguments such as ``\\text{...}`` is kept verbatim in a single TEXT
    token).  Lexing is total: anything unrecognized becomes a SYMBOL.
    Spans are character offsets into ``src``.
    """
    tokens = []
    i, n = 0, len(src)
    while i < n:
        c = src[i]
        if c.isspace():
            i += 1
        elif c == "%":
            nl = src.find("\n", i)
            i = n if nl < 0 else nl + 1
        elif c == "\\":
            if i + 1 < n and src[i + 1] in _LETTERS:
                j = i + 1
                while j < n and src[j] in _LETTERS:
                    j += 1
                name = src[i + 1:j]
                if name in ("begin", "end"):
                    m = _ENV_NAME.match(src, j)
                    if m:
                        kind = BEGIN if name == "begin" else END
                        tokens.append(MathToken(kind, m.group(1), i, m.end()))
                        i = m.end()
                        continue
                tokens.append(MathToken(COMMAND, name, i, j))
                i = j
                if name in TEXT_COMMANDS:
                    i = _lex_text_argument(src, i, tokens)
            elif i + 1 < n and src[i + 1] == "\\":
                tokens.append(MathToken(ROWBREAK, "\\\\", i, i + 2))
                i += 2
            else:
                j = min(i + 2, n)
                tokens.append(MathToken(SYMBOL, src[i:j], i, j))
                i = j
        else:
            kind = _SINGLE_CHAR_KINDS.get(c, SYMBOL)
            tokens.append(MathToken(kind, c, i, i + 1))
            i += 1
    return tokens


_SINGLE_CHAR_KINDS = {"{": OPEN, "}": CLOSE, "^": SUP, "_": SUB, "&": AMP}


def _lex_text_argument(src: str, i: int, tokens: List[MathToken]) -> int:
    """Capture the raw argument of a text-mode command, if well formed."""
    n = len(src)
    j = i
    while j < n and src[j].isspace():
        j += 1
    if j >= n:
        return i
    if src[j] != "{":
        if src[j] in "\\}%^_&":
            return i
        tokens.append(MathToken(TEXT, src[j], j, j + 1))
        return j + 1
    depth, k = 0, j
    while k < n:
        ch = src[k]
        if ch == "\\":
            k += 2
            continue
        if ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth == 0:
                break
        k += 1
    if k >= n:
        return i  # unbalanced: let the ordinary lexer handle the braces
    tokens.append(MathToken(OPEN, "{", j, j + 1))
    if k > j + 1:
        tokens.append(MathToken(TEXT, src[j + 1:k], j + 1, k))
    tokens.append(MathToken(CLOSE, "}", k, k + 1))
    return k + 1


# ---------------------------------------------------------------------------
# Tree
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Symbol:
    lexeme: str


@dataclass(frozen=True)
class Group:
    children: Tuple["Node", ...] = ()


@dataclass(frozen=True)
class Sequence:
    children: Tuple["Node", ...] = ()


@dataclass(frozen=True)
class Command:
    name: str
    args: Tuple[Group, ...] = ()
    optional_arg: Optional[Group] = None


@dataclass(frozen=True)
class Fraction:
    numerator: "Node"
    denominator: "Node"
    command: str = "frac"


@dataclass(frozen=True)
class Radical:
    radicand: "Node"
    index: Optional[Group] = None


@dataclass(frozen=True)
class Script:
    base: "Node"
    subscript: Optional["Node"] = None
    superscript: Optional["Node"] = None


@dataclass(frozen=True)
class Row:
    cells: Tuple[Sequence, ...]


@dataclass(frozen=True)
class Environment:
    name: str
    rows: Tuple[Row, ...]
    args: Tuple[Group, ...] = ()


@dataclass(frozen=True)
class Text:
    text: str
    command: str = "text"


@dataclass(frozen=True)
class Delimited:
    left: str
    body: Sequence
    right: str


Node = Union[Symbol, Group, Sequence, Command, Fraction, Radical, Script,
             Environment, Text, Delimited]


def children(node) -> Tuple:
    """Direct children in source order (rows count as nodes)."""
    if isinstance(node, (Group, Sequence)):
        return node.children
    if isinstance(node, Fraction):
        return (node.numerator, node.denominator)
    if isinstance(node, Radical):
        return (node.index, node.radicand) if node.index is not None else (node.radicand,)
    if isinstance(node, Script):
        return tuple(c for c in (node.base, node.subscript, node.superscript) if c is not None)
    if isinstance(node, Command):
        opt = (node.optional_arg,) if node.optional_arg is not None else ()
        return opt + node.args
    if isinstance(node, Environment):
        return node.args + node.rows
    if isinstance(node, Row):
        return node.cells
    if isinstance(node, Delimited):
        return (node.body,)
    return ()


def walk(node) -> Iterator:
    """Pre-order traversal."""
    stack = [node]
    while stack:
        cur = stack.pop()
        yield cur
        stack.extend(reversed(children(cur)))


def depth(node) -> int:
    """Length of the longest root-to-leaf path, in edges."""
    best = 0
    stack = [(node, 0)]
    while stack:
        cur, d = stack.pop()
        best = max(best, d)
        stack.extend((c, d + 1) for c in children(cur))
    return best


def count_lines(node) -> int:
    """Visual line count: rows of the outermost multi-line environment.

    Matrix-family environments are single-line content and are not
    descended into.  Several outermost multi-line environments side by side
    report the tallest one.
    """
    envs = tables.environment_table()
    best = 1
    stack = [node]
    while stack:
        cur = stack.pop()
        if isinstance(cur, Environment):
            kind = envs[cur.name].kind if cur.name in envs else "other"
            if kind == "multiline":
                best = max(best, len(cur.rows))
                continue
            if kind == "matrix":
                continue
        stack.extend(children(cur))
    return best


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------


class ParseMode(enum.Enum):
    STRICT = "strict"
    LENIENT = "lenient"


@dataclass(frozen=True)
class Diagnostic:
    code: str
    message: str
    span: Tuple[int, int]

    def to_dict(self) -> dict:
        return {"code": self.code, "message": self.message, "span": list(self.span)}


class ParseError(ValueError):
    code = "ParseError"

    def __init__(self, message: str, span: Tuple[int, int]):
        super().__init__(f"{message} at {span[0]}:{span[1]}")
        self.message = message
        self.span = span

    def to_dict(self) -> dict:
        return Diagnostic(self.code, self.message, self.span).to_dict()


class UnbalancedBrace(ParseError):
    code = "UnbalancedBrace"


class UnclosedEnvironment(ParseError):
    code = "UnclosedEnvironment"


class MissingArgument(ParseError):
    code = "MissingArgument"


class DanglingScript(ParseError):
    code = "DanglingScript"


class DoubleScript(ParseError):
    code = "DoubleScript"


class _Parser:

    def __init__(self, tokens: List[MathToken], mode: ParseMode):
        self.tokens = tokens
        self.pos = 0
        self.strict = mode is ParseMode.STRICT
        self.diagnostics: List[Diagnostic] = []
        self.frames: List[Tuple[str, str]] = []
        self.arity = tables.arity_table()
        self.envs = tables.environment_table()

    # -- helpers ----------------------------------------------------------

    def peek(self) -> Optional[MathToken]:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def advance(self) -> MathToken:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def end_span(self) -> Tuple[int, int]:
        end = self.tokens[-1].end if self.tokens else 0
        return (end, end)

    def problem(self, exc_cls, message: str, span: Tuple[int, int]) -> None:
        if self.strict:
            raise exc_cls(message, span)
        self.diagnostics.append(Diagnostic(exc_cls.code, message, span))

    @staticmethod
    def _closes(tok: MathToken, frame: Tuple[str, str]) -> bool:
        kind, name = frame
        if kind == "group":
            return tok.kind == CLOSE
        if kind == "env":
            return tok.kind == END and tok.value == name
        if kind == "left":
            return tok.kind == COMMAND and tok.value == "right"
        return tok.kind == SYMBOL and tok.value == "]"

    def closes_open_frame(self, tok: MathToken) -> bool:
        top = len(self.frames) - 1
        for k in range(top, -1, -1):
            frame = self.frames[k]
            if frame[0] == "bracket" and k != top:
                continue
            if self._closes(tok, frame):
                return True
        return False

    def at_argument_boundary(self, tok: Optional[MathToken]) -> bool:
        if tok is None or tok.kind in (CLOSE, END, SUP, SUB, AMP, ROWBREAK):
            return True
        return self.closes_open_frame(tok)

    # -- grammar ----------------------------------------------------------

    def parse_root(self) -> "Node":
        items = self.parse_list()
        return items[0] if len(items) == 1 else Sequence(tuple(items))

    def parse_list(self) -> List["Node"]:
        items: List[Node] = []
        while True:
            tok = self.peek()
            if tok is None:
                return items
            if tok.kind in (CLOSE, END, COMMAND, SYMBOL) and self.closes_open_frame(tok):
                return items
            if tok.kind in (AMP, ROWBREAK) and self.frames and self.frames[-1][0] == "env":
                return items
            if tok.kind in (SUP, SUB):
                self.problem(DanglingScript, "script without a base", tok.span)
                items.append(self.scripts(Group(())))
                continue
            node = self.atom()
            if node is not None:
                items.append(self.scripts(node))

    def atom(self) -> Optional["Node"]:
        tok = self.peek()
        kind = tok.kind
        if kind == OPEN:
            return self.group()
        if kind == BEGIN:
            return self.environment()
        if kind == COMMAND:
            return self.command()
        self.advance()
        if kind == CLOSE:
            self.problem(UnbalancedBrace, "unmatched '}'", tok.span)
            return None
        if kind == END:
            self.problem(UnclosedEnvironment, "\\end{%s} without \\begin" % tok.value, tok.span)
            return None
        if kind == TEXT:
            return Text(tok.value)
        if kind == AMP:
            return Symbol("&")
        if kind == ROWBREAK:
            return Symbol("\\\\")
        return Symbol(tok.value)

    def group(self) -> Group:
        open_tok = self.advance()
        self.frames.append(("group", ""))
        items = self.parse_list()
        self.frames.pop()
        tok = self.peek()
        if tok is not None and tok.kind == CLOSE:
            self.advance()
        else:
            self.problem(UnbalancedBrace, "unclosed '{'", open_tok.span)
        return Group(tuple(items))

    def argument(self, owner: MathToken) -> Group:
        tok = self.peek()
        if self.at_argument_boundary(tok):
            self.problem(MissingArgument, "missing argument for %s" % owner.lexeme,
                         tok.span if tok is not None else self.end_span())
            return Group(())
        if tok.kind == OPEN:
            return self.group()
        node = self.atom()
        return Group((node,)) if node is not None else Group(())

    def script_argument(self, op: MathToken) -> "Node":
        tok = self.peek()
        if self.at_argument_boundary(tok):
            self.problem(MissingArgument, "missing argument for '%s'" % op.lexeme,
                         tok.span if tok is not None else self.end_span())
            return Group(())
        if tok.kind == OPEN:
            g = self.group()
            return g.children[0] if len(g.children) == 1 else g
        node = self.atom()
        return node if node is not None else Group(())

    def scripts(self, base: "Node") -> "Node":
        slots = {SUB: None, SUP: None}
        while True:
            tok = self.peek()
            if tok is None or tok.kind not in (SUB, SUP):
                break
            op = self.advance()
            arg = self.script_argument(op)
            if slots[op.kind] is not None:
                self.problem(DoubleScript, "double '%s'" % op.lexeme, op.span)
            slots[op.kind] = arg
        if slots[SUB] is None and slots[SUP] is None:
            return base
        return Script(base, slots[SUB], slots[SUP])

    def optional_argument(self) -> Optional[Group]:
        tok = self.peek()
        if tok is None or tok.kind != SYMBOL or tok.value != "[":
            return None
        self.advance()
        self.frames.append(("bracket", ""))
        items = self.parse_list()
        self.frames.pop()
        end = self.peek()
        if end is not None and end.kind == SYMBOL and end.value == "]":
            self.advance()
        else:
            self.problem(UnbalancedBrace, "unclosed '['", tok.span)
        return Group(tuple(items))

    def delimiter(self, owner: MathToken) -> str:
        tok = self.peek()
        if tok is not None and tok.kind == SYMBOL:
            self.advance()
            return tok.value
        if tok is not None and tok.kind == COMMAND and tok.value not in ("left", "right"):
            self.advance()
            return "\\" + tok.value
        self.problem(MissingArgument, "missing delimiter after %s" % owner.lexeme,
                     tok.span if tok is not None else self.end_span())
        return "."

    def command(self) -> Optional["Node"]:
        tok = self.advance()
        name = tok.value
        if name == "left":
            return self.delimited(tok)
        if name == "right":
            self.problem(UnbalancedBrace, "\\right without \\left", tok.span)
            nxt = self.peek()
            if nxt is not None and nxt.kind in (SYMBOL, COMMAND) and nxt.value not in ("left", "right"):
                self.advance()
            return None
        if name in TEXT_COMMANDS:
            return self.text(tok)
        entry = self.arity.get(name)
        if entry is None or entry.arity == 0:
            return Symbol(tok.lexeme)
        opt = self.optional_argument() if entry.optional else None
        args = tuple(self.argument(tok) for _ in range(entry.arity))
        if name in FRACTION_COMMANDS:
            return Fraction(args[0], args[1], name)
        if name == "sqrt":
            return Radical(args[0], opt)
        return Command(name, args, opt)

    def text(self, tok: MathToken) -> Text:
        nxt = self.peek()
        if nxt is not None and nxt.kind == TEXT:
            self.advance()
            return Text(nxt.value, tok.value)
        if nxt is not None and nxt.kind == OPEN:
            after = self.tokens[self.pos + 1] if self.pos + 1 < len(self.tokens) else None
            if after is not None and after.kind == TEXT:
                self.pos += 2
                close = self.peek()
                if close is not None and close.kind == CLOSE:
                    self.advance()
                return Text(after.value, tok.value)
            if after is not None and after.kind == CLOSE:
                self.pos += 2
                return Text("", tok.value)
            # unbalanced braces inside the argument; fall back to math parsing
            g = self.group()
            return Text("".join(render(c) for c in g.children), tok.value)
        self.problem(MissingArgument, "missing argument for %s" % tok.lexeme,
                     nxt.span if nxt is not None else self.end_span())
        return Text("", tok.value)

    def delimited(self, tok: MathToken) -> Delimited:
        left = self.delimiter(tok)
        self.frames.append(("left", ""))
        items = self.parse_list()
        self.frames.pop()
        nxt = self.peek()
        if nxt is not None and nxt.kind == COMMAND and nxt.value == "right":
            right = self.delimiter(self.advance())
        else:
            self.problem(UnbalancedBrace, "\\left without \\right", tok.span)
            right = "."
        return Delimited(left, Sequence(tuple(items)), right)

    def environment(self) -> Environment:
        begin = self.advance()
        name = begin.value
        self.frames.append(("env", name))
        entry = self.envs.get(name)
        args = tuple(self.argument(begin) for _ in range(entry.args if entry else 0))
        rows: List[Row] = []
        cells: List[Sequence] = []
        while True:
            cells.append(Sequence(tuple(self.parse_list())))
            tok = self.peek()
            if tok is not None and tok.kind == AMP:
                self.advance()
            elif tok is not None and tok.kind == ROWBREAK:
                self.advance()
                rows.append(Row(tuple(cells)))
                cells = []
            else:
                break
        rows.append(Row(tuple(cells)))
        self.frames.pop()
        tok = self.peek()
        if tok is not None and tok.kind == END and tok.value == name:
            self.advance()
        else:
            self.problem(UnclosedEnvironment, "unclosed \\begin{%s}" % name, begin.span)
        return Environment(name, tuple(rows), args)


def parse(tokens: Union[str, List[MathToken]], mode: ParseMode = ParseMode.STRICT) -> "Node":
    """Parse a token list (or a raw string) into a tree.

    Strict mode raises the first :class:`ParseError`; lenient mode repairs
    and never raises (use :func:`parse_with_diagnostics` to see repairs).
    """
    return parse_with_diagnostics(tokens, mode)[0]


def parse_with_diagnostics(tokens, mode: ParseMode = ParseMode.LENIENT):
    if isinstance(tokens, str):
        tokens = lex(tokens)
    parser = _Parser(list(tokens), mode)
    tree = parser.parse_root()
    return tree, parser.diagnostics


def parse_latex(src: str, mode: ParseMode = ParseMode.STRICT) -> "Node":
    return parse(lex(src), mode)


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------


def _join(pieces) -> str:
    out = ""
    for piece in pieces:
        if out and piece and piece[0] in _LETTERS and _TRAILING_COMMAND.search(out):
            out += " "
        out += piece
    return out


def _braced(node) -> str:
    if isinstance(node, Group):
        return render(node)
    return "{" + render(node) + "}"


def _script_slot(node) -> str:
    if isinstance(node, Group) and len(node.children) != 1:
        return render(node)
    return "{" + render(node) + "}"


def render(node) -> str:
    """Canonical LaTeX for a tree."""
    if isinstance(node, Symbol):
        return node.lexeme
    if isinstance(node, Group):
        return "{" + _join(render(c) for c in node.children) + "}"
    if isinstance(node, Sequence):
        return _join(render(c) for c in node.children)
    if isinstance(node, Fraction):
        return "\\" + node.command + _braced(node.numerator) + _braced(node.denominator)
    if isinstance(node, Radical):
        index = ""
        if node.index is not None:
            index = "[" + _join(render(c) for c in node.index.children) + "]"
        return "\\sqrt" + index + _braced(node.radicand)
    if isinstance(node, Script):
        out = render(node.base)
        if node.subscript is not None:
            out += "_" + _script_slot(node.subscript)
        if node.superscript is not None:
            out += "^" + _script_slot(node.superscript)
        return out
    if isinstance(node, Command):
        out = "\\" + node.name
        if node.optional_arg is not None:
            out += "[" + _join(render(c) for c in node.optional_arg.children) + "]"
        return out + "".join(_braced(a) for a in node.args)
    if isinstance(node, Text):
        return "\\%s{%s}" % (node.command, node.text)
    if isinstance(node, Environment):
        body = "\\\\".join(
            "&".join(render(cell) for cell in row.cells) for row in node.rows)
        args = "".join(_braced(a) for a in node.args)
        return "\\begin{%s}%s%s\\end{%s}" % (node.name, args, body, node.name)
    if isinstance(node, Delimited):
        return _join(["\\left", node.left, render(node.body), "\\right", node.right])
    raise TypeError("not a tree node: %r" % (node,))


# ---------------------------------------------------------------------------
# Normalization
# ---------------------------------------------------------------------------


def _canonical_name(name: str) -> str:
    return tables.synonym_table().get("\\" + name, "\\" + name)[1:]


def normalize(node):
    """Canonicalize a tree for comparison.

    Applies the synonym table, drops spacing-only commands and flattens
    single-child groups that are not command arguments.  Idempotent.
    """
    out = _norm(node, "root")
    return out if out is not None else Sequence(())


def _norm_list(nodes) -> Tuple:
    out = []
    for c in nodes:
        r = _norm(c, "list")
        if r is not None:
            out.append(r)
    return tuple(out)


def _norm_arg(node) -> Group:
    r = _norm(node, "arg")
    if r is None:
        return Group(())
    return r if isinstance(r, Group) else Group((r,))


def _norm(node, ctx: str):
    spacing = tables.spacing_commands()
    synonyms = tables.synonym_table()
    if isinstance(node, Symbol):
        if node.lexeme in spacing:
            return None
        return Symbol(synonyms.get(node.lexeme, node.lexeme))
    if isinstance(node, Group):
        kids = _norm_list(node.children)
        if len(kids) == 1 and ctx in ("list", "root", "slot"):
            return kids[0]
        if len(kids) == 1 and ctx == "base" and not isinstance(kids[0], Script):
            return kids[0]
        return Group(kids)
    if isinstance(node, Sequence):
        kids = _norm_list(node.children)
        if ctx == "root" and len(kids) == 1:
            return kids[0]
        return Sequence(kids)
    if isinstance(node, Fraction):
        return Fraction(_norm_arg(node.numerator), _norm_arg(node.denominator),
                        _canonical_name(node.command))
    if isinstance(node, Radical):
        index = _norm_arg(node.index) if node.index is not None else None
        return Radical(_norm_arg(node.radicand), index)
    if isinstance(node, Command):
        if "\\" + node.name in spacing:
            return None
        opt = _norm_arg(node.optional_arg) if node.optional_arg is not None else None
        return Command(_canonical_name(node.name), tuple(_norm_arg(a) for a in node.args), opt)
    if isinstance(node, Script):
        base = _norm(node.base, "base")
        sub = _norm(node.subscript, "slot") if node.subscript is not None else None
        sup = _norm(node.superscript, "slot") if node.superscript is not None else None
        if base is None:
            base = Group(())
        if sub is None and sup is None:
            return base
        return Script(base, sub, sup)
    if isinstance(node, Environment):
        rows = tuple(Row(tuple(Sequence(_norm_list(cell.children)) for cell in row.cells))
                     for row in node.rows)
        return Environment(node.name, rows, tuple(_norm_arg(a) for a in node.args))
    if isinstance(node, Delimited):
        return Delimited(synonyms.get(node.left, node.left),
                         Sequence(_norm_list(node.body.children)),
                         synonyms.get(node.right, node.right))
    return node


# ---------------------------------------------------------------------------
# JSON form
# ---------------------------------------------------------------------------


def to_dict(node) -> dict:
    if isinstance(node, Symbol):
        return {"type": "symbol", "value": node.lexeme}
    if isinstance(node, Group):
        return {"type": "group", "children": [to_dict(c) for c in node.children]}
    if isinstance(node, Sequence):
        return {"type": "seq", "children": [to_dict(c) for c in node.children]}
    if isinstance(node, Fraction):
        return {"type": "frac", "command": node.command,
                "num": to_dict(node.numerator), "den": to_dict(node.denominator)}
    if isinstance(node, Radical):
        return {"type": "sqrt", "radicand": to_dict(node.radicand),
                "index": to_dict(node.index) if node.index is not None else None}
    if isinstance(node, Script):
        return {"type": "script", "base": to_dict(node.base),
                "sub": to_dict(node.subscript) if node.subscript is not None else None,
                "sup": to_dict(node.superscript) if node.superscript is not None else None}
    if isinstance(node, Command):
        return {"type": "command", "name": node.name, "args": [to_dict(a) for a in node.args],
                "optional": to_dict(node.optional_arg) if node.optional_arg is not None else None}
    if isinstance(node, Text):
        return {"type": "text", "command": node.command, "value": node.text}
    if isinstance(node, Environment):
        return {"type": "env", "name": node.name, "args": [to_dict(a) for a in node.args],
                "rows": [[to_dict(c) for c in row.cells] for row in node.rows]}
    if isinstance(node, Delimited):
        return {"type": "delimited", "left": node.left, "right": node.right,
                "body": to_dict(node.body)}
    raise TypeError("not a tree node: %r" % (node,))


def from_dict(d: dict):
    """Inverse of :func:`to_dict`; raises ``ValueError`` on malformed input."""
    try:
        kind = d["type"]
        opt = lambda key: from_dict(d[key]) if d.get(key) is not None else None  # noqa: E731
        if kind == "symbol":
            return Symbol(d["value"])
        if kind == "group":
            return Group(tuple(from_dict(c) for c in d["children"]))
        if kind == "seq":
            return Sequence(tuple(from_dict(c) for c in d["children"]))
        if kind == "frac":
            return Fraction(from_dict(d["num"]), from_dict(d["den"]), d.get("command", "frac"))
        if kind == "sqrt":
            return Radical(from_dict(d["radicand"]), opt("index"))
        if kind == "script":
            return Script(from_dict(d["base"]), opt("sub"), opt("sup"))
        if kind == "command":
            return Command(d["name"], tuple(from_dict(a) for a in d["args"]), opt("optional"))
        if kind == "text":
            return Text(d["value"], d.get("command", "text"))
        if kind == "env":
            rows = tuple(Row(tuple(from_dict(c) for c in row)) for row in d["rows"])
            return Environment(d["name"], rows, tuple(from_dict(a) for a in d.get("args", [])))
        if kind == "delimited":
            return Delimited(d["left"], from_dict(d["body"]), d["right"])
    except (KeyError, TypeError, AttributeError) as exc:
        raise ValueError("malformed tree JSON: %s" % exc) from None
    raise ValueError("unknown node type %r" % (d.get("type") if isinstance(d, dict) else d,))


def check_invariants(node) -> None:
    """Raise ``ValueError`` if ``node`` breaks a tree invariant."""
    arity = tables.arity_table()
    for cur in walk(node):
        if isinstance(cur, Command):
            entry = arity.get(cur.name)
            if entry is None or entry.arity != len(cur.args):
                raise ValueError("arity mismatch for \\%s" % cur.name)
        elif isinstance(cur, Script):
            if cur.subscript is None and cur.superscript is None:
                raise ValueError("script without sub/superscript")
        elif isinstance(cur, Environment):
            if not cur.rows or any(not row.cells for row in cur.rows):
                raise ValueError("environment with an empty row list or row")
