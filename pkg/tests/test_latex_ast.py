import random

import pytest
from hypothesis import given, strategies as st

from exprkit import latex_ast as ast
from exprkit.latex_ast import (Command, Delimited, Environment, Fraction, Group, ParseMode,
                               Radical, Row, Script, Sequence, Symbol, Text)
from treegen import random_latex, random_tree


def kinds(src):
    return [(t.kind, t.value) for t in ast.lex(src)]


# -- lexing -------------------------------------------------------------------


def test_lex_fraction():
    assert kinds(r"\frac{a}{b}") == [
        ("command", "frac"), ("open", "{"), ("symbol", "a"), ("close", "}"),
        ("open", "{"), ("symbol", "b"), ("close", "}")]


def test_lex_strips_comment():
    assert kinds("x^2 % note") == [("symbol", "x"), ("sup", "^"), ("symbol", "2")]


def test_lex_environment_and_rowbreak():
    assert kinds(r"\begin{gather} a \\ b \end{gather}") == [
        ("begin", "gather"), ("symbol", "a"), ("rowbreak", "\\\\"), ("symbol", "b"), ("end", "gather")]


def test_lex_escaped_brace_is_symbol():
    assert kinds(r"\{x\}") == [("symbol", "\\{"), ("symbol", "x"), ("symbol", "\\}")]


def test_lex_text_argument_is_raw():
    assert kinds(r"\text{a \b}") == [("command", "text"), ("open", "{"), ("text", "a \\b"), ("close", "}")]


def test_lex_starred_environment():
    assert kinds(r"\begin{align*}\end{align*}") == [("begin", "align*"), ("end", "align*")]


def test_lex_is_total_on_odd_input():
    toks = ast.lex("\\")
    assert [(t.kind, t.value) for t in toks] == [("symbol", "\\")]


@given(st.text(max_size=60))
def test_lex_spans_strictly_increase(src):
    toks = ast.lex(src)
    for t in toks:
        assert 0 <= t.start < t.end <= len(src)
    for a, b in zip(toks, toks[1:]):
        assert a.end <= b.start
    for t in toks:
        if t.kind == ast.COMMAND:
            assert t.value and t.value.isalpha()


# -- parsing ------------------------------------------------------------------


def test_parse_fraction():
    assert ast.parse(r"\frac{a}{b}") == Fraction(Group((Symbol("a"),)), Group((Symbol("b"),)))


def test_parse_superscript():
    assert ast.parse("x^2") == Script(Symbol("x"), None, Symbol("2"))


def test_parse_sub_and_sup_any_order():
    want = Script(Symbol("x"), Symbol("i"), Symbol("2"))
    assert ast.parse("x_i^2") == want
    assert ast.parse("x^2_i") == want


@pytest.mark.parametrize("src,exc", [
    ("{x", ast.UnbalancedBrace),
    ("x}", ast.UnbalancedBrace),
    (r"\begin{align}a", ast.UnclosedEnvironment),
    (r"a\end{align}", ast.UnclosedEnvironment),
    (r"\frac{a}", ast.MissingArgument),
    ("^2", ast.DanglingScript),
    ("x^2^3", ast.DoubleScript),
    (r"\left( x", ast.UnbalancedBrace),
])
def test_strict_errors(src, exc):
    with pytest.raises(exc):
        ast.parse(src, ParseMode.STRICT)


def test_lenient_repairs_and_reports():
    tree, diags = ast.parse_with_diagnostics(ast.lex("{x"), ParseMode.LENIENT)
    assert tree == Group((Symbol("x"),))
    assert [d.code for d in diags] == ["UnbalancedBrace"]
    assert diags[0].to_dict()["span"] == [0, 1]


def test_lenient_dangling_script_gets_empty_base():
    assert ast.parse("^2", ParseMode.LENIENT) == Script(Group(()), None, Symbol("2"))


def test_lenient_double_script_keeps_last():
    assert ast.parse("x^2^3", ParseMode.LENIENT) == Script(Symbol("x"), None, Symbol("3"))


def test_lenient_drops_unmatched_end():
    assert ast.parse(r"a\end{align}b", ParseMode.LENIENT) == Sequence((Symbol("a"), Symbol("b")))


def test_lenient_missing_argument_is_empty_group():
    assert ast.parse(r"\frac{a}", ParseMode.LENIENT) == Fraction(Group((Symbol("a"),)), Group(()))


def test_unknown_command_does_not_take_arguments():
    assert ast.parse(r"\foo{x}") == Sequence((Symbol("\\foo"), Group((Symbol("x"),))))


def test_sqrt_with_index():
    assert ast.parse(r"\sqrt[3]{x}") == Radical(Group((Symbol("x"),)), Group((Symbol("3"),)))


def test_environment_rows_and_cells():
    tree = ast.parse(r"\begin{align}a&=b\\c&=d\end{align}")
    assert isinstance(tree, Environment)
    assert [len(r.cells) for r in tree.rows] == [2, 2]
    assert tree.rows[1].cells[1] == Sequence((Symbol("="), Symbol("d")))


def test_array_column_argument():
    tree = ast.parse(r"\begin{array}{cc}1&2\end{array}")
    assert tree.args == (Group((Symbol("c"), Symbol("c"))),)


def test_delimited():
    tree = ast.parse(r"\left( x \right.")
    assert tree == Delimited("(", Sequence((Symbol("x"),)), ".")


def test_text_node():
    assert ast.parse(r"\textbf{if } x") == Sequence((Text("if ", "textbf"), Symbol("x")))


def test_command_with_arity_one():
    assert ast.parse(r"\hat x") == Command("hat", (Group((Symbol("x"),)),))


# -- render -------------------------------------------------------------------


def test_render_examples():
    assert ast.render(Fraction(Group((Symbol("a"),)), Group((Symbol("b"),)))) == r"\frac{a}{b}"
    assert ast.render(Script(Symbol("x"), Symbol("i"), Symbol("2"))) == "x_{i}^{2}"
    env = Environment("gather", (Row((Sequence((Symbol("a"),)),)), Row((Sequence((Symbol("b"),)),))))
    assert ast.render(env) == r"\begin{gather}a\\b\end{gather}"


def test_render_spaces_commands_before_letters():
    assert ast.render(Sequence((Symbol("\\alpha"), Symbol("x")))) == r"\alpha x"
    assert ast.render(Sequence((Symbol("\\alpha"), Symbol("2")))) == r"\alpha2"


@given(st.randoms(use_true_random=False))
def test_parse_render_round_trip(rng):
    tree = random_tree(rng)
    assert ast.parse(ast.lex(ast.render(tree)), ParseMode.STRICT) == tree


@given(st.randoms(use_true_random=False))
def test_generated_trees_satisfy_invariants(rng):
    ast.check_invariants(random_tree(rng))


# -- normalize ----------------------------------------------------------------


def test_normalize_synonyms_and_spacing():
    tree = ast.normalize(ast.parse(r"\dfrac{a}{b}\,+\le"))
    assert ast.render(tree) == r"\frac{a}{b}+\leq"


def test_normalize_flattens_redundant_groups():
    assert ast.normalize(ast.parse("{{x}}")) == Symbol("x")


def test_normalize_keeps_argument_groups():
    assert ast.normalize(ast.parse(r"\frac{{a}}{b}")) == ast.parse(r"\frac{a}{b}")


def test_normalize_drops_hspace():
    assert ast.render(ast.normalize(ast.parse(r"a\hspace{1em}b"))) == "ab"


def test_normalize_fixes_already_normal_tree():
    tree = ast.parse(r"\frac{a}{b}+x^{2}")
    assert ast.normalize(tree) == tree


@given(st.randoms(use_true_random=False))
def test_normalize_idempotent_and_preserves_lines(rng):
    tree = random_tree(rng)
    once = ast.normalize(tree)
    assert ast.normalize(once) == once
    assert ast.count_lines(once) == ast.count_lines(tree)


def _structure(node):
    return [type(n).__name__ for n in ast.walk(node) if isinstance(n, (Fraction, Radical, Script))]


@given(st.randoms(use_true_random=False))
def test_normalize_preserves_structural_nodes_without_spacing(rng):
    tree = random_tree(rng)
    src = ast.render(tree)
    if any(s in src for s in ("\\,", "\\;", "\\!", "\\quad", "\\hspace", "\\vspace")):
        return
    assert _structure(ast.normalize(tree)) == _structure(tree)


# -- statistics ---------------------------------------------------------------


def test_depth_examples():
    a, b, c = (Group((Symbol(s),)) for s in "abc")
    assert ast.depth(Symbol("x")) == 0
    assert ast.depth(Fraction(a, b)) == 2
    assert ast.depth(Fraction(Group((Fraction(a, b),)), c)) == 4


def _depth_oracle(node):
    kids = ast.children(node)
    return 0 if not kids else 1 + max(_depth_oracle(k) for k in kids)


@given(st.randoms(use_true_random=False))
def test_depth_matches_recursive_oracle(rng):
    tree = random_tree(rng)
    assert ast.depth(tree) == _depth_oracle(tree)
    for child in ast.children(tree):
        assert ast.depth(tree) >= ast.depth(child)


def test_count_lines_examples():
    assert ast.count_lines(ast.parse("a+b")) == 1
    assert ast.count_lines(ast.parse(r"\begin{gather}a\\b\end{gather}")) == 2
    src = r"\begin{align}a\\ \begin{pmatrix}p\\q\end{pmatrix}\end{align}"
    assert ast.count_lines(ast.parse(src)) == 2


def test_count_lines_matrix_alone_is_one_line():
    assert ast.count_lines(ast.parse(r"\begin{pmatrix}1\\2\\3\end{pmatrix}")) == 1


def test_count_lines_inside_delimiters():
    src = r"\left\{\begin{cases}a\\b\\c\end{cases}\right."
    assert ast.count_lines(ast.parse(src)) == 3


# -- lenient/strict agreement and JSON ---------------------------------------


def test_lenient_agrees_with_strict_on_random_sources():
    rng = random.Random(7)
    for _ in range(2000):
        src = random_latex(rng)
        _, diags = ast.parse_with_diagnostics(ast.lex(src), ParseMode.LENIENT)
        try:
            ast.parse(src, ParseMode.STRICT)
            strict_ok = True
        except ast.ParseError:
            strict_ok = False
        assert strict_ok == (not diags), src


@given(st.randoms(use_true_random=False))
def test_json_round_trip(rng):
    tree = random_tree(rng)
    assert ast.from_dict(ast.to_dict(tree)) == tree


@pytest.mark.parametrize("bad", [{}, {"type": "nope"}, {"type": "frac", "num": {"type": "symbol"}}, []])
def test_from_dict_rejects_malformed(bad):
    with pytest.raises(ValueError):
        ast.from_dict(bad)


def test_check_invariants_flags_bad_arity():
    with pytest.raises(ValueError):
        ast.check_invariants(Command("hat", ()))
