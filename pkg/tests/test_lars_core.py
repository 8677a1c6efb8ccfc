import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from icasim.lars import (
    And,
    At,
    AtomNode,
    Box,
    Diamond,
    Implies,
    Not,
    Or,
    PreconditionError,
    Stream,
    Structure,
    Timeline,
    Window,
    atom,
    entails,
    format_stream,
    is_substream,
    parse_atom,
    parse_stream,
    restrict,
    window_time,
)

RTM = atom("rtm50")
HIGH = atom("high")


def example_stream():
    return Stream(Timeline(0, 1800), {42: {RTM}, 987: {RTM}})


def high_structure():
    s = Stream(Timeline(0, 1800), {t: {HIGH} for t in range(600, 1201)})
    return Structure(s), s


# -- restrict / window ---------------------------------------------------------


def test_restrict_keeps_points_inside():
    assert restrict({42: {RTM}, 987: {RTM}}, Timeline(40, 70)) == {42: frozenset({RTM})}


def test_restrict_empty_and_singleton():
    assert restrict({}, Timeline(0, 9)) == {}
    a = atom("a")
    assert restrict({5: {a}}, Timeline(5, 5)) == {5: frozenset({a})}


def test_window_matches_worked_example():
    w = window_time(example_stream(), 70, 30)
    assert w.timeline == Timeline(40, 70)
    assert dict(w.evaluation) == {42: frozenset({RTM})}


def test_window_left_clamp_and_zero_width():
    s = example_stream()
    assert window_time(s, 10, 30).timeline == Timeline(0, 10)
    assert window_time(s, 42, 0).timeline == Timeline(42, 42)
    assert window_time(s, 42, 0).at(42) == {RTM}


def test_window_outside_timeline_rejected():
    with pytest.raises(PreconditionError):
        window_time(example_stream(), 1801, 30)


def test_timeline_rejects_reversed_bounds():
    with pytest.raises(ValueError):
        Timeline(5, 4)


def test_stream_rejects_points_outside_timeline():
    with pytest.raises(ValueError):
        Stream(Timeline(0, 5), {6: {RTM}})


# -- substreams ----------------------------------------------------------------


def test_is_substream_examples():
    a, b = atom("a"), atom("b")
    assert is_substream(Stream(Timeline(0, 5), {1: {a}}), Stream(Timeline(0, 5), {1: {a, b}}))
    assert not is_substream(Stream(Timeline(0, 9), {}), Stream(Timeline(0, 5), {}))
    assert not is_substream(Stream(Timeline(0, 5), {1: {b}}), Stream(Timeline(0, 5), {1: {a}}))


# -- entailment ----------------------------------------------------------------


def test_box_high_at_750_holds():
    m, s = high_structure()
    assert entails(m, s, 750, Window(30, Box(AtomNode(HIGH))))


def test_box_high_at_610_fails():
    m, s = high_structure()
    assert not entails(m, s, 610, Window(30, Box(AtomNode(HIGH))))
    assert entails(m, s, 610, Window(30, Diamond(AtomNode(HIGH))))


def test_at_inside_and_outside_window():
    m, s = high_structure()
    assert entails(m, s, 750, Window(30, At(720, AtomNode(HIGH))))
    # 700 is outside [720,750]: false rather than an error
    assert not entails(m, s, 750, Window(30, At(700, AtomNode(HIGH))))
    assert entails(m, s, 750, At(700, AtomNode(HIGH)))


def test_background_atoms_hold_everywhere():
    b = atom("b")
    s = Stream(Timeline(0, 10), {})
    m = Structure(s, frozenset({b}))
    for f in (AtomNode(b), Window(3, Box(AtomNode(b))), Window(0, At(10, AtomNode(b)))):
        assert entails(m, s, 10, f)


def test_propositional_connectives():
    a, b = atom("a"), atom("b")
    s = Stream(Timeline(0, 2), {1: {a}})
    m = Structure(s)
    A, B = AtomNode(a), AtomNode(b)
    assert entails(m, s, 1, A)
    assert not entails(m, s, 1, B)
    assert entails(m, s, 1, Not(B))
    assert entails(m, s, 1, Or(A, B))
    assert not entails(m, s, 1, And(A, B))
    assert entails(m, s, 1, Implies(B, A))
    assert not entails(m, s, 1, Implies(A, B))
    assert entails(m, s, 0, Implies(A, B))


def test_entails_outside_timeline_rejected():
    m, s = high_structure()
    with pytest.raises(PreconditionError):
        entails(m, s, 2000, AtomNode(HIGH))


# -- text format ---------------------------------------------------------------


def test_stream_text_round_trip():
    s = Stream(Timeline(3, 9), {4: {atom("alpha", 20), RTM}, 9: {atom("p", "x", 3)}})
    text = format_stream(s)
    assert text.splitlines()[0] == "timeline 3 9"
    assert parse_stream(text) == s
    assert format_stream(parse_stream(text)) == text


def test_parse_stream_reports_line():
    with pytest.raises(ValueError, match="line 2"):
        parse_stream("timeline 0 5\n7 a\n")


def test_parse_atom():
    assert parse_atom("alpha(20)") == atom("alpha", 20)
    assert parse_atom("use(lfu)") == atom("use", "lfu")
    assert parse_atom("done") == atom("done")


# -- properties ----------------------------------------------------------------

ATOMS = [atom("a"), atom("b"), atom("c")]


@st.composite
def streams(draw):
    start = draw(st.integers(0, 5))
    end = start + draw(st.integers(0, 9))
    ev = {}
    for t in range(start, end + 1):
        chosen = draw(st.sets(st.sampled_from(ATOMS)))
        if chosen:
            ev[t] = chosen
    return Stream(Timeline(start, end), ev)


@st.composite
def stream_point_k(draw):
    s = draw(streams())
    t = draw(st.integers(s.timeline.start, s.timeline.end))
    return s, t, draw(st.integers(0, 12))


@given(stream_point_k())
def test_window_idempotent(args):
    s, t, k = args
    w = window_time(s, t, k)
    assert window_time(w, t, k) == w
    assert is_substream(w, s)


@given(stream_point_k(), st.integers(0, 12))
def test_window_monotone(args, extra):
    s, t, k = args
    assert is_substream(window_time(s, t, k), window_time(s, t, k + extra))


@st.composite
def formulas(draw, depth=3):
    leaf = st.sampled_from(ATOMS).map(AtomNode)
    if depth == 0:
        return draw(leaf)
    kind = draw(st.integers(0, 8))
    sub = formulas(depth - 1)
    if kind == 0:
        return draw(leaf)
    if kind == 1:
        return Not(draw(sub))
    if kind == 2:
        return And(draw(sub), draw(sub))
    if kind == 3:
        return Or(draw(sub), draw(sub))
    if kind == 4:
        return Implies(draw(sub), draw(sub))
    if kind == 5:
        return Diamond(draw(sub))
    if kind == 6:
        return Box(draw(sub))
    if kind == 7:
        return At(draw(st.integers(0, 16)), draw(sub))
    return Window(draw(st.integers(0, 5)), draw(sub))


@settings(max_examples=300)
@given(streams(), formulas())
def test_box_and_diamond_quantify_over_timeline(s, f):
    m = Structure(s)
    for t in s.timeline:
        pointwise = [entails(m, s, u, f) for u in s.timeline]
        assert entails(m, s, t, Box(f)) == all(pointwise)
        assert entails(m, s, t, Diamond(f)) == any(pointwise)
        assert isinstance(entails(m, s, t, f), bool)
