import io
from fractions import Fraction as F

import numpy as np
import pytest

from fairpipe.composition import decoupled_example, random_filtering_distribution
from fairpipe.errors import FormatError
from fairpipe.formats import (
    fmt,
    fmt_exact,
    read_distribution,
    read_outcomes,
    read_population,
    sniff_header,
    write_distribution,
    write_outcomes,
    write_population,
)
from fairpipe.hiring import case_scenario, synthetic_outcomes
from fairpipe.pipeline import (
    Record,
    Status,
    bernoulli_decider,
    evaluate_population,
    make_filtering,
)


def roundtrip(write, read, obj, **kw):
    buf = io.StringIO()
    write(obj, buf)
    text = buf.getvalue()
    return text, read(io.StringIO(text), **kw)


def test_fmt():
    assert fmt(3) == "3"
    assert fmt(F(6, 2)) == "3"
    assert fmt(F(1, 3)) == "0.3333333333"
    assert fmt(0.1 + 0.2) == "0.3"
    assert fmt(True) == "true" and fmt(None) == ""
    assert fmt_exact(F(-2, 3)) == "-2/3" and fmt_exact(0.5) == "0.5"


def test_population_roundtrip(tmp_path):
    recs = [Record("r1", "maj", (1, 0)), Record("r2", 7, (0, 1))]
    text, back = roundtrip(write_population, read_population, recs)
    assert text.startswith("# fairpipe:population/1\n")
    assert back == recs
    path = tmp_path / "pop.csv"
    path.write_text(text)
    assert read_population(path) == recs


def test_outcomes_roundtrip():
    recs = [Record(i, "ab"[i % 2], (i % 3 > 0, 1)) for i in range(40)]
    recs = [Record(r.id, r.group, tuple(int(b) for b in r.truths)) for r in recs]
    spec = make_filtering([bernoulli_decider(0.5, 1, 1), bernoulli_decider(0.5, 1, 2)])
    table = evaluate_population(spec, recs)
    text, back = roundtrip(write_outcomes, read_outcomes, table)
    assert [o for o in back.outcomes] == list(table.outcomes)
    assert back.passed == table.passed and back.reached == table.reached
    assert [r.truths for r in back.records] == [r.truths for r in table.records]
    assert any(o.status is Status.FAIL for o in back.outcomes)


def test_outcomes_synthetic_counts():
    table = synthetic_outcomes(case_scenario(1), scale=2)
    _, back = roundtrip(write_outcomes, read_outcomes, table)
    assert back.pass_count(2, "minority") == 1


@pytest.mark.parametrize("seed", range(5))
def test_distribution_roundtrip_exact(seed):
    dist = random_filtering_distribution(np.random.default_rng(seed))
    _, back = roundtrip(write_distribution, read_distribution, dist, majority=0)
    assert back == dist and back.exact


def test_distribution_roundtrip_float():
    dist = random_filtering_distribution(np.random.default_rng(1), exact=False)
    _, back = roundtrip(write_distribution, read_distribution, dist, majority=0)
    for cell, m in dist.items():
        assert back.mass(cell) == F(repr(float(m)))


def test_distribution_majority_default():
    text = "group,x,y,xhat,yhat,mass\nA,1,1,1,1,1/10\nB,1,1,1,1,9/10\n"
    assert read_distribution(io.StringIO(text)).groups.majority == "B"
    assert read_distribution(io.StringIO(text), majority="A").groups.majority == "A"


def test_counterexample_roundtrip():
    _, back = roundtrip(write_distribution, read_distribution, decoupled_example(), majority=0)
    assert back == decoupled_example()


@pytest.mark.parametrize("text,line,match", [
    ("group,x,y,xhat,yhat,mass\n0,1,1,1,1,1/2\n0,1,1,2,0,1/2\n", 3, "xhat must be 0 or 1"),
    ("group,x,y,xhat,yhat,mass\n0,1,1,1,1,abc\n", 2, "not a number"),
    ("# c\ngroup,x,y,xhat,yhat,mass\n0,1,1,1,1,-1\n", 3, "negative"),
    ("group,x,y,xhat,yhat,mass\n0,1,1,1,1\n", 2, "expected 6 fields"),
    ("group,x,y,xhat,mass\n0,1,1,1,1\n", 1, "missing column"),
    ("group,x,y,xhat,yhat,mass\n0,1,1,1,1,1/2\n0,1,1,1,1,1/2\n", 3, "duplicate"),
])
def test_malformed_distribution(text, line, match):
    with pytest.raises(FormatError, match=match) as info:
        read_distribution(io.StringIO(text))
    assert info.value.line == line
    assert f"line {line}" in str(info.value)


@pytest.mark.parametrize("row,match", [
    ("1,a,MAYBE,,1,1,1,1", "status"),
    ("1,a,FAIL,2,1,0,1,1", "failed_at"),
    ("1,a,FAIL,1,0,1,1,1", "exactly 1"),
    ("1,a,PASSED,,1,,1,1", "empty decision"),
    ("1,a,PASSED,,1,1,1,3", "truth_2"),
])
def test_malformed_outcomes(row, match):
    text = "id,group,status,failed_at,decision_1,decision_2,truth_1,truth_2\n" + row + "\n"
    with pytest.raises(FormatError, match=match) as info:
        read_outcomes(io.StringIO(text))
    assert info.value.line == 2


def test_outcomes_need_truths():
    text = "id,group,status,failed_at,decision_1,decision_2\n1,a,PASSED,,1,1\n"
    with pytest.raises(FormatError, match="truth"):
        read_outcomes(io.StringIO(text))


def test_empty_inputs():
    with pytest.raises(FormatError):
        read_distribution(io.StringIO(""))
    with pytest.raises(FormatError):
        read_distribution(io.StringIO("group,x,y,xhat,yhat,mass\n"))
    with pytest.raises(FormatError):
        sniff_header("# only comments\n\n")
    with pytest.raises(FormatError):
        read_population("/no/such/file.csv")
