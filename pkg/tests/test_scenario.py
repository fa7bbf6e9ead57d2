import pytest

from hocbf.barrier import EcbfGain, HocbfChain
from hocbf.scenario import (
    ParseError,
    ValidationError,
    bundled_scenarios,
    load_bundled,
    load_scenario,
    parse_scenario,
)

BASE = """\
[scenario]
name = t
workspace = -3, 3, -3, 3
initial_region = -2.5, -1.5, -2.5, -1.5

[goal]
center = 1.5, 1.5
half_width = 0.3

[nominal]
r = 0.1
L = 0.1
u = 1.0

[filter]
K = 1, 6

[obstacle.h]
kind = static-circle
center = 0, 0
radius = 1.5
"""


def edit(old, new):
    assert old in BASE
    return BASE.replace(old, new)


def test_bundled_list():
    assert bundled_scenarios() == ["experiment1_u.cfg", "experiment2.cfg", "experiment3.cfg"]


def test_experiment1():
    sc = load_bundled("experiment1_u")
    assert (sc.nominal.u, sc.true.u, sc.true.r, sc.true.L) == (1.0, 0.7, 0.1, 0.1)
    assert sc.law.K == (1.0, 6.0)
    assert sc.train.trajectories == 40
    assert sc.barrier_names == ("h",)
    assert sc.train_region == sc.initial_region


def test_experiment2():
    sc = load_bundled("experiment2")
    assert sc.barrier_names == ("h1", "h2", "h3")
    assert [b.kind for b in sc.barriers] == ["static-circle", "static-circle", "ellipse"]
    assert sc.law.K == (1.0, 4.0)


def test_experiment3():
    sc = load_bundled("experiment3")
    assert sc.encoding == "relative"
    assert sc.eta_source == "measured"
    assert sc.barriers[0].is_moving


def test_defaults():
    sc = parse_scenario(BASE)
    assert (sc.dt, sc.max_steps, sc.encoding, sc.eta_source, sc.omega_max) == (0.1, 1500, "static", "model", 10.0)
    assert sc.true == sc.nominal
    assert isinstance(sc.law, EcbfGain)


def test_true_overrides_single_key():
    sc = parse_scenario(BASE + "\n[true]\nu = 0.7\n")
    assert (sc.true.r, sc.true.L, sc.true.u) == (0.1, 0.1, 0.7)


def test_chain_law():
    sc = parse_scenario(edit("K = 1, 6", "chain_c = 1, 2\nchain_q = 1, 3"))
    assert isinstance(sc.law, HocbfChain)
    assert sc.law.coeffs == (1.0, 2.0)
    assert sc.law.alphas[1].q == 3.0


def test_zero_axle_is_validation_error():
    with pytest.raises(ValidationError, match=r"\[nominal\]"):
        parse_scenario(edit("L = 0.1", "L = 0"))


def test_unknown_key_reports_line():
    with pytest.raises(ParseError, match=r"<string>:9 \[goal\] radius"):
        parse_scenario(edit("half_width = 0.3", "half_width = 0.3\nradius = 2"))


def test_unknown_section():
    with pytest.raises(ParseError, match="unknown section"):
        parse_scenario(BASE + "\n[extras]\nfoo = 1\n")


def test_bad_number_reports_line():
    with pytest.raises(ParseError, match=r"<string>:13 \[nominal\] u"):
        parse_scenario(edit("u = 1.0", "u = fast"))


def test_vector_length():
    with pytest.raises(ParseError, match="expected 2 values"):
        parse_scenario(edit("center = 1.5, 1.5", "center = 1.5"))


def test_needs_exactly_one_law():
    with pytest.raises(ParseError):
        parse_scenario(edit("K = 1, 6", "K = 1, 6\nchain_c = 1, 1"))
    with pytest.raises(ParseError):
        parse_scenario(edit("K = 1, 6", "k_theta = 2"))


def test_missing_section():
    with pytest.raises(ParseError, match=r"missing section \[goal\]"):
        parse_scenario(BASE.replace("[goal]\ncenter = 1.5, 1.5\nhalf_width = 0.3\n", ""))


@pytest.mark.parametrize(
    "old,new,msg",
    [
        ("K = 1, 6", "K = 1, -6", "stable"),
        ("K = 1, 6", "K = 1, 6, 1", "two entries"),
        ("K = 1, 6", "K = 1, 6\neta = estimated", "eta must be"),
        ("K = 1, 6", "chain_c = 1, 1\neta = measured", "needs a K"),
        ("initial_region = -2.5, -1.5, -2.5, -1.5", "initial_region = -2.5, 3.5, -2.5, -1.5", "initial_region"),
        ("kind = static-circle", "kind = moving-circle", "relative"),
        ("radius = 1.5", "radius = -1", r"\[obstacle.h\]"),
    ],
)
def test_validation(old, new, msg):
    with pytest.raises(ValidationError, match=msg):
        parse_scenario(edit(old, new))


def test_load_from_file(tmp_path):
    path = tmp_path / "s.cfg"
    path.write_text(BASE)
    assert load_scenario(path).name == "t"


def test_with_train_revalidates():
    sc = parse_scenario(BASE)
    assert sc.with_train(steps=5).train.steps == 5
    with pytest.raises(ValueError):
        sc.with_train(batch_size=0)
