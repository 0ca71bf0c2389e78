import json

import numpy as np
import pytest

from perturbscore import sample
from perturbscore.cli import dispatch, main
from perturbscore.config import ConfigWarning, ingest_csv, parse_config
from perturbscore.exceptions import ConfigError, DataError

MINIMAL = """
[null]
family = normal
supports = 0

[perturbation]
family = normal
lower = -3
upper = 3
"""

BINOM = """
[null]
family = binomial2
supports = 0.5

[perturbation]
family = binomial2
lower = 0
upper = 1

[test]
grid = 101
"""

CASE2 = """
[constants]
d = 1
kappa0 = 0
ell0 = 2
"""


def _write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return str(p)


# -- configuration -----------------------------------------------------------

def test_minimal_config_gets_defaults():
    cfg = parse_config(MINIMAL)
    assert cfg["test"]["grid"] == 401
    assert cfg["test"]["alpha"] == 0.05
    assert cfg["mc"]["replicates"] == 100_000
    assert cfg["null"]["estimate"] == "none"
    model = cfg.model()
    assert model.domain.bounds[0][0] == -3.0
    assert model.null.mixing.weights[0] == 1.0


def test_alpha_out_of_range_names_line():
    with pytest.raises(ConfigError) as err:
        parse_config(MINIMAL + "[test]\nalpha = 0.7\n")
    assert err.value.line == MINIMAL.count("\n") + 2
    assert "alpha" in str(err.value)


def test_duplicate_key_last_wins():
    with pytest.warns(ConfigWarning):
        cfg = parse_config(MINIMAL + "[test]\ngrid = 11\ngrid = 21\n")
    assert cfg["test"]["grid"] == 21
    assert any("duplicate" in w for w in cfg.warnings)


def test_unknown_key_is_named():
    with pytest.raises(ConfigError, match="colour"):
        parse_config(MINIMAL + "[test]\ncolour = red\n")


def test_malformed_number_has_line():
    with pytest.raises(ConfigError) as err:
        parse_config("[test]\n\ngrid = many\n")
    assert err.value.line == 3
    assert str(err.value).startswith("line 3:")


def test_missing_required_key():
    with pytest.raises(ConfigError, match="upper"):
        parse_config(MINIMAL.replace("upper = 3\n", ""))


def test_comments_and_vector_supports():
    cfg = parse_config("""
# two-dimensional null
[null]
family = mvnormal   # identity covariance
dim = 2
supports = 0 0; 1 1
weights = 0.25, 0.75
[perturbation]
family = mvnormal
shape = disk
radius = 1.5
""")
    m = cfg.model()
    assert m.null.mixing.support_points.shape == (2, 2)
    assert m.domain.dim == 2


def test_infinite_bounds_rejected():
    with pytest.raises(ConfigError):
        parse_config(MINIMAL.replace("upper = 3", "upper = inf"))


# -- CSV ---------------------------------------------------------------------

def test_csv_univariate(tmp_path):
    x = ingest_csv(_write(tmp_path, "a.csv", "x1\n0.5\n-1\n2e-3\n"))
    np.testing.assert_array_equal(x, [0.5, -1.0, 0.002])


def test_csv_bivariate(tmp_path):
    x = ingest_csv(_write(tmp_path, "b.csv", "x1,x2\n1,2\n3,4\n"))
    assert x.shape == (2, 2)


@pytest.mark.parametrize("text,match", [
    ("x1\n", "no observations"),
    ("", "empty"),
    ("x1,x2\n1,2\n3\n", "row 3"),
    ("x1\n1\nabc\n", "row 3, column x1"),
    ("y1\n1\n", "header"),
    ("x1\n1,5\n", "row 2"),
])
def test_csv_errors(tmp_path, text, match):
    with pytest.raises(DataError, match=match):
        ingest_csv(_write(tmp_path, "bad.csv", text))


# -- commands ----------------------------------------------------------------

def test_unknown_subcommand_exits_one(capsys):
    with pytest.raises(SystemExit) as ex:
        main(["frobnicate", "-c", "x.cfg"])
    assert ex.value.code == 1
    assert "usage" in capsys.readouterr().err


def test_critical_case2(tmp_path):
    out = tmp_path / "r.json"
    assert main(["critical", "-c", _write(tmp_path, "c.cfg", CASE2), "-o", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert set(doc) == {"schema_version", "command", "config_echo", "results", "warnings", "wall_clock_seconds"}
    assert doc["command"] == "critical"
    assert doc["results"]["critical_value"] == pytest.approx(1.6449, abs=1e-4)


def test_constants_and_tail_from_model(tmp_path):
    cfg = _write(tmp_path, "m.cfg", BINOM + "[tail]\nthresholds = 2, 3\n")
    out = tmp_path / "r.json"
    assert main(["constants", "-c", cfg, "-o", str(out)]) == 0
    res = json.loads(out.read_text())["results"]
    assert res["constants"]["kappa0"] == pytest.approx(1.23096, abs=1e-5)
    assert res["manifold"]["segments"] == 2
    assert main(["tail", "-c", cfg, "-o", str(out)]) == 0
    res = json.loads(out.read_text())["results"]
    assert len(res["probabilities"]) == 2 and res["probabilities"][0] > res["probabilities"][1]


def test_validation_error_exits_one(tmp_path, capsys):
    cfg = _write(tmp_path, "bad.cfg", MINIMAL + "[test]\nalpha = 0.7\n")
    assert main(["critical", "-c", cfg]) == 1
    assert "alpha" in capsys.readouterr().err


def test_missing_data_exits_one(tmp_path):
    assert main(["test", "-c", _write(tmp_path, "m.cfg", MINIMAL)]) == 1


def test_numerical_failure_exits_two(tmp_path):
    # the tail at c = 0.5 is already below alpha, so no critical value exists
    cfg = _write(tmp_path, "c.cfg", "[constants]\nd = 1\nkappa0 = 0.1\nell0 = 0\n")
    assert main(["critical", "-c", cfg]) == 2


def test_test_report_round_trip_and_reproducible(tmp_path):
    model = parse_config(BINOM).model()
    x = sample(model, 0.5, 80, seed=4)
    data = _write(tmp_path, "d.csv", "x1\n" + "\n".join(str(int(v)) for v in x) + "\n")
    cfg = _write(tmp_path, "t.cfg", BINOM)
    docs = []
    for name in ("r1.json", "r2.json"):
        out = tmp_path / name
        assert main(["test", "-c", cfg, "-d", data, "-o", str(out)]) == 0
        docs.append(json.loads(out.read_text()))
    res = docs[0]["results"]
    assert isinstance(res["reject"], bool)
    assert res["statistic"] == docs[1]["results"]["statistic"]
    for d in docs:
        d.pop("wall_clock_seconds")
    a = json.dumps(docs[0], indent=2)
    b = json.dumps(docs[1], indent=2)
    assert a == b
    # floats survive the trip bit-for-bit
    assert json.loads(a)["results"]["statistic"] == res["statistic"]


def test_reports_identical_except_clock(tmp_path):
    cfg = _write(tmp_path, "c.cfg", BINOM)
    texts = []
    for name in ("a.json", "b.json"):
        out = tmp_path / name
        assert main(["constants", "-c", cfg, "-o", str(out)]) == 0
        lines = out.read_text().splitlines()
        texts.append([ln for ln in lines if "wall_clock_seconds" not in ln])
    assert texts[0] == texts[1]


def test_build_command(tmp_path):
    rng = np.random.default_rng(3)
    x = np.concatenate([rng.normal(-2, 1, 60), rng.normal(2, 1, 60)])
    data = _write(tmp_path, "d.csv", "x1\n" + "\n".join(repr(float(v)) for v in x) + "\n")
    cfg = _write(tmp_path, "b.cfg", MINIMAL.replace("lower = -3", "lower = -4").replace("upper = 3", "upper = 4"))
    out = tmp_path / "r.json"
    assert main(["build", "-c", cfg, "-d", data, "-o", str(out)]) == 0
    res = json.loads(out.read_text())["results"]
    assert len(res["weights"]) == 2
    assert res["trail"][-1]["reject"] is False


def test_oracle_field_command(tmp_path):
    cfg = _write(tmp_path, "o.cfg", BINOM + "[mc]\nreplicates = 2000\nseed = 1\n")
    out = tmp_path / "r.json"
    assert main(["oracle", "-c", cfg, "-o", str(out)]) == 0
    res = json.loads(out.read_text())["results"]
    assert res["mode"] == "field"
    assert abs(res["mc_tail_at_critical"] - 0.05) <= max(0.01, 4 * res["mc_se_at_critical"])


def test_simulate_command(tmp_path):
    text = "[experiment]\nmodels = 1, 3\neta = 0\nn = 50\nreps = 2\n[test]\ngrid = 51\n"
    out = tmp_path / "r.json"
    assert main(["simulate", "-c", _write(tmp_path, "s.cfg", text), "-o", str(out)]) == 0
    res = json.loads(out.read_text())["results"]
    assert [r["model"] for r in res["summary"]] == [1, 3]


def test_test_command_rarely_rejects_under_null():
    cfg = parse_config(BINOM)
    model = cfg.model()
    keep = 0
    for i in range(300):
        keep += not dispatch("test", cfg, sample(model, 0.5, 200, seed=[9, i]))["reject"]
    assert 0.92 <= keep / 300 <= 0.98
