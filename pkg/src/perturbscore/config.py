"""Run configuration files and CSV data.

Configuration files hold ``key = value`` lines under ``[section]``
headers; ``#`` starts a comment. Every key is typed and checked, with the
offending line number in error messages. A repeated key keeps its last
value and records a warning.
"""

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError, DataError
from .families import get_family
from .geometry import EPS_EXCL, TubeConstants
from .model import Box, Disk, MixingDistribution, NullModel, PerturbationModel

DEFAULT_REPLICATES = 100_000


class ConfigWarning(UserWarning):
    """A configuration file is valid but suspicious (e.g. a repeated key)."""


def _float(text):
    return float(text)


def _int(text):
    value = float(text)
    if value != int(value):
        raise ValueError(text)
    return int(value)


def _floats(text):
    return [float(t) for t in text.replace(",", " ").split()]


def _points(text):
    """``"a, b"`` for scalars or ``"a b; c d"`` for vectors."""
    if ";" in text:
        return [_floats(p) for p in text.split(";") if p.strip()]
    return [[v] for v in _floats(text)]


def _bool(text):
    low = text.strip().lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(text)


def _str(text):
    return text.strip()


SCHEMA = {
    "null": {"family": (_str, None), "dim": (_int, None), "supports": (_points, None),
             "weights": (_floats, None), "estimate": (_str, "none")},
    "perturbation": {"family": (_str, None), "shape": (_str, "box"), "lower": (_floats, None),
                     "upper": (_floats, None), "radius": (_float, None), "center": (_floats, None),
                     "eta": (_float, 0.0)},
    "test": {"alpha": (_float, 0.05), "grid": (_int, 401), "eps_excl": (_float, EPS_EXCL),
             "max_components": (_int, 5)},
    "mc": {"replicates": (_int, DEFAULT_REPLICATES), "seed": (_int, 0), "n": (_int, 200), "mode": (_str, "field"),
           "jitter": (_float, 1e-10)},
    "constants": {"d": (_int, None), "kappa0": (_float, None), "ell0": (_float, None), "euler": (_float, None)},
    "tail": {"thresholds": (_floats, None)},
    "experiment": {"models": (_floats, [1, 2, 3]), "eta": (_floats, [0.0]), "n": (_int, 200), "reps": (_int, 300),
                   "table": (_bool, False)},
    "output": {"path": (_str, None), "format": (_str, "json")},
}


@dataclass
class RunConfig:
    """Parsed configuration: ``values[section][key]`` with defaults filled in.

    ``present`` records which sections appeared in the file, ``lines`` the
    line of each explicitly given key, and ``warnings`` non-fatal notes.
    """

    values: dict
    present: set
    lines: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    def __getitem__(self, section):
        return self.values[section]

    def echo(self):
        """JSON-friendly copy of every value."""
        return {s: dict(v) for s, v in self.values.items() if s in self.present}

    # -- derived objects -------------------------------------------------
    def _require(self, section, key):
        value = self.values[section][key]
        if value is None:
            raise ConfigError(f"missing required key '{key}' in [{section}]")
        return value

    def has_model(self):
        return "null" in self.present or "perturbation" in self.present

    def model(self):
        """Build the :class:`PerturbationModel` described by the file."""
        null_cfg = self.values["null"]
        pert = self.values["perturbation"]
        fam_name = self._require("null", "family")
        fam = get_family(fam_name, null_cfg["dim"])
        pfam_name = self._require("perturbation", "family")
        pfam = get_family(pfam_name, null_cfg["dim"])
        supports = self._require("null", "supports")
        weights = null_cfg["weights"] or [1.0 / len(supports)] * len(supports)
        try:
            mix = MixingDistribution.sorted(np.array(supports, float), np.array(weights, float))
            null = NullModel(fam, mix, null_cfg["estimate"])
            return PerturbationModel(null, self.domain(), pfam, pert["eta"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def domain(self):
        pert = self.values["perturbation"]
        try:
            if pert["shape"] == "disk":
                center = pert["center"] or [0.0, 0.0]
                return Disk(self._require("perturbation", "radius"), center)
            if pert["shape"] != "box":
                raise ConfigError(f"unknown domain shape {pert['shape']!r}; use box or disk")
            return Box(self._require("perturbation", "lower"), self._require("perturbation", "upper"))
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def constants(self):
        """Explicit constants from the ``[constants]`` section."""
        c = self.values["constants"]
        d = self._require("constants", "d")
        try:
            return TubeConstants(d, self._require("constants", "kappa0"), self._require("constants", "ell0"),
                                 c["euler"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from None


def parse_config(text):
    """Parse configuration text into a validated :class:`RunConfig`.

    Raises
    ------
    ConfigError
        On unknown sections or keys, malformed values, out-of-range values,
        or a model section missing its required keys.
    """
    values = {s: {k: d for k, (_, d) in keys.items()} for s, keys in SCHEMA.items()}
    present, lines, notes = set(), {}, []
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"malformed section header {raw.strip()!r}", lineno)
            section = line[1:-1].strip().lower()
            if section not in SCHEMA:
                raise ConfigError(f"unknown section [{section}]", lineno)
            present.add(section)
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        if section is None:
            raise ConfigError("key outside any section", lineno)
        key, value = (p.strip() for p in line.split("=", 1))
        key = key.lower()
        if key not in SCHEMA[section]:
            raise ConfigError(f"unknown key '{key}' in [{section}]", lineno)
        if (section, key) in lines:
            note = f"line {lineno}: duplicate key '{key}' in [{section}] overrides line {lines[(section, key)]}"
            notes.append(note)
            warnings.warn(note, ConfigWarning, stacklevel=2)
        conv = SCHEMA[section][key][0]
        try:
            values[section][key] = conv(value)
        except ValueError:
            raise ConfigError(f"malformed value {value!r} for '{key}' in [{section}]", lineno) from None
        lines[(section, key)] = lineno
    cfg = RunConfig(values, present, lines, notes)
    _validate(cfg)
    return cfg


def _validate(cfg):
    v = cfg.values

    def at(section, key):
        return cfg.lines.get((section, key))

    alpha = v["test"]["alpha"]
    if not 0.0 < alpha <= 0.5:
        raise ConfigError(f"alpha must lie in (0, 0.5], got {alpha}", at("test", "alpha"))
    if v["test"]["grid"] < 1:
        raise ConfigError("grid must be positive", at("test", "grid"))
    if v["test"]["eps_excl"] <= 0:
        raise ConfigError("eps_excl must be positive", at("test", "eps_excl"))
    if v["test"]["max_components"] < 1:
        raise ConfigError("max_components must be at least 1", at("test", "max_components"))
    if v["mc"]["replicates"] < 1:
        raise ConfigError("replicates must be at least 1", at("mc", "replicates"))
    if v["mc"]["n"] < 1:
        raise ConfigError("n must be at least 1", at("mc", "n"))
    if v["mc"]["mode"] not in ("field", "null"):
        raise ConfigError("mc mode must be 'field' or 'null'", at("mc", "mode"))
    if v["null"]["estimate"] not in ("none", "weights", "full"):
        raise ConfigError("estimate must be none, weights or full", at("null", "estimate"))
    if v["output"]["format"] != "json":
        raise ConfigError("only the json output format is supported", at("output", "format"))
    for key in ("lower", "upper"):
        vals = v["perturbation"][key]
        if vals is not None and not np.all(np.isfinite(vals)):
            raise ConfigError(f"{key} bounds must be finite", at("perturbation", key))
    if cfg.has_model():
        for section, key in (("null", "family"), ("perturbation", "family")):
            if v[section][key] is None:
                raise ConfigError(f"missing required key '{key}' in [{section}]")
        pert = v["perturbation"]
        if pert["shape"] == "disk":
            if pert["radius"] is None:
                raise ConfigError("missing required key 'radius' in [perturbation]")
        elif pert["lower"] is None or pert["upper"] is None:
            raise ConfigError("missing required keys 'lower' and 'upper' in [perturbation]")


def ingest_csv(path):
    """Read observations from a CSV file with header ``x1[,x2,...]``.

    Returns an ``(n,)`` array for one column and ``(n, s)`` otherwise.

    Raises
    ------
    DataError
        On a bad header, a non-numeric cell, ragged rows, or no data rows.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if any(c.strip() for c in r)]
    if not rows:
        raise DataError("empty data file")
    header = [h.strip() for h in rows[0]]
    if header != [f"x{i + 1}" for i in range(len(header))]:
        raise DataError(f"header must be x1[,x2,...], got {','.join(header)!r}")
    s = len(header)
    body = rows[1:]
    if not body:
        raise DataError("data file has no observations")
    out = np.empty((len(body), s))
    for i, row in enumerate(body, start=2):
        if len(row) != s:
            raise DataError(f"row {i}: expected {s} values, found {len(row)}")
        for j, cell in enumerate(row):
            try:
                out[i - 2, j] = float(cell)
            except ValueError:
                raise DataError(f"row {i}, column x{j + 1}: non-numeric value {cell!r}") from None
    return out[:, 0] if s == 1 else out
