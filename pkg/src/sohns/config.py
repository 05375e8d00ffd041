"""Run configuration: a flat dotted-key text format with validated defaults.

Format: one `key = value` per line, `#` starts a comment, blank lines are
ignored. Keys live in the sections grid/time/params/init/sphere/output plus
the bare keys epsilon and epsilons. Unknown keys are errors, as are values
outside their documented ranges. An empty file is a complete, valid
configuration: every key has a default.

Environment overrides: a variable named SOH_<KEY> with dots replaced by
underscores and upper-cased (params.nu -> SOH_PARAMS_NU) replaces the file
value; the same validation applies.
"""

import os
from dataclasses import dataclass

from .errors import ParseError, RangeError, UnknownKey

__all__ = ["parse_config", "apply_env_overrides", "load_config", "ENV_PREFIX", "KNOWN_KEYS"]

ENV_PREFIX = "SOH_"

_KERNELS = ("gaussian", "tophat", "exponential")
_PRESETS = ("benchmark",)


def _parse_bool(text):
    if text.lower() in ("true", "false"):
        return text.lower() == "true"
    raise ValueError(f"expected true or false, got '{text}'")


def _parse_float_list(text):
    return tuple(float(part.strip()) for part in text.split(",") if part.strip())


@dataclass(frozen=True)
class _Key:
    default: object
    convert: object
    check: object = None
    doc: str = ""

    def parse(self, text, name):
        try:
            value = self.convert(text)
        except ValueError as exc:
            raise ParseError(f"{name}: {exc}") from exc
        self.validate(value, name)
        return value

    def validate(self, value, name):
        if self.check is not None and not self.check(value):
            raise RangeError(f"{name} = {value!r} is out of range ({self.doc})")


KNOWN_KEYS = {
    "grid.n": _Key(32, int, lambda n: n >= 4 and n % 2 == 0, "even, >= 4"),
    "grid.dim": _Key(2, int, lambda d: d in (2, 3), "2 or 3"),
    "time.dt": _Key(2e-3, float, lambda x: x > 0.0, "> 0"),
    "time.t_end": _Key(0.5, float, lambda x: x >= 0.0, ">= 0"),
    "time.imex": _Key(True, _parse_bool, None, "true or false"),
    "time.cfl_safety": _Key(0.9, float, lambda x: 0.0 < x <= 1.0, "in (0, 1]"),
    "params.a": _Key(1.0, float, None, "any real"),
    "params.b": _Key(0.2, float, None, "any real"),
    "params.nu": _Key(1.0, float, lambda x: x > 0.0, "> 0"),
    "params.d_noise": _Key(1.0, float, lambda x: x > 0.0, "> 0"),
    "params.lam": _Key(1.0, float, None, "any real"),
    "params.reynolds": _Key(1.0, float, lambda x: x > 0.0, "> 0"),
    "params.sensing_radius": _Key(1.0, float, lambda x: x > 0.0, "> 0"),
    "params.kernel": _Key("gaussian", str, lambda k: k in _KERNELS, "|".join(_KERNELS)),
    "params.kernel_param": _Key(1.0, float, lambda x: x > 0.0, "> 0"),
    "init.preset": _Key("benchmark", str, lambda p: p in _PRESETS, "|".join(_PRESETS)),
    "init.file": _Key(None, str, None, "path to a snapshot"),
    "init.well_prepared": _Key(None, str, None, "path to a macro snapshot"),
    "sphere.L": _Key(12, int, lambda L: L >= 2, ">= 2"),
    "output.every": _Key(25, int, lambda n: n >= 0, ">= 0"),
    "output.sobolev_s": _Key(2.0, float, lambda s: s >= 0.0, ">= 0"),
    "epsilon": _Key(0.1, float, lambda x: x > 0.0, "> 0"),
    "epsilons": _Key(
        (0.2, 0.1, 0.05),
        _parse_float_list,
        lambda t: len(t) >= 1 and all(x > 0.0 for x in t),
        "comma-separated, all > 0",
    ),
    "limit.n_reference": _Key(64, int, lambda n: n >= 4 and n % 2 == 0, "even, >= 4"),
    "check.run": _Key(None, str, None, "path to a run directory"),
}


def parse_config(text):
    """Parse and validate; returns a plain dict with every key present."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"expected 'key = value', got '{line}'", line=lineno)
        name, _, val = line.partition("=")
        name, val = name.strip(), val.strip()
        if name not in KNOWN_KEYS:
            raise UnknownKey(f"line {lineno}: unknown key '{name}'")
        if name in values:
            raise ParseError(f"duplicate key '{name}'", line=lineno)
        if not val:
            raise ParseError(f"{name} has no value", line=lineno)
        values[name] = KNOWN_KEYS[name].parse(val, name)
    config = {name: spec.default for name, spec in KNOWN_KEYS.items()}
    config.update(values)
    if values.get("init.file") and values.get("init.well_prepared"):
        raise RangeError("init.file and init.well_prepared are mutually exclusive")
    return config


def apply_env_overrides(config, environ=None):
    """Replace values from SOH_* variables; unknown SOH_ names are errors."""
    environ = os.environ if environ is None else environ
    out = dict(config)
    known = {name.replace(".", "_").upper(): name for name in KNOWN_KEYS}
    for var, text in sorted(environ.items()):
        if not var.startswith(ENV_PREFIX):
            continue
        name = known.get(var[len(ENV_PREFIX) :])
        if name is None:
            raise UnknownKey(f"environment variable {var} matches no config key")
        out[name] = KNOWN_KEYS[name].parse(text, name)
    return out


def load_config(path=None, environ=None):
    """Config from an optional file plus environment overrides."""
    if path is None:
        config = parse_config("")
    else:
        try:
            with open(path, encoding="utf-8") as fh:
                config = parse_config(fh.read())
        except OSError as exc:
            raise ParseError(f"cannot read config file {path}: {exc}") from exc
    return apply_env_overrides(config, environ)
