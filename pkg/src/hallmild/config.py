"""INI run configuration.

Every key has a type and a default; unknown sections or keys, duplicates and
values that fail to parse raise ``ConfigError`` naming the line and key.
"""

import configparser
from dataclasses import dataclass, field
import math
import re

from .picard import FAMILIES, SolverConfig
from .reference import SCHEMES, ImexConfig


class ConfigError(ValueError):
    pass


def _bool(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _float(text):
    low = text.strip().lower()
    if low in ("inf", "infinity"):
        return math.inf
    return float(text)


def _floats(text):
    return [_float(x) for x in text.split(",") if x.strip()]


def _choice(options):
    def parse(text):
        text = text.strip()
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {text!r}")
        return text

    return parse


# section -> key -> (parser, default)
SCHEMA = {
    "grid": {"n": (int, 32), "box_length": (_float, 2 * math.pi)},
    "time": {"t_final": (_float, 0.1), "n_t": (int, 32), "quad_order": (int, 16)},
    "solver": {
        "p": (_float, 2.0),
        "q": (_float, 5.0),
        "alpha": (_float, 3.0),
        "max_iterations": (int, 30),
        "min_iterations": (int, 3),
        "tol": (_float, 1e-9),
        "norm_ceiling": (_float, 1e8),
        "growth_guard": (_float, 1e3),
        "ext_order": (int, 1),
        "hall": (_bool, True),
    },
    "data": {
        "family": (_choice(FAMILIES), "taylor-green"),
        "amplitude": (_float, 1e-3),
        "band_lo": (_float, 2.0),
        "band_hi": (_float, 4.0),
        "seed": (int, 0),
    },
    "imex": {"dt": (_float, 1e-3), "scheme": (_choice(SCHEMES), "IMEX-CNAB2"), "c_stab": (_float, 0.5)},
    "sweep": {
        "amplitudes": (_floats, [1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0]),
        "refine_rounds": (int, 0),
    },
    "battery": {
        "samples": (int, 100),
        "n": (int, 16),
        "n_t": (int, 16),
        "t_final": (_float, 1.0),
        "margin": (_float, 1.05),
    },
    "norms": {
        "s": (_float, 1.5),
        "p": (_float, 2.0),
        "q": (_float, 5.0),
        "flavor": (_choice(("isotropic-spatial", "anisotropic-spacetime")), "anisotropic-spacetime"),
        "ext_order": (int, 1),
    },
    "output": {"dir": (str, "hallmild-out")},
}


@dataclass
class RunConfig:
    values: dict = field(default_factory=dict)
    source: str = "<defaults>"

    def __getitem__(self, key):
        return self.values[key]

    def get(self, section, key):
        return self.values[section][key]

    @property
    def seed(self):
        return self.values["data"]["seed"]

    @property
    def out_dir(self):
        return self.values["output"]["dir"]

    def solver_config(self):
        g, t, s = self.values["grid"], self.values["time"], self.values["solver"]
        return SolverConfig(
            n=g["n"],
            box_length=g["box_length"],
            t_final=t["t_final"],
            n_t=t["n_t"],
            quad_order=t["quad_order"],
            **s,
        )

    def imex_config(self):
        i = self.values["imex"]
        t_final = self.values["time"]["t_final"]
        steps = int(round(t_final / i["dt"]))
        return ImexConfig(dt=i["dt"], steps=steps, scheme=i["scheme"], hall=self.values["solver"]["hall"], c_stab=i["c_stab"])

    def snapshot(self):
        out = {}
        for sec, vals in self.values.items():
            out[sec] = {k: ("inf" if isinstance(v, float) and math.isinf(v) else v) for k, v in vals.items()}
        return out


def defaults():
    return RunConfig({sec: {k: d for k, (_, d) in keys.items()} for sec, keys in SCHEMA.items()})


def _line_numbers(text):
    """(section, key) -> line number, scanning the raw text."""
    lines = {}
    section = None
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        m = re.match(r"\[([^\]]+)\]", line)
        if m:
            section = m.group(1).strip()
            lines.setdefault((section, None), no)
            continue
        m = re.match(r"([^=:]+)[=:]", line)
        if m and section is not None:
            lines.setdefault((section, m.group(1).strip().lower()), no)
    return lines


def parse_config(text, source="<string>"):
    parser = configparser.ConfigParser(interpolation=None, strict=True)
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    where = _line_numbers(text)
    cfg = defaults()
    cfg.source = source
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"{source}: line {where.get((section, None), '?')}: unknown section [{section}]")
        for key, raw in parser.items(section):
            line = where.get((section, key), "?")
            if key not in SCHEMA[section]:
                raise ConfigError(f"{source}: line {line}: unknown key '{key}' in [{section}]")
            parse, _ = SCHEMA[section][key]
            try:
                cfg.values[section][key] = parse(raw)
            except ValueError as exc:
                raise ConfigError(f"{source}: line {line}: key '{key}' in [{section}]: {exc}") from exc
    try:
        cfg.solver_config()
        cfg.imex_config()
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    if cfg.values["data"]["amplitude"] < 0 or not math.isfinite(cfg.values["data"]["amplitude"]):
        raise ConfigError(f"{source}: line {where.get(('data', 'amplitude'), '?')}: amplitude must be finite and >= 0")
    return cfg


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except UnicodeDecodeError as exc:
        raise ConfigError(f"{path}: not UTF-8 text") from exc
    return parse_config(text, source=str(path))


def render_config(cfg):
    """INI text for a RunConfig (round-trips through parse_config)."""
    out = []
    for sec, vals in cfg.values.items():
        out.append(f"[{sec}]")
        for k, v in vals.items():
            if isinstance(v, list):
                v = ", ".join(repr(x) for x in v)
            elif isinstance(v, float):
                v = "inf" if math.isinf(v) else repr(v)
            out.append(f"{k} = {v}")
        out.append("")
    return "\n".join(out)
