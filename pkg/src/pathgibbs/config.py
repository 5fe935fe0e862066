"""Plain-text key=value configuration with a typed, closed schema.

Files hold one `key = value` pair per line; `#` starts a comment.  Keys are
grouped by dotted prefixes (study.*, sampler.*, out.*).  Unknown keys are
rejected with the offending name; every run echoes its fully resolved
configuration into the manifest, and that echo re-parses to an identical
resolved configuration.
"""

from __future__ import annotations

from .errors import ConfigError

_FLOATS = "floats"
_INTS = "ints"

# key -> (type, default); None default means "no entry unless given"
SCHEMA = {
    "study.variant": (str, None),
    "study.id": (str, None),
    # reference-process validation
    "study.n_samples": (int, None),
    "study.T_small": (float, None),
    "study.T_large": (float, None),
    "study.N_small": (int, None),
    "study.omega": (float, None),
    "study.n_grid": (int, None),
    "study.n_replicas": (int, None),
    "study.burn_in": (int, None),
    "study.dlr_sweeps": (int, None),
    # tightness
    "study.T_ladder": (_FLOATS, None),
    "study.lam": (float, None),
    "study.b": (float, None),
    "study.alpha_decay": (float, None),
    "study.R": (float, None),
    "study.n_sweeps": (int, None),
    "study.n_splice": (int, None),
    # phase structure
    "study.beta": (float, None),
    "study.gamma": (float, None),
    "study.alphas": (_FLOATS, None),
    "study.pin": (float, None),
    "study.n_chains": (int, None),
    "study.block_len_max": (int, None),
    # diffusion
    "study.T": (float, None),
    "study.N": (int, None),
    "study.lam_ladder": (_FLOATS, None),
    "study.dim": (int, None),
    # ground-state energy
    "study.omega0": (float, None),
    "study.kappa_ladder": (_FLOATS, None),
    "study.eps": (float, None),
    "study.oracle_paths": (int, None),
    # expansion identity
    "study.alpha": (float, None),
    "study.N_values": (_INTS, None),
    "study.positions": (_INTS, None),
    "study.eta_ladder": (_FLOATS, None),
    "study.eta_coupled_ladder": (_FLOATS, None),
    "study.eta_order": (int, None),
    # spectral anchors
    "spectral.x_min": (float, None),
    "spectral.x_max": (float, None),
    "spectral.n_points": (int, None),
    "spectral.m": (int, None),
    # run control
    "sampler.seed": (int, None),
    "sampler.workers": (int, None),
    "out.dir": (str, None),
}

RANGES = {
    "study.gamma": lambda v: 1.0 < v <= 2.0,
    "study.n_samples": lambda v: v > 0,
    "study.n_sweeps": lambda v: v > 0,
    "study.n_chains": lambda v: v > 0,
    "study.dim": lambda v: v >= 1,
    "spectral.n_points": lambda v: v >= 3,
}


def _parse_value(key, raw):
    typ, _ = SCHEMA[key]
    raw = raw.strip()
    try:
        if typ is str:
            return raw
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
        if typ == _FLOATS:
            return [float(x) for x in raw.split(",") if x.strip()]
        if typ == _INTS:
            return [int(x) for x in raw.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}", key=key) from exc
    raise ConfigError(f"unhandled type for {key}", key=key)  # pragma: no cover


def parse_config_text(text: str) -> dict:
    out = {}
    for ln, line in enumerate(text.splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {ln}: expected key = value, got {line!r}")
        key, raw = stripped.split("=", 1)
        key = key.strip()
        if key not in SCHEMA:
            raise ConfigError(f"unknown config key {key!r} (line {ln})", key=key)
        value = _parse_value(key, raw)
        check = RANGES.get(key)
        if check and not check(value):
            raise ConfigError(f"value out of range for {key}: {value!r}", key=key)
        out[key] = value
    return out


def load_config(path: str) -> dict:
    try:
        with open(path) as f:
            text = f.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return parse_config_text(text)


def render_config(cfg: dict) -> str:
    """Canonical text form; parses back to an identical dict."""
    lines = []
    for key in sorted(cfg):
        v = cfg[key]
        if isinstance(v, list):
            lines.append(f"{key} = {','.join(repr(x) if isinstance(x, float) else str(x) for x in v)}")
        elif isinstance(v, float):
            lines.append(f"{key} = {v!r}")
        else:
            lines.append(f"{key} = {v}")
    return "\n".join(lines) + "\n"


def study_params(cfg: dict) -> dict:
    """The study.* keys with the prefix stripped, ready for a StudySpec."""
    return {k.split(".", 1)[1]: v for k, v in cfg.items() if k.startswith("study.")
            and k != "study.variant"}
