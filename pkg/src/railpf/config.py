"""Run configuration files, seed derivation and run manifests.

Config files are flat TOML: ``key = value`` lines whose keys are the
field names of :class:`FilterConfig` / :class:`EkfConfig` (``sigma_ax``,
``sigma_wz``, ``n_particles``, ...). A key known to one filter but not
the other is ignored by the other, so one file can configure both.
Optional ``[pf]`` and ``[ekfmm]`` tables override the flat keys per
filter.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import tomli_w

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .ekf import EkfConfig
from .exceptions import ConfigError
from .pf import FilterConfig

FILTERS = {"pf": FilterConfig, "ekfmm": EkfConfig}


def derive_seed(seed: int, label: str) -> int:
    """Independent 63-bit sub-seed for the stream named ``label``.

    sha256 of ``"<seed>:<label>"``, first eight bytes big-endian, top bit
    cleared. Stable across platforms and Python versions.
    """
    digest = hashlib.sha256(f"{int(seed)}:{label}".encode()).digest()
    return int.from_bytes(digest[:8], "big") & (2**63 - 1)


def read_toml(path) -> dict:
    path = Path(path)
    try:
        with path.open("rb") as fh:
            return tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"{path}: cannot open: {exc.strerror or exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _coerce(cls, key, value, where):
    ftype = str({f.name: f.type for f in fields(cls)}[key])
    number = isinstance(value, (int, float)) and not isinstance(value, bool)
    if "bool" in ftype:
        ok = isinstance(value, bool)
    elif "float" in ftype:
        ok = number
        value = float(value) if ok else value
    elif "int" in ftype:
        ok = number and float(value).is_integer()
        value = int(value) if ok else value
    else:
        ok = isinstance(value, str)
    if not ok:
        raise ConfigError(f"{where}: {key}: bad value {value!r} for a {ftype} field")
    return value


def filter_config(kind: str, data: dict | None = None, where: str = "config"):
    """Build the config for filter ``kind`` from a parsed flat mapping."""
    if kind not in FILTERS:
        raise ConfigError(f"unknown filter {kind!r}; valid: {', '.join(FILTERS)}")
    data = dict(data or {})
    tables = {k: data.pop(k) for k in list(data) if k in FILTERS}
    known = set().union(*({f.name for f in fields(c)} for c in FILTERS.values()))
    unknown = sorted(k for k in data if k not in known)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")
    cls = FILTERS[kind]
    own = {f.name for f in fields(cls)}
    kw = {k: v for k, v in data.items() if k in own}
    section = tables.get(kind, {})
    if not isinstance(section, dict):
        raise ConfigError(f"{where}: [{kind}] must be a table")
    bad = sorted(k for k in section if k not in own)
    if bad:
        raise ConfigError(f"{where}: [{kind}]: unknown key(s) {', '.join(bad)}")
    kw.update(section)
    kw = {k: _coerce(cls, k, v, where) for k, v in kw.items()}
    try:
        return cls(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def load_filter_config(kind: str, path=None):
    if path is None:
        return FILTERS[kind]()
    return filter_config(kind, read_toml(path), where=str(path))


def _toml_safe(value):
    if isinstance(value, dict):
        return {k: _toml_safe(v) for k, v in value.items() if v is not None}
    if isinstance(value, (list, tuple)):
        return [_toml_safe(v) for v in value]
    if isinstance(value, float) and math.isnan(value):
        return "nan"
    return value


def config_snapshot(cfg) -> dict:
    """Every config field, including derived defaults left as None."""
    snap = asdict(cfg)
    if isinstance(cfg, FilterConfig):
        snap["n_threshold"] = cfg.threshold
        snap["process_sigma"] = cfg.process_sigma
    return _toml_safe(snap)


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    """Everything needed to reproduce one command's outputs.

    Times are the span of the processed data, not wall-clock times, so
    an identical rerun writes an identical manifest.
    """

    command: str
    version: str
    seed: int | None = None
    sub_seeds: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    inputs: dict = field(default_factory=dict)
    data_t_start: float | None = None
    data_t_end: float | None = None

    def add_input(self, name: str, path):
        self.inputs[name] = {"file": Path(path).name, "sha256": sha256_file(path)}

    def to_dict(self) -> dict:
        return _toml_safe(asdict(self))

    def write(self, path):
        Path(path).write_text(tomli_w.dumps(self.to_dict()), encoding="utf-8")

    @classmethod
    def read(cls, path) -> "RunManifest":
        data = read_toml(path)
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in names})
