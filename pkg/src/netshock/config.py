"""Run configuration: study window, solver constants, config-file parsing.

Numeric defaults live here in one place; the CLI overrides them from a
key-value config file (``key = value`` lines, ``#`` comments) and then from
flags.  The ``NETSHOCK_CONFIG`` environment variable supplies a fallback
config path.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field, replace
from pathlib import Path

from ._util import parse_ym, ym_str
from .errors import ConfigError

DEFAULT_ALPHA = 0.18
DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 10_000
DEFAULT_WINDOW_START = "2013-01"
DEFAULT_WINDOW_END = "2016-12"
DEFAULT_POST_START = "2014-03"


@dataclass(frozen=True)
class StudyWindow:
    """Monthly observation window plus the shock month.

    `post_start` marks the first treated month; the preconflict window for
    "traded with conflict areas" runs from `start` through the month before
    `post_start`.
    """

    start: str = DEFAULT_WINDOW_START
    end: str = DEFAULT_WINDOW_END
    post_start: str = DEFAULT_POST_START

    def __post_init__(self):
        if self.start_code > self.end_code:
            raise ConfigError(f"window start {self.start} after end {self.end}")
        if not (self.start_code < self.post_start_code <= self.end_code):
            raise ConfigError(
                f"post_start {self.post_start} must fall inside the window "
                f"({self.start}..{self.end}) and after its first month"
            )

    @property
    def start_code(self) -> int:
        return parse_ym(self.start)

    @property
    def end_code(self) -> int:
        return parse_ym(self.end)

    @property
    def post_start_code(self) -> int:
        return parse_ym(self.post_start)

    @property
    def preconflict_end_code(self) -> int:
        return self.post_start_code - 1

    @property
    def month_codes(self) -> list[int]:
        return list(range(self.start_code, self.end_code + 1))

    @property
    def n_months(self) -> int:
        return self.end_code - self.start_code + 1

    @property
    def years(self) -> list[int]:
        return list(range(self.start_code // 12, self.end_code // 12 + 1))

    def contains_date(self, d: dt.date) -> bool:
        code = d.year * 12 + (d.month - 1)
        return self.start_code <= code <= self.end_code

    def contains_year(self, year: int) -> bool:
        return year in self.years

    def describe(self) -> str:
        return f"{self.start}..{self.end} post={ym_str(self.post_start_code)}"


@dataclass(frozen=True)
class EconomyConfig:
    """Labor share and fixed-point solver constants."""

    alpha: float = DEFAULT_ALPHA
    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ConfigError(f"alpha must be in (0, 1], got {self.alpha}")
        if self.tol <= 0:
            raise ConfigError(f"tol must be positive, got {self.tol}")
        if self.max_iter < 1:
            raise ConfigError(f"max_iter must be >= 1, got {self.max_iter}")


@dataclass(frozen=True)
class EngineConfig:
    """Everything a CLI run needs, resolved from defaults/file/flags."""

    window: StudyWindow = field(default_factory=StudyWindow)
    economy: EconomyConfig = field(default_factory=EconomyConfig)
    strict: bool = True
    drop_international: bool = False
    threads: int = 0  # 0 = all cores; reductions are deterministic either way
    seed: int | None = None

    def with_overrides(self, **kwargs) -> "EngineConfig":
        window_keys = {k: v for k, v in kwargs.items() if k in ("start", "end", "post_start")}
        economy_keys = {k: v for k, v in kwargs.items() if k in ("alpha", "tol", "max_iter")}
        rest = {
            k: v
            for k, v in kwargs.items()
            if k not in window_keys and k not in economy_keys and v is not None
        }
        cfg = self
        window_keys = {k: v for k, v in window_keys.items() if v is not None}
        economy_keys = {k: v for k, v in economy_keys.items() if v is not None}
        if window_keys:
            cfg = replace(cfg, window=replace(cfg.window, **window_keys))
        if economy_keys:
            cfg = replace(cfg, economy=replace(cfg.economy, **economy_keys))
        if rest:
            cfg = replace(cfg, **rest)
        return cfg


_CONFIG_KEYS = {
    "alpha": float,
    "tol": float,
    "max_iter": int,
    "window_start": str,
    "window_end": str,
    "post_start": str,
    "strict": lambda s: s.lower() in ("1", "true", "yes"),
    "drop_international": lambda s: s.lower() in ("1", "true", "yes"),
    "threads": int,
    "seed": int,
}


def parse_config_text(text: str) -> dict:
    """Parse ``key = value`` lines; unknown keys are an error."""
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected key = value, got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"config line {lineno}: unknown key {key!r}")
        try:
            values[key] = _CONFIG_KEYS[key](val)
        except ValueError as exc:
            raise ConfigError(f"config line {lineno}: bad value for {key}: {val!r}") from exc
    return values


def load_config_file(path: str | Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return parse_config_text(path.read_text(encoding="utf-8"))


def engine_config_from_values(values: dict) -> EngineConfig:
    window = StudyWindow(
        start=values.get("window_start", DEFAULT_WINDOW_START),
        end=values.get("window_end", DEFAULT_WINDOW_END),
        post_start=values.get("post_start", DEFAULT_POST_START),
    )
    economy = EconomyConfig(
        alpha=values.get("alpha", DEFAULT_ALPHA),
        tol=values.get("tol", DEFAULT_TOL),
        max_iter=values.get("max_iter", DEFAULT_MAX_ITER),
    )
    return EngineConfig(
        window=window,
        economy=economy,
        strict=values.get("strict", True),
        drop_international=values.get("drop_international", False),
        threads=values.get("threads", 0),
        seed=values.get("seed"),
    )
