"""Flat ``key = value`` configuration files.

Blank lines and ``#`` comments are ignored. List values are comma separated.
Relative paths resolve against the directory holding the config file.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

from .forest import GRID, ForestConfig, config_grid


class ConfigError(ValueError):
    """One or more problems found while validating a configuration."""

    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("\n".join(problems))


def read_kv(path: str | Path) -> dict[str, str]:
    path = Path(path)
    if not path.exists():
        raise ConfigError([f"{path}: file not found"])
    out: dict[str, str] = {}
    problems = []
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            problems.append(f"{path}:{lineno}: expected 'key = value'")
            continue
        key, value = (s.strip() for s in line.split("=", 1))
        if key in out:
            problems.append(f"{path}:{lineno}: duplicate key {key!r}")
        out[key] = value
    if problems:
        raise ConfigError(problems)
    return out


def int_list(s: str) -> list[int]:
    return [int(x) for x in s.split(",") if x.strip()]


def float_list(s: str) -> list[float]:
    return [float(x) for x in s.split(",") if x.strip()]


PATH_KEYS = ("prices", "iv", "chains", "rates", "tweets", "scores", "lexicon", "universe", "liquidity", "regimes")


@dataclass
class RunConfig:
    prices: Path | None = None
    iv: Path | None = None
    chains: Path | None = None
    rates: Path | None = None
    tweets: Path | None = None  # raw JSONL, scored with the lexicon
    scores: Path | None = None  # pre-scored CSV
    lexicon: Path | None = None
    universe: Path | None = None
    liquidity: Path | None = None
    regimes: Path | None = None  # precomputed regime CSV; otherwise fitted here
    scenarios: list[int] = field(default_factory=lambda: list(range(1, 8)))
    n_trees: int = 1000
    max_depth: list[int] = field(default_factory=lambda: list(GRID["max_depth"]))
    min_samples_split: list[int] = field(default_factory=lambda: list(GRID["min_samples_split"]))
    min_samples_leaf: list[int] = field(default_factory=lambda: list(GRID["min_samples_leaf"]))
    initial_train: int = 504
    test_window: int = 40
    step: int | None = None  # defaults to test_window
    hmm_states: int = 4
    hmm_iter: int = 100
    hmm_seed: int | None = None  # defaults to ``seed``
    hmm_train_end: str | None = None
    regime_scenario: int = 7
    seed: int = 42
    threads: int = 1
    out: Path | None = None

    @property
    def regime_seed(self) -> int:
        return self.seed if self.hmm_seed is None else self.hmm_seed

    def grid(self) -> list[ForestConfig]:
        return config_grid(self.n_trees, self.seed, self.max_depth, self.min_samples_split, self.min_samples_leaf)

    @classmethod
    def from_file(cls, path: str | Path, **overrides) -> "RunConfig":
        path = Path(path)
        raw = read_kv(path)
        return cls.from_mapping(raw, base=path.parent, **overrides)

    @classmethod
    def from_mapping(cls, raw: dict[str, str], base: Path = Path("."), **overrides) -> "RunConfig":
        known = {f.name: f for f in fields(cls)}
        problems = []
        values = {}
        for key, value in raw.items():
            if key not in known:
                problems.append(f"unknown key {key!r}")
                continue
            try:
                values[key] = _convert(key, value, base)
            except ValueError as exc:
                problems.append(f"{key}: {exc}")
        if problems:
            raise ConfigError(problems)
        values.update({k: v for k, v in overrides.items() if v is not None})
        cfg = cls(**values)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        problems = []
        for key in PATH_KEYS:
            p = getattr(self, key)
            if p is not None and not Path(p).exists():
                problems.append(f"{key}: {p} does not exist")
        if self.prices is None:
            problems.append("prices: required")
        if self.iv is None and self.chains is None:
            problems.append("iv or chains: one is required")
        bad = [s for s in self.scenarios if s not in range(1, 8)]
        if bad or not self.scenarios:
            problems.append(f"scenarios: must be a non-empty subset of 1..7, got {self.scenarios}")
        if self.tweets is not None and self.scores is not None:
            problems.append("tweets and scores: give one tweet source, not both")
        needs_social = any(s in (2, 4, 5, 7) for s in self.scenarios)
        if needs_social and self.tweets is None and self.scores is None:
            problems.append("scenarios with tweet features need 'tweets' or 'scores'")
        for key in ("n_trees", "initial_train", "test_window", "step", "hmm_states", "hmm_iter", "threads"):
            if getattr(self, key) is not None and getattr(self, key) < 1:
                problems.append(f"{key}: must be >= 1")
        for key in ("max_depth", "min_samples_split", "min_samples_leaf"):
            if not getattr(self, key):
                problems.append(f"{key}: empty grid axis")
        if problems:
            raise ConfigError(problems)


def _convert(key: str, value: str, base: Path):
    if key in PATH_KEYS or key == "out":
        p = Path(value)
        return p if p.is_absolute() else base / p
    if key in ("scenarios", "max_depth", "min_samples_split", "min_samples_leaf"):
        return int_list(value)
    if key == "hmm_train_end":
        return value or None
    return int(value)


def write_kv(values: dict, path: str | Path, header: str = "") -> None:
    lines = [f"# {header}"] if header else []
    for k, v in values.items():
        if isinstance(v, (list, tuple)):
            v = ", ".join(str(x) for x in v)
        lines.append(f"{k} = {v}")
    Path(path).write_text("\n".join(lines) + "\n")

