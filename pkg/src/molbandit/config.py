"""Run configuration: defaults, strict flat-key config file parsing, and
validation.

Config files are plain text, one `key = value` per line, `#` comments.
Unknown keys are hard errors. Flag overrides win over file values; the
paper_scale preset fills cycles/k/seeds only where neither the file nor a
flag set them explicitly.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

PAPER_SCALE_PRESET = {
    "cycles": 200,
    "k": 100,
    "seeds": list(range(1, 11)),
}


class ParseError(Exception):
    pass


class ValidationError(Exception):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


@dataclass
class RunConfig:
    # experiment shape
    cycles: int = 100
    k: int = 20
    seeds: list = field(default_factory=lambda: [1, 2, 3])
    strategies: list = field(default_factory=lambda: [
        "zooming-weighted", "zooming-unweighted", "greedy", "eps-greedy", "random",
    ])
    out: str = "runs"
    paper_scale: bool = False
    dump_balls: bool = False
    # ground truth / twin
    co_lo: float = 5.5
    co_hi: float = 5.67
    cn_lo: float = 7.0
    cn_hi: float = 7.39
    on_lo: float = 1.18
    on_hi: float = 1.34
    flip_prob: float = 0.01
    n_active: int = 20
    n_inactive: int = 100
    train_on_true_labels: bool = False
    # bandit
    eps_min: float = 0.0
    eps_max: float = 0.6
    c_d: float = 0.015
    literal_epsilon_form: bool = False
    backfill_mode: str = "domain"
    # generator
    batch_size: int = 128
    min_iterations: int = 50
    patience: int = 50
    bucket_size: int = 100
    min_score: float = 0.2
    min_similarity: float = 0.6
    population_size: int = 256
    max_candidates_per_cycle: int = 1000
    max_gen_iterations: int = 200
    # scoring
    l2: float = 1.0
    max_epochs: int = 500
    tol: float = 1e-6
    balanced_classes: bool = False

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_int_list(text: str) -> list:
    return [int(x) for x in text.split(",") if x.strip()]


def _parse_str_list(text: str) -> list:
    return [x.strip() for x in text.split(",") if x.strip()]


def _parsers() -> dict:
    defaults = RunConfig()
    out = {}
    for f in fields(RunConfig):
        kind = type(getattr(defaults, f.name))
        if f.name == "seeds":
            out[f.name] = _parse_int_list
        elif f.name == "strategies":
            out[f.name] = _parse_str_list
        elif kind is bool:
            out[f.name] = _parse_bool
        elif kind is int:
            out[f.name] = int
        elif kind is float:
            out[f.name] = float
        else:
            out[f.name] = lambda s: s.strip()
    return out


def read_config_file(path) -> dict:
    """Parse `key = value` lines into raw strings; strict about syntax."""
    raw = {}
    with open(path) as fh:
        for ln, line in enumerate(fh, 1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ParseError(f"{path}:{ln}: expected 'key = value', got {stripped!r}")
            key, _, value = stripped.partition("=")
            key = key.strip()
            if not key:
                raise ParseError(f"{path}:{ln}: empty key")
            if key in raw:
                raise ParseError(f"{path}:{ln}: duplicate key {key!r}")
            raw[key] = value.strip()
    return raw


def parse_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Resolve file values and overrides into a validated RunConfig.

    Precedence: explicit override > paper_scale preset > file > default.
    Unknown keys (file or override) raise ParseError naming the key.
    """
    parsers = _parsers()
    values = {}
    file_values = read_config_file(path) if path is not None else {}
    for key, text in file_values.items():
        if key not in parsers:
            raise ParseError(f"unknown config key {key!r}")
        try:
            values[key] = parsers[key](text)
        except ValueError as exc:
            raise ParseError(f"key {key!r}: {exc}") from exc

    overrides = dict(overrides or {})
    for key, value in overrides.items():
        if key not in parsers:
            raise ParseError(f"unknown config key {key!r}")
        if isinstance(value, str):
            value = parsers[key](value)
        values[key] = value

    cfg = RunConfig(**values)
    if cfg.paper_scale:
        for key, preset in PAPER_SCALE_PRESET.items():
            if key not in values:
                setattr(cfg, key, preset)
    validate_config(cfg)
    return cfg


def validate_config(cfg: RunConfig):
    """Collect every violated invariant; raise ValidationError listing all."""
    problems = []
    if cfg.cycles < 1:
        problems.append(f"cycles must be >= 1, got {cfg.cycles}")
    if cfg.k < 1:
        problems.append(f"k must be >= 1, got {cfg.k}")
    if cfg.k >= cfg.max_candidates_per_cycle:
        problems.append(
            f"k ({cfg.k}) must be < max_candidates_per_cycle ({cfg.max_candidates_per_cycle})"
        )
    if not cfg.seeds:
        problems.append("seeds must be non-empty")
    if not cfg.strategies:
        problems.append("strategies must be non-empty")
    from .harness import STRATEGY_NAMES

    for name in cfg.strategies:
        if name not in STRATEGY_NAMES:
            problems.append(f"unknown strategy {name!r} (choices: {', '.join(STRATEGY_NAMES)})")
    for lo_key, hi_key in (("co_lo", "co_hi"), ("cn_lo", "cn_hi"), ("on_lo", "on_hi")):
        if getattr(cfg, lo_key) > getattr(cfg, hi_key):
            problems.append(f"{lo_key} > {hi_key}")
    if not 0.0 <= cfg.flip_prob <= 1.0:
        problems.append(f"flip_prob must be in [0, 1], got {cfg.flip_prob}")
    if not 0.0 <= cfg.eps_min <= cfg.eps_max <= 1.0:
        problems.append("need 0 <= eps_min <= eps_max <= 1")
    if cfg.c_d <= 0:
        problems.append(f"c_d must be positive, got {cfg.c_d}")
    if cfg.backfill_mode not in ("domain", "ball"):
        problems.append(f"backfill_mode must be 'domain' or 'ball', got {cfg.backfill_mode!r}")
    for key in ("batch_size", "min_iterations", "patience", "bucket_size",
                "population_size", "max_candidates_per_cycle", "max_gen_iterations",
                "n_inactive", "max_epochs"):
        if getattr(cfg, key) < 1:
            problems.append(f"{key} must be >= 1, got {getattr(cfg, key)}")
    if cfg.n_active < 0:
        problems.append(f"n_active must be >= 0, got {cfg.n_active}")
    for key in ("min_score", "min_similarity"):
        if not 0.0 <= getattr(cfg, key) <= 1.0:
            problems.append(f"{key} must be in [0, 1], got {getattr(cfg, key)}")
    if cfg.l2 < 0:
        problems.append(f"l2 must be >= 0, got {cfg.l2}")
    if cfg.tol <= 0:
        problems.append(f"tol must be positive, got {cfg.tol}")
    if problems:
        raise ValidationError(problems)
