"""``key = value`` run configuration with typed fields and flag overrides."""

from dataclasses import dataclass, fields, replace

from .pipeline import Baseline


class ConfigError(ValueError):
    pass


def _names(text):
    return tuple(x.strip() for x in text.split(",") if x.strip())


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    n: int = 1000
    folds: int = 3
    workers: int = 1
    data: str = ""  # dataset directory; empty means the output directory
    # data
    biographical: str = "separate"  # separate | merged
    bio_method: str = "average"  # average | levenshtein
    typo_substitution: float = 0.02
    typo_deletion: float = 0.01
    typo_insertion: float = 0.01
    typo_transposition: float = 0.01
    impostor_shape: float = 1.0
    missing_fraction: float = 0.0
    # pipeline
    identifiers: tuple = ()
    stage_order: tuple = ()
    baseline: str = "adaptive"
    k: int = 5
    m: int = 100
    eta: float = 1e-6
    alpha: float = 0.05
    outlier_n: int = 0  # 0: every gallery score
    quality_threshold: int = 3
    quality_identifier: str = ""
    # training
    step: float = 0.1
    max_iter: int = 10_000
    tol: float = 1e-8
    l2: float = 0.0
    # evaluation
    sweep_hi: int = 0
    sweep_lo: int = -12
    cmc_ranks: int = 10

    def __post_init__(self):
        problems = []
        if self.n < 1:
            problems.append("n must be >= 1")
        if self.folds < 2 or self.folds > self.n:
            problems.append("folds must lie in [2, n]")
        if self.workers < 1:
            problems.append("workers must be >= 1")
        if self.k < 1 or self.m < 1:
            problems.append("k and m must be >= 1")
        if self.k > self.n:
            problems.append("k cannot exceed the gallery size n")
        if self.eta < 0 or self.eta > 1:
            problems.append("eta must lie in [0, 1]")
        if not 0 < self.alpha < 1:
            problems.append("alpha must lie in (0, 1)")
        if self.outlier_n == 1 or self.outlier_n < 0:
            problems.append("outlier_n must be 0 (all scores) or >= 2")
        if not 1 <= self.quality_threshold <= 5:
            problems.append("quality_threshold must lie in 1..5")
        if self.biographical not in ("separate", "merged"):
            problems.append("biographical must be 'separate' or 'merged'")
        if self.bio_method not in ("average", "levenshtein"):
            problems.append("bio_method must be 'average' or 'levenshtein'")
        if self.baseline not in {b.value for b in Baseline}:
            problems.append(f"unknown baseline {self.baseline!r}")
        for name in ("typo_substitution", "typo_deletion", "typo_insertion",
                     "typo_transposition", "missing_fraction"):
            if not 0 <= getattr(self, name) <= 1:
                problems.append(f"{name} must lie in [0, 1]")
        if self.impostor_shape <= 0:
            problems.append("impostor_shape must be positive")
        if self.sweep_lo > self.sweep_hi:
            problems.append("sweep_lo must not exceed sweep_hi")
        if problems:
            raise ConfigError("; ".join(problems))

    def with_overrides(self, **overrides):
        """Copy with every non-None override applied (flags win over the file)."""
        given = {k: v for k, v in overrides.items() if v is not None}
        try:
            return replace(self, **given)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def dump(self):
        """Canonical ``key = value`` text, one field per line in declaration order."""
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"


_PARSERS = {int: int, float: float, str: str, tuple: _names}


def _field_types():
    out = {}
    for f in fields(RunConfig):
        default = f.default
        out[f.name] = _PARSERS[type(default)]
    return out


def parse_config(text, base=None):
    """Parse ``key = value`` lines; ``#`` starts a comment, blank lines are skipped.

    Raises:
      ConfigError: on unknown keys, malformed lines or invalid values.
    """
    types = _field_types()
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        if key not in types:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            values[key] = types[key](value)
        except ValueError:
            raise ConfigError(f"line {lineno}: bad value for {key}: {value!r}") from None
    base = RunConfig() if base is None else base
    return base.with_overrides(**values)


def load_config(path):
    try:
        with open(path) as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
