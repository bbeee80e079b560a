"""Shared domain types, deterministic RNG, and plain-text serialization.

Everything downstream (mixture track, diffusion track, objectives, metrics)
builds on the types here. All value objects are immutable once constructed;
RNG streams are single-owner and must be split before parallel use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from scipy.special import expit, log_expit


# ---------------------------------------------------------------------------
# RNG
# ---------------------------------------------------------------------------

class SplitRng(NamedTuple):
    left: "RngStream"
    right: "RngStream"


class RngStream:
    """Splittable counter-based random stream.

    Backed by the Philox counter-based bit generator, so identical seeds give
    bit-identical draw sequences across platforms. ``split`` derives child
    streams that are statistically independent of the parent and of each
    other; the parent remains usable and successive splits never repeat.
    """

    def __init__(self, seed_seq: np.random.SeedSequence):
        self._seq = seed_seq
        self._gen = np.random.Generator(np.random.Philox(seed_seq))

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def split(self) -> SplitRng:
        left, right = self._seq.spawn(2)
        return SplitRng(RngStream(left), RngStream(right))

    def spawn(self, n: int) -> list["RngStream"]:
        return [RngStream(s) for s in self._seq.spawn(n)]

    # thin draw helpers so callers rarely touch .generator directly
    def uniform(self, size=None):
        return self._gen.uniform(size=size)

    def normal(self, size=None):
        return self._gen.standard_normal(size=size)

    def integers(self, low, high=None, size=None):
        return self._gen.integers(low, high, size=size)

    def choice(self, n: int, size: int, replace: bool = False) -> np.ndarray:
        return self._gen.choice(n, size=size, replace=replace)


def rng_create(seed: int) -> RngStream:
    """Create the root stream for a run from a 64-bit seed."""
    return RngStream(np.random.SeedSequence(int(seed)))


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Sample:
    """One generated point: coordinates, the condition it was generated
    under, and (when the generator knows it) the ground-truth attribute."""

    x: np.ndarray
    condition: str
    attribute: str | None = None

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.x, dtype=float))
        if not np.all(np.isfinite(x)):
            raise ValueError("sample coordinates must be finite")
        object.__setattr__(self, "x", x)

    @property
    def dim(self) -> int:
        return self.x.shape[0]


@dataclass(frozen=True)
class Population:
    """N samples generated under a single condition."""

    condition: str
    samples: tuple[Sample, ...]

    def __post_init__(self):
        samples = tuple(self.samples)
        if len(samples) < 1:
            raise ValueError("population must contain at least one sample")
        d = samples[0].dim
        for s in samples:
            if s.condition != self.condition:
                raise ValueError(
                    f"sample condition {s.condition!r} != population condition {self.condition!r}"
                )
            if s.dim != d:
                raise ValueError("all samples in a population must share dimension")
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return len(self.samples)

    def xs(self) -> np.ndarray:
        """Stacked coordinates, shape (N, d)."""
        return np.stack([s.x for s in self.samples])


@dataclass(frozen=True)
class PreferencePair:
    """Ordered winner/loser pair of equally sized populations — the unit of
    population-level supervision."""

    winner: Population
    loser: Population
    condition: str

    def __post_init__(self):
        if self.winner.condition != self.condition or self.loser.condition != self.condition:
            raise ValueError("winner/loser conditions must match the pair condition")
        if len(self.winner) != len(self.loser):
            raise ValueError("winner and loser populations must have equal size")

    @property
    def n(self) -> int:
        return len(self.winner)


AUTO_2NT = "auto_2NT"
EXPLICIT = "explicit"


@dataclass(frozen=True)
class AlignConfig:
    """Hyperparameters of an alignment run.

    ``beta`` is the divergence-penalty strength, ``alpha`` weights the
    winner-side batch mean inside the reward normalizer. The rescaled
    penalty defaults to 2*N*T*beta (``auto_2NT``); set
    ``beta_prime_mode="explicit"`` plus ``beta_prime`` to pin it.
    """

    beta: float = 0.5
    alpha: float = 0.5
    population_size: int = 10
    learning_rate: float = 1e-2
    steps: int = 2000
    batch_size: int = 0  # 0 = full batch
    seed: int = 0
    beta_prime_mode: str = AUTO_2NT
    beta_prime: float | None = None

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.population_size < 1:
            raise ValueError("population_size must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.beta_prime_mode not in (AUTO_2NT, EXPLICIT):
            raise ValueError(f"unknown beta_prime_mode {self.beta_prime_mode!r}")
        if self.beta_prime_mode == EXPLICIT and self.beta_prime is None:
            raise ValueError("explicit beta_prime_mode requires a beta_prime value")

    def resolve_beta_prime(self, timesteps: int = 1) -> float:
        if self.beta_prime_mode == EXPLICIT:
            return float(self.beta_prime)
        return 2.0 * self.population_size * timesteps * self.beta

    # -- key = value config file ------------------------------------------------
    def to_text(self) -> str:
        lines = []
        for name in ("beta", "alpha", "population_size", "learning_rate",
                     "steps", "batch_size", "seed", "beta_prime_mode", "beta_prime"):
            lines.append(f"{name} = {getattr(self, name)!r}")
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_text())

    @classmethod
    def from_text(cls, text: str) -> "AlignConfig":
        kwargs = {}
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"bad config line: {raw!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            kwargs[key] = _parse_scalar(value)
        return cls(**kwargs)

    @classmethod
    def load(cls, path) -> "AlignConfig":
        with open(path) as fh:
            return cls.from_text(fh.read())

    def updated(self, **changes) -> "AlignConfig":
        return replace(self, **changes)


def _parse_scalar(token: str):
    token = token.strip()
    if token in ("None", ""):
        return None
    if token.startswith(("'", '"')) and token.endswith(("'", '"')):
        return token[1:-1]
    try:
        return int(token)
    except ValueError:
        pass
    try:
        return float(token)
    except ValueError:
        return token


# ---------------------------------------------------------------------------
# Trace log
# ---------------------------------------------------------------------------

class TraceLog:
    """Append-only training trace with a fixed CSV header
    ``iter,loss,discrepancy,<extras...>,wall``."""

    def __init__(self, extra_columns: Sequence[str] = ()):
        self.extra_columns = tuple(extra_columns)
        self.rows: list[tuple] = []

    @property
    def header(self) -> list[str]:
        return ["iter", "loss", "discrepancy", *self.extra_columns, "wall"]

    def append(self, iteration: int, loss: float, discrepancy: float,
               extras: Sequence[float] = (), wall: float = 0.0) -> None:
        if self.rows and iteration <= self.rows[-1][0]:
            raise ValueError("iterations must be strictly increasing")
        extras = tuple(float(v) for v in extras)
        if len(extras) != len(self.extra_columns):
            raise ValueError(
                f"expected {len(self.extra_columns)} extras, got {len(extras)}"
            )
        self.rows.append((int(iteration), float(loss), float(discrepancy), *extras, float(wall)))

    def column(self, name: str) -> list[float]:
        idx = self.header.index(name)
        return [row[idx] for row in self.rows]

    def to_csv(self) -> str:
        out = [",".join(self.header)]
        for row in self.rows:
            out.append(",".join(_fmt_cell(v) for v in row))
        return "\n".join(out) + "\n"

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_csv())

    @classmethod
    def from_csv(cls, text: str) -> "TraceLog":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        header = lines[0].split(",")
        if header[:3] != ["iter", "loss", "discrepancy"] or header[-1] != "wall":
            raise ValueError("unrecognized trace header")
        log = cls(extra_columns=header[3:-1])
        for line in lines[1:]:
            cells = line.split(",")
            log.append(int(cells[0]), float(cells[1]), float(cells[2]),
                       [float(c) for c in cells[3:-1]], wall=float(cells[-1]))
        return log

    @classmethod
    def load(cls, path) -> "TraceLog":
        with open(path) as fh:
            return cls.from_csv(fh.read())


def _fmt_cell(v) -> str:
    if isinstance(v, int):
        return str(v)
    return repr(float(v))


# ---------------------------------------------------------------------------
# Dataset serialization (one record per pair, per-sample win/lose labels)
# ---------------------------------------------------------------------------

def save_pairs(path, pairs: Iterable[PreferencePair]) -> None:
    with open(path, "w") as fh:
        fh.write(pairs_to_text(pairs))


def pairs_to_text(pairs: Iterable[PreferencePair]) -> str:
    out = []
    for pair in pairs:
        out.append(f"pair condition={pair.condition} n={pair.n}")
        for gamma, pop in ((+1, pair.winner), (-1, pair.loser)):
            for s in pop.samples:
                attr = s.attribute if s.attribute is not None else "-"
                coords = " ".join(repr(float(v)) for v in s.x)
                out.append(f"{gamma:+d} {attr} {coords}")
    return "\n".join(out) + "\n"


def load_pairs(path) -> list[PreferencePair]:
    with open(path) as fh:
        return pairs_from_text(fh.read())


def pairs_from_text(text: str) -> list[PreferencePair]:
    pairs: list[PreferencePair] = []
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    i = 0
    while i < len(lines):
        head = lines[i]
        if not head.startswith("pair "):
            raise ValueError(f"expected pair header, got {head!r}")
        fields = dict(tok.split("=", 1) for tok in head.split()[1:])
        condition = fields["condition"]
        n = int(fields["n"])
        i += 1
        winners, losers = [], []
        for _ in range(2 * n):
            gamma_tok, attr_tok, *coords = lines[i].split()
            sample = Sample(
                x=np.array([float(c) for c in coords]),
                condition=condition,
                attribute=None if attr_tok == "-" else attr_tok,
            )
            (winners if int(gamma_tok) > 0 else losers).append(sample)
            i += 1
        pairs.append(PreferencePair(
            winner=Population(condition, tuple(winners)),
            loser=Population(condition, tuple(losers)),
            condition=condition,
        ))
    return pairs


# ---------------------------------------------------------------------------
# Numerics shared across modules
# ---------------------------------------------------------------------------

# stable elementwise sigmoid / log-sigmoid; log_sigmoid(0) == -log(2) exactly
sigmoid = expit
log_sigmoid = log_expit

LOG_TWO = math.log(2.0)
