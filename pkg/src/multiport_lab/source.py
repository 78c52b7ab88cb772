"""In-fiber entangled-pair source: state amplitudes, phase drift and accidental noise."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Any, Sequence

import numpy as np

from .linalg import NORM_TOL, StateVector

TWO_PI = 2 * np.pi
DETECTION_WINDOW = 2.5e-9


@dataclass(frozen=True)
class SourceConfig:
    """Parameters of the N-crystal source.

    Angles in radians, rates in 1/s, ``window`` and ``integration`` in seconds.
    ``pair_rate`` counts detected pairs summed over all N^2 output combinations.
    ``metadata`` carries bookkeeping (e.g. filter wavelengths) that never enters
    the model.
    """

    n: int = 3
    amplitudes: tuple[float, ...] | None = None
    phases_a: tuple[float, ...] | None = None
    phases_b: tuple[float, ...] | None = None
    pair_rate: float = 225.0
    singles_a: float = 2.0e4
    singles_b: float = 2.0e4
    window: float = DETECTION_WINDOW
    integration: float = 8.0
    metadata: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        n = int(self.n)
        if n < 1:
            raise ValueError("n must be at least 1")
        amps = (
            tuple([1 / math.sqrt(n)] * n)
            if self.amplitudes is None
            else tuple(float(a) for a in self.amplitudes)
        )
        pa = tuple([0.0] * n) if self.phases_a is None else tuple(float(p) for p in self.phases_a)
        pb = tuple([0.0] * n) if self.phases_b is None else tuple(float(p) for p in self.phases_b)
        if not len(amps) == len(pa) == len(pb) == n:
            raise ValueError(f"amplitudes and phases need {n} entries each")
        if any(a < 0 for a in amps):
            raise ValueError("amplitudes must be non-negative")
        if abs(sum(a * a for a in amps) - 1.0) > NORM_TOL:
            raise ValueError("sum of squared amplitudes must be 1")
        for name in ("pair_rate", "singles_a", "singles_b", "window", "integration"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "phases_a", pa)
        object.__setattr__(self, "phases_b", pb)

    @property
    def relative_phases(self) -> np.ndarray:
        """phi_k - phi'_k for each mode."""
        return np.asarray(self.phases_a) - np.asarray(self.phases_b)

    def with_relative_phases(self, relative: Sequence[float]) -> SourceConfig:
        """Same source with side B phases zeroed and side A carrying ``relative``."""
        return SourceConfig(
            n=self.n,
            amplitudes=self.amplitudes,
            phases_a=tuple(float(p) for p in relative),
            phases_b=tuple([0.0] * self.n),
            pair_rate=self.pair_rate,
            singles_a=self.singles_a,
            singles_b=self.singles_b,
            window=self.window,
            integration=self.integration,
            metadata=dict(self.metadata),
        )

    @property
    def accidental_rate(self) -> float:
        return accidental_rate(self.singles_a, self.singles_b, self.window)

    def to_json(self) -> dict:
        doc = asdict(self)
        doc["amplitudes"] = list(self.amplitudes)
        doc["phases_a"] = list(self.phases_a)
        doc["phases_b"] = list(self.phases_b)
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> SourceConfig:
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown source keys: {sorted(unknown)}")
        return cls(**doc)


@dataclass(frozen=True)
class DriftModel:
    """Independent Gaussian random walk of each fiber phase, ``sigma`` in rad/sqrt(s).

    The default magnitude is a modelling choice, not a measured value.
    """

    sigma: float = 0.5

    def __post_init__(self) -> None:
        if not self.sigma >= 0:
            raise ValueError("sigma must be non-negative")


def entangled_state(config: SourceConfig) -> StateVector:
    """sum_k A_k exp(i (phi_k - phi'_k)) |kk>."""
    n = config.n
    amps = np.zeros(n * n, dtype=complex)
    diag = np.asarray(config.amplitudes) * np.exp(1j * config.relative_phases)
    amps[np.arange(n) * (n + 1)] = diag
    return StateVector.from_unnormalized((n, n), amps)


def apply_drift(phases: Any, dt: float, model: DriftModel, seed: Any = None) -> np.ndarray:
    """Random-walk each phase by N(0, (sigma sqrt(dt))^2), reduced mod 2 pi.

    ``seed`` may be an integer or an existing ``numpy.random.Generator``.
    """
    if dt < 0:
        raise ValueError("dt must be non-negative")
    phases = np.asarray(phases, dtype=float)
    if model.sigma == 0 or dt == 0:
        return phases.copy()
    rng = np.random.default_rng(seed)
    step = rng.normal(0.0, model.sigma * math.sqrt(dt), size=phases.shape)
    return np.mod(phases + step, TWO_PI)


def accidental_rate(singles_a: float, singles_b: float, window: float) -> float:
    """Uncorrelated coincidence rate per detector pair: S_a * S_b * tau."""
    if singles_a < 0 or singles_b < 0 or window < 0:
        raise ValueError("rates and window must be non-negative")
    return singles_a * singles_b * window
