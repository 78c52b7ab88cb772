"""Simulated active phase stabilization of the source-to-multiport fibers.

Each of the N - 1 relative phases (mode 0 is the reference) has its own loop,
read out by one detector per reference wavelength, so the detector count is
2 (N - 1). The two wavelengths enter only through their ratio: wavelength 1
sees the loop phase with scale 1, wavelength 2 with scale lambda_1/lambda_2.
The wavelength-2 readout sits a quarter fringe off the lock point, which
lets the arccos estimate from wavelength 1 pick its sign.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .source import DriftModel, SourceConfig, apply_drift

TWO_PI = 2 * np.pi


def required_detectors(n: int) -> int:
    """Reference detectors needed for an n-mode system: two per additional mode."""
    if n < 2:
        raise ValueError("stabilization needs n >= 2")
    return 2 * (n - 1)


def interference_signal(relative_phase: Any, wavelength_scale: float = 1.0, visibility: float = 1.0) -> Any:
    """Normalized fringe (1 + V cos(scale * phase)) / 2."""
    if not 0 <= visibility <= 1:
        raise ValueError("visibility must lie in [0, 1]")
    return (1 + visibility * np.cos(wavelength_scale * np.asarray(relative_phase))) / 2


def _wrap_pm(x: np.ndarray) -> np.ndarray:
    return (x + np.pi) % TWO_PI - np.pi


@dataclass(frozen=True)
class StabilizerConfig:
    n: int = 3
    wavelengths: tuple[float, float] = (765.0, 785.0)
    gains: tuple[float, float, float] = (0.8, 5.0, 0.0)
    dt: float = 1e-3
    drift: DriftModel = field(default_factory=DriftModel)
    duration: float = 10.0
    setpoints: tuple[float, ...] | None = None
    initial_errors: tuple[float, ...] | None = None
    visibility: float = 1.0

    def __post_init__(self) -> None:
        if self.n < 2:
            raise ValueError("stabilization needs n >= 2")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.duration >= self.dt:
            raise ValueError("duration must be at least one timestep")
        w1, w2 = (float(w) for w in self.wavelengths)
        if w1 <= 0 or w2 <= 0 or w1 == w2:
            raise ValueError("need two distinct positive reference wavelengths")
        if not 0 <= self.visibility <= 1:
            raise ValueError("visibility must lie in [0, 1]")
        if len(self.gains) != 3:
            raise ValueError("gains are (k_p, k_i, k_d)")
        loops = self.n - 1
        for name in ("setpoints", "initial_errors"):
            value = getattr(self, name)
            value = (0.0,) * loops if value is None else tuple(float(v) for v in value)
            if len(value) != loops:
                raise ValueError(f"{name} needs {loops} entries")
            object.__setattr__(self, name, value)
        object.__setattr__(self, "wavelengths", (w1, w2))
        object.__setattr__(self, "gains", tuple(float(g) for g in self.gains))

    @property
    def loops(self) -> int:
        return self.n - 1

    @property
    def scales(self) -> tuple[float, float]:
        return 1.0, self.wavelengths[0] / self.wavelengths[1]

    @property
    def steps(self) -> int:
        return int(round(self.duration / self.dt))


@dataclass
class LockTelemetry:
    """Per-step, per-loop records; arrays have shape (steps, loops)."""

    t: np.ndarray
    phase_error: np.ndarray
    actuation: np.ndarray
    det_w1: np.ndarray
    det_w2: np.ndarray
    residual_rms: np.ndarray
    diverged: bool

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(
            ["t", "loop_id", "phase_error_rad", "actuation_rad", "det_signal_w1", "det_signal_w2"]
        )
        g = lambda x: format(float(x), ".17g")  # noqa: E731
        for i in range(self.t.size):
            for k in range(self.phase_error.shape[1]):
                writer.writerow(
                    [
                        g(self.t[i]),
                        k,
                        g(self.phase_error[i, k]),
                        g(self.actuation[i, k]),
                        g(self.det_w1[i, k]),
                        g(self.det_w2[i, k]),
                    ]
                )
        return buf.getvalue()


def estimate_error(r1: np.ndarray, r2: np.ndarray, scales: tuple[float, float], visibility: float) -> np.ndarray:
    """Invert the two-wavelength readout pair into a signed phase error.

    Magnitude from arccos of the wavelength-1 fringe; sign from which side of
    mid-fringe the quarter-fringe-biased wavelength-2 detector reads.
    """
    if visibility == 0:
        return np.zeros_like(r1)
    c = np.clip((2 * r1 - 1) / visibility, -1.0, 1.0)
    magnitude = np.arccos(c) / scales[0]
    sign = np.where(r2 <= 0.5, 1.0, -1.0)
    return sign * magnitude


def run_lock(config: StabilizerConfig, seed: int = 0) -> LockTelemetry:
    """Simulate the discrete PID loops under phase drift.

    Each step: drift the phases, read both detectors, estimate the error, and
    subtract the PID actuation from the phases. The recorded error is the
    true error the source sees before that step's correction. Residual RMS is
    taken over the final half of the run.
    """
    rng = np.random.default_rng(seed)
    kp, ki, kd = config.gains
    s1, s2 = config.scales
    bias2 = np.pi / (2 * s2)
    v = config.visibility
    setpoints = np.asarray(config.setpoints)
    phases = np.mod(setpoints + np.asarray(config.initial_errors), TWO_PI)
    steps, loops = config.steps, config.loops
    t = config.dt * np.arange(1, steps + 1)
    err = np.empty((steps, loops))
    act = np.empty((steps, loops))
    det1 = np.empty((steps, loops))
    det2 = np.empty((steps, loops))
    integral = np.zeros(loops)
    prev = None
    diverged = False
    for i in range(steps):
        phases = apply_drift(phases, config.dt, config.drift, rng)
        e = _wrap_pm(phases - setpoints)
        r1 = interference_signal(e, s1, v)
        r2 = interference_signal(e + bias2, s2, v)
        e_hat = estimate_error(r1, r2, (s1, s2), v)
        integral = integral + e_hat * config.dt
        deriv = np.zeros(loops) if prev is None else (e_hat - prev) / config.dt
        prev = e_hat
        u = kp * e_hat + ki * integral + kd * deriv
        if not np.all(np.isfinite(u)):
            diverged = True
            u = np.nan_to_num(u)
        phases = np.mod(phases - u, TWO_PI)
        err[i], act[i], det1[i], det2[i] = e, u, r1, r2
    tail = err[steps // 2 :]
    rms = np.sqrt(np.mean(tail**2, axis=0))
    if any(config.gains):
        diverged = diverged or bool(np.any(np.abs(tail) > np.pi / 2))
    return LockTelemetry(t, err, act, det1, det2, rms, diverged)


def lock_quality_to_fidelity(
    residual_rms: float, config: SourceConfig | None = None, samples: int = 20_000, seed: int = 0
) -> float:
    """Mean fidelity of the source state under Gaussian jitter of its relative phases.

    Modes 1..N-1 receive independent N(0, rms^2) phase errors relative to
    mode 0; ``inf`` means uniformly random phases. The overlap with the
    unjittered state is sum_k A_k^2 exp(i delta_k).
    """
    if not residual_rms >= 0:
        raise ValueError("residual_rms must be non-negative")
    config = config or SourceConfig()
    weights = np.asarray(config.amplitudes) ** 2
    if residual_rms == 0:
        return 1.0
    rng = np.random.default_rng(seed)
    shape = (samples, config.n - 1)
    if math.isinf(residual_rms):
        delta = rng.uniform(0, TWO_PI, size=shape)
    else:
        delta = residual_rms * rng.standard_normal(shape)
    overlap = weights[0] + np.exp(1j * delta) @ weights[1:]
    return float(np.mean(np.abs(overlap) ** 2))
