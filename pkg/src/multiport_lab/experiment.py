"""Coincidence detection and correlation-space scans.

The scanned phases (phi_x, phi_y) are the relative phases of modes 1 and 2
with mode 0 as the zero reference. By default only the detector pairs
(0, b) are tracked: one detector on side A gated against all of side B.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

import numpy as np
from scipy import optimize

from .linalg import StateVector, Unitary, dft_matrix, distance_up_to_global_phase, fidelity
from .source import SourceConfig, entangled_state

TWO_PI = 2 * np.pi


def joint_probabilities(state: StateVector, u_a: Unitary, u_b: Unitary) -> np.ndarray:
    """All |<ab|(U_A (x) U_B)|psi>|^2 as an (N_A, N_B) array."""
    return np.abs(state.transformed(u_a, u_b).as_matrix()) ** 2


def joint_probability(state: StateVector, u_a: Unitary, u_b: Unitary, a: int, b: int) -> float:
    na, nb = state.dims
    if not (0 <= a < na and 0 <= b < nb):
        raise IndexError(f"outcome ({a}, {b}) out of range for dims {state.dims}")
    return float(joint_probabilities(state, u_a, u_b)[a, b])


def single_side_marginals(state: StateVector, u_a: Unitary, u_b: Unitary) -> tuple[np.ndarray, np.ndarray]:
    p = joint_probabilities(state, u_a, u_b)
    return p.sum(axis=1), p.sum(axis=0)


@dataclass(frozen=True)
class ScanModel:
    """Exact coincidence model for a diagonal source state behind two multiports.

    For the state sum_k A_k e^{i theta_k} |kk>, the (a, b) amplitude is
    sum_k U_A[a, k] U_B[b, k] A_k e^{i theta_k}, linear in e^{i theta}.
    """

    amplitudes: np.ndarray
    base_phases: np.ndarray
    u_a: np.ndarray
    u_b: np.ndarray
    offsets: tuple[float, float] = (0.0, 0.0)

    @classmethod
    def from_config(
        cls, config: SourceConfig, u_a: Unitary, u_b: Unitary, offsets: tuple[float, float] = (0.0, 0.0)
    ) -> ScanModel:
        if config.n < 3:
            raise ValueError("correlation scans need at least three modes")
        if u_a.n != config.n or u_b.n != config.n:
            raise ValueError("multiport dimension does not match the source")
        return cls(
            amplitudes=np.asarray(config.amplitudes, dtype=float),
            base_phases=np.asarray(config.relative_phases, dtype=float),
            u_a=u_a.matrix,
            u_b=u_b.matrix,
            offsets=(float(offsets[0]), float(offsets[1])),
        )

    @property
    def n(self) -> int:
        return self.amplitudes.size

    def phases(self, phi_x: Any, phi_y: Any) -> np.ndarray:
        """Relative source phases realized at scan coordinates, shape (..., n)."""
        phi_x, phi_y = np.broadcast_arrays(np.asarray(phi_x, float), np.asarray(phi_y, float))
        theta = np.broadcast_to(self.base_phases, phi_x.shape + (self.n,)).copy()
        theta[..., 0] = 0.0
        theta[..., 1] = phi_x - self.offsets[0]
        theta[..., 2] = phi_y - self.offsets[1]
        return theta

    def probabilities(self, phi_x: Any, phi_y: Any, pairs: Sequence[tuple[int, int]]) -> np.ndarray:
        """Joint probabilities for ``pairs`` at the given scan coordinates, shape (..., len(pairs))."""
        a_idx = np.array([p[0] for p in pairs])
        b_idx = np.array([p[1] for p in pairs])
        kernel = self.u_a[a_idx, :] * self.u_b[b_idx, :] * self.amplitudes
        amp = np.exp(1j * self.phases(phi_x, phi_y)) @ kernel.T
        return np.abs(amp) ** 2


@dataclass(frozen=True)
class GridSpec:
    """Uniform scan grid over [start, start + 2 pi), radians."""

    nx: int = 36
    ny: int = 30
    x_start: float = 0.0
    y_start: float = 0.0

    def __post_init__(self) -> None:
        if self.nx < 2 or self.ny < 2:
            raise ValueError("grid needs at least two points per axis")

    @property
    def grid_x(self) -> np.ndarray:
        return self.x_start + TWO_PI * np.arange(self.nx) / self.nx

    @property
    def grid_y(self) -> np.ndarray:
        return self.y_start + TWO_PI * np.arange(self.ny) / self.ny


def tracked_pairs(n: int, all_pairs: bool = False) -> list[tuple[int, int]]:
    if all_pairs:
        return [(a, b) for a in range(n) for b in range(n)]
    return [(0, b) for b in range(n)]


@dataclass(frozen=True)
class FittedSignal:
    """offset + amplitude * cos(phi_y - phase0)."""

    offset: float
    amplitude: float
    phase0: float
    rms_residual: float

    def __call__(self, phi_y: Any) -> np.ndarray:
        return self.offset + self.amplitude * np.cos(np.asarray(phi_y) - self.phase0)

    def to_json(self) -> dict:
        return {
            "offset": self.offset,
            "amplitude": self.amplitude,
            "phase0": self.phase0,
            "rms_residual": self.rms_residual,
        }


def fit_slice(values: Any, grid_y: Any) -> FittedSignal:
    """Least-squares single-harmonic fit of a phi_y slice.

    Linear in (offset, a cos, a sin), so solved in closed form; on a uniform
    full-period grid this coincides with the first Fourier coefficients.
    """
    y = np.asarray(values, dtype=float)
    x = np.asarray(grid_y, dtype=float)
    if y.shape != x.shape or y.ndim != 1:
        raise ValueError("values and grid must be 1-D and the same length")
    if y.size < 4:
        raise ValueError("need at least 4 points to fit a sinusoid")
    design = np.column_stack([np.ones_like(x), np.cos(x), np.sin(x)])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    c0, cc, cs = coef
    amplitude = float(math.hypot(cc, cs))
    phase0 = float(math.atan2(cs, cc)) % TWO_PI if amplitude > 0 else 0.0
    resid = y - design @ coef
    return FittedSignal(float(c0), amplitude, phase0, float(np.sqrt(np.mean(resid**2))))


@dataclass
class CorrelationMap:
    """Coincidence probabilities (and optionally sampled counts) over a (phi_x, phi_y) grid.

    ``probs`` and ``counts`` have shape (nx, ny, len(pairs)).
    """

    grid_x: np.ndarray
    grid_y: np.ndarray
    pairs: list[tuple[int, int]]
    probs: np.ndarray
    counts: np.ndarray | None
    meta: dict
    model: ScanModel | None = field(default=None, repr=False)

    @property
    def shape(self) -> tuple[int, int]:
        return self.grid_x.size, self.grid_y.size

    @property
    def expected_counts(self) -> np.ndarray:
        """pair_rate * P * T plus the accidental floor * T."""
        t = self.meta["integration"]
        return (self.meta["pair_rate"] * self.probs + self.meta["accidental_rate"]) * t

    def background_subtracted(self) -> np.ndarray:
        """Sampled counts minus the expected accidental floor."""
        if self.counts is None:
            raise ValueError("map has no sampled counts")
        return self.counts - self.meta["accidental_rate"] * self.meta["integration"]

    def fits(self, use_counts: bool = False) -> list[list[FittedSignal]]:
        """Per-slice fits, indexed [ix][pair]."""
        data = self.probs if not use_counts else self.background_subtracted()
        return [
            [fit_slice(data[ix, :, p], self.grid_y) for p in range(len(self.pairs))]
            for ix in range(self.grid_x.size)
        ]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(
            ["phi_x_deg", "phi_y_deg", "detector_a", "detector_b", "expected_prob", "sampled_counts"]
        )
        gx = np.degrees(self.grid_x)
        gy = np.degrees(self.grid_y)
        for ix in range(gx.size):
            for iy in range(gy.size):
                for p, (a, b) in enumerate(self.pairs):
                    counts = "" if self.counts is None else str(int(self.counts[ix, iy, p]))
                    writer.writerow(
                        [
                            _fmt_deg(gx[ix]),
                            _fmt_deg(gy[iy]),
                            a,
                            b,
                            format(float(self.probs[ix, iy, p]), ".17g"),
                            counts,
                        ]
                    )
        return buf.getvalue()


def _fmt_deg(value: float) -> str:
    # grid labels only; rounding hides binary noise from the rad->deg round trip
    return format(round(float(value), 9), ".12g")


def _point_rng(seed: int, ix: int, iy: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), ix, iy]))


def scan_correlation_map(
    config: SourceConfig,
    u_a: Unitary,
    u_b: Unitary,
    grid: GridSpec = GridSpec(),
    sampling: bool = True,
    seed: int = 0,
    offsets: tuple[float, float] = (0.0, 0.0),
    all_pairs: bool = False,
) -> CorrelationMap:
    """Scan the two relative source phases and record coincidences.

    Every grid point draws its Poisson counts from its own generator seeded by
    (seed, ix, iy), so results do not depend on evaluation order.
    """
    model = ScanModel.from_config(config, u_a, u_b, offsets)
    pairs = tracked_pairs(config.n, all_pairs)
    gx, gy = grid.grid_x, grid.grid_y
    xx, yy = np.meshgrid(gx, gy, indexing="ij")
    probs = model.probabilities(xx, yy, pairs)
    acc = config.accidental_rate
    meta = {
        "n": config.n,
        "integration": config.integration,
        "pair_rate": config.pair_rate,
        "accidental_rate": acc,
        "seed": int(seed),
        "sampling": bool(sampling),
        "offsets_rad": list(model.offsets),
    }
    counts = None
    if sampling:
        lam = (config.pair_rate * probs + acc) * config.integration
        counts = np.empty(probs.shape, dtype=np.int64)
        for ix in range(gx.size):
            for iy in range(gy.size):
                counts[ix, iy] = _point_rng(seed, ix, iy).poisson(lam[ix, iy])
    return CorrelationMap(gx, gy, pairs, probs, counts, meta, model)


@dataclass(frozen=True)
class Extremum:
    pair: tuple[int, int]
    phi_x: float
    phi_y: float
    probability: float
    others: tuple[float, ...]
    kind: str = "max"


@dataclass(frozen=True)
class ExtremaReport:
    maxima: tuple[Extremum, ...]
    offsets: tuple[tuple[float, float], ...]

    def offsets_deg(self) -> list[tuple[float, float]]:
        return [(math.degrees(dx), math.degrees(dy)) for dx, dy in self.offsets]

    def to_json(self) -> dict:
        return {
            "maxima": [
                {
                    "pair": list(m.pair),
                    "phi_x_deg": math.degrees(m.phi_x),
                    "phi_y_deg": math.degrees(m.phi_y),
                    "probability": m.probability,
                    "other_pairs": list(m.others),
                }
                for m in self.maxima
            ],
            "offsets_deg": [list(o) for o in self.offsets_deg()],
        }


def _maximize(fun, x0: Sequence[float]) -> np.ndarray:
    res = optimize.minimize(
        lambda v: -fun(v[0], v[1]),
        np.asarray(x0, dtype=float),
        method="Nelder-Mead",
        options={"xatol": 1e-11, "fatol": 1e-16, "maxiter": 4000},
    )
    return np.mod(res.x, TWO_PI)


def find_extrema(cmap: CorrelationMap) -> ExtremaReport:
    """Global maximum of every tracked pair, refined on the exact model.

    Offsets are the positions of each maximum relative to the first pair's,
    reduced to [0, 2 pi).
    """
    if cmap.model is None:
        raise ValueError("map carries no model to refine against")
    model = cmap.model
    pairs = cmap.pairs
    maxima = []
    for p, pair in enumerate(pairs):
        ix, iy = np.unravel_index(int(np.argmax(cmap.probs[:, :, p])), cmap.shape)
        start = (cmap.grid_x[ix], cmap.grid_y[iy])
        x, y = _maximize(lambda u, v: float(model.probabilities(u, v, [pair])[0]), start)
        values = model.probabilities(x, y, pairs)
        others = tuple(float(values[q]) for q in range(len(pairs)) if q != p)
        maxima.append(Extremum(pair, float(x), float(y), float(values[p]), others))
    ref = maxima[0]
    offsets = tuple(
        (float((m.phi_x - ref.phi_x) % TWO_PI), float((m.phi_y - ref.phi_y) % TWO_PI)) for m in maxima
    )
    return ExtremaReport(tuple(maxima), offsets)


def perfect_correlations(model: ScanModel, grid: GridSpec = GridSpec(), tol: float = 1e-9) -> dict:
    """Best achievable sum_a P(a, sigma(a)) for every permutation sigma of the outputs.

    A permutation counts as a perfect correlation when some phase setting
    reaches 1 within ``tol``. Returns ``{"scores": {perm: best}, "perfect": [perm...]}``.
    """
    n = model.n
    xx, yy = np.meshgrid(grid.grid_x, grid.grid_y, indexing="ij")
    all_pairs = tracked_pairs(n, True)
    full = model.probabilities(xx, yy, all_pairs).reshape(xx.shape + (n, n))
    scores = {}
    for perm in itertools.permutations(range(n)):
        score_grid = sum(full[..., a, perm[a]] for a in range(n))
        ix, iy = np.unravel_index(int(np.argmax(score_grid)), score_grid.shape)
        pairs = [(a, perm[a]) for a in range(n)]

        def score(u, v, pairs=pairs):
            return float(model.probabilities(u, v, pairs).sum())

        x, y = _maximize(score, (grid.grid_x[ix], grid.grid_y[iy]))
        scores[perm] = max(score(x, y), float(score_grid[ix, iy]))
    perfect = [perm for perm, s in scores.items() if s >= 1 - tol]
    return {"scores": scores, "perfect": perfect}


def is_fourier(u: Unitary, tol: float = 1e-9) -> bool:
    return distance_up_to_global_phase(u.matrix, dft_matrix(u.n).matrix) <= tol


def detector_shift_equivalence(
    amplitudes: Sequence[float],
    u_a: Unitary,
    u_b: Unitary,
    points: int = 100,
    seed: int = 0,
    tol: float = 1e-10,
) -> bool:
    """Check P_(a, b+1)(theta) = P_(a, b)(theta_k + 2 pi k / N) on random phases.

    For N = 3 the shift is (phi_x + 120 deg, phi_y + 240 deg). Only defined for
    Fourier multiports.

    Raises
    ------
    ValueError
        If either multiport is not a discrete Fourier transform (the
        equivalence does not apply).
    """
    if not (is_fourier(u_a) and is_fourier(u_b)):
        raise ValueError("not applicable: detector-shift equivalence needs Fourier multiports")
    amps = np.asarray(amplitudes, dtype=float)
    n = amps.size
    if u_a.n != n or u_b.n != n:
        raise ValueError("multiport dimension does not match the amplitudes")
    rng = np.random.default_rng(seed)
    theta = rng.uniform(0, TWO_PI, size=(points, n))
    theta[:, 0] = 0.0
    shift = TWO_PI * np.arange(n) / n
    kernel = u_a.matrix[:, None, :] * u_b.matrix[None, :, :] * amps

    def probs(th):
        return np.abs(np.einsum("abk,pk->pab", kernel, np.exp(1j * th))) ** 2

    lhs = np.roll(probs(theta), -1, axis=2)
    rhs = probs(theta + shift)
    return bool(np.max(np.abs(lhs - rhs)) <= tol)


def sensitivity_pattern(n: int, phi: Any, damping: float = 1.0, path: Sequence[float] | None = None) -> np.ndarray:
    """Normalized coincidence pattern of pair (0, 0) along a diagonal phase path.

    Equal-amplitude state, Fourier multiports on both sides, relative phases
    theta_k = path[k] * phi (default path k). Probabilities are normalized over
    the tracked pairs (0, b). ``damping`` < 1 mixes in a flat background,
    scaling the fringe about its mean 1/n.
    """
    if n < 2:
        raise ValueError("need at least two paths")
    weights = np.arange(n, dtype=float) if path is None else np.asarray(path, dtype=float)
    if weights.shape != (n,):
        raise ValueError(f"path needs {n} weights")
    f = dft_matrix(n).matrix
    amps = np.full(n, 1 / np.sqrt(n))
    phi = np.asarray(phi, dtype=float)
    theta = phi[..., None] * weights
    kernel = f[0, None, :] * f[:, :] * amps
    p = np.abs(np.exp(1j * theta) @ kernel.T) ** 2
    norm = p[..., 0] / p.sum(axis=-1)
    return damping * norm + (1 - damping) / n


def phase_sensitivity(
    n: int = 3, damping: float = 1.0, path: Sequence[float] | None = None, points: int = 1 << 16
) -> float:
    """Maximum |dP/dphi| of the normalized pattern, by periodic central differences."""
    phi = TWO_PI * np.arange(points) / points
    h = TWO_PI / points
    p = sensitivity_pattern(n, phi, damping, path)
    deriv = (np.roll(p, -1) - np.roll(p, 1)) / (2 * h)
    return float(np.max(np.abs(deriv)))


def subspace_fidelity(state: StateVector, modes: tuple[int, int]) -> float:
    """Fidelity of the renormalized {j, k} two-qubit block with (|jj> + |kk>)/sqrt(2)."""
    j, k = (int(m) for m in modes)
    na, nb = state.dims
    if j == k:
        raise ValueError("subspace modes must differ")
    if not (0 <= j < min(na, nb) and 0 <= k < min(na, nb)):
        raise IndexError("subspace mode out of range")
    c = state.as_matrix()
    block = np.array([[c[j, j], c[j, k]], [c[k, j], c[k, k]]])
    norm = np.linalg.norm(block)
    if norm < 1e-15:
        raise ValueError("state has no weight in the requested subspace")
    block = block / norm
    bell = np.array([[1, 0], [0, 1]]) / np.sqrt(2)
    return float(abs(np.vdot(bell, block)) ** 2)


def bellport_setup(config: SourceConfig) -> tuple[StateVector, Unitary, Unitary]:
    f = dft_matrix(config.n)
    return entangled_state(config), f, f
