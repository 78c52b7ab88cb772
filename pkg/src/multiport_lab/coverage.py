"""Monte Carlo estimate of the fraction of U(n) a finite-extinction mesh can realize.

Haar-random unitaries are compiled onto the Reck mesh and accepted when
every unit's reflectivity falls inside the reachable interval. Sampling
happens in fixed-size chunks, each seeded from (seed, n, chunk index), so
results do not depend on how chunks are scheduled.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

import numpy as np

from .linalg import haar_random_unitaries
from .mesh import reck_null, reflectivity_bounds

CHUNK = 1000
DEFAULT_SAMPLES = 20_000


@dataclass(frozen=True)
class CoverageEstimate:
    n: int
    extinction_dB: float
    samples: int
    fraction: float
    std_error: float

    @classmethod
    def from_counts(cls, n: int, extinction_dB: float, accepted: int, samples: int) -> CoverageEstimate:
        f = accepted / samples
        return cls(n, float(extinction_dB), samples, f, math.sqrt(f * (1 - f) / samples))


def _chunk_reflectivities(n: int, seed: int, index: int, size: int) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), int(n), int(index)]))
    w = haar_random_unitaries(n, size, rng).conj().transpose(0, 2, 1).copy()
    thetas, _, _ = reck_null(w)
    return np.sin(thetas / 2) ** 2


def _chunk_min_max(args: tuple[int, int, int, int]) -> tuple[np.ndarray, np.ndarray]:
    r = _chunk_reflectivities(*args)
    return r.min(axis=1), r.max(axis=1)


def sample_extremes(n: int, samples: int, seed: int, workers: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Smallest and largest unit reflectivity of each sampled unitary.

    A sample is reachable at extinction ER iff min >= eps and max <= 1 - eps,
    so one pass serves every extinction value (nested acceptance regions).
    """
    if n < 2:
        raise ValueError("coverage needs n >= 2")
    if samples < 1:
        raise ValueError("samples must be at least 1")
    jobs = [
        (n, seed, i, min(CHUNK, samples - i * CHUNK)) for i in range((samples + CHUNK - 1) // CHUNK)
    ]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_chunk_min_max, jobs))
    else:
        parts = [_chunk_min_max(j) for j in jobs]
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def accepted_mask(lo_r: np.ndarray, hi_r: np.ndarray, extinction_dB: float) -> np.ndarray:
    lo, hi = reflectivity_bounds(extinction_dB)
    return (lo_r >= lo) & (hi_r <= hi)


def estimate_coverage(
    n: int, extinction_dB: float, samples: int = DEFAULT_SAMPLES, seed: int = 0, workers: int = 1
) -> CoverageEstimate:
    lo_r, hi_r = sample_extremes(n, samples, seed, workers)
    accepted = int(np.count_nonzero(accepted_mask(lo_r, hi_r, extinction_dB)))
    return CoverageEstimate.from_counts(n, extinction_dB, accepted, samples)


def coverage_curve(
    n_range: Iterable[int],
    extinction_list: Sequence[float],
    samples: int = DEFAULT_SAMPLES,
    seed: int = 0,
    workers: int = 1,
) -> list[CoverageEstimate]:
    """Coverage for every (n, extinction) cell; each n shares one sample stream."""
    ers = [float(e) for e in extinction_list]
    for e in ers:
        reflectivity_bounds(e)
    table = []
    for n in n_range:
        lo_r, hi_r = sample_extremes(int(n), samples, seed, workers)
        for e in ers:
            accepted = int(np.count_nonzero(accepted_mask(lo_r, hi_r, e)))
            table.append(CoverageEstimate.from_counts(int(n), e, accepted, samples))
    return table


def curve_to_csv(table: Sequence[CoverageEstimate]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["n", "extinction_dB", "samples", "fraction", "std_error"])
    for row in table:
        writer.writerow(
            [
                row.n,
                "inf" if math.isinf(row.extinction_dB) else format(row.extinction_dB, ".17g"),
                row.samples,
                format(row.fraction, ".17g"),
                format(row.std_error, ".17g"),
            ]
        )
    return buf.getvalue()


def estimate_to_json(est: CoverageEstimate) -> dict:
    doc = asdict(est)
    if math.isinf(est.extinction_dB):
        doc["extinction_dB"] = "inf"
    return doc
