"""Programmable multiport model: a Reck triangle of Mach-Zehnder interferometers.

MZI transfer matrix (light enters on the right)::

    T(theta, phi) = B(eta2) . diag(e^{i theta}, 1) . B(eta1) . diag(e^{i phi}, 1)

with the lossless coupler ``B(eta) = [[sqrt(1-eta), sqrt(eta)], [sqrt(eta), -sqrt(1-eta)]]``.
For ideal 50/50 couplers this is::

    e^{i theta/2} [[cos(theta/2) e^{i phi}, i sin(theta/2)],
                   [i sin(theta/2) e^{i phi}, cos(theta/2)]]

so the cross-coupling power is R = sin^2(theta/2): theta = 0 is the bar state,
theta = pi the cross state.

Mesh layout: units are applied to light in list order, unit k acting on the
adjacent modes (pair, pair + 1); a diagonal of output phases follows the last
unit. For an n-mode mesh the unit list runs column by column of the Reck
triangle, each column bottom-up::

    (n-2, n-3, ..., 0), (n-2, ..., 1), ..., (n-2,)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .linalg import Unitary, distance_up_to_global_phase, _as_square, unitarity_defect

TWO_PI = 2 * np.pi
NULL_TOL = 1e-14


def _wrap(angle: float) -> float:
    a = math.fmod(float(angle), TWO_PI)
    if a < 0:
        a += TWO_PI
    # fmod can return exactly 2*pi after the shift for tiny negatives
    return 0.0 if a >= TWO_PI else a


@dataclass(frozen=True)
class MziSetting:
    """Internal phase ``theta`` and external input phase ``phi``, radians in [0, 2 pi)."""

    theta: float
    phi: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.theta) and math.isfinite(self.phi)):
            raise ValueError("MZI phases must be finite")
        object.__setattr__(self, "theta", _wrap(self.theta))
        object.__setattr__(self, "phi", _wrap(self.phi))

    @property
    def reflectivity(self) -> float:
        """Cross-coupling power sin^2(theta/2) for ideal couplers."""
        return math.sin(self.theta / 2) ** 2


@dataclass(frozen=True)
class MeshSettings:
    n: int
    units: tuple[tuple[int, MziSetting], ...]
    output_phases: tuple[float, ...]

    def __post_init__(self) -> None:
        units = tuple((int(p), s) for p, s in self.units)
        expected = reck_pairs(self.n)
        if [p for p, _ in units] != expected:
            raise ValueError(
                f"units must follow the Reck ordering for n={self.n}: {expected}"
            )
        phases = tuple(_wrap(p) for p in self.output_phases)
        if len(phases) != self.n:
            raise ValueError(f"expected {self.n} output phases, got {len(phases)}")
        object.__setattr__(self, "units", units)
        object.__setattr__(self, "output_phases", phases)

    @property
    def thetas(self) -> np.ndarray:
        return np.array([s.theta for _, s in self.units])

    @property
    def phis(self) -> np.ndarray:
        return np.array([s.phi for _, s in self.units])

    @property
    def reflectivities(self) -> np.ndarray:
        return np.sin(self.thetas / 2) ** 2

    @property
    def parameter_count(self) -> int:
        return 2 * len(self.units) + self.n

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "units": [
                {"pair": p, "theta": s.theta, "phi": s.phi} for p, s in self.units
            ],
            "output_phases": list(self.output_phases),
        }

    @classmethod
    def from_json(cls, doc: dict) -> MeshSettings:
        return cls(
            n=int(doc["n"]),
            units=tuple(
                (int(u["pair"]), MziSetting(float(u["theta"]), float(u["phi"])))
                for u in doc["units"]
            ),
            output_phases=tuple(float(p) for p in doc["output_phases"]),
        )


@dataclass(frozen=True)
class Imperfections:
    """Device non-idealities.

    ``extinction_dB`` is a global value or one value per unit (``inf`` means
    ideal). When ``couplers`` is given, an array of shape (units, 2) holding
    the power cross-coupling (eta1, eta2) of each unit's two couplers, the
    physical coupler model replaces extinction clipping in the forward model.
    """

    extinction_dB: Any = math.inf
    couplers: Any = None

    def __post_init__(self) -> None:
        er = np.asarray(self.extinction_dB, dtype=float)
        if np.any(np.isnan(er)) or np.any(er <= 0):
            raise ValueError("extinction ratio must be positive (dB) or infinite")
        if self.couplers is not None:
            eta = np.asarray(self.couplers, dtype=float)
            if eta.ndim != 2 or eta.shape[1] != 2:
                raise ValueError("couplers must have shape (units, 2)")
            if np.any(eta <= 0) or np.any(eta >= 1):
                raise ValueError("coupler eta values must lie in (0, 1)")

    @property
    def is_ideal(self) -> bool:
        return self.couplers is None and bool(np.all(np.isinf(self.extinction_dB)))


IDEAL = Imperfections()


def reck_pairs(n: int) -> list[int]:
    """Mode-pair index of each unit, in the order light traverses them."""
    if n < 1:
        raise ValueError("n must be at least 1")
    return [r - 1 for c in range(n - 1) for r in range(n - 1, c, -1)]


def reflectivity_bounds(extinction_dB: float) -> tuple[float, float]:
    """Reachable cross-coupling interval [eps, 1 - eps], eps = 1 / (1 + 10^(ER/10))."""
    er = float(extinction_dB)
    if math.isnan(er) or er <= 0:
        raise ValueError("extinction ratio must be positive (dB) or infinite")
    if math.isinf(er):
        return 0.0, 1.0
    eps = 1.0 / (1.0 + 10.0 ** (er / 10.0))
    return eps, 1.0 - eps


def extinction_to_visibility(extinction_dB: float) -> float:
    """Fringe visibility (Pmax - Pmin)/(Pmax + Pmin) for an extinction ratio in dB."""
    ratio = 10.0 ** (float(extinction_dB) / 10.0)
    return (ratio - 1.0) / (ratio + 1.0)


def visibility_to_extinction(visibility: float) -> float:
    if not 0 < visibility < 1:
        raise ValueError("visibility must lie in (0, 1)")
    return 10.0 * math.log10((1 + visibility) / (1 - visibility))


def coupler(eta: Any) -> np.ndarray:
    eta = np.asarray(eta, dtype=float)
    t = np.sqrt(1 - eta)
    r = np.sqrt(eta)
    return np.stack([np.stack([t, r], -1), np.stack([r, -t], -1)], -2).astype(complex)


def mzi_matrices(theta: Any, phi: Any, eta1: Any = 0.5, eta2: Any = 0.5) -> np.ndarray:
    """Batched MZI transfer matrices, shape broadcast(theta, phi) + (2, 2)."""
    theta, phi, eta1, eta2 = np.broadcast_arrays(
        np.asarray(theta, float), np.asarray(phi, float),
        np.asarray(eta1, float), np.asarray(eta2, float),
    )
    if np.all(eta1 == 0.5) and np.all(eta2 == 0.5):
        c = np.cos(theta / 2)
        s = np.sin(theta / 2)
        g = np.exp(0.5j * theta)
        ep = np.exp(1j * phi)
        out = np.empty(theta.shape + (2, 2), dtype=complex)
        out[..., 0, 0] = g * c * ep
        out[..., 0, 1] = g * 1j * s
        out[..., 1, 0] = g * 1j * s * ep
        out[..., 1, 1] = g * c
        return out
    inner = np.zeros(theta.shape + (2, 2), dtype=complex)
    inner[..., 0, 0] = np.exp(1j * theta)
    inner[..., 1, 1] = 1.0
    ext = np.zeros_like(inner)
    ext[..., 0, 0] = np.exp(1j * phi)
    ext[..., 1, 1] = 1.0
    return coupler(eta2) @ inner @ coupler(eta1) @ ext


def mzi_unitary(setting: MziSetting, couplers: tuple[float, float] | None = None) -> Unitary:
    """2x2 transfer matrix of one MZI; ``couplers`` is (eta1, eta2), default ideal."""
    eta1, eta2 = (0.5, 0.5) if couplers is None else couplers
    if not (0 < eta1 < 1 and 0 < eta2 < 1):
        raise ValueError("coupler eta values must lie in (0, 1)")
    return Unitary(mzi_matrices(setting.theta, setting.phi, eta1, eta2))


def reck_null(w: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Null the sub-diagonal of a batch of unitaries with left-acting MZIs.

    ``w`` has shape (batch, n, n) and is reduced in place to a diagonal.
    Returns (thetas, phis, diag), thetas and phis of shape (batch, units) in
    ``reck_pairs`` order and the remaining diagonal of shape (batch, n).
    Elements already below ``NULL_TOL`` leave their unit in the bar state.
    """
    batch, n, _ = w.shape
    units = n * (n - 1) // 2
    thetas = np.zeros((batch, units))
    phis = np.zeros((batch, units))
    k = 0
    for c in range(n - 1):
        for r in range(n - 1, c, -1):
            x = w[:, r - 1, c]
            y = w[:, r, c]
            ax = np.abs(x)
            ay = np.abs(y)
            live = ay >= NULL_TOL
            th = np.where(live, 2 * np.arctan2(ay, ax), 0.0)
            ph = np.where(live, np.pi / 2 + np.angle(y) - np.angle(x), 0.0)
            ph = np.mod(ph, TWO_PI)
            t = mzi_matrices(th, ph)
            w[:, r - 1 : r + 1, :] = t @ w[:, r - 1 : r + 1, :]
            w[:, r, c] = 0.0
            thetas[:, k] = th
            phis[:, k] = ph
            k += 1
    return thetas, phis, np.diagonal(w, axis1=-2, axis2=-1).copy()


def compile_unitary(u: Any) -> MeshSettings:
    """Reck decomposition of U into MZI settings plus output phases.

    The nulling runs on U^dagger: if T_K ... T_1 U^dagger = D then
    U = D^* T_K ... T_1, which is the mesh with T_1 traversed first and the
    conjugated diagonal as output phases.

    Raises
    ------
    ValueError
        If ``u`` is not unitary within 1e-10.
    """
    m = u.matrix if isinstance(u, Unitary) else Unitary(_as_square(u)).matrix
    n = m.shape[0]
    w = m.conj().T[None, :, :].copy()
    thetas, phis, diag = reck_null(w)
    out = np.mod(-np.angle(diag[0]), TWO_PI)
    units = tuple(
        (p, MziSetting(float(thetas[0, k]), float(phis[0, k])))
        for k, p in enumerate(reck_pairs(n))
    )
    return MeshSettings(n=n, units=units, output_phases=tuple(float(x) for x in out))


def _per_unit(value: Any, count: int) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return np.full(count, float(arr))
    if arr.shape != (count,):
        raise ValueError(f"expected a scalar or {count} per-unit values")
    return arr


def clip_theta(theta: Any, lo: Any, hi: Any) -> np.ndarray:
    """Clip the cross-coupling sin^2(theta/2) into [lo, hi], keeping the branch of theta.

    Thetas already inside the interval are returned bit-for-bit unchanged.
    """
    theta = np.asarray(theta, dtype=float)
    r = np.sin(theta / 2) ** 2
    rc = np.clip(r, lo, hi)
    half = np.arcsin(np.sqrt(rc))
    clipped = np.where(theta <= np.pi, 2 * half, TWO_PI - 2 * half)
    return np.where((r < lo) | (r > hi), clipped, theta)


def clip_settings(settings: MeshSettings, extinction_dB: Any) -> tuple[MeshSettings, bool]:
    """Clip every unit into its reachable reflectivity interval.

    Returns the clipped settings and whether any unit changed.
    """
    k = len(settings.units)
    er = _per_unit(extinction_dB, k)
    bounds = np.array([reflectivity_bounds(e) for e in er]).reshape(k, 2)
    th = settings.thetas
    new = clip_theta(th, bounds[:, 0], bounds[:, 1])
    changed = bool(np.any(new != th))
    units = tuple(
        (p, MziSetting(float(t), s.phi)) for (p, s), t in zip(settings.units, new)
    )
    return MeshSettings(settings.n, units, settings.output_phases), changed


def forward_unitary(settings: MeshSettings, imperfections: Imperfections = IDEAL) -> Unitary:
    """Transfer matrix realized by the mesh under the given imperfections.

    Ideal couplers with extinction clipping unless per-unit coupler values are
    supplied, in which case the asymmetric coupler model is used unclipped.
    """
    n = settings.n
    k = len(settings.units)
    th = settings.thetas
    ph = settings.phis
    if imperfections.couplers is not None:
        eta = np.asarray(imperfections.couplers, dtype=float)
        if eta.shape != (k, 2):
            raise ValueError(f"couplers must have shape ({k}, 2)")
        blocks = mzi_matrices(th, ph, eta[:, 0], eta[:, 1])
    else:
        er = _per_unit(imperfections.extinction_dB, k)
        if not np.all(np.isinf(er)):
            bounds = np.array([reflectivity_bounds(e) for e in er]).reshape(k, 2)
            th = clip_theta(th, bounds[:, 0], bounds[:, 1])
        blocks = mzi_matrices(th, ph)
    m = np.eye(n, dtype=complex)
    for (p, _), t in zip(settings.units, blocks):
        m[p : p + 2, :] = t @ m[p : p + 2, :]
    m = np.exp(1j * np.asarray(settings.output_phases))[:, None] * m
    return Unitary(m)


def nearest_realizable(
    u: Any, imperfections: Imperfections = IDEAL
) -> tuple[MeshSettings, Unitary, float]:
    """Compile U, clip every unit into the reachable interval, and report the damage.

    Returns the clipped settings, the unitary they realize, and its distance
    (up to global phase) from U. The distance is exactly 0 when nothing was
    clipped.
    """
    target = u if isinstance(u, Unitary) else Unitary(u)
    settings = compile_unitary(target)
    clipped, changed = clip_settings(settings, imperfections.extinction_dB)
    if imperfections.couplers is None:
        realized = forward_unitary(clipped)
    else:
        realized = forward_unitary(clipped, imperfections)
    if not changed and imperfections.couplers is None:
        return clipped, realized, 0.0
    return clipped, realized, distance_up_to_global_phase(target.matrix, realized.matrix)


def describe_unitarity_violation(matrix: Any) -> str:
    defect, (i, j) = unitarity_defect(matrix)
    return f"worst entry of U^dagger U - I at ({i}, {j}) with magnitude {defect:.3e}"
