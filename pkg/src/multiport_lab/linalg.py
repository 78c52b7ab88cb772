"""Dense complex linear algebra for path-encoded two-quNit systems.

Unitaries and bipartite state vectors are thin immutable wrappers around
numpy arrays. Modes are 0-based throughout.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np

UNITARY_TOL = 1e-10
NORM_TOL = 1e-10


def _as_square(matrix: Any) -> np.ndarray:
    m = np.asarray(matrix, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    return m


def unitarity_defect(matrix: Any) -> tuple[float, tuple[int, int]]:
    """Return the max-abs entry of M^dagger M - I and its (row, col) index."""
    m = _as_square(matrix)
    gram = m.conj().T @ m - np.eye(m.shape[0])
    idx = np.unravel_index(int(np.argmax(np.abs(gram))), gram.shape)
    return float(np.abs(gram[idx])), (int(idx[0]), int(idx[1]))


def is_unitary(matrix: Any, tol: float = UNITARY_TOL) -> bool:
    """Check ``max |M^dagger M - I| <= tol``.

    Raises
    ------
    ValueError
        If the input is not square or ``tol`` is not positive.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    defect, _ = unitarity_defect(matrix)
    return defect <= tol


@dataclass(frozen=True, eq=False)
class Unitary:
    """An n x n unitary matrix, checked at construction."""

    matrix: np.ndarray

    def __post_init__(self) -> None:
        m = _as_square(self.matrix).copy()
        if m.shape[0] < 1:
            raise ValueError("dimension must be at least 1")
        defect, (i, j) = unitarity_defect(m)
        if not defect <= UNITARY_TOL:
            raise ValueError(
                f"matrix is not unitary: |(U^dagger U - I)[{i},{j}]| = {defect:.3e}"
            )
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def dagger(self) -> Unitary:
        return Unitary(self.matrix.conj().T)

    def __matmul__(self, other: Unitary) -> Unitary:
        return Unitary(self.matrix @ other.matrix)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.matrix, dtype=dtype)

    def to_json(self) -> dict:
        return matrix_to_json(self.matrix)

    @classmethod
    def from_json(cls, doc: dict) -> Unitary:
        return cls(matrix_from_json(doc))


def matrix_to_json(matrix: Any) -> dict:
    """Row-major ``[re, im]`` pairs plus ``n``."""
    m = _as_square(matrix)
    return {
        "n": int(m.shape[0]),
        "entries": [[[float(z.real), float(z.imag)] for z in row] for row in m],
    }


def matrix_from_json(doc: dict) -> np.ndarray:
    try:
        n = int(doc["n"])
        entries = doc["entries"]
    except (KeyError, TypeError) as exc:
        raise ValueError("matrix document needs 'n' and 'entries'") from exc
    arr = np.asarray(entries, dtype=float)
    if arr.shape != (n, n, 2):
        raise ValueError(f"entries must have shape ({n}, {n}, 2), got {arr.shape}")
    return arr[..., 0] + 1j * arr[..., 1]


@dataclass(frozen=True, eq=False)
class StateVector:
    """Normalized amplitudes over the bipartite basis |k_A k_B>.

    ``amplitudes[k_A * dims[1] + k_B]`` is the coefficient of |k_A k_B>.
    """

    dims: tuple[int, int]
    amplitudes: np.ndarray

    def __post_init__(self) -> None:
        na, nb = (int(d) for d in self.dims)
        if na < 1 or nb < 1:
            raise ValueError("mode counts must be positive")
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1).copy()
        if amps.size != na * nb:
            raise ValueError(f"expected {na * nb} amplitudes, got {amps.size}")
        norm = float(np.vdot(amps, amps).real)
        if abs(norm - 1.0) > NORM_TOL:
            raise ValueError(f"state is not normalized (norm^2 = {norm!r})")
        amps.setflags(write=False)
        object.__setattr__(self, "dims", (na, nb))
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def from_unnormalized(cls, dims: tuple[int, int], amplitudes: Any) -> StateVector:
        amps = np.asarray(amplitudes, dtype=complex).reshape(-1)
        norm = np.linalg.norm(amps)
        if norm == 0:
            raise ValueError("cannot normalize the zero vector")
        return cls(dims, amps / norm)

    @classmethod
    def basis(cls, dims: tuple[int, int], ka: int, kb: int) -> StateVector:
        amps = np.zeros(dims[0] * dims[1], dtype=complex)
        amps[ka * dims[1] + kb] = 1.0
        return cls(dims, amps)

    def as_matrix(self) -> np.ndarray:
        """Coefficient matrix C with C[k_A, k_B] = <k_A k_B|psi>."""
        return self.amplitudes.reshape(self.dims)

    def transformed(self, u_a: Unitary, u_b: Unitary) -> StateVector:
        """Apply U_A (x) U_B."""
        if (u_a.n, u_b.n) != self.dims:
            raise ValueError("unitary dimensions do not match the state")
        c = u_a.matrix @ self.as_matrix() @ u_b.matrix.T
        return StateVector(self.dims, c.reshape(-1))


def haar_random_unitaries(n: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``count`` Haar-distributed n x n unitaries, shape (count, n, n).

    QR of a complex Ginibre matrix, with the columns rephased by the phases of
    diag(R) so that the result is exactly Haar (Mezzadri's correction).
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    z = (rng.standard_normal((count, n, n)) + 1j * rng.standard_normal((count, n, n))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r, axis1=-2, axis2=-1)
    return q * (d / np.abs(d))[:, None, :]


def haar_random_unitary(n: int, seed: int) -> Unitary:
    rng = np.random.default_rng(seed)
    return Unitary(haar_random_unitaries(n, 1, rng)[0])


def dft_matrix(n: int) -> Unitary:
    """Discrete Fourier transform, entry (j, k) = exp(2 pi i j k / n) / sqrt(n).

    This is the n-port generalization of the balanced beam splitter
    (the "Bellport").
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    jk = np.outer(np.arange(n), np.arange(n)) % n
    return Unitary(np.exp(2j * np.pi * jk / n) / np.sqrt(n))


def fidelity(psi: StateVector, phi: StateVector) -> float:
    """|<psi|phi>|^2 for pure states."""
    if psi.dims != phi.dims:
        raise ValueError(f"dimension mismatch: {psi.dims} vs {phi.dims}")
    overlap = np.vdot(psi.amplitudes, phi.amplitudes)
    return float(min(1.0, abs(overlap) ** 2))


def schmidt_coefficients(psi: StateVector) -> np.ndarray:
    """Squared Schmidt coefficients (eigenvalues of the reduced state), descending."""
    s = np.linalg.svd(psi.as_matrix(), compute_uv=False)
    return s**2


def entanglement_entropy(psi: StateVector) -> float:
    """Entanglement entropy in e-bits (base-2 von Neumann entropy of rho_A)."""
    p = schmidt_coefficients(psi)
    p = p[p > 1e-15]
    return float(max(0.0, -np.sum(p * np.log2(p))))


def distance_up_to_global_phase(u: Any, v: Any) -> float:
    """Max-abs entry of U - cV with the global phase c aligned.

    c is the phase of tr(V^dagger U); when that trace is below 1e-12 in
    magnitude, the phase of the largest-magnitude entry of V^dagger U is
    used instead.
    """
    a = _as_square(u)
    b = _as_square(v)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    overlap = b.conj().T @ a
    tr = np.trace(overlap)
    if abs(tr) >= 1e-12:
        c = tr / abs(tr)
    else:
        flat = overlap.reshape(-1)
        z = flat[int(np.argmax(np.abs(flat)))]
        c = z / abs(z) if abs(z) > 0 else 1.0
    return float(np.max(np.abs(a - c * b)))
