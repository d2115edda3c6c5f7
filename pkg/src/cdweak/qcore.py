"""Dense complex linear algebra shared by the rest of the package.

Operators and states are plain ``numpy`` arrays (complex128). Kets are 1-D
arrays, operators and density matrices are 2-D. ``HermitianObservable`` is the
one wrapper type: it validates Hermiticity once and caches a deterministic
spectral decomposition.
"""

from __future__ import annotations

import threading

import numpy as np
import scipy.linalg

from .errors import DimensionMismatch, NotHermitian

# input validation is looser than the tolerance for objects we build ourselves
HERMITIAN_INPUT_TOL = 1e-9
HERMITIAN_TOL = 1e-12
NORM_TOL = 1e-12
DEGENERACY_RTOL = 1e-9

I2 = np.eye(2, dtype=complex)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)

KET0 = np.array([1, 0], dtype=complex)
KET1 = np.array([0, 1], dtype=complex)
KET_PLUS = np.array([1, 1], dtype=complex) / np.sqrt(2)
KET_MINUS = np.array([1, -1], dtype=complex) / np.sqrt(2)


def dag(m: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(m, -1, -2))


def hermitize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + dag(m))


def hermiticity_error(m: np.ndarray) -> float:
    return float(np.max(np.abs(m - dag(m)))) if m.size else 0.0


def ket(v, normalize: bool = False) -> np.ndarray:
    """Return ``v`` as a complex ket, checking (or enforcing) unit norm."""
    v = np.asarray(v, dtype=complex).reshape(-1)
    if not np.all(np.isfinite(v)):
        raise ValueError("ket has non-finite amplitudes")
    n = np.linalg.norm(v)
    if normalize:
        if n == 0:
            raise ValueError("cannot normalize the zero vector")
        return v / n
    if abs(n - 1.0) > NORM_TOL:
        raise ValueError(f"ket is not normalized (norm={n!r})")
    return v


def projector(v) -> np.ndarray:
    v = np.asarray(v, dtype=complex).reshape(-1)
    return np.outer(v, np.conj(v))


def density_matrix(m, tol: float = HERMITIAN_INPUT_TOL) -> np.ndarray:
    """Validate ``m`` as a density matrix and return a Hermitized copy."""
    m = np.asarray(m, dtype=complex)
    if m.ndim == 1:
        return projector(ket(m, normalize=True))
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"density matrix must be square, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("density matrix has non-finite entries")
    if hermiticity_error(m) > tol:
        raise NotHermitian("density matrix is not Hermitian")
    m = hermitize(m)
    tr = np.trace(m).real
    if abs(tr - 1.0) > tol:
        raise ValueError(f"density matrix trace is {tr!r}, expected 1")
    if np.linalg.eigvalsh(m).min() < -1e-10:
        raise ValueError("density matrix has negative eigenvalues")
    return m


def is_pure(rho: np.ndarray, tol: float = 1e-10) -> bool:
    return abs(np.trace(rho @ rho).real - 1.0) < tol


def _fix_phase(v: np.ndarray) -> np.ndarray:
    # largest-magnitude component made real positive; ties go to the lower index
    mags = np.abs(v)
    idx = int(np.argmax(mags >= mags.max() - 1e-12))
    return v * (np.conj(v[idx]) / mags[idx])


def _canonical_eigh(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    w, v = np.linalg.eigh(m)
    v = v.astype(complex, copy=True)
    n = len(w)
    tol = DEGENERACY_RTOL * max(1.0, float(np.max(np.abs(w))) if n else 1.0)
    start = 0
    while start < n:
        stop = start + 1
        while stop < n and w[stop] - w[stop - 1] <= tol:
            stop += 1
        if stop - start == 1:
            v[:, start] = _fix_phase(v[:, start])
        else:
            # basis of a degenerate eigenspace: pivoted Gram-Schmidt on the
            # columns of its projector, so the result is independent of
            # whichever basis LAPACK happened to return
            k = stop - start
            block = v[:, start:stop]
            proj = block @ dag(block)
            q, _, _ = scipy.linalg.qr(proj, pivoting=True)
            for j in range(k):
                v[:, start + j] = _fix_phase(q[:, j])
        start = stop
    return w, v


class HermitianObservable:
    """A Hermitian operator with a lazily computed, cached spectrum.

    The matrix is validated against ``tol`` and then stored exactly Hermitian.
    """

    def __init__(self, matrix, label: str | None = None, tol: float = HERMITIAN_INPUT_TOL,
                 validate: bool = True):
        m = np.array(matrix, dtype=complex)
        self.label = label
        self._spectrum = None
        self._lock = threading.Lock()
        if not validate:
            # caller guarantees Hermiticity (e.g. U X U^+ with X exactly Hermitian)
            self.matrix = m
            self.matrix.setflags(write=False)
            return
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionMismatch(f"observable must be square, got shape {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ValueError("observable has non-finite entries")
        err = hermiticity_error(m)
        if err > tol:
            raise NotHermitian(f"matrix is not Hermitian (max |H - H^+| = {err:.3g})")
        self.matrix = hermitize(m)
        self.matrix.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def spectrum(self) -> tuple[np.ndarray, np.ndarray]:
        if self._spectrum is None:
            with self._lock:
                if self._spectrum is None:
                    w, v = _canonical_eigh(self.matrix)
                    w.setflags(write=False)
                    v.setflags(write=False)
                    self._spectrum = (w, v)
        return self._spectrum

    @property
    def eigenvalues(self) -> np.ndarray:
        return self.spectrum[0]

    @property
    def eigenvectors(self) -> np.ndarray:
        return self.spectrum[1]

    def expectation(self, state: np.ndarray) -> float:
        """<psi|H|psi> for a ket, tr(H rho) for a density matrix."""
        if state.ndim == 1:
            return float(np.vdot(state, self.matrix @ state).real)
        return float(np.trace(self.matrix @ state).real)

    def __matmul__(self, other):
        return self.matrix @ other

    def __repr__(self):
        name = self.label or "HermitianObservable"
        return f"<{name} dim={self.dim}>"


def as_observable(h, label: str | None = None) -> HermitianObservable:
    if isinstance(h, HermitianObservable):
        return h
    return HermitianObservable(h, label=label)


def eigh(h) -> tuple[np.ndarray, np.ndarray]:
    """Ascending eigenvalues and eigenvector columns of a Hermitian operator.

    Degenerate eigenspaces get a reproducible orthonormal basis and every
    eigenvector has its largest component real and positive.
    """
    return as_observable(h).spectrum


def expm_unitary(h, theta: float) -> np.ndarray:
    """exp(-i theta H) through the spectral decomposition of H."""
    w, v = eigh(h)
    return (v * np.exp(-1j * theta * w)) @ dag(v)


def tensor(a, b) -> np.ndarray:
    return np.kron(np.asarray(a, dtype=complex), np.asarray(b, dtype=complex))


def trace_distance(rho, sigma) -> float:
    rho = np.asarray(rho, dtype=complex)
    sigma = np.asarray(sigma, dtype=complex)
    if rho.shape != sigma.shape:
        raise DimensionMismatch(f"shapes differ: {rho.shape} vs {sigma.shape}")
    w = np.linalg.eigvalsh(hermitize(rho - sigma))
    return float(min(1.0, 0.5 * np.sum(np.abs(w))))


def random_ket(d: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.normal(size=d) + 1j * rng.normal(size=d)
    return v / np.linalg.norm(v)


def random_hermitian(d: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    x = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return scale * hermitize(x)


def random_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    x = (rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(x)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_density(d: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    """Random mixed state of the given rank (full rank by default)."""
    rank = d if rank is None else rank
    x = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    rho = x @ dag(x)
    return hermitize(rho / np.trace(rho).real)
