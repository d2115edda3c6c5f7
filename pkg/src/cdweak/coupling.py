"""Measurement model: pointers, coupled joint states, weak values.

The coupling is U = exp(-i g A (x) p) with p the pointer generator. Writing
A = sum_m a_m |a_m><a_m|, the joint state is sum_m c_m |a_m>|phi_m(g)> with
|phi_m(g)> = exp(-i g a_m p)|phi_0>, so everything reduces to translating
the initial pointer state by g * a_m.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import (
    DegeneratePointer,
    DimensionMismatch,
    GridOverflow,
    OrthogonalPostselection,
)
from .qcore import (
    KET0,
    KET_PLUS,
    SX,
    SY,
    SZ,
    HermitianObservable,
    as_observable,
    dag,
    density_matrix,
    hermitize,
    ket,
    projector,
)

EIG_ZERO_TOL = 1e-10
DENOM_TOL = 1e-12
OVERLAP_TOL = 1e-10


class SystemObservable:
    """Hermitian system observable split into its nonzero spectrum and kernel.

    ``values[m]`` and ``vectors[:, m]`` are the nonzero eigenpairs (m = 1..M in
    the usual numbering); ``null_basis`` spans the kernel.
    """

    def __init__(self, matrix, zero_tol: float = EIG_ZERO_TOL):
        self.H = as_observable(matrix)
        w, v = self.H.spectrum
        scale = float(np.max(np.abs(w))) if len(w) else 0.0
        nonzero = np.abs(w) > zero_tol * scale if scale > 0 else np.zeros(len(w), bool)
        self.zero_tol = zero_tol
        self.values = w[nonzero]
        self.vectors = v[:, nonzero]
        self.null_basis = v[:, ~nonzero]

    @classmethod
    def coerce(cls, a) -> "SystemObservable":
        return a if isinstance(a, cls) else cls(a)

    @property
    def dim(self) -> int:
        return self.H.dim

    @property
    def M(self) -> int:
        return len(self.values)

    @property
    def matrix(self) -> np.ndarray:
        return self.H.matrix

    @property
    def has_kernel(self) -> bool:
        return self.null_basis.shape[1] > 0

    @property
    def null_projector(self) -> np.ndarray:
        return self.null_basis @ dag(self.null_basis)

    @property
    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values))) if self.M else 0.0

    def distinct_values(self) -> np.ndarray:
        """Sorted distinct nonzero eigenvalues (degenerate ones merged)."""
        out = []
        tol = 1e-9 * max(1.0, self.max_abs)
        for a in self.values:
            if not out or a - out[-1] > tol:
                out.append(a)
        return np.array(out, dtype=float)

    def eigenspace(self, value: float) -> np.ndarray:
        """Columns spanning the eigenspace of ``value`` (0 gives the kernel)."""
        if value == 0:
            return self.null_basis
        tol = 1e-9 * max(1.0, self.max_abs)
        return self.vectors[:, np.abs(self.values - value) <= tol]

    def full_basis(self) -> tuple[np.ndarray, np.ndarray]:
        """(eigenvalue per column, unitary) with kernel columns carrying 0."""
        vals = np.concatenate([np.zeros(self.null_basis.shape[1]), self.values])
        return vals, np.hstack([self.null_basis, self.vectors])

    @property
    def is_projector(self) -> bool:
        return self.M > 0 and bool(np.allclose(self.values, 1.0, atol=1e-9))

    def __repr__(self):
        return f"SystemObservable(dim={self.dim}, nonzero={np.round(self.values, 6).tolist()})"


# -- pointers ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class QubitPointer:
    """Two-level pointer with generator p -> sigma_x (reference q -> sigma_y)."""

    phi0: np.ndarray = field(default_factory=lambda: KET0.copy())

    kind = "qubit"

    def __post_init__(self):
        object.__setattr__(self, "phi0", ket(self.phi0, normalize=True))
        if self.phi0.shape != (2,):
            raise DimensionMismatch("qubit pointer state must have dimension 2")

    @property
    def dim(self) -> int:
        return 2

    @cached_property
    def generator(self) -> HermitianObservable:
        return HermitianObservable(SX, label="sigma_x")

    @cached_property
    def position(self) -> HermitianObservable:
        return HermitianObservable(SY, label="sigma_y")

    @property
    def momentum(self) -> HermitianObservable:
        return self.generator

    def reference(self, channel: str) -> HermitianObservable:
        return self.position if channel == "re" else self.momentum

    def translate(self, state: np.ndarray, shift: float) -> np.ndarray:
        # exp(-i shift sigma_x) = cos(shift) I - i sin(shift) sigma_x
        return np.cos(shift) * state - 1j * np.sin(shift) * (SX @ state)

    def check_shift(self, shift: float) -> None:
        pass


def gaussian_wavefunction(q: np.ndarray, delta: float, center: float = 0.0,
                          momentum: float = 0.0) -> np.ndarray:
    psi = np.exp(-((q - center) ** 2) / (4 * delta**2) + 1j * momentum * q)
    return psi / np.linalg.norm(psi)


@dataclass(frozen=True, eq=False)
class GridPointer:
    """Continuous-variable pointer sampled on a periodic position grid.

    The grid is q_j = -L + j*dq (j < points, dq = 2L/points). Momentum acts
    spectrally, so translations exp(-i s p) are exact phase multiplications
    in the Fourier domain. ``phi0`` defaults to the Gaussian of width
    ``delta``; kets are normalized in the discrete 2-norm.
    """

    delta: float
    points: int = 1024
    extent: float | None = None
    phi0: np.ndarray | None = None

    kind = "grid"

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        n = int(self.points)
        if n < 8 or n & (n - 1):
            raise ValueError("grid_points must be a power of two")
        L = 10.0 * self.delta if self.extent is None else float(self.extent)
        if L < 10.0 * self.delta * (1 - 1e-12):
            raise ValueError("grid extent must be at least 10 * delta")
        if 2 * L / n > self.delta / 8 * (1 + 1e-12):
            raise ValueError("grid spacing must not exceed delta / 8")
        object.__setattr__(self, "points", n)
        object.__setattr__(self, "extent", L)
        q = -L + (2 * L / n) * np.arange(n)
        if self.phi0 is None:
            phi0 = gaussian_wavefunction(q, self.delta)
        else:
            phi0 = np.asarray(self.phi0, dtype=complex)
            if phi0.shape != (n,):
                raise DimensionMismatch("phi0 must be sampled on the grid")
            phi0 = ket(phi0, normalize=True)
        object.__setattr__(self, "phi0", phi0)

    @classmethod
    def for_strength(cls, delta: float, g: float, max_abs_a: float, points: int = 1024,
                     phi0=None) -> "GridPointer":
        """Grid wide enough for shifts up to g * max|a_m| (L = max(10, 6 + g max|a|/delta) * delta)."""
        L = max(10.0 * delta, 6.0 * delta + abs(g) * max_abs_a)
        return cls(delta=delta, points=points, extent=L, phi0=phi0)

    @property
    def dim(self) -> int:
        return self.points

    @property
    def dq(self) -> float:
        return 2 * self.extent / self.points

    @cached_property
    def q(self) -> np.ndarray:
        return -self.extent + self.dq * np.arange(self.points)

    @cached_property
    def k(self) -> np.ndarray:
        return 2 * np.pi * np.fft.fftfreq(self.points, d=self.dq)

    @cached_property
    def position(self) -> HermitianObservable:
        return HermitianObservable(np.diag(self.q).astype(complex), label="q")

    @cached_property
    def momentum(self) -> HermitianObservable:
        eye = np.eye(self.points, dtype=complex)
        p = np.fft.ifft(self.k[:, None] * np.fft.fft(eye, axis=0), axis=0)
        return HermitianObservable(hermitize(p), label="p")

    @property
    def generator(self) -> HermitianObservable:
        return self.momentum

    def reference(self, channel: str) -> HermitianObservable:
        return self.position if channel == "re" else self.momentum

    def apply_momentum(self, state: np.ndarray) -> np.ndarray:
        return np.fft.ifft(self.k * np.fft.fft(state))

    def translate(self, state: np.ndarray, shift: float) -> np.ndarray:
        if shift == 0:
            return np.array(state, dtype=complex)
        return np.fft.ifft(np.exp(-1j * shift * self.k) * np.fft.fft(state))

    def check_shift(self, shift: float) -> None:
        if abs(shift) + 6 * self.delta > self.extent:
            raise GridOverflow(
                f"shift {shift:.4g} + 6*delta exceeds the grid half-width {self.extent:.4g}"
            )

    def momentum_wavefunction(self, state: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
        """(sorted momenta, amplitudes) of the centred unitary DFT of ``state``."""
        state = self.phi0 if state is None else state
        amp = np.exp(-1j * self.k * self.q[0]) * np.fft.fft(state) / np.sqrt(self.points)
        order = np.argsort(self.k, kind="stable")
        return self.k[order], amp[order]


Pointer = QubitPointer | GridPointer


# -- setups and pointer-state families ---------------------------------------


@dataclass(frozen=True, eq=False)
class CouplingSetup:
    """System observable, pointer, input state and rank-1 post-selection."""

    g: float
    A: SystemObservable
    pointer: Pointer
    rho_in: np.ndarray
    psi_f: np.ndarray

    def __post_init__(self):
        if not np.isfinite(self.g):
            raise ValueError("coupling strength must be finite")
        object.__setattr__(self, "g", float(self.g))
        object.__setattr__(self, "A", SystemObservable.coerce(self.A))
        object.__setattr__(self, "rho_in", density_matrix(self.rho_in))
        object.__setattr__(self, "psi_f", ket(self.psi_f, normalize=True))
        d = self.A.dim
        if self.rho_in.shape != (d, d) or self.psi_f.shape != (d,):
            raise DimensionMismatch("observable, input state and post-selection dims differ")
        if self.pointer.dim < 2:
            raise ValueError("pointer Hilbert space must have dimension >= 2")

    @property
    def dim(self) -> int:
        return self.A.dim

    @property
    def Pi_f(self) -> np.ndarray:
        return projector(self.psi_f)

    def with_g(self, g: float) -> "CouplingSetup":
        return CouplingSetup(g, self.A, self.pointer, self.rho_in, self.psi_f)

    def with_postselection(self, psi_f) -> "CouplingSetup":
        return CouplingSetup(self.g, self.A, self.pointer, self.rho_in, psi_f)

    def with_state(self, rho_in) -> "CouplingSetup":
        return CouplingSetup(self.g, self.A, self.pointer, rho_in, self.psi_f)


@dataclass(frozen=True, eq=False)
class PointerStateFamily:
    """Pointer states exp(-i g a p)|phi_0>, one column per branch value a."""

    g: float
    values: np.ndarray
    states: np.ndarray
    pointer: Pointer

    def __len__(self):
        return len(self.values)

    def __getitem__(self, m: int) -> np.ndarray:
        return self.states[:, m]


def make_family(pointer: Pointer, g: float, values) -> PointerStateFamily:
    values = np.asarray(values, dtype=float)
    for a in values:
        pointer.check_shift(g * a)
    cols = [pointer.translate(pointer.phi0, g * a) for a in values]
    states = np.stack(cols, axis=1) if cols else np.zeros((pointer.dim, 0), complex)
    return PointerStateFamily(float(g), values, states, pointer)


def pointer_states(setup: CouplingSetup) -> PointerStateFamily:
    """Full family: index 0 is the unshifted null branch, then one state per
    nonzero eigenvector of A (degenerate eigenvalues repeat)."""
    values = np.concatenate([[0.0], setup.A.values])
    fam = make_family(setup.pointer, setup.g, values)
    fam.states[:, 0] = setup.pointer.phi0
    return fam


def postselection_overlaps_kernel(A: SystemObservable, psi_f: np.ndarray) -> bool:
    return A.has_kernel and np.linalg.norm(dag(A.null_basis) @ psi_f) > OVERLAP_TOL


def relevant_family(setup: CouplingSetup) -> PointerStateFamily:
    """Distinct branches that enter <Pi_f (x) s>: every distinct nonzero
    eigenvalue, plus the null branch when psi_f has a kernel component."""
    vals = list(setup.A.distinct_values())
    if postselection_overlaps_kernel(setup.A, setup.psi_f):
        vals = [0.0] + vals
    return make_family(setup.pointer, setup.g, vals)


# -- joint state and expectations --------------------------------------------


def _pure_decomposition(rho: np.ndarray, tol: float = 1e-14):
    w, v = np.linalg.eigh(rho)
    keep = w > tol
    return w[keep], v[:, keep]


def _branch_states(setup: CouplingSetup) -> tuple[np.ndarray, np.ndarray]:
    """(system eigenbasis E, pointer states Phi) with Phi[:, j] paired to E[:, j]."""
    vals, E = setup.A.full_basis()
    ptr = setup.pointer
    cache = {}
    cols = []
    for a in vals:
        key = float(a)
        if key not in cache:
            ptr.check_shift(setup.g * a)
            cache[key] = ptr.phi0.copy() if a == 0 else ptr.translate(ptr.phi0, setup.g * a)
        cols.append(cache[key])
    return E, np.stack(cols, axis=1)


def joint_kets(setup: CouplingSetup) -> tuple[np.ndarray, np.ndarray]:
    """Pure-state decomposition of the coupled state.

    Returns ``(weights, X)`` with ``X[w]`` the (system_dim, pointer_dim)
    amplitude array of U (|v_w> (x) |phi_0>).
    """
    weights, vecs = _pure_decomposition(setup.rho_in)
    E, Phi = _branch_states(setup)
    coeffs = dag(E) @ vecs  # (d, n_pure)
    X = np.einsum("ij,jw,aj->wia", E, coeffs, Phi, optimize=True)
    return weights, X


def joint_state(setup: CouplingSetup) -> np.ndarray:
    """U (rho_in (x) |phi_0><phi_0|) U^+ as a dense matrix on system (x) pointer."""
    weights, X = joint_kets(setup)
    flat = X.reshape(len(weights), -1)
    return hermitize((flat.T * weights) @ np.conj(flat))


def postselected_pointer_states(setup: CouplingSetup, psi=None) -> tuple[np.ndarray, np.ndarray]:
    """Unnormalized pointer states (<psi| (x) I) U|v_w>|phi_0> per pure component."""
    psi = setup.psi_f if psi is None else psi
    weights, X = joint_kets(setup)
    chi = np.einsum("i,wia->wa", np.conj(psi), X)
    return weights, chi


def _matrix(s) -> np.ndarray:
    return s.matrix if isinstance(s, HermitianObservable) else np.asarray(s, dtype=complex)


def joint_expectation(setup: CouplingSetup, s, method: str = "direct",
                      null_reference: str = "postselection") -> float:
    """<Pi_f (x) s> in the coupled state.

    ``method="direct"`` evaluates the trace against the coupled state;
    ``method="qsum"`` uses the Q-matrix expansion over the eigenbasis of A
    (with the null branch represented by the kernel component of psi_f, or of
    psi_in for pure inputs when ``null_reference="input"``).
    """
    sm = _matrix(s)
    if sm.shape != (setup.pointer.dim, setup.pointer.dim):
        raise DimensionMismatch("pointer observable has the wrong dimension")
    if method == "direct":
        weights, chi = postselected_pointer_states(setup)
        vals = np.sum(np.conj(chi) * (chi @ sm.T), axis=1)
        return float(np.sum(weights * vals.real))
    if method == "qsum":
        return _qsum_expectation(setup, sm, null_reference)
    raise ValueError(f"unknown method {method!r}")


def _null_reference_ket(setup: CouplingSetup, which: str) -> np.ndarray | None:
    A = setup.A
    if not A.has_kernel:
        return None
    if which == "postselection":
        src = setup.psi_f
    elif which == "input":
        w, v = np.linalg.eigh(setup.rho_in)
        if w[-1] < 1 - 1e-10:
            raise ValueError("null_reference='input' needs a pure input state")
        src = v[:, -1]
    else:
        raise ValueError(f"unknown null reference {which!r}")
    comp = A.null_basis @ (dag(A.null_basis) @ src)
    n = np.linalg.norm(comp)
    if n <= OVERLAP_TOL:
        # branch has zero weight; any kernel vector will do
        return A.null_basis[:, 0]
    return comp / n


def _qsum_expectation(setup: CouplingSetup, sm: np.ndarray, which: str) -> float:
    fam = pointer_states(setup)
    a0 = _null_reference_ket(setup, which)
    basis = setup.A.vectors
    states = fam.states[:, 1:]
    if a0 is not None:
        basis = np.column_stack([a0, basis])
        states = fam.states
    rho = dag(basis) @ setup.rho_in @ basis  # rho[m, n] = <a_m|rho|a_n>
    pi = dag(basis) @ setup.Pi_f @ basis
    gq = dag(states) @ sm @ states  # g * Q[n, m]
    # sum_{m,n} rho_mn Pi_nm (g Q)_nm
    return float(np.sum(rho * pi.T * gq.T).real)


def postselection_probability(setup: CouplingSetup) -> float:
    weights, chi = postselected_pointer_states(setup)
    return float(np.sum(weights * np.sum(np.abs(chi) ** 2, axis=1)))


def conditional_average(setup: CouplingSetup, s) -> float:
    """<s>_f = <Pi_f (x) s> / P_f."""
    p = postselection_probability(setup)
    if p <= DENOM_TOL:
        raise OrthogonalPostselection("post-selection probability vanishes")
    return joint_expectation(setup, s) / p


def weak_value_numerator(A, rho_in, psi_f) -> complex:
    """tr(Pi_f A rho_in) = <psi_f|A rho_in|psi_f>."""
    A = SystemObservable.coerce(A)
    psi_f = np.asarray(psi_f, dtype=complex)
    return complex(np.vdot(psi_f, A.matrix @ np.asarray(rho_in) @ psi_f))


def weak_value(A, rho_in, psi_f) -> complex:
    psi_f = np.asarray(psi_f, dtype=complex)
    den = float(np.vdot(psi_f, np.asarray(rho_in) @ psi_f).real)
    if den <= DENOM_TOL:
        raise OrthogonalPostselection(
            f"tr(Pi_f rho_in) = {den:.3g}: the weak value diverges"
        )
    return weak_value_numerator(A, rho_in, psi_f) / den


def pointer_moments(pointer: Pointer, q=None, p=None) -> dict:
    """Initial-state moments the weak-limit formulas divide by."""
    phi = pointer.phi0
    q_phi = _matrix(pointer.position if q is None else q) @ phi
    p_phi = _matrix(pointer.generator if p is None else p) @ phi
    qp = np.vdot(q_phi, p_phi)  # <q p>, both Hermitian
    pq = np.vdot(p_phi, q_phi)
    return {
        "q": complex(np.vdot(phi, q_phi)),
        "p": complex(np.vdot(phi, p_phi)),
        "qp_commutator": complex(qp - pq),
        "qp_anticommutator": complex(qp + pq),
        "pp_anticommutator": complex(2 * np.vdot(p_phi, p_phi)),
    }


def weak_limit_estimate(setup: CouplingSetup, exp_q: float, exp_p: float,
                        q=None, p=None) -> complex:
    """First-order estimate of tr(Pi_f A rho_in) from <Pi_f (x) q> and <Pi_f (x) p>.

    Biased at finite g; the bias only vanishes as g -> 0.
    """
    if not setup.g > 0:
        raise ValueError("weak-limit estimate needs g > 0")
    mom = pointer_moments(setup.pointer, q, p)
    comm, anti = mom["qp_commutator"], mom["pp_anticommutator"]
    if abs(comm) < 1e-12 or abs(anti) < 1e-12:
        raise DegeneratePointer("pointer commutator moment vanishes")
    re = (1j * exp_q / (setup.g * comm)).real
    im = (exp_p / (setup.g * anti)).real
    return complex(re, im)


def qubit_projector_setup(g: float, rho_in=None, psi_f=None, pointer=None) -> CouplingSetup:
    """Qubit system, A = |0><0|, qubit pointer in |0> coupled through sigma_x.

    Defaults: a generic mixed input state and post-selection on |+>.
    """
    if rho_in is None:
        rho_in = np.array([[0.62, 0.21 - 0.17j], [0.21 + 0.17j, 0.38]], dtype=complex)
    psi_f = KET_PLUS if psi_f is None else psi_f
    A = np.diag([1.0, 0.0]).astype(complex)
    return CouplingSetup(g, SystemObservable(A), pointer or QubitPointer(), rho_in, psi_f)


PAULI = {"sigma_x": SX, "sigma_y": SY, "sigma_z": SZ}
