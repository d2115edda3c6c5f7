"""Q matrices, S matrices and coupling-deformed (CD) pointer observables.

For a pointer-state family {|phi_m(g)>} the Q matrix of a pointer observable
s is Q_nm(g, s) = <phi_n(g)|s|phi_m(g)> / g. A CD observable s(g) is any
pointer observable with Q(g, s(g)) = eta * Q(0, s); reading it at strength g
gives exactly what reading s gives in the weak limit, up to the factor eta.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .coupling import (
    CouplingSetup,
    GridPointer,
    Pointer,
    PointerStateFamily,
    QubitPointer,
    SystemObservable,
    joint_expectation,
    make_family,
    pointer_moments,
    relevant_family,
    weak_value_numerator,
)
from .errors import (
    BiasedPointer,
    CDWeakError,
    DegenerateChannel,
    DimensionMismatch,
    LinearlyDependentFamily,
    NotTwoLevel,
    NullObservableOnPostselection,
    ZeroStrength,
)
from .qcore import HermitianObservable, dag, hermiticity_error, hermitize, projector

RANK_TOL = 1e-10
PROPORTIONALITY_TOL = 1e-9
HERMITIZATION_TOL = 1e-10
CHANNELS = ("re", "im")


def _matrix(s) -> np.ndarray:
    return s.matrix if isinstance(s, HermitianObservable) else np.asarray(s, dtype=complex)


def _label(s) -> str | None:
    return s.label if isinstance(s, HermitianObservable) else None


@dataclass(frozen=True, eq=False)
class QMatrix:
    g: float
    s_label: str | None
    entries: np.ndarray
    values: np.ndarray

    def is_hermitian(self, tol: float = 1e-10) -> bool:
        return hermiticity_error(self.entries) <= tol


def q_matrix(g: float, s, family: PointerStateFamily) -> QMatrix:
    """Q_nm = <phi_n(g)|s|phi_m(g)> / g over the family."""
    if g == 0:
        raise ZeroStrength("use q_matrix_weak_limit for g = 0")
    sm = _matrix(s)
    phi = family.states
    if sm.shape[0] != phi.shape[0]:
        raise DimensionMismatch("observable and pointer states live in different spaces")
    entries = hermitize(dag(phi) @ sm @ phi) / g
    return QMatrix(float(g), _label(s), entries, np.asarray(family.values))


def q_matrix_weak_limit(s, A, pointer: Pointer, p=None, tol: float = 1e-10) -> QMatrix:
    """g -> 0 limit: Q_nm = i a_n <phi_0|p s|phi_0> - i a_m <phi_0|s p|phi_0>.

    ``A`` is a SystemObservable (branches ordered null first, as in
    ``pointer_states``) or an explicit sequence of branch values.
    """
    if isinstance(A, SystemObservable):
        values = np.concatenate([[0.0], A.values])
    else:
        values = np.asarray(A, dtype=float)
    sm = _matrix(s)
    pm = _matrix(pointer.generator if p is None else p)
    phi = pointer.phi0
    s_phi, p_phi = sm @ phi, pm @ phi
    s0 = np.vdot(phi, s_phi)
    if abs(s0) > tol:
        raise BiasedPointer(f"initial pointer reading <phi_0|s|phi_0> = {s0:.3g} is not zero")
    ps = np.vdot(p_phi, s_phi)  # <phi_0|p s|phi_0>
    sp = np.vdot(s_phi, p_phi)  # <phi_0|s p|phi_0>
    entries = 1j * values[:, None] * ps - 1j * values[None, :] * sp
    return QMatrix(0.0, _label(s), hermitize(entries), values)


@dataclass(frozen=True, eq=False)
class SMatrix:
    """Overlaps S_um = <u|phi_m(g)> with an orthonormal basis {|u>} of the family span."""

    basis: np.ndarray
    entries: np.ndarray
    condition_number: float


def _gram_schmidt(vectors: np.ndarray) -> np.ndarray:
    out = np.zeros_like(vectors)
    for k in range(vectors.shape[1]):
        v = vectors[:, k].copy()
        for _ in range(2):  # second pass restores orthogonality for near-parallel inputs
            v -= out[:, :k] @ (dag(out[:, :k]) @ v)
        out[:, k] = v / np.linalg.norm(v)
    return out


def s_matrix(family: PointerStateFamily, order=None, basis=None,
             rank_tol: float = RANK_TOL) -> SMatrix:
    """S matrix of the family.

    The default basis is sequential Gram-Schmidt over the family (in ``order``,
    default 0, 1, ..., M); with this convention <u_k|phi_{order[k]}> is real
    and positive. An explicit orthonormal ``basis`` spanning the family may be
    passed instead.
    """
    phi = family.states
    k = phi.shape[1]
    if k > phi.shape[0]:
        raise LinearlyDependentFamily(
            f"{k} pointer states cannot be independent in a {phi.shape[0]}-dimensional pointer"
        )
    gram = np.linalg.eigvalsh(dag(phi) @ phi)
    if gram[0] <= rank_tol * gram[-1]:
        raise LinearlyDependentFamily(
            f"pointer-state Gram matrix is singular (eigenvalue ratio {gram[0] / gram[-1]:.2e})"
        )
    if basis is None:
        order = list(range(k)) if order is None else list(order)
        if sorted(order) != list(range(k)):
            raise ValueError("order must be a permutation of the family indices")
        basis = _gram_schmidt(phi[:, order])
    else:
        basis = np.asarray(basis, dtype=complex)
        if basis.shape != phi.shape:
            raise DimensionMismatch("basis must have one vector per family member")
        if np.max(np.abs(dag(basis) @ basis - np.eye(k))) > 1e-10:
            raise ValueError("basis is not orthonormal")
    entries = dag(basis) @ phi
    if np.max(np.abs(basis @ entries - phi)) > 1e-8:
        raise ValueError("basis does not span the pointer-state family")
    return SMatrix(basis, entries, float(np.linalg.cond(entries)))


@dataclass(frozen=True, eq=False)
class CDObservable:
    """s(g) together with the factor that turns <Pi_f (x) s(g)> into Re or Im tr(Pi_f A rho)."""

    s_of_g: HermitianObservable
    eta: float
    g: float
    channel: str
    prefactor: float
    values: np.ndarray
    proportionality_residual: float
    condition_number: float

    @property
    def matrix(self) -> np.ndarray:
        return self.s_of_g.matrix


def channel_reference(pointer: Pointer, channel: str, tol: float = 1e-10) -> tuple[HermitianObservable, float]:
    """Reference weak-limit observable for ``channel`` and its extraction
    constant c, with Re = i/(eta g c) <..> or Im = 1/(eta g c) <..>."""
    if channel not in CHANNELS:
        raise ValueError(f"channel must be one of {CHANNELS}")
    ref = pointer.reference(channel)
    mom = pointer_moments(pointer, q=ref)
    if abs(mom["q"]) > tol:
        raise DegenerateChannel(f"reference observable {ref.label} has nonzero initial reading")
    if channel == "re":
        if abs(mom["qp_anticommutator"]) > tol or abs(mom["qp_commutator"]) < 1e-12:
            raise DegenerateChannel("pointer has no q-like observable for the real part")
        return ref, mom["qp_commutator"]
    if abs(mom["pp_anticommutator"]) < 1e-12:
        raise DegenerateChannel("pointer has <p^2> = 0, so the imaginary part is unreadable")
    return ref, mom["pp_anticommutator"]


def default_eta(g: float, family: PointerStateFamily, A: SystemObservable) -> float:
    """sin(g)/g for a projector with a two-member family, else 1."""
    if len(family) == 2 and A.is_projector:
        eta = np.sin(g) / g
        if eta > 1e-12:
            return float(eta)
    return 1.0


def cd_observable(g: float, channel: str, setup: CouplingSetup, eta="auto",
                  order=None) -> CDObservable:
    """Build s(g) = g sum_uv Qt_uv |u><v| with Qt = eta S^{-+} Q(0, s) S^{-1}.

    The part of s(g) outside the span of the pointer states is zero.
    """
    if g == 0:
        raise ZeroStrength("the CD observable needs g != 0; use the weak-limit branch")
    pointer = setup.pointer
    ref, c = channel_reference(pointer, channel)
    fam = relevant_family(setup.with_g(g))
    q0 = q_matrix_weak_limit(ref, fam.values, pointer).entries
    sm = s_matrix(fam, order=order)
    eta = default_eta(g, fam, setup.A) if eta == "auto" else float(eta)
    S = sm.entries
    # one inverse used on both sides keeps W^+ Q0 W Hermitian up to plain rounding
    W = np.linalg.solve(S, np.eye(len(S), dtype=complex))
    qt = eta * (dag(W) @ hermitize(q0) @ W)
    # hermitization guard on the small core; U qt U^+ inherits its symmetry.
    # Rounding in W^+ Q0 W alone is of order eps |W|^2 |Q0|, so the bound
    # grows with the conditioning of S; exactness is checked separately below.
    rounding = 64 * len(S) * np.finfo(float).eps * abs(eta) * np.linalg.norm(W, 2) ** 2 \
        * float(np.max(np.abs(q0)))
    scale = max(1.0, float(np.max(np.abs(qt))))
    if hermiticity_error(qt) > max(HERMITIZATION_TOL * scale, rounding):
        raise CDWeakError("CD synthesis lost Hermiticity; the S matrix is too ill-conditioned")
    qt = hermitize(qt)
    U = sm.basis
    smat = g * (U @ qt @ dag(U))

    qg = dag(fam.states) @ (smat @ fam.states) / g
    target = eta * q0
    residual = float(np.max(np.abs(qg - target)))
    if residual > PROPORTIONALITY_TOL * max(1.0, float(np.max(np.abs(target)))):
        raise CDWeakError(f"CD observable misses the proportionality target by {residual:.2e}")

    raw = (1j / (eta * g * c)) if channel == "re" else (1.0 / (eta * g * c))
    label = f"{ref.label}(g={g:.6g})"
    return CDObservable(
        s_of_g=HermitianObservable(smat, label=label, validate=False),
        eta=eta,
        g=float(g),
        channel=channel,
        prefactor=float(np.real(raw)),
        values=fam.values,
        proportionality_residual=residual,
        condition_number=sm.condition_number,
    )


def extract_numerator(setup: CouplingSetup, cd_re: CDObservable | None = None,
                      cd_im: CDObservable | None = None) -> complex:
    """tr(Pi_f A rho_in) from the exact readings of the two CD observables."""
    cd_re = cd_re or cd_observable(setup.g, "re", setup)
    cd_im = cd_im or cd_observable(setup.g, "im", setup)
    for cd, ch in ((cd_re, "re"), (cd_im, "im")):
        if cd.channel != ch:
            raise ValueError(f"expected a {ch!r} channel CD observable, got {cd.channel!r}")
        if not np.isclose(cd.g, setup.g, rtol=0, atol=1e-15):
            raise ValueError("CD observable was built for a different coupling strength")
    re = cd_re.prefactor * joint_expectation(setup, cd_re.s_of_g)
    im = cd_im.prefactor * joint_expectation(setup, cd_im.s_of_g)
    return complex(re, im)


@dataclass(frozen=True)
class GInvariance:
    invariant: bool
    g: tuple
    eta: tuple
    residual: tuple


def check_g_invariance(s, setup: CouplingSetup, g_grid, tol: float = 1e-9) -> GInvariance:
    """Is Q(g, s) = eta(g) Q(0, s) with real eta(g) at every g of the grid?"""
    etas, res = [], []
    ok = True
    for g in g_grid:
        g = float(g)
        fam = relevant_family(setup.with_g(g))
        try:
            q0 = q_matrix_weak_limit(s, fam.values, setup.pointer).entries
        except BiasedPointer:
            return GInvariance(False, tuple(map(float, g_grid)), (), ())
        if g == 0:
            etas.append(1.0)
            res.append(0.0)
            continue
        qg = q_matrix(g, s, fam).entries
        norm = float(np.sum(np.abs(q0) ** 2))
        eta = float(np.sum(np.conj(q0) * qg).real / norm) if norm > 0 else 0.0
        r = float(np.max(np.abs(qg - eta * q0)))
        etas.append(eta)
        res.append(r)
        ok = ok and r <= tol
    return GInvariance(ok, tuple(float(g) for g in g_grid), tuple(etas), tuple(res))


# -- continuous-variable pointer conditions ---------------------------------


def parity_condition_check(pointer: GridPointer, tol: float = 1e-8) -> bool:
    """True iff phi_0(p) is even, which makes <phi_0|p exp(-i x p)|phi_0> imaginary for all x."""
    amp = np.exp(-1j * pointer.k * pointer.q[0]) * np.fft.fft(pointer.phi0)
    mirrored = amp[(-np.arange(pointer.points)) % pointer.points]
    return bool(np.max(np.abs(amp - mirrored)) <= tol * np.max(np.abs(amp)))


def shifted_momentum_moment(pointer: GridPointer, shift: float) -> complex:
    """<phi_0|p exp(-i shift p)|phi_0>."""
    phi = pointer.phi0
    return complex(np.vdot(pointer.apply_momentum(phi), pointer.translate(phi, shift)))


def left_column_moment(pointer: GridPointer, g: float) -> complex:
    """<phi_0|[q, exp(2 i g p)]_+|phi_0>."""
    phi = pointer.phi0
    q_phi = pointer.q * phi
    return complex(np.vdot(q_phi, pointer.translate(phi, -2 * g))
                   + np.vdot(phi, pointer.translate(q_phi, -2 * g)))


def left_column_condition(pointer: GridPointer, g: float, tol: float = 1e-8) -> bool:
    return abs(left_column_moment(pointer, g)) <= tol


# -- effective Pauli reduction ---------------------------------------------


@dataclass(frozen=True, eq=False)
class EffectivePauliReduction:
    g_eff: float
    A_eff: SystemObservable
    phi0_prime: np.ndarray
    a1: float
    a2: float
    pointer: Pointer
    requires_null_branch: bool

    def branch_states(self) -> tuple[np.ndarray, np.ndarray]:
        """(state of the a1 branch, state of the a2 branch) rebuilt from the reduced variables."""
        t = self.pointer.translate
        return t(self.phi0_prime, self.g_eff), t(self.phi0_prime, -self.g_eff)

    def reduced_pointer(self) -> Pointer:
        if isinstance(self.pointer, QubitPointer):
            return QubitPointer(self.phi0_prime)
        p = self.pointer
        return GridPointer(p.delta, p.points, p.extent, self.phi0_prime)


def effective_pauli_reduce(A, g: float, pointer: Pointer, psi_f=None) -> EffectivePauliReduction:
    """Rewrite A = a1 P1 + a2 P2 as the Pauli-like P1 - P2 at strength (a1 - a2) g / 2
    acting on the pre-shifted pointer state exp(-i g (a1 + a2)/2 p)|phi_0>."""
    A = SystemObservable.coerce(A)
    vals = A.distinct_values()
    if len(vals) != 2:
        raise NotTwoLevel(f"observable has {len(vals)} distinct nonzero eigenvalues, need 2")
    a2, a1 = float(vals[0]), float(vals[1])
    P1 = A.eigenspace(a1)
    P2 = A.eigenspace(a2)
    A_eff = SystemObservable(P1 @ dag(P1) - P2 @ dag(P2))
    g_eff = 0.5 * (a1 - a2) * g
    phi0_prime = pointer.translate(pointer.phi0, 0.5 * g * (a1 + a2))
    needs_null = False
    if psi_f is not None:
        psi_f = np.asarray(psi_f, dtype=complex)
        inside = P1 @ (dag(P1) @ psi_f) + P2 @ (dag(P2) @ psi_f)
        needs_null = bool(np.linalg.norm(inside - psi_f) > 1e-10)
    return EffectivePauliReduction(g_eff, A_eff, phi0_prime, a1, a2, pointer, needs_null)


# -- strategies for pointers that are too small ------------------------------


@dataclass(frozen=True, eq=False)
class Substitute:
    A_tilde: SystemObservable
    factor: float
    psi_A: np.ndarray
    kind: str  # "projector" or "pauli"


def substitute_observable(A, psi_f, tol: float = 1e-10) -> Substitute:
    """Observable with a two-branch Q matrix carrying the same numerator:
    tr(Pi_f A rho) = factor * tr(Pi_f A_tilde rho) for every rho."""
    A = SystemObservable.coerce(A)
    psi_f = np.asarray(psi_f, dtype=complex)
    psi_f = psi_f / np.linalg.norm(psi_f)
    a_psi = A.matrix @ psi_f
    a2 = float(np.vdot(a_psi, a_psi).real)
    if a2 <= tol:
        raise NullObservableOnPostselection("A annihilates psi_f; the numerator is identically zero")
    norm = 1.0 / np.sqrt(a2)
    psi_A = norm * a_psi
    overlap = np.vdot(psi_f, psi_A)
    if abs(overlap) > tol:
        a1 = float(np.vdot(psi_f, a_psi).real)
        return Substitute(SystemObservable(projector(psi_A)), a2 / a1, psi_A, "projector")
    pauli = np.outer(psi_A, np.conj(psi_f)) + np.outer(psi_f, np.conj(psi_A))
    return Substitute(SystemObservable(pauli), 1.0 / norm, psi_A, "pauli")


def swapped_postselection(A, rho_in, psi_f, g: float = 1.0, pointer: Pointer | None = None) -> complex:
    """tr(Pi_f A rho_in) with the roles of observable and post-selection exchanged.

    Pi_f is coupled to the pointer and the system is projected onto the
    eigenbasis of A; readings are weighted by a_m and the sum is conjugated.
    """
    A = SystemObservable.coerce(A)
    pointer = pointer or QubitPointer()
    psi_f = np.asarray(psi_f, dtype=complex)
    psi_f = psi_f / np.linalg.norm(psi_f)
    measured = SystemObservable(projector(psi_f))
    total = 0j
    for a_m, col in zip(A.values, A.vectors.T):
        setup = CouplingSetup(g, measured, pointer, rho_in, col)
        total += a_m * extract_numerator(setup)
    return complex(np.conj(total))


def direct_numerator(setup: CouplingSetup) -> complex:
    return weak_value_numerator(setup.A, setup.rho_in, setup.psi_f)


__all__ = [
    "QMatrix", "SMatrix", "CDObservable", "GInvariance", "EffectivePauliReduction",
    "Substitute", "q_matrix", "q_matrix_weak_limit", "s_matrix", "cd_observable",
    "extract_numerator", "check_g_invariance", "parity_condition_check",
    "left_column_condition", "left_column_moment", "shifted_momentum_moment",
    "effective_pauli_reduce", "substitute_observable", "swapped_postselection",
    "channel_reference", "default_eta", "direct_numerator", "make_family",
]
