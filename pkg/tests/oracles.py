"""Independent reference computations the tests compare the package against.

Nothing here imports the package's linear algebra: matrix exponentials use a
scaled-and-squared Taylor series and expectation values are formed by brute
force on the full product space.
"""

import numpy as np


def expm_taylor(h, theta, terms=40):
    """exp(-i theta h) by Taylor series on a scaled argument, then repeated squaring."""
    x = -1j * theta * np.asarray(h, dtype=complex)
    norm = np.linalg.norm(x, 1)
    squarings = max(0, int(np.ceil(np.log2(norm))) + 1) if norm > 0 else 0
    x = x / 2**squarings
    out = np.eye(len(x), dtype=complex)
    term = np.eye(len(x), dtype=complex)
    for k in range(1, terms):
        term = term @ x / k
        out = out + term
    for _ in range(squarings):
        out = out @ out
    return out


def joint_state(A, generator, rho, phi0, g):
    """U (rho (x) |phi0><phi0|) U^+ with U = exp(-i g A (x) p) on the full space."""
    U = expm_taylor(np.kron(A, generator), g)
    start = np.kron(rho, np.outer(phi0, np.conj(phi0)))
    return U @ start @ U.conj().T


def joint_expectation(A, generator, rho, phi0, psi_f, s, g):
    joint = joint_state(A, generator, rho, phi0, g)
    pif = np.outer(psi_f, np.conj(psi_f))
    return np.trace(np.kron(pif, s) @ joint)


def numerator(A, rho, psi_f):
    """tr(Pi_f A rho) as <psi_f| A rho |psi_f>."""
    return np.conj(psi_f) @ A @ rho @ psi_f


def kd_table(rho, a_basis, f_basis):
    d = len(rho)
    out = np.zeros((d, d), dtype=complex)
    for m in range(d):
        a = a_basis[:, m]
        for f in range(d):
            v = f_basis[:, f]
            out[m, f] = np.vdot(v, a) * (np.conj(a) @ rho @ v)
    return out


def random_hermitian(d, rng):
    x = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return (x + x.conj().T) / 2


def random_state(d, rng, rank=None):
    rank = d if rank is None else rank
    x = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    rho = x @ x.conj().T
    return rho / np.trace(rho).real


def random_ket(d, rng):
    v = rng.normal(size=d) + 1j * rng.normal(size=d)
    return v / np.linalg.norm(v)


def random_spectrum_observable(d, rng, min_abs=0.3, min_gap=0.25):
    """Hermitian A with a nondegenerate, nonzero spectrum (well separated values)."""
    while True:
        vals = rng.uniform(-2, 2, size=d)
        s = np.sort(vals)
        if np.min(np.abs(vals)) >= min_abs and (d == 1 or np.min(np.diff(s)) >= min_gap):
            break
    q, r = np.linalg.qr(rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d)))
    q = q * (np.diag(r) / np.abs(np.diag(r)))
    return (q * vals) @ q.conj().T
