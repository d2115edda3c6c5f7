"""Direct (Kirkwood-Dirac) tomography and the three-way Monte Carlo comparison.

A KD table S_mf = <f|a_m><a_m|rho|f> = tr(Pi_f Pi_m rho) determines rho
linearly. Weak-value tomography measures each entry as a weak-value
numerator with A = |a_m><a_m|; the three estimators compared here are

* ``WeakApprox(g)``  - read sigma_y / sigma_x and apply the first-order formula,
* ``CDExact(g)``     - read the CD observables and apply the exact prefactors,
* ``StandardProjective`` - Pauli expectation values (qubits only).
"""

from __future__ import annotations

import hashlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .cdsolver import cd_observable
from .coupling import (
    CouplingSetup,
    QubitPointer,
    SystemObservable,
    joint_kets,
    weak_limit_estimate,
)
from .errors import IncompatibleBases, ZeroTrace
from .qcore import (
    SX,
    SY,
    SZ,
    HermitianObservable,
    as_observable,
    dag,
    density_matrix,
    hermitize,
    projector,
    trace_distance,
)

OVERLAP_TOL = 1e-10
SEED_MASK = (1 << 64) - 1


# -- methods ----------------------------------------------------------------


def _check_strength(g):
    if not 0 < g <= np.pi / 2 + 1e-12:
        raise ValueError(f"coupling strength must lie in (0, pi/2], got {g!r}")


@dataclass(frozen=True)
class WeakApprox:
    g: float
    name = "weak"

    def __post_init__(self):
        _check_strength(self.g)


@dataclass(frozen=True)
class CDExact:
    g: float
    name = "cd"

    def __post_init__(self):
        _check_strength(self.g)


@dataclass(frozen=True)
class StandardProjective:
    name = "standard"
    g = None


TomographyMethod = WeakApprox | CDExact | StandardProjective


def method_key(method) -> str:
    return method.name if method.g is None else f"{method.name}:g={float(method.g)!r}"


# -- Kirkwood-Dirac tables ----------------------------------------------------


def fourier_basis(d: int) -> np.ndarray:
    """Columns e^{2 pi i j k / d} / sqrt(d); for d = 2 these are |+>, |->."""
    j = np.arange(d)
    return np.exp(2j * np.pi * np.outer(j, j) / d) / np.sqrt(d)


def default_bases(d: int) -> tuple[np.ndarray, np.ndarray]:
    return np.eye(d, dtype=complex), fourier_basis(d)


def _overlaps(a_basis, f_basis) -> np.ndarray:
    ov = dag(f_basis) @ a_basis  # ov[f, m] = <f|a_m>
    if np.min(np.abs(ov)) < OVERLAP_TOL:
        raise IncompatibleBases("some <f|a_m> vanish; the KD table cannot be inverted")
    return ov.T  # [m, f]


@dataclass(frozen=True, eq=False)
class KDTable:
    entries: np.ndarray  # [m, f]
    a_basis: np.ndarray
    f_basis: np.ndarray


def kd_exact(rho, a_basis=None, f_basis=None) -> KDTable:
    rho = np.asarray(rho, dtype=complex)
    if a_basis is None or f_basis is None:
        a_basis, f_basis = default_bases(rho.shape[0])
    ov = _overlaps(a_basis, f_basis)
    # S[m, f] = <f|a_m> <a_m|rho|f>
    entries = ov * (dag(a_basis) @ rho @ f_basis)
    return KDTable(entries, a_basis, f_basis)


def reconstruct_from_kd(table, a_basis=None, f_basis=None) -> np.ndarray:
    """rho = sum_mf S_mf / <f|a_m> |a_m><f| (not projected to a physical state)."""
    if isinstance(table, KDTable):
        entries, a_basis, f_basis = table.entries, table.a_basis, table.f_basis
    else:
        entries = np.asarray(table, dtype=complex)
        if a_basis is None or f_basis is None:
            a_basis, f_basis = default_bases(entries.shape[0])
    ov = _overlaps(a_basis, f_basis)
    return a_basis @ (entries / ov) @ dag(f_basis)


def physicality_projection(raw) -> np.ndarray:
    """Clip negative eigenvalues of the Hermitian part and renormalize the trace."""
    h = hermitize(np.asarray(raw, dtype=complex))
    w, v = np.linalg.eigh(h)
    w = np.clip(w, 0.0, None)
    total = w.sum()
    if total <= 0:
        raise ZeroTrace("every eigenvalue was clipped")
    return hermitize((v * (w / total)) @ dag(v))


# -- Born-rule sampling -------------------------------------------------------


def completed_basis(psi_f) -> np.ndarray:
    """Orthonormal basis whose first column is psi_f."""
    psi_f = np.asarray(psi_f, dtype=complex)
    d = len(psi_f)
    q, _ = np.linalg.qr(np.column_stack([psi_f, np.eye(d, dtype=complex)]))
    q = q[:, :d]
    return q * (np.vdot(q[:, 0], psi_f) / abs(np.vdot(q[:, 0], psi_f)))


def _spectral_groups(s: HermitianObservable) -> tuple[np.ndarray, np.ndarray]:
    """(distinct eigenvalues, group index of every eigenvector)."""
    w = s.eigenvalues
    tol = 1e-9 * max(1.0, float(np.max(np.abs(w))))
    groups = np.zeros(len(w), dtype=int)
    vals = [w[0]]
    for i in range(1, len(w)):
        if w[i] - w[i - 1] > tol:
            vals.append(w[i])
        groups[i] = len(vals) - 1
    return np.array(vals), groups


def outcome_probabilities(setup: CouplingSetup, s, f_basis=None) -> tuple[np.ndarray, np.ndarray]:
    """Joint distribution p[f, k] = tr[(Pi_f (x) P_k) rho_joint].

    ``f`` runs over ``f_basis`` columns; by default over {Pi_f, I - Pi_f}.
    ``P_k`` projects onto the k-th distinct eigenvalue of ``s``.
    """
    s = as_observable(s)
    two_outcome = f_basis is None
    basis = completed_basis(setup.psi_f) if two_outcome else np.asarray(f_basis, dtype=complex)
    weights, X = joint_kets(setup)
    chi = np.einsum("if,wia->wfa", np.conj(basis), X)
    c = chi @ np.conj(s.eigenvectors)  # amplitudes on eigenvectors of s
    p_vec = np.einsum("w,wfj->fj", weights, np.abs(c) ** 2)
    vals, groups = _spectral_groups(s)
    p = np.zeros((p_vec.shape[0], len(vals)))
    np.add.at(p.T, groups, p_vec.T)
    if two_outcome:
        p = np.vstack([p[0], p[1:].sum(axis=0)])
    return np.clip(p, 0.0, None), vals


SHOT_DTYPE = np.dtype([("m", np.int64), ("f", np.int64), ("s_eigenvalue", np.float64),
                       ("channel", "U2")])


def sample_shots(setup: CouplingSetup, s, n: int, rng_seed, f_basis=None, m: int = 0,
                 channel: str = "re") -> np.ndarray:
    """n Born-rule shots of (post-selection outcome, pointer eigenvalue).

    Returns a structured array of records (m, f, s_eigenvalue, channel); with
    the default two-outcome post-selection, f = 0 is the Pi_f outcome.
    """
    out = np.zeros(n, dtype=SHOT_DTYPE)
    if n == 0:
        return out
    p, vals = outcome_probabilities(setup, s, f_basis)
    rng = np.random.default_rng(rng_seed)
    flat = p.ravel() / p.sum()
    idx = rng.choice(flat.size, size=n, p=flat)
    out["m"] = m
    out["f"] = idx // p.shape[1]
    out["s_eigenvalue"] = vals[idx % p.shape[1]]
    out["channel"] = channel
    return out


def shot_expectation(shots: np.ndarray, f: int = 0) -> tuple[float, float]:
    """Mean of indicator(f) * eigenvalue and its standard error."""
    y = np.where(shots["f"] == f, shots["s_eigenvalue"], 0.0)
    n = len(y)
    return float(y.mean()), float(y.std(ddof=1) / np.sqrt(n)) if n > 1 else float("nan")


# -- tomography estimators ----------------------------------------------------


def _split(n: int, cells: int) -> list[int]:
    base, rem = divmod(int(n), cells)
    return [base + (i < rem) for i in range(cells)]


@dataclass(eq=False)
class _Cell:
    probs: np.ndarray  # [f, k]
    values: np.ndarray  # eigenvalue per k


@dataclass(eq=False)
class PreparedMethod:
    """Outcome distributions of every measurement setting, ready for resampling."""

    method: object
    truth: np.ndarray
    a_basis: np.ndarray | None = None
    f_basis: np.ndarray | None = None
    cells: list = field(default_factory=list)
    transforms: list = field(default_factory=list)

    def estimate_kd(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """KD table estimated from n shots split evenly over the settings."""
        counts = _split(n, len(self.cells))
        readings = []
        for cell, k in zip(self.cells, counts):
            if k == 0:
                readings.append(np.zeros(cell.probs.shape[0]))
                continue
            flat = cell.probs.ravel() / cell.probs.sum()
            c = rng.multinomial(k, flat).reshape(cell.probs.shape)
            readings.append(c @ cell.values / k)
        d = len(self.truth)
        table = np.zeros((d, d), dtype=complex)
        for m in range(d):
            re, im = readings[2 * m], readings[2 * m + 1]
            table[m] = self.transforms[m](re, im)
        return table

    def estimate(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if isinstance(self.method, StandardProjective):
            raw = self._pauli_estimate(n, rng)
        else:
            raw = reconstruct_from_kd(self.estimate_kd(n, rng), self.a_basis, self.f_basis)
        try:
            return physicality_projection(raw)
        except ZeroTrace:
            # noise swamped the signal (tiny N at weak coupling): no information
            # survives clipping, so report the maximally mixed state
            d = len(self.truth)
            return np.eye(d, dtype=complex) / d

    def _pauli_estimate(self, n: int, rng: np.random.Generator) -> np.ndarray:
        r = np.zeros(3)
        for i, (cell, k) in enumerate(zip(self.cells, _split(n, 3))):
            if k:
                c = rng.multinomial(k, cell.probs.ravel() / cell.probs.sum())
                r[i] = c @ cell.values / k
        return 0.5 * (np.eye(2) + r[0] * SX + r[1] * SY + r[2] * SZ)


def prepare_method(method, true_state, a_basis=None, f_basis=None) -> PreparedMethod:
    rho = density_matrix(true_state)
    d = rho.shape[0]
    if isinstance(method, StandardProjective):
        if d != 2:
            raise ValueError("standard projective tomography is implemented for qubits only")
        cells = []
        for pauli in (SX, SY, SZ):
            r = np.trace(rho @ pauli).real
            cells.append(_Cell(np.array([0.5 * (1 + r), 0.5 * (1 - r)]), np.array([1.0, -1.0])))
        return PreparedMethod(method, rho, cells=cells)

    if a_basis is None or f_basis is None:
        a_basis, f_basis = default_bases(d)
    _overlaps(a_basis, f_basis)
    pointer = QubitPointer()
    prep = PreparedMethod(method, rho, a_basis, f_basis)
    for m in range(d):
        A = SystemObservable(projector(a_basis[:, m]))
        setup = CouplingSetup(method.g, A, pointer, rho, f_basis[:, 0])
        if isinstance(method, CDExact):
            cd_re = cd_observable(method.g, "re", setup)
            cd_im = cd_observable(method.g, "im", setup)
            observables = (cd_re.s_of_g, cd_im.s_of_g)
            pre = (cd_re.prefactor, cd_im.prefactor)
            prep.transforms.append(lambda re, im, pre=pre: pre[0] * re + 1j * pre[1] * im)
        else:
            observables = (pointer.position, pointer.momentum)
            prep.transforms.append(
                lambda re, im, setup=setup: np.array(
                    [weak_limit_estimate(setup, x, y) for x, y in zip(re, im)]
                )
            )
        for s in observables:
            probs, vals = outcome_probabilities(setup, s, f_basis)
            prep.cells.append(_Cell(probs, vals))
    return prep


def estimate_kd(method, true_state, n: int, seed) -> np.ndarray:
    prep = prepare_method(method, true_state)
    return prep.estimate_kd(n, np.random.default_rng(seed))


def run_method(method, true_state, n: int, seed) -> np.ndarray:
    """Reconstructed (physical) density matrix from n simulated shots."""
    return prepare_method(method, true_state).estimate(n, np.random.default_rng(seed))


# -- experiment runner -----------------------------------------------------


DEFAULT_QUBIT_STATE = np.array(
    [[0.7236, 0.2764 - 0.3249j], [0.2764 + 0.3249j, 0.2764]], dtype=complex
)


@dataclass(frozen=True, eq=False)
class ExperimentPlan:
    true_state: np.ndarray = field(default_factory=lambda: DEFAULT_QUBIT_STATE.copy())
    methods: tuple = (WeakApprox(0.1), CDExact(np.pi / 2), StandardProjective())
    sample_sizes: tuple = (100, 1000, 10000, 100000)
    trials: int = 10
    base_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "true_state", density_matrix(self.true_state))
        object.__setattr__(self, "methods", tuple(self.methods))
        sizes = tuple(int(n) for n in self.sample_sizes)
        if not sizes or min(sizes) <= 0 or self.trials <= 0 or not self.methods:
            raise ValueError("sample sizes, trials and methods must be positive / non-empty")
        if list(sizes) != sorted(sizes):
            raise ValueError("sample_sizes must be ascending")
        object.__setattr__(self, "sample_sizes", sizes)
        object.__setattr__(self, "base_seed", int(self.base_seed) & SEED_MASK)


@dataclass(frozen=True)
class TrialRow:
    method: str
    g: float | None
    N: int
    trial: int
    seed: int
    trace_distance: float


@dataclass(frozen=True)
class SummaryRow:
    method: str
    g: float | None
    N: int
    median: float
    iqr: float


@dataclass(frozen=True)
class ExperimentResult:
    rows: tuple
    summary: tuple

    def medians(self) -> dict:
        return {(r.method, r.g, r.N): r.median for r in self.summary}


def trial_seed(base_seed: int, method, n: int, trial: int) -> int:
    digest = hashlib.blake2b(f"{method_key(method)}|{n}|{trial}".encode(), digest_size=8).digest()
    return (int(base_seed) ^ int.from_bytes(digest, "little")) & SEED_MASK


def _summarize(rows) -> tuple:
    groups: dict = {}
    for r in rows:
        groups.setdefault((r.method, r.g, r.N), []).append(r.trace_distance)
    out = []
    for (name, g, n), vals in groups.items():
        q25, q50, q75 = np.percentile(vals, [25, 50, 75])
        out.append(SummaryRow(name, g, n, float(q50), float(q75 - q25)))
    return tuple(out)


def run_experiment(plan: ExperimentPlan, threads: int = 1) -> ExperimentResult:
    """Trace distance to the true state for every (method, N, trial)."""
    prepared = [prepare_method(m, plan.true_state) for m in plan.methods]
    jobs = [
        (prep, n, t)
        for prep in prepared
        for n in plan.sample_sizes
        for t in range(plan.trials)
    ]

    def one(job):
        prep, n, t = job
        seed = trial_seed(plan.base_seed, prep.method, n, t)
        est = prep.estimate(n, np.random.default_rng(seed))
        return TrialRow(prep.method.name, prep.method.g, n, t, seed,
                        trace_distance(est, prep.truth))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(one, jobs))
    else:
        rows = [one(j) for j in jobs]
    order = {m.name: i for i, m in enumerate(plan.methods)}
    rows.sort(key=lambda r: (order[r.method], r.N, r.trial))
    return ExperimentResult(tuple(rows), _summarize(rows))


def _fmt_g(g) -> str:
    return "" if g is None else repr(float(g))


def rows_to_csv(rows) -> str:
    lines = ["method,g,N,trial,seed,trace_distance"]
    for r in rows:
        lines.append(f"{r.method},{_fmt_g(r.g)},{r.N},{r.trial},{r.seed},{r.trace_distance!r}")
    return "\n".join(lines) + "\n"


def summary_to_csv(summary) -> str:
    lines = ["method,g,N,median,iqr"]
    for r in summary:
        lines.append(f"{r.method},{_fmt_g(r.g)},{r.N},{r.median!r},{r.iqr!r}")
    return "\n".join(lines) + "\n"
