"""Truncated bosonic Fock space as an independent oracle.

Everything here is finite, exact linear algebra: occupation-number states
(n_1, ..., n_d) with sum n_i <= Nmax over a small one-body space, ladder
operators with the usual sqrt factors, second quantization dGamma, and the
quadratic Hamiltonian

    H = dGamma(h) + lambda (a*(f)^2 + a(f)^2),    h = omega + 2 lambda |f><f|
      = dGamma(omega) + lambda :(a*(f) + a(f))^2:

assembled both ways.  The point of the module is cross-validation: the
spectrum of H must match {sum n_i nu_i + tr(xi - h)/2} for nu = eig(xi), and
the ground state's particle number must match tr(V V^T), without ever
constructing the Bogoliubov unitary.

Truncation protocol: the interaction couples particle levels +-2, so every
oracle quantity is computed at Nmax and again at Nmax - 2; if the two
disagree beyond tolerance the comparison is reported inconclusive rather
than failed.

The one-body space is Euclidean here; weighted-grid models enter through
model.coarsen and the weighted form factor, which keeps all inner products
literal matrix algebra.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import bogoliubov
from .numerics import NumericsError

MAX_MODES = 8
MAX_DIM = 5000
HERMITICITY_RTOL = 1e-12


class FockError(NumericsError):
    pass


@dataclass(frozen=True)
class FockBasis:
    d: int
    nmax: int
    states: tuple             # lexicographic occupation tuples, sum <= nmax
    index: dict               # occupation tuple -> row position

    @property
    def dim(self):
        return len(self.states)

    def levels(self):
        """Total particle number per basis state."""
        return np.array([sum(s) for s in self.states])


def _occupations(d, cap):
    if d == 1:
        for n in range(cap + 1):
            yield (n,)
        return
    for n in range(cap + 1):
        for rest in _occupations(d - 1, cap - n):
            yield (n,) + rest


def fock_basis(d, nmax):
    if not 1 <= d <= MAX_MODES:
        raise FockError(f"mode count must lie in [1, {MAX_MODES}], got {d}")
    if nmax < 0:
        raise FockError(f"particle cap must be nonnegative, got {nmax}")
    dim = comb(d + nmax, d)
    if dim > MAX_DIM:
        raise FockError(
            f"basis dimension {dim} exceeds the dense budget {MAX_DIM}")
    states = tuple(_occupations(d, nmax))
    index = {s: i for i, s in enumerate(states)}
    return FockBasis(d=d, nmax=nmax, states=states, index=index)


@dataclass(frozen=True)
class FockOperator:
    matrix: sp.csr_matrix
    delta_n: object           # int particle-number change, or None for mixed

    @property
    def dim(self):
        return self.matrix.shape[0]

    def dense(self):
        return self.matrix.toarray()


def _make_operator(basis, rows, cols, vals, delta_n):
    data = np.asarray(vals) if vals else np.zeros(0)
    mat = sp.coo_matrix((data, (rows, cols)),
                        shape=(basis.dim, basis.dim)).tocsr()
    if delta_n is not None and mat.nnz:
        levels = basis.levels()
        coo = mat.tocoo()
        if not np.all(levels[coo.row] - levels[coo.col] == delta_n):
            raise FockError("particle-number tag inconsistent with pattern")
    return FockOperator(matrix=mat, delta_n=delta_n)


def creation_op(basis, g):
    """a*(g) = sum_i g_i a*_i; rows that would leave the cap are dropped."""
    g = np.asarray(g)
    if g.shape != (basis.d,):
        raise FockError(f"one-body vector must have length {basis.d}")
    rows, cols, vals = [], [], []
    for col, s in enumerate(basis.states):
        if sum(s) == basis.nmax:
            continue
        for i in range(basis.d):
            if g[i] == 0:
                continue
            target = s[:i] + (s[i] + 1,) + s[i + 1:]
            rows.append(basis.index[target])
            cols.append(col)
            vals.append(g[i] * np.sqrt(s[i] + 1.0))
    return _make_operator(basis, rows, cols, vals, +1)


def annihilation_op(basis, g):
    """a(g) = sum_i conj(g_i) a_i (antilinear in g)."""
    g = np.asarray(g)
    if g.shape != (basis.d,):
        raise FockError(f"one-body vector must have length {basis.d}")
    rows, cols, vals = [], [], []
    for col, s in enumerate(basis.states):
        for i in range(basis.d):
            if s[i] == 0 or g[i] == 0:
                continue
            target = s[:i] + (s[i] - 1,) + s[i + 1:]
            rows.append(basis.index[target])
            cols.append(col)
            vals.append(np.conj(g[i]) * np.sqrt(float(s[i])))
    return _make_operator(basis, rows, cols, vals, -1)


def number_op(basis):
    return FockOperator(matrix=sp.diags(basis.levels().astype(float)).tocsr(),
                        delta_n=0)


def second_quantize(basis, a_mat):
    """dGamma(A) = sum_ij A_ij a*_i a_j, assembled entry by entry."""
    a_mat = np.asarray(a_mat)
    if a_mat.shape != (basis.d, basis.d):
        raise FockError(f"one-body matrix must be {basis.d} x {basis.d}")
    if np.max(np.abs(a_mat - a_mat.conj().T)) > HERMITICITY_RTOL * max(
            np.max(np.abs(a_mat)), 1.0):
        raise FockError("one-body matrix must be hermitian")
    rows, cols, vals = [], [], []
    for col, s in enumerate(basis.states):
        for j in range(basis.d):
            if s[j] == 0:
                continue
            sj = np.sqrt(float(s[j]))
            for i in range(basis.d):
                if a_mat[i, j] == 0:
                    continue
                if i == j:
                    rows.append(col)
                    cols.append(col)
                    vals.append(a_mat[i, j] * sj * sj)
                else:
                    target = list(s)
                    target[j] -= 1
                    target[i] += 1
                    rows.append(basis.index[tuple(target)])
                    cols.append(col)
                    vals.append(a_mat[i, j] * sj * np.sqrt(s[i] + 1.0))
    return _make_operator(basis, rows, cols, vals, 0)


def normal_ordered_square(basis, f):
    """:(a*(f) + a(f))^2: = a(f)^2 + a*(f)^2 + 2 a*(f) a(f), by products."""
    c = creation_op(basis, f).matrix
    a = annihilation_op(basis, f).matrix
    return FockOperator(matrix=(a @ a + c @ c + 2.0 * (c @ a)).tocsr(),
                        delta_n=None)


def build_hamiltonian(basis, omega, f, lam):
    """H = dGamma(omega + 2 lambda |f><f|) + lambda (a*(f)^2 + a(f)^2).

    The second grouping dGamma(omega) + lambda :(a*+a)^2: produces the same
    matrix up to floating-point reassociation; the tests pin the two against
    each other.
    """
    omega = np.asarray(omega, dtype=float)
    f = np.asarray(f)
    h = np.diag(omega) + 2.0 * lam * np.outer(f, f.conj())
    c = creation_op(basis, f).matrix
    a = annihilation_op(basis, f).matrix
    mat = second_quantize(basis, h).matrix + lam * (c @ c + a @ a)
    return FockOperator(matrix=mat.tocsr(), delta_n=None)


def _ground(mat, k=1):
    """Lowest k eigenvalues (and vectors) of a sparse hermitian matrix."""
    dim = mat.shape[0]
    if dim <= 800 or k >= dim - 1:
        dense = mat.toarray()
        vals, vecs = np.linalg.eigh(dense)
        return vals[:k], vecs[:, :k]
    vals, vecs = spla.eigsh(mat, k=k, which="SA")
    order = np.argsort(vals)
    return vals[order], vecs[:, order]


@dataclass(frozen=True)
class SpectralReport:
    levels_exact: tuple
    levels_predicted: tuple
    gaps: tuple
    max_gap: float
    e0_drift: float           # ground-energy move from Nmax-2 to Nmax
    status: str               # "ok" or "inconclusive"


def spectral_compare(basis, model, k_levels=8, margin=2, conv_tol=1e-6):
    """Lowest eigenvalues of H against sum n_i nu_i + tr(xi - h)/2.

    nu are the eigenvalues of xi for the same d-mode one-body data, so the
    comparison exercises the whole diagonalization pipeline against brute
    force.  Candidate occupations stay margin levels below the cap because
    truncation bends the top of the spectrum.
    """
    if model.dim != basis.d:
        raise FockError(
            f"model has {model.dim} modes but basis has {basis.d}")
    if model.lam < 0.0:
        raise FockError("spectral comparison requires lambda >= 0")
    fw = model.f_weighted.real
    ham = build_hamiltonian(basis, model.omega, fw, model.lam)
    small = fock_basis(basis.d, basis.nmax - 2)
    ham_small = build_hamiltonian(small, model.omega, fw, model.lam)
    e0 = _ground(ham.matrix)[0][0]
    e0_small = _ground(ham_small.matrix)[0][0]
    drift = abs(e0 - e0_small)

    blocks = bogoliubov.build_blocks(model, mode="direct")
    nu = blocks.xi_vals
    e_shift = bogoliubov.ground_energy(blocks, model)
    cap = basis.nmax - margin
    predicted = sorted(
        float(np.dot(s, nu)) + e_shift
        for s in basis.states if sum(s) <= cap)
    k = min(k_levels, len(predicted))
    predicted = predicted[:k]
    exact = _ground(ham.matrix, k=k)[0]
    gaps = tuple(float(abs(a - b)) for a, b in zip(exact, predicted))
    return SpectralReport(
        levels_exact=tuple(float(v) for v in exact),
        levels_predicted=tuple(predicted),
        gaps=gaps, max_gap=max(gaps),
        e0_drift=float(drift),
        status="ok" if drift <= conv_tol else "inconclusive")


@dataclass(frozen=True)
class VacuumReport:
    value: float              # <psi_0| N |psi_0>
    drift: float              # change from Nmax-2 to Nmax
    status: str


def vacuum_number_expectation(basis, model, conv_tol=1e-3):
    """Particle number in the interacting ground state.

    After diagonalization the ground state is the transformed vacuum, so
    this expectation must reproduce tr(V V^T) up to truncation error.
    """
    if model.dim != basis.d:
        raise FockError(
            f"model has {model.dim} modes but basis has {basis.d}")
    fw = model.f_weighted.real

    def expectation(b):
        ham = build_hamiltonian(b, model.omega, fw, model.lam)
        _vals, vecs = _ground(ham.matrix)
        psi = vecs[:, 0]
        return float(np.sum(psi ** 2 * b.levels()))

    value = expectation(basis)
    small = expectation(fock_basis(basis.d, basis.nmax - 2))
    drift = abs(value - small)
    return VacuumReport(value=value, drift=drift,
                        status="ok" if drift <= conv_tol else "inconclusive")


@dataclass(frozen=True)
class BoundReport:
    trials: int
    max_ratio: float          # max over trials of lhs / rhs
    violations: int


def relative_bound_check(basis, f, trials=200, seed=0):
    """||:(a*(f)+a(f))^2: Psi|| <= sqrt(6) ||f||^2 (||N Psi|| + ||Psi||).

    Random states carry no weight on the top two particle levels, so the
    truncated operator acts exactly as the untruncated one would.
    """
    f = np.asarray(f, dtype=float)
    square = normal_ordered_square(basis, f).matrix
    levels = basis.levels()
    guard = levels <= basis.nmax - 2
    norm_f2 = float(np.dot(f, f))
    rng = np.random.default_rng(seed)
    max_ratio = 0.0
    violations = 0
    for _ in range(trials):
        psi = rng.standard_normal(basis.dim) * guard
        lhs = np.linalg.norm(square @ psi)
        rhs = np.sqrt(6.0) * norm_f2 * (np.linalg.norm(levels * psi)
                                        + np.linalg.norm(psi))
        ratio = lhs / rhs if rhs > 0 else 0.0
        max_ratio = max(max_ratio, ratio)
        if lhs > rhs * (1.0 + 1e-12):
            violations += 1
    return BoundReport(trials=trials, max_ratio=max_ratio,
                       violations=violations)


@dataclass(frozen=True)
class GaugeReport:
    max_spectral_gap: float
    theta_checked: float      # max |phase| actually present in f


def gauge_equivalence(basis, omega, f, lam):
    """Spectra of H(f) and H(|f|) agree: the phase is a gauge.

    The gauge transformation preserves particle number, so it commutes with
    the truncation and the identity is exact at fixed Nmax.
    """
    f = np.asarray(f)
    ham = build_hamiltonian(basis, omega, f, lam)
    ham_abs = build_hamiltonian(basis, omega, np.abs(f), lam)
    spec = np.linalg.eigvalsh(ham.dense())
    spec_abs = np.linalg.eigvalsh(ham_abs.dense())
    theta = float(np.max(np.abs(np.angle(f.astype(complex))))) if f.size else 0.0
    return GaugeReport(max_spectral_gap=float(np.max(np.abs(spec - spec_abs))),
                       theta_checked=theta)


def klmn_bound(model):
    """Ground-energy floor -lambda ||f||^2 from :(a*+a)^2: = (a+a*)^2 - ||f||^2.

    Returns (bound, condition) where condition is the form-boundedness
    criterion 4 lambda ||omega^{-1/4} f||^2 < 1 under which the quadratic
    form defines the Hamiltonian in the first place.
    """
    bound = -model.lam * float(np.dot(model.f_weighted.real,
                                      model.f_weighted.real))
    condition = 4.0 * model.lam * model.fnorm(-0.25) ** 2
    return bound, condition < 1.0
