"""Linear algebra on the permutation-symmetric subspace of N spin-1/2 particles.

States are stored as N + 1 amplitudes over the Dicke basis ``|N, m_z>``, with
array index ``i`` holding ``m_z = i - N/2``.  A Dicke state with eigenvalue
``m_z`` is the uniform superposition of bitstrings with Hamming weight
``N/2 - m_z`` (``|0>`` is spin up, ``Z|0> = |0>``).
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.special import gammaln

NORM_TOL = 1e-10


class OddSpinNumberError(ValueError):
    """Raised when an odd spin number reaches code that assumes even N."""


def check_spin_number(n_spins: int, allow_odd: bool = False) -> int:
    if isinstance(n_spins, bool) or int(n_spins) != n_spins or n_spins < 1:
        raise ValueError(f"spin number must be a positive integer, got {n_spins!r}")
    n_spins = int(n_spins)
    if n_spins % 2 and not allow_odd:
        raise OddSpinNumberError(f"even spin number required, got N={n_spins}")
    return n_spins


@functools.lru_cache(maxsize=64)
def m_values(n_spins: int) -> np.ndarray:
    """J_z eigenvalues ``-N/2, ..., N/2`` in basis order (read-only)."""
    m = np.arange(n_spins + 1) - n_spins / 2
    m.setflags(write=False)
    return m


def basis_index(n_spins: int, m_z: float, allow_odd: bool = False) -> int:
    """Array index of ``|N, m_z>``, i.e. ``m_z + N/2``."""
    n_spins = check_spin_number(n_spins, allow_odd)
    idx = m_z + n_spins / 2
    if idx != int(idx) or not 0 <= idx <= n_spins:
        raise ValueError(f"m_z={m_z} is not a valid eigenvalue for N={n_spins}")
    return int(idx)


@dataclass(frozen=True, eq=False)
class CollectiveState:
    """Pure state of the symmetric subspace.

    ``allow_odd`` lifts the even-N restriction; only the permutation-invariant
    code construction needs it.
    """

    n_spins: int
    amplitudes: np.ndarray
    allow_odd: bool = field(default=False, repr=False)

    def __post_init__(self):
        n = check_spin_number(self.n_spins, self.allow_odd)
        amps = np.array(self.amplitudes, dtype=complex).reshape(-1)
        if amps.shape != (n + 1,):
            raise ValueError(f"expected {n + 1} amplitudes, got {amps.shape[0]}")
        amps.setflags(write=False)
        object.__setattr__(self, "n_spins", n)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def m_values(self) -> np.ndarray:
        return m_values(self.n_spins)

    @property
    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def norm(self) -> float:
        return float(np.sqrt(self.probabilities.sum()))

    def normalized(self) -> "CollectiveState":
        nrm = self.norm()
        if nrm == 0.0:
            raise ValueError("cannot normalize the zero vector")
        return self.replace(self.amplitudes / nrm)

    def replace(self, amplitudes) -> "CollectiveState":
        return CollectiveState(self.n_spins, amplitudes, self.allow_odd)

    def amplitude(self, m_z: float) -> complex:
        return complex(self.amplitudes[basis_index(self.n_spins, m_z, self.allow_odd)])

    def support(self, atol: float = 0.0) -> np.ndarray:
        """m_z values carrying probability above ``atol``."""
        return self.m_values[self.probabilities > atol]

    def overlap(self, other: "CollectiveState") -> complex:
        if other.n_spins != self.n_spins:
            raise ValueError("dimension mismatch")
        return complex(np.vdot(self.amplitudes, other.amplitudes))


def dicke_state(n_spins: int, m_z: float, allow_odd: bool = False) -> CollectiveState:
    n_spins = check_spin_number(n_spins, allow_odd)
    amps = np.zeros(n_spins + 1, dtype=complex)
    amps[basis_index(n_spins, m_z, allow_odd)] = 1.0
    return CollectiveState(n_spins, amps, allow_odd)


def log_binomial(n: int, k) -> np.ndarray:
    k = np.asarray(k, dtype=float)
    return gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)


def binomial_weights(n_spins: int, p: float = 0.5) -> np.ndarray:
    """Probabilities ``C(N, k) p^k (1-p)^(N-k)`` indexed by ``k = m_z + N/2``.

    Evaluated in log space so that N ~ 1e6 does not under/overflow, then
    divided by the sum, which removes the common rounding error of the
    large log-gamma terms.
    """
    k = np.arange(n_spins + 1)
    if p in (0.0, 1.0):
        out = np.zeros(n_spins + 1)
        out[n_spins if p == 1.0 else 0] = 1.0
        return out
    logw = log_binomial(n_spins, k) + k * np.log(p) + (n_spins - k) * np.log1p(-p)
    w = np.exp(logw - logw.max())
    return w / w.sum()


def product_state(n_spins: int, a0: complex, a1: complex, allow_odd: bool = False) -> CollectiveState:
    """Expand ``(a0|0> + a1|1>)^N`` in the Dicke basis.

    The coefficient of ``|N, m_z>`` is ``sqrt(C(N, k)) a0^k a1^(N-k)`` with
    ``k = m_z + N/2`` spins in ``|0>``.
    """
    n = check_spin_number(n_spins, allow_odd)
    a0, a1 = complex(a0), complex(a1)
    nrm = np.hypot(abs(a0), abs(a1))
    a0, a1 = a0 / nrm, a1 / nrm
    k = np.arange(n + 1)
    mags = np.sqrt(binomial_weights(n, abs(a0) ** 2))
    phases = np.exp(1j * (k * np.angle(a0) + (n - k) * np.angle(a1)))
    return CollectiveState(n, mags * phases, allow_odd)


@functools.lru_cache(maxsize=64)
def initial_plus_state(n_spins: int, allow_odd: bool = False) -> CollectiveState:
    """``|+>^N``: amplitudes ``sqrt(C(N, k) / 2^N)``, all real and nonnegative."""
    n = check_spin_number(n_spins, allow_odd)
    return CollectiveState(n, np.sqrt(binomial_weights(n, 0.5)), allow_odd)


# --- collective operators -------------------------------------------------


def ladder_coefficients(n_spins: int) -> np.ndarray:
    """``<m+1|J_+|m> = sqrt(J(J+1) - m(m+1))`` for m = -J .. J-1."""
    j = n_spins / 2
    m = m_values(n_spins)[:-1]
    return np.sqrt(np.maximum(j * (j + 1) - m * (m + 1), 0.0))


@dataclass(frozen=True, eq=False)
class CollectiveOperator:
    """Operator on the (N+1)-dimensional symmetric subspace.

    Functions of J_z are kept as a diagonal; everything else as a dense matrix.
    """

    n_spins: int
    matrix: np.ndarray | None = None
    diagonal: np.ndarray | None = None

    def __post_init__(self):
        if (self.matrix is None) == (self.diagonal is None):
            raise ValueError("give exactly one of matrix or diagonal")
        dim = self.n_spins + 1
        if self.matrix is not None:
            mat = np.asarray(self.matrix, dtype=complex)
            if mat.shape != (dim, dim):
                raise ValueError(f"expected a {dim}x{dim} matrix, got {mat.shape}")
            object.__setattr__(self, "matrix", mat)
        else:
            diag = np.asarray(self.diagonal, dtype=complex).reshape(-1)
            if diag.shape != (dim,):
                raise ValueError(f"expected {dim} diagonal entries, got {diag.shape[0]}")
            object.__setattr__(self, "diagonal", diag)

    @property
    def is_diagonal(self) -> bool:
        return self.diagonal is not None

    def dense(self) -> np.ndarray:
        return np.diag(self.diagonal) if self.is_diagonal else self.matrix

    def apply(self, state: CollectiveState) -> CollectiveState:
        """Apply without renormalizing."""
        if state.n_spins != self.n_spins:
            raise ValueError("dimension mismatch")
        if self.is_diagonal:
            return state.replace(self.diagonal * state.amplitudes)
        return state.replace(self.matrix @ state.amplitudes)

    def __matmul__(self, other):
        if isinstance(other, CollectiveState):
            return self.apply(other)
        if isinstance(other, CollectiveOperator):
            if other.n_spins != self.n_spins:
                raise ValueError("dimension mismatch")
            if self.is_diagonal and other.is_diagonal:
                return CollectiveOperator(self.n_spins, diagonal=self.diagonal * other.diagonal)
            return CollectiveOperator(self.n_spins, matrix=self.dense() @ other.dense())
        return NotImplemented

    def __add__(self, other: "CollectiveOperator") -> "CollectiveOperator":
        if self.is_diagonal and other.is_diagonal:
            return CollectiveOperator(self.n_spins, diagonal=self.diagonal + other.diagonal)
        return CollectiveOperator(self.n_spins, matrix=self.dense() + other.dense())

    def __sub__(self, other: "CollectiveOperator") -> "CollectiveOperator":
        return self + (-1.0) * other

    def __rmul__(self, scalar: complex) -> "CollectiveOperator":
        if self.is_diagonal:
            return CollectiveOperator(self.n_spins, diagonal=scalar * self.diagonal)
        return CollectiveOperator(self.n_spins, matrix=scalar * self.matrix)

    def adjoint(self) -> "CollectiveOperator":
        if self.is_diagonal:
            return CollectiveOperator(self.n_spins, diagonal=self.diagonal.conj())
        return CollectiveOperator(self.n_spins, matrix=self.matrix.conj().T)

    def hermiticity_defect(self) -> float:
        if self.is_diagonal:
            return float(np.max(np.abs(self.diagonal.imag), initial=0.0))
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T)))


@dataclass(frozen=True)
class SpinOperators:
    jx: CollectiveOperator
    jy: CollectiveOperator
    jz: CollectiveOperator
    jp: CollectiveOperator
    jm: CollectiveOperator


def build_collective_operators(n_spins: int, allow_odd: bool = False) -> SpinOperators:
    n = check_spin_number(n_spins, allow_odd)
    if n < 2 and not allow_odd:
        raise ValueError("N >= 2 required")
    jp = np.diag(ladder_coefficients(n).astype(complex), k=-1)
    jm = jp.T.copy()
    return SpinOperators(
        jx=CollectiveOperator(n, matrix=(jp + jm) / 2),
        jy=CollectiveOperator(n, matrix=(jp - jm) / 2j),
        jz=CollectiveOperator(n, diagonal=m_values(n)),
        jp=CollectiveOperator(n, matrix=jp),
        jm=CollectiveOperator(n, matrix=jm),
    )


# --- rotations --------------------------------------------------------------


@functools.lru_cache(maxsize=16)
def _jx_eigensystem(n_spins: int) -> tuple[np.ndarray, np.ndarray]:
    # J_x is real symmetric tridiagonal; its eigenvectors are real.
    d = np.zeros(n_spins + 1)
    e = ladder_coefficients(n_spins) / 2
    w, v = eigh_tridiagonal(d, e)
    w.setflags(write=False)
    v.setflags(write=False)
    return w, v


def _jz_quarter_turn(n_spins: int) -> np.ndarray:
    # diag of exp(-i pi/2 J_z); conjugating J_x by it yields J_y
    return np.exp(-0.5j * np.pi * m_values(n_spins))


def y_rotation_matrix(n_spins: int, theta: float) -> np.ndarray:
    """Dense ``exp(-i theta J_y)``."""
    w, v = _jx_eigensystem(n_spins)
    r = _jz_quarter_turn(n_spins)
    core = (v * np.exp(-1j * theta * w)) @ v.T
    return r[:, None] * core * r.conj()[None, :]


def y_function_matrix(n_spins: int, func) -> np.ndarray:
    """Dense ``func(J_y)`` for an elementwise spectral function ``func``."""
    w, v = _jx_eigensystem(n_spins)
    r = _jz_quarter_turn(n_spins)
    core = (v * func(w)) @ v.T
    return r[:, None] * core * r.conj()[None, :]


def rotate_y(state: CollectiveState, theta: float) -> CollectiveState:
    """Return ``exp(-i theta J_y) |psi>``."""
    if not np.isfinite(theta):
        raise ValueError("rotation angle must be finite")
    w, v = _jx_eigensystem(state.n_spins)
    r = _jz_quarter_turn(state.n_spins)
    x = v.T @ (r.conj() * state.amplitudes)
    x = v @ (np.exp(-1j * theta * w) * x)
    return state.replace(r * x)


def apply_jz_phase(state: CollectiveState, phi: float, offset: float = 0.0) -> CollectiveState:
    """Multiply each amplitude by ``exp(i phi (m_z - offset))``."""
    if not (np.isfinite(phi) and np.isfinite(offset)):
        raise ValueError("phase and offset must be finite")
    return state.replace(state.amplitudes * np.exp(1j * phi * (state.m_values - offset)))


# --- symbolic operator polynomials -------------------------------------------


_LETTERS = {"x", "y", "z", "+", "-"}


def _apply_letter(letter: str, amps: np.ndarray, n_spins: int) -> np.ndarray:
    m = m_values(n_spins)
    if letter == "z":
        return m * amps
    c = ladder_coefficients(n_spins)
    up = np.zeros_like(amps)
    down = np.zeros_like(amps)
    up[1:] = c * amps[:-1]
    down[:-1] = c * amps[1:]
    if letter == "+":
        return up
    if letter == "-":
        return down
    if letter == "x":
        return (up + down) / 2
    return (up - down) / 2j


@dataclass(frozen=True)
class OperatorSpec:
    """Polynomial in J_x, J_y, J_z (and J_+, J_-).

    Each term is a word over ``"xyz+-"`` read left to right as an operator
    product, so ``"zxxz"`` is ``J_z J_x J_x J_z``.  The empty word is the
    identity.

    >>> OperatorSpec.word("zz") + 2 * OperatorSpec.word("x")
    OperatorSpec(terms=(('zz', 1), ('x', 2)))
    """

    terms: tuple[tuple[str, complex], ...]

    def __post_init__(self):
        for w, _ in self.terms:
            if set(w) - _LETTERS:
                raise ValueError(f"unknown operator letters in {w!r}")

    @classmethod
    def word(cls, word: str, coef: complex = 1) -> "OperatorSpec":
        return cls(((word, coef),))

    @classmethod
    def identity(cls) -> "OperatorSpec":
        return cls.word("")

    def __add__(self, other: "OperatorSpec") -> "OperatorSpec":
        return OperatorSpec(self.terms + other.terms)

    def __sub__(self, other: "OperatorSpec") -> "OperatorSpec":
        return self + (-1) * other

    def __rmul__(self, scalar: complex) -> "OperatorSpec":
        return OperatorSpec(tuple((w, scalar * c) for w, c in self.terms))

    def __mul__(self, other):
        if isinstance(other, OperatorSpec):
            return OperatorSpec(tuple((w1 + w2, c1 * c2) for w1, c1 in self.terms for w2, c2 in other.terms))
        return self.__rmul__(other)

    def adjoint(self) -> "OperatorSpec":
        swap = {"x": "x", "y": "y", "z": "z", "+": "-", "-": "+"}
        return OperatorSpec(tuple(("".join(swap[ch] for ch in reversed(w)), np.conj(c)) for w, c in self.terms))

    def commutator(self, other: "OperatorSpec") -> "OperatorSpec":
        return self * other - other * self

    def apply(self, state: CollectiveState) -> CollectiveState:
        out = np.zeros(state.n_spins + 1, dtype=complex)
        for w, c in self.terms:
            amps = state.amplitudes
            for letter in reversed(w):
                amps = _apply_letter(letter, amps, state.n_spins)
            out = out + c * amps
        return state.replace(out)

    def matrix(self, n_spins: int, allow_odd: bool = False) -> CollectiveOperator:
        n = check_spin_number(n_spins, allow_odd)
        cols = [self.apply(CollectiveState(n, np.eye(n + 1)[k], allow_odd)).amplitudes for k in range(n + 1)]
        return CollectiveOperator(n, matrix=np.column_stack(cols))


def expectation(state: CollectiveState, op) -> complex:
    """``<psi|O|psi>`` for an :class:`OperatorSpec` or :class:`CollectiveOperator`."""
    if isinstance(op, CollectiveOperator) and op.n_spins != state.n_spins:
        raise ValueError("dimension mismatch")
    applied = op.apply(state)
    return complex(np.vdot(state.amplitudes, applied.amplitudes))


def fidelity(states, m_z: float, weights: Sequence[float] | None = None) -> float:
    """Population of ``|N, m_z>``.

    ``states`` is a single state or an ensemble of pure trajectories; for an
    ensemble the (optionally weighted) mean population is returned.
    """
    if isinstance(states, CollectiveState):
        return float(abs(states.amplitude(m_z)) ** 2)
    states = list(states)
    if not states:
        raise ValueError("empty ensemble")
    pops = np.array([abs(s.amplitude(m_z)) ** 2 for s in states])
    if weights is None:
        return float(pops.mean())
    w = np.asarray(weights, dtype=float)
    return float((w * pops).sum() / w.sum())
