"""Three-qubit pure states, observables and the three-tangle.

Basis convention: amplitude index ``i = 4*i_A + 2*i_B + i_C``, so index 0 is
``|000>``, index 1 is ``|001>`` and index 7 is ``|111>``.  The three-tangle is
invariant under local unitaries but the intermediate monomial sums d1, d2, d3
are not, so this ordering is fixed everywhere in the package.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

DIM = 8
NORM_TOL = 1e-9
HERMITIAN_TOL = 1e-12
UNITARY_TOL = 1e-10
SYMMETRIZE_FLOOR = 1e-8


class NormalizationError(ValueError):
    """Raised when a state vector is not normalized."""


class SymmetrizationError(ValueError):
    """Raised when a state has no component in the symmetric subspace."""


class ConsistencyError(RuntimeError):
    """An internal numerical consistency check failed."""


def _as_vector(amplitudes) -> np.ndarray:
    vec = np.asarray(amplitudes, dtype=complex).reshape(-1)
    if vec.shape != (DIM,):
        raise ValueError(f"expected {DIM} amplitudes, got {vec.shape[0]}")
    if not np.all(np.isfinite(vec)):
        raise ValueError("amplitudes must be finite")
    return vec


class PureState:
    """Normalized three-qubit state vector (read-only)."""

    __slots__ = ("_amps",)

    def __init__(self, amplitudes, renormalize: bool = False):
        vec = _as_vector(amplitudes).copy()
        norm = float(np.linalg.norm(vec))
        if renormalize:
            if norm == 0.0:
                raise NormalizationError("cannot renormalize the zero vector")
            vec /= norm
        elif abs(norm * norm - 1.0) > NORM_TOL:
            raise NormalizationError(f"state norm^2 = {norm * norm!r}, expected 1")
        vec.setflags(write=False)
        self._amps = vec

    @property
    def amplitudes(self) -> np.ndarray:
        return self._amps

    def overlap(self, other: "PureState") -> complex:
        """Inner product <self|other>."""
        return complex(np.vdot(self._amps, other._amps))

    def fidelity(self, other: "PureState") -> float:
        return abs(self.overlap(other)) ** 2

    def projector(self) -> np.ndarray:
        return np.outer(self._amps, self._amps.conj())

    def to_json(self) -> dict:
        return {"amplitudes": [[float(z.real), float(z.imag)] for z in self._amps]}

    @classmethod
    def from_json(cls, data: dict) -> "PureState":
        try:
            pairs = data["amplitudes"]
            amps = [complex(float(re), float(im)) for re, im in pairs]
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"malformed state JSON: {exc}") from exc
        return cls(amps)

    def __eq__(self, other):
        if not isinstance(other, PureState):
            return NotImplemented
        return bool(np.array_equal(self._amps, other._amps))

    def __hash__(self):
        return hash(self._amps.tobytes())

    def __repr__(self):
        terms = [
            f"({z.real:+.4g}{z.imag:+.4g}j)|{i:03b}>"
            for i, z in enumerate(self._amps)
            if abs(z) > 1e-12
        ]
        return "PureState(" + " ".join(terms) + ")"


@dataclass(frozen=True)
class TangleBreakdown:
    d1: complex
    d2: complex
    d3: complex
    tau3: float
    tau3_sq: float


class Observable:
    """Hermitian 8x8 operator with a human-readable label."""

    __slots__ = ("_matrix", "label")

    def __init__(self, matrix, label: str = ""):
        mat = np.array(matrix, dtype=complex)
        if mat.shape != (DIM, DIM):
            raise ValueError(f"observable must be {DIM}x{DIM}, got {mat.shape}")
        if not np.all(np.isfinite(mat)):
            raise ValueError("observable entries must be finite")
        if np.max(np.abs(mat - mat.conj().T)) > HERMITIAN_TOL:
            raise ValueError("observable is not Hermitian")
        # symmetrize away sub-tolerance asymmetry so expectations are exactly real
        mat = 0.5 * (mat + mat.conj().T)
        mat.setflags(write=False)
        self._matrix = mat
        self.label = label

    @property
    def matrix(self) -> np.ndarray:
        return self._matrix

    def shifted(self, c: float) -> "Observable":
        """Return ``W + c*1``."""
        return Observable(self._matrix + c * np.eye(DIM), f"{self.label}{c:+g}*1")

    def scaled(self, c: float) -> "Observable":
        return Observable(c * self._matrix, f"{c:g}*({self.label})")

    def eigvalsh(self) -> np.ndarray:
        return np.linalg.eigvalsh(self._matrix)

    def to_json(self) -> dict:
        return {
            "label": self.label,
            "matrix": [
                [[float(z.real), float(z.imag)] for z in row] for row in self._matrix
            ],
        }

    @classmethod
    def from_json(cls, data: dict) -> "Observable":
        try:
            rows = data["matrix"]
            mat = [[complex(float(re), float(im)) for re, im in row] for row in rows]
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"malformed observable JSON: {exc}") from exc
        return cls(mat, data.get("label", ""))

    def __repr__(self):
        return f"Observable({self.label!r})"


# -- named states ------------------------------------------------------------

_SQRT2 = math.sqrt(2.0)
_SQRT3 = math.sqrt(3.0)


def basis_state(index: int) -> PureState:
    if not 0 <= index < DIM:
        raise ValueError(f"basis index must be in 0..7, got {index}")
    vec = np.zeros(DIM, dtype=complex)
    vec[index] = 1.0
    return PureState(vec)


def _from_terms(terms: dict[int, float]) -> PureState:
    vec = np.zeros(DIM, dtype=complex)
    for idx, amp in terms.items():
        vec[idx] = amp
    return PureState(vec, renormalize=True)


GHZ = _from_terms({0: 1 / _SQRT2, 7: 1 / _SQRT2})
GHZ_MINUS = _from_terms({0: 1 / _SQRT2, 7: -1 / _SQRT2})
W = _from_terms({1: 1 / _SQRT3, 2: 1 / _SQRT3, 4: 1 / _SQRT3})
W_BAR = _from_terms({6: 1 / _SQRT3, 5: 1 / _SQRT3, 3: 1 / _SQRT3})

_NAMED = {"ghz": GHZ, "ghz-": GHZ_MINUS, "ghz_minus": GHZ_MINUS, "w": W, "wbar": W_BAR, "w_bar": W_BAR}


def named_state(name: str) -> PureState:
    """Look up ``ghz``, ``ghz-``, ``w``, ``wbar`` or ``basis:<i>`` / ``|ijk>``."""
    key = name.strip().lower()
    if key in _NAMED:
        return _NAMED[key]
    if key.startswith("basis:"):
        return basis_state(int(key.split(":", 1)[1]))
    if key.startswith("|") and key.endswith(">") and len(key) == 5:
        return basis_state(int(key[1:4], 2))
    raise ValueError(f"unknown state name {name!r}")


def symmetric_basis() -> np.ndarray:
    """Orthonormal 8x4 basis of the permutation-symmetric subspace.

    Columns: |000>, W, W_bar, |111>.
    """
    cols = [basis_state(0), W, W_BAR, basis_state(7)]
    return np.column_stack([s.amplitudes for s in cols])


# -- three-tangle ------------------------------------------------------------


def three_tangle(state: PureState) -> TangleBreakdown:
    """Three-tangle from the explicit monomial sums d1, d2, d3."""
    if not isinstance(state, PureState):
        state = PureState(state)
    a = state.amplitudes
    a000, a001, a010, a011, a100, a101, a110, a111 = a
    d1 = a000**2 * a111**2 + a001**2 * a110**2 + a010**2 * a101**2 + a100**2 * a011**2
    d2 = (
        a000 * a111 * a011 * a100
        + a000 * a111 * a101 * a010
        + a000 * a111 * a110 * a001
        + a011 * a100 * a101 * a010
        + a011 * a100 * a110 * a001
        + a101 * a010 * a110 * a001
    )
    d3 = a000 * a110 * a101 * a011 + a111 * a001 * a010 * a100
    tau = 4.0 * abs(d1 - 2.0 * d2 + 4.0 * d3)
    return TangleBreakdown(complex(d1), complex(d2), complex(d3), float(tau), float(tau * tau))


def hyperdet(psi: np.ndarray) -> np.ndarray:
    """Cayley hyperdeterminant of amplitude arrays of shape (..., 8).

    Equal to d1 - 2*d2 + 4*d3, written in factored form
    ``u**2 - 4*v*t`` which is cheaper and gives the gradient directly.
    """
    a = psi
    u = a[..., 0] * a[..., 7] - a[..., 1] * a[..., 6] - a[..., 2] * a[..., 5] + a[..., 4] * a[..., 3]
    v = a[..., 0] * a[..., 3] - a[..., 1] * a[..., 2]
    t = a[..., 4] * a[..., 7] - a[..., 5] * a[..., 6]
    return u * u - 4.0 * v * t


def hyperdet_and_grad(psi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Hyperdeterminant and its holomorphic gradient dD/dpsi, shape (..., 8)."""
    a = psi
    u = a[..., 0] * a[..., 7] - a[..., 1] * a[..., 6] - a[..., 2] * a[..., 5] + a[..., 4] * a[..., 3]
    v = a[..., 0] * a[..., 3] - a[..., 1] * a[..., 2]
    t = a[..., 4] * a[..., 7] - a[..., 5] * a[..., 6]
    det = u * u - 4.0 * v * t
    u2 = 2.0 * u
    v4 = 4.0 * v
    t4 = 4.0 * t
    grad = np.empty_like(a)
    grad[..., 0] = u2 * a[..., 7] - t4 * a[..., 3]
    grad[..., 1] = -u2 * a[..., 6] + t4 * a[..., 2]
    grad[..., 2] = -u2 * a[..., 5] + t4 * a[..., 1]
    grad[..., 3] = u2 * a[..., 4] - t4 * a[..., 0]
    grad[..., 4] = u2 * a[..., 3] - v4 * a[..., 7]
    grad[..., 5] = -u2 * a[..., 2] + v4 * a[..., 6]
    grad[..., 6] = -u2 * a[..., 1] + v4 * a[..., 5]
    grad[..., 7] = u2 * a[..., 0] - v4 * a[..., 4]
    return det, grad


def tau3_of(psi: np.ndarray) -> np.ndarray:
    """Vectorized three-tangle of (already normalized) amplitude arrays."""
    return 4.0 * np.abs(hyperdet(psi))


# -- observables ---------------------------------------------------------------


def expectation(obs: Observable, state: PureState) -> float:
    """<psi|W|psi> as a real number."""
    a = state.amplitudes
    val = np.vdot(a, obs.matrix @ a)
    if abs(val.imag) > 1e-9:
        raise ConsistencyError(f"expectation has imaginary part {val.imag!r}")
    return float(val.real)


def projector_witness(phi: PureState, alpha: float) -> Observable:
    """``alpha*1 - |phi><phi|``."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    return Observable(alpha * np.eye(DIM) - phi.projector(), f"{alpha:g}*1-proj")


def projector(phi: PureState, label: str = "proj") -> Observable:
    return Observable(phi.projector(), label)


def skew_witness(omega: complex) -> Observable:
    """``-|GHZ><GHZ| - omega|GHZ><W| - conj(omega)|W><GHZ|``."""
    g = GHZ.amplitudes
    w = W.amplitudes
    off = omega * np.outer(g, w.conj())
    mat = -np.outer(g, g.conj()) - off - off.conj().T
    return Observable(mat, f"skew(omega={omega})")


# -- local operations ------------------------------------------------------------


def _check_unitary(u, name: str) -> np.ndarray:
    u = np.asarray(u, dtype=complex)
    if u.shape != (2, 2):
        raise ValueError(f"{name} must be 2x2")
    if np.max(np.abs(u.conj().T @ u - np.eye(2))) > UNITARY_TOL:
        raise ValueError(f"{name} is not unitary")
    return u


def apply_local_unitary(state: PureState, u_a, u_b, u_c) -> PureState:
    """Apply ``u_a (x) u_b (x) u_c`` to a state."""
    ua = _check_unitary(u_a, "u_a")
    ub = _check_unitary(u_b, "u_b")
    uc = _check_unitary(u_c, "u_c")
    tensor = state.amplitudes.reshape(2, 2, 2)
    out = np.einsum("ai,bj,ck,ijk->abc", ua, ub, uc, tensor)
    return PureState(out.reshape(DIM), renormalize=True)


def random_unitary(rng: np.random.Generator, n: int = 2) -> np.ndarray:
    """Haar-random n x n unitary (QR of a complex Ginibre matrix)."""
    z = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / math.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


def random_state(rng: np.random.Generator) -> PureState:
    z = rng.standard_normal(DIM) + 1j * rng.standard_normal(DIM)
    return PureState(z, renormalize=True)


def permute_qubits(state: PureState, perm: Sequence[int]) -> PureState:
    """Reorder tensor factors: output qubit ``k`` is input qubit ``perm[k]``."""
    tensor = state.amplitudes.reshape(2, 2, 2)
    return PureState(np.transpose(tensor, perm).reshape(DIM))


def permutation_symmetrize(state: PureState) -> PureState:
    """Project coherently onto span{|000>, W, W_bar, |111>} and renormalize."""
    basis = symmetric_basis()
    vec = basis @ (basis.conj().T @ state.amplitudes)
    norm = float(np.linalg.norm(vec))
    if norm < SYMMETRIZE_FLOOR:
        raise SymmetrizationError("state has no permutation-symmetric component")
    return PureState(vec / norm)


def symmetric_weight(state: PureState) -> float:
    """Squared norm of the projection onto the symmetric subspace."""
    basis = symmetric_basis()
    return float(np.linalg.norm(basis.conj().T @ state.amplitudes) ** 2)
