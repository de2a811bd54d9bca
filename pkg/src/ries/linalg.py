"""Small dense linear-algebra helpers shared by all modules.

Conventions fixed here and used everywhere else:

- Vectorization is **column-major**: ``vec(A) = A.flatten(order="F")``,
  so ``vec(A X B) = (B.T kron A) vec(X)``.
- Matrix exponentials of Hermitian generators go through an
  eigendecomposition (``expm_hermitian``), never Padé.
"""

from __future__ import annotations

import numpy as np

HERMITICITY_TOL = 1e-12


def dag(a: np.ndarray) -> np.ndarray:
    return a.conj().T


def vec(a: np.ndarray) -> np.ndarray:
    """Column-major vectorization of a square matrix."""
    return np.asarray(a).flatten(order="F")


def unvec(v: np.ndarray, d: int | None = None) -> np.ndarray:
    """Inverse of :func:`vec`."""
    v = np.asarray(v)
    if d is None:
        d = round(np.sqrt(v.size))
        if d * d != v.size:
            raise ValueError(f"vector of size {v.size} is not a vectorized square matrix")
    return v.reshape((d, d), order="F")


def left_mult_matrix(a: np.ndarray) -> np.ndarray:
    """Matrix of X -> A X in the column-major vectorized picture."""
    return np.kron(np.eye(a.shape[0]), a)


def right_mult_matrix(b: np.ndarray) -> np.ndarray:
    """Matrix of X -> X B in the column-major vectorized picture."""
    return np.kron(b.T, np.eye(b.shape[0]))


def hermiticity_defect(a: np.ndarray) -> float:
    return float(np.linalg.norm(a - dag(a), 2))


def require_hermitian(a: np.ndarray, name: str = "matrix", tol: float = HERMITICITY_TOL) -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be square, got shape {a.shape}")
    defect = hermiticity_defect(a)
    scale = max(1.0, float(np.linalg.norm(a, 2)))
    if defect > tol * scale:
        raise ValueError(f"{name} is not Hermitian (defect {defect:.3e})")
    return a


def expm_hermitian(h: np.ndarray, scale: complex = 1.0) -> np.ndarray:
    """exp(scale * h) for Hermitian h, via eigendecomposition."""
    w, u = np.linalg.eigh(h)
    return (u * np.exp(scale * w)) @ dag(u)


def embed(op: np.ndarray, dims: list[int], sites: list[int]) -> np.ndarray:
    """Embed an operator acting on `sites` (in that tensor order) into the
    full product space with factor dimensions `dims`.

    `op` must act on the tensor product of the listed sites, ordered as given.
    """
    n = len(dims)
    rest = [s for s in range(n) if s not in sites]
    order = sites + rest
    dim_rest = int(np.prod([dims[s] for s in rest], dtype=np.int64)) if rest else 1
    big = np.kron(op, np.eye(dim_rest))
    # permute tensor factors from `order` back to 0..n-1
    shaped = big.reshape([dims[s] for s in order] * 2)
    inv = np.argsort(order)
    perm = list(inv) + [n + i for i in inv]
    shaped = shaped.transpose(perm)
    dim_tot = int(np.prod(dims, dtype=np.int64))
    return shaped.reshape(dim_tot, dim_tot)


def spectral_norm(a: np.ndarray) -> float:
    return float(np.linalg.norm(a, 2))


def nuclear_norm(a: np.ndarray) -> float:
    return float(np.linalg.svd(a, compute_uv=False).sum())


def random_hermitian(d: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    a = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    return scale * (a + dag(a)) / 2.0


def random_complex_matrix(d: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    return scale * (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d)))


class KahanAccumulator:
    """Compensated (Kahan) running sum of same-shape complex arrays.

    Supports associative merging: ``merge`` combines two accumulators with
    error within rounding of the direct compensated sum.
    """

    def __init__(self, shape):
        self._sum = np.zeros(shape, dtype=complex)
        self._comp = np.zeros(shape, dtype=complex)
        self.count = 0

    def add(self, x: np.ndarray) -> None:
        y = x - self._comp
        t = self._sum + y
        self._comp = (t - self._sum) - y
        self._sum = t
        self.count += 1

    def merge(self, other: "KahanAccumulator") -> None:
        self.add(other._sum - other._comp)
        # `add` bumped count by 1; account for the true number of samples
        self.count += other.count - 1

    @property
    def total(self) -> np.ndarray:
        return self._sum - self._comp

    @property
    def mean(self) -> np.ndarray:
        if self.count == 0:
            raise ZeroDivisionError("empty accumulator")
        return self.total / self.count
