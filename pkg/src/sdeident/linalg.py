"""Dense real-matrix kernels: matrix exponential, Kronecker algebra,
vectorization, numerical rank, real block eigendecomposition and Krylov
column matrices.

All functions are pure and operate on plain ``numpy`` arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .exceptions import RepeatedEigenvaluesError

__all__ = [
    "matexp",
    "kron_product",
    "kron_sum",
    "vec",
    "unvec",
    "numerical_rank",
    "real_block_eigen",
    "krylov_columns",
    "RealBlockEigen",
    "DEFAULT_RANK_SCALE",
    "EIGEN_GAP_RTOL",
]

# Rank threshold: sigma > DEFAULT_RANK_SCALE * max(shape) * eps * sigma_max.
# Deliberately ~1e3 above the usual SVD cutoff so near-degenerate condition
# matrices are flagged; singular values are always returned for auditing.
DEFAULT_RANK_SCALE = 1e3

# Pairwise eigenvalue gaps below EIGEN_GAP_RTOL * spectral radius raise
# RepeatedEigenvaluesError: borderline spectra must fail loudly, not guess.
EIGEN_GAP_RTOL = 1e-8


def matexp(M: np.ndarray, t: float = 1.0) -> np.ndarray:
    """Matrix exponential ``e^{M t}``.

    Uses scaling-and-squaring with a Pade approximant (scipy.linalg.expm).
    Exact identity for ``t == 0``.

    Parameters
    ----------
    M : (d, d) array_like
        Square matrix.
    t : float
        Time scale.

    Returns
    -------
    (d, d) ndarray
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"matexp requires a square matrix, got shape {M.shape}")
    if not np.isfinite(t):
        raise ValueError("matexp requires finite t")
    if t == 0.0:
        return np.eye(M.shape[0])
    return scipy.linalg.expm(M * t)


def kron_product(M: np.ndarray, N: np.ndarray) -> np.ndarray:
    """Kronecker product: block (i, j) equals ``M[i, j] * N``."""
    return np.kron(np.asarray(M, dtype=float), np.asarray(N, dtype=float))


def kron_sum(M: np.ndarray, N: np.ndarray) -> np.ndarray:
    """Kronecker sum ``M (+) N = M x I + I x N`` for equally sized square inputs.

    With column-stacking vectorization this satisfies
    ``d/dt vec(e^{Mt} C e^{N^T t}) | t=0 = kron_sum(N, M) @ vec(C)``.
    """
    M = np.asarray(M, dtype=float)
    N = np.asarray(N, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"kron_sum requires square matrices, got {M.shape}")
    if M.shape != N.shape:
        raise ValueError(f"kron_sum requires equal dims, got {M.shape} vs {N.shape}")
    d = M.shape[0]
    eye = np.eye(d)
    return np.kron(M, eye) + np.kron(eye, N)


def vec(M: np.ndarray) -> np.ndarray:
    """Column-stacking vectorization of a matrix."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise ValueError("vec expects a matrix")
    return M.reshape(-1, order="F").copy()


def unvec(v: np.ndarray, rows: int, cols: int) -> np.ndarray:
    """Inverse of :func:`vec`; ``unvec(vec(M), *M.shape) == M``."""
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.size != rows * cols:
        raise ValueError(f"cannot unvec length {v.size} into {rows}x{cols}")
    return v.reshape((rows, cols), order="F").copy()


def numerical_rank(
    M: np.ndarray, rel_tol: float | None = None
) -> tuple[int, np.ndarray]:
    """Numerical rank from the SVD.

    Rank is the number of singular values above ``rel_tol * sigma_max``
    (zero matrices have rank 0). All singular values are returned so rank
    decisions can be audited.

    Parameters
    ----------
    M : (p, q) array_like
    rel_tol : float, optional
        Relative threshold; defaults to
        ``DEFAULT_RANK_SCALE * max(p, q) * machine epsilon``.

    Returns
    -------
    rank : int
    singular_values : (min(p, q),) ndarray, descending
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.size == 0:
        raise ValueError(f"numerical_rank requires a nonempty matrix, got {M.shape}")
    if rel_tol is None:
        rel_tol = DEFAULT_RANK_SCALE * max(M.shape) * np.finfo(float).eps
    if rel_tol <= 0:
        raise ValueError("rel_tol must be positive")
    sv = np.linalg.svd(M, compute_uv=False)
    smax = sv[0] if sv.size else 0.0
    if smax == 0.0:
        return 0, sv
    return int(np.sum(sv > rel_tol * smax)), sv


@dataclass(frozen=True)
class RealBlockEigen:
    """Real block eigendecomposition ``M = Q L Q^{-1}``.

    ``blocks`` lists, in order, a scalar for each real eigenvalue followed by
    a 2x2 rotation-scaling block ``[[a, -b], [b, a]]`` for each complex
    conjugate pair ``a +- b i`` (``b > 0``). ``Q`` holds unit-norm real
    eigenvectors for the scalar blocks and ``[Re v | Im v]`` for the pairs,
    phase-fixed so the decomposition is deterministic.

    ``n_real`` counts the scalar blocks; ``n_blocks`` the total.
    """

    Q: np.ndarray
    blocks: tuple
    n_real: int
    n_blocks: int

    @property
    def block_matrix(self) -> np.ndarray:
        """The block-diagonal middle factor L."""
        d = self.Q.shape[0]
        L = np.zeros((d, d))
        pos = 0
        for blk in self.blocks:
            if np.isscalar(blk):
                L[pos, pos] = blk
                pos += 1
            else:
                L[pos : pos + 2, pos : pos + 2] = blk
                pos += 2
        return L

    @property
    def block_slices(self) -> tuple:
        """Row ranges of each block inside Q^{-1} gamma coordinates."""
        out = []
        pos = 0
        for blk in self.blocks:
            size = 1 if np.isscalar(blk) else 2
            out.append(slice(pos, pos + size))
            pos += size
        return tuple(out)

    @property
    def block_kinds(self) -> tuple:
        return tuple(
            "real" if np.isscalar(blk) else "complex-pair" for blk in self.blocks
        )

    def reassemble(self) -> np.ndarray:
        return self.Q @ self.block_matrix @ np.linalg.inv(self.Q)


def _fix_sign(v: np.ndarray) -> np.ndarray:
    # first component significantly nonzero made positive
    nz = np.flatnonzero(np.abs(v) > 1e-12 * np.abs(v).max())
    if nz.size and v[nz[0]] < 0:
        return -v
    return v


def real_block_eigen(M: np.ndarray) -> RealBlockEigen:
    """Eigendecomposition of a real matrix with distinct eigenvalues.

    Real eigenvalues come first (ascending), then complex pairs ordered by
    (real part, imaginary part). Raises :class:`RepeatedEigenvaluesError`
    when any two eigenvalues are closer than ``EIGEN_GAP_RTOL`` times the
    spectral radius, since the block form is only reliable for simple
    spectra.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"real_block_eigen requires a square matrix, got {M.shape}")
    d = M.shape[0]
    w, V = np.linalg.eig(M)

    radius = np.max(np.abs(w)) if d else 0.0
    gap_tol = EIGEN_GAP_RTOL * max(radius, np.finfo(float).tiny)
    if d > 1:
        gaps = np.abs(w[:, None] - w[None, :])[np.triu_indices(d, k=1)]
        if gaps.min() <= gap_tol:
            raise RepeatedEigenvaluesError(
                f"minimum eigenvalue gap {gaps.min():.3e} below tolerance "
                f"{gap_tol:.3e}; eigenvalues {np.sort_complex(w)}"
            )

    # distinctness guarantees |Im| > gap_tol/2 for genuinely complex eigenvalues
    real_idx = [i for i in range(d) if abs(w[i].imag) <= 0.5 * gap_tol]
    real_idx.sort(key=lambda i: w[i].real)
    pair_idx = [i for i in range(d) if abs(w[i].imag) > 0.5 * gap_tol and w[i].imag < 0]
    pair_idx.sort(key=lambda i: (w[i].real, -w[i].imag))

    cols = []
    blocks = []
    for i in real_idx:
        v = V[:, i].real.copy()
        v /= np.linalg.norm(v)
        cols.append(_fix_sign(v))
        blocks.append(float(w[i].real))
    for i in pair_idx:
        # eigenvector of a - b i (b > 0): M [Re v | Im v] = [Re v | Im v] [[a,-b],[b,a]]
        v = V[:, i].copy()
        v /= np.linalg.norm(v)
        j = np.flatnonzero(np.abs(v) > 1e-12 * np.abs(v).max())[0]
        v *= np.exp(-1j * np.angle(v[j]))
        a, b = w[i].real, -w[i].imag
        cols.append(np.column_stack([v.real, v.imag]))
        blocks.append(np.array([[a, -b], [b, a]]))

    Q = np.column_stack(cols)
    return RealBlockEigen(
        Q=Q, blocks=tuple(blocks), n_real=len(real_idx), n_blocks=len(blocks)
    )


def krylov_columns(M: np.ndarray, seeds, depth: int) -> np.ndarray:
    """Stack ``[g | M g | ... | M^{depth-1} g]`` horizontally for each seed.

    Returns a ``d x (depth * len(seeds))`` matrix with each seed's Krylov
    block in seed order.
    """
    M = np.asarray(M, dtype=float)
    if depth < 1:
        raise ValueError("depth must be >= 1")
    cols = []
    for g in seeds:
        g = np.asarray(g, dtype=float).reshape(-1)
        if g.size != M.shape[1]:
            raise ValueError(
                f"seed length {g.size} does not match matrix dim {M.shape[1]}"
            )
        v = g
        for _ in range(depth):
            cols.append(v)
            v = M @ v
    return np.column_stack(cols)
