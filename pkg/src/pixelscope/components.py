"""Numerical core: streaming covariance, exact and randomized PCA,
projection/reconstruction, whitening, and symmetric FastICA.

All bases use a deterministic sign convention: within each component the
entry of largest absolute value is positive (ties broken by lowest index).
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .datamatrix import DataMatrix
from .errors import ValidationError

log = logging.getLogger(__name__)

# Exact eigendecomposition is O(p^3); above this dimension use the
# seeded randomized truncated method.
EXACT_P_THRESHOLD = 5000

_RANDOMIZED_OVERSAMPLING = 10
_RANDOMIZED_POWER_ITERS = 4


@dataclass(frozen=True)
class ComponentBasis:
    mean: np.ndarray  # (p,)
    components: np.ndarray  # (K, p), rows unit-norm, sign-oriented
    eigenvalues: np.ndarray  # (K,), non-negative, descending
    total_variance: float  # trace of the sample covariance
    shape: tuple[int, int, int]
    kind: str  # "pca" | "ica"
    converged: bool = True
    n_iter: int = 0
    # ICA only: rows recover sources from centered pixel vectors / whitened coords
    unmixing: Optional[np.ndarray] = None
    unmixing_whitened: Optional[np.ndarray] = None

    @property
    def k(self) -> int:
        return self.components.shape[0]

    @property
    def p(self) -> int:
        return self.components.shape[1]

    @property
    def explained_variance_ratio(self) -> np.ndarray:
        if self.total_variance <= 0:
            return np.zeros_like(self.eigenvalues)
        return self.eigenvalues / self.total_variance


def orient_sign(v: np.ndarray) -> np.ndarray:
    """Flip v so its largest-magnitude entry is positive (first on ties)."""
    idx = int(np.argmax(np.abs(v)))
    return -v if v[idx] < 0 else v


def orient_rows(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sign-orient each row; returns (oriented, per-row sign factors)."""
    signs = np.ones(m.shape[0])
    out = m.copy()
    for i in range(m.shape[0]):
        idx = int(np.argmax(np.abs(m[i])))
        if m[i, idx] < 0:
            out[i] = -m[i]
            signs[i] = -1.0
    return out, signs


def _canonical_row_order(x: np.ndarray) -> np.ndarray:
    """Row permutation derived from row content (hash of each row's bytes).

    Covariance is permutation-invariant, so accumulating in this canonical
    order makes the floating-point result bitwise independent of the input
    row order. Equal rows hash equally and are interchangeable.
    """
    import hashlib

    keys = np.empty(x.shape[0], dtype=np.uint64)
    rows = np.ascontiguousarray(x)
    for i in range(rows.shape[0]):
        keys[i] = int.from_bytes(
            hashlib.blake2b(rows[i].tobytes(), digest_size=8).digest(), "little"
        )
    return np.argsort(keys, kind="stable")


def mean_and_covariance(
    matrix: DataMatrix, block_rows: int = 1024
) -> tuple[np.ndarray, np.ndarray]:
    """Column mean and sample covariance (divisor n-1), accumulated over
    fixed-order row blocks so results are reproducible and the full matrix
    is touched once. Rows are visited in a canonical content-derived order,
    making the result exactly invariant to input row order."""
    x = matrix.data
    n, p = x.shape
    if n < 2:
        raise ValidationError(f"covariance needs n >= 2 rows, got {n}")
    x = x[_canonical_row_order(x)]

    total = np.zeros(p)
    outer = np.zeros((p, p))
    for start in range(0, n, block_rows):
        block = x[start : start + block_rows]
        total += block.sum(axis=0)
        outer += block.T @ block
    mean = total / n
    cov = (outer - n * np.outer(mean, mean)) / (n - 1)
    cov = 0.5 * (cov + cov.T)  # symmetrize accumulated rounding
    return mean, cov


def column_variance_total(matrix: DataMatrix, block_rows: int = 4096) -> float:
    """Trace of the sample covariance without materializing it."""
    x = matrix.data
    n = x.shape[0]
    total = np.zeros(x.shape[1])
    sq = np.zeros(x.shape[1])
    for start in range(0, n, block_rows):
        block = x[start : start + block_rows]
        total += block.sum(axis=0)
        sq += (block * block).sum(axis=0)
    mean = total / n
    return float(np.sum(sq - n * mean * mean) / (n - 1))


def _fit_pca_exact(matrix: DataMatrix, k: int) -> tuple[np.ndarray, np.ndarray, np.ndarray, float]:
    mean, cov = mean_and_covariance(matrix)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals = np.clip(evals[order][:k], 0.0, None)
    comps = evecs[:, order][:, :k].T
    return mean, comps, evals, float(np.trace(cov))


def _fit_pca_randomized(
    matrix: DataMatrix, k: int, seed: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray, float]:
    """Seeded randomized range finder on the centered data matrix; singular
    values of X_c give eigenvalues s^2/(n-1)."""
    x = matrix.data
    n, p = x.shape
    mean = x.mean(axis=0)
    xc = x - mean

    ell = k + _RANDOMIZED_OVERSAMPLING
    if ell > p:
        ell = p
    rng = np.random.default_rng(seed)
    omega = rng.standard_normal((p, ell))
    q, _ = np.linalg.qr(xc @ omega)
    for _ in range(_RANDOMIZED_POWER_ITERS):
        q, _ = np.linalg.qr(xc.T @ q)
        q, _ = np.linalg.qr(xc @ q)
    b = q.T @ xc  # (ell, p)
    _, s, vt = np.linalg.svd(b, full_matrices=False)
    evals = (s[:k] ** 2) / (n - 1)
    comps = vt[:k]
    return mean, comps, evals, column_variance_total(matrix)


def fit_pca(
    matrix: DataMatrix, k: int, method: str = "auto", seed: int = 0
) -> ComponentBasis:
    """Top-k eigenvectors of the sample covariance, eigenvalues descending.

    method "exact" does a full symmetric eigendecomposition; "randomized"
    uses a seeded range finder (oversampling 10, 4 power iterations);
    "auto" picks exact for p <= 5000.
    """
    n, p = matrix.n, matrix.p
    if not 1 <= k <= min(n - 1, p):
        raise ValidationError(f"k={k} out of range [1, min(n-1, p)] = [1, {min(n - 1, p)}]")
    if method == "auto":
        method = "exact" if p <= EXACT_P_THRESHOLD else "randomized"
    if method == "exact":
        mean, comps, evals, total = _fit_pca_exact(matrix, k)
    elif method == "randomized":
        mean, comps, evals, total = _fit_pca_randomized(matrix, k, seed)
    else:
        raise ValidationError(f"unknown PCA method '{method}'")

    comps = comps / np.linalg.norm(comps, axis=1, keepdims=True)
    comps, _ = orient_rows(comps)
    return ComponentBasis(
        mean=mean,
        components=comps,
        eigenvalues=evals,
        total_variance=total,
        shape=matrix.shape,
        kind="pca",
    )


def project(basis: ComponentBasis, matrix: DataMatrix, k: Optional[int] = None) -> DataMatrix:
    """Scores (rows - mean) @ components[:k].T as an (n, k) matrix."""
    k = basis.k if k is None else k
    if matrix.p != basis.p:
        raise ValidationError(f"matrix dims {matrix.p} != basis dims {basis.p}")
    if not 1 <= k <= basis.k:
        raise ValidationError(f"k={k} out of range [1, {basis.k}]")
    scores = (matrix.data - basis.mean) @ basis.components[:k].T
    return DataMatrix(data=scores, shape=(1, k, 1), row_ids=matrix.row_ids)


def reconstruct(basis: ComponentBasis, scores: DataMatrix) -> DataMatrix:
    """mean + scores @ components[:k]; inverse of project at full rank."""
    k = scores.p
    if k > basis.k:
        raise ValidationError(f"scores width {k} exceeds basis size {basis.k}")
    rows = basis.mean + scores.data @ basis.components[:k]
    return DataMatrix(data=rows, shape=basis.shape, row_ids=scores.row_ids)


def whiten(matrix: DataMatrix, basis: ComponentBasis, k: int) -> DataMatrix:
    """PCA scores scaled to unit variance: out_ij = score_ij / sqrt(lambda_j).

    Errors if any requested eigenvalue is near zero (below 1e-10 * lambda_1).
    """
    if not 1 <= k <= basis.k:
        raise ValidationError(f"k={k} out of range [1, {basis.k}]")
    lams = basis.eigenvalues[:k]
    floor = 1e-10 * basis.eigenvalues[0]
    bad = np.nonzero(lams <= floor)[0]
    if bad.size:
        raise ValidationError(
            f"eigenvalue {lams[bad[0]]:.3e} at index {int(bad[0])} is near zero; "
            f"cannot whiten {k} directions"
        )
    scores = project(basis, matrix, k)
    return DataMatrix(
        data=scores.data / np.sqrt(lams), shape=(1, k, 1), row_ids=matrix.row_ids
    )


@dataclass(frozen=True)
class ICAParams:
    k: int
    pre_pca_k: int
    tol: float = 1e-4
    max_iter: int = 200
    seed: int = 0
    # contrast is fixed log-cosh: g(u) = tanh(u), a = 1

    def validate(self, p: int) -> None:
        if not 1 <= self.k <= self.pre_pca_k <= p:
            raise ValidationError(
                f"need 1 <= k <= pre_pca_k <= p, got k={self.k}, "
                f"pre_pca_k={self.pre_pca_k}, p={p}"
            )
        if self.tol <= 0:
            raise ValidationError("tol must be > 0")
        if self.max_iter < 1:
            raise ValidationError("max_iter must be >= 1")


def _sym_decorrelate(w: np.ndarray) -> np.ndarray:
    """W <- (W W^T)^(-1/2) W; rows become orthonormal."""
    s, u = np.linalg.eigh(w @ w.T)
    return (u / np.sqrt(s)) @ u.T @ w


def fit_ica(matrix: DataMatrix, params: ICAParams) -> ComponentBasis:
    """Symmetric FastICA with tanh contrast on PCA-whitened data.

    Components are the mixing directions mapped back to pixel space,
    unit-normalized, sign-oriented and ordered by explained variance in the
    original space (stored in `eigenvalues`, used only for ordering).
    Non-convergence is not an error: the result carries converged=False.
    """
    params.validate(matrix.p)
    if matrix.n < 10 * params.k:
        raise ValidationError(
            f"need n >= 10*k samples for ICA, got n={matrix.n}, k={params.k}"
        )

    pca = fit_pca(matrix, params.pre_pca_k, method="auto", seed=params.seed)
    z = whiten(matrix, pca, params.pre_pca_k).data  # (n, m)
    n, m = z.shape

    rng = np.random.default_rng(params.seed)
    w = _sym_decorrelate(rng.standard_normal((params.k, m)))

    converged = False
    it = 0
    for it in range(1, params.max_iter + 1):
        wz = z @ w.T  # (n, k)
        g = np.tanh(wz)
        g_prime = 1.0 - g * g
        w_new = (g.T @ z) / n - g_prime.mean(axis=0)[:, None] * w
        w_new = _sym_decorrelate(w_new)
        change = np.max(1.0 - np.abs(np.sum(w_new * w, axis=1)))
        w = w_new
        if change < params.tol:
            converged = True
            break
    if not converged:
        log.warning("FastICA did not converge in %d iterations", params.max_iter)

    lams = pca.eigenvalues  # (m,)
    mixing = (w * np.sqrt(lams)) @ pca.components  # (k, p) pixel-space directions
    unmixing = (w / np.sqrt(lams)) @ pca.components  # (k, p), s = (x - mean) @ unmixing.T

    expl_var = (w * w) @ lams  # variance each source carries in pixel space
    order = np.argsort(expl_var)[::-1]
    mixing, unmixing, w, expl_var = mixing[order], unmixing[order], w[order], expl_var[order]

    norms = np.linalg.norm(mixing, axis=1, keepdims=True)
    mixing = mixing / norms
    mixing, signs = orient_rows(mixing)
    unmixing = unmixing * signs[:, None]
    w = w * signs[:, None]

    return ComponentBasis(
        mean=pca.mean,
        components=mixing,
        eigenvalues=expl_var,
        total_variance=pca.total_variance,
        shape=matrix.shape,
        kind="ica",
        converged=converged,
        n_iter=it,
        unmixing=unmixing,
        unmixing_whitened=w,
    )


def save_basis(basis: ComponentBasis, json_path: str | Path) -> None:
    """JSON metadata plus raw little-endian float64 sidecar (<name>.bin):
    mean, then components row-major, then eigenvalues."""
    json_path = Path(json_path)
    bin_path = json_path.with_suffix(".bin")
    payload = np.concatenate(
        [basis.mean, basis.components.reshape(-1), basis.eigenvalues]
    ).astype("<f8")
    bin_path.write_bytes(payload.tobytes())
    meta = {
        "kind": basis.kind,
        "k": basis.k,
        "p": basis.p,
        "shape": list(basis.shape),
        "total_variance": basis.total_variance,
        "converged": basis.converged,
        "n_iter": basis.n_iter,
        "binary": bin_path.name,
        "binary_layout": "float64-le: mean[p], components[k*p] row-major, eigenvalues[k]",
    }
    json_path.write_text(json.dumps(meta, indent=2), encoding="utf-8")


def load_basis(json_path: str | Path) -> ComponentBasis:
    json_path = Path(json_path)
    meta = json.loads(json_path.read_text(encoding="utf-8"))
    raw = np.frombuffer((json_path.parent / meta["binary"]).read_bytes(), dtype="<f8")
    k, p = meta["k"], meta["p"]
    mean = raw[:p].copy()
    comps = raw[p : p + k * p].reshape(k, p).copy()
    evals = raw[p + k * p : p + k * p + k].copy()
    return ComponentBasis(
        mean=mean,
        components=comps,
        eigenvalues=evals,
        total_variance=meta["total_variance"],
        shape=tuple(meta["shape"]),
        kind=meta["kind"],
        converged=meta.get("converged", True),
        n_iter=meta.get("n_iter", 0),
    )
