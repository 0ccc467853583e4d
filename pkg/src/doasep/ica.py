"""Blind extraction of hidden spectral structure from fit residuals.

The n residual columns are treated as n mixture channels observed at p
wavelength pixels. After second-order whitening, the fourth-order
cumulant slices are jointly diagonalized by Jacobi rotations; rows of
the unmixed output are candidate hidden spectra. A scan over the
component count d scores how stably each candidate persists, which is
what separates a real absorber from a noise direction.

Everything here is deterministic: no randomized initialization anywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import SpectraMatrix
from .errors import DegenerateError, ParamError, PreconditionError, SymmetryError

__all__ = [
    "WhiteningResult",
    "IcaResult",
    "StabilityReport",
    "ComponentCluster",
    "center_whiten",
    "cumulant_matrices",
    "joint_diagonalize",
    "jade",
    "stability_scan",
    "match_component",
    "amari_index",
    "structure_threshold",
]

GAUSSIAN_KURTOSIS_FLOOR = 0.2  # minimum |excess kurtosis| ever treated as structure


def structure_threshold(p: int, d: int) -> float:
    """Kurtosis magnitude below which components look like Gaussian noise.

    The rotation step actively maximizes fourth-order contrast, so the
    null distribution of max |kurtosis| over pure Gaussian data grows
    with the component count; the linear-in-d factor tracks that
    selection effect (calibrated on seeded noise at p = 1024), on top of
    the sqrt(24/p) sampling scale of a single fixed direction.
    """
    return max(GAUSSIAN_KURTOSIS_FLOOR, np.sqrt(24.0 / p) * (1.3 + 1.05 * d))


@dataclass(eq=False, repr=False)
class WhiteningResult:
    whitener: np.ndarray  # d x n
    mean: np.ndarray  # length n
    retained_d: int
    eigenvalue_spectrum: np.ndarray  # length n, descending


@dataclass(eq=False, repr=False)
class IcaResult:
    """Demixing matrix, recovered source rows, and their kurtosis.

    Rows of ``sources`` are the candidate spectra (length p), unit norm,
    sign fixed so the sample of largest magnitude is positive, ordered by
    descending |kurtosis|. ``demixing @ (channels - mean)`` reproduces
    ``sources`` exactly.
    """

    demixing: np.ndarray  # d x n
    sources: np.ndarray  # d x p
    kurtosis: np.ndarray  # length d
    d: int
    kurtosis_threshold: float = GAUSSIAN_KURTOSIS_FLOOR

    @property
    def has_structure(self) -> bool:
        """False when every component looks Gaussian (no reliable structure)."""
        return bool(np.any(np.abs(self.kurtosis) >= self.kurtosis_threshold))


@dataclass
class ComponentCluster:
    """One candidate hidden spectrum tracked across component counts."""

    representative: np.ndarray  # length p, from the largest-d run
    persistence: float  # fraction of scanned d values with a match
    correlations: dict[int, float]  # d -> |corr| of the matched component
    best_reference: str | None = None
    best_reference_corr: float = 0.0


@dataclass
class StabilityReport:
    d_values: tuple[int, ...]
    clusters: list[ComponentCluster] = field(default_factory=list)
    match_threshold: float = 0.9
    has_structure: bool = True

    def persistent_clusters(self, min_persistence: float = 0.8) -> list[ComponentCluster]:
        return [c for c in self.clusters if c.persistence >= min_persistence]


def _channels(R: SpectraMatrix) -> np.ndarray:
    # measurements become rows: n channels observed at p pixels
    return np.asarray(R.values, dtype=float).T


def _canonical_sign_columns(E: np.ndarray) -> np.ndarray:
    """Flip eigenvector columns so the entry of largest magnitude is positive."""
    out = E.copy()
    for j in range(out.shape[1]):
        i = int(np.argmax(np.abs(out[:, j])))
        if out[i, j] < 0:
            out[:, j] = -out[:, j]
    return out


def center_whiten(R: SpectraMatrix, d: int | None = None):
    """Second-order stage: decorrelate the residual channels.

    Returns (WhiteningResult, whitened d x p data). ``d`` may be an
    explicit component count or None for the automatic rule (smallest d
    capturing at least 99.9% of the variance).
    """
    X = _channels(R)
    n, p = X.shape
    if n < 2:
        raise ParamError(f"need at least 2 measurement columns, got {n}")
    if p <= n:
        raise ParamError(f"need more pixels ({p}) than channels ({n})")
    if d is not None and (d < 1 or d > n):
        raise ParamError(f"d must be in [1, {n}], got {d}")
    mean = X.mean(axis=1)
    Xc = X - mean[:, None]
    cov = (Xc @ Xc.T) / p
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals = evals[order]
    evecs = _canonical_sign_columns(evecs[:, order])
    total = float(evals.sum())
    if total <= 0:
        raise DegenerateError("residuals have zero variance; nothing to whiten")
    if d is None:
        frac = np.cumsum(evals) / total
        d = int(np.searchsorted(frac, 0.999) + 1)
        d = min(d, n)
    if evals[d - 1] <= 1e-15 * evals[0]:
        raise DegenerateError(
            f"component {d} has (near) zero variance; reduce d (eigenvalues {evals})"
        )
    whitener = evecs[:, :d].T / np.sqrt(evals[:d])[:, None]
    Z = whitener @ Xc
    result = WhiteningResult(
        whitener=whitener,
        mean=mean,
        retained_d=d,
        eigenvalue_spectrum=evals,
    )
    return result, Z


def cumulant_matrices(Z: np.ndarray) -> list[np.ndarray]:
    """Fourth-order cumulant slices of whitened data.

    Returns the d(d+1)/2 symmetric d x d matrices Q_kl (k <= l) with
    entries cum(z_i, z_j, z_k, z_l) estimated from sample moments.
    """
    Z = np.asarray(Z, dtype=float)
    if Z.ndim != 2:
        raise PreconditionError("whitened data must be a d x p array")
    d, p = Z.shape
    cov = (Z @ Z.T) / p
    if np.max(np.abs(cov - np.eye(d))) > 1e-6:
        raise PreconditionError(
            "input is not whitened (covariance deviates from identity by "
            f"{np.max(np.abs(cov - np.eye(d))):.3e})"
        )
    slices = []
    for k in range(d):
        for l in range(k, d):
            w = Z[k] * Z[l]
            Q = (Z * w) @ Z.T / p
            if k == l:
                Q -= np.eye(d)
            Q[k, l] -= 1.0
            Q[l, k] -= 1.0
            slices.append(Q)
    return slices


def _offdiag_energy(mats: np.ndarray) -> float:
    total = float(np.sum(mats * mats))
    diags = float(sum(np.sum(np.diagonal(M) ** 2) for M in mats))
    return total - diags


def joint_diagonalize(matrices, tol: float = 1e-8, max_sweeps: int = 100, return_energy_trace: bool = False):
    """Orthogonal V making every V^T M V as diagonal as possible.

    Jacobi sweeps over index pairs with the closed-form rotation angle
    that maximizes the summed squared diagonals; stops when a full sweep
    produces only angles below ``tol``. With ``return_energy_trace`` the
    off-diagonal energy after each accepted rotation is returned too.
    """
    mats = np.array([np.asarray(M, dtype=float) for M in matrices])
    if mats.ndim != 3 or mats.shape[1] != mats.shape[2]:
        raise SymmetryError("need a list of square matrices of equal size")
    for i, M in enumerate(mats):
        if np.max(np.abs(M - M.T)) > 1e-10:
            raise SymmetryError(f"matrix {i} is not symmetric")
    d = mats.shape[1]
    V = np.eye(d)
    energy = [_offdiag_energy(mats)] if return_energy_trace else None
    if d > 1:
        for _ in range(max_sweeps):
            rotated = False
            for p in range(d - 1):
                for q in range(p + 1, d):
                    h1 = mats[:, p, p] - mats[:, q, q]
                    h2 = mats[:, p, q] + mats[:, q, p]
                    ton = float(h1 @ h1 - h2 @ h2)
                    toff = float(2.0 * (h1 @ h2))
                    theta = 0.5 * np.arctan2(toff, ton + np.hypot(ton, toff))
                    if abs(theta) < tol:
                        continue
                    rotated = True
                    c, s = np.cos(theta), np.sin(theta)
                    Mp = mats[:, :, p].copy()
                    Mq = mats[:, :, q].copy()
                    mats[:, :, p] = c * Mp + s * Mq
                    mats[:, :, q] = -s * Mp + c * Mq
                    Rp = mats[:, p, :].copy()
                    Rq = mats[:, q, :].copy()
                    mats[:, p, :] = c * Rp + s * Rq
                    mats[:, q, :] = -s * Rp + c * Rq
                    vp = V[:, p].copy()
                    V[:, p] = c * vp + s * V[:, q]
                    V[:, q] = -s * vp + c * V[:, q]
                    if energy is not None:
                        energy.append(_offdiag_energy(mats))
            if not rotated:
                break
    if return_energy_trace:
        return V, energy
    return V


def _row_kurtosis(u: np.ndarray) -> float:
    """Scale-invariant excess kurtosis of a (zero-mean) row."""
    m2 = float(np.mean(u * u))
    if m2 <= 0:
        return 0.0
    return float(np.mean(u**4) / (m2 * m2) - 3.0)


def jade(R: SpectraMatrix, d: int | None = None) -> IcaResult:
    """Whiten, estimate cumulant slices, rotate, and unpack the sources."""
    white, Z = center_whiten(R, d)
    dd = white.retained_d
    V = joint_diagonalize(cumulant_matrices(Z)) if dd > 1 else np.eye(1)
    U = V.T @ Z
    W = V.T @ white.whitener
    kurt = np.array([_row_kurtosis(u) for u in U])
    order = np.argsort(-np.abs(kurt), kind="stable")
    U, W, kurt = U[order], W[order], kurt[order]
    for i in range(dd):
        norm = float(np.linalg.norm(U[i]))
        if norm > 0:
            j = int(np.argmax(np.abs(U[i])))
            sign = 1.0 if U[i, j] > 0 else -1.0
            U[i] *= sign / norm
            W[i] *= sign / norm
    return IcaResult(
        demixing=W,
        sources=U,
        kurtosis=kurt,
        d=dd,
        kurtosis_threshold=structure_threshold(Z.shape[1], dd),
    )


def match_component(u, ref) -> float:
    """Signed Pearson correlation between a component and a reference."""
    u = np.asarray(u, dtype=float)
    ref = np.asarray(ref, dtype=float)
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(ref))):
        raise DegenerateError("inputs must be finite")
    du = u - u.mean()
    dr = ref - ref.mean()
    nu = float(np.linalg.norm(du))
    nr = float(np.linalg.norm(dr))
    if nu == 0 or nr == 0:
        raise DegenerateError("zero-variance input to match_component")
    return float(du @ dr) / (nu * nr)


def stability_scan(
    R: SpectraMatrix,
    d_range,
    match_threshold: float = 0.9,
    library: "SpectraMatrix | None" = None,
) -> StabilityReport:
    """Track components across a range of d values.

    Candidates are the components of the largest-d run. For every other
    d, that run's components are greedily matched to candidates by
    |correlation| (largest first, one-to-one, only above the threshold).
    A candidate's persistence is the fraction of scanned d values where
    it found a match. ``library`` optionally labels each candidate with
    its best-correlated reference column.
    """
    d_values = tuple(sorted(set(int(d) for d in d_range)))
    if not d_values:
        raise ParamError("d_range is empty")
    if d_values[0] < 1:
        raise ParamError(f"component counts must be >= 1, got {d_values[0]}")
    if d_values[-1] > R.n_columns:
        raise ParamError(
            f"largest d ({d_values[-1]}) exceeds the number of measurement "
            f"columns ({R.n_columns})"
        )
    runs = {d: jade(R, d) for d in d_values}
    d_big = d_values[-1]
    big = runs[d_big]
    n_candidates = big.sources.shape[0]
    matched: list[dict[int, float]] = [dict() for _ in range(n_candidates)]
    for c in range(n_candidates):
        matched[c][d_big] = 1.0
    for d in d_values[:-1]:
        run = runs[d]
        pairs = []
        for c in range(n_candidates):
            for r in range(run.sources.shape[0]):
                corr = abs(match_component(big.sources[c], run.sources[r]))
                if corr >= match_threshold:
                    pairs.append((corr, c, r))
        pairs.sort(key=lambda t: (-t[0], t[1], t[2]))
        used_c: set[int] = set()
        used_r: set[int] = set()
        for corr, c, r in pairs:
            if c in used_c or r in used_r:
                continue
            used_c.add(c)
            used_r.add(r)
            matched[c][d] = corr
    report = StabilityReport(
        d_values=d_values,
        match_threshold=match_threshold,
        has_structure=big.has_structure,
    )
    for c in range(n_candidates):
        cluster = ComponentCluster(
            representative=big.sources[c].copy(),
            persistence=len(matched[c]) / len(d_values),
            correlations=matched[c],
        )
        if library is not None:
            best_name, best_corr = None, 0.0
            for j, name in enumerate(library.column_labels):
                corr = match_component(cluster.representative, library.column(j))
                if abs(corr) > abs(best_corr):
                    best_name, best_corr = name, corr
            cluster.best_reference = best_name
            cluster.best_reference_corr = best_corr
        report.clusters.append(cluster)
    return report


def amari_index(P: np.ndarray) -> float:
    """Permutation-invariant distance of P from a scaled permutation matrix.

    0 for a perfect (scaled, permuted) identity; normalized to [0, 1].
    """
    P = np.abs(np.asarray(P, dtype=float))
    d = P.shape[0]
    if P.shape != (d, d):
        raise ParamError(f"need a square matrix, got shape {P.shape}")
    row = float(np.sum(P.sum(axis=1) / P.max(axis=1) - 1.0))
    col = float(np.sum(P.sum(axis=0) / P.max(axis=0) - 1.0))
    return (row + col) / (2.0 * d * (d - 1))
