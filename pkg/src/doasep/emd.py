"""Empirical mode decomposition and the band filter built on it.

Each spectrum column is decomposed into intrinsic mode functions (IMFs,
fastest oscillation first) plus a smooth trend by iterative sifting. The
band filter drops the fastest IMFs (pixel-scale noise) and the slowest
IMFs plus the trend (broad background), keeping the mid-band structure
that carries the narrow absorption features.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .core import SpectraMatrix
from .errors import (
    DegenerateInputError,
    EnvelopeError,
    NoImfError,
    ParamError,
    SizeError,
)

__all__ = [
    "SiftConfig",
    "BandSelection",
    "ImfStack",
    "BandpassReport",
    "find_extrema",
    "envelope",
    "sift",
    "decompose",
    "bandpass_matrix",
    "count_zero_crossings",
]


@dataclass(frozen=True)
class SiftConfig:
    """Sifting controls.

    ``sd_threshold`` is the Cauchy-style stopping ratio
    sum((h_prev - h)^2) / sum(h_prev^2); ``boundary`` is the number of
    extrema mirrored past each end before spline fitting.
    """

    max_imfs: int = 10
    max_sift_iters: int = 100
    sd_threshold: float = 0.2
    boundary: int = 2

    def __post_init__(self):
        if self.max_imfs < 1:
            raise ParamError(f"max_imfs must be >= 1, got {self.max_imfs}")
        if self.max_sift_iters < 1:
            raise ParamError(f"max_sift_iters must be >= 1, got {self.max_sift_iters}")
        if not (self.sd_threshold > 0):
            raise ParamError(f"sd_threshold must be > 0, got {self.sd_threshold}")
        if self.boundary < 0:
            raise ParamError(f"boundary must be >= 0, got {self.boundary}")


@dataclass(frozen=True)
class BandSelection:
    """How many IMFs to drop at each end of the scale ladder.

    The trend is always removed; ``drop_slowest`` counts IMFs removed in
    addition to it.
    """

    drop_fastest: int = 1
    drop_slowest: int = 1

    def __post_init__(self):
        if self.drop_fastest < 0 or self.drop_slowest < 0:
            raise ParamError("drop counts must be non-negative")


@dataclass(frozen=True, eq=False, repr=False)
class ImfStack:
    """Full decomposition of one signal: IMFs (fastest first) plus trend."""

    imfs: tuple[np.ndarray, ...]
    trend: np.ndarray
    source_length: int

    @property
    def n_imfs(self) -> int:
        return len(self.imfs)

    def reconstruct(self) -> np.ndarray:
        out = self.trend.copy()
        for imf in self.imfs:
            out += imf
        return out


def find_extrema(signal):
    """Locate strict interior extrema.

    Plateaus contribute their midpoint index; the first and last samples
    never count. Returns ((max_idx, max_val), (min_idx, min_val)).
    """
    x = np.asarray(signal, dtype=float)
    if x.ndim != 1 or x.size < 3:
        raise SizeError(f"need a 1-D signal of length >= 3, got shape {x.shape}")
    d = np.diff(x)
    d1, d2 = d[:-1], d[1:]
    max_idx = list(np.nonzero((d1 > 0) & (d2 < 0))[0] + 1)
    min_idx = list(np.nonzero((d1 < 0) & (d2 > 0))[0] + 1)

    if np.any(d == 0.0):
        flat = np.concatenate(([0], (d == 0.0).astype(np.int8), [0]))
        edges = np.diff(flat)
        starts = np.nonzero(edges == 1)[0]
        ends = np.nonzero(edges == -1)[0]
        for a, b in zip(starts, ends):
            # plateau spans signal indices a..b; slopes on both sides needed
            if a == 0 or b >= d.size:
                continue
            mid = (a + b) // 2
            if d[a - 1] > 0 and d[b] < 0:
                max_idx.append(mid)
            elif d[a - 1] < 0 and d[b] > 0:
                min_idx.append(mid)

    max_idx = np.array(sorted(max_idx), dtype=int)
    min_idx = np.array(sorted(min_idx), dtype=int)
    return (max_idx, x[max_idx]), (min_idx, x[min_idx])


def envelope(extrema, length, boundary=2):
    """Natural cubic spline through extrema, mirror-extended past the ends.

    ``extrema`` is an (indices, values) pair for one extremum kind.
    Mirroring reflects up to ``boundary`` extrema about the first and last
    sample positions; indices stay strictly outside [0, length) because
    endpoints are never extrema.
    """
    idx, val = extrema
    idx = np.asarray(idx, dtype=float)
    val = np.asarray(val, dtype=float)
    nb = int(boundary)
    if nb > 0 and idx.size > 0:
        take = min(nb, idx.size)
        left_x = -idx[:take][::-1]
        left_y = val[:take][::-1]
        right_x = 2.0 * (length - 1) - idx[-take:][::-1]
        right_y = val[-take:][::-1]
        xs = np.concatenate([left_x, idx, right_x])
        ys = np.concatenate([left_y, val, right_y])
    else:
        xs, ys = idx, val
    if xs.size < 2:
        raise EnvelopeError(f"{xs.size} extrema after mirror extension; need >= 2")
    spline = CubicSpline(xs, ys, bc_type="natural")
    return spline(np.arange(length, dtype=float))


def count_zero_crossings(signal) -> int:
    """Sign changes, merging exact-zero runs into a single crossing."""
    x = np.asarray(signal, dtype=float)
    nz = x[x != 0.0]
    if nz.size < 2:
        return 0
    s = np.signbit(nz)
    return int(np.count_nonzero(s[:-1] != s[1:]))


def _is_imf_shaped(x) -> bool:
    try:
        (mx, _), (mn, _) = find_extrema(x)
    except SizeError:
        return True
    return abs((mx.size + mn.size) - count_zero_crossings(x)) <= 1


def sift(signal, config: SiftConfig = SiftConfig()):
    """Extract one IMF; returns (imf, residual).

    Each pass subtracts the mean of the upper and lower spline envelopes.
    Sifting stops once the Cauchy SD ratio drops below the threshold and
    the candidate satisfies the IMF extrema/zero-crossing balance, or at
    ``max_sift_iters``.
    """
    x = np.asarray(signal, dtype=float)
    if x.ndim != 1 or x.size < 4:
        raise SizeError(f"need a 1-D signal of length >= 4, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise SizeError("signal must be finite")
    h = x.copy()
    for it in range(config.max_sift_iters):
        maxima, minima = find_extrema(h)
        try:
            upper = envelope(maxima, h.size, config.boundary)
            lower = envelope(minima, h.size, config.boundary)
        except EnvelopeError:
            if it == 0:
                raise NoImfError("no oscillation to extract (too few extrema)") from None
            break
        mean_env = 0.5 * (upper + lower)
        denom = float(np.dot(h, h))
        if denom == 0.0:
            break
        sd = float(np.dot(mean_env, mean_env)) / denom
        h = h - mean_env
        if sd < config.sd_threshold and _is_imf_shaped(h):
            break
    return h, x - h


def decompose(signal, config: SiftConfig = SiftConfig()) -> ImfStack:
    """Full decomposition: sift repeatedly until no IMF remains or max_imfs."""
    x = np.asarray(signal, dtype=float)
    if x.ndim != 1 or x.size < 4:
        raise SizeError(f"need a 1-D signal of length >= 4, got shape {x.shape}")
    residual = x.copy()
    imfs = []
    for _ in range(config.max_imfs):
        try:
            imf, residual = sift(residual, config)
        except NoImfError:
            break
        imfs.append(imf)
    return ImfStack(imfs=tuple(imfs), trend=residual, source_length=x.size)


@dataclass
class ColumnBand:
    """Per-column band filter outcome."""

    label: str
    n_imfs: int
    retained: tuple[int, int]  # half-open IMF index range, fastest = 0
    fallback: bool
    stack: ImfStack
    retained_periods_px: tuple[float, ...] = ()


@dataclass
class BandpassReport:
    columns: list[ColumnBand] = field(default_factory=list)

    @property
    def fallback_labels(self) -> list[str]:
        return [c.label for c in self.columns if c.fallback]


def _mean_period_px(imf) -> float:
    zc = count_zero_crossings(imf)
    return float(2.0 * imf.size / zc) if zc else float("inf")


def bandpass_matrix(
    X: SpectraMatrix,
    config: SiftConfig = SiftConfig(),
    band: BandSelection = BandSelection(),
):
    """Band-filter every column of a spectra matrix.

    Per column, the retained signal is the sum of the middle IMFs after
    dropping ``band.drop_fastest`` leading and ``band.drop_slowest``
    trailing IMFs plus the trend. Columns that decompose into too few
    IMFs keep all IMFs (trend still removed) and are flagged in the
    report. Any residual constant offset belongs to the removed
    background by definition, so each output column is demeaned.
    Returns (filtered SpectraMatrix, BandpassReport).
    """
    out = np.empty_like(X.values)
    report = BandpassReport()
    needed = band.drop_fastest + band.drop_slowest + 1
    degenerate = 0
    for j in range(X.n_columns):
        stack = decompose(X.column(j), config)
        k = stack.n_imfs
        if k == 0:
            out[:, j] = 0.0
            report.columns.append(
                ColumnBand(X.column_labels[j], 0, (0, 0), True, stack)
            )
            degenerate += 1
            continue
        if k >= needed:
            lo, hi = band.drop_fastest, k - band.drop_slowest
            fallback = False
        else:
            lo, hi = 0, k
            fallback = True
        col = np.zeros(X.n_pixels)
        for imf in stack.imfs[lo:hi]:
            col += imf
        out[:, j] = col - col.mean()
        report.columns.append(
            ColumnBand(
                X.column_labels[j],
                k,
                (lo, hi),
                fallback,
                stack,
                tuple(_mean_period_px(imf) for imf in stack.imfs[lo:hi]),
            )
        )
    if degenerate == X.n_columns:
        raise DegenerateInputError("every column is constant; nothing to band-filter")
    return X.with_values(out), report
