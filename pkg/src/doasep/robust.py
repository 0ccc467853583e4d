"""Huber-norm linear unmixing by iteratively re-weighted least squares.

Each spectrum column is decomposed as ``x = A s + r`` where A holds the
reference spectra. The Huber objective (quadratic core, linear tails)
keeps gross outlier pixels from dragging the coefficients the way plain
least squares does; the crossover point k tracks a robust estimate of
the residual scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import CoefficientMatrix, ReferenceSet, SpectraMatrix
from .errors import GridError, ParamError, PreconditionError, RankError

__all__ = [
    "HuberConfig",
    "FitResult",
    "huber_loss",
    "huber_weight",
    "robust_scale",
    "irls_fit",
    "ols_fit",
    "fit_report",
]

MAD_TO_SIGMA = 1.4826  # makes the MAD consistent for Gaussian errors


@dataclass(frozen=True)
class HuberConfig:
    """Fit controls.

    ``tuning_multiplier`` scales the residual sigma into the Huber
    crossover k. ``scale_mode`` is either "mad" (re-estimate sigma each
    iteration from the residuals) or "fixed" (use ``fixed_sigma``
    throughout). ``nonneg_mode`` "monitor" reports negative coefficients
    without altering them; "project" clips them to zero after convergence
    and refits the remaining gases once.
    """

    tuning_multiplier: float = 1.345
    scale_mode: str = "mad"
    fixed_sigma: float = 1.0
    max_iters: int = 100
    rel_tol: float = 1e-8
    nonneg_mode: str = "monitor"
    require_centered_references: bool = True

    def __post_init__(self):
        if not (self.tuning_multiplier > 0):
            raise ParamError(f"tuning_multiplier must be > 0, got {self.tuning_multiplier}")
        if not (self.rel_tol > 0):
            raise ParamError(f"rel_tol must be > 0, got {self.rel_tol}")
        if self.scale_mode not in ("mad", "fixed"):
            raise ParamError(f"scale_mode must be 'mad' or 'fixed', got {self.scale_mode!r}")
        if self.scale_mode == "fixed" and not (self.fixed_sigma > 0):
            raise ParamError(f"fixed_sigma must be > 0, got {self.fixed_sigma}")
        if self.nonneg_mode not in ("monitor", "project"):
            raise ParamError(
                f"nonneg_mode must be 'monitor' or 'project', got {self.nonneg_mode!r}"
            )
        if self.max_iters < 1:
            raise ParamError(f"max_iters must be >= 1, got {self.max_iters}")


@dataclass(eq=False, repr=False)
class FitResult:
    """Fitted coefficients, residual spectra and per-column diagnostics."""

    coefficients: CoefficientMatrix
    residuals: SpectraMatrix
    objective_trace: list[list[float]]
    negativity_report: list[tuple[str, int, float]]
    iterations: list[int]
    column_labels: tuple[str, ...] = ()


def huber_loss(x, k):
    """Quadratic inside |x| <= k, linear outside; elementwise on arrays."""
    if not k > 0:
        raise ParamError(f"k must be > 0, got {k}")
    x = np.asarray(x, dtype=float)
    ax = np.abs(x)
    out = np.where(ax <= k, 0.5 * x * x, k * ax - 0.5 * k * k)
    return float(out) if out.ndim == 0 else out


def huber_weight(x, k):
    """IRLS weight psi(x)/x: 1 inside |x| <= k, k/|x| outside."""
    if not k > 0:
        raise ParamError(f"k must be > 0, got {k}")
    x = np.asarray(x, dtype=float)
    ax = np.abs(x)
    with np.errstate(divide="ignore"):
        out = np.where(ax <= k, 1.0, k / np.where(ax > 0, ax, 1.0))
    return float(out) if out.ndim == 0 else out


def robust_scale(residual) -> float:
    """MAD-based sigma estimate with graceful degenerate fallbacks.

    Returns 1.4826 * median(|r - median(r)|); if that is zero the sample
    standard deviation; if that is zero too, 1.
    """
    r = np.asarray(residual, dtype=float)
    if r.size < 2:
        raise ParamError(f"need at least 2 residuals, got {r.size}")
    mad = MAD_TO_SIGMA * float(np.median(np.abs(r - np.median(r))))
    if mad > 0:
        return mad
    std = float(np.std(r, ddof=1))
    return std if std > 0 else 1.0


def _check_rank(A: np.ndarray) -> None:
    sv = np.linalg.svd(A, compute_uv=False)
    if sv[-1] <= 1e-10 * sv[0]:
        raise RankError(
            f"reference matrix is rank deficient (singular values {sv[0]:.3e} .. {sv[-1]:.3e})"
        )


def _weighted_lstsq(A, x, w):
    sw = np.sqrt(w)
    s, *_ = np.linalg.lstsq(A * sw[:, None], x * sw, rcond=None)
    return s


def _fit_column(x, A, config: HuberConfig):
    """IRLS on one column. Returns (s, trace, n_iters).

    The trace records the objective before and after each weighted solve
    under that iteration's k; the re-weighted solve can only lower it
    (quadratic majorant argument), so trace[2t+1] <= trace[2t]. With a
    fixed scale the whole trace is non-increasing; with per-iteration MAD
    the k changes between steps and only within-step comparisons are
    meaningful.
    """
    s = np.linalg.lstsq(A, x, rcond=None)[0]
    trace = []
    n_iters = 0
    for _ in range(config.max_iters):
        r = x - A @ s
        sigma = config.fixed_sigma if config.scale_mode == "fixed" else robust_scale(r)
        k = config.tuning_multiplier * sigma
        w = huber_weight(r, k)
        s_new = _weighted_lstsq(A, x, w)
        n_iters += 1
        trace.append(float(np.sum(huber_loss(r, k))))
        trace.append(float(np.sum(huber_loss(x - A @ s_new, k))))
        step = float(np.linalg.norm(s_new - s))
        s = s_new
        if step < config.rel_tol * max(float(np.linalg.norm(s)), 1e-300):
            break
    return s, trace, n_iters


def irls_fit(Xhat: SpectraMatrix, A: ReferenceSet, config: HuberConfig = HuberConfig()) -> FitResult:
    """Fit every column of Xhat against the reference set.

    Columns are independent: each gets an ordinary least-squares start,
    then re-weighted solves with the Huber weight at k = multiplier *
    sigma until the coefficient vector stops moving. Negative
    coefficients are reported (monitor mode) or clipped and refit once on
    the positive support (project mode).
    """
    if not A.grid.isclose(Xhat.grid):
        raise GridError("reference grid does not match the spectra grid")
    design = np.asarray(A.references, dtype=float)
    p, m = design.shape
    if p < m:
        raise RankError(f"need at least as many pixels ({p}) as references ({m})")
    _check_rank(design)
    if config.require_centered_references:
        col_max = np.max(np.abs(design), axis=0)
        col_mean = np.abs(design.mean(axis=0))
        bad = np.nonzero(col_mean > 1e-8 * np.where(col_max > 0, col_max, 1.0))[0]
        if bad.size:
            g = int(bad[0])
            raise PreconditionError(
                f"reference {A.gas_names[g]!r} is not zero-mean "
                f"(mean {design[:, g].mean():.3e}); band-filter references "
                "before fitting or disable require_centered_references"
            )

    n = Xhat.n_columns
    S = np.empty((m, n))
    traces: list[list[float]] = []
    iters: list[int] = []
    for j in range(n):
        x = Xhat.column(j)
        s, trace, n_it = _fit_column(x, design, config)
        if config.nonneg_mode == "project" and np.any(s < 0):
            support = s > 0
            s = np.zeros(m)
            if np.any(support):
                sub, _, _ = _fit_column(x, design[:, support], config)
                s[support] = sub
        S[:, j] = s
        traces.append(trace)
        iters.append(n_it)

    coeffs = CoefficientMatrix(S, A.gas_names)
    residuals = Xhat.with_values(Xhat.values - design @ S)
    return FitResult(
        coefficients=coeffs,
        residuals=residuals,
        objective_trace=traces,
        negativity_report=coeffs.negative_entries(),
        iterations=iters,
        column_labels=Xhat.column_labels,
    )


def ols_fit(Xhat: SpectraMatrix, A: ReferenceSet) -> CoefficientMatrix:
    """Plain least-squares coefficients, for comparison with the robust fit."""
    if not A.grid.isclose(Xhat.grid):
        raise GridError("reference grid does not match the spectra grid")
    design = np.asarray(A.references, dtype=float)
    _check_rank(design)
    S = np.linalg.lstsq(design, Xhat.values, rcond=None)[0]
    return CoefficientMatrix(S, A.gas_names)


def fit_report(result: FitResult) -> str:
    """Render the fit as a text report (coefficients, iterations, negativity)."""
    coeffs = result.coefficients
    labels = result.column_labels or tuple(
        f"c{j}" for j in range(coeffs.values.shape[1])
    )
    lines = ["# robust fit report", ""]
    lines.append("## coefficients")
    header = "gas".ljust(16) + "".join(lbl.rjust(16) for lbl in labels)
    lines.append(header)
    for g, name in enumerate(coeffs.gas_names):
        row = name.ljust(16) + "".join(f"{v:16.8g}" for v in coeffs.values[g])
        lines.append(row)
    lines.append("")
    lines.append("## iterations per column")
    lines.append(" ".join(str(i) for i in result.iterations))
    lines.append("")
    lines.append("## negativity report")
    if result.negativity_report:
        for gas, col, value in result.negativity_report:
            lines.append(f"gas {gas}, column {col}: {value:.6g}")
    else:
        lines.append("none")
    lines.append("")
    return "\n".join(lines)
