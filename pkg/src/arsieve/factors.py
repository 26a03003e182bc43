"""Factor loading estimation from accumulated symmetrised autocovariance.

The loading space is recovered as the top eigenspace of

    L = sum_{k=1}^{k0} G(k) G(k)'

where G(k) is the lag-k sample autocovariance of the panel.  Squaring the
autocovariances makes L symmetric positive semi-definite and, because
white noise contributes nothing at positive lags, its leading eigenvectors
span the loading space as the cross-section grows.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateSpectrumError, InvalidInputError, NumericFailureError
from .panel import FactorSeries, PanelSeries, sample_autocov

DEFAULT_K0 = 2

# ratios are skipped (set to +inf) once eigenvalues fall below this share
# of the leading one, so 0/0 never decides the rank
_EIG_FLOOR_REL = 1e-12


@dataclass(frozen=True)
class SymmetricSpectrum:
    """Eigenpairs of a symmetric matrix, eigenvalues descending."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # column j pairs with eigenvalues[j]

    @property
    def size(self) -> int:
        return self.eigenvalues.shape[0]


@dataclass(frozen=True)
class LoadingMatrix:
    """Scaled (Q) and orthonormal (Qo) loadings, Q = sqrt(N) * Qo."""

    Q: np.ndarray
    Qo: np.ndarray

    @property
    def n_series(self) -> int:
        return self.Q.shape[0]

    @property
    def rank(self) -> int:
        return self.Q.shape[1]


@dataclass(frozen=True)
class FactorModelFit:
    """Everything the rank-selection and loading step produced."""

    loadings: LoadingMatrix
    factors: FactorSeries
    spectrum: SymmetricSpectrum
    r: int
    k0: int
    ratio_path: np.ndarray = field(default_factory=lambda: np.empty(0))


def accumulated_sym_autocov(panel: PanelSeries, k0: int) -> np.ndarray:
    """Sum of squared sample autocovariances over lags 1..k0 (N x N, PSD)."""
    if k0 < 1 or k0 > panel.n_periods - 2:
        raise InvalidInputError(
            f"k0 must lie in [1, {panel.n_periods - 2}], got {k0}"
        )
    n = panel.n_series
    acc = np.zeros((n, n))
    for k in range(1, k0 + 1):
        g = sample_autocov(panel, k).matrix
        acc += g @ g.T
    return (acc + acc.T) / 2.0


def sym_eigendecomposition(S: np.ndarray) -> SymmetricSpectrum:
    """Descending eigendecomposition of a symmetric matrix.

    The input must be symmetric within 1e-8 relative tolerance; it is
    symmetrised as (S + S') / 2 before decomposing.  Eigenvector signs are
    fixed so the largest-magnitude entry of each column is positive.
    """
    S = np.asarray(S, dtype=np.float64)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise InvalidInputError(f"expected a square matrix, got shape {S.shape}")
    if not np.all(np.isfinite(S)):
        raise InvalidInputError("matrix contains non-finite entries")
    scale = np.abs(S).max()
    if scale > 0 and np.abs(S - S.T).max() > 1e-8 * scale:
        raise InvalidInputError("matrix is not symmetric within 1e-8 relative")
    sym = (S + S.T) / 2.0
    try:
        vals, vecs = np.linalg.eigh(sym)
    except np.linalg.LinAlgError as exc:
        raise NumericFailureError(
            f"eigendecomposition failed to converge for {S.shape[0]}x{S.shape[1]} matrix"
        ) from exc
    order = np.argsort(vals)[::-1]
    vals = vals[order]
    vecs = vecs[:, order]
    anchor = np.argmax(np.abs(vecs), axis=0)
    signs = np.where(vecs[anchor, np.arange(vecs.shape[1])] < 0, -1.0, 1.0)
    return SymmetricSpectrum(eigenvalues=vals, eigenvectors=vecs * signs)


def estimate_num_factors(
    eigenvalues: np.ndarray, R: int
) -> tuple[int, np.ndarray]:
    """Ratio-based rank estimate: argmin over j <= R of lam_{j+1}/lam_j.

    Ties break to the smallest index.  Ratios where lam_j has fallen below
    1e-12 of lam_1 are set to +inf so numerically dead eigenvalues never
    win.  Returns (r_hat, ratio_path).
    """
    lam = np.asarray(eigenvalues, dtype=np.float64)
    if R < 1 or R >= lam.shape[0]:
        raise InvalidInputError(
            f"search bound R={R} must satisfy 1 <= R < {lam.shape[0]}"
        )
    if lam[0] <= 0.0:
        raise DegenerateSpectrumError("leading eigenvalue is not positive")
    ratios = np.full(R, np.inf)
    floor = _EIG_FLOOR_REL * lam[0]
    for j in range(1, R + 1):
        if lam[j - 1] > floor:
            ratios[j - 1] = lam[j] / lam[j - 1]
    r_hat = int(np.argmin(ratios)) + 1  # argmin takes the first minimum
    return r_hat, ratios


def default_ratio_bound(n_series: int) -> int:
    """Default search bound for the ratio estimator: floor(N/3), at least 1."""
    return max(1, n_series // 3)


def estimate_loadings(spectrum: SymmetricSpectrum, r: int, n_series: int) -> LoadingMatrix:
    """Top-r eigenvectors as orthonormal loadings, scaled up by sqrt(N)."""
    if r < 1 or r > spectrum.size:
        raise InvalidInputError(f"rank {r} outside [1, {spectrum.size}]")
    qo = np.ascontiguousarray(spectrum.eigenvectors[:, :r])
    return LoadingMatrix(Q=np.sqrt(n_series) * qo, Qo=qo)


def extract_factors(
    panel: PanelSeries, loadings: LoadingMatrix, scale: str = "normalized"
) -> FactorSeries:
    """Project the panel onto the loading space: f_t = (1/N) Q' y_t.

    With Q'Q = N I this makes Q f_t the orthogonal projection of y_t onto
    the column space of Q.  ``scale="raw"`` returns the unnormalised
    Q' y_t instead (N times larger), kept for sensitivity comparisons.
    """
    if loadings.n_series != panel.n_series:
        raise InvalidInputError(
            f"loadings have N={loadings.n_series}, panel has N={panel.n_series}"
        )
    if scale not in ("normalized", "raw"):
        raise InvalidInputError(f"unknown scale {scale!r}")
    proj = loadings.Q.T @ panel.values
    if scale == "normalized":
        proj = proj / panel.n_series
    return FactorSeries(proj)


def fit_factor_model(
    panel: PanelSeries,
    k0: int = DEFAULT_K0,
    r: int | None = None,
    R: int | None = None,
) -> FactorModelFit:
    """Run the full loading/factor estimation pipeline on a panel.

    ``r=None`` selects the rank by the eigenvalue-ratio rule with search
    bound ``R`` (default floor(N/3)); a given ``r`` skips selection.
    """
    acc = accumulated_sym_autocov(panel, k0)
    spectrum = sym_eigendecomposition(acc)
    ratio_path = np.empty(0)
    if r is None:
        bound = default_ratio_bound(panel.n_series) if R is None else R
        if bound >= spectrum.size:
            bound = spectrum.size - 1
        if bound < 1:
            r = 1  # N = 1 leaves nothing to select
        else:
            r, ratio_path = estimate_num_factors(spectrum.eigenvalues, bound)
    loadings = estimate_loadings(spectrum, r, panel.n_series)
    factors = extract_factors(panel, loadings)
    return FactorModelFit(
        loadings=loadings,
        factors=factors,
        spectrum=spectrum,
        r=r,
        k0=k0,
        ratio_path=ratio_path,
    )
