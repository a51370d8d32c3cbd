"""Empirical mode decomposition by sifting with natural cubic-spline envelopes.

Each sifting pass subtracts the mean of the upper and lower envelopes from
the current proto-mode; a pass sequence terminates on the classic pointwise
Cauchy criterion SD = sum_t((h_prev - h_cur)^2 / h_prev^2) < sd_threshold
(0.2 is the standard value) or after a fixed iteration cap. Envelope end
swings are suppressed by mirroring the first and last few extrema about the
series ends before splining. Extraction stops once the residual is monotone
or has fewer than three interior extrema.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline


@dataclass
class EmdConfig:
    max_imfs: int = 3
    sd_threshold: float = 0.2
    max_sift_iterations: int = 100
    boundary_pad_extrema: int = 2

    def __post_init__(self) -> None:
        if self.max_imfs < 1:
            raise ValueError("max_imfs must be >= 1")
        if not 0.0 < self.sd_threshold < 1.0:
            raise ValueError("sd_threshold must lie in (0, 1)")
        if self.max_sift_iterations < 1:
            raise ValueError("max_sift_iterations must be >= 1")
        if self.boundary_pad_extrema < 0:
            raise ValueError("boundary_pad_extrema must be >= 0")


@dataclass
class ImfSet:
    """Ordered intrinsic mode functions plus the residual of one window."""

    imfs: list[np.ndarray] = field(default_factory=list)
    residual: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __len__(self) -> int:
        return len(self.imfs)

    def reconstruct(self) -> np.ndarray:
        out = self.residual.copy()
        for imf in self.imfs:
            out += imf
        return out


def find_extrema(series: np.ndarray) -> tuple[tuple[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]:
    """Interior extrema by three-point comparison.

    Returns ((max_idx, max_val), (min_idx, min_val)). A plateau bounded by a
    rise and a fall contributes its (floor) midpoint index.
    """
    x = np.asarray(series, dtype=np.float64)
    if x.size < 3:
        raise ValueError("series must have length >= 3")
    slope = np.sign(np.diff(x))
    nz = np.flatnonzero(slope)
    if nz.size < 2:
        empty = np.zeros(0, dtype=int), np.zeros(0)
        return empty, (np.zeros(0, dtype=int), np.zeros(0))
    s = slope[nz]
    turn = np.flatnonzero(s[:-1] != s[1:])
    # A +/- turn is a maximum; the extremum spans samples nz[k]+1 .. nz[k+1].
    mids = (nz[turn] + 1 + nz[turn + 1]) // 2
    is_max = s[turn] > 0
    max_idx = mids[is_max]
    min_idx = mids[~is_max]
    return (max_idx, x[max_idx]), (min_idx, x[min_idx])


def zero_crossings(series: np.ndarray) -> int:
    """Count sign changes, ignoring exact zeros."""
    s = np.sign(series)
    s = s[s != 0]
    if s.size < 2:
        return 0
    return int(np.count_nonzero(s[:-1] != s[1:]))


def _mirror_extend(idx: np.ndarray, val: np.ndarray, n: int, pad: int) -> tuple[np.ndarray, np.ndarray]:
    """Mirror the first/last ``pad`` extrema about the series ends."""
    xs = idx.astype(np.float64)
    ys = val
    left_x = (-xs[:pad])[::-1]
    left_y = ys[:pad][::-1]
    right_x = (2.0 * (n - 1) - xs[-pad:])[::-1]
    right_y = ys[-pad:][::-1]
    all_x = np.concatenate([left_x, xs, right_x])
    all_y = np.concatenate([left_y, ys, right_y])
    order = np.argsort(all_x, kind="stable")
    all_x = all_x[order]
    all_y = all_y[order]
    keep = np.concatenate([[True], np.diff(all_x) > 0])
    return all_x[keep], all_y[keep]


def spline_knots(idx: np.ndarray, val: np.ndarray, n: int, pad: int = 2) -> tuple[np.ndarray, np.ndarray]:
    """Mirror-extended knot set used by :func:`spline_envelope`."""
    idx = np.asarray(idx)
    val = np.asarray(val, dtype=np.float64)
    if pad > 0 and idx.size > 0:
        p = min(pad, idx.size)
        return _mirror_extend(idx, val, n, p)
    return idx.astype(np.float64), val


def spline_envelope(
    idx: np.ndarray,
    val: np.ndarray,
    n: int,
    pad: int = 2,
    grid: np.ndarray | None = None,
) -> np.ndarray:
    """Natural cubic spline through the mirror-extended extrema.

    Sampled on the integer grid 0..n-1 unless an explicit ``grid`` of
    (possibly fractional) positions is given. Raises
    ValueError("monotone component") when fewer than two knots are
    available, the signal for the sift loop to terminate.
    """
    xs, ys = spline_knots(idx, val, n, pad)
    if grid is None:
        grid = np.arange(n, dtype=np.float64)
    if xs.size < 2:
        raise ValueError("monotone component")
    if xs.size == 2:
        # Degenerate knot set: straight line.
        slope = (ys[1] - ys[0]) / (xs[1] - xs[0])
        return ys[0] + slope * (grid - xs[0])
    spline = CubicSpline(xs, ys, bc_type="natural")
    return spline(grid)


def _interior_extrema_count(series: np.ndarray) -> tuple[int, int]:
    (max_idx, _), (min_idx, _) = find_extrema(series)
    return max_idx.size, min_idx.size


def sift(series: np.ndarray, config: EmdConfig | None = None) -> ImfSet:
    """Decompose ``series`` into up to ``config.max_imfs`` IMFs plus residual.

    The element-wise sum of the returned modes and residual reproduces the
    input to rounding error by construction.
    """
    config = config or EmdConfig()
    x = np.asarray(series, dtype=np.float64)
    if x.size < 8:
        raise ValueError("series must have length >= 8")
    if not np.isfinite(x).all():
        raise ValueError("series contains non-finite values")

    n = x.size
    pad = config.boundary_pad_extrema
    residual = x.copy()
    imfs: list[np.ndarray] = []

    for _ in range(config.max_imfs):
        n_max, n_min = _interior_extrema_count(residual)
        if n_max + n_min < 3:
            break
        h = residual.copy()
        for _ in range(config.max_sift_iterations):
            (max_idx, max_val), (min_idx, min_val) = find_extrema(h)
            if max_idx.size < 2 or min_idx.size < 2:
                break
            try:
                upper = spline_envelope(max_idx, max_val, n, pad)
                lower = spline_envelope(min_idx, min_val, n, pad)
            except ValueError:
                break
            mean_env = 0.5 * (upper + lower)
            h_new = h - mean_env
            # Pointwise Cauchy criterion; the tiny floor keeps samples at
            # zero crossings from dominating the sum.
            sd = float(np.sum((h - h_new) ** 2 / (h * h + 1e-12)))
            h = h_new
            if sd < config.sd_threshold:
                break
        imfs.append(h)
        residual = residual - h

    return ImfSet(imfs=imfs, residual=residual)
