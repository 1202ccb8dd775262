"""Redundant (undecimated) wavelet transform on the 4-tap Daubechies bank.

Every coefficient sequence keeps the input length: instead of downsampling
the signal, level ``l`` dilates the base filters by inserting 2**(l-1) - 1
zeros between taps. All convolutions are circular.
"""

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "FilterBank",
    "WaveletDecomposition",
    "build_db4_bank",
    "rwt_decompose",
    "rwt_reconstruct",
]


@dataclass(frozen=True)
class FilterBank:
    """The four tap sets of the 4-tap Daubechies filter bank.

    ``rec_lo``/``rec_hi`` are the companion synthesis taps (``rec_lo = dec_lo``,
    ``rec_hi[k] = (-1)**k * dec_lo[k]``). Reconstruction applies them in
    time-reversed orientation; see :func:`rwt_reconstruct`.
    """

    dec_lo: np.ndarray
    dec_hi: np.ndarray
    rec_lo: np.ndarray
    rec_hi: np.ndarray

    def __post_init__(self):
        for name in ("dec_lo", "dec_hi", "rec_lo", "rec_hi"):
            taps = np.asarray(getattr(self, name), dtype=np.float64)
            taps.setflags(write=False)
            object.__setattr__(self, name, taps)


@dataclass(frozen=True)
class WaveletDecomposition:
    """Redundant pyramid for one signal: full-length coefficients per level.

    ``details[l]`` holds level l+1 (finest band first); ``approx`` is the
    deepest low-pass output. All sequences have the input length.
    """

    levels: int
    approx: np.ndarray
    details: list = field(default_factory=list)
    filter_bank: FilterBank = None

    def __post_init__(self):
        if len(self.details) != self.levels:
            raise ValueError(
                f"expected {self.levels} detail sequences, got {len(self.details)}"
            )
        self.approx.setflags(write=False)
        for d in self.details:
            d.setflags(write=False)

    @property
    def length(self) -> int:
        return self.approx.shape[0]


def build_db4_bank() -> FilterBank:
    """Build the 4-tap Daubechies bank from its closed-form tap values.

    The decomposition low-pass taps are (1 +/- sqrt(3))/(4 sqrt(2)) and
    (3 +/- sqrt(3))/(4 sqrt(2)); the high-pass taps follow from the QMF
    relation dec_hi[k] = (-1)**k * dec_lo[3 - k].
    """
    s3 = np.sqrt(3.0)
    s2 = np.sqrt(2.0)
    dec_lo = np.array(
        [(1.0 + s3) / (4.0 * s2),
         (3.0 + s3) / (4.0 * s2),
         (3.0 - s3) / (4.0 * s2),
         (1.0 - s3) / (4.0 * s2)]
    )
    k = np.arange(4)
    dec_hi = (-1.0) ** k * dec_lo[::-1]
    rec_lo = dec_lo.copy()
    rec_hi = (-1.0) ** k * dec_lo
    return FilterBank(dec_lo=dec_lo, dec_hi=dec_hi, rec_lo=rec_lo, rec_hi=rec_hi)


def _atrous_conv(x: np.ndarray, taps: np.ndarray, dilation: int) -> np.ndarray:
    """Circular convolution with zero-stuffed taps: out[n] = sum_k f[k] x[n - k*dilation]."""
    out = np.zeros_like(x)
    for k, f in enumerate(taps):
        out += f * np.roll(x, k * dilation)
    return out


def _atrous_corr(x: np.ndarray, taps: np.ndarray, dilation: int) -> np.ndarray:
    """Adjoint of :func:`_atrous_conv`: out[n] = sum_k f[k] x[n + k*dilation]."""
    out = np.zeros_like(x)
    for k, f in enumerate(taps):
        out += f * np.roll(x, -k * dilation)
    return out


def rwt_decompose(x, levels: int, bank: FilterBank = None) -> WaveletDecomposition:
    """Decompose a signal into `levels` redundant detail bands plus one approximation.

    Level l convolves the previous approximation with the base taps dilated
    by 2**(l-1), circular boundary, so every output keeps the input length.

    Args:
        x: real 1-D signal, length T >= 4 * 2**(levels - 1).
        levels: decomposition depth, >= 1.
        bank: filter bank; defaults to the 4-tap Daubechies bank.

    Returns:
        WaveletDecomposition with full-length approx and details[0..levels-1]
        (finest band first).
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"expected a 1-D signal, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("signal contains non-finite values")
    if levels < 1:
        raise ValueError(f"levels must be >= 1, got {levels}")
    if bank is None:
        bank = build_db4_bank()
    min_len = len(bank.dec_lo) * 2 ** (levels - 1)
    if x.shape[0] < min_len:
        raise ValueError(
            f"signal of length {x.shape[0]} too short for {levels} levels "
            f"(needs >= {min_len})"
        )

    approx = x.copy()
    details = []
    for level in range(1, levels + 1):
        dilation = 2 ** (level - 1)
        details.append(_atrous_conv(approx, bank.dec_hi, dilation))
        approx = _atrous_conv(approx, bank.dec_lo, dilation)
    return WaveletDecomposition(levels=levels, approx=approx, details=details,
                                filter_bank=bank)


def rwt_reconstruct(decomp: WaveletDecomposition, alpha=1.0,
                    keep_levels: int = None) -> np.ndarray:
    """Invert a redundant decomposition, keeping only the lowest detail bands.

    Iterates from the deepest level down, substituting zeros for every detail
    band above `keep_levels` and scaling the kept bands by `alpha`. Each level
    applies the synthesis taps time-reversed (the adjoint of the analysis
    convolution) and halves the result; with alpha = 1 and all bands kept this
    inverts the decomposition exactly. Applying the stored rec taps in the
    plain convolution orientation does not invert the analysis bank for any
    scalar normalization (checked against a dense single-level matrix on
    length-8 signals), so the time-reversed orientation is used throughout.

    Args:
        decomp: a valid decomposition.
        alpha: detail scaling in [0, 1]; a scalar, or one value per level
            (index 0 = finest band).
        keep_levels: how many detail bands to keep, counted from the finest
            (level 1) upward. Defaults to all of them.

    Returns:
        The reconstructed signal, same length as the input.
    """
    levels = decomp.levels
    if keep_levels is None:
        keep_levels = levels
    if not 0 <= keep_levels <= levels:
        raise ValueError(
            f"keep_levels must be in [0, {levels}], got {keep_levels}"
        )
    alphas = np.broadcast_to(np.asarray(alpha, dtype=np.float64), (levels,))

    bank = decomp.filter_bank if decomp.filter_bank is not None else build_db4_bank()
    # synthesis kernels: stored rec taps, time-reversed (== correlation with
    # the analysis taps, since rec_lo = dec_lo and rec_hi reversed = -dec_hi)
    approx = decomp.approx.copy()
    for level in range(levels, 0, -1):
        dilation = 2 ** (level - 1)
        low = _atrous_corr(approx, bank.dec_lo, dilation)
        if level <= keep_levels:
            detail = decomp.details[level - 1]
            high = alphas[level - 1] * _atrous_corr(detail, bank.dec_hi, dilation)
            approx = 0.5 * (low + high)
        else:
            approx = 0.5 * low
    return approx
