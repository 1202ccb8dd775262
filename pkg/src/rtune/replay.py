"""Synthetic replay: proxy samples drawn from a frozen model plus their
frequency-filtered variants.

Latents are smoothed into model-shaped context windows, the frozen model's
forecast supplies the pseudo-label, and each sample is expanded into variants
that drop the top detail bands of its redundant wavelet decomposition.
"""

import csv
from dataclasses import dataclass

import numpy as np

from .data import WindowedDataset, concat_windows, permute_windows
from .forecaster import Forecaster
from .wavelet import rwt_decompose, rwt_reconstruct

__all__ = [
    "LatentBatch",
    "SyntheticSample",
    "ReplaySet",
    "sample_latents",
    "generate_sequence",
    "expand_variants",
    "build_replay_set",
    "build_train_set",
    "replay_count_for_fraction",
    "replay_to_csv",
]

SMOOTHING_TAPS = 5


@dataclass(frozen=True)
class LatentBatch:
    vectors: np.ndarray
    seed: int

    def __post_init__(self):
        if self.vectors.ndim != 2:
            raise ValueError(f"latents must be (n, d), got {self.vectors.shape}")
        self.vectors.setflags(write=False)


@dataclass(frozen=True)
class SyntheticSample:
    """One synthetic sequence of length W + H with its pseudo-label.

    variant_tag is "full_spectrum" for the unfiltered sample and "filtered(j)"
    for the variant with the top j detail bands discarded. The pseudo-label is
    always the frozen model's forecast on the sample's own input window.
    """

    sequence: np.ndarray
    variant_tag: str
    pseudo_label: np.ndarray

    def __post_init__(self):
        if not np.all(np.isfinite(self.sequence)):
            raise ValueError("synthetic sequence contains non-finite values")
        self.sequence.setflags(write=False)
        self.pseudo_label.setflags(write=False)


@dataclass(frozen=True)
class ReplaySet:
    samples: list
    provenance: dict

    def __len__(self) -> int:
        return len(self.samples)


def sample_latents(n: int, d: int, seed: int) -> LatentBatch:
    """Draw n standard-normal d-vectors from a seeded generator."""
    if n < 1 or d < 1:
        raise ValueError(f"latent batch needs n >= 1 and d >= 1, got ({n}, {d})")
    vectors = np.random.default_rng(seed).standard_normal((n, d))
    return LatentBatch(vectors=vectors, seed=seed)


def _smooth(z: np.ndarray) -> np.ndarray:
    # circular moving average; raw white noise is spectrally unlike any
    # forecaster's training inputs
    out = np.zeros_like(z)
    half = SMOOTHING_TAPS // 2
    for k in range(-half, half + 1):
        out += np.roll(z, k)
    return out / SMOOTHING_TAPS


def generate_sequence(frozen: Forecaster, z) -> SyntheticSample:
    """Turn one latent vector into a full-spectrum synthetic sample.

    The context window is the smoothed latent; the sequence is context
    followed by the frozen model's forecast, which is also the pseudo-label.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (frozen.input_width,):
        raise ValueError(
            f"latent dimension {z.shape} does not match input width "
            f"{frozen.input_width}"
        )
    context = _smooth(z)
    forecast = frozen.forward(context)
    return SyntheticSample(sequence=np.concatenate([context, forecast]),
                           variant_tag="full_spectrum",
                           pseudo_label=forecast.copy())


def expand_variants(sample: SyntheticSample, frozen: Forecaster, levels: int,
                    k: int, alpha: float):
    """Build the k frequency-filtered variants of one synthetic sample.

    Variant j keeps only the lowest levels - j detail bands (scaled by alpha)
    of the sequence's depth-`levels` redundant decomposition. Pseudo-labels
    are recomputed on each filtered context so inputs and labels stay
    consistent.
    """
    if not 0 <= k <= levels:
        raise ValueError(f"discard depth must be in [0, {levels}], got {k}")
    if k == 0:
        return []
    decomp = rwt_decompose(sample.sequence, levels)
    w = frozen.input_width
    variants = []
    for j in range(1, k + 1):
        filtered = rwt_reconstruct(decomp, alpha=alpha, keep_levels=levels - j)
        label = frozen.forward(filtered[:w])
        variants.append(SyntheticSample(sequence=filtered,
                                        variant_tag=f"filtered({j})",
                                        pseudo_label=label))
    return variants


def build_replay_set(frozen: Forecaster, n: int, levels: int, k: int,
                     alpha: float, seed: int) -> ReplaySet:
    """Assemble n full-spectrum samples plus their k variants each.

    The result has n * (1 + k) samples and is a deterministic function of the
    frozen parameters, the seed, and the settings.
    """
    if n < 1:
        raise ValueError(f"replay size must be >= 1, got {n}")
    latents = sample_latents(n, frozen.input_width, seed)
    samples = []
    for z in latents.vectors:
        base = generate_sequence(frozen, z)
        samples.append(base)
        samples.extend(expand_variants(base, frozen, levels, k, alpha))
    provenance = {"n": n, "levels": levels, "discard_depth": k,
                  "alpha": alpha, "seed": seed}
    return ReplaySet(samples=samples, provenance=provenance)


def _replay_windows(replay: ReplaySet, input_width: int, horizon: int) -> WindowedDataset:
    span = input_width + horizon
    if any(s.sequence.shape[0] != span for s in replay.samples):
        raise ValueError(
            f"replay geometry mismatch: sequences must have length {span}"
        )
    inputs = np.stack([s.sequence[:input_width] for s in replay.samples])
    labels = np.stack([s.pseudo_label for s in replay.samples])
    if labels.shape[1] != horizon:
        raise ValueError(
            f"replay horizon {labels.shape[1]} does not match {horizon}"
        )
    origins = np.full(len(replay.samples), "replay", dtype=object)
    return WindowedDataset(inputs, labels, origins, input_width, horizon)


def build_train_set(new_data: WindowedDataset, replay: ReplaySet,
                    seed: int = 0) -> WindowedDataset:
    """Union of new-task windows and replay samples, in seeded shuffled order.

    New samples keep their ground-truth labels and "new" origin; replay
    samples carry their pseudo-labels and "replay" origin.
    """
    if len(replay) == 0:
        return permute_windows(new_data, seed)
    combined = concat_windows(
        new_data, _replay_windows(replay, new_data.input_width, new_data.horizon))
    return permute_windows(combined, seed)


def replay_count_for_fraction(fraction_percent: float, n_new: int, k: int) -> int:
    """Solve n * (1 + k) = round(fraction% of n_new) for the latent count n."""
    if fraction_percent < 0:
        raise ValueError(f"replay fraction must be >= 0, got {fraction_percent}")
    return int(round(fraction_percent / 100.0 * n_new / (1 + k)))


def replay_to_csv(replay: ReplaySet, path, comment: str = None) -> None:
    """One row per sample: tag, the T sequence values, then the H label values.

    An optional '#'-prefixed comment line (e.g. a config echo) goes first.
    """
    seq_len = replay.samples[0].sequence.shape[0] if replay.samples else 0
    horizon = replay.samples[0].pseudo_label.shape[0] if replay.samples else 0
    header = (["tag"] + [f"x{i}" for i in range(seq_len)]
              + [f"y{i}" for i in range(horizon)])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        for s in replay.samples:
            writer.writerow([s.variant_tag]
                            + [repr(v) for v in s.sequence.tolist()]
                            + [repr(v) for v in s.pseudo_label.tolist()])
