"""Ground-truth label construction.

Residual watermarks get a PSNR-derived quality score on [1, 5] and three
binary robustness flags (bit accuracy under JPEG, Gaussian noise and
median filtering, thresholded at 0.85). Semantic watermarks get integer
quality and security levels in {1, 2, 3} derived from normality-test
p-values on sampled latents.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import CapacityError, CorpusError, ParameterError
from .imageops import (DistortionSpec, GAUSSIAN_NOISE, JPEG, MEDIAN_FILTER,
                       PsnrNormalization, RasterImage, apply_distortion,
                       normalize_psnr, psnr)
from .watermark import EmbedConfig, WatermarkMessage, bit_accuracy, embed, extract

THREADS_ENV = "WMEVAL_THREADS"


@dataclass(frozen=True)
class ScoreThresholds:
    """Decision constants for label construction."""

    robust_threshold: float = 0.85
    alpha_low: float = 0.01
    alpha_mid: float = 0.01

    def __post_init__(self):
        for name in ("robust_threshold", "alpha_low", "alpha_mid"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ParameterError(f"{name} must lie strictly inside (0, 1)")


@dataclass(frozen=True)
class ResidualLabel:
    quality: float
    jpeg_robust: int
    gaussian_robust: int
    filter_robust: int

    def __post_init__(self):
        if not 1.0 <= self.quality <= 5.0:
            raise ParameterError("quality must lie in [1, 5]")
        for name in ("jpeg_robust", "gaussian_robust", "filter_robust"):
            if getattr(self, name) not in (0, 1):
                raise ParameterError(f"{name} must be 0 or 1")


@dataclass(frozen=True)
class SemanticLabel:
    quality: int
    security: int

    def __post_init__(self):
        for name in ("quality", "security"):
            if getattr(self, name) not in (1, 2, 3):
                raise ParameterError(f"{name} must be 1, 2 or 3")


@dataclass(frozen=True)
class RobustnessReport:
    """Mean bit accuracy per distortion channel over a corpus."""

    method: str
    jpeg_acc: float
    gaussian_acc: float
    filter_acc: float
    n_images: int

    def __post_init__(self):
        for name in ("jpeg_acc", "gaussian_acc", "filter_acc"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ParameterError(f"{name} must lie in [0, 1]")
        if self.n_images < 1:
            raise CorpusError("report requires at least one image")


DEFAULT_DISTORTIONS = (
    DistortionSpec(JPEG, jpeg_quality=75),
    DistortionSpec(GAUSSIAN_NOISE, noise_sigma=0.05),
    DistortionSpec(MEDIAN_FILTER, kernel_size=3),
)


def residual_security_labels(report: RobustnessReport,
                             thresholds: ScoreThresholds = ScoreThresholds()
                             ) -> tuple[int, int, int]:
    """Binarize per-channel accuracies; the threshold itself counts as robust."""
    t = thresholds.robust_threshold
    return (int(report.jpeg_acc >= t),
            int(report.gaussian_acc >= t),
            int(report.filter_acc >= t))


def residual_quality_label(original: RasterImage, watermarked: RasterImage,
                           norm: PsnrNormalization = PsnrNormalization()
                           ) -> float:
    """Fidelity score on [1, 5] from the PSNR of the watermarked image."""
    return normalize_psnr(psnr(original, watermarked), norm)


def semantic_label(p_cvm: float, p_jb: float, p_k2: float,
                   thresholds: ScoreThresholds = ScoreThresholds()
                   ) -> SemanticLabel:
    """Grade latent-distribution shift into levels 1 (worst) to 3 (best).

    Level 1 when either moment test rejects hard (min of JB and K^2
    p-values below alpha_low), level 2 when only the distributional CvM
    test rejects (below alpha_mid), level 3 otherwise. Quality and
    security share the level by construction.
    """
    for name, p in (("p_cvm", p_cvm), ("p_jb", p_jb), ("p_k2", p_k2)):
        if not 0.0 <= p <= 1.0:
            raise ParameterError(f"{name} must lie in [0, 1]")
    if min(p_jb, p_k2) < thresholds.alpha_low:
        level = 1
    elif p_cvm < thresholds.alpha_mid:
        level = 2
    else:
        level = 3
    return SemanticLabel(quality=level, security=level)


def _specs_by_kind(specs: Sequence[DistortionSpec]):
    if len(specs) != 3:
        raise ParameterError("exactly three distortion specs are required")
    by_kind = {s.kind: s for s in specs}
    if set(by_kind) != {JPEG, GAUSSIAN_NOISE, MEDIAN_FILTER}:
        raise ParameterError("specs must cover jpeg, gaussian_noise and "
                             "median_filter exactly once each")
    return by_kind


def measure_robustness(images: Sequence[RasterImage],
                       messages: Sequence[WatermarkMessage],
                       cfg: EmbedConfig = EmbedConfig(),
                       specs: Sequence[DistortionSpec] = DEFAULT_DISTORTIONS,
                       seed: int = 0,
                       method: str = "reference",
                       ids: Sequence[str] | None = None) -> RobustnessReport:
    """Embed, distort and re-extract over a corpus; average bit accuracy
    per distortion channel.

    Set the ``WMEVAL_THREADS`` environment variable above 1 to fan the
    per-image work out over a thread pool; results are identical either
    way because every image owns a fixed per-image seed.
    """
    if len(images) == 0:
        raise CorpusError("corpus is empty")
    if len(messages) != len(images):
        raise ParameterError("need exactly one message per image")
    if ids is None:
        ids = [str(i) for i in range(len(images))]
    elif len(ids) != len(images):
        raise ParameterError("need exactly one id per image")
    by_kind = _specs_by_kind(specs)
    seeds = np.random.SeedSequence(seed).generate_state(len(images))

    def one(i: int):
        try:
            marked = embed(images[i], messages[i], cfg)
            accs = {}
            for kind in (JPEG, GAUSSIAN_NOISE, MEDIAN_FILTER):
                distorted = apply_distortion(marked, by_kind[kind], int(seeds[i]))
                got = extract(distorted, len(messages[i]), cfg)
                accs[kind] = bit_accuracy(messages[i], got)
            return accs
        except CapacityError as exc:
            raise CapacityError(f"image {ids[i]}: {exc}") from exc

    threads = int(os.environ.get(THREADS_ENV, "1"))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, range(len(images))))
    else:
        results = [one(i) for i in range(len(images))]
    return RobustnessReport(
        method=method,
        jpeg_acc=float(np.mean([r[JPEG] for r in results])),
        gaussian_acc=float(np.mean([r[GAUSSIAN_NOISE] for r in results])),
        filter_acc=float(np.mean([r[MEDIAN_FILTER] for r in results])),
        n_images=len(images),
    )


def residual_label_record(image_id: str, label: ResidualLabel) -> dict:
    """JSON-ready record for one residual-watermark image."""
    return {"id": image_id, "type": "residual",
            "quality": label.quality, "jpeg": label.jpeg_robust,
            "gaussian": label.gaussian_robust, "filter": label.filter_robust}


def semantic_label_record(image_id: str, label: SemanticLabel) -> dict:
    """JSON-ready record for one semantic-watermark image."""
    return {"id": image_id, "type": "semantic",
            "quality": label.quality, "security": label.security}
