"""Rule-based rewards for tagged evaluation responses.

Totals follow a three-branch scheme: a flat penalty when the response
text is malformed, zero when it is well formed but names the wrong
watermark category, and otherwise ``1 + r_len + r_qual + r_sec`` with
each component in [0, 1], so attainable totals sit in [1, 4].
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ParameterError
from .labeler import ResidualLabel, SemanticLabel
from .response_format import (CATEGORIES, CATEGORY_RESIDUAL, FormatVerdict,
                              ParsedResponse, measure_length, parse)


@dataclass(frozen=True)
class RewardConfig:
    format_penalty: float = -10.0
    target_length: float = 850.0
    length_tolerance: float = 50.0
    quality_tolerance: float = 0.3
    length_unit: str = "chars"

    def __post_init__(self):
        if not self.length_tolerance > 0:
            raise ParameterError("length_tolerance must be positive")
        if not self.quality_tolerance > 0:
            raise ParameterError("quality_tolerance must be positive")
        if self.length_unit not in ("chars", "words"):
            raise ParameterError("length_unit must be 'chars' or 'words'")


@dataclass(frozen=True)
class GroundTruth:
    """Category plus the matching label for one image."""

    category: str
    label: ResidualLabel | SemanticLabel

    def __post_init__(self):
        if self.category not in CATEGORIES:
            raise ParameterError(f"unknown category {self.category!r}")
        want = ResidualLabel if self.category == CATEGORY_RESIDUAL \
            else SemanticLabel
        if not isinstance(self.label, want):
            raise ParameterError(f"{self.category} ground truth needs a "
                                 f"{want.__name__}")


@dataclass(frozen=True)
class RewardBreakdown:
    """Total reward and which branch produced it.

    Component fields are populated only on the full-reward branch;
    ``category_ok`` stays None when the format already failed.
    """

    total: float
    format_ok: bool
    category_ok: bool | None = None
    r_len: float | None = None
    r_qual: float | None = None
    r_sec: float | None = None


def _linear_band(distance: float, tolerance: float) -> float:
    if distance > tolerance:
        return 0.0
    return 1.0 - distance / tolerance


def length_reward(length: float, cfg: RewardConfig = RewardConfig()) -> float:
    """1 at the target length, linear to 0 at the tolerance edge."""
    if length < 0:
        raise ParameterError("length cannot be negative")
    return _linear_band(abs(length - cfg.target_length), cfg.length_tolerance)


def residual_quality_reward(predicted: float, actual: float,
                            cfg: RewardConfig = RewardConfig()) -> float:
    """Linear band around the ground-truth quality score."""
    for name, v in (("predicted", predicted), ("actual", actual)):
        if not 1.0 <= v <= 5.0:
            raise ParameterError(f"{name} quality must lie in [1, 5]")
    return _linear_band(abs(predicted - actual), cfg.quality_tolerance)


def residual_security_reward(predicted: tuple[int, int, int],
                             actual: tuple[int, int, int]) -> float:
    """Fraction of the three robustness flags predicted correctly."""
    if len(predicted) != 3 or len(actual) != 3:
        raise ParameterError("expected three flags on each side")
    for flags in (predicted, actual):
        if any(f not in (0, 1) for f in flags):
            raise ParameterError("flags must be 0 or 1")
    return sum(p == a for p, a in zip(predicted, actual)) / 3.0


def semantic_reward(predicted: int, actual: int) -> float:
    """Exact-level agreement, no partial credit."""
    for name, v in (("predicted", predicted), ("actual", actual)):
        if v not in (1, 2, 3):
            raise ParameterError(f"{name} level must be 1, 2 or 3")
    return 1.0 if predicted == actual else 0.0


def reward_components(resp: ParsedResponse, gt: GroundTruth, length: float,
                      cfg: RewardConfig) -> tuple[float, float, float]:
    """(r_len, r_qual, r_sec) for a well-formed, correctly categorized
    response."""
    r_len = length_reward(length, cfg)
    if gt.category == CATEGORY_RESIDUAL:
        r_qual = residual_quality_reward(resp.residual_quality,
                                         gt.label.quality, cfg)
        r_sec = residual_security_reward(
            (resp.jpeg, resp.gaussian, resp.filter),
            (gt.label.jpeg_robust, gt.label.gaussian_robust,
             gt.label.filter_robust))
    else:
        r_qual = semantic_reward(resp.semantic_quality, gt.label.quality)
        r_sec = semantic_reward(resp.semantic_security, gt.label.security)
    return r_len, r_qual, r_sec


def total_reward(text: str, gt: GroundTruth,
                 cfg: RewardConfig = RewardConfig()) -> RewardBreakdown:
    """Score one raw response text against its ground truth."""
    resp = parse(text)
    if isinstance(resp, FormatVerdict):
        return RewardBreakdown(total=cfg.format_penalty, format_ok=False)
    if resp.category != gt.category:
        return RewardBreakdown(total=0.0, format_ok=True, category_ok=False)
    length = measure_length(text, cfg.length_unit)
    r_len, r_qual, r_sec = reward_components(resp, gt, length, cfg)
    return RewardBreakdown(total=1.0 + r_len + r_qual + r_sec,
                           format_ok=True, category_ok=True,
                           r_len=r_len, r_qual=r_qual, r_sec=r_sec)


def ground_truth_from_record(record: dict) -> GroundTruth:
    """Build a GroundTruth from a plain JSON record.

    Residual records carry ``quality`` (float) plus ``jpeg``,
    ``gaussian`` and ``filter`` flags; semantic ones carry integer
    ``quality`` and ``security`` levels.
    """
    try:
        category = record["category"]
    except (KeyError, TypeError):
        raise ParameterError("ground truth record needs a 'category'") from None
    if category == CATEGORY_RESIDUAL:
        try:
            label = ResidualLabel(quality=float(record["quality"]),
                                  jpeg_robust=int(record["jpeg"]),
                                  gaussian_robust=int(record["gaussian"]),
                                  filter_robust=int(record["filter"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ParameterError(f"bad residual ground truth: {exc}") from None
    elif category in CATEGORIES:
        try:
            label = SemanticLabel(quality=int(record["quality"]),
                                  security=int(record["security"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ParameterError(f"bad semantic ground truth: {exc}") from None
    else:
        raise ParameterError(f"unknown category {category!r}")
    return GroundTruth(category=category, label=label)


def ground_truth_record(gt: GroundTruth) -> dict:
    """Inverse of ``ground_truth_from_record``."""
    if gt.category == CATEGORY_RESIDUAL:
        return {"category": gt.category, "quality": gt.label.quality,
                "jpeg": gt.label.jpeg_robust,
                "gaussian": gt.label.gaussian_robust,
                "filter": gt.label.filter_robust}
    return {"category": gt.category, "quality": gt.label.quality,
            "security": gt.label.security}


def breakdown_record(item_id: str, bd: RewardBreakdown) -> dict:
    """JSON-ready reward record for one response."""
    return {"id": item_id, "total": bd.total, "format_ok": bd.format_ok,
            "category_ok": bd.category_ok, "r_len": bd.r_len,
            "r_qual": bd.r_qual, "r_sec": bd.r_sec}
