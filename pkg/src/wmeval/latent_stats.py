"""One-sample tests of standard normality for latent vectors.

All three tests are evaluated against the fully specified N(0, 1) null:
Cramer-von Mises with the limiting distribution of the statistic,
Jarque-Bera and D'Agostino K^2 with their chi-square(2) survival
``exp(-stat / 2)``. Moment estimators are the biased (1/n) ones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, kve, log_ndtr, ndtr

from .errors import DegenerateSampleError, ParameterError, ShapeError

P_FLOOR = 1e-300

CVM = "cvm"
JB = "jb"
K2 = "k2"

SYNTH_KINDS = ("standard_normal", "mixture_pm2", "student_t5", "quantized_pm1")


@dataclass(frozen=True)
class LatentSample:
    """Finite 1-D float64 sample of latent values."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1:
            raise ShapeError(f"expected a 1-D sample, got shape {v.shape}")
        if v.size < 1:
            raise ShapeError("sample must contain at least one value")
        if not np.all(np.isfinite(v)):
            raise ParameterError("sample contains non-finite values")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class TestResult:
    test: str
    statistic: float
    p_value: float


def _clamp_p(p: float) -> float:
    return min(1.0, max(float(p), P_FLOOR))


def _cvm_limiting_sf(x: float) -> float:
    """Survival function of the limiting null distribution of the
    Cramer-von Mises statistic.

    Bessel series for moderate x; beyond that the series needs too many
    terms in float64, so the tail of the dominant weighted chi-square
    component, 2*sqrt(2)*Phi(-pi*sqrt(x)), takes over (relative error
    about 1e-2 there, far below any p anyone acts on).
    """
    if x <= 0.0:
        return 1.0
    if x > 3.0:
        return _clamp_p(math.exp(math.log(2.0 * math.sqrt(2.0))
                                 + log_ndtr(-math.pi * math.sqrt(x))))
    total = 0.0
    for k in range(64):
        c = math.exp(gammaln(k + 0.5) - gammaln(k + 1.0) - gammaln(0.5))
        y = 4.0 * k + 1.0
        q = y * y / (16.0 * x)
        if 2.0 * q > 700.0:
            break
        term = (c / (math.pi * math.sqrt(x)) * math.sqrt(y)
                * math.exp(-2.0 * q) * kve(0.25, q))
        total += term
        if k >= 5 and abs(term) < 1e-17 * total:
            break
    return _clamp_p(1.0 - total)


def cramer_von_mises(sample: LatentSample) -> TestResult:
    """One-sample Cramer-von Mises test against N(0, 1)."""
    x = np.sort(sample.values)
    n = x.size
    u = ndtr(x)
    i = np.arange(1, n + 1, dtype=np.float64)
    w2 = 1.0 / (12.0 * n) + float(np.sum(((2.0 * i - 1.0) / (2.0 * n) - u) ** 2))
    return TestResult(CVM, w2, _cvm_limiting_sf(w2))


def _central_moments(values: np.ndarray):
    xc = values - values.mean()
    m2 = float(np.mean(xc ** 2))
    m3 = float(np.mean(xc ** 3))
    m4 = float(np.mean(xc ** 4))
    return m2, m3, m4


def jb_statistic(n: int, skewness: float, excess_kurtosis: float) -> float:
    """Jarque-Bera statistic from precomputed moment ratios."""
    if n < 1:
        raise ParameterError("n must be positive")
    return n / 6.0 * (skewness ** 2 + excess_kurtosis ** 2 / 4.0)


def jarque_bera(sample: LatentSample) -> TestResult:
    """Jarque-Bera normality test, p = exp(-JB / 2)."""
    m2, m3, m4 = _central_moments(sample.values)
    if m2 == 0.0:
        raise DegenerateSampleError("zero variance, moments are undefined")
    skew = m3 / m2 ** 1.5
    ex_kurt = m4 / (m2 * m2) - 3.0
    jb = jb_statistic(sample.n, skew, ex_kurt)
    return TestResult(JB, jb, _clamp_p(math.exp(-jb / 2.0)))


def _skewness_z(n: int, skew: float) -> float:
    # D'Agostino (1970) normalizing transform of sqrt(b1)
    y = skew * math.sqrt((n + 1.0) * (n + 3.0) / (6.0 * (n - 2.0)))
    beta2 = (3.0 * (n * n + 27.0 * n - 70.0) * (n + 1.0) * (n + 3.0)
             / ((n - 2.0) * (n + 5.0) * (n + 7.0) * (n + 9.0)))
    w2 = -1.0 + math.sqrt(2.0 * (beta2 - 1.0))
    delta = 1.0 / math.sqrt(0.5 * math.log(w2))
    alpha = math.sqrt(2.0 / (w2 - 1.0))
    t = y / alpha
    return delta * math.log(t + math.sqrt(t * t + 1.0))


def _kurtosis_z(n: int, kurt: float) -> float:
    # Anscombe and Glynn (1983) normalizing transform of b2
    e_b2 = 3.0 * (n - 1.0) / (n + 1.0)
    var_b2 = (24.0 * n * (n - 2.0) * (n - 3.0)
              / ((n + 1.0) ** 2 * (n + 3.0) * (n + 5.0)))
    x = (kurt - e_b2) / math.sqrt(var_b2)
    sqrt_b1 = (6.0 * (n * n - 5.0 * n + 2.0) / ((n + 7.0) * (n + 9.0))
               * math.sqrt(6.0 * (n + 3.0) * (n + 5.0)
                           / (n * (n - 2.0) * (n - 3.0))))
    a = 6.0 + 8.0 / sqrt_b1 * (2.0 / sqrt_b1
                               + math.sqrt(1.0 + 4.0 / sqrt_b1 ** 2))
    denom = 1.0 + x * math.sqrt(2.0 / (a - 4.0))
    if denom == 0.0:
        raise DegenerateSampleError("kurtosis transform is undefined here")
    term1 = 1.0 - 2.0 / (9.0 * a)
    term2 = math.copysign(abs((1.0 - 2.0 / a) / denom) ** (1.0 / 3.0), denom)
    return (term1 - term2) / math.sqrt(2.0 / (9.0 * a))


def dagostino_k2(sample: LatentSample) -> TestResult:
    """D'Agostino K^2 omnibus test, p = exp(-K^2 / 2). Needs n >= 8."""
    n = sample.n
    if n < 8:
        raise ParameterError(f"K^2 needs at least 8 observations, got {n}")
    m2, m3, m4 = _central_moments(sample.values)
    if m2 == 0.0:
        raise DegenerateSampleError("zero variance, moments are undefined")
    z_s = _skewness_z(n, m3 / m2 ** 1.5)
    z_k = _kurtosis_z(n, m4 / (m2 * m2))
    k2 = z_s * z_s + z_k * z_k
    return TestResult(K2, k2, _clamp_p(math.exp(-k2 / 2.0)))


def run_all_tests(sample: LatentSample) -> tuple[TestResult, TestResult, TestResult]:
    """All three tests in fixed order: CvM, JB, K^2."""
    return (cramer_von_mises(sample), jarque_bera(sample), dagostino_k2(sample))


def synth_latents(kind: str, n: int, seed: int = 0) -> LatentSample:
    """Deterministic synthetic sample for calibration runs.

    Kinds: ``standard_normal``, ``mixture_pm2`` (equal mixture of
    N(-2, 1) and N(2, 1)), ``student_t5`` (scaled to unit variance),
    ``quantized_pm1`` (sign of a normal draw).
    """
    if kind not in SYNTH_KINDS:
        raise ParameterError(f"unknown latent kind {kind!r}")
    if n < 8:
        raise ParameterError("n must be at least 8")
    rng = np.random.default_rng(seed)
    if kind == "standard_normal":
        v = rng.standard_normal(n)
    elif kind == "mixture_pm2":
        v = rng.standard_normal(n) + np.where(rng.random(n) < 0.5, -2.0, 2.0)
    elif kind == "student_t5":
        v = rng.standard_t(5, size=n) * math.sqrt(3.0 / 5.0)
    else:
        v = np.where(rng.standard_normal(n) >= 0.0, 1.0, -1.0)
    return LatentSample(v)


def load_latents(path, fmt: str = "f32") -> LatentSample:
    """Read latents from disk: ``f32`` little-endian binary or one-column CSV."""
    if fmt == "f32":
        values = np.fromfile(path, dtype="<f4").astype(np.float64)
    elif fmt == "csv":
        values = np.loadtxt(path, dtype=np.float64, ndmin=1)
    else:
        raise ParameterError(f"unknown latent format {fmt!r}")
    return LatentSample(values)
