"""Statistical machinery for the frequency and detection analyses.

Frequency comparisons between replaced words and their substitutions are
summarized by Cohen's d and a two-sample JZS Bayes factor. The Bayes factor
is computed in log space throughout: full-scale replications push BF10 far
past float range, so log10(BF10) is the primary quantity and the linear
value is allowed to overflow to infinity.

Detection quality is scored with the balanced-bootstrap protocol: the
adversarial set stays fixed while equally sized clean sets are resampled,
and rates are averaged over resamples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .attacks import AttackCampaign
from .corpus import FrequencyTable
from .detector import gamma_from_scores

__all__ = [
    "StatsError",
    "BayesFactor",
    "FreqStatsRow",
    "DetectionMetrics",
    "cohens_d",
    "bayes_factor",
    "frequency_analysis",
    "bootstrap_eval",
    "restored_accuracy",
    "fpr_sweep",
]

DEFAULT_PRIOR_SCALE = math.sqrt(2.0) / 2.0


class StatsError(ValueError):
    pass


def _as_sample(x, name):
    arr = np.asarray(list(x), dtype=np.float64)
    if arr.size < 2:
        raise StatsError(f"{name} needs at least 2 observations, got {arr.size}")
    return arr


def _pooled_sd(a, b) -> float:
    na, nb = a.size, b.size
    pooled = ((na - 1) * a.var(ddof=1) + (nb - 1) * b.var(ddof=1)) / (na + nb - 2)
    return math.sqrt(pooled)


def cohens_d(sample_a, sample_b) -> float:
    """Standardized mean difference with the pooled n-1 standard deviation."""
    a = _as_sample(sample_a, "sample_a")
    b = _as_sample(sample_b, "sample_b")
    sp = _pooled_sd(a, b)
    if sp == 0.0:
        raise StatsError("pooled variance is zero; effect size undefined")
    return float((a.mean() - b.mean()) / sp)


@dataclass(frozen=True)
class BayesFactor:
    bf10: float  # inf once past float range; log10_bf10 is authoritative
    log10_bf10: float
    t: float
    df: int


def _log_integrand(u, t2, nu, n_eff, r):
    """Log of the JZS alternative/null likelihood ratio mixed over g = e^u.

    One factor of e^u is the change-of-variables Jacobian; the prior on g is
    InverseGamma(1/2, r^2/2), the Zellner-Siow mixing density whose marginal
    effect-size prior is Cauchy(0, r).
    """
    g = math.exp(u)
    shrink = 1.0 + n_eff * g
    log_alt = -0.5 * math.log(shrink) - ((nu + 1.0) / 2.0) * math.log1p(t2 / (shrink * nu))
    log_null = -((nu + 1.0) / 2.0) * math.log1p(t2 / nu)
    log_prior = math.log(r) - 0.5 * math.log(2.0 * math.pi) - 1.5 * u - r * r / (2.0 * g)
    return log_alt - log_null + log_prior + u


def bayes_factor(sample_a, sample_b, prior_scale: float = DEFAULT_PRIOR_SCALE) -> BayesFactor:
    """Two-sample JZS Bayes factor for a difference in means.

    Reduces to the t statistic with nu = n_a + n_b - 2 degrees of freedom
    and effective size N = n_a n_b / (n_a + n_b), then integrates the
    likelihood ratio over the prior's mixing variable on a log scale: a
    coarse scan locates the integrand's peak and adaptive quadrature runs
    on the rescaled integrand.
    """
    if prior_scale <= 0:
        raise StatsError("prior_scale must be positive")
    a = _as_sample(sample_a, "sample_a")
    b = _as_sample(sample_b, "sample_b")
    sp = _pooled_sd(a, b)
    if sp == 0.0:
        raise StatsError("pooled variance is zero; t statistic undefined")
    na, nb = a.size, b.size
    nu = na + nb - 2
    n_eff = na * nb / (na + nb)
    t = (a.mean() - b.mean()) / (sp * math.sqrt(1.0 / na + 1.0 / nb))
    t2 = float(t) ** 2

    lo, hi = -30.0, 35.0
    grid = np.linspace(lo, hi, 600)
    peak = max(_log_integrand(u, t2, nu, n_eff, prior_scale) for u in grid)
    val, abserr = integrate.quad(
        lambda u: math.exp(_log_integrand(u, t2, nu, n_eff, prior_scale) - peak),
        lo, hi, limit=200,
    )
    if not math.isfinite(val) or val <= 0.0 or abserr > 1e-6 * val:
        raise StatsError(
            f"Bayes factor quadrature did not converge: value={val!r}, "
            f"abserr={abserr!r}, t={t:.4g}, df={nu}"
        )
    log_bf = peak + math.log(val)
    log10_bf = log_bf / math.log(10.0)
    try:
        bf10 = math.exp(log_bf)
    except OverflowError:
        bf10 = math.inf
    return BayesFactor(bf10=bf10, log10_bf10=float(log10_bf), t=float(t), df=int(nu))


@dataclass(frozen=True)
class FreqStatsRow:
    """One attack's replaced-vs-substitution frequency comparison.

    The non-OOV columns restrict the substitution sample to words seen at
    least once in training; they are compared against the full replaced
    sample. When fewer than two substitutions survive the restriction the
    non-OOV statistics are NaN.
    """

    attack: str
    num_pairs: int
    replaced_mean: float
    replaced_sd: float
    subst_mean: float
    subst_sd: float
    d: float
    log10_bf10: float
    nonoov_num: int
    nonoov_mean: float
    nonoov_sd: float
    nonoov_d: float
    nonoov_log10_bf10: float


def frequency_analysis(campaign: AttackCampaign, table: FrequencyTable,
                       successful_only: bool = False,
                       prior_scale: float = DEFAULT_PRIOR_SCALE) -> FreqStatsRow:
    """Pool (replaced, substitution) pairs over a campaign and compare
    log frequencies of the two sides."""
    pairs = []
    for result in campaign.results:
        if successful_only and not result.success:
            continue
        for _, old, new in result.substitutions:
            pairs.append((table.phi(old), table.phi(new), table.count(new) >= 1))
    if len(pairs) < 2:
        raise StatsError(
            f"need at least 2 substitution pairs for frequency analysis, got {len(pairs)}"
        )
    replaced = np.array([p[0] for p in pairs])
    subst = np.array([p[1] for p in pairs])
    nonoov = np.array([p[1] for p in pairs if p[2]])
    d = cohens_d(replaced, subst)
    bf = bayes_factor(replaced, subst, prior_scale)
    if nonoov.size >= 2:
        nd = cohens_d(replaced, nonoov)
        nbf_log10 = bayes_factor(replaced, nonoov, prior_scale).log10_bf10
        nmean, nsd = float(nonoov.mean()), float(nonoov.std(ddof=1))
    else:
        nd = nbf_log10 = nmean = nsd = math.nan
    return FreqStatsRow(
        attack=campaign.attack,
        num_pairs=len(pairs),
        replaced_mean=float(replaced.mean()),
        replaced_sd=float(replaced.std(ddof=1)),
        subst_mean=float(subst.mean()),
        subst_sd=float(subst.std(ddof=1)),
        d=d,
        log10_bf10=bf.log10_bf10,
        nonoov_num=int(nonoov.size),
        nonoov_mean=nmean,
        nonoov_sd=nsd,
        nonoov_d=nd,
        nonoov_log10_bf10=nbf_log10,
    )


@dataclass(frozen=True)
class DetectionMetrics:
    """Detection scores as percentages.

    TPR is exact on the fixed adversarial set; FPR and precision are
    balanced-bootstrap averages; F1 is the harmonic mean of the averaged
    precision and the TPR, so the invariant F1 = H(precision, TPR) holds by
    construction. Restored and after-attack accuracies are carried along
    when the caller knows them.
    """

    tpr: float
    fpr: float
    precision: float
    f1: float
    restored_accuracy: float | None = None
    after_attack_accuracy: float | None = None

    def __post_init__(self):
        for name in ("tpr", "fpr", "precision", "f1"):
            v = getattr(self, name)
            if not 0.0 <= v <= 100.0:
                raise StatsError(f"{name} must be a percentage in [0, 100], got {v}")


def bootstrap_eval(adv_detections, clean_detections, n_resamples: int = 10000,
                   seed: int = 0, restored_accuracy: float | None = None,
                   after_attack_accuracy: float | None = None) -> DetectionMetrics:
    """Balanced-bootstrap detection scores.

    Each resample draws |adv| clean detections with replacement (stream
    keyed on (seed, resample index)); the adversarial side never varies, so
    TPR is a plain ratio.
    """
    adv_flags = np.array([bool(d.flagged) for d in adv_detections])
    clean_flags = np.array([bool(d.flagged) for d in clean_detections])
    if adv_flags.size == 0 or clean_flags.size == 0:
        raise StatsError("both detection lists must be non-empty")
    if n_resamples < 1:
        raise StatsError("n_resamples must be at least 1")
    k = adv_flags.size
    tp = int(adv_flags.sum())
    tpr = 100.0 * tp / k
    fpr_sum = 0.0
    prec_sum = 0.0
    for r in range(n_resamples):
        rng = np.random.default_rng([seed, r])
        fp = int(clean_flags[rng.integers(0, clean_flags.size, size=k)].sum())
        fpr_sum += fp / k
        prec_sum += tp / (tp + fp) if tp + fp else 0.0
    fpr = 100.0 * fpr_sum / n_resamples
    precision = 100.0 * prec_sum / n_resamples
    f1 = 2.0 * precision * tpr / (precision + tpr) if precision + tpr else 0.0
    return DetectionMetrics(
        tpr=tpr, fpr=fpr, precision=precision, f1=f1,
        restored_accuracy=restored_accuracy,
        after_attack_accuracy=after_attack_accuracy,
    )


def restored_accuracy(campaign: AttackCampaign, detections) -> float:
    """Percentage of successful adversarial inputs whose transformed version
    the model classifies correctly again."""
    by_id = {d.input.id: d for d in detections}
    hits = total = 0
    for result in campaign.results:
        if not result.success:
            continue
        det = by_id.get(result.perturbed.id)
        if det is None:
            raise StatsError(
                f"no detection recorded for successful adversarial sequence {result.perturbed.id}"
            )
        total += 1
        hits += det.restored_label == result.original.label
    if total == 0:
        raise StatsError("campaign has no successful adversarial examples")
    return 100.0 * hits / total


def fpr_sweep(clean_scores, adversarial_scores, budgets) -> list:
    """TPR at a ladder of false-positive budgets.

    For each budget, gamma is re-derived from the clean validation scores
    (unclamped: the sweep explores the raw score scale) and TPR is the
    fraction of adversarial scores strictly above it, as a percentage.
    """
    budgets = [float(b) for b in budgets]
    if budgets != sorted(budgets):
        raise StatsError("budgets must be sorted ascending")
    adv = np.asarray(list(adversarial_scores), dtype=np.float64)
    if adv.size == 0:
        raise StatsError("no adversarial scores to sweep over")
    rows = []
    for budget in budgets:
        gamma = gamma_from_scores(clean_scores, budget, clamp=False)
        tpr = 100.0 * float((adv > gamma).mean())
        rows.append({"budget": budget, "gamma": float(gamma), "tpr": tpr})
    return rows
