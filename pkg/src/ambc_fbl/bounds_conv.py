"""Converse side: upper bound rate <= log(K m n / beta) / n per tag symbol.

beta is the type-II error of the optimal test between the conditional output
law and a product auxiliary channel whose per-mode outputs are CN(0, 1+g_j p_j);
K = K1 K2 combines a supremum of the auxiliary per-mode-energy density (a
product-of-gammas law evaluated by Mellin inversion) with the volume of the
ball that contains every admissible energy vector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Tuple, Union

import numpy as np
from scipy import optimize, special

from .bounds_ach import (
    KIND_CONDITIONAL,
    _gammas,
    _LawParams,
    _threshold_with_ties,
    _weighted_tail,
)
from .channel import EigenSpectrum
from .errors import ConvergenceError, InsufficientSamplesError
from .numerics import EmpiricalSample, SeededRng, product_gamma_logpdf
from .power import PowerAllocation, waterfill

_MIN_EFFECTIVE_SAMPLES = 1000.0


@dataclass(frozen=True)
class ConverseConstants:
    """K = K1 K2 with K1 the density supremum scale and K2 the ball volume."""

    k1: float
    k2: float
    k: float
    m: int
    n: int


@dataclass(frozen=True)
class NPBetaEstimate:
    beta: float
    log_beta: float
    eta: float
    ci_rel: float
    tilted: bool
    lower_bound_only: bool = False


@dataclass(frozen=True)
class ConverseResult:
    rate_nats: float
    rate_bits: float
    beta: float
    log_beta: float
    k: float
    n: int
    eps: float
    d: Union[int, str]
    ci_rate_bits: float
    num_samples: int
    per_d: Optional[Tuple["ConverseResult", "ConverseResult"]] = None


def sample_converse_density(
    n: int,
    g: EigenSpectrum,
    p: PowerAllocation,
    rng: SeededRng,
    num_samples: int = 100_000,
) -> EmpiricalSample:
    """Draws of the blocklength-n log likelihood ratio between the conditional
    law and the auxiliary product channel (the same statistic as the
    conditional information-density law)."""
    if n < 1:
        raise ValueError("blocklength must be >= 1")
    if num_samples < 1000:
        raise ValueError("num_samples must be >= 1000")
    params = _LawParams(KIND_CONDITIONAL, n, _gammas(g, p))
    if params.degenerate:
        return EmpiricalSample(np.zeros(num_samples))
    return EmpiricalSample(params.sample(rng.generator(), num_samples))


def sample_output_energy(
    n: int, gamma: float, rng: SeededRng, num_samples: int
) -> np.ndarray:
    """Per-mode normalized output energy of the auxiliary channel,
    (1 + gamma) / n times a sum of n unit exponentials."""
    gen = rng.generator()
    return (1.0 + gamma) / n * gen.standard_exponential((num_samples, n)).sum(axis=1)


def np_beta_converse(
    draws: EmpiricalSample,
    eps: float,
    law: Optional[Tuple[int, np.ndarray]] = None,
    rng: Optional[SeededRng] = None,
    num_samples: Optional[int] = None,
) -> NPBetaEstimate:
    """Neyman-Pearson beta at level 1 - eps from log-likelihood-ratio draws.

    The optimal test thresholds the statistic at its empirical (1-eps)
    exceedance quantile eta (randomizing on atoms), and beta is estimated by
    the change-of-measure identity beta = E[exp(-S) 1{S >= eta}] over the
    conditional draws.  Deep in the tail the raw estimator starves, so when
    the effective sample count drops below 1000 and the law parameters
    (blocklength, per-mode gammas) plus an rng are supplied, the expectation
    is recomputed under an exponential tilt whose mean sits at eta.
    """
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    s = draws.values
    n_draws = s.size
    eta, rho = _threshold_with_ties(s, 1.0 - eps)

    weights = np.where(s > eta, np.exp(-np.clip(s, -700, None)), 0.0)
    if rho > 0:
        weights = weights + rho * np.where(s == eta, np.exp(-np.clip(s, -700, None)), 0.0)
    total = float(weights.sum())
    sq = float((weights**2).sum())
    # subnormal weights can square to exactly zero; treat that as starvation
    ess = total**2 / sq if sq > 0 else 0.0
    can_tilt = law is not None and rng is not None

    if total > 0 and sq > 0:
        mean = total / n_draws
        ci_rel = 1.96 * float(weights.std() / math.sqrt(n_draws)) / mean
        if ess >= _MIN_EFFECTIVE_SAMPLES or (not can_tilt and ci_rel <= 0.5):
            return NPBetaEstimate(
                beta=mean, log_beta=math.log(mean), eta=eta, ci_rel=ci_rel, tilted=False
            )
    if not can_tilt:
        # last resort without law parameters: the explicit threshold-grid
        # lower bound beta >= max_l exp(-l) (P[S < l] - eps), valid at any l
        log_lb = _threshold_grid_lower_bound(s, eps)
        if log_lb is None:
            raise InsufficientSamplesError(
                "raw change-of-measure estimate too noisy and no law/rng for tilting"
            )
        return NPBetaEstimate(
            beta=float(np.exp(log_lb)),
            log_beta=log_lb,
            eta=eta,
            ci_rel=math.nan,
            tilted=False,
            lower_bound_only=True,
        )

    n, gammas = law
    params = _LawParams(KIND_CONDITIONAL, n, gammas)
    if params.degenerate:
        # conditional law equals the auxiliary one; beta_alpha(P, P) = alpha
        return NPBetaEstimate(
            beta=1.0 - eps, log_beta=math.log1p(-eps), eta=eta, ci_rel=0.0, tilted=False
        )
    size = num_samples or n_draws
    theta = params.solve_tilt(eta)
    tilted = params.sample(rng.generator(), size, theta)
    log_w = params.cgf(theta) - theta * tilted - tilted
    log_beta, ci_rel = _weighted_tail(log_w, tilted >= eta, size)
    if ci_rel > 0.5:
        raise InsufficientSamplesError(f"tilted estimate relative CI {ci_rel:.2f} > 0.5")
    return NPBetaEstimate(
        beta=float(np.exp(log_beta)), log_beta=log_beta, eta=eta, ci_rel=ci_rel, tilted=True
    )


def _threshold_grid_lower_bound(s: np.ndarray, eps: float):
    """max over a threshold grid of exp(-l) (P[S < l] - eps), in log-domain.

    A valid lower bound on beta at every threshold; the maximum over sample
    quantiles is the tightest the draws support.  Returns None when no
    threshold leaves positive mass above eps.
    """
    qs = np.quantile(s, np.linspace(eps + 1e-6, 1.0 - 1e-6, 64))
    best = None
    for lam in np.unique(qs):
        frac = float((s < lam).mean()) - eps
        if frac <= 0:
            continue
        cand = -float(lam) + math.log(frac)
        if best is None or cand > best:
            best = cand
    return best


def ball_volume_bound(m: int, total_power: float) -> float:
    """Volume pi^(m/2) / Gamma(m/2 + 1) * (P + 1/2)^m of the ball of radius
    P + 1/2 that contains every admissible normalized energy vector."""
    if m < 1:
        raise ValueError("m must be >= 1")
    if total_power <= 0:
        raise ValueError("total power must be positive")
    return float(
        np.pi ** (m / 2.0) / special.gamma(m / 2.0 + 1.0) * (total_power + 0.5) ** m
    )


@lru_cache(maxsize=256)
def _unit_scale_log_sup(m: int, n: int) -> float:
    """sup_z log pdf for the product of m iid Gamma(n, 1) variables.

    Golden-section search on log z started at the single-factor mode
    (n - 1)^m; the bulk of the product density is unimodal.
    """
    u0 = m * math.log(max(n - 1, 1))

    def neg(u: float) -> float:
        return -product_gamma_logpdf(math.exp(u), m, n, 1.0)

    lo, hi = u0 - 2.0, u0 + 2.0
    for _ in range(60):
        if neg(lo) > neg(u0) < neg(hi):
            break
        if neg(lo) <= neg(u0):
            lo -= 2.0
        if neg(hi) <= neg(u0):
            hi += 2.0
    else:
        raise ConvergenceError("could not bracket the density mode")
    res = optimize.minimize_scalar(neg, bracket=(lo, u0, hi), method="golden", options={"xtol": 1e-10})
    if not res.success:
        raise ConvergenceError("golden-section search on the density failed")
    return -float(res.fun)


def pdf_sup_bound(m: int, n: int, g: EigenSpectrum, p: PowerAllocation) -> float:
    """K1 = sup_z q(z) / (m n) for the auxiliary-channel energy-product density.

    The m per-mode energies are Gamma(n, theta_j) with theta_j =
    (1 + g_j p_j) / (2 n); distinct scales only move the product density by
    the total scale, so the supremum is the cached unit-scale supremum
    divided by prod theta_j.
    """
    gammas = _gammas(g, p)
    if gammas.size != m:
        raise ValueError("spectrum size does not match m")
    log_theta_prod = float(np.log((1.0 + gammas) / (2.0 * n)).sum())
    log_sup = _unit_scale_log_sup(m, n) - log_theta_prod
    return float(np.exp(log_sup - math.log(m * n)))


def converse_constants(
    m: int, n: int, g: EigenSpectrum, p: PowerAllocation, total_power: float
) -> ConverseConstants:
    k1 = pdf_sup_bound(m, n, g, p)
    k2 = ball_volume_bound(m, total_power)
    return ConverseConstants(k1=k1, k2=k2, k=k1 * k2, m=m, n=n)


def _fixed_d_rate(
    n: int,
    g: EigenSpectrum,
    total_power: float,
    eps: float,
    rng: SeededRng,
    num_samples: int,
) -> ConverseResult:
    p = waterfill(g, total_power)
    m = g.m
    consts = converse_constants(m, n, g, p, total_power)
    draws = sample_converse_density(n, g, p, rng.split(0), num_samples)
    est = np_beta_converse(
        draws, eps, law=(n, _gammas(g, p)), rng=rng.split(1), num_samples=num_samples
    )
    rate = (math.log(consts.k * m * n) - est.log_beta) / n
    return ConverseResult(
        rate_nats=rate,
        rate_bits=rate / math.log(2),
        beta=est.beta,
        log_beta=est.log_beta,
        k=consts.k,
        n=n,
        eps=eps,
        d=g.d,
        ci_rate_bits=est.ci_rel / n / math.log(2),
        num_samples=num_samples,
    )


def converse_rate(
    n: int,
    g_plus: EigenSpectrum,
    g_minus: EigenSpectrum,
    total_power: float,
    eps: float,
    rng: SeededRng,
    num_samples: int = 100_000,
) -> ConverseResult:
    """Converse upper bound mixed over the equiprobable tag symbol.

    Substreams are shared between the two symbols (common random numbers),
    matching the achievability side.
    """
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    res_minus = _fixed_d_rate(n, g_minus, total_power, eps, rng, num_samples)
    res_plus = _fixed_d_rate(n, g_plus, total_power, eps, rng, num_samples)
    rate = 0.5 * (res_minus.rate_nats + res_plus.rate_nats)
    ci = 0.5 * math.hypot(res_minus.ci_rate_bits, res_plus.ci_rate_bits)
    return ConverseResult(
        rate_nats=rate,
        rate_bits=rate / math.log(2),
        beta=math.nan,
        log_beta=math.nan,
        k=math.nan,
        n=n,
        eps=eps,
        d="mixed",
        ci_rate_bits=ci,
        num_samples=num_samples,
        per_d=(res_minus, res_plus),
    )
