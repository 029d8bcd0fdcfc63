"""Cramér, Wasserstein and related divergences on finite distributions, with
exact expected-sample-gradient oracles for studying gradient bias."""

from .distributions import (
    DiscreteDist,
    ParametricFamily,
    PointCloud,
    bernoulli,
    bernoulli_dist,
    cdf,
    dirac,
    empirical,
    make_rng,
    quantile,
    sample,
    softmax_categorical,
    three_point_toy,
)
from .divergences import (
    Divergence,
    cramer,
    energy,
    energy_alpha,
    energy_via_dual,
    energy_witness,
    kl,
    lp,
    lp_pp,
    wasserstein,
    wasserstein_pp,
)
from .gradients import (
    EnumerationBudgetError,
    GradReport,
    InfiniteLossError,
    LossSpec,
    expected_sample_grad,
    finite_diff,
    grad_sample,
    grad_true,
)

__version__ = "0.1.0"

__all__ = [
    "DiscreteDist", "ParametricFamily", "PointCloud", "bernoulli", "bernoulli_dist", "cdf",
    "dirac", "empirical", "make_rng", "quantile", "sample", "softmax_categorical",
    "three_point_toy", "Divergence", "cramer", "energy", "energy_alpha", "energy_via_dual",
    "energy_witness", "kl", "lp", "lp_pp", "wasserstein", "wasserstein_pp",
    "EnumerationBudgetError", "GradReport", "InfiniteLossError", "LossSpec",
    "expected_sample_grad", "finite_diff", "grad_sample", "grad_true",
]
