import numpy as np
import pytest
from pydantic import ValidationError
from scipy import stats

from app.models.schemas import DistributionSpec, SampleSpec
from app.services.sampling import derive_seed, matrix_rng, sample, sample_one, stable_draws


def test_same_seed_is_bit_identical():
    spec = SampleSpec(rows=8, cols=6, seed=42, batch=3)
    first, second = sample(spec), sample(spec)
    for a, b in zip(first, second):
        assert np.array_equal(a, b)


def test_matrices_independent_of_call_order():
    spec = SampleSpec(rows=5, cols=5, distribution="stable", alpha=1.5, seed=9, batch=4)
    batch = sample(spec)
    assert np.array_equal(sample_one(spec, 2), batch[2])
    assert not np.array_equal(batch[0], batch[1])


def test_batch_of_shape():
    batch = sample(SampleSpec(rows=4, cols=7, batch=5))
    assert len(batch) == 5
    assert all(x.shape == (4, 7) and x.dtype == np.float64 for x in batch)


def test_normal_entries_pass_ks():
    x = sample_one(SampleSpec(rows=100, cols=100, seed=3), 0)
    assert stats.kstest(x.ravel(), "norm").pvalue > 0.001


def test_alpha_two_is_gaussian_with_variance_two():
    x = sample_one(SampleSpec(rows=100, cols=100, distribution="stable", alpha=2.0, seed=5), 0)
    assert stats.kstest(x.ravel(), "norm", args=(0.0, np.sqrt(2.0))).pvalue > 0.001


def test_alpha_one_is_cauchy():
    x = sample_one(SampleSpec(rows=100, cols=100, distribution="stable", alpha=1.0, seed=5), 0)
    assert stats.kstest(x.ravel(), "cauchy").pvalue > 0.001


def test_stable_matches_scipy_levy_stable():
    draws = stable_draws(matrix_rng(11, 0), 1.5, 0.0, 2000)
    assert stats.kstest(draws, stats.levy_stable(1.5, 0.0).cdf).pvalue > 0.001


def test_skewed_draws_are_finite():
    draws = stable_draws(matrix_rng(2, 0), 1.3, 0.7, 5000)
    assert np.all(np.isfinite(draws))


def test_heavier_tails_for_smaller_alpha():
    spec = dict(rows=200, cols=200, distribution="stable", seed=1)
    light = sample_one(SampleSpec(alpha=1.9, **spec), 0)
    heavy = sample_one(SampleSpec(alpha=1.0, **spec), 0)
    assert np.max(np.abs(heavy)) > np.max(np.abs(light))


@pytest.mark.parametrize("fields", [
    dict(rows=0, cols=3),
    dict(rows=3, cols=3, distribution="stable", alpha=0.0),
    dict(rows=3, cols=3, distribution="stable", alpha=2.5),
    dict(rows=3, cols=3, beta=1.5),
    dict(rows=3, cols=3, seed=-1),
])
def test_invalid_specs(fields):
    with pytest.raises(ValidationError):
        SampleSpec(**fields)


def test_distribution_parse():
    assert DistributionSpec.parse("normal").alpha_or_none is None
    spec = DistributionSpec.parse("stable:1.5")
    assert (spec.distribution, spec.alpha, spec.beta) == ("stable", 1.5, 0.0)
    assert DistributionSpec.parse("stable:1.2:0.5").beta == 0.5
    with pytest.raises(ValueError):
        DistributionSpec.parse("uniform")


def test_derive_seed_is_stable_and_keyed():
    assert derive_seed(0, 256, 0) == derive_seed(0, 256, 0)
    assert derive_seed(0, 256, 0) != derive_seed(0, 512, 0)
    assert 0 <= derive_seed(7, 1) < 2**64


def test_normal_moments_at_size_512():
    x = sample_one(SampleSpec(rows=512, cols=512, seed=7), 0)
    assert abs(x.mean()) < 4 / 512
    assert x.var() == pytest.approx(1.0, rel=0.02)


def test_cauchy_median_of_absolute_values():
    x = sample_one(SampleSpec(rows=512, cols=512, distribution="stable", alpha=1.0, seed=7), 0)
    assert np.median(np.abs(x)) == pytest.approx(1.0, rel=0.05)


@pytest.mark.parametrize("alpha", [1.2, 1.7])
def test_symmetric_stable_draws_match_their_mirror_image(alpha):
    draws = stable_draws(matrix_rng(21, 0), alpha, 0.0, 100_000)
    flipped = -stable_draws(matrix_rng(22, 0), alpha, 0.0, 100_000)
    assert stats.ks_2samp(draws, flipped).pvalue > 0.001
