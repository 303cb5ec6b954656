import numpy as np
import pytest

from app.core.errors import NonFiniteError, PreconditionError, ScheduleError
from app.models.schemas import CoefficientSchedule, SampleSpec
from app.services.linalg_core import gram
from app.services.newton_schulz import bjorck_orthogonalize, bjorck_step, ns_step, orthogonalize
from app.services.sampling import sample
from app.services.schedules import (builtin_schedule, extend_schedule, fit_schedule, load_schedule,
                                    parse_schedule, resolve_schedule, scalar_polynomial, schedule_for,
                                    spectral_recursion, truncate_schedule)

POLISH = (1.875, -1.25, 0.375)


# ---------------------------------------------------------------- schedules

def test_builtin_tables():
    muon = builtin_schedule("muon")
    assert muon.triples == ((3.4445, -4.7750, 2.0315),)
    muon_plus = builtin_schedule("muon_plus")
    assert len(muon_plus) == 5
    assert muon_plus.triples[0] == (4.0848, -6.8946, 2.9270)
    assert muon_plus.source.endswith("muon_plus.txt")


def test_builtin_schedule_only_accepts_shipped_names():
    for name in ("nope", "../muon", "../../etc/passwd", "muon.txt", ""):
        with pytest.raises(ScheduleError) as info:
            builtin_schedule(name)
        assert "line" not in str(info.value)


def test_parse_schedule_reports_line():
    with pytest.raises(ScheduleError) as info:
        parse_schedule("# header\n1 2 3\n1 2\n", name="bad")
    assert info.value.line == 3
    with pytest.raises(ScheduleError):
        parse_schedule("# nothing here\n", name="empty")
    with pytest.raises(ScheduleError):
        parse_schedule("1 2 nan\n", name="nan")


def test_load_schedule_from_file(tmp_path):
    path = tmp_path / "custom.txt"
    path.write_text("# two steps\n3 -3 1\n1.5 -0.5 0  # cubic\n")
    schedule = load_schedule(path)
    assert schedule.name == "custom"
    assert schedule.triples == ((3.0, -3.0, 1.0), (1.5, -0.5, 0.0))
    with pytest.raises(ScheduleError):
        load_schedule(tmp_path / "missing.txt")


def test_resolve_schedule_rules():
    muon = builtin_schedule("muon")
    assert resolve_schedule(muon, 3) == [muon.triples[0]] * 3
    muon_plus = builtin_schedule("muon_plus")
    assert resolve_schedule(muon_plus, 4) == list(muon_plus.triples[1:])
    with pytest.raises(ScheduleError):
        resolve_schedule(muon_plus, 6)
    with pytest.raises(ScheduleError):
        resolve_schedule(muon_plus, 0)


def test_truncate_and_extend():
    muon_plus = builtin_schedule("muon_plus")
    last_two = truncate_schedule(muon_plus, 2)
    assert last_two.triples == muon_plus.triples[-2:]
    assert last_two.name == "muon_plus[-2:]"
    with pytest.raises(ScheduleError):
        truncate_schedule(muon_plus, 6)
    extended = extend_schedule(muon_plus, 7)
    assert len(extended) == 7
    assert extended.triples[5:] == (POLISH, POLISH)
    assert extend_schedule(muon_plus, 3) is muon_plus


def test_fit_schedule_truncates_before_it_would_polish():
    muon_plus = builtin_schedule("muon_plus")
    assert fit_schedule(muon_plus, 3, extend=True).triples == muon_plus.triples[-3:]
    assert fit_schedule(muon_plus, 8, extend=True).triples[-3:] == (POLISH,) * 3
    assert schedule_for("turbo", 4).triples == muon_plus.triples[1:]


def test_polish_triple_fixes_one():
    a, b, c = POLISH
    assert scalar_polynomial(1.0, a, b, c) == pytest.approx(1.0)
    assert a + 3 * b + 5 * c == pytest.approx(0.0)


def test_spectral_recursion_maps_into_unit_neighbourhood():
    sigmas = np.linspace(1e-3, 1.0, 200)
    out = spectral_recursion(sigmas, builtin_schedule("muon_plus").triples)
    assert np.all(out > 0)
    assert np.max(np.abs(out[sigmas > 0.05] - 1.0)) < 0.35


# ---------------------------------------------------------------- steps

def test_ns_step_on_orthogonal_with_polish_triple(random_orthogonal):
    q = random_orthogonal(10)
    out, used = ns_step(q, None, *POLISH)
    assert used == 3
    np.testing.assert_allclose(out, q, atol=1e-12)


def test_ns_step_reuses_supplied_gram(rng):
    x = rng.standard_normal((8, 8)) / 10
    out_fresh, used_fresh = ns_step(x, None, 3.0, -3.0, 1.0)
    out_reused, used_reused = ns_step(x, gram(x), 3.0, -3.0, 1.0)
    assert (used_fresh, used_reused) == (3, 2)
    np.testing.assert_allclose(out_fresh, out_reused)


def test_ns_step_overflow_names_step():
    x = np.full((4, 4), 1e150)
    with pytest.raises(NonFiniteError) as info:
        ns_step(x, None, 3.0, -3.0, 1.0, iteration=1)
    assert info.value.step == 4
    assert info.value.iteration == 1


def test_bjorck_step(random_orthogonal, rng):
    q = random_orthogonal(9)
    np.testing.assert_allclose(bjorck_step(q, 0.5), q, atol=1e-12)
    with pytest.raises(ValueError):
        bjorck_step(q, 0.7)
    x = rng.standard_normal((12, 12))
    x /= np.linalg.norm(x)
    sigma_in = np.linalg.svd(x, compute_uv=False)
    sigma_out = np.linalg.svd(bjorck_step(x, 0.5), compute_uv=False)
    np.testing.assert_allclose(np.sort(sigma_out), np.sort(1.5 * sigma_in - 0.5 * sigma_in ** 3), atol=1e-12)


def test_bjorck_orthogonalize_converges(rng):
    report = bjorck_orthogonalize(rng.standard_normal((20, 20)), iterations=40, preconditioner="aol",
                                  precision="double")
    errors = [s.ortho_error for s in report.per_iteration]
    assert errors[-1] < errors[0]
    assert report.matmul_count == 40 * 2
    assert report.pipeline == "bjorck"


# ---------------------------------------------------------------- pipelines

def test_matmul_cost_model(rng):
    x = rng.standard_normal((32, 32))
    turbo = orthogonalize(x, "turbo", iterations=4)
    muon_plus = orthogonalize(x, "muon_plus", iterations=5)
    assert turbo.matmul_count == 12
    assert muon_plus.matmul_count == 15
    assert turbo.matmul_count / muon_plus.matmul_count == 0.8
    assert [s.matmuls for s in turbo.per_iteration] == [3, 3, 3, 3]


def test_turbo_without_gram_reuse_costs_one_more(rng):
    x = rng.standard_normal((16, 16))
    fresh = orthogonalize(x, "turbo", iterations=4, reuse_gram=False)
    reused = orthogonalize(x, "turbo", iterations=4, precision="double")
    assert fresh.matmul_count == 13
    np.testing.assert_allclose(orthogonalize(x, "turbo", iterations=4, reuse_gram=False,
                                             precision="double").result, reused.result, atol=1e-10)


def test_frobenius_pipeline_follows_spectral_recursion(matrix_with_spectrum):
    sigmas = np.array([3.0, 2.0, 1.0, 0.5, 0.1])
    x, u, v = matrix_with_spectrum(sigmas, m=8)
    report = orthogonalize(x, "muon_plus", iterations=5, precision="double")
    expected_sigma = spectral_recursion(sigmas / np.linalg.norm(sigmas), report.triples)
    np.testing.assert_allclose(report.result, (u * expected_sigma[None, :]) @ v.T, atol=1e-10)


def test_muon_plus_and_turbo_apply_identical_triples(rng):
    x = rng.standard_normal((24, 24))
    schedule = schedule_for("muon_plus", 4)
    a = orthogonalize(x, "muon_plus", schedule, iterations=4)
    b = orthogonalize(x, "turbo", iterations=4)
    assert a.triples == b.triples
    assert (a.preconditioner, b.preconditioner) == ("frobenius", "aol")


def test_constant_schedule_repeats(rng):
    report = orthogonalize(rng.standard_normal((10, 10)), "muon", iterations=3)
    assert report.triples == [(3.4445, -4.7750, 2.0315)] * 3
    assert report.schedule_name == "muon"


def test_precision_follows_request(rng):
    x = rng.standard_normal((10, 10))
    assert orthogonalize(x, "turbo", iterations=2, precision="single").result.dtype == np.float32
    report = orthogonalize(x, "turbo", iterations=2, precision="double")
    assert report.result.dtype == np.float64
    assert report.precision == "double"


def test_wide_input_is_transposed_internally(rng):
    x = rng.standard_normal((6, 20))
    report = orthogonalize(x, "turbo", iterations=5, precision="double")
    assert report.transposed
    assert report.result.shape == (6, 20)
    sigma = np.linalg.svd(report.result, compute_uv=False)
    assert np.all((sigma > 0.5) & (sigma < 1.5))


def test_per_iteration_errors_shrink(rng):
    report = orthogonalize(rng.standard_normal((64, 64)), "turbo", iterations=4, precision="double")
    errors = [s.ortho_error for s in report.per_iteration]
    assert len(errors) == 4
    assert errors[-1] < errors[0]
    assert all(s.elapsed >= 0 for s in report.per_iteration)
    assert report.wall_time >= 0


def batch_ortho_errors(pipeline, size, batch=32):
    """Per-iteration ortho_error averaged over a batch of normal matrices"""
    errors = [[s.ortho_error for s in orthogonalize(x, pipeline, iterations=4 if pipeline == "turbo" else 5,
                                                  precision="double").per_iteration]
              for x in sample(SampleSpec(rows=size, cols=size, seed=size, batch=batch))]
    return np.mean(errors, axis=0)


@pytest.mark.parametrize("pipeline", ["muon_plus", "turbo"])
@pytest.mark.parametrize("size", [64, 256])
def test_default_schedules_end_on_their_smallest_error(pipeline, size):
    # early steps of the shipped table may overshoot, so only the endpoint is pinned
    errors = batch_ortho_errors(pipeline, size)
    assert errors[-1] == errors.min()
    assert errors[-1] < errors[-2]
    assert errors[-1] < 0.5 * errors[0]


def test_track_errors_off(rng):
    report = orthogonalize(rng.standard_normal((8, 8)), "muon", iterations=2, track_errors=False)
    assert all(s.ortho_error is None for s in report.per_iteration)


def test_pipeline_errors(rng):
    with pytest.raises(ValueError):
        orthogonalize(rng.standard_normal((4, 4)), "adam")
    with pytest.raises(ScheduleError):
        orthogonalize(rng.standard_normal((4, 4)), "muon_plus", iterations=6)
    with pytest.raises(PreconditionError):
        orthogonalize(np.zeros((4, 4)), "turbo", iterations=2)
    with pytest.raises(NonFiniteError):
        orthogonalize(np.array([[np.inf, 1.0], [0.0, 1.0]]), "muon")


def test_custom_schedule(rng):
    schedule = CoefficientSchedule(name="cubic", triples=((1.5, -0.5, 0.0),))
    report = orthogonalize(rng.standard_normal((6, 6)), "muon_plus", schedule, iterations=2)
    assert report.schedule_name == "cubic"
    assert report.triples == [(1.5, -0.5, 0.0)] * 2


def test_ns_step_scalar_polynomial():
    out, used = ns_step(np.array([[0.5]]), None, 3.0, -3.0, 1.0)
    assert out[0, 0] == pytest.approx(1.15625)
    assert used == 3


def test_ns_step_maps_singular_values(matrix_with_spectrum):
    sigmas = np.array([0.9, 0.6, 0.3, 0.1])
    x, u, v = matrix_with_spectrum(sigmas, m=6)
    out, _ = ns_step(x.astype(np.float32), None, 3.4445, -4.7750, 2.0315)
    expected = (u * scalar_polynomial(sigmas, 3.4445, -4.7750, 2.0315)[None, :]) @ v.T
    np.testing.assert_allclose(out, expected, atol=1e-5)


def test_bjorck_scalar_and_convergence():
    out = bjorck_step(np.array([[0.6]]), 0.5)
    assert out[0, 0] == pytest.approx(1.5 * 0.6 - 0.5 * 0.6 ** 3)
    x = np.diag([0.9, 0.5])
    for _ in range(30):
        x = bjorck_step(x, 0.3)
    assert np.linalg.norm(x.T @ x - np.eye(2)) < 1e-6


def test_turbo_on_diagonal_lands_on_identity():
    schedule = CoefficientSchedule(name="polish", triples=(POLISH,))
    report = orthogonalize(np.diag([2.0, 0.5]), "turbo", schedule, iterations=2, precision="double")
    np.testing.assert_allclose(report.result, np.eye(2), atol=1e-14)
