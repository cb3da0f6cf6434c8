import math

import numpy as np
import pytest

from gextremile.distortions import DistortionSpec, DistributionSpec
from gextremile.errors import DomainError, ParseError
from gextremile.losses import parse_loss
from gextremile.montecarlo import (
    StudyConfig,
    censoring_for_proportion,
    density_of_scaled_errors,
    generate_censored,
    parse_study_text,
    run_study,
)

EXPO = DistributionSpec.exponential()
NORMAL = DistributionSpec.normal()
UNIFORM = DistortionSpec.uniform()


def test_no_censoring_observes_everything():
    s = generate_censored(EXPO, None, 50, 0)
    assert s.events.all()


@pytest.mark.parametrize("p", [0.1, 0.5])
def test_censored_fraction(p):
    n = 100_000
    s = generate_censored(EXPO, censoring_for_proportion(p), n, 12)
    frac = 1 - s.events.mean()
    assert abs(frac - p) < 3 * math.sqrt(p * (1 - p) / n)


def test_point_mass_study_is_exact():
    cfg = StudyConfig(DistributionSpec.point_mass(2.5), UNIFORM, parse_loss("quantile:0.3"), n=20, reps=10)
    rep = run_study(cfg)
    assert rep.t0 == 2.5
    assert rep.bias == rep.variance == rep.mse == 0.0


def test_reports_are_deterministic():
    cfg = StudyConfig(NORMAL, DistortionSpec.extremile(0.8), parse_loss("expectile:0.7"), n=60, reps=25, seed=4)
    a, b = run_study(cfg), run_study(cfg)
    assert a.estimates.tobytes() == b.estimates.tobytes()
    assert (a.t0, a.bias, a.variance, a.mse, a.failures) == (b.t0, b.bias, b.variance, b.mse, b.failures)


def test_mse_decomposition():
    cfg = StudyConfig(EXPO, DistortionSpec.extremile(0.9), parse_loss("square"), n=40, reps=50, seed=3, estimator="LM")
    rep = run_study(cfg)
    assert rep.mse == pytest.approx(rep.bias**2 + rep.variance, rel=1e-12)


def test_failed_replications_are_counted():
    # n / (n + 1) = 0.75 leaves every weight at zero
    cfg = StudyConfig(EXPO, DistortionSpec.expected_shortfall(0.75), parse_loss("square"), n=3, reps=5, estimator="M")
    rep = run_study(cfg)
    assert rep.failures == 5 and rep.completed == 0
    assert math.isnan(rep.mse)


def test_target_failure_stops_before_replicating():
    cfg = StudyConfig(EXPO, UNIFORM, parse_loss("expectile:0.5"), n=10, reps=5, estimator="km")
    with pytest.raises(DomainError):
        run_study(cfg)


def test_density_mode_of_symmetric_study():
    cfg = StudyConfig(NORMAL, UNIFORM, parse_loss("square"), n=100, reps=500, seed=1, estimator="M")
    grid = np.linspace(-4, 4, 401)
    dens = density_of_scaled_errors(run_study(cfg), grid)
    assert abs(grid[np.argmax(dens[:, 1])]) < 0.5


def test_density_spike_for_equal_errors():
    cfg = StudyConfig(DistributionSpec.point_mass(1.0), UNIFORM, parse_loss("square"), n=5, reps=40, estimator="M")
    grid = np.linspace(-1, 1, 21)
    dens = density_of_scaled_errors(run_study(cfg), grid)
    assert grid[np.argmax(dens[:, 1])] == 0.0
    assert np.count_nonzero(dens[:, 1]) == 1


def test_sampling_spread_grows_with_tau():
    loss = parse_loss("expectile:0.9")
    low = run_study(StudyConfig(NORMAL, DistortionSpec.extremile(0.1), loss, n=800, reps=500, seed=1))
    high = run_study(StudyConfig(NORMAL, DistortionSpec.extremile(0.95), loss, n=800, reps=500, seed=1))
    assert np.std(high.scaled_errors) / np.std(low.scaled_errors) > 2


def test_study_file_expansion():
    cells = parse_study_text(
        "dist = normal:0:1 | expo:1\ndistortion = extremile:0.1|extremile:0.9|extremile:0.95\n"
        "loss = expectile:0.9\nn = 800\nreps = 500  # per cell\nseed = 1\n"
    )
    assert len(cells) == 6
    assert {c.n for c in cells} == {800}


def test_censored_study_cells_take_censor_from_proportion():
    cells = parse_study_text("dist=expo:1\ndistortion=uniform\nloss=cens-quantile:0.5\nn=100\np_c=0.1|0.5\nestimator=grid|km")
    assert len(cells) == 4
    assert cells[0].loss.censor == DistributionSpec.exponential(0.1 / 0.9)


@pytest.mark.parametrize(
    "text",
    ["dist=expo:1\nloss=square\nn=10", "dist=expo:1\ndistortion=uniform\nloss=square\nn=10\nbogus=1", "no equals sign"],
)
def test_study_file_errors(text):
    with pytest.raises(ParseError):
        parse_study_text(text)
