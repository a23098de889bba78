import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from scipy.special import expit

from proxbellman.bidclick_env import (
    Dataset,
    State,
    analytic_q,
    behavior_action,
    behavior_action_marginal,
    click_prob,
    count_monotonicity_errors,
    dataset_hash,
    evaluation_grid,
    expected_reward,
    file_sha256,
    generate_dataset,
    ground_truth_monotonicity,
    load_dataset,
    optimal_value,
    save_dataset,
    snap_bid,
    step,
    stream_rng,
    subsample_dataset,
)
from proxbellman.constraint_ops import BID_FRACTIONS
from proxbellman.errors import DomainError


@pytest.mark.parametrize("x, bid, expected", [
    (0.0, 0.0, 0.5),
    (1.0, 1.0, 0.9241418199787566),
    (0.5, 0.25, 0.6791786991753930),
])
def test_click_prob_spot_values(x, bid, expected):
    assert click_prob(State(x, 0.3), bid) == pytest.approx(expected, abs=1e-12)


def test_click_prob_increases_with_bid():
    states = evaluation_grid()
    probs = click_prob(states[:, None, :], BID_FRACTIONS[None, :])
    assert np.all(np.diff(probs, axis=1) > 0)


def test_state_ranges_are_enforced():
    with pytest.raises(DomainError):
        State(1.5, 0.3)
    with pytest.raises(DomainError):
        State(0.5, 0.1)


def test_zero_bid_pays_nothing(rng):
    s = State(0.6, 0.35)
    rewards = {step(s, 0.0, rng)[0] for _ in range(200)}
    assert rewards <= {0.0, 1.0}


def test_reward_support(rng):
    s = State(0.2, 0.25)
    rewards = {step(s, 0.75, rng)[0] for _ in range(200)}
    assert rewards <= {-0.25 * 0.75, 1.0 - 0.25 * 0.75}


def test_step_rejects_bids_outside_unit_interval(rng):
    with pytest.raises(DomainError):
        step(State(0.5, 0.3), 1.2, rng)


def sampled_step_rewards(s: State, bid: float, n: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return np.array([step(s, bid, rng)[0] for _ in range(n)])


@pytest.mark.parametrize("x, c, bid", [(0.1, 0.2, 1.0), (0.9, 0.4, 0.5)])
def test_step_reward_mean(x, c, bid):
    n = 20_000
    s = State(x, c)
    p = click_prob(s, bid)
    mean = float(np.mean(sampled_step_rewards(s, bid, n, seed=42)))
    assert abs(mean - expected_reward(s, bid)) <= 4 * np.sqrt(p * (1 - p) / n)


@pytest.mark.slow
@pytest.mark.parametrize("x, c, bid", [(0.1, 0.2, 1.0), (0.9, 0.4, 0.5)])
def test_step_reward_mean_at_full_precision(x, c, bid):
    n = 1_000_000
    s = State(x, c)
    p = click_prob(s, bid)
    mean = float(np.mean(sampled_step_rewards(s, bid, n, seed=42)))
    assert abs(mean - expected_reward(s, bid)) <= 3 * np.sqrt(p * (1 - p) / n)


def test_step_draws_fresh_states():
    rng = np.random.default_rng(7)
    s = State(0.5, 0.3)
    nexts = [step(s, 0.5, rng)[1] for _ in range(5_000)]
    x = np.array([t.x for t in nexts])
    c = np.array([t.c for t in nexts])
    assert np.all((x >= 0.0) & (x <= 1.0)) and np.all((c >= 0.2) & (c <= 0.4))
    assert abs(np.mean(x) - 0.5) <= 4 * np.sqrt(1 / 12 / len(x))
    assert abs(np.mean(c) - 0.3) <= 4 * np.sqrt(0.2 ** 2 / 12 / len(c))


@pytest.mark.parametrize("g, index", [(0.4, 2), (-1.3, 0), (0.125, 1), (2.0, 4), (0.874, 3)])
def test_snap_bid(g, index):
    assert int(snap_bid(g)) == index


def test_behavior_marginal_matches_normal_cdf():
    marginal = behavior_action_marginal()
    assert marginal[0] == pytest.approx(0.2459, abs=1e-4)
    assert marginal.sum() == pytest.approx(1.0)
    rng = np.random.default_rng(0)
    n = 20_000
    counts = np.bincount([behavior_action(rng) for _ in range(n)], minlength=5) / n
    stderr = np.sqrt(marginal * (1 - marginal) / n)
    assert np.all(np.abs(counts - marginal) <= 4 * stderr + 1e-12)


@pytest.mark.slow
def test_behavior_marginal_at_full_precision():
    marginal = behavior_action_marginal()
    rng = np.random.default_rng(0)
    n = 1_000_000
    counts = np.bincount([behavior_action(rng) for _ in range(n)], minlength=5) / n
    stderr = np.sqrt(marginal * (1 - marginal) / n)
    assert np.all(np.abs(counts - marginal) <= 3 * stderr)


def test_dataset_is_deterministic_by_seed():
    a, b = generate_dataset(500, seed=9), generate_dataset(500, seed=9)
    assert dataset_hash(a) == dataset_hash(b)
    assert dataset_hash(a) != dataset_hash(generate_dataset(500, seed=10))


def test_dataset_state_means():
    data = generate_dataset(20_000, seed=1)
    n = len(data)
    assert abs(np.mean(data.x) - 0.5) <= 3 * np.sqrt(1 / 12 / n)
    assert abs(np.mean(data.c) - 0.3) <= 3 * np.sqrt(0.2 ** 2 / 12 / n)
    assert set(np.unique(data.a)) <= set(range(5))


def test_dataset_rewards_follow_the_logged_bid():
    data = generate_dataset(1000, seed=2)
    payment = data.c * BID_FRACTIONS[data.a]
    assert np.all(np.isclose(data.r, -payment) | np.isclose(data.r, 1.0 - payment))


def test_dataset_rows_are_transitions():
    data = generate_dataset(10, seed=0)
    t = data[3]
    assert t.s == State(data.x[3], data.c[3])
    assert t.bid == BID_FRACTIONS[data.a[3]]
    assert len(data.transitions) == 10
    assert data.states().shape == data.next_states().shape == (10, 2)


def test_dataset_validation():
    with pytest.raises(DomainError):
        generate_dataset(0)
    with pytest.raises(DomainError):
        Dataset(x=np.zeros(2), c=np.zeros(2), a=np.array([0, 7]), r=np.zeros(2),
                x_next=np.zeros(2), c_next=np.zeros(2), seed=0)


def test_save_and_load_preserve_hash(tmp_path):
    data = generate_dataset(300, seed=4)
    path = save_dataset(data, tmp_path / "data.jsonl")
    loaded = load_dataset(path)
    assert dataset_hash(loaded) == dataset_hash(data)
    assert loaded.seed == 4
    lines = path.read_text().splitlines()
    assert len(lines) == 301
    again = save_dataset(loaded, tmp_path / "again.jsonl")
    assert file_sha256(again) == file_sha256(path)


def test_subsample_sizes_and_nesting():
    data = generate_dataset(1000, seed=0)
    quarter = subsample_dataset(data, 0.25, seed=5)
    sixteenth = subsample_dataset(data, 0.0625, seed=5)
    assert len(quarter) == 250 and len(sixteenth) == 62
    assert subsample_dataset(data, 1.0, seed=5) is data
    full_rows = set(zip(data.x, data.a))
    quarter_rows = set(zip(quarter.x, quarter.a))
    assert set(zip(sixteenth.x, sixteenth.a)) <= quarter_rows <= full_rows
    with pytest.raises(DomainError):
        subsample_dataset(data, 0.0)


def test_subsample_of_a_full_size_dataset():
    data = generate_dataset(100_000, seed=0)
    fractions = [0.5, 0.25, 0.125, 0.0625]
    subsets = [subsample_dataset(data, f, seed=1) for f in fractions]
    assert [len(s) for s in subsets] == [50_000, 25_000, 12_500, 6_250]
    rows = [set(zip(s.x, s.c)) for s in subsets]
    assert len(rows[1]) == 25_000
    for larger, smaller in zip(rows, rows[1:]):
        assert smaller <= larger
    assert rows[0] <= set(zip(data.x, data.c))


def test_stream_rng_streams_differ():
    a = stream_rng(0, 7).random(4)
    assert_array_equal(a, stream_rng(0, 7).random(4))
    assert not np.allclose(a, stream_rng(0, 8).random(4))


def test_optimal_value_examples():
    assert optimal_value(State(0.0, 0.4)) == pytest.approx(expit(1.0) - 0.2, abs=1e-12)
    q = analytic_q(np.array([0.0, 0.2]))[0]
    assert int(np.argmax(q)) == 4
    assert optimal_value(State(0.0, 0.2)) == pytest.approx(expit(2.0) - 0.2, abs=1e-12)


def test_optimal_value_lower_bound_and_continuous_check():
    states = evaluation_grid(20, 10)
    values = optimal_value(states)
    assert np.all(values >= 0.5)
    fine = np.linspace(0.0, 1.0, 10_001)
    continuous = np.max(expected_reward(states[:, None, :], fine[None, :]), axis=1)
    assert np.all(values <= continuous + 1e-12)


def test_evaluation_grid_layout():
    grid = evaluation_grid(50, 20)
    assert grid.shape == (1000, 2)
    assert_allclose(grid[:20, 0], 0.0)
    assert_allclose(grid[:20, 1], np.linspace(0.2, 0.4, 20))


def test_count_monotonicity_errors():
    states = evaluation_grid(10, 10)
    assert count_monotonicity_errors(lambda s: np.tile(np.arange(5.0), (len(s), 1)), states) == 0
    assert count_monotonicity_errors(lambda s: np.ones((len(s), 5)), states) == 0
    one_inversion = lambda s: np.tile([0.0, 2.0, 1.0, 3.0, 4.0], (len(s), 1))
    assert count_monotonicity_errors(one_inversion, states) == 100
    with pytest.raises(DomainError):
        count_monotonicity_errors(one_inversion, states, tol=0.0)


def test_ground_truth_report():
    report = ground_truth_monotonicity()
    assert report["states"] == 1000 and report["pairs"] == 4000
    assert sum(report["argmax_histogram"]) == 1000
    assert 0 <= report["monotonicity_errors"] <= report["pairs"]
    direct = count_monotonicity_errors(analytic_q, evaluation_grid(), 1e-6)
    assert report["monotonicity_errors"] == direct
