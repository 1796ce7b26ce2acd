import numpy as np

from rlfusion import distributions as D


def test_gaussian_log_prob_frozen_value():
    head = D.DiagGaussianHead(mean=np.array([0.0, 1.0]), log_std=np.array([0.0, 0.5]))
    lp = D.diag_gaussian_log_prob(head, np.array([0.5, 0.5]))
    # sum of two independent normal log-densities, computed by hand
    expected = (
        -0.5 * 0.5**2 - 0.0 - 0.5 * np.log(2 * np.pi)
        + -0.5 * (0.5 / np.exp(0.5)) ** 2 - 0.5 - 0.5 * np.log(2 * np.pi)
    )
    assert np.isclose(lp, expected, atol=1e-12)


def test_gaussian_density_integrates_to_one():
    head = D.DiagGaussianHead(mean=np.array([0.3]), log_std=np.array([-0.2]))
    xs = np.linspace(-10, 10, 20001)
    dens = np.exp([D.diag_gaussian_log_prob(head, np.array([x])) for x in xs])
    assert abs(np.trapezoid(dens, xs) - 1.0) < 1e-3


def test_categorical_probs_sum_to_one():
    logits = np.array([0.5, -1.0, 2.0, 0.0])
    probs = np.exp([D.categorical_log_prob(logits, i) for i in range(4)])
    assert abs(probs.sum() - 1.0) < 1e-3


def test_categorical_log_prob_frozen_value():
    logits = np.array([0.0, 1.0])
    # softmax(0,1)[1] = e / (1 + e)
    assert np.isclose(
        D.categorical_log_prob(logits, 1), np.log(np.e / (1 + np.e)), atol=1e-12
    )


def test_gaussian_entropy_formula():
    head = D.DiagGaussianHead(mean=np.zeros(3), log_std=np.array([0.1, -0.3, 0.7]))
    expected = np.sum(np.array([0.1, -0.3, 0.7]) + 0.5 * (np.log(2 * np.pi) + 1))
    assert np.isclose(D.diag_gaussian_entropy(head), expected, atol=1e-12)


def test_categorical_entropy_uniform_is_log_n():
    assert np.isclose(D.categorical_entropy(np.zeros(5)), np.log(5), atol=1e-12)


def test_sampling_is_pure_function_of_seed():
    logits = np.array([0.2, 0.8, -0.5])
    a = [D.categorical_sample(logits, np.random.default_rng(42)) for _ in range(10)]
    b = [D.categorical_sample(logits, np.random.default_rng(42)) for _ in range(10)]
    assert a == b
    head = D.DiagGaussianHead(mean=np.zeros(2), log_std=np.zeros(2))
    x = D.diag_gaussian_sample(head, np.random.default_rng(7))
    y = D.diag_gaussian_sample(head, np.random.default_rng(7))
    assert np.array_equal(x, y)


def test_categorical_sample_batch_matches_frequencies():
    logits = np.tile(np.array([0.0, 1.0]), (20000, 1))
    rng = np.random.default_rng(0)
    draws = D.categorical_sample_batch(logits, rng)
    p1 = np.e / (1 + np.e)
    assert abs(draws.mean() - p1) < 0.01
