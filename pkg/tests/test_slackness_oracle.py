"""The brute-force slackness oracle must stand on its own hand-checked values.

These pin the oracle before it is used to cross-check the LP path, so a
bug cannot hide in both routes at once.
"""
import pytest

from slackness_oracle import arrival_means, net_rate_matrix, slackness_by_enumeration


def _two_queue_singletons() -> dict:
    # mu=(0.6,0.6), lambda=(0.2,0.2), serve one queue at a time.
    return {
        "kind": "multi",
        "n": 2,
        "k": 2,
        "lambda": {
            "support": [[0, 0], [0, 1], [1, 0], [1, 1]],
            "probs": [0.64, 0.16, 0.16, 0.04],
        },
        "mu": [0.6, 0.6],
        "schedules": [[1, 0], [0, 1], [0, 0]],
        "server_queue": [0, 1],
    }


def _tandem_two() -> dict:
    # Server 0 feeds queue 1; lambda0=0.5, mu=(0.8,0.6).
    return {
        "kind": "network",
        "n": 2,
        "k": 2,
        "lambda": {"support": [[1, 0], [0, 0]], "probs": [0.5, 0.5]},
        "mu": [0.8, 0.6],
        "schedules": [[1, 1], [0, 0], [0, 1], [1, 0]],
        "server_queue": [0, 1],
        "transitions": [[0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    }


def _single_embedding(lam: float, mu: list) -> dict:
    k = len(mu)
    return {
        "kind": "multi",
        "n": 1,
        "k": k,
        "lambda": {"support": [[1], [0]], "probs": [lam, 1 - lam]},
        "mu": mu,
        "schedules": [[1 if i == j else 0 for i in range(k)] for j in range(k)]
        + [[0] * k],
        "server_queue": [0] * k,
    }


def test_arrival_means_vector():
    lam = arrival_means(_two_queue_singletons())
    assert lam == pytest.approx([0.2, 0.2], abs=1e-12)


def test_net_rates_deduct_inflow():
    g = net_rate_matrix(_tandem_two())
    # Schedule (1,1): queue 0 gets 0.8; queue 1 gets 0.6 - 0.8.
    assert g[0, 0] == pytest.approx(0.8)
    assert g[1, 0] == pytest.approx(-0.2)


def test_two_queue_hand_value():
    assert slackness_by_enumeration(_two_queue_singletons()) == pytest.approx(
        0.1, abs=1e-9
    )


def test_tandem_hand_value():
    # By hand: time-share (1,1) and (0,1); the sum constraint gives
    # 0.6(phi_11 + phi_01) >= 0.5 + 2 eps, so eps* = 0.05.
    assert slackness_by_enumeration(_tandem_two()) == pytest.approx(0.05, abs=1e-9)


def test_figure1_embedding():
    doc = _single_embedding(0.45, [0.045, 0.35, 0.35, 0.35, 0.55])
    assert slackness_by_enumeration(doc) == pytest.approx(0.10, abs=1e-9)


def test_overloaded_is_negative():
    doc = _single_embedding(0.5, [0.4, 0.4])
    assert slackness_by_enumeration(doc) == pytest.approx(-0.1, abs=1e-9)


def test_zero_arrivals_maximize_margin():
    doc = _two_queue_singletons()
    doc["lambda"] = {"support": [[0, 0]], "probs": [1.0]}
    assert slackness_by_enumeration(doc) == pytest.approx(0.3, abs=1e-9)
