import numpy as np
import pytest

from remdecay.events import EventSequence, RiskSet


@pytest.fixture
def rng():
    return np.random.default_rng(20260810)


@pytest.fixture
def tiny_seq():
    # 6 events, 3 actors, hand-written times
    times = [1.0, 2.5, 3.0, 4.75, 6.0, 7.5]
    senders = [0, 1, 0, 2, 1, 0]
    receivers = [1, 0, 2, 1, 2, 1]
    return EventSequence(times, senders, receivers, 3)


@pytest.fixture
def tiny_rs(tiny_seq):
    return RiskSet(tiny_seq.n_actors)
