import pytest

from tcpfluid import SystemParams, cubic_fixed_point


@pytest.fixture(scope="session")
def unit_params():
    # O(1) scales in every quantity: the tightest tolerances apply here.
    return SystemParams(capacity=10.0, tau=1.0, b=0.2, c=0.4)


@pytest.fixture(scope="session")
def canonical_params():
    # 100 Mbit/s at 1000-byte packets, 10 ms RTT.
    return SystemParams(capacity=12500.0, tau=0.01, b=0.2, c=0.4)


@pytest.fixture(scope="session")
def gbit_params():
    # 1 Gbit/s, 1 ms RTT; the multi-flow comparison config.
    return SystemParams(capacity=125000.0, tau=0.001, b=0.2, c=0.4)


@pytest.fixture(scope="session")
def long_delay_params():
    # 1 Gbit/s, 100 ms RTT; the equilibrium here is not globally attracting.
    return SystemParams(capacity=125000.0, tau=0.1, b=0.2, c=0.4)


@pytest.fixture(scope="session")
def unit_fp(unit_params):
    return cubic_fixed_point(unit_params)


@pytest.fixture(scope="session")
def canonical_fp(canonical_params):
    return cubic_fixed_point(canonical_params)
