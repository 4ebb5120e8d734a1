import numpy as np
import pytest

from rscran.channel import NetworkTopology


def make_topology(
    bs=((0.0, 0.0),),
    users=((0.5, 0.0),),
    L=2,
    p_max_w=0.1,
    fronthaul_bps=200e6,
    bandwidth=10e6,
    noise_psd=10 ** ((-169.0 - 30.0) / 10.0),
):
    bs = np.asarray(bs, dtype=float)
    users = np.asarray(users, dtype=float)
    return NetworkTopology(
        bs_positions=bs,
        user_positions=users,
        L=L,
        p_max=np.full(len(bs), p_max_w),
        fronthaul=np.full(len(bs), fronthaul_bps),
        bandwidth=bandwidth,
        noise_psd=noise_psd,
    )


@pytest.fixture
def single_link_topology():
    return make_topology()
