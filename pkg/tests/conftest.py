from __future__ import annotations

import pytest

from tierplace import Layer, Placement, mini_bundle


@pytest.fixture
def mini():
    return mini_bundle()


@pytest.fixture
def mini_spec(mini):
    return mini.service_spec()


@pytest.fixture
def p1():
    return Placement(
        layer_of=(Layer.GATEWAY,),
        agg_node="dc1",
        sink_dc="dc1",
        predeploy=frozenset({"gw1", "gw2"}),
        alloc=1,
    )


@pytest.fixture
def p2():
    return Placement(layer_of=(Layer.CLOUD,), agg_node="dc1", sink_dc="dc1", alloc=1)


@pytest.fixture
def p3():
    return Placement(layer_of=(Layer.GATEWAY,), agg_node="dc1", sink_dc="dc1", alloc=1)
