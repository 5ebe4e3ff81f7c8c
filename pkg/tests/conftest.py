import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from umdobench import ProblemConfig, ScalableProblem, UncertaintyModel


@pytest.fixture
def small_config():
    """Two disciplines, one shared and two local variables each, three
    coupling outputs each: the smallest configuration exercising all of the
    block structure."""
    return ProblemConfig(
        n_disciplines=2,
        d_shared=1,
        d_local=(2, 2),
        p_coupling=(3, 3),
        seed=42,
    )


def make_toy_problem(a=(1.0,), d_shared=((1.0,),), d_local=((1.0,),), t=0.0):
    """Single-discipline problem with hand-chosen 1x1 blocks: y = a - ds*x0 - dl*x1."""
    config = ProblemConfig(
        n_disciplines=1,
        d_shared=1,
        d_local=(1,),
        p_coupling=(len(a),),
        seed=0,
    )
    return ScalableProblem(
        config=config,
        a=np.asarray(a, dtype=float),
        D_shared=(np.asarray(d_shared, dtype=float),),
        D_local=(np.asarray(d_local, dtype=float),),
        C_blocks={},
        t=t,
    )
