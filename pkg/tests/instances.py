"""Random systems and historical experiments shared by the tests."""

import numpy as np

from datauio.lti import random_system, simulate
from datauio.trajectory import build_blocks, default_length
from datauio.uio import synthesize


def draw_dims(rng, max_n=5, max_m=2, max_md=2):
    while True:
        n = int(rng.integers(1, max_n + 1))
        m = int(rng.integers(0, max_m + 1))
        md = int(rng.integers(0, max_md + 1))
        if m + md > 0:
            break
    p = int(rng.integers(1, n + 1))
    return n, m, p, md


def experiment(sys, rng, T=None, x0_scale=1.0):
    T = default_length(sys.n, sys.m, sys.m_d) if T is None else T
    return simulate(sys, x0_scale * rng.standard_normal(sys.n),
                    rng.uniform(-1, 1, (T, sys.m)), rng.uniform(-1, 1, (T, sys.m_d)), T=T)


def instance(rng, n, m, p, md, C_identity=False, T=None):
    sys = random_system(rng, n, m, p, md, C_identity=C_identity)
    hist = experiment(sys, rng, T)
    blocks = build_blocks(hist)
    return sys, hist, blocks


def existing_uios(seed, count, dims=None, **kw):
    """First ``count`` random instances for which a UIO exists."""
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        n, m, p, md = dims(rng) if dims else draw_dims(rng)
        sys, hist, blocks = instance(rng, n, m, p, md, **kw)
        real, report = synthesize(blocks)
        if report.exists:
            out.append((sys, hist, blocks, real, report))
    return out
