import numpy as np
import pytest

from kitinet import _backend


@pytest.fixture(params=_backend.available())
def backend(request):
    prev = _backend.use(request.param)
    yield request.param
    _backend.use(prev)


@pytest.fixture
def python_backend():
    prev = _backend.use("python")
    yield
    _backend.use(prev)


def brute_force_collide(x, v, directions, coll_coef, dt, update_positions):
    """Loop-by-loop evaluation of the collision step, independent of the library."""
    N, nd = directions.shape[0], directions.shape[2]
    X = [list(map(float, x[i * nd:(i + 1) * nd])) for i in range(N)]
    V = [list(map(float, v[i * nd:(i + 1) * nd])) for i in range(N)]

    def dist(a, b):
        return sum((p - q) ** 2 for p, q in zip(a, b)) ** 0.5

    vmax = max([dist(V[i], V[j]) for i in range(N) for j in range(N)] + [0.0])
    acc = [[False] * N for _ in range(N)]
    for i in range(N):
        for j in range(i + 1, N):
            if vmax > 0 and dist(V[i], V[j]) * np.exp(-dist(X[i], X[j])) / vmax > 1 - coll_coef:
                acc[i][j] = acc[j][i] = True
    xs, vs = [], []
    for i in range(N):
        k = sum(acc[i])
        vn = list(V[i])
        xsum = list(X[i])
        for j in range(N):
            if not acc[i][j]:
                continue
            vr = dist(V[i], V[j])
            for d in range(nd):
                vn[d] += (V[i][d] + V[j][d]) / 2 + 0.5 * vr * directions[i, j, d] - V[i][d]
                xsum[d] += (X[i][d] + X[j][d]) / 2
        xstar = [s / (1 + k) for s in xsum] if update_positions else X[i]
        xs += [xstar[d] + dt * vn[d] for d in range(nd)]
        vs += vn
    return np.array(xs), np.array(vs), np.array(acc)
