"""Smoke test for the pysopool extension module.

Build and install first:  pip install --no-build-isolation -e crates/python
"""
import math
import os
import tempfile

import pysopool


def close(a, b, tol=1e-12):
    return abs(a - b) <= tol


def main():
    # Single feature e1 on a 1x1 map, no spatial codes: Average pooling gives J11.
    cfg = pysopool.PoolConfig(kind="average", alpha=0.0)
    psi = pysopool.pool([[1.0], [0.0]], (1, 1), cfg)
    dim = cfg.pooled_dim(2)
    assert len(psi) == dim and psi[0][0] == 1.0
    assert sum(abs(v) for row in psi for v in row) == 1.0

    sig = pysopool.pool([[1.0], [0.0]], (1, 1), pysopool.PoolConfig(kind="sigme", alpha=0.0))
    assert close(sig[0][0], 2.0 / (1.0 + math.exp(-20.0)) - 1.0)

    # Gradient of <W, Psi> on a 2x2 map.
    feats = [[0.2, 0.5, 0.1, 0.9], [0.4, 0.3, 0.8, 0.6], [0.7, 0.1, 0.2, 0.3]]
    cfg = pysopool.PoolConfig(kind="sigme-trace", beta=0.5, z=3)
    dim = cfg.pooled_dim(3)
    w = [[1.0 if i == j else 0.1 for j in range(dim)] for i in range(dim)]
    psi, grad = pysopool.pool_with_grad(feats, (2, 2), w, cfg)
    assert len(psi) == dim and len(grad) == 3 and len(grad[0]) == 4
    assert all(abs(psi[i][j] - psi[j][i]) == 0.0 for i in range(dim) for j in range(dim))

    h = 1e-6
    def loss(f):
        p = pysopool.pool(f, (2, 2), cfg)
        return sum(w[i][j] * p[i][j] for i in range(dim) for j in range(dim))
    bumped_up = [row[:] for row in feats]
    bumped_dn = [row[:] for row in feats]
    bumped_up[1][2] += h
    bumped_dn[1][2] -= h
    fd = (loss(bumped_up) - loss(bumped_dn)) / (2 * h)
    assert abs(fd - grad[1][2]) <= 1e-5 * max(abs(fd), 1e-3), (fd, grad[1][2])

    # Spectral paths agree; eigendecomposition is descending.
    m = [[2.0, 0.5, 0.1], [0.5, 1.0, 0.2], [0.1, 0.2, 0.5]]
    for kind in ["gamma", "maxexp", "asinhe", "sigme"]:
        a = pysopool.spectral_normalize(m, kind, "eigen")
        b = pysopool.spectral_normalize(m, kind, "closed-form")
        assert max(abs(x - y) for ra, rb in zip(a, b) for x, y in zip(ra, rb)) < 1e-10, kind
    values, _ = pysopool.sym_eig([[2.0, 1.0], [1.0, 2.0]])
    assert close(values[0], 3.0) and close(values[1], 1.0)

    # Probabilistic identities.
    assert close(pysopool.binom_at_least_one(2, 0.5), 0.75)
    assert close(pysopool.multinom_at_least_one(3, 0.2, 0.3, 0.1), 0.488)
    assert pysopool.simulate_cooc(4, 1.0, 0.0, 0.0, 1000) == 1.0

    # Tensor files round-trip.
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "t.sop")
        pysopool.write_tensor(path, [2, 3], [1.0, 2.0, 3.0, 4.0, 5.0, 6.5], "f32")
        dims, values = pysopool.read_tensor(path)
        assert dims == [2, 3] and values == [1.0, 2.0, 3.0, 4.0, 5.0, 6.5]

    # Errors surface as Python exceptions.
    try:
        pysopool.PoolConfig(kind="gamma", beta=0.5)
    except ValueError:
        pass
    else:
        raise AssertionError("gamma with beta > 0 must be rejected")
    try:
        pysopool.normalize([[-0.5, 0.0], [0.0, 1.0]], pysopool.PoolConfig(kind="maxexp"))
    except ArithmeticError:
        pass
    else:
        raise AssertionError("maxexp on negative entries must fail")

    reports = pysopool.verify("probmodel")
    assert len(reports) == 2 and all('"passed":true' in r for r in reports)
    print("pysopool smoke test passed")


if __name__ == "__main__":
    main()
