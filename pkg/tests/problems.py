"""Seeded random MILP instances shared by the solver tests."""
import numpy as np
import scipy.sparse as sp

from hubmpc.milp import MilpProblem


def random_milp(seed: int, n_bin: int | None = None, n_cont: int | None = None, feasible: bool = True) -> MilpProblem:
    """Bounded instance with <= 12 binaries and <= 40 continuous variables.

    A random integral point x0 is drawn first and the right-hand sides are
    placed around it, so the instance is feasible by construction.
    """
    rng = np.random.default_rng(seed)
    nb = int(rng.integers(1, 13)) if n_bin is None else n_bin
    nc = int(rng.integers(1, 41)) if n_cont is None else n_cont
    n = nb + nc
    m = int(rng.integers(2, 2 + n // 2 + 3))
    ub = np.concatenate([np.ones(nb), rng.uniform(1.0, 20.0, nc)])
    x0 = np.concatenate([rng.integers(0, 2, nb).astype(float), rng.uniform(0, 1, nc) * ub[nb:]])
    dens = min(1.0, 4.0 / n + 0.15)
    A = sp.random(m, n, density=dens, random_state=rng, data_rvs=lambda k: rng.uniform(-5, 5, k)).tocsr()
    ax = A @ x0
    kind = rng.choice(3, m, p=[0.45, 0.45, 0.1])   # 0: <=, 1: >=, 2: ==
    lo = np.where(kind == 0, -np.inf, ax - np.where(kind == 1, rng.uniform(0, 3, m), 0.0))
    hi = np.where(kind == 1, np.inf, ax + np.where(kind == 0, rng.uniform(0, 3, m), 0.0))
    c = rng.uniform(-10, 10, n)
    is_bin = np.zeros(n, dtype=bool)
    is_bin[:nb] = True
    perm = rng.permutation(n)
    p = MilpProblem(c[perm], A[:, perm].tocsr(), lo, hi, np.zeros(n), ub[perm], is_bin[perm])
    if not feasible:
        j = int(perm.tolist().index(0))
        row = sp.csr_matrix(([1.0], ([0], [j])), shape=(1, n))
        p = p.with_changes(A=sp.vstack([p.A, row, row]).tocsr(), row_lo=np.r_[p.row_lo, 1.0, -np.inf],
                           row_hi=np.r_[p.row_hi, np.inf, 0.0])
    return p
