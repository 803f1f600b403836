# Copyright 2026 The pooltrace Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#      http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Writes reference optima for the M2 estimators, solved with a generic
conic solver. Output: tests/data/convex_oracle.json.

Run from the repository root:  python3 tests/oracle/gen_convex_oracle.py
"""

import json
import pathlib

import cvxpy as cp
import numpy as np

OUT = pathlib.Path(__file__).resolve().parents[1] / "data" / "convex_oracle.json"


def solve(objective, constraints):
    prob = cp.Problem(cp.Minimize(objective), constraints)
    for tol in (1e-10, 1e-9, 1e-8):
        prob.solve(solver=cp.CLARABEL, tol_gap_abs=tol, tol_gap_rel=tol, tol_feas=tol, max_iter=500)
        if prob.status == cp.OPTIMAL:
            return prob.value
    raise RuntimeError(f"solver status {prob.status}")


def lasso(A, y, rho):
    x = cp.Variable(A.shape[1], nonneg=True)
    val = solve(cp.sum_squares(y - A @ x) + rho * cp.norm1(x), [])
    return val, x.value


def sqrt_glasso(A, y, groups, rho):
    x = cp.Variable(A.shape[1], nonneg=True)
    pen = sum(cp.norm(x[g], 2) for g in groups)
    val = solve(cp.norm(y - A @ x, 2) + rho * pen, [])
    return val, x.value


def sqrt_oglasso(A, y, groups, rho):
    n = A.shape[1]
    vs = [cp.Variable(len(g)) for g in groups]
    x = 0
    for g, v in zip(groups, vs):
        e = np.zeros((n, len(g)))
        e[g, np.arange(len(g))] = 1.0
        x = x + e @ v
    val = solve(cp.norm(y - A @ x, 2) + rho * sum(cp.norm(v, 2) for v in vs), [x >= 0])
    return val, x.value


def random_partition(rng, n):
    perm = rng.permutation(n)
    groups, i = [], 0
    while i < n:
        s = int(rng.integers(1, 6))
        groups.append(sorted(int(j) for j in perm[i:i + s]))
        i += s
    return groups


def random_cover(rng, n):
    # Consecutive blocks where neighbours share one index half the time.
    groups, start = [], 0
    while start < n:
        s = int(rng.integers(2, 6))
        g = list(range(start, min(n, start + s)))
        groups.append(g)
        nxt = start + s
        if nxt < n and rng.random() < 0.5:
            nxt -= 1
        start = nxt
    return groups


def random_instance(rng, idx):
    n = int(rng.integers(8, 41))
    m = int(rng.integers(max(4, n // 3), n + 1))
    A = rng.standard_normal((m, n))
    A /= np.linalg.norm(A, axis=0)
    x = np.zeros(n)
    k = max(1, n // 8)
    supp = rng.choice(n, size=k, replace=False)
    x[supp] = rng.uniform(0.5, 2.0, size=k)
    y = A @ x + 0.05 * rng.standard_normal(m)
    y /= np.linalg.norm(y)
    rho_lasso = float(rng.uniform(0.02, 0.2))
    rho_sqrt = float(rng.uniform(0.05, 0.3))
    disjoint = random_partition(rng, n)
    cover = random_cover(rng, n)
    singles = [[j] for j in range(n)]
    f_lasso, x_lasso = lasso(A, y, rho_lasso)
    f_sl, x_sl = sqrt_glasso(A, y, singles, rho_sqrt)
    f_gl, x_gl = sqrt_glasso(A, y, disjoint, rho_sqrt)
    f_og, x_og = sqrt_oglasso(A, y, cover, rho_sqrt)
    return {
        "name": f"random_{idx:02d}",
        "m": m, "n": n, "A": A.tolist(), "y": y.tolist(),
        "rho_lasso": rho_lasso, "rho_sqrt": rho_sqrt,
        "groups_disjoint": disjoint, "groups_overlap": cover,
        "lasso": {"objective": f_lasso, "x": x_lasso.tolist()},
        "sqrt_lasso": {"objective": f_sl, "x": x_sl.tolist()},
        "sqrt_glasso": {"objective": f_gl, "x": x_gl.tolist()},
        "sqrt_oglasso": {"objective": f_og, "x": x_og.tolist()},
    }


# Affine plane of order 3: 12 triples on 9 points, pairwise sharing <= 1 point.
AG23 = [[0, 1, 2], [3, 4, 5], [6, 7, 8], [0, 3, 6], [1, 4, 7], [2, 5, 8],
        [0, 4, 8], [1, 5, 6], [2, 3, 7], [0, 5, 7], [1, 3, 8], [2, 4, 6]]


def named_instances(rng):
    out = []
    # 2-sparse support recovery with a Gaussian design.
    A = rng.standard_normal((12, 20))
    A /= np.linalg.norm(A, axis=0)
    x = np.zeros(20)
    x[[3, 11]] = [1.0, 0.7]
    y = A @ x
    rho = 1e-3
    f, xs = lasso(A, y, rho)
    out.append({"name": "lasso_support_20x12", "m": 12, "n": 20, "A": A.tolist(), "y": y.tolist(),
                "rho_lasso": rho, "support": [3, 11], "lasso": {"objective": f, "x": xs.tolist()}})
    # Three households of four behind triple pools; household 1 fully infected.
    A = np.zeros((9, 12))
    for c, rows in enumerate(AG23):
        A[rows, c] = 1.0
    fam = [[0, 1, 2, 3], [4, 5, 6, 7], [8, 9, 10, 11]]
    x = np.zeros(12)
    x[fam[1]] = [1.0, 0.6, 0.8, 0.5]
    y = A @ x
    y /= np.linalg.norm(y)
    rho = 0.05
    f, xs = sqrt_glasso(A, y, fam, rho)
    out.append({"name": "families_3x4", "m": 9, "n": 12, "A": A.tolist(), "y": y.tolist(), "rho_sqrt": rho,
                "groups_disjoint": fam, "active_group": 1, "sqrt_glasso": {"objective": f, "x": xs.tolist()}})
    # Two groups sharing node 3; signal on the first group only.
    A = rng.standard_normal((5, 6))
    A /= np.linalg.norm(A, axis=0)
    groups = [[0, 1, 2, 3], [3, 4, 5]]
    x = np.array([0.9, 0.5, 0.7, 0.4, 0.0, 0.0])
    y = A @ x
    y /= np.linalg.norm(y)
    rho = 0.05
    f, xs = sqrt_oglasso(A, y, groups, rho)
    out.append({"name": "overlap_pair_6", "m": 5, "n": 6, "A": A.tolist(), "y": y.tolist(), "rho_sqrt": rho,
                "groups_overlap": groups, "active_group": 0, "sqrt_oglasso": {"objective": f, "x": xs.tolist()}})
    return out


def main():
    rng = np.random.default_rng(20260101)
    data = {"random": [random_instance(rng, i) for i in range(50)], "named": named_instances(rng)}
    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text(json.dumps(data, indent=1))
    print(f"wrote {OUT}")


if __name__ == "__main__":
    main()
