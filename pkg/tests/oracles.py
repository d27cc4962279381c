"""Independent reference implementations used as test oracles.

Nothing here imports from the package: each routine is a direct, slow
restatement of the definition it checks.
"""
import math

import numpy as np


def jacobi_eigh(A, tol=1e-14, max_sweeps=100):
    """Cyclic Jacobi eigen-decomposition of a symmetric matrix.

    Returns eigenvalues descending and the matching eigenvectors as columns.
    """
    A = np.array(A, dtype=np.float64)
    n = A.shape[0]
    V = np.eye(n)
    for _ in range(max_sweeps):
        off = math.sqrt(sum(A[i, j] ** 2 for i in range(n) for j in range(n) if i != j))
        if off < tol:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(A[p, q]) < 1e-300:
                    continue
                theta = (A[q, q] - A[p, p]) / (2 * A[p, q])
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1))
                c = 1 / math.sqrt(t * t + 1)
                s = t * c
                J = np.eye(n)
                J[p, p] = J[q, q] = c
                J[p, q] = s
                J[q, p] = -s
                A = J.T @ A @ J
                V = V @ J
    w = np.diag(A).copy()
    order = np.argsort(-w)
    return w[order], V[:, order]


def brute_radius(points, query, r):
    out = []
    for i, p in enumerate(points):
        d = math.dist(p, query)
        if 0 < d < r:
            out.append((i, d))
    return sorted(out, key=lambda t: (t[1], t[0]))


def brute_voxels(points, cell):
    buckets = {}
    for p in points:
        key = tuple(int(math.floor(c / cell)) for c in p)
        buckets.setdefault(key, []).append(p)
    return {k: np.mean(v, axis=0) for k, v in buckets.items()}


def brute_nearest_node(points, nodes):
    out = []
    for p in points:
        best, best_d = None, math.inf
        for j, q in enumerate(nodes):
            d = float(np.linalg.norm(np.asarray(p) - np.asarray(q)))
            if d < best_d:
                best, best_d = j, d
        out.append(best)
    return out


def sort_top_k(C, K):
    cells = [(-C[i, j], i, j) for i in range(C.shape[0]) for j in range(C.shape[1])]
    cells.sort()
    return [(i, j) for _, i, j in cells[:K]]


def rank_mutual_top_k(S, k):
    m, n = S.shape
    row_rank = {}
    for i in range(m):
        ranked = sorted(range(n), key=lambda j: (-S[i, j], j))
        for r, j in enumerate(ranked):
            row_rank[i, j] = r
    col_rank = {}
    for j in range(n):
        ranked = sorted(range(m), key=lambda i: (-S[i, j], i))
        for r, i in enumerate(ranked):
            col_rank[i, j] = r
    return sorted((i, j) for i in range(m) for j in range(n) if row_rank[i, j] < k and col_rank[i, j] < k)


def axis_angle_deg(R):
    """Rotation angle from the skew part and trace jointly (atan2 form)."""
    s = 0.5 * np.linalg.norm([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    c = 0.5 * (np.trace(R) - 1.0)
    return math.degrees(math.atan2(s, c))


def sinkhorn_2x2_fixed_point():
    """Closed form: all-ones 2x2 kernel with unit marginals is uniform 1/2."""
    return np.full((2, 2), 0.5)
