"""Random failure-model trees for property and acceptance tests."""
import numpy as np

from avmtbf.model import FailureModelTree, Leaf, MissionProfile, Refinement
from avmtbf.perception import ErrorType
from avmtbf.units import SpeedRangePartition


def _simplex(rng, n):
    w = rng.gamma(1.0, size=n)
    w = w / w.sum()
    w[-1] = 1.0 - w[:-1].sum()
    return tuple(float(x) for x in np.clip(w, 0.0, 1.0))


def random_tree(rng: np.random.Generator, max_profiles=3, max_ranges=4, with_type1=True, refine=0.0) -> FailureModelTree:
    """Tree with random sizes, rates in [0, 50)/h and situation probabilities in [0, 1).

    ``refine`` is the chance that a leaf is replaced by a refined leaf whose
    children conserve its situation probability.
    """
    n_prof = int(rng.integers(1, max_profiles + 1))
    p_m = _simplex(rng, n_prof)
    profiles = []
    for m in range(n_prof):
        n = int(rng.integers(1, max_ranges + 1))
        cuts = np.cumsum(rng.uniform(10, 40, size=n + 1)) + 20
        part = SpeedRangePartition.from_kmh(cuts.tolist())
        leaves = []
        for i in range(n):
            types = [ErrorType.TYPE_II] + ([ErrorType.TYPE_I] if with_type1 and rng.random() < 0.5 else [])
            for t in types:
                p_s = float(rng.uniform(0, 1))
                rate = float(rng.uniform(0, 50))
                hw = float(rng.uniform(0, 1)) if rng.random() < 0.3 else 0.0
                if rng.random() < refine:
                    leaves.append(Leaf(i, t, rate, None, hw, conserving_refinement(rng, p_s)))
                else:
                    leaves.append(Leaf(i, t, rate, p_s, hw))
        profiles.append(MissionProfile(f"m{m}", p_m[m], part, _simplex(rng, n), tuple(leaves)))
    return FailureModelTree(tuple(profiles))


def conserving_refinement(rng, p_s, depth=2):
    """Children (q_j, p_Sj) with sum q_j * p_Sj == p_s and sum q_j == 1."""
    k = int(rng.integers(2, 4))
    q = _simplex(rng, k)
    # share p_s across children in proportion to random weights, respecting p_Sj <= 1
    raw = rng.uniform(0.1, 1.0, size=k)
    scale = p_s / float(np.dot(q, raw))
    ps = raw * scale
    if np.any(ps > 1.0) or any(x == 0 for x in q):
        return (Refinement("all", 1.0, p_s),)
    kids = []
    for j in range(k):
        if depth > 1 and rng.random() < 0.4:
            kids.append(Refinement(f"c{j}", q[j], None, 1.0, conserving_refinement(rng, float(ps[j]), depth - 1)))
        else:
            kids.append(Refinement(f"c{j}", q[j], float(ps[j])))
    return tuple(kids)
