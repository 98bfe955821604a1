"""Shared generators for the seeded test batteries.

Kept out of the package on purpose: these build instances with known-good
parameters for the certificate machinery, they are not part of the API.
"""

import random
from fractions import Fraction
from itertools import combinations
from math import ceil, comb

from sforge.domains import Domain
from sforge.family import GroundSet, SetFamily
from sforge.spread import check_spread


def binom_family(n: int, k: int) -> SetFamily:
    masks = []
    for combo in combinations(range(n), k):
        m = 0
        for c in combo:
            m |= 1 << c
        masks.append(m)
    return SetFamily(GroundSet(n), tuple(masks))


def block_product_family(blocks) -> SetFamily:
    """One element per block; spread parameter = smallest block size."""
    n = max(max(b) for b in blocks)
    out = [0]
    for b in blocks:
        out = [m | (1 << (e - 1)) for m in out for e in b]
    return SetFamily.from_sets(n, [sorted_elements(m) for m in out])


def sorted_elements(mask: int):
    out = []
    i = 1
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return out


def seeded_spread_instance(seed: int):
    """A deterministic (family, R, X) with F exactly R-spread and |X| < R."""
    rng = random.Random(9000 + seed)
    kind = rng.randrange(3)
    if kind == 0:
        k = rng.choice([2, 3])
        n = rng.randrange(max(3 * k, 6), 15)
        F = binom_family(n, k)
        R = Fraction(n, k)
    elif kind == 1:
        w = rng.choice([2, 3])
        bs = rng.randrange(2, 5)
        elems = list(range(1, w * bs + 1))
        rng.shuffle(elems)
        blocks = [elems[i * bs : (i + 1) * bs] for i in range(w)]
        F = block_product_family(blocks)
        R = Fraction(bs)
    else:
        k = rng.choice([2, 3])
        n = rng.randrange(3 * k, 15)
        R = Fraction(n, 2 * k)
        pool = list(combinations(range(1, n + 1), k))
        m = max(2, (3 * len(pool)) // 4)
        F = None
        for _ in range(50):
            cand = SetFamily.from_sets(n, rng.sample(pool, m))
            if check_spread(cand, R).ok:
                F = cand
                break
        if F is None:
            F = binom_family(n, k)
            R = Fraction(n, k)
    n = F.ground.n
    xmax = min(int(ceil(R)) - 1, 3, n)
    xsize = rng.randrange(1, xmax + 1) if xmax >= 1 else 0
    X = 0
    for e in rng.sample(range(n), xsize):
        X |= 1 << e
    return F, R, X


def no_small_transversal(F: SetFamily, c: int) -> bool:
    """True when no c-subset of the support hits every member (so tau > c)."""
    if c < 0:
        return True
    members = F.members
    support = sorted_elements(F.support())
    if c >= len(members):
        return False  # one element per member is a transversal already
    for combo in combinations(support, c):
        T = 0
        for e in combo:
            T |= 1 << (e - 1)
        if all(m & T for m in members):
            return False
    return True


def planted_instance(seed: int):
    """A seeded covering instance (A, F, planted_cores, s, t, w).

    F is a thinned union of full stars inside a binomial domain.  With
    t = 2 the star cores form a triangle on three points, so any two
    members share a triangle point and no 3-sunflower has a core smaller
    than 2.  With t = 1 there are two star centers and any three members
    repeat one of them, so there is no 3-matching.  Every star keeps at
    least one member, and n is chosen large enough that the densest core
    clears the chain threshold r/2 by double counting, whatever the
    thinning did.
    """
    rng = random.Random(7700 + seed)
    s = 3
    t = 1 + seed % 2
    k = rng.choice([2, 3, 4])
    lo = {2: 8, 3: 12, 4: 16}[k] if t == 1 else {2: 7, 3: 11, 4: 14}[k]
    n = rng.randrange(lo, 17)
    pts = rng.sample(range(1, n + 1), 2 if t == 1 else 3)
    if t == 1:
        cores = [1 << (p - 1) for p in pts]
    else:
        a, b, c = pts
        bit = lambda e: 1 << (e - 1)
        cores = [bit(a) | bit(b), bit(a) | bit(c), bit(b) | bit(c)]
    A = Domain.binomial(n, k)
    chosen = set()
    for S in cores:
        star = [m for m in A.family.members if m & S == S]
        keep = [m for m in star if rng.random() < 0.85]
        if len(keep) > 55:
            keep = rng.sample(keep, 55)
        if not keep:
            keep = [star[0]]
        chosen.update(keep)
    F = A.family.replace_members(chosen)
    w = rng.choice([Fraction(2 * t + 1, 2)] * 3 + [Fraction(k)])
    return A, F, cores, s, t, w


def simplify_fixtures():
    """Five instances of at most ten sets whose layer traces can be worked
    by hand; oracle_simplify_trace re-executes them independently."""
    mk = SetFamily.from_sets
    return [
        (
            Domain.binomial(8, 3),
            mk(8, [[1, 2]] + [[1, 2, x] for x in range(3, 9)]),
            3,
            2,
        ),
        (Domain.binomial(8, 2), mk(8, [[1, 2], [3, 4], [1, 3]]), 3, 2),
        (
            Domain.binomial(8, 4),
            mk(8, [[1, 2], [1, 2, 3], [4, 5, 6], [2, 3, 4, 5]]),
            3,
            2,
        ),
        (Domain.binomial(8, 2), mk(8, [[1, x] for x in range(2, 7)]), 2, 1),
        (
            Domain.binomial(8, 4),
            mk(8, [[1, 2], [1, 2, 3], [1, 2, 4], [1, 2, 3, 4]]),
            2,
            2,
        ),
    ]


def oracle_simplify_trace(F: SetFamily, s: int, t: int):
    """Literal re-run of the layer loop with independently bracketed scales.

    The scale max(s*q, 2^14 s log2 t) is sandwiched between the integers
    max(s*q, 2^14 s) and max(s*q, 2^14 s t) for t >= 2 (and is exactly s*q
    for t = 1); both ends must agree on every compare, otherwise the
    fixture sits too close to the threshold to be hand-checkable.
    """
    q = max(m.bit_count() for m in F.members)
    if t == 1:
        a_lo = a_hi = s * q
    else:
        a_lo = max(s * q, 2 ** 14 * s)
        a_hi = max(s * q, 2 ** 14 * s * t)

    def qualifies(c, j, total):
        lo = c * a_lo ** j > total
        hi = c * a_hi ** j > total
        assert lo == hi, "fixture sits on the extraction threshold"
        return lo

    cur = set(F.members)
    trace = []
    stages = [frozenset(cur)]
    layers = []
    for i in range(q - t):
        size = q - i
        W = {m for m in cur if m.bit_count() == size}
        carry = {m for m in cur if m.bit_count() < size}
        cores = set()
        while W:
            counts = {}
            for m in W:
                sub = m
                while True:
                    counts[sub] = counts.get(sub, 0) + 1
                    if sub == 0:
                        break
                    sub = (sub - 1) & m
            good = [
                x
                for x, c in counts.items()
                if x and qualifies(c, x.bit_count(), len(W))
            ]
            if not good:
                break
            best = min(good, key=lambda x: (-x.bit_count(), x))
            if best.bit_count() == size:
                break
            trace.append((i, best))
            cores.add(best)
            W = {m for m in W if m & best != best}
        layers.append(frozenset(W))
        cur = cores | carry
        stages.append(frozenset(cur))
    return trace, stages, layers


def mc_instance(i: int):
    """Singleton families with an integer R*delta above the vacuity line.

    At 64 ground bits, links of k-uniform families force R <= n/k, so only
    1-uniform families reach R*delta > 32; these are the nonvacuous desk
    instances.
    """
    n = 44 + i
    c = 33 + i
    F = binom_family(n, 1)
    return F, Fraction(n), Fraction(c, n)
