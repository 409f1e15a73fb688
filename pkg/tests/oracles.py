"""Brute-force reference computations, written independently of the package."""

import math


def ap_oracle(ranked, query):
    hits = 0
    precisions = []
    for pos, ent in enumerate(ranked, start=1):
        if ent == query:
            hits += 1
            precisions.append(hits / pos)
    if not precisions:
        return None
    return sum(precisions) / len(precisions)


def first_match_oracle(ranked, query):
    for pos, ent in enumerate(ranked, start=1):
        if ent == query:
            return pos
    return None


def cmc_oracle(rankings, queries, ks):
    out = {}
    for k in ks:
        hit = 0
        for ranked, q in zip(rankings, queries):
            if any(e == q for e in list(ranked)[:k]):
                hit += 1
        out[k] = hit / len(rankings)
    return out


def cosine_oracle(a, b):
    dot = sum(float(x) * float(y) for x, y in zip(a, b))
    na = math.sqrt(sum(float(x) ** 2 for x in a))
    nb = math.sqrt(sum(float(y) ** 2 for y in b))
    return 1.0 - dot / (na * nb)


def sqeuclid_oracle(a, b):
    return sum((float(x) - float(y)) ** 2 for x, y in zip(a, b))


def spearman(xs, ys):
    def ranks(v):
        order = sorted(range(len(v)), key=lambda i: v[i])
        r = [0.0] * len(v)
        i = 0
        while i < len(order):
            j = i
            while j + 1 < len(order) and v[order[j + 1]] == v[order[i]]:
                j += 1
            for m in range(i, j + 1):
                r[order[m]] = (i + j) / 2 + 1
            i = j + 1
        return r

    rx, ry = ranks(xs), ranks(ys)
    mx, my = sum(rx) / len(rx), sum(ry) / len(ry)
    cov = sum((a - mx) * (b - my) for a, b in zip(rx, ry))
    vx = math.sqrt(sum((a - mx) ** 2 for a in rx))
    vy = math.sqrt(sum((b - my) ** 2 for b in ry))
    return cov / (vx * vy)
