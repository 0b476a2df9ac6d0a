"""Loop-based retrieval metrics on unpacked +-1 codes, used as a test oracle.

Averages use correctly rounded sums, the same convention as the library,
so results are comparable with ``==``.
"""
import math
from fractions import Fraction


def naive_evaluate(q, q_labels, db, db_labels, ks):
    r, nq = q.shape
    ndb = db.shape[1]
    aps, prec, rec = [], {k: [] for k in ks}, {k: [] for k in ks}
    retrieved = [0] * (r + 1)
    rel_retrieved = [0] * (r + 1)
    rel_total = 0
    for i in range(nq):
        dist = [sum(1 for j in range(r) if q[j, i] != db[j, n]) for n in range(ndb)]
        rel = [db_labels[n] == q_labels[i] for n in range(ndb)]
        n_rel = sum(rel)
        if n_rel == 0:
            continue
        order = sorted(range(ndb), key=lambda n: (dist[n], n))
        hits, terms = 0, []
        for pos, n in enumerate(order, 1):
            if rel[n]:
                hits += 1
                terms.append(hits / pos)
        aps.append(math.fsum(terms) / len(terms))
        for k in ks:
            kk = min(k, ndb)
            top = sum(rel[n] for n in order[:kk])
            prec[k].append(top / kk)
            rec[k].append(top / n_rel)
        for rad in range(r + 1):
            inside = [n for n in range(ndb) if dist[n] <= rad]
            retrieved[rad] += len(inside)
            rel_retrieved[rad] += sum(rel[n] for n in inside)
        rel_total += n_rel
    nv = len(aps)
    return {
        "map": math.fsum(aps) / nv,
        "precision_at_k": [(k, math.fsum(prec[k]) / nv) for k in ks],
        "recall_at_k": [(k, math.fsum(rec[k]) / nv) for k in ks],
        "pr_points": [(rad, float(Fraction(rel_retrieved[rad], rel_total)),
                       float(Fraction(rel_retrieved[rad], retrieved[rad])) if retrieved[rad] else None)
                      for rad in range(r + 1)],
    }
