"""Independent reference implementations written as plain Python loops."""
import math
from fractions import Fraction


def straight_line_mean_shift(points, p, lam, iters):
    """Plain-Python transcription of the attentional mean-shift update."""
    p = list(p)
    units = []
    for z in points:
        n = math.sqrt(sum(c * c for c in z))
        units.append([c / n for c in z])
    for _ in range(iters):
        pn = math.sqrt(sum(c * c for c in p))
        cos = [sum(a * b for a, b in zip(z, p)) / pn for z in units]
        ex = [math.exp(c) for c in cos]
        tot = sum(ex)
        target = [sum(ex[i] / tot * units[i][d] for i in range(len(units))) for d in range(len(p))]
        p = [(1 - lam) * p[d] / pn + lam * target[d] for d in range(len(p))]
        n = math.sqrt(sum(c * c for c in p))
        p = [c / n for c in p]
    return p


def softmax_ce(logits, k):
    top = max(logits)
    return math.log(sum(math.exp(v - top) for v in logits)) + top - logits[k]


def brute_force_metrics(matrix):
    """Average accuracy and forgetting from a square array with NaN above the diagonal.

    Every entry is converted to an exact rational, so the only rounding is
    the final conversion back to float.
    """
    T = len(matrix)
    final = [Fraction(matrix[T - 1][j]) for j in range(T)]
    acc = sum(final, Fraction(0)) / T
    if T < 2:
        return float(acc), None
    total = Fraction(0)
    for j in range(T - 1):
        best = None
        for i in range(T - 1):
            if i >= j and (best is None or Fraction(matrix[i][j]) > best):
                best = Fraction(matrix[i][j])
        total += best - final[j]
    return float(acc), float(total / (T - 1))
