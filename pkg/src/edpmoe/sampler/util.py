"""Small numerical helpers for the sampler."""
import math

__all__ = ['sample_log', 'logsumexp']


def logsumexp(lw):
    m = max(lw)
    if m == -math.inf:
        return -math.inf
    return m + math.log(sum(math.exp(v - m) for v in lw))


def sample_log(lw, u):
    """Index drawn with probability proportional to exp(lw), given a uniform ``u``."""
    m = max(lw)
    w = [math.exp(v - m) for v in lw]
    t = u * sum(w)
    acc = 0.0
    for i, wi in enumerate(w):
        acc += wi
        if t < acc:
            return i
    # u * sum(w) can round up to the total
    for i in range(len(w) - 1, -1, -1):
        if w[i] > 0:
            return i
    return len(w) - 1
